//! Seeded Monte Carlo sweeps over the number of measurements `N`.
//!
//! Every trial plants one random point `P` on the recovered variety, draws an
//! ensemble of `N` measurements, and runs up to three tests:
//!
//! * `local_rank`: the measurement Jacobian on the tangent space at `P` is
//!   injective;
//! * `ae_recovery`: no second preimage of `L_A(P)` is found;
//! * `everywhere`: no kernel element of `L_A` is found on the difference set.
//!
//! Seeds: trial `(N, t)` uses `mix(mix(base_seed, N), t)`, and its children
//! 0..=4 seed the ensemble, the plant, and the three tests in that order.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::{generate, EnsembleKind, EnsembleSpec};
use crate::error::{Error, Result};
use crate::identifiability::{fiber_dim_estimate, measurement_jacobian, sample_smooth_point};
use crate::io::SCHEMA_VERSION;
use crate::model::FieldTag;
use crate::recovery::{counterexample_search, distinct_solution_search, SolveConfig, SolveStatus};
use crate::rng::{mix, SeedStream};
use crate::variety::{delta_saturates, delta_spec, variety_dim, VarietySpec};

/// `detail` value of a row whose trial raised an error.
pub const ERROR_DETAIL: f64 = -1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    LocalRank,
    AeRecovery,
    Everywhere,
}

impl TestKind {
    pub const ALL: [TestKind; 3] = [TestKind::LocalRank, TestKind::AeRecovery, TestKind::Everywhere];

    pub fn name(self) -> &'static str {
        match self {
            TestKind::LocalRank => "local_rank",
            TestKind::AeRecovery => "ae_recovery",
            TestKind::Everywhere => "everywhere",
        }
    }
}

impl fmt::Display for TestKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TestKind {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        TestKind::ALL
            .into_iter()
            .find(|t| t.name() == text)
            .ok_or_else(|| Error::Parse { text: text.into(), reason: "unknown test".into() })
    }
}

/// A recovered variety paired with a measurement ensemble kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Scenario {
    pub recovered: VarietySpec,
    pub ensemble_kind: EnsembleKind,
}

impl Scenario {
    pub fn new(recovered: VarietySpec, ensemble_kind: EnsembleKind) -> Result<Self> {
        let s = Scenario { recovered, ensemble_kind };
        s.ensemble_spec(0, 0)?;
        Ok(s)
    }

    pub fn ensemble_spec(&self, n: usize, seed: u64) -> Result<EnsembleSpec> {
        self.recovered.validate()?;
        EnsembleSpec::new(self.ensemble_kind, n, self.recovered.shape(), self.recovered.field, seed)
    }

    pub fn counting_field(&self) -> FieldTag {
        self.recovered.counting_field()
    }

    /// `dim M + 1`: above this many measurements almost every point is recovered.
    pub fn theoretical_ae_threshold(&self) -> Result<usize> {
        Ok(variety_dim(&self.recovered)? + 1)
    }

    /// `dim ΔM`, when the difference set is a supported variety.
    pub fn theoretical_everywhere_threshold(&self) -> Option<usize> {
        delta_spec(&self.recovered).and_then(|d| variety_dim(&d)).ok()
    }

    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if delta_saturates(&self.recovered) {
            out.push(format!(
                "delta saturates ambient: 2r exceeds the rank cap of `{}`; everywhere results are exploratory",
                self.recovered
            ));
        }
        out
    }

    /// Theoretical transition of each test: `dim M` for local rank (the
    /// Jacobian becomes injective), `dim M + 1` and `dim ΔM` for the others.
    pub fn threshold(&self, test: TestKind) -> Option<usize> {
        match test {
            TestKind::LocalRank => variety_dim(&self.recovered).ok(),
            TestKind::AeRecovery => self.theoretical_ae_threshold().ok(),
            TestKind::Everywhere => self.theoretical_everywhere_threshold(),
        }
    }
}

/// Sweep configuration as read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub schema: u32,
    pub recovered: VarietySpec,
    pub ensemble: EnsembleKind,
    /// Inclusive `[low, high]`.
    pub n_range: [usize; 2],
    pub trials: usize,
    pub base_seed: u64,
    pub tests: Vec<TestKind>,
    #[serde(default)]
    pub solver: SolveConfig,
    /// Worker threads; `None` uses all cores. Never affects results.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

impl SweepConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: SweepConfig = serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA_VERSION {
            return Err(Error::InvalidConfig(format!("unsupported schema {}", self.schema)));
        }
        if self.n_range[0] > self.n_range[1] {
            return Err(Error::InvalidConfig("empty N range".into()));
        }
        if self.trials == 0 {
            return Err(Error::InvalidConfig("trials must be at least 1".into()));
        }
        if self.tests.is_empty() {
            return Err(Error::InvalidConfig("no tests selected".into()));
        }
        let mut seen = self.tests.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.tests.len() {
            return Err(Error::InvalidConfig("duplicate test".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::InvalidConfig("workers must be at least 1".into()));
        }
        self.solver.validate()?;
        self.scenario().map(|_| ())
    }

    pub fn scenario(&self) -> Result<Scenario> {
        Scenario::new(self.recovered, self.ensemble)
    }

    pub fn n_values(&self) -> impl Iterator<Item = usize> {
        self.n_range[0]..=self.n_range[1]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: usize,
    pub test: TestKind,
    pub trial: usize,
    pub seed: u64,
    pub success: bool,
    /// `local_rank`: fiber dimension. `ae_recovery`: relative distance of
    /// the distinct preimage found, 0 if none. `everywhere`: best `‖L_A(W)‖`
    /// at unit `W`. [`ERROR_DETAIL`] when the trial failed with an error.
    pub detail: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSummary {
    pub test: TestKind,
    pub n: usize,
    pub successes: usize,
    pub trials: usize,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub recovered: VarietySpec,
    pub ensemble: EnsembleKind,
    pub counting_field: FieldTag,
    pub variety_dim: usize,
    pub ae_threshold: usize,
    pub everywhere_threshold: Option<usize>,
}

/// The JSON summary of a sweep; rows live in the CSV file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub schema: u32,
    pub scenario: ScenarioSummary,
    pub n_range: [usize; 2],
    pub trials: usize,
    pub base_seed: u64,
    pub tests: Vec<TestKind>,
    pub solver: SolveConfig,
    pub rates: Vec<RateSummary>,
    pub transitions: BTreeMap<TestKind, Option<usize>>,
    pub errors: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub summary: SweepSummary,
}

pub fn trial_seed(base_seed: u64, n: usize, trial: usize) -> u64 {
    mix(mix(base_seed, n as u64), trial as u64)
}

struct Prepared {
    ensemble: crate::ensemble::MeasurementEnsemble,
    plant: crate::model::DenseMatrix,
    tangent: crate::variety::TangentBasis,
}

fn prepare(scenario: &Scenario, n: usize, stream: SeedStream) -> Result<Prepared> {
    let ensemble = generate(&scenario.ensemble_spec(n, stream.child(0).value())?)?;
    let (plant, tangent) = sample_smooth_point(&scenario.recovered, stream.child(1))?;
    Ok(Prepared { ensemble, plant, tangent })
}

fn run_test(scenario: &Scenario, prep: &Prepared, stream: SeedStream, test: TestKind, cfg: &SolveConfig) -> Result<(bool, f64)> {
    let p = &prep.plant;
    match test {
        TestKind::LocalRank => {
            let fiber = fiber_dim_estimate(&measurement_jacobian(&prep.ensemble, &prep.tangent)?);
            Ok((fiber == 0, fiber as f64))
        }
        TestKind::AeRecovery => {
            let out = distinct_solution_search(&prep.ensemble, p, &scenario.recovered, cfg, stream.child(3))?;
            let sep = match &out.solution {
                Some(q) => (q.as_nalgebra() - p.as_nalgebra()).norm() / p.frobenius_norm(),
                None => 0.0,
            };
            Ok((out.status != SolveStatus::Converged, sep))
        }
        TestKind::Everywhere => {
            let out = counterexample_search(&prep.ensemble, &scenario.recovered, cfg, stream.child(4))?;
            Ok((out.status != SolveStatus::Converged, out.residual))
        }
    }
}

/// One trial: a row per requested test. Errors become failed rows with
/// detail [`ERROR_DETAIL`].
pub fn run_trial(
    scenario: &Scenario,
    n: usize,
    trial: usize,
    base_seed: u64,
    tests: &[TestKind],
    cfg: &SolveConfig,
) -> Vec<SweepRow> {
    let seed = trial_seed(base_seed, n, trial);
    let stream = SeedStream::new(seed);
    let prep = prepare(scenario, n, stream);
    tests
        .iter()
        .map(|&test| {
            let outcome = prep.as_ref().map_err(Clone::clone).and_then(|p| run_test(scenario, p, stream, test, cfg));
            let (success, detail) = outcome.unwrap_or((false, ERROR_DETAIL));
            SweepRow { n, test, trial, seed, success, detail }
        })
        .collect()
}

/// Smallest `N` whose rate and every larger sampled rate are at least ½.
pub fn estimate_transition(rates: &[RateSummary], test: TestKind) -> Result<Option<usize>> {
    let mut curve: Vec<(usize, f64)> = rates.iter().filter(|r| r.test == test).map(|r| (r.n, r.rate)).collect();
    if curve.is_empty() {
        return Err(Error::InvalidConfig(format!("test `{test}` not in result")));
    }
    curve.sort_by_key(|c| c.0);
    let mut answer = None;
    for &(n, rate) in curve.iter().rev() {
        if rate >= 0.5 {
            answer = Some(n);
        } else {
            break;
        }
    }
    Ok(answer)
}

fn summarize(cfg: &SweepConfig, scenario: &Scenario, rows: &[SweepRow]) -> Result<SweepSummary> {
    let mut rates = Vec::new();
    for &test in &cfg.tests {
        for n in cfg.n_values() {
            let cell: Vec<&SweepRow> = rows.iter().filter(|r| r.test == test && r.n == n).collect();
            let successes = cell.iter().filter(|r| r.success).count();
            rates.push(RateSummary {
                test,
                n,
                successes,
                trials: cell.len(),
                rate: successes as f64 / cell.len() as f64,
            });
        }
    }
    let mut transitions = BTreeMap::new();
    for &test in &cfg.tests {
        transitions.insert(test, estimate_transition(&rates, test)?);
    }
    Ok(SweepSummary {
        schema: SCHEMA_VERSION,
        scenario: ScenarioSummary {
            recovered: scenario.recovered,
            ensemble: scenario.ensemble_kind,
            counting_field: scenario.counting_field(),
            variety_dim: variety_dim(&scenario.recovered)?,
            ae_threshold: scenario.theoretical_ae_threshold()?,
            everywhere_threshold: scenario.theoretical_everywhere_threshold(),
        },
        n_range: cfg.n_range,
        trials: cfg.trials,
        base_seed: cfg.base_seed,
        tests: cfg.tests.clone(),
        solver: cfg.solver.clone(),
        rates,
        transitions,
        errors: rows.iter().filter(|r| r.detail == ERROR_DETAIL).count(),
        warnings: scenario.warnings(),
    })
}

/// Runs every `(N, trial)` cell. Rows come out ordered by `N`, then trial,
/// then test, whatever the worker count.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let scenario = cfg.scenario()?;
    let cells: Vec<(usize, usize)> = cfg.n_values().flat_map(|n| (0..cfg.trials).map(move |t| (n, t))).collect();
    let work = || -> Vec<SweepRow> {
        cells
            .par_iter()
            .map(|&(n, t)| run_trial(&scenario, n, t, cfg.base_seed, &cfg.tests, &cfg.solver))
            .collect::<Vec<_>>()
            .concat()
    };
    let rows = match cfg.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| Error::InvalidConfig(e.to_string()))?
            .install(work),
        None => work(),
    };
    let summary = summarize(cfg, &scenario, &rows)?;
    Ok(SweepResult { rows, summary })
}

/// Per-trial CSV header; every row repeats the schema version.
pub const CSV_HEADER: &str = "schema,N,test,trial,seed,success,detail";

pub fn rows_to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!("{},{},{},{},{},{},{}\n", SCHEMA_VERSION, r.n, r.test, r.trial, r.seed, r.success as u8, r.detail));
    }
    out
}

pub fn summary_to_json(summary: &SweepSummary) -> String {
    let mut s = serde_json::to_string_pretty(summary).expect("summary serializes");
    s.push('\n');
    s
}

pub fn summary_from_json(text: &str) -> Result<SweepSummary> {
    let s: SweepSummary = serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    if s.schema != SCHEMA_VERSION {
        return Err(Error::InvalidConfig(format!("unsupported schema {}", s.schema)));
    }
    Ok(s)
}

/// Two-column `N rate` data for one test.
pub fn rate_curve(summary: &SweepSummary, test: TestKind) -> String {
    let mut out = format!("# N {test}_rate\n");
    for r in summary.rates.iter().filter(|r| r.test == test) {
        out.push_str(&format!("{} {}\n", r.n, r.rate));
    }
    out
}

/// `N rate threshold` data for one test, the threshold repeated on every row
/// for overlay plots (`NaN` when undefined).
pub fn report_curve(summary: &SweepSummary, test: TestKind) -> String {
    let threshold = match test {
        TestKind::LocalRank => Some(summary.scenario.variety_dim),
        TestKind::AeRecovery => Some(summary.scenario.ae_threshold),
        TestKind::Everywhere => summary.scenario.everywhere_threshold,
    };
    let t = threshold.map_or("NaN".to_string(), |t| t.to_string());
    let mut out = format!("# N {test}_rate threshold\n");
    for r in summary.rates.iter().filter(|r| r.test == test) {
        out.push_str(&format!("{} {} {}\n", r.n, r.rate, t));
    }
    out
}

/// Human-readable table of rates per `N`, one column per test.
pub fn report_table(summary: &SweepSummary) -> String {
    let mut out = format!(
        "scenario {} / {} (dim {}, {} counting)\n",
        summary.scenario.recovered,
        summary.scenario.ensemble,
        summary.scenario.variety_dim,
        summary.scenario.counting_field.name()
    );
    out.push_str(&format!("{:>4}", "N"));
    for t in &summary.tests {
        out.push_str(&format!(" {:>12}", t.name()));
    }
    out.push('\n');
    for n in summary.n_range[0]..=summary.n_range[1] {
        out.push_str(&format!("{n:>4}"));
        for &t in &summary.tests {
            let rate = summary.rates.iter().find(|r| r.test == t && r.n == n).map_or(f64::NAN, |r| r.rate);
            out.push_str(&format!(" {rate:>12.2}"));
        }
        out.push('\n');
    }
    for &t in &summary.tests {
        let est = summary.transitions.get(&t).copied().flatten();
        let theory = Scenario { recovered: summary.scenario.recovered, ensemble_kind: summary.scenario.ensemble }.threshold(t);
        out.push_str(&format!(
            "transition {t}: {} (theory {})\n",
            est.map_or("none".into(), |n| n.to_string()),
            theory.map_or("n/a".into(), |n| n.to_string())
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rates(test: TestKind, start: usize, values: &[f64]) -> Vec<RateSummary> {
        values
            .iter()
            .enumerate()
            .map(|(i, &rate)| RateSummary { test, n: start + i, successes: 0, trials: 1, rate })
            .collect()
    }

    #[test]
    fn transition_rule() {
        let t = TestKind::LocalRank;
        assert_eq!(estimate_transition(&rates(t, 3, &[0.0, 0.0, 0.0, 1.0, 1.0]), t).unwrap(), Some(6));
        assert_eq!(estimate_transition(&rates(t, 3, &[0.0; 5]), t).unwrap(), None);
        assert_eq!(estimate_transition(&rates(t, 3, &[0.0, 0.4, 0.6, 0.3, 1.0, 1.0]), t).unwrap(), Some(7));
        assert!(estimate_transition(&rates(t, 3, &[1.0]), TestKind::Everywhere).is_err());
    }

    fn lowrank_c() -> Scenario {
        Scenario::new("lowrank:4x4:r1:C".parse().unwrap(), EnsembleKind::Gaussian).unwrap()
    }

    #[test]
    fn scenario_thresholds() {
        let s = lowrank_c();
        assert_eq!(s.theoretical_ae_threshold().unwrap(), 8);
        assert_eq!(s.theoretical_everywhere_threshold(), Some(12));
        assert_eq!(s.counting_field(), FieldTag::Complex);
        assert!(s.warnings().is_empty());
        let sat = Scenario::new("lowrank:3x3:r2:R".parse().unwrap(), EnsembleKind::Gaussian).unwrap();
        assert_eq!(sat.warnings().len(), 1);
        let herm = Scenario::new("herm:4:r1".parse().unwrap(), EnsembleKind::RankOneHerm).unwrap();
        assert_eq!(herm.counting_field(), FieldTag::Real);
        assert!(Scenario::new("lowrank:4x4:r1:C".parse().unwrap(), EnsembleKind::OrthogonalMeas).is_err());
    }

    #[test]
    fn far_above_thresholds_all_tests_succeed() {
        let rows = run_trial(&lowrank_c(), 20, 0, 1, &TestKind::ALL, &SolveConfig::default());
        assert_eq!(rows.len(), 3);
        assert!(rows.iter().all(|r| r.success), "{rows:?}");
    }

    #[test]
    fn without_measurements_all_tests_fail() {
        let rows = run_trial(&lowrank_c(), 0, 0, 1, &TestKind::ALL, &SolveConfig::default());
        assert!(rows.iter().all(|r| !r.success && r.detail != ERROR_DETAIL), "{rows:?}");
    }

    #[test]
    fn phase_retrieval_local_rank_at_five() {
        let s = Scenario::new("sym:4:r1:R".parse().unwrap(), EnsembleKind::RankOneSym).unwrap();
        let rows = run_trial(&s, 5, 0, 9, &[TestKind::LocalRank], &SolveConfig::default());
        assert!(rows[0].success);
    }

    #[test]
    fn errors_become_rows() {
        // Orthogonal has no difference variety, so the everywhere test errors.
        let s = Scenario::new("orth:3".parse().unwrap(), EnsembleKind::Gaussian).unwrap();
        let rows = run_trial(&s, 4, 0, 1, &[TestKind::LocalRank, TestKind::Everywhere], &SolveConfig::default());
        assert_eq!(rows[1].detail, ERROR_DETAIL);
        assert!(!rows[1].success);
        assert_ne!(rows[0].detail, ERROR_DETAIL);
    }

    fn config(text: &str) -> SweepConfig {
        SweepConfig::from_json(text).unwrap()
    }

    #[test]
    fn minimal_sweep_has_one_row() {
        let cfg = config(
            r#"{"schema":1,"recovered":"lowrank:4x4:r1:C","ensemble":"gauss","n_range":[5,5],
                "trials":1,"base_seed":3,"tests":["local_rank"]}"#,
        );
        let res = run_sweep(&cfg).unwrap();
        assert_eq!(res.rows.len(), 1);
        assert_eq!(res.summary.rates.len(), 1);
        let csv = rows_to_csv(&res.rows);
        assert!(csv.starts_with("schema,N,test,trial,seed,success,detail\n"));
        assert_eq!(csv.lines().count(), 2);
    }

    #[test]
    fn local_rank_sweep_is_a_step_and_worker_independent() {
        let text = r#"{"schema":1,"recovered":"lowrank:4x4:r1:C","ensemble":"gauss","n_range":[5,9],
            "trials":10,"base_seed":7,"tests":["local_rank"],"workers":1}"#;
        let one = run_sweep(&config(text)).unwrap();
        let four = run_sweep(&config(&text.replace("\"workers\":1", "\"workers\":4"))).unwrap();
        assert_eq!(rows_to_csv(&one.rows), rows_to_csv(&four.rows));
        assert_eq!(summary_to_json(&one.summary), summary_to_json(&four.summary));
        let r: Vec<f64> = one.summary.rates.iter().map(|r| r.rate).collect();
        assert_eq!(r, vec![0.0, 0.0, 1.0, 1.0, 1.0]);
        assert_eq!(one.summary.transitions[&TestKind::LocalRank], Some(7));
    }

    #[test]
    fn config_validation() {
        let ok = r#"{"schema":1,"recovered":"sym:4:r1:R","ensemble":"rank1sym","n_range":[3,8],
            "trials":2,"base_seed":0,"tests":["ae_recovery"],"solver":{"restarts":5}}"#;
        assert_eq!(config(ok).solver.restarts, 5);
        for bad in [
            ok.replace("\"schema\":1", "\"schema\":2"),
            ok.replace("[3,8]", "[8,3]"),
            ok.replace("\"trials\":2", "\"trials\":0"),
            ok.replace("[\"ae_recovery\"]", "[]"),
            ok.replace("rank1sym", "rank1herm"),
            ok.replace("\"base_seed\":0", "\"base_seed\":0,\"extra\":1"),
        ] {
            assert!(SweepConfig::from_json(&bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn report_outputs_match_summary() {
        let cfg = config(
            r#"{"schema":1,"recovered":"sym:4:r1:R","ensemble":"rank1sym","n_range":[3,6],
                "trials":3,"base_seed":2,"tests":["local_rank"]}"#,
        );
        let res = run_sweep(&cfg).unwrap();
        let json = summary_to_json(&res.summary);
        let back = summary_from_json(&json).unwrap();
        assert_eq!(back, res.summary);
        let curve = report_curve(&back, TestKind::LocalRank);
        let lines: Vec<&str> = curve.lines().skip(1).collect();
        assert_eq!(lines.len(), 4);
        for (line, r) in lines.iter().zip(&back.rates) {
            let cols: Vec<&str> = line.split(' ').collect();
            assert_eq!(cols[0].parse::<usize>().unwrap(), r.n);
            assert_eq!(cols[1].parse::<f64>().unwrap(), r.rate);
            assert_eq!(cols[2], "4");
        }
        assert!(report_table(&back).contains("transition local_rank: 4 (theory 4)"));
    }
}
