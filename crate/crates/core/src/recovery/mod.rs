//! Nonconvex recovery over bounded-rank varieties.
//!
//! Three searches share one Levenberg–Marquardt core working on realified
//! factor parameters:
//!
//! * [`solve`] fits `L_A(X) = b` with `X` on the variety;
//! * [`distinct_solution_search`] looks for a second preimage `Q ≠ P` of
//!   `L_A(P)`, a witness that `P` is not recovered;
//! * [`counterexample_search`] minimizes `‖L_A(W)‖ / ‖W‖_F` over the
//!   difference variety, looking for a kernel element.
//!
//! Negative outcomes are statistical: a search that finds nothing after its
//! restarts reports how many it ran.

mod factored;

pub use factored::{check_factorable, FactoredPoint, Factors};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::ensemble::MeasurementEnsemble;
use crate::error::{Error, Result};
use crate::model::{DenseMatrix, FieldTag, MeasurementVector, C64};
use crate::rng::SeedStream;
use crate::variety::{delta_spec, membership_residual, VarietySpec, MEMBERSHIP_TOL};

use factored::vec_real;

/// Largest damping before a restart is declared stuck.
const LAMBDA_MAX: f64 = 1e16;
const LAMBDA_MIN: f64 = 1e-16;
/// A restart stops once this many consecutive accepted steps each gain less
/// than [`STALL_GAIN`] in relative objective.
const STALL_STEPS: usize = 25;
const STALL_GAIN: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveConfig {
    pub max_iters: usize,
    pub restarts: usize,
    pub grad_tol: f64,
    /// Success threshold on `‖L_A(X) − b‖`, relative to `‖b‖` (to 1 when `b = 0`).
    pub residual_success_tol: f64,
    /// Initial Levenberg–Marquardt damping; multiplied or divided by 10.
    pub lambda0: f64,
    pub success_rel_err: f64,
    /// Relative distance below which a preimage counts as the planted point.
    pub separation_tol: f64,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            max_iters: 500,
            restarts: 20,
            grad_tol: 1e-10,
            residual_success_tol: 1e-8,
            lambda0: 1e-3,
            success_rel_err: 1e-6,
            separation_tol: 1e-3,
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("grad_tol", self.grad_tol),
            ("residual_success_tol", self.residual_success_tol),
            ("lambda0", self.lambda0),
            ("success_rel_err", self.success_rel_err),
            ("separation_tol", self.separation_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if self.restarts == 0 || self.max_iters == 0 {
            return Err(Error::InvalidConfig("restarts and max_iters must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Converged,
    NoSolutionFound,
    MaxItersExhausted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutcome {
    /// Present iff the status is `Converged`.
    pub solution: Option<DenseMatrix>,
    /// Best residual found: relative to `‖b‖` for fits, `‖L_A(W)‖` at unit
    /// `W` for kernel searches.
    pub residual: f64,
    pub iterations: usize,
    pub restart_index: usize,
    pub restarts_run: usize,
    /// Restarts that converged back onto the planted point (distinct search only).
    pub excluded: usize,
    pub status: SolveStatus,
}

/// The measurement map as a real matrix acting on realified operands.
pub(crate) struct RealMap {
    mat: DMatrix<f64>,
    field: FieldTag,
}

impl RealMap {
    pub(crate) fn new(ensemble: &MeasurementEnsemble) -> Self {
        let (p, q) = ensemble.shape();
        let field = ensemble.field();
        let w = field.real_width();
        let mw = ensemble.measurement_scalar_field.real_width();
        let n = ensemble.len();
        let mut mat = DMatrix::zeros(n * mw, p * q * w);
        let phases = [C64::new(1.0, 0.0), C64::new(0.0, 1.0)];
        for i in 0..p {
            for j in 0..q {
                for (part, &z) in phases.iter().enumerate().take(w) {
                    let mut e = DMatrix::<C64>::zeros(p, q);
                    e[(i, j)] = z;
                    let col = (i * q + j) * w + part;
                    for (row, v) in ensemble.measure_raw(&e).into_iter().enumerate() {
                        mat[(row * mw, col)] = v.re;
                        if mw == 2 {
                            mat[(row * mw + 1, col)] = v.im;
                        }
                    }
                }
            }
        }
        RealMap { mat, field }
    }

    fn apply(&self, m: &DMatrix<C64>) -> DVector<f64> {
        &self.mat * vec_real(m, self.field)
    }

    /// Realified derivatives of `assembled()`, one column per parameter.
    fn derivative_matrix(&self, x: &FactoredPoint) -> DMatrix<f64> {
        let cols: Vec<DVector<f64>> = x.derivatives().iter().map(|m| vec_real(m, self.field)).collect();
        if cols.is_empty() {
            return DMatrix::zeros(self.mat.ncols(), 0);
        }
        DMatrix::from_columns(&cols)
    }
}

enum Objective {
    /// `r = L(X) − b`.
    Fit(DVector<f64>),
    /// `r = L(W) / ‖W‖_F`.
    Rayleigh,
}

impl Objective {
    fn residual(&self, map: &RealMap, x: &FactoredPoint) -> DVector<f64> {
        let m = x.assembled_raw();
        match self {
            Objective::Fit(b) => map.apply(&m) - b,
            Objective::Rayleigh => {
                let n = m.norm();
                map.apply(&m) / if n > 0.0 { n } else { 1.0 }
            }
        }
    }

    fn residual_and_jacobian(&self, map: &RealMap, x: &FactoredPoint) -> (DVector<f64>, DMatrix<f64>) {
        let d = map.derivative_matrix(x);
        let m = x.assembled_raw();
        let j = &map.mat * &d;
        match self {
            Objective::Fit(b) => (map.apply(&m) - b, j),
            Objective::Rayleigh => {
                // d(ℓ/n) = L(dW)/n − ℓ ⟨W, dW⟩ / n³
                let w = vec_real(&m, map.field);
                let n = w.norm().max(f64::MIN_POSITIVE);
                let ell = map.apply(&m);
                let wd = w.transpose() * d;
                let jr = j / n - &ell * wd / (n * n * n);
                (ell / n, jr)
            }
        }
    }
}

fn measurement_rhs(ensemble: &MeasurementEnsemble, b: &MeasurementVector) -> Result<DVector<f64>> {
    if b.len() != ensemble.len() {
        return Err(Error::ShapeMismatch { expected: (ensemble.len(), 1), found: (b.len(), 1) });
    }
    if b.field != ensemble.measurement_scalar_field {
        return Err(Error::FieldMismatch { left: ensemble.measurement_scalar_field, right: b.field });
    }
    Ok(DVector::from_vec(b.realified()))
}

fn check_scenario(ensemble: &MeasurementEnsemble, spec: &VarietySpec) -> Result<()> {
    check_factorable(spec)?;
    if spec.shape() != ensemble.shape() {
        return Err(Error::ShapeMismatch { expected: ensemble.shape(), found: spec.shape() });
    }
    if spec.field != ensemble.field() {
        return Err(Error::FieldMismatch { left: ensemble.field(), right: spec.field });
    }
    Ok(())
}

/// Objective `½‖L_A(assembled(x)) − b‖²` and its gradient with respect to the
/// real parameters of `x`.
pub fn residual_and_gradient(
    x: &FactoredPoint,
    ensemble: &MeasurementEnsemble,
    b: &MeasurementVector,
) -> Result<(f64, Vec<f64>)> {
    let (p, q) = ensemble.shape();
    let shape = x.assembled_raw().shape();
    if shape != (p, q) {
        return Err(Error::ShapeMismatch { expected: (p, q), found: shape });
    }
    if x.field != ensemble.field() {
        return Err(Error::FieldMismatch { left: ensemble.field(), right: x.field });
    }
    let rhs = measurement_rhs(ensemble, b)?;
    let map = RealMap::new(ensemble);
    let (r, j) = Objective::Fit(rhs).residual_and_jacobian(&map, x);
    let g = j.transpose() * &r;
    Ok((0.5 * r.norm_squared(), g.iter().copied().collect()))
}

struct RunResult {
    point: FactoredPoint,
    residual: f64,
    iterations: usize,
    hit_max: bool,
}

/// One Levenberg–Marquardt run. `normalize` keeps `‖assembled‖_F = 1`
/// (Rayleigh objective, which is scale invariant).
fn levenberg_marquardt(
    map: &RealMap,
    obj: &Objective,
    mut x: FactoredPoint,
    cfg: &SolveConfig,
    tol: f64,
    normalize: bool,
) -> RunResult {
    let unit = |x: &mut FactoredPoint| {
        let n = x.assembled_raw().norm();
        if n > 0.0 {
            x.rescale(1.0 / n);
        }
    };
    if normalize {
        unit(&mut x);
    }
    let mut lambda = cfg.lambda0;
    let (mut r, mut j) = obj.residual_and_jacobian(map, &x);
    let mut f = r.norm_squared();
    let mut stalled = 0;
    for it in 0..cfg.max_iters {
        if f.sqrt() <= tol {
            return RunResult { point: x, residual: f.sqrt(), iterations: it, hit_max: false };
        }
        let g = j.transpose() * &r;
        if g.norm() <= cfg.grad_tol {
            break;
        }
        let jtj = j.transpose() * &j;
        let n = jtj.nrows();
        let scale = (jtj.trace() / n as f64).max(f64::MIN_POSITIVE);
        let params = DVector::from_vec(x.params());
        let mut accepted = false;
        while lambda <= LAMBDA_MAX {
            let mut a = jtj.clone();
            for k in 0..n {
                a[(k, k)] += lambda * scale;
            }
            let Some(chol) = a.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let step = chol.solve(&(-&g));
            let mut trial = x.with_params((&params + &step).as_slice()).expect("same layout");
            if normalize {
                unit(&mut trial);
            }
            let rt = obj.residual(map, &trial);
            let ft = rt.norm_squared();
            if ft.is_finite() && ft < f {
                stalled = if (f - ft) <= STALL_GAIN * f { stalled + 1 } else { 0 };
                lambda = (lambda / 10.0).max(LAMBDA_MIN);
                x = trial;
                (r, j) = obj.residual_and_jacobian(map, &x);
                f = r.norm_squared();
                accepted = true;
                break;
            }
            lambda *= 10.0;
        }
        if !accepted || stalled >= STALL_STEPS {
            return RunResult { point: x, residual: f.sqrt(), iterations: it + 1, hit_max: false };
        }
    }
    let hit_max = f.sqrt() > tol;
    RunResult { point: x, residual: f.sqrt(), iterations: cfg.max_iters, hit_max }
}

/// Outcome bookkeeping across restarts: lowest residual wins, ties to the
/// lowest restart index.
struct Best {
    run: Option<(usize, RunResult)>,
}

impl Best {
    fn offer(&mut self, k: usize, run: RunResult) {
        let better = match &self.run {
            None => true,
            Some((_, b)) => run.residual < b.residual,
        };
        if better {
            self.run = Some((k, run));
        }
    }
}

fn failure(best: Best, restarts_run: usize, excluded: usize) -> SolveOutcome {
    let (k, run) = best.run.map_or((0, None), |(k, r)| (k, Some(r)));
    SolveOutcome {
        solution: None,
        residual: run.as_ref().map_or(f64::NAN, |r| r.residual),
        iterations: run.as_ref().map_or(0, |r| r.iterations),
        restart_index: k,
        restarts_run,
        excluded,
        status: if run.as_ref().is_some_and(|r| r.hit_max) {
            SolveStatus::MaxItersExhausted
        } else {
            SolveStatus::NoSolutionFound
        },
    }
}

/// Runs restarts in index order for a fit problem; `accept` decides whether a
/// converged point ends the search (`Some(true)`), is excluded (`Some(false)`).
fn fit_search(
    ensemble: &MeasurementEnsemble,
    b: &MeasurementVector,
    spec: &VarietySpec,
    cfg: &SolveConfig,
    seed: SeedStream,
    accept: impl Fn(&DenseMatrix) -> bool,
) -> Result<SolveOutcome> {
    cfg.validate()?;
    check_scenario(ensemble, spec)?;
    let rhs = measurement_rhs(ensemble, b)?;
    let map = RealMap::new(ensemble);
    // Work with ‖b‖ = 1 so that every tolerance is relative.
    let s = rhs.norm();
    let scale = if s > 0.0 { s } else { 1.0 };
    let obj = Objective::Fit(&rhs / scale);
    let target = if ensemble.is_empty() || s == 0.0 { 1.0 } else { 1.0 / (ensemble.len() as f64).sqrt() };
    let mut best = Best { run: None };
    let mut excluded = 0;
    for k in 0..cfg.restarts {
        let mut rng = seed.child(k as u64).rng();
        let mut x0 = FactoredPoint::random(spec, &mut rng)?;
        let n0 = x0.assembled_raw().norm();
        if n0 > 0.0 {
            x0.rescale(target / n0);
        }
        let mut run = levenberg_marquardt(&map, &obj, x0, cfg, cfg.residual_success_tol, false);
        if run.residual <= cfg.residual_success_tol {
            run.point.rescale(scale);
            let sol = run.point.assembled();
            if accept(&sol) {
                return Ok(SolveOutcome {
                    solution: Some(sol),
                    residual: run.residual,
                    iterations: run.iterations,
                    restart_index: k,
                    restarts_run: k + 1,
                    excluded,
                    status: SolveStatus::Converged,
                });
            }
            excluded += 1;
            continue;
        }
        best.offer(k, run);
    }
    Ok(failure(best, cfg.restarts, excluded))
}

/// Finds a point of `spec` reproducing `b`.
///
/// Restarts run in index order and the first converged one is returned; if
/// none converges, the outcome reports the lowest residual reached.
pub fn solve(
    ensemble: &MeasurementEnsemble,
    b: &MeasurementVector,
    spec: &VarietySpec,
    cfg: &SolveConfig,
    seed: SeedStream,
) -> Result<SolveOutcome> {
    fit_search(ensemble, b, spec, cfg, seed, |_| true)
}

/// Looks for a preimage of `L_A(P)` on `spec` at relative distance more than
/// `separation_tol` from `P`. `Converged` means one was found.
pub fn distinct_solution_search(
    ensemble: &MeasurementEnsemble,
    p: &DenseMatrix,
    spec: &VarietySpec,
    cfg: &SolveConfig,
    seed: SeedStream,
) -> Result<SolveOutcome> {
    check_scenario(ensemble, spec)?;
    let residual = membership_residual(spec, p)?;
    if residual > MEMBERSHIP_TOL {
        return Err(Error::OffVariety { residual });
    }
    let b = MeasurementVector {
        values: ensemble.measure_raw(p.as_nalgebra()),
        field: ensemble.measurement_scalar_field,
    };
    let pn = p.frobenius_norm();
    let denom = if pn > 0.0 { pn } else { 1.0 };
    fit_search(ensemble, &b, spec, cfg, seed, |q| {
        (q.as_nalgebra() - p.as_nalgebra()).norm() / denom > cfg.separation_tol
    })
}

/// Searches the difference variety of `spec` for a unit-norm `W` with
/// `‖L_A(W)‖ ≤ residual_success_tol`. `Converged` certifies that the
/// ensemble cannot recover every point of `spec`.
pub fn counterexample_search(
    ensemble: &MeasurementEnsemble,
    spec: &VarietySpec,
    cfg: &SolveConfig,
    seed: SeedStream,
) -> Result<SolveOutcome> {
    cfg.validate()?;
    let delta = delta_spec(spec)?;
    check_scenario(ensemble, &delta)?;
    let map = RealMap::new(ensemble);
    let mut best = Best { run: None };
    for k in 0..cfg.restarts {
        let mut rng = seed.child(k as u64).rng();
        let x0 = FactoredPoint::random(&delta, &mut rng)?;
        let run = levenberg_marquardt(&map, &Objective::Rayleigh, x0, cfg, cfg.residual_success_tol, true);
        if run.residual <= cfg.residual_success_tol {
            return Ok(SolveOutcome {
                solution: Some(run.point.assembled()),
                residual: run.residual,
                iterations: run.iterations,
                restart_index: k,
                restarts_run: k + 1,
                excluded: 0,
                status: SolveStatus::Converged,
            });
        }
        best.offer(k, run);
    }
    Ok(failure(best, cfg.restarts, 0))
}
