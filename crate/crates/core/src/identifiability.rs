//! Numerical rank certificates: variety dimension from tangent rank, local
//! identifiability of the measurement map on a variety, and admissibility
//! probes for measurement varieties.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::MeasurementEnsemble;
use crate::error::{Error, Result};
use crate::linalg::{column_rank, rank_from_singular_values, rank_tolerance, singular_values};
use crate::model::{trace_inner_unchecked, DenseMatrix, FieldTag, C64};
use crate::rng::SeedStream;
use crate::variety::{sample_point, tangent_basis, TangentBasis, VarietySpec};

/// Attempts per trial before a sampling failure is reported.
pub const SAMPLE_RETRIES: usize = 10;
/// A probe value above this (relative) proves the functional is not identically zero.
pub const ADMISSIBLE_TOL: f64 = 1e-8;
/// Probe and tangent values below this (relative) count as exact zeros.
pub const VANISHING_TOL: f64 = 1e-12;

/// Singular values and numerical rank of a Jacobian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankReport {
    pub jacobian_rows: usize,
    pub jacobian_cols: usize,
    /// Scalars the rank is counted over.
    pub counting_field: FieldTag,
    pub singular_values: Vec<f64>,
    pub rank: usize,
    /// Absolute singular-value cutoff.
    pub tolerance_used: f64,
}

impl RankReport {
    fn from_matrix(j: &DMatrix<C64>, counting_field: FieldTag) -> Self {
        let (rows, cols) = j.shape();
        let sv = singular_values(j);
        let (rank, cutoff) = rank_from_singular_values(&sv, rank_tolerance(rows, cols));
        RankReport {
            jacobian_rows: rows,
            jacobian_cols: cols,
            counting_field,
            singular_values: sv,
            rank,
            tolerance_used: cutoff,
        }
    }
}

/// Samples a smooth point, retrying on the (measure-zero) singular stratum.
pub fn sample_smooth_point(spec: &VarietySpec, stream: SeedStream) -> Result<(DenseMatrix, TangentBasis)> {
    let mut last = None;
    for attempt in 0..SAMPLE_RETRIES {
        let mut rng = stream.child(attempt as u64).rng();
        let point = sample_point(spec, &mut rng)?;
        match tangent_basis(spec, &point) {
            Ok(tb) => return Ok((point, tb)),
            Err(e @ (Error::SingularStratum { .. } | Error::OffVariety { .. })) => last = Some(e.to_string()),
            Err(e) => return Err(e),
        }
    }
    Err(Error::SamplingFailed {
        attempts: SAMPLE_RETRIES,
        reason: last.unwrap_or_default(),
    })
}

/// Generic dimension of the variety in real units: the largest numerical
/// rank of the realified tangent basis over `trials` sample points.
pub fn numerical_variety_dim(spec: &VarietySpec, trials: usize, seed: SeedStream) -> Result<usize> {
    if trials == 0 {
        return Err(Error::InvalidConfig("trials must be at least 1".into()));
    }
    let ranks = (0..trials)
        .into_par_iter()
        .map(|t| sample_smooth_point(spec, seed.child(t as u64)).map(|(_, tb)| tb.real_rank()))
        .collect::<Result<Vec<_>>>()?;
    Ok(ranks.into_iter().max().unwrap_or(0))
}

/// Jacobian of the measurement map along a tangent basis.
///
/// Over ℂ the Jacobian is the complex `N × dim` matrix of directional
/// derivatives. Over ℝ each complex measurement contributes its real and
/// imaginary parts as two rows, and a real one contributes a single row.
pub fn measurement_jacobian(ensemble: &MeasurementEnsemble, tb: &TangentBasis) -> Result<RankReport> {
    let point = &tb.base_point;
    if point.shape() != ensemble.shape() {
        return Err(Error::ShapeMismatch { expected: ensemble.shape(), found: point.shape() });
    }
    if point.field() != ensemble.field() {
        return Err(Error::FieldMismatch { left: ensemble.field(), right: point.field() });
    }
    let columns: Vec<Vec<C64>> = tb.basis.iter().map(|t| ensemble.measure_raw(t.as_nalgebra())).collect();
    let n = ensemble.len();
    let k = columns.len();
    let j = match tb.counting_field {
        FieldTag::Complex => {
            if ensemble.measurement_scalar_field != FieldTag::Complex {
                return Err(Error::FieldMismatch { left: FieldTag::Complex, right: ensemble.measurement_scalar_field });
            }
            DMatrix::from_fn(n, k, |row, col| columns[col][row])
        }
        FieldTag::Real => {
            let width = ensemble.measurement_scalar_field.real_width();
            DMatrix::from_fn(n * width, k, |row, col| {
                let z = columns[col][row / width];
                C64::new(if row % width == 0 { z.re } else { z.im }, 0.0)
            })
        }
    };
    Ok(RankReport::from_matrix(&j, tb.counting_field))
}

/// Local dimension of the kernel of the Jacobian; 0 certifies local
/// identifiability at the base point.
pub fn fiber_dim_estimate(report: &RankReport) -> usize {
    report.jacobian_cols - report.rank
}

/// Rank report of the tangent basis itself, realified.
pub fn tangent_rank_report(tb: &TangentBasis) -> RankReport {
    let cols = tb.realified_columns();
    let rows = cols.first().map_or(0, Vec::len);
    let (rank, sv, cutoff) = column_rank(&cols);
    RankReport {
        jacobian_rows: rows,
        jacobian_cols: cols.len(),
        counting_field: FieldTag::Real,
        singular_values: sv,
        rank,
        tolerance_used: cutoff,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Admissible,
    NotAdmissible,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityVerdict {
    pub variety: VarietySpec,
    pub functional_witness: crate::io::MatrixJson,
    pub probes_tried: usize,
    pub verdict: Verdict,
    /// Largest relative probe value `|Tr(P^T v)| / (‖P‖ ‖v‖)`.
    pub max_abs_value: f64,
}

struct Probe {
    value: f64,
    tangent_vanishes: bool,
}

fn run_probe(v: &VarietySpec, p: &DenseMatrix, pn: f64, stream: SeedStream, check_tangent: bool) -> Result<Probe> {
    let (point, tb) = sample_smooth_point(v, stream)?;
    let value = trace_inner_unchecked(p.as_nalgebra(), point.as_nalgebra()).norm() / (pn * point.frobenius_norm());
    let tangent_vanishes = check_tangent
        && tb.basis.iter().all(|t| {
            let tn = t.frobenius_norm();
            tn == 0.0 || trace_inner_unchecked(p.as_nalgebra(), t.as_nalgebra()).norm() <= VANISHING_TOL * pn * tn
        });
    Ok(Probe { value, tangent_vanishes })
}

/// Tests whether the linear functional `Q ↦ Tr(P^T Q)` vanishes identically
/// on `v`, by evaluating it at `probes` random points.
///
/// Probes run in parallel; each one has its own seed, so the verdict does not
/// depend on scheduling.
pub fn admissibility_probe(v: &VarietySpec, p: &DenseMatrix, probes: usize, seed: SeedStream) -> Result<AdmissibilityVerdict> {
    v.validate()?;
    if p.shape() != v.shape() {
        return Err(Error::ShapeMismatch { expected: v.shape(), found: p.shape() });
    }
    if p.field() != v.field {
        return Err(Error::FieldMismatch { left: v.field, right: p.field() });
    }
    let pn = p.frobenius_norm();
    if pn == 0.0 {
        return Err(Error::ZeroFunctional);
    }
    if probes == 0 {
        return Err(Error::InvalidConfig("at least one probe is required".into()));
    }
    let results = (0..probes)
        .into_par_iter()
        .map(|i| run_probe(v, p, pn, seed.child(i as u64), true))
        .collect::<Result<Vec<_>>>()?;
    let max_abs_value = results.iter().map(|r| r.value).fold(0.0, f64::max);
    let verdict = if max_abs_value > ADMISSIBLE_TOL {
        Verdict::Admissible
    } else if max_abs_value <= VANISHING_TOL && results.iter().all(|r| r.tangent_vanishes) {
        Verdict::NotAdmissible
    } else {
        Verdict::Inconclusive
    };
    Ok(AdmissibilityVerdict {
        variety: *v,
        functional_witness: p.into(),
        probes_tried: probes,
        verdict,
        max_abs_value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{generate, EnsembleKind, EnsembleSpec};
    use crate::linalg::gaussian_matrix;
    use crate::variety::variety_dim;

    fn lr(p: usize, q: usize, r: usize, f: FieldTag) -> VarietySpec {
        VarietySpec::low_rank(p, q, r, f).unwrap()
    }

    #[test]
    fn numerical_dims_of_reference_varieties() {
        let s = SeedStream::new(3);
        assert_eq!(numerical_variety_dim(&lr(4, 4, 1, FieldTag::Complex), 3, s).unwrap(), 14);
        assert_eq!(numerical_variety_dim(&VarietySpec::hermitian(4, 1).unwrap(), 3, s).unwrap(), 7);
        assert_eq!(numerical_variety_dim(&VarietySpec::projection(4, 1).unwrap(), 3, s).unwrap(), 3);
        assert!(numerical_variety_dim(&VarietySpec::hermitian(4, 1).unwrap(), 0, s).is_err());
    }

    /// Independent oracle: the rank of the differential of the factor
    /// parametrization `(U, V) ↦ U V^T`, assembled column by column.
    #[test]
    fn tangent_rank_matches_parametrization_jacobian() {
        for (p, q, r) in [(3, 4, 1), (4, 4, 2), (5, 3, 2)] {
            let mut rng = SeedStream::new(11).rng();
            let u = gaussian_matrix(&mut rng, p, r, FieldTag::Real);
            let v = gaussian_matrix(&mut rng, q, r, FieldTag::Real);
            let mut cols = Vec::new();
            for i in 0..p {
                for k in 0..r {
                    let mut du = DMatrix::<C64>::zeros(p, r);
                    du[(i, k)] = C64::new(1.0, 0.0);
                    cols.push((du * v.transpose()).iter().map(|z| z.re).collect::<Vec<_>>());
                }
            }
            for i in 0..q {
                for k in 0..r {
                    let mut dv = DMatrix::<C64>::zeros(q, r);
                    dv[(i, k)] = C64::new(1.0, 0.0);
                    cols.push((&u * dv.transpose()).iter().map(|z| z.re).collect::<Vec<_>>());
                }
            }
            let oracle = column_rank(&cols).0;
            let spec = lr(p, q, r, FieldTag::Real);
            assert_eq!(numerical_variety_dim(&spec, 2, SeedStream::new(5)).unwrap(), oracle);
            assert_eq!(oracle, variety_dim(&spec).unwrap());
        }
    }

    fn gaussian(n: usize, shape: (usize, usize), f: FieldTag, seed: u64) -> MeasurementEnsemble {
        generate(&EnsembleSpec::new(EnsembleKind::Gaussian, n, shape, f, seed).unwrap()).unwrap()
    }

    #[test]
    fn empty_ensemble_has_rank_zero() {
        let spec = lr(4, 4, 1, FieldTag::Complex);
        let (_, tb) = sample_smooth_point(&spec, SeedStream::new(1)).unwrap();
        let rep = measurement_jacobian(&gaussian(0, (4, 4), FieldTag::Complex, 1), &tb).unwrap();
        assert_eq!(rep.rank, 0);
        assert_eq!(fiber_dim_estimate(&rep), 7);
    }

    #[test]
    fn gaussian_rank_saturates_at_dim() {
        let spec = lr(4, 4, 1, FieldTag::Complex);
        let (_, tb) = sample_smooth_point(&spec, SeedStream::new(2)).unwrap();
        let rep = measurement_jacobian(&gaussian(20, (4, 4), FieldTag::Complex, 2), &tb).unwrap();
        assert_eq!(rep.rank, 7);
        assert_eq!(fiber_dim_estimate(&rep), 0);
        assert!(rep.singular_values.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn fiber_of_full_space_below_dimension() {
        let spec = VarietySpec::full_space(4, 4, FieldTag::Real).unwrap();
        let (_, tb) = sample_smooth_point(&spec, SeedStream::new(3)).unwrap();
        let rep = measurement_jacobian(&gaussian(13, (4, 4), FieldTag::Real, 3), &tb).unwrap();
        assert_eq!(fiber_dim_estimate(&rep), 3);
    }

    #[test]
    fn duplicated_measurements_have_rank_one() {
        let spec = lr(4, 4, 1, FieldTag::Real);
        let (_, tb) = sample_smooth_point(&spec, SeedStream::new(4)).unwrap();
        let mut ens = gaussian(5, (4, 4), FieldTag::Real, 4);
        let first = ens.matrices[0].clone();
        ens.matrices.iter_mut().for_each(|m| *m = first.clone());
        assert_eq!(measurement_jacobian(&ens, &tb).unwrap().rank, 1);
    }

    #[test]
    fn prefix_rank_is_monotone() {
        let spec = lr(4, 5, 2, FieldTag::Real);
        let (_, tb) = sample_smooth_point(&spec, SeedStream::new(6)).unwrap();
        let ens = gaussian(16, (4, 5), FieldTag::Real, 6);
        let ranks: Vec<usize> = (0..=16).map(|n| measurement_jacobian(&ens.prefix(n), &tb).unwrap().rank).collect();
        assert!(ranks.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(ranks[16], 14);
    }

    #[test]
    fn hermitian_rank_one_measurements_count_real() {
        let spec = VarietySpec::hermitian(4, 1).unwrap();
        let (_, tb) = sample_smooth_point(&spec, SeedStream::new(8)).unwrap();
        let ens = generate(&EnsembleSpec::new(EnsembleKind::RankOneHerm, 9, (4, 4), FieldTag::Complex, 8).unwrap()).unwrap();
        let rep = measurement_jacobian(&ens, &tb).unwrap();
        assert_eq!((rep.jacobian_rows, rep.jacobian_cols, rep.rank), (9, 7, 7));
        let rep6 = measurement_jacobian(&ens.prefix(6), &tb).unwrap();
        assert_eq!(fiber_dim_estimate(&rep6), 1);
    }

    #[test]
    fn incompatible_inputs_are_rejected() {
        let (_, tb) = sample_smooth_point(&lr(4, 4, 1, FieldTag::Complex), SeedStream::new(1)).unwrap();
        assert!(measurement_jacobian(&gaussian(3, (4, 5), FieldTag::Complex, 1), &tb).is_err());
        assert!(measurement_jacobian(&gaussian(3, (4, 4), FieldTag::Real, 1), &tb).is_err());
    }

    #[test]
    fn rank_report_serializes_singular_values() {
        let (_, tb) = sample_smooth_point(&lr(3, 3, 1, FieldTag::Real), SeedStream::new(1)).unwrap();
        let rep = measurement_jacobian(&gaussian(4, (3, 3), FieldTag::Real, 1), &tb).unwrap();
        let text = serde_json::to_string(&rep).unwrap();
        let back: RankReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back, rep);
        assert!(text.contains("singular_values"));
    }

    #[test]
    fn full_space_is_admissible() {
        let v = VarietySpec::full_space(3, 3, FieldTag::Real).unwrap();
        let p = DenseMatrix::unit(3, 3, 0, 1, FieldTag::Real);
        let out = admissibility_probe(&v, &p, 5, SeedStream::new(1)).unwrap();
        assert_eq!(out.verdict, Verdict::Admissible);
    }

    #[test]
    fn skew_functional_on_symmetric_matrices_is_not_admissible() {
        let v = VarietySpec::symmetric(4, 4, FieldTag::Real).unwrap();
        let mut rng = SeedStream::new(2).rng();
        let g = gaussian_matrix(&mut rng, 4, 4, FieldTag::Real);
        let p = DenseMatrix::from_nalgebra(FieldTag::Real, &g - g.transpose());
        let out = admissibility_probe(&v, &p, 20, SeedStream::new(3)).unwrap();
        assert_eq!(out.verdict, Verdict::NotAdmissible);
        assert!(out.max_abs_value <= VANISHING_TOL);
    }

    #[test]
    fn orthogonal_is_admissible_for_random_functional() {
        let v = VarietySpec::orthogonal(3).unwrap();
        let mut rng = SeedStream::new(4).rng();
        let p = DenseMatrix::from_nalgebra(FieldTag::Real, gaussian_matrix(&mut rng, 3, 3, FieldTag::Real));
        let out = admissibility_probe(&v, &p, 100, SeedStream::new(5)).unwrap();
        assert_eq!(out.verdict, Verdict::Admissible);
        assert_eq!(out.probes_tried, 100);
    }

    #[test]
    fn zero_functional_is_an_error() {
        let v = VarietySpec::orthogonal(3).unwrap();
        let p = DenseMatrix::zeros(3, 3, FieldTag::Real);
        assert!(matches!(admissibility_probe(&v, &p, 3, SeedStream::new(1)), Err(Error::ZeroFunctional)));
    }

    #[test]
    fn symmetric_skew_pairing_vanishes() {
        for seed in 0..50 {
            let mut rng = SeedStream::new(seed).rng();
            let g = gaussian_matrix(&mut rng, 5, 5, FieldTag::Real);
            let h = gaussian_matrix(&mut rng, 5, 5, FieldTag::Real);
            let sym = (&g + g.transpose()) * C64::new(0.5, 0.0);
            let skew = &h - h.transpose();
            let v = trace_inner_unchecked(&(&sym / C64::new(sym.norm(), 0.0)), &(&skew / C64::new(skew.norm(), 0.0)));
            assert!(v.norm() <= 1e-14, "{v}");
        }
    }
}
