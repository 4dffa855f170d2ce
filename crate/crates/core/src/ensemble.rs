//! Measurement ensembles `A = (A_j)` and the measurement map `P ↦ (Tr(A_j^T P))_j`.
//!
//! Matrix `j` of an ensemble is drawn from its own generator seeded with
//! `mix(seed, j)` (see [`crate::rng`]), so any subset of an ensemble can be
//! regenerated independently and parallel generation matches serial
//! generation bit for bit.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{vector_from_json, vector_to_json, MatrixJson, SCHEMA_VERSION};
use crate::linalg::gaussian_vector;
use crate::model::{trace_inner_unchecked, DenseMatrix, FieldTag, MeasurementVector, C64, HERMITIAN_TOL};
use crate::rng::SeedStream;
use crate::variety::{
    membership_residual, parse_prefixed, parse_shape, parse_usize, sample_point, VarietySpec,
};

/// Membership tolerance every generated matrix satisfies.
pub const ENSEMBLE_MEMBERSHIP_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EnsembleKind {
    /// i.i.d. standard normal entries (independent real and imaginary parts).
    Gaussian,
    /// Random points of the rank-`s` variety.
    LowRankMeas { s: usize },
    /// Haar orthogonal matrices.
    OrthogonalMeas,
    /// Haar rank-`s` orthogonal projections.
    ProjectionMeas { s: usize },
    /// `x x^T` with Gaussian `x ∈ ℝ^p`.
    RankOneSym,
    /// `x x^*` with complex Gaussian `x ∈ ℂ^p`.
    RankOneHerm,
}

impl EnsembleKind {
    /// Whether the ensemble records generating vectors `x_j`.
    pub fn is_rank_one(self) -> bool {
        matches!(self, EnsembleKind::RankOneSym | EnsembleKind::RankOneHerm)
    }
}

impl fmt::Display for EnsembleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EnsembleKind::Gaussian => f.write_str("gauss"),
            EnsembleKind::LowRankMeas { s } => write!(f, "lowrankmeas:s{s}"),
            EnsembleKind::OrthogonalMeas => f.write_str("orth"),
            EnsembleKind::ProjectionMeas { s } => write!(f, "proj:s{s}"),
            EnsembleKind::RankOneSym => f.write_str("rank1sym"),
            EnsembleKind::RankOneHerm => f.write_str("rank1herm"),
        }
    }
}

impl FromStr for EnsembleKind {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let parts: Vec<&str> = text.trim().split(':').collect();
        let (kind, used) = parse_kind(&parts, text)?;
        if used != parts.len() {
            return Err(Error::Parse {
                text: text.to_string(),
                reason: "trailing fields after ensemble kind".into(),
            });
        }
        Ok(kind)
    }
}

impl Serialize for EnsembleKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for EnsembleKind {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

fn parse_kind(parts: &[&str], whole: &str) -> Result<(EnsembleKind, usize)> {
    let rank = || -> Result<usize> {
        parts
            .get(1)
            .ok_or_else(|| Error::Parse {
                text: whole.to_string(),
                reason: "missing rank `s<k>`".into(),
            })
            .and_then(|s| parse_prefixed(s, 's', whole))
    };
    Ok(match parts[0] {
        "gauss" => (EnsembleKind::Gaussian, 1),
        "lowrankmeas" => (EnsembleKind::LowRankMeas { s: rank()? }, 2),
        "orth" => (EnsembleKind::OrthogonalMeas, 1),
        "proj" => (EnsembleKind::ProjectionMeas { s: rank()? }, 2),
        "rank1sym" => (EnsembleKind::RankOneSym, 1),
        "rank1herm" => (EnsembleKind::RankOneHerm, 1),
        other => {
            return Err(Error::Parse {
                text: whole.to_string(),
                reason: format!("unknown ensemble kind `{other}`"),
            })
        }
    })
}

/// Everything needed to regenerate an ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EnsembleSpec {
    pub kind: EnsembleKind,
    pub n: usize,
    pub shape: (usize, usize),
    pub field: FieldTag,
    pub seed: u64,
}

impl EnsembleSpec {
    pub fn new(kind: EnsembleKind, n: usize, shape: (usize, usize), field: FieldTag, seed: u64) -> Result<Self> {
        let spec = EnsembleSpec { kind, n, shape, field, seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let (p, q) = self.shape;
        let bad = |m: String| Err(Error::InvalidEnsemble(m));
        if p == 0 || q == 0 {
            return bad(format!("shape must be positive, got {p}x{q}"));
        }
        match self.kind {
            EnsembleKind::Gaussian => Ok(()),
            EnsembleKind::LowRankMeas { s } => {
                if s == 0 || s > p.min(q) {
                    bad(format!("measurement rank {s} outside 1..={}", p.min(q)))
                } else {
                    Ok(())
                }
            }
            EnsembleKind::OrthogonalMeas | EnsembleKind::ProjectionMeas { .. } => {
                if p != q {
                    return bad("orthogonal/projection measurements need square shape".into());
                }
                if self.field != FieldTag::Real {
                    return bad("orthogonal/projection measurements are real".into());
                }
                if let EnsembleKind::ProjectionMeas { s } = self.kind {
                    if s == 0 || s >= p {
                        return bad(format!("projection rank {s} outside 1..={}", p.saturating_sub(1)));
                    }
                }
                Ok(())
            }
            EnsembleKind::RankOneSym => {
                if p != q || self.field != FieldTag::Real {
                    bad("rank1sym needs square shape over R".into())
                } else {
                    Ok(())
                }
            }
            EnsembleKind::RankOneHerm => {
                if p != q || self.field != FieldTag::Complex {
                    bad("rank1herm needs square shape over C".into())
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Field of the measured scalars: real for the rank-one quadratic kinds.
    pub fn measurement_scalar_field(&self) -> FieldTag {
        if self.kind.is_rank_one() {
            FieldTag::Real
        } else {
            self.field
        }
    }

    pub fn with_n(self, n: usize) -> Self {
        EnsembleSpec { n, ..self }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        EnsembleSpec { seed, ..self }
    }
}

impl fmt::Display for EnsembleSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (p, q) = self.shape;
        let n = self.n;
        let seed = self.seed;
        match self.kind {
            EnsembleKind::Gaussian | EnsembleKind::LowRankMeas { .. } => {
                write!(f, "{}:N{n}:{p}x{q}:{}:seed{seed}", self.kind, self.field)
            }
            _ => write!(f, "{}:N{n}:{p}:seed{seed}", self.kind),
        }
    }
}

impl FromStr for EnsembleSpec {
    type Err = Error;

    /// Parses forms such as `gauss:N20:4x4:C:seed7`, `lowrankmeas:s2:N10:4x5:R:seed1`,
    /// `orth:N6:4:seed2`, `proj:s2:N6:5:seed2`, `rank1sym:N9:4:seed3`, `rank1herm:N9:4:seed3`.
    fn from_str(text: &str) -> Result<Self> {
        let parts: Vec<&str> = text.trim().split(':').collect();
        let (kind, used) = parse_kind(&parts, text)?;
        let rest = &parts[used..];
        let perr = |reason: &str| Error::Parse {
            text: text.to_string(),
            reason: reason.to_string(),
        };
        let spec = match kind {
            EnsembleKind::Gaussian | EnsembleKind::LowRankMeas { .. } => {
                let [n, shape, field, seed] = rest else {
                    return Err(perr("expected `N<n>:<p>x<q>:<R|C>:seed<s>`"));
                };
                EnsembleSpec {
                    kind,
                    n: parse_prefixed(n, 'N', text)?,
                    shape: parse_shape(shape, text)?,
                    field: FieldTag::parse(field)?,
                    seed: parse_seed(seed, text)?,
                }
            }
            _ => {
                let [n, d, seed] = rest else {
                    return Err(perr("expected `N<n>:<d>:seed<s>`"));
                };
                let d = parse_usize(d, text)?;
                EnsembleSpec {
                    kind,
                    n: parse_prefixed(n, 'N', text)?,
                    shape: (d, d),
                    field: if kind == EnsembleKind::RankOneHerm { FieldTag::Complex } else { FieldTag::Real },
                    seed: parse_seed(seed, text)?,
                }
            }
        };
        spec.validate()?;
        Ok(spec)
    }
}

fn parse_seed(text: &str, whole: &str) -> Result<u64> {
    text.strip_prefix("seed")
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Parse {
            text: whole.to_string(),
            reason: format!("expected `seed<u64>`, found `{text}`"),
        })
}

/// The measurement variety `V` each `A_j` is drawn from.
pub fn measurement_variety_of(spec: &EnsembleSpec) -> Result<VarietySpec> {
    spec.validate()?;
    let (p, q) = spec.shape;
    match spec.kind {
        EnsembleKind::Gaussian => VarietySpec::full_space(p, q, spec.field),
        EnsembleKind::LowRankMeas { s } => VarietySpec::low_rank(p, q, s, spec.field),
        EnsembleKind::OrthogonalMeas => VarietySpec::orthogonal(p),
        EnsembleKind::ProjectionMeas { s } => VarietySpec::projection(p, s),
        EnsembleKind::RankOneSym => VarietySpec::symmetric(p, 1, FieldTag::Real),
        EnsembleKind::RankOneHerm => VarietySpec::hermitian(p, 1),
    }
}

/// A drawn ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementEnsemble {
    pub spec: EnsembleSpec,
    pub matrices: Vec<DenseMatrix>,
    /// Generating vectors `x_j` for the rank-one kinds.
    pub vectors: Option<Vec<Vec<C64>>>,
    pub measurement_scalar_field: FieldTag,
}

fn draw_one(spec: &EnsembleSpec, variety: &VarietySpec, j: usize) -> Result<(DenseMatrix, Option<Vec<C64>>)> {
    let mut rng = SeedStream::new(spec.seed).child(j as u64).rng();
    let (p, _) = spec.shape;
    match spec.kind {
        EnsembleKind::RankOneSym | EnsembleKind::RankOneHerm => {
            let x = gaussian_vector(&mut rng, p, spec.field);
            let a = &x * x.adjoint();
            let m = DenseMatrix::from_nalgebra(spec.field, (&a + a.adjoint()) * C64::new(0.5, 0.0));
            Ok((m, Some(x.iter().copied().collect())))
        }
        _ => Ok((sample_with(variety, &mut rng)?, None)),
    }
}

fn sample_with<R: Rng>(variety: &VarietySpec, rng: &mut R) -> Result<DenseMatrix> {
    sample_point(variety, rng)
}

/// Draws the ensemble described by `spec`.
pub fn generate(spec: &EnsembleSpec) -> Result<MeasurementEnsemble> {
    spec.validate()?;
    let variety = measurement_variety_of(spec)?;
    let drawn: Vec<(DenseMatrix, Option<Vec<C64>>)> = (0..spec.n)
        .into_par_iter()
        .map(|j| draw_one(spec, &variety, j))
        .collect::<Result<_>>()?;
    let mut matrices = Vec::with_capacity(spec.n);
    let mut vectors = Vec::new();
    for (m, x) in drawn {
        matrices.push(m);
        if let Some(x) = x {
            vectors.push(x);
        }
    }
    Ok(MeasurementEnsemble {
        spec: *spec,
        matrices,
        vectors: spec.kind.is_rank_one().then_some(vectors),
        measurement_scalar_field: spec.measurement_scalar_field(),
    })
}

impl MeasurementEnsemble {
    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }

    pub fn field(&self) -> FieldTag {
        self.spec.field
    }

    pub fn shape(&self) -> (usize, usize) {
        self.spec.shape
    }

    /// The first `n` measurements.
    pub fn prefix(&self, n: usize) -> MeasurementEnsemble {
        let n = n.min(self.len());
        MeasurementEnsemble {
            spec: self.spec.with_n(n),
            matrices: self.matrices[..n].to_vec(),
            vectors: self.vectors.as_ref().map(|v| v[..n].to_vec()),
            measurement_scalar_field: self.measurement_scalar_field,
        }
    }

    /// Whether values are `x_j^* P x_j` (real) rather than the plain pairing.
    pub fn is_hermitian_quadratic(&self) -> bool {
        self.spec.kind == EnsembleKind::RankOneHerm
    }

    fn check_operand(&self, p: &DenseMatrix) -> Result<()> {
        if p.shape() != self.shape() {
            return Err(Error::ShapeMismatch { expected: self.shape(), found: p.shape() });
        }
        if p.field() != self.field() {
            return Err(Error::FieldMismatch { left: self.field(), right: p.field() });
        }
        Ok(())
    }

    /// Measurement values of a raw matrix, skipping the operand checks.
    ///
    /// The Hermitian quadratic kind returns the real part of `x^* M x`; every
    /// other kind returns the plain pairing.
    pub(crate) fn measure_raw(&self, m: &DMatrix<C64>) -> Vec<C64> {
        match (&self.vectors, self.is_hermitian_quadratic()) {
            (Some(xs), true) => xs
                .iter()
                .map(|x| {
                    let mut acc = C64::new(0.0, 0.0);
                    for (i, xi) in x.iter().enumerate() {
                        let mut row = C64::new(0.0, 0.0);
                        for (j, xj) in x.iter().enumerate() {
                            row += m[(i, j)] * xj;
                        }
                        acc += xi.conj() * row;
                    }
                    C64::new(acc.re, 0.0)
                })
                .collect(),
            _ => self
                .matrices
                .iter()
                .map(|a| {
                    let v = trace_inner_unchecked(a.as_nalgebra(), m);
                    if self.measurement_scalar_field == FieldTag::Real {
                        C64::new(v.re, 0.0)
                    } else {
                        v
                    }
                })
                .collect(),
        }
    }

    /// Validates an ensemble read from outside: count, shapes, fields and
    /// membership of every matrix.
    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        if self.matrices.len() != self.spec.n {
            return Err(Error::InvalidEnsemble(format!(
                "expected {} matrices, found {}",
                self.spec.n,
                self.matrices.len()
            )));
        }
        if self.measurement_scalar_field != self.spec.measurement_scalar_field() {
            return Err(Error::InvalidEnsemble("measurement field does not match kind".into()));
        }
        let variety = measurement_variety_of(&self.spec)?;
        for (j, a) in self.matrices.iter().enumerate() {
            self.check_operand(a)?;
            let res = membership_residual(&variety, a)?;
            if res > ENSEMBLE_MEMBERSHIP_TOL * a.frobenius_norm().max(1.0) {
                return Err(Error::InvalidEnsemble(format!(
                    "matrix {j} is off its measurement variety (residual {res:.3e})"
                )));
            }
        }
        match (&self.vectors, self.spec.kind.is_rank_one()) {
            (Some(xs), true) => {
                if xs.len() != self.matrices.len() {
                    return Err(Error::InvalidEnsemble("vector count mismatch".into()));
                }
                for (x, a) in xs.iter().zip(&self.matrices) {
                    let xv = nalgebra::DVector::from_column_slice(x);
                    let outer = &xv * xv.adjoint();
                    if x.len() != a.rows() || (outer - a.as_nalgebra()).norm() > 1e-9 * a.frobenius_norm().max(1.0) {
                        return Err(Error::InvalidEnsemble("vector does not generate its matrix".into()));
                    }
                }
                Ok(())
            }
            (None, false) => Ok(()),
            _ => Err(Error::InvalidEnsemble("generating vectors present iff kind is rank-one".into())),
        }
    }
}

/// Applies the measurement map to `p`.
///
/// For [`EnsembleKind::RankOneHerm`] the operand must be Hermitian (deviation
/// at most `1e−10 · max(1, ‖P‖_F)`) and value `j` is the real part of
/// `x_j^* P x_j`. All other kinds use `Tr(A_j^T P)`.
pub fn apply_measurement_map(ensemble: &MeasurementEnsemble, p: &DenseMatrix) -> Result<MeasurementVector> {
    ensemble.check_operand(p)?;
    if ensemble.is_hermitian_quadratic() {
        let dev = p.hermitian_deviation();
        if dev > HERMITIAN_TOL * p.frobenius_norm().max(1.0) {
            return Err(Error::NotHermitian { deviation: dev });
        }
    }
    Ok(MeasurementVector {
        values: ensemble.measure_raw(p.as_nalgebra()),
        field: ensemble.measurement_scalar_field,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleDocument {
    pub schema: u32,
    pub spec: String,
    pub kind: String,
    pub n: usize,
    pub rows: usize,
    pub cols: usize,
    pub field: FieldTag,
    pub seed: u64,
    pub measurement_field: FieldTag,
    pub matrices: Vec<MatrixJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vectors: Option<Vec<Vec<[f64; 2]>>>,
}

impl From<&MeasurementEnsemble> for EnsembleDocument {
    fn from(e: &MeasurementEnsemble) -> Self {
        EnsembleDocument {
            schema: SCHEMA_VERSION,
            spec: e.spec.to_string(),
            kind: e.spec.kind.to_string(),
            n: e.spec.n,
            rows: e.spec.shape.0,
            cols: e.spec.shape.1,
            field: e.spec.field,
            seed: e.spec.seed,
            measurement_field: e.measurement_scalar_field,
            matrices: e.matrices.iter().map(MatrixJson::from).collect(),
            vectors: e
                .vectors
                .as_ref()
                .map(|xs| xs.iter().map(|x| vector_to_json(x)).collect()),
        }
    }
}

impl TryFrom<EnsembleDocument> for MeasurementEnsemble {
    type Error = Error;

    fn try_from(doc: EnsembleDocument) -> Result<Self> {
        if doc.schema != SCHEMA_VERSION {
            return Err(Error::InvalidEnsemble(format!("unsupported schema {}", doc.schema)));
        }
        let kind: EnsembleKind = doc.kind.parse()?;
        let spec = EnsembleSpec::new(kind, doc.n, (doc.rows, doc.cols), doc.field, doc.seed)?;
        let matrices = doc
            .matrices
            .into_iter()
            .map(DenseMatrix::try_from)
            .collect::<Result<Vec<_>>>()?;
        let e = MeasurementEnsemble {
            spec,
            matrices,
            vectors: doc
                .vectors
                .map(|xs| xs.iter().map(|x| vector_from_json(x)).collect()),
            measurement_scalar_field: doc.measurement_field,
        };
        e.validate()?;
        Ok(e)
    }
}

impl MeasurementEnsemble {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&EnsembleDocument::from(self)).expect("ensemble serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: EnsembleDocument =
            serde_json::from_str(text).map_err(|e| Error::InvalidEnsemble(e.to_string()))?;
        doc.try_into()
    }
}
