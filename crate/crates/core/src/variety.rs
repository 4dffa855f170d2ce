//! Matrix varieties: descriptors, dimension counts, sampling and tangent spaces.
//!
//! | kind | points | dimension | counted over |
//! |------|--------|-----------|--------------|
//! | `LowRank(p, q, r)` | `p×q`, rank ≤ r | `(p+q)r − r²` | the spec's field |
//! | `Symmetric(p, r)` | `X = X^T`, rank ≤ r | `pr − r(r−1)/2` | the spec's field |
//! | `Hermitian(p, r)` | `X = X^*`, rank ≤ r | `2pr − r²` | ℝ |
//! | `Orthogonal(d)` | `QQ^T = I` | `d(d−1)/2` | ℝ |
//! | `Projection(d, r)` | `P² = P = P^T`, tr P = r | `r(d−r)` | ℝ |
//! | `RankOnePSD(p)` | `xx^T` / `xx^*` | `p` / `2p − 1` | ℝ |
//! | `FullSpace(p, q)` | everything | `pq` | the spec's field |

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linalg::{
    self, column_rank, gaussian_matrix, gaussian_scalar, gaussian_vector, haar_orthogonal,
    orthonormal_complement, pivoted_select, rank_tolerance, svd_in, to_complex,
};
use crate::model::{realify, DenseMatrix, FieldTag, C64};

/// Relative membership residual a point must satisfy before tangent spaces
/// are computed at it.
pub const MEMBERSHIP_TOL: f64 = 1e-8;

/// Relative cutoff used when pruning dependent commutator directions.
const PRUNE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VarietyKind {
    LowRank { p: usize, q: usize, r: usize },
    Symmetric { p: usize, r: usize },
    Hermitian { p: usize, r: usize },
    Orthogonal { d: usize },
    Projection { d: usize, r: usize },
    RankOnePSD { p: usize },
    FullSpace { p: usize, q: usize },
}

/// A matrix variety together with the field its matrices live over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct VarietySpec {
    pub kind: VarietyKind,
    pub field: FieldTag,
}

impl VarietySpec {
    pub fn low_rank(p: usize, q: usize, r: usize, field: FieldTag) -> Result<Self> {
        VarietySpec { kind: VarietyKind::LowRank { p, q, r }, field }.validated()
    }

    pub fn symmetric(p: usize, r: usize, field: FieldTag) -> Result<Self> {
        VarietySpec { kind: VarietyKind::Symmetric { p, r }, field }.validated()
    }

    pub fn hermitian(p: usize, r: usize) -> Result<Self> {
        VarietySpec { kind: VarietyKind::Hermitian { p, r }, field: FieldTag::Complex }.validated()
    }

    pub fn orthogonal(d: usize) -> Result<Self> {
        VarietySpec { kind: VarietyKind::Orthogonal { d }, field: FieldTag::Real }.validated()
    }

    pub fn projection(d: usize, r: usize) -> Result<Self> {
        VarietySpec { kind: VarietyKind::Projection { d, r }, field: FieldTag::Real }.validated()
    }

    pub fn rank_one_psd(p: usize, field: FieldTag) -> Result<Self> {
        VarietySpec { kind: VarietyKind::RankOnePSD { p }, field }.validated()
    }

    pub fn full_space(p: usize, q: usize, field: FieldTag) -> Result<Self> {
        VarietySpec { kind: VarietyKind::FullSpace { p, q }, field }.validated()
    }

    /// Checks the size and field constraints of the kind.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidVariety(msg));
        match self.kind {
            VarietyKind::LowRank { p, q, r } => {
                if p == 0 || q == 0 {
                    return bad(format!("sizes must be positive, got {p}x{q}"));
                }
                if r == 0 || r > p.min(q) {
                    return bad(format!("rank {r} outside 1..={}", p.min(q)));
                }
            }
            VarietyKind::Symmetric { p, r } | VarietyKind::Hermitian { p, r } => {
                if p == 0 {
                    return bad("size must be positive".into());
                }
                if r == 0 || r > p {
                    return bad(format!("rank {r} outside 1..={p}"));
                }
            }
            VarietyKind::Orthogonal { d } => {
                if d == 0 {
                    return bad("size must be positive".into());
                }
            }
            VarietyKind::Projection { d, r } => {
                if d < 2 || r == 0 || r >= d {
                    return bad(format!("projection rank {r} outside 1..={}", d.saturating_sub(1)));
                }
            }
            VarietyKind::RankOnePSD { p } => {
                if p == 0 {
                    return bad("size must be positive".into());
                }
            }
            VarietyKind::FullSpace { p, q } => {
                if p == 0 || q == 0 {
                    return bad(format!("sizes must be positive, got {p}x{q}"));
                }
            }
        }
        match (self.kind, self.field) {
            (VarietyKind::Hermitian { .. }, FieldTag::Real) => {
                bad("Hermitian varieties live in complex matrix space".into())
            }
            (VarietyKind::Orthogonal { .. } | VarietyKind::Projection { .. }, FieldTag::Complex) => {
                bad("orthogonal and projection varieties are real".into())
            }
            _ => Ok(()),
        }
    }

    fn validated(self) -> Result<Self> {
        self.validate().map(|_| self)
    }

    pub fn shape(&self) -> (usize, usize) {
        match self.kind {
            VarietyKind::LowRank { p, q, .. } | VarietyKind::FullSpace { p, q } => (p, q),
            VarietyKind::Symmetric { p, .. }
            | VarietyKind::Hermitian { p, .. }
            | VarietyKind::RankOnePSD { p } => (p, p),
            VarietyKind::Orthogonal { d } | VarietyKind::Projection { d, .. } => (d, d),
        }
    }

    /// The field in which [`variety_dim`] counts.
    pub fn counting_field(&self) -> FieldTag {
        match self.kind {
            VarietyKind::LowRank { .. }
            | VarietyKind::Symmetric { .. }
            | VarietyKind::FullSpace { .. } => self.field,
            _ => FieldTag::Real,
        }
    }

    /// The rank bound of a bounded-rank kind.
    pub fn rank_bound(&self) -> Option<usize> {
        match self.kind {
            VarietyKind::LowRank { r, .. }
            | VarietyKind::Symmetric { r, .. }
            | VarietyKind::Hermitian { r, .. } => Some(r),
            VarietyKind::RankOnePSD { .. } => Some(1),
            VarietyKind::FullSpace { p, q } => Some(p.min(q)),
            VarietyKind::Orthogonal { .. } | VarietyKind::Projection { .. } => None,
        }
    }

    /// `variety_dim` expressed in real units.
    pub fn real_dim(&self) -> Result<usize> {
        Ok(variety_dim(self)? * self.counting_field().real_width())
    }
}

impl fmt::Display for VarietySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let fl = self.field.letter();
        match self.kind {
            VarietyKind::LowRank { p, q, r } => write!(f, "lowrank:{p}x{q}:r{r}:{fl}"),
            VarietyKind::Symmetric { p, r } => write!(f, "sym:{p}:r{r}:{fl}"),
            VarietyKind::Hermitian { p, r } => write!(f, "herm:{p}:r{r}"),
            VarietyKind::Orthogonal { d } => write!(f, "orth:{d}"),
            VarietyKind::Projection { d, r } => write!(f, "proj:{d}:r{r}"),
            VarietyKind::RankOnePSD { p } => write!(f, "rank1psd:{p}:{fl}"),
            VarietyKind::FullSpace { p, q } => write!(f, "full:{p}x{q}:{fl}"),
        }
    }
}

pub(crate) fn parse_usize(text: &str, whole: &str) -> Result<usize> {
    text.parse().map_err(|_| Error::Parse {
        text: whole.to_string(),
        reason: format!("`{text}` is not a nonnegative integer"),
    })
}

pub(crate) fn parse_prefixed(text: &str, prefix: char, whole: &str) -> Result<usize> {
    match text.strip_prefix(prefix) {
        Some(rest) => parse_usize(rest, whole),
        None => Err(Error::Parse {
            text: whole.to_string(),
            reason: format!("expected `{prefix}<n>`, found `{text}`"),
        }),
    }
}

pub(crate) fn parse_shape(text: &str, whole: &str) -> Result<(usize, usize)> {
    let (a, b) = text.split_once('x').ok_or_else(|| Error::Parse {
        text: whole.to_string(),
        reason: format!("expected `<p>x<q>`, found `{text}`"),
    })?;
    Ok((parse_usize(a, whole)?, parse_usize(b, whole)?))
}

impl FromStr for VarietySpec {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let parts: Vec<&str> = text.trim().split(':').collect();
        let perr = |reason: &str| Error::Parse {
            text: text.to_string(),
            reason: reason.to_string(),
        };
        let field_at = |i: usize| -> Result<FieldTag> {
            parts.get(i).map_or(Ok(FieldTag::Real), |s| FieldTag::parse(s))
        };
        let spec = match (parts[0], parts.len()) {
            ("lowrank", 3 | 4) => {
                let (p, q) = parse_shape(parts[1], text)?;
                let r = parse_prefixed(parts[2], 'r', text)?;
                VarietySpec { kind: VarietyKind::LowRank { p, q, r }, field: field_at(3)? }
            }
            ("sym", 3 | 4) => {
                let p = parse_usize(parts[1], text)?;
                let r = parse_prefixed(parts[2], 'r', text)?;
                VarietySpec { kind: VarietyKind::Symmetric { p, r }, field: field_at(3)? }
            }
            ("herm", 3) => {
                let p = parse_usize(parts[1], text)?;
                let r = parse_prefixed(parts[2], 'r', text)?;
                VarietySpec { kind: VarietyKind::Hermitian { p, r }, field: FieldTag::Complex }
            }
            ("orth", 2) => VarietySpec {
                kind: VarietyKind::Orthogonal { d: parse_usize(parts[1], text)? },
                field: FieldTag::Real,
            },
            ("proj", 3) => VarietySpec {
                kind: VarietyKind::Projection {
                    d: parse_usize(parts[1], text)?,
                    r: parse_prefixed(parts[2], 'r', text)?,
                },
                field: FieldTag::Real,
            },
            ("rank1psd", 2 | 3) => VarietySpec {
                kind: VarietyKind::RankOnePSD { p: parse_usize(parts[1], text)? },
                field: field_at(2)?,
            },
            ("full", 2 | 3) => {
                let (p, q) = parse_shape(parts[1], text)?;
                VarietySpec { kind: VarietyKind::FullSpace { p, q }, field: field_at(2)? }
            }
            _ => return Err(perr("unknown variety form")),
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl Serialize for VarietySpec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for VarietySpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Dimension of the variety, counted in [`VarietySpec::counting_field`].
pub fn variety_dim(spec: &VarietySpec) -> Result<usize> {
    spec.validate()?;
    Ok(match spec.kind {
        VarietyKind::LowRank { p, q, r } => (p + q) * r - r * r,
        VarietyKind::Symmetric { p, r } => p * r - r * (r - 1) / 2,
        VarietyKind::Hermitian { p, r } => 2 * p * r - r * r,
        VarietyKind::Orthogonal { d } => d * (d - 1) / 2,
        VarietyKind::Projection { d, r } => r * (d - r),
        VarietyKind::RankOnePSD { p } => match spec.field {
            FieldTag::Real => p,
            FieldTag::Complex => 2 * p - 1,
        },
        VarietyKind::FullSpace { p, q } => p * q,
    })
}

/// Dimension of the linear span the variety lives in, in the same units as
/// [`variety_dim`].
pub fn ambient_dim(spec: &VarietySpec) -> Result<usize> {
    spec.validate()?;
    Ok(match spec.kind {
        VarietyKind::LowRank { p, q, .. } | VarietyKind::FullSpace { p, q } => p * q,
        VarietyKind::Symmetric { p, .. } => p * (p + 1) / 2,
        VarietyKind::Hermitian { p, .. } => p * p,
        VarietyKind::Orthogonal { d } => d * d,
        VarietyKind::Projection { d, .. } => d * (d + 1) / 2,
        VarietyKind::RankOnePSD { p } => match spec.field {
            FieldTag::Real => p * (p + 1) / 2,
            FieldTag::Complex => p * p,
        },
    })
}

/// The bounded-rank variety containing all differences `X − Y` of points.
pub fn delta_spec(spec: &VarietySpec) -> Result<VarietySpec> {
    spec.validate()?;
    let kind = match spec.kind {
        VarietyKind::LowRank { p, q, r } => VarietyKind::LowRank { p, q, r: (2 * r).min(p.min(q)) },
        VarietyKind::Symmetric { p, r } => VarietyKind::Symmetric { p, r: (2 * r).min(p) },
        VarietyKind::Hermitian { p, r } => VarietyKind::Hermitian { p, r: (2 * r).min(p) },
        VarietyKind::RankOnePSD { p } => match spec.field {
            FieldTag::Real => VarietyKind::Symmetric { p, r: 2.min(p) },
            FieldTag::Complex => VarietyKind::Hermitian { p, r: 2.min(p) },
        },
        VarietyKind::FullSpace { .. } => spec.kind,
        VarietyKind::Orthogonal { .. } | VarietyKind::Projection { .. } => {
            return Err(Error::Unsupported(format!(
                "differences of `{spec}` do not form a bounded-rank variety"
            )))
        }
    };
    Ok(VarietySpec { kind, field: spec.field })
}

/// True when the difference set fills the ambient bounded-rank cap, i.e. `2r`
/// exceeds the largest legal rank.
pub fn delta_saturates(spec: &VarietySpec) -> bool {
    match spec.kind {
        VarietyKind::LowRank { p, q, r } => 2 * r > p.min(q),
        VarietyKind::Symmetric { p, r } | VarietyKind::Hermitian { p, r } => 2 * r > p,
        VarietyKind::RankOnePSD { p } => 2 > p,
        _ => false,
    }
}

fn symmetrize(m: &DMatrix<C64>) -> DMatrix<C64> {
    (m + m.transpose()) * C64::new(0.5, 0.0)
}

fn hermitize(m: &DMatrix<C64>) -> DMatrix<C64> {
    (m + m.adjoint()) * C64::new(0.5, 0.0)
}

/// Random symmetric (or Hermitian) core with Gaussian entries.
fn gaussian_core<R: Rng + ?Sized>(rng: &mut R, r: usize, field: FieldTag, hermitian: bool) -> DMatrix<C64> {
    let mut c = DMatrix::<C64>::zeros(r, r);
    for i in 0..r {
        for j in i..r {
            let z = if i == j && hermitian {
                gaussian_scalar(rng, FieldTag::Real)
            } else {
                gaussian_scalar(rng, field)
            };
            c[(i, j)] = z;
            c[(j, i)] = if hermitian { z.conj() } else { z };
        }
    }
    c
}

/// Draws a point on the variety from an absolutely continuous distribution.
pub fn sample_point<R: Rng + ?Sized>(spec: &VarietySpec, rng: &mut R) -> Result<DenseMatrix> {
    spec.validate()?;
    let f = spec.field;
    let data = match spec.kind {
        VarietyKind::LowRank { p, q, r } => {
            let g = gaussian_matrix(rng, p, r, f);
            let h = gaussian_matrix(rng, q, r, f);
            g * h.transpose()
        }
        VarietyKind::Symmetric { p, r } => {
            let y = gaussian_matrix(rng, p, r, f);
            let c = gaussian_core(rng, r, f, false);
            symmetrize(&(&y * c * y.transpose()))
        }
        VarietyKind::Hermitian { p, r } => {
            let y = gaussian_matrix(rng, p, r, FieldTag::Complex);
            let c = gaussian_core(rng, r, FieldTag::Complex, true);
            hermitize(&(&y * c * y.adjoint()))
        }
        VarietyKind::Orthogonal { d } => to_complex(&haar_orthogonal(rng, d)),
        VarietyKind::Projection { d, r } => {
            let q = haar_orthogonal(rng, d);
            let u = q.columns(0, r);
            to_complex(&(u * u.transpose()))
        }
        VarietyKind::RankOnePSD { p } => {
            let x = gaussian_vector(rng, p, f);
            hermitize(&(&x * x.adjoint()))
        }
        VarietyKind::FullSpace { p, q } => gaussian_matrix(rng, p, q, f),
    };
    Ok(DenseMatrix::from_nalgebra(f, data))
}

fn check_point(spec: &VarietySpec, point: &DenseMatrix) -> Result<()> {
    spec.validate()?;
    if point.shape() != spec.shape() {
        return Err(Error::ShapeMismatch { expected: spec.shape(), found: point.shape() });
    }
    if point.field() != spec.field {
        return Err(Error::FieldMismatch { left: spec.field, right: point.field() });
    }
    Ok(())
}

/// How far `point` is from satisfying the defining equations of the variety.
///
/// Rank conditions and symmetry are measured relative to `‖X‖_F`; the
/// orthogonality and projection equations are absolute.
pub fn membership_residual(spec: &VarietySpec, point: &DenseMatrix) -> Result<f64> {
    check_point(spec, point)?;
    let x = point.as_nalgebra();
    let norm = x.norm();
    let rel = |v: f64| if norm > 0.0 { v / norm } else { v };
    let rank_part = |r: usize| rel(linalg::rank_truncation_residual(x, r));
    Ok(match spec.kind {
        VarietyKind::LowRank { r, .. } => rank_part(r),
        VarietyKind::Symmetric { r, .. } => rel(point.symmetric_deviation()) + rank_part(r),
        VarietyKind::Hermitian { r, .. } => rel(point.hermitian_deviation()) + rank_part(r),
        VarietyKind::Orthogonal { d } => {
            (x * x.transpose() - DMatrix::<C64>::identity(d, d)).norm()
        }
        VarietyKind::Projection { r, .. } => {
            (x * x - x).norm() + point.symmetric_deviation() + (x.trace().re - r as f64).abs()
        }
        VarietyKind::RankOnePSD { .. } => {
            let sv = linalg::singular_values(x);
            let top = sv.first().copied().unwrap_or(0.0);
            // For a rank-one PSD matrix the trace equals the top singular value.
            let sign = if top > 0.0 { (top - x.trace().re).abs() / top } else { 0.0 };
            rel(point.hermitian_deviation()) + rank_part(1) + sign
        }
        VarietyKind::FullSpace { .. } => 0.0,
    })
}

/// `σ_r / σ₁` at a bounded-rank point; `None` for kinds without a rank stratum.
pub fn stratum_ratio(spec: &VarietySpec, point: &DenseMatrix) -> Option<f64> {
    let r = match spec.kind {
        VarietyKind::Orthogonal { .. } | VarietyKind::Projection { .. } | VarietyKind::FullSpace { .. } => {
            return None
        }
        _ => spec.rank_bound()?,
    };
    let sv = linalg::singular_values(point.as_nalgebra());
    let top = sv.first().copied().unwrap_or(0.0);
    if top == 0.0 {
        return Some(0.0);
    }
    Some(sv.get(r - 1).copied().unwrap_or(0.0) / top)
}

/// Distance from an arbitrary matrix to the variety, via the natural nearest-
/// point map of each kind (rank truncation, polar factor, spectral projector).
pub fn distance_to_variety(spec: &VarietySpec, m: &DMatrix<C64>) -> f64 {
    match spec.kind {
        VarietyKind::LowRank { r, .. } => linalg::rank_truncation_residual(m, r),
        VarietyKind::Symmetric { r, .. } => {
            let sym = symmetrize(m);
            (m - &sym).norm() + linalg::rank_truncation_residual(&sym, r)
        }
        VarietyKind::Hermitian { r, .. } => {
            let h = hermitize(m);
            (m - &h).norm() + linalg::rank_truncation_residual(&h, r)
        }
        VarietyKind::Orthogonal { .. } => linalg::singular_values(m)
            .iter()
            .map(|s| (s - 1.0) * (s - 1.0))
            .sum::<f64>()
            .sqrt(),
        VarietyKind::Projection { d, r } => {
            let re = m.map(|z| z.re);
            let sym = (&re + re.transpose()) * 0.5;
            let eig = SymmetricEigen::new(sym.clone());
            let mut order: Vec<usize> = (0..d).collect();
            order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
            let mut proj = DMatrix::<f64>::zeros(d, d);
            for &k in order.iter().take(r) {
                let v = eig.eigenvectors.column(k);
                proj += v * v.transpose();
            }
            (&re - sym).norm() + (&re - proj).norm() + m.map(|z| z.im).norm()
        }
        VarietyKind::RankOnePSD { .. } => {
            let h = hermitize(m);
            // Eigenvalues of a Hermitian matrix: singular values signed by the
            // Rayleigh quotient of the matching singular vector.
            let s = linalg::svd(&h);
            let mut vals: Vec<f64> = (0..s.singular_values.len())
                .map(|k| {
                    let u = s.u.column(k);
                    let rq = (u.adjoint() * &h * u)[(0, 0)].re;
                    s.singular_values[k] * rq.signum()
                })
                .collect();
            vals.sort_by(|a, b| b.total_cmp(a));
            let tail: f64 = vals.iter().skip(1).map(|v| v * v).sum();
            let head = vals.first().map_or(0.0, |v| v.min(0.0).powi(2));
            (m - &h).norm() + (tail + head).sqrt()
        }
        VarietyKind::FullSpace { .. } => 0.0,
    }
}

/// A spanning set of the tangent space of a variety at a smooth point.
#[derive(Debug, Clone)]
pub struct TangentBasis {
    pub base_point: DenseMatrix,
    pub basis: Vec<DenseMatrix>,
    /// Scalars the basis is a basis over.
    pub counting_field: FieldTag,
}

impl TangentBasis {
    pub fn len(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }

    /// Real coordinate vectors spanning the tangent space over ℝ. A basis over
    /// ℂ contributes each `T` and `iT`.
    pub fn realified_columns(&self) -> Vec<Vec<f64>> {
        let mut cols = Vec::with_capacity(self.basis.len() * self.counting_field.real_width());
        for t in &self.basis {
            cols.push(realify(t));
            if self.counting_field == FieldTag::Complex {
                let it = DenseMatrix::from_nalgebra(
                    FieldTag::Complex,
                    t.as_nalgebra().map(|z| z * C64::new(0.0, 1.0)),
                );
                cols.push(realify(&it));
            }
        }
        cols
    }

    /// Numerical rank over ℝ of the realified basis.
    pub fn real_rank(&self) -> usize {
        column_rank(&self.realified_columns()).0
    }
}

fn outer(u: &DMatrix<C64>, a: usize, vt: &DMatrix<C64>, b: usize) -> DMatrix<C64> {
    u.column(a) * vt.row(b)
}

/// Tangent space of the variety at `point`, which must lie on its smooth
/// top stratum.
pub fn tangent_basis(spec: &VarietySpec, point: &DenseMatrix) -> Result<TangentBasis> {
    let residual = membership_residual(spec, point)?;
    if residual > MEMBERSHIP_TOL {
        return Err(Error::OffVariety { residual });
    }
    let (p, q) = spec.shape();
    if let Some(ratio) = stratum_ratio(spec, point) {
        if ratio <= rank_tolerance(p, q) {
            return Err(Error::SingularStratum { ratio });
        }
    }
    let f = spec.field;
    let x = point.as_nalgebra();
    let i = C64::new(0.0, 1.0);
    let wrap = |m: DMatrix<C64>| DenseMatrix::from_nalgebra(f, m);
    let mut basis = Vec::new();
    match spec.kind {
        VarietyKind::LowRank { r, .. } => {
            let s = svd_in(x, f);
            let u_r = s.u.columns(0, r).into_owned();
            let u_perp = orthonormal_complement(&u_r);
            let vt_r = s.v_t.rows(0, r).into_owned();
            let vt_perp = orthonormal_complement(&vt_r.transpose()).transpose();
            let u_all = {
                let mut m = DMatrix::<C64>::zeros(p, p);
                m.columns_mut(0, r).copy_from(&u_r);
                m.columns_mut(r, p - r).copy_from(&u_perp);
                m
            };
            for a in 0..p {
                for b in 0..r {
                    basis.push(wrap(outer(&u_all, a, &vt_r, b)));
                }
            }
            for a in 0..r {
                for b in 0..q - r {
                    basis.push(wrap(outer(&u_r, a, &vt_perp, b)));
                }
            }
        }
        VarietyKind::Symmetric { r, .. } | VarietyKind::Hermitian { r, .. } => {
            let hermitian = matches!(spec.kind, VarietyKind::Hermitian { .. });
            let s = svd_in(x, f);
            let u_r = s.u.columns(0, r).into_owned();
            let u_perp = orthonormal_complement(&u_r);
            let tr = |m: &DMatrix<C64>| if hermitian { m.adjoint() } else { m.transpose() };
            let u_r_t = tr(&u_r);
            let half = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
            for a in 0..r {
                for b in a..r {
                    let mut cores = Vec::new();
                    if a == b {
                        cores.push(DMatrix::<C64>::from_fn(r, r, |k, l| {
                            if k == a && l == a { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) }
                        }));
                    } else {
                        let mut sym = DMatrix::<C64>::zeros(r, r);
                        sym[(a, b)] = half;
                        sym[(b, a)] = half;
                        cores.push(sym);
                        if hermitian {
                            let mut skew = DMatrix::<C64>::zeros(r, r);
                            skew[(a, b)] = half * i;
                            skew[(b, a)] = -half * i;
                            cores.push(skew);
                        }
                    }
                    for c in cores {
                        basis.push(wrap(&u_r * c * &u_r_t));
                    }
                }
            }
            let scalars: &[C64] = if hermitian { &[C64::new(1.0, 0.0), i] } else { &[C64::new(1.0, 0.0)] };
            for a in 0..p - r {
                for b in 0..r {
                    for &z in scalars {
                        let piece = u_perp.column(a) * u_r_t.row(b) * z;
                        basis.push(wrap(&piece + tr(&piece)));
                    }
                }
            }
        }
        VarietyKind::Orthogonal { d } => {
            for a in 0..d {
                for b in a + 1..d {
                    let mut s = DMatrix::<C64>::zeros(d, d);
                    s[(a, b)] = C64::new(1.0, 0.0);
                    s[(b, a)] = C64::new(-1.0, 0.0);
                    basis.push(wrap(s * x));
                }
            }
        }
        VarietyKind::Projection { d, .. } => {
            let mut candidates = Vec::new();
            for a in 0..d {
                for b in a + 1..d {
                    let mut s = DMatrix::<C64>::zeros(d, d);
                    s[(a, b)] = C64::new(1.0, 0.0);
                    s[(b, a)] = C64::new(-1.0, 0.0);
                    candidates.push(wrap(&s * x - x * &s));
                }
            }
            basis = prune(candidates);
        }
        VarietyKind::RankOnePSD { .. } => {
            let s = svd_in(x, f);
            let xvec = s.u.column(0) * C64::new(s.singular_values[0].sqrt(), 0.0);
            let mut candidates = Vec::new();
            let scalars: &[C64] = match f {
                FieldTag::Real => &[C64::new(1.0, 0.0)],
                FieldTag::Complex => &[C64::new(1.0, 0.0), i],
            };
            for a in 0..p {
                for &z in scalars {
                    let mut e = nalgebra::DVector::<C64>::zeros(p);
                    e[a] = z;
                    candidates.push(wrap(&e * xvec.adjoint() + &xvec * e.adjoint()));
                }
            }
            basis = prune(candidates);
        }
        VarietyKind::FullSpace { .. } => {
            for a in 0..p {
                for b in 0..q {
                    basis.push(DenseMatrix::unit(p, q, a, b, f));
                }
            }
        }
    }
    let expected = variety_dim(spec)?;
    if basis.len() != expected {
        return Err(Error::Numerical(format!(
            "tangent construction for `{spec}` produced {} directions, expected {expected}",
            basis.len()
        )));
    }
    Ok(TangentBasis {
        base_point: point.clone(),
        basis,
        counting_field: spec.counting_field(),
    })
}

/// Keeps a maximal independent subset (over ℝ) of candidate directions.
fn prune(candidates: Vec<DenseMatrix>) -> Vec<DenseMatrix> {
    let vecs: Vec<Vec<f64>> = candidates.iter().map(realify).collect();
    let mut chosen = pivoted_select(&vecs, PRUNE_TOL);
    chosen.sort_unstable();
    chosen.into_iter().map(|k| candidates[k].clone()).collect()
}
