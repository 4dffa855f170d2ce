//! Dense linear-algebra helpers shared by the geometry and solver modules.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::model::{FieldTag, C64};

/// Safety factor applied to the `max(rows, cols) · ε · σ₁` rank tolerance.
pub const RANK_SAFETY: f64 = 64.0;

/// Relative rank tolerance for a `rows × cols` problem.
pub fn rank_tolerance(rows: usize, cols: usize) -> f64 {
    rows.max(cols) as f64 * f64::EPSILON * RANK_SAFETY
}

/// Thin SVD with singular values sorted in descending order.
pub struct SortedSvd {
    pub u: DMatrix<C64>,
    pub singular_values: Vec<f64>,
    pub v_t: DMatrix<C64>,
}

const JACOBI_MAX_SWEEPS: usize = 80;

/// Thin SVD `m = U Σ V^*` by one-sided (Hestenes) Jacobi rotations.
///
/// Columns of `G = m V` are rotated pairwise until mutually orthogonal; the
/// column norms are then the singular values. Real input stays real: the
/// rotation phases are ±1. Null directions of `U` are completed to an
/// orthonormal set.
pub fn svd(m: &DMatrix<C64>) -> SortedSvd {
    let (rows, cols) = m.shape();
    if rows < cols {
        let t = svd(&m.adjoint());
        return SortedSvd {
            u: t.v_t.adjoint(),
            singular_values: t.singular_values,
            v_t: t.u.adjoint(),
        };
    }
    let mut g = m.clone();
    let mut v = DMatrix::<C64>::identity(cols, cols);
    let real = m.iter().all(|z| z.im == 0.0);
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..cols {
            for q in p + 1..cols {
                let alpha: f64 = g.column(p).iter().map(|z| z.norm_sqr()).sum();
                let beta: f64 = g.column(q).iter().map(|z| z.norm_sqr()).sum();
                let gamma: C64 = g.column(p).iter().zip(g.column(q).iter()).map(|(a, b)| a.conj() * b).sum();
                let mag = gamma.norm();
                if mag == 0.0 || mag <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let phase = if real { C64::new(gamma.re.signum(), 0.0) } else { gamma / mag };
                let zeta = (beta - alpha) / (2.0 * mag);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let w = phase.conj();
                for mat in [&mut g, &mut v] {
                    for i in 0..mat.nrows() {
                        let gp = mat[(i, p)];
                        let gq = mat[(i, q)] * w;
                        mat[(i, p)] = gp * c - gq * s;
                        mat[(i, q)] = (gp * s + gq * c) * phase;
                    }
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let norms: Vec<f64> = (0..cols).map(|k| g.column(k).norm()).collect();
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]));
    let top = norms.iter().copied().fold(0.0, f64::max);
    let mut u = DMatrix::<C64>::zeros(rows, cols);
    let mut filled = 0;
    for (k, &j) in order.iter().enumerate() {
        if norms[j] > top * f64::EPSILON * rows as f64 && norms[j] > 0.0 {
            u.set_column(k, &(g.column(j) / C64::new(norms[j], 0.0)));
            filled = k + 1;
        }
    }
    if filled < cols {
        let comp = orthonormal_complement(&u.columns(0, filled).into_owned());
        for k in filled..cols {
            u.set_column(k, &comp.column(k - filled));
        }
    }
    SortedSvd {
        u,
        singular_values: order.iter().map(|&j| norms[j]).collect(),
        v_t: DMatrix::from_fn(cols, cols, |k, i| v[(i, order[k])].conj()),
    }
}

/// SVD of a matrix known to live over `field`; a real matrix has its
/// imaginary parts dropped so the factors are exactly real.
pub fn svd_in(m: &DMatrix<C64>, field: FieldTag) -> SortedSvd {
    match field {
        FieldTag::Complex => svd(m),
        FieldTag::Real => svd(&m.map(|z| C64::new(z.re, 0.0))),
    }
}

/// Singular values in descending order; empty for an empty matrix.
pub fn singular_values(m: &DMatrix<C64>) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    svd(m).singular_values
}

pub fn singular_values_real(m: &DMatrix<f64>) -> Vec<f64> {
    singular_values(&to_complex(m))
}

/// Number of singular values above `tol_rel · σ₁`, and the absolute cutoff used.
pub fn rank_from_singular_values(sv: &[f64], tol_rel: f64) -> (usize, f64) {
    let Some(&top) = sv.first() else {
        return (0, 0.0);
    };
    if top == 0.0 {
        return (0, 0.0);
    }
    let cutoff = tol_rel * top;
    (sv.iter().filter(|&&s| s > cutoff).count(), cutoff)
}

/// Distance from `m` to the set of matrices of rank at most `r`.
pub fn rank_truncation_residual(m: &DMatrix<C64>, r: usize) -> f64 {
    singular_values(m)
        .iter()
        .skip(r)
        .map(|s| s * s)
        .sum::<f64>()
        .sqrt()
}

/// Orthonormal basis (columns) of the orthogonal complement of the column
/// span of `w`, whose columns must be orthonormal.
///
/// Built by Gram–Schmidt (two passes) on the coordinate vectors, always taking
/// the one with the largest remaining component next.
pub fn orthonormal_complement(w: &DMatrix<C64>) -> DMatrix<C64> {
    let n = w.nrows();
    let k = w.ncols();
    if k >= n {
        return DMatrix::zeros(n, 0);
    }
    let mut basis: Vec<DVector<C64>> = (0..k).map(|j| w.column(j).into_owned()).collect();
    let mut used = vec![false; n];
    while basis.len() < n {
        let mut best: Option<(usize, DVector<C64>, f64)> = None;
        for e in 0..n {
            if used[e] {
                continue;
            }
            let mut x = DVector::<C64>::zeros(n);
            x[e] = C64::new(1.0, 0.0);
            for _ in 0..2 {
                for b in &basis {
                    let d = b.dotc(&x);
                    x -= b * d;
                }
            }
            let nx = x.norm();
            if best.as_ref().is_none_or(|(_, _, bn)| nx > *bn) {
                best = Some((e, x, nx));
            }
        }
        let (e, x, nx) = best.expect("a coordinate vector remains");
        used[e] = true;
        basis.push(x / C64::new(nx, 0.0));
    }
    let mut out = DMatrix::<C64>::zeros(n, n - k);
    for (j, b) in basis[k..].iter().enumerate() {
        out.set_column(j, b);
    }
    out
}

/// Greedy column-pivoted Gram–Schmidt over real vectors.
///
/// Repeatedly picks the remaining vector with the largest residual norm and
/// stops once that norm drops below `rel_tol` times the largest initial norm.
/// Returns the indices of the selected vectors in selection order; ties go to
/// the lowest index.
pub fn pivoted_select(vectors: &[Vec<f64>], rel_tol: f64) -> Vec<usize> {
    let mut residuals: Vec<Vec<f64>> = vectors.to_vec();
    let initial_max = residuals.iter().map(|v| norm(v)).fold(0.0, f64::max);
    let mut chosen = Vec::new();
    if initial_max == 0.0 {
        return chosen;
    }
    let mut active: Vec<bool> = vec![true; vectors.len()];
    loop {
        let mut best: Option<(usize, f64)> = None;
        for (i, v) in residuals.iter().enumerate() {
            if !active[i] {
                continue;
            }
            let n = norm(v);
            if best.is_none_or(|(_, bn)| n > bn) {
                best = Some((i, n));
            }
        }
        let Some((pivot, pn)) = best else { break };
        if pn <= rel_tol * initial_max {
            break;
        }
        active[pivot] = false;
        chosen.push(pivot);
        let q: Vec<f64> = residuals[pivot].iter().map(|x| x / pn).collect();
        for (i, v) in residuals.iter_mut().enumerate() {
            if !active[i] {
                continue;
            }
            let d: f64 = v.iter().zip(&q).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(&q).for_each(|(a, b)| *a -= d * b);
        }
    }
    chosen
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Numerical rank of a set of real vectors (as matrix columns).
pub fn column_rank(columns: &[Vec<f64>]) -> (usize, Vec<f64>, f64) {
    if columns.is_empty() {
        return (0, Vec::new(), 0.0);
    }
    let rows = columns[0].len();
    let m = DMatrix::from_fn(rows, columns.len(), |i, j| columns[j][i]);
    let sv = singular_values_real(&m);
    let (rank, cutoff) = rank_from_singular_values(&sv, rank_tolerance(rows, columns.len()));
    (rank, sv, cutoff)
}

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// A scalar with i.i.d. N(0,1) real part (and imaginary part for ℂ).
pub fn gaussian_scalar<R: Rng + ?Sized>(rng: &mut R, field: FieldTag) -> C64 {
    let re = standard_normal(rng);
    let im = match field {
        FieldTag::Real => 0.0,
        FieldTag::Complex => standard_normal(rng),
    };
    C64::new(re, im)
}

/// Gaussian matrix, entries drawn in row-major order.
pub fn gaussian_matrix<R: Rng + ?Sized>(
    rng: &mut R,
    rows: usize,
    cols: usize,
    field: FieldTag,
) -> DMatrix<C64> {
    let entries: Vec<C64> = (0..rows * cols)
        .map(|_| gaussian_scalar(rng, field))
        .collect();
    DMatrix::from_row_slice(rows, cols, &entries)
}

pub fn gaussian_vector<R: Rng + ?Sized>(rng: &mut R, n: usize, field: FieldTag) -> DVector<C64> {
    DVector::from_iterator(n, (0..n).map(|_| gaussian_scalar(rng, field)))
}

/// Haar-distributed real orthogonal matrix via QR with the R-diagonal sign fix.
pub fn haar_orthogonal<R: Rng + ?Sized>(rng: &mut R, d: usize) -> DMatrix<f64> {
    loop {
        let entries: Vec<f64> = (0..d * d).map(|_| standard_normal(rng)).collect();
        let g = DMatrix::from_row_slice(d, d, &entries);
        let qr = g.qr();
        let r = qr.r();
        if (0..d).any(|i| r[(i, i)] == 0.0) {
            continue;
        }
        let mut q = qr.q();
        for j in 0..d {
            if r[(j, j)] < 0.0 {
                q.column_mut(j).neg_mut();
            }
        }
        return q;
    }
}

pub fn to_complex(m: &DMatrix<f64>) -> DMatrix<C64> {
    m.map(|x| C64::new(x, 0.0))
}
