//! Factored parametrizations of the bounded-rank varieties.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::gaussian_matrix;
use crate::model::{DenseMatrix, FieldTag, C64};
use crate::variety::{VarietyKind, VarietySpec};

const I: C64 = C64::new(0.0, 1.0);

/// Factors of a point: `U V^T`, `Y C Y^T`, `Y C Y^*`, or the matrix itself for
/// the full space.
#[derive(Debug, Clone, PartialEq)]
pub enum Factors {
    LowRank { u: DMatrix<C64>, v: DMatrix<C64> },
    Symmetric { y: DMatrix<C64>, c: DMatrix<C64> },
    Hermitian { y: DMatrix<C64>, c: DMatrix<C64> },
    Full { x: DMatrix<C64> },
}

/// A point of a bounded-rank variety given by its factors.
///
/// The real parameter vector lists factor entries row-major (`re, im` pairs
/// over ℂ), then for the core `C` its upper triangle, with only the real
/// part on a Hermitian diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct FactoredPoint {
    pub field: FieldTag,
    pub factors: Factors,
}

/// Rejects varieties without a factored parametrization.
pub fn check_factorable(spec: &VarietySpec) -> Result<()> {
    spec.validate()?;
    match spec.kind {
        VarietyKind::LowRank { .. }
        | VarietyKind::Symmetric { .. }
        | VarietyKind::Hermitian { .. }
        | VarietyKind::FullSpace { .. } => Ok(()),
        _ => Err(Error::Unsupported(format!("no factored solver for `{spec}`"))),
    }
}

fn symmetric_core<R: Rng + ?Sized>(rng: &mut R, r: usize, field: FieldTag, hermitian: bool) -> DMatrix<C64> {
    let g = gaussian_matrix(rng, r, r, field);
    if hermitian {
        (&g + g.adjoint()) * C64::new(0.5, 0.0)
    } else {
        (&g + g.transpose()) * C64::new(0.5, 0.0)
    }
}

fn push_entries(out: &mut Vec<f64>, m: &DMatrix<C64>, complex: bool) {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)].re);
            if complex {
                out.push(m[(i, j)].im);
            }
        }
    }
}

struct Reader<'a> {
    params: &'a [f64],
    pos: usize,
}

impl Reader<'_> {
    fn next(&mut self) -> f64 {
        let v = self.params[self.pos];
        self.pos += 1;
        v
    }

    fn scalar(&mut self, complex: bool) -> C64 {
        let re = self.next();
        C64::new(re, if complex { self.next() } else { 0.0 })
    }

    fn matrix(&mut self, rows: usize, cols: usize, complex: bool) -> DMatrix<C64> {
        let mut m = DMatrix::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = self.scalar(complex);
            }
        }
        m
    }
}

fn unit(rows: usize, cols: usize, i: usize, j: usize, z: C64) -> DMatrix<C64> {
    let mut m = DMatrix::zeros(rows, cols);
    m[(i, j)] = z;
    m
}

impl FactoredPoint {
    /// Gaussian factors for a point of `spec`.
    pub fn random<R: Rng + ?Sized>(spec: &VarietySpec, rng: &mut R) -> Result<Self> {
        check_factorable(spec)?;
        let f = spec.field;
        let factors = match spec.kind {
            VarietyKind::LowRank { p, q, r } => Factors::LowRank {
                u: gaussian_matrix(rng, p, r, f),
                v: gaussian_matrix(rng, q, r, f),
            },
            VarietyKind::Symmetric { p, r } => Factors::Symmetric {
                y: gaussian_matrix(rng, p, r, f),
                c: symmetric_core(rng, r, f, false),
            },
            VarietyKind::Hermitian { p, r } => Factors::Hermitian {
                y: gaussian_matrix(rng, p, r, FieldTag::Complex),
                c: symmetric_core(rng, r, FieldTag::Complex, true),
            },
            VarietyKind::FullSpace { p, q } => Factors::Full { x: gaussian_matrix(rng, p, q, f) },
            _ => unreachable!("checked above"),
        };
        Ok(FactoredPoint { field: f, factors })
    }

    fn complex(&self) -> bool {
        self.field == FieldTag::Complex
    }

    pub fn params(&self) -> Vec<f64> {
        let cx = self.complex();
        let mut out = Vec::new();
        match &self.factors {
            Factors::LowRank { u, v } => {
                push_entries(&mut out, u, cx);
                push_entries(&mut out, v, cx);
            }
            Factors::Symmetric { y, c } | Factors::Hermitian { y, c } => {
                let herm = matches!(self.factors, Factors::Hermitian { .. });
                push_entries(&mut out, y, cx);
                for a in 0..c.nrows() {
                    for b in a..c.ncols() {
                        out.push(c[(a, b)].re);
                        if cx && !(herm && a == b) {
                            out.push(c[(a, b)].im);
                        }
                    }
                }
            }
            Factors::Full { x } => push_entries(&mut out, x, cx),
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.params().len()
    }

    /// Same factor shapes, new parameter values.
    pub fn with_params(&self, params: &[f64]) -> Result<Self> {
        if params.len() != self.param_count() {
            return Err(Error::ShapeMismatch { expected: (self.param_count(), 1), found: (params.len(), 1) });
        }
        let cx = self.complex();
        let mut rd = Reader { params, pos: 0 };
        let core = |rd: &mut Reader, r: usize, herm: bool| {
            let mut c = DMatrix::<C64>::zeros(r, r);
            for a in 0..r {
                for b in a..r {
                    let z = if herm && a == b { C64::new(rd.next(), 0.0) } else { rd.scalar(cx) };
                    c[(a, b)] = z;
                    c[(b, a)] = if herm { z.conj() } else { z };
                }
            }
            c
        };
        let factors = match &self.factors {
            Factors::LowRank { u, v } => Factors::LowRank {
                u: rd.matrix(u.nrows(), u.ncols(), cx),
                v: rd.matrix(v.nrows(), v.ncols(), cx),
            },
            Factors::Symmetric { y, c } => Factors::Symmetric {
                y: rd.matrix(y.nrows(), y.ncols(), cx),
                c: core(&mut rd, c.nrows(), false),
            },
            Factors::Hermitian { y, c } => Factors::Hermitian {
                y: rd.matrix(y.nrows(), y.ncols(), cx),
                c: core(&mut rd, c.nrows(), true),
            },
            Factors::Full { x } => Factors::Full { x: rd.matrix(x.nrows(), x.ncols(), cx) },
        };
        Ok(FactoredPoint { field: self.field, factors })
    }

    pub(crate) fn assembled_raw(&self) -> DMatrix<C64> {
        let half = C64::new(0.5, 0.0);
        match &self.factors {
            Factors::LowRank { u, v } => u * v.transpose(),
            Factors::Symmetric { y, c } => {
                let m = y * c * y.transpose();
                (&m + m.transpose()) * half
            }
            Factors::Hermitian { y, c } => {
                let m = y * c * y.adjoint();
                (&m + m.adjoint()) * half
            }
            Factors::Full { x } => x.clone(),
        }
    }

    pub fn assembled(&self) -> DenseMatrix {
        DenseMatrix::from_nalgebra(self.field, self.assembled_raw())
    }

    /// Derivative of `assembled()` along each real parameter, in parameter order.
    pub fn derivatives(&self) -> Vec<DMatrix<C64>> {
        let cx = self.complex();
        let phases: &[C64] = if cx { &[C64::new(1.0, 0.0), I] } else { &[C64::new(1.0, 0.0)] };
        let mut out = Vec::with_capacity(self.param_count());
        match &self.factors {
            Factors::LowRank { u, v } => {
                let (p, r) = u.shape();
                let q = v.nrows();
                let vt = v.transpose();
                for i in 0..p {
                    for k in 0..r {
                        for &z in phases {
                            let mut d = DMatrix::zeros(p, q);
                            d.row_mut(i).copy_from(&(vt.row(k) * z));
                            out.push(d);
                        }
                    }
                }
                for j in 0..q {
                    for k in 0..r {
                        for &z in phases {
                            let mut d = DMatrix::zeros(p, q);
                            d.column_mut(j).copy_from(&(u.column(k) * z));
                            out.push(d);
                        }
                    }
                }
            }
            Factors::Symmetric { y, c } => {
                let (p, r) = y.shape();
                let cyt = c * y.transpose();
                for i in 0..p {
                    for k in 0..r {
                        for &z in phases {
                            let mut d = DMatrix::zeros(p, p);
                            d.row_mut(i).copy_from(&(cyt.row(k) * z));
                            out.push(&d + d.transpose());
                        }
                    }
                }
                for a in 0..r {
                    for b in a..r {
                        for &z in phases {
                            let mut dc = unit(r, r, a, b, z);
                            dc[(b, a)] = z;
                            out.push(y * dc * y.transpose());
                        }
                    }
                }
            }
            Factors::Hermitian { y, c } => {
                let (p, r) = y.shape();
                let cya = c * y.adjoint();
                for i in 0..p {
                    for k in 0..r {
                        for &z in phases {
                            let mut d = DMatrix::zeros(p, p);
                            d.row_mut(i).copy_from(&(cya.row(k) * z));
                            out.push(&d + d.adjoint());
                        }
                    }
                }
                for a in 0..r {
                    for b in a..r {
                        let zs: &[C64] = if a == b { &phases[..1] } else { phases };
                        for &z in zs {
                            let mut dc = unit(r, r, a, b, z);
                            dc[(b, a)] = z.conj();
                            out.push(y * dc * y.adjoint());
                        }
                    }
                }
            }
            Factors::Full { x } => {
                let (p, q) = x.shape();
                for i in 0..p {
                    for j in 0..q {
                        for &z in phases {
                            out.push(unit(p, q, i, j, z));
                        }
                    }
                }
            }
        }
        out
    }

    /// Multiplies `assembled()` by `alpha ≥ 0`.
    pub fn rescale(&mut self, alpha: f64) {
        let s = C64::new(alpha.sqrt(), 0.0);
        let a = C64::new(alpha, 0.0);
        match &mut self.factors {
            Factors::LowRank { u, v } => {
                *u *= s;
                *v *= s;
            }
            Factors::Symmetric { c, .. } | Factors::Hermitian { c, .. } => *c *= a,
            Factors::Full { x } => *x *= a,
        }
    }
}

/// Real coordinates of a raw matrix, in the layout of [`crate::model::realify`].
pub(crate) fn vec_real(m: &DMatrix<C64>, field: FieldTag) -> DVector<f64> {
    let w = field.real_width();
    let (rows, cols) = m.shape();
    let mut out = DVector::zeros(rows * cols * w);
    for i in 0..rows {
        for j in 0..cols {
            let k = (i * cols + j) * w;
            out[k] = m[(i, j)].re;
            if w == 2 {
                out[k + 1] = m[(i, j)].im;
            }
        }
    }
    out
}
