//! Field-aware dense matrices and the trace pairing.
//!
//! Scalars are stored as [`Complex64`] (an ordered pair of reals) regardless of
//! the field; a [`DenseMatrix`] tagged [`FieldTag::Real`] always has zero
//! imaginary parts.

use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Tolerance for accepting a matrix as Hermitian, relative to `max(1, ‖P‖_F)`.
pub const HERMITIAN_TOL: f64 = 1e-10;

/// The scalar field a matrix, ensemble or scenario lives over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FieldTag {
    Real,
    Complex,
}

impl FieldTag {
    /// Real coordinates per scalar.
    pub fn real_width(self) -> usize {
        match self {
            FieldTag::Real => 1,
            FieldTag::Complex => 2,
        }
    }

    pub fn letter(self) -> &'static str {
        match self {
            FieldTag::Real => "R",
            FieldTag::Complex => "C",
        }
    }

    pub fn parse(text: &str) -> Result<FieldTag> {
        match text {
            "R" | "r" | "real" => Ok(FieldTag::Real),
            "C" | "c" | "complex" => Ok(FieldTag::Complex),
            _ => Err(Error::Parse {
                text: text.to_string(),
                reason: "field must be R or C".into(),
            }),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FieldTag::Real => "real",
            FieldTag::Complex => "complex",
        }
    }
}

impl fmt::Display for FieldTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.letter())
    }
}

impl Serialize for FieldTag {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.letter())
    }
}

impl<'de> Deserialize<'de> for FieldTag {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        FieldTag::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// A dense `rows × cols` matrix over ℝ or ℂ.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    field: FieldTag,
    data: DMatrix<C64>,
}

impl DenseMatrix {
    /// Builds a matrix from row-major entries.
    pub fn new(rows: usize, cols: usize, entries: Vec<C64>, field: FieldTag) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidEntries(format!(
                "dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if entries.len() != rows * cols {
            return Err(Error::InvalidEntries(format!(
                "expected {} entries, found {}",
                rows * cols,
                entries.len()
            )));
        }
        if entries.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidEntries("non-finite entry".into()));
        }
        if field == FieldTag::Real && entries.iter().any(|z| z.im != 0.0) {
            return Err(Error::InvalidEntries(
                "real matrix with nonzero imaginary part".into(),
            ));
        }
        Ok(DenseMatrix {
            field,
            data: DMatrix::from_row_slice(rows, cols, &entries),
        })
    }

    /// Builds a real matrix from row-major entries.
    pub fn from_real_rows(rows: usize, cols: usize, entries: &[f64]) -> Result<Self> {
        let entries = entries.iter().map(|&x| C64::new(x, 0.0)).collect();
        DenseMatrix::new(rows, cols, entries, FieldTag::Real)
    }

    /// Wraps a nalgebra matrix; for `Real` the imaginary parts are discarded.
    pub fn from_nalgebra(field: FieldTag, mut data: DMatrix<C64>) -> Self {
        if field == FieldTag::Real {
            data.iter_mut().for_each(|z| z.im = 0.0);
        }
        DenseMatrix { field, data }
    }

    pub fn zeros(rows: usize, cols: usize, field: FieldTag) -> Self {
        DenseMatrix {
            field,
            data: DMatrix::zeros(rows, cols),
        }
    }

    pub fn identity(n: usize, field: FieldTag) -> Self {
        DenseMatrix {
            field,
            data: DMatrix::identity(n, n),
        }
    }

    /// The elementary matrix `e_i e_j^T`.
    pub fn unit(rows: usize, cols: usize, i: usize, j: usize, field: FieldTag) -> Self {
        let mut m = DenseMatrix::zeros(rows, cols, field);
        m.data[(i, j)] = C64::new(1.0, 0.0);
        m
    }

    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn cols(&self) -> usize {
        self.data.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.data.shape()
    }

    pub fn field(&self) -> FieldTag {
        self.field
    }

    pub fn as_nalgebra(&self) -> &DMatrix<C64> {
        &self.data
    }

    pub fn into_nalgebra(self) -> DMatrix<C64> {
        self.data
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.data[(i, j)]
    }

    /// Row-major copy of the entries.
    pub fn entries(&self) -> Vec<C64> {
        let (r, c) = self.shape();
        let mut out = Vec::with_capacity(r * c);
        for i in 0..r {
            for j in 0..c {
                out.push(self.data[(i, j)]);
            }
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn transpose(&self) -> DenseMatrix {
        DenseMatrix {
            field: self.field,
            data: self.data.transpose(),
        }
    }

    pub fn adjoint(&self) -> DenseMatrix {
        DenseMatrix {
            field: self.field,
            data: self.data.adjoint(),
        }
    }

    pub fn scale(&self, alpha: f64) -> DenseMatrix {
        DenseMatrix {
            field: self.field,
            data: self.data.map(|z| z * alpha),
        }
    }

    /// `self + alpha * other`.
    pub fn add_scaled(&self, alpha: f64, other: &DenseMatrix) -> Result<DenseMatrix> {
        check_compatible(self, other)?;
        Ok(DenseMatrix {
            field: self.field,
            data: &self.data + other.data.map(|z| z * alpha),
        })
    }

    pub fn sub(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        self.add_scaled(-1.0, other)
    }

    /// `‖P − P^*‖_F`.
    pub fn hermitian_deviation(&self) -> f64 {
        if self.rows() != self.cols() {
            return f64::INFINITY;
        }
        (&self.data - self.data.adjoint()).norm()
    }

    /// `‖P − P^T‖_F`.
    pub fn symmetric_deviation(&self) -> f64 {
        if self.rows() != self.cols() {
            return f64::INFINITY;
        }
        (&self.data - self.data.transpose()).norm()
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian_deviation() <= HERMITIAN_TOL * self.frobenius_norm().max(1.0)
    }

    /// The quadratic form `x^* P x`.
    pub fn quadratic_form(&self, x: &[C64]) -> Result<C64> {
        if self.rows() != self.cols() || x.len() != self.rows() {
            return Err(Error::ShapeMismatch {
                expected: (x.len(), x.len()),
                found: self.shape(),
            });
        }
        let mut acc = C64::new(0.0, 0.0);
        for (i, xi) in x.iter().enumerate() {
            let mut row = C64::new(0.0, 0.0);
            for (j, xj) in x.iter().enumerate() {
                row += self.data[(i, j)] * xj;
            }
            acc += xi.conj() * row;
        }
        Ok(acc)
    }
}

fn check_compatible(a: &DenseMatrix, b: &DenseMatrix) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            expected: a.shape(),
            found: b.shape(),
        });
    }
    if a.field != b.field {
        return Err(Error::FieldMismatch {
            left: a.field,
            right: b.field,
        });
    }
    Ok(())
}

/// The pairing `Tr(A^T P) = Σ A_ij P_ij`, with plain transpose for both fields.
pub fn trace_inner(a: &DenseMatrix, p: &DenseMatrix) -> Result<C64> {
    check_compatible(a, p)?;
    Ok(trace_inner_unchecked(&a.data, &p.data))
}

pub(crate) fn trace_inner_unchecked(a: &DMatrix<C64>, p: &DMatrix<C64>) -> C64 {
    a.iter()
        .zip(p.iter())
        .fold(C64::new(0.0, 0.0), |acc, (x, y)| acc + x * y)
}

/// Real coordinates of a matrix.
///
/// Layout is row-major; a real matrix contributes one coordinate per entry,
/// a complex matrix two (`re, im`) interleaved per entry.
pub fn realify(m: &DenseMatrix) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.rows() * m.cols() * m.field.real_width());
    for z in m.entries() {
        out.push(z.re);
        if m.field == FieldTag::Complex {
            out.push(z.im);
        }
    }
    out
}

/// Output of the measurement map.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementVector {
    pub values: Vec<C64>,
    pub field: FieldTag,
}

impl MeasurementVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Real coordinates: one per value for a real vector, `(re, im)` pairs otherwise.
    pub fn realified(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len() * self.field.real_width());
        for z in &self.values {
            out.push(z.re);
            if self.field == FieldTag::Complex {
                out.push(z.im);
            }
        }
        out
    }
}
