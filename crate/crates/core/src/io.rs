//! JSON representation of matrices: nested row arrays of `[re, im]` pairs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DenseMatrix, FieldTag, C64};

/// Version tag written into every JSON and CSV document.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixJson {
    pub rows: usize,
    pub cols: usize,
    pub field: FieldTag,
    pub entries: Vec<Vec<[f64; 2]>>,
}

impl From<&DenseMatrix> for MatrixJson {
    fn from(m: &DenseMatrix) -> Self {
        let entries = (0..m.rows())
            .map(|i| {
                (0..m.cols())
                    .map(|j| {
                        let z = m.get(i, j);
                        [z.re, z.im]
                    })
                    .collect()
            })
            .collect();
        MatrixJson {
            rows: m.rows(),
            cols: m.cols(),
            field: m.field(),
            entries,
        }
    }
}

impl TryFrom<MatrixJson> for DenseMatrix {
    type Error = Error;

    fn try_from(json: MatrixJson) -> Result<Self> {
        if json.entries.len() != json.rows || json.entries.iter().any(|r| r.len() != json.cols) {
            return Err(Error::InvalidEntries(format!(
                "entry array does not match declared shape {}x{}",
                json.rows, json.cols
            )));
        }
        let flat = json
            .entries
            .into_iter()
            .flatten()
            .map(|[re, im]| C64::new(re, im))
            .collect();
        DenseMatrix::new(json.rows, json.cols, flat, json.field)
    }
}

pub fn vector_to_json(v: &[C64]) -> Vec<[f64; 2]> {
    v.iter().map(|z| [z.re, z.im]).collect()
}

pub fn vector_from_json(v: &[[f64; 2]]) -> Vec<C64> {
    v.iter().map(|&[re, im]| C64::new(re, im)).collect()
}

/// A single matrix document as written by the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixDocument {
    pub schema: u32,
    pub matrix: MatrixJson,
}

impl MatrixDocument {
    pub fn new(m: &DenseMatrix) -> Self {
        MatrixDocument {
            schema: SCHEMA_VERSION,
            matrix: m.into(),
        }
    }

    pub fn from_json(text: &str) -> Result<DenseMatrix> {
        let doc: MatrixDocument =
            serde_json::from_str(text).map_err(|e| Error::InvalidEntries(e.to_string()))?;
        doc.matrix.try_into()
    }
}

/// Writes `contents` to `path` through a sibling temporary file and a rename,
/// so readers never observe a partial file.
pub fn write_atomic(path: &std::path::Path, contents: &[u8]) -> std::io::Result<()> {
    use std::io::Write;
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => std::path::PathBuf::from("."),
    };
    let name = path
        .file_name()
        .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::InvalidInput, "path has no file name"))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::gaussian_matrix;
    use crate::rng::SeedStream;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn json_round_trip_is_exact(seed in any::<u64>(), rows in 1usize..5, cols in 1usize..5, complex in any::<bool>()) {
            let field = if complex { FieldTag::Complex } else { FieldTag::Real };
            let mut rng = SeedStream::new(seed).rng();
            let m = DenseMatrix::from_nalgebra(field, gaussian_matrix(&mut rng, rows, cols, field));
            let text = serde_json::to_string(&MatrixDocument::new(&m)).unwrap();
            let back = MatrixDocument::from_json(&text).unwrap();
            prop_assert_eq!(back, m);
        }
    }

    #[test]
    fn atomic_write_replaces_contents() {
        let dir = std::env::temp_dir().join(format!("aerecovery-io-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("out.txt");
        write_atomic(&path, b"first").unwrap();
        write_atomic(&path, b"second").unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "second");
        assert_eq!(std::fs::read_dir(&dir).unwrap().count(), 1);
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn ragged_rows_are_rejected() {
        let json = MatrixJson {
            rows: 2,
            cols: 2,
            field: FieldTag::Real,
            entries: vec![vec![[1.0, 0.0], [2.0, 0.0]], vec![[3.0, 0.0]]],
        };
        assert!(DenseMatrix::try_from(json).is_err());
    }
}
