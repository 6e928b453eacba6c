//! Structured-text (JSON) file formats.
//!
//! Matrices are written row-major as lists of rows whose entries are
//! `[re, im]` pairs.

use std::fs;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::qmat::{CMat, DensityMatrix, MultipartiteOperator, HERMITIAN_TOL};

fn to_rows(m: &CMat) -> Vec<Vec<[f64; 2]>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
        .collect()
}

fn from_rows(rows: Vec<Vec<[f64; 2]>>) -> std::result::Result<CMat, String> {
    let n = rows.len();
    let ncols = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != ncols) {
        return Err("ragged matrix rows".into());
    }
    let mut m = CMat::zeros(n, ncols);
    for (i, row) in rows.into_iter().enumerate() {
        for (j, [re, im]) in row.into_iter().enumerate() {
            m[(i, j)] = Complex64::new(re, im);
        }
    }
    Ok(m)
}

/// `#[serde(with = "crate::io::cmat")]`
pub mod cmat {
    use super::*;

    pub fn serialize<S: Serializer>(m: &CMat, s: S) -> std::result::Result<S::Ok, S::Error> {
        to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<CMat, D::Error> {
        let rows = Vec::<Vec<[f64; 2]>>::deserialize(d)?;
        from_rows(rows).map_err(serde::de::Error::custom)
    }
}

pub mod opt_cmat {
    use super::*;

    pub fn serialize<S: Serializer>(m: &Option<CMat>, s: S) -> std::result::Result<S::Ok, S::Error> {
        m.as_ref().map(to_rows).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<CMat>, D::Error> {
        match Option::<Vec<Vec<[f64; 2]>>>::deserialize(d)? {
            Some(rows) => from_rows(rows).map(Some).map_err(serde::de::Error::custom),
            None => Ok(None),
        }
    }
}

pub mod vec_cmat {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[CMat], s: S) -> std::result::Result<S::Ok, S::Error> {
        v.iter().map(to_rows).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<CMat>, D::Error> {
        Vec::<Vec<Vec<[f64; 2]>>>::deserialize(d)?
            .into_iter()
            .map(|rows| from_rows(rows).map_err(serde::de::Error::custom))
            .collect()
    }
}

/// On-disk state/operator document.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OperatorFile {
    pub dims: Vec<usize>,
    #[serde(with = "cmat")]
    pub matrix: CMat,
}

impl From<&MultipartiteOperator> for OperatorFile {
    fn from(op: &MultipartiteOperator) -> Self {
        Self { dims: op.dims().to_vec(), matrix: op.matrix().clone() }
    }
}

impl OperatorFile {
    pub fn into_operator(self, hermitian_tol: f64) -> Result<MultipartiteOperator> {
        MultipartiteOperator::with_tolerance(self.dims, self.matrix, hermitian_tol)
    }
}

pub fn operator_from_json(text: &str) -> Result<MultipartiteOperator> {
    let f: OperatorFile = serde_json::from_str(text)?;
    f.into_operator(HERMITIAN_TOL)
}

pub fn operator_to_json(op: &MultipartiteOperator) -> Result<String> {
    Ok(serde_json::to_string_pretty(&OperatorFile::from(op))?)
}

pub fn load_operator(path: impl AsRef<Path>) -> Result<MultipartiteOperator> {
    operator_from_json(&fs::read_to_string(path)?)
}

pub fn load_state(path: impl AsRef<Path>) -> Result<DensityMatrix> {
    DensityMatrix::new(load_operator(path)?)
}

pub fn save_operator(path: impl AsRef<Path>, op: &MultipartiteOperator) -> Result<()> {
    fs::write(path, operator_to_json(op)?)?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(Error::from)
}
