//! Named `f64`/`i64` tensors with one JSON metadata string, stored as
//! safetensors.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use cdu_core::linalg::Matrix;
use safetensors::tensor::{Dtype, SafeTensors, TensorView};

use crate::error::{CliError, Result};

const META_KEY: &str = "cdu";

#[derive(Debug, Clone, PartialEq)]
pub enum Tensor {
    F64 { shape: Vec<usize>, data: Vec<f64> },
    I64 { shape: Vec<usize>, data: Vec<i64> },
}

impl Tensor {
    pub fn matrix(m: &Matrix) -> Self {
        Tensor::F64 {
            shape: vec![m.rows(), m.cols()],
            data: m.as_slice().to_vec(),
        }
    }

    pub fn vector(v: &[f64]) -> Self {
        Tensor::F64 {
            shape: vec![v.len()],
            data: v.to_vec(),
        }
    }

    pub fn indices(v: &[usize]) -> Self {
        Tensor::I64 {
            shape: vec![v.len()],
            data: v.iter().map(|&i| i as i64).collect(),
        }
    }

    fn bytes(&self) -> Vec<u8> {
        match self {
            Tensor::F64 { data, .. } => data.iter().flat_map(|v| v.to_le_bytes()).collect(),
            Tensor::I64 { data, .. } => data.iter().flat_map(|v| v.to_le_bytes()).collect(),
        }
    }
}

/// An ordered tensor collection plus metadata.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TensorFile {
    pub tensors: BTreeMap<String, Tensor>,
    pub metadata: String,
}

impl TensorFile {
    pub fn new(metadata: String) -> Self {
        Self {
            tensors: BTreeMap::new(),
            metadata,
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) {
        self.tensors.insert(name.into(), t);
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let bytes: Vec<(String, Dtype, Vec<usize>, Vec<u8>)> = self
            .tensors
            .iter()
            .map(|(k, t)| {
                let (dtype, shape) = match t {
                    Tensor::F64 { shape, .. } => (Dtype::F64, shape.clone()),
                    Tensor::I64 { shape, .. } => (Dtype::I64, shape.clone()),
                };
                (k.clone(), dtype, shape, t.bytes())
            })
            .collect();
        let views: Vec<(String, TensorView<'_>)> = bytes
            .iter()
            .map(|(k, d, s, b)| Ok((k.clone(), TensorView::new(*d, s.clone(), b)?)))
            .collect::<std::result::Result<_, safetensors::SafeTensorError>>()
            .map_err(|e| CliError::Numerical(e.to_string()))?;
        let meta = Some(HashMap::from([(
            META_KEY.to_string(),
            self.metadata.clone(),
        )]));
        safetensors::serialize(views, &meta).map_err(|e| CliError::Numerical(e.to_string()))
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let (_, header) =
            SafeTensors::read_metadata(bytes).map_err(|e| CliError::format(path, e))?;
        let metadata = header
            .metadata()
            .as_ref()
            .and_then(|m| m.get(META_KEY).cloned())
            .ok_or_else(|| CliError::format(path, "missing metadata"))?;
        let st = SafeTensors::deserialize(bytes).map_err(|e| CliError::format(path, e))?;
        let mut tensors = BTreeMap::new();
        for (name, view) in st.tensors() {
            let shape = view.shape().to_vec();
            let raw = view.data();
            let t = match view.dtype() {
                Dtype::F64 => Tensor::F64 {
                    shape,
                    data: raw
                        .chunks_exact(8)
                        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                        .collect(),
                },
                Dtype::I64 => Tensor::I64 {
                    shape,
                    data: raw
                        .chunks_exact(8)
                        .map(|c| i64::from_le_bytes(c.try_into().unwrap()))
                        .collect(),
                },
                other => {
                    return Err(CliError::format(
                        path,
                        format!("unsupported dtype {other:?} in {name}"),
                    ))
                }
            };
            tensors.insert(name, t);
        }
        Ok(Self { tensors, metadata })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(CliError::io(path))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(CliError::io(path))?;
        Self::from_bytes(&bytes, path)
    }

    fn get(&self, name: &str) -> std::result::Result<&Tensor, String> {
        self.tensors
            .get(name)
            .ok_or_else(|| format!("missing tensor {name}"))
    }

    pub fn matrix(&self, name: &str) -> std::result::Result<Matrix, String> {
        match self.get(name)? {
            Tensor::F64 { shape, data } if shape.len() == 2 => {
                Matrix::from_vec(shape[0], shape[1], data.clone()).map_err(|e| e.to_string())
            }
            _ => Err(format!("{name} is not an f64 matrix")),
        }
    }

    pub fn vector(&self, name: &str) -> std::result::Result<Vec<f64>, String> {
        match self.get(name)? {
            Tensor::F64 { shape, data } if shape.len() == 1 => Ok(data.clone()),
            _ => Err(format!("{name} is not an f64 vector")),
        }
    }

    pub fn indices(&self, name: &str) -> std::result::Result<Vec<usize>, String> {
        match self.get(name)? {
            Tensor::I64 { shape, data } if shape.len() == 1 => data
                .iter()
                .map(|&v| usize::try_from(v).map_err(|_| format!("{name} has a negative index")))
                .collect(),
            _ => Err(format!("{name} is not an index vector")),
        }
    }

    /// Matrices `prefix0 … prefix{n−1}`.
    pub fn matrices(&self, prefix: &str, n: usize) -> std::result::Result<Vec<Matrix>, String> {
        (0..n)
            .map(|i| self.matrix(&format!("{prefix}{i:03}")))
            .collect()
    }

    pub fn insert_matrices(&mut self, prefix: &str, ms: &[Matrix]) {
        for (i, m) in ms.iter().enumerate() {
            self.insert(format!("{prefix}{i:03}"), Tensor::matrix(m));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact_and_stable() {
        let mut f = TensorFile::new("{\"k\":1}".into());
        f.insert("b", Tensor::vector(&[0.1, -2.5, f64::MIN_POSITIVE]));
        f.insert(
            "a",
            Tensor::matrix(&Matrix::from_vec(2, 1, vec![1.0 / 3.0, 7.0]).unwrap()),
        );
        f.insert("i", Tensor::indices(&[3, 0, 9]));
        let bytes = f.to_bytes().unwrap();
        assert_eq!(bytes, f.to_bytes().unwrap());
        let g = TensorFile::from_bytes(&bytes, Path::new("mem")).unwrap();
        assert_eq!(g, f);
        assert_eq!(g.indices("i").unwrap(), vec![3, 0, 9]);
    }

    #[test]
    fn empty_file_round_trips() {
        let f = TensorFile::new("{}".into());
        let g = TensorFile::from_bytes(&f.to_bytes().unwrap(), Path::new("mem")).unwrap();
        assert_eq!(g, f);
    }
}
