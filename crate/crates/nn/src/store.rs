//! Named-tensor persistence: a JSON manifest beside a little-endian f32 blob.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{NnError, Result};
use crate::model::{build_model, Model, ModelSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset into the blob.
    pub offset: usize,
}

impl TensorEntry {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Manifest {
    data_file: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    spec: Option<ModelSpec>,
    tensors: Vec<TensorEntry>,
}

/// In-memory tensor collection, optionally tagged with the spec that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightStore {
    pub spec: Option<ModelSpec>,
    pub tensors: Vec<TensorEntry>,
    pub data: Vec<f32>,
}

/// Sibling blob path for a manifest: same stem, `.bin` extension.
pub fn blob_path(manifest: &Path) -> PathBuf {
    manifest.with_extension("bin")
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> NnError + '_ {
    move |source| NnError::Io { path: path.to_path_buf(), source }
}

impl WeightStore {
    pub fn new(spec: Option<ModelSpec>) -> Self {
        Self { spec, tensors: Vec::new(), data: Vec::new() }
    }

    pub fn push(&mut self, name: impl Into<String>, shape: Vec<usize>, values: impl IntoIterator<Item = f64>) -> Result<()> {
        let name = name.into();
        let start = self.data.len();
        self.data.extend(values.into_iter().map(|v| v as f32));
        let got = self.data.len() - start;
        let want: usize = shape.iter().product();
        if got != want {
            self.data.truncate(start);
            return Err(NnError::Tensor { name, reason: format!("{got} values for shape {shape:?}") });
        }
        self.tensors.push(TensorEntry { name, shape, offset: start * 4 });
        Ok(())
    }

    pub fn from_model(model: &Model) -> Self {
        let mut store = Self::new(Some(model.spec.clone()));
        for p in model.params() {
            store.push(p.name.clone(), p.shape.clone(), p.value.iter().copied()).expect("param shape matches its values");
        }
        store
    }

    pub fn get(&self, name: &str) -> Option<(&TensorEntry, &[f32])> {
        self.tensors.iter().find(|t| t.name == name).map(|t| {
            let start = t.offset / 4;
            (t, &self.data[start..start + t.len()])
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let blob = blob_path(path);
        let manifest = Manifest {
            data_file: blob.file_name().expect("blob has a file name").to_string_lossy().into_owned(),
            spec: self.spec.clone(),
            tensors: self.tensors.clone(),
        };
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(io(dir))?;
        }
        let bytes: Vec<u8> = self.data.iter().flat_map(|v| v.to_le_bytes()).collect();
        fs::write(&blob, bytes).map_err(io(&blob))?;
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::write(path, text).map_err(io(path))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(io(path))?;
        let manifest: Manifest = serde_json::from_str(&text)
            .map_err(|e| NnError::Manifest { path: path.to_path_buf(), message: e.to_string() })?;
        let mut expected = 0;
        for t in &manifest.tensors {
            if t.offset != expected {
                return Err(NnError::Manifest {
                    path: path.to_path_buf(),
                    message: format!("tensor `{}` starts at byte {} but the previous tensor ends at {expected}", t.name, t.offset),
                });
            }
            expected += 4 * t.len();
        }
        let blob = path.with_file_name(&manifest.data_file);
        let bytes = fs::read(&blob).map_err(io(&blob))?;
        if bytes.len() != expected {
            return Err(NnError::BlobSize { expected, found: bytes.len() });
        }
        let data = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
        Ok(Self { spec: manifest.spec, tensors: manifest.tensors, data })
    }

    /// Copies tensors into `model`, requiring names and shapes to match in order.
    pub fn apply_to(&self, model: &mut Model) -> Result<()> {
        let mut params = model.params_mut();
        for (i, t) in self.tensors.iter().enumerate() {
            let Some(p) = params.get_mut(i) else {
                return Err(NnError::Tensor { name: t.name.clone(), reason: "not present in the model spec".into() });
            };
            if p.name != t.name {
                return Err(NnError::Tensor {
                    name: t.name.clone(),
                    reason: format!("model expects `{}` at this position", p.name),
                });
            }
            if p.shape != t.shape {
                return Err(NnError::Tensor {
                    name: t.name.clone(),
                    reason: format!("stored shape {:?}, model shape {:?}", t.shape, p.shape),
                });
            }
            let start = t.offset / 4;
            let values = &self.data[start..start + t.len()];
            p.value = Array2::from_shape_vec(p.value.dim(), values.iter().map(|&v| v as f64).collect())
                .expect("element counts agree");
        }
        if let Some(p) = params.get(self.tensors.len()) {
            return Err(NnError::Tensor { name: p.name.clone(), reason: "missing from the weight file".into() });
        }
        Ok(())
    }
}

pub fn save_weights(model: &Model, path: &Path) -> Result<()> {
    WeightStore::from_model(model).write(path)
}

/// Builds `spec` and fills it from the weight file at `path`.
pub fn load_weights(spec: &ModelSpec, path: &Path) -> Result<Model> {
    let store = WeightStore::read(path)?;
    let mut model = build_model(spec)?;
    store.apply_to(&mut model)?;
    Ok(model)
}

/// Like [`load_weights`], using the spec recorded in the manifest.
pub fn load_model(path: &Path) -> Result<Model> {
    let store = WeightStore::read(path)?;
    let spec = store.spec.clone().ok_or_else(|| NnError::Manifest {
        path: path.to_path_buf(),
        message: "manifest carries no model spec".into(),
    })?;
    let mut model = build_model(&spec)?;
    store.apply_to(&mut model)?;
    Ok(model)
}
