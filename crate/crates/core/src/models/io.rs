//! On-disk model format.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic "MDL1" | version u32 | header len u32 | header JSON
//! | tensor count u32 | tensors | sha-256 of everything before it
//! ```
//!
//! Each tensor is `rank u32`, one `u64` per dimension, then the values
//! as `f64`. Tensors appear in declaration order: the single model's
//! parameters, or every base in order followed by the meta-learner.
//! The trailing digest covers the whole file, so any corruption is
//! caught before parameters are trusted.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::stacked::StackedModel;
use super::{Model, ModelConfig};
use crate::data::LabelMode;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"MDL1";
const VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

/// A loaded model of either shape, with a uniform prediction surface.
#[derive(Debug, Clone)]
pub enum AnyModel {
    Single(Model),
    Stacked(StackedModel),
}

impl AnyModel {
    pub fn predict_proba(&self, x: &Tensor) -> Result<Tensor> {
        match self {
            AnyModel::Single(m) => m.predict_proba(x),
            AnyModel::Stacked(m) => m.predict_proba(x),
        }
    }

    pub fn config(&self) -> &ModelConfig {
        match self {
            AnyModel::Single(m) => m.config(),
            AnyModel::Stacked(m) => &m.config,
        }
    }

    pub fn label_mode(&self) -> LabelMode {
        self.config().label_mode
    }

    pub fn feature_width(&self) -> usize {
        match self {
            AnyModel::Single(m) => m.feature_width(),
            AnyModel::Stacked(m) => m.feature_width,
        }
    }

    pub fn name(&self) -> &str {
        &self.config().name
    }

    pub fn checksum(&self) -> String {
        match self {
            AnyModel::Single(m) => m.checksum(),
            AnyModel::Stacked(m) => m.checksum(),
        }
    }
}

impl From<Model> for AnyModel {
    fn from(m: Model) -> Self {
        AnyModel::Single(m)
    }
}

impl From<StackedModel> for AnyModel {
    fn from(m: StackedModel) -> Self {
        AnyModel::Stacked(m)
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    feature_width: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    single: Option<ModelConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    stacked: Option<StackedHeader>,
}

#[derive(Serialize, Deserialize)]
struct StackedHeader {
    config: ModelConfig,
    meta: ModelConfig,
}

pub fn save_model(path: impl AsRef<Path>, model: &AnyModel) -> Result<()> {
    fs::write(path, model_to_bytes(model)?)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<AnyModel> {
    model_from_bytes(&fs::read(path)?)
}

pub fn model_to_bytes(model: &AnyModel) -> Result<Vec<u8>> {
    let header = match model {
        AnyModel::Single(m) => Header {
            feature_width: m.feature_width(),
            single: Some(m.config().clone()),
            stacked: None,
        },
        AnyModel::Stacked(m) => Header {
            feature_width: m.feature_width,
            single: None,
            stacked: Some(StackedHeader {
                config: m.config.clone(),
                meta: m.meta.config().clone(),
            }),
        },
    };
    let header_json = serde_json::to_vec(&header)?;

    let tensors: Vec<&Tensor> = match model {
        AnyModel::Single(m) => m.named_params().into_iter().map(|(_, t)| t).collect(),
        AnyModel::Stacked(m) => m
            .bases
            .iter()
            .chain(std::iter::once(&m.meta))
            .flat_map(|model| model.named_params().into_iter().map(|(_, t)| t))
            .collect(),
    };

    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
    out.extend_from_slice(&header_json);
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in tensors {
        out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    Ok(out)
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<AnyModel> {
    if bytes.len() < 8 {
        return Err(Error::Integrity("model file truncated".into()));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::Integrity("bad magic, not a model file".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(Error::Version {
            found: version,
            supported: VERSION,
        });
    }
    if bytes.len() < 8 + DIGEST_LEN {
        return Err(Error::Integrity("model file truncated".into()));
    }
    let (body, stored) = bytes.split_at(bytes.len() - DIGEST_LEN);
    let digest = Sha256::digest(body);
    if digest.as_slice() != stored {
        return Err(Error::Integrity("model file checksum mismatch".into()));
    }

    let mut cur = Cursor {
        bytes: body,
        pos: 8,
    };
    let header_len = cur.u32("header length")? as usize;
    let header_bytes = cur.take(header_len, "header")?;
    let header: Header = serde_json::from_slice(header_bytes)?;
    let tensor_count = cur.u32("tensor count")? as usize;

    let mut model = match (header.single, header.stacked) {
        (Some(cfg), None) => AnyModel::Single(Model::build(cfg, header.feature_width)?),
        (None, Some(sh)) => {
            let settings = sh.config.stacked.clone().ok_or_else(|| {
                Error::Integrity("stacked header lacks ensemble settings".into())
            })?;
            let bases = settings
                .bases
                .iter()
                .map(|b| Model::build(b.clone(), header.feature_width))
                .collect::<Result<Vec<_>>>()?;
            let meta_width = settings.bases.len() * sh.config.head_width();
            let meta = Model::build(sh.meta, meta_width)?;
            AnyModel::Stacked(StackedModel {
                config: sh.config,
                feature_width: header.feature_width,
                bases,
                meta,
            })
        }
        _ => {
            return Err(Error::Integrity(
                "header must describe exactly one of a single or stacked model".into(),
            ))
        }
    };

    let expected: usize = match &model {
        AnyModel::Single(m) => m.named_params().len(),
        AnyModel::Stacked(m) => {
            m.bases
                .iter()
                .map(|b| b.named_params().len())
                .sum::<usize>()
                + m.meta.named_params().len()
        }
    };
    if tensor_count != expected {
        return Err(Error::Integrity(format!(
            "file holds {tensor_count} tensors, model needs {expected}"
        )));
    }

    match &mut model {
        AnyModel::Single(m) => {
            let tensors = cur.tensors(m.named_params().len())?;
            m.set_params(tensors)?;
        }
        AnyModel::Stacked(sm) => {
            for base in &mut sm.bases {
                let tensors = cur.tensors(base.named_params().len())?;
                base.set_params(tensors)?;
            }
            let tensors = cur.tensors(sm.meta.named_params().len())?;
            sm.meta.set_params(tensors)?;
        }
    }
    if cur.pos != body.len() {
        return Err(Error::Integrity(format!(
            "{} trailing bytes after the last tensor",
            body.len() - cur.pos
        )));
    }
    Ok(model)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize, what: &str) -> Result<&[u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Integrity(format!("truncated while reading {what}")));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn tensors(&mut self, count: usize) -> Result<Vec<Tensor>> {
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            let rank = self.u32("tensor rank")? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(self.u64("tensor dimension")? as usize);
            }
            let len: usize = shape.iter().product();
            let raw = self.take(len * 8, "tensor values")?;
            let data: Vec<f64> = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            out.push(Tensor::new(shape, data)?);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::EncodedMatrix;
    use crate::layers::Activation;
    use crate::models::{
        train, train_stacked, ConvSettings, ModelKind, StackedSettings,
    };
    use crate::optim::{OptimizerConfig, OptimizerKind};
    use crate::rng::RunRng;
    use crate::synth;

    fn tiny_ann(name: &str, hidden: usize) -> ModelConfig {
        ModelConfig {
            name: name.into(),
            kind: ModelKind::Ann,
            layers: 2,
            units: vec![hidden, 1],
            activations: vec![Activation::Relu],
            optimizer: OptimizerConfig::new(OptimizerKind::Adagrad).with_learning_rate(0.1),
            epochs: 2,
            batch_size: 16,
            label_mode: LabelMode::Binary,
            seed: 5,
            conv: ConvSettings::default(),
            stacked: None,
        }
    }

    fn blob_data(n: usize, seed: u64) -> EncodedMatrix {
        let mut rng = RunRng::from_seed(seed);
        let (x, y) = synth::gaussian_blobs(n, 6.0, &mut rng).unwrap();
        EncodedMatrix {
            x,
            y,
            feature_names: vec!["x0".into(), "x1".into()],
            label_mode: LabelMode::Binary,
        }
    }

    fn trained_single() -> (AnyModel, EncodedMatrix) {
        let data = blob_data(40, 11);
        let (model, _) = train(&tiny_ann("solo", 6), &data).unwrap();
        (AnyModel::Single(model), data)
    }

    fn trained_stacked() -> (AnyModel, EncodedMatrix) {
        let data = blob_data(40, 12);
        let cfg = ModelConfig {
            name: "duo".into(),
            kind: ModelKind::Stacked,
            layers: 18,
            units: vec![6, 1],
            activations: vec![Activation::Relu],
            optimizer: OptimizerConfig::new(OptimizerKind::Adagrad).with_learning_rate(0.1),
            epochs: 2,
            batch_size: 16,
            label_mode: LabelMode::Binary,
            seed: 13,
            conv: ConvSettings::default(),
            stacked: Some(StackedSettings {
                folds: 2,
                parallel: false,
                bases: vec![tiny_ann("a", 5), tiny_ann("b", 4)],
            }),
        };
        let (model, _) = train_stacked(&cfg, &data).unwrap();
        (AnyModel::Stacked(model), data)
    }

    #[test]
    fn single_model_round_trips_bitwise() {
        let (model, data) = trained_single();
        let bytes = model_to_bytes(&model).unwrap();
        let back = model_from_bytes(&bytes).unwrap();
        assert_eq!(back.checksum(), model.checksum());
        assert_eq!(back.config(), model.config());
        let before = model.predict_proba(&data.x).unwrap();
        let after = back.predict_proba(&data.x).unwrap();
        assert_eq!(before.data(), after.data());
    }

    #[test]
    fn stacked_model_round_trips_with_base_order() {
        let (model, data) = trained_stacked();
        let bytes = model_to_bytes(&model).unwrap();
        let back = model_from_bytes(&bytes).unwrap();
        let (AnyModel::Stacked(orig), AnyModel::Stacked(loaded)) = (&model, &back) else {
            panic!("expected stacked on both sides");
        };
        assert_eq!(orig.bases.len(), loaded.bases.len());
        for (a, b) in orig.bases.iter().zip(&loaded.bases) {
            assert_eq!(a.config().name, b.config().name);
            assert_eq!(a.checksum(), b.checksum());
        }
        assert_eq!(orig.meta.checksum(), loaded.meta.checksum());
        let before = model.predict_proba(&data.x).unwrap();
        let after = back.predict_proba(&data.x).unwrap();
        assert_eq!(before.data(), after.data());
    }

    #[test]
    fn save_is_deterministic() {
        let (model, _) = trained_single();
        assert_eq!(
            model_to_bytes(&model).unwrap(),
            model_to_bytes(&model).unwrap()
        );
    }

    #[test]
    fn file_round_trip() {
        let (model, data) = trained_single();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("solo.mdl");
        save_model(&path, &model).unwrap();
        let back = load_model(&path).unwrap();
        let before = model.predict_proba(&data.x).unwrap();
        let after = back.predict_proba(&data.x).unwrap();
        assert_eq!(before.data(), after.data());
    }

    #[test]
    fn bad_magic_is_rejected() {
        let (model, _) = trained_single();
        let mut bytes = model_to_bytes(&model).unwrap();
        bytes[0] = b'X';
        let err = model_from_bytes(&bytes).unwrap_err();
        assert!(matches!(err, Error::Integrity(_)), "{err}");
    }

    #[test]
    fn future_version_is_rejected_with_both_numbers() {
        let (model, _) = trained_single();
        let mut bytes = model_to_bytes(&model).unwrap();
        bytes[4..8].copy_from_slice(&7u32.to_le_bytes());
        let err = model_from_bytes(&bytes).unwrap_err();
        assert!(
            matches!(
                err,
                Error::Version {
                    found: 7,
                    supported: 1
                }
            ),
            "{err}"
        );
    }

    #[test]
    fn corruption_fails_the_checksum() {
        let (model, _) = trained_single();
        let mut bytes = model_to_bytes(&model).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x40;
        let err = model_from_bytes(&bytes).unwrap_err();
        assert!(err.to_string().contains("checksum"), "{err}");
    }

    #[test]
    fn truncation_is_rejected_everywhere() {
        let (model, _) = trained_single();
        let bytes = model_to_bytes(&model).unwrap();
        for cut in [3, 7, 20, bytes.len() / 2, bytes.len() - 1] {
            let err = model_from_bytes(&bytes[..cut]).unwrap_err();
            assert!(matches!(err, Error::Integrity(_)), "cut {cut}: {err}");
        }
    }

    #[test]
    fn appended_garbage_is_rejected() {
        let (model, _) = trained_single();
        let mut bytes = model_to_bytes(&model).unwrap();
        bytes.push(0);
        let err = model_from_bytes(&bytes).unwrap_err();
        assert!(matches!(err, Error::Integrity(_)), "{err}");
    }
}
