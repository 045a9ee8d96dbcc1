//! Binary checkpoint container.
//!
//! ```text
//! offset  size  field
//! 0       8     magic  b"TRJCKPT\0"
//! 8       4     container version, u32 little-endian
//! 12      8     header length H, u64 little-endian
//! 20      H     UTF-8 JSON header (CheckpointHeader)
//! 20+H    ...   tensor payload, f64 little-endian, row-major
//! ```
//!
//! The header lists every tensor's name, shape and element offset into the
//! payload. Parameters come first (`param/<name>`), followed by the Adam
//! moments (`adam.m/<name>`, `adam.v/<name>`) when optimizer state is saved.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{ArrayD, IxDyn};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::Tensor;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::train::config::TrainConfig;
use crate::train::optim::Adam;

pub const MAGIC: &[u8; 8] = b"TRJCKPT\0";
pub const CONTAINER_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: String,
    pub stream: u64,
    pub word_pos: String,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            seed: hex::encode(rng.get_seed()),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos().to_string(),
        }
    }

    pub fn restore(&self) -> Result<ChaCha8Rng> {
        use rand::SeedableRng;
        let bad = |m: &str| Error::Config(format!("corrupt RNG state: {m}"));
        let bytes = hex::decode(&self.seed).map_err(|_| bad("seed is not hex"))?;
        let seed: [u8; 32] = bytes.try_into().map_err(|_| bad("seed is not 32 bytes"))?;
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos.parse().map_err(|_| bad("word position"))?);
        Ok(rng)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub config: TrainConfig,
    pub config_hash: String,
    /// Number of completed epochs.
    pub epoch: usize,
    pub adam_step: Option<u64>,
    pub rng: RngState,
    pub best_val_ade: Option<f64>,
    pub tensors: Vec<TensorEntry>,
}

/// Model parameters, optimizer state and training position.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub config_hash: String,
    pub epoch: usize,
    pub params: Vec<(String, Tensor)>,
    pub optimizer: Option<Adam>,
    pub rng: RngState,
    pub best_val_ade: Option<f64>,
}

impl Checkpoint {
    pub fn capture(
        config: &TrainConfig,
        model: &Model,
        optimizer: Option<&Adam>,
        rng: &ChaCha8Rng,
        epoch: usize,
        best_val_ade: Option<f64>,
    ) -> Self {
        Self {
            config: config.clone(),
            config_hash: config.hash(),
            epoch,
            params: model.params.ids().map(|id| (model.params.name(id).to_string(), model.params.value(id).clone())).collect(),
            optimizer: optimizer.cloned(),
            rng: RngState::capture(rng),
            best_val_ade,
        }
    }

    /// Rebuild the model and load the stored parameters into it.
    pub fn model(&self) -> Result<Model> {
        let mut model = Model::new(self.config.model.clone(), self.config.seed)?;
        if model.params.len() != self.params.len() {
            return Err(Error::Config(format!(
                "checkpoint holds {} tensors, model expects {}",
                self.params.len(),
                model.params.len()
            )));
        }
        for (name, value) in &self.params {
            let id = model
                .params
                .find(name)
                .ok_or_else(|| Error::Config(format!("checkpoint tensor `{name}` is not a model parameter")))?;
            if model.params.value(id).shape() != value.shape() {
                return Err(Error::Shape(format!("parameter `{name}` shape {:?}", value.shape())));
            }
            *model.params.value_mut(id) = value.clone();
        }
        Ok(model)
    }

    pub fn write_to(&self, mut out: impl Write) -> Result<()> {
        let mut tensors = Vec::new();
        let mut payload: Vec<&Tensor> = Vec::new();
        let mut offset = 0;
        let mut push = |name: String, t: &'_ Tensor, tensors: &mut Vec<TensorEntry>| {
            tensors.push(TensorEntry { name, shape: t.shape().to_vec(), offset });
            offset += t.len();
        };
        for (name, t) in &self.params {
            push(format!("param/{name}"), t, &mut tensors);
            payload.push(t);
        }
        if let Some(opt) = &self.optimizer {
            for (prefix, moments) in [("adam.m", &opt.first), ("adam.v", &opt.second)] {
                for ((name, _), t) in self.params.iter().zip(moments.iter()) {
                    push(format!("{prefix}/{name}"), t, &mut tensors);
                    payload.push(t);
                }
            }
        }
        let header = CheckpointHeader {
            config: self.config.clone(),
            config_hash: self.config_hash.clone(),
            epoch: self.epoch,
            adam_step: self.optimizer.as_ref().map(|o| o.step),
            rng: self.rng.clone(),
            best_val_ade: self.best_val_ade,
            tensors,
        };
        let json = serde_json::to_vec(&header)?;
        out.write_all(MAGIC)?;
        out.write_all(&CONTAINER_VERSION.to_le_bytes())?;
        out.write_all(&(json.len() as u64).to_le_bytes())?;
        out.write_all(&json)?;
        let mut buf = Vec::new();
        for t in payload {
            buf.clear();
            for v in t.iter() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            out.write_all(&buf)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_from(mut input: impl Read, source: &Path) -> Result<Self> {
        let bad = |m: String| Error::Format { path: source.to_path_buf(), message: m };
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(bad("not a checkpoint file".into()));
        }
        let mut u32b = [0u8; 4];
        input.read_exact(&mut u32b)?;
        let version = u32::from_le_bytes(u32b);
        if version != CONTAINER_VERSION {
            return Err(bad(format!("unsupported container version {version}")));
        }
        let mut u64b = [0u8; 8];
        input.read_exact(&mut u64b)?;
        let len = u64::from_le_bytes(u64b) as usize;
        let mut json = vec![0u8; len];
        input.read_exact(&mut json)?;
        let header: CheckpointHeader = serde_json::from_slice(&json).map_err(|e| bad(format!("bad header: {e}")))?;
        if header.config.hash() != header.config_hash {
            return Err(bad("config hash does not match the stored config".into()));
        }
        let mut payload = Vec::new();
        input.read_to_end(&mut payload)?;
        let total: usize = header.tensors.iter().map(|t| t.shape.iter().product::<usize>()).sum();
        if payload.len() != total * 8 {
            return Err(bad(format!("payload holds {} bytes, header describes {}", payload.len(), total * 8)));
        }
        let read = |e: &TensorEntry| -> Tensor {
            let n: usize = e.shape.iter().product();
            let data = payload[e.offset * 8..(e.offset + n) * 8]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            ArrayD::from_shape_vec(IxDyn(&e.shape), data).unwrap()
        };
        let mut params = Vec::new();
        let mut first = Vec::new();
        let mut second = Vec::new();
        for e in &header.tensors {
            if let Some(name) = e.name.strip_prefix("param/") {
                params.push((name.to_string(), read(e)));
            } else if e.name.starts_with("adam.m/") {
                first.push(read(e));
            } else if e.name.starts_with("adam.v/") {
                second.push(read(e));
            } else {
                return Err(bad(format!("unknown tensor `{}`", e.name)));
            }
        }
        let optimizer = match header.adam_step {
            Some(step) => {
                if first.len() != params.len() || second.len() != params.len() {
                    return Err(bad("optimizer moments do not cover every parameter".into()));
                }
                Some(Adam { hyper: header.config.adam, step, first, second })
            }
            None => None,
        };
        Ok(Self {
            config: header.config,
            config_hash: header.config_hash,
            epoch: header.epoch,
            params,
            optimizer,
            rng: header.rng,
            best_val_ade: header.best_val_ade,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_to(std::io::BufWriter::new(file))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(file), path)
    }
}
