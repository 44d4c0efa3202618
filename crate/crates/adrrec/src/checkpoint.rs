//! Versioned checkpoint container: magic, version, JSON header, then raw
//! little-endian `f64` tensors (parameters, followed by optimizer moments).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use adrrec_core::config::OptimizerKind;
use adrrec_core::training::Optimizer;
use adrrec_core::{Matrix, Model, ModelConfig, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::binio::*;
use crate::error::{AppError, AppResult};

pub const MAGIC: &[u8; 8] = b"ADRCKPT\0";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorInfo {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerInfo {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub steps: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Header {
    pub mode: String,
    pub config: TrainConfig,
    pub n_items: usize,
    pub t_min: i64,
    pub tensors: Vec<TensorInfo>,
    pub optimizer: OptimizerInfo,
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub model: Model,
    pub optimizer: Optimizer,
}

pub fn write_checkpoint(w: &mut impl Write, cfg: &TrainConfig, model: &Model, opt: &Optimizer) -> std::io::Result<()> {
    let ps = &model.params;
    let header = Header {
        mode: model.mode.to_string(),
        config: cfg.clone(),
        n_items: model.config.n_items,
        t_min: model.config.t_min,
        tensors: ps.names().iter().zip(ps.tensors()).map(|(n, t)| TensorInfo { name: n.clone(), rows: t.rows(), cols: t.cols() }).collect(),
        optimizer: OptimizerInfo { kind: opt.kind, learning_rate: opt.learning_rate, beta1: opt.beta1, beta2: opt.beta2, epsilon: opt.epsilon, steps: opt.steps },
    };
    let json = serde_json::to_vec(&header).map_err(std::io::Error::other)?;
    w.write_all(MAGIC)?;
    put_u32(w, VERSION)?;
    put_u64(w, json.len() as u64)?;
    w.write_all(&json)?;
    for t in ps.tensors().iter().chain(&opt.m).chain(&opt.v) {
        put_f64s(w, t.data())?;
    }
    Ok(())
}

fn invalid(msg: String) -> AppError {
    AppError::Data(format!("checkpoint: {msg}"))
}

pub fn read_checkpoint(r: &mut impl Read) -> AppResult<Checkpoint> {
    let io = |e| invalid(format!("{e}"));
    expect_magic(r, MAGIC).map_err(io)?;
    let version = get_u32(r).map_err(io)?;
    if version != VERSION {
        return Err(invalid(format!("version {version}, expected {VERSION}")));
    }
    let len = get_u64(r).map_err(io)? as usize;
    let mut json = vec![0u8; len];
    r.read_exact(&mut json).map_err(io)?;
    let header: Header = serde_json::from_slice(&json).map_err(|e| invalid(format!("header: {e}")))?;
    let mc = ModelConfig::from_train(&header.config, header.n_items, header.t_min)?;
    let mut model = Model::new(mc, header.config.seeds.init)?;
    let mut read = |info: &TensorInfo| -> AppResult<Matrix> { Ok(Matrix::from_vec(info.rows, info.cols, get_f64s(r, info.rows * info.cols).map_err(io)?)) };
    let mut entries = Vec::with_capacity(header.tensors.len());
    for info in &header.tensors {
        entries.push((info.name.clone(), read(info)?));
    }
    model.params.load(entries)?;
    let o = &header.optimizer;
    let mut optimizer = Optimizer::new(o.kind, o.learning_rate, &model.params)?;
    optimizer.beta1 = o.beta1;
    optimizer.beta2 = o.beta2;
    optimizer.epsilon = o.epsilon;
    optimizer.steps = o.steps;
    if o.kind == OptimizerKind::Adam {
        optimizer.m = header.tensors.iter().map(&mut read).collect::<AppResult<_>>()?;
        optimizer.v = header.tensors.iter().map(&mut read).collect::<AppResult<_>>()?;
    }
    if model.mode.to_string() != header.mode {
        return Err(invalid(format!("mode {} does not match config mode {}", header.mode, model.mode)));
    }
    Ok(Checkpoint { config: header.config, model, optimizer })
}

pub fn save(path: &Path, cfg: &TrainConfig, model: &Model, opt: &Optimizer) -> AppResult<()> {
    let mut w = BufWriter::new(File::create(path).map_err(|e| AppError::io(path, e))?);
    write_checkpoint(&mut w, cfg, model, opt).and_then(|_| w.flush()).map_err(|e| AppError::io(path, e))
}

pub fn load(path: &Path) -> AppResult<Checkpoint> {
    let mut r = BufReader::new(File::open(path).map_err(|e| AppError::io(path, e))?);
    read_checkpoint(&mut r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use adrrec_core::exec::Sequential;
    use adrrec_core::gradcheck::tiny_batch;
    use adrrec_core::training::{make_optimizer, train_step};

    #[test]
    fn round_trip_is_bit_exact() {
        let cfg = TrainConfig { mode: "p-b-t-s-r-o".into(), d_model: 16, head_dim: Some(4), max_len: 4, d_ff: 8, dropout: 0.0, ..TrainConfig::default() };
        let mut model = Model::new(ModelConfig::from_train(&cfg, 9, 1_500_000_000).unwrap(), 2).unwrap();
        let mut opt = make_optimizer(&cfg, &model.params).unwrap();
        train_step(&mut model, &mut opt, &tiny_batch(), &cfg, 0, &Sequential).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &cfg, &model, &opt).unwrap();
        let back = read_checkpoint(&mut buf.as_slice()).unwrap();
        assert_eq!(back.config, cfg);
        assert_eq!(back.model.params, model.params);
        assert_eq!(back.optimizer, opt);
        let mut again = Vec::new();
        write_checkpoint(&mut again, &back.config, &back.model, &back.optimizer).unwrap();
        assert_eq!(again, buf);
        assert!(read_checkpoint(&mut &buf[..buf.len() - 3]).is_err());
    }
}
