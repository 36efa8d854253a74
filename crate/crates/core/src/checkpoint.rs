//! Parameter checkpoints: one JSON header line, then every parameter as a
//! little-endian `f64` in layout order.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeds::sha256_hex;
use crate::toy::{ParamShape, ToyModelParams, TrainConfig};

pub const CHECKPOINT_FORMAT: &str = "quatrope-toy-checkpoint/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub format: String,
    pub shape: ParamShape,
    pub n_params: usize,
    pub seed: u64,
    /// SHA-256 of the compact JSON form of `config`.
    pub config_hash: String,
    pub config: TrainConfig,
}

pub fn config_hash(cfg: &TrainConfig) -> Result<String> {
    Ok(sha256_hex(&serde_json::to_vec(cfg)?))
}

impl CheckpointHeader {
    pub fn new(params: &ToyModelParams, cfg: &TrainConfig) -> Result<Self> {
        Ok(Self {
            format: CHECKPOINT_FORMAT.into(),
            shape: params.shape,
            n_params: params.data.len(),
            seed: cfg.seed,
            config_hash: config_hash(cfg)?,
            config: cfg.clone(),
        })
    }
}

pub fn write_checkpoint<W: Write>(
    mut w: W,
    params: &ToyModelParams,
    cfg: &TrainConfig,
) -> Result<()> {
    let header = CheckpointHeader::new(params, cfg)?;
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    let mut buf = Vec::with_capacity(8 * params.data.len());
    for x in &params.data {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    w.write_all(&buf)?;
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(r: R) -> Result<(CheckpointHeader, ToyModelParams)> {
    let mut r = BufReader::new(r);
    let mut line = Vec::new();
    r.read_until(b'\n', &mut line)?;
    if line.last() != Some(&b'\n') {
        return Err(Error::Checkpoint("missing header line".into()));
    }
    let header: CheckpointHeader = serde_json::from_slice(&line[..line.len() - 1])
        .map_err(|e| Error::Checkpoint(format!("bad header: {e}")))?;
    if header.format != CHECKPOINT_FORMAT {
        return Err(Error::Checkpoint(format!(
            "unsupported format {:?}",
            header.format
        )));
    }
    if header.shape.len() != header.n_params {
        return Err(Error::Checkpoint(format!(
            "shape implies {} parameters, header says {}",
            header.shape.len(),
            header.n_params
        )));
    }
    if config_hash(&header.config)? != header.config_hash {
        return Err(Error::Checkpoint(
            "config hash does not match config".into(),
        ));
    }
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    if payload.len() != 8 * header.n_params {
        return Err(Error::Checkpoint(format!(
            "expected {} payload bytes, found {}",
            8 * header.n_params,
            payload.len()
        )));
    }
    let data = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    let params = ToyModelParams {
        shape: header.shape,
        data,
    };
    Ok((header, params))
}

pub fn save(path: &Path, params: &ToyModelParams, cfg: &TrainConfig) -> Result<()> {
    let f = std::fs::File::create(path)?;
    write_checkpoint(std::io::BufWriter::new(f), params, cfg)
}

pub fn load(path: &Path) -> Result<(CheckpointHeader, ToyModelParams)> {
    read_checkpoint(std::fs::File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toy::ModelConfig;

    fn cfg() -> TrainConfig {
        TrainConfig {
            model: ModelConfig {
                d_model: 6,
                heads: 1,
                layers: 1,
                n_categories: 2,
                ..ModelConfig::default()
            },
            ..TrainConfig::default()
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let cfg = cfg();
        let p = ToyModelParams::init(&cfg.model, 9);
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &p, &cfg).unwrap();
        let (h, back) = read_checkpoint(buf.as_slice()).unwrap();
        assert_eq!(h.config, cfg);
        assert_eq!(back, p);
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let cfg = cfg();
        let p = ToyModelParams::init(&cfg.model, 9);
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &p, &cfg).unwrap();
        buf.pop();
        assert!(matches!(
            read_checkpoint(buf.as_slice()),
            Err(Error::Checkpoint(_))
        ));
    }
}
