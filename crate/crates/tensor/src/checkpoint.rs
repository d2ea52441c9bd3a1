use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{AdamHyper, AdamW, Parameter, TensorError};

pub const CKPT_MAGIC: [u8; 4] = *b"CKPT";
pub const CKPT_VERSION: u16 = 1;
const PREFIX_LEN: usize = 4 + 2 + 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub decay_exempt: bool,
}

impl ParamEntry {
    fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub params: Vec<ParamEntry>,
    pub optimizer: AdamHyper,
    pub step: u64,
    pub epoch: usize,
    pub val_loss: f64,
    /// Opaque model configuration, checked by the model crate on load.
    #[serde(default)]
    pub model: serde_json::Value,
}

/// Parameter values plus AdamW moments, all as `f32`.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub params: Vec<Vec<f32>>,
    pub m: Vec<Vec<f32>>,
    pub v: Vec<Vec<f32>>,
}

impl Checkpoint {
    pub fn capture(
        params: &[Parameter<f32>],
        opt: &AdamW<f32>,
        epoch: usize,
        val_loss: f64,
        model: serde_json::Value,
    ) -> Self {
        let header = CheckpointHeader {
            params: params
                .iter()
                .map(|p| ParamEntry {
                    name: p.name.clone(),
                    shape: p.tensor.shape().to_vec(),
                    decay_exempt: p.decay_exempt,
                })
                .collect(),
            optimizer: opt.hyper,
            step: opt.step,
            epoch,
            val_loss,
            model,
        };
        Self {
            header,
            params: params.iter().map(|p| p.tensor.to_vec()).collect(),
            m: opt.m.clone(),
            v: opt.v.clone(),
        }
    }

    /// Copies values into `params`, which must match names and shapes.
    pub fn restore_params(&self, params: &[Parameter<f32>]) -> Result<(), TensorError> {
        if params.len() != self.header.params.len() {
            return Err(TensorError::Checkpoint(format!(
                "checkpoint has {} parameters, model has {}",
                self.header.params.len(),
                params.len()
            )));
        }
        for ((p, e), data) in params.iter().zip(&self.header.params).zip(&self.params) {
            if p.name != e.name || p.tensor.shape() != e.shape.as_slice() {
                return Err(TensorError::Checkpoint(format!(
                    "parameter {} {:?} does not match checkpoint entry {} {:?}",
                    p.name,
                    p.tensor.shape(),
                    e.name,
                    e.shape
                )));
            }
            p.tensor.set_data(data.clone());
        }
        Ok(())
    }

    pub fn optimizer(&self) -> AdamW<f32> {
        AdamW {
            hyper: self.header.optimizer,
            step: self.header.step,
            m: self.m.clone(),
            v: self.v.clone(),
        }
    }
}

pub fn encode_checkpoint(ck: &Checkpoint) -> Result<Vec<u8>, TensorError> {
    let n = ck.header.params.len();
    if ck.params.len() != n || ck.m.len() != n || ck.v.len() != n {
        return Err(TensorError::Checkpoint("buffer count does not match header".into()));
    }
    for (i, e) in ck.header.params.iter().enumerate() {
        let k = e.numel();
        if ck.params[i].len() != k || ck.m[i].len() != k || ck.v[i].len() != k {
            return Err(TensorError::Checkpoint(format!("buffer size mismatch for {}", e.name)));
        }
    }
    let json = serde_json::to_vec(&ck.header).map_err(|e| TensorError::Checkpoint(e.to_string()))?;
    let floats: usize = ck.header.params.iter().map(ParamEntry::numel).sum::<usize>() * 3;
    let mut out = Vec::with_capacity(PREFIX_LEN + json.len() + 4 * floats);
    out.extend_from_slice(&CKPT_MAGIC);
    out.extend_from_slice(&CKPT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for buf in ck.params.iter().chain(&ck.m).chain(&ck.v) {
        for x in buf {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint, TensorError> {
    if bytes.len() < PREFIX_LEN {
        return Err(TensorError::SizeMismatch {
            expected: PREFIX_LEN,
            actual: bytes.len(),
        });
    }
    let found: [u8; 4] = bytes[..4].try_into().expect("4 bytes");
    if found != CKPT_MAGIC {
        return Err(TensorError::BadMagic {
            expected: CKPT_MAGIC,
            found,
        });
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != CKPT_VERSION {
        return Err(TensorError::Checkpoint(format!("unsupported version {version}")));
    }
    let hlen = u32::from_le_bytes(bytes[6..10].try_into().expect("4 bytes")) as usize;
    let body = PREFIX_LEN + hlen;
    if bytes.len() < body {
        return Err(TensorError::SizeMismatch {
            expected: body,
            actual: bytes.len(),
        });
    }
    let header: CheckpointHeader =
        serde_json::from_slice(&bytes[PREFIX_LEN..body]).map_err(|e| TensorError::Checkpoint(e.to_string()))?;
    let floats: usize = header.params.iter().map(ParamEntry::numel).sum();
    let expected = body + 12 * floats;
    if bytes.len() != expected {
        return Err(TensorError::SizeMismatch {
            expected,
            actual: bytes.len(),
        });
    }
    let mut chunks = bytes[body..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")));
    let mut take = || -> Vec<Vec<f32>> {
        header
            .params
            .iter()
            .map(|e| chunks.by_ref().take(e.numel()).collect())
            .collect()
    };
    let params = take();
    let m = take();
    let v = take();
    Ok(Checkpoint { header, params, m, v })
}

pub fn write_checkpoint(path: &Path, ck: &Checkpoint) -> Result<(), TensorError> {
    let bytes = encode_checkpoint(ck)?;
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint, TensorError> {
    decode_checkpoint(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Tensor;

    fn sample() -> Checkpoint {
        let params = vec![
            Parameter::new("a.weight", Tensor::leaf(&[2, 3], vec![0.5f32, -1.0, 2.0, 3.5, 1e-7, -0.0]), false),
            Parameter::new("a.bias", Tensor::leaf(&[2], vec![0.25f32, f32::MIN_POSITIVE]), true),
        ];
        let mut opt = AdamW::new(AdamHyper::default(), &params);
        opt.m[0][1] = 0.125;
        opt.v[1][0] = 3.0;
        opt.step = 7;
        Checkpoint::capture(&params, &opt, 3, 0.4321, serde_json::json!({"width": 8}))
    }

    #[test]
    fn round_trip_and_layout() {
        let ck = sample();
        let bytes = encode_checkpoint(&ck).unwrap();
        assert_eq!(&bytes[..4], b"CKPT");
        let hlen = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
        assert_eq!(bytes.len(), 10 + hlen + 4 * 8 * 3);
        let back = decode_checkpoint(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(encode_checkpoint(&back).unwrap(), bytes);
    }

    #[test]
    fn rejects_corruption() {
        let bytes = encode_checkpoint(&sample()).unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_checkpoint(&bad), Err(TensorError::BadMagic { .. })));
        assert!(matches!(
            decode_checkpoint(&bytes[..bytes.len() - 1]),
            Err(TensorError::SizeMismatch { .. })
        ));
        assert!(decode_checkpoint(&bytes[..5]).is_err());
    }

    #[test]
    fn restore_checks_names() {
        let ck = sample();
        let p = vec![
            Parameter::new("a.weight", Tensor::<f32>::zeros(&[2, 3]), false),
            Parameter::new("a.bias", Tensor::<f32>::zeros(&[2]), true),
        ];
        ck.restore_params(&p).unwrap();
        assert_eq!(p[0].tensor.to_vec(), ck.params[0]);
        let wrong = vec![p[1].clone(), p[0].clone()];
        assert!(ck.restore_params(&wrong).is_err());
        assert_eq!(ck.optimizer().step, 7);
    }
}
