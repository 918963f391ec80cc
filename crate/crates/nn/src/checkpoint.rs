//! Versioned checkpoint container.
//!
//! Layout: magic `ECNN`, `u16` version, `u32` header length, JSON header
//! (layer specs, input shape, optimizer config/step, dropout RNG states,
//! caller metadata), then every state tensor as `f32` LE in layer order,
//! then the Adam moments as `f64` LE.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::adam::{Adam, AdamConfig};
use crate::error::{NnError, Result};
use crate::layers::{Layer, LayerSpec};
use crate::model::Sequential;

pub const MAGIC: &[u8; 4] = b"ECNN";
pub const VERSION: u16 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RngState {
    seed: Vec<u8>,
    stream: u64,
    word_pos: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    input_shape: Vec<usize>,
    specs: Vec<LayerSpec>,
    tensor_lens: Vec<usize>,
    adam: Option<(AdamConfig, u64, Vec<usize>)>,
    dropout_rngs: Vec<RngState>,
    meta: serde_json::Value,
}

pub struct Checkpoint {
    pub model: Sequential<f32>,
    pub adam: Option<Adam>,
    pub meta: serde_json::Value,
}

pub fn save<W: Write>(mut w: W, model: &Sequential<f32>, adam: Option<&Adam>, meta: serde_json::Value) -> Result<()> {
    let tensors: Vec<&Vec<f32>> = model.layers.iter().flat_map(Layer::state).collect();
    let dropout_rngs = model
        .layers
        .iter()
        .filter_map(|l| match l {
            Layer::Dropout(d) => {
                let (seed, stream, word_pos) = d.rng_state();
                Some(RngState {
                    seed: seed.to_vec(),
                    stream,
                    word_pos: word_pos.to_string(),
                })
            }
            _ => None,
        })
        .collect();
    let header = Header {
        input_shape: model.input_shape().to_vec(),
        specs: model.specs(),
        tensor_lens: tensors.iter().map(|t| t.len()).collect(),
        adam: adam.map(|a| (a.config, a.step, a.m.iter().map(Vec::len).collect())),
        dropout_rngs,
        meta,
    };
    let json = serde_json::to_vec(&header)?;
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(json.len() as u32).to_le_bytes())?;
    w.write_all(&json)?;
    for t in tensors {
        for v in t {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    if let Some(a) = adam {
        for t in a.m.iter().chain(&a.v) {
            for v in t {
                w.write_all(&v.to_le_bytes())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn read_f32s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f32>> {
    let mut buf = vec![0u8; n * 4];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub fn load<R: Read>(mut r: R) -> Result<Checkpoint> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(NnError::Checkpoint("bad magic".into()));
    }
    let mut b2 = [0u8; 2];
    r.read_exact(&mut b2)?;
    let version = u16::from_le_bytes(b2);
    if version != VERSION {
        return Err(NnError::Checkpoint(format!("unsupported version {version}")));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    let mut json = vec![0u8; u32::from_le_bytes(b4) as usize];
    r.read_exact(&mut json)?;
    let header: Header = serde_json::from_slice(&json)?;

    let mut model = Sequential::new(&header.input_shape, &header.specs, 0)?;
    {
        let slots: Vec<&mut Vec<f32>> = model.layers.iter_mut().flat_map(Layer::state_mut).collect();
        if slots.len() != header.tensor_lens.len() {
            return Err(NnError::Checkpoint("tensor count does not match layer specs".into()));
        }
        for (slot, &len) in slots.into_iter().zip(&header.tensor_lens) {
            if slot.len() != len {
                return Err(NnError::Checkpoint(format!(
                    "tensor length {len}, expected {}",
                    slot.len()
                )));
            }
            *slot = read_f32s(&mut r, len)?;
        }
    }
    let mut rngs = header.dropout_rngs.iter();
    for layer in &mut model.layers {
        if let Layer::Dropout(d) = layer {
            let s = rngs
                .next()
                .ok_or_else(|| NnError::Checkpoint("missing dropout RNG state".into()))?;
            let seed: [u8; 32] = s
                .seed
                .as_slice()
                .try_into()
                .map_err(|_| NnError::Checkpoint("bad RNG seed".into()))?;
            let pos = s
                .word_pos
                .parse()
                .map_err(|_| NnError::Checkpoint("bad RNG position".into()))?;
            d.set_rng_state(seed, s.stream, pos);
        }
    }
    let adam = match header.adam {
        Some((config, step, lens)) => {
            let mut a = Adam::new(config);
            a.step = step;
            for &len in &lens {
                a.m.push(read_f64s(&mut r, len)?);
            }
            for &len in &lens {
                a.v.push(read_f64s(&mut r, len)?);
            }
            Some(a)
        }
        None => None,
    };
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(NnError::Checkpoint(format!("{} trailing bytes", rest.len())));
    }
    Ok(Checkpoint {
        model,
        adam,
        meta: header.meta,
    })
}

pub fn save_file(path: &Path, model: &Sequential<f32>, adam: Option<&Adam>, meta: serde_json::Value) -> Result<()> {
    save(BufWriter::new(File::create(path)?), model, adam, meta)
}

pub fn load_file(path: &Path) -> Result<Checkpoint> {
    load(BufReader::new(File::open(path)?))
}
