//! Binary model container: magic, format version, architecture descriptor,
//! ZCA transforms, all layer parameters, training provenance, and a SHA-256
//! checksum over everything preceding it.
//!
//! Round-trips are bit-identical; corrupt files fail the checksum and
//! unknown versions are rejected before any content is interpreted.

use super::atomic_write;
use crate::cnn::CnnModel;
use crate::error::{CoreError, Result};
use crate::msmlp::MsMlpModel;
use crate::nn::Tensor;
use crate::pretrain::ZcaTransform;
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::io::Read;
use std::path::Path;

const MAGIC: &[u8; 8] = b"ORCHMDL\x01";
const FORMAT_VERSION: u32 = 1;

const KIND_MSMLP: u8 = 0;
const KIND_CNN: u8 = 1;

/// A trained model of either architecture, as stored on disk (f32).
#[derive(Clone, Debug)]
pub enum NetworkModel {
    MsMlp(MsMlpModel<f32>),
    Cnn(CnnModel<f32>),
}

impl NetworkModel {
    pub fn kind_name(&self) -> &'static str {
        match self {
            NetworkModel::MsMlp(_) => "msmlp",
            NetworkModel::Cnn(_) => "cnn",
        }
    }

    pub fn metadata_enabled(&self) -> bool {
        match self {
            NetworkModel::MsMlp(m) => m.arch.metadata_enabled(),
            NetworkModel::Cnn(m) => m.arch.metadata_enabled(),
        }
    }

    pub fn encoder_spec(&self) -> Option<&crate::metadata::EncoderSpec> {
        match self {
            NetworkModel::MsMlp(m) => m.arch.metadata.as_ref(),
            NetworkModel::Cnn(m) => m.arch.metadata.as_ref(),
        }
    }
}

/// Training provenance embedded in the model file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelProvenance {
    pub seed: u64,
    pub epochs: u32,
    /// Hash-friendly summary of the training configuration.
    pub config_summary: String,
}

fn write_tensor(out: &mut Vec<u8>, t: &Tensor<f32>) {
    out.write_u8(t.shape().len() as u8).unwrap();
    for &d in t.shape() {
        out.write_u32::<LittleEndian>(d as u32).unwrap();
    }
    out.write_u64::<LittleEndian>(t.len() as u64).unwrap();
    for &v in t.data() {
        out.write_f32::<LittleEndian>(v).unwrap();
    }
}

fn read_tensor(input: &mut &[u8], path: &Path) -> Result<Tensor<f32>> {
    let parse = |m: &str| CoreError::parse(path.display().to_string(), m.to_string());
    let rank = input.read_u8().map_err(|_| parse("truncated tensor rank"))?;
    if rank == 0 || rank > 4 {
        return Err(parse(&format!("bad tensor rank {rank}")));
    }
    let mut shape = Vec::with_capacity(rank as usize);
    for _ in 0..rank {
        shape.push(
            input
                .read_u32::<LittleEndian>()
                .map_err(|_| parse("truncated tensor shape"))? as usize,
        );
    }
    let len = input
        .read_u64::<LittleEndian>()
        .map_err(|_| parse("truncated tensor length"))? as usize;
    if len != shape.iter().product::<usize>() {
        return Err(parse("tensor length does not match shape"));
    }
    let mut data = vec![0.0f32; len];
    for v in &mut data {
        *v = input
            .read_f32::<LittleEndian>()
            .map_err(|_| parse("truncated tensor data"))?;
    }
    Tensor::from_vec(&shape, data)
}

fn write_zca(out: &mut Vec<u8>, z: &ZcaTransform) {
    out.write_u32::<LittleEndian>(z.dim() as u32).unwrap();
    out.write_f64::<LittleEndian>(z.epsilon()).unwrap();
    for &v in z.mean() {
        out.write_f64::<LittleEndian>(v).unwrap();
    }
    for &v in z.matrix() {
        out.write_f64::<LittleEndian>(v).unwrap();
    }
}

fn read_zca(input: &mut &[u8], path: &Path) -> Result<ZcaTransform> {
    let parse = |m: &str| CoreError::parse(path.display().to_string(), m.to_string());
    let dim = input
        .read_u32::<LittleEndian>()
        .map_err(|_| parse("truncated ZCA dim"))? as usize;
    let epsilon = input
        .read_f64::<LittleEndian>()
        .map_err(|_| parse("truncated ZCA epsilon"))?;
    let mut mean = vec![0.0f64; dim];
    for v in &mut mean {
        *v = input
            .read_f64::<LittleEndian>()
            .map_err(|_| parse("truncated ZCA mean"))?;
    }
    let mut mat = vec![0.0f64; dim * dim];
    for v in &mut mat {
        *v = input
            .read_f64::<LittleEndian>()
            .map_err(|_| parse("truncated ZCA matrix"))?;
    }
    ZcaTransform::from_parts(dim, mean, mat, epsilon)
}

fn write_json<T: Serialize>(out: &mut Vec<u8>, value: &T) {
    let json = serde_json::to_vec(value).expect("serializable");
    out.write_u32::<LittleEndian>(json.len() as u32).unwrap();
    out.extend_from_slice(&json);
}

fn read_json<'a, T: serde::de::DeserializeOwned>(input: &mut &'a [u8], path: &Path) -> Result<T> {
    let parse = |m: String| CoreError::parse(path.display().to_string(), m);
    let len = input
        .read_u32::<LittleEndian>()
        .map_err(|_| parse("truncated JSON header".into()))? as usize;
    if input.len() < len {
        return Err(parse("truncated JSON payload".into()));
    }
    let (json, rest) = input.split_at(len);
    *input = rest;
    serde_json::from_slice(json).map_err(|e| parse(e.to_string()))
}

/// Tensors in the model's canonical parameter order.
fn model_tensors(model: &NetworkModel) -> Vec<&Tensor<f32>> {
    let mut out: Vec<&Tensor<f32>> = Vec::new();
    match model {
        NetworkModel::MsMlp(m) => {
            for p in &m.scale_layers {
                out.push(&p.w);
                out.push(&p.b);
            }
            if let Some(mw) = &m.meta_weights {
                for u in mw {
                    out.push(u);
                }
            }
            for p in &m.dense {
                out.push(&p.w);
                out.push(&p.b);
            }
            out.push(&m.softmax.w);
            out.push(&m.softmax.b);
        }
        NetworkModel::Cnn(m) => {
            for c in &m.convs {
                out.push(&c.kernels);
                out.push(&c.b);
            }
            for p in &m.fcs {
                out.push(&p.w);
                out.push(&p.b);
            }
            if let Some(u) = &m.meta_weights {
                out.push(u);
            }
            out.push(&m.softmax.w);
            out.push(&m.softmax.b);
        }
    }
    out
}

/// Serializes and atomically writes a model file.
pub fn save_model(path: &Path, model: &NetworkModel, provenance: &ModelProvenance) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.write_u32::<LittleEndian>(FORMAT_VERSION).unwrap();
    match model {
        NetworkModel::MsMlp(m) => {
            out.write_u8(KIND_MSMLP).unwrap();
            write_json(&mut out, &m.arch);
            out.write_u32::<LittleEndian>(m.zca.len() as u32).unwrap();
            for z in &m.zca {
                write_zca(&mut out, z);
            }
        }
        NetworkModel::Cnn(m) => {
            out.write_u8(KIND_CNN).unwrap();
            write_json(&mut out, &m.arch);
            out.write_u32::<LittleEndian>(0).unwrap();
        }
    }
    let tensors = model_tensors(model);
    out.write_u32::<LittleEndian>(tensors.len() as u32).unwrap();
    for t in tensors {
        write_tensor(&mut out, t);
    }
    write_json(&mut out, provenance);
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    atomic_write(path, &out)
}

/// Loads a model file, verifying checksum and version first.
pub fn load_model(path: &Path) -> Result<(NetworkModel, ModelProvenance)> {
    let bytes = std::fs::read(path).map_err(|e| CoreError::io(path.display().to_string(), e))?;
    if bytes.len() < MAGIC.len() + 4 + 32 {
        return Err(CoreError::Integrity(format!(
            "{} is too short to be a model file",
            path.display()
        )));
    }
    let (payload, stored_digest) = bytes.split_at(bytes.len() - 32);
    let digest = Sha256::digest(payload);
    if digest.as_slice() != stored_digest {
        return Err(CoreError::Integrity(format!(
            "checksum mismatch in {}",
            path.display()
        )));
    }
    let mut input: &[u8] = payload;
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic).unwrap();
    if &magic != MAGIC {
        return Err(CoreError::Version(format!(
            "{} is not an orchard model file",
            path.display()
        )));
    }
    let version = input.read_u32::<LittleEndian>().unwrap();
    if version != FORMAT_VERSION {
        return Err(CoreError::Version(format!(
            "unsupported model format version {version} (expected {FORMAT_VERSION})"
        )));
    }
    let kind = input
        .read_u8()
        .map_err(|_| CoreError::parse(path.display().to_string(), "truncated kind".to_string()))?;

    let model = match kind {
        KIND_MSMLP => {
            let arch: crate::msmlp::MsMlpArch = read_json(&mut input, path)?;
            let n_zca = input
                .read_u32::<LittleEndian>()
                .map_err(|_| CoreError::parse(path.display().to_string(), "truncated ZCA count".to_string()))?;
            let mut zca = Vec::with_capacity(n_zca as usize);
            for _ in 0..n_zca {
                zca.push(read_zca(&mut input, path)?);
            }
            let mut model = MsMlpModel::<f32>::zeroed(arch, zca)?;
            let n_tensors = input
                .read_u32::<LittleEndian>()
                .map_err(|_| CoreError::parse(path.display().to_string(), "truncated tensor count".to_string()))?;
            let mut tensors = Vec::with_capacity(n_tensors as usize);
            for _ in 0..n_tensors {
                tensors.push(read_tensor(&mut input, path)?);
            }
            fill_params(model.param_slices_mut(), &tensors, path)?;
            NetworkModel::MsMlp(model)
        }
        KIND_CNN => {
            let arch: crate::cnn::CnnArch = read_json(&mut input, path)?;
            let n_zca = input
                .read_u32::<LittleEndian>()
                .map_err(|_| CoreError::parse(path.display().to_string(), "truncated ZCA count".to_string()))?;
            if n_zca != 0 {
                return Err(CoreError::parse(
                    path.display().to_string(),
                    "CNN models carry no ZCA transforms".to_string(),
                ));
            }
            let mut model = CnnModel::<f32>::zeroed(arch)?;
            let n_tensors = input
                .read_u32::<LittleEndian>()
                .map_err(|_| CoreError::parse(path.display().to_string(), "truncated tensor count".to_string()))?;
            let mut tensors = Vec::with_capacity(n_tensors as usize);
            for _ in 0..n_tensors {
                tensors.push(read_tensor(&mut input, path)?);
            }
            fill_params(model.param_slices_mut(), &tensors, path)?;
            NetworkModel::Cnn(model)
        }
        other => {
            return Err(CoreError::parse(
                path.display().to_string(),
                format!("unknown model kind {other}"),
            ))
        }
    };
    let provenance: ModelProvenance = read_json(&mut input, path)?;
    Ok((model, provenance))
}

fn fill_params(mut slots: Vec<&mut [f32]>, tensors: &[Tensor<f32>], path: &Path) -> Result<()> {
    if slots.len() != tensors.len() {
        return Err(CoreError::parse(
            path.display().to_string(),
            format!(
                "model stores {} tensors but the architecture expects {}",
                tensors.len(),
                slots.len()
            ),
        ));
    }
    for (slot, tensor) in slots.iter_mut().zip(tensors.iter()) {
        if slot.len() != tensor.len() {
            return Err(CoreError::parse(
                path.display().to_string(),
                "tensor extent mismatch against architecture".to_string(),
            ));
        }
        slot.copy_from_slice(tensor.data());
    }
    Ok(())
}
