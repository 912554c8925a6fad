//! Versioned binary container for networks.
//!
//! Layout (all integers little-endian `u32`):
//!
//! ```text
//! "GNET" version h w c spec_len spec_json[spec_len] layer_count
//! per layer: has_params(u8) [rank dims[rank] f32 weight... bias_len f32 bias...]
//! ```
//!
//! A JSON sidecar `<path>.json` records the layer list, tensor shapes and
//! the parameter count.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{plan, LayerParams, LayerSpec, NetError, Network, Tensor};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"GNET";

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    format_version: u32,
    input_shape: [usize; 3],
    layers: Vec<LayerSpec>,
    tensors: Vec<TensorInfo>,
    parameter_count: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorInfo {
    layer: usize,
    name: String,
    shape: Vec<usize>,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_f32s(out: &mut Vec<u8>, data: &[f64]) {
    for &v in data {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

pub(crate) fn encode(net: &Network) -> Vec<u8> {
    let mut out = MAGIC.to_vec();
    put_u32(&mut out, FORMAT_VERSION as usize);
    for d in net.input_shape() {
        put_u32(&mut out, d);
    }
    let spec = serde_json::to_vec(&net.layers).expect("layer specs serialize");
    put_u32(&mut out, spec.len());
    out.extend_from_slice(&spec);
    put_u32(&mut out, net.params.len());
    for p in &net.params {
        match p {
            None => out.push(0),
            Some(lp) => {
                out.push(1);
                put_u32(&mut out, lp.weight.shape.len());
                for &d in &lp.weight.shape {
                    put_u32(&mut out, d);
                }
                put_f32s(&mut out, &lp.weight.data);
                put_u32(&mut out, lp.bias.len());
                put_f32s(&mut out, &lp.bias.data);
            }
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NetError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| NetError::BadFormat("truncated file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize, NetError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f64>, NetError> {
        let b = self.take(n.checked_mul(4).ok_or_else(|| NetError::BadFormat("size overflow".into()))?)?;
        Ok(b.chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect())
    }
}

pub(crate) fn decode(bytes: &[u8]) -> Result<Network, NetError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(NetError::BadFormat("bad magic".into()));
    }
    let version = r.u32()? as u32;
    if version != FORMAT_VERSION {
        return Err(NetError::BadFormat(format!("unsupported version {version}")));
    }
    let input = [r.u32()?, r.u32()?, r.u32()?];
    let spec_len = r.u32()?;
    let layers: Vec<LayerSpec> = serde_json::from_slice(r.take(spec_len)?)
        .map_err(|e| NetError::BadFormat(format!("layer specs: {e}")))?;
    let plan = plan(&layers, input)?;
    let count = r.u32()?;
    if count != layers.len() {
        return Err(NetError::BadFormat(format!(
            "{count} parameter slots for {} layers",
            layers.len()
        )));
    }
    let mut params = Vec::with_capacity(count);
    for (i, expected) in plan.param_shapes.iter().enumerate() {
        let flag = r.take(1)?[0];
        match (flag, expected) {
            (0, None) => params.push(None),
            (1, Some((wshape, blen))) => {
                let rank = r.u32()?;
                let shape = (0..rank).map(|_| r.u32()).collect::<Result<Vec<_>, _>>()?;
                if &shape != wshape {
                    return Err(NetError::BadFormat(format!(
                        "layer {i}: weight shape {shape:?}, expected {wshape:?}"
                    )));
                }
                let weight = r.f32s(shape.iter().product())?;
                let bl = r.u32()?;
                if bl != *blen {
                    return Err(NetError::BadFormat(format!("layer {i}: bias length {bl}, expected {blen}")));
                }
                let bias = r.f32s(bl)?;
                params.push(Some(LayerParams {
                    weight: Tensor::new(shape, weight)?,
                    bias: Tensor::new(vec![bl], bias)?,
                }));
            }
            _ => return Err(NetError::BadFormat(format!("layer {i}: unexpected parameter flag {flag}"))),
        }
    }
    if r.pos != bytes.len() {
        return Err(NetError::BadFormat("trailing bytes".into()));
    }
    Ok(Network {
        layers,
        plan,
        params,
    })
}

fn sidecar(net: &Network) -> Sidecar {
    let tensors = net
        .params
        .iter()
        .enumerate()
        .filter_map(|(i, p)| p.as_ref().map(|p| (i, p)))
        .flat_map(|(i, p)| {
            [
                TensorInfo {
                    layer: i,
                    name: "weight".into(),
                    shape: p.weight.shape.clone(),
                },
                TensorInfo {
                    layer: i,
                    name: "bias".into(),
                    shape: p.bias.shape.clone(),
                },
            ]
        })
        .collect();
    Sidecar {
        format_version: FORMAT_VERSION,
        input_shape: net.input_shape(),
        layers: net.layers.clone(),
        tensors,
        parameter_count: net.parameter_count(),
    }
}

/// Writes the container to `path` and the sidecar to `<path>.json`.
pub fn save(net: &Network, path: impl AsRef<Path>) -> Result<(), NetError> {
    let path = path.as_ref();
    std::fs::write(path, encode(net))?;
    let json = serde_json::to_vec_pretty(&sidecar(net)).expect("sidecar serializes");
    std::fs::write(sidecar_path(path), json)?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<Network, NetError> {
    decode(&std::fs::read(path)?)
}
