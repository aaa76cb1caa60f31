//! NNW1 checkpoints.
//!
//! ```text
//! "NNW1"
//! u32 metadata length | metadata bytes (UTF-8, opaque to this module)
//! u32 node count
//!   per node: u8 kind | u32 input count | u32 inputs.. | u32 hparam count | u32 hparams..
//! u32 tensor count
//!   per tensor: one FAT1 raster (rank 1 [n] -> 1xnx1, rank 2 [a,b] -> axbx1,
//!   rank 4 [a,b,c,d] -> (a*b)xcxd)
//! ```
//!
//! All integers little-endian. Parameters are stored in single precision.

use std::io::Read;

use super::graph::{Graph, LayerSpec, Network, Node};
use super::ops::Padding;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::fat::FatRaster;
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 4] = b"NNW1";

fn fmt_err(detail: impl Into<String>) -> Error {
    Error::Format {
        what: "NNW1 checkpoint",
        detail: detail.into(),
    }
}

fn encode_layer(layer: &LayerSpec) -> (u8, Vec<u32>) {
    let u = |v: usize| v as u32;
    match layer {
        LayerSpec::Input { shape } => (0, shape.iter().map(|&d| u(d)).collect()),
        LayerSpec::Conv2D {
            kernel: (kh, kw),
            stride,
            in_channels,
            out_channels,
            padding,
        } => (
            1,
            vec![
                u(*kh),
                u(*kw),
                u(*stride),
                u(*in_channels),
                u(*out_channels),
                match padding {
                    Padding::Same => 0,
                    Padding::Valid => 1,
                },
            ],
        ),
        LayerSpec::MaxPool2D { size, stride } => (2, vec![u(*size), u(*stride)]),
        LayerSpec::TransposeConv2D {
            kernel: (kh, kw),
            stride,
            in_channels,
            out_channels,
        } => (
            3,
            vec![u(*kh), u(*kw), u(*stride), u(*in_channels), u(*out_channels)],
        ),
        LayerSpec::FullyConnected {
            in_features,
            out_features,
        } => (4, vec![u(*in_features), u(*out_features)]),
        LayerSpec::ReLU => (5, vec![]),
        LayerSpec::ConcatChannels => (6, vec![]),
        LayerSpec::Reshape { shape } => (7, shape.iter().map(|&d| u(d)).collect()),
    }
}

fn decode_layer(kind: u8, h: &[u32]) -> Result<LayerSpec> {
    let d: Vec<usize> = h.iter().map(|&v| v as usize).collect();
    let arity = |n: usize| {
        if d.len() == n {
            Ok(())
        } else {
            Err(fmt_err(format!(
                "layer kind {kind} expects {n} hyperparameters, got {}",
                d.len()
            )))
        }
    };
    Ok(match kind {
        0 => LayerSpec::Input { shape: d },
        1 => {
            arity(6)?;
            LayerSpec::Conv2D {
                kernel: (d[0], d[1]),
                stride: d[2],
                in_channels: d[3],
                out_channels: d[4],
                padding: match d[5] {
                    0 => Padding::Same,
                    1 => Padding::Valid,
                    p => return Err(fmt_err(format!("padding code {p}"))),
                },
            }
        }
        2 => {
            arity(2)?;
            LayerSpec::MaxPool2D {
                size: d[0],
                stride: d[1],
            }
        }
        3 => {
            arity(5)?;
            LayerSpec::TransposeConv2D {
                kernel: (d[0], d[1]),
                stride: d[2],
                in_channels: d[3],
                out_channels: d[4],
            }
        }
        4 => {
            arity(2)?;
            LayerSpec::FullyConnected {
                in_features: d[0],
                out_features: d[1],
            }
        }
        5 => {
            arity(0)?;
            LayerSpec::ReLU
        }
        6 => {
            arity(0)?;
            LayerSpec::ConcatChannels
        }
        7 => LayerSpec::Reshape { shape: d },
        k => return Err(fmt_err(format!("unknown layer kind {k}"))),
    })
}

fn raster_dims(shape: &[usize]) -> Result<(usize, usize, usize)> {
    match *shape {
        [n] => Ok((1, n, 1)),
        [a, b] => Ok((a, b, 1)),
        [a, b, c, d] => Ok((a * b, c, d)),
        _ => Err(fmt_err(format!("cannot store a rank-{} tensor", shape.len()))),
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub fn encode<T: Scalar>(net: &Network<T>, metadata: &str) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, metadata.len() as u32);
    out.extend_from_slice(metadata.as_bytes());
    let nodes = net.graph().nodes();
    put_u32(&mut out, nodes.len() as u32);
    for node in nodes {
        let (kind, hp) = encode_layer(&node.layer);
        out.push(kind);
        put_u32(&mut out, node.inputs.len() as u32);
        for &i in &node.inputs {
            put_u32(&mut out, i as u32);
        }
        put_u32(&mut out, hp.len() as u32);
        for v in hp {
            put_u32(&mut out, v);
        }
    }
    put_u32(&mut out, net.params().len() as u32);
    for p in net.params() {
        let (h, w, c) = raster_dims(p.shape())?;
        let data: Vec<f32> = p.data().iter().map(|v| v.to_f64_lossy() as f32).collect();
        FatRaster::new(h, w, c, data)?.write_to(&mut out).expect("Vec write");
    }
    Ok(out)
}

fn read_u32(r: &mut &[u8]) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|_| fmt_err("truncated"))?;
    Ok(u32::from_le_bytes(b))
}

/// Parses a checkpoint; parameter shapes are validated against the graph.
pub fn decode<T: Scalar>(bytes: &[u8]) -> Result<(Network<T>, String)> {
    let mut r = bytes;
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| fmt_err("truncated"))?;
    if &magic != MAGIC {
        return Err(fmt_err(format!("bad magic {magic:?}")));
    }
    let meta_len = read_u32(&mut r)? as usize;
    if r.len() < meta_len {
        return Err(fmt_err("truncated metadata"));
    }
    let metadata = std::str::from_utf8(&r[..meta_len])
        .map_err(|e| fmt_err(format!("metadata: {e}")))?
        .to_owned();
    r = &r[meta_len..];

    let n_nodes = read_u32(&mut r)? as usize;
    let mut nodes = Vec::with_capacity(n_nodes.min(4096));
    for _ in 0..n_nodes {
        let mut kind = [0u8; 1];
        r.read_exact(&mut kind).map_err(|_| fmt_err("truncated"))?;
        let n_in = read_u32(&mut r)? as usize;
        let inputs = (0..n_in)
            .map(|_| read_u32(&mut r).map(|v| v as usize))
            .collect::<Result<Vec<_>>>()?;
        let n_hp = read_u32(&mut r)? as usize;
        let hp = (0..n_hp)
            .map(|_| read_u32(&mut r))
            .collect::<Result<Vec<_>>>()?;
        nodes.push(Node {
            layer: decode_layer(kind[0], &hp)?,
            inputs,
        });
    }
    let graph = Graph::from_nodes(nodes)?;
    let shapes = graph.param_shapes();
    let n_tensors = read_u32(&mut r)? as usize;
    if n_tensors != shapes.len() {
        return Err(fmt_err(format!(
            "layer table needs {} tensors, file has {n_tensors}",
            shapes.len()
        )));
    }
    let mut params = Vec::with_capacity(n_tensors);
    for (i, shape) in shapes.iter().enumerate() {
        let fat = FatRaster::read_from(&mut r)?;
        let (h, w, c) = raster_dims(shape)?;
        if (fat.height as usize, fat.width as usize, fat.channels as usize) != (h, w, c) {
            return Err(fmt_err(format!(
                "tensor {i}: stored {}x{}x{}, layer needs {shape:?}",
                fat.height, fat.width, fat.channels
            )));
        }
        let data = fat
            .data
            .iter()
            .map(|&v| T::from_f64_lossy(v as f64))
            .collect();
        params.push(Tensor::from_vec(shape, data)?);
    }
    if !r.is_empty() {
        return Err(fmt_err(format!("{} trailing bytes", r.len())));
    }
    Ok((Network::from_params(graph, params)?, metadata))
}
