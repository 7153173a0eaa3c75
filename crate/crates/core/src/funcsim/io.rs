//! Binary tensor container.
//!
//! Layout: magic `QT8\0`, then `c`, `h`, `w` as little-endian u32 (16 bytes
//! in all), one signed byte per element channels-first, and a trailing signed
//! byte holding the scale exponent. Weights reuse the container with
//! `c = OC * IC` (regular) or `c = OC` (depthwise), `h = Y`, `w = X`; a
//! text descriptor records which.

use super::{QuantTensor, QuantWeights, WeightLayout};
use crate::error::{Error, Result};
use crate::netir::TensorShape;
use std::io::{Read, Write};

const MAGIC: &[u8; 4] = b"QT8\0";

pub fn write_tensor<W: Write>(mut out: W, tensor: &QuantTensor) -> Result<()> {
    let exponent = i8::try_from(tensor.scale_exponent).map_err(|_| {
        Error::TensorFormat(format!("scale exponent {} does not fit in a byte", tensor.scale_exponent))
    })?;
    out.write_all(MAGIC)?;
    for dim in [tensor.shape.channels, tensor.shape.height, tensor.shape.width] {
        let dim = u32::try_from(dim).map_err(|_| Error::TensorFormat("dimension overflows u32".into()))?;
        out.write_all(&dim.to_le_bytes())?;
    }
    let bytes: Vec<u8> = tensor.data.iter().map(|&v| v as u8).collect();
    out.write_all(&bytes)?;
    out.write_all(&[exponent as u8])?;
    Ok(())
}

pub fn read_tensor<R: Read>(mut input: R) -> Result<QuantTensor> {
    let mut header = [0u8; 16];
    input
        .read_exact(&mut header)
        .map_err(|_| Error::TensorFormat("truncated header".into()))?;
    if &header[..4] != MAGIC {
        return Err(Error::TensorFormat("bad magic".into()));
    }
    let dim = |k: usize| u32::from_le_bytes(header[4 + 4 * k..8 + 4 * k].try_into().unwrap()) as usize;
    let shape = TensorShape::new(dim(0), dim(1), dim(2));
    shape
        .validate()
        .map_err(|e| Error::TensorFormat(e.to_string()))?;
    let mut body = Vec::new();
    input.read_to_end(&mut body)?;
    if body.len() != shape.elements() + 1 {
        return Err(Error::TensorFormat(format!(
            "expected {} payload bytes, found {}",
            shape.elements() + 1,
            body.len()
        )));
    }
    let exponent = body.pop().unwrap() as i8;
    QuantTensor::new(shape, body.into_iter().map(|b| b as i8).collect(), exponent as i32)
}

pub fn weight_descriptor(layout: &WeightLayout) -> String {
    match *layout {
        WeightLayout::Regular { oc, ic, ky, kx } => {
            format!("layout regular\noc {oc}\nic {ic}\nky {ky}\nkx {kx}\n")
        }
        WeightLayout::Depthwise { oc, ky, kx } => {
            format!("layout depthwise\noc {oc}\nky {ky}\nkx {kx}\n")
        }
    }
}

pub fn parse_weight_descriptor(text: &str) -> Result<WeightLayout> {
    let mut layout = None;
    let (mut oc, mut ic, mut ky, mut kx) = (None, None, None, None);
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
        let (key, value) = line
            .split_once(char::is_whitespace)
            .ok_or_else(|| Error::TensorFormat(format!("descriptor line `{line}`")))?;
        let value = value.trim();
        let count = || {
            value
                .parse::<usize>()
                .map_err(|_| Error::TensorFormat(format!("bad count `{value}` for {key}")))
        };
        match key {
            "layout" => layout = Some(value.to_string()),
            "oc" => oc = Some(count()?),
            "ic" => ic = Some(count()?),
            "ky" => ky = Some(count()?),
            "kx" => kx = Some(count()?),
            _ => return Err(Error::TensorFormat(format!("unknown descriptor key `{key}`"))),
        }
    }
    let need = |v: Option<usize>, name: &str| {
        v.ok_or_else(|| Error::TensorFormat(format!("descriptor lacks `{name}`")))
    };
    match layout.as_deref() {
        Some("regular") => Ok(WeightLayout::Regular {
            oc: need(oc, "oc")?,
            ic: need(ic, "ic")?,
            ky: need(ky, "ky")?,
            kx: need(kx, "kx")?,
        }),
        Some("depthwise") => Ok(WeightLayout::Depthwise {
            oc: need(oc, "oc")?,
            ky: need(ky, "ky")?,
            kx: need(kx, "kx")?,
        }),
        _ => Err(Error::TensorFormat("descriptor needs `layout regular|depthwise`".into())),
    }
}

fn container_shape(layout: &WeightLayout) -> TensorShape {
    match *layout {
        WeightLayout::Regular { oc, ic, ky, kx } => TensorShape::new(oc * ic, ky, kx),
        WeightLayout::Depthwise { oc, ky, kx } => TensorShape::new(oc, ky, kx),
    }
}

/// Writes the container and returns the descriptor text.
pub fn write_weights<W: Write>(out: W, weights: &QuantWeights) -> Result<String> {
    let tensor = QuantTensor::new(
        container_shape(&weights.layout),
        weights.data.clone(),
        weights.scale_exponent,
    )?;
    write_tensor(out, &tensor)?;
    Ok(weight_descriptor(&weights.layout))
}

pub fn read_weights<R: Read>(input: R, descriptor: &str) -> Result<QuantWeights> {
    let layout = parse_weight_descriptor(descriptor)?;
    let tensor = read_tensor(input)?;
    if tensor.shape != container_shape(&layout) {
        return Err(Error::TensorFormat(format!(
            "container {} does not match descriptor {layout:?}",
            tensor.shape
        )));
    }
    QuantWeights::new(layout, tensor.data, tensor.scale_exponent)
}
