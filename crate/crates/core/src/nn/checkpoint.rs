//! Binary model checkpoints.
//!
//! Layout (all integers little-endian `u32`, values `f64`):
//!
//! ```text
//! magic "PPCK" | version | conv_channels[3] | kernel | groups | hidden
//! | classes | input_shape[3] | tensor_count
//! | per tensor: ndim | dims[ndim] | values
//! ```

use std::io::{Read, Write};

use super::{ModelConfig, ModelParams, NnError, ParamSet, Tensor};

const MAGIC: &[u8; 4] = b"PPCK";
const VERSION: u32 = 1;

fn put_u32<W: Write>(w: &mut W, v: usize) -> std::io::Result<()> {
    w.write_all(&(v as u32).to_le_bytes())
}

pub fn write_checkpoint<W: Write>(params: &ModelParams, mut w: W) -> Result<(), NnError> {
    let cfg = params.config();
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    for v in cfg
        .conv_channels
        .iter()
        .chain([cfg.kernel_size, cfg.groupnorm_groups, cfg.hidden_units, cfg.num_classes].iter())
        .chain(cfg.input_shape.iter())
    {
        put_u32(&mut w, *v)?;
    }
    put_u32(&mut w, params.params().tensors().len())?;
    for t in params.params().tensors() {
        put_u32(&mut w, t.shape().len())?;
        for &d in t.shape() {
            put_u32(&mut w, d)?;
        }
        for v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], NnError> {
        if self.pos + n > self.bytes.len() {
            return Err(NnError::Format {
                offset: self.pos,
                message: "unexpected end of checkpoint".into(),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize, NnError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize)
    }

    fn f64(&mut self) -> Result<f64, NnError> {
        let b = self.take(8)?;
        Ok(f64::from_le_bytes(b.try_into().expect("8 bytes")))
    }
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<ModelParams, NnError> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut c = Cursor { bytes: &bytes, pos: 0 };
    if c.take(4)? != MAGIC {
        return Err(NnError::Format {
            offset: 0,
            message: "bad checkpoint magic".into(),
        });
    }
    let version = c.u32()?;
    if version != VERSION as usize {
        return Err(NnError::Format {
            offset: 4,
            message: format!("unsupported checkpoint version {version}"),
        });
    }
    let conv_channels = [c.u32()?, c.u32()?, c.u32()?];
    let config = ModelConfig {
        conv_channels,
        kernel_size: c.u32()?,
        groupnorm_groups: c.u32()?,
        hidden_units: c.u32()?,
        num_classes: c.u32()?,
        input_shape: [c.u32()?, c.u32()?, c.u32()?],
    };
    let count = c.u32()?;
    let mut tensors = Vec::with_capacity(count.min(64));
    for _ in 0..count {
        let ndim = c.u32()?;
        let shape = (0..ndim).map(|_| c.u32()).collect::<Result<Vec<_>, _>>()?;
        let len: usize = shape.iter().product();
        if len * 8 > bytes.len() {
            return Err(NnError::Format {
                offset: c.pos,
                message: format!("tensor of shape {shape:?} exceeds checkpoint size"),
            });
        }
        let data = (0..len).map(|_| c.f64()).collect::<Result<Vec<_>, _>>()?;
        tensors.push(Tensor::new(shape, data)?);
    }
    if c.pos != bytes.len() {
        return Err(NnError::Format {
            offset: c.pos,
            message: "trailing bytes after checkpoint".into(),
        });
    }
    ModelParams::from_parts(config, ParamSet::new(tensors))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_truncation() {
        let cfg = ModelConfig {
            conv_channels: [2, 2, 4],
            groupnorm_groups: 2,
            hidden_units: 4,
            num_classes: 2,
            ..ModelConfig::default()
        };
        let params = ModelParams::init(&cfg, 3).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&params, &mut buf).unwrap();
        assert_eq!(read_checkpoint(&buf[..]).unwrap(), params);
        let err = read_checkpoint(&buf[..buf.len() - 3]).unwrap_err();
        assert!(matches!(err, NnError::Format { .. }));
    }
}
