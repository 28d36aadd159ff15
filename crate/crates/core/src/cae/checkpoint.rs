//! Self-describing binary checkpoint format.
//!
//! Layout, all integers little-endian:
//!   magic "CAEP", version u8,
//!   patch_size u16, layer count u8 (= 6), filter counts u16 each,
//!   adam step u64, adam hyper (lr, beta1, beta2, epsilon) as f64,
//!   tensor count u32,
//!   tensors: name length u16, UTF-8 name, rank u8, extents u32 each,
//!            data as 64-bit little-endian floats.
//!
//! Learnable tensors come first in canonical order, then the optimizer
//! moments as `<name>.m` / `<name>.v`. Writes are temp-then-rename.

use super::network::{CaeArchitecture, CaeParams, ConvLayer};
use super::train::TrainState;
use crate::error::{Error, Result};
use crate::nn::{AdamHyper, AdamState};
use crate::tensor::{Scalar, Tensor};
use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

const MAGIC: &[u8; 4] = b"CAEP";
const VERSION: u8 = 1;

fn push_tensor<T: Scalar>(buf: &mut Vec<u8>, name: &str, tensor: &Tensor<T>) {
    buf.extend_from_slice(&(name.len() as u16).to_le_bytes());
    buf.extend_from_slice(name.as_bytes());
    buf.push(tensor.rank() as u8);
    for &e in tensor.shape() {
        buf.extend_from_slice(&(e as u32).to_le_bytes());
    }
    for &v in tensor.data() {
        buf.extend_from_slice(&v.to_f64_val().to_le_bytes());
    }
}

pub fn save_checkpoint<T: Scalar>(path: &Path, state: &TrainState<T>) -> Result<u64> {
    let params = &state.params;
    let adam = &state.adam;
    let named = params.named_params();
    if named.len() != adam.first_moment.len() {
        return Err(Error::invalid(
            "save_checkpoint",
            "optimizer state does not match parameter count",
        ));
    }

    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.push(VERSION);
    buf.extend_from_slice(&(params.arch.patch_size as u16).to_le_bytes());
    buf.push(params.arch.filter_counts.len() as u8);
    for &n in &params.arch.filter_counts {
        buf.extend_from_slice(&(n as u16).to_le_bytes());
    }
    buf.extend_from_slice(&adam.step_count.to_le_bytes());
    for v in [
        adam.hyper.learning_rate,
        adam.hyper.beta1,
        adam.hyper.beta2,
        adam.hyper.epsilon,
    ] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf.extend_from_slice(&((named.len() * 3) as u32).to_le_bytes());
    for (name, tensor) in &named {
        push_tensor(&mut buf, name, tensor);
    }
    for (i, (name, _)) in named.iter().enumerate() {
        push_tensor(&mut buf, &format!("{name}.m"), &adam.first_moment[i]);
        push_tensor(&mut buf, &format!("{name}.v"), &adam.second_moment[i]);
    }

    let tmp = path.with_extension("caep.tmp");
    let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(&buf).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))?;
    Ok(params.model_id())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Format {
                format: "checkpoint",
                message: "unexpected end of file".into(),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

fn read_tensor<T: Scalar>(r: &mut Reader) -> Result<(String, Tensor<T>)> {
    let name_len = r.u16()? as usize;
    let name = String::from_utf8(r.take(name_len)?.to_vec()).map_err(|_| Error::Format {
        format: "checkpoint",
        message: "tensor name is not UTF-8".into(),
    })?;
    let rank = r.u8()? as usize;
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        shape.push(r.u32()? as usize);
    }
    let numel: usize = shape.iter().product();
    let mut data = Vec::with_capacity(numel);
    for _ in 0..numel {
        data.push(T::from_f64(r.f64()?));
    }
    Ok((name, Tensor::from_vec(&shape, data)?))
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<TrainState<T>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader { buf: &bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Format {
            format: "checkpoint",
            message: "bad magic (expected CAEP)".into(),
        });
    }
    let version = r.u8()?;
    if version != VERSION {
        return Err(Error::UnsupportedVersion {
            found: version,
            supported: VERSION,
        });
    }
    let patch_size = r.u16()? as usize;
    let layer_count = r.u8()? as usize;
    if layer_count != 6 {
        return Err(Error::Format {
            format: "checkpoint",
            message: format!("expected 6 filter counts, found {layer_count}"),
        });
    }
    let mut filter_counts = [0usize; 6];
    for slot in &mut filter_counts {
        *slot = r.u16()? as usize;
    }
    let arch = CaeArchitecture {
        filter_counts,
        patch_size,
    };
    arch.validate()?;
    let step_count = r.u64()?;
    let hyper = AdamHyper {
        learning_rate: r.f64()?,
        beta1: r.f64()?,
        beta2: r.f64()?,
        epsilon: r.f64()?,
    };
    let tensor_count = r.u32()? as usize;
    let mut tensors: HashMap<String, Tensor<T>> = HashMap::with_capacity(tensor_count);
    for _ in 0..tensor_count {
        let (name, t) = read_tensor(&mut r)?;
        tensors.insert(name, t);
    }

    let mut rng = rand::SeedableRng::seed_from_u64(0);
    let template = CaeParams::<T>::init(&arch, &mut rng)?;
    let mut take = |name: &str, shape: &[usize]| -> Result<Tensor<T>> {
        let t = tensors.remove(name).ok_or_else(|| Error::Format {
            format: "checkpoint",
            message: format!("missing tensor `{name}`"),
        })?;
        if t.shape() != shape {
            return Err(Error::shape("checkpoint", format!("{shape:?}"), format!("{:?}", t.shape())));
        }
        Ok(t)
    };

    let rebuild = |layers: &[ConvLayer<T>], side: &str, take: &mut dyn FnMut(&str, &[usize]) -> Result<Tensor<T>>| -> Result<Vec<ConvLayer<T>>> {
        layers
            .iter()
            .enumerate()
            .map(|(i, l)| {
                Ok(ConvLayer {
                    kernels: take(&format!("{side}{i}.kernels"), l.kernels.shape())?,
                    bias: take(&format!("{side}{i}.bias"), l.bias.shape())?,
                    prelu_slope: match &l.prelu_slope {
                        Some(s) => Some(take(&format!("{side}{i}.prelu"), s.shape())?),
                        None => None,
                    },
                    stride: l.stride,
                })
            })
            .collect()
    };

    let encoder = rebuild(&template.encoder, "enc", &mut take)?;
    let decoder = rebuild(&template.decoder, "dec", &mut take)?;
    let mut params = CaeParams {
        arch,
        encoder,
        decoder,
        model_id: None,
    };
    params.model_id = Some(params.compute_model_id());

    let mut adam = AdamState::new(&params.param_shapes(), hyper);
    adam.step_count = step_count;
    for (i, (name, tensor)) in params.named_params().iter().enumerate() {
        adam.first_moment[i] = take(&format!("{name}.m"), tensor.shape())?;
        adam.second_moment[i] = take(&format!("{name}.v"), tensor.shape())?;
    }

    Ok(TrainState { params, adam })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy_state() -> TrainState<f64> {
        let arch = CaeArchitecture {
            filter_counts: [2, 3, 2, 3, 2, 3],
            patch_size: 8,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let params = CaeParams::init(&arch, &mut rng).unwrap();
        let adam = AdamState::new(&params.param_shapes(), AdamHyper::default());
        TrainState { params, adam }
    }

    #[test]
    fn save_load_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.caep");
        let state = toy_state();
        let id = save_checkpoint(&path, &state).unwrap();
        let loaded: TrainState<f64> = load_checkpoint(&path).unwrap();
        assert_eq!(loaded.params.encoder, state.params.encoder);
        assert_eq!(loaded.params.decoder, state.params.decoder);
        assert_eq!(loaded.params.model_id(), id);
        assert_eq!(loaded.adam.step_count, 0);
    }

    #[test]
    fn bad_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.caep");
        std::fs::write(&path, b"NOPE....").unwrap();
        assert!(load_checkpoint::<f64>(&path).is_err());
    }

    #[test]
    fn version_bump_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.caep");
        save_checkpoint(&path, &toy_state()).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[4] = 99;
        std::fs::write(&path, &bytes).unwrap();
        match load_checkpoint::<f64>(&path) {
            Err(Error::UnsupportedVersion { found: 99, .. }) => {}
            other => panic!("expected version error, got {other:?}"),
        }
    }
}
