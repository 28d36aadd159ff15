//! Training loop: seeded, resumable, with atomic periodic checkpoints.

use super::checkpoint::save_checkpoint;
use super::network::{loss_with_noise, CaeArchitecture, CaeGrads, CaeParams};
use crate::color::Plane;
use crate::error::{Error, Result};
use crate::nn::{fill_uniform_symmetric, AdamHyper, AdamState};
use crate::tensor::{Scalar, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub lambda: f64,
    pub noise_halfwidth: f64,
    pub batch_size: usize,
    /// Total optimizer steps. The reference run used 8e5; the default here
    /// is a desk-scale value.
    pub max_iterations: u64,
    pub learning_rate: f64,
    pub seed: u64,
    pub checkpoint_interval: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda: 1.0,
            noise_halfwidth: 1.0 / 1024.0,
            batch_size: 16,
            max_iterations: 2000,
            learning_rate: 1e-4,
            seed: 0,
            checkpoint_interval: 1000,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.noise_halfwidth <= 0.0 {
            return Err(Error::invalid("TrainConfig", "noise_halfwidth must be positive"));
        }
        if self.lambda < 0.0 {
            return Err(Error::invalid("TrainConfig", "lambda must be non-negative"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("TrainConfig", "batch_size must be positive"));
        }
        Ok(())
    }
}

/// A deterministic stream of training patches (luma planes of the
/// configured patch extent).
pub trait PatchSource {
    fn next_patch(&mut self) -> Option<Plane>;
}

/// A fixed pool of patches served in cyclic order.
pub struct FixedPatches {
    patches: Vec<Plane>,
    cursor: usize,
}

impl FixedPatches {
    pub fn new(patches: Vec<Plane>) -> Self {
        FixedPatches { patches, cursor: 0 }
    }
}

impl PatchSource for FixedPatches {
    fn next_patch(&mut self) -> Option<Plane> {
        if self.patches.is_empty() {
            return None;
        }
        let p = self.patches[self.cursor % self.patches.len()].clone();
        self.cursor += 1;
        Some(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub iteration: u64,
    pub j: f64,
    pub mse_term: f64,
    pub rate_term: f64,
}

/// Parameters plus optimizer state; what a checkpoint holds.
#[derive(Debug, Clone)]
pub struct TrainState<T: Scalar> {
    pub params: CaeParams<T>,
    pub adam: AdamState<T>,
}

impl<T: Scalar> TrainState<T> {
    pub fn fresh(arch: &CaeArchitecture, config: &TrainConfig) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let params = CaeParams::init(arch, &mut rng)?;
        let hyper = AdamHyper {
            learning_rate: config.learning_rate,
            ..AdamHyper::default()
        };
        let adam = AdamState::new(&params.param_shapes(), hyper);
        Ok(TrainState { params, adam })
    }
}

#[derive(Debug)]
pub struct TrainOutcome<T: Scalar> {
    pub state: TrainState<T>,
    pub history: Vec<LossRecord>,
}

fn patch_to_tensor<T: Scalar>(plane: &Plane, patch_size: usize) -> Result<Tensor<T>> {
    if plane.width != patch_size || plane.height != patch_size {
        return Err(Error::shape(
            "train",
            format!("{patch_size}x{patch_size} patch"),
            format!("{}x{}", plane.width, plane.height),
        ));
    }
    let data = plane.data.iter().map(|&v| T::from_f64(v as f64)).collect();
    Tensor::from_vec(&[1, 1, patch_size, patch_size], data)
}

/// Run the training loop. `resume` continues from a loaded checkpoint (the
/// step counter decides how many iterations remain); otherwise parameters
/// are freshly initialized from the config seed.
///
/// Per iteration: draw `batch_size` patches and per-sample noise from the
/// seeded stream, evaluate loss and gradients (samples in parallel,
/// reduced in fixed order so results stay bit-reproducible), then apply
/// one Adam step. A non-finite loss or gradient aborts with the last good
/// checkpoint named in the error.
pub fn train<T: Scalar>(
    arch: &CaeArchitecture,
    config: &TrainConfig,
    source: &mut dyn PatchSource,
    checkpoint_path: Option<&Path>,
    resume: Option<TrainState<T>>,
) -> Result<TrainOutcome<T>> {
    arch.validate()?;
    config.validate()?;
    let mut state = match resume {
        Some(s) => s,
        None => TrainState::fresh(arch, config)?,
    };
    if state.params.arch != *arch {
        return Err(Error::invalid(
            "train",
            "resume checkpoint architecture differs from the requested one",
        ));
    }

    let patch_size = arch.patch_size;
    let (lc, le) = (arch.latent_channels(), arch.latent_extent());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x9e37_79b9));
    let mut history = Vec::new();
    let mut last_checkpoint: Option<PathBuf> = None;

    let start = state.adam.step_count;
    for iter in start..config.max_iterations {
        let mut batch = Vec::with_capacity(config.batch_size);
        for _ in 0..config.batch_size {
            let plane = source.next_patch().ok_or_else(|| {
                Error::EmptyDataset(format!(
                    "patch source ran out before iteration {iter} (need {} patches)",
                    config.batch_size
                ))
            })?;
            let patch = patch_to_tensor::<T>(&plane, patch_size)?;
            let mut noise = Tensor::<T>::zeros(&[1, lc, le, le]);
            fill_uniform_symmetric(&mut noise, config.noise_halfwidth, &mut rng);
            batch.push((patch, noise));
        }

        let results: Vec<_> = batch
            .par_iter()
            .map(|(patch, noise)| loss_with_noise(&state.params, patch, config.lambda, noise))
            .collect();

        let mut acc = CaeGrads::zeros_like(&state.params);
        let scale = T::from_f64(1.0 / config.batch_size as f64);
        let (mut j, mut mse, mut rate) = (0.0, 0.0, 0.0);
        for r in results {
            let out = r.map_err(|e| Error::TrainingAborted {
                iteration: iter,
                message: e.to_string(),
                last_checkpoint: last_checkpoint.as_ref().map(|p| p.display().to_string()),
            })?;
            j += out.j;
            mse += out.mse_term;
            rate += out.rate_term;
            acc.add_scaled(&out.grads, scale)?;
        }
        let n = config.batch_size as f64;
        let record = LossRecord {
            iteration: iter,
            j: j / n,
            mse_term: mse / n,
            rate_term: rate / n,
        };
        if !record.j.is_finite() {
            return Err(Error::TrainingAborted {
                iteration: iter,
                message: format!("non-finite batch loss {}", record.j),
                last_checkpoint: last_checkpoint.as_ref().map(|p| p.display().to_string()),
            });
        }
        history.push(record);

        let flat_grads = acc.flat();
        let mut named = state.params.named_params_mut();
        let mut entries: Vec<(&str, &mut Tensor<T>, &Tensor<T>)> = named
            .iter_mut()
            .zip(flat_grads.iter())
            .map(|((name, param), grad)| (name.as_str(), &mut **param, *grad))
            .collect();
        state.adam.step(&mut entries).map_err(|e| match e {
            Error::NonFiniteGradient { name } => Error::TrainingAborted {
                iteration: iter,
                message: format!("non-finite gradient for `{name}`"),
                last_checkpoint: last_checkpoint.as_ref().map(|p| p.display().to_string()),
            },
            other => other,
        })?;

        if let Some(path) = checkpoint_path {
            if config.checkpoint_interval > 0 && (iter + 1) % config.checkpoint_interval == 0 {
                save_checkpoint(path, &state)?;
                last_checkpoint = Some(path.to_path_buf());
            }
        }
    }

    if let Some(path) = checkpoint_path {
        save_checkpoint(path, &state)?;
    }
    Ok(TrainOutcome { state, history })
}

/// Loss history as CSV: iteration, J, mse_term, rate_term.
pub fn write_loss_csv(path: &Path, history: &[LossRecord]) -> Result<()> {
    let mut buf = String::from("iteration,j,mse_term,rate_term\n");
    for r in history {
        buf.push_str(&format!("{},{},{},{}\n", r.iteration, r.j, r.mse_term, r.rate_term));
    }
    let tmp = path.with_extension("csv.tmp");
    let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(buf.as_bytes()).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))?;
    Ok(())
}
