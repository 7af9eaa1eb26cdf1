//! The alternating discriminator/generator training loop.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::Rng;
use voxstyle_tensor::{Array, Tape, Tensor};

use super::adam::{Adam, AdamConfig};
use super::ema::ema_update;
use super::losses::{d_loss_logistic, g_loss_nonsat};
use super::path_length::{lazy_regularize, path_length_penalty, PathLengthState};
use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::io::checkpoint::{save_checkpoint, Checkpoint};
use crate::io::volume::{stack, Volume};
use crate::nets::{Bound, Discriminator, Generator, NoiseMaps, NoiseMode, ParamSet};
use crate::rng::{stream, Purpose};

pub const LOSS_HEADER: &str = "step,g_loss,d_loss,pl_penalty,pl_mean,seconds";

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSchedule {
    pub total_steps: u64,
    pub minibatch: usize,
    /// Samples per forward pass; gradients of the chunks are accumulated.
    pub chunk: usize,
    pub ema_halflife: f64,
    /// When set, the EMA halflife is capped at `rampup · images seen`.
    pub ema_rampup: Option<f64>,
    pub seed: u64,
    /// Checkpoint period in steps (0: final checkpoint only).
    pub checkpoint_every: u64,
    /// Period of progress log lines in steps (0: none).
    pub metrics_every: u64,
    pub adam: AdamConfig,
    pub path_length: PathLengthState,
    /// R1 weight on real data; 0 disables the penalty.
    pub r1_gamma: f64,
}

impl TrainSchedule {
    pub fn new(cfg: &ModelConfig, total_steps: u64, seed: u64) -> Self {
        let minibatch = cfg.minibatch();
        Self {
            total_steps,
            minibatch,
            chunk: minibatch,
            ema_halflife: 10_000.0,
            ema_rampup: None,
            seed,
            checkpoint_every: 0,
            metrics_every: 0,
            adam: AdamConfig::default(),
            path_length: PathLengthState::default(),
            r1_gamma: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.total_steps < 1 {
            return Err(Error::InvalidArgument("steps must be ≥ 1".into()));
        }
        if self.minibatch < 1 || self.chunk < 1 {
            return Err(Error::InvalidArgument("minibatch and chunk must be ≥ 1".into()));
        }
        if !(self.ema_halflife > 0.0) {
            return Err(Error::InvalidArgument("EMA halflife must be > 0".into()));
        }
        if self.path_length.interval < 1 {
            return Err(Error::InvalidArgument("regularization interval must be ≥ 1".into()));
        }
        if !(self.adam.lr >= 0.0) || self.r1_gamma < 0.0 {
            return Err(Error::InvalidArgument("learning rate and R1 gamma must be non-negative".into()));
        }
        Ok(())
    }
}

/// Everything needed to continue training bit-for-bit.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub step: u64,
    pub seed: u64,
    pub g: ParamSet<f32>,
    pub d: ParamSet<f32>,
    pub ema: ParamSet<f32>,
    pub adam_g: Adam,
    pub adam_d: Adam,
    pub path_length: PathLengthState,
    /// Unscaled path-length penalty of the most recent regularization step.
    pub last_pl_penalty: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    pub step: u64,
    pub g_loss: f64,
    pub d_loss: f64,
    pub pl_penalty: f64,
    pub pl_mean: f64,
    pub seconds: f64,
}

impl StepStats {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{:.6}",
            self.step, self.g_loss, self.d_loss, self.pl_penalty, self.pl_mean, self.seconds
        )
    }
}

/// Latents, mixing choices and noise for one generated minibatch.
struct FakeInputs {
    z: Array<f32>,
    z_mix: Option<Array<f32>>,
    cutoffs: Vec<usize>,
    noise: Vec<Array<f32>>,
}

pub struct Trainer {
    gen: Generator,
    disc: Discriminator,
    pub schedule: TrainSchedule,
    pub state: TrainState,
}

fn narrow_rows(a: &Array<f32>, start: usize, len: usize) -> Result<Tensor<f32>> {
    Ok(Tensor::constant(a.clone()).narrow(0, start, len)?)
}

fn accumulate(acc: &mut Option<Vec<Array<f32>>>, grads: Vec<Tensor<f32>>) -> Result<()> {
    match acc {
        None => *acc = Some(grads.into_iter().map(|g| g.value().clone()).collect()),
        Some(sum) => {
            for (s, g) in sum.iter_mut().zip(grads) {
                *s = s.zip_broadcast(g.value(), "accumulate", |a, b| a + b)?;
            }
        }
    }
    Ok(())
}

impl Trainer {
    pub fn new(cfg: &ModelConfig, schedule: TrainSchedule) -> Result<Self> {
        schedule.validate()?;
        let gen = Generator::new(cfg)?;
        let disc = Discriminator::new(cfg)?;
        let g = gen.init(schedule.seed);
        let d = disc.init(schedule.seed);
        let state = TrainState {
            step: 0,
            seed: schedule.seed,
            adam_g: Adam::new(schedule.adam, &g),
            adam_d: Adam::new(schedule.adam, &d),
            ema: g.clone(),
            g,
            d,
            path_length: schedule.path_length,
            last_pl_penalty: 0.0,
        };
        Ok(Self {
            gen,
            disc,
            schedule,
            state,
        })
    }

    /// Continues from a checkpoint. The schedule's seed and optimizer and
    /// regularizer settings are taken from the checkpoint.
    pub fn resume(ckpt: Checkpoint, mut schedule: TrainSchedule) -> Result<Self> {
        ckpt.validate()?;
        schedule.seed = ckpt.state.seed;
        schedule.adam = ckpt.state.adam_g.config;
        schedule.path_length = PathLengthState {
            mean: schedule.path_length.mean,
            ..ckpt.state.path_length
        };
        schedule.validate()?;
        Ok(Self {
            gen: Generator::new(&ckpt.config)?,
            disc: Discriminator::new(&ckpt.config)?,
            schedule,
            state: ckpt.state,
        })
    }

    pub fn generator(&self) -> &Generator {
        &self.gen
    }

    pub fn discriminator(&self) -> &Discriminator {
        &self.disc
    }

    pub fn config(&self) -> &ModelConfig {
        self.gen.config()
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.config().clone(),
            state: self.state.clone(),
        }
    }

    fn check_data(&self, data: &[Volume]) -> Result<()> {
        if data.is_empty() {
            return Err(Error::InvalidArgument("training data is empty".into()));
        }
        let want = self.config().output_shape();
        if let Some(v) = data.iter().find(|v| v.dims() != want) {
            return Err(Error::Shape(format!("dataset volume has dims {:?}, model generates {want:?}", v.dims())));
        }
        Ok(())
    }

    fn real_batch(&self, data: &[Volume]) -> Result<Array<f32>> {
        let mut rng = stream(self.state.seed, Purpose::Batch, self.state.step);
        let picks: Vec<&Volume> = (0..self.schedule.minibatch).map(|_| &data[rng.gen_range(0..data.len())]).collect();
        stack(&picks)
    }

    /// Inputs for generated minibatch `slot` (0: discriminator step, 1: generator step).
    fn fake_inputs(&self, slot: u64) -> FakeInputs {
        let cfg = self.config();
        let (b, seed) = (self.schedule.minibatch, self.state.seed);
        let key = self.state.step * 4 + slot;
        let z = Array::randn(&[b, cfg.latent_size], 1.0, &mut stream(seed, Purpose::Latent, key));
        let layers = cfg.num_style_layers();
        let mut rng = stream(seed, Purpose::Mixing, key);
        let mut cutoffs = vec![layers; b];
        if layers > 1 {
            for c in cutoffs.iter_mut() {
                if rng.gen::<f64>() < cfg.mixing_prob {
                    *c = rng.gen_range(1..layers);
                }
            }
        }
        let z_mix = cutoffs
            .iter()
            .any(|&c| c < layers)
            .then(|| Array::randn(&[b, cfg.latent_size], 1.0, &mut rng));
        let noise = NoiseMaps::<f32>::new(cfg, b, NoiseMode::Random { seed, index: key })
            .maps
            .into_iter()
            .map(|m| m.map(|t| t.value().clone()).unwrap_or_else(|| Array::zeros(&[0])))
            .collect();
        FakeInputs { z, z_mix, cutoffs, noise }
    }

    fn generate_chunk(&self, p: &Bound<f32>, inp: &FakeInputs, start: usize, len: usize) -> Result<Tensor<f32>> {
        let w = self.gen.mapping(p, &narrow_rows(&inp.z, start, len)?)?;
        let layers = self.gen.num_ws();
        let ws = match &inp.z_mix {
            None => vec![w; layers],
            Some(zm) => {
                let w2 = self.gen.mapping(p, &narrow_rows(zm, start, len)?)?;
                let cut = &inp.cutoffs[start..start + len];
                (0..layers)
                    .map(|i| {
                        let mask: Vec<f64> = cut.iter().map(|&c| if i < c { 1.0 } else { 0.0 }).collect();
                        let m = Tensor::constant(Array::<f32>::from_f64(&[len, 1], &mask)?);
                        let inv = Tensor::constant(Array::<f32>::from_f64(&[len, 1], &mask.iter().map(|v| 1.0 - v).collect::<Vec<_>>())?);
                        Ok(w.mul(&m)?.add(&w2.mul(&inv)?)?)
                    })
                    .collect::<Result<Vec<_>>>()?
            }
        };
        let noise = NoiseMaps {
            maps: inp
                .noise
                .iter()
                .map(|a| if a.is_empty() { Ok(None) } else { narrow_rows(a, start, len).map(Some) })
                .collect::<Result<Vec<_>>>()?,
        };
        self.gen.synthesis(p, &ws, &noise)
    }

    fn chunks(&self) -> Vec<(usize, usize)> {
        let (b, c) = (self.schedule.minibatch, self.schedule.chunk.min(self.schedule.minibatch));
        (0..b).step_by(c).map(|s| (s, c.min(b - s))).collect()
    }

    fn finite(name: &str, v: f64) -> Result<f64> {
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite(format!("{name} = {v}")))
        }
    }

    fn discriminator_step(&mut self, data: &[Volume]) -> Result<f64> {
        let real = self.real_batch(data)?;
        let inputs = self.fake_inputs(0);
        let pg = self.state.g.bind(None);
        let b = self.schedule.minibatch as f64;
        let mut grads = None;
        let mut loss_sum = 0.0;
        for (start, len) in self.chunks() {
            let fake = self.generate_chunk(&pg, &inputs, start, len)?.detach();
            let tape = Tape::new();
            let pd = self.state.d.bind(Some(&tape));
            let real_c = narrow_rows(&real, start, len)?;
            let loss = d_loss_logistic(&self.disc.forward(&pd, &real_c)?, &self.disc.forward(&pd, &fake)?)?;
            let loss = if len as f64 == b { loss } else { loss.scale(len as f64 / b)? };
            loss_sum += loss.item();
            accumulate(&mut grads, tape.grad(&loss, &pd.tensors().iter().collect::<Vec<_>>(), false)?)?;
            if self.schedule.r1_gamma > 0.0 {
                if let Some(scale) = lazy_regularize(self.state.step, self.schedule.path_length.interval)? {
                    let tape = Tape::new();
                    let pd = self.state.d.bind(Some(&tape));
                    let x = tape.leaf(real_c.value().clone());
                    let logits = self.disc.forward(&pd, &x)?.sum()?;
                    let g = tape.grad(&logits, &[&x], true)?.remove(0);
                    let r1 = g.square()?.sum()?.scale(self.schedule.r1_gamma * 0.5 * scale / b)?;
                    accumulate(&mut grads, tape.grad(&r1, &pd.tensors().iter().collect::<Vec<_>>(), false)?)?;
                }
            }
        }
        Self::finite("d_loss", loss_sum)?;
        self.state.adam_d.update(&mut self.state.d, &grads.expect("at least one chunk"))?;
        Ok(loss_sum)
    }

    fn generator_step(&mut self) -> Result<(f64, f64)> {
        let inputs = self.fake_inputs(1);
        let pd = self.state.d.bind(None);
        let b = self.schedule.minibatch as f64;
        let mut grads = None;
        let mut loss_sum = 0.0;
        for (start, len) in self.chunks() {
            let tape = Tape::new();
            let pg = self.state.g.bind(Some(&tape));
            let fake = self.generate_chunk(&pg, &inputs, start, len)?;
            let loss = g_loss_nonsat(&self.disc.forward(&pd, &fake)?)?;
            let loss = if len as f64 == b { loss } else { loss.scale(len as f64 / b)? };
            loss_sum += loss.item();
            accumulate(&mut grads, tape.grad(&loss, &pg.tensors().iter().collect::<Vec<_>>(), false)?)?;
        }
        Self::finite("g_loss", loss_sum)?;
        let mut pl_value = self.state.last_pl_penalty;
        let pl = self.state.path_length;
        if let Some(scale) = lazy_regularize(self.state.step, pl.interval)? {
            let cfg = self.config();
            let (seed, step) = (self.state.seed, self.state.step);
            let n = (self.schedule.minibatch / 2).max(1);
            let tape = Tape::new();
            let pg = self.state.g.bind(Some(&tape));
            let z = Array::randn(&[n, cfg.latent_size], 1.0, &mut stream(seed, Purpose::PathLatent, step));
            let w = self.gen.mapping(&pg, &Tensor::constant(z))?;
            let noise = NoiseMaps::new(cfg, n, NoiseMode::Random { seed, index: step * 4 + 2 });
            let mut rng = stream(seed, Purpose::PathLength, step);
            let (penalty, _, next) = path_length_penalty(&self.gen, &pg, &w, &noise, &pl, &mut rng)?;
            pl_value = Self::finite("pl_penalty", penalty.item())?;
            accumulate(&mut grads, tape.grad(&penalty.scale(scale)?, &pg.tensors().iter().collect::<Vec<_>>(), false)?)?;
            self.state.path_length = next;
        }
        self.state.adam_g.update(&mut self.state.g, &grads.expect("at least one chunk"))?;
        self.state.last_pl_penalty = pl_value;
        Ok((loss_sum, pl_value))
    }

    /// One discriminator update followed by one generator update.
    pub fn step(&mut self, data: &[Volume]) -> Result<StepStats> {
        self.check_data(data)?;
        let t0 = Instant::now();
        let step = self.state.step;
        let d_loss = self.discriminator_step(data)?;
        let (g_loss, pl_penalty) = self.generator_step()?;
        let b = self.schedule.minibatch;
        let mut halflife = self.schedule.ema_halflife;
        if let Some(r) = self.schedule.ema_rampup {
            halflife = halflife.min(((step + 1) as f64 * b as f64 * r).max(1e-8));
        }
        ema_update(&mut self.state.ema, &self.state.g, halflife, b)?;
        self.state.step += 1;
        Ok(StepStats {
            step,
            g_loss,
            d_loss,
            pl_penalty,
            pl_mean: self.state.path_length.mean,
            seconds: t0.elapsed().as_secs_f64(),
        })
    }

    /// Trains until `schedule.total_steps`, appending rows to `loss.csv` and
    /// writing checkpoints into `out_dir`. A non-finite loss aborts the run
    /// after saving `diagnostic.sck`.
    pub fn train(&mut self, data: &[Volume], out_dir: &Path) -> Result<Vec<StepStats>> {
        self.check_data(data)?;
        std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
        let log_path = out_dir.join("loss.csv");
        let fresh = std::fs::metadata(&log_path).map(|m| m.len() == 0).unwrap_or(true);
        let mut log = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&log_path)
            .map_err(|e| Error::io(&log_path, e))?;
        if fresh {
            writeln!(log, "{LOSS_HEADER}").map_err(|e| Error::io(&log_path, e))?;
        }
        let mut rows = Vec::new();
        while self.state.step < self.schedule.total_steps {
            let before = self.checkpoint();
            let stats = match self.step(data) {
                Ok(s) => s,
                Err(e @ Error::NonFinite(_)) => {
                    save_checkpoint(&before, out_dir.join("diagnostic.sck"))?;
                    return Err(e);
                }
                Err(e) => return Err(e),
            };
            writeln!(log, "{}", stats.csv_row()).map_err(|e| Error::io(&log_path, e))?;
            let done = self.state.step;
            if self.schedule.metrics_every > 0 && done % self.schedule.metrics_every == 0 {
                log::info!(
                    "step {done}: g_loss {:.4} d_loss {:.4} pl_mean {:.4} ({:.2}s)",
                    stats.g_loss,
                    stats.d_loss,
                    stats.pl_mean,
                    stats.seconds
                );
            }
            if self.schedule.checkpoint_every > 0 && done % self.schedule.checkpoint_every == 0 {
                save_checkpoint(&self.checkpoint(), out_dir.join(format!("ckpt-{done:06}.sck")))?;
            }
            rows.push(stats);
        }
        save_checkpoint(&self.checkpoint(), out_dir.join("final.sck"))?;
        Ok(rows)
    }
}
