use std::path::{Path, PathBuf};

use voxstyle::config::parse_dims;
use voxstyle::io::latent::{read_latent, write_latent, LatentRecord};
use voxstyle::io::phantom::{write_phantom_dataset, PhantomSpec, Range};
use voxstyle::io::{export_slice_image, load_checkpoint, read_volume, read_volume_dir, write_volume, Checkpoint, Volume};
use voxstyle::metrics::{evaluate, parse_metrics, EvalOptions, Plane, RandProj};
use voxstyle::nets::{Generator, NoiseMaps, NoiseMode, ParamSet};
use voxstyle::projection::{generate_samples, latent_for_seed, mix_styles, project as run_projection, trace_csv, ProjectionOptions};
use voxstyle::training::{TrainSchedule, Trainer};
use voxstyle::{Error, ModelConfig, Result};

use crate::record::RunRecord;
use crate::{EvalArgs, GenerateArgs, MixArgs, PhantomArgs, ProjectArgs, TrainArgs};

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes `<stem>.svl` and one middle-slice PGM per plane; returns the paths.
fn write_volume_with_slices(v: &Volume, dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
    let mut paths = vec![dir.join(format!("{stem}.svl"))];
    write_volume(v, &paths[0])?;
    for plane in Plane::ALL {
        let p = dir.join(format!("{stem}_{plane}.pgm"));
        export_slice_image(v, plane, &p)?;
        paths.push(p);
    }
    Ok(paths)
}

fn parse_range(s: &str) -> Result<Range> {
    let bad = || Error::InvalidArgument(format!("expected LO,HI, got {s:?}"));
    let (lo, hi) = s.split_once(',').ok_or_else(bad)?;
    Ok(Range::new(lo.trim().parse().map_err(|_| bad())?, hi.trim().parse().map_err(|_| bad())?))
}

pub fn phantom(a: PhantomArgs) -> Result<()> {
    let mut spec = PhantomSpec::new(a.seed, a.count, parse_dims(&a.dims)?);
    if let Some(r) = &a.ventricle {
        spec.ventricle_radius = parse_range(r)?;
    }
    spec.validate()?;
    let paths = write_phantom_dataset(&spec, &a.out)?;
    let mut rec = RunRecord::new("phantom", a.seed);
    rec.set("count", a.count);
    rec.set("dims", spec.dims.to_vec());
    rec.artifacts(paths);
    rec.write(&a.out)
}

fn resolve_config(name: &str) -> Result<ModelConfig> {
    let path = Path::new(name);
    if path.is_file() {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ModelConfig::from_kv(&text)
    } else {
        ModelConfig::preset(name)
    }
}

pub fn train(a: TrainArgs) -> Result<()> {
    if a.steps < 1 {
        return Err(Error::InvalidArgument("steps must be ≥ 1".into()));
    }
    let cfg = resolve_config(&a.config)?;
    let mut sched = TrainSchedule::new(&cfg, a.steps, a.seed);
    if let Some(b) = a.minibatch {
        sched.minibatch = b;
        sched.chunk = b;
    }
    if let Some(c) = a.chunk {
        sched.chunk = c;
    }
    if let Some(lr) = a.lr {
        sched.adam.lr = lr;
    }
    sched.ema_halflife = a.ema_halflife;
    sched.ema_rampup = a.ema_rampup;
    sched.r1_gamma = a.r1_gamma;
    sched.checkpoint_every = a.checkpoint_every;
    sched.metrics_every = a.metrics_every;
    if let Some(w) = a.pl_weight {
        sched.path_length.weight = w;
    }
    if let Some(i) = a.pl_interval {
        sched.path_length.interval = i;
    }
    sched.validate()?;
    let data = read_volume_dir(&a.data)?;
    let mut trainer = match &a.resume {
        Some(path) => {
            let ckpt = load_checkpoint(path)?;
            if ckpt.config != cfg {
                return Err(Error::Config(format!("checkpoint {} was trained with a different configuration", path.display())));
            }
            Trainer::resume(ckpt, sched)?
        }
        None => Trainer::new(&cfg, sched)?,
    };
    let rows = trainer.train(&data, &a.out)?;
    let mut rec = RunRecord::new("train", trainer.state.seed);
    rec.config(&cfg);
    rec.set("steps", a.steps);
    rec.set("steps_run", rows.len());
    rec.set("minibatch", trainer.schedule.minibatch);
    rec.set("dataset_size", data.len());
    if let Some(last) = rows.last() {
        rec.set("final_g_loss", last.g_loss);
        rec.set("final_d_loss", last.d_loss);
    }
    rec.artifact(a.out.join("final.sck"));
    rec.artifact(a.out.join("loss.csv"));
    let every = trainer.schedule.checkpoint_every;
    if every > 0 {
        for s in (every..=trainer.state.step).step_by(every as usize) {
            rec.artifact(a.out.join(format!("ckpt-{s:06}.sck")));
        }
    }
    rec.write(&a.out)
}

fn load_generator(path: &Path, use_ema: bool) -> Result<(Checkpoint, Generator, ParamSet<f32>)> {
    let ckpt = load_checkpoint(path)?;
    let gen = Generator::new(&ckpt.config)?;
    let params = if use_ema { ckpt.state.ema.clone() } else { ckpt.state.g.clone() };
    Ok((ckpt, gen, params))
}

pub fn generate(a: GenerateArgs) -> Result<()> {
    if a.count < 1 {
        return Err(Error::InvalidArgument("count must be ≥ 1".into()));
    }
    let (ckpt, gen, params) = load_generator(&a.ckpt, a.use_ema)?;
    create_dir(&a.out)?;
    let mut rec = RunRecord::new("generate", a.seed);
    rec.config(&ckpt.config);
    rec.set("count", a.count);
    rec.set("use_ema", a.use_ema);
    for (k, v) in generate_samples(&gen, &params, a.seed, a.count)?.iter().enumerate() {
        rec.artifacts(write_volume_with_slices(v, &a.out, &format!("sample_{k:03}"))?);
    }
    rec.write(&a.out)
}

pub fn project(a: ProjectArgs) -> Result<()> {
    let (ckpt, gen, params) = load_generator(&a.ckpt, a.use_ema)?;
    let target = read_volume(&a.target)?;
    let opts = ProjectionOptions {
        steps: a.steps,
        extended: a.extended,
        lambda: a.lambda,
        noise_reg: a.noise_reg,
        optimize_noise: !a.no_noise,
        seed: a.seed,
        ..Default::default()
    };
    let result = run_projection(&gen, &params, &target, &opts)?;
    create_dir(&a.out)?;
    let mut rec = RunRecord::new("project", a.seed);
    rec.config(&ckpt.config);
    rec.set("steps", a.steps);
    rec.set("extended", a.extended);
    rec.set("best_step", result.best_step);
    rec.set("best_total", result.best().total);
    rec.artifacts(write_volume_with_slices(&result.final_volume, &a.out, "projected")?);
    let trace = a.out.join("trace.csv");
    write_text(&trace, &trace_csv(&result.loss_trace))?;
    let latent = a.out.join("latent.slt");
    write_latent(
        &LatentRecord {
            w: result.w.clone(),
            noise: result.noise.clone(),
        },
        &latent,
    )?;
    rec.artifacts([trace, latent]);
    rec.write(&a.out)
}

pub fn mix(a: MixArgs) -> Result<()> {
    let (ckpt, gen, params) = load_generator(&a.ckpt, a.use_ema)?;
    let cfg = &ckpt.config;
    let latent = |file: &Option<PathBuf>, seed: u64| -> Result<LatentRecord> {
        match file {
            Some(p) => read_latent(p),
            None => Ok(LatentRecord {
                w: vec![latent_for_seed(&gen, &params, seed, 0)?],
                noise: Vec::new(),
            }),
        }
    };
    let low = latent(&a.latent_a, a.seed_a)?;
    let high = latent(&a.latent_b, a.seed_b)?;
    let noise = if high.noise.is_empty() {
        NoiseMaps::new(cfg, 1, NoiseMode::Fixed(a.seed_b))
    } else {
        NoiseMaps::from_arrays(high.noise.clone())
    };
    let v = mix_styles(&gen, &params, &low.w, &high.w, a.cutoff, &noise)?;
    create_dir(&a.out)?;
    let mut rec = RunRecord::new("mix", a.seed_a);
    rec.config(cfg);
    rec.set("seed_a", a.seed_a);
    rec.set("seed_b", a.seed_b);
    rec.set("cutoff", a.cutoff);
    rec.artifacts(write_volume_with_slices(&v, &a.out, "mixed")?);
    rec.write(&a.out)
}

fn parse_planes(s: &str) -> Result<Vec<Plane>> {
    if s == "all" {
        return Ok(Plane::ALL.to_vec());
    }
    s.split(',').map(|p| p.trim().parse()).collect()
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let opts = EvalOptions {
        metrics: parse_metrics(&a.metrics)?,
        planes: parse_planes(&a.plane)?,
        seed: a.seed,
        bmmd2_batch: a.bmmd2_batch,
        bmmd2_repeats: a.bmmd2_repeats,
        msssim_pairs: a.pairs,
    };
    let mut rec = RunRecord::new("eval", a.seed);
    let gen = match (&a.ckpt, &a.gen_dir) {
        (Some(path), None) => {
            let (ckpt, gen, params) = load_generator(path, a.use_ema)?;
            rec.config(&ckpt.config);
            generate_samples(&gen, &params, a.seed, a.count)?
        }
        (None, Some(dir)) => read_volume_dir(dir)?,
        _ => return Err(Error::InvalidArgument("exactly one of --ckpt and --gen-dir is required".into())),
    };
    let real = match &a.real_dir {
        Some(dir) => read_volume_dir(dir)?,
        None => Vec::new(),
    };
    let report = evaluate(&gen, &real, &opts, &RandProj::default())?;
    create_dir(&a.out)?;
    let path = a.out.join("metrics.json");
    write_text(&path, &(report.to_json() + "\n"))?;
    rec.set("bmmd2_batch", a.bmmd2_batch);
    rec.set("bmmd2_repeats", a.bmmd2_repeats);
    rec.set("msssim_pairs", a.pairs);
    rec.artifact(path);
    rec.write(&a.out)
}
