mod common;

use voxstyle::nets::{Generator, NoiseMaps, NoiseMode, ParamSet};
use voxstyle::projection::*;
use voxstyle::ModelConfig;
use voxstyle_tensor::Tensor;

fn desk() -> (Generator, ParamSet<f32>) {
    let cfg = ModelConfig::preset("desk-fd16-l3").unwrap();
    let gen = Generator::new(&cfg).unwrap();
    let params = gen.init(21);
    (gen, params)
}

fn bitwise_eq(a: &[f32], b: &[f32]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

#[test]
fn cutoff_extremes_reproduce_single_sources() {
    let (gen, p) = desk();
    let layers = gen.num_ws();
    let noise = NoiseMaps::new(gen.config(), 1, NoiseMode::Fixed(8));
    let wa = latent_for_seed(&gen, &p, 1, 0).unwrap();
    let wb = latent_for_seed(&gen, &p, 2, 0).unwrap();
    let only = |w: &voxstyle_tensor::Array<f32>| synthesize_with(&gen, &p, w, &noise);
    let high = mix_styles(&gen, &p, &[wa.clone()], &[wb.clone()], 0, &noise).unwrap();
    assert!(bitwise_eq(high.data(), only(&wb).data()));
    let low = mix_styles(&gen, &p, &[wa.clone()], &[wb.clone()], layers, &noise).unwrap();
    assert!(bitwise_eq(low.data(), only(&wa).data()));
    let same = mix_styles(&gen, &p, &[wa.clone()], &[wa.clone()], 2, &noise).unwrap();
    assert!(bitwise_eq(same.data(), only(&wa).data()));
    assert!(mix_styles(&gen, &p, &[wa.clone()], &[wb], layers + 1, &noise).is_err());
}

fn synthesize_with(gen: &Generator, p: &ParamSet<f32>, w: &voxstyle_tensor::Array<f32>, noise: &NoiseMaps<f32>) -> voxstyle::io::Volume {
    let ws = vec![Tensor::constant(w.clone()); gen.num_ws()];
    voxstyle::io::Volume::from_array(gen.synthesis(&p.bind(None), &ws, noise).unwrap().value()).unwrap()
}

#[test]
fn mixing_leaves_earlier_layers_untouched() {
    let (gen, p) = desk();
    let bound = p.bind(None);
    let noise = NoiseMaps::new(gen.config(), 1, NoiseMode::Fixed(3));
    let wa = Tensor::constant(latent_for_seed(&gen, &p, 5, 0).unwrap());
    let wb = Tensor::constant(latent_for_seed(&gen, &p, 6, 0).unwrap());
    let reference = gen.synthesis_traced(&bound, &vec![wa.clone(); gen.num_ws()], &noise, true).unwrap();
    for k in 0..=gen.num_ws() {
        let ws = gen.mix(&wa, &wb, k).unwrap();
        let mixed = gen.synthesis_traced(&bound, &ws, &noise, true).unwrap();
        for i in 0..gen.num_ws() {
            let same = bitwise_eq(mixed.activations[i].data(), reference.activations[i].data());
            assert_eq!(same, i < k, "cutoff {k} layer {i}");
        }
    }
}

#[test]
fn five_level_split_at_four() {
    let mut cfg = ModelConfig::tiny();
    cfg.levels = 5;
    cfg.minibatch_schedule = vec![2; 5];
    let gen = Generator::new(&cfg).unwrap();
    assert_eq!(gen.num_ws(), 9);
    let a = Tensor::<f32>::scalar(1.0);
    let b = Tensor::<f32>::scalar(2.0);
    let picks: Vec<f64> = gen.mix(&a, &b, 4).unwrap().iter().map(|t| t.item()).collect();
    assert_eq!(picks, [1.0, 1.0, 1.0, 1.0, 2.0, 2.0, 2.0, 2.0, 2.0]);
}

#[test]
fn generated_samples_do_not_depend_on_count() {
    let (gen, p) = desk();
    let five = generate_samples(&gen, &p, 11, 5).unwrap();
    let two = generate_samples(&gen, &p, 11, 2).unwrap();
    assert_eq!(&five[..2], &two[..]);
    assert_ne!(five[0], five[1]);
}

fn quick(steps: usize) -> ProjectionOptions {
    ProjectionOptions {
        steps,
        w_avg_samples: 200,
        seed: 4,
        ..Default::default()
    }
}

#[test]
fn single_step_projection_has_one_row() {
    let (gen, p) = desk();
    let target = generate_samples(&gen, &p, 1, 1).unwrap().remove(0);
    let r = project(&gen, &p, &target, &quick(1)).unwrap();
    assert_eq!(r.loss_trace.len(), 1);
    assert_eq!(r.best_step, 0);
    assert_eq!(trace_csv(&r.loss_trace).lines().count(), 2);
}

#[test]
fn projection_is_deterministic_and_tracks_the_best_iterate() {
    let (gen, p) = desk();
    let target = generate_samples(&gen, &p, 2, 1).unwrap().remove(0);
    let a = project(&gen, &p, &target, &quick(12)).unwrap();
    let b = project(&gen, &p, &target, &quick(12)).unwrap();
    assert_eq!(a.loss_trace, b.loss_trace);
    assert_eq!(a.final_volume, b.final_volume);
    let best = a.loss_trace.iter().map(|r| r.total).fold(f64::INFINITY, f64::min);
    assert_eq!(a.best().total, best);
    let (total, _, _) = projection_loss(&target, &a.final_volume, 1.0).unwrap();
    assert!((total - best).abs() <= 1e-6 * best.max(1e-12), "{total} vs {best}");
}

#[test]
fn loss_matches_a_direct_sum() {
    let mut r = common::rng(3);
    for _ in 0..10 {
        let x = common::random_volume([16, 16, 16], &mut r);
        let y = common::random_volume([16, 16, 16], &mut r);
        let (total, full, down) = projection_loss(&x, &y, 0.5).unwrap();
        let mse: f64 = x.data().iter().zip(y.data()).map(|(&a, &b)| (a as f64 - b as f64).powi(2)).sum::<f64>() / 4096.0;
        assert!((full - mse).abs() < 1e-12 * mse);
        // 8× pooling of a 16³ grid leaves 2³ block means
        let block = |v: &voxstyle::io::Volume, bi: usize, bj: usize, bk: usize| {
            let mut s = 0.0;
            for i in 0..8 {
                for j in 0..8 {
                    for k in 0..8 {
                        s += v.at(8 * bi + i, 8 * bj + j, 8 * bk + k) as f64;
                    }
                }
            }
            s / 512.0
        };
        let mut d = 0.0;
        for q in 0..8 {
            let (i, j, k) = (q >> 2, (q >> 1) & 1, q & 1);
            d += (block(&x, i, j, k) - block(&y, i, j, k)).powi(2);
        }
        assert!((down - d / 8.0).abs() < 1e-7 * (d / 8.0).max(1e-9), "{down} vs {}", d / 8.0);
        assert!((total - (full + 0.5 * down)).abs() < 1e-12);
        assert_eq!(projection_loss(&x, &y, 0.5).unwrap(), projection_loss(&y, &x, 0.5).unwrap());
    }
}
