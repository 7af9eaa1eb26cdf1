mod common;

use common::{random_volume, rng};
use proptest::prelude::*;
use rand::Rng;
use voxstyle::io::phantom::{phantom_generate, render_phantom, write_phantom_dataset, PhantomSpec, Range, SIDECAR_NAME};
use voxstyle::io::*;
use voxstyle::training::{TrainSchedule, Trainer};
use voxstyle::{Error, ModelConfig};
use voxstyle_tensor::Array;

const FLIPS: usize = 10_000;

fn tiny_checkpoint() -> Checkpoint {
    let cfg = ModelConfig::tiny();
    Trainer::new(&cfg, TrainSchedule::new(&cfg, 1, 3)).unwrap().checkpoint()
}

fn flip(bytes: &[u8], r: &mut impl Rng) -> (usize, Vec<u8>) {
    let mut b = bytes.to_vec();
    let i = r.gen_range(0..b.len());
    b[i] ^= r.gen_range(1..=255u8);
    (i, b)
}

#[test]
fn svl1_file_roundtrip_and_size() {
    let dir = tempfile::tempdir().unwrap();
    let v = random_volume([5, 6, 7], &mut rng(1));
    let path = dir.path().join("v.svl");
    write_volume(&v, &path).unwrap();
    assert_eq!(std::fs::metadata(&path).unwrap().len(), 20 + 4 * 5 * 6 * 7);
    let back = read_volume(&path).unwrap();
    assert!(back.data().iter().zip(v.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
    assert_eq!(back.dims(), v.dims());
}

#[test]
fn sck1_file_roundtrip_is_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let c = tiny_checkpoint();
    let path = dir.path().join("c.sck");
    save_checkpoint(&c, &path).unwrap();
    let back = load_checkpoint(&path).unwrap();
    assert_eq!(back, c);
    assert_eq!(encode_checkpoint(&back).unwrap(), std::fs::read(&path).unwrap());
}

#[test]
fn checkpoint_of_another_depth_is_rejected() {
    let mut cfg = ModelConfig::preset("desk-fd16-l3").unwrap();
    let c16 = Trainer::new(&cfg, TrainSchedule::new(&cfg, 1, 0)).unwrap().checkpoint();
    cfg.fmap_depth = 32;
    match c16.check_against(&cfg) {
        Err(Error::TensorDims { name, expected, found }) => {
            assert!(expected.contains(&32) && found.contains(&16), "{name}: {expected:?} vs {found:?}");
        }
        other => panic!("expected a dimension error, got {other:?}"),
    }
}

#[test]
fn sck1_every_single_byte_flip_is_an_error() {
    let bytes = encode_checkpoint(&tiny_checkpoint()).unwrap();
    let mut r = rng(10);
    for _ in 0..FLIPS {
        let (i, b) = flip(&bytes, &mut r);
        assert!(decode_checkpoint(&b).is_err(), "flip at {i} accepted");
    }
    for cut in [0, 3, 8, bytes.len() / 2, bytes.len() - 1] {
        assert!(decode_checkpoint(&bytes[..cut]).is_err());
    }
}

#[test]
fn svl1_flips_never_panic_and_header_flips_error() {
    let v = random_volume([4, 5, 6], &mut rng(2));
    let bytes = encode_volume(&v);
    let mut r = rng(11);
    for _ in 0..FLIPS {
        let (i, b) = flip(&bytes, &mut r);
        match decode_volume(&b) {
            Ok(d) => {
                assert!(i >= 20, "header flip at {i} accepted");
                assert_ne!(d, v);
            }
            Err(e) => assert!(i < 20 || matches!(e, Error::Malformed(_)), "{e}"),
        }
    }
}

#[test]
fn slt1_flips_never_panic() {
    let mut r = rng(3);
    let rec = LatentRecord {
        w: (0..3).map(|_| Array::randn(&[1, 8], 1.0, &mut r)).collect(),
        noise: vec![Array::randn(&[1, 1, 2, 2, 2], 1.0, &mut r)],
    };
    let bytes = encode_latent(&rec).unwrap();
    assert_eq!(decode_latent(&bytes).unwrap(), rec);
    for _ in 0..FLIPS {
        let (_, b) = flip(&bytes, &mut r);
        if let Ok(d) = decode_latent(&b) {
            assert_ne!(d, rec);
        }
    }
}

#[test]
fn random_garbage_never_panics() {
    let mut r = rng(12);
    for _ in 0..2000 {
        let n = r.gen_range(0..256);
        let mut b: Vec<u8> = (0..n).map(|_| r.gen()).collect();
        if n >= 4 && r.gen_bool(0.5) {
            b[..4].copy_from_slice([b"SVL1", b"SCK1", b"SLT1"][r.gen_range(0..3)]);
        }
        let _ = decode_volume(&b);
        let _ = decode_checkpoint(&b);
        let _ = decode_latent(&b);
    }
}

#[test]
fn phantom_dataset_is_reproducible() {
    let spec = PhantomSpec::new(1, 3, [20, 24, 28]);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let pa = write_phantom_dataset(&spec, a.path()).unwrap();
    let pb = write_phantom_dataset(&spec, b.path()).unwrap();
    assert_eq!(pa.len(), 4);
    assert!(pa.last().unwrap().ends_with(SIDECAR_NAME));
    for (x, y) in pa.iter().zip(&pb) {
        assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap());
    }
    assert_eq!(read_volume_dir(a.path()).unwrap().len(), 3);
}

fn center_mean(v: &Volume) -> f64 {
    let [x, y, z] = v.dims();
    let mut s = 0.0;
    for i in x / 2 - 1..=x / 2 {
        for j in y / 2 - 1..=y / 2 {
            for k in z / 2 - 1..=z / 2 {
                s += v.at(i, j, k) as f64;
            }
        }
    }
    s / 8.0
}

#[test]
fn ventricle_factor_is_visible_in_the_center() {
    let mut small = PhantomSpec::new(5, 16, [20, 24, 28]);
    small.ventricle_radius = Range::new(0.0, 0.0);
    let mut large = small.clone();
    large.ventricle_radius = Range::new(0.25, 0.3);
    let (a, _) = phantom_generate(&small).unwrap();
    let (b, _) = phantom_generate(&large).unwrap();
    let hi = a.iter().map(center_mean).fold(f64::INFINITY, f64::min);
    let lo = b.iter().map(center_mean).fold(f64::NEG_INFINITY, f64::max);
    assert!(lo < hi, "largest center mean with ventricles {lo} vs smallest without {hi}");
}

#[test]
fn no_ventricle_means_no_dark_center() {
    let mut spec = PhantomSpec::new(6, 8, [20, 24, 28]);
    spec.ventricle_radius = Range::new(0.0, 0.0);
    for k in 0..spec.count {
        let (v, f) = render_phantom(&spec, k).unwrap();
        let [x, y, z] = v.dims();
        let mut min = f64::INFINITY;
        for i in x / 2 - 2..x / 2 + 2 {
            for j in y / 2 - 2..y / 2 + 2 {
                for l in z / 2 - 2..z / 2 + 2 {
                    min = min.min(v.at(i, j, l) as f64);
                }
            }
        }
        // interior 0.5 under a ≤10% bias field and small noise, far from 0.1
        assert!(min > 0.3, "phantom {k}: {min} ({f:?})");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn svl1_roundtrip(dx in 1usize..7, dy in 1usize..7, dz in 1usize..7, seed in any::<u64>()) {
        let v = random_volume([dx, dy, dz], &mut rng(seed));
        let bytes = encode_volume(&v);
        prop_assert_eq!(bytes.len(), 20 + 4 * dx * dy * dz);
        prop_assert_eq!(decode_volume(&bytes).unwrap(), v);
    }

    #[test]
    fn normalization_lands_in_unit_range(seed in any::<u64>(), scale in 0.01f32..100.0, shift in -50f32..50.0) {
        let mut r = rng(seed);
        let n = 60;
        let data: Vec<f32> = (0..n).map(|_| r.gen_range(-1.0f32..1.0) * scale + shift).collect();
        let v = normalize_intensity(&Volume::new([3, 4, 5], data).unwrap());
        let (lo, hi) = v.intensity_range();
        prop_assert!(lo >= -1.0 && hi <= 1.0);
    }
}
