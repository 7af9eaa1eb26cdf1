use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use voxstyle_tensor::gradcheck::{conv3d_grad_check, max_relative_error, GradCheckOptions};
use voxstyle_tensor::ops::{avgpool3d, conv3d, conv3d_input_grad, conv3d_weight_grad, dense, upsample_nearest3d};
use voxstyle_tensor::{Array, Result, Tape, Tensor};

const SEEDS: u64 = 20;
const TOL: f64 = 1e-5;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn randn(shape: &[usize], r: &mut ChaCha8Rng) -> Array<f64> {
    Array::randn(shape, 1.0, r)
}

fn positive(shape: &[usize], r: &mut ChaCha8Rng) -> Array<f64> {
    randn(shape, r).map(|v| 0.5 + v.abs())
}

fn away_from_zero(shape: &[usize], r: &mut ChaCha8Rng) -> Array<f64> {
    randn(shape, r).map(|v| if v.abs() < 0.01 { 0.5 } else { v })
}

fn check<F>(name: &str, tol: f64, f: F, make: impl Fn(&mut ChaCha8Rng) -> Vec<Array<f64>>)
where
    F: Fn(&[Tensor<f64>]) -> Result<Tensor<f64>>,
{
    for seed in 0..SEEDS {
        let mut r = rng(seed);
        let inputs = make(&mut r);
        let err = max_relative_error(&f, &inputs, GradCheckOptions { seed, ..Default::default() }).unwrap();
        assert!(err < tol, "{name} seed {seed}: {err:e}");
    }
}

fn small_dims(r: &mut ChaCha8Rng) -> [usize; 3] {
    [r.gen_range(1..=4), r.gen_range(1..=4), r.gen_range(1..=4)]
}

#[test]
fn conv3d_reference_case() {
    let err = conv3d_grad_check([1, 2, 4, 4, 4], [3, 2, 3, 3, 3], 1, 1, 7).unwrap();
    assert!(err < 1e-6, "{err:e}");
}

#[test]
fn conv3d_random_shapes() {
    for seed in 0..SEEDS {
        let mut r = rng(100 + seed);
        let d = small_dims(&mut r).map(|v| v + 1);
        let stride = r.gen_range(1..=2);
        let k = if r.gen_bool(0.5) { 3 } else { 1 };
        let c = r.gen_range(1..=3);
        let err = conv3d_grad_check([r.gen_range(1..=2), c, d[0], d[1], d[2]], [2, c, k, k, k], stride, k / 2, seed).unwrap();
        assert!(err < 1e-6, "seed {seed}: {err:e}");
    }
}

#[test]
fn conv3d_adjoints() {
    check(
        "conv3d_input_grad",
        TOL,
        |t| conv3d_input_grad(&t[0], &t[1], 1, 1, [3, 4, 2]),
        |r| vec![randn(&[2, 3, 3, 4, 2], r), randn(&[3, 2, 3, 3, 3], r)],
    );
    check(
        "conv3d_input_grad stride 2",
        TOL,
        |t| conv3d_input_grad(&t[0], &t[1], 2, 1, [4, 3, 5]),
        |r| vec![randn(&[1, 2, 2, 2, 3], r), randn(&[2, 2, 3, 3, 3], r)],
    );
    check(
        "conv3d_weight_grad",
        TOL,
        |t| conv3d_weight_grad(&t[0], &t[1], 1, 1, [3, 3, 3]),
        |r| vec![randn(&[2, 2, 3, 2, 4], r), randn(&[2, 3, 3, 2, 4], r)],
    );
}

#[test]
fn resampling() {
    check(
        "upsample",
        TOL,
        |t| upsample_nearest3d(&t[0], 2),
        |r| {
            let d = small_dims(r);
            vec![randn(&[1, 2, d[0], d[1], d[2]], r)]
        },
    );
    check(
        "avgpool",
        TOL,
        |t| avgpool3d(&t[0], 2),
        |r| {
            let d = small_dims(r).map(|v| 2 * v);
            vec![randn(&[2, 1, d[0], d[1], d[2]], r)]
        },
    );
}

#[test]
fn leaky_relu_away_from_kink() {
    check("leaky_relu", 1e-7, |t| t[0].leaky_relu(0.2), |r| {
        vec![randn(&[3, 7], r).map(|v| if v.abs() < 2e-3 { v.signum() * 0.5 } else { v })]
    });
}

#[test]
fn dense_10_to_5() {
    check(
        "dense",
        1e-7,
        |t| dense(&t[0], &t[1], Some(&t[2]), 1.0, 2f64.sqrt()),
        |r| vec![randn(&[3, 10], r), randn(&[5, 10], r), randn(&[5], r)],
    );
    check(
        "dense lr_mul",
        1e-7,
        |t| dense(&t[0], &t[1], Some(&t[2]), 0.01, 2f64.sqrt()),
        |r| vec![randn(&[2, 10], r), randn(&[5, 10], r), randn(&[5], r)],
    );
}

#[test]
fn elementwise_binary_with_broadcast() {
    let make = |r: &mut ChaCha8Rng| vec![randn(&[2, 3, 4], r), randn(&[3, 1], r)];
    check("add", TOL, |t| t[0].add(&t[1]), make);
    check("sub", TOL, |t| t[0].sub(&t[1]), make);
    check("mul", TOL, |t| t[0].mul(&t[1]), make);
    check("div", TOL, |t| t[0].div(&t[1]), |r| vec![randn(&[2, 3, 4], r), positive(&[3, 1], r)]);
}

#[test]
fn elementwise_unary() {
    let any = |r: &mut ChaCha8Rng| vec![randn(&[4, 5], r)];
    let pos = |r: &mut ChaCha8Rng| vec![positive(&[4, 5], r)];
    check("neg", TOL, |t| t[0].neg(), any);
    check("scale", TOL, |t| t[0].scale(-1.7), any);
    check("add_scalar", TOL, |t| t[0].add_scalar(0.3), any);
    check("square", TOL, |t| t[0].square(), any);
    check("exp", TOL, |t| t[0].exp(), any);
    check("softplus", TOL, |t| t[0].softplus(), any);
    check("sigmoid", TOL, |t| t[0].sigmoid(), any);
    check("tanh", TOL, |t| t[0].tanh(), any);
    check("sqrt", TOL, |t| t[0].sqrt(), pos);
    check("log", TOL, |t| t[0].log(), pos);
    check("powf", TOL, |t| t[0].powf(-0.5), pos);
    check("powf integer", TOL, |t| t[0].powf(3.0), |r| vec![away_from_zero(&[4, 5], r)]);
}

#[test]
fn reductions_and_layout() {
    let make = |r: &mut ChaCha8Rng| vec![randn(&[2, 3, 4], r)];
    check("sum", TOL, |t| t[0].sum(), make);
    check("mean", TOL, |t| t[0].mean(), make);
    check("sum_axes", TOL, |t| t[0].sum_axes(&[0, 2], false), make);
    check("mean_axes", TOL, |t| t[0].mean_axes(&[1], true), make);
    check("l2_norm", TOL, |t| t[0].l2_norm(&[1, 2]), make);
    check("reshape", TOL, |t| t[0].reshape(&[6, 4]), make);
    check("broadcast_to", TOL, |t| t[0].broadcast_to(&[5, 2, 3, 4]), make);
    check("sum_to", TOL, |t| t[0].sum_to(&[3, 1]), make);
    check("narrow", TOL, |t| t[0].narrow(2, 1, 2), make);
    check("pad_axis", TOL, |t| t[0].pad_axis(1, 2, 1), make);
    check("concat", TOL, |t| Tensor::concat(&[&t[0], &t[1]], 1), |r| vec![randn(&[2, 3, 4], r), randn(&[2, 1, 4], r)]);
    check("transpose", TOL, |t| t[0].transpose(), |r| vec![randn(&[3, 5], r)]);
    check("matmul", TOL, |t| t[0].matmul(&t[1]), |r| vec![randn(&[3, 5], r), randn(&[5, 2], r)]);
}

/// `∂/∂x` of `f` evaluated on a tape that tracks `x` itself, so it can be
/// differentiated again when `x` is tracked.
fn inner_grad(x: &Tensor<f64>, f: impl Fn(&Tensor<f64>) -> Result<Tensor<f64>>) -> Result<Tensor<f64>> {
    match x.tape() {
        Some(tape) => {
            let tape = tape.clone();
            let y = f(x)?;
            Ok(tape.grad(&y, &[x], true)?.remove(0))
        }
        None => {
            let tape = Tape::new();
            let leaf = tape.leaf(x.value().clone());
            let y = f(&leaf)?;
            Ok(tape.grad(&y, &[&leaf], false)?.remove(0).detach())
        }
    }
}

#[test]
fn second_order_through_conv_and_activations() {
    check(
        "grad norm of conv net",
        TOL,
        |t| {
            let w = t[1].clone();
            let g = inner_grad(&t[0], |x| conv3d(x, &w, None, 1, 1)?.leaky_relu(0.2)?.square()?.sum())?;
            g.square()?.sum()
        },
        |r| vec![away_from_zero(&[1, 2, 3, 3, 3], r), randn(&[2, 2, 3, 3, 3], r)],
    );
    check(
        "grad norm through resampling and dense",
        TOL,
        |t| {
            let w = t[1].clone();
            let g = inner_grad(&t[0], |x| {
                let y = upsample_nearest3d(x, 2)?.softplus()?;
                let p = avgpool3d(&y, 2)?.reshape(&[1, 8])?;
                dense(&p, &w, None, 1.0, 1.0)?.tanh()?.sum()
            })?;
            g.l2_norm(&[0, 1, 2, 3, 4])
        },
        |r| vec![randn(&[1, 1, 2, 2, 2], r), randn(&[3, 8], r)],
    );
}

#[test]
fn path_length_style_gradient() {
    // d/dw ‖∇_x <g(x; w), y>‖ with the weight as the outer variable
    check(
        "path length",
        1e-4,
        |t| {
            let (w, y) = (t[1].clone(), t[2].clone());
            let x = t[0].clone();
            let jvp = |xx: &Tensor<f64>| conv3d(xx, &w, None, 1, 1)?.leaky_relu(0.2)?.mul(&y)?.sum();
            let g = match x.tape() {
                Some(tape) => tape.clone().grad(&jvp(&x)?, &[&x], true)?.remove(0),
                None => inner_grad(&x, |v| {
                    let w = w.detach();
                    conv3d(v, &w, None, 1, 1)?.leaky_relu(0.2)?.mul(&y)?.sum()
                })?,
            };
            g.l2_norm(&[0, 1, 2, 3, 4])?.add_scalar(-0.5)?.square()
        },
        |r| vec![away_from_zero(&[1, 1, 3, 3, 3], r), randn(&[2, 1, 3, 3, 3], r), randn(&[1, 2, 3, 3, 3], r)],
    );
}
