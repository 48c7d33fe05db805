//! Shared helpers and reference implementations for the integration tests.
#![allow(dead_code)]

use cookstate::nn::gradcheck::finite_diff_check;
use cookstate::nn::{Layer, Mode, Tensor};
use cookstate::svm::{KernelSpec, SmoConfig};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-4;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Distinct values spread over (−1, 1), none closer than `1/n` to zero or to
/// each other, so max pooling and leaky ReLU have no kinks within reach of a
/// finite-difference step.
pub fn tie_free(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n: usize = shape.iter().product();
    let mut v: Vec<f64> = (0..n).map(|k| ((k as f64 + 0.5) / n as f64) * 2.0 - 1.0).collect();
    v.shuffle(rng);
    Tensor::new(shape, v).unwrap()
}

pub fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn projected_loss(layer: &Layer, x: &Tensor, w: &[f64]) -> f64 {
    let mut l = layer.clone();
    let y = l.forward(x, Mode::Train, false).unwrap();
    y.data.iter().zip(w).map(|(a, b)| a * b).sum()
}

/// Worst relative error between backprop and central differences of the
/// scalar `Σ wᵢ·yᵢ` (random `w`) for the input and every parameter.
pub fn layer_gradient_error(layer: &Layer, x: &Tensor, rng: &mut ChaCha8Rng) -> f64 {
    let mut probe = layer.clone();
    let y = probe.forward(x, Mode::Train, false).unwrap();
    let w: Vec<f64> = (0..y.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    for p in probe.params_mut() {
        p.zero_grad();
    }
    let dx = probe
        .backward(&Tensor::new(y.shape(), w.clone()).unwrap(), true)
        .unwrap();

    let mut worst = finite_diff_check(
        |xs| projected_loss(layer, &Tensor::new(x.shape(), xs.to_vec()).unwrap(), &w),
        &x.data,
        &dx.data,
        FD_STEP,
    );
    let params: Vec<(Vec<f64>, Vec<f64>)> = probe
        .params()
        .iter()
        .map(|p| (p.data.clone(), p.grad.clone().unwrap()))
        .collect();
    for (k, (values, grad)) in params.iter().enumerate() {
        let err = finite_diff_check(
            |vs| {
                let mut l = layer.clone();
                l.params_mut()[k].data.copy_from_slice(vs);
                projected_loss(&l, x, &w)
            },
            values,
            grad,
            FD_STEP,
        );
        worst = worst.max(err);
    }
    worst
}

/// Dense solver for the binary SVM dual
/// `max Σα − ½αᵀQα, 0 ≤ α ≤ C, yᵀα = 0` by accelerated projected gradient.
/// The projection solves for the multiplier of the equality by bisection.
pub fn qp_oracle(x: &[Vec<f64>], y: &[f64], kernel: &KernelSpec, c: f64) -> Vec<f64> {
    let n = x.len();
    let q: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| y[i] * y[j] * cookstate::svm::kernel_eval(kernel, &x[i], &x[j]).unwrap())
                .collect()
        })
        .collect();
    let lipschitz = (0..n)
        .map(|i| q[i].iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
        .max(1e-12);
    let project = |v: &[f64]| -> Vec<f64> {
        let at = |lam: f64| -> (Vec<f64>, f64) {
            let a: Vec<f64> = v.iter().zip(y).map(|(vi, yi)| (vi - lam * yi).clamp(0.0, c)).collect();
            let s = a.iter().zip(y).map(|(ai, yi)| ai * yi).sum();
            (a, s)
        };
        let (mut lo, mut hi) = (-1.0, 1.0);
        while at(lo).1 < 0.0 {
            lo *= 2.0;
        }
        while at(hi).1 > 0.0 {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if at(mid).1 > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        at(0.5 * (lo + hi)).0
    };
    let grad = |a: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| q[i].iter().zip(a).map(|(qij, aj)| qij * aj).sum::<f64>() - 1.0)
            .collect()
    };
    let mut alpha = vec![0.0; n];
    let mut z = alpha.clone();
    let mut t = 1.0f64;
    for _ in 0..20_000 {
        let g = grad(&z);
        let step: Vec<f64> = z.iter().zip(&g).map(|(zi, gi)| zi - gi / lipschitz).collect();
        let next = project(&step);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let momentum = (t - 1.0) / t_next;
        z = next.iter().zip(&alpha).map(|(a, b)| a + momentum * (a - b)).collect();
        let change = next.iter().zip(&alpha).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        alpha = next;
        t = t_next;
        if change < 1e-13 {
            break;
        }
    }
    alpha
}

/// Bias implied by a dual solution: mean over free vectors, else the
/// midpoint of the feasible interval.
pub fn oracle_bias(x: &[Vec<f64>], y: &[f64], alpha: &[f64], kernel: &KernelSpec, c: f64) -> f64 {
    let f0 = |i: usize| -> f64 {
        (0..x.len())
            .map(|j| alpha[j] * y[j] * cookstate::svm::kernel_eval(kernel, &x[j], &x[i]).unwrap())
            .sum()
    };
    let eps = 1e-7 * c;
    let free: Vec<usize> = (0..x.len()).filter(|&i| alpha[i] > eps && alpha[i] < c - eps).collect();
    if !free.is_empty() {
        return free.iter().map(|&i| y[i] - f0(i)).sum::<f64>() / free.len() as f64;
    }
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for i in 0..x.len() {
        let b = y[i] - f0(i);
        let at_upper = alpha[i] >= c - eps;
        // y·f ≥ 1 at α=0 and ≤ 1 at α=C bound b from one side each.
        if (y[i] > 0.0) != at_upper {
            lo = lo.max(b);
        } else {
            hi = hi.min(b);
        }
    }
    match (lo.is_finite(), hi.is_finite()) {
        (true, true) => 0.5 * (lo + hi),
        (true, false) => lo,
        (false, true) => hi,
        _ => 0.0,
    }
}

pub fn oracle_decision(x: &[Vec<f64>], y: &[f64], alpha: &[f64], bias: f64, kernel: &KernelSpec, p: &[f64]) -> f64 {
    (0..x.len())
        .map(|j| alpha[j] * y[j] * cookstate::svm::kernel_eval(kernel, &x[j], p).unwrap())
        .sum::<f64>()
        + bias
}

/// A random binary problem with both classes present.
pub fn random_problem(rng: &mut ChaCha8Rng, n: usize, d: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    loop {
        let shift: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut x = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            let label = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            x.push(
                (0..d)
                    .map(|k| rng.random_range(-1.0..1.0) + 0.8 * label * shift[k])
                    .collect::<Vec<f64>>(),
            );
            y.push(label);
        }
        if y.iter().any(|&v| v > 0.0) && y.iter().any(|&v| v < 0.0) {
            return (x, y);
        }
    }
}

pub fn smo_config(c: f64) -> SmoConfig {
    SmoConfig { c, ..SmoConfig::default() }
}
