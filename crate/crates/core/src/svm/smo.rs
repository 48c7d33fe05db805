//! Sequential minimal optimization for the binary soft-margin dual
//!
//! ```text
//! max  Σα − ½ Σ αᵢαⱼ yᵢyⱼ K(xᵢ,xⱼ)   s.t.  0 ≤ α ≤ C,  Σ αᵢyᵢ = 0
//! ```
//!
//! Each step updates the maximal violating pair analytically.

use serde::{Deserialize, Serialize};

use super::{KernelSpec, SvmError};

const TAU: f64 = 1e-12;
pub const DEFAULT_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoConfig {
    pub c: f64,
    pub tol: f64,
    /// Pass cap as a multiple of the sample count; one pass is
    /// `max(N, 100)` pair updates.
    pub pass_factor: usize,
}

impl Default for SmoConfig {
    fn default() -> Self {
        Self { c: 1.0, tol: DEFAULT_TOL, pass_factor: 10 }
    }
}

/// Two-class machine; `label_pair.0` is the positive class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinarySvm {
    pub label_pair: (usize, usize),
    pub kernel: KernelSpec,
    pub support_vectors: Vec<Vec<f64>>,
    /// αᵢ of each support vector, all strictly positive.
    pub alphas: Vec<f64>,
    /// ±1 per support vector.
    pub sv_labels: Vec<f64>,
    pub bias: f64,
    pub c: f64,
    pub iterations: usize,
}

impl BinarySvm {
    pub fn decision(&self, x: &[f64]) -> Result<f64, SvmError> {
        if let Some(sv) = self.support_vectors.first() {
            if sv.len() != x.len() {
                return Err(SvmError::Dimension { expected: sv.len(), got: x.len() });
            }
        }
        Ok(self.decision_unchecked(x))
    }

    pub(crate) fn decision_unchecked(&self, x: &[f64]) -> f64 {
        self.support_vectors
            .iter()
            .zip(self.alphas.iter().zip(&self.sv_labels))
            .map(|(sv, (a, y))| a * y * self.kernel.eval_unchecked(sv, x))
            .sum::<f64>()
            + self.bias
    }

    /// Positive class when the decision value is strictly positive.
    pub fn predict(&self, x: &[f64]) -> Result<usize, SvmError> {
        Ok(if self.decision(x)? > 0.0 { self.label_pair.0 } else { self.label_pair.1 })
    }

    /// Σα − ½ αᵀQα over the stored support vectors.
    pub fn dual_objective(&self) -> f64 {
        dual_objective_full(&self.kernel, &self.support_vectors, &self.sv_labels, &self.alphas)
    }
}

pub fn dual_objective_full(kernel: &KernelSpec, x: &[Vec<f64>], y: &[f64], alpha: &[f64]) -> f64 {
    let mut quad = 0.0;
    for i in 0..x.len() {
        for j in 0..x.len() {
            quad += alpha[i] * alpha[j] * y[i] * y[j] * kernel.eval_unchecked(&x[i], &x[j]);
        }
    }
    alpha.iter().sum::<f64>() - 0.5 * quad
}

fn in_up(a: f64, y: f64, c: f64) -> bool {
    (y > 0.0 && a < c) || (y < 0.0 && a > 0.0)
}

fn in_low(a: f64, y: f64, c: f64) -> bool {
    (y > 0.0 && a > 0.0) || (y < 0.0 && a < c)
}

/// Counts points breaking the KKT conditions at `tol`.
pub fn kkt_violations(margins: &[f64], alpha: &[f64], c: f64, tol: f64) -> usize {
    margins
        .iter()
        .zip(alpha)
        .filter(|&(&m, &a)| {
            if a <= 0.0 {
                m < 1.0 - tol
            } else if a >= c {
                m > 1.0 + tol
            } else {
                (m - 1.0).abs() > tol
            }
        })
        .count()
}

/// Trains one machine. `y` must hold ±1; `pair` names the classes behind
/// +1 and −1.
pub fn smo_train_binary(
    x: &[Vec<f64>],
    y: &[f64],
    kernel: &KernelSpec,
    config: &SmoConfig,
    pair: (usize, usize),
) -> Result<BinarySvm, SvmError> {
    kernel.validate()?;
    let n = x.len();
    if y.len() != n {
        return Err(SvmError::Dimension { expected: n, got: y.len() });
    }
    if n < 2 || !y.iter().any(|&v| v > 0.0) || !y.iter().any(|&v| v < 0.0) {
        return Err(SvmError::DegenerateData(format!(
            "binary machine {pair:?} needs both classes, got {n} samples"
        )));
    }
    if y.iter().any(|&v| v != 1.0 && v != -1.0) {
        return Err(SvmError::DegenerateData("targets must be ±1".into()));
    }
    let d = x[0].len();
    if let Some(bad) = x.iter().find(|r| r.len() != d) {
        return Err(SvmError::Dimension { expected: d, got: bad.len() });
    }
    let c = config.c;
    if !(c > 0.0 && c.is_finite()) {
        return Err(SvmError::Config(format!("C must be > 0, got {c}")));
    }

    // Q[i][j] = yᵢ yⱼ K(xᵢ, xⱼ), row-major.
    let mut q = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let v = y[i] * y[j] * kernel.eval_unchecked(&x[i], &x[j]);
            q[i * n + j] = v;
            q[j * n + i] = v;
        }
    }
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let max_iter = config.pass_factor.max(1) * n * n.max(100);
    let mut iterations = 0;

    loop {
        let mut gmax = f64::NEG_INFINITY;
        let mut gmin = f64::INFINITY;
        let (mut i, mut j) = (usize::MAX, usize::MAX);
        for t in 0..n {
            let v = -y[t] * grad[t];
            if in_up(alpha[t], y[t], c) && v > gmax {
                gmax = v;
                i = t;
            }
            if in_low(alpha[t], y[t], c) && v < gmin {
                gmin = v;
                j = t;
            }
        }
        if i == usize::MAX || j == usize::MAX || gmax - gmin <= config.tol {
            break;
        }
        if iterations >= max_iter {
            let (margins, _) = margins_and_bias(&grad, &alpha, y, c);
            let violations = kkt_violations(&margins, &alpha, c, config.tol);
            if violations == 0 {
                break;
            }
            return Err(SvmError::Convergence { violations, iterations });
        }
        iterations += 1;

        let (old_i, old_j) = (alpha[i], alpha[j]);
        let qi = &q[i * n..(i + 1) * n];
        if y[i] != y[j] {
            let mut quad = q[i * n + i] + q[j * n + j] + 2.0 * qi[j];
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let mut quad = q[i * n + i] + q[j * n + j] - 2.0 * qi[j];
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        let qj = &q[j * n..(j + 1) * n];
        for t in 0..n {
            grad[t] += qi[t] * di + qj[t] * dj;
        }
    }

    let (_, bias) = margins_and_bias(&grad, &alpha, y, c);
    let keep: Vec<usize> = (0..n).filter(|&t| alpha[t] > 0.0).collect();
    Ok(BinarySvm {
        label_pair: pair,
        kernel: *kernel,
        support_vectors: keep.iter().map(|&t| x[t].clone()).collect(),
        alphas: keep.iter().map(|&t| alpha[t]).collect(),
        sv_labels: keep.iter().map(|&t| y[t]).collect(),
        bias,
        c,
        iterations,
    })
}

/// Bias from the free support vectors (midpoint of the feasible interval
/// when there are none) and the resulting functional margins yᵢf(xᵢ).
fn margins_and_bias(grad: &[f64], alpha: &[f64], y: &[f64], c: f64) -> (Vec<f64>, f64) {
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut sum, mut free) = (0.0, 0usize);
    for t in 0..grad.len() {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 { ub = ub.min(yg) } else { lb = lb.max(yg) }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 { ub = ub.min(yg) } else { lb = lb.max(yg) }
        } else {
            free += 1;
            sum += yg;
        }
    }
    let rho = if free > 0 { sum / free as f64 } else { (ub + lb) / 2.0 };
    let bias = -rho;
    let margins = (0..grad.len()).map(|t| grad[t] + 1.0 + y[t] * bias).collect();
    (margins, bias)
}
