//! Exact O(N²) t-SNE.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub early_exaggeration: f64,
    /// Iterations that use the exaggerated affinities.
    pub exaggeration_iters: usize,
    pub momentum: f64,
    pub final_momentum: f64,
    pub momentum_switch: usize,
    pub seed: u64,
    /// Standard deviation of the initial layout.
    pub init_std: f64,
    pub perplexity_tol: f64,
    pub max_bisection_steps: usize,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            iterations: 1000,
            learning_rate: 200.0,
            early_exaggeration: 12.0,
            exaggeration_iters: 250,
            momentum: 0.5,
            final_momentum: 0.8,
            momentum_switch: 250,
            seed: 0,
            init_std: 1e-4,
            perplexity_tol: 1e-5,
            max_bisection_steps: 50,
        }
    }
}

const MIN_GAIN: f64 = 0.01;

/// Joint input affinities and the per-point calibration behind them.
#[derive(Debug, Clone, PartialEq)]
pub struct Affinities {
    pub n: usize,
    /// Row-major `n × n` symmetric joint probabilities, zero diagonal.
    pub p: Vec<f64>,
    /// Gaussian precision `1/(2σ_i²)` of each point.
    pub betas: Vec<f64>,
    /// Achieved perplexity of each conditional distribution.
    pub perplexities: Vec<f64>,
}

fn squared_distances<P: AsRef<[f64]> + Sync>(points: &[P]) -> Vec<f64> {
    let n = points.len();
    let mut d = vec![0.0; n * n];
    d.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        let a = points[i].as_ref();
        for (j, slot) in row.iter_mut().enumerate() {
            if i != j {
                *slot = a
                    .iter()
                    .zip(points[j].as_ref())
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum();
            }
        }
    });
    d
}

/// Conditional row `p_{j|i}` at precision `beta`; returns its perplexity.
fn conditional_row(dist: &[f64], i: usize, beta: f64, d_min: f64, out: &mut [f64]) -> f64 {
    let mut sum = 0.0;
    let mut weighted = 0.0;
    for (j, (&d, o)) in dist.iter().zip(out.iter_mut()).enumerate() {
        if j == i {
            *o = 0.0;
            continue;
        }
        let shifted = d - d_min;
        let v = (-beta * shifted).exp();
        *o = v;
        sum += v;
        weighted += shifted * v;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
    let entropy = sum.ln() + beta * weighted / sum;
    entropy.exp()
}

fn calibrate_row(dist: &[f64], i: usize, cfg: &TsneConfig, out: &mut [f64]) -> (f64, f64) {
    let n = dist.len();
    let d_min = dist
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != i)
        .map(|(_, d)| *d)
        .fold(f64::INFINITY, f64::min);
    let mean_shift = dist
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != i)
        .map(|(_, d)| d - d_min)
        .sum::<f64>()
        / (n - 1) as f64;
    let mut beta = if mean_shift > 0.0 {
        1.0 / mean_shift
    } else {
        1.0
    };
    let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
    let mut perp = conditional_row(dist, i, beta, d_min, out);
    for _ in 0..cfg.max_bisection_steps {
        if (perp - cfg.perplexity).abs() < cfg.perplexity_tol {
            break;
        }
        if perp > cfg.perplexity {
            lo = beta;
            beta = if hi.is_finite() {
                0.5 * (beta + hi)
            } else {
                beta * 2.0
            };
        } else {
            hi = beta;
            beta = 0.5 * (beta + lo);
        }
        perp = conditional_row(dist, i, beta, d_min, out);
    }
    (beta, perp)
}

fn check_inputs<P: AsRef<[f64]>>(points: &[P], perplexity: f64) -> Result<()> {
    let n = points.len();
    if !(perplexity > 0.0) {
        return Err(Error::Tsne(format!(
            "perplexity must be > 0, got {perplexity}"
        )));
    }
    if (n as f64) <= 3.0 * perplexity {
        return Err(Error::Tsne(format!(
            "perplexity {perplexity} infeasible for {n} points (need more than {})",
            3.0 * perplexity
        )));
    }
    let dim = points[0].as_ref().len();
    if let Some(bad) = points.iter().position(|p| p.as_ref().len() != dim) {
        return Err(Error::Tsne(format!(
            "point {bad} has dimension {} instead of {dim}",
            points[bad].as_ref().len()
        )));
    }
    if points
        .iter()
        .any(|p| p.as_ref().iter().any(|v| !v.is_finite()))
    {
        return Err(Error::Tsne("non-finite input coordinate".into()));
    }
    Ok(())
}

/// Calibrated, symmetrized input affinities `p_ij = (p_{j|i} + p_{i|j}) / 2n`.
pub fn joint_affinities<P: AsRef<[f64]> + Sync>(
    points: &[P],
    cfg: &TsneConfig,
) -> Result<Affinities> {
    check_inputs(points, cfg.perplexity)?;
    let n = points.len();
    let dist = squared_distances(points);
    let mut cond = vec![0.0; n * n];
    let calib: Vec<(f64, f64)> = cond
        .par_chunks_mut(n)
        .enumerate()
        .map(|(i, row)| calibrate_row(&dist[i * n..(i + 1) * n], i, cfg, row))
        .collect();

    let mut p = vec![0.0; n * n];
    let scale = 1.0 / (2.0 * n as f64);
    for i in 0..n {
        for j in 0..n {
            p[i * n + j] = (cond[i * n + j] + cond[j * n + i]) * scale;
        }
    }
    let (betas, perplexities) = calib.into_iter().unzip();
    Ok(Affinities {
        n,
        p,
        betas,
        perplexities,
    })
}

/// Embeds `points` in 2-D.
pub fn tsne<P: AsRef<[f64]> + Sync>(points: &[P], cfg: &TsneConfig) -> Result<Vec<[f64; 2]>> {
    let aff = joint_affinities(points, cfg)?;
    Ok(embed_affinities(&aff, cfg))
}

/// Gradient descent on the KL divergence for precomputed affinities.
pub fn embed_affinities(aff: &Affinities, cfg: &TsneConfig) -> Vec<[f64; 2]> {
    let n = aff.n;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let normal = Normal::new(0.0, cfg.init_std).expect("positive init std");
    let mut y: Vec<[f64; 2]> = (0..n)
        .map(|_| [normal.sample(&mut rng), normal.sample(&mut rng)])
        .collect();
    let mut update = vec![[0.0f64; 2]; n];
    let mut gains = vec![[1.0f64; 2]; n];
    let mut num = vec![0.0; n * n];

    for iter in 0..cfg.iterations {
        let exaggeration = if iter < cfg.exaggeration_iters {
            cfg.early_exaggeration
        } else {
            1.0
        };
        let momentum = if iter < cfg.momentum_switch {
            cfg.momentum
        } else {
            cfg.final_momentum
        };

        // Student-t kernel; row sums are combined in fixed order below.
        let row_sums: Vec<f64> = num
            .par_chunks_mut(n)
            .enumerate()
            .map(|(i, row)| {
                let mut s = 0.0;
                for (j, slot) in row.iter_mut().enumerate() {
                    if i == j {
                        *slot = 0.0;
                        continue;
                    }
                    let dx = y[i][0] - y[j][0];
                    let dy = y[i][1] - y[j][1];
                    let v = 1.0 / (1.0 + dx * dx + dy * dy);
                    *slot = v;
                    s += v;
                }
                s
            })
            .collect();
        let sum_q: f64 = row_sums.iter().sum();

        let grad: Vec<[f64; 2]> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut g = [0.0; 2];
                for j in 0..n {
                    if i == j {
                        continue;
                    }
                    let w = num[i * n + j];
                    let mult = (exaggeration * aff.p[i * n + j] - w / sum_q) * w;
                    g[0] += mult * (y[i][0] - y[j][0]);
                    g[1] += mult * (y[i][1] - y[j][1]);
                }
                [4.0 * g[0], 4.0 * g[1]]
            })
            .collect();

        for i in 0..n {
            for k in 0..2 {
                let same_sign = (grad[i][k] > 0.0) == (update[i][k] > 0.0);
                gains[i][k] = if same_sign {
                    (gains[i][k] * 0.8).max(MIN_GAIN)
                } else {
                    gains[i][k] + 0.2
                };
                update[i][k] =
                    momentum * update[i][k] - cfg.learning_rate * gains[i][k] * grad[i][k];
                y[i][k] += update[i][k];
            }
        }
        recenter(&mut y);
    }
    y
}

fn recenter(y: &mut [[f64; 2]]) {
    let n = y.len() as f64;
    let mx = y.iter().map(|p| p[0]).sum::<f64>() / n;
    let my = y.iter().map(|p| p[1]).sum::<f64>() / n;
    for p in y.iter_mut() {
        p[0] -= mx;
        p[1] -= my;
    }
}

/// KL(P‖Q) of an embedding, for diagnostics.
pub fn kl_divergence(aff: &Affinities, y: &[[f64; 2]]) -> f64 {
    let n = aff.n;
    let mut num = vec![0.0; n * n];
    let mut sum_q = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let dx = y[i][0] - y[j][0];
                let dy = y[i][1] - y[j][1];
                let v = 1.0 / (1.0 + dx * dx + dy * dy);
                num[i * n + j] = v;
                sum_q += v;
            }
        }
    }
    let mut kl = 0.0;
    for k in 0..n * n {
        let p = aff.p[k];
        if p > 0.0 {
            kl += p * (p / (num[k] / sum_q)).ln();
        }
    }
    kl
}
