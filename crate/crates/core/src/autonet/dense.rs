//! Batched fully connected layers.
//!
//! Activations are stored sample-major (`batch × dim`). Every reduction runs
//! in a fixed order (samples ascending, inputs ascending), so the parallel
//! kernels produce the same bits as a sequential run.

use rayon::prelude::*;

const COL_CHUNK: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    /// Row-major `out_dim × in_dim`.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

impl Dense {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            weight: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
        }
    }

    pub fn row(&self, o: usize) -> &[f64] {
        &self.weight[o * self.in_dim..(o + 1) * self.in_dim]
    }

    /// `y_b = W·x_b + b` for every sample, optionally followed by ReLU.
    pub fn forward(&self, x: &[f64], batch: usize, relu: bool) -> Vec<f64> {
        assert_eq!(x.len(), batch * self.in_dim, "dense input shape");
        let (n_in, n_out) = (self.in_dim, self.out_dim);
        let mut by_row = vec![0.0; n_out * batch];
        by_row
            .par_chunks_mut(batch)
            .with_min_len(8)
            .enumerate()
            .for_each(|(o, slot)| {
                let w = self.row(o);
                for (b, s) in slot.iter_mut().enumerate() {
                    *s = self.bias[o] + dot(w, &x[b * n_in..(b + 1) * n_in]);
                }
            });
        let mut y = vec![0.0; batch * n_out];
        for o in 0..n_out {
            for b in 0..batch {
                let v = by_row[o * batch + b];
                y[b * n_out + o] = if relu { relu_scalar(v) } else { v };
            }
        }
        y
    }

    /// Accumulates `dW += Σ_b δ_b x_bᵀ`, `db += Σ_b δ_b` into `grad` and,
    /// when requested, returns `dx_b = Wᵀ δ_b`.
    pub fn backward(
        &self,
        x: &[f64],
        delta: &[f64],
        batch: usize,
        grad: &mut Dense,
        need_dx: bool,
    ) -> Option<Vec<f64>> {
        let (n_in, n_out) = (self.in_dim, self.out_dim);
        assert_eq!(x.len(), batch * n_in, "dense backward input shape");
        assert_eq!(delta.len(), batch * n_out, "dense backward delta shape");

        grad.weight
            .par_chunks_mut(n_in)
            .with_min_len(8)
            .zip(grad.bias.par_iter_mut())
            .enumerate()
            .for_each(|(o, (row, gb))| {
                for b in 0..batch {
                    let d = delta[b * n_out + o];
                    if d != 0.0 {
                        axpy(d, &x[b * n_in..(b + 1) * n_in], row);
                        *gb += d;
                    }
                }
            });

        if !need_dx {
            return None;
        }

        let chunks: Vec<(usize, Vec<f64>)> = (0..n_in.div_ceil(COL_CHUNK))
            .into_par_iter()
            .map(|ci| {
                let c0 = ci * COL_CHUNK;
                let c1 = (c0 + COL_CHUNK).min(n_in);
                let w_len = c1 - c0;
                let mut acc = vec![0.0; batch * w_len];
                for o in 0..n_out {
                    let w = &self.weight[o * n_in + c0..o * n_in + c1];
                    for b in 0..batch {
                        let d = delta[b * n_out + o];
                        if d != 0.0 {
                            axpy(d, w, &mut acc[b * w_len..(b + 1) * w_len]);
                        }
                    }
                }
                (c0, acc)
            })
            .collect();

        let mut dx = vec![0.0; batch * n_in];
        for (c0, acc) in chunks {
            let w_len = acc.len() / batch;
            for b in 0..batch {
                dx[b * n_in + c0..b * n_in + c0 + w_len]
                    .copy_from_slice(&acc[b * w_len..(b + 1) * w_len]);
            }
        }
        Some(dx)
    }
}

#[inline]
fn relu_scalar(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

/// Elementwise `max(0, v)`.
pub fn relu(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&x| relu_scalar(x)).collect()
}

/// A chain of dense layers with ReLU on every layer except, optionally, the
/// last one.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
    pub relu_last: bool,
}

impl Mlp {
    pub fn zeros(dims: &[usize], relu_last: bool) -> Self {
        Self {
            layers: dims.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect(),
            relu_last,
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| Dense::zeros(l.in_dim, l.out_dim))
                .collect(),
            relu_last: self.relu_last,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty mlp").out_dim
    }

    fn relu_at(&self, k: usize) -> bool {
        k + 1 < self.layers.len() || self.relu_last
    }

    /// Returns the post-activation output of every layer.
    pub fn forward_cached(&self, x: &[f64], batch: usize) -> Vec<Vec<f64>> {
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        for (k, layer) in self.layers.iter().enumerate() {
            let input = if k == 0 { x } else { &acts[k - 1] };
            let y = layer.forward(input, batch, self.relu_at(k));
            acts.push(y);
        }
        acts
    }

    pub fn forward(&self, x: &[f64], batch: usize) -> Vec<f64> {
        self.forward_cached(x, batch).pop().expect("non-empty mlp")
    }

    /// Back-propagates `d_out` (gradient w.r.t. the final output) through the
    /// chain, accumulating parameter gradients into `grads`. Returns the
    /// gradient w.r.t. `x` when `need_dx` is set.
    pub fn backward(
        &self,
        x: &[f64],
        acts: &[Vec<f64>],
        d_out: Vec<f64>,
        batch: usize,
        grads: &mut Mlp,
        need_dx: bool,
    ) -> Option<Vec<f64>> {
        let mut delta = d_out;
        for k in (0..self.layers.len()).rev() {
            if self.relu_at(k) {
                // Subgradient at exactly zero is zero.
                for (d, a) in delta.iter_mut().zip(&acts[k]) {
                    if *a <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            let input = if k == 0 { x } else { &acts[k - 1] };
            let want = k > 0 || need_dx;
            {
                let dx = self.layers[k].backward(input, &delta, batch, &mut grads.layers[k], want)?;
                delta = dx
            }
        }
        Some(delta)
    }
}
