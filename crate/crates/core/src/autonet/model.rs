use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::arch::{ArchMode, Architecture};
use super::dense::Mlp;
use super::loss::{recon_loss, recon_loss_grad};
use crate::error::{Error, Result};
use crate::tensorize::{normalize, FlatSample, NormStats};

/// Encoder output.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentVector(pub Vec<f64>);

impl LatentVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Rounds every value to `f32`, as carried on the wire, and widens back.
    pub fn quantized32(&self) -> LatentVector {
        LatentVector(self.0.iter().map(|v| *v as f32 as f64).collect())
    }
}

/// MLP autoencoder with the normalization it was trained under.
#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderModel {
    pub arch: Architecture,
    /// One stack in monolithic mode, four in grouped mode.
    pub encoders: Vec<Mlp>,
    pub decoders: Vec<Mlp>,
    pub norm: NormStats,
    pub rng_seed: u64,
}

/// Parameter gradients, shaped like the model.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub encoders: Vec<Mlp>,
    pub decoders: Vec<Mlp>,
}

impl Gradients {
    pub fn zeros_like(model: &AutoencoderModel) -> Self {
        Self {
            encoders: model.encoders.iter().map(Mlp::zeros_like).collect(),
            decoders: model.decoders.iter().map(Mlp::zeros_like).collect(),
        }
    }

    pub fn zero(&mut self) {
        for d in self.encoders.iter_mut().chain(&mut self.decoders) {
            for l in &mut d.layers {
                l.weight.fill(0.0);
                l.bias.fill(0.0);
            }
        }
    }

    pub fn buffers(&self) -> Vec<&[f64]> {
        let mut out = stack_buffers(&self.encoders);
        out.extend(stack_buffers(&self.decoders));
        out
    }
}

/// Canonical parameter order: for each layer `k`, the weights of every
/// stack, then the biases of every stack.
fn stack_buffers(stacks: &[Mlp]) -> Vec<&[f64]> {
    let depth = stacks[0].layers.len();
    let mut out = Vec::with_capacity(depth * stacks.len() * 2);
    for k in 0..depth {
        out.extend(stacks.iter().map(|s| s.layers[k].weight.as_slice()));
        out.extend(stacks.iter().map(|s| s.layers[k].bias.as_slice()));
    }
    out
}

fn stack_buffers_mut(stacks: &mut [Mlp]) -> Vec<&mut [f64]> {
    let depth = stacks[0].layers.len();
    let mut iters: Vec<_> = stacks.iter_mut().map(|s| s.layers.iter_mut()).collect();
    let mut out = Vec::with_capacity(depth * iters.len() * 2);
    for _ in 0..depth {
        let (ws, bs): (Vec<&mut [f64]>, Vec<&mut [f64]>) = iters
            .iter_mut()
            .map(|it| {
                let d = it.next().expect("equal stack depth");
                (d.weight.as_mut_slice(), d.bias.as_mut_slice())
            })
            .unzip();
        out.extend(ws);
        out.extend(bs);
    }
    out
}

/// Flat indices that make up element `g`'s slice, ordered `(t, component)`.
pub(crate) fn group_indices(input_dim: usize, g: usize) -> Vec<usize> {
    let t_count = input_dim / 8;
    let mut idx = Vec::with_capacity(2 * t_count);
    for t in 0..t_count {
        idx.push(t * 8 + g);
        idx.push(t * 8 + 4 + g);
    }
    idx
}

/// Forward activations kept for back-propagation.
struct Trace {
    batch: usize,
    stack_inputs: Vec<Vec<f64>>,
    enc_acts: Vec<Vec<Vec<f64>>>,
    dec_inputs: Vec<Vec<f64>>,
    dec_acts: Vec<Vec<Vec<f64>>>,
    output: Vec<f64>,
}

impl AutoencoderModel {
    /// All-zero parameters.
    pub fn zeros(arch: Architecture, norm: NormStats) -> Result<Self> {
        arch.validate()?;
        let chain = arch.stack_chain();
        let rev: Vec<usize> = chain.iter().rev().copied().collect();
        let groups = arch.groups();
        Ok(Self {
            encoders: (0..groups).map(|_| Mlp::zeros(&chain, true)).collect(),
            decoders: (0..groups).map(|_| Mlp::zeros(&rev, false)).collect(),
            arch,
            norm,
            rng_seed: 0,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.arch.input_dim
    }

    pub fn latent_dim(&self) -> usize {
        self.arch.latent_dim
    }

    pub fn buffers(&self) -> Vec<&[f64]> {
        let mut out = stack_buffers(&self.encoders);
        out.extend(stack_buffers(&self.decoders));
        out
    }

    pub fn buffers_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = stack_buffers_mut(&mut self.encoders);
        out.extend(stack_buffers_mut(&mut self.decoders));
        out
    }

    pub fn is_finite(&self) -> bool {
        self.buffers()
            .iter()
            .all(|b| b.iter().all(|v| v.is_finite()))
    }

    fn split_input(&self, xs: &[&[f64]]) -> Vec<Vec<f64>> {
        let batch = xs.len();
        match self.arch.mode {
            ArchMode::Monolithic => {
                let mut flat = Vec::with_capacity(batch * self.input_dim());
                for x in xs {
                    flat.extend_from_slice(x);
                }
                vec![flat]
            }
            ArchMode::Grouped => (0..self.arch.groups())
                .map(|g| {
                    let idx = group_indices(self.input_dim(), g);
                    let mut flat = Vec::with_capacity(batch * idx.len());
                    for x in xs {
                        flat.extend(idx.iter().map(|&i| x[i]));
                    }
                    flat
                })
                .collect(),
        }
    }

    fn merge_output(&self, parts: &[Vec<f64>], batch: usize) -> Vec<f64> {
        match self.arch.mode {
            ArchMode::Monolithic => parts[0].clone(),
            ArchMode::Grouped => {
                let n = self.input_dim();
                let mut out = vec![0.0; batch * n];
                for (g, part) in parts.iter().enumerate() {
                    let idx = group_indices(n, g);
                    for b in 0..batch {
                        let src = &part[b * idx.len()..(b + 1) * idx.len()];
                        for (k, &i) in idx.iter().enumerate() {
                            out[b * n + i] = src[k];
                        }
                    }
                }
                out
            }
        }
    }

    fn check_inputs(&self, xs: &[&[f64]]) -> Result<()> {
        for x in xs {
            if x.len() != self.input_dim() {
                return Err(Error::Shape {
                    expected: self.input_dim(),
                    got: x.len(),
                });
            }
        }
        Ok(())
    }

    /// Concatenates per-stack latents into `batch × latent_dim`.
    fn join_latents(&self, per_stack: &[&[f64]], batch: usize) -> Vec<f64> {
        let lg = self.latent_dim() / self.arch.groups();
        let mut out = Vec::with_capacity(batch * self.latent_dim());
        for b in 0..batch {
            for part in per_stack {
                out.extend_from_slice(&part[b * lg..(b + 1) * lg]);
            }
        }
        out
    }

    fn split_latents(&self, h: &[f64], batch: usize) -> Vec<Vec<f64>> {
        let groups = self.arch.groups();
        let lg = self.latent_dim() / groups;
        (0..groups)
            .map(|g| {
                let mut v = Vec::with_capacity(batch * lg);
                for b in 0..batch {
                    let row = &h[b * self.latent_dim()..(b + 1) * self.latent_dim()];
                    v.extend_from_slice(&row[g * lg..(g + 1) * lg]);
                }
                v
            })
            .collect()
    }

    /// Batched encoder on already-normalized inputs; `batch × latent_dim`.
    pub fn encode_batch(&self, xs: &[&[f64]]) -> Result<Vec<f64>> {
        self.check_inputs(xs)?;
        let batch = xs.len();
        let inputs = self.split_input(xs);
        let parts: Vec<Vec<f64>> = self
            .encoders
            .iter()
            .zip(&inputs)
            .map(|(enc, x)| enc.forward(x, batch))
            .collect();
        let refs: Vec<&[f64]> = parts.iter().map(Vec::as_slice).collect();
        Ok(self.join_latents(&refs, batch))
    }

    /// Batched decoder; `batch × input_dim`, normalized space.
    pub fn decode_batch(&self, h: &[f64], batch: usize) -> Result<Vec<f64>> {
        if h.len() != batch * self.latent_dim() {
            return Err(Error::Shape {
                expected: batch * self.latent_dim(),
                got: h.len(),
            });
        }
        let parts: Vec<Vec<f64>> = self
            .decoders
            .iter()
            .zip(self.split_latents(h, batch))
            .map(|(dec, z)| dec.forward(&z, batch))
            .collect();
        Ok(self.merge_output(&parts, batch))
    }

    /// Encodes one sample, normalizing it first unless `already_normalized`.
    pub fn encode(&self, x: &FlatSample, already_normalized: bool) -> Result<LatentVector> {
        let owned;
        let input = if already_normalized {
            x
        } else {
            owned = normalize(x, &self.norm);
            &owned
        };
        self.encode_batch(&[input.as_slice()]).map(LatentVector)
    }

    /// Reconstruction in normalized space.
    pub fn decode(&self, h: &LatentVector) -> Result<FlatSample> {
        self.decode_batch(&h.0, 1).map(FlatSample)
    }

    /// `decode(encode(x))` for normalized inputs, `batch × input_dim`.
    pub fn reconstruct_batch(&self, xs: &[&[f64]]) -> Result<Vec<f64>> {
        let h = self.encode_batch(xs)?;
        self.decode_batch(&h, xs.len())
    }

    fn trace(&self, xs: &[&[f64]]) -> Trace {
        let batch = xs.len();
        let stack_inputs = self.split_input(xs);
        let enc_acts: Vec<Vec<Vec<f64>>> = self
            .encoders
            .iter()
            .zip(&stack_inputs)
            .map(|(enc, x)| enc.forward_cached(x, batch))
            .collect();
        let latents: Vec<&[f64]> = enc_acts
            .iter()
            .map(|a| a.last().expect("non-empty").as_slice())
            .collect();
        let h = self.join_latents(&latents, batch);
        let dec_inputs = self.split_latents(&h, batch);
        let dec_acts: Vec<Vec<Vec<f64>>> = self
            .decoders
            .iter()
            .zip(&dec_inputs)
            .map(|(dec, z)| dec.forward_cached(z, batch))
            .collect();
        let outs: Vec<Vec<f64>> = dec_acts
            .iter()
            .map(|a| a.last().expect("non-empty").clone())
            .collect();
        let output = self.merge_output(&outs, batch);
        Trace {
            batch,
            stack_inputs,
            enc_acts,
            dec_inputs,
            dec_acts,
            output,
        }
    }

    /// Per-sample losses of a normalized batch; accumulates the gradient of
    /// their mean into `grads`.
    pub fn batch_loss_grad(
        &self,
        xs: &[&[f64]],
        eps: f64,
        grads: &mut Gradients,
    ) -> Result<Vec<f64>> {
        self.check_inputs(xs)?;
        if xs.is_empty() {
            return Err(Error::InvalidParam("empty batch".into()));
        }
        let tr = self.trace(xs);
        let n = self.input_dim();
        let batch = tr.batch;
        let inv_b = 1.0 / batch as f64;

        let mut losses = Vec::with_capacity(batch);
        let mut d_out = vec![0.0; batch * n];
        for (b, x) in xs.iter().enumerate() {
            let xhat = &tr.output[b * n..(b + 1) * n];
            losses.push(recon_loss(xhat, x, eps)?);
            let g = recon_loss_grad(xhat, x, eps);
            for (d, gi) in d_out[b * n..(b + 1) * n].iter_mut().zip(g) {
                *d = gi * inv_b;
            }
        }

        // Gradient w.r.t. each decoder stack's output uses the same layout
        // split as the input.
        let d_parts = self.split_input(&d_out.chunks_exact(n).collect::<Vec<&[f64]>>());

        let lg = self.latent_dim() / self.arch.groups();
        for g in 0..self.arch.groups() {
            let d_latent = self.decoders[g]
                .backward(
                    &tr.dec_inputs[g],
                    &tr.dec_acts[g],
                    d_parts[g].clone(),
                    batch,
                    &mut grads.decoders[g],
                    true,
                )
                .expect("decoder dx requested");
            debug_assert_eq!(d_latent.len(), batch * lg);
            self.encoders[g].backward(
                &tr.stack_inputs[g],
                &tr.enc_acts[g],
                d_latent,
                batch,
                &mut grads.encoders[g],
                false,
            );
        }
        Ok(losses)
    }

    /// Loss and exact gradient for a single normalized sample.
    pub fn backward(&self, x: &FlatSample, eps: f64) -> Result<(f64, Gradients)> {
        let mut grads = Gradients::zeros_like(self);
        let loss = self.batch_loss_grad(&[x.as_slice()], eps, &mut grads)?;
        Ok((loss[0], grads))
    }

    /// Mean loss of a batch without computing gradients.
    pub fn batch_losses(&self, xs: &[&[f64]], eps: f64) -> Result<Vec<f64>> {
        let out = self.reconstruct_batch(xs)?;
        let n = self.input_dim();
        xs.iter()
            .enumerate()
            .map(|(b, x)| recon_loss(&out[b * n..(b + 1) * n], x, eps))
            .collect()
    }
}

/// He-normal weights (`std = √(2/fan_in)`), zero biases.
pub fn init_model(arch: Architecture, norm: NormStats, seed: u64) -> Result<AutoencoderModel> {
    let mut model = AutoencoderModel::zeros(arch, norm)?;
    model.rng_seed = seed;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut init_stacks = |stacks: &mut [Mlp]| {
        let depth = stacks[0].layers.len();
        for k in 0..depth {
            for s in stacks.iter_mut() {
                let layer = &mut s.layers[k];
                let std = (2.0 / layer.in_dim as f64).sqrt();
                let dist = Normal::new(0.0, std).expect("positive std");
                for w in &mut layer.weight {
                    *w = dist.sample(&mut rng);
                }
            }
        }
    };
    init_stacks(&mut model.encoders);
    init_stacks(&mut model.decoders);
    Ok(model)
}
