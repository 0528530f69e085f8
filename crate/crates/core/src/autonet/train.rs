use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::adam::{adam_step, AdamConfig, AdamState};
use super::arch::Architecture;
use super::checkpoint::save_checkpoint;
use super::loss::{total_loss, LOSS_EPS};
use super::model::{init_model, AutoencoderModel, Gradients};
use crate::error::{Error, Result};
use crate::spectra::Dataset;
use crate::tensorize::{fit_norm, flatten, normalize, FlatSample};

/// Where and how often checkpoints are written.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CheckpointPolicy {
    /// `None` disables checkpointing.
    pub dir: Option<PathBuf>,
    /// Keep only the newest `n` epoch files; `None` keeps every epoch.
    pub keep_last: Option<usize>,
    pub with_adam_state: bool,
}

impl CheckpointPolicy {
    pub fn every_epoch(dir: impl Into<PathBuf>) -> Self {
        Self {
            dir: Some(dir.into()),
            keep_last: None,
            with_adam_state: true,
        }
    }
}

pub fn checkpoint_path(dir: &Path, epoch: usize) -> PathBuf {
    dir.join(format!("epoch_{epoch:04}.aeck"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub loss_eps: f64,
    pub seed: u64,
    pub checkpoint: CheckpointPolicy,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            batch_size: 10,
            epochs: 500,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            loss_eps: LOSS_EPS,
            seed: 7,
            checkpoint: CheckpointPolicy::default(),
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidParam("learning_rate must be > 0".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidParam("batch_size must be >= 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidParam("epochs must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per-sample loss over the epoch's training batches.
    pub train_loss: f64,
    /// Standard deviation of the batch mean losses within the epoch.
    pub train_batch_std: f64,
    /// Mean test loss after the epoch; `None` with an empty test split.
    pub test_loss: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }

    pub fn train_losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.train_loss).collect()
    }

    /// `epoch,train_loss,test_loss,seconds`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "epoch,train_loss,test_loss,seconds")?;
        for e in &self.epochs {
            let test = e.test_loss.map(|v| v.to_string()).unwrap_or_default();
            writeln!(w, "{},{},{},{:.6}", e.epoch, e.train_loss, test, e.seconds)?;
        }
        Ok(())
    }
}

/// Dataset indices assigned to each split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    /// Seeded shuffle of `0..n`; the first `train_count` go to training, the
    /// next `test_count` to testing.
    pub fn shuffled(
        n: usize,
        train_count: usize,
        test_count: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if train_count == 0 {
            return Err(Error::InvalidParam("train split must be non-empty".into()));
        }
        if train_count + test_count > n {
            return Err(Error::InvalidParam(format!(
                "split {train_count}+{test_count} exceeds dataset size {n}"
            )));
        }
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(rng);
        Ok(Self {
            train: idx[..train_count].to_vec(),
            test: idx[train_count..train_count + test_count].to_vec(),
        })
    }
}

/// The split [`train`] draws for `seed`, recomputed without training.
pub fn split_for_seed(n: usize, split: (usize, usize), seed: u64) -> Result<Split> {
    Split::shuffled(n, split.0, split.1, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub struct TrainOutcome {
    pub model: AutoencoderModel,
    pub history: TrainHistory,
    pub adam: AdamState,
    pub split: Split,
}

/// Loss of every sample in `xs` under `model`, batched.
pub fn sample_losses(
    model: &AutoencoderModel,
    xs: &[FlatSample],
    eps: f64,
    batch: usize,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(xs.len());
    for chunk in xs.chunks(batch.max(1)) {
        let refs: Vec<&[f64]> = chunk.iter().map(FlatSample::as_slice).collect();
        out.extend(model.batch_losses(&refs, eps)?);
    }
    Ok(out)
}

/// Minimizes the mean relative reconstruction loss over the training split
/// with mini-batch Adam.
pub fn train(
    dataset: &Dataset,
    split: (usize, usize),
    arch: Architecture,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    arch.validate()?;
    let t = dataset.grid.len();
    if arch.input_dim != 8 * t {
        return Err(Error::Shape {
            expected: 8 * t,
            got: arch.input_dim,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let split = Split::shuffled(dataset.len(), split.0, split.1, &mut rng)?;

    let flat: Vec<FlatSample> = dataset.curves().map(flatten).collect();
    let norm = fit_norm(split.train.iter().map(|&i| &flat[i]))?;
    let prep = |ids: &[usize]| -> Result<Vec<FlatSample>> {
        ids.iter()
            .map(|&i| {
                let x = normalize(&flat[i], &norm);
                if x.norm() == 0.0 {
                    return Err(Error::Degenerate(format!(
                        "sample {i} has zero norm after normalization"
                    )));
                }
                Ok(x)
            })
            .collect()
    };
    let train_x = prep(&split.train)?;
    let test_x = prep(&split.test)?;

    let mut model = init_model(arch, norm, config.seed)?;
    let mut grads = Gradients::zeros_like(&model);
    let mut adam = AdamState::for_buffers(&model.buffers());
    let adam_cfg = config.adam();

    if let Some(dir) = &config.checkpoint.dir {
        std::fs::create_dir_all(dir).map_err(Error::file(dir))?;
    }

    let mut history = TrainHistory::default();
    let mut order: Vec<usize> = (0..train_x.len()).collect();
    for epoch in 1..=config.epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);

        let mut sample_losses_epoch = Vec::with_capacity(train_x.len());
        let mut batch_means = Vec::new();
        for (batch_idx, chunk) in order.chunks(config.batch_size).enumerate() {
            // Accumulate in ascending sample index so results do not depend
            // on the shuffle beyond batch membership.
            let mut members = chunk.to_vec();
            members.sort_unstable();
            let refs: Vec<&[f64]> = members.iter().map(|&i| train_x[i].as_slice()).collect();

            grads.zero();
            let losses = model.batch_loss_grad(&refs, config.loss_eps, &mut grads)?;
            let mean = total_loss(&losses)?;
            if !mean.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: batch_idx,
                });
            }
            adam_step(
                &mut model.buffers_mut(),
                &grads.buffers(),
                &mut adam,
                &adam_cfg,
            )?;
            batch_means.push(mean);
            sample_losses_epoch.extend(losses);
        }

        let train_loss = total_loss(&sample_losses_epoch)?;
        let bm = total_loss(&batch_means)?;
        let train_batch_std = (batch_means.iter().map(|v| (v - bm) * (v - bm)).sum::<f64>()
            / batch_means.len() as f64)
            .sqrt();
        let test_loss = if test_x.is_empty() {
            None
        } else {
            Some(total_loss(&sample_losses(
                &model,
                &test_x,
                config.loss_eps,
                config.batch_size,
            )?)?)
        };
        if let Some(tl) = test_loss {
            if !tl.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: usize::MAX,
                });
            }
        }

        if let Some(dir) = &config.checkpoint.dir {
            let adam_ref = config.checkpoint.with_adam_state.then_some(&adam);
            save_checkpoint(&model, adam_ref, checkpoint_path(dir, epoch))?;
            if let Some(keep) = config.checkpoint.keep_last {
                if epoch > keep {
                    let stale = checkpoint_path(dir, epoch - keep);
                    if stale.exists() {
                        std::fs::remove_file(&stale).map_err(Error::file(&stale))?;
                    }
                }
            }
        }

        let rec = EpochRecord {
            epoch,
            train_loss,
            train_batch_std,
            test_loss,
            seconds: started.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {epoch}/{}: train {:.5} test {} ({:.2}s)",
            config.epochs,
            rec.train_loss,
            rec.test_loss.map_or("-".into(), |v| format!("{v:.5}")),
            rec.seconds
        );
        history.epochs.push(rec);
    }

    Ok(TrainOutcome {
        model,
        history,
        adam,
        split,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autonet::arch::ArchMode;
    use crate::autonet::checkpoint::load_checkpoint;
    use crate::spectra::{gen_dataset, FrequencyGrid, OpRanges, VscParams};

    fn tiny_dataset(n: usize) -> Dataset {
        let grid = FrequencyGrid::new(1.0, 50.0, 8).unwrap();
        gen_dataset(n, 21, &VscParams::default(), &OpRanges::default(), &grid).unwrap()
    }

    fn tiny_arch() -> Architecture {
        Architecture::new(ArchMode::Monolithic, 64, vec![16], 8).unwrap()
    }

    #[test]
    fn one_checkpoint_and_record_per_epoch() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = TrainConfig {
            epochs: 500,
            learning_rate: 1e-3,
            batch_size: 4,
            checkpoint: CheckpointPolicy {
                dir: Some(dir.path().to_path_buf()),
                keep_last: None,
                with_adam_state: false,
            },
            ..TrainConfig::default()
        };
        let out = train(&tiny_dataset(12), (10, 2), tiny_arch(), &cfg).unwrap();
        assert_eq!(out.history.len(), 500);
        let files = std::fs::read_dir(dir.path()).unwrap().count();
        assert_eq!(files, 500);
        let (last, _) = load_checkpoint(checkpoint_path(dir.path(), 500)).unwrap();
        assert_eq!(last, out.model);
        let h = &out.history.epochs;
        assert!(h[499].train_loss < h[0].train_loss);
    }

    #[test]
    fn retention_keeps_only_newest() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = TrainConfig {
            epochs: 6,
            checkpoint: CheckpointPolicy {
                dir: Some(dir.path().to_path_buf()),
                keep_last: Some(2),
                with_adam_state: true,
            },
            ..TrainConfig::default()
        };
        train(&tiny_dataset(6), (5, 1), tiny_arch(), &cfg).unwrap();
        let mut names: Vec<String> = std::fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        names.sort();
        assert_eq!(names, vec!["epoch_0005.aeck", "epoch_0006.aeck"]);
    }

    #[test]
    fn identical_seeds_identical_models() {
        let d = tiny_dataset(10);
        let cfg = TrainConfig {
            epochs: 5,
            batch_size: 3,
            ..TrainConfig::default()
        };
        let a = train(&d, (8, 2), tiny_arch(), &cfg).unwrap();
        let b = train(&d, (8, 2), tiny_arch(), &cfg).unwrap();
        assert_eq!(
            crate::autonet::checkpoint_to_bytes(&a.model, Some(&a.adam)),
            crate::autonet::checkpoint_to_bytes(&b.model, Some(&b.adam))
        );
        assert_eq!(a.history.train_losses(), b.history.train_losses());
    }

    #[test]
    fn split_validation() {
        let d = tiny_dataset(4);
        let cfg = TrainConfig {
            epochs: 1,
            ..TrainConfig::default()
        };
        assert!(train(&d, (4, 1), tiny_arch(), &cfg).is_err());
        let wrong = Architecture::new(ArchMode::Monolithic, 72, vec![16], 8).unwrap();
        assert!(matches!(
            train(&d, (3, 1), wrong, &cfg),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn history_csv_has_header_and_rows() {
        let h = TrainHistory {
            epochs: vec![EpochRecord {
                epoch: 1,
                train_loss: 0.5,
                train_batch_std: 0.0,
                test_loss: Some(0.25),
                seconds: 1.0,
            }],
        };
        let mut buf = Vec::new();
        h.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "epoch,train_loss,test_loss,seconds\n1,0.5,0.25,1.000000\n"
        );
    }
}
