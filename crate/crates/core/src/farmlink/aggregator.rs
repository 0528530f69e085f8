use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use super::frame::{decode_frame, FrameError, LatentFrame};
use crate::autonet::{AutoencoderModel, LatentVector};
use crate::error::Result;
use crate::gridnet::{assemble_in_model, InModel, Topology, TurbineBlock};
use crate::spectra::{DqAdmittanceCurve, FrequencyGrid};
use crate::tensorize::{denormalize, flatten, l2, normalize, unflatten, FlatSample};

/// Reference curve for `(turbine_id, timestamp_ms)`, when known.
pub type ReferenceFn = dyn Fn(u16, u64) -> Option<DqAdmittanceCurve> + Send + Sync;

#[derive(Debug, Clone, PartialEq)]
pub enum IngestOutcome {
    Accepted,
    /// Replaced an earlier frame for the same turbine and tick.
    Duplicate,
    /// Arrived after its tick was already resolved.
    Stale,
    Rejected(FrameError),
    UnknownTurbine(u16),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TurbineResult {
    pub frame: LatentFrame,
    pub curve: DqAdmittanceCurve,
    /// Relative error in normalized space, the training-loss measure.
    pub rel_error: Option<f64>,
    /// Relative error of the physical admittance values.
    pub phys_rel_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletedTick {
    pub timestamp_ms: u64,
    /// Ordered by turbine id.
    pub turbines: Vec<TurbineResult>,
    pub in_model: InModel,
}

impl CompletedTick {
    pub fn mean_rel_error(&self) -> Option<f64> {
        let errs: Option<Vec<f64>> = self.turbines.iter().map(|t| t.rel_error).collect();
        errs.filter(|e| !e.is_empty())
            .map(|e| e.iter().sum::<f64>() / e.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TickEvent {
    Completed(Box<CompletedTick>),
    Incomplete {
        timestamp_ms: u64,
        missing: Vec<u16>,
    },
    Failed {
        timestamp_ms: u64,
        reason: String,
    },
}

impl TickEvent {
    pub fn timestamp_ms(&self) -> u64 {
        match self {
            TickEvent::Completed(c) => c.timestamp_ms,
            TickEvent::Incomplete { timestamp_ms, .. } | TickEvent::Failed { timestamp_ms, .. } => {
                *timestamp_ms
            }
        }
    }
}

struct Pending {
    first_seen: Instant,
    frames: BTreeMap<u16, LatentFrame>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct IngestStats {
    pub received: usize,
    pub accepted: usize,
    pub duplicates: usize,
    pub stale: usize,
    pub rejected: usize,
    pub unknown: usize,
}

/// Farm-side decoder: collects frames per tick, reconstructs curves and
/// assembles the impedance-network model once every turbine has reported.
/// Turbine `i` sits at node `i` of the topology.
pub struct FarmAggregator {
    model: Arc<AutoencoderModel>,
    topology: Topology,
    grid: FrequencyGrid,
    turbines: usize,
    wait: Duration,
    reference: Option<Arc<ReferenceFn>>,
    pending: BTreeMap<u64, Pending>,
    resolved_through: Option<u64>,
    stats: IngestStats,
}

/// Host-side reconstruction of a transmitted latent.
pub fn reconstruct(
    model: &AutoencoderModel,
    latent: &[f32],
    grid: &FrequencyGrid,
) -> Result<(FlatSample, DqAdmittanceCurve)> {
    let h = LatentVector(latent.iter().map(|&v| v as f64).collect());
    let xn = model.decode(&h)?;
    let curve = unflatten(&denormalize(&xn, &model.norm), grid)?;
    Ok((xn, curve))
}

fn rel(a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    l2(&diff) / (l2(b) + crate::autonet::LOSS_EPS)
}

impl FarmAggregator {
    pub fn new(
        model: Arc<AutoencoderModel>,
        topology: Topology,
        grid: FrequencyGrid,
        turbines: usize,
        wait: Duration,
    ) -> Result<Self> {
        topology.validate()?;
        if turbines == 0 || turbines > topology.node_count {
            return Err(crate::Error::InvalidParam(format!(
                "{turbines} turbines do not fit a {}-node topology",
                topology.node_count
            )));
        }
        Ok(Self {
            model,
            topology,
            grid,
            turbines,
            wait,
            reference: None,
            pending: BTreeMap::new(),
            resolved_through: None,
            stats: IngestStats::default(),
        })
    }

    pub fn with_reference(mut self, reference: Arc<ReferenceFn>) -> Self {
        self.reference = Some(reference);
        self
    }

    pub fn stats(&self) -> IngestStats {
        self.stats
    }

    pub fn pending_ticks(&self) -> usize {
        self.pending.len()
    }

    pub fn ingest(&mut self, bytes: &[u8], now: Instant) -> IngestOutcome {
        self.stats.received += 1;
        let frame = match decode_frame(bytes) {
            Ok(f) => f,
            Err(e) => {
                log::warn!("rejected frame: {e}");
                self.stats.rejected += 1;
                return IngestOutcome::Rejected(e);
            }
        };
        if frame.latent.len() != self.model.latent_dim() {
            let e = FrameError::LatentLen {
                expected: self.model.latent_dim(),
                got: frame.latent.len(),
            };
            log::warn!("rejected frame from turbine {}: {e}", frame.turbine_id);
            self.stats.rejected += 1;
            return IngestOutcome::Rejected(e);
        }
        if frame.turbine_id as usize >= self.turbines {
            log::warn!("frame from unknown turbine {}", frame.turbine_id);
            self.stats.unknown += 1;
            return IngestOutcome::UnknownTurbine(frame.turbine_id);
        }
        let ts = frame.timestamp_ms;
        if self.resolved_through.is_some_and(|r| ts <= r) {
            log::warn!(
                "stale frame from turbine {} for tick {ts}",
                frame.turbine_id
            );
            self.stats.stale += 1;
            return IngestOutcome::Stale;
        }
        let id = frame.turbine_id;
        let entry = self.pending.entry(ts).or_insert_with(|| Pending {
            first_seen: now,
            frames: BTreeMap::new(),
        });
        if entry.frames.insert(id, frame).is_some() {
            log::warn!("duplicate frame from turbine {id} for tick {ts}; keeping the latest");
            self.stats.duplicates += 1;
            IngestOutcome::Duplicate
        } else {
            self.stats.accepted += 1;
            IngestOutcome::Accepted
        }
    }

    /// Resolves every tick that is complete or has waited too long. A
    /// complete tick also resolves all earlier ones: each turbine streams in
    /// order, so their missing frames can no longer arrive.
    pub fn poll(&mut self, now: Instant) -> Vec<TickEvent> {
        let last_complete = self
            .pending
            .iter()
            .rev()
            .find(|(_, p)| p.frames.len() == self.turbines)
            .map(|(ts, _)| *ts);
        let mut events = Vec::new();
        while let Some((&ts, p)) = self.pending.iter().next() {
            let complete = p.frames.len() == self.turbines;
            let overdue = now.saturating_duration_since(p.first_seen) >= self.wait;
            let superseded = last_complete.is_some_and(|c| ts < c);
            if !(complete || overdue || superseded) {
                break;
            }
            let p = self.pending.remove(&ts).expect("present");
            events.push(self.resolve(ts, p));
        }
        events
    }

    /// Resolves everything still pending; used once all sources have closed.
    pub fn finish(&mut self) -> Vec<TickEvent> {
        let pending = std::mem::take(&mut self.pending);
        pending
            .into_iter()
            .map(|(ts, p)| self.resolve(ts, p))
            .collect()
    }

    fn resolve(&mut self, ts: u64, p: Pending) -> TickEvent {
        self.resolved_through = Some(self.resolved_through.map_or(ts, |r| r.max(ts)));
        if p.frames.len() < self.turbines {
            let missing: Vec<u16> = (0..self.turbines as u16)
                .filter(|id| !p.frames.contains_key(id))
                .collect();
            log::warn!("tick {ts} incomplete, missing turbines {missing:?}; assembly skipped");
            return TickEvent::Incomplete {
                timestamp_ms: ts,
                missing,
            };
        }
        match self.assemble(ts, p.frames) {
            Ok(c) => TickEvent::Completed(Box::new(c)),
            Err(e) => {
                log::error!("tick {ts} failed: {e}");
                TickEvent::Failed {
                    timestamp_ms: ts,
                    reason: e.to_string(),
                }
            }
        }
    }

    fn assemble(&self, ts: u64, frames: BTreeMap<u16, LatentFrame>) -> Result<CompletedTick> {
        let mut turbines = Vec::with_capacity(frames.len());
        for (id, frame) in frames {
            let (xn, curve) = reconstruct(&self.model, &frame.latent, &self.grid)?;
            let (mut rel_error, mut phys_rel_error) = (None, None);
            if let Some(reference) = self.reference.as_ref().and_then(|r| r(id, ts)) {
                let x = flatten(&reference);
                rel_error = Some(rel(
                    xn.as_slice(),
                    normalize(&x, &self.model.norm).as_slice(),
                ));
                phys_rel_error = Some(rel(flatten(&curve).as_slice(), x.as_slice()));
            }
            turbines.push(TurbineResult {
                frame,
                curve,
                rel_error,
                phys_rel_error,
            });
        }
        let blocks: Vec<TurbineBlock> = turbines
            .iter()
            .map(|t| TurbineBlock {
                node_index: t.frame.turbine_id as usize,
                curve: t.curve.clone(),
            })
            .collect();
        let in_model = assemble_in_model(&self.topology, &blocks, &self.grid)?;
        Ok(CompletedTick {
            timestamp_ms: ts,
            turbines,
            in_model,
        })
    }
}
