use std::sync::Arc;
use std::time::{Duration, Instant};

use super::frame::{encode_frame, LatentFrame, WireOp};
use super::schedule::{SimSchedule, Trajectory};
use crate::autonet::{AutoencoderModel, LatentVector};
use crate::error::{Error, Result};
use crate::spectra::{
    synth_vsc_admittance, DqAdmittanceCurve, FrequencyGrid, OperatingPoint, VscParams,
};
use crate::tensorize::flatten;

/// Destination for encoded frames.
pub trait FrameSink {
    fn send(&mut self, frame: Vec<u8>) -> Result<()>;
}

impl FrameSink for Vec<Vec<u8>> {
    fn send(&mut self, frame: Vec<u8>) -> Result<()> {
        self.push(frame);
        Ok(())
    }
}

impl FrameSink for std::sync::mpsc::Sender<Vec<u8>> {
    fn send(&mut self, frame: Vec<u8>) -> Result<()> {
        std::sync::mpsc::Sender::send(self, frame)
            .map_err(|_| Error::Transport("aggregator channel closed".into()))
    }
}

/// Turbine-side encoder: curve synthesis, normalization, encoding and framing.
#[derive(Clone)]
pub struct TurbineAgent {
    pub turbine_id: u16,
    pub model: Arc<AutoencoderModel>,
    pub params: VscParams,
    pub grid: FrequencyGrid,
    pub trajectory: Trajectory,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AgentReport {
    pub sent: usize,
    pub skipped: usize,
}

impl TurbineAgent {
    pub fn new(
        turbine_id: u16,
        model: Arc<AutoencoderModel>,
        params: VscParams,
        grid: FrequencyGrid,
        trajectory: Trajectory,
    ) -> Result<Self> {
        if model.input_dim() != 8 * grid.len() {
            return Err(Error::Shape {
                expected: model.input_dim(),
                got: 8 * grid.len(),
            });
        }
        Ok(Self {
            turbine_id,
            model,
            params,
            grid,
            trajectory,
        })
    }

    pub fn curve_at(&self, t_ms: u64) -> Result<(OperatingPoint, DqAdmittanceCurve)> {
        let op = self.trajectory.at(t_ms);
        synth_vsc_admittance(&self.params, &op, &self.grid).map(|c| (op, c))
    }

    /// Latent of `curve` in transmitted precision.
    pub fn latent_of(&self, curve: &DqAdmittanceCurve) -> Result<LatentVector> {
        Ok(self.model.encode(&flatten(curve), false)?.quantized32())
    }

    pub fn frame_at(&self, t_ms: u64) -> Result<LatentFrame> {
        let (op, curve) = self.curve_at(t_ms)?;
        let h = self.model.encode(&flatten(&curve), false)?;
        Ok(LatentFrame {
            turbine_id: self.turbine_id,
            timestamp_ms: t_ms,
            op: WireOp::from(&op),
            latent: h.0.iter().map(|&v| v as f32).collect(),
        })
    }

    /// Emits one frame per tick. With `pace`, waits for each tick's wall-clock
    /// slot. Ticks whose curve cannot be generated are skipped.
    pub fn run(
        &self,
        schedule: &SimSchedule,
        sink: &mut dyn FrameSink,
        pace: bool,
    ) -> Result<AgentReport> {
        let start = Instant::now();
        let mut report = AgentReport::default();
        for tick in 0..schedule.tick_count {
            if pace {
                let due = start + Duration::from_millis(tick as u64 * schedule.tick_period_ms);
                if let Some(wait) = due.checked_duration_since(Instant::now()) {
                    std::thread::sleep(wait);
                }
            }
            let ts = schedule.timestamp(tick);
            let frame = match self.frame_at(ts) {
                Ok(f) => f,
                Err(e) => {
                    log::warn!("turbine {} skipped tick at {ts} ms: {e}", self.turbine_id);
                    report.skipped += 1;
                    continue;
                }
            };
            sink.send(encode_frame(&frame)?)?;
            report.sent += 1;
        }
        Ok(report)
    }
}
