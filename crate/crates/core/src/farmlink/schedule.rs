use crate::error::{Error, Result};
use crate::spectra::{OpRanges, OperatingPoint};

/// Piecewise-linear operating point in time; held constant outside the knots.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    knots: Vec<(u64, OperatingPoint)>,
}

fn lerp(a: f64, b: f64, w: f64) -> f64 {
    a + (b - a) * w
}

impl Trajectory {
    /// Knots as `(time_ms, op)` with strictly increasing times.
    pub fn new(knots: Vec<(u64, OperatingPoint)>) -> Result<Self> {
        if knots.is_empty() {
            return Err(Error::InvalidParam(
                "trajectory needs at least one knot".into(),
            ));
        }
        if knots.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::InvalidParam(
                "trajectory knot times must increase".into(),
            ));
        }
        for (_, op) in &knots {
            op.validate()?;
        }
        Ok(Self { knots })
    }

    pub fn constant(op: OperatingPoint) -> Self {
        Self {
            knots: vec![(0, op)],
        }
    }

    pub fn knots(&self) -> &[(u64, OperatingPoint)] {
        &self.knots
    }

    pub fn at(&self, t_ms: u64) -> OperatingPoint {
        let k = &self.knots;
        let i = k.partition_point(|(t, _)| *t <= t_ms);
        if i == 0 {
            return k[0].1;
        }
        if i == k.len() {
            return k[k.len() - 1].1;
        }
        let (t0, a) = k[i - 1];
        let (t1, b) = k[i];
        let w = (t_ms - t0) as f64 / (t1 - t0) as f64;
        OperatingPoint {
            p_active: lerp(a.p_active, b.p_active, w),
            power_factor: lerp(a.power_factor, b.power_factor, w),
            u_pcc: lerp(a.u_pcc, b.u_pcc, w),
        }
    }

    /// Linear interpolation of in-range knots stays in range, so checking the
    /// knots is enough.
    pub fn within(&self, ranges: &OpRanges) -> bool {
        self.knots.iter().all(|(_, op)| ranges.contains(op))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimSchedule {
    pub tick_period_ms: u64,
    pub tick_count: usize,
    pub start_ms: u64,
    /// One trajectory per turbine; the index is the turbine id.
    pub trajectories: Vec<Trajectory>,
}

impl SimSchedule {
    pub fn validate(&self, ranges: &OpRanges) -> Result<()> {
        if self.tick_period_ms == 0 {
            return Err(Error::InvalidParam("tick period must be positive".into()));
        }
        if self.trajectories.is_empty() || self.trajectories.len() > u16::MAX as usize {
            return Err(Error::InvalidParam(format!(
                "need between 1 and {} turbines, got {}",
                u16::MAX,
                self.trajectories.len()
            )));
        }
        if let Some(i) = self.trajectories.iter().position(|t| !t.within(ranges)) {
            return Err(Error::InvalidParam(format!(
                "trajectory of turbine {i} leaves the generator ranges"
            )));
        }
        Ok(())
    }

    pub fn turbine_count(&self) -> usize {
        self.trajectories.len()
    }

    pub fn timestamp(&self, tick: usize) -> u64 {
        self.start_ms + tick as u64 * self.tick_period_ms
    }

    /// Four turbines with staggered power ramps and mild reactive and
    /// voltage swings, kept inside the default generator ranges.
    pub fn four_turbine(tick_count: usize, tick_period_ms: u64) -> Self {
        let span = tick_period_ms * tick_count.saturating_sub(1).max(1) as u64;
        let op = |p, pf, u| OperatingPoint {
            p_active: p,
            power_factor: pf,
            u_pcc: u,
        };
        let trajectories = (0..4)
            .map(|k| {
                let kf = k as f64;
                Trajectory::new(vec![
                    (0, op(0.6 + 0.25 * kf, 0.97 - 0.01 * kf, 1.0)),
                    (
                        span / 2,
                        op(1.5 - 0.1 * kf, 0.95 + 0.01 * kf, 1.02 - 0.01 * kf),
                    ),
                    (span, op(1.0 + 0.1 * kf, 0.98, 0.99 + 0.005 * kf)),
                ])
                .expect("default knots are valid")
            })
            .collect();
        Self {
            tick_period_ms,
            tick_count,
            start_ms: 0,
            trajectories,
        }
    }
}
