//! Turbine-to-farm latent telemetry: wire frames, turbine agents, the farm
//! aggregator and a simulation harness over in-process or TCP transport.

mod agent;
mod aggregator;
mod frame;
mod pipeline;
mod schedule;

pub use agent::{AgentReport, FrameSink, TurbineAgent};
pub use aggregator::{
    reconstruct, CompletedTick, FarmAggregator, IngestOutcome, IngestStats, ReferenceFn, TickEvent,
    TurbineResult,
};
pub use frame::*;
pub use pipeline::{
    run_pipeline, run_simulation, LatentLogRow, PipelineOptions, RunReport, TickSummary, Transport,
};
pub use schedule::{SimSchedule, Trajectory};
