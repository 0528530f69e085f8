use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, RecvTimeoutError, Sender};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use super::agent::{AgentReport, FrameSink, TurbineAgent};
use super::aggregator::{CompletedTick, FarmAggregator, IngestStats, ReferenceFn, TickEvent};
use super::frame::{declared_latent_len, frame_len, WireOp, HEADER_LEN};
use super::schedule::SimSchedule;
use crate::autonet::{load_checkpoint, AutoencoderModel};
use crate::error::{Error, Result};
use crate::gridnet::{det_sweep, InModel, Topology};
use crate::spectra::{synth_vsc_admittance, FrequencyGrid, OpRanges, VscParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transport {
    InProcess,
    Tcp,
}

impl std::fmt::Display for Transport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Transport::InProcess => "in-process",
            Transport::Tcp => "tcp",
        })
    }
}

impl std::str::FromStr for Transport {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "in-process" | "inprocess" | "channel" => Ok(Transport::InProcess),
            "tcp" | "socket" => Ok(Transport::Tcp),
            other => Err(format!("unknown transport {other:?} (in-process|tcp)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOptions {
    pub params: VscParams,
    /// Defaults to integer hertz from 1 Hz, sized by the model.
    pub grid: Option<FrequencyGrid>,
    /// How long a tick may wait for stragglers; defaults to three periods.
    pub wait: Option<Duration>,
    /// Emit frames in wall-clock tick slots instead of as fast as possible.
    pub pace: bool,
    /// Compare reconstructions against locally synthesized curves.
    pub with_reference: bool,
    pub keep_in_models: bool,
    pub connect_attempts: u32,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            params: VscParams::default(),
            grid: None,
            wait: None,
            pace: false,
            with_reference: true,
            keep_in_models: true,
            connect_attempts: 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatentLogRow {
    pub timestamp_ms: u64,
    pub turbine_id: u16,
    pub op: WireOp,
    pub latent: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TickSummary {
    pub timestamp_ms: u64,
    pub status: &'static str,
    pub missing: Vec<u16>,
    /// `(turbine_id, normalized-space error, physical error)`.
    pub errors: Vec<(u16, Option<f64>, Option<f64>)>,
    pub mean_rel_error: Option<f64>,
    pub min_sigma: Option<f64>,
    pub matrix_dim: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub transport: Transport,
    pub ticks: Vec<TickSummary>,
    pub latent_log: Vec<LatentLogRow>,
    pub in_models: Vec<(u64, InModel)>,
    pub agents: Vec<AgentReport>,
    pub ingest: IngestStats,
    /// Non-fatal failures collected along the way.
    pub errors: Vec<String>,
}

impl RunReport {
    pub fn completed_ticks(&self) -> usize {
        self.ticks.iter().filter(|t| t.status == "complete").count()
    }

    pub fn mean_rel_errors(&self) -> Vec<f64> {
        self.ticks.iter().filter_map(|t| t.mean_rel_error).collect()
    }

    /// Writes `latents.csv`, `errors.csv`, `ticks.csv` and, for kept models,
    /// `in_model/tick_<ms>/y_*.csv`.
    pub fn write_csv(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(Error::file(dir))?;
        let write = |name: &str, body: String| -> Result<PathBuf> {
            let p = dir.join(name);
            std::fs::write(&p, body).map_err(Error::file(&p))?;
            Ok(p)
        };

        let width = self.latent_log.first().map_or(0, |r| r.latent.len());
        let mut s = String::from("timestamp_ms,turbine_id,p_active,power_factor,u_pcc");
        for i in 0..width {
            s += &format!(",h{i}");
        }
        s.push('\n');
        for r in &self.latent_log {
            s += &format!(
                "{},{},{},{},{}",
                r.timestamp_ms, r.turbine_id, r.op.p_active, r.op.power_factor, r.op.u_pcc
            );
            for v in &r.latent {
                s += &format!(",{v:e}");
            }
            s.push('\n');
        }
        write("latents.csv", s)?;

        let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:e}"));
        let mut s = String::from("timestamp_ms,turbine_id,rel_error,phys_rel_error\n");
        for t in &self.ticks {
            for (id, e, p) in &t.errors {
                s += &format!("{},{},{},{}\n", t.timestamp_ms, id, opt(*e), opt(*p));
            }
        }
        write("errors.csv", s)?;

        let mut s =
            String::from("timestamp_ms,status,missing,mean_rel_error,min_sigma,matrix_dim\n");
        for t in &self.ticks {
            let missing: Vec<String> = t.missing.iter().map(|m| m.to_string()).collect();
            s += &format!(
                "{},{},{},{},{},{}\n",
                t.timestamp_ms,
                t.status,
                missing.join(";"),
                opt(t.mean_rel_error),
                opt(t.min_sigma),
                t.matrix_dim.map_or(String::new(), |d| d.to_string())
            );
        }
        write("ticks.csv", s)?;

        for (ts, m) in &self.in_models {
            m.write_csv(dir.join("in_model").join(format!("tick_{ts:08}")))?;
        }
        Ok(())
    }
}

struct TcpSink {
    stream: TcpStream,
}

impl FrameSink for TcpSink {
    fn send(&mut self, frame: Vec<u8>) -> Result<()> {
        self.stream
            .write_all(&frame)
            .map_err(|e| Error::Transport(format!("write failed: {e}")))
    }
}

fn connect_with_backoff(addr: std::net::SocketAddr, attempts: u32) -> Result<TcpStream> {
    let mut delay = Duration::from_millis(10);
    let mut last = None;
    for attempt in 0..attempts.max(1) {
        match TcpStream::connect(addr) {
            Ok(s) => {
                s.set_nodelay(true).ok();
                return Ok(s);
            }
            Err(e) => {
                log::warn!("connect attempt {} to {addr} failed: {e}", attempt + 1);
                last = Some(e);
                thread::sleep(delay);
                delay *= 2;
            }
        }
    }
    Err(Error::Transport(format!(
        "could not connect to {addr}: {}",
        last.map_or("no attempts".into(), |e| e.to_string())
    )))
}

/// Splits a byte stream into frames using the latent length in each header.
fn read_frames(mut stream: TcpStream, tx: Sender<Vec<u8>>) {
    loop {
        let mut buf = vec![0u8; HEADER_LEN];
        match stream.read_exact(&mut buf) {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return,
            Err(e) => {
                log::warn!("stream read failed: {e}");
                return;
            }
        }
        let n = declared_latent_len(&buf).expect("full header");
        buf.resize(frame_len(n), 0);
        if let Err(e) = stream.read_exact(&mut buf[HEADER_LEN..]) {
            log::warn!("stream ended inside a frame: {e}");
            let _ = tx.send(buf);
            return;
        }
        if tx.send(buf).is_err() {
            return;
        }
    }
}

fn summarize(ev: &TickEvent) -> TickSummary {
    let base = TickSummary {
        timestamp_ms: ev.timestamp_ms(),
        status: "",
        missing: Vec::new(),
        errors: Vec::new(),
        mean_rel_error: None,
        min_sigma: None,
        matrix_dim: None,
    };
    match ev {
        TickEvent::Completed(c) => TickSummary {
            status: "complete",
            errors: c
                .turbines
                .iter()
                .map(|t| (t.frame.turbine_id, t.rel_error, t.phys_rel_error))
                .collect(),
            mean_rel_error: c.mean_rel_error(),
            min_sigma: det_sweep(&c.in_model)
                .iter()
                .map(|d| d.sigma_min)
                .reduce(f64::min),
            matrix_dim: c.in_model.y_node.first().map(|y| y.nrows()),
            ..base
        },
        TickEvent::Incomplete { missing, .. } => TickSummary {
            status: "incomplete",
            missing: missing.clone(),
            ..base
        },
        TickEvent::Failed { .. } => TickSummary {
            status: "failed",
            ..base
        },
    }
}

fn record(report: &mut RunReport, ev: TickEvent, keep: bool) {
    report.ticks.push(summarize(&ev));
    match ev {
        TickEvent::Completed(c) => {
            let CompletedTick {
                timestamp_ms,
                turbines,
                in_model,
            } = *c;
            for t in turbines {
                report.latent_log.push(LatentLogRow {
                    timestamp_ms,
                    turbine_id: t.frame.turbine_id,
                    op: t.frame.op,
                    latent: t.frame.latent,
                });
            }
            if keep {
                report.in_models.push((timestamp_ms, in_model));
            }
        }
        TickEvent::Failed {
            timestamp_ms,
            reason,
        } => {
            report.errors.push(format!("tick {timestamp_ms}: {reason}"));
        }
        TickEvent::Incomplete { .. } => {}
    }
}

/// Runs one agent per trajectory and a single aggregator over `transport`
/// until every agent has finished.
pub fn run_simulation(
    schedule: &SimSchedule,
    model: Arc<AutoencoderModel>,
    topology: &Topology,
    transport: Transport,
    opts: &PipelineOptions,
) -> Result<RunReport> {
    schedule.validate(&OpRanges::default())?;
    let grid = match opts.grid {
        Some(g) => g,
        None => FrequencyGrid::integer_hz(model.input_dim() / 8)?,
    };
    let m = schedule.turbine_count();
    let agents = schedule
        .trajectories
        .iter()
        .enumerate()
        .map(|(i, tr)| TurbineAgent::new(i as u16, model.clone(), opts.params, grid, tr.clone()))
        .collect::<Result<Vec<_>>>()?;
    let wait = opts
        .wait
        .unwrap_or(Duration::from_millis(3 * schedule.tick_period_ms));
    let mut aggregator = FarmAggregator::new(model, topology.clone(), grid, m, wait)?;
    if opts.with_reference {
        let refs: Vec<TurbineAgent> = agents.clone();
        let params = opts.params;
        let reference: Arc<ReferenceFn> = Arc::new(move |id, ts| {
            let a = refs.get(id as usize)?;
            synth_vsc_admittance(&params, &a.trajectory.at(ts), &grid).ok()
        });
        aggregator = aggregator.with_reference(reference);
    }

    let mut report = RunReport {
        transport,
        ticks: Vec::new(),
        latent_log: Vec::new(),
        in_models: Vec::new(),
        agents: Vec::new(),
        ingest: IngestStats::default(),
        errors: Vec::new(),
    };
    if schedule.tick_count == 0 {
        report.agents = vec![AgentReport::default(); m];
        return Ok(report);
    }

    let (tx, rx) = mpsc::channel::<Vec<u8>>();
    let done = Arc::new(AtomicBool::new(false));

    let (agent_handles, acceptor) = match transport {
        Transport::InProcess => {
            let handles: Vec<_> = agents
                .into_iter()
                .map(|agent| {
                    let mut sink = tx.clone();
                    let schedule = schedule.clone();
                    let pace = opts.pace;
                    thread::spawn(move || agent.run(&schedule, &mut sink, pace))
                })
                .collect();
            (handles, None)
        }
        Transport::Tcp => {
            let listener = TcpListener::bind("127.0.0.1:0")
                .map_err(|e| Error::Transport(format!("bind failed: {e}")))?;
            let addr = listener
                .local_addr()
                .map_err(|e| Error::Transport(e.to_string()))?;
            listener
                .set_nonblocking(true)
                .map_err(|e| Error::Transport(e.to_string()))?;
            let acc_tx = tx.clone();
            let acc_done = done.clone();
            let acceptor = thread::spawn(move || {
                let mut readers = Vec::new();
                loop {
                    match listener.accept() {
                        Ok((stream, _)) => {
                            stream.set_nonblocking(false).ok();
                            let tx = acc_tx.clone();
                            readers.push(thread::spawn(move || read_frames(stream, tx)));
                            if readers.len() == m {
                                break;
                            }
                        }
                        Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                            if acc_done.load(Ordering::Acquire) {
                                break;
                            }
                            thread::sleep(Duration::from_millis(2));
                        }
                        Err(e) => {
                            log::warn!("accept failed: {e}");
                            thread::sleep(Duration::from_millis(5));
                        }
                    }
                }
                drop(acc_tx);
                for r in readers {
                    let _ = r.join();
                }
            });
            let attempts = opts.connect_attempts;
            let handles: Vec<_> = agents
                .into_iter()
                .map(|agent| {
                    let schedule = schedule.clone();
                    let pace = opts.pace;
                    thread::spawn(move || {
                        let stream = connect_with_backoff(addr, attempts)?;
                        let mut sink = TcpSink { stream };
                        let r = agent.run(&schedule, &mut sink, pace);
                        let _ = sink.stream.shutdown(std::net::Shutdown::Write);
                        r
                    })
                })
                .collect();
            (handles, Some(acceptor))
        }
    };
    drop(tx);

    let poll_every = Duration::from_millis((schedule.tick_period_ms / 4).clamp(1, 50));
    let watcher = {
        let done = done.clone();
        thread::spawn(move || {
            let results: Vec<_> = agent_handles.into_iter().map(|h| h.join()).collect();
            done.store(true, Ordering::Release);
            results
        })
    };

    loop {
        match rx.recv_timeout(poll_every) {
            Ok(bytes) => {
                let now = Instant::now();
                aggregator.ingest(&bytes, now);
                while let Ok(more) = rx.try_recv() {
                    aggregator.ingest(&more, Instant::now());
                }
            }
            Err(RecvTimeoutError::Timeout) => {}
            Err(RecvTimeoutError::Disconnected) => break,
        }
        for ev in aggregator.poll(Instant::now()) {
            record(&mut report, ev, opts.keep_in_models);
        }
    }
    for ev in aggregator.finish() {
        record(&mut report, ev, opts.keep_in_models);
    }

    for (i, r) in watcher
        .join()
        .expect("watcher thread")
        .into_iter()
        .enumerate()
    {
        match r {
            Ok(Ok(a)) => report.agents.push(a),
            Ok(Err(e)) => {
                report.errors.push(format!("turbine {i}: {e}"));
                report.agents.push(AgentReport::default());
            }
            Err(_) => {
                report
                    .errors
                    .push(format!("turbine {i}: agent thread panicked"));
                report.agents.push(AgentReport::default());
            }
        }
    }
    if let Some(a) = acceptor {
        let _ = a.join();
    }
    report.ingest = aggregator.stats();
    Ok(report)
}

/// Loads the checkpoint and topology, then runs the simulation.
pub fn run_pipeline(
    schedule: &SimSchedule,
    checkpoint: impl AsRef<Path>,
    topology: impl AsRef<Path>,
    transport: Transport,
    opts: &PipelineOptions,
) -> Result<RunReport> {
    let (model, _) = load_checkpoint(checkpoint)?;
    let topology = Topology::load(topology)?;
    run_simulation(schedule, Arc::new(model), &topology, transport, opts)
}
