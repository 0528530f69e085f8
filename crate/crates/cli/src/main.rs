mod commands;
mod manifest;
mod plot;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{
    AssembleArgs, DecodeArgs, EncodeArgs, EvalArgs, GenDatasetArgs, SimulateArgs, TrainArgs,
    TsneArgs,
};
use plot::PlotArgs;

/// Latent encoding of turbine dq admittance curves and farm impedance-network
/// assembly.
///
/// Every subcommand writes its outputs and a manifest.json into its output
/// directory. Exit status: 0 on success, 1 on invalid input or usage, 2 on
/// runtime failure.
#[derive(Debug, Parser)]
#[command(name = "impnet", version, propagate_version = true)]
struct Cli {
    /// Parent of the default per-subcommand output directories.
    #[arg(long, env = "IMPNET_OUT", default_value = "runs", global = true)]
    out_root: PathBuf,

    /// Log filter, e.g. warn, info, debug.
    #[arg(long, env = "IMPNET_LOG", default_value = "info", global = true)]
    log: String,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dq admittance dataset (IMPS file).
    GenDataset(GenDatasetArgs),
    /// Train the autoencoder, checkpointing every epoch.
    Train(TrainArgs),
    /// Report reconstruction loss and amplitude/phase errors on a split.
    Eval(EvalArgs),
    /// Encode dataset curves to latent vectors and IENC frames.
    Encode(EncodeArgs),
    /// Decode latent vectors or IENC frames back to admittance curves.
    Decode(DecodeArgs),
    /// t-SNE maps of the semantic latent groups.
    Tsne(TsneArgs),
    /// Assemble the farm nodal admittance model from turbine curves.
    Assemble(AssembleArgs),
    /// Run the four-turbine online encode, transmit and assemble loop.
    Simulate(SimulateArgs),
    /// Render an SVG figure from a CSV written by another subcommand.
    Plot(PlotArgs),
}

/// Marks an error as caused by invalid input rather than a runtime failure.
#[derive(Debug)]
pub struct Invalid(pub String);

impl std::fmt::Display for Invalid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

#[macro_export]
macro_rules! invalid {
    ($($t:tt)*) => {
        anyhow::Error::new($crate::Invalid(format!($($t)*)))
    };
}

fn core_exit_code(e: &impnet::Error) -> u8 {
    use impnet::Error as E;
    match e {
        E::InvalidGrid(_)
        | E::InvalidParam(_)
        | E::Format { .. }
        | E::Shape { .. }
        | E::Degenerate(_)
        | E::Topology { .. }
        | E::Frame(_) => 1,
        E::Sample { source, .. } => core_exit_code(source),
        E::File { source, .. } if source.kind() == std::io::ErrorKind::NotFound => 1,
        _ => 2,
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<Invalid>() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<impnet::Error>() {
            return core_exit_code(e);
        }
        if let Some(e) = cause.downcast_ref::<std::io::Error>() {
            if e.kind() == std::io::ErrorKind::NotFound {
                return 1;
            }
        }
    }
    2
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // Help and version go to stdout and are not failures.
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    env_logger::Builder::new()
        .parse_filters(&cli.log)
        .format_timestamp(None)
        .init();

    let root = cli.out_root;
    let result = match cli.command {
        Command::GenDataset(a) => commands::gen_dataset(a, &root),
        Command::Train(a) => commands::train(a, &root),
        Command::Eval(a) => commands::eval(a, &root),
        Command::Encode(a) => commands::encode(a, &root),
        Command::Decode(a) => commands::decode(a, &root),
        Command::Tsne(a) => commands::tsne(a, &root),
        Command::Assemble(a) => commands::assemble(a, &root),
        Command::Simulate(a) => commands::simulate(a, &root),
        Command::Plot(a) => plot::plot(a, &root),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
