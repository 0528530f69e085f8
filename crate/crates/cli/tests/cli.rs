use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use impnet::autonet::{save_checkpoint, ArchMode, Architecture, AutoencoderModel};
use impnet::spectra::read_dataset;
use impnet::tensorize::{fit_norm, flatten};

const TOPOLOGY: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/farm4.topo");

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_impnet"))
        .args(args)
        .current_dir(dir)
        .env("IMPNET_OUT", dir.join("runs"))
        .env("IMPNET_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(dir: &Path, args: &[&str]) -> i32 {
    run(dir, args).status.code().unwrap()
}

fn manifest(dir: &Path) -> serde_json::Value {
    let text = std::fs::read_to_string(dir.join("manifest.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

/// Small dataset and a short grouped training run shared by several tests.
fn trained(dir: &Path) -> (PathBuf, PathBuf) {
    ok(dir, &["gen-dataset", "--samples", "24", "--points", "16"]);
    ok(
        dir,
        &[
            "train",
            "--dataset",
            "runs/gen-dataset/dataset.imps",
            "--arch",
            "grouped",
            "--hidden",
            "32",
            "--latent",
            "8",
            "--epochs",
            "4",
            "--lr",
            "1e-3",
        ],
    );
    (
        dir.join("runs/gen-dataset/dataset.imps"),
        dir.join("runs/train/model.aeck"),
    )
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(d, &["--help"]), 0);
    assert_eq!(code(d, &["train", "--bogus"]), 1);
    assert_eq!(code(d, &["train"]), 1);
    assert_eq!(code(d, &["train", "--dataset", "missing.imps"]), 1);
    assert_eq!(
        code(d, &["plot", "--kind", "loss", "--input", "missing.csv"]),
        1
    );
    ok(d, &["gen-dataset", "--samples", "5", "--points", "8"]);
    let ds = "runs/gen-dataset/dataset.imps";
    assert_eq!(code(d, &["train", "--dataset", ds, "--paper-shape"]), 1);
    assert_eq!(
        code(d, &["train", "--dataset", ds, "--train-count", "9"]),
        1
    );
    // A dataset file is not a checkpoint.
    assert_eq!(code(d, &["eval", "--checkpoint", ds, "--dataset", ds]), 1);
}

#[test]
fn workflow_writes_outputs_and_manifests() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (ds, model) = trained(d);
    let (ds, model) = (ds.to_str().unwrap(), model.to_str().unwrap());
    let runs = d.join("runs");

    let train = manifest(&runs.join("train"));
    assert_eq!(train["subcommand"], "train");
    assert_eq!(train["flags"]["epochs"], 4);
    assert_eq!(train["seeds"]["train"], 7);
    let kept = std::fs::read_dir(runs.join("train/checkpoints"))
        .unwrap()
        .count();
    assert_eq!(kept, 4);

    let out = ok(d, &["eval", "--checkpoint", model, "--dataset", ds]);
    assert!(out.contains("loss mean") && out.contains("Y22"));
    let recon = std::fs::read_to_string(runs.join("eval/recon.csv")).unwrap();
    assert_eq!(recon.lines().count(), 1 + 4 * 16);

    ok(d, &["encode", "--checkpoint", model, "--dataset", ds]);
    let frames = std::fs::metadata(runs.join("encode/frames.ienc"))
        .unwrap()
        .len();
    assert_eq!(frames, 24 * (33 + 4 * 8));
    ok(
        d,
        &[
            "decode",
            "--checkpoint",
            model,
            "--frames",
            "runs/encode/frames.ienc",
            "--out",
            "from_frames",
        ],
    );
    ok(
        d,
        &[
            "decode",
            "--checkpoint",
            model,
            "--latents",
            "runs/encode/latents.csv",
            "--out",
            "from_csv",
        ],
    );
    let a = std::fs::read(d.join("from_frames/decoded.csv")).unwrap();
    let b = std::fs::read(d.join("from_csv/decoded.csv")).unwrap();
    assert_eq!(a, b);
    assert_eq!(
        String::from_utf8(a).unwrap().lines().count(),
        1 + 24 * 16 * 4
    );

    ok(
        d,
        &[
            "tsne",
            "--checkpoint",
            model,
            "--dataset",
            ds,
            "--perplexity",
            "5",
            "--iterations",
            "250",
        ],
    );
    assert!(runs.join("tsne/tsne_Y21.csv").exists());

    ok(
        d,
        &[
            "assemble",
            "--topology",
            TOPOLOGY,
            "--dataset",
            ds,
            "--samples",
            "3,4,5,6",
        ],
    );
    let det = std::fs::read_to_string(runs.join("assemble/det.csv")).unwrap();
    assert_eq!(det.lines().count(), 17);
    assert_eq!(manifest(&runs.join("assemble"))["results"]["matrix_dim"], 8);

    let out = ok(
        d,
        &[
            "simulate",
            "--checkpoint",
            model,
            "--topology",
            TOPOLOGY,
            "--ticks",
            "3",
            "--period-ms",
            "100",
            "--transport",
            "in-process",
        ],
    );
    assert!(out.contains("3/3 ticks complete"), "{out}");

    for (kind, input) in [
        ("loss", "runs/train/history.csv"),
        ("recon", "runs/eval/recon.csv"),
        ("tsne", "runs/tsne/tsne_joint.csv"),
        ("latent", "runs/simulate/latents.csv"),
    ] {
        ok(d, &["plot", "--kind", kind, "--input", input]);
        let svg = std::fs::read_to_string(runs.join(format!("plot/{kind}.svg"))).unwrap();
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    }
    assert_eq!(
        code(
            d,
            &[
                "plot",
                "--kind",
                "recon",
                "--input",
                "runs/train/history.csv"
            ]
        ),
        1
    );
}

#[test]
fn manifest_command_line_reproduces_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (_, model) = trained(d);
    let first = std::fs::read(&model).unwrap();
    let m = manifest(&d.join("runs/train"));
    let args: Vec<String> = m["command_line"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap().to_string())
        .collect();
    let mut args: Vec<&str> = args.iter().map(String::as_str).collect();
    args.extend(["--out", "again"]);
    ok(d, &args);
    assert_eq!(std::fs::read(d.join("again/model.aeck")).unwrap(), first);
    assert_eq!(
        std::fs::read(d.join("again/history.csv")).unwrap().len(),
        std::fs::read(d.join("runs/train/history.csv"))
            .unwrap()
            .len()
    );
}

#[test]
fn zero_model_eval_reports_unit_loss() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["gen-dataset", "--samples", "10", "--points", "16"]);
    let ds = read_dataset(d.join("runs/gen-dataset/dataset.imps")).unwrap();
    let flat: Vec<_> = ds.curves().map(flatten).collect();
    let arch = Architecture::new(ArchMode::Monolithic, 128, vec![16], 4).unwrap();
    let model = AutoencoderModel::zeros(arch, fit_norm(flat.iter()).unwrap()).unwrap();
    save_checkpoint(&model, None, d.join("zero.aeck")).unwrap();

    ok(
        d,
        &[
            "eval",
            "--checkpoint",
            "zero.aeck",
            "--dataset",
            "runs/gen-dataset/dataset.imps",
            "--split",
            "all",
        ],
    );
    let losses = std::fs::read_to_string(d.join("runs/eval/losses.csv")).unwrap();
    let values: Vec<f64> = losses
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(values.len(), 10);
    assert!(values.iter().all(|l| (l - 1.0).abs() < 1e-6), "{values:?}");
}

#[test]
fn corrupt_frames_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (ds, model) = trained(d);
    let (ds, model) = (ds.to_str().unwrap(), model.to_str().unwrap());
    ok(d, &["encode", "--checkpoint", model, "--dataset", ds]);
    let path = d.join("runs/encode/frames.ienc");
    let mut bytes = std::fs::read(&path).unwrap();
    bytes[40] ^= 0x10;
    std::fs::write(d.join("bad.ienc"), &bytes).unwrap();
    assert_eq!(
        code(
            d,
            &["decode", "--checkpoint", model, "--frames", "bad.ienc"]
        ),
        1
    );
    bytes.truncate(bytes.len() - 3);
    std::fs::write(d.join("short.ienc"), &bytes).unwrap();
    assert_eq!(
        code(
            d,
            &["decode", "--checkpoint", model, "--frames", "short.ienc"]
        ),
        1
    );
}
