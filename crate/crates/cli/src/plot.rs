use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use serde::Serialize;

use crate::commands::out_dir;
use crate::invalid;
use crate::manifest::RunManifest;
use crate::svg::{render, Panel, Series, Style};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlotKind {
    /// history.csv from train.
    Loss,
    /// recon.csv from eval.
    Recon,
    /// tsne_*.csv from tsne.
    Tsne,
    /// latents.csv from simulate or encode.
    Latent,
}

#[derive(Debug, Args, Serialize)]
pub struct PlotArgs {
    #[arg(long, value_enum)]
    pub kind: PlotKind,
    /// Input CSV.
    #[arg(long)]
    pub input: PathBuf,
    /// Figure title [default: by kind].
    #[arg(long)]
    pub title: Option<String>,
    /// Output directory [default: <out-root>/plot]; the figure is <kind>.svg.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

struct Table {
    path: PathBuf,
    headers: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn read(path: &Path) -> Result<Self> {
        let file =
            std::fs::File::open(path).with_context(|| format!("reading {}", path.display()))?;
        let mut rdr = csv::Reader::from_reader(file);
        let headers = rdr.headers()?.iter().map(str::to_string).collect();
        let rows = rdr
            .records()
            .map(|r| r.map(|r| r.iter().map(str::to_string).collect()))
            .collect::<Result<_, _>>()?;
        Ok(Self {
            path: path.to_path_buf(),
            headers,
            rows,
        })
    }

    fn col(&self, name: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| invalid!("{} has no {name} column", self.path.display()))
    }

    fn has(&self, name: &str) -> bool {
        self.headers.iter().any(|h| h == name)
    }

    /// Empty cells read as NaN so optional columns plot as gaps.
    fn num(&self, row: usize, col: usize) -> Result<f64> {
        let s = self.rows[row][col].trim();
        if s.is_empty() {
            return Ok(f64::NAN);
        }
        s.parse().map_err(|_| {
            invalid!(
                "{} row {}: {s:?} is not a number",
                self.path.display(),
                row + 1
            )
        })
    }
}

fn loss_figure(t: &Table) -> Result<Vec<Panel>> {
    let (e, tr, te) = (t.col("epoch")?, t.col("train_loss")?, t.col("test_loss")?);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for r in 0..t.rows.len() {
        let x = t.num(r, e)?;
        train.push((x, t.num(r, tr)?));
        let v = t.num(r, te)?;
        if v.is_finite() {
            test.push((x, v));
        }
    }
    let mut series = vec![Series::new("train", train, Style::Line, 0)];
    if !test.is_empty() {
        series.push(Series::new("test", test, Style::Dashed, 1));
    }
    Ok(vec![Panel {
        title: "Reconstruction loss".into(),
        xlabel: "epoch".into(),
        ylabel: "relative error".into(),
        log_y: true,
        legend: true,
        series,
        ..Panel::default()
    }])
}

fn by_element(t: &Table) -> Result<BTreeMap<String, Vec<usize>>> {
    let c = t.col("element")?;
    let mut out: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, row) in t.rows.iter().enumerate() {
        out.entry(row[c].clone()).or_default().push(i);
    }
    Ok(out)
}

fn recon_figure(t: &Table) -> Result<Vec<Panel>> {
    let f = t.col("f")?;
    let groups = by_element(t)?;
    let mut amp = Vec::new();
    let mut phase = Vec::new();
    for (label, rows) in &groups {
        let pts = |c: usize| -> Result<Vec<(f64, f64)>> {
            rows.iter()
                .map(|&r| Ok((t.num(r, f)?, t.num(r, c)?)))
                .collect()
        };
        amp.push(Panel {
            title: format!("|{label}|"),
            xlabel: "f (Hz)".into(),
            ylabel: "amplitude (S)".into(),
            log_x: true,
            log_y: true,
            legend: true,
            series: vec![
                Series::new("original", pts(t.col("amp")?)?, Style::Line, 0),
                Series::new("reconstructed", pts(t.col("amp_recon")?)?, Style::Dashed, 1),
            ],
        });
        phase.push(Panel {
            title: format!("angle {label}"),
            xlabel: "f (Hz)".into(),
            ylabel: "phase (deg)".into(),
            log_x: true,
            series: vec![
                Series::new("original", pts(t.col("phase_deg")?)?, Style::Line, 0),
                Series::new(
                    "reconstructed",
                    pts(t.col("phase_recon_deg")?)?,
                    Style::Dashed,
                    1,
                ),
            ],
            ..Panel::default()
        });
    }
    amp.extend(phase);
    Ok(amp)
}

fn tsne_figure(t: &Table) -> Result<Vec<Panel>> {
    let (x, y) = (t.col("x")?, t.col("y")?);
    let series = by_element(t)?
        .into_iter()
        .enumerate()
        .map(|(k, (label, rows))| {
            let pts = rows
                .iter()
                .map(|&r| Ok((t.num(r, x)?, t.num(r, y)?)))
                .collect::<Result<Vec<_>>>()?;
            Ok(Series::new(label, pts, Style::Dots, k))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(vec![Panel {
        title: "t-SNE of latent groups".into(),
        xlabel: "dim 1".into(),
        ylabel: "dim 2".into(),
        legend: true,
        series,
        ..Panel::default()
    }])
}

fn latent_figure(t: &Table) -> Result<Vec<Panel>> {
    let hcols: Vec<usize> = t
        .headers
        .iter()
        .enumerate()
        .filter(|(_, h)| {
            h.len() > 1 && h.starts_with('h') && h[1..].bytes().all(|b| b.is_ascii_digit())
        })
        .map(|(i, _)| i)
        .collect();
    if hcols.is_empty() {
        return Err(invalid!("{} has no h0.. latent columns", t.path.display()));
    }
    let vector = |r: usize| -> Result<Vec<(f64, f64)>> {
        hcols
            .iter()
            .enumerate()
            .map(|(k, &c)| Ok((k as f64, t.num(r, c)?)))
            .collect()
    };

    if !(t.has("turbine_id") && t.has("timestamp_ms")) {
        let mut series = Vec::new();
        for r in 0..t.rows.len() {
            let mut s = Series::new("", vector(r)?, Style::Line, r);
            s.opacity = 0.5;
            series.push(s);
        }
        return Ok(vec![Panel {
            title: "Latent vectors".into(),
            xlabel: "latent dimension".into(),
            ylabel: "value".into(),
            series,
            ..Panel::default()
        }]);
    }

    let (ts, id) = (t.col("timestamp_ms")?, t.col("turbine_id")?);
    let mut turbines: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for r in 0..t.rows.len() {
        turbines.entry(t.num(r, id)? as u64).or_default().push(r);
    }
    let mut panels = Vec::new();
    for (name, label) in [
        ("p_active", "P (pu)"),
        ("power_factor", "cos phi"),
        ("u_pcc", "U_pcc (pu)"),
    ] {
        let c = t.col(name)?;
        let series = turbines
            .iter()
            .map(|(k, rows)| {
                let pts = rows
                    .iter()
                    .map(|&r| Ok((t.num(r, ts)? / 1000.0, t.num(r, c)?)))
                    .collect::<Result<Vec<_>>>()?;
                Ok(Series::new(
                    format!("WT{}", k + 1),
                    pts,
                    Style::Line,
                    *k as usize,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        panels.push(Panel {
            title: label.into(),
            xlabel: "t (s)".into(),
            ylabel: label.into(),
            legend: name == "p_active",
            series,
            ..Panel::default()
        });
    }
    for (k, rows) in &turbines {
        let mut series = Vec::new();
        for &r in rows {
            let mut s = Series::new("", vector(r)?, Style::Line, *k as usize);
            s.opacity = 0.45;
            series.push(s);
        }
        panels.push(Panel {
            title: format!("WT{} latent", k + 1),
            xlabel: "latent dimension".into(),
            ylabel: "value".into(),
            series,
            ..Panel::default()
        });
    }
    Ok(panels)
}

pub fn plot(mut a: PlotArgs, root: &Path) -> Result<()> {
    let mut m = RunManifest::begin("plot");
    let table = Table::read(&a.input)?;
    m.input(&a.input);
    if table.rows.is_empty() {
        return Err(invalid!("{} has no rows", a.input.display()));
    }
    let dir = out_dir(&a.out, root, "plot")?;
    a.out = Some(dir.clone());
    m.flags(&a)?;

    let (panels, cols, default_title) = match a.kind {
        PlotKind::Loss => (loss_figure(&table)?, 1, "Training loss"),
        PlotKind::Recon => (
            recon_figure(&table)?,
            4,
            "Original and reconstructed curves",
        ),
        PlotKind::Tsne => (tsne_figure(&table)?, 1, "Latent group embedding"),
        PlotKind::Latent => {
            let p = latent_figure(&table)?;
            let cols = if p.len() > 1 { 4 } else { 1 };
            (p, cols, "Transmitted latent vectors")
        }
    };
    let title = a.title.clone().unwrap_or_else(|| default_title.to_string());
    let name = format!(
        "{}.svg",
        a.kind
            .to_possible_value()
            .expect("no skipped variants")
            .get_name()
    );
    let path = dir.join(name);
    std::fs::write(&path, render(&title, &panels, cols))
        .with_context(|| format!("writing {}", path.display()))?;
    m.output(&path);
    println!("wrote {}", path.display());
    m.finish(&dir)?;
    Ok(())
}
