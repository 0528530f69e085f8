//! Minimal static SVG charts: a grid of panels, each with axes, ticks and
//! any number of line or dot series.

use std::fmt::Write;

const PANEL_W: f64 = 440.0;
const PANEL_H: f64 = 300.0;
const MARGIN_L: f64 = 64.0;
const MARGIN_R: f64 = 16.0;
const MARGIN_T: f64 = 28.0;
const MARGIN_B: f64 = 44.0;
const TITLE_H: f64 = 34.0;

pub const PALETTE: [&str; 10] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2",
    "#7f7f7f", "#bcbd22",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Style {
    Line,
    Dashed,
    Dots,
}

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub style: Style,
    pub color: usize,
    pub opacity: f64,
}

impl Series {
    pub fn new(
        label: impl Into<String>,
        points: Vec<(f64, f64)>,
        style: Style,
        color: usize,
    ) -> Self {
        Self {
            label: label.into(),
            points,
            style,
            color,
            opacity: 1.0,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Panel {
    pub title: String,
    pub xlabel: String,
    pub ylabel: String,
    pub log_x: bool,
    pub log_y: bool,
    pub legend: bool,
    pub series: Vec<Series>,
}

struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Axis {
    fn fit(values: impl Iterator<Item = f64>, log: bool) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values {
            let v = if log { v.log10() } else { v };
            if v.is_finite() {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        if !lo.is_finite() {
            (lo, hi) = (0.0, 1.0);
        }
        if hi - lo < 1e-12 {
            let pad = if lo.abs() > 1e-12 {
                lo.abs() * 0.05
            } else {
                0.5
            };
            lo -= pad;
            hi += pad;
        } else if !log {
            let pad = 0.04 * (hi - lo);
            lo -= pad;
            hi += pad;
        }
        Self { lo, hi, log }
    }

    fn frac(&self, v: f64) -> Option<f64> {
        let v = if self.log { v.log10() } else { v };
        v.is_finite().then(|| (v - self.lo) / (self.hi - self.lo))
    }

    /// Tick positions in data units.
    fn ticks(&self) -> Vec<f64> {
        if self.log {
            let (a, b) = (self.lo.ceil() as i32, self.hi.floor() as i32);
            if self.hi - self.lo < 2.0 {
                let (lo, hi) = (10f64.powf(self.lo), 10f64.powf(self.hi));
                return (self.lo.floor() as i32..=self.hi.ceil() as i32)
                    .flat_map(|e| [1.0, 2.0, 5.0].map(|m| m * 10f64.powi(e)))
                    .filter(|v| (lo * (1.0 - 1e-9)..=hi * (1.0 + 1e-9)).contains(v))
                    .collect();
            }
            if b >= a {
                let step = ((b - a) / 6 + 1) as usize;
                return (a..=b).step_by(step).map(|e| 10f64.powi(e)).collect();
            }
            return vec![10f64.powf(self.lo), 10f64.powf(self.hi)];
        }
        let step = nice_step((self.hi - self.lo) / 5.0);
        let first = (self.lo / step).ceil() as i64;
        let last = (self.hi / step + 1e-9).floor() as i64;
        (first..=last).map(|k| k as f64 * step).collect()
    }
}

fn nice_step(raw: f64) -> f64 {
    let e = raw.log10().floor();
    let base = 10f64.powf(e);
    let m = raw / base;
    let nice = if m <= 1.0 {
        1.0
    } else if m <= 2.0 {
        2.0
    } else if m <= 5.0 {
        5.0
    } else {
        10.0
    };
    nice * base
}

fn tick_label(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-3..1e5).contains(&a) {
        format!("{v:.0e}")
    } else {
        let s = format!("{v:.4}");
        let s = s.trim_end_matches('0').trim_end_matches('.');
        if s == "-0" {
            "0".into()
        } else {
            s.to_string()
        }
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn render_panel(out: &mut String, p: &Panel, ox: f64, oy: f64) {
    let all = || p.series.iter().flat_map(|s| s.points.iter());
    let keep = |v: f64, log: bool| v.is_finite() && (!log || v > 0.0);
    let xa = Axis::fit(all().map(|q| q.0).filter(|&v| keep(v, p.log_x)), p.log_x);
    let ya = Axis::fit(all().map(|q| q.1).filter(|&v| keep(v, p.log_y)), p.log_y);
    let (x0, y0) = (ox + MARGIN_L, oy + MARGIN_T);
    let (w, h) = (PANEL_W - MARGIN_L - MARGIN_R, PANEL_H - MARGIN_T - MARGIN_B);
    let px = |v: f64| xa.frac(v).map(|f| x0 + f * w);
    let py = |v: f64| ya.frac(v).map(|f| y0 + h - f * h);

    let _ = writeln!(
        out,
        r##"<rect x="{x0:.1}" y="{y0:.1}" width="{w:.1}" height="{h:.1}" fill="none" stroke="#444"/>"##
    );
    for t in xa.ticks() {
        if let Some(x) = px(t) {
            let _ = writeln!(
                out,
                r##"<line x1="{x:.1}" y1="{y0:.1}" x2="{x:.1}" y2="{:.1}" stroke="#e4e4e4"/><text x="{x:.1}" y="{:.1}" text-anchor="middle">{}</text>"##,
                y0 + h,
                y0 + h + 15.0,
                tick_label(t)
            );
        }
    }
    for t in ya.ticks() {
        if let Some(y) = py(t) {
            let _ = writeln!(
                out,
                r##"<line x1="{x0:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#e4e4e4"/><text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"##,
                x0 + w,
                x0 - 5.0,
                y + 4.0,
                tick_label(t)
            );
        }
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-weight="bold">{}</text>"#,
        x0 + w / 2.0,
        oy + 18.0,
        esc(&p.title)
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        x0 + w / 2.0,
        oy + PANEL_H - 8.0,
        esc(&p.xlabel)
    );
    let (lx, ly) = (ox + 14.0, y0 + h / 2.0);
    let _ = writeln!(
        out,
        r#"<text x="{lx:.1}" y="{ly:.1}" text-anchor="middle" transform="rotate(-90 {lx:.1} {ly:.1})">{}</text>"#,
        esc(&p.ylabel)
    );

    for s in &p.series {
        let color = PALETTE[s.color % PALETTE.len()];
        let pts: Vec<(f64, f64)> = s
            .points
            .iter()
            .filter(|q| keep(q.0, p.log_x) && keep(q.1, p.log_y))
            .filter_map(|&(x, y)| Some((px(x)?, py(y)?)))
            .collect();
        match s.style {
            Style::Dots => {
                for (x, y) in pts {
                    let _ = writeln!(
                        out,
                        r#"<circle cx="{x:.1}" cy="{y:.1}" r="2.2" fill="{color}" fill-opacity="{:.2}"/>"#,
                        s.opacity
                    );
                }
            }
            Style::Line | Style::Dashed => {
                if pts.is_empty() {
                    continue;
                }
                let mut d = String::new();
                for (i, (x, y)) in pts.iter().enumerate() {
                    let _ = write!(d, "{}{x:.1},{y:.1}", if i == 0 { "M" } else { " L" });
                }
                let dash = if s.style == Style::Dashed {
                    r#" stroke-dasharray="5,3""#
                } else {
                    ""
                };
                let _ = writeln!(
                    out,
                    r#"<path d="{d}" fill="none" stroke="{color}" stroke-width="1.4" stroke-opacity="{:.2}"{dash}/>"#,
                    s.opacity
                );
            }
        }
    }

    if p.legend {
        let mut seen: Vec<(&str, usize, Style)> = Vec::new();
        for s in &p.series {
            if !s.label.is_empty() && !seen.iter().any(|(l, _, _)| *l == s.label) {
                seen.push((&s.label, s.color, s.style));
            }
        }
        for (i, (label, color, style)) in seen.iter().enumerate() {
            let y = y0 + 12.0 + 14.0 * i as f64;
            let x = x0 + w - 100.0;
            let c = PALETTE[color % PALETTE.len()];
            let mark = match style {
                Style::Dots => format!(
                    r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{c}"/>"#,
                    x + 8.0,
                    y - 4.0
                ),
                Style::Line | Style::Dashed => format!(
                    r#"<line x1="{x:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="{c}" stroke-width="2"{}/>"#,
                    y - 4.0,
                    x + 16.0,
                    y - 4.0,
                    if *style == Style::Dashed {
                        r#" stroke-dasharray="4,2""#
                    } else {
                        ""
                    }
                ),
            };
            let _ = writeln!(
                out,
                r#"{mark}<text x="{:.1}" y="{y:.1}">{}</text>"#,
                x + 22.0,
                esc(label)
            );
        }
    }
}

/// Lays `panels` out row-major, `cols` per row, under a figure title.
pub fn render(title: &str, panels: &[Panel], cols: usize) -> String {
    let cols = cols.clamp(1, panels.len().max(1));
    let rows = panels.len().div_ceil(cols).max(1);
    let (width, height) = (PANEL_W * cols as f64, TITLE_H + PANEL_H * rows as f64);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="15" font-weight="bold">{}</text>"#,
        width / 2.0,
        esc(title)
    );
    for (i, p) in panels.iter().enumerate() {
        let (r, c) = (i / cols, i % cols);
        render_panel(
            &mut out,
            p,
            c as f64 * PANEL_W,
            TITLE_H + r as f64 * PANEL_H,
        );
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_ticks_are_round() {
        let a = Axis {
            lo: 0.0,
            hi: 1.0,
            log: false,
        };
        let labels: Vec<String> = a.ticks().into_iter().map(tick_label).collect();
        assert_eq!(labels, ["0", "0.2", "0.4", "0.6", "0.8", "1"]);
        assert_eq!(nice_step(0.37), 0.5);
        assert_eq!(tick_label(0.2), "0.2");
        assert_eq!(tick_label(1e-6), "1e-6");
    }

    #[test]
    fn log_axis_skips_nonpositive() {
        let p = Panel {
            log_y: true,
            series: vec![Series::new(
                "a",
                vec![(0.0, 0.0), (1.0, 10.0), (2.0, 1000.0)],
                Style::Line,
                0,
            )],
            ..Panel::default()
        };
        let svg = render("t", &[p], 1);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches(" L").count(), 1);
    }
}
