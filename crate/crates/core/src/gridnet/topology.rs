//! Collection-network description and its text format.
//!
//! ```text
//! nodes 5
//! omega0 314.159265
//! branch 0 4 transformer_rl R=0.0015 L=6e-5 ratio=1
//! branch GND 4 grid_thevenin R=0.001 L=3e-5
//! ```
//!
//! `#` starts a comment. `R` and `L` are required on every branch; `C` only
//! on `shunt_c`.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Terminal {
    Ground,
    Node(usize),
}

impl fmt::Display for Terminal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Terminal::Ground => f.write_str("GND"),
            Terminal::Node(i) => write!(f, "{i}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BranchKind {
    SeriesRl,
    ShuntC,
    TransformerRl,
    GridThevenin,
}

impl BranchKind {
    pub fn name(self) -> &'static str {
        match self {
            BranchKind::SeriesRl => "series_rl",
            BranchKind::ShuntC => "shunt_c",
            BranchKind::TransformerRl => "transformer_rl",
            BranchKind::GridThevenin => "grid_thevenin",
        }
    }
}

impl FromStr for BranchKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "series_rl" => Ok(BranchKind::SeriesRl),
            "shunt_c" => Ok(BranchKind::ShuntC),
            "transformer_rl" => Ok(BranchKind::TransformerRl),
            "grid_thevenin" => Ok(BranchKind::GridThevenin),
            other => Err(format!("unknown branch kind {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Branch {
    pub from: Terminal,
    pub to: Terminal,
    pub kind: BranchKind,
    pub r: f64,
    pub l: f64,
    pub c: f64,
    /// Turns ratio; branch admittance is scaled by its square.
    pub ratio: f64,
}

impl Branch {
    pub fn series_rl(from: Terminal, to: Terminal, r: f64, l: f64) -> Self {
        Self {
            from,
            to,
            kind: BranchKind::SeriesRl,
            r,
            l,
            c: 0.0,
            ratio: 1.0,
        }
    }

    pub fn shunt_c(node: usize, c: f64) -> Self {
        Self {
            from: Terminal::Ground,
            to: Terminal::Node(node),
            kind: BranchKind::ShuntC,
            r: 0.0,
            l: 0.0,
            c,
            ratio: 1.0,
        }
    }

    pub fn transformer_rl(from: usize, to: usize, r: f64, l: f64, ratio: f64) -> Self {
        Self {
            kind: BranchKind::TransformerRl,
            ratio,
            ..Self::series_rl(Terminal::Node(from), Terminal::Node(to), r, l)
        }
    }

    pub fn grid_thevenin(node: usize, r: f64, l: f64) -> Self {
        Self {
            kind: BranchKind::GridThevenin,
            ..Self::series_rl(Terminal::Ground, Terminal::Node(node), r, l)
        }
    }

    fn validate(&self, m: usize) -> std::result::Result<(), String> {
        for t in [self.from, self.to] {
            if let Terminal::Node(i) = t {
                if i >= m {
                    return Err(format!("node {i} out of range for {m} nodes"));
                }
            }
        }
        if self.from == self.to {
            return Err(format!("branch connects {} to itself", self.from));
        }
        let finite_nonneg = |v: f64| v.is_finite() && v >= 0.0;
        if !(finite_nonneg(self.r) && finite_nonneg(self.l) && finite_nonneg(self.c)) {
            return Err("R, L and C must be finite and non-negative".into());
        }
        if !(self.ratio.is_finite() && self.ratio > 0.0) {
            return Err(format!("turns ratio must be positive, got {}", self.ratio));
        }
        if self.kind == BranchKind::GridThevenin
            && self.from != Terminal::Ground
            && self.to != Terminal::Ground
        {
            return Err("grid_thevenin needs a GND terminal".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub node_count: usize,
    pub omega0: f64,
    pub branches: Vec<Branch>,
}

pub const DEFAULT_OMEGA0: f64 = 2.0 * std::f64::consts::PI * 50.0;

impl Topology {
    pub fn new(node_count: usize, omega0: f64, branches: Vec<Branch>) -> Result<Self> {
        let t = Self {
            node_count,
            omega0,
            branches,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.node_count == 0 {
            return Err(Error::Topology {
                line: 0,
                msg: "topology needs at least one node".into(),
            });
        }
        if !(self.omega0.is_finite() && self.omega0 > 0.0) {
            return Err(Error::Topology {
                line: 0,
                msg: format!("omega0 must be positive, got {}", self.omega0),
            });
        }
        for (k, b) in self.branches.iter().enumerate() {
            b.validate(self.node_count).map_err(|msg| Error::Topology {
                line: 0,
                msg: format!("branch {k}: {msg}"),
            })?;
        }
        Ok(())
    }

    /// Whether every node reaches GND through some branch.
    pub fn is_grounded(&self) -> bool {
        let m = self.node_count;
        let mut reached = vec![false; m];
        let mut stack: Vec<usize> = Vec::new();
        for b in &self.branches {
            match (b.from, b.to) {
                (Terminal::Ground, Terminal::Node(i)) | (Terminal::Node(i), Terminal::Ground)
                    if !reached[i] => {
                        reached[i] = true;
                        stack.push(i);
                    }
                _ => {}
            }
        }
        while let Some(i) = stack.pop() {
            for b in &self.branches {
                let other = match (b.from, b.to) {
                    (Terminal::Node(a), Terminal::Node(c)) if a == i => c,
                    (Terminal::Node(a), Terminal::Node(c)) if c == i => a,
                    _ => continue,
                };
                if !reached[other] {
                    reached[other] = true;
                    stack.push(other);
                }
            }
        }
        reached.iter().all(|&r| r)
    }

    /// Four turbines (nodes 0–3) behind step-up transformers on a common
    /// collector bus (node 4), cable charging at the bus and a grid
    /// equivalent. Impedances are referred to the 690 V side.
    pub fn default_farm() -> Self {
        let bus = 4;
        let mut branches: Vec<Branch> = (0..4)
            .map(|i| Branch::transformer_rl(i, bus, 1.5e-3 + 2e-4 * i as f64, 6e-5, 1.0))
            .collect();
        branches.push(Branch::shunt_c(bus, 1e-4));
        branches.push(Branch::grid_thevenin(bus, 1e-3, 3e-5));
        Self::new(5, DEFAULT_OMEGA0, branches).expect("default farm is valid")
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("nodes {}\nomega0 {}\n", self.node_count, self.omega0);
        for b in &self.branches {
            s += &format!(
                "branch {} {} {} R={} L={}",
                b.from,
                b.to,
                b.kind.name(),
                b.r,
                b.l
            );
            if b.kind == BranchKind::ShuntC || b.c != 0.0 {
                s += &format!(" C={}", b.c);
            }
            if b.ratio != 1.0 {
                s += &format!(" ratio={}", b.ratio);
            }
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut nodes = None;
        let mut omega0 = DEFAULT_OMEGA0;
        let mut branches = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let err = |msg: String| Error::Topology { line, msg };
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let mut words = content.split_whitespace();
            match words.next().unwrap() {
                "nodes" => {
                    let v = words
                        .next()
                        .ok_or_else(|| err("missing node count".into()))?;
                    nodes = Some(
                        v.parse::<usize>()
                            .map_err(|e| err(format!("node count: {e}")))?,
                    );
                }
                "omega0" => {
                    let v = words.next().ok_or_else(|| err("missing omega0".into()))?;
                    omega0 = v.parse().map_err(|e| err(format!("omega0: {e}")))?;
                }
                "branch" => {
                    let m = nodes.ok_or_else(|| err("branch before `nodes`".into()))?;
                    let b = parse_branch(&mut words).map_err(err)?;
                    b.validate(m).map_err(err)?;
                    branches.push(b);
                }
                other => return Err(err(format!("unknown record {other:?}"))),
            }
        }
        let node_count = nodes.ok_or(Error::Topology {
            line: 0,
            msg: "missing `nodes` record".into(),
        })?;
        Topology::new(node_count, omega0, branches)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(Error::file(path))?;
        Self::parse(&text)
    }
}

fn parse_terminal(s: &str) -> std::result::Result<Terminal, String> {
    if s.eq_ignore_ascii_case("gnd") {
        Ok(Terminal::Ground)
    } else {
        s.parse()
            .map(Terminal::Node)
            .map_err(|_| format!("bad terminal {s:?}"))
    }
}

fn parse_branch<'a>(
    words: &mut impl Iterator<Item = &'a str>,
) -> std::result::Result<Branch, String> {
    let from = parse_terminal(words.next().ok_or("missing from terminal")?)?;
    let to = parse_terminal(words.next().ok_or("missing to terminal")?)?;
    let kind: BranchKind = words.next().ok_or("missing branch kind")?.parse()?;
    let (mut r, mut l, mut c, mut ratio) = (None, None, None, None);
    for kv in words {
        let (key, value) = kv
            .split_once('=')
            .ok_or_else(|| format!("expected key=value, got {kv:?}"))?;
        let v: f64 = value.parse().map_err(|_| format!("bad number in {kv:?}"))?;
        let slot = match key {
            "R" => &mut r,
            "L" => &mut l,
            "C" => &mut c,
            "ratio" => &mut ratio,
            _ => return Err(format!("unknown parameter {key:?}")),
        };
        if slot.replace(v).is_some() {
            return Err(format!("duplicate parameter {key:?}"));
        }
    }
    let c = match (kind, c) {
        (BranchKind::ShuntC, None) => return Err("shunt_c needs C=".into()),
        (_, c) => c.unwrap_or(0.0),
    };
    let (r, l) = match kind {
        BranchKind::ShuntC => (r.unwrap_or(0.0), l.unwrap_or(0.0)),
        _ => (r.ok_or("missing R=")?, l.ok_or("missing L=")?),
    };
    Ok(Branch {
        from,
        to,
        kind,
        r,
        l,
        c,
        ratio: ratio.unwrap_or(1.0),
    })
}
