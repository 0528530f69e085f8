//! Impedance-domain types, the synthetic VSC dq-admittance generator and
//! the `IMPS` dataset file.
//!
//! Each curve is a 2×2 complex admittance matrix sampled on a uniform
//! frequency grid. Element order is always `(Y11, Y12, Y21, Y22)`, i.e.
//! `(dd, dq, qd, qq)`.

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use num_complex::Complex64;
use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bytes::{put_f64s, LeReader};
use crate::error::{Error, Result};

/// Uniform frequency grid `f_t = f_start + t·f_step`, `t ∈ [0, count)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyGrid {
    f_start: f64,
    f_step: f64,
    count: usize,
}

impl FrequencyGrid {
    pub fn new(f_start: f64, f_step: f64, count: usize) -> Result<Self> {
        if !(f_start.is_finite() && f_start > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "f_start must be > 0, got {f_start}"
            )));
        }
        if !(f_step.is_finite() && f_step > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "f_step must be > 0, got {f_step}"
            )));
        }
        if count < 2 {
            return Err(Error::InvalidGrid(format!(
                "count must be >= 2, got {count}"
            )));
        }
        Ok(Self {
            f_start,
            f_step,
            count,
        })
    }

    /// 1..=count Hz in 1 Hz steps.
    pub fn integer_hz(count: usize) -> Result<Self> {
        Self::new(1.0, 1.0, count)
    }

    pub fn f_start(&self) -> f64 {
        self.f_start
    }

    pub fn f_step(&self) -> f64 {
        self.f_step
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn freq(&self, t: usize) -> f64 {
        self.f_start + t as f64 * self.f_step
    }

    pub fn freqs(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        (0..self.count).map(|t| self.freq(t))
    }
}

/// Free function form of [`FrequencyGrid::new`].
pub fn make_frequency_grid(f_start: f64, f_step: f64, count: usize) -> Result<FrequencyGrid> {
    FrequencyGrid::new(f_start, f_step, count)
}

/// One element of the 2×2 dq matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Element {
    Y11,
    Y12,
    Y21,
    Y22,
}

impl Element {
    pub const ALL: [Element; 4] = [Element::Y11, Element::Y12, Element::Y21, Element::Y22];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn label(self) -> &'static str {
        match self {
            Element::Y11 => "Y11",
            Element::Y12 => "Y12",
            Element::Y21 => "Y21",
            Element::Y22 => "Y22",
        }
    }
}

impl fmt::Display for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Element {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().trim_start_matches(['Y', 'y']) {
            "11" => Ok(Element::Y11),
            "12" => Ok(Element::Y12),
            "21" => Ok(Element::Y21),
            "22" => Ok(Element::Y22),
            _ => Err(Error::InvalidParam(format!("unknown matrix element {s:?}"))),
        }
    }
}

/// 2×2 complex matrix in `(Y11, Y12, Y21, Y22)` order.
pub type DqMatrix = [Complex64; 4];

fn inv2(m: &DqMatrix) -> Option<DqMatrix> {
    let det = m[0] * m[3] - m[1] * m[2];
    let scale = m.iter().map(|z| z.norm_sqr()).fold(0.0, f64::max);
    if !det.is_finite() || det.norm() <= 1e-14 * scale {
        return None;
    }
    Some([m[3] / det, -m[1] / det, -m[2] / det, m[0] / det])
}

/// dq admittance sampled on a [`FrequencyGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct DqAdmittanceCurve {
    grid: FrequencyGrid,
    values: Vec<DqMatrix>,
}

impl DqAdmittanceCurve {
    pub fn new(grid: FrequencyGrid, values: Vec<DqMatrix>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Shape {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if let Some(t) = values.iter().position(|m| m.iter().any(|z| !z.is_finite())) {
            return Err(Error::Generation {
                freq_hz: grid.freq(t),
                reason: "non-finite admittance entry".into(),
            });
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: FrequencyGrid) -> Self {
        Self {
            grid,
            values: vec![[Complex64::new(0.0, 0.0); 4]; grid.len()],
        }
    }

    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    pub fn values(&self) -> &[DqMatrix] {
        &self.values
    }

    pub fn at(&self, t: usize) -> &DqMatrix {
        &self.values[t]
    }

    pub fn element(&self, t: usize, e: Element) -> Complex64 {
        self.values[t][e.index()]
    }

    /// Elementwise scaling, handy for linearity checks.
    pub fn scaled(&self, k: f64) -> Self {
        Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .map(|m| [m[0] * k, m[1] * k, m[2] * k, m[3] * k])
                .collect(),
        }
    }

    /// CSV export: one row per frequency per element.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "f,element,real,imag")?;
        for (t, m) in self.values.iter().enumerate() {
            let f = self.grid.freq(t);
            for e in Element::ALL {
                let z = m[e.index()];
                writeln!(w, "{f},{},{},{}", e.label(), z.re, z.im)?;
            }
        }
        Ok(())
    }
}

/// Magnitude and phase (degrees) of one element over the grid.
pub fn amplitude_phase(curve: &DqAdmittanceCurve, element: Element) -> Vec<(f64, f64, f64)> {
    curve
        .values
        .iter()
        .enumerate()
        .map(|(t, m)| {
            let z = m[element.index()];
            (curve.grid.freq(t), z.norm(), z.arg().to_degrees())
        })
        .collect()
}

/// Turbine operating point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatingPoint {
    /// Active power in MW.
    pub p_active: f64,
    /// cos φ in (0, 1].
    pub power_factor: f64,
    /// PCC voltage in per unit.
    pub u_pcc: f64,
}

impl OperatingPoint {
    pub fn new(p_active: f64, power_factor: f64, u_pcc: f64) -> Result<Self> {
        let op = Self {
            p_active,
            power_factor,
            u_pcc,
        };
        op.validate()?;
        Ok(op)
    }

    pub fn validate(&self) -> Result<()> {
        if ![self.p_active, self.power_factor, self.u_pcc]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err(Error::InvalidParam("operating point must be finite".into()));
        }
        if !(self.power_factor > 0.0 && self.power_factor <= 1.0) {
            return Err(Error::InvalidParam(format!(
                "power factor must lie in (0, 1], got {}",
                self.power_factor
            )));
        }
        if !(0.8..=1.2).contains(&self.u_pcc) {
            return Err(Error::InvalidParam(format!(
                "u_pcc must lie in [0.8, 1.2] pu, got {}",
                self.u_pcc
            )));
        }
        Ok(())
    }
}

/// Parameters of the simplified grid-following VSC.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VscParams {
    pub filter_r: f64,
    pub filter_l: f64,
    pub kp_cc: f64,
    pub ki_cc: f64,
    pub kp_pll: f64,
    pub ki_pll: f64,
    /// Measurement filter time constant in seconds; 0 disables the filter.
    pub tau_f: f64,
    pub v_base: f64,
    pub s_base: f64,
    pub omega0: f64,
}

impl Default for VscParams {
    fn default() -> Self {
        Self {
            filter_r: 0.003,
            filter_l: 0.1e-3,
            kp_cc: 0.3,
            ki_cc: 60.0,
            kp_pll: 0.4,
            ki_pll: 30.0,
            tau_f: 0.2e-3,
            v_base: 690.0,
            s_base: 2.0e6,
            omega0: 2.0 * PI * 50.0,
        }
    }
}

impl VscParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.filter_r,
            self.filter_l,
            self.kp_cc,
            self.ki_cc,
            self.kp_pll,
            self.ki_pll,
            self.tau_f,
            self.v_base,
            self.s_base,
            self.omega0,
        ];
        if !all.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidParam("VSC parameters must be finite".into()));
        }
        // L = 0 is allowed so the converter can degenerate to a resistor; a
        // singular impedance is still caught per frequency.
        if self.filter_l < 0.0 || self.filter_r < 0.0 || self.tau_f < 0.0 {
            return Err(Error::InvalidParam(
                "filter R, L and tau_f must be >= 0".into(),
            ));
        }
        if [self.kp_cc, self.ki_cc, self.kp_pll, self.ki_pll]
            .iter()
            .any(|g| *g < 0.0)
        {
            return Err(Error::InvalidParam("controller gains must be >= 0".into()));
        }
        if self.v_base <= 0.0 || self.s_base <= 0.0 {
            return Err(Error::InvalidParam("v_base and s_base must be > 0".into()));
        }
        Ok(())
    }
}

/// Small-signal dq impedance `Z(s) + ΔZ(s)` of the VSC at one frequency.
fn vsc_impedance(params: &VscParams, op: &OperatingPoint, f: f64) -> DqMatrix {
    let s = Complex64::new(0.0, 2.0 * PI * f);
    let hc = if params.ki_cc == 0.0 {
        Complex64::new(params.kp_cc, 0.0)
    } else {
        params.kp_cc + params.ki_cc / s
    };
    let filt = 1.0 / (1.0 + s * params.tau_f);

    let vd0 = op.u_pcc * params.v_base;
    let id0 = op.p_active * 1e6 / (1.5 * vd0);
    let iq0 = -id0 * op.power_factor.acos().tan();

    let pll_num = params.kp_pll * s + params.ki_pll;
    let g_pll = if pll_num == Complex64::new(0.0, 0.0) {
        Complex64::new(0.0, 0.0)
    } else {
        pll_num / (s * s + vd0 * pll_num)
    };

    let diag = s * params.filter_l + params.filter_r + hc * filt;
    let x = Complex64::new(params.omega0 * params.filter_l, 0.0);

    // PLL correction acts on the q column only.
    let dz12 = -g_pll * (vd0 + hc * iq0);
    let dz22 = g_pll * hc * id0;

    [diag, -x + dz12, x, diag + dz22]
}

/// Closed-form dq admittance of the simplified VSC over `grid`.
pub fn synth_vsc_admittance(
    params: &VscParams,
    op: &OperatingPoint,
    grid: &FrequencyGrid,
) -> Result<DqAdmittanceCurve> {
    params.validate()?;
    op.validate()?;
    let values = grid
        .freqs()
        .map(|f| {
            let z = vsc_impedance(params, op, f);
            inv2(&z).ok_or_else(|| Error::Generation {
                freq_hz: f,
                reason: "singular Z + ΔZ".into(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    DqAdmittanceCurve::new(*grid, values)
}

/// Closed interval used for drawing one operating-point field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

impl Range {
    pub const fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.min && v <= self.max
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpRanges {
    pub p_active: Range,
    pub power_factor: Range,
    pub u_pcc: Range,
}

impl Default for OpRanges {
    fn default() -> Self {
        Self {
            p_active: Range::new(0.2, 2.0),
            power_factor: Range::new(0.9, 1.0),
            u_pcc: Range::new(0.95, 1.05),
        }
    }
}

impl OpRanges {
    pub fn validate(&self) -> Result<()> {
        for (name, r) in [
            ("p_active", self.p_active),
            ("power_factor", self.power_factor),
            ("u_pcc", self.u_pcc),
        ] {
            if !(r.min.is_finite() && r.max.is_finite() && r.min <= r.max) {
                return Err(Error::InvalidParam(format!(
                    "{name} range [{}, {}] is invalid",
                    r.min, r.max
                )));
            }
        }
        OperatingPoint::new(self.p_active.min, self.power_factor.min, self.u_pcc.min)?;
        OperatingPoint::new(self.p_active.max, self.power_factor.max, self.u_pcc.max)?;
        Ok(())
    }

    pub fn contains(&self, op: &OperatingPoint) -> bool {
        self.p_active.contains(op.p_active)
            && self.power_factor.contains(op.power_factor)
            && self.u_pcc.contains(op.u_pcc)
    }
}

/// A set of curves sharing one grid, with the seed that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub grid: FrequencyGrid,
    pub samples: Vec<(OperatingPoint, DqAdmittanceCurve)>,
    pub seed: u64,
}

impl Dataset {
    pub fn new(
        grid: FrequencyGrid,
        samples: Vec<(OperatingPoint, DqAdmittanceCurve)>,
        seed: u64,
    ) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Degenerate(
                "dataset needs at least one sample".into(),
            ));
        }
        if let Some(i) = samples.iter().position(|(_, c)| *c.grid() != grid) {
            return Err(Error::Sample {
                index: i,
                source: Box::new(Error::InvalidGrid(
                    "curve grid differs from dataset grid".into(),
                )),
            });
        }
        Ok(Self {
            grid,
            samples,
            seed,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn curves(&self) -> impl Iterator<Item = &DqAdmittanceCurve> {
        self.samples.iter().map(|(_, c)| c)
    }

    /// Byte length of the `IMPS` encoding.
    pub fn encoded_len(&self) -> usize {
        imps_file_size(self.grid.len(), self.samples.len())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let t = self.grid.len();
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(IMPS_MAGIC);
        out.push(IMPS_VERSION);
        out.extend_from_slice(&(t as u32).to_le_bytes());
        out.extend_from_slice(&(self.samples.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.grid.f_start.to_le_bytes());
        out.extend_from_slice(&self.grid.f_step.to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        let mut row = Vec::with_capacity(8 * t);
        for (op, curve) in &self.samples {
            put_f64s(&mut out, &[op.p_active, op.power_factor, op.u_pcc]);
            row.clear();
            for m in &curve.values {
                for z in m {
                    row.push(z.re);
                    row.push(z.im);
                }
            }
            put_f64s(&mut out, &row);
        }
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = LeReader::new(buf);
        let magic = r.take(4, "magic")?;
        if magic != IMPS_MAGIC {
            return Err(Error::format(
                0,
                format!("bad magic {magic:?}, expected \"IMPS\""),
            ));
        }
        let version = r.u8("version")?;
        if version != IMPS_VERSION {
            return Err(Error::format(4, format!("unsupported version {version}")));
        }
        let t = r.u32("T")? as usize;
        let n = r.u32("N")? as usize;
        let f_start = r.f64("f_start")?;
        let f_step = r.f64("f_step")?;
        let seed = r.u64("seed")?;
        let grid =
            FrequencyGrid::new(f_start, f_step, t).map_err(|e| Error::format(9, e.to_string()))?;
        if n == 0 {
            return Err(Error::format(13, "dataset has zero samples"));
        }
        let expected = imps_file_size(t, n);
        if buf.len() != expected {
            return Err(Error::format(
                buf.len().min(expected) as u64,
                format!("file is {} bytes, header implies {expected}", buf.len()),
            ));
        }

        let mut samples = Vec::with_capacity(n);
        let mut raw = vec![0.0; 8 * t];
        for index in 0..n {
            let at = r.offset();
            let mut opv = [0.0; 3];
            r.f64_into(&mut opv, "operating point")?;
            let op = OperatingPoint {
                p_active: opv[0],
                power_factor: opv[1],
                u_pcc: opv[2],
            };
            r.f64_into(&mut raw, "curve values")?;
            let values: Vec<DqMatrix> = raw
                .chunks_exact(8)
                .map(|c| {
                    [
                        Complex64::new(c[0], c[1]),
                        Complex64::new(c[2], c[3]),
                        Complex64::new(c[4], c[5]),
                        Complex64::new(c[6], c[7]),
                    ]
                })
                .collect();
            if raw.iter().all(|v| *v == 0.0) {
                return Err(Error::format(
                    at,
                    format!("sample {index} has a zero-norm curve"),
                ));
            }
            let curve = DqAdmittanceCurve::new(grid, values)
                .map_err(|e| Error::format(at, format!("sample {index}: {e}")))?;
            samples.push((op, curve));
        }
        Dataset::new(grid, samples, seed)
    }
}

const IMPS_MAGIC: &[u8; 4] = b"IMPS";
const IMPS_VERSION: u8 = 1;
const IMPS_HEADER_LEN: usize = 4 + 1 + 4 + 4 + 8 + 8 + 8;

/// Size in bytes of an `IMPS` file holding `n` curves of `t` points.
pub fn imps_file_size(t: usize, n: usize) -> usize {
    IMPS_HEADER_LEN + n * (24 + t * 64)
}

/// Draws `n` operating points uniformly from `ranges` and synthesizes one
/// curve per point.
pub fn gen_dataset(
    n: usize,
    seed: u64,
    params: &VscParams,
    ranges: &OpRanges,
    grid: &FrequencyGrid,
) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::InvalidParam("n must be >= 1".into()));
    }
    params.validate()?;
    ranges.validate()?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let uniform = |r: Range| Uniform::new_inclusive(r.min, r.max).expect("validated range");
    let (dp, dpf, du) = (
        uniform(ranges.p_active),
        uniform(ranges.power_factor),
        uniform(ranges.u_pcc),
    );
    let ops: Vec<OperatingPoint> = (0..n)
        .map(|_| OperatingPoint {
            p_active: dp.sample(&mut rng),
            power_factor: dpf.sample(&mut rng),
            u_pcc: du.sample(&mut rng),
        })
        .collect();

    let samples = ops
        .into_par_iter()
        .enumerate()
        .map(|(index, op)| {
            synth_vsc_admittance(params, &op, grid)
                .map(|c| (op, c))
                .map_err(|e| Error::Sample {
                    index,
                    source: Box::new(e),
                })
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(*grid, samples, seed)
}

pub fn write_dataset(d: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, d.to_bytes()).map_err(Error::file(path))
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let buf = std::fs::read(path).map_err(Error::file(path))?;
    Dataset::from_bytes(&buf)
}
