use std::fmt;

use crate::error::{Error, Result};

/// Number of semantic latent groups (one per dq matrix element).
pub const GROUPS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArchMode {
    /// One dense encoder and decoder over the whole flat vector.
    Monolithic,
    /// Four independent stacks, one per matrix element, whose latents are
    /// concatenated in `(Y11, Y12, Y21, Y22)` order.
    Grouped,
}

impl ArchMode {
    pub fn as_byte(self) -> u8 {
        match self {
            ArchMode::Monolithic => 0,
            ArchMode::Grouped => 1,
        }
    }

    pub fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(ArchMode::Monolithic),
            1 => Some(ArchMode::Grouped),
            _ => None,
        }
    }
}

impl fmt::Display for ArchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ArchMode::Monolithic => "monolithic",
            ArchMode::Grouped => "grouped",
        })
    }
}

impl std::str::FromStr for ArchMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "monolithic" => Ok(ArchMode::Monolithic),
            "grouped" => Ok(ArchMode::Grouped),
            _ => Err(Error::InvalidParam(format!(
                "unknown architecture mode {s:?}"
            ))),
        }
    }
}

/// Layer widths of the autoencoder. The decoder mirrors the encoder.
///
/// All widths are totals; in grouped mode each of the four stacks gets a
/// quarter of every width.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    pub mode: ArchMode,
    pub input_dim: usize,
    pub encoder_dims: Vec<usize>,
    pub latent_dim: usize,
}

impl Architecture {
    pub fn new(
        mode: ArchMode,
        input_dim: usize,
        encoder_dims: Vec<usize>,
        latent_dim: usize,
    ) -> Result<Self> {
        let arch = Self {
            mode,
            input_dim,
            encoder_dims,
            latent_dim,
        };
        arch.validate()?;
        Ok(arch)
    }

    /// 20000 → 2048 → 512 → 64.
    pub fn paper(mode: ArchMode) -> Self {
        Self {
            mode,
            input_dim: 20_000,
            encoder_dims: vec![2048, 512],
            latent_dim: 64,
        }
    }

    /// 4000 → 512 → 128 → 32, sized for CPU runs on a 500-point grid.
    pub fn reduced(mode: ArchMode) -> Self {
        Self {
            mode,
            input_dim: 4000,
            encoder_dims: vec![512, 128],
            latent_dim: 32,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParam(msg));
        if self.input_dim == 0 || !self.input_dim.is_multiple_of(8) {
            return bad(format!(
                "input_dim must be a positive multiple of 8, got {}",
                self.input_dim
            ));
        }
        if self.latent_dim == 0 || self.encoder_dims.contains(&0) {
            return bad("layer widths must be positive".into());
        }
        if self.mode == ArchMode::Grouped {
            if !self.latent_dim.is_multiple_of(GROUPS) {
                return bad(format!(
                    "grouped mode needs latent_dim divisible by 4, got {}",
                    self.latent_dim
                ));
            }
            if let Some(d) = self.encoder_dims.iter().find(|d| *d % GROUPS != 0) {
                return bad(format!(
                    "grouped mode needs hidden widths divisible by 4, got {d}"
                ));
            }
        }
        Ok(())
    }

    pub fn groups(&self) -> usize {
        match self.mode {
            ArchMode::Monolithic => 1,
            ArchMode::Grouped => GROUPS,
        }
    }

    /// `[input, hidden…, latent]` totals.
    pub fn chain(&self) -> Vec<usize> {
        let mut c = Vec::with_capacity(self.encoder_dims.len() + 2);
        c.push(self.input_dim);
        c.extend_from_slice(&self.encoder_dims);
        c.push(self.latent_dim);
        c
    }

    /// Encoder widths of a single stack.
    pub fn stack_chain(&self) -> Vec<usize> {
        self.chain()
            .into_iter()
            .map(|d| d / self.groups())
            .collect()
    }

    /// Encoder (and decoder) layer count.
    pub fn depth(&self) -> usize {
        self.encoder_dims.len() + 1
    }

    pub fn parameter_count(&self) -> usize {
        let c = self.stack_chain();
        let per_stack: usize = c.windows(2).map(|w| w[0] * w[1] + w[1]).sum::<usize>()
            + c.windows(2).map(|w| w[0] * w[1] + w[0]).sum::<usize>();
        per_stack * self.groups()
    }

    /// Input values per latent value.
    pub fn compression_ratio(&self) -> f64 {
        self.input_dim as f64 / self.latent_dim as f64
    }

    /// Number of frequency points implied by the input width.
    pub fn grid_points(&self) -> usize {
        self.input_dim / 8
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let chain = self
            .chain()
            .iter()
            .map(|d| d.to_string())
            .collect::<Vec<_>>()
            .join("→");
        write!(f, "{} {chain}", self.mode)
    }
}
