//! Compression of wind-turbine dq admittance curves into compact latent
//! vectors, and assembly of the farm impedance-network model from the
//! curves reconstructed on the farm side.
//!
//! The crate is organised along the data path:
//!
//! - [`spectra`]: frequency grids, the synthetic VSC admittance generator
//!   and the `IMPS` dataset file format.
//! - [`tensorize`]: curve ↔ flat real vector layout and global z-score.
//! - [`autonet`]: the MLP autoencoder, its loss, gradients, Adam and the
//!   training loop with `AECK` checkpoints.
//! - [`latentmap`]: semantic latent groups, exact t-SNE and silhouette.
//! - [`gridnet`]: dq branch blocks, incidence-matrix network admittance and
//!   the nodal model `Y_node = Y_wt + Y_net`.
//! - [`farmlink`]: `IENC` latent frames, turbine agents, the farm
//!   aggregator and the end-to-end simulation over in-process or TCP links.

pub mod autonet;
pub mod error;
pub mod farmlink;
pub mod gridnet;
pub mod latentmap;
pub mod spectra;
pub mod tensorize;

mod bytes;

pub use error::{Error, Result};
