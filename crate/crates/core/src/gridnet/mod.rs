//! Impedance-network model of a farm: per-frequency nodal admittance built
//! from dq branch blocks and turbine admittances.
//!
//! Every matrix is `2m × 2m`, node `i` owning rows and columns `2i, 2i+1`.

mod topology;

use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

pub use topology::{Branch, BranchKind, Terminal, Topology, DEFAULT_OMEGA0};

use crate::error::{Error, Result};
use crate::spectra::{DqAdmittanceCurve, DqMatrix, FrequencyGrid};

pub type CMatrix = DMatrix<Complex64>;

/// 2×2 block as `[[a, b], [c, d]]` in row-major order.
pub type Block = [Complex64; 4];

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

fn series_rl_block(r: f64, l: f64, f: f64, omega0: f64) -> Result<Block> {
    let s = Complex64::new(0.0, 2.0 * std::f64::consts::PI * f);
    let a = c(r) + s * l;
    let x = omega0 * l;
    // inverse of [[a, −x], [x, a]]
    let det = a * a + x * x;
    if !(det.norm() > 1e-300) || !det.is_finite() {
        return Err(Error::Assembly(format!(
            "singular series impedance (R={r}, L={l}) at {f} Hz"
        )));
    }
    Ok([a / det, c(x) / det, c(-x) / det, a / det])
}

/// Admittance block of one branch at frequency `f`.
pub fn branch_block(branch: &Branch, f: f64, omega0: f64) -> Result<Block> {
    match branch.kind {
        BranchKind::SeriesRl | BranchKind::GridThevenin => {
            series_rl_block(branch.r, branch.l, f, omega0)
        }
        BranchKind::TransformerRl => {
            let k = branch.ratio * branch.ratio;
            Ok(series_rl_block(branch.r, branch.l, f, omega0)?.map(|v| v * k))
        }
        BranchKind::ShuntC => {
            let s = Complex64::new(0.0, 2.0 * std::f64::consts::PI * f);
            let x = omega0 * branch.c;
            Ok([s * branch.c, c(-x), c(x), s * branch.c])
        }
    }
}

/// Branch-node incidence matrix lifted to 2×2 identity blocks
/// (`2b × 2m`): `+I` at the from node, `−I` at the to node.
pub fn incidence_matrix(topology: &Topology) -> CMatrix {
    let b = topology.branches.len();
    let mut a = CMatrix::zeros(2 * b, 2 * topology.node_count);
    for (k, br) in topology.branches.iter().enumerate() {
        for (t, sign) in [(br.from, 1.0), (br.to, -1.0)] {
            if let Terminal::Node(i) = t {
                a[(2 * k, 2 * i)] = c(sign);
                a[(2 * k + 1, 2 * i + 1)] = c(sign);
            }
        }
    }
    a
}

fn ynet_at(topology: &Topology, a: &CMatrix, f: f64) -> Result<CMatrix> {
    let b = topology.branches.len();
    let mut yb = CMatrix::zeros(2 * b, 2 * b);
    for (k, br) in topology.branches.iter().enumerate() {
        let y = branch_block(br, f, topology.omega0)?;
        yb[(2 * k, 2 * k)] = y[0];
        yb[(2 * k, 2 * k + 1)] = y[1];
        yb[(2 * k + 1, 2 * k)] = y[2];
        yb[(2 * k + 1, 2 * k + 1)] = y[3];
    }
    Ok(a.transpose() * yb * a)
}

/// `Y_net(f) = Aᵀ · blockdiag(Y_b(f)) · A` at every grid frequency.
pub fn assemble_ynet(topology: &Topology, grid: &FrequencyGrid) -> Result<Vec<CMatrix>> {
    topology.validate()?;
    let a = incidence_matrix(topology);
    (0..grid.len())
        .into_par_iter()
        .map(|t| ynet_at(topology, &a, grid.freq(t)))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TurbineBlock {
    pub node_index: usize,
    pub curve: DqAdmittanceCurve,
}

fn put_block(m: &mut CMatrix, i: usize, j: usize, v: &DqMatrix) {
    m[(2 * i, 2 * j)] = v[0];
    m[(2 * i, 2 * j + 1)] = v[1];
    m[(2 * i + 1, 2 * j)] = v[2];
    m[(2 * i + 1, 2 * j + 1)] = v[3];
}

/// Block-diagonal turbine admittance; nodes without a turbine get zeros.
pub fn assemble_ywt(
    turbines: &[TurbineBlock],
    m: usize,
    grid: &FrequencyGrid,
) -> Result<Vec<CMatrix>> {
    let mut seen = vec![false; m];
    for tb in turbines {
        if tb.node_index >= m {
            return Err(Error::Assembly(format!(
                "turbine node {} out of range for {m} nodes",
                tb.node_index
            )));
        }
        if std::mem::replace(&mut seen[tb.node_index], true) {
            return Err(Error::Assembly(format!(
                "duplicate turbine at node {}",
                tb.node_index
            )));
        }
        if tb.curve.grid() != grid {
            return Err(Error::Assembly(format!(
                "turbine at node {} uses a different frequency grid",
                tb.node_index
            )));
        }
    }
    Ok((0..grid.len())
        .into_par_iter()
        .map(|t| {
            let mut y = CMatrix::zeros(2 * m, 2 * m);
            for tb in turbines {
                put_block(&mut y, tb.node_index, tb.node_index, tb.curve.at(t));
            }
            y
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct InModel {
    pub grid: FrequencyGrid,
    pub node_count: usize,
    pub y_node: Vec<CMatrix>,
    pub y_wt: Vec<CMatrix>,
    pub y_net: Vec<CMatrix>,
}

fn check_shapes(grid: &FrequencyGrid, mats: &[CMatrix], what: &str) -> Result<usize> {
    if mats.len() != grid.len() {
        return Err(Error::Assembly(format!(
            "{what} has {} frequencies, grid has {}",
            mats.len(),
            grid.len()
        )));
    }
    let n = mats.first().map_or(0, |m| m.nrows());
    if n == 0 || !n.is_multiple_of(2) || mats.iter().any(|m| m.nrows() != n || m.ncols() != n) {
        return Err(Error::Assembly(format!(
            "{what} matrices are not uniform 2m×2m"
        )));
    }
    Ok(n)
}

/// `Y_node = Y_wt + Y_net` per frequency.
pub fn assemble_ynode(
    grid: &FrequencyGrid,
    y_wt: Vec<CMatrix>,
    y_net: Vec<CMatrix>,
) -> Result<InModel> {
    let n_wt = check_shapes(grid, &y_wt, "Y_wt")?;
    let n_net = check_shapes(grid, &y_net, "Y_net")?;
    if n_wt != n_net {
        return Err(Error::Assembly(format!(
            "Y_wt is {n_wt}×{n_wt} but Y_net is {n_net}×{n_net}"
        )));
    }
    let y_node = y_wt.iter().zip(&y_net).map(|(a, b)| a + b).collect();
    Ok(InModel {
        grid: *grid,
        node_count: n_wt / 2,
        y_node,
        y_wt,
        y_net,
    })
}

/// Eliminates every node not in `keep` from a network admittance:
/// `Y_kk − Y_ke · Y_ee⁻¹ · Y_ek`. Eliminated nodes must carry no injection.
pub fn kron_reduce(y: &CMatrix, keep: &[usize]) -> Result<CMatrix> {
    let m = y.nrows() / 2;
    let mut is_kept = vec![false; m];
    for &k in keep {
        if k >= m || std::mem::replace(&mut is_kept[k], true) {
            return Err(Error::Assembly(format!("bad or repeated kept node {k}")));
        }
    }
    let rows = |nodes: &mut dyn Iterator<Item = usize>| -> Vec<usize> {
        nodes.flat_map(|i| [2 * i, 2 * i + 1]).collect()
    };
    let kept = rows(&mut keep.iter().copied());
    let elim = rows(&mut (0..m).filter(|i| !is_kept[*i]));
    let sub = |r: &[usize], cidx: &[usize]| {
        CMatrix::from_fn(r.len(), cidx.len(), |i, j| y[(r[i], cidx[j])])
    };
    let ykk = sub(&kept, &kept);
    if elim.is_empty() {
        return Ok(ykk);
    }
    let yke = sub(&kept, &elim);
    let yek = sub(&elim, &kept);
    let yee = sub(&elim, &elim);
    let solved = yee
        .lu()
        .solve(&yek)
        .ok_or_else(|| Error::Assembly("eliminated block is singular".into()))?;
    Ok(ykk - yke * solved)
}

/// Builds the model seen from the turbine terminals: the network is
/// Kron-reduced onto the turbine nodes (in the given order) before the
/// turbine blocks are added.
pub fn assemble_in_model(
    topology: &Topology,
    turbines: &[TurbineBlock],
    grid: &FrequencyGrid,
) -> Result<InModel> {
    if !topology.is_grounded() {
        return Err(Error::Assembly("some node has no path to ground".into()));
    }
    let keep: Vec<usize> = turbines.iter().map(|t| t.node_index).collect();
    let y_net_full = assemble_ynet(topology, grid)?;
    let y_net = y_net_full
        .par_iter()
        .map(|y| kron_reduce(y, &keep))
        .collect::<Result<Vec<_>>>()?;
    let local: Vec<TurbineBlock> = turbines
        .iter()
        .enumerate()
        .map(|(i, t)| TurbineBlock {
            node_index: i,
            curve: t.curve.clone(),
        })
        .collect();
    let y_wt = assemble_ywt(&local, keep.len(), grid)?;
    assemble_ynode(grid, y_wt, y_net)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetPoint {
    pub f: f64,
    pub det_abs: f64,
    pub sigma_min: f64,
}

/// `|det Y_node(f)|` and the smallest singular value at every frequency.
pub fn det_sweep(model: &InModel) -> Vec<DetPoint> {
    model
        .y_node
        .par_iter()
        .enumerate()
        .map(|(t, y)| {
            let det_abs = y.clone().lu().determinant().norm();
            let sigma_min = y
                .clone()
                .svd(false, false)
                .singular_values
                .iter()
                .copied()
                .fold(f64::INFINITY, f64::min);
            DetPoint {
                f: model.grid.freq(t),
                det_abs,
                sigma_min,
            }
        })
        .collect()
}

/// Writes `f,row,col,real,imag` rows for every entry of every frequency.
pub fn write_matrices_csv(
    grid: &FrequencyGrid,
    mats: &[CMatrix],
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(Error::file(path))?;
    let mut out = std::io::BufWriter::new(file);
    let mut write = || -> std::io::Result<()> {
        writeln!(out, "f,row,col,real,imag")?;
        for (t, m) in mats.iter().enumerate() {
            let f = grid.freq(t);
            for r in 0..m.nrows() {
                for col in 0..m.ncols() {
                    let v = m[(r, col)];
                    writeln!(out, "{f},{r},{col},{:e},{:e}", v.re, v.im)?;
                }
            }
        }
        out.flush()
    };
    write().map_err(Error::file(path))
}

impl InModel {
    /// Writes `y_node.csv`, `y_wt.csv` and `y_net.csv` into `dir`.
    pub fn write_csv(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(Error::file(dir))?;
        write_matrices_csv(&self.grid, &self.y_node, dir.join("y_node.csv"))?;
        write_matrices_csv(&self.grid, &self.y_wt, dir.join("y_wt.csv"))?;
        write_matrices_csv(&self.grid, &self.y_net, dir.join("y_net.csv"))
    }

    /// Largest `|Y_node − Y_wt − Y_net|` entry over all frequencies.
    pub fn sum_residual(&self) -> f64 {
        self.y_node
            .iter()
            .zip(&self.y_wt)
            .zip(&self.y_net)
            .map(|((n, w), y)| (n - w - y).iter().map(|v| v.norm()).fold(0.0, f64::max))
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn resistor_block_is_conductance() {
        let b = Branch::series_rl(Terminal::Node(0), Terminal::Node(1), 1.0, 0.0);
        for f in [0.0, 50.0, 1234.0] {
            let y = branch_block(&b, f, DEFAULT_OMEGA0).unwrap();
            assert_eq!(y, [c(1.0), c(0.0), c(0.0), c(1.0)]);
        }
    }

    #[test]
    fn pure_inductor_at_dc() {
        let w0 = 100.0 * std::f64::consts::PI;
        let b = Branch::series_rl(Terminal::Node(0), Terminal::Node(1), 0.0, 1.0);
        let y = branch_block(&b, 0.0, w0).unwrap();
        assert_abs_diff_eq!(y[0].norm(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(y[1].re, 0.003_183_098_861_837_907, epsilon = 1e-15);
        assert_abs_diff_eq!(y[2].re, -0.003_183_098_861_837_907, epsilon = 1e-15);
        assert_abs_diff_eq!(y[3].norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn singular_and_zero_blocks() {
        let b = Branch::series_rl(Terminal::Node(0), Terminal::Node(1), 0.0, 0.0);
        assert!(matches!(
            branch_block(&b, 10.0, DEFAULT_OMEGA0),
            Err(Error::Assembly(_))
        ));
        let cap = Branch::shunt_c(0, 0.0);
        assert_eq!(
            branch_block(&cap, 300.0, DEFAULT_OMEGA0).unwrap(),
            [c(0.0); 4]
        );
    }

    #[test]
    fn block_times_impedance_is_identity() {
        let b = Branch::transformer_rl(0, 1, 0.02, 3e-4, 1.0);
        for f in [1.0, 49.0, 777.0] {
            let y = branch_block(&b, f, DEFAULT_OMEGA0).unwrap();
            let s = Complex64::new(0.0, 2.0 * std::f64::consts::PI * f);
            let a = c(0.02) + s * 3e-4;
            let x = c(DEFAULT_OMEGA0 * 3e-4);
            let z = [a, -x, x, a];
            let p = [
                y[0] * z[0] + y[1] * z[2],
                y[0] * z[1] + y[1] * z[3],
                y[2] * z[0] + y[3] * z[2],
                y[2] * z[1] + y[3] * z[3],
            ];
            assert!(close(p[0], c(1.0), 1e-12) && close(p[3], c(1.0), 1e-12));
            assert!(close(p[1], c(0.0), 1e-12) && close(p[2], c(0.0), 1e-12));
        }
        let scaled = Branch::transformer_rl(0, 1, 0.02, 3e-4, 2.0);
        let y1 = branch_block(&b, 50.0, DEFAULT_OMEGA0).unwrap();
        let y2 = branch_block(&scaled, 50.0, DEFAULT_OMEGA0).unwrap();
        for k in 0..4 {
            assert!(close(y2[k], y1[k] * 4.0, 1e-12));
        }
    }

    #[test]
    fn kron_of_series_chain_matches_combined_branch() {
        // 0 —R1— 2 —R2— 1; eliminating node 2 leaves a single R1+R2 branch.
        let t = Topology::new(
            3,
            DEFAULT_OMEGA0,
            vec![
                Branch::series_rl(Terminal::Node(0), Terminal::Node(2), 1.0, 0.0),
                Branch::series_rl(Terminal::Node(2), Terminal::Node(1), 3.0, 0.0),
            ],
        )
        .unwrap();
        let grid = FrequencyGrid::integer_hz(3).unwrap();
        let y = &assemble_ynet(&t, &grid).unwrap()[1];
        let r = kron_reduce(y, &[0, 1]).unwrap();
        let g = 0.25;
        let expect = [
            [g, 0.0, -g, 0.0],
            [0.0, g, 0.0, -g],
            [-g, 0.0, g, 0.0],
            [0.0, -g, 0.0, g],
        ];
        for i in 0..4 {
            for j in 0..4 {
                assert!(close(r[(i, j)], c(expect[i][j]), 1e-12), "{i},{j}");
            }
        }
    }

    #[test]
    fn in_model_on_default_farm_is_eight_by_eight() {
        let grid = FrequencyGrid::integer_hz(20).unwrap();
        let curve = crate::spectra::synth_vsc_admittance(
            &crate::spectra::VscParams::default(),
            &crate::spectra::OperatingPoint::new(1.0, 0.95, 1.0).unwrap(),
            &grid,
        )
        .unwrap();
        let turbines: Vec<TurbineBlock> = (0..4)
            .map(|i| TurbineBlock {
                node_index: i,
                curve: curve.clone(),
            })
            .collect();
        let m = assemble_in_model(&Topology::default_farm(), &turbines, &grid).unwrap();
        assert_eq!(m.node_count, 4);
        assert!(m.y_node.iter().all(|y| y.nrows() == 8 && y.ncols() == 8));
        assert!(m.sum_residual() <= 1e-12);
        for y in &m.y_wt {
            for i in 0..8 {
                for j in 0..8 {
                    if i / 2 != j / 2 {
                        assert_eq!(y[(i, j)], c(0.0));
                    }
                }
            }
        }
    }

    #[test]
    fn ywt_rejects_duplicates_and_grid_mismatch() {
        let grid = FrequencyGrid::integer_hz(4).unwrap();
        let other = FrequencyGrid::integer_hz(5).unwrap();
        let tb = |node, g: &FrequencyGrid| TurbineBlock {
            node_index: node,
            curve: DqAdmittanceCurve::zeros(*g),
        };
        assert!(assemble_ywt(&[tb(0, &grid), tb(0, &grid)], 2, &grid).is_err());
        assert!(assemble_ywt(&[tb(0, &other)], 2, &grid).is_err());
        assert!(assemble_ywt(&[tb(2, &grid)], 2, &grid).is_err());
    }
}
