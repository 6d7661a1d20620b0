//! Duality estimate of the pressure deviation by a divergence solve.
//!
//! For `p` with mean `m`, set `p0 = p - m`, `g = |p0|^{q-2} p0 - mean` and
//! `w = Bog g` at the dual exponent. Then `int |p0|^q = int p0 g = int p0 div w
//! <= N ||grad w||_{q'}` and `||grad w||_{q'} <= C1 ||g||_{q'} <= 2 C1 ||p0||_q^{q-1}`,
//! so `||p0||_q <= 2 N C1`. Both `N` and `C1` are estimated as maxima over a
//! candidate family that always contains the witness `w` itself.

use crate::divsolve::{random_data, DivSolver, DEFAULT_SEED};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::fields::{Field, Rank};
use crate::geometry::Grid;
use serde::Serialize;
use std::sync::Arc;

pub const CSV_HEADER: &str = "q,lhs,N,c1,slack";
/// Random candidates used for the dual supremum and the dual-exponent constant.
pub const DEFAULT_PROBES: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PressureReport {
    pub q: f64,
    /// `||p - (p)_E||_q`.
    pub lhs: f64,
    /// Sampled `sup int p div z / ||grad z||_{q'}`.
    pub dual_sup_estimate: f64,
    /// Measured divergence-solver constant at the dual exponent.
    pub c1: f64,
    /// `2 N c1 - lhs`.
    pub chain_slack: f64,
    /// `int |p0|^q`.
    pub power: f64,
    /// `int p0 g`, equal to `power` up to rounding.
    pub paired: f64,
    /// `int p0 div w` with the discrete divergence of the witness.
    pub paired_div: f64,
    /// `||g||_{q'} / ||p0||_q^{q-1}`, at most 2.
    pub g_ratio: f64,
    /// The witness attains the sampled supremum, so `N` rests on it alone.
    pub witness_binding: bool,
}

impl PressureReport {
    pub fn csv_row(&self) -> String {
        format!("{},{:e},{:e},{:e},{:e}", self.q, self.lhs, self.dual_sup_estimate, self.c1, self.chain_slack)
    }
}

struct Probe {
    /// Discrete divergence in grid order.
    div: Vec<f64>,
    grad: f64,
}

/// Dual-exponent solver with its precomputed candidate family.
pub struct PressureEstimator {
    solver: DivSolver,
    q: f64,
    dual: f64,
    c1_family: f64,
    probes: Vec<Probe>,
}

fn weighted_sum(grid: &Grid, f: impl Fn(usize) -> f64) -> f64 {
    (0..grid.len()).map(|i| grid.weights[i] * f(i)).sum()
}

fn lq(grid: &Grid, values: &[f64], q: f64) -> f64 {
    weighted_sum(grid, |i| values[i].abs().powf(q)).powf(1.0 / q)
}

impl PressureEstimator {
    pub fn new(grid: Arc<Grid>, q: f64, probes: usize, seed: u64) -> Result<Self> {
        Self::with_solver(DivSolver::new(grid)?, q, probes, seed, Exec::default())
    }

    pub fn with_solver(solver: DivSolver, q: f64, probes: usize, seed: u64, exec: Exec) -> Result<Self> {
        if !(q.is_finite() && q > 1.0) {
            return Err(Error::QOutOfRange(q));
        }
        let dual = q / (q - 1.0);
        let data = random_data(solver.grid(), probes, seed);
        let solved = exec.try_map(&data, |h| solver.solve(h, dual))?;
        let grid = solver.grid().clone();
        let mut c1_family = solved
            .iter()
            .zip(&data)
            .map(|(r, h)| r.grad_norm / lq(&grid, &h.data, dual))
            .fold(0.0, f64::max);
        if dual == 2.0 {
            c1_family = c1_family.max(solver.estimate_constant(2.0)?.c_star);
        }
        let probes = solved
            .into_iter()
            .map(|r| Probe { div: r.faces.divergence().data, grad: r.grad_norm })
            .collect();
        Ok(Self { solver, q, dual, c1_family, probes })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.solver.grid()
    }

    /// Dual exponent `q / (q - 1)`.
    pub fn dual(&self) -> f64 {
        self.dual
    }

    pub fn estimate(&self, p: &Field) -> Result<PressureReport> {
        if p.rank != Rank::Scalar {
            return Err(Error::DomainMismatch("pressure must be scalar".into()));
        }
        let grid = self.solver.grid().clone();
        if *p.grid != *grid {
            return Err(Error::DomainMismatch("pressure lives on a different grid".into()));
        }
        let q = self.q;
        let mean = p.mean();
        let p0: Vec<f64> = p.data.iter().map(|x| x - mean).collect();
        let lhs = lq(&grid, &p0, q);
        let power = weighted_sum(&grid, |i| p0[i].abs().powf(q));
        let raw: Vec<f64> = p0.iter().map(|x| x.abs().powf(q - 2.0) * x).collect();
        let raw_mean = weighted_sum(&grid, |i| raw[i]) / grid.total_weight();
        let g: Vec<f64> = raw.iter().map(|x| x - raw_mean).collect();
        let paired = weighted_sum(&grid, |i| p0[i] * g[i]);
        let g_norm = lq(&grid, &g, self.dual);
        let g_ratio = if lhs > 0.0 { g_norm / lhs.powf(q - 1.0) } else { 0.0 };
        let pair = |div: &[f64]| weighted_sum(&grid, |i| p0[i] * div[i]);
        let family = self.probes.iter().map(|z| pair(&z.div).abs() / z.grad).fold(0.0, f64::max);
        let (paired_div, witness, c1) = if g_norm > 0.0 {
            let w = self.solver.solve(&Field::new(grid.clone(), Rank::Scalar, g.clone())?, self.dual)?;
            let paired_div = pair(&w.faces.divergence().data);
            (paired_div, paired_div.abs() / w.grad_norm, self.c1_family.max(w.grad_norm / g_norm))
        } else {
            (0.0, 0.0, self.c1_family)
        };
        let n = family.max(witness);
        Ok(PressureReport {
            q,
            lhs,
            dual_sup_estimate: n,
            c1,
            chain_slack: 2.0 * n * c1 - lhs,
            power,
            paired,
            paired_div,
            g_ratio,
            witness_binding: witness > 0.0 && witness >= family,
        })
    }
}

/// One-shot estimate with [`DEFAULT_PROBES`] candidates.
pub fn pressure_estimate(p: &Field, q: f64) -> Result<PressureReport> {
    PressureEstimator::new(p.grid.clone(), q, DEFAULT_PROBES, DEFAULT_SEED)?.estimate(p)
}
