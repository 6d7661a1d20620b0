//! Iteratively reweighted minimization of the discrete `L^q` gradient norm.

use super::band::{BandCholesky, SymAssembly};
use super::mesh::Mesh;
use crate::error::{Error, Result};

const MAX_OUTER: usize = 100;
const OUTER_TOL: f64 = 1e-6;
const DAMPING: f64 = 0.5;
const PCG_TOL: f64 = 1e-12;
/// Regularization of the weights relative to the mean squared gradient.
pub(crate) const EPS_REL: f64 = 1e-8;

/// Full three-dimensional divergence operator as sparse rows over global unknowns.
struct Constraint {
    rows: Vec<Vec<(usize, f64)>>,
}

impl Constraint {
    fn new(mesh: &Mesh) -> Self {
        let nc = mesh.cells_per_slice();
        let mut rows = Vec::with_capacity(mesh.cell_count());
        for k in 0..mesh.n[2] {
            let pos = Mesh::row_pos(k, false);
            for c in 0..nc {
                let a: Vec<(usize, f64)> = mesh.div_rows[c].iter().map(|t| (mesh.global(pos, t), t.c)).collect();
                rows.push(super::band::merge_terms(&a));
            }
        }
        Self { rows }
    }

    fn apply_transpose(&self, p: &[f64], n: usize) -> Vec<f64> {
        let mut u = vec![0.0; n];
        for (row, &pc) in self.rows.iter().zip(p) {
            for &(s, v) in row {
                u[s] += v * pc;
            }
        }
        u
    }

    fn apply(&self, u: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|row| row.iter().map(|&(s, v)| v * u[s]).sum()).collect()
    }
}

fn weighted_stiffness(mesh: &Mesh, cell_weight: &[f64]) -> Result<BandCholesky> {
    let mut k = SymAssembly::new(mesh.unknowns());
    for plane in 0..mesh.n[2] {
        for row in &mesh.rows {
            let pos = Mesh::row_pos(plane, row.half);
            let w: f64 = row.cells.iter().map(|&(c, dk, share)| share * cell_weight[mesh.global_cell(pos, c, dk)]).sum();
            let a: Vec<(usize, f64)> = row.terms.iter().map(|t| (mesh.global(pos, t), t.c)).collect();
            k.add_outer(&a, row.weight * w);
        }
    }
    k.factor()
}

/// Minimizes `sum w_c |grad u|_c^2 V_c` subject to `B u = rhs` by
/// preconditioned conjugate gradients on the pressure Schur complement.
fn weighted_solve(mesh: &Mesh, b: &Constraint, cell_weight: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let k = weighted_stiffness(mesh, cell_weight)?;
    let n = mesh.unknowns();
    let nc = rhs.len();
    let precond: Vec<f64> = (0..nc).map(|g| cell_weight[g] / mesh.volume(g)).collect();
    let gamma = (0..nc).map(|g| mesh.volume(g) / cell_weight[g]).sum::<f64>() / nc as f64;
    let schur = |p: &[f64]| -> Vec<f64> {
        let mut u = b.apply_transpose(p, n);
        k.solve_in_place(&mut u);
        let mut out = b.apply(&u);
        let mean = p.iter().sum::<f64>() / nc as f64;
        for o in &mut out {
            *o += gamma * mean;
        }
        out
    };
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let rhs_norm = dot(rhs, rhs).sqrt();
    let mut x = vec![0.0; nc];
    if rhs_norm > 0.0 {
        let mut r = rhs.to_vec();
        let mut z: Vec<f64> = r.iter().zip(&precond).map(|(a, p)| a * p).collect();
        let mut dir = z.clone();
        let mut rz = dot(&r, &z);
        let mut converged = false;
        for _ in 0..20 * nc.max(50) {
            let ad = schur(&dir);
            let alpha = rz / dot(&dir, &ad);
            for i in 0..nc {
                x[i] += alpha * dir[i];
                r[i] -= alpha * ad[i];
            }
            if dot(&r, &r).sqrt() <= PCG_TOL * rhs_norm {
                converged = true;
                break;
            }
            z = r.iter().zip(&precond).map(|(a, p)| a * p).collect();
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..nc {
                dir[i] = z[i] + beta * dir[i];
            }
        }
        if !converged {
            return Err(Error::NoConvergence { iterations: 20 * nc.max(50), change: dot(&r, &r).sqrt() / rhs_norm });
        }
    }
    let mut u = b.apply_transpose(&x, n);
    k.solve_in_place(&mut u);
    Ok(u)
}

/// Reweighting loop started from the quadratic minimizer `start`.
/// Returns the converged unknowns and the number of outer iterations.
pub(crate) fn minimize(mesh: &Mesh, flux: &[f64], q: f64, start: Vec<f64>) -> Result<(Vec<f64>, usize)> {
    let b = Constraint::new(mesh);
    let nc = mesh.cell_count();
    let mut u = start;
    let mut prev = mesh.grad_norm(&u, q);
    let s0 = mesh.pointwise_sq(&u);
    let total: f64 = (0..nc).map(|g| mesh.volume(g)).sum();
    let mean_sq = (0..nc).map(|g| mesh.volume(g) * s0[g]).sum::<f64>() / total;
    let eps2 = EPS_REL * mean_sq.max(f64::MIN_POSITIVE);
    let mut weight: Option<Vec<f64>> = None;
    let mut change = f64::INFINITY;
    for it in 1..=MAX_OUTER {
        let s = mesh.pointwise_sq(&u);
        let mut target: Vec<f64> = s.iter().map(|x| (x.max(0.0) + eps2).powf(0.5 * (q - 2.0))).collect();
        let scale = (0..nc).map(|g| mesh.volume(g) * target[g]).sum::<f64>() / total;
        target.iter_mut().for_each(|t| *t /= scale);
        let w = match weight.take() {
            None => target,
            Some(old) => old.iter().zip(&target).map(|(o, t)| (1.0 - DAMPING) * o + DAMPING * t).collect(),
        };
        u = weighted_solve(mesh, &b, &w, flux)?;
        weight = Some(w);
        let norm = mesh.grad_norm(&u, q);
        change = (norm - prev).abs() / prev.max(f64::MIN_POSITIVE);
        prev = norm;
        if change < OUTER_TOL {
            return Ok((u, it));
        }
    }
    Err(Error::NoConvergence { iterations: MAX_OUTER, change })
}
