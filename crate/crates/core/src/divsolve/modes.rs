//! Azimuthal Fourier decoupling of the quadratic problem.
//!
//! The metric does not depend on the azimuth, so every stencil row is
//! invariant under azimuthal shifts. For mode `m` the unknowns are taken as
//! `u0, u1 ~ cos(m theta)` and `ut ~ sin(m theta)`; rows at half positions
//! then carry `sin` and rows at integer positions `cos`, and each mode reduces
//! to a real problem on one meridional slice.

use super::band::{BandCholesky, SymAssembly};
use super::mesh::{Component, Mesh, Term};
use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Real per-mode coefficient of `term`; `psi = m dtheta / 2`.
pub(crate) fn mode_coeff(mesh: &Mesh, term: &Term, half: bool, psi: f64) -> f64 {
    let azimuthal = mesh.component(term.s as usize) == Component::Azimuthal;
    let a = psi * term.dk as f64;
    let phase = match (half, azimuthal) {
        (false, false) | (true, true) => a.cos(),
        (true, false) => -a.sin(),
        (false, true) => a.sin(),
    };
    term.c * phase
}

pub(crate) fn psi(mesh: &Mesh, m: usize) -> f64 {
    0.5 * m as f64 * mesh.dtheta
}

/// Factorized slice operators of one azimuthal mode.
pub(crate) struct ModeOperator {
    pub m: usize,
    stiffness: BandCholesky,
    constraint: Vec<Vec<(usize, f64)>>,
    schur: DMatrix<f64>,
    schur_factor: nalgebra::Cholesky<f64, nalgebra::Dyn>,
}

impl ModeOperator {
    pub fn new(mesh: &Mesh, m: usize) -> Result<Self> {
        let p = psi(mesh, m);
        let mut k = SymAssembly::new(mesh.ns);
        for row in &mesh.rows {
            let a: Vec<(usize, f64)> =
                row.terms.iter().map(|t| (t.s as usize, mode_coeff(mesh, t, row.half, p))).collect();
            k.add_outer(&a, row.weight);
        }
        let stiffness = k.factor()?;
        let constraint: Vec<Vec<(usize, f64)>> = mesh
            .div_rows
            .iter()
            .map(|r| {
                let a: Vec<(usize, f64)> = r.iter().map(|t| (t.s as usize, mode_coeff(mesh, t, false, p))).collect();
                super::band::merge_terms(&a)
            })
            .collect();
        let nc = constraint.len();
        let mut w = DMatrix::<f64>::zeros(mesh.ns, nc);
        for (c, col) in constraint.iter().enumerate() {
            w.set_column(c, &DVector::from_vec(stiffness.half_solve_sparse(col)));
        }
        let schur = w.tr_mul(&w);
        let mut deflated = schur.clone();
        if m == 0 {
            let gamma = schur.diagonal().mean() / nc as f64;
            deflated.add_scalar_mut(gamma);
        }
        let schur_factor = nalgebra::Cholesky::new(deflated)
            .ok_or_else(|| Error::SingularSystem(format!("divergence constraint is rank deficient in mode {m}")))?;
        Ok(Self { m, stiffness, constraint, schur, schur_factor })
    }

    /// Minimum-energy slice unknowns with flux `rhs` in every cell.
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let p = self.schur_factor.solve(&DVector::from_column_slice(rhs));
        let mut u = vec![0.0; self.stiffness.dim()];
        for (c, col) in self.constraint.iter().enumerate() {
            for &(s, v) in col {
                u[s] += v * p[c];
            }
        }
        self.stiffness.solve_in_place(&mut u);
        u
    }

    /// Volume-scaled Schur complement `V^{-1/2} S V^{-1/2}`, with the constant
    /// null direction of mode zero lifted out of the spectrum's bottom.
    fn scaled_schur(&self, volume: &[f64]) -> DMatrix<f64> {
        let n = volume.len();
        let d: Vec<f64> = volume.iter().map(|v| 1.0 / v.sqrt()).collect();
        let mut a = DMatrix::from_fn(n, n, |i, j| self.schur[(i, j)] * d[i] * d[j]);
        if self.m == 0 {
            let shift = a.trace().max(1.0);
            let norm: f64 = volume.iter().sum::<f64>();
            let u: Vec<f64> = volume.iter().map(|v| (v / norm).sqrt()).collect();
            for i in 0..n {
                for j in 0..n {
                    a[(i, j)] += shift * u[i] * u[j];
                }
            }
        }
        a
    }

    /// Smallest eigenvalue of the scaled Schur complement.
    pub fn min_eigenvalue(&self, volume: &[f64]) -> f64 {
        self.scaled_schur(volume).symmetric_eigenvalues().min()
    }

    /// Smallest eigenpair `(lambda, slice datum, relative residual)`; the
    /// datum is the cell field whose minimum-energy lift attains the bound.
    pub fn min_eigenpair(&self, volume: &[f64]) -> (f64, Vec<f64>, f64) {
        let a = self.scaled_schur(volume);
        let eig = nalgebra::SymmetricEigen::new(a.clone());
        let idx = eig.eigenvalues.imin();
        let lambda = eig.eigenvalues[idx];
        let x = eig.eigenvectors.column(idx).into_owned();
        let residual = (&a * &x - &x * lambda).norm() / lambda.abs().max(f64::MIN_POSITIVE);
        let datum = x.iter().zip(volume).map(|(y, v)| y / v.sqrt()).collect();
        (lambda, datum, residual)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_grid, make_domain, DomainKind};
    use std::sync::Arc;

    #[test]
    fn mode_coefficients_are_real_parts_of_shifted_phases() {
        let d = make_domain(DomainKind::Annulus3D, 1.0, 2.0).unwrap();
        let mesh = Mesh::new(Arc::new(build_grid(&d, [3, 3, 8]).unwrap())).unwrap();
        let ut = (mesh.ns - 1) as u32;
        let t = Term { s: ut, dk: 1, c: 1.0 };
        let p = 0.3;
        // integer row, azimuthal unknown: Re(-i e^{i p}) = sin p
        assert!((mode_coeff(&mesh, &t, false, p) - p.sin()).abs() < 1e-15);
        let u = Term { s: 0, dk: -1, c: 2.0 };
        // half row, meridional unknown: Re(i e^{-i p}) = sin p
        assert!((mode_coeff(&mesh, &u, true, p) - 2.0 * p.sin()).abs() < 1e-15);
    }
}
