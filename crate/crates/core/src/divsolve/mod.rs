//! Minimum-gradient solutions of `div v = f` with zero trace, and the optimal
//! constant of that right inverse.
//!
//! The quadratic case is solved mode by mode in the azimuthal Fourier basis;
//! other exponents use iteratively reweighted quadratic solves on the full
//! mesh. The constant for `q = 2` is the reciprocal square root of the
//! smallest nonzero eigenvalue of the volume-scaled pressure Schur complement.

pub mod band;
mod irls;
pub mod mesh;
mod modes;

pub use mesh::{FaceField, Mesh};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::fields::{mean_zero_project, Field, Rank};
use crate::geometry::{DomainSpec, Grid};
use modes::ModeOperator;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::FftPlanner;
use serde::Serialize;
use std::sync::{Arc, OnceLock};

/// Seed of the random data family.
pub const DEFAULT_SEED: u64 = 0x5EED;
/// Size of the random data family used for sampled constants.
pub const SAMPLE_COUNT: usize = 50;
/// Header of the constant CSV.
pub const CSV_HEADER: &str = "domain_kind,R,L,q,method,c_star,resolution,residual";

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub v: Field,
    pub faces: FaceField,
    pub div_residual_rel: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub constant_estimate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Eigen,
    SampledSup,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Eigen => "eigen",
            Method::SampledSup => "sampled_sup",
        }
    }
}

/// Datum attaining the quadratic constant.
#[derive(Debug, Clone)]
pub struct Extremal {
    pub mode: usize,
    pub datum: Field,
}

#[derive(Debug, Clone)]
pub struct ConstantReport {
    pub domain: DomainSpec,
    pub q: f64,
    pub c_star: f64,
    pub method: Method,
    pub resolution: String,
    /// Eigenpair residual (eigen) or worst divergence residual (sampled).
    pub residual: f64,
    pub extremal: Option<Extremal>,
}

impl ConstantReport {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{:.12e},{},{:.3e}",
            self.domain.kind,
            self.domain.r,
            self.domain.l,
            self.q,
            self.method.name(),
            self.c_star,
            self.resolution,
            self.residual
        )
    }
}

fn check_q(q: f64) -> Result<()> {
    if q.is_finite() && q > 1.0 {
        Ok(())
    } else {
        Err(Error::QOutOfRange(q))
    }
}

/// Divergence solver bound to one grid; per-mode factorizations are built on
/// first use and shared by later solves.
pub struct DivSolver {
    mesh: Arc<Mesh>,
    modes: Vec<OnceLock<Result<Arc<ModeOperator>>>>,
    exec: Exec,
}

impl DivSolver {
    pub fn new(grid: Arc<Grid>) -> Result<Self> {
        Self::with_exec(grid, Exec::default())
    }

    pub fn with_exec(grid: Arc<Grid>, exec: Exec) -> Result<Self> {
        let mesh = Arc::new(Mesh::new(grid)?);
        let modes = (0..=mesh.n[2] / 2).map(|_| OnceLock::new()).collect();
        Ok(Self { mesh, modes, exec })
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.mesh.grid
    }

    fn mode(&self, m: usize) -> Result<Arc<ModeOperator>> {
        self.modes[m].get_or_init(|| ModeOperator::new(&self.mesh, m).map(Arc::new)).clone()
    }

    fn check_datum(&self, f: &Field) -> Result<Vec<f64>> {
        if f.rank != Rank::Scalar {
            return Err(Error::DomainMismatch("divergence data must be scalar".into()));
        }
        if !Arc::ptr_eq(&f.grid, &self.mesh.grid) && *f.grid != *self.mesh.grid {
            return Err(Error::DomainMismatch("datum lives on a different grid".into()));
        }
        Ok(self.mesh.from_grid_order(&f.data))
    }

    /// Cell fluxes `V_c f_c` in plane-major order, after the mean check.
    fn fluxes(&self, cells: &[f64]) -> Result<Vec<f64>> {
        let flux: Vec<f64> = cells.iter().enumerate().map(|(g, x)| self.mesh.volume(g) * x).collect();
        let total: f64 = flux.iter().sum();
        let l1: f64 = flux.iter().map(|x| x.abs()).sum();
        if total.abs() >= 1e-10 * l1 && l1 > 0.0 {
            return Err(Error::NonZeroMean(total / self.mesh.grid.total_weight()));
        }
        Ok(flux)
    }

    /// Quadratic minimizer for the given cell fluxes.
    pub fn solve_flux(&self, flux: &[f64]) -> Result<FaceField> {
        let mesh = &*self.mesh;
        let (nc, nt, ns) = (mesh.cells_per_slice(), mesh.n[2], mesh.ns);
        let mut planner = FftPlanner::<f64>::new();
        let forward = planner.plan_fft_forward(nt);
        let inverse = planner.plan_fft_inverse(nt);
        // spectra[c][m]
        let spectra: Vec<Vec<Complex64>> = (0..nc)
            .map(|c| {
                let mut seq: Vec<Complex64> = (0..nt).map(|k| Complex64::new(flux[k * nc + c], 0.0)).collect();
                forward.process(&mut seq);
                seq
            })
            .collect();
        let scale = flux.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        let active: Vec<usize> = (0..=nt / 2)
            .filter(|&m| spectra.iter().any(|s| s[m].norm() > 1e-15 * scale * nt as f64))
            .collect();
        let amplitudes: Vec<Vec<Complex64>> = self.exec.try_map(&active, |&m| {
            let op = self.mode(m)?;
            let re: Vec<f64> = spectra.iter().map(|s| s[m].re).collect();
            let im: Vec<f64> = spectra.iter().map(|s| s[m].im).collect();
            let (ur, ui) = (op.solve(&re), op.solve(&im));
            let rot = Complex64::from_polar(1.0, modes::psi(mesh, m));
            Ok::<_, Error>(
                (0..ns)
                    .map(|s| {
                        let z = Complex64::new(ur[s], ui[s]);
                        if mesh.component(s) == mesh::Component::Azimuthal {
                            -Complex64::i() * z * rot
                        } else {
                            z
                        }
                    })
                    .collect(),
            )
        })?;
        let mut data = vec![0.0; mesh.unknowns()];
        let mut seq = vec![Complex64::new(0.0, 0.0); nt];
        for s in 0..ns {
            seq.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
            for (&m, amp) in active.iter().zip(&amplitudes) {
                seq[m] = amp[s];
                if m != 0 && 2 * m != nt {
                    seq[nt - m] = amp[s].conj();
                }
            }
            inverse.process(&mut seq);
            for k in 0..nt {
                data[k * ns + s] = seq[k].re / nt as f64;
            }
        }
        Ok(FaceField { mesh: self.mesh.clone(), data })
    }

    /// Minimum-`W^{1,q}` zero-trace solution of `div v = f`.
    pub fn solve(&self, f: &Field, q: f64) -> Result<SolveReport> {
        check_q(q)?;
        let cells = self.check_datum(f)?;
        let flux = self.fluxes(&cells)?;
        let mesh = &*self.mesh;
        let f_norm = mesh.cell_norm(&cells, q);
        if f_norm == 0.0 {
            let faces = FaceField::zeros(self.mesh.clone());
            return Ok(SolveReport {
                v: faces.to_field(),
                faces,
                div_residual_rel: 0.0,
                grad_norm: 0.0,
                iterations: 1,
                constant_estimate: 0.0,
            });
        }
        let quadratic = self.solve_flux(&flux)?;
        let (faces, iterations) = if q == 2.0 {
            (quadratic, 1)
        } else {
            let (data, it) = irls::minimize(mesh, &flux, q, quadratic.data)?;
            (FaceField { mesh: self.mesh.clone(), data }, it)
        };
        let realized = mesh.flux(&faces.data);
        let err: Vec<f64> =
            realized.iter().zip(&cells).enumerate().map(|(g, (r, f))| r / mesh.volume(g) - f).collect();
        let div_residual_rel = mesh.cell_norm(&err, 2.0) / mesh.cell_norm(&cells, 2.0);
        let grad_norm = faces.grad_norm(q);
        Ok(SolveReport {
            v: faces.to_field(),
            faces,
            div_residual_rel,
            grad_norm,
            iterations,
            constant_estimate: grad_norm / f_norm,
        })
    }

    /// Optimal constant: eigenproblem for `q = 2`, sampled supremum otherwise.
    pub fn estimate_constant(&self, q: f64) -> Result<ConstantReport> {
        check_q(q)?;
        let domain = self.mesh.grid.domain.expect("mesh grids carry a domain");
        let resolution = self.mesh.grid.resolution_tag();
        if q == 2.0 {
            let (c_star, residual, extremal) = self.eigen_constant()?;
            return Ok(ConstantReport {
                domain,
                q,
                c_star,
                method: Method::Eigen,
                resolution,
                residual,
                extremal: Some(extremal),
            });
        }
        let data = random_data(&self.mesh.grid, SAMPLE_COUNT, DEFAULT_SEED);
        let reports = self.exec.try_map(&data, |f| self.solve(f, q))?;
        let c_star = reports.iter().map(|r| r.constant_estimate).fold(0.0, f64::max);
        let residual = reports.iter().map(|r| r.div_residual_rel).fold(0.0, f64::max);
        Ok(ConstantReport { domain, q, c_star, method: Method::SampledSup, resolution, residual, extremal: None })
    }

    fn eigen_constant(&self) -> Result<(f64, f64, Extremal)> {
        let mesh = &*self.mesh;
        let modes: Vec<usize> = (0..=mesh.n[2] / 2).collect();
        let lambdas = self.exec.try_map(&modes, |&m| self.mode(m).map(|op| op.min_eigenvalue(&mesh.cell_volume)))?;
        let (best, &lambda) = lambdas
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("at least one mode");
        if !(lambda > 0.0) {
            return Err(Error::SingularSystem(format!("non-positive inf-sup eigenvalue {lambda:e}")));
        }
        let (_, slice, residual) = self.mode(best)?.min_eigenpair(&mesh.cell_volume);
        let at = &mesh.grid.axes[mesh.coords.theta_axis()];
        let nc = mesh.cells_per_slice();
        let mut cells = vec![0.0; mesh.cell_count()];
        for k in 0..mesh.n[2] {
            let c = (best as f64 * at.nodes[k]).cos();
            for s in 0..nc {
                cells[k * nc + s] = slice[s] * c;
            }
        }
        let datum = Field { grid: mesh.grid.clone(), rank: Rank::Scalar, data: mesh.to_grid_order(&cells) };
        Ok((1.0 / lambda.sqrt(), residual, Extremal { mode: best, datum }))
    }
}

/// Free-function form of [`DivSolver::solve`].
pub fn solve_divergence(f: &Field, q: f64) -> Result<SolveReport> {
    DivSolver::new(f.grid.clone())?.solve(f, q)
}

/// Free-function form of [`DivSolver::estimate_constant`]; `grid` must be
/// built on `domain`.
pub fn estimate_constant(domain: &DomainSpec, q: f64, grid: Grid) -> Result<ConstantReport> {
    if grid.domain.as_ref() != Some(domain) {
        return Err(Error::DomainMismatch("grid was built for another domain".into()));
    }
    DivSolver::new(Arc::new(grid))?.estimate_constant(q)
}

/// Seeded family of smooth mean-zero data: sums of plane waves in the
/// Cartesian position scaled by the outer radius.
pub fn random_data(grid: &Arc<Grid>, count: usize, seed: u64) -> Vec<Field> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = grid
        .domain
        .map(|d| d.outer_radius().max(d.height.unwrap_or(0.0)))
        .unwrap_or_else(|| grid.axes[0].hi());
    (0..count)
        .map(|_| {
            let waves: Vec<([f64; 3], f64, f64)> = (0..6)
                .map(|_| {
                    let k = [0; 3].map(|_| rng.gen_range(-3.0..3.0) / scale);
                    (k, rng.gen_range(0.0..std::f64::consts::TAU), rng.gen_range(-1.0..1.0))
                })
                .collect();
            let f = Field::scalar_fn(grid.clone(), |x| {
                waves.iter().map(|(k, ph, a)| a * (k[0] * x[0] + k[1] * x[1] + k[2] * x[2] + ph).cos()).sum()
            });
            mean_zero_project(&f).expect("scalar field")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_grid, make_domain, DomainKind};

    fn solver(kind: DomainKind, l: f64, n: [usize; 3]) -> DivSolver {
        let d = make_domain(kind, 1.0, l).unwrap();
        DivSolver::new(Arc::new(build_grid(&d, n).unwrap())).unwrap()
    }

    #[test]
    fn zero_datum_gives_zero_field() {
        let s = solver(DomainKind::Annulus3D, 2.0, [4, 4, 4]);
        let f = Field::zeros(s.grid().clone(), Rank::Scalar);
        let r = s.solve(&f, 2.0).unwrap();
        assert_eq!(r.constant_estimate, 0.0);
        assert_eq!(r.faces.max_abs(), 0.0);
        assert!(r.iterations >= 1);
    }

    #[test]
    fn nonzero_mean_and_bad_q_are_rejected() {
        let s = solver(DomainKind::Annulus3D, 2.0, [4, 4, 4]);
        let one = Field::scalar_fn(s.grid().clone(), |_| 1.0);
        assert!(matches!(s.solve(&one, 2.0), Err(Error::NonZeroMean(_))));
        let zero = Field::zeros(s.grid().clone(), Rank::Scalar);
        assert!(matches!(s.solve(&zero, 1.0), Err(Error::QOutOfRange(_))));
    }

    #[test]
    fn quadratic_solve_satisfies_constraint() {
        for (kind, l) in [(DomainKind::Annulus3D, 2.0), (DomainKind::HalfAnnulus3D, 1.5), (DomainKind::SlabShell, 2.0)] {
            let s = solver(kind, l, [5, 6, 8]);
            for f in random_data(s.grid(), 3, 11) {
                let r = s.solve(&f, 2.0).unwrap();
                assert!(r.div_residual_rel < 1e-9, "{kind}: {}", r.div_residual_rel);
            }
        }
    }

    #[test]
    fn quadratic_solve_is_energy_minimal() {
        // Perturbing by any solenoidal face field must not lower the energy.
        let s = solver(DomainKind::Annulus3D, 1.5, [4, 5, 6]);
        let f = &random_data(s.grid(), 1, 3)[0];
        let r = s.solve(f, 2.0).unwrap();
        let e0 = r.faces.energy();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..5 {
            let noise: Vec<f64> = (0..s.mesh().unknowns()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let flux = s.mesh().flux(&noise);
            let lift = s.solve_flux(&flux).unwrap();
            let kernel: Vec<f64> = noise.iter().zip(&lift.data).map(|(a, b)| a - b).collect();
            assert!(s.mesh().flux(&kernel).iter().all(|x| x.abs() < 1e-10));
            for t in [1e-3, -1e-3, 0.1] {
                let w: Vec<f64> = r.faces.data.iter().zip(&kernel).map(|(a, b)| a + t * b).collect();
                assert!(s.mesh().energy(&w) >= e0 * (1.0 - 1e-12));
            }
        }
    }

    #[test]
    fn eigen_constant_is_attained_by_its_datum() {
        let s = solver(DomainKind::Annulus3D, 1.5, [4, 6, 6]);
        let rep = s.estimate_constant(2.0).unwrap();
        let ext = rep.extremal.as_ref().unwrap();
        let f = mean_zero_project(&ext.datum).unwrap();
        let r = s.solve(&f, 2.0).unwrap();
        assert!((r.constant_estimate - rep.c_star).abs() < 1e-6 * rep.c_star, "{} vs {}", r.constant_estimate, rep.c_star);
        for g in random_data(s.grid(), 5, 1) {
            assert!(s.solve(&g, 2.0).unwrap().constant_estimate <= rep.c_star * (1.0 + 1e-9));
        }
    }

    #[test]
    fn reweighted_solve_converges_and_keeps_constraint() {
        let s = solver(DomainKind::Annulus3D, 2.0, [4, 4, 6]);
        let f = &random_data(s.grid(), 1, 5)[0];
        let quad = s.solve(f, 2.0).unwrap();
        for q in [1.5, 3.0] {
            let r = s.solve(f, q).unwrap();
            assert!(r.div_residual_rel < 1e-8, "q={q}: {}", r.div_residual_rel);
            assert!(r.iterations >= 1);
            // the q-minimizer beats the quadratic minimizer in the q norm
            assert!(r.grad_norm <= quad.faces.grad_norm(q) * (1.0 + 1e-6));
        }
    }
}
