//! Cutoff functions, the localized energy balance of stationary
//! Navier-Stokes fields, and growth quantities of the vanishing criteria.

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::exponents::{self, ExponentParams, Variant};
use crate::fields::{cartesian_gradient, lq_norm, Field, Rank};
use crate::geometry::{build_grid, make_domain, AxisEnd, CoordSystem, DomainKind, Grid};
use crate::poly::{exact, Poly};
use serde::Serialize;
use std::sync::Arc;

pub const LEDGER_CSV_HEADER: &str = "R,lhs,I1,I2,I3,residual";
pub const CRITERION_CSV_HEADER: &str = "R,value,fit_exponent";

/// Smooth step: `1` for `t <= 0`, `0` for `t >= 1`, built from `exp(-1/s)`.
pub fn step(t: f64) -> f64 {
    if t <= 0.0 {
        1.0
    } else if t >= 1.0 {
        0.0
    } else {
        1.0 / (1.0 + (1.0 / (1.0 - t) - 1.0 / t).exp())
    }
}

/// Derivative of [`step`].
pub fn step_slope(t: f64) -> f64 {
    if t <= 0.0 || t >= 1.0 {
        return 0.0;
    }
    let e = (1.0 / (1.0 - t) - 1.0 / t).exp();
    if !e.is_finite() || e == 0.0 {
        return 0.0;
    }
    -(1.0 / (t * t) + 1.0 / ((1.0 - t) * (1.0 - t))) / (e + 2.0 + 1.0 / e)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CutoffShape {
    /// Depends on `|x|`.
    Radial,
    /// Depends on `|x'|` only.
    Planar,
}

/// `zeta(x) = step((d - (1 + 2 sigma) R) / (4 sigma R))` with `d = |x|` or `|x'|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CutoffSpec {
    #[serde(rename = "R")]
    pub r: f64,
    pub sigma: f64,
    #[serde(rename = "L")]
    pub l: f64,
    pub shape: CutoffShape,
}

pub fn build_cutoff(r: f64, sigma: f64, l: f64) -> Result<CutoffSpec> {
    CutoffSpec::new(r, sigma, l, CutoffShape::Radial)
}

pub fn build_planar_cutoff(r: f64, sigma: f64, l: f64) -> Result<CutoffSpec> {
    CutoffSpec::new(r, sigma, l, CutoffShape::Planar)
}

impl CutoffSpec {
    pub fn new(r: f64, sigma: f64, l: f64, shape: CutoffShape) -> Result<Self> {
        if !(r.is_finite() && r > 0.0) {
            return Err(Error::NonPositiveRadius(r));
        }
        if !(sigma > 0.0 && sigma <= 0.125) {
            return Err(Error::SigmaOutOfRange(sigma));
        }
        if !(l.is_finite() && l > 1.0) {
            return Err(Error::RatioOutOfRange(l));
        }
        Ok(Self { r, sigma, l, shape })
    }

    fn distance(&self, x: [f64; 3]) -> f64 {
        match self.shape {
            CutoffShape::Radial => (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt(),
            CutoffShape::Planar => (x[0] * x[0] + x[1] * x[1]).sqrt(),
        }
    }

    fn width(&self) -> f64 {
        4.0 * self.sigma * self.r
    }

    pub fn plateau_radius(&self) -> f64 {
        (1.0 + 2.0 * self.sigma) * self.r
    }

    pub fn support_radius(&self) -> f64 {
        (1.0 + 6.0 * self.sigma) * self.r
    }

    pub fn value(&self, x: [f64; 3]) -> f64 {
        step((self.distance(x) - self.plateau_radius()) / self.width())
    }

    pub fn gradient(&self, x: [f64; 3]) -> [f64; 3] {
        let d = self.distance(x);
        let s = step_slope((d - self.plateau_radius()) / self.width()) / self.width();
        if s == 0.0 {
            return [0.0; 3];
        }
        match self.shape {
            CutoffShape::Radial => [s * x[0] / d, s * x[1] / d, s * x[2] / d],
            CutoffShape::Planar => [s * x[0] / d, s * x[1] / d, 0.0],
        }
    }

    /// Sampled `sup |grad zeta| * sigma R`.
    pub fn gradient_bound(&self) -> f64 {
        let n = 20_000;
        (1..n)
            .map(|i| {
                let d = self.plateau_radius() + self.width() * i as f64 / n as f64;
                let g = self.gradient([d, 0.0, 0.0]);
                g[0].abs() * self.sigma * self.r
            })
            .fold(0.0, f64::max)
    }

    /// Whether `x` lies in the gauge annulus `(1 + 2 sigma) R < d < (L - 2 sigma) R`.
    pub fn in_gauge_region(&self, x: [f64; 3]) -> bool {
        let d = self.distance(x);
        d > self.plateau_radius() && d < (self.l - 2.0 * self.sigma) * self.r
    }

    /// Mean of `p` over the gauge annulus, the default gauge constant.
    pub fn gauge_mean(&self, p: &Field) -> f64 {
        let g = &p.grid;
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..g.len() {
            if self.in_gauge_region(g.cartesian(i)) {
                num += g.weights[i] * p.data[i];
                den += g.weights[i];
            }
        }
        if den > 0.0 { num / den } else { 0.0 }
    }

    fn check_covers(&self, g: &Grid) -> Result<()> {
        let want = match self.shape {
            CutoffShape::Radial => CoordSystem::Spherical,
            CutoffShape::Planar => CoordSystem::Cylindrical,
        };
        let ax = &g.axes[0];
        if g.coords != want || ax.ends[0] != AxisEnd::Center {
            return Err(Error::SupportNotCovered(format!(
                "a {:?} cutoff needs a solid {:?} grid centered at the origin",
                self.shape, want
            )));
        }
        if ax.hi() < self.support_radius() {
            return Err(Error::SupportNotCovered(format!(
                "grid radius {} below support radius {}",
                ax.hi(),
                self.support_radius()
            )));
        }
        Ok(())
    }
}

/// Terms of the localized energy identity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyLedger {
    /// `int |grad(u zeta)|^2`.
    pub lhs: f64,
    /// `int |u|^2 |grad zeta|^2`.
    pub i1: f64,
    /// `int |u|^2 u zeta . grad zeta`.
    pub i2: f64,
    /// `2 int (p - c) u zeta . grad zeta`.
    pub i3: f64,
    pub c: f64,
    /// `lhs - i1 - i2 - i3`.
    pub residual: f64,
}

impl EnergyLedger {
    pub fn relative_residual(&self) -> f64 {
        if self.lhs == 0.0 { self.residual.abs() } else { (self.residual / self.lhs).abs() }
    }

    pub fn csv_row(&self, r: f64) -> String {
        format!("{},{:e},{:e},{:e},{:e},{:e}", r, self.lhs, self.i1, self.i2, self.i3, self.residual)
    }
}

/// Evaluates every term by quadrature on a solid grid that contains the
/// cutoff support; `grad u` is taken by finite differences, `grad zeta` exactly.
pub fn energy_ledger(u: &Field, p: &Field, cutoff: &CutoffSpec, c: f64) -> Result<EnergyLedger> {
    if u.rank != Rank::Vector || p.rank != Rank::Scalar {
        return Err(Error::DomainMismatch("expected a vector velocity and a scalar pressure".into()));
    }
    if *u.grid != *p.grid {
        return Err(Error::DomainMismatch("velocity and pressure live on different grids".into()));
    }
    let g = &*u.grid;
    cutoff.check_covers(g)?;
    let grads = cartesian_gradient(u)?;
    let (mut lhs, mut i1, mut i2, mut i3) = (0.0, 0.0, 0.0, 0.0);
    for (i, grad) in grads.iter().enumerate() {
        let x = g.cartesian(i);
        let w = g.weights[i];
        let v = u.cartesian_vector(i);
        let z = cutoff.value(x);
        let dz = cutoff.gradient(x);
        let mut m2 = 0.0;
        for (row, vc) in grad.iter().zip(v) {
            for (gij, dzj) in row.iter().zip(dz) {
                let e = z * gij + vc * dzj;
                m2 += e * e;
            }
        }
        let u2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
        let flow = v[0] * dz[0] + v[1] * dz[1] + v[2] * dz[2];
        lhs += w * m2;
        i1 += w * u2 * (dz[0] * dz[0] + dz[1] * dz[1] + dz[2] * dz[2]);
        i2 += w * u2 * z * flow;
        i3 += 2.0 * w * (p.data[i] - c) * z * flow;
    }
    Ok(EnergyLedger { lhs, i1, i2, i3, c, residual: lhs - i1 - i2 - i3 })
}

/// Closed-form stationary Navier-Stokes fields.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum ExactSolution {
    Zero,
    Constant([f64; 3]),
    /// `u = (x3, 0, 0)`, `p = 0`.
    Shear,
    /// `u = (x2, -x1, 0)`, `p = |x'|^2 / 2`.
    RigidRotation,
    /// `u = s x / |x|^3`, `p = -|u|^2 / 2`: singular at the origin, so not a
    /// global solution; only for growth demonstrations on exterior shells.
    PointSource(f64),
}

/// Result of checking that a field pair solves the stationary equations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Certification {
    /// Decided in exact polynomial arithmetic.
    pub symbolic: bool,
    pub holds: bool,
}

impl ExactSolution {
    /// The globally defined members.
    pub fn library() -> Vec<ExactSolution> {
        vec![
            ExactSolution::Zero,
            ExactSolution::Constant([1.0, -2.0, 0.5]),
            ExactSolution::Shear,
            ExactSolution::RigidRotation,
        ]
    }

    pub fn name(&self) -> &'static str {
        match self {
            ExactSolution::Zero => "zero",
            ExactSolution::Constant(_) => "constant",
            ExactSolution::Shear => "shear",
            ExactSolution::RigidRotation => "rigid_rotation",
            ExactSolution::PointSource(_) => "point_source",
        }
    }

    pub fn is_global(&self) -> bool {
        !matches!(self, ExactSolution::PointSource(_))
    }

    pub fn velocity(&self, x: [f64; 3]) -> [f64; 3] {
        match *self {
            ExactSolution::Zero => [0.0; 3],
            ExactSolution::Constant(b) => b,
            ExactSolution::Shear => [x[2], 0.0, 0.0],
            ExactSolution::RigidRotation => [x[1], -x[0], 0.0],
            ExactSolution::PointSource(s) => {
                let r3 = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).powf(1.5);
                [s * x[0] / r3, s * x[1] / r3, s * x[2] / r3]
            }
        }
    }

    pub fn pressure(&self, x: [f64; 3]) -> f64 {
        match self {
            ExactSolution::RigidRotation => 0.5 * (x[0] * x[0] + x[1] * x[1]),
            ExactSolution::PointSource(_) => {
                let v = self.velocity(x);
                -0.5 * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2])
            }
            _ => 0.0,
        }
    }

    /// Polynomial velocity and pressure, when the field is polynomial.
    pub fn polynomials(&self) -> Option<([Poly; 3], Poly)> {
        let x = |i| Poly::var(i);
        Some(match *self {
            ExactSolution::Zero => ([Poly::zero(), Poly::zero(), Poly::zero()], Poly::zero()),
            ExactSolution::Constant(b) => (b.map(|c| Poly::constant(exact(c))), Poly::zero()),
            ExactSolution::Shear => ([x(2), Poly::zero(), Poly::zero()], Poly::zero()),
            ExactSolution::RigidRotation => {
                let half = Poly::constant(exact(0.5));
                let p = &half * &(&(&x(0) * &x(0)) + &(&x(1) * &x(1)));
                ([x(1), -&x(0), Poly::zero()], p)
            }
            ExactSolution::PointSource(_) => return None,
        })
    }

    /// Checks `div u = 0` and `-lap u + (u . grad) u + grad p = 0`: exactly
    /// for polynomial fields, by centered differences at sample points otherwise.
    pub fn certify(&self) -> Certification {
        if let Some((u, p)) = self.polynomials() {
            return Certification { symbolic: true, holds: solves_stationary(&u, &p) };
        }
        let h = 1e-4;
        let points = [[1.3, -0.4, 0.7], [-2.0, 1.1, 0.3], [0.5, 0.5, -1.9]];
        let shift = |x: [f64; 3], i: usize, s: f64| {
            let mut y = x;
            y[i] += s;
            y
        };
        let mut worst = 0.0_f64;
        for x in points {
            let u = self.velocity(x);
            let du = |i: usize| {
                let (a, b) = (self.velocity(shift(x, i, h)), self.velocity(shift(x, i, -h)));
                [0, 1, 2].map(|c| (a[c] - b[c]) / (2.0 * h))
            };
            let grads = [du(0), du(1), du(2)];
            let div: f64 = (0..3).map(|i| grads[i][i]).sum();
            worst = worst.max(div.abs());
            for c in 0..3 {
                let lap: f64 = (0..3)
                    .map(|i| {
                        (self.velocity(shift(x, i, h))[c] - 2.0 * u[c] + self.velocity(shift(x, i, -h))[c]) / (h * h)
                    })
                    .sum();
                let convect: f64 = (0..3).map(|j| u[j] * grads[j][c]).sum();
                let dp = (self.pressure(shift(x, c, h)) - self.pressure(shift(x, c, -h))) / (2.0 * h);
                worst = worst.max((-lap + convect + dp).abs());
            }
        }
        Certification { symbolic: false, holds: worst < 1e-5 }
    }

    /// Velocity and pressure sampled on `grid`.
    pub fn sample(&self, grid: &Arc<Grid>) -> (Field, Field) {
        (Field::vector_cartesian(grid.clone(), |x| self.velocity(x)), Field::scalar_fn(grid.clone(), |x| self.pressure(x)))
    }
}

/// Exact check of `div u = 0` and `-lap u + (u . grad) u + grad p = 0`.
pub fn solves_stationary(u: &[Poly; 3], p: &Poly) -> bool {
    let div = (0..3).fold(Poly::zero(), |acc, i| &acc + &u[i].derivative(i));
    div.is_zero()
        && (0..3).all(|c| {
            let convect = (0..3).fold(Poly::zero(), |acc, j| &acc + &(&u[j] * &u[c].derivative(j)));
            (&(&convect - &u[c].laplacian()) + &p.derivative(c)).is_zero()
        })
}

/// Which unbounded region the annuli exhaust.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Region {
    Whole,
    Half,
    /// Slab of unit height; shells are `R < |x'| < LR`.
    Slab,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Criterion {
    /// `(1/R) ||u||_q^{3 - delta}` on `R < d < LR`.
    Ratio { l: f64 },
    /// `R^beta ||u||_q` on `R < d < R + R^{1 - alpha}` (`beta_ps` on the slab).
    Thin,
    /// `R^{2/q} ||u||_q^{2 - delta}` on the slab shell `R < |x'| < LR`.
    SlabPower { l: f64 },
    /// `int |u|^r + |u|^{2r}` on the slab shell.
    SlabIntegral { l: f64, r: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionSeries {
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
    /// Least-squares slope of `log value` against `log R`; `None` when a value vanishes.
    pub fit_exponent: Option<f64>,
}

impl CriterionSeries {
    pub fn csv_rows(&self) -> Vec<String> {
        let fit = self.fit_exponent.map_or(String::from("nan"), |e| format!("{e:e}"));
        self.radii.iter().zip(&self.values).map(|(r, v)| format!("{r},{v:e},{fit}")).collect()
    }
}

/// Least-squares log-log slope.
pub fn fit_exponent(radii: &[f64], values: &[f64]) -> Option<f64> {
    if radii.len() < 2 || values.iter().any(|&v| !(v > 0.0)) {
        return None;
    }
    let xs: Vec<f64> = radii.iter().map(|r| r.ln()).collect();
    let ys: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    Some(sxy / sxx)
}

/// Growth exponent of the thin-shell quantity on constant fields.
pub fn constant_field_exponent(params: &ExponentParams, region: Region) -> f64 {
    let variant = if region == Region::Slab { Variant::Periodic } else { Variant::Whole };
    exponents::to_f64(&exponents::constant_field_exponent(params, variant))
}

/// Growth exponent of `criterion` evaluated on a nonzero constant field.
pub fn constant_growth_exponent(criterion: Criterion, params: &ExponentParams, region: Region) -> f64 {
    let delta = exponents::to_f64(&params.delta);
    // shell volume grows like R^3, or R^2 on the slab; ||b||_q^{3-delta} then scales with
    // exponent (3 - delta) * dim / q, where (3 - delta) / q = 1 - delta / 6
    let dim = if region == Region::Slab { 2.0 } else { 3.0 };
    match criterion {
        Criterion::Ratio { .. } => dim * (1.0 - delta / 6.0) - 1.0,
        Criterion::Thin => constant_field_exponent(params, region),
        Criterion::SlabPower { .. } => 2.0 * (1.0 - delta / 6.0),
        Criterion::SlabIntegral { .. } => 2.0,
    }
}

fn shell(region: Region, r: f64, l: f64, resolution: [usize; 3]) -> Result<Grid> {
    let kind = match region {
        Region::Whole => DomainKind::Annulus3D,
        Region::Half => DomainKind::HalfAnnulus3D,
        Region::Slab => DomainKind::SlabShell,
    };
    build_grid(&make_domain(kind, r, l)?, resolution)
}

/// Evaluates a criterion quantity of the field `u` on the shells of `radii`.
pub fn criterion_quantity<F>(
    u: F,
    radii: &[f64],
    params: &ExponentParams,
    region: Region,
    criterion: Criterion,
    resolution: [usize; 3],
) -> Result<CriterionSeries>
where
    F: Fn([f64; 3]) -> [f64; 3] + Sync,
{
    if matches!(criterion, Criterion::SlabPower { .. } | Criterion::SlabIntegral { .. }) && region != Region::Slab {
        return Err(Error::DomainMismatch("slab criteria need the slab region".into()));
    }
    let values = exponents::ExponentValues::compute(params);
    let q = exponents::to_f64(&values.q);
    let delta = exponents::to_f64(&params.delta);
    let alpha = exponents::to_f64(&params.alpha);
    let beta = exponents::to_f64(if region == Region::Slab { &values.beta_ps } else { &values.beta });
    let evaluate = |&r: &f64| -> Result<f64> {
        let l = match criterion {
            Criterion::Ratio { l } | Criterion::SlabPower { l } | Criterion::SlabIntegral { l, .. } => l,
            Criterion::Thin => 1.0 + r.powf(-alpha),
        };
        let grid = Arc::new(shell(region, r, l, resolution)?);
        let field = Field::vector_cartesian(grid, &u);
        Ok(match criterion {
            Criterion::Ratio { .. } => lq_norm(&field, q)?.value.powf(3.0 - delta) / r,
            Criterion::Thin => r.powf(beta) * lq_norm(&field, q)?.value,
            Criterion::SlabPower { .. } => r.powf(2.0 / q) * lq_norm(&field, q)?.value.powf(2.0 - delta),
            Criterion::SlabIntegral { r: s, .. } => {
                lq_norm(&field, s)?.value.powf(s) + lq_norm(&field, 2.0 * s)?.value.powf(2.0 * s)
            }
        })
    };
    let values = Exec::default().try_map(radii, evaluate)?;
    Ok(CriterionSeries { radii: radii.to_vec(), fit_exponent: fit_exponent(radii, &values), values })
}
