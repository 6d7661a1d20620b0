//! Change-of-variables constructions that carry divergence solutions from a
//! fixed reference shell to thin or large physical shells.
//!
//! Every variant maps the radial coordinate `t` of the reference domain to a
//! physical radius `x(t)` and rescales the frame components of a vector field
//! by smooth factors chosen so that `div v = J * (div vbar)` at mapped points.
//! Node fields use the finite-difference calculus of [`crate::fields`]; face
//! fields are transported flux by flux, which keeps the discrete identity
//! exact up to the cell-volume distortion of the map.

use crate::divsolve::mesh::Component;
use crate::divsolve::{DivSolver, FaceField, Mesh, SolveReport};
use crate::error::{Error, Result};
use crate::fields::{divergence, gradient_lq_norm, lq_norm, mean_zero_project, Field, Rank};
use crate::geometry::{make_domain, Axis, AxisEnd, CoordSystem, DomainKind, Grid};
use crate::poly::{exact, Poly, RationalFn};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Largest relative wall value accepted for a "zero-trace" node field.
pub const TRACE_TOL: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant")]
pub enum TransformParams {
    /// `B_L \ B_1` onto `B_2 \ B_1` through `a^2 t^2 = x^2 + a^2 - 1`.
    SphericalAnnulus {
        #[serde(rename = "L")]
        l: f64,
        a: f64,
    },
    /// Cylindrical shell of height 1 through the affine map `t = 1 + (x - 1) / k`.
    CylindricalShell {
        #[serde(rename = "L")]
        l: f64,
        k: f64,
    },
    /// Lateral stretch `(x1, x2, x3) = (R y1, R y2, y3)` of a slab shell.
    SlabScaling {
        #[serde(rename = "R")]
        r: f64,
    },
    /// Uniform dilation by `R`.
    Dilation {
        #[serde(rename = "R")]
        r: f64,
    },
}

impl TransformParams {
    pub fn spherical(l: f64) -> Result<Self> {
        if !(l.is_finite() && l > 1.0) {
            return Err(Error::RatioOutOfRange(l));
        }
        Ok(Self::SphericalAnnulus { l, a: ((l * l - 1.0) / 3.0).sqrt() })
    }

    pub fn cylindrical(l: f64) -> Result<Self> {
        if !(l.is_finite() && l > 1.0 && l < 10.0) {
            return Err(Error::RatioOutOfRange(l));
        }
        Ok(Self::CylindricalShell { l, k: l - 1.0 })
    }

    pub fn slab(r: f64) -> Result<Self> {
        if !(r.is_finite() && r >= 1.0) {
            return Err(Error::NonPositiveRadius(r));
        }
        Ok(Self::SlabScaling { r })
    }

    pub fn dilation(r: f64) -> Result<Self> {
        if !(r.is_finite() && r > 0.0) {
            return Err(Error::NonPositiveRadius(r));
        }
        Ok(Self::Dilation { r })
    }

    /// Reference radius of the physical radius `x`.
    pub fn tau(&self, x: f64) -> f64 {
        match *self {
            Self::SphericalAnnulus { a, .. } => (x * x + a * a - 1.0).sqrt() / a,
            Self::CylindricalShell { k, .. } => 1.0 + (x - 1.0) / k,
            Self::SlabScaling { r } | Self::Dilation { r } => x / r,
        }
    }

    /// Physical radius of the reference radius `t`.
    pub fn radius(&self, t: f64) -> f64 {
        match *self {
            Self::SphericalAnnulus { a, .. } => (a * a * t * t - a * a + 1.0).sqrt(),
            Self::CylindricalShell { k, .. } => 1.0 + k * (t - 1.0),
            Self::SlabScaling { r } | Self::Dilation { r } => r * t,
        }
    }

    /// Factor `J` in `div v = J * (div vbar)` at reference radius `t`.
    pub fn divergence_factor(&self, t: f64) -> f64 {
        match self {
            Self::SphericalAnnulus { .. } | Self::CylindricalShell { .. } => t / self.radius(t),
            Self::SlabScaling { .. } | Self::Dilation { .. } => 1.0,
        }
    }

    /// Multipliers of the radial, second and azimuthal components at reference radius `t`.
    pub fn component_factors(&self, t: f64) -> [f64; 3] {
        let x = self.radius(t);
        match *self {
            Self::SphericalAnnulus { a, .. } => [a * a * t * t / (x * x), 1.0, 1.0],
            Self::CylindricalShell { k, .. } => [k * t / x, t / x, 1.0],
            Self::SlabScaling { r } => [r, 1.0, r],
            Self::Dilation { r } => [r, r, r],
        }
    }

    fn factor(&self, c: Component, t: f64) -> f64 {
        let f = self.component_factors(t);
        match c {
            Component::Radial => f[0],
            Component::Second => f[1],
            Component::Azimuthal => f[2],
        }
    }

    /// Whether `g` is a valid source grid of this transform.
    fn check_reference(&self, g: &Grid) -> Result<()> {
        let d = g.domain.ok_or_else(|| Error::DomainMismatch("grid has no domain".into()))?;
        let ok = match self {
            Self::SphericalAnnulus { .. } => {
                matches!(d.kind, DomainKind::ReferenceAnnulus | DomainKind::ReferenceHalfAnnulus)
            }
            Self::CylindricalShell { .. } => d.kind == DomainKind::ReferenceCylShell,
            Self::SlabScaling { .. } => d.physical_kind() == DomainKind::SlabShell && d.r == 1.0,
            Self::Dilation { .. } => d.dilate(1.0).is_ok(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::DomainMismatch(format!("{} is not a source domain of {:?}", d.kind, self)))
        }
    }

    /// Physical grid whose nodes are the images of the nodes of `reference`.
    pub fn mapped_grid(&self, reference: &Grid) -> Result<Grid> {
        self.check_reference(reference)?;
        let d = reference.domain.expect("checked");
        if let Self::Dilation { r } = *self {
            return reference.dilate(r);
        }
        let (kind, r, l) = match *self {
            Self::SphericalAnnulus { l, .. } => (d.physical_kind(), 1.0, l),
            Self::CylindricalShell { l, .. } => (DomainKind::CylinderShell, 1.0, l),
            Self::SlabScaling { r } => (DomainKind::SlabShell, r, d.l),
            Self::Dilation { .. } => unreachable!(),
        };
        let domain = make_domain(kind, r, l)?;
        let radial = map_axis(&reference.axes[0], |t| self.radius(t));
        let n = reference.shape();
        let mut g = Grid::with_radial_axis(&domain, radial, [n[1], n[2]])?;
        // pin the mapped walls to the exact domain radii
        let ax = &mut g.axes[0];
        ax.faces[0] = domain.inner_radius();
        *ax.faces.last_mut().expect("faces") = domain.outer_radius();
        Ok(Grid::from_axes(g.domain, g.coords, g.axes))
    }

    /// Reference grid whose nodes map onto the nodes of `physical`.
    pub fn reference_grid(&self, physical: &Grid) -> Result<Grid> {
        let d = physical.domain.ok_or_else(|| Error::DomainMismatch("grid has no domain".into()))?;
        let mismatch = || Error::DomainMismatch(format!("{} grid does not match {:?}", d.kind, self));
        if let Self::Dilation { r } = *self {
            return physical.dilate(1.0 / r).map_err(|_| mismatch());
        }
        let kind = match *self {
            Self::SphericalAnnulus { l, .. } => {
                if !matches!(d.kind, DomainKind::Annulus3D | DomainKind::HalfAnnulus3D) || d.r != 1.0 || d.l != l {
                    return Err(mismatch());
                }
                if d.kind.is_half() { DomainKind::ReferenceHalfAnnulus } else { DomainKind::ReferenceAnnulus }
            }
            Self::CylindricalShell { l, .. } => {
                if d.kind != DomainKind::CylinderShell || d.r != 1.0 || d.l != l {
                    return Err(mismatch());
                }
                DomainKind::ReferenceCylShell
            }
            Self::SlabScaling { r } => {
                if d.kind != DomainKind::SlabShell || d.r != r {
                    return Err(mismatch());
                }
                DomainKind::SlabShell
            }
            Self::Dilation { .. } => unreachable!(),
        };
        let domain = match kind {
            DomainKind::SlabShell => make_domain(kind, 1.0, d.l)?,
            _ => make_domain(kind, 1.0, 2.0)?,
        };
        let radial = map_axis(&physical.axes[0], |x| self.tau(x));
        let n = physical.shape();
        let mut g = Grid::with_radial_axis(&domain, radial, [n[1], n[2]])?;
        let ax = &mut g.axes[0];
        ax.faces[0] = domain.inner_radius();
        *ax.faces.last_mut().expect("faces") = domain.outer_radius();
        Ok(Grid::from_axes(g.domain, g.coords, g.axes))
    }

    /// Relabels a physical scalar field onto the reference grid.
    pub fn pullback(&self, f: &Field) -> Result<Field> {
        if f.rank != Rank::Scalar {
            return Err(Error::DomainMismatch("pullback takes scalar fields".into()));
        }
        let g = self.reference_grid(&f.grid)?;
        Field::new(Arc::new(g), Rank::Scalar, f.data.clone())
    }

    /// The reference datum `f / J` of a physical datum, projected to mean zero
    /// on `reference` (which must be node-compatible with `f`'s grid).
    pub fn reference_datum(&self, f: &Field, reference: &Arc<Grid>) -> Result<Field> {
        let expected = self.reference_grid(&f.grid)?;
        if !grids_match(&expected, reference) {
            return Err(Error::DomainMismatch("reference grid is not node-compatible with the datum".into()));
        }
        let data = (0..f.len())
            .map(|i| f.data[i] / self.divergence_factor(reference.node(i)[0]))
            .collect();
        mean_zero_project(&Field::new(reference.clone(), Rank::Scalar, data)?)
    }

    /// Transports a node vector field; no divergence bookkeeping.
    pub fn push_field(&self, vbar: &Field) -> Result<Field> {
        if vbar.rank != Rank::Vector {
            return Err(Error::DomainMismatch("pushforward takes vector fields".into()));
        }
        let trace = boundary_trace(vbar);
        if trace > TRACE_TOL {
            return Err(Error::BoundaryViolation(trace));
        }
        let g = Arc::new(self.mapped_grid(&vbar.grid)?);
        let order = frame_roles(g.coords);
        let mut data = vbar.data.clone();
        for i in 0..g.len() {
            let f = self.component_factors(vbar.grid.node(i)[0]);
            for c in 0..3 {
                data[3 * i + c] *= f[order[c]];
            }
        }
        Field::new(g, Rank::Vector, data)
    }

    /// Node pushforward with the divergence identity measured against
    /// `J * (div vbar)` and the gradient ratio in `L^q`.
    pub fn pushforward(&self, vbar: &Field, q: f64) -> Result<PushforwardResult> {
        let v = self.push_field(vbar)?;
        let ref_div = divergence(vbar, vbar.grid.coords)?;
        let data = (0..v.len()).map(|i| self.divergence_factor(vbar.grid.node(i)[0]) * ref_div.data[i]).collect();
        let f = Field::new(v.grid.clone(), Rank::Scalar, data)?;
        let div = divergence(&v, v.grid.coords)?;
        let grad = gradient_lq_norm(&v, q)?;
        summarize(v, &div, &f, grad, q)
    }

    /// Moves a face field of a reference mesh onto the mapped mesh.
    pub fn push_faces(&self, vbar: &FaceField) -> Result<FaceField> {
        let physical = Arc::new(self.mapped_grid(&vbar.mesh.grid)?);
        let mesh = Arc::new(Mesh::new(physical)?);
        let factors: Vec<f64> =
            vbar.mesh.positions().iter().map(|&(c, [t, _])| self.factor(c, t)).collect();
        let ns = mesh.ns;
        let data = vbar.data.iter().enumerate().map(|(i, x)| x * factors[i % ns]).collect();
        Ok(FaceField { mesh, data })
    }

    /// Full construction `f -> f / J on the reference -> solve -> push`.
    /// `solver` must be built on the reference grid of `f`'s grid.
    pub fn bogovskii(&self, f: &Field, q: f64, solver: &DivSolver) -> Result<Composition> {
        if f.rank != Rank::Scalar {
            return Err(Error::DomainMismatch("divergence data must be scalar".into()));
        }
        let total = f.integral();
        if total.abs() >= 1e-10 * f.l1() && f.l1() > 0.0 {
            return Err(Error::NonZeroMean(total / f.grid.total_weight()));
        }
        let datum = self.reference_datum(f, solver.grid())?;
        let reference = solver.solve(&datum, q)?;
        let faces = self.push_faces(&reference.faces)?;
        let physical_f = Field::new(faces.mesh.grid.clone(), Rank::Scalar, f.data.clone())?;
        let div = faces.divergence();
        let grad = faces.grad_norm(q);
        let result = summarize(faces.to_field(), &div, &physical_f, grad, q)?;
        Ok(Composition { reference, faces, result })
    }
}

/// Output of a pushforward: the physical field and its quality measures.
#[derive(Debug, Clone)]
pub struct PushforwardResult {
    pub v: Field,
    /// `||div v - f||_2 / ||f||_2`, or the absolute norm when `f = 0`.
    pub div_residual: f64,
    /// `||grad v||_q / ||f||_q`.
    pub norm_ratio: f64,
}

/// Reference solve and transported solution of one datum.
#[derive(Debug, Clone)]
pub struct Composition {
    pub reference: SolveReport,
    pub faces: FaceField,
    pub result: PushforwardResult,
}

fn summarize(v: Field, div: &Field, f: &Field, grad: f64, q: f64) -> Result<PushforwardResult> {
    let err = div.axpy(-1.0, f)?;
    let err_norm = lq_norm(&err, 2.0)?.value;
    let f2 = lq_norm(f, 2.0)?.value;
    let fq = lq_norm(f, q)?.value;
    let div_residual = if f2 > 0.0 { err_norm / f2 } else { err_norm };
    let norm_ratio = match (grad, fq) {
        (g, _) if g == 0.0 => 0.0,
        (_, n) if n == 0.0 => f64::INFINITY,
        (g, n) => g / n,
    };
    Ok(PushforwardResult { v, div_residual, norm_ratio })
}

/// Axis roles (0 radial, 1 second, 2 azimuthal) of the frame components.
fn frame_roles(coords: CoordSystem) -> [usize; 3] {
    match coords {
        CoordSystem::Spherical => [0, 1, 2],
        CoordSystem::Cylindrical => [0, 2, 1],
    }
}

fn map_axis(axis: &Axis, f: impl Fn(f64) -> f64) -> Axis {
    Axis { faces: axis.faces.iter().map(|&x| f(x)).collect(), nodes: axis.nodes.iter().map(|&x| f(x)).collect(), ends: axis.ends }
}

/// Same shape, ends and domain kind, and coordinates equal to rounding.
fn grids_match(a: &Grid, b: &Grid) -> bool {
    let same_domain = match (a.domain, b.domain) {
        (Some(x), Some(y)) => x.kind == y.kind && close(x.r, y.r) && close(x.l, y.l),
        (None, None) => true,
        _ => false,
    };
    same_domain
        && a.coords == b.coords
        && a.axes.iter().zip(&b.axes).all(|(x, y)| {
            x.ends == y.ends
                && x.faces.len() == y.faces.len()
                && x.faces.iter().zip(&y.faces).all(|(p, q)| close(*p, *q))
                && x.nodes.iter().zip(&y.nodes).all(|(p, q)| close(*p, *q))
        })
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

/// Largest wall value of a node field, extrapolated by the quadratic through
/// the three nodes nearest each wall (linear on two-cell axes), relative to
/// the field's largest node value.
pub fn boundary_trace(v: &Field) -> f64 {
    let g = &*v.grid;
    let width = v.rank.components();
    let top = v.data.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if top == 0.0 {
        return 0.0;
    }
    let n = g.shape();
    let mut worst = 0.0_f64;
    for axis in 0..3 {
        let ax = &g.axes[axis];
        let m = n[axis].min(3);
        for (side, end) in ax.ends.iter().enumerate() {
            if *end != AxisEnd::Wall {
                continue;
            }
            let (lines, wall): (Vec<usize>, f64) =
                if side == 0 { ((0..m).collect(), ax.lo()) } else { ((0..m).map(|j| n[axis] - 1 - j).collect(), ax.hi()) };
            let at: Vec<f64> = lines.iter().map(|&j| ax.nodes[j]).collect();
            let weights: Vec<f64> = (0..m)
                .map(|j| (0..m).filter(|&l| l != j).map(|l| (wall - at[l]) / (at[j] - at[l])).product())
                .collect();
            for idx in 0..g.len() {
                let mut pos = g.unindex(idx);
                if pos[axis] != lines[0] {
                    continue;
                }
                let nodes: Vec<usize> = lines
                    .iter()
                    .map(|&j| {
                        pos[axis] = j;
                        g.index(pos[0], pos[1], pos[2])
                    })
                    .collect();
                for c in 0..width {
                    let x: f64 = nodes.iter().zip(&weights).map(|(&i, w)| w * v.data[width * i + c]).sum();
                    worst = worst.max(x.abs());
                }
            }
        }
    }
    worst / top
}

/// Pulls a spherical-annulus datum back to the reference annulus.
pub fn spherical_pullback(f: &Field, params: &TransformParams) -> Result<Field> {
    match params {
        TransformParams::SphericalAnnulus { .. } => params.pullback(f),
        other => Err(Error::DomainMismatch(format!("{other:?} is not a spherical transform"))),
    }
}

/// Both sides of `int_ref |fbar|^q = int |f|^q t / (a^2 x)` by quadrature.
pub fn jacobian_identity(f: &Field, params: &TransformParams, q: f64) -> Result<(f64, f64)> {
    let TransformParams::SphericalAnnulus { a, .. } = *params else {
        return Err(Error::DomainMismatch("the Jacobian identity is stated for the spherical map".into()));
    };
    let fbar = spherical_pullback(f, params)?;
    let lhs = (0..fbar.len()).map(|i| fbar.grid.weights[i] * fbar.magnitude(i).powf(q)).sum();
    let rhs = (0..f.len())
        .map(|i| {
            let x = f.grid.node(i)[0];
            f.grid.weights[i] * f.magnitude(i).powf(q) * params.tau(x) / (a * a * x)
        })
        .sum();
    Ok((lhs, rhs))
}

pub fn spherical_pushforward(vbar: &Field, params: &TransformParams, q: f64) -> Result<PushforwardResult> {
    match params {
        TransformParams::SphericalAnnulus { .. } => params.pushforward(vbar, q),
        other => Err(Error::DomainMismatch(format!("{other:?} is not a spherical transform"))),
    }
}

pub fn cylindrical_pushforward(vbar: &Field, params: &TransformParams, q: f64) -> Result<PushforwardResult> {
    let TransformParams::CylindricalShell { l, .. } = *params else {
        return Err(Error::DomainMismatch(format!("{params:?} is not a cylindrical transform")));
    };
    let check = verify_cylinder_factors(l)?;
    if !check.exact {
        return Err(Error::SingularSystem("cylinder factors violate the divergence chain".into()));
    }
    params.pushforward(vbar, q)
}

/// `v(x) = (R vbar_1, R vbar_2, vbar_3)(x / R laterally)` on the stretched slab.
pub fn slab_scaling(vbar: &Field, r: f64) -> Result<Field> {
    TransformParams::slab(r)?.push_field(vbar)
}

/// `w(y) = R v(y / R)` on the dilated grid.
pub fn dilation_bogovskii(v: &Field, r: f64) -> Result<Field> {
    let params = TransformParams::dilation(r)?;
    params.check_reference(&v.grid)?;
    let g = Arc::new(v.grid.dilate(r)?);
    Field::new(g, v.rank, v.data.iter().map(|x| r * x).collect())
}

/// Outcome of the exact check of the cylinder factor chain.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorCheck {
    /// All four expressions agree as rational functions of the radius, and
    /// the second-component and axial factors reduce to `1` and `t / x`.
    pub exact: bool,
    /// Largest float discrepancy of `t (A / x + A') - C` on a radius sample.
    pub max_residual: f64,
}

/// Certifies `t (A / x + dA/dx) = t' A = (t / x) B = C` in exact rational
/// arithmetic for `A = k t / x`, `B = k t'`, `C = k t t' / x`, `t = 1 + (x - 1) / k`.
pub fn verify_cylinder_factors(l: f64) -> Result<FactorCheck> {
    if !(l > 1.0 && l < 10.0) {
        return Err(Error::RatioOutOfRange(l));
    }
    let k = exact(l - 1.0);
    let inv_k = num_traits::Inv::inv(k.clone());
    let x = Poly::var(0);
    let one = Poly::int(1);
    let t = &one + &(&x - &one).scale(&inv_k);
    let dt = RationalFn::poly(t.derivative(0));
    let tf = RationalFn::poly(t.clone());
    let over_x = RationalFn::new(Poly::int(1), x.clone());
    let a = RationalFn::new(t.scale(&k), x.clone());
    let b = &RationalFn::poly(Poly::constant(k.clone())) * &dt;
    let c = &a * &dt;
    let first = &tf * &(&(&a * &over_x) + &a.derivative(0));
    let second = &dt * &a;
    let third = &(&tf * &over_x) * &b;
    let chain = first.same_as(&second) && second.same_as(&third) && third.same_as(&c);
    let reduced = b.same_as(&RationalFn::poly(one)) && c.same_as(&RationalFn::new(t, x));
    let max_residual = (0..=200)
        .map(|i| {
            let r = 1.0 + (l - 1.0) * i as f64 / 200.0;
            let p = [r, 0.0, 0.0];
            (first.eval(p) - c.eval(p)).abs()
        })
        .fold(0.0, f64::max);
    Ok(FactorCheck { exact: chain && reduced, max_residual })
}
