//! Staggered face mesh over a grid with a periodic azimuthal axis.
//!
//! Work happens in a meridional slice `(q0, q1)` (radius and polar angle, or
//! radius and height) swept around the azimuth. Normal velocity components
//! live on cell faces, divergence on cells. Every stencil row is stored once
//! per slice together with its azimuthal offsets, so the same rows serve the
//! per-mode Fourier solve and the full three-dimensional assembly.

use crate::error::{Error, Result};
use crate::fields::{Field, Rank};
use crate::geometry::{AxisEnd, CoordSystem, DomainKind, Grid};
use std::f64::consts::PI;
use std::sync::Arc;

/// One coefficient of a stencil row. `dk` is the azimuthal offset of the
/// unknown from the row position, counted in half cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Term {
    pub s: u32,
    pub dk: i8,
    pub c: f64,
}

/// A gradient component sampled at one location of the slice.
#[derive(Debug, Clone)]
pub(crate) struct Row {
    pub terms: Vec<Term>,
    /// Quadrature volume attached to the sample.
    pub weight: f64,
    /// Sits at a half-integer azimuthal position.
    pub half: bool,
    /// Neighbouring cells `(slice cell, dk, share)`; shares sum to one.
    pub cells: Vec<(u32, i8, f64)>,
}

/// Which velocity component an unknown carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    Radial,
    Second,
    Azimuthal,
}

#[derive(Debug)]
pub struct Mesh {
    pub grid: Arc<Grid>,
    pub coords: CoordSystem,
    /// Cells along radius, second axis and azimuth.
    pub n: [usize; 3],
    pub dtheta: f64,
    f1_lo: usize,
    n1u: usize,
    off1: usize,
    offt: usize,
    /// Unknowns per azimuthal plane.
    pub ns: usize,
    /// Volume of each slice cell (one azimuthal step).
    pub cell_volume: Vec<f64>,
    pub(crate) div_rows: Vec<Vec<Term>>,
    pub(crate) rows: Vec<Row>,
}

fn is_pole(end: AxisEnd) -> bool {
    end == AxisEnd::Pole
}

impl Mesh {
    pub fn new(grid: Arc<Grid>) -> Result<Self> {
        let domain = grid
            .domain
            .ok_or_else(|| Error::UnsupportedDomain("solid grids have no divergence solver".into()))?;
        if domain.kind == DomainKind::Annulus2D {
            return Err(Error::UnsupportedDomain("annulus2d is a planar region".into()));
        }
        let coords = grid.coords;
        let (a0, a1, at) = (&grid.axes[0], &grid.axes[coords.second_axis()], &grid.axes[coords.theta_axis()]);
        if a0.ends != [AxisEnd::Wall; 2] {
            return Err(Error::UnsupportedDomain("radial axis must end on walls".into()));
        }
        let nt = at.len();
        let dtheta = 2.0 * PI / nt as f64;
        if (0..nt).any(|k| (at.width(k) - dtheta).abs() > 1e-12) {
            return Err(Error::UnsupportedDomain("azimuthal axis must be uniform over a full turn".into()));
        }
        let (n0, n1) = (a0.len(), a1.len());
        let f1_lo = if is_pole(a1.ends[0]) { 0 } else { 1 };
        let f1_hi = if is_pole(a1.ends[1]) { n1 } else { n1 - 1 };
        let n1u = f1_hi + 1 - f1_lo;
        let off1 = (n0 - 1) * n1;
        let offt = off1 + n0 * n1u;
        let ns = offt + n0 * n1;
        let mut mesh = Mesh {
            grid: grid.clone(),
            coords,
            n: [n0, n1, nt],
            dtheta,
            f1_lo,
            n1u,
            off1,
            offt,
            ns,
            cell_volume: Vec::new(),
            div_rows: Vec::new(),
            rows: Vec::new(),
        };
        mesh.cell_volume = (0..n0 * n1).map(|c| grid.weights[mesh.grid_index(c, 0)]).collect();
        mesh.div_rows = (0..n0 * n1).map(|c| mesh.divergence_row(c / n1, c % n1)).collect();
        mesh.rows = mesh.energy_rows();
        Ok(mesh)
    }

    pub fn cells_per_slice(&self) -> usize {
        self.n[0] * self.n[1]
    }

    pub fn cell_count(&self) -> usize {
        self.cells_per_slice() * self.n[2]
    }

    pub fn unknowns(&self) -> usize {
        self.ns * self.n[2]
    }

    /// Grid node index of slice cell `c` in azimuthal plane `k`.
    pub fn grid_index(&self, c: usize, k: usize) -> usize {
        let (i, j) = (c / self.n[1], c % self.n[1]);
        match self.coords {
            CoordSystem::Spherical => self.grid.index(i, j, k),
            CoordSystem::Cylindrical => self.grid.index(i, k, j),
        }
    }

    pub fn component(&self, s: usize) -> Component {
        if s < self.off1 {
            Component::Radial
        } else if s < self.offt {
            Component::Second
        } else {
            Component::Azimuthal
        }
    }

    fn u0(&self, f0: isize, j: isize) -> Option<u32> {
        let [n0, n1, _] = self.n;
        (f0 >= 1 && (f0 as usize) < n0 && j >= 0 && (j as usize) < n1)
            .then(|| ((f0 as usize - 1) * n1 + j as usize) as u32)
    }

    fn u1(&self, i: isize, f1: isize) -> Option<u32> {
        let n0 = self.n[0];
        let lo = self.f1_lo as isize;
        (i >= 0 && (i as usize) < n0 && f1 >= lo && f1 < lo + self.n1u as isize)
            .then(|| (self.off1 + i as usize * self.n1u + (f1 - lo) as usize) as u32)
    }

    fn ut(&self, i: isize, j: isize) -> Option<u32> {
        let [n0, n1, _] = self.n;
        (i >= 0 && (i as usize) < n0 && j >= 0 && (j as usize) < n1)
            .then(|| (self.offt + i as usize * n1 + j as usize) as u32)
    }

    fn axes(&self) -> (&crate::geometry::Axis, &crate::geometry::Axis) {
        (&self.grid.axes[0], &self.grid.axes[self.coords.second_axis()])
    }

    /// Scale factors `(h0, h1, ht)` and the derivatives
    /// `(d0 h1, d0 ht, d1 ht)` at slice point `(q0, q1)`.
    fn metric(&self, q0: f64, q1: f64) -> ([f64; 3], [f64; 3]) {
        match self.coords {
            CoordSystem::Spherical => ([1.0, q0, q0 * q1.sin()], [1.0, q1.sin(), q0 * q1.cos()]),
            CoordSystem::Cylindrical => ([1.0, 1.0, q0], [0.0, 1.0, 0.0]),
        }
    }

    fn radial_face_area(&self, f0: usize, j: usize) -> f64 {
        let (a0, a1) = self.axes();
        let r = a0.faces[f0];
        match self.coords {
            CoordSystem::Spherical => r * r * (a1.faces[j].cos() - a1.faces[j + 1].cos()) * self.dtheta,
            CoordSystem::Cylindrical => r * a1.width(j) * self.dtheta,
        }
    }

    fn second_face_area(&self, i: usize, f1: usize) -> f64 {
        let (a0, a1) = self.axes();
        let ring = 0.5 * (a0.faces[i + 1].powi(2) - a0.faces[i].powi(2));
        match self.coords {
            CoordSystem::Spherical => ring * a1.faces[f1].sin() * self.dtheta,
            CoordSystem::Cylindrical => ring * self.dtheta,
        }
    }

    fn azimuthal_face_area(&self, i: usize, j: usize) -> f64 {
        let (a0, a1) = self.axes();
        match self.coords {
            CoordSystem::Spherical => 0.5 * (a0.faces[i + 1].powi(2) - a0.faces[i].powi(2)) * a1.width(j),
            CoordSystem::Cylindrical => a0.width(i) * a1.width(j),
        }
    }

    fn divergence_row(&self, i: usize, j: usize) -> Vec<Term> {
        let (ii, jj) = (i as isize, j as isize);
        let mut t = Vec::with_capacity(6);
        let mut push = |s: Option<u32>, dk: i8, c: f64| {
            if let Some(s) = s {
                t.push(Term { s, dk, c });
            }
        };
        push(self.u0(ii + 1, jj), 0, self.radial_face_area(i + 1, j));
        push(self.u0(ii, jj), 0, -self.radial_face_area(i, j));
        push(self.u1(ii, jj + 1), 0, self.second_face_area(i, j + 1));
        push(self.u1(ii, jj), 0, -self.second_face_area(i, j));
        let at = self.azimuthal_face_area(i, j);
        push(self.ut(ii, jj), 1, at);
        push(self.ut(ii, jj), -1, -at);
        t.retain(|x| x.c != 0.0);
        t
    }

    fn energy_rows(&self) -> Vec<Row> {
        let [n0, n1, _] = self.n;
        let (a0, a1) = self.axes();
        let dt = self.dtheta;
        let mut rows = Vec::new();
        let mut emit = |terms: Vec<(Option<u32>, i8, f64)>, weight: f64, half: bool, cells: &[(u32, i8, f64)]| {
            let terms: Vec<Term> =
                terms.into_iter().filter_map(|(s, dk, c)| s.filter(|_| c != 0.0).map(|s| Term { s, dk, c })).collect();
            if !terms.is_empty() && weight > 0.0 {
                rows.push(Row { terms, weight, half, cells: cells.to_vec() });
            }
        };
        let cell = |i: isize, j: isize| -> Option<u32> {
            (i >= 0 && (i as usize) < n0 && j >= 0 && (j as usize) < n1).then(|| (i as usize * n1 + j as usize) as u32)
        };
        let pole_face = |f1: usize| (f1 == 0 && is_pole(a1.ends[0])) || (f1 == n1 && is_pole(a1.ends[1]));

        // Diagonal components at cell centers.
        for i in 0..n0 {
            for j in 0..n1 {
                let (ii, jj) = (i as isize, j as isize);
                let c = (i * n1 + j) as u32;
                let (h, d) = self.metric(a0.nodes[i], a1.nodes[j]);
                let w = self.cell_volume[c as usize];
                let (w0, w1) = (a0.width(i), a1.width(j));
                let here = [(c, 0i8, 1.0)];
                let (in0, out0) = (self.u0(ii, jj), self.u0(ii + 1, jj));
                let (in1, out1) = (self.u1(ii, jj), self.u1(ii, jj + 1));
                emit(vec![(out0, 0, 1.0 / w0), (in0, 0, -1.0 / w0)], w, false, &here);
                emit(
                    vec![
                        (out1, 0, 1.0 / (h[1] * w1)),
                        (in1, 0, -1.0 / (h[1] * w1)),
                        (in0, 0, 0.5 * d[0] / h[1]),
                        (out0, 0, 0.5 * d[0] / h[1]),
                    ],
                    w,
                    false,
                    &here,
                );
                let t = self.ut(ii, jj);
                emit(
                    vec![
                        (t, 1, 1.0 / (h[2] * dt)),
                        (t, -1, -1.0 / (h[2] * dt)),
                        (in0, 0, 0.5 * d[1] / h[2]),
                        (out0, 0, 0.5 * d[1] / h[2]),
                        (in1, 0, 0.5 * d[2] / (h[2] * h[1])),
                        (out1, 0, 0.5 * d[2] / (h[2] * h[1])),
                    ],
                    w,
                    false,
                    &here,
                );
            }
        }

        // Meridional shear at edges between radial and second-axis faces.
        for f0 in 0..=n0 {
            for f1 in 0..=n1 {
                if pole_face(f1) {
                    continue;
                }
                let (q0, q1) = (a0.faces[f0], a1.faces[f1]);
                let (h, d) = self.metric(q0, q1);
                let (g0, g1) = (a0.dual_width(f0), a1.dual_width(f1));
                let w = h[0] * h[1] * h[2] * g0 * g1 * dt;
                let (i, j) = (f0 as isize, f1 as isize);
                let near: Vec<u32> =
                    [(i - 1, j - 1), (i - 1, j), (i, j - 1), (i, j)].iter().filter_map(|&(a, b)| cell(a, b)).collect();
                let cells: Vec<_> = near.iter().map(|&c| (c, 0i8, 1.0 / near.len() as f64)).collect();
                let interior = f0 > 0 && f0 < n0;
                let avg = if interior { 0.5 } else { 0.0 };
                emit(
                    vec![
                        (self.u0(i, j), 0, 1.0 / (h[1] * g1)),
                        (self.u0(i, j - 1), 0, -1.0 / (h[1] * g1)),
                        (self.u1(i - 1, j), 0, -avg * d[0] / h[1]),
                        (self.u1(i, j), 0, -avg * d[0] / h[1]),
                    ],
                    w,
                    false,
                    &cells,
                );
                emit(vec![(self.u1(i, j), 0, 1.0 / g0), (self.u1(i - 1, j), 0, -1.0 / g0)], w, false, &cells);
            }
        }

        // Radial-azimuthal shear at half-integer azimuthal positions.
        for f0 in 0..=n0 {
            for j in 0..n1 {
                let (h, d) = self.metric(a0.faces[f0], a1.nodes[j]);
                let g0 = a0.dual_width(f0);
                let w = h[0] * h[1] * h[2] * g0 * a1.width(j) * dt;
                let (i, jj) = (f0 as isize, j as isize);
                let near: Vec<u32> = [i - 1, i].iter().filter_map(|&a| cell(a, jj)).collect();
                let share = 1.0 / (2 * near.len()) as f64;
                let cells: Vec<_> = near.iter().flat_map(|&c| [(c, -1i8, share), (c, 1i8, share)]).collect();
                let avg = if f0 > 0 && f0 < n0 { 0.5 } else { 0.0 };
                emit(
                    vec![
                        (self.u0(i, jj), 1, 1.0 / (h[2] * dt)),
                        (self.u0(i, jj), -1, -1.0 / (h[2] * dt)),
                        (self.ut(i - 1, jj), 0, -avg * d[1] / h[2]),
                        (self.ut(i, jj), 0, -avg * d[1] / h[2]),
                    ],
                    w,
                    true,
                    &cells,
                );
                emit(vec![(self.ut(i, jj), 0, 1.0 / g0), (self.ut(i - 1, jj), 0, -1.0 / g0)], w, true, &cells);
            }
        }

        // Second-axis/azimuthal shear at half-integer azimuthal positions.
        for i in 0..n0 {
            for f1 in 0..=n1 {
                if pole_face(f1) {
                    continue;
                }
                let (h, d) = self.metric(a0.nodes[i], a1.faces[f1]);
                let g1 = a1.dual_width(f1);
                let w = h[0] * h[1] * h[2] * a0.width(i) * g1 * dt;
                let (ii, j) = (i as isize, f1 as isize);
                let near: Vec<u32> = [j - 1, j].iter().filter_map(|&b| cell(ii, b)).collect();
                let share = 1.0 / (2 * near.len()) as f64;
                let cells: Vec<_> = near.iter().flat_map(|&c| [(c, -1i8, share), (c, 1i8, share)]).collect();
                let avg = if f1 > 0 && f1 < n1 { 0.5 } else { 0.0 };
                emit(
                    vec![
                        (self.u1(ii, j), 1, 1.0 / (h[2] * dt)),
                        (self.u1(ii, j), -1, -1.0 / (h[2] * dt)),
                        (self.ut(ii, j - 1), 0, -avg * d[2] / (h[1] * h[2])),
                        (self.ut(ii, j), 0, -avg * d[2] / (h[1] * h[2])),
                    ],
                    w,
                    true,
                    &cells,
                );
                emit(
                    vec![(self.ut(ii, j), 0, 1.0 / (h[1] * g1)), (self.ut(ii, j - 1), 0, -1.0 / (h[1] * g1))],
                    w,
                    true,
                    &cells,
                );
            }
        }
        rows
    }

    /// Global unknown index of `term` for a row at half-step position `pos`.
    #[inline]
    pub(crate) fn global(&self, pos: i64, term: &Term) -> usize {
        let at = pos + term.dk as i64;
        let plane = if self.component(term.s as usize) == Component::Azimuthal { (at - 1) / 2 } else { at / 2 };
        plane.rem_euclid(self.n[2] as i64) as usize * self.ns + term.s as usize
    }

    /// Global cell index (slice-major within each plane) for a row cell entry.
    #[inline]
    pub(crate) fn global_cell(&self, pos: i64, c: u32, dk: i8) -> usize {
        let plane = (pos + dk as i64).div_euclid(2).rem_euclid(self.n[2] as i64) as usize;
        plane * self.cells_per_slice() + c as usize
    }

    #[inline]
    pub(crate) fn row_pos(k: usize, half: bool) -> i64 {
        2 * k as i64 + half as i64
    }

    fn eval(&self, terms: &[Term], pos: i64, data: &[f64]) -> f64 {
        terms.iter().map(|t| t.c * data[self.global(pos, t)]).sum()
    }

    /// Net outward flux of every cell, indexed plane-major.
    pub fn flux(&self, data: &[f64]) -> Vec<f64> {
        let nc = self.cells_per_slice();
        let mut out = vec![0.0; self.cell_count()];
        for k in 0..self.n[2] {
            for c in 0..nc {
                out[k * nc + c] = self.eval(&self.div_rows[c], Self::row_pos(k, false), data);
            }
        }
        out
    }

    /// Plane-major cell values to grid order.
    pub fn to_grid_order(&self, cells: &[f64]) -> Vec<f64> {
        let nc = self.cells_per_slice();
        let mut out = vec![0.0; cells.len()];
        for k in 0..self.n[2] {
            for c in 0..nc {
                out[self.grid_index(c, k)] = cells[k * nc + c];
            }
        }
        out
    }

    /// Grid-order values to plane-major cell order.
    pub fn from_grid_order(&self, values: &[f64]) -> Vec<f64> {
        let nc = self.cells_per_slice();
        let mut out = vec![0.0; values.len()];
        for k in 0..self.n[2] {
            for c in 0..nc {
                out[k * nc + c] = values[self.grid_index(c, k)];
            }
        }
        out
    }

    /// Volume of the plane-major cell `g`.
    #[inline]
    pub fn volume(&self, g: usize) -> f64 {
        self.cell_volume[g % self.cells_per_slice()]
    }

    /// Total gradient energy `sum weight * row^2`.
    pub fn energy(&self, data: &[f64]) -> f64 {
        let mut e = 0.0;
        for k in 0..self.n[2] {
            for row in &self.rows {
                let g = self.eval(&row.terms, Self::row_pos(k, row.half), data);
                e += row.weight * g * g;
            }
        }
        e
    }

    /// Cellwise `|grad v|^2` (plane-major); edge samples are split among
    /// their neighbouring cells so that `sum V_c s_c` equals the energy.
    pub fn pointwise_sq(&self, data: &[f64]) -> Vec<f64> {
        let mut acc = vec![0.0; self.cell_count()];
        for k in 0..self.n[2] {
            for row in &self.rows {
                let pos = Self::row_pos(k, row.half);
                let g = self.eval(&row.terms, pos, data);
                let e = row.weight * g * g;
                for &(c, dk, share) in &row.cells {
                    acc[self.global_cell(pos, c, dk)] += share * e;
                }
            }
        }
        for (g, a) in acc.iter_mut().enumerate() {
            *a /= self.volume(g);
        }
        acc
    }

    /// `(sum V_c |grad v|_c^q)^(1/q)`.
    pub fn grad_norm(&self, data: &[f64], q: f64) -> f64 {
        if q == 2.0 {
            return self.energy(data).max(0.0).sqrt();
        }
        let s = self.pointwise_sq(data);
        s.iter().enumerate().map(|(g, x)| self.volume(g) * x.max(0.0).powf(q / 2.0)).sum::<f64>().powf(1.0 / q)
    }

    /// Quadrature `L^q` norm of plane-major cell values.
    pub fn cell_norm(&self, values: &[f64], q: f64) -> f64 {
        values.iter().enumerate().map(|(g, x)| self.volume(g) * x.abs().powf(q)).sum::<f64>().powf(1.0 / q)
    }

    /// Node field with face values averaged to cell centers.
    pub fn to_field(&self, data: &[f64]) -> Field {
        let [n0, n1, nt] = self.n;
        let mut out = vec![0.0; 3 * self.grid.len()];
        let val = |s: Option<u32>, plane: usize| s.map_or(0.0, |s| data[plane * self.ns + s as usize]);
        for k in 0..nt {
            let prev = (k + nt - 1) % nt;
            for i in 0..n0 {
                for j in 0..n1 {
                    let (ii, jj) = (i as isize, j as isize);
                    let v0 = 0.5 * (val(self.u0(ii, jj), k) + val(self.u0(ii + 1, jj), k));
                    let v1 = 0.5 * (val(self.u1(ii, jj), k) + val(self.u1(ii, jj + 1), k));
                    let vt = 0.5 * (val(self.ut(ii, jj), k) + val(self.ut(ii, jj), prev));
                    let frame = match self.coords {
                        CoordSystem::Spherical => [v0, v1, vt],
                        CoordSystem::Cylindrical => [v0, vt, v1],
                    };
                    let g = self.grid_index(i * n1 + j, k);
                    out[3 * g..3 * g + 3].copy_from_slice(&frame);
                }
            }
        }
        Field { grid: self.grid.clone(), rank: Rank::Vector, data: out }
    }

    /// Samples frame components of a smooth field at the face positions.
    /// `f` receives adapted coordinates in grid axis order.
    pub fn sample<F: Fn([f64; 3]) -> [f64; 3]>(&self, f: F) -> Vec<f64> {
        let [n0, n1, nt] = self.n;
        let (a0, a1) = self.axes();
        let at = &self.grid.axes[self.coords.theta_axis()];
        let point = |q0: f64, q1: f64, th: f64| match self.coords {
            CoordSystem::Spherical => [q0, q1, th],
            CoordSystem::Cylindrical => [q0, th, q1],
        };
        let (second, theta) = match self.coords {
            CoordSystem::Spherical => (1, 2),
            CoordSystem::Cylindrical => (2, 1),
        };
        let mut data = vec![0.0; self.unknowns()];
        for k in 0..nt {
            let th = at.nodes[k];
            let th_half = at.faces[k + 1];
            let base = k * self.ns;
            for f0 in 1..n0 {
                for j in 0..n1 {
                    let s = self.u0(f0 as isize, j as isize).expect("interior face") as usize;
                    data[base + s] = f(point(a0.faces[f0], a1.nodes[j], th))[0];
                }
            }
            for i in 0..n0 {
                for f1 in self.f1_lo..self.f1_lo + self.n1u {
                    let s = self.u1(i as isize, f1 as isize).expect("stored face") as usize;
                    data[base + s] = f(point(a0.nodes[i], a1.faces[f1], th))[second];
                }
                for j in 0..n1 {
                    let s = self.ut(i as isize, j as isize).expect("cell") as usize;
                    data[base + s] = f(point(a0.nodes[i], a1.nodes[j], th_half))[theta];
                }
            }
        }
        data
    }

    /// Component and slice point `(q0, q1)` of every unknown of a plane.
    pub fn positions(&self) -> Vec<(Component, [f64; 2])> {
        let [n0, n1, _] = self.n;
        let (a0, a1) = self.axes();
        let mut out = vec![(Component::Radial, [0.0; 2]); self.ns];
        for f0 in 1..n0 {
            for j in 0..n1 {
                out[self.u0(f0 as isize, j as isize).expect("face") as usize] =
                    (Component::Radial, [a0.faces[f0], a1.nodes[j]]);
            }
        }
        for i in 0..n0 {
            for f1 in self.f1_lo..self.f1_lo + self.n1u {
                out[self.u1(i as isize, f1 as isize).expect("face") as usize] =
                    (Component::Second, [a0.nodes[i], a1.faces[f1]]);
            }
            for j in 0..n1 {
                out[self.ut(i as isize, j as isize).expect("cell") as usize] =
                    (Component::Azimuthal, [a0.nodes[i], a1.nodes[j]]);
            }
        }
        out
    }
}

/// Face-located vector field on a [`Mesh`]: plane-major, `ns` unknowns per plane.
#[derive(Debug, Clone)]
pub struct FaceField {
    pub mesh: Arc<Mesh>,
    pub data: Vec<f64>,
}

impl FaceField {
    pub fn zeros(mesh: Arc<Mesh>) -> Self {
        let n = mesh.unknowns();
        Self { mesh, data: vec![0.0; n] }
    }

    pub fn from_fn<F: Fn([f64; 3]) -> [f64; 3]>(mesh: Arc<Mesh>, f: F) -> Self {
        let data = mesh.sample(f);
        Self { mesh, data }
    }

    /// Discrete divergence as a scalar field on the grid.
    pub fn divergence(&self) -> Field {
        let flux = self.mesh.flux(&self.data);
        let div: Vec<f64> = flux.iter().enumerate().map(|(g, x)| x / self.mesh.volume(g)).collect();
        Field { grid: self.mesh.grid.clone(), rank: Rank::Scalar, data: self.mesh.to_grid_order(&div) }
    }

    pub fn energy(&self) -> f64 {
        self.mesh.energy(&self.data)
    }

    pub fn grad_norm(&self, q: f64) -> f64 {
        self.mesh.grad_norm(&self.data, q)
    }

    /// Cellwise `|grad v|` as a grid field.
    pub fn gradient_magnitude(&self) -> Field {
        let s: Vec<f64> = self.mesh.pointwise_sq(&self.data).iter().map(|x| x.max(0.0).sqrt()).collect();
        Field { grid: self.mesh.grid.clone(), rank: Rank::Scalar, data: self.mesh.to_grid_order(&s) }
    }

    pub fn to_field(&self) -> Field {
        self.mesh.to_field(&self.data)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}
