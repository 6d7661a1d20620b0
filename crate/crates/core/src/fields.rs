//! Node-sampled scalar and frame-component vector fields with finite
//! difference calculus and quadrature norms.

use crate::error::{Error, Result};
use crate::geometry::{Axis, CoordSystem, Grid};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Rank {
    Scalar,
    Vector,
}

impl Rank {
    pub fn components(self) -> usize {
        match self {
            Rank::Scalar => 1,
            Rank::Vector => 3,
        }
    }
}

/// Samples at the grid nodes; vectors are interleaved per node in the local
/// orthonormal frame of the grid's coordinate system.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub grid: Arc<Grid>,
    pub rank: Rank,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormReport {
    pub q: f64,
    pub value: f64,
    pub resolution: String,
}

impl Field {
    pub fn new(grid: Arc<Grid>, rank: Rank, data: Vec<f64>) -> Result<Self> {
        let want = grid.len() * rank.components();
        if data.len() != want {
            return Err(Error::DomainMismatch(format!("expected {want} values, got {}", data.len())));
        }
        if let Some(bad) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::DomainMismatch(format!("non-finite value at position {bad}")));
        }
        Ok(Self { grid, rank, data })
    }

    pub fn zeros(grid: Arc<Grid>, rank: Rank) -> Self {
        let n = grid.len() * rank.components();
        Self { grid, rank, data: vec![0.0; n] }
    }

    /// Scalar field from a function of the Cartesian position.
    pub fn scalar_fn<F: Fn([f64; 3]) -> f64>(grid: Arc<Grid>, f: F) -> Self {
        let data = (0..grid.len()).map(|i| f(grid.cartesian(i))).collect();
        Self { grid, rank: Rank::Scalar, data }
    }

    /// Scalar field from a function of the adapted coordinates.
    pub fn scalar_coords<F: Fn([f64; 3]) -> f64>(grid: Arc<Grid>, f: F) -> Self {
        let data = (0..grid.len()).map(|i| f(grid.node(i))).collect();
        Self { grid, rank: Rank::Scalar, data }
    }

    /// Vector field from Cartesian components of a function of the Cartesian position.
    pub fn vector_cartesian<F: Fn([f64; 3]) -> [f64; 3]>(grid: Arc<Grid>, f: F) -> Self {
        let mut data = Vec::with_capacity(3 * grid.len());
        for i in 0..grid.len() {
            let c = grid.node(i);
            let e = grid.coords.frame(c);
            let v = f(grid.coords.to_cartesian(c));
            for row in &e {
                data.push(row[0] * v[0] + row[1] * v[1] + row[2] * v[2]);
            }
        }
        Self { grid, rank: Rank::Vector, data }
    }

    /// Vector field from frame components given as a function of the adapted coordinates.
    pub fn vector_frame<F: Fn([f64; 3]) -> [f64; 3]>(grid: Arc<Grid>, f: F) -> Self {
        let data = (0..grid.len()).flat_map(|i| f(grid.node(i))).collect();
        Self { grid, rank: Rank::Vector, data }
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn value(&self, idx: usize) -> f64 {
        self.data[idx]
    }

    pub fn frame_vector(&self, idx: usize) -> [f64; 3] {
        [self.data[3 * idx], self.data[3 * idx + 1], self.data[3 * idx + 2]]
    }

    pub fn cartesian_vector(&self, idx: usize) -> [f64; 3] {
        let v = self.frame_vector(idx);
        let e = self.grid.coords.frame(self.grid.node(idx));
        [0, 1, 2].map(|c| v[0] * e[0][c] + v[1] * e[1][c] + v[2] * e[2][c])
    }

    /// Pointwise magnitude (absolute value or Euclidean length).
    pub fn magnitude(&self, idx: usize) -> f64 {
        match self.rank {
            Rank::Scalar => self.data[idx].abs(),
            Rank::Vector => {
                let v = self.frame_vector(idx);
                (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
            }
        }
    }

    fn require(&self, rank: Rank) -> Result<()> {
        if self.rank != rank {
            return Err(Error::DomainMismatch(format!("expected a {rank:?} field")));
        }
        Ok(())
    }

    pub fn scale(&self, s: f64) -> Field {
        Field { grid: self.grid.clone(), rank: self.rank, data: self.data.iter().map(|x| x * s).collect() }
    }

    /// `self + s * other` on the same grid.
    pub fn axpy(&self, s: f64, other: &Field) -> Result<Field> {
        if self.rank != other.rank || self.grid.len() != other.grid.len() {
            return Err(Error::DomainMismatch("fields live on different grids".into()));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + s * b).collect();
        Ok(Field { grid: self.grid.clone(), rank: self.rank, data })
    }

    /// Weighted integral of a scalar field.
    pub fn integral(&self) -> f64 {
        debug_assert_eq!(self.rank, Rank::Scalar);
        self.grid.weights.iter().zip(&self.data).map(|(w, f)| w * f).sum()
    }

    /// Weighted integral of `|f|`.
    pub fn l1(&self) -> f64 {
        (0..self.len()).map(|i| self.grid.weights[i] * self.magnitude(i)).sum()
    }

    pub fn mean(&self) -> f64 {
        self.integral() / self.grid.total_weight()
    }

    /// Writes `<base>.bin` (little-endian f64) and the sidecar `<base>.json`.
    pub fn write(&self, base: &Path) -> Result<()> {
        let bytes: Vec<u8> = self.data.iter().flat_map(|x| x.to_le_bytes()).collect();
        fs::write(base.with_extension("bin"), bytes)?;
        let side = Sidecar { grid_hash: self.grid.hash_hex(), rank: self.rank, component_order: component_order(self) };
        fs::write(base.with_extension("json"), serde_json::to_string_pretty(&side)?)?;
        Ok(())
    }

    /// Reads a field written by [`Field::write`], checking it belongs to `grid`.
    pub fn read(base: &Path, grid: Arc<Grid>) -> Result<Field> {
        let side: Sidecar = serde_json::from_str(&fs::read_to_string(base.with_extension("json"))?)?;
        if side.grid_hash != grid.hash_hex() {
            return Err(Error::DomainMismatch("grid hash differs from sidecar".into()));
        }
        let bytes = fs::read(base.with_extension("bin"))?;
        if bytes.len() % 8 != 0 {
            return Err(Error::Io("truncated field payload".into()));
        }
        let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        Field::new(grid, side.rank, data)
    }
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    grid_hash: String,
    rank: Rank,
    component_order: Vec<String>,
}

fn component_order(f: &Field) -> Vec<String> {
    let names: &[&str] = match (f.rank, f.grid.coords) {
        (Rank::Scalar, _) => &["value"],
        (Rank::Vector, CoordSystem::Spherical) => &["rho", "phi", "theta"],
        (Rank::Vector, CoordSystem::Cylindrical) => &["r", "theta", "z"],
    };
    names.iter().map(|s| s.to_string()).collect()
}

fn check_q(q: f64) -> Result<()> {
    if q.is_finite() && q >= 1.0 {
        Ok(())
    } else {
        Err(Error::QOutOfRange(q))
    }
}

/// `(sum_i w_i |f_i|^q)^(1/q)` with the grid's quadrature weights.
pub fn lq_norm(f: &Field, q: f64) -> Result<NormReport> {
    lq_norm_where(f, q, |_| true)
}

/// L^q norm restricted to nodes whose Cartesian position satisfies `inside`.
pub fn lq_norm_where<P: Fn([f64; 3]) -> bool>(f: &Field, q: f64, inside: P) -> Result<NormReport> {
    check_q(q)?;
    let g = &f.grid;
    let sum: f64 = (0..f.len())
        .filter(|&i| inside(g.cartesian(i)))
        .map(|i| g.weights[i] * f.magnitude(i).powf(q))
        .sum();
    Ok(NormReport { q, value: sum.powf(1.0 / q), resolution: g.resolution_tag() })
}

/// Subtracts the weighted mean.
pub fn mean_zero_project(f: &Field) -> Result<Field> {
    f.require(Rank::Scalar)?;
    let m = f.mean();
    Ok(Field { grid: f.grid.clone(), rank: Rank::Scalar, data: f.data.iter().map(|x| x - m).collect() })
}

/// Derivative weights of the quadratic through `(p0, p1, p2)` evaluated at `x`.
fn lagrange_slope(p: [f64; 3], x: f64) -> [f64; 3] {
    let mut w = [0.0; 3];
    for j in 0..3 {
        let denom: f64 = (0..3).filter(|&l| l != j).map(|l| p[j] - p[l]).product();
        let mut num = 0.0;
        for m in (0..3).filter(|&m| m != j) {
            num += (0..3).filter(|&l| l != j && l != m).map(|l| x - p[l]).product::<f64>();
        }
        w[j] = num / denom;
    }
    w
}

/// Derivative of `values` (a node array of the whole grid) along `axis`.
fn partial(grid: &Grid, values: &[f64], axis: usize) -> Vec<f64> {
    let n = grid.shape();
    let ax: &Axis = &grid.axes[axis];
    let len = n[axis];
    let stride = match axis {
        0 => n[1] * n[2],
        1 => n[2],
        _ => 1,
    };
    let mut out = vec![0.0; values.len()];
    for (idx, slot) in out.iter_mut().enumerate() {
        let pos = grid.unindex(idx)[axis];
        let base = idx - pos * stride;
        let at = |p: usize| values[base + p * stride];
        *slot = if ax.periodic() {
            let h = ax.width(0);
            (at((pos + 1) % len) - at((pos + len - 1) % len)) / (2.0 * h)
        } else if len == 2 {
            (at(1) - at(0)) / (ax.nodes[1] - ax.nodes[0])
        } else {
            let s = pos.clamp(1, len - 2) - 1;
            let w = lagrange_slope([ax.nodes[s], ax.nodes[s + 1], ax.nodes[s + 2]], ax.nodes[pos]);
            w[0] * at(s) + w[1] * at(s + 1) + w[2] * at(s + 2)
        };
    }
    out
}

/// Divergence from the frame formulas; `frame` must match the grid.
pub fn divergence(v: &Field, frame: CoordSystem) -> Result<Field> {
    v.require(Rank::Vector)?;
    let g = &*v.grid;
    if g.coords != frame {
        return Err(Error::FrameMismatch(format!("field is {:?}, requested {:?}", g.coords, frame)));
    }
    let n = g.len();
    let comp = |c: usize, w: &dyn Fn([f64; 3]) -> f64| -> Vec<f64> {
        (0..n).map(|i| w(g.node(i)) * v.data[3 * i + c]).collect()
    };
    let data: Vec<f64> = match frame {
        CoordSystem::Spherical => {
            let d0 = partial(g, &comp(0, &|x| x[0] * x[0]), 0);
            let d1 = partial(g, &comp(1, &|x| x[1].sin()), 1);
            let d2 = partial(g, &comp(2, &|_| 1.0), 2);
            (0..n)
                .map(|i| {
                    let x = g.node(i);
                    let rs = x[0] * x[1].sin();
                    d0[i] / (x[0] * x[0]) + (d1[i] + d2[i]) / rs
                })
                .collect()
        }
        CoordSystem::Cylindrical => {
            let d0 = partial(g, &comp(0, &|x| x[0]), 0);
            let d1 = partial(g, &comp(1, &|_| 1.0), 1);
            let d2 = partial(g, &comp(2, &|_| 1.0), 2);
            (0..n).map(|i| (d0[i] + d1[i]) / g.node(i)[0] + d2[i]).collect()
        }
    };
    Field::new(v.grid.clone(), Rank::Scalar, data)
}

/// Cartesian gradient `G[c][j] = d v_c / d x_j` at every node.
pub fn cartesian_gradient(v: &Field) -> Result<Vec<[[f64; 3]; 3]>> {
    v.require(Rank::Vector)?;
    let g = &*v.grid;
    let n = g.len();
    let cart: Vec<[f64; 3]> = (0..n).map(|i| v.cartesian_vector(i)).collect();
    let mut d = [[vec![], vec![], vec![]], [vec![], vec![], vec![]], [vec![], vec![], vec![]]];
    for c in 0..3 {
        let comp: Vec<f64> = cart.iter().map(|x| x[c]).collect();
        for a in 0..3 {
            d[c][a] = partial(g, &comp, a);
        }
    }
    Ok((0..n)
        .map(|i| {
            let x = g.node(i);
            let e = g.coords.frame(x);
            let h = g.coords.scale_factors(x);
            let mut out = [[0.0; 3]; 3];
            for (c, row) in out.iter_mut().enumerate() {
                for (j, slot) in row.iter_mut().enumerate() {
                    *slot = (0..3).map(|a| e[a][j] / h[a] * d[c][a][i]).sum();
                }
            }
            out
        })
        .collect())
}

/// Pointwise Frobenius norm `|grad v|` (not squared).
pub fn gradient_frobenius(v: &Field) -> Result<Field> {
    let grads = cartesian_gradient(v)?;
    let data = grads.iter().map(|m| m.iter().flatten().map(|x| x * x).sum::<f64>().sqrt()).collect();
    Field::new(v.grid.clone(), Rank::Scalar, data)
}

/// `||grad v||_q` via [`gradient_frobenius`].
pub fn gradient_lq_norm(v: &Field, q: f64) -> Result<f64> {
    Ok(lq_norm(&gradient_frobenius(v)?, q)?.value)
}
