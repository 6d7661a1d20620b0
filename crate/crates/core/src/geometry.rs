//! Annulus-like domains, tensor quadrature grids in adapted coordinates and
//! bounded-overlap ball coverings.

use crate::error::{Error, Result};
use crate::exec::Exec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DomainKind {
    Annulus3D,
    HalfAnnulus3D,
    CylinderShell,
    SlabShell,
    Annulus2D,
    ReferenceAnnulus,
    ReferenceHalfAnnulus,
    ReferenceCylShell,
}

impl DomainKind {
    pub const ALL: [DomainKind; 8] = [
        DomainKind::Annulus3D,
        DomainKind::HalfAnnulus3D,
        DomainKind::CylinderShell,
        DomainKind::SlabShell,
        DomainKind::Annulus2D,
        DomainKind::ReferenceAnnulus,
        DomainKind::ReferenceHalfAnnulus,
        DomainKind::ReferenceCylShell,
    ];

    pub fn is_reference(self) -> bool {
        matches!(
            self,
            DomainKind::ReferenceAnnulus | DomainKind::ReferenceHalfAnnulus | DomainKind::ReferenceCylShell
        )
    }

    pub fn coords(self) -> CoordSystem {
        match self {
            DomainKind::Annulus3D
            | DomainKind::HalfAnnulus3D
            | DomainKind::ReferenceAnnulus
            | DomainKind::ReferenceHalfAnnulus => CoordSystem::Spherical,
            _ => CoordSystem::Cylindrical,
        }
    }

    /// Whether the polar range is the upper hemisphere only.
    pub fn is_half(self) -> bool {
        matches!(self, DomainKind::HalfAnnulus3D | DomainKind::ReferenceHalfAnnulus)
    }

    pub fn name(self) -> &'static str {
        match self {
            DomainKind::Annulus3D => "annulus3d",
            DomainKind::HalfAnnulus3D => "halfannulus3d",
            DomainKind::CylinderShell => "cylindershell",
            DomainKind::SlabShell => "slabshell",
            DomainKind::Annulus2D => "annulus2d",
            DomainKind::ReferenceAnnulus => "referenceannulus",
            DomainKind::ReferenceHalfAnnulus => "referencehalfannulus",
            DomainKind::ReferenceCylShell => "referencecylshell",
        }
    }
}

impl fmt::Display for DomainKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DomainKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let key: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_lowercase();
        DomainKind::ALL
            .into_iter()
            .find(|k| k.name() == key)
            .ok_or_else(|| Error::ConfigInvalid { field: "kind".into(), message: format!("unknown domain kind `{s}`") })
    }
}

/// A parametrized annulus-like region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub kind: DomainKind,
    #[serde(rename = "R")]
    pub r: f64,
    #[serde(rename = "L")]
    pub l: f64,
    /// Axial extent for the cylindrical kinds; `None` for spherical kinds.
    pub height: Option<f64>,
}

/// Validates and builds a domain.
pub fn make_domain(kind: DomainKind, r: f64, l: f64) -> Result<DomainSpec> {
    if !(r.is_finite() && r > 0.0) {
        return Err(Error::NonPositiveRadius(r));
    }
    if !(l.is_finite() && l > 1.0) {
        return Err(Error::RatioOutOfRange(l));
    }
    if kind == DomainKind::CylinderShell && l >= 10.0 {
        return Err(Error::RatioOutOfRange(l));
    }
    if kind.is_reference() && (r != 1.0 || l != 2.0) {
        return Err(Error::ReferenceFixed);
    }
    let height = match kind {
        DomainKind::CylinderShell => Some(r),
        DomainKind::SlabShell | DomainKind::Annulus2D | DomainKind::ReferenceCylShell => Some(1.0),
        _ => None,
    };
    Ok(DomainSpec { kind, r, l, height })
}

impl DomainSpec {
    pub fn reference(kind: DomainKind) -> Result<Self> {
        make_domain(kind, 1.0, 2.0)
    }

    pub fn coords(&self) -> CoordSystem {
        self.kind.coords()
    }

    pub fn inner_radius(&self) -> f64 {
        self.r
    }

    pub fn outer_radius(&self) -> f64 {
        self.l * self.r
    }

    /// Closed-form measure (area for `Annulus2D`).
    pub fn volume(&self) -> f64 {
        let (r, l) = (self.r, self.l);
        match self.kind.coords() {
            CoordSystem::Spherical => {
                let full = 4.0 * PI / 3.0 * r.powi(3) * (l.powi(3) - 1.0);
                if self.kind.is_half() { full / 2.0 } else { full }
            }
            CoordSystem::Cylindrical => PI * (l * l - 1.0) * r * r * self.height.unwrap_or(1.0),
        }
    }

    /// The same kind dilated by `s` (all lengths multiplied by `s`).
    pub fn dilate(&self, s: f64) -> Result<Self> {
        match self.kind {
            DomainKind::Annulus3D | DomainKind::HalfAnnulus3D | DomainKind::CylinderShell => {
                make_domain(self.kind, self.r * s, self.l)
            }
            other => Err(Error::DomainMismatch(format!("{other} is not closed under dilation"))),
        }
    }

    /// The physical kind sharing this domain's shape.
    pub fn physical_kind(&self) -> DomainKind {
        match self.kind {
            DomainKind::ReferenceAnnulus => DomainKind::Annulus3D,
            DomainKind::ReferenceHalfAnnulus => DomainKind::HalfAnnulus3D,
            DomainKind::ReferenceCylShell => DomainKind::SlabShell,
            k => k,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CoordSystem {
    /// Axes `(rho, phi, theta)`, frame `(e_rho, e_phi, e_theta)`.
    Spherical,
    /// Axes `(r, theta, z)`, frame `(e_r, e_theta, e_z)`.
    Cylindrical,
}

impl CoordSystem {
    /// Index of the periodic azimuthal axis.
    pub fn theta_axis(self) -> usize {
        match self {
            CoordSystem::Spherical => 2,
            CoordSystem::Cylindrical => 1,
        }
    }

    /// Index of the non-radial, non-periodic axis (polar angle or height).
    pub fn second_axis(self) -> usize {
        match self {
            CoordSystem::Spherical => 1,
            CoordSystem::Cylindrical => 2,
        }
    }

    /// Cartesian position of coordinates `c`.
    pub fn to_cartesian(self, c: [f64; 3]) -> [f64; 3] {
        match self {
            CoordSystem::Spherical => {
                let (r, p, t) = (c[0], c[1], c[2]);
                [r * p.sin() * t.cos(), r * p.sin() * t.sin(), r * p.cos()]
            }
            CoordSystem::Cylindrical => [c[0] * c[1].cos(), c[0] * c[1].sin(), c[2]],
        }
    }

    /// Orthonormal frame at `c`, rows are the Cartesian unit vectors.
    pub fn frame(self, c: [f64; 3]) -> [[f64; 3]; 3] {
        match self {
            CoordSystem::Spherical => {
                let (sp, cp, st, ct) = (c[1].sin(), c[1].cos(), c[2].sin(), c[2].cos());
                [[sp * ct, sp * st, cp], [cp * ct, cp * st, -sp], [-st, ct, 0.0]]
            }
            CoordSystem::Cylindrical => {
                let (st, ct) = (c[1].sin(), c[1].cos());
                [[ct, st, 0.0], [-st, ct, 0.0], [0.0, 0.0, 1.0]]
            }
        }
    }

    /// Lame scale factors `h_a` at `c`.
    pub fn scale_factors(self, c: [f64; 3]) -> [f64; 3] {
        match self {
            CoordSystem::Spherical => [1.0, c[0], c[0] * c[1].sin()],
            CoordSystem::Cylindrical => [1.0, c[0], 1.0],
        }
    }

    /// Exact measure of the coordinate box `lo..hi`.
    pub fn cell_measure(self, lo: [f64; 3], hi: [f64; 3]) -> f64 {
        match self {
            CoordSystem::Spherical => {
                (hi[0].powi(3) - lo[0].powi(3)) / 3.0 * (lo[1].cos() - hi[1].cos()) * (hi[2] - lo[2])
            }
            CoordSystem::Cylindrical => {
                (hi[0] * hi[0] - lo[0] * lo[0]) / 2.0 * (hi[1] - lo[1]) * (hi[2] - lo[2])
            }
        }
    }
}

/// How an axis terminates at one of its ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AxisEnd {
    /// Physical boundary where zero-trace fields vanish.
    Wall,
    /// Coordinate singularity on the symmetry axis (`phi = 0` or `pi`).
    Pole,
    /// Origin of a solid ball or cylinder (`r = 0`).
    Center,
    Periodic,
}

/// One coordinate axis: cell faces and cell-centered nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub faces: Vec<f64>,
    pub nodes: Vec<f64>,
    pub ends: [AxisEnd; 2],
}

impl Axis {
    pub fn uniform(lo: f64, hi: f64, n: usize, ends: [AxisEnd; 2]) -> Self {
        let faces: Vec<f64> = (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect();
        let nodes = (0..n).map(|i| 0.5 * (faces[i] + faces[i + 1])).collect();
        Self { faces, nodes, ends }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn periodic(&self) -> bool {
        self.ends[0] == AxisEnd::Periodic
    }

    pub fn width(&self, i: usize) -> f64 {
        self.faces[i + 1] - self.faces[i]
    }

    pub fn lo(&self) -> f64 {
        self.faces[0]
    }

    pub fn hi(&self) -> f64 {
        *self.faces.last().expect("axis has faces")
    }

    /// Distance between the nodes on either side of face `f`; half cells at the ends.
    pub fn dual_width(&self, f: usize) -> f64 {
        let n = self.len();
        if self.periodic() {
            return self.width(f.min(n - 1));
        }
        match f {
            0 => self.nodes[0] - self.faces[0],
            f if f == n => self.faces[n] - self.nodes[n - 1],
            f => self.nodes[f] - self.nodes[f - 1],
        }
    }
}

/// Tensor-product midpoint quadrature grid in adapted coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub domain: Option<DomainSpec>,
    pub coords: CoordSystem,
    pub axes: [Axis; 3],
    /// Exact measure of each cell, indexed like the nodes.
    pub weights: Vec<f64>,
}

fn check_counts(n: [usize; 3]) -> Result<()> {
    if n.iter().any(|&c| c < 2) {
        return Err(Error::ResolutionTooSmall(format!("{n:?}: every axis needs at least 2 cells")));
    }
    Ok(())
}

/// Builds the uniform grid of `domain` with per-axis cell counts in the
/// coordinate order of its system.
pub fn build_grid(domain: &DomainSpec, resolution: [usize; 3]) -> Result<Grid> {
    check_counts(resolution)?;
    let radial = Axis::uniform(domain.r, domain.outer_radius(), resolution[0], [AxisEnd::Wall; 2]);
    Grid::with_radial_axis(domain, radial, [resolution[1], resolution[2]])
}

impl Grid {
    /// Grid whose radial axis is given explicitly (used for mapped grids).
    pub fn with_radial_axis(domain: &DomainSpec, radial: Axis, rest: [usize; 2]) -> Result<Grid> {
        check_counts([radial.len(), rest[0], rest[1]])?;
        let theta = |n| Axis::uniform(0.0, 2.0 * PI, n, [AxisEnd::Periodic; 2]);
        let axes = match domain.coords() {
            CoordSystem::Spherical => {
                let polar = if domain.kind.is_half() {
                    Axis::uniform(0.0, PI / 2.0, rest[0], [AxisEnd::Pole, AxisEnd::Wall])
                } else {
                    Axis::uniform(0.0, PI, rest[0], [AxisEnd::Pole, AxisEnd::Pole])
                };
                [radial, polar, theta(rest[1])]
            }
            CoordSystem::Cylindrical => {
                let h = domain.height.expect("cylindrical domains carry a height");
                [radial, theta(rest[0]), Axis::uniform(0.0, h, rest[1], [AxisEnd::Wall; 2])]
            }
        };
        Ok(Self::from_axes(Some(*domain), domain.coords(), axes))
    }

    /// Solid ball `|x| < radius`, used for cutoff integrals.
    pub fn ball(radius: f64, resolution: [usize; 3]) -> Result<Grid> {
        check_counts(resolution)?;
        let axes = [
            Axis::uniform(0.0, radius, resolution[0], [AxisEnd::Center, AxisEnd::Wall]),
            Axis::uniform(0.0, PI, resolution[1], [AxisEnd::Pole, AxisEnd::Pole]),
            Axis::uniform(0.0, 2.0 * PI, resolution[2], [AxisEnd::Periodic; 2]),
        ];
        Ok(Self::from_axes(None, CoordSystem::Spherical, axes))
    }

    /// Solid cylinder `|x'| < radius, 0 < x3 < height`.
    pub fn solid_cylinder(radius: f64, height: f64, resolution: [usize; 3]) -> Result<Grid> {
        check_counts(resolution)?;
        let axes = [
            Axis::uniform(0.0, radius, resolution[0], [AxisEnd::Center, AxisEnd::Wall]),
            Axis::uniform(0.0, 2.0 * PI, resolution[1], [AxisEnd::Periodic; 2]),
            Axis::uniform(0.0, height, resolution[2], [AxisEnd::Wall; 2]),
        ];
        Ok(Self::from_axes(None, CoordSystem::Cylindrical, axes))
    }

    pub fn from_axes(domain: Option<DomainSpec>, coords: CoordSystem, axes: [Axis; 3]) -> Grid {
        let n = [axes[0].len(), axes[1].len(), axes[2].len()];
        let mut weights = Vec::with_capacity(n[0] * n[1] * n[2]);
        for i in 0..n[0] {
            for j in 0..n[1] {
                for k in 0..n[2] {
                    let lo = [axes[0].faces[i], axes[1].faces[j], axes[2].faces[k]];
                    let hi = [axes[0].faces[i + 1], axes[1].faces[j + 1], axes[2].faces[k + 1]];
                    weights.push(coords.cell_measure(lo, hi));
                }
            }
        }
        Grid { domain, coords, axes, weights }
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.axes[0].len(), self.axes[1].len(), self.axes[2].len()]
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        let n = self.shape();
        (i * n[1] + j) * n[2] + k
    }

    #[inline]
    pub fn unindex(&self, idx: usize) -> [usize; 3] {
        let n = self.shape();
        [idx / (n[1] * n[2]), (idx / n[2]) % n[1], idx % n[2]]
    }

    /// Adapted coordinates of node `idx`.
    pub fn node(&self, idx: usize) -> [f64; 3] {
        let [i, j, k] = self.unindex(idx);
        [self.axes[0].nodes[i], self.axes[1].nodes[j], self.axes[2].nodes[k]]
    }

    pub fn cartesian(&self, idx: usize) -> [f64; 3] {
        self.coords.to_cartesian(self.node(idx))
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Midpoint-rule integral of a function of the Cartesian position.
    pub fn integrate<F: Fn([f64; 3]) -> f64>(&self, f: F) -> f64 {
        (0..self.len()).map(|i| self.weights[i] * f(self.cartesian(i))).sum()
    }

    /// The same grid with every length multiplied by `s`.
    pub fn dilate(&self, s: f64) -> Result<Grid> {
        let domain = self.domain.map(|d| d.dilate(s)).transpose()?;
        let scale_axis = |a: &Axis, scale: bool| {
            if !scale {
                return a.clone();
            }
            Axis {
                faces: a.faces.iter().map(|x| x * s).collect(),
                nodes: a.nodes.iter().map(|x| x * s).collect(),
                ends: a.ends,
            }
        };
        let lengths = match self.coords {
            CoordSystem::Spherical => [true, false, false],
            CoordSystem::Cylindrical => [true, false, true],
        };
        let axes = [0, 1, 2].map(|a| scale_axis(&self.axes[a], lengths[a]));
        Ok(Grid::from_axes(domain, self.coords, axes))
    }

    /// Short resolution tag such as `16x8x16`.
    pub fn resolution_tag(&self) -> String {
        let n = self.shape();
        format!("{}x{}x{}", n[0], n[1], n[2])
    }

    /// Stable content hash of the grid geometry.
    pub fn hash_hex(&self) -> String {
        let mut h = Sha256::new();
        h.update(format!("{:?}", self.coords).as_bytes());
        if let Some(d) = &self.domain {
            h.update(format!("{}:{}:{}", d.kind, d.r.to_bits(), d.l.to_bits()).as_bytes());
        }
        for axis in &self.axes {
            for x in axis.faces.iter().chain(axis.nodes.iter()) {
                h.update(x.to_le_bytes());
            }
            h.update(format!("{:?}", axis.ends).as_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Ball family covering the target annulus `A1 = {1+2s < |x| < L-2s}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Covering {
    pub domain: DomainSpec,
    pub sigma: f64,
    pub centers: Vec<[f64; 3]>,
    /// Number of leading boundary-attached half-balls (half-annulus only).
    pub n_boundary: usize,
}

#[derive(Serialize, Deserialize)]
struct CoveringDoc {
    kind: DomainKind,
    #[serde(rename = "R")]
    r: f64,
    #[serde(rename = "L")]
    l: f64,
    centers: Vec<[f64; 3]>,
    sigma: f64,
    #[serde(default, skip_serializing_if = "is_zero")]
    n1: usize,
}

fn is_zero(n: &usize) -> bool {
    *n == 0
}

/// Coverage and overlap measurements on a random sample of `A1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoverageStats {
    pub samples: usize,
    pub covered: usize,
    pub max_multiplicity: usize,
    pub mean_multiplicity: f64,
}

impl CoverageStats {
    pub fn fraction(&self) -> f64 {
        self.covered as f64 / self.samples as f64
    }
}

/// Points on the sphere of radius `rho` at spacing about `s`, latitude bands
/// centered in `[0, pi]`.
fn sphere_points(rho: f64, s: f64, out: &mut Vec<[f64; 3]>) {
    let bands = ((PI * rho / s).ceil() as usize).max(1);
    for b in 0..bands {
        let phi = (b as f64 + 0.5) * PI / bands as f64;
        ring_points(rho, phi, s, b % 2 == 1, out);
    }
}

fn ring_points(rho: f64, phi: f64, s: f64, stagger: bool, out: &mut Vec<[f64; 3]>) {
    let ring = rho * phi.sin();
    let count = ((2.0 * PI * ring / s).ceil() as usize).max(1);
    let shift = if stagger { 0.5 } else { 0.0 };
    for m in 0..count {
        let theta = (m as f64 + shift) * 2.0 * PI / count as f64;
        out.push([ring * theta.cos(), ring * theta.sin(), rho * phi.cos()]);
    }
}

fn layers(lo: f64, hi: f64, spacing: f64) -> Vec<f64> {
    let n = ((hi - lo) / spacing - 1e-12).ceil().max(0.0) as usize + 1;
    if n == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Builds the shell-lattice covering with ball radius `sigma`.
pub fn build_covering(domain: &DomainSpec, sigma: f64) -> Result<Covering> {
    if !matches!(domain.kind, DomainKind::Annulus3D | DomainKind::HalfAnnulus3D) || domain.r != 1.0 {
        return Err(Error::DomainMismatch("coverings need Annulus3D or HalfAnnulus3D with R = 1".into()));
    }
    if !(sigma > 0.0 && sigma <= 0.125 && 8.0 * sigma <= domain.l - 1.0 + 1e-12) {
        return Err(Error::SigmaOutOfRange(sigma));
    }
    let (lo, hi) = (1.0 + 2.0 * sigma, domain.l - 2.0 * sigma);
    let mut centers = Vec::new();
    let mut n_boundary = 0;
    if domain.kind.is_half() {
        let s = sigma / 2.0;
        for (i, r) in layers(lo, hi, s).into_iter().enumerate() {
            ring_points(r, PI / 2.0, s, i % 2 == 1, &mut centers);
        }
        for c in centers.iter_mut() {
            c[2] = 0.0;
        }
        n_boundary = centers.len();
        let s = sigma / 4.0;
        for rho in layers(lo, hi, s) {
            let phi_max = (sigma / rho).acos();
            let bands = ((rho * phi_max / s).ceil() as usize).max(1);
            centers.push([0.0, 0.0, rho]);
            for b in 1..=bands {
                ring_points(rho, phi_max * b as f64 / bands as f64, s, b % 2 == 1, &mut centers);
            }
        }
    } else {
        for rho in layers(lo, hi, sigma / 2.0) {
            sphere_points(rho, sigma / 2.0, &mut centers);
        }
    }
    Ok(Covering { domain: *domain, sigma, centers, n_boundary })
}

fn norm3(x: [f64; 3]) -> f64 {
    (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt()
}

fn dist2(a: [f64; 3], b: [f64; 3]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}

/// Spatial hash over ball centers for neighbour queries.
struct CenterIndex {
    cell: f64,
    buckets: HashMap<[i64; 3], Vec<u32>>,
}

impl CenterIndex {
    fn new(centers: &[[f64; 3]], cell: f64) -> Self {
        let mut buckets: HashMap<[i64; 3], Vec<u32>> = HashMap::new();
        for (j, c) in centers.iter().enumerate() {
            buckets.entry(Self::key(*c, cell)).or_default().push(j as u32);
        }
        Self { cell, buckets }
    }

    fn key(x: [f64; 3], cell: f64) -> [i64; 3] {
        x.map(|v| (v / cell).floor() as i64)
    }

    fn for_each_near<F: FnMut(usize)>(&self, x: [f64; 3], mut f: F) {
        let k = Self::key(x, self.cell);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(b) = self.buckets.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) {
                        b.iter().for_each(|&j| f(j as usize));
                    }
                }
            }
        }
    }
}

impl Covering {
    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// Radius of ball `j` in the covering family.
    pub fn radius(&self, j: usize) -> f64 {
        if self.domain.kind.is_half() && j >= self.n_boundary { self.sigma / 2.0 } else { self.sigma }
    }

    /// Radius of the dilated ball `j` that must fit inside the enlarged annulus.
    pub fn dilated_radius(&self, j: usize) -> f64 {
        2.0 * self.radius(j)
    }

    /// Uniform sample of the target annulus `A1`.
    pub fn sample_target(&self, n: usize, seed: u64) -> Vec<[f64; 3]> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (lo, hi) = (1.0 + 2.0 * self.sigma, self.domain.l - 2.0 * self.sigma);
        (0..n)
            .map(|_| {
                let u: f64 = rng.gen();
                let rho = (lo.powi(3) + u * (hi.powi(3) - lo.powi(3))).cbrt();
                let z: f64 = rng.gen_range(-1.0..1.0);
                let t: f64 = rng.gen_range(0.0..2.0 * PI);
                let s = (1.0 - z * z).sqrt();
                let z = if self.domain.kind.is_half() { z.abs() } else { z };
                [rho * s * t.cos(), rho * s * t.sin(), rho * z]
            })
            .collect()
    }

    /// Number of covering balls containing each point.
    pub fn multiplicities(&self, points: &[[f64; 3]], exec: Exec) -> Vec<usize> {
        let index = CenterIndex::new(&self.centers, self.sigma);
        exec.map(points, |&x| {
            let mut count = 0;
            index.for_each_near(x, |j| {
                if dist2(x, self.centers[j]) < self.radius(j).powi(2) {
                    count += 1;
                }
            });
            count
        })
    }

    pub fn coverage_stats(&self, samples: usize, seed: u64, exec: Exec) -> CoverageStats {
        let pts = self.sample_target(samples, seed);
        let mult = self.multiplicities(&pts, exec);
        CoverageStats {
            samples,
            covered: mult.iter().filter(|&&m| m > 0).count(),
            max_multiplicity: mult.iter().copied().max().unwrap_or(0),
            mean_multiplicity: mult.iter().sum::<usize>() as f64 / samples.max(1) as f64,
        }
    }

    /// Smallest signed clearance of the dilated balls from the boundary of
    /// the enlarged annulus, from sampled ball surfaces (nonnegative when contained).
    pub fn containment_margin(&self, exec: Exec) -> f64 {
        let dirs = sphere_directions();
        let half = self.domain.kind.is_half();
        let l = self.domain.l;
        let margins = exec.map_range(self.len(), |j| {
            let c = self.centers[j];
            let r = self.dilated_radius(j);
            let attached = half && j < self.n_boundary;
            let mut m = f64::INFINITY;
            for d in &dirs {
                if attached && d[2] < 0.0 {
                    continue;
                }
                let p = [c[0] + r * d[0], c[1] + r * d[1], c[2] + r * d[2]];
                let rho = norm3(p);
                m = m.min(rho - 1.0).min(l - rho);
                if half {
                    m = m.min(p[2]);
                }
            }
            let exact = (norm3(c) - r - 1.0).min(l - norm3(c) - r);
            let exact = if half && !attached { exact.min(c[2] - r) } else { exact };
            m.min(exact)
        });
        margins.into_iter().fold(f64::INFINITY, f64::min)
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = CoveringDoc {
            kind: self.domain.kind,
            r: self.domain.r,
            l: self.domain.l,
            centers: self.centers.clone(),
            sigma: self.sigma,
            n1: self.n_boundary,
        };
        Ok(serde_json::to_string(&doc)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: CoveringDoc = serde_json::from_str(s)?;
        Ok(Covering {
            domain: make_domain(doc.kind, doc.r, doc.l)?,
            sigma: doc.sigma,
            centers: doc.centers,
            n_boundary: doc.n1,
        })
    }
}

/// Unit directions from a latitude-longitude net plus the six axis points.
fn sphere_directions() -> Vec<[f64; 3]> {
    let mut d = vec![[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, 1.0], [0.0, 0.0, -1.0]];
    for b in 0..6 {
        let phi = (b as f64 + 0.5) * PI / 6.0;
        for m in 0..12 {
            let t = m as f64 * PI / 6.0;
            d.push([phi.sin() * t.cos(), phi.sin() * t.sin(), phi.cos()]);
        }
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn make_domain_examples() {
        let d = make_domain(DomainKind::Annulus3D, 1.0, 2.0).unwrap();
        assert!((d.volume() - 4.0 * PI / 3.0 * 7.0).abs() < 1e-12);
        assert_eq!(make_domain(DomainKind::CylinderShell, 1.0, 1.0), Err(Error::RatioOutOfRange(1.0)));
        assert_eq!(make_domain(DomainKind::CylinderShell, 1.0, 10.0), Err(Error::RatioOutOfRange(10.0)));
        assert_eq!(make_domain(DomainKind::Annulus3D, 0.0, 2.0), Err(Error::NonPositiveRadius(0.0)));
        assert_eq!(make_domain(DomainKind::ReferenceAnnulus, 1.0, 1.5), Err(Error::ReferenceFixed));
        let s = make_domain(DomainKind::SlabShell, 3.0, 2.0).unwrap();
        assert!((s.volume() - 27.0 * PI).abs() < 1e-12);
        assert_eq!(make_domain(DomainKind::CylinderShell, 2.0, 1.5).unwrap().height, Some(2.0));
    }

    #[test]
    fn slab_volume_matches_monte_carlo() {
        let s = make_domain(DomainKind::SlabShell, 3.0, 2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 200_000;
        let hits = (0..n)
            .filter(|_| {
                let x: f64 = rng.gen_range(-6.0..6.0);
                let y: f64 = rng.gen_range(-6.0..6.0);
                let r = (x * x + y * y).sqrt();
                (3.0..6.0).contains(&r)
            })
            .count();
        let mc = 144.0 * hits as f64 / n as f64;
        assert!((mc - s.volume()).abs() / s.volume() < 0.01);
    }

    #[test]
    fn kind_parsing() {
        assert_eq!("annulus3d".parse::<DomainKind>().unwrap(), DomainKind::Annulus3D);
        assert_eq!("Slab-Shell".parse::<DomainKind>().unwrap(), DomainKind::SlabShell);
        assert!("torus".parse::<DomainKind>().is_err());
    }

    #[test]
    fn weights_sum_to_volume() {
        for kind in DomainKind::ALL {
            let d = if kind.is_reference() { DomainSpec::reference(kind).unwrap() } else { make_domain(kind, 1.3, 1.7).unwrap() };
            let g = build_grid(&d, [5, 6, 7]).unwrap();
            assert!((g.total_weight() - d.volume()).abs() / d.volume() < 1e-12, "{kind}");
            assert!(g.weights.iter().all(|&w| w > 0.0));
        }
        let d = make_domain(DomainKind::Annulus3D, 1.0, 2.0).unwrap();
        let g = build_grid(&d, [32, 16, 32]).unwrap();
        assert!((g.total_weight() - 28.0 * PI / 3.0).abs() / (28.0 * PI / 3.0) < 1e-10);
    }

    #[test]
    fn integral_examples() {
        let h = make_domain(DomainKind::HalfAnnulus3D, 1.0, 2.0).unwrap();
        let g = build_grid(&h, [8, 8, 8]).unwrap();
        assert!((g.integrate(|_| 1.0) - 14.0 * PI / 3.0).abs() < 1e-10);
        let r = DomainSpec::reference(DomainKind::ReferenceAnnulus).unwrap();
        // 4 pi (2^5 - 1) / 5 is the second radial moment; the first is 15 pi.
        for (power, exact) in [(1, 15.0 * PI), (2, 124.0 * PI / 5.0)] {
            let errs: Vec<f64> = [8, 16]
                .iter()
                .map(|&n| {
                    let g = build_grid(&r, [n, 8, 8]).unwrap();
                    (g.integrate(|x| norm3(x).powi(power)) - exact).abs() / exact
                })
                .collect();
            assert!(errs[1] < 2e-3, "{errs:?}");
            assert!(errs[0] / errs[1] > 3.5, "{errs:?}");
        }
    }

    #[test]
    fn no_node_on_singularity() {
        let d = make_domain(DomainKind::Annulus3D, 1.0, 2.0).unwrap();
        let g = build_grid(&d, [4, 5, 6]).unwrap();
        assert!(g.axes[1].nodes.iter().all(|p| p.sin() > 0.0));
        let b = Grid::ball(1.0, [4, 4, 4]).unwrap();
        assert!(b.axes[0].nodes.iter().all(|&r| r > 0.0));
    }

    #[test]
    fn resolution_checked() {
        let d = make_domain(DomainKind::Annulus3D, 1.0, 2.0).unwrap();
        assert!(matches!(build_grid(&d, [1, 4, 4]), Err(Error::ResolutionTooSmall(_))));
    }

    #[test]
    fn dilation_scales_volume() {
        let d = make_domain(DomainKind::CylinderShell, 1.0, 1.5).unwrap();
        let g = build_grid(&d, [4, 6, 4]).unwrap().dilate(3.0).unwrap();
        assert!((g.total_weight() - 27.0 * d.volume()).abs() < 1e-10 * g.total_weight());
    }

    #[test]
    fn sigma_precondition() {
        let d = make_domain(DomainKind::Annulus3D, 1.0, 2.0).unwrap();
        assert_eq!(build_covering(&d, 0.2), Err(Error::SigmaOutOfRange(0.2)));
    }

    #[test]
    fn small_covering_is_valid_and_roundtrips() {
        for kind in [DomainKind::Annulus3D, DomainKind::HalfAnnulus3D] {
            let d = make_domain(kind, 1.0, 2.0).unwrap();
            let c = build_covering(&d, 0.125).unwrap();
            let stats = c.coverage_stats(20_000, 3, Exec::Parallel);
            assert_eq!(stats.covered, stats.samples, "{kind}");
            assert!(c.containment_margin(Exec::Parallel) >= -1e-12, "{kind}");
            let back = Covering::from_json(&c.to_json().unwrap()).unwrap();
            assert_eq!(back, c);
        }
    }
}
