//! Discrete geometry and calculus shared by every other module.
//!
//! Two grid kinds are supported: a radial 1-D mesh on a ball (nodes at
//! `r_i = i·h` with annular control-volume weights) and a masked uniform
//! Cartesian mesh (cell-center nodes inside an arbitrary domain, weight `h²`
//! each). Both carry a second-order Laplacian whose weighted matrix `WΔ` is
//! exactly symmetric on zero-boundary fields, so that the discrete Dirichlet
//! energy `−⟨u, Δu⟩` equals a sum of squared edge differences. The flow
//! stepper and the λ formulas rely on this compatibility.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const NO_NEIGHBOR: u32 = u32::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridKind {
    Radial,
    Cartesian,
}

/// Circular hole cut out of a rectangle domain.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hole {
    pub cx: f64,
    pub cy: f64,
    pub r: f64,
}

/// Geometry of a masked Cartesian domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum DomainSpec {
    Ball {
        cx: f64,
        cy: f64,
        r: f64,
    },
    /// Annulus centered at the origin: `inner < |x| < outer`.
    Annulus {
        outer: f64,
        inner: f64,
    },
    RectWithHoles {
        x0: f64,
        y0: f64,
        x1: f64,
        y1: f64,
        holes: Vec<Hole>,
    },
}

impl DomainSpec {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        match self {
            DomainSpec::Ball { cx, cy, r } => {
                let dx = x - cx;
                let dy = y - cy;
                dx * dx + dy * dy < r * r
            }
            DomainSpec::Annulus { outer, inner } => {
                let d2 = x * x + y * y;
                d2 > inner * inner && d2 < outer * outer
            }
            DomainSpec::RectWithHoles { x0, y0, x1, y1, holes } => {
                if x <= *x0 || x >= *x1 || y <= *y0 || y >= *y1 {
                    return false;
                }
                !holes.iter().any(|h| {
                    let dx = x - h.cx;
                    let dy = y - h.cy;
                    dx * dx + dy * dy < h.r * h.r
                })
            }
        }
    }

    /// Bounding box `(x0, y0, x1, y1)`.
    pub fn bbox(&self) -> (f64, f64, f64, f64) {
        match self {
            DomainSpec::Ball { cx, cy, r } => (cx - r, cy - r, cx + r, cy + r),
            DomainSpec::Annulus { outer, .. } => (-outer, -outer, *outer, *outer),
            DomainSpec::RectWithHoles { x0, y0, x1, y1, .. } => (*x0, *y0, *x1, *y1),
        }
    }

    /// Exact area of the specified domain (holes assumed disjoint and interior).
    pub fn area(&self) -> f64 {
        use std::f64::consts::PI;
        match self {
            DomainSpec::Ball { r, .. } => PI * r * r,
            DomainSpec::Annulus { outer, inner } => PI * (outer * outer - inner * inner),
            DomainSpec::RectWithHoles { x0, y0, x1, y1, holes } => {
                (x1 - x0) * (y1 - y0) - holes.iter().map(|h| PI * h.r * h.r).sum::<f64>()
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match self {
            DomainSpec::Ball { r, .. } => *r > 0.0,
            DomainSpec::Annulus { outer, inner } => *inner >= 0.0 && *outer > *inner,
            DomainSpec::RectWithHoles { x0, y0, x1, y1, holes } => {
                x1 > x0 && y1 > y0 && holes.iter().all(|h| h.r > 0.0)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("degenerate domain spec {self:?}")))
        }
    }

    fn params_string(&self) -> String {
        match self {
            DomainSpec::Ball { cx, cy, r } => format!("ball;cx={cx};cy={cy};r={r}"),
            DomainSpec::Annulus { outer, inner } => format!("annulus;outer={outer};inner={inner}"),
            DomainSpec::RectWithHoles { x0, y0, x1, y1, holes } => {
                let mut s = format!("rect;x0={x0};y0={y0};x1={x1};y1={y1}");
                for h in holes {
                    let _ = write!(s, ";hole={}:{}:{}", h.cx, h.cy, h.r);
                }
                s
            }
        }
    }

    fn from_params_string(s: &str) -> Result<DomainSpec> {
        let bad = |m: &str| Error::Snapshot(format!("bad domain params `{s}`: {m}"));
        let mut parts = s.split(';');
        let kind = parts.next().ok_or_else(|| bad("empty"))?;
        let mut kv = std::collections::BTreeMap::new();
        let mut holes = Vec::new();
        for p in parts {
            let (k, v) = p.split_once('=').ok_or_else(|| bad("missing `=`"))?;
            if k == "hole" {
                let nums: Vec<f64> = v
                    .split(':')
                    .map(|t| t.parse())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| bad("bad hole triple"))?;
                if nums.len() != 3 {
                    return Err(bad("hole needs cx:cy:r"));
                }
                holes.push(Hole { cx: nums[0], cy: nums[1], r: nums[2] });
            } else {
                let v: f64 = v.parse().map_err(|_| bad("bad number"))?;
                kv.insert(k.to_string(), v);
            }
        }
        let get = |k: &str| kv.get(k).copied().ok_or_else(|| bad(&format!("missing `{k}`")));
        match kind {
            "ball" => Ok(DomainSpec::Ball { cx: get("cx")?, cy: get("cy")?, r: get("r")? }),
            "annulus" => Ok(DomainSpec::Annulus { outer: get("outer")?, inner: get("inner")? }),
            "rect" => Ok(DomainSpec::RectWithHoles {
                x0: get("x0")?,
                y0: get("y0")?,
                x1: get("x1")?,
                y1: get("y1")?,
                holes,
            }),
            other => Err(bad(&format!("unknown domain kind `{other}`"))),
        }
    }
}

#[derive(Clone, Debug)]
struct RadialMeta {
    radius: f64,
    n: usize,
}

#[derive(Clone, Debug)]
struct CartesianMeta {
    domain: DomainSpec,
    /// Lattice origin and dimensions; node (ix, iy) sits at
    /// `(ox + (ix+0.5)h, oy + (iy+0.5)h)`.
    ox: f64,
    oy: f64,
    nx: usize,
    ny: usize,
    /// Dense (ix, iy) -> node index map, `NO_NEIGHBOR` where masked out.
    index: Vec<u32>,
    neighbors: Vec<[u32; 4]>,
}

/// Immutable discrete domain: node coordinates, quadrature weights,
/// boundary mask, and the stencil data all operators share.
#[derive(Clone, Debug)]
pub struct Grid {
    kind: GridKind,
    h: f64,
    coords: Vec<[f64; 2]>,
    weights: Vec<f64>,
    boundary: Vec<bool>,
    radial: Option<RadialMeta>,
    cartesian: Option<CartesianMeta>,
}

/// Radial mesh on the ball `B_R(0)`: nodes `r_i = i·h`, `h = R/n`, the last
/// node flagged as boundary. Node `i` owns the annulus
/// `[r_i − h/2, r_i + h/2] ∩ [0, R]`, so the weights are strictly positive
/// and sum to `πR²` exactly.
pub fn build_radial_grid(radius: f64, n: usize) -> Result<Grid> {
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::InvalidParameter(format!("radial grid needs R > 0, got {radius}")));
    }
    if n < 16 {
        return Err(Error::InvalidParameter(format!("radial grid needs n >= 16, got {n}")));
    }
    let h = radius / n as f64;
    use std::f64::consts::PI;
    let mut coords = Vec::with_capacity(n + 1);
    let mut weights = Vec::with_capacity(n + 1);
    let mut boundary = vec![false; n + 1];
    for i in 0..=n {
        let r = i as f64 * h;
        coords.push([r, 0.0]);
        let lo = (r - 0.5 * h).max(0.0);
        let hi = (r + 0.5 * h).min(radius);
        weights.push(PI * (hi * hi - lo * lo));
    }
    boundary[n] = true;
    Ok(Grid {
        kind: GridKind::Radial,
        h,
        coords,
        weights,
        boundary,
        radial: Some(RadialMeta { radius, n }),
        cartesian: None,
    })
}

/// Uniform Cartesian mesh masked to `domain`: cell-center nodes strictly
/// inside, weight `h²` each; a node with any of its four lattice neighbors
/// outside the domain is flagged as boundary.
pub fn build_masked_grid(domain: &DomainSpec, h: f64) -> Result<Grid> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidParameter(format!("masked grid needs h > 0, got {h}")));
    }
    domain.validate()?;
    let (x0, y0, x1, y1) = domain.bbox();
    let nx = ((x1 - x0) / h).ceil() as usize + 1;
    let ny = ((y1 - y0) / h).ceil() as usize + 1;
    let mut index = vec![NO_NEIGHBOR; nx * ny];
    let mut coords = Vec::new();
    for iy in 0..ny {
        for ix in 0..nx {
            let x = x0 + (ix as f64 + 0.5) * h;
            let y = y0 + (iy as f64 + 0.5) * h;
            if domain.contains(x, y) {
                index[iy * nx + ix] = coords.len() as u32;
                coords.push([x, y]);
            }
        }
    }
    let count = coords.len();
    if count == 0 {
        return Err(Error::EmptyInterior { h });
    }
    let at = |ix: isize, iy: isize| -> u32 {
        if ix < 0 || iy < 0 || ix >= nx as isize || iy >= ny as isize {
            NO_NEIGHBOR
        } else {
            index[iy as usize * nx + ix as usize]
        }
    };
    let mut neighbors = Vec::with_capacity(count);
    let mut boundary = vec![false; count];
    for iy in 0..ny {
        for ix in 0..nx {
            let id = index[iy * nx + ix];
            if id == NO_NEIGHBOR {
                continue;
            }
            let (ix, iy) = (ix as isize, iy as isize);
            let nb = [at(ix + 1, iy), at(ix - 1, iy), at(ix, iy + 1), at(ix, iy - 1)];
            if nb.contains(&NO_NEIGHBOR) {
                boundary[id as usize] = true;
            }
            neighbors.push(nb);
        }
    }
    if boundary.iter().all(|&b| b) {
        return Err(Error::EmptyInterior { h });
    }
    Ok(Grid {
        kind: GridKind::Cartesian,
        h,
        coords: coords.clone(),
        weights: vec![h * h; count],
        boundary,
        radial: None,
        cartesian: Some(CartesianMeta {
            domain: domain.clone(),
            ox: x0,
            oy: y0,
            nx,
            ny,
            index,
            neighbors,
        }),
    })
}

impl Grid {
    pub fn kind(&self) -> GridKind {
        self.kind
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn node_count(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[[f64; 2]] {
        &self.coords
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn is_boundary(&self, i: usize) -> bool {
        self.boundary[i]
    }

    pub fn interior_indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.node_count()).filter(|&i| !self.boundary[i])
    }

    /// Sum of all quadrature weights.
    pub fn area(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn domain(&self) -> Option<&DomainSpec> {
        self.cartesian.as_ref().map(|c| &c.domain)
    }

    /// Ball radius of a radial grid.
    pub fn radius(&self) -> Option<f64> {
        self.radial.as_ref().map(|r| r.radius)
    }

    /// Two grids are compatible when a field sampled on one is meaningful on
    /// the other (same kind, node count, and spacing).
    pub fn compatible(&self, other: &Grid) -> bool {
        self.kind == other.kind
            && self.h == other.h
            && self.coords.len() == other.coords.len()
    }

    fn check(&self, f: &Field) -> Result<()> {
        if self.compatible(&f.grid) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// Second-order discrete Laplacian; boundary nodes are set to zero in the
    /// output. Radial form is the conservative `(r u')'/r` stencil with the
    /// symmetric origin limit `4(u₁−u₀)/h²`.
    pub fn laplacian(&self, u: &Field) -> Result<Field> {
        self.check(u)?;
        let mut out = vec![0.0; u.values.len()];
        self.laplacian_into(&u.values, &mut out);
        Ok(Field { grid: u.grid.clone(), values: out, zero_boundary: true })
    }

    /// Allocation-free Laplacian kernel shared with the implicit solver.
    /// Boundary entries of `out` are set to zero.
    pub(crate) fn laplacian_into(&self, v: &[f64], out: &mut [f64]) {
        let h2 = self.h * self.h;
        match self.kind {
            GridKind::Radial => {
                let n = self.radial.as_ref().unwrap().n;
                out[0] = 4.0 * (v[1] - v[0]) / h2;
                for i in 1..n {
                    let ri = i as f64 * self.h;
                    let rp = ri + 0.5 * self.h;
                    let rm = ri - 0.5 * self.h;
                    out[i] = (rp * (v[i + 1] - v[i]) - rm * (v[i] - v[i - 1])) / (ri * h2);
                }
                out[n] = 0.0;
            }
            GridKind::Cartesian => {
                let meta = self.cartesian.as_ref().unwrap();
                for i in 0..v.len() {
                    if self.boundary[i] {
                        out[i] = 0.0;
                        continue;
                    }
                    let nb = meta.neighbors[i];
                    let mut acc = -4.0 * v[i];
                    for j in nb {
                        acc += v[j as usize];
                    }
                    out[i] = acc / h2;
                }
            }
        }
    }

    /// `−L_ii`, the (positive) diagonal of the negated Laplacian, used for
    /// Jacobi preconditioning. Boundary entries are 1.
    pub(crate) fn laplacian_diagonal(&self) -> Vec<f64> {
        let h2 = self.h * self.h;
        let n_nodes = self.node_count();
        let mut d = vec![1.0; n_nodes];
        match self.kind {
            GridKind::Radial => {
                let n = self.radial.as_ref().unwrap().n;
                d[0] = 4.0 / h2;
                for i in 1..n {
                    let ri = i as f64 * self.h;
                    d[i] = ((ri + 0.5 * self.h) + (ri - 0.5 * self.h)) / (ri * h2);
                }
            }
            GridKind::Cartesian => {
                for i in 0..n_nodes {
                    if !self.boundary[i] {
                        d[i] = 4.0 / h2;
                    }
                }
            }
        }
        d
    }

    /// Quadrature: `Σᵢ wᵢ fᵢ`.
    pub fn integrate(&self, f: &Field) -> Result<f64> {
        self.check(f)?;
        Ok(f.values.iter().zip(&self.weights).map(|(v, w)| v * w).sum())
    }

    /// Dirichlet energy `∫|∇u|²` as the quadratic form `−⟨u, Δu⟩` in the
    /// weighted inner product, evaluated in its sum-of-squares edge form so
    /// the result is non-negative by construction.
    pub fn dirichlet_energy(&self, u: &Field) -> Result<f64> {
        self.check(u)?;
        if !u.zero_boundary {
            return Err(Error::BoundaryFlagUnset);
        }
        let mut total = 0.0;
        self.for_each_edge_energy(u, |_, e| total += e);
        Ok(total)
    }

    /// Visit every mesh edge with its midpoint and its contribution to the
    /// discrete Dirichlet energy (the contributions sum to `dirichlet_energy`).
    pub(crate) fn for_each_edge_energy(&self, u: &Field, mut visit: impl FnMut([f64; 2], f64)) {
        use std::f64::consts::PI;
        let v = &u.values;
        match self.kind {
            GridKind::Radial => {
                let n = self.radial.as_ref().unwrap().n;
                for i in 0..n {
                    let rm = (i as f64 + 0.5) * self.h;
                    let du = v[i + 1] - v[i];
                    visit([rm, 0.0], 2.0 * PI * rm * du * du / self.h);
                }
            }
            GridKind::Cartesian => {
                let meta = self.cartesian.as_ref().unwrap();
                for i in 0..v.len() {
                    // east and north neighbors only, so each edge is counted once
                    for &j in &meta.neighbors[i][..1] {
                        if j != NO_NEIGHBOR {
                            let j = j as usize;
                            let du = v[j] - v[i];
                            let m = [
                                0.5 * (self.coords[i][0] + self.coords[j][0]),
                                0.5 * (self.coords[i][1] + self.coords[j][1]),
                            ];
                            visit(m, du * du);
                        }
                    }
                    let j = meta.neighbors[i][2];
                    if j != NO_NEIGHBOR {
                        let j = j as usize;
                        let du = v[j] - v[i];
                        let m = [
                            0.5 * (self.coords[i][0] + self.coords[j][0]),
                            0.5 * (self.coords[i][1] + self.coords[j][1]),
                        ];
                        visit(m, du * du);
                    }
                }
            }
        }
    }

    /// Portion of node `i`'s quadrature weight lying inside the ball of the
    /// given radius about `center`. Radial grids clip the 1-D control volume
    /// exactly (center taken on the axis); Cartesian nodes count fully or not
    /// at all by their center point. Disjoint radii partition the weights, so
    /// ball and annulus sums built from this are exactly additive.
    pub fn weight_in_ball(&self, i: usize, center: [f64; 2], radius: f64) -> f64 {
        match self.kind {
            GridKind::Radial => {
                use std::f64::consts::PI;
                let meta = self.radial.as_ref().unwrap();
                let c = center[0];
                let r = self.coords[i][0];
                let lo = (r - 0.5 * self.h).max(0.0);
                let hi = (r + 0.5 * self.h).min(meta.radius);
                // cell ∩ {|ρ − c| ≤ radius}
                let a = lo.max(c - radius);
                let b = hi.min(c + radius);
                if b <= a {
                    0.0
                } else {
                    PI * (b * b - a * a)
                }
            }
            GridKind::Cartesian => {
                let dx = self.coords[i][0] - center[0];
                let dy = self.coords[i][1] - center[1];
                if dx * dx + dy * dy <= radius * radius {
                    self.weights[i]
                } else {
                    0.0
                }
            }
        }
    }

    /// Distance from a point to the domain boundary.
    pub fn boundary_distance(&self, p: [f64; 2]) -> f64 {
        match self.kind {
            GridKind::Radial => {
                let meta = self.radial.as_ref().unwrap();
                (meta.radius - p[0].abs()).max(0.0)
            }
            GridKind::Cartesian => {
                let meta = self.cartesian.as_ref().unwrap();
                match &meta.domain {
                    DomainSpec::Ball { cx, cy, r } => {
                        let d = ((p[0] - cx).powi(2) + (p[1] - cy).powi(2)).sqrt();
                        (r - d).max(0.0)
                    }
                    DomainSpec::Annulus { outer, inner } => {
                        let d = (p[0] * p[0] + p[1] * p[1]).sqrt();
                        (outer - d).min(d - inner).max(0.0)
                    }
                    DomainSpec::RectWithHoles { x0, y0, x1, y1, holes } => {
                        let mut dist = (p[0] - x0).min(x1 - p[0]).min(p[1] - y0).min(y1 - p[1]);
                        for h in holes {
                            let d = ((p[0] - h.cx).powi(2) + (p[1] - h.cy).powi(2)).sqrt();
                            dist = dist.min(d - h.r);
                        }
                        dist.max(0.0)
                    }
                }
            }
        }
    }
}

/// Scalar function sampled on a grid. The `zero_boundary` flag marks fields
/// representing members of `H¹₀` (boundary node values exactly zero).
#[derive(Clone, Debug)]
pub struct Field {
    grid: Arc<Grid>,
    values: Vec<f64>,
    zero_boundary: bool,
}

impl Field {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>, zero_boundary: bool) -> Result<Field> {
        if values.len() != grid.node_count() {
            return Err(Error::GridMismatch);
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite field value at node {i}")));
        }
        if zero_boundary {
            for (i, v) in values.iter().enumerate() {
                if grid.is_boundary(i) && *v != 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "zero-boundary field has value {v} at boundary node {i}"
                    )));
                }
            }
        }
        Ok(Field { grid, values, zero_boundary })
    }

    pub fn zeros(grid: Arc<Grid>) -> Field {
        let n = grid.node_count();
        Field { grid, values: vec![0.0; n], zero_boundary: true }
    }

    /// Sample a function of position on every node, as given (no boundary
    /// zeroing, flag unset).
    pub fn sampled(grid: &Arc<Grid>, f: impl Fn([f64; 2]) -> f64) -> Field {
        let values = grid.coords().iter().map(|&p| f(p)).collect();
        Field { grid: grid.clone(), values, zero_boundary: false }
    }

    /// Sample a function and force boundary nodes to zero, flagging the field
    /// as an `H¹₀` member.
    pub fn sampled_h10(grid: &Arc<Grid>, f: impl Fn([f64; 2]) -> f64) -> Field {
        let mut out = Field::sampled(grid, f);
        out.enforce_zero_boundary();
        out
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn zero_boundary(&self) -> bool {
        self.zero_boundary
    }

    /// Overwrite boundary node values with zero and set the flag.
    pub fn enforce_zero_boundary(&mut self) {
        for i in 0..self.values.len() {
            if self.grid.is_boundary(i) {
                self.values[i] = 0.0;
            }
        }
        self.zero_boundary = true;
    }

    /// Pointwise map; the flag survives only if the map fixes zero.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        let zero_fixed = f(0.0) == 0.0;
        Field {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
            zero_boundary: self.zero_boundary && zero_fixed,
        }
    }

    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Result<Field> {
        if !self.grid.compatible(&other.grid) {
            return Err(Error::GridMismatch);
        }
        let zero_fixed = f(0.0, 0.0) == 0.0;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Field {
            grid: self.grid.clone(),
            values,
            zero_boundary: self.zero_boundary && other.zero_boundary && zero_fixed,
        })
    }

    pub fn u_max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Index and value of the maximal node.
    pub fn argmax(&self) -> (usize, f64) {
        let mut best = (0, f64::NEG_INFINITY);
        for (i, &v) in self.values.iter().enumerate() {
            if v > best.1 {
                best = (i, v);
            }
        }
        best
    }

    /// Linear (radial) or bilinear (Cartesian) interpolation at a point.
    /// Outside the stored nodes the nearest available data is used; points
    /// beyond the domain entirely evaluate to zero for zero-boundary fields.
    pub fn interpolate(&self, p: [f64; 2]) -> f64 {
        let g = &self.grid;
        match g.kind {
            GridKind::Radial => {
                let meta = g.radial.as_ref().unwrap();
                let r = p[0].hypot(p[1]);
                if r >= meta.radius {
                    return if self.zero_boundary { 0.0 } else { self.values[meta.n] };
                }
                let t = r / g.h;
                let i = (t.floor() as usize).min(meta.n - 1);
                let frac = t - i as f64;
                self.values[i] * (1.0 - frac) + self.values[i + 1] * frac
            }
            GridKind::Cartesian => {
                let meta = g.cartesian.as_ref().unwrap();
                let fx = (p[0] - meta.ox) / g.h - 0.5;
                let fy = (p[1] - meta.oy) / g.h - 0.5;
                let ix = fx.floor() as isize;
                let iy = fy.floor() as isize;
                let tx = fx - ix as f64;
                let ty = fy - iy as f64;
                let corner = |dx: isize, dy: isize| -> Option<f64> {
                    let cx = ix + dx;
                    let cy = iy + dy;
                    if cx < 0 || cy < 0 || cx >= meta.nx as isize || cy >= meta.ny as isize {
                        return None;
                    }
                    let id = meta.index[cy as usize * meta.nx + cx as usize];
                    (id != NO_NEIGHBOR).then(|| self.values[id as usize])
                };
                let pts = [
                    (corner(0, 0), (1.0 - tx) * (1.0 - ty)),
                    (corner(1, 0), tx * (1.0 - ty)),
                    (corner(0, 1), (1.0 - tx) * ty),
                    (corner(1, 1), tx * ty),
                ];
                let mut acc = 0.0;
                let mut wsum = 0.0;
                for (v, w) in pts {
                    if let Some(v) = v {
                        acc += v * w;
                        wsum += w;
                    }
                }
                if wsum > 0.0 {
                    acc / wsum
                } else {
                    0.0
                }
            }
        }
    }
}

/// Write a field snapshot: header `grid-kind,n-or-h,domain-params`, then one
/// `index,coord(s),value` row per node, full round-trip precision.
pub fn write_snapshot(field: &Field, mut w: impl Write) -> Result<()> {
    let g = field.grid();
    match g.kind {
        GridKind::Radial => {
            let meta = g.radial.as_ref().unwrap();
            writeln!(w, "radial,{},R={}", meta.n, meta.radius)?;
            for (i, c) in g.coords.iter().enumerate() {
                writeln!(w, "{},{},{}", i, c[0], field.values[i])?;
            }
        }
        GridKind::Cartesian => {
            let meta = g.cartesian.as_ref().unwrap();
            writeln!(w, "cartesian,{},{}", g.h, meta.domain.params_string())?;
            for (i, c) in g.coords.iter().enumerate() {
                writeln!(w, "{},{},{},{}", i, c[0], c[1], field.values[i])?;
            }
        }
    }
    Ok(())
}

/// Read a field snapshot, rebuilding its grid from the header. A field whose
/// boundary node values are all zero is flagged as an `H¹₀` member.
pub fn read_snapshot(r: impl BufRead) -> Result<Field> {
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Snapshot("empty snapshot".into()))??;
    let mut head = header.splitn(3, ',');
    let kind = head.next().unwrap_or_default().to_string();
    let size = head
        .next()
        .ok_or_else(|| Error::Snapshot("header missing n-or-h".into()))?
        .to_string();
    let params = head
        .next()
        .ok_or_else(|| Error::Snapshot("header missing domain-params".into()))?
        .to_string();

    let grid = match kind.as_str() {
        "radial" => {
            let n: usize = size
                .parse()
                .map_err(|_| Error::Snapshot(format!("bad node count `{size}`")))?;
            let radius: f64 = params
                .strip_prefix("R=")
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Snapshot(format!("bad radial params `{params}`")))?;
            build_radial_grid(radius, n)?
        }
        "cartesian" => {
            let h: f64 = size
                .parse()
                .map_err(|_| Error::Snapshot(format!("bad spacing `{size}`")))?;
            let domain = DomainSpec::from_params_string(&params)?;
            build_masked_grid(&domain, h)?
        }
        other => return Err(Error::Snapshot(format!("unknown grid kind `{other}`"))),
    };

    let coord_cols = if grid.kind == GridKind::Radial { 1 } else { 2 };
    let mut values = vec![0.0; grid.node_count()];
    let mut seen = 0usize;
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 2 + coord_cols {
            return Err(Error::Snapshot(format!("row {}: expected {} columns", lineno + 2, 2 + coord_cols)));
        }
        let idx: usize = cols[0]
            .parse()
            .map_err(|_| Error::Snapshot(format!("row {}: bad index", lineno + 2)))?;
        if idx >= values.len() {
            return Err(Error::Snapshot(format!("row {}: index {idx} out of range", lineno + 2)));
        }
        let val: f64 = cols[1 + coord_cols]
            .parse()
            .map_err(|_| Error::Snapshot(format!("row {}: bad value", lineno + 2)))?;
        values[idx] = val;
        seen += 1;
    }
    if seen != values.len() {
        return Err(Error::Snapshot(format!(
            "snapshot has {seen} rows but the grid has {} nodes",
            values.len()
        )));
    }
    let grid = Arc::new(grid);
    let zero_boundary = values
        .iter()
        .enumerate()
        .all(|(i, v)| !grid.is_boundary(i) || *v == 0.0);
    Field::new(grid, values, zero_boundary)
}

pub fn save_snapshot(field: &Field, path: impl AsRef<Path>) -> Result<()> {
    let f = File::create(path)?;
    write_snapshot(field, BufWriter::new(f))
}

pub fn load_snapshot(path: impl AsRef<Path>) -> Result<Field> {
    let f = File::open(path)?;
    read_snapshot(BufReader::new(f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn unit_ball_radial(n: usize) -> Arc<Grid> {
        Arc::new(build_radial_grid(1.0, n).unwrap())
    }

    #[test]
    fn radial_weights_sum_to_disc_area() {
        let g = build_radial_grid(1.0, 128).unwrap();
        assert!((g.area() - PI).abs() / PI < 1e-2);
        assert!(g.weights().iter().all(|&w| w > 0.0));

        let g2 = build_radial_grid(2.0, 64).unwrap();
        assert!((g2.area() - 4.0 * PI).abs() / (4.0 * PI) < 1e-2);
    }

    #[test]
    fn radial_grid_rejects_bad_input() {
        assert!(build_radial_grid(1.0, 0).is_err());
        assert!(build_radial_grid(1.0, 8).is_err());
        assert!(build_radial_grid(-1.0, 128).is_err());
        assert!(build_radial_grid(0.0, 128).is_err());
    }

    #[test]
    fn masked_ball_area_matches_pixel_count_oracle() {
        let h = 1.0 / 64.0;
        let domain = DomainSpec::Ball { cx: 0.0, cy: 0.0, r: 1.0 };
        let g = build_masked_grid(&domain, h).unwrap();

        // independent pixel-counting oracle over the same lattice
        let mut count = 0usize;
        let m = (2.0 / h).ceil() as i64 + 1;
        for iy in 0..m {
            for ix in 0..m {
                let x = -1.0 + (ix as f64 + 0.5) * h;
                let y = -1.0 + (iy as f64 + 0.5) * h;
                if x * x + y * y < 1.0 {
                    count += 1;
                }
            }
        }
        assert_eq!(g.node_count(), count);
        assert!((g.area() - PI).abs() / PI < 0.02);
    }

    #[test]
    fn masked_annulus_area() {
        let domain = DomainSpec::Annulus { outer: 0.5, inner: 0.25 };
        let g = build_masked_grid(&domain, 1.0 / 128.0).unwrap();
        let exact = PI * (0.25 - 0.0625);
        assert!((g.area() - exact).abs() / exact < 0.02);
    }

    #[test]
    fn masked_grid_rejects_bad_input() {
        let domain = DomainSpec::Ball { cx: 0.0, cy: 0.0, r: 1.0 };
        assert!(build_masked_grid(&domain, 0.0).is_err());
        assert!(build_masked_grid(&domain, -0.1).is_err());
        // mask too coarse to hold any interior node
        assert!(build_masked_grid(&DomainSpec::Ball { cx: 0.0, cy: 0.0, r: 0.4 }, 1.0).is_err());
    }

    #[test]
    fn quadrature_refinement_is_first_order_or_better() {
        let domain = DomainSpec::Ball { cx: 0.0, cy: 0.0, r: 1.0 };
        for k in [32.0, 64.0, 128.0] {
            let h = 1.0 / k;
            let g = build_masked_grid(&domain, h).unwrap();
            assert!((g.area() - PI).abs() <= 8.0 * h, "h={h}");
        }
    }

    #[test]
    fn laplacian_of_parabola_is_minus_four() {
        for n in [64, 128, 256] {
            let g = unit_ball_radial(n);
            let u = Field::sampled(&g, |p| 1.0 - p[0] * p[0]);
            let lap = g.laplacian(&u).unwrap();
            for i in g.interior_indices() {
                assert!(
                    (lap.values()[i] + 4.0).abs() < 1e-8,
                    "n={n} node {i}: {}",
                    lap.values()[i]
                );
            }
        }
    }

    #[test]
    fn laplacian_of_constant_vanishes() {
        let g = unit_ball_radial(64);
        let u = Field::sampled(&g, |_| 3.25);
        let lap = g.laplacian(&u).unwrap();
        for i in g.interior_indices() {
            assert_eq!(lap.values()[i], 0.0);
        }

        let domain = DomainSpec::Ball { cx: 0.0, cy: 0.0, r: 1.0 };
        let gc = Arc::new(build_masked_grid(&domain, 1.0 / 32.0).unwrap());
        let uc = Field::sampled(&gc, |_| -1.5);
        let lap = gc.laplacian(&uc).unwrap();
        for i in gc.interior_indices() {
            assert_eq!(lap.values()[i], 0.0);
        }
    }

    #[test]
    fn cartesian_laplacian_of_quadratic() {
        let domain = DomainSpec::Ball { cx: 0.0, cy: 0.0, r: 1.0 };
        let g = Arc::new(build_masked_grid(&domain, 1.0 / 64.0).unwrap());
        let u = Field::sampled(&g, |p| p[0] * p[0] + p[1] * p[1]);
        let lap = g.laplacian(&u).unwrap();
        for i in g.interior_indices() {
            assert!((lap.values()[i] - 4.0).abs() < 1e-8);
        }
    }

    #[test]
    fn integrate_examples() {
        let g = unit_ball_radial(128);
        let one = Field::sampled(&g, |_| 1.0);
        assert!((g.integrate(&one).unwrap() - PI).abs() / PI < 1e-2);

        let f = Field::sampled(&g, |p| 1.0 - p[0] * p[0]);
        assert!((g.integrate(&f).unwrap() - PI / 2.0).abs() / (PI / 2.0) < 1e-2);

        let z = Field::zeros(g.clone());
        assert_eq!(g.integrate(&z).unwrap(), 0.0);
    }

    #[test]
    fn integrate_rejects_mismatched_grid() {
        let g = unit_ball_radial(128);
        let other = unit_ball_radial(64);
        let f = Field::sampled(&other, |_| 1.0);
        assert!(matches!(g.integrate(&f), Err(Error::GridMismatch)));
    }

    #[test]
    fn dirichlet_energy_of_parabola() {
        let g = unit_ball_radial(512);
        let u = Field::sampled_h10(&g, |p| 1.0 - p[0] * p[0]);
        let d = g.dirichlet_energy(&u).unwrap();
        assert!((d - 2.0 * PI).abs() / (2.0 * PI) < 1e-2, "{d}");

        let z = Field::zeros(g.clone());
        assert_eq!(g.dirichlet_energy(&z).unwrap(), 0.0);
    }

    #[test]
    fn dirichlet_energy_requires_zero_boundary_flag() {
        let g = unit_ball_radial(64);
        let u = Field::sampled(&g, |p| 1.0 - p[0]);
        assert!(matches!(g.dirichlet_energy(&u), Err(Error::BoundaryFlagUnset)));
    }

    #[test]
    fn dirichlet_energy_positive_unless_zero() {
        let g = unit_ball_radial(64);
        let u = Field::sampled_h10(&g, |p| (1.0 - p[0]) * p[0]);
        assert!(g.dirichlet_energy(&u).unwrap() > 0.0);
        assert_eq!(g.dirichlet_energy(&Field::zeros(g.clone())).unwrap(), 0.0);
    }

    #[test]
    fn dirichlet_energy_matches_quadratic_form() {
        // edge form vs −⟨u, Δu⟩ on both grid kinds
        let g = unit_ball_radial(128);
        let u = Field::sampled_h10(&g, |p| (1.0 - p[0] * p[0]) * (0.3 + p[0]));
        let lap = g.laplacian(&u).unwrap();
        let quad = -g.integrate(&u.zip_map(&lap, |a, b| a * b).unwrap()).unwrap();
        let edge = g.dirichlet_energy(&u).unwrap();
        assert!((quad - edge).abs() < 1e-10 * edge.max(1.0), "{quad} vs {edge}");

        let domain = DomainSpec::Ball { cx: 0.0, cy: 0.0, r: 1.0 };
        let gc = Arc::new(build_masked_grid(&domain, 1.0 / 48.0).unwrap());
        let uc = Field::sampled_h10(&gc, |p| (1.0 - p[0] * p[0] - p[1] * p[1]) * (1.0 + p[1]));
        let lap = gc.laplacian(&uc).unwrap();
        let quad = -gc.integrate(&uc.zip_map(&lap, |a, b| a * b).unwrap()).unwrap();
        let edge = gc.dirichlet_energy(&uc).unwrap();
        assert!((quad - edge).abs() < 1e-10 * edge.max(1.0), "{quad} vs {edge}");
    }

    #[test]
    fn summation_by_parts_on_cartesian_grid() {
        let domain = DomainSpec::Ball { cx: 0.0, cy: 0.0, r: 1.0 };
        let g = Arc::new(build_masked_grid(&domain, 1.0 / 40.0).unwrap());
        let u = Field::sampled_h10(&g, |p| (1.0 - p[0] * p[0] - p[1] * p[1]) * p[0]);
        let v = Field::sampled_h10(&g, |p| (1.0 - p[0] * p[0] - p[1] * p[1]).powi(2));
        let lu = g.laplacian(&u).unwrap();
        let lv = g.laplacian(&v).unwrap();
        let a = g.integrate(&v.zip_map(&lu, |x, y| x * y).unwrap()).unwrap();
        let b = g.integrate(&u.zip_map(&lv, |x, y| x * y).unwrap()).unwrap();
        let nu = g.integrate(&u.zip_map(&u, |x, y| x * y).unwrap()).unwrap().sqrt();
        let nv = g.integrate(&v.zip_map(&v, |x, y| x * y).unwrap()).unwrap().sqrt();
        assert!((a - b).abs() <= 1e-10 * nu * nv, "asym {}", (a - b).abs());
    }

    #[test]
    fn weight_in_ball_partitions_weights() {
        let g = unit_ball_radial(128);
        for i in [0, 1, 37, 100, 128] {
            let total: f64 = g.weight_in_ball(i, [0.0, 0.0], 2.0);
            assert!((total - g.weights()[i]).abs() < 1e-14);
            let a = g.weight_in_ball(i, [0.0, 0.0], 0.3);
            let ann = g.weight_in_ball(i, [0.0, 0.0], 2.0) - a;
            assert!(a >= 0.0 && ann >= 0.0);
        }
    }

    #[test]
    fn interpolation_radial_and_cartesian() {
        let g = unit_ball_radial(128);
        let u = Field::sampled(&g, |p| 2.0 * p[0] + 1.0);
        assert!((u.interpolate([0.5, 0.0]) - 2.0).abs() < 1e-12);
        assert!((u.interpolate([0.1234, 0.0]) - 1.2468).abs() < 1e-10);

        let domain = DomainSpec::Ball { cx: 0.0, cy: 0.0, r: 1.0 };
        let gc = Arc::new(build_masked_grid(&domain, 1.0 / 64.0).unwrap());
        let uc = Field::sampled(&gc, |p| 3.0 + p[0] - 2.0 * p[1]);
        let got = uc.interpolate([0.21, -0.13]);
        assert!((got - (3.0 + 0.21 + 0.26)).abs() < 1e-10, "{got}");
    }

    #[test]
    fn snapshot_round_trip() {
        let g = unit_ball_radial(32);
        let u = Field::sampled_h10(&g, |p| (1.0 - p[0] * p[0]) * 0.7312895);
        let mut buf = Vec::new();
        write_snapshot(&u, &mut buf).unwrap();
        let back = read_snapshot(std::io::Cursor::new(buf)).unwrap();
        assert!(back.zero_boundary());
        assert_eq!(back.values(), u.values());

        let domain = DomainSpec::Annulus { outer: 0.5, inner: 0.125 };
        let gc = Arc::new(build_masked_grid(&domain, 1.0 / 48.0).unwrap());
        let uc = Field::sampled(&gc, |p| p[0] * p[1] + 0.1);
        let mut buf = Vec::new();
        write_snapshot(&uc, &mut buf).unwrap();
        let back = read_snapshot(std::io::Cursor::new(buf)).unwrap();
        assert!(!back.zero_boundary());
        assert_eq!(back.values(), uc.values());
        assert_eq!(back.grid().node_count(), gc.node_count());
    }
}
