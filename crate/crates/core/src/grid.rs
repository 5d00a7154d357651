//! Tensor-product grids on `[r1, r2] x N` and nodal fields with Dirichlet
//! boundary data.
//!
//! The radial direction carries `n_r` interior nodes `r_i = r1 + (i+1) h_r`
//! with `h_r = (r2 - r1)/(n_r + 1)`; the two boundary leaves are never
//! stored, their (leaf-constant) values live on the field as `c1`, `c2` and
//! enter matrix-vector products through lift vectors. Each fiber axis
//! carries `n_f` periodic nodes `xi_j = j h_a`, `h_a = l_a / n_f`.
//!
//! Node ordering is lexicographic and radial-major: linear index
//! `i * fiber_count + j`, with the fiber multi-index flattened axis-0
//! fastest. Both directions of the index map are exposed and bijective.

use crate::error::{Error, Result};
use crate::geometry::WarpedGeometry;
use std::sync::Arc;

/// A tensor-product grid; immutable and shared by fields through `Arc`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    n_r: usize,
    n_f: usize,
    axes: usize,
    h_r: f64,
    r1: f64,
    r2: f64,
    r_nodes: Vec<f64>,
    /// Per-axis spacing `l_a / n_f`; empty for a point fiber.
    fiber_spacings: Vec<f64>,
    /// Per-axis node coordinates, `n_f` each.
    fiber_nodes: Vec<Vec<f64>>,
    /// Discrete weighted fiber measure per flattened fiber node:
    /// `e^{-Gamma(xi_j)} * prod_a h_a` (1.0 for a point fiber).
    fiber_weight: Vec<f64>,
    /// Sum of `fiber_weight`; the discrete weighted fiber volume.
    fiber_weight_total: f64,
}

/// Build a grid for the geometry with `n_r` interior radial nodes and `n_f`
/// nodes per fiber axis.
///
/// # Errors
/// [`Error::Config`] when `n_r < 3`, when a circle or torus fiber has
/// `n_f < 8`, or when a point fiber is given `n_f != 1`.
pub fn build_grid(geom: &WarpedGeometry, n_r: usize, n_f: usize) -> Result<Arc<Grid>> {
    if n_r < 3 {
        return Err(Error::Config(format!("n_r = {n_r} < 3")));
    }
    let fiber = geom.fiber();
    let axes = fiber.axes();
    if axes == 0 && n_f != 1 {
        return Err(Error::Config(format!(
            "point fiber requires n_f = 1, got {n_f}"
        )));
    }
    if axes > 0 && n_f < 8 {
        return Err(Error::Config(format!(
            "circle/torus fiber requires n_f >= 8, got {n_f}"
        )));
    }
    let h_r = geom.width() / (n_r as f64 + 1.0);
    let r_nodes: Vec<f64> = (0..n_r)
        .map(|i| geom.r1() + (i as f64 + 1.0) * h_r)
        .collect();

    let mut fiber_spacings = Vec::with_capacity(axes);
    let mut fiber_nodes: Vec<Vec<f64>> = Vec::with_capacity(axes);
    for a in 0..axes {
        let h = fiber.length(a) / n_f as f64;
        fiber_spacings.push(h);
        fiber_nodes.push((0..n_f).map(|j| j as f64 * h).collect());
    }

    let count = if axes == 0 { 1 } else { n_f.pow(axes as u32) };
    let cell = fiber_spacings.iter().product::<f64>();
    let mut fiber_weight = Vec::with_capacity(count);
    let mut coords = vec![0.0; axes];
    for j in 0..count {
        let mut rest = j;
        for a in 0..axes {
            coords[a] = fiber_nodes[a][rest % n_f];
            rest /= n_f;
        }
        fiber_weight.push((-fiber.gamma_at(&coords)).exp() * cell);
    }
    let fiber_weight_total = fiber_weight.iter().sum();

    Ok(Arc::new(Grid {
        n_r,
        n_f,
        axes,
        h_r,
        r1: geom.r1(),
        r2: geom.r2(),
        r_nodes,
        fiber_spacings,
        fiber_nodes,
        fiber_weight,
        fiber_weight_total,
    }))
}

impl Grid {
    /// Interior radial nodes.
    pub fn n_r(&self) -> usize {
        self.n_r
    }
    /// Nodes per fiber axis (1 for a point fiber).
    pub fn n_f(&self) -> usize {
        self.n_f
    }
    /// Number of fiber axes.
    pub fn axes(&self) -> usize {
        self.axes
    }
    /// Radial spacing `(r2 - r1)/(n_r + 1)`.
    pub fn h_r(&self) -> f64 {
        self.h_r
    }
    /// Spacing of fiber axis 0, or 0.0 for a point fiber.
    pub fn h_f(&self) -> f64 {
        self.fiber_spacings.first().copied().unwrap_or(0.0)
    }
    /// Spacing of fiber axis `a`.
    pub fn fiber_spacing(&self, a: usize) -> f64 {
        self.fiber_spacings[a]
    }
    /// Total flattened fiber nodes per leaf (`n_f^axes`).
    pub fn fiber_count(&self) -> usize {
        self.fiber_weight.len()
    }
    /// Total interior unknowns `n_r * fiber_count`.
    pub fn len(&self) -> usize {
        self.n_r * self.fiber_count()
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
    pub fn r1(&self) -> f64 {
        self.r1
    }
    pub fn r2(&self) -> f64 {
        self.r2
    }
    /// Radius of interior radial layer `i`.
    pub fn r_node(&self, i: usize) -> f64 {
        self.r_nodes[i]
    }
    /// Coordinate of flattened fiber node `j` along axis `a`.
    pub fn fiber_coord(&self, j: usize, a: usize) -> f64 {
        let mut rest = j;
        for _ in 0..a {
            rest /= self.n_f;
        }
        self.fiber_nodes[a][rest % self.n_f]
    }
    /// All axis coordinates of flattened fiber node `j`.
    pub fn fiber_coords(&self, j: usize) -> Vec<f64> {
        (0..self.axes).map(|a| self.fiber_coord(j, a)).collect()
    }
    /// Discrete weighted fiber measure at flattened fiber node `j`.
    pub fn fiber_weight(&self, j: usize) -> f64 {
        self.fiber_weight[j]
    }
    /// Sum of the fiber weights (discrete `vol_Gamma`).
    pub fn fiber_weight_total(&self) -> f64 {
        self.fiber_weight_total
    }

    /// Linear index of (radial layer `i`, flattened fiber node `j`).
    pub fn index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.n_r && j < self.fiber_count());
        i * self.fiber_count() + j
    }
    /// Radial layer of a linear index.
    pub fn radial_of(&self, idx: usize) -> usize {
        idx / self.fiber_count()
    }
    /// Flattened fiber node of a linear index.
    pub fn fiber_of(&self, idx: usize) -> usize {
        idx % self.fiber_count()
    }

    /// Flattened fiber index with axis `a` stepped by `step` (periodic).
    pub fn fiber_neighbor(&self, j: usize, a: usize, step: isize) -> usize {
        let stride = self.n_f.pow(a as u32);
        let ja = (j / stride) % self.n_f;
        let ja2 = (ja as isize + step).rem_euclid(self.n_f as isize) as usize;
        j - ja * stride + ja2 * stride
    }
}

/// Nodal quadrature weights of the product measure `e^{-Psi} dv`:
/// `w[(i,j)] = leaf_density(r_i) * h_r * fiber_weight[j]`.
///
/// This is the single measure used for every discrete integral, inner
/// product, Rayleigh quotient and leaf average in the crate.
pub fn quadrature_weights(geom: &WarpedGeometry, grid: &Grid) -> Vec<f64> {
    let fc = grid.fiber_count();
    let mut w = Vec::with_capacity(grid.len());
    for i in 0..grid.n_r() {
        let theta = geom.leaf_density(grid.r_node(i)) * grid.h_r();
        for j in 0..fc {
            w.push(theta * grid.fiber_weight(j));
        }
    }
    w
}

/// Nodal values on the interior of a grid plus leaf-constant Dirichlet data
/// on the two boundary leaves.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteField {
    grid: Arc<Grid>,
    pub values: Vec<f64>,
    /// Value on the inner boundary leaf `r = r1`.
    pub c1: f64,
    /// Value on the outer boundary leaf `r = r2`.
    pub c2: f64,
}

impl DiscreteField {
    /// All-zero interior with the given boundary values.
    pub fn constant(grid: &Arc<Grid>, value: f64, c1: f64, c2: f64) -> Self {
        DiscreteField {
            grid: Arc::clone(grid),
            values: vec![value; grid.len()],
            c1,
            c2,
        }
    }

    /// Zero field with zero boundary.
    pub fn zeros(grid: &Arc<Grid>) -> Self {
        Self::constant(grid, 0.0, 0.0, 0.0)
    }

    /// Sample a function of `(r, fiber coordinates)` on the interior; the
    /// boundary values must be supplied explicitly (they are leaf-constant
    /// by the Dirichlet setup).
    pub fn from_fn<F: Fn(f64, &[f64]) -> f64>(
        grid: &Arc<Grid>,
        f: F,
        c1: f64,
        c2: f64,
    ) -> Self {
        let fc = grid.fiber_count();
        let mut values = Vec::with_capacity(grid.len());
        for i in 0..grid.n_r() {
            let r = grid.r_node(i);
            for j in 0..fc {
                values.push(f(r, &grid.fiber_coords(j)));
            }
        }
        DiscreteField {
            grid: Arc::clone(grid),
            values,
            c1,
            c2,
        }
    }

    /// Wrap existing values.
    pub fn from_values(grid: &Arc<Grid>, values: Vec<f64>, c1: f64, c2: f64) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Shape(format!(
                "field length {} does not match grid length {}",
                values.len(),
                grid.len()
            )));
        }
        Ok(DiscreteField {
            grid: Arc::clone(grid),
            values,
            c1,
            c2,
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Value at (radial layer, flattened fiber node).
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    /// Max-norm of the interior values.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Max-norm restricted to radial layers at least `layers` away from both
    /// boundaries.
    pub fn max_abs_interior(&self, layers: usize) -> f64 {
        let fc = self.grid.fiber_count();
        let n_r = self.grid.n_r();
        let mut m: f64 = 0.0;
        for i in 0..n_r {
            let dist = (i + 1).min(n_r - i);
            if dist <= layers {
                continue;
            }
            for j in 0..fc {
                m = m.max(self.values[i * fc + j].abs());
            }
        }
        m
    }

    /// Radial profile at fiber node `j` (column copy).
    pub fn radial_profile(&self, j: usize) -> Vec<f64> {
        (0..self.grid.n_r()).map(|i| self.at(i, j)).collect()
    }

    /// Check that two fields live on grids of identical shape.
    pub fn check_same_shape(&self, other: &DiscreteField) -> Result<()> {
        if self.values.len() != other.values.len()
            || self.grid.n_r() != other.grid.n_r()
            || self.grid.fiber_count() != other.grid.fiber_count()
        {
            return Err(Error::Shape(format!(
                "field shapes differ: {}x{} vs {}x{}",
                self.grid.n_r(),
                self.grid.fiber_count(),
                other.grid.n_r(),
                other.grid.fiber_count()
            )));
        }
        Ok(())
    }
}
