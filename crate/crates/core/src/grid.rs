//! Uniform cell-centered grids and functions that vanish outside the domain.

use nalgebra::DVector;
use serde::Serialize;
use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};

use crate::domain::Domain;
use crate::error::{Error, Result};

/// Smallest accepted number of cells along the longest axis.
pub const MIN_RESOLUTION: usize = 8;

/// Cell-centered tensor grid on the bounding box of a domain.
///
/// Cells are squares of side `h`. A node is interior when its cell center lies
/// strictly inside the domain; all other nodes carry the value zero.
#[derive(Debug, Clone)]
pub struct Grid {
    domain: Domain,
    h: f64,
    shape: [usize; 2],
    origin: [f64; 2],
    mask: Vec<bool>,
    cell_to_node: Vec<Option<usize>>,
    cells: Vec<[usize; 2]>,
    coords: Vec<[f64; 2]>,
    distance: Vec<f64>,
}

/// Builds the grid with `resolution` cells along the longest axis of the
/// bounding box.
pub fn build_grid(domain: Domain, resolution: usize) -> Result<Grid> {
    let domain = domain.validated()?;
    if resolution < MIN_RESOLUTION {
        return Err(Error::Config(format!("resolution {resolution} is below the minimum of {MIN_RESOLUTION}")));
    }
    let (lo, hi) = domain.bounding_box();
    let dim = domain.dimension();
    let extent = [hi[0] - lo[0], hi[1] - lo[1]];
    let longest = if dim == 1 { extent[0] } else { extent[0].max(extent[1]) };
    let h = longest / resolution as f64;
    let mut shape = [1usize; 2];
    let mut origin = [0.0; 2];
    for axis in 0..dim {
        let cells = ((extent[axis] / h) - 1e-9).ceil().max(1.0) as usize;
        shape[axis] = cells;
        let mid = 0.5 * (lo[axis] + hi[axis]);
        origin[axis] = mid - 0.5 * cells as f64 * h;
    }

    let total = shape[0] * shape[1];
    let mut mask = vec![false; total];
    let mut cell_to_node = vec![None; total];
    let mut cells = Vec::new();
    let mut coords = Vec::new();
    let mut distance = Vec::new();
    // Nodes are ordered with the first axis fastest.
    for j in 0..shape[1] {
        for i in 0..shape[0] {
            let x = [origin[0] + (i as f64 + 0.5) * h, if dim == 2 { origin[1] + (j as f64 + 0.5) * h } else { 0.0 }];
            let d = domain.signed_distance(x);
            if d > 0.0 {
                let flat = i + shape[0] * j;
                mask[flat] = true;
                cell_to_node[flat] = Some(coords.len());
                cells.push([i, j]);
                coords.push(x);
                distance.push(d);
            }
        }
    }
    if coords.is_empty() {
        return Err(Error::Config("grid has no interior nodes".into()));
    }
    Ok(Grid { domain, h, shape, origin, mask, cell_to_node, cells, coords, distance })
}

impl Grid {
    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn dimension(&self) -> usize {
        self.domain.dimension()
    }

    /// Grid spacing, identical on every axis.
    pub fn spacing(&self) -> f64 {
        self.h
    }

    /// Cells per axis on the bounding box (second entry is 1 in 1D).
    pub fn shape(&self) -> [usize; 2] {
        self.shape
    }

    pub fn origin(&self) -> [f64; 2] {
        self.origin
    }

    pub fn interior_mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn num_nodes(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[[f64; 2]] {
        &self.coords
    }

    /// Integer cell indices of each interior node.
    pub fn cells(&self) -> &[[usize; 2]] {
        &self.cells
    }

    /// Exact distance d(x) to ∂Ω per interior node.
    pub fn boundary_distance(&self) -> &[f64] {
        &self.distance
    }

    /// Quadrature weight h^n of every interior node.
    pub fn weight(&self) -> f64 {
        self.h.powi(self.dimension() as i32)
    }

    /// Interior node index of the box cell `[i, j]`, if that cell is interior.
    pub fn node_at(&self, i: isize, j: isize) -> Option<usize> {
        if i < 0 || j < 0 || i as usize >= self.shape[0] || j as usize >= self.shape[1] {
            return None;
        }
        self.cell_to_node[i as usize + self.shape[0] * j as usize]
    }

    /// Σ of quadrature weights, the discrete |Ω|.
    pub fn discrete_measure(&self) -> f64 {
        self.weight() * self.num_nodes() as f64
    }

    pub fn zeros(&self) -> GridFunction {
        GridFunction::zeros(self.num_nodes())
    }

    pub fn constant(&self, c: f64) -> GridFunction {
        GridFunction::from_vec(vec![c; self.num_nodes()])
    }

    /// Samples `f` at the interior nodes.
    pub fn sample<F: FnMut([f64; 2]) -> f64>(&self, mut f: F) -> GridFunction {
        GridFunction::from_vec(self.coords.iter().map(|&x| f(x)).collect())
    }

    /// Quadrature inner product ∫ f g.
    pub fn inner(&self, f: &GridFunction, g: &GridFunction) -> f64 {
        self.weight() * f.0.dot(&g.0)
    }

    /// Quadrature integral ∫ f.
    pub fn integrate(&self, f: &GridFunction) -> f64 {
        self.weight() * f.0.sum()
    }

    /// Weighted L^r norm, r ≥ 1.
    pub fn lr_norm(&self, f: &GridFunction, r: f64) -> f64 {
        let sum: f64 = f.0.iter().map(|v| v.abs().powf(r)).sum();
        (self.weight() * sum).powf(1.0 / r)
    }

    fn check_nested(&self, fine: &Grid) -> Result<()> {
        let nested = self.domain == fine.domain
            && (0..self.dimension()).all(|a| fine.shape[a] == 2 * self.shape[a])
            && (fine.h * 2.0 - self.h).abs() <= 1e-12 * self.h;
        if nested {
            Ok(())
        } else {
            Err(Error::Config("grids are not nested by a factor of two".into()))
        }
    }

    fn parent_of(&self, cell: [usize; 2]) -> (isize, isize) {
        let j = if self.dimension() == 2 { cell[1] / 2 } else { 0 };
        ((cell[0] / 2) as isize, j as isize)
    }

    /// Piecewise-constant prolongation onto the grid refined by two.
    pub fn prolong(&self, fine: &Grid, f: &GridFunction) -> Result<GridFunction> {
        self.check_nested(fine)?;
        let values = fine
            .cells
            .iter()
            .map(|&c| {
                let (pi, pj) = self.parent_of(c);
                self.node_at(pi, pj).map_or(0.0, |k| f[k])
            })
            .collect();
        Ok(GridFunction::from_vec(values))
    }

    /// Restriction by averaging the 2^n children; exterior children count as 0.
    pub fn restrict(&self, fine: &Grid, f: &GridFunction) -> Result<GridFunction> {
        self.check_nested(fine)?;
        let children = 1usize << self.dimension();
        let mut out = vec![0.0; self.num_nodes()];
        for (k, &c) in fine.cells.iter().enumerate() {
            let (pi, pj) = self.parent_of(c);
            if let Some(parent) = self.node_at(pi, pj) {
                out[parent] += f[k] / children as f64;
            }
        }
        Ok(GridFunction::from_vec(out))
    }
}

/// A boundary sample used for surface integrals over ∂Ω.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TracePoint {
    pub point: [f64; 2],
    /// Unit outward normal.
    pub normal: [f64; 2],
    /// Surface weight dσ.
    pub weight: f64,
}

#[derive(Debug, Clone)]
pub struct BoundaryTrace {
    pub points: Vec<TracePoint>,
    /// Set for rectangles, whose corners are left out of the sampling.
    pub corners_dropped: bool,
}

/// Number of polar samples used on circles.
pub const DISK_TRACE_SAMPLES: usize = 256;

/// Exact parametrization of ∂Ω with midpoint-rule surface weights.
pub fn boundary_trace_weights(grid: &Grid) -> BoundaryTrace {
    match *grid.domain() {
        Domain::Interval { a, b } => BoundaryTrace {
            points: vec![
                TracePoint { point: [a, 0.0], normal: [-1.0, 0.0], weight: 1.0 },
                TracePoint { point: [b, 0.0], normal: [1.0, 0.0], weight: 1.0 },
            ],
            corners_dropped: false,
        },
        Domain::Rectangle { width, height, center } => {
            let h = grid.spacing();
            let mut points = Vec::new();
            let (hw, hh) = (0.5 * width, 0.5 * height);
            let edges = [
                ([center[0] - hw, center[1] - hh], [1.0, 0.0], [0.0, -1.0], width),
                ([center[0] + hw, center[1] - hh], [0.0, 1.0], [1.0, 0.0], height),
                ([center[0] + hw, center[1] + hh], [-1.0, 0.0], [0.0, 1.0], width),
                ([center[0] - hw, center[1] + hh], [0.0, -1.0], [-1.0, 0.0], height),
            ];
            for (start, dir, normal, len) in edges {
                let m = ((len / h).round() as usize).max(1);
                let ds = len / m as f64;
                for k in 0..m {
                    let t = (k as f64 + 0.5) * ds;
                    points.push(TracePoint { point: [start[0] + t * dir[0], start[1] + t * dir[1]], normal, weight: ds });
                }
            }
            BoundaryTrace { points, corners_dropped: true }
        }
        Domain::Disk { radius, center } => {
            let m = DISK_TRACE_SAMPLES.max(4 * grid.shape()[0]);
            let ds = 2.0 * PI * radius / m as f64;
            let points = (0..m)
                .map(|k| {
                    let theta = 2.0 * PI * k as f64 / m as f64;
                    let normal = [theta.cos(), theta.sin()];
                    TracePoint { point: [center[0] + radius * normal[0], center[1] + radius * normal[1]], normal, weight: ds }
                })
                .collect();
            BoundaryTrace { points, corners_dropped: false }
        }
    }
}

/// Real values on the interior nodes of a grid; zero everywhere else.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction(DVector<f64>);

impl GridFunction {
    pub fn zeros(len: usize) -> Self {
        GridFunction(DVector::zeros(len))
    }

    pub fn from_vec(values: Vec<f64>) -> Self {
        GridFunction(DVector::from_vec(values))
    }

    pub fn from_vector(values: DVector<f64>) -> Self {
        GridFunction(values)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn into_vector(self) -> DVector<f64> {
        self.0
    }

    pub fn map<F: FnMut(f64) -> f64>(&self, f: F) -> Self {
        GridFunction(self.0.map(f))
    }

    pub fn positive_part(&self) -> Self {
        self.map(|v| v.max(0.0))
    }

    /// (f⁺)^r, the power of the positive part.
    pub fn positive_power(&self, r: f64) -> Self {
        self.map(|v| if v > 0.0 { v.powf(r) } else { 0.0 })
    }

    pub fn sup_norm(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn dot(&self, other: &GridFunction) -> f64 {
        self.0.dot(&other.0)
    }

    pub fn axpy(&mut self, a: f64, x: &GridFunction) {
        self.0.axpy(a, &x.0, 1.0);
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl std::ops::Index<usize> for GridFunction {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl std::ops::IndexMut<usize> for GridFunction {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

impl Add<&GridFunction> for &GridFunction {
    type Output = GridFunction;
    fn add(self, rhs: &GridFunction) -> GridFunction {
        GridFunction(&self.0 + &rhs.0)
    }
}

impl Sub<&GridFunction> for &GridFunction {
    type Output = GridFunction;
    fn sub(self, rhs: &GridFunction) -> GridFunction {
        GridFunction(&self.0 - &rhs.0)
    }
}

impl Mul<f64> for &GridFunction {
    type Output = GridFunction;
    fn mul(self, rhs: f64) -> GridFunction {
        GridFunction(&self.0 * rhs)
    }
}

impl Neg for &GridFunction {
    type Output = GridFunction;
    fn neg(self) -> GridFunction {
        GridFunction(-&self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn unit_interval() -> Domain {
        Domain::interval(-1.0, 1.0).unwrap()
    }

    #[test]
    fn interval_nodes_and_distances() {
        let g = build_grid(unit_interval(), 8).unwrap();
        assert_eq!(g.spacing(), 0.25);
        assert_eq!(g.num_nodes(), 8);
        let xs: Vec<f64> = g.coords().iter().map(|x| x[0]).collect();
        assert_eq!(xs, vec![-0.875, -0.625, -0.375, -0.125, 0.125, 0.375, 0.625, 0.875]);
        assert_eq!(g.boundary_distance(), &[0.125, 0.375, 0.625, 0.875, 0.875, 0.625, 0.375, 0.125]);
        assert_eq!(g.discrete_measure(), 2.0);
    }

    #[test]
    fn resolution_below_minimum_is_config_error() {
        assert!(matches!(build_grid(unit_interval(), 5), Err(Error::Config(_))));
    }

    #[test]
    fn disk_distance_is_one_minus_radius() {
        let g = build_grid(Domain::disk(1.0, [0.0, 0.0]).unwrap(), 24).unwrap();
        for (x, d) in g.coords().iter().zip(g.boundary_distance()) {
            assert!(*d > 0.0);
            assert_relative_eq!(*d, 1.0 - x[0].hypot(x[1]), epsilon = 1e-15);
        }
    }

    #[test]
    fn rectangle_off_origin_is_not_star_shaped() {
        let g = build_grid(Domain::rectangle(1.0, 1.0, [1.0, 1.0]).unwrap(), 8).unwrap();
        assert!(!g.domain().is_star_shaped_wrt_origin());
        let trace = boundary_trace_weights(&g);
        assert!(trace.points.iter().any(|t| t.point[0] * t.normal[0] + t.point[1] * t.normal[1] <= 0.0));
    }

    #[test]
    fn rectangle_grid_tiles_the_domain() {
        let g = build_grid(Domain::rectangle(2.0, 1.0, [0.0, 0.0]).unwrap(), 16).unwrap();
        assert_eq!(g.shape(), [16, 8]);
        assert_eq!(g.num_nodes(), 128);
        assert_relative_eq!(g.discrete_measure(), 2.0, max_relative = 1e-14);
    }

    #[test]
    fn interval_trace() {
        let g = build_grid(unit_interval(), 16).unwrap();
        let t = boundary_trace_weights(&g);
        assert_eq!(t.points.len(), 2);
        assert_eq!(t.points[0].point[0], -1.0);
        assert_eq!(t.points[0].normal[0], -1.0);
        assert_eq!(t.points[1].normal[0], 1.0);
        assert!(t.points.iter().all(|p| p.weight == 1.0));
    }

    #[test]
    fn disk_trace() {
        let g = build_grid(Domain::disk(1.5, [0.0, 0.0]).unwrap(), 16).unwrap();
        let t = boundary_trace_weights(&g);
        assert!(t.points.len() >= 256);
        for p in &t.points {
            assert_relative_eq!(p.normal[0].hypot(p.normal[1]), 1.0, epsilon = 1e-15);
            assert_relative_eq!(p.point[0] * p.normal[0] + p.point[1] * p.normal[1], 1.5, epsilon = 1e-14);
        }
        let unit = build_grid(Domain::disk(1.0, [0.0, 0.0]).unwrap(), 16).unwrap();
        let total: f64 = boundary_trace_weights(&unit).points.iter().map(|p| p.weight).sum();
        assert!((total - 2.0 * PI).abs() / (2.0 * PI) < 0.01);
    }

    #[test]
    fn rectangle_trace_is_outward_and_sums_to_perimeter() {
        let d = Domain::rectangle(2.0, 1.0, [0.1, -0.2]).unwrap();
        let g = build_grid(d, 16).unwrap();
        let t = boundary_trace_weights(&g);
        assert!(t.corners_dropped);
        let total: f64 = t.points.iter().map(|p| p.weight).sum();
        assert_relative_eq!(total, 6.0, max_relative = 1e-14);
        for p in &t.points {
            assert!(p.point[0] * p.normal[0] + p.point[1] * p.normal[1] > 0.0);
            assert_relative_eq!(d.signed_distance(p.point), 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn disk_measure_converges_under_refinement() {
        let d = Domain::disk(1.0, [0.0, 0.0]).unwrap();
        let errors: Vec<f64> = [16usize, 32, 64, 128].iter().map(|&n| (build_grid(d, n).unwrap().discrete_measure() - PI).abs()).collect();
        for w in errors.windows(2) {
            assert!(w[1] <= w[0], "{errors:?}");
        }
        assert!(errors[3] / PI < 0.02);
    }

    #[test]
    fn nested_transfer_on_disk() {
        let d = Domain::disk(1.0, [0.0, 0.0]).unwrap();
        let coarse = build_grid(d, 16).unwrap();
        let fine = build_grid(d, 32).unwrap();
        let f = coarse.sample(|x| 1.0 - x[0] * x[0] - x[1] * x[1]);
        let up = coarse.prolong(&fine, &f).unwrap();
        assert!(up.min() >= 0.0);
        assert!(up.sup_norm() <= f.sup_norm());
        let down = coarse.restrict(&fine, &up).unwrap();
        assert!(down.min() >= 0.0 && down.sup_norm() <= f.sup_norm());
        let other = build_grid(d, 24).unwrap();
        assert!(coarse.prolong(&other, &f).is_err());
    }

    proptest! {
        #[test]
        fn transfers_preserve_sign_and_sup_bound(values in prop::collection::vec(-5.0f64..5.0, 16)) {
            let coarse = build_grid(unit_interval(), 16).unwrap();
            let fine = build_grid(unit_interval(), 32).unwrap();
            let f = GridFunction::from_vec(values);
            let up = coarse.prolong(&fine, &f).unwrap();
            prop_assert!(up.sup_norm() <= f.sup_norm());
            let down = coarse.restrict(&fine, &up).unwrap();
            prop_assert!(down.sup_norm() <= f.sup_norm() + 1e-15);
            let nonneg = f.positive_part();
            let up = coarse.prolong(&fine, &nonneg).unwrap();
            prop_assert!(up.min() >= 0.0);
            prop_assert!(coarse.restrict(&fine, &up).unwrap().min() >= 0.0);
        }

        #[test]
        fn norms_vanish_only_at_zero(values in prop::collection::vec(-3.0f64..3.0, 16), r in 1.0f64..4.0) {
            let g = build_grid(unit_interval(), 16).unwrap();
            let f = GridFunction::from_vec(values);
            let n = g.lr_norm(&f, r);
            prop_assert!(n >= 0.0);
            prop_assert_eq!(n == 0.0, f.sup_norm() == 0.0);
        }
    }
}
