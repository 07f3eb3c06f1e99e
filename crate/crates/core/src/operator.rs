//! Dense discretization of the restricted fractional Laplacian (−Δ)^s with
//! zero exterior data.
//!
//! For an interior node x_i the symmetric-difference integral is split into
//!
//! * the grid cells of the bounding box other than the central one, where u is
//!   taken constant on each cell and the kernel |y|^{-n-2s} is integrated
//!   exactly over the cell (1D) or by Gauss-Legendre product rules (2D);
//! * everything beyond the box, where u ≡ 0 so only the u(x_i) term survives
//!   and the kernel integral is evaluated exactly;
//! * optionally the central cell, approximated by the second-order Taylor
//!   term with the Hessian trace taken from the standard second difference.
//!
//! Every piece keeps off-diagonal entries non-positive and row sums positive.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;
use std::f64::consts::PI;
use std::io::{Read, Write};
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction};
use crate::special::{gamma, gauss_legendre, integrate_adaptive, integrate_fixed};

fn check_order(s: f64) -> Result<()> {
    if s > 0.0 && s < 1.0 {
        Ok(())
    } else {
        Err(Error::OrderOutOfRange(s))
    }
}

fn check_dimension(n: usize) -> Result<()> {
    if n == 1 || n == 2 {
        Ok(())
    } else {
        Err(Error::Config(format!("dimension {n} is not supported (only 1 and 2)")))
    }
}

/// C(n,s) = 2^{2s} s Γ((n+2s)/2) / (π^{n/2} Γ(1−s)).
pub fn normalization_constant(n: usize, s: f64) -> Result<f64> {
    check_dimension(n)?;
    check_order(s)?;
    let n = n as f64;
    Ok(4f64.powf(s) * s * gamma(0.5 * (n + 2.0 * s)) / (PI.powf(0.5 * n) * gamma(1.0 - s)))
}

/// C(n,s) as the reciprocal of ∫_{ℝ^n} (1 − cos ζ₁)/|ζ|^{n+2s} dζ, evaluated
/// by adaptive quadrature. Independent of the Gamma-function route.
pub fn normalization_constant_quadrature(n: usize, s: f64) -> Result<f64> {
    check_dimension(n)?;
    check_order(s)?;
    let line = 2.0 * one_minus_cos_integral(s);
    let integral = if n == 1 {
        line
    } else {
        // ∫ dζ₂ (ζ₁² + ζ₂²)^{-1-s} = |ζ₁|^{-1-2s} ∫ (1+τ²)^{-1-s} dτ, τ = tan θ
        let transverse = integrate_adaptive(|t: f64| t.cos().powf(2.0 * s), -0.5 * PI, 0.5 * PI, 1e-15, 1e-15);
        line * transverse
    };
    Ok(1.0 / integral)
}

/// ∫_0^∞ (1 − cos t) t^{-1-2s} dt.
fn one_minus_cos_integral(s: f64) -> f64 {
    let a: f64 = 1.0;
    // [0, a]: termwise integration of the cosine series
    let mut head = 0.0;
    let mut fact = 1.0;
    for k in 1..40 {
        let m = 2 * k;
        fact *= ((m - 1) * m) as f64;
        let term = a.powf(m as f64 - 2.0 * s) / (fact * (m as f64 - 2.0 * s));
        head += if k % 2 == 1 { term } else { -term };
        if term < 1e-18 {
            break;
        }
    }
    // [a, ∞): ∫ t^{-α} minus the oscillatory part, after four integrations by parts
    let alpha = 1.0 + 2.0 * s;
    let power_tail = a.powf(-2.0 * s) / (2.0 * s);
    let boundary = |beta: f64| -a.sin() * a.powf(-beta) + beta * a.cos() * a.powf(-beta - 1.0);
    let far = 400.0 * PI;
    let beta = alpha + 4.0;
    let mut remainder = 0.0;
    let mut lo = a;
    while lo < far {
        let hi = (lo + PI).min(far);
        remainder += integrate_adaptive(|t: f64| t.cos() * t.powf(-beta), lo, hi, 1e-17, 1e-14);
        lo = hi;
    }
    let j2 = boundary(alpha + 2.0) - (alpha + 2.0) * (alpha + 3.0) * remainder;
    let j0 = boundary(alpha) - alpha * (alpha + 1.0) * j2;
    head + power_tail - j0
}

/// Constant value of (−Δ)^s (1 − |x|²)_+^s inside the unit ball:
/// 2^{2s} Γ(1+s) Γ((n+2s)/2) / Γ(n/2).
pub fn ball_torsion_constant(n: usize, s: f64) -> f64 {
    let n = n as f64;
    4f64.powf(s) * gamma(1.0 + s) * gamma(0.5 * (n + 2.0 * s)) / gamma(0.5 * n)
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AssemblyOptions {
    /// Add the Taylor-term estimate of the central cell contribution.
    pub central_correction: bool,
}

impl Default for AssemblyOptions {
    fn default() -> Self {
        AssemblyOptions { central_correction: true }
    }
}

/// Assembled dense operator A ≈ (−Δ)^s on the interior nodes of a grid.
#[derive(Debug)]
pub struct FractionalOperator {
    s: f64,
    dim: usize,
    c_ns: f64,
    weight: f64,
    matrix: DMatrix<f64>,
    tail: DVector<f64>,
    factor: OnceLock<std::result::Result<Cholesky<f64, Dyn>, String>>,
}

impl Clone for FractionalOperator {
    fn clone(&self) -> Self {
        FractionalOperator {
            s: self.s,
            dim: self.dim,
            c_ns: self.c_ns,
            weight: self.weight,
            matrix: self.matrix.clone(),
            tail: self.tail.clone(),
            factor: OnceLock::new(),
        }
    }
}

/// Kernel integrals over unit cells, ∫_{cell(k,l)} |y|^{-n-2s} dy.
struct CellKernel {
    dim: usize,
    table: Vec<f64>,
    cols: usize,
}

impl CellKernel {
    fn new(dim: usize, s: f64, extent: [usize; 2]) -> Self {
        if dim == 1 {
            let table = (0..extent[0])
                .map(|k| {
                    if k == 0 {
                        0.0
                    } else {
                        let k = k as f64;
                        ((k - 0.5).powf(-2.0 * s) - (k + 0.5).powf(-2.0 * s)) / (2.0 * s)
                    }
                })
                .collect();
            return CellKernel { dim, table, cols: 1 };
        }
        let near = gauss_legendre(12);
        let mid = gauss_legendre(6);
        let far = gauss_legendre(3);
        let kernel = |y1: f64, y2: f64| (y1 * y1 + y2 * y2).powf(-1.0 - s);
        let cell = |k: usize, l: usize| -> f64 {
            if k == 0 && l == 0 {
                return 0.0;
            }
            let (kf, lf) = (k as f64, l as f64);
            let reach = k.max(l);
            let (rule, split) = if reach <= 2 {
                (&near, 2)
            } else if reach <= 8 {
                (&mid, 1)
            } else {
                (&far, 1)
            };
            let step = 1.0 / split as f64;
            let mut total = 0.0;
            for a in 0..split {
                for b in 0..split {
                    let x0 = kf - 0.5 + a as f64 * step;
                    let y0 = lf - 0.5 + b as f64 * step;
                    total += integrate_fixed(|x| integrate_fixed(|y| kernel(x, y), y0, y0 + step, rule), x0, x0 + step, rule);
                }
            }
            total
        };
        let cols = extent[1];
        let mut table = vec![0.0; extent[0] * cols];
        for k in 0..extent[0] {
            for l in 0..cols {
                table[k * cols + l] = cell(k, l);
            }
        }
        CellKernel { dim, table, cols }
    }

    fn get(&self, dk: usize, dl: usize) -> f64 {
        if self.dim == 1 {
            self.table[dk]
        } else {
            self.table[dk * self.cols + dl]
        }
    }
}

/// ∫ over the unit-side square centered at 0 of |y|^{-2s}, by angular quadrature.
fn central_square_integral(s: f64) -> f64 {
    let rule = gauss_legendre(24);
    8.0 * integrate_fixed(|phi| (0.5 / phi.cos()).powf(2.0 - 2.0 * s) / (2.0 - 2.0 * s), 0.0, 0.25 * PI, &rule)
}

/// ∫_{ℝ²∖box} |y − x|^{-2-2s} dy where `gaps` are the distances from x to the
/// left, right, bottom and top box edges.
fn rectangle_exterior_integral(s: f64, gaps: [f64; 4], rule: &(Vec<f64>, Vec<f64>)) -> f64 {
    let [left, right, bottom, top] = gaps;
    // corners counterclockwise starting from the lower right
    let corners = [(right, -bottom), (right, top), (-left, top), (-left, -bottom)];
    let mut total = 0.0;
    for (idx, edge_dist) in [right, top, left, bottom].into_iter().enumerate() {
        let (x0, y0) = corners[idx];
        let (x1, y1) = corners[(idx + 1) % 4];
        let mut t0 = y0.atan2(x0);
        let mut t1 = y1.atan2(x1);
        let normal = idx as f64 * 0.5 * PI;
        // measure angles relative to the edge normal, in (−π/2, π/2)
        t0 = wrap(t0 - normal);
        t1 = wrap(t1 - normal);
        total += integrate_fixed(|phi| (edge_dist / phi.cos()).powf(-2.0 * s), t0, t1, rule) / (2.0 * s);
    }
    total
}

fn wrap(mut a: f64) -> f64 {
    while a <= -PI {
        a += 2.0 * PI;
    }
    while a > PI {
        a -= 2.0 * PI;
    }
    a
}

impl FractionalOperator {
    /// Assembles the operator with default options (central correction on).
    pub fn assemble(grid: &Grid, s: f64) -> Result<Self> {
        Self::assemble_with(grid, s, AssemblyOptions::default())
    }

    pub fn assemble_with(grid: &Grid, s: f64, options: AssemblyOptions) -> Result<Self> {
        check_order(s)?;
        let dim = grid.dimension();
        let c_ns = normalization_constant(dim, s)?;
        let h = grid.spacing();
        let scale = c_ns * h.powf(-2.0 * s);
        let shape = grid.shape();
        let kernel = CellKernel::new(dim, s, shape);
        let cells = grid.cells();
        let count = grid.num_nodes();

        // Box sum and tail for every node.
        let angular = gauss_legendre(20);
        let (box_sums, tails): (Vec<f64>, Vec<f64>) = cells
            .par_iter()
            .map(|&[i, j]| {
                let mut sum = 0.0;
                if dim == 1 {
                    let right = shape[0] - 1 - i;
                    let left = i;
                    for k in 1..=right.max(left) {
                        let w = kernel.get(k, 0);
                        if k <= left {
                            sum += w;
                        }
                        if k <= right {
                            sum += w;
                        }
                    }
                    let gaps = [i as f64 + 0.5, (shape[0] - i) as f64 - 0.5];
                    let tail = gaps.iter().map(|g| g.powf(-2.0 * s)).sum::<f64>() / (2.0 * s);
                    (sum, tail)
                } else {
                    for a in 0..shape[0] {
                        for b in 0..shape[1] {
                            sum += kernel.get(a.abs_diff(i), b.abs_diff(j));
                        }
                    }
                    let gaps = [i as f64 + 0.5, (shape[0] - i) as f64 - 0.5, j as f64 + 0.5, (shape[1] - j) as f64 - 0.5];
                    (sum, rectangle_exterior_integral(s, gaps, &angular))
                }
            })
            .unzip();

        let correction = if options.central_correction {
            let j_hat = if dim == 1 { 2.0 * 0.5f64.powf(2.0 - 2.0 * s) / (2.0 - 2.0 * s) } else { 0.5 * central_square_integral(s) };
            0.5 * scale * j_hat
        } else {
            0.0
        };

        let mut matrix = DMatrix::<f64>::zeros(count, count);
        matrix.as_mut_slice().par_chunks_mut(count).enumerate().for_each(|(col, column)| {
            let [ci, cj] = cells[col];
            for (row, entry) in column.iter_mut().enumerate() {
                let [ri, rj] = cells[row];
                let (dk, dl) = (ri.abs_diff(ci), rj.abs_diff(cj));
                if row == col {
                    *entry = scale * (box_sums[row] + tails[row]) + 2.0 * dim as f64 * correction;
                } else {
                    let mut value = -scale * kernel.get(dk, dl);
                    if dk + dl == 1 {
                        value -= correction;
                    }
                    *entry = value;
                }
            }
        });
        let tail = DVector::from_iterator(count, tails.iter().map(|t| scale * t));
        Ok(FractionalOperator { s, dim, c_ns, weight: grid.weight(), matrix, tail, factor: OnceLock::new() })
    }

    pub fn order(&self) -> f64 {
        self.s
    }

    pub fn dimension(&self) -> usize {
        self.dim
    }

    pub fn normalization(&self) -> f64 {
        self.c_ns
    }

    pub fn size(&self) -> usize {
        self.matrix.nrows()
    }

    /// Quadrature weight of the grid the operator was assembled on.
    pub fn quadrature_weight(&self) -> f64 {
        self.weight
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Exact far-field part of each diagonal entry.
    pub fn tail(&self) -> &DVector<f64> {
        &self.tail
    }

    pub fn apply(&self, u: &GridFunction) -> GridFunction {
        GridFunction::from_vector(&self.matrix * u.as_vector())
    }

    fn cholesky(&self) -> Result<&Cholesky<f64, Dyn>> {
        self.factor
            .get_or_init(|| Cholesky::new(self.matrix.clone()).ok_or_else(|| "Cholesky factorization failed".to_string()))
            .as_ref()
            .map_err(|e| Error::Numerical(e.clone()))
    }

    /// Solves A w = f with one step of iterative refinement.
    pub fn solve_linear(&self, f: &GridFunction) -> Result<GridFunction> {
        let chol = self.cholesky()?;
        let rhs = f.as_vector();
        let mut w = chol.solve(rhs);
        let residual = rhs - &self.matrix * &w;
        w += chol.solve(&residual);
        if !w.iter().all(|v| v.is_finite()) {
            return Err(Error::Numerical("non-finite solution of the linear system".into()));
        }
        Ok(GridFunction::from_vector(w))
    }

    /// A⁻¹ B for a dense right-hand side block.
    pub fn solve_matrix(&self, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(self.cholesky()?.solve(b))
    }

    /// ‖A w − f‖∞ / max(‖f‖∞, tiny).
    pub fn relative_residual(&self, w: &GridFunction, f: &GridFunction) -> f64 {
        let r = (&self.apply(w) - f).sup_norm();
        r / f.sup_norm().max(f64::MIN_POSITIVE)
    }

    const DUMP_MAGIC: &'static [u8; 4] = b"FRSY";

    /// Writes a debugging dump: magic `FRSY`, u32 version, u32 dimension,
    /// f64 order, u64 node count, then the matrix in row-major order. All
    /// fields little-endian.
    pub fn write_dump<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(Self::DUMP_MAGIC)?;
        out.write_all(&1u32.to_le_bytes())?;
        out.write_all(&(self.dim as u32).to_le_bytes())?;
        out.write_all(&self.s.to_le_bytes())?;
        out.write_all(&(self.size() as u64).to_le_bytes())?;
        for i in 0..self.size() {
            for j in 0..self.size() {
                out.write_all(&self.matrix[(i, j)].to_le_bytes())?;
            }
        }
        Ok(())
    }

    /// Reads a dump back as (dimension, order, matrix).
    pub fn read_dump<R: Read>(mut input: R) -> Result<(usize, f64, DMatrix<f64>)> {
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if &magic != Self::DUMP_MAGIC {
            return Err(Error::Config("not an operator dump".into()));
        }
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        input.read_exact(&mut b4)?;
        input.read_exact(&mut b4)?;
        let dim = u32::from_le_bytes(b4) as usize;
        input.read_exact(&mut b8)?;
        let s = f64::from_le_bytes(b8);
        input.read_exact(&mut b8)?;
        let n = u64::from_le_bytes(b8) as usize;
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                input.read_exact(&mut b8)?;
                m[(i, j)] = f64::from_le_bytes(b8);
            }
        }
        Ok((dim, s, m))
    }
}
