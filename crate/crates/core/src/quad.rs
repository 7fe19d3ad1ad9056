//! Exact summation engine for periodic-grid quadrature of spin expectations.
//!
//! An [`AngularProblem`] is a factor graph over per-vertex angles on a
//! uniform grid of `G` points: pairwise factors `w_e(theta_u - theta_v)`
//! tabulated over grid differences, plus per-vertex unary phases
//! `e^{i m_x theta_x}`. The contraction sums the product over all grid
//! assignments, averaging each integrated angle (so the result is the grid
//! average, i.e. the trapezoid quadrature of the corresponding integral,
//! which is spectrally accurate for these entire integrands).
//!
//! Vertices are introduced in id order and retired as soon as all their
//! factors have been absorbed, so the cost is governed by the elimination
//! frontier, not the total number of spins. The first vertex of every
//! connected component is pinned to angle 0 (valid by rotation invariance;
//! components whose total phase is nonzero are exactly zero by symmetry).

use crate::error::{CoreError, Result};

/// Hard cap on materialized tensor size (entries) during contraction.
const MAX_TENSOR: usize = 1 << 27;
/// Hard cap on the per-step summation loop length.
const MAX_LOOP: usize = 1 << 33;

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Complex {
    pub re: f64,
    pub im: f64,
}

impl Complex {
    pub const ZERO: Complex = Complex { re: 0.0, im: 0.0 };
    pub const ONE: Complex = Complex { re: 1.0, im: 0.0 };

    pub fn new(re: f64, im: f64) -> Self {
        Complex { re, im }
    }

    pub fn mul(self, other: Complex) -> Complex {
        Complex {
            re: self.re * other.re - self.im * other.im,
            im: self.re * other.im + self.im * other.re,
        }
    }

    pub fn scale(self, s: f64) -> Complex {
        Complex { re: self.re * s, im: self.im * s }
    }

    pub fn add(self, other: Complex) -> Complex {
        Complex { re: self.re + other.re, im: self.im + other.im }
    }

    pub fn div(self, other: Complex) -> Complex {
        let d = other.re * other.re + other.im * other.im;
        Complex {
            re: (self.re * other.re + self.im * other.im) / d,
            im: (self.im * other.re - self.re * other.im) / d,
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct AngularEdge {
    pub u: usize,
    pub v: usize,
    /// `table[k]` is the factor at `theta_u - theta_v = 2 pi k / G`.
    pub table: Vec<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct AngularProblem {
    pub n_vertices: usize,
    pub grid: usize,
    pub edges: Vec<AngularEdge>,
    /// Unary phase exponents `m_x`; empty means all zero.
    pub phases: Vec<i64>,
}

impl AngularProblem {
    fn phase(&self, v: usize) -> i64 {
        self.phases.get(v).copied().unwrap_or(0)
    }

    /// Full contraction: product over connected components of the pinned
    /// grid average. `max_frontier` bounds the simultaneously active spins.
    pub fn contract(&self, max_frontier: usize) -> Result<Complex> {
        let comps = self.components();
        let mut total = Complex::ONE;
        for comp in comps {
            let sum: i64 = comp.iter().map(|&v| self.phase(v)).sum();
            if sum != 0 {
                // The global-rotation average of e^{i (sum) c} vanishes.
                return Ok(Complex::ZERO);
            }
            total = total.mul(self.contract_component(&comp, max_frontier)?);
        }
        Ok(total)
    }

    fn components(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n_vertices];
        for e in &self.edges {
            adj[e.u].push(e.v);
            adj[e.v].push(e.u);
        }
        let mut seen = vec![false; self.n_vertices];
        let mut out = Vec::new();
        for start in 0..self.n_vertices {
            if seen[start] {
                continue;
            }
            let mut stack = vec![start];
            seen[start] = true;
            let mut members = Vec::new();
            while let Some(v) = stack.pop() {
                members.push(v);
                for &w in &adj[v] {
                    if !seen[w] {
                        seen[w] = true;
                        stack.push(w);
                    }
                }
            }
            members.sort_unstable();
            out.push(members);
        }
        out
    }

    fn contract_component(&self, comp: &[usize], max_frontier: usize) -> Result<Complex> {
        let g = self.grid;
        debug_assert!(comp.windows(2).all(|w| w[0] < w[1]));
        let order: Vec<usize> = comp.to_vec();
        let pos: std::collections::HashMap<usize, usize> =
            order.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        // Edges grouped by introduction step (the later endpoint).
        let mut edges_at: Vec<Vec<&AngularEdge>> = vec![Vec::new(); order.len()];
        let mut last_use: Vec<usize> = (0..order.len()).collect();
        for e in &self.edges {
            let (Some(&pu), Some(&pv)) = (pos.get(&e.u), pos.get(&e.v)) else {
                continue;
            };
            let later = pu.max(pv);
            edges_at[later].push(e);
            last_use[pu] = last_use[pu].max(later);
            last_use[pv] = last_use[pv].max(later);
        }
        // Precomputed unary phase tables.
        let phase_table = |v: usize, dim: usize| -> Vec<Complex> {
            let m = self.phase(v);
            (0..dim)
                .map(|k| {
                    let a = 2.0 * std::f64::consts::PI * (m * k as i64) as f64 / g as f64;
                    Complex::new(a.cos(), a.sin())
                })
                .collect()
        };

        // Active tensor state.
        let mut active: Vec<usize> = Vec::new(); // positions in `order`
        let mut dims: Vec<usize> = Vec::new();
        let mut tensor: Vec<Complex> = vec![Complex::ONE];

        for (step, &v) in order.iter().enumerate() {
            let v_dim = if step == 0 { 1 } else { g }; // pin first vertex
            let retire: Vec<usize> = active
                .iter()
                .copied()
                .chain(std::iter::once(step))
                .filter(|&p| last_use[p] == step)
                .collect();
            let keep: Vec<usize> = active
                .iter()
                .copied()
                .chain(std::iter::once(step))
                .filter(|&p| last_use[p] != step)
                .collect();
            if keep.len() > max_frontier {
                return Err(CoreError::Size(format!(
                    "quadrature frontier {} exceeds limit {}",
                    keep.len(),
                    max_frontier
                )));
            }
            // Axis layout for the loop: keep axes (output), then retire axes.
            let axes: Vec<usize> = keep.iter().chain(retire.iter()).copied().collect();
            let dim_of = |p: usize| -> usize {
                if p == step {
                    v_dim
                } else {
                    dims[active.iter().position(|&a| a == p).unwrap()]
                }
            };
            let axis_dims: Vec<usize> = axes.iter().map(|&p| dim_of(p)).collect();
            let out_size: usize = keep.iter().map(|&p| dim_of(p)).product();
            let total_size: usize = axis_dims.iter().product();
            if out_size > MAX_TENSOR {
                return Err(CoreError::Size(format!("quadrature tensor of {out_size} entries")));
            }
            if total_size > MAX_LOOP {
                return Err(CoreError::Size(format!("quadrature sum of {total_size} terms")));
            }
            // Strides into the old tensor for each axis (old layout: `active`).
            let mut old_strides_map = vec![0usize; order.len()];
            {
                let mut stride = 1;
                for (i, &p) in active.iter().enumerate().rev() {
                    old_strides_map[p] = stride;
                    stride *= dims[i];
                }
            }
            let unary = phase_table(v, v_dim);
            let n_axes = axes.len();
            let n_keep = keep.len();
            let mut counters = vec![0usize; n_axes];
            let mut out = vec![Complex::ZERO; out_size];
            let v_axis = axes.iter().position(|&p| p == step).unwrap();
            // Edge factors as per-axis signed deltas into their tables.
            struct EdgeRef<'a> {
                table: &'a [f64],
                a_axis: usize,
                b_axis: usize, // table indexed by (g_a - g_b) mod G
                delta: usize,
            }
            let mut edge_refs = Vec::new();
            for e in &edges_at[step] {
                let a_axis = axes.iter().position(|&p| p == pos[&e.u]).unwrap();
                let b_axis = axes.iter().position(|&p| p == pos[&e.v]).unwrap();
                edge_refs.push(EdgeRef { table: &e.table, a_axis, b_axis, delta: 0 });
            }
            let retire_norm: f64 = retire
                .iter()
                .map(|&p| if dim_of(p) == 1 { 1.0 } else { 1.0 / g as f64 })
                .product();
            // Incremental state: old-tensor index, output index, edge deltas.
            let old_stride_of_axis: Vec<usize> =
                axes.iter().map(|&p| if p == step { 0 } else { old_strides_map[p] }).collect();
            let mut out_strides = vec![0usize; n_axes];
            {
                let mut stride = 1;
                for ai in (0..n_keep).rev() {
                    out_strides[ai] = stride;
                    stride *= axis_dims[ai];
                }
            }
            let mut old_idx = 0usize;
            let mut out_idx = 0usize;
            let mut remaining = total_size;
            loop {
                let mut val = tensor[old_idx].mul(unary[counters[v_axis]]);
                for er in &edge_refs {
                    val = val.scale(er.table[er.delta]);
                }
                out[out_idx] = out[out_idx].add(val);
                remaining -= 1;
                if remaining == 0 {
                    break;
                }
                // Advance mixed-radix counter (last axis fastest), updating
                // the derived indices incrementally.
                let mut ax = n_axes;
                loop {
                    ax -= 1;
                    counters[ax] += 1;
                    let wrapped = counters[ax] == axis_dims[ax];
                    let move_by = if wrapped { -((axis_dims[ax] - 1) as i64) } else { 1 };
                    old_idx = (old_idx as i64 + move_by * old_stride_of_axis[ax] as i64) as usize;
                    if ax < n_keep {
                        out_idx = (out_idx as i64 + move_by * out_strides[ax] as i64) as usize;
                    }
                    for er in &mut edge_refs {
                        if er.a_axis == ax {
                            er.delta = (er.delta as i64 + move_by).rem_euclid(g as i64) as usize;
                        }
                        if er.b_axis == ax {
                            er.delta = (er.delta as i64 - move_by).rem_euclid(g as i64) as usize;
                        }
                    }
                    if !wrapped {
                        break;
                    }
                    counters[ax] = 0;
                }
            }
            for o in &mut out {
                *o = o.scale(retire_norm);
            }
            // Commit new state.
            let new_dims: Vec<usize> = keep.iter().map(|&p| dim_of(p)).collect();
            active = keep;
            dims = new_dims;
            tensor = out;
        }
        debug_assert_eq!(tensor.len(), 1);
        Ok(tensor[0])
    }
}

/// Scaled XY edge table: `w[k] = exp(strength * (cos(2 pi k / G - omega) - 1))`.
/// The log of the dropped scale factor is `strength` (per edge).
pub(crate) fn xy_edge_table(grid: usize, strength: f64, omega: f64) -> Vec<f64> {
    (0..grid)
        .map(|k| {
            let a = 2.0 * std::f64::consts::PI * k as f64 / grid as f64 - omega;
            (strength * (a.cos() - 1.0)).exp()
        })
        .collect()
}
