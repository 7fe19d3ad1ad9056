//! Poisson-Voronoi geometry in the plane: point sampling, the Voronoi graph
//! with window-clipped cells and facet lengths, interaction-strength
//! multipliers (F1/F2/F3), and the local events `E_R` (covering), `F_{R,H}`
//! (count bound) and `K` (minimal coupling) used by the renormalization.
//!
//! Cell construction goes through the Delaunay triangulation (`delaunator`,
//! which evaluates its orientation predicates in robust arithmetic and
//! resolves cocircular degeneracies deterministically); each cell is the
//! intersection of the window with the bisector half-planes toward the
//! site's Delaunay neighbours. Facets are measured by 1-D clipping along
//! the bisector line, and point contacts (facets below `1e-12` times the
//! window diagonal) are dropped.

use crate::error::{CoreError, Result};
use crate::graph::{Edge, EdgeClass, WeightedGraph};
use crate::rng::SeedStream;
use crate::stats::KahanSum;
use rand::Rng;
use std::collections::BTreeSet;

/// Axis-aligned rectangular window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
}

impl Window {
    pub fn new(lo: [f64; 2], hi: [f64; 2]) -> Self {
        assert!(hi[0] >= lo[0] && hi[1] >= lo[1]);
        Window { lo, hi }
    }

    pub fn centered_square(half: f64) -> Self {
        Window::new([-half, -half], [half, half])
    }

    pub fn area(&self) -> f64 {
        (self.hi[0] - self.lo[0]) * (self.hi[1] - self.lo[1])
    }

    pub fn diagonal(&self) -> f64 {
        (self.hi[0] - self.lo[0]).hypot(self.hi[1] - self.lo[1])
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        (self.lo[0]..=self.hi[0]).contains(&p[0]) && (self.lo[1]..=self.hi[1]).contains(&p[1])
    }

    pub fn contains_window(&self, inner: &Window) -> bool {
        self.lo[0] <= inner.lo[0]
            && self.lo[1] <= inner.lo[1]
            && self.hi[0] >= inner.hi[0]
            && self.hi[1] >= inner.hi[1]
    }

    fn corners(&self) -> [[f64; 2]; 4] {
        [
            [self.lo[0], self.lo[1]],
            [self.hi[0], self.lo[1]],
            [self.hi[0], self.hi[1]],
            [self.lo[0], self.hi[1]],
        ]
    }
}

/// The square `z + Λ_r = [z - r, z + r]^2` as a window.
pub fn square_around(z: [f64; 2], r: f64) -> Window {
    Window::new([z[0] - r, z[1] - r], [z[0] + r, z[1] + r])
}

fn poisson_count<R: Rng>(mean: f64, rng: &mut R) -> usize {
    // Exact sampling: halve large means (Poisson is infinitely divisible),
    // multiply uniforms below.
    if mean <= 0.0 {
        return 0;
    }
    if mean > 30.0 {
        let half = mean / 2.0;
        return poisson_count(half, rng) + poisson_count(mean - half, rng);
    }
    let limit = (-mean).exp();
    let mut product = rng.gen::<f64>();
    let mut count = 0;
    while product > limit {
        product *= rng.gen::<f64>();
        count += 1;
    }
    count
}

/// Homogeneous Poisson sample of the given intensity on the window;
/// reproducible from the seed.
pub fn sample_poisson_points(window: &Window, intensity: f64, seed: u64) -> Vec<[f64; 2]> {
    let mut rng = SeedStream::new(seed).stream("poisson", 0);
    let n = poisson_count(intensity * window.area(), &mut rng);
    (0..n)
        .map(|_| {
            [
                window.lo[0] + rng.gen::<f64>() * (window.hi[0] - window.lo[0]),
                window.lo[1] + rng.gen::<f64>() * (window.hi[1] - window.lo[1]),
            ]
        })
        .collect()
}

/// Interaction-strength choice per neighbouring cell pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strength {
    /// Constant 1.
    F1,
    /// `f(|V|) f(|V'|)` with the default `f(v) = 1 - e^{-v}`.
    F2,
    /// Shared-boundary length.
    F3,
}

/// Default strictly increasing bounded profile for `F2`.
pub fn f2_default(v: f64) -> f64 {
    1.0 - (-v).exp()
}

#[derive(Debug, Clone)]
pub struct VoronoiCell {
    pub polygon: Vec<[f64; 2]>,
    pub area: f64,
}

#[derive(Debug, Clone)]
pub struct VoronoiGraph {
    points: Vec<[f64; 2]>,
    window: Window,
    cells: Vec<VoronoiCell>,
    /// `(i, j, facet length)` with `i < j`, facet above threshold.
    adjacency: Vec<(usize, usize, f64)>,
    /// Coupling multiplier per adjacency for the chosen strength.
    multipliers: Vec<f64>,
    strength: Strength,
    neighbor_lists: Vec<Vec<(usize, usize)>>,
}

impl VoronoiGraph {
    pub fn n_points(&self) -> usize {
        self.points.len()
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn cell(&self, i: usize) -> &VoronoiCell {
        &self.cells[i]
    }

    pub fn adjacency(&self) -> &[(usize, usize, f64)] {
        &self.adjacency
    }

    pub fn multipliers(&self) -> &[f64] {
        &self.multipliers
    }

    pub fn strength(&self) -> Strength {
        self.strength
    }

    /// Neighbours of site `i` as `(other, adjacency index)`.
    pub fn neighbors(&self, i: usize) -> &[(usize, usize)] {
        &self.neighbor_lists[i]
    }

    pub fn total_cell_area(&self) -> f64 {
        let mut acc = KahanSum::new();
        for c in &self.cells {
            acc.add(c.area);
        }
        acc.value()
    }

    /// Index of the site nearest to `z`.
    pub fn nearest_site(&self, z: [f64; 2]) -> Option<usize> {
        nearest_point_index(&self.points, z)
    }

    /// Spin-model graph over the sites with couplings
    /// `beta * multiplier(adjacency)`. Positions stay in this struct; the
    /// weighted graph carries index coordinates only.
    pub fn to_weighted_graph(&self, beta: f64) -> Result<WeightedGraph> {
        let coords = (0..self.points.len()).map(|i| vec![i as i64]).collect();
        let lattice = vec![true; self.points.len()];
        let edges = self
            .adjacency
            .iter()
            .zip(&self.multipliers)
            .map(|(&(i, j, _), &m)| Edge { u: i, v: j, coupling: beta * m, class: EdgeClass::Generic })
            .collect();
        WeightedGraph::new(1, 1, coords, lattice, edges)
    }
}

pub fn nearest_point_index(points: &[[f64; 2]], z: [f64; 2]) -> Option<usize> {
    points
        .iter()
        .enumerate()
        .map(|(i, p)| (i, (p[0] - z[0]).hypot(p[1] - z[1])))
        .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(std::cmp::Ordering::Equal))
        .map(|(i, _)| i)
}

fn clip_polygon_halfplane(poly: &[[f64; 2]], n: [f64; 2], c: f64) -> Vec<[f64; 2]> {
    // Keep the side n . z <= c (Sutherland-Hodgman).
    let mut out = Vec::with_capacity(poly.len() + 1);
    let inside = |p: [f64; 2]| n[0] * p[0] + n[1] * p[1] <= c;
    for k in 0..poly.len() {
        let p = poly[k];
        let q = poly[(k + 1) % poly.len()];
        let (pin, qin) = (inside(p), inside(q));
        if pin {
            out.push(p);
        }
        if pin != qin {
            let denom = n[0] * (q[0] - p[0]) + n[1] * (q[1] - p[1]);
            let t = (c - n[0] * p[0] - n[1] * p[1]) / denom;
            out.push([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]);
        }
    }
    out
}

fn polygon_area(poly: &[[f64; 2]]) -> f64 {
    let mut acc = KahanSum::new();
    for k in 0..poly.len() {
        let p = poly[k];
        let q = poly[(k + 1) % poly.len()];
        acc.add(p[0] * q[1] - q[0] * p[1]);
    }
    acc.value().abs() / 2.0
}

/// Bisector half-plane toward `a` against `b`: `|z-a| <= |z-b|`.
fn bisector_constraint(a: [f64; 2], b: [f64; 2]) -> ([f64; 2], f64) {
    let n = [b[0] - a[0], b[1] - a[1]];
    let c = (b[0] * b[0] + b[1] * b[1] - a[0] * a[0] - a[1] * a[1]) / 2.0;
    (n, c)
}

/// Delaunay neighbour sets (empty triangulation falls back to all pairs,
/// which happens for two points or fully collinear inputs).
fn delaunay_neighbors(points: &[[f64; 2]]) -> Vec<BTreeSet<usize>> {
    let n = points.len();
    let dpoints: Vec<delaunator::Point> =
        points.iter().map(|p| delaunator::Point { x: p[0], y: p[1] }).collect();
    let tri = delaunator::triangulate(&dpoints);
    let mut nbr = vec![BTreeSet::new(); n];
    if tri.triangles.is_empty() {
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    nbr[i].insert(j);
                }
            }
        }
        return nbr;
    }
    for t in tri.triangles.chunks(3) {
        for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
            nbr[a].insert(b);
            nbr[b].insert(a);
        }
    }
    nbr
}

/// Builds the window-clipped Voronoi diagram with adjacency, facet lengths
/// and strength multipliers.
pub fn build_voronoi_graph(
    points: &[[f64; 2]],
    window: &Window,
    strength: Strength,
) -> Result<VoronoiGraph> {
    build_voronoi_graph_with_f(points, window, strength, f2_default)
}

/// Same as [`build_voronoi_graph`] with a custom `F2` profile.
pub fn build_voronoi_graph_with_f(
    points: &[[f64; 2]],
    window: &Window,
    strength: Strength,
    f2: impl Fn(f64) -> f64,
) -> Result<VoronoiGraph> {
    if points.len() < 2 {
        return Err(CoreError::Degenerate(format!(
            "Voronoi graph needs at least 2 points, got {}",
            points.len()
        )));
    }
    let n = points.len();
    let nbr = delaunay_neighbors(points);
    // Cells: window clipped by bisectors toward Delaunay neighbours.
    let rect: Vec<[f64; 2]> = window.corners().to_vec();
    let mut cells = Vec::with_capacity(n);
    for i in 0..n {
        let mut poly = rect.clone();
        for &j in &nbr[i] {
            if poly.is_empty() {
                break;
            }
            let (normal, c) = bisector_constraint(points[i], points[j]);
            poly = clip_polygon_halfplane(&poly, normal, c);
        }
        let area = polygon_area(&poly);
        cells.push(VoronoiCell { polygon: poly, area });
    }
    // Facets by 1-D clipping along each candidate bisector.
    let threshold = 1e-12 * window.diagonal();
    let mut adjacency = Vec::new();
    for i in 0..n {
        for &j in &nbr[i] {
            if j <= i {
                continue;
            }
            if let Some(len) = facet_length(points, &nbr, i, j, window) {
                if len > threshold {
                    adjacency.push((i, j, len));
                }
            }
        }
    }
    adjacency.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
    let multipliers = adjacency
        .iter()
        .map(|&(i, j, len)| match strength {
            Strength::F1 => 1.0,
            Strength::F2 => f2(cells[i].area) * f2(cells[j].area),
            Strength::F3 => len,
        })
        .collect();
    let mut neighbor_lists = vec![Vec::new(); n];
    for (idx, &(i, j, _)) in adjacency.iter().enumerate() {
        neighbor_lists[i].push((j, idx));
        neighbor_lists[j].push((i, idx));
    }
    Ok(VoronoiGraph {
        points: points.to_vec(),
        window: *window,
        cells,
        adjacency,
        multipliers,
        strength,
        neighbor_lists,
    })
}

/// Length of the shared facet of cells `i` and `j` inside the window, or
/// `None` when empty: the bisector line clipped against the window and
/// against both sites' remaining bisector half-planes.
fn facet_length(
    points: &[[f64; 2]],
    nbr: &[BTreeSet<usize>],
    i: usize,
    j: usize,
    window: &Window,
) -> Option<f64> {
    let (a, b) = (points[i], points[j]);
    let mid = [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0];
    let d = [b[0] - a[0], b[1] - a[1]];
    let norm = d[0].hypot(d[1]);
    if norm == 0.0 {
        return None;
    }
    // Unit direction along the bisector.
    let u = [-d[1] / norm, d[0] / norm];
    let mut t_lo = f64::NEG_INFINITY;
    let mut t_hi = f64::INFINITY;
    // Window constraints: lo <= mid + t u <= hi per axis.
    for axis in 0..2 {
        let (m, du) = (mid[axis], u[axis]);
        let (wl, wh) = (window.lo[axis], window.hi[axis]);
        if du.abs() < 1e-300 {
            if m < wl || m > wh {
                return None;
            }
        } else {
            let (t1, t2) = ((wl - m) / du, (wh - m) / du);
            t_lo = t_lo.max(t1.min(t2));
            t_hi = t_hi.min(t1.max(t2));
        }
    }
    // Half-plane constraints from the union of both neighbour sets.
    for &k in nbr[i].iter().chain(nbr[j].iter()) {
        if k == i || k == j {
            continue;
        }
        let (normal, c) = bisector_constraint(a, points[k]);
        // normal . (mid + t u) <= c.
        let base = normal[0] * mid[0] + normal[1] * mid[1];
        let slope = normal[0] * u[0] + normal[1] * u[1];
        if slope.abs() < 1e-300 {
            if base > c {
                return None;
            }
        } else {
            let t = (c - base) / slope;
            if slope > 0.0 {
                t_hi = t_hi.min(t);
            } else {
                t_lo = t_lo.max(t);
            }
        }
        if t_hi <= t_lo {
            return None;
        }
    }
    (t_hi > t_lo).then_some(t_hi - t_lo)
}

/// Outcome of the three local Voronoi events around `z` at scale `r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoronoiEvents {
    /// Every location of `z + Λ_{5r}` has a point of the sample within
    /// `r/10`.
    pub e_r: bool,
    /// `#(P ∩ (z + Λ_r)) <= h r^2`.
    pub f_rh: bool,
    /// `min` over adjacent pairs inside `z + Λ_{4r}` of
    /// `min(f(|V|) f(|V'|), facet length)`; absent when `E_R` fails.
    pub k: Option<f64>,
}

/// Decides `E_R`, `F_{R,H}` and `K(z, R)` from the finite sample. The
/// covering test is exact on the continuum: the farthest location from the
/// sample inside the square is attained at a Voronoi vertex, at a crossing
/// of a Voronoi edge with the square boundary, or at a square corner.
pub fn check_voronoi_events(
    graph: &VoronoiGraph,
    z: [f64; 2],
    r: f64,
    h: f64,
) -> Result<VoronoiEvents> {
    if !(r > 0.0) {
        return Err(CoreError::Domain("scale r must be positive".into()));
    }
    if !graph.window().contains_window(&square_around(z, 6.0 * r)) {
        return Err(CoreError::Coverage(
            "window does not cover z + Lambda_{6R}; events are not measurable".into(),
        ));
    }
    let points = graph.points();
    let count_in_r = points
        .iter()
        .filter(|p| (p[0] - z[0]).abs() <= r && (p[1] - z[1]).abs() <= r)
        .count();
    let f_rh = (count_in_r as f64) <= h * r * r;
    let e_r = covering_holds(graph, z, 5.0 * r, r / 10.0);
    let k = if e_r {
        let q4 = square_around(z, 4.0 * r);
        let mut min_k = f64::INFINITY;
        for (idx, &(i, j, len)) in graph.adjacency().iter().enumerate() {
            let _ = idx;
            if q4.contains(points[i]) && q4.contains(points[j]) {
                let f2v = f2_default(graph.cell(i).area) * f2_default(graph.cell(j).area);
                min_k = min_k.min(f2v.min(len));
            }
        }
        (min_k.is_finite()).then_some(min_k)
    } else {
        None
    };
    Ok(VoronoiEvents { e_r, f_rh, k })
}

/// Exact covering test: every location of the square `z + Λ_half` is within
/// `radius` of some sample point.
fn covering_holds(graph: &VoronoiGraph, z: [f64; 2], half: f64, radius: f64) -> bool {
    let q = square_around(z, half);
    let points = graph.points();
    let dist = |p: [f64; 2], s: [f64; 2]| (p[0] - s[0]).hypot(p[1] - s[1]);
    // Square corners.
    for corner in q.corners() {
        match nearest_point_index(points, corner) {
            Some(i) => {
                if dist(corner, points[i]) > radius {
                    return false;
                }
            }
            None => return false,
        }
    }
    // Voronoi vertices inside the square, and edge crossings with the
    // square boundary: both are polygon-vertex/edge events of the cells.
    for (i, cell) in (0..graph.n_points()).map(|i| (i, graph.cell(i))) {
        let site = points[i];
        let poly = &cell.polygon;
        for k in 0..poly.len() {
            let p = poly[k];
            if q.contains(p) && dist(p, site) > radius {
                return false;
            }
            let pnext = poly[(k + 1) % poly.len()];
            for crossing in segment_square_crossings(p, pnext, &q) {
                if dist(crossing, site) > radius {
                    return false;
                }
            }
        }
    }
    true
}

fn segment_square_crossings(p: [f64; 2], q: [f64; 2], sq: &Window) -> Vec<[f64; 2]> {
    let mut out = Vec::new();
    for axis in 0..2 {
        for &bound in &[sq.lo[axis], sq.hi[axis]] {
            let denom = q[axis] - p[axis];
            if denom.abs() < 1e-300 {
                continue;
            }
            let t = (bound - p[axis]) / denom;
            if (0.0..=1.0).contains(&t) {
                let other = 1 - axis;
                let mut pt = [0.0; 2];
                pt[axis] = bound;
                pt[other] = p[other] + t * (q[other] - p[other]);
                if sq.lo[other] - 1e-12 <= pt[other] && pt[other] <= sq.hi[other] + 1e-12 {
                    out.push(pt);
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn poisson_sampling_moments_and_determinism() {
        let w = Window::centered_square(50.0); // area 10^4
        let pts = sample_poisson_points(&w, 1.0, 42);
        let n = pts.len() as f64;
        assert!((n - 1e4).abs() < 4.0 * 1e2, "count {n}");
        assert!(pts.iter().all(|&p| w.contains(p)));
        let again = sample_poisson_points(&w, 1.0, 42);
        assert_eq!(pts, again);
        // Zero-area limit.
        let w0 = Window::new([1.0, 1.0], [1.0, 1.0]);
        assert!(sample_poisson_points(&w0, 1.0, 1).is_empty());
    }

    #[test]
    fn two_points_bisector_facet() {
        let w = Window::new([0.0, 0.0], [2.0, 1.0]);
        let pts = [[0.5, 0.5], [1.5, 0.5]];
        let g = build_voronoi_graph(&pts, &w, Strength::F3).unwrap();
        assert_eq!(g.adjacency().len(), 1);
        let (i, j, len) = g.adjacency()[0];
        assert_eq!((i, j), (0, 1));
        // The bisector x = 1 clipped to the window has length 1.
        assert!((len - 1.0).abs() < 1e-12);
        // F3 multiplier equals the facet length.
        assert!((g.multipliers()[0] - len).abs() < 1e-15);
        // Areas split the window evenly.
        assert!((g.cell(0).area - 1.0).abs() < 1e-12);
        assert!((g.total_cell_area() - w.area()).abs() < 1e-12);
    }

    #[test]
    fn three_points_mutually_adjacent() {
        let w = Window::centered_square(3.0);
        let pts = [[0.0, 1.0], [-1.0, -0.5], [1.0, -0.5]];
        let g = build_voronoi_graph(&pts, &w, Strength::F1).unwrap();
        assert_eq!(g.adjacency().len(), 3);
        assert!(g.multipliers().iter().all(|&m| m == 1.0));
        assert!((g.total_cell_area() - w.area()).abs() < 1e-9 * w.area());
    }

    #[test]
    fn degenerate_inputs() {
        let w = Window::centered_square(1.0);
        assert!(build_voronoi_graph(&[[0.0, 0.0]], &w, Strength::F1).is_err());
        // Collinear points still produce the path adjacency.
        let pts = [[-0.5, 0.0], [0.0, 0.0], [0.5, 0.0]];
        let g = build_voronoi_graph(&pts, &w, Strength::F1).unwrap();
        assert_eq!(g.adjacency().len(), 2);
    }

    #[test]
    fn areas_sum_to_window_area_on_random_sample() {
        let w = Window::centered_square(8.0);
        let pts = sample_poisson_points(&w, 1.0, 7);
        let g = build_voronoi_graph(&pts, &w, Strength::F2).unwrap();
        let total = g.total_cell_area();
        assert!(
            (total - w.area()).abs() < 1e-9 * w.area(),
            "sum {total} vs window {}",
            w.area()
        );
    }

    #[test]
    fn covering_event_on_fine_grid() {
        // Grid spacing below r/(10 sqrt 2) covers everything.
        let r = 2.0;
        let spacing = r / 10.0 / 1.5_f64.sqrt();
        let mut pts = Vec::new();
        let reach = 13.0 * r;
        let steps = (2.0 * reach / spacing).ceil() as i64;
        for ix in 0..=steps {
            for iy in 0..=steps {
                pts.push([-reach + ix as f64 * spacing, -reach + iy as f64 * spacing]);
            }
        }
        let w = Window::centered_square(reach);
        let g = build_voronoi_graph(&pts, &w, Strength::F1).unwrap();
        let ev = check_voronoi_events(&g, [0.0, 0.0], r, 1e9).unwrap();
        assert!(ev.e_r);
        assert!(ev.f_rh);
        assert!(ev.k.is_some());
        // A sparse sample fails the covering.
        let sparse = [[-20.0, -20.0], [20.0, 20.0], [-20.0, 20.0], [20.0, -20.0], [0.0, 0.0]];
        let g = build_voronoi_graph(&sparse, &w, Strength::F1).unwrap();
        let ev = check_voronoi_events(&g, [0.0, 0.0], r, 1e9).unwrap();
        assert!(!ev.e_r);
        assert!(ev.k.is_none());
    }

    #[test]
    fn events_require_window_coverage() {
        let w = Window::centered_square(5.0);
        let pts = sample_poisson_points(&w, 1.0, 3);
        let g = build_voronoi_graph(&pts, &w, Strength::F1).unwrap();
        assert!(check_voronoi_events(&g, [0.0, 0.0], 1.0, 1.0).is_err());
    }

    #[test]
    fn count_event_thresholds() {
        let w = Window::centered_square(30.0);
        let pts = sample_poisson_points(&w, 1.0, 11);
        let g = build_voronoi_graph(&pts, &w, Strength::F1).unwrap();
        let r = 4.0;
        let inside = pts
            .iter()
            .filter(|p| p[0].abs() <= r && p[1].abs() <= r)
            .count() as f64;
        let ev_tight = check_voronoi_events(&g, [0.0, 0.0], r, (inside - 1.0) / (r * r)).unwrap();
        assert!(!ev_tight.f_rh);
        let ev_loose = check_voronoi_events(&g, [0.0, 0.0], r, (inside + 1.0) / (r * r)).unwrap();
        assert!(ev_loose.f_rh);
    }
}
