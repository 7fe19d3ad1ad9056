//! Deterministic graph families: boxes of `Z^d`, the extended lattice
//! `Z^d_n` (n extra vertices per edge), the extended triangulation (diagonals
//! subdivided by `2n+1` vertices), its dual, and renormalized box graphs.
//!
//! Vertex coordinates are exact rationals stored as integer numerators over a
//! single per-graph denominator (`n+1` for extended lattices, `2(n+1)` for
//! triangulations), so membership tests like "x in Z^d" are exact. Vertex ids
//! are assigned in row-major lexicographic coordinate order and all
//! downstream tie-breaking is lexicographic in id. Graphs are immutable once
//! built.

use crate::error::{CoreError, Result};
use std::collections::BTreeMap;

pub const MAX_VERTICES: usize = 1 << 31;

/// Inverse-temperature class of an edge. On extended lattices an edge is
/// `Beta1` iff at least one endpoint lies in the distinguished vertex set
/// (`Z^d`, or `Z^2 ∪ (1/2,1/2)+Z^2` for triangulations), `Beta2` otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EdgeClass {
    Beta1,
    Beta2,
    Generic,
}

impl EdgeClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            EdgeClass::Beta1 => "beta1",
            EdgeClass::Beta2 => "beta2",
            EdgeClass::Generic => "generic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub coupling: f64,
    pub class: EdgeClass,
}

/// Immutable weighted graph with exact rational vertex positions.
#[derive(Debug, Clone)]
pub struct WeightedGraph {
    dimension: usize,
    denominator: i64,
    /// Coordinate numerators, one `dimension`-vector per vertex, sorted
    /// lexicographically (this ordering defines the vertex ids).
    coords: Vec<Vec<i64>>,
    /// Marks vertices of the original lattice `Z^d`.
    lattice: Vec<bool>,
    edges: Vec<Edge>,
    adjacency: Vec<Vec<(usize, usize)>>,
}

impl WeightedGraph {
    /// Assembles a graph from raw parts, enforcing the structural invariants:
    /// dense ids, no self-loops, no duplicate undirected edges, nonnegative
    /// couplings.
    pub fn new(
        dimension: usize,
        denominator: i64,
        coords: Vec<Vec<i64>>,
        lattice: Vec<bool>,
        edges: Vec<Edge>,
    ) -> Result<Self> {
        if coords.len() > MAX_VERTICES {
            return Err(CoreError::Size(format!("{} vertices", coords.len())));
        }
        if lattice.len() != coords.len() {
            return Err(CoreError::Shape("lattice flags".into()));
        }
        let n = coords.len();
        let mut seen = BTreeMap::new();
        for e in &edges {
            if e.u >= n || e.v >= n {
                return Err(CoreError::Shape(format!("edge ({}, {}) out of range", e.u, e.v)));
            }
            if e.u == e.v {
                return Err(CoreError::Topology(format!("self-loop at {}", e.u)));
            }
            if !(e.coupling >= 0.0) {
                return Err(CoreError::Domain(format!("coupling {} on ({}, {})", e.coupling, e.u, e.v)));
            }
            let key = (e.u.min(e.v), e.u.max(e.v));
            if seen.insert(key, ()).is_some() {
                return Err(CoreError::Topology(format!("duplicate edge ({}, {})", key.0, key.1)));
            }
        }
        let mut adjacency = vec![Vec::new(); n];
        for (i, e) in edges.iter().enumerate() {
            adjacency[e.u].push((e.v, i));
            adjacency[e.v].push((e.u, i));
        }
        for adj in &mut adjacency {
            adj.sort_unstable();
        }
        Ok(WeightedGraph { dimension, denominator, coords, lattice, edges, adjacency })
    }

    /// Small ad-hoc graph for tests and oracle fixtures; vertex `i` sits at
    /// coordinate `i` on a line.
    pub fn fixture(n_vertices: usize, edges: &[(usize, usize, f64, EdgeClass)]) -> Result<Self> {
        let coords = (0..n_vertices).map(|i| vec![i as i64]).collect();
        let lattice = vec![true; n_vertices];
        let edges = edges
            .iter()
            .map(|&(u, v, coupling, class)| Edge { u, v, coupling, class })
            .collect();
        Self::new(1, 1, coords, lattice, edges)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn denominator(&self) -> i64 {
        self.denominator
    }

    pub fn n_vertices(&self) -> usize {
        self.coords.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn coords(&self, v: usize) -> &[i64] {
        &self.coords[v]
    }

    /// Exact rational position as floats (for geometry output only).
    pub fn position(&self, v: usize) -> Vec<f64> {
        self.coords[v].iter().map(|&c| c as f64 / self.denominator as f64).collect()
    }

    pub fn is_lattice_vertex(&self, v: usize) -> bool {
        self.lattice[v]
    }

    pub fn lattice_vertices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_vertices()).filter(|&v| self.lattice[v])
    }

    /// Neighbors of `v` as `(neighbor, edge index)`, ascending by neighbor id.
    pub fn neighbors(&self, v: usize) -> &[(usize, usize)] {
        &self.adjacency[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adjacency[v].len()
    }

    /// Id of the vertex whose integer coordinates are `point` (on the
    /// lattice scale, i.e. numerators `point * denominator`).
    pub fn vertex_at_lattice_point(&self, point: &[i64]) -> Option<usize> {
        let scaled: Vec<i64> = point.iter().map(|&c| c * self.denominator).collect();
        self.vertex_at(&scaled)
    }

    /// Id of the vertex with the given coordinate numerators.
    pub fn vertex_at(&self, numerators: &[i64]) -> Option<usize> {
        self.coords.binary_search_by(|probe| probe.as_slice().cmp(numerators)).ok()
    }

    /// A graph with identical structure and per-edge couplings given by `f`.
    pub fn with_couplings(&self, f: impl Fn(usize, &Edge) -> f64) -> Result<Self> {
        let edges = self
            .edges
            .iter()
            .enumerate()
            .map(|(i, e)| Edge { coupling: f(i, e), ..*e })
            .collect();
        Self::new(self.dimension, self.denominator, self.coords.clone(), self.lattice.clone(), edges)
    }

    /// Connected components induced by edges with `keep(edge index) == true`;
    /// returns one sorted vertex list per component, ordered by smallest id.
    pub fn components(&self, keep: impl Fn(usize) -> bool) -> Vec<Vec<usize>> {
        let n = self.n_vertices();
        let mut comp = vec![usize::MAX; n];
        let mut out: Vec<Vec<usize>> = Vec::new();
        for start in 0..n {
            if comp[start] != usize::MAX {
                continue;
            }
            let id = out.len();
            let mut stack = vec![start];
            let mut members = vec![];
            comp[start] = id;
            while let Some(v) = stack.pop() {
                members.push(v);
                for &(w, e) in &self.adjacency[v] {
                    if comp[w] == usize::MAX && keep(e) {
                        comp[w] = id;
                        stack.push(w);
                    }
                }
            }
            members.sort_unstable();
            out.push(members);
        }
        out
    }
}

/// An axis-aligned box `center + {-L..L}^d` of `Z^d`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatticeBox {
    pub center: Vec<i64>,
    pub radius: i64,
}

impl LatticeBox {
    pub fn new(center: Vec<i64>, radius: i64) -> Self {
        assert!(radius >= 0);
        LatticeBox { center, radius }
    }

    pub fn centered(dimension: usize, radius: i64) -> Self {
        Self::new(vec![0; dimension], radius)
    }

    pub fn dimension(&self) -> usize {
        self.center.len()
    }

    pub fn sidelength(&self) -> i64 {
        2 * self.radius + 1
    }

    pub fn cardinality(&self) -> u128 {
        (self.sidelength() as u128).pow(self.dimension() as u32)
    }

    /// L-infinity diameter of the box, `2L`.
    pub fn diameter(&self) -> i64 {
        2 * self.radius
    }

    /// Scaling `k * Box` keeps the center and multiplies the radius.
    pub fn scaled(&self, k: i64) -> Self {
        Self::new(self.center.clone(), self.radius * k)
    }

    pub fn contains(&self, point: &[i64]) -> bool {
        point.iter().zip(&self.center).all(|(&p, &c)| (p - c).abs() <= self.radius)
    }

    /// All points of the box in row-major lexicographic order.
    pub fn points(&self) -> Vec<Vec<i64>> {
        let d = self.dimension();
        let side = self.sidelength() as usize;
        let mut out = Vec::with_capacity(side.pow(d as u32));
        let mut p: Vec<i64> = self.center.iter().map(|c| c - self.radius).collect();
        loop {
            out.push(p.clone());
            let mut axis = d;
            loop {
                if axis == 0 {
                    return out;
                }
                axis -= 1;
                p[axis] += 1;
                if p[axis] <= self.center[axis] + self.radius {
                    break;
                }
                p[axis] = self.center[axis] - self.radius;
            }
        }
    }
}

fn check_cardinality(card: u128) -> Result<usize> {
    if card > MAX_VERTICES as u128 {
        Err(CoreError::Size(format!("{card} vertices")))
    } else {
        Ok(card as usize)
    }
}

struct GraphBuilder {
    dimension: usize,
    denominator: i64,
    ids: BTreeMap<Vec<i64>, usize>,
    edges: Vec<(Vec<i64>, Vec<i64>, f64, EdgeClass)>,
}

impl GraphBuilder {
    fn new(dimension: usize, denominator: i64) -> Self {
        GraphBuilder { dimension, denominator, ids: BTreeMap::new(), edges: Vec::new() }
    }

    fn vertex(&mut self, coords: Vec<i64>) {
        let next = self.ids.len();
        self.ids.entry(coords).or_insert(next);
    }

    fn edge(&mut self, a: Vec<i64>, b: Vec<i64>, coupling: f64, class: EdgeClass) {
        self.vertex(a.clone());
        self.vertex(b.clone());
        self.edges.push((a, b, coupling, class));
    }

    fn finish(self, is_lattice: impl Fn(&[i64]) -> bool) -> Result<WeightedGraph> {
        // Re-key ids in sorted (row-major lexicographic) order.
        let coords: Vec<Vec<i64>> = self.ids.keys().cloned().collect();
        let index: BTreeMap<&[i64], usize> =
            coords.iter().enumerate().map(|(i, c)| (c.as_slice(), i)).collect();
        let lattice = coords.iter().map(|c| is_lattice(c)).collect();
        let edges = self
            .edges
            .iter()
            .map(|(a, b, coupling, class)| Edge {
                u: index[a.as_slice()],
                v: index[b.as_slice()],
                coupling: *coupling,
                class: *class,
            })
            .collect();
        WeightedGraph::new(self.dimension, self.denominator, coords, lattice, edges)
    }
}

/// Nearest-neighbour box graph of `Z^d` with uniform coupling `beta`, free
/// boundary: `(2L+1)^d` vertices, `d (2L+1)^{d-1} 2L` edges.
pub fn build_box_lattice(d: usize, l: i64, beta: f64) -> Result<WeightedGraph> {
    if d < 1 {
        return Err(CoreError::Dimension("d must be >= 1".into()));
    }
    let bx = LatticeBox::centered(d, l);
    check_cardinality(bx.cardinality())?;
    let mut builder = GraphBuilder::new(d, 1);
    for p in bx.points() {
        builder.vertex(p.clone());
        for axis in 0..d {
            let mut q = p.clone();
            q[axis] += 1;
            if bx.contains(&q) {
                builder.edge(p.clone(), q, beta, EdgeClass::Generic);
            }
        }
    }
    builder.finish(|_| true)
}

/// Nearest-neighbour graph on the rectangle `prod_a [lo_a, hi_a]` of `Z^d`
/// with uniform coupling, free boundary.
pub fn build_rect_lattice(lo: &[i64], hi: &[i64], beta: f64) -> Result<WeightedGraph> {
    let d = lo.len();
    if d < 1 || hi.len() != d {
        return Err(CoreError::Dimension("rectangle bounds".into()));
    }
    let mut card: u128 = 1;
    for a in 0..d {
        if hi[a] < lo[a] {
            return Err(CoreError::Domain("empty rectangle".into()));
        }
        card *= (hi[a] - lo[a] + 1) as u128;
    }
    check_cardinality(card)?;
    let mut builder = GraphBuilder::new(d, 1);
    let mut p = lo.to_vec();
    'outer: loop {
        builder.vertex(p.clone());
        for axis in 0..d {
            let mut q = p.clone();
            q[axis] += 1;
            if q[axis] <= hi[axis] {
                builder.edge(p.clone(), q, beta, EdgeClass::Generic);
            }
        }
        let mut axis = d;
        loop {
            if axis == 0 {
                break 'outer;
            }
            axis -= 1;
            p[axis] += 1;
            if p[axis] <= hi[axis] {
                break;
            }
            p[axis] = lo[axis];
        }
    }
    builder.finish(|_| true)
}

/// Extended-lattice box `Λ_L^n`: the box graph with `n` vertices inserted on
/// each edge. The two end segments of every subdivided edge touch `Z^d` and
/// carry class `Beta1`/coupling `beta1`; interior segments carry
/// `Beta2`/`beta2`.
pub fn build_extended_lattice(
    d: usize,
    l: i64,
    n: usize,
    beta1: f64,
    beta2: f64,
) -> Result<WeightedGraph> {
    if d < 1 {
        return Err(CoreError::Dimension("d must be >= 1".into()));
    }
    let bx = LatticeBox::centered(d, l);
    let n_edges = d as u128 * (bx.sidelength() as u128).pow(d as u32 - 1) * (2 * l) as u128;
    check_cardinality(bx.cardinality() + n_edges * n as u128)?;
    let den = (n + 1) as i64;
    let mut builder = GraphBuilder::new(d, den);
    for p in bx.points() {
        let scaled: Vec<i64> = p.iter().map(|&c| c * den).collect();
        builder.vertex(scaled.clone());
        for axis in 0..d {
            let mut q = p.clone();
            q[axis] += 1;
            if !bx.contains(&q) {
                continue;
            }
            // Path of n+1 segments from p to q along `axis`.
            let mut prev = scaled.clone();
            for j in 1..=(n as i64 + 1) {
                let mut next = scaled.clone();
                next[axis] += j;
                let touches_lattice = j == 1 || j == n as i64 + 1;
                let (coupling, class) = if touches_lattice {
                    (beta1, EdgeClass::Beta1)
                } else {
                    (beta2, EdgeClass::Beta2)
                };
                builder.edge(prev, next.clone(), coupling, class);
                prev = next;
            }
        }
    }
    builder.finish(|c| c.iter().all(|&x| x % den == 0))
}

/// Extended triangulation on the box `Λ_L`: the extended lattice plus the
/// top-left-to-bottom-right diagonal of every unit square, each diagonal
/// subdivided by `2n+1` added vertices. An edge is `Beta1` iff one of its
/// endpoints lies in `Z^2 ∪ (1/2,1/2)+Z^2` (lattice corners and diagonal
/// midpoints), else `Beta2`.
pub fn build_extended_triangulation(
    l: i64,
    n: usize,
    beta1: f64,
    beta2: f64,
) -> Result<WeightedGraph> {
    let d = 2;
    let bx = LatticeBox::centered(d, l);
    let den = 2 * (n as i64 + 1);
    let half = den / 2;
    let in_beta1_set = move |c: &[i64]| {
        c.iter().all(|&x| x.rem_euclid(den) == 0) || c.iter().all(|&x| x.rem_euclid(den) == half)
    };
    let mut builder = GraphBuilder::new(d, den);
    // Extended-lattice part at denominator 2(n+1): subdivision step is 2.
    for p in bx.points() {
        let scaled: Vec<i64> = p.iter().map(|&c| c * den).collect();
        builder.vertex(scaled.clone());
        for axis in 0..d {
            let mut q = p.clone();
            q[axis] += 1;
            if !bx.contains(&q) {
                continue;
            }
            let mut prev = scaled.clone();
            for j in 1..=(n as i64 + 1) {
                let mut next = scaled.clone();
                next[axis] += 2 * j;
                let (coupling, class) = if in_beta1_set(&prev) || in_beta1_set(&next) {
                    (beta1, EdgeClass::Beta1)
                } else {
                    (beta2, EdgeClass::Beta2)
                };
                builder.edge(prev, next.clone(), coupling, class);
                prev = next;
            }
        }
    }
    // Diagonals from top-left (x, y+1) to bottom-right (x+1, y), subdivided
    // into 2n+2 segments (2n+1 added vertices; the middle one is the
    // half-integer center of the square).
    for x in -l..l {
        for y in -l..l {
            let top_left = vec![x * den, (y + 1) * den];
            let mut prev = top_left.clone();
            for j in 1..=(2 * n as i64 + 2) {
                let next = vec![x * den + j, (y + 1) * den - j];
                let (coupling, class) = if in_beta1_set(&prev) || in_beta1_set(&next) {
                    (beta1, EdgeClass::Beta1)
                } else {
                    (beta2, EdgeClass::Beta2)
                };
                builder.edge(prev, next.clone(), coupling, class);
                prev = next;
            }
        }
    }
    builder.finish(|c| c.iter().all(|&x| x % den == 0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DualEdgeType {
    Type1,
    Type2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaceKind {
    /// Triangle on the lower-left side of the diagonal of its square.
    Lower,
    /// Triangle on the upper-right side.
    Upper,
}

#[derive(Debug, Clone)]
pub struct Face {
    pub id: usize,
    /// Lower-left corner of the unit square the face belongs to.
    pub square: (i64, i64),
    pub kind: FaceKind,
    /// Indices of the primal (triangulation) edges on this face's sides.
    pub primal_edges: Vec<usize>,
}

/// Dual of the extended triangulation: one vertex per triangular face, edges
/// typed by the number of shared primal edges (`n+1` across a square side,
/// `2n+2` across a diagonal).
#[derive(Debug, Clone)]
pub struct DualGraph {
    pub faces: Vec<Face>,
    pub dual_edges: Vec<(usize, usize, DualEdgeType)>,
    adjacency: Vec<Vec<(usize, usize)>>,
    boundary: Vec<bool>,
    origin_face: usize,
    subdivisions: usize,
}

impl DualGraph {
    /// Hand-assembled dual graph for tests and enumeration oracles.
    pub fn fixture(
        n_faces: usize,
        edges: &[(usize, usize, DualEdgeType)],
        boundary: &[bool],
        origin_face: usize,
        subdivisions: usize,
    ) -> Result<Self> {
        if boundary.len() != n_faces || origin_face >= n_faces {
            return Err(CoreError::Shape("dual fixture shape".into()));
        }
        let faces = (0..n_faces)
            .map(|id| Face { id, square: (0, 0), kind: FaceKind::Lower, primal_edges: vec![] })
            .collect();
        let mut adjacency = vec![Vec::new(); n_faces];
        for (i, &(a, b, _)) in edges.iter().enumerate() {
            adjacency[a].push((b, i));
            adjacency[b].push((a, i));
        }
        for adj in &mut adjacency {
            adj.sort_unstable();
        }
        Ok(DualGraph {
            faces,
            dual_edges: edges.to_vec(),
            adjacency,
            boundary: boundary.to_vec(),
            origin_face,
            subdivisions,
        })
    }

    pub fn n_faces(&self) -> usize {
        self.faces.len()
    }

    /// Neighbors of face `u` as `(face, dual edge index)`.
    pub fn neighbors(&self, u: usize) -> &[(usize, usize)] {
        &self.adjacency[u]
    }

    /// Faces adjacent (in the infinite dual graph) to a face outside this
    /// finite piece; height functions are pinned to 0 there.
    pub fn is_boundary(&self, u: usize) -> bool {
        self.boundary[u]
    }

    /// The distinguished face `0_{Γ_n^*}`: the top-right face incident to the
    /// vertex 0, i.e. the lower triangle of the square with corner (0,0).
    pub fn origin_face(&self) -> usize {
        self.origin_face
    }

    pub fn subdivisions(&self) -> usize {
        self.subdivisions
    }
}

/// Builds the dual graph of a triangulation produced by
/// [`build_extended_triangulation`].
pub fn build_dual_graph(tri: &WeightedGraph) -> Result<DualGraph> {
    let den = tri.denominator();
    if tri.dimension() != 2 || den % 2 != 0 {
        return Err(CoreError::Topology("input is not an extended triangulation".into()));
    }
    let n = (den / 2 - 1) as usize;
    // Index primal edges by their midpoint doubled (exact integer key).
    let mut edge_at = BTreeMap::new();
    for (i, e) in tri.edges().iter().enumerate() {
        let a = tri.coords(e.u);
        let b = tri.coords(e.v);
        edge_at.insert((a[0] + b[0], a[1] + b[1]), i);
    }
    let mut lattice_xs: Vec<i64> = tri
        .lattice_vertices()
        .map(|v| tri.coords(v)[0] / den)
        .collect();
    lattice_xs.sort_unstable();
    let l = *lattice_xs.last().ok_or_else(|| CoreError::Topology("empty triangulation".into()))?;

    let mut faces = Vec::new();
    let mut face_id = BTreeMap::new();
    let side_edges = |a: (i64, i64), b: (i64, i64)| -> Result<Vec<usize>> {
        // All subdivided segments from corner a to corner b (scaled by den).
        let steps = if a.0 != b.0 && a.1 != b.1 { 2 * n as i64 + 2 } else { n as i64 + 1 };
        let dx = (b.0 - a.0) * den / steps;
        let dy = (b.1 - a.1) * den / steps;
        (0..steps)
            .map(|j| {
                let key = (2 * a.0 * den + (2 * j + 1) * dx, 2 * a.1 * den + (2 * j + 1) * dy);
                edge_at
                    .get(&key)
                    .copied()
                    .ok_or_else(|| CoreError::Topology(format!("missing primal edge near {key:?}")))
            })
            .collect()
    };
    for x in -l..l {
        for y in -l..l {
            // Corners: bl=(x,y), br=(x+1,y), tl=(x,y+1), tr=(x+1,y+1).
            let (bl, br, tl, tr) = ((x, y), (x + 1, y), (x, y + 1), (x + 1, y + 1));
            let mut lower = side_edges(bl, br)?;
            lower.extend(side_edges(bl, tl)?);
            lower.extend(side_edges(tl, br)?);
            let id = faces.len();
            face_id.insert((x, y, 0u8), id);
            faces.push(Face { id, square: (x, y), kind: FaceKind::Lower, primal_edges: lower });
            let mut upper = side_edges(tl, tr)?;
            upper.extend(side_edges(br, tr)?);
            upper.extend(side_edges(tl, br)?);
            let id = faces.len();
            face_id.insert((x, y, 1u8), id);
            faces.push(Face { id, square: (x, y), kind: FaceKind::Upper, primal_edges: upper });
        }
    }
    // Dual edges by shared-primal-edge counting.
    let mut incident: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for f in &faces {
        for &e in &f.primal_edges {
            incident.entry(e).or_default().push(f.id);
        }
    }
    let mut shared: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for fs in incident.values() {
        if fs.len() > 2 {
            return Err(CoreError::Topology("primal edge on more than two faces".into()));
        }
        if let [a, b] = fs[..] {
            *shared.entry((a.min(b), a.max(b))).or_insert(0) += 1;
        }
    }
    let mut dual_edges = Vec::new();
    for ((a, b), count) in shared {
        let ty = if count == n + 1 {
            DualEdgeType::Type1
        } else if count == 2 * n + 2 {
            DualEdgeType::Type2
        } else {
            return Err(CoreError::Topology(format!("faces {a},{b} share {count} primal edges")));
        };
        dual_edges.push((a, b, ty));
    }
    let mut adjacency = vec![Vec::new(); faces.len()];
    for (i, &(a, b, _)) in dual_edges.iter().enumerate() {
        adjacency[a].push((b, i));
        adjacency[b].push((a, i));
    }
    for adj in &mut adjacency {
        adj.sort_unstable();
    }
    // Boundary faces: those with a neighbor outside the box in the infinite
    // dual graph. Lower(x,y) has outside neighbors Upper(x,y-1), Upper(x-1,y);
    // Upper(x,y) has Lower(x,y+1), Lower(x+1,y).
    let boundary = faces
        .iter()
        .map(|f| {
            let (x, y) = f.square;
            match f.kind {
                FaceKind::Lower => y - 1 < -l || x - 1 < -l,
                FaceKind::Upper => y + 1 >= l || x + 1 >= l,
            }
        })
        .collect();
    let origin_face = *face_id
        .get(&(0, 0, 0u8))
        .ok_or_else(|| CoreError::Topology("box too small to contain the origin face".into()))?;
    Ok(DualGraph { faces, dual_edges, adjacency, boundary, origin_face, subdivisions: n })
}

/// Renormalized graph: one vertex per box `z + Λ_{L0}`, `z ∈ (2L0+1) Z^d`,
/// contained in `region`; edges between boxes with `|z - z'|_1 = 2L0 + 1`.
/// The region must be tiled exactly.
pub fn build_renormalized_graph(region: &LatticeBox, l0: i64) -> Result<WeightedGraph> {
    let lo: Vec<i64> = region.center.iter().map(|c| c - region.radius).collect();
    let hi: Vec<i64> = region.center.iter().map(|c| c + region.radius).collect();
    build_renormalized_graph_rect(&lo, &hi, l0)
}

/// Rectangle version of [`build_renormalized_graph`]; needed for tilings
/// with an even number of sub-boxes per axis, whose union is not a box.
pub fn build_renormalized_graph_rect(lo: &[i64], hi: &[i64], l0: i64) -> Result<WeightedGraph> {
    if l0 < 0 {
        return Err(CoreError::Domain("l0 must be >= 0".into()));
    }
    let d = lo.len();
    if d == 0 || hi.len() != d {
        return Err(CoreError::Dimension("region bounds".into()));
    }
    let pitch = 2 * l0 + 1;
    let mut cardinality: u128 = 1;
    for a in 0..d {
        if hi[a] < lo[a] {
            return Err(CoreError::Partition("empty region".into()));
        }
        cardinality *= (hi[a] - lo[a] + 1) as u128;
    }
    // Tile centers are the points of (2L0+1) Z^d whose box fits in region.
    let mut centers = Vec::new();
    let mut z: Vec<i64> = lo.iter().map(|&x| (x + l0).div_euclid(pitch) * pitch).collect();
    // Align each axis to the first tile whose box starts at or after lo.
    for (axis, zax) in z.iter_mut().enumerate() {
        while *zax - l0 < lo[axis] {
            *zax += pitch;
        }
        if *zax - l0 != lo[axis] {
            return Err(CoreError::Partition(format!(
                "region is not aligned to the (2L0+1) grid on axis {axis}"
            )));
        }
    }
    let start = z.clone();
    let mut cur = start.clone();
    'outer: loop {
        if (0..d).all(|a| cur[a] + l0 <= hi[a]) {
            centers.push(cur.clone());
        }
        let mut axis = d;
        loop {
            if axis == 0 {
                break 'outer;
            }
            axis -= 1;
            cur[axis] += pitch;
            if cur[axis] + l0 <= hi[axis] {
                break;
            }
            cur[axis] = start[axis];
        }
    }
    let covered: u128 = centers.len() as u128 * (pitch as u128).pow(d as u32);
    if covered != cardinality || centers.is_empty() {
        return Err(CoreError::Partition(format!(
            "region of {cardinality} points is not a multiple of sub-box pitch {pitch}"
        )));
    }
    check_cardinality(centers.len() as u128)?;
    let mut builder = GraphBuilder::new(d, 1);
    let center_set: BTreeMap<Vec<i64>, ()> = centers.iter().cloned().map(|c| (c, ())).collect();
    for c in &centers {
        builder.vertex(c.clone());
        for axis in 0..d {
            let mut q = c.clone();
            q[axis] += pitch;
            if center_set.contains_key(&q) {
                builder.edge(c.clone(), q, 1.0, EdgeClass::Generic);
            }
        }
    }
    builder.finish(|_| true)
}
