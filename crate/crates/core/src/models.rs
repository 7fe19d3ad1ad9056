//! Gibbs-measure ingredients: spin and height states, single-site radial
//! measures, gauge (Nishimori) disorder, and the energy functionals of the
//! XY and two-component Phi^4 models.

use crate::disorder::PercolationSample;
use crate::error::{CoreError, Result};
use crate::graph::{EdgeClass, WeightedGraph};
use crate::oracle::bessel_i;
use crate::stats::KahanSum;
use rand::Rng;
use std::f64::consts::{PI, TAU};

pub fn wrap_angle(theta: f64) -> f64 {
    theta.rem_euclid(TAU)
}

/// Angle-per-vertex configuration, reduced mod 2 pi.
#[derive(Debug, Clone)]
pub struct SpinState {
    angles: Vec<f64>,
}

impl SpinState {
    pub fn aligned(n: usize) -> Self {
        SpinState { angles: vec![0.0; n] }
    }

    pub fn random<R: Rng>(n: usize, rng: &mut R) -> Self {
        SpinState { angles: (0..n).map(|_| rng.gen::<f64>() * TAU).collect() }
    }

    pub fn from_angles(angles: Vec<f64>) -> Self {
        SpinState { angles: angles.into_iter().map(wrap_angle).collect() }
    }

    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }

    pub fn angle(&self, v: usize) -> f64 {
        self.angles[v]
    }

    pub fn set_angle(&mut self, v: usize, theta: f64) {
        self.angles[v] = wrap_angle(theta);
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }
}

/// Radial single-site measure attached to a vertex.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SingleSiteMeasure {
    Dirac(f64),
    /// `(1 - pbar) delta_0 + pbar delta_1`.
    BernoulliMix(f64),
    /// Density proportional to `r e^{-g r^4 - h r^2}` on `[0, inf)`.
    Phi4Radial { g: f64, h: f64 },
}

impl SingleSiteMeasure {
    pub fn validate(&self) -> Result<()> {
        match *self {
            SingleSiteMeasure::Dirac(a) if a < 0.0 => {
                Err(CoreError::Domain("Dirac position must be >= 0".into()))
            }
            SingleSiteMeasure::BernoulliMix(p) if !(0.0..=1.0).contains(&p) => {
                Err(CoreError::Domain("pbar must lie in [0,1]".into()))
            }
            SingleSiteMeasure::Phi4Radial { g, .. } if !(g > 0.0) => {
                Err(CoreError::Domain("Phi4 radial measure requires g > 0".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Per-edge gauge phases with exact antisymmetry: the phase is stored once
/// per undirected edge in the graph's canonical direction `u -> v` and
/// negated when read the other way.
#[derive(Debug, Clone)]
pub struct GaugeDisorder {
    omega: Vec<f64>,
}

impl GaugeDisorder {
    pub fn from_canonical(omega: Vec<f64>) -> Self {
        GaugeDisorder { omega: omega.into_iter().map(wrap_angle).collect() }
    }

    pub fn n_edges(&self) -> usize {
        self.omega.len()
    }

    /// The phase in the edge's stored direction `u -> v`.
    pub fn canonical(&self, edge_idx: usize) -> f64 {
        self.omega[edge_idx]
    }

    /// Phase read in the direction `from -> to` for the given graph edge.
    pub fn directed(&self, graph: &WeightedGraph, edge_idx: usize, from: usize) -> f64 {
        let e = &graph.edges()[edge_idx];
        if from == e.u {
            self.omega[edge_idx]
        } else {
            debug_assert_eq!(from, e.v);
            wrap_angle(-self.omega[edge_idx])
        }
    }
}

/// Two-component Phi^4 state in polar coordinates.
#[derive(Debug, Clone)]
pub struct Phi4State {
    pub radii: Vec<f64>,
    pub angles: Vec<f64>,
}

impl Phi4State {
    pub fn uniform(n: usize, radius: f64) -> Self {
        Phi4State { radii: vec![radius; n], angles: vec![0.0; n] }
    }

    pub fn len(&self) -> usize {
        self.radii.len()
    }

    pub fn is_empty(&self) -> bool {
        self.radii.is_empty()
    }
}

fn check_shapes(graph: &WeightedGraph, len: usize, what: &str) -> Result<()> {
    if len != graph.n_vertices() {
        return Err(CoreError::Shape(format!(
            "{what} has {len} entries for {} vertices",
            graph.n_vertices()
        )));
    }
    Ok(())
}

/// XY energy `-sum_e J_e occ(e) cos(theta_u - theta_v - omega_{uv})`,
/// accumulated with compensated summation. `occ` is `r_u r_v` for site
/// disorder, the edge bit for edge disorder, and 1 otherwise.
pub fn xy_energy(
    graph: &WeightedGraph,
    spins: &SpinState,
    disorder: Option<&PercolationSample>,
    gauge: Option<&GaugeDisorder>,
) -> Result<f64> {
    check_shapes(graph, spins.len(), "spin state")?;
    if let Some(g) = gauge {
        if g.n_edges() != graph.edges().len() {
            return Err(CoreError::Shape("gauge disorder edge count".into()));
        }
    }
    if let Some(d) = disorder {
        d.check_compatible(graph)?;
    }
    let mut acc = KahanSum::new();
    for (i, e) in graph.edges().iter().enumerate() {
        let occ = disorder.map_or(1.0, |d| d.edge_factor(graph, i));
        if occ == 0.0 || e.coupling == 0.0 {
            continue;
        }
        let omega = gauge.map_or(0.0, |g| g.directed(graph, i, e.u));
        acc.add(-e.coupling * occ * (spins.angle(e.u) - spins.angle(e.v) - omega).cos());
    }
    Ok(acc.value())
}

/// Magnitude and direction of the local field at `x`:
/// `sum_{y ~ x} J_{xy} occ e^{i(theta_y + omega_{xy})}`. The conditional
/// density of `theta_x` is proportional to
/// `exp(magnitude * cos(theta_x - direction))`.
pub fn local_field(
    graph: &WeightedGraph,
    spins: &SpinState,
    x: usize,
    disorder: Option<&PercolationSample>,
    gauge: Option<&GaugeDisorder>,
) -> (f64, f64) {
    let mut re = 0.0;
    let mut im = 0.0;
    for &(y, edge_idx) in graph.neighbors(x) {
        let e = &graph.edges()[edge_idx];
        let occ = disorder.map_or(1.0, |d| d.edge_factor(graph, edge_idx));
        if occ == 0.0 || e.coupling == 0.0 {
            continue;
        }
        let omega = gauge.map_or(0.0, |g| g.directed(graph, edge_idx, x));
        let phase = spins.angle(y) + omega;
        re += e.coupling * occ * phase.cos();
        im += e.coupling * occ * phase.sin();
    }
    let magnitude = (re * re + im * im).sqrt();
    let direction = if magnitude == 0.0 { 0.0 } else { wrap_angle(im.atan2(re)) };
    (magnitude, direction)
}

/// Phi^4 energy with the polar Jacobian folded in (log-density form):
/// `-sum_e beta J_e R_u R_v cos(theta_u - theta_v)
///  + sum_x (g R_x^4 + h R_x^2) - sum_x ln R_x`.
/// Any zero radius yields `+inf`.
pub fn phi4_energy(
    graph: &WeightedGraph,
    state: &Phi4State,
    beta: f64,
    g: f64,
    h: f64,
) -> Result<f64> {
    if !(g > 0.0) {
        return Err(CoreError::Domain("Phi4 requires g > 0".into()));
    }
    check_shapes(graph, state.len(), "Phi4 state")?;
    if state.radii.iter().any(|&r| r == 0.0) {
        return Ok(f64::INFINITY);
    }
    let mut acc = KahanSum::new();
    for e in graph.edges() {
        acc.add(
            -beta
                * e.coupling
                * state.radii[e.u]
                * state.radii[e.v]
                * (state.angles[e.u] - state.angles[e.v]).cos(),
        );
    }
    for (&r, _) in state.radii.iter().zip(&state.angles) {
        acc.add(g * r.powi(4) + h * r * r - r.ln());
    }
    Ok(acc.value())
}

/// Exact von Mises sampling by the Best-Fisher rejection method; `kappa = 0`
/// degenerates to the uniform distribution on `[0, 2 pi)`.
pub fn sample_von_mises<R: Rng>(rng: &mut R, mu: f64, kappa: f64) -> f64 {
    if kappa < 1e-12 {
        return rng.gen::<f64>() * TAU;
    }
    let tau = 1.0 + (1.0 + 4.0 * kappa * kappa).sqrt();
    let rho = (tau - (2.0 * tau).sqrt()) / (2.0 * kappa);
    let r = (1.0 + rho * rho) / (2.0 * rho);
    loop {
        let u1: f64 = rng.gen();
        let z = (PI * u1).cos();
        let f = (1.0 + r * z) / (r + z);
        let c = kappa * (r - f);
        let u2: f64 = rng.gen();
        if c * (2.0 - c) - u2 > 0.0 || (c / u2).ln() + 1.0 - c >= 0.0 {
            let u3: f64 = rng.gen();
            let theta = if u3 >= 0.5 { mu + f.acos() } else { mu - f.acos() };
            return wrap_angle(theta);
        }
    }
}

/// Independent gauge phases per undirected edge: `Beta1`-class (and
/// `Generic`) edges use the density `exp(beta1 cos w)`, `Beta2`-class edges
/// `exp(beta2 cos w)`; antisymmetry is structural.
pub fn sample_gauge<R: Rng>(
    graph: &WeightedGraph,
    beta1: f64,
    beta2: f64,
    rng: &mut R,
) -> Result<GaugeDisorder> {
    if beta1 < 0.0 || beta2 < 0.0 {
        return Err(CoreError::Domain("gauge concentrations must be >= 0".into()));
    }
    let omega = graph
        .edges()
        .iter()
        .map(|e| {
            let kappa = match e.class {
                EdgeClass::Beta2 => beta2,
                _ => beta1,
            };
            sample_von_mises(rng, 0.0, kappa)
        })
        .collect();
    Ok(GaugeDisorder::from_canonical(omega))
}

/// `lambda_n(beta1, beta2) = (I1(b1)/I0(b1))^2 (I1(b2)/I0(b2))^{n-1}`,
/// the per-step gauge average along an increasing path on the extended
/// lattice.
pub fn lambda_n(beta1: f64, beta2: f64, n: usize) -> Result<f64> {
    if !(beta1 > 0.0) || !(beta2 > 0.0) {
        return Err(CoreError::Domain("lambda_n requires positive inverse temperatures".into()));
    }
    if n < 1 {
        return Err(CoreError::Domain("lambda_n requires n >= 1".into()));
    }
    let r1 = bessel_i(1, beta1)? / bessel_i(0, beta1)?;
    let r2 = bessel_i(1, beta2)? / bessel_i(0, beta2)?;
    Ok(r1 * r1 * r2.powi(n as i32 - 1))
}

/// First-order expansion of `lambda_n(beta, beta)`:
/// `1 - 1/beta - (n-1)/(2 beta)`.
pub fn lambda_n_expansion(beta: f64, n: usize) -> f64 {
    1.0 - 1.0 / beta - (n as f64 - 1.0) / (2.0 * beta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_box_lattice, EdgeClass};
    use crate::rng::SeedStream;

    #[test]
    fn constant_spins_energy_is_minus_total_coupling() {
        let g = build_box_lattice(2, 1, 1.5).unwrap();
        let spins = SpinState::aligned(g.n_vertices());
        let e = xy_energy(&g, &spins, None, None).unwrap();
        assert!((e - (-1.5 * 12.0)).abs() < 1e-12);
    }

    #[test]
    fn antiparallel_edge_energy() {
        let g = WeightedGraph::fixture(2, &[(0, 1, 2.0, EdgeClass::Generic)]).unwrap();
        let spins = SpinState::from_angles(vec![0.0, PI]);
        let e = xy_energy(&g, &spins, None, None).unwrap();
        assert!((e - 2.0).abs() < 1e-12);
    }

    #[test]
    fn energy_matches_naive_term_sum() {
        let g = build_box_lattice(2, 1, 0.8).unwrap();
        let mut rng = SeedStream::new(42).stream("energy", 0);
        let spins = SpinState::random(g.n_vertices(), &mut rng);
        let fast = xy_energy(&g, &spins, None, None).unwrap();
        // Independent route: sort the terms before summing to bound error.
        let mut terms: Vec<f64> = g
            .edges()
            .iter()
            .map(|e| -e.coupling * (spins.angle(e.u) - spins.angle(e.v)).cos())
            .collect();
        terms.sort_by(|a, b| a.abs().partial_cmp(&b.abs()).unwrap());
        let slow: f64 = terms.iter().sum();
        assert!((fast - slow).abs() < 1e-12);
    }

    #[test]
    fn global_rotation_invariance() {
        let g = build_box_lattice(2, 1, 1.1).unwrap();
        let mut rng = SeedStream::new(7).stream("energy", 1);
        let spins = SpinState::random(g.n_vertices(), &mut rng);
        let e0 = xy_energy(&g, &spins, None, None).unwrap();
        let shifted = SpinState::from_angles(
            spins.angles().iter().map(|&a| a + 1.2345).collect(),
        );
        let e1 = xy_energy(&g, &shifted, None, None).unwrap();
        assert!((e0 - e1).abs() < 1e-12);
    }

    #[test]
    fn gauge_covariance_identity() {
        // With the energy convention cos(theta_u - theta_v - omega_{uv}),
        // E(theta, omega) = E(theta + alpha, omega') holds for
        // omega'_{uv} = omega_{uv} + alpha_u - alpha_v.
        let g = build_box_lattice(2, 1, 0.9).unwrap();
        let mut rng = SeedStream::new(9).stream("gauge", 0);
        let spins = SpinState::random(g.n_vertices(), &mut rng);
        let gauge = sample_gauge(&g, 1.5, 1.5, &mut rng).unwrap();
        let alpha: Vec<f64> = (0..g.n_vertices()).map(|_| rng.gen::<f64>() * TAU).collect();
        let e0 = xy_energy(&g, &spins, None, Some(&gauge)).unwrap();
        let shifted = SpinState::from_angles(
            spins.angles().iter().zip(&alpha).map(|(&t, &a)| t + a).collect(),
        );
        let omega2: Vec<f64> = g
            .edges()
            .iter()
            .enumerate()
            .map(|(i, e)| gauge.canonical(i) + alpha[e.u] - alpha[e.v])
            .collect();
        let gauge2 = GaugeDisorder::from_canonical(omega2);
        let e1 = xy_energy(&g, &shifted, None, Some(&gauge2)).unwrap();
        assert!((e0 - e1).abs() < 1e-12, "{e0} vs {e1}");
    }

    #[test]
    fn local_field_simple_and_oracle() {
        let g = WeightedGraph::fixture(2, &[(0, 1, 2.0, EdgeClass::Generic)]).unwrap();
        let spins = SpinState::from_angles(vec![0.0, 1.0]);
        let (mag, dir) = local_field(&g, &spins, 0, None, None);
        assert!((mag - 2.0).abs() < 1e-14);
        assert!((dir - 1.0).abs() < 1e-14);
        // Isolated vertex.
        let iso = WeightedGraph::fixture(1, &[]).unwrap();
        let s1 = SpinState::aligned(1);
        assert_eq!(local_field(&iso, &s1, 0, None, None).0, 0.0);
        // 4 random neighbours against a direct complex accumulation.
        let star = WeightedGraph::fixture(
            5,
            &[
                (0, 1, 0.7, EdgeClass::Generic),
                (0, 2, 1.3, EdgeClass::Generic),
                (0, 3, 0.2, EdgeClass::Generic),
                (0, 4, 2.1, EdgeClass::Generic),
            ],
        )
        .unwrap();
        let mut rng = SeedStream::new(3).stream("field", 0);
        let spins = SpinState::random(5, &mut rng);
        let (mag, dir) = local_field(&star, &spins, 0, None, None);
        let (mut re, mut im) = (0.0, 0.0);
        for (y, c) in [(1, 0.7), (2, 1.3), (3, 0.2), (4, 2.1)] {
            re += c * spins.angle(y).cos();
            im += c * spins.angle(y).sin();
        }
        assert!((mag - re.hypot(im)).abs() < 1e-14);
        assert!((dir - wrap_angle(im.atan2(re))).abs() < 1e-14);
    }

    #[test]
    fn phi4_energy_cases() {
        let single = WeightedGraph::fixture(1, &[]).unwrap();
        let st = Phi4State::uniform(1, 1.0);
        // beta = 0, R = 1: energy = g + h (ln 1 = 0).
        let e = phi4_energy(&single, &st, 0.0, 1.0, 0.5).unwrap();
        assert!((e - 1.5).abs() < 1e-14);
        // Shifting h by delta adds delta * sum R^2.
        let g2 = build_box_lattice(1, 1, 1.0).unwrap();
        let mut rng = SeedStream::new(11).stream("phi4", 0);
        let st = Phi4State {
            radii: (0..3).map(|_| 0.5 + rng.gen::<f64>()).collect(),
            angles: (0..3).map(|_| rng.gen::<f64>() * TAU).collect(),
        };
        let e1 = phi4_energy(&g2, &st, 1.0, 1.0, 0.3).unwrap();
        let e2 = phi4_energy(&g2, &st, 1.0, 1.0, 0.8).unwrap();
        let r2: f64 = st.radii.iter().map(|r| r * r).sum();
        assert!((e2 - e1 - 0.5 * r2).abs() < 1e-12);
        // Zero radius signals +inf.
        let st0 = Phi4State { radii: vec![0.0, 1.0, 1.0], angles: vec![0.0; 3] };
        assert_eq!(phi4_energy(&g2, &st0, 1.0, 1.0, 0.0).unwrap(), f64::INFINITY);
    }

    #[test]
    fn von_mises_moments_match_bessel_ratio() {
        let mut rng = SeedStream::new(5).stream("vm", 0);
        let n = 200_000;
        let mut acc = 0.0;
        for _ in 0..n {
            acc += sample_von_mises(&mut rng, 0.0, 2.0).cos();
        }
        let mean = acc / n as f64;
        // I1(2)/I0(2) = 0.6977746579640008; sd of cos under vM(2) is ~0.5.
        let sigma = 0.5 / (n as f64).sqrt();
        assert!((mean - 0.6977746579640008).abs() < 4.0 * sigma, "mean {mean}");
    }

    #[test]
    fn gauge_sampling_limits() {
        let g = build_box_lattice(2, 2, 1.0).unwrap();
        let mut rng = SeedStream::new(6).stream("gauge", 1);
        // beta = 0: uniform phases.
        let gauge = sample_gauge(&g, 0.0, 0.0, &mut rng).unwrap();
        let mean: f64 =
            (0..gauge.n_edges()).map(|i| gauge.canonical(i).cos()).sum::<f64>()
                / gauge.n_edges() as f64;
        let sigma = (0.5f64 / gauge.n_edges() as f64).sqrt();
        assert!(mean.abs() < 4.0 * sigma, "mean {mean}");
        // Large beta: concentration at 0.
        let gauge = sample_gauge(&g, 1000.0, 1000.0, &mut rng).unwrap();
        let mean: f64 =
            (0..gauge.n_edges()).map(|i| gauge.canonical(i).cos()).sum::<f64>()
                / gauge.n_edges() as f64;
        assert!(mean > 0.999, "mean {mean}");
    }

    #[test]
    fn lambda_n_values_and_limits() {
        // n = 1 ignores beta2.
        let a = lambda_n(2.0, 50.0, 1).unwrap();
        let b = lambda_n(2.0, 0.1, 1).unwrap();
        assert!((a - b).abs() < 1e-15);
        // Small beta1: squared ratio vanishes like (beta/2)^2.
        assert!(lambda_n(1e-6, 1.0, 1).unwrap() < 1e-11);
        // Large beta: approaches 1 from below.
        assert!(lambda_n(80.0, 80.0, 2).unwrap() > 0.96);
        assert!(lambda_n(80.0, 80.0, 2).unwrap() < 1.0);
        assert!(lambda_n(0.0, 1.0, 2).is_err());
        assert!(lambda_n(1.0, 1.0, 0).is_err());
    }

    #[test]
    fn lambda_2_matches_quadrature_expectations() {
        // Direct quadrature of E_rho[cos] for each factor.
        let grid = 4096;
        let e_cos = |beta: f64| -> f64 {
            let (mut num, mut den) = (0.0, 0.0);
            for k in 0..grid {
                let w = TAU * k as f64 / grid as f64;
                let f = (beta * w.cos()).exp();
                num += f * w.cos();
                den += f;
            }
            num / den
        };
        let lam = lambda_n(10.0, 10.0, 2).unwrap();
        let direct = e_cos(10.0).powi(2) * e_cos(10.0);
        assert!((lam - direct).abs() < 1e-8, "{lam} vs {direct}");
    }
}
