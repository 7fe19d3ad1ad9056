//! Markov-chain Monte Carlo: exact heat-bath and Metropolis single-site
//! updates, embedded-cluster (reflection) moves for ferromagnetic couplings,
//! polar Phi^4 updates, integer height-function sweeps, chain orchestration
//! with autocorrelation-aware estimators, quenched-disorder averaging, the
//! boundary-sum estimator, and the exponential/power-law decay classifier.

use crate::disorder::{sample_percolation, PercolationKind, PercolationSample};
use crate::dual_height::{DualPotentialPair, HeightState};
use crate::error::{CoreError, Result};
use crate::graph::{build_box_lattice, build_extended_lattice, DualGraph, LatticeBox, WeightedGraph};
use crate::models::{local_field, sample_von_mises, wrap_angle, GaugeDisorder, Phi4State, SpinState};
use crate::rng::SeedStream;
use crate::stats::{series_estimate, wls_line, LineFit};
use rand::Rng;
use rayon::prelude::*;
use std::f64::consts::TAU;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Metropolis,
    HeatBath,
    EmbeddedCluster,
    /// Heat-bath sweeps with one embedded-cluster update per sweep.
    Mixed,
}

/// Thermalization/measurement plan of a single chain.
#[derive(Debug, Clone, Copy)]
pub struct ChainSchedule {
    pub thermalization: usize,
    pub measurement: usize,
    pub measure_every: usize,
    pub seed: u64,
    pub algorithm: Algorithm,
}

impl ChainSchedule {
    pub fn new(thermalization: usize, measurement: usize, measure_every: usize, seed: u64) -> Self {
        ChainSchedule { thermalization, measurement, measure_every, seed, algorithm: Algorithm::Mixed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.measure_every == 0 {
            return Err(CoreError::Domain("measure_every must be >= 1".into()));
        }
        if self.measurement == 0 {
            return Err(CoreError::Domain("measurement sweeps must be > 0".into()));
        }
        Ok(())
    }

    pub fn with_algorithm(self, algorithm: Algorithm) -> Self {
        ChainSchedule { algorithm, ..self }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        ChainSchedule { seed, ..self }
    }
}

/// Mean, autocorrelation-corrected standard error, integrated
/// autocorrelation time (in measurement units) and sample count.
#[derive(Debug, Clone, Copy)]
pub struct EstimatorResult {
    pub mean: f64,
    pub stderr: f64,
    pub tau_int: f64,
    pub n_samples: usize,
}

impl EstimatorResult {
    pub fn from_series(series: &[f64]) -> Self {
        let (mean, stderr, tau_int, n_samples) = series_estimate(series);
        EstimatorResult { mean, stderr, tau_int, n_samples }
    }
}

/// One exact heat-bath pass over all vertices: each angle is redrawn from
/// its von Mises conditional; zero-field vertices become uniform.
pub fn heatbath_sweep<R: Rng>(
    graph: &WeightedGraph,
    spins: &mut SpinState,
    disorder: Option<&PercolationSample>,
    gauge: Option<&GaugeDisorder>,
    rng: &mut R,
) {
    for x in 0..graph.n_vertices() {
        let (magnitude, direction) = local_field(graph, spins, x, disorder, gauge);
        spins.set_angle(x, sample_von_mises(rng, direction, magnitude));
    }
}

/// One Metropolis pass with uniform angle proposals in `(-eps, eps)`;
/// returns the number of accepted moves.
pub fn metropolis_sweep<R: Rng>(
    graph: &WeightedGraph,
    spins: &mut SpinState,
    disorder: Option<&PercolationSample>,
    gauge: Option<&GaugeDisorder>,
    eps: f64,
    rng: &mut R,
) -> usize {
    let mut accepted = 0;
    for x in 0..graph.n_vertices() {
        let (magnitude, direction) = local_field(graph, spins, x, disorder, gauge);
        let old = spins.angle(x);
        let proposal = wrap_angle(old + eps * (2.0 * rng.gen::<f64>() - 1.0));
        // Energy difference via the local field only.
        let delta = -magnitude * ((proposal - direction).cos() - (old - direction).cos());
        if delta <= 0.0 || rng.gen::<f64>() < (-delta).exp() {
            spins.set_angle(x, proposal);
            accepted += 1;
        }
    }
    accepted
}

/// Embedded-cluster (Wolff reflection) update: reflect a connected cluster
/// of spins about a random axis. Requires ferromagnetic couplings and no
/// gauge disorder. Returns the cluster size.
pub fn embedded_cluster_update<R: Rng>(
    graph: &WeightedGraph,
    spins: &mut SpinState,
    disorder: Option<&PercolationSample>,
    rng: &mut R,
) -> Result<usize> {
    let phi = rng.gen::<f64>() * TAU;
    let n = graph.n_vertices();
    let seed_vertex = rng.gen_range(0..n);
    // Component of the reflected Ising embedding: c_x = cos(theta_x - phi).
    let mut in_cluster = vec![false; n];
    let mut stack = vec![seed_vertex];
    in_cluster[seed_vertex] = true;
    let mut size = 0;
    while let Some(v) = stack.pop() {
        size += 1;
        let cv = (spins.angle(v) - phi).cos();
        for &(w, edge_idx) in graph.neighbors(v) {
            if in_cluster[w] {
                continue;
            }
            let e = &graph.edges()[edge_idx];
            let occ = disorder.map_or(1.0, |d| d.edge_factor(graph, edge_idx));
            if occ == 0.0 || e.coupling == 0.0 {
                continue;
            }
            let cw = (spins.angle(w) - phi).cos();
            let activation = 2.0 * e.coupling * occ * cv * cw;
            if activation > 0.0 && rng.gen::<f64>() < 1.0 - (-activation).exp() {
                in_cluster[w] = true;
                stack.push(w);
            }
        }
    }
    for (v, flag) in in_cluster.iter().enumerate() {
        if *flag {
            spins.set_angle(v, std::f64::consts::PI + 2.0 * phi - spins.angle(v));
        }
    }
    Ok(size)
}

/// One Phi^4 pass: von Mises heat-bath on every angle given the radii, then
/// a Metropolis radius update with a symmetric log-space proposal (which
/// together with the Jacobian folded into the energy keeps the acceptance
/// ratio exact).
pub fn phi4_sweep<R: Rng>(
    graph: &WeightedGraph,
    state: &mut Phi4State,
    beta: f64,
    g: f64,
    h: f64,
    log_step: f64,
    rng: &mut R,
) -> Result<usize> {
    if !(g > 0.0) {
        return Err(CoreError::Domain("Phi4 requires g > 0".into()));
    }
    let n = graph.n_vertices();
    let mut accepted = 0;
    for x in 0..n {
        // Angular heat-bath: field sum_y beta J R_x R_y e^{i theta_y}.
        let (mut re, mut im) = (0.0, 0.0);
        for &(y, edge_idx) in graph.neighbors(x) {
            let c = beta * graph.edges()[edge_idx].coupling * state.radii[x] * state.radii[y];
            re += c * state.angles[y].cos();
            im += c * state.angles[y].sin();
        }
        let magnitude = re.hypot(im);
        let direction = if magnitude == 0.0 { 0.0 } else { im.atan2(re) };
        state.angles[x] = sample_von_mises(rng, direction, magnitude);
        // Radius Metropolis in u = ln R.
        let old_r = state.radii[x];
        let new_r = old_r * (log_step * (2.0 * rng.gen::<f64>() - 1.0)).exp();
        let local = |r: f64| -> f64 {
            let mut acc = g * r.powi(4) + h * r * r - r.ln();
            for &(y, edge_idx) in graph.neighbors(x) {
                acc -= beta
                    * graph.edges()[edge_idx].coupling
                    * r
                    * state.radii[y]
                    * (state.angles[x] - state.angles[y]).cos();
            }
            acc
        };
        // pi_u ratio: e^{-E'} R' / (e^{-E} R).
        let log_ratio = -(local(new_r) - local(old_r)) + (new_r / old_r).ln();
        if log_ratio >= 0.0 || rng.gen::<f64>() < log_ratio.exp() {
            state.radii[x] = new_r;
            accepted += 1;
        }
    }
    Ok(accepted)
}

/// One heat-bath pass over the interior faces of a dual height function:
/// each height is redrawn from its exact conditional, restricted to a
/// window around the neighbour values whose tail mass is below 1e-12.
pub fn height_sweep<R: Rng>(
    dual: &DualGraph,
    heights: &mut HeightState,
    potentials: &DualPotentialPair,
    rng: &mut R,
) -> Result<()> {
    for face in 0..dual.n_faces() {
        if heights.is_pinned(face) {
            continue;
        }
        let neighbors = dual.neighbors(face);
        let mut lo = i64::MAX;
        let mut hi = i64::MIN;
        for &(f, _) in neighbors {
            lo = lo.min(heights.height(f));
            hi = hi.max(heights.height(f));
        }
        let energy_at = |h: i64| -> Result<f64> {
            let mut acc = 0.0;
            for &(f, e) in neighbors {
                let ty = dual.dual_edges[e].2;
                acc += potentials.of(ty).value(h - heights.height(f))?;
            }
            Ok(acc)
        };
        // Expand the window until the boundary weight is negligible
        // relative to the running total (convexity makes tails geometric).
        let mut window = 2i64;
        let (weights, base) = loop {
            let lo_w = lo - window;
            let hi_w = hi + window;
            let mut energies = Vec::with_capacity((hi_w - lo_w + 1) as usize);
            for hcand in lo_w..=hi_w {
                energies.push(energy_at(hcand)?);
            }
            let emin = energies.iter().cloned().fold(f64::INFINITY, f64::min);
            let weights: Vec<f64> = energies.iter().map(|e| (emin - e).exp()).collect();
            let total: f64 = weights.iter().sum();
            let edge_mass = weights[0].max(*weights.last().unwrap());
            if edge_mass <= 1e-13 * total {
                break (weights, lo_w);
            }
            window *= 2;
            if window > 256 {
                return Err(CoreError::Precision(
                    "height conditional window exceeded 256 (near-flat potential)".into(),
                ));
            }
        };
        let total: f64 = weights.iter().sum();
        let mut u = rng.gen::<f64>() * total;
        let mut chosen = base;
        for (i, w) in weights.iter().enumerate() {
            u -= w;
            if u <= 0.0 {
                chosen = base + i as i64;
                break;
            }
        }
        heights.set_height(face, chosen);
    }
    Ok(())
}

/// What to measure along an XY chain.
#[derive(Debug, Clone)]
pub enum Observable {
    /// `cos(theta_x - theta_y)`.
    CosPair(usize, usize),
    /// `sum_y cos(theta_x - theta_y)` over a fixed vertex list.
    CosSum(usize, Vec<usize>),
    /// Translation average of `cos(theta_x - theta_y)` over a list of pairs
    /// (already expanded), normalized by the given factor.
    PairAverage { pairs: Vec<(usize, usize)>, normalization: f64 },
}

fn measure(observable: &Observable, spins: &SpinState) -> f64 {
    match observable {
        Observable::CosPair(x, y) => (spins.angle(*x) - spins.angle(*y)).cos(),
        Observable::CosSum(x, ys) => {
            let tx = spins.angle(*x);
            ys.iter().map(|&y| (tx - spins.angle(y)).cos()).sum()
        }
        Observable::PairAverage { pairs, normalization } => {
            let mut acc = 0.0;
            for &(x, y) in pairs {
                acc += (spins.angle(x) - spins.angle(y)).cos();
            }
            acc * normalization
        }
    }
}

/// Runs one XY chain and returns one estimator per observable. The state is
/// initialized uniformly at random, thermalized, and measured every
/// `measure_every` sweeps. Metropolis step sizes are tuned toward 50%
/// acceptance during thermalization and frozen afterwards.
pub fn run_chain(
    graph: &WeightedGraph,
    disorder: Option<&PercolationSample>,
    gauge: Option<&GaugeDisorder>,
    schedule: &ChainSchedule,
    observables: &[Observable],
) -> Result<Vec<EstimatorResult>> {
    schedule.validate()?;
    let cluster_allowed = gauge.is_none();
    match schedule.algorithm {
        Algorithm::EmbeddedCluster | Algorithm::Mixed if !cluster_allowed => {
            return Err(CoreError::Unsupported(
                "embedded-cluster updates require the absence of gauge disorder".into(),
            ));
        }
        _ => {}
    }
    let mut rng = SeedStream::new(schedule.seed).stream("xy-chain", 0);
    let mut spins = SpinState::random(graph.n_vertices(), &mut rng);
    let mut eps = 1.0;
    let mut sweep = |spins: &mut SpinState, rng: &mut _, tuning: bool| -> Result<()> {
        match schedule.algorithm {
            Algorithm::HeatBath => heatbath_sweep(graph, spins, disorder, gauge, rng),
            Algorithm::Metropolis => {
                let accepted = metropolis_sweep(graph, spins, disorder, gauge, eps, rng);
                if tuning {
                    let rate = accepted as f64 / graph.n_vertices() as f64;
                    // Multiplicative controller toward 50% acceptance.
                    eps = (eps * (0.5 + rate)).clamp(1e-3, std::f64::consts::PI);
                }
            }
            Algorithm::EmbeddedCluster => {
                embedded_cluster_update(graph, spins, disorder, rng)?;
            }
            Algorithm::Mixed => {
                heatbath_sweep(graph, spins, disorder, gauge, rng);
                embedded_cluster_update(graph, spins, disorder, rng)?;
            }
        }
        Ok(())
    };
    for _ in 0..schedule.thermalization {
        sweep(&mut spins, &mut rng, true)?;
    }
    let mut series: Vec<Vec<f64>> = vec![Vec::new(); observables.len()];
    let mut measured = 0usize;
    let mut sweeps_done = 0usize;
    while measured < schedule.measurement {
        sweep(&mut spins, &mut rng, false)?;
        sweeps_done += 1;
        if sweeps_done % schedule.measure_every == 0 {
            measured += 1;
            for (obs, s) in observables.iter().zip(&mut series) {
                s.push(measure(obs, &spins));
            }
        }
    }
    Ok(series.iter().map(|s| EstimatorResult::from_series(s)).collect())
}

/// All pairs `(x, y)` with `x` in the centered box of radius `l_inner` and
/// `y = x + delta`, `delta` in the centered box of radius `m`, expanded to
/// vertex ids; the normalization is `1 / (#x #delta)`.
pub fn spatial_average_observable(
    graph: &WeightedGraph,
    l_inner: i64,
    m: i64,
) -> Result<Observable> {
    let d = graph.dimension();
    let inner = LatticeBox::centered(d, l_inner);
    let window = LatticeBox::centered(d, m);
    let mut pairs = Vec::new();
    for x in inner.points() {
        let vx = graph
            .vertex_at_lattice_point(&x)
            .ok_or_else(|| CoreError::Coverage(format!("{x:?} outside the graph")))?;
        for delta in window.points() {
            let y: Vec<i64> = x.iter().zip(&delta).map(|(a, b)| a + b).collect();
            let vy = graph
                .vertex_at_lattice_point(&y)
                .ok_or_else(|| CoreError::Coverage(format!("{y:?} outside the graph")))?;
            pairs.push((vx, vy));
        }
    }
    let normalization = 1.0 / pairs.len() as f64;
    Ok(Observable::PairAverage { pairs, normalization })
}

/// Per-disorder and combined estimates of `E_p[<cos(theta_0 - theta_x)>]`.
#[derive(Debug, Clone)]
pub struct QuenchedResult {
    pub combined: EstimatorResult,
    pub per_disorder: Vec<EstimatorResult>,
}

fn combine_disorder(per_disorder: &[EstimatorResult]) -> EstimatorResult {
    let n = per_disorder.len();
    let means: Vec<f64> = per_disorder.iter().map(|e| e.mean).collect();
    let mean = means.iter().sum::<f64>() / n as f64;
    let stderr = if n > 1 {
        // The spread of per-disorder means carries both the between-disorder
        // variance and the within-chain noise.
        let var = means.iter().map(|m| (m - mean) * (m - mean)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    } else {
        per_disorder[0].stderr
    };
    EstimatorResult { mean, stderr, tau_int: 0.5, n_samples: n }
}

/// Quenched two-point estimator: outer average over independent percolation
/// samples, inner MC per sample.
pub fn quenched_two_point(
    d: usize,
    l: i64,
    p: f64,
    beta: f64,
    x: &[i64],
    kind: PercolationKind,
    n_disorder: usize,
    schedule: &ChainSchedule,
) -> Result<QuenchedResult> {
    let graph = build_box_lattice(d, l, beta)?;
    let origin = graph
        .vertex_at_lattice_point(&vec![0; d])
        .ok_or_else(|| CoreError::Coverage("origin outside the box".into()))?;
    let target = graph
        .vertex_at_lattice_point(x)
        .ok_or_else(|| CoreError::Coverage(format!("{x:?} outside the box")))?;
    let streams = SeedStream::new(schedule.seed);
    let per_disorder: Result<Vec<EstimatorResult>> = (0..n_disorder)
        .into_par_iter()
        .map(|i| {
            let mut stream = streams.stream("quenched-disorder", i as u64);
            let sample = sample_percolation(&graph, kind, p, stream.gen::<u64>())?;
            let chain_seed = streams.stream("quenched-chain", i as u64).gen::<u64>();
            let estimates = run_chain(
                &graph,
                Some(&sample),
                None,
                &schedule.with_seed(chain_seed),
                &[Observable::CosPair(origin, target)],
            )?;
            Ok(estimates[0])
        })
        .collect();
    let per_disorder = per_disorder?;
    Ok(QuenchedResult { combined: combine_disorder(&per_disorder), per_disorder })
}

/// Boundary-sum estimator `phi_R = sum_{y on the box boundary}
/// <cos(theta_0 - theta_y)>` for the two-temperature model on the extended
/// box of radius `r` (free boundary).
pub fn phi_r_estimator(
    d: usize,
    n: usize,
    beta1: f64,
    beta2: f64,
    r: i64,
    schedule: &ChainSchedule,
) -> Result<EstimatorResult> {
    let graph = build_extended_lattice(d, r, n, beta1, beta2)?;
    let origin = graph
        .vertex_at_lattice_point(&vec![0; d])
        .ok_or_else(|| CoreError::Coverage("origin missing".into()))?;
    let boundary: Vec<usize> = graph
        .lattice_vertices()
        .filter(|&v| {
            graph
                .coords(v)
                .iter()
                .any(|&c| c.abs() == r * graph.denominator())
        })
        .collect();
    let estimates =
        run_chain(&graph, None, None, schedule, &[Observable::CosSum(origin, boundary)])?;
    Ok(estimates[0])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecayVerdict {
    Exponential,
    PowerLaw,
    Inconclusive,
}

#[derive(Debug, Clone)]
pub struct DecayReport {
    pub verdict: DecayVerdict,
    /// Decay rate (exponential) or exponent (power law) of the winning fit.
    pub rate_or_exponent: f64,
    pub exp_fit: Option<LineFit>,
    pub pow_fit: Option<LineFit>,
    /// Points significantly above their own noise, used in the fits.
    pub n_usable: usize,
}

/// Classifies a decay profile as exponential or power law by weighted least
/// squares in log space. Points consistent with zero act as upper bounds:
/// a model predicting far above such a bound is rejected. The verdict
/// requires a residual ratio of at least 3 and a 3-sigma significant slope.
pub fn decay_classifier(distances: &[f64], values: &[f64], errors: &[f64]) -> Result<DecayReport> {
    let k = distances.len();
    if k != values.len() || k != errors.len() {
        return Err(CoreError::Shape("distance/value/error lengths differ".into()));
    }
    {
        let mut sorted = distances.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        sorted.dedup();
        if sorted.len() < 4 {
            return Err(CoreError::Domain("need at least 4 distinct distances".into()));
        }
    }
    for i in 0..k {
        if !(errors[i] > 0.0) {
            return Err(CoreError::Data(format!("nonpositive error at index {i}")));
        }
        if values[i] <= 0.0 && values[i] < -4.0 * errors[i] {
            return Err(CoreError::Data(format!(
                "value {} at distance {} is significantly negative",
                values[i], distances[i]
            )));
        }
    }
    let usable: Vec<usize> = (0..k).filter(|&i| values[i] > 2.0 * errors[i]).collect();
    let floors: Vec<usize> = (0..k).filter(|&i| values[i] <= 2.0 * errors[i]).collect();
    if usable.len() < 3 {
        return Ok(DecayReport {
            verdict: DecayVerdict::Inconclusive,
            rate_or_exponent: f64::NAN,
            exp_fit: None,
            pow_fit: None,
            n_usable: usable.len(),
        });
    }
    let ys: Vec<f64> = usable.iter().map(|&i| values[i].ln()).collect();
    let sig: Vec<f64> = usable.iter().map(|&i| errors[i] / values[i]).collect();
    let xs_exp: Vec<f64> = usable.iter().map(|&i| distances[i]).collect();
    let xs_pow: Vec<f64> = usable.iter().map(|&i| distances[i].ln()).collect();
    let exp_fit = wls_line(&xs_exp, &ys, &sig);
    let pow_fit = wls_line(&xs_pow, &ys, &sig);
    let (Some(ef), Some(pf)) = (exp_fit, pow_fit) else {
        return Err(CoreError::Numeric("log-space fits failed".into()));
    };
    // Floor feasibility: predictions must stay near or below the 2-sigma
    // upper bounds of the floor points.
    let feasible = |fit: &LineFit, power: bool| -> bool {
        floors.iter().all(|&i| {
            let x = if power { distances[i].ln() } else { distances[i] };
            let pred = (fit.intercept + fit.slope * x).exp();
            pred <= 3.0 * (values[i].max(0.0) + 2.0 * errors[i])
        })
    };
    let exp_ok = feasible(&ef, false);
    let pow_ok = feasible(&pf, true);
    let exp_significant = ef.slope < 0.0 && ef.slope.abs() > 3.0 * ef.slope_stderr;
    let pow_significant = pf.slope < 0.0 && pf.slope.abs() > 3.0 * pf.slope_stderr;
    let verdict = match (exp_ok, pow_ok) {
        (true, false) if exp_significant => DecayVerdict::Exponential,
        (false, true) if pow_significant => DecayVerdict::PowerLaw,
        (true, true) => {
            if pf.chi2 >= 3.0 * ef.chi2.max(1e-12) && exp_significant {
                DecayVerdict::Exponential
            } else if ef.chi2 >= 3.0 * pf.chi2.max(1e-12) && pow_significant {
                DecayVerdict::PowerLaw
            } else {
                DecayVerdict::Inconclusive
            }
        }
        _ => DecayVerdict::Inconclusive,
    };
    let rate_or_exponent = match verdict {
        DecayVerdict::Exponential => -ef.slope,
        DecayVerdict::PowerLaw => -pf.slope,
        DecayVerdict::Inconclusive => f64::NAN,
    };
    Ok(DecayReport { verdict, rate_or_exponent, exp_fit, pow_fit, n_usable: usable.len() })
}
