//! Height-function duality: Bessel potentials attached to the two dual-edge
//! types, the Lammers delocalization condition `V(+-1) <= V(0) + ln 2`, the
//! inverse-temperature thresholds solving the Bessel-ratio equations, and
//! delocalization experiments on nested dual domains.

use crate::error::{CoreError, Result};
use crate::graph::{build_dual_graph, build_extended_triangulation, DualEdgeType, DualGraph};
use crate::oracle::{bessel_i, bessel_i_quadrature};
use crate::rng::SeedStream;
use crate::sampler::{height_sweep, ChainSchedule, EstimatorResult};
use crate::stats::{series_estimate, wls_line};

pub const K_MAX: i64 = 50;
pub const BETA_MAX: f64 = 50.0;

/// Tabulated dual potential for one edge type:
/// type 1: `V(k) = -2 ln I_k(2 b1) - (n-1) ln I_k(2 b2)`,
/// type 2: `V(k) = -4 ln I_k(2 b1) - (2n-2) ln I_k(2 b2)`.
#[derive(Debug, Clone)]
pub struct DualPotential {
    pub edge_type: DualEdgeType,
    pub n: usize,
    pub beta1: f64,
    pub beta2: f64,
    values: Vec<f64>, // V(k) for k = 0..=K_MAX
}

/// The direct formula, evaluated through the Bessel series.
pub fn potential_v(
    edge_type: DualEdgeType,
    n: usize,
    beta1: f64,
    beta2: f64,
    k: i64,
) -> Result<f64> {
    if !(beta1 > 0.0 && beta1 <= BETA_MAX && beta2 > 0.0 && beta2 <= BETA_MAX) {
        return Err(CoreError::Domain(format!(
            "inverse temperatures ({beta1}, {beta2}) outside (0, {BETA_MAX}]"
        )));
    }
    if n < 1 {
        return Err(CoreError::Domain("subdivision parameter n must be >= 1".into()));
    }
    let k = k.unsigned_abs();
    if k > K_MAX as u64 {
        return Err(CoreError::Domain(format!("|k| = {k} exceeds {K_MAX}")));
    }
    let l1 = bessel_i(k as u32, 2.0 * beta1)?.ln();
    let l2 = bessel_i(k as u32, 2.0 * beta2)?.ln();
    Ok(match edge_type {
        DualEdgeType::Type1 => -2.0 * l1 - (n as f64 - 1.0) * l2,
        DualEdgeType::Type2 => -4.0 * l1 - (2.0 * n as f64 - 2.0) * l2,
    })
}

impl DualPotential {
    pub fn build(edge_type: DualEdgeType, n: usize, beta1: f64, beta2: f64) -> Result<Self> {
        let values = (0..=K_MAX)
            .map(|k| potential_v(edge_type, n, beta1, beta2, k))
            .collect::<Result<Vec<_>>>()?;
        Ok(DualPotential { edge_type, n, beta1, beta2, values })
    }

    /// `V(k) = V(-k)`; errors beyond the tabulated range.
    pub fn value(&self, k: i64) -> Result<f64> {
        let a = k.unsigned_abs() as usize;
        self.values
            .get(a)
            .copied()
            .ok_or_else(|| CoreError::Precision(format!("height increment {k} beyond table")))
    }

    /// Convexity margin `min_k V(k-1) + V(k+1) - 2 V(k)` over `|k| < k_hi`.
    pub fn convexity_margin(&self, k_hi: i64) -> Result<f64> {
        let mut margin = f64::INFINITY;
        for k in -(k_hi - 1)..k_hi {
            let m = self.value(k - 1)? + self.value(k + 1)? - 2.0 * self.value(k)?;
            margin = margin.min(m);
        }
        Ok(margin)
    }
}

/// Potentials for both dual edge types at common parameters.
#[derive(Debug, Clone)]
pub struct DualPotentialPair {
    pub type1: DualPotential,
    pub type2: DualPotential,
}

impl DualPotentialPair {
    pub fn build(n: usize, beta1: f64, beta2: f64) -> Result<Self> {
        Ok(DualPotentialPair {
            type1: DualPotential::build(DualEdgeType::Type1, n, beta1, beta2)?,
            type2: DualPotential::build(DualEdgeType::Type2, n, beta1, beta2)?,
        })
    }

    pub fn of(&self, ty: DualEdgeType) -> &DualPotential {
        match ty {
            DualEdgeType::Type1 => &self.type1,
            DualEdgeType::Type2 => &self.type2,
        }
    }
}

/// Integer heights on the faces of a dual graph, pinned to 0 on the boundary.
#[derive(Debug, Clone)]
pub struct HeightState {
    values: Vec<i64>,
    boundary: Vec<bool>,
}

impl HeightState {
    pub fn zeros(dual: &DualGraph) -> Self {
        HeightState {
            values: vec![0; dual.n_faces()],
            boundary: (0..dual.n_faces()).map(|f| dual.is_boundary(f)).collect(),
        }
    }

    pub fn height(&self, face: usize) -> i64 {
        self.values[face]
    }

    pub fn set_height(&mut self, face: usize, h: i64) {
        debug_assert!(!self.boundary[face] || h == 0);
        self.values[face] = h;
    }

    pub fn is_pinned(&self, face: usize) -> bool {
        self.boundary[face]
    }
}

/// Margins of the Lammers condition `V(+-1) <= V(0) + ln 2` per edge type,
/// alongside the paper's sufficient Bessel-ratio surrogate. The surrogate
/// bounds the type-1 increment by `ln 2 / 4 + 1/4 < ln 2` but the type-2
/// increment only by `ln 2 / 2 + 1/2 > ln 2`; `type2_surrogate_gap` reports
/// that shortfall.
#[derive(Debug, Clone, Copy)]
pub struct LammersReport {
    pub n: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub type1_margin: f64,
    pub type2_margin: f64,
    pub type1_ok: bool,
    pub type2_ok: bool,
    /// `ln 2 - (4 ln r1 + (2n-2) ln r2)` with `r = I0(2b)/I1(2b)`.
    pub type2_surrogate_gap: f64,
}

pub fn lammers_check(n: usize, beta1: f64, beta2: f64) -> Result<LammersReport> {
    let ln2 = std::f64::consts::LN_2;
    let margin = |ty| -> Result<f64> {
        Ok(potential_v(ty, n, beta1, beta2, 0)? + ln2 - potential_v(ty, n, beta1, beta2, 1)?)
    };
    let type1_margin = margin(DualEdgeType::Type1)?;
    let type2_margin = margin(DualEdgeType::Type2)?;
    let r1 = bessel_i(0, 2.0 * beta1)? / bessel_i(1, 2.0 * beta1)?;
    let r2 = bessel_i(0, 2.0 * beta2)? / bessel_i(1, 2.0 * beta2)?;
    let type2_surrogate_gap = ln2 - (4.0 * r1.ln() + (2.0 * n as f64 - 2.0) * r2.ln());
    Ok(LammersReport {
        n,
        beta1,
        beta2,
        type1_margin,
        type2_margin,
        type1_ok: type1_margin >= 0.0,
        type2_ok: type2_margin >= 0.0,
        type2_surrogate_gap,
    })
}

fn bisect_ratio(target: f64) -> Result<f64> {
    // I0(2b)/I1(2b) decreases from +inf toward 1; solve ratio = target.
    let ratio =
        |beta: f64| -> Result<f64> { Ok(bessel_i(0, 2.0 * beta)? / bessel_i(1, 2.0 * beta)?) };
    let mut lo = 1e-3;
    let mut hi = BETA_MAX;
    if ratio(lo)? < target {
        return Err(CoreError::Numeric("bracket failure at lower end".into()));
    }
    if ratio(hi)? > target {
        return Err(CoreError::Numeric("bracket failure at upper end".into()));
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if ratio(mid)? > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-10 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Root of `I0(2 b)/I1(2 b) = 2^{1/8}` to 1e-8.
pub fn threshold_beta1() -> Result<f64> {
    bisect_ratio(2f64.powf(0.125))
}

/// Root of `I0(2 b)/I1(2 b) = e^{1/(4(n-1))}` to 1e-8; increasing in `n`.
pub fn threshold_beta2(n: usize) -> Result<f64> {
    if n < 2 {
        return Err(CoreError::Domain("threshold_beta2 requires n >= 2".into()));
    }
    bisect_ratio((1.0 / (4.0 * (n as f64 - 1.0))).exp())
}

#[derive(Debug, Clone)]
pub struct DelocalizationRow {
    pub size: i64,
    pub n_interior_faces: usize,
    pub abs_height: EstimatorResult,
}

#[derive(Debug, Clone)]
pub struct DelocalizationReport {
    pub rows: Vec<DelocalizationRow>,
    pub lammers: LammersReport,
    /// Set when the Lammers condition fails for either edge type.
    pub exploratory: bool,
    /// WLS slope of `E|h(0)|` against `ln(size)`.
    pub trend_slope: f64,
    pub trend_slope_stderr: f64,
}

/// Monte Carlo estimates of `E|h(0_{dual})|` on nested dual domains built
/// from triangulation boxes of the given radii.
pub fn delocalization_experiment(
    n: usize,
    beta1: f64,
    beta2: f64,
    sizes: &[i64],
    schedule: &ChainSchedule,
) -> Result<DelocalizationReport> {
    let lammers = lammers_check(n, beta1, beta2)?;
    let potentials = DualPotentialPair::build(n, beta1, beta2)?;
    let streams = SeedStream::new(schedule.seed);
    let mut rows = Vec::new();
    for (i, &size) in sizes.iter().enumerate() {
        let tri = build_extended_triangulation(size, n, beta1, beta2)?;
        let dual = build_dual_graph(&tri)?;
        let mut heights = HeightState::zeros(&dual);
        let mut rng = streams.stream("deloc", i as u64);
        for _ in 0..schedule.thermalization {
            height_sweep(&dual, &mut heights, &potentials, &mut rng)?;
        }
        let mut series = Vec::new();
        let mut sweeps_done = 0usize;
        while series.len() < schedule.measurement {
            height_sweep(&dual, &mut heights, &potentials, &mut rng)?;
            sweeps_done += 1;
            if sweeps_done % schedule.measure_every == 0 {
                series.push(heights.height(dual.origin_face()).abs() as f64);
            }
        }
        let (mean, stderr, tau_int, n_samples) = series_estimate(&series);
        rows.push(DelocalizationRow {
            size,
            n_interior_faces: (0..dual.n_faces()).filter(|&f| !dual.is_boundary(f)).count(),
            abs_height: EstimatorResult { mean, stderr, tau_int, n_samples },
        });
    }
    let xs: Vec<f64> = rows.iter().map(|r| (r.size as f64).ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.abs_height.mean).collect();
    let sigmas: Vec<f64> = rows.iter().map(|r| r.abs_height.stderr.max(1e-9)).collect();
    let fit = wls_line(&xs, &ys, &sigmas);
    Ok(DelocalizationReport {
        rows,
        lammers,
        exploratory: !(lammers.type1_ok && lammers.type2_ok),
        trend_slope: fit.map_or(0.0, |f| f.slope),
        trend_slope_stderr: fit.map_or(f64::INFINITY, |f| f.slope_stderr),
    })
}

/// Truncated-sum oracle for a single face whose neighbours are all pinned at
/// zero: the exact conditional expectation of `|h|` over `|h| <= cut`.
pub fn single_face_abs_height_oracle(
    dual: &DualGraph,
    potentials: &DualPotentialPair,
    face: usize,
    cut: i64,
) -> Result<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for h in -cut..=cut {
        let mut energy = 0.0;
        for &(_, e) in dual.neighbors(face) {
            let ty = dual.dual_edges[e].2;
            energy += potentials.of(ty).value(h)?;
        }
        let w = (-energy).exp();
        num += h.abs() as f64 * w;
        den += w;
    }
    Ok(num / den)
}
