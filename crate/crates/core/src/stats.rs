//! Small numerical/statistical helpers: compensated summation, Wilson score
//! intervals, integrated autocorrelation times, weighted least squares.

/// Kahan-Babuska compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Compensated sum of an iterator.
pub fn kahan_sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    let mut acc = KahanSum::new();
    for x in iter {
        acc.add(x);
    }
    acc.value()
}

/// Wilson score interval for `successes` out of `n` at `z` standard normal
/// quantiles (z = 1.96 for 95%).
pub fn wilson_interval(successes: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    let p = successes as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = z / denom * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt();
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Integrated autocorrelation time by automatic windowing: the window is the
/// smallest `w` with `w >= c * tau_int(w)` (c = 6).
pub fn tau_int_auto(series: &[f64]) -> f64 {
    let n = series.len();
    if n < 8 {
        return 0.5;
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let var = series.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
    if var <= 0.0 {
        return 0.5;
    }
    let c = 6.0;
    let mut tau = 0.5;
    let t_max = n / 4;
    for t in 1..=t_max {
        let mut acc = 0.0;
        for i in 0..n - t {
            acc += (series[i] - mean) * (series[i + t] - mean);
        }
        let rho = acc / ((n - t) as f64) / var;
        tau += rho;
        if (t as f64) >= c * tau.max(0.5) {
            break;
        }
    }
    tau.max(0.5)
}

/// Mean, autocorrelation-corrected standard error, tau_int and sample count.
pub fn series_estimate(series: &[f64]) -> (f64, f64, f64, usize) {
    let n = series.len();
    if n == 0 {
        return (f64::NAN, f64::NAN, 0.5, 0);
    }
    let mean = kahan_sum(series.iter().copied()) / n as f64;
    if n == 1 {
        return (mean, 0.0, 0.5, 1);
    }
    let var = series.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    let tau = tau_int_auto(series);
    let stderr = (var * 2.0 * tau / n as f64).sqrt();
    (mean, stderr, tau, n)
}

/// Result of a weighted least-squares straight-line fit `y = a + b x`.
#[derive(Debug, Clone, Copy)]
pub struct LineFit {
    pub intercept: f64,
    pub slope: f64,
    pub slope_stderr: f64,
    /// Sum of squared standardized residuals.
    pub chi2: f64,
    pub n_points: usize,
}

/// Weighted least squares with weights `1/sigma_i^2`.
pub fn wls_line(xs: &[f64], ys: &[f64], sigmas: &[f64]) -> Option<LineFit> {
    let n = xs.len();
    if n < 2 || ys.len() != n || sigmas.len() != n {
        return None;
    }
    let (mut sw, mut swx, mut swy, mut swxx, mut swxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..n {
        let s = sigmas[i];
        if !(s > 0.0) {
            return None;
        }
        let w = 1.0 / (s * s);
        sw += w;
        swx += w * xs[i];
        swy += w * ys[i];
        swxx += w * xs[i] * xs[i];
        swxy += w * xs[i] * ys[i];
    }
    let det = sw * swxx - swx * swx;
    if det.abs() < 1e-300 {
        return None;
    }
    let intercept = (swxx * swy - swx * swxy) / det;
    let slope = (sw * swxy - swx * swy) / det;
    let slope_stderr = (sw / det).sqrt();
    let chi2 = (0..n)
        .map(|i| {
            let r = (ys[i] - intercept - slope * xs[i]) / sigmas[i];
            r * r
        })
        .sum();
    Some(LineFit { intercept, slope, slope_stderr, chi2, n_points: n })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kahan_recovers_small_terms() {
        let mut acc = KahanSum::new();
        acc.add(1.0);
        for _ in 0..1000 {
            acc.add(1e-17);
        }
        assert!((acc.value() - (1.0 + 1000.0 * 1e-17)).abs() < 1e-18);
    }

    #[test]
    fn wilson_brackets_the_point_estimate() {
        let (lo, hi) = wilson_interval(75, 100, 1.96);
        assert!(lo < 0.75 && 0.75 < hi);
        assert!(lo > 0.64 && hi < 0.84);
    }

    #[test]
    fn wls_exact_line() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys = [3.0, 5.0, 7.0, 9.0];
        let sig = [0.1; 4];
        let fit = wls_line(&xs, &ys, &sig).unwrap();
        assert!((fit.slope - 2.0).abs() < 1e-12);
        assert!((fit.intercept - 1.0).abs() < 1e-12);
        assert!(fit.chi2 < 1e-20);
    }

    #[test]
    fn tau_int_of_iid_is_half() {
        use rand::Rng;
        let mut rng = crate::rng::SeedStream::new(1).stream("tau", 0);
        let series: Vec<f64> = (0..4000).map(|_| rng.gen::<f64>()).collect();
        let tau = tau_int_auto(&series);
        assert!(tau < 0.7, "tau = {tau}");
    }
}
