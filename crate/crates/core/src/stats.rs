//! Small statistical toolkit shared by the samplers and estimators.
//!
//! All reductions go through [`pairwise_sum`] so results do not depend on how
//! the sample was produced, only on its order.

/// Deterministic pairwise (tree) summation.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const LEAF: usize = 32;
    if xs.len() <= LEAF {
        return xs.iter().sum();
    }
    let (lo, hi) = xs.split_at(xs.len() / 2);
    pairwise_sum(lo) + pairwise_sum(hi)
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    pairwise_sum(xs) / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let sq: Vec<f64> = xs.iter().map(|x| (x - m) * (x - m)).collect();
    pairwise_sum(&sq) / (n - 1) as f64
}

/// Mean and its naive standard error.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    (mean(xs), (variance(xs) / n).sqrt())
}

/// Jackknife estimate of `g(mean(xs))` with block deletion.
///
/// Returns `(estimate, stderr)`. With `blocks == xs.len()` this is the plain
/// delete-one jackknife.
pub fn jackknife<G: Fn(f64) -> f64>(xs: &[f64], blocks: usize, g: G) -> (f64, f64) {
    let n = xs.len();
    let blocks = blocks.clamp(2, n.max(2));
    let total = pairwise_sum(xs);
    let full = g(total / n as f64);
    let size = n / blocks;
    let mut leave_out = Vec::with_capacity(blocks);
    for b in 0..blocks {
        let lo = b * size;
        let hi = if b + 1 == blocks { n } else { lo + size };
        let block_sum = pairwise_sum(&xs[lo..hi]);
        let rest = (n - (hi - lo)) as f64;
        leave_out.push(g((total - block_sum) / rest));
    }
    let k = blocks as f64;
    let jmean = mean(&leave_out);
    let var: Vec<f64> = leave_out.iter().map(|v| (v - jmean).powi(2)).collect();
    let se = ((k - 1.0) / k * pairwise_sum(&var)).sqrt();
    (k * full - (k - 1.0) * jmean, se)
}

/// Kolmogorov–Smirnov statistic of `xs` against a continuous CDF.
pub fn ks_statistic<F: Fn(f64) -> f64>(xs: &[f64], cdf: F) -> f64 {
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Two-sample Kolmogorov–Smirnov statistic.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Asymptotic 1% critical value of the KS statistic for effective size `n`.
pub fn ks_critical_1pct(n: f64) -> f64 {
    1.6276 / n.sqrt()
}

pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let t = pos - lo as f64;
    sorted[lo] * (1.0 - t) + sorted[hi] * t
}

/// Freedman–Diaconis bin width; falls back to range/√n for a zero IQR.
pub fn freedman_diaconis_width(xs: &[f64]) -> f64 {
    let mut s = xs.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let iqr = quantile(&s, 0.75) - quantile(&s, 0.25);
    let w = 2.0 * iqr / n.cbrt();
    if w > 0.0 {
        w
    } else {
        let range = s[s.len() - 1] - s[0];
        if range > 0.0 {
            range / n.sqrt()
        } else {
            1.0
        }
    }
}

/// Normalized autocorrelation function up to `max_lag`.
pub fn autocorrelation(xs: &[f64], max_lag: usize) -> Vec<f64> {
    let n = xs.len();
    let m = mean(xs);
    let c0: f64 = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n as f64;
    if c0 == 0.0 {
        return vec![1.0];
    }
    (0..=max_lag.min(n - 1))
        .map(|lag| {
            let c: f64 = xs[..n - lag]
                .iter()
                .zip(&xs[lag..])
                .map(|(a, b)| (a - m) * (b - m))
                .sum::<f64>()
                / n as f64;
            c / c0
        })
        .collect()
}

/// Integrated autocorrelation time with Sokal's automatic window (c = 5).
pub fn integrated_autocorr_time(xs: &[f64]) -> f64 {
    let rho = autocorrelation(xs, xs.len() / 2);
    let mut tau = 1.0;
    for (lag, r) in rho.iter().enumerate().skip(1) {
        tau += 2.0 * r;
        if lag as f64 >= 5.0 * tau {
            break;
        }
    }
    tau.max(1.0)
}

/// Gelman–Rubin potential scale reduction over equal-length chains.
pub fn gelman_rubin(chains: &[Vec<f64>]) -> f64 {
    let m = chains.len() as f64;
    let n = chains.iter().map(Vec::len).min().unwrap_or(0) as f64;
    if m < 2.0 || n < 2.0 {
        return f64::NAN;
    }
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let grand = mean(&means);
    let b = n / (m - 1.0) * means.iter().map(|x| (x - grand).powi(2)).sum::<f64>();
    let w = mean(&chains.iter().map(|c| variance(c)).collect::<Vec<_>>());
    if w == 0.0 {
        return 1.0;
    }
    let var_plus = (n - 1.0) / n * w + b / n;
    (var_plus / w).sqrt()
}

/// Weighted least-squares straight line `y = slope·x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Covariance matrix `[[var(slope), cov], [cov, var(intercept)]]`.
    pub covariance: [[f64; 2]; 2],
    pub chi2: f64,
    pub points: usize,
}

impl LineFit {
    pub fn slope_stderr(&self) -> f64 {
        self.covariance[0][0].sqrt()
    }
    pub fn intercept_stderr(&self) -> f64 {
        self.covariance[1][1].sqrt()
    }
}

/// Fits with per-point variances `var` (weights `1/var`).
pub fn weighted_line_fit(x: &[f64], y: &[f64], var: &[f64]) -> Option<LineFit> {
    if x.len() < 2 || x.len() != y.len() || x.len() != var.len() {
        return None;
    }
    let (mut s, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for ((&xi, &yi), &vi) in x.iter().zip(y).zip(var) {
        let w = 1.0 / vi;
        s += w;
        sx += w * xi;
        sy += w * yi;
        sxx += w * xi * xi;
        sxy += w * xi * yi;
    }
    let det = s * sxx - sx * sx;
    if det <= 0.0 {
        return None;
    }
    let slope = (s * sxy - sx * sy) / det;
    let intercept = (sxx * sy - sx * sxy) / det;
    let chi2 = x
        .iter()
        .zip(y)
        .zip(var)
        .map(|((&xi, &yi), &vi)| (yi - slope * xi - intercept).powi(2) / vi)
        .sum();
    Some(LineFit {
        slope,
        intercept,
        covariance: [[s / det, -sx / det], [-sx / det, sxx / det]],
        chi2,
        points: x.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_sum_matches_naive_on_integers() {
        let xs: Vec<f64> = (1..=1000).map(f64::from).collect();
        assert_eq!(pairwise_sum(&xs), 500_500.0);
    }

    #[test]
    fn jackknife_of_identity_is_plain_stderr() {
        let xs: Vec<f64> = (0..200).map(|i| ((i * 37) % 17) as f64).collect();
        let (m, se) = mean_stderr(&xs);
        let (jm, jse) = jackknife(&xs, xs.len(), |v| v);
        assert!((m - jm).abs() < 1e-12);
        assert!((se - jse).abs() < 1e-12);
    }

    #[test]
    fn line_fit_recovers_exact_line() {
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v - 3.0).collect();
        let fit = weighted_line_fit(&x, &y, &[1.0; 10]).unwrap();
        assert!((fit.slope - 2.0).abs() < 1e-12);
        assert!((fit.intercept + 3.0).abs() < 1e-12);
        assert!(fit.chi2 < 1e-20);
    }

    #[test]
    fn ks_statistic_of_perfect_grid_is_small() {
        let n = 1000;
        let xs: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        assert!(ks_statistic(&xs, |x| x) <= 0.5 / n as f64 + 1e-12);
    }

    #[test]
    fn gelman_rubin_near_one_for_identical_chains() {
        let c: Vec<f64> = (0..100).map(|i| (i % 7) as f64).collect();
        let r = gelman_rubin(&[c.clone(), c.clone(), c]);
        assert!((r - 1.0).abs() < 0.02);
    }
}
