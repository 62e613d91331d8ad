//! Small statistics toolbox shared by evaluation, probes, and
//! interventions: proportion confidence intervals, two-proportion tests,
//! Spearman rank correlation, and chi-square statistics.

/// z for a two-sided 95% interval.
pub const Z_95: f64 = 1.959963984540054;
/// z for a one-sided test at alpha = 0.01.
pub const Z_99_ONE_SIDED: f64 = 2.3263478740408408;
/// Chi-square critical value, df = 4, alpha = 0.001.
pub const CHI2_DF4_A001: f64 = 18.4668;
/// Chi-square critical value, df = 25, alpha = 0.001.
pub const CHI2_DF25_A001: f64 = 52.6197;

/// Mean plus a 95% CI half-width from the normal approximation for a
/// binomial proportion over `n` trials.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Proportion {
    pub successes: usize,
    pub trials: usize,
}

impl Proportion {
    pub fn new(successes: usize, trials: usize) -> Self {
        Proportion { successes, trials }
    }

    pub fn rate(&self) -> f64 {
        if self.trials == 0 {
            return f64::NAN;
        }
        self.successes as f64 / self.trials as f64
    }

    pub fn ci95(&self) -> (f64, f64) {
        let p = self.rate();
        if self.trials == 0 {
            return (f64::NAN, f64::NAN);
        }
        let half = Z_95 * (p * (1.0 - p) / self.trials as f64).sqrt();
        ((p - half).max(0.0), (p + half).min(1.0))
    }
}

/// Mean and a 95% CI of the mean over raw samples.
pub fn mean_ci95(samples: &[f64]) -> (f64, f64, f64) {
    let n = samples.len();
    if n == 0 {
        return (f64::NAN, f64::NAN, f64::NAN);
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, mean, mean);
    }
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    let half = Z_95 * (var / n as f64).sqrt();
    (mean, mean - half, mean + half)
}

/// One-sided two-proportion z statistic for "p1 dropped below p2":
/// positive when group 1 outperforms group 2.
pub fn two_proportion_z(s1: usize, n1: usize, s2: usize, n2: usize) -> f64 {
    if n1 == 0 || n2 == 0 {
        return 0.0;
    }
    let p1 = s1 as f64 / n1 as f64;
    let p2 = s2 as f64 / n2 as f64;
    let pool = (s1 + s2) as f64 / (n1 + n2) as f64;
    let se = (pool * (1.0 - pool) * (1.0 / n1 as f64 + 1.0 / n2 as f64)).sqrt();
    if se == 0.0 {
        return 0.0;
    }
    (p1 - p2) / se
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len(), "input lengths differ");
    let rx = average_ranks(xs);
    let ry = average_ranks(ys);
    pearson(&rx, &ry)
}

fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).expect("NaN in rank input"));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        // ranks are 1-based; ties share the average rank of their run
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (x, y) in xs.iter().zip(ys.iter()) {
        cov += (x - mx) * (y - my);
        vx += (x - mx).powi(2);
        vy += (y - my).powi(2);
    }
    if vx == 0.0 || vy == 0.0 {
        return 0.0;
    }
    cov / (vx * vy).sqrt()
}

/// Chi-square statistic of observed counts against uniform expectation.
pub fn chi_square_uniform(counts: &[usize]) -> f64 {
    let total: usize = counts.iter().sum();
    if total == 0 || counts.is_empty() {
        return 0.0;
    }
    let expected = total as f64 / counts.len() as f64;
    counts
        .iter()
        .map(|&c| {
            let d = c as f64 - expected;
            d * d / expected
        })
        .sum()
}
