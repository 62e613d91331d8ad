//! One-vs-rest linear classifiers with L1 hinge loss, trained by dual
//! coordinate descent in a fixed cyclic order (no shuffling), so repeated
//! runs are bit-identical. The bias is handled as an implicit augmented
//! feature.

/// Solver settings: regularization strength (upper bound on dual
/// variables), stopping tolerance on the projected gradient, and a pass
/// cap so pathological problems terminate.
#[derive(Debug, Clone, Copy)]
pub struct SvmConfig {
    pub c: f64,
    pub tol: f64,
    pub max_passes: usize,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            c: 1.0,
            tol: 1e-4,
            max_passes: 1000,
        }
    }
}

/// Trained one-vs-rest linear decoder.
#[derive(Debug, Clone)]
pub struct LinearDecoder {
    pub classes: usize,
    pub dim: usize,
    /// Per-class weight vector.
    pub weights: Vec<Vec<f64>>,
    /// Per-class bias.
    pub biases: Vec<f64>,
    pub config: SvmConfig,
}

impl LinearDecoder {
    /// Trains `classes` binary separators on row-major `features`
    /// (`n x dim`). A class with no positive examples trains on negatives
    /// only and simply scores low.
    pub fn fit(features: &[f64], dim: usize, labels: &[usize], classes: usize, config: SvmConfig) -> Self {
        let n = labels.len();
        assert_eq!(features.len(), n * dim, "feature matrix shape");
        // Diagonal of the Gram matrix, shared across all classes
        // (+1 accounts for the implicit bias feature).
        let q: Vec<f64> = (0..n)
            .map(|i| {
                let row = &features[i * dim..(i + 1) * dim];
                row.iter().map(|x| x * x).sum::<f64>() + 1.0
            })
            .collect();
        let mut weights = Vec::with_capacity(classes);
        let mut biases = Vec::with_capacity(classes);
        for class in 0..classes {
            let y: Vec<f64> = labels
                .iter()
                .map(|&l| if l == class { 1.0 } else { -1.0 })
                .collect();
            let (w, b) = dual_coordinate_descent(features, dim, &y, &q, &config);
            weights.push(w);
            biases.push(b);
        }
        LinearDecoder {
            classes,
            dim,
            weights,
            biases,
            config,
        }
    }

    pub fn score(&self, x: &[f64], class: usize) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        dot(&self.weights[class], x) + self.biases[class]
    }

    /// Argmax over class scores; ties break toward the lowest class index.
    pub fn predict(&self, x: &[f64]) -> usize {
        let mut best = 0usize;
        let mut best_score = self.score(x, 0);
        for class in 1..self.classes {
            let s = self.score(x, class);
            if s > best_score {
                best = class;
                best_score = s;
            }
        }
        best
    }

    pub fn accuracy(&self, features: &[f64], labels: &[usize]) -> f64 {
        let n = labels.len();
        if n == 0 {
            return f64::NAN;
        }
        let hits = labels
            .iter()
            .enumerate()
            .filter(|&(i, &l)| self.predict(&features[i * self.dim..(i + 1) * self.dim]) == l)
            .count();
        hits as f64 / n as f64
    }
}

/// Unrolled dot product with independent accumulators; the fixed
/// summation order keeps results reproducible run to run.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 8];
    let (ca, ra) = a.split_at(a.len() / 8 * 8);
    let (cb, _) = b.split_at(ca.len());
    for (xa, xb) in ca.chunks_exact(8).zip(cb.chunks_exact(8)) {
        for k in 0..8 {
            acc[k] += xa[k] * xb[k];
        }
    }
    let mut tail = 0.0;
    for (xa, xb) in ra.iter().zip(b[ca.len()..].iter()) {
        tail += xa * xb;
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}

// splitmix64, used for the deterministic per-pass permutation
fn next_u64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// L1-loss SVM dual:
///   min_a  0.5 a^T Q a - e^T a,  0 <= a_i <= C,  Q_ij = y_i y_j x_i.x_j
/// solved by coordinate descent with a seeded per-pass permutation and
/// the standard shrinking heuristic: coordinates pinned at a bound with a
/// safely one-sided gradient leave the active set, and convergence on the
/// shrunk set triggers one full-set verification pass. Fully
/// deterministic: the permutation stream is fixed.
fn dual_coordinate_descent(
    features: &[f64],
    dim: usize,
    y: &[f64],
    q_diag: &[f64],
    config: &SvmConfig,
) -> (Vec<f64>, f64) {
    let n = y.len();
    let mut alpha = vec![0.0f64; n];
    let mut w = vec![0.0f64; dim];
    let mut b = 0.0f64;
    let mut active: Vec<usize> = (0..n).collect();
    let mut rng_state: u64 = 0x5eed_0ddb_a11a_5eed;
    let mut upper_bound = f64::INFINITY; // shrink threshold for alpha = 0
    let mut lower_bound = f64::NEG_INFINITY; // shrink threshold for alpha = C

    for _pass in 0..config.max_passes {
        // Fisher-Yates over the active set
        for k in (1..active.len()).rev() {
            let j = (next_u64(&mut rng_state) % (k as u64 + 1)) as usize;
            active.swap(k, j);
        }
        let mut pg_max = f64::NEG_INFINITY;
        let mut pg_min = f64::INFINITY;
        let mut k = 0;
        while k < active.len() {
            let i = active[k];
            let xi = &features[i * dim..(i + 1) * dim];
            let g = y[i] * (dot(&w, xi) + b) - 1.0;
            let mut pg = 0.0;
            if alpha[i] == 0.0 {
                if g > upper_bound {
                    active.swap_remove(k);
                    continue;
                }
                if g < 0.0 {
                    pg = g;
                }
            } else if alpha[i] >= config.c {
                if g < lower_bound {
                    active.swap_remove(k);
                    continue;
                }
                if g > 0.0 {
                    pg = g;
                }
            } else {
                pg = g;
            }
            pg_max = pg_max.max(pg);
            pg_min = pg_min.min(pg);
            if pg.abs() > 1e-12 {
                let next = (alpha[i] - g / q_diag[i]).clamp(0.0, config.c);
                let delta = (next - alpha[i]) * y[i];
                if delta != 0.0 {
                    for (wj, xj) in w.iter_mut().zip(xi.iter()) {
                        *wj += delta * xj;
                    }
                    b += delta;
                    alpha[i] = next;
                }
            }
            k += 1;
        }
        if pg_max - pg_min <= config.tol {
            if active.len() == n {
                break;
            }
            // converged on the shrunk set; verify against everything
            active = (0..n).collect();
            upper_bound = f64::INFINITY;
            lower_bound = f64::NEG_INFINITY;
            continue;
        }
        upper_bound = if pg_max <= 0.0 { f64::INFINITY } else { pg_max };
        lower_bound = if pg_min >= 0.0 { f64::NEG_INFINITY } else { pg_min };
    }
    (w, b)
}

/// Per-feature standardization fitted on training rows and applied to any
/// row. Constant features pass through unscaled.
#[derive(Debug, Clone)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(features: &[f64], dim: usize) -> Self {
        let n = features.len() / dim.max(1);
        let mut mean = vec![0.0; dim];
        for i in 0..n {
            for (m, &x) in mean.iter_mut().zip(&features[i * dim..(i + 1) * dim]) {
                *m += x;
            }
        }
        for m in mean.iter_mut() {
            *m /= n.max(1) as f64;
        }
        let mut var = vec![0.0; dim];
        for i in 0..n {
            for (j, &x) in features[i * dim..(i + 1) * dim].iter().enumerate() {
                var[j] += (x - mean[j]).powi(2);
            }
        }
        let scale = var
            .iter()
            .map(|&v| {
                let sd = (v / n.max(1) as f64).sqrt();
                if sd > 1e-12 {
                    1.0 / sd
                } else {
                    1.0
                }
            })
            .collect();
        Standardizer { mean, scale }
    }

    pub fn apply(&self, features: &[f64], dim: usize) -> Vec<f64> {
        let n = features.len() / dim.max(1);
        let mut out = Vec::with_capacity(features.len());
        for i in 0..n {
            for (j, &x) in features[i * dim..(i + 1) * dim].iter().enumerate() {
                out.push((x - self.mean[j]) * self.scale[j]);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn blob_dataset(seed: u64, per_class: usize) -> (Vec<f64>, Vec<usize>) {
        // three well-separated Gaussian blobs in 2D
        let centers = [(0.0, 0.0), (6.0, 0.0), (0.0, 6.0)];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for (c, &(cx, cy)) in centers.iter().enumerate() {
            for _ in 0..per_class {
                features.push(cx + rng.gen_range(-1.0..1.0));
                features.push(cy + rng.gen_range(-1.0..1.0));
                labels.push(c);
            }
        }
        (features, labels)
    }

    #[test]
    fn separable_blobs_classify_perfectly() {
        let (x, y) = blob_dataset(1, 40);
        let dec = LinearDecoder::fit(&x, 2, &y, 3, SvmConfig::default());
        assert_eq!(dec.accuracy(&x, &y), 1.0);
    }

    #[test]
    fn training_is_deterministic() {
        let (x, y) = blob_dataset(2, 30);
        let a = LinearDecoder::fit(&x, 2, &y, 3, SvmConfig::default());
        let b = LinearDecoder::fit(&x, 2, &y, 3, SvmConfig::default());
        for (wa, wb) in a.weights.iter().zip(b.weights.iter()) {
            assert_eq!(wa, wb);
        }
        assert_eq!(a.biases, b.biases);
    }

    #[test]
    fn absent_class_scores_low_without_error() {
        let (x, y) = blob_dataset(3, 25);
        // claim a 4th class that never occurs
        let dec = LinearDecoder::fit(&x, 2, &y, 4, SvmConfig::default());
        assert_eq!(dec.accuracy(&x, &y), 1.0);
        for i in 0..y.len() {
            assert_ne!(dec.predict(&x[i * 2..(i + 1) * 2]), 3);
        }
    }

    #[test]
    fn ties_break_toward_lowest_class() {
        let dec = LinearDecoder {
            classes: 3,
            dim: 1,
            weights: vec![vec![0.0], vec![0.0], vec![0.0]],
            biases: vec![0.5, 0.5, 0.5],
            config: SvmConfig::default(),
        };
        assert_eq!(dec.predict(&[1.0]), 0);
    }

    #[test]
    fn shuffled_labels_fall_to_chance() {
        let (x, y) = blob_dataset(4, 60);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut shuffled = y.clone();
        // Fisher-Yates
        for i in (1..shuffled.len()).rev() {
            let j = rng.gen_range(0..=i);
            shuffled.swap(i, j);
        }
        let dec = LinearDecoder::fit(&x, 2, &shuffled, 3, SvmConfig::default());
        let acc = dec.accuracy(&x, &shuffled);
        // chance is 1/3; allow 3 sigma over 180 samples
        let sigma = (1.0f64 / 3.0 * (2.0 / 3.0) / 180.0).sqrt();
        assert!(
            acc < 1.0 / 3.0 + 5.0 * sigma,
            "shuffled labels decoded at {acc}"
        );
    }

    #[test]
    fn standardizer_zeroes_mean_and_units_variance() {
        let (x, _) = blob_dataset(5, 50);
        let std = Standardizer::fit(&x, 2);
        let z = std.apply(&x, 2);
        let n = z.len() / 2;
        for j in 0..2 {
            let mean: f64 = (0..n).map(|i| z[i * 2 + j]).sum::<f64>() / n as f64;
            let var: f64 = (0..n).map(|i| (z[i * 2 + j] - mean).powi(2)).sum::<f64>() / n as f64;
            assert!(mean.abs() < 1e-10);
            assert!((var - 1.0).abs() < 1e-8);
        }
    }
}
