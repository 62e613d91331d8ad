//! Symbolic baselines for saccade-conditioned prediction.
//!
//! [`PositionDict`] is the dictionary agent: it path-integrates saccades,
//! stores {position: label} entries, and answers queries by position
//! lookup with a uniform-random fallback. [`TransitionCache`] is the
//! alternative memory that stores (label, saccade) -> label tuples and
//! fails on saccades it has never seen.

use std::collections::HashMap;

use rand::Rng;

use crate::worldgen::{Episode, Scene, Vec2, ALPHABET};

/// Positions are bucketed on this grid for O(1) lookup; equality within a
/// bucket (or its 8 neighbors) is decided by `MATCH_TOLERANCE`.
pub const KEY_GRID: f64 = 1e-4;
/// Two positions closer than this are the same token. Far below the 0.25
/// token spacing, far above accumulated float drift.
pub const MATCH_TOLERANCE: f64 = 1e-6;

fn grid_key(p: Vec2) -> (i64, i64) {
    ((p.x / KEY_GRID).round() as i64, (p.y / KEY_GRID).round() as i64)
}

/// Quantized-position map storing the exact position alongside each label
/// so near-miss queries resolve by distance, not bucket identity.
#[derive(Debug, Clone, Default)]
pub struct PositionDict {
    entries: HashMap<(i64, i64), (Vec2, u8)>,
    position: Vec2,
}

impl PositionDict {
    /// Fresh dictionary with the integrator at the origin.
    pub fn new() -> Self {
        PositionDict {
            entries: HashMap::new(),
            position: Vec2::ZERO,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Current path-integrated position.
    pub fn position(&self) -> Vec2 {
        self.position
    }

    fn find_key(&self, p: Vec2) -> Option<(i64, i64)> {
        let (kx, ky) = grid_key(p);
        for dx in -1..=1 {
            for dy in -1..=1 {
                let k = (kx + dx, ky + dy);
                if let Some((stored, _)) = self.entries.get(&k) {
                    if stored.dist(p) <= MATCH_TOLERANCE {
                        return Some(k);
                    }
                }
            }
        }
        None
    }

    /// Stored label at `p`, if any position within tolerance is known.
    pub fn lookup(&self, p: Vec2) -> Option<u8> {
        self.find_key(p).map(|k| self.entries[&k].1)
    }

    /// Stores `label` at `p`, unconditionally overwriting any entry within
    /// tolerance (latest observation wins).
    pub fn store(&mut self, p: Vec2, label: u8) {
        let key = self.find_key(p).unwrap_or_else(|| grid_key(p));
        self.entries.insert(key, (p, label));
    }

    /// One step of the dictionary agent: store the observed label at the
    /// current position, advance by the saccade, then answer from the
    /// dictionary or fall back to a uniform random label.
    pub fn step(&mut self, observed_label: u8, saccade: Vec2, fallback: &mut impl Rng) -> OracleStep {
        self.store(self.position, observed_label);
        self.position = self.position.add(saccade);
        match self.lookup(self.position) {
            Some(label) => OracleStep {
                prediction: label,
                hit: true,
            },
            None => OracleStep {
                prediction: fallback.gen_range(0..ALPHABET as u8),
                hit: false,
            },
        }
    }
}

/// Outcome of one oracle or cache step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleStep {
    pub prediction: u8,
    /// Whether memory answered (false means the uniform fallback fired).
    pub hit: bool,
}

/// Transition memory keyed by (label, quantized saccade). Grows O(N^2)
/// over full coverage of an N-token scene where the dictionary needs O(N).
#[derive(Debug, Clone, Default)]
pub struct TransitionCache {
    entries: HashMap<(u8, (i64, i64)), (Vec2, u8)>,
    last: Option<(u8, Vec2)>,
}

impl TransitionCache {
    pub fn new() -> Self {
        TransitionCache {
            entries: HashMap::new(),
            last: None,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn find_key(&self, label: u8, saccade: Vec2) -> Option<(u8, (i64, i64))> {
        let (kx, ky) = grid_key(saccade);
        for dx in -1..=1 {
            for dy in -1..=1 {
                let k = (label, (kx + dx, ky + dy));
                if let Some((stored, _)) = self.entries.get(&k) {
                    if stored.dist(saccade) <= MATCH_TOLERANCE {
                        return Some(k);
                    }
                }
            }
        }
        None
    }

    pub fn lookup(&self, label: u8, saccade: Vec2) -> Option<u8> {
        self.find_key(label, saccade).map(|k| self.entries[&k].1)
    }

    fn store(&mut self, label: u8, saccade: Vec2, target: u8) {
        let key = self
            .find_key(label, saccade)
            .unwrap_or_else(|| (label, grid_key(saccade)));
        self.entries.insert(key, (saccade, target));
    }

    /// One step of the cache agent: complete the transition that landed
    /// here, then predict via (current label, outgoing saccade) lookup.
    pub fn step(&mut self, observed_label: u8, saccade: Vec2, fallback: &mut impl Rng) -> OracleStep {
        if let Some((prev_label, prev_saccade)) = self.last.take() {
            self.store(prev_label, prev_saccade, observed_label);
        }
        self.last = Some((observed_label, saccade));
        match self.lookup(observed_label, saccade) {
            Some(label) => OracleStep {
                prediction: label,
                hit: true,
            },
            None => OracleStep {
                prediction: fallback.gen_range(0..ALPHABET as u8),
                hit: false,
            },
        }
    }
}

/// Per-timestep record of both baselines run over one episode.
#[derive(Debug, Clone)]
pub struct BaselineRun {
    pub oracle: Vec<OracleStep>,
    pub oracle_correct: Vec<bool>,
    pub cache: Vec<OracleStep>,
    pub cache_correct: Vec<bool>,
}

/// Runs dictionary and cache agents over an episode. Fallback draws come
/// from a dedicated stream so they never perturb episode sampling.
pub fn run_baselines(episode: &Episode, fallback: &mut impl Rng) -> BaselineRun {
    let mut dict = PositionDict::new();
    let mut cache = TransitionCache::new();
    let mut run = BaselineRun {
        oracle: Vec::with_capacity(episode.len()),
        oracle_correct: Vec::with_capacity(episode.len()),
        cache: Vec::with_capacity(episode.len()),
        cache_correct: Vec::with_capacity(episode.len()),
    };
    for step in &episode.steps {
        let o = dict.step(step.label, step.saccade_out, fallback);
        run.oracle_correct.push(o.prediction == step.target_label);
        run.oracle.push(o);
        let c = cache.step(step.label, step.saccade_out, fallback);
        run.cache_correct.push(c.prediction == step.target_label);
        run.cache.push(c);
    }
    run
}

/// Monte-Carlo accuracy curves for both baselines: per timestep, the
/// fraction of episodes predicted correctly. `n_tokens = None` mixes token
/// counts uniformly over {4,5,6} like the training distribution.
pub struct BaselineCurve {
    pub oracle_acc: Vec<f64>,
    pub cache_acc: Vec<f64>,
    pub episodes: usize,
}

pub fn baseline_curve(
    n_tokens: Option<usize>,
    n_episodes: usize,
    seq_len: usize,
    rng: &mut impl Rng,
) -> BaselineCurve {
    let mut oracle_hits = vec![0usize; seq_len];
    let mut cache_hits = vec![0usize; seq_len];
    for _ in 0..n_episodes {
        let scene = match n_tokens {
            Some(n) => crate::worldgen::generate_scene_with_count(rng, n, None),
            None => crate::worldgen::generate_scene(rng, None),
        }
        .expect("unconstrained scene generation cannot fail");
        let episode =
            crate::worldgen::sample_episode(&scene, seq_len, rng, None).expect("episode");
        let mut fallback = fallback_stream(scene.seed);
        let run = run_baselines(&episode, &mut fallback);
        for t in 0..seq_len {
            oracle_hits[t] += run.oracle_correct[t] as usize;
            cache_hits[t] += run.cache_correct[t] as usize;
        }
    }
    BaselineCurve {
        oracle_acc: oracle_hits
            .iter()
            .map(|&h| h as f64 / n_episodes as f64)
            .collect(),
        cache_acc: cache_hits
            .iter()
            .map(|&h| h as f64 / n_episodes as f64)
            .collect(),
        episodes: n_episodes,
    }
}

/// Dedicated fallback stream per episode, decorrelated from scene seeds.
pub fn fallback_stream(seed: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0x6f72_6163_6c65_5f66)
}

/// Verifies that no two tokens of a scene collide under the match
/// tolerance (guaranteed by the 0.25 spacing; asserted per scene).
pub fn assert_position_keys_sound(scene: &Scene) {
    for i in 0..scene.len() {
        for j in (i + 1)..scene.len() {
            let d = scene.tokens[i].position.dist(scene.tokens[j].position);
            assert!(
                d > MATCH_TOLERANCE,
                "tokens {i} and {j} collide under match tolerance"
            );
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::worldgen::{
        episode_from_path, generate_scene, generate_scene_with_count, sample_episode, Scene,
        Token, Vec2,
    };
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn revisit_of_stored_position_always_hits() {
        let mut r = rng(2);
        let scene = generate_scene_with_count(&mut r, 4, None).unwrap();
        // bounce 0 -> 1 -> 0 -> 1: from the 3rd step on, everything is stored
        let ep = episode_from_path(&scene, &[0, 1, 0, 1, 0]).unwrap();
        let mut fb = fallback_stream(1);
        let run = run_baselines(&ep, &mut fb);
        assert!(!run.oracle[0].hit, "first step cannot hit");
        for t in 1..ep.len() {
            assert!(run.oracle[t].hit, "revisit at step {t} missed");
            assert!(run.oracle_correct[t]);
        }
    }

    #[test]
    fn oracle_is_exact_after_coverage() {
        // Brute-force over many episodes: wherever the target position was
        // visited before, the oracle must be correct.
        let mut r = rng(3);
        for _ in 0..500 {
            let scene = generate_scene_with_count(&mut r, 6, None).unwrap();
            let ep = sample_episode(&scene, 60, &mut r, None).unwrap();
            let mut fb = fallback_stream(scene.seed);
            let run = run_baselines(&ep, &mut fb);
            let mut visited = vec![false; scene.len()];
            visited[ep.steps[0].token_index] = true;
            for (t, pair) in ep.steps.windows(2).enumerate() {
                let target_idx = pair[1].token_index;
                if visited[target_idx] {
                    assert!(run.oracle[t].hit, "stored position missed at {t}");
                    assert!(run.oracle_correct[t], "stored label wrong at {t}");
                } else {
                    assert!(!run.oracle[t].hit, "unvisited position hit at {t}");
                }
                visited[target_idx] = true;
            }
        }
    }

    #[test]
    fn first_step_accuracy_is_chance() {
        let mut r = rng(5);
        let curve = baseline_curve(Some(6), 10_000, 5, &mut r);
        let p = 1.0 / ALPHABET as f64;
        let sigma = (p * (1.0 - p) / 10_000f64).sqrt();
        assert!(
            (curve.oracle_acc[0] - p).abs() < 3.0 * sigma,
            "t0 accuracy {} not within 3 sigma of {p}",
            curve.oracle_acc[0]
        );
    }

    #[test]
    fn six_token_curve_reaches_ceiling() {
        let mut r = rng(7);
        let curve = baseline_curve(Some(6), 2_000, 60, &mut r);
        let late: f64 = curve.oracle_acc[40..].iter().sum::<f64>() / 20.0;
        assert!(late > 0.995, "late oracle accuracy {late}");
    }

    #[test]
    fn four_token_scenes_converge_faster_than_six() {
        let mut r = rng(9);
        let four = baseline_curve(Some(4), 10_000, 12, &mut r);
        let six = baseline_curve(Some(6), 10_000, 12, &mut r);
        for t in 2..=10 {
            assert!(
                four.oracle_acc[t] > six.oracle_acc[t],
                "4-token not dominant at t={t}: {} vs {}",
                four.oracle_acc[t],
                six.oracle_acc[t]
            );
        }
    }

    #[test]
    fn cache_hits_repeated_transition() {
        let mut r = rng(11);
        let scene = generate_scene_with_count(&mut r, 4, None).unwrap();
        let ep = episode_from_path(&scene, &[0, 1, 0, 1]).unwrap();
        let mut fb = fallback_stream(2);
        let run = run_baselines(&ep, &mut fb);
        // step 2 repeats the (label0, saccade 0->1) transition completed at step 1
        assert!(run.cache[2].hit);
        assert!(run.cache_correct[2]);
    }

    #[test]
    fn duplicate_labels_fool_cache_but_not_oracle() {
        // Two tokens share a label and have translated copies of the same
        // outgoing displacement; the cache's (label, saccade) key is
        // ambiguous, the dictionary's position key is not.
        let scene = Scene {
            tokens: vec![
                Token { label: 0, position: Vec2::new(0.0, 0.0) }, // 'a'
                Token { label: 0, position: Vec2::new(2.0, 0.0) }, // 'a' again
                Token { label: 1, position: Vec2::new(0.0, 1.0) }, // 'b' = 0 + d
                Token { label: 2, position: Vec2::new(2.0, 1.0) }, // 'c' = 1 + d
            ],
            seed: 0,
        };
        // visit all four, then traverse 0 -> 2 (stores a+d -> b), then
        // query 1 -> 3 which shares (a, d) but lands on c
        let ep = episode_from_path(&scene, &[0, 2, 0, 1, 3, 1, 2, 0, 2, 0, 1, 3]).unwrap();
        let mut fb = fallback_stream(3);
        let run = run_baselines(&ep, &mut fb);
        let last = ep.len() - 1;
        assert_eq!(ep.steps[last].token_index, 1);
        assert_eq!(ep.steps[last].target_label, 2);
        assert!(run.oracle_correct[last], "oracle must resolve by position");
        assert!(run.cache[last].hit, "cache key (a, d) was stored");
        assert!(!run.cache_correct[last], "cache must confuse the duplicate");
    }

    #[test]
    fn hit_miss_pattern_is_deterministic() {
        let mut r = rng(13);
        let scene = generate_scene(&mut r, None).unwrap();
        let ep = sample_episode(&scene, 40, &mut r, None).unwrap();
        let mut fb1 = fallback_stream(9);
        let mut fb2 = fallback_stream(10); // different fallback stream
        let a = run_baselines(&ep, &mut fb1);
        let b = run_baselines(&ep, &mut fb2);
        for t in 0..ep.len() {
            assert_eq!(a.oracle[t].hit, b.oracle[t].hit);
            assert_eq!(a.cache[t].hit, b.cache[t].hit);
            if a.oracle[t].hit {
                assert_eq!(a.oracle[t].prediction, b.oracle[t].prediction);
            }
        }
    }

    #[test]
    fn position_keys_never_collide_in_generated_scenes() {
        let mut r = rng(15);
        for _ in 0..1000 {
            let scene = generate_scene(&mut r, None).unwrap();
            assert_position_keys_sound(&scene);
        }
    }

    #[test]
    fn integrated_positions_match_despite_float_drift() {
        // Long episodes accumulate rounding in p <- p + saccade; the
        // tolerance window must still resolve every revisit.
        let mut r = rng(17);
        for _ in 0..20 {
            let scene = generate_scene_with_count(&mut r, 6, None).unwrap();
            let ep = sample_episode(&scene, 500, &mut r, None).unwrap();
            let mut fb = fallback_stream(scene.seed);
            let run = run_baselines(&ep, &mut fb);
            // after the first few steps everything is covered
            for t in 30..ep.len() {
                assert!(run.oracle[t].hit, "drift broke lookup at step {t}");
            }
        }
    }
}
