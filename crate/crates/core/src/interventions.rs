//! Causal experiments on the frozen model: zero-shot withheld-saccade
//! queries, token replacement, token addition at early/late switch points,
//! and out-of-distribution binding after constrained training. All four
//! run the model, the dictionary agent, and the transition cache in
//! lockstep over the same live episodes.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::model::{argmax, ModelError, ModelParams, Runner};
use crate::oracle::{fallback_stream, PositionDict, TransitionCache};
use crate::par::par_map;
use crate::stats::Proportion;
use crate::worldgen::{
    draw_successor, encode_step, generate_scene, generate_scene_with_count, Scene, Step, Token,
    TrainConstraint, Vec2, WorldGenError, ALPHABET, MIN_TOKEN_DIST, PLACEMENT_BUDGET, SCENE_BOUND,
};

#[derive(Debug, Error)]
pub enum InterventionError {
    #[error("switch timestep {switch} must precede horizon {horizon}")]
    BadPlan { switch: usize, horizon: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    WorldGen(#[from] WorldGenError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InterventionKind {
    WithheldSaccade,
    Replace,
    Add,
    OodBinding,
}

/// Protocol parameters shared by the scene-editing experiments. Per-scene
/// edit details (token, labels) are drawn at run time and reported back.
#[derive(Debug, Clone, Copy)]
pub struct InterventionPlan {
    pub kind: InterventionKind,
    /// 1-based timestep after which the scene edit applies.
    pub switch_timestep: usize,
    /// Total sequence length in steps.
    pub horizon: usize,
}

impl InterventionPlan {
    pub fn validate(&self) -> Result<(), InterventionError> {
        if self.switch_timestep >= self.horizon {
            return Err(InterventionError::BadPlan {
                switch: self.switch_timestep,
                horizon: self.horizon,
            });
        }
        Ok(())
    }
}

/// The edit applied to one scene.
#[derive(Debug, Clone, Copy)]
pub struct SceneEdit {
    pub token_index: usize,
    pub old_label: Option<u8>,
    pub new_label: u8,
}

/// One hop of a live episode, scored against all three predictors.
#[derive(Debug, Clone, Copy)]
pub struct StepOutcome {
    pub from: usize,
    pub to: usize,
    pub target_label: u8,
    pub model_pred: u8,
    pub model_correct: bool,
    pub oracle_correct: bool,
    pub oracle_hit: bool,
    pub cache_correct: bool,
    pub cache_hit: bool,
}

/// Walks a scene step by step, feeding the model, dictionary, and cache
/// identical inputs. The scene may be edited between steps; every saccade
/// is recomputed from current token positions, so edits stay consistent.
pub struct LiveEpisode<'a> {
    pub scene: Scene,
    pub current: usize,
    runner: Runner<'a, f32>,
    dict: PositionDict,
    cache: TransitionCache,
    fallback: ChaCha8Rng,
}

impl<'a> LiveEpisode<'a> {
    pub fn new(params: &'a ModelParams<f32>, scene: Scene) -> Result<Self, InterventionError> {
        let current = scene.origin_index().map_err(ModelError::from)?;
        Ok(LiveEpisode {
            fallback: fallback_stream(scene.seed),
            scene,
            current,
            runner: Runner::new(params),
            dict: PositionDict::new(),
            cache: TransitionCache::new(),
        })
    }

    /// Moves to `next`, returning every predictor's verdict on the hop.
    pub fn advance(&mut self, next: usize) -> Result<StepOutcome, InterventionError> {
        assert_ne!(next, self.current, "self-saccades are forbidden");
        let here = self.scene.tokens[self.current];
        let there = self.scene.tokens[next];
        let step = Step {
            token_index: self.current,
            label: here.label,
            position: here.position,
            saccade_out: there.position.sub(here.position),
            target_label: there.label,
        };
        let model_out = self.runner.step(&encode_step(&step)).map_err(InterventionError::Model)?;
        let model_pred = argmax(&model_out.logits);
        let o = self.dict.step(step.label, step.saccade_out, &mut self.fallback);
        let c = self.cache.step(step.label, step.saccade_out, &mut self.fallback);
        let outcome = StepOutcome {
            from: self.current,
            to: next,
            target_label: step.target_label,
            model_pred,
            model_correct: model_pred == step.target_label,
            oracle_correct: o.prediction == step.target_label,
            oracle_hit: o.hit,
            cache_correct: c.prediction == step.target_label,
            cache_hit: c.hit,
        };
        self.current = next;
        Ok(outcome)
    }
}

fn scene_stream(seed: u64, index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

// ---------------------------------------------------------------------------
// Withheld saccade

/// Results of the zero-shot withheld-saccade protocol.
#[derive(Debug, Clone)]
pub struct WithheldReport {
    pub scenes: usize,
    /// Accuracy on the forced query at timestep `warmup + 1`.
    pub model: Proportion,
    pub oracle: Proportion,
    pub cache: Proportion,
    /// Scenes where the query target had been visited during warmup.
    pub target_previsited: usize,
}

/// Withholds one ordered token pair for `warmup` steps, then forces that
/// exact saccade and scores the prediction. The walk is steered so the
/// warmup ends at the withheld pair's source token.
pub fn run_withheld_saccade(
    params: &ModelParams<f32>,
    n_scenes: usize,
    warmup: usize,
    seed: u64,
    threads: usize,
) -> Result<WithheldReport, InterventionError> {
    assert!(warmup >= 4, "warmup too short to steer the walk");
    let outcomes: Vec<Result<(bool, bool, bool, bool), InterventionError>> =
        par_map(threads, n_scenes, |i| {
            let mut rng = scene_stream(seed, i);
            let scene = generate_scene(&mut rng, None)?;
            let n = scene.len();
            let src = rng.gen_range(0..n);
            let dst = loop {
                let d = rng.gen_range(0..n);
                if d != src {
                    break d;
                }
            };
            let withheld: HashSet<(usize, usize)> = [(src, dst)].into_iter().collect();

            let mut live = LiveEpisode::new(params, scene)?;
            let mut visited = vec![false; n];
            visited[live.current] = true;
            // warmup steps 1..=warmup: the last two hops steer onto src
            for t in 1..=warmup {
                let next = if t == warmup {
                    src
                } else if t == warmup - 1 {
                    draw_successor(&live.scene, live.current, &mut rng, Some(&withheld), Some(src))?
                } else {
                    draw_successor(&live.scene, live.current, &mut rng, Some(&withheld), None)?
                };
                live.advance(next)?;
                visited[next] = true;
            }
            debug_assert_eq!(live.current, src);
            let previsited = visited[dst];
            let out = live.advance(dst)?;
            Ok((out.model_correct, out.oracle_correct, out.cache_correct, previsited))
        });

    let mut model = 0usize;
    let mut oracle = 0usize;
    let mut cache = 0usize;
    let mut previsited = 0usize;
    for o in outcomes {
        let (m, or, c, pv) = o?;
        model += m as usize;
        oracle += or as usize;
        cache += c as usize;
        previsited += pv as usize;
    }
    Ok(WithheldReport {
        scenes: n_scenes,
        model: Proportion::new(model, n_scenes),
        oracle: Proportion::new(oracle, n_scenes),
        cache: Proportion::new(cache, n_scenes),
        target_previsited: previsited,
    })
}

// ---------------------------------------------------------------------------
// Token replacement

/// Per-timestep outcome counts for the replacement experiment. At the
/// changed position, correctness plus the two error kinds always sum to
/// the trial count.
#[derive(Debug, Clone, Copy)]
pub struct ReplacementRow {
    pub timestep: usize,
    pub changed: Proportion,
    pub unchanged: Proportion,
    pub err_original: Proportion,
    pub err_other: Proportion,
    pub oracle_changed: Proportion,
}

#[derive(Debug, Clone)]
pub struct ReplacementReport {
    pub plan: InterventionPlan,
    pub scenes: usize,
    pub rows: Vec<ReplacementRow>,
    /// Scenes where the dictionary agent was exact from the first
    /// post-switch visit of the changed position onward.
    pub oracle_exact_after_first_visit: usize,
}

/// Replaces one token's label (never its position) after
/// `plan.switch_timestep` steps and walks on over the edited scene.
pub fn run_replacement(
    params: &ModelParams<f32>,
    n_scenes: usize,
    plan: InterventionPlan,
    seed: u64,
    threads: usize,
) -> Result<ReplacementReport, InterventionError> {
    plan.validate()?;
    let switch = plan.switch_timestep;
    let horizon = plan.horizon;

    struct SceneTally {
        // per timestep: (changed n/ok, unchanged n/ok, err_orig, err_other, oracle n/ok)
        rows: Vec<[usize; 10]>,
        oracle_exact: bool,
    }

    let tallies: Vec<Result<SceneTally, InterventionError>> = par_map(threads, n_scenes, |i| {
        let mut rng = scene_stream(seed, i);
        let scene = generate_scene_with_count(&mut rng, 6, None)?;
        let n = scene.len();
        let mut live = LiveEpisode::new(params, scene)?;
        let changed_idx = rng.gen_range(0..n);
        let old_label = live.scene.tokens[changed_idx].label;
        let new_label = loop {
            let l = rng.gen_range(0..ALPHABET as u8);
            if l != old_label {
                break l;
            }
        };

        let mut rows = vec![[0usize; 10]; horizon];
        let mut post_visit_seen = false;
        let mut oracle_exact = true;
        for t in 1..=horizon {
            if t == switch + 1 {
                // the edit lands between step `switch` and this one
                live.scene.tokens[changed_idx].label = new_label;
            }
            let next = draw_successor(&live.scene, live.current, &mut rng, None, None)?;
            let out = live.advance(next)?;
            let row = &mut rows[t - 1];
            if out.to == changed_idx {
                row[0] += 1;
                row[1] += out.model_correct as usize;
                let err_orig = !out.model_correct && out.model_pred == old_label && t > switch;
                row[2] += err_orig as usize;
                row[3] += (!out.model_correct && !err_orig) as usize;
                row[8] += 1;
                row[9] += out.oracle_correct as usize;
                // dictionary must be exact once the new label was stored
                if post_visit_seen && !out.oracle_correct {
                    oracle_exact = false;
                }
                if t > switch {
                    post_visit_seen = true;
                }
            } else {
                row[4] += 1;
                row[5] += out.model_correct as usize;
            }
            let _ = row[6]; // reserved
            let _ = row[7];
        }
        Ok(SceneTally { rows, oracle_exact })
    });

    let mut agg = vec![[0usize; 10]; horizon];
    let mut oracle_exact_count = 0usize;
    for t in tallies {
        let t = t?;
        for (a, b) in agg.iter_mut().zip(t.rows.iter()) {
            for (x, y) in a.iter_mut().zip(b.iter()) {
                *x += y;
            }
        }
        oracle_exact_count += t.oracle_exact as usize;
    }
    let rows = agg
        .iter()
        .enumerate()
        .map(|(t, r)| ReplacementRow {
            timestep: t + 1,
            changed: Proportion::new(r[1], r[0]),
            unchanged: Proportion::new(r[5], r[4]),
            err_original: Proportion::new(r[2], r[0]),
            err_other: Proportion::new(r[3], r[0]),
            oracle_changed: Proportion::new(r[9], r[8]),
        })
        .collect();
    Ok(ReplacementReport {
        plan,
        scenes: n_scenes,
        rows,
        oracle_exact_after_first_visit: oracle_exact_count,
    })
}

/// Sums changed-position outcome counts over a 1-based inclusive window.
pub fn replacement_window_counts(
    report: &ReplacementReport,
    from_t: usize,
    to_t: usize,
) -> (Proportion, Proportion, Proportion) {
    let mut acc = (0, 0);
    let mut orig = (0, 0);
    let mut other = (0, 0);
    for row in &report.rows {
        if row.timestep >= from_t && row.timestep <= to_t {
            acc = (acc.0 + row.changed.successes, acc.1 + row.changed.trials);
            orig = (orig.0 + row.err_original.successes, orig.1 + row.err_original.trials);
            other = (other.0 + row.err_other.successes, other.1 + row.err_other.trials);
        }
    }
    (
        Proportion::new(acc.0, acc.1),
        Proportion::new(orig.0, orig.1),
        Proportion::new(other.0, other.1),
    )
}

/// Sums unchanged-position outcome counts over a 1-based inclusive window.
pub fn unchanged_window_counts(report: &ReplacementReport, from_t: usize, to_t: usize) -> Proportion {
    let mut s = 0;
    let mut n = 0;
    for row in &report.rows {
        if row.timestep >= from_t && row.timestep <= to_t {
            s += row.unchanged.successes;
            n += row.unchanged.trials;
        }
    }
    Proportion::new(s, n)
}

// ---------------------------------------------------------------------------
// Token addition

#[derive(Debug, Clone, Copy)]
pub struct AdditionRow {
    pub timestep: usize,
    pub new_pos: Proportion,
    pub old_pos: Proportion,
}

#[derive(Debug, Clone)]
pub struct AdditionReport {
    pub plan: InterventionPlan,
    pub scenes: usize,
    pub rows: Vec<AdditionRow>,
}

/// Starts from 5-token scenes and inserts a sixth token after
/// `plan.switch_timestep` steps; the walk then cycles uniformly over all
/// six tokens. Scenes where placement fails are regenerated.
pub fn run_addition(
    params: &ModelParams<f32>,
    n_scenes: usize,
    plan: InterventionPlan,
    seed: u64,
    threads: usize,
) -> Result<AdditionReport, InterventionError> {
    plan.validate()?;
    let switch = plan.switch_timestep;
    let horizon = plan.horizon;

    let tallies: Vec<Result<Vec<[usize; 4]>, InterventionError>> =
        par_map(threads, n_scenes, |i| {
            let mut rng = scene_stream(seed, i);
            // placement failure regenerates the scene; with 5 prior tokens
            // in the full bounds this is effectively a retry loop of one
            let (scene, new_token) = loop {
                let scene = generate_scene_with_count(&mut rng, 5, None)?;
                match place_additional_token(&scene, &mut rng) {
                    Some(tok) => break (scene, tok),
                    None => continue,
                }
            };
            let mut live = LiveEpisode::new(params, scene)?;
            let mut new_index = None;
            let mut rows = vec![[0usize; 4]; horizon];
            for t in 1..=horizon {
                if t == switch + 1 {
                    live.scene.tokens.push(new_token);
                    new_index = Some(live.scene.len() - 1);
                }
                let next = draw_successor(&live.scene, live.current, &mut rng, None, None)?;
                let out = live.advance(next)?;
                let row = &mut rows[t - 1];
                if Some(out.to) == new_index {
                    row[0] += 1;
                    row[1] += out.model_correct as usize;
                } else {
                    row[2] += 1;
                    row[3] += out.model_correct as usize;
                }
            }
            Ok(rows)
        });

    let mut agg = vec![[0usize; 4]; horizon];
    for t in tallies {
        for (a, b) in agg.iter_mut().zip(t?.iter()) {
            for (x, y) in a.iter_mut().zip(b.iter()) {
                *x += y;
            }
        }
    }
    let rows = agg
        .iter()
        .enumerate()
        .map(|(t, r)| AdditionRow {
            timestep: t + 1,
            new_pos: Proportion::new(r[1], r[0]),
            old_pos: Proportion::new(r[3], r[2]),
        })
        .collect();
    Ok(AdditionReport {
        plan,
        scenes: n_scenes,
        rows,
    })
}

fn place_additional_token(scene: &Scene, rng: &mut impl Rng) -> Option<Token> {
    for _ in 0..PLACEMENT_BUDGET {
        let p = Vec2::new(
            rng.gen_range(-SCENE_BOUND..=SCENE_BOUND),
            rng.gen_range(-SCENE_BOUND..=SCENE_BOUND),
        );
        if scene
            .tokens
            .iter()
            .all(|t| t.position.dist(p) >= MIN_TOKEN_DIST)
        {
            return Some(Token {
                label: rng.gen_range(0..ALPHABET as u8),
                position: p,
            });
        }
    }
    None
}

/// First timestep (counted from the switch) where the trial-weighted
/// moving average of new-token accuracy reaches `frac` of its final
/// plateau (the last 30 rows). `None` when it never does.
pub fn rise_time(report: &AdditionReport, frac: f64) -> Option<usize> {
    let switch = report.plan.switch_timestep;
    let post: Vec<&AdditionRow> = report
        .rows
        .iter()
        .filter(|r| r.timestep > switch && r.new_pos.trials > 0)
        .collect();
    if post.len() < 40 {
        return None;
    }
    let tail = &post[post.len() - 30..];
    let plateau_hits: usize = tail.iter().map(|r| r.new_pos.successes).sum();
    let plateau_n: usize = tail.iter().map(|r| r.new_pos.trials).sum();
    let plateau = plateau_hits as f64 / plateau_n.max(1) as f64;
    let target = frac * plateau;
    // centered 5-row window, trial-weighted
    for (k, row) in post.iter().enumerate() {
        let lo = k.saturating_sub(2);
        let hi = (k + 2).min(post.len() - 1);
        let hits: usize = post[lo..=hi].iter().map(|r| r.new_pos.successes).sum();
        let n: usize = post[lo..=hi].iter().map(|r| r.new_pos.trials).sum();
        if n > 0 && hits as f64 / n as f64 >= target {
            return Some(row.timestep - switch);
        }
    }
    None
}

// ---------------------------------------------------------------------------
// Out-of-distribution binding

#[derive(Debug, Clone, Copy)]
pub struct OodRow {
    pub timestep: usize,
    /// Accuracy on steps targeting the restricted label's token, which
    /// sits outside its training quadrant.
    pub k_token: Proportion,
    /// Accuracy on steps targeting the non-restricted token at the
    /// control position.
    pub control_token: Proportion,
}

#[derive(Debug, Clone)]
pub struct OodReport {
    pub scenes: usize,
    pub horizon: usize,
    pub rows: Vec<OodRow>,
}

/// Builds a 6-token OOD test scene: the restricted label sits in one of
/// the three quadrants away from the control position (with a margin to
/// the quadrant boundaries), and a non-restricted token occupies the
/// control position exactly.
pub fn generate_ood_scene(
    rng: &mut impl Rng,
    constraint: &TrainConstraint,
) -> Result<(Scene, usize, usize), WorldGenError> {
    let seed: u64 = rng.gen();
    let mut srng = ChaCha8Rng::seed_from_u64(seed);
    let k = constraint.restricted_label;
    let non_k = |r: &mut ChaCha8Rng| loop {
        let l = r.gen_range(0..ALPHABET as u8);
        if l != k {
            break l;
        }
    };
    let mut tokens = vec![
        Token {
            label: non_k(&mut srng),
            position: Vec2::ZERO,
        },
        Token {
            label: non_k(&mut srng),
            position: constraint.control_position,
        },
    ];
    // the restricted token, away from the control quadrant and clear of
    // the axes so its quadrant is unambiguous
    let mut attempts = 0usize;
    let k_pos = loop {
        attempts += 1;
        if attempts > PLACEMENT_BUDGET {
            return Err(WorldGenError::PlacementBudgetExhausted {
                budget: PLACEMENT_BUDGET,
                placed: tokens.len(),
            });
        }
        let p = Vec2::new(
            srng.gen_range(-SCENE_BOUND..=SCENE_BOUND),
            srng.gen_range(-SCENE_BOUND..=SCENE_BOUND),
        );
        let in_control_quadrant = p.x > 0.0 && p.y > 0.0;
        let clear_of_axes = p.x.abs() >= MIN_TOKEN_DIST && p.y.abs() >= MIN_TOKEN_DIST;
        let spaced = tokens.iter().all(|t| t.position.dist(p) >= MIN_TOKEN_DIST);
        if !in_control_quadrant && clear_of_axes && spaced {
            break p;
        }
    };
    tokens.push(Token { label: k, position: k_pos });
    let k_index = 2;
    // three more ordinary tokens
    while tokens.len() < 6 {
        attempts += 1;
        if attempts > PLACEMENT_BUDGET {
            return Err(WorldGenError::PlacementBudgetExhausted {
                budget: PLACEMENT_BUDGET,
                placed: tokens.len(),
            });
        }
        let p = Vec2::new(
            srng.gen_range(-SCENE_BOUND..=SCENE_BOUND),
            srng.gen_range(-SCENE_BOUND..=SCENE_BOUND),
        );
        if tokens.iter().all(|t| t.position.dist(p) >= MIN_TOKEN_DIST) {
            tokens.push(Token {
                label: non_k(&mut srng),
                position: p,
            });
        }
    }
    Ok((Scene { tokens, seed }, k_index, 1))
}

/// Evaluates a constraint-trained model on OOD scenes: the restricted
/// label away from its training spot, another label at the control spot.
pub fn run_ood_binding(
    params: &ModelParams<f32>,
    constraint: &TrainConstraint,
    n_scenes: usize,
    horizon: usize,
    seed: u64,
    threads: usize,
) -> Result<OodReport, InterventionError> {
    let constraint = *constraint;
    let tallies: Vec<Result<Vec<[usize; 4]>, InterventionError>> =
        par_map(threads, n_scenes, |i| {
            let mut rng = scene_stream(seed, i);
            let (scene, k_index, control_index) = generate_ood_scene(&mut rng, &constraint)?;
            let mut live = LiveEpisode::new(params, scene)?;
            let mut rows = vec![[0usize; 4]; horizon];
            for t in 1..=horizon {
                let next = draw_successor(&live.scene, live.current, &mut rng, None, None)?;
                let out = live.advance(next)?;
                let row = &mut rows[t - 1];
                if out.to == k_index {
                    row[0] += 1;
                    row[1] += out.model_correct as usize;
                } else if out.to == control_index {
                    row[2] += 1;
                    row[3] += out.model_correct as usize;
                }
            }
            Ok(rows)
        });

    let mut agg = vec![[0usize; 4]; horizon];
    for t in tallies {
        for (a, b) in agg.iter_mut().zip(t?.iter()) {
            for (x, y) in a.iter_mut().zip(b.iter()) {
                *x += y;
            }
        }
    }
    let rows = agg
        .iter()
        .enumerate()
        .map(|(t, r)| OodRow {
            timestep: t + 1,
            k_token: Proportion::new(r[1], r[0]),
            control_token: Proportion::new(r[3], r[2]),
        })
        .collect();
    Ok(OodReport {
        scenes: n_scenes,
        horizon,
        rows,
    })
}

/// Trial-weighted accuracy of `select`ed counts over a timestep window.
pub fn window_rate(rows: &[(usize, Proportion)], from_t: usize, to_t: usize) -> Proportion {
    let mut s = 0;
    let mut n = 0;
    for (t, p) in rows {
        if *t >= from_t && *t <= to_t {
            s += p.successes;
            n += p.trials;
        }
    }
    Proportion::new(s, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    fn tiny_params() -> ModelParams<f32> {
        ModelParams::<f32>::init(ModelConfig::tiny(), 8)
    }

    #[test]
    fn plans_must_switch_before_horizon() {
        let bad = InterventionPlan {
            kind: InterventionKind::Replace,
            switch_timestep: 50,
            horizon: 50,
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn withheld_pair_is_unseen_and_oracle_wins() {
        // With an untrained model the interesting contrasts are the
        // baselines: the dictionary answers the forced query exactly, the
        // cache falls to chance.
        let params = tiny_params();
        let report = run_withheld_saccade(&params, 200, 40, 3, 1).unwrap();
        assert_eq!(report.target_previsited, 200, "40 warmup steps cover 4-6 tokens");
        assert_eq!(report.oracle.rate(), 1.0);
        let p = 1.0 / ALPHABET as f64;
        let sigma = (p * (1.0 - p) / 200f64).sqrt();
        assert!(
            (report.cache.rate() - p).abs() <= 3.0 * sigma,
            "cache rate {} not within 3 sigma of chance",
            report.cache.rate()
        );
    }

    #[test]
    fn replacement_decomposition_sums_to_one() {
        let params = tiny_params();
        let plan = InterventionPlan {
            kind: InterventionKind::Replace,
            switch_timestep: 10,
            horizon: 40,
        };
        let report = run_replacement(&params, 60, plan, 5, 1).unwrap();
        for row in &report.rows {
            assert_eq!(
                row.changed.successes + row.err_original.successes + row.err_other.successes,
                row.changed.trials,
                "decomposition broken at t={}",
                row.timestep
            );
        }
    }

    #[test]
    fn replacement_oracle_is_exact_after_first_post_switch_visit() {
        let params = tiny_params();
        let plan = InterventionPlan {
            kind: InterventionKind::Replace,
            switch_timestep: 8,
            horizon: 60,
        };
        let report = run_replacement(&params, 100, plan, 7, 1).unwrap();
        assert_eq!(report.oracle_exact_after_first_visit, 100);
        // late post-switch, the oracle must be at ceiling at the changed spot
        let late: Vec<(usize, Proportion)> = report
            .rows
            .iter()
            .map(|r| (r.timestep, r.oracle_changed))
            .collect();
        let w = window_rate(&late, 30, 60);
        assert!(w.rate() > 0.99, "late oracle accuracy {}", w.rate());
    }

    #[test]
    fn addition_rows_track_only_post_switch_new_token() {
        let params = tiny_params();
        let plan = InterventionPlan {
            kind: InterventionKind::Add,
            switch_timestep: 12,
            horizon: 50,
        };
        let report = run_addition(&params, 50, plan, 9, 1).unwrap();
        for row in &report.rows {
            if row.timestep <= plan.switch_timestep {
                assert_eq!(row.new_pos.trials, 0, "new token seen before switch");
            }
        }
        let post_trials: usize = report
            .rows
            .iter()
            .filter(|r| r.timestep > plan.switch_timestep + 1)
            .map(|r| r.new_pos.trials)
            .sum();
        assert!(post_trials > 0);
    }

    #[test]
    fn ood_scene_geometry_respects_protocol() {
        let constraint = TrainConstraint::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..500 {
            let (scene, k_index, control_index) =
                generate_ood_scene(&mut rng, &constraint).unwrap();
            assert_eq!(scene.len(), 6);
            assert!(scene.min_pairwise_distance() >= MIN_TOKEN_DIST);
            assert_eq!(scene.origin_index().unwrap(), 0);
            let k_tok = scene.tokens[k_index];
            assert_eq!(k_tok.label, constraint.restricted_label);
            assert!(!(k_tok.position.x > 0.0 && k_tok.position.y > 0.0));
            assert!(k_tok.position.x.abs() >= MIN_TOKEN_DIST);
            assert!(k_tok.position.y.abs() >= MIN_TOKEN_DIST);
            let c_tok = scene.tokens[control_index];
            assert_eq!(c_tok.position, constraint.control_position);
            assert_ne!(c_tok.label, constraint.restricted_label);
            // exactly one restricted token
            let k_count = scene
                .tokens
                .iter()
                .filter(|t| t.label == constraint.restricted_label)
                .count();
            assert_eq!(k_count, 1);
        }
    }

    #[test]
    fn live_episode_edits_preserve_path_integration() {
        // Re-derived saccades over an edited scene still telescope to the
        // current position.
        let params = tiny_params();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let scene = generate_scene_with_count(&mut rng, 5, None).unwrap();
        let mut live = LiveEpisode::new(&params, scene).unwrap();
        let mut integrated = Vec2::ZERO;
        for t in 0..50 {
            if t == 20 {
                live.scene.tokens[1].label = (live.scene.tokens[1].label + 1) % 26;
            }
            if t == 30 {
                let tok = place_additional_token(&live.scene, &mut rng).unwrap();
                live.scene.tokens.push(tok);
            }
            let from = live.current;
            let next = draw_successor(&live.scene, from, &mut rng, None, None).unwrap();
            let expected = live.scene.tokens[next]
                .position
                .sub(live.scene.tokens[from].position);
            live.advance(next).unwrap();
            integrated = integrated.add(expected);
            assert!(
                integrated.dist(live.scene.tokens[live.current].position) < 1e-9,
                "closure broken at t={t}"
            );
        }
    }
}
