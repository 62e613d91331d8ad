//! Linear-decoding suite over captured activations: label, position, and
//! bound label-position tuples, with product baselines and congruency
//! controls, on the fixed pentagon probe geometry.

mod svm;

pub use svm::{LinearDecoder, Standardizer, SvmConfig};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{forward_episode, LayerId, ModelError, ModelParams};
use crate::par::par_map;
use crate::stats::mean_ci95;
use crate::worldgen::{generate_pentagon_scene, sample_episode, Scene, Vec2, ALPHABET};

/// Decoding window in 1-based timesteps, inclusive.
pub const DEFAULT_WINDOW: (usize, usize) = (35, 100);
/// Position classes on the pentagon geometry (token indices 0..5).
pub const N_POSITIONS: usize = 6;

/// Timestep offsets a decoder can target. `T2` carries no information and
/// serves as the chance control.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Offset {
    T0,
    T1,
    T2,
}

impl Offset {
    pub fn name(&self) -> &'static str {
        match self {
            Offset::T0 => "t",
            Offset::T1 => "t1",
            Offset::T2 => "t2",
        }
    }
}

/// What a decoder predicts from an activation vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TargetSpec {
    Label(Offset),
    Position(Offset),
    /// Joint (label, position) class; congruent when both offsets match.
    Tuple(Offset, Offset),
}

impl TargetSpec {
    pub fn classes(&self) -> usize {
        match self {
            TargetSpec::Label(_) => ALPHABET,
            TargetSpec::Position(_) => N_POSITIONS,
            TargetSpec::Tuple(..) => ALPHABET * N_POSITIONS,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            TargetSpec::Label(_) => "label",
            TargetSpec::Position(_) => "position",
            TargetSpec::Tuple(..) => "tuple",
        }
    }

    pub fn offset_name(&self) -> String {
        match self {
            TargetSpec::Label(o) | TargetSpec::Position(o) => o.name().to_string(),
            TargetSpec::Tuple(l, p) => format!("{}:{}", l.name(), p.name()),
        }
    }

    pub fn congruent(&self) -> Option<bool> {
        match self {
            TargetSpec::Tuple(l, p) => Some(l == p),
            _ => None,
        }
    }

    /// Class index of a sample under this target, when defined.
    pub fn class_of(&self, s: &ProbeSample) -> Option<usize> {
        let label = |o: Offset| -> Option<usize> {
            match o {
                Offset::T0 => Some(s.label_t as usize),
                Offset::T1 => Some(s.label_t1 as usize),
                Offset::T2 => s.label_t2.map(|l| l as usize),
            }
        };
        let pos = |o: Offset| -> Option<usize> {
            match o {
                Offset::T0 => Some(s.pos_t as usize),
                Offset::T1 => Some(s.pos_t1 as usize),
                Offset::T2 => s.pos_t2.map(|p| p as usize),
            }
        };
        match self {
            TargetSpec::Label(o) => label(*o),
            TargetSpec::Position(o) => pos(*o),
            TargetSpec::Tuple(l, p) => Some(label(*l)? * N_POSITIONS + pos(*p)?),
        }
    }
}

/// Ground truth attached to one captured activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProbeSample {
    pub scene_id: usize,
    /// 1-based sequence timestep.
    pub timestep: usize,
    pub label_t: u8,
    pub pos_t: u8,
    pub label_t1: u8,
    pub pos_t1: u8,
    pub label_t2: Option<u8>,
    pub pos_t2: Option<u8>,
}

/// Activations plus targets for every (scene, window timestep) pair.
pub struct ProbeDataset {
    pub layers: Vec<LayerId>,
    pub dim: usize,
    pub window: (usize, usize),
    pub n_scenes: usize,
    pub samples: Vec<ProbeSample>,
    /// Row-major `samples.len() x dim` matrix per layer.
    activations: Vec<Vec<f32>>,
}

impl ProbeDataset {
    pub fn activation(&self, layer_index: usize, sample_index: usize) -> &[f32] {
        &self.activations[layer_index][sample_index * self.dim..(sample_index + 1) * self.dim]
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

fn token_index_near(scene: &Scene, p: Vec2) -> Option<usize> {
    scene.tokens.iter().position(|t| t.position.dist(p) <= 1e-6)
}

/// Runs `n_scenes` pentagon episodes through the frozen model, capturing
/// all five layers inside the window and recording targets at offsets t,
/// t+1, and (where it exists) t+2.
pub fn collect_probe_data(
    params: &ModelParams<f32>,
    n_scenes: usize,
    seq_len: usize,
    window: (usize, usize),
    seed: u64,
    threads: usize,
) -> Result<ProbeDataset, ModelError> {
    assert!(window.0 >= 1 && window.1 >= window.0 && window.1 <= seq_len);
    let layers = LayerId::all(params.config.num_gru_layers);
    let dim = params.config.hidden_size;

    struct SceneBlock {
        samples: Vec<ProbeSample>,
        features: Vec<Vec<f32>>, // per layer, flattened
    }

    let blocks: Vec<Result<SceneBlock, ModelError>> = par_map(threads, n_scenes, |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(
            seed ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
        );
        let scene = generate_pentagon_scene(&mut rng);
        let episode = sample_episode(&scene, seq_len, &mut rng, None)?;
        let (_, trace) = forward_episode(params, &episode, true)?;
        let trace = trace.expect("capture requested");
        let steps = &episode.steps;
        let mut samples = Vec::new();
        let mut features: Vec<Vec<f32>> = vec![Vec::new(); layers.len()];
        for s in (window.0 - 1)..window.1.min(steps.len()) {
            let pos_t1 = if s + 1 < steps.len() {
                steps[s + 1].token_index
            } else {
                token_index_near(&scene, steps[s].position.add(steps[s].saccade_out))
                    .expect("saccade lands on a token")
            };
            let (label_t2, pos_t2) = if s + 1 < steps.len() {
                let l2 = steps[s + 1].target_label;
                let p2 = if s + 2 < steps.len() {
                    steps[s + 2].token_index
                } else {
                    token_index_near(
                        &scene,
                        steps[s + 1].position.add(steps[s + 1].saccade_out),
                    )
                    .expect("saccade lands on a token")
                };
                (Some(l2), Some(p2 as u8))
            } else {
                (None, None)
            };
            samples.push(ProbeSample {
                scene_id: i,
                timestep: s + 1,
                label_t: steps[s].label,
                pos_t: steps[s].token_index as u8,
                label_t1: steps[s].target_label,
                pos_t1: pos_t1 as u8,
                label_t2,
                pos_t2,
            });
            for (li, layer) in layers.iter().enumerate() {
                features[li].extend_from_slice(trace.layer(*layer, s));
            }
        }
        Ok(SceneBlock { samples, features })
    });

    let mut samples = Vec::new();
    let mut activations: Vec<Vec<f32>> = vec![Vec::new(); layers.len()];
    for block in blocks {
        let block = block?;
        samples.extend(block.samples);
        for (li, f) in block.features.into_iter().enumerate() {
            activations[li].extend(f);
        }
    }
    Ok(ProbeDataset {
        layers,
        dim,
        window,
        n_scenes,
        samples,
        activations,
    })
}

/// Decoder protocol: SVM settings plus the fold count for grouped
/// cross-validation (folds are assigned by `scene_id % folds`).
#[derive(Debug, Clone, Copy)]
pub struct DecoderSettings {
    pub svm: SvmConfig,
    pub folds: usize,
}

impl Default for DecoderSettings {
    fn default() -> Self {
        DecoderSettings {
            svm: SvmConfig::default(),
            folds: 5,
        }
    }
}

/// Cross-validated accuracy of one decoder at one timestep.
#[derive(Debug, Clone)]
pub struct TimestepAccuracy {
    pub timestep: usize,
    pub fold_accuracies: Vec<f64>,
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Window-level aggregate across per-timestep means.
#[derive(Debug, Clone, Copy)]
pub struct WindowSummary {
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

pub fn summarize_window(rows: &[TimestepAccuracy]) -> WindowSummary {
    let means: Vec<f64> = rows.iter().map(|r| r.mean).collect();
    let (mean, lo, hi) = mean_ci95(&means);
    WindowSummary {
        mean,
        ci_low: lo,
        ci_high: hi,
    }
}

/// Cross-validated decoding of several targets on one layer. One decoder
/// is trained per (spec, fold) on samples pooled across the whole window
/// (tuple classes need the pooled sample mass); accuracy is evaluated
/// separately at every timestep of the held-out scenes. Standardization
/// is fitted once per fold on all training rows and shared by every spec.
pub fn decode_window_multi(
    ds: &ProbeDataset,
    layer_index: usize,
    specs: &[TargetSpec],
    settings: &DecoderSettings,
    threads: usize,
) -> Vec<Vec<TimestepAccuracy>> {
    let t0 = ds.window.0;
    let n_t = ds.window.1 - t0 + 1;
    let dim = ds.dim;

    // hits/trials per (fold, spec, timestep)
    let fold_cells: Vec<Vec<Vec<(usize, usize)>>> = par_map(threads, settings.folds, |fold| {
        let mut train_rows: Vec<usize> = Vec::new();
        let mut test_rows: Vec<usize> = Vec::new();
        for (idx, s) in ds.samples.iter().enumerate() {
            if s.scene_id % settings.folds == fold {
                test_rows.push(idx);
            } else {
                train_rows.push(idx);
            }
        }
        let gather = |rows: &[usize]| -> Vec<f64> {
            let mut out = Vec::with_capacity(rows.len() * dim);
            for &idx in rows {
                out.extend(ds.activation(layer_index, idx).iter().map(|&x| x as f64));
            }
            out
        };
        let train_x = gather(&train_rows);
        let std = Standardizer::fit(&train_x, dim);
        let train_z = std.apply(&train_x, dim);
        let test_z = std.apply(&gather(&test_rows), dim);

        specs
            .iter()
            .map(|spec| {
                let mut cells = vec![(0usize, 0usize); n_t];
                let mut x = Vec::new();
                let mut y = Vec::new();
                for (r, &idx) in train_rows.iter().enumerate() {
                    if let Some(class) = spec.class_of(&ds.samples[idx]) {
                        x.extend_from_slice(&train_z[r * dim..(r + 1) * dim]);
                        y.push(class);
                    }
                }
                if y.is_empty() {
                    return cells;
                }
                let decoder = LinearDecoder::fit(&x, dim, &y, spec.classes(), settings.svm);
                for (r, &idx) in test_rows.iter().enumerate() {
                    let s = &ds.samples[idx];
                    if let Some(class) = spec.class_of(s) {
                        let z = &test_z[r * dim..(r + 1) * dim];
                        let cell = &mut cells[s.timestep - t0];
                        cell.1 += 1;
                        cell.0 += (decoder.predict(z) == class) as usize;
                    }
                }
                cells
            })
            .collect()
    });

    specs
        .iter()
        .enumerate()
        .map(|(si, _)| {
            (0..n_t)
                .filter_map(|ti| {
                    let fold_accuracies: Vec<f64> = fold_cells
                        .iter()
                        .map(|per_spec| per_spec[si][ti])
                        .filter(|&(_, n)| n > 0)
                        .map(|(h, n)| h as f64 / n as f64)
                        .collect();
                    if fold_accuracies.is_empty() {
                        return None;
                    }
                    let (mean, ci_low, ci_high) = mean_ci95(&fold_accuracies);
                    Some(TimestepAccuracy {
                        timestep: t0 + ti,
                        fold_accuracies,
                        mean,
                        ci_low,
                        ci_high,
                    })
                })
                .collect()
        })
        .collect()
}

/// Single-target convenience wrapper over [`decode_window_multi`].
pub fn decode_window(
    ds: &ProbeDataset,
    layer_index: usize,
    spec: TargetSpec,
    settings: &DecoderSettings,
    threads: usize,
) -> Vec<TimestepAccuracy> {
    decode_window_multi(ds, layer_index, &[spec], settings, threads)
        .pop()
        .expect("one spec in, one result out")
}

/// Per-timestep joint decoding compared against the product of its
/// component accuracies on identical folds.
#[derive(Debug, Clone)]
pub struct BindingRow {
    pub timestep: usize,
    pub accuracy: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Product of the two component accuracies at this timestep.
    pub baseline: f64,
}

/// One tuple decoding (congruent or incongruent) on one layer.
#[derive(Debug, Clone)]
pub struct TupleReport {
    pub layer: LayerId,
    pub spec: TargetSpec,
    pub rows: Vec<BindingRow>,
    pub accuracy: WindowSummary,
    /// Window mean of per-timestep baselines.
    pub baseline_mean: f64,
    /// Window summary of per-timestep (accuracy - baseline).
    pub excess: WindowSummary,
}

/// Component and tuple decodings for one layer.
#[derive(Debug, Clone)]
pub struct BindingLayerReport {
    pub layer: LayerId,
    pub label_t: Vec<TimestepAccuracy>,
    pub label_t1: Vec<TimestepAccuracy>,
    pub pos_t: Vec<TimestepAccuracy>,
    pub pos_t1: Vec<TimestepAccuracy>,
    pub tuples: Vec<TupleReport>,
}

/// The four tuple pairings of the congruency analysis.
pub fn binding_tuple_specs() -> [TargetSpec; 4] {
    [
        TargetSpec::Tuple(Offset::T0, Offset::T0),
        TargetSpec::Tuple(Offset::T1, Offset::T1),
        TargetSpec::Tuple(Offset::T0, Offset::T1),
        TargetSpec::Tuple(Offset::T1, Offset::T0),
    ]
}

/// Runs the full congruency analysis for one layer: component decoders,
/// the four tuples, and their product baselines on identical folds.
pub fn binding_analysis(
    ds: &ProbeDataset,
    layer_index: usize,
    settings: &DecoderSettings,
    threads: usize,
) -> BindingLayerReport {
    let layer = ds.layers[layer_index];
    let mut specs = vec![
        TargetSpec::Label(Offset::T0),
        TargetSpec::Label(Offset::T1),
        TargetSpec::Position(Offset::T0),
        TargetSpec::Position(Offset::T1),
    ];
    specs.extend(binding_tuple_specs());
    let mut results = decode_window_multi(ds, layer_index, &specs, settings, threads);
    let tuple_results: Vec<Vec<TimestepAccuracy>> = results.split_off(4);
    let pos_t1 = results.pop().expect("four components");
    let pos_t = results.pop().expect("four components");
    let label_t1 = results.pop().expect("four components");
    let label_t = results.pop().expect("four components");

    let component = |o: Offset, which_label: bool| -> &Vec<TimestepAccuracy> {
        match (which_label, o) {
            (true, Offset::T0) => &label_t,
            (true, Offset::T1) => &label_t1,
            (false, Offset::T0) => &pos_t,
            (false, Offset::T1) => &pos_t1,
            _ => unreachable!("binding tuples never use T2"),
        }
    };

    let mut tuples = Vec::new();
    for (spec, acc) in binding_tuple_specs().into_iter().zip(tuple_results) {
        let TargetSpec::Tuple(lo, po) = spec else {
            unreachable!()
        };
        let lab = component(lo, true);
        let pos = component(po, false);
        let rows: Vec<BindingRow> = acc
            .iter()
            .map(|row| {
                let l = lab
                    .iter()
                    .find(|r| r.timestep == row.timestep)
                    .expect("component timestep present");
                let p = pos
                    .iter()
                    .find(|r| r.timestep == row.timestep)
                    .expect("component timestep present");
                BindingRow {
                    timestep: row.timestep,
                    accuracy: row.mean,
                    ci_low: row.ci_low,
                    ci_high: row.ci_high,
                    baseline: l.mean * p.mean,
                }
            })
            .collect();
        let accuracy = summarize_window(&acc);
        let baseline_mean =
            rows.iter().map(|r| r.baseline).sum::<f64>() / rows.len().max(1) as f64;
        let excess_samples: Vec<f64> = rows.iter().map(|r| r.accuracy - r.baseline).collect();
        let (m, lo_ci, hi_ci) = mean_ci95(&excess_samples);
        tuples.push(TupleReport {
            layer,
            spec,
            rows,
            accuracy,
            baseline_mean,
            excess: WindowSummary {
                mean: m,
                ci_low: lo_ci,
                ci_high: hi_ci,
            },
        });
    }
    BindingLayerReport {
        layer,
        label_t,
        label_t1,
        pos_t,
        pos_t1,
        tuples,
    }
}

/// A congruent-vs-incongruent comparison that passed the selectivity test
/// on a layer whose baselines leave room to measure binding.
#[derive(Debug, Clone)]
pub struct SelectivityHit {
    pub layer: LayerId,
    pub congruent: TargetSpec,
    pub incongruent: TargetSpec,
    pub congruent_excess: WindowSummary,
    pub incongruent_excess: WindowSummary,
}

/// Searches all (layer, congruent, incongruent) pairings where both
/// baselines are below `baseline_cap` and the congruent excess CI lies
/// entirely above the incongruent excess CI.
pub fn binding_selectivity(
    reports: &[BindingLayerReport],
    baseline_cap: f64,
) -> Vec<SelectivityHit> {
    let mut hits = Vec::new();
    for report in reports {
        let congruent: Vec<&TupleReport> = report
            .tuples
            .iter()
            .filter(|t| t.spec.congruent() == Some(true))
            .collect();
        let incongruent: Vec<&TupleReport> = report
            .tuples
            .iter()
            .filter(|t| t.spec.congruent() == Some(false))
            .collect();
        for c in &congruent {
            if c.baseline_mean >= baseline_cap {
                continue;
            }
            for i in &incongruent {
                if i.baseline_mean >= baseline_cap {
                    continue;
                }
                if c.excess.ci_low > i.excess.ci_high {
                    hits.push(SelectivityHit {
                        layer: report.layer,
                        congruent: c.spec,
                        incongruent: i.spec,
                        congruent_excess: c.excess,
                        incongruent_excess: i.excess,
                    });
                }
            }
        }
    }
    hits
}

/// Builds a factorized null dataset: activations are concatenated noisy
/// one-hots of four independently drawn targets, so component decoding
/// succeeds while no binding structure exists. Tuple decoding should match
/// the product baseline on this data.
pub fn synthetic_factorized_dataset(
    n_scenes: usize,
    n_timesteps: usize,
    noise_sd: f64,
    seed: u64,
) -> ProbeDataset {
    let dim = 2 * (ALPHABET + N_POSITIONS);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(n_scenes * n_timesteps);
    let mut features: Vec<f32> = Vec::with_capacity(n_scenes * n_timesteps * dim);
    let mut gauss = Gauss::default();
    for scene_id in 0..n_scenes {
        for t in 0..n_timesteps {
            let label_t = rng.gen_range(0..ALPHABET as u8);
            let pos_t = rng.gen_range(0..N_POSITIONS as u8);
            let label_t1 = rng.gen_range(0..ALPHABET as u8);
            let pos_t1 = rng.gen_range(0..N_POSITIONS as u8);
            samples.push(ProbeSample {
                scene_id,
                timestep: t + 1,
                label_t,
                pos_t,
                label_t1,
                pos_t1,
                label_t2: None,
                pos_t2: None,
            });
            let mut row = vec![0.0f32; dim];
            row[label_t as usize] = 1.0;
            row[ALPHABET + pos_t as usize] = 1.0;
            row[ALPHABET + N_POSITIONS + label_t1 as usize] = 1.0;
            row[ALPHABET + N_POSITIONS + ALPHABET + pos_t1 as usize] = 1.0;
            for x in row.iter_mut() {
                *x += (noise_sd * gauss.next(&mut rng)) as f32;
            }
            features.extend(row);
        }
    }
    ProbeDataset {
        layers: vec![LayerId::Embed],
        dim,
        window: (1, n_timesteps),
        n_scenes,
        samples,
        activations: vec![features],
    }
}

/// Box-Muller standard normal draws.
#[derive(Default)]
struct Gauss {
    spare: Option<f64>,
}

impl Gauss {
    fn next(&mut self, rng: &mut impl Rng) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
        let u2: f64 = rng.gen_range(0.0..1.0);
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }
}
