//! The predictor: linear input projection, a stack of GRU layers, a ReLU
//! head, and a 26-way linear readout, plus training, evaluation, and
//! activation capture.

mod eval;
mod params;
mod train;

pub use eval::{evaluate_curve, mean_accuracy, CurvePoint};
pub use params::{GruLayerParams, ModelParams};
pub use train::{train, TrainLogRow, TrainOptions, TrainOutput};

use thiserror::Error;

use crate::numerics::{CheckpointError, GradTape, NumericsError, Scalar, Tensor2, Value};
use crate::worldgen::{encode_step, Episode, WorldGenError, ALPHABET, INPUT_DIM};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    WorldGen(#[from] WorldGenError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("loss became non-finite at batch {batch}; diagnostic checkpoint {diagnostic}")]
    NanLoss { batch: usize, diagnostic: String },
    #[error("checkpoint does not describe this model: {0}")]
    BadCheckpointLayout(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Architecture and training-budget knobs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelConfig {
    pub hidden_size: usize,
    pub num_gru_layers: usize,
    pub input_dim: usize,
    pub output_dim: usize,
    pub seq_len: usize,
    pub batch_scenes: usize,
    pub total_batches: usize,
    pub seed: u64,
}

impl ModelConfig {
    /// Full-scale configuration (hours of CPU time; provided behind the
    /// `paper` preset for completeness).
    pub fn paper() -> Self {
        ModelConfig {
            hidden_size: 512,
            num_gru_layers: 3,
            input_dim: INPUT_DIM,
            output_dim: ALPHABET,
            seq_len: 100,
            batch_scenes: 200,
            total_batches: 40_960,
            seed: 0,
        }
    }

    /// Desk-scale configuration: CPU-trainable in tens of minutes while
    /// preserving the qualitative phenomena.
    pub fn desk() -> Self {
        ModelConfig {
            hidden_size: 128,
            num_gru_layers: 3,
            input_dim: INPUT_DIM,
            output_dim: ALPHABET,
            seq_len: 60,
            batch_scenes: 64,
            total_batches: 4_000,
            seed: 0,
        }
    }

    /// Miniature configuration for fast tests.
    pub fn tiny() -> Self {
        ModelConfig {
            hidden_size: 16,
            num_gru_layers: 2,
            input_dim: INPUT_DIM,
            output_dim: ALPHABET,
            seq_len: 12,
            batch_scenes: 8,
            total_batches: 20,
            seed: 0,
        }
    }
}

/// Capture points for probing, in network order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerId {
    Embed,
    Gru(usize),
    Head,
}

impl LayerId {
    /// All capture points for a stack of `num_gru_layers`.
    pub fn all(num_gru_layers: usize) -> Vec<LayerId> {
        let mut v = vec![LayerId::Embed];
        v.extend((0..num_gru_layers).map(LayerId::Gru));
        v.push(LayerId::Head);
        v
    }

    pub fn name(&self) -> String {
        match self {
            LayerId::Embed => "embed".to_string(),
            LayerId::Gru(i) => format!("gru{}", i + 1),
            LayerId::Head => "head".to_string(),
        }
    }
}

/// Per-timestep activations captured during a forward pass.
#[derive(Debug, Clone)]
pub struct ActivationTrace<F> {
    pub embed: Vec<Vec<F>>,
    /// Indexed `[layer][timestep]`.
    pub gru: Vec<Vec<Vec<F>>>,
    pub head: Vec<Vec<F>>,
    pub logits: Vec<Vec<F>>,
}

impl<F: Scalar> ActivationTrace<F> {
    fn with_capacity(num_gru_layers: usize, len: usize) -> Self {
        ActivationTrace {
            embed: Vec::with_capacity(len),
            gru: vec![Vec::with_capacity(len); num_gru_layers],
            head: Vec::with_capacity(len),
            logits: Vec::with_capacity(len),
        }
    }

    pub fn len(&self) -> usize {
        self.embed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.embed.is_empty()
    }

    pub fn layer(&self, id: LayerId, t: usize) -> &[F] {
        match id {
            LayerId::Embed => &self.embed[t],
            LayerId::Gru(i) => &self.gru[i][t],
            LayerId::Head => &self.head[t],
        }
    }
}

/// Streaming single-sequence forward pass holding the recurrent state.
/// Feed inputs one step at a time; no gradients are recorded.
pub struct Runner<'a, F: Scalar> {
    params: &'a ModelParams<F>,
    hidden: Vec<Tensor2<F>>,
}

/// Activations produced by one streamed step.
pub struct StepOutput<F> {
    pub logits: Vec<F>,
    pub embed: Vec<F>,
    pub gru: Vec<Vec<F>>,
    pub head: Vec<F>,
}

impl<F> StepOutput<F>
where
    F: Scalar,
{
    pub fn argmax(&self) -> u8 {
        argmax(&self.logits)
    }
}

/// Index of the largest entry, ties broken toward the lowest index.
pub fn argmax<F: Scalar>(xs: &[F]) -> u8 {
    let mut best = 0usize;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best as u8
}

impl<'a, F: Scalar> Runner<'a, F> {
    pub fn new(params: &'a ModelParams<F>) -> Self {
        let h = (0..params.config.num_gru_layers)
            .map(|_| Tensor2::zeros(1, params.config.hidden_size))
            .collect();
        Runner {
            params,
            hidden: h,
        }
    }

    /// Resets the recurrent state to zeros.
    pub fn reset(&mut self) {
        for h in &mut self.hidden {
            *h = Tensor2::zeros(1, self.params.config.hidden_size);
        }
    }

    pub fn step(&mut self, input: &[f64]) -> Result<StepOutput<F>, ModelError> {
        assert_eq!(input.len(), self.params.config.input_dim, "input width");
        let x = Tensor2::from_vec(
            1,
            input.len(),
            input.iter().map(|&v| F::from_f64(v)).collect(),
        );
        let p = self.params;
        let embed = x
            .matmul(&p.w_in)?
            .add_row_broadcast(&p.b_in)?;
        let mut inp = embed.clone();
        let mut gru_out = Vec::with_capacity(p.layers.len());
        for (l, layer) in p.layers.iter().enumerate() {
            let h = &self.hidden[l];
            let cat = inp.concat_cols(h)?;
            let z = cat.matmul(&layer.w_z)?.add_row_broadcast(&layer.b_z)?.sigmoid();
            let r = cat.matmul(&layer.w_r)?.add_row_broadcast(&layer.b_r)?.sigmoid();
            let rh = r.mul_elementwise(h)?;
            let cat_r = inp.concat_cols(&rh)?;
            let cand = cat_r
                .matmul(&layer.w_h)?
                .add_row_broadcast(&layer.b_h)?
                .tanh_elem();
            let keep = z.one_minus().mul_elementwise(h)?;
            let take = z.mul_elementwise(&cand)?;
            let h_new = keep.add(&take)?;
            gru_out.push(h_new.data().to_vec());
            self.hidden[l] = h_new;
            inp = self.hidden[l].clone();
        }
        let head = inp
            .matmul(&p.w_head)?
            .add_row_broadcast(&p.b_head)?
            .relu();
        let logits = head.matmul(&p.w_out)?.add_row_broadcast(&p.b_out)?;
        Ok(StepOutput {
            logits: logits.data().to_vec(),
            embed: embed.data().to_vec(),
            gru: gru_out,
            head: head.data().to_vec(),
        })
    }
}

/// Runs one episode through the network with zero-initialized state.
/// Returns per-timestep logits and, when `capture` is set, the full
/// activation trace. Capture is passive: logits are identical either way.
pub fn forward_episode<F: Scalar>(
    params: &ModelParams<F>,
    episode: &Episode,
    capture: bool,
) -> Result<(Vec<Vec<F>>, Option<ActivationTrace<F>>), ModelError> {
    let mut runner = Runner::new(params);
    let mut logits = Vec::with_capacity(episode.len());
    let mut trace = capture
        .then(|| ActivationTrace::with_capacity(params.config.num_gru_layers, episode.len()));
    for step in &episode.steps {
        let out = runner.step(&encode_step(step))?;
        if let Some(tr) = trace.as_mut() {
            tr.embed.push(out.embed);
            for (l, g) in out.gru.iter().enumerate() {
                tr.gru[l].push(g.clone());
            }
            tr.head.push(out.head);
            tr.logits.push(out.logits.clone());
        }
        logits.push(out.logits);
    }
    Ok((logits, trace))
}

/// Parameter [`Value`]s registered on a tape, mirroring [`ModelParams`].
pub struct TapeParams {
    pub w_in: Value,
    pub b_in: Value,
    pub layers: Vec<TapeGru>,
    pub w_head: Value,
    pub b_head: Value,
    pub w_out: Value,
    pub b_out: Value,
}

pub struct TapeGru {
    pub w_z: Value,
    pub b_z: Value,
    pub w_r: Value,
    pub b_r: Value,
    pub w_h: Value,
    pub b_h: Value,
}

impl TapeParams {
    /// Values in the same order as [`ModelParams::tensor_names`].
    pub fn ordered(&self) -> Vec<Value> {
        let mut v = vec![self.w_in, self.b_in];
        for l in &self.layers {
            v.extend([l.w_z, l.b_z, l.w_r, l.b_r, l.w_h, l.b_h]);
        }
        v.extend([self.w_head, self.b_head, self.w_out, self.b_out]);
        v
    }
}

/// One GRU cell on the tape: z and r gates over [x | h], candidate over
/// [x | r*h], update h' = (1-z)*h + z*cand.
pub fn gru_cell_on_tape<F: Scalar>(
    tape: &mut GradTape<F>,
    layer: &TapeGru,
    x: Value,
    h: Value,
) -> Result<Value, NumericsError> {
    let cat = tape.concat_cols(x, h)?;
    let z_pre = tape.matmul(cat, layer.w_z)?;
    let z_pre = tape.add_row_broadcast(z_pre, layer.b_z)?;
    let z = tape.sigmoid(z_pre);
    let r_pre = tape.matmul(cat, layer.w_r)?;
    let r_pre = tape.add_row_broadcast(r_pre, layer.b_r)?;
    let r = tape.sigmoid(r_pre);
    let rh = tape.mul_elementwise(r, h)?;
    let cat_r = tape.concat_cols(x, rh)?;
    let c_pre = tape.matmul(cat_r, layer.w_h)?;
    let c_pre = tape.add_row_broadcast(c_pre, layer.b_h)?;
    let cand = tape.tanh(c_pre);
    let omz = tape.one_minus(z);
    let keep = tape.mul_elementwise(omz, h)?;
    let take = tape.mul_elementwise(z, cand)?;
    tape.add(keep, take)
}

/// Full batched unroll on a tape. `inputs[t]` is a batch x input_dim
/// tensor, `targets[t]` the label indices for that step. Returns the mean
/// loss node and the per-step logit nodes.
pub fn forward_batch_on_tape<F: Scalar>(
    tape: &mut GradTape<F>,
    params: &ModelParams<F>,
    inputs: &[Tensor2<F>],
    targets: &[Vec<usize>],
) -> Result<(TapeParams, Value, Vec<Value>), ModelError> {
    assert_eq!(inputs.len(), targets.len(), "inputs/targets must align");
    assert!(!inputs.is_empty(), "empty sequence");
    let batch = inputs[0].rows();
    let tp = params.bind(tape);
    let mut hs: Vec<Value> = (0..params.config.num_gru_layers)
        .map(|_| tape.leaf(Tensor2::zeros(batch, params.config.hidden_size)))
        .collect();
    let mut total: Option<Value> = None;
    let mut logit_nodes = Vec::with_capacity(inputs.len());
    for (x_t, tgt) in inputs.iter().zip(targets.iter()) {
        let x = tape.leaf(x_t.clone());
        let e_pre = tape.matmul(x, tp.w_in)?;
        let embed = tape.add_row_broadcast(e_pre, tp.b_in)?;
        let mut inp = embed;
        for l in 0..hs.len() {
            hs[l] = gru_cell_on_tape(tape, &tp.layers[l], inp, hs[l])?;
            inp = hs[l];
        }
        let h_pre = tape.matmul(inp, tp.w_head)?;
        let h_pre = tape.add_row_broadcast(h_pre, tp.b_head)?;
        let head = tape.relu(h_pre);
        let l_pre = tape.matmul(head, tp.w_out)?;
        let logits = tape.add_row_broadcast(l_pre, tp.b_out)?;
        logit_nodes.push(logits);
        let step_loss = tape.softmax_cross_entropy(logits, tgt)?;
        total = Some(match total {
            None => step_loss,
            Some(acc) => tape.add(acc, step_loss)?,
        });
    }
    let sum = total.expect("non-empty sequence");
    let loss = tape.scale(sum, F::from_f64(1.0 / inputs.len() as f64));
    Ok((tp, loss, logit_nodes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::gradcheck::{central_diff, max_relative_error};
    use crate::worldgen::{generate_scene, sample_episode};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn episode_for_test(seed: u64, len: usize) -> Episode {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scene = generate_scene(&mut rng, None).unwrap();
        sample_episode(&scene, len, &mut rng, None).unwrap()
    }

    #[test]
    fn zero_weights_give_uniform_logits() {
        let mut cfg = ModelConfig::tiny();
        cfg.hidden_size = 8;
        let params = ModelParams::<f64>::zeros(cfg);
        let ep = episode_for_test(1, 6);
        let (logits, _) = forward_episode(&params, &ep, false).unwrap();
        for row in &logits {
            for &x in row {
                assert_eq!(x, 0.0);
            }
        }
        // uniform logits mean ln(26) loss at every timestep
        let loss = crate::numerics::softmax_cross_entropy(
            &Tensor2::from_vec(1, 26, logits[0].clone()),
            &[3],
        )
        .unwrap()
        .0;
        assert!((loss - 26.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn gru_states_stay_bounded() {
        let cfg = ModelConfig::tiny();
        let params = ModelParams::<f64>::init(cfg, 99);
        let ep = episode_for_test(2, 40);
        let (_, trace) = forward_episode(&params, &ep, true).unwrap();
        let trace = trace.unwrap();
        assert_eq!(trace.len(), 40);
        for layer in &trace.gru {
            for step in layer {
                for &x in step {
                    assert!((-1.0..=1.0).contains(&x), "state {x} out of [-1,1]");
                }
            }
        }
    }

    #[test]
    fn capture_is_passive() {
        let cfg = ModelConfig::tiny();
        let params = ModelParams::<f64>::init(cfg, 7);
        let ep = episode_for_test(3, 10);
        let (a, _) = forward_episode(&params, &ep, false).unwrap();
        let (b, trace) = forward_episode(&params, &ep, true).unwrap();
        assert_eq!(a, b);
        assert_eq!(trace.unwrap().logits, a);
    }

    #[test]
    fn batched_and_streaming_forward_agree() {
        let cfg = ModelConfig::tiny();
        let params = ModelParams::<f64>::init(cfg, 21);
        let ep = episode_for_test(4, 8);
        let (stream_logits, _) = forward_episode(&params, &ep, false).unwrap();

        let inputs: Vec<Tensor2<f64>> = ep
            .steps
            .iter()
            .map(|s| Tensor2::from_vec(1, INPUT_DIM, encode_step(s).to_vec()))
            .collect();
        let targets: Vec<Vec<usize>> = ep
            .steps
            .iter()
            .map(|s| vec![s.target_label as usize])
            .collect();
        let mut tape = GradTape::new();
        let (_, _, logit_nodes) =
            forward_batch_on_tape(&mut tape, &params, &inputs, &targets).unwrap();
        for (t, node) in logit_nodes.iter().enumerate() {
            let batched = tape.value(*node);
            for (i, &x) in batched.data().iter().enumerate() {
                assert!(
                    (x - stream_logits[t][i]).abs() < 1e-10,
                    "t={t} i={i}: {x} vs {}",
                    stream_logits[t][i]
                );
            }
        }
    }

    // Gradient of the full model (GRU stack + head + loss) against the
    // finite-difference oracle on a small instance.
    #[test]
    fn full_model_gradient_matches_finite_differences() {
        let mut cfg = ModelConfig::tiny();
        cfg.hidden_size = 5;
        cfg.num_gru_layers = 3;
        let base = ModelParams::<f64>::init(cfg, 11);
        let ep = episode_for_test(5, 4);
        let inputs: Vec<Tensor2<f64>> = ep
            .steps
            .iter()
            .map(|s| Tensor2::from_vec(1, INPUT_DIM, encode_step(s).to_vec()))
            .collect();
        let targets: Vec<Vec<usize>> = ep
            .steps
            .iter()
            .map(|s| vec![s.target_label as usize])
            .collect();

        let flat0 = base.flatten();
        let mut f = |flat: &[f64]| -> f64 {
            let p = base.with_flat(flat);
            let mut tape = GradTape::new();
            let (_, loss, _) = forward_batch_on_tape(&mut tape, &p, &inputs, &targets).unwrap();
            tape.value(loss).item()
        };
        let numeric = central_diff(&mut f, &flat0, 1e-5);

        let mut tape = GradTape::new();
        let (tp, loss, _) = forward_batch_on_tape(&mut tape, &base, &inputs, &targets).unwrap();
        let store = tape.backward(loss).unwrap();
        let mut analytic = Vec::with_capacity(flat0.len());
        for v in tp.ordered() {
            analytic.extend_from_slice(store.require(v).unwrap().data());
        }
        let rel = max_relative_error(&analytic, &numeric);
        assert!(rel < 1e-5, "relative error {rel}");
    }

    #[test]
    fn layer_ids_enumerate_five_capture_points() {
        let ids = LayerId::all(3);
        let names: Vec<String> = ids.iter().map(|l| l.name()).collect();
        assert_eq!(names, ["embed", "gru1", "gru2", "gru3", "head"]);
    }
}
