//! Learnable tensors of the predictor, their initialization, flat views
//! for the optimizer and gradient checks, and checkpoint round-trips.

use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{ModelConfig, ModelError, TapeGru, TapeParams};
use crate::numerics::{checkpoint, AdamState, GradTape, Scalar, Tensor2};

/// Gate matrices of one GRU layer, applied to [input | hidden].
#[derive(Debug, Clone, PartialEq)]
pub struct GruLayerParams<F> {
    pub w_z: Tensor2<F>,
    pub b_z: Tensor2<F>,
    pub w_r: Tensor2<F>,
    pub b_r: Tensor2<F>,
    pub w_h: Tensor2<F>,
    pub b_h: Tensor2<F>,
}

/// All learnable tensors plus the architecture they instantiate.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<F> {
    pub config: ModelConfig,
    pub w_in: Tensor2<F>,
    pub b_in: Tensor2<F>,
    pub layers: Vec<GruLayerParams<F>>,
    pub w_head: Tensor2<F>,
    pub b_head: Tensor2<F>,
    pub w_out: Tensor2<F>,
    pub b_out: Tensor2<F>,
}

impl<F: Scalar> ModelParams<F> {
    /// Uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)] for weights,
    /// zeros for biases. Draws f64 before casting so f32 and f64
    /// instantiations of the same seed share a stream.
    pub fn init(config: ModelConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weight = |rows: usize, cols: usize| -> Tensor2<F> {
            let bound = 1.0 / (rows as f64).sqrt();
            let data: Vec<F> = (0..rows * cols)
                .map(|_| F::from_f64(rng.gen_range(-bound..=bound)))
                .collect();
            Tensor2::from_vec(rows, cols, data)
        };
        let h = config.hidden_size;
        let cat = h + h; // gru input is [projected | hidden]
        let layers = (0..config.num_gru_layers)
            .map(|_| GruLayerParams {
                w_z: weight(cat, h),
                b_z: Tensor2::zeros(1, h),
                w_r: weight(cat, h),
                b_r: Tensor2::zeros(1, h),
                w_h: weight(cat, h),
                b_h: Tensor2::zeros(1, h),
            })
            .collect();
        ModelParams {
            w_in: weight(config.input_dim, h),
            b_in: Tensor2::zeros(1, h),
            layers,
            w_head: weight(h, h),
            b_head: Tensor2::zeros(1, h),
            w_out: weight(h, config.output_dim),
            b_out: Tensor2::zeros(1, config.output_dim),
            config,
        }
    }

    /// All-zero parameters (uniform predictions); used by tests.
    pub fn zeros(config: ModelConfig) -> Self {
        let h = config.hidden_size;
        let layers = (0..config.num_gru_layers)
            .map(|_| GruLayerParams {
                w_z: Tensor2::zeros(2 * h, h),
                b_z: Tensor2::zeros(1, h),
                w_r: Tensor2::zeros(2 * h, h),
                b_r: Tensor2::zeros(1, h),
                w_h: Tensor2::zeros(2 * h, h),
                b_h: Tensor2::zeros(1, h),
            })
            .collect();
        ModelParams {
            w_in: Tensor2::zeros(config.input_dim, h),
            b_in: Tensor2::zeros(1, h),
            layers,
            w_head: Tensor2::zeros(h, h),
            b_head: Tensor2::zeros(1, h),
            w_out: Tensor2::zeros(h, config.output_dim),
            b_out: Tensor2::zeros(1, config.output_dim),
            config,
        }
    }

    /// Stable name for every tensor, in the canonical ordering shared by
    /// the optimizer, checkpoints, and tape binding.
    pub fn tensor_names(&self) -> Vec<String> {
        let mut names = vec!["w_in".to_string(), "b_in".to_string()];
        for i in 0..self.layers.len() {
            let l = i + 1;
            names.extend([
                format!("gru{l}.w_z"),
                format!("gru{l}.b_z"),
                format!("gru{l}.w_r"),
                format!("gru{l}.b_r"),
                format!("gru{l}.w_h"),
                format!("gru{l}.b_h"),
            ]);
        }
        names.extend([
            "w_head".to_string(),
            "b_head".to_string(),
            "w_out".to_string(),
            "b_out".to_string(),
        ]);
        names
    }

    pub fn tensors(&self) -> Vec<&Tensor2<F>> {
        let mut v = vec![&self.w_in, &self.b_in];
        for l in &self.layers {
            v.extend([&l.w_z, &l.b_z, &l.w_r, &l.b_r, &l.w_h, &l.b_h]);
        }
        v.extend([&self.w_head, &self.b_head, &self.w_out, &self.b_out]);
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor2<F>> {
        let mut v: Vec<&mut Tensor2<F>> = vec![&mut self.w_in, &mut self.b_in];
        for l in &mut self.layers {
            v.push(&mut l.w_z);
            v.push(&mut l.b_z);
            v.push(&mut l.w_r);
            v.push(&mut l.b_r);
            v.push(&mut l.w_h);
            v.push(&mut l.b_h);
        }
        v.push(&mut self.w_head);
        v.push(&mut self.b_head);
        v.push(&mut self.w_out);
        v.push(&mut self.b_out);
        v
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Registers every tensor as a tape leaf, preserving canonical order.
    pub(crate) fn bind(&self, tape: &mut GradTape<F>) -> TapeParams {
        TapeParams {
            w_in: tape.leaf(self.w_in.clone()),
            b_in: tape.leaf(self.b_in.clone()),
            layers: self
                .layers
                .iter()
                .map(|l| TapeGru {
                    w_z: tape.leaf(l.w_z.clone()),
                    b_z: tape.leaf(l.b_z.clone()),
                    w_r: tape.leaf(l.w_r.clone()),
                    b_r: tape.leaf(l.b_r.clone()),
                    w_h: tape.leaf(l.w_h.clone()),
                    b_h: tape.leaf(l.b_h.clone()),
                })
                .collect(),
            w_head: tape.leaf(self.w_head.clone()),
            b_head: tape.leaf(self.b_head.clone()),
            w_out: tape.leaf(self.w_out.clone()),
            b_out: tape.leaf(self.b_out.clone()),
        }
    }

    /// Concatenation of every tensor in canonical order, as f64.
    pub fn flatten(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.num_parameters());
        for t in self.tensors() {
            flat.extend(t.data().iter().map(|&x| x.to_f64()));
        }
        flat
    }

    /// Clone with values replaced from a flat vector (gradient checks).
    pub fn with_flat(&self, flat: &[f64]) -> Self {
        assert_eq!(flat.len(), self.num_parameters(), "flat length mismatch");
        let mut out = self.clone();
        let mut offset = 0;
        for t in out.tensors_mut() {
            let n = t.len();
            for (dst, &src) in t.data_mut().iter_mut().zip(&flat[offset..offset + n]) {
                *dst = F::from_f64(src);
            }
            offset += n;
        }
        out
    }

    /// Writes parameters (and optimizer state, if given) as f32 tensors.
    pub fn save(&self, path: &Path, adam: Option<&AdamState<F>>) -> Result<(), ModelError> {
        let names = self.tensor_names();
        let mut entries: Vec<(String, Tensor2<f32>)> = names
            .iter()
            .zip(self.tensors())
            .map(|(n, t)| (n.clone(), t.cast::<f32>()))
            .collect();
        if let Some(state) = adam {
            let (m, v) = state.moments();
            for ((name, m_t), v_t) in names.iter().zip(m.iter()).zip(v.iter()) {
                entries.push((format!("adam.m.{name}"), m_t.cast::<f32>()));
                entries.push((format!("adam.v.{name}"), v_t.cast::<f32>()));
            }
            entries.push((
                "adam.step".to_string(),
                Tensor2::scalar(state.step_count() as f32),
            ));
        }
        checkpoint::save_to_path(path, &entries)?;
        Ok(())
    }
}

impl ModelParams<f32> {
    /// Loads parameters from a checkpoint, inferring the architecture from
    /// tensor shapes. Sequence/batch fields fall back to the desk preset.
    pub fn load(path: &Path) -> Result<(Self, Option<AdamState<f32>>), ModelError> {
        let entries = checkpoint::load_from_path(path)?;
        let lookup = |name: &str| -> Result<Tensor2<f32>, ModelError> {
            entries
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, t)| t.clone())
                .ok_or_else(|| {
                    ModelError::Checkpoint(checkpoint::CheckpointError::MissingTensor(
                        name.to_string(),
                    ))
                })
        };
        let w_in = lookup("w_in")?;
        let hidden_size = w_in.cols();
        let input_dim = w_in.rows();
        let num_gru_layers = entries
            .iter()
            .filter(|(n, _)| n.starts_with("gru") && n.ends_with(".w_z"))
            .count();
        if num_gru_layers == 0 {
            return Err(ModelError::BadCheckpointLayout(
                "no GRU layer tensors found".to_string(),
            ));
        }
        let w_out = lookup("w_out")?;
        let output_dim = w_out.cols();
        let config = ModelConfig {
            hidden_size,
            num_gru_layers,
            input_dim,
            output_dim,
            ..ModelConfig::desk()
        };
        let mut layers = Vec::with_capacity(num_gru_layers);
        for i in 1..=num_gru_layers {
            layers.push(GruLayerParams {
                w_z: lookup(&format!("gru{i}.w_z"))?,
                b_z: lookup(&format!("gru{i}.b_z"))?,
                w_r: lookup(&format!("gru{i}.w_r"))?,
                b_r: lookup(&format!("gru{i}.b_r"))?,
                w_h: lookup(&format!("gru{i}.w_h"))?,
                b_h: lookup(&format!("gru{i}.b_h"))?,
            });
        }
        let params = ModelParams {
            config,
            w_in,
            b_in: lookup("b_in")?,
            layers,
            w_head: lookup("w_head")?,
            b_head: lookup("b_head")?,
            w_out,
            b_out: lookup("b_out")?,
        };
        params.validate_shapes()?;

        let adam = if entries.iter().any(|(n, _)| n == "adam.step") {
            let names = params.tensor_names();
            let mut m = Vec::with_capacity(names.len());
            let mut v = Vec::with_capacity(names.len());
            for name in &names {
                m.push(lookup(&format!("adam.m.{name}"))?);
                v.push(lookup(&format!("adam.v.{name}"))?);
            }
            let step = lookup("adam.step")?.item() as u64;
            Some(AdamState::from_parts(m, v, step))
        } else {
            None
        };
        Ok((params, adam))
    }

    fn validate_shapes(&self) -> Result<(), ModelError> {
        let h = self.config.hidden_size;
        let expect = |ok: bool, what: &str| -> Result<(), ModelError> {
            if ok {
                Ok(())
            } else {
                Err(ModelError::BadCheckpointLayout(format!(
                    "tensor {what} has an unexpected shape"
                )))
            }
        };
        expect(self.b_in.shape() == (1, h), "b_in")?;
        for (i, l) in self.layers.iter().enumerate() {
            let tag = format!("gru{}", i + 1);
            expect(l.w_z.shape() == (2 * h, h), &format!("{tag}.w_z"))?;
            expect(l.w_r.shape() == (2 * h, h), &format!("{tag}.w_r"))?;
            expect(l.w_h.shape() == (2 * h, h), &format!("{tag}.w_h"))?;
            expect(l.b_z.shape() == (1, h), &format!("{tag}.b_z"))?;
            expect(l.b_r.shape() == (1, h), &format!("{tag}.b_r"))?;
            expect(l.b_h.shape() == (1, h), &format!("{tag}.b_h"))?;
        }
        expect(self.w_head.shape() == (h, h), "w_head")?;
        expect(self.b_head.shape() == (1, h), "b_head")?;
        expect(self.w_out.rows() == h, "w_out")?;
        expect(self.b_out.shape() == (1, self.config.output_dim), "b_out")?;
        Ok(())
    }
}
