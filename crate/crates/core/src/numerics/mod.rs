//! Minimal dense-tensor numerics with reverse-mode gradients: just enough
//! primitive kernels for a GRU stack (matmul, elementwise nonlinearities,
//! concatenation, softmax cross-entropy) plus Adam and checkpoint I/O.

mod adam;
pub mod checkpoint;
pub mod gradcheck;
mod tape;
mod tensor;

pub use adam::{adam_step, clip_global_norm, AdamConfig, AdamState};
pub use checkpoint::CheckpointError;
pub use tape::{GradStore, GradTape, Value};
pub use tensor::{softmax_cross_entropy, softmax_rows, Scalar, Tensor2};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NumericsError {
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    #[error("target class {target} out of range for {classes} classes")]
    BadTarget { target: usize, classes: usize },
    #[error("backward reached no gradient for node {0}")]
    MissingGradient(usize),
    #[error("backward seed must be 1x1, got {0:?}")]
    NonScalarSeed((usize, usize)),
}

#[cfg(test)]
mod tests {
    use super::gradcheck::{central_diff, max_relative_error};
    use super::*;

    fn t64(rows: usize, cols: usize, v: &[f64]) -> Tensor2<f64> {
        Tensor2::from_vec(rows, cols, v.to_vec())
    }

    #[test]
    fn matmul_identity_is_identity() {
        let x = t64(3, 2, &[1.0, 2.0, 3.0, -4.0, 0.5, 6.0]);
        let i3 = Tensor2::<f64>::identity(3);
        assert_eq!(i3.matmul(&x).unwrap(), x);
    }

    #[test]
    fn matmul_matches_naive_loops() {
        let a = t64(2, 3, &[1.0, -2.0, 0.5, 3.0, 4.0, -1.0]);
        let b = t64(3, 2, &[2.0, 1.0, 0.0, -1.0, 5.0, 2.0]);
        let c = a.matmul(&b).unwrap();
        for r in 0..2 {
            for k in 0..2 {
                let mut want = 0.0;
                for j in 0..3 {
                    want += a.get(r, j) * b.get(j, k);
                }
                assert!((c.get(r, k) - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn transposed_matmuls_agree_with_explicit_transpose() {
        let a = t64(2, 3, &[1.0, -2.0, 0.5, 3.0, 4.0, -1.0]);
        let b = t64(2, 4, &[2.0, 1.0, 0.0, -1.0, 5.0, 2.0, 0.25, -3.0]);
        assert_eq!(
            a.matmul_tn(&b).unwrap(),
            a.transpose().matmul(&b).unwrap()
        );
        let c = t64(4, 3, &[1.0, 0.0, 2.0, -1.0, 3.0, 0.5, 2.0, 2.0, -2.0, 0.0, 1.0, 1.0]);
        assert_eq!(
            a.matmul_nt(&c).unwrap(),
            a.matmul(&c.transpose()).unwrap()
        );
    }

    #[test]
    fn elementwise_definitions() {
        let x = t64(1, 3, &[-1.0, 0.0, 2.0]);
        assert_eq!(x.relu().data(), &[0.0, 0.0, 2.0]);
        assert_eq!(x.sigmoid().get(0, 1), 0.5);
        assert_eq!(x.tanh_elem().get(0, 1), 0.0);
        assert_eq!(x.one_minus().data(), &[2.0, 1.0, -1.0]);
    }

    #[test]
    fn shape_mismatch_reports_both_shapes() {
        let a = Tensor2::<f64>::zeros(2, 3);
        let b = Tensor2::<f64>::zeros(2, 3);
        let err = a.matmul(&b).unwrap_err();
        match err {
            NumericsError::ShapeMismatch { op, lhs, rhs } => {
                assert_eq!(op, "matmul");
                assert_eq!(lhs, (2, 3));
                assert_eq!(rhs, (2, 3));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let x = t64(2, 4, &[5.0, -3.0, 0.2, 9.0, -20.0, 14.0, 2.0, 2.0]);
        let s = softmax_rows(&x);
        for r in 0..2 {
            let sum: f64 = s.row(r).iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn cross_entropy_uniform_logits_is_ln_26() {
        let logits = Tensor2::<f64>::zeros(3, 26);
        let (loss, _) = softmax_cross_entropy(&logits, &[0, 13, 25]).unwrap();
        assert!((loss - 26.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_saturated_target_is_tiny() {
        // +20 margin: loss = ln(1 + 25 e^-20) ~ 5.2e-8
        let mut logits = Tensor2::<f64>::zeros(1, 26);
        logits.set(0, 7, 20.0);
        let (loss, _) = softmax_cross_entropy(&logits, &[7]).unwrap();
        assert!(loss < 1e-7);
        // a little more margin crosses 1e-8
        logits.set(0, 7, 22.0);
        let (loss, _) = softmax_cross_entropy(&logits, &[7]).unwrap();
        assert!(loss < 1e-8);
    }

    #[test]
    fn cross_entropy_grad_rows_sum_to_zero() {
        let logits = t64(2, 3, &[1.0, -0.5, 2.0, 0.0, 0.0, 4.0]);
        let (_, grad) = softmax_cross_entropy(&logits, &[2, 0]).unwrap();
        for r in 0..2 {
            let sum: f64 = grad.row(r).iter().sum();
            assert!(sum.abs() < 1e-12, "row {r} sums to {sum}");
        }
    }

    #[test]
    fn cross_entropy_rejects_bad_target() {
        let logits = Tensor2::<f64>::zeros(1, 26);
        assert!(matches!(
            softmax_cross_entropy(&logits, &[26]),
            Err(NumericsError::BadTarget { .. })
        ));
    }

    // f(W) = sum(tanh(W x)) against the central-difference oracle.
    #[test]
    fn tape_gradient_matches_finite_differences() {
        let x_data = [0.3, -1.2, 0.7];
        let w0: Vec<f64> = (0..12).map(|i| ((i as f64) * 0.37).sin() * 0.8).collect();

        let mut f = |w: &[f64]| -> f64 {
            let mut tape = GradTape::<f64>::new();
            let wv = tape.leaf(Tensor2::from_vec(4, 3, w.to_vec()));
            let xv = tape.leaf(Tensor2::from_vec(3, 1, x_data.to_vec()));
            let y = tape.matmul(wv, xv).unwrap();
            let t = tape.tanh(y);
            // reduce to scalar via ones^T t
            let ones = tape.leaf(Tensor2::from_vec(1, 4, vec![1.0; 4]));
            let s = tape.matmul(ones, t).unwrap();
            tape.value(s).item()
        };
        let numeric = central_diff(&mut f, &w0, 1e-5);

        let mut tape = GradTape::<f64>::new();
        let wv = tape.leaf(Tensor2::from_vec(4, 3, w0.clone()));
        let xv = tape.leaf(Tensor2::from_vec(3, 1, x_data.to_vec()));
        let y = tape.matmul(wv, xv).unwrap();
        let t = tape.tanh(y);
        let ones = tape.leaf(Tensor2::from_vec(1, 4, vec![1.0; 4]));
        let s = tape.matmul(ones, t).unwrap();
        let grads = tape.backward(s).unwrap();
        let analytic = grads.require(wv).unwrap();

        let rel = max_relative_error(analytic.data(), &numeric);
        assert!(rel < 1e-6, "relative error {rel}");
    }

    // Composite exercising every primitive the model uses.
    #[test]
    fn tape_gradient_full_primitive_mix() {
        let n_in = 3;
        let n_hid = 4;
        let batch = 2;
        let n_params = n_in * n_hid + n_hid + 2 * n_hid * n_hid;
        let x_data: Vec<f64> = (0..batch * n_in).map(|i| ((i as f64) * 0.71).cos()).collect();
        let p0: Vec<f64> = (0..n_params).map(|i| ((i as f64) * 0.13).sin() * 0.6).collect();
        let targets = [1usize, 3];

        let run = |p: &[f64], want_grad: bool| -> (f64, Option<Vec<f64>>) {
            let (w1, rest) = p.split_at(n_in * n_hid);
            let (b1, w2) = rest.split_at(n_hid);
            let mut tape = GradTape::<f64>::new();
            let w1v = tape.leaf(Tensor2::from_vec(n_in, n_hid, w1.to_vec()));
            let b1v = tape.leaf(Tensor2::from_vec(1, n_hid, b1.to_vec()));
            let w2v = tape.leaf(Tensor2::from_vec(2 * n_hid, n_hid, w2.to_vec()));
            let xv = tape.leaf(Tensor2::from_vec(batch, n_in, x_data.clone()));
            let a = tape.matmul(xv, w1v).unwrap();
            let a = tape.add_row_broadcast(a, b1v).unwrap();
            let z = tape.sigmoid(a);
            let g = tape.tanh(a);
            let omz = tape.one_minus(z);
            let mix = tape.mul_elementwise(omz, g).unwrap();
            let mix2 = tape.mul_elementwise(z, g).unwrap();
            let h = tape.add(mix, mix2).unwrap();
            let cat = tape.concat_cols(h, g).unwrap();
            let r = tape.relu(cat);
            let logits = tape.matmul(r, w2v).unwrap();
            let loss = tape.softmax_cross_entropy(logits, &targets).unwrap();
            let val = tape.value(loss).item();
            if !want_grad {
                return (val, None);
            }
            let grads = tape.backward(loss).unwrap();
            let mut flat = Vec::with_capacity(n_params);
            flat.extend_from_slice(grads.require(w1v).unwrap().data());
            flat.extend_from_slice(grads.require(b1v).unwrap().data());
            flat.extend_from_slice(grads.require(w2v).unwrap().data());
            (val, Some(flat))
        };

        let (_, analytic) = run(&p0, true);
        let analytic = analytic.unwrap();
        let mut f = |p: &[f64]| run(p, false).0;
        let numeric = central_diff(&mut f, &p0, 1e-5);
        let rel = max_relative_error(&analytic, &numeric);
        assert!(rel < 1e-6, "relative error {rel}");
    }

    #[test]
    fn adam_zero_gradient_leaves_params_unchanged() {
        let mut params = vec![t64(2, 2, &[0.5, -0.25, 1.0, 2.0])];
        let before = params[0].clone();
        let grads = vec![Tensor2::<f64>::zeros(2, 2)];
        let mut state = AdamState::new(&params);
        let cfg = AdamConfig::default();
        for _ in 0..10 {
            adam_step(&mut params, &grads, &mut state, &cfg);
        }
        for (a, b) in params[0].data().iter().zip(before.data().iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn adam_reduces_quadratic_loss() {
        // minimize 0.5*x^2, grad = x
        let mut params = vec![Tensor2::<f64>::from_vec(1, 1, vec![1.0])];
        let mut state = AdamState::new(&params);
        let cfg = AdamConfig::default();
        for _ in 0..10_000 {
            let grads = vec![params[0].clone()];
            adam_step(&mut params, &grads, &mut state, &cfg);
        }
        assert!(params[0].item().abs() < 1e-2);
    }

    #[test]
    fn clip_global_norm_scales_to_bound() {
        let mut grads = vec![t64(1, 2, &[3.0, 4.0])];
        let norm = clip_global_norm(&mut grads, 1.0);
        assert!((norm - 5.0).abs() < 1e-12);
        let clipped = grads[0].frobenius_norm();
        assert!((clipped - 1.0).abs() < 1e-12);
        // under the bound nothing changes
        let mut small = vec![t64(1, 2, &[0.3, 0.4])];
        clip_global_norm(&mut small, 1.0);
        assert_eq!(small[0].data(), &[0.3, 0.4]);
    }

    #[test]
    fn no_nan_or_inf_over_random_inputs() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for _ in 0..1000 {
            let w: Vec<f64> = (0..12).map(|_| rng.gen_range(-10.0..10.0)).collect();
            let x: Vec<f64> = (0..6).map(|_| rng.gen_range(-10.0..10.0)).collect();
            let mut tape = GradTape::<f64>::new();
            let wv = tape.leaf(Tensor2::from_vec(3, 4, w));
            let xv = tape.leaf(Tensor2::from_vec(2, 3, x));
            let y = tape.matmul(xv, wv).unwrap();
            let s = tape.sigmoid(y);
            let t = tape.tanh(y);
            let m = tape.mul_elementwise(s, t).unwrap();
            let r = tape.relu(m);
            let loss = tape.softmax_cross_entropy(r, &[0, 3]).unwrap();
            let grads = tape.backward(loss).unwrap();
            assert!(tape.value(loss).item().is_finite());
            for v in [wv, xv] {
                assert!(grads.require(v).unwrap().data().iter().all(|g| g.is_finite()));
            }
        }
    }

    #[test]
    fn checkpoint_round_trips_bit_identically() {
        let entries = vec![
            (
                "w_in".to_string(),
                Tensor2::<f32>::from_vec(2, 3, vec![1.5, -2.25, 0.1, 7.0, -0.0, 3.25]),
            ),
            ("adam.step".to_string(), Tensor2::<f32>::scalar(17.0)),
        ];
        let mut buf = Vec::new();
        checkpoint::write_checkpoint(&mut buf, &entries).unwrap();
        assert_eq!(&buf[0..4], b"GLCK");
        let back = checkpoint::read_checkpoint(&buf[..]).unwrap();
        assert_eq!(back.len(), entries.len());
        for ((n0, t0), (n1, t1)) in entries.iter().zip(back.iter()) {
            assert_eq!(n0, n1);
            assert_eq!(t0.shape(), t1.shape());
            for (a, b) in t0.data().iter().zip(t1.data().iter()) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn checkpoint_rejects_bad_magic_and_version() {
        let err = checkpoint::read_checkpoint(&b"NOPE\x01\x00\x00\x00"[..]).unwrap_err();
        assert!(matches!(err, CheckpointError::BadMagic));
        let mut buf = Vec::new();
        buf.extend_from_slice(b"GLCK");
        buf.extend_from_slice(&99u32.to_le_bytes());
        let err = checkpoint::read_checkpoint(&buf[..]).unwrap_err();
        assert!(matches!(err, CheckpointError::BadVersion { found: 99, .. }));
    }
}
