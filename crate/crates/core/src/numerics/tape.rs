//! Reverse-mode gradient tape over [`Tensor2`] primitives.
//!
//! Every operation appends one node holding its output value plus whatever
//! the backward rule needs. [`GradTape::backward`] replays nodes in exact
//! reverse recording order and accumulates gradients into a [`GradStore`].
//! A tape is single-threaded; independent tapes may run concurrently.

use super::tensor::{softmax_cross_entropy, softmax_rows, Scalar, Tensor2};
use super::NumericsError;

/// Handle to a value recorded on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Value(usize);

enum Op<F: Scalar> {
    Leaf,
    Matmul(Value, Value),
    Add(Value, Value),
    Sub(Value, Value),
    MulElem(Value, Value),
    AddRowBroadcast(Value, Value),
    OneMinus(Value),
    Scale(Value, F),
    Sigmoid(Value),
    Tanh(Value),
    Relu(Value),
    ConcatCols(Value, Value),
    SoftmaxCrossEntropy {
        logits: Value,
        grad_logits: Tensor2<F>,
    },
}

struct Node<F: Scalar> {
    op: Op<F>,
    value: Tensor2<F>,
}

/// Gradients produced by a backward pass, indexed by [`Value`].
pub struct GradStore<F: Scalar> {
    grads: Vec<Option<Tensor2<F>>>,
}

impl<F: Scalar> GradStore<F> {
    pub fn get(&self, v: Value) -> Option<&Tensor2<F>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient of a parameter that must have been reached by backward.
    pub fn require(&self, v: Value) -> Result<&Tensor2<F>, NumericsError> {
        self.get(v).ok_or(NumericsError::MissingGradient(v.0))
    }
}

pub struct GradTape<F: Scalar> {
    nodes: Vec<Node<F>>,
}

impl<F: Scalar> Default for GradTape<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Scalar> GradTape<F> {
    pub fn new() -> Self {
        GradTape { nodes: Vec::new() }
    }

    /// Drops all recorded nodes but keeps the allocation.
    pub fn clear(&mut self) {
        self.nodes.clear();
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Value) -> &Tensor2<F> {
        &self.nodes[v.0].value
    }

    fn push(&mut self, op: Op<F>, value: Tensor2<F>) -> Value {
        self.nodes.push(Node { op, value });
        Value(self.nodes.len() - 1)
    }

    /// Records an input tensor. Leaves receive gradients like any other
    /// node; parameters and plain inputs are distinguished by the caller.
    pub fn leaf(&mut self, value: Tensor2<F>) -> Value {
        self.push(Op::Leaf, value)
    }

    pub fn matmul(&mut self, a: Value, b: Value) -> Result<Value, NumericsError> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push(Op::Matmul(a, b), out))
    }

    pub fn add(&mut self, a: Value, b: Value) -> Result<Value, NumericsError> {
        let out = self.value(a).add(self.value(b))?;
        Ok(self.push(Op::Add(a, b), out))
    }

    pub fn sub(&mut self, a: Value, b: Value) -> Result<Value, NumericsError> {
        let out = self.value(a).sub(self.value(b))?;
        Ok(self.push(Op::Sub(a, b), out))
    }

    pub fn mul_elementwise(&mut self, a: Value, b: Value) -> Result<Value, NumericsError> {
        let out = self.value(a).mul_elementwise(self.value(b))?;
        Ok(self.push(Op::MulElem(a, b), out))
    }

    /// Adds a 1 x cols bias row to every row of `a`.
    pub fn add_row_broadcast(&mut self, a: Value, bias: Value) -> Result<Value, NumericsError> {
        let out = self.value(a).add_row_broadcast(self.value(bias))?;
        Ok(self.push(Op::AddRowBroadcast(a, bias), out))
    }

    pub fn one_minus(&mut self, a: Value) -> Value {
        let out = self.value(a).one_minus();
        self.push(Op::OneMinus(a), out)
    }

    pub fn scale(&mut self, a: Value, k: F) -> Value {
        let out = self.value(a).scale(k);
        self.push(Op::Scale(a, k), out)
    }

    pub fn sigmoid(&mut self, a: Value) -> Value {
        let out = self.value(a).sigmoid();
        self.push(Op::Sigmoid(a), out)
    }

    pub fn tanh(&mut self, a: Value) -> Value {
        let out = self.value(a).tanh_elem();
        self.push(Op::Tanh(a), out)
    }

    pub fn relu(&mut self, a: Value) -> Value {
        let out = self.value(a).relu();
        self.push(Op::Relu(a), out)
    }

    pub fn concat_cols(&mut self, a: Value, b: Value) -> Result<Value, NumericsError> {
        let out = self.value(a).concat_cols(self.value(b))?;
        Ok(self.push(Op::ConcatCols(a, b), out))
    }

    /// Fused softmax cross-entropy returning a 1x1 loss node. The logits
    /// gradient is precomputed and replayed during backward.
    pub fn softmax_cross_entropy(
        &mut self,
        logits: Value,
        targets: &[usize],
    ) -> Result<Value, NumericsError> {
        let (loss, grad_logits) = softmax_cross_entropy(self.value(logits), targets)?;
        Ok(self.push(
            Op::SoftmaxCrossEntropy {
                logits,
                grad_logits,
            },
            Tensor2::scalar(loss),
        ))
    }

    /// Plain softmax over rows, recorded as an opaque leaf (no backward);
    /// used only on inference paths.
    pub fn softmax_rows_untracked(&self, logits: Value) -> Tensor2<F> {
        softmax_rows(self.value(logits))
    }

    /// Accumulates d(seed)/d(node) for every node recorded at or before
    /// `seed`, walking the tape strictly in reverse.
    pub fn backward(&self, seed: Value) -> Result<GradStore<F>, NumericsError> {
        let seed_val = self.value(seed);
        if seed_val.shape() != (1, 1) {
            return Err(NumericsError::NonScalarSeed(seed_val.shape()));
        }
        let mut grads: Vec<Option<Tensor2<F>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[seed.0] = Some(Tensor2::scalar(F::one()));

        for i in (0..=seed.0).rev() {
            if grads[i].is_none() {
                continue;
            }
            // Leaf gradients are the output of the pass; keep them. All
            // intermediate gradients are consumed and freed here.
            if matches!(self.nodes[i].op, Op::Leaf) {
                continue;
            }
            let g = grads[i].take().expect("checked above");
            match &self.nodes[i].op {
                Op::Leaf => unreachable!(),
                Op::Matmul(a, b) => {
                    let da = g.matmul_nt(self.value(*b))?;
                    let db = self.value(*a).matmul_tn(&g)?;
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g.clone());
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g.scale(-F::one()));
                }
                Op::MulElem(a, b) => {
                    let da = g.mul_elementwise(self.value(*b))?;
                    let db = g.mul_elementwise(self.value(*a))?;
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::AddRowBroadcast(a, bias) => {
                    accumulate(&mut grads, *bias, g.sum_rows());
                    accumulate(&mut grads, *a, g);
                }
                Op::OneMinus(a) => {
                    accumulate(&mut grads, *a, g.scale(-F::one()));
                }
                Op::Scale(a, k) => {
                    accumulate(&mut grads, *a, g.scale(*k));
                }
                Op::Sigmoid(a) => {
                    let y = &self.nodes[i].value;
                    let dy = y.map(|s| s * (F::one() - s));
                    accumulate(&mut grads, *a, g.mul_elementwise(&dy)?);
                }
                Op::Tanh(a) => {
                    let y = &self.nodes[i].value;
                    let dy = y.map(|t| F::one() - t * t);
                    accumulate(&mut grads, *a, g.mul_elementwise(&dy)?);
                }
                Op::Relu(a) => {
                    let x = self.value(*a);
                    let mut dx = g;
                    for (d, &xi) in dx.data_mut().iter_mut().zip(x.data().iter()) {
                        if xi <= F::zero() {
                            *d = F::zero();
                        }
                    }
                    accumulate(&mut grads, *a, dx);
                }
                Op::ConcatCols(a, b) => {
                    let ca = self.value(*a).cols();
                    let da = g.slice_cols(0, ca);
                    let db = g.slice_cols(ca, g.cols());
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::SoftmaxCrossEntropy {
                    logits,
                    grad_logits,
                } => {
                    accumulate(&mut grads, *logits, grad_logits.scale(g.item()));
                }
            }
        }
        Ok(GradStore { grads })
    }
}

fn accumulate<F: Scalar>(grads: &mut [Option<Tensor2<F>>], v: Value, g: Tensor2<F>) {
    if let Some(acc) = &mut grads[v.0] {
        acc.add_assign(&g);
    } else {
        grads[v.0] = Some(g);
    }
}
