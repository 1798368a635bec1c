//! Deep encoder neural state-space model.
//!
//! An encoder MLP lifts a window of `H` past outputs to a latent state
//! `z_t`, a bias-free square map advances it (`z_{t+1} = A_z z_t`) and a
//! bias-free output map decodes it (`ŷ_t = C_z z_t`). Multi-step predictions
//! never feed outputs back into the encoder.

mod checkpoint;
mod window;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::diff::{Graph, NodeId, Tensor};
use crate::error::{Error, Result};

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_VERSION};
pub use window::{windows, Block, WindowBatch, WindowSample};

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields, default)]
pub struct ArchitectureSpec {
    pub history: usize,
    pub horizon: usize,
    pub n_y: usize,
    pub n_z: usize,
    pub hidden: Vec<usize>,
}

impl Default for ArchitectureSpec {
    fn default() -> Self {
        ArchitectureSpec {
            history: 10,
            horizon: 5,
            n_y: 2,
            n_z: 128,
            hidden: vec![128; 5],
        }
    }
}

impl ArchitectureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.history == 0 || self.horizon == 0 || self.n_y == 0 || self.n_z == 0 {
            return Err(Error::Validation(
                "history, horizon, n_y and n_z must all be at least 1".into(),
            ));
        }
        if self.hidden.iter().any(|&w| w == 0) {
            return Err(Error::Validation("hidden layer widths must be positive".into()));
        }
        Ok(())
    }

    pub fn input_width(&self) -> usize {
        self.history * self.n_y
    }

    /// Consecutive samples needed for `k` loss windows.
    pub fn points_for_windows(&self, k: usize) -> usize {
        k + self.history + self.horizon - 1
    }

    /// `(fan_in, fan_out)` of each encoder affine layer.
    pub fn encoder_dims(&self) -> Vec<(usize, usize)> {
        let mut widths = vec![self.input_width()];
        widths.extend(&self.hidden);
        widths.push(self.n_z);
        widths.windows(2).map(|w| (w[0], w[1])).collect()
    }

    /// Name, role and shape of every parameter tensor, in storage order.
    pub fn layout(&self) -> Vec<(String, ParamKind, Vec<usize>)> {
        let mut out = Vec::new();
        for (l, (fan_in, fan_out)) in self.encoder_dims().into_iter().enumerate() {
            out.push((format!("enc.{l}.weight"), ParamKind::EncoderWeight, vec![fan_out, fan_in]));
            out.push((format!("enc.{l}.bias"), ParamKind::EncoderBias, vec![fan_out, 1]));
        }
        out.push(("a_z".into(), ParamKind::StateTransition, vec![self.n_z, self.n_z]));
        out.push(("c_z".into(), ParamKind::Output, vec![self.n_y, self.n_z]));
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    EncoderWeight,
    EncoderBias,
    StateTransition,
    Output,
}

impl ParamKind {
    pub fn is_encoder(self) -> bool {
        matches!(self, ParamKind::EncoderWeight | ParamKind::EncoderBias)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub kind: ParamKind,
    pub value: Tensor,
}

/// Optional penalties `l1·‖A_z‖₁ + l2·‖A_z‖₂²` added to the loss.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Regularization {
    pub l1: f64,
    pub l2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeuralSsm {
    spec: ArchitectureSpec,
    params: Vec<Parameter>,
}

impl NeuralSsm {
    /// Xavier-uniform weights (including `A_z` and `C_z`), zero biases.
    pub fn init(spec: &ArchitectureSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = spec
            .layout()
            .into_iter()
            .map(|(name, kind, shape)| {
                let value = if kind == ParamKind::EncoderBias {
                    Tensor::zeros(&shape)
                } else {
                    let (fan_out, fan_in) = (shape[0], shape[1]);
                    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
                    let data = (0..fan_out * fan_in).map(|_| rng.gen_range(-a..a)).collect();
                    Tensor::new(shape, data).expect("xavier sample is finite")
                };
                Parameter { name, kind, value }
            })
            .collect();
        Ok(NeuralSsm {
            spec: spec.clone(),
            params,
        })
    }

    /// Builds a model from explicit tensors in [`ArchitectureSpec::layout`] order.
    pub fn from_tensors(spec: &ArchitectureSpec, tensors: Vec<Tensor>) -> Result<Self> {
        spec.validate()?;
        let layout = spec.layout();
        if layout.len() != tensors.len() {
            return Err(Error::shape("from_tensors", &[layout.len()], &[tensors.len()]));
        }
        let params = layout
            .into_iter()
            .zip(tensors)
            .map(|((name, kind, shape), value)| {
                if value.shape() != shape.as_slice() {
                    return Err(Error::shape("from_tensors", &shape, value.shape()));
                }
                Ok(Parameter { name, kind, value })
            })
            .collect::<Result<_>>()?;
        Ok(NeuralSsm {
            spec: spec.clone(),
            params,
        })
    }

    pub fn spec(&self) -> &ArchitectureSpec {
        &self.spec
    }

    pub fn params(&self) -> &[Parameter] {
        &self.params
    }

    pub fn tensors(&self) -> Vec<Tensor> {
        self.params.iter().map(|p| p.value.clone()).collect()
    }

    pub fn kinds(&self) -> Vec<ParamKind> {
        self.params.iter().map(|p| p.kind).collect()
    }

    pub fn set_tensors(&mut self, tensors: Vec<Tensor>) -> Result<()> {
        *self = Self::from_tensors(&self.spec, tensors)?;
        Ok(())
    }

    pub fn param(&self, name: &str) -> Option<&Tensor> {
        self.params.iter().find(|p| p.name == name).map(|p| &p.value)
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.params.iter_mut().find(|p| p.name == name).map(|p| &mut p.value)
    }

    pub fn a_z(&self) -> &Tensor {
        &self.params[self.params.len() - 2].value
    }

    pub fn c_z(&self) -> &Tensor {
        &self.params[self.params.len() - 1].value
    }

    fn check_history(&self, history: &Block) -> Result<()> {
        if history.rows < self.spec.history || history.cols != self.spec.n_y {
            return Err(Error::shape(
                "history",
                &[self.spec.history, self.spec.n_y],
                &[history.rows, history.cols],
            ));
        }
        Ok(())
    }

    /// Latent encoding of an `H × n_y` history block.
    pub fn encode(&self, history: &Block) -> Result<Tensor> {
        if history.rows != self.spec.history {
            return Err(Error::shape(
                "encode",
                &[self.spec.history, self.spec.n_y],
                &[history.rows, history.cols],
            ));
        }
        self.check_history(history)?;
        let mut h = Tensor::new(vec![self.spec.input_width(), 1], history.data.clone())?;
        let n_layers = self.spec.encoder_dims().len();
        for l in 0..n_layers {
            let w = &self.params[2 * l].value;
            let b = &self.params[2 * l + 1].value;
            let pre = w.matmul(&h)?.add(b)?;
            h = if l + 1 < n_layers { pre.relu()? } else { pre };
        }
        h.reshape(&[self.spec.n_z])
    }

    /// `z_1 … z_steps` with `z_{k+1} = A_z z_k`.
    pub fn latent_rollout(&self, z0: &Tensor, steps: usize) -> Result<Vec<Tensor>> {
        let n_z = self.spec.n_z;
        if z0.numel() != n_z {
            return Err(Error::shape("latent_rollout", &[n_z], z0.shape()));
        }
        let a = self.a_z();
        let mut z = z0.reshape(&[n_z, 1])?;
        let mut out = Vec::with_capacity(steps);
        for _ in 0..steps {
            z = a.matmul(&z)?;
            out.push(z.reshape(&[n_z])?);
        }
        Ok(out)
    }

    /// Decodes `horizon` outputs from one encoding: row `k` is `C_z A_z^k z`.
    fn decode_from(&self, z: &Tensor, horizon: usize) -> Result<Block> {
        let (n_z, n_y) = (self.spec.n_z, self.spec.n_y);
        let a = self.a_z().data();
        let c = self.c_z().data();
        let mut z = z.data().to_vec();
        let mut next = vec![0.0; n_z];
        let mut out = Vec::with_capacity(horizon * n_y);
        for k in 0..horizon {
            if k > 0 {
                for (i, nz) in next.iter_mut().enumerate() {
                    *nz = a[i * n_z..(i + 1) * n_z].iter().zip(&z).map(|(p, q)| p * q).sum();
                }
                std::mem::swap(&mut z, &mut next);
            }
            for r in 0..n_y {
                out.push(c[r * n_z..(r + 1) * n_z].iter().zip(&z).map(|(p, q)| p * q).sum());
            }
        }
        if out.iter().any(|v: &f64| !v.is_finite()) {
            return Err(Error::Numeric { op: "rollout" });
        }
        Block::new(horizon, n_y, out)
    }

    /// `ŷ_t … ŷ_{t+H_p−1}` for one history window; `ŷ_t` is decoded from `z_t`.
    pub fn predict(&self, history: &Block) -> Result<Block> {
        let z = self.encode(history)?;
        self.decode_from(&z, self.spec.horizon)
    }

    /// Encodes the last `H` rows of `context` once and decodes `horizon`
    /// outputs by repeated application of `A_z`.
    pub fn rollout_predict(&self, context: &Block, horizon: usize) -> Result<Block> {
        if context.rows < self.spec.history {
            return Err(Error::Sizing {
                what: "rollout context".into(),
                required: self.spec.history,
                available: context.rows,
            });
        }
        self.check_history(context)?;
        let start = context.rows - self.spec.history;
        let tail = Block::new(
            self.spec.history,
            context.cols,
            context.data[start * context.cols..].to_vec(),
        )?;
        if horizon == 0 {
            return Ok(Block::empty(self.spec.n_y));
        }
        let z = self.encode(&tail)?;
        self.decode_from(&z, horizon)
    }

    /// Multi-step MSE over a batch of windows, without gradients.
    pub fn ssm_loss(&self, samples: &[WindowSample], reg: Regularization) -> Result<f64> {
        let batch = WindowBatch::new(samples)?;
        let mut g = Graph::new();
        let nodes: Vec<NodeId> = self.params.iter().map(|p| g.constant(p.value.clone())).collect();
        let loss = loss_on_graph(&mut g, &self.spec, &nodes, &batch, reg)?;
        Ok(g.value(loss).item())
    }

    /// Loss and its gradient with respect to every parameter tensor.
    pub fn loss_and_grad(&self, batch: &WindowBatch, reg: Regularization) -> Result<(f64, Vec<Tensor>)> {
        let mut g = Graph::new();
        let nodes: Vec<NodeId> = self.params.iter().map(|p| g.param(p.value.clone())).collect();
        let loss = loss_on_graph(&mut g, &self.spec, &nodes, batch, reg)?;
        let grads = g.backward(loss, &nodes, false)?;
        Ok((g.value(loss).item(), grads.tensors(&g)))
    }
}

/// Records the batched encoder forward pass, returning the `n_z × N` latent.
pub fn encode_on_graph(g: &mut Graph, spec: &ArchitectureSpec, params: &[NodeId], batch: &WindowBatch) -> Result<NodeId> {
    if batch.history.shape()[0] != spec.input_width() {
        return Err(Error::shape(
            "encode",
            &[spec.input_width()],
            &batch.history.shape()[..1],
        ));
    }
    let ones = g.constant(batch.ones.clone());
    let mut h = g.constant(batch.history.clone());
    let n_layers = spec.encoder_dims().len();
    for l in 0..n_layers {
        let wx = g.matmul(params[2 * l], h)?;
        let b = g.matmul(params[2 * l + 1], ones)?;
        let pre = g.add(wx, b)?;
        h = if l + 1 < n_layers { g.relu(pre)? } else { pre };
    }
    Ok(h)
}

/// Records the multi-step loss
/// `mean_samples (1/H_p) Σ_k ‖y_{t+k} − C_z A_z^k z_t‖²` plus any penalties.
pub fn loss_on_graph(
    g: &mut Graph,
    spec: &ArchitectureSpec,
    params: &[NodeId],
    batch: &WindowBatch,
    reg: Regularization,
) -> Result<NodeId> {
    if params.len() != spec.layout().len() {
        return Err(Error::shape("loss params", &[spec.layout().len()], &[params.len()]));
    }
    if batch.horizon() != spec.horizon {
        return Err(Error::shape("loss horizon", &[spec.horizon], &[batch.horizon()]));
    }
    let a = params[params.len() - 2];
    let c = params[params.len() - 1];
    let mut z = encode_on_graph(g, spec, params, batch)?;
    let mut total: Option<NodeId> = None;
    for (k, future) in batch.futures.iter().enumerate() {
        if k > 0 {
            z = g.matmul(a, z)?;
        }
        let y_hat = g.matmul(c, z)?;
        let y = g.constant(future.clone());
        let diff = g.sub(y_hat, y)?;
        let sq = g.square(diff)?;
        let s = g.sum(sq)?;
        total = Some(match total {
            Some(t) => g.add(t, s)?,
            None => s,
        });
    }
    let total = total.ok_or(Error::Empty("prediction horizon"))?;
    let mut loss = g.scale(total, 1.0 / (spec.horizon * batch.len()) as f64)?;
    if reg.l1 != 0.0 {
        // |A| = relu(A) + relu(−A)
        let pos = g.relu(a)?;
        let neg_a = g.scale(a, -1.0)?;
        let neg = g.relu(neg_a)?;
        let abs = g.add(pos, neg)?;
        let l1 = g.sum(abs)?;
        let l1 = g.scale(l1, reg.l1)?;
        loss = g.add(loss, l1)?;
    }
    if reg.l2 != 0.0 {
        let sq = g.square(a)?;
        let l2 = g.sum(sq)?;
        let l2 = g.scale(l2, reg.l2)?;
        loss = g.add(loss, l2)?;
    }
    Ok(loss)
}
