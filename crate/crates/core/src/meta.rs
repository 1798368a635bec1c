//! MAML / ANIL meta-training and inference-time adaptation.
//!
//! The inner loop takes `M` full-batch gradient steps on each task's context
//! windows, touching only the layers picked by a [`LayerSelector`]; frozen
//! layers are passed through as the very same graph nodes, so they stay
//! bit-identical. The outer loop differentiates the summed target losses
//! with respect to the pre-adaptation weights, either through the inner
//! loop (second order) or treating each inner gradient as a constant
//! (first order).

use std::time::Instant;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diff::{Graph, NodeId, Tensor};
use crate::error::{Error, Result};
use crate::nssm::{loss_on_graph, windows, ArchitectureSpec, NeuralSsm, ParamKind, Regularization, WindowBatch, WindowSample};
use crate::optim::{Optimizer, OptimizerKind};
use crate::vdp::{partition_with_rng, SplitMode, Trajectory};

/// Which parameter tensors the inner loop adapts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum LayerSelector {
    /// Every layer (MAML).
    #[default]
    All,
    /// Encoder weights and biases (ANIL-SSM).
    EncoderOnly,
    /// `A_z` and `C_z` (ANIL-SSM-R).
    HeadOnly,
    /// An explicit list of parameter names.
    Layers(Vec<String>),
}

impl LayerSelector {
    pub fn mask(&self, model: &NeuralSsm) -> Vec<bool> {
        model
            .params()
            .iter()
            .map(|p| match self {
                LayerSelector::All => true,
                LayerSelector::EncoderOnly => p.kind.is_encoder(),
                LayerSelector::HeadOnly => matches!(p.kind, ParamKind::StateTransition | ParamKind::Output),
                LayerSelector::Layers(names) => names.iter().any(|n| *n == p.name),
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum GradientOrder {
    #[default]
    Second,
    First,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields, default)]
pub struct MetaConfig {
    pub inner_rate: f64,
    pub outer_rate: f64,
    pub inner_steps: usize,
    pub batch_size: usize,
    pub outer_iterations: usize,
    pub selector: LayerSelector,
    pub gradient_order: GradientOrder,
    pub outer_optimizer: OptimizerKind,
    pub context_windows: usize,
    pub target_windows: usize,
    pub l1: f64,
    pub l2: f64,
    pub seed: u64,
}

impl Default for MetaConfig {
    fn default() -> Self {
        MetaConfig {
            inner_rate: 0.01,
            outer_rate: 0.001,
            inner_steps: 10,
            batch_size: 32,
            outer_iterations: 10_000,
            selector: LayerSelector::All,
            gradient_order: GradientOrder::Second,
            outer_optimizer: OptimizerKind::PlainGradient,
            context_windows: 12,
            target_windows: 12,
            l1: 0.0,
            l2: 0.0,
            seed: 0,
        }
    }
}

impl MetaConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Validation(m.into()));
        if !(self.inner_rate > 0.0 && self.inner_rate.is_finite()) {
            return bad("inner-rate must be positive");
        }
        if !(self.outer_rate > 0.0 && self.outer_rate.is_finite()) {
            return bad("outer-rate must be positive");
        }
        if self.inner_steps == 0 {
            return bad("inner-steps must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch-size must be at least 1");
        }
        if self.context_windows == 0 || self.target_windows == 0 {
            return bad("context-windows and target-windows must be at least 1");
        }
        if self.l1 < 0.0 || self.l2 < 0.0 {
            return bad("regularization weights must be non-negative");
        }
        Ok(())
    }

    pub fn regularization(&self) -> Regularization {
        Regularization {
            l1: self.l1,
            l2: self.l2,
        }
    }
}

/// One meta-learning task: a loss on its context set and one on its target
/// set, both recorded on a caller-provided graph.
pub trait MetaTask {
    fn context_loss(&self, g: &mut Graph, params: &[NodeId]) -> Result<NodeId>;
    fn target_loss(&self, g: &mut Graph, params: &[NodeId]) -> Result<NodeId>;
}

/// `steps` gradient steps `ω ← ω − rate·∇ℓ(ω)` on the `trainable` entries.
///
/// With `create_graph` the returned nodes are differentiable functions of
/// `params` through every inner gradient.
pub fn inner_loop(
    g: &mut Graph,
    params: &[NodeId],
    trainable: &[bool],
    rate: f64,
    steps: usize,
    create_graph: bool,
    mut loss: impl FnMut(&mut Graph, &[NodeId]) -> Result<NodeId>,
) -> Result<Vec<NodeId>> {
    if trainable.len() != params.len() {
        return Err(Error::shape("inner_loop mask", &[params.len()], &[trainable.len()]));
    }
    let mut current = params.to_vec();
    for _ in 0..steps {
        let l = loss(g, &current)?;
        let wrt: Vec<NodeId> = current
            .iter()
            .zip(trainable)
            .filter(|(_, &t)| t)
            .map(|(&n, _)| n)
            .collect();
        let grads = g.backward(l, &wrt, create_graph)?.nodes();
        let mut next = grads.into_iter();
        for (node, &t) in current.iter_mut().zip(trainable) {
            if t {
                let step = g.scale(next.next().expect("one gradient per trainable node"), rate)?;
                *node = g.sub(*node, step)?;
            }
        }
    }
    Ok(current)
}

/// Target loss after adaptation and its gradient with respect to the
/// pre-adaptation weights `init`.
pub fn task_meta_gradient<T: MetaTask + ?Sized>(
    task: &T,
    init: &[Tensor],
    trainable: &[bool],
    rate: f64,
    steps: usize,
    order: GradientOrder,
) -> Result<(f64, Vec<Tensor>)> {
    let mut g = Graph::new();
    let params: Vec<NodeId> = init.iter().map(|t| g.param(t.clone())).collect();
    let create_graph = order == GradientOrder::Second;
    let adapted = inner_loop(&mut g, &params, trainable, rate, steps, create_graph, |g, p| {
        task.context_loss(g, p)
    })?;
    let loss = task.target_loss(&mut g, &adapted)?;
    let grads = g.backward(loss, &params, false)?;
    Ok((g.value(loss).item(), grads.tensors(&g)))
}

/// Sum over tasks of the meta-gradients, reduced in task order. Returns the
/// mean target loss alongside.
pub fn meta_gradient<T: MetaTask>(
    tasks: &[T],
    init: &[Tensor],
    trainable: &[bool],
    rate: f64,
    steps: usize,
    order: GradientOrder,
) -> Result<(f64, Vec<Tensor>)> {
    if tasks.is_empty() {
        return Err(Error::Empty("task batch"));
    }
    let mut total_loss = 0.0;
    let mut sum: Vec<Tensor> = init.iter().map(|t| Tensor::zeros(t.shape())).collect();
    for (b, task) in tasks.iter().enumerate() {
        let (loss, grads) = task_meta_gradient(task, init, trainable, rate, steps, order).map_err(|e| Error::Task {
            task: b,
            source: Box::new(e),
        })?;
        total_loss += loss;
        for (s, gr) in sum.iter_mut().zip(&grads) {
            *s = s.add(gr)?;
        }
    }
    Ok((total_loss / tasks.len() as f64, sum))
}

/// A source trajectory's context and target windows.
#[derive(Debug, Clone)]
pub struct NssmTask {
    pub spec: ArchitectureSpec,
    pub context: WindowBatch,
    pub target: WindowBatch,
    pub reg: Regularization,
}

impl NssmTask {
    pub fn new(spec: &ArchitectureSpec, context: &[WindowSample], target: &[WindowSample], reg: Regularization) -> Result<Self> {
        Ok(NssmTask {
            spec: spec.clone(),
            context: WindowBatch::new(context)?,
            target: WindowBatch::new(target)?,
            reg,
        })
    }
}

impl MetaTask for NssmTask {
    fn context_loss(&self, g: &mut Graph, params: &[NodeId]) -> Result<NodeId> {
        loss_on_graph(g, &self.spec, params, &self.context, self.reg)
    }

    fn target_loss(&self, g: &mut Graph, params: &[NodeId]) -> Result<NodeId> {
        loss_on_graph(g, &self.spec, params, &self.target, self.reg)
    }
}

/// Weights after inner-loop adaptation, plus the context loss at every
/// iterate (`steps + 1` entries, the last one after the final update).
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptedWeights {
    pub initial: Vec<Tensor>,
    pub tensors: Vec<Tensor>,
    pub context_losses: Vec<f64>,
}

impl AdaptedWeights {
    pub fn to_model(&self, spec: &ArchitectureSpec) -> Result<NeuralSsm> {
        NeuralSsm::from_tensors(spec, self.tensors.clone())
    }
}

/// Plain first-order adaptation of `model` on `context`.
pub fn adapt(
    model: &NeuralSsm,
    context: &[WindowSample],
    steps: usize,
    rate: f64,
    selector: &LayerSelector,
    reg: Regularization,
) -> Result<AdaptedWeights> {
    let batch = WindowBatch::new(context).map_err(|e| match e {
        Error::Empty(_) => Error::Empty("adaptation context"),
        e => e,
    })?;
    let spec = model.spec();
    let mask = selector.mask(model);
    let initial = model.tensors();
    let mut tensors = initial.clone();
    let mut context_losses = Vec::with_capacity(steps + 1);
    for step in 0..=steps {
        let mut g = Graph::new();
        let nodes: Vec<NodeId> = tensors
            .iter()
            .zip(&mask)
            .map(|(t, &m)| g.leaf(t.clone(), m))
            .collect();
        let loss = loss_on_graph(&mut g, spec, &nodes, &batch, reg)?;
        context_losses.push(g.value(loss).item());
        if step == steps {
            break;
        }
        let wrt: Vec<NodeId> = nodes.iter().zip(&mask).filter(|(_, &m)| m).map(|(&n, _)| n).collect();
        let grads = g.backward(loss, &wrt, false)?.tensors(&g);
        let mut next = grads.into_iter();
        for (t, &m) in tensors.iter_mut().zip(&mask) {
            if m {
                let grad = next.next().expect("one gradient per trainable tensor");
                *t = t.sub(&grad.scale(rate)?)?;
            }
        }
    }
    Ok(AdaptedWeights {
        initial,
        tensors,
        context_losses,
    })
}

/// `M` inner-loop steps of the configured selector at the inner rate.
pub fn inner_adapt(model: &NeuralSsm, context: &[WindowSample], config: &MetaConfig) -> Result<AdaptedWeights> {
    adapt(
        model,
        context,
        config.inner_steps,
        config.inner_rate,
        &config.selector,
        config.regularization(),
    )
}

/// Online adaptation to a query system starting from meta-trained weights.
/// Always first order.
pub fn adapt_inference(model: &NeuralSsm, query_context: &[WindowSample], steps: usize, config: &MetaConfig) -> Result<AdaptedWeights> {
    adapt(
        model,
        query_context,
        steps,
        config.inner_rate,
        &config.selector,
        config.regularization(),
    )
}

/// One outer update of `model` from a batch of tasks; returns the mean
/// pre-update target loss.
pub fn outer_step<T: MetaTask>(model: &mut NeuralSsm, tasks: &[T], config: &MetaConfig, optimizer: &mut Optimizer) -> Result<f64> {
    let init = model.tensors();
    let mask = config.selector.mask(model);
    let (loss, grads) = meta_gradient(
        tasks,
        &init,
        &mask,
        config.inner_rate,
        config.inner_steps,
        config.gradient_order,
    )?;
    let mut params = init;
    optimizer.step(&mut params, &grads)?;
    model.set_tensors(params)?;
    Ok(loss)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    pub iteration: usize,
    pub outer_loss: f64,
    pub wall_time_ms: u128,
}

#[derive(Debug, Clone)]
pub struct MetaRun {
    pub model: NeuralSsm,
    pub trace: Vec<TraceEntry>,
    pub optimizer: Optimizer,
}

/// RNG for one outer iteration, independent of how many iterations ran
/// before it so that resumed runs draw the same batches.
fn iteration_rng(seed: u64, iteration: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(iteration as u64 + 1);
    rng
}

/// Samples a batch of tasks for `iteration`: `B` distinct trajectories,
/// each split independently into context and target segments.
pub fn sample_tasks(source: &[Trajectory], spec: &ArchitectureSpec, config: &MetaConfig, iteration: usize) -> Result<Vec<NssmTask>> {
    if config.batch_size > source.len() {
        return Err(Error::Validation(format!(
            "batch size {} exceeds the {} source trajectories",
            config.batch_size,
            source.len()
        )));
    }
    let mut rng = iteration_rng(config.seed, iteration);
    let picks = index::sample(&mut rng, source.len(), config.batch_size).into_vec();
    picks
        .into_iter()
        .map(|i| {
            let split = partition_with_rng(
                &source[i],
                SplitMode::Train,
                config.context_windows,
                config.target_windows,
                spec.history,
                spec.horizon,
                &mut rng,
            )?;
            let ctx = windows(&split.context.outputs, spec.history, spec.horizon)?;
            let tgt = windows(&split.target.outputs, spec.history, spec.horizon)?;
            NssmTask::new(spec, &ctx, &tgt, config.regularization())
        })
        .enumerate()
        .map(|(b, r)| r.map_err(|e| Error::Task { task: b, source: Box::new(e) }))
        .collect()
}

/// Meta-trains a freshly initialised model (seeded by `config.seed`).
pub fn meta_train(source: &[Trajectory], spec: &ArchitectureSpec, config: &MetaConfig) -> Result<MetaRun> {
    let model = NeuralSsm::init(spec, config.seed)?;
    let optimizer = Optimizer::new(config.outer_optimizer, config.outer_rate, &model.tensors());
    meta_train_from(model, optimizer, source, config, 0, |_, _, _| Ok(()))
}

/// Continues meta-training from `start_iteration` up to
/// `config.outer_iterations`, calling `on_iteration` with the updated model
/// and optimizer after each step. An error from the callback stops training.
pub fn meta_train_from(
    mut model: NeuralSsm,
    mut optimizer: Optimizer,
    source: &[Trajectory],
    config: &MetaConfig,
    start_iteration: usize,
    mut on_iteration: impl FnMut(&TraceEntry, &NeuralSsm, &Optimizer) -> Result<()>,
) -> Result<MetaRun> {
    config.validate()?;
    if source.is_empty() {
        return Err(Error::Empty("source dataset"));
    }
    let spec = model.spec().clone();
    let started = Instant::now();
    let mut trace = Vec::new();
    for iteration in start_iteration..config.outer_iterations {
        let tasks = sample_tasks(source, &spec, config, iteration)?;
        let outer_loss = outer_step(&mut model, &tasks, config, &mut optimizer)?;
        let entry = TraceEntry {
            iteration,
            outer_loss,
            wall_time_ms: started.elapsed().as_millis(),
        };
        on_iteration(&entry, &model, &optimizer)?;
        trace.push(entry);
    }
    Ok(MetaRun {
        model,
        trace,
        optimizer,
    })
}

pub fn trace_csv(trace: &[TraceEntry], header: bool) -> String {
    let mut out = String::new();
    if header {
        out.push_str("iteration,outer_loss,wall_time_ms\n");
    }
    for e in trace {
        out.push_str(&format!("{},{:e},{}\n", e.iteration, e.outer_loss, e.wall_time_ms));
    }
    out
}
