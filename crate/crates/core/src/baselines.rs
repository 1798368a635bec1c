//! Single-loop comparison methods: supervised on query data only (SSM),
//! supervised on pooled source and query data (All-NoAdapt-SSM), and
//! supervised on source followed by few-step adaptation (Xfer-SSM).

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::meta::{adapt, LayerSelector, MetaConfig, TraceEntry};
use crate::nssm::{windows, ArchitectureSpec, NeuralSsm, Regularization, WindowBatch, WindowSample};
use crate::optim::{Optimizer, OptimizerKind};
use crate::vdp::State;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineMethod {
    Ssm,
    AllNoadapt,
    Xfer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct BaselineConfig {
    pub method: BaselineMethod,
    pub learning_rate: f64,
    pub training_steps: usize,
    /// Online steps for Xfer-SSM; zero for the other methods.
    pub adaptation_steps: usize,
    /// Step size of the online adaptation.
    pub adaptation_rate: f64,
    /// Windows per mini-batch.
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    #[serde(default)]
    pub l1: f64,
    #[serde(default)]
    pub l2: f64,
    pub seed: u64,
}

impl BaselineConfig {
    /// Budget parity with a meta-training configuration: the same rate,
    /// optimizer and per-step data volume (`B × target-windows` windows);
    /// SSM gets ten times the steps; Xfer gets `adaptation_steps` online
    /// steps at the inner rate.
    pub fn matching(method: BaselineMethod, meta: &MetaConfig, adaptation_steps: usize) -> Self {
        let steps = match method {
            BaselineMethod::Ssm => 10 * meta.outer_iterations,
            _ => meta.outer_iterations,
        };
        BaselineConfig {
            method,
            learning_rate: meta.outer_rate,
            training_steps: steps,
            adaptation_steps: if method == BaselineMethod::Xfer { adaptation_steps } else { 0 },
            adaptation_rate: meta.inner_rate,
            batch_size: meta.batch_size * meta.target_windows,
            optimizer: meta.outer_optimizer,
            l1: meta.l1,
            l2: meta.l2,
            seed: meta.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Validation("learning-rate must be positive".into()));
        }
        if !(self.adaptation_rate > 0.0 && self.adaptation_rate.is_finite()) {
            return Err(Error::Validation("adaptation-rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Validation("batch-size must be at least 1".into()));
        }
        if self.method != BaselineMethod::Xfer && self.adaptation_steps != 0 {
            return Err(Error::Validation(format!(
                "{:?} does not adapt online; adaptation-steps must be 0",
                self.method
            )));
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

#[derive(Debug, Clone)]
pub struct SupervisedRun {
    pub model: NeuralSsm,
    pub trace: Vec<TraceEntry>,
}

/// Mini-batch training on windows drawn uniformly (with replacement) from
/// every window of every series.
pub fn train_supervised(series: &[&[State]], spec: &ArchitectureSpec, config: &BaselineConfig) -> Result<SupervisedRun> {
    train_supervised_from(NeuralSsm::init(spec, config.seed)?, series, config)
}

/// [`train_supervised`] starting from given weights.
pub fn train_supervised_from(model: NeuralSsm, series: &[&[State]], config: &BaselineConfig) -> Result<SupervisedRun> {
    config.validate()?;
    let spec = model.spec().clone();
    let mut pool: Vec<WindowSample> = Vec::new();
    for s in series {
        pool.extend(windows(s, spec.history, spec.horizon)?);
    }
    if pool.is_empty() {
        return Err(Error::Empty("training data"));
    }
    train_on_pool(model, &pool, config)
}

fn train_on_pool(mut model: NeuralSsm, pool: &[WindowSample], config: &BaselineConfig) -> Result<SupervisedRun> {
    let mut optimizer = Optimizer::new(config.optimizer, config.learning_rate, &model.tensors());
    let reg = config.regularization();
    let started = Instant::now();
    let mut trace = Vec::with_capacity(config.training_steps);
    for step in 0..config.training_steps {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(step as u64 + 1);
        let batch: Vec<WindowSample> = (0..config.batch_size)
            .map(|_| pool[rng.gen_range(0..pool.len())].clone())
            .collect();
        let (loss, grads) = model.loss_and_grad(&WindowBatch::new(&batch)?, reg)?;
        let mut params = model.tensors();
        optimizer.step(&mut params, &grads)?;
        model.set_tensors(params)?;
        trace.push(TraceEntry {
            iteration: step,
            outer_loss: loss,
            wall_time_ms: started.elapsed().as_millis(),
        });
    }
    Ok(SupervisedRun { model, trace })
}

/// Supervised training on all source trajectories, then
/// `adaptation_steps` all-layer gradient steps on the query context.
pub fn transfer_pipeline(
    source: &[&[State]],
    query_context: &[WindowSample],
    spec: &ArchitectureSpec,
    config: &BaselineConfig,
) -> Result<NeuralSsm> {
    let trained = train_supervised(source, spec, config)?.model;
    if config.adaptation_steps == 0 {
        return Ok(trained);
    }
    adapt(
        &trained,
        query_context,
        config.adaptation_steps,
        config.adaptation_rate,
        &LayerSelector::All,
        config.regularization(),
    )?
    .to_model(spec)
}
