//! Sum-squared-error metrics, long-horizon rollout evaluation and the
//! context-size × adaptation-steps grid.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::meta::{adapt, LayerSelector};
use crate::nssm::{windows, Block, NeuralSsm, Regularization};
use crate::provenance::ConfigDigest;
use crate::vdp::{generate_query, Trajectory, QUERY_THETA};

/// `Σ_t ‖χ_t − χ'_t‖²`.
pub fn sse(predicted: &Block, truth: &Block) -> Result<f64> {
    Ok(sse_curve(predicted, truth)?.total())
}

/// Running sum of squared errors, one entry per time step.
#[derive(Debug, Clone, PartialEq)]
pub struct SseCurve {
    pub cumulative: Vec<f64>,
}

impl SseCurve {
    pub fn total(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }
}

pub fn sse_curve(predicted: &Block, truth: &Block) -> Result<SseCurve> {
    if (predicted.rows, predicted.cols) != (truth.rows, truth.cols) {
        return Err(Error::shape(
            "sse",
            &[predicted.rows, predicted.cols],
            &[truth.rows, truth.cols],
        ));
    }
    let mut acc = 0.0;
    let cumulative = (0..truth.rows)
        .map(|t| {
            for (p, q) in predicted.row(t).iter().zip(truth.row(t)) {
                acc += (p - q) * (p - q);
            }
            acc
        })
        .collect();
    Ok(SseCurve { cumulative })
}

/// Lower median: the `⌊(n−1)/2⌋`-th order statistic. Infinite entries sort
/// last.
pub fn median_lower(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("median input"));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v[(v.len() - 1) / 2])
}

/// How a model is adapted online before a rollout.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptationPolicy {
    pub selector: LayerSelector,
    pub steps: usize,
    pub rate: f64,
    pub reg: Regularization,
}

impl AdaptationPolicy {
    pub fn none() -> Self {
        AdaptationPolicy {
            selector: LayerSelector::All,
            steps: 0,
            rate: 0.01,
            reg: Regularization::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RolloutEval {
    pub curve: SseCurve,
    pub predicted: Block,
    pub truth: Block,
    /// Context loss along the adaptation (empty without adaptation).
    pub context_losses: Vec<f64>,
}

/// Adapts on the first `context_points` samples of `query` (if the policy
/// asks for steps), then rolls out `horizon` steps from the context
/// boundary and scores them against the trajectory.
pub fn evaluate_rollout(
    model: &NeuralSsm,
    policy: &AdaptationPolicy,
    query: &Trajectory,
    context_points: usize,
    horizon: usize,
) -> Result<RolloutEval> {
    let spec = model.spec();
    let required = context_points + horizon;
    if query.len() < required {
        return Err(Error::Sizing {
            what: "rollout evaluation".into(),
            required,
            available: query.len(),
        });
    }
    let context = &query.outputs[..context_points];
    let (adapted, context_losses) = if policy.steps > 0 {
        let ctx = windows(context, spec.history, spec.horizon)?;
        let a = adapt(model, &ctx, policy.steps, policy.rate, &policy.selector, policy.reg)?;
        (a.to_model(spec)?, a.context_losses)
    } else {
        (model.clone(), Vec::new())
    };
    let predicted = adapted.rollout_predict(&Block::from_rows(context)?, horizon)?;
    let truth = Block::from_rows(&query.outputs[context_points..required])?;
    let truth = if horizon == 0 { Block::empty(spec.n_y) } else { truth };
    let curve = sse_curve(&predicted, &truth)?;
    Ok(RolloutEval {
        curve,
        predicted,
        truth,
        context_losses,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields, default)]
pub struct GridSpec {
    /// Raw context points used for adaptation.
    pub context_sizes: Vec<usize>,
    pub adaptation_steps: Vec<usize>,
    pub query_runs: usize,
    pub horizon: usize,
    pub theta: f64,
    pub x0_range: [f64; 2],
    pub seed: u64,
    /// Method names evaluated by the grid command.
    pub methods: Vec<String>,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            context_sizes: vec![200, 500, 1000],
            adaptation_steps: vec![10, 40, 100],
            query_runs: 100,
            horizon: 3000,
            theta: QUERY_THETA,
            x0_range: [-1.0, 1.0],
            seed: 0,
            methods: vec!["maml".into(), "anil".into(), "anil-r".into()],
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.context_sizes.is_empty() || self.adaptation_steps.is_empty() {
            return Err(Error::Validation("grid needs at least one context size and step count".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Validation("grid method list is empty".into()));
        }
        if self.query_runs == 0 {
            return Err(Error::Validation("query-runs must be at least 1".into()));
        }
        if !(self.x0_range[0] <= self.x0_range[1]) {
            return Err(Error::Validation("x0-range must have low <= high".into()));
        }
        Ok(())
    }

    /// Query trajectory of run `run`: θ fixed, initial state drawn uniformly
    /// from `x0_range²`, long enough for the largest context plus horizon.
    pub fn query(&self, run: usize) -> Result<Trajectory> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(run as u64 + 1);
        let [lo, hi] = self.x0_range;
        let x0 = [lo + (hi - lo) * rng.gen::<f64>(), lo + (hi - lo) * rng.gen::<f64>()];
        let points = self.context_sizes.iter().max().copied().unwrap_or(0) + self.horizon;
        generate_query(self.theta, x0, points.saturating_sub(1) as f64 * crate::vdp::DEFAULT_DT)
    }
}

/// A trained model and the layers it adapts online.
#[derive(Debug, Clone)]
pub struct GridMethod {
    pub name: String,
    pub model: NeuralSsm,
    pub selector: LayerSelector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub method: String,
    pub context_size: usize,
    pub adapt_steps: usize,
    pub median_sse: f64,
    pub per_run: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SseReport {
    pub rows: Vec<ReportRow>,
}

/// Every `(method, context size, steps)` cell over `grid.query_runs`
/// queries. A run whose adaptation or rollout blows up scores `+inf`.
pub fn run_grid(methods: &[GridMethod], grid: &GridSpec, rate: f64, reg: Regularization) -> Result<SseReport> {
    grid.validate()?;
    if methods.is_empty() {
        return Err(Error::Validation("no methods to evaluate".into()));
    }
    let queries = (0..grid.query_runs).map(|r| grid.query(r)).collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for m in methods {
        for &size in &grid.context_sizes {
            for &steps in &grid.adaptation_steps {
                let policy = AdaptationPolicy {
                    selector: m.selector.clone(),
                    steps,
                    rate,
                    reg,
                };
                let per_run = queries
                    .iter()
                    .map(|q| match evaluate_rollout(&m.model, &policy, q, size, grid.horizon) {
                        Ok(e) => Ok(e.curve.total()),
                        Err(Error::Numeric { .. }) => Ok(f64::INFINITY),
                        Err(e) => Err(e),
                    })
                    .collect::<Result<Vec<_>>>()?;
                rows.push(ReportRow {
                    method: m.name.clone(),
                    context_size: size,
                    adapt_steps: steps,
                    median_sse: median_lower(&per_run)?,
                    per_run,
                });
            }
        }
    }
    Ok(SseReport { rows })
}

impl SseReport {
    pub fn row(&self, method: &str, context_size: usize, adapt_steps: usize) -> Option<&ReportRow> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.context_size == context_size && r.adapt_steps == adapt_steps)
    }

    /// Long format: one line per run.
    pub fn to_csv(&self, digest: Option<ConfigDigest>) -> String {
        let mut out = String::new();
        if let Some(d) = digest {
            out.push_str(&d.comment_line());
        }
        out.push_str("method,context_size,adapt_steps,median_sse,run_id,sse\n");
        for r in &self.rows {
            for (id, v) in r.per_run.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{},{},{},{:e},{},{:e}",
                    r.method, r.context_size, r.adapt_steps, r.median_sse, id, v
                );
            }
        }
        out
    }

    /// Aligned table of medians, sizes/steps down, methods across.
    pub fn to_table(&self, digest: Option<ConfigDigest>) -> String {
        let mut methods: Vec<&str> = Vec::new();
        let mut cells: Vec<(usize, usize)> = Vec::new();
        for r in &self.rows {
            if !methods.contains(&r.method.as_str()) {
                methods.push(&r.method);
            }
            if !cells.contains(&(r.context_size, r.adapt_steps)) {
                cells.push((r.context_size, r.adapt_steps));
            }
        }
        let mut out = String::new();
        if let Some(d) = digest {
            out.push_str(&d.comment_line());
        }
        let _ = write!(out, "{:<12}", "Size/Steps");
        for m in &methods {
            let _ = write!(out, " {m:>14}");
        }
        out.push('\n');
        for (size, steps) in cells {
            let _ = write!(out, "{:<12}", format!("{size}/{steps}"));
            for m in &methods {
                match self.row(m, size, steps) {
                    Some(r) => {
                        let _ = write!(out, " {:>14.3e}", r.median_sse);
                    }
                    None => {
                        let _ = write!(out, " {:>14}", "-");
                    }
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Per-step cumulative SSE curves side by side: `step,<name>,…`.
pub fn curves_csv(curves: &[(String, SseCurve)], digest: Option<ConfigDigest>) -> String {
    let mut out = String::new();
    if let Some(d) = digest {
        out.push_str(&d.comment_line());
    }
    out.push_str("step");
    for (name, _) in curves {
        let _ = write!(out, ",{name}");
    }
    out.push('\n');
    let len = curves.iter().map(|(_, c)| c.cumulative.len()).max().unwrap_or(0);
    for t in 0..len {
        let _ = write!(out, "{t}");
        for (_, c) in curves {
            match c.cumulative.get(t) {
                Some(v) => {
                    let _ = write!(out, ",{v:e}");
                }
                None => out.push(','),
            }
        }
        out.push('\n');
    }
    out
}
