//! Experiment configuration and the subcommands of the `metassm` binary.
//!
//! Settings resolve as command-line flag, then config file, then built-in
//! default. Every artifact lands in one output directory and carries the
//! digest of the effective configuration.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::baselines::{train_supervised, BaselineConfig, BaselineMethod};
use crate::error::{Error, Result};
use crate::eval::{curves_csv, evaluate_rollout, run_grid, AdaptationPolicy, GridMethod, GridSpec, ReportRow, SseReport};
use crate::meta::{adapt, meta_train_from, trace_csv, LayerSelector, MetaConfig, TraceEntry};
use crate::nssm::{load_checkpoint, save_checkpoint, windows, ArchitectureSpec, NeuralSsm, WindowSample};
use crate::optim::{Optimizer, OptimizerKind};
use crate::provenance::ConfigDigest;
use crate::vdp::{
    generate_query, load_dataset, save_dataset, write_dataset_csv, SourceSpec, State, Trajectory, DEFAULT_DT,
    QUERY_THETA, QUERY_X0,
};

/// Default output root when neither `--out` nor `output-dir` is given.
pub const OUTPUT_ROOT_ENV: &str = "METASSM_OUTPUT_ROOT";

/// The deployed system: its context is used for adaptation and the points
/// after it are the prediction target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields, default)]
pub struct QuerySpec {
    pub theta: f64,
    pub x0: State,
    pub context_points: usize,
    pub horizon: usize,
}

impl Default for QuerySpec {
    fn default() -> Self {
        QuerySpec {
            theta: QUERY_THETA,
            x0: QUERY_X0,
            context_points: 400,
            horizon: 3000,
        }
    }
}

impl QuerySpec {
    pub fn trajectory(&self) -> Result<Trajectory> {
        let points = self.context_points + self.horizon;
        generate_query(self.theta, self.x0, points.saturating_sub(1) as f64 * DEFAULT_DT)
    }
}

/// Baseline settings; unset fields follow the meta-training budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields, default)]
pub struct BaselineSection {
    pub learning_rate: Option<f64>,
    pub training_steps: Option<usize>,
    pub batch_size: Option<usize>,
    /// Online steps for every adapting method at deployment.
    pub adaptation_steps: usize,
}

impl Default for BaselineSection {
    fn default() -> Self {
        BaselineSection {
            learning_rate: None,
            training_steps: None,
            batch_size: None,
            adaptation_steps: 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub output_dir: Option<PathBuf>,
    /// Outer iterations between intermediate checkpoints.
    pub checkpoint_interval: usize,
    pub data: SourceSpec,
    pub arch: ArchitectureSpec,
    pub meta: MetaConfig,
    pub baseline: BaselineSection,
    pub query: QuerySpec,
    pub grid: GridSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            output_dir: None,
            checkpoint_interval: 100,
            data: SourceSpec::default(),
            arch: ArchitectureSpec::default(),
            meta: MetaConfig::default(),
            baseline: BaselineSection::default(),
            query: QuerySpec::default(),
            grid: GridSpec::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Validation(format!("config: {}", e.message())))
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = fs::read_to_string(p)
                    .map_err(|e| Error::Validation(format!("cannot read config {}: {e}", p.display())))?;
                Self::from_toml(&text)
            }
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    pub fn digest(&self) -> ConfigDigest {
        ConfigDigest::of_text(&self.to_toml())
    }

    pub fn validate(&self) -> Result<()> {
        self.data.validate()?;
        self.arch.validate()?;
        self.meta.validate()?;
        self.grid.validate()?;
        for m in &self.grid.methods {
            Method::parse(m)?;
        }
        if self.checkpoint_interval == 0 {
            return Err(Error::Validation("checkpoint-interval must be at least 1".into()));
        }
        let window = self.arch.points_for_windows(1);
        if self.query.context_points < window {
            return Err(Error::Sizing {
                what: "query context".into(),
                required: window,
                available: self.query.context_points,
            });
        }
        if let Some(&small) = self.grid.context_sizes.iter().min() {
            if small < window {
                return Err(Error::Sizing {
                    what: "grid context size".into(),
                    required: window,
                    available: small,
                });
            }
        }
        for method in [BaselineMethod::Ssm, BaselineMethod::AllNoadapt, BaselineMethod::Xfer] {
            self.baseline_config(method).validate()?;
        }
        Ok(())
    }

    pub fn baseline_config(&self, method: BaselineMethod) -> BaselineConfig {
        let mut c = BaselineConfig::matching(method, &self.meta, self.baseline.adaptation_steps);
        if let Some(r) = self.baseline.learning_rate {
            c.learning_rate = r;
        }
        if let Some(s) = self.baseline.training_steps {
            c.training_steps = s;
        }
        if let Some(b) = self.baseline.batch_size {
            c.batch_size = b;
        }
        // online adaptation is applied at deployment, not baked into training
        c.adaptation_steps = 0;
        c
    }

    pub fn output_root(&self, flag: Option<&Path>) -> PathBuf {
        flag.map(Path::to_path_buf)
            .or_else(|| self.output_dir.clone())
            .or_else(|| std::env::var_os(OUTPUT_ROOT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("runs"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Maml,
    Anil,
    AnilR,
    Ssm,
    AllNoadapt,
    Xfer,
}

impl Method {
    pub fn parse(name: &str) -> Result<Self> {
        <Method as ValueEnum>::from_str(name, true).map_err(|_| Error::Validation(format!("unknown method {name:?}")))
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Maml => "maml",
            Method::Anil => "anil",
            Method::AnilR => "anil-r",
            Method::Ssm => "ssm",
            Method::AllNoadapt => "all-noadapt",
            Method::Xfer => "xfer",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Method::Maml => "MAML-SSM",
            Method::Anil => "ANIL-SSM",
            Method::AnilR => "ANIL-SSM-R",
            Method::Ssm => "SSM",
            Method::AllNoadapt => "All-NoAdapt-SSM",
            Method::Xfer => "Xfer-SSM",
        }
    }

    fn baseline(self) -> Option<BaselineMethod> {
        match self {
            Method::Ssm => Some(BaselineMethod::Ssm),
            Method::AllNoadapt => Some(BaselineMethod::AllNoadapt),
            Method::Xfer => Some(BaselineMethod::Xfer),
            _ => None,
        }
    }

    /// Layers adapted online, or `None` for methods deployed as trained.
    /// `anil` keeps a configured partial selector and falls back to the
    /// encoder.
    pub fn selector(self, configured: &LayerSelector) -> Option<LayerSelector> {
        match self {
            Method::Maml | Method::Xfer => Some(LayerSelector::All),
            Method::Anil => Some(match configured {
                LayerSelector::All => LayerSelector::EncoderOnly,
                other => other.clone(),
            }),
            Method::AnilR => Some(LayerSelector::HeadOnly),
            Method::Ssm | Method::AllNoadapt => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OptimizerArg {
    Plain,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EvalMode {
    /// Long rollouts of every method on the configured query.
    Fig3,
    /// Context-size × adaptation-steps grid over random queries.
    Table1,
}

#[derive(Debug, Parser)]
#[command(name = "metassm", version, about = "Meta-learned neural state-space models of van der Pol systems")]
pub struct Cli {
    /// TOML experiment config; built-in defaults when absent.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides `output-dir` and $METASSM_OUTPUT_ROOT).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate the source dataset.
    Generate(GenerateArgs),
    /// Meta-train or train a baseline.
    Train(TrainArgs),
    /// Adapt a trained model to the query context.
    Adapt(AdaptArgs),
    /// Score trained models on query systems.
    Evaluate(EvaluateArgs),
    /// Summarise evaluation outputs already on disk.
    Report,
    /// Print the effective configuration.
    ShowConfig,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub n_systems: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also write a CSV copy.
    #[arg(long)]
    pub csv: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub method: Method,
    /// Source dataset (default `<out>/dataset.bin`).
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub optimizer: Option<OptimizerArg>,
    #[arg(long)]
    pub inner_rate: Option<f64>,
    #[arg(long)]
    pub outer_rate: Option<f64>,
    /// Continue a meta-training run from its last checkpoint.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Debug, Args)]
pub struct AdaptArgs {
    #[arg(long, value_enum)]
    pub method: Method,
    /// Checkpoint to adapt (default `<out>/<method>.ckpt`).
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub steps: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long, value_enum)]
    pub mode: EvalMode,
    /// Comma-separated method names.
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    #[arg(long)]
    pub query_runs: Option<usize>,
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Resolved config plus output directory for one invocation.
pub struct Context {
    pub config: ExperimentConfig,
    pub out: PathBuf,
}

impl Context {
    fn digest(&self) -> ConfigDigest {
        self.config.digest()
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn write_text(&self, name: &str, text: &str) -> Result<PathBuf> {
        let p = self.path(name);
        fs::write(&p, text)?;
        Ok(p)
    }

    fn query_context(&self) -> Result<(Trajectory, Vec<WindowSample>)> {
        let q = self.config.query.trajectory()?;
        let ctx = windows(&q.outputs[..self.config.query.context_points], self.config.arch.history, self.config.arch.horizon)?;
        Ok((q, ctx))
    }

    fn checkpoint(&self, method: Method) -> Result<NeuralSsm> {
        let p = self.path(&format!("{}.ckpt", method.name()));
        require(&p, "checkpoint")?;
        load_checkpoint(&p)
    }
}

fn require(path: &Path, what: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::Validation(format!("missing {what} {}", path.display())))
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let mut config = ExperimentConfig::load(cli.config.as_deref())?;
    apply_overrides(&mut config, &cli.command);
    config.validate()?;
    let out = config.output_root(cli.out.as_deref());
    let ctx = Context { config, out };
    if matches!(cli.command, Command::ShowConfig) {
        print!("{}", ctx.config.to_toml());
        return Ok(());
    }
    fs::create_dir_all(&ctx.out)?;
    match &cli.command {
        Command::Generate(a) => cmd_generate(&ctx, a.csv),
        Command::Train(a) => cmd_train(&ctx, a),
        Command::Adapt(a) => cmd_adapt(&ctx, a),
        Command::Evaluate(a) => cmd_evaluate(&ctx, a),
        Command::Report => cmd_report(&ctx),
        Command::ShowConfig => unreachable!(),
    }
}

fn apply_overrides(config: &mut ExperimentConfig, command: &Command) {
    match command {
        Command::Generate(a) => {
            if let Some(n) = a.n_systems {
                config.data.n_systems = n;
            }
            if let Some(s) = a.seed {
                config.data.seed = s;
            }
        }
        Command::Train(a) => {
            let m = &mut config.meta;
            if let Some(n) = a.iterations {
                m.outer_iterations = n;
            }
            if let Some(s) = a.seed {
                m.seed = s;
            }
            if let Some(o) = a.optimizer {
                m.outer_optimizer = match o {
                    OptimizerArg::Plain => OptimizerKind::PlainGradient,
                    OptimizerArg::Adam => OptimizerKind::AdaptiveMoment,
                };
            }
            if let Some(r) = a.inner_rate {
                m.inner_rate = r;
            }
            if let Some(r) = a.outer_rate {
                m.outer_rate = r;
            }
        }
        Command::Adapt(a) => {
            if let Some(s) = a.steps {
                config.baseline.adaptation_steps = s;
            }
        }
        Command::Evaluate(a) => {
            if let Some(n) = a.query_runs {
                config.grid.query_runs = n;
            }
            if let Some(h) = a.horizon {
                config.grid.horizon = h;
                config.query.horizon = h;
            }
            if let Some(s) = a.seed {
                config.grid.seed = s;
            }
        }
        Command::Report | Command::ShowConfig => {}
    }
}

pub fn cmd_generate(ctx: &Context, csv: bool) -> Result<()> {
    let data = ctx.config.data.generate()?;
    let digest = Some(ctx.digest());
    let path = ctx.path("dataset.bin");
    save_dataset(&path, &data.trajectories, digest)?;
    if csv {
        ctx.write_text("dataset.csv", &write_dataset_csv(&data.trajectories, digest))?;
    }
    let thetas: Vec<f64> = data.trajectories.iter().map(|t| t.params.theta).collect();
    let lens: Vec<usize> = data.trajectories.iter().map(Trajectory::len).collect();
    let fold = |f: fn(f64, f64) -> f64, init: f64| thetas.iter().copied().fold(init, f);
    println!("wrote {}", path.display());
    println!("systems: {}", data.trajectories.len());
    println!("theta: [{:.4}, {:.4}]", fold(f64::min, f64::INFINITY), fold(f64::max, f64::NEG_INFINITY));
    println!(
        "length: min {} mean {:.1} max {}",
        lens.iter().min().unwrap_or(&0),
        lens.iter().sum::<usize>() as f64 / lens.len() as f64,
        lens.iter().max().unwrap_or(&0)
    );
    Ok(())
}

fn load_source(ctx: &Context, flag: Option<&Path>) -> Result<Vec<Trajectory>> {
    let path = flag.map(Path::to_path_buf).unwrap_or_else(|| ctx.path("dataset.bin"));
    require(&path, "dataset")?;
    load_dataset(&path)
}

/// Last iteration recorded in a trace file, if any.
pub fn last_trace_iteration(text: &str) -> Result<Option<usize>> {
    let mut last = None;
    for line in text.lines().filter(|l| !l.starts_with('#') && !l.starts_with("iteration")) {
        let field = line.split(',').next().unwrap_or_default();
        last = Some(
            field
                .parse::<usize>()
                .map_err(|_| Error::Format(format!("bad trace line {line:?}")))?,
        );
    }
    Ok(last)
}

pub fn cmd_train(ctx: &Context, args: &TrainArgs) -> Result<()> {
    let method = args.method;
    let name = method.name();
    let digest = Some(ctx.digest());
    let ckpt = ctx.path(&format!("{name}.ckpt"));
    let trace_path = ctx.path(&format!("{name}.trace.csv"));

    if let Some(baseline) = method.baseline() {
        if args.resume {
            return Err(Error::Validation("resume is only supported for meta-training methods".into()));
        }
        let config = ctx.config.baseline_config(baseline);
        let query = ctx.config.query.trajectory()?;
        let query_ctx_series = &query.outputs[..ctx.config.query.context_points];
        let source = match baseline {
            BaselineMethod::Ssm => Vec::new(),
            _ => load_source(ctx, args.dataset.as_deref())?,
        };
        let mut series: Vec<&[State]> = source.iter().map(|t| t.outputs.as_slice()).collect();
        if baseline != BaselineMethod::Xfer {
            series.push(query_ctx_series);
        }
        let run = train_supervised(&series, &ctx.config.arch, &config)?;
        save_checkpoint(&ckpt, &run.model, digest)?;
        ctx.write_text(&format!("{name}.trace.csv"), &with_digest(digest, &trace_csv(&run.trace, true)))?;
        println!("{name}: {} steps, wrote {}", run.trace.len(), ckpt.display());
        return Ok(());
    }

    let source = load_source(ctx, args.dataset.as_deref())?;
    let mut meta = ctx.config.meta.clone();
    meta.selector = method.selector(&meta.selector).expect("meta methods adapt");
    let optim_path = ctx.path(&format!("{name}.optim"));
    let (model, optimizer, start) = if args.resume {
        require(&ckpt, "checkpoint")?;
        require(&optim_path, "optimizer state")?;
        require(&trace_path, "trace")?;
        let model = load_checkpoint(&ckpt)?;
        let optimizer = Optimizer::from_bytes(&fs::read(&optim_path)?)?;
        let start = last_trace_iteration(&fs::read_to_string(&trace_path)?)?.map_or(0, |i| i + 1);
        (model, optimizer, start)
    } else {
        let model = NeuralSsm::init(&ctx.config.arch, meta.seed)?;
        let optimizer = Optimizer::new(meta.outer_optimizer, meta.outer_rate, &model.tensors());
        fs::write(&trace_path, with_digest(digest, &trace_csv(&[], true)))?;
        (model, optimizer, 0)
    };
    if model.spec() != &ctx.config.arch {
        return Err(Error::Validation(format!("{} does not match the configured architecture", ckpt.display())));
    }
    let mut trace_file = fs::OpenOptions::new().append(true).open(&trace_path)?;
    let interval = ctx.config.checkpoint_interval;
    let last = meta.outer_iterations;
    let save = |model: &NeuralSsm, opt: &Optimizer| -> Result<()> {
        save_checkpoint(&ckpt, model, digest)?;
        fs::write(&optim_path, opt.to_bytes())?;
        Ok(())
    };
    let run = meta_train_from(model, optimizer, &source, &meta, start, |entry: &TraceEntry, model, opt| {
        trace_file.write_all(trace_csv(std::slice::from_ref(entry), false).as_bytes())?;
        if (entry.iteration + 1) % interval == 0 || entry.iteration + 1 == last {
            save(model, opt)?;
        }
        Ok(())
    })?;
    if start >= last {
        save(&run.model, &run.optimizer)?;
    }
    let final_loss = run.trace.last().map(|e| e.outer_loss);
    println!(
        "{name}: iterations {start}..{last}, final outer loss {}, wrote {}",
        final_loss.map_or("-".into(), |l| format!("{l:.6e}")),
        ckpt.display()
    );
    Ok(())
}

fn with_digest(digest: Option<ConfigDigest>, body: &str) -> String {
    digest.map(|d| d.comment_line()).unwrap_or_default() + body
}

fn policy(ctx: &Context, method: Method) -> AdaptationPolicy {
    match method.selector(&ctx.config.meta.selector) {
        Some(selector) => AdaptationPolicy {
            selector,
            steps: ctx.config.baseline.adaptation_steps,
            rate: ctx.config.meta.inner_rate,
            reg: ctx.config.meta.regularization(),
        },
        None => AdaptationPolicy::none(),
    }
}

pub fn cmd_adapt(ctx: &Context, args: &AdaptArgs) -> Result<()> {
    let name = args.method.name();
    let p = policy(ctx, args.method);
    if args.method.selector(&ctx.config.meta.selector).is_none() {
        return Err(Error::Validation(format!("{name} is deployed without online adaptation")));
    }
    let model = match &args.checkpoint {
        Some(path) => {
            require(path, "checkpoint")?;
            load_checkpoint(path)?
        }
        None => ctx.checkpoint(args.method)?,
    };
    let (_, context) = ctx.query_context()?;
    let adapted = adapt(&model, &context, p.steps, p.rate, &p.selector, p.reg)?;
    let digest = Some(ctx.digest());
    let out = ctx.path(&format!("{name}.adapted.ckpt"));
    save_checkpoint(&out, &adapted.to_model(model.spec())?, digest)?;
    let mut csv = String::from("step,context_loss\n");
    for (i, l) in adapted.context_losses.iter().enumerate() {
        let _ = writeln!(csv, "{i},{l:e}");
    }
    ctx.write_text(&format!("{name}.adapt.csv"), &with_digest(digest, &csv))?;
    println!(
        "{name}: {} steps, context loss {:.6e} -> {:.6e}, wrote {}",
        p.steps,
        adapted.context_losses[0],
        adapted.context_losses[adapted.context_losses.len() - 1],
        out.display()
    );
    Ok(())
}

fn resolve_methods(requested: Option<&[String]>, default: &[String]) -> Result<Vec<Method>> {
    let names = requested.unwrap_or(default);
    let methods = names
        .iter()
        .filter(|n| !n.is_empty())
        .map(|n| Method::parse(n))
        .collect::<Result<Vec<_>>>()?;
    if methods.is_empty() {
        return Err(Error::Validation("method list is empty".into()));
    }
    Ok(methods)
}

pub fn cmd_evaluate(ctx: &Context, args: &EvaluateArgs) -> Result<()> {
    let digest = Some(ctx.digest());
    match args.mode {
        EvalMode::Fig3 => {
            let default: Vec<String> = [Method::Maml, Method::Xfer, Method::Ssm, Method::AllNoadapt]
                .iter()
                .map(|m| m.name().to_string())
                .collect();
            let methods = resolve_methods(args.methods.as_deref(), &default)?;
            let models = methods.iter().map(|&m| ctx.checkpoint(m)).collect::<Result<Vec<_>>>()?;
            let query = ctx.config.query.trajectory()?;
            let q = &ctx.config.query;
            let mut curves = Vec::new();
            let mut summary = String::from("method,sse\n");
            for (&m, model) in methods.iter().zip(&models) {
                let e = evaluate_rollout(model, &policy(ctx, m), &query, q.context_points, q.horizon)?;
                let _ = writeln!(summary, "{},{:e}", m.label(), e.curve.total());
                curves.push((m.label().to_string(), e.curve));
            }
            ctx.write_text("fig3_curves.csv", &curves_csv(&curves, digest))?;
            ctx.write_text("fig3_summary.csv", &with_digest(digest, &summary))?;
            print!("{summary}");
        }
        EvalMode::Table1 => {
            let methods = resolve_methods(args.methods.as_deref(), &ctx.config.grid.methods)?;
            let grid_methods = methods
                .iter()
                .map(|&m| {
                    let selector = m.selector(&ctx.config.meta.selector).unwrap_or(LayerSelector::All);
                    Ok(GridMethod {
                        name: m.label().to_string(),
                        model: ctx.checkpoint(m)?,
                        selector,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let report = run_grid(
                &grid_methods,
                &ctx.config.grid,
                ctx.config.meta.inner_rate,
                ctx.config.meta.regularization(),
            )?;
            ctx.write_text("table1.csv", &report.to_csv(digest))?;
            let table = report.to_table(digest);
            ctx.write_text("table1.txt", &table)?;
            print!("{table}");
        }
    }
    Ok(())
}

/// Rebuilds a report from the long-format CSV written by the grid command.
pub fn parse_report_csv(text: &str) -> Result<SseReport> {
    let mut report = SseReport::default();
    for line in text.lines().filter(|l| !l.starts_with('#') && !l.starts_with("method,")) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(Error::Format(format!("bad report line {line:?}")));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| Error::Format(format!("bad number {s:?}")));
        let count = |s: &str| s.parse::<usize>().map_err(|_| Error::Format(format!("bad count {s:?}")));
        let (size, steps) = (count(f[1])?, count(f[2])?);
        let sse = num(f[5])?;
        match report.rows.last_mut() {
            Some(r) if r.method == f[0] && r.context_size == size && r.adapt_steps == steps => r.per_run.push(sse),
            _ => report.rows.push(ReportRow {
                method: f[0].to_string(),
                context_size: size,
                adapt_steps: steps,
                median_sse: num(f[3])?,
                per_run: vec![sse],
            }),
        }
    }
    Ok(report)
}

pub fn cmd_report(ctx: &Context) -> Result<()> {
    let mut text = String::new();
    let table = ctx.path("table1.csv");
    if table.is_file() {
        let report = parse_report_csv(&fs::read_to_string(&table)?)?;
        text.push_str("== grid (median SSE) ==\n");
        text.push_str(&report.to_table(None));
    }
    let fig3 = ctx.path("fig3_summary.csv");
    if fig3.is_file() {
        text.push_str("== long rollout (SSE) ==\n");
        for line in fs::read_to_string(&fig3)?.lines().filter(|l| !l.starts_with('#')) {
            text.push_str(line);
            text.push('\n');
        }
    }
    if text.is_empty() {
        return Err(Error::Validation(format!("no evaluation outputs in {}", ctx.out.display())));
    }
    ctx.write_text("report.txt", &with_digest(Some(ctx.digest()), &text))?;
    print!("{text}");
    Ok(())
}
