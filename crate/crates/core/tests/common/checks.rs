//! Named checks shared by the focused suites and the acceptance run.

use metassm::diff::{Graph, NodeId, Op, Tensor};
use metassm::eval::{median_lower, sse};
use metassm::meta::{adapt, meta_gradient, meta_train, GradientOrder, LayerSelector, MetaConfig, MetaTask};
use metassm::nssm::{
    read_checkpoint, windows, write_checkpoint, ArchitectureSpec, Block, NeuralSsm, Regularization, WindowBatch,
    WindowSample, CHECKPOINT_VERSION,
};
use metassm::provenance::ConfigDigest;
use metassm::vdp::{generate_query, read_dataset, simulate, write_dataset, SourceSpec, SystemParams, Trajectory, DATASET_VERSION};
use metassm::Result;
use rand::Rng;

use super::{fd_gradient, loop_sse, random_tensor, rel_error, rng, sorted_lower_median};

// ---- autodiff primitives

/// `sum(op(inputs) ⊙ weights)`, so every output entry gets a distinct
/// cotangent.
pub fn weighted(g: &mut Graph, op: &Op, nodes: &[NodeId], weights: &Tensor) -> NodeId {
    let out = g.apply(op.clone(), nodes).unwrap();
    if g.value(out).is_scalar() {
        let w = g.constant(weights.reshape(&[]).unwrap());
        let p = g.mul(out, w).unwrap();
        return g.sum(p).unwrap();
    }
    let w = g.constant(weights.clone());
    let p = g.mul(out, w).unwrap();
    g.sum(p).unwrap()
}

pub fn eval(op: &Op, inputs: &[Tensor], weights: &Tensor) -> f64 {
    let mut g = Graph::new();
    let nodes: Vec<NodeId> = inputs.iter().map(|t| g.constant(t.clone())).collect();
    let l = weighted(&mut g, op, &nodes, weights);
    g.value(l).item()
}

pub fn reverse(op: &Op, inputs: &[Tensor], weights: &Tensor) -> Vec<Vec<f64>> {
    let mut g = Graph::new();
    let nodes: Vec<NodeId> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let l = weighted(&mut g, op, &nodes, weights);
    g.backward(l, &nodes, false)
        .unwrap()
        .tensors(&g)
        .into_iter()
        .map(Tensor::into_data)
        .collect()
}

/// Every primitive with representative random inputs and output shape.
pub fn primitive_cases(seed: u64) -> Vec<(Op, Vec<Tensor>, Vec<usize>)> {
    let mut r = rng(seed);
    let mut t = |s: &[usize]| random_tensor(&mut r, s);
    vec![
        (Op::MatMul, vec![t(&[3, 4]), t(&[4, 2])], vec![3, 2]),
        (Op::Transpose, vec![t(&[3, 4])], vec![4, 3]),
        (Op::Add, vec![t(&[2, 3]), t(&[2, 3])], vec![2, 3]),
        (Op::Sub, vec![t(&[2, 3]), t(&[2, 3])], vec![2, 3]),
        (Op::Mul, vec![t(&[2, 3]), t(&[2, 3])], vec![2, 3]),
        (Op::Scale(-1.7), vec![t(&[5])], vec![5]),
        (Op::Relu, vec![t(&[3, 3])], vec![3, 3]),
        (Op::ReluMask, vec![t(&[2, 3]), t(&[2, 3])], vec![2, 3]),
        (Op::Square, vec![t(&[4])], vec![4]),
        (Op::Sum, vec![t(&[2, 3])], vec![]),
        (Op::Mean, vec![t(&[2, 3])], vec![]),
        (Op::Expand(vec![2, 2]), vec![t(&[])], vec![2, 2]),
        (Op::Slice { axis: 1, start: 1, end: 3 }, vec![t(&[3, 4])], vec![3, 2]),
        (Op::Pad { axis: 0, start: 1, total: 4 }, vec![t(&[2, 3])], vec![4, 3]),
        (Op::Concat { axis: 0 }, vec![t(&[1, 3]), t(&[2, 3])], vec![3, 3]),
        (Op::Reshape(vec![6]), vec![t(&[2, 3])], vec![6]),
    ]
}

/// Worst relative error between reverse mode and finite differences over
/// all primitives.
pub fn worst_primitive_error(seed: u64) -> f64 {
    let mut worst: f64 = 0.0;
    for (op, inputs, out_shape) in primitive_cases(seed) {
        let weights = random_tensor(&mut rng(seed + 100), &out_shape);
        let rev = reverse(&op, &inputs, &weights);
        let f = |xs: &[Tensor]| eval(&op, xs, &weights);
        for (i, g) in rev.iter().enumerate() {
            if op == Op::ReluMask && i == 0 {
                // locally constant in the mask argument
                assert!(g.iter().all(|&v| v == 0.0));
                continue;
            }
            let fd = fd_gradient(&f, &inputs, i);
            let e = rel_error(g, &fd);
            assert!(e < 1e-5, "{op:?} input {i}: rel error {e}");
            worst = worst.max(e);
        }
    }
    worst
}

// ---- model loss

pub fn tiny() -> ArchitectureSpec {
    ArchitectureSpec {
        history: 3,
        horizon: 2,
        n_y: 2,
        n_z: 4,
        hidden: vec![8],
    }
}

pub fn random_samples(spec: &ArchitectureSpec, n: usize, seed: u64) -> Vec<WindowSample> {
    let mut r = rng(seed);
    let series: Vec<[f64; 2]> = (0..n + spec.history + spec.horizon - 1)
        .map(|_| [r.gen_range(-2.0..2.0), r.gen_range(-2.0..2.0)])
        .collect();
    windows(&series, spec.history, spec.horizon).unwrap()
}

/// Worst relative error of the loss gradient against finite differences,
/// over every parameter tensor of the tiny architecture.
pub fn ssm_loss_gradient_error(seed: u64) -> f64 {
    let spec = tiny();
    let m = NeuralSsm::init(&spec, seed).unwrap();
    let samples = random_samples(&spec, 5, seed + 1);
    let batch = WindowBatch::new(&samples).unwrap();
    let (_, grads) = m.loss_and_grad(&batch, Regularization::default()).unwrap();
    let f = |ts: &[Tensor]| {
        NeuralSsm::from_tensors(&spec, ts.to_vec())
            .unwrap()
            .ssm_loss(&samples, Regularization::default())
            .unwrap()
    };
    let params = m.tensors();
    (0..params.len())
        .map(|i| rel_error(grads[i].data(), &fd_gradient(&f, &params, i)))
        .fold(0.0, f64::max)
}

// ---- meta-learning

/// Context and target loss `Σ_i (w_i − c_i)²` for a per-task centre `c`.
pub struct Bowl {
    pub center: Vec<f64>,
}

impl Bowl {
    fn loss(&self, g: &mut Graph, p: &[NodeId]) -> Result<NodeId> {
        let c = g.constant(Tensor::new(vec![self.center.len()], self.center.clone())?);
        let d = g.sub(p[0], c)?;
        let s = g.square(d)?;
        g.sum(s)
    }
}

impl MetaTask for Bowl {
    fn context_loss(&self, g: &mut Graph, p: &[NodeId]) -> Result<NodeId> {
        self.loss(g, p)
    }
    fn target_loss(&self, g: &mut Graph, p: &[NodeId]) -> Result<NodeId> {
        self.loss(g, p)
    }
}

/// After `m` inner steps `w − c` shrinks by `(1 − 2β)^m`, so the target loss
/// is `(1 − 2β)^{2m} (w − c)²`. Second order differentiates that; first
/// order keeps only the outer factor `2 (w_m − c)`.
pub fn closed_form(w: &[f64], centers: &[Vec<f64>], beta: f64, m: usize, order: GradientOrder) -> Vec<f64> {
    let shrink = (1.0 - 2.0 * beta).powi(m as i32);
    let factor = match order {
        GradientOrder::Second => shrink * shrink,
        GradientOrder::First => shrink,
    };
    (0..w.len())
        .map(|i| centers.iter().map(|c| 2.0 * factor * (w[i] - c[i])).sum())
        .collect()
}

/// Worst relative error of the implementation against [`closed_form`] over
/// a small sweep of starting points, rates and step counts.
pub fn quadratic_bilevel_error(order: GradientOrder) -> f64 {
    let centers = vec![vec![1.0, -1.0], vec![1.0, 1.0], vec![-1.0, 1.0]];
    let tasks: Vec<Bowl> = centers.iter().map(|c| Bowl { center: c.clone() }).collect();
    let mut worst: f64 = 0.0;
    for w in [[0.0, 0.0], [0.3, -1.7], [2.5, 0.25]] {
        for beta in [0.01, 0.1, 0.3] {
            for m in [1, 2, 5] {
                let init = [Tensor::new(vec![2], w.to_vec()).unwrap()];
                let (_, grads) = meta_gradient(&tasks, &init, &[true], beta, m, order).unwrap();
                let expected = closed_form(&w, &centers, beta, m, order);
                worst = worst.max(rel_error(grads[0].data(), &expected));
            }
        }
    }
    worst
}

pub fn small_spec(width: usize) -> ArchitectureSpec {
    ArchitectureSpec {
        history: 4,
        horizon: 3,
        n_y: 2,
        n_z: 6,
        hidden: vec![width; 2],
    }
}

pub fn small_source(n: usize, seed: u64) -> Vec<Trajectory> {
    SourceSpec {
        n_systems: n,
        t_final_range: [2.0, 4.0],
        seed,
        ..SourceSpec::default()
    }
    .generate()
    .unwrap()
    .trajectories
}

pub fn small_config(iterations: usize) -> MetaConfig {
    MetaConfig {
        outer_iterations: iterations,
        batch_size: 3,
        inner_steps: 2,
        context_windows: 4,
        target_windows: 4,
        seed: 11,
        ..MetaConfig::default()
    }
}

/// `selector = Layers(every name)` takes the generic ANIL path; `All` is
/// MAML. Both must give identical bits.
pub fn maml_equals_anil_all(outer_steps: usize) -> bool {
    let spec = small_spec(8);
    let source = small_source(6, 3);
    let maml = small_config(outer_steps);
    let init = NeuralSsm::init(&spec, maml.seed).unwrap();
    let names = init.params().iter().map(|p| p.name.clone()).collect();
    let anil = MetaConfig {
        selector: LayerSelector::Layers(names),
        ..maml.clone()
    };
    let a = meta_train(&source, &spec, &maml).unwrap();
    let b = meta_train(&source, &spec, &anil).unwrap();
    a.model == b.model && a.trace.iter().zip(&b.trace).all(|(x, y)| x.outer_loss == y.outer_loss)
}

/// Adapts `steps` times with `selector` and reports whether the layers it
/// must not touch kept their exact bits while the others moved.
pub fn frozen_layers_hold(selector: LayerSelector, steps: usize) -> bool {
    let spec = small_spec(8);
    let model = NeuralSsm::init(&spec, 5).unwrap();
    let q = generate_query(1.572, [1.0, -0.5], 1.0).unwrap();
    let ctx = windows(&q.outputs, spec.history, spec.horizon).unwrap();
    let adapted = adapt(&model, &ctx, steps, 0.01, &selector, Regularization::default()).unwrap();
    let mask = selector.mask(&model);
    adapted
        .tensors
        .iter()
        .zip(&adapted.initial)
        .zip(&mask)
        .all(|((after, before), &trainable)| (after == before) != trainable)
}

// ---- integrator

/// Straight-line RK4 for the oscillator, sampled every `every` steps.
pub fn reference_rk4(theta: f64, x0: [f64; 2], dt: f64, steps: usize, every: usize) -> Vec<[f64; 2]> {
    let f = |x: [f64; 2]| [x[1], theta * x[1] * (1.0 - x[0] * x[0]) - x[0]];
    let mut x = x0;
    let mut out = vec![x];
    for i in 1..=steps {
        let k1 = f(x);
        let k2 = f([x[0] + 0.5 * dt * k1[0], x[1] + 0.5 * dt * k1[1]]);
        let k3 = f([x[0] + 0.5 * dt * k2[0], x[1] + 0.5 * dt * k2[1]]);
        let k4 = f([x[0] + dt * k3[0], x[1] + dt * k3[1]]);
        for c in 0..2 {
            x[c] += dt / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
        }
        if i % every == 0 {
            out.push(x);
        }
    }
    out
}

/// Max-norm gap over 20 s between the dataset integrator at dt = 0.01 and
/// the reference at dt = 0.001, compared on the shared sample times.
pub fn coarse_vs_fine_gap(theta: f64) -> f64 {
    let x0 = [1.0, -0.5];
    let coarse = simulate(&SystemParams {
        theta,
        x0,
        t_final: 20.0,
        dt: 0.01,
    })
    .unwrap();
    let fine = reference_rk4(theta, x0, 0.001, 20_000, 10);
    assert_eq!(coarse.len(), fine.len());
    coarse
        .outputs
        .iter()
        .zip(&fine)
        .map(|(a, b)| (a[0] - b[0]).abs().max((a[1] - b[1]).abs()))
        .fold(0.0, f64::max)
}

// ---- metrics

pub fn random_block(seed: u64, rows: usize, cols: usize) -> Block {
    let mut r = rng(seed);
    Block::new(rows, cols, (0..rows * cols).map(|_| r.gen_range(-3.0..3.0)).collect()).unwrap()
}

/// Random fixtures compared for exact equality against the loop oracles.
pub fn metric_fixtures_agree(cases: u64) -> bool {
    (0..cases).all(|seed| {
        let mut r = rng(seed + 1000);
        let rows = r.gen_range(1..60);
        let a = random_block(seed, rows, 2);
        let b = random_block(seed + 7, rows, 2);
        let n = r.gen_range(1..40);
        let values: Vec<f64> = (0..n).map(|_| r.gen_range(0.0..1e4)).collect();
        sse(&a, &b).unwrap() == loop_sse(&a, &b) && median_lower(&values).unwrap() == sorted_lower_median(&values)
    })
}

// ---- persistence

pub fn codec_spec(n_z: usize, hidden: Vec<usize>) -> ArchitectureSpec {
    ArchitectureSpec {
        history: 3,
        horizon: 2,
        n_y: 2,
        n_z,
        hidden,
    }
}

/// Overwrites the little-endian version field that follows the 4-byte tag.
pub fn with_version(mut bytes: Vec<u8>, version: u32) -> Vec<u8> {
    bytes[4..8].copy_from_slice(&version.to_le_bytes());
    bytes
}

/// Save→load→save for both formats gives identical bytes and values, and
/// a bumped version field is refused.
pub fn roundtrips_hold(seed: u64) -> bool {
    let digest = Some(ConfigDigest::of_text(&format!("seed {seed}")));
    let data = SourceSpec {
        n_systems: 3,
        t_final_range: [0.5, 2.0],
        seed,
        ..SourceSpec::default()
    }
    .generate()
    .unwrap();
    let bytes = write_dataset(&data.trajectories, digest);
    let (back, d) = read_dataset(&bytes).unwrap();
    let dataset_ok = back == data.trajectories
        && d == digest
        && write_dataset(&back, digest) == bytes
        && read_dataset(&with_version(bytes.clone(), DATASET_VERSION + 1)).is_err();

    let model = NeuralSsm::init(&codec_spec(5, vec![7, 4]), seed).unwrap();
    let bytes = write_checkpoint(&model, digest);
    let (back, d) = read_checkpoint(&bytes).unwrap();
    let bits_equal = back
        .tensors()
        .iter()
        .zip(model.tensors())
        .all(|(a, b)| a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
    let checkpoint_ok = back == model
        && bits_equal
        && d == digest
        && write_checkpoint(&back, digest) == bytes
        && read_checkpoint(&with_version(bytes, CHECKPOINT_VERSION + 1)).is_err();
    dataset_ok && checkpoint_ok
}
