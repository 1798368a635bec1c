//! Supervised baselines on small problems with known answers.

use metassm::baselines::{train_supervised, train_supervised_from, transfer_pipeline, BaselineConfig, BaselineMethod};
use metassm::meta::MetaConfig;
use metassm::nssm::{windows, ArchitectureSpec, NeuralSsm, Regularization};
use metassm::optim::OptimizerKind;
use metassm::vdp::{generate_query, generate_source_dataset, State};

fn tiny() -> ArchitectureSpec {
    ArchitectureSpec {
        history: 4,
        horizon: 3,
        n_y: 2,
        n_z: 6,
        hidden: vec![12, 12],
    }
}

fn config(method: BaselineMethod, steps: usize, adaptation_steps: usize) -> BaselineConfig {
    let meta = MetaConfig {
        outer_rate: 0.01,
        outer_optimizer: OptimizerKind::AdaptiveMoment,
        seed: 3,
        ..MetaConfig::default()
    };
    BaselineConfig {
        training_steps: steps,
        batch_size: 16,
        ..BaselineConfig::matching(method, &meta, adaptation_steps)
    }
}

#[test]
fn equilibrium_data_is_fit_within_200_steps() {
    // a biased init so the loss starts away from zero
    let spec = tiny();
    let data = vec![[0.0, 0.0]; 50];
    let windows = windows(&data, spec.history, spec.horizon).unwrap();
    let mut model = NeuralSsm::init(&spec, 3).unwrap();
    for p in ["enc.0.bias", "enc.1.bias", "enc.2.bias"] {
        let b = model.param_mut(p).unwrap();
        *b = metassm::diff::Tensor::full(b.shape(), 0.5);
    }
    assert!(model.ssm_loss(&windows, Regularization::default()).unwrap() > 1e-3);
    let run = train_supervised_from(model, &[&data], &config(BaselineMethod::Ssm, 200, 0)).unwrap();
    let loss = run.model.ssm_loss(&windows, Regularization::default()).unwrap();
    assert!(loss < 1e-6, "{loss}");
}

#[test]
fn transfer_adaptation_lowers_query_context_loss() {
    let spec = tiny();
    let source = generate_source_dataset(6, [0.5, 2.0], 5).unwrap();
    let series: Vec<&[State]> = source.trajectories.iter().map(|t| &t.outputs[..300]).collect();
    let q = generate_query(1.572, [1.0, -0.5], 2.0).unwrap();
    let ctx = windows(&q.outputs[..80], spec.history, spec.horizon).unwrap();
    let reg = Regularization::default();

    let trained = transfer_pipeline(&series, &ctx, &spec, &config(BaselineMethod::Xfer, 150, 0)).unwrap();
    let adapted = transfer_pipeline(&series, &ctx, &spec, &config(BaselineMethod::Xfer, 150, 20)).unwrap();
    let source_only = train_supervised(&series, &spec, &config(BaselineMethod::Xfer, 150, 0)).unwrap().model;
    assert_eq!(trained, source_only);
    let before = trained.ssm_loss(&ctx, reg).unwrap();
    let after = adapted.ssm_loss(&ctx, reg).unwrap();
    assert!(after < before, "{before} -> {after}");
}

#[test]
fn adaptation_on_converged_source_is_a_fixed_point() {
    // source and query are the same equilibrium trajectory; training reaches
    // zero loss so the adaptation gradient vanishes
    let spec = tiny();
    let data = vec![[0.0, 0.0]; 40];
    let ctx = windows(&data, spec.history, spec.horizon).unwrap();
    let trained = transfer_pipeline(&[&data], &ctx, &spec, &config(BaselineMethod::Xfer, 50, 0)).unwrap();
    let adapted = transfer_pipeline(&[&data], &ctx, &spec, &config(BaselineMethod::Xfer, 50, 10)).unwrap();
    for (a, b) in adapted.tensors().iter().zip(trained.tensors()) {
        assert!(a.sub(&b).unwrap().max_abs() < 1e-9);
    }
}

#[test]
fn every_method_is_seed_deterministic() {
    let spec = tiny();
    let source = generate_source_dataset(3, [0.5, 2.0], 2).unwrap();
    let series: Vec<&[State]> = source.trajectories.iter().map(|t| t.outputs.as_slice()).collect();
    for method in [BaselineMethod::Ssm, BaselineMethod::AllNoadapt, BaselineMethod::Xfer] {
        let c = config(method, 5, 0);
        let a = train_supervised(&series, &spec, &c).unwrap();
        let b = train_supervised(&series, &spec, &c).unwrap();
        assert_eq!(a.model, b.model);
        let other = train_supervised(&series, &spec, &BaselineConfig { seed: 99, ..c }).unwrap();
        assert_ne!(a.model, other.model);
    }
}
