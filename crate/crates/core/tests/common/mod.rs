//! Independent oracles shared by the integration and acceptance suites.
#![allow(dead_code)]

pub mod checks;

use metassm::diff::Tensor;
use metassm::nssm::{Block, NeuralSsm, WindowSample};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-6;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap()
}

/// Central finite-difference gradient of `f` with respect to `inputs[which]`.
pub fn fd_gradient(f: &dyn Fn(&[Tensor]) -> f64, inputs: &[Tensor], which: usize) -> Vec<f64> {
    let base = inputs[which].data().to_vec();
    (0..base.len())
        .map(|i| {
            let probe = |delta: f64| {
                let mut data = base.clone();
                data[i] += delta;
                let mut xs = inputs.to_vec();
                xs[which] = Tensor::new(inputs[which].shape().to_vec(), data).unwrap();
                f(&xs)
            };
            (probe(FD_STEP) - probe(-FD_STEP)) / (2.0 * FD_STEP)
        })
        .collect()
}

/// `‖a − b‖₂ / max(‖a‖₂, ‖b‖₂)`, zero when both vanish.
pub fn rel_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

/// Plain-loop encoder forward pass: hidden layers ReLU, last layer linear.
pub fn loop_encode(model: &NeuralSsm, history: &Block) -> Vec<f64> {
    let mut h: Vec<f64> = history.data.clone();
    let dims = model.spec().encoder_dims();
    for (l, &(fan_in, fan_out)) in dims.iter().enumerate() {
        let w = model.param(&format!("enc.{l}.weight")).unwrap().data();
        let b = model.param(&format!("enc.{l}.bias")).unwrap().data();
        let mut next = vec![0.0; fan_out];
        for o in 0..fan_out {
            let mut acc = b[o];
            for i in 0..fan_in {
                acc += w[o * fan_in + i] * h[i];
            }
            next[o] = if l + 1 < dims.len() { acc.max(0.0) } else { acc };
        }
        h = next;
    }
    h
}

fn loop_matvec(m: &[f64], rows: usize, cols: usize, v: &[f64]) -> Vec<f64> {
    (0..rows)
        .map(|r| (0..cols).map(|c| m[r * cols + c] * v[c]).sum())
        .collect()
}

/// Loop oracle for multi-step prediction: row `k` is `C A^k z`.
pub fn loop_predict(model: &NeuralSsm, history: &Block, horizon: usize) -> Vec<Vec<f64>> {
    let spec = model.spec();
    let (nz, ny) = (spec.n_z, spec.n_y);
    let mut z = loop_encode(model, history);
    let mut out = Vec::new();
    for k in 0..horizon {
        if k > 0 {
            z = loop_matvec(model.a_z().data(), nz, nz, &z);
        }
        out.push(loop_matvec(model.c_z().data(), ny, nz, &z));
    }
    out
}

/// Loop oracle for the batch loss: mean over samples of
/// `(1/H_p) Σ_k ‖y_{t+k} − ŷ_{t+k}‖²`.
pub fn loop_loss(model: &NeuralSsm, samples: &[WindowSample]) -> f64 {
    let hp = model.spec().horizon;
    let mut total = 0.0;
    for s in samples {
        let pred = loop_predict(model, &s.history, hp);
        let mut per = 0.0;
        for (k, row) in pred.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                per += (s.future.row(k)[c] - v).powi(2);
            }
        }
        total += per / hp as f64;
    }
    total / samples.len() as f64
}

pub fn loop_sse(a: &Block, b: &Block) -> f64 {
    let mut s = 0.0;
    for t in 0..a.rows {
        for c in 0..a.cols {
            let d = a.row(t)[c] - b.row(t)[c];
            s += d * d;
        }
    }
    s
}

/// Lower median via full sort.
pub fn sorted_lower_median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v[(v.len() - 1) / 2]
}
