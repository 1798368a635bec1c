//! Parameter update rules shared by the meta outer loop and supervised
//! training.

use serde::{Deserialize, Serialize};

use crate::diff::Tensor;
use crate::error::{Error, Result};
use crate::provenance::Reader;

const STATE_MAGIC: &[u8; 4] = b"NSOP";
pub const OPTIMIZER_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerKind {
    /// `ω ← ω − rate·∇`.
    #[default]
    PlainGradient,
    /// Adam with β₁ = 0.9, β₂ = 0.999, ε = 1e-8.
    AdaptiveMoment,
}

#[derive(Debug, Clone)]
pub enum Optimizer {
    Plain {
        rate: f64,
    },
    Adam {
        rate: f64,
        step: u64,
        m: Vec<Vec<f64>>,
        v: Vec<Vec<f64>>,
    },
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

impl Optimizer {
    pub fn new(kind: OptimizerKind, rate: f64, params: &[Tensor]) -> Self {
        match kind {
            OptimizerKind::PlainGradient => Optimizer::Plain { rate },
            OptimizerKind::AdaptiveMoment => Optimizer::Adam {
                rate,
                step: 0,
                m: params.iter().map(|p| vec![0.0; p.numel()]).collect(),
                v: params.iter().map(|p| vec![0.0; p.numel()]).collect(),
            },
        }
    }

    pub fn step(&mut self, params: &mut [Tensor], grads: &[Tensor]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::shape("optimizer", &[params.len()], &[grads.len()]));
        }
        match self {
            Optimizer::Plain { rate } => {
                for (p, g) in params.iter_mut().zip(grads) {
                    *p = p.sub(&g.scale(*rate)?)?;
                }
            }
            Optimizer::Adam { rate, step, m, v } => {
                *step += 1;
                let t = *step as i32;
                let c1 = 1.0 - BETA1.powi(t);
                let c2 = 1.0 - BETA2.powi(t);
                for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
                    if p.shape() != g.shape() {
                        return Err(Error::shape("optimizer", p.shape(), g.shape()));
                    }
                    let data: Vec<f64> = p
                        .data()
                        .iter()
                        .zip(g.data())
                        .enumerate()
                        .map(|(j, (&w, &gj))| {
                            m[i][j] = BETA1 * m[i][j] + (1.0 - BETA1) * gj;
                            v[i][j] = BETA2 * v[i][j] + (1.0 - BETA2) * gj * gj;
                            let m_hat = m[i][j] / c1;
                            let v_hat = v[i][j] / c2;
                            w - *rate * m_hat / (v_hat.sqrt() + EPS)
                        })
                        .collect();
                    *p = Tensor::new(p.shape().to_vec(), data)?;
                }
            }
        }
        Ok(())
    }

    /// Serialises the optimizer state so that a resumed run continues
    /// exactly where it stopped.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = STATE_MAGIC.to_vec();
        buf.extend_from_slice(&OPTIMIZER_VERSION.to_le_bytes());
        match self {
            Optimizer::Plain { rate } => {
                buf.extend_from_slice(&0u32.to_le_bytes());
                buf.extend_from_slice(&rate.to_le_bytes());
            }
            Optimizer::Adam { rate, step, m, v } => {
                buf.extend_from_slice(&1u32.to_le_bytes());
                buf.extend_from_slice(&rate.to_le_bytes());
                buf.extend_from_slice(&step.to_le_bytes());
                buf.extend_from_slice(&(m.len() as u64).to_le_bytes());
                for moments in m.iter().chain(v) {
                    buf.extend_from_slice(&(moments.len() as u64).to_le_bytes());
                    for x in moments {
                        buf.extend_from_slice(&x.to_le_bytes());
                    }
                }
            }
        }
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        if r.take(4)? != STATE_MAGIC {
            return Err(Error::Format("not an optimizer state file".into()));
        }
        let version = r.u32()?;
        if version != OPTIMIZER_VERSION {
            return Err(Error::Format(format!(
                "optimizer state version {version}, expected {OPTIMIZER_VERSION}"
            )));
        }
        let opt = match r.u32()? {
            0 => Optimizer::Plain { rate: r.f64()? },
            1 => {
                let rate = r.f64()?;
                let step = r.u64()?;
                let n = r.usize()?;
                let mut read = || -> Result<Vec<f64>> {
                    let len = r.usize()?;
                    (0..len).map(|_| r.f64()).collect()
                };
                let m = (0..n).map(|_| read()).collect::<Result<Vec<_>>>()?;
                let v = (0..n).map(|_| read()).collect::<Result<Vec<_>>>()?;
                Optimizer::Adam { rate, step, m, v }
            }
            k => return Err(Error::Format(format!("unknown optimizer kind {k}"))),
        };
        if !r.rest().is_empty() {
            return Err(Error::Format("trailing bytes after optimizer state".into()));
        }
        Ok(opt)
    }
}
