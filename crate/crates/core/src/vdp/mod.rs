//! The parameter-uncertain unforced van der Pol family and its datasets.
//!
//! Each system is `ẋ1 = x2`, `ẋ2 = θ·x2·(1 − x1²) − x1` with the full state
//! as output. Trajectories are integrated with fixed-step classical RK4 whose
//! step equals the sampling period.

mod io;
mod split;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub use io::{load_dataset, read_dataset, save_dataset, write_dataset, write_dataset_csv, DATASET_VERSION};
pub use split::{partition, partition_with_rng, ContextTargetSplit, Segment, SplitMode};

pub const DEFAULT_DT: f64 = 0.01;
pub const DEFAULT_THETA_RANGE: [f64; 2] = [0.5, 2.0];
pub const DEFAULT_N_SYSTEMS: usize = 200;
pub const QUERY_THETA: f64 = 1.572;
pub const QUERY_X0: [f64; 2] = [1.0, -0.5];
pub const QUERY_T_FINAL: f64 = 20.0;

const DIVERGENCE_LIMIT: f64 = 1e6;

pub type State = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams {
    pub theta: f64,
    pub x0: State,
    pub t_final: f64,
    pub dt: f64,
}

impl SystemParams {
    pub fn validate(&self) -> Result<()> {
        let finite = self.theta.is_finite()
            && self.x0.iter().all(|v| v.is_finite())
            && self.t_final.is_finite()
            && self.dt.is_finite();
        if !finite {
            return Err(Error::Validation("system parameters must be finite".into()));
        }
        if self.dt <= 0.0 {
            return Err(Error::Validation(format!("dt must be positive, got {}", self.dt)));
        }
        if self.t_final < 0.0 {
            return Err(Error::Validation(format!(
                "t_final must be non-negative, got {}",
                self.t_final
            )));
        }
        Ok(())
    }

    /// Number of samples, `floor(t_final / dt) + 1`.
    pub fn steps(&self) -> usize {
        // tolerate representation error such as 20.0 / 0.01 = 1999.9999...
        (self.t_final / self.dt + 1e-9).floor() as usize + 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub params: SystemParams,
    pub outputs: Vec<State>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceDataset {
    pub trajectories: Vec<Trajectory>,
    pub theta_range: [f64; 2],
    pub seed: u64,
}

/// Sampling protocol for source systems.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields, default)]
pub struct SourceSpec {
    pub n_systems: usize,
    pub theta_range: [f64; 2],
    pub x0_range: [f64; 2],
    pub t_final_range: [f64; 2],
    pub dt: f64,
    pub seed: u64,
}

impl Default for SourceSpec {
    fn default() -> Self {
        SourceSpec {
            n_systems: DEFAULT_N_SYSTEMS,
            theta_range: DEFAULT_THETA_RANGE,
            x0_range: [-1.0, 1.0],
            t_final_range: [10.0, 40.0],
            dt: DEFAULT_DT,
            seed: 0,
        }
    }
}

fn check_range(name: &str, r: [f64; 2]) -> Result<()> {
    if !(r[0].is_finite() && r[1].is_finite() && r[0] <= r[1]) {
        return Err(Error::Validation(format!("{name} range {r:?} must be finite with low <= high")));
    }
    Ok(())
}

fn uniform(rng: &mut impl Rng, [lo, hi]: [f64; 2]) -> f64 {
    lo + (hi - lo) * rng.gen::<f64>()
}

impl SourceSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_systems == 0 {
            return Err(Error::Validation("n_systems must be at least 1".into()));
        }
        check_range("theta", self.theta_range)?;
        check_range("x0", self.x0_range)?;
        check_range("t_final", self.t_final_range)?;
        if !(self.dt > 0.0) {
            return Err(Error::Validation("dt must be positive".into()));
        }
        Ok(())
    }

    /// Draws the parameters of every source system, in index order.
    pub fn sample_params(&self) -> Result<Vec<SystemParams>> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        Ok((0..self.n_systems)
            .map(|_| {
                let theta = uniform(&mut rng, self.theta_range);
                let x0 = [uniform(&mut rng, self.x0_range), uniform(&mut rng, self.x0_range)];
                let t_final = uniform(&mut rng, self.t_final_range);
                SystemParams {
                    theta,
                    x0,
                    t_final,
                    dt: self.dt,
                }
            })
            .collect())
    }

    pub fn generate(&self) -> Result<SourceDataset> {
        let trajectories = self
            .sample_params()?
            .iter()
            .map(simulate)
            .collect::<Result<Vec<_>>>()?;
        Ok(SourceDataset {
            trajectories,
            theta_range: self.theta_range,
            seed: self.seed,
        })
    }
}

pub fn vdp_derivative(state: State, theta: f64) -> Result<State> {
    if !(state.iter().all(|v| v.is_finite()) && theta.is_finite()) {
        return Err(Error::Numeric { op: "vdp_derivative" });
    }
    let [x1, x2] = state;
    Ok([x2, theta * x2 * (1.0 - x1 * x1) - x1])
}

fn axpy(x: State, h: f64, k: State) -> State {
    [x[0] + h * k[0], x[1] + h * k[1]]
}

/// One classical Runge–Kutta step of size `dt`.
pub fn rk4_step(state: State, theta: f64, dt: f64) -> Result<State> {
    let k1 = vdp_derivative(state, theta)?;
    let k2 = vdp_derivative(axpy(state, dt / 2.0, k1), theta)?;
    let k3 = vdp_derivative(axpy(state, dt / 2.0, k2), theta)?;
    let k4 = vdp_derivative(axpy(state, dt, k3), theta)?;
    Ok([
        state[0] + dt / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        state[1] + dt / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
    ])
}

/// Integrates one system, sampling every step. The first output is `x0`.
///
/// The returned trajectory's `t_final` is normalised to `(len − 1)·dt`, the
/// time of its last sample, so it survives a file roundtrip unchanged.
pub fn simulate(params: &SystemParams) -> Result<Trajectory> {
    params.validate()?;
    let n = params.steps();
    let mut outputs = Vec::with_capacity(n);
    let mut x = params.x0;
    outputs.push(x);
    for step in 1..n {
        x = rk4_step(x, params.theta, params.dt)?;
        let magnitude = x[0].abs().max(x[1].abs());
        if !(magnitude <= DIVERGENCE_LIMIT) {
            return Err(Error::Divergence { step, magnitude });
        }
        outputs.push(x);
    }
    Ok(Trajectory {
        params: SystemParams {
            t_final: (n - 1) as f64 * params.dt,
            ..*params
        },
        outputs,
    })
}

pub fn generate_source_dataset(n_systems: usize, theta_range: [f64; 2], seed: u64) -> Result<SourceDataset> {
    SourceSpec {
        n_systems,
        theta_range,
        seed,
        ..SourceSpec::default()
    }
    .generate()
}

pub fn generate_query(theta: f64, x0: State, t_final: f64) -> Result<Trajectory> {
    simulate(&SystemParams {
        theta,
        x0,
        t_final,
        dt: DEFAULT_DT,
    })
}

/// The default query system: θ* = 1.572 from `[1, −0.5]` over 20 s.
pub fn default_query() -> Result<Trajectory> {
    generate_query(QUERY_THETA, QUERY_X0, QUERY_T_FINAL)
}
