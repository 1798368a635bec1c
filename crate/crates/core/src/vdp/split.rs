//! Context/target partitioning of a trajectory.
//!
//! Sizes are counted in loss windows. A segment holding `k` windows of
//! `history` past points and `horizon` future points spans
//! `k + history + horizon − 1` consecutive samples.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{State, Trajectory};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitMode {
    /// Context and target placed independently anywhere in the trajectory.
    Train,
    /// Context is the prefix; target immediately follows it.
    Inference,
}

/// A run of consecutive samples starting at `start` in its trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub start: usize,
    pub outputs: Vec<State>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContextTargetSplit {
    pub context: Segment,
    pub target: Segment,
    pub mode: SplitMode,
}

fn segment(traj: &Trajectory, start: usize, len: usize) -> Segment {
    Segment {
        start,
        outputs: traj.outputs[start..start + len].to_vec(),
    }
}

pub fn partition(
    traj: &Trajectory,
    mode: SplitMode,
    context_windows: usize,
    target_windows: usize,
    history: usize,
    horizon: usize,
    seed: u64,
) -> Result<ContextTargetSplit> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    partition_with_rng(traj, mode, context_windows, target_windows, history, horizon, &mut rng)
}

pub fn partition_with_rng(
    traj: &Trajectory,
    mode: SplitMode,
    context_windows: usize,
    target_windows: usize,
    history: usize,
    horizon: usize,
    rng: &mut impl Rng,
) -> Result<ContextTargetSplit> {
    if context_windows == 0 || target_windows == 0 || history == 0 || horizon == 0 {
        return Err(Error::Validation(
            "window counts, history and horizon must all be at least 1".into(),
        ));
    }
    let span = history + horizon - 1;
    let c_len = context_windows + span;
    let t_len = target_windows + span;
    let available = traj.len();
    let (c_start, t_start) = match mode {
        SplitMode::Train => {
            let required = c_len.max(t_len);
            if available < required {
                return Err(Error::Sizing {
                    what: "train partition".into(),
                    required,
                    available,
                });
            }
            let c = rng.gen_range(0..=available - c_len);
            let t = rng.gen_range(0..=available - t_len);
            (c, t)
        }
        SplitMode::Inference => {
            let required = c_len + t_len;
            if available < required {
                return Err(Error::Sizing {
                    what: "inference partition".into(),
                    required,
                    available,
                });
            }
            (0, c_len)
        }
    };
    Ok(ContextTargetSplit {
        context: segment(traj, c_start, c_len),
        target: segment(traj, t_start, t_len),
        mode,
    })
}
