//! Event channels of the interacting process at a given state.

use serde::{Deserialize, Serialize};

use super::interaction::ModelSpec;
use crate::error::ModelError;
use crate::state::PopulationState;

/// The five transition families of the interacting process.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    BaselineMove,
    InteractionMove,
    Immigration,
    BaselineDeath,
    InteractionDeath,
}

impl EventKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EventKind::BaselineMove => "baseline_move",
            EventKind::InteractionMove => "interaction_move",
            EventKind::Immigration => "immigration",
            EventKind::BaselineDeath => "baseline_death",
            EventKind::InteractionDeath => "interaction_death",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "baseline_move" => EventKind::BaselineMove,
            "interaction_move" => EventKind::InteractionMove,
            "immigration" => EventKind::Immigration,
            "baseline_death" => EventKind::BaselineDeath,
            "interaction_death" => EventKind::InteractionDeath,
            _ => return None,
        })
    }
}

/// How the post-jump load of a channel is determined.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Target {
    /// Fixed target load.
    Load(usize),
    /// Draw from the model's `alpha_sample` at the current density.
    SampleAlpha,
    /// Draw from the model's `beta_sample` at the current density.
    SampleBeta,
    /// The host leaves the population.
    Death,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Channel {
    pub kind: EventKind,
    /// Source load for individual-driven channels, `None` for immigration.
    pub load: Option<usize>,
    pub rate: f64,
    pub target: Target,
}

fn check_finite(rate: f64, kind: EventKind, load: Option<usize>) -> Result<f64, ModelError> {
    if rate.is_finite() && rate >= 0.0 {
        Ok(rate)
    } else {
        Err(ModelError::NonFiniteRate {
            kind: kind.as_str(),
            load,
            value: rate,
        })
    }
}

/// Fills `out` with every channel of positive rate, given dense counts and
/// the matching density `x = counts / N`. Reuses `moves` as scratch.
pub(crate) fn fill_channels(
    model: &ModelSpec,
    counts: &[u64],
    x: &[f64],
    n: u64,
    out: &mut Vec<Channel>,
    moves: &mut Vec<(usize, f64)>,
) -> Result<(), ModelError> {
    out.clear();
    let baseline = model.baseline();
    let inter = model.interaction();
    for (i, &c) in counts.iter().enumerate() {
        if c == 0 {
            continue;
        }
        let c = c as f64;
        baseline.moves(i, moves);
        for &(j, r) in moves.iter() {
            let rate = check_finite(c * r, EventKind::BaselineMove, Some(i))?;
            if rate > 0.0 {
                out.push(Channel {
                    kind: EventKind::BaselineMove,
                    load: Some(i),
                    rate,
                    target: Target::Load(j),
                });
            }
        }
        let d = check_finite(c * baseline.death(i), EventKind::BaselineDeath, Some(i))?;
        if d > 0.0 {
            out.push(Channel {
                kind: EventKind::BaselineDeath,
                load: Some(i),
                rate: d,
                target: Target::Death,
            });
        }
        if inter.alpha_active(i) {
            let a = check_finite(
                c * inter.alpha_total(i, x),
                EventKind::InteractionMove,
                Some(i),
            )?;
            if a > 0.0 {
                out.push(Channel {
                    kind: EventKind::InteractionMove,
                    load: Some(i),
                    rate: a,
                    target: Target::SampleAlpha,
                });
            }
        }
        if inter.delta_active(i) {
            let dd = check_finite(c * inter.delta(i, x), EventKind::InteractionDeath, Some(i))?;
            if dd > 0.0 {
                out.push(Channel {
                    kind: EventKind::InteractionDeath,
                    load: Some(i),
                    rate: dd,
                    target: Target::Death,
                });
            }
        }
    }
    if inter.has_immigration() {
        let b = check_finite(n as f64 * inter.beta_total(x), EventKind::Immigration, None)?;
        if b > 0.0 {
            out.push(Channel {
                kind: EventKind::Immigration,
                load: None,
                rate: b,
                target: Target::SampleBeta,
            });
        }
    }
    Ok(())
}

/// All channels of positive rate at state `ξ` with scaling `N`.
pub fn enumerate_events(
    model: &ModelSpec,
    state: &PopulationState,
    n: u64,
) -> Result<Vec<Channel>, ModelError> {
    if n == 0 {
        return Err(ModelError::InvalidParameter("N must be >= 1".into()));
    }
    let counts = state.to_dense();
    let inv = 1.0 / n as f64;
    let x: Vec<f64> = counts.iter().map(|&c| c as f64 * inv).collect();
    let mut out = Vec::new();
    fill_channels(model, &counts, &x, n, &mut out, &mut Vec::new())?;
    Ok(out)
}

/// Sum of all channel rates; zero exactly when the state is absorbing.
pub fn total_rate(model: &ModelSpec, state: &PopulationState, n: u64) -> Result<f64, ModelError> {
    Ok(enumerate_events(model, state, n)?.iter().map(|c| c.rate).sum())
}
