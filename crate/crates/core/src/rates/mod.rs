//! Transition rates of the interacting process and their certificates.

pub mod baseline;
pub mod checks;
pub mod constants;
pub mod events;
pub mod interaction;

pub use baseline::{truncated_generator, BaselineGenerator, BaselineRates, LoadDecay, NullBaseline};
pub use checks::{
    check_growth, check_lipschitz_sampled, check_semigroup_l11, check_semigroup_moment,
    check_tail_limsup, lemma_a1_battery,
    semigroup_moment, CheckRow, GrowthReport, LipschitzSampler,
};
pub use constants::{
    bound_constants, host_growth_bound, lipschitz_f, lipschitz_f_model, martingale_growth,
    moment_bound, BoundConstants,
};
pub use events::{enumerate_events, total_rate, Channel, EventKind, Target};
pub use interaction::{Envelope, Envelopes, Interaction, ModelSpec, NoInteraction};
