//! Random linear network coding broadcast over time-division-duplex packet
//! erasure channels.
//!
//! The transmitter sends `N_i` coded packets back to back, where `i` is the
//! largest number of degrees of freedom any receiver still needs, then stops
//! and listens for one ACK per receiver. This crate provides:
//!
//! * [`model`]: system parameters and round timing,
//! * [`markov`]: the exact absorbing chain, its mean completion time and
//!   stopping bounds,
//! * [`policy`]: burst tables from the link optimizer, two heuristics and the
//!   broadcast search,
//! * [`baselines`]: uncoded Round-Robin references,
//! * [`galois`] and [`sim`]: GF(2^g) coding and a Monte Carlo simulator,
//! * [`cli`]: the experiment commands behind the `tddcast` binary.

pub mod baselines;
pub mod cli;
pub mod error;
pub mod galois;
pub mod markov;
pub mod model;
pub mod policy;
pub mod sim;

pub use error::{Error, Result};
pub use markov::{CompletionResult, DofState, StoppingBound, TransitionMatrix};
pub use model::{AckMode, ChannelParams, Gate, SystemParams};
pub use policy::{Policy, Provenance};

/// Formats a value with 9 significant digits.
pub fn fmt_sig(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.8e}")
    } else {
        format!("{x}")
    }
}
