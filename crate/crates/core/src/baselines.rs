//! Uncoded Round-Robin broadcast over symmetric channels with lossless ACKs,
//! for full-duplex and time-division-duplex links.

use crate::error::{Error, Result};
use crate::model::SystemParams;

/// Default truncation tolerance of [`expected_max_retx`].
pub const DEFAULT_SERIES_TOL: f64 = 1e-9;

/// Which end of the `γ ∈ [1/2, 1]` band to report for full duplex.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GammaMode {
    /// γ = 1/2
    Lower,
    /// γ = 1
    Upper,
    Both,
}

impl std::str::FromStr for GammaMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lower" => Ok(GammaMode::Lower),
            "upper" => Ok(GammaMode::Upper),
            "both" => Ok(GammaMode::Both),
            other => Err(Error::InvalidParams(format!("unknown gamma mode `{other}`"))),
        }
    }
}

/// How many full passes the TDD Round-Robin scheme is charged for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TddReading {
    /// `1 + max X` passes: every packet goes out once, then `max X` more
    /// rounds until the slowest (packet, receiver) pair succeeds.
    #[default]
    CountsFirstPass,
    /// `E[max X]` passes exactly as the closed form reads; collapses to 0 at
    /// `pe = 0`, where one pass is reported instead and flagged.
    Literal,
}

impl std::str::FromStr for TddReading {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "first-pass" | "counts-first-pass" => Ok(TddReading::CountsFirstPass),
            "literal" => Ok(TddReading::Literal),
            other => Err(Error::InvalidParams(format!("unknown RR-TDD reading `{other}`"))),
        }
    }
}

/// Round-Robin parameters; only constructible from symmetric, ACK-lossless
/// systems.
#[derive(Debug, Clone, PartialEq)]
pub struct RRParams {
    pub pe: f64,
    pub block_size: usize,
    pub receivers: usize,
    pub packet_duration: f64,
    pub wait_time: f64,
    pub gamma_mode: GammaMode,
    pub tdd_reading: TddReading,
    pub tol: f64,
}

impl RRParams {
    pub fn new(p: &SystemParams, gamma_mode: GammaMode) -> Result<Self> {
        p.validate()?;
        let pe = p.channels[0].pe;
        if p.channels.iter().any(|c| c.pe != pe) {
            return Err(Error::RoundRobinRestriction(
                "symmetric channels (identical erasure probability at every receiver)".into(),
            ));
        }
        if p.channels.iter().any(|c| c.pe_ack != 0.0) {
            return Err(Error::RoundRobinRestriction("lossless ACKs (pe_ack = 0)".into()));
        }
        if pe >= 1.0 {
            return Err(Error::InfeasibleLink);
        }
        Ok(RRParams {
            pe,
            block_size: p.block_size,
            receivers: p.receivers(),
            packet_duration: p.packet_duration(),
            wait_time: p.wait_time(),
            gamma_mode,
            tdd_reading: TddReading::default(),
            tol: DEFAULT_SERIES_TOL,
        })
    }

    fn max_retx(&self) -> Result<f64> {
        expected_max_retx(self.pe, self.block_size, self.receivers, self.tol)
    }
}

/// `E[max X]` over the `M·N` (packet, receiver) pairs, where `1 + X` is the
/// number of transmissions a packet needs to reach a receiver:
/// `Σ_{t>=1} [1 - (1 - pe^t)^{MN}]`, truncated once the geometric tail bound
/// `MN pe^{t+1} / (1 - pe)` drops below `tol`.
pub fn expected_max_retx(pe: f64, block_size: usize, receivers: usize, tol: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&pe) {
        return Err(Error::InvalidParams(format!("pe = {pe} must be in [0, 1) for a finite series")));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidParams("tol must be > 0".into()));
    }
    let pairs = (block_size * receivers) as f64;
    let mut sum = 0.0;
    let mut pe_t = 1.0;
    loop {
        pe_t *= pe;
        // 1 - (1 - x)^K without cancellation for tiny x
        sum += -(pairs * (-pe_t).ln_1p()).exp_m1();
        if pairs * pe_t * pe / (1.0 - pe) < tol {
            return Ok(sum);
        }
    }
}

/// Full-duplex Round-Robin completion time `T_w + T_p M (γ + E[max X])`,
/// as `(γ = 1/2, γ = 1)`. Entries not requested by the gamma mode are `None`.
pub fn rr_full_duplex(rp: &RRParams) -> Result<(Option<f64>, Option<f64>)> {
    let x = rp.max_retx()?;
    let at = |gamma: f64| rp.wait_time + rp.packet_duration * rp.block_size as f64 * (gamma + x);
    Ok(match rp.gamma_mode {
        GammaMode::Lower => (Some(at(0.5)), None),
        GammaMode::Upper => (None, Some(at(1.0))),
        GammaMode::Both => (Some(at(0.5)), Some(at(1.0))),
    })
}

/// TDD Round-Robin completion time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RrTdd {
    pub time: f64,
    /// Set when the literal reading gave zero (no losses) and one full pass
    /// `T_w + T_p M` was reported instead.
    pub adjusted: bool,
}

/// TDD Round-Robin: all M packets back to back, then a listening window,
/// repeated until every receiver has the block. Each pass costs
/// `T_w + T_p M`; the pass count follows `rp.tdd_reading`.
pub fn rr_tdd(rp: &RRParams) -> Result<RrTdd> {
    let pass = rp.wait_time + rp.packet_duration * rp.block_size as f64;
    let x = rp.max_retx()?;
    Ok(match rp.tdd_reading {
        TddReading::CountsFirstPass => RrTdd { time: pass * (1.0 + x), adjusted: false },
        TddReading::Literal if rp.pe == 0.0 => RrTdd { time: pass, adjusted: true },
        TddReading::Literal => RrTdd { time: pass * x, adjusted: false },
    })
}
