//! Monte Carlo simulation of the broadcast protocol with real random linear
//! coding.
//!
//! Each run keeps, per receiver, a decoder holding the received coding
//! vectors and the transmitter's belief of how many dofs that receiver still
//! needs. The belief only changes when an ACK gets through, which is the
//! quantity the analytic chain tracks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::galois::{DecoderState, FieldSpec};
use crate::model::SystemParams;
use crate::policy::Policy;

/// Default guard against runs that never finish.
pub const DEFAULT_ROUND_CAP: u64 = 1_000_000;

/// Identity of the per-run random streams, reported with batch output.
pub const GENERATOR: &str = "ChaCha8Rng seed_from_u64(seed), stream = run index";

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub params: SystemParams,
    pub policy: Policy,
    pub field: FieldSpec,
    pub runs: usize,
    pub seed: u64,
    /// Count every packet that reaches a rank-deficient receiver as
    /// innovative instead of running the decoder.
    pub ideal_field: bool,
    pub round_cap: u64,
}

impl SimConfig {
    /// Configuration over GF(2^g) with `g` taken from the parameters.
    pub fn new(params: SystemParams, policy: Policy, runs: usize, seed: u64, ideal_field: bool) -> Result<Self> {
        let field = FieldSpec::new(params.coeff_bits)?;
        let cfg = SimConfig { params, policy, field, runs, seed, ideal_field, round_cap: DEFAULT_ROUND_CAP };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.policy.block_size() != self.params.block_size {
            return Err(Error::PolicyMismatch { policy: self.policy.block_size(), params: self.params.block_size });
        }
        if self.runs == 0 {
            return Err(Error::InvalidParams("runs must be >= 1".into()));
        }
        Ok(())
    }

    /// Short stable digest of everything that affects the outcome except the
    /// seed and run count.
    pub fn config_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.params.to_config_string().as_bytes());
        h.update(self.policy.to_string().as_bytes());
        h.update(format!("field={}:{:#x} ideal={} cap={}", self.field.bits(), self.field.poly(), self.ideal_field, self.round_cap).as_bytes());
        h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    /// Independent random stream of run `run`.
    pub fn stream(&self, run: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(run as u64);
        rng
    }
}

/// Counters of one simulated transmission of a block.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SimOutcome {
    pub completion_time: f64,
    pub rounds: u64,
    pub packets_sent: u64,
    /// Packets that reached a receiver still missing dofs.
    pub received_while_deficient: u64,
    /// Of those, packets whose coding vector did not raise the rank.
    pub non_innovative_received: u64,
}

#[derive(Debug, Clone)]
enum Receiver {
    Ideal { rank: usize },
    Coded(DecoderState),
}

impl Receiver {
    fn rank(&self) -> usize {
        match self {
            Receiver::Ideal { rank } => *rank,
            Receiver::Coded(d) => d.rank(),
        }
    }
}

/// One block transmission, advanced a round at a time.
#[derive(Debug, Clone)]
pub struct Session<'a> {
    cfg: &'a SimConfig,
    round_time: Vec<f64>,
    beliefs: Vec<usize>,
    receivers: Vec<Receiver>,
    outcome: SimOutcome,
    coeffs: Vec<u32>,
}

impl<'a> Session<'a> {
    pub fn new(cfg: &'a SimConfig) -> Result<Self> {
        let m = cfg.params.block_size;
        let round_time = std::iter::once(Ok(0.0))
            .chain((1..=m).map(|i| cfg.params.round_duration(cfg.policy.burst(i))))
            .collect::<Result<Vec<_>>>()?;
        let receivers = (0..cfg.params.receivers())
            .map(|_| {
                if cfg.ideal_field {
                    Receiver::Ideal { rank: 0 }
                } else {
                    Receiver::Coded(DecoderState::new(cfg.field, m))
                }
            })
            .collect();
        Ok(Session {
            cfg,
            round_time,
            beliefs: vec![m; cfg.params.receivers()],
            receivers,
            outcome: SimOutcome::default(),
            coeffs: vec![0; m],
        })
    }

    /// Transmitter's view of the dofs each receiver still needs.
    pub fn beliefs(&self) -> &[usize] {
        &self.beliefs
    }

    /// Dofs each receiver actually still needs.
    pub fn true_needed(&self) -> Vec<usize> {
        let m = self.cfg.params.block_size;
        self.receivers.iter().map(|r| m - r.rank()).collect()
    }

    pub fn is_done(&self) -> bool {
        self.beliefs.iter().all(|&b| b == 0)
    }

    pub fn outcome(&self) -> SimOutcome {
        self.outcome
    }

    /// Sends one burst sized by the neediest believed receiver, then
    /// collects the ACKs.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        let i = self.beliefs.iter().copied().max().unwrap_or(0);
        if i == 0 {
            return Ok(());
        }
        if self.outcome.rounds >= self.cfg.round_cap {
            return Err(Error::RoundCapExceeded { cap: self.cfg.round_cap });
        }
        let m = self.cfg.params.block_size;
        let burst = self.cfg.policy.burst(i);
        let field_size = self.cfg.field.size();
        for _ in 0..burst {
            if !self.cfg.ideal_field {
                for c in self.coeffs.iter_mut() {
                    *c = rng.gen_range(0..field_size) as u32;
                }
            }
            for (rx, ch) in self.receivers.iter_mut().zip(&self.cfg.params.channels) {
                if rng.gen::<f64>() < ch.pe {
                    continue;
                }
                if rx.rank() == m {
                    continue;
                }
                self.outcome.received_while_deficient += 1;
                let innovative = match rx {
                    Receiver::Ideal { rank } => {
                        *rank += 1;
                        true
                    }
                    Receiver::Coded(d) => d.absorb(&self.coeffs),
                };
                if !innovative {
                    self.outcome.non_innovative_received += 1;
                }
            }
        }
        for ((belief, rx), ch) in self.beliefs.iter_mut().zip(&self.receivers).zip(&self.cfg.params.channels) {
            if *belief == 0 {
                continue;
            }
            // fresh ACK erasure draw every round
            if rng.gen::<f64>() >= ch.pe_ack {
                *belief = m - rx.rank();
            }
        }
        self.outcome.rounds += 1;
        self.outcome.packets_sent += burst as u64;
        self.outcome.completion_time += self.round_time[i];
        Ok(())
    }
}

/// Simulates the transmission of one block until every ACKed dof count is 0.
pub fn run_once<R: Rng + ?Sized>(cfg: &SimConfig, rng: &mut R) -> Result<SimOutcome> {
    let mut session = Session::new(cfg)?;
    while !session.is_done() {
        session.step(rng)?;
    }
    Ok(session.outcome())
}

/// Mean, standard error and percentiles of one outcome field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stats {
    pub mean: f64,
    /// `NaN` for a single run.
    pub stderr: f64,
    pub p05: f64,
    pub p50: f64,
    pub p95: f64,
}

impl Stats {
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        // nearest-rank percentile
        let pct = |q: f64| sorted[((q * n).ceil() as usize).clamp(1, sorted.len()) - 1];
        Stats { mean, stderr: (var / n).sqrt(), p05: pct(0.05), p50: pct(0.5), p95: pct(0.95) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchSummary {
    pub config_hash: String,
    pub seed: u64,
    pub runs: usize,
    pub completion_time: Stats,
    pub rounds: Stats,
    pub packets_sent: Stats,
    /// Non-innovative receptions over receptions at rank-deficient receivers.
    pub non_innovative_rate: f64,
}

impl BatchSummary {
    pub const CSV_HEADER: [&'static str; 7] =
        ["config_hash", "seed", "mean_time", "stderr_time", "mean_rounds", "mean_packets", "non_innovative_rate"];

    pub fn csv_record(&self) -> Vec<String> {
        vec![
            self.config_hash.clone(),
            self.seed.to_string(),
            crate::fmt_sig(self.completion_time.mean),
            crate::fmt_sig(self.completion_time.stderr),
            crate::fmt_sig(self.rounds.mean),
            crate::fmt_sig(self.packets_sent.mean),
            crate::fmt_sig(self.non_innovative_rate),
        ]
    }
}

/// Runs every replication on its own stream; the result does not depend on
/// scheduling.
pub fn run_batch(cfg: &SimConfig) -> Result<BatchSummary> {
    Ok(summarize(cfg, &run_outcomes(cfg)?))
}

pub fn run_outcomes(cfg: &SimConfig) -> Result<Vec<SimOutcome>> {
    cfg.validate()?;
    (0..cfg.runs)
        .into_par_iter()
        .map(|run| run_once(cfg, &mut cfg.stream(run)))
        .collect()
}

pub fn summarize(cfg: &SimConfig, outcomes: &[SimOutcome]) -> BatchSummary {
    let col = |f: fn(&SimOutcome) -> f64| outcomes.iter().map(f).collect::<Vec<_>>();
    let received: u64 = outcomes.iter().map(|o| o.received_while_deficient).sum();
    let wasted: u64 = outcomes.iter().map(|o| o.non_innovative_received).sum();
    BatchSummary {
        config_hash: cfg.config_hash(),
        seed: cfg.seed,
        runs: outcomes.len(),
        completion_time: Stats::from_samples(&col(|o| o.completion_time)),
        rounds: Stats::from_samples(&col(|o| o.rounds as f64)),
        packets_sent: Stats::from_samples(&col(|o| o.packets_sent as f64)),
        non_innovative_rate: if received == 0 { 0.0 } else { wasted as f64 / received as f64 },
    }
}
