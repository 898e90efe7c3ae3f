//! Burst-size tables `N_1..N_M` and the optimizers that produce them.
//!
//! The link case (one receiver) is solved exactly state by state, since the
//! expected time from `s` dofs only depends on states with fewer dofs. The
//! broadcast heuristics reduce the system to an equivalent link; the exact
//! broadcast optimizer runs coordinate descent on the full chain inside the
//! window spanned by the two heuristics.

use std::fmt;
use std::io::{BufRead, Write};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::markov::{self, SINGULAR_TOL};
use crate::model::{ChannelParams, SystemParams};

/// Where a burst table came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Provenance {
    Optimal,
    WorstLink,
    CombinedErasure,
    Manual,
}

impl Provenance {
    pub fn tag(&self) -> &'static str {
        match self {
            Provenance::Optimal => "optimal",
            Provenance::WorstLink => "worst-link",
            Provenance::CombinedErasure => "combined-erasure",
            Provenance::Manual => "manual",
        }
    }
}

impl std::str::FromStr for Provenance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "optimal" => Ok(Provenance::Optimal),
            "worst-link" => Ok(Provenance::WorstLink),
            "combined-erasure" => Ok(Provenance::CombinedErasure),
            "manual" => Ok(Provenance::Manual),
            other => Err(Error::InvalidPolicy(format!("unknown provenance `{other}`"))),
        }
    }
}

/// Burst length `N_i` to send when the neediest receiver lacks `i` dofs.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Policy {
    bursts: Vec<u32>,
    provenance: Provenance,
}

impl Policy {
    /// `bursts[i - 1]` is `N_i`; every `N_i` must be at least `i`.
    pub fn new(bursts: Vec<u32>, provenance: Provenance) -> Result<Self> {
        if bursts.is_empty() {
            return Err(Error::InvalidPolicy("empty burst table".into()));
        }
        for (k, &b) in bursts.iter().enumerate() {
            if (b as usize) < k + 1 {
                return Err(Error::InvalidPolicy(format!("N_{} = {} is below {}", k + 1, b, k + 1)));
            }
        }
        Ok(Policy { bursts, provenance })
    }

    /// `N_i = i`: exactly enough packets when nothing is lost.
    pub fn minimal(block_size: usize) -> Self {
        Policy { bursts: (1..=block_size as u32).collect(), provenance: Provenance::Manual }
    }

    pub fn block_size(&self) -> usize {
        self.bursts.len()
    }

    /// `N_i` for `1 <= i <= M`.
    pub fn burst(&self, i: usize) -> u32 {
        self.bursts[i - 1]
    }

    pub fn bursts(&self) -> &[u32] {
        &self.bursts
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    pub fn write_table<W: Write>(&self, mut w: W) -> Result<()> {
        write!(w, "{self}")?;
        Ok(())
    }

    /// Parses the look-up table format written by [`Policy::write_table`].
    pub fn read_table<R: BufRead>(r: R) -> Result<Self> {
        let mut declared_m = None;
        let mut provenance = Provenance::Manual;
        let mut rows: Vec<(usize, u32)> = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            let bad = |msg: String| Error::Parse { line: lineno + 1, msg };
            if let Some(header) = line.strip_prefix('#') {
                for tok in header.split_whitespace() {
                    if let Some(v) = tok.strip_prefix("M=") {
                        declared_m = Some(v.parse::<usize>().map_err(|_| bad(format!("bad M `{v}`")))?);
                    } else if let Some(v) = tok.strip_prefix("provenance=") {
                        provenance = v.parse()?;
                    }
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let mut it = line.split_whitespace();
            let (Some(i), Some(n), None) = (it.next(), it.next(), it.next()) else {
                return Err(bad(format!("expected `i N_i`, got `{line}`")));
            };
            let i = i.parse().map_err(|_| bad(format!("bad index `{i}`")))?;
            let n = n.parse().map_err(|_| bad(format!("bad burst `{n}`")))?;
            rows.push((i, n));
        }
        let m = declared_m.ok_or_else(|| Error::InvalidPolicy("missing `# M=` header".into()))?;
        if rows.len() != m || rows.iter().enumerate().any(|(k, &(i, _))| i != k + 1) {
            return Err(Error::InvalidPolicy(format!("expected rows i = 1..{m} in order")));
        }
        Policy::new(rows.into_iter().map(|(_, n)| n).collect(), provenance)
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "# M={} provenance={}", self.block_size(), self.provenance.tag())?;
        for (k, b) in self.bursts.iter().enumerate() {
            writeln!(f, "{} {}", k + 1, b)?;
        }
        Ok(())
    }
}

/// Search settings shared by the optimizers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchConfig {
    /// Stop a per-state scan after this many consecutive non-improving
    /// burst lengths.
    pub patience: u32,
    /// Largest burst length considered, as a multiple of M.
    pub cap_factor: u32,
    /// Extra width added on both sides of the heuristic window.
    pub slack: u32,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig { patience: 5, cap_factor: 50, slack: 5 }
    }
}

impl SearchConfig {
    pub fn cap(&self, block_size: usize) -> u32 {
        self.cap_factor.saturating_mul(block_size as u32).max(block_size as u32)
    }
}

/// A single-receiver approximation of the broadcast system.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkParams {
    pub pe: f64,
    pub pe_ack: f64,
    /// Source of `T_p`, `T_w`, M and the gate.
    pub system: SystemParams,
}

impl LinkParams {
    fn channel(&self) -> ChannelParams {
        ChannelParams { pe: self.pe, pe_ack: self.pe_ack, t_rt: 0.0 }
    }
}

/// Optimal link table with the expected time from every dof count.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkSolution {
    pub policy: Policy,
    /// `times[s]` is the expected completion time from `s` dofs; `times[0] = 0`.
    pub times: Vec<f64>,
}

impl LinkSolution {
    pub fn objective(&self) -> f64 {
        *self.times.last().unwrap()
    }
}

/// Link objective from `s` dofs with a burst of `k`, given the optimal times
/// of every smaller state. Infinite when the burst cannot leave `s`.
fn link_state_time(lp: &LinkParams, ch: &ChannelParams, s: usize, k: u32, times: &[f64]) -> Result<f64> {
    let p = &lp.system;
    let stay = markov::receiver_transition(s, s, k, ch, p.gate)?;
    let pivot = 1.0 - stay;
    if pivot <= SINGULAR_TOL {
        return Ok(f64::INFINITY);
    }
    let mut acc = p.round_duration(k)?;
    // same summation order as the chain's back substitution
    for sp in (1..s).rev() {
        acc += markov::receiver_transition(s, sp, k, ch, p.gate)? * times[sp];
    }
    Ok(acc / pivot)
}

pub fn optimize_link_with(lp: &LinkParams, cfg: &SearchConfig) -> Result<LinkSolution> {
    lp.system.validate()?;
    if !(0.0..=1.0).contains(&lp.pe) || !(0.0..=1.0).contains(&lp.pe_ack) {
        return Err(Error::InvalidParams("link probabilities outside [0, 1]".into()));
    }
    if lp.pe >= 1.0 || lp.pe_ack >= 1.0 {
        return Err(Error::InfeasibleLink);
    }
    let m = lp.system.block_size;
    let cap = cfg.cap(m);
    let ch = lp.channel();
    let mut times = vec![0.0; m + 1];
    let mut bursts = Vec::with_capacity(m);
    for s in 1..=m {
        let mut best = (f64::INFINITY, s as u32);
        let mut idle = 0;
        for k in s as u32..=cap {
            let t = link_state_time(lp, &ch, s, k, &times)?;
            if t < best.0 {
                best = (t, k);
                idle = 0;
            } else {
                idle += 1;
                if idle >= cfg.patience {
                    break;
                }
            }
        }
        if !best.0.is_finite() {
            return Err(Error::InfeasibleLink);
        }
        times[s] = best.0;
        bursts.push(best.1);
    }
    Ok(LinkSolution { policy: Policy::new(bursts, Provenance::Optimal)?, times })
}

/// Burst table minimizing the mean completion time of a single link.
pub fn optimize_link(lp: &LinkParams) -> Result<Policy> {
    Ok(optimize_link_with(lp, &SearchConfig::default())?.policy)
}

/// Link with the largest data and ACK erasure probabilities of any receiver.
pub fn worst_link(p: &SystemParams) -> LinkParams {
    let pe = p.channels.iter().map(|c| c.pe).fold(0.0, f64::max);
    let pe_ack = p.channels.iter().map(|c| c.pe_ack).fold(0.0, f64::max);
    LinkParams { pe, pe_ack, system: p.clone() }
}

/// Link that loses a packet whenever any receiver loses it.
pub fn combined_link(p: &SystemParams) -> LinkParams {
    let pe = 1.0 - p.channels.iter().map(|c| 1.0 - c.pe).product::<f64>();
    let pe_ack = 1.0 - p.channels.iter().map(|c| 1.0 - c.pe_ack).product::<f64>();
    LinkParams { pe, pe_ack, system: p.clone() }
}

pub fn heuristic_worst_link(p: &SystemParams) -> Result<Policy> {
    Ok(optimize_link(&worst_link(p))?.with_provenance(Provenance::WorstLink))
}

pub fn heuristic_combined(p: &SystemParams) -> Result<Policy> {
    Ok(optimize_link(&combined_link(p))?.with_provenance(Provenance::CombinedErasure))
}

/// Result of the broadcast search.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactSolution {
    pub policy: Policy,
    pub objective: f64,
    /// Inclusive `(lo, hi)` search window per `i`.
    pub windows: Vec<(u32, u32)>,
    /// Number of full-chain evaluations performed.
    pub evaluations: usize,
}

fn objective(bursts: &[u32], p: &SystemParams) -> Result<f64> {
    let policy = Policy::new(bursts.to_vec(), Provenance::Manual)?;
    Ok(markov::mean_completion_time(&policy, p)?.mean_time)
}

/// Accepts `candidate` over `current` only on a relative gain above
/// rounding noise.
fn improves(candidate: f64, current: f64) -> bool {
    candidate < current - 1e-12 * current.abs()
}

fn descend(
    start: &[u32],
    windows: &[(u32, u32)],
    p: &SystemParams,
    evaluations: &mut usize,
) -> Result<(Vec<u32>, f64)> {
    let mut bursts = start.to_vec();
    let mut current = objective(&bursts, p)?;
    *evaluations += 1;
    loop {
        let mut changed = false;
        for (k, &(lo, hi)) in windows.iter().enumerate() {
            let scored: Vec<(u32, f64)> = (lo..=hi)
                .into_par_iter()
                .filter(|&c| c != bursts[k])
                .map(|c| {
                    let mut trial = bursts.clone();
                    trial[k] = c;
                    objective(&trial, p).map(|t| (c, t))
                })
                .collect::<Result<_>>()?;
            *evaluations += scored.len();
            // smallest burst wins ties
            let best = scored
                .into_iter()
                .fold(None::<(u32, f64)>, |acc, (c, t)| match acc {
                    Some((bc, bt)) if bt < t || (bt == t && bc < c) => Some((bc, bt)),
                    _ => Some((c, t)),
                });
            if let Some((c, t)) = best {
                if improves(t, current) || (t == current && c < bursts[k]) {
                    bursts[k] = c;
                    current = t;
                    changed = true;
                }
            }
        }
        if !changed {
            return Ok((bursts, current));
        }
    }
}

pub fn optimize_exact_with(p: &SystemParams, cfg: &SearchConfig) -> Result<ExactSolution> {
    p.validate()?;
    if p.channels.iter().any(|c| c.pe >= 1.0 || c.pe_ack >= 1.0) {
        return Err(Error::InfeasibleLink);
    }
    let wl = heuristic_worst_link(p)?;
    let comb = heuristic_combined(p)?;
    let cap = cfg.cap(p.block_size);
    let windows: Vec<(u32, u32)> = (1..=p.block_size)
        .map(|i| {
            let (a, b) = (wl.burst(i), comb.burst(i));
            let lo = a.min(b).saturating_sub(cfg.slack).max(i as u32);
            let hi = a.max(b).saturating_add(cfg.slack).min(cap).max(lo);
            (lo, hi)
        })
        .collect();
    let mut evaluations = 0;
    let (mut bursts, mut best) = descend(wl.bursts(), &windows, p, &mut evaluations)?;
    // the combined table can sit in a different basin; keep whichever wins
    let (other, other_t) = descend(comb.bursts(), &windows, p, &mut evaluations)?;
    if improves(other_t, best) {
        bursts = other;
        best = other_t;
    }
    Ok(ExactSolution {
        policy: Policy::new(bursts, Provenance::Optimal)?,
        objective: best,
        windows,
        evaluations,
    })
}

/// Burst table minimizing the broadcast mean completion time.
pub fn optimize_exact(p: &SystemParams) -> Result<Policy> {
    Ok(optimize_exact_with(p, &SearchConfig::default())?.policy)
}
