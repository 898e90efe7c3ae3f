//! Experiment commands. Each function is a thin wrapper over the library and
//! returns the text the binary prints, so the output can be tested directly.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::baselines::{self, GammaMode, RRParams, TddReading};
use crate::error::{Error, Result};
use crate::fmt_sig;
use crate::markov::{self, StateSpace};
use crate::model::SystemParams;
use crate::policy::{self, Policy};
use crate::sim::{self, SimConfig};

/// Burst-table generator selectable on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizeMethod {
    Exact,
    WorstLink,
    Combined,
}

impl std::str::FromStr for OptimizeMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" | "optimal" => Ok(OptimizeMethod::Exact),
            "worst-link" | "worst_link" => Ok(OptimizeMethod::WorstLink),
            "combined" => Ok(OptimizeMethod::Combined),
            other => Err(Error::InvalidParams(format!("unknown method `{other}`"))),
        }
    }
}

pub fn make_policy(p: &SystemParams, method: OptimizeMethod) -> Result<Policy> {
    match method {
        OptimizeMethod::Exact => policy::optimize_exact(p),
        OptimizeMethod::WorstLink => policy::heuristic_worst_link(p),
        OptimizeMethod::Combined => policy::heuristic_combined(p),
    }
}

fn check_m(p: &SystemParams, pol: &Policy) -> Result<()> {
    if pol.block_size() != p.block_size {
        return Err(Error::PolicyMismatch { policy: pol.block_size(), params: p.block_size });
    }
    Ok(())
}

/// `key: value` report of the mean completion time under `pol`.
pub fn cmd_analyze(p: &SystemParams, pol: &Policy, per_state: bool) -> Result<String> {
    check_m(p, pol)?;
    let result = markov::mean_completion_time(pol, p)?;
    let mut out = String::new();
    let _ = writeln!(out, "M: {}", p.block_size);
    let _ = writeln!(out, "N: {}", p.receivers());
    let _ = writeln!(out, "policy: {}", pol.provenance().tag());
    let _ = writeln!(out, "packet_duration: {}", fmt_sig(p.packet_duration()));
    let _ = writeln!(out, "ack_duration: {}", fmt_sig(p.ack_duration()));
    let _ = writeln!(out, "wait_time: {}", fmt_sig(p.wait_time()));
    for i in 1..=p.block_size {
        let _ = writeln!(out, "N_{i}: {}", pol.burst(i));
        let _ = writeln!(out, "round_duration_{i}: {}", fmt_sig(p.round_duration(pol.burst(i))?));
    }
    let _ = writeln!(out, "mean_completion_time: {}", fmt_sig(result.mean_time));
    if per_state {
        let space = StateSpace::new(p.block_size, p.receivers())?;
        for (k, t) in result.per_state_times.iter().enumerate() {
            let _ = writeln!(out, "T{}: {}", space.state(k), fmt_sig(*t));
        }
    }
    Ok(out)
}

/// Parses `key: value` lines produced by the report commands.
pub fn parse_report(text: &str) -> Vec<(String, String)> {
    text.lines()
        .filter_map(|l| l.split_once(": "))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

#[derive(Debug, Clone)]
pub struct OptimizeReport {
    pub policy: Policy,
    pub objective: f64,
    pub elapsed: Duration,
}

impl OptimizeReport {
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "method: {}", self.policy.provenance().tag());
        let _ = writeln!(out, "objective: {}", fmt_sig(self.objective));
        let _ = writeln!(out, "search_seconds: {:.6}", self.elapsed.as_secs_f64());
        let bursts: Vec<String> = self.policy.bursts().iter().map(|b| b.to_string()).collect();
        let _ = writeln!(out, "bursts: {}", bursts.join(" "));
        out
    }
}

/// Computes a burst table and its broadcast objective, timing the search.
pub fn cmd_optimize(p: &SystemParams, method: OptimizeMethod) -> Result<OptimizeReport> {
    let started = Instant::now();
    let policy = make_policy(p, method)?;
    let elapsed = started.elapsed();
    let objective = markov::mean_completion_time(&policy, p)?.mean_time;
    Ok(OptimizeReport { policy, objective, elapsed })
}

/// Eigenvalue bound and exact count of ACK stops.
pub fn cmd_bound(p: &SystemParams, pol: &Policy, epsilon: f64) -> Result<String> {
    check_m(p, pol)?;
    let b = markov::lemma1_bound(pol, p, epsilon)?;
    let mut out = String::new();
    let _ = writeln!(out, "epsilon: {}", fmt_sig(epsilon));
    let _ = writeln!(out, "lambda2_magnitude: {}", fmt_sig(b.lambda2_magnitude));
    let _ = writeln!(out, "eigen_distinct: {}", b.eigen_distinct);
    match (b.g, b.aleph_bound) {
        (Some(g), Some(a)) => {
            let _ = writeln!(out, "G: {}", fmt_sig(g));
            let _ = writeln!(out, "aleph_bound: {}", fmt_sig(a));
        }
        _ => {
            let _ = writeln!(out, "G: n/a");
            let _ = writeln!(out, "aleph_bound: n/a");
        }
    }
    let _ = writeln!(out, "aleph_empirical: {}", b.aleph_empirical);
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct SimulateReport {
    pub summary: sim::BatchSummary,
    pub analytic: f64,
    /// `(simulated - analytic) / stderr`.
    pub z: f64,
    /// `(run index, error)` of runs that did not finish.
    pub failed: Vec<(usize, Error)>,
}

impl SimulateReport {
    pub fn csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(sim::BatchSummary::CSV_HEADER).map_err(|e| Error::Io(e.to_string()))?;
        w.write_record(self.summary.csv_record()).map_err(|e| Error::Io(e.to_string()))?;
        into_string(w)
    }

    pub fn comparison_line(&self) -> String {
        format!(
            "analytic_mean_time: {} simulated_mean_time: {} z: {:.3}",
            fmt_sig(self.analytic),
            fmt_sig(self.summary.completion_time.mean),
            self.z
        )
    }
}

fn into_string(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
}

/// Monte Carlo batch compared against the analytic mean.
pub fn cmd_simulate(p: &SystemParams, pol: &Policy, runs: usize, seed: u64, ideal_field: bool) -> Result<SimulateReport> {
    check_m(p, pol)?;
    let cfg = SimConfig::new(p.clone(), pol.clone(), runs, seed, ideal_field)?;
    let results: Vec<Result<sim::SimOutcome>> =
        (0..runs).into_par_iter().map(|r| sim::run_once(&cfg, &mut cfg.stream(r))).collect();
    let mut outcomes = Vec::with_capacity(runs);
    let mut failed = Vec::new();
    for (r, res) in results.into_iter().enumerate() {
        match res {
            Ok(o) => outcomes.push(o),
            Err(e) => failed.push((r, e)),
        }
    }
    if outcomes.is_empty() {
        return Err(failed.swap_remove(0).1);
    }
    let summary = sim::summarize(&cfg, &outcomes);
    let analytic = markov::mean_completion_time(pol, p)?.mean_time;
    let z = (summary.completion_time.mean - analytic) / summary.completion_time.stderr;
    Ok(SimulateReport { summary, analytic, z, failed })
}

/// Coding schemes versus the Round-Robin baselines at the configured
/// erasure probability, as CSV `scheme,time,ratio_to_optimal,note`.
pub fn cmd_compare(p: &SystemParams, gamma: GammaMode, reading: TddReading) -> Result<String> {
    let mut rr = RRParams::new(p, gamma)?;
    rr.tdd_reading = reading;
    let optimal = markov::mean_completion_time(&policy::optimize_exact(p)?, p)?.mean_time;
    let worst = markov::mean_completion_time(&policy::heuristic_worst_link(p)?, p)?.mean_time;
    let tdd = baselines::rr_tdd(&rr)?;
    let (fd_lo, fd_hi) = baselines::rr_full_duplex(&rr)?;

    let mut rows: Vec<(&str, f64, &str)> = vec![
        ("nc_optimal", optimal, ""),
        ("nc_worst_link", worst, ""),
        ("rr_tdd", tdd.time, if tdd.adjusted { "adjusted: single pass at pe=0" } else { "" }),
    ];
    if let Some(t) = fd_lo {
        rows.push(("rr_full_duplex_gamma_0.5", t, ""));
    }
    if let Some(t) = fd_hi {
        rows.push(("rr_full_duplex_gamma_1", t, ""));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(["scheme", "time", "ratio_to_optimal", "note"]).map_err(io)?;
    for (name, t, note) in rows {
        w.write_record([name, &fmt_sig(t), &fmt_sig(t / optimal), note]).map_err(io)?;
    }
    into_string(w)
}

/// Scheme evaluated at every sweep point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SweepMethod {
    Optimal,
    WorstLink,
    Combined,
    RrFullDuplex,
    RrTdd,
    Simulate,
}

impl SweepMethod {
    pub fn name(&self) -> &'static str {
        match self {
            SweepMethod::Optimal => "optimal",
            SweepMethod::WorstLink => "worst_link",
            SweepMethod::Combined => "combined",
            SweepMethod::RrFullDuplex => "rr_full_duplex",
            SweepMethod::RrTdd => "rr_tdd",
            SweepMethod::Simulate => "simulate",
        }
    }
}

impl std::str::FromStr for SweepMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().replace('-', "_").as_str() {
            "optimal" | "exact" => Ok(SweepMethod::Optimal),
            "worst_link" => Ok(SweepMethod::WorstLink),
            "combined" => Ok(SweepMethod::Combined),
            "rr_full_duplex" => Ok(SweepMethod::RrFullDuplex),
            "rr_tdd" => Ok(SweepMethod::RrTdd),
            "simulate" => Ok(SweepMethod::Simulate),
            other => Err(Error::InvalidParams(format!("unknown sweep method `{other}`"))),
        }
    }
}

/// Parameter varied by a sweep; applied to every receiver.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepVar {
    Pe,
    PeAck,
}

impl SweepVar {
    pub fn name(&self) -> &'static str {
        match self {
            SweepVar::Pe => "pe",
            SweepVar::PeAck => "pe_ack",
        }
    }

    fn apply(&self, base: &SystemParams, value: f64) -> SystemParams {
        let mut p = base.clone();
        for ch in &mut p.channels {
            match self {
                SweepVar::Pe => ch.pe = value,
                SweepVar::PeAck => ch.pe_ack = value,
            }
        }
        p
    }
}

impl std::str::FromStr for SweepVar {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pe" => Ok(SweepVar::Pe),
            "pe_ack" | "pe-ack" => Ok(SweepVar::PeAck),
            other => Err(Error::InvalidParams(format!("unknown sweep variable `{other}`"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub base: SystemParams,
    pub variable: SweepVar,
    pub start: f64,
    pub stop: f64,
    pub step: f64,
    pub methods: Vec<SweepMethod>,
    pub sim_runs: usize,
    pub seed: u64,
    pub ideal_field: bool,
    pub tdd_reading: TddReading,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0) {
            return Err(Error::InvalidParams("sweep step must be > 0".into()));
        }
        if !(self.start <= self.stop) {
            return Err(Error::InvalidParams("sweep start must not exceed stop".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidParams("at least one sweep method is required".into()));
        }
        Ok(())
    }

    /// Sweep points `start + k·step` up to `stop` (with rounding slack).
    pub fn values(&self) -> Vec<f64> {
        let count = ((self.stop - self.start) / self.step + 1e-9).floor() as usize;
        (0..=count).map(|k| self.start + k as f64 * self.step).collect()
    }
}

/// One CSV row of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub method: SweepMethod,
    /// Completion time; the γ = 1 end for full-duplex Round-Robin.
    pub mean_time: Option<f64>,
    /// Standard error for simulated rows.
    pub stderr: Option<f64>,
    /// γ = 1/2 end for full-duplex Round-Robin.
    pub lower_time: Option<f64>,
    pub note: String,
    pub bursts: Option<Vec<u32>>,
    pub error: Option<String>,
}

fn sweep_point(spec: &SweepSpec, value: f64, method: SweepMethod) -> SweepRow {
    let p = spec.variable.apply(&spec.base, value);
    let mut row = SweepRow {
        value,
        method,
        mean_time: None,
        stderr: None,
        lower_time: None,
        note: String::new(),
        bursts: None,
        error: None,
    };
    let res: Result<()> = (|| {
        match method {
            SweepMethod::Optimal | SweepMethod::WorstLink | SweepMethod::Combined => {
                let m = match method {
                    SweepMethod::Optimal => OptimizeMethod::Exact,
                    SweepMethod::WorstLink => OptimizeMethod::WorstLink,
                    _ => OptimizeMethod::Combined,
                };
                let pol = make_policy(&p, m)?;
                row.mean_time = Some(markov::mean_completion_time(&pol, &p)?.mean_time);
                row.bursts = Some(pol.bursts().to_vec());
            }
            SweepMethod::RrFullDuplex => {
                let (lo, hi) = baselines::rr_full_duplex(&RRParams::new(&p, GammaMode::Both)?)?;
                row.mean_time = hi;
                row.lower_time = lo;
            }
            SweepMethod::RrTdd => {
                let mut rr = RRParams::new(&p, GammaMode::Both)?;
                rr.tdd_reading = spec.tdd_reading;
                let t = baselines::rr_tdd(&rr)?;
                row.mean_time = Some(t.time);
                if t.adjusted {
                    row.note = "adjusted".into();
                }
            }
            SweepMethod::Simulate => {
                let pol = policy::optimize_exact(&p)?;
                let cfg = SimConfig::new(p.clone(), pol.clone(), spec.sim_runs.max(2), spec.seed, spec.ideal_field)?;
                let s = sim::run_batch(&cfg)?;
                row.mean_time = Some(s.completion_time.mean);
                row.stderr = Some(s.completion_time.stderr);
                row.note = format!("non_innovative_rate={}", fmt_sig(s.non_innovative_rate));
                row.bursts = Some(pol.bursts().to_vec());
            }
        }
        Ok(())
    })();
    if let Err(e) = res {
        row.error = Some(e.to_string());
    }
    row
}

/// Evaluates every method at every sweep point, in parallel; rows come back
/// ordered by sweep value, then by the order the methods were given.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let jobs: Vec<(f64, SweepMethod)> = spec
        .values()
        .into_iter()
        .flat_map(|v| spec.methods.iter().map(move |&m| (v, m)))
        .collect();
    Ok(jobs.into_par_iter().map(|(v, m)| sweep_point(spec, v, m)).collect())
}

pub fn sweep_csv(spec: &SweepSpec, rows: &[SweepRow]) -> Result<String> {
    let m = spec.base.block_size;
    let mut header: Vec<String> =
        ["param", "value", "method", "mean_time", "stderr_time", "lower_time", "note"].map(String::from).to_vec();
    header.extend((1..=m).map(|i| format!("N_{i}")));
    header.push("error".into());
    let opt = |x: Option<f64>| x.map(fmt_sig).unwrap_or_default();
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(&header).map_err(io)?;
    for r in rows {
        let mut rec = vec![
            spec.variable.name().to_string(),
            fmt_sig(r.value),
            r.method.name().to_string(),
            opt(r.mean_time),
            opt(r.stderr),
            opt(r.lower_time),
            r.note.clone(),
        ];
        match &r.bursts {
            Some(b) => rec.extend(b.iter().map(|x| x.to_string())),
            None => rec.extend(std::iter::repeat_n(String::new(), m)),
        }
        rec.push(r.error.clone().unwrap_or_default());
        w.write_record(&rec).map_err(io)?;
    }
    into_string(w)
}

/// Sweep as CSV text.
pub fn cmd_sweep(spec: &SweepSpec) -> Result<String> {
    sweep_csv(spec, &run_sweep(spec)?)
}
