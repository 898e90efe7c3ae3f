//! System parameters and the deterministic timing of one transmission round.
//!
//! A round is a burst of `N_i` coded packets of duration `T_p` each, followed
//! by a listening window `T_w` that covers the propagation delay to the
//! farthest receiver plus the serialized ACKs of all receivers.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// How receivers schedule their ACKs after the last coded packet arrives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AckMode {
    /// ACKs do not disturb other receivers (e.g. narrow-beam satellite links);
    /// the nearest receiver answers immediately.
    NonInterfering,
    /// An ACK could collide with data still in flight to farther receivers, so
    /// the first ACK is held back until every receiver has the whole burst.
    Interfering,
}

impl AckMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            AckMode::NonInterfering => "non-interfering",
            AckMode::Interfering => "interfering",
        }
    }
}

impl std::str::FromStr for AckMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "non-interfering" | "noninterfering" => Ok(AckMode::NonInterfering),
            "interfering" => Ok(AckMode::Interfering),
            other => Err(Error::InvalidParams(format!("unknown ack_mode `{other}`"))),
        }
    }
}

/// Gate applied to partial-progress transitions of a single receiver.
///
/// `Strict` zeroes the probability of moving from `s` to `0 < s' < s` dofs
/// whenever fewer than `s` packets are sent. `Relaxed` only requires that at
/// least `s - s'` packets are sent. The two agree whenever `N_i >= s`, which
/// every valid policy guarantees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Gate {
    #[default]
    Strict,
    Relaxed,
}

/// Erasure and timing parameters of one receiver's channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams {
    /// Erasure probability of a coded data packet.
    pub pe: f64,
    /// Erasure probability of the receiver's ACK.
    pub pe_ack: f64,
    /// Round-trip time, seconds.
    pub t_rt: f64,
}

impl ChannelParams {
    pub fn new(pe: f64, pe_ack: f64, t_rt: f64) -> Result<Self> {
        let ch = ChannelParams { pe, pe_ack, t_rt };
        ch.validate()?;
        Ok(ch)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.pe) {
            return Err(Error::InvalidParams(format!("pe = {} outside [0, 1]", self.pe)));
        }
        if !(0.0..=1.0).contains(&self.pe_ack) {
            return Err(Error::InvalidParams(format!(
                "pe_ack = {} outside [0, 1]",
                self.pe_ack
            )));
        }
        if !(self.t_rt >= 0.0 && self.t_rt.is_finite()) {
            return Err(Error::InvalidParams(format!("t_rt = {} must be >= 0", self.t_rt)));
        }
        Ok(())
    }
}

/// Physical and protocol parameters of a broadcast session.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemParams {
    /// Data packets per block (M).
    pub block_size: usize,
    /// Link rate, bits/s.
    pub rate: f64,
    /// Payload bits per packet.
    pub payload_bits: f64,
    /// Header bits per coded packet.
    pub header_bits: f64,
    /// Bits per coding coefficient (log2 of the field size).
    pub coeff_bits: u32,
    /// Bits per ACK packet.
    pub ack_bits: f64,
    /// One entry per receiver, ordered by round-trip time ascending.
    pub channels: Vec<ChannelParams>,
    pub ack_mode: AckMode,
    pub gate: Gate,
}

impl SystemParams {
    /// Two receivers at GEO distance (125 ms one way), 10 kbit payloads over
    /// a 1.5 Mbit/s link, 80-bit headers, 20-bit coefficients, 50-bit ACKs,
    /// M = 5 and a common data erasure probability `pe`; ACKs are lossless.
    pub fn satellite_example(pe: f64) -> Self {
        let ch = ChannelParams { pe, pe_ack: 0.0, t_rt: 0.25 };
        SystemParams {
            block_size: 5,
            rate: 1.5e6,
            payload_bits: 10_000.0,
            header_bits: 80.0,
            coeff_bits: 20,
            ack_bits: 50.0,
            channels: vec![ch; 2],
            ack_mode: AckMode::NonInterfering,
            gate: Gate::Strict,
        }
    }

    /// Receiver count (N).
    pub fn receivers(&self) -> usize {
        self.channels.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.block_size == 0 {
            return Err(Error::InvalidParams("M must be >= 1".into()));
        }
        if self.channels.is_empty() {
            return Err(Error::InvalidParams("N must be >= 1".into()));
        }
        if !(self.rate > 0.0 && self.rate.is_finite()) {
            return Err(Error::InvalidParams("R must be > 0".into()));
        }
        if !(self.payload_bits > 0.0) {
            return Err(Error::InvalidParams("n must be > 0".into()));
        }
        if !(self.header_bits >= 0.0 && self.ack_bits >= 0.0) {
            return Err(Error::InvalidParams("h and n_ack must be >= 0".into()));
        }
        if self.coeff_bits == 0 {
            return Err(Error::InvalidParams("g must be >= 1".into()));
        }
        for ch in &self.channels {
            ch.validate()?;
        }
        if self.channels.windows(2).any(|w| w[0].t_rt > w[1].t_rt) {
            return Err(Error::InvalidParams(
                "receivers must be numbered by ascending round-trip time".into(),
            ));
        }
        Ok(())
    }

    /// ACK transmission time, `n_ack / R`.
    pub fn ack_duration(&self) -> f64 {
        self.ack_bits / self.rate
    }

    /// Transmission time of one coded packet, `(h + n + g·M) / R`.
    pub fn packet_duration(&self) -> f64 {
        (self.header_bits + self.payload_bits + self.coeff_bits as f64 * self.block_size as f64)
            / self.rate
    }

    /// Time each receiver waits after the last coded packet before sending
    /// its ACK, so that the ACKs reach the transmitter back to back.
    pub fn ack_wait_offsets(&self) -> Vec<f64> {
        let t_ack = self.ack_duration();
        let mut out = Vec::with_capacity(self.channels.len());
        let first = match self.ack_mode {
            AckMode::NonInterfering => 0.0,
            AckMode::Interfering => {
                let last = self.channels.last().map_or(0.0, |c| c.t_rt);
                (last - self.channels[0].t_rt) / 2.0
            }
        };
        out.push(first);
        for w in self.channels.windows(2) {
            let prev = *out.last().unwrap();
            out.push((prev + t_ack - w[1].t_rt + w[0].t_rt).max(0.0));
        }
        out
    }

    /// Listening window after a burst, `T_rt-N + t_btA^N + T_ack`.
    pub fn wait_time(&self) -> f64 {
        let t_rt_n = self.channels.last().map_or(0.0, |c| c.t_rt);
        let offset = self.ack_wait_offsets().last().copied().unwrap_or(0.0);
        t_rt_n + offset + self.ack_duration()
    }

    /// Duration of a round sending `bursts` coded packets, `N_i·T_p + T_w`.
    pub fn round_duration(&self, bursts: u32) -> Result<f64> {
        if bursts == 0 {
            return Err(Error::ZeroBurst);
        }
        Ok(bursts as f64 * self.packet_duration() + self.wait_time())
    }

    /// Canonical `key = value` rendering, readable back by [`ConfigMap`].
    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "M = {}", self.block_size);
        let _ = writeln!(s, "N = {}", self.receivers());
        let _ = writeln!(s, "R = {:?}", self.rate);
        let _ = writeln!(s, "n = {:?}", self.payload_bits);
        let _ = writeln!(s, "h = {:?}", self.header_bits);
        let _ = writeln!(s, "g = {}", self.coeff_bits);
        let _ = writeln!(s, "n_ack = {:?}", self.ack_bits);
        let _ = writeln!(s, "ack_mode = {}", self.ack_mode.as_str());
        let _ = writeln!(s, "strict_f_gate = {}", self.gate == Gate::Strict);
        for (j, ch) in self.channels.iter().enumerate() {
            let _ = writeln!(s, "pe[{}] = {:?}", j + 1, ch.pe);
            let _ = writeln!(s, "pe_ack[{}] = {:?}", j + 1, ch.pe_ack);
            let _ = writeln!(s, "t_rt[{}] = {:?}", j + 1, ch.t_rt);
        }
        s
    }

    /// Sets `pe` of every receiver.
    pub fn with_common_pe(mut self, pe: f64) -> Self {
        for ch in &mut self.channels {
            ch.pe = pe;
        }
        self
    }
}

/// Round-trip time of a receiver at distance `d` meters, `2d/c`.
pub fn rt_from_distance(d: f64, c: f64) -> Result<f64> {
    if !(c > 0.0) {
        return Err(Error::InvalidParams("propagation speed must be > 0".into()));
    }
    if !(d >= 0.0) {
        return Err(Error::InvalidParams("distance must be >= 0".into()));
    }
    Ok(2.0 * d / c)
}

const PER_RECEIVER: [&str; 4] = ["pe", "pe_ack", "t_rt", "d"];

/// Flat `key = value` parameter file with later entries (and overrides)
/// replacing earlier ones.
///
/// Recognised keys: `M N R n h g n_ack ack_mode strict_f_gate`, and per
/// receiver `pe[j] pe_ack[j] t_rt[j] d[j]` (1-based). The unindexed forms
/// `pe`, `pe_ack`, `t_rt`, `d` set every receiver and drop earlier indexed
/// entries of the same key; later indexed entries refine them.
/// `c` sets the propagation speed used to convert `d` (default: light).
#[derive(Debug, Clone, Default)]
pub struct ConfigMap {
    entries: BTreeMap<String, String>,
}

impl ConfigMap {
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = ConfigMap::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .or_else(|| line.split_once(':'))
                .ok_or_else(|| Error::Parse { line: lineno + 1, msg: format!("expected key = value, got `{line}`") })?;
            map.set(k, v);
        }
        Ok(map)
    }

    pub fn set(&mut self, key: &str, value: &str) {
        let key: String = key.chars().filter(|c| !c.is_whitespace()).collect();
        if PER_RECEIVER.contains(&key.as_str()) {
            let prefix = format!("{key}[");
            self.entries.retain(|k, _| !k.starts_with(&prefix));
        }
        self.entries.insert(key, value.trim().to_string());
    }

    /// Applies `key=value` strings such as those given on the command line.
    pub fn apply_overrides<'a>(&mut self, overrides: impl IntoIterator<Item = &'a str>) -> Result<()> {
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Parse { line: 0, msg: format!("override `{o}` is not key=value") })?;
            self.set(k, v);
        }
        Ok(())
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some(v) => v.parse::<T>().map(Some).map_err(|_| Error::Parse {
                line: 0,
                msg: format!("bad value `{v}` for `{key}`"),
            }),
        }
    }

    fn require<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        self.get(key)?
            .ok_or_else(|| Error::InvalidParams(format!("missing required key `{key}`")))
    }

    fn per_receiver(&self, key: &str, j: usize) -> Result<Option<f64>> {
        match self.get::<f64>(&format!("{key}[{j}]"))? {
            Some(v) => Ok(Some(v)),
            None => self.get::<f64>(key),
        }
    }

    pub fn build(&self) -> Result<SystemParams> {
        let receivers: usize = self.require("N")?;
        let c: f64 = self.get("c")?.unwrap_or(SPEED_OF_LIGHT);
        let mut channels = Vec::with_capacity(receivers);
        for j in 1..=receivers {
            let pe = self
                .per_receiver("pe", j)?
                .ok_or_else(|| Error::InvalidParams(format!("missing pe for receiver {j}")))?;
            let pe_ack = self.per_receiver("pe_ack", j)?.unwrap_or(0.0);
            let t_rt = match self.per_receiver("t_rt", j)? {
                Some(t) => t,
                None => match self.per_receiver("d", j)? {
                    Some(d) => rt_from_distance(d, c)?,
                    None => 0.0,
                },
            };
            channels.push(ChannelParams { pe, pe_ack, t_rt });
        }
        let strict: bool = self.get("strict_f_gate")?.unwrap_or(true);
        let params = SystemParams {
            block_size: self.require("M")?,
            rate: self.require("R")?,
            payload_bits: self.require("n")?,
            header_bits: self.get("h")?.unwrap_or(0.0),
            coeff_bits: self.require("g")?,
            ack_bits: self.get("n_ack")?.unwrap_or(0.0),
            channels,
            ack_mode: self.get("ack_mode")?.unwrap_or(AckMode::NonInterfering),
            gate: if strict { Gate::Strict } else { Gate::Relaxed },
        };
        params.validate()?;
        Ok(params)
    }
}

impl std::str::FromStr for SystemParams {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ConfigMap::parse(s)?.build()
    }
}
