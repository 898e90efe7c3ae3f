//! Absorbing Markov chain over the dofs still needed by every receiver.
//!
//! States are tuples `(s_1, ..., s_N)` with `0 <= s_j <= M`. They are laid out
//! in descending lexicographic order (receiver 1 most significant), so
//! `(M, ..., M)` has index 0, `(0, ..., 0)` is last, and every transition goes
//! to an index that is not smaller: the transition matrix is upper triangular.

use std::fmt;
use std::io::Write;

use crate::error::{Error, Result};
use crate::model::{ChannelParams, Gate, SystemParams};
use crate::policy::Policy;

/// Transient diagonals of `I - P` at or below this value are singular.
pub const SINGULAR_TOL: f64 = 1e-15;
/// Diagonal entries closer than this count as a repeated eigenvalue.
pub const EIGEN_TOL: f64 = 1e-9;
/// Default round cap of [`empirical_stops`].
pub const DEFAULT_STOP_CAP: u64 = 1_000_000;

/// Dofs still needed by each receiver.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DofState(pub Vec<usize>);

impl DofState {
    pub fn uniform(value: usize, receivers: usize) -> Self {
        DofState(vec![value; receivers])
    }

    /// Largest dof count across receivers; selects the burst length.
    pub fn max_needed(&self) -> usize {
        self.0.iter().copied().max().unwrap_or(0)
    }

    pub fn is_absorbing(&self) -> bool {
        self.0.iter().all(|&s| s == 0)
    }

    /// True if `other` needs no more dofs than `self` at any receiver.
    pub fn dominates(&self, other: &DofState) -> bool {
        self.0.len() == other.0.len() && self.0.iter().zip(&other.0).all(|(a, b)| b <= a)
    }
}

impl fmt::Display for DofState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (k, s) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{s}")?;
        }
        write!(f, ")")
    }
}

/// Canonical indexing of the `(M+1)^N` states.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateSpace {
    block_size: usize,
    receivers: usize,
    order: usize,
}

impl StateSpace {
    pub fn new(block_size: usize, receivers: usize) -> Result<Self> {
        let order = u32::try_from(receivers)
            .ok()
            .and_then(|n| (block_size + 1).checked_pow(n))
            .filter(|&o| o <= 1 << 24)
            .ok_or_else(|| Error::InvalidParams(format!("state space (M+1)^N too large for M={block_size}, N={receivers}")))?;
        Ok(StateSpace { block_size, receivers, order })
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn receivers(&self) -> usize {
        self.receivers
    }

    /// Number of states, `(M+1)^N`.
    pub fn order(&self) -> usize {
        self.order
    }

    /// Index of `(M, ..., M)`.
    pub fn start(&self) -> usize {
        0
    }

    /// Index of `(0, ..., 0)`.
    pub fn absorbing(&self) -> usize {
        self.order - 1
    }

    pub fn index(&self, s: &DofState) -> usize {
        debug_assert_eq!(s.0.len(), self.receivers);
        let radix = self.block_size + 1;
        let value = s.0.iter().fold(0usize, |acc, &d| acc * radix + d);
        self.order - 1 - value
    }

    pub fn state(&self, index: usize) -> DofState {
        let radix = self.block_size + 1;
        let mut value = self.order - 1 - index;
        let mut dofs = vec![0; self.receivers];
        for slot in dofs.iter_mut().rev() {
            *slot = value % radix;
            value /= radix;
        }
        DofState(dofs)
    }

    /// All states in canonical order.
    pub fn states(&self) -> impl Iterator<Item = DofState> + '_ {
        (0..self.order).map(move |i| self.state(i))
    }
}

/// `C(n, k) p^k (1-p)^(n-k)`.
pub(crate) fn binomial_pmf(n: u32, k: u32, p: f64) -> f64 {
    if k > n {
        return 0.0;
    }
    let q = 1.0 - p;
    if n <= 60 {
        let mut c = 1.0f64;
        for i in 1..=k.min(n - k) {
            c = c * (n - k.min(n - k) + i) as f64 / i as f64;
        }
        return c * p.powi(k as i32) * q.powi((n - k) as i32);
    }
    if p == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    if q == 0.0 {
        return if k == n { 1.0 } else { 0.0 };
    }
    let kk = k.min(n - k);
    let ln_c: f64 = (1..=kk).map(|i| (((n - kk + i) as f64) / i as f64).ln()).sum();
    (ln_c + k as f64 * p.ln() + (n - k) as f64 * q.ln()).exp()
}

/// Probability that a receiver needing `s` dofs needs `s_prime` after a burst
/// of `n_i` packets, as seen by the transmitter (a lost ACK leaves `s`).
pub fn receiver_transition(
    s: usize,
    s_prime: usize,
    n_i: u32,
    ch: &ChannelParams,
    gate: Gate,
) -> Result<f64> {
    if s_prime > s {
        return Err(Error::BackwardTransition { from: s.to_string(), to: s_prime.to_string() });
    }
    if n_i == 0 {
        return Err(Error::ZeroBurst);
    }
    Ok(receiver_transition_unchecked(s, s_prime, n_i, ch, gate))
}

fn receiver_transition_unchecked(s: usize, s_prime: usize, n_i: u32, ch: &ChannelParams, gate: Gate) -> f64 {
    if s == 0 {
        return 1.0;
    }
    let delivered = 1.0 - ch.pe_ack;
    let stay = delivered * ch.pe.powi(n_i as i32) + ch.pe_ack;
    if s_prime == s {
        return stay;
    }
    if s_prime > 0 {
        return partial(s, s_prime, n_i, ch, gate);
    }
    let mut rest = stay;
    for sp in 1..s {
        rest += partial(s, sp, n_i, ch, gate);
    }
    (1.0 - rest).clamp(0.0, 1.0)
}

fn partial(s: usize, s_prime: usize, n_i: u32, ch: &ChannelParams, gate: Gate) -> f64 {
    let gained = (s - s_prime) as u32;
    let allowed = match gate {
        Gate::Strict => n_i as usize >= s,
        Gate::Relaxed => n_i >= gained,
    };
    if !allowed {
        return 0.0;
    }
    (1.0 - ch.pe_ack) * binomial_pmf(n_i, gained, 1.0 - ch.pe)
}

fn check_policy(policy: &Policy, p: &SystemParams) -> Result<()> {
    if policy.block_size() != p.block_size {
        return Err(Error::PolicyMismatch { policy: policy.block_size(), params: p.block_size });
    }
    Ok(())
}

/// Joint one-round transition probability between broadcast states.
pub fn joint_transition(s: &DofState, s_prime: &DofState, policy: &Policy, p: &SystemParams) -> Result<f64> {
    check_policy(policy, p)?;
    if s.0.len() != p.receivers() || s_prime.0.len() != p.receivers() {
        return Err(Error::InvalidParams("state length differs from receiver count".into()));
    }
    if !s.dominates(s_prime) {
        return Err(Error::BackwardTransition { from: s.to_string(), to: s_prime.to_string() });
    }
    let i = s.max_needed();
    if i == 0 {
        return Ok(1.0);
    }
    let n_i = policy.burst(i);
    let mut prob = 1.0;
    for ((&a, &b), ch) in s.0.iter().zip(&s_prime.0).zip(&p.channels) {
        prob *= receiver_transition(a, b, n_i, ch, p.gate)?;
    }
    Ok(prob)
}

/// Dense row-stochastic transition matrix in canonical state order.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    space: StateSpace,
    entries: Vec<f64>,
}

impl TransitionMatrix {
    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn order(&self) -> usize {
        self.space.order
    }

    pub fn get(&self, from: usize, to: usize) -> f64 {
        self.entries[from * self.space.order + to]
    }

    pub fn row(&self, from: usize) -> &[f64] {
        let n = self.space.order;
        &self.entries[from * n..(from + 1) * n]
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.order()).map(|i| self.get(i, i)).collect()
    }

    /// `v · P` for a row vector `v`.
    pub fn left_multiply(&self, v: &[f64]) -> Vec<f64> {
        let n = self.order();
        let mut out = vec![0.0; n];
        for (i, &vi) in v.iter().enumerate() {
            if vi == 0.0 {
                continue;
            }
            // upper triangular: only columns >= i
            for (o, &pij) in out[i..].iter_mut().zip(&self.row(i)[i..]) {
                *o += vi * pij;
            }
        }
        out
    }

    /// Writes the matrix as CSV, rows and columns labelled by state tuples.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let labels: Vec<String> = self.space.states().map(|s| s.to_string()).collect();
        let mut header = vec!["from\\to".to_string()];
        header.extend(labels.iter().cloned());
        w.write_record(&header).map_err(|e| Error::Io(e.to_string()))?;
        for (i, label) in labels.iter().enumerate() {
            let mut rec = vec![label.clone()];
            rec.extend(self.row(i).iter().map(|x| format!("{x:.17e}")));
            w.write_record(&rec).map_err(|e| Error::Io(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Builds the full transition matrix for `policy`.
pub fn build_matrix(policy: &Policy, p: &SystemParams) -> Result<TransitionMatrix> {
    check_policy(policy, p)?;
    let space = StateSpace::new(p.block_size, p.receivers())?;
    let m = p.block_size;
    let order = space.order;
    let receivers = p.receivers();

    // per max-dof i, per receiver: (M+1)x(M+1) table of receiver transitions
    let tables: Vec<Vec<Vec<f64>>> = (0..=m)
        .map(|i| {
            if i == 0 {
                return Vec::new();
            }
            let n_i = policy.burst(i);
            p.channels
                .iter()
                .map(|ch| {
                    let mut t = vec![0.0; (m + 1) * (m + 1)];
                    for s in 0..=i {
                        for sp in 0..=s {
                            t[s * (m + 1) + sp] = receiver_transition_unchecked(s, sp, n_i, ch, p.gate);
                        }
                    }
                    t
                })
                .collect()
        })
        .collect();

    let mut entries = vec![0.0; order * order];
    let mut target = vec![0usize; receivers];
    for from in 0..order {
        let s = space.state(from);
        let i = s.max_needed();
        let row = &mut entries[from * order..(from + 1) * order];
        if i == 0 {
            row[from] = 1.0;
            continue;
        }
        // odometer over all targets componentwise <= s
        target.iter_mut().for_each(|t| *t = 0);
        loop {
            let mut prob = 1.0;
            let mut value = 0;
            for (j, (&a, &b)) in s.0.iter().zip(&target).enumerate() {
                prob *= tables[i][j][a * (m + 1) + b];
                value = value * (m + 1) + b;
            }
            row[order - 1 - value] = prob;

            let mut exhausted = true;
            for k in (0..receivers).rev() {
                if target[k] < s.0[k] {
                    target[k] += 1;
                    exhausted = false;
                    break;
                }
                target[k] = 0;
            }
            if exhausted {
                break;
            }
        }
    }
    Ok(TransitionMatrix { space, entries })
}

/// Per-round cost of every transient state: `N_i T_p + T_w` with `i` the
/// state's largest dof count.
pub fn round_costs(policy: &Policy, p: &SystemParams) -> Result<Vec<f64>> {
    check_policy(policy, p)?;
    let space = StateSpace::new(p.block_size, p.receivers())?;
    let by_i: Vec<f64> = std::iter::once(Ok(0.0))
        .chain((1..=p.block_size).map(|i| p.round_duration(policy.burst(i))))
        .collect::<Result<_>>()?;
    Ok((0..space.absorbing()).map(|k| by_i[space.state(k).max_needed()]).collect())
}

/// Mean absorption time from every transient state and from `(M, ..., M)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CompletionResult {
    /// Expected time to reach `(0, ..., 0)` from `(M, ..., M)`, seconds.
    pub mean_time: f64,
    /// Expected absorption time from each transient state, by canonical index.
    pub per_state_times: Vec<f64>,
    pub policy_used: Policy,
}

/// Solves `(I - P) T = mu` over the transient states by back substitution.
pub fn solve_absorption_times(matrix: &TransitionMatrix, mu: &[f64]) -> Result<Vec<f64>> {
    let transient = matrix.order() - 1;
    assert_eq!(mu.len(), transient, "cost vector must cover the transient states");
    let mut times = vec![0.0; transient];
    for k in (0..transient).rev() {
        let row = matrix.row(k);
        let pivot = 1.0 - row[k];
        if pivot <= SINGULAR_TOL {
            return Err(Error::NonAbsorbing {
                state: matrix.space().state(k).to_string(),
                self_loop: row[k],
            });
        }
        let mut acc = mu[k];
        for (t, &pkj) in times[k + 1..].iter().zip(&row[k + 1..transient]) {
            acc += pkj * t;
        }
        times[k] = acc / pivot;
    }
    Ok(times)
}

/// Expected completion time of the broadcast under `policy`.
pub fn mean_completion_time(policy: &Policy, p: &SystemParams) -> Result<CompletionResult> {
    let matrix = build_matrix(policy, p)?;
    let mu = round_costs(policy, p)?;
    let per_state_times = solve_absorption_times(&matrix, &mu)?;
    Ok(CompletionResult {
        mean_time: per_state_times[0],
        per_state_times,
        policy_used: policy.clone(),
    })
}

/// `I - P` restricted to transient states, row-major.
pub fn gamma_matrix(matrix: &TransitionMatrix) -> Vec<f64> {
    let t = matrix.order() - 1;
    let mut g = vec![0.0; t * t];
    for i in 0..t {
        for j in 0..t {
            g[i * t + j] = if i == j { 1.0 } else { 0.0 } - matrix.get(i, j);
        }
    }
    g
}

/// Determinant by Gaussian elimination with partial pivoting.
pub(crate) fn determinant(mut a: Vec<f64>, n: usize) -> f64 {
    let mut det = 1.0;
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&x, &y| a[x * n + col].abs().total_cmp(&a[y * n + col].abs()))
            .unwrap();
        if a[pivot * n + col] == 0.0 {
            return 0.0;
        }
        if pivot != col {
            for k in 0..n {
                a.swap(pivot * n + k, col * n + k);
            }
            det = -det;
        }
        let d = a[col * n + col];
        det *= d;
        for r in col + 1..n {
            let f = a[r * n + col] / d;
            if f != 0.0 {
                for k in col..n {
                    a[r * n + k] -= f * a[col * n + k];
                }
            }
        }
    }
    det
}

/// `T_(M,...,M)` as the ratio `det(Γ with the start column replaced by mu) /
/// det(Γ)`, `Γ = I - P` over transient states. Meant for small chains.
pub fn completion_time_cramer(policy: &Policy, p: &SystemParams) -> Result<f64> {
    let matrix = build_matrix(policy, p)?;
    let mu = round_costs(policy, p)?;
    let t = matrix.order() - 1;
    let gamma = gamma_matrix(&matrix);
    let mut det_gamma = 1.0;
    for k in 0..t {
        let d = gamma[k * t + k];
        if d <= SINGULAR_TOL {
            return Err(Error::NonAbsorbing {
                state: matrix.space().state(k).to_string(),
                self_loop: matrix.get(k, k),
            });
        }
        det_gamma *= d;
    }
    let start = matrix.space().start();
    let mut replaced = gamma;
    for (r, &m) in mu.iter().enumerate() {
        replaced[r * t + start] = m;
    }
    Ok(determinant(replaced, t) / det_gamma)
}

impl TransitionMatrix {
    /// Probability of being absorbed within `rounds` rounds from `(M, ..., M)`.
    pub fn absorption_after(&self, rounds: u64) -> f64 {
        let mut v = vec![0.0; self.order()];
        v[self.space.start()] = 1.0;
        for _ in 0..rounds {
            v = self.left_multiply(&v);
        }
        v[self.space.absorbing()]
    }

    /// Smallest round count whose absorption probability is at least
    /// `1 - epsilon`, scanning up to `cap` rounds.
    pub fn stops_for(&self, epsilon: f64, cap: u64) -> Result<u64> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::InvalidParams(format!("epsilon = {epsilon} outside (0, 1)")));
        }
        let target = 1.0 - epsilon;
        let mut v = vec![0.0; self.order()];
        v[self.space.start()] = 1.0;
        let absorbing = self.space.absorbing();
        for k in 1..=cap {
            v = self.left_multiply(&v);
            if v[absorbing] >= target {
                return Ok(k);
            }
        }
        Err(Error::RoundCapExceeded { cap })
    }
}

/// Probability that `(0, ..., 0)` is reached within `rounds` rounds.
pub fn absorption_probability_after(policy: &Policy, p: &SystemParams, rounds: u64) -> Result<f64> {
    Ok(build_matrix(policy, p)?.absorption_after(rounds))
}

/// Smallest number of ACK stops after which absorption has probability at
/// least `1 - epsilon`.
pub fn empirical_stops(policy: &Policy, p: &SystemParams, epsilon: f64) -> Result<u64> {
    build_matrix(policy, p)?.stops_for(epsilon, DEFAULT_STOP_CAP)
}

/// Spectral bound on the number of stops, plus the exact count.
#[derive(Debug, Clone, PartialEq)]
pub struct StoppingBound {
    /// Magnitude of the largest eigenvalue other than 1.
    pub lambda2_magnitude: f64,
    /// `[(M,...,M), (0,...,0)]` entry of `Σ_{i>=2} |F_i(P)|`; only for
    /// distinct eigenvalues.
    pub g: Option<f64>,
    /// `(ln G - ln ε) / (-ln |λ2|)`; only for distinct eigenvalues.
    pub aleph_bound: Option<f64>,
    pub aleph_empirical: u64,
    pub eigen_distinct: bool,
}

/// Eigenvalue-based stopping bound for reaching `(0, ..., 0)` with
/// probability at least `1 - epsilon`.
///
/// The eigenvalues are the diagonal of the triangular `P`. When they are
/// pairwise distinct, `P^k = Σ λ_i^k F_i(P)` with the Lagrange projectors
/// `F_i(P) = Π_{j≠i} (P - λ_j I) / Π_{j≠i} (λ_i - λ_j)`, which bounds the
/// distance from absorption after `k` rounds by `|λ2|^k G`.
pub fn lemma1_bound(policy: &Policy, p: &SystemParams, epsilon: f64) -> Result<StoppingBound> {
    let matrix = build_matrix(policy, p)?;
    stopping_bound(&matrix, epsilon, DEFAULT_STOP_CAP)
}

pub fn stopping_bound(matrix: &TransitionMatrix, epsilon: f64, cap: u64) -> Result<StoppingBound> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidParams(format!("epsilon = {epsilon} outside (0, 1)")));
    }
    let space = *matrix.space();
    let eig = matrix.diagonal();
    let absorbing = space.absorbing();
    let mut lambda2: f64 = 0.0;
    for (k, &l) in eig.iter().enumerate().take(absorbing) {
        if l.abs() >= 1.0 - SINGULAR_TOL {
            return Err(Error::NonAbsorbing { state: space.state(k).to_string(), self_loop: l });
        }
        lambda2 = lambda2.max(l.abs());
    }
    let aleph_empirical = matrix.stops_for(epsilon, cap)?;

    let distinct = (0..eig.len())
        .all(|a| (a + 1..eig.len()).all(|b| (eig[a] - eig[b]).abs() > EIGEN_TOL));
    if !distinct {
        return Ok(StoppingBound {
            lambda2_magnitude: lambda2,
            g: None,
            aleph_bound: None,
            aleph_empirical,
            eigen_distinct: false,
        });
    }

    let n = matrix.order();
    let mut g = 0.0;
    for i in 0..absorbing {
        // start row of F_i(P), accumulated one factor at a time
        let mut v = vec![0.0; n];
        v[space.start()] = 1.0;
        let mut denom = 1.0;
        for (j, &lj) in eig.iter().enumerate() {
            if j == i {
                continue;
            }
            let mut next = matrix.left_multiply(&v);
            for (x, &vx) in next.iter_mut().zip(&v) {
                *x -= lj * vx;
            }
            v = next;
            denom *= eig[i] - lj;
        }
        g += (v[absorbing] / denom).abs();
    }
    let aleph = (g.ln() - epsilon.ln()) / -lambda2.ln();
    Ok(StoppingBound {
        lambda2_magnitude: lambda2,
        g: Some(g),
        aleph_bound: Some(aleph),
        aleph_empirical,
        eigen_distinct: true,
    })
}
