//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Run with `cargo test --test acceptance`.

use std::process::ExitCode;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tddcast::baselines::{self, GammaMode, RRParams, TddReading};
use tddcast::galois::{DecoderState, FieldSpec};
use tddcast::markov;
use tddcast::model::{AckMode, ChannelParams, Gate, SystemParams};
use tddcast::policy::{self, Policy, Provenance};
use tddcast::sim::{self, SimConfig};

type Check = std::result::Result<String, String>;

fn sweep() -> Vec<f64> {
    (1..=8).map(|k| k as f64 / 10.0).collect()
}

fn satellite(pe: f64) -> SystemParams {
    SystemParams::satellite_example(pe)
}

fn mean_time(pol: &Policy, p: &SystemParams) -> f64 {
    markov::mean_completion_time(pol, p).unwrap().mean_time
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

// 1. ideal-field simulation against the exact chain
fn analytic_vs_simulation() -> Check {
    let mut worst_z: f64 = 0.0;
    let mut bad = Vec::new();
    for (k, pe) in sweep().into_iter().enumerate() {
        let p = satellite(pe);
        let pol = policy::optimize_exact(&p).unwrap();
        let analytic = mean_time(&pol, &p);
        let cfg = SimConfig::new(p, pol, 10_000, 1000 + k as u64, true).unwrap();
        let s = sim::run_batch(&cfg).unwrap();
        let z = (s.completion_time.mean - analytic) / s.completion_time.stderr;
        println!(
            "    pe={pe:.1} analytic={analytic:.6} sim={:.6} se={:.2e} z={z:+.2}",
            s.completion_time.mean, s.completion_time.stderr
        );
        worst_z = worst_z.max(z.abs());
        if !(z.abs() <= 3.0) {
            bad.push(format!("pe={pe:.1} z={z:.2}"));
        }
    }
    if bad.is_empty() {
        Ok(format!("max |z| = {worst_z:.2} over 8 points, 10^4 runs each"))
    } else {
        Err(format!("outside 3 se: {}", bad.join(", ")))
    }
}

// 2. worst-link bursts below combined-erasure bursts; exact below both
fn heuristic_ordering() -> Check {
    let mut bad = Vec::new();
    for pe in sweep() {
        let p = satellite(pe);
        let wl = policy::heuristic_worst_link(&p).unwrap();
        let comb = policy::heuristic_combined(&p).unwrap();
        let exact = policy::optimize_exact(&p).unwrap();
        let (t_wl, t_comb, t_ex) = (mean_time(&wl, &p), mean_time(&comb, &p), mean_time(&exact, &p));
        println!(
            "    pe={pe:.1} worst-link={:?} combined={:?} exact={:?} T={t_ex:.6}",
            wl.bursts(),
            comb.bursts(),
            exact.bursts()
        );
        for i in 1..=p.block_size {
            if wl.burst(i) > comb.burst(i) {
                bad.push(format!("pe={pe:.1} N_{i}: {} > {}", wl.burst(i), comb.burst(i)));
            }
        }
        if t_ex > t_wl.min(t_comb) {
            bad.push(format!("pe={pe:.1} exact {t_ex} > min({t_wl}, {t_comb})"));
        }
    }
    if bad.is_empty() {
        Ok("N_i(worst-link) <= N_i(combined) and exact <= both heuristics at all 8 points".into())
    } else {
        Err(bad.join("; "))
    }
}

// 3. worst-link within 5% of the exact optimum
fn worst_link_near_optimal() -> Check {
    let mut worst: f64 = 0.0;
    let mut at = 0.0;
    for pe in sweep() {
        let p = satellite(pe);
        let gap = mean_time(&policy::heuristic_worst_link(&p).unwrap(), &p)
            / mean_time(&policy::optimize_exact(&p).unwrap(), &p)
            - 1.0;
        println!("    pe={pe:.1} worst-link gap = {:.3}%", 100.0 * gap);
        if gap > worst {
            worst = gap;
            at = pe;
        }
    }
    let msg = format!("largest gap {:.3}% at pe={at:.1} (tolerance 5%)", 100.0 * worst);
    if worst <= 0.05 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

// 4. Round-Robin references
fn round_robin_comparison() -> Check {
    let p = satellite(0.8);
    let opt = mean_time(&policy::optimize_exact(&p).unwrap(), &p);
    let (lo, hi) = baselines::rr_full_duplex(&RRParams::new(&p, GammaMode::Both).unwrap()).unwrap();
    let (r_lo, r_hi) = (lo.unwrap() / opt, hi.unwrap() / opt);
    println!("    pe=0.8 NC-optimal={opt:.6} full-duplex ratio band: gamma=1/2 {r_lo:.4}, gamma=1 {r_hi:.4}");
    let mut bad = Vec::new();
    if !(r_lo >= 1.15 || r_hi >= 1.15) {
        bad.push(format!("full-duplex ratios {r_lo:.4}, {r_hi:.4} both below 1.15"));
    }
    let mut literal_violations = Vec::new();
    let mut min_margin = f64::INFINITY;
    for k in 0..=16 {
        let pe = k as f64 * 0.05;
        let p = satellite(pe);
        let opt = mean_time(&policy::optimize_exact(&p).unwrap(), &p);
        let mut rp = RRParams::new(&p, GammaMode::Both).unwrap();
        let tdd = baselines::rr_tdd(&rp).unwrap().time;
        rp.tdd_reading = TddReading::Literal;
        let literal = baselines::rr_tdd(&rp).unwrap().time;
        println!("    pe={pe:.2} NC-optimal={opt:.6} rr_tdd={tdd:.6} (literal pass count: {literal:.6})");
        min_margin = min_margin.min(tdd - opt);
        if opt > tdd {
            bad.push(format!("pe={pe:.2} NC {opt} > rr_tdd {tdd}"));
        }
        if opt > literal {
            literal_violations.push(format!("{pe:.2}"));
        }
    }
    if !literal_violations.is_empty() {
        println!("    note: with the literal E[max X] pass count NC exceeds rr_tdd at pe in {{{}}}", literal_violations.join(", "));
    }
    if bad.is_empty() {
        Ok(format!(
            "full-duplex/NC at pe=0.8 in [{r_lo:.4}, {r_hi:.4}] >= 1.15; NC <= rr_tdd on 17 points of [0, 0.8] (min margin {min_margin:.3e} s)"
        ))
    } else {
        Err(bad.join("; "))
    }
}

// 5. spectral stopping bound on random asymmetric two-receiver chains
fn stopping_bound_consistency() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut rejected = [0usize; 4];
    let mut accepted = [0usize; 4];
    let mut bad = Vec::new();
    let mut n = 0;
    while n < 20 {
        let m = rng.gen_range(1..=3usize);
        let pe1 = rng.gen_range(0.05..0.9);
        let pe2 = rng.gen_range(0.05..0.9);
        let mk = |pe, rng: &mut ChaCha8Rng| ChannelParams::new(pe, rng.gen_range(0.0..0.3), 0.25).unwrap();
        let mut p = satellite(0.0);
        p.block_size = m;
        p.channels = vec![mk(pe1, &mut rng), mk(pe2, &mut rng)];
        let bursts: Vec<u32> = (1..=m as u32).map(|i| i + rng.gen_range(0..=4)).collect();
        let pol = Policy::new(bursts, Provenance::Manual).unwrap();
        let diag = markov::build_matrix(&pol, &p).unwrap().diagonal();
        let distinct = diag
            .iter()
            .enumerate()
            .all(|(a, x)| diag[a + 1..].iter().all(|y| (x - y).abs() > markov::EIGEN_TOL));
        if !distinct {
            rejected[m] += 1;
            continue;
        }
        accepted[m] += 1;
        n += 1;
        for eps in [0.1, 0.01] {
            let b = markov::lemma1_bound(&pol, &p, eps).unwrap();
            let (Some(aleph), Some(g)) = (b.aleph_bound, b.g) else {
                bad.push(format!("instance {n}: no bound despite distinct eigenvalues"));
                continue;
            };
            let rounds = aleph.ceil().max(0.0) as u64;
            let prob = markov::absorption_probability_after(&pol, &p, rounds).unwrap();
            if prob < 1.0 - eps {
                bad.push(format!("instance {n} eps={eps}: P(absorbed after {rounds}) = {prob}"));
            }
            if g >= 1.0 && b.aleph_empirical > rounds {
                bad.push(format!("instance {n} eps={eps}: empirical {} > {rounds}", b.aleph_empirical));
            }
            if eps == 0.01 && n <= 3 {
                println!(
                    "    M={m} pe=({pe1:.3},{pe2:.3}) |l2|={:.4} G={g:.4} bound={aleph:.2} empirical={}",
                    b.lambda2_magnitude, b.aleph_empirical
                );
            }
        }
    }
    println!(
        "    accepted by M: {:?}, rejected for repeated eigenvalues by M: {:?}",
        &accepted[1..],
        &rejected[1..]
    );
    if bad.is_empty() {
        Ok("20 distinct-eigenvalue instances, eps in {0.1, 0.01}: bound reached and empirical <= bound".into())
    } else {
        Err(bad.join("; "))
    }
}

fn dense_solve(matrix: &tddcast::TransitionMatrix, mu: &[f64]) -> Vec<f64> {
    let t = mu.len();
    let a = DMatrix::from_fn(t, t, |i, j| if i == j { 1.0 } else { 0.0 } - matrix.get(i, j));
    a.lu().solve(&DVector::from_column_slice(mu)).expect("I - Q is invertible").iter().copied().collect()
}

fn brute_force_transition(s: usize, s_prime: usize, n: u32, ch: &ChannelParams) -> f64 {
    let mut total = 0.0;
    for pattern in 0u32..(1 << n) {
        let received = pattern.count_ones() as usize;
        let pr = (1.0 - ch.pe).powi(received as i32) * ch.pe.powi((n as usize - received) as i32);
        let after = s - received.min(s);
        if after == s_prime {
            total += pr * (1.0 - ch.pe_ack);
        }
        if s == s_prime {
            total += pr * ch.pe_ack;
        }
    }
    total
}

// 6. three solvers agree; transition kernel matches erasure enumeration
fn solver_cross_checks() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    let mut instances = 0;
    let mut bad = Vec::new();
    for m in 1..=3usize {
        for nrx in 1..=2usize {
            for gate in [Gate::Strict, Gate::Relaxed] {
                for ack_mode in [AckMode::NonInterfering, AckMode::Interfering] {
                    for _ in 0..6 {
                        let mut p = satellite(0.0);
                        p.block_size = m;
                        p.gate = gate;
                        p.ack_mode = ack_mode;
                        let mut rts: Vec<f64> = (0..nrx).map(|_| rng.gen_range(0.0..0.5)).collect();
                        rts.sort_by(f64::total_cmp);
                        p.channels = rts
                            .into_iter()
                            .map(|rt| ChannelParams::new(rng.gen_range(0.0..0.9), rng.gen_range(0.0..0.4), rt).unwrap())
                            .collect();
                        let bursts: Vec<u32> = (1..=m as u32).map(|i| i + rng.gen_range(0..=6)).collect();
                        let pol = Policy::new(bursts, Provenance::Manual).unwrap();
                        let matrix = markov::build_matrix(&pol, &p).unwrap();
                        let mu = markov::round_costs(&pol, &p).unwrap();
                        let back = markov::solve_absorption_times(&matrix, &mu).unwrap();
                        let dense = dense_solve(&matrix, &mu);
                        let cramer = markov::completion_time_cramer(&pol, &p).unwrap();
                        for (a, b) in back.iter().zip(&dense) {
                            worst = worst.max(rel(*a, *b));
                        }
                        worst = worst.max(rel(back[0], cramer));
                        if rel(back[0], cramer) > 1e-6 || back.iter().zip(&dense).any(|(a, b)| rel(*a, *b) > 1e-6) {
                            bad.push(format!("M={m} N={nrx} {:?}", pol.bursts()));
                        }
                        instances += 1;
                    }
                }
            }
        }
    }
    let mut kernel_err: f64 = 0.0;
    let mut kernels = 0;
    for n in 1..=12u32 {
        for &(pe, pe_ack) in &[(0.0, 0.0), (0.3, 0.0), (0.7, 0.25), (1.0, 0.1), (0.5, 1.0)] {
            let ch = ChannelParams::new(pe, pe_ack, 0.0).unwrap();
            for s in 0..=12usize {
                for sp in 0..=s {
                    let want = brute_force_transition(s, sp, n, &ch);
                    // the strict gate is the physical kernel whenever the burst covers the deficit
                    let mut gates = vec![Gate::Relaxed];
                    if n as usize >= s {
                        gates.push(Gate::Strict);
                    }
                    for gate in gates {
                        let got = markov::receiver_transition(s, sp, n, &ch, gate).unwrap();
                        kernel_err = kernel_err.max((got - want).abs());
                        kernels += 1;
                    }
                }
            }
        }
    }
    if kernel_err > 1e-12 {
        bad.push(format!("receiver_transition off by {kernel_err:e}"));
    }
    if bad.is_empty() {
        Ok(format!(
            "{instances} chains: max relative disagreement {worst:.1e}; {kernels} kernel entries within {kernel_err:.1e}"
        ))
    } else {
        Err(bad.join("; "))
    }
}

/// Reference GF(2^g) product: full carry-less product, then long division.
fn ref_mul(a: u64, b: u64, poly: u64, g: u32) -> u64 {
    let mut prod: u128 = 0;
    for bit in 0..g {
        if (b >> bit) & 1 == 1 {
            prod ^= (a as u128) << bit;
        }
    }
    for bit in (g..2 * g).rev() {
        if (prod >> bit) & 1 == 1 {
            prod ^= (poly as u128) << (bit - g);
        }
    }
    prod as u64
}

fn ref_rank(mut rows: Vec<Vec<u64>>, poly: u64, g: u32) -> usize {
    let cols = rows.first().map_or(0, |r| r.len());
    let size = 1u64 << g;
    let inv = |a: u64| (1..size).find(|&x| ref_mul(a, x, poly, g) == 1).unwrap();
    let mut rank = 0;
    for c in 0..cols {
        let Some(piv) = (rank..rows.len()).find(|&r| rows[r][c] != 0) else { continue };
        rows.swap(rank, piv);
        let f = inv(rows[rank][c]);
        let pivot_row: Vec<u64> = rows[rank].iter().map(|&x| ref_mul(x, f, poly, g)).collect();
        for (r, row) in rows.iter_mut().enumerate() {
            if r != rank && row[c] != 0 {
                let k = row[c];
                for (x, &y) in row.iter_mut().zip(&pivot_row) {
                    *x ^= ref_mul(k, y, poly, g);
                }
            }
        }
        rows[rank] = pivot_row;
        rank += 1;
    }
    rank
}

// 7. field axioms, decoder rank, innovation at g = 20
fn field_correctness() -> Check {
    let mut bad = Vec::new();
    for g in 1..=8u32 {
        let f = FieldSpec::new(g).unwrap();
        let q = 1u32 << g;
        for a in 0..q {
            if f.mul(a, 1) != a || f.mul(a, 0) != 0 {
                bad.push(format!("g={g}: identity fails at {a}"));
            }
            if a != 0 && f.mul(a, f.inv(a).unwrap()) != 1 {
                bad.push(format!("g={g}: inverse fails at {a}"));
            }
            for b in 0..q {
                let ab = f.mul(a, b);
                if ab != f.mul(b, a) || ab as u64 != ref_mul(a as u64, b as u64, f.poly(), g) {
                    bad.push(format!("g={g}: product {a}*{b}"));
                }
                for c in 0..q {
                    if f.mul(ab, c) != f.mul(a, f.mul(b, c)) || f.mul(a, b ^ c) != ab ^ f.mul(a, c) {
                        bad.push(format!("g={g}: assoc/distrib at ({a},{b},{c})"));
                    }
                }
            }
        }
        if f.inv(0).is_ok() {
            bad.push(format!("g={g}: zero inverted"));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let fields = [1u32, 2, 3, 4, 8];
    let mut deficient = 0;
    for _ in 0..1000 {
        let g = fields[rng.gen_range(0..fields.len())];
        let f = FieldSpec::new(g).unwrap();
        let cols = rng.gen_range(1..=6usize);
        let rows = rng.gen_range(1..=8usize);
        let mut mat: Vec<Vec<u32>> = Vec::new();
        for _ in 0..rows {
            // every third row a combination of earlier rows when possible
            let row: Vec<u32> = if !mat.is_empty() && rng.gen_range(0..3) == 0 {
                let mut acc = vec![0u32; cols];
                for r in &mat {
                    let k = rng.gen_range(0..(1u32 << g));
                    for (x, &y) in acc.iter_mut().zip(r) {
                        *x ^= f.mul(k, y);
                    }
                }
                acc
            } else {
                (0..cols).map(|_| rng.gen_range(0..(1u32 << g))).collect()
            };
            mat.push(row);
        }
        let mut dec = DecoderState::new(f, cols);
        let mut gained = 0;
        for r in &mat {
            if dec.absorb(r) {
                gained += 1;
            }
        }
        let want = ref_rank(mat.iter().map(|r| r.iter().map(|&x| x as u64).collect()).collect(), f.poly(), g);
        if dec.rank() != want || gained != want {
            bad.push(format!("rank {} (gained {gained}) vs reference {want} at g={g}", dec.rank()));
        }
        if want < rows.min(cols) {
            deficient += 1;
        }
    }

    let mut worst_rate: f64 = 0.0;
    let mut total_wasted = 0u64;
    let mut total_received = 0u64;
    for (k, pe) in sweep().into_iter().enumerate() {
        let p = satellite(pe);
        let pol = policy::optimize_exact(&p).unwrap();
        let cfg = SimConfig::new(p, pol, 10_000, 2000 + k as u64, false).unwrap();
        let out = sim::run_outcomes(&cfg).unwrap();
        let received: u64 = out.iter().map(|o| o.received_while_deficient).sum();
        let wasted: u64 = out.iter().map(|o| o.non_innovative_received).sum();
        let rate = wasted as f64 / received as f64;
        println!("    g=20 pe={pe:.1}: {wasted} non-innovative of {received} receptions");
        worst_rate = worst_rate.max(rate);
        total_wasted += wasted;
        total_received += received;
    }
    if worst_rate >= 1e-4 {
        bad.push(format!("non-innovative rate {worst_rate:e} at g=20"));
    }
    if bad.is_empty() {
        Ok(format!(
            "axioms exhaustive for g<=8; 1000 matrices ({deficient} rank-deficient) match reference rank; g=20 non-innovative {total_wasted}/{total_received}, worst rate {worst_rate:.1e}"
        ))
    } else {
        bad.truncate(10);
        Err(bad.join("; "))
    }
}

// 8. closed forms
fn degenerate_closed_forms() -> Check {
    let mut bad = Vec::new();
    let mut cases = 0;
    for m in 1..=6usize {
        for nrx in 1..=3usize {
            let mut p = satellite(0.0);
            p.block_size = m;
            p.channels = vec![p.channels[0]; nrx];
            let want = m as f64 * p.packet_duration() + p.wait_time();
            let pols = [
                policy::optimize_exact(&p).unwrap(),
                policy::heuristic_worst_link(&p).unwrap(),
                policy::heuristic_combined(&p).unwrap(),
            ];
            for pol in &pols {
                let got = mean_time(pol, &p);
                if got != want {
                    bad.push(format!("pe=0 M={m} N={nrx} {}: {got} != {want}", pol.provenance().tag()));
                }
                cases += 1;
            }
            if nrx <= 2 && m <= 3 {
                let cramer = markov::completion_time_cramer(&pols[0], &p).unwrap();
                if cramer != want {
                    bad.push(format!("pe=0 M={m} N={nrx} cramer: {cramer} != {want}"));
                }
            }
        }
    }
    let mut worst: f64 = 0.0;
    for &pe in &[0.0, 0.1, 0.37, 0.5, 0.8, 0.95] {
        for &pe_ack in &[0.0, 0.2, 0.6] {
            for n1 in 1..=20u32 {
                let mut p = satellite(0.0);
                p.block_size = 1;
                p.channels = vec![ChannelParams::new(pe, pe_ack, 0.25).unwrap()];
                let pol = Policy::new(vec![n1], Provenance::Manual).unwrap();
                let pe_eff = (1.0 - pe_ack) * pe.powi(n1 as i32) + pe_ack;
                let want = (p.packet_duration() * n1 as f64 + p.wait_time()) / (1.0 - pe_eff);
                let err = rel(mean_time(&pol, &p), want);
                worst = worst.max(err);
                if err > 4.0 * f64::EPSILON {
                    bad.push(format!("M=N=1 pe={pe} pe_ack={pe_ack} N_1={n1}: rel err {err:e}"));
                }
                cases += 1;
            }
        }
    }
    if bad.is_empty() {
        Ok(format!("{cases} cases; pe=0 exact for every method, geometric form within {worst:.1e} relative"))
    } else {
        Err(bad.join("; "))
    }
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Check); 8] = [
        ("1 analytic vs ideal-field simulation", analytic_vs_simulation),
        ("2 heuristic ordering", heuristic_ordering),
        ("3 worst-link within 5% of optimal", worst_link_near_optimal),
        ("4 Round-Robin comparison", round_robin_comparison),
        ("5 spectral stopping bound", stopping_bound_consistency),
        ("6 solver cross-checks", solver_cross_checks),
        ("7 field correctness", field_correctness),
        ("8 degenerate closed forms", degenerate_closed_forms),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let t0 = Instant::now();
        let outcome = run();
        let secs = t0.elapsed().as_secs_f64();
        match outcome {
            Ok(msg) => println!("criterion {name}: PASS ({secs:.1}s) {msg}"),
            Err(msg) => {
                failed += 1;
                println!("criterion {name}: FAIL ({secs:.1}s) {msg}");
            }
        }
    }
    println!("acceptance: {} of 8 criteria passed", 8 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
