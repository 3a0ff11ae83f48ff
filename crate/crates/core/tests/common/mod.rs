//! Test-only reference computations, written independently of the library.

#![allow(dead_code)]

use lda_handover::net_model::{DelayModel, ScenarioTrace};

/// `log10(w log2(1 + 10^(s/10)))`.
pub fn log_cap(bandwidth_hz: f64, sinr_db: f64) -> f64 {
    let lin = 10f64.powf(sinr_db / 10.0);
    (bandwidth_hz * (1.0 + lin).ln() / std::f64::consts::LN_2).log10()
}

/// `g_t` of an integral association given per-UE choices.
pub fn g_choices(trace: &ScenarioTrace, t: usize, choices: &[usize]) -> f64 {
    let mut load = vec![0usize; trace.bss];
    let mut total = 0.0;
    for (i, &j) in choices.iter().enumerate() {
        load[j] += 1;
        total += log_cap(trace.bs[j].bandwidth_hz, trace.sinr(t, i, j));
    }
    for y in load {
        if y > 0 {
            let y = y as f64;
            total -= y * y.log10();
        }
    }
    total
}

/// `gamma * ||x - x'||_A` for integral associations.
pub fn h_choices(delay: &DelayModel, t: usize, now: &[usize], before: &[usize]) -> f64 {
    let a = delay.weights_at(t);
    let bss = delay.bss;
    let mut sq = 0.0;
    for (i, (&j, &k)) in now.iter().zip(before).enumerate() {
        if j != k {
            sq += a[i * bss + j] + a[i * bss + k];
        }
    }
    delay.gamma * sq.sqrt()
}

/// Best total objective over every sequence of joint associations, by
/// brute force. The slot before the first has the first slot's choice.
pub fn enumerate_best(trace: &ScenarioTrace, delay: &DelayModel) -> (f64, Vec<Vec<usize>>) {
    let (ues, bss, horizon) = (trace.ues, trace.bss, trace.horizon);
    let states: Vec<Vec<usize>> = (0..bss.pow(ues as u32))
        .map(|mut s| {
            let mut c = vec![0; ues];
            for i in (0..ues).rev() {
                c[i] = s % bss;
                s /= bss;
            }
            c
        })
        .collect();
    let n = states.len();
    let total_seqs = n.pow(horizon as u32);
    let mut best = f64::NEG_INFINITY;
    let mut best_seq = Vec::new();
    let mut seq = vec![0usize; horizon];
    for code in 0..total_seqs {
        let mut c = code;
        for t in (0..horizon).rev() {
            seq[t] = c % n;
            c /= n;
        }
        let mut value = 0.0;
        for t in 0..horizon {
            let prev = if t == 0 { seq[0] } else { seq[t - 1] };
            value += g_choices(trace, t, &states[seq[t]])
                - h_choices(delay, t, &states[seq[t]], &states[prev]);
        }
        if value > best {
            best = value;
            best_seq = seq.iter().map(|&s| states[s].clone()).collect();
        }
    }
    (best, best_seq)
}
