//! Reference policies: greedy max-SINR, uniform random, and the exact
//! clairvoyant oracle used to measure dynamic regret.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::net_model::{f_value, Association, DelayModel, ScenarioTrace};

/// Each UE picks the station with the highest SINR in the previous slot
/// (slot 0 looks at itself). Ties go to the lowest BS index.
pub fn max_sinr_policy(trace: &ScenarioTrace, t: usize) -> Association {
    let observed = t.saturating_sub(1);
    let choices: Vec<usize> = trace
        .slot_sinr(observed)
        .chunks_exact(trace.bss)
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (j, &s)| {
                    if s > best.1 {
                        (j, s)
                    } else {
                        best
                    }
                })
                .0
        })
        .collect();
    Association::from_choices(&choices, trace.bss)
}

/// Every UE independently uniform over the stations.
pub fn random_policy<R: Rng + ?Sized>(ues: usize, bss: usize, rng: &mut R) -> Association {
    let choices: Vec<usize> = (0..ues).map(|_| rng.random_range(0..bss)).collect();
    Association::from_choices(&choices, bss)
}

/// Size limits for the exact oracle.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OracleBudget {
    /// Largest admissible `J^I`.
    pub max_states: u128,
    /// Largest admissible `J^I * T`.
    pub max_state_slots: u128,
}

impl Default for OracleBudget {
    fn default() -> Self {
        OracleBudget {
            max_states: 4096,
            max_state_slots: 50_000_000,
        }
    }
}

impl OracleBudget {
    pub fn check(&self, ues: usize, bss: usize, horizon: usize) -> Result<usize> {
        let states = (bss as u128).checked_pow(ues as u32).unwrap_or(u128::MAX);
        let product = states.saturating_mul(horizon as u128);
        if states > self.max_states || product > self.max_state_slots {
            return Err(Error::BudgetExceeded {
                states,
                slots: horizon,
                product,
                max_states: self.max_states,
                max_state_slots: self.max_state_slots,
            });
        }
        Ok(states as usize)
    }
}

/// The best integral association sequence in hindsight.
#[derive(Clone, Debug, Serialize)]
pub struct OraclePath {
    /// Chosen BS per UE, per slot.
    pub choices: Vec<Vec<usize>>,
    /// `f_t(x*_t)` with `x*_{-1} = x*_0`.
    pub f_per_slot: Vec<f64>,
    pub total_f: f64,
    /// `P_T = sum_t ||x*_t - x*_{t-1}||_{A_t}`.
    pub path_length: f64,
    #[serde(skip)]
    bss: usize,
}

impl OraclePath {
    pub fn association(&self, t: usize) -> Association {
        Association::from_choices(&self.choices[t], self.bss)
    }

    pub fn associations(&self) -> Vec<Association> {
        (0..self.choices.len()).map(|t| self.association(t)).collect()
    }

    pub fn horizon(&self) -> usize {
        self.choices.len()
    }
}

/// Score a fixed integral path: per-slot `f_t` and the path length.
///
/// The slot before the horizon is taken to be the path's own first slot.
pub fn score_path(
    trace: &ScenarioTrace,
    delay: &DelayModel,
    path: &[Association],
) -> (Vec<f64>, f64) {
    let mut f = Vec::with_capacity(path.len());
    let mut length = 0.0;
    for (t, x) in path.iter().enumerate() {
        let prev = if t == 0 { x } else { &path[t - 1] };
        let cap = trace.slot_capacity(t);
        f.push(f_value(&cap, delay, t, x, prev));
        length += delay.a_norm(t, x, prev);
    }
    (f, length)
}

fn decode_state(mut s: usize, ues: usize, bss: usize, out: &mut [usize]) {
    for i in (0..ues).rev() {
        out[i] = s % bss;
        s /= bss;
    }
}

/// Exact maximiser of `sum_t f_t(x_t)` over integral sequences, by dynamic
/// programming over all `J^I` joint associations. State indices follow the
/// lexicographic order of the per-UE choice vectors; ties resolve to the
/// smallest index.
pub fn oracle_dp(
    trace: &ScenarioTrace,
    delay: &DelayModel,
    budget: &OracleBudget,
) -> Result<OraclePath> {
    let (ues, bss, horizon) = (trace.ues, trace.bss, trace.horizon);
    let states = budget.check(ues, bss, horizon)?;

    let mut table = vec![0usize; states * ues];
    for (s, digits) in table.chunks_exact_mut(ues).enumerate() {
        decode_state(s, ues, bss, digits);
    }
    // sum_j n_j log10 n_j depends only on the joint state.
    let entropy: Vec<f64> = table
        .chunks_exact(ues)
        .map(|digits| {
            let mut counts = vec![0usize; bss];
            digits.iter().for_each(|&j| counts[j] += 1);
            counts
                .into_iter()
                .filter(|&n| n > 0)
                .map(|n| n as f64 * (n as f64).log10())
                .sum()
        })
        .collect();

    let slot_utility = |t: usize| -> Vec<f64> {
        let cap = trace.slot_capacity(t);
        table
            .chunks_exact(ues)
            .zip(&entropy)
            .map(|(digits, h)| {
                digits
                    .iter()
                    .enumerate()
                    .map(|(i, &j)| cap.log_capacity[i * bss + j])
                    .sum::<f64>()
                    - h
            })
            .collect()
    };
    let distances = |t: usize| -> Vec<f64> {
        let a = delay.weights_at(t);
        let mut d = vec![0.0; states * states];
        d.par_chunks_mut(states).enumerate().for_each(|(s, row)| {
            let cur = &table[s * ues..(s + 1) * ues];
            for (sp, out) in row.iter_mut().enumerate() {
                let prev = &table[sp * ues..(sp + 1) * ues];
                let sq: f64 = cur
                    .iter()
                    .zip(prev)
                    .enumerate()
                    .filter(|(_, (c, p))| c != p)
                    .map(|(i, (&c, &p))| a[i * bss + c] + a[i * bss + p])
                    .sum();
                *out = delay.gamma * sq.sqrt();
            }
        });
        d
    };

    let static_dist = delay.is_static().then(|| distances(0));
    let mut value = slot_utility(0);
    let mut back: Vec<u16> = Vec::with_capacity(states * horizon.saturating_sub(1));
    let mut next = vec![0.0; states];
    let mut step_back = vec![0u16; states];

    for t in 1..horizon {
        let owned;
        let dist = match &static_dist {
            Some(d) => d,
            None => {
                owned = distances(t);
                &owned
            }
        };
        let utility = slot_utility(t);
        next.par_iter_mut()
            .zip(step_back.par_iter_mut())
            .enumerate()
            .for_each(|(s, (v, b))| {
                let row = &dist[s * states..(s + 1) * states];
                let mut best = f64::NEG_INFINITY;
                let mut arg = 0usize;
                for (sp, (&vp, &d)) in value.iter().zip(row).enumerate() {
                    let cand = vp - d;
                    if cand > best {
                        best = cand;
                        arg = sp;
                    }
                }
                *v = utility[s] + best;
                *b = arg as u16;
            });
        std::mem::swap(&mut value, &mut next);
        back.extend_from_slice(&step_back);
    }

    let mut state = value
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (s, &v)| if v > best.1 { (s, v) } else { best })
        .0;
    let mut states_path = vec![0usize; horizon];
    states_path[horizon - 1] = state;
    for t in (1..horizon).rev() {
        state = back[(t - 1) * states + state] as usize;
        states_path[t - 1] = state;
    }

    let choices: Vec<Vec<usize>> = states_path
        .iter()
        .map(|&s| table[s * ues..(s + 1) * ues].to_vec())
        .collect();
    let path: Vec<Association> = choices
        .iter()
        .map(|c| Association::from_choices(c, bss))
        .collect();
    let (f_per_slot, path_length) = score_path(trace, delay, &path);
    Ok(OraclePath {
        total_f: f_per_slot.iter().sum(),
        choices,
        f_per_slot,
        path_length,
        bss,
    })
}

/// Running average regret `(sum_{s<=t} f*_s - f_s) / t`, for `t = 1..=T`.
pub fn dynamic_regret(run_f: &[f64], oracle: &OraclePath) -> Vec<f64> {
    assert_eq!(
        run_f.len(),
        oracle.f_per_slot.len(),
        "regret needs equal horizons"
    );
    let mut cum = 0.0;
    run_f
        .iter()
        .zip(&oracle.f_per_slot)
        .enumerate()
        .map(|(t, (f, best))| {
            cum += best - f;
            cum / (t + 1) as f64
        })
        .collect()
}
