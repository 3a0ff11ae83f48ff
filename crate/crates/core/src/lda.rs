//! Learning dynamic associations: a Hedge meta-learner over a grid of
//! online-gradient-ascent experts, with unbiased rounding of the mixed
//! decision to an implementable one.
//!
//! One slot of [`Lda::step`] runs, in order:
//!
//! 1. every expert shares its fractional decision `x^k` (plus an optional
//!    forecaster decision, treated as one more expert);
//! 2. the mix `x^m = sum_k w_k x^k`;
//! 3. a per-UE draw `x ~ x^m`, either fresh each slot or coupled to the
//!    previous draw (see [`Rounding`]); both keep `E[x] = x^m`;
//! 4. the gradient of `g_t` at the implemented `x`, observed after the slot;
//! 5. surrogate losses and the exponential-weights update;
//! 6. a projected ascent step for every learning expert, all sharing the
//!    same gradient.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net_model::{g_gradient, Association, DelayModel, SlotCapacity};

const INV_LN_10: f64 = std::f64::consts::LOG10_E;

/// Step sizes, meta step and the bound constants they are built from.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LdaParams {
    pub ues: usize,
    pub bss: usize,
    pub horizon: usize,
    /// Number of learning experts `K`.
    pub experts: usize,
    /// Expert steps, `thetas[k] = 2^k * thetas[0]`.
    pub thetas: Vec<f64>,
    pub beta: f64,
    pub nu: f64,
    /// Diameter of the relaxed decision set, `sqrt(2I)`.
    pub d: f64,
    /// Gradient norm bound `sqrt(IJ) (log10 J + 1/ln 10)`.
    pub g: f64,
    pub d_a: f64,
    pub g_a: f64,
    pub d_a_star: f64,
    pub a_max: f64,
    pub gamma: f64,
}

/// Derive expert count, steps and meta step for a horizon and delay bound.
pub fn derive_params(
    ues: usize,
    bss: usize,
    horizon: usize,
    a_max: f64,
    gamma: f64,
) -> Result<LdaParams> {
    if ues == 0 || bss == 0 {
        return Err(Error::InvalidParameter(format!(
            "need at least one UE and one BS, got I={ues}, J={bss}"
        )));
    }
    if horizon == 0 {
        return Err(Error::InvalidParameter("horizon T must be at least 1".into()));
    }
    if !(a_max > 0.0 && a_max.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "a_max must be positive, got {a_max}"
        )));
    }
    let t = horizon as f64;
    let experts = (0.5 * (1.0 + 2.0 * t).log2()).ceil() as usize + 1;

    let d = (2.0 * ues as f64).sqrt();
    let g = ((ues * bss) as f64).sqrt() * ((bss as f64).log10() + INV_LN_10);
    let root_a = a_max.sqrt();
    let d_a = root_a * d;
    let g_a = root_a * g;
    let d_a_star = d / root_a;

    let base_step = (d_a * d_a / (t * (g * g + 2.0 * g_a))).sqrt();
    let thetas = (0..experts)
        .map(|k| base_step * 2f64.powi(k as i32))
        .collect();

    let nu = (2.0 * g * d + d_a).powi(2) * (d_a + 0.125);
    let beta = 1.0 / (t * nu).sqrt();

    Ok(LdaParams {
        ues,
        bss,
        horizon,
        experts,
        thetas,
        beta,
        nu,
        d,
        g,
        d_a,
        g_a,
        d_a_star,
        a_max,
        gamma,
    })
}

/// Prior `w_k = (1 + 1/K) / (k (k + 1))` for `k = 1..=K`.
pub fn init_weights(k: usize) -> Vec<f64> {
    assert!(k >= 1, "need at least one expert");
    let scale = 1.0 + 1.0 / k as f64;
    (1..=k).map(|k| scale / (k * (k + 1)) as f64).collect()
}

/// Euclidean projection of one vector onto the probability simplex.
pub fn project_simplex(row: &mut [f64]) {
    let mut sorted = row.to_vec();
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for (idx, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let candidate = (cumsum - 1.0) / (idx + 1) as f64;
        if u - candidate > 0.0 {
            tau = candidate;
        } else {
            break;
        }
    }
    row.iter_mut().for_each(|v| *v = (*v - tau).max(0.0));
}

/// Row-wise simplex projection of an `I x J` row-major array.
pub fn project_simplex_rows(mut z: Vec<f64>, ues: usize, bss: usize) -> Association {
    assert_eq!(z.len(), ues * bss, "projection input shape mismatch");
    z.chunks_exact_mut(bss).for_each(project_simplex);
    Association::from_values_unchecked(ues, bss, z)
}

/// Convex combination `sum_k w_k x^k`.
pub fn meta_mix(experts: &[Association], weights: &[f64]) -> Association {
    assert_eq!(experts.len(), weights.len());
    let (ues, bss) = (experts[0].ues(), experts[0].bss());
    let mut mix = vec![0.0; ues * bss];
    for (x, &w) in experts.iter().zip(weights) {
        if w == 0.0 {
            continue;
        }
        for (m, v) in mix.iter_mut().zip(x.values()) {
            *m += w * v;
        }
    }
    Association::from_values_unchecked(ues, bss, mix)
}

/// Draw an integral association with `E[x] = x_m`: one independent
/// categorical draw per UE.
pub fn quantize<R: Rng + ?Sized>(mixed: &Association, rng: &mut R) -> Association {
    let choices: Vec<usize> = mixed.rows().map(|row| sample_row(row, rng)).collect();
    Association::from_choices(&choices, mixed.bss())
}

/// Draw with marginal `E[x] = x_m` while reusing the previous draw where
/// possible. Each UE keeps its previous station `j` with probability
/// `min(1, q_j / p_j)` (`p` the previous mix row, `q` the current one) and
/// otherwise draws from the normalised excess `(q - p)^+`. If the previous
/// choice was distributed as `p`, the new one is distributed as `q`, and a
/// UE moves with probability equal to the total variation between rows.
pub fn quantize_coupled<R: Rng + ?Sized>(
    mixed: &Association,
    prev_mixed: &Association,
    prev: &[usize],
    rng: &mut R,
) -> Association {
    let bss = mixed.bss();
    let choices: Vec<usize> = mixed
        .rows()
        .zip(prev_mixed.rows())
        .zip(prev)
        .map(|((q, p), &j)| {
            let keep = if p[j] > 0.0 { (q[j] / p[j]).min(1.0) } else { 0.0 };
            if rng.random::<f64>() < keep {
                return j;
            }
            let excess: Vec<f64> = q.iter().zip(p).map(|(a, b)| (a - b).max(0.0)).collect();
            let total: f64 = excess.iter().sum();
            if total > 0.0 {
                let scaled: Vec<f64> = excess.iter().map(|e| e / total).collect();
                sample_row(&scaled, rng)
            } else {
                sample_row(q, rng)
            }
        })
        .collect();
    Association::from_choices(&choices, bss)
}

fn sample_row<R: Rng + ?Sized>(row: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut cum = 0.0;
    for (j, &p) in row.iter().enumerate() {
        cum += p;
        if u < cum {
            return j;
        }
    }
    // Rounding left the cumulative sum just below u.
    row.iter().rposition(|&p| p > 0.0).unwrap_or(row.len() - 1)
}

/// `<grad, x^k - x> - gamma ||x^k - x^k_prev||_{A_t}`.
pub fn surrogate_loss(
    grad: &[f64],
    implemented: &Association,
    expert: &Association,
    expert_prev: &Association,
    delay: &DelayModel,
    t: usize,
) -> f64 {
    let linear: f64 = grad
        .iter()
        .zip(expert.values().iter().zip(implemented.values()))
        .map(|(g, (xk, x))| g * (xk - x))
        .sum();
    linear - delay.switching_cost(t, expert, expert_prev)
}

/// Exponential reweighting `w_k e^{beta l_k}`, normalised.
pub fn update_weights(weights: &[f64], losses: &[f64], beta: f64) -> Vec<f64> {
    assert_eq!(weights.len(), losses.len());
    let logits: Vec<f64> = weights
        .iter()
        .zip(losses)
        .map(|(&w, &l)| if w > 0.0 { w.ln() + beta * l } else { f64::NEG_INFINITY })
        .collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let unnorm: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: f64 = unnorm.iter().sum();
    unnorm.into_iter().map(|v| v / total).collect()
}

/// `Pi(x^k + theta grad)`.
pub fn expert_ascent(expert: &Association, grad: &[f64], theta: f64) -> Association {
    let z = expert
        .values()
        .iter()
        .zip(grad)
        .map(|(x, g)| x + theta * g)
        .collect();
    project_simplex_rows(z, expert.ues(), expert.bss())
}

/// Supplies an externally predicted association at the start of a slot.
pub trait Forecaster {
    fn forecast(&mut self, t: usize) -> Association;
}

/// Replays a fixed decision sequence, holding the last entry past its end.
#[derive(Clone, Debug)]
pub struct SequenceForecaster {
    path: Vec<Association>,
}

impl SequenceForecaster {
    pub fn new(path: Vec<Association>) -> Result<Self> {
        if path.is_empty() {
            return Err(Error::InvalidParameter("empty forecast sequence".into()));
        }
        path.iter().try_for_each(Association::check_feasible)?;
        Ok(SequenceForecaster { path })
    }
}

impl Forecaster for SequenceForecaster {
    fn forecast(&mut self, t: usize) -> Association {
        self.path[t.min(self.path.len() - 1)].clone()
    }
}

/// How the mixed decision becomes an integral one.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rounding {
    /// Fresh draw every slot ([`quantize`]).
    Independent,
    /// Draw coupled to the previous slot ([`quantize_coupled`]).
    #[default]
    Coupled,
}

/// What the controller decided in one slot.
#[derive(Clone, Debug)]
pub struct SlotDecision {
    pub mixed: Association,
    pub implemented: Association,
    /// `||grad g_t(x_t)||_2` on the capacities the learner saw.
    pub gradient_norm: f64,
}

/// Full learner state for one run.
#[derive(Clone, Debug)]
pub struct Lda {
    params: LdaParams,
    experts: Vec<Association>,
    prev: Vec<Association>,
    weights: Vec<f64>,
    movement: Vec<f64>,
    forecaster: bool,
    rng: ChaCha8Rng,
    rounding: Rounding,
    last: Option<(Association, Vec<usize>)>,
}

impl Lda {
    /// Experts start at independent uniformly random vertices. When
    /// `with_forecaster` is set, one extra expert slot (last, smallest prior
    /// weight) is reserved for externally supplied decisions.
    pub fn new(params: LdaParams, seed: u64, with_forecaster: bool) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (ues, bss) = (params.ues, params.bss);
        let mut experts: Vec<Association> = (0..params.experts)
            .map(|_| {
                let choices: Vec<usize> = (0..ues).map(|_| rng.random_range(0..bss)).collect();
                Association::from_choices(&choices, bss)
            })
            .collect();
        if with_forecaster {
            // Replaced by the first forecast.
            experts.push(Association::uniform(ues, bss));
        }
        let total = experts.len();
        Lda {
            weights: init_weights(total),
            prev: experts.clone(),
            movement: vec![0.0; total],
            experts,
            forecaster: with_forecaster,
            rng,
            params,
            rounding: Rounding::default(),
            last: None,
        }
    }

    pub fn with_rounding(mut self, rounding: Rounding) -> Self {
        self.rounding = rounding;
        self
    }

    pub fn params(&self) -> &LdaParams {
        &self.params
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn experts(&self) -> &[Association] {
        &self.experts
    }

    /// Cumulative `sum_t ||x^k_t - x^k_{t-1}||_{A_t}` per expert.
    pub fn expert_movement(&self) -> &[f64] {
        &self.movement
    }

    pub fn has_forecaster(&self) -> bool {
        self.forecaster
    }

    /// Run slot `t`. `cap` is the slot's capacity, revealed only after the
    /// decision is implemented; `delay` supplies the `A_t` observed at the
    /// end of the slot.
    pub fn step(
        &mut self,
        cap: &SlotCapacity,
        delay: &DelayModel,
        t: usize,
        forecast: Option<Association>,
    ) -> Result<SlotDecision> {
        let k_learn = self.params.experts;
        match (self.forecaster, forecast) {
            (true, Some(p)) => {
                if (p.ues(), p.bss()) != (self.params.ues, self.params.bss) {
                    return Err(Error::InvalidParameter(format!(
                        "forecast shape {}x{} does not match {}x{}",
                        p.ues(),
                        p.bss(),
                        self.params.ues,
                        self.params.bss
                    )));
                }
                p.check_feasible()?;
                if t == 0 {
                    self.prev[k_learn] = p.clone();
                }
                self.experts[k_learn] = p;
            }
            (true, None) => {
                return Err(Error::InvalidParameter(format!(
                    "slot {t}: forecaster expert enabled but no forecast supplied"
                )))
            }
            (false, Some(_)) => {
                return Err(Error::InvalidParameter(
                    "forecast supplied to a learner built without a forecaster slot".into(),
                ))
            }
            (false, None) => {}
        }

        let mixed = meta_mix(&self.experts, &self.weights);
        let implemented = match (&self.rounding, &self.last) {
            (Rounding::Coupled, Some((prev_mixed, prev))) => {
                quantize_coupled(&mixed, prev_mixed, prev, &mut self.rng)
            }
            _ => quantize(&mixed, &mut self.rng),
        };
        let grad = g_gradient(cap, &implemented);
        let gradient_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();

        let losses: Vec<f64> = self
            .experts
            .iter()
            .zip(&self.prev)
            .map(|(xk, xk_prev)| surrogate_loss(&grad, &implemented, xk, xk_prev, delay, t))
            .collect();
        for ((m, xk), xk_prev) in self.movement.iter_mut().zip(&self.experts).zip(&self.prev) {
            *m += delay.a_norm(t, xk, xk_prev);
        }
        self.weights = update_weights(&self.weights, &losses, self.params.beta);

        for (k, theta) in self.params.thetas.iter().enumerate() {
            let next = expert_ascent(&self.experts[k], &grad, *theta);
            self.prev[k] = std::mem::replace(&mut self.experts[k], next);
        }
        if self.forecaster {
            self.prev[k_learn] = self.experts[k_learn].clone();
        }

        if self.rounding == Rounding::Coupled {
            let choices = implemented.choices().expect("rounding is integral");
            self.last = Some((mixed.clone(), choices));
        }
        Ok(SlotDecision {
            mixed,
            implemented,
            gradient_norm,
        })
    }
}

/// Terms of the expected dynamic regret bound for a finished run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegretBound {
    /// Expert whose step is closest (log scale) to the ideal step for `P_T`.
    pub expert: usize,
    pub meta_term: f64,
    pub expert_term: f64,
    pub discretization_term: f64,
    pub total: f64,
}

/// Evaluate
/// `sqrt(T) [sqrt(nu) (1 + ln 1/w_k) + sqrt(G^2 + 2 G_A) sqrt(D_A^2 + 2 D_A* P_T)]
///  + G_f T sqrt(I - I/J)`
/// for the expert `k` whose step best matches the benchmark path length.
pub fn regret_bound(params: &LdaParams, g_f: f64, path_length: f64) -> RegretBound {
    let t = params.horizon as f64;
    let curvature = params.g * params.g + 2.0 * params.g_a;
    let ideal_step =
        ((params.d_a * params.d_a + 2.0 * params.d_a_star * path_length) / (t * curvature)).sqrt();
    let expert = params
        .thetas
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| {
            (a.ln() - ideal_step.ln())
                .abs()
                .total_cmp(&(b.ln() - ideal_step.ln()).abs())
        })
        .map(|(k, _)| k)
        .unwrap_or(0);
    let w_k = init_weights(params.experts)[expert];
    let meta_term = t.sqrt() * params.nu.sqrt() * (1.0 + (1.0 / w_k).ln());
    let expert_term = t.sqrt()
        * curvature.sqrt()
        * (params.d_a * params.d_a + 2.0 * params.d_a_star * path_length).sqrt();
    let ues = params.ues as f64;
    let discretization_term = g_f * t * (ues - ues / params.bss as f64).sqrt();
    RegretBound {
        expert,
        meta_term,
        expert_term,
        discretization_term,
        total: meta_term + expert_term + discretization_term,
    }
}
