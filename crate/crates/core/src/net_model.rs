//! Network layer: SINR and capacities, the concave throughput utility `g_t`,
//! its gradient, the A-norm handover cost and the combined objective `f_t`.
//!
//! Utilities use base-10 logarithms throughout. For an association `x`
//! (one row per UE, one column per BS) with loads `y_j = sum_i x_ij`:
//!
//! ```text
//! g_t(x) = sum_ij x_ij log10 c_ij(t) - sum_j y_j log10 y_j
//! h(x, x') = gamma * sqrt( sum_ij a_ij (x_ij - x'_ij)^2 )
//! f_t(x) = g_t(x) - h(x, x_{t-1})
//! ```
//!
//! `h` is kept as a nonnegative magnitude and subtracted by the caller.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used when checking that every association row sums to one.
pub const ROW_SUM_TOL: f64 = 1e-9;

/// Loads below this are clamped when differentiating `-y log10 y`.
pub const Y_FLOOR: f64 = 1e-6;

const INV_LN_10: f64 = std::f64::consts::LOG10_E;

/// Radio access technology of a base station.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Rat {
    #[serde(rename = "2G")]
    G2,
    #[serde(rename = "3G")]
    G3,
    /// 4G and 5G non-standalone share the same mobility management.
    #[serde(rename = "4G/5G-NSA")]
    G4Nsa,
}

impl Rat {
    pub const ALL: [Rat; 3] = [Rat::G2, Rat::G3, Rat::G4Nsa];

    pub fn as_str(self) -> &'static str {
        match self {
            Rat::G2 => "2G",
            Rat::G3 => "3G",
            Rat::G4Nsa => "4G/5G-NSA",
        }
    }
}

impl fmt::Display for Rat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Rat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "2G" => Ok(Rat::G2),
            "3G" => Ok(Rat::G3),
            "4G" | "5G" | "5G-NSA" | "4G/5G-NSA" | "4G5G" => Ok(Rat::G4Nsa),
            other => Err(Error::InvalidParameter(format!("unknown RAT `{other}`"))),
        }
    }
}

/// Device category; together with the target RAT it determines handover delay.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UeType {
    Dongle,
    Iot,
    FeaturePhone,
    Modem,
    Smartphone,
    Tablet,
    WlanRouter,
    Wearable,
}

impl UeType {
    pub const ALL: [UeType; 8] = [
        UeType::Dongle,
        UeType::Iot,
        UeType::FeaturePhone,
        UeType::Modem,
        UeType::Smartphone,
        UeType::Tablet,
        UeType::WlanRouter,
        UeType::Wearable,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            UeType::Dongle => "dongle",
            UeType::Iot => "iot",
            UeType::FeaturePhone => "feature_phone",
            UeType::Modem => "modem",
            UeType::Smartphone => "smartphone",
            UeType::Tablet => "tablet",
            UeType::WlanRouter => "wlan_router",
            UeType::Wearable => "wearable",
        }
    }
}

impl fmt::Display for UeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for UeType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace(['-', ' '], "_");
        UeType::ALL
            .into_iter()
            .find(|t| t.as_str() == key)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown UE type `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BsConfig {
    pub id: usize,
    pub bandwidth_hz: f64,
    pub tx_power_w: f64,
    pub rat: Rat,
    /// Base stations sharing a key interfere with each other.
    pub freq_group: u32,
    pub location: Option<(f64, f64)>,
}

impl BsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth_hz > 0.0 && self.bandwidth_hz.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "BS {}: bandwidth must be positive, got {}",
                self.id, self.bandwidth_hz
            )));
        }
        if !(self.tx_power_w > 0.0 && self.tx_power_w.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "BS {}: transmit power must be positive, got {}",
                self.id, self.tx_power_w
            )));
        }
        Ok(())
    }
}

/// Per-UE Gauss-Markov mobility parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussMarkov {
    /// Long-run mean speed in m/s.
    pub mean_speed: f64,
    /// Variance of the speed process, (m/s)^2.
    pub speed_variance: f64,
    /// Memory parameter: 0 is memoryless, 1 is straight-line motion.
    pub randomness: f64,
}

impl GaussMarkov {
    pub fn validate(&self) -> Result<()> {
        if !(1.0..=28.0).contains(&self.mean_speed) {
            return Err(Error::InvalidParameter(format!(
                "mean speed {} outside [1, 28] m/s",
                self.mean_speed
            )));
        }
        if !(0.0..=14.0).contains(&self.speed_variance) {
            return Err(Error::InvalidParameter(format!(
                "speed variance {} outside [0, 14]",
                self.speed_variance
            )));
        }
        if !(0.0..=1.0).contains(&self.randomness) {
            return Err(Error::InvalidParameter(format!(
                "randomness {} outside [0, 1]",
                self.randomness
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UeConfig {
    pub id: usize,
    pub ue_type: UeType,
    pub mobility: Option<GaussMarkov>,
}

/// Per-slot average SINR for every UE-BS pair, plus station metadata.
///
/// SINR is stored densely in slot-major order: `sinr_db[(t * I + i) * J + j]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioTrace {
    pub ues: usize,
    pub bss: usize,
    pub horizon: usize,
    pub sinr_db: Vec<f64>,
    pub bs: Vec<BsConfig>,
    pub ue: Vec<UeConfig>,
}

impl ScenarioTrace {
    pub fn validate(&self) -> Result<()> {
        if self.ues == 0 || self.bss == 0 || self.horizon == 0 {
            return Err(Error::Schema(format!(
                "empty trace: I={}, J={}, T={}",
                self.ues, self.bss, self.horizon
            )));
        }
        if self.sinr_db.len() != self.horizon * self.ues * self.bss {
            return Err(Error::Schema(format!(
                "SINR tensor has {} entries, expected T*I*J = {}",
                self.sinr_db.len(),
                self.horizon * self.ues * self.bss
            )));
        }
        if self.bs.len() != self.bss || self.ue.len() != self.ues {
            return Err(Error::Schema(format!(
                "metadata covers {} BSs / {} UEs, trace has {} / {}",
                self.bs.len(),
                self.ue.len(),
                self.bss,
                self.ues
            )));
        }
        if let Some(pos) = self.sinr_db.iter().position(|s| !s.is_finite()) {
            return Err(Error::Schema(format!("non-finite SINR at flat index {pos}")));
        }
        self.bs.iter().try_for_each(BsConfig::validate)
    }

    /// SINR (dB) of all pairs in slot `t`, row-major over (UE, BS).
    pub fn slot_sinr(&self, t: usize) -> &[f64] {
        let n = self.ues * self.bss;
        &self.sinr_db[t * n..(t + 1) * n]
    }

    pub fn sinr(&self, t: usize, i: usize, j: usize) -> f64 {
        self.sinr_db[(t * self.ues + i) * self.bss + j]
    }

    /// Shannon capacity of pair `(i, j)` in slot `t`, in bit/s.
    pub fn capacity(&self, t: usize, i: usize, j: usize) -> f64 {
        capacity(self.bs[j].bandwidth_hz, self.sinr(t, i, j))
    }

    /// Raw (unnormalised) log-capacities for slot `t`.
    pub fn slot_capacity(&self, t: usize) -> SlotCapacity {
        let log_capacity = self
            .slot_sinr(t)
            .chunks_exact(self.bss)
            .flat_map(|row| {
                row.iter()
                    .zip(&self.bs)
                    .map(|(&s, bs)| capacity(bs.bandwidth_hz, s).log10())
            })
            .collect();
        SlotCapacity {
            ues: self.ues,
            bss: self.bss,
            log_capacity,
        }
    }

    /// Smallest `log10 c_ij(t)` over the whole trace.
    ///
    /// Dividing every capacity by `10^scale` puts all log-capacities in
    /// `[0, log10(c_max / c_min)]`.
    pub fn capacity_log_scale(&self) -> f64 {
        let mut min = f64::INFINITY;
        for row in self.sinr_db.chunks_exact(self.bss) {
            for (&s, bs) in row.iter().zip(&self.bs) {
                min = min.min(capacity(bs.bandwidth_hz, s).log10());
            }
        }
        min
    }
}

/// dB to linear power ratio.
pub fn sinr_linear(s_db: f64) -> f64 {
    10f64.powf(s_db / 10.0)
}

/// `w log2(1 + SINR)` in bit/s.
pub fn capacity(bandwidth_hz: f64, s_db: f64) -> f64 {
    bandwidth_hz * (1.0 + sinr_linear(s_db)).log2()
}

/// `log10 c_ij` for one slot, optionally shifted by a global scale.
#[derive(Clone, Debug, PartialEq)]
pub struct SlotCapacity {
    pub ues: usize,
    pub bss: usize,
    pub log_capacity: Vec<f64>,
}

impl SlotCapacity {
    pub fn from_log_capacity(ues: usize, bss: usize, log_capacity: Vec<f64>) -> Self {
        assert_eq!(log_capacity.len(), ues * bss, "log-capacity shape mismatch");
        SlotCapacity {
            ues,
            bss,
            log_capacity,
        }
    }

    /// Divide all capacities by `10^log_scale`.
    pub fn rescaled(mut self, log_scale: f64) -> Self {
        self.log_capacity.iter_mut().for_each(|c| *c -= log_scale);
        self
    }
}

/// A (possibly fractional) assignment of UEs to base stations.
///
/// Each row is a point on the probability simplex over base stations.
#[derive(Clone, Debug, PartialEq)]
pub struct Association {
    ues: usize,
    bss: usize,
    values: Vec<f64>,
}

impl Association {
    /// Integral association from per-UE BS choices.
    pub fn from_choices(choices: &[usize], bss: usize) -> Self {
        let mut values = vec![0.0; choices.len() * bss];
        for (i, &j) in choices.iter().enumerate() {
            assert!(j < bss, "BS index {j} out of range for J={bss}");
            values[i * bss + j] = 1.0;
        }
        Association {
            ues: choices.len(),
            bss,
            values,
        }
    }

    /// Checked constructor from row-major values.
    pub fn from_values(ues: usize, bss: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != ues * bss {
            return Err(Error::InvalidParameter(format!(
                "association needs {} entries, got {}",
                ues * bss,
                values.len()
            )));
        }
        let x = Association { ues, bss, values };
        x.check_feasible()?;
        Ok(x)
    }

    /// Row-major values without the simplex check; used by projections
    /// and mixtures whose output is feasible by construction.
    pub(crate) fn from_values_unchecked(ues: usize, bss: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), ues * bss);
        Association { ues, bss, values }
    }

    /// Uniform split of every UE over all base stations.
    pub fn uniform(ues: usize, bss: usize) -> Self {
        Association {
            ues,
            bss,
            values: vec![1.0 / bss as f64; ues * bss],
        }
    }

    pub fn ues(&self) -> usize {
        self.ues
    }

    pub fn bss(&self) -> usize {
        self.bss
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.bss + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.bss..(i + 1) * self.bss]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.values.chunks_exact(self.bss)
    }

    /// Per-BS loads `y_j = sum_i x_ij`.
    pub fn loads(&self) -> Vec<f64> {
        let mut y = vec![0.0; self.bss];
        for row in self.rows() {
            for (yj, &x) in y.iter_mut().zip(row) {
                *yj += x;
            }
        }
        y
    }

    /// True iff every row is a standard basis vector.
    pub fn is_integral(&self) -> bool {
        self.rows()
            .all(|row| row.iter().all(|&v| v == 0.0 || v == 1.0) && row.iter().sum::<f64>() == 1.0)
    }

    /// The chosen BS of every UE, when integral.
    pub fn choices(&self) -> Option<Vec<usize>> {
        if !self.is_integral() {
            return None;
        }
        Some(
            self.rows()
                .map(|row| row.iter().position(|&v| v == 1.0).unwrap())
                .collect(),
        )
    }

    pub fn check_feasible(&self) -> Result<()> {
        for (i, row) in self.rows().enumerate() {
            if let Some(v) = row.iter().find(|v| !(-ROW_SUM_TOL..=1.0 + ROW_SUM_TOL).contains(*v)) {
                return Err(Error::InvalidParameter(format!(
                    "UE {i}: entry {v} outside [0, 1]"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidParameter(format!(
                    "UE {i}: row sums to {sum}, expected 1"
                )));
            }
        }
        Ok(())
    }

    /// Euclidean distance to another association of the same shape.
    pub fn l2_distance(&self, other: &Association) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// Number of UEs whose row differs from `other`.
    pub fn changed_rows(&self, other: &Association) -> usize {
        self.rows().zip(other.rows()).filter(|(a, b)| a != b).count()
    }
}

fn xlogx(v: f64) -> f64 {
    if v <= 0.0 {
        0.0
    } else {
        v * v.log10()
    }
}

/// Throughput utility `g_t(x)`.
pub fn g_value(cap: &SlotCapacity, x: &Association) -> f64 {
    debug_assert_eq!((cap.ues, cap.bss), (x.ues, x.bss));
    let linear: f64 = cap
        .log_capacity
        .iter()
        .zip(&x.values)
        .map(|(c, v)| c * v)
        .sum();
    let entropy: f64 = x.loads().into_iter().map(xlogx).sum();
    linear - entropy
}

/// Gradient of `g_t` at `x`, row-major over (UE, BS).
///
/// `d/dx_ij g = log10 c_ij - log10 y_j - 1/ln 10`, with `y_j` clamped at
/// [`Y_FLOOR`] so unloaded stations yield a large but finite pull.
pub fn g_gradient(cap: &SlotCapacity, x: &Association) -> Vec<f64> {
    debug_assert_eq!((cap.ues, cap.bss), (x.ues, x.bss));
    let load_term: Vec<f64> = x
        .loads()
        .into_iter()
        .map(|y| y.max(Y_FLOOR).log10() + INV_LN_10)
        .collect();
    cap.log_capacity
        .chunks_exact(cap.bss)
        .flat_map(|row| row.iter().zip(&load_term).map(|(c, l)| c - l))
        .collect()
}

/// Diagonal delay weights `a_ij`, either fixed or observed per slot.
#[derive(Clone, Debug, PartialEq)]
pub enum DelayWeights {
    Static(Vec<f64>),
    /// Slot-major, `T * I * J` entries.
    PerSlot(Vec<f64>),
}

/// The diagonal matrix `A` (or `A_t`) and the scalarisation weight gamma.
#[derive(Clone, Debug, PartialEq)]
pub struct DelayModel {
    pub ues: usize,
    pub bss: usize,
    pub gamma: f64,
    pub weights: DelayWeights,
    /// Upper bound on every entry, used for step-size derivation.
    pub a_max: f64,
}

impl DelayModel {
    pub fn new_static(ues: usize, bss: usize, gamma: f64, a: Vec<f64>) -> Result<Self> {
        if a.len() != ues * bss {
            return Err(Error::InvalidParameter(format!(
                "delay matrix needs {} entries, got {}",
                ues * bss,
                a.len()
            )));
        }
        let a_max = Self::checked_max(&a)?;
        Self::check_gamma(gamma)?;
        Ok(DelayModel {
            ues,
            bss,
            gamma,
            weights: DelayWeights::Static(a),
            a_max,
        })
    }

    /// Time-varying delays. `a_max_bound` must dominate every entry.
    pub fn new_per_slot(
        ues: usize,
        bss: usize,
        gamma: f64,
        a: Vec<f64>,
        a_max_bound: f64,
    ) -> Result<Self> {
        if a.is_empty() || a.len() % (ues * bss) != 0 {
            return Err(Error::InvalidParameter(format!(
                "per-slot delays must be a multiple of I*J = {}, got {}",
                ues * bss,
                a.len()
            )));
        }
        let observed = Self::checked_max(&a)?;
        if observed > a_max_bound {
            return Err(Error::InvalidParameter(format!(
                "delay entry {observed} exceeds the configured bound {a_max_bound}"
            )));
        }
        Self::check_gamma(gamma)?;
        Ok(DelayModel {
            ues,
            bss,
            gamma,
            weights: DelayWeights::PerSlot(a),
            a_max: a_max_bound,
        })
    }

    /// All-ones weights: the plain Euclidean norm.
    pub fn unit(ues: usize, bss: usize, gamma: f64) -> Self {
        DelayModel {
            ues,
            bss,
            gamma,
            weights: DelayWeights::Static(vec![1.0; ues * bss]),
            a_max: 1.0,
        }
    }

    pub fn with_gamma(&self, gamma: f64) -> Self {
        DelayModel {
            gamma,
            ..self.clone()
        }
    }

    pub fn is_static(&self) -> bool {
        matches!(self.weights, DelayWeights::Static(_))
    }

    /// `a[t]`, row-major over (UE, BS).
    pub fn weights_at(&self, t: usize) -> &[f64] {
        match &self.weights {
            DelayWeights::Static(a) => a,
            DelayWeights::PerSlot(a) => {
                let n = self.ues * self.bss;
                let slots = a.len() / n;
                let t = t.min(slots - 1);
                &a[t * n..(t + 1) * n]
            }
        }
    }

    /// `||x - x'||_{A_t}`, without gamma.
    pub fn a_norm(&self, t: usize, x: &Association, x_prev: &Association) -> f64 {
        weighted_norm(self.weights_at(t), x.values(), x_prev.values())
    }

    /// `gamma ||x - x'||_{A_t}`: the handover cost magnitude.
    pub fn switching_cost(&self, t: usize, x: &Association, x_prev: &Association) -> f64 {
        self.gamma * self.a_norm(t, x, x_prev)
    }

    fn checked_max(a: &[f64]) -> Result<f64> {
        let mut max = 0.0f64;
        for &v in a {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "delay weights must be finite and nonnegative, got {v}"
                )));
            }
            max = max.max(v);
        }
        Ok(max)
    }

    fn check_gamma(gamma: f64) -> Result<()> {
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "gamma must be finite and nonnegative, got {gamma}"
            )));
        }
        Ok(())
    }
}

pub(crate) fn weighted_norm(a: &[f64], x: &[f64], y: &[f64]) -> f64 {
    a.iter()
        .zip(x.iter().zip(y))
        .map(|(w, (p, q))| w * (p - q) * (p - q))
        .sum::<f64>()
        .sqrt()
}

/// `f_t(x) = g_t(x) - gamma ||x - x_prev||_{A_t}`.
pub fn f_value(
    cap: &SlotCapacity,
    delay: &DelayModel,
    t: usize,
    x: &Association,
    x_prev: &Association,
) -> f64 {
    g_value(cap, x) - delay.switching_cost(t, x, x_prev)
}

/// Sum of equal-share rates `c_ij (1 - d_ij) / y_j` in bit/s for an integral
/// association. A UE that changed station loses the fraction
/// `min(1, a_old + a_new)` of the slot.
pub fn slot_throughput(
    trace: &ScenarioTrace,
    delay: &DelayModel,
    t: usize,
    x: &Association,
    x_prev: &Association,
) -> f64 {
    let (Some(now), Some(before)) = (x.choices(), x_prev.choices()) else {
        return f64::NAN;
    };
    let loads = x.loads();
    let a = delay.weights_at(t);
    now.iter()
        .zip(&before)
        .enumerate()
        .map(|(i, (&j, &j_prev))| {
            let d = if j == j_prev {
                0.0
            } else {
                (a[i * trace.bss + j] + a[i * trace.bss + j_prev]).min(1.0)
            };
            trace.capacity(t, i, j) * (1.0 - d) / loads[j]
        })
        .sum()
}
