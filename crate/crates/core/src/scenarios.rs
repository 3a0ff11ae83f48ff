//! Scenario construction: synthetic static and volatile SINR traces, a
//! Gauss-Markov mobility scenario over a log-distance channel, handover
//! delay tables, and ingestion of externally recorded traces.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{StandardNormal, Triangular};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net_model::{
    BsConfig, DelayModel, GaussMarkov, Rat, ScenarioTrace, UeConfig, UeType,
};

/// Synthetic SINR never goes below this, and ingested pairs that were never
/// observed are imputed to it.
pub const SINR_FLOOR_DB: f64 = -10.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Static,
    Volatile,
    Mobility,
    ExternalTrace,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DelayKind {
    /// i.i.d. uniform `[0, 1]` entries.
    UniformUnit,
    /// Sampled from a per (UE type, RAT) delay table.
    MeasuredTable,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DelaySpec {
    pub model: DelayKind,
    /// CSV table; the built-in table is used when absent.
    pub table: Option<PathBuf>,
    /// Resample `A_t` every slot instead of fixing `A`.
    pub time_varying: bool,
}

impl Default for DelaySpec {
    fn default() -> Self {
        DelaySpec {
            model: DelayKind::UniformUnit,
            table: None,
            time_varying: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MobilityConfig {
    pub randomness: f64,
    pub mean_speed_range: (f64, f64),
    pub speed_variance_range: (f64, f64),
    /// Standard deviation of the heading innovation, radians.
    pub heading_sigma_rad: f64,
}

impl Default for MobilityConfig {
    fn default() -> Self {
        MobilityConfig {
            randomness: 0.5,
            mean_speed_range: (1.0, 28.0),
            speed_variance_range: (0.0, 14.0),
            heading_sigma_rad: 0.5,
        }
    }
}

/// Log-distance pathloss with correlated log-normal shadowing.
/// These are simulator defaults, not measured values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelConfig {
    pub pathloss_exponent: f64,
    pub shadowing_db: f64,
    /// Distance over which shadowing decorrelates to `1/e`.
    pub shadowing_decorrelation_m: f64,
    /// Loss at 1 m.
    pub reference_loss_db: f64,
    pub min_distance_m: f64,
    /// Side of the square deployment area.
    pub extent_m: f64,
    pub noise_psd_dbm_hz: f64,
    pub noise_figure_db: f64,
    pub freq_groups: u32,
    pub clip_db: (f64, f64),
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig {
            pathloss_exponent: 3.5,
            shadowing_db: 8.0,
            shadowing_decorrelation_m: 50.0,
            reference_loss_db: 38.0,
            min_distance_m: 10.0,
            extent_m: 1000.0,
            noise_psd_dbm_hz: -174.0,
            noise_figure_db: 7.0,
            freq_groups: 3,
            clip_db: (SINR_FLOOR_DB, 40.0),
        }
    }
}

/// Files of an externally supplied trace. Relative paths resolve against
/// the directory of the configuration file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TracePaths {
    pub sinr: PathBuf,
    pub bs: PathBuf,
    pub ue: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    pub ues: usize,
    pub bss: usize,
    pub horizon: usize,
    pub seed: u64,
    pub gamma: f64,
    pub sinr_range_db: (f64, f64),
    pub volatile_period: usize,
    pub bandwidth_pool_mhz: Vec<f64>,
    pub tx_power_w: f64,
    /// Slot duration; converts millisecond delays to slot fractions and sets
    /// the mobility time step.
    pub slot_length_ms: f64,
    pub ue_type_mix: BTreeMap<UeType, f64>,
    pub rat_mix: BTreeMap<Rat, f64>,
    pub delay: DelaySpec,
    pub mobility: MobilityConfig,
    pub channel: ChannelConfig,
    pub trace: Option<TracePaths>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            kind: ScenarioKind::Static,
            ues: 100,
            bss: 10,
            horizon: 5000,
            seed: 1,
            gamma: 20.0,
            sinr_range_db: (10.0, 30.0),
            volatile_period: 5,
            bandwidth_pool_mhz: vec![5.0, 10.0, 15.0, 20.0],
            tx_power_w: 20.0,
            slot_length_ms: 1000.0,
            ue_type_mix: default_ue_type_mix(),
            rat_mix: BTreeMap::from([(Rat::G4Nsa, 0.88), (Rat::G3, 0.08), (Rat::G2, 0.04)]),
            delay: DelaySpec::default(),
            mobility: MobilityConfig::default(),
            channel: ChannelConfig::default(),
            trace: None,
        }
    }
}

fn default_ue_type_mix() -> BTreeMap<UeType, f64> {
    BTreeMap::from([
        (UeType::Smartphone, 0.60),
        (UeType::Tablet, 0.08),
        (UeType::Modem, 0.08),
        (UeType::Iot, 0.08),
        (UeType::FeaturePhone, 0.05),
        (UeType::Dongle, 0.04),
        (UeType::WlanRouter, 0.04),
        (UeType::Wearable, 0.03),
    ])
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: String| Err(Error::config(format!("scenario.{key}"), msg));
        if self.kind != ScenarioKind::ExternalTrace {
            if self.ues == 0 {
                return bad("ues", "need at least one UE".into());
            }
            if self.bss == 0 {
                return bad("bss", "need at least one BS".into());
            }
            if self.horizon == 0 {
                return bad("horizon", "T must be at least 1".into());
            }
        } else if self.trace.is_none() {
            return bad("trace", "external_trace scenarios need a [scenario.trace] table".into());
        }
        if self.volatile_period == 0 {
            return bad("volatile_period", "must be at least 1".into());
        }
        let (lo, hi) = self.sinr_range_db;
        if !(lo < hi) {
            return bad("sinr_range_db", format!("need lo < hi, got ({lo}, {hi})"));
        }
        if self.bandwidth_pool_mhz.is_empty() || self.bandwidth_pool_mhz.iter().any(|&w| !(w > 0.0)) {
            return bad("bandwidth_pool_mhz", "need a non-empty list of positive bandwidths".into());
        }
        if !(self.tx_power_w > 0.0) {
            return bad("tx_power_w", "must be positive".into());
        }
        if !(self.slot_length_ms > 0.0) {
            return bad("slot_length_ms", "must be positive".into());
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return bad("gamma", format!("must be finite and nonnegative, got {}", self.gamma));
        }
        check_mix("ue_type_mix", self.ue_type_mix.values())?;
        check_mix("rat_mix", self.rat_mix.values())?;
        let m = &self.mobility;
        if !(0.0..=1.0).contains(&m.randomness) {
            return bad("mobility.randomness", "must lie in [0, 1]".into());
        }
        if !(m.mean_speed_range.0 <= m.mean_speed_range.1 && m.mean_speed_range.0 >= 0.0) {
            return bad("mobility.mean_speed_range", "need 0 <= lo <= hi".into());
        }
        if !(m.speed_variance_range.0 <= m.speed_variance_range.1 && m.speed_variance_range.0 >= 0.0)
        {
            return bad("mobility.speed_variance_range", "need 0 <= lo <= hi".into());
        }
        let c = &self.channel;
        if c.freq_groups == 0 {
            return bad("channel.freq_groups", "need at least one group".into());
        }
        if !(c.extent_m > 0.0 && c.min_distance_m > 0.0 && c.shadowing_decorrelation_m > 0.0) {
            return bad("channel", "extent, min distance and decorrelation must be positive".into());
        }
        if !(c.clip_db.0 < c.clip_db.1) {
            return bad("channel.clip_db", "need lo < hi".into());
        }
        Ok(())
    }
}

fn check_mix<'a>(key: &str, weights: impl Iterator<Item = &'a f64>) -> Result<()> {
    let mut total = 0.0;
    for &w in weights {
        if !(w >= 0.0 && w.is_finite()) {
            return Err(Error::config(format!("scenario.{key}"), format!("bad weight {w}")));
        }
        total += w;
    }
    if !(total > 0.0) {
        return Err(Error::config(format!("scenario.{key}"), "weights must not all be zero"));
    }
    Ok(())
}

/// A generated or ingested scenario ready to run.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub trace: ScenarioTrace,
    pub delay: DelayModel,
    pub ingest: Option<IngestReport>,
}

// Independent random streams so that, e.g., changing the delay model does
// not perturb the SINR draws.
const STREAM_STATIONS: u64 = 1;
const STREAM_SINR: u64 = 2;
const STREAM_DELAY: u64 = 3;

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Build the scenario a configuration describes. `base_dir` anchors relative
/// file paths.
pub fn build_scenario(cfg: &ScenarioConfig, base_dir: &Path) -> Result<Scenario> {
    cfg.validate()?;
    let (trace, ingest) = match cfg.kind {
        ScenarioKind::Static => (gen_static(cfg, &mut stream_rng(cfg.seed, STREAM_SINR)), None),
        ScenarioKind::Volatile => (gen_volatile(cfg, &mut stream_rng(cfg.seed, STREAM_SINR)), None),
        ScenarioKind::Mobility => (gen_mobility(cfg, &mut stream_rng(cfg.seed, STREAM_SINR)), None),
        ScenarioKind::ExternalTrace => {
            let paths = cfg.trace.as_ref().expect("validated");
            let resolve = |p: &Path| {
                if p.is_absolute() {
                    p.to_path_buf()
                } else {
                    base_dir.join(p)
                }
            };
            let resolved = TracePaths {
                sinr: resolve(&paths.sinr),
                bs: resolve(&paths.bs),
                ue: paths.ue.as_deref().map(resolve),
            };
            let (trace, report) = ingest_trace(&resolved)?;
            (trace, Some(report))
        }
    };
    let table = match (&cfg.delay.model, &cfg.delay.table) {
        (DelayKind::MeasuredTable, Some(path)) => {
            let path = if path.is_absolute() {
                path.clone()
            } else {
                base_dir.join(path)
            };
            Some(DelayTable::from_csv(&path)?)
        }
        _ => None,
    };
    let delay = build_delay_model(
        cfg,
        table.as_ref(),
        &trace,
        &mut stream_rng(cfg.seed, STREAM_DELAY),
    )?;
    Ok(Scenario {
        trace,
        delay,
        ingest,
    })
}

fn draw_stations<R: Rng + ?Sized>(cfg: &ScenarioConfig, rng: &mut R) -> Vec<BsConfig> {
    let rats: Vec<Rat> = cfg.rat_mix.keys().copied().collect();
    let rat_pick = WeightedIndex::new(cfg.rat_mix.values().copied()).expect("validated mix");
    (0..cfg.bss)
        .map(|id| {
            let bw = cfg.bandwidth_pool_mhz[rng.random_range(0..cfg.bandwidth_pool_mhz.len())];
            let rat = rats[rat_pick.sample(rng)];
            let freq_group = rng.random_range(0..cfg.channel.freq_groups);
            let location = (
                rng.random_range(0.0..cfg.channel.extent_m),
                rng.random_range(0.0..cfg.channel.extent_m),
            );
            BsConfig {
                id,
                bandwidth_hz: bw * 1e6,
                tx_power_w: cfg.tx_power_w,
                rat,
                freq_group,
                location: Some(location),
            }
        })
        .collect()
}

fn draw_ues<R: Rng + ?Sized>(cfg: &ScenarioConfig, rng: &mut R, mobile: bool) -> Vec<UeConfig> {
    let types: Vec<UeType> = cfg.ue_type_mix.keys().copied().collect();
    let type_pick = WeightedIndex::new(cfg.ue_type_mix.values().copied()).expect("validated mix");
    let m = &cfg.mobility;
    (0..cfg.ues)
        .map(|id| {
            let ue_type = types[type_pick.sample(rng)];
            let mobility = mobile.then(|| GaussMarkov {
                mean_speed: uniform_in(rng, m.mean_speed_range),
                speed_variance: uniform_in(rng, m.speed_variance_range),
                randomness: m.randomness,
            });
            UeConfig {
                id,
                ue_type,
                mobility,
            }
        })
        .collect()
}

fn uniform_in<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

fn metadata(cfg: &ScenarioConfig, mobile: bool) -> (Vec<BsConfig>, Vec<UeConfig>) {
    let mut rng = stream_rng(cfg.seed, STREAM_STATIONS);
    let bs = draw_stations(cfg, &mut rng);
    let ue = draw_ues(cfg, &mut rng, mobile);
    (bs, ue)
}

/// SINR drawn once per pair, uniform in the configured range, and held for
/// every slot.
pub fn gen_static<R: Rng + ?Sized>(cfg: &ScenarioConfig, rng: &mut R) -> ScenarioTrace {
    let n = cfg.ues * cfg.bss;
    let (lo, hi) = cfg.sinr_range_db;
    let slot: Vec<f64> = (0..n).map(|_| rng.random_range(lo..hi)).collect();
    let mut sinr_db = Vec::with_capacity(n * cfg.horizon);
    for _ in 0..cfg.horizon {
        sinr_db.extend_from_slice(&slot);
    }
    let (bs, ue) = metadata(cfg, false);
    ScenarioTrace {
        ues: cfg.ues,
        bss: cfg.bss,
        horizon: cfg.horizon,
        sinr_db,
        bs,
        ue,
    }
}

/// Every pair redrawn uniformly each `volatile_period` slots.
pub fn gen_volatile<R: Rng + ?Sized>(cfg: &ScenarioConfig, rng: &mut R) -> ScenarioTrace {
    let n = cfg.ues * cfg.bss;
    let (lo, hi) = cfg.sinr_range_db;
    let mut sinr_db = Vec::with_capacity(n * cfg.horizon);
    let mut slot = Vec::new();
    for t in 0..cfg.horizon {
        if t % cfg.volatile_period == 0 {
            slot = (0..n).map(|_| rng.random_range(lo..hi)).collect();
        }
        sinr_db.extend_from_slice(&slot);
    }
    let (bs, ue) = metadata(cfg, false);
    ScenarioTrace {
        ues: cfg.ues,
        bss: cfg.bss,
        horizon: cfg.horizon,
        sinr_db,
        bs,
        ue,
    }
}

/// Kinematic state of every UE under the Gauss-Markov model.
#[derive(Clone, Debug, PartialEq)]
pub struct MobilityState {
    pub position: Vec<(f64, f64)>,
    pub speed: Vec<f64>,
    pub heading: Vec<f64>,
    pub params: Vec<GaussMarkov>,
}

impl MobilityState {
    pub fn new<R: Rng + ?Sized>(params: Vec<GaussMarkov>, extent_m: f64, rng: &mut R) -> Self {
        let position = params
            .iter()
            .map(|_| (rng.random_range(0.0..extent_m), rng.random_range(0.0..extent_m)))
            .collect();
        let heading = params
            .iter()
            .map(|_| rng.random_range(0.0..std::f64::consts::TAU))
            .collect();
        MobilityState {
            position,
            speed: params.iter().map(|p| p.mean_speed).collect(),
            heading,
            params,
        }
    }

    /// Advance one slot of `dt` seconds. Speed follows
    /// `v' = a v + (1 - a) v_mean + sqrt(1 - a^2) sigma xi`; the heading uses
    /// the same recursion with its own previous value as the mean. Speeds are
    /// clamped to `[0, max_speed]`; UEs reflect off the area boundary.
    pub fn step<R: Rng + ?Sized>(
        &mut self,
        dt: f64,
        max_speed: f64,
        heading_sigma: f64,
        extent_m: f64,
        rng: &mut R,
    ) {
        for (i, p) in self.params.iter().enumerate() {
            let a = p.randomness;
            let innovation = (1.0 - a * a).sqrt();
            let xi_v: f64 = rng.sample(StandardNormal);
            let xi_h: f64 = rng.sample(StandardNormal);
            let v = a * self.speed[i]
                + (1.0 - a) * p.mean_speed
                + innovation * p.speed_variance.sqrt() * xi_v;
            self.speed[i] = v.clamp(0.0, max_speed);
            self.heading[i] += innovation * heading_sigma * xi_h;

            let (mut x, mut y) = self.position[i];
            x += self.speed[i] * dt * self.heading[i].cos();
            y += self.speed[i] * dt * self.heading[i].sin();
            if x < 0.0 {
                x = -x;
                self.heading[i] = std::f64::consts::PI - self.heading[i];
            } else if x > extent_m {
                x = 2.0 * extent_m - x;
                self.heading[i] = std::f64::consts::PI - self.heading[i];
            }
            if y < 0.0 {
                y = -y;
                self.heading[i] = -self.heading[i];
            } else if y > extent_m {
                y = 2.0 * extent_m - y;
                self.heading[i] = -self.heading[i];
            }
            self.position[i] = (x.clamp(0.0, extent_m), y.clamp(0.0, extent_m));
        }
    }
}

/// Received power in dBm from a station at distance `d` (no shadowing).
pub fn received_power_dbm(tx_power_w: f64, distance_m: f64, channel: &ChannelConfig) -> f64 {
    let tx_dbm = 10.0 * (tx_power_w * 1e3).log10();
    let d = distance_m.max(channel.min_distance_m);
    tx_dbm - channel.reference_loss_db - 10.0 * channel.pathloss_exponent * d.log10()
}

/// SINR (dB, unclipped) of one UE towards every station, given received
/// powers in dBm. Only co-channel stations interfere.
pub fn sinr_from_received(rx_dbm: &[f64], bs: &[BsConfig], channel: &ChannelConfig) -> Vec<f64> {
    let rx_mw: Vec<f64> = rx_dbm.iter().map(|p| 10f64.powf(p / 10.0)).collect();
    bs.iter()
        .enumerate()
        .map(|(j, station)| {
            let interference: f64 = bs
                .iter()
                .enumerate()
                .filter(|(k, other)| *k != j && other.freq_group == station.freq_group)
                .map(|(k, _)| rx_mw[k])
                .sum();
            let noise_dbm = channel.noise_psd_dbm_hz
                + 10.0 * station.bandwidth_hz.log10()
                + channel.noise_figure_db;
            let noise = 10f64.powf(noise_dbm / 10.0);
            10.0 * (rx_mw[j] / (interference + noise)).log10()
        })
        .collect()
}

/// UEs move under Gauss-Markov mobility; SINR comes from log-distance
/// pathloss with distance-correlated shadowing and co-channel interference,
/// clipped to the configured range.
pub fn gen_mobility<R: Rng + ?Sized>(cfg: &ScenarioConfig, rng: &mut R) -> ScenarioTrace {
    let (bs, ue) = metadata(cfg, true);
    let ch = &cfg.channel;
    let params: Vec<GaussMarkov> = ue.iter().map(|u| u.mobility.expect("mobile UE")).collect();
    let mut state = MobilityState::new(params, ch.extent_m, rng);
    let dt = cfg.slot_length_ms / 1e3;
    let max_speed = cfg.mobility.mean_speed_range.1.max(1.0);
    let (ues, bss) = (cfg.ues, cfg.bss);

    let mut shadow: Vec<f64> = (0..ues * bss)
        .map(|_| ch.shadowing_db * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let mut sinr_db = Vec::with_capacity(ues * bss * cfg.horizon);
    let mut rx = vec![0.0; bss];
    for t in 0..cfg.horizon {
        let before = state.position.clone();
        if t > 0 {
            state.step(dt, max_speed, cfg.mobility.heading_sigma_rad, ch.extent_m, rng);
        }
        for i in 0..ues {
            let (x, y) = state.position[i];
            let moved = distance(before[i], (x, y));
            let rho = (-moved / ch.shadowing_decorrelation_m).exp();
            let fresh = (1.0 - rho * rho).sqrt();
            for (j, station) in bs.iter().enumerate() {
                let s = &mut shadow[i * bss + j];
                if t > 0 {
                    *s = rho * *s + fresh * ch.shadowing_db * rng.sample::<f64, _>(StandardNormal);
                }
                let loc = station.location.expect("synthetic stations are placed");
                rx[j] = received_power_dbm(station.tx_power_w, distance(loc, (x, y)), ch) - *s;
            }
            sinr_db.extend(
                sinr_from_received(&rx, &bs, ch)
                    .into_iter()
                    .map(|s| s.clamp(ch.clip_db.0, ch.clip_db.1)),
            );
        }
    }
    ScenarioTrace {
        ues,
        bss,
        horizon: cfg.horizon,
        sinr_db,
        bs,
        ue,
    }
}

fn distance(a: (f64, f64), b: (f64, f64)) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}

/// Handover delay statistics for one (UE type, target RAT) pair, in ms.
/// Samples are triangular with mode `mean_ms` on `[lo_ms, hi_ms]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DelayEntry {
    pub ue_type: UeType,
    pub rat: Rat,
    pub mean_ms: f64,
    pub lo_ms: f64,
    pub hi_ms: f64,
}

impl DelayEntry {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.lo_ms == self.hi_ms {
            return self.lo_ms;
        }
        Triangular::new(self.lo_ms, self.hi_ms, self.mean_ms)
            .expect("validated entry")
            .sample(rng)
    }

    /// Expected value of the triangular distribution.
    pub fn expected_ms(&self) -> f64 {
        (self.lo_ms + self.hi_ms + self.mean_ms) / 3.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DelayTable {
    entries: BTreeMap<(UeType, Rat), DelayEntry>,
}

impl DelayTable {
    pub fn new(entries: impl IntoIterator<Item = DelayEntry>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for e in entries {
            if !(e.mean_ms > 0.0 && e.lo_ms >= 0.0 && e.lo_ms <= e.mean_ms && e.mean_ms <= e.hi_ms) {
                return Err(Error::InvalidParameter(format!(
                    "delay entry {}/{}: need 0 <= lo <= mean <= hi and mean > 0, got ({}, {}, {})",
                    e.ue_type, e.rat, e.lo_ms, e.mean_ms, e.hi_ms
                )));
            }
            map.insert((e.ue_type, e.rat), e);
        }
        Ok(DelayTable { entries: map })
    }

    /// Built-in table. Intra 4G/5G-NSA handovers sit around 50 ms, with
    /// device-specific spreads for smartphones, modems and IoT; handovers to
    /// 3G take 400-950 ms and to 2G 750-1100 ms.
    pub fn measured_default() -> Self {
        let mut entries = Vec::new();
        for ue_type in UeType::ALL {
            let (mean, lo, hi) = match ue_type {
                UeType::Smartphone => (56.0, 50.0, 62.0),
                UeType::Modem => (75.0, 50.0, 110.0),
                UeType::Iot => (73.0, 50.0, 110.0),
                _ => (50.0, 40.0, 80.0),
            };
            entries.push(DelayEntry { ue_type, rat: Rat::G4Nsa, mean_ms: mean, lo_ms: lo, hi_ms: hi });
            entries.push(DelayEntry { ue_type, rat: Rat::G3, mean_ms: 675.0, lo_ms: 400.0, hi_ms: 950.0 });
            entries.push(DelayEntry { ue_type, rat: Rat::G2, mean_ms: 925.0, lo_ms: 750.0, hi_ms: 1100.0 });
        }
        DelayTable::new(entries).expect("built-in table is valid")
    }

    pub fn get(&self, ue_type: UeType, rat: Rat) -> Option<&DelayEntry> {
        self.entries.get(&(ue_type, rat))
    }

    pub fn entries(&self) -> impl Iterator<Item = &DelayEntry> {
        self.entries.values()
    }

    /// Reads `ue_type,rat,mean_ms,lo_ms,hi_ms`.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let mut reader = open_csv(path, &["ue_type", "rat", "mean_ms", "lo_ms", "hi_ms"])?;
        let mut entries = Vec::new();
        for record in reader.records() {
            let (record, line) = record_with_line(path, record)?;
            let entry = DelayEntry {
                ue_type: parse_field(path, line, &record, 0, "ue_type")?,
                rat: parse_field(path, line, &record, 1, "rat")?,
                mean_ms: parse_field(path, line, &record, 2, "mean_ms")?,
                lo_ms: parse_field(path, line, &record, 3, "lo_ms")?,
                hi_ms: parse_field(path, line, &record, 4, "hi_ms")?,
            };
            entries.push(entry);
        }
        DelayTable::new(entries).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = create(path)?;
        let mut body = String::from("ue_type,rat,mean_ms,lo_ms,hi_ms\n");
        for e in self.entries() {
            body.push_str(&format!("{},{},{},{},{}\n", e.ue_type, e.rat, e.mean_ms, e.lo_ms, e.hi_ms));
        }
        out.write_all(body.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// Draw the delay matrix `A` (or the per-slot `A_t`) for a trace.
pub fn build_delay_model<R: Rng + ?Sized>(
    cfg: &ScenarioConfig,
    table: Option<&DelayTable>,
    trace: &ScenarioTrace,
    rng: &mut R,
) -> Result<DelayModel> {
    let (ues, bss) = (trace.ues, trace.bss);
    let builtin;
    let sampler: Box<dyn Fn(&mut R, usize, usize) -> f64> = match cfg.delay.model {
        DelayKind::UniformUnit => Box::new(|rng: &mut R, _, _| rng.random_range(0.0..=1.0)),
        DelayKind::MeasuredTable => {
            let table = match table {
                Some(t) => t,
                None => {
                    builtin = DelayTable::measured_default();
                    &builtin
                }
            };
            let mut per_pair = Vec::with_capacity(ues * bss);
            for u in &trace.ue {
                for b in &trace.bs {
                    let entry = table.get(u.ue_type, b.rat).copied().ok_or_else(|| {
                        Error::config(
                            "scenario.delay.table",
                            format!("no delay entry for UE type {} and RAT {}", u.ue_type, b.rat),
                        )
                    })?;
                    per_pair.push(entry);
                }
            }
            let slot = cfg.slot_length_ms;
            Box::new(move |rng: &mut R, i, j| {
                (per_pair[i * bss + j].sample(rng) / slot).clamp(0.0, 1.0)
            })
        }
    };
    let mut draw = || {
        let mut a = Vec::with_capacity(ues * bss);
        for i in 0..ues {
            for j in 0..bss {
                a.push(sampler(rng, i, j));
            }
        }
        a
    };
    if cfg.delay.time_varying {
        let mut a = Vec::with_capacity(ues * bss * trace.horizon);
        for _ in 0..trace.horizon {
            a.extend(draw());
        }
        DelayModel::new_per_slot(ues, bss, cfg.gamma, a, 1.0)
    } else {
        let a = draw();
        DelayModel::new_static(ues, bss, cfg.gamma, a)
    }
}

/// What ingestion had to repair.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub observations: usize,
    pub imputed_cells: usize,
    pub duplicate_rows: usize,
}

fn open_csv(path: &Path, header: &[&str]) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(file);
    let found = reader
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(str::to_owned)
        .collect::<Vec<_>>();
    if found != header {
        return Err(Error::Schema(format!(
            "{}: expected header `{}`, found `{}`",
            path.display(),
            header.join(","),
            found.join(",")
        )));
    }
    Ok(reader)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: e.to_string(),
    }
}

fn record_with_line(
    path: &Path,
    record: std::result::Result<csv::StringRecord, csv::Error>,
) -> Result<(csv::StringRecord, u64)> {
    let record = record.map_err(|e| csv_error(path, e))?;
    let line = record.position().map(|p| p.line()).unwrap_or(0);
    Ok((record, line))
}

fn parse_field<T: std::str::FromStr>(
    path: &Path,
    line: u64,
    record: &csv::StringRecord,
    idx: usize,
    name: &str,
) -> Result<T> {
    let raw = record.get(idx).unwrap_or("");
    raw.parse().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line,
        message: format!("invalid {name} `{raw}`"),
    })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// Read station metadata `bs_id,bandwidth_hz,tx_power_w,rat,freq_group,x_m,y_m`.
pub fn read_bs_metadata(path: &Path) -> Result<Vec<BsConfig>> {
    let header = ["bs_id", "bandwidth_hz", "tx_power_w", "rat", "freq_group", "x_m", "y_m"];
    let mut reader = open_csv(path, &header)?;
    let mut stations = Vec::new();
    for record in reader.records() {
        let (record, line) = record_with_line(path, record)?;
        let location = match (record.get(5), record.get(6)) {
            (Some(x), Some(y)) if !x.is_empty() && !y.is_empty() => Some((
                parse_field(path, line, &record, 5, "x_m")?,
                parse_field(path, line, &record, 6, "y_m")?,
            )),
            _ => None,
        };
        let bs = BsConfig {
            id: parse_field(path, line, &record, 0, "bs_id")?,
            bandwidth_hz: parse_field(path, line, &record, 1, "bandwidth_hz")?,
            tx_power_w: parse_field(path, line, &record, 2, "tx_power_w")?,
            rat: parse_field(path, line, &record, 3, "rat")?,
            freq_group: parse_field(path, line, &record, 4, "freq_group")?,
            location,
        };
        bs.validate().map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line,
            message: e.to_string(),
        })?;
        stations.push(bs);
    }
    stations.sort_by_key(|b| b.id);
    if stations.iter().enumerate().any(|(k, b)| b.id != k) {
        return Err(Error::Schema(format!(
            "{}: BS ids must be exactly 0..{}",
            path.display(),
            stations.len()
        )));
    }
    Ok(stations)
}

/// Read `ue_id,ue_type`.
pub fn read_ue_metadata(path: &Path) -> Result<Vec<UeConfig>> {
    let mut reader = open_csv(path, &["ue_id", "ue_type"])?;
    let mut ues = Vec::new();
    for record in reader.records() {
        let (record, line) = record_with_line(path, record)?;
        ues.push(UeConfig {
            id: parse_field(path, line, &record, 0, "ue_id")?,
            ue_type: parse_field(path, line, &record, 1, "ue_type")?,
            mobility: None,
        });
    }
    ues.sort_by_key(|u| u.id);
    if ues.iter().enumerate().any(|(k, u)| u.id != k) {
        return Err(Error::Schema(format!(
            "{}: UE ids must be exactly 0..{}",
            path.display(),
            ues.len()
        )));
    }
    Ok(ues)
}

/// Load a recorded trace into a dense `T x I x J` tensor.
///
/// Missing observations hold the pair's last observed value; pairs not yet
/// observed sit at [`SINR_FLOOR_DB`]. Duplicate `(slot, ue, bs)` rows keep
/// the last value read.
pub fn ingest_trace(paths: &TracePaths) -> Result<(ScenarioTrace, IngestReport)> {
    let bs = read_bs_metadata(&paths.bs)?;
    let bss = bs.len();
    if bss == 0 {
        return Err(Error::Schema(format!("{}: no base stations", paths.bs.display())));
    }
    let known_ues = match &paths.ue {
        Some(p) => Some(read_ue_metadata(p)?),
        None => None,
    };

    let path = &paths.sinr;
    let mut reader = open_csv(path, &["slot", "ue_id", "bs_id", "sinr_db"])?;
    let mut rows: Vec<(usize, usize, usize, f64)> = Vec::new();
    for record in reader.records() {
        let (record, line) = record_with_line(path, record)?;
        let slot: usize = parse_field(path, line, &record, 0, "slot")?;
        let ue: usize = parse_field(path, line, &record, 1, "ue_id")?;
        let bs_id: usize = parse_field(path, line, &record, 2, "bs_id")?;
        let sinr: f64 = parse_field(path, line, &record, 3, "sinr_db")?;
        if !sinr.is_finite() {
            return Err(Error::Parse {
                path: path.clone(),
                line,
                message: format!("non-finite sinr_db `{sinr}`"),
            });
        }
        if bs_id >= bss {
            return Err(Error::Parse {
                path: path.clone(),
                line,
                message: format!("bs_id {bs_id} not in station metadata (J = {bss})"),
            });
        }
        if let Some(ues) = &known_ues {
            if ue >= ues.len() {
                return Err(Error::Parse {
                    path: path.clone(),
                    line,
                    message: format!("ue_id {ue} not in UE metadata (I = {})", ues.len()),
                });
            }
        }
        rows.push((slot, ue, bs_id, sinr));
    }
    if rows.is_empty() {
        return Err(Error::Schema(format!("{}: no observations", path.display())));
    }

    let horizon = rows.iter().map(|r| r.0).max().unwrap() + 1;
    let ue = match known_ues {
        Some(u) => u,
        None => {
            let count = rows.iter().map(|r| r.1).max().unwrap() + 1;
            (0..count)
                .map(|id| UeConfig {
                    id,
                    ue_type: UeType::Smartphone,
                    mobility: None,
                })
                .collect()
        }
    };
    let ues = ue.len();

    let mut observed: Vec<Option<f64>> = vec![None; horizon * ues * bss];
    let mut report = IngestReport {
        observations: rows.len(),
        ..Default::default()
    };
    for (slot, i, j, v) in rows {
        let cell = &mut observed[(slot * ues + i) * bss + j];
        if cell.is_some() {
            report.duplicate_rows += 1;
        }
        *cell = Some(v);
    }

    let mut sinr_db = vec![0.0; horizon * ues * bss];
    for pair in 0..ues * bss {
        let mut last = None;
        for t in 0..horizon {
            let idx = t * ues * bss + pair;
            sinr_db[idx] = match observed[idx] {
                Some(v) => {
                    last = Some(v);
                    v
                }
                None => {
                    report.imputed_cells += 1;
                    last.unwrap_or(SINR_FLOOR_DB)
                }
            };
        }
    }

    let trace = ScenarioTrace {
        ues,
        bss,
        horizon,
        sinr_db,
        bs,
        ue,
    };
    trace.validate()?;
    Ok((trace, report))
}

/// Write a trace as `sinr.csv`, `bs.csv` and `ue.csv` in `dir`; the inverse
/// of [`ingest_trace`].
pub fn export_trace(trace: &ScenarioTrace, dir: &Path) -> Result<TracePaths> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let paths = TracePaths {
        sinr: dir.join("sinr.csv"),
        bs: dir.join("bs.csv"),
        ue: Some(dir.join("ue.csv")),
    };

    let mut out = create(&paths.sinr)?;
    let io = |e| Error::io(&paths.sinr, e);
    writeln!(out, "slot,ue_id,bs_id,sinr_db").map_err(io)?;
    for t in 0..trace.horizon {
        for i in 0..trace.ues {
            for j in 0..trace.bss {
                writeln!(out, "{t},{i},{j},{}", trace.sinr(t, i, j)).map_err(io)?;
            }
        }
    }
    out.flush().map_err(io)?;

    let mut out = create(&paths.bs)?;
    let io = |e| Error::io(&paths.bs, e);
    writeln!(out, "bs_id,bandwidth_hz,tx_power_w,rat,freq_group,x_m,y_m").map_err(io)?;
    for b in &trace.bs {
        let (x, y) = match b.location {
            Some((x, y)) => (x.to_string(), y.to_string()),
            None => (String::new(), String::new()),
        };
        writeln!(
            out,
            "{},{},{},{},{},{x},{y}",
            b.id, b.bandwidth_hz, b.tx_power_w, b.rat, b.freq_group
        )
        .map_err(io)?;
    }
    out.flush().map_err(io)?;

    let ue_path = paths.ue.clone().unwrap();
    let mut out = create(&ue_path)?;
    let io = |e| Error::io(&ue_path, e);
    writeln!(out, "ue_id,ue_type").map_err(io)?;
    for u in &trace.ue {
        writeln!(out, "{},{}", u.id, u.ue_type).map_err(io)?;
    }
    out.flush().map_err(io)?;
    Ok(paths)
}
