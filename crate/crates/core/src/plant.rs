//! Surrogate plant: seeded synthetic sensor trajectories for a rotary-kiln
//! style process, with injectable incipient/abrupt faults and the sliding
//! temporal-window protocol used to cut trajectories into labeled samples.
//!
//! Each channel is a first-order autoregressive process around its nominal
//! mean (coefficient 0.9, innovations drawn per channel from the scenario
//! seed) plus an additive fault deviation. Fault signatures — which channels
//! a fault pushes and in which direction — live in a configurable catalog;
//! the shipped default gives every fault class a distinct signature.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Result, TnfsError};
use crate::seed::stage_seed;

/// AR(1) coefficient shared by every simulated channel.
pub const AR_COEFF: f64 = 0.9;

/// One sensor channel of the plant.
#[derive(Clone, Debug, PartialEq)]
pub struct SensorSpec {
    pub name: String,
    pub unit: String,
    pub nominal_mean: f64,
    /// Characteristic variability; fault magnitudes are expressed as
    /// multiples of this.
    pub nominal_std: f64,
    /// Innovation standard deviation of the AR(1) noise.
    pub noise_std: f64,
}

impl SensorSpec {
    pub fn new(name: &str, unit: &str, nominal_mean: f64, nominal_std: f64, noise_std: f64) -> Self {
        SensorSpec {
            name: name.to_string(),
            unit: unit.to_string(),
            nominal_mean,
            nominal_std,
            noise_std,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || self.name.contains([',', ' ', '\n']) {
            return Err(TnfsError::invalid(format!(
                "sensor name {:?} must be a non-empty identifier",
                self.name
            )));
        }
        if !self.nominal_mean.is_finite()
            || !self.nominal_std.is_finite()
            || !self.noise_std.is_finite()
            || self.nominal_std < 0.0
            || self.noise_std < 0.0
        {
            return Err(TnfsError::invalid(format!(
                "sensor {}: stds must be finite and non-negative",
                self.name
            )));
        }
        Ok(())
    }
}

/// Fault identity: the normal state, a process fault F1..F11, or a sensor
/// fault S1..S3.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FaultId {
    Normal,
    Process(u8),
    Sensor(u8),
}

impl fmt::Display for FaultId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FaultId::Normal => write!(f, "NORMAL"),
            FaultId::Process(k) => write!(f, "F{k}"),
            FaultId::Sensor(k) => write!(f, "S{k}"),
        }
    }
}

impl FromStr for FaultId {
    type Err = TnfsError;
    fn from_str(s: &str) -> Result<Self> {
        if s == "NORMAL" {
            return Ok(FaultId::Normal);
        }
        let bad = || TnfsError::invalid(format!("unknown fault id {s:?}"));
        let (head, num) = s.split_at(1);
        let k: u8 = num.parse().map_err(|_| bad())?;
        match head {
            "F" if (1..=11).contains(&k) => Ok(FaultId::Process(k)),
            "S" if (1..=3).contains(&k) => Ok(FaultId::Sensor(k)),
            _ => Err(bad()),
        }
    }
}

/// Temporal shape of a fault: a gradually growing ramp or a sudden step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FaultMode {
    Incipient,
    Abrupt,
}

impl fmt::Display for FaultMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FaultMode::Incipient => write!(f, "incipient"),
            FaultMode::Abrupt => write!(f, "abrupt"),
        }
    }
}

impl FromStr for FaultMode {
    type Err = TnfsError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "incipient" => Ok(FaultMode::Incipient),
            "abrupt" => Ok(FaultMode::Abrupt),
            _ => Err(TnfsError::invalid(format!("unknown fault mode {s:?}"))),
        }
    }
}

/// One channel a fault pushes, with the push direction.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelEffect {
    pub channel: String,
    pub sign: f64,
}

impl ChannelEffect {
    pub fn new(channel: &str, sign: f64) -> Self {
        ChannelEffect {
            channel: channel.to_string(),
            sign,
        }
    }
}

/// A concrete fault instance injected into one scenario.
#[derive(Clone, Debug, PartialEq)]
pub struct FaultSpec {
    pub fault_id: FaultId,
    pub mode: FaultMode,
    pub onset_minute: f64,
    /// Deviation size as a fraction of each affected channel's nominal std.
    pub magnitude: f64,
    pub affected_channels: Vec<ChannelEffect>,
}

impl FaultSpec {
    pub fn normal() -> Self {
        FaultSpec {
            fault_id: FaultId::Normal,
            mode: FaultMode::Abrupt,
            onset_minute: 0.0,
            magnitude: 0.0,
            affected_channels: Vec::new(),
        }
    }

    pub fn is_normal(&self) -> bool {
        self.fault_id == FaultId::Normal
    }

    pub fn validate(&self, duration_minutes: f64) -> Result<()> {
        if self.is_normal() {
            if !self.affected_channels.is_empty() {
                return Err(TnfsError::invalid("NORMAL must not list affected channels"));
            }
            return Ok(());
        }
        if self.affected_channels.is_empty() {
            return Err(TnfsError::invalid(format!(
                "fault {} lists no affected channels",
                self.fault_id
            )));
        }
        if !(0.0..=duration_minutes).contains(&self.onset_minute) {
            return Err(TnfsError::invalid(format!(
                "fault onset {} outside scenario duration {duration_minutes}",
                self.onset_minute
            )));
        }
        if !self.magnitude.is_finite() {
            return Err(TnfsError::invalid("fault magnitude must be finite"));
        }
        Ok(())
    }

    /// Additive deviation this fault contributes to `channel` at time `t`.
    ///
    /// Zero before onset. Abrupt mode steps to `sign * magnitude *
    /// nominal_std` at onset; incipient mode ramps linearly from zero at
    /// onset to that value at the scenario end.
    pub fn deviation_at(
        &self,
        channel: &str,
        nominal_std: f64,
        t: f64,
        duration_minutes: f64,
    ) -> f64 {
        if self.is_normal() || t < self.onset_minute {
            return 0.0;
        }
        let Some(effect) = self.affected_channels.iter().find(|e| e.channel == channel) else {
            return 0.0;
        };
        let full = effect.sign * self.magnitude * nominal_std;
        match self.mode {
            FaultMode::Abrupt => full,
            FaultMode::Incipient => {
                let span = duration_minutes - self.onset_minute;
                if span <= 0.0 {
                    full
                } else {
                    full * (t - self.onset_minute) / span
                }
            }
        }
    }
}

/// Catalog entry: which channels a fault pushes and which temporal modes it
/// supports.
#[derive(Clone, Debug, PartialEq)]
pub struct CatalogEntry {
    pub id: FaultId,
    pub incipient: bool,
    pub abrupt: bool,
    pub default_magnitude: f64,
    pub effects: Vec<ChannelEffect>,
}

/// The configurable fault catalog. Order defines the class indices after
/// the leading NORMAL class.
#[derive(Clone, Debug, PartialEq)]
pub struct FaultCatalog {
    pub entries: Vec<CatalogEntry>,
}

impl FaultCatalog {
    pub fn entry(&self, id: FaultId) -> Option<&CatalogEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    /// Builds the concrete fault for one scenario from a catalog entry.
    pub fn fault(
        &self,
        id: FaultId,
        mode: FaultMode,
        onset_minute: f64,
        magnitude: Option<f64>,
    ) -> Result<FaultSpec> {
        if id == FaultId::Normal {
            return Ok(FaultSpec::normal());
        }
        let entry = self
            .entry(id)
            .ok_or_else(|| TnfsError::invalid(format!("fault {id} not in catalog")))?;
        let supported = match mode {
            FaultMode::Incipient => entry.incipient,
            FaultMode::Abrupt => entry.abrupt,
        };
        if !supported {
            return Err(TnfsError::invalid(format!(
                "fault {id} does not support {mode} mode"
            )));
        }
        Ok(FaultSpec {
            fault_id: id,
            mode,
            onset_minute,
            magnitude: magnitude.unwrap_or(entry.default_magnitude),
            affected_channels: entry.effects.clone(),
        })
    }

    pub fn validate(&self, plant: &[SensorSpec]) -> Result<()> {
        for entry in &self.entries {
            if entry.id == FaultId::Normal {
                return Err(TnfsError::invalid("NORMAL does not belong in the catalog"));
            }
            if entry.effects.is_empty() {
                return Err(TnfsError::invalid(format!(
                    "catalog entry {} lists no channels",
                    entry.id
                )));
            }
            for effect in &entry.effects {
                if !plant.iter().any(|s| s.name == effect.channel) {
                    return Err(TnfsError::invalid(format!(
                        "catalog entry {} references unknown channel {}",
                        entry.id, effect.channel
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Default 11-channel plant.
pub fn default_plant() -> Vec<SensorSpec> {
    vec![
        SensorSpec::new("CO", "ppm", 400.0, 30.0, 12.0),
        SensorSpec::new("Temp", "degC", 1450.0, 40.0, 16.0),
        SensorSpec::new("O2", "pct", 3.5, 0.4, 0.16),
        SensorSpec::new("RPM", "rpm", 3.2, 0.25, 0.1),
        SensorSpec::new("Press", "mbar", 210.0, 15.0, 6.0),
        SensorSpec::new("DeltaBurner", "pct", 0.0, 1.0, 0.4),
        SensorSpec::new("DeltaAir", "pct", 0.0, 1.2, 0.48),
        SensorSpec::new("DeltaIDFan", "pct", 0.0, 0.9, 0.36),
        SensorSpec::new("BackEndTemp", "degC", 820.0, 25.0, 10.0),
        SensorSpec::new("MotorCurrent", "A", 85.0, 6.0, 2.4),
        SensorSpec::new("GasFlow", "m3ps", 52.0, 4.0, 1.6),
    ]
}

/// Default catalog: 11 process faults with distinct multi-channel
/// signatures and 3 single-channel sensor-bias faults.
pub fn default_catalog() -> FaultCatalog {
    let entry = |id: FaultId, incipient: bool, abrupt: bool, effects: Vec<ChannelEffect>| {
        CatalogEntry {
            id,
            incipient,
            abrupt,
            default_magnitude: 5.0,
            effects,
        }
    };
    let e = ChannelEffect::new;
    FaultCatalog {
        entries: vec![
            entry(FaultId::Process(1), true, true, vec![e("Temp", -1.0), e("Press", 1.0)]),
            entry(FaultId::Process(2), true, true, vec![e("CO", 1.0), e("O2", -1.0)]),
            entry(FaultId::Process(3), true, true, vec![e("RPM", -1.0), e("MotorCurrent", 1.0)]),
            entry(FaultId::Process(4), true, true, vec![e("GasFlow", -1.0), e("CO", 1.0)]),
            entry(FaultId::Process(5), true, false, vec![e("Press", 1.0), e("DeltaIDFan", -1.0)]),
            entry(FaultId::Process(6), true, true, vec![e("O2", 1.0), e("Temp", -1.0)]),
            entry(FaultId::Process(7), true, true, vec![e("BackEndTemp", 1.0), e("Temp", 1.0)]),
            entry(FaultId::Process(8), true, false, vec![e("BackEndTemp", -1.0), e("GasFlow", 1.0)]),
            entry(FaultId::Process(9), true, true, vec![e("CO", 1.0), e("Temp", 1.0)]),
            entry(FaultId::Process(10), true, true, vec![e("RPM", -1.0), e("DeltaIDFan", 1.0)]),
            entry(FaultId::Process(11), true, true, vec![e("MotorCurrent", -1.0), e("DeltaAir", -1.0)]),
            entry(FaultId::Sensor(1), true, true, vec![e("CO", -1.0)]),
            entry(FaultId::Sensor(2), true, true, vec![e("Temp", -1.0)]),
            entry(FaultId::Sensor(3), true, true, vec![e("RPM", -1.0)]),
        ],
    }
}

/// One simulation run: geometry, the fault to inject, and the noise seed.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub duration_minutes: f64,
    pub step_minutes: f64,
    pub fault: FaultSpec,
    pub seed: u64,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if !(self.duration_minutes > 0.0) || !(self.step_minutes > 0.0) {
            return Err(TnfsError::invalid("duration and step must be positive"));
        }
        if !is_multiple(self.duration_minutes, self.step_minutes) {
            return Err(TnfsError::invalid(format!(
                "duration {} not divisible by step {}",
                self.duration_minutes, self.step_minutes
            )));
        }
        self.fault.validate(self.duration_minutes)
    }
}

pub(crate) fn is_multiple(value: f64, step: f64) -> bool {
    let ratio = value / step;
    (ratio - ratio.round()).abs() < 1e-9 * ratio.abs().max(1.0)
}

/// Time-stamped multichannel record with its fault label.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub timestamps: Vec<f64>,
    pub channel_names: Vec<String>,
    /// One value sequence per channel, all the length of `timestamps`.
    pub channels: Vec<Vec<f64>>,
    pub fault: FaultSpec,
}

impl Trajectory {
    pub fn duration_minutes(&self) -> f64 {
        *self.timestamps.last().unwrap_or(&0.0)
    }

    pub fn step_minutes(&self) -> Result<f64> {
        if self.timestamps.len() < 2 {
            return Err(TnfsError::invalid("trajectory needs at least two samples"));
        }
        let step = self.timestamps[1] - self.timestamps[0];
        for w in self.timestamps.windows(2) {
            if ((w[1] - w[0]) - step).abs() > 1e-9 * step.max(1.0) {
                return Err(TnfsError::invalid("non-uniform trajectory time grid"));
            }
        }
        Ok(step)
    }

    pub fn channel_index(&self, name: &str) -> Option<usize> {
        self.channel_names.iter().position(|n| n == name)
    }
}

/// Simulates one scenario over the whole plant: timestamps `0, step, ...,
/// duration`, one AR(1) sequence per channel plus the fault deviation.
/// Deterministic per seed; channel streams are independent.
pub fn simulate_scenario(plant: &[SensorSpec], scenario: &Scenario) -> Result<Trajectory> {
    if plant.is_empty() {
        return Err(TnfsError::invalid("plant has no sensors"));
    }
    for sensor in plant {
        sensor.validate()?;
    }
    scenario.validate()?;
    for effect in &scenario.fault.affected_channels {
        if !plant.iter().any(|s| s.name == effect.channel) {
            return Err(TnfsError::invalid(format!(
                "fault references unknown channel {}",
                effect.channel
            )));
        }
    }

    let steps = (scenario.duration_minutes / scenario.step_minutes).round() as usize;
    let timestamps: Vec<f64> = (0..=steps)
        .map(|i| i as f64 * scenario.step_minutes)
        .collect();

    let mut channels = Vec::with_capacity(plant.len());
    for (ch, sensor) in plant.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(stage_seed(scenario.seed, "channel", ch as u64));
        let mut values = Vec::with_capacity(timestamps.len());
        let mut ar = 0.0;
        for (i, &t) in timestamps.iter().enumerate() {
            let innovation = if sensor.noise_std > 0.0 {
                Normal::new(0.0, sensor.noise_std).unwrap().sample(&mut rng)
            } else {
                0.0
            };
            ar = if i == 0 { innovation } else { AR_COEFF * ar + innovation };
            let dev = scenario.fault.deviation_at(
                &sensor.name,
                sensor.nominal_std,
                t,
                scenario.duration_minutes,
            );
            values.push(sensor.nominal_mean + ar + dev);
        }
        channels.push(values);
    }

    Ok(Trajectory {
        timestamps,
        channel_names: plant.iter().map(|s| s.name.clone()).collect(),
        channels,
        fault: scenario.fault.clone(),
    })
}

/// How a window's time span relates to the fault onset for labeling.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum OnsetRule {
    /// Any overlap of the window span `[start, start + window]` with
    /// `[onset, end]` marks the window with the fault class; touching at a
    /// single point counts.
    #[default]
    Overlap,
    /// Only windows that start at or after onset carry the fault class.
    Containment,
}

/// Ordered class list: NORMAL first, then the catalog entries.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassTable {
    pub ids: Vec<FaultId>,
}

impl ClassTable {
    pub fn from_catalog(catalog: &FaultCatalog) -> Self {
        let mut ids = vec![FaultId::Normal];
        ids.extend(catalog.entries.iter().map(|e| e.id));
        ClassTable { ids }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn normal_index(&self) -> usize {
        self.index_of(FaultId::Normal).unwrap_or(0)
    }

    pub fn index_of(&self, id: FaultId) -> Option<usize> {
        self.ids.iter().position(|&i| i == id)
    }

    pub fn names(&self) -> Vec<String> {
        self.ids.iter().map(|id| id.to_string()).collect()
    }
}

/// One windowed observation: the flattened channel-major feature block, its
/// fault-class label, and where the window starts.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowedSample {
    /// Channel-major layout: all points of channel 0, then channel 1, ...
    pub features: Vec<f64>,
    pub label: usize,
    pub window_start_minute: f64,
}

/// Number of windows of length `window` advancing by `stride` inside
/// `duration`.
pub fn window_count(duration: f64, window: f64, stride: f64) -> usize {
    (((duration - window) / stride) * (1.0 + 1e-12) + 1e-9).floor() as usize + 1
}

/// Cuts a trajectory into windowed samples.
///
/// Windows start at `0, stride, 2 stride, ...` while `start + window <=
/// duration`; each holds `window / step` successive sample points per
/// channel (the point at `start + window` belongs to the next window). A
/// window is labeled with the trajectory's fault class when its span meets
/// the fault interval under `onset_rule`, else NORMAL.
pub fn window_samples(
    trajectory: &Trajectory,
    window_minutes: f64,
    stride_minutes: f64,
    onset_rule: OnsetRule,
    classes: &ClassTable,
) -> Result<Vec<WindowedSample>> {
    let duration = trajectory.duration_minutes();
    let step = trajectory.step_minutes()?;
    if !(stride_minutes > 0.0) {
        return Err(TnfsError::invalid("stride must be positive"));
    }
    if window_minutes > duration {
        return Err(TnfsError::invalid(format!(
            "window {window_minutes} exceeds duration {duration}"
        )));
    }
    if !is_multiple(window_minutes, step) || !is_multiple(stride_minutes, step) {
        return Err(TnfsError::invalid(
            "window and stride must be multiples of the sampling step",
        ));
    }
    let points_per_window = (window_minutes / step).round() as usize;
    if points_per_window == 0 {
        return Err(TnfsError::invalid("window shorter than one sampling step"));
    }

    let fault_class = classes.index_of(trajectory.fault.fault_id).ok_or_else(|| {
        TnfsError::invalid(format!(
            "fault {} not in class table",
            trajectory.fault.fault_id
        ))
    })?;
    let normal_class = classes.normal_index();

    let count = window_count(duration, window_minutes, stride_minutes);
    let mut samples = Vec::with_capacity(count);
    for w in 0..count {
        let start = w as f64 * stride_minutes;
        let start_idx = (start / step).round() as usize;
        let mut features =
            Vec::with_capacity(trajectory.channels.len() * points_per_window);
        for channel in &trajectory.channels {
            features.extend_from_slice(&channel[start_idx..start_idx + points_per_window]);
        }
        let label = if trajectory.fault.is_normal() {
            normal_class
        } else {
            let exposed = match onset_rule {
                OnsetRule::Overlap => {
                    start + window_minutes >= trajectory.fault.onset_minute - 1e-9
                }
                OnsetRule::Containment => start >= trajectory.fault.onset_minute - 1e-9,
            };
            if exposed {
                fault_class
            } else {
                normal_class
            }
        };
        samples.push(WindowedSample {
            features,
            label,
            window_start_minute: start,
        });
    }
    Ok(samples)
}
