//! Dataset assembly: scenario simulation, windowing, z-score normalization
//! from the training split only, one-hot labels, and scenario-level splits
//! (one scenario's windows never straddle subsets).
//!
//! Scenarios are assigned to subsets in list order with largest-remainder
//! counts, so an exact three-way split stays exact and callers control class
//! coverage by how they order the scenario list (e.g. round-robin over
//! classes).

use crate::error::{Result, TnfsError};
use crate::linalg::Matrix;
use crate::plant::{
    simulate_scenario, window_samples, ClassTable, OnsetRule, Scenario, SensorSpec, Trajectory,
    WindowedSample,
};
use crate::train::TrainingSequence;
use crate::Scalar;

/// Sliding-window geometry applied to every trajectory.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WindowGeometry {
    pub window_minutes: f64,
    pub stride_minutes: f64,
}

impl Default for WindowGeometry {
    fn default() -> Self {
        WindowGeometry {
            window_minutes: 40.0,
            stride_minutes: 10.0,
        }
    }
}

/// Subset fractions; must sum to one.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitFractions {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl SplitFractions {
    pub fn thirds() -> Self {
        SplitFractions {
            train: 1.0 / 3.0,
            validation: 1.0 / 3.0,
            test: 1.0 / 3.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.validation, self.test];
        if parts.iter().any(|f| !f.is_finite() || *f < 0.0) {
            return Err(TnfsError::invalid("split fractions must be non-negative"));
        }
        if (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(TnfsError::invalid("split fractions must sum to 1"));
        }
        Ok(())
    }

    /// Largest-remainder apportionment of `total` items; exact when the
    /// fractions divide `total` evenly. Ties go to the earlier subset.
    pub fn counts(&self, total: usize) -> [usize; 3] {
        let fractions = [self.train, self.validation, self.test];
        let mut counts = [0usize; 3];
        let mut remainders = [0.0f64; 3];
        let mut assigned = 0;
        for i in 0..3 {
            let exact = fractions[i] * total as f64;
            counts[i] = exact.floor() as usize;
            remainders[i] = exact - exact.floor();
            assigned += counts[i];
        }
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| remainders[b].partial_cmp(&remainders[a]).unwrap());
        let mut left = total - assigned;
        for &i in &order {
            if left == 0 {
                break;
            }
            counts[i] += 1;
            left -= 1;
        }
        counts
    }
}

/// Which subset a sample belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Validation,
    Test,
}

/// Per-feature mean/std record fitted on the training split.
#[derive(Clone, Debug, PartialEq)]
pub struct Normalization<F> {
    pub means: Vec<F>,
    pub stds: Vec<F>,
}

impl<F: Scalar> Normalization<F> {
    /// Identity record (zero means, unit stds).
    pub fn identity(len: usize) -> Self {
        Normalization {
            means: vec![F::zero(); len],
            stds: vec![F::one(); len],
        }
    }

    /// Fits per-coordinate mean and population std; coordinates with
    /// (near-)zero variance get unit std so they normalize to zero.
    pub fn fit(rows: &[&[f64]]) -> Result<Normalization<F>> {
        let n = rows.len();
        if n == 0 {
            return Err(TnfsError::invalid("cannot fit normalization on no rows"));
        }
        let len = rows[0].len();
        let mut means = vec![0.0f64; len];
        for row in rows {
            if row.len() != len {
                return Err(TnfsError::invalid("ragged feature rows"));
            }
            for (m, &v) in means.iter_mut().zip(*row) {
                *m += v;
            }
        }
        for m in &mut means {
            *m /= n as f64;
        }
        let mut vars = vec![0.0f64; len];
        for row in rows {
            for ((var, &m), &v) in vars.iter_mut().zip(&means).zip(*row) {
                *var += (v - m) * (v - m);
            }
        }
        let stds: Vec<f64> = vars
            .iter()
            .map(|&v| {
                let s = (v / n as f64).sqrt();
                if s > 1e-12 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Normalization {
            means: means.into_iter().map(|v| F::from_f64(v).unwrap()).collect(),
            stds: stds.into_iter().map(|v| F::from_f64(v).unwrap()).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }

    pub fn apply_f64(&self, raw: &[f64]) -> Result<Vec<F>> {
        if raw.len() != self.means.len() {
            return Err(TnfsError::dims(
                "normalization",
                self.means.len().to_string(),
                raw.len().to_string(),
            ));
        }
        Ok(raw
            .iter()
            .zip(self.means.iter().zip(&self.stds))
            .map(|(&v, (&m, &s))| (F::from_f64(v).unwrap() - m) / s)
            .collect())
    }

    /// Maps a normalized vector back to raw units.
    pub fn invert(&self, normalized: &[F]) -> Result<Vec<f64>> {
        if normalized.len() != self.means.len() {
            return Err(TnfsError::dims(
                "denormalization",
                self.means.len().to_string(),
                normalized.len().to_string(),
            ));
        }
        Ok(normalized
            .iter()
            .zip(self.means.iter().zip(&self.stds))
            .map(|(&v, (&m, &s))| (v * s + m).to_f64().unwrap())
            .collect())
    }

    /// Restricted to a subset of coordinates (e.g. the target channels of a
    /// forecast model).
    pub fn subset(&self, indices: &[usize]) -> Normalization<F> {
        Normalization {
            means: indices.iter().map(|&i| self.means[i]).collect(),
            stds: indices.iter().map(|&i| self.stds[i]).collect(),
        }
    }
}

/// Scenario-level metadata kept alongside the windowed samples, used for
/// detection-delay accounting.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioMeta {
    pub fault_class: usize,
    /// None for NORMAL scenarios.
    pub onset_minute: Option<f64>,
    pub duration_minutes: f64,
    pub split: Split,
}

/// One normalized windowed sample.
#[derive(Clone, Debug, PartialEq)]
pub struct DataSample<F> {
    pub features: Vec<F>,
    pub label: usize,
    pub window_start_minute: f64,
    pub scenario_index: usize,
}

/// Windowed feature/target pairs with one-hot fault-class labels, split into
/// train/validation/test by scenario.
#[derive(Clone, Debug)]
pub struct Dataset<F> {
    pub class_names: Vec<String>,
    pub channel_count: usize,
    pub points_per_window: usize,
    pub normalization: Normalization<F>,
    pub train: Vec<DataSample<F>>,
    pub validation: Vec<DataSample<F>>,
    pub test: Vec<DataSample<F>>,
    pub scenarios: Vec<ScenarioMeta>,
    pub warnings: Vec<String>,
}

impl<F: Scalar> Dataset<F> {
    pub fn feature_len(&self) -> usize {
        self.channel_count * self.points_per_window
    }

    pub fn class_count(&self) -> usize {
        self.class_names.len()
    }

    pub fn split(&self, split: Split) -> &[DataSample<F>] {
        match split {
            Split::Train => &self.train,
            Split::Validation => &self.validation,
            Split::Test => &self.test,
        }
    }

    pub fn total_samples(&self) -> usize {
        self.train.len() + self.validation.len() + self.test.len()
    }

    /// Training sequences for the classifier: each window becomes one
    /// sequence whose inputs are the per-point channel vectors and whose
    /// target is the window's one-hot label repeated at every step.
    pub fn training_sequences(&self, split: Split) -> Vec<TrainingSequence<F>> {
        self.split(split)
            .iter()
            .map(|s| {
                let inputs = window_input_sequence(
                    &s.features,
                    self.channel_count,
                    self.points_per_window,
                );
                let target = one_hot::<F>(s.label, self.class_count());
                let targets = vec![target; self.points_per_window];
                TrainingSequence::new(inputs, targets)
            })
            .collect()
    }

    /// Cluster matrix over the concatenated state-and-input space. The
    /// state part of each row is the sample's one-hot label (the state the
    /// trained classifier is steered toward); the input part is the channel
    /// vector at each window point. Row count: samples x points.
    pub fn cluster_matrix(&self, split: Split) -> Result<Matrix<F>> {
        let samples = self.split(split);
        if samples.is_empty() {
            return Err(TnfsError::invalid("empty split for cluster matrix"));
        }
        let mut rows = Vec::with_capacity(samples.len() * self.points_per_window);
        for s in samples {
            let inputs = window_input_sequence(
                &s.features,
                self.channel_count,
                self.points_per_window,
            );
            let label = one_hot::<F>(s.label, self.class_count());
            for u in inputs {
                let mut row = label.clone();
                row.extend(u);
                rows.push(row);
            }
        }
        Matrix::from_rows(&rows)
    }
}

/// One-hot vector of length `classes`.
pub fn one_hot<F: Scalar>(label: usize, classes: usize) -> Vec<F> {
    let mut v = vec![F::zero(); classes];
    v[label] = F::one();
    v
}

/// Reshapes a channel-major feature block into the per-point channel
/// vectors a rollout consumes.
pub fn window_input_sequence<F: Scalar>(
    features: &[F],
    channels: usize,
    points: usize,
) -> Vec<Vec<F>> {
    debug_assert_eq!(features.len(), channels * points);
    (0..points)
        .map(|t| (0..channels).map(|ch| features[ch * points + t]).collect())
        .collect()
}

/// Simulates every scenario, windows the trajectories, and assembles the
/// normalized, split dataset. Deterministic given the scenario seeds.
pub fn build_dataset<F: Scalar>(
    scenarios: &[Scenario],
    plant: &[SensorSpec],
    geometry: WindowGeometry,
    split: SplitFractions,
    onset_rule: OnsetRule,
    classes: &ClassTable,
) -> Result<Dataset<F>> {
    if scenarios.is_empty() {
        return Err(TnfsError::invalid("no scenarios"));
    }
    let trajectories: Vec<Trajectory> = scenarios
        .iter()
        .map(|sc| simulate_scenario(plant, sc))
        .collect::<Result<_>>()?;
    build_dataset_from_trajectories(&trajectories, geometry, split, onset_rule, classes)
}

/// Same as [`build_dataset`] but starting from already-simulated (or loaded)
/// trajectories.
pub fn build_dataset_from_trajectories<F: Scalar>(
    trajectories: &[Trajectory],
    geometry: WindowGeometry,
    split: SplitFractions,
    onset_rule: OnsetRule,
    classes: &ClassTable,
) -> Result<Dataset<F>> {
    split.validate()?;
    if trajectories.is_empty() {
        return Err(TnfsError::invalid("no trajectories"));
    }
    let channel_names = &trajectories[0].channel_names;
    let step = trajectories[0].step_minutes()?;
    for traj in trajectories {
        if &traj.channel_names != channel_names {
            return Err(TnfsError::invalid("trajectories disagree on channels"));
        }
        if (traj.step_minutes()? - step).abs() > 1e-9 {
            return Err(TnfsError::invalid("trajectories disagree on sampling step"));
        }
    }
    let points_per_window = (geometry.window_minutes / step).round() as usize;

    // Window everything first, then assign scenarios to subsets in order.
    let mut windows: Vec<Vec<WindowedSample>> = Vec::with_capacity(trajectories.len());
    for traj in trajectories {
        windows.push(window_samples(
            traj,
            geometry.window_minutes,
            geometry.stride_minutes,
            onset_rule,
            classes,
        )?);
    }

    let counts = split.counts(trajectories.len());
    let split_of = |idx: usize| {
        if idx < counts[0] {
            Split::Train
        } else if idx < counts[0] + counts[1] {
            Split::Validation
        } else {
            Split::Test
        }
    };

    let scenario_meta: Vec<ScenarioMeta> = trajectories
        .iter()
        .enumerate()
        .map(|(idx, traj)| {
            let fault_class = classes.index_of(traj.fault.fault_id).ok_or_else(|| {
                TnfsError::invalid(format!("fault {} not in class table", traj.fault.fault_id))
            })?;
            Ok(ScenarioMeta {
                fault_class,
                onset_minute: (!traj.fault.is_normal()).then_some(traj.fault.onset_minute),
                duration_minutes: traj.duration_minutes(),
                split: split_of(idx),
            })
        })
        .collect::<Result<_>>()?;

    // Normalization statistics come from the training split only.
    let train_rows: Vec<&[f64]> = windows
        .iter()
        .enumerate()
        .filter(|(idx, _)| split_of(*idx) == Split::Train)
        .flat_map(|(_, ws)| ws.iter().map(|w| w.features.as_slice()))
        .collect();
    if train_rows.is_empty() {
        return Err(TnfsError::invalid("training split received no samples"));
    }
    let normalization = Normalization::<F>::fit(&train_rows)?;

    let mut dataset = Dataset {
        class_names: classes.names(),
        channel_count: channel_names.len(),
        points_per_window,
        normalization,
        train: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
        scenarios: scenario_meta,
        warnings: Vec::new(),
    };
    for (idx, ws) in windows.iter().enumerate() {
        for w in ws {
            let sample = DataSample {
                features: dataset.normalization.apply_f64(&w.features)?,
                label: w.label,
                window_start_minute: w.window_start_minute,
                scenario_index: idx,
            };
            match split_of(idx) {
                Split::Train => dataset.train.push(sample),
                Split::Validation => dataset.validation.push(sample),
                Split::Test => dataset.test.push(sample),
            }
        }
    }

    for (class, name) in dataset.class_names.iter().enumerate() {
        if !dataset.scenarios.iter().any(|m| m.fault_class == class) {
            dataset
                .warnings
                .push(format!("class {name} has no scenarios"));
        }
    }
    Ok(dataset)
}

/// Sequence dataset for next-step forecasting: inputs are the normalized
/// channel vectors, targets the selected channels one step ahead.
#[derive(Clone, Debug)]
pub struct ForecastDataset<F> {
    pub channel_names: Vec<String>,
    pub target_names: Vec<String>,
    pub target_indices: Vec<usize>,
    /// Per-channel record over the model inputs.
    pub normalization: Normalization<F>,
    pub train: Vec<TrainingSequence<F>>,
    pub validation: Vec<TrainingSequence<F>>,
    pub test: Vec<TrainingSequence<F>>,
}

/// Builds the forecasting dataset. Normalization is per channel, fitted on
/// the training-split trajectories.
pub fn build_forecast_dataset<F: Scalar>(
    trajectories: &[Trajectory],
    target_channels: &[String],
    split: SplitFractions,
) -> Result<ForecastDataset<F>> {
    split.validate()?;
    if trajectories.is_empty() {
        return Err(TnfsError::invalid("no trajectories"));
    }
    if target_channels.is_empty() {
        return Err(TnfsError::invalid("no forecast target channels"));
    }
    let channel_names = trajectories[0].channel_names.clone();
    let target_indices: Vec<usize> = target_channels
        .iter()
        .map(|name| {
            trajectories[0]
                .channel_index(name)
                .ok_or_else(|| TnfsError::invalid(format!("unknown target channel {name}")))
        })
        .collect::<Result<_>>()?;
    for traj in trajectories {
        if traj.channel_names != channel_names {
            return Err(TnfsError::invalid("trajectories disagree on channels"));
        }
        if traj.timestamps.len() < 2 {
            return Err(TnfsError::invalid("trajectory too short to forecast"));
        }
    }

    let counts = split.counts(trajectories.len());
    let split_of = |idx: usize| {
        if idx < counts[0] {
            Split::Train
        } else if idx < counts[0] + counts[1] {
            Split::Validation
        } else {
            Split::Test
        }
    };

    // Per-channel stats over all training-split time points.
    let mut train_rows: Vec<Vec<f64>> = Vec::new();
    for (idx, traj) in trajectories.iter().enumerate() {
        if split_of(idx) != Split::Train {
            continue;
        }
        for t in 0..traj.timestamps.len() {
            train_rows.push(traj.channels.iter().map(|ch| ch[t]).collect());
        }
    }
    if train_rows.is_empty() {
        return Err(TnfsError::invalid("training split received no trajectories"));
    }
    let row_refs: Vec<&[f64]> = train_rows.iter().map(Vec::as_slice).collect();
    let normalization = Normalization::<F>::fit(&row_refs)?;

    let mut out = ForecastDataset {
        channel_names,
        target_names: target_channels.to_vec(),
        target_indices: target_indices.clone(),
        normalization,
        train: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
    };
    for (idx, traj) in trajectories.iter().enumerate() {
        let steps = traj.timestamps.len();
        let normalized: Vec<Vec<F>> = (0..steps)
            .map(|t| {
                let raw: Vec<f64> = traj.channels.iter().map(|ch| ch[t]).collect();
                out.normalization.apply_f64(&raw)
            })
            .collect::<Result<_>>()?;
        let inputs: Vec<Vec<F>> = normalized[..steps - 1].to_vec();
        let targets: Vec<Vec<F>> = normalized[1..]
            .iter()
            .map(|row| target_indices.iter().map(|&i| row[i]).collect())
            .collect();
        let seq = TrainingSequence::new(inputs, targets);
        match split_of(idx) {
            Split::Train => out.train.push(seq),
            Split::Validation => out.validation.push(seq),
            Split::Test => out.test.push(seq),
        }
    }
    Ok(out)
}
