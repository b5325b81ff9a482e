//! Applying a trained model: window classification, normal/abnormal
//! detection, recursive multi-step prediction, and evaluation reports.

use crate::dataset::{window_input_sequence, Dataset, Split};
use crate::error::{Result, TnfsError};
use crate::linalg::all_finite;
use crate::model::TnfsModel;
use crate::plant::is_multiple;
use crate::Scalar;

/// Classification outcome for one windowed sample.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagnosisVerdict<F> {
    pub class_index: usize,
    pub class_name: String,
    /// Raw class activations (the model's final output vector).
    pub score_vector: Vec<F>,
    /// Softmax-normalized activation of the winning class.
    pub confidence: F,
}

/// Feeds one window through the model — the window's time points form the
/// rollout input sequence, starting from a zero context — and takes the
/// final output vector as class scores. Ties break toward the lower index.
pub fn classify<F: Scalar>(
    model: &TnfsModel<F>,
    features: &[F],
    class_names: &[String],
) -> Result<DiagnosisVerdict<F>> {
    let m = model.input_dim();
    if features.is_empty() || features.len() % m != 0 {
        return Err(TnfsError::dims(
            "window features",
            format!("a positive multiple of {m} (channel-major)"),
            features.len().to_string(),
        ));
    }
    if !all_finite(features) {
        return Err(TnfsError::invalid("non-finite features"));
    }
    let points = features.len() / m;
    let inputs = window_input_sequence(features, m, points);
    // Windows are independent samples: always start from a zero context.
    let zero = vec![F::zero(); model.state_dim()];
    let roll = model.rollout(&inputs, Some(&zero))?;
    let scores = roll.outputs.last().unwrap().clone();

    let mut class_index = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[class_index] {
            class_index = i;
        }
    }
    let confidence = softmax_at(&scores, class_index);
    let class_name = class_names
        .get(class_index)
        .cloned()
        .unwrap_or_else(|| format!("class_{class_index}"));
    Ok(DiagnosisVerdict {
        class_index,
        class_name,
        score_vector: scores,
        confidence,
    })
}

fn softmax_at<F: Scalar>(scores: &[F], index: usize) -> F {
    let max = scores.iter().fold(F::neg_infinity(), |m, &s| m.max(s));
    let sum: F = scores.iter().map(|&s| (s - max).exp()).sum();
    (scores[index] - max).exp() / sum
}

/// Detection stage: flags ABNORMAL (true) when the verdict names a
/// non-normal class with confidence at or above the threshold.
pub fn detect<F: Scalar>(
    verdict: &DiagnosisVerdict<F>,
    normal_class: usize,
    threshold: f64,
) -> Result<bool> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(TnfsError::invalid("detection threshold must be in [0, 1]"));
    }
    Ok(verdict.class_index != normal_class
        && verdict.confidence.to_f64().unwrap() >= threshold)
}

/// How each model input channel is filled when predictions are fed forward.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InputFeedback {
    /// Keep the channel at its previous value.
    Hold,
    /// Take a component of the previous predicted output.
    FromOutput(usize),
    /// Take a component of the previous input (lag shifting).
    FromInput(usize),
}

/// Per-input feedback wiring for autoregressive prediction.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelMap {
    pub per_input: Vec<InputFeedback>,
}

impl ChannelMap {
    /// Every channel held constant: pure state extrapolation.
    pub fn hold_all(inputs: usize) -> Self {
        ChannelMap {
            per_input: vec![InputFeedback::Hold; inputs],
        }
    }

    /// Lag-line wiring for an autoregressive predictor: inputs shift left
    /// and the newest slot takes predicted output 0.
    pub fn lag_line(inputs: usize) -> Self {
        let mut per_input: Vec<InputFeedback> =
            (1..inputs).map(InputFeedback::FromInput).collect();
        per_input.push(InputFeedback::FromOutput(0));
        ChannelMap { per_input }
    }

    pub fn validate(&self, input_dim: usize, output_dim: usize) -> Result<()> {
        if self.per_input.len() != input_dim {
            return Err(TnfsError::dims(
                "channel map",
                input_dim.to_string(),
                self.per_input.len().to_string(),
            ));
        }
        for fb in &self.per_input {
            match *fb {
                InputFeedback::FromOutput(k) if k >= output_dim => {
                    return Err(TnfsError::invalid(format!(
                        "channel map references output {k} of {output_dim}"
                    )));
                }
                InputFeedback::FromInput(i) if i >= input_dim => {
                    return Err(TnfsError::invalid(format!(
                        "channel map references input {i} of {input_dim}"
                    )));
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Rollout context carried between prediction segments.
#[derive(Clone, Debug, PartialEq)]
pub struct ArContext<F> {
    pub state: Vec<F>,
    pub input: Vec<F>,
    pub output: Vec<F>,
}

/// Rolls the model through observed history (normalized model inputs) to
/// fix the context state.
pub fn establish_context<F: Scalar>(
    model: &TnfsModel<F>,
    history: &[Vec<F>],
) -> Result<ArContext<F>> {
    if history.is_empty() {
        return Err(TnfsError::invalid(
            "prediction needs at least one history step",
        ));
    }
    let roll = model.rollout(history, None)?;
    Ok(ArContext {
        state: roll.states.last().unwrap().clone(),
        input: history.last().unwrap().clone(),
        output: roll.outputs.last().unwrap().clone(),
    })
}

/// Advances the context `steps` times, wiring predictions back into the
/// inputs per `map`, and returns the predicted output vectors.
pub fn continue_horizon<F: Scalar>(
    model: &TnfsModel<F>,
    context: &ArContext<F>,
    steps: usize,
    map: &ChannelMap,
) -> Result<(Vec<Vec<F>>, ArContext<F>)> {
    map.validate(model.input_dim(), model.output_dim())?;
    if context.state.len() != model.state_dim() || context.input.len() != model.input_dim() {
        return Err(TnfsError::invalid("context dimensions disagree with model"));
    }
    let mut ctx = context.clone();
    let mut predictions = Vec::with_capacity(steps);
    for _ in 0..steps {
        let next_input: Vec<F> = map
            .per_input
            .iter()
            .enumerate()
            .map(|(j, fb)| match *fb {
                InputFeedback::Hold => ctx.input[j],
                InputFeedback::FromOutput(k) => ctx.output[k],
                InputFeedback::FromInput(i) => ctx.input[i],
            })
            .collect();
        let state = model.state_transition(&ctx.state, &next_input)?;
        let output = model.output_projection(&state)?;
        predictions.push(output.clone());
        ctx = ArContext {
            state,
            input: next_input,
            output,
        };
    }
    Ok((predictions, ctx))
}

/// Multi-step prediction: establishes the context from history, then
/// recursively feeds predictions forward for `horizon / step` steps.
pub fn predict_horizon<F: Scalar>(
    model: &TnfsModel<F>,
    history: &[Vec<F>],
    horizon_minutes: f64,
    step_minutes: f64,
    map: &ChannelMap,
) -> Result<Vec<Vec<F>>> {
    if !(step_minutes > 0.0) || horizon_minutes < 0.0 {
        return Err(TnfsError::invalid("horizon must be >= 0 and step positive"));
    }
    if !is_multiple(horizon_minutes, step_minutes) {
        return Err(TnfsError::invalid(format!(
            "horizon {horizon_minutes} not divisible by step {step_minutes}"
        )));
    }
    let steps = (horizon_minutes / step_minutes).round() as usize;
    if steps == 0 {
        return Ok(Vec::new());
    }
    let context = establish_context(model, history)?;
    continue_horizon(model, &context, steps, map).map(|(p, _)| p)
}

/// Aggregate classification quality over one dataset split.
#[derive(Clone, Debug, PartialEq)]
pub struct EvaluationReport {
    pub class_names: Vec<String>,
    /// `confusion_matrix[true_class][predicted_class]`.
    pub confusion_matrix: Vec<Vec<usize>>,
    pub accuracy: f64,
    /// None for classes with no samples in the split.
    pub per_class_recall: Vec<Option<f64>>,
    /// Mean minutes from fault onset to the first window classified with
    /// the correct fault class; a never-detected scenario counts its full
    /// post-onset span. None when the split has no faulty scenarios.
    pub mean_detection_delay_minutes: Option<f64>,
    pub total_samples: usize,
}

impl EvaluationReport {
    /// Line-oriented key/value rendering plus the confusion matrix rows.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("total_samples {}\n", self.total_samples));
        out.push_str(&format!("accuracy {:.6}\n", self.accuracy));
        match self.mean_detection_delay_minutes {
            Some(d) => out.push_str(&format!("mean_detection_delay_minutes {d:.3}\n")),
            None => out.push_str("mean_detection_delay_minutes n/a\n"),
        }
        out.push_str(&format!("classes {}\n", self.class_names.len()));
        for (name, recall) in self.class_names.iter().zip(&self.per_class_recall) {
            match recall {
                Some(r) => out.push_str(&format!("recall {name} {r:.6}\n")),
                None => out.push_str(&format!("recall {name} n/a\n")),
            }
        }
        out.push_str("confusion_matrix rows=true cols=predicted\n");
        for row in &self.confusion_matrix {
            let cells: Vec<String> = row.iter().map(usize::to_string).collect();
            out.push_str(&cells.join(" "));
            out.push('\n');
        }
        out
    }
}

/// Classifies every sample of a split and accumulates the confusion matrix,
/// accuracy, per-class recall, and the mean detection delay (when the split
/// contains faulty scenarios).
pub fn evaluate<F: Scalar>(
    model: &TnfsModel<F>,
    dataset: &Dataset<F>,
    split: Split,
) -> Result<EvaluationReport> {
    let samples = dataset.split(split);
    if samples.is_empty() {
        return Err(TnfsError::invalid("cannot evaluate an empty split"));
    }
    let classes = dataset.class_count();
    let mut confusion = vec![vec![0usize; classes]; classes];
    let mut predictions = Vec::with_capacity(samples.len());
    for sample in samples {
        let verdict = classify(model, &sample.features, &dataset.class_names)?;
        confusion[sample.label][verdict.class_index] += 1;
        predictions.push(verdict.class_index);
    }
    let correct: usize = (0..classes).map(|i| confusion[i][i]).sum();
    let accuracy = correct as f64 / samples.len() as f64;
    let per_class_recall: Vec<Option<f64>> = (0..classes)
        .map(|i| {
            let row: usize = confusion[i].iter().sum();
            (row > 0).then(|| confusion[i][i] as f64 / row as f64)
        })
        .collect();

    // Detection delay per faulty scenario present in this split.
    let mut delays = Vec::new();
    for (idx, meta) in dataset.scenarios.iter().enumerate() {
        let Some(onset) = meta.onset_minute else {
            continue;
        };
        let mut windows: Vec<(f64, usize)> = samples
            .iter()
            .zip(&predictions)
            .filter(|(s, _)| s.scenario_index == idx)
            .map(|(s, &p)| (s.window_start_minute, p))
            .collect();
        if windows.is_empty() {
            continue;
        }
        windows.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let first_hit = windows
            .iter()
            .find(|(_, p)| *p == meta.fault_class)
            .map(|(start, _)| (start - onset).max(0.0));
        delays.push(first_hit.unwrap_or(meta.duration_minutes - onset));
    }
    let mean_detection_delay_minutes = if delays.is_empty() {
        None
    } else {
        Some(delays.iter().sum::<f64>() / delays.len() as f64)
    };

    Ok(EvaluationReport {
        class_names: dataset.class_names.clone(),
        confusion_matrix: confusion,
        accuracy,
        per_class_recall,
        mean_detection_delay_minutes,
        total_samples: samples.len(),
    })
}
