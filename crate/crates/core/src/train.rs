//! Gradient training. Fits every trainable parameter — antecedent centers
//! and widths, the local gain matrices of each rule, and the readout matrix —
//! by plain full-batch gradient descent on the mean squared output error,
//! with gradients obtained by reverse accumulation through the entire
//! unrolled recurrence (no truncation; sequences here are short).
//!
//! A central finite-difference oracle lives alongside the analytic path and
//! stays independent of it: it only ever calls [`mse_loss`].

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, TnfsError};
use crate::linalg::{all_finite, axpy, dot, Matrix};
use crate::model::{ModelDims, TnfsModel};
use crate::Scalar;

/// One input/target sequence pair. The optional initial state overrides the
/// model's own context start.
#[derive(Clone, Debug)]
pub struct TrainingSequence<F> {
    pub inputs: Vec<Vec<F>>,
    pub targets: Vec<Vec<F>>,
    pub initial_state: Option<Vec<F>>,
}

impl<F: Scalar> TrainingSequence<F> {
    pub fn new(inputs: Vec<Vec<F>>, targets: Vec<Vec<F>>) -> Self {
        TrainingSequence {
            inputs,
            targets,
            initial_state: None,
        }
    }
}

/// Hyperparameters for [`train`].
#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    /// Global-norm gradient clip; `None` disables clipping.
    pub grad_clip_norm: Option<f64>,
    pub shuffle_seed: u64,
    /// Fraction of sequences held out for validation, in [0, 1).
    pub validation_fraction: f64,
    /// Keep the readout matrix fixed at its initial value.
    pub freeze_output_matrix: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.05,
            epochs: 100,
            grad_clip_norm: Some(10.0),
            shuffle_seed: 0,
            validation_fraction: 0.0,
            freeze_output_matrix: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(TnfsError::invalid("learning rate must be finite and >= 0"));
        }
        if self.epochs == 0 {
            return Err(TnfsError::invalid("epochs must be >= 1"));
        }
        if let Some(clip) = self.grad_clip_norm {
            if !clip.is_finite() || clip <= 0.0 {
                return Err(TnfsError::invalid("grad clip norm must be positive"));
            }
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(TnfsError::invalid("validation fraction must be in [0, 1)"));
        }
        Ok(())
    }
}

/// Loss record for one epoch, measured at the parameters the epoch started
/// with (so entry 0 is the untrained loss).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossReport {
    pub epoch: usize,
    pub train_mse: f64,
    pub validation_mse: Option<f64>,
}

/// Per-rule gradient slots, shape-congruent with the rule they mirror.
#[derive(Clone, Debug)]
pub struct RuleGradient<F> {
    pub state_centers: Vec<F>,
    pub state_widths: Vec<F>,
    pub input_centers: Vec<F>,
    pub input_widths: Vec<F>,
    pub a: Matrix<F>,
    pub b: Matrix<F>,
}

/// One gradient slot per trainable scalar, organized mirror-image to the
/// model.
#[derive(Clone, Debug)]
pub struct GradientSet<F> {
    pub rules: Vec<RuleGradient<F>>,
    pub output_matrix: Matrix<F>,
}

impl<F: Scalar> GradientSet<F> {
    pub fn zeros_like(model: &TnfsModel<F>) -> Self {
        let ModelDims { state: n, input: m, output: p } = model.dims;
        GradientSet {
            rules: (0..model.rule_count())
                .map(|_| RuleGradient {
                    state_centers: vec![F::zero(); n],
                    state_widths: vec![F::zero(); n],
                    input_centers: vec![F::zero(); m],
                    input_widths: vec![F::zero(); m],
                    a: Matrix::zeros(n, n),
                    b: Matrix::zeros(n, m),
                })
                .collect(),
            output_matrix: Matrix::zeros(p, n),
        }
    }

    pub fn flatten(&self) -> Vec<F> {
        let mut out = Vec::new();
        for rule in &self.rules {
            for (c, w) in rule.state_centers.iter().zip(&rule.state_widths) {
                out.push(*c);
                out.push(*w);
            }
            for (c, w) in rule.input_centers.iter().zip(&rule.input_widths) {
                out.push(*c);
                out.push(*w);
            }
            out.extend_from_slice(rule.a.data());
            out.extend_from_slice(rule.b.data());
        }
        out.extend_from_slice(self.output_matrix.data());
        out
    }

    pub fn global_norm(&self) -> F {
        self.flatten()
            .iter()
            .map(|&g| g * g)
            .sum::<F>()
            .sqrt()
    }

    pub fn scale(&mut self, s: F) {
        for rule in &mut self.rules {
            for v in rule
                .state_centers
                .iter_mut()
                .chain(&mut rule.state_widths)
                .chain(&mut rule.input_centers)
                .chain(&mut rule.input_widths)
            {
                *v = *v * s;
            }
            rule.a.scale(s);
            rule.b.scale(s);
        }
        self.output_matrix.scale(s);
    }

    pub fn is_finite(&self) -> bool {
        self.flatten().iter().all(|v| v.is_finite())
    }
}

/// Number of trainable scalars in a model.
pub fn param_count<F: Scalar>(model: &TnfsModel<F>) -> usize {
    let ModelDims { state: n, input: m, output: p } = model.dims;
    model.rule_count() * (2 * (n + m) + n * n + n * m) + p * n
}

/// Trainable parameters in canonical order: per rule, interleaved
/// (center, width) pairs for state then input terms, then the local gain
/// matrices row-major; finally the readout matrix row-major. The order is
/// shared with [`GradientSet::flatten`].
pub fn flatten_params<F: Scalar>(model: &TnfsModel<F>) -> Vec<F> {
    let mut out = Vec::with_capacity(param_count(model));
    for rule in &model.rules {
        for t in rule.antecedent.state_terms.iter().chain(&rule.antecedent.input_terms) {
            out.push(t.center);
            out.push(t.width);
        }
        out.extend_from_slice(rule.consequent.a.data());
        out.extend_from_slice(rule.consequent.b.data());
    }
    out.extend_from_slice(model.output_matrix.data());
    out
}

/// Writes a canonical parameter vector back into the model.
pub fn set_params<F: Scalar>(model: &mut TnfsModel<F>, flat: &[F]) -> Result<()> {
    if flat.len() != param_count(model) {
        return Err(TnfsError::dims(
            "parameter vector",
            param_count(model).to_string(),
            flat.len().to_string(),
        ));
    }
    let mut it = flat.iter().copied();
    for rule in &mut model.rules {
        for t in rule
            .antecedent
            .state_terms
            .iter_mut()
            .chain(&mut rule.antecedent.input_terms)
        {
            t.center = it.next().unwrap();
            t.width = it.next().unwrap();
        }
        for v in rule.consequent.a.data_mut() {
            *v = it.next().unwrap();
        }
        for v in rule.consequent.b.data_mut() {
            *v = it.next().unwrap();
        }
    }
    for v in model.output_matrix.data_mut() {
        *v = it.next().unwrap();
    }
    Ok(())
}

fn check_sequences<F: Scalar>(model: &TnfsModel<F>, data: &[TrainingSequence<F>]) -> Result<usize> {
    if data.is_empty() {
        return Err(TnfsError::invalid("training data is empty"));
    }
    let mut total_steps = 0usize;
    for (k, seq) in data.iter().enumerate() {
        if seq.inputs.is_empty() || seq.inputs.len() != seq.targets.len() {
            return Err(TnfsError::invalid(format!(
                "sequence {k}: inputs and targets must be equal-length and non-empty"
            )));
        }
        for (u, d) in seq.inputs.iter().zip(&seq.targets) {
            if u.len() != model.input_dim() || d.len() != model.output_dim() {
                return Err(TnfsError::dims(
                    format!("sequence {k} step vectors"),
                    format!("{}/{}", model.input_dim(), model.output_dim()),
                    format!("{}/{}", u.len(), d.len()),
                ));
            }
            if !all_finite(u) || !all_finite(d) {
                return Err(TnfsError::invalid(format!("sequence {k}: non-finite value")));
            }
        }
        if let Some(x0) = &seq.initial_state {
            if x0.len() != model.state_dim() || !all_finite(x0) {
                return Err(TnfsError::invalid(format!(
                    "sequence {k}: bad initial state"
                )));
            }
        }
        total_steps += seq.inputs.len();
    }
    Ok(total_steps)
}

/// Mean squared output error: the mean over all sequences and time steps of
/// `||y_pred - y_target||^2 / P`.
pub fn mse_loss<F: Scalar>(model: &TnfsModel<F>, data: &[TrainingSequence<F>]) -> Result<F> {
    model.validate()?;
    let total_steps = check_sequences(model, data)?;
    let mut acc = F::zero();
    for (k, seq) in data.iter().enumerate() {
        let mut x = seq
            .initial_state
            .clone()
            .unwrap_or_else(|| model.initial_state.clone());
        for (t, (u, d)) in seq.inputs.iter().zip(&seq.targets).enumerate() {
            x = model.state_transition(&x, u)?;
            if !all_finite(&x) {
                return Err(TnfsError::NumericOverflow(format!(
                    "rollout overflow in sequence {k} at step {t}"
                )));
            }
            let y = model.output_projection(&x)?;
            for (yi, di) in y.iter().zip(d) {
                let e = *yi - *di;
                acc = acc + e * e;
            }
        }
    }
    let denom = F::from_usize(model.output_dim() * total_steps).unwrap();
    Ok(acc / denom)
}

struct StepCache<F> {
    x_in: Vec<F>,
    h: Vec<F>,
    f: Vec<F>,
    strength_sum: F,
    uniform_fallback: bool,
    /// Local consequent outputs `A_r x + B_r u`, one per rule.
    locals: Vec<Vec<F>>,
    x_out: Vec<F>,
    y: Vec<F>,
}

/// Loss and its exact gradient in one reverse-accumulation pass over every
/// sequence. This is the analytic side; [`finite_difference_gradients`] is
/// the independent check.
pub fn loss_and_gradients<F: Scalar>(
    model: &TnfsModel<F>,
    data: &[TrainingSequence<F>],
) -> Result<(F, GradientSet<F>)> {
    model.validate()?;
    let total_steps = check_sequences(model, data)?;
    let n = model.state_dim();
    let r_count = model.rule_count();
    let weight = F::one() / F::from_usize(model.output_dim() * total_steps).unwrap();
    let two = F::from_f64(2.0).unwrap();

    let mut grads = GradientSet::zeros_like(model);
    let mut loss = F::zero();

    for (k, seq) in data.iter().enumerate() {
        // Forward with per-step cache.
        let mut caches: Vec<StepCache<F>> = Vec::with_capacity(seq.inputs.len());
        let mut x = seq
            .initial_state
            .clone()
            .unwrap_or_else(|| model.initial_state.clone());
        for (t, (u, d)) in seq.inputs.iter().zip(&seq.targets).enumerate() {
            let f = model.firing_strengths(&x, u)?;
            let strength_sum: F = f.iter().copied().sum();
            let uniform_fallback = strength_sum < crate::underflow_eps::<F>();
            let h = crate::model::normalize_strengths(&f)?;
            let locals: Vec<Vec<F>> = model
                .rules
                .iter()
                .map(|rule| {
                    let mut z = rule.consequent.a.matvec(&x);
                    axpy(&mut z, &rule.consequent.b.matvec(u), F::one());
                    z
                })
                .collect();
            let mut x_out = vec![F::zero(); n];
            for (w, z) in h.iter().zip(&locals) {
                axpy(&mut x_out, z, *w);
            }
            if !all_finite(&x_out) {
                return Err(TnfsError::NumericOverflow(format!(
                    "rollout overflow in sequence {k} at step {t}"
                )));
            }
            let y = model.output_matrix.matvec(&x_out);
            for (yi, di) in y.iter().zip(d) {
                let e = *yi - *di;
                loss = loss + weight * e * e;
            }
            caches.push(StepCache {
                x_in: x.clone(),
                h,
                f,
                strength_sum,
                uniform_fallback,
                locals,
                x_out: x_out.clone(),
                y,
            });
            x = x_out;
        }

        // Reverse accumulation. `carry` is dL/dx flowing from step t+1 into
        // the state produced at step t.
        let mut carry = vec![F::zero(); n];
        for (t, cache) in caches.iter().enumerate().rev() {
            let d = &seq.targets[t];
            let u = &seq.inputs[t];
            // dL/dy and readout gradient.
            let g_y: Vec<F> = cache
                .y
                .iter()
                .zip(d)
                .map(|(&yi, &di)| two * weight * (yi - di))
                .collect();
            grads.output_matrix.add_outer(&g_y, &cache.x_out, F::one());
            // Total dL/dx_out.
            let mut lambda = model.output_matrix.matvec_t(&g_y);
            axpy(&mut lambda, &carry, F::one());

            let mut carry_next = vec![F::zero(); n];
            let mut g_h = vec![F::zero(); r_count];
            for (r, rule) in model.rules.iter().enumerate() {
                let w = cache.h[r];
                grads.rules[r].a.add_outer(&lambda, &cache.x_in, w);
                grads.rules[r].b.add_outer(&lambda, u, w);
                g_h[r] = dot(&lambda, &cache.locals[r]);
                // Linear path back into the previous state.
                axpy(&mut carry_next, &rule.consequent.a.matvec_t(&lambda), w);
            }
            if !cache.uniform_fallback {
                let inner: F = g_h.iter().zip(&cache.h).map(|(&g, &hh)| g * hh).sum();
                for (r, rule) in model.rules.iter().enumerate() {
                    // dL/df_r, then through the membership product via its
                    // log-derivative: df/dc = f (v-c)/s^2 etc. When a
                    // membership underflows to zero so does f, which matches
                    // the true (vanishing) derivative.
                    let g_f = (g_h[r] - inner) / cache.strength_sum;
                    let q = g_f * cache.f[r];
                    if q == F::zero() {
                        continue;
                    }
                    let grule = &mut grads.rules[r];
                    for (i, term) in rule.antecedent.state_terms.iter().enumerate() {
                        let diff = cache.x_in[i] - term.center;
                        let s2 = term.width * term.width;
                        let slope = q * diff / s2;
                        grule.state_centers[i] = grule.state_centers[i] + slope;
                        grule.state_widths[i] =
                            grule.state_widths[i] + slope * diff / term.width;
                        carry_next[i] = carry_next[i] - slope;
                    }
                    for (j, term) in rule.antecedent.input_terms.iter().enumerate() {
                        let diff = u[j] - term.center;
                        let s2 = term.width * term.width;
                        let slope = q * diff / s2;
                        grule.input_centers[j] = grule.input_centers[j] + slope;
                        grule.input_widths[j] =
                            grule.input_widths[j] + slope * diff / term.width;
                    }
                }
            }
            carry = carry_next;
        }
    }

    if !grads.is_finite() {
        return Err(TnfsError::NumericOverflow(
            "non-finite gradient entries".into(),
        ));
    }
    Ok((loss, grads))
}

/// Exact gradient of [`mse_loss`] for every trainable scalar.
pub fn analytic_gradients<F: Scalar>(
    model: &TnfsModel<F>,
    data: &[TrainingSequence<F>],
) -> Result<GradientSet<F>> {
    loss_and_gradients(model, data).map(|(_, g)| g)
}

/// Central-difference gradient estimate, `(L(p+step) - L(p-step)) / (2 step)`
/// per parameter, with widths clamped to the floor on both probes.
pub fn finite_difference_gradients<F: Scalar>(
    model: &TnfsModel<F>,
    data: &[TrainingSequence<F>],
    step: F,
) -> Result<GradientSet<F>> {
    if step <= F::zero() || !step.is_finite() {
        return Err(TnfsError::invalid("finite-difference step must be positive"));
    }
    model.validate()?;
    check_sequences(model, data)?;
    let base = flatten_params(model);
    let mut flat_grads = Vec::with_capacity(base.len());
    let mut probe = model.clone();
    let mut values = base.clone();
    for idx in 0..base.len() {
        values[idx] = base[idx] + step;
        set_params(&mut probe, &values)?;
        probe.clamp_widths();
        let plus = mse_loss(&probe, data)?;

        values[idx] = base[idx] - step;
        set_params(&mut probe, &values)?;
        probe.clamp_widths();
        let minus = mse_loss(&probe, data)?;

        values[idx] = base[idx];
        flat_grads.push((plus - minus) / (F::from_f64(2.0).unwrap() * step));
    }
    set_params(&mut probe, &values)?;
    gradient_set_from_flat(model, &flat_grads)
}

fn gradient_set_from_flat<F: Scalar>(
    model: &TnfsModel<F>,
    flat: &[F],
) -> Result<GradientSet<F>> {
    let mut grads = GradientSet::zeros_like(model);
    let mut shape_mirror = model.clone();
    set_params(&mut shape_mirror, flat)?;
    for (g, rule) in grads.rules.iter_mut().zip(&shape_mirror.rules) {
        for (i, t) in rule.antecedent.state_terms.iter().enumerate() {
            g.state_centers[i] = t.center;
            g.state_widths[i] = t.width;
        }
        for (j, t) in rule.antecedent.input_terms.iter().enumerate() {
            g.input_centers[j] = t.center;
            g.input_widths[j] = t.width;
        }
        g.a = rule.consequent.a.clone();
        g.b = rule.consequent.b.clone();
    }
    grads.output_matrix = shape_mirror.output_matrix.clone();
    Ok(grads)
}

/// Largest per-parameter relative disagreement between two gradient sets,
/// with denominator `max(|a|, |b|, 1e-8)`.
pub fn max_relative_error<F: Scalar>(a: &GradientSet<F>, b: &GradientSet<F>) -> F {
    let floor = F::from_f64(1e-8).unwrap();
    a.flatten()
        .iter()
        .zip(b.flatten().iter())
        .map(|(&x, &y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(F::zero(), |m, e| m.max(e))
}

/// Default consequent initialization used when rules are not seeded from
/// data: state gain `0.5 I` plus uniform noise in [-0.01, 0.01] (spectral
/// radius below one keeps early rollouts bounded), input gain entries
/// uniform in [-0.1, 0.1].
pub fn default_consequent<F: Scalar>(
    dims: ModelDims,
    rng: &mut ChaCha8Rng,
) -> crate::model::RuleConsequent<F> {
    use rand::Rng;
    let mut a = Matrix::zeros(dims.state, dims.state);
    for i in 0..dims.state {
        for j in 0..dims.state {
            let base = if i == j { 0.5 } else { 0.0 };
            a[(i, j)] = F::from_f64(base + rng.random_range(-0.01..0.01)).unwrap();
        }
    }
    let b = Matrix::from_vec(
        dims.state,
        dims.input,
        (0..dims.state * dims.input)
            .map(|_| F::from_f64(rng.random_range(-0.1..0.1)).unwrap())
            .collect(),
    )
    .unwrap();
    crate::model::RuleConsequent { a, b }
}

/// Default readout initialization: entries uniform in [-0.1, 0.1].
pub fn default_output_matrix<F: Scalar>(dims: ModelDims, rng: &mut ChaCha8Rng) -> Matrix<F> {
    use rand::Rng;
    Matrix::from_vec(
        dims.output,
        dims.state,
        (0..dims.output * dims.state)
            .map(|_| F::from_f64(rng.random_range(-0.1..0.1)).unwrap())
            .collect(),
    )
    .unwrap()
}

fn apply_step<F: Scalar>(
    model: &mut TnfsModel<F>,
    grads: &GradientSet<F>,
    lr: F,
    freeze_output: bool,
) {
    for (rule, g) in model.rules.iter_mut().zip(&grads.rules) {
        for (i, t) in rule.antecedent.state_terms.iter_mut().enumerate() {
            t.center = t.center - lr * g.state_centers[i];
            t.width = t.width - lr * g.state_widths[i];
        }
        for (j, t) in rule.antecedent.input_terms.iter_mut().enumerate() {
            t.center = t.center - lr * g.input_centers[j];
            t.width = t.width - lr * g.input_widths[j];
        }
        rule.consequent.a.add_scaled(&g.a, -lr);
        rule.consequent.b.add_scaled(&g.b, -lr);
    }
    if !freeze_output {
        model.output_matrix.add_scaled(&grads.output_matrix, -lr);
    }
    model.clamp_widths();
}

/// Full-batch gradient descent. Returns the trained model and the per-epoch
/// loss history; entry `e` is measured before epoch `e`'s update.
pub fn train<F: Scalar>(
    model: TnfsModel<F>,
    data: &[TrainingSequence<F>],
    config: &TrainConfig,
) -> Result<(TnfsModel<F>, Vec<LossReport>)> {
    config.validate()?;
    let mut model = model;
    model.validate()?;
    check_sequences(&model, data)?;

    // Hold out the validation tail of a seeded shuffle.
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.shuffle_seed);
    order.shuffle(&mut rng);
    let val_count = (config.validation_fraction * data.len() as f64).floor() as usize;
    let (train_idx, val_idx) = order.split_at(data.len() - val_count);
    let train_set: Vec<TrainingSequence<F>> =
        train_idx.iter().map(|&i| data[i].clone()).collect();
    let val_set: Vec<TrainingSequence<F>> = val_idx.iter().map(|&i| data[i].clone()).collect();

    let lr = F::from_f64(config.learning_rate).unwrap();
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let divergence = |epoch: usize| TnfsError::Divergence {
            epoch,
            last_finite: if epoch == 0 {
                "none".to_string()
            } else {
                (epoch - 1).to_string()
            },
        };
        let (loss, mut grads) = match loss_and_gradients(&model, &train_set) {
            Ok(pair) => pair,
            Err(TnfsError::NumericOverflow(_)) => return Err(divergence(epoch)),
            Err(e) => return Err(e),
        };
        if !loss.is_finite() {
            return Err(divergence(epoch));
        }
        let validation_mse = if val_set.is_empty() {
            None
        } else {
            Some(mse_loss(&model, &val_set)?.to_f64().unwrap())
        };
        history.push(LossReport {
            epoch,
            train_mse: loss.to_f64().unwrap(),
            validation_mse,
        });

        if let Some(clip) = config.grad_clip_norm {
            let clip = F::from_f64(clip).unwrap();
            let norm = grads.global_norm();
            if norm > clip {
                grads.scale(clip / norm);
            }
        }
        apply_step(&mut model, &grads, lr, config.freeze_output_matrix);
    }
    Ok((model, history))
}
