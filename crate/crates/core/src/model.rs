//! Model types and fuzzy inference.
//!
//! A rule reads
//!
//! ```text
//! IF x_1 is G(c,s) AND ... AND u_M is G(c,s)
//! THEN x(t+1) = A_r x(t) + B_r u(t)
//! ```
//!
//! with Gaussian membership terms on every state and input variable. Firing
//! strengths are the product of memberships, normalized across rules; the
//! aggregate update is the convex combination of the local linear models,
//! and the output is the linear readout `y = C x`. The state feeds back as
//! next step's context, which makes the network recurrent.
//!
//! A model is immutable during inference; everything here is a pure function
//! and safe to call concurrently on a shared model. Training mutates a model
//! and requires exclusive access.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, TnfsError};
use crate::linalg::{all_finite, axpy, Matrix};
use crate::{underflow_eps, width_floor, Scalar};

/// Gaussian membership term with a center and a strictly positive width.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianTerm<F> {
    pub center: F,
    pub width: F,
}

impl<F: Scalar> GaussianTerm<F> {
    pub fn new(center: F, width: F) -> Result<Self> {
        let t = GaussianTerm { center, width };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.center.is_finite() || !self.width.is_finite() {
            return Err(TnfsError::invalid("non-finite Gaussian term parameter"));
        }
        if self.width < width_floor::<F>() {
            return Err(TnfsError::invalid(format!(
                "term width {} below floor {}",
                self.width,
                width_floor::<F>()
            )));
        }
        Ok(())
    }

    /// Membership degree `exp(-(v - c)^2 / (2 s^2))`, in (0, 1].
    pub fn membership(&self, value: F) -> Result<F> {
        self.validate()?;
        if !value.is_finite() {
            return Err(TnfsError::invalid("non-finite membership input"));
        }
        Ok(self.membership_unchecked(value))
    }

    #[inline]
    pub(crate) fn membership_unchecked(&self, value: F) -> F {
        let d = value - self.center;
        let two = F::from_f64(2.0).unwrap();
        (-(d * d) / (two * self.width * self.width)).exp()
    }
}

/// One Gaussian term per state variable and one per input variable.
#[derive(Clone, Debug, PartialEq)]
pub struct RuleAntecedent<F> {
    pub state_terms: Vec<GaussianTerm<F>>,
    pub input_terms: Vec<GaussianTerm<F>>,
}

/// Local linear model: state gain `a` (N x N) and input gain `b` (N x M).
#[derive(Clone, Debug, PartialEq)]
pub struct RuleConsequent<F> {
    pub a: Matrix<F>,
    pub b: Matrix<F>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Rule<F> {
    pub antecedent: RuleAntecedent<F>,
    pub consequent: RuleConsequent<F>,
}

/// State / input / output dimensions of a model.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelDims {
    pub state: usize,
    pub input: usize,
    pub output: usize,
}

impl ModelDims {
    pub fn new(state: usize, input: usize, output: usize) -> Self {
        ModelDims { state, input, output }
    }
}

/// The full rule base plus output matrix and initial context state: the
/// single source of truth for inference and training.
#[derive(Clone, Debug, PartialEq)]
pub struct TnfsModel<F> {
    pub dims: ModelDims,
    pub rules: Vec<Rule<F>>,
    /// Readout matrix `C`, output x state.
    pub output_matrix: Matrix<F>,
    /// Context state used when a rollout is not given an explicit start.
    /// Zero unless a caller has a particular warm start.
    pub initial_state: Vec<F>,
}

/// States and outputs produced by [`TnfsModel::rollout`], one entry per step.
#[derive(Clone, Debug, PartialEq)]
pub struct Rollout<F> {
    pub states: Vec<Vec<F>>,
    pub outputs: Vec<Vec<F>>,
}

impl<F: Scalar> TnfsModel<F> {
    pub fn new(
        dims: ModelDims,
        rules: Vec<Rule<F>>,
        output_matrix: Matrix<F>,
        initial_state: Vec<F>,
    ) -> Result<Self> {
        let model = TnfsModel {
            dims,
            rules,
            output_matrix,
            initial_state,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn state_dim(&self) -> usize {
        self.dims.state
    }

    pub fn input_dim(&self) -> usize {
        self.dims.input
    }

    pub fn output_dim(&self) -> usize {
        self.dims.output
    }

    pub fn rule_count(&self) -> usize {
        self.rules.len()
    }

    /// Checks every structural invariant: at least one rule, consistent term
    /// and matrix shapes, widths at or above the floor, all entries finite.
    pub fn validate(&self) -> Result<()> {
        let ModelDims { state: n, input: m, output: p } = self.dims;
        if self.rules.is_empty() {
            return Err(TnfsError::invalid("model needs at least one rule"));
        }
        if n == 0 || p == 0 {
            return Err(TnfsError::invalid("state and output dimensions must be positive"));
        }
        for (r, rule) in self.rules.iter().enumerate() {
            let ante = &rule.antecedent;
            if ante.state_terms.len() != n || ante.input_terms.len() != m {
                return Err(TnfsError::dims(
                    format!("rule {r} antecedent"),
                    format!("{n} state terms, {m} input terms"),
                    format!(
                        "{} state terms, {} input terms",
                        ante.state_terms.len(),
                        ante.input_terms.len()
                    ),
                ));
            }
            for term in ante.state_terms.iter().chain(&ante.input_terms) {
                term.validate()?;
            }
            let cons = &rule.consequent;
            if cons.a.rows() != n || cons.a.cols() != n {
                return Err(TnfsError::dims(
                    format!("rule {r} state gain"),
                    format!("{n}x{n}"),
                    format!("{}x{}", cons.a.rows(), cons.a.cols()),
                ));
            }
            if cons.b.rows() != n || cons.b.cols() != m {
                return Err(TnfsError::dims(
                    format!("rule {r} input gain"),
                    format!("{n}x{m}"),
                    format!("{}x{}", cons.b.rows(), cons.b.cols()),
                ));
            }
            if !cons.a.is_finite() || !cons.b.is_finite() {
                return Err(TnfsError::invalid(format!(
                    "rule {r} consequent has non-finite entries"
                )));
            }
        }
        if self.output_matrix.rows() != p || self.output_matrix.cols() != n {
            return Err(TnfsError::dims(
                "output matrix",
                format!("{p}x{n}"),
                format!("{}x{}", self.output_matrix.rows(), self.output_matrix.cols()),
            ));
        }
        if !self.output_matrix.is_finite() {
            return Err(TnfsError::invalid("output matrix has non-finite entries"));
        }
        if self.initial_state.len() != n || !all_finite(&self.initial_state) {
            return Err(TnfsError::invalid("initial state must be a finite N-vector"));
        }
        Ok(())
    }

    fn check_state_input(&self, x: &[F], u: &[F]) -> Result<()> {
        if x.len() != self.dims.state || u.len() != self.dims.input {
            return Err(TnfsError::dims(
                "state/input vectors",
                format!("{}/{}", self.dims.state, self.dims.input),
                format!("{}/{}", x.len(), u.len()),
            ));
        }
        if !all_finite(x) || !all_finite(u) {
            return Err(TnfsError::invalid("non-finite state or input"));
        }
        Ok(())
    }

    /// Firing strength of every rule: the product of all state and input
    /// memberships. Each entry lies in (0, 1] barring underflow to zero.
    pub fn firing_strengths(&self, x: &[F], u: &[F]) -> Result<Vec<F>> {
        self.check_state_input(x, u)?;
        Ok(self
            .rules
            .iter()
            .map(|rule| rule_firing(rule, x, u))
            .collect())
    }

    /// Blends rule consequents with weights `h` into aggregate `(A, B)`.
    pub fn aggregate_parameters(&self, h: &[F]) -> Result<(Matrix<F>, Matrix<F>)> {
        if h.len() != self.rules.len() {
            return Err(TnfsError::dims(
                "rule weights",
                self.rules.len().to_string(),
                h.len().to_string(),
            ));
        }
        let mut a = Matrix::zeros(self.dims.state, self.dims.state);
        let mut b = Matrix::zeros(self.dims.state, self.dims.input);
        for (w, rule) in h.iter().zip(&self.rules) {
            a.add_scaled(&rule.consequent.a, *w);
            b.add_scaled(&rule.consequent.b, *w);
        }
        Ok((a, b))
    }

    /// One inference step: `x(t+1) = sum_r h_r (A_r x + B_r u)`.
    pub fn state_transition(&self, x: &[F], u: &[F]) -> Result<Vec<F>> {
        let f = self.firing_strengths(x, u)?;
        let h = normalize_strengths(&f)?;
        Ok(self.step_with_weights(&h, x, u))
    }

    pub(crate) fn step_with_weights(&self, h: &[F], x: &[F], u: &[F]) -> Vec<F> {
        let mut next = vec![F::zero(); self.dims.state];
        for (w, rule) in h.iter().zip(&self.rules) {
            let local = rule_local_step(rule, x, u);
            axpy(&mut next, &local, *w);
        }
        next
    }

    /// Readout `y = C x`.
    pub fn output_projection(&self, x: &[F]) -> Result<Vec<F>> {
        if x.len() != self.dims.state {
            return Err(TnfsError::dims(
                "output projection state",
                self.dims.state.to_string(),
                x.len().to_string(),
            ));
        }
        if !all_finite(x) {
            return Err(TnfsError::invalid("non-finite state"));
        }
        Ok(self.output_matrix.matvec(x))
    }

    /// Recurrent multi-step rollout: each step's state is fed back as the
    /// next step's context. `states[t]` is the state *after* consuming
    /// `inputs[t]`, and `outputs[t]` its readout.
    pub fn rollout(&self, inputs: &[Vec<F>], x_init: Option<&[F]>) -> Result<Rollout<F>> {
        self.validate()?;
        if inputs.is_empty() {
            return Err(TnfsError::invalid("rollout needs at least one input step"));
        }
        let mut x = match x_init {
            Some(x0) => {
                if x0.len() != self.dims.state {
                    return Err(TnfsError::dims(
                        "rollout initial state",
                        self.dims.state.to_string(),
                        x0.len().to_string(),
                    ));
                }
                x0.to_vec()
            }
            None => self.initial_state.clone(),
        };
        let mut states = Vec::with_capacity(inputs.len());
        let mut outputs = Vec::with_capacity(inputs.len());
        for u in inputs {
            x = self.state_transition(&x, u)?;
            outputs.push(self.output_projection(&x)?);
            states.push(x.clone());
        }
        Ok(Rollout { states, outputs })
    }

    /// Clamps every antecedent width up to the floor. Called after each
    /// training update.
    pub fn clamp_widths(&mut self) {
        let floor = width_floor::<F>();
        for rule in &mut self.rules {
            for term in rule
                .antecedent
                .state_terms
                .iter_mut()
                .chain(&mut rule.antecedent.input_terms)
            {
                if term.width < floor {
                    term.width = floor;
                }
            }
        }
    }

    /// Seeded random model for fuzz suites and gradient checks: antecedent
    /// centers in [-1.5, 1.5], widths in [0.4, 1.6], consequent and readout
    /// entries in [-0.8, 0.8], zero initial state.
    pub fn sample(dims: ModelDims, rule_count: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut next = |lo: f64, hi: f64| F::from_f64(rng.random_range(lo..hi)).unwrap();
        let rules = (0..rule_count)
            .map(|_| {
                let state_terms = (0..dims.state)
                    .map(|_| GaussianTerm {
                        center: next(-1.5, 1.5),
                        width: next(0.4, 1.6),
                    })
                    .collect();
                let input_terms = (0..dims.input)
                    .map(|_| GaussianTerm {
                        center: next(-1.5, 1.5),
                        width: next(0.4, 1.6),
                    })
                    .collect();
                let a = Matrix::from_vec(
                    dims.state,
                    dims.state,
                    (0..dims.state * dims.state).map(|_| next(-0.8, 0.8)).collect(),
                )
                .unwrap();
                let b = Matrix::from_vec(
                    dims.state,
                    dims.input,
                    (0..dims.state * dims.input).map(|_| next(-0.8, 0.8)).collect(),
                )
                .unwrap();
                Rule {
                    antecedent: RuleAntecedent { state_terms, input_terms },
                    consequent: RuleConsequent { a, b },
                }
            })
            .collect();
        let output_matrix = Matrix::from_vec(
            dims.output,
            dims.state,
            (0..dims.output * dims.state).map(|_| next(-0.8, 0.8)).collect(),
        )
        .unwrap();
        TnfsModel {
            dims,
            rules,
            output_matrix,
            initial_state: vec![F::zero(); dims.state],
        }
    }
}

fn rule_firing<F: Scalar>(rule: &Rule<F>, x: &[F], u: &[F]) -> F {
    let mut f = F::one();
    for (term, &v) in rule.antecedent.state_terms.iter().zip(x) {
        f = f * term.membership_unchecked(v);
    }
    for (term, &v) in rule.antecedent.input_terms.iter().zip(u) {
        f = f * term.membership_unchecked(v);
    }
    f
}

fn rule_local_step<F: Scalar>(rule: &Rule<F>, x: &[F], u: &[F]) -> Vec<F> {
    let mut z = rule.consequent.a.matvec(x);
    let bu = rule.consequent.b.matvec(u);
    axpy(&mut z, &bu, F::one());
    z
}

/// Normalizes firing strengths to convex weights `h_r = f_r / sum(f)`.
///
/// When the whole sum underflows below [`crate::UNDERFLOW_EPS`] (the input
/// is far from every rule), returns the uniform vector so the step stays
/// total and bounded.
pub fn normalize_strengths<F: Scalar>(f: &[F]) -> Result<Vec<F>> {
    if f.is_empty() {
        return Err(TnfsError::invalid("empty firing-strength vector"));
    }
    if f.iter().any(|v| !v.is_finite() || *v < F::zero()) {
        return Err(TnfsError::invalid(
            "firing strengths must be finite and non-negative",
        ));
    }
    let s: F = f.iter().copied().sum();
    if s < underflow_eps::<F>() {
        let uniform = F::one() / F::from_usize(f.len()).unwrap();
        return Ok(vec![uniform; f.len()]);
    }
    Ok(f.iter().map(|&v| v / s).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn single_rule_model(a: Matrix<f64>, b: Matrix<f64>, c: Matrix<f64>) -> TnfsModel<f64> {
        let n = a.rows();
        let m = b.cols();
        let p = c.rows();
        let term = |center: f64| GaussianTerm { center, width: 1.0 };
        TnfsModel::new(
            ModelDims::new(n, m, p),
            vec![Rule {
                antecedent: RuleAntecedent {
                    state_terms: (0..n).map(|_| term(0.0)).collect(),
                    input_terms: (0..m).map(|_| term(0.0)).collect(),
                },
                consequent: RuleConsequent { a, b },
            }],
            c,
            vec![0.0; n],
        )
        .unwrap()
    }

    #[test]
    fn membership_at_center_is_one() {
        let t = GaussianTerm::new(3.5, 0.8).unwrap();
        assert_eq!(t.membership(3.5).unwrap(), 1.0);
    }

    #[test]
    fn membership_one_sigma() {
        // exp(-0.5) evaluated independently
        let t = GaussianTerm::new(0.0, 1.0).unwrap();
        assert_abs_diff_eq!(t.membership(1.0).unwrap(), 0.6065306597126334, epsilon = 1e-15);
    }

    #[test]
    fn membership_wide_term_saturates() {
        let t = GaussianTerm::new(0.0, 1e9).unwrap();
        assert_abs_diff_eq!(t.membership(5.0).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn membership_rejects_bad_args() {
        assert!(GaussianTerm::new(0.0, 1e-4).is_err());
        let t = GaussianTerm::new(0.0, 1.0).unwrap();
        assert!(t.membership(f64::NAN).is_err());
    }

    #[test]
    fn firing_is_product_of_memberships() {
        // both memberships 0.5: value sqrt(2 ln 2) away at width 1
        let v = (2.0f64 * std::f64::consts::LN_2).sqrt();
        let model = single_rule_model(
            Matrix::identity(1),
            Matrix::zeros(1, 1),
            Matrix::identity(1),
        );
        let f = model.firing_strengths(&[v], &[v]).unwrap();
        assert_abs_diff_eq!(f[0], 0.25, epsilon = 1e-12);
    }

    #[test]
    fn firing_at_centers_is_one_and_symmetric() {
        let mut model = TnfsModel::sample(ModelDims::new(2, 1, 1), 2, 7);
        // duplicate rule 0's antecedent into rule 1
        model.rules[1].antecedent = model.rules[0].antecedent.clone();
        let x = vec![0.3, -0.4];
        let u = vec![0.9];
        let f = model.firing_strengths(&x, &u).unwrap();
        assert_eq!(f[0], f[1]);

        // at its own centers every membership is 1
        let centers_x: Vec<f64> = model.rules[0]
            .antecedent
            .state_terms
            .iter()
            .map(|t| t.center)
            .collect();
        let centers_u: Vec<f64> = model.rules[0]
            .antecedent
            .input_terms
            .iter()
            .map(|t| t.center)
            .collect();
        let f = model.firing_strengths(&centers_x, &centers_u).unwrap();
        assert_eq!(f[0], 1.0);
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_strengths(&[2.0, 2.0]).unwrap(), vec![0.5, 0.5]);
        assert_eq!(normalize_strengths(&[1.0, 3.0]).unwrap(), vec![0.25, 0.75]);
        // degenerate sum falls back to uniform
        assert_eq!(normalize_strengths(&[0.0, 0.0]).unwrap(), vec![0.5, 0.5]);
        assert!(normalize_strengths(&[-1.0, 2.0]).is_err());
        assert!(normalize_strengths::<f64>(&[]).is_err());
    }

    #[test]
    fn aggregate_unit_weight_returns_rule_matrices() {
        let a = Matrix::from_rows(&[vec![0.5, 0.1], vec![0.0, 0.3]]).unwrap();
        let b = Matrix::from_rows(&[vec![1.0], vec![2.0]]).unwrap();
        let model = single_rule_model(a.clone(), b.clone(), Matrix::identity(2));
        let (ag, bg) = model.aggregate_parameters(&[1.0]).unwrap();
        assert_eq!(ag, a);
        assert_eq!(bg, b);
    }

    #[test]
    fn aggregate_convex_combination() {
        let mut model = TnfsModel::sample(ModelDims::new(2, 1, 1), 2, 3);
        model.rules[0].consequent.a = Matrix::identity(2);
        let mut three = Matrix::identity(2);
        three.scale(3.0);
        model.rules[1].consequent.a = three;
        let (a, _) = model.aggregate_parameters(&[0.5, 0.5]).unwrap();
        assert_abs_diff_eq!(a[(0, 0)], 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(a[(1, 1)], 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(a[(0, 1)], 0.0, epsilon = 1e-15);
        assert!(model.aggregate_parameters(&[1.0]).is_err());
    }

    #[test]
    fn state_transition_hand_example() {
        let a = Matrix::from_rows(&[vec![0.5, 0.0], vec![0.0, 0.5]]).unwrap();
        let b = Matrix::from_rows(&[vec![1.0], vec![0.0]]).unwrap();
        let model = single_rule_model(a, b, Matrix::identity(2));
        let next = model.state_transition(&[2.0, 4.0], &[1.0]).unwrap();
        assert_abs_diff_eq!(next[0], 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(next[1], 2.0, epsilon = 1e-15);
    }

    #[test]
    fn identical_consequents_ignore_weights() {
        let mut model = TnfsModel::sample(ModelDims::new(2, 2, 1), 3, 11);
        let cons = model.rules[0].consequent.clone();
        for rule in &mut model.rules {
            rule.consequent = cons.clone();
        }
        let x = vec![0.2, -0.7];
        let u = vec![1.1, 0.4];
        let got = model.state_transition(&x, &u).unwrap();
        let mut expect = cons.a.matvec(&x);
        axpy(&mut expect, &cons.b.matvec(&u), 1.0);
        for (g, e) in got.iter().zip(&expect) {
            assert_abs_diff_eq!(g, e, epsilon = 1e-12);
        }
    }

    #[test]
    fn output_projection_examples() {
        let model = single_rule_model(
            Matrix::identity(2),
            Matrix::zeros(2, 1),
            Matrix::from_rows(&[vec![1.0, 1.0]]).unwrap(),
        );
        assert_eq!(model.output_projection(&[2.0, 3.0]).unwrap(), vec![5.0]);
        let zero_c = single_rule_model(
            Matrix::identity(2),
            Matrix::zeros(2, 1),
            Matrix::zeros(1, 2),
        );
        assert_eq!(zero_c.output_projection(&[2.0, 3.0]).unwrap(), vec![0.0]);
        assert!(model.output_projection(&[1.0]).is_err());
    }

    #[test]
    fn rollout_geometric_decay() {
        let a = Matrix::from_rows(&[vec![0.5]]).unwrap();
        let model = single_rule_model(a, Matrix::zeros(1, 1), Matrix::identity(1));
        let inputs = vec![vec![0.0]; 3];
        let roll = model.rollout(&inputs, Some(&[8.0])).unwrap();
        assert_eq!(roll.states, vec![vec![4.0], vec![2.0], vec![1.0]]);
        assert_eq!(roll.outputs, vec![vec![4.0], vec![2.0], vec![1.0]]);
    }

    #[test]
    fn rollout_zero_state_zero_drive() {
        let model = single_rule_model(
            Matrix::identity(2),
            Matrix::zeros(2, 1),
            Matrix::identity(2),
        );
        let roll = model.rollout(&vec![vec![1.0]; 4], None).unwrap();
        for s in &roll.states {
            assert_eq!(s, &vec![0.0, 0.0]);
        }
        assert!(model.rollout(&[], None).is_err());
    }

    #[test]
    fn duplicated_rule_matches_single_rule() {
        let mut single = TnfsModel::sample(ModelDims::new(2, 1, 2), 1, 5);
        single.initial_state = vec![0.1, -0.2];
        let mut doubled = single.clone();
        doubled.rules.push(doubled.rules[0].clone());
        let inputs: Vec<Vec<f64>> = (0..6).map(|i| vec![(i as f64) * 0.3 - 1.0]).collect();
        let a = single.rollout(&inputs, None).unwrap();
        let b = doubled.rollout(&inputs, None).unwrap();
        for (sa, sb) in a.states.iter().zip(&b.states) {
            for (x, y) in sa.iter().zip(sb) {
                assert_abs_diff_eq!(x, y, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn rollout_is_deterministic_and_thread_safe() {
        let model = TnfsModel::<f64>::sample(ModelDims::new(3, 2, 2), 4, 99);
        let inputs: Vec<Vec<f64>> = (0..20)
            .map(|i| vec![(i as f64 * 0.37).sin(), (i as f64 * 0.71).cos()])
            .collect();
        let base = model.rollout(&inputs, None).unwrap();
        std::thread::scope(|scope| {
            let handles: Vec<_> = (0..4)
                .map(|_| scope.spawn(|| model.rollout(&inputs, None).unwrap()))
                .collect();
            for h in handles {
                assert_eq!(h.join().unwrap(), base);
            }
        });
    }

    #[test]
    fn validate_rejects_bad_shapes() {
        let mut model = TnfsModel::<f64>::sample(ModelDims::new(2, 1, 1), 2, 1);
        model.rules[0].antecedent.state_terms.pop();
        assert!(model.validate().is_err());

        let mut model = TnfsModel::<f64>::sample(ModelDims::new(2, 1, 1), 2, 1);
        model.output_matrix = Matrix::zeros(2, 2);
        assert!(model.validate().is_err());

        let mut model = TnfsModel::<f64>::sample(ModelDims::new(2, 1, 1), 2, 1);
        model.rules.clear();
        assert!(model.validate().is_err());
    }
}
