//! Rule-base initialization from data by fuzzy C-means.
//!
//! Numeric data is granulated by FCM; the cluster count (picked by a
//! Xie-Beni validity scan or fixed by the caller) becomes the rule count,
//! cluster centers become Gaussian antecedent centers, and the fuzzy scatter
//! around each center becomes the term widths.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, TnfsError};
use crate::linalg::{squared_distance, Matrix};
use crate::model::{GaussianTerm, ModelDims, Rule, RuleAntecedent, TnfsModel};
use crate::seed::{stage_seed, value_seed};
use crate::train::{default_consequent, default_output_matrix};
use crate::{width_floor, Scalar};

#[derive(Clone, Debug)]
pub struct ClusterConfig {
    pub cluster_count: usize,
    /// Fuzzifier exponent, strictly greater than one.
    pub fuzzifier_m: f64,
    /// Convergence threshold on the largest center displacement.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub seed: u64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            cluster_count: 4,
            fuzzifier_m: 2.0,
            tolerance: 1e-6,
            max_iterations: 300,
            seed: 0,
        }
    }
}

impl ClusterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.cluster_count == 0 {
            return Err(TnfsError::invalid("cluster count must be >= 1"));
        }
        if !(self.fuzzifier_m > 1.0) || !self.fuzzifier_m.is_finite() {
            return Err(TnfsError::invalid("fuzzifier must be finite and > 1"));
        }
        if !(self.tolerance > 0.0) {
            return Err(TnfsError::invalid("tolerance must be positive"));
        }
        if self.max_iterations == 0 {
            return Err(TnfsError::invalid("max iterations must be >= 1"));
        }
        Ok(())
    }
}

/// FCM output: centers (c x d), the row-stochastic membership matrix
/// (n x c), and the objective value after every iteration.
#[derive(Clone, Debug)]
pub struct ClusterResult<F> {
    pub centers: Matrix<F>,
    pub memberships: Matrix<F>,
    pub objective_history: Vec<F>,
    pub iterations_used: usize,
}

fn check_data<F: Scalar>(data: &Matrix<F>) -> Result<()> {
    if data.rows() == 0 || data.cols() == 0 {
        return Err(TnfsError::invalid("empty data matrix"));
    }
    if !data.is_finite() {
        return Err(TnfsError::invalid("data contains non-finite values"));
    }
    Ok(())
}

/// Memberships of one point given squared distances to every center, in
/// log space so extreme distance ratios cannot overflow. A coincident
/// point/center pair gets full membership on the first coincident center.
fn point_memberships<F: Scalar>(sq_dists: &[F], fuzzifier_m: f64) -> Vec<F> {
    if let Some(hit) = sq_dists.iter().position(|d| *d == F::zero()) {
        let mut u = vec![F::zero(); sq_dists.len()];
        u[hit] = F::one();
        return u;
    }
    let exponent = F::from_f64(1.0 / (fuzzifier_m - 1.0)).unwrap();
    let logs: Vec<F> = sq_dists.iter().map(|d| -exponent * d.ln()).collect();
    let lmax = logs.iter().fold(F::neg_infinity(), |m, &l| m.max(l));
    let weights: Vec<F> = logs.iter().map(|&l| (l - lmax).exp()).collect();
    let sum: F = weights.iter().copied().sum();
    weights.into_iter().map(|w| w / sum).collect()
}

fn objective<F: Scalar>(
    data: &Matrix<F>,
    centers: &Matrix<F>,
    memberships: &Matrix<F>,
    fuzzifier_m: f64,
) -> F {
    let m = F::from_f64(fuzzifier_m).unwrap();
    let mut j = F::zero();
    for k in 0..data.rows() {
        let x = data.row(k);
        for i in 0..centers.rows() {
            let u = memberships[(k, i)];
            if u > F::zero() {
                j = j + u.powf(m) * squared_distance(x, centers.row(i));
            }
        }
    }
    j
}

fn update_memberships<F: Scalar>(
    data: &Matrix<F>,
    centers: &Matrix<F>,
    fuzzifier_m: f64,
) -> Matrix<F> {
    let (n, c) = (data.rows(), centers.rows());
    let mut u = Matrix::zeros(n, c);
    let mut sq = vec![F::zero(); c];
    for k in 0..n {
        let x = data.row(k);
        for (i, s) in sq.iter_mut().enumerate() {
            *s = squared_distance(x, centers.row(i));
        }
        for (i, v) in point_memberships(&sq, fuzzifier_m).into_iter().enumerate() {
            u[(k, i)] = v;
        }
    }
    u
}

fn update_centers<F: Scalar>(
    data: &Matrix<F>,
    memberships: &Matrix<F>,
    previous: &Matrix<F>,
    fuzzifier_m: f64,
) -> Matrix<F> {
    let (n, d) = (data.rows(), data.cols());
    let c = previous.rows();
    let m = F::from_f64(fuzzifier_m).unwrap();
    let mut centers = Matrix::zeros(c, d);
    for i in 0..c {
        let mut num = vec![F::zero(); d];
        let mut den = F::zero();
        for k in 0..n {
            let w = memberships[(k, i)].powf(m);
            if w > F::zero() {
                den = den + w;
                for (nj, &xj) in num.iter_mut().zip(data.row(k)) {
                    *nj = *nj + w * xj;
                }
            }
        }
        if den > F::zero() {
            for (j, nj) in num.into_iter().enumerate() {
                centers[(i, j)] = nj / den;
            }
        } else {
            // No fuzzy mass reaches this center; leave it where it was.
            for j in 0..d {
                centers[(i, j)] = previous[(i, j)];
            }
        }
    }
    centers
}

/// Standard fuzzy C-means with seeded initialization from distinct data
/// points. The objective is non-increasing across the recorded history.
pub fn fcm<F: Scalar>(data: &Matrix<F>, config: &ClusterConfig) -> Result<ClusterResult<F>> {
    config.validate()?;
    check_data(data)?;
    let (n, c) = (data.rows(), config.cluster_count);
    if n < c {
        return Err(TnfsError::invalid(format!(
            "cannot form {c} clusters from {n} points"
        )));
    }

    // Distinct rows, keeping first-occurrence order.
    let mut distinct_rows: Vec<usize> = Vec::new();
    for k in 0..n {
        if !distinct_rows.iter().any(|&j| data.row(j) == data.row(k)) {
            distinct_rows.push(k);
        }
    }
    if distinct_rows.len() < c {
        return Err(TnfsError::DegenerateData(format!(
            "only {} distinct points for {c} clusters",
            distinct_rows.len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    distinct_rows.shuffle(&mut rng);
    let mut centers = Matrix::zeros(c, data.cols());
    for (i, &k) in distinct_rows.iter().take(c).enumerate() {
        for (j, &v) in data.row(k).iter().enumerate() {
            centers[(i, j)] = v;
        }
    }

    let tol = F::from_f64(config.tolerance).unwrap();
    let mut history = Vec::new();
    let mut iterations_used = 0;
    for _ in 0..config.max_iterations {
        let u = update_memberships(data, &centers, config.fuzzifier_m);
        let new_centers = update_centers(data, &u, &centers, config.fuzzifier_m);
        history.push(objective(data, &new_centers, &u, config.fuzzifier_m));
        let shift = (0..c)
            .map(|i| squared_distance(centers.row(i), new_centers.row(i)).sqrt())
            .fold(F::zero(), |m, s| m.max(s));
        centers = new_centers;
        iterations_used += 1;
        if shift < tol {
            break;
        }
    }
    // Re-derive memberships for the final centers so the two halves of the
    // result agree; this is one more descent half-step.
    let memberships = update_memberships(data, &centers, config.fuzzifier_m);
    history.push(objective(data, &centers, &memberships, config.fuzzifier_m));

    Ok(ClusterResult {
        centers,
        memberships,
        objective_history: history,
        iterations_used,
    })
}

/// Xie-Beni validity index: objective over `n * min squared center
/// separation`. Lower is better; coincident centers yield infinity.
pub fn validity_index<F: Scalar>(
    data: &Matrix<F>,
    result: &ClusterResult<F>,
    fuzzifier_m: f64,
) -> Result<F> {
    let c = result.centers.rows();
    if c < 2 {
        return Err(TnfsError::UndefinedIndex(
            "no inter-center separation with fewer than two clusters".into(),
        ));
    }
    if result.memberships.rows() != data.rows() {
        return Err(TnfsError::dims(
            "validity index memberships",
            data.rows().to_string(),
            result.memberships.rows().to_string(),
        ));
    }
    let j = objective(data, &result.centers, &result.memberships, fuzzifier_m);
    let mut min_sep = F::infinity();
    for i in 0..c {
        for k in (i + 1)..c {
            min_sep = min_sep.min(squared_distance(result.centers.row(i), result.centers.row(k)));
        }
    }
    if min_sep == F::zero() {
        return Ok(F::infinity());
    }
    Ok(j / (F::from_usize(data.rows()).unwrap() * min_sep))
}

/// Runs FCM for every candidate count in `[c_min, c_max]` (same seed for
/// each) and reports the validity index per candidate.
pub fn scan_cluster_counts<F: Scalar>(
    data: &Matrix<F>,
    c_min: usize,
    c_max: usize,
    config: &ClusterConfig,
) -> Result<Vec<(usize, F)>> {
    if c_min < 2 || c_min > c_max || c_max > data.rows() {
        return Err(TnfsError::invalid(format!(
            "cluster-count range [{c_min}, {c_max}] invalid for {} points",
            data.rows()
        )));
    }
    let mut table = Vec::with_capacity(c_max - c_min + 1);
    for c in c_min..=c_max {
        let cfg = ClusterConfig {
            cluster_count: c,
            ..config.clone()
        };
        let result = fcm(data, &cfg)?;
        table.push((c, validity_index(data, &result, config.fuzzifier_m)?));
    }
    Ok(table)
}

/// Picks the candidate count minimizing the validity index, ties broken
/// toward the smaller count.
pub fn select_cluster_count<F: Scalar>(
    data: &Matrix<F>,
    c_min: usize,
    c_max: usize,
    config: &ClusterConfig,
) -> Result<usize> {
    let table = scan_cluster_counts(data, c_min, c_max, config)?;
    let mut best = table[0];
    for &(c, score) in &table[1..] {
        if score < best.1 {
            best = (c, score);
        }
    }
    Ok(best.0)
}

/// Builds a model with one rule per cluster. The cluster space must be the
/// concatenated state-and-input feature space (`d = N + M`); each center
/// splits into state and input antecedent centers and each width is the
/// fuzzy standard deviation around the center, clamped to the width floor.
/// Consequents and the readout follow the default training initialization;
/// their random draws are seeded by the *content* of each cluster center,
/// so relabeling clusters permutes rules without changing them.
pub fn rules_from_clusters<F: Scalar>(
    result: &ClusterResult<F>,
    data: &Matrix<F>,
    dims: ModelDims,
    fuzzifier_m: f64,
    seed: u64,
) -> Result<TnfsModel<F>> {
    let d = data.cols();
    if d != dims.state + dims.input {
        return Err(TnfsError::dims(
            "cluster feature space",
            format!("{} (= N + M)", dims.state + dims.input),
            d.to_string(),
        ));
    }
    if result.centers.cols() != d || result.memberships.rows() != data.rows() {
        return Err(TnfsError::invalid(
            "cluster result inconsistent with data matrix",
        ));
    }
    let c = result.centers.rows();
    let m = F::from_f64(fuzzifier_m).unwrap();
    let floor = width_floor::<F>();

    let mut rules = Vec::with_capacity(c);
    for i in 0..c {
        let center = result.centers.row(i);
        // Fuzzy scatter per coordinate.
        let mut num = vec![F::zero(); d];
        let mut den = F::zero();
        for k in 0..data.rows() {
            let w = result.memberships[(k, i)].powf(m);
            if w > F::zero() {
                den = den + w;
                for (j, (&xj, &vj)) in data.row(k).iter().zip(center).enumerate() {
                    num[j] = num[j] + w * (xj - vj) * (xj - vj);
                }
            }
        }
        let width = |j: usize| {
            if den > F::zero() {
                (num[j] / den).sqrt().max(floor)
            } else {
                floor
            }
        };
        let state_terms = (0..dims.state)
            .map(|j| GaussianTerm {
                center: center[j],
                width: width(j),
            })
            .collect();
        let input_terms = (0..dims.input)
            .map(|j| GaussianTerm {
                center: center[dims.state + j],
                width: width(dims.state + j),
            })
            .collect();
        let center_f64: Vec<f64> = center.iter().map(|v| v.to_f64().unwrap()).collect();
        let mut rule_rng = ChaCha8Rng::seed_from_u64(value_seed(seed, &center_f64));
        rules.push(Rule {
            antecedent: RuleAntecedent {
                state_terms,
                input_terms,
            },
            consequent: default_consequent(dims, &mut rule_rng),
        });
    }
    let mut out_rng = ChaCha8Rng::seed_from_u64(stage_seed(seed, "output-matrix", 0));
    TnfsModel::new(
        dims,
        rules,
        default_output_matrix(dims, &mut out_rng),
        vec![F::zero(); dims.state],
    )
}
