//! Structural outcome model with interference.
//!
//! Each outcome is an affine function of neighborhood spillover features,
//! with coefficient vectors dotted against the set's group-proportion vector:
//!
//! ```text
//! E_ik(z) = (alpha_k . rho_i) * maxCalc_i(z)
//!         + (beta_k  . rho_i) * maxAP_i
//!         + (gamma_k . rho_i) * f_i
//!         + (theta_k . rho_i)
//! ```
//!
//! where `maxCalc_i(z) = max_{j in N(i)} s(i,j) * (c_j or z_j)` and
//! `maxAP_i = max_{j in N(i)} s(i,j) * p_j`. The disaggregated form has one
//! equation per group; the aggregate form has a single equation for the
//! pooled outcome (used by the counterfactual-privilege comparison mode).
//!
//! All prediction paths route through [`Evaluator`] so that solvers, the
//! feasibility checker, and [`predict`] produce bit-identical numbers.

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{CoreError, Result};
use crate::scenario::{NeighborStructure, Scenario};

/// Binary intervention assignment over the scenario's sets.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct InterventionVector(pub Vec<bool>);

impl InterventionVector {
    pub fn zeros(m: usize) -> Self {
        InterventionVector(vec![false; m])
    }

    pub fn from_indices(m: usize, selected: &[usize]) -> Self {
        let mut z = vec![false; m];
        for &i in selected {
            z[i] = true;
        }
        InterventionVector(z)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn ones(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn selected_indices(&self) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
            .collect()
    }

    pub fn bitstring(&self) -> String {
        self.0.iter().map(|&b| if b { '1' } else { '0' }).collect()
    }
}

/// Per-set feature bundle at a given intervention vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    pub max_calc: Vec<f64>,
    pub max_ap: Vec<f64>,
    pub counselors: Vec<f64>,
    pub proportions: Vec<Vec<f64>>,
}

fn max_calc_one(neighbors: &[(usize, f64)], calc: &[bool], z: &[bool]) -> f64 {
    let mut best = 0.0f64;
    for &(j, s) in neighbors {
        if calc[j] || z[j] {
            best = best.max(s);
        }
    }
    best
}

/// Build the spillover features for intervention vector `z`.
pub fn build_features(
    scenario: &Scenario,
    neighbors: &NeighborStructure,
    z: &InterventionVector,
) -> Result<Features> {
    let m = scenario.num_sets();
    if z.len() != m {
        return Err(CoreError::Dimension(format!(
            "intervention vector length {} != number of sets {}",
            z.len(),
            m
        )));
    }
    let calc: Vec<bool> = scenario.sets.iter().map(|s| s.offers_calc).collect();
    let ap: Vec<bool> = scenario.sets.iter().map(|s| s.offers_ap).collect();
    let mut max_calc = Vec::with_capacity(m);
    let mut max_ap = Vec::with_capacity(m);
    for i in 0..m {
        let list = neighbors.neighbors(i);
        max_calc.push(max_calc_one(list, &calc, &z.0));
        let mut best = 0.0f64;
        for &(j, s) in list {
            if ap[j] {
                best = best.max(s);
            }
        }
        max_ap.push(best);
    }
    Ok(Features {
        max_calc,
        max_ap,
        counselors: scenario.sets.iter().map(|s| s.counselors).collect(),
        proportions: (0..m).map(|i| scenario.proportions(i).to_vec()).collect(),
    })
}

/// Per-outcome fit quality numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct FitDiagnostics {
    pub rss: f64,
    pub rank: usize,
    pub condition: f64,
}

/// One structural equation: four coefficient vectors over the categories.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeEquation {
    pub label: String,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub theta: Vec<f64>,
    pub diagnostics: FitDiagnostics,
}

impl OutcomeEquation {
    pub fn zero(label: impl Into<String>, r: usize) -> Self {
        OutcomeEquation {
            label: label.into(),
            alpha: vec![0.0; r],
            beta: vec![0.0; r],
            gamma: vec![0.0; r],
            theta: vec![0.0; r],
            diagnostics: FitDiagnostics {
                rss: 0.0,
                rank: 0,
                condition: 0.0,
            },
        }
    }
}

/// Fitted structural model: one equation per outcome column.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel {
    /// Category labels the coefficient vectors are indexed by.
    pub categories: Vec<String>,
    pub outcomes: Vec<OutcomeEquation>,
}

impl FittedModel {
    /// Aggregate models carry a single pooled-outcome equation.
    pub fn is_aggregate(&self) -> bool {
        self.outcomes.len() == 1
    }

    fn check_shapes(&self) -> Result<()> {
        let r = self.categories.len();
        for eq in &self.outcomes {
            if eq.alpha.len() != r
                || eq.beta.len() != r
                || eq.gamma.len() != r
                || eq.theta.len() != r
            {
                return Err(CoreError::Dimension(format!(
                    "outcome `{}` coefficient vectors must have length {}",
                    eq.label, r
                )));
            }
            let finite = eq
                .alpha
                .iter()
                .chain(&eq.beta)
                .chain(&eq.gamma)
                .chain(&eq.theta)
                .all(|v| v.is_finite());
            if !finite {
                return Err(CoreError::Dimension(format!(
                    "outcome `{}` has non-finite coefficients",
                    eq.label
                )));
            }
        }
        Ok(())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

#[inline]
fn baseline_term(beta_dot: f64, ap: f64, gamma_dot: f64, f: f64, theta_dot: f64) -> f64 {
    (beta_dot * ap + gamma_dot * f) + theta_dot
}

#[inline]
fn cell_value(alpha_dot: f64, max_calc: f64, baseline: f64) -> f64 {
    alpha_dot * max_calc + baseline
}

/// Precompiled prediction context shared by `predict`, the feasibility
/// checker, and every solver, so their arithmetic is identical.
pub struct Evaluator {
    pub(crate) num_sets: usize,
    pub(crate) num_outcomes: usize,
    /// `slope[k][i] = alpha_k . rho_i`
    pub(crate) slope: Vec<Vec<f64>>,
    /// z-independent part of each cell
    pub(crate) baseline: Vec<Vec<f64>>,
    pub(crate) neighbor_lists: Vec<Vec<(usize, f64)>>,
    pub(crate) calc: Vec<bool>,
}

impl Evaluator {
    pub fn new(
        model: &FittedModel,
        scenario: &Scenario,
        neighbors: &NeighborStructure,
    ) -> Result<Self> {
        if model.categories != scenario.groups {
            return Err(CoreError::GroupMismatch {
                model: model.categories.clone(),
                scenario: scenario.groups.clone(),
            });
        }
        model.check_shapes()?;
        let features = build_features(
            scenario,
            neighbors,
            &InterventionVector::zeros(scenario.num_sets()),
        )?;
        let m = scenario.num_sets();
        let mut slope = Vec::with_capacity(model.outcomes.len());
        let mut baseline = Vec::with_capacity(model.outcomes.len());
        for eq in &model.outcomes {
            let mut a_row = Vec::with_capacity(m);
            let mut b_row = Vec::with_capacity(m);
            for i in 0..m {
                let rho = scenario.proportions(i);
                a_row.push(dot(&eq.alpha, rho));
                b_row.push(baseline_term(
                    dot(&eq.beta, rho),
                    features.max_ap[i],
                    dot(&eq.gamma, rho),
                    features.counselors[i],
                    dot(&eq.theta, rho),
                ));
            }
            slope.push(a_row);
            baseline.push(b_row);
        }
        Ok(Evaluator {
            num_sets: m,
            num_outcomes: model.outcomes.len(),
            slope,
            baseline,
            neighbor_lists: (0..m).map(|i| neighbors.neighbors(i).to_vec()).collect(),
            calc: scenario.sets.iter().map(|s| s.offers_calc).collect(),
        })
    }

    pub fn max_calc(&self, z: &[bool]) -> Vec<f64> {
        (0..self.num_sets)
            .map(|i| max_calc_one(&self.neighbor_lists[i], &self.calc, z))
            .collect()
    }

    pub fn expected_from_max_calc(&self, max_calc: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(self.num_sets, self.num_outcomes, |i, k| {
            cell_value(self.slope[k][i], max_calc[i], self.baseline[k][i])
        })
    }

    pub fn expected(&self, z: &[bool]) -> DMatrix<f64> {
        self.expected_from_max_calc(&self.max_calc(z))
    }
}

/// Expected outcomes under intervention `z`, one column per model outcome.
///
/// Values are not clamped to `[0, 1]`; use [`out_of_range_warning`] to record
/// when predictions leave the unit interval.
pub fn predict(
    model: &FittedModel,
    scenario: &Scenario,
    neighbors: &NeighborStructure,
    z: &InterventionVector,
) -> Result<DMatrix<f64>> {
    if z.len() != scenario.num_sets() {
        return Err(CoreError::Dimension(format!(
            "intervention vector length {} != number of sets {}",
            z.len(),
            scenario.num_sets()
        )));
    }
    Ok(Evaluator::new(model, scenario, neighbors)?.expected(&z.0))
}

/// Summarize predictions outside `[0, 1]`, if any.
pub fn out_of_range_warning(expected: &DMatrix<f64>) -> Option<String> {
    let mut count = 0usize;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in expected.iter() {
        if !(0.0..=1.0).contains(&v) {
            count += 1;
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    (count > 0).then(|| {
        format!(
            "{count} of {} predictions outside [0, 1] (min {lo:.6}, max {hi:.6})",
            expected.len()
        )
    })
}

/// Options for the least-squares fit.
#[derive(Debug, Clone, Copy, Default)]
pub struct FitOptions {
    /// Weight each observation by its cell weight (count by default).
    pub weighted: bool,
}

fn min_norm_least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> (DVector<f64>, FitDiagnostics) {
    let svd = x.clone().svd(true, true);
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    let eps = sigma_max * (x.nrows().max(x.ncols()) as f64) * f64::EPSILON;
    let coef = svd
        .solve(y, eps)
        .expect("svd solve with non-negative eps cannot fail");
    let rank = svd.singular_values.iter().filter(|&&s| s > eps).count();
    let sigma_min = svd
        .singular_values
        .iter()
        .cloned()
        .filter(|&s| s > eps)
        .fold(f64::INFINITY, f64::min);
    let condition = if rank == 0 {
        0.0
    } else {
        sigma_max / sigma_min
    };
    let residual = x * &coef - y;
    (
        coef.column(0).into_owned(),
        FitDiagnostics {
            rss: residual.norm_squared(),
            rank,
            condition,
        },
    )
}

fn design_matrix(scenario: &Scenario, features: &Features) -> DMatrix<f64> {
    let m = scenario.num_sets();
    let r = scenario.num_groups();
    DMatrix::from_fn(m, 4 * r, |i, col| {
        let rho = scenario.proportions(i)[col % r];
        match col / r {
            0 => rho * features.max_calc[i],
            1 => rho * features.max_ap[i],
            2 => rho * features.counselors[i],
            _ => rho,
        }
    })
}

fn fit_one(
    design: &DMatrix<f64>,
    targets: &[f64],
    weights: Option<&[f64]>,
    label: &str,
    r: usize,
) -> Result<OutcomeEquation> {
    if targets.iter().any(|y| !y.is_finite()) {
        return Err(CoreError::invalid(
            "fit",
            format!("non-finite outcome for `{label}`"),
        ));
    }
    let y = DVector::from_column_slice(targets);
    let (coef, diagnostics) = match weights {
        None => min_norm_least_squares(design, &y),
        Some(w) => {
            let sqrt_w: Vec<f64> = w.iter().map(|v| v.sqrt()).collect();
            let mut xw = design.clone();
            let mut yw = y.clone();
            for i in 0..design.nrows() {
                for c in 0..design.ncols() {
                    xw[(i, c)] *= sqrt_w[i];
                }
                yw[i] *= sqrt_w[i];
            }
            min_norm_least_squares(&xw, &yw)
        }
    };
    let block = |b: usize| (0..r).map(|c| coef[b * r + c]).collect::<Vec<f64>>();
    Ok(OutcomeEquation {
        label: label.to_string(),
        alpha: block(0),
        beta: block(1),
        gamma: block(2),
        theta: block(3),
        diagnostics,
    })
}

/// Fit one structural equation per group by least squares on the observed
/// rates under the null intervention (observed treatments in place).
///
/// Rank-deficient designs get the minimum-norm solution.
pub fn fit(
    scenario: &Scenario,
    neighbors: &NeighborStructure,
    options: &FitOptions,
) -> Result<FittedModel> {
    let m = scenario.num_sets();
    let r = scenario.num_groups();
    let features = build_features(scenario, neighbors, &InterventionVector::zeros(m))?;
    let design = design_matrix(scenario, &features);
    let mut outcomes = Vec::with_capacity(r);
    for k in 0..r {
        let targets: Vec<f64> = (0..m).map(|i| scenario.rate(i, k)).collect();
        let weights: Option<Vec<f64>> = options
            .weighted
            .then(|| (0..m).map(|i| scenario.weight(i, k)).collect());
        outcomes.push(fit_one(
            &design,
            &targets,
            weights.as_deref(),
            &scenario.groups[k],
            r,
        )?);
    }
    Ok(FittedModel {
        categories: scenario.groups.clone(),
        outcomes,
    })
}

/// Fit the aggregate (single pooled outcome) form used in comparison mode,
/// with the group-proportion vector as a regressor basis.
pub fn fit_aggregate(
    scenario: &Scenario,
    neighbors: &NeighborStructure,
    options: &FitOptions,
) -> Result<FittedModel> {
    let m = scenario.num_sets();
    let r = scenario.num_groups();
    let features = build_features(scenario, neighbors, &InterventionVector::zeros(m))?;
    let design = design_matrix(scenario, &features);
    let mut targets = Vec::with_capacity(m);
    let mut set_weights = Vec::with_capacity(m);
    for i in 0..m {
        let mut num = 0.0;
        let mut den = 0.0;
        for k in 0..r {
            let w = scenario.weight(i, k);
            num += w * scenario.rate(i, k);
            den += w;
        }
        if den <= 0.0 {
            return Err(CoreError::invalid(
                "fit",
                format!(
                    "set `{}` has zero total weight; pooled outcome undefined",
                    scenario.sets[i].id
                ),
            ));
        }
        targets.push(num / den);
        set_weights.push(den);
    }
    let weights = options.weighted.then_some(set_weights);
    let eq = fit_one(&design, &targets, weights.as_deref(), "aggregate", r)?;
    Ok(FittedModel {
        categories: scenario.groups.clone(),
        outcomes: vec![eq],
    })
}

fn privilege_value(features: &Features, eq: &OutcomeEquation, set: usize, rho: &[f64]) -> f64 {
    cell_value(
        dot(&eq.alpha, rho),
        features.max_calc[set],
        baseline_term(
            dot(&eq.beta, rho),
            features.max_ap[set],
            dot(&eq.gamma, rho),
            features.counselors[set],
            dot(&eq.theta, rho),
        ),
    )
}

/// Counterfactual benefit gap for set `i` under intervention `z`: the factual
/// expectation minus the expectation with the proportion vector replaced by
/// `rho_prime`. Requires the aggregate model form.
pub fn counterfactual_privilege(
    model: &FittedModel,
    scenario: &Scenario,
    neighbors: &NeighborStructure,
    z: &InterventionVector,
    set: usize,
    rho_prime: &[f64],
) -> Result<f64> {
    if !model.is_aggregate() {
        return Err(CoreError::TauRequiresAggregateModel);
    }
    if rho_prime.len() != scenario.num_groups() {
        return Err(CoreError::Dimension(format!(
            "counterfactual proportions length {} != {} groups",
            rho_prime.len(),
            scenario.num_groups()
        )));
    }
    let sum: f64 = rho_prime.iter().sum();
    if rho_prime.iter().any(|&p| !(0.0..=1.0 + 1e-12).contains(&p)) || (sum - 1.0).abs() > 1e-9 {
        return Err(CoreError::OffSimplex { sum });
    }
    let features = build_features(scenario, neighbors, z)?;
    let eq = &model.outcomes[0];
    Ok(
        privilege_value(&features, eq, set, scenario.proportions(set))
            - privilege_value(&features, eq, set, rho_prime),
    )
}

/// Counterfactual privilege for every set against every one-hot proportion
/// vector, computed with one feature build.
pub fn privilege_table(
    model: &FittedModel,
    scenario: &Scenario,
    neighbors: &NeighborStructure,
    z: &InterventionVector,
) -> Result<Vec<Vec<f64>>> {
    if !model.is_aggregate() {
        return Err(CoreError::TauRequiresAggregateModel);
    }
    let features = build_features(scenario, neighbors, z)?;
    let eq = &model.outcomes[0];
    let r = scenario.num_groups();
    let mut onehot = vec![0.0; r];
    let mut table = Vec::with_capacity(scenario.num_sets());
    for i in 0..scenario.num_sets() {
        let factual = privilege_value(&features, eq, i, scenario.proportions(i));
        let mut row = Vec::with_capacity(r);
        for cat in 0..r {
            onehot[cat] = 1.0;
            row.push(factual - privilege_value(&features, eq, i, &onehot));
            onehot[cat] = 0.0;
        }
        table.push(row);
    }
    Ok(table)
}

const MODEL_MAGIC: &str = "remedia-model v1";

/// Serialize a model to the versioned plain-text coefficient format.
/// Floats carry 17 significant digits so the round trip is bit exact.
pub fn model_to_string(model: &FittedModel) -> String {
    let mut out = String::new();
    out.push_str(MODEL_MAGIC);
    out.push('\n');
    out.push_str(&format!("categories\t{}\n", model.categories.join("\t")));
    out.push_str(&format!(
        "outcomes\t{}\n",
        model
            .outcomes
            .iter()
            .map(|o| o.label.as_str())
            .collect::<Vec<_>>()
            .join("\t")
    ));
    for eq in &model.outcomes {
        for (block, values) in [
            ("alpha", &eq.alpha),
            ("beta", &eq.beta),
            ("gamma", &eq.gamma),
            ("theta", &eq.theta),
        ] {
            for (c, v) in values.iter().enumerate() {
                out.push_str(&format!(
                    "coef\t{}\t{}\t{}\t{:.16e}\n",
                    eq.label, block, model.categories[c], v
                ));
            }
        }
        out.push_str(&format!(
            "diag\t{}\trss\t{:.16e}\n",
            eq.label, eq.diagnostics.rss
        ));
        out.push_str(&format!(
            "diag\t{}\trank\t{}\n",
            eq.label, eq.diagnostics.rank
        ));
        out.push_str(&format!(
            "diag\t{}\tcond\t{:.16e}\n",
            eq.label, eq.diagnostics.condition
        ));
    }
    out
}

/// Parse a model file produced by [`model_to_string`].
pub fn model_from_str(text: &str) -> Result<FittedModel> {
    let err = |msg: &str| CoreError::parse("model file", msg.to_string());
    let mut lines = text.lines();
    if lines.next() != Some(MODEL_MAGIC) {
        return Err(err("missing or unsupported version header"));
    }
    let categories: Vec<String> = match lines.next() {
        Some(line) if line.starts_with("categories\t") => {
            line.split('\t').skip(1).map(|s| s.to_string()).collect()
        }
        _ => return Err(err("expected categories line")),
    };
    let outcome_labels: Vec<String> = match lines.next() {
        Some(line) if line.starts_with("outcomes\t") => {
            line.split('\t').skip(1).map(|s| s.to_string()).collect()
        }
        _ => return Err(err("expected outcomes line")),
    };
    let r = categories.len();
    let mut outcomes: Vec<OutcomeEquation> = outcome_labels
        .iter()
        .map(|l| OutcomeEquation::zero(l.clone(), r))
        .collect();
    let outcome_idx = |label: &str| -> Result<usize> {
        outcome_labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| err(&format!("unknown outcome `{label}`")))
    };
    let category_idx = |label: &str| -> Result<usize> {
        categories
            .iter()
            .position(|c| c == label)
            .ok_or_else(|| err(&format!("unknown category `{label}`")))
    };
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        match fields.as_slice() {
            ["coef", outcome, block, category, value] => {
                let o = outcome_idx(outcome)?;
                let c = category_idx(category)?;
                let v: f64 = value
                    .parse()
                    .map_err(|_| err(&format!("bad float `{value}`")))?;
                let eq = &mut outcomes[o];
                match *block {
                    "alpha" => eq.alpha[c] = v,
                    "beta" => eq.beta[c] = v,
                    "gamma" => eq.gamma[c] = v,
                    "theta" => eq.theta[c] = v,
                    other => return Err(err(&format!("unknown block `{other}`"))),
                }
            }
            ["diag", outcome, key, value] => {
                let o = outcome_idx(outcome)?;
                let eq = &mut outcomes[o];
                match *key {
                    "rss" => {
                        eq.diagnostics.rss = value
                            .parse()
                            .map_err(|_| err(&format!("bad float `{value}`")))?
                    }
                    "rank" => {
                        eq.diagnostics.rank = value
                            .parse()
                            .map_err(|_| err(&format!("bad rank `{value}`")))?
                    }
                    "cond" => {
                        eq.diagnostics.condition = value
                            .parse()
                            .map_err(|_| err(&format!("bad float `{value}`")))?
                    }
                    other => return Err(err(&format!("unknown diagnostic `{other}`"))),
                }
            }
            _ => return Err(err(&format!("unrecognized line `{line}`"))),
        }
    }
    let model = FittedModel {
        categories,
        outcomes,
    };
    model.check_shapes()?;
    Ok(model)
}

pub fn save_model(model: &FittedModel, path: &Path) -> Result<()> {
    std::fs::write(path, model_to_string(model)).map_err(|e| CoreError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

pub fn load_model(path: &Path) -> Result<FittedModel> {
    let text = std::fs::read_to_string(path).map_err(|e| CoreError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    model_from_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{build_neighbor_structure, GroupSlice, InterventionSet, Scenario};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn set(id: &str, lat: f64, lon: f64, calc: bool) -> InterventionSet {
        InterventionSet {
            id: id.to_string(),
            latitude: lat,
            longitude: lon,
            counselors: 0.0,
            offers_ap: false,
            offers_calc: calc,
        }
    }

    fn slice(sid: &str, g: &str, c: u64, y: f64) -> GroupSlice {
        GroupSlice {
            set_id: sid.to_string(),
            group: g.to_string(),
            count: c,
            outcome_rate: y,
        }
    }

    fn two_sets(calc: (bool, bool)) -> (Scenario, NeighborStructure) {
        // Coordinates 1 km apart so similarity is exactly-ish 0.5.
        let dlat = (1.0f64 / 6371.0088).to_degrees();
        let s = Scenario::from_parts(
            vec![set("u1", 0.0, 0.0, calc.0), set("u2", dlat, 0.0, calc.1)],
            vec![
                slice("u1", "A", 100, 0.10),
                slice("u1", "B", 150, 0.20),
                slice("u2", "A", 75, 0.05),
                slice("u2", "B", 100, 0.10),
            ],
            None,
            5,
        )
        .unwrap();
        let n = build_neighbor_structure(&s);
        (s, n)
    }

    #[test]
    fn features_saturated_when_all_offer_calc() {
        let (s, n) = two_sets((true, true));
        for z in [
            InterventionVector::zeros(2),
            InterventionVector::from_indices(2, &[0]),
            InterventionVector::from_indices(2, &[0, 1]),
        ] {
            let f = build_features(&s, &n, &z).unwrap();
            assert_eq!(f.max_calc, vec![1.0, 1.0]);
        }
    }

    #[test]
    fn features_singleton() {
        let s = Scenario::from_parts(
            vec![set("only", 0.0, 0.0, false)],
            vec![slice("only", "A", 1, 0.5), slice("only", "B", 1, 0.5)],
            None,
            5,
        )
        .unwrap();
        let n = build_neighbor_structure(&s);
        let f1 = build_features(&s, &n, &InterventionVector::from_indices(1, &[0])).unwrap();
        assert_eq!(f1.max_calc, vec![1.0]);
        let f0 = build_features(&s, &n, &InterventionVector::zeros(1)).unwrap();
        assert_eq!(f0.max_calc, vec![0.0]);
    }

    #[test]
    fn features_toy_geometry() {
        let (s, n) = two_sets((false, false));
        let sim = n.similarity(0, 1).unwrap();
        assert_relative_eq!(sim, 0.5, epsilon = 1e-12);
        let f = build_features(&s, &n, &InterventionVector::from_indices(2, &[0])).unwrap();
        assert_eq!(f.max_calc[0], 1.0);
        assert_relative_eq!(f.max_calc[1], 0.5, epsilon = 1e-12);
        let f = build_features(&s, &n, &InterventionVector::from_indices(2, &[1])).unwrap();
        assert_relative_eq!(f.max_calc[0], 0.5, epsilon = 1e-12);
        assert_eq!(f.max_calc[1], 1.0);
    }

    #[test]
    fn min_norm_puts_weight_on_live_columns_only() {
        // Intercept-only structure: dead spillover columns, live proportion
        // column; the minimum-norm solution holds everything in theta.
        let x = DMatrix::from_row_slice(
            3,
            4,
            &[0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
        );
        let y = DVector::from_column_slice(&[0.3, 0.3, 0.3]);
        let (coef, diag) = min_norm_least_squares(&x, &y);
        assert_relative_eq!(coef[3], 0.3, epsilon = 1e-12);
        for c in 0..3 {
            assert_relative_eq!(coef[c], 0.0, epsilon = 1e-12);
        }
        assert_eq!(diag.rank, 1);
        assert_relative_eq!(diag.rss, 0.0, epsilon = 1e-18);
    }

    #[test]
    fn duplicated_observations_leave_fit_unchanged() {
        let base = vec![
            set("a", 0.0, 0.0, true),
            set("b", 0.2, 0.1, false),
            set("c", 0.1, 0.3, false),
        ];
        let mut slices = Vec::new();
        for (i, s) in base.iter().enumerate() {
            slices.push(slice(&s.id, "A", 10 + i as u64, 0.1 + 0.05 * i as f64));
            slices.push(slice(&s.id, "B", 20 + i as u64, 0.3 - 0.04 * i as f64));
        }
        let s1 = Scenario::from_parts(base.clone(), slices.clone(), None, 5).unwrap();
        let n1 = build_neighbor_structure(&s1);
        let m1 = fit(&s1, &n1, &FitOptions::default()).unwrap();

        let mut doubled_sets = base.clone();
        let mut doubled_slices = slices.clone();
        for s in &base {
            let mut dup = s.clone();
            dup.id = format!("{}-dup", s.id);
            doubled_sets.push(dup);
        }
        for sl in &slices {
            let mut dup = sl.clone();
            dup.set_id = format!("{}-dup", sl.set_id);
            doubled_slices.push(dup);
        }
        let s2 = Scenario::from_parts(doubled_sets, doubled_slices, None, 7).unwrap();
        let n2 = build_neighbor_structure(&s2);
        let m2 = fit(&s2, &n2, &FitOptions::default()).unwrap();

        for (e1, e2) in m1.outcomes.iter().zip(&m2.outcomes) {
            for (v1, v2) in e1
                .alpha
                .iter()
                .chain(&e1.theta)
                .zip(e2.alpha.iter().chain(&e2.theta))
            {
                assert_relative_eq!(v1, v2, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn zero_model_predicts_zero() {
        let (s, n) = two_sets((false, false));
        let model = FittedModel {
            categories: s.groups.clone(),
            outcomes: vec![OutcomeEquation::zero("A", 2), OutcomeEquation::zero("B", 2)],
        };
        let e = predict(&model, &s, &n, &InterventionVector::from_indices(2, &[1])).unwrap();
        assert!(e.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn group_mismatch_rejected() {
        let (s, n) = two_sets((false, false));
        let model = FittedModel {
            categories: vec!["X".to_string(), "Y".to_string()],
            outcomes: vec![OutcomeEquation::zero("X", 2), OutcomeEquation::zero("Y", 2)],
        };
        assert!(predict(&model, &s, &n, &InterventionVector::zeros(2)).is_err());
    }

    #[test]
    fn counterfactual_privilege_factual_is_zero() {
        let (s, n) = two_sets((false, false));
        let mut eq = OutcomeEquation::zero("aggregate", 2);
        eq.alpha = vec![0.2, 0.05];
        eq.theta = vec![0.3, 0.1];
        let model = FittedModel {
            categories: s.groups.clone(),
            outcomes: vec![eq],
        };
        for z in [
            InterventionVector::zeros(2),
            InterventionVector::from_indices(2, &[0]),
        ] {
            for i in 0..2 {
                let rho = s.proportions(i).to_vec();
                let c = counterfactual_privilege(&model, &s, &n, &z, i, &rho).unwrap();
                assert_eq!(c, 0.0);
            }
        }
    }

    #[test]
    fn counterfactual_privilege_category_constant_model() {
        let (s, n) = two_sets((false, false));
        let mut eq = OutcomeEquation::zero("aggregate", 2);
        eq.alpha = vec![0.2, 0.2];
        eq.beta = vec![0.1, 0.1];
        eq.gamma = vec![0.05, 0.05];
        eq.theta = vec![0.3, 0.3];
        let model = FittedModel {
            categories: s.groups.clone(),
            outcomes: vec![eq],
        };
        let z = InterventionVector::from_indices(2, &[1]);
        for i in 0..2 {
            for onehot in [[1.0, 0.0], [0.0, 1.0]] {
                let c = counterfactual_privilege(&model, &s, &n, &z, i, &onehot).unwrap();
                assert!(c.abs() < 1e-15, "c = {c}");
            }
        }
    }

    #[test]
    fn counterfactual_privilege_theta_difference() {
        // One set entirely in the first category, counterfactual entirely in
        // the second: the gap is the theta contrast.
        let s = Scenario::from_parts(
            vec![set("a", 0.0, 0.0, false)],
            vec![slice("a", "A", 10, 0.3), slice("a", "B", 0, 0.0)],
            None,
            5,
        )
        .unwrap();
        let n = build_neighbor_structure(&s);
        let mut eq = OutcomeEquation::zero("aggregate", 2);
        eq.theta = vec![0.3, 0.1];
        let model = FittedModel {
            categories: s.groups.clone(),
            outcomes: vec![eq],
        };
        let c = counterfactual_privilege(
            &model,
            &s,
            &n,
            &InterventionVector::zeros(1),
            0,
            &[0.0, 1.0],
        )
        .unwrap();
        assert_relative_eq!(c, 0.2, epsilon = 1e-15);
    }

    #[test]
    fn counterfactual_privilege_requires_aggregate_model() {
        let (s, n) = two_sets((false, false));
        let model = FittedModel {
            categories: s.groups.clone(),
            outcomes: vec![OutcomeEquation::zero("A", 2), OutcomeEquation::zero("B", 2)],
        };
        let err = counterfactual_privilege(
            &model,
            &s,
            &n,
            &InterventionVector::zeros(2),
            0,
            &[0.5, 0.5],
        )
        .unwrap_err();
        assert!(matches!(err, CoreError::TauRequiresAggregateModel));
    }

    #[test]
    fn counterfactual_privilege_rejects_off_simplex() {
        let (s, n) = two_sets((false, false));
        let model = FittedModel {
            categories: s.groups.clone(),
            outcomes: vec![OutcomeEquation::zero("aggregate", 2)],
        };
        let err = counterfactual_privilege(
            &model,
            &s,
            &n,
            &InterventionVector::zeros(2),
            0,
            &[0.9, 0.3],
        )
        .unwrap_err();
        assert!(matches!(err, CoreError::OffSimplex { .. }));
    }

    #[test]
    fn intervened_calc_equals_observed_calc() {
        // Only c or z matters: all interventions with no courses equal
        // no interventions with all courses.
        let (s1, n1) = two_sets((false, false));
        let (s2, n2) = two_sets((true, true));
        let mut eqs = Vec::new();
        for label in ["A", "B"] {
            let mut eq = OutcomeEquation::zero(label, 2);
            eq.alpha = vec![0.1, 0.2];
            eq.theta = vec![0.05, 0.15];
            eqs.push(eq);
        }
        let model = FittedModel {
            categories: s1.groups.clone(),
            outcomes: eqs,
        };
        let all = InterventionVector::from_indices(2, &[0, 1]);
        let none = InterventionVector::zeros(2);
        let e1 = predict(&model, &s1, &n1, &all).unwrap();
        let e2 = predict(&model, &s2, &n2, &none).unwrap();
        assert_eq!(e1, e2);
    }

    #[test]
    fn model_parse_rejects_bad_input() {
        assert!(model_from_str("not a model file").is_err());
        let text = "remedia-model v1\ncategories\tA\tB\noutcomes\tA\ncoef\tA\tzeta\tA\t1.0\n";
        assert!(model_from_str(text).is_err());
        let text = "remedia-model v1\ncategories\tA\tB\noutcomes\tA\ncoef\tA\talpha\tA\tnan\n";
        assert!(
            model_from_str(text).is_err(),
            "non-finite coefficients rejected"
        );
    }

    #[test]
    fn out_of_range_predictions_warn() {
        let inside = DMatrix::from_row_slice(2, 2, &[0.1, 0.9, 0.0, 1.0]);
        assert!(out_of_range_warning(&inside).is_none());
        let outside = DMatrix::from_row_slice(2, 2, &[0.1, 1.3, -0.2, 0.5]);
        let warning = out_of_range_warning(&outside).unwrap();
        assert!(warning.contains("2 of 4"), "{warning}");
    }

    #[test]
    fn model_round_trip_exact() {
        let model = FittedModel {
            categories: vec!["A".to_string(), "B".to_string()],
            outcomes: vec![OutcomeEquation {
                label: "A".to_string(),
                alpha: vec![0.1, -0.95],
                beta: vec![1.0 / 3.0, 2e-17],
                gamma: vec![f64::MIN_POSITIVE, 1e300],
                theta: vec![-19.0 / 20.0, 0.8],
                diagnostics: FitDiagnostics {
                    rss: 1.2345678901234567e-12,
                    rank: 7,
                    condition: 345.678,
                },
            }],
        };
        let text = model_to_string(&model);
        let parsed = model_from_str(&text).unwrap();
        assert_eq!(model, parsed);
    }

    proptest! {
        #[test]
        fn max_calc_monotone_in_z(
            bits in proptest::collection::vec(any::<bool>(), 6),
            extra in 0usize..6,
            calc in proptest::collection::vec(any::<bool>(), 6),
        ) {
            let sets: Vec<_> = (0..6)
                .map(|i| set(&format!("s{i}"), i as f64 * 0.01, 0.0, calc[i]))
                .collect();
            let mut slices = Vec::new();
            for s in &sets {
                slices.push(slice(&s.id, "A", 5, 0.2));
                slices.push(slice(&s.id, "B", 5, 0.4));
            }
            let scen = Scenario::from_parts(sets, slices, None, 3).unwrap();
            let n = build_neighbor_structure(&scen);
            let z1 = InterventionVector(bits.clone());
            let mut up = bits.clone();
            up[extra] = true;
            let z2 = InterventionVector(up);
            let f1 = build_features(&scen, &n, &z1).unwrap();
            let f2 = build_features(&scen, &n, &z2).unwrap();
            for i in 0..6 {
                prop_assert!(f2.max_calc[i] >= f1.max_calc[i]);
            }
        }

        #[test]
        fn flip_at_observed_calc_is_idempotent(
            bits in proptest::collection::vec(any::<bool>(), 5),
            j in 0usize..5,
        ) {
            let sets: Vec<_> = (0..5)
                .map(|i| set(&format!("s{i}"), i as f64 * 0.02, 0.01, i == j || i % 2 == 0))
                .collect();
            let mut slices = Vec::new();
            for s in &sets {
                slices.push(slice(&s.id, "A", 5, 0.2));
                slices.push(slice(&s.id, "B", 5, 0.4));
            }
            let scen = Scenario::from_parts(sets, slices, None, 4).unwrap();
            let n = build_neighbor_structure(&scen);
            let mut z_off = bits.clone();
            z_off[j] = false;
            let mut z_on = bits;
            z_on[j] = true;
            let f_off = build_features(&scen, &n, &InterventionVector(z_off)).unwrap();
            let f_on = build_features(&scen, &n, &InterventionVector(z_on)).unwrap();
            prop_assert_eq!(f_off.max_calc, f_on.max_calc);
        }

        #[test]
        fn no_interference_when_neighborhoods_are_singletons(
            bits in proptest::collection::vec(any::<bool>(), 5),
            i in 0usize..5,
            j in 0usize..5,
        ) {
            prop_assume!(i != j);
            let sets: Vec<_> = (0..5)
                .map(|q| set(&format!("s{q}"), q as f64 * 0.5, 0.0, false))
                .collect();
            let mut slices = Vec::new();
            for s in &sets {
                slices.push(slice(&s.id, "A", 5, 0.2));
                slices.push(slice(&s.id, "B", 5, 0.4));
            }
            // neighbor_k = 0 pins every neighborhood to the set itself.
            let scen = Scenario::from_parts(sets, slices, None, 0).unwrap();
            let n = build_neighbor_structure(&scen);
            let mut eqs = Vec::new();
            for label in ["A", "B"] {
                let mut eq = OutcomeEquation::zero(label, 2);
                eq.alpha = vec![0.3, 0.1];
                eq.theta = vec![0.2, 0.4];
                eqs.push(eq);
            }
            let model = FittedModel { categories: scen.groups.clone(), outcomes: eqs };
            let z1 = InterventionVector(bits.clone());
            let mut flipped = bits;
            flipped[j] = !flipped[j];
            let z2 = InterventionVector(flipped);
            let e1 = predict(&model, &scen, &n, &z1).unwrap();
            let e2 = predict(&model, &scen, &n, &z2).unwrap();
            for k in 0..2 {
                prop_assert_eq!(e1[(i, k)], e2[(i, k)]);
            }
        }

        #[test]
        fn residual_orthogonal_to_design_columns(seed_vals in proptest::collection::vec(0.05f64..0.95, 8)) {
            let sets: Vec<_> = (0..4)
                .map(|i| InterventionSet {
                    id: format!("s{i}"),
                    latitude: i as f64 * 0.1,
                    longitude: (i % 2) as f64 * 0.2,
                    counselors: seed_vals[i] * 4.0,
                    offers_ap: i % 2 == 0,
                    offers_calc: i == 0,
                })
                .collect();
            let mut slices = Vec::new();
            for (i, s) in sets.iter().enumerate() {
                slices.push(slice(&s.id, "A", 10, seed_vals[i]));
                slices.push(slice(&s.id, "B", 20, seed_vals[4 + i]));
            }
            let scen = Scenario::from_parts(sets, slices, None, 3).unwrap();
            let n = build_neighbor_structure(&scen);
            let features = build_features(&scen, &n, &InterventionVector::zeros(4)).unwrap();
            let design = design_matrix(&scen, &features);
            let model = fit(&scen, &n, &FitOptions::default()).unwrap();
            for (k, eq) in model.outcomes.iter().enumerate() {
                let coef = DVector::from_iterator(
                    8,
                    eq.alpha.iter().chain(&eq.beta).chain(&eq.gamma).chain(&eq.theta).cloned(),
                );
                let y = DVector::from_iterator(4, (0..4).map(|i| scen.rate(i, k)));
                let residual = &design * &coef - y;
                let scale = design.norm().max(1.0);
                let inner = design.transpose() * residual;
                for v in inner.iter() {
                    prop_assert!(v.abs() <= 1e-8 * scale, "inner product {v}");
                }
            }
        }
    }
}
