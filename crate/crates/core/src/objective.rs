//! Disparity measures, group means, aggregate impact, and change reporting.

use nalgebra::DMatrix;

use crate::error::{CoreError, Result};
use crate::scenario::Scenario;

/// Objective selector. The four disparity variants are minimized; aggregate
/// impact is maximized.
#[derive(Debug, Clone, PartialEq)]
pub enum ObjectiveSpec {
    WithinSetPairwise,
    AcrossPopulationPairwise,
    ThresholdWithin { kappa: f64 },
    ThresholdAcross { kappa: f64 },
    AggregateImpact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

/// Whether `sum over k != k'` counts each unordered pair once or twice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PairConvention {
    #[default]
    Unordered,
    Ordered,
}

impl PairConvention {
    pub(crate) fn factor(self) -> f64 {
        match self {
            PairConvention::Unordered => 1.0,
            PairConvention::Ordered => 2.0,
        }
    }
}

impl ObjectiveSpec {
    pub fn sense(&self) -> Sense {
        match self {
            ObjectiveSpec::AggregateImpact => Sense::Maximize,
            _ => Sense::Minimize,
        }
    }

    pub fn is_disparity(&self) -> bool {
        !matches!(self, ObjectiveSpec::AggregateImpact)
    }

    pub fn name(&self) -> &'static str {
        match self {
            ObjectiveSpec::WithinSetPairwise => "within-pairwise",
            ObjectiveSpec::AcrossPopulationPairwise => "across-pairwise",
            ObjectiveSpec::ThresholdWithin { .. } => "threshold-within",
            ObjectiveSpec::ThresholdAcross { .. } => "threshold-across",
            ObjectiveSpec::AggregateImpact => "aggregate",
        }
    }
}

/// Per-cell weights matching the prediction matrix shape.
///
/// Disaggregated predictions (`r` columns) weight each cell by its count (or
/// override); aggregate single-column predictions weight each set by its
/// total.
pub(crate) fn cell_weights(predicted: &DMatrix<f64>, scenario: &Scenario) -> Result<Vec<Vec<f64>>> {
    let m = scenario.num_sets();
    let r = scenario.num_groups();
    if predicted.nrows() != m {
        return Err(CoreError::Dimension(format!(
            "prediction rows {} != sets {}",
            predicted.nrows(),
            m
        )));
    }
    if predicted.ncols() == r {
        Ok((0..m)
            .map(|i| (0..r).map(|k| scenario.weight(i, k)).collect())
            .collect())
    } else if predicted.ncols() == 1 {
        Ok((0..m)
            .map(|i| vec![(0..r).map(|k| scenario.weight(i, k)).sum()])
            .collect())
    } else {
        Err(CoreError::Dimension(format!(
            "prediction columns {} match neither group count {} nor 1",
            predicted.ncols(),
            r
        )))
    }
}

fn outcome_label(scenario: &Scenario, cols: usize, k: usize) -> String {
    if cols == 1 {
        "aggregate".to_string()
    } else {
        scenario.groups[k].clone()
    }
}

/// Weighted mean expected outcome per column: `mu_k = sum_i w_ik E_ik / n_k`.
pub fn group_means(predicted: &DMatrix<f64>, scenario: &Scenario) -> Result<Vec<f64>> {
    let weights = cell_weights(predicted, scenario)?;
    let cols = predicted.ncols();
    let mut means = Vec::with_capacity(cols);
    for k in 0..cols {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..predicted.nrows() {
            num += weights[i][k] * predicted[(i, k)];
            den += weights[i][k];
        }
        if den <= 0.0 {
            return Err(CoreError::EmptyGroup {
                group: outcome_label(scenario, cols, k),
            });
        }
        means.push(num / den);
    }
    Ok(means)
}

/// Disparity of a prediction matrix under the chosen measure (unordered pairs).
pub fn disparity(
    predicted: &DMatrix<f64>,
    scenario: &Scenario,
    spec: &ObjectiveSpec,
) -> Result<f64> {
    disparity_with(predicted, scenario, spec, PairConvention::Unordered)
}

/// Disparity with an explicit pair-counting convention.
pub fn disparity_with(
    predicted: &DMatrix<f64>,
    scenario: &Scenario,
    spec: &ObjectiveSpec,
    pairs: PairConvention,
) -> Result<f64> {
    let r = predicted.ncols();
    match spec {
        ObjectiveSpec::AggregateImpact => Err(CoreError::UnsupportedObjective {
            objective: spec.name().to_string(),
            reason: "aggregate impact is not a disparity measure".to_string(),
        }),
        ObjectiveSpec::AcrossPopulationPairwise => {
            let mu = group_means(predicted, scenario)?;
            let mut total = 0.0;
            for k in 0..r {
                for k2 in (k + 1)..r {
                    total += (mu[k] - mu[k2]).abs();
                }
            }
            Ok(pairs.factor() * total)
        }
        ObjectiveSpec::WithinSetPairwise => {
            let mut total = 0.0;
            for i in 0..predicted.nrows() {
                for k in 0..r {
                    for k2 in (k + 1)..r {
                        total += (predicted[(i, k)] - predicted[(i, k2)]).abs();
                    }
                }
            }
            Ok(pairs.factor() * total)
        }
        ObjectiveSpec::ThresholdWithin { kappa } => {
            let mut total = 0.0;
            for i in 0..predicted.nrows() {
                for k in 0..r {
                    total += (kappa - predicted[(i, k)]).max(0.0);
                }
            }
            Ok(total)
        }
        ObjectiveSpec::ThresholdAcross { kappa } => {
            let mu = group_means(predicted, scenario)?;
            Ok(mu.iter().map(|m| (kappa - m).max(0.0)).sum())
        }
    }
}

/// Population-mean expected outcome: `(1/n) sum_k sum_i w_ik E_ik`.
pub fn aggregate_impact(predicted: &DMatrix<f64>, scenario: &Scenario) -> Result<f64> {
    let weights = cell_weights(predicted, scenario)?;
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..predicted.nrows() {
        for k in 0..predicted.ncols() {
            num += weights[i][k] * predicted[(i, k)];
            den += weights[i][k];
        }
    }
    if den <= 0.0 {
        return Err(CoreError::EmptyGroup {
            group: "all".to_string(),
        });
    }
    Ok(num / den)
}

/// Evaluate an objective (disparity or aggregate impact) on a prediction matrix.
pub fn evaluate(
    predicted: &DMatrix<f64>,
    scenario: &Scenario,
    spec: &ObjectiveSpec,
    pairs: PairConvention,
) -> Result<f64> {
    match spec {
        ObjectiveSpec::AggregateImpact => aggregate_impact(predicted, scenario),
        _ => disparity_with(predicted, scenario, spec, pairs),
    }
}

/// Before/after means and percent changes per group plus the aggregate.
#[derive(Debug, Clone, PartialEq)]
pub struct ChangeReport {
    pub groups: Vec<GroupChange>,
    pub aggregate: GroupChange,
    pub disparity_pre: f64,
    pub disparity_post: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupChange {
    pub label: String,
    pub pre_mean: f64,
    pub post_mean: f64,
    /// Percent change; `None` when the pre-intervention mean is zero.
    pub pct_change: Option<f64>,
}

fn pct(pre: f64, post: f64) -> Option<f64> {
    if pre == 0.0 {
        None
    } else {
        Some(100.0 * (post - pre) / pre)
    }
}

/// Compare pre/post prediction matrices on the same scenario.
pub fn change_report(
    pre: &DMatrix<f64>,
    post: &DMatrix<f64>,
    scenario: &Scenario,
    spec: &ObjectiveSpec,
) -> Result<ChangeReport> {
    if pre.shape() != post.shape() {
        return Err(CoreError::Dimension(format!(
            "pre shape {:?} != post shape {:?}",
            pre.shape(),
            post.shape()
        )));
    }
    let mu_pre = group_means(pre, scenario)?;
    let mu_post = group_means(post, scenario)?;
    let groups = (0..pre.ncols())
        .map(|k| GroupChange {
            label: outcome_label(scenario, pre.ncols(), k),
            pre_mean: mu_pre[k],
            post_mean: mu_post[k],
            pct_change: pct(mu_pre[k], mu_post[k]),
        })
        .collect();
    let agg_pre = aggregate_impact(pre, scenario)?;
    let agg_post = aggregate_impact(post, scenario)?;
    Ok(ChangeReport {
        groups,
        aggregate: GroupChange {
            label: "aggregate".to_string(),
            pre_mean: agg_pre,
            post_mean: agg_post,
            pct_change: pct(agg_pre, agg_post),
        },
        disparity_pre: disparity(pre, scenario, spec)?,
        disparity_post: disparity(post, scenario, spec)?,
    })
}

impl ChangeReport {
    /// CSV form: `group,pre_mean,post_mean,pct_change` plus a summary row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("group,pre_mean,post_mean,pct_change\n");
        for g in self.groups.iter().chain(std::iter::once(&self.aggregate)) {
            let pct = match g.pct_change {
                Some(p) => format!("{:+.2}", p),
                None => "NA".to_string(),
            };
            out.push_str(&format!(
                "{},{:.6},{:.6},{}\n",
                g.label, g.pre_mean, g.post_mean, pct
            ));
        }
        out
    }

    /// Fixed-width table for terminal display.
    pub fn to_table(&self) -> String {
        let width = self
            .groups
            .iter()
            .map(|g| g.label.len())
            .chain(std::iter::once("aggregate".len()))
            .max()
            .unwrap_or(8)
            .max(5);
        let mut out = format!(
            "{:<width$}  {:>10}  {:>10}  {:>9}\n",
            "group", "pre", "post", "change%"
        );
        for g in self.groups.iter().chain(std::iter::once(&self.aggregate)) {
            let pct = match g.pct_change {
                Some(p) => format!("{:+.2}", p),
                None => "NA".to_string(),
            };
            out.push_str(&format!(
                "{:<width$}  {:>10.6}  {:>10.6}  {:>9}\n",
                g.label, g.pre_mean, g.post_mean, pct
            ));
        }
        out.push_str(&format!(
            "disparity: {:.6} -> {:.6}\n",
            self.disparity_pre, self.disparity_post
        ));
        out
    }
}
