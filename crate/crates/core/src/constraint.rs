//! Feasibility checking for candidate intervention vectors.

use nalgebra::DMatrix;

use crate::error::{CoreError, Result};
use crate::objective;
use crate::scenario::{NeighborStructure, Scenario};
use crate::scm::{self, Evaluator, FittedModel, InterventionVector};

/// Margin the strict counterfactual-privilege inequality is shifted by so
/// feasibility stays decidable in floating point.
pub const TAU_STRICTNESS: f64 = 1e-12;

/// One constraint family instance.
#[derive(Debug, Clone, PartialEq)]
pub enum ConstraintSpec {
    /// At most `b` interventions.
    Budget { b: usize },
    /// Population-mean change for every group stays at or above `eta`.
    NoHarmAcross { eta: f64 },
    /// Cell-level change stays at or above `eta` on the given (set, group)
    /// index pairs; `None` means every pair.
    NoHarmWithin {
        eta: f64,
        pairs: Option<Vec<(usize, usize)>>,
    },
    /// Population mean of every group stays at or above `kappa`.
    MinRateAcross { kappa: f64 },
    /// Every cell expectation stays at or above `kappa`.
    MinRateWithin { kappa: f64 },
    /// Counterfactual privilege stays strictly below `tau` for every set and
    /// every one-hot counterfactual proportion vector. Needs the aggregate
    /// model form.
    CounterfactualPrivilege { tau: f64 },
}

impl ConstraintSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ConstraintSpec::Budget { .. } => "budget",
            ConstraintSpec::NoHarmAcross { .. } => "no-harm-across",
            ConstraintSpec::NoHarmWithin { .. } => "no-harm-within",
            ConstraintSpec::MinRateAcross { .. } => "min-rate-across",
            ConstraintSpec::MinRateWithin { .. } => "min-rate-within",
            ConstraintSpec::CounterfactualPrivilege { .. } => "counterfactual-privilege",
        }
    }
}

/// Signed slack for one atomic check; negative means violated.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginEntry {
    pub constraint: String,
    pub component: String,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityReport {
    pub feasible: bool,
    pub margins: Vec<MarginEntry>,
}

impl FeasibilityReport {
    pub fn violations(&self) -> Vec<&MarginEntry> {
        self.margins.iter().filter(|m| m.margin < 0.0).collect()
    }

    /// Sum of violation magnitudes; zero when feasible.
    pub fn total_violation(&self) -> f64 {
        self.margins.iter().map(|m| (-m.margin).max(0.0)).sum()
    }
}

/// Margins for every constraint given already-computed predictions.
pub(crate) fn compute_margins(
    scenario: &Scenario,
    constraints: &[ConstraintSpec],
    expected_z: &DMatrix<f64>,
    expected_0: &DMatrix<f64>,
    privilege: Option<&[Vec<f64>]>,
    ones: usize,
) -> Result<Vec<MarginEntry>> {
    let mut margins = Vec::new();
    let cols = expected_z.ncols();
    let label = |k: usize| -> String {
        if cols == 1 {
            "aggregate".to_string()
        } else {
            scenario.groups[k].clone()
        }
    };
    for spec in constraints {
        match spec {
            ConstraintSpec::Budget { b } => {
                margins.push(MarginEntry {
                    constraint: spec.name().to_string(),
                    component: "total".to_string(),
                    margin: *b as f64 - ones as f64,
                });
            }
            ConstraintSpec::NoHarmAcross { eta } => {
                let mu_z = objective::group_means(expected_z, scenario)?;
                let mu_0 = objective::group_means(expected_0, scenario)?;
                for k in 0..cols {
                    margins.push(MarginEntry {
                        constraint: spec.name().to_string(),
                        component: label(k),
                        margin: (mu_z[k] - mu_0[k]) - eta,
                    });
                }
            }
            ConstraintSpec::NoHarmWithin { eta, pairs } => {
                let all: Vec<(usize, usize)>;
                let chosen: &[(usize, usize)] = match pairs {
                    Some(p) => p,
                    None => {
                        all = (0..expected_z.nrows())
                            .flat_map(|i| (0..cols).map(move |k| (i, k)))
                            .collect();
                        &all
                    }
                };
                for &(i, k) in chosen {
                    if i >= expected_z.nrows() || k >= cols {
                        return Err(CoreError::Dimension(format!(
                            "no-harm pair ({i}, {k}) outside {} x {}",
                            expected_z.nrows(),
                            cols
                        )));
                    }
                    margins.push(MarginEntry {
                        constraint: spec.name().to_string(),
                        component: format!("{}/{}", scenario.sets[i].id, label(k)),
                        margin: (expected_z[(i, k)] - expected_0[(i, k)]) - eta,
                    });
                }
            }
            ConstraintSpec::MinRateAcross { kappa } => {
                let mu_z = objective::group_means(expected_z, scenario)?;
                for k in 0..cols {
                    margins.push(MarginEntry {
                        constraint: spec.name().to_string(),
                        component: label(k),
                        margin: mu_z[k] - kappa,
                    });
                }
            }
            ConstraintSpec::MinRateWithin { kappa } => {
                for i in 0..expected_z.nrows() {
                    for k in 0..cols {
                        margins.push(MarginEntry {
                            constraint: spec.name().to_string(),
                            component: format!("{}/{}", scenario.sets[i].id, label(k)),
                            margin: expected_z[(i, k)] - kappa,
                        });
                    }
                }
            }
            ConstraintSpec::CounterfactualPrivilege { tau } => {
                let table = privilege.ok_or(CoreError::TauRequiresAggregateModel)?;
                for (i, row) in table.iter().enumerate() {
                    for (cat, value) in row.iter().enumerate() {
                        margins.push(MarginEntry {
                            constraint: spec.name().to_string(),
                            component: format!("{}/{}", scenario.sets[i].id, scenario.groups[cat]),
                            margin: (tau - TAU_STRICTNESS) - value,
                        });
                    }
                }
            }
        }
    }
    Ok(margins)
}

fn wants_privilege(constraints: &[ConstraintSpec]) -> bool {
    constraints
        .iter()
        .any(|c| matches!(c, ConstraintSpec::CounterfactualPrivilege { .. }))
}

/// Evaluate every constraint for a candidate `z`.
///
/// `dip_model` supplies the aggregate model for counterfactual-privilege
/// constraints; when `model` itself is aggregate it is used directly.
pub fn check_feasibility(
    model: &FittedModel,
    scenario: &Scenario,
    neighbors: &NeighborStructure,
    z: &InterventionVector,
    constraints: &[ConstraintSpec],
    dip_model: Option<&FittedModel>,
) -> Result<FeasibilityReport> {
    let evaluator = Evaluator::new(model, scenario, neighbors)?;
    let expected_z = evaluator.expected(&z.0);
    let expected_0 = evaluator.expected(&vec![false; z.len()]);
    let privilege = if wants_privilege(constraints) {
        let tau_model = if model.is_aggregate() {
            model
        } else {
            dip_model.ok_or(CoreError::TauRequiresAggregateModel)?
        };
        Some(scm::privilege_table(tau_model, scenario, neighbors, z)?)
    } else {
        None
    };
    let margins = compute_margins(
        scenario,
        constraints,
        &expected_z,
        &expected_0,
        privilege.as_deref(),
        z.ones(),
    )?;
    let feasible = margins.iter().all(|m| m.margin >= 0.0);
    Ok(FeasibilityReport { feasible, margins })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{build_neighbor_structure, GroupSlice, InterventionSet, Scenario};
    use crate::scm::OutcomeEquation;
    use approx::assert_relative_eq;

    fn toy() -> (Scenario, NeighborStructure, FittedModel) {
        let dlat = (1.0f64 / 6371.0088).to_degrees();
        let set = |id: &str, lat: f64| InterventionSet {
            id: id.to_string(),
            latitude: lat,
            longitude: 0.0,
            counselors: 0.0,
            offers_ap: false,
            offers_calc: false,
        };
        let slice = |sid: &str, g: &str, c: u64, y: f64| GroupSlice {
            set_id: sid.to_string(),
            group: g.to_string(),
            count: c,
            outcome_rate: y,
        };
        let s = Scenario::from_parts(
            vec![set("u1", 0.0), set("u2", dlat)],
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
        let mut eq_a = OutcomeEquation::zero("A", 2);
        eq_a.alpha = vec![0.10, 0.10];
        eq_a.theta = vec![-0.95, 0.80];
        let mut eq_b = OutcomeEquation::zero("B", 2);
        eq_b.alpha = vec![0.10, 0.10];
        eq_b.theta = vec![-1.90, 1.60];
        let model = FittedModel {
            categories: s.groups.clone(),
            outcomes: vec![eq_a, eq_b],
        };
        (s, n, model)
    }

    #[test]
    fn budget_violation_margin() {
        let (s, n, model) = toy();
        let report = check_feasibility(
            &model,
            &s,
            &n,
            &InterventionVector::from_indices(2, &[0, 1]),
            &[ConstraintSpec::Budget { b: 1 }],
            None,
        )
        .unwrap();
        assert!(!report.feasible);
        assert_eq!(report.margins[0].margin, -1.0);
    }

    #[test]
    fn null_intervention_no_harm_margin_zero() {
        let (s, n, model) = toy();
        let report = check_feasibility(
            &model,
            &s,
            &n,
            &InterventionVector::zeros(2),
            &[ConstraintSpec::NoHarmAcross { eta: 0.0 }],
            None,
        )
        .unwrap();
        assert!(report.feasible);
        for m in &report.margins {
            assert_eq!(m.margin, 0.0);
        }
    }

    #[test]
    fn toy_no_harm_feasible_at_second_booth() {
        let (s, n, model) = toy();
        let report = check_feasibility(
            &model,
            &s,
            &n,
            &InterventionVector::from_indices(2, &[1]),
            &[ConstraintSpec::NoHarmAcross { eta: 0.0 }],
            None,
        )
        .unwrap();
        assert!(report.feasible);
        // Group A mean rises 11/140 -> 0.15; group B 0.16 -> 0.23.
        assert_relative_eq!(
            report.margins[0].margin,
            0.15 - 11.0 / 140.0,
            epsilon = 1e-9
        );
        assert_relative_eq!(report.margins[1].margin, 0.07, epsilon = 1e-9);
    }

    #[test]
    fn threshold_perturbation_flips_exactly_that_constraint() {
        let (s, n, model) = toy();
        let z = InterventionVector::from_indices(2, &[1]);
        let base = check_feasibility(
            &model,
            &s,
            &n,
            &z,
            &[ConstraintSpec::NoHarmAcross { eta: 0.0 }],
            None,
        )
        .unwrap();
        let worst = base
            .margins
            .iter()
            .map(|m| m.margin)
            .fold(f64::INFINITY, f64::min);
        for (delta, expect_feasible) in [(-1e-9, true), (1e-9, false)] {
            let report = check_feasibility(
                &model,
                &s,
                &n,
                &z,
                &[ConstraintSpec::NoHarmAcross { eta: worst + delta }],
                None,
            )
            .unwrap();
            assert_eq!(report.feasible, expect_feasible, "delta {delta}");
        }
    }

    #[test]
    fn budget_monotone_under_removal() {
        let (s, n, model) = toy();
        let constraints = [ConstraintSpec::Budget { b: 1 }];
        let full = check_feasibility(
            &model,
            &s,
            &n,
            &InterventionVector::from_indices(2, &[1]),
            &constraints,
            None,
        )
        .unwrap();
        assert!(full.feasible);
        let removed = check_feasibility(
            &model,
            &s,
            &n,
            &InterventionVector::zeros(2),
            &constraints,
            None,
        )
        .unwrap();
        assert!(removed.feasible);
    }

    #[test]
    fn tau_requires_aggregate_model() {
        let (s, n, model) = toy();
        let err = check_feasibility(
            &model,
            &s,
            &n,
            &InterventionVector::zeros(2),
            &[ConstraintSpec::CounterfactualPrivilege { tau: 0.5 }],
            None,
        )
        .unwrap_err();
        assert!(matches!(err, CoreError::TauRequiresAggregateModel));
    }

    #[test]
    fn tau_feasible_for_category_constant_coefficients() {
        let (s, n, _) = toy();
        let mut eq = OutcomeEquation::zero("aggregate", 2);
        eq.alpha = vec![0.2, 0.2];
        eq.beta = vec![0.1, 0.1];
        eq.theta = vec![0.3, 0.3];
        let aggregate = FittedModel {
            categories: s.groups.clone(),
            outcomes: vec![eq],
        };
        for tau in [1e-9, 1e-6, 0.1, 0.567] {
            let report = check_feasibility(
                &aggregate,
                &s,
                &n,
                &InterventionVector::from_indices(2, &[0]),
                &[ConstraintSpec::CounterfactualPrivilege { tau }],
                None,
            )
            .unwrap();
            assert!(report.feasible, "tau = {tau}");
        }
    }
}
