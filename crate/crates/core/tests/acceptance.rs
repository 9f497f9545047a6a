//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line.
//!
//! Run with `cargo test --test acceptance -- --nocapture` to see every line.

use std::time::Instant;

use nalgebra::DMatrix;
use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use remedia_core::scm;
use remedia_core::solve::{solve_branch_bound, solve_enumerate};
use remedia_core::{
    build_features, build_neighbor_structure, check_feasibility, counterfactual_privilege, fit,
    gen_random, milp, objective, observed_disparity, toy_career_fair, ConstraintSpec, FitOptions,
    FittedModel, InterventionVector, ObjectiveSpec, RandomScenarioConfig, SolveOptions,
};

fn report(number: u32, name: &str, failures: Vec<String>) {
    if failures.is_empty() {
        println!("acceptance criterion {number} ({name}): PASS");
    } else {
        println!("acceptance criterion {number} ({name}): FAIL");
        for f in &failures {
            println!("  - {f}");
        }
        panic!(
            "acceptance criterion {number} ({name}): {} failing check(s)",
            failures.len()
        );
    }
}

fn check(failures: &mut Vec<String>, ok: bool, message: String) {
    if !ok {
        failures.push(message);
    }
}

fn toy_predictions(z: &[usize]) -> DMatrix<f64> {
    let truth = toy_career_fair();
    let neighbors = build_neighbor_structure(&truth.scenario);
    scm::predict(
        &truth.model,
        &truth.scenario,
        &neighbors,
        &InterventionVector::from_indices(2, z),
    )
    .unwrap()
}

#[test]
fn criterion_1_toy_reproduction() {
    let started = Instant::now();
    let mut failures = Vec::new();
    let truth = toy_career_fair();
    let neighbors = build_neighbor_structure(&truth.scenario);
    let spec = ObjectiveSpec::AcrossPopulationPairwise;

    let observed = observed_disparity(&truth.scenario, &spec).unwrap();
    check(
        &mut failures,
        (observed - 57.0 / 700.0).abs() < 1e-9,
        format!("observed disparity {observed} != 57/700"),
    );
    check(
        &mut failures,
        (observed * 100.0).round() / 100.0 == 0.08,
        format!("observed disparity {observed} does not round to 0.08"),
    );

    let d10 = objective::disparity(&toy_predictions(&[0]), &truth.scenario, &spec).unwrap();
    check(
        &mut failures,
        (d10 - 29.0 / 350.0).abs() < 1e-9,
        format!("disparity at z=(1,0) {d10} != 29/350"),
    );
    check(
        &mut failures,
        (d10 * 100.0).round() / 100.0 == 0.08,
        format!("disparity at z=(1,0) {d10} does not round to 0.08"),
    );

    let d01 = objective::disparity(&toy_predictions(&[1]), &truth.scenario, &spec).unwrap();
    check(
        &mut failures,
        (d01 - 0.06).abs() < 1e-9,
        format!(
            "disparity at z=(0,1) is {d01}, not 0.06: the published table's gains at the \
             second campus are not proportional across groups, so no model of this \
             multiplicative-spillover form can produce 0.06 here (the attainable value is 0.08)"
        ),
    );

    let result = solve_branch_bound(
        &truth.model,
        &truth.scenario,
        &neighbors,
        &spec,
        &[ConstraintSpec::Budget { b: 1 }],
        &SolveOptions::default(),
    )
    .unwrap();
    check(
        &mut failures,
        result.z_star.selected_indices() == vec![1],
        format!(
            "optimal solve selected {:?}, expected university 2",
            result.z_star.selected_indices()
        ),
    );

    let elapsed = started.elapsed();
    check(
        &mut failures,
        elapsed.as_secs_f64() < 1.0,
        format!("runtime {elapsed:?} exceeds 1 s"),
    );
    report(1, "toy-example reproduction", failures);
}

#[test]
fn criterion_2_prediction_reproduction() {
    let mut failures = Vec::new();
    let e10 = toy_predictions(&[0]);
    let e01 = toy_predictions(&[1]);
    let cells = [
        ("E[Y_A^(1)] at z=(1,0)", e10[(0, 0)], 0.20),
        ("E[Y_A^(2)] at z=(1,0)", e10[(1, 0)], 0.10),
        ("E[Y_B^(1)] at z=(1,0)", e10[(0, 1)], 0.30),
        ("E[Y_B^(2)] at z=(1,0)", e10[(1, 1)], 0.15),
        ("E[Y_A^(1)] at z=(0,1)", e01[(0, 0)], 0.15),
        ("E[Y_A^(2)] at z=(0,1)", e01[(1, 0)], 0.15),
        ("E[Y_B^(1)] at z=(0,1)", e01[(0, 1)], 0.25),
        ("E[Y_B^(2)] at z=(0,1)", e01[(1, 1)], 0.15),
    ];
    for (label, got, want) in cells {
        check(
            &mut failures,
            (got - want).abs() < 1e-12,
            format!(
                "{label}: got {got}, want {want}{}",
                if (want - 0.15).abs() < 1e-12 && (got - 0.20).abs() < 1e-12 {
                    " (unattainable: per-set gains are proportional across groups under this \
                     model family, and the other seven cells pin this one to 0.20)"
                } else {
                    ""
                }
            ),
        );
    }
    report(2, "prediction reproduction", failures);
}

fn objective_set() -> Vec<ObjectiveSpec> {
    vec![
        ObjectiveSpec::AcrossPopulationPairwise,
        ObjectiveSpec::WithinSetPairwise,
        ObjectiveSpec::ThresholdWithin { kappa: 0.3 },
        ObjectiveSpec::ThresholdAcross { kappa: 0.3 },
        ObjectiveSpec::AggregateImpact,
    ]
}

#[test]
fn criterion_3_oracle_equivalence() {
    let started = Instant::now();
    let mut failures = Vec::new();
    let r_choices = [2usize, 3, 5];
    for seed in 0..50u64 {
        let config = RandomScenarioConfig {
            m: 6 + (seed % 9) as usize,
            r: r_choices[(seed % 3) as usize],
            ..RandomScenarioConfig::default()
        };
        let truth = gen_random(seed, &config).unwrap();
        let neighbors = build_neighbor_structure(&truth.scenario);
        let constraints = [ConstraintSpec::Budget {
            b: (seed % 5) as usize,
        }];
        let opts = SolveOptions::default();
        for spec in objective_set() {
            let a = solve_enumerate(
                &truth.model,
                &truth.scenario,
                &neighbors,
                &spec,
                &constraints,
                &opts,
            )
            .unwrap();
            let b = solve_branch_bound(
                &truth.model,
                &truth.scenario,
                &neighbors,
                &spec,
                &constraints,
                &opts,
            )
            .unwrap();
            check(
                &mut failures,
                a.z_star == b.z_star && a.objective_value == b.objective_value,
                format!(
                    "seed {seed} objective {}: enumerate ({:?}, {}) != branch-bound ({:?}, {})",
                    spec.name(),
                    a.z_star.selected_indices(),
                    a.objective_value,
                    b.z_star.selected_indices(),
                    b.objective_value
                ),
            );
        }
    }
    let elapsed = started.elapsed();
    check(
        &mut failures,
        elapsed.as_secs_f64() < 60.0,
        format!("runtime {elapsed:?} exceeds 60 s"),
    );
    report(3, "oracle equivalence", failures);
}

#[test]
fn criterion_4_fit_recovery() {
    let started = Instant::now();
    let mut failures = Vec::new();
    let config = RandomScenarioConfig {
        m: 60,
        r: 3,
        ..RandomScenarioConfig::default()
    };
    let truth = gen_random(11, &config).unwrap();
    check(
        &mut failures,
        truth.truncated == 0,
        "zero-noise generation clipped outcomes".to_string(),
    );
    let neighbors = build_neighbor_structure(&truth.scenario);
    let fitted = fit(&truth.scenario, &neighbors, &FitOptions::default()).unwrap();
    for (eq_fit, eq_true) in fitted.outcomes.iter().zip(&truth.model.outcomes) {
        check(
            &mut failures,
            eq_fit.diagnostics.rank == 12,
            format!(
                "outcome {}: design rank {} != 12 (not full rank)",
                eq_fit.label, eq_fit.diagnostics.rank
            ),
        );
        let pairs = eq_fit
            .alpha
            .iter()
            .chain(&eq_fit.beta)
            .chain(&eq_fit.gamma)
            .chain(&eq_fit.theta)
            .zip(
                eq_true
                    .alpha
                    .iter()
                    .chain(&eq_true.beta)
                    .chain(&eq_true.gamma)
                    .chain(&eq_true.theta),
            );
        for (got, want) in pairs {
            check(
                &mut failures,
                (got - want).abs() < 1e-6,
                format!("outcome {}: coefficient {got} != {want}", eq_fit.label),
            );
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..10 {
        let z = InterventionVector((0..60).map(|_| rng.gen_bool(0.25)).collect());
        let want = scm::predict(&truth.model, &truth.scenario, &neighbors, &z).unwrap();
        let got = scm::predict(&fitted, &truth.scenario, &neighbors, &z).unwrap();
        for (a, b) in want.iter().zip(got.iter()) {
            check(
                &mut failures,
                (a - b).abs() < 1e-8,
                format!("prediction {a} vs {b} differs by more than 1e-8"),
            );
        }
    }
    let elapsed = started.elapsed();
    check(
        &mut failures,
        elapsed.as_secs_f64() < 5.0,
        format!("runtime {elapsed:?} exceeds 5 s"),
    );
    report(4, "fit recovery", failures);
}

#[test]
fn criterion_5_dominance_properties() {
    let mut failures = Vec::new();
    let spec = ObjectiveSpec::AcrossPopulationPairwise;
    for seed in [0u64, 3, 7, 11, 19, 23, 29, 31, 37, 41] {
        let config = RandomScenarioConfig {
            m: 10 + (seed % 4) as usize,
            r: 2 + (seed % 3) as usize,
            ..RandomScenarioConfig::default()
        };
        let truth = gen_random(seed, &config).unwrap();
        let neighbors = build_neighbor_structure(&truth.scenario);
        let budget = [ConstraintSpec::Budget { b: 3 }];
        let opts = SolveOptions::default();

        let ir = solve_branch_bound(
            &truth.model,
            &truth.scenario,
            &neighbors,
            &spec,
            &budget,
            &opts,
        )
        .unwrap();
        let dip = solve_branch_bound(
            &truth.model,
            &truth.scenario,
            &neighbors,
            &ObjectiveSpec::AggregateImpact,
            &budget,
            &opts,
        )
        .unwrap();
        let noharm_constraints = [
            ConstraintSpec::Budget { b: 3 },
            ConstraintSpec::NoHarmAcross { eta: 0.0 },
        ];
        let ir_noharm = solve_branch_bound(
            &truth.model,
            &truth.scenario,
            &neighbors,
            &spec,
            &noharm_constraints,
            &opts,
        )
        .unwrap();

        let eval = |z: &InterventionVector| {
            let e = scm::predict(&truth.model, &truth.scenario, &neighbors, z).unwrap();
            (
                objective::disparity(&e, &truth.scenario, &spec).unwrap(),
                objective::aggregate_impact(&e, &truth.scenario).unwrap(),
            )
        };
        let (d_ir, a_ir) = eval(&ir.z_star);
        let (d_dip, a_dip) = eval(&dip.z_star);
        let (d_null, _) = eval(&InterventionVector::zeros(truth.scenario.num_sets()));
        let (d_noharm, _) = eval(&ir_noharm.z_star);

        check(
            &mut failures,
            d_ir <= d_null,
            format!("seed {seed}: delta(z*_IR) {d_ir} > delta(0) {d_null}"),
        );
        check(
            &mut failures,
            d_ir <= d_dip,
            format!("seed {seed}: delta(z*_IR) {d_ir} > delta(z*_DIP) {d_dip}"),
        );
        check(
            &mut failures,
            a_dip >= a_ir,
            format!("seed {seed}: aggregate(z*_DIP) {a_dip} < aggregate(z*_IR) {a_ir}"),
        );
        check(
            &mut failures,
            d_noharm >= d_ir,
            format!("seed {seed}: delta(z*_IR+noharm) {d_noharm} < delta(z*_IR) {d_ir}"),
        );
        let margins = check_feasibility(
            &truth.model,
            &truth.scenario,
            &neighbors,
            &ir_noharm.z_star,
            &noharm_constraints,
            None,
        )
        .unwrap();
        for m in &margins.margins {
            check(
                &mut failures,
                m.margin >= -1e-9,
                format!(
                    "seed {seed}: no-harm margin {} [{}] below -1e-9",
                    m.margin, m.component
                ),
            );
        }
    }
    report(5, "dominance and no-harm properties", failures);
}

#[test]
fn criterion_6_constraint_semantics() {
    let mut failures = Vec::new();
    for seed in [2u64, 5, 9, 17] {
        let truth = gen_random(seed, &RandomScenarioConfig::default()).unwrap();
        let neighbors = build_neighbor_structure(&truth.scenario);
        let m = truth.scenario.num_sets();
        for b in [0usize, 2] {
            let stack = [
                ConstraintSpec::Budget { b },
                ConstraintSpec::NoHarmAcross { eta: 0.0 },
            ];
            let result = check_feasibility(
                &truth.model,
                &truth.scenario,
                &neighbors,
                &InterventionVector::zeros(m),
                &stack,
                None,
            )
            .unwrap();
            check(
                &mut failures,
                result.feasible,
                format!("seed {seed}: z = 0 infeasible under budget {b} + no-harm(0)"),
            );
        }
    }

    // Factual counterfactual gap is exactly zero.
    let truth = toy_career_fair();
    let neighbors = build_neighbor_structure(&truth.scenario);
    let aggregate =
        remedia_core::fit_aggregate(&truth.scenario, &neighbors, &FitOptions::default()).unwrap();
    for z in [
        InterventionVector::zeros(2),
        InterventionVector::from_indices(2, &[0]),
        InterventionVector::from_indices(2, &[0, 1]),
    ] {
        for i in 0..2 {
            let rho = truth.scenario.proportions(i).to_vec();
            let c = counterfactual_privilege(&aggregate, &truth.scenario, &neighbors, &z, i, &rho)
                .unwrap();
            check(
                &mut failures,
                c == 0.0,
                format!("factual counterfactual privilege is {c}, not exactly 0"),
            );
        }
    }

    // Category-constant coefficients are tau-feasible for every positive tau.
    let mut eq = remedia_core::OutcomeEquation::zero("aggregate", 2);
    eq.alpha = vec![0.2, 0.2];
    eq.beta = vec![0.1, 0.1];
    eq.gamma = vec![0.05, 0.05];
    eq.theta = vec![0.3, 0.3];
    let constant_model = FittedModel {
        categories: truth.scenario.groups.clone(),
        outcomes: vec![eq],
    };
    for tau in [1e-9, 1e-6, 1e-3, 0.1, 0.567, 10.0] {
        let result = check_feasibility(
            &constant_model,
            &truth.scenario,
            &neighbors,
            &InterventionVector::from_indices(2, &[1]),
            &[ConstraintSpec::CounterfactualPrivilege { tau }],
            None,
        )
        .unwrap();
        check(
            &mut failures,
            result.feasible,
            format!("category-constant model infeasible at tau = {tau}"),
        );
    }
    report(6, "constraint semantics", failures);
}

#[test]
fn criterion_7_interference_invariants() {
    let mut failures = Vec::new();
    let cases = 1000;

    // Monotonicity: flipping any entry 0 -> 1 never decreases maxCalc.
    let mut runner = TestRunner::new(PropConfig {
        cases,
        ..PropConfig::default()
    });
    let strategy = (
        0u64..500,
        proptest::collection::vec(any::<bool>(), 12),
        0usize..12,
    );
    let result = runner.run(&strategy, |(seed, bits, j)| {
        let truth = gen_random(
            seed,
            &RandomScenarioConfig {
                m: 12,
                ..RandomScenarioConfig::default()
            },
        )
        .unwrap();
        let neighbors = build_neighbor_structure(&truth.scenario);
        let z1 = InterventionVector(bits.clone());
        let mut up = bits;
        up[j] = true;
        let z2 = InterventionVector(up);
        let f1 = build_features(&truth.scenario, &neighbors, &z1).unwrap();
        let f2 = build_features(&truth.scenario, &neighbors, &z2).unwrap();
        for i in 0..12 {
            prop_assert!(f2.max_calc[i] >= f1.max_calc[i]);
        }
        Ok(())
    });
    check(
        &mut failures,
        result.is_ok(),
        format!("monotonicity property failed: {result:?}"),
    );

    // Idempotence: flipping z at a set that already offers the course
    // changes nothing.
    let mut runner = TestRunner::new(PropConfig {
        cases,
        ..PropConfig::default()
    });
    let result = runner.run(&strategy, |(seed, bits, j)| {
        let truth = gen_random(
            seed,
            &RandomScenarioConfig {
                m: 12,
                calc_prob: 1.0,
                ..RandomScenarioConfig::default()
            },
        )
        .unwrap();
        let neighbors = build_neighbor_structure(&truth.scenario);
        let mut z_off = bits.clone();
        z_off[j] = false;
        let mut z_on = bits;
        z_on[j] = true;
        let e_off = scm::predict(
            &truth.model,
            &truth.scenario,
            &neighbors,
            &InterventionVector(z_off),
        )
        .unwrap();
        let e_on = scm::predict(
            &truth.model,
            &truth.scenario,
            &neighbors,
            &InterventionVector(z_on),
        )
        .unwrap();
        prop_assert_eq!(e_off, e_on);
        Ok(())
    });
    check(
        &mut failures,
        result.is_ok(),
        format!("idempotence property failed: {result:?}"),
    );

    // K = 0: predictions depend only on the set's own intervention.
    let mut runner = TestRunner::new(PropConfig {
        cases,
        ..PropConfig::default()
    });
    let strategy_k0 = (
        0u64..500,
        proptest::collection::vec(any::<bool>(), 12),
        0usize..12,
        0usize..12,
    );
    let result = runner.run(&strategy_k0, |(seed, bits, i, j)| {
        prop_assume!(i != j);
        let truth = gen_random(
            seed,
            &RandomScenarioConfig {
                m: 12,
                neighbor_k: 0,
                ..RandomScenarioConfig::default()
            },
        )
        .unwrap();
        let neighbors = build_neighbor_structure(&truth.scenario);
        let z1 = InterventionVector(bits.clone());
        let mut flipped = bits;
        flipped[j] = !flipped[j];
        let z2 = InterventionVector(flipped);
        let e1 = scm::predict(&truth.model, &truth.scenario, &neighbors, &z1).unwrap();
        let e2 = scm::predict(&truth.model, &truth.scenario, &neighbors, &z2).unwrap();
        for k in 0..truth.scenario.num_groups() {
            prop_assert_eq!(e1[(i, k)], e2[(i, k)]);
        }
        Ok(())
    });
    check(
        &mut failures,
        result.is_ok(),
        format!("non-interference reduction failed: {result:?}"),
    );

    report(7, "interference invariants", failures);
}

#[test]
fn criterion_8_milp_export_soundness() {
    let mut failures = Vec::new();
    let specs = [
        ObjectiveSpec::AcrossPopulationPairwise,
        ObjectiveSpec::WithinSetPairwise,
        ObjectiveSpec::AggregateImpact,
    ];
    for seed in 0..20u64 {
        let config = RandomScenarioConfig {
            m: 6 + (seed % 6) as usize,
            r: 2 + (seed % 2) as usize,
            ..RandomScenarioConfig::default()
        };
        let truth = gen_random(seed, &config).unwrap();
        let neighbors = build_neighbor_structure(&truth.scenario);
        let constraints = [ConstraintSpec::Budget { b: 2 }];
        let opts = SolveOptions::default();
        let spec = &specs[(seed % 3) as usize];

        let built = milp::build_milp(
            &truth.model,
            &truth.scenario,
            &neighbors,
            spec,
            &constraints,
            &opts,
        )
        .unwrap();
        let reparsed = milp::parse_lp(&milp::write_lp(&built)).unwrap();
        check(
            &mut failures,
            built == reparsed,
            format!("seed {seed}: reparsed LP differs from the built model"),
        );

        let optimum = solve_enumerate(
            &truth.model,
            &truth.scenario,
            &neighbors,
            spec,
            &constraints,
            &opts,
        )
        .unwrap();
        let assignment = milp::implied_assignment(
            &truth.model,
            &truth.scenario,
            &neighbors,
            spec,
            &optimum.z_star,
        )
        .unwrap();
        let lp_value = milp::eval_objective(&built, &assignment).unwrap();
        check(
            &mut failures,
            (lp_value - optimum.objective_value).abs() < 1e-9,
            format!(
                "seed {seed} objective {}: LP value {lp_value} != native {}",
                spec.name(),
                optimum.objective_value
            ),
        );
    }
    report(8, "MILP export soundness", failures);
}
