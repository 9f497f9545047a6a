//! Command implementations: ingest, fit, solve, compare, generate, export.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use remedia_core::solve;
use remedia_core::{
    build_neighbor_structure, change_report, check_feasibility, fit, fit_aggregate, load_scenario,
    milp, observed_disparity, predict, save_model, write_scenario, ConstraintSpec, FitOptions,
    FittedModel, InterventionVector, NeighborStructure, ObjectiveSpec, PairConvention, Scenario,
    ScenarioOptions, SolveOptions, SolveResult,
};

use crate::config::{
    parse_objective, resolve_constraints, ConstraintEntry, FileConfig, Mode, SolverChoice,
};
use crate::output;

pub struct CommonInputs {
    pub sets: Option<PathBuf>,
    pub slices: Option<PathBuf>,
    pub weights: Option<PathBuf>,
    pub neighbor_k: Option<usize>,
    pub config: Option<PathBuf>,
}

pub struct SolveInputs {
    pub common: CommonInputs,
    pub model: Option<PathBuf>,
    pub objective: Option<String>,
    pub kappa: Option<f64>,
    pub budget: Option<usize>,
    pub solver: Option<String>,
    pub seed: Option<u64>,
    pub mode: Option<String>,
    pub out: Option<PathBuf>,
    pub eta: Option<f64>,
    pub tau: Option<f64>,
    pub ordered_pairs: bool,
    pub weighted_fit: bool,
    pub enumeration_limit: Option<u128>,
    pub restarts: Option<usize>,
    pub variants: Option<String>,
}

/// Fully-merged run settings (flags over file over defaults).
pub struct Settings {
    pub sets: PathBuf,
    pub slices: PathBuf,
    pub weights: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub neighbor_k: usize,
    pub objective: ObjectiveSpec,
    pub constraints: Vec<ConstraintEntry>,
    pub solver: SolverChoice,
    pub seed: u64,
    pub mode: Mode,
    pub out: Option<PathBuf>,
    pub eta: f64,
    pub tau: Option<f64>,
    pub pairs: PairConvention,
    pub weighted_fit: bool,
    pub enumeration_limit: u128,
    pub restarts: usize,
    pub variants: Vec<String>,
}

impl Settings {
    pub fn merge(inputs: &SolveInputs) -> Result<Settings> {
        let file = match &inputs.common.config {
            Some(path) => FileConfig::load(path)?,
            None => FileConfig::default(),
        };
        let sets = inputs
            .common
            .sets
            .clone()
            .or(file.sets)
            .context("--sets (or `sets` in the config file) is required")?;
        let slices = inputs
            .common
            .slices
            .clone()
            .or(file.slices)
            .context("--slices (or `slices` in the config file) is required")?;
        let mode: Mode = inputs
            .mode
            .clone()
            .or(file.mode)
            .unwrap_or_else(|| "ir".to_string())
            .parse()?;
        let objective_name = inputs
            .objective
            .clone()
            .or(file.objective)
            .unwrap_or_else(|| match mode {
                Mode::Ir => "across-pairwise".to_string(),
                Mode::Dip => "aggregate".to_string(),
            });
        let kappa = inputs.kappa.or(file.kappa);
        let objective = parse_objective(&objective_name, kappa)?;
        let solver: SolverChoice = inputs
            .solver
            .clone()
            .or(file.solver)
            .unwrap_or_else(|| "bnb".to_string())
            .parse()?;

        let mut constraints = file.constraint.clone();
        if let Some(b) = inputs.budget.or(file.budget) {
            constraints.retain(|c| !matches!(c, ConstraintEntry::Budget { .. }));
            constraints.insert(0, ConstraintEntry::Budget { b });
        }
        if let Some(eta) = inputs.eta {
            constraints.retain(|c| !matches!(c, ConstraintEntry::NoHarmAcross { .. }));
            constraints.push(ConstraintEntry::NoHarmAcross { eta: Some(eta) });
        }
        let tau = inputs.tau.or(file.tau);
        if let Some(tau) = inputs.tau {
            constraints.retain(|c| !matches!(c, ConstraintEntry::CounterfactualPrivilege { .. }));
            constraints.push(ConstraintEntry::CounterfactualPrivilege { tau });
        }

        let variants = match (&inputs.variants, &file.variants) {
            (Some(list), _) => list.split(',').map(|s| s.trim().to_string()).collect(),
            (None, Some(list)) => list.clone(),
            (None, None) => {
                let mut v = vec![
                    "ir".to_string(),
                    "ir-noharm".to_string(),
                    "dip-unconstrained".to_string(),
                ];
                if tau.is_some() {
                    v.push("dip-tau".to_string());
                }
                v
            }
        };

        Ok(Settings {
            sets,
            slices,
            weights: inputs.common.weights.clone().or(file.weights),
            model: inputs.model.clone().or(file.model),
            neighbor_k: inputs.common.neighbor_k.or(file.neighbor_k).unwrap_or(5),
            objective,
            constraints,
            solver,
            seed: inputs.seed.or(file.seed).unwrap_or(0),
            mode,
            out: inputs.out.clone().or(file.out),
            eta: inputs.eta.or(file.eta).unwrap_or(0.0),
            tau,
            pairs: if inputs.ordered_pairs || file.ordered_pairs.unwrap_or(false) {
                PairConvention::Ordered
            } else {
                PairConvention::Unordered
            },
            weighted_fit: inputs.weighted_fit || file.weighted_fit.unwrap_or(false),
            enumeration_limit: inputs
                .enumeration_limit
                .or(file.enumeration_limit)
                .unwrap_or(2_000_000),
            restarts: inputs.restarts.or(file.restarts).unwrap_or(2),
            variants,
        })
    }

    pub fn load_scenario(&self) -> Result<(Scenario, NeighborStructure)> {
        let options = ScenarioOptions {
            neighbor_k: self.neighbor_k,
            weights_path: self.weights.clone(),
        };
        let scenario = load_scenario(&self.sets, &self.slices, &options)?;
        let neighbors = build_neighbor_structure(&scenario);
        Ok((scenario, neighbors))
    }

    fn solve_options(&self, dip_model: Option<FittedModel>) -> SolveOptions {
        SolveOptions {
            enumeration_limit: self.enumeration_limit,
            parallel: true,
            pairs: self.pairs,
            restarts: self.restarts,
            dip_model,
        }
    }

    fn run_solver(
        &self,
        model: &FittedModel,
        scenario: &Scenario,
        neighbors: &NeighborStructure,
        objective: &ObjectiveSpec,
        constraints: &[ConstraintSpec],
        opts: &SolveOptions,
    ) -> Result<SolveResult> {
        let result = match self.solver {
            SolverChoice::Enumerate => {
                solve::solve_enumerate(model, scenario, neighbors, objective, constraints, opts)?
            }
            SolverChoice::BranchBound => {
                solve::solve_branch_bound(model, scenario, neighbors, objective, constraints, opts)?
            }
            SolverChoice::Local => solve::solve_local_search(
                model,
                scenario,
                neighbors,
                objective,
                constraints,
                self.seed,
                opts,
            )?,
        };
        Ok(result)
    }
}

/// Disparity measure used for reporting: the configured objective when it is
/// a disparity variant, otherwise the across-population measure.
fn report_spec(objective: &ObjectiveSpec) -> ObjectiveSpec {
    if objective.is_disparity() {
        objective.clone()
    } else {
        ObjectiveSpec::AcrossPopulationPairwise
    }
}

pub fn cmd_validate(settings: &Settings) -> Result<i32> {
    let (scenario, neighbors) = settings.load_scenario()?;
    let (per_group, _, grand) = scenario.integer_totals();
    println!(
        "ok: {} sets, {} groups, {} individuals",
        scenario.num_sets(),
        scenario.num_groups(),
        grand
    );
    for (k, g) in scenario.groups.iter().enumerate() {
        println!("  group {g}: {}", per_group[k]);
    }
    println!("neighborhood size: {}", neighbors.neighbors(0).len());
    if scenario.has_weights() {
        println!("weights: overridden from file");
    }
    Ok(0)
}

fn fit_models(
    settings: &Settings,
    scenario: &Scenario,
    neighbors: &NeighborStructure,
    need_dip: bool,
) -> Result<(FittedModel, Option<FittedModel>)> {
    let fit_options = FitOptions {
        weighted: settings.weighted_fit,
    };
    let model = match &settings.model {
        Some(path) => {
            let loaded = remedia_core::load_model(path)
                .with_context(|| format!("loading model {}", path.display()))?;
            match settings.mode {
                Mode::Dip if !loaded.is_aggregate() => {
                    bail!("dip mode needs an aggregate (single-outcome) model file")
                }
                Mode::Ir if loaded.is_aggregate() => {
                    bail!("ir mode needs a disaggregated model file")
                }
                _ => loaded,
            }
        }
        None => match settings.mode {
            Mode::Dip => fit_aggregate(scenario, neighbors, &fit_options)?,
            Mode::Ir => fit(scenario, neighbors, &fit_options)?,
        },
    };
    let dip = if need_dip && !model.is_aggregate() {
        Some(fit_aggregate(scenario, neighbors, &fit_options)?)
    } else {
        None
    };
    Ok((model, dip))
}

fn wants_tau(constraints: &[ConstraintEntry]) -> bool {
    constraints
        .iter()
        .any(|c| matches!(c, ConstraintEntry::CounterfactualPrivilege { .. }))
}

pub fn cmd_fit(settings: &Settings) -> Result<i32> {
    let (scenario, neighbors) = settings.load_scenario()?;
    let (model, _) = fit_models(settings, &scenario, &neighbors, false)?;
    let out = settings
        .out
        .as_ref()
        .context("--out directory is required for fit")?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let path = out.join("model.txt");
    save_model(&model, &path)?;
    println!("model written to {}", path.display());
    for eq in &model.outcomes {
        println!(
            "  outcome {}: rss {:.6e}, rank {}, condition {:.3e}",
            eq.label, eq.diagnostics.rss, eq.diagnostics.rank, eq.diagnostics.condition
        );
    }
    Ok(0)
}

pub fn cmd_solve(settings: &Settings) -> Result<i32> {
    let (scenario, neighbors) = settings.load_scenario()?;
    if settings.mode == Mode::Dip && settings.objective != ObjectiveSpec::AggregateImpact {
        bail!("dip mode solves the aggregate objective; pass --objective aggregate or use ir mode");
    }
    let need_dip = settings.mode == Mode::Ir && wants_tau(&settings.constraints);
    let (model, dip_model) = fit_models(settings, &scenario, &neighbors, need_dip)?;
    let constraints = resolve_constraints(&settings.constraints, &scenario)?;
    let opts = settings.solve_options(dip_model.clone());
    let result = settings.run_solver(
        &model,
        &scenario,
        &neighbors,
        &settings.objective,
        &constraints,
        &opts,
    )?;

    let zeros = InterventionVector::zeros(scenario.num_sets());
    let e_pre = predict(&model, &scenario, &neighbors, &zeros)?;
    let e_post = predict(&model, &scenario, &neighbors, &result.z_star)?;
    let spec = report_spec(&settings.objective);
    let report = change_report(&e_pre, &e_post, &scenario, &spec)?;
    let observed = observed_disparity(&scenario, &spec).ok();

    let violations: Vec<String> = if result.feasible {
        Vec::new()
    } else {
        check_feasibility(
            &model,
            &scenario,
            &neighbors,
            &result.z_star,
            &constraints,
            dip_model.as_ref(),
        )?
        .violations()
        .iter()
        .map(|v| format!("{} [{}]: margin {:.6}", v.constraint, v.component, v.margin))
        .collect()
    };

    let budget = constraints
        .iter()
        .find_map(|c| match c {
            ConstraintSpec::Budget { b } => Some(*b),
            _ => None,
        })
        .unwrap_or(0);
    let summary = output::summary_text(&output::SummaryInputs {
        mode: match settings.mode {
            Mode::Ir => "ir",
            Mode::Dip => "dip",
        },
        objective: settings.objective.name(),
        solver: settings.solver.name(),
        budget,
        observed_disparity: observed,
        report: &report,
        result: &result,
        scenario: &scenario,
        violations: violations.clone(),
    });

    if let Some(out) = &settings.out {
        std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        output::write_text(
            &out.join("result.csv"),
            &output::result_csv(&scenario, &result),
        )?;
        output::write_text(&out.join("report.csv"), &report.to_csv())?;
        output::write_text(&out.join("summary.txt"), &summary)?;
        output::write_text(
            &out.join("selected.geojson"),
            &output::selected_geojson(&scenario, &result)?,
        )?;
    }
    print!("{summary}");
    println!("wall time: {:.3}s", result.stats.wall_time.as_secs_f64());
    Ok(if result.feasible { 0 } else { 2 })
}

pub fn cmd_compare(settings: &Settings) -> Result<i32> {
    let (scenario, neighbors) = settings.load_scenario()?;
    if settings.mode == Mode::Dip {
        bail!("compare evaluates all variants on the disaggregated model; use ir mode");
    }
    let fit_options = FitOptions {
        weighted: settings.weighted_fit,
    };
    let (model, _) = fit_models(settings, &scenario, &neighbors, false)?;
    let needs_dip_model = settings.variants.iter().any(|v| v == "dip-tau");
    let dip_model = if needs_dip_model {
        Some(fit_aggregate(&scenario, &neighbors, &fit_options)?)
    } else {
        None
    };

    let budget = settings
        .constraints
        .iter()
        .find_map(|c| match c {
            ConstraintEntry::Budget { b } => Some(*b),
            _ => None,
        })
        .context("compare requires a budget (--budget or a budget constraint)")?;
    let base = vec![ConstraintSpec::Budget { b: budget }];
    let disparity_spec = report_spec(&settings.objective);

    let zeros = InterventionVector::zeros(scenario.num_sets());
    let e_pre = predict(&model, &scenario, &neighbors, &zeros)?;
    let baseline_report = change_report(&e_pre, &e_pre, &scenario, &disparity_spec)?;
    let mut rows = vec![output::CompareRow {
        variant: "none".to_string(),
        per_group_pct: baseline_report
            .groups
            .iter()
            .map(|g| g.pct_change)
            .collect(),
        aggregate_pct: baseline_report.aggregate.pct_change,
        disparity: baseline_report.disparity_pre,
        feasible: true,
    }];

    for variant in &settings.variants {
        let (objective, constraints, opts) = match variant.as_str() {
            "ir" => (
                disparity_spec.clone(),
                base.clone(),
                settings.solve_options(None),
            ),
            "ir-noharm" => {
                let mut cs = base.clone();
                cs.push(ConstraintSpec::NoHarmAcross { eta: settings.eta });
                (disparity_spec.clone(), cs, settings.solve_options(None))
            }
            "dip-unconstrained" => (
                ObjectiveSpec::AggregateImpact,
                base.clone(),
                settings.solve_options(None),
            ),
            "dip-tau" => {
                let tau = settings.tau.context("variant dip-tau requires --tau")?;
                let mut cs = base.clone();
                cs.push(ConstraintSpec::CounterfactualPrivilege { tau });
                (
                    ObjectiveSpec::AggregateImpact,
                    cs,
                    settings.solve_options(dip_model.clone()),
                )
            }
            other => bail!(
                "unknown variant `{other}` (expected ir, ir-noharm, dip-unconstrained, dip-tau)"
            ),
        };
        let result = settings.run_solver(
            &model,
            &scenario,
            &neighbors,
            &objective,
            &constraints,
            &opts,
        )?;
        let e_post = predict(&model, &scenario, &neighbors, &result.z_star)?;
        let report = change_report(&e_pre, &e_post, &scenario, &disparity_spec)?;
        rows.push(output::CompareRow {
            variant: variant.clone(),
            per_group_pct: report.groups.iter().map(|g| g.pct_change).collect(),
            aggregate_pct: report.aggregate.pct_change,
            disparity: report.disparity_post,
            feasible: result.feasible,
        });
    }

    let csv = output::compare_csv(&scenario.groups, &rows);
    let table = output::compare_table(&scenario.groups, &rows);
    if let Some(out) = &settings.out {
        std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        output::write_text(&out.join("compare.csv"), &csv)?;
        output::write_text(&out.join("compare.txt"), &table)?;
    }
    print!("{table}");
    Ok(if rows.iter().all(|r| r.feasible) {
        0
    } else {
        2
    })
}

fn write_generated(
    truth: &remedia_core::GroundTruth,
    out: &Path,
    budget: usize,
    reference_model: bool,
) -> Result<()> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_scenario(&truth.scenario, out)?;
    save_model(&truth.model, &out.join("truth_model.txt"))?;
    let model_line = if reference_model {
        "model = \"truth_model.txt\"\n"
    } else {
        ""
    };
    let config = format!(
        "sets = \"sets.csv\"\nslices = \"slices.csv\"\n{model_line}neighbor_k = {}\n\
         objective = \"across-pairwise\"\nbudget = {}\nsolver = \"bnb\"\nmode = \"ir\"\n",
        truth.scenario.neighbor_k, budget
    );
    output::write_text(&out.join("config.toml"), &config)?;
    println!(
        "wrote sets.csv, slices.csv, truth_model.txt, config.toml to {}",
        out.display()
    );
    Ok(())
}

pub fn cmd_gen_toy(out: &Path) -> Result<i32> {
    let truth = remedia_core::toy_career_fair();
    // The example's spillover effect is not identifiable from its two
    // null-intervention observations, so the config points at the generating
    // model rather than refitting.
    write_generated(&truth, out, 1, true)?;
    Ok(0)
}

pub struct GenRandomInputs {
    pub seed: u64,
    pub m: usize,
    pub r: usize,
    pub noise_sd: f64,
    pub neighbor_k: usize,
    pub out: PathBuf,
}

pub fn cmd_gen_random(inputs: &GenRandomInputs) -> Result<i32> {
    let config = remedia_core::RandomScenarioConfig {
        m: inputs.m,
        r: inputs.r,
        noise_sd: inputs.noise_sd,
        neighbor_k: inputs.neighbor_k,
        ..remedia_core::RandomScenarioConfig::default()
    };
    let truth = remedia_core::gen_random(inputs.seed, &config)?;
    if truth.truncated > 0 {
        eprintln!(
            "warning: {} noisy outcomes were clipped into [0, 1]",
            truth.truncated
        );
    }
    write_generated(&truth, &inputs.out, 3.min(inputs.m), false)?;
    Ok(0)
}

pub fn cmd_export_milp(settings: &Settings, lp_out: &Path) -> Result<i32> {
    let (scenario, neighbors) = settings.load_scenario()?;
    let need_dip = settings.mode == Mode::Ir && wants_tau(&settings.constraints);
    let (model, dip_model) = fit_models(settings, &scenario, &neighbors, need_dip)?;
    let constraints = resolve_constraints(&settings.constraints, &scenario)?;
    let opts = settings.solve_options(dip_model);
    let milp = milp::export_milp(
        &model,
        &scenario,
        &neighbors,
        &settings.objective,
        &constraints,
        &opts,
        lp_out,
    )?;
    println!(
        "wrote {} ({} rows, {} binaries)",
        lp_out.display(),
        milp.rows.len(),
        milp.binaries.len()
    );
    Ok(0)
}
