//! Optimizers over binary intervention vectors: exact enumeration, interval
//! branch-and-bound, and a greedy/swap local search.
//!
//! All solvers evaluate candidates through the same [`Evaluator`]-backed path
//! as `scm::predict` and `constraint::check_feasibility`, so objective values
//! and feasibility decisions are bit-identical across solvers. Branch-and-
//! bound prunes with interval bounds whose floating-point arithmetic is
//! monotone in the interval endpoints, which keeps pruning exact: a pruned
//! subtree can never contain a candidate that beats the incumbent.

use std::time::{Duration, Instant};

use itertools::Itertools;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::iter::{ParallelBridge, ParallelIterator};

use crate::constraint::{self, ConstraintSpec, TAU_STRICTNESS};
use crate::error::{CoreError, Result};
use crate::objective::{self, ObjectiveSpec, PairConvention, Sense};
use crate::scenario::{NeighborStructure, Scenario};
use crate::scm::{self, Evaluator, FittedModel, InterventionVector};

/// Options shared by the solvers.
#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Maximum number of candidates `solve_enumerate` may visit.
    pub enumeration_limit: u128,
    /// Evaluate enumeration candidates in parallel; the reduction is a total
    /// order so results do not depend on scheduling.
    pub parallel: bool,
    pub pairs: PairConvention,
    /// Extra random restarts for local search.
    pub restarts: usize,
    /// Aggregate model backing counterfactual-privilege constraints when the
    /// objective model is disaggregated.
    pub dip_model: Option<FittedModel>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            enumeration_limit: 2_000_000,
            parallel: true,
            pairs: PairConvention::Unordered,
            restarts: 2,
            dip_model: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveStats {
    pub solver: String,
    pub nodes_explored: u64,
    pub candidates_evaluated: u64,
    pub restarts: u64,
    pub wall_time: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub z_star: InterventionVector,
    pub objective_value: f64,
    pub feasible: bool,
    /// Group means under the null intervention, when defined.
    pub pre_means: Option<Vec<f64>>,
    /// Group means under `z_star`, when defined.
    pub post_means: Option<Vec<f64>>,
    pub stats: SolveStats,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
struct CandidateEval {
    z: Vec<bool>,
    objective: f64,
    feasible: bool,
    violation: f64,
}

fn objective_beats(a: f64, az: &[bool], b: f64, bz: &[bool], sense: Sense) -> bool {
    let strictly = match sense {
        Sense::Minimize => a < b,
        Sense::Maximize => a > b,
    };
    strictly || (a == b && az < bz)
}

/// Strict total order: feasibility first, then objective by sense, then the
/// lexicographically smallest vector (index 0 most significant).
fn better(a: &CandidateEval, b: &CandidateEval, sense: Sense) -> bool {
    match (a.feasible, b.feasible) {
        (true, false) => true,
        (false, true) => false,
        (true, true) => objective_beats(a.objective, &a.z, b.objective, &b.z, sense),
        (false, false) => {
            a.violation < b.violation
                || (a.violation == b.violation
                    && objective_beats(a.objective, &a.z, b.objective, &b.z, sense))
        }
    }
}

fn budget_from(constraints: &[ConstraintSpec], m: usize) -> Result<usize> {
    constraints
        .iter()
        .find_map(|c| match c {
            ConstraintSpec::Budget { b } => Some((*b).min(m)),
            _ => None,
        })
        .ok_or(CoreError::MissingBudget)
}

/// Number of candidates with at most `b` ones; saturates above `cap`.
fn count_candidates(m: usize, b: usize, cap: u128) -> u128 {
    let mut total: u128 = 0;
    let mut c: u128 = 1;
    for j in 0..=b.min(m) {
        if j > 0 {
            c = match c.checked_mul((m - j + 1) as u128) {
                Some(v) => v / j as u128,
                None => return cap.saturating_add(1),
            };
        }
        total = total.saturating_add(c);
        if total > cap {
            return total;
        }
    }
    total
}

struct TauContext {
    /// Spillover slope of the factual expectation per set.
    slope_rho: Vec<f64>,
    base_rho: Vec<f64>,
    /// Spillover slope of the one-hot counterfactual expectation per category.
    slope_cat: Vec<f64>,
    /// z-independent part of the counterfactual expectation, per (set, category).
    base_cat: Vec<Vec<f64>>,
    tau: Vec<f64>,
}

struct Ctx<'a> {
    scenario: &'a Scenario,
    neighbors: &'a NeighborStructure,
    objective: &'a ObjectiveSpec,
    constraints: &'a [ConstraintSpec],
    pairs: PairConvention,
    evaluator: Evaluator,
    expected_0: nalgebra::DMatrix<f64>,
    mu_0: Option<Vec<f64>>,
    tau_model: Option<FittedModel>,
    tau_ctx: Option<TauContext>,
    budget: usize,
    m: usize,
}

impl<'a> Ctx<'a> {
    fn new(
        model: &FittedModel,
        scenario: &'a Scenario,
        neighbors: &'a NeighborStructure,
        objective: &'a ObjectiveSpec,
        constraints: &'a [ConstraintSpec],
        opts: &SolveOptions,
    ) -> Result<Self> {
        let m = scenario.num_sets();
        let budget = budget_from(constraints, m)?;
        let evaluator = Evaluator::new(model, scenario, neighbors)?;
        let expected_0 = evaluator.expected(&vec![false; m]);
        let mu_0 = objective::group_means(&expected_0, scenario).ok();

        let wants_tau = constraints
            .iter()
            .any(|c| matches!(c, ConstraintSpec::CounterfactualPrivilege { .. }));
        let (tau_model, tau_ctx) = if wants_tau {
            let tau_model = if model.is_aggregate() {
                model.clone()
            } else {
                opts.dip_model
                    .clone()
                    .ok_or(CoreError::TauRequiresAggregateModel)?
            };
            if !tau_model.is_aggregate() {
                return Err(CoreError::TauRequiresAggregateModel);
            }
            if tau_model.categories != scenario.groups {
                return Err(CoreError::GroupMismatch {
                    model: tau_model.categories.clone(),
                    scenario: scenario.groups.clone(),
                });
            }
            let features = scm::build_features(scenario, neighbors, &InterventionVector::zeros(m))?;
            let eq = &tau_model.outcomes[0];
            let r = scenario.num_groups();
            let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
            let mut slope_rho = Vec::with_capacity(m);
            let mut base_rho = Vec::with_capacity(m);
            let mut base_cat = Vec::with_capacity(m);
            for i in 0..m {
                let rho = scenario.proportions(i);
                slope_rho.push(dot(&eq.alpha, rho));
                base_rho.push(
                    (dot(&eq.beta, rho) * features.max_ap[i]
                        + dot(&eq.gamma, rho) * features.counselors[i])
                        + dot(&eq.theta, rho),
                );
                base_cat.push(
                    (0..r)
                        .map(|c| {
                            (eq.beta[c] * features.max_ap[i] + eq.gamma[c] * features.counselors[i])
                                + eq.theta[c]
                        })
                        .collect(),
                );
            }
            let taus = constraints
                .iter()
                .filter_map(|c| match c {
                    ConstraintSpec::CounterfactualPrivilege { tau } => Some(*tau),
                    _ => None,
                })
                .collect();
            let slope_cat = eq.alpha.clone();
            (
                Some(tau_model),
                Some(TauContext {
                    slope_rho,
                    base_rho,
                    slope_cat,
                    base_cat,
                    tau: taus,
                }),
            )
        } else {
            (None, None)
        };

        let ctx = Ctx {
            scenario,
            neighbors,
            objective,
            constraints,
            pairs: opts.pairs,
            evaluator,
            expected_0,
            mu_0,
            tau_model,
            tau_ctx,
            budget,
            m,
        };
        // Surface evaluation errors (empty groups, shape mismatches) on the
        // null candidate before any search starts.
        ctx.evaluate(&vec![false; m])?;
        Ok(ctx)
    }

    fn evaluate(&self, z: &[bool]) -> Result<CandidateEval> {
        let e = self.evaluator.expected(z);
        let value = objective::evaluate(&e, self.scenario, self.objective, self.pairs)?;
        let privilege = match &self.tau_model {
            Some(model) => Some(scm::privilege_table(
                model,
                self.scenario,
                self.neighbors,
                &InterventionVector(z.to_vec()),
            )?),
            None => None,
        };
        let ones = z.iter().filter(|&&b| b).count();
        let margins = constraint::compute_margins(
            self.scenario,
            self.constraints,
            &e,
            &self.expected_0,
            privilege.as_deref(),
            ones,
        )?;
        let feasible = margins.iter().all(|m| m.margin >= 0.0);
        let violation = margins.iter().map(|m| (-m.margin).max(0.0)).sum();
        Ok(CandidateEval {
            z: z.to_vec(),
            objective: value,
            feasible,
            violation,
        })
    }

    /// maxCalc per set with indices below `decided` fixed by `z` and the rest
    /// set to `undecided`.
    fn max_calc_partial(&self, z: &[bool], decided: usize, undecided: bool) -> Vec<f64> {
        (0..self.m)
            .map(|i| {
                let mut best = 0.0f64;
                for &(j, s) in &self.evaluator.neighbor_lists[i] {
                    let zj = if j < decided { z[j] } else { undecided };
                    if self.evaluator.calc[j] || zj {
                        best = best.max(s);
                    }
                }
                best
            })
            .collect()
    }

    /// Bounds of one cell over the interval `[mc_lo, mc_hi]`, honoring the
    /// slope sign. The expressions match `Evaluator::expected_from_max_calc`
    /// so degenerate intervals reproduce leaf values bit-for-bit.
    #[inline]
    fn cell_lo_hi(&self, i: usize, k: usize, mc_lo: &[f64], mc_hi: &[f64]) -> (f64, f64) {
        let a = self.evaluator.slope[k][i];
        let b = self.evaluator.baseline[k][i];
        if a >= 0.0 {
            (a * mc_lo[i] + b, a * mc_hi[i] + b)
        } else {
            (a * mc_hi[i] + b, a * mc_lo[i] + b)
        }
    }

    #[inline]
    fn column_weight(&self, i: usize, k: usize) -> f64 {
        let r = self.scenario.num_groups();
        if self.evaluator.num_outcomes == 1 && r > 1 {
            (0..r).map(|g| self.scenario.weight(i, g)).sum()
        } else {
            self.scenario.weight(i, k)
        }
    }

    /// Column-mean bounds mirroring `objective::group_means` accumulation.
    fn mean_bounds(&self, mc_lo: &[f64], mc_hi: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let k_count = self.evaluator.num_outcomes;
        let mut mu_lo = Vec::with_capacity(k_count);
        let mut mu_hi = Vec::with_capacity(k_count);
        for k in 0..k_count {
            let mut num_lo = 0.0;
            let mut num_hi = 0.0;
            let mut den = 0.0;
            for i in 0..self.m {
                let w = self.column_weight(i, k);
                let (e_lo, e_hi) = self.cell_lo_hi(i, k, mc_lo, mc_hi);
                num_lo += w * e_lo;
                num_hi += w * e_hi;
                den += w;
            }
            mu_lo.push(num_lo / den);
            mu_hi.push(num_hi / den);
        }
        (mu_lo, mu_hi)
    }

    /// Bound on the objective over every completion of the node: a lower
    /// bound when minimizing, an upper bound when maximizing.
    fn objective_bound(&self, mc_lo: &[f64], mc_hi: &[f64]) -> f64 {
        let k_count = self.evaluator.num_outcomes;
        match self.objective {
            ObjectiveSpec::AcrossPopulationPairwise => {
                let (mu_lo, mu_hi) = self.mean_bounds(mc_lo, mc_hi);
                let mut total = 0.0;
                for k in 0..k_count {
                    for k2 in (k + 1)..k_count {
                        let gap = (mu_lo[k] - mu_hi[k2]).max(mu_lo[k2] - mu_hi[k]).max(0.0);
                        total += gap;
                    }
                }
                self.pairs.factor() * total
            }
            ObjectiveSpec::WithinSetPairwise => {
                let mut row_lo = vec![0.0; k_count];
                let mut row_hi = vec![0.0; k_count];
                let mut total = 0.0;
                for i in 0..self.m {
                    for k in 0..k_count {
                        let (lo, hi) = self.cell_lo_hi(i, k, mc_lo, mc_hi);
                        row_lo[k] = lo;
                        row_hi[k] = hi;
                    }
                    for k in 0..k_count {
                        for k2 in (k + 1)..k_count {
                            let gap = (row_lo[k] - row_hi[k2])
                                .max(row_lo[k2] - row_hi[k])
                                .max(0.0);
                            total += gap;
                        }
                    }
                }
                self.pairs.factor() * total
            }
            ObjectiveSpec::ThresholdWithin { kappa } => {
                let mut total = 0.0;
                for i in 0..self.m {
                    for k in 0..k_count {
                        let (_, e_hi) = self.cell_lo_hi(i, k, mc_lo, mc_hi);
                        total += (kappa - e_hi).max(0.0);
                    }
                }
                total
            }
            ObjectiveSpec::ThresholdAcross { kappa } => {
                let (_, mu_hi) = self.mean_bounds(mc_lo, mc_hi);
                mu_hi.iter().map(|m| (kappa - m).max(0.0)).sum()
            }
            ObjectiveSpec::AggregateImpact => {
                let mut num = 0.0;
                let mut den = 0.0;
                for i in 0..self.m {
                    for k in 0..k_count {
                        let w = self.column_weight(i, k);
                        let (_, e_hi) = self.cell_lo_hi(i, k, mc_lo, mc_hi);
                        num += w * e_hi;
                        den += w;
                    }
                }
                num / den
            }
        }
    }

    /// Whether some completion of the node can still satisfy every
    /// non-budget constraint (an optimistic margin check).
    fn subtree_maybe_feasible(&self, mc_lo: &[f64], mc_hi: &[f64]) -> bool {
        let mut means: Option<(Vec<f64>, Vec<f64>)> = None;
        for spec in self.constraints {
            match spec {
                ConstraintSpec::Budget { .. } => {}
                ConstraintSpec::NoHarmAcross { eta } => {
                    let mu0 = match &self.mu_0 {
                        Some(v) => v,
                        None => return true,
                    };
                    let (_, mu_hi) = means.get_or_insert_with(|| self.mean_bounds(mc_lo, mc_hi));
                    for k in 0..mu_hi.len() {
                        if (mu_hi[k] - mu0[k]) - eta < 0.0 {
                            return false;
                        }
                    }
                }
                ConstraintSpec::NoHarmWithin { eta, pairs } => {
                    let check = |i: usize, k: usize| -> bool {
                        let (_, e_hi) = self.cell_lo_hi(i, k, mc_lo, mc_hi);
                        (e_hi - self.expected_0[(i, k)]) - eta >= 0.0
                    };
                    match pairs {
                        Some(list) => {
                            for &(i, k) in list {
                                if i < self.m && k < self.evaluator.num_outcomes && !check(i, k) {
                                    return false;
                                }
                            }
                        }
                        None => {
                            for i in 0..self.m {
                                for k in 0..self.evaluator.num_outcomes {
                                    if !check(i, k) {
                                        return false;
                                    }
                                }
                            }
                        }
                    }
                }
                ConstraintSpec::MinRateAcross { kappa } => {
                    let (_, mu_hi) = means.get_or_insert_with(|| self.mean_bounds(mc_lo, mc_hi));
                    for mu in mu_hi.iter() {
                        if mu - kappa < 0.0 {
                            return false;
                        }
                    }
                }
                ConstraintSpec::MinRateWithin { kappa } => {
                    for i in 0..self.m {
                        for k in 0..self.evaluator.num_outcomes {
                            let (_, e_hi) = self.cell_lo_hi(i, k, mc_lo, mc_hi);
                            if e_hi - kappa < 0.0 {
                                return false;
                            }
                        }
                    }
                }
                ConstraintSpec::CounterfactualPrivilege { .. } => {
                    let tau_ctx = match &self.tau_ctx {
                        Some(t) => t,
                        None => return true,
                    };
                    for &tau in &tau_ctx.tau {
                        for i in 0..self.m {
                            let sr = tau_ctx.slope_rho[i];
                            let factual_min = if sr >= 0.0 {
                                sr * mc_lo[i] + tau_ctx.base_rho[i]
                            } else {
                                sr * mc_hi[i] + tau_ctx.base_rho[i]
                            };
                            for cat in 0..tau_ctx.slope_cat.len() {
                                let sc = tau_ctx.slope_cat[cat];
                                let counter_max = if sc >= 0.0 {
                                    sc * mc_hi[i] + tau_ctx.base_cat[i][cat]
                                } else {
                                    sc * mc_lo[i] + tau_ctx.base_cat[i][cat]
                                };
                                let privilege_min = factual_min - counter_max;
                                if (tau - TAU_STRICTNESS) - privilege_min < 0.0 {
                                    return false;
                                }
                            }
                        }
                    }
                }
            }
        }
        true
    }

    fn sense(&self) -> Sense {
        self.objective.sense()
    }
}

fn build_result(
    ctx: &Ctx,
    best: CandidateEval,
    solver: &str,
    nodes: u64,
    evaluated: u64,
    restarts: u64,
    started: Instant,
) -> SolveResult {
    let z_star = InterventionVector(best.z.clone());
    let expected = ctx.evaluator.expected(&best.z);
    let mut warnings = Vec::new();
    if let Some(w) = scm::out_of_range_warning(&expected) {
        warnings.push(w);
    }
    if !best.feasible {
        warnings.push(format!(
            "no feasible candidate; reporting least-violating one (total violation {:.6})",
            best.violation
        ));
    }
    SolveResult {
        objective_value: best.objective,
        feasible: best.feasible,
        pre_means: ctx.mu_0.clone(),
        post_means: objective::group_means(&expected, ctx.scenario).ok(),
        stats: SolveStats {
            solver: solver.to_string(),
            nodes_explored: nodes,
            candidates_evaluated: evaluated,
            restarts,
            wall_time: started.elapsed(),
        },
        warnings,
        z_star,
    }
}

fn candidate_supports(m: usize, b: usize) -> impl Iterator<Item = Vec<usize>> {
    (0..=b.min(m)).flat_map(move |size| (0..m).combinations(size))
}

/// Evaluate every vector with at most `b` interventions and return the
/// feasible optimum (ties to the lexicographically smallest vector). When
/// nothing is feasible, the least-violating candidate is returned with
/// `feasible = false`.
pub fn solve_enumerate(
    model: &FittedModel,
    scenario: &Scenario,
    neighbors: &NeighborStructure,
    objective: &ObjectiveSpec,
    constraints: &[ConstraintSpec],
    opts: &SolveOptions,
) -> Result<SolveResult> {
    let started = Instant::now();
    let ctx = Ctx::new(model, scenario, neighbors, objective, constraints, opts)?;
    let total = count_candidates(ctx.m, ctx.budget, opts.enumeration_limit);
    if total > opts.enumeration_limit {
        return Err(CoreError::EnumerationLimit {
            required: total,
            limit: opts.enumeration_limit,
        });
    }
    let sense = ctx.sense();
    let pick = |a: CandidateEval, b: CandidateEval| if better(&b, &a, sense) { b } else { a };
    let eval_support = |support: Vec<usize>| -> Result<CandidateEval> {
        let mut z = vec![false; ctx.m];
        for j in support {
            z[j] = true;
        }
        ctx.evaluate(&z)
    };
    let best = if opts.parallel {
        candidate_supports(ctx.m, ctx.budget)
            .par_bridge()
            .map(eval_support)
            .try_reduce_with(|a, b| Ok(pick(a, b)))
            .expect("at least the null candidate exists")?
    } else {
        let mut best: Option<CandidateEval> = None;
        for support in candidate_supports(ctx.m, ctx.budget) {
            let eval = eval_support(support)?;
            best = Some(match best {
                None => eval,
                Some(cur) => pick(cur, eval),
            });
        }
        best.expect("at least the null candidate exists")
    };
    Ok(build_result(
        &ctx,
        best,
        "enumerate",
        0,
        total as u64,
        0,
        started,
    ))
}

struct BnbState {
    z: Vec<bool>,
    best: Option<CandidateEval>,
    best_violation: Option<CandidateEval>,
    nodes: u64,
    evaluated: u64,
}

fn bnb_recurse(ctx: &Ctx, st: &mut BnbState, depth: usize, ones: usize) -> Result<()> {
    st.nodes += 1;
    if depth == ctx.m || ones == ctx.budget {
        for j in depth..ctx.m {
            st.z[j] = false;
        }
        let eval = ctx.evaluate(&st.z)?;
        st.evaluated += 1;
        if eval.feasible {
            if st
                .best
                .as_ref()
                .is_none_or(|b| better(&eval, b, ctx.sense()))
            {
                st.best = Some(eval);
            }
        } else if st
            .best_violation
            .as_ref()
            .is_none_or(|b| better(&eval, b, ctx.sense()))
        {
            st.best_violation = Some(eval);
        }
        return Ok(());
    }
    for bit in [false, true] {
        let new_ones = ones + bit as usize;
        if new_ones > ctx.budget {
            continue;
        }
        st.z[depth] = bit;
        let explore = match &st.best {
            None => true,
            Some(best) => {
                let mc_lo = ctx.max_calc_partial(&st.z, depth + 1, false);
                let mc_hi = ctx.max_calc_partial(&st.z, depth + 1, true);
                let bound = ctx.objective_bound(&mc_lo, &mc_hi);
                let not_dominated = match ctx.sense() {
                    Sense::Minimize => bound < best.objective,
                    Sense::Maximize => bound > best.objective,
                };
                not_dominated && ctx.subtree_maybe_feasible(&mc_lo, &mc_hi)
            }
        };
        if explore {
            bnb_recurse(ctx, st, depth + 1, new_ones)?;
        }
    }
    st.z[depth] = false;
    Ok(())
}

/// Exact optimum identical to `solve_enumerate` (same tie-break), found by
/// depth-first branch-and-bound over ascending set indices with interval
/// bounds on the spillover term.
pub fn solve_branch_bound(
    model: &FittedModel,
    scenario: &Scenario,
    neighbors: &NeighborStructure,
    objective: &ObjectiveSpec,
    constraints: &[ConstraintSpec],
    opts: &SolveOptions,
) -> Result<SolveResult> {
    let started = Instant::now();
    let ctx = Ctx::new(model, scenario, neighbors, objective, constraints, opts)?;
    let mut st = BnbState {
        z: vec![false; ctx.m],
        best: None,
        best_violation: None,
        nodes: 0,
        evaluated: 0,
    };
    bnb_recurse(&ctx, &mut st, 0, 0)?;
    let best = st
        .best
        .or(st.best_violation)
        .expect("at least the null candidate was evaluated");
    Ok(build_result(
        &ctx,
        best,
        "branch-bound",
        st.nodes,
        st.evaluated,
        0,
        started,
    ))
}

fn local_improve(ctx: &Ctx, start: CandidateEval, evaluated: &mut u64) -> Result<CandidateEval> {
    let mut current = start;
    // Greedy construction: best single addition until budget or no gain.
    loop {
        if current.z.iter().filter(|&&b| b).count() >= ctx.budget {
            break;
        }
        let mut best_move: Option<CandidateEval> = None;
        for j in 0..ctx.m {
            if current.z[j] {
                continue;
            }
            let mut z = current.z.clone();
            z[j] = true;
            let eval = ctx.evaluate(&z)?;
            *evaluated += 1;
            if better(&eval, &current, ctx.sense())
                && best_move
                    .as_ref()
                    .is_none_or(|b| better(&eval, b, ctx.sense()))
            {
                best_move = Some(eval);
            }
        }
        match best_move {
            Some(mv) => current = mv,
            None => break,
        }
    }
    // 1-swap descent.
    loop {
        let on: Vec<usize> = (0..ctx.m).filter(|&j| current.z[j]).collect();
        let off: Vec<usize> = (0..ctx.m).filter(|&j| !current.z[j]).collect();
        let mut best_move: Option<CandidateEval> = None;
        for &a in &on {
            for &b in &off {
                let mut z = current.z.clone();
                z[a] = false;
                z[b] = true;
                let eval = ctx.evaluate(&z)?;
                *evaluated += 1;
                if better(&eval, &current, ctx.sense())
                    && best_move
                        .as_ref()
                        .is_none_or(|m| better(&eval, m, ctx.sense()))
                {
                    best_move = Some(eval);
                }
            }
        }
        match best_move {
            Some(mv) => current = mv,
            None => break,
        }
    }
    Ok(current)
}

/// Greedy construction plus 1-swap descent with seeded random restarts.
/// Deterministic for a given seed; the result of the best restart wins.
pub fn solve_local_search(
    model: &FittedModel,
    scenario: &Scenario,
    neighbors: &NeighborStructure,
    objective: &ObjectiveSpec,
    constraints: &[ConstraintSpec],
    seed: u64,
    opts: &SolveOptions,
) -> Result<SolveResult> {
    let started = Instant::now();
    let ctx = Ctx::new(model, scenario, neighbors, objective, constraints, opts)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut evaluated = 0u64;
    let mut best: Option<CandidateEval> = None;
    let starts = 1 + opts.restarts;
    for restart in 0..starts {
        let z0 = if restart == 0 {
            vec![false; ctx.m]
        } else {
            let size = if ctx.budget == 0 {
                0
            } else {
                rng.gen_range(0..=ctx.budget)
            };
            let mut indices: Vec<usize> = (0..ctx.m).collect();
            let (chosen, _) = indices.partial_shuffle(&mut rng, size);
            let mut z = vec![false; ctx.m];
            for &j in chosen.iter() {
                z[j] = true;
            }
            z
        };
        let start_eval = ctx.evaluate(&z0)?;
        evaluated += 1;
        let local = local_improve(&ctx, start_eval, &mut evaluated)?;
        if best.as_ref().is_none_or(|b| better(&local, b, ctx.sense())) {
            best = Some(local);
        }
    }
    let best = best.expect("at least one restart ran");
    Ok(build_result(
        &ctx,
        best,
        "local-search",
        0,
        evaluated,
        starts as u64,
        started,
    ))
}
