//! Mixed-integer linear program export in CPLEX LP text format, plus a
//! reader for the same dialect so exported files can be verified in-process.
//!
//! The spillover term is linearized exactly at integer points: `t_j` models
//! `c_j or z_j`, selection binaries `w_i_j` pin `mc_i` to the neighborhood
//! maximum of `s_ij * t_j`, and pairwise absolute differences become `u`
//! variables bounded below by both signed differences (sound for the
//! minimized disparity objectives and skipped for aggregate impact).

use std::collections::BTreeMap;
use std::path::Path;

use crate::constraint::{ConstraintSpec, TAU_STRICTNESS};
use crate::error::{CoreError, Result};
use crate::objective::{self, ObjectiveSpec, Sense};
use crate::scenario::{NeighborStructure, Scenario};
use crate::scm::{Evaluator, FittedModel, InterventionVector};
use crate::solve::SolveOptions;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cmp {
    Le,
    Ge,
    Eq,
}

impl Cmp {
    fn symbol(self) -> &'static str {
        match self {
            Cmp::Le => "<=",
            Cmp::Ge => ">=",
            Cmp::Eq => "=",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub name: String,
    pub terms: Vec<(String, f64)>,
    pub cmp: Cmp,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarBound {
    pub var: String,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MilpModel {
    pub sense: Sense,
    pub objective: Vec<(String, f64)>,
    pub objective_constant: f64,
    pub rows: Vec<Row>,
    pub bounds: Vec<VarBound>,
    pub binaries: Vec<String>,
}

fn sanitize(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect()
}

struct Names {
    z: Vec<String>,
    t: Vec<String>,
    mc: Vec<String>,
    group: Vec<String>,
}

fn names_for(scenario: &Scenario) -> Result<Names> {
    let z: Vec<String> = scenario
        .sets
        .iter()
        .map(|s| format!("z_{}", sanitize(&s.id)))
        .collect();
    let mut unique = z.clone();
    unique.sort();
    unique.dedup();
    if unique.len() != z.len() {
        return Err(CoreError::parse(
            "lp export",
            "set ids collide after sanitization",
        ));
    }
    Ok(Names {
        t: scenario
            .sets
            .iter()
            .map(|s| format!("t_{}", sanitize(&s.id)))
            .collect(),
        mc: (0..scenario.num_sets())
            .map(|i| format!("mc_{i}"))
            .collect(),
        group: scenario.groups.iter().map(|g| sanitize(g)).collect(),
        z,
    })
}

/// Per-column mean decomposition `mu_k = sum_i coef[k][i] * mc_i + constant[k]`.
fn mean_decomposition(
    scenario: &Scenario,
    evaluator: &Evaluator,
) -> (Vec<Vec<f64>>, Vec<f64>, Vec<f64>) {
    let m = scenario.num_sets();
    let r = scenario.num_groups();
    let outcomes = evaluator.num_outcomes;
    let mut coef = vec![vec![0.0; m]; outcomes];
    let mut constant = vec![0.0; outcomes];
    let mut totals = vec![0.0; outcomes];
    for k in 0..outcomes {
        let mut den = 0.0;
        for i in 0..m {
            let w = if outcomes == 1 && r > 1 {
                (0..r).map(|g| scenario.weight(i, g)).sum()
            } else {
                scenario.weight(i, k)
            };
            den += w;
        }
        totals[k] = den;
        for i in 0..m {
            let w = if outcomes == 1 && r > 1 {
                (0..r).map(|g| scenario.weight(i, g)).sum::<f64>()
            } else {
                scenario.weight(i, k)
            };
            coef[k][i] = w * evaluator.slope[k][i] / den;
            constant[k] += w * evaluator.baseline[k][i] / den;
        }
    }
    (coef, constant, totals)
}

/// Build the MILP for a disparity-minimization or aggregate-impact program.
pub fn build_milp(
    model: &FittedModel,
    scenario: &Scenario,
    neighbors: &NeighborStructure,
    objective: &ObjectiveSpec,
    constraints: &[ConstraintSpec],
    opts: &SolveOptions,
) -> Result<MilpModel> {
    match objective {
        ObjectiveSpec::AcrossPopulationPairwise
        | ObjectiveSpec::WithinSetPairwise
        | ObjectiveSpec::AggregateImpact => {}
        other => {
            return Err(CoreError::UnsupportedObjective {
                objective: other.name().to_string(),
                reason: "threshold objectives are not exportable as an MILP".to_string(),
            })
        }
    }
    let names = names_for(scenario)?;
    let evaluator = Evaluator::new(model, scenario, neighbors)?;
    let m = scenario.num_sets();
    let outcomes = evaluator.num_outcomes;
    let factor = opts.pairs.factor();
    let expected_0 = evaluator.expected(&vec![false; m]);

    let mut rows: Vec<Row> = Vec::new();
    let mut binaries: Vec<String> = Vec::new();
    let mut bounds: Vec<VarBound> = Vec::new();
    let mut objective_terms: Vec<(String, f64)> = Vec::new();
    let mut objective_constant = 0.0;

    for i in 0..m {
        binaries.push(names.z[i].clone());
    }
    for i in 0..m {
        binaries.push(names.t[i].clone());
    }

    // t_j = c_j or z_j.
    for i in 0..m {
        let c = scenario.sets[i].offers_calc as u8 as f64;
        rows.push(Row {
            name: format!("t_lo_{}", sanitize(&scenario.sets[i].id)),
            terms: vec![(names.t[i].clone(), 1.0)],
            cmp: Cmp::Ge,
            rhs: c,
        });
        rows.push(Row {
            name: format!("t_z_{}", sanitize(&scenario.sets[i].id)),
            terms: vec![(names.t[i].clone(), 1.0), (names.z[i].clone(), -1.0)],
            cmp: Cmp::Ge,
            rhs: 0.0,
        });
        rows.push(Row {
            name: format!("t_hi_{}", sanitize(&scenario.sets[i].id)),
            terms: vec![(names.t[i].clone(), 1.0), (names.z[i].clone(), -1.0)],
            cmp: Cmp::Le,
            rhs: c,
        });
    }

    // mc_i = max over the neighborhood of s_ij * t_j, via selection binaries.
    for i in 0..m {
        let mut pick_terms = Vec::new();
        for &(j, s) in &evaluator.neighbor_lists[i] {
            let w_name = format!("w_{i}_{j}");
            rows.push(Row {
                name: format!("mc_ge_{i}_{j}"),
                terms: vec![(names.mc[i].clone(), 1.0), (names.t[j].clone(), -s)],
                cmp: Cmp::Ge,
                rhs: 0.0,
            });
            rows.push(Row {
                name: format!("mc_ub_{i}_{j}"),
                terms: vec![
                    (names.mc[i].clone(), 1.0),
                    (names.t[j].clone(), -s),
                    (w_name.clone(), 1.0),
                ],
                cmp: Cmp::Le,
                rhs: 1.0,
            });
            pick_terms.push((w_name.clone(), 1.0));
            binaries.push(w_name);
        }
        rows.push(Row {
            name: format!("mc_pick_{i}"),
            terms: pick_terms,
            cmp: Cmp::Eq,
            rhs: 1.0,
        });
        bounds.push(VarBound {
            var: names.mc[i].clone(),
            lo: 0.0,
            hi: 1.0,
        });
    }

    let (mean_coef, mean_const, totals) = mean_decomposition(scenario, &evaluator);

    // Objective.
    let sense = objective.sense();
    match objective {
        ObjectiveSpec::AcrossPopulationPairwise => {
            for k in 0..outcomes {
                for k2 in (k + 1)..outcomes {
                    let u = format!("u_{}_{}", names.group[k], names.group[k2]);
                    let d_const = mean_const[k] - mean_const[k2];
                    let mut pos = vec![(u.clone(), 1.0)];
                    let mut neg = vec![(u.clone(), 1.0)];
                    for i in 0..m {
                        let d = mean_coef[k][i] - mean_coef[k2][i];
                        if d != 0.0 {
                            pos.push((names.mc[i].clone(), -d));
                            neg.push((names.mc[i].clone(), d));
                        }
                    }
                    rows.push(Row {
                        name: format!("abs_pos_{}_{}", names.group[k], names.group[k2]),
                        terms: pos,
                        cmp: Cmp::Ge,
                        rhs: d_const,
                    });
                    rows.push(Row {
                        name: format!("abs_neg_{}_{}", names.group[k], names.group[k2]),
                        terms: neg,
                        cmp: Cmp::Ge,
                        rhs: -d_const,
                    });
                    objective_terms.push((u, factor));
                }
            }
        }
        ObjectiveSpec::WithinSetPairwise => {
            for i in 0..m {
                for k in 0..outcomes {
                    for k2 in (k + 1)..outcomes {
                        let u = format!("u_{}_{}_{}", i, names.group[k], names.group[k2]);
                        let d_slope = evaluator.slope[k][i] - evaluator.slope[k2][i];
                        let d_const = evaluator.baseline[k][i] - evaluator.baseline[k2][i];
                        rows.push(Row {
                            name: format!("abs_pos_{}_{}_{}", i, names.group[k], names.group[k2]),
                            terms: vec![(u.clone(), 1.0), (names.mc[i].clone(), -d_slope)],
                            cmp: Cmp::Ge,
                            rhs: d_const,
                        });
                        rows.push(Row {
                            name: format!("abs_neg_{}_{}_{}", i, names.group[k], names.group[k2]),
                            terms: vec![(u.clone(), 1.0), (names.mc[i].clone(), d_slope)],
                            cmp: Cmp::Ge,
                            rhs: -d_const,
                        });
                        objective_terms.push((u, factor));
                    }
                }
            }
        }
        ObjectiveSpec::AggregateImpact => {
            let grand: f64 = totals.iter().sum();
            for i in 0..m {
                let mut coef = 0.0;
                for k in 0..outcomes {
                    let w = if outcomes == 1 && scenario.num_groups() > 1 {
                        (0..scenario.num_groups())
                            .map(|g| scenario.weight(i, g))
                            .sum()
                    } else {
                        scenario.weight(i, k)
                    };
                    coef += w * evaluator.slope[k][i] / grand;
                    objective_constant += w * evaluator.baseline[k][i] / grand;
                }
                if coef != 0.0 {
                    objective_terms.push((names.mc[i].clone(), coef));
                }
            }
        }
        _ => unreachable!(),
    }

    // Constraint rows.
    let mu_0 = objective::group_means(&expected_0, scenario).ok();
    for spec in constraints {
        match spec {
            ConstraintSpec::Budget { b } => {
                rows.push(Row {
                    name: "budget".to_string(),
                    terms: names.z.iter().map(|z| (z.clone(), 1.0)).collect(),
                    cmp: Cmp::Le,
                    rhs: (*b).min(m) as f64,
                });
            }
            ConstraintSpec::NoHarmAcross { eta } => {
                let mu_0 = mu_0.as_ref().ok_or_else(|| CoreError::EmptyGroup {
                    group: "(means unavailable)".to_string(),
                })?;
                for k in 0..outcomes {
                    rows.push(Row {
                        name: format!("noharm_{}", names.group[k]),
                        terms: (0..m)
                            .filter(|&i| mean_coef[k][i] != 0.0)
                            .map(|i| (names.mc[i].clone(), mean_coef[k][i]))
                            .collect(),
                        cmp: Cmp::Ge,
                        rhs: eta + mu_0[k] - mean_const[k],
                    });
                }
            }
            ConstraintSpec::NoHarmWithin { eta, pairs } => {
                let all: Vec<(usize, usize)>;
                let chosen: &[(usize, usize)] = match pairs {
                    Some(p) => p,
                    None => {
                        all = (0..m)
                            .flat_map(|i| (0..outcomes).map(move |k| (i, k)))
                            .collect();
                        &all
                    }
                };
                for &(i, k) in chosen {
                    rows.push(Row {
                        name: format!("noharm_{}_{}", i, names.group[k]),
                        terms: vec![(names.mc[i].clone(), evaluator.slope[k][i])],
                        cmp: Cmp::Ge,
                        rhs: eta + expected_0[(i, k)] - evaluator.baseline[k][i],
                    });
                }
            }
            ConstraintSpec::MinRateAcross { kappa } => {
                for k in 0..outcomes {
                    rows.push(Row {
                        name: format!("minrate_{}", names.group[k]),
                        terms: (0..m)
                            .filter(|&i| mean_coef[k][i] != 0.0)
                            .map(|i| (names.mc[i].clone(), mean_coef[k][i]))
                            .collect(),
                        cmp: Cmp::Ge,
                        rhs: kappa - mean_const[k],
                    });
                }
            }
            ConstraintSpec::MinRateWithin { kappa } => {
                for i in 0..m {
                    for k in 0..outcomes {
                        rows.push(Row {
                            name: format!("minrate_{}_{}", i, names.group[k]),
                            terms: vec![(names.mc[i].clone(), evaluator.slope[k][i])],
                            cmp: Cmp::Ge,
                            rhs: kappa - evaluator.baseline[k][i],
                        });
                    }
                }
            }
            ConstraintSpec::CounterfactualPrivilege { tau } => {
                let tau_model = if model.is_aggregate() {
                    model
                } else {
                    opts.dip_model
                        .as_ref()
                        .ok_or(CoreError::TauRequiresAggregateModel)?
                };
                if !tau_model.is_aggregate() {
                    return Err(CoreError::TauRequiresAggregateModel);
                }
                let tau_eval = Evaluator::new(tau_model, scenario, neighbors)?;
                let eq = &tau_model.outcomes[0];
                let features =
                    crate::scm::build_features(scenario, neighbors, &InterventionVector::zeros(m))?;
                for i in 0..m {
                    for (cat, group) in names.group.iter().enumerate() {
                        let slope = tau_eval.slope[0][i] - eq.alpha[cat];
                        let base_cat = (eq.beta[cat] * features.max_ap[i]
                            + eq.gamma[cat] * features.counselors[i])
                            + eq.theta[cat];
                        rows.push(Row {
                            name: format!("tau_{}_{}", i, group),
                            terms: vec![(names.mc[i].clone(), slope)],
                            cmp: Cmp::Le,
                            rhs: (tau - TAU_STRICTNESS) - (tau_eval.baseline[0][i] - base_cat),
                        });
                    }
                }
            }
        }
    }

    Ok(MilpModel {
        sense,
        objective: objective_terms,
        objective_constant,
        rows,
        bounds,
        binaries,
    })
}

fn push_term(out: &mut String, first: bool, coef: f64, var: Option<&str>) {
    let sign = if coef < 0.0 { "-" } else { "+" };
    let abs = coef.abs();
    if first {
        if coef < 0.0 {
            out.push_str("- ");
        }
    } else {
        out.push_str(&format!(" {sign} "));
    }
    out.push_str(&format!("{abs:.16e}"));
    if let Some(v) = var {
        out.push(' ');
        out.push_str(v);
    }
}

/// Render the model in CPLEX LP text format with 17-significant-digit
/// coefficients.
pub fn write_lp(model: &MilpModel) -> String {
    let mut out = String::new();
    out.push_str(match model.sense {
        Sense::Minimize => "Minimize\n",
        Sense::Maximize => "Maximize\n",
    });
    out.push_str(" obj: ");
    let mut first = true;
    for (var, coef) in &model.objective {
        push_term(&mut out, first, *coef, Some(var));
        first = false;
    }
    if model.objective_constant != 0.0 || model.objective.is_empty() {
        push_term(&mut out, first, model.objective_constant, None);
    }
    out.push('\n');
    out.push_str("Subject To\n");
    for row in &model.rows {
        out.push_str(&format!(" {}: ", row.name));
        let mut first = true;
        for (var, coef) in &row.terms {
            push_term(&mut out, first, *coef, Some(var));
            first = false;
        }
        if row.terms.is_empty() {
            push_term(&mut out, true, 0.0, None);
        }
        out.push_str(&format!(" {} {:.16e}\n", row.cmp.symbol(), row.rhs));
    }
    if !model.bounds.is_empty() {
        out.push_str("Bounds\n");
        for b in &model.bounds {
            out.push_str(&format!(" {:.16e} <= {} <= {:.16e}\n", b.lo, b.var, b.hi));
        }
    }
    if !model.binaries.is_empty() {
        out.push_str("Binary\n");
        for name in &model.binaries {
            out.push_str(&format!(" {name}\n"));
        }
    }
    out.push_str("End\n");
    out
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn tokenize(line: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut chars = line.chars().peekable();
    while let Some(&c) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
        } else if c == '+' || c == '-' {
            chars.next();
            tokens.push(c.to_string());
        } else if c == '<' || c == '>' || c == '=' {
            let mut op = String::new();
            op.push(c);
            chars.next();
            if let Some(&'=') = chars.peek() {
                op.push('=');
                chars.next();
            }
            tokens.push(op);
        } else {
            let mut word = String::new();
            while let Some(&c2) = chars.peek() {
                if c2.is_whitespace() || c2 == '<' || c2 == '>' || c2 == '=' || c2 == '+' {
                    break;
                }
                // '-' only binds inside a number exponent (e.g. 1e-3).
                if c2 == '-' && !word.ends_with(['e', 'E']) {
                    break;
                }
                word.push(c2);
                chars.next();
            }
            tokens.push(word);
        }
    }
    tokens
}

struct ExprParse {
    terms: Vec<(String, f64)>,
    constant: f64,
}

fn parse_expr(tokens: &[String], context: &str) -> Result<ExprParse> {
    let mut terms = Vec::new();
    let mut constant = 0.0;
    let mut sign = 1.0;
    let mut pending: Option<f64> = None;
    for tok in tokens {
        match tok.as_str() {
            "+" => {
                if let Some(c) = pending.take() {
                    constant += sign * c;
                }
                sign = 1.0;
            }
            "-" => {
                if let Some(c) = pending.take() {
                    constant += sign * c;
                }
                sign = -1.0;
            }
            word if is_ident_start(word.chars().next().unwrap_or(' ')) => {
                let coef = pending.take().unwrap_or(1.0);
                terms.push((word.to_string(), sign * coef));
                sign = 1.0;
            }
            word => {
                let value: f64 = word
                    .parse()
                    .map_err(|_| CoreError::parse(context, format!("bad token `{word}`")))?;
                if let Some(c) = pending.replace(value) {
                    constant += sign * c;
                    pending = Some(value);
                }
            }
        }
    }
    if let Some(c) = pending {
        constant += sign * c;
    }
    Ok(ExprParse { terms, constant })
}

/// Parse an LP file written by [`write_lp`] back into a [`MilpModel`].
pub fn parse_lp(text: &str) -> Result<MilpModel> {
    let err = |msg: String| CoreError::parse("lp file", msg);
    let mut sense = None;
    let mut objective = Vec::new();
    let mut objective_constant = 0.0;
    let mut rows = Vec::new();
    let mut bounds = Vec::new();
    let mut binaries = Vec::new();

    #[derive(PartialEq)]
    enum Section {
        Start,
        Objective,
        Rows,
        Bounds,
        Binary,
        Done,
    }
    let mut section = Section::Start;

    for raw in text.lines() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('\\') {
            continue;
        }
        match line {
            "Minimize" => {
                sense = Some(Sense::Minimize);
                section = Section::Objective;
                continue;
            }
            "Maximize" => {
                sense = Some(Sense::Maximize);
                section = Section::Objective;
                continue;
            }
            "Subject To" => {
                section = Section::Rows;
                continue;
            }
            "Bounds" => {
                section = Section::Bounds;
                continue;
            }
            "Binary" | "Binaries" => {
                section = Section::Binary;
                continue;
            }
            "End" => {
                section = Section::Done;
                continue;
            }
            _ => {}
        }
        match section {
            Section::Objective => {
                let body = match line.split_once(':') {
                    Some((_, rest)) => rest,
                    None => line,
                };
                let parsed = parse_expr(&tokenize(body), "lp objective")?;
                objective.extend(parsed.terms);
                objective_constant += parsed.constant;
            }
            Section::Rows => {
                let (name, rest) = line
                    .split_once(':')
                    .ok_or_else(|| err(format!("row without name: `{line}`")))?;
                let tokens = tokenize(rest);
                let op_pos = tokens
                    .iter()
                    .position(|t| t == "<=" || t == ">=" || t == "=")
                    .ok_or_else(|| err(format!("row without comparator: `{line}`")))?;
                let cmp = match tokens[op_pos].as_str() {
                    "<=" => Cmp::Le,
                    ">=" => Cmp::Ge,
                    _ => Cmp::Eq,
                };
                let lhs = parse_expr(&tokens[..op_pos], "lp row")?;
                let rhs = parse_expr(&tokens[op_pos + 1..], "lp rhs")?;
                if !rhs.terms.is_empty() {
                    return Err(err(format!("variables on rhs unsupported: `{line}`")));
                }
                rows.push(Row {
                    name: name.trim().to_string(),
                    terms: lhs.terms,
                    cmp,
                    rhs: rhs.constant - lhs.constant,
                });
            }
            Section::Bounds => {
                let tokens = tokenize(line);
                match tokens.as_slice() {
                    [lo, le1, var, le2, hi] if le1 == "<=" && le2 == "<=" => {
                        bounds.push(VarBound {
                            var: var.clone(),
                            lo: lo.parse().map_err(|_| err(format!("bad bound `{lo}`")))?,
                            hi: hi.parse().map_err(|_| err(format!("bad bound `{hi}`")))?,
                        });
                    }
                    _ => return Err(err(format!("unsupported bounds line: `{line}`"))),
                }
            }
            Section::Binary => {
                for tok in line.split_whitespace() {
                    binaries.push(tok.to_string());
                }
            }
            Section::Start | Section::Done => {
                return Err(err(format!("unexpected line outside sections: `{line}`")))
            }
        }
    }
    Ok(MilpModel {
        sense: sense.ok_or_else(|| err("missing objective sense".to_string()))?,
        objective,
        objective_constant,
        rows,
        bounds,
        binaries,
    })
}

/// Variable assignment implied by an intervention vector: binaries from
/// `c or z`, spillover maxima, first-index argmax selections, and absolute
/// gaps from the canonical means.
pub fn implied_assignment(
    model: &FittedModel,
    scenario: &Scenario,
    neighbors: &NeighborStructure,
    objective: &ObjectiveSpec,
    z: &InterventionVector,
) -> Result<BTreeMap<String, f64>> {
    let names = names_for(scenario)?;
    let evaluator = Evaluator::new(model, scenario, neighbors)?;
    let m = scenario.num_sets();
    let mut assignment = BTreeMap::new();
    let t: Vec<f64> = (0..m)
        .map(|i| (scenario.sets[i].offers_calc || z.0[i]) as u8 as f64)
        .collect();
    for i in 0..m {
        assignment.insert(names.z[i].clone(), z.0[i] as u8 as f64);
        assignment.insert(names.t[i].clone(), t[i]);
    }
    let mc = evaluator.max_calc(&z.0);
    for i in 0..m {
        assignment.insert(names.mc[i].clone(), mc[i]);
        let mut best_j = evaluator.neighbor_lists[i][0].0;
        let mut best_v = f64::NEG_INFINITY;
        for &(j, s) in &evaluator.neighbor_lists[i] {
            let v = s * t[j];
            if v > best_v {
                best_v = v;
                best_j = j;
            }
        }
        for &(j, _) in &evaluator.neighbor_lists[i] {
            assignment.insert(format!("w_{i}_{j}"), (j == best_j) as u8 as f64);
        }
    }
    let expected = evaluator.expected_from_max_calc(&mc);
    match objective {
        ObjectiveSpec::AcrossPopulationPairwise => {
            let mu = objective::group_means(&expected, scenario)?;
            for k in 0..mu.len() {
                for k2 in (k + 1)..mu.len() {
                    assignment.insert(
                        format!("u_{}_{}", names.group[k], names.group[k2]),
                        (mu[k] - mu[k2]).abs(),
                    );
                }
            }
        }
        ObjectiveSpec::WithinSetPairwise => {
            for i in 0..m {
                for k in 0..evaluator.num_outcomes {
                    for k2 in (k + 1)..evaluator.num_outcomes {
                        assignment.insert(
                            format!("u_{}_{}_{}", i, names.group[k], names.group[k2]),
                            (expected[(i, k)] - expected[(i, k2)]).abs(),
                        );
                    }
                }
            }
        }
        ObjectiveSpec::AggregateImpact => {}
        other => {
            return Err(CoreError::UnsupportedObjective {
                objective: other.name().to_string(),
                reason: "not exportable".to_string(),
            })
        }
    }
    Ok(assignment)
}

/// Evaluate the LP objective at an assignment.
pub fn eval_objective(milp: &MilpModel, assignment: &BTreeMap<String, f64>) -> Result<f64> {
    let mut total = milp.objective_constant;
    for (var, coef) in &milp.objective {
        let value = assignment.get(var).ok_or_else(|| {
            CoreError::parse("lp objective", format!("unassigned variable `{var}`"))
        })?;
        total += coef * value;
    }
    Ok(total)
}

/// Build the MILP, render it, and write it to `path`.
pub fn export_milp(
    model: &FittedModel,
    scenario: &Scenario,
    neighbors: &NeighborStructure,
    objective: &ObjectiveSpec,
    constraints: &[ConstraintSpec],
    opts: &SolveOptions,
    path: &Path,
) -> Result<MilpModel> {
    let milp = build_milp(model, scenario, neighbors, objective, constraints, opts)?;
    std::fs::write(path, write_lp(&milp)).map_err(|e| CoreError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    Ok(milp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::build_neighbor_structure;
    use crate::solve::solve_enumerate;
    use crate::synth::{gen_random, toy_career_fair, RandomScenarioConfig};
    use approx::assert_relative_eq;

    fn toy_milp() -> (MilpModel, crate::synth::GroundTruth, NeighborStructure) {
        let truth = toy_career_fair();
        let n = build_neighbor_structure(&truth.scenario);
        let milp = build_milp(
            &truth.model,
            &truth.scenario,
            &n,
            &ObjectiveSpec::AcrossPopulationPairwise,
            &[ConstraintSpec::Budget { b: 1 }],
            &SolveOptions::default(),
        )
        .unwrap();
        (milp, truth, n)
    }

    #[test]
    fn toy_export_reparses_identically() {
        let (milp, _, _) = toy_milp();
        let text = write_lp(&milp);
        let reparsed = parse_lp(&text).unwrap();
        assert_eq!(milp, reparsed);
    }

    #[test]
    fn toy_substitution_matches_native_objective() {
        let (milp, truth, n) = toy_milp();
        let spec = ObjectiveSpec::AcrossPopulationPairwise;
        let opts = SolveOptions::default();
        let result = solve_enumerate(
            &truth.model,
            &truth.scenario,
            &n,
            &spec,
            &[ConstraintSpec::Budget { b: 1 }],
            &opts,
        )
        .unwrap();
        let assignment =
            implied_assignment(&truth.model, &truth.scenario, &n, &spec, &result.z_star).unwrap();
        let lp_value = eval_objective(&milp, &assignment).unwrap();
        assert_relative_eq!(lp_value, result.objective_value, epsilon = 1e-9);
    }

    #[test]
    fn singleton_export_is_well_formed() {
        let truth = gen_random(
            2,
            &RandomScenarioConfig {
                m: 1,
                ..RandomScenarioConfig::default()
            },
        )
        .unwrap();
        let n = build_neighbor_structure(&truth.scenario);
        let milp = build_milp(
            &truth.model,
            &truth.scenario,
            &n,
            &ObjectiveSpec::AcrossPopulationPairwise,
            &[ConstraintSpec::Budget { b: 1 }],
            &SolveOptions::default(),
        )
        .unwrap();
        let z_vars = milp.binaries.iter().filter(|v| v.starts_with("z_")).count();
        let t_vars = milp.binaries.iter().filter(|v| v.starts_with("t_")).count();
        let w_vars = milp.binaries.iter().filter(|v| v.starts_with("w_")).count();
        assert_eq!((z_vars, t_vars, w_vars), (1, 1, 1));
        let reparsed = parse_lp(&write_lp(&milp)).unwrap();
        assert_eq!(milp, reparsed);
    }

    #[test]
    fn vacuous_budget_row_keeps_full_size() {
        let (_, truth, n) = toy_milp();
        let milp = build_milp(
            &truth.model,
            &truth.scenario,
            &n,
            &ObjectiveSpec::AcrossPopulationPairwise,
            &[ConstraintSpec::Budget { b: 2 }],
            &SolveOptions::default(),
        )
        .unwrap();
        let budget = milp.rows.iter().find(|r| r.name == "budget").unwrap();
        assert_eq!(budget.rhs, 2.0);
        assert_eq!(budget.terms.len(), 2);
    }

    #[test]
    fn threshold_objectives_rejected() {
        let truth = toy_career_fair();
        let n = build_neighbor_structure(&truth.scenario);
        let err = build_milp(
            &truth.model,
            &truth.scenario,
            &n,
            &ObjectiveSpec::ThresholdAcross { kappa: 0.5 },
            &[ConstraintSpec::Budget { b: 1 }],
            &SolveOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, CoreError::UnsupportedObjective { .. }));
    }

    #[test]
    fn aggregate_objective_exports_with_constant() {
        let truth = toy_career_fair();
        let n = build_neighbor_structure(&truth.scenario);
        let milp = build_milp(
            &truth.model,
            &truth.scenario,
            &n,
            &ObjectiveSpec::AggregateImpact,
            &[ConstraintSpec::Budget { b: 1 }],
            &SolveOptions::default(),
        )
        .unwrap();
        assert_eq!(milp.sense, Sense::Maximize);
        assert!(milp.objective_constant > 0.0);
        let reparsed = parse_lp(&write_lp(&milp)).unwrap();
        assert_eq!(milp, reparsed);
    }
}
