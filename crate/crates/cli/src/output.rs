//! Artifact writers. File contents are deterministic: fixed orderings, no
//! timestamps, shortest-exact float form in machine-read files.

use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

use remedia_core::{ChangeReport, Scenario, SolveResult};

pub fn write_text(path: &Path, content: &str) -> Result<()> {
    std::fs::write(path, content).with_context(|| format!("writing {}", path.display()))
}

/// `result.csv`: one row per selected set, in scenario order.
pub fn result_csv(scenario: &Scenario, result: &SolveResult) -> String {
    let mut out = String::from("set_id\n");
    for i in result.z_star.selected_indices() {
        out.push_str(&scenario.sets[i].id);
        out.push('\n');
    }
    out
}

#[derive(Serialize)]
struct Geometry {
    #[serde(rename = "type")]
    kind: &'static str,
    coordinates: [f64; 2],
}

#[derive(Serialize)]
struct Properties {
    id: String,
    selected: bool,
}

#[derive(Serialize)]
struct Feature {
    #[serde(rename = "type")]
    kind: &'static str,
    geometry: Geometry,
    properties: Properties,
}

#[derive(Serialize)]
struct FeatureCollection {
    #[serde(rename = "type")]
    kind: &'static str,
    features: Vec<Feature>,
}

/// `selected.geojson`: point features for the chosen sets.
pub fn selected_geojson(scenario: &Scenario, result: &SolveResult) -> Result<String> {
    let features = result
        .z_star
        .selected_indices()
        .into_iter()
        .map(|i| Feature {
            kind: "Feature",
            geometry: Geometry {
                kind: "Point",
                coordinates: [scenario.sets[i].longitude, scenario.sets[i].latitude],
            },
            properties: Properties {
                id: scenario.sets[i].id.clone(),
                selected: true,
            },
        })
        .collect();
    let collection = FeatureCollection {
        kind: "FeatureCollection",
        features,
    };
    Ok(serde_json::to_string_pretty(&collection)? + "\n")
}

pub struct SummaryInputs<'a> {
    pub mode: &'a str,
    pub objective: &'a str,
    pub solver: &'a str,
    pub budget: usize,
    pub observed_disparity: Option<f64>,
    pub report: &'a ChangeReport,
    pub result: &'a SolveResult,
    pub scenario: &'a Scenario,
    pub violations: Vec<String>,
}

/// `summary.txt`: human-readable run summary (no wall-clock content).
pub fn summary_text(inputs: &SummaryInputs) -> String {
    let r = inputs.result;
    let mut out = String::new();
    out.push_str(&format!("mode: {}\n", inputs.mode));
    out.push_str(&format!("objective: {}\n", inputs.objective));
    out.push_str(&format!("solver: {}\n", inputs.solver));
    out.push_str(&format!("budget: {}\n", inputs.budget));
    out.push_str(&format!("feasible: {}\n", r.feasible));
    out.push_str(&format!("z: {}\n", r.z_star.bitstring()));
    let chosen: Vec<&str> = r
        .z_star
        .selected_indices()
        .into_iter()
        .map(|i| inputs.scenario.sets[i].id.as_str())
        .collect();
    out.push_str(&format!("selected: {}\n", chosen.join(", ")));
    out.push_str(&format!("objective value: {:.6}\n", r.objective_value));
    if let Some(observed) = inputs.observed_disparity {
        out.push_str(&format!("observed disparity (data): {observed:.6}\n"));
    }
    out.push_str(&format!(
        "disparity: {:.6} -> {:.6}\n",
        inputs.report.disparity_pre, inputs.report.disparity_post
    ));
    out.push_str(&format!(
        "candidates evaluated: {}\n",
        r.stats.candidates_evaluated
    ));
    if r.stats.nodes_explored > 0 {
        out.push_str(&format!("nodes explored: {}\n", r.stats.nodes_explored));
    }
    if r.stats.restarts > 0 {
        out.push_str(&format!("restarts: {}\n", r.stats.restarts));
    }
    if !inputs.violations.is_empty() {
        out.push_str("violations:\n");
        for v in &inputs.violations {
            out.push_str(&format!("  {v}\n"));
        }
    }
    for w in &r.warnings {
        out.push_str(&format!("warning: {w}\n"));
    }
    out
}

/// One row of the comparison table.
pub struct CompareRow {
    pub variant: String,
    pub per_group_pct: Vec<Option<f64>>,
    pub aggregate_pct: Option<f64>,
    pub disparity: f64,
    pub feasible: bool,
}

fn pct_cell(p: &Option<f64>) -> String {
    match p {
        Some(v) => format!("{v:+.2}"),
        None => "NA".to_string(),
    }
}

/// `compare.csv`: per-group percent change, aggregate percent change, and
/// post-intervention disparity per variant.
pub fn compare_csv(groups: &[String], rows: &[CompareRow]) -> String {
    let mut out = String::from("variant");
    for g in groups {
        out.push_str(&format!(",{g}"));
    }
    out.push_str(",aggregate,disparity\n");
    for row in rows {
        out.push_str(&row.variant);
        for p in &row.per_group_pct {
            out.push_str(&format!(",{}", pct_cell(p)));
        }
        out.push_str(&format!(
            ",{},{:.6}\n",
            pct_cell(&row.aggregate_pct),
            row.disparity
        ));
    }
    out
}

/// Fixed-width comparison table for the terminal.
pub fn compare_table(groups: &[String], rows: &[CompareRow]) -> String {
    let name_width = rows
        .iter()
        .map(|r| r.variant.len())
        .chain(std::iter::once("variant".len()))
        .max()
        .unwrap_or(7);
    let col = 9usize;
    let mut out = format!("{:<name_width$}", "variant");
    for g in groups {
        out.push_str(&format!("  {g:>col$}"));
    }
    out.push_str(&format!("  {:>col$}  {:>col$}\n", "aggregate", "disparity"));
    for row in rows {
        out.push_str(&format!("{:<name_width$}", row.variant));
        for p in &row.per_group_pct {
            out.push_str(&format!("  {:>col$}", pct_cell(p)));
        }
        out.push_str(&format!(
            "  {:>col$}  {:>col$.6}\n",
            pct_cell(&row.aggregate_pct),
            row.disparity
        ));
    }
    out
}
