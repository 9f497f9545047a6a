//! Data model and ingestion for intervention sets and group-sliced outcomes.
//!
//! A scenario holds `m` intervention sets (the units we can act on) and a
//! complete `m x r` table of per-(set, group) counts and outcome rates. All
//! orderings are deterministic: sets sorted by id, groups sorted by label.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::objective::{self, ObjectiveSpec};

/// One unit of intervention: a site with location and treatment covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionSet {
    pub id: String,
    pub latitude: f64,
    pub longitude: f64,
    /// Full-time counselor count; fractional values indicate part-time staff.
    pub counselors: f64,
    pub offers_ap: bool,
    pub offers_calc: bool,
}

/// One row of the disaggregated outcome table.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupSlice {
    pub set_id: String,
    pub group: String,
    pub count: u64,
    pub outcome_rate: f64,
}

/// Options controlling scenario construction.
#[derive(Debug, Clone)]
pub struct ScenarioOptions {
    /// Number of nearest other sets in each neighborhood (default 5).
    pub neighbor_k: usize,
    /// Optional per-(set, group) weights overriding counts as weights.
    pub weights_path: Option<std::path::PathBuf>,
}

impl Default for ScenarioOptions {
    fn default() -> Self {
        ScenarioOptions {
            neighbor_k: 5,
            weights_path: None,
        }
    }
}

/// Validated scenario: sets, group labels, and the dense count/rate tables.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub sets: Vec<InterventionSet>,
    pub groups: Vec<String>,
    counts: Vec<Vec<u64>>,
    rates: Vec<Vec<f64>>,
    weights: Option<Vec<Vec<f64>>>,
    proportions: Vec<Vec<f64>>,
    pub neighbor_k: usize,
}

impl Scenario {
    /// Build a scenario from parts, enforcing every load-time invariant.
    pub fn from_parts(
        mut sets: Vec<InterventionSet>,
        slices: Vec<GroupSlice>,
        weights: Option<Vec<(String, String, f64)>>,
        neighbor_k: usize,
    ) -> Result<Self> {
        if sets.is_empty() {
            return Err(CoreError::invalid("scenario", "at least one set required"));
        }
        sets.sort_by(|a, b| a.id.cmp(&b.id));
        for pair in sets.windows(2) {
            if pair[0].id == pair[1].id {
                return Err(CoreError::invalid(
                    "sets",
                    format!("duplicate set id `{}`", pair[0].id),
                ));
            }
        }
        for s in &sets {
            validate_set(s, "sets")?;
        }

        let set_index: BTreeMap<&str, usize> = sets
            .iter()
            .enumerate()
            .map(|(i, s)| (s.id.as_str(), i))
            .collect();

        let mut groups: Vec<String> = slices.iter().map(|s| s.group.clone()).collect();
        groups.sort();
        groups.dedup();
        if groups.len() < 2 {
            return Err(CoreError::invalid(
                "slices",
                format!("at least 2 groups required, found {}", groups.len()),
            ));
        }
        let group_index: BTreeMap<&str, usize> = groups
            .iter()
            .enumerate()
            .map(|(k, g)| (g.as_str(), k))
            .collect();

        let m = sets.len();
        let r = groups.len();
        let mut counts = vec![vec![0u64; r]; m];
        let mut rates = vec![vec![f64::NAN; r]; m];
        let mut seen = vec![vec![false; r]; m];
        for (row, sl) in slices.iter().enumerate() {
            let loc = format!("slices row {}", row + 1);
            let i = *set_index.get(sl.set_id.as_str()).ok_or_else(|| {
                CoreError::invalid(&loc, format!("unknown set id `{}`", sl.set_id))
            })?;
            let k = group_index[sl.group.as_str()];
            if seen[i][k] {
                return Err(CoreError::invalid(
                    &loc,
                    format!("duplicate slice for ({}, {})", sl.set_id, sl.group),
                ));
            }
            if !sl.outcome_rate.is_finite() || !(0.0..=1.0).contains(&sl.outcome_rate) {
                return Err(CoreError::invalid(
                    &loc,
                    format!("outcome_rate {} outside [0, 1]", sl.outcome_rate),
                ));
            }
            seen[i][k] = true;
            counts[i][k] = sl.count;
            rates[i][k] = sl.outcome_rate;
        }
        for i in 0..m {
            for k in 0..r {
                if !seen[i][k] {
                    return Err(CoreError::invalid(
                        "slices",
                        format!("missing slice for ({}, {})", sets[i].id, groups[k]),
                    ));
                }
            }
        }

        let weights = match weights {
            None => None,
            Some(rows) => {
                let mut table = vec![vec![f64::NAN; r]; m];
                for (row, (sid, g, w)) in rows.iter().enumerate() {
                    let loc = format!("weights row {}", row + 1);
                    let i = *set_index.get(sid.as_str()).ok_or_else(|| {
                        CoreError::invalid(&loc, format!("unknown set id `{}`", sid))
                    })?;
                    let k = *group_index.get(g.as_str()).ok_or_else(|| {
                        CoreError::invalid(&loc, format!("unknown group `{}`", g))
                    })?;
                    if !w.is_finite() || *w < 0.0 {
                        return Err(CoreError::invalid(
                            &loc,
                            format!("weight {} must be >= 0", w),
                        ));
                    }
                    table[i][k] = *w;
                }
                for i in 0..m {
                    for k in 0..r {
                        if table[i][k].is_nan() {
                            return Err(CoreError::invalid(
                                "weights",
                                format!("missing weight for ({}, {})", sets[i].id, groups[k]),
                            ));
                        }
                    }
                }
                Some(table)
            }
        };

        let proportions = counts
            .iter()
            .map(|row| {
                let total: u64 = row.iter().sum();
                if total == 0 {
                    vec![0.0; r]
                } else {
                    row.iter().map(|&c| c as f64 / total as f64).collect()
                }
            })
            .collect();

        Ok(Scenario {
            sets,
            groups,
            counts,
            rates,
            weights,
            proportions,
            neighbor_k,
        })
    }

    pub fn num_sets(&self) -> usize {
        self.sets.len()
    }

    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn count(&self, set: usize, group: usize) -> u64 {
        self.counts[set][group]
    }

    pub fn rate(&self, set: usize, group: usize) -> f64 {
        self.rates[set][group]
    }

    /// Group-proportion vector for a set; all zeros when the set is empty.
    pub fn proportions(&self, set: usize) -> &[f64] {
        &self.proportions[set]
    }

    pub fn has_weights(&self) -> bool {
        self.weights.is_some()
    }

    /// Weight of a (set, group) cell: the override when present, else the count.
    pub fn weight(&self, set: usize, group: usize) -> f64 {
        match &self.weights {
            Some(w) => w[set][group],
            None => self.counts[set][group] as f64,
        }
    }

    /// Exact integer totals (per group, per set, grand), ignoring weight overrides.
    pub fn integer_totals(&self) -> (Vec<u64>, Vec<u64>, u64) {
        let m = self.num_sets();
        let r = self.num_groups();
        let mut per_group = vec![0u64; r];
        let mut per_set = vec![0u64; m];
        for i in 0..m {
            for k in 0..r {
                per_group[k] += self.counts[i][k];
                per_set[i] += self.counts[i][k];
            }
        }
        let grand = per_group.iter().sum();
        (per_group, per_set, grand)
    }

    /// Observed outcome rates as an `m x r` matrix.
    pub fn observed_matrix(&self) -> DMatrix<f64> {
        let m = self.num_sets();
        let r = self.num_groups();
        DMatrix::from_fn(m, r, |i, k| self.rates[i][k])
    }

    pub fn slices(&self) -> Vec<GroupSlice> {
        let mut out = Vec::with_capacity(self.num_sets() * self.num_groups());
        for (i, set) in self.sets.iter().enumerate() {
            for (k, g) in self.groups.iter().enumerate() {
                out.push(GroupSlice {
                    set_id: set.id.clone(),
                    group: g.clone(),
                    count: self.counts[i][k],
                    outcome_rate: self.rates[i][k],
                });
            }
        }
        out
    }
}

fn validate_set(s: &InterventionSet, location: &str) -> Result<()> {
    if !s.latitude.is_finite() || !(-90.0..=90.0).contains(&s.latitude) {
        return Err(CoreError::invalid(
            location,
            format!("set `{}`: latitude {} outside [-90, 90]", s.id, s.latitude),
        ));
    }
    if !s.longitude.is_finite() || !(-180.0..=180.0).contains(&s.longitude) {
        return Err(CoreError::invalid(
            location,
            format!(
                "set `{}`: longitude {} outside [-180, 180]",
                s.id, s.longitude
            ),
        ));
    }
    if !s.counselors.is_finite() || s.counselors < 0.0 {
        return Err(CoreError::invalid(
            location,
            format!("set `{}`: counselors {} must be >= 0", s.id, s.counselors),
        ));
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
struct SetRow {
    id: String,
    lat: f64,
    lon: f64,
    counselors: f64,
    offers_ap: u8,
    offers_calc: u8,
}

#[derive(Debug, Deserialize)]
struct SliceRow {
    set_id: String,
    group: String,
    count: i64,
    outcome_rate: f64,
}

#[derive(Debug, Deserialize)]
struct WeightRow {
    set_id: String,
    group: String,
    weight: f64,
}

fn csv_reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CoreError::Csv {
            path: path.display().to_string(),
            source: e,
        })
}

fn bit(v: u8, loc: &str, field: &str) -> Result<bool> {
    match v {
        0 => Ok(false),
        1 => Ok(true),
        other => Err(CoreError::invalid(
            loc,
            format!("{field} must be 0 or 1, got {other}"),
        )),
    }
}

/// Load and validate a scenario from `sets.csv` and `slices.csv`.
pub fn load_scenario(
    sets_path: &Path,
    slices_path: &Path,
    options: &ScenarioOptions,
) -> Result<Scenario> {
    let mut sets = Vec::new();
    let mut reader = csv_reader(sets_path)?;
    for (row, record) in reader.deserialize::<SetRow>().enumerate() {
        let loc = format!("{} row {}", sets_path.display(), row + 1);
        let rec = record.map_err(|e| CoreError::invalid(&loc, e.to_string()))?;
        sets.push(InterventionSet {
            offers_ap: bit(rec.offers_ap, &loc, "offers_ap")?,
            offers_calc: bit(rec.offers_calc, &loc, "offers_calc")?,
            id: rec.id,
            latitude: rec.lat,
            longitude: rec.lon,
            counselors: rec.counselors,
        });
    }

    let mut slices = Vec::new();
    let mut reader = csv_reader(slices_path)?;
    for (row, record) in reader.deserialize::<SliceRow>().enumerate() {
        let loc = format!("{} row {}", slices_path.display(), row + 1);
        let rec = record.map_err(|e| CoreError::invalid(&loc, e.to_string()))?;
        if rec.count < 0 {
            return Err(CoreError::invalid(
                &loc,
                format!("count {} must be >= 0", rec.count),
            ));
        }
        slices.push(GroupSlice {
            set_id: rec.set_id,
            group: rec.group,
            count: rec.count as u64,
            outcome_rate: rec.outcome_rate,
        });
    }

    let weights = match &options.weights_path {
        None => None,
        Some(path) => {
            let mut rows = Vec::new();
            let mut reader = csv_reader(path)?;
            for (row, record) in reader.deserialize::<WeightRow>().enumerate() {
                let loc = format!("{} row {}", path.display(), row + 1);
                let rec = record.map_err(|e| CoreError::invalid(&loc, e.to_string()))?;
                rows.push((rec.set_id, rec.group, rec.weight));
            }
            Some(rows)
        }
    };

    Scenario::from_parts(sets, slices, weights, options.neighbor_k)
}

/// Write a scenario back to the CSV schemas; floats use shortest exact form.
pub fn write_scenario(scenario: &Scenario, dir: &Path) -> Result<()> {
    let io_err = |path: &Path, e: std::io::Error| CoreError::Io {
        path: path.display().to_string(),
        source: e,
    };
    let sets_path = dir.join("sets.csv");
    let mut out = String::from("id,lat,lon,counselors,offers_ap,offers_calc\n");
    for s in &scenario.sets {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            s.id, s.latitude, s.longitude, s.counselors, s.offers_ap as u8, s.offers_calc as u8
        ));
    }
    std::fs::write(&sets_path, out).map_err(|e| io_err(&sets_path, e))?;

    let slices_path = dir.join("slices.csv");
    let mut out = String::from("set_id,group,count,outcome_rate\n");
    for sl in scenario.slices() {
        out.push_str(&format!(
            "{},{},{},{}\n",
            sl.set_id, sl.group, sl.count, sl.outcome_rate
        ));
    }
    std::fs::write(&slices_path, out).map_err(|e| io_err(&slices_path, e))?;

    if scenario.has_weights() {
        let weights_path = dir.join("weights.csv");
        let mut out = String::from("set_id,group,weight\n");
        for (i, s) in scenario.sets.iter().enumerate() {
            for (k, g) in scenario.groups.iter().enumerate() {
                out.push_str(&format!("{},{},{}\n", s.id, g, scenario.weight(i, k)));
            }
        }
        std::fs::write(&weights_path, out).map_err(|e| io_err(&weights_path, e))?;
    }
    Ok(())
}

/// Neighborhoods and pairwise similarity for the spillover term.
///
/// `N(i)` holds the set itself plus its `min(K, m-1)` nearest other sets by
/// great-circle distance; similarity is `1 / (1 + d_km)` so that `s(i,i) = 1`
/// and values stay in `(0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborStructure {
    lists: Vec<Vec<(usize, f64)>>,
}

impl NeighborStructure {
    /// Neighbors of set `i` as `(set index, similarity)`, self first.
    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.lists[i]
    }

    pub fn similarity(&self, i: usize, j: usize) -> Option<f64> {
        self.lists[i].iter().find(|(n, _)| *n == j).map(|(_, s)| *s)
    }

    pub fn len(&self) -> usize {
        self.lists.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lists.is_empty()
    }
}

const EARTH_RADIUS_KM: f64 = 6371.0088;

fn haversine_km(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let phi1 = lat1.to_radians();
    let phi2 = lat2.to_radians();
    let dphi = (lat2 - lat1).to_radians();
    let dlambda = (lon2 - lon1).to_radians();
    let a = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    let c = 2.0 * a.sqrt().atan2((1.0 - a).sqrt());
    EARTH_RADIUS_KM * c
}

fn similarity_from_distance(d_km: f64) -> f64 {
    1.0 / (1.0 + d_km)
}

/// Build the neighborhood structure for a scenario.
///
/// Distance ties are broken by ascending set index.
pub fn build_neighbor_structure(scenario: &Scenario) -> NeighborStructure {
    let m = scenario.num_sets();
    let k = scenario.neighbor_k.min(m.saturating_sub(1));
    let mut lists = Vec::with_capacity(m);
    for i in 0..m {
        let si = &scenario.sets[i];
        let mut others: Vec<(usize, f64)> = (0..m)
            .filter(|&j| j != i)
            .map(|j| {
                let sj = &scenario.sets[j];
                (
                    j,
                    haversine_km(si.latitude, si.longitude, sj.latitude, sj.longitude),
                )
            })
            .collect();
        others.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
        let mut list = Vec::with_capacity(k + 1);
        list.push((i, 1.0));
        for &(j, d) in others.iter().take(k) {
            list.push((j, similarity_from_distance(d)));
        }
        lists.push(list);
    }
    NeighborStructure { lists }
}

/// Weighted totals used by the objective module; counts unless overridden.
#[derive(Debug, Clone, PartialEq)]
pub struct Totals {
    pub per_group: Vec<f64>,
    pub per_set: Vec<f64>,
    pub grand: f64,
}

/// Per-group, per-set, and grand totals (weighted when weights are present).
pub fn group_totals(scenario: &Scenario) -> Totals {
    let m = scenario.num_sets();
    let r = scenario.num_groups();
    let mut per_group = vec![0.0; r];
    let mut per_set = vec![0.0; m];
    for i in 0..m {
        for k in 0..r {
            let w = scenario.weight(i, k);
            per_group[k] += w;
            per_set[i] += w;
        }
    }
    let grand = per_group.iter().sum();
    Totals {
        per_group,
        per_set,
        grand,
    }
}

/// Disparity of the observed (factual) outcome rates: no model, no intervention.
pub fn observed_disparity(scenario: &Scenario, measure: &ObjectiveSpec) -> Result<f64> {
    if !measure.is_disparity() {
        return Err(CoreError::UnsupportedObjective {
            objective: measure.name().to_string(),
            reason: "observed disparity is only defined for disparity measures".to_string(),
        });
    }
    objective::disparity(&scenario.observed_matrix(), scenario, measure)
}
