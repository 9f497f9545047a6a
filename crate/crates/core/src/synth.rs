//! Deterministic scenario generators with known ground-truth models, used by
//! fit-recovery and solver tests and by the `gen-toy` / `gen-random` commands.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{CoreError, Result};
use crate::scenario::{build_neighbor_structure, GroupSlice, InterventionSet, Scenario};
use crate::scm::{predict, FittedModel, InterventionVector, OutcomeEquation};

/// A scenario together with the model that generated its outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub scenario: Scenario,
    pub model: FittedModel,
    pub noise_sd: f64,
    /// Number of noisy outcomes clipped into [0, 1]; clipping biases fits.
    pub truncated: usize,
}

/// Two-university career-fair outreach example: two groups, one possible
/// booth, 1 km between campuses so the spillover similarity is 0.5.
///
/// Observed outcomes are the model's own null-intervention predictions, so
/// generated data and model agree exactly.
pub fn toy_career_fair() -> GroundTruth {
    let dlat = (1.0f64 / 6371.0088).to_degrees();
    let set = |id: &str, lat: f64| InterventionSet {
        id: id.to_string(),
        latitude: lat,
        longitude: 0.0,
        counselors: 0.0,
        offers_ap: false,
        offers_calc: false,
    };
    let sets = vec![set("university-1", 0.0), set("university-2", dlat)];
    let counts = [[100u64, 150u64], [75, 100]];

    // theta solves theta . rho_i = observed null rate exactly for the two
    // campus mixes rho_1 = (2/5, 3/5), rho_2 = (3/7, 4/7); alpha is constant
    // across categories so every campus gains 0.10 per unit of spillover.
    let mut eq_a = OutcomeEquation::zero("A", 2);
    eq_a.alpha = vec![0.10, 0.10];
    eq_a.theta = vec![-0.95, 0.80];
    let mut eq_b = OutcomeEquation::zero("B", 2);
    eq_b.alpha = vec![0.10, 0.10];
    eq_b.theta = vec![-1.90, 1.60];
    let model = FittedModel {
        categories: vec!["A".to_string(), "B".to_string()],
        outcomes: vec![eq_a, eq_b],
    };

    let slices_with = |rates: &[[f64; 2]; 2]| -> Vec<GroupSlice> {
        let mut out = Vec::new();
        for (i, s) in sets.iter().enumerate() {
            for (k, g) in ["A", "B"].iter().enumerate() {
                out.push(GroupSlice {
                    set_id: s.id.clone(),
                    group: g.to_string(),
                    count: counts[i][k],
                    outcome_rate: rates[i][k],
                });
            }
        }
        out
    };

    let provisional = Scenario::from_parts(
        sets.clone(),
        slices_with(&[[0.0, 0.0], [0.0, 0.0]]),
        None,
        5,
    )
    .expect("toy scenario is valid");
    let neighbors = build_neighbor_structure(&provisional);
    let base = predict(
        &model,
        &provisional,
        &neighbors,
        &InterventionVector::zeros(2),
    )
    .expect("toy model matches toy scenario");
    let rates = [[base[(0, 0)], base[(0, 1)]], [base[(1, 0)], base[(1, 1)]]];
    let final_slices = slices_with(&rates);
    let scenario =
        Scenario::from_parts(sets, final_slices, None, 5).expect("toy scenario is valid");
    GroundTruth {
        scenario,
        model,
        noise_sd: 0.0,
        truncated: 0,
    }
}

/// Configuration for seeded random scenario generation.
#[derive(Debug, Clone)]
pub struct RandomScenarioConfig {
    pub m: usize,
    pub r: usize,
    pub neighbor_k: usize,
    pub noise_sd: f64,
    pub lat_range: (f64, f64),
    pub lon_range: (f64, f64),
    pub count_range: (u64, u64),
    pub counselor_range: (f64, f64),
    pub ap_prob: f64,
    pub calc_prob: f64,
    pub alpha_range: (f64, f64),
    pub beta_range: (f64, f64),
    pub gamma_range: (f64, f64),
    pub theta_range: (f64, f64),
}

impl Default for RandomScenarioConfig {
    fn default() -> Self {
        RandomScenarioConfig {
            m: 12,
            r: 3,
            neighbor_k: 5,
            noise_sd: 0.0,
            lat_range: (0.0, 0.5),
            lon_range: (0.0, 0.5),
            count_range: (5, 500),
            counselor_range: (0.0, 5.0),
            ap_prob: 0.5,
            calc_prob: 0.5,
            alpha_range: (0.05, 0.15),
            beta_range: (0.02, 0.10),
            gamma_range: (0.005, 0.02),
            theta_range: (0.10, 0.40),
        }
    }
}

impl RandomScenarioConfig {
    fn validate(&self) -> Result<()> {
        if self.m < 1 {
            return Err(CoreError::invalid("gen-random", "m must be >= 1"));
        }
        if !(2..=26).contains(&self.r) {
            return Err(CoreError::invalid("gen-random", "r must be in [2, 26]"));
        }
        let ordered = |name: &str, (lo, hi): (f64, f64)| {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                Err(CoreError::invalid(
                    "gen-random",
                    format!("{name} range ({lo}, {hi}) is invalid"),
                ))
            } else {
                Ok(())
            }
        };
        ordered("lat", self.lat_range)?;
        ordered("lon", self.lon_range)?;
        ordered("counselor", self.counselor_range)?;
        ordered("alpha", self.alpha_range)?;
        ordered("beta", self.beta_range)?;
        ordered("gamma", self.gamma_range)?;
        ordered("theta", self.theta_range)?;
        if self.count_range.0 > self.count_range.1 {
            return Err(CoreError::invalid("gen-random", "count range is invalid"));
        }
        if !(0.0..=1.0).contains(&self.ap_prob) || !(0.0..=1.0).contains(&self.calc_prob) {
            return Err(CoreError::invalid(
                "gen-random",
                "treatment probabilities must be in [0, 1]",
            ));
        }
        if self.noise_sd < 0.0 {
            return Err(CoreError::invalid("gen-random", "noise_sd must be >= 0"));
        }
        Ok(())
    }
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..hi)
    }
}

/// Seeded random scenario with ground-truth coefficients.
///
/// Outcomes are the model's null-intervention predictions plus centered
/// uniform noise of standard deviation `noise_sd`, clipped to [0, 1].
pub fn gen_random(seed: u64, config: &RandomScenarioConfig) -> Result<GroundTruth> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = config.m;
    let r = config.r;
    let width = m.to_string().len();

    let mut sets = Vec::with_capacity(m);
    let mut counts = vec![vec![0u64; r]; m];
    for i in 0..m {
        sets.push(InterventionSet {
            id: format!("s{:0width$}", i, width = width),
            latitude: uniform(&mut rng, config.lat_range),
            longitude: uniform(&mut rng, config.lon_range),
            counselors: uniform(&mut rng, config.counselor_range),
            offers_ap: rng.gen_bool(config.ap_prob),
            offers_calc: rng.gen_bool(config.calc_prob),
        });
        for k in 0..r {
            counts[i][k] = rng.gen_range(config.count_range.0..=config.count_range.1);
        }
    }

    let groups: Vec<String> = (0..r)
        .map(|k| char::from(b'A' + k as u8).to_string())
        .collect();
    let mut outcomes = Vec::with_capacity(r);
    for g in &groups {
        let draw = |rng: &mut ChaCha8Rng, range| (0..r).map(|_| uniform(rng, range)).collect();
        outcomes.push(OutcomeEquation {
            label: g.clone(),
            alpha: draw(&mut rng, config.alpha_range),
            beta: draw(&mut rng, config.beta_range),
            gamma: draw(&mut rng, config.gamma_range),
            theta: draw(&mut rng, config.theta_range),
            diagnostics: crate::scm::FitDiagnostics {
                rss: 0.0,
                rank: 0,
                condition: 0.0,
            },
        });
    }
    let model = FittedModel {
        categories: groups.clone(),
        outcomes,
    };

    let slices_with = |rates: &[Vec<f64>]| -> Vec<GroupSlice> {
        let mut out = Vec::new();
        for (i, s) in sets.iter().enumerate() {
            for (k, g) in groups.iter().enumerate() {
                out.push(GroupSlice {
                    set_id: s.id.clone(),
                    group: g.clone(),
                    count: counts[i][k],
                    outcome_rate: rates[i][k],
                });
            }
        }
        out
    };

    let provisional = Scenario::from_parts(
        sets.clone(),
        slices_with(&vec![vec![0.0; r]; m]),
        None,
        config.neighbor_k,
    )?;
    let neighbors = build_neighbor_structure(&provisional);
    let base = predict(
        &model,
        &provisional,
        &neighbors,
        &InterventionVector::zeros(m),
    )?;

    // Centered uniform noise on [-a, a] has standard deviation a / sqrt(3).
    let amplitude = config.noise_sd * 3.0f64.sqrt();
    let mut truncated = 0usize;
    let mut rates = vec![vec![0.0; r]; m];
    for i in 0..m {
        for k in 0..r {
            let mut y = base[(i, k)];
            if amplitude > 0.0 {
                y += rng.gen_range(-amplitude..amplitude);
            }
            if !(0.0..=1.0).contains(&y) {
                truncated += 1;
                y = y.clamp(0.0, 1.0);
            }
            rates[i][k] = y;
        }
    }

    let final_slices = slices_with(&rates);
    let scenario = Scenario::from_parts(sets, final_slices, None, config.neighbor_k)?;
    Ok(GroundTruth {
        scenario,
        model,
        noise_sd: config.noise_sd,
        truncated,
    })
}
