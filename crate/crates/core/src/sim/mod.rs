//! Seeded Monte-Carlo studies of the interval estimators.
//!
//! Replicate `r` of a scenario draws from `rng::stream(seed, r)`, so a report
//! depends only on the scenario and never on thread scheduling.

pub mod generate;
pub mod truth;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::ClusterSummary;
use crate::crossover::{decompose_complete_incomplete, fit_crossover, fit_crossover_lmm, metric_cov, Group};
use crate::dist::z_critical;
use crate::error::{check_alpha, Error, Result};
use crate::interval::Method;
use crate::lmm::{fit_random_intercept, weighted_cluster_mean, LmmData};
use crate::moments::UniMoments;
use crate::quantile::{bootstrap_ci, outer_ci_post, outer_ci_pre, QuantileEstimate};
use crate::ratio::{ratio_ci, RatioInput, RATIO_METHODS};
use crate::rng;

pub use generate::{QuantileModel, RatioModel};

pub const RATIO_SIZES: [usize; 4] = [20, 50, 200, 2000];
pub const QUANTILE_USERS: [usize; 3] = [100, 1000, 10000];

/// What is simulated in each replicate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "design", rename_all = "kebab-case")]
pub enum Design {
    /// Percent change between two independent samples of size `n`.
    Ratio { model: RatioModel, n: usize },
    /// Average of a clustered binary metric over `clusters` clusters.
    Cluster { clusters: u64 },
    /// `p`-quantile of clustered observations.
    Quantile { model: QuantileModel, users: usize, p: f64 },
    /// Cross-over experiment with engagement-dependent missingness; when
    /// `decompose` is set the complete/incomplete split is reported.
    Crossover { users_per_group: usize, decompose: bool },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(flatten)]
    pub design: Design,
    pub sims: usize,
    /// Bootstrap replicates per simulated data set; 0 skips the bootstrap.
    pub bootstrap: usize,
    pub seed: u64,
    pub alpha: f64,
}

impl Scenario {
    pub fn new(design: Design, sims: usize, seed: u64) -> Self {
        Self {
            design,
            sims,
            bootstrap: match design {
                Design::Quantile { .. } => 1000,
                _ => 0,
            },
            seed,
            alpha: 0.05,
        }
    }

    pub fn table(&self) -> u8 {
        match self.design {
            Design::Ratio { .. } => 1,
            Design::Cluster { .. } => 2,
            Design::Quantile { .. } => 3,
            Design::Crossover { decompose: false, .. } => 4,
            Design::Crossover { decompose: true, .. } => 5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)?;
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.sims < 100 {
            return bad(format!("at least 100 simulations are required, got {}", self.sims));
        }
        match self.design {
            Design::Ratio { n, .. } if !RATIO_SIZES.contains(&n) => {
                bad(format!("sample size must be one of {RATIO_SIZES:?}, got {n}"))
            }
            Design::Cluster { clusters } if clusters < 10 => {
                bad(format!("at least 10 clusters are required, got {clusters}"))
            }
            Design::Quantile { users, .. } if users < 10 => {
                bad(format!("at least 10 users are required, got {users}"))
            }
            Design::Quantile { p, .. } if !(p > 0.0 && p < 1.0) => {
                bad(format!("quantile level must lie in (0, 1), got {p}"))
            }
            Design::Quantile { .. } if self.bootstrap != 0 && self.bootstrap < 100 => {
                bad(format!("bootstrap needs at least 100 replicates, got {}", self.bootstrap))
            }
            Design::Crossover { users_per_group, .. } if users_per_group < 100 => {
                bad(format!("at least 100 users per group are required, got {users_per_group}"))
            }
            _ => Ok(()),
        }
    }

    /// Population value of the estimated quantity.
    pub fn truth(&self) -> f64 {
        match self.design {
            Design::Ratio { model, .. } => model.percent_change(),
            Design::Cluster { .. } => generate::cluster_truth(&generate::CLUSTER_CATEGORIES),
            Design::Quantile { model, p, .. } => truth::quantile_truth(model, p),
            Design::Crossover { .. } => truth::crossover_truth(),
        }
    }

    pub fn methods(&self) -> Vec<Method> {
        match self.design {
            Design::Ratio { .. } => RATIO_METHODS.to_vec(),
            Design::Cluster { .. } => vec![
                Method::Naive,
                Method::ClusterDelta,
                Method::MixedEffect,
                Method::MixedEffectWeighted,
            ],
            Design::Quantile { .. } => {
                let mut m = vec![Method::OuterPre, Method::OuterPost];
                if self.bootstrap > 0 {
                    m.push(Method::Bootstrap);
                }
                m
            }
            Design::Crossover { decompose: false, .. } => vec![Method::CrossoverGls, Method::CrossoverLmm],
            Design::Crossover { decompose: true, .. } => vec![
                Method::CrossoverLmm,
                Method::CompleteLmm,
                Method::IncompleteOls,
                Method::WeightedAverage,
            ],
        }
    }
}

/// The cells of one of the five studies with their default sizes.
pub fn table_scenarios(table: u8, seed: u64) -> Result<Vec<Scenario>> {
    let designs: Vec<(Design, usize)> = match table {
        1 => RatioModel::ALL
            .iter()
            .flat_map(|&model| RATIO_SIZES.iter().map(move |&n| (Design::Ratio { model, n }, 10_000)))
            .collect(),
        2 => vec![(Design::Cluster { clusters: 1000 }, 1000)],
        3 => QuantileModel::ALL
            .iter()
            .flat_map(|&model| {
                QUANTILE_USERS.iter().map(move |&users| {
                    let sims = if users >= 10_000 { 500 } else { 2000 };
                    (Design::Quantile { model, users, p: 0.95 }, sims)
                })
            })
            .collect(),
        4 => vec![(Design::Crossover { users_per_group: 1000, decompose: false }, 1000)],
        5 => vec![(Design::Crossover { users_per_group: 1000, decompose: true }, 1000)],
        _ => {
            return Err(Error::InvalidParameter(format!("table must be 1 to 5, got {table}")));
        }
    };
    Ok(designs
        .into_iter()
        .enumerate()
        .map(|(i, (d, sims))| Scenario::new(d, sims, rng::child_seed(seed, i as u64)))
        .collect())
}

/// Result of one estimator on one simulated data set.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Outcome {
    estimate: f64,
    se: Option<f64>,
    covered: Option<bool>,
}

/// Per-method Monte-Carlo summary. Replicates where the estimator failed
/// count as non-covering and are excluded from the averages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub truth: f64,
    pub failures: usize,
    pub coverage: Option<f64>,
    /// `√(c(1-c)/M)`.
    pub coverage_se: Option<f64>,
    pub mean_estimate: Option<f64>,
    /// Standard deviation of the estimates across replicates.
    pub true_sd: Option<f64>,
    pub mean_se: Option<f64>,
    pub mean_variance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub table: u8,
    pub scenario: Scenario,
    pub methods: Vec<MethodSummary>,
}

impl CoverageReport {
    pub fn method(&self, method: Method) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.method == method)
    }
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn summarize(method: Method, truth: f64, sims: usize, outcomes: &[Option<Outcome>]) -> MethodSummary {
    let ok: Vec<&Outcome> = outcomes.iter().flatten().collect();
    let estimates: Vec<f64> = ok.iter().map(|o| o.estimate).collect();
    let ses: Vec<f64> = ok.iter().filter_map(|o| o.se).collect();
    let variances: Vec<f64> = ses.iter().map(|s| s * s).collect();
    let scored = ok.iter().any(|o| o.covered.is_some());
    let coverage = scored.then(|| {
        ok.iter().filter(|o| o.covered == Some(true)).count() as f64 / sims as f64
    });
    let true_sd = mean(&estimates).filter(|_| estimates.len() > 1).map(|m| {
        let ss: f64 = estimates.iter().map(|e| (e - m) * (e - m)).sum();
        (ss / (estimates.len() - 1) as f64).sqrt()
    });
    MethodSummary {
        method,
        truth,
        failures: outcomes.len() - ok.len(),
        coverage,
        coverage_se: coverage.map(|c| (c * (1.0 - c) / sims as f64).sqrt()),
        mean_estimate: mean(&estimates),
        true_sd,
        mean_se: mean(&ses),
        mean_variance: mean(&variances),
    }
}

/// A zero-width interval is empty and never covers.
fn covers(lower: f64, upper: f64, truth: f64) -> bool {
    lower < upper && lower <= truth && truth <= upper
}

fn normal_outcome(estimate: f64, se: f64, z: f64, truth: f64) -> Outcome {
    Outcome {
        estimate,
        se: Some(se),
        covered: Some(covers(estimate - z * se, estimate + z * se, truth)),
    }
}

fn quantile_outcome(q: QuantileEstimate, truth: f64) -> Outcome {
    Outcome {
        estimate: q.value,
        se: None,
        covered: Some(covers(q.lower, q.upper, truth)),
    }
}

fn replicate(s: &Scenario, truth: f64, r: usize) -> Vec<Option<Outcome>> {
    let mut rng = rng::stream(s.seed, r as u64);
    let z = z_critical(s.alpha);
    match s.design {
        Design::Ratio { model, n } => {
            let pairs = generate::gen_table1(model, n, &mut rng);
            let input = UniMoments::from_values(pairs.iter().map(|p| p.0))
                .and_then(|x| RatioInput::independent(&x, &UniMoments::from_values(pairs.iter().map(|p| p.1))?, s.alpha));
            RATIO_METHODS
                .iter()
                .map(|&m| {
                    let ci = ratio_ci(input.as_ref().ok()?, m).ok()?;
                    Some(Outcome {
                        estimate: ci.point,
                        se: Some(ci.se),
                        covered: Some(covers(ci.lower, ci.upper, truth)),
                    })
                })
                .collect()
        }
        Design::Cluster { clusters } => {
            let groups = generate::gen_table2(clusters, &generate::CLUSTER_CATEGORIES, &mut rng);
            let summary = ClusterSummary::from_observations(
                groups.iter().enumerate().flat_map(|(i, g)| g.iter().map(move |&y| (i, y))),
            )
            .ok();
            let mut lmm = LmmData::new(1);
            for (i, g) in groups.iter().enumerate() {
                for &y in g {
                    lmm.push(i as u64, &[1.0], y).expect("finite");
                }
            }
            let fit = fit_random_intercept(&lmm).ok();
            let by_summary = |naive: bool| {
                let sm = summary.as_ref()?;
                let e = if naive { sm.naive_variance() } else { sm.delta_variance() }.ok()?;
                Some(normal_outcome(e.mean, e.se, z, truth))
            };
            vec![
                by_summary(true),
                by_summary(false),
                fit.as_ref()
                    .map(|f| normal_outcome(f.beta[0], f.se_beta[0], z, truth)),
                fit.as_ref().and_then(|f| {
                    let w = weighted_cluster_mean(f, &f.cluster_sizes).ok()?;
                    Some(Outcome { estimate: w, se: None, covered: None })
                }),
            ]
        }
        Design::Quantile { model, users, p } => {
            let data = generate::gen_table3(model, users, &mut rng);
            let mut out = vec![
                outer_ci_pre(&data, p, s.alpha).ok().map(|q| quantile_outcome(q, truth)),
                outer_ci_post(&data, p, s.alpha).ok().map(|q| quantile_outcome(q, truth)),
            ];
            if s.bootstrap > 0 {
                let seed = rng::child_seed(s.seed, r as u64);
                out.push(
                    bootstrap_ci(&data, p, s.alpha, s.bootstrap, seed)
                        .ok()
                        .map(|q| quantile_outcome(q, truth)),
                );
            }
            out
        }
        Design::Crossover { users_per_group, decompose } => {
            let sample = generate::gen_table45(users_per_group, &mut rng);
            let panel = &sample.panel;
            let lmm = fit_crossover_lmm(panel, s.alpha)
                .ok()
                .map(|f| normal_outcome(f.delta(), f.se_delta, z, truth));
            if !decompose {
                let gls = metric_cov(panel, Group::I)
                    .and_then(|g1| fit_crossover(&g1, &metric_cov(panel, Group::II)?, s.alpha))
                    .ok()
                    .map(|f| normal_outcome(f.delta(), f.se_delta, z, truth));
                vec![gls, lmm]
            } else {
                match decompose_complete_incomplete(panel) {
                    Ok(d) => {
                        let o = |e: crate::crossover::SubgroupEstimate| {
                            Some(normal_outcome(e.estimate, e.variance.max(0.0).sqrt(), z, truth))
                        };
                        vec![lmm, o(d.complete), o(d.incomplete), o(d.weighted)]
                    }
                    Err(_) => vec![lmm, None, None, None],
                }
            }
        }
    }
}

/// Runs every replicate of `scenario` and summarizes each method.
pub fn run_table(scenario: &Scenario) -> Result<CoverageReport> {
    scenario.validate()?;
    let truth = scenario.truth();
    let runs: Vec<Vec<Option<Outcome>>> = (0..scenario.sims)
        .into_par_iter()
        .map(|r| replicate(scenario, truth, r))
        .collect();
    let methods = scenario
        .methods()
        .into_iter()
        .enumerate()
        .map(|(j, m)| {
            let column: Vec<Option<Outcome>> = runs.iter().map(|row| row[j]).collect();
            summarize(m, truth, scenario.sims, &column)
        })
        .collect();
    Ok(CoverageReport {
        table: scenario.table(),
        scenario: *scenario,
        methods,
    })
}

/// Realized observed-population effect averaged over `draws` large panels.
pub fn crossover_oracle(users_per_group: usize, draws: usize, seed: u64) -> f64 {
    let total: f64 = (0..draws)
        .into_par_iter()
        .map(|r| generate::gen_table45(users_per_group, &mut rng::stream(seed, r as u64)).observed_effect())
        .collect::<Vec<_>>()
        .iter()
        .sum();
    total / draws as f64
}
