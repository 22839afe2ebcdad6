//! Data generators for the simulation studies.

use rand::Rng;
use rand_distr::{Binomial, Distribution, LogNormal, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::crossover::{AugmentedPanel, Group, PanelUser};
use crate::dist::normal_cdf;
use crate::quantile::ClusteredSample;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RatioModel {
    Normal,
    Poisson,
    Bernoulli,
}

impl RatioModel {
    pub const ALL: [RatioModel; 3] = [RatioModel::Normal, RatioModel::Poisson, RatioModel::Bernoulli];

    /// `(μ_x, μ_y)`.
    pub fn means(self) -> (f64, f64) {
        match self {
            RatioModel::Normal => (1.0, 1.1),
            RatioModel::Poisson => (1.0, 1.1),
            RatioModel::Bernoulli => (0.5, 0.6),
        }
    }

    /// True percent change `μ_y/μ_x - 1`.
    pub fn percent_change(self) -> f64 {
        let (mx, my) = self.means();
        my / mx - 1.0
    }
}

/// `n` independent control/treatment pairs.
pub fn gen_table1<R: Rng + ?Sized>(model: RatioModel, n: usize, rng: &mut R) -> Vec<(f64, f64)> {
    let (mx, my) = model.means();
    match model {
        RatioModel::Normal => {
            let x = Normal::new(mx, 0.1).expect("valid");
            let y = Normal::new(my, 0.1).expect("valid");
            (0..n).map(|_| (x.sample(rng), y.sample(rng))).collect()
        }
        RatioModel::Poisson => {
            let x = Poisson::new(mx).expect("valid");
            let y = Poisson::new(my).expect("valid");
            (0..n).map(|_| (x.sample(rng), y.sample(rng))).collect()
        }
        RatioModel::Bernoulli => (0..n)
            .map(|_| {
                let x = rng.gen_bool(mx) as u8 as f64;
                let y = rng.gen_bool(my) as u8 as f64;
                (x, y)
            })
            .collect(),
    }
}

/// Cluster category: share of clusters, Poisson mean size, and mean and SD
/// of the cluster success probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterCategory {
    pub share: f64,
    pub mean_size: f64,
    pub mu: f64,
    pub sd: f64,
}

pub const CLUSTER_CATEGORIES: [ClusterCategory; 3] = [
    ClusterCategory { share: 1.0 / 3.0, mean_size: 2.0, mu: 0.3, sd: 0.05 },
    ClusterCategory { share: 1.0 / 2.0, mean_size: 5.0, mu: 0.5, sd: 0.1 },
    ClusterCategory { share: 1.0 / 6.0, mean_size: 30.0, mu: 0.8, sd: 0.05 },
];

/// Size-weighted mean success probability of a category mix.
pub fn cluster_truth(categories: &[ClusterCategory]) -> f64 {
    let num: f64 = categories.iter().map(|c| c.share * c.mean_size * c.mu).sum();
    let den: f64 = categories.iter().map(|c| c.share * c.mean_size).sum();
    num / den
}

/// `k` clusters of Bernoulli observations. Category counts are multinomial,
/// drawn as successive conditional binomials. Clusters that come out empty
/// are dropped and success probabilities are clamped to `[0, 1]`.
pub fn gen_table2<R: Rng + ?Sized>(k: u64, categories: &[ClusterCategory], rng: &mut R) -> Vec<Vec<f64>> {
    let mut remaining = k;
    let mut share_left = 1.0;
    let mut clusters = Vec::with_capacity(k as usize);
    for (i, cat) in categories.iter().enumerate() {
        let m = if i + 1 == categories.len() || share_left <= cat.share {
            remaining
        } else {
            let p = (cat.share / share_left).clamp(0.0, 1.0);
            Binomial::new(remaining, p).expect("valid").sample(rng)
        };
        remaining -= m;
        share_left -= cat.share;
        let size = Poisson::new(cat.mean_size).expect("valid");
        let mu = Normal::new(cat.mu, cat.sd).expect("valid");
        for _ in 0..m {
            let n: f64 = size.sample(rng);
            let p = mu.sample(rng).clamp(0.0, 1.0);
            if n < 1.0 {
                continue;
            }
            clusters.push((0..n as u64).map(|_| rng.gen_bool(p) as u8 as f64).collect());
        }
    }
    clusters
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuantileModel {
    Normal,
    LogNormal,
}

impl QuantileModel {
    pub const ALL: [QuantileModel; 2] = [QuantileModel::Normal, QuantileModel::LogNormal];
}

/// `users` clusters of 1 to 10 observations (uniform), each the sum of a
/// per-observation and a per-user draw.
pub fn gen_table3<R: Rng + ?Sized>(model: QuantileModel, users: usize, rng: &mut R) -> ClusteredSample {
    let normal = Normal::new(0.0, 1.0).expect("valid");
    let lognormal = LogNormal::new(0.0, 1.0).expect("valid");
    let draw = |rng: &mut R| match model {
        QuantileModel::Normal => normal.sample(rng),
        QuantileModel::LogNormal => lognormal.sample(rng),
    };
    let groups: Vec<Vec<f64>> = (0..users)
        .map(|_| {
            let size = rng.gen_range(1..=10);
            let shared = draw(rng);
            (0..size).map(|_| shared + draw(rng)).collect()
        })
        .collect();
    ClusteredSample::from_groups(&groups).expect("finite draws")
}

/// A simulated cross-over panel together with each user's realized effect
/// `Δ_i·l_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossoverSample {
    pub panel: AugmentedPanel,
    pub effects: Vec<f64>,
}

impl CrossoverSample {
    /// Average realized effect over users whose treated period was observed.
    pub fn observed_effect(&self) -> f64 {
        let (s, c) = self
            .panel
            .users
            .iter()
            .zip(&self.effects)
            .filter(|(u, _)| u.present[(u.group.treated_period() - 1) as usize])
            .fold((0.0, 0u64), |(s, c), (_, e)| (s + e, c + 1));
        s / c as f64
    }
}

pub const USER_MEAN: f64 = 10.0;
pub const USER_SD: f64 = 3.0;
pub const NOISE_SD: f64 = 2.0;
pub const EFFECT_MEAN: f64 = 10.0;
pub const EFFECT_SD: f64 = 0.3;
pub const MIN_PRESENCE: f64 = 0.1;

/// Two groups of `per_group` users with reversed treatment order. The effect
/// and the chance of being observed both grow with the user's engagement
/// `l_i = Φ((u_i - 10)/3)`. Users absent from both periods stay in the
/// panel with no observed cell.
pub fn gen_table45<R: Rng + ?Sized>(per_group: usize, rng: &mut R) -> CrossoverSample {
    let user = Normal::new(USER_MEAN, USER_SD).expect("valid");
    let noise = Normal::new(0.0, NOISE_SD).expect("valid");
    let effect = Normal::new(EFFECT_MEAN, EFFECT_SD).expect("valid");
    let mut users = Vec::with_capacity(2 * per_group);
    let mut effects = Vec::with_capacity(2 * per_group);
    for (g, group) in [Group::I, Group::II].into_iter().enumerate() {
        for i in 0..per_group {
            let u = user.sample(rng);
            let l = normal_cdf((u - USER_MEAN) / USER_SD);
            let d = effect.sample(rng) * l;
            let show = l.max(MIN_PRESENCE);
            let mut value = [0.0; 2];
            let mut present = [false; 2];
            for t in 0..2 {
                let treated = group.treated_period() as usize == t + 1;
                let x = u + noise.sample(rng) + if treated { d } else { 0.0 };
                if rng.gen_bool(show) {
                    present[t] = true;
                    value[t] = x;
                }
            }
            users.push(PanelUser {
                id: (g * per_group + i).to_string(),
                group,
                present,
                value,
            });
            effects.push(d);
        }
    }
    CrossoverSample {
        panel: AugmentedPanel { users },
        effects,
    }
}
