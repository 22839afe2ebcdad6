//! Property checks shared by the core test suite and the acceptance runner.
//! Each check drives its own proptest runner and returns the shrunk failure.

use deltametrics::cluster::{donner_variance, ClusterSummary};
use deltametrics::crossover::{fit_crossover, metric_cov, AugmentedPanel, CrossoverRow, Group, GroupMetricVector};
use deltametrics::dist::{normal_cdf, normal_quantile};
use deltametrics::lmm::{fit_random_intercept, LmmData};
use deltametrics::moments::{PairedMoments, PairedStats};
use deltametrics::quantile::{outer_ci_post, outer_ci_pre, ClusteredSample};
use deltametrics::ratio::{delta_ci, edgeworth_cdf, edgeworth_ci, edgeworth_quantile, ratio_ci, RatioInput, RATIO_METHODS};
use deltametrics::report::{from_json, to_json, Report};
use deltametrics::{select_ranks, Method};
use nalgebra::{Matrix2, Matrix3, Matrix4, Matrix4x3, Vector2, Vector3, Vector4};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use rand::Rng;
use rand_distr::{Distribution, Normal};

pub type Check = fn() -> Result<(), String>;

/// Every property, by name.
pub const ALL: [(&str, Check); 16] = [
    ("moments merge/shard equivalence", merged_shards_match_one_pass),
    ("select_ranks equals full sort", select_ranks_matches_sort),
    ("ratio interval scale invariance", ratio_interval_ignores_common_scale),
    ("Y = X gives zero width", identical_arms_give_zero_width),
    ("Fieller meets Delta at n = 1e6", fieller_meets_delta_for_large_samples),
    ("zero-skew Edgeworth cdf is normal", zero_skew_edgeworth_is_normal),
    ("symmetric sample Edgeworth equals Delta", symmetric_sample_edgeworth_is_delta),
    ("unit clusters reduce to i.i.d.", unit_clusters_reduce_to_iid),
    ("equal clusters match closed form", equal_clusters_match_closed_form),
    ("outer interval rank sandwich", outer_interval_brackets_point),
    ("outer interval monotone equivariance", pre_interval_follows_monotone_maps),
    ("augmentation ratio identity", augmented_ratio_is_observed_mean),
    ("GLS equals OLS under identity covariance", gls_with_identity_is_ols),
    ("REML equals balanced ANOVA", reml_matches_balanced_anova),
    ("report JSON round-trips every f64", report_json_round_trips),
    ("shuffling users leaves cross-over fit unchanged", crossover_ignores_user_order),
];

fn run<S: Strategy>(
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String> {
    let mut runner = TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    });
    runner.run(&strategy, test).map_err(|e| e.to_string())
}

fn close(a: f64, b: f64, rel: f64, scale: f64) -> bool {
    (a - b).abs() <= rel * (a.abs().max(b.abs()) + scale)
}

fn stats_close(a: &PairedStats, b: &PairedStats, scale: f64) -> bool {
    let s2 = scale * scale;
    a.n == b.n
        && close(a.mean_x, b.mean_x, 1e-9, scale)
        && close(a.mean_y, b.mean_y, 1e-9, scale)
        && close(a.var_x, b.var_x, 1e-9, s2)
        && close(a.var_y, b.var_y, 1e-9, s2)
        && close(a.cov_xy, b.cov_xy, 1e-9, s2)
        && close(a.m30, b.m30, 1e-9, s2 * scale)
        && close(a.m21, b.m21, 1e-9, s2 * scale)
        && close(a.m12, b.m12, 1e-9, s2 * scale)
        && close(a.m03, b.m03, 1e-9, s2 * scale)
}

fn clustered() -> impl Strategy<Value = (Vec<Vec<f64>>, f64)> {
    (
        prop::collection::vec(prop::collection::vec(-50.0..50.0f64, 1..6), 3..40),
        0.05..0.95f64,
    )
}

pub fn merged_shards_match_one_pass() -> Result<(), String> {
    let strategy = (
        prop::collection::vec((-1e3..1e3f64, -1e3..1e3f64), 3..60),
        prop::collection::vec(any::<prop::sample::Index>(), 0..5),
    );
    run(1000, strategy, |(data, cuts)| {
        let whole = PairedMoments::from_pairs(data.iter().copied()).unwrap();
        let mut at: Vec<usize> = cuts.iter().map(|c| c.index(data.len() + 1)).collect();
        at.extend([0, data.len()]);
        at.sort_unstable();
        let merged = at
            .windows(2)
            .map(|w| PairedMoments::from_pairs(data[w[0]..w[1]].iter().copied()).unwrap())
            .fold(PairedMoments::new(), |acc, m| acc.merge(&m));
        let scale = data.iter().map(|(x, y)| x.abs().max(y.abs())).fold(1.0, f64::max);
        prop_assert!(stats_close(&whole.stats().unwrap(), &merged.stats().unwrap(), scale));
        Ok(())
    })
}

pub fn select_ranks_matches_sort() -> Result<(), String> {
    let strategy = (
        prop::collection::vec(-1e6..1e6f64, 1..200),
        prop::collection::vec(any::<prop::sample::Index>(), 1..6),
    );
    run(1000, strategy, |(values, picks)| {
        let ranks: Vec<usize> = picks.iter().map(|i| i.index(values.len()) + 1).collect();
        let mut sorted = values.clone();
        sorted.sort_by(f64::total_cmp);
        let got = select_ranks(&values, &ranks).unwrap();
        for r in ranks {
            prop_assert_eq!(got[&r], sorted[r - 1]);
        }
        Ok(())
    })
}

pub fn ratio_interval_ignores_common_scale() -> Result<(), String> {
    let strategy = (prop::collection::vec((1.0..100.0f64, 1.0..100.0f64), 5..40), 1e-3..1e3f64);
    run(200, strategy, |(data, c)| {
        let base = RatioInput::paired(&PairedMoments::from_pairs(data.iter().copied()).unwrap(), 0.05).unwrap();
        let scaled = RatioInput::paired(
            &PairedMoments::from_pairs(data.iter().map(|&(x, y)| (c * x, c * y))).unwrap(),
            0.05,
        )
        .unwrap();
        for m in RATIO_METHODS {
            match (ratio_ci(&base, m), ratio_ci(&scaled, m)) {
                (Ok(a), Ok(b)) => {
                    let w = a.width().abs().max(1e-12);
                    prop_assert!((a.point - b.point).abs() <= 1e-9 * (1.0 + a.point.abs()), "{m}");
                    prop_assert!((a.lower - b.lower).abs() <= 1e-7 * w + 1e-12, "{m}");
                    prop_assert!((a.upper - b.upper).abs() <= 1e-7 * w + 1e-12, "{m}");
                }
                (Err(_), Err(_)) => {}
                (a, b) => prop_assert!(false, "{m}: {a:?} vs {b:?}"),
            }
        }
        Ok(())
    })
}

pub fn identical_arms_give_zero_width() -> Result<(), String> {
    run(200, prop::collection::vec(90.0..110.0f64, 3..40), |xs| {
        let input = RatioInput::paired(&PairedMoments::from_pairs(xs.iter().map(|&x| (x, x))).unwrap(), 0.05).unwrap();
        for m in RATIO_METHODS {
            let ci = ratio_ci(&input, m).unwrap();
            prop_assert!(ci.point.abs() < 1e-12, "{m}: {ci:?}");
            prop_assert!(ci.width().abs() < 1e-9, "{m}: {ci:?}");
        }
        Ok(())
    })
}

pub fn fieller_meets_delta_for_large_samples() -> Result<(), String> {
    let mut rng = deltametrics::rng::stream(7, 0);
    let nx = Normal::new(10.0, 3.0).unwrap();
    let mut acc = PairedMoments::new();
    for _ in 0..1_000_000 {
        let x: f64 = nx.sample(&mut rng);
        let y = 1.05 * x + rng.gen_range(-1.0..1.0);
        acc.push(x, y).unwrap();
    }
    let input = RatioInput::paired(&acc, 0.05).unwrap();
    let f = ratio_ci(&input, Method::Fieller).map_err(|e| e.to_string())?;
    let d = ratio_ci(&input, Method::Delta).map_err(|e| e.to_string())?;
    for (a, b) in [(f.lower, d.lower), (f.upper, d.upper)] {
        if (a - b).abs() > 1e-3 * b.abs() {
            return Err(format!("fieller {a} vs delta {b}"));
        }
    }
    Ok(())
}

pub fn zero_skew_edgeworth_is_normal() -> Result<(), String> {
    for i in 1..200 {
        let prob = i as f64 / 200.0;
        let t = normal_quantile(prob);
        if edgeworth_cdf(t, 0.0, 50) != normal_cdf(t) {
            return Err(format!("cdf differs at {t}"));
        }
        let q = edgeworth_quantile(prob, 0.0, 50).ok_or("no quantile")?;
        if (q - t).abs() > 1e-8 {
            return Err(format!("{prob}: {q} vs {t}"));
        }
    }
    Ok(())
}

pub fn symmetric_sample_edgeworth_is_delta() -> Result<(), String> {
    let strategy = (
        prop::collection::vec((-5.0..5.0f64, -5.0..5.0f64), 2..30),
        10.0..50.0f64,
        10.0..50.0f64,
    );
    run(200, strategy, |(half, mx, my)| {
        let data = half.iter().flat_map(|&(a, b)| [(mx + a, my + b), (mx - a, my - b)]);
        let input = RatioInput::paired(&PairedMoments::from_pairs(data).unwrap(), 0.05).unwrap();
        for bc in [false, true] {
            let d = delta_ci(&input, bc).unwrap();
            let e = edgeworth_ci(&input, bc).unwrap();
            let w = d.width().max(1e-12);
            prop_assert!((d.lower - e.lower).abs() <= 1e-6 * w);
            prop_assert!((d.upper - e.upper).abs() <= 1e-6 * w);
        }
        Ok(())
    })
}

pub fn unit_clusters_reduce_to_iid() -> Result<(), String> {
    run(200, prop::collection::vec(-1e3..1e3f64, 2..100), |values| {
        let s = ClusterSummary::from_observations(values.iter().enumerate().map(|(i, &v)| (i, v))).unwrap();
        let d = s.delta_variance().unwrap().variance;
        let n = s.naive_variance().unwrap().variance;
        prop_assert!(close(d, n, 1e-9, 1e-12), "{d} vs {n}");
        Ok(())
    })
}

pub fn equal_clusters_match_closed_form() -> Result<(), String> {
    let strategy = (2usize..30, 1usize..8)
        .prop_flat_map(|(k, m)| prop::collection::vec(prop::collection::vec(-100.0..100.0f64, m), k));
    run(200, strategy, |groups| {
        let k = groups.len() as u64;
        let m = groups[0].len() as u64;
        let means: Vec<f64> = groups.iter().map(|g| g.iter().sum::<f64>() / m as f64).collect();
        let grand = means.iter().sum::<f64>() / k as f64;
        let var_means = means.iter().map(|x| (x - grand).powi(2)).sum::<f64>() / (k - 1) as f64;
        let sigma2 = if m > 1 {
            groups
                .iter()
                .zip(&means)
                .flat_map(|(g, mu)| g.iter().map(move |x| (x - mu).powi(2)))
                .sum::<f64>()
                / (k * (m - 1)) as f64
        } else {
            0.0
        };
        let tau2 = var_means - sigma2 / m as f64;
        let obs = groups.iter().enumerate().flat_map(|(i, g)| g.iter().map(move |&v| (i, v)));
        let d = ClusterSummary::from_observations(obs).unwrap().delta_variance().unwrap().variance;
        let closed = donner_variance(sigma2, tau2, k, m);
        prop_assert!(close(d, closed, 1e-9, 1e-9), "{d} vs {closed}");
        Ok(())
    })
}

pub fn outer_interval_brackets_point() -> Result<(), String> {
    run(200, clustered(), |(groups, p)| {
        let data = ClusteredSample::from_groups(&groups).unwrap();
        for est in [outer_ci_pre(&data, p, 0.05).unwrap(), outer_ci_post(&data, p, 0.05).unwrap()] {
            let (lo, hi) = (est.lower_rank.unwrap(), est.upper_rank.unwrap());
            prop_assert!(1 <= lo && lo <= est.rank && est.rank <= hi && hi <= data.len());
            prop_assert!(est.lower <= est.value && est.value <= est.upper);
        }
        Ok(())
    })
}

pub fn pre_interval_follows_monotone_maps() -> Result<(), String> {
    run(200, clustered(), |(groups, p)| {
        let f = |x: f64| x * x * x + x;
        let data = ClusteredSample::from_groups(&groups).unwrap();
        let a = outer_ci_pre(&data, p, 0.05).unwrap();
        let b = outer_ci_pre(&data.map_values(f).unwrap(), p, 0.05).unwrap();
        prop_assert_eq!(f(a.value), b.value);
        prop_assert_eq!(f(a.lower), b.lower);
        prop_assert_eq!(f(a.upper), b.upper);
        // post-adjustment only commutes with increasing affine maps
        let g = |x: f64| 2.5 * x - 7.0;
        let a = outer_ci_post(&data, p, 0.05).unwrap();
        let b = outer_ci_post(&data.map_values(g).unwrap(), p, 0.05).unwrap();
        prop_assert!(close(g(a.lower), b.lower, 1e-9, 1.0));
        prop_assert!(close(g(a.upper), b.upper, 1e-9, 1.0));
        Ok(())
    })
}

fn panel_rows(cells: &[(bool, f64, bool)]) -> Vec<CrossoverRow> {
    let mut rows = Vec::new();
    for (i, &(both, v, first)) in cells.iter().enumerate() {
        let group = if i % 2 == 0 { Group::I } else { Group::II };
        let user = format!("u{i}");
        if first || !both {
            rows.push(CrossoverRow { user: user.clone(), group, period: 1, value: v });
        }
        if both {
            rows.push(CrossoverRow { user, group, period: 2, value: 1.0 - 0.5 * v });
        }
    }
    rows
}

fn cells() -> impl Strategy<Value = Vec<(bool, f64, bool)>> {
    prop::collection::vec((any::<bool>(), -10.0..10.0f64, any::<bool>()), 4..60)
}

pub fn augmented_ratio_is_observed_mean() -> Result<(), String> {
    run(200, cells(), |cells| {
        let panel = AugmentedPanel::augment(panel_rows(&cells)).unwrap();
        for group in [Group::I, Group::II] {
            let Ok(g) = metric_cov(&panel, group) else { continue };
            for t in 1..=2u8 {
                let want = panel.observed_mean(group, t).unwrap();
                let got = g.metrics[(t - 1) as usize];
                prop_assert!(close(got, want, 1e-12, 1.0), "{got} vs {want}");
            }
        }
        Ok(())
    })
}

pub fn crossover_ignores_user_order() -> Result<(), String> {
    let strategy = (prop::collection::vec((any::<bool>(), -10.0..10.0f64, any::<bool>()), 12..60), any::<u64>());
    run(100, strategy, |(cells, seed)| {
        let fit = |rows: Vec<CrossoverRow>| {
            let panel = AugmentedPanel::augment(rows).ok()?;
            let g1 = metric_cov(&panel, Group::I).ok()?;
            let g2 = metric_cov(&panel, Group::II).ok()?;
            fit_crossover(&g1, &g2, 0.05).ok()
        };
        let rows = panel_rows(&cells);
        let mut shuffled = rows.clone();
        rand::seq::SliceRandom::shuffle(&mut shuffled[..], &mut deltametrics::rng::stream(seed, 0));
        match (fit(rows), fit(shuffled)) {
            (Some(a), Some(b)) => {
                let scale = a.theta.amax().max(1.0);
                prop_assert!((a.theta - b.theta).amax() <= 1e-9 * scale);
                prop_assert!(close(a.se_delta, b.se_delta, 1e-9, 1e-12));
            }
            (None, None) => {}
            (a, b) => prop_assert!(false, "{a:?} vs {b:?}"),
        }
        Ok(())
    })
}

pub fn gls_with_identity_is_ols() -> Result<(), String> {
    run(200, prop::array::uniform4(-100.0..100.0f64), |x| {
        let g = |group, a: f64, b: f64| GroupMetricVector {
            group,
            users: 10,
            means: Vector4::zeros(),
            cov_means: Matrix4::identity(),
            metrics: Vector2::new(a, b),
            metric_cov: Matrix2::identity(),
        };
        let fit = fit_crossover(&g(Group::I, x[0], x[1]), &g(Group::II, x[2], x[3]), 0.05).unwrap();
        let m = Matrix4x3::new(1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0);
        let xtx: Matrix3<f64> = m.transpose() * m;
        let inv = xtx.try_inverse().unwrap();
        let ols: Vector3<f64> = inv * m.transpose() * Vector4::from(x);
        for i in 0..3 {
            prop_assert!(close(fit.theta[i], ols[i], 1e-10, 1.0));
            for j in 0..3 {
                prop_assert!(close(fit.covariance[(i, j)], inv[(i, j)], 1e-10, 1.0));
            }
        }
        Ok(())
    })
}

pub fn reml_matches_balanced_anova() -> Result<(), String> {
    let strategy = (3usize..30, 2usize..8, 1.0..5.0f64, any::<u64>());
    run(100, strategy, |(k, m, tau, seed)| {
        let mut rng = deltametrics::rng::stream(seed, 0);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let mut data = LmmData::new(1);
        let mut groups = Vec::new();
        for c in 0..k {
            let b = tau * noise.sample(&mut rng);
            let g: Vec<f64> = (0..m).map(|_| 3.0 + b + noise.sample(&mut rng)).collect();
            for &y in &g {
                data.push(c as u64, &[1.0], y).unwrap();
            }
            groups.push(g);
        }
        let (kf, mf) = (k as f64, m as f64);
        let means: Vec<f64> = groups.iter().map(|g| g.iter().sum::<f64>() / mf).collect();
        let grand = means.iter().sum::<f64>() / kf;
        let msb = mf * means.iter().map(|x| (x - grand).powi(2)).sum::<f64>() / (kf - 1.0);
        let msw = groups
            .iter()
            .zip(&means)
            .flat_map(|(g, mu)| g.iter().map(move |y| (y - mu).powi(2)))
            .sum::<f64>()
            / (kf * (mf - 1.0));
        let tau2 = (msb - msw) / mf;
        // the closed form only holds away from the boundary
        prop_assume!(tau2 > 0.05 * msw);
        let fit = fit_random_intercept(&data).unwrap();
        prop_assert!(close(fit.sigma2, msw, 1e-6, 0.0), "{} vs {msw}", fit.sigma2);
        prop_assert!(close(fit.tau2, tau2, 1e-6, 0.0), "{} vs {tau2}", fit.tau2);
        prop_assert!(close(fit.beta[0], grand, 1e-9, 1.0));
        Ok(())
    })
}

pub fn report_json_round_trips() -> Result<(), String> {
    let strategy = (prop::array::uniform5(any::<f64>()), any::<u64>());
    run(500, strategy, |(v, n)| {
        let r = Report {
            method: Method::Delta,
            point: v[0],
            lower: v[1],
            upper: v[2],
            alpha: v[3],
            se: v[4],
            n,
            warnings: vec![],
        };
        let back = from_json(&to_json(std::slice::from_ref(&r)).unwrap()).unwrap().remove(0);
        let same = |a: f64, b: f64| if a.is_finite() { a.to_bits() == b.to_bits() } else { b.is_nan() };
        for (a, b) in [(r.point, back.point), (r.lower, back.lower), (r.upper, back.upper), (r.alpha, back.alpha), (r.se, back.se)] {
            prop_assert!(same(a, b), "{a:e} came back as {b:e}");
        }
        prop_assert_eq!(back.n, n);
        Ok(())
    })
}
