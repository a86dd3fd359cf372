use chrono::{Duration, NaiveDate};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;

use fxres_core::clustering::{kmeans, wcss};
use fxres_core::panel::{self, read_panel_csv, CsvSchema, Frequency, PanelTable};
use fxres_core::resilience::{
    contributions, pca_first_component, rank_scores, resilience, supporting_factor_count, threshold, total_effect,
    ResilienceScore, ThresholdDirection, ThresholdQuery,
};
use fxres_core::spvar::{aggregate_irf_quantiles, cholesky_identify, cumulative_irf, irf_matrices};
use fxres_core::stats::QuantileMethod;
use fxres_core::volatility::{quarterly_sd, rolling_sd_values, Dated, VolVariable};
use fxres_core::{rng, Execution};

fn quarter_ends(n: usize) -> Vec<NaiveDate> {
    fxres_core::synth::quarter_grid(fxres_core::synth::start_quarter(), n)
}

fn table(values: &[Vec<f64>]) -> PanelTable {
    let dates = quarter_ends(values[0].len());
    let rows = values.iter().enumerate().flat_map(|(i, xs)| {
        let dates = dates.clone();
        xs.iter().enumerate().map(move |(s, v)| (format!("C{i}"), dates[s], "x".to_string(), *v))
    });
    PanelTable::from_observations(Frequency::Quarterly, rows).unwrap()
}

fn panel_values() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (2usize..5, 3usize..12).prop_flat_map(|(n, t)| prop::collection::vec(prop::collection::vec(-1e3f64..1e3, t), n))
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn winsorize_is_idempotent(values in panel_values(), lo in 0.0f64..20.0, width in 10.0f64..80.0) {
        let t = table(&values);
        let once = panel::winsorize_with(&t, lo, lo + width, QuantileMethod::InverseCdf).unwrap();
        let twice = panel::winsorize_with(&once, lo, lo + width, QuantileMethod::InverseCdf).unwrap();
        prop_assert_eq!(once.to_rows(), twice.to_rows());
    }

    #[test]
    fn normalizations_preserve_order(values in panel_values()) {
        let t = table(&values);
        let pooled = t.pooled("x");
        prop_assume!(pooled.iter().any(|v| *v != pooled[0]));
        let z = panel::zscore_normalize(&t, &["x"]).unwrap();
        let m = panel::minmax_normalize(&z, &["x"]).unwrap().pooled("x");
        for i in 0..pooled.len() {
            for j in 0..pooled.len() {
                if pooled[i] < pooled[j] {
                    prop_assert!(m[i] <= m[j]);
                }
            }
        }
    }

    #[test]
    fn csv_round_trip(values in panel_values()) {
        let t = table(&values);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let back = read_panel_csv(buf.as_slice(), &CsvSchema::new(Frequency::Quarterly)).unwrap();
        let a: Vec<_> = t.to_rows().into_iter().map(|(c, d, v, x)| (c, d, v, x.to_bits())).collect();
        let b: Vec<_> = back.to_rows().into_iter().map(|(c, d, v, x)| (c, d, v, x.to_bits())).collect();
        prop_assert_eq!(a, b);
        prop_assert_eq!(back.is_balanced(), t.is_balanced());
    }

    #[test]
    fn rolling_sd_scale_and_shift(xs in prop::collection::vec(-100.0f64..100.0, 4..60), k in -6i32..6, shift in -50.0f64..50.0) {
        let base = rolling_sd_values(&xs, 4).unwrap();
        let c = 2f64.powi(k);
        let scaled = rolling_sd_values(&xs.iter().map(|v| c * v).collect::<Vec<_>>(), 4).unwrap();
        for (a, b) in base.iter().zip(&scaled) {
            prop_assert_eq!(c * a, *b);
        }
        let shifted = rolling_sd_values(&xs.iter().map(|v| v + shift).collect::<Vec<_>>(), 4).unwrap();
        for (a, b) in base.iter().zip(&shifted) {
            prop_assert!((a - b).abs() < 1e-12 * 150.0, "{} {}", a, b);
        }
        prop_assert!(base.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn quarterly_equals_rolling_at_quarter_end(mut xs in prop::collection::vec(-10.0f64..10.0, 40..80)) {
        let start = NaiveDate::from_ymd_opt(2010, 1, 1).unwrap();
        let mut dates: Vec<NaiveDate> = (0..xs.len()).map(|i| start + Duration::weeks(i as i64)).collect();
        let last = panel::quarter_end(*dates.last().unwrap());
        if dates.iter().filter(|d| panel::quarter_end(**d) == last).count() < 2 {
            dates.pop();
            xs.pop();
        }
        let q = quarterly_sd("AA", VolVariable::VolCF, Dated::new(&dates, &xs).unwrap()).unwrap();
        let mut i = 0;
        for (qe, v) in &q.values {
            let j = dates.iter().rposition(|d| d <= qe).unwrap();
            let len = j + 1 - i;
            let roll = rolling_sd_values(&xs[i..=j], len).unwrap();
            prop_assert_eq!(roll.len(), 1);
            prop_assert!((roll[0] - v).abs() < 1e-12);
            i = j + 1;
        }
    }

    #[test]
    fn kmeans_ignores_input_order(seed in any::<u64>(), n in 4usize..12) {
        let mut r = rng::rng_from(seed);
        let pts: Vec<Vec<f64>> = (0..n).map(|_| (0..3).map(|_| r.random_range(-5.0..5.0)).collect()).collect();
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, r.random_range(0..=i));
        }
        let shuffled: Vec<Vec<f64>> = perm.iter().map(|&i| pts[i].clone()).collect();
        let a = kmeans(&pts, 2, 7, 10, Execution::Sequential);
        let b = kmeans(&shuffled, 2, 7, 10, Execution::Sequential);
        match (a, b) {
            (Ok(a), Ok(b)) => {
                prop_assert_eq!(a.wcss, b.wcss);
                for (pos, &orig) in perm.iter().enumerate() {
                    for (pos2, &orig2) in perm.iter().enumerate() {
                        prop_assert_eq!(a.labels[orig] == a.labels[orig2], b.labels[pos] == b.labels[pos2]);
                    }
                }
                prop_assert!(a.history.windows(2).all(|w| w[1] <= w[0] + 1e-12));
                let refs: Vec<&[f64]> = pts.iter().map(Vec::as_slice).collect();
                let zero_based: Vec<usize> = a.labels.iter().map(|l| l - 1).collect();
                prop_assert!((wcss(&refs, &zero_based, &a.centroids) - a.wcss).abs() < 1e-9);
            }
            (Err(a), Err(b)) => prop_assert_eq!(a, b),
            _ => prop_assert!(false, "order changed the outcome"),
        }
    }

    #[test]
    fn threshold_inverts_total_effect(g1 in -2.0f64..2.0, g2 in prop_oneof![-3.0f64..-0.01, 0.01f64..3.0], theta in -1.0f64..1.0) {
        let q = ThresholdQuery::new(g1, g2, DMatrix::zeros(2, 2), theta);
        let (m, dir) = threshold(&q).unwrap();
        prop_assert!((total_effect(g1, g2, m) - theta).abs() < 1e-12);
        prop_assert_eq!(dir == ThresholdDirection::GreaterThan, g2 < 0.0);
    }

    #[test]
    fn ranking_order_survives_common_shift(medians in prop::collection::vec(0.0f64..3.0, 2..12), shift in -1.0f64..1.0, g2 in prop_oneof![-1.0f64..-0.01, 0.01f64..1.0]) {
        let scores = |delta: f64| {
            let mut s: Vec<ResilienceScore> = medians
                .iter()
                .enumerate()
                .map(|(i, m)| {
                    let score = resilience(0.2, g2, m + delta);
                    ResilienceScore {
                        country_id: format!("C{i:02}"),
                        period: (quarter_ends(1)[0], quarter_ends(1)[0]),
                        pc1mf_median: m + delta,
                        score,
                        ci_lo: score,
                        ci_hi: score,
                        contributions: Vec::new(),
                        rank: 0,
                    }
                })
                .collect();
            rank_scores(&mut s);
            s.into_iter().map(|s| s.country_id).collect::<Vec<_>>()
        };
        let mut distinct = medians.clone();
        distinct.sort_by(f64::total_cmp);
        prop_assume!(distinct.windows(2).all(|w| w[1] - w[0] > 1e-6));
        prop_assert_eq!(scores(0.0), scores(shift));
    }

    #[test]
    fn supporting_count_is_monotone(values in prop::collection::vec(-5.0f64..5.0, 6), thresholds in prop::collection::vec(-5.0f64..5.0, 6), k in 0usize..6, step in 0.0f64..3.0, dirs in prop::collection::vec(any::<bool>(), 6)) {
        let dirs: Vec<ThresholdDirection> = dirs.iter().map(|g| if *g { ThresholdDirection::GreaterThan } else { ThresholdDirection::LessThan }).collect();
        let before = supporting_factor_count(&values, &thresholds, &dirs);
        let mut better = values.clone();
        better[k] += if dirs[k] == ThresholdDirection::GreaterThan { step } else { -step };
        prop_assert!(supporting_factor_count(&better, &thresholds, &dirs) >= before);
        prop_assert!(before <= 6);
    }

    #[test]
    fn contribution_shares_sum_to_hundred(w in prop::collection::vec(0.01f64..1.0, 1..8), seed in any::<u64>()) {
        let mut r = rng::rng_from(seed);
        let v: Vec<f64> = w.iter().map(|_| r.random_range(0.0..1.0)).collect();
        prop_assume!(w.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>() > 1e-9);
        let s = contributions(&w, &v).unwrap();
        prop_assert!((s.iter().sum::<f64>() - 100.0).abs() < 1e-10);
    }

    #[test]
    fn pca_beats_random_directions(seed in any::<u64>()) {
        let mut r = rng::rng_from(seed);
        let x = DMatrix::from_fn(40, 6, |_, j| r.random_range(0.0..1.0) * (1.0 + j as f64 * 0.2));
        let names = ["a", "b", "c", "d", "e", "f"];
        let pca = pca_first_component(&x, &names).unwrap();
        let cov = fxres_core::resilience::column_covariance(&x);
        let w = nalgebra::DVector::from_vec(pca.loadings.clone());
        prop_assert!((w.norm() - 1.0).abs() < 1e-10);
        let best = (w.transpose() * &cov * &w)[(0, 0)];
        for _ in 0..200 {
            let u: nalgebra::DVector<f64> = nalgebra::DVector::from_fn(6, |_, _| r.random_range(-1.0..1.0));
            let u = u.normalize();
            prop_assert!((u.transpose() * &cov * &u)[(0, 0)] <= best + 1e-12);
        }
    }

    #[test]
    fn cumulative_is_prefix_sum(path in prop::collection::vec(-10.0f64..10.0, 1..40)) {
        let c = cumulative_irf(&path);
        let mut acc = 0.0;
        for (h, v) in path.iter().enumerate() {
            acc += v;
            prop_assert_eq!(c[h], acc);
        }
    }

    #[test]
    fn quantile_bands_are_ordered(seed in any::<u64>(), n in 2usize..10, h in 1usize..15) {
        let mut r = rng::rng_from(seed);
        let paths: Vec<Vec<f64>> = (0..n).map(|_| (0..h).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
        let b = aggregate_irf_quantiles(&paths).unwrap();
        for k in 0..h {
            prop_assert!(b.p25[k] <= b.median[k] && b.median[k] <= b.p75[k]);
        }
    }

    #[test]
    fn cholesky_reconstructs_and_sets_impact(a in -2.0f64..2.0, b in -2.0f64..2.0, c in -2.0f64..2.0, d in 0.1f64..2.0) {
        let m = DMatrix::from_row_slice(2, 2, &[a, b, c, d]);
        let sigma = &m * m.transpose() + DMatrix::identity(2, 2) * 0.01;
        let id = cholesky_identify(&sigma, &["VolCF", "VolFX"]).unwrap();
        prop_assert!((&id.b0 * id.b0.transpose() - &sigma).amax() < 1e-10 * sigma.amax().max(1.0));
        prop_assert_eq!(id.b0[(0, 1)], 0.0);
        prop_assert!(id.b0[(0, 0)] > 0.0 && id.b0[(1, 1)] > 0.0);
        let coefs = vec![DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.2, 0.3])];
        let phis = irf_matrices(&coefs, &id.b0, 5);
        prop_assert_eq!(&phis[0], &id.b0);
    }
}
