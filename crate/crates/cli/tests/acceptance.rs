//! Acceptance suite. Runs without the libtest harness so every criterion
//! prints a PASS/FAIL line; exits non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use fxres_cli::{Pipeline, RunConfig};
use fxres_core::clustering::kmeans;
use fxres_core::diagnostics::{dh_granger, llc_unit_root_at};
use fxres_core::fgls::FglsOptions;
use fxres_core::montecarlo::interaction_monte_carlo;
use fxres_core::resilience::{
    column_covariance, contributions, pca_first_component, resilience, supporting_factor_count, threshold, total_effect,
    ThresholdDirection, ThresholdQuery,
};
use fxres_core::rng::{rng_from, sub_rng};
use fxres_core::spvar::{
    companion_matrix, estimate_varx, irf_matrices, pedroni_decompose, uhlig_sign_irf, Sign, SignOptions, SignSpec,
    VarxOptions,
};
use fxres_core::synth::{ar1_panel, factor_panel, granger_panel, random_stable_var, simulate_var, FactorPanelSpec, InteractionDgp};
use fxres_core::Execution;

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn within(elapsed: Duration, limit: Duration, out: Outcome) -> Outcome {
    let ok = elapsed <= limit;
    let detail = format!("{}; {:.2}s (limit {:.0}s)", out.detail, elapsed.as_secs_f64(), limit.as_secs_f64());
    check(out.pass && ok, detail)
}

fn supporting_counts() -> Outcome {
    use ThresholdDirection::{GreaterThan as Gt, LessThan as Lt};
    let thresholds = [38.0, 2.0, 5.0, 3.5, 0.2, 0.8];
    let directions = [Gt, Gt, Gt, Lt, Gt, Gt];
    let cases = [
        ("HK", [81.6, -0.3, 9.7, 1.5, 0.6, 0.8], 5),
        ("SG", [55.3, 1.3, 1.8, 1.3, 0.9, 0.8], 4),
        ("GB", [9.8, 0.1, -1.5, 0.6, -0.7, 0.9], 2),
        ("BR", [5.6, 0.1, 0.2, 6.4, -1.9, 0.6], 0),
    ];
    let mut pass = true;
    let mut got = Vec::new();
    for (c, values, expected) in cases {
        let n = supporting_factor_count(&values, &thresholds, &directions);
        pass &= n == expected;
        got.push(format!("{c}={n}"));
    }
    check(pass, got.join(" "))
}

fn threshold_arithmetic() -> Outcome {
    let v = DMatrix::identity(2, 2) * 1e-4;
    let mut pass = true;
    let mut got = Vec::new();
    for (g1, g2, printed) in [(0.15, -0.21, 0.5), (0.22, -0.19, 0.9)] {
        let (t, dir) = threshold(&ThresholdQuery::new(g1, g2, v.clone(), 0.05)).expect("nonzero gamma2");
        pass &= (t - printed).abs() <= 0.05 && dir == ThresholdDirection::GreaterThan;
        got.push(format!("{t:.3} vs {printed}"));
    }
    pass &= (threshold(&ThresholdQuery::new(0.15, -0.21, v, 0.05)).unwrap().0 - 0.476).abs() < 5e-4;
    check(pass, got.join(", "))
}

fn total_effect_consistency() -> Outcome {
    let e = total_effect(0.22, -0.19, 1.04);
    let score = resilience(0.22, -0.19, 1.04);
    let pass = (e - 0.022).abs() <= 0.01 && (0.02 - 0.01..=0.03 + 0.01).contains(&e) && score == e;
    check(pass, format!("total effect {e:.4}"))
}

fn fgls_monte_carlo() -> Outcome {
    let dgp = InteractionDgp { sd_low: 0.1, sd_high: 0.2, shock_sd: 1.0, factor_sd: 0.5, ..InteractionDgp::standard(20, 72) };
    let mc = interaction_monte_carlo(&dgp, 200, 20240601, 0.0, 0.5, FglsOptions::default(), Execution::Parallel);
    let d1 = (mc.mean_gamma1 - dgp.gamma1).abs();
    let d2 = (mc.mean_gamma2 - dgp.gamma2).abs();
    let ratio = mc.mean_threshold_se / mc.sd_threshold;
    let means_ok = d1 <= 0.02 && d2 <= 0.02 && mc.failures == 0;
    let se_ok = (ratio - 1.0).abs() <= 0.10;
    check(
        means_ok && se_ok,
        format!(
            "mean g1 {:.4} (|d| {d1:.4}) g2 {:.4} (|d| {d2:.4}) [{}]; threshold SE/SD {ratio:.3} [{}]; {} failed fits",
            mc.mean_gamma1,
            mc.mean_gamma2,
            if means_ok { "ok" } else { "off" },
            if se_ok { "ok" } else { "off" },
            mc.failures
        ),
    )
}

fn spvar_correctness() -> Outcome {
    const ORDER: [&str; 2] = ["VolCF", "VolFX"];
    let mut rng = rng_from(77);
    let mut worst_chol = 0.0_f64;
    let mut worst_irf = 0.0_f64;
    for _ in 0..20 {
        let coefs = random_stable_var(2, 4, 0.9, &mut rng);
        let b0 = DMatrix::from_row_slice(2, 2, &[rng.random_range(0.5..1.5), 0.0, rng.random_range(-0.5..0.5), rng.random_range(0.5..1.5)]);
        let phis = irf_matrices(&coefs, &b0, 24);
        let f = companion_matrix(&coefs);
        let mut fp = DMatrix::identity(8, 8);
        for phi in &phis {
            worst_irf = worst_irf.max((phi - fp.view((0, 0), (2, 2)) * &b0).amax());
            fp = &f * fp;
        }
    }

    let loadings: Vec<f64> = (0..30).map(|i| [0.3, 0.8, 1.2][i % 3]).collect();
    let spec = FactorPanelSpec {
        coefficients: vec![DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.2, 0.3])],
        impact: DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.5, 1.0]),
        loadings,
        t: 2000,
        burn: 100,
        exog_coefficients: None,
    };
    let fp = factor_panel(&spec, &mut rng_from(21)).expect("stable spec");
    let d = pedroni_decompose(&fp.members, VarxOptions::default(), &ORDER, Execution::Parallel).expect("decomposition");
    let recon = |b0: &DMatrix<f64>, sigma: &DMatrix<f64>| (b0 * b0.transpose() - sigma).amax();
    worst_chol = worst_chol.max(recon(&d.common_id.b0, &d.common_model.sigma));
    let mut worst_loading = 0.0_f64;
    let mut worst_corr = 0.0_f64;
    for (i, c) in d.countries.iter().enumerate() {
        worst_chol = worst_chol.max(recon(&c.id.b0, &c.model.sigma));
        let truth = fp.population_loading(i);
        for k in 0..2 {
            worst_loading = worst_loading.max((c.loadings[k] - truth).abs());
            worst_corr = worst_corr.max(c.common_idio_correlation[k].abs());
        }
    }
    let pass = worst_chol < 1e-10 && worst_irf < 1e-10 && worst_loading <= 0.1 && worst_corr <= 0.05;
    check(
        pass,
        format!("chol {worst_chol:.1e}, irf {worst_irf:.1e}, loading |d| {worst_loading:.3}, corr {worst_corr:.3}"),
    )
}

fn sign_restrictions() -> Outcome {
    let coefs = vec![DMatrix::from_row_slice(2, 2, &[0.4, 0.1, 0.2, 0.3])];
    let impact = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.6, 0.8]);
    let y = simulate_var(&coefs, &impact, 600, 100, &mut rng_from(3));
    let model = estimate_varx("S", &y, None, VarxOptions { lags: 1, demean: true }).expect("fit");
    let mut pass = true;
    let mut parts = Vec::new();
    for max_h in [0, 2] {
        let spec = SignSpec { max_horizon: max_h, ..SignSpec::capital_flow_fx() };
        let opts = SignOptions { draws: 1000, seed: 11, horizon: 8, posterior: false, exec: Execution::Parallel };
        let res = uhlig_sign_irf(&model, &spec, &opts).expect("accepted draws");
        let f = companion_matrix(&model.coefficients);
        let n = 2 * model.lags;
        let mut bad = 0;
        for a in &res.accepted {
            let mut fp = DMatrix::identity(n, n);
            for h in 0..=max_h {
                let phi = fp.view((0, 0), (2, 2)) * &a.impact;
                let ok = spec.restrictions.iter().all(|r| match r.sign {
                    Sign::Positive => phi[(r.response, r.shock)] > 0.0,
                    Sign::Negative => phi[(r.response, r.shock)] < 0.0,
                });
                if !ok || (&phi - &a.irf[h]).amax() > 1e-10 {
                    bad += 1;
                    break;
                }
                fp = &f * fp;
            }
        }
        pass &= bad == 0 && res.attempted >= 1000 && !res.accepted.is_empty();
        parts.push(format!("H<={max_h}: {}/{} accepted, {bad} violating", res.accepted.len(), res.attempted));
    }
    check(pass, parts.join("; "))
}

fn bipartition_optimum(points: &[Vec<f64>]) -> f64 {
    let n = points.len();
    let d = points[0].len();
    let cost = |members: &[&Vec<f64>]| -> f64 {
        let m = members.len() as f64;
        let c: Vec<f64> = (0..d).map(|j| members.iter().map(|p| p[j]).sum::<f64>() / m).collect();
        members.iter().map(|p| p.iter().zip(&c).map(|(x, y)| (x - y) * (x - y)).sum::<f64>()).sum()
    };
    let mut best = f64::INFINITY;
    for mask in 1..(1u32 << (n - 1)) {
        let (a, b): (Vec<_>, Vec<_>) = points.iter().enumerate().partition(|(i, _)| mask >> i & 1 == 1);
        let a: Vec<&Vec<f64>> = a.into_iter().map(|(_, p)| p).collect();
        let b: Vec<&Vec<f64>> = b.into_iter().map(|(_, p)| p).collect();
        best = best.min(cost(&a) + cost(&b));
    }
    best
}

fn kmeans_optimality() -> Outcome {
    let mut worst = 0.0_f64;
    for inst in 0..100u64 {
        let mut r = sub_rng(2024, &["kmeans-instance".into(), inst.into()]);
        let n = r.random_range(3..=10);
        let d = r.random_range(1..=4);
        let points: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| r.random_range(-2.0..2.0)).collect()).collect();
        let fit = kmeans(&points, 2, inst, 50, Execution::Sequential).expect("k-means");
        let opt = bipartition_optimum(&points);
        worst = worst.max((fit.wcss - opt).abs());
    }
    check(worst <= 1e-9, format!("max |WCSS - optimum| {worst:.1e} over 100 instances"))
}

fn refs(v: &[Vec<f64>]) -> Vec<&[f64]> {
    v.iter().map(Vec::as_slice).collect()
}

fn size_and_power() -> Outcome {
    let rate = |sims: usize, f: &(dyn Fn(usize) -> bool + Sync)| {
        Execution::Parallel.map(sims, f).into_iter().filter(|&b| b).count() as f64 / sims as f64
    };
    let llc = |rho: f64, tag: &'static str| {
        move |s: usize| {
            let p = ar1_panel(20, 500, rho, &mut sub_rng(5, &[tag.into(), s.into()]));
            llc_unit_root_at(&refs(&p), 1).expect("llc").reject_5pct
        }
    };
    let dh = |beta: f64, tag: &'static str| {
        move |s: usize| {
            let (x, y) = granger_panel(20, 500, beta, &mut sub_rng(6, &[tag.into(), s.into()]));
            dh_granger(&refs(&x), &refs(&y), 1).expect("dh").test.reject_5pct
        }
    };
    let llc_power = rate(200, &llc(0.5, "llc-ar"));
    let llc_size = rate(200, &llc(1.0, "llc-rw"));
    let dh_size = rate(500, &dh(0.0, "dh-null"));
    let dh_power = rate(500, &dh(0.5, "dh-alt"));
    let pass = llc_power >= 0.95 && llc_size <= 0.10 && (0.02..=0.10).contains(&dh_size) && dh_power >= 0.95;
    check(
        pass,
        format!("LLC reject AR(0.5) {llc_power:.3}, RW {llc_size:.3}; DH size {dh_size:.3}, power {dh_power:.3}"),
    )
}

fn pca() -> Outcome {
    let mut r = rng_from(99);
    let mix = DMatrix::from_fn(6, 6, |_, _| r.random_range(-1.0..1.0));
    let x = DMatrix::from_fn(400, 6, |_, _| r.random_range(-1.0..1.0)) * mix;
    let names = ["a", "b", "c", "d", "e", "f"];
    let p = pca_first_component(&x, &names).expect("pca");

    // power-iteration oracle on the covariance
    let cov = column_covariance(&x);
    let mut v = DVector::from_element(6, 1.0).normalize();
    for _ in 0..20_000 {
        v = (&cov * &v).normalize();
    }
    if v.sum() < 0.0 {
        v = -v;
    }
    let lambda = (v.transpose() * &cov * &v)[(0, 0)];
    let diff = p.loadings.iter().zip(v.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);

    let w = DVector::from_column_slice(&p.loadings);
    let var_pc = (w.transpose() * &cov * &w)[(0, 0)];
    let mut beaten = 0;
    for _ in 0..1000 {
        let u = DVector::from_fn(6, |_, _| r.random_range(-1.0..1.0)).normalize();
        if (u.transpose() * &cov * &u)[(0, 0)] > var_pc + 1e-12 {
            beaten += 1;
        }
    }

    let mut worst_sum = 0.0_f64;
    for _ in 0..100 {
        let vals: Vec<f64> = (0..6).map(|_| r.random_range(0.1..1.0)).collect();
        let loads: Vec<f64> = p.loadings.iter().map(|l| l.abs()).collect();
        let s: f64 = contributions(&loads, &vals).expect("positive composite").iter().sum();
        worst_sum = worst_sum.max((s - 100.0).abs());
    }
    let pass = diff < 1e-8 && (p.eigenvalue - lambda).abs() < 1e-8 && beaten == 0 && worst_sum < 1e-10;
    check(
        pass,
        format!("loading |d| {diff:.1e}; {beaten}/1000 random directions beat PC1; share-sum error {worst_sum:.1e}"),
    )
}

fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).expect("readable dir") {
            let p = e.expect("entry").path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&p).expect("readable file"));
            }
        }
    }
    out
}

fn determinism() -> Outcome {
    let run = |exec: Execution| {
        let dir = tempfile::tempdir().expect("tempdir");
        let cfg = RunConfig { seed: Some(42), output_dir: dir.path().to_path_buf(), execution: exec, ..RunConfig::default() };
        let mut p = Pipeline::open(cfg).expect("open");
        p.run(fxres_cli::Stage::Synth).expect("synth");
        p.run_all().expect("pipeline");
        let t = tree(dir.path());
        (dir, t)
    };
    let (_a, first) = run(Execution::Parallel);
    let (_b, second) = run(Execution::Parallel);
    let (_c, third) = run(Execution::Sequential);
    let differing: Vec<&String> =
        first.keys().chain(second.keys()).filter(|k| first.get(*k) != second.get(*k) || first.get(*k) != third.get(*k)).collect();
    check(
        differing.is_empty() && first.len() > 20,
        format!("{} files compared across 3 runs, {} differ", first.len(), differing.len()),
    )
}

fn main() {
    let criteria: Vec<(&str, Duration, fn() -> Outcome)> = vec![
        ("supporting-factor counts", Duration::from_secs(1), supporting_counts),
        ("threshold arithmetic", Duration::from_secs(1), threshold_arithmetic),
        ("total-effect consistency", Duration::from_secs(1), total_effect_consistency),
        ("FGLS Monte Carlo recovery", Duration::from_secs(120), fgls_monte_carlo),
        ("SPVAR correctness", Duration::from_secs(60), spvar_correctness),
        ("sign restrictions", Duration::from_secs(30), sign_restrictions),
        ("k-means optimality", Duration::from_secs(30), kmeans_optimality),
        ("test size and power", Duration::from_secs(600), size_and_power),
        ("PCA", Duration::from_secs(60), pca),
        ("determinism", Duration::from_secs(600), determinism),
    ];
    let mut failed = 0;
    for (i, (name, limit, f)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let out = f();
        let out = within(start.elapsed(), limit, out);
        if !out.pass {
            failed += 1;
        }
        println!("{} {:>2} {name}: {}", if out.pass { "PASS" } else { "FAIL" }, i + 1, out.detail);
    }
    println!("acceptance: {} of 10 criteria passed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
