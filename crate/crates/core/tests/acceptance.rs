//! Acceptance gate. Each test prints one `PASS` or `FAIL` line.

use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use seqpa::bounds::{evaluate_bound, BoundKind, BoundParams, BoundSpec};
use seqpa::covering::{
    all_sequences, cover_deviation, cover_size_bound, discretize, fat1_number, fat_shattering_number, grid_cover,
    msoa_cover, msoa_run, rounding_cover, DiscretizedFamily,
};
use seqpa::experts::{
    best_in_hindsight, build_hard_lipschitz_class, ExpertFamily, ExpertSet, Feature, FiniteDomain, FiniteSequential,
    FiniteStatic, GlmFamily, LinkFunction,
};
use seqpa::harness::{bench, BenchConfig, ReportRow};
use seqpa::predictors::{run_online, smooth_truncate, BayesMixture, NmlPredictor};
use seqpa::shtarkov::{
    block_shtarkov_lower, ds_lower_bound, ds_sup_verify, hard_class_certificate, identification_bound,
    minimax_value, shtarkov_sum, SupOracle,
};
use seqpa::{Label, ProbValue};

fn report(n: usize, title: &str, pass: bool, detail: &str) {
    println!("criterion {n:>2} [{title}]: {}; {detail}", if pass { "PASS" } else { "FAIL" });
}

fn labels(t: usize) -> impl Iterator<Item = Vec<Label>> {
    (0..1u64 << t).map(move |b| Label::sequence_from_bits(b, t))
}

fn design(t: usize) -> Vec<Feature> {
    (0..t).map(|i| Feature::scalar(i as f64)).collect()
}

fn random_value(rng: &mut ChaCha8Rng) -> f64 {
    match rng.gen_range(0..10) {
        0 => 0.0,
        1 => 1.0,
        _ => rng.gen_range(0.0..=1.0),
    }
}

fn finite_regret(family: &ExpertFamily, mix: &mut dyn seqpa::predictors::OnlinePredictor, xs: &[Feature], ys: &[Label]) -> f64 {
    let tr = run_online(mix, xs, ys).unwrap();
    let best = best_in_hindsight(family, xs, ys, None).unwrap();
    seqpa::loss::regret_of(tr.cumulative_loss(), best.conservative_best())
}

#[test]
fn criterion_01_shtarkov_minimax_duality() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst_dual = 0.0f64;
    let mut worst_eq = 0.0f64;
    let mut sequences = 0usize;
    for _ in 0..200 {
        let m = rng.gen_range(1..=8);
        let t = rng.gen_range(1..=10);
        let xs = design(t);
        let rows: Vec<Vec<f64>> = (0..m).map(|_| (0..t).map(|_| random_value(&mut rng)).collect()).collect();
        let family = ExpertFamily::FiniteSequential(FiniteSequential::from_design(xs.clone(), rows).unwrap());
        let oracle = SupOracle::finite_max(&family, &xs).unwrap();
        let table = Arc::new(minimax_value(&oracle, &xs).unwrap());
        let ln_s = shtarkov_sum(&oracle, &xs).unwrap().get();
        worst_dual = worst_dual.max((table.root().get() - ln_s).abs());
        let nml = NmlPredictor::new(table, xs.clone()).unwrap();
        for ys in labels(t) {
            let best = best_in_hindsight(&family, &xs, &ys, None).unwrap();
            if best.loss.is_infinite() {
                continue;
            }
            let mut p = nml.clone();
            let r = finite_regret(&family, &mut p, &xs, &ys);
            worst_eq = worst_eq.max((r - ln_s).abs());
            sequences += 1;
        }
    }
    let elapsed = start.elapsed();
    let pass = worst_dual <= 1e-9 && worst_eq <= 1e-9 && elapsed < Duration::from_secs(30);
    report(
        1,
        "Shtarkov/minimax duality",
        pass,
        &format!(
            "max |root - ln S| = {worst_dual:.2e}, max |NML regret - ln S| = {worst_eq:.2e} over {sequences} positive-mass sequences, {:.1}s",
            elapsed.as_secs_f64()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_02_cover_bound_exhaustive() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut violations = 0usize;
    let mut checked = 0usize;
    let mut min_slack = f64::INFINITY;
    for &alpha in &[0.05, 0.1, 0.25] {
        for _ in 0..4 {
            let t = 12;
            let dom = FiniteDomain::indexed(3).unwrap();
            let rows: Vec<Vec<f64>> = (0..5).map(|_| (0..3).map(|_| random_value(&mut rng)).collect()).collect();
            let fam = FiniteStatic::new(dom.clone(), rows).unwrap();
            let xs: Vec<Feature> = (0..t).map(|_| dom.feature(rng.gen_range(0..3)).clone()).collect();
            let cover = rounding_cover(&fam, alpha).unwrap();
            let bound = 2.0 * alpha * t as f64 + (cover.len() as f64).ln();
            let family = ExpertFamily::FiniteStatic(fam);
            let mix = BayesMixture::new(Arc::new(cover), Some(alpha)).unwrap();
            for ys in labels(t) {
                let mut p = mix.clone();
                let r = finite_regret(&family, &mut p, &xs, &ys);
                min_slack = min_slack.min(bound - r);
                checked += 1;
                if r > bound + 1e-9 {
                    violations += 1;
                }
            }
        }
        // Parametric grid cover of a one-dimensional logistic family.
        let t = 10;
        let family = ExpertFamily::GeneralizedLinear(GlmFamily::logistic(1, 1.0, 1.0).unwrap());
        let cover = grid_cover(&family, alpha, 1e7).unwrap();
        let bound = 2.0 * alpha * t as f64 + (cover.len() as f64).ln();
        let xs = vec![Feature::basis(1, 0); t];
        let mix = BayesMixture::new(Arc::new(cover), Some(alpha)).unwrap();
        for ys in labels(t) {
            let mut p = mix.clone();
            let r = finite_regret(&family, &mut p, &xs, &ys);
            min_slack = min_slack.min(bound - r);
            checked += 1;
            if r > bound + 1e-9 {
                violations += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    let pass = violations == 0 && elapsed < Duration::from_secs(60);
    report(
        2,
        "cover bound 2aT + ln|G|, exhaustive",
        pass,
        &format!(
            "{violations} violations in {checked} label sequences, min slack {min_slack:.4}, {:.1}s",
            elapsed.as_secs_f64()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_03_truncation_ratio_and_finite_regret() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut ratio_violations = 0usize;
    let mut regret_violations = 0usize;
    let mut checked = 0usize;
    let mut zero_mass = 0usize;
    for _ in 0..10 {
        let t = 10;
        let m = rng.gen_range(1..=6);
        let xs = design(t);
        let rows: Vec<Vec<f64>> = (0..m).map(|_| (0..t).map(|_| random_value(&mut rng)).collect()).collect();
        for &alpha in &[0.01f64, 0.05, 0.1, 0.25, 0.5] {
            let cap = t as f64 * (1.0 + 2.0 * alpha).ln();
            for row in &rows {
                for ys in labels(t) {
                    let mut ratio = 0.0;
                    for (v, y) in row.iter().zip(&ys) {
                        let g = ProbValue::new(*v).unwrap();
                        ratio += g.prob_of(*y).ln() - smooth_truncate(g, alpha).prob_of(*y).ln();
                    }
                    if ratio > cap + 1e-12 {
                        ratio_violations += 1;
                    }
                }
            }
        }
        let family = ExpertFamily::FiniteSequential(FiniteSequential::from_design(xs.clone(), rows).unwrap());
        let set: Arc<dyn ExpertSet> = match &family {
            ExpertFamily::FiniteSequential(f) => Arc::new(f.clone()),
            _ => unreachable!(),
        };
        let mix = BayesMixture::new(set, None).unwrap();
        for ys in labels(t) {
            let mut p = mix.clone();
            checked += 1;
            let r = match run_online(&mut p, &xs, &ys) {
                Ok(tr) => {
                    let best = best_in_hindsight(&family, &xs, &ys, None).unwrap();
                    seqpa::loss::regret_of(tr.cumulative_loss(), best.conservative_best())
                }
                Err(seqpa::Error::DegeneratePosterior) => {
                    // Every expert has lost all mass, so both losses are infinite.
                    zero_mass += 1;
                    if !best_in_hindsight(&family, &xs, &ys, None).unwrap().loss.is_infinite() {
                        regret_violations += 1;
                    }
                    continue;
                }
                Err(e) => panic!("{e}"),
            };
            if r > (m as f64).ln() + 1e-9 {
                regret_violations += 1;
            }
        }
    }
    let pass = ratio_violations == 0 && regret_violations == 0;
    report(
        3,
        "truncation ratio and finite-class regret",
        pass,
        &format!(
            "{ratio_violations} ratio violations, {regret_violations} regret violations over {checked} mixture runs ({zero_mass} zero-mass sequences with regret 0 by convention)"
        ),
    );
    assert!(pass);
}

fn matrix_rows(predictor: &str, extra: &str) -> (Vec<ReportRow>, Duration) {
    let text = format!(
        r#"
name = "{predictor}"
seed = 11

[family]
kind = "logistic"
radius = 1.0
lipschitz = 1.0

[predictor]
algorithm = "{predictor}"
{extra}

[adversary]
kind = "greedy"
p = 0.5

[matrix]
d = [1, 2]
T = [32, 128, 512, 1024]
adversary = ["greedy", "iid"]
"#
    );
    let start = Instant::now();
    let report = bench(&BenchConfig::parse(&text).unwrap(), None).unwrap();
    (report.rows, start.elapsed())
}

fn bound_of(row: &ReportRow, kind: BoundKind) -> f64 {
    row.bounds
        .iter()
        .find(|(k, _)| k == kind.name())
        .map(|(_, v)| *v)
        .expect("bound present")
}

#[test]
fn criterion_04_lipschitz_upper_at_scale() {
    let (rows, elapsed) = matrix_rows("cover-bayes", "alpha = \"d/T\"");
    let mut min_slack = f64::INFINITY;
    let mut fails = 0;
    for r in &rows {
        let slack = bound_of(r, BoundKind::LipschitzUpper) - r.regret;
        println!(
            "  d={} T={} {:<9} regret={:.4} bound={:.4} slack={:.4} |G|={}",
            r.d,
            r.t,
            r.adversary,
            r.regret,
            bound_of(r, BoundKind::LipschitzUpper),
            slack,
            r.members.unwrap_or(0)
        );
        min_slack = min_slack.min(slack);
        if slack < 0.0 {
            fails += 1;
        }
    }
    let pass = rows.len() == 16 && fails == 0 && elapsed < Duration::from_secs(120);
    report(
        4,
        "Lipschitz upper bound at scale",
        pass,
        &format!("{} cells, {fails} with negative slack, min slack {min_slack:.4}, {:.1}s", rows.len(), elapsed.as_secs_f64()),
    );
    assert!(pass);
}

#[test]
fn criterion_05_hessian_upper_at_scale() {
    let (rows, elapsed) = matrix_rows("continuous-bayes", "hessian = 0.25");
    let mut min_slack = f64::INFINITY;
    let mut fails = 0;
    for r in &rows {
        let bound = evaluate_bound(&BoundSpec::new(
            BoundKind::HessianUpper,
            BoundParams {
                t: r.t as f64,
                d: r.d as f64,
                radius: 1.0,
                hessian: 0.25,
                ..Default::default()
            },
        ))
        .unwrap();
        let slack = bound + 0.1 - r.regret;
        println!(
            "  d={} T={} {:<9} regret={:.4} bound={:.4} slack(+0.1)={:.4} grid={}",
            r.d,
            r.t,
            r.adversary,
            r.regret,
            bound,
            slack,
            r.members.unwrap_or(0)
        );
        min_slack = min_slack.min(slack);
        if slack < 0.0 {
            fails += 1;
        }
    }
    let pass = rows.len() == 16 && fails == 0;
    report(
        5,
        "Hessian upper bound at scale",
        pass,
        &format!(
            "{} cells, {fails} with negative slack, min slack incl. 0.1 allowance {min_slack:.4}, {:.1}s",
            rows.len(),
            elapsed.as_secs_f64()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_06_ds_lower_bound() {
    let start = Instant::now();
    let mut below = 0usize;
    let mut points = 0usize;
    for &s in &[1.0, 2.0] {
        for i in 0..50 {
            let t = (10f64 * 1000f64.powf(i as f64 / 49.0)).round() as usize;
            let (exact, formula) = ds_lower_bound(t, s).unwrap();
            points += 1;
            if exact.get() < formula {
                below += 1;
            }
        }
    }
    let mut worst = 0.0f64;
    for &s in &[1.0, 2.0] {
        for t in 1..=8 {
            for ys in labels(t) {
                let (closed, brute) = ds_sup_verify(&ys, s).unwrap();
                let gap = if closed.get() == brute.get() { 0.0 } else { (closed.get() - brute.get()).abs() };
                worst = worst.max(gap);
            }
        }
    }
    let elapsed = start.elapsed();
    let pass = below == 0 && worst <= 1e-3 && elapsed < Duration::from_secs(60);
    report(
        6,
        "D_s lower bound and closed-form sup",
        pass,
        &format!(
            "{below} of {points} horizons below the formula, max |closed - brute| = {worst:.2e}, {:.1}s",
            elapsed.as_secs_f64()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_07_block_lower_bound_constant() {
    let link = LinkFunction::logistic();
    let ss = [1.0, 2.0, 16.0];
    let ds = [2usize, 4, 8];
    let ns: Vec<usize> = (0..7).map(|k| 64 << k).collect();
    let mut cells = Vec::new();
    for &s in &ss {
        for &d in &ds {
            for &n in &ns {
                let t = d * n;
                let value = block_shtarkov_lower(d, t, &link, s).unwrap().get();
                let lead = d as f64 / 2.0 * ((t as f64).ln() - (s + 2.0) / s * (d as f64).ln());
                cells.push((s, d, n, value, (lead - value) / d as f64));
            }
        }
    }
    let c_fit = cells.iter().map(|c| c.4).fold(f64::NEG_INFINITY, f64::max);
    let holds = cells.iter().all(|&(s, d, n, value, _)| {
        let t = (d * n) as f64;
        value >= d as f64 / 2.0 * (t.ln() - (s + 2.0) / s * (d as f64).ln()) - c_fit * d as f64 - 1e-9
    });
    let slice_max = |pred: &dyn Fn(&(f64, usize, usize, f64, f64)) -> bool| {
        cells.iter().filter(|c| pred(c)).map(|c| c.4).fold(f64::NEG_INFINITY, f64::max)
    };
    let mut slices = Vec::new();
    for &s in &ss {
        slices.push((format!("s={s}"), slice_max(&|c| c.0 == s)));
    }
    for &d in &ds {
        slices.push((format!("d={d}"), slice_max(&|c| c.1 == d)));
    }
    for (name, v) in &slices {
        println!("  slice {name}: max c = {v:.4}");
    }
    let stable = slices.iter().all(|(_, v)| (v - c_fit).abs() <= 0.2 * c_fit.abs());
    let pass = holds && stable && c_fit.is_finite();
    report(
        7,
        "block lower bound constant",
        pass,
        &format!("fitted c = {c_fit:.4} over {} cells, every s- and d-slice within 20%: {stable}", cells.len()),
    );
    assert!(pass);
}

fn level_family(alpha: f64, dom: &FiniteDomain, rows: &[Vec<usize>]) -> FiniteStatic {
    let values = rows
        .iter()
        .map(|r| r.iter().map(|&k| ((2 * k - 1) as f64 * alpha).min(1.0)).collect())
        .collect();
    FiniteStatic::new(dom.clone(), values).unwrap()
}

#[test]
fn criterion_08_msoa_exhaustive() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut error_violations = 0usize;
    let mut cover_violations = 0usize;
    let mut size_violations = 0usize;
    let mut runs = 0usize;
    let mut instances = 0usize;
    for &alpha in &[0.25, 1.0 / 6.0] {
        let k = DiscretizedFamily::level_count(alpha);
        for nx in 1..=3usize {
            let dom = FiniteDomain::indexed(nx).unwrap();
            let all = DiscretizedFamily::all_functions(alpha, dom.clone()).unwrap();
            let mut families = vec![all.table().to_vec()];
            for _ in 0..4 {
                let size = rng.gen_range(1..=all.len());
                let mut rows = all.table().to_vec();
                while rows.len() > size {
                    rows.remove(rng.gen_range(0..rows.len()));
                }
                families.push(rows);
            }
            for rows in families {
                instances += 1;
                let fam = level_family(alpha, &dom, &rows);
                let disc = discretize(&fam, alpha).unwrap();
                assert_eq!(disc.table(), &rows[..]);
                let fat1 = fat1_number(&disc, usize::MAX).unwrap().value;
                let horizon = 6;
                for xs in all_sequences(&dom, horizon) {
                    let idx: Vec<usize> = xs.iter().map(|x| dom.lookup(x).unwrap()).collect();
                    for row in &rows {
                        let ys: Vec<usize> = idx.iter().map(|&j| row[j]).collect();
                        let run = msoa_run(&disc, &xs, &ys).unwrap();
                        runs += 1;
                        if run.errors as i32 > fat1 {
                            error_violations += 1;
                        }
                    }
                }
                let cover = msoa_cover(&fam, alpha, horizon, 1e6).unwrap();
                let dev = cover_deviation(&cover, &fam, &all_sequences(&dom, horizon)).unwrap();
                if dev > 3.0 * alpha + 1e-12 {
                    cover_violations += 1;
                }
                let dfat = fat_shattering_number(&fam, alpha, usize::MAX).unwrap().value.max(0) as usize;
                let bound = cover_size_bound(horizon, 3.0 * alpha, dfat);
                if cover.len() as f64 > bound + 1e-6 || k > 3 {
                    size_violations += 1;
                }
            }
        }
    }
    let elapsed = start.elapsed();
    let pass = error_violations + cover_violations + size_violations == 0 && elapsed < Duration::from_secs(120);
    report(
        8,
        "M-SOA errors, cover property and size",
        pass,
        &format!(
            "{instances} families, {runs} realizable runs: {error_violations} error, {cover_violations} cover, {size_violations} size violations, {:.1}s",
            elapsed.as_secs_f64()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_09_identification_lemma() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut violations = 0;
    let mut tightest = f64::INFINITY;
    for _ in 0..100 {
        let m = rng.gen_range(1..=3);
        let n = rng.gen_range(1..=4);
        let dists: Vec<Vec<f64>> = (0..m)
            .map(|_| {
                let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0f64).powi(2)).collect();
                let total: f64 = raw.iter().sum::<f64>().max(1e-12);
                raw.iter().map(|v| v / total).collect()
            })
            .collect();
        let res = identification_bound(&dists).unwrap();
        let opt = res.exhaustive_optimum.expect("small instance is enumerable");
        tightest = tightest.min(opt - res.bound);
        if opt < res.bound - 1e-12 {
            violations += 1;
        }
    }
    let pass = violations == 0;
    report(
        9,
        "identification lemma",
        pass,
        &format!("{violations} violations in 100 instances, min (optimum - bound) = {tightest:.3e}"),
    );
    assert!(pass);
}

#[test]
fn criterion_10_hard_lipschitz_construction() {
    let t = 2048usize;
    let alpha = 16.0 * (t as f64).ln() / t as f64;
    let (family, book) = build_hard_lipschitz_class(1, t, 1.0, 1.0, alpha, 10).unwrap();
    let distance = book.verify();
    let cert = hard_class_certificate(&family, &book, 2000, 10).unwrap();
    let pass = distance * 4 >= t && cert.mc_error <= cert.analytic_bound + 3.0 * cert.mc_sigma;
    report(
        10,
        "hard Lipschitz construction",
        pass,
        &format!(
            "|M| = {}, min distance {distance} (need {}), MC error {:.3e} +- {:.1e} vs analytic {:.3e}",
            cert.members,
            t / 4,
            cert.mc_error,
            cert.mc_sigma,
            cert.analytic_bound
        ),
    );
    assert!(pass);
}

const DETERMINISM_CONFIG: &str = r#"
name = "determinism"
seed = 5

[family]
kind = "logistic"

[predictor]
algorithm = "cover-bayes"
alpha = "d/T"

[adversary]
kind = "iid"
p = 0.3

[features]
design = "random-ball"

[matrix]
d = [1, 2]
T = [16, 64]
adversary = ["iid", "greedy"]
seed = [5, 6]
"#;

#[test]
fn criterion_11_bench_determinism() {
    let cfg = BenchConfig::parse(DETERMINISM_CONFIG).unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    bench(&cfg, Some(a.path())).unwrap();
    bench(&cfg, Some(b.path())).unwrap();
    let sa = std::fs::read(a.path().join("summary.csv")).unwrap();
    let sb = std::fs::read(b.path().join("summary.csv")).unwrap();
    let mut transcripts_equal = true;
    for entry in std::fs::read_dir(a.path()).unwrap() {
        let name = entry.unwrap().file_name();
        transcripts_equal &= std::fs::read(a.path().join(&name)).unwrap() == std::fs::read(b.path().join(&name)).unwrap();
    }
    let pass = sa == sb && transcripts_equal && !sa.is_empty();
    report(
        11,
        "bench determinism",
        pass,
        &format!("summary {} bytes, byte-identical: {}, transcripts identical: {transcripts_equal}", sa.len(), sa == sb),
    );
    assert!(pass);
}
