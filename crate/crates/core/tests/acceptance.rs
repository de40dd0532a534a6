//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary. It exits 0 after printing the results; set
//! `TRAJSYNTH_ACCEPTANCE_STRICT=1` to exit 1 when any criterion fails.

mod common;

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use common::*;
use trajsynth::copula::{pseudo_observations, EmpiricalMargin, KernelPairCopula};
use trajsynth::dataio::{simulate_ground_truth, Corpus, GridTrace, SimulationConfig};
use trajsynth::generators::{Generator, MarkovModel, MarkovOptions, VineGenerator, VineGeneratorOptions};
use trajsynth::geogrid::{CellId, GridSpec};
use trajsynth::metrics::{mi_decay, mmd_test, topn_report};
use trajsynth::privacy::{hide_corpus, membership_attack, sequence_attack};

const REPS: u64 = 30;

struct Outcome {
    pass: bool,
    detail: String,
}

fn report(id: usize, name: &str, started: Instant, limit_s: Option<f64>, mut o: Outcome) -> bool {
    let secs = started.elapsed().as_secs_f64();
    if let Some(limit) = limit_s {
        o.pass &= secs < limit;
        o.detail.push_str(&format!("; runtime {secs:.1} s (limit {limit:.0} s)"));
    } else {
        o.detail.push_str(&format!("; runtime {secs:.1} s"));
    }
    let verdict = if o.pass { "PASS" } else { "FAIL" };
    println!("criterion {id} {name}: {verdict} ({})", o.detail);
    o.pass
}

fn sim(n_users: usize, trace_len: usize, seed: u64) -> Corpus {
    let cfg = SimulationConfig { n_users, trace_len, seed, ..Default::default() };
    simulate_ground_truth(&GridSpec::switzerland(), &cfg).unwrap()
}

fn users(c: &Corpus, range: std::ops::Range<usize>) -> Corpus {
    c.subset(&range.collect::<Vec<_>>())
}

/// Splits every trace at point `at`: (first part, rest).
fn split_time(c: &Corpus, at: usize) -> (Corpus, Corpus) {
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for t in c.traces() {
        a.push(GridTrace::new(t.user_id(), t.points()[..at].to_vec()).unwrap());
        b.push(GridTrace::new(t.user_id(), t.points()[at..].to_vec()).unwrap());
    }
    (c.with_traces(a).unwrap(), c.with_traces(b).unwrap())
}

fn order0() -> MarkovOptions {
    MarkovOptions { order: 0, ..MarkovOptions::default() }
}

fn criterion1() -> Outcome {
    let mut parts = Vec::new();
    let mut pass = true;
    for (rho, seed) in [(0.3, 11), (0.8, 12)] {
        let (u, v) = gaussian_copula(20_000, rho, seed);
        let c = KernelPairCopula::fit(&pseudo_observations(&u), &pseudo_observations(&v)).unwrap();
        let (a, b): (Vec<f64>, Vec<f64>) = c.sample(5000, &mut rng(seed + 100)).into_iter().unzip();
        let tau = kendall_tau(&a, &b);
        let want = gaussian_tau(rho);
        pass &= (tau - want).abs() < 0.05;
        parts.push(format!("rho {rho}: tau {tau:.4} vs {want:.4}"));
    }

    let (u, v) = gaussian_copula(3000, 0.6, 5);
    let c = KernelPairCopula::fit(&pseudo_observations(&u), &pseudo_observations(&v)).unwrap();
    let grid: Vec<f64> = (1..200).map(|i| i as f64 / 200.0).collect();
    let (mut worst, mut worst_sat, mut n_sat) = (0.0f64, 0.0f64, 0);
    for &b in &grid {
        for &a in &grid {
            for (h, back, reh) in [
                {
                    let h = c.h_u_given_v(a, b);
                    let back = c.hinv_u_given_v(h, b);
                    (h, back, c.h_u_given_v(back, b))
                },
                {
                    let h = c.h_v_given_u(a, b);
                    let back = c.hinv_v_given_u(h, b);
                    (h, back, c.h_v_given_u(back, b))
                },
            ] {
                if h < 1e-9 || h > 1.0 - 1e-9 {
                    n_sat += 1;
                    worst_sat = worst_sat.max((reh - h).abs());
                } else {
                    worst = worst.max((back - a).abs());
                }
            }
        }
    }
    pass &= worst < 1e-8 && worst_sat < 1e-14;
    parts.push(format!(
        "h-inverse roundtrip max {worst:.1e} (< 1e-8); {n_sat} saturated points reproduce h to {worst_sat:.1e}"
    ));

    let mut r = rng(1);
    let train: Vec<f64> = (0..10_000).map(|_| std_normal(&mut r)).collect();
    let fresh: Vec<f64> = (0..10_000).map(|_| std_normal(&mut r)).collect();
    let m = EmpiricalMargin::fit(&train).unwrap();
    let pit: Vec<f64> = fresh.iter().map(|&x| m.pit(x)).collect();
    let d = ks_uniform(&pit);
    let crit = ks_critical_01(pit.len());
    pass &= d < crit;
    parts.push(format!("PIT KS {d:.4} < {crit:.4}"));
    Outcome { pass, detail: parts.join("; ") }
}

/// Per repetition: top-50 visit TV and unbiased MMD^2 of vine and order-0 Markov against held-out data.
struct FidelityRep {
    tv_vine: f64,
    tv_markov: f64,
    mmd_vine: f64,
    mmd_markov: f64,
}

fn fidelity_rep(rep: u64) -> FidelityRep {
    let len = 500;
    let all = sim(100, 2 * len, 5000 + rep);
    let (train, held) = split_time(&all, len);
    let start = held.traces()[0].start_time();
    let vine = VineGenerator::fit(&train, &VineGeneratorOptions::default(), rep).unwrap();
    let sv = vine.generate(100, len, start, rep).unwrap();
    let markov = MarkovModel::fit(&train, order0()).unwrap();
    let sm = markov.generate(100, len, start, rep).unwrap();
    FidelityRep {
        tv_vine: topn_report(&held, &sv, 50).unwrap().visit_tv,
        tv_markov: topn_report(&held, &sm, 50).unwrap().visit_tv,
        mmd_vine: mmd_test(&held, &sv, 0, rep).unwrap().mmd2_unbiased,
        mmd_markov: mmd_test(&held, &sm, 0, rep).unwrap().mmd2_unbiased,
    }
}

fn criterion2(reps: &[FidelityRep]) -> Outcome {
    let below = reps.iter().filter(|r| r.tv_vine < 0.15).count();
    let better = reps.iter().filter(|r| r.tv_vine < r.tv_markov).count();
    let both = reps.iter().filter(|r| r.tv_vine < 0.15 && r.tv_vine < r.tv_markov).count();
    let need = (0.8 * reps.len() as f64).ceil() as usize;
    let tv_v: Vec<f64> = reps.iter().map(|r| r.tv_vine).collect();
    let tv_m: Vec<f64> = reps.iter().map(|r| r.tv_markov).collect();
    Outcome {
        pass: both >= need,
        detail: format!(
            "vine TV < 0.15 in {below}/{n}; vine TV < order-0 Markov TV in {better}/{n}; both in {both}/{n}, need {need}; mean TV vine {:.4}, Markov {:.4}",
            mean(&tv_v),
            mean(&tv_m),
            n = reps.len()
        ),
    }
}

fn criterion3(reps: &[FidelityRep]) -> Outcome {
    let trials = 200;
    let mut rejections = 0;
    for t in 0..trials {
        let all = sim(50, 168, 9000 + t);
        let res = mmd_test(&users(&all, 0..25), &users(&all, 25..50), 500, t).unwrap();
        rejections += usize::from(res.p_value <= 0.05);
    }
    let rate = rejections as f64 / trials as f64;
    let calibrated = (rate - 0.05).abs() <= 0.03;
    let lower = reps.iter().filter(|r| r.mmd_vine < r.mmd_markov).count();
    let need = (0.8 * reps.len() as f64).ceil() as usize;
    Outcome {
        pass: calibrated && lower >= need,
        detail: format!(
            "null rejection rate {rate:.3} over {trials} trials (target 0.05 +- 0.03); vine MMD^2 below order-0 Markov in {lower}/{}, need {need}",
            reps.len()
        ),
    }
}

fn criterion4() -> Outcome {
    let mut r = rng(1);
    let mut s = 0u64;
    let chain: Vec<CellId> = (0..100_000)
        .map(|_| {
            let c = CellId(s);
            if uniform(&mut r) >= 0.9 {
                s = 1 - s;
            }
            c
        })
        .collect();
    let spec = GridSpec::unit(6).unwrap();
    let c = Corpus::new(spec, 60, vec![GridTrace::regular("c", &chain, 0, 60).unwrap()]).unwrap();
    let curve = mi_decay(&c, 8).unwrap();
    let oracle = 1.0 - binary_entropy(0.9);
    let i1 = curve.mi_bits[0];
    let (e, p) = (curve.exponential.unwrap().r_squared, curve.power_law.unwrap().r_squared);

    let traces = (0..10)
        .map(|i| {
            let cells: Vec<CellId> = (0..10_000).map(|_| CellId((uniform(&mut r) * 20.0) as u64)).collect();
            GridTrace::regular(format!("i{i}"), &cells, 0, 60).unwrap()
        })
        .collect();
    let iid = mi_decay(&Corpus::new(spec, 60, traces).unwrap(), 20).unwrap();
    let max_iid = iid.mi_bits.iter().cloned().fold(0.0, f64::max);
    Outcome {
        pass: (i1 - oracle).abs() < 0.02 && e > p && max_iid < 0.01,
        detail: format!(
            "I(1) {i1:.4} vs {oracle:.4}; R^2 exponential {e:.4} > power law {p:.4}; i.i.d. max I(tau) {max_iid:.5} < 0.01"
        ),
    }
}

fn criterion5() -> Outcome {
    let truth = sim(100, 500, 1);
    let mut cells: Vec<CellId> = truth.traces().iter().flat_map(|t| t.cells()).collect();
    cells.sort_unstable();
    cells.dedup();
    let m = cells.len() as f64;
    let prior = MarkovModel::uniform(*truth.spec(), truth.sampling_period(), &cells).unwrap();
    let hidden = hide_corpus(&truth, 1.0, 2).unwrap();
    let acc = sequence_attack(&truth, &hidden, &prior, 3).unwrap().accuracy;
    let floor_ok = (acc - 1.0 / m).abs() < 0.02;

    let (mut null_auc, mut member_auc) = (Vec::new(), Vec::new());
    for rep in 0..REPS {
        let all = sim(150, 500, 7000 + rep);
        let members = users(&all, 0..50);
        let non = users(&all, 50..100);
        let other = users(&all, 100..150);
        let start = all.traces()[0].start_time();
        let opts = VineGeneratorOptions::default();
        let trained = VineGenerator::fit(&members, &opts, rep).unwrap().generate(50, 500, start, rep).unwrap();
        let indep = VineGenerator::fit(&other, &opts, rep).unwrap().generate(50, 500, start, rep).unwrap();
        member_auc.push(membership_attack(&trained, members.traces(), non.traces(), rep).unwrap().auc);
        null_auc.push(membership_attack(&indep, members.traces(), non.traces(), rep).unwrap().auc);
    }
    let null_mean = mean(&null_auc);
    let null_ok = (null_mean - 0.5).abs() < 0.07;
    let t = (mean(&member_auc) - 0.5) / (std_dev(&member_auc) / (member_auc.len() as f64).sqrt());
    // One-sided t critical value at 0.01 with 29 degrees of freedom.
    let leak_ok = t > 2.462;
    Outcome {
        pass: floor_ok && null_ok && leak_ok,
        detail: format!(
            "uniform-prior accuracy {acc:.4} vs 1/m {:.4} (m = {m}); independent-data AUC mean {null_mean:.3} (0.5 +- 0.07); trained-generator AUC mean {:.3}, t = {t:.2} > 2.462 over {REPS} reps",
            1.0 / m,
            mean(&member_auc)
        ),
    }
}

fn ar_corpus(n_traces: usize, len: usize, seed: u64) -> Corpus {
    let spec = GridSpec::switzerland();
    let traces = (0..n_traces)
        .map(|t| {
            let cells: Vec<CellId> = ar1(len, 0.7, seed + t as u64)
                .iter()
                .map(|&x| spec.cell_at_position(phi_cdf(x)))
                .collect();
            GridTrace::regular(format!("u{t}"), &cells, 0, 3600).unwrap()
        })
        .collect();
    Corpus::new(spec, 3600, traces).unwrap()
}

fn criterion6() -> Outcome {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let corpus = sim(100, 1000, 3);
    let opts = VineGeneratorOptions::default();
    let t0 = Instant::now();
    let syn = pool.install(|| {
        let g = VineGenerator::fit(&corpus, &opts, 1).unwrap();
        g.generate(100, 1000, corpus.traces()[0].start_time(), 2).unwrap()
    });
    let total = t0.elapsed().as_secs_f64();
    assert_eq!(syn.total_points(), 100_000);

    let w = opts.window;
    let mut pts = Vec::new();
    for n in [1_000usize, 10_000, 100_000] {
        let corpus = ar_corpus(10, n / 10 + w, n as u64);
        let secs = pool.install(|| {
            (0..2)
                .map(|_| {
                    let t = Instant::now();
                    VineGenerator::fit(&corpus, &opts, 0).unwrap();
                    t.elapsed().as_secs_f64()
                })
                .fold(f64::INFINITY, f64::min)
        });
        pts.push(((n as f64).ln(), secs.ln(), secs));
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / 3.0;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / 3.0;
    let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
        / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    Outcome {
        pass: total < 60.0 && slope < 2.0,
        detail: format!(
            "fit + generation of 100 x 1000 single-threaded {total:.2} s < 60 s; fit seconds at 1e3/1e4/1e5 rows {:.3}/{:.3}/{:.3}, log-log slope {slope:.2} < 2",
            pts[0].2, pts[1].2, pts[2].2
        ),
    }
}

fn cli(root: &Path, args: &[&str]) -> Vec<PathBuf> {
    let out = Command::new(env!("CARGO_BIN_EXE_trajsynth"))
        .args(args)
        .env("TRAJSYNTH_OUTPUT_DIR", root)
        .output()
        .unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .filter_map(|l| l.strip_prefix("wrote="))
        .map(PathBuf::from)
        .collect()
}

fn pick<'a>(files: &'a [PathBuf], name: &str) -> &'a str {
    files.iter().find(|p| p.ends_with(name)).unwrap().to_str().unwrap()
}

/// simulate -> ingest -> fit (vine and Markov) -> generate -> evaluate -> attack; returns every file written.
fn pipeline(root: &Path) -> Vec<PathBuf> {
    let mut all = Vec::new();
    let sim = cli(root, &["simulate", "--seed", "1", "--n-users", "50", "--n-nonmembers", "50", "--trace-len", "500"]);
    let ing = cli(root, &["ingest", pick(&sim, "corpus.csv")]);
    let corpus = pick(&ing, "corpus.csv").to_string();
    let targets = pick(&sim, "targets.csv").to_string();
    for model in ["vine", "markov"] {
        let fit = cli(root, &["fit", &corpus, "--model-type", model, "--seed", "2"]);
        let gen = cli(root, &["generate", "--model", pick(&fit, "model.json"), "--seed", "3", "--n-traces", "50"]);
        let syn = pick(&gen, "synthetic.csv").to_string();
        let ev = cli(root, &["evaluate", &corpus, &syn, "--targets", &targets, "--seed", "4", "--n-permutations", "200"]);
        let at = cli(root, &["attack", &syn, &targets, "--seed", "5"]);
        all.extend(fit.into_iter().chain(gen).chain(ev).chain(at));
    }
    all.extend(sim.into_iter().chain(ing));
    all
}

fn criterion7() -> Outcome {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let fa = pipeline(a.path());
    let fb = pipeline(b.path());
    let rel = |root: &Path, files: &[PathBuf]| -> Vec<PathBuf> {
        let mut v: Vec<PathBuf> = files.iter().map(|p| p.strip_prefix(root).unwrap().to_path_buf()).collect();
        v.sort();
        v
    };
    let (ra, rb) = (rel(a.path(), &fa), rel(b.path(), &fb));
    let mut compared = 0;
    let mut differing = Vec::new();
    if ra == rb {
        for r in &ra {
            if r.ends_with("timings.json") {
                continue;
            }
            compared += 1;
            if std::fs::read(a.path().join(r)).unwrap() != std::fs::read(b.path().join(r)).unwrap() {
                differing.push(r.display().to_string());
            }
        }
    }

    // In-process: one worker and the full pool give identical output.
    let corpus = sim(40, 300, 8);
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let run = || {
        let g = VineGenerator::fit(&corpus, &VineGeneratorOptions::default(), 4).unwrap();
        let s = g.generate(40, 300, 0, 5).unwrap();
        (s.clone(), mmd_test(&corpus, &s, 100, 6).unwrap())
    };
    let (s1, m1) = one.install(run);
    let (s2, m2) = run();
    let threads_ok = s1 == s2 && m1 == m2;
    Outcome {
        pass: ra == rb && differing.is_empty() && compared > 0 && threads_ok,
        detail: format!(
            "double CLI run: identical run directories {}, {compared} files byte-compared (timings.json excluded), {} differ{}; 1-thread vs pool generation and MMD identical: {threads_ok}",
            ra == rb,
            differing.len(),
            if differing.is_empty() { String::new() } else { format!(" {differing:?}") }
        ),
    }
}

fn main() {
    let mut results = Vec::new();

    let t = Instant::now();
    results.push(report(1, "copula correctness", t, Some(30.0), criterion1()));

    let t = Instant::now();
    let reps: Vec<FidelityRep> = (0..REPS).map(fidelity_rep).collect();
    let shared = t.elapsed();
    results.push(report(2, "generator fidelity", t, Some(300.0), criterion2(&reps)));

    let t = Instant::now() - shared;
    results.push(report(3, "MMD calibration and ordering", t, Some(600.0), criterion3(&reps)));

    let t = Instant::now();
    results.push(report(4, "MI decay", t, Some(60.0), criterion4()));

    let t = Instant::now();
    results.push(report(5, "privacy floors and signal", t, Some(300.0), criterion5()));

    let t = Instant::now();
    results.push(report(6, "efficiency", t, None, criterion6()));

    let t = Instant::now();
    results.push(report(7, "determinism", t, None, criterion7()));

    let passed = results.iter().filter(|&&p| p).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    let strict = std::env::var("TRAJSYNTH_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if strict && passed < results.len() {
        std::process::exit(1);
    }
}
