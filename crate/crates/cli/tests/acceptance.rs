//! Acceptance suite. Prints one PASS/FAIL/SKIP line per criterion and exits
//! non-zero if anything failed.
//!
//! The dataset check runs only when `GANEYE_DATASET_DIR` (a directory of
//! known generated profile images) and `GANEYE_DETECTOR` (an external
//! landmark detector command line) are both set. `GANEYE_CALIBRATION` may
//! point at a calibration file; otherwise the dataset calibrates itself.

// Negated comparisons are deliberate: a NaN must fail the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::SQRT_2;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use chrono::{TimeZone, Utc};
use ganeye_core::annotation::{
    cohen_kappa, prevalence_report, render_percent, Category, ConsensusCounts, LabelStore,
    StatsConfig, StoreOptions,
};
use ganeye_core::metric::{gan_eye_distance, load_score_file};
use ganeye_core::stats::{kde_1d, kde_2d, ks_pvalue, ks_two_sample, linspace, silverman_bandwidth};
use ganeye_core::{EyeCalibration, EyePair, NormPoint, ScoreRecord};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde_json::Value;

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

use Outcome::*;

type Check = fn() -> Outcome;

fn main() -> ExitCode {
    let checks: [(&str, Check); 9] = [
        ("metric properties", metric_properties),
        ("derived displacement value", derived_value),
        ("prevalence arithmetic", prevalence_arithmetic),
        ("synthetic end-to-end", synthetic_end_to_end),
        ("kappa oracle", kappa_oracle),
        ("ks oracle", ks_oracle),
        ("kde mass", kde_mass),
        ("store replay", store_replay),
        ("dataset recall", dataset_recall),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(check)
            .unwrap_or_else(|e| Fail(format!("panicked: {}", panic_message(&e))));
        let secs = start.elapsed().as_secs_f64();
        let line = match outcome {
            Pass(detail) => format!("PASS {name} ({detail}; {secs:.2}s)"),
            Fail(detail) => {
                failed += 1;
                format!("FAIL {name}: {detail} ({secs:.2}s)")
            }
            Skip(detail) => format!("SKIP {name}: {detail}"),
        };
        println!("{line}");
        std::io::stdout().flush().ok();
    }
    if failed > 0 {
        println!("{failed} acceptance check(s) failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}

fn panic_message(e: &Box<dyn std::any::Any + Send>) -> String {
    e.downcast_ref::<String>()
        .cloned()
        .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_else(|| "unknown panic".into())
}

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Fail(format!($($msg)+));
        }
    };
}

fn point(x: f64, y: f64) -> NormPoint {
    NormPoint::new(x, y).expect("point in the unit square")
}

fn calibration(left: NormPoint, right: NormPoint) -> EyeCalibration {
    EyeCalibration {
        left,
        right,
        n_images: 1,
        source: "acceptance".into(),
    }
}

fn random_point(rng: &mut ChaCha8Rng) -> NormPoint {
    point(rng.random(), rng.random())
}

fn metric_properties() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for i in 0..10_000 {
        let cal = calibration(random_point(&mut rng), random_point(&mut rng));
        let eyes = EyePair::new(random_point(&mut rng), random_point(&mut rng));
        let g = gan_eye_distance(1, Some(&eyes), &cal).unwrap();
        ensure!((0.0..=1.0).contains(&g), "pair {i}: g = {g} outside [0, 1]");
        let differs = eyes.left != cal.left || eyes.right != cal.right;
        ensure!((g > 0.0) == differs, "pair {i}: g = {g} but eyes differ: {differs}");

        let at_cal = gan_eye_distance(1, Some(&cal.eyes()), &cal).unwrap();
        ensure!(at_cal == 0.0, "pair {i}: g = {at_cal} at the calibration itself");

        let n_faces = [0, 2, 3, 7][i % 4];
        let none = gan_eye_distance(n_faces, None, &cal).unwrap();
        ensure!(none == 1.0, "pair {i}: g = {none} with {n_faces} faces");
    }

    // Along a ray out of the calibration, g never decreases.
    for ray in 0..1_000 {
        let cal = calibration(random_point(&mut rng), random_point(&mut rng));
        let theta: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let (dx, dy) = (theta.cos(), theta.sin());
        let both = ray % 2 == 0;
        let reach = |p: NormPoint| max_step(p, dx, dy);
        let t_max = if both { reach(cal.left).min(reach(cal.right)) } else { reach(cal.left) };
        let mut prev = 0.0;
        for k in 1..=50 {
            let t = t_max * k as f64 / 50.0;
            let shift = |p: NormPoint| NormPoint::clamped(p.x() + t * dx, p.y() + t * dy);
            let eyes = EyePair::new(shift(cal.left), if both { shift(cal.right) } else { cal.right });
            let g = gan_eye_distance(1, Some(&eyes), &cal).unwrap();
            ensure!(g >= prev, "ray {ray}: g fell from {prev} to {g} at step {k}");
            prev = g;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 5.0, "took {secs:.2}s, budget 5s");
    Pass("10000 pairs, 1000 rays".into())
}

/// Largest t with `p + t (dx, dy)` still inside the unit square.
fn max_step(p: NormPoint, dx: f64, dy: f64) -> f64 {
    let axis = |v: f64, d: f64| {
        if d > 0.0 {
            (1.0 - v) / d
        } else if d < 0.0 {
            -v / d
        } else {
            f64::INFINITY
        }
    };
    axis(p.x(), dx).min(axis(p.y(), dy))
}

fn derived_value() -> Outcome {
    let cal = calibration(point(0.38, 0.45), point(0.62, 0.45));
    let eyes = EyePair::new(point(0.38, 0.52), point(0.62, 0.45));
    let g = gan_eye_distance(1, Some(&eyes), &cal).unwrap();
    // Direct evaluation: one eye moved by 0.07, the other not at all.
    let oracle = 0.07 / (2.0 * SQRT_2);
    ensure!((g - 0.0247487).abs() <= 1e-7, "g = {g}, expected 0.0247487 ± 1e-7");
    ensure!((g - oracle).abs() <= 1e-12, "g = {g}, direct evaluation {oracle}");
    Pass(format!("g = {g:.9}"))
}

fn prevalence_arithmetic() -> Outcome {
    let counts = ConsensusCounts {
        n_candidates: 1181,
        n_doubly_labeled: 1181,
        strict: 54,
        loose: 113,
    };
    let report = prevalence_report(&counts, 254_275, None, Some(40_199_195), None).unwrap();
    ensure!(render_percent(54, 254_275) == "0.021%", "54/254275 rendered {}", render_percent(54, 254_275));
    ensure!(report.lower_percent == "0.021%", "lower {}", report.lower_percent);
    ensure!(report.upper_percent == "0.044%", "upper {}", report.upper_percent);
    ensure!(report.extrapolated_low == Some(8_537), "low {:?}", report.extrapolated_low);
    ensure!(report.extrapolated_high == Some(17_864), "high {:?}", report.extrapolated_high);
    Pass("0.021%-0.044%, 8537-17864 accounts".into())
}

fn ganeye(args: &[&str], cwd: &Path) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_ganeye"))
        .args(args)
        .current_dir(cwd)
        .env("GPT_LOG_LEVEL", "warn")
        .output()
        .map_err(|e| format!("running ganeye: {e}"))?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!(
            "ganeye {} exited {:?}: {}",
            args.join(" "),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr).trim()
        ))
    }
}

fn synthetic_end_to_end() -> Outcome {
    match run_synthetic() {
        Ok(o) => o,
        Err(e) => Fail(e),
    }
}

fn run_synthetic() -> Result<Outcome, String> {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    let write = |name: &str, body: &str| fs::write(d.join(name), body).map_err(|e| e.to_string());
    write(
        "corpus.json",
        r#"{"image_size":256,"jitter_sigma":0.002,"seed":20240501,
            "counts":{"gan_like":1000,"human_like":1000,"no_face":500,"multi_face":100}}"#,
    )?;
    write(
        "reference.json",
        r#"{"image_size":256,"jitter_sigma":0.0,"seed":77,"counts":{"gan_like":200}}"#,
    )?;
    ganeye(&["synth", "--spec", "corpus.json", "--out", "corpus"], d)?;
    ganeye(&["synth", "--spec", "reference.json", "--out", "reference"], d)?;
    ganeye(&["detect", "--provider", "synthetic", "--images", "reference/images", "--out", "ref.jsonl"], d)?;
    ganeye(&["calibrate", "--landmarks", "ref.jsonl", "--out", "cal.json"], d)?;
    ganeye(&["detect", "--provider", "synthetic", "--images", "corpus/images", "--out", "lm.jsonl"], d)?;
    ganeye(&["score", "--landmarks", "lm.jsonl", "--calibration", "cal.json", "--out", "scores.jsonl"], d)?;
    ganeye(&["filter", "--scores", "scores.jsonl", "--threshold", "0.02", "--out", "cands.jsonl"], d)?;
    let elapsed = start.elapsed().as_secs_f64();

    let class_of: HashMap<String, String> = fs::read_to_string(d.join("corpus/manifest.jsonl"))
        .map_err(|e| e.to_string())?
        .lines()
        .map(|l| {
            let v: Value = serde_json::from_str(l).expect("manifest line");
            (v["image_id"].as_str().unwrap().to_string(), v["class"].as_str().unwrap().to_string())
        })
        .collect();
    let scores = load_score_file(&d.join("scores.jsonl")).map_err(|e| e.to_string())?;
    let candidates = load_score_file(&d.join("cands.jsonl")).map_err(|e| e.to_string())?;
    let flagged: std::collections::HashSet<&str> = candidates.iter().map(|c| c.image_id.as_str()).collect();

    let mut per_class: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    let mut bad_g = Vec::new();
    for s in &scores {
        let class = class_of.get(&s.image_id).map(String::as_str).unwrap_or("unknown");
        let e = per_class.entry(class).or_default();
        e.0 += 1;
        e.1 += usize::from(flagged.contains(s.image_id.as_str()));
        if matches!(class, "no_face" | "multi_face") && s.g != 1.0 {
            bad_g.push(format!("{}: g = {}", s.image_id, s.g));
        }
    }
    let rate = |class: &str| per_class.get(class).map_or(f64::NAN, |&(n, f)| f as f64 / n as f64);
    let (recall, human) = (rate("gan_like"), rate("human_like"));
    let expected = [("gan_like", 1000), ("human_like", 1000), ("no_face", 500), ("multi_face", 100)];
    for (class, n) in expected {
        let got = per_class.get(class).map_or(0, |c| c.0);
        if got != n {
            return Ok(Fail(format!("{class}: {got} scored images, expected {n}")));
        }
    }
    if !(recall >= 0.99) {
        return Ok(Fail(format!("gan_like recall {recall}, need >= 0.99")));
    }
    if !(human <= 0.05) {
        return Ok(Fail(format!("human_like flag rate {human}, need <= 0.05")));
    }
    if !bad_g.is_empty() {
        return Ok(Fail(format!("{} no_face/multi_face images with g != 1, e.g. {}", bad_g.len(), bad_g[0])));
    }
    if elapsed >= 60.0 {
        return Ok(Fail(format!("pipeline took {elapsed:.1}s, budget 60s")));
    }
    Ok(Pass(format!("recall {recall:.3}, human_like flag rate {human:.3}")))
}

/// Kappa straight from the 3x3 confusion matrix, in floating point.
fn kappa_by_confusion(a: &[u8], b: &[u8]) -> f64 {
    let mut m = [[0f64; 3]; 3];
    for (&x, &y) in a.iter().zip(b) {
        m[x as usize - 1][y as usize - 1] += 1.0;
    }
    let n = a.len() as f64;
    let po = (0..3).map(|k| m[k][k]).sum::<f64>() / n;
    let pe = (0..3)
        .map(|k| m[k].iter().sum::<f64>() * (0..3).map(|r| m[r][k]).sum::<f64>())
        .sum::<f64>()
        / (n * n);
    if pe == 1.0 {
        1.0
    } else {
        (po - pe) / (1.0 - pe)
    }
}

fn kappa_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0f64;
    for trial in 0..1_000 {
        let a: Vec<u8> = (0..50).map(|_| rng.random_range(1..=3)).collect();
        let b: Vec<u8> = (0..50).map(|_| rng.random_range(1..=3)).collect();
        let pairs: Vec<(u8, u8)> = a.iter().copied().zip(b.iter().copied()).collect();
        let k = cohen_kappa(&pairs).unwrap();
        let oracle = kappa_by_confusion(&a, &b);
        let diff = (k - oracle).abs();
        worst = worst.max(diff);
        ensure!(diff <= 1e-12, "trial {trial}: kappa {k}, oracle {oracle}");

        let same: Vec<(u8, u8)> = a.iter().map(|&x| (x, x)).collect();
        let k = cohen_kappa(&same).unwrap();
        ensure!(k == 1.0, "trial {trial}: identical labels gave kappa {k}");
    }
    let hand = [(1, 1), (1, 2), (2, 1), (2, 2)];
    let k = cohen_kappa(&hand).unwrap();
    ensure!(k == 0.0, "hand case gave {k}, expected 0");
    let cats = [
        (Category::HighlyLikelyGan, Category::HighlyLikelyGan),
        (Category::HighlyLikelyGan, Category::LikelyGan),
        (Category::LikelyGan, Category::HighlyLikelyGan),
        (Category::LikelyGan, Category::LikelyGan),
    ];
    let k = cohen_kappa(&cats).unwrap();
    ensure!(k == 0.0, "hand case on categories gave {k}, expected 0");
    Pass(format!("max deviation {worst:.1e}"))
}

/// `D` by evaluating both ECDFs at every observed value, as an exact
/// fraction `max |i m - j n| / (n m)`.
fn ks_by_enumeration(a: &[f64], b: &[f64]) -> f64 {
    let (n, m) = (a.len() as u64, b.len() as u64);
    let best = a
        .iter()
        .chain(b)
        .map(|&t| {
            let i = a.iter().filter(|&&x| x <= t).count() as u64;
            let j = b.iter().filter(|&&y| y <= t).count() as u64;
            (i * m).abs_diff(j * n)
        })
        .max()
        .unwrap();
    best as f64 / (n * m) as f64
}

fn ks_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for trial in 0..500 {
        let n = rng.random_range(1..=20);
        let m = rng.random_range(1..=20);
        // Half the trials draw from a small set so ties are common.
        let draw = |rng: &mut ChaCha8Rng| -> f64 {
            if trial % 2 == 0 {
                rng.random_range(0..6) as f64
            } else {
                rng.random()
            }
        };
        let a: Vec<f64> = (0..n).map(|_| draw(&mut rng)).collect();
        let b: Vec<f64> = (0..m).map(|_| draw(&mut rng)).collect();
        let d = ks_two_sample(&a, &b).unwrap();
        let oracle = ks_by_enumeration(&a, &b);
        ensure!(d == oracle, "trial {trial}: D = {d}, enumeration {oracle}");
    }

    // Permutation null for n = m = 100: relabel 200 distinct values at random
    // and count splits whose statistic reaches 0.5.
    let (n, m) = (100usize, 100usize);
    let p = ks_pvalue(0.5, n, m).unwrap();
    let mut labels: Vec<bool> = (0..n + m).map(|i| i < n).collect();
    let resamples = 100_000;
    let mut extreme = 0u64;
    for _ in 0..resamples {
        labels.shuffle(&mut rng);
        let (mut i, mut j, mut best) = (0i64, 0i64, 0i64);
        for &in_a in &labels {
            if in_a {
                i += 1;
            } else {
                j += 1;
            }
            best = best.max((i * m as i64 - j * n as i64).abs());
        }
        // D >= 0.5  <=>  |i m - j n| >= n m / 2.
        if 2 * best >= (n * m) as i64 {
            extreme += 1;
        }
    }
    let permutation = extreme as f64 / resamples as f64;
    ensure!(
        (p - permutation).abs() <= 0.01,
        "asymptotic p {p:.3e}, permutation p {permutation:.3e}"
    );
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 120.0, "took {secs:.1}s, budget 120s");
    Pass(format!("500 exact matches; p = {p:.2e} vs permutation {permutation:.2e}"))
}

fn trapezoid(xs: &[f64], ys: &[f64]) -> f64 {
    xs.windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| (x[1] - x[0]) * (y[0] + y[1]) / 2.0)
        .sum()
}

fn kde_mass() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let normal = Normal::new(0.3, 0.1).unwrap();
    let values: Vec<f64> = (0..500).map(|_| normal.sample(&mut rng)).collect();
    let h = silverman_bandwidth(&values).unwrap();
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min) - 6.0 * h;
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 6.0 * h;
    let density = kde_1d(&values, &linspace(lo, hi, 2048), None).unwrap();
    let mass_1d = trapezoid(&density.grid, &density.values);
    ensure!((mass_1d - 1.0).abs() <= 0.01, "1-D density integrates to {mass_1d}");

    // Tight cluster: integrate the estimate over the 0.05-radius box around
    // its center on a lattice fine enough to resolve the bandwidth.
    let (cx, cy, sigma) = (0.4, 0.45, 0.002);
    let jitter = Normal::new(0.0, sigma).unwrap();
    let points: Vec<NormPoint> = (0..300)
        .map(|_| point(cx + jitter.sample(&mut rng), cy + jitter.sample(&mut rng)))
        .collect();
    let xs = linspace(cx - 0.05, cx + 0.05, 1001);
    let ys = linspace(cy - 0.05, cy + 0.05, 1001);
    let density = kde_2d(&points, &xs, &ys, None).unwrap();
    let row_integrals: Vec<f64> = (0..ys.len())
        .map(|iy| trapezoid(&xs, &density.values[iy * xs.len()..(iy + 1) * xs.len()]))
        .collect();
    let mass_2d = trapezoid(&ys, &row_integrals);
    ensure!(mass_2d >= 0.99, "2-D box holds {mass_2d} of the mass");
    ensure!(mass_2d <= 1.0 + 1e-3, "2-D box integral {mass_2d} exceeds 1");
    Pass(format!("1-D mass {mass_1d:.5}, 2-D box mass {mass_2d:.5}"))
}

fn store_replay() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("labels.jsonl");
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let candidates: Vec<ScoreRecord> = (0..400)
        .map(|i| {
            let cal = calibration(point(0.38, 0.45), point(0.62, 0.45));
            let eyes = EyePair::new(
                point(0.38 + rng.random_range(0.0..0.005), 0.45),
                point(0.62, 0.45 - rng.random_range(0.0..0.005)),
            );
            let g = gan_eye_distance(1, Some(&eyes), &cal).unwrap();
            ScoreRecord {
                image_id: format!("img_{i:04}"),
                n_faces: 1,
                eyes: Some(eyes),
                g,
            }
        })
        .collect();
    let options = StoreOptions::default();
    let config = StatsConfig {
        n_sample: Some(100_000),
        extrapolation_base: Some(40_199_195),
    };
    let annotators = ["alice", "bob"];
    let t0 = Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap();

    let mut store = LabelStore::open(&candidates, &log, &options).unwrap();
    for op in 0..10_000i64 {
        let who = annotators[rng.random_range(0..2)];
        // Skewed pick so many operations supersede an earlier label.
        let idx = (rng.random::<f64>().powi(2) * candidates.len() as f64) as usize;
        let cat = Category::ALL[rng.random_range(0..3)];
        let ts = t0 + chrono::Duration::seconds(op);
        store.submit(who, &candidates[idx].image_id, cat, ts).unwrap();
    }
    let live = serde_json::to_value(store.stats(&config)).unwrap();
    let revision = store.revision();
    // Simulate a crash mid-write: drop without any shutdown and leave a
    // partial record behind.
    drop(store);
    fs::OpenOptions::new()
        .append(true)
        .open(&log)
        .unwrap()
        .write_all(br#"{"annotator":"alice","image_id":"img_00"#)
        .unwrap();

    let read_only = LabelStore::replay(&candidates, &log, &options).unwrap();
    let replayed = serde_json::to_value(read_only.stats(&config)).unwrap();
    ensure!(replayed == live, "read-only replay differs:\n{replayed}\nvs\n{live}");
    let reopened = LabelStore::open(&candidates, &log, &options).unwrap();
    let reopened_stats = serde_json::to_value(reopened.stats(&config)).unwrap();
    ensure!(reopened_stats == live, "reopened store differs:\n{reopened_stats}\nvs\n{live}");
    ensure!(reopened.revision() == revision, "revision {} after replay, expected {revision}", reopened.revision());
    ensure!(live["kappa"].is_number(), "no kappa in stats: {live}");
    Pass(format!("{revision} operations replayed"))
}

fn dataset_recall() -> Outcome {
    let (Ok(dataset), Ok(detector)) = (std::env::var("GANEYE_DATASET_DIR"), std::env::var("GANEYE_DETECTOR"))
    else {
        return Skip("set GANEYE_DATASET_DIR and GANEYE_DETECTOR to run".into());
    };
    if !Path::new(&dataset).is_dir() {
        return Skip(format!("{dataset} is not a directory"));
    }
    match run_dataset(&dataset, &detector) {
        Ok(o) => o,
        Err(e) => Fail(e),
    }
}

fn run_dataset(dataset: &str, detector: &str) -> Result<Outcome, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    ganeye(
        &["detect", "--provider", "exec", "--command", detector, "--images", dataset, "--out", "lm.jsonl"],
        d,
    )?;
    let cal = match std::env::var("GANEYE_CALIBRATION") {
        Ok(path) => path,
        Err(_) => {
            ganeye(&["calibrate", "--landmarks", "lm.jsonl", "--out", "cal.json"], d)?;
            d.join("cal.json").display().to_string()
        }
    };
    ganeye(&["score", "--landmarks", "lm.jsonl", "--calibration", &cal, "--out", "scores.jsonl"], d)?;
    let scores = load_score_file(&d.join("scores.jsonl")).map_err(|e| e.to_string())?;
    if scores.is_empty() {
        return Ok(Fail("no images scored".into()));
    }
    let flagged = scores.iter().filter(|s| s.g < 0.02).count();
    let recall = flagged as f64 / scores.len() as f64;
    if recall >= 0.99 {
        Ok(Pass(format!("recall {recall:.4} on {} images", scores.len())))
    } else {
        Ok(Fail(format!("recall {recall:.4} on {} images, need >= 0.99", scores.len())))
    }
}
