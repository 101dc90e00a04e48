//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use kernbound::bounds::{
    ceiling_bound, comparator_sb, optimize_even_r, sweep_bounds_params, sweep_csv, trace_bound,
    BoundValue, Family, MarginConfig,
};
use kernbound::certify::{certify, rho_max, BoundChoice};
use kernbound::learner::{error_rate, predict_points, train, TrainerConfig};
use kernbound::proof_checks::{run_suite, SuiteConfig};
use kernbound::rademacher::{
    brute_force_sup, estimate_exact, estimate_exact_families, estimate_mc, sup_closed_form,
    HypothesisFamily,
};
use kernbound::sigma::SigmaVector;
use kernbound::{build_dictionary, synth, CeilingPolicy, KernelSpec};
use rand::Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

/// Relative slack for bound comparisons.
const REL_TOL: f64 = 1e-9;

fn within(value: f64, bound: f64) -> bool {
    value <= bound + REL_TOL * bound.abs()
}

fn bound_domination() -> Outcome {
    let start = Instant::now();
    let mut rng = synth::rng(1001);
    let mut checks = 0;
    let mut failures = Vec::new();
    for instance in 0..50 {
        let m = rng.random_range(2..=12);
        let p = rng.random_range(1..=16);
        let rho = 10f64.powf(rng.random_range(-0.5..0.5));
        let dict = synth::random_dictionary(&mut rng, m, p).map_err(|e| e.to_string())?;
        let families = [
            HypothesisFamily::l1(rho).unwrap(),
            HypothesisFamily::l2(rho).unwrap(),
        ];
        let est = estimate_exact_families(&dict, &families, 14).map_err(|e| e.to_string())?;
        let traces = dict.traces();
        let r2 = dict.kernel_ceiling_r2();
        for (family, rs, value) in [
            (Family::L1, &[2u32, 4, 6, 8][..], est[0].value),
            (Family::L2, &[2u32, 4][..], est[1].value),
        ] {
            for &r in rs {
                let b = trace_bound(&traces, m, rho, r, family).unwrap();
                checks += 1;
                if !within(value, b) {
                    failures.push(format!("#{instance} {family} trace r={r}: {value} > {b}"));
                }
            }
            if let BoundValue::Value(b) = ceiling_bound(p, r2, rho, m, family).unwrap() {
                checks += 1;
                if !within(value, b) {
                    failures.push(format!("#{instance} {family} ceiling: {value} > {b}"));
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    if !failures.is_empty() {
        return Err(format!("{} violations: {}", failures.len(), failures.join("; ")));
    }
    if secs >= 30.0 {
        return Err(format!("runtime {secs:.1}s exceeds 30s"));
    }
    Ok(format!("{checks} comparisons, 0 violations, {secs:.2}s"))
}

fn closed_form_vs_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = synth::rng(2002);
    let mut worst_ratio = f64::INFINITY;
    let mut achiever_checks = 0;
    for instance in 0..30 {
        let m = rng.random_range(1..=6);
        let p = if instance % 3 == 0 { 1 } else { rng.random_range(2..=3) };
        let dict = synth::random_dictionary(&mut rng, m, p).map_err(|e| e.to_string())?;
        let sigma = SigmaVector::from_counter(2002, instance, m);
        let rho = rng.random_range(0.5..2.0);
        let family = match instance % 3 {
            0 => HypothesisFamily::l1(rho),
            1 => HypothesisFamily::l2(rho),
            _ => HypothesisFamily::l2_signed(rho),
        }
        .unwrap();
        let closed = sup_closed_form(&dict, &sigma, &family).unwrap();
        let bf = brute_force_sup(&dict, &sigma, &family, 0.01).map_err(|e| e.to_string())?;
        if bf.grid_max > closed + 1e-9 {
            return Err(format!("#{instance}: grid max {} > closed form {closed}", bf.grid_max));
        }
        if closed > 0.0 {
            worst_ratio = worst_ratio.min(bf.grid_max / closed);
            if bf.grid_max < 0.98 * closed {
                return Err(format!("#{instance}: grid max {} < 0.98 x {closed}", bf.grid_max));
            }
        }
        if p == 1 && !bf.degenerate {
            achiever_checks += 1;
            if (bf.achiever_check - closed).abs() > 1e-9 {
                return Err(format!(
                    "#{instance}: achiever {} vs closed form {closed}",
                    bf.achiever_check
                ));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    if secs >= 60.0 {
        return Err(format!("runtime {secs:.1}s exceeds 60s"));
    }
    Ok(format!(
        "30 instances, min gridMax/closed = {worst_ratio:.5}, {achiever_checks} achiever checks, {secs:.2}s"
    ))
}

fn proof_inequalities() -> Outcome {
    let start = Instant::now();
    let summaries = run_suite(&SuiteConfig::default()).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let counts: Vec<String> = summaries
        .iter()
        .map(|s| format!("{} {}/{}", s.name, s.holding, s.instances))
        .collect();
    if let Some(bad) = summaries.iter().find(|s| !s.pass || s.instances == 0) {
        return Err(format!("{} failed: {:?}", bad.name, bad.tightest));
    }
    if secs >= 60.0 {
        return Err(format!("runtime {secs:.1}s exceeds 60s"));
    }
    Ok(format!("{}, {secs:.2}s", counts.join(", ")))
}

fn scaling_laws() -> Outcome {
    for p in [1usize, 2, 5] {
        let a = ceiling_bound(p, 1.0, 1.0, 100, Family::L2).unwrap().value().unwrap();
        let b = ceiling_bound(16 * p, 1.0, 1.0, 100, Family::L2).unwrap().value().unwrap();
        if b / a != 2.0 {
            return Err(format!("L2 ratio at p = {p} is {}", b / a));
        }
    }
    let ps = [2usize, 3, 8, 10, 21, 100, 1000, 10_000];
    for &p1 in &ps {
        for &p2 in &ps {
            let a = ceiling_bound(p1, 1.0, 1.0, 100, Family::L1).unwrap().value().unwrap();
            let b = ceiling_bound(p2, 1.0, 1.0, 100, Family::L1).unwrap().value().unwrap();
            let expected = ((p2 as f64).ln().ceil() / (p1 as f64).ln().ceil()).sqrt();
            if ((b / a) - expected).abs() > 1e-12 * expected {
                return Err(format!("L1 ratio {p2}/{p1} = {} vs {expected}", b / a));
            }
        }
    }
    let (r, v) = optimize_even_r(8, 1.0, 1.0, 100, Family::L1).unwrap();
    if r != 4 || (v - 0.336359).abs() > 1e-6 {
        return Err(format!("optimize_even_r(8) = ({r}, {v})"));
    }
    Ok(format!("L2 ratios exactly 2, L1 ratios match, optimum r = {r} value {v:.6}"))
}

fn comparison_narrative() -> Outcome {
    let sb = comparator_sb(10, 1.0, 1.0, 100).unwrap().value().ok_or("comparator n/a")?;
    let l1 = ceiling_bound(10, 1.0, 1.0, 100, Family::L1).unwrap().value().unwrap();
    if sb < 20.0 || (l1 - 0.4039).abs() > 1e-4 {
        return Err(format!("comparator {sb}, L1 ceiling {l1}"));
    }
    let p_values = [2usize, 5, 10, 50, 100, 500, 1000, 1001, 2000, 5000, 10_000];
    let rows = sweep_bounds_params(1000, 1.0, 1.0, &p_values, None).unwrap();
    let csv = sweep_csv(&rows);
    let mut beyond_m = 0;
    for line in csv.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let (p, family, form, value) = (f[0].parse::<usize>().unwrap(), f[1], f[2], f[4]);
        match (family, form) {
            ("L1", "ceiling") => {
                let v: f64 = value.parse().map_err(|_| format!("L1 ceiling `{value}` at p = {p}"))?;
                if v >= 1.0 {
                    return Err(format!("L1 ceiling {v} >= 1 at p = {p}"));
                }
            }
            ("L1", "comparatorSB") if p > 1000 => {
                beyond_m += 1;
                let v: f64 = value.parse().map_err(|_| format!("comparator `{value}` at p = {p}"))?;
                if v <= 1.0 {
                    return Err(format!("comparator {v} <= 1 at p = {p} > m"));
                }
            }
            _ => {}
        }
    }
    Ok(format!(
        "comparator {sb:.4} vs L1 ceiling {l1:.4}; {beyond_m} sweep rows with p > m all exceed 1"
    ))
}

fn exact_vs_monte_carlo() -> Outcome {
    let mut rng = synth::rng(6006);
    let mut worst = 0.0f64;
    for instance in 0..20u64 {
        let m = rng.random_range(4..=12);
        let p = rng.random_range(1..=8);
        let dict = synth::random_dictionary(&mut rng, m, p).map_err(|e| e.to_string())?;
        let family = if instance % 2 == 0 {
            HypothesisFamily::l1(1.0)
        } else {
            HypothesisFamily::l2(1.0)
        }
        .unwrap();
        let exact = estimate_exact(&dict, &family, 14).unwrap().value;
        let mc = estimate_mc(&dict, &family, 200_000, instance).unwrap();
        let diff = (mc.value - exact).abs();
        let z = if mc.stderr > 0.0 { diff / mc.stderr } else { 0.0 };
        worst = worst.max(z);
        if diff > 4.0 * mc.stderr + 1e-12 * exact.abs() {
            return Err(format!(
                "#{instance}: |{} - {exact}| = {diff} > 4 x {}",
                mc.value, mc.stderr
            ));
        }
    }
    let dict = synth::random_dictionary(&mut rng, 12, 6).unwrap();
    let family = HypothesisFamily::l2(0.7).unwrap();
    let runs: Vec<f64> = [1usize, 4, 8]
        .iter()
        .map(|&t| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .unwrap()
                .install(|| estimate_mc(&dict, &family, 200_000, 77).unwrap().value)
        })
        .collect();
    if runs.iter().any(|v| v.to_bits() != runs[0].to_bits()) {
        return Err(format!("thread counts disagree: {runs:?}"));
    }
    Ok(format!("20 instances, max |z| = {worst:.2}; threads 1/4/8 bit-identical"))
}

fn end_to_end_certificate() -> Outcome {
    let specs = [
        KernelSpec::gaussian("g0.1", 0.1),
        KernelSpec::gaussian("g1", 1.0),
        KernelSpec::gaussian("g10", 10.0),
    ];
    let mut covered = 0;
    let mut details = Vec::new();
    for seed in 42..62u64 {
        let train_set = synth::two_blobs(seed, 60).unwrap();
        let test_set = synth::two_blobs(seed + 10_000, 200).unwrap();
        let dict = build_dictionary(&train_set, &specs, CeilingPolicy::FromSample).unwrap();
        let model = train(&train_set, &dict, Family::L1, &TrainerConfig::default())
            .map_err(|e| e.to_string())?;
        let rho = rho_max(&model, &dict).unwrap();
        let cfg = MarginConfig::new(rho, 0.05).unwrap();
        let cert = certify(&model, &train_set, &dict, &cfg, BoundChoice::Ceiling)
            .map_err(|e| e.to_string())?;
        let assembled = cert.margin_loss + cert.complexity_term + cert.confidence_term;
        if (cert.total - assembled).abs() > 1e-12 {
            return Err(format!("seed {seed}: total {} vs {assembled}", cert.total));
        }
        let expected_conf = 2.0 * ((2.0f64 / 0.05).ln() / 120.0).sqrt();
        if (cert.confidence_term - expected_conf).abs() > 1e-12 {
            return Err(format!("seed {seed}: confidence term {}", cert.confidence_term));
        }
        let scores = predict_points(&model, &train_set, test_set.points()).unwrap();
        let test_error = error_rate(&scores, test_set.labels().unwrap()).unwrap();
        if test_error <= cert.total {
            covered += 1;
        }
        if seed == 42 {
            details.push(format!(
                "seed 42: rho {rho:.4}, test error {test_error:.3}, total {:.3}",
                cert.total
            ));
        }
    }
    if covered < 19 {
        return Err(format!("test error <= total in only {covered}/20 seeds"));
    }
    Ok(format!("{covered}/20 seeds covered; {}", details.join("")))
}

const CLI_CONFIG: &str = r#"
rho = 0.5
delta = 0.05
family = "l1"
seed = 11

[data]
path = "train.csv"

[[kernels]]
name = "g1"
kind = "gaussian"
gamma = 1.0

[[kernels]]
name = "poly"
kind = "polynomial"
degree = 2
offset = 1.0

[gram]
cache_dir = "cache"

[estimate]
trials = 5000

[sweep]
p_values = [1, 2]

[train]
model = "model.json"

[certify]
model = "model.json"
bound = "mc"
"#;

fn run_cli(dir: &Path, args: &[&str]) -> Result<(i32, Vec<u8>), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_kernbound"))
        .args(args)
        .current_dir(dir)
        .output()
        .map_err(|e| e.to_string())?;
    Ok((out.status.code().unwrap_or(-1), out.stdout))
}

fn cli_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let sample = synth::two_blobs(5, 12).unwrap();
    let mut csv = String::new();
    for (x, y) in sample.points().iter().zip(sample.labels().unwrap()) {
        csv.push_str(&format!("{},{},{}\n", x[0], x[1], y));
    }
    std::fs::write(dir.path().join("train.csv"), csv).unwrap();
    std::fs::write(dir.path().join("run.toml"), CLI_CONFIG).unwrap();

    let commands = ["gram", "bound", "estimate", "verify", "train", "certify", "sweep"];
    for command in commands {
        let first = run_cli(dir.path(), &[command, "--config", "run.toml"])?;
        let second = run_cli(dir.path(), &[command, "--config", "run.toml", "--threads", "3"])?;
        if first.0 != 0 {
            return Err(format!("{command} exited with {}", first.0));
        }
        if first != second {
            return Err(format!("{command}: reports differ between runs"));
        }
    }
    Ok(format!("{} commands byte-identical across reruns", commands.len()))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("bound domination", bound_domination),
        ("closed-form supremum vs brute force", closed_form_vs_oracle),
        ("proof inequality suite", proof_inequalities),
        ("scaling laws", scaling_laws),
        ("comparison with the pseudo-dimension bound", comparison_narrative),
        ("exact vs Monte Carlo", exact_vs_monte_carlo),
        ("end-to-end certificate", end_to_end_certificate),
        ("CLI determinism", cli_determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("acceptance {}: PASS {name} ({detail})", i + 1),
            Err(detail) => {
                failed += 1;
                println!("acceptance {}: FAIL {name} ({detail})", i + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
