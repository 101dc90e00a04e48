use kernbound::bounds::{
    ceil_ln, ceiling_bound, optimize_even_r, trace_bound, uniform_trace_form, Family,
};
use kernbound::certify::assemble;
use kernbound::kernel::{combine_unconstrained, compute_gram, KernelDictionary};
use kernbound::learner::{margin_loss, predict, train, Model, TrainerConfig};
use kernbound::proof_checks::{check_first_factor, check_moment_bound, MomentMode};
use kernbound::rademacher::{estimate_exact, sup_closed_form, HypothesisFamily};
use kernbound::sigma::SigmaVector;
use kernbound::{
    build_dictionary, quadratic_form, synth, CeilingPolicy, CombinationWeights, Constraint,
    GramMatrix, KernelSpec, Sample,
};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

fn dict_from_seed(seed: u64, max_m: usize, max_p: usize) -> KernelDictionary {
    let mut rng = synth::rng(seed);
    let m = rng.random_range(1..=max_m);
    let p = rng.random_range(1..=max_p);
    synth::random_dictionary(&mut rng, m, p).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn gram_is_symmetric_and_thread_independent(seed in any::<u64>()) {
        let mut rng = synth::rng(seed);
        let m = rng.random_range(1..=20);
        let d = rng.random_range(1..=3);
        let sample = Sample::unlabeled(synth::random_points(&mut rng, m, d)).unwrap();
        let spec = synth::random_kernel_spec(&mut rng, "k");
        let g = compute_gram(&sample, &spec).unwrap();
        prop_assert_eq!(g.entries(), &g.entries().transpose());
        let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap()
            .install(|| compute_gram(&sample, &spec).unwrap());
        prop_assert!(g.entries().iter().zip(single.entries().iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn trace_within_ceiling(seed in any::<u64>()) {
        let dict = dict_from_seed(seed, 12, 8);
        for t in dict.traces() {
            prop_assert!(t <= dict.m() as f64 * dict.kernel_ceiling_r2() * (1.0 + 1e-12));
        }
    }

    #[test]
    fn combine_is_linear(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let dict = dict_from_seed(seed, 10, 5);
        let mut rng = synth::rng(seed ^ 1);
        let mu1: Vec<f64> = synth::random_vector(&mut rng, dict.p());
        let mu2: Vec<f64> = synth::random_vector(&mut rng, dict.p());
        let mixed: Vec<f64> = mu1.iter().zip(&mu2).map(|(x, y)| a * x + b * y).collect();
        let lhs = combine_unconstrained(&dict, &mixed).unwrap();
        let rhs = combine_unconstrained(&dict, &mu1).unwrap().entries() * a
            + combine_unconstrained(&dict, &mu2).unwrap().entries() * b;
        let scale = rhs.amax().max(1.0);
        prop_assert!((lhs.entries() - rhs).amax() <= 1e-12 * scale);
    }

    #[test]
    fn quadratic_form_decomposes(seed in any::<u64>()) {
        let dict = dict_from_seed(seed, 10, 6);
        let mut rng = synth::rng(seed ^ 2);
        let mu = synth::random_weights(&mut rng, dict.p(), Constraint::L1Simplex);
        let alpha = synth::random_vector(&mut rng, dict.m());
        let whole = quadratic_form(&kernbound::combine(&dict, &mu).unwrap(), &alpha).unwrap();
        let parts: f64 = dict.grams().iter().zip(mu.values())
            .map(|(g, w)| w * quadratic_form(g, &alpha).unwrap())
            .sum();
        prop_assert!((whole - parts).abs() <= 1e-9 * parts.abs().max(1e-12));
    }

    #[test]
    fn bounds_are_homogeneous(
        p in 1usize..200, m in 1usize..5000, r2 in 0.01f64..100.0,
        rho in 0.01f64..10.0, c in 0.1f64..10.0,
    ) {
        for family in [Family::L1, Family::L2] {
            let base = ceiling_bound(p, r2, rho, m, family).unwrap();
            let both = ceiling_bound(p, c * c * r2, c * rho, m, family).unwrap();
            let r_only = ceiling_bound(p, c * c * r2, rho, m, family).unwrap();
            if let (Some(v), Some(w), Some(u)) = (base.value(), both.value(), r_only.value()) {
                prop_assert!(rel(w, v) < 1e-12);
                prop_assert!(rel(u, c * v) < 1e-12);
            }
            let (_, v) = optimize_even_r(p, r2, rho, m, family).unwrap();
            let (_, w) = optimize_even_r(p, c * c * r2, c * rho, m, family).unwrap();
            prop_assert!(rel(w, v) < 1e-12);
        }
        let traces = vec![m as f64 * r2; p];
        let scaled: Vec<f64> = traces.iter().map(|t| c * c * t).collect();
        let v = trace_bound(&traces, m, rho, 4, Family::L2).unwrap();
        prop_assert!(rel(trace_bound(&scaled, m, c * rho, 4, Family::L2).unwrap(), v) < 1e-12);
        prop_assert!(rel(trace_bound(&scaled, m, rho, 4, Family::L2).unwrap(), c * v) < 1e-12);
    }

    #[test]
    fn uniform_traces_match_intermediate_form(
        p in 1usize..300, m in 1usize..2000, r2 in 0.01f64..10.0, rho in 0.1f64..5.0,
        half_r in 1u32..6,
    ) {
        let r = 2 * half_r;
        let traces = vec![m as f64 * r2; p];
        let direct = trace_bound(&traces, m, rho, r, Family::L1).unwrap();
        let expected = (p as f64).powf(1.0 / r as f64) * (r as f64).sqrt()
            * (r2 / (rho * rho) / m as f64).sqrt();
        prop_assert!(rel(direct, expected) < 1e-12);
        prop_assert!(rel(uniform_trace_form(p, r2, rho, m, r), expected) < 1e-12);
        let (_, best) = optimize_even_r(p, r2, rho, m, Family::L1).unwrap();
        prop_assert!(best <= trace_bound(&traces, m, rho, 2, Family::L1).unwrap());
    }

    #[test]
    fn l1_ceiling_doubling(p in 2usize..1_000_000) {
        let a = ceiling_bound(p, 1.0, 1.0, 100, Family::L1).unwrap().value().unwrap();
        let b = ceiling_bound(2 * p, 1.0, 1.0, 100, Family::L1).unwrap().value().unwrap();
        prop_assert!(b >= a);
        let expected = (ceil_ln(2 * p) / ceil_ln(p)).sqrt();
        prop_assert!(rel(b / a, expected) < 1e-12);
    }

    #[test]
    fn l2_ceiling_sixteen_fold(p in 1usize..100_000) {
        let a = ceiling_bound(p, 1.0, 1.0, 100, Family::L2).unwrap().value().unwrap();
        let b = ceiling_bound(16 * p, 1.0, 1.0, 100, Family::L2).unwrap().value().unwrap();
        prop_assert_eq!(b / a, 2.0);
    }

    #[test]
    fn trace_bound_permutation_invariant(seed in any::<u64>()) {
        let mut rng = synth::rng(seed);
        let p = rng.random_range(1..=12);
        let mut traces: Vec<f64> = (0..p).map(|_| rng.random_range(0.0..50.0)).collect();
        let before = trace_bound(&traces, 20, 0.7, 6, Family::L1).unwrap();
        traces.reverse();
        traces.rotate_left(p / 2);
        let after = trace_bound(&traces, 20, 0.7, 6, Family::L1).unwrap();
        prop_assert!(rel(after, before) < 1e-14);
    }

    #[test]
    fn closed_form_orderings(seed in any::<u64>()) {
        let dict = dict_from_seed(seed, 12, 8);
        let sigma = SigmaVector::from_counter(seed, 0, dict.m());
        let rho = 0.8;
        let l1 = sup_closed_form(&dict, &sigma, &HypothesisFamily::l1(rho).unwrap()).unwrap();
        let l2 = sup_closed_form(&dict, &sigma, &HypothesisFamily::l2(rho).unwrap()).unwrap();
        let signed = sup_closed_form(&dict, &sigma, &HypothesisFamily::l2_signed(rho).unwrap()).unwrap();
        prop_assert!(l2 >= l1);
        prop_assert_eq!(l2.to_bits(), signed.to_bits());
        let neg = sup_closed_form(&dict, &sigma.negated(), &HypothesisFamily::l2(rho).unwrap()).unwrap();
        prop_assert!(rel(neg, l2) < 1e-12 || (neg == 0.0 && l2 == 0.0));
    }

    #[test]
    fn estimates_scale(seed in any::<u64>(), c in 0.2f64..5.0) {
        let dict = dict_from_seed(seed, 8, 4);
        let scaled_grams: Vec<GramMatrix> = dict.grams().iter().map(|g| g.scaled(c * c)).collect();
        let scaled = KernelDictionary::from_grams(
            dict.names().to_vec(),
            scaled_grams,
            CeilingPolicy::FromSample,
        ).unwrap();
        for family in [HypothesisFamily::l1(1.0).unwrap(), HypothesisFamily::l2(1.0).unwrap()] {
            let base = estimate_exact(&dict, &family, 14).unwrap().value;
            let up = estimate_exact(&scaled, &family, 14).unwrap().value;
            prop_assert!((up - c * base).abs() <= 1e-12 * (c * base).max(1e-300));
            let wide = HypothesisFamily::new(family.constraint, c).unwrap();
            let down = estimate_exact(&dict, &wide, 14).unwrap().value;
            prop_assert!((down - base / c).abs() <= 1e-12 * (base / c).max(1e-300));
        }
    }

    #[test]
    fn first_factor_monotone_in_q(seed in any::<u64>()) {
        let dict = dict_from_seed(seed, 8, 6);
        let mut rng = synth::rng(seed ^ 3);
        let mu = synth::random_weights(&mut rng, dict.p(), Constraint::L2Sphere);
        let alpha = synth::random_vector(&mut rng, dict.m());
        let qs = [4.0 / 3.0, 1.5, 2.0, 3.0, 4.0, 8.0];
        let lhs: Vec<f64> = qs.iter()
            .map(|&q| check_first_factor(&mu, &alpha, &dict, q).unwrap().lhs)
            .collect();
        for w in lhs.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12));
        }
    }

    #[test]
    fn total_decreases_in_m(loss in 0.0f64..1.0, p in 2usize..64, delta in 0.001f64..0.5, m in 1usize..10_000) {
        let at = |m: usize| {
            let b = ceiling_bound(p, 1.0, 1.0, m, Family::L1).unwrap().value().unwrap();
            assemble(loss, b, delta, m).2
        };
        prop_assert!(at(m + 1) < at(m));
    }

    #[test]
    fn margin_loss_monotone_in_rho(seed in any::<u64>(), rho in 0.01f64..3.0, shrink in 0.0f64..1.0) {
        let mut rng = synth::rng(seed);
        let scores = synth::random_vector(&mut rng, 30);
        let labels: Vec<f64> = (0..30).map(|i| if i % 3 == 0 { -1.0 } else { 1.0 }).collect();
        let small = (rho * shrink).max(1e-300);
        prop_assert!(margin_loss(&scores, &labels, small).unwrap() <= margin_loss(&scores, &labels, rho).unwrap());
    }
}

#[test]
fn even_r_ratio_window_has_one_exception() {
    let mut outside = Vec::new();
    let mut p = 2usize;
    while p <= 1_000_000 {
        let (_, opt) = optimize_even_r(p, 1.0, 1.0, 100, Family::L1).unwrap();
        let ceiling = ceiling_bound(p, 1.0, 1.0, 100, Family::L1).unwrap().value().unwrap();
        let ratio = opt / ceiling;
        if !(0.8..=1.25).contains(&ratio) {
            outside.push((p, ratio));
        }
        p = if p < 2000 { p + 1 } else { p + p / 97 };
    }
    // at p = 3 the ceiling uses ⌈ln 3⌉ = 2, far above ln 3
    assert_eq!(outside.len(), 1, "{outside:?}");
    assert_eq!(outside[0].0, 3);
    assert!((outside[0].1 - 0.742845).abs() < 1e-6);
}

#[test]
fn margin_loss_at_vanishing_rho_is_training_error() {
    let scores = [0.5, -0.2, 0.0, 1e-9, -3.0];
    let labels = [1.0, 1.0, 1.0, -1.0, -1.0];
    // y·h ≤ 0 for points 2, 3, 4
    let tiny = margin_loss(&scores, &labels, 1e-300).unwrap();
    assert_eq!(tiny, 3.0 / 5.0);
}

#[test]
fn moment_exact_matches_monte_carlo() {
    let mut rng = synth::rng(404);
    for i in 0..10 {
        let m = rng.random_range(2..=10);
        let dict = synth::random_dictionary(&mut rng, m, 1).unwrap();
        for r in [2, 4, 6] {
            let exact = check_moment_bound(dict.gram(0), r, MomentMode::Exact).unwrap();
            let mc = check_moment_bound(
                dict.gram(0),
                r,
                MomentMode::MonteCarlo { trials: 50_000, seed: i },
            )
            .unwrap();
            let diff = (exact.result.lhs - mc.result.lhs).abs();
            assert!(
                diff <= 4.0 * mc.stderr + 1e-12 * exact.result.lhs,
                "m {m} r {r}: {} vs {} (se {})",
                exact.result.lhs,
                mc.result.lhs,
                mc.stderr
            );
        }
    }
}

fn blob_model(seed: u64, m: usize, family: Family) -> (Sample, KernelDictionary, Model) {
    let sample = synth::two_blobs(seed, m).unwrap();
    let specs = [
        KernelSpec::gaussian("g0.1", 0.1),
        KernelSpec::gaussian("g1", 1.0),
        KernelSpec::gaussian("g10", 10.0),
    ];
    let dict = build_dictionary(&sample, &specs, CeilingPolicy::FromSample).unwrap();
    let model = train(&sample, &dict, family, &TrainerConfig::default()).unwrap();
    (sample, dict, model)
}

#[test]
fn trainer_golden_run() {
    let (sample, dict, model) = blob_model(42, 60, Family::L1);
    let log = model.trainer_log.as_ref().unwrap();
    assert!(log.objectives.windows(2).all(|w| w[1] <= w[0]), "{:?}", log.objectives);
    assert!(Constraint::L1Simplex.is_feasible(model.mu.values()));
    let scores = kernbound::learner::training_scores(&model, &dict).unwrap();
    let accuracy = 1.0 - kernbound::learner::error_rate(&scores, sample.labels().unwrap()).unwrap();
    assert!(accuracy >= 0.9, "training accuracy {accuracy}");
}

#[test]
fn trainer_objective_monotone_across_seeds() {
    for seed in 0..6 {
        for family in [Family::L1, Family::L2] {
            let (_, _, model) = blob_model(seed, 30, family);
            let log = model.trainer_log.unwrap();
            assert!(log.objectives.windows(2).all(|w| w[1] <= w[0]));
            assert!(family_feasible(family, model.mu.values()));
        }
    }
}

fn family_feasible(family: Family, mu: &[f64]) -> bool {
    match family {
        Family::L1 => Constraint::L1Simplex.is_feasible(mu),
        Family::L2 => Constraint::L2Sphere.is_feasible(mu),
    }
}

#[test]
fn predict_is_linear() {
    let (_, _, mut model) = blob_model(3, 16, Family::L1);
    let mut rng = synth::rng(17);
    let grams: Vec<DMatrix<f64>> = (0..3)
        .map(|_| DMatrix::from_fn(5, 16, |_, _| rng.random_range(-1.0..1.0)))
        .collect();
    let a1 = synth::random_vector(&mut rng, 16);
    let a2 = synth::random_vector(&mut rng, 16);
    let (s, t) = (0.3, -1.7);

    let eval = |model: &mut Model, alpha: &[f64]| {
        model.alpha = alpha.to_vec();
        predict(model, &grams).unwrap()
    };
    let mixed: Vec<f64> = a1.iter().zip(&a2).map(|(x, y)| s * x + t * y).collect();
    let lhs = eval(&mut model, &mixed);
    let (p1, p2) = (eval(&mut model, &a1), eval(&mut model, &a2));
    for i in 0..5 {
        assert!((lhs[i] - (s * p1[i] + t * p2[i])).abs() < 1e-12);
    }

    let mu1 = CombinationWeights::new(vec![0.2, 0.3, 0.5], Constraint::L1Simplex).unwrap();
    let mu2 = CombinationWeights::new(vec![0.6, 0.0, 0.4], Constraint::L1Simplex).unwrap();
    let half = CombinationWeights::new(vec![0.4, 0.15, 0.45], Constraint::L1Simplex).unwrap();
    let eval_mu = |model: &mut Model, mu: &CombinationWeights| {
        model.mu = mu.clone();
        predict(model, &grams).unwrap()
    };
    let mid = eval_mu(&mut model, &half);
    let (q1, q2) = (eval_mu(&mut model, &mu1), eval_mu(&mut model, &mu2));
    for i in 0..5 {
        assert!((mid[i] - 0.5 * (q1[i] + q2[i])).abs() < 1e-12);
    }
}

#[test]
fn model_round_trip_is_bit_exact() {
    let (_, _, model) = blob_model(9, 20, Family::L2);
    let text = serde_json::to_string(&model).unwrap();
    let back: Model = serde_json::from_str(&text).unwrap();
    for (a, b) in back.alpha.iter().zip(&model.alpha) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
    for (a, b) in back.mu.values().iter().zip(model.mu.values()) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
}
