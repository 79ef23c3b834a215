use super::*;
use rand::Rng;
use crate::problem::{make_instance, Family, Objective, Simplex};
use proptest::prelude::*;
use std::sync::Mutex;

fn cone_1d(center: f64) -> ProblemInstance {
    let params = ClassParams::new(1, 1.0, 2.0)
        .unwrap()
        .with_growth(1.0, Exponent::ONE)
        .unwrap();
    ProblemInstance::from_objective(
        Objective::abs_1d(center, 1.0),
        FeasibleSet::interval(-1.0, 1.0).unwrap(),
        params,
        Some(vec![center]),
    )
    .unwrap()
}

fn cone_2d() -> ProblemInstance {
    let params = ClassParams::new(2, 1.0, 1.0)
        .unwrap()
        .with_growth(1.0, Exponent::ONE)
        .unwrap();
    make_instance(Family::Cone, params, FeasibleSet::Simplex(Simplex::canonical(2)), 3).unwrap()
}

#[test]
fn zero_policy_is_exact_at_minimizer() {
    let inst = cone_2d();
    let xs = inst.minimizer.clone().unwrap();
    let fs = inst.optimum.unwrap();
    let mut o = NoisyOracle::exact(inst);
    assert_eq!(o.evaluate(&xs).unwrap(), fs);
    assert_eq!(o.calls(), 1);
}

#[test]
fn planted_points_are_shifted() {
    let inst = cone_1d(0.0);
    let policy = NoisePolicy::AdversarialPlanted {
        delta: 0.05,
        boosted: vec![vec![0.0]],
        suppressed: vec![vec![1.0]],
    };
    let mut o = NoisyOracle::new(inst, policy).unwrap();
    assert_eq!(o.evaluate(&[0.0]).unwrap(), 0.05);
    assert_eq!(o.evaluate(&[1.0]).unwrap(), 1.0 - 0.05);
    assert_eq!(o.evaluate(&[0.5]).unwrap(), 0.5);
    assert_eq!(o.calls(), 3);
}

#[test]
fn sign_policy_lifts_good_points() {
    let inst = cone_1d(0.0);
    let policy = NoisePolicy::AdversarialSign { delta: 0.1, threshold: 0.2 };
    let mut o = NoisyOracle::new(inst, policy).unwrap();
    assert_eq!(o.evaluate(&[0.1]).unwrap(), 0.1 + 0.1);
    assert_eq!(o.evaluate(&[0.5]).unwrap(), 0.5 - 0.1);
}

#[test]
fn points_outside_are_rejected_without_counting() {
    let mut o = NoisyOracle::exact(cone_1d(0.0));
    assert!(matches!(o.evaluate(&[1.5]), Err(Error::OutsideSet(_))));
    assert!(o.evaluate(&[0.0, 0.0]).is_err());
    assert_eq!(o.calls(), 0);
    // The extended path accepts any point.
    assert_eq!(o.evaluate_extended(&[1.5]), 1.5);
    assert_eq!(o.calls(), 1);
}

#[test]
fn negative_delta_is_rejected() {
    let r = NoisyOracle::new(cone_1d(0.0), NoisePolicy::UniformBounded { delta: -0.1, seed: 0 });
    assert!(r.is_err());
}

#[derive(Clone, Default)]
struct Shared(Arc<Mutex<Vec<u8>>>);

impl Write for Shared {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.0.lock().unwrap().write(buf)
    }
    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}

#[test]
fn log_streams_json_lines() {
    let sink = Shared::default();
    let mut o = NoisyOracle::exact(cone_1d(0.25)).with_log(Box::new(sink.clone()));
    o.evaluate(&[0.0]).unwrap();
    o.evaluate(&[1.0]).unwrap();
    let text = String::from_utf8(sink.0.lock().unwrap().clone()).unwrap();
    let lines: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0]["t"], 0);
    assert_eq!(lines[1]["cumulative_calls"], 2);
    assert_eq!(lines[1]["x"][0], 1.0);
    assert_eq!(lines[1]["value"], 0.75);
}

#[test]
fn uniform_noise_replays_from_seed() {
    let run = || {
        let mut o = NoisyOracle::new(cone_1d(0.0), NoisePolicy::UniformBounded { delta: 0.1, seed: 9 }).unwrap();
        (0..50).map(|i| o.evaluate(&[i as f64 / 50.0]).unwrap()).collect::<Vec<_>>()
    };
    assert_eq!(run(), run());
}

#[test]
fn regularizer_examples() {
    // μ = 0 leaves values untouched, noise included.
    let mk = || NoisyOracle::new(cone_2d(), NoisePolicy::UniformBounded { delta: 0.1, seed: 4 }).unwrap();
    let mut plain = mk();
    let mut reg = regularized_oracle(mk(), 0.0, Exponent::TWO).unwrap();
    for x in [[0.1, 0.2], [0.5, 0.5], [0.0, 0.9]] {
        assert_eq!(plain.evaluate(&x).unwrap(), reg.evaluate(&x).unwrap());
    }
    assert_eq!(reg.noise_bound(), 0.1);

    // Vanishing distance term at x*.
    let inst = cone_2d();
    let xs = inst.minimizer.clone().unwrap();
    let mut base = NoisyOracle::exact(inst.clone());
    let mut reg = regularized_oracle(NoisyOracle::exact(inst), 3.0, Exponent::TWO).unwrap();
    assert_eq!(reg.evaluate(&xs).unwrap(), base.evaluate(&xs).unwrap());
    assert_eq!(reg.params().mu, 3.0);
    assert_eq!(reg.params().nu, Exponent::TWO);

    // g = 0, μ = 2, ν = 2, x* = 0, ‖x‖ = 1.
    let params = ClassParams::new(2, 1.0, 1.0).unwrap();
    let zero = ProblemInstance::from_objective(
        Objective::Constant { value: 0.0 },
        FeasibleSet::ball(vec![0.0, 0.0], 1.0).unwrap(),
        params,
        Some(vec![0.0, 0.0]),
    )
    .unwrap();
    let mut reg = regularized_oracle(NoisyOracle::exact(zero), 2.0, Exponent::TWO).unwrap();
    assert!((reg.evaluate(&[0.6, 0.8]).unwrap() - 1.0).abs() <= 1e-15);
}

#[test]
fn regularizer_needs_a_minimizer() {
    let params = ClassParams::new(1, 1.0, 1.0).unwrap();
    let inst = ProblemInstance::from_objective(
        Objective::Constant { value: 1.0 },
        FeasibleSet::interval(0.0, 1.0).unwrap(),
        params,
        None,
    )
    .unwrap();
    assert!(matches!(
        regularized_oracle(NoisyOracle::exact(inst), 1.0, Exponent::TWO),
        Err(Error::UnknownMinimizer)
    ));
}

#[test]
fn sample_count_examples() {
    assert_eq!(mc_sample_count(2, 100, 1.0, 1.0, 0.5, 0.1).unwrap(), 80003);
    assert!(mc_sample_count(1, 1, 1.0, 1.0, 1.0, 0.1).is_err());
    assert!(mc_sample_count(1, 1, 1.0, 1.0, 0.5, 0.0).is_err());
    // Doubling δ divides the leading term by four, up to the ceiling.
    for (n, t, beta, delta) in [(3, 10, 0.2, 0.05), (5, 7, 0.01, 0.3), (1, 1000, 0.9, 0.01)] {
        let base = 1.0 / beta + 1.0;
        let a = mc_sample_count(n, t, 1.0, 1.0, beta, delta).unwrap() as f64 - base;
        let b = mc_sample_count(n, t, 1.0, 1.0, beta, 2.0 * delta).unwrap() as f64 - base;
        assert!((a - 4.0 * b).abs() <= 4.0, "{a} vs {b}");
    }
}

#[test]
fn smoothing_of_affine_function_concentrates() {
    let w = [0.6, -0.8, 0.0];
    let params = ClassParams::new(3, 1.0, 1.0).unwrap();
    let inst = ProblemInstance::from_objective(
        Objective::Affine { weights: w.to_vec(), bias: 0.5 },
        FeasibleSet::cube(3, -1.0, 1.0).unwrap(),
        params,
        None,
    )
    .unwrap();
    let x = [0.9, -0.2, 1.0];
    let gx = 0.6 * 0.9 + 0.8 * 0.2 + 0.5;
    let samples = 100_000u64;
    let cfg = SmoothingConfig { gamma: 0.3, samples, iterations: 1, beta: 0.01, c1c2: 1.0 };
    let tol = 3.0 * cfg.gamma * 1.0 / (samples as f64).sqrt();
    let inst = Arc::new(inst);
    let mut hits = 0;
    for seed in 0..20 {
        let mut s = smoothing_oracle(NoisyOracle::exact(Arc::clone(&inst)), cfg.clone(), seed).unwrap();
        let theta = s.evaluate(&x).unwrap();
        if (theta - gx).abs() <= tol {
            hits += 1;
        }
        assert_eq!(s.calls(), 1);
        assert_eq!(s.base_calls(), samples);
    }
    assert!(hits >= 19, "{hits}/20");
}

#[test]
fn zero_radius_is_plain_averaging() {
    let inst = cone_1d(0.3);
    let cfg = SmoothingConfig { gamma: 0.0, samples: 10, iterations: 1, beta: 0.5, c1c2: 1.0 };
    let mut s = smoothing_oracle(NoisyOracle::exact(inst.clone()), cfg.clone(), 1).unwrap();
    assert_eq!(s.evaluate(&[-0.2]).unwrap(), 0.5);

    // With uniform noise the estimate is the mean of the same noisy stream.
    let policy = NoisePolicy::UniformBounded { delta: 0.2, seed: 5 };
    let mut s = smoothing_oracle(NoisyOracle::new(inst.clone(), policy.clone()).unwrap(), cfg, 1).unwrap();
    let theta = s.evaluate(&[-0.2]).unwrap();
    let mut o = NoisyOracle::new(inst, policy).unwrap();
    let mean = (0..10).map(|_| o.evaluate(&[-0.2]).unwrap()).sum::<f64>() / 10.0;
    assert!((theta - mean).abs() <= 1e-15);
}

#[test]
fn smoothing_flags_too_few_samples() {
    let policy = NoisePolicy::UniformBounded { delta: 0.1, seed: 0 };
    let base = || NoisyOracle::new(cone_1d(0.0), policy.clone()).unwrap();
    let mut cfg = SmoothingConfig::for_accuracy(0.2, 1.0, 100).unwrap();
    assert_eq!(cfg.gamma, 0.1);
    assert!(smoothing_oracle(base(), cfg.clone(), 0).unwrap().below_theory());
    cfg.samples = mc_sample_count(1, 1, 1.0, 1.0, cfg.beta, 0.1).unwrap();
    let s = smoothing_oracle(base(), cfg, 0).unwrap();
    assert!(!s.below_theory());
    // L = 2√n M²/ε = √n M/γ.
    assert!((s.params().smoothness.unwrap() - 2.0 * 1.0 / 0.2).abs() <= 1e-12);
}

fn any_policy() -> impl Strategy<Value = NoisePolicy> {
    (0.0f64..1.0, any::<u64>(), 0usize..4).prop_map(|(delta, seed, kind)| match kind {
        0 => NoisePolicy::Zero,
        1 => NoisePolicy::UniformBounded { delta, seed },
        2 => NoisePolicy::AdversarialSign { delta, threshold: 0.3 },
        _ => NoisePolicy::AdversarialPlanted {
            delta,
            boosted: vec![vec![0.5]],
            suppressed: vec![vec![-0.5], vec![0.0]],
        },
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn noise_stays_within_bound(policy in any_policy(), seed in any::<u64>()) {
        let inst = Arc::new(cone_1d(0.1));
        let delta = policy.delta();
        let mut o = NoisyOracle::new(Arc::clone(&inst), policy).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in 0..10_000u64 {
            let x = if i % 7 == 0 { 0.5 } else { rng.random_range(-1.0..=1.0) };
            let v = o.evaluate(&[x]).unwrap();
            // One rounding of the addition f + ξ.
            prop_assert!((v - inst.value(&[x])).abs() <= delta + 1e-15);
            prop_assert_eq!(o.calls(), i + 1);
        }
    }

    #[test]
    fn regularizer_preserves_noise(mu in 0.0f64..3.0, delta in 0.0f64..0.5, seed in any::<u64>()) {
        let inst = cone_2d();
        let xs = inst.minimizer.clone().unwrap();
        let policy = NoisePolicy::UniformBounded { delta, seed };
        let mut reg = regularized_oracle(NoisyOracle::new(inst.clone(), policy).unwrap(), mu, Exponent::TWO).unwrap();
        prop_assert_eq!(reg.noise_bound(), delta);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..200 {
            let x = inst.set.sample(&mut rng);
            let exact = inst.value(&x) + 0.5 * mu * crate::linalg::dist(&x, &xs).powi(2);
            prop_assert!((reg.evaluate(&x).unwrap() - exact).abs() <= delta + 1e-12);
        }
    }

    #[test]
    fn sample_count_is_monotone(
        n in 1usize..20, t in 1u64..1000, m in 0.1f64..5.0, beta in 0.01f64..0.99, delta in 0.01f64..1.0,
    ) {
        let base = mc_sample_count(n, t, m, 1.0, beta, delta).unwrap();
        prop_assert!(mc_sample_count(n, t, m, 1.0, beta, delta * 1.5).unwrap() <= base);
        prop_assert!(mc_sample_count(n, t, m, 1.0, (beta * 1.01).min(0.995), delta).unwrap() <= base);
        prop_assert!(mc_sample_count(n + 1, t, m, 1.0, beta, delta).unwrap() >= base);
        prop_assert!(mc_sample_count(n, t + 1, m, 1.0, beta, delta).unwrap() >= base);
        prop_assert!(mc_sample_count(n, t, m * 1.2, 1.0, beta, delta).unwrap() >= base);
    }
}
