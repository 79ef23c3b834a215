use super::*;
use crate::oracle::{NoisePolicy, NoisyOracle};
use crate::problem::{
    make_instance, sample_unit_sphere, AffinePiece, ClassParams, Exponent, Family, Objective,
    ProblemInstance,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

fn abs_instance(center: f64, a: f64, b: f64) -> ProblemInstance {
    ProblemInstance::from_objective(
        Objective::abs_1d(center, 1.0),
        FeasibleSet::interval(a, b).unwrap(),
        ClassParams::new(1, 1.0, b - a).unwrap(),
        Some(vec![center]),
    )
    .unwrap()
}

fn pwl(seed: u64, m: f64) -> ProblemInstance {
    make_instance(
        Family::PiecewiseLinear,
        ClassParams::new(1, m, 2.0).unwrap(),
        FeasibleSet::interval(-1.0, 1.0).unwrap(),
        seed,
    )
    .unwrap()
}

fn cone_params(n: usize) -> ClassParams {
    ClassParams::new(n, 1.0, 1.0)
        .unwrap()
        .with_growth(1.0, Exponent::ONE)
        .unwrap()
}

#[test]
fn grid_example_abs_shifted() {
    let inst = abs_instance(0.3, -1.0, 1.0);
    let cfg = Grid1DConfig::for_accuracy(-1.0, 1.0, 1.0, 0.2, SafetyMode::Standard).unwrap();
    assert_eq!(cfg.step, 0.1);
    let pts = cfg.points();
    assert_eq!(pts.len(), 21);
    // Brute-force minimum over the grid itself.
    let best = pts.iter().map(|t| (t - 0.3).abs()).fold(f64::INFINITY, f64::min);
    let mut o = NoisyOracle::exact(inst);
    let r = grid_search_1d(&mut o, 1.0, 0.2, &cfg).unwrap();
    assert_eq!(r.calls, 21);
    assert!(r.gap.unwrap() <= 0.1);
    assert!((r.gap.unwrap() - best).abs() <= 1e-15);
}

#[test]
fn constant_function_has_zero_gap_under_any_noise() {
    let inst = Arc::new(
        ProblemInstance::from_objective(
            Objective::Constant { value: 2.0 },
            FeasibleSet::interval(0.0, 1.0).unwrap(),
            ClassParams::new(1, 1.0, 1.0).unwrap(),
            Some(vec![0.5]),
        )
        .unwrap(),
    );
    for policy in [
        NoisePolicy::Zero,
        NoisePolicy::UniformBounded { delta: 0.3, seed: 1 },
        NoisePolicy::AdversarialSign { delta: 0.3, threshold: 0.1 },
    ] {
        let mut o = NoisyOracle::new(Arc::clone(&inst), policy).unwrap();
        let cfg = Grid1DConfig::for_accuracy(0.0, 1.0, 1.0, 0.1, SafetyMode::Safety).unwrap();
        let r = grid_search_1d(&mut o, 1.0, 0.1, &cfg).unwrap();
        assert_eq!(r.gap, Some(0.0));
    }
}

#[test]
fn ties_go_to_lowest_index() {
    let inst = ProblemInstance::from_objective(
        Objective::Constant { value: 0.0 },
        FeasibleSet::interval(0.0, 1.0).unwrap(),
        ClassParams::new(1, 1.0, 1.0).unwrap(),
        None,
    )
    .unwrap();
    let mut o = NoisyOracle::exact(inst);
    let cfg = Grid1DConfig::new(0.0, 1.0, 0.25, SafetyMode::Safety).unwrap();
    let r = grid_search_1d(&mut o, 1.0, 0.5, &cfg).unwrap();
    assert_eq!(r.candidate, vec![0.0]);
    assert_eq!(argmin([3.0, 1.0, 1.0, 2.0]), Some((1, 1.0)));
}

#[test]
fn planted_adversary_matches_enumeration() {
    // Boost x = 0 and suppress x = 1 on f = |x|; 2δ = 0.102 is too small to prefer 1.
    let inst = abs_instance(0.0, -1.0, 1.0);
    let cfg = Grid1DConfig::for_accuracy(-1.0, 1.0, 1.0, 0.2, SafetyMode::Standard).unwrap();
    let delta = 0.051;
    let policy = NoisePolicy::AdversarialPlanted {
        delta,
        boosted: vec![vec![0.0]],
        suppressed: vec![vec![1.0]],
    };
    let noisy: Vec<f64> = cfg
        .points()
        .iter()
        .map(|t| t.abs() + if *t == 0.0 { delta } else if *t == 1.0 { -delta } else { 0.0 })
        .collect();
    let expect = cfg.points()[noisy
        .iter()
        .enumerate()
        .fold(0, |bi, (i, v)| if *v < noisy[bi] { i } else { bi })];
    let mut o = NoisyOracle::new(inst, policy).unwrap();
    let r = grid_search_1d(&mut o, 1.0, 0.2, &cfg).unwrap();
    assert_eq!(r.candidate, vec![expect]);
    assert!(r.gap.unwrap() <= r.bound.unwrap());
}

#[test]
fn empty_interval_is_rejected() {
    assert!(Grid1DConfig::new(1.0, 1.0, 0.1, SafetyMode::Safety).is_err());
    assert!(Grid1DConfig::new(0.0, 1.0, 0.0, SafetyMode::Safety).is_err());
    let mut o = NoisyOracle::exact(abs_instance(0.0, -1.0, 1.0));
    let wide = Grid1DConfig::new(-2.0, 1.0, 0.1, SafetyMode::Safety).unwrap();
    assert!(grid_search_1d(&mut o, 1.0, 0.1, &wide).is_err());
}

#[test]
fn delta_above_mode_cap_is_flagged() {
    let inst = Arc::new(abs_instance(0.0, -1.0, 1.0));
    let cfg = Grid1DConfig::for_accuracy(-1.0, 1.0, 1.0, 0.2, SafetyMode::Safety).unwrap();
    let mut o = NoisyOracle::new(Arc::clone(&inst), NoisePolicy::UniformBounded { delta: 0.06, seed: 0 }).unwrap();
    assert!(grid_search_1d(&mut o, 1.0, 0.2, &cfg).unwrap().has_flag("delta-above-cap"));
    let mut o = NoisyOracle::new(inst, NoisePolicy::UniformBounded { delta: 0.05, seed: 0 }).unwrap();
    assert!(!grid_search_1d(&mut o, 1.0, 0.2, &cfg).unwrap().has_flag("delta-above-cap"));
}

fn abs_separable(n: usize) -> ProblemInstance {
    let abs = vec![AffinePiece::new(1.0, 0.0), AffinePiece::new(-1.0, 0.0)];
    ProblemInstance::from_objective(
        Objective::Separable { terms: vec![abs; n] },
        FeasibleSet::cube(n, -1.0, 1.0).unwrap(),
        ClassParams::new(n, 1.0, 2.0).unwrap(),
        Some(vec![0.0; n]),
    )
    .unwrap()
}

#[test]
fn separable_example_two_abs() {
    let inst = abs_separable(2);
    // Dense 2-D grid as an independent oracle for the optimum.
    let mut brute = f64::INFINITY;
    for i in 0..=400 {
        for j in 0..=400 {
            let x = [-1.0 + i as f64 * 0.005, -1.0 + j as f64 * 0.005];
            brute = brute.min(inst.value(&x));
        }
    }
    for mode in [SafetyMode::Standard, SafetyMode::Safety] {
        let mut o = NoisyOracle::exact(inst.clone());
        let r = grid_search_separable(&mut o, 1.0, 0.4, mode).unwrap();
        let gap = inst.value(&r.candidate) - brute;
        assert!(gap <= 0.4, "{gap}");
        let bound = 2 * ((2.0f64 * 2.0 * 2.0 / 0.4).ceil() as u64 + 1);
        assert!(r.calls <= bound, "{} > {bound}", r.calls);
        assert_eq!(r.per_level_calls.len(), 2);
        assert_eq!(r.per_level_calls.iter().sum::<u64>(), r.calls);
    }
}

#[test]
fn separable_in_one_dimension_is_grid_search() {
    let seed = 5;
    let line = pwl(seed, 1.0);
    let Objective::MaxAffine { pieces } = line.objective.clone() else { unreachable!() };
    let boxed = ProblemInstance::from_objective(
        Objective::Separable { terms: vec![pieces] },
        FeasibleSet::cube(1, -1.0, 1.0).unwrap(),
        ClassParams::new(1, 1.0, 2.0).unwrap(),
        line.minimizer.clone(),
    )
    .unwrap();
    let eps = 0.1;
    for mode in [SafetyMode::Standard, SafetyMode::Safety] {
        let policy = NoisePolicy::UniformBounded { delta: 0.02, seed: 3 };
        let mut a = NoisyOracle::new(boxed.clone(), policy.clone()).unwrap();
        let sep = grid_search_separable(&mut a, 1.0, eps, mode).unwrap();
        let cfg = Grid1DConfig::new(-1.0, 1.0, eps / (mode.factor() * 1.0), mode).unwrap();
        let mut b = NoisyOracle::new(line.clone(), policy).unwrap();
        let one = grid_search_1d(&mut b, 1.0, eps, &cfg).unwrap();
        assert_eq!(sep.candidate, one.candidate);
        assert_eq!(sep.noisy_value, one.noisy_value);
        assert_eq!(sep.calls, one.calls);
    }
}

#[test]
fn separable_quadratic_with_uniform_noise() {
    let n = 3;
    let eps = 0.3;
    let set = FeasibleSet::cube(n, -1.0, 1.0).unwrap();
    let mu = 0.5;
    // Per-coordinate Lipschitz constant of (μ/2)(x_i - c_i)² on [-1, 1].
    let m = mu * 2.0;
    let params = ClassParams::new(n, mu * set.diameter(), 2.0)
        .unwrap()
        .with_growth(mu, Exponent::TWO)
        .unwrap();
    for seed in 0..100 {
        let inst = make_instance(Family::Quadratic, params.clone(), set.clone(), seed).unwrap();
        let policy = NoisePolicy::UniformBounded { delta: eps / (2.0 * n as f64), seed };
        let mut o = NoisyOracle::new(inst, policy).unwrap();
        let r = grid_search_separable(&mut o, m, eps, SafetyMode::Standard).unwrap();
        assert!(r.gap.unwrap() <= 1.5 * eps);
        assert!(r.gap.unwrap() <= r.bound.unwrap() + 1e-12);
    }
}

#[test]
fn separable_rejects_non_boxes() {
    let mut o = NoisyOracle::exact(abs_instance(0.0, -1.0, 1.0));
    assert!(grid_search_separable(&mut o, 1.0, 0.1, SafetyMode::Safety).is_err());
}

/// Dense barycentric grid over the triangle; returns the smallest value found.
fn dense_triangle_min(inst: &ProblemInstance, simplex: &Simplex, step: f64) -> f64 {
    let k = (1.0 / step).round() as usize;
    let mut best = f64::INFINITY;
    for i in 0..=k {
        for j in 0..=(k - i) {
            let x = simplex.combine(&[i as f64 * step, j as f64 * step]);
            best = best.min(inst.value(&x));
        }
    }
    best
}

#[test]
fn simplex_example_distance_to_vertex() {
    let simplex = Simplex::new(vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 0.0]]).unwrap();
    let params = cone_params(2);
    let inst = crate::problem::InstanceSpec::new(Family::Cone, params.clone(), FeasibleSet::Simplex(simplex.clone()), 0)
        .with_minimizer(vec![1.0, 0.0, 0.0])
        .build()
        .unwrap();
    let brute = dense_triangle_min(&inst, &simplex, 1e-3);
    let eps = 0.3;
    let mut o = NoisyOracle::exact(inst.clone());
    let r = simplex_grid_search(&mut o, &SimplexSearchConfig::from_params(&params, eps).unwrap()).unwrap();
    let gap = inst.value(&r.candidate) - brute;
    assert!(gap <= eps, "{gap}");
    assert!(r.flags.is_empty(), "{:?}", r.flags);
}

#[test]
fn localization_length_example() {
    let l = localization_length(0.3, 1.0, 1.0, 2).unwrap();
    assert!((l - 0.8).abs() <= 1e-15, "{l}");
    assert_eq!(localization_length(0.3, 0.0, 1.0, 2), None);
    // ν = ∞ leaves the constant 2² = 4.
    assert_eq!(localization_length(0.3, 1.0, f64::INFINITY, 2), Some(4.0));
}

#[test]
fn vertex_minimizer_needs_few_probes() {
    let n = 4;
    let eps = 2.5;
    let params = cone_params(n);
    let simplex = Simplex::canonical(n);
    let inst = crate::problem::InstanceSpec::new(Family::Cone, params.clone(), FeasibleSet::Simplex(simplex), 0)
        .with_minimizer(vec![0.0; n])
        .build()
        .unwrap();
    let mut o = NoisyOracle::exact(inst);
    let r = simplex_grid_search(&mut o, &SimplexSearchConfig::from_params(&params, eps).unwrap()).unwrap();
    assert!(r.gap.unwrap() <= eps);
    let linear = (n + 1) as f64 * 1.0 / eps;
    assert!((r.calls as f64) <= 8.0 * linear, "{} calls", r.calls);
}

#[test]
fn probe_budget_examples() {
    assert_eq!(probe_budget(3, 2), BigUint::from(15u32));
    for big_n in 1..10 {
        assert_eq!(probe_budget(big_n, 1), BigUint::from(big_n + 2));
    }
    // No silent wrap-around for large arguments.
    let huge = probe_budget(1000, 60);
    assert!(huge > BigUint::from(u128::MAX));
}

fn nested_sum(big_n: u64, depth: u64, from: u64) -> u64 {
    if depth == 0 {
        return 1;
    }
    (from..=big_n + 1).map(|i| nested_sum(big_n, depth - 1, i)).sum()
}

#[test]
fn probe_budget_matches_nested_sums() {
    for big_n in 1..=6 {
        for n in 1..=4 {
            assert_eq!(probe_budget(big_n, n), BigUint::from(nested_sum(big_n, n, 0)));
        }
    }
}

#[test]
fn simplex_flags() {
    let n = 2;
    let inst = make_instance(Family::Cone, cone_params(n), FeasibleSet::Simplex(Simplex::canonical(n)), 1).unwrap();
    let eps = 0.3;
    let over = NoisePolicy::UniformBounded { delta: 0.2, seed: 0 };
    let mut o = NoisyOracle::new(inst.clone(), over).unwrap();
    let cfg = SimplexSearchConfig::new(eps, 1.0, 1.0, 1.0).unwrap();
    assert!(simplex_grid_search(&mut o, &cfg).unwrap().has_flag("delta-above-cap"));

    let mut o = NoisyOracle::exact(inst.clone());
    let r = simplex_grid_search(&mut o, &SimplexSearchConfig::new(eps, 1.0, 1.0, 2.0).unwrap()).unwrap();
    assert!(r.has_flag("pruning-disabled-nu"));
    assert_eq!(r.simplex.unwrap().pruned_probes, 0);

    let mut o = NoisyOracle::exact(inst);
    let r = simplex_grid_search(&mut o, &SimplexSearchConfig::new(eps, 1.0, 0.0, 1.0).unwrap()).unwrap();
    assert!(r.has_flag("localization-disabled-mu-zero"));
}

#[test]
fn simplex_search_rejects_other_sets() {
    let mut o = NoisyOracle::exact(abs_instance(0.0, -1.0, 1.0));
    let cfg = SimplexSearchConfig::new(0.1, 1.0, 1.0, 1.0).unwrap();
    assert!(simplex_grid_search(&mut o, &cfg).is_err());
}

/// A random simplex with `‖p_i‖ = 1` and `p_{n+1} = 0`.
fn unit_simplex(n: usize, seed: u64) -> Simplex {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let mut v: Vec<Vec<f64>> = (0..n).map(|_| sample_unit_sphere(n, &mut rng)).collect();
        v.push(vec![0.0; n]);
        if let Ok(s) = Simplex::new(v) {
            // Keep the conditioning reasonable.
            if s.diameter() < 1.9 {
                return s;
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn grid_is_well_formed(a in -5.0f64..5.0, len in 0.01f64..10.0, step in 0.001f64..3.0) {
        let b = a + len;
        let cfg = Grid1DConfig::new(a, b, step, SafetyMode::Safety).unwrap();
        let pts = cfg.points();
        prop_assert_eq!(pts[0], a);
        prop_assert_eq!(*pts.last().unwrap(), b);
        prop_assert!(pts.len() as f64 <= (len / cfg.step).ceil() + 1.0);
        for w in pts.windows(2) {
            prop_assert!(w[1] > w[0]);
            prop_assert!(w[1] - w[0] <= cfg.step * (1.0 + 1e-9));
        }
    }

    #[test]
    fn grid_guarantee_holds(seed in any::<u64>(), rel in 0.0f64..0.5, kind in 0usize..3, standard in any::<bool>()) {
        let m = 1.3;
        let inst = Arc::new(pwl(seed, m));
        let eps = 0.2;
        let delta = rel * eps;
        let mode = if standard { SafetyMode::Standard } else { SafetyMode::Safety };
        let cfg = Grid1DConfig::for_accuracy(-1.0, 1.0, m, eps, mode).unwrap();
        let pts = cfg.points();
        let policy = match kind {
            0 => NoisePolicy::UniformBounded { delta, seed },
            1 => NoisePolicy::AdversarialSign { delta, threshold: eps },
            _ => NoisePolicy::AdversarialPlanted {
                delta,
                boosted: pts.iter().skip(1).map(|p| vec![*p]).collect(),
                suppressed: vec![vec![pts[seed as usize % pts.len()]]],
            },
        };
        let mut o = NoisyOracle::new(Arc::clone(&inst), policy).unwrap();
        let r = grid_search_1d(&mut o, m, eps, &cfg).unwrap();
        prop_assert!(r.gap.unwrap() <= m * cfg.step + 2.0 * delta + 1e-12);
        prop_assert!(r.calls as f64 <= (2.0 / cfg.step).ceil() + 1.0);
        prop_assert_eq!(r.calls, o.calls());
    }

    #[test]
    fn simplex_invariants(seed in any::<u64>(), n in 1usize..4, rel in 0.0f64..1.0, eps in 0.3f64..0.8) {
        let simplex = unit_simplex(n, seed);
        let params = cone_params(n);
        let inst = Arc::new(make_instance(Family::Cone, params.clone(), FeasibleSet::Simplex(simplex), seed).unwrap());
        let delta = rel * eps / (n + 1) as f64;
        let policy = NoisePolicy::UniformBounded { delta, seed };
        let cfg = SimplexSearchConfig::from_params(&params, eps).unwrap();

        // The checked evaluation path rejects any point outside the simplex.
        let mut pruned = NoisyOracle::new(Arc::clone(&inst), policy.clone()).unwrap();
        let r = simplex_grid_search(&mut pruned, &cfg).unwrap();
        let diag = r.simplex.clone().unwrap();
        prop_assert_eq!(r.calls, pruned.calls());
        prop_assert_eq!(r.per_level_calls[0] + diag.pruned_probes, r.calls);
        let quantum = eps / (n + 1) as f64;
        for (j, b) in diag.level_noise_budget.iter().enumerate() {
            prop_assert_eq!(*b, (j + 1) as f64 * quantum);
        }
        prop_assert!(diag.max_warm_start_shift <= quantum / params.lipschitz + 1e-12);
        prop_assert!(diag.warm_start_bound == quantum / params.lipschitz);

        let mut full = NoisyOracle::new(Arc::clone(&inst), policy).unwrap();
        let u = simplex_grid_search(&mut full, &cfg.clone().without_pruning()).unwrap();
        prop_assert!(r.calls <= u.calls, "pruned {} > unpruned {}", r.calls, u.calls);
        prop_assert!(u.calls as f64 <= diag.probe_budget.parse::<f64>().unwrap());
    }
}
