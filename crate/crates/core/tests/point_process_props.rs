use exlab::kernels::{BuiltinKernel, TailDistribution};
use exlab::point_process::{
    box_count, cluster_size_distribution, compare_patterns, simulate_nn, LimitProcess, PatternKind, PointPattern,
    Verdict, Window,
};
use exlab::rng::Streams;
use exlab::stats::chi_square_homogeneity;
use proptest::prelude::*;

fn multiplier() -> impl Strategy<Value = TailDistribution> {
    prop_oneof![
        (0.0f64..1.0, 0.05f64..1.0).prop_map(|(p, r)| TailDistribution::with_zero_mass(p, TailDistribution::point(r))),
        (-1.0f64..-0.1, 0.1f64..0.8).prop_map(|(m, s)| TailDistribution::lognormal(m, s)),
    ]
}

fn counts(reps: &[PointPattern], s_lo: f64, s_hi: f64, a: f64) -> Vec<usize> {
    reps.iter()
        .map(|p| p.points.iter().filter(|x| x.time > s_lo && x.time <= s_hi && x.mark > a).count())
        .collect()
}

proptest! {
    #[test]
    fn limit_patterns_stay_in_window(
        g in multiplier(),
        alpha in 0.5f64..3.0,
        s_max in 0.1f64..5.0,
        delta in 0.05f64..2.0,
        floor_frac in 0.1f64..1.0,
        seed in any::<u64>(),
    ) {
        let lp = LimitProcess::new(alpha, 2.0, g);
        let window = Window::new(s_max, delta * floor_frac);
        let mut rng = Streams::new(seed).rng("pp", 0);
        let sample = lp.sample_eta_delta(window, delta, &mut rng).unwrap();
        for p in &sample.pattern.points {
            prop_assert!(p.mark > window.mark_floor);
            prop_assert!(p.time >= 0.0 && p.time <= s_max);
        }
        for s in &sample.stacks {
            prop_assert!(s.seed_mark > delta);
            if s.seed_mark > window.mark_floor {
                prop_assert_eq!(s.marks[0], s.seed_mark);
            }
        }
        let sizes = cluster_size_distribution(&sample.pattern, window.mark_floor, 0.0).unwrap();
        prop_assert_eq!(sizes.histogram.iter().enumerate().map(|(k, c)| k as u64 * c).sum::<u64>(), sample.pattern.len() as u64);
    }

    #[test]
    fn box_counts_are_monotone(seed in any::<u64>(), s1 in 0.0f64..1.0, s2 in 0.0f64..1.0, a1 in 1.0f64..8.0, a2 in 1.0f64..8.0) {
        let lp = LimitProcess::new(1.0, 1.5, TailDistribution::point(0.6));
        let window = Window::new(1.0, 1.0);
        let mut rng = Streams::new(seed).rng("pp", 1);
        let p = lp.sample_eta_delta(window, 1.0, &mut rng).unwrap().pattern;
        let (s_lo, s_hi) = (s1.min(s2), s1.max(s2));
        let (a_lo, a_hi) = (a1.min(a2), a1.max(a2));
        prop_assert!(box_count(&p, s_lo, a_hi).unwrap() <= box_count(&p, s_hi, a_lo).unwrap());
    }

    #[test]
    fn empirical_pattern_marks_above_floor(seed in any::<u64>(), n in 10usize..3000, floor in 0.2f64..3.0) {
        let k = BuiltinKernel::Ar1.default_kernel();
        let window = Window::new(1.0, floor);
        let mut rng = Streams::new(seed).rng("nn", 0);
        let p = simulate_nn(&k.spec, n, n as f64, window, &mut rng).unwrap();
        for x in &p.points {
            prop_assert!(x.mark > floor && x.time > 0.0 && x.time <= 1.0);
        }
        let gap0 = cluster_size_distribution(&p, floor, 0.0).unwrap();
        prop_assert_eq!(gap0.n_clusters as usize, p.len());
    }
}

#[test]
fn killed_chain_gives_poisson_counts() {
    let lp = LimitProcess::new(1.0, 2.0, TailDistribution::point(0.0));
    let window = Window::new(1.0, 1.0);
    let streams = Streams::new(41);
    let reps: Vec<PointPattern> = streams.map("poisson", 10_000, |_, rng| {
        lp.sample_eta_delta(window, 1.0, rng).unwrap().pattern
    });
    let first = counts(&reps, -1.0, 0.5, 1.0);
    let second = counts(&reps, 0.5, 1.0, 1.0);
    let n = reps.len() as f64;
    for c in [&first, &second] {
        let mean = c.iter().sum::<usize>() as f64 / n;
        let var = c.iter().map(|&x| (x as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let dispersion = var / mean;
        // Var of the dispersion index of a Poisson sample is about 2 / (n - 1)
        assert!((dispersion - 1.0).abs() < 3.0 * (2.0 / (n - 1.0)).sqrt(), "dispersion {dispersion}");
    }
    let m1 = first.iter().sum::<usize>() as f64 / n;
    let m2 = second.iter().sum::<usize>() as f64 / n;
    let cov = first
        .iter()
        .zip(&second)
        .map(|(&a, &b)| (a as f64 - m1) * (b as f64 - m2))
        .sum::<f64>()
        / (n - 1.0);
    let corr = cov / (m1 * m2).sqrt();
    assert!(corr.abs() < 3.0 / n.sqrt(), "corr {corr}");
    let sizes = cluster_size_distribution(&reps[0], 1.0, 0.0).unwrap();
    assert!(sizes.histogram.iter().skip(2).all(|&c| c == 0));
}

#[test]
fn same_sampler_is_consistent() {
    let lp = LimitProcess::new(1.0, 3.0, TailDistribution::with_zero_mass(0.3, TailDistribution::point(0.8)));
    let window = Window::new(1.0, 1.0);
    let a: Vec<PointPattern> = Streams::new(42).map("a", 1000, |_, rng| lp.sample_eta_delta(window, 1.0, rng).unwrap().pattern);
    let b: Vec<PointPattern> = Streams::new(43).map("b", 1000, |_, rng| lp.sample_eta_delta(window, 1.0, rng).unwrap().pattern);
    let boxes = [(0.5, 1.0), (1.0, 1.0), (1.0, 2.0)];
    assert_eq!(compare_patterns(&a, &b, &boxes).unwrap().verdict, Verdict::Consistent);
}

#[test]
fn superposition_matches_direct_restriction() {
    let lp = LimitProcess::new(1.5, 2.0, TailDistribution::lognormal(-0.7, 0.5));
    let (delta, delta2) = (1.0, 0.4);
    let window = Window::new(1.0, delta2);
    let merged: Vec<PointPattern> = Streams::new(44).map("merged", 2000, |_, rng| {
        let mut stacks = lp.stacks_between(1.0, delta, f64::INFINITY, delta2, rng).unwrap();
        stacks.extend(lp.stacks_between(1.0, delta2, delta, delta2, rng).unwrap());
        lp.pattern_from_stacks(&stacks, window, PatternKind::LimitEtaDelta, delta2)
    });
    let direct: Vec<PointPattern> = Streams::new(45).map("direct", 2000, |_, rng| {
        lp.sample_eta_delta(window, delta2, rng).unwrap().pattern
    });
    let boxes = [(0.5, 0.4), (1.0, 0.4), (1.0, 0.8), (1.0, 2.0)];
    let r = compare_patterns(&merged, &direct, &boxes).unwrap();
    assert_eq!(r.verdict, Verdict::Consistent, "{r:?}");
}

#[test]
fn level_scaling_matches_time_scaling() {
    // count in [0, 1] x (2a, inf] has the law of the count in [0, 2^-alpha] x (a, inf]
    let alpha = 1.0;
    let lp = LimitProcess::new(alpha, 2.5, TailDistribution::point(0.6));
    let window = Window::new(1.0, 1.0);
    let reps: Vec<PointPattern> = Streams::new(46).map("scale", 4000, |_, rng| {
        lp.sample_eta_delta(window, 1.0, rng).unwrap().pattern
    });
    let (a, b) = reps.split_at(2000);
    for level in [1.0, 1.5] {
        let high = counts(a, -1.0, 1.0, 2.0 * level);
        let low = counts(b, -1.0, 2f64.powf(-alpha), level);
        let t = chi_square_homogeneity(&high, &low).unwrap();
        assert!(t.p_value > 0.01, "level {level}: {t:?}");
    }
}

#[test]
fn adjacent_windows_are_exchangeable() {
    let lp = LimitProcess::new(2.0, 3.0, TailDistribution::lognormal(-0.5, 0.4));
    let window = Window::new(1.0, 0.5);
    let reps: Vec<PointPattern> = Streams::new(47).map("exch", 4000, |_, rng| {
        lp.sample_eta_delta(window, 0.5, rng).unwrap().pattern
    });
    let first = counts(&reps[..2000], -1.0, 0.5, 0.5);
    let second = counts(&reps[2000..], 0.5, 1.0, 0.5);
    let t = chi_square_homogeneity(&first, &second).unwrap();
    assert!(t.p_value > 0.01, "{t:?}");
}
