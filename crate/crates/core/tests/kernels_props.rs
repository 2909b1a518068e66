use exlab::cycles::decompose;
use exlab::kernels::{BuiltinKernel, Init, KernelSpec, Perturbation, ScalingFunction, TailDistribution};
use exlab::rng::Streams;
use exlab::stats::{kolmogorov_sf, ks_distance, lag1_autocorrelation};
use proptest::prelude::*;

fn law() -> impl Strategy<Value = TailDistribution> {
    prop_oneof![
        (0.2f64..5.0).prop_map(TailDistribution::pareto),
        (0.0f64..3.0).prop_map(TailDistribution::point),
        (-2.0f64..1.0, 0.05f64..2.0).prop_map(|(m, s)| TailDistribution::lognormal(m, s)),
        (0.0f64..1.0, 0.0f64..2.0).prop_map(|(p, r)| TailDistribution::with_zero_mass(p, TailDistribution::point(r))),
    ]
}

fn small_kernel() -> impl Strategy<Value = KernelSpec> {
    (
        0.05f64..0.95,
        0.0f64..0.9,
        0.5f64..3.0,
        0.5f64..4.0,
        any::<bool>(),
    )
        .prop_map(|(rho, p0, a_max, alpha, noisy)| {
            let phi = if noisy {
                Perturbation::AdditiveNoise {
                    w_law: TailDistribution::Pareto {
                        alpha: alpha + 1.0,
                        scale: 0.5,
                    },
                }
            } else {
                Perturbation::Zero
            };
            KernelSpec::new(
                TailDistribution::with_zero_mass(p0, TailDistribution::point(rho)),
                phi,
                a_max,
                TailDistribution::Pareto { alpha, scale: a_max },
            )
        })
}

proptest! {
    #[test]
    fn pareto_quantile_matches_power(alpha in 0.2f64..5.0, log_t in 0.5f64..18.0) {
        let t = log_t.exp();
        let q = TailDistribution::pareto(alpha).quantile(1.0 - 1.0 / t);
        let want = t.powf(1.0 / alpha);
        prop_assert!((q - want).abs() <= 1e-6 * want, "{q} vs {want}");
    }

    #[test]
    fn samples_are_nonnegative(g in law(), seed in any::<u64>()) {
        let mut rng = Streams::new(seed).rng("law", 0);
        for _ in 0..200 {
            let x = g.sample(&mut rng);
            prop_assert!(x >= 0.0);
        }
    }

    #[test]
    fn zero_mass_is_reported(p in 0.0f64..1.0, r in 0.1f64..2.0) {
        let g = TailDistribution::with_zero_mass(p, TailDistribution::point(r));
        prop_assert_eq!(g.point_mass_at_zero(), p);
        prop_assert_eq!(TailDistribution::lognormal(0.0, 1.0).point_mass_at_zero(), 0.0);
    }

    #[test]
    fn scaling_is_nondecreasing(alpha in 0.2f64..5.0, t1 in 1.0f64..1e6, dt in 0.0f64..1e6) {
        let b = ScalingFunction::pareto(alpha, 1.0);
        prop_assert!(b.b(t1 + dt) >= b.b(t1));
    }

    #[test]
    fn path_flags_match_atom(k in small_kernel(), seed in any::<u64>()) {
        let mut rng = Streams::new(seed).rng("path", 0);
        let path = k.simulate_path(Init::FromH, 500, &mut rng).unwrap();
        prop_assert_eq!(path.states.len(), 501);
        for (x, f) in path.states.iter().zip(&path.atom_flags) {
            prop_assert!(*x >= 0.0);
            prop_assert_eq!(*f, *x <= k.atom_upper);
        }
    }

    #[test]
    fn same_seed_same_path(k in small_kernel(), seed in any::<u64>()) {
        let a = k.simulate_path(Init::FromH, 300, &mut Streams::new(seed).rng("p", 0)).unwrap();
        let b = k.simulate_path(Init::FromH, 300, &mut Streams::new(seed).rng("p", 0)).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn update_ratio_has_law_of_z(rho in 0.05f64..2.0, p0 in 0.0f64..1.0, x in 1.5f64..1e6, seed in any::<u64>()) {
        let k = KernelSpec::new(
            TailDistribution::with_zero_mass(p0, TailDistribution::point(rho)),
            Perturbation::Zero,
            1.0,
            TailDistribution::pareto(1.0),
        );
        let mut rng = Streams::new(seed).rng("step", 0);
        for _ in 0..50 {
            let r = k.step(x, &mut rng) / x;
            prop_assert!(r == 0.0 || (r - rho).abs() <= 1e-12 * rho, "{r}");
        }
    }
}

#[test]
fn atom_visits_regenerate_from_h() {
    let k = BuiltinKernel::Ar1.default_kernel().spec;
    let mut rng = Streams::new(11).rng("atom", 0);
    let path = k.simulate_path(Init::FromH, 60_000, &mut rng).unwrap();
    let mut next: Vec<f64> = path
        .states
        .windows(2)
        .filter(|w| w[0] <= k.atom_upper)
        .map(|w| w[1])
        .collect();
    assert!(next.len() >= 10_000, "{} visits", next.len());
    next.sort_by(f64::total_cmp);
    let d = ks_distance(&next, |x| k.h_return.cdf(x), |x| k.h_return.cdf_left(x));
    let p = kolmogorov_sf((next.len() as f64).sqrt() * d);
    assert!(p > 0.01, "KS p = {p}");
}

#[test]
fn consecutive_cycles_are_uncorrelated() {
    for kind in [BuiltinKernel::Ar1, BuiltinKernel::GeoKill, BuiltinKernel::LognDrift] {
        let k = kind.default_kernel().spec;
        let mut rng = Streams::new(12).rng("cycles", 0);
        let path = k.simulate_path(Init::FromH, 200_000, &mut rng).unwrap();
        let d = decompose(&path, k.atom_upper).unwrap();
        let n = d.cycles.len() as f64;
        let lengths: Vec<f64> = d.cycles.iter().map(|c| c.length as f64).collect();
        let maxima: Vec<f64> = d.cycles.iter().map(|c| c.max_value.ln()).collect();
        for (name, xs) in [("length", &lengths), ("max", &maxima)] {
            let r = lag1_autocorrelation(xs);
            assert!(r.abs() < 3.0 / n.sqrt(), "{} {name}: lag-1 {r}", kind.name());
        }
    }
}

#[test]
fn builtin_kernels_are_in_the_domain_of_attraction() {
    for kind in BuiltinKernel::ALL {
        let k = kind.default_kernel().spec;
        let mut rng = Streams::new(13).rng("doa", 0);
        let r = k.check_domain_of_attraction(&[1e2, 1e4, 1e6], 1.0, 20_000, &mut rng).unwrap();
        assert!(r.consistent, "{}: {:?}", kind.name(), r.rows.last());
    }
}

#[test]
fn proportional_noise_leaves_the_domain() {
    let k = KernelSpec::new(
        TailDistribution::point(0.5),
        Perturbation::Proportional {
            w_law: TailDistribution::point(0.25),
        },
        1.0,
        TailDistribution::pareto(1.0),
    );
    let mut rng = Streams::new(14).rng("doa", 0);
    let r = k.check_domain_of_attraction(&[1e2, 1e4], 1.0, 20_000, &mut rng).unwrap();
    assert!(!r.consistent);
}
