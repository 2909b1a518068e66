use exlab::cycles::{analytic_q, decompose, estimate_q};
use exlab::kernels::{BuiltinKernel, ChainPath, Init, KernelSpec, Perturbation, TailDistribution};
use exlab::rng::Streams;
use exlab::stats::ks_two_sample;
use proptest::prelude::*;

fn kernel() -> impl Strategy<Value = KernelSpec> {
    (0.05f64..0.95, 0.0f64..0.8, 0.5f64..2.0, 0.5f64..3.0).prop_map(|(rho, p0, a_max, alpha)| {
        KernelSpec::new(
            TailDistribution::with_zero_mass(p0, TailDistribution::point(rho)),
            Perturbation::AdditiveNoise {
                w_law: TailDistribution::pareto(alpha + 1.0),
            },
            a_max,
            TailDistribution::Pareto { alpha, scale: a_max },
        )
    })
}

fn check(path: &ChainPath, threshold: f64) -> std::result::Result<(), TestCaseError> {
    let Ok(d) = decompose(path, threshold) else {
        prop_assert!(!path.atom_flags.iter().any(|&f| f));
        return Ok(());
    };
    prop_assert_eq!(d.renewal_times[0], d.initial_cycle.tau_a + 1);
    for (k, c) in d.cycles.iter().enumerate() {
        prop_assert_eq!(d.renewal_times[k + 1], d.renewal_times[k] + c.tau_a + 1);
        prop_assert_eq!(c.start, d.renewal_times[k]);
    }
    for c in std::iter::once(&d.initial_cycle).chain(&d.cycles) {
        prop_assert!(c.tau_t <= c.tau_a);
        prop_assert!(c.max_extremal <= c.max_value);
        prop_assert!(path.states[c.start + c.tau_a] <= path.atom_upper);
        prop_assert_eq!(c.length, c.tau_a + 1);
    }
    if let Some(q) = d.q_hat {
        prop_assert!(q.value >= 1.0);
        let consumed = d.renewal_times[d.renewal_times.len() - 1] - d.renewal_times[0];
        let total: usize = d.cycles.iter().map(|c| c.length).sum();
        prop_assert_eq!(total, consumed);
        prop_assert!((q.value * d.cycles.len() as f64 - consumed as f64).abs() < 1e-6 * consumed as f64);
    }
    Ok(())
}

proptest! {
    #[test]
    fn decomposition_invariants(k in kernel(), seed in any::<u64>(), n in 1usize..2000, tmul in 1.0f64..50.0) {
        let mut rng = Streams::new(seed).rng("cyc", 0);
        let path = k.simulate_path(Init::FromH, n, &mut rng).unwrap();
        check(&path, k.atom_upper * tmul)?;
    }

    #[test]
    fn arbitrary_paths(states in prop::collection::vec(0.0f64..5.0, 1..200), a_max in 0.1f64..2.0) {
        let path = ChainPath::from_states(states, a_max);
        check(&path, a_max)?;
    }
}

#[test]
fn atom_visit_rate_is_one_over_q() {
    for kind in [BuiltinKernel::DetContract, BuiltinKernel::GeoKill] {
        let k = kind.default_kernel().spec;
        let q = analytic_q(&k).unwrap();
        let n = 1_000_000;
        let mut rng = Streams::new(31).rng("wald", 0);
        let path = k.simulate_path(Init::FromH, n, &mut rng).unwrap();
        let d = decompose(&path, k.atom_upper).unwrap();
        let visits = path.atom_flags.iter().filter(|&&f| f).count() as f64;
        let lens: Vec<f64> = d.cycles.iter().map(|c| c.length as f64).collect();
        let mean = lens.iter().sum::<f64>() / lens.len() as f64;
        let var = lens.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / (lens.len() - 1) as f64;
        // renewal CLT: Var N_n ~ n var / q^3
        let sd = (n as f64 * var / q.powi(3)).sqrt() / n as f64;
        let rate = visits / n as f64;
        assert!((rate - 1.0 / q).abs() < 3.0 * sd, "{}: {rate} vs {}", kind.name(), 1.0 / q);
        let q_hat = d.q_hat.unwrap();
        assert!(q_hat.contains(q), "{}: {q_hat:?} vs {q}", kind.name());
    }
}

#[test]
fn cycle_halves_agree() {
    for kind in [BuiltinKernel::Ar1, BuiltinKernel::LognDrift] {
        let k = kind.default_kernel().spec;
        let mut rng = Streams::new(32).rng("halves", 0);
        let path = k.simulate_path(Init::FromH, 300_000, &mut rng).unwrap();
        let d = decompose(&path, k.atom_upper).unwrap();
        let (a, b) = d.cycles.split_at(d.cycles.len() / 2);
        for f in [|c: &exlab::cycles::CycleRecord| c.length as f64, |c: &exlab::cycles::CycleRecord| c.max_value] {
            let xa: Vec<f64> = a.iter().map(f).collect();
            let xb: Vec<f64> = b.iter().map(f).collect();
            let (_, p) = ks_two_sample(&xa, &xb);
            assert!(p > 0.01, "{}: p = {p}", kind.name());
        }
    }
}

#[test]
fn estimated_q_is_consistent() {
    let k = BuiltinKernel::GeoKill.default_kernel().spec;
    let q = estimate_q(&k, 500_000, &Streams::new(33)).unwrap();
    assert!(q.contains(analytic_q(&k).unwrap()), "{q:?}");
}
