use exlab::diagnostics::{run_all, ConditionId, ConditionReport, DiagnosticsConfig};
use exlab::kernels::{BuiltinKernel, ScalingFunction};
use exlab::rng::Streams;
use exlab::tail_chain::{check_transience, sup_statistics, DEFAULT_HORIZON};

fn reports() -> Vec<(BuiltinKernel, Vec<ConditionReport>)> {
    let cfg = DiagnosticsConfig {
        n_reps: 4000,
        ..DiagnosticsConfig::default()
    };
    BuiltinKernel::ALL
        .iter()
        .map(|&kind| {
            let k = kind.default_kernel();
            let b = ScalingFunction::pareto(k.alpha, k.spec.atom_upper);
            (kind, run_all(&k.spec, k.alpha, &b, &cfg, &Streams::new(61)).unwrap())
        })
        .collect()
}

fn verdict(rs: &[ConditionReport], id: ConditionId) -> bool {
    rs.iter().find(|r| r.condition_id == id).unwrap().passed()
}

#[test]
fn suite_properties() {
    let all = reports();
    for (kind, rs) in &all {
        let k = kind.default_kernel();
        for r in rs {
            assert_eq!(r.grid.len(), r.estimates.len());
            for e in &r.estimates {
                assert!(e.value.is_finite() && e.value >= 0.0, "{} {}: {e:?}", kind.name(), r.condition_id.name());
            }
        }
        if verdict(rs, ConditionId::DriftBack) {
            let mut rng = Streams::new(62).rng("transience", 0);
            let t = check_transience(&k.spec.z_law, k.alpha, 10_000, &mut rng).unwrap();
            assert!(t.is_transient(), "{}", kind.name());
        }
        if verdict(rs, ConditionId::MomentUniform) && verdict(rs, ConditionId::DriftBack) {
            let s = sup_statistics(&k.spec.z_law, k.alpha, DEFAULT_HORIZON, 20_000, &Streams::new(63)).unwrap();
            assert!(s.e_sup_alpha.value.is_finite() && s.horizon_check.stable, "{}", kind.name());
        }
        if k.spec.g_zero() == 0.0 && verdict(rs, ConditionId::DriftAwayZ) {
            assert!(verdict(rs, ConditionId::DriftBack), "{}", kind.name());
            assert!(verdict(rs, ConditionId::WithinCycle), "{}", kind.name());
        }
    }
    let anchor = &all.iter().find(|(k, _)| *k == BuiltinKernel::ConstFail).unwrap().1;
    assert!(!verdict(anchor, ConditionId::DriftBack));
    let pass = &all.iter().find(|(k, _)| *k == BuiltinKernel::Ar1).unwrap().1;
    assert!(pass.iter().all(|r| r.passed()));
}
