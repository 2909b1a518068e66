//! Runs every condition checker on a passing and a failing kernel.

use exlab::diagnostics::{format_table, run_all, DiagnosticsConfig};
use exlab::kernels::{BuiltinKernel, ScalingFunction};
use exlab::rng::Streams;

fn main() -> exlab::Result<()> {
    let cfg = DiagnosticsConfig {
        n_reps: 4000,
        ..DiagnosticsConfig::default()
    };
    for kind in [BuiltinKernel::Ar1, BuiltinKernel::ConstFail] {
        let k = kind.default_kernel();
        let b = ScalingFunction::pareto(k.alpha, k.spec.atom_upper);
        let reports = run_all(&k.spec, k.alpha, &b, &cfg, &Streams::new(6))?;
        println!("{}", kind.name());
        print!("{}", format_table(&reports, false));
    }
    Ok(())
}
