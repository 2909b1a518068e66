//! Limit constants c and theta, in closed form and by simulation.

use exlab::cycles::estimate_q;
use exlab::kernels::BuiltinKernel;
use exlab::rng::Streams;
use exlab::tail_chain::{constant_c, extremal_index, DEFAULT_HORIZON};

fn main() -> exlab::Result<()> {
    let streams = Streams::new(2);
    for kind in [BuiltinKernel::DetContract, BuiltinKernel::GeoKill, BuiltinKernel::LognDrift] {
        let k = kind.default_kernel();
        let q = estimate_q(&k.spec, 1_000_000, &streams)?;
        let c = constant_c(&k.spec.z_law, k.alpha, DEFAULT_HORIZON, 100_000, &streams)?.with_q(q);
        let (stationary, regenerative) = extremal_index(&c)?;
        println!(
            "{:<13} c = {:.4}  E sup^a = {:.4}  q = {:.3}  theta = {:.4} / {:.4}  ({})",
            kind.name(),
            c.c.value,
            c.e_sup_alpha.value,
            q.value,
            stationary.value,
            regenerative.value,
            if c.is_analytic() { "analytic" } else { "monte carlo" },
        );
    }
    Ok(())
}
