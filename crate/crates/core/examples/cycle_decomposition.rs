//! Regenerative cycles and the tail constant of the cycle maximum.

use exlab::cycles::{analytic_q, cycle_max_tail_fit, decompose};
use exlab::kernels::{BuiltinKernel, Init, ScalingFunction};
use exlab::rng::Streams;

fn main() -> exlab::Result<()> {
    let k = BuiltinKernel::GeoKill.default_kernel();
    let mut rng = Streams::new(3).rng("example", 0);
    let path = k.spec.simulate_path(Init::FromH, 2_000_000, &mut rng)?;
    let d = decompose(&path, k.spec.atom_upper)?;
    let q = d.q_hat.expect("complete cycles");
    println!(
        "{} cycles, q_hat = {:.4} [{:.4}, {:.4}], analytic q = {:.4}",
        d.cycles.len(),
        q.value,
        q.ci_low,
        q.ci_high,
        analytic_q(&k.spec).unwrap()
    );
    let b = ScalingFunction::pareto(k.alpha, k.spec.atom_upper);
    let fit = cycle_max_tail_fit(&d, &b, k.alpha, &[1e2, 1e3, 1e4], &[0.5, 1.0, 2.0, 4.0])?;
    for row in &fit.rows {
        let c = row.full_cycle.c_hat;
        println!("  t = {:>6}: c_hat = {:.3} [{:.3}, {:.3}]", row.t, c.value, c.ci_low, c.ci_high);
    }
    Ok(())
}
