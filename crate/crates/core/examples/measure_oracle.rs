//! The product measure box formula against Monte Carlo integration, and
//! the truncation certificate of the limit sampler.

use exlab::kernels::BuiltinKernel;
use exlab::measure_oracle::{
    certify_delta, nu_box, nu_box_monte_carlo, sup_sample, EmpiricalY, ProductMeasureSpec, TailMoments, YLaw,
    DEFAULT_TRUNCATION_TOLERANCE,
};
use exlab::rng::Streams;

fn main() -> exlab::Result<()> {
    let k = BuiltinKernel::LognDrift.default_kernel();
    let streams = Streams::new(7);
    let sup = sup_sample(&k.spec.z_law, 50_000, &streams)?;
    let spec = ProductMeasureSpec {
        alpha: k.alpha,
        y_law: YLaw::Empirical(EmpiricalY::new(sup, k.alpha)?),
    };
    for (x, y) in [(1.0, 0.5), (2.0, 1.0), (f64::INFINITY, 1.0)] {
        let exact = nu_box(&spec, x, y)?;
        let mc = nu_box_monte_carlo(&spec, x, y, 200_000, &streams)?;
        println!("nu([0, {x}] x ({y}, inf]) = {exact:.5}, monte carlo {:.5} +- {:.1e}", mc.value, mc.half_width());
    }
    let moments = TailMoments::for_law(&k.spec.z_law, k.alpha, 100_000, &streams)?;
    let cert = certify_delta(&moments, k.alpha, 1.0, 3.0, 1.0, 1.0, DEFAULT_TRUNCATION_TOLERANCE)?;
    println!(
        "delta = {:.4} after {} halvings, missed points above 1 at most {:.2e}",
        cert.delta, cert.halvings, cert.bound
    );
    Ok(())
}
