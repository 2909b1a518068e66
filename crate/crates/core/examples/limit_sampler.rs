//! Samples the cluster Poisson limit and its cluster sizes.

use exlab::kernels::BuiltinKernel;
use exlab::measure_oracle::TailMoments;
use exlab::point_process::{cluster_size_distribution, sample_limit, LimitMode, LimitProcess, Window};
use exlab::rng::Streams;

fn main() -> exlab::Result<()> {
    let k = BuiltinKernel::LognDrift.default_kernel();
    let lp = LimitProcess::new(k.alpha, 3.0, k.spec.z_law.clone());
    let moments = TailMoments::for_law(&lp.g, lp.alpha, 100_000, &Streams::new(4))?;
    let window = Window::new(100.0, 0.5);
    let mut rng = Streams::new(4).rng("example", 0);
    let s = sample_limit(&lp, window, 0.5, LimitMode::EtaApprox { level: 1.0 }, Some(&moments), &mut rng)?;
    let cert = s.certificate.expect("approximate mode certifies delta");
    println!(
        "{} stacks, {} points; delta = {:.4} missing at most {:.2e} points above 1",
        s.stacks.len(),
        s.pattern.len(),
        cert.delta,
        cert.bound
    );
    let sizes = cluster_size_distribution(&s.pattern, 1.0, 0.0)?;
    println!("cluster sizes above 1: mean {:.3}", sizes.mean());
    for (size, count) in sizes.histogram.iter().enumerate().skip(1).take(6) {
        println!("  {size}: {count}");
    }
    Ok(())
}
