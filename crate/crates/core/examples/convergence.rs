//! Compares the exceedance process of a chain with its limit, and the law
//! of the maximum with the Rootzen limit.

use exlab::cycles::{analytic_q, max_distribution_check};
use exlab::kernels::{BuiltinKernel, ScalingFunction};
use exlab::point_process::{compare_patterns, simulate_nn, LimitProcess, PointPattern, Window};
use exlab::rng::Streams;
use exlab::stats::Estimate;
use exlab::tail_chain::{constant_c, DEFAULT_HORIZON};

fn main() -> exlab::Result<()> {
    let k = BuiltinKernel::GeoKill.default_kernel();
    let (n, reps) = (20_000, 600);
    let streams = Streams::new(5);
    let b = ScalingFunction::pareto(k.alpha, k.spec.atom_upper);
    let window = Window::new(1.0, 1.0);
    let b_n = b.b(n as f64);
    let emp: Vec<PointPattern> = streams
        .map("nn", reps, |_, rng| simulate_nn(&k.spec, n, b_n, window, rng))
        .into_iter()
        .collect::<exlab::Result<_>>()?;
    let q = analytic_q(&k.spec).unwrap();
    let boxes = [(0.5, 1.0), (1.0, 1.0), (1.0, 2.0), (1.0, 4.0)];
    for (label, q_used) in [("correct q", q), ("q halved", q / 2.0)] {
        let lp = LimitProcess::new(k.alpha, q_used, k.spec.z_law.clone());
        let lim: Vec<PointPattern> = streams
            .map(label, reps, |_, rng| lp.sample_eta_delta(window, 1.0, rng).map(|s| s.pattern))
            .into_iter()
            .collect::<exlab::Result<_>>()?;
        let r = compare_patterns(&emp, &lim, &boxes)?;
        println!("{label:<10} {:?} (min p = {:.2e})", r.verdict, r.min_p_value);
    }
    let constants = constant_c(&k.spec.z_law, k.alpha, DEFAULT_HORIZON, 0, &streams)?.with_q(Estimate::exact(q));
    let m = max_distribution_check(&k.spec, &b, n, &[0.5, 1.0, 2.0, 4.0], reps, &constants, &streams)?;
    for row in &m.rows {
        println!("  P[M_n <= {} b_n] = {:.3}, limit {:.3}", row.x, row.empirical.value, row.limit);
    }
    Ok(())
}
