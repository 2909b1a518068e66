use exlab::measure_oracle::{mu_cylinder, nu_alpha_mass, nu_box, EmpiricalY, Interval, ProductMeasureSpec, YLaw};
use exlab::kernels::TailDistribution;
use exlab::rng::Streams;
use proptest::prelude::*;

fn spec() -> impl Strategy<Value = ProductMeasureSpec> {
    prop_oneof![
        (0.3f64..4.0, 0.0f64..3.0).prop_map(|(a, v)| ProductMeasureSpec::deterministic(a, v)),
        (0.3f64..4.0, prop::collection::vec(0.0f64..5.0, 1..100)).prop_map(|(a, vals)| ProductMeasureSpec {
            alpha: a,
            y_law: YLaw::Empirical(EmpiricalY::new(vals, a).unwrap()),
        }),
    ]
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1e-12)
}

proptest! {
    #[test]
    fn nu_box_is_monotone(s in spec(), x in 0.01f64..50.0, dx in 0.0f64..50.0, y in 0.01f64..50.0, dy in 0.0f64..50.0) {
        let base = nu_box(&s, x, y).unwrap();
        prop_assert!(nu_box(&s, x + dx, y).unwrap() >= base - 1e-12 * base);
        prop_assert!(nu_box(&s, x, y + dy).unwrap() <= base + 1e-12 * base);
        prop_assert!(base >= 0.0);
    }

    #[test]
    fn nu_box_is_homogeneous(s in spec(), x in 0.01f64..50.0, y in 0.01f64..50.0) {
        let base = nu_box(&s, x, y).unwrap();
        for lambda in [2.0f64, 10.0] {
            let scaled = nu_box(&s, lambda * x, lambda * y).unwrap();
            prop_assert!(close(scaled, lambda.powf(-s.alpha) * base), "{scaled} vs {base}");
        }
    }

    #[test]
    fn infinite_x_gives_full_moment(a in 0.3f64..4.0, vals in prop::collection::vec(0.0f64..5.0, 1..100), y in 0.01f64..50.0) {
        let moment = vals.iter().map(|v| v.powf(a)).sum::<f64>() / vals.len() as f64;
        let s = ProductMeasureSpec { alpha: a, y_law: YLaw::Empirical(EmpiricalY::new(vals, a).unwrap()) };
        prop_assert!(close(nu_box(&s, f64::INFINITY, y).unwrap(), y.powf(-a) * moment));
    }
}

#[test]
fn one_step_cylinder_matches_box() {
    // Y = xi_1 two-point: nu([0, x] x (y, inf]) = (1 - p0) nu_alpha(y / rho, x]
    let streams = Streams::new(51);
    for (alpha, p0, rho) in [(1.0, 0.3, 0.8), (2.0, 0.0, 0.5), (0.7, 0.5, 1.5)] {
        let g = TailDistribution::with_zero_mass(p0, TailDistribution::point(rho));
        for (x, y) in [(2.0, 0.5), (4.0, 1.0), (10.0, 0.2)] {
            let exact = (1.0 - p0) * nu_alpha_mass(alpha, y / rho, x);
            let lo = 0.5 * y / rho;
            let mu = mu_cylinder(
                alpha,
                &g,
                &[
                    Interval { lo, hi: x, lo_closed: false },
                    Interval::above(y),
                ],
                200_000,
                &streams,
            )
            .unwrap();
            assert!(mu.contains(exact) || (mu.value - exact).abs() < 1e-12, "{alpha} {x} {y}: {mu:?} vs {exact}");
            if p0 == 0.0 {
                let det = ProductMeasureSpec::deterministic(alpha, rho);
                assert!(close(nu_box(&det, x, y).unwrap(), exact));
            }
        }
    }
}
