//! Simulates an AR(1)-type chain and reports its exceedances.

use exlab::kernels::{BuiltinKernel, Init};
use exlab::rng::Streams;

fn main() -> exlab::Result<()> {
    let k = BuiltinKernel::Ar1.default_kernel();
    let mut rng = Streams::new(1).rng("example", 0);
    let path = k.spec.simulate_path(Init::FromH, 100_000, &mut rng)?;
    let visits = path.atom_flags.iter().filter(|&&f| f).count();
    let max = path.states.iter().cloned().fold(0.0, f64::max);
    println!("steps {}, atom visits {visits}, max {max:.1}", path.len() - 1);
    for level in [10.0, 100.0, 1000.0] {
        let n = path.states.iter().filter(|&&x| x > level).count();
        println!("  states above {level:>6}: {n}");
    }
    Ok(())
}
