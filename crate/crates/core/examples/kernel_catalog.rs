//! Lists the built-in kernels with their parameters.

use exlab::kernels::list_builtin_kernels;

fn main() {
    for info in list_builtin_kernels() {
        println!("{:<14} {}", info.name, info.summary);
        for p in &info.params {
            println!("    {:<12} {:>8}  {}", p.name, p.default, p.doc);
        }
    }
}
