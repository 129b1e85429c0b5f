//! Runs every randomised property suite with a small trial count.

use schatten_bounds::cli::{run_suite, Suite};

fn main() -> schatten_bounds::Result<()> {
    let mut ok = true;
    for s in Suite::ALL {
        let r = run_suite(s, 20, 0)?;
        print!("{}", r.render());
        ok &= r.passed();
    }
    std::process::exit(if ok { 0 } else { 1 });
}
