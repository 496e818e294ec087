//! Verify every trainable parameter's analytic gradient against central
//! finite differences on a tiny random instance.

use jsdmp::gradcheck::run_gradcheck;

fn main() -> jsdmp::Result<()> {
    for report in run_gradcheck(5, 0, 1e-5)? {
        print!("{}", report.render_text());
    }
    Ok(())
}
