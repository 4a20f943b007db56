//! Reference-model search for the lowest branch loss under the overshoot
//! limit. Uses a short horizon so it finishes quickly.

use reflectwave::analysis::{optimize_refmodel, OptimizeOptions, SearchSpace};
use reflectwave::Config;

fn main() -> reflectwave::Result<()> {
    let mut c = Config::default();
    c.sim.t_end = 200e-6;
    let space = SearchSpace::around(&c, 3.0);
    let opts = OptimizeOptions {
        budget: 24,
        seed: 7,
        ..Default::default()
    };
    let r = optimize_refmodel(&c, &space, &opts)?;
    print!("{}", r.log_csv());
    match (&r.best, &r.best_infeasible) {
        (Some(b), _) => println!(
            "best #{}: alpha {:.3e} gamma {:.1} -> {:?}",
            b.index, b.alpha, b.gamma, b.metrics
        ),
        (None, Some(b)) => println!("infeasible; closest #{} {:?}", b.index, b.metrics),
        (None, None) => println!("no run succeeded"),
    }
    Ok(())
}
