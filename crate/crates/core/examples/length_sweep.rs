//! A cable-length sweep through the same code path as `reflectwave sweep`.

use reflectwave::cli::{parse_sweep, sweep_table};
use reflectwave::{Config, Mode};

fn main() {
    let mut c = Config::default();
    c.sim.t_end = 100e-6;
    let axis = parse_sweep("cable.length_m=20,50,70,100").expect("valid sweep");
    print!("{}", sweep_table(&c, &[axis], Mode::Off));
}
