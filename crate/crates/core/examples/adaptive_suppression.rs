//! The three branch modes side by side, and the adaptive run edge by edge.

use reflectwave::analysis::{bursts, metrics};
use reflectwave::{run_to_end, Config, Mode};

fn main() -> reflectwave::Result<()> {
    let c = Config::default();
    let mut peaks = Vec::new();
    for mode in [Mode::Off, Mode::StaticMatched, Mode::Adaptive] {
        let tr = run_to_end(&c, mode)?;
        let m = metrics(&tr, &c);
        println!(
            "{:<15} peak {:.3}  loss {:6.1} W",
            mode.as_str(),
            m.peak_ratio,
            m.branch_loss_w
        );
        peaks.push(m.peak_ratio);
        if mode == Mode::Adaptive {
            for (k, b) in bursts(&tr, &c).iter().enumerate() {
                println!(
                    "  edge {k:>2}: mean E {:9.3e}  peak |e| {:6.1} V  peak {:.3}  D {:.3}",
                    b.mean_lyap, b.peak_abs_e, b.peak_ratio, b.final_duty
                );
            }
        }
    }
    assert!(
        peaks[2] < peaks[0],
        "adaptive peak should be below the unsuppressed one"
    );
    Ok(())
}
