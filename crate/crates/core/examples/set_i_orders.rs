//! Prints strong errors of SD and BISS on SET I with a reduced path count.

use wfsd::{harness, ExperimentConfig, Preset, SchemeId};

fn main() -> wfsd::Result<()> {
    let mut cfg = ExperimentConfig::for_preset(Preset::SetI, vec![SchemeId::Sd, SchemeId::Biss], SchemeId::Sd, 7)?;
    cfg.batches = 20;
    cfg.paths_per_batch = 50;
    let (report, timings) = harness::run_experiment(&cfg)?;
    println!("{:>6} {:>4} {:>12} {:>12} {:>12}", "scheme", "k", "error", "ci_low", "ci_high");
    for row in report.rows() {
        println!("{:>6} {:>4} {:>12.6} {:>12.6} {:>12.6}", row.scheme, row.dt_exp, row.error, row.ci_low, row.ci_high);
    }
    for rep in &report.reports {
        if let Some(fit) = rep.order {
            println!("{}: fitted order {:.3}", rep.scheme, fit.slope);
        }
    }
    println!("{} paths in {:.2?}", report.total_paths, timings.total);
    Ok(())
}
