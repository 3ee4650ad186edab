use std::process::ExitCode;

use anyhow::Result;
use clap::Args;
use dprf_core::gradcheck::{run_suite, GradCheckConfig};

#[derive(Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

pub fn run(args: GradcheckArgs) -> Result<ExitCode> {
    let config = GradCheckConfig {
        seed: args.seed,
        ..GradCheckConfig::default()
    };
    let mut all_passed = true;
    for (raster, report) in run_suite(&config)? {
        println!(
            "r={} cutoff={} ceiling={} ppp={} bg={:?}: {report}",
            raster.kernel_radius,
            raster.cutoff_multiplier,
            raster.alpha_ceiling,
            raster.points_per_pixel,
            raster.background
        );
        all_passed &= report.passed();
    }
    Ok(if all_passed {
        ExitCode::SUCCESS
    } else {
        eprintln!("error: gradient check failed");
        ExitCode::FAILURE
    })
}
