//! Relative stress error after matching the t = 1.5 ensemble onto reference
//! moments a macro step later, averaged over seeds.
//!
//! Usage: `matching_error_vs_dt [J] [seeds]`

use micromacro::experiments::{average_points, averaged_csv, log_grid, match_dt_sweep, FeneSetup};
use micromacro::matching::MatchConfig;
use micromacro::restriction::MomentKind;
use micromacro::sde::FeneParams;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let j: usize = args.next().map_or(Ok(10_000), |s| s.parse())?;
    let seeds: u64 = args.next().map_or(Ok(3), |s| s.parse())?;
    let dts = log_grid(2e-4, 4e-2, 8, 2e-4);
    let mut runs = Vec::new();
    for seed in 1..=seeds {
        let setup = FeneSetup {
            params: FeneParams::constant_shear(49.0, 1.0, 2.0, 1.0)?,
            dt: 2e-4,
            j,
            seed,
            kind: MomentKind::EvenCentralized { include_mean: false },
        };
        for p in match_dt_sweep(&setup, 1.5, &dts, &[3, 4, 5], &MatchConfig::default())? {
            runs.push(("match".to_string(), p));
        }
    }
    print!("{}", averaged_csv(&average_points(runs), &[("seeds".into(), seeds.to_string())]));
    Ok(())
}
