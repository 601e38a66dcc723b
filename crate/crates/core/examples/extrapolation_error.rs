//! One macro step of projective and multistep extrapolation from t = 1.4 on
//! the FENE model; stress error against the reference as a function of Δt.
//!
//! Usage: `extrapolation_error [J] [seeds]`

use micromacro::experiments::{average_points, averaged_csv, extrap_sweep, log_grid, FeneSetup, SchemeChoice};
use micromacro::extrapolation::ExtrapMethod;
use micromacro::matching::MatchConfig;
use micromacro::restriction::MomentKind;
use micromacro::sde::FeneParams;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let j: usize = args.next().map_or(Ok(10_000), |s| s.parse())?;
    let seeds: u64 = args.next().map_or(Ok(3), |s| s.parse())?;
    let schemes = [
        SchemeChoice { method: ExtrapMethod::Projective, order: 1 },
        SchemeChoice { method: ExtrapMethod::Multistep, order: 1 },
    ];
    let dts = log_grid(4e-4, 0.2, 8, 2e-4);
    let mut runs = Vec::new();
    for seed in 1..=seeds {
        let setup = FeneSetup {
            params: FeneParams::constant_shear(49.0, 1.0, 2.0, 1.0)?,
            dt: 2e-4,
            j,
            seed,
            kind: MomentKind::EvenCentralized { include_mean: false },
        };
        for p in extrap_sweep(&setup, 1.4, &dts, &[3, 5], &schemes, 1, &MatchConfig::default())? {
            runs.push((format!("{}:{}", p.method, p.order), p.point));
        }
    }
    print!("{}", averaged_csv(&average_points(runs), &[("seeds".into(), seeds.to_string())]));
    Ok(())
}
