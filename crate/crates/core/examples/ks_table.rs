//! Matches a FENE ensemble at t = 1 onto the even central moments of the
//! reference ensemble at t = 1.15 for L = 1..10 and runs a two-sample KS test.
//!
//! Usage: `ks_table [J] [seed]`

use micromacro::experiments::{match_sweep, FeneSetup};
use micromacro::matching::MatchConfig;
use micromacro::restriction::MomentKind;
use micromacro::sde::FeneParams;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let j: usize = args.next().map_or(Ok(20_000), |s| s.parse())?;
    let seed: u64 = args.next().map_or(Ok(1), |s| s.parse())?;
    let setup = FeneSetup {
        params: FeneParams::constant_shear(49.0, 1.0, 2.0, 1.0)?,
        dt: 2e-4,
        j,
        seed,
        kind: MomentKind::EvenCentralized { include_mean: false },
    };
    let ls: Vec<usize> = (1..=10).collect();
    let sweep = match_sweep(&setup, 1.0, 1.15, &ls, 10, &MatchConfig::default())?;
    print!("{}", sweep.ks_csv(&[("J".into(), j.to_string())]));
    Ok(())
}
