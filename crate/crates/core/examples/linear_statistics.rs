//! Replicate mean and standard deviation of `Ê X²` on the linear SDE for
//! projective and multistep extrapolation at several macro steps.
//!
//! Usage: `linear_statistics [replicates]`

use micromacro::analysis::{replicate_stats, MomentOdeSolution};
use micromacro::extrapolation::{ExtrapConfig, ExtrapMethod};
use micromacro::matching::MatchConfig;
use micromacro::orchestrator::{run_simulation, AccelConfig, Qoi, StepPolicy, Warmup};
use micromacro::restriction::MomentSpec;
use micromacro::sde::{sample_normal, LinearSde};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let r: usize = std::env::args().nth(1).map_or(Ok(50), |s| s.parse())?;
    let dt = 2e-4;
    let model = LinearSde::new(-1.0, 1.0, 1.0);
    let oracle = MomentOdeSolution::new(-1.0, 1.0, 1.0, 0.0, (0.0, 1.0))?.second_raw_moment(1.0)?;
    println!("method,dt_macro,mean_at_1,error,std_at_1");
    for method in [ExtrapMethod::Projective, ExtrapMethod::Multistep] {
        for dt_macro in [2e-4, 1e-3, 2e-3, 4e-3, 8e-3] {
            let cfg = AccelConfig {
                spec: MomentSpec::centralized(2),
                extrap: ExtrapConfig::new(method, 1, 1, dt)?,
                matching: MatchConfig::default(),
                policy: StepPolicy::fixed(dt_macro, 1, dt),
                qoi: Qoi::RawMoment(2),
                warmup: Warmup::Micro,
                t_end: 1.0,
                record_inner: false,
            };
            let stats = replicate_stats(r, 9, 0, |seed, _| {
                let rec = run_simulation(&model, &sample_normal(1000, 0.0, 1.0, seed), &cfg)?;
                Ok::<_, micromacro::orchestrator::RunError>((rec.times(), rec.qoi()))
            })?;
            let (mean, std) = (*stats.mean.last().unwrap(), *stats.std.last().unwrap());
            println!("{method},{dt_macro},{mean:.6},{:+.3e},{std:.4}", mean - oracle);
        }
    }
    Ok(())
}
