//! FENE dumbbells under `κ(t) = 2 (1.1 + sin πt)` with adaptive macro steps.
//! Prints the stress trajectory as CSV and a summary on stderr.
//!
//! Usage: `fene_periodic [J] [t_end]`

use micromacro::extrapolation::{ExtrapConfig, ExtrapMethod};
use micromacro::matching::MatchConfig;
use micromacro::orchestrator::{run_simulation, AccelConfig, Qoi, StepPolicy, Warmup};
use micromacro::restriction::MomentSpec;
use micromacro::sde::{sample_fene_equilibrium, FeneDumbbell, FeneParams, Kappa, TimeProfile};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let j: usize = args.next().map_or(Ok(5000), |s| s.parse())?;
    let t_end: f64 = args.next().map_or(Ok(6.0), |s| s.parse())?;
    let dt = 2e-4;
    let params = FeneParams::new(49.0, 1.0, Kappa::Scalar(TimeProfile::PeriodicShear), 1.0)?;
    let model = FeneDumbbell::one_d(params.clone());
    let cfg = AccelConfig {
        spec: MomentSpec::even_centralized(3),
        extrap: ExtrapConfig::new(ExtrapMethod::Projective, 1, 1, dt)?,
        matching: MatchConfig::default(),
        policy: StepPolicy::adaptive(1e-3, 8e-3, 0.2, 1.2, 1, dt),
        qoi: Qoi::Stress(params.clone()),
        warmup: Warmup::Micro,
        t_end,
        record_inner: false,
    };
    let rec = run_simulation(&model, &sample_fene_equilibrium(&params, j, 3), &cfg)?;
    print!("{}", rec.to_csv(&[("J".into(), j.to_string())]));
    eprintln!(
        "macro steps {}, rejected {}, speed-up {:.2}",
        rec.rows.len() - 1,
        rec.total_rejections(),
        rec.speedup()
    );
    Ok(())
}
