//! With `Δt = K δt` every macro step is a plain burst, so the accelerated run
//! reproduces the microscopic simulation bit for bit.

use micromacro::extrapolation::{ExtrapConfig, ExtrapMethod};
use micromacro::matching::MatchConfig;
use micromacro::orchestrator::{run_simulation, AccelConfig, Qoi, StepPolicy, Warmup};
use micromacro::restriction::MomentSpec;
use micromacro::sde::{evolve_observed, sample_normal, LinearSde};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dt = 2e-4;
    let steps = 2000;
    let model = LinearSde::new(-1.0, 1.0, 1.0);
    let initial = sample_normal(1000, 0.0, 1.0, 42);

    let cfg = AccelConfig {
        spec: MomentSpec::centralized(2),
        extrap: ExtrapConfig::new(ExtrapMethod::Projective, 1, 1, dt)?,
        matching: MatchConfig::default(),
        policy: StepPolicy::fixed(dt, 1, dt),
        qoi: Qoi::RawMoment(2),
        warmup: Warmup::Micro,
        t_end: steps as f64 * dt,
        record_inner: false,
    };
    let rec = run_simulation(&model, &initial, &cfg)?;

    let mut micro = initial.clone();
    evolve_observed(&model, &mut micro, steps, dt, 10_000, |_, _| Ok(()))?;

    println!("macro steps: {}", rec.rows.len() - 1);
    println!("final ensembles bitwise equal: {}", rec.final_ensemble.bitwise_eq(&micro));
    println!("E X^2 at t = {}: {:.12}", rec.final_ensemble.time(), rec.rows.last().unwrap().qoi);
    Ok(())
}
