//! Predicted variance of the projectively extrapolated empirical mean versus
//! a brute-force estimate, and the matching full-micro ensemble size.

use micromacro::analysis::{predict_variance_projective, run_replicates, VarianceMode};
use micromacro::extrapolation::{projective_extrapolate, ExtrapConfig, ExtrapMethod};
use micromacro::restriction::{restrict, MomentSpec};
use micromacro::rng::replicate_seed;
use micromacro::sde::{evolve_ensemble, sample_normal, LinearSde};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (a, b, dt, j) = (-1.0, 1.0, 0.1, 100);
    let model = LinearSde::new(a, 0.0, b);
    let spec = MomentSpec::standard(1);
    let cfg = ExtrapConfig::new(ExtrapMethod::Projective, 1, 1, dt)?;
    println!("alpha,predicted,monte_carlo,full_micro_same_J");
    for alpha in [0.0, 1.0, 2.0, 4.0, 8.0] {
        let predicted = predict_variance_projective(a, b, dt, j, 1, 1, alpha, 1.0, VarianceMode::Accelerated)?;
        let micro = predict_variance_projective(a, b, dt, j, 1, 1, alpha, 1.0, VarianceMode::FullMicro { j_micro: j })?;
        let draws = run_replicates(10_000, 0, |i| {
            let ens = sample_normal(j, 0.0, 1.0, replicate_seed(5, i as u64));
            let (end, _) = evolve_ensemble(&model, &ens, 1, dt).map_err(|e| e.to_string())?;
            let burst = [restrict(&ens, &spec).map_err(|e| e.to_string())?, restrict(&end, &spec).map_err(|e| e.to_string())?];
            let u = projective_extrapolate(&burst, (alpha + 1.0) * dt, &cfg).map_err(|e| e.to_string())?;
            Ok::<_, String>(u.values[0])
        })?;
        let n = draws.len() as f64;
        let mean = draws.iter().sum::<f64>() / n;
        let var = draws.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        println!("{alpha},{predicted:.6},{var:.6},{micro:.6}");
    }
    Ok(())
}
