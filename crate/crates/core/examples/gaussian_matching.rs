//! Newton matching of a Gaussian ensemble onto a new mean and variance,
//! compared with the affine closed form.

use micromacro::matching::{match_ensemble, match_normal_closed_form, MatchConfig};
use micromacro::restriction::{restrict, MacroState, MomentSpec};
use micromacro::sde::sample_normal;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = MomentSpec::centralized(2);
    let ens = sample_normal(10_000, 0.0, 1.0, 7);
    let own = restrict(&ens, &spec)?;

    for (mu, var) in [(1.0, 0.5), (-2.0, 3.0), (0.3, 0.01)] {
        let target = MacroState::new(vec![mu, var], spec, 0.0)?;
        let out = match_ensemble(&ens, &target, &MatchConfig::default())?;
        let matched = out.ensemble().ok_or("matching failed")?;
        let map = match_normal_closed_form(own.values[0], own.values[1], mu, var)?;
        let dev = ens
            .states()
            .iter()
            .zip(matched.states())
            .map(|(x, y)| (map.apply(*x) - y).abs())
            .fold(0.0, f64::max);
        println!(
            "target ({mu}, {var}): {} iterations, residual {:.1e}, max deviation from affine map {dev:.2e}",
            out.iterations, out.residual
        );
    }
    Ok(())
}
