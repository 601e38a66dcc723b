//! Weak order of Euler–Maruyama on `dX = (a1 X + a2) dt + b dW` against the
//! closed moment equations.
//!
//! Usage: `weak_order [J] [seeds]`

use micromacro::analysis::{estimate_order, MomentOdeSolution};
use micromacro::restriction::{restrict, MomentSpec};
use micromacro::rng::replicate_seed;
use micromacro::sde::{evolve_observed, sample_normal, LinearSde};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let j: usize = args.next().map_or(Ok(20_000), |s| s.parse())?;
    let seeds: u64 = args.next().map_or(Ok(10), |s| s.parse())?;

    let model = LinearSde::new(-1.0, 1.0, 1.0);
    let (m, v) = MomentOdeSolution::new(-1.0, 1.0, 1.0, 0.0, (0.0, 1.0))?.eval(1.0)?;
    let exact = [m, v + m * m];

    let mut pairs = [Vec::new(), Vec::new()];
    println!("dt,err_mean,err_second");
    for n in [16usize, 32, 64, 128] {
        let dt = 1.0 / n as f64;
        let mut acc = [0.0; 2];
        for s in 0..seeds {
            let mut ens = sample_normal(j, 0.0, 1.0, replicate_seed(1, s));
            evolve_observed(&model, &mut ens, n, dt, 10_000, |_, _| Ok(()))?;
            let u = restrict(&ens, &MomentSpec::standard(2))?;
            acc[0] += u.values[0];
            acc[1] += u.values[1];
        }
        let errs = [0, 1].map(|i| (acc[i] / seeds as f64 - exact[i]).abs());
        println!("{dt},{:.6e},{:.6e}", errs[0], errs[1]);
        for i in 0..2 {
            pairs[i].push((dt, errs[i]));
        }
    }
    println!("fitted order: E X {:.3}, E X^2 {:.3}", estimate_order(&pairs[0])?, estimate_order(&pairs[1])?);
    Ok(())
}
