//! Roots of the multistep characteristic polynomial over a range of β.

use micromacro::extrapolation::characteristic_roots;

fn main() {
    println!("order,beta,zero_stable,roots");
    for pe in 1..=3 {
        for beta in [0.1, 0.3, 0.5, 0.7, 0.9, 0.99] {
            let rep = characteristic_roots(beta, pe);
            let roots: Vec<String> = rep.roots.iter().map(|r| format!("{:.6}{:+.6}i", r.re, r.im)).collect();
            println!("{pe},{beta},{},{}", rep.zero_stable, roots.join(" "));
        }
    }
}
