//! Evaluates the orthonormal Legendre basis on `[0, 1]` and checks
//! orthonormality with Gauss-Legendre quadrature.

use quasr::legendre::{eval_legendre, eval_tensor, gauss_legendre_unit};

pub fn run_example() -> quasr::Result<()> {
    let e = eval_legendre(0.25, 4)?;
    for k in 0..=4 {
        println!("phi_{k}(0.25) = {:+.6}  phi' = {:+.6}  phi'' = {:+.6}", e.values[k], e.d1[k], e.d2[k]);
    }

    let (nodes, weights) = gauss_legendre_unit(32);
    let mut worst = 0.0f64;
    for k in 0..=6 {
        for l in 0..=6 {
            let ip: f64 = nodes
                .iter()
                .zip(&weights)
                .map(|(&x, w)| {
                    let e = eval_legendre(x, 6).unwrap();
                    w * e.values[k] * e.values[l]
                })
                .sum();
            worst = worst.max((ip - if k == l { 1.0 } else { 0.0 }).abs());
        }
    }
    println!("max deviation from orthonormality up to degree 6: {worst:.2e}");

    let t = eval_tensor(0.3, 0.8, 2)?;
    println!("edge statistics phi_k(0.3) phi_l(0.8) for k,l in 1..=2: {:?}", t.values);
    Ok(())
}

fn main() -> quasr::Result<()> {
    run_example()
}
