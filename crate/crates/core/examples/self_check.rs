//! Runs both self-check suites and shows that a wrong distance formula is
//! caught.

use hae::check::{grad_suite, gyro_distance, identity_suite, GradOptions, IdentityOptions};

fn euclidean(x: &[f64], y: &[f64], _c: f64) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
}

fn main() -> hae::Result<()> {
    println!("{}\n", identity_suite(&IdentityOptions::default(), gyro_distance));
    println!("{}\n", grad_suite(&GradOptions::default())?);
    let broken = identity_suite(
        &IdentityOptions {
            pairs: 200,
            ..IdentityOptions::default()
        },
        euclidean,
    );
    println!("with a Euclidean distance swapped in:\n{broken}");
    Ok(())
}
