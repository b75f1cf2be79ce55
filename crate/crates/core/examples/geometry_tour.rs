//! Gyrovector arithmetic on the Poincaré ball: closed-form values, the two
//! distance formulas, geodesics and radius rescaling.

use hae::geometry::{
    distance, distance_arccosh, exp_map, geodesic, log_map, mobius_add, mobius_scalar_mul, radius, rescale_to_radius,
    Ball,
};

fn main() -> hae::Result<()> {
    let ball = Ball::new(1.0, 4e-3)?;
    let half = ball.point(&[0.5, 0.0])?;
    let origin = ball.origin(2);

    println!("0.5 ⊕ 0.5          = {:?}", mobius_add(&half, &half)?.coords());
    println!("2 ⊗ 0.5            = {:?}", mobius_scalar_mul(2.0, &half).coords());
    println!(
        "d(0, 0.5)          = {:.15} (ln 3 = {:.15})",
        distance(&origin, &half)?,
        3f64.ln()
    );
    println!("r_max              = {:.6}", ball.r_max());

    let x = ball.point(&[0.3, -0.4])?;
    let y = ball.point(&[-0.6, 0.2])?;
    println!(
        "gyro vs arccosh    = {:.15} / {:.15}",
        distance(&x, &y)?,
        distance_arccosh(&x, &y)?
    );

    // log then exp at the same base returns the target
    let v = log_map(&x, &y)?;
    println!("exp_x(log_x y)     = {:?}", exp_map(&x, &v)?.coords());

    let d = distance(&x, &y)?;
    for t in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let p = geodesic(&x, &y, t)?;
        println!(
            "γ({t:.2}) radius {:.4}  d(x, γ) / d(x, y) = {:.4}",
            radius(&p).get(),
            distance(&x, &p)? / d
        );
    }

    // two points at equal radius: the midpoint sits closer to the origin
    let a = rescale_to_radius(&ball.point(&[0.8, 0.1])?, ball.radius(3.0)?)?;
    let b = rescale_to_radius(&ball.point(&[-0.2, 0.9])?, ball.radius(3.0)?)?;
    let mid = geodesic(&a, &b, 0.5)?;
    println!(
        "leaf radius {:.4}, midpoint radius {:.4}",
        radius(&a).get(),
        radius(&mid).get()
    );
    Ok(())
}
