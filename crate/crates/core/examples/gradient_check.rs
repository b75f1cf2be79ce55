//! Reverse-mode gradients through hyperbolic kernels, verified against
//! central differences.

use hae::geometry::kernels;
use hae::grad::{finite_diff_check, value_and_grad, FdOptions, Objective, ParamSet, Real};

/// Squared distance from `x` to a fixed anchor, plus the radius of `x ⊕ y`.
struct Pull {
    anchor: Vec<f64>,
}

impl Objective for Pull {
    fn eval<T: Real>(&self, p: &ParamSet<T>) -> hae::Result<T> {
        let x = p.data("x")?;
        let y = p.data("y")?;
        let anchor: Vec<T> = self.anchor.iter().map(|&a| T::cst(a)).collect();
        let d = kernels::distance(x, &anchor, 1.0);
        Ok(d * d + kernels::radius(&kernels::mobius_add(x, y, 1.0), 1.0))
    }
}

fn main() -> hae::Result<()> {
    let mut params = ParamSet::new();
    params.insert("x", vec![3], vec![0.2, -0.1, 0.4])?;
    params.insert("y", vec![3], vec![-0.5, 0.3, 0.1])?;
    let f = Pull {
        anchor: vec![0.6, 0.0, -0.2],
    };

    let (value, grads) = value_and_grad(&f, &params)?;
    println!("f = {value:.12}");
    for t in grads.iter() {
        println!("∂f/∂{} = {:?}", t.name, t.data);
    }

    let report = finite_diff_check(&f, &params, &FdOptions::default())?;
    for (name, err) in &report.max_rel_error {
        println!("{name}: max relative error {err:.2e}");
    }
    println!("passed: {}", report.passed);
    Ok(())
}
