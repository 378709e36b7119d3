//! Design-space helpers: porosity from mass, coiling radius, and a power
//! law of blocked pressure against porosity.

use blockid::curvefit::{fit_exponential, fit_power_law};
use blockid::geometry::{coiling_radius, porosity_from_mass, DesignSample};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for mass in [0.3104, 0.2328, 0.1746, 0.1358] {
        let phi = porosity_from_mass(&DesignSample::new(mass, 1.0, 0.97)?)?;
        println!("m = {mass:.4} g/cm3 -> porosity {phi} %");
    }
    println!("coiling radius at H = 10 mm: {} mm", coiling_radius(10.0)?);

    // blocked pressure (kPa) measured at four porosities
    let points = [(68.0, 21.1), (76.0, 12.9), (82.0, 8.4), (86.0, 5.0)];
    let law = fit_power_law(&points)?;
    println!("p = {:.2} (1 - phi/100)^{:.3}, R2 = {:.3}", law.c, law.n, law.r_squared);
    println!("predicted at 80 %: {:.2} kPa", law.eval(80.0));

    let exp = fit_exponential(&[(0.0, 1.0), (0.5, 2.7), (1.0, 7.5)])?;
    println!("y = {:.3} exp({:.3} x), R2 = {:.4}", exp.a, exp.b, exp.r_squared);
    Ok(())
}
