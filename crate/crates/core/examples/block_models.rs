//! Building Wiener, Hammerstein and Wiener-Hammerstein models by hand and
//! writing them in the model file format.

use blockid::blockmodel::{bundle_to_string, BlockModel, ModelBundle, PiecewiseLinearMap, Provenance};
use blockid::lti::TransferFunction;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let h1 = TransferFunction::new(vec![0.35], vec![1.0, -0.65])?;
    let h2 = TransferFunction::new(vec![0.2, 0.1], vec![1.0, -1.1, 0.4])?;
    // stiffening map sampled at five breakpoints
    let bp = vec![-0.8, -0.6, -0.4, -0.2, 0.0];
    let values = bp.iter().map(|x: &f64| 0.004 * (-2.0 * x).exp_m1()).collect();
    let g = PiecewiseLinearMap::new(bp, values)?;

    let wiener = BlockModel::wiener(vec![h1.clone()], g.clone())?;
    let hammerstein = BlockModel::hammerstein(1, g.clone(), h2.clone())?;
    let wh = BlockModel::wiener_hammerstein(vec![h1], g, h2)?;

    let u: Vec<f64> = (0..120).map(|t| if (20..80).contains(&t) { -0.6 } else { 0.0 }).collect();
    for model in [&wiener, &hammerstein, &wh] {
        let y = model.simulate(&[&u])?;
        println!("{:<18} {:<24} y(23) = {:.5}  y(79) = {:.5}", model.kind().to_string(), model.order_summary(), y[23], y[79]);
    }

    let bundle = ModelBundle::new(vec![wh], vec!["curvature".into()], Provenance::default())?;
    print!("{}", bundle_to_string(&bundle));
    Ok(())
}
