//! Discrete transfer functions: simulation, stability and DC gain.

use blockid::lti::TransferFunction;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let lag = TransferFunction::new(vec![0.5], vec![1.0, -0.5])?;
    println!("step response: {:?}", lag.simulate(&[1.0; 4]));

    let resonant = TransferFunction::new(vec![0.06, 0.0591], vec![1.0, -1.6909, 0.81])?;
    println!("poles: {:?}", resonant.poles().unwrap_or_default());
    println!("stable: {}, dc gain: {:.4}", resonant.is_stable(), resonant.dc_gain()?);

    let chain = lag.series(&resonant);
    let settled = *chain.simulate(&vec![1.0; 400]).last().unwrap();
    println!("series dc gain {:.6}, settled step {:.6}", chain.dc_gain()?, settled);

    let unstable = TransferFunction::new(vec![1.0], vec![1.0, -1.2])?;
    println!("pole at 1.2 stable: {}; projected: {:?}", unstable.is_stable(), unstable.stabilized().denominator());
    Ok(())
}
