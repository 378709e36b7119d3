//! Three contractors driving a tilting plate: one MISO model per output.

use std::sync::Arc;

use blockid::blockmodel::{bundle_to_string, ModelKind};
use blockid::datasets::{normalize_inputs, Role};
use blockid::estimate::{estimate_miso_bundle, EstimationProblem, SearchConfig};
use blockid::plant::{builtin_catalog, find_plant, standard_suite};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let plant = find_plant(&builtin_catalog(), "miso3")?;
    let suite = standard_suite(&plant, 3)?;
    let (ident, valid): (Vec<_>, Vec<_>) = suite
        .iter()
        .map(|d| normalize_inputs(d).map(Arc::new))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .partition(|d| d.role() == Role::Identification);
    let config = SearchConfig {
        max_poles: 2,
        max_zeros: 2,
        ..SearchConfig::default()
    };
    let problems = (0..plant.outputs.len())
        .map(|j| EstimationProblem::new(ident.clone(), valid.clone(), j, ModelKind::WienerHammerstein, config.clone()))
        .collect::<Result<Vec<_>, _>>()?;
    let result = estimate_miso_bundle(&problems)?;
    for r in &result.reports {
        println!("{:<8} validation fit {:6.2} %", r.output, r.validation_fit.unwrap_or(f64::NAN));
    }
    println!();
    print!("{}", bundle_to_string(&result.bundle).lines().take(12).collect::<Vec<_>>().join("\n"));
    println!();
    Ok(())
}
