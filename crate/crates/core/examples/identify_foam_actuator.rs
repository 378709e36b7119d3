//! Identifies a foam bending actuator with linear and Wiener-Hammerstein
//! models. Pass `full` to search the whole order grid.

use std::sync::Arc;

use blockid::blockmodel::ModelKind;
use blockid::datasets::{normalize_inputs, Role};
use blockid::estimate::{estimate, EstimationProblem, SearchConfig};
use blockid::plant::{builtin_catalog, find_plant, standard_suite};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let full = std::env::args().any(|a| a == "full");
    let plant = find_plant(&builtin_catalog(), "foam-wh")?;
    let (ident, valid): (Vec<_>, Vec<_>) = standard_suite(&plant, 1)?
        .into_iter()
        .map(|d| normalize_inputs(&d).map(Arc::new))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .partition(|d| d.role() == Role::Identification);

    let config = if full {
        SearchConfig::default()
    } else {
        SearchConfig {
            max_poles: 3,
            max_zeros: 3,
            ..SearchConfig::default()
        }
    };
    for kind in [ModelKind::Linear, ModelKind::WienerHammerstein] {
        let problem = EstimationProblem::new(ident.clone(), valid.clone(), 0, kind, config.clone())?;
        let est = estimate(&problem)?;
        print!("{}", est.report.render());
    }
    Ok(())
}
