//! Extends an identified model with one more block in series while
//! keeping the identified prefix fixed.

use std::sync::Arc;

use blockid::blockmodel::ModelKind;
use blockid::datasets::{normalize_inputs, Role};
use blockid::estimate::{estimate_block, extend_in_series, EstimationProblem, SearchConfig};
use blockid::plant::{builtin_catalog, find_plant, standard_suite};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let plant = find_plant(&builtin_catalog(), "wh")?.with_noise(0.01);
    let (ident, valid): (Vec<_>, Vec<_>) = standard_suite(&plant, 5)?
        .into_iter()
        .map(|d| normalize_inputs(&d).map(Arc::new))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .partition(|d| d.role() == Role::Identification);
    let config = SearchConfig {
        max_poles: 3,
        max_zeros: 3,
        ..SearchConfig::default()
    };
    let problem = EstimationProblem::new(ident, valid, 0, ModelKind::Wiener, config)?;
    let unloaded = estimate_block(&problem)?;
    println!("prefix: {}", unloaded.report.render().lines().next().unwrap_or_default());

    let extended = extend_in_series(&unloaded.model, &problem.with_kind(ModelKind::WienerHammerstein))?;
    println!(
        "identification cost {:.4e} -> {:.4e}",
        unloaded.report.identification_cost, extended.report.identification_cost
    );
    print!("{}", extended.report.render());
    Ok(())
}
