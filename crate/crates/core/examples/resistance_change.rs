//! Raw sensor resistance to the normalized input used by the models.

use blockid::datasets::{compute_resistance_change, normalize_inputs, Channel, ResistanceTrace, Role, TimeSeriesDataset};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // a sensor at 1.2 kOhm that loses resistance while compressed
    let ohms: Vec<f64> = (0..60)
        .map(|t| {
            let squeeze = if (10..40).contains(&t) { 1.0 - (-(t as f64 - 10.0) / 4.0).exp() } else { 0.0 };
            1200.0 * (1.0 - 0.6 * squeeze)
        })
        .collect();
    let trace = ResistanceTrace::new(ohms, None)?;
    let dr = compute_resistance_change(&trace);
    println!("R0 = {} ohm, min dR = {:.1} %", trace.r0(), dr.iter().cloned().fold(f64::INFINITY, f64::min));

    let bend: Vec<f64> = dr.iter().map(|v| -0.0004 * v).collect();
    let ds = TimeSeriesDataset::new(
        "squeeze",
        0.1,
        Role::Identification,
        vec![Channel::new("dr", "%", dr)],
        vec![Channel::new("curvature", "1/mm", bend)],
    )?;
    let normalized = normalize_inputs(&ds)?;
    println!("normalized input at t=3.5 s: {:.4}", normalized.inputs()[0].samples[35]);
    let text = blockid::datasets::dataset_to_string(&normalized);
    for line in text.lines().take(2).chain(text.lines().nth(37)) {
        println!("{line}");
    }
    Ok(())
}
