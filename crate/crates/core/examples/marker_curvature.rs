//! Curvature from tracked markers along a bending actuator.

use blockid::geometry::{deformation_dataset, fit_circle_curvature, parse_markers, DeformationMode};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // four markers on an arc whose radius shrinks from 200 mm to 40 mm
    let mut csv = String::from("t,x1,y1,x2,y2,x3,y3,x4,y4\n");
    for (i, radius) in [200.0, 120.0, 80.0, 55.0, 40.0].iter().enumerate() {
        csv.push_str(&format!("{:.1}", i as f64 * 0.1));
        for k in 0..4 {
            let s = 12.0 * k as f64;
            let th = s / radius;
            csv.push_str(&format!(",{:.4},{:.4}", radius * th.sin(), radius * (1.0 - th.cos())));
        }
        csv.push('\n');
    }
    let frames = parse_markers(&csv)?;
    for f in &frames {
        let fit = fit_circle_curvature(f)?;
        println!("t = {:.1} s  radius {:7.2} mm  curvature {:.5} 1/mm", f.timestamp, fit.radius, fit.curvature);
    }
    let ds = deformation_dataset("arc", &frames, DeformationMode::Curvature)?;
    println!("dataset '{}' with {} samples of {}", ds.name(), ds.len(), ds.outputs()[0].name);
    Ok(())
}
