//! Loading and unloading branches of a slowly and a quickly driven foam
//! actuator, compared with a memoryless sensor.

use blockid::datasets::Role;
use blockid::plant::{builtin_catalog, find_plant, generate_excitation, hysteresis_loop, simulate_plant, ExcitationProgram};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let catalog = builtin_catalog();
    for (plant, hold) in [("static", 10.0), ("foam-wh", 10.0), ("foam-wh", 1.0)] {
        let spec = find_plant(&catalog, plant)?.with_noise(0.0);
        let program = ExcitationProgram {
            on_duration: hold,
            off_duration: hold,
            ..ExcitationProgram::gradual()
        };
        let pressure = generate_excitation(&program, 0.1)?;
        let ds = simulate_plant(&spec, &pressure, 0.1, 0, plant, Role::Validation)?;
        let lp = hysteresis_loop(&ds, 0, 0, 3)?;
        println!("{plant:<8} hold {hold:>4} s  loop area {:.3e}  relative {:.4}", lp.area, lp.relative_area);
    }
    Ok(())
}
