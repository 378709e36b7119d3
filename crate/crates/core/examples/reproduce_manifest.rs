//! Runs a reproduction manifest through the command-line entry point:
//! generate the foam suite, fit two model kinds, select the better one.

use std::fs;

const MANIFEST: &str = r#"
command = "search"
out = "results"
seed = 1
plant = "foam-wh"
kinds = ["linear", "wh"]

[search]
max_poles = 3
max_zeros = 3
"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("blockid-reproduce");
    fs::create_dir_all(&dir)?;
    let manifest = dir.join("manifest.toml");
    fs::write(&manifest, MANIFEST)?;
    let code = blockid::cli::run(["blockid", "--manifest", manifest.to_str().unwrap_or_default()]);
    println!("exit code {code}; artifacts in {}", dir.join("results").display());
    let selection = fs::read_to_string(dir.join("results/selection.txt"))?;
    for line in selection.lines().filter(|l| l.starts_with("selected")) {
        println!("{line}");
    }
    Ok(())
}
