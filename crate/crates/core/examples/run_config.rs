//! Drive a run from a TOML configuration in-process, as the binary does,
//! and print the manifest summary.
//!
//! ```text
//! cargo run --release --example run_config -- [config.toml] [output_dir]
//! ```

use std::path::PathBuf;

use phc_design::cli::run;
use phc_design::config::parse_config;

const DEFAULT: &str = r#"
[run]
command = "bands"
[lattice]
hole_radius = 0.3
bulk_index = 3.4
[solver]
n_g = 61
bands = 4
"#;

fn main() -> phc_design::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let text = match args.first() {
        Some(p) => std::fs::read_to_string(p)?,
        None => DEFAULT.to_string(),
    };
    let mut config = match parse_config(&text) {
        Ok(c) => c,
        Err(e) => {
            if let phc_design::Error::Config(issues) = &e {
                for i in issues {
                    eprintln!("{i}");
                }
            }
            return Err(e);
        }
    };
    config.output = args.get(1).map_or_else(|| std::env::temp_dir().join("phc_run_config"), PathBuf::from);
    let m = run(&config)?;
    println!("{} run, seed {}, into {}", m.command.name(), m.seed, config.output.display());
    for f in &m.files {
        println!("  {:<20} {:>9} bytes  {}", f.path, f.bytes, &f.sha256[..16]);
    }
    println!("{}", serde_json::to_string_pretty(&m.results).unwrap_or_default());
    Ok(())
}
