//! Config-driven runs through the same entry points as the binary.
//!
//! Usage: `config_run [out_dir]`. Prints the fully expanded default
//! configuration, then runs Study 1 with overridden settings and lists the
//! files it wrote.

use std::path::PathBuf;

use fatigue_ocp::cli::cmd_study1;
use fatigue_ocp::config::ConfigFile;

const OVERRIDES: &str = r#"
[study1]
target_load = 0.5
duration = 30.0
samples = 301

[study1.fatigue]
F = 0.01
R = 0.002
LD = 10.0
LR = 10.0
S = 5.0
"#;

fn main() -> fatigue_ocp::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("fatigue-ocp-config-run"));
    std::fs::create_dir_all(&out)?;

    println!("# defaults\n{}", ConfigFile::default().to_toml());

    let cfg = ConfigFile::parse(OVERRIDES)?;
    let rep = cmd_study1(&cfg, &out, true)?;
    println!("rmse {:?}", rep.rmse);
    let mut files: Vec<_> = std::fs::read_dir(&out)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .collect();
    files.sort();
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(())
}
