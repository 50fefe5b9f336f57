use std::path::PathBuf;

use clap::Parser;

use super::path_arg;
use crate::error::{CliError, CliResult};
use crate::manifest::{sha256_file, RunManifest, MANIFEST_FILE};
use crate::{Cli, Outcome, ReplayArgs};

pub fn run(a: &ReplayArgs) -> CliResult<Outcome> {
    let path = if a.manifest.is_dir() {
        a.manifest.join(MANIFEST_FILE)
    } else {
        a.manifest.clone()
    };
    let manifest = RunManifest::read(&path)?;
    let run_dir = path
        .parent()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("."));
    if manifest.command == "replay" {
        return Err(CliError::Manifest("cannot replay a replay".into()));
    }
    for input in &manifest.inputs {
        let actual = sha256_file(std::path::Path::new(&input.path))?;
        if actual != input.sha256 {
            return Err(CliError::Manifest(format!(
                "input {} changed since the recorded run",
                input.path
            )));
        }
    }
    let out = a.out.clone().unwrap_or_else(|| {
        let mut name = run_dir
            .file_name()
            .map(|n| n.to_os_string())
            .unwrap_or_else(|| "run".into());
        name.push(".replay");
        run_dir.with_file_name(name)
    });
    let mut argv = vec!["saeb".to_string()];
    argv.extend(manifest.args.iter().cloned());
    argv.extend(["--out".into(), path_arg(&out)]);
    let cli = Cli::try_parse_from(&argv)
        .map_err(|e| CliError::Manifest(format!("recorded arguments do not parse: {e}")))?;
    let outcome = crate::run(cli, None)?;

    let replayed = RunManifest::read(&out.join(MANIFEST_FILE))?;
    let mut differing = Vec::new();
    for original in &manifest.artifacts {
        match replayed.artifacts.iter().find(|r| r.path == original.path) {
            Some(r) if r.sha256 == original.sha256 => {}
            _ => differing.push(original.path.clone()),
        }
    }
    for r in &replayed.artifacts {
        if !manifest.artifacts.iter().any(|o| o.path == r.path) {
            differing.push(r.path.clone());
        }
    }
    if !differing.is_empty() {
        return Err(CliError::ReplayMismatch(differing.join(", ")));
    }
    println!(
        "replay of {} matches: {} artifact(s) identical",
        run_dir.display(),
        manifest.artifacts.len()
    );
    Ok(outcome)
}
