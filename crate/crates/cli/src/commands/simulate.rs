//! Runs scenarios and writes, per scenario, `<name>.csv` (summary),
//! `<name>.txt` (aligned table) and `<name>.reps.csv` (raw replications).

use super::{print_json, SEED_ENV};
use crate::error::{CliError, Result};
use clap::Args;
use interval_sar::simulation::{paper_scenario_matrix, run_scenario, ScenarioConfig};
use serde_json::{json, Value};
use std::path::{Path, PathBuf};

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scenario JSON: one object or an array of objects
    #[arg(long, required_unless_present = "paper_matrix", conflicts_with = "paper_matrix")]
    scenario: Option<PathBuf>,
    /// The 36 scenarios of the reference study
    #[arg(long)]
    paper_matrix: bool,
    /// Output directory, created if missing
    #[arg(short, long)]
    out_dir: PathBuf,
    /// Override the number of replications
    #[arg(long)]
    reps: Option<usize>,
    /// Override the seed; the i-th scenario of a set gets seed + i
    #[arg(long)]
    seed: Option<u64>,
}

fn env_seed() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::input("InvalidSeed", format!("{SEED_ENV}='{v}' is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

/// Parses scenario files. A scenario without a `seed` field takes
/// `INTERVAL_SAR_SEED + index` when that variable is set.
pub fn parse_scenarios(text: &str, env_seed: Option<u64>) -> Result<Vec<ScenarioConfig>> {
    let bad = |e: &dyn std::fmt::Display| CliError::input("InvalidScenario", e);
    let value: Value = serde_json::from_str(text).map_err(|e| bad(&e))?;
    let items = match value {
        Value::Array(items) => items,
        other => vec![other],
    };
    let mut out = Vec::with_capacity(items.len());
    for (i, mut item) in items.into_iter().enumerate() {
        if let (Some(base), Some(obj)) = (env_seed, item.as_object_mut()) {
            obj.entry("seed").or_insert(json!(base + i as u64));
        }
        let mut cfg: ScenarioConfig = serde_json::from_value(item).map_err(|e| bad(&format!("scenario {i}: {e}")))?;
        if cfg.name.is_empty() {
            cfg.name = cfg.default_name();
        }
        out.push(cfg);
    }
    if out.is_empty() {
        return Err(CliError::input("InvalidScenario", "no scenarios"));
    }
    Ok(out)
}

fn check_name(name: &str) -> Result<()> {
    let ok = !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
        && !name.starts_with('.');
    if ok {
        Ok(())
    } else {
        Err(CliError::input(
            "InvalidScenario",
            format!("scenario name '{name}' is not a safe file name"),
        ))
    }
}

fn write(dir: &Path, file: &str, body: &str) -> Result<String> {
    let p = dir.join(file);
    std::fs::write(&p, body).map_err(|e| CliError::from(e).context(p.display()))?;
    Ok(file.to_string())
}

pub fn run(args: SimulateArgs) -> Result<()> {
    let mut scenarios = match &args.scenario {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::from(e).context(p.display()))?;
            parse_scenarios(&text, env_seed()?)?
        }
        None => {
            let mut m = paper_scenario_matrix();
            if let Some(base) = env_seed()? {
                for (i, c) in m.iter_mut().enumerate() {
                    c.seed = base + i as u64;
                }
            }
            m
        }
    };
    for (i, c) in scenarios.iter_mut().enumerate() {
        if let Some(r) = args.reps {
            c.n_reps = r;
        }
        if let Some(s) = args.seed {
            c.seed = s + i as u64;
        }
        check_name(&c.name)?;
        c.validate()?;
    }
    let mut names = std::collections::HashSet::new();
    for c in &scenarios {
        if !names.insert(c.name.as_str()) {
            return Err(CliError::input(
                "InvalidScenario",
                format!("duplicate scenario name '{}'", c.name),
            ));
        }
    }

    std::fs::create_dir_all(&args.out_dir).map_err(|e| CliError::from(e).context(args.out_dir.display()))?;
    let mut index = Vec::new();
    for c in &scenarios {
        log::info!("running {} ({} reps, seed {})", c.name, c.n_reps, c.seed);
        let report = run_scenario(c)?;
        let files = [
            write(&args.out_dir, &format!("{}.csv", c.name), &report.to_csv())?,
            write(&args.out_dir, &format!("{}.txt", c.name), &report.to_text())?,
            write(&args.out_dir, &format!("{}.reps.csv", c.name), &report.reps_csv())?,
        ];
        index.push(json!({
            "scenario": c.name,
            "seed": c.seed,
            "reps_ok": report.reps.len(),
            "reps_failed": report.n_failed(),
            "files": files,
        }));
    }
    print_json(&Value::Array(index))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn env_seed_fills_missing_seeds_only() {
        let text = r#"[{"lattice":{"type":"rook","rows":3,"cols":4},"rho_true":0.4},
                       {"lattice":{"type":"rook","rows":3,"cols":4},"rho_true":0.0,"seed":5,"name":"x"}]"#;
        let s = parse_scenarios(text, Some(100)).unwrap();
        assert_eq!(s[0].seed, 100);
        assert_eq!(s[0].name, "rook_3x4_rho0.4_N11");
        assert_eq!(s[1].seed, 5);
        let s = parse_scenarios(text, None).unwrap();
        assert_eq!(s[0].seed, interval_sar::simulation::DEFAULT_SEED);
    }

    #[test]
    fn malformed_scenarios_are_input_errors() {
        for text in [
            "{",
            "[]",
            r#"{"rho_true":0.1}"#,
            r#"{"lattice":{"type":"hex"},"rho_true":0}"#,
        ] {
            assert_eq!(parse_scenarios(text, None).unwrap_err().code, crate::error::EXIT_INPUT);
        }
        assert!(check_name("../x").is_err());
        assert!(check_name("rook_10x12_rho0.4_N11").is_ok());
    }
}
