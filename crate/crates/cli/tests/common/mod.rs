#![allow(dead_code)]

use interval_sar::interval::IntervalSample;
use interval_sar::weights::{write_weights, WeightMatrix};
use std::fmt::Write as _;
use std::path::Path;
use std::process::{Command, Output};

pub const BIN: &str = env!("CARGO_BIN_EXE_interval-sar");

pub fn geo_dataset() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/geo_synthetic.csv")
}

pub fn cli(args: &[&str]) -> Output {
    cli_env(args, &[])
}

pub fn cli_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(BIN);
    cmd.args(args).env_remove("INTERVAL_SAR_SEED");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

/// Runs and requires exit 0, returning stdout.
pub fn ok(args: &[&str]) -> String {
    let o = cli(args);
    assert!(o.status.success(), "{args:?} failed: {}", stderr(&o));
    stdout(&o)
}

pub fn json(s: &str) -> serde_json::Value {
    serde_json::from_str(s).unwrap_or_else(|e| panic!("not JSON ({e}): {s}"))
}

/// Writes a dataset CSV. `test` rows get `split=test`, the rest `train`;
/// without `test` there is no split column.
pub fn write_dataset(path: &Path, s: &IntervalSample, test: Option<&[usize]>) {
    let mut out = String::from("id,x_lower,x_upper,y_lower,y_upper");
    if test.is_some() {
        out.push_str(",split");
    }
    out.push('\n');
    for i in 0..s.len() {
        let (x, y) = (s.x()[i], s.y()[i]);
        write!(
            out,
            "u{i},{:?},{:?},{:?},{:?}",
            x.lower(),
            x.upper(),
            y.lower(),
            y.upper()
        )
        .unwrap();
        if let Some(t) = test {
            out.push_str(if t.contains(&i) { ",test" } else { ",train" });
        }
        out.push('\n');
    }
    std::fs::write(path, out).unwrap();
}

pub fn write_weights_file(path: &Path, w: &WeightMatrix) {
    let mut buf = Vec::new();
    write_weights(w, &mut buf).unwrap();
    std::fs::write(path, buf).unwrap();
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}
