#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bnp_cli::data::{read_table, DatasetTable};

/// Run the `bnp` binary inside `dir`.
pub fn bnp(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bnp"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("bnp binary runs")
}

/// Run and insist on success.
pub fn bnp_ok(dir: &Path, args: &[&str]) {
    let out = bnp(dir, args);
    assert!(
        out.status.success(),
        "bnp {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

pub fn table(path: PathBuf) -> DatasetTable {
    read_table(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

pub fn json(path: PathBuf) -> serde_json::Value {
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    serde_json::from_str(&text).unwrap()
}

/// Labels from an `item,group` file.
pub fn labels(path: PathBuf) -> Vec<usize> {
    table(path).rows.iter().map(|r| r[1] as usize).collect()
}

fn choose2(n: f64) -> f64 {
    n * (n - 1.0) / 2.0
}

/// Adjusted Rand index of two labelings.
pub fn adjusted_rand(a: &[usize], b: &[usize]) -> f64 {
    let ka = a.iter().max().map_or(0, |m| m + 1);
    let kb = b.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![vec![0.0; kb]; ka];
    for (&x, &y) in a.iter().zip(b) {
        table[x][y] += 1.0;
    }
    let index: f64 = table.iter().flatten().map(|&c| choose2(c)).sum();
    let rows: f64 = table.iter().map(|r| choose2(r.iter().sum())).sum();
    let cols: f64 = (0..kb)
        .map(|j| choose2(table.iter().map(|r| r[j]).sum()))
        .sum();
    let total = choose2(a.len() as f64);
    let expected = rows * cols / total;
    let max = 0.5 * (rows + cols);
    if max == expected {
        return 1.0;
    }
    (index - expected) / (max - expected)
}

/// Trapezoid integral of a `x,density` table.
pub fn trapezoid(rows: &[Vec<f64>]) -> f64 {
    rows.windows(2)
        .map(|w| 0.5 * (w[1][0] - w[0][0]) * (w[0][1] + w[1][1]))
        .sum()
}
