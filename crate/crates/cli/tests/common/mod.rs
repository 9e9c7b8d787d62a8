#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dhlcm::simulation::{generate, GeneratorConfig, Simulated};

pub fn dhlcm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dhlcm")).args(args).output().expect("spawn dhlcm")
}

pub fn stdout_json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "exit {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is one JSON record")
}

pub fn write_rows<T: std::fmt::Display>(path: &Path, rows: &[Vec<T>]) {
    let mut s = String::new();
    for row in rows {
        let line: Vec<String> = row.iter().map(ToString::to_string).collect();
        writeln!(s, "{}", line.join(",")).unwrap();
    }
    std::fs::write(path, s).unwrap();
}

pub fn write_labels(path: &Path, labels: &[usize]) {
    let s: String = labels.iter().map(|l| format!("{}\n", l + 1)).collect();
    std::fs::write(path, s).unwrap();
}

pub fn read_labels(path: &Path) -> Vec<usize> {
    std::fs::read_to_string(path).unwrap().lines().map(|l| l.trim().parse::<usize>().unwrap() - 1).collect()
}

pub fn read_csv(path: &Path) -> Vec<Vec<f64>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.split(',').map(|f| f.trim().parse().unwrap()).collect())
        .collect()
}

/// Integer matrix `R_ij = c_i t_{j, s_i}` with `c_i` in {1, 2}: an exact
/// rank-K product with planted classes.
pub struct IntegerFixture {
    pub rows: Vec<Vec<u32>>,
    pub labels: Vec<usize>,
}

pub fn integer_fixture(n: usize, j: usize, k: usize, unit_degrees: bool) -> IntegerFixture {
    let labels: Vec<usize> = (0..n).map(|i| (i * 7 + i / 3) % k).collect();
    let t = |f: usize, c: usize| ((f * 5 + c * 3 + f * c) % 6) as u32 + if f % k == c { 3 } else { 0 };
    let rows = (0..n)
        .map(|i| {
            let c = if unit_degrees { 1 } else { 1 + (i % 2) as u32 };
            (0..j).map(|f| c * t(f, labels[i])).collect()
        })
        .collect();
    IntegerFixture { rows, labels }
}

pub fn simulated(cfg: &GeneratorConfig) -> Simulated {
    generate(cfg).unwrap()
}

pub fn write_simulated(dir: &Path, name: &str, sim: &Simulated) -> (PathBuf, PathBuf) {
    let data = dir.join(format!("{name}.csv"));
    let truth = dir.join(format!("{name}-truth.txt"));
    let rows: Vec<Vec<u32>> = (0..sim.obs.n_subjects()).map(|i| sim.obs.row(i).to_vec()).collect();
    write_rows(&data, &rows);
    write_labels(&truth, &sim.truth.labels);
    (data, truth)
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}
