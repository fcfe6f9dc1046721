#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::Path;
use std::process::{Command, Output};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// MovieLens-style `user::item::rating::timestamp` lines for users who each
/// like two of five item groups.
pub fn write_ratings(path: &Path, users: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let groups: Vec<usize> = (0..5).collect();
    let mut out = String::new();
    for u in 1..=users {
        let mine: Vec<usize> = groups.choose_multiple(&mut rng, 2).copied().collect();
        for t in 0..rng.random_range(10..30) {
            let g = mine[rng.random_range(0..2)];
            let x: f64 = rng.random();
            let item = g * 20 + (x * x * 20.0) as usize + 1;
            let rating = [2, 3, 4, 5, 5][rng.random_range(0..5)];
            let ts = 1000 + t * 10 + rng.random_range(0..10);
            writeln!(out, "{u}::{item}::{rating}::{ts}").unwrap();
        }
    }
    std::fs::write(path, out).unwrap();
}

pub fn amarec() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_amarec"));
    cmd.env_remove("AMAREC_DATA_DIR");
    cmd
}

pub fn run(args: &[&str]) -> Output {
    amarec().args(args).output().unwrap()
}

pub fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "amarec {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}
