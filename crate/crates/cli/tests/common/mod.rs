#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const SIM_CONFIG: &str = concat!(
    env!("CARGO_MANIFEST_DIR"),
    "/../../configs/piecewise_three_state.toml"
);

/// The shipped simulation-study config with dotted-path overrides.
pub fn config_with(edits: &[(&str, toml::Value)]) -> String {
    let text = std::fs::read_to_string(SIM_CONFIG).unwrap();
    let mut root: toml::Table = text.parse().unwrap();
    for (path, value) in edits {
        let keys: Vec<&str> = path.split('.').collect();
        let mut t = &mut root;
        for k in &keys[..keys.len() - 1] {
            t = t
                .entry(k.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                .as_table_mut()
                .unwrap();
        }
        let last = keys[keys.len() - 1];
        if value.as_str() == Some("<remove>") {
            t.remove(last);
        } else {
            t.insert(last.to_string(), value.clone());
        }
    }
    toml::to_string(&root).unwrap()
}

pub fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("run.toml");
    std::fs::write(&p, text).unwrap();
    p
}

pub fn msjm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_msjm"))
        .args(args)
        .output()
        .expect("binary runs")
}

pub fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Every file of `dir` by name, as bytes.
pub fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    v.sort();
    v
}
