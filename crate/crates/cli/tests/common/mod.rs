#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

pub const BIN: &str = env!("CARGO_BIN_EXE_detgeom");

pub fn run(out_dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .arg("--out-dir")
        .arg(out_dir)
        .args(args)
        .env_remove("DETGEOM_OUT_DIR")
        .output()
        .expect("spawn detgeom")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Object: (class name, [xmin, ymin, xmax, ymax]).
pub fn voc_xml(width: u32, height: u32, objects: &[(&str, [f64; 4])]) -> String {
    let mut s = format!(
        "<annotation>\n  <filename>x.png</filename>\n  <size><width>{width}</width><height>{height}</height><depth>3</depth></size>\n"
    );
    for (name, b) in objects {
        s += &format!(
            "  <object><name>{name}</name><difficult>0</difficult><bndbox><xmin>{}</xmin><ymin>{}</ymin><xmax>{}</xmax><ymax>{}</ymax></bndbox></object>\n",
            b[0], b[1], b[2], b[3]
        );
    }
    s + "</annotation>\n"
}

pub fn write_voc(dir: &Path, stem: &str, width: u32, height: u32, objects: &[(&str, [f64; 4])]) {
    std::fs::write(dir.join(format!("{stem}.xml")), voc_xml(width, height, objects)).unwrap();
}

/// Binary PGM filled with one intensity.
pub fn write_pgm(path: &Path, w: usize, h: usize, value: u8) {
    let mut bytes = format!("P5\n{w} {h}\n255\n").into_bytes();
    bytes.extend(std::iter::repeat_n(value, w * h));
    std::fs::write(path, bytes).unwrap();
}

/// Parses `<sub>.manifest.json` in `dir` and checks its fields; returns the parsed value.
pub fn check_manifest(dir: &Path, sub: &str) -> Result<serde_json::Value, String> {
    let path = dir.join(format!("{sub}.manifest.json"));
    let text = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    if v["subcommand"] != sub {
        return Err(format!("{sub}: subcommand is {}", v["subcommand"]));
    }
    if !v["params"].is_object() {
        return Err(format!("{sub}: params is not an object"));
    }
    let inputs = v["inputs"].as_object().ok_or(format!("{sub}: inputs is not an object"))?;
    for (p, digest) in inputs {
        let d = digest.as_str().unwrap_or("");
        if d.len() != 64 || !d.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(format!("{sub}: bad digest for {p}"));
        }
    }
    let outputs = v["outputs"].as_array().ok_or(format!("{sub}: outputs is not an array"))?;
    for o in outputs {
        let o = o.as_str().unwrap_or("");
        if !Path::new(o).is_file() {
            return Err(format!("{sub}: output {o} missing"));
        }
    }
    if v["tool_version"].as_str().is_none_or(str::is_empty) {
        return Err(format!("{sub}: no tool version"));
    }
    let ts = v["timestamp"].as_str().unwrap_or("");
    chrono::DateTime::parse_from_rfc3339(ts).map_err(|e| format!("{sub}: timestamp '{ts}': {e}"))?;
    Ok(v)
}
