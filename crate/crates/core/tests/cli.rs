use std::fs;
use std::path::Path;
use std::process::Command;

use shapeprint::field::{Grid2D, ScalarField2D};
use shapeprint::mesh::StlFormat;
use shapeprint::pipeline::{export_stl, height_to_mesh};
use shapeprint::slicer::parse_gcode;

fn shapeprint(dir: &Path, args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_shapeprint")).current_dir(dir).args(args).output().unwrap();
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stdout).into_owned(), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn write_slab(dir: &Path) {
    let grid = Grid2D::square(0.0, 12.0, 4).unwrap();
    let m = height_to_mesh(&ScalarField2D::constant(grid, 3.0), 1.0, "slab").unwrap();
    export_stl(&m, &dir.join("slab.stl"), StlFormat::Ascii).unwrap();
}

#[test]
fn version_and_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out, _) = shapeprint(dir.path(), &["--version"]);
    assert_eq!(code, 0);
    assert!(out.starts_with("shapeprint "));
    assert_eq!(shapeprint(dir.path(), &["slice", "--bogus"]).0, 2);
    let (code, _, err) = shapeprint(dir.path(), &["slice", "--stl", "missing.stl", "--out", "x.gcode"]);
    assert_eq!(code, 2);
    assert!(err.contains("missing.stl"));
}

#[test]
fn mesh_and_slice_commands() {
    let dir = tempfile::tempdir().unwrap();
    write_slab(dir.path());
    let (code, out, _) = shapeprint(dir.path(), &["mesh", "validate", "--stl", "slab.stl"]);
    assert_eq!((code, out.trim()), (0, "valid"));
    assert_eq!(shapeprint(dir.path(), &["mesh", "convert", "--stl", "slab.stl", "--format", "binary", "--out", "slab.bin.stl"]).0, 0);
    let args = ["slice", "--stl", "slab.bin.stl", "--layer-height", "0.5", "--infill", "square", "--spacing", "2", "--out", "slab.gcode", "--report", "m.json"];
    assert_eq!(shapeprint(dir.path(), &args).0, 0);
    let program = parse_gcode(&fs::read_to_string(dir.path().join("slab.gcode")).unwrap()).unwrap();
    assert!(!program.commands.is_empty());
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("m.json")).unwrap()).unwrap();
    assert_eq!(report["layers"], 2);
    assert!(report["metrics"]["material_length_mm"].as_f64().unwrap() > 0.0);
}

#[test]
fn slice_only_config_writes_gcode_only() {
    let dir = tempfile::tempdir().unwrap();
    write_slab(dir.path());
    fs::write(dir.path().join("run.cfg"), "[input]\nstl = slab.stl\n[output]\ndir = out\nreport = none\n[slice]\nlayer_height = 0.5\n").unwrap();
    let (code, _, err) = shapeprint(dir.path(), &["--config", "run.cfg"]);
    assert_eq!(code, 0, "{err}");
    let names: Vec<_> = fs::read_dir(dir.path().join("out")).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(names, ["print.gcode"]);
}

#[test]
fn bad_config_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.cfg"), "[slice]\nlayer_height = thick\n").unwrap();
    assert_eq!(shapeprint(dir.path(), &["pipeline", "--config", "bad.cfg"]).0, 2);
}
