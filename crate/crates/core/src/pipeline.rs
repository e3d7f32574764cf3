//! Stage runners behind the command-line tool and the line-based pipeline
//! configuration.
//!
//! A configuration is a sequence of `[block]` headers, each followed by
//! `key = value` lines; `#` starts a comment. The stage blocks `sfs`,
//! `mesh`, `overhang` and `slice` select the stages to run (always in that
//! order); `input` and `output` hold paths. Every setting has a default, and
//! the settings in force are written into the run report.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::field::{read_csv, read_pgm, write_csv, write_pgm, Grid2D, PgmFormat, ScalarField2D};
use crate::geom::Vec3;
use crate::levelset::LevelSetState;
use crate::mesh::{extract_isosurface, heightfield_to_solid, read_stl, validate, write_stl, StlFormat, TriangleMesh};
use crate::overhang::{added_region, detect_overhangs, grid_around, repair_overhangs, Detection, PrintConfig, Printability};
use crate::reflectance::{LightSetup, Model, ReflectanceParams};
use crate::sdf::sample_sdf;
use crate::sfs::{solve_fixed_point, solve_vertical, Boundary, SfsProblem, SfsSolution};
use crate::slicer::{emit_gcode, infill_eikonal, infill_square, metrics, plan_toolpath, slice, Feeds, GCodeProgram, Infill, Metrics};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SfsSettings {
    pub image: Option<PathBuf>,
    /// Non-zero pixels are inside the object.
    pub mask: Option<PathBuf>,
    pub model: String,
    pub light: [f64; 3],
    pub mu: f64,
    pub tol: f64,
    pub max_iterations: usize,
    /// Pixel pitch in mm; heights come out in the same unit.
    pub pixel_size: f64,
    pub roughness: f64,
    pub k_ambient: f64,
    pub k_diffuse: f64,
    pub k_specular: f64,
    pub exponent: f64,
}

impl Default for SfsSettings {
    fn default() -> Self {
        SfsSettings {
            image: None,
            mask: None,
            model: "lambert".into(),
            light: [0.0, 0.0, 1.0],
            mu: 1.0,
            tol: 1e-8,
            max_iterations: 100_000,
            pixel_size: 1.0,
            roughness: 0.0,
            k_ambient: 0.0,
            k_diffuse: 1.0,
            k_specular: 0.0,
            exponent: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeshSettings {
    /// Thickness of the slab added under the heightfield, in mm.
    pub base: f64,
    pub format: String,
}

impl Default for MeshSettings {
    fn default() -> Self {
        MeshSettings { base: 1.0, format: "ascii".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverhangSettings {
    /// Limit angle in degrees.
    pub alpha_deg: f64,
    /// Spacing of the signed-distance grid in mm.
    pub spacing: f64,
    pub t_final: f64,
    pub check_every: usize,
    pub c1: Option<f64>,
    pub c2: Option<f64>,
}

impl Default for OverhangSettings {
    fn default() -> Self {
        OverhangSettings { alpha_deg: 45.0, spacing: 2.0, t_final: 10.0, check_every: 10, c1: None, c2: None }
    }
}

impl OverhangSettings {
    /// Print configuration with the plate at `z_min`.
    pub fn print_config(&self, z_min: f64) -> PrintConfig {
        PrintConfig {
            alpha: self.alpha_deg.to_radians(),
            z_min,
            c1: self.c1,
            c2: self.c2,
            t_final: self.t_final,
            check_every: self.check_every,
            ..PrintConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SliceSettings {
    pub layer_height: f64,
    /// `eikonal` or `square`.
    pub infill: String,
    pub spacing: f64,
    pub flow: f64,
    pub feed_perimeter: f64,
    pub feed_infill: f64,
    pub feed_travel: f64,
}

impl Default for SliceSettings {
    fn default() -> Self {
        let feeds = Feeds::default();
        SliceSettings {
            layer_height: 0.2,
            infill: "eikonal".into(),
            spacing: 2.0,
            flow: crate::slicer::DEFAULT_FLOW,
            feed_perimeter: feeds.perimeter,
            feed_infill: feeds.infill,
            feed_travel: feeds.travel,
        }
    }
}

impl SliceSettings {
    pub fn feeds(&self) -> Feeds {
        Feeds { perimeter: self.feed_perimeter, infill: self.feed_infill, travel: self.feed_travel }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Sfs,
    Mesh,
    Overhang,
    Slice,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineConfig {
    pub stages: Vec<Stage>,
    pub out_dir: PathBuf,
    /// Run report file name inside `out_dir`; `None` writes no report.
    pub report: Option<String>,
    /// Heightfield for a run that starts at the mesh stage.
    pub input_height: Option<PathBuf>,
    /// Mesh for a run that starts after the mesh stage.
    pub input_stl: Option<PathBuf>,
    pub sfs: SfsSettings,
    pub mesh: MeshSettings,
    pub overhang: OverhangSettings,
    pub slice: SliceSettings,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            stages: Vec::new(),
            out_dir: PathBuf::from("out"),
            report: Some("metrics.json".into()),
            input_height: None,
            input_stl: None,
            sfs: SfsSettings::default(),
            mesh: MeshSettings::default(),
            overhang: OverhangSettings::default(),
            slice: SliceSettings::default(),
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Parse(format!("bad value '{v}' for '{key}'")))
}

fn parse_opt(key: &str, v: &str) -> Result<Option<f64>> {
    if v == "auto" {
        Ok(None)
    } else {
        parse_num(key, v).map(Some)
    }
}

/// Three comma-separated numbers.
pub fn parse_vec3(v: &str) -> Result<[f64; 3]> {
    let parts: Vec<f64> = v.split(',').map(|s| parse_num("vector", s.trim())).collect::<Result<_>>()?;
    parts.try_into().map_err(|_| Error::Parse(format!("expected three comma-separated numbers, got '{v}'")))
}

impl PipelineConfig {
    /// Parses configuration text; relative paths are taken relative to `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut c = PipelineConfig::default();
        let path = |v: &str| base_dir.join(v);
        let mut block = String::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                block = name.trim().to_ascii_lowercase();
                let stage = match block.as_str() {
                    "sfs" => Some(Stage::Sfs),
                    "mesh" => Some(Stage::Mesh),
                    "overhang" => Some(Stage::Overhang),
                    "slice" => Some(Stage::Slice),
                    "input" | "output" => None,
                    other => return Err(Error::Parse(format!("line {}: unknown block [{other}]", n + 1))),
                };
                if let Some(s) = stage {
                    if c.stages.contains(&s) {
                        return Err(Error::Parse(format!("line {}: block [{block}] repeated", n + 1)));
                    }
                    c.stages.push(s);
                }
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Parse(format!("line {}: expected 'key = value'", n + 1)));
            };
            let (key, v) = (key.trim(), value.trim());
            let unknown = || Err(Error::Parse(format!("line {}: unknown key '{key}' in [{block}]", n + 1)));
            match block.as_str() {
                "input" => match key {
                    "height" => c.input_height = Some(path(v)),
                    "stl" => c.input_stl = Some(path(v)),
                    _ => return unknown(),
                },
                "output" => match key {
                    "dir" => c.out_dir = path(v),
                    "report" => c.report = if v == "none" { None } else { Some(v.to_string()) },
                    _ => return unknown(),
                },
                "sfs" => {
                    let s = &mut c.sfs;
                    match key {
                        "image" => s.image = Some(path(v)),
                        "mask" => s.mask = Some(path(v)),
                        "model" => {
                            v.parse::<Model>()?;
                            s.model = v.to_string();
                        }
                        "light" => s.light = parse_vec3(v)?,
                        "mu" => s.mu = parse_num(key, v)?,
                        "tol" => s.tol = parse_num(key, v)?,
                        "max_iterations" => s.max_iterations = parse_num(key, v)?,
                        "pixel_size" => s.pixel_size = parse_num(key, v)?,
                        "roughness" => s.roughness = parse_num(key, v)?,
                        "k_ambient" => s.k_ambient = parse_num(key, v)?,
                        "k_diffuse" => s.k_diffuse = parse_num(key, v)?,
                        "k_specular" => s.k_specular = parse_num(key, v)?,
                        "exponent" => s.exponent = parse_num(key, v)?,
                        _ => return unknown(),
                    }
                }
                "mesh" => match key {
                    "base" => c.mesh.base = parse_num(key, v)?,
                    "format" => {
                        v.parse::<StlFormat>()?;
                        c.mesh.format = v.to_string();
                    }
                    _ => return unknown(),
                },
                "overhang" => {
                    let o = &mut c.overhang;
                    match key {
                        "alpha" => o.alpha_deg = parse_num(key, v)?,
                        "spacing" => o.spacing = parse_num(key, v)?,
                        "t_final" => o.t_final = parse_num(key, v)?,
                        "check_every" => o.check_every = parse_num(key, v)?,
                        "c1" => o.c1 = parse_opt(key, v)?,
                        "c2" => o.c2 = parse_opt(key, v)?,
                        _ => return unknown(),
                    }
                }
                "slice" => {
                    let s = &mut c.slice;
                    match key {
                        "layer_height" => s.layer_height = parse_num(key, v)?,
                        "infill" => {
                            if v != "eikonal" && v != "square" {
                                return Err(Error::Parse(format!("line {}: infill must be 'eikonal' or 'square'", n + 1)));
                            }
                            s.infill = v.to_string();
                        }
                        "spacing" => s.spacing = parse_num(key, v)?,
                        "flow" => s.flow = parse_num(key, v)?,
                        "feed_perimeter" => s.feed_perimeter = parse_num(key, v)?,
                        "feed_infill" => s.feed_infill = parse_num(key, v)?,
                        "feed_travel" => s.feed_travel = parse_num(key, v)?,
                        _ => return unknown(),
                    }
                }
                _ => return Err(Error::Parse(format!("line {}: setting outside any block", n + 1))),
            }
        }
        let order = [Stage::Sfs, Stage::Mesh, Stage::Overhang, Stage::Slice];
        c.stages.sort_by_key(|s| order.iter().position(|o| o == s));
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = crate::error::read_text(path)?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }
}

/// Image with pixel pitch `pixel_size` and the optional mask applied.
pub fn load_image(image: &Path, mask: Option<&Path>, pixel_size: f64) -> Result<ScalarField2D> {
    if !(pixel_size > 0.0 && pixel_size.is_finite()) {
        return invalid(format!("pixel size must be positive, got {pixel_size}"));
    }
    let img = read_pgm(image)?;
    let grid = Grid2D::new([0.0, 0.0], [pixel_size; 2], img.grid.dims)?;
    let mut field = ScalarField2D::new(grid, img.values)?;
    if let Some(m) = mask {
        let m = read_pgm(m)?;
        if m.grid.dims != grid.dims {
            return invalid("mask and image sizes differ");
        }
        field = field.with_mask(m.values.iter().map(|&v| v > 0.0).collect())?;
    }
    Ok(field)
}

impl SfsSettings {
    /// Reflectance parameters named by `model`.
    pub fn params(&self) -> Result<ReflectanceParams> {
        let params = match self.model.parse::<Model>()? {
            Model::Lambertian => ReflectanceParams::lambertian(),
            Model::OrenNayar => ReflectanceParams::oren_nayar(self.roughness),
            Model::Phong => ReflectanceParams::phong(self.k_ambient, self.k_diffuse, self.k_specular, self.exponent),
            Model::BlinnPhong => ReflectanceParams::blinn_phong(self.k_ambient, self.k_diffuse, self.k_specular, self.exponent),
        };
        params.validate()?;
        Ok(params)
    }
}

/// Reconstructs the height from the image named in the settings.
pub fn run_sfs(s: &SfsSettings) -> Result<SfsSolution> {
    let image = s.image.as_deref().ok_or_else(|| Error::InvalidInput("sfs needs an image".into()))?;
    solve_image(load_image(image, s.mask.as_deref(), s.pixel_size)?, s)
}

/// Reconstructs the height from one image with zero height on the domain
/// boundary. A vertical light uses fast sweeping; any other light the
/// semi-Lagrangian fixed point. An iteration cap without convergence is an
/// error.
pub fn solve_image(image: ScalarField2D, s: &SfsSettings) -> Result<SfsSolution> {
    let mut problem = SfsProblem::new(image)
        .with_light(LightSetup::with_light(Vec3::from_array(s.light))?)
        .with_params(s.params()?)
        .with_boundary(Boundary::Constant(0.0));
    problem.mu = s.mu;
    problem.tol = s.tol;
    problem.max_iterations = s.max_iterations;
    let sol = match solve_vertical(&problem) {
        Err(Error::Unsupported(_)) => solve_fixed_point(&problem)?,
        other => other?,
    };
    if !sol.converged {
        return Err(Error::NonConvergence { iterations: sol.iterations, residual: sol.residual });
    }
    Ok(sol)
}

/// Distance from the coordinate planes of meshes written to STL, in mm.
pub const EXPORT_MARGIN: f64 = 1.0;

/// Writes the mesh, first moving it into the positive octant when a
/// coordinate is at or below zero. Returns the shift applied.
pub fn export_stl(mesh: &TriangleMesh, path: &Path, format: StlFormat) -> Result<Vec3> {
    let (moved, shift) = mesh.shifted_positive(EXPORT_MARGIN);
    write_stl(&moved, path, format)?;
    Ok(shift)
}

/// Solid over the heightfield standing on `z = 0`, `base` thick under the
/// lowest height.
pub fn height_to_mesh(height: &ScalarField2D, base: f64, name: &str) -> Result<TriangleMesh> {
    if !(base > 0.0 && base.is_finite()) {
        return invalid(format!("base thickness must be positive, got {base}"));
    }
    let (lo, _) = height.min_max();
    let solid = heightfield_to_solid(height, lo - base, name)?;
    Ok(solid.translated(Vec3::new(0.0, 0.0, base - lo)))
}

/// Outcome of overhang repair on a mesh.
#[derive(Debug, Clone)]
pub struct FixOutcome {
    /// The input mesh when it was already printable, otherwise the zero level
    /// of the repaired signed distance.
    pub fixed: TriangleMesh,
    /// Added material, when there is any.
    pub added: Option<TriangleMesh>,
    pub summary: OverhangSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverhangSummary {
    pub steps: usize,
    pub final_time: f64,
    pub printable: bool,
    pub unprintable_before: usize,
    pub unprintable_after: usize,
    pub grid_nodes: usize,
}

/// Signed distance of the mesh on a grid of spacing `spacing` with three
/// cells of margin.
pub fn mesh_sdf(mesh: &TriangleMesh, spacing: f64) -> Result<crate::field::ScalarField3D> {
    sample_sdf(mesh, grid_around(mesh, spacing, 3)?)
}

fn plate_height(mesh: &TriangleMesh) -> Result<f64> {
    Ok(mesh.bounds().ok_or_else(|| Error::InvalidInput("empty mesh".into()))?.0.z)
}

/// Overhang mask of a mesh standing on its lowest point.
pub fn run_detect(mesh: &TriangleMesh, s: &OverhangSettings) -> Result<Detection> {
    let config = s.print_config(plate_height(mesh)?);
    detect_overhangs(&mesh_sdf(mesh, s.spacing)?, &config)
}

/// Grows the mesh until it is printable on its lowest point.
pub fn run_fix(mesh: &TriangleMesh, s: &OverhangSettings) -> Result<FixOutcome> {
    let config = s.print_config(plate_height(mesh)?);
    let phi = mesh_sdf(mesh, s.spacing)?;
    let state = LevelSetState::new(phi);
    let r = repair_overhangs(&state, &config)?;
    let before = crate::overhang::PrintabilityReport::assess(&state.phi, &config).count(Printability::Unprintable);
    let summary = OverhangSummary {
        steps: r.steps,
        final_time: r.state.time,
        printable: r.printable,
        unprintable_before: before,
        unprintable_after: r.final_report.count(Printability::Unprintable),
        grid_nodes: state.phi.grid.len(),
    };
    if r.steps == 0 {
        return Ok(FixOutcome { fixed: mesh.clone(), added: None, summary });
    }
    let fixed = extract_isosurface(&r.state.phi, 0.0, &format!("{}_fixed", mesh.name))?;
    let diff = added_region(&state.phi, &r.state.phi)?;
    let added = if diff.values.iter().any(|&v| v < 0.0) { Some(extract_isosurface(&diff, 0.0, &format!("{}_added", mesh.name))?) } else { None };
    Ok(FixOutcome { fixed, added, summary })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SliceSummary {
    pub layers: usize,
    pub thin_parts: usize,
    pub infill_curves: usize,
    pub total_extrusion: f64,
    pub metrics: Metrics,
}

/// Slices, fills each layer (in parallel), plans the path and emits G-code.
/// Heights in the program are measured from the lowest point of the mesh.
pub fn run_slice(mesh: &TriangleMesh, s: &SliceSettings) -> Result<(GCodeProgram, SliceSummary)> {
    let z0 = plate_height(mesh)?;
    let layers = slice(&mesh.translated(Vec3::new(0.0, 0.0, -z0)), s.layer_height)?;
    let fill = |l: &crate::slicer::Layer| match s.infill.as_str() {
        "eikonal" => infill_eikonal(l, s.spacing),
        "square" => infill_square(l, s.spacing),
        other => invalid(format!("unknown infill '{other}'")),
    };
    let infill: Vec<Infill> = layers.par_iter().map(fill).collect::<Result<_>>()?;
    let path = plan_toolpath(&layers, &infill, &s.feeds())?;
    let program = emit_gcode(&path, s.flow)?;
    let summary = SliceSummary {
        layers: layers.len(),
        thin_parts: infill.iter().map(|i| i.thin_parts).sum(),
        infill_curves: infill.iter().map(|i| i.curves.len()).sum(),
        total_extrusion: program.total_extrusion(),
        metrics: metrics(&path),
    };
    Ok((program, summary))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SfsSummary {
    pub iterations: usize,
    pub residual: f64,
    pub clamped_pixels: usize,
    pub max_height: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeshSummary {
    pub facets: usize,
    pub volume: f64,
    pub watertight: bool,
}

/// What a pipeline run did; written as the JSON report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineReport {
    pub version: &'static str,
    pub config: PipelineConfig,
    pub artifacts: Vec<PathBuf>,
    pub sfs: Option<SfsSummary>,
    pub mesh: Option<MeshSummary>,
    pub overhang: Option<OverhangSummary>,
    pub slice: Option<SliceSummary>,
}

fn mesh_summary(m: &TriangleMesh) -> MeshSummary {
    MeshSummary { facets: m.len(), volume: m.signed_volume(), watertight: validate(m).is_watertight() }
}

/// Runs the configured stages in order, writing each artifact as soon as it
/// exists, so a failing stage leaves the earlier ones on disk.
pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineReport> {
    if config.stages.is_empty() {
        return invalid("configuration selects no stage");
    }
    fs::create_dir_all(&config.out_dir)?;
    let out = |name: &str| config.out_dir.join(name);
    let mut report =
        PipelineReport { version: env!("CARGO_PKG_VERSION"), config: config.clone(), artifacts: vec![], sfs: None, mesh: None, overhang: None, slice: None };
    let has = |s: Stage| config.stages.contains(&s);
    let stl_format: StlFormat = config.mesh.format.parse()?;

    let mut height: Option<ScalarField2D> = None;
    if has(Stage::Sfs) {
        let sol = run_sfs(&config.sfs)?;
        let (_, max) = sol.height.min_max();
        write_csv(&sol.height, out("height.csv"))?;
        let scaled = sol.height.map(|u| if max > 0.0 { u / max } else { 0.0 });
        write_pgm(&scaled, out("height.pgm"), PgmFormat::Binary, 65535)?;
        report.artifacts.extend([out("height.csv"), out("height.pgm")]);
        report.sfs = Some(SfsSummary { iterations: sol.iterations, residual: sol.residual, clamped_pixels: sol.clamped_pixels, max_height: max });
        height = Some(sol.height);
    }

    let mut mesh: Option<TriangleMesh> = None;
    if has(Stage::Mesh) {
        let h = match height.take() {
            Some(h) => h,
            None => {
                let p = config.input_height.as_deref().ok_or_else(|| Error::InvalidInput("mesh stage needs [sfs] or [input] height".into()))?;
                let f = read_csv(p)?;
                let ps = config.sfs.pixel_size;
                ScalarField2D::new(Grid2D::new([0.0, 0.0], [ps, ps], f.grid.dims)?, f.values)?
            }
        };
        let m = height_to_mesh(&h, config.mesh.base, "object")?;
        export_stl(&m, &out("object.stl"), stl_format)?;
        report.artifacts.push(out("object.stl"));
        report.mesh = Some(mesh_summary(&m));
        mesh = Some(m);
    }
    let take_mesh = |mesh: Option<TriangleMesh>| -> Result<TriangleMesh> {
        match mesh {
            Some(m) => Ok(m),
            None => {
                let p = config.input_stl.as_deref().ok_or_else(|| Error::InvalidInput("stage needs a mesh from [mesh] or [input] stl".into()))?;
                read_stl(p)
            }
        }
    };

    if has(Stage::Overhang) {
        let m = take_mesh(mesh.take())?;
        let fix = run_fix(&m, &config.overhang)?;
        export_stl(&fix.fixed, &out("fixed.stl"), stl_format)?;
        report.artifacts.push(out("fixed.stl"));
        if let Some(added) = &fix.added {
            export_stl(added, &out("added.stl"), stl_format)?;
            report.artifacts.push(out("added.stl"));
        }
        report.overhang = Some(fix.summary);
        mesh = Some(fix.fixed);
    }

    if has(Stage::Slice) {
        let m = take_mesh(mesh.take())?;
        let (program, summary) = run_slice(&m, &config.slice)?;
        fs::write(out("print.gcode"), program.to_text())?;
        report.artifacts.push(out("print.gcode"));
        report.slice = Some(summary);
    }

    if let Some(name) = &config.report {
        report.artifacts.push(out(name));
        let json = serde_json::to_string_pretty(&report).map_err(|e| Error::InvalidInput(format!("report: {e}")))?;
        fs::write(out(name), json)?;
    }
    Ok(report)
}
