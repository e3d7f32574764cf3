//! Command-line front end. Exit status: 0 on success, 2 on bad input, 3 when
//! a solver stops without converging.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use shapeprint::field::{read_csv, read_pgm, write_csv, write_pgm, write_raw3, Grid2D, Grid3D, PgmFormat, ScalarField2D, ScalarField3D};
use shapeprint::geom::Vec3;
use shapeprint::mesh::{read_stl, validate, StlFormat};
use shapeprint::photostereo::{assemble_bf, solve_transport, PsProblem};
use shapeprint::pipeline::{
    export_stl, height_to_mesh, load_image, parse_vec3, run_detect, run_fix, run_pipeline, run_sfs, run_slice, OverhangSettings, PipelineConfig,
    SfsSettings, SliceSettings,
};
use shapeprint::sdf::sample_sdf;
use shapeprint::Error;

#[derive(Parser)]
#[command(name = "shapeprint", version, about = "From shaded images to printable objects and G-code")]
struct Cli {
    /// Run the pipeline described by this configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Shape from shading.
    #[command(subcommand)]
    Sfs(SfsCommand),
    /// Two-image photometric stereo.
    #[command(subcommand)]
    Ps(PsCommand),
    /// Mesh construction, checking and conversion.
    #[command(subcommand)]
    Mesh(MeshCommand),
    /// Signed distance sampling.
    #[command(subcommand)]
    Sdf(SdfCommand),
    /// Overhang detection and repair.
    #[command(subcommand)]
    Overhang(OverhangCommand),
    /// Slice a mesh and write G-code.
    Slice(SliceArgs),
    /// Run the stages selected in the configuration file.
    Pipeline,
}

#[derive(Subcommand)]
enum SfsCommand {
    /// Reconstruct a heightfield from one image.
    Solve {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        mask: Option<PathBuf>,
        #[arg(long, default_value = "lambert")]
        model: String,
        /// Light direction as `lx,ly,lz`.
        #[arg(long, default_value = "0,0,1", allow_hyphen_values = true)]
        light: String,
        #[arg(long, default_value_t = 1.0)]
        mu: f64,
        /// Pixel pitch.
        #[arg(long, default_value_t = 1.0)]
        h: f64,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        #[arg(long, default_value_t = 0.0)]
        roughness: f64,
        /// Output `.pgm` (normalized) or `.csv` (exact heights).
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum PsCommand {
    /// Reconstruct a heightfield from two images under different lights.
    Solve {
        #[arg(long)]
        i1: PathBuf,
        #[arg(long)]
        i2: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        l1: String,
        #[arg(long, allow_hyphen_values = true)]
        l2: String,
        /// Boundary heights as CSV; zero when omitted.
        #[arg(long)]
        g: Option<PathBuf>,
        #[arg(long)]
        mask: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum MeshCommand {
    /// Closed solid over a heightfield (CSV or PGM).
    FromHeight {
        #[arg(long)]
        height: PathBuf,
        #[arg(long)]
        mask: Option<PathBuf>,
        #[arg(long, default_value_t = 1.0)]
        pixel_size: f64,
        /// Multiplier for PGM grey levels.
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        #[arg(long, default_value_t = 1.0)]
        base: f64,
        #[arg(long, default_value = "ascii")]
        format: StlFormat,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check the STL rules and report defects.
    Validate {
        #[arg(long)]
        stl: PathBuf,
    },
    /// Rewrite an STL file in the other encoding.
    Convert {
        #[arg(long)]
        stl: PathBuf,
        #[arg(long)]
        format: StlFormat,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum SdfCommand {
    /// Sample the signed distance on a grid around the mesh.
    Sample {
        #[arg(long)]
        stl: PathBuf,
        /// Nodes per axis as `nx,ny,nz`.
        #[arg(long)]
        dims: String,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct OverhangArgs {
    #[arg(long)]
    stl: PathBuf,
    /// Limit angle in degrees.
    #[arg(long, default_value_t = 45.0)]
    alpha: f64,
    /// Grid spacing.
    #[arg(long, default_value_t = 2.0)]
    spacing: f64,
}

#[derive(Subcommand)]
enum OverhangCommand {
    /// Write the overhang mask (1 on overhang nodes) as a raw grid.
    Detect {
        #[command(flatten)]
        common: OverhangArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Grow the object until it prints without supports.
    Fix {
        #[command(flatten)]
        common: OverhangArgs,
        #[arg(long)]
        c1: Option<f64>,
        #[arg(long)]
        c2: Option<f64>,
        #[arg(long, default_value_t = 10.0)]
        tf: f64,
        #[arg(long)]
        out: PathBuf,
        /// Also write the added material.
        #[arg(long)]
        diff: Option<PathBuf>,
    },
}

#[derive(Args)]
struct SliceArgs {
    #[arg(long)]
    stl: PathBuf,
    #[arg(long, default_value_t = 0.2)]
    layer_height: f64,
    #[arg(long, default_value = "eikonal", value_parser = ["eikonal", "square"])]
    infill: String,
    #[arg(long, default_value_t = 2.0)]
    spacing: f64,
    #[arg(long, default_value_t = shapeprint::slicer::DEFAULT_FLOW)]
    flow: f64,
    #[arg(long)]
    out: PathBuf,
    /// Metrics as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
}

fn is_csv(p: &Path) -> bool {
    p.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

fn write_height(height: &ScalarField2D, out: &Path) -> shapeprint::Result<()> {
    if is_csv(out) {
        return write_csv(height, out);
    }
    let (_, max) = height.min_max();
    write_pgm(&height.map(|u| if max > 0.0 { u / max } else { 0.0 }), out, PgmFormat::Binary, 65535)
}

fn to_json<T: serde::Serialize>(v: &T) -> shapeprint::Result<String> {
    serde_json::to_string_pretty(v).map_err(|e| Error::InvalidInput(e.to_string()))
}

fn overhang_settings(a: &OverhangArgs) -> OverhangSettings {
    OverhangSettings { alpha_deg: a.alpha, spacing: a.spacing, ..OverhangSettings::default() }
}

fn run(cli: Cli) -> shapeprint::Result<()> {
    let command = match (cli.command, &cli.config) {
        (Some(c), _) => c,
        (None, Some(_)) => Command::Pipeline,
        (None, None) => return Err(Error::InvalidInput("no command given; see --help".into())),
    };
    match command {
        Command::Pipeline => {
            let path = cli.config.ok_or_else(|| Error::InvalidInput("pipeline needs --config".into()))?;
            let report = run_pipeline(&PipelineConfig::load(&path)?)?;
            for a in &report.artifacts {
                println!("{}", a.display());
            }
        }
        Command::Sfs(SfsCommand::Solve { image, mask, model, light, mu, h, tol, roughness, out }) => {
            let settings =
                SfsSettings { image: Some(image), mask, model, light: parse_vec3(&light)?, mu, tol, pixel_size: h, roughness, ..SfsSettings::default() };
            let sol = run_sfs(&settings)?;
            write_height(&sol.height, &out)?;
            println!("iterations {} residual {:e} clamped {}", sol.iterations, sol.residual, sol.clamped_pixels);
        }
        Command::Ps(PsCommand::Solve { i1, i2, l1, l2, g, mask, out }) => {
            let a = load_image(&i1, mask.as_deref(), 1.0)?;
            let b = load_image(&i2, mask.as_deref(), 1.0)?;
            let boundary = match g {
                Some(p) => read_csv(p)?,
                None => ScalarField2D::constant(a.grid, 0.0),
            };
            let boundary = ScalarField2D::new(a.grid, boundary.values)?;
            let lights = [Vec3::from_array(parse_vec3(&l1)?), Vec3::from_array(parse_vec3(&l2)?)];
            let problem = PsProblem::new([a, b], lights, boundary)?;
            let sol = solve_transport(&assemble_bf(&problem), &problem.boundary)?;
            write_height(&sol.height, &out)?;
            println!("residual {:e} degenerate {} unreachable {}", sol.residual, sol.degenerate.len(), sol.unreachable.len());
        }
        Command::Mesh(MeshCommand::FromHeight { height, mask, pixel_size, scale, base, format, out }) => {
            let raw = if is_csv(&height) { read_csv(&height)? } else { read_pgm(&height)?.map(|v| v * scale) };
            let grid = Grid2D::new([0.0, 0.0], [pixel_size; 2], raw.grid.dims)?;
            let mut field = ScalarField2D::new(grid, raw.values)?;
            if let Some(m) = mask {
                let m = read_pgm(m)?;
                field = field.with_mask(m.values.iter().map(|&v| v > 0.0).collect())?;
            }
            let mesh = height_to_mesh(&field, base, "object")?;
            let shift = export_stl(&mesh, &out, format)?;
            println!("{} facets, shift {} {} {}", mesh.len(), shift.x, shift.y, shift.z);
        }
        Command::Mesh(MeshCommand::Validate { stl }) => {
            let report = validate(&read_stl(&stl)?);
            println!("{report}");
            if !report.is_valid() {
                return Err(Error::InvalidInput(format!("{} defects", report.defect_count())));
            }
        }
        Command::Mesh(MeshCommand::Convert { stl, format, out }) => {
            shapeprint::mesh::write_stl(&read_stl(&stl)?, &out, format)?;
        }
        Command::Sdf(SdfCommand::Sample { stl, dims, out }) => {
            let mesh = read_stl(&stl)?;
            let n = parse_vec3(&dims)?;
            if n.iter().any(|&d| d < 2.0 || d.fract() != 0.0) {
                return Err(Error::InvalidInput("dims must be integers of at least 2".into()));
            }
            let (lo, hi) = mesh.bounds().ok_or_else(|| Error::InvalidInput("empty mesh".into()))?;
            let pad = (hi - lo) * 0.1;
            let (lo, hi) = (lo - pad, hi + pad);
            let spacing = [0, 1, 2].map(|a| (hi[a] - lo[a]) / (n[a] - 1.0));
            let grid = Grid3D::new(lo.to_array(), spacing, n.map(|d| d as usize))?;
            write_raw3(&sample_sdf(&mesh, grid)?, &out)?;
        }
        Command::Overhang(OverhangCommand::Detect { common, out }) => {
            let d = run_detect(&read_stl(&common.stl)?, &overhang_settings(&common))?;
            let mask = ScalarField3D::new(d.t1.grid, d.overhang.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect())?;
            write_raw3(&mask, &out)?;
            println!("{} overhang nodes", d.overhang_count());
            if !d.converged {
                return Err(Error::NonConvergence { iterations: 0, residual: f64::NAN });
            }
        }
        Command::Overhang(OverhangCommand::Fix { common, c1, c2, tf, out, diff }) => {
            let settings = OverhangSettings { c1, c2, t_final: tf, ..overhang_settings(&common) };
            let mesh = read_stl(&common.stl)?;
            let fix = run_fix(&mesh, &settings)?;
            export_stl(&fix.fixed, &out, StlFormat::Ascii)?;
            if let Some(p) = diff {
                match &fix.added {
                    Some(a) => {
                        export_stl(a, &p, StlFormat::Ascii)?;
                    }
                    None => println!("nothing added; {} not written", p.display()),
                }
            }
            println!("{}", to_json(&fix.summary)?);
            if !fix.summary.printable {
                return Err(Error::NonConvergence { iterations: fix.summary.steps, residual: fix.summary.unprintable_after as f64 });
            }
        }
        Command::Slice(a) => {
            let settings = SliceSettings { layer_height: a.layer_height, infill: a.infill, spacing: a.spacing, flow: a.flow, ..SliceSettings::default() };
            let (program, summary) = run_slice(&read_stl(&a.stl)?, &settings)?;
            fs::write(&a.out, program.to_text())?;
            let json = to_json(&summary)?;
            match a.report {
                Some(p) => fs::write(p, json)?,
                None => println!("{json}"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::NonConvergence { .. } => 3,
                _ => 2,
            })
        }
    }
}
