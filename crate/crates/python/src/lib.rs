//! Python module `shapeprint`: height maps, reconstruction, meshes, overhang
//! repair, slicing and the whole pipeline.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use shapeprint::field::{read_csv, read_pgm, write_csv, write_pgm, Grid2D, PgmFormat, ScalarField2D};
use shapeprint::geom::Vec3;
use shapeprint::mesh::{icosphere, read_stl, validate, StlFormat, TriangleMesh};
use shapeprint::photostereo::{assemble_bf, solve_transport, PsProblem};
use shapeprint::pipeline::{export_stl, height_to_mesh, run_fix, run_pipeline, run_slice, solve_image, OverhangSettings, PipelineConfig, SfsSettings, SliceSettings};
use shapeprint::reflectance::LightSetup;
use shapeprint::sfs::CameraModel;
use shapeprint::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::NonConvergence { .. } => PyRuntimeError::new_err(e.to_string()),
        Error::Io(_) => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// A scalar field on a regular grid, rows indexed by y. Pixels outside the
/// optional mask are not part of the domain.
#[pyclass(module = "shapeprint", skip_from_py_object)]
#[derive(Clone)]
pub struct HeightMap {
    field: ScalarField2D,
}

#[pymethods]
impl HeightMap {
    #[new]
    #[pyo3(signature = (rows, spacing = 1.0, origin = (0.0, 0.0), mask = None))]
    fn new(rows: Vec<Vec<f64>>, spacing: f64, origin: (f64, f64), mask: Option<Vec<Vec<bool>>>) -> PyResult<Self> {
        let ny = rows.len();
        let nx = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != nx) {
            return Err(PyValueError::new_err("rows must all have the same length"));
        }
        let grid = Grid2D::new([origin.0, origin.1], [spacing; 2], [nx, ny]).map_err(py_err)?;
        let mut field = ScalarField2D::new(grid, rows.concat()).map_err(py_err)?;
        if let Some(m) = mask {
            if m.len() != ny || m.iter().any(|r| r.len() != nx) {
                return Err(PyValueError::new_err("mask shape differs from the values"));
            }
            field = field.with_mask(m.concat()).map_err(py_err)?;
        }
        Ok(HeightMap { field })
    }

    /// Reads a PGM image (unit pixels, values scaled to [0, 1]).
    #[staticmethod]
    fn read_pgm(path: PathBuf) -> PyResult<Self> {
        read_pgm(path).map(|field| HeightMap { field }).map_err(py_err)
    }

    #[staticmethod]
    fn read_csv(path: PathBuf) -> PyResult<Self> {
        read_csv(path).map(|field| HeightMap { field }).map_err(py_err)
    }

    fn write_csv(&self, path: PathBuf) -> PyResult<()> {
        write_csv(&self.field, path).map_err(py_err)
    }

    /// Writes a 16-bit binary PGM; values must lie in [0, 1].
    fn write_pgm(&self, path: PathBuf) -> PyResult<()> {
        write_pgm(&self.field, path, PgmFormat::Binary, 65535).map_err(py_err)
    }

    /// `(rows, columns)`.
    #[getter]
    fn shape(&self) -> (usize, usize) {
        (self.field.grid.dims[1], self.field.grid.dims[0])
    }

    #[getter]
    fn spacing(&self) -> f64 {
        self.field.grid.spacing[0]
    }

    fn to_list(&self) -> Vec<Vec<f64>> {
        self.field.values.chunks(self.field.grid.dims[0]).map(<[f64]>::to_vec).collect()
    }

    fn get(&self, row: usize, col: usize) -> PyResult<f64> {
        let [nx, ny] = self.field.grid.dims;
        if row >= ny || col >= nx {
            return Err(PyValueError::new_err(format!("pixel ({row}, {col}) outside a {ny}x{nx} map")));
        }
        Ok(self.field.get(col, row))
    }

    /// Largest absolute difference over pixels in both domains.
    fn max_abs_diff(&self, other: &HeightMap) -> PyResult<f64> {
        if self.field.grid != other.field.grid {
            return Err(PyValueError::new_err("maps live on different grids"));
        }
        Ok(self.field.max_abs_diff(&other.field, |k| other.field.in_domain(k)))
    }

    fn __repr__(&self) -> String {
        let (r, c) = self.shape();
        format!("HeightMap({r}x{c}, spacing={})", self.spacing())
    }
}

type Point = (f64, f64, f64);

fn vec3(v: Point) -> Vec3 {
    Vec3::new(v.0, v.1, v.2)
}

/// Height from one shaded image, zero on the domain boundary.
#[pyfunction]
#[pyo3(signature = (image, light = (0.0, 0.0, 1.0), model = "lambertian", roughness = 0.0, k_ambient = 0.0, k_diffuse = 1.0, k_specular = 0.0, exponent = 1.0, mu = 1.0, tol = 1e-8, max_iterations = 100_000))]
#[allow(clippy::too_many_arguments)]
fn solve_sfs(
    image: &HeightMap,
    light: (f64, f64, f64),
    model: &str,
    roughness: f64,
    k_ambient: f64,
    k_diffuse: f64,
    k_specular: f64,
    exponent: f64,
    mu: f64,
    tol: f64,
    max_iterations: usize,
) -> PyResult<HeightMap> {
    let s = SfsSettings { model: model.into(), light: [light.0, light.1, light.2], roughness, k_ambient, k_diffuse, k_specular, exponent, mu, tol, max_iterations, ..SfsSettings::default() };
    solve_image(image.field.clone(), &s).map(|sol| HeightMap { field: sol.height }).map_err(py_err)
}

/// Orthographic image of a height map under the given light and model.
#[pyfunction]
#[pyo3(signature = (height, light = (0.0, 0.0, 1.0), model = "lambertian", roughness = 0.0))]
fn render(height: &HeightMap, light: (f64, f64, f64), model: &str, roughness: f64) -> PyResult<HeightMap> {
    let s = SfsSettings { model: model.into(), roughness, ..SfsSettings::default() };
    let light = LightSetup::with_light(vec3(light)).map_err(py_err)?;
    shapeprint::sfs::render(&height.field, &light, &s.params().map_err(py_err)?, &CameraModel::orthographic()).map(|field| HeightMap { field }).map_err(py_err)
}

/// Height from two images under known lights; `boundary` supplies the
/// heights on the inflow boundary.
#[pyfunction]
fn solve_ps(image1: &HeightMap, image2: &HeightMap, light1: (f64, f64, f64), light2: (f64, f64, f64), boundary: &HeightMap) -> PyResult<HeightMap> {
    let p = PsProblem::new([image1.field.clone(), image2.field.clone()], [vec3(light1), vec3(light2)], boundary.field.clone()).map_err(py_err)?;
    solve_transport(&assemble_bf(&p), &boundary.field).map(|s| HeightMap { field: s.height }).map_err(py_err)
}

/// A triangle soup with outward normals.
#[pyclass(module = "shapeprint", skip_from_py_object)]
#[derive(Clone)]
pub struct Mesh {
    mesh: TriangleMesh,
}

#[pymethods]
impl Mesh {
    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        read_stl(path).map(|mesh| Mesh { mesh }).map_err(py_err)
    }

    /// Closed solid under a height map, standing on `z = 0` with a base slab.
    #[staticmethod]
    #[pyo3(signature = (height, base = 1.0, name = "object"))]
    fn from_height(height: &HeightMap, base: f64, name: &str) -> PyResult<Self> {
        height_to_mesh(&height.field, base, name).map(|mesh| Mesh { mesh }).map_err(py_err)
    }

    #[staticmethod]
    #[pyo3(signature = (center, radius, levels = 3))]
    fn icosphere(center: (f64, f64, f64), radius: f64, levels: u32) -> PyResult<Self> {
        icosphere(vec3(center), radius, levels, "sphere").map(|mesh| Mesh { mesh }).map_err(py_err)
    }

    /// Writes STL, first moving the mesh into the positive octant when
    /// needed. Returns the applied shift.
    #[pyo3(signature = (path, binary = false))]
    fn write(&self, path: PathBuf, binary: bool) -> PyResult<(f64, f64, f64)> {
        let format = if binary { StlFormat::Binary } else { StlFormat::Ascii };
        export_stl(&self.mesh, &path, format).map(|s| (s.x, s.y, s.z)).map_err(py_err)
    }

    #[getter]
    fn facet_count(&self) -> usize {
        self.mesh.len()
    }

    #[getter]
    fn volume(&self) -> f64 {
        self.mesh.signed_volume()
    }

    fn bounds(&self) -> Option<(Point, Point)> {
        self.mesh.bounds().map(|(lo, hi)| ((lo.x, lo.y, lo.z), (hi.x, hi.y, hi.z)))
    }

    /// Defect counts per rule plus `valid` and `watertight` flags.
    fn validate<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let r = validate(&self.mesh);
        let d = PyDict::new(py);
        d.set_item("valid", r.is_valid())?;
        d.set_item("watertight", r.is_watertight())?;
        d.set_item("t_junctions", r.t_junctions.len())?;
        d.set_item("non_positive", r.non_positive.len())?;
        d.set_item("orientation", r.orientation.len())?;
        d.set_item("open_edges", r.open_edges.len())?;
        d.set_item("nonmanifold_edges", r.nonmanifold_edges.len())?;
        d.set_item("degenerate", r.degenerate.len())?;
        Ok(d)
    }

    fn __repr__(&self) -> String {
        format!("Mesh({:?}, {} facets)", self.mesh.name, self.mesh.len())
    }
}

/// Signed distance to a closed mesh, negative inside.
#[pyclass(module = "shapeprint", skip_from_py_object)]
pub struct SignedDistance {
    sdf: shapeprint::sdf::SignedDistance,
}

#[pymethods]
impl SignedDistance {
    #[new]
    fn new(mesh: &Mesh) -> PyResult<Self> {
        shapeprint::sdf::SignedDistance::new(&mesh.mesh).map(|sdf| SignedDistance { sdf }).map_err(py_err)
    }

    fn __call__(&self, x: f64, y: f64, z: f64) -> f64 {
        self.sdf.eval(Vec3::new(x, y, z))
    }
}

/// Grows material under overhangs until the mesh is printable. Returns the
/// fixed mesh and a summary of the run.
#[pyfunction]
#[pyo3(signature = (mesh, alpha_deg = 45.0, spacing = 2.0, t_final = 10.0))]
fn fix_overhangs<'py>(py: Python<'py>, mesh: &Mesh, alpha_deg: f64, spacing: f64, t_final: f64) -> PyResult<(Mesh, Bound<'py, PyDict>)> {
    let s = OverhangSettings { alpha_deg, spacing, t_final, ..OverhangSettings::default() };
    let out = run_fix(&mesh.mesh, &s).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("printable", out.summary.printable)?;
    d.set_item("steps", out.summary.steps)?;
    d.set_item("final_time", out.summary.final_time)?;
    d.set_item("unprintable_before", out.summary.unprintable_before)?;
    d.set_item("unprintable_after", out.summary.unprintable_after)?;
    Ok((Mesh { mesh: out.fixed }, d))
}

/// Slices the mesh into G-code text and tool-path metrics.
#[pyfunction]
#[pyo3(signature = (mesh, layer_height = 0.2, infill = "eikonal", spacing = 2.0, flow = 0.05))]
fn slice_mesh<'py>(py: Python<'py>, mesh: &Mesh, layer_height: f64, infill: &str, spacing: f64, flow: f64) -> PyResult<(String, Bound<'py, PyDict>)> {
    let s = SliceSettings { layer_height, infill: infill.into(), spacing, flow, ..SliceSettings::default() };
    let (program, summary) = run_slice(&mesh.mesh, &s).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("layers", summary.layers)?;
    d.set_item("thin_parts", summary.thin_parts)?;
    d.set_item("print_time_s", summary.metrics.print_time_s)?;
    d.set_item("material_length_mm", summary.metrics.material_length_mm)?;
    d.set_item("travel_length_mm", summary.metrics.travel_length_mm)?;
    d.set_item("move_count", summary.metrics.move_count)?;
    d.set_item("travel_moves", summary.metrics.travel_moves)?;
    d.set_item("total_extrusion", summary.total_extrusion)?;
    Ok((program.to_text(), d))
}

/// Runs the stages of a configuration file; returns the written files.
#[pyfunction]
fn pipeline(config: PathBuf) -> PyResult<Vec<PathBuf>> {
    let c = PipelineConfig::load(&config).map_err(py_err)?;
    run_pipeline(&c).map(|r| r.artifacts).map_err(py_err)
}

#[pymodule(name = "shapeprint")]
fn shapeprint_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<HeightMap>()?;
    m.add_class::<Mesh>()?;
    m.add_class::<SignedDistance>()?;
    m.add_function(wrap_pyfunction!(solve_sfs, m)?)?;
    m.add_function(wrap_pyfunction!(render, m)?)?;
    m.add_function(wrap_pyfunction!(solve_ps, m)?)?;
    m.add_function(wrap_pyfunction!(fix_overhangs, m)?)?;
    m.add_function(wrap_pyfunction!(slice_mesh, m)?)?;
    m.add_function(wrap_pyfunction!(pipeline, m)?)?;
    Ok(())
}
