//! Python module `pyshiftcam`.
//!
//! Images are lists of rows (anything indexable the same way, such as a 2-D
//! NumPy array, is accepted on input). Measurement and image vectors are
//! plain lists of floats.

use pyo3::create_exception;
use pyo3::exceptions::{PyArithmeticError, PyException, PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use shiftcam::config::GlobalConfig;
use shiftcam::harness::{self, Camera};
use shiftcam::sensing::{self, PRNG_NAME};
use shiftcam::{Architecture, Error, Grid, LinearOperator, Mode, Stage};

create_exception!(pyshiftcam, ShiftcamError, PyException);

fn py_err(e: Error) -> PyErr {
    let msg = e.to_string();
    match e {
        Error::Io { .. } => PyOSError::new_err(msg),
        Error::Dimension(_) | Error::InvalidArgument(_) | Error::Config(_) | Error::InBandTotalUnavailable(_) => {
            PyValueError::new_err(msg)
        }
        Error::NonConverged { .. } | Error::Numerical(_) => PyArithmeticError::new_err(msg),
        _ => ShiftcamError::new_err(msg),
    }
}

trait IntoPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for shiftcam::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

fn to_grid(rows: Vec<Vec<f64>>) -> PyResult<Grid> {
    let m = rows.len();
    let n = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != n) {
        return Err(PyValueError::new_err("image rows have different lengths"));
    }
    Grid::new(m, n, rows.into_iter().flatten().collect()).py()
}

fn from_grid(g: &Grid) -> Vec<Vec<f64>> {
    g.as_slice().chunks(g.cols().max(1)).map(<[f64]>::to_vec).collect()
}

fn parse_arch(s: &str) -> PyResult<Architecture> {
    s.parse().py()
}

fn parse_mode(s: &str) -> PyResult<Mode> {
    match s {
        "raw01" => Ok(Mode::Raw01),
        "bipolar" => Ok(Mode::Bipolar),
        _ => Err(PyValueError::new_err(format!("unknown mode '{s}' (raw01 or bipolar)"))),
    }
}

/// Diffraction geometry. All lengths in meters.
#[pyclass(module = "pyshiftcam", from_py_object)]
#[derive(Clone)]
struct OpticsConfig {
    inner: shiftcam::OpticsConfig,
}

#[pymethods]
impl OpticsConfig {
    #[new]
    #[pyo3(signature = (wavelength=None, pixel_pitch=None, propagation_distance=None, modulator_side=None, kernel_radius=None, oversampling=None))]
    fn new(
        wavelength: Option<f64>,
        pixel_pitch: Option<f64>,
        propagation_distance: Option<f64>,
        modulator_side: Option<f64>,
        kernel_radius: Option<usize>,
        oversampling: Option<usize>,
    ) -> PyResult<Self> {
        let d = shiftcam::OpticsConfig::default();
        let inner = shiftcam::OpticsConfig {
            wavelength: wavelength.unwrap_or(d.wavelength),
            pixel_pitch: pixel_pitch.unwrap_or(d.pixel_pitch),
            propagation_distance: propagation_distance.unwrap_or(d.propagation_distance),
            modulator_side: modulator_side.unwrap_or(d.modulator_side),
            kernel_radius: kernel_radius.unwrap_or(d.kernel_radius),
            oversampling: oversampling.unwrap_or(d.oversampling),
        };
        inner.validate().py()?;
        Ok(OpticsConfig { inner })
    }

    #[getter]
    fn wavelength(&self) -> f64 {
        self.inner.wavelength
    }
    #[getter]
    fn pixel_pitch(&self) -> f64 {
        self.inner.pixel_pitch
    }
    #[getter]
    fn propagation_distance(&self) -> f64 {
        self.inner.propagation_distance
    }
    #[getter]
    fn kernel_radius(&self) -> usize {
        self.inner.kernel_radius
    }
    fn fresnel_number(&self) -> f64 {
        self.inner.fresnel_number()
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.inner)
    }
}

/// Unit-sum diffraction kernel.
#[pyclass(module = "pyshiftcam", frozen)]
struct Psf {
    inner: shiftcam::Psf,
    #[pyo3(get)]
    oversampling: usize,
    #[pyo3(get)]
    captured_energy: f64,
    #[pyo3(get)]
    max_change: f64,
}

#[pymethods]
impl Psf {
    /// Kernel from arbitrary nonnegative weights; renormalized to unit sum.
    #[staticmethod]
    fn from_weights(weights: Vec<Vec<f64>>) -> PyResult<Self> {
        Ok(Psf {
            inner: shiftcam::Psf::from_weights(to_grid(weights)?).py()?,
            oversampling: 0,
            captured_energy: 1.0,
            max_change: 0.0,
        })
    }

    #[getter]
    fn radius(&self) -> usize {
        self.inner.radius()
    }

    #[getter]
    fn kernel(&self) -> Vec<Vec<f64>> {
        from_grid(self.inner.kernel())
    }

    fn hash(&self) -> String {
        self.inner.hash()
    }

    fn __repr__(&self) -> String {
        format!("Psf(radius={}, hash={})", self.inner.radius(), &self.inner.hash()[..12])
    }
}

/// PSF of one modulator pixel for `config` (defaults when omitted).
#[pyfunction]
#[pyo3(signature = (config=None))]
fn compute_psf(py: Python<'_>, config: Option<OpticsConfig>) -> PyResult<Psf> {
    let cfg = config.map(|c| c.inner).unwrap_or_default();
    let report = py.detach(|| shiftcam::compute_psf(&cfg)).py()?;
    Ok(Psf {
        inner: report.psf,
        oversampling: report.oversampling,
        captured_energy: report.captured_energy,
        max_change: report.max_change,
    })
}

/// Quadrant-tiled 0/1 modulator pattern of an `m x n` image.
#[pyclass(module = "pyshiftcam", frozen)]
struct ModulatorPattern {
    inner: shiftcam::ModulatorPattern,
}

#[pymethods]
impl ModulatorPattern {
    #[new]
    fn new(m: usize, n: usize, seed: u64) -> PyResult<Self> {
        Ok(ModulatorPattern {
            inner: shiftcam::ModulatorPattern::generate(m, n, seed).py()?,
        })
    }

    #[getter]
    fn grid(&self) -> Vec<Vec<f64>> {
        from_grid(self.inner.grid())
    }

    #[getter]
    fn base_dims(&self) -> (usize, usize) {
        self.inner.base_dims()
    }

    #[getter]
    fn seed(&self) -> Option<u64> {
        self.inner.seed()
    }

    #[getter]
    fn base_sum(&self) -> f64 {
        self.inner.base_sum()
    }

    fn is_tiled(&self) -> bool {
        self.inner.is_tiled()
    }

    #[staticmethod]
    fn prng() -> &'static str {
        PRNG_NAME
    }
}

/// Detector readings with their architecture and stage.
#[pyclass(module = "pyshiftcam", from_py_object)]
#[derive(Clone)]
struct MeasurementSet {
    inner: shiftcam::MeasurementSet,
}

#[pymethods]
impl MeasurementSet {
    #[getter]
    fn values(&self) -> Vec<f64> {
        self.inner.values.clone()
    }

    #[getter]
    fn architecture(&self) -> &'static str {
        self.inner.architecture.name()
    }

    #[getter]
    fn stage(&self) -> &'static str {
        self.inner.stage.name()
    }

    #[getter]
    fn image_dims(&self) -> (usize, usize) {
        self.inner.image_dims
    }

    #[getter]
    fn i_total(&self) -> Option<f64> {
        self.inner.i_total
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn sum(&self) -> f64 {
        self.inner.sum()
    }

    fn __repr__(&self) -> String {
        format!(
            "MeasurementSet({} values, architecture={}, stage={})",
            self.inner.len(),
            self.inner.architecture.name(),
            self.inner.stage.name()
        )
    }
}

/// Linear sensing operator on row-major image vectors.
#[pyclass(module = "pyshiftcam", frozen)]
struct SensingOperator {
    inner: shiftcam::SensingOperator,
}

#[pymethods]
impl SensingOperator {
    fn apply(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        if x.len() != self.inner.num_pixels() {
            return Err(PyValueError::new_err(format!("expected {} pixels", self.inner.num_pixels())));
        }
        Ok(self.inner.apply(&x))
    }

    fn adjoint(&self, y: Vec<f64>) -> PyResult<Vec<f64>> {
        if y.len() != self.inner.num_measurements() {
            return Err(PyValueError::new_err(format!(
                "expected {} measurements",
                self.inner.num_measurements()
            )));
        }
        Ok(self.inner.apply_adjoint(&y))
    }

    /// Dense matrix, one list per measurement (small images only).
    fn matrix(&self) -> PyResult<Vec<Vec<f64>>> {
        let m = shiftcam::build_explicit_matrix(&self.inner).py()?;
        Ok((0..m.rows).map(|r| m.row(r).to_vec()).collect())
    }

    #[getter]
    fn shape(&self) -> (usize, usize) {
        (self.inner.num_measurements(), self.inner.num_pixels())
    }

    #[getter]
    fn architecture(&self) -> &'static str {
        self.inner.architecture().name()
    }

    #[getter]
    fn mode(&self) -> &'static str {
        self.inner.mode().name()
    }
}

/// Operator for `mode` ("raw01" or "bipolar") and `architecture` ("full", "A", "B").
#[pyfunction]
#[pyo3(signature = (pattern, mode="bipolar", architecture="B", psf=None))]
fn make_operator(
    pattern: &ModulatorPattern,
    mode: &str,
    architecture: &str,
    psf: Option<&Psf>,
) -> PyResult<SensingOperator> {
    let inner = shiftcam::make_operator(
        &pattern.inner,
        psf.map(|p| &p.inner),
        parse_mode(mode)?,
        parse_arch(architecture)?,
    )
    .py()?;
    Ok(SensingOperator { inner })
}

/// Operator matching converted physical measurements under `psf`.
#[pyfunction]
#[pyo3(signature = (pattern, architecture="B", psf=None))]
fn conversion_operator(pattern: &ModulatorPattern, architecture: &str, psf: Option<&Psf>) -> PyResult<SensingOperator> {
    let inner = sensing::conversion_operator(&pattern.inner, psf.map(|p| &p.inner), parse_arch(architecture)?).py()?;
    Ok(SensingOperator { inner })
}

/// Physical raw acquisition of `image` through the 0/1 pattern.
#[pyfunction]
#[pyo3(signature = (pattern, image, architecture="B", psf=None))]
fn acquire(pattern: &ModulatorPattern, image: Vec<Vec<f64>>, architecture: &str, psf: Option<&Psf>) -> PyResult<MeasurementSet> {
    let img = to_grid(image)?;
    let inner = shiftcam::acquire_raw(&pattern.inner, psf.map(|p| &p.inner), &img, parse_arch(architecture)?).py()?;
    Ok(MeasurementSet { inner })
}

#[pyfunction]
fn i_total_in_band(meas: &MeasurementSet, pattern: &ModulatorPattern) -> PyResult<f64> {
    shiftcam::i_total_in_band(&meas.inner, &pattern.inner).py()
}

/// Reading of a second, fully open exposure.
#[pyfunction]
#[pyo3(signature = (image, psf=None))]
fn open_shot_total(image: Vec<Vec<f64>>, psf: Option<&Psf>) -> PyResult<f64> {
    sensing::open_shot_total(&to_grid(image)?, psf.map(|p| &p.inner)).py()
}

#[pyfunction]
fn convert(meas: &MeasurementSet, i_total: f64) -> PyResult<MeasurementSet> {
    Ok(MeasurementSet {
        inner: shiftcam::convert_measurements(&meas.inner, i_total).py()?,
    })
}

/// TV solver settings; unspecified fields keep their defaults.
#[pyclass(module = "pyshiftcam", from_py_object)]
#[derive(Clone)]
struct SolverConfig {
    inner: shiftcam::SolverConfig,
}

#[pymethods]
impl SolverConfig {
    #[new]
    #[pyo3(signature = (**kwargs))]
    fn new(kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let mut cfg = GlobalConfig::default();
        if let Some(kw) = kwargs {
            for (k, v) in kw.iter() {
                let key: String = k.extract()?;
                let value = v.str()?.to_string();
                let value = match value.as_str() {
                    "True" => "true".to_string(),
                    "False" => "false".to_string(),
                    _ => value,
                };
                cfg.set(&format!("solver.{key}"), &value, "python").py()?;
            }
        }
        cfg.solver.validate().py()?;
        Ok(SolverConfig { inner: cfg.solver })
    }

    #[getter]
    fn max_outer_iters(&self) -> usize {
        self.inner.max_outer_iters
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.inner)
    }
}

/// Reconstruct from converted measurements. Returns a dict with `image`,
/// `iterations`, `inner_iterations`, `residual` and `trace`
/// (a list of `(iteration, objective, residual)`).
#[pyfunction]
#[pyo3(signature = (operator, measurements, solver=None))]
fn reconstruct<'py>(
    py: Python<'py>,
    operator: &SensingOperator,
    measurements: &MeasurementSet,
    solver: Option<SolverConfig>,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = solver.map(|s| s.inner).unwrap_or_default();
    if measurements.inner.stage != Stage::Converted {
        return Err(PyValueError::new_err("reconstruct needs converted measurements; call convert() first"));
    }
    let res = py
        .detach(|| shiftcam::reconstruct(&operator.inner, &measurements.inner, &cfg))
        .py()?;
    let d = PyDict::new(py);
    d.set_item("image", from_grid(&res.image))?;
    d.set_item("iterations", res.iterations)?;
    d.set_item("inner_iterations", res.inner_iterations)?;
    d.set_item("residual", res.final_residual)?;
    let trace: Vec<(usize, f64, f64)> = res.trace.iter().map(|t| (t.iteration, t.objective, t.residual)).collect();
    d.set_item("trace", trace)?;
    Ok(d)
}

#[pyfunction]
fn load_image(path: &str) -> PyResult<Vec<Vec<f64>>> {
    Ok(from_grid(&shiftcam::load_image(path).py()?))
}

#[pyfunction]
fn save_image(image: Vec<Vec<f64>>, path: &str) -> PyResult<()> {
    shiftcam::save_image(&to_grid(image)?, path).py()
}

/// Phantom `kind` ("flat", "quadrants", "disk") of size `m x n`.
#[pyfunction]
fn make_phantom(kind: &str, m: usize, n: usize) -> PyResult<Vec<Vec<f64>>> {
    let k: shiftcam::PhantomKind = kind.parse().py()?;
    Ok(from_grid(&shiftcam::make_phantom(k, m, n).py()?))
}

/// Run the camera comparison. `config` maps dotted keys (as in the config
/// file, e.g. `"experiment.trials": 3`) to values. Returns a dict with
/// `records` (list of dicts), `csv` and `table`.
#[pyfunction]
#[pyo3(signature = (config=None))]
fn run_experiment<'py>(py: Python<'py>, config: Option<&Bound<'py, PyDict>>) -> PyResult<Bound<'py, PyDict>> {
    let mut cfg = GlobalConfig::default();
    if let Some(c) = config {
        for (k, v) in c.iter() {
            let key: String = k.extract()?;
            let value = match v.extract::<bool>() {
                Ok(b) => b.to_string(),
                Err(_) => v.str()?.to_string(),
            };
            cfg.set(&key, &value, "python").py()?;
        }
    }
    cfg.validate().py()?;
    let exp = cfg.experiment();
    let out = py.detach(|| harness::run_experiment(&exp)).py()?;
    let records = out
        .records
        .iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("image", &r.image)?;
            d.set_item("camera", r.camera.name())?;
            d.set_item("trial", r.trial)?;
            d.set_item("seed", r.seed)?;
            d.set_item("normalized_mse", r.normalized_mse)?;
            d.set_item("mse", r.mse)?;
            d.set_item("residual", r.residual)?;
            d.set_item("i_total_rel_err", r.i_total_rel_err)?;
            d.set_item("error", r.error.as_deref())?;
            Ok(d)
        })
        .collect::<PyResult<Vec<_>>>()?;
    let d = PyDict::new(py);
    d.set_item("records", records)?;
    d.set_item("csv", harness::records_csv(&out.records))?;
    d.set_item("table", harness::format_table(&out.rows))?;
    d.set_item("ordering_violations", harness::ordering_violations(&out.rows))?;
    Ok(d)
}

/// Camera names in table order.
#[pyfunction]
fn cameras() -> Vec<&'static str> {
    Camera::ALL.iter().map(|c| c.name()).collect()
}

#[pymodule]
fn pyshiftcam(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("ShiftcamError", m.py().get_type::<ShiftcamError>())?;
    m.add_class::<OpticsConfig>()?;
    m.add_class::<Psf>()?;
    m.add_class::<ModulatorPattern>()?;
    m.add_class::<MeasurementSet>()?;
    m.add_class::<SensingOperator>()?;
    m.add_class::<SolverConfig>()?;
    m.add_function(wrap_pyfunction!(compute_psf, m)?)?;
    m.add_function(wrap_pyfunction!(make_operator, m)?)?;
    m.add_function(wrap_pyfunction!(conversion_operator, m)?)?;
    m.add_function(wrap_pyfunction!(acquire, m)?)?;
    m.add_function(wrap_pyfunction!(i_total_in_band, m)?)?;
    m.add_function(wrap_pyfunction!(open_shot_total, m)?)?;
    m.add_function(wrap_pyfunction!(convert, m)?)?;
    m.add_function(wrap_pyfunction!(reconstruct, m)?)?;
    m.add_function(wrap_pyfunction!(load_image, m)?)?;
    m.add_function(wrap_pyfunction!(save_image, m)?)?;
    m.add_function(wrap_pyfunction!(make_phantom, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(cameras, m)?)?;
    Ok(())
}
