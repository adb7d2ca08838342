//! Python bindings for the radar toolkit.

use std::path::PathBuf;

use cfel_radar::autograd::{primitive_suite, GradCheckOptions};
use cfel_radar::cfel::{cfel_forward, init_grid};
use cfel_radar::classic::{Detector, PipelineParams};
use cfel_radar::dataset::{self, Split};
use cfel_radar::train::{self, Center};
use cfel_radar::vae::{self, ArchConfig};
use cfel_radar::Error;
use num_complex::Complex64;
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: Error) -> PyErr {
    let msg = format!("{}: {e}", e.category());
    match e {
        Error::Io { .. } => PyIOError::new_err(msg),
        _ => PyValueError::new_err(msg),
    }
}

/// Radar front-end and processing-grid parameters.
#[pyclass(name = "RadarConfig", module = "cfel_radar_py", from_py_object)]
#[derive(Clone)]
struct PyRadarConfig {
    inner: cfel_radar::RadarConfig,
}

#[pymethods]
impl PyRadarConfig {
    /// Full-scale profile: 256 samples, 32 chirps, 128 x 32 grid.
    #[staticmethod]
    fn full() -> Self {
        Self {
            inner: cfel_radar::RadarConfig::default(),
        }
    }

    /// Reduced profile for laptop-scale training.
    #[staticmethod]
    fn desk() -> Self {
        Self {
            inner: cfel_radar::RadarConfig::desk(),
        }
    }

    /// Parses `key = value` lines on top of `base` (full scale by default).
    #[staticmethod]
    #[pyo3(signature = (text, base=None))]
    fn from_kv(text: &str, base: Option<PyRef<'_, Self>>) -> PyResult<Self> {
        let base = base.map_or_else(cfel_radar::RadarConfig::default, |b| b.inner.clone());
        let inner = cfel_radar::RadarConfig::from_kv_str(text, base, &PathBuf::from("<python>")).map_err(to_py)?;
        Ok(Self { inner })
    }

    fn to_kv(&self) -> String {
        self.inner.to_kv_string()
    }

    #[getter]
    fn n_samples(&self) -> usize {
        self.inner.n_samples
    }

    #[getter]
    fn n_chirps(&self) -> usize {
        self.inner.n_chirps
    }

    #[getter]
    fn n_rx(&self) -> usize {
        self.inner.n_rx
    }

    #[getter]
    fn n_range_bins(&self) -> usize {
        self.inner.n_range_bins
    }

    #[getter]
    fn n_angle_bins(&self) -> usize {
        self.inner.n_angle_bins
    }

    fn angle_grid_deg(&self) -> Vec<f64> {
        self.inner.angle_grid_deg()
    }

    /// Derived quantities (range resolution, maximum range, ...) as a dict.
    fn derived<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let d = cfel_radar::derive_params(&self.inner).map_err(to_py)?;
        let out = PyDict::new(py);
        out.set_item("bandwidth_hz", d.bandwidth_hz)?;
        out.set_item("center_freq_hz", d.center_freq_hz)?;
        out.set_item("wavelength_m", d.wavelength_m)?;
        out.set_item("range_resolution_m", d.range_resolution_m)?;
        out.set_item("max_range_m", d.max_range_m)?;
        out.set_item("velocity_resolution_mps", d.velocity_resolution_mps)?;
        out.set_item("max_unambiguous_velocity_mps", d.max_unambiguous_velocity_mps)?;
        out.set_item("fast_time_rate_hz", d.fast_time_rate_hz)?;
        out.set_item("slow_time_rate_hz", d.slow_time_rate_hz)?;
        Ok(out)
    }

    fn __repr__(&self) -> String {
        format!(
            "RadarConfig(samples={}, chirps={}, rx={}, grid={}x{})",
            self.inner.n_samples, self.inner.n_chirps, self.inner.n_rx, self.inner.n_range_bins, self.inner.n_angle_bins
        )
    }
}

#[pyclass(name = "PointTarget", module = "cfel_radar_py", from_py_object)]
#[derive(Clone)]
struct PyPointTarget {
    inner: cfel_radar::PointTarget,
}

#[pymethods]
impl PyPointTarget {
    #[new]
    #[pyo3(signature = (range_m, velocity_mps=0.0, azimuth_deg=0.0, amplitude=1.0))]
    fn new(range_m: f64, velocity_mps: f64, azimuth_deg: f64, amplitude: f64) -> Self {
        let mut inner = cfel_radar::PointTarget::new(range_m, velocity_mps, azimuth_deg);
        inner.amplitude = amplitude;
        Self { inner }
    }

    #[getter]
    fn range_m(&self) -> f64 {
        self.inner.range_m
    }

    #[getter]
    fn velocity_mps(&self) -> f64 {
        self.inner.velocity_mps
    }

    #[getter]
    fn azimuth_deg(&self) -> f64 {
        self.inner.azimuth_deg
    }

    #[getter]
    fn amplitude(&self) -> f64 {
        self.inner.amplitude
    }

    fn __repr__(&self) -> String {
        let t = &self.inner;
        format!("PointTarget({} m, {} m/s, {} deg, amplitude {})", t.range_m, t.velocity_mps, t.azimuth_deg, t.amplitude)
    }
}

/// Raw ADC cube with fast time fastest, then chirp, then antenna.
#[pyclass(name = "Frame", module = "cfel_radar_py", from_py_object)]
#[derive(Clone)]
struct PyFrame {
    inner: cfel_radar::Frame,
}

#[pymethods]
impl PyFrame {
    /// `(n_samples, n_chirps, n_rx)`.
    #[getter]
    fn shape(&self) -> (usize, usize, usize) {
        (self.inner.n_samples, self.inner.n_chirps, self.inner.n_rx)
    }

    #[getter]
    fn normalized(&self) -> bool {
        self.inner.normalized
    }

    fn data(&self) -> Vec<f32> {
        self.inner.data.clone()
    }

    fn get(&self, m: usize, n: usize, rx: usize) -> PyResult<f64> {
        let f = &self.inner;
        if m >= f.n_samples || n >= f.n_chirps || rx >= f.n_rx {
            return Err(PyValueError::new_err(format!("index ({m}, {n}, {rx}) outside {:?}", self.shape())));
        }
        Ok(f.get(m, n, rx))
    }

    /// Min-max scaled copy in `[0, 1]`.
    fn normalize(&self) -> PyResult<Self> {
        Ok(Self {
            inner: dataset::normalize_frame(&self.inner).map_err(to_py)?,
        })
    }

    fn __len__(&self) -> usize {
        self.inner.data.len()
    }
}

/// One labeled dataset record.
#[pyclass(name = "Example", module = "cfel_radar_py", from_py_object)]
#[derive(Clone)]
struct PyExample {
    inner: dataset::LabeledExample,
}

#[pymethods]
impl PyExample {
    #[getter]
    fn frame(&self) -> PyFrame {
        PyFrame {
            inner: self.inner.frame.clone(),
        }
    }

    /// Range-major binary mask.
    #[getter]
    fn label(&self) -> Vec<u8> {
        self.inner.label.clone()
    }

    #[getter]
    fn targets(&self) -> Vec<PyPointTarget> {
        self.inner.targets.iter().map(|&inner| PyPointTarget { inner }).collect()
    }

    #[getter]
    fn split(&self) -> &'static str {
        match self.inner.split {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

/// Trained or freshly initialized network.
#[pyclass(name = "Model", module = "cfel_radar_py")]
struct PyModel {
    inner: vae::Model,
}

#[pymethods]
impl PyModel {
    /// Network sized for `config`; `blocks`, `channels` and `latent` default
    /// to the desk architecture.
    #[staticmethod]
    #[pyo3(signature = (config, seed=0, blocks=2, channels=16, latent=32))]
    fn build(config: PyRef<'_, PyRadarConfig>, seed: u64, blocks: usize, channels: usize, latent: usize) -> PyResult<Self> {
        let arch = ArchConfig::for_radar(&config.inner, blocks, channels, latent);
        Ok(Self {
            inner: vae::build_model(&arch, seed).map_err(to_py)?,
        })
    }

    /// Full-scale architecture.
    #[staticmethod]
    #[pyo3(signature = (seed=0))]
    fn full(seed: u64) -> PyResult<Self> {
        Ok(Self {
            inner: vae::build_model(&ArchConfig::full(), seed).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let (inner, _) = vae::load_checkpoint(&path).map_err(to_py)?;
        Ok(Self { inner })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        vae::save_checkpoint(&self.inner, &path, serde_json::Value::Null).map_err(to_py)?;
        Ok(())
    }

    #[getter]
    fn param_count(&self) -> usize {
        self.inner.param_count()
    }

    /// Output grid `(rows, cols)`.
    #[getter]
    fn grid(&self) -> (usize, usize) {
        (self.inner.arch.n_range, self.inner.arch.n_doppler)
    }

    /// CFEL frequencies `(f_ft, f_st)`, normalized to the sampling rates.
    fn cfel_frequencies(&self) -> (Vec<f64>, Vec<f64>) {
        let p = self.inner.cfel_params();
        (p.f_ft, p.f_st)
    }

    /// Probability maps, one range-major list per frame.
    fn predict(&self, py: Python<'_>, frames: Vec<PyRef<'_, PyFrame>>) -> PyResult<Vec<Vec<f64>>> {
        let owned: Vec<cfel_radar::Frame> = frames.iter().map(|f| f.inner.clone()).collect();
        let model = &self.inner;
        py.detach(|| {
            let refs: Vec<&cfel_radar::Frame> = owned.iter().collect();
            model.predict(&refs)
        })
        .map_err(to_py)
    }

    /// Normalized convolution-weight divergence from `reference`.
    fn weight_divergence(&self, reference: PyRef<'_, PyModel>) -> PyResult<f64> {
        train::weight_divergence(&self.inner, &reference.inner).map_err(to_py)
    }
}

#[pyfunction]
#[pyo3(signature = (targets, config, snr_db=f64::INFINITY, seed=0))]
fn synth_frame(targets: Vec<PyRef<'_, PyPointTarget>>, config: PyRef<'_, PyRadarConfig>, snr_db: f64, seed: u64) -> PyResult<PyFrame> {
    let ts: Vec<cfel_radar::PointTarget> = targets.iter().map(|t| t.inner).collect();
    Ok(PyFrame {
        inner: cfel_radar::synth_frame(&ts, &config.inner, snr_db, seed).map_err(to_py)?,
    })
}

/// CFEL output at harmonic initialization, `[n_ft][n_st][rx]` complex values.
#[pyfunction]
fn cfel_harmonic(frame: PyRef<'_, PyFrame>, n_ft: usize, n_st: usize) -> PyResult<Vec<Vec<Vec<Complex64>>>> {
    let f = &frame.inner;
    let p = init_grid(n_ft, n_st, f.n_samples, f.n_chirps, 1.0, 1.0);
    let y = cfel_forward(f, &p).map_err(to_py)?;
    Ok((0..n_ft)
        .map(|k| (0..n_st).map(|l| (0..f.n_rx).map(|rx| y.at(k, l, rx)).collect()).collect())
        .collect())
}

/// Classical chain on one frame with an empty clutter background; returns
/// `(range_m, angle_deg)` per detection.
#[pyfunction]
fn classic_detect(frame: PyRef<'_, PyFrame>, config: PyRef<'_, PyRadarConfig>) -> PyResult<Vec<(f64, f64)>> {
    let mut det = Detector::new(&config.inner, &PipelineParams::for_config(&config.inner)).map_err(to_py)?;
    let out = det.process(&frame.inner).map_err(to_py)?;
    Ok(out.detections.iter().map(|d| (d.range_m, d.angle_deg)).collect())
}

#[pyfunction]
#[pyo3(signature = (p, y, gamma=2.0, alpha=0.25))]
fn focal_loss(p: Vec<f64>, y: Vec<u8>, gamma: f64, alpha: f64) -> PyResult<f64> {
    vae::focal_loss(&p, &y, gamma, alpha).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (mu, logvar, batch=1))]
fn kl_loss(mu: Vec<f64>, logvar: Vec<f64>, batch: usize) -> PyResult<f64> {
    vae::kl_loss(&mu, &logvar, batch).map_err(to_py)
}

/// Optimal assignment of `(range_m, angle_deg)` centers; returns a dict with
/// `tp`, `fp`, `fn` and `pairs` as `(pred, truth, distance)`.
#[pyfunction]
#[pyo3(signature = (pred, truth, max_dist=train::MATCH_RADIUS_M))]
fn match_detections<'py>(py: Python<'py>, pred: Vec<(f64, f64)>, truth: Vec<(f64, f64)>, max_dist: f64) -> PyResult<Bound<'py, PyDict>> {
    let c = |v: &[(f64, f64)]| v.iter().map(|&(r, a)| Center::new(r, a)).collect::<Vec<_>>();
    let m = train::match_detections(&c(&pred), &c(&truth), max_dist);
    let out = PyDict::new(py);
    out.set_item("tp", m.tp)?;
    out.set_item("fp", m.fp)?;
    out.set_item("fn", m.fn_)?;
    out.set_item("pairs", m.pairs)?;
    Ok(out)
}

/// Loads a dataset directory; returns `(config, examples)`.
#[pyfunction]
fn load_dataset(path: PathBuf) -> PyResult<(PyRadarConfig, Vec<PyExample>)> {
    let (m, examples) = dataset::load_dataset(&path).map_err(to_py)?;
    Ok((
        PyRadarConfig { inner: m.config },
        examples.into_iter().map(|inner| PyExample { inner }).collect(),
    ))
}

/// Finite-difference check of every graph primitive; maps each primitive to
/// its worst relative error.
#[pyfunction]
fn grad_check_primitives<'py>(py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
    let reports = primitive_suite(&GradCheckOptions::default()).map_err(to_py)?;
    let out = PyDict::new(py);
    for (name, r) in reports {
        out.set_item(name, r.worst().map_or(0.0, |e| e.max_rel_error))?;
    }
    Ok(out)
}

#[pymodule]
pub fn cfel_radar_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyRadarConfig>()?;
    m.add_class::<PyPointTarget>()?;
    m.add_class::<PyFrame>()?;
    m.add_class::<PyExample>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(synth_frame, m)?)?;
    m.add_function(wrap_pyfunction!(cfel_harmonic, m)?)?;
    m.add_function(wrap_pyfunction!(classic_detect, m)?)?;
    m.add_function(wrap_pyfunction!(focal_loss, m)?)?;
    m.add_function(wrap_pyfunction!(kl_loss, m)?)?;
    m.add_function(wrap_pyfunction!(match_detections, m)?)?;
    m.add_function(wrap_pyfunction!(load_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(grad_check_primitives, m)?)?;
    m.add("MATCH_RADIUS_M", train::MATCH_RADIUS_M)?;
    Ok(())
}
