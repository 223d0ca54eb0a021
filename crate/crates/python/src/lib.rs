//! Python bindings. Signals cross the boundary as lists of channels, each a
//! list of floats; matrices as lists of rows.

use ccs_ica::datagen::{self, MixSpec, SourceSpec};
use ccs_ica::divergence;
use ccs_ica::eval::{self, LandscapeOptions};
use ccs_ica::ica;
use ccs_ica::{ConvexityParam, Objective, ObjectiveKind, SampleMatrix, SquareMatrix};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err(e: ccs_ica::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn signals(rows: Vec<Vec<f64>>) -> PyResult<SampleMatrix> {
    SampleMatrix::from_rows(&rows).map_err(err)
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<SquareMatrix> {
    SquareMatrix::from_rows(&rows).map_err(err)
}

type Rows = Vec<Vec<f64>>;

fn convexity(a: f64) -> PyResult<ConvexityParam> {
    ConvexityParam::new(a).map_err(err)
}

/// Separation settings; defaults follow the reference algorithm.
#[pyclass(name = "IcaConfig", from_py_object)]
#[derive(Clone)]
pub struct PyIcaConfig {
    #[pyo3(get, set)]
    alpha: f64,
    /// "ccs" or "cs"
    #[pyo3(get, set)]
    objective: String,
    #[pyo3(get, set)]
    gamma: f64,
    #[pyo3(get, set)]
    max_iter: usize,
    #[pyo3(get, set)]
    epsilon: f64,
    #[pyo3(get, set)]
    bandwidth: Option<f64>,
    #[pyo3(get, set)]
    seed: u64,
    #[pyo3(get, set)]
    backtrack: bool,
    #[pyo3(get, set)]
    truncate_kernel: bool,
}

impl PyIcaConfig {
    fn to_core(&self) -> PyResult<ica::IcaConfig> {
        let cfg = ica::IcaConfig {
            alpha: self.alpha,
            objective: self.objective.parse::<ObjectiveKind>().map_err(err)?,
            gamma: self.gamma,
            max_iter: self.max_iter,
            epsilon: self.epsilon,
            bandwidth: self.bandwidth,
            seed: self.seed,
            backtrack: self.backtrack,
            truncate_kernel: self.truncate_kernel,
        };
        cfg.validate().map_err(err)?;
        Ok(cfg)
    }
}

#[pymethods]
impl PyIcaConfig {
    #[new]
    #[pyo3(signature = (alpha=-0.99999, objective="ccs", gamma=0.3, max_iter=250, epsilon=1e-4, bandwidth=None, seed=0, backtrack=true, truncate_kernel=false))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        alpha: f64,
        objective: &str,
        gamma: f64,
        max_iter: usize,
        epsilon: f64,
        bandwidth: Option<f64>,
        seed: u64,
        backtrack: bool,
        truncate_kernel: bool,
    ) -> PyResult<Self> {
        let cfg = PyIcaConfig {
            alpha,
            objective: objective.to_ascii_lowercase(),
            gamma,
            max_iter,
            epsilon,
            bandwidth,
            seed,
            backtrack,
            truncate_kernel,
        };
        cfg.to_core()?;
        Ok(cfg)
    }

    fn __repr__(&self) -> String {
        format!(
            "IcaConfig(alpha={}, objective='{}', gamma={}, max_iter={}, epsilon={}, bandwidth={:?}, seed={}, backtrack={}, truncate_kernel={})",
            self.alpha, self.objective, self.gamma, self.max_iter, self.epsilon, self.bandwidth, self.seed, self.backtrack, self.truncate_kernel
        )
    }
}

/// Output of [`separate`].
#[pyclass(name = "IcaResult", skip_from_py_object)]
pub struct PyIcaResult {
    /// Demixer acting on whitened data.
    #[pyo3(get)]
    w: Vec<Vec<f64>>,
    /// `W V`, acting on the centered mixtures.
    #[pyo3(get)]
    unmixing: Vec<Vec<f64>>,
    #[pyo3(get)]
    whitening: Vec<Vec<f64>>,
    #[pyo3(get)]
    mean: Vec<f64>,
    #[pyo3(get)]
    demixed: Vec<Vec<f64>>,
    #[pyo3(get)]
    divergence_trace: Vec<f64>,
    #[pyo3(get)]
    iterations: usize,
    #[pyo3(get)]
    converged: bool,
    #[pyo3(get)]
    bandwidth: f64,
}

#[pymethods]
impl PyIcaResult {
    fn __repr__(&self) -> String {
        format!(
            "IcaResult(channels={}, iterations={}, converged={}, divergence={:.6e})",
            self.w.len(),
            self.iterations,
            self.converged,
            self.divergence_trace.last().copied().unwrap_or(f64::NAN)
        )
    }
}

/// Whiten `x` and run gradient descent on the contrast.
#[pyfunction]
#[pyo3(signature = (x, config=None))]
fn separate(py: Python<'_>, x: Vec<Vec<f64>>, config: Option<PyIcaConfig>) -> PyResult<PyIcaResult> {
    let cfg = match config {
        Some(c) => c.to_core()?,
        None => ica::IcaConfig::default(),
    };
    let x = signals(x)?;
    let run = py.detach(|| ica::run(&x, &cfg)).map_err(err)?;
    Ok(PyIcaResult {
        w: run.state.w.to_rows(),
        unmixing: run.unmixing().to_rows(),
        whitening: run.whitening.matrix.to_rows(),
        mean: run.whitening.mean.clone(),
        demixed: run.demixed.to_rows(),
        divergence_trace: run.state.divergence_trace.clone(),
        iterations: run.state.iteration,
        converged: run.state.converged,
        bandwidth: run.bandwidth,
    })
}

/// Returns `(whitened, mean, V)`.
#[pyfunction]
fn center_whiten(x: Vec<Vec<f64>>) -> PyResult<(Rows, Vec<f64>, Rows)> {
    let (xw, t) = ica::center_whiten(&signals(x)?).map_err(err)?;
    Ok((xw.to_rows(), t.mean, t.matrix.to_rows()))
}

/// The sampled contrast on fixed whitened data.
#[pyclass(name = "ContrastModel", skip_from_py_object)]
pub struct PyContrastModel {
    inner: ica::ContrastModel,
}

#[pymethods]
impl PyContrastModel {
    #[new]
    #[pyo3(signature = (x_w, config=None))]
    fn new(x_w: Vec<Vec<f64>>, config: Option<PyIcaConfig>) -> PyResult<Self> {
        let cfg = match config {
            Some(c) => c.to_core()?,
            None => ica::IcaConfig::default(),
        };
        let inner = ica::ContrastModel::new(&signals(x_w)?, &cfg).map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn bandwidth(&self) -> f64 {
        self.inner.bandwidth()
    }

    fn value(&self, w: Vec<Vec<f64>>) -> PyResult<f64> {
        self.inner.value(&matrix(w)?).map_err(err)
    }

    fn gradient(&self, w: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        Ok(self.inner.gradient(&matrix(w)?).map_err(err)?.to_rows())
    }
}

#[pyfunction]
fn f_convex(t: f64, alpha: f64) -> PyResult<f64> {
    divergence::f_convex(t, convexity(alpha)?).map_err(err)
}

#[pyfunction]
fn f_deriv(t: f64, alpha: f64) -> PyResult<f64> {
    divergence::f_deriv(t, convexity(alpha)?).map_err(err)
}

#[pyfunction]
fn silverman_bandwidth(samples: usize) -> f64 {
    ccs_ica::density::silverman_bandwidth(samples)
}

#[pyfunction]
fn ccs_div_samples(pj: Vec<f64>, qm: Vec<f64>, alpha: f64) -> PyResult<f64> {
    divergence::ccs_div_samples(&pj, &qm, convexity(alpha)?).map_err(err)
}

#[pyfunction]
fn cs_div_samples(pj: Vec<f64>, qm: Vec<f64>) -> PyResult<f64> {
    divergence::cs_div_samples(&pj, &qm).map_err(err)
}

/// Rows `(pAA, alpha, divergence)` of the two-binary-variable sweep.
#[pyfunction]
#[pyo3(signature = (alphas, steps=700))]
fn binary_sweep(alphas: Vec<f64>, steps: usize) -> PyResult<Vec<(f64, f64, f64)>> {
    let alphas = alphas.into_iter().map(convexity).collect::<PyResult<Vec<_>>>()?;
    Ok(divergence::binary_sweep(&alphas, steps)
        .into_iter()
        .map(|p| (p.p_aa, p.alpha, p.divergence))
        .collect())
}

/// Contrast over the polar demixer grid; returns `(theta1, theta2, values)`
/// with `values[i][j]` at `(theta1[i], theta2[j])`.
#[pyfunction]
#[pyo3(signature = (data, alpha=-1.0, objective="ccs", grid=65, bandwidth=None))]
fn landscape(
    py: Python<'_>,
    data: Vec<Vec<f64>>,
    alpha: f64,
    objective: &str,
    grid: usize,
    bandwidth: Option<f64>,
) -> PyResult<(Vec<f64>, Vec<f64>, Rows)> {
    let objective = match objective.parse::<ObjectiveKind>().map_err(err)? {
        ObjectiveKind::Ccs => Objective::ccs(alpha).map_err(err)?,
        ObjectiveKind::Cs => Objective::Cs,
    };
    let mut opts = LandscapeOptions::new(objective);
    opts.resolution = grid;
    opts.bandwidth = bandwidth;
    let data = signals(data)?;
    let g = py.detach(|| eval::landscape(&data, &opts)).map_err(err)?;
    let n2 = g.theta2.len();
    let values = g.values.chunks(n2).map(<[f64]>::to_vec).collect();
    Ok((g.theta1, g.theta2, values))
}

/// Sources from specs such as `"uniform:3"` or `"laplacian:1"`.
#[pyfunction]
fn gen_sources(specs: Vec<String>, samples: usize, seed: u64) -> PyResult<Vec<Vec<f64>>> {
    let specs = specs
        .iter()
        .map(|s| s.parse::<SourceSpec>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(err)?;
    Ok(datagen::gen_sources(&specs, samples, seed).map_err(err)?.to_rows())
}

/// `A S`, plus white noise when `snr_db` is given.
#[pyfunction]
#[pyo3(signature = (sources, mixing, snr_db=None, seed=0))]
fn mix(sources: Vec<Vec<f64>>, mixing: Vec<Vec<f64>>, snr_db: Option<f64>, seed: u64) -> PyResult<Vec<Vec<f64>>> {
    let spec = MixSpec::new(matrix(mixing)?, snr_db).map_err(err)?;
    Ok(datagen::mix(&signals(sources)?, &spec, seed)
        .map_err(err)?
        .signals
        .to_rows())
}

/// Mixing matrix of a named preset: `"paper-2x2"` or `"paper-3x3"`.
#[pyfunction]
fn preset_matrix(name: &str) -> PyResult<Vec<Vec<f64>>> {
    let spec = match name {
        "paper-2x2" => datagen::preset_2x2(),
        "paper-3x3" => datagen::preset_3x3(),
        other => return Err(PyValueError::new_err(format!("unknown preset '{other}'"))),
    };
    Ok(spec.matrix.to_rows())
}

/// Aligns `y` to `s` and returns a dict with `permutation`, `gains`,
/// `sir_db`, `total_sir_db` and `kurtosis`.
#[pyfunction]
fn evaluate<'py>(py: Python<'py>, s: Vec<Vec<f64>>, y: Vec<Vec<f64>>) -> PyResult<Bound<'py, PyDict>> {
    let r = eval::evaluate(&signals(s)?, &signals(y)?).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("permutation", r.alignment.permutation)?;
    d.set_item("gains", r.alignment.gains)?;
    d.set_item("sir_db", r.sir_db)?;
    d.set_item("total_sir_db", r.total_sir_db)?;
    d.set_item("kurtosis", r.kurtosis)?;
    Ok(d)
}

#[pyfunction]
fn kurtosis(s: Vec<f64>) -> PyResult<f64> {
    eval::kurtosis(&s).map_err(err)
}

#[pymodule]
mod ccsica {
    #[pymodule_export]
    use super::{
        binary_sweep, ccs_div_samples, center_whiten, cs_div_samples, evaluate, f_convex, f_deriv, gen_sources,
        kurtosis, landscape, mix, preset_matrix, separate, silverman_bandwidth, PyContrastModel, PyIcaConfig,
        PyIcaResult,
    };
}
