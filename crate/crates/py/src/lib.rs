//! Python bindings: quaternion matrices and the pseudoinverse solvers.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use quatern::{AlphaMode, Method, PinvConfig};

fn to_py(e: quatern::Error) -> PyErr {
    match e {
        quatern::Error::Io { .. } => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// Dense quaternion matrix (immutable).
#[pyclass(name = "QMat", module = "quatern", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyQMat {
    inner: quatern::QMat,
}

impl From<quatern::QMat> for PyQMat {
    fn from(inner: quatern::QMat) -> Self {
        PyQMat { inner }
    }
}

#[pymethods]
impl PyQMat {
    /// Row-major component planes.
    #[new]
    fn new(rows: usize, cols: usize, s: Vec<f64>, x: Vec<f64>, y: Vec<f64>, z: Vec<f64>) -> PyResult<Self> {
        Ok(quatern::QMat::from_components(rows, cols, &s, &x, &y, &z).map_err(to_py)?.into())
    }

    #[staticmethod]
    fn zeros(rows: usize, cols: usize) -> Self {
        quatern::QMat::zeros(rows, cols).into()
    }

    #[staticmethod]
    fn identity(n: usize) -> Self {
        quatern::QMat::identity(n).into()
    }

    /// Standard normal entries from a seeded generator.
    #[staticmethod]
    #[pyo3(signature = (rows, cols, seed=0))]
    fn random(rows: usize, cols: usize, seed: u64) -> Self {
        quatern::fixtures::random_matrix(rows, cols, seed).into()
    }

    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        Ok(quatern::QMat::parse_qmat(text, "<string>").map_err(to_py)?.into())
    }

    #[staticmethod]
    fn read(path: &str) -> PyResult<Self> {
        Ok(quatern::QMat::read_qmat(path).map_err(to_py)?.into())
    }

    fn write(&self, path: &str) -> PyResult<()> {
        self.inner.write_qmat(path).map_err(to_py)
    }

    fn to_qmat_string(&self) -> String {
        self.inner.to_qmat_string()
    }

    #[getter]
    fn rows(&self) -> usize {
        self.inner.rows()
    }

    #[getter]
    fn cols(&self) -> usize {
        self.inner.cols()
    }

    #[getter]
    fn shape(&self) -> (usize, usize) {
        self.inner.shape()
    }

    /// `(s, x, y, z)` planes, each a flat row-major list.
    fn components(&self) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
        (self.inner.component(0), self.inner.component(1), self.inner.component(2), self.inner.component(3))
    }

    fn get(&self, row: usize, col: usize) -> PyResult<(f64, f64, f64, f64)> {
        if row >= self.inner.rows() || col >= self.inner.cols() {
            return Err(PyValueError::new_err(format!("index ({row}, {col}) out of range")));
        }
        let q = self.inner[(row, col)];
        Ok((q.s, q.x, q.y, q.z))
    }

    fn adjoint(&self) -> Self {
        self.inner.adjoint().into()
    }

    fn frobenius(&self) -> f64 {
        self.inner.frobenius()
    }

    fn scale(&self, c: f64) -> Self {
        self.inner.scale(c).into()
    }

    fn __matmul__(&self, other: &PyQMat) -> PyResult<Self> {
        Ok(self.inner.matmul(&other.inner).map_err(to_py)?.into())
    }

    fn __add__(&self, other: &PyQMat) -> PyResult<Self> {
        Ok(self.inner.try_add(&other.inner).map_err(to_py)?.into())
    }

    fn __sub__(&self, other: &PyQMat) -> PyResult<Self> {
        Ok(self.inner.try_sub(&other.inner).map_err(to_py)?.into())
    }

    fn __eq__(&self, other: &PyQMat) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        format!("QMat({}x{})", self.inner.rows(), self.inner.cols())
    }
}

fn alpha_mode(alpha: Option<&Bound<'_, PyAny>>) -> PyResult<AlphaMode> {
    let Some(a) = alpha else {
        return Ok(AlphaMode::Spectral);
    };
    if let Ok(v) = a.extract::<f64>() {
        return Ok(AlphaMode::Explicit(v));
    }
    match a.extract::<String>()?.to_ascii_lowercase().as_str() {
        "spectral" => Ok(AlphaMode::Spectral),
        "frobenius" => Ok(AlphaMode::Frobenius),
        other => Err(PyValueError::new_err(format!("unknown alpha `{other}`"))),
    }
}

/// Runs one iterative method; returns a dict with `x`, `iterations`,
/// `matmuls`, `alpha`, `penrose` (E1..E4), `stop` and `converged`.
#[pyfunction]
#[pyo3(signature = (a, method="qsai", tol=1e-10, max_iters=500, alpha=None))]
fn pinv<'py>(
    py: Python<'py>,
    a: &PyQMat,
    method: &str,
    tol: f64,
    max_iters: usize,
    alpha: Option<&Bound<'py, PyAny>>,
) -> PyResult<Bound<'py, PyDict>> {
    let method: Method = method.parse().map_err(to_py)?;
    let cfg = PinvConfig { method, tol, max_iters, alpha_mode: alpha_mode(alpha)?, count_matmuls: true };
    let inner = a.inner.clone();
    let rep = py.detach(move || quatern::pinv(&inner, &cfg)).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("converged", rep.converged())?;
    d.set_item("x", PyQMat::from(rep.x))?;
    d.set_item("method", rep.method.to_string())?;
    d.set_item("iterations", rep.iterations)?;
    d.set_item("matmuls", rep.matmuls)?;
    d.set_item("alpha", rep.alpha_used)?;
    d.set_item("penrose", rep.penrose.as_array().to_vec())?;
    d.set_item("stop", format!("{:?}", rep.stop).to_lowercase())?;
    d.set_item("step_history", rep.step_history)?;
    Ok(d)
}

/// `(E1, E2, E3, E4)` relative Penrose residuals.
#[pyfunction]
fn penrose_errors(a: &PyQMat, x: &PyQMat) -> PyResult<(f64, f64, f64, f64)> {
    let p = quatern::penrose_errors(&a.inner, &x.inner).map_err(to_py)?;
    Ok((p.e1, p.e2, p.e3, p.e4))
}

#[pyfunction]
#[pyo3(signature = (a, rank_tol=1e-10))]
fn qsvd_pinv(a: &PyQMat, rank_tol: f64) -> PyResult<PyQMat> {
    Ok(quatern::qsvd_pinv(&a.inner, rank_tol).map_err(to_py)?.into())
}

#[pyfunction]
#[pyo3(signature = (a, iters=200, seed=42))]
fn sigma_max(a: &PyQMat, iters: usize, seed: u64) -> PyResult<f64> {
    quatern::sigma_max(&a.inner, iters, seed).map_err(to_py)
}

/// Computational efficiency index `order^(1/matmuls)`.
#[pyfunction]
fn cei(order: f64, matmuls_per_iter: f64) -> f64 {
    quatern::cei(order, matmuls_per_iter)
}

/// The 3×3 reference matrix.
#[pyfunction]
fn example1() -> PyQMat {
    quatern::fixtures::example1_matrix().into()
}

/// Its pseudoinverse rounded to four decimals.
#[pyfunction]
fn example1_pinv_rounded() -> PyQMat {
    quatern::fixtures::example1_pinv_rounded().into()
}

#[pymodule]
#[pyo3(name = "quatern")]
fn quatern_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", quatern::VERSION)?;
    m.add_class::<PyQMat>()?;
    m.add_function(wrap_pyfunction!(pinv, m)?)?;
    m.add_function(wrap_pyfunction!(penrose_errors, m)?)?;
    m.add_function(wrap_pyfunction!(qsvd_pinv, m)?)?;
    m.add_function(wrap_pyfunction!(sigma_max, m)?)?;
    m.add_function(wrap_pyfunction!(cei, m)?)?;
    m.add_function(wrap_pyfunction!(example1, m)?)?;
    m.add_function(wrap_pyfunction!(example1_pinv_rounded, m)?)?;
    Ok(())
}
