//! Python bindings. Structured results cross the boundary as JSON and are
//! decoded into plain Python objects.

use std::path::{Path, PathBuf};

use gus_core::algebra::{self, normalize_plan};
use gus_core::dsl::{load_plan, parse_plan, PlanDocument};
use gus_core::lineage::LineageSchema;
use gus_core::params::GusParams;
use gus_core::run::{render_text, run_document, RunOptions};
use gus_core::sampling::SamplerSpec;
use gus_core::tpch::{generate_tpch_tiny, TpchScale};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyAny;

create_exception!(gus_py, GusError, PyException, "Raised for any failure inside the engine.");
create_exception!(gus_py, NotIdentifiable, GusError, "A needed GUS coefficient is zero.");

fn to_py(err: gus_core::GusError) -> PyErr {
    match err {
        gus_core::GusError::NotIdentifiable { .. } => NotIdentifiable::new_err(err.to_string()),
        other => GusError::new_err(other.to_string()),
    }
}

fn from_json<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (text,))
}

fn schema(relations: Vec<String>) -> PyResult<LineageSchema> {
    LineageSchema::new(relations).map_err(to_py)
}

/// GUS parameters `(a, b)` over a set of relations.
#[pyclass(name = "Gus", module = "gus_py", frozen, eq, skip_from_py_object)]
#[derive(Clone, PartialEq)]
struct Gus(GusParams);

#[pymethods]
impl Gus {
    #[staticmethod]
    fn bernoulli(p: f64, relation: &str) -> PyResult<Self> {
        algebra::gus_of_bernoulli(p, relation).map(Gus).map_err(to_py)
    }

    #[staticmethod]
    fn wor(n: usize, population: usize, relation: &str) -> PyResult<Self> {
        algebra::gus_of_wor(n, population, relation).map(Gus).map_err(to_py)
    }

    /// Lineage-keyed Bernoulli with one probability per relation.
    #[staticmethod]
    fn lineage_bernoulli(probabilities: Vec<(String, f64)>) -> PyResult<Self> {
        let names: Vec<String> = probabilities.iter().map(|(n, _)| n.clone()).collect();
        let spec = SamplerSpec::lineage_bernoulli(probabilities.into_iter().map(|(n, p)| (n, p, 0)));
        algebra::gus_of_sampler(&spec, &schema(names)?).map(Gus).map_err(to_py)
    }

    #[staticmethod]
    fn identity(relations: Vec<String>) -> PyResult<Self> {
        Ok(Gus(algebra::identity_gus(&schema(relations)?)))
    }

    #[staticmethod]
    fn null(relations: Vec<String>) -> PyResult<Self> {
        Ok(Gus(algebra::null_gus(&schema(relations)?)))
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        GusParams::from_json(text).map(Gus).map_err(to_py)
    }

    #[getter]
    fn a(&self) -> f64 {
        self.0.a()
    }

    #[getter]
    fn relations(&self) -> Vec<String> {
        self.0.schema().relations().to_vec()
    }

    /// `b_T` for the relations in `subset`.
    fn b(&self, subset: Vec<String>) -> PyResult<f64> {
        let mask = self.0.schema().mask_of(&subset).map_err(to_py)?;
        Ok(self.0.b(mask))
    }

    /// All `b_T` keyed by concatenated relation names.
    fn b_table(&self) -> std::collections::BTreeMap<String, f64> {
        self.0.b_table().by_key()
    }

    /// The `c_S` coefficients of the variance formula.
    fn c_table(&self) -> std::collections::BTreeMap<String, f64> {
        algebra::c_coefficients(&self.0).by_key()
    }

    fn join(&self, other: &Gus) -> PyResult<Gus> {
        algebra::join_merge(&self.0, &other.0).map(Gus).map_err(to_py)
    }

    fn union(&self, other: &Gus) -> PyResult<Gus> {
        algebra::union_merge(&self.0, &other.0).map(Gus).map_err(to_py)
    }

    fn compact(&self, other: &Gus) -> PyResult<Gus> {
        algebra::compact(&self.0, &other.0).map(Gus).map_err(to_py)
    }

    fn to_json(&self) -> String {
        self.0.to_json()
    }

    fn __repr__(&self) -> String {
        format!("Gus(relations={:?}, a={})", self.0.schema().relations(), self.0.a())
    }
}

/// A parsed plan document, with relative table paths resolved against
/// `base_dir`.
#[pyclass(name = "Plan", module = "gus_py", frozen)]
struct Plan {
    doc: PlanDocument,
    base_dir: PathBuf,
}

fn subsample_dims(spec: Option<&str>) -> PyResult<Option<std::collections::BTreeMap<String, gus_core::sampling::DimSpec>>> {
    match spec {
        None => Ok(None),
        Some(text) => match SamplerSpec::parse_dims(text).map_err(to_py)? {
            SamplerSpec::LineageBernoulli { dims } => Ok(Some(dims)),
            _ => Err(PyValueError::new_err("subsample must be a list of relation=probability pairs")),
        },
    }
}

#[pymethods]
impl Plan {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let (doc, base_dir) = load_plan(&path).map_err(to_py)?;
        Ok(Plan { doc, base_dir })
    }

    #[staticmethod]
    #[pyo3(signature = (text, base_dir = "."))]
    fn parse(text: &str, base_dir: &str) -> PyResult<Self> {
        let doc = parse_plan(text).map_err(to_py)?;
        Ok(Plan {
            doc,
            base_dir: PathBuf::from(base_dir),
        })
    }

    /// Relation names in lineage order.
    fn relations(&self) -> PyResult<Vec<String>> {
        Ok(self.doc.plan.lineage_schema().map_err(to_py)?.relations().to_vec())
    }

    /// The single GUS equivalent to all sampling in the plan. Loads the
    /// tables to bind WOR populations.
    fn gus(&self) -> PyResult<Gus> {
        let catalog = self.doc.load_catalog(&self.base_dir).map_err(to_py)?;
        let bound = self.doc.plan.bind_populations(&catalog).map_err(to_py)?;
        normalize_plan(&bound).map(|n| Gus(n.top)).map_err(to_py)
    }

    /// Runs the plan and returns the report as a dict, or as rendered text
    /// when `text` is set.
    #[pyo3(signature = (seed = 0, explain = false, oracle = false, subsample = None, text = false))]
    fn run<'py>(
        &self,
        py: Python<'py>,
        seed: u64,
        explain: bool,
        oracle: bool,
        subsample: Option<&str>,
        text: bool,
    ) -> PyResult<Bound<'py, PyAny>> {
        let options = RunOptions {
            seed,
            explain,
            oracle,
            subsample: subsample_dims(subsample)?,
        };
        let (doc, base_dir) = (&self.doc, &self.base_dir);
        let outcome = py
            .detach(|| {
                let catalog = doc.load_catalog(base_dir)?;
                run_document(doc, &catalog, &options)
            })
            .map_err(to_py)?;
        if text {
            Ok(render_text(&outcome).into_pyobject(py)?.into_any())
        } else {
            from_json(py, &outcome.to_json())
        }
    }
}

/// Loads `plan_path` and runs it once; a shortcut for `Plan.load(...).run(...)`.
#[pyfunction]
#[pyo3(signature = (plan_path, seed = 0, explain = false, oracle = false, subsample = None))]
fn estimate<'py>(
    py: Python<'py>,
    plan_path: PathBuf,
    seed: u64,
    explain: bool,
    oracle: bool,
    subsample: Option<&str>,
) -> PyResult<Bound<'py, PyAny>> {
    Plan::load(plan_path)?.run(py, seed, explain, oracle, subsample, false)
}

/// Writes the synthetic TPC-H-like tables and plan documents to `out_dir`.
#[pyfunction]
#[pyo3(signature = (out_dir, scale = "", seed = 7))]
fn generate(py: Python<'_>, out_dir: PathBuf, scale: &str, seed: u64) -> PyResult<Vec<PathBuf>> {
    let scale = TpchScale::parse(scale).map_err(to_py)?;
    py.detach(|| generate_tpch_tiny(&scale, seed, Path::new(&out_dir))).map_err(to_py)
}

#[pymodule]
fn gus_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Gus>()?;
    m.add_class::<Plan>()?;
    m.add_function(wrap_pyfunction!(estimate, m)?)?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add("GusError", m.py().get_type::<GusError>())?;
    m.add("NotIdentifiable", m.py().get_type::<NotIdentifiable>())?;
    Ok(())
}
