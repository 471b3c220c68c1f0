//! Python bindings. Structured values cross the boundary as plain dicts and
//! lists (via JSON), scenes, situations and graphs as opaque classes.

use std::fs;
use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyModule;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::Serialize;

use situated3d::align::{grad_check as core_grad_check, AlignProblem, AttentionParams};
use situated3d::dataset::{self, DatasetExample, SplitSpec};
use situated3d::evalkit::{self, DEFAULT_DIRECTION_PREFIX};
use situated3d::pipeline::{self, RunManifest, RunOptions};
use situated3d::situated::{build_situated_graph, sample_situation, situation_rng, SituationConfig};
use situated3d::synth;
use situated3d::taskgen::{offline_generate, render_prompt as core_render_prompt, PromptStyle, TaskKind};
use situated3d::{DirectionBin, Scene, Situation, SituatedSceneGraph};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(value_err)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn from_py<T: DeserializeOwned>(value: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = value.py().import("json")?.call_method1("dumps", (value,))?.extract()?;
    serde_json::from_str(&text).map_err(value_err)
}

fn task(name: &str) -> PyResult<TaskKind> {
    name.parse().map_err(PyValueError::new_err)
}

#[pyclass(name = "Scene", frozen)]
struct PyScene {
    inner: Scene,
}

#[pymethods]
impl PyScene {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        situated3d::scene::load_scene_str(text).map(|inner| Self { inner }).map_err(value_err)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let text = fs::read_to_string(&path).map_err(|e| PyIOError::new_err(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Random furnished room, reproducible from `seed`.
    #[staticmethod]
    fn synthetic(seed: u64, scene_id: &str) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self { inner: synth::random_scene(&mut rng, scene_id) }
    }

    /// The small hand-built living-room scene.
    #[staticmethod]
    fn example() -> Self {
        Self { inner: synth::fig4_scene() }
    }

    #[getter]
    fn id(&self) -> &str {
        &self.inner.id
    }

    fn object_ids(&self) -> Vec<String> {
        self.inner.objects.iter().map(|o| o.id.clone()).collect()
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    fn __len__(&self) -> usize {
        self.inner.objects.len()
    }

    fn __repr__(&self) -> String {
        format!("Scene(id={:?}, objects={})", self.inner.id, self.inner.objects.len())
    }
}

#[pyclass(name = "Situation", frozen)]
struct PySituation {
    inner: Situation,
}

#[pymethods]
impl PySituation {
    #[new]
    fn new(scene: &PyScene, pivot_id: &str, stand: (f64, f64), referent_id: &str) -> PyResult<Self> {
        Situation::new(&scene.inner, pivot_id, [stand.0, stand.1], referent_id)
            .map(|inner| Self { inner })
            .map_err(value_err)
    }

    /// Samples the `index`-th situation of `stream` for this scene.
    #[staticmethod]
    #[pyo3(signature = (scene, seed, index = 0, stream = "python"))]
    fn sample(scene: &PyScene, seed: u64, index: u64, stream: &str) -> PyResult<Self> {
        let mut rng = situation_rng(seed, &scene.inner.id, stream, index);
        sample_situation(&scene.inner, &mut rng, &SituationConfig::default())
            .map(|inner| Self { inner })
            .map_err(value_err)
    }

    #[getter]
    fn description(&self) -> &str {
        &self.inner.description
    }

    #[getter]
    fn pivot_id(&self) -> &str {
        &self.inner.pivot_id
    }

    #[getter]
    fn referent_id(&self) -> &str {
        &self.inner.referent_id
    }

    #[getter]
    fn yaw(&self) -> f64 {
        self.inner.yaw
    }

    fn digest(&self) -> String {
        self.inner.digest()
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner)
    }

    fn __repr__(&self) -> String {
        format!("Situation({:?})", self.inner.description)
    }
}

#[pyclass(name = "SituatedGraph", frozen)]
struct PyGraph {
    inner: SituatedSceneGraph,
}

#[pymethods]
impl PyGraph {
    #[new]
    fn new(scene: &PyScene, situation: &PySituation) -> PyResult<Self> {
        build_situated_graph(&scene.inner, &situation.inner)
            .map(|inner| Self { inner })
            .map_err(value_err)
    }

    fn records<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let records: Vec<_> = self.inner.records().collect();
        to_py(py, &records)
    }

    fn labels(&self) -> Vec<String> {
        self.inner.labels()
    }

    /// Objects labelled `label` in one direction bin (front, right, back, left).
    fn count_label(&self, direction: &str, label: &str) -> PyResult<usize> {
        let bin = DirectionBin::ALL
            .into_iter()
            .find(|d| format!("{d:?}").eq_ignore_ascii_case(direction))
            .ok_or_else(|| PyValueError::new_err(format!("unknown direction `{direction}`")))?;
        Ok(self.inner.count_label(bin, label))
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }
}

#[pyfunction]
#[pyo3(signature = (task_name, scene, graph, style = "spa"))]
fn render_prompt<'py>(py: Python<'py>, task_name: &str, scene: &PyScene, graph: &PyGraph, style: &str) -> PyResult<Bound<'py, PyAny>> {
    let style: PromptStyle = style.parse().map_err(PyValueError::new_err)?;
    to_py(py, &core_render_prompt(task(task_name)?, &scene.inner, &graph.inner, style))
}

#[pyfunction]
fn offline_examples<'py>(py: Python<'py>, task_name: &str, graph: &PyGraph, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    to_py(py, &offline_generate(task(task_name)?, &graph.inner, &mut rng))
}

#[pyfunction]
fn fidelity_check<'py>(py: Python<'py>, example: &Bound<'py, PyAny>, graph: &PyGraph) -> PyResult<Bound<'py, PyAny>> {
    let example: DatasetExample = from_py(example)?;
    to_py(py, &dataset::fidelity_check(&example, &graph.inner).map_err(value_err)?)
}

/// Scene-stratified split with the default per-task test fractions.
#[pyfunction]
#[pyo3(signature = (examples, seed = 0))]
fn split<'py>(py: Python<'py>, examples: &Bound<'py, PyAny>, seed: u64) -> PyResult<(Bound<'py, PyAny>, Bound<'py, PyAny>)> {
    let examples: Vec<DatasetExample> = from_py(examples)?;
    let spec = SplitSpec { seed, ..SplitSpec::default() };
    let (train, test) = dataset::split(examples, &spec).map_err(value_err)?;
    Ok((to_py(py, &train)?, to_py(py, &test)?))
}

#[pyfunction]
fn stats<'py>(py: Python<'py>, examples: &Bound<'py, PyAny>) -> PyResult<Bound<'py, PyAny>> {
    let examples: Vec<DatasetExample> = from_py(examples)?;
    to_py(py, &dataset::stats(&examples))
}

#[pyfunction]
fn bleu4(prediction: &str, reference: &str) -> f64 {
    evalkit::bleu4(&evalkit::tokenize(prediction), &evalkit::tokenize(reference))
}

#[pyfunction]
fn rouge_l(prediction: &str, reference: &str) -> f64 {
    evalkit::rouge_l(&evalkit::tokenize(prediction), &evalkit::tokenize(reference))
}

#[pyfunction]
fn exact_match(prediction: &str, reference: &str) -> u8 {
    evalkit::exact_match(prediction, reference)
}

/// Metrics and direction audit over a predictions JSONL file.
#[pyfunction]
#[pyo3(signature = (path, direction_prefix = DEFAULT_DIRECTION_PREFIX))]
fn evaluate<'py>(py: Python<'py>, path: PathBuf, direction_prefix: &str) -> PyResult<Bound<'py, PyAny>> {
    let f = fs::File::open(&path).map_err(|e| PyIOError::new_err(format!("{}: {e}", path.display())))?;
    let records = evalkit::read_predictions(std::io::BufReader::new(f)).map_err(value_err)?;
    to_py(py, &evalkit::evaluate(&records, direction_prefix))
}

#[pyfunction]
#[pyo3(signature = (seed = 0, objects = 5, dim = 6, hidden = 8, epsilon = 1e-6))]
fn grad_check<'py>(py: Python<'py>, seed: u64, objects: usize, dim: usize, hidden: usize, epsilon: f64) -> PyResult<Bound<'py, PyAny>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let problem = AlignProblem::random(objects, dim, &mut rng);
    let params = AttentionParams::random(dim, hidden, 0.5, &mut rng);
    to_py(py, &core_grad_check(&problem, &params, epsilon).map_err(value_err)?)
}

#[pyfunction]
#[pyo3(signature = (scene, situation = None))]
fn render_svg(scene: &PyScene, situation: Option<&PySituation>) -> String {
    situated3d::render::render_svg(&scene.inner, situation.map(|s| &s.inner))
}

/// Runs the generation pipeline. `manifest` uses the manifest file's keys.
#[pyfunction]
#[pyo3(signature = (manifest, stop_after = None))]
fn run_pipeline<'py>(py: Python<'py>, manifest: &Bound<'py, PyAny>, stop_after: Option<usize>) -> PyResult<Bound<'py, PyAny>> {
    let manifest: RunManifest = from_py(manifest)?;
    let summary = py
        .detach(|| pipeline::run(&manifest, &RunOptions { stop_after }))
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    to_py(py, &summary)
}

#[pymodule]
fn _situated3d(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyScene>()?;
    m.add_class::<PySituation>()?;
    m.add_class::<PyGraph>()?;
    m.add_function(wrap_pyfunction!(render_prompt, m)?)?;
    m.add_function(wrap_pyfunction!(offline_examples, m)?)?;
    m.add_function(wrap_pyfunction!(fidelity_check, m)?)?;
    m.add_function(wrap_pyfunction!(split, m)?)?;
    m.add_function(wrap_pyfunction!(stats, m)?)?;
    m.add_function(wrap_pyfunction!(bleu4, m)?)?;
    m.add_function(wrap_pyfunction!(rouge_l, m)?)?;
    m.add_function(wrap_pyfunction!(exact_match, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(grad_check, m)?)?;
    m.add_function(wrap_pyfunction!(render_svg, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    Ok(())
}
