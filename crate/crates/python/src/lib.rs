//! Python bindings: scene generation, temporal fusion, event scoring and
//! cascades loaded from a manifest.

use std::path::Path;
use std::sync::Arc;

use colorcascade::cascade::{self, CascadeStage};
use colorcascade::evalkit::{self, GroundTruthInterval};
use colorcascade::io::{load_cascade_manifest, read_pnm};
use colorcascade::nn::{build_paper_model, load_weights, BlockArch, Network, NetworkSpec};
use colorcascade::preprocess::{self, Frame};
use colorcascade::synthcorpus::{self, SceneClass, SceneRecipe};
use colorcascade::temporal::{self, Event};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyfunction]
fn luma(r: u8, g: u8, b: u8) -> u8 {
    preprocess::luma(r, g, b)
}

#[pyfunction]
fn majority_vote(labels: Vec<bool>, window: usize) -> PyResult<Vec<bool>> {
    temporal::majority_labels(&labels, window).map_err(value_err)
}

#[pyfunction]
fn neighbor_validate(c: Vec<bool>, l: Vec<bool>, radius: usize) -> PyResult<Vec<bool>> {
    temporal::validate_labels(&c, &l, radius).map_err(value_err)
}

/// `(tp, fp, fn)` for `(start_s, end_s)` events against truth intervals.
#[pyfunction]
#[pyo3(signature = (events, truth, tolerance = evalkit::DEFAULT_TOLERANCE_S))]
fn match_events(events: Vec<(f64, f64)>, truth: Vec<(f64, f64)>, tolerance: f64) -> PyResult<(usize, usize, usize)> {
    let events: Vec<Event> = events
        .into_iter()
        .map(|(start_s, end_s)| Event { start_s, end_s })
        .collect();
    let truth: Vec<GroundTruthInterval> = truth
        .into_iter()
        .map(|(a, b)| GroundTruthInterval::new(a, b, "explosion"))
        .collect();
    let m = evalkit::match_events(&events, &truth, tolerance).map_err(value_err)?;
    Ok((m.tp, m.fp, m.fn_))
}

/// `(precision, recall, f1, degenerate)`.
#[pyfunction]
fn metrics(tp: usize, fp: usize, fn_: usize) -> (f64, f64, f64, bool) {
    let m = evalkit::metrics(tp, fp, fn_);
    (m.precision, m.recall, m.f1, m.degenerate)
}

#[pyfunction]
#[pyo3(signature = (channels, side, arch = "full"))]
fn count_params(channels: usize, side: usize, arch: &str) -> PyResult<usize> {
    let spec = match arch {
        "full" => build_paper_model(channels, side),
        "desk" => BlockArch::desk().build(channels, side),
        other => return Err(value_err(format!("unknown architecture `{other}`"))),
    }
    .map_err(value_err)?;
    Ok(spec.count_params().total)
}

/// `(width, height, rgb_bytes)` of one synthetic scene.
#[pyfunction]
#[pyo3(signature = (class_name, seed, size = synthcorpus::DEFAULT_SIZE))]
fn gen_image<'py>(
    py: Python<'py>,
    class_name: &str,
    seed: u64,
    size: usize,
) -> PyResult<(usize, usize, Bound<'py, PyBytes>)> {
    let class: SceneClass = class_name.parse().map_err(value_err)?;
    let frame = synthcorpus::gen_image(&SceneRecipe::new(class, seed, size)).map_err(value_err)?;
    Ok((frame.width(), frame.height(), PyBytes::new(py, frame.data())))
}

fn load_network(spec: &Path, weights: &Path) -> PyResult<Network> {
    let text = std::fs::read_to_string(spec).map_err(|e| PyIOError::new_err(format!("{}: {e}", spec.display())))?;
    let spec: NetworkSpec = serde_json::from_str(&text).map_err(value_err)?;
    let bytes = std::fs::read(weights).map_err(|e| PyIOError::new_err(format!("{}: {e}", weights.display())))?;
    let bundle = load_weights(&bytes, &spec).map_err(value_err)?;
    Network::from_bundle(spec, &bundle).map_err(value_err)
}

/// A cascade read from a manifest with one
/// `projection=.. weights=.. threshold=..` line per stage.
#[pyclass(frozen)]
struct Cascade {
    inner: cascade::Cascade,
}

#[pymethods]
impl Cascade {
    #[new]
    fn new(manifest: &str) -> PyResult<Self> {
        let entries = load_cascade_manifest(Path::new(manifest)).map_err(value_err)?;
        let mut stages = Vec::with_capacity(entries.len());
        for e in entries {
            let net = load_network(&e.spec, &e.weights)?;
            stages.push(CascadeStage::new(e.projection, Arc::new(net), e.threshold));
        }
        Ok(Self {
            inner: cascade::Cascade::new(stages).map_err(value_err)?,
        })
    }

    #[getter]
    fn num_stages(&self) -> usize {
        self.inner.stages().len()
    }

    /// `(positive, score, stage_reached)` for interleaved RGB bytes.
    fn classify(&self, width: usize, height: usize, data: &[u8]) -> PyResult<(bool, f64, usize)> {
        let frame = Frame::new(width, height, 3, data.to_vec()).map_err(value_err)?;
        self.run(&frame)
    }

    fn classify_ppm(&self, path: &str) -> PyResult<(bool, f64, usize)> {
        let frame = read_pnm(Path::new(path)).map_err(value_err)?;
        self.run(&frame)
    }
}

impl Cascade {
    fn run(&self, frame: &Frame) -> PyResult<(bool, f64, usize)> {
        let p = self.inner.classify_image(frame).map_err(value_err)?;
        Ok((p.positive, p.score, p.stage_reached))
    }
}

#[pymodule]
fn pycascade(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(luma, m)?)?;
    m.add_function(wrap_pyfunction!(majority_vote, m)?)?;
    m.add_function(wrap_pyfunction!(neighbor_validate, m)?)?;
    m.add_function(wrap_pyfunction!(match_events, m)?)?;
    m.add_function(wrap_pyfunction!(metrics, m)?)?;
    m.add_function(wrap_pyfunction!(count_params, m)?)?;
    m.add_function(wrap_pyfunction!(gen_image, m)?)?;
    m.add_class::<Cascade>()?;
    Ok(())
}
