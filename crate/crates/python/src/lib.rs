//! Python bindings. Build with `maturin develop` from this directory, or see
//! `python/smoke_test.py` for a manual cargo build.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use steval::align::{self, MemoryMode, ResegmentOptions};
use steval::campaign;
use steval::metrics::{self, Metric, MetricConfig};
use steval::stats::{self, PairedScores, ReportFormat, Statistic};
use steval::textproc::{self, TokenizationLevel};

fn err(e: steval::Error) -> PyErr {
    if e.is_io() {
        PyIOError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn parse<T: std::str::FromStr<Err = steval::Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(err)
}

fn stream(text: &str, level: &str) -> PyResult<textproc::TokenStream> {
    Ok(textproc::tokenize(text, parse(level)?))
}

/// Splits text into word or character tokens after NFC normalization.
#[pyfunction]
#[pyo3(signature = (text, level = "word"))]
fn tokenize(text: &str, level: &str) -> PyResult<Vec<String>> {
    Ok(stream(text, level)?.into_tokens())
}

/// Levenshtein distance between two token lists.
#[pyfunction]
fn edit_distance(a: Vec<String>, b: Vec<String>) -> PyResult<usize> {
    let level = TokenizationLevel::Word;
    let a = textproc::TokenStream::new(a, level).map_err(err)?;
    let b = textproc::TokenStream::new(b, level).map_err(err)?;
    align::edit_distance(&a, &b).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (hyp, reference, level = "word"))]
fn wer(hyp: &str, reference: &str, level: &str) -> PyResult<f64> {
    align::wer(&stream(hyp, level)?, &stream(reference, level)?).map_err(err)
}

#[pyclass(get_all, module = "steval")]
struct Segmentation {
    cut_points: Vec<usize>,
    total_distance: usize,
    approximate: bool,
    /// Hypothesis text per reference segment.
    segments: Vec<String>,
}

#[pymethods]
impl Segmentation {
    fn __repr__(&self) -> String {
        format!(
            "Segmentation(cut_points={:?}, total_distance={}, approximate={})",
            self.cut_points,
            self.total_distance,
            if self.approximate { "True" } else { "False" }
        )
    }
}

/// Aligns an unsegmented hypothesis to reference segments, minimizing
/// total edit distance.
#[pyfunction]
#[pyo3(signature = (hyp, refs, level = "word", memory = "auto", band = None))]
fn resegment(hyp: &str, refs: Vec<String>, level: &str, memory: &str, band: Option<usize>) -> PyResult<Segmentation> {
    let h = stream(hyp, level)?;
    let r = refs
        .iter()
        .map(|s| stream(s, level))
        .collect::<PyResult<Vec<_>>>()?;
    let opts = ResegmentOptions {
        memory: parse::<MemoryMode>(memory)?,
        band,
        reference_set: None,
    };
    let seg = align::resegment_with(&h, &r, &opts).map_err(err)?;
    let segments = seg.apply(&h).iter().map(textproc::join_tokens).collect();
    Ok(Segmentation {
        cut_points: seg.cut_points,
        total_distance: seg.total_distance,
        approximate: seg.approximate,
        segments,
    })
}

/// Corpus chrF over parallel hypothesis and reference lists.
#[pyfunction]
#[pyo3(signature = (hyps, refs, char_order = 6, beta = 2.0))]
fn chrf(hyps: Vec<String>, refs: Vec<String>, char_order: usize, beta: f64) -> PyResult<f64> {
    let cfg = MetricConfig {
        char_ngram_max: char_order,
        beta,
        ..MetricConfig::new(Metric::ChrF)
    };
    metrics::chrf_corpus(&hyps, &refs, &cfg).map_err(err)
}

/// Corpus BLEU without smoothing.
#[pyfunction]
#[pyo3(signature = (hyps, refs, max_order = 4, level = "word"))]
fn bleu(hyps: Vec<String>, refs: Vec<String>, max_order: usize, level: &str) -> PyResult<f64> {
    let level: TokenizationLevel = parse(level)?;
    let cfg = MetricConfig {
        bleu_ngram_max: max_order,
        ..MetricConfig::new(Metric::Bleu)
    };
    let h: Vec<_> = hyps.iter().map(|s| textproc::tokenize(s, level)).collect();
    let r: Vec<_> = refs.iter().map(|s| textproc::tokenize(s, level)).collect();
    metrics::bleu_corpus(&h, &r, &cfg).map_err(err)
}

/// (coefficient, p-value); either is None when undefined.
#[pyfunction]
fn pearson(x: Vec<f64>, y: Vec<f64>) -> PyResult<(Option<f64>, Option<f64>)> {
    let c = stats::pearson(&PairedScores::from_vectors(x, y).map_err(err)?).map_err(err)?;
    Ok((c.value, c.p))
}

#[pyfunction]
fn spearman(x: Vec<f64>, y: Vec<f64>) -> PyResult<(Option<f64>, Option<f64>)> {
    let c = stats::spearman(&PairedScores::from_vectors(x, y).map_err(err)?).map_err(err)?;
    Ok((c.value, c.p))
}

#[pyfunction]
#[pyo3(signature = (x, y, statistic = "pearson", iterations = 10_000, seed = 0))]
fn permutation_p(x: Vec<f64>, y: Vec<f64>, statistic: &str, iterations: usize, seed: u64) -> PyResult<f64> {
    let statistic = match statistic {
        "pearson" => Statistic::Pearson,
        "spearman" => Statistic::Spearman,
        other => return Err(PyValueError::new_err(format!("unknown statistic {other:?}"))),
    };
    let pairs = PairedScores::from_vectors(x, y).map_err(err)?;
    stats::permutation_p(&pairs, statistic, iterations, seed).map_err(err)
}

/// Correlates two system-level score TSV files.
#[pyfunction]
fn correlate<'py>(py: Python<'py>, human_tsv: &str, metric_tsv: &str) -> PyResult<Bound<'py, PyDict>> {
    let h = metrics::read_score_table(human_tsv).map_err(err)?;
    let m = metrics::read_score_table(metric_tsv).map_err(err)?;
    let r = stats::correlate(&h, &m).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("method_x", &r.provenance.method_x)?;
    d.set_item("method_y", &r.provenance.method_y)?;
    d.set_item("n", r.n)?;
    d.set_item("pearson_rho", r.pearson_rho)?;
    d.set_item("pearson_p", r.pearson_p)?;
    d.set_item("spearman_r", r.spearman_r)?;
    d.set_item("spearman_p", r.spearman_p)?;
    d.set_item("significant_pearson", r.significant_pearson)?;
    d.set_item("significant_spearman", r.significant_spearman)?;
    d.set_item(
        "report_tsv",
        stats::render_report(std::slice::from_ref(&r), ReportFormat::Tsv),
    )?;
    Ok(d)
}

/// Segment ids sampled for a DA campaign.
#[pyfunction]
#[pyo3(signature = (testset_dir, k, seed, condition = None))]
fn sample_segments(testset_dir: &str, k: usize, seed: u64, condition: Option<&str>) -> PyResult<Vec<String>> {
    let ts = steval::evalset::load_testset(testset_dir).map_err(err)?;
    let set = match condition {
        Some(c) => ts.require(&parse(c)?).map_err(err)?,
        None => ts.only().map_err(err)?,
    };
    Ok(steval::da::sample_condition(set, k, seed).map_err(err)?.segment_ids)
}

/// An existing campaign directory.
#[pyclass(module = "steval")]
struct Campaign {
    inner: campaign::Campaign,
}

#[pymethods]
impl Campaign {
    #[new]
    fn open(dir: &str) -> PyResult<Self> {
        Ok(Campaign {
            inner: campaign::Campaign::open(dir).map_err(err)?,
        })
    }

    /// Next unscored task as a dict (without system identity), or None.
    fn next_task<'py>(&self, py: Python<'py>, annotator: &str) -> PyResult<Option<Bound<'py, PyDict>>> {
        let Some(t) = self.inner.next_task(annotator) else {
            return Ok(None);
        };
        let d = PyDict::new(py);
        d.set_item("task_id", &t.task_id)?;
        d.set_item("source_text", &t.source_text)?;
        d.set_item("hyp_text", &t.hyp_text)?;
        d.set_item("prev_hyp_text", &t.prev_hyp_text)?;
        d.set_item("next_hyp_text", &t.next_hyp_text)?;
        d.set_item("presentation_index", t.presentation_index)?;
        Ok(Some(d))
    }

    #[pyo3(signature = (task_id, annotator, score, timestamp = 0))]
    fn submit(&mut self, task_id: &str, annotator: &str, score: f64, timestamp: u64) -> PyResult<()> {
        self.inner
            .submit(task_id, annotator, score, timestamp)
            .map(|_| ())
            .map_err(|e| PyValueError::new_err(e.to_string()))
    }

    /// (done, total) over all annotators.
    fn progress(&self) -> (usize, usize) {
        let p = self.inner.progress();
        (p.done, p.total)
    }

    fn export_wmt(&self, path: &str) -> PyResult<()> {
        self.inner.export_wmt(path).map_err(err)
    }
}

#[pymodule]
#[pyo3(name = "steval")]
fn steval_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(tokenize, m)?)?;
    m.add_function(wrap_pyfunction!(edit_distance, m)?)?;
    m.add_function(wrap_pyfunction!(wer, m)?)?;
    m.add_function(wrap_pyfunction!(resegment, m)?)?;
    m.add_function(wrap_pyfunction!(chrf, m)?)?;
    m.add_function(wrap_pyfunction!(bleu, m)?)?;
    m.add_function(wrap_pyfunction!(pearson, m)?)?;
    m.add_function(wrap_pyfunction!(spearman, m)?)?;
    m.add_function(wrap_pyfunction!(permutation_p, m)?)?;
    m.add_function(wrap_pyfunction!(correlate, m)?)?;
    m.add_function(wrap_pyfunction!(sample_segments, m)?)?;
    m.add_class::<Segmentation>()?;
    m.add_class::<Campaign>()?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
