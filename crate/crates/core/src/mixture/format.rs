//! JSON model file. Floats are written with 17 significant digits.

use std::fmt::Write as _;
use std::io::{Read, Write};

use serde::Deserialize;

use super::{FitStats, IntentModel};
use crate::error::{Error, Result};

pub const MODEL_FORMAT_VERSION: u32 = 1;

fn float(x: f64) -> String {
    format!("{x:.16e}")
}

fn floats<'a>(xs: impl IntoIterator<Item = &'a f64>) -> String {
    let mut out = String::from("[");
    for (i, x) in xs.into_iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push_str(&float(*x));
    }
    out.push(']');
    out
}

pub fn write_model_json<W: Write>(mut w: W, model: &IntentModel) -> Result<()> {
    let stats = model.fit_stats();
    let mut s = String::new();
    let covariances: Vec<String> = model.variances().iter().map(floats).collect();
    // writing to a String cannot fail
    let _ = write!(
        s,
        "{{\n  \"version\": {},\n  \"k\": {},\n  \"dim\": {},\n  \"variance_floor\": {},\n  \"weights\": {},\n  \"means\": {},\n  \"covariances\": [{}],\n  \"fit_stats\": {{\"log_likelihood\": {}, \"iterations\": {}, \"converged\": {}, \"resets\": {}, \"trace\": {}}}\n}}\n",
        MODEL_FORMAT_VERSION,
        model.k(),
        model.dim(),
        float(model.variance_floor()),
        floats(model.weights()),
        floats(model.means().iter().flatten()),
        covariances.join(","),
        float(stats.log_likelihood),
        stats.iterations,
        stats.converged,
        stats.resets,
        floats(&stats.trace),
    );
    w.write_all(s.as_bytes())?;
    w.flush()?;
    Ok(())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    version: u32,
    k: usize,
    dim: usize,
    variance_floor: f64,
    weights: Vec<f64>,
    means: Vec<f64>,
    covariances: Vec<Vec<f64>>,
    fit_stats: StatsFile,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StatsFile {
    log_likelihood: f64,
    iterations: usize,
    converged: bool,
    #[serde(default)]
    resets: usize,
    #[serde(default)]
    trace: Vec<f64>,
}

pub fn read_model_json<R: Read>(reader: R) -> Result<IntentModel> {
    let file: ModelFile =
        serde_json::from_reader(reader).map_err(|e| Error::format("model file", e))?;
    if file.version != MODEL_FORMAT_VERSION {
        return Err(Error::format(
            "model file",
            format!("unsupported version {}", file.version),
        ));
    }
    if file.k == 0 || file.dim == 0 || file.k.checked_mul(file.dim) != Some(file.means.len()) {
        return Err(Error::format(
            "model file",
            format!("means has {} values, expected k×dim", file.means.len()),
        ));
    }
    if file.weights.len() != file.k || file.covariances.len() != file.k {
        return Err(Error::format("model file", "weights/covariances length differs from k"));
    }
    let means = file.means.chunks(file.dim).map(<[f64]>::to_vec).collect();
    IntentModel::new(
        file.weights,
        means,
        file.covariances,
        file.variance_floor,
        FitStats {
            log_likelihood: file.fit_stats.log_likelihood,
            iterations: file.fit_stats.iterations,
            converged: file.fit_stats.converged,
            resets: file.fit_stats.resets,
            trace: file.fit_stats.trace,
        },
    )
}
