//! Report bundle: CSV tables plus a JSON summary of scalar metrics.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{DecayCurve, SimilarityMatrix, TopicHistogram, TransitionMatrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionRow {
    pub id: String,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisReport {
    pub histogram: TopicHistogram,
    pub transitions: TransitionMatrix,
    pub decay: Option<DecayCurve>,
    pub similarity: Option<SimilarityMatrix>,
    pub projection: Vec<ProjectionRow>,
    pub summary: BTreeMap<String, serde_json::Value>,
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    File::create(&path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn write_transitions(dir: &Path, name: &str, t: &TransitionMatrix, probs: &[Vec<f64>]) -> Result<()> {
    let mut w = create(dir, name)?;
    writeln!(w, "from,to,count,prob")?;
    for i in 0..t.k {
        for j in 0..t.k {
            writeln!(w, "{i},{j},{},{}", t.counts[i][j], probs[i][j])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes `histogram.csv`, `transitions.csv`, `transitions_excl_self.csv`,
/// `decay.csv`, `similarity.csv`, `projection.csv` and `summary.json` into `dir`.
pub fn write_bundle(dir: &Path, report: &AnalysisReport) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let mut w = create(dir, "histogram.csv")?;
    writeln!(w, "k_topics,count,fraction")?;
    for (&k, &count) in &report.histogram.counts {
        writeln!(w, "{k},{count},{}", report.histogram.fraction(k))?;
    }
    w.flush()?;

    let t = &report.transitions;
    write_transitions(dir, "transitions.csv", t, &t.probs)?;
    write_transitions(dir, "transitions_excl_self.csv", t, &t.probs_excluding_self)?;

    let mut w = create(dir, "decay.csv")?;
    writeln!(w, "gap_lo,gap_hi,mean_sim,n_pairs")?;
    if let Some(curve) = &report.decay {
        for i in 0..curve.n_buckets() {
            let mean = curve.mean_similarity[i].map(|m| m.to_string()).unwrap_or_default();
            writeln!(
                w,
                "{},{},{mean},{}",
                curve.bucket_edges[i],
                curve.bucket_edges[i + 1],
                curve.n_pairs[i]
            )?;
        }
    }
    w.flush()?;

    let mut w = create(dir, "similarity.csv")?;
    writeln!(w, "id_a,id_b,cosine")?;
    if let Some(sim) = &report.similarity {
        for (i, a) in sim.ids.iter().enumerate() {
            for (j, b) in sim.ids.iter().enumerate() {
                writeln!(w, "{a},{b},{}", sim.values[i][j])?;
            }
        }
    }
    w.flush()?;

    let mut w = create(dir, "projection.csv")?;
    writeln!(w, "id,x,y")?;
    for row in &report.projection {
        writeln!(w, "{},{},{}", row.id, row.x, row.y)?;
    }
    w.flush()?;

    let mut w = create(dir, "summary.json")?;
    serde_json::to_writer_pretty(&mut w, &report.summary).map_err(|e| Error::format("summary", e))?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}
