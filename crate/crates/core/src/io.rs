//! Edge-list ingestion, parameter files and CSV reports.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::model::{InitiatorMatrix, MixtureModel};
use crate::population::{Histogram, Metric, MetricSummary, PopulationReport};

/// A loaded edge list and what the loader discarded.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedGraph {
    pub graph: Graph,
    /// Original id of each dense node, ascending.
    pub original_ids: Vec<u64>,
    pub self_loops: usize,
    /// Repeated pairs, in either orientation, beyond the first.
    pub duplicates: usize,
}

/// Parse edge-list text. Nodes are the ids that occur in at least one
/// non-loop pair, numbered densely in ascending id order.
pub fn parse_edge_list(text: &str, path: &Path) -> Result<LoadedGraph> {
    let mut pairs = Vec::new();
    let mut self_loops = 0usize;
    let mut data_lines = 0usize;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        data_lines += 1;
        let bad = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let mut fields = line.split_whitespace();
        let mut id = || -> Result<u64> {
            let tok = fields.next().ok_or_else(|| bad("expected two node ids".into()))?;
            tok.parse::<u64>().map_err(|_| bad(format!("invalid node id {tok:?}")))
        };
        let (u, v) = (id()?, id()?);
        if let Some(extra) = fields.next() {
            return Err(bad(format!("unexpected trailing field {extra:?}")));
        }
        if u == v {
            self_loops += 1;
        } else {
            pairs.push((u.min(v), u.max(v)));
        }
    }
    if data_lines == 0 {
        return Err(Error::EmptyGraph(path.to_path_buf()));
    }
    if self_loops > 0 {
        log::warn!("{}: dropped {self_loops} self-loops", path.display());
    }
    let mut index = BTreeMap::new();
    for &(u, v) in &pairs {
        index.insert(u, 0u32);
        index.insert(v, 0u32);
    }
    if index.len() > u32::MAX as usize {
        return Err(Error::Overflow);
    }
    for (dense, slot) in index.values_mut().enumerate() {
        *slot = dense as u32;
    }
    let raw_pairs = pairs.len();
    let graph = Graph::new(index.len(), pairs.iter().map(|(u, v)| (index[u], index[v])))?;
    Ok(LoadedGraph {
        duplicates: raw_pairs - graph.edge_count(),
        original_ids: index.into_keys().collect(),
        graph,
        self_loops,
    })
}

pub fn load_graph(path: impl AsRef<Path>) -> Result<LoadedGraph> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_edge_list(&text, path)
}

/// Canonical text: one `u v` line per edge, `u < v`, sorted.
pub fn edge_list_string(g: &Graph) -> String {
    let mut out = String::with_capacity(g.edge_count() * 12);
    for &(u, v) in g.edges() {
        out.push_str(&u.to_string());
        out.push(' ');
        out.push_str(&v.to_string());
        out.push('\n');
    }
    out
}

pub fn write_edge_list(path: impl AsRef<Path>, g: &Graph) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, edge_list_string(g)).map_err(|e| Error::io(path, e))
}

pub const PARAMS_FORMAT_VERSION: u32 = 1;

/// On-disk model parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParamsFile {
    pub format_version: u32,
    pub k: usize,
    pub matrices: Vec<InitiatorMatrix>,
    pub pi: Vec<f64>,
    pub n: u32,
    pub l: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub provenance: String,
}

impl ModelParamsFile {
    pub fn from_model(model: &MixtureModel, seed: Option<u64>, provenance: impl Into<String>) -> Self {
        ModelParamsFile {
            format_version: PARAMS_FORMAT_VERSION,
            k: model.k(),
            matrices: model.matrices().to_vec(),
            pi: model.pi().to_vec(),
            n: model.n(),
            l: model.l(),
            seed,
            provenance: provenance.into(),
        }
    }

    pub fn model(&self) -> Result<MixtureModel> {
        if self.k != self.matrices.len() {
            return Err(Error::param(format!(
                "k = {} but {} matrices are listed",
                self.k,
                self.matrices.len()
            )));
        }
        MixtureModel::new(self.matrices.clone(), self.pi.clone(), self.n, self.l)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::param(format!("cannot serialize parameters: {e}")))
    }

    pub fn from_toml(text: &str, path: &Path) -> Result<Self> {
        let parsed: Self = toml::from_str(text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.span().map_or(0, |s| text[..s.start].lines().count().max(1)),
            message: e.message().to_string(),
        })?;
        if parsed.format_version != PARAMS_FORMAT_VERSION {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 0,
                message: format!("unsupported format_version {}", parsed.format_version),
            });
        }
        Ok(parsed)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, path)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_toml()?).map_err(|e| Error::io(path, e))
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

pub const SAMPLES_HEADER: [&str; 6] = ["sample_id", "alpha", "edges", "triangles", "apl", "acc"];

/// One row per sample.
pub fn write_samples_csv<W: Write>(out: W, report: &PopulationReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SAMPLES_HEADER)?;
    for (i, r) in report.rows.iter().enumerate() {
        w.write_record([
            i.to_string(),
            opt(r.alpha),
            r.moments.edges.to_string(),
            r.moments.triangles.to_string(),
            opt(r.apl),
            r.acc.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

/// Per-sample values read back from a samples CSV in [`Metric::ALL`] order,
/// `None` for `NA`.
pub fn read_samples_csv(path: impl AsRef<Path>) -> Result<Vec<[Option<f64>; 5]>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    if header.iter().ne(SAMPLES_HEADER) {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!("expected header {}", SAMPLES_HEADER.join(",")),
        });
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let mut row = [None; 5];
        for (j, slot) in row.iter_mut().enumerate() {
            let field = rec.get(j + 1).unwrap_or("NA");
            if field != "NA" {
                *slot = Some(field.parse().map_err(|_| Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 2,
                    message: format!("invalid number {field:?}"),
                })?);
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

/// `metric,mean,std`, or `source,metric,mean,std` when `labelled`.
pub fn write_summary_csv<W: Write>(out: W, sources: &[(&str, &[MetricSummary])], labelled: bool) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let header: &[&str] = if labelled {
        &["source", "metric", "mean", "std"]
    } else {
        &["metric", "mean", "std"]
    };
    w.write_record(header)?;
    for (source, summaries) in sources {
        for s in summaries.iter() {
            let mut rec = vec![s.metric.name().to_string(), s.mean.to_string(), s.std.to_string()];
            if labelled {
                rec.insert(0, source.to_string());
            }
            w.write_record(rec)?;
        }
    }
    w.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

/// `metric,bin_left,bin_right,count`, or with a leading `source` column when
/// `labelled`.
pub fn write_histogram_csv<W: Write>(out: W, rows: &[(&str, Metric, &Histogram)], labelled: bool) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let header: &[&str] = if labelled {
        &["source", "metric", "bin_left", "bin_right", "count"]
    } else {
        &["metric", "bin_left", "bin_right", "count"]
    };
    w.write_record(header)?;
    for (source, metric, h) in rows {
        for (i, c) in h.counts.iter().enumerate() {
            let mut rec = vec![
                metric.name().to_string(),
                h.edges[i].to_string(),
                h.edges[i + 1].to_string(),
                c.to_string(),
            ];
            if labelled {
                rec.insert(0, source.to_string());
            }
            w.write_record(rec)?;
        }
    }
    w.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

/// Write `samples.csv`, `summary.csv` and `histogram.csv` for one population.
pub fn write_population_dir(dir: impl AsRef<Path>, report: &PopulationReport) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let create = |name: &str| {
        let path = dir.join(name);
        fs::File::create(&path).map_err(|e| Error::io(path, e))
    };
    write_samples_csv(create("samples.csv")?, report)?;
    write_summary_csv(create("summary.csv")?, &[("", &report.summaries)], false)?;
    let rows: Vec<_> = report.summaries.iter().map(|s| ("", s.metric, &s.histogram)).collect();
    write_histogram_csv(create("histogram.csv")?, &rows, false)
}
