//! Per-round CSV rows.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::orchestrator::{ExperimentConfig, RoundReport};

pub const METRICS_HEADER: &str =
    "strategy,seed,alpha,round,epoch_equiv,train_loss,global_loss,accuracy,pairwise_dev,k_t,theta_th,selected,survived,wall_ms";

/// One line of `metrics.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub strategy: String,
    pub seed: u64,
    /// Dirichlet concentration or `iid`.
    pub alpha: String,
    pub round: u32,
    pub epoch_equiv: f64,
    pub train_loss: f64,
    pub global_loss: Option<f64>,
    pub accuracy: Option<f64>,
    pub pairwise_dev: Option<f64>,
    pub k_t: Option<f64>,
    pub theta_th: Option<f64>,
    pub selected: Option<usize>,
    pub survived: Option<usize>,
    pub wall_ms: u64,
}

impl MetricsRow {
    pub fn from_report(config: &ExperimentConfig, r: &RoundReport) -> Self {
        Self {
            strategy: config.strategy.name(),
            seed: config.seed,
            alpha: config.alpha.map_or_else(|| "iid".to_owned(), |a| a.to_string()),
            round: r.round,
            epoch_equiv: r.epoch_equiv,
            train_loss: r.train_loss,
            global_loss: r.global_loss,
            accuracy: r.accuracy,
            pairwise_dev: r.pairwise_dev,
            k_t: r.k_t,
            theta_th: r.theta_th,
            selected: r.selected.as_ref().map(Vec::len),
            survived: r.survivors.as_ref().map(Vec::len),
            wall_ms: r.wall_ms,
        }
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::file(path, io),
        other => Error::Data(format!("{}: {other:?}", path.display())),
    }
}

/// Streams rows to a CSV file, flushing after each round.
pub struct MetricsWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl MetricsWriter<File> {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::file(path, e))?;
        Ok(Self::new(file))
    }
}

impl<W: Write> MetricsWriter<W> {
    pub fn new(out: W) -> Self {
        Self { inner: csv::WriterBuilder::new().has_headers(true).from_writer(out) }
    }

    pub fn write(&mut self, row: &MetricsRow) -> Result<()> {
        self.inner.serialize(row).map_err(|e| Error::Data(format!("metrics row: {e}")))?;
        self.inner.flush()?;
        Ok(())
    }

    pub fn into_inner(self) -> Result<W> {
        self.inner.into_inner().map_err(|e| Error::Io(e.into_error()))
    }
}

/// Reads a metrics file back, checking the header.
pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = rdr.headers().map_err(|e| csv_err(path, e))?.iter().collect::<Vec<_>>().join(",");
    if header != METRICS_HEADER {
        return Err(Error::Data(format!("{}: unexpected header '{header}'", path.display())));
    }
    rdr.deserialize().map(|r| r.map_err(|e| csv_err(path, e))).collect()
}
