use std::io::Write;
use std::path::Path;

use crate::datasets::format_float;
use crate::error::Result;

pub const METRICS_HEADER: &str = "epoch,train_ll,val_ll,quadratic,neg_logdet,tikhonov,smax,smin,seconds";

/// One completed epoch. Loss terms are means over the epoch's batches,
/// computed with the parameters each batch saw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_ll: f64,
    /// NaN when there is no validation set.
    pub val_ll: f64,
    pub quadratic: f64,
    pub neg_logdet: f64,
    pub tikhonov: f64,
    /// Extreme Jacobian singular values over the monitoring subset.
    pub smax: f64,
    pub smin: f64,
    /// Wall time since training started.
    pub seconds: f64,
}

impl EpochRecord {
    pub fn total_loss(&self) -> f64 {
        self.quadratic + self.neg_logdet + self.tikhonov
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunMetrics {
    pub records: Vec<EpochRecord>,
}

impl RunMetrics {
    pub fn push(&mut self, rec: EpochRecord) {
        self.records.push(rec);
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    /// Writes all records. The `seconds` column holds `NaN` so that seeded
    /// runs produce identical files; see [`RunMetrics::write_csv_timed`].
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        self.write_rows(w, false)
    }

    /// Like [`RunMetrics::write_csv`] but with measured wall-clock times.
    pub fn write_csv_timed<W: Write>(&self, w: W) -> Result<()> {
        self.write_rows(w, true)
    }

    fn write_rows<W: Write>(&self, mut w: W, timed: bool) -> Result<()> {
        writeln!(w, "{METRICS_HEADER}")?;
        for r in &self.records {
            let vals = [
                r.train_ll,
                r.val_ll,
                r.quadratic,
                r.neg_logdet,
                r.tikhonov,
                r.smax,
                r.smin,
                if timed { r.seconds } else { f64::NAN },
            ];
            let cells: Vec<String> = vals.iter().map(|&v| format_float(v)).collect();
            writeln!(w, "{},{}", r.epoch, cells.join(","))?;
        }
        Ok(())
    }

    pub fn write_csv_path(&self, path: impl AsRef<Path>, timed: bool) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_rows(&mut f, timed)?;
        f.flush()?;
        Ok(())
    }
}
