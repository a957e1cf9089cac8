//! CSV run logs.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::optimizer::{RunLog, RunRow};
use crate::{Error, Result};

pub fn format_row(row: &RunRow) -> String {
    let c = &row.cost;
    format!(
        "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{}",
        row.iter,
        c.total,
        c.bending,
        c.e_star,
        c.area,
        c.volume,
        c.reduced_volume,
        row.gradient_norm,
        row.alpha,
        row.rejects
    )
}

/// Appends log rows to a file as they are produced.
pub struct CsvLogWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl CsvLogWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = Self {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
        };
        w.line(RunLog::CSV_HEADER)?;
        Ok(w)
    }

    fn line(&mut self, text: &str) -> Result<()> {
        writeln!(self.out, "{text}").map_err(|e| Error::io(&self.path, e))
    }

    pub fn append(&mut self, row: &RunRow) -> Result<()> {
        self.line(&format_row(row))
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

pub fn write_csv_log(path: &Path, log: &RunLog) -> Result<()> {
    let mut w = CsvLogWriter::create(path)?;
    for row in &log.rows {
        w.append(row)?;
    }
    w.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer::CostBreakdown;

    #[test]
    fn header_and_rows() {
        let row = RunRow {
            iter: 3,
            cost: CostBreakdown {
                total: 1.5,
                bending: 1.0,
                e_star: 0.5,
                area_penalty: 0.25,
                volume_penalty: 0.25,
                local_penalty: 0.0,
                area: 12.0,
                volume: 4.0,
                reduced_volume: 0.9,
            },
            gradient_norm: 1e-3,
            alpha: 0.025,
            rejects: 2,
            round: 0,
            total_divergence: None,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.csv");
        write_csv_log(&path, &RunLog { rows: vec![row, row] }).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "iter,J,W,Estar,A,V,v,gradnorm,alpha,rejects");
        assert_eq!(lines.len(), 3);
        let fields: Vec<&str> = lines[1].split(',').collect();
        assert_eq!(fields.len(), 10);
        assert_eq!(fields[0], "3");
        assert_eq!(fields[9], "2");
        assert_eq!(fields[1].parse::<f64>().unwrap(), 1.5);
    }
}
