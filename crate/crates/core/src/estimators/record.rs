use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;

use crate::error::Result;
use crate::estimators::GradientEstimate;
use crate::harness::fmt_f64;

/// One line of the results ledger.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRecord {
    pub experiment: String,
    pub quantity: String,
    pub value: f64,
    pub std_error: f64,
    pub seed: u64,
    pub config_hash: String,
}

impl ResultRecord {
    pub const HEADER: &'static str = "experiment,quantity,value,std_error,seed,config_hash";

    pub fn from_estimate(experiment: &str, quantity: &str, e: &GradientEstimate, seed: u64, config_hash: &str) -> Self {
        Self {
            experiment: experiment.into(),
            quantity: quantity.into(),
            value: e.value,
            std_error: e.std_error,
            seed,
            config_hash: config_hash.into(),
        }
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.experiment,
            self.quantity,
            fmt_f64(self.value),
            fmt_f64(self.std_error),
            self.seed,
            self.config_hash
        )
    }
}

/// Appends records to a CSV ledger, writing the header when the file is new or empty.
pub fn append_records(path: &Path, records: &[ResultRecord]) -> Result<()> {
    let mut file = OpenOptions::new().create(true).append(true).open(path)?;
    if file.metadata()?.len() == 0 {
        writeln!(file, "{}", ResultRecord::HEADER)?;
    }
    for r in records {
        writeln!(file, "{}", r.csv_row())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ledger_gets_one_header() {
        let dir = std::env::temp_dir().join(format!("mvp-ledger-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("results.csv");
        let _ = std::fs::remove_file(&path);
        let r = ResultRecord::from_estimate("gradient", "bismut", &GradientEstimate::exact(0.5), 42, "abc");
        append_records(&path, std::slice::from_ref(&r)).unwrap();
        append_records(&path, &[r]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], ResultRecord::HEADER);
        assert_eq!(lines[1], "gradient,bismut,5.0000000000000000e-1,0.0000000000000000e0,42,abc");
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
