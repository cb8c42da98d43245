//! Round-by-round count files: `round,n,<category...>`, one row per round
//! in counting order.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use seqmult::vst::BatchSeries;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundsFile {
    pub names: Vec<String>,
    pub series: BatchSeries,
}

impl RoundsFile {
    pub fn new(names: Vec<String>, series: BatchSeries) -> CliResult<Self> {
        if names.len() != series.categories() {
            return Err(CliError::Usage(format!(
                "{} names for {} categories",
                names.len(),
                series.categories()
            )));
        }
        Ok(Self { names, series })
    }

    /// Categories named `c1..cC`.
    pub fn with_default_names(series: BatchSeries) -> Self {
        let names = (1..=series.categories()).map(|c| format!("c{c}")).collect();
        Self { names, series }
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(file, &path.display().to_string())
    }

    /// Parses CSV. Row numbers in errors count data rows from 1.
    pub fn parse<R: Read>(reader: R, label: &str) -> CliResult<Self> {
        let err = |row: usize, message: String| CliError::Rounds {
            path: label.to_string(),
            row,
            message,
        };
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header = rdr.headers().map_err(|e| err(0, e.to_string()))?.clone();
        if header.len() < 4 || &header[0] != "round" || &header[1] != "n" {
            return Err(err(
                0,
                "header must be `round,n,<category>,<category>[,...]`".into(),
            ));
        }
        let names: Vec<String> = header.iter().skip(2).map(str::to_string).collect();
        let mut seen = HashSet::new();
        if let Some(dup) = names.iter().find(|n| !seen.insert(n.as_str())) {
            return Err(err(0, format!("duplicate category {dup:?}")));
        }
        let mut series = BatchSeries::new(names.len())?;
        for (i, record) in rdr.records().enumerate() {
            let row = i + 1;
            let record = record.map_err(|e| err(row, e.to_string()))?;
            let fields: Vec<u64> = record
                .iter()
                .enumerate()
                .map(|(k, f)| {
                    f.parse::<u64>().map_err(|_| {
                        err(row, format!("column {:?}: {f:?} is not a count", &header[k]))
                    })
                })
                .collect::<CliResult<_>>()?;
            if fields[0] != row as u64 {
                return Err(err(row, format!("round {} out of sequence, expected {row}", fields[0])));
            }
            let (n, counts) = (fields[1], fields[2..].to_vec());
            let sum: u64 = counts.iter().sum();
            if sum != n {
                return Err(err(row, format!("counts sum to {sum}, n is {n}")));
            }
            series.push_checked(n, counts).map_err(|e| err(row, e.to_string()))?;
        }
        if series.is_empty() {
            return Err(err(0, "no rounds".into()));
        }
        Ok(Self { names, series })
    }

    pub fn write<W: Write>(&self, writer: W) -> CliResult<()> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| CliError::Usage(e.to_string());
        let mut header = vec!["round".to_string(), "n".to_string()];
        header.extend(self.names.iter().cloned());
        w.write_record(&header).map_err(io)?;
        for (j, b) in self.series.rounds().iter().enumerate() {
            let mut rec = vec![(j + 1).to_string(), b.n.to_string()];
            rec.extend(b.counts.iter().map(u64::to_string));
            w.write_record(&rec).map_err(io)?;
        }
        w.flush().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        let file = std::fs::File::create(path).map_err(|e| CliError::io(path, e))?;
        self.write(file)
    }
}
