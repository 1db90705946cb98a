//! Merges run-cl report CSVs into one tidy table.
//!
//! Output columns: `run` (input position), `source` (input path), the slot
//! columns of the input, and `monotone`, which is `true` when an updated slot
//! scores at least as well after the update as before on both SSIM and PSNR,
//! `false` when it does not, and empty for slots without an update.

use std::io::Write;
use std::path::{Path, PathBuf};

use csi_imager::clloop::REPORT_HEADER;

use crate::args::ReportArgs;
use crate::{CliError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub slot: usize,
    pub ssim_before: Option<f64>,
    pub psnr_before: Option<f64>,
    pub updated: bool,
    pub epochs: usize,
    pub ssim_after: Option<f64>,
    pub psnr_after: Option<f64>,
    pub wall_s: f64,
    raw: Vec<String>,
}

impl ReportRow {
    pub fn monotone(&self) -> Option<bool> {
        if !self.updated {
            return None;
        }
        let ge = |a: Option<f64>, b: Option<f64>| matches!((a, b), (Some(a), Some(b)) if a >= b);
        Some(ge(self.ssim_after, self.ssim_before) && ge(self.psnr_after, self.psnr_before))
    }
}

fn parse_err(path: &Path, line: u64, message: impl Into<String>) -> CliError {
    CliError::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Parses one run-cl report. Errors carry the 1-based line number.
pub fn parse_report(path: &Path, text: &str) -> Result<Vec<ReportRow>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| parse_err(path, 1, e.to_string()))?
        .clone();
    let expected: Vec<&str> = REPORT_HEADER.split(',').collect();
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(parse_err(path, 1, format!("expected header `{REPORT_HEADER}`")));
    }

    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(path, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |i: usize| record.get(i).unwrap_or("");
        let opt = |i: usize| -> Result<Option<f64>> {
            match field(i) {
                "" => Ok(None),
                s => s
                    .parse::<f64>()
                    .map(Some)
                    .map_err(|_| parse_err(path, line, format!("column {}: `{s}` is not a number", expected[i]))),
            }
        };
        let int = |i: usize| -> Result<usize> {
            field(i)
                .parse()
                .map_err(|_| parse_err(path, line, format!("column {}: `{}` is not an integer", expected[i], field(i))))
        };
        let updated = match field(3) {
            "true" => true,
            "false" => false,
            s => return Err(parse_err(path, line, format!("column updated: `{s}` is not true/false"))),
        };
        rows.push(ReportRow {
            slot: int(0)?,
            ssim_before: opt(1)?,
            psnr_before: opt(2)?,
            updated,
            epochs: int(4)?,
            ssim_after: opt(5)?,
            psnr_after: opt(6)?,
            wall_s: opt(7)?.ok_or_else(|| parse_err(path, line, "column wall_s is empty"))?,
            raw: record.iter().map(str::to_string).collect(),
        });
    }
    Ok(rows)
}

pub fn write_tidy<W: Write>(runs: &[(PathBuf, Vec<ReportRow>)], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let to_err = |e: csv::Error| CliError::io("<output>", std::io::Error::other(e.to_string()));
    let mut header = vec!["run", "source"];
    header.extend(REPORT_HEADER.split(','));
    header.push("monotone");
    w.write_record(&header).map_err(to_err)?;
    for (run, (source, rows)) in runs.iter().enumerate() {
        for row in rows {
            let mut rec = vec![run.to_string(), source.display().to_string()];
            rec.extend(row.raw.iter().cloned());
            rec.push(row.monotone().map(|m| m.to_string()).unwrap_or_default());
            w.write_record(&rec).map_err(to_err)?;
        }
    }
    w.flush().map_err(|e| CliError::io("<output>", e))?;
    Ok(())
}

pub fn report(args: &ReportArgs, out: &mut dyn Write) -> Result<()> {
    let mut runs = Vec::with_capacity(args.inputs.len());
    for path in &args.inputs {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        runs.push((path.clone(), parse_report(path, &text)?));
    }
    match &args.out {
        Some(path) => {
            let file = std::fs::File::create(path).map_err(|e| CliError::io(path, e))?;
            write_tidy(&runs, std::io::BufWriter::new(file))
        }
        None => write_tidy(&runs, out),
    }
}
