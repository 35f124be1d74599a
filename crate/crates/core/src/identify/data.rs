//! Measured discharge curves: CSV ingestion and validation.
//!
//! The CSV has a `t_s,V` header with an optional third `I_A` column. Lines
//! starting with `#` before the header are `key = value` metadata.

use std::io::Write;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::error::ParseError;
use crate::io::format_float;

/// Minimum number of samples in a trace.
pub const MIN_SAMPLES: usize = 10;
/// A sample counts as rising when it exceeds its predecessor by more than
/// this, V. Keeps measurement noise on a flat plateau from counting.
pub const RISE_THRESHOLD: f64 = 0.01;
/// Fraction of rising samples above which a trace is flagged as possibly
/// containing a charge segment.
pub const RISING_FRACTION_LIMIT: f64 = 0.05;

/// A constant-current discharge measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentalTrace {
    /// Strictly increasing, s.
    pub times: Vec<f64>,
    /// Measured voltage, V.
    pub voltages: Vec<f64>,
    /// Applied current as recorded, A.
    pub current: f64,
    /// Additive correction of the recorded current, A.
    pub current_bias: f64,
    pub meta: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TraceError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("{}{reason}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
    Validation { line: Option<usize>, reason: String },
}

impl TraceError {
    fn invalid(line: Option<usize>, reason: impl Into<String>) -> Self {
        TraceError::Validation { line, reason: reason.into() }
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid trace in {}", path.display())]
    Trace { path: PathBuf, source: TraceError },
}

impl ExperimentalTrace {
    /// Builds and validates a trace. `lines[k]` is the input line of sample
    /// `k`, used in error messages.
    fn checked(
        times: Vec<f64>,
        voltages: Vec<f64>,
        current: f64,
        current_bias: f64,
        lines: Option<&[usize]>,
    ) -> Result<Self, TraceError> {
        let line = |k: usize| lines.map(|l| l[k]);
        if times.len() < MIN_SAMPLES {
            return Err(TraceError::invalid(None, format!("{} samples, at least {MIN_SAMPLES} required", times.len())));
        }
        for (k, (&t, &v)) in times.iter().zip(&voltages).enumerate() {
            if !t.is_finite() {
                return Err(TraceError::invalid(line(k), format!("time {t} is not finite")));
            }
            if k > 0 && !(t > times[k - 1]) {
                return Err(TraceError::invalid(line(k), format!("time {t} s does not increase")));
            }
            if !(v > 0.0 && v < 5.0) {
                return Err(TraceError::invalid(line(k), format!("voltage {v} V outside (0, 5) V")));
            }
        }
        let trace = ExperimentalTrace { times, voltages, current, current_bias, meta: Vec::new() };
        if !(trace.effective_current() > 0.0 && trace.effective_current().is_finite()) {
            return Err(TraceError::invalid(
                None,
                format!("effective current {current} + {current_bias} A is not positive"),
            ));
        }
        Ok(trace)
    }

    /// Validates the invariants: at least [`MIN_SAMPLES`] samples, strictly
    /// increasing times, voltages in (0, 5) V and a positive corrected current.
    pub fn new(times: Vec<f64>, voltages: Vec<f64>, current: f64, current_bias: f64) -> Result<Self, TraceError> {
        if times.len() != voltages.len() {
            return Err(TraceError::invalid(None, "times and voltages differ in length"));
        }
        Self::checked(times, voltages, current, current_bias, None)
    }

    /// Recorded current plus bias, A.
    pub fn effective_current(&self) -> f64 {
        self.current + self.current_bias
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Last timestamp, s.
    pub fn duration(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }

    /// Fraction of samples that rise by more than [`RISE_THRESHOLD`].
    pub fn rising_fraction(&self) -> f64 {
        let rising = self.voltages.windows(2).filter(|w| w[1] - w[0] > RISE_THRESHOLD).count();
        rising as f64 / self.len() as f64
    }

    /// True when the trace may contain a charge segment.
    pub fn charge_warning(&self) -> bool {
        self.rising_fraction() > RISING_FRACTION_LIMIT
    }

    /// Writes the trace in the ingestion format, metadata and current included.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (k, v) in &self.meta {
            writeln!(out, "# {k} = {v}")?;
        }
        writeln!(out, "t_s,V,I_A")?;
        for (t, v) in self.times.iter().zip(&self.voltages) {
            writeln!(out, "{},{},{}", format_float(*t), format_float(*v), format_float(self.current))?;
        }
        Ok(())
    }
}

/// How to complete the CSV contents.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct IngestOptions {
    /// Overrides the `I_A` column, A.
    pub current: Option<f64>,
    /// Additive current correction, A.
    pub current_bias: f64,
}

/// Parses the experimental CSV format.
pub fn parse_experiment(text: &str, options: IngestOptions) -> Result<ExperimentalTrace, TraceError> {
    let mut meta = Vec::new();
    let mut header_line = 1;
    for line in text.lines() {
        let Some(comment) = line.trim_start().strip_prefix('#') else { break };
        if let Some((k, v)) = comment.split_once('=') {
            meta.push((k.trim().to_string(), v.trim().to_string()));
        }
        header_line += 1;
    }
    let body: String = text.lines().skip(header_line - 1).collect::<Vec<_>>().join("\n");
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(true).from_reader(body.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| ParseError::at_line(header_line, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let with_current = match header.iter().map(String::as_str).collect::<Vec<_>>().as_slice() {
        ["t_s", "V"] => false,
        ["t_s", "V", "I_A"] => true,
        _ => {
            return Err(ParseError::at_line(
                header_line,
                format!("expected header `t_s,V` or `t_s,V,I_A`, got `{}`", header.join(",")),
            )
            .into())
        }
    };
    let (mut times, mut voltages, mut currents, mut lines) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(header_line, |p| header_line - 1 + p.line() as usize);
            ParseError::at_line(line, e.to_string())
        })?;
        let line = header_line - 1 + record.position().map_or(0, |p| p.line() as usize);
        if record.len() != header.len() {
            return Err(ParseError::at_line(line, format!("expected {} fields, got {}", header.len(), record.len())).into());
        }
        let field = |k: usize| -> Result<f64, ParseError> {
            record[k]
                .parse::<f64>()
                .map_err(|_| ParseError::at_line(line, format!("`{}` is not a number", &record[k])))
        };
        times.push(field(0)?);
        voltages.push(field(1)?);
        if with_current {
            currents.push(field(2)?);
        }
        lines.push(line);
    }
    let current = match (options.current, currents.is_empty()) {
        (Some(i), _) => i,
        (None, false) if currents.iter().all(|&i| i == currents[0]) => currents[0],
        (None, false) => currents.iter().sum::<f64>() / currents.len() as f64,
        (None, true) => return Err(TraceError::invalid(None, "no current given: add an I_A column or set it explicitly")),
    };
    let mut trace = ExperimentalTrace::checked(times, voltages, current, options.current_bias, Some(&lines))?;
    trace.meta = meta;
    Ok(trace)
}

/// Reads and parses an experimental CSV file.
pub fn load_experiment(path: &Path, options: IngestOptions) -> Result<ExperimentalTrace, IngestError> {
    let text = std::fs::read_to_string(path).map_err(|source| IngestError::Io { path: path.to_path_buf(), source })?;
    parse_experiment(&text, options).map_err(|source| IngestError::Trace { path: path.to_path_buf(), source })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(n: usize) -> String {
        (0..n).map(|k| format!("{},{}\n", 10 * k, 2.3 - 0.01 * k as f64)).collect()
    }

    #[test]
    fn two_column_file_with_current_flag() {
        let text = format!("t_s,V\n{}", rows(12));
        let opts = IngestOptions { current: Some(0.03e-3), current_bias: 0.0 };
        let trace = parse_experiment(&text, opts).unwrap();
        assert_eq!(trace.len(), 12);
        assert_eq!(trace.effective_current(), 3e-5);
        assert!(!trace.charge_warning());
    }

    #[test]
    fn bias_is_added_to_the_current() {
        let text = format!("t_s,V\n{}", rows(12));
        let opts = IngestOptions { current: Some(3e-5), current_bias: -1e-6 };
        let trace = parse_experiment(&text, opts).unwrap();
        assert!((trace.effective_current() - 2.9e-5).abs() < 1e-20);
    }

    #[test]
    fn current_column_and_metadata() {
        let body: String = (0..10).map(|k| format!("{k},{},0.5\n", 2.0 - 0.01 * k as f64)).collect();
        let text = format!("# cell = A7\n# source = cycler\nt_s, V, I_A\n{body}");
        let trace = parse_experiment(&text, IngestOptions::default()).unwrap();
        assert_eq!(trace.current, 0.5);
        assert_eq!(trace.meta[0], ("cell".to_string(), "A7".to_string()));
        let flagged = parse_experiment(&text, IngestOptions { current: Some(0.25), current_bias: 0.0 }).unwrap();
        assert_eq!(flagged.current, 0.25);
    }

    #[test]
    fn non_monotone_time_names_its_line() {
        let mut text = format!("t_s,V\n{}", rows(12));
        text.push_str("50,2.0\n");
        let err = parse_experiment(&text, IngestOptions { current: Some(1.0), current_bias: 0.0 }).unwrap_err();
        assert_eq!(err, TraceError::Validation { line: Some(14), reason: "time 50 s does not increase".into() });
    }

    #[test]
    fn malformed_number_names_its_line() {
        let text = format!("# note = x\nt_s,V\n{}7,abc\n", rows(3));
        let err = parse_experiment(&text, IngestOptions { current: Some(1.0), current_bias: 0.0 }).unwrap_err();
        match err {
            TraceError::Parse(p) => assert_eq!(p.line, Some(6)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_header_missing_current_and_short_traces() {
        let opts = IngestOptions { current: Some(1.0), current_bias: 0.0 };
        assert!(matches!(parse_experiment("time,volt\n1,2\n", opts), Err(TraceError::Parse(_))));
        assert!(parse_experiment(&format!("t_s,V\n{}", rows(12)), IngestOptions::default()).is_err());
        assert!(parse_experiment(&format!("t_s,V\n{}", rows(5)), opts).is_err());
        assert!(parse_experiment("t_s,V\n0,2\n1,7\n", opts).is_err());
    }

    #[test]
    fn rising_segments_raise_a_warning_only() {
        let body: String = (0..20).map(|k| format!("{k},{}\n", if k % 2 == 0 { 2.0 } else { 2.05 })).collect();
        let trace = parse_experiment(&format!("t_s,V\n{body}"), IngestOptions { current: Some(1.0), current_bias: 0.0 }).unwrap();
        assert!(trace.charge_warning());
    }

    #[test]
    fn csv_round_trip() {
        let trace = ExperimentalTrace::new((0..10).map(|k| k as f64 * 0.1).collect(), vec![2.1; 10], 1e-3, 0.0).unwrap();
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        let back = parse_experiment(std::str::from_utf8(&buf).unwrap(), IngestOptions::default()).unwrap();
        assert_eq!(back, trace);
    }
}
