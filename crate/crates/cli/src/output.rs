use std::io::Write;
use std::path::Path;
use std::time::Duration;

use serde::Serialize;

use crate::error::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Everything needed to reproduce an output: the command, its full
/// configuration, the tool version, the results and the wall time.
#[derive(Debug, Serialize)]
pub struct RunRecord<C: Serialize, O: Serialize> {
    pub command: &'static str,
    pub config: C,
    pub version: &'static str,
    pub outputs: O,
    pub wall_time_s: f64,
}

impl<C: Serialize, O: Serialize> RunRecord<C, O> {
    pub fn new(command: &'static str, config: C, outputs: O, wall: Duration) -> Self {
        Self { command, config, version: VERSION, outputs, wall_time_s: wall.as_secs_f64() }
    }

    pub fn to_json(&self) -> Result<String, CliError> {
        serde_json::to_string_pretty(self).map_err(|e| CliError::Io(e.to_string()))
    }
}

/// CSV body preceded by `#` lines carrying the command, version and config.
pub fn write_csv<W: Write, C: Serialize>(
    mut out: W,
    command: &str,
    config: &C,
    header: &[&str],
    rows: &[Vec<String>],
) -> Result<(), CliError> {
    let config = serde_json::to_string(config).map_err(|e| CliError::Io(e.to_string()))?;
    writeln!(out, "# command: {command}")?;
    writeln!(out, "# version: {VERSION}")?;
    writeln!(out, "# config: {config}")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv_file<C: Serialize>(
    path: &Path,
    command: &str,
    config: &C,
    header: &[&str],
    rows: &[Vec<String>],
) -> Result<(), CliError> {
    let file = std::fs::File::create(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    write_csv(std::io::BufWriter::new(file), command, config, header, rows)
}

/// Shortest representation that parses back to the same `f64`.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config_line(csv_text: &str) -> Option<&str> {
        csv_text.lines().find_map(|l| l.strip_prefix("# config: "))
    }

    #[test]
    fn csv_carries_metadata() {
        let mut buf = Vec::new();
        write_csv(&mut buf, "sweep", &serde_json::json!({"steps": 2}), &["r", "v"], &[vec![num(0.0), num(0.1)]]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("# command: sweep\n"));
        assert_eq!(config_line(&text), Some(r#"{"steps":2}"#));
        assert!(text.ends_with("r,v\n0.0,0.1\n"));
    }

    #[test]
    fn numbers_round_trip() {
        for x in [0.1, 1.0 / 3.0, 2.0f64.sqrt(), 1e-300] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
    }
}
