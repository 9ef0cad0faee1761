//! Child-process black-box adapter.
//!
//! Contract: the batch is written to the process's stdin as CSV with a
//! header row; the process prints one line per instance holding `l`
//! comma-separated probabilities.

use std::io::{Read, Write};
use std::process::{Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use super::{check_width, BlackBox};
use crate::data::Matrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct ExternalBlackBox {
    program: String,
    args: Vec<String>,
    columns: Vec<String>,
    n_classes: usize,
    timeout: Duration,
}

impl ExternalBlackBox {
    pub fn new(
        program: impl Into<String>,
        args: Vec<String>,
        columns: Vec<String>,
        n_classes: usize,
    ) -> Self {
        Self {
            program: program.into(),
            args,
            columns,
            n_classes,
            timeout: Duration::from_secs(60),
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    fn encode(&self, batch: &Matrix) -> String {
        let mut s = self.columns.join(",");
        s.push('\n');
        for row in batch.row_iter() {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }

    fn decode(&self, out: &str, expected_rows: usize) -> Result<Matrix> {
        let lines: Vec<&str> = out.lines().filter(|l| !l.trim().is_empty()).collect();
        if lines.len() != expected_rows {
            return Err(Error::BlackBox(format!(
                "expected {expected_rows} probability rows, got {}",
                lines.len()
            )));
        }
        let mut p = Matrix::zeros(expected_rows, self.n_classes);
        for (i, line) in lines.iter().enumerate() {
            let vals: Vec<f64> = line
                .split(',')
                .map(|c| c.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::BlackBox(format!("line {}: {e}", i + 1)))?;
            if vals.len() != self.n_classes {
                return Err(Error::BlackBox(format!(
                    "line {}: expected {} probabilities, got {}",
                    i + 1,
                    self.n_classes,
                    vals.len()
                )));
            }
            let sum: f64 = vals.iter().sum();
            if vals.iter().any(|v| !v.is_finite() || *v < 0.0) || (sum - 1.0).abs() > 1e-6 {
                return Err(Error::BlackBox(format!(
                    "line {}: not a probability vector",
                    i + 1
                )));
            }
            for (c, v) in vals.into_iter().enumerate() {
                p[(i, c)] = v;
            }
        }
        Ok(p)
    }
}

impl BlackBox for ExternalBlackBox {
    fn n_features(&self) -> usize {
        self.columns.len()
    }

    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn predict_proba(&self, batch: &Matrix) -> Result<Matrix> {
        check_width(self.columns.len(), batch)?;
        if batch.nrows() == 0 {
            return Ok(Matrix::zeros(0, self.n_classes));
        }
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| Error::BlackBox(format!("cannot start '{}': {e}", self.program)))?;

        let payload = self.encode(batch);
        let mut stdin = child.stdin.take().expect("stdin piped");
        let writer = thread::spawn(move || {
            // A process that exits early closes the pipe; that surfaces below
            // as a short read rather than here.
            let _ = stdin.write_all(payload.as_bytes());
        });
        let mut stdout = child.stdout.take().expect("stdout piped");
        let reader = thread::spawn(move || {
            let mut s = String::new();
            stdout.read_to_string(&mut s).map(|_| s)
        });

        let start = Instant::now();
        let status = loop {
            match child.try_wait() {
                Ok(Some(status)) => break status,
                Ok(None) if start.elapsed() > self.timeout => {
                    let _ = child.kill();
                    let _ = child.wait();
                    return Err(Error::BlackBox(format!(
                        "timed out after {:?}",
                        self.timeout
                    )));
                }
                Ok(None) => thread::sleep(Duration::from_millis(5)),
                Err(e) => return Err(Error::BlackBox(e.to_string())),
            }
        };
        let _ = writer.join();
        let out = reader
            .join()
            .map_err(|_| Error::BlackBox("reader thread panicked".into()))?
            .map_err(|e| Error::BlackBox(e.to_string()))?;
        if !status.success() {
            return Err(Error::BlackBox(format!("process exited with {status}")));
        }
        self.decode(&out, batch.nrows())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sh(script: &str) -> ExternalBlackBox {
        ExternalBlackBox::new(
            "sh",
            vec!["-c".into(), script.into()],
            vec!["a".into(), "b".into()],
            2,
        )
    }

    #[test]
    fn reads_one_row_per_instance() {
        // probability of class 1 = 1 if a > 0
        let bb = sh(r#"awk -F, 'NR>1 { if ($1 > 0) print "0,1"; else print "1,0" }'"#);
        let batch = Matrix::from_row_slice(3, 2, &[1.0, 0.0, -1.0, 0.0, 2.0, 5.0]);
        let p = bb.predict_proba(&batch).unwrap();
        assert_eq!(
            p.column(1).iter().copied().collect::<Vec<_>>(),
            vec![1.0, 0.0, 1.0]
        );
        assert_eq!(bb.predict(&batch).unwrap(), vec![1, 0, 1]);
    }

    #[test]
    fn malformed_output_is_reported() {
        let bb = sh(r#"awk 'NR>1 { print "0.5" }'"#);
        assert!(matches!(
            bb.predict_proba(&Matrix::zeros(2, 2)),
            Err(Error::BlackBox(_))
        ));
        let bb = sh(r#"awk 'NR>1 { print "0.7,0.7" }'"#);
        assert!(bb.predict_proba(&Matrix::zeros(2, 2)).is_err());
        let bb = sh("cat > /dev/null; exit 3");
        assert!(bb.predict_proba(&Matrix::zeros(1, 2)).is_err());
    }

    #[test]
    fn timeout_kills_the_process() {
        let bb = sh("sleep 5").with_timeout(Duration::from_millis(100));
        let start = Instant::now();
        assert!(bb.predict_proba(&Matrix::zeros(1, 2)).is_err());
        assert!(start.elapsed() < Duration::from_secs(4));
    }

    #[test]
    fn empty_batch_skips_the_process() {
        let bb = ExternalBlackBox::new("/nonexistent", vec![], vec!["a".into()], 3);
        assert_eq!(
            bb.predict_proba(&Matrix::zeros(0, 1)).unwrap().shape(),
            (0, 3)
        );
    }
}
