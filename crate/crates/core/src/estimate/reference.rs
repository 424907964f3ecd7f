use std::path::Path;

use crate::error::{Error, Result};

/// Sampled states `x*(t_i)`; the first sample is the initial condition.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

impl ReferenceTrajectory {
    pub fn new(times: Vec<f64>, states: Vec<Vec<f64>>) -> Result<Self> {
        if times.is_empty() || times.len() != states.len() {
            return Err(Error::Dimension {
                what: "reference samples",
                expected: times.len(),
                got: states.len(),
            });
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Request("reference times must be strictly increasing".into()));
        }
        let dim = states[0].len();
        if let Some(s) = states.iter().find(|s| s.len() != dim) {
            return Err(Error::Dimension {
                what: "reference state",
                expected: dim,
                got: s.len(),
            });
        }
        Ok(Self { times, states })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.states[0].len()
    }

    /// `t,x0,x1,...` with round-trip precision.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["t".to_string()];
        header.extend((0..self.state_dim()).map(|i| format!("x{i}")));
        w.write_record(&header).expect("in-memory write");
        for (t, x) in self.times.iter().zip(&self.states) {
            let row: Vec<String> = std::iter::once(t).chain(x).map(|v| format!("{v:.16e}")).collect();
            w.write_record(&row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii")
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let header = r.headers().map_err(csv_error)?.clone();
        if header.get(0) != Some("t") || header.iter().skip(1).enumerate().any(|(i, h)| h != format!("x{i}")) {
            return Err(Error::Syntax {
                line: 1,
                column: 1,
                message: "expected header t,x0,x1,...".into(),
            });
        }
        let mut times = Vec::new();
        let mut states = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(csv_error)?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            let mut vals = Vec::with_capacity(rec.len());
            for (col, field) in rec.iter().enumerate() {
                vals.push(field.trim().parse::<f64>().map_err(|e| Error::Syntax {
                    line,
                    column: col + 1,
                    message: e.to_string(),
                })?);
            }
            times.push(vals[0]);
            states.push(vals[1..].to_vec());
        }
        Self::new(times, states)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_csv(&text)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
    }
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    Error::Syntax {
        line,
        column: 0,
        message: e.to_string(),
    }
}
