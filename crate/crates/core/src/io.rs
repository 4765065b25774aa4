//! JSON system descriptions and CSV disturbance signals.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lti::{CostSpec, Plant, Signal};
use crate::scalar::{lit, to_f64, Real};

/// Plant and cost as written in a JSON file.
///
/// ```json
/// {"A": [[1.0]], "B": [[1.0]], "x0": [4.0], "Q": [[1.0]], "QT": [[1.0]], "R": [[1.0]], "X": 4.0}
/// ```
///
/// `QT` defaults to `Q` and `X` to `‖x0‖`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    pub x0: Vec<f64>,
    #[serde(rename = "Q")]
    pub q: Vec<Vec<f64>>,
    #[serde(rename = "QT", default, skip_serializing_if = "Option::is_none")]
    pub q_terminal: Option<Vec<Vec<f64>>>,
    #[serde(rename = "R")]
    pub r: Vec<Vec<f64>>,
    #[serde(rename = "X", default, skip_serializing_if = "Option::is_none")]
    pub x_bound: Option<f64>,
}

fn matrix<T: Real>(rows: &[Vec<f64>], name: &str) -> Result<DMatrix<T>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if nrows == 0 || ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Dimension(format!("{name} must be a non-empty rectangular matrix")));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| lit(rows[i][j])))
}

/// Row-major `f64` copy of a matrix, as used in the JSON formats.
pub fn matrix_rows<T: Real>(m: &DMatrix<T>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| to_f64(m[(i, j)])).collect())
        .collect()
}

impl SystemSpec {
    /// The scalar instance `A = B = Q = Q_T = R = 1`.
    pub fn scalar_unit(x0: f64) -> Self {
        Self {
            a: vec![vec![1.0]],
            b: vec![vec![1.0]],
            x0: vec![x0],
            q: vec![vec![1.0]],
            q_terminal: Some(vec![vec![1.0]]),
            r: vec![vec![1.0]],
            x_bound: Some(x0.abs()),
        }
    }

    pub fn build<T: Real>(&self) -> Result<(Plant<T>, CostSpec<T>)> {
        let x0 = DVector::from_iterator(self.x0.len(), self.x0.iter().map(|&v| lit(v)));
        let plant = Plant::new(matrix(&self.a, "A")?, matrix(&self.b, "B")?, x0)?;
        let q = matrix(&self.q, "Q")?;
        let q_terminal = match &self.q_terminal {
            Some(m) => matrix(m, "QT")?,
            None => q.clone(),
        };
        let x_bound = lit(self.x_bound.unwrap_or_else(|| self.x0.iter().map(|v| v * v).sum::<f64>().sqrt()));
        let cost = CostSpec::new(q, q_terminal, matrix(&self.r, "R")?, x_bound)?;
        cost.check_plant(&plant)?;
        Ok((plant, cost))
    }

    pub fn from_parts<T: Real>(plant: &Plant<T>, cost: &CostSpec<T>) -> Self {
        Self {
            a: matrix_rows(plant.a()),
            b: matrix_rows(plant.b()),
            x0: plant.x0().iter().map(|&v| to_f64(v)).collect(),
            q: matrix_rows(cost.q()),
            q_terminal: Some(matrix_rows(cost.q_terminal())),
            r: matrix_rows(cost.r()),
            x_bound: Some(to_f64(cost.x_bound())),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_reader(std::fs::File::open(path)?)?)
    }
}

/// Writes a signal as CSV with header `t,w_1,…,w_n`, using the shortest
/// representation that round-trips each `f64`.
pub fn write_signal_csv<T: Real, W: Write>(signal: &Signal<T>, writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    let mut header = vec!["t".to_string()];
    header.extend((1..=signal.dim()).map(|i| format!("w_{i}")));
    out.write_record(&header)?;
    for t in 0..signal.horizon() {
        let mut record = vec![t.to_string()];
        record.extend(signal.step(t).iter().map(|&v| to_f64(v).to_string()));
        out.write_record(&record)?;
    }
    out.flush()?;
    Ok(())
}

pub fn save_signal_csv<T: Real>(signal: &Signal<T>, path: &Path) -> Result<()> {
    write_signal_csv(signal, std::fs::File::create(path)?)
}

/// Reads a signal written by [`write_signal_csv`]. Rows must be numbered
/// `0, 1, …` in order.
pub fn read_signal_csv<T: Real, R: Read>(reader: R) -> Result<Signal<T>> {
    let mut input = csv::Reader::from_reader(reader);
    let header = input.headers()?.clone();
    if header.get(0) != Some("t") || header.len() < 2 {
        return Err(Error::InvalidInput("signal CSV needs a header t,w_1,...".into()));
    }
    let dim = header.len() - 1;
    let mut data = Vec::new();
    let mut horizon = 0;
    for (row, record) in input.records().enumerate() {
        let record = record?;
        let t: usize = record[0]
            .trim()
            .parse()
            .map_err(|_| Error::InvalidInput(format!("row {row}: bad time index {:?}", &record[0])))?;
        if t != row {
            return Err(Error::InvalidInput(format!("row {row} has time index {t}")));
        }
        for field in record.iter().skip(1) {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| Error::InvalidInput(format!("row {row}: bad value {field:?}")))?;
            data.push(lit::<T>(v));
        }
        horizon += 1;
    }
    if horizon == 0 {
        return Err(Error::InvalidInput("signal CSV has no rows".into()));
    }
    Signal::from_matrix(DMatrix::from_column_slice(dim, horizon, &data))
}

pub fn load_signal_csv<T: Real>(path: &Path) -> Result<Signal<T>> {
    read_signal_csv(std::fs::File::open(path)?)
}
