//! Dataset files: CSV with a `x1..xp[,y]` header, and the JSON dataset object
//! of the wire protocol.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use statbench_core::linalg::Matrix;
use statbench_core::Dataset;

use crate::protocol::WireDataset;

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("bad header: {0}")]
    Header(String),
    #[error("row {row}: {msg}")]
    Row { row: usize, msg: String },
    #[error(transparent)]
    Data(#[from] statbench_core::Error),
}

pub fn csv_header(p: usize, labeled: bool) -> Vec<String> {
    let mut h: Vec<String> = (1..=p).map(|j| format!("x{j}")).collect();
    if labeled {
        h.push("y".into());
    }
    h
}

pub fn write_dataset_csv<W: Write>(data: &Dataset, out: W) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(csv_header(data.p(), data.labels().is_some()))?;
    for i in 0..data.n() {
        let mut rec: Vec<String> = data.row(i).iter().map(|v| v.to_string()).collect();
        if let Some(y) = data.labels() {
            rec.push(y[i].to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset_csv<R: Read>(input: R) -> Result<Dataset, IoError> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(|s| s.trim().to_string()).collect();
    let labeled = header.last().map(|s| s == "y").unwrap_or(false);
    let p = header.len() - usize::from(labeled);
    if p == 0 || header[..p] != csv_header(p, false)[..] {
        return Err(IoError::Header(header.join(",")));
    }
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut n = 0;
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        if rec.len() != header.len() {
            return Err(IoError::Row { row: row + 1, msg: format!("{} fields, expected {}", rec.len(), header.len()) });
        }
        for (k, field) in rec.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| IoError::Row { row: row + 1, msg: format!("`{field}` is not a number") })?;
            if k < p {
                x.push(v);
            } else {
                y.push(v);
            }
        }
        n += 1;
    }
    Ok(Dataset::new(Matrix::from_vec(n, p, x)?, labeled.then_some(y))?)
}

pub fn save_dataset_csv(data: &Dataset, path: &Path) -> Result<(), IoError> {
    write_dataset_csv(data, File::create(path)?)
}

pub fn load_dataset_csv(path: &Path) -> Result<Dataset, IoError> {
    read_dataset_csv(File::open(path)?)
}

pub fn dataset_to_json(data: &Dataset) -> String {
    serde_json::to_string(&WireDataset::from_dataset(data, true)).expect("finite numbers serialize")
}

pub fn dataset_from_json(text: &str) -> Result<Dataset, IoError> {
    let w: WireDataset = serde_json::from_str(text)?;
    Ok(w.to_dataset()?)
}
