use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Magic prefix of the binary dataset format.
pub const BINARY_MAGIC: &[u8; 5] = b"HDLR1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DesignTag {
    Gaussian,
    Snp,
    External,
}

/// Covariates and binary responses. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: Array2<f64>,
    y: Array1<f64>,
    pub design_tag: DesignTag,
}

impl Dataset {
    /// Validates that `y` is 0/1, `x` is finite and the shapes agree.
    pub fn new(x: Array2<f64>, y: Array1<f64>, design_tag: DesignTag) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.nrows(),
                got: y.len(),
            });
        }
        if let Some(i) = y.iter().position(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::InvalidArgument(format!(
                "response {i} is {} (must be 0 or 1)",
                y[i]
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("covariates must be finite".into()));
        }
        let x = if x.is_standard_layout() {
            x
        } else {
            x.as_standard_layout().into_owned()
        };
        Ok(Self { x, y, design_tag })
    }

    pub fn from_bool(x: Array2<f64>, y: &[bool], design_tag: DesignTag) -> Result<Self> {
        let y = y.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        Self::new(x, y, design_tag)
    }

    pub fn x(&self) -> &Array2<f64> {
        &self.x
    }

    pub fn y(&self) -> &Array1<f64> {
        &self.y
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Keeps the listed rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        let p = self.p();
        let mut x = Array2::zeros((rows.len(), p));
        for (k, &i) in rows.iter().enumerate() {
            x.row_mut(k).assign(&self.x.row(i));
        }
        let y = rows.iter().map(|&i| self.y[i]).collect();
        Dataset {
            x,
            y,
            design_tag: self.design_tag,
        }
    }

    /// Drops the listed columns.
    pub fn drop_columns(&self, drop: &[usize]) -> Dataset {
        let keep: Vec<usize> = (0..self.p()).filter(|j| !drop.contains(j)).collect();
        let x = self.x.select(ndarray::Axis(1), &keep);
        Dataset {
            x,
            y: self.y.clone(),
            design_tag: self.design_tag,
        }
    }

    /// Reads a CSV with a header row whose last column is the response.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let file = File::open(path)?;
        Self::from_csv_reader(file)
    }

    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let width = rdr
            .headers()
            .map_err(|e| Error::Parse(format!("header: {e}")))?
            .len();
        if width < 2 {
            return Err(Error::Parse(
                "need at least one covariate column and a response column".into(),
            ));
        }
        let p = width - 1;
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (k, rec) in rdr.records().enumerate() {
            let line = k + 2;
            let rec = rec.map_err(|e| Error::Parse(format!("line {line}: {e}")))?;
            if rec.len() != width {
                return Err(Error::Parse(format!(
                    "line {line}: expected {width} fields, found {}",
                    rec.len()
                )));
            }
            for (j, field) in rec.iter().enumerate() {
                let v: f64 = field.parse().map_err(|_| {
                    Error::Parse(format!("line {line}, column {}: cannot parse {field:?}", j + 1))
                })?;
                if j < p {
                    xs.push(v);
                } else {
                    if v != 0.0 && v != 1.0 {
                        return Err(Error::Parse(format!(
                            "line {line}: response must be 0 or 1, found {field:?}"
                        )));
                    }
                    ys.push(v);
                }
            }
        }
        if ys.is_empty() {
            return Err(Error::Parse("no data rows".into()));
        }
        let x = Array2::from_shape_vec((ys.len(), p), xs).map_err(|e| Error::Parse(e.to_string()))?;
        Self::new(x, Array1::from(ys), DesignTag::External).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io(e.to_string()))?;
        let mut header: Vec<String> = (1..=self.p()).map(|j| format!("x{j}")).collect();
        header.push("y".into());
        w.write_record(&header).map_err(|e| Error::Io(e.to_string()))?;
        for (row, &y) in self.x.outer_iter().zip(self.y.iter()) {
            let mut rec: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            rec.push(format!("{}", y as u8));
            w.write_record(&rec).map_err(|e| Error::Io(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Binary layout: `HDLR1`, `n` and `p` as little-endian u64, `n * p`
    /// little-endian f64 in row-major order, then `n` response bytes.
    pub fn write_binary(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(BINARY_MAGIC)?;
        w.write_all(&(self.n() as u64).to_le_bytes())?;
        w.write_all(&(self.p() as u64).to_le_bytes())?;
        for v in self.x.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
        let ys: Vec<u8> = self.y.iter().map(|&v| v as u8).collect();
        w.write_all(&ys)?;
        w.flush()?;
        Ok(())
    }

    pub fn read_binary(path: impl AsRef<Path>) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 5];
        r.read_exact(&mut magic)?;
        if &magic != BINARY_MAGIC {
            return Err(Error::Parse("bad magic; not an HDLR1 file".into()));
        }
        let mut word = [0u8; 8];
        r.read_exact(&mut word)?;
        let n = u64::from_le_bytes(word) as usize;
        r.read_exact(&mut word)?;
        let p = u64::from_le_bytes(word) as usize;
        let mut buf = vec![0u8; n * p * 8];
        r.read_exact(&mut buf)
            .map_err(|_| Error::Parse("truncated covariate block".into()))?;
        let xs: Vec<f64> = buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        let mut ys = vec![0u8; n];
        r.read_exact(&mut ys)
            .map_err(|_| Error::Parse("truncated response block".into()))?;
        let x = Array2::from_shape_vec((n, p), xs).map_err(|e| Error::Parse(e.to_string()))?;
        let y = ys.iter().map(|&b| b as f64).collect();
        Self::new(x, y, DesignTag::External).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Dispatches on the file extension: `.csv` or anything else as binary.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => Self::read_csv(path),
            _ => Self::read_binary(path),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => self.write_csv(path),
            _ => self.write_binary(path),
        }
    }
}
