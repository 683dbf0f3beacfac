//! Dataset file format: one CSV row per example holding the observation
//! followed by the nine row-major entries of the generating rotation, plus a
//! JSON sidecar describing how the file was produced.

use ndarray::Array1;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::so3::Rotation;
use crate::wigner::RepSpec;
use crate::{Error, Result};

/// Sidecar metadata written next to the CSV as `<file>.json`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub n: usize,
    pub total_dim: usize,
    pub blocks: Vec<(usize, usize)>,
    pub content_seed: u64,
    pub seed: u64,
}

pub struct Dataset {
    pub xs: Vec<Array1<f64>>,
    pub rots: Vec<Rotation>,
    pub meta: DatasetMeta,
}

impl Dataset {
    pub fn new(pairs: Vec<(Array1<f64>, Rotation)>, meta: DatasetMeta) -> Result<Self> {
        if pairs.len() != meta.n {
            return Err(Error::ShapeMismatch(format!(
                "{} rows but metadata says {}",
                pairs.len(),
                meta.n
            )));
        }
        let (xs, rots) = pairs.into_iter().unzip();
        let ds = Dataset { xs, rots, meta };
        ds.check_dims()?;
        Ok(ds)
    }

    fn check_dims(&self) -> Result<()> {
        for x in &self.xs {
            if x.len() != self.meta.total_dim {
                return Err(Error::ShapeMismatch(format!(
                    "row of width {} in a dataset of dimension {}",
                    x.len(),
                    self.meta.total_dim
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn rep_spec(&self) -> Result<RepSpec> {
        RepSpec::new(self.meta.blocks.clone())
    }

    fn sidecar_path(path: &Path) -> std::path::PathBuf {
        let mut p = path.as_os_str().to_owned();
        p.push(".json");
        std::path::PathBuf::from(p)
    }

    /// Writes the CSV (17 significant digits per value) and the sidecar.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = BufWriter::new(file);
        for (x, r) in self.xs.iter().zip(&self.rots) {
            let mut fields: Vec<String> = x.iter().map(|v| format!("{v:.16e}")).collect();
            fields.extend(r.to_flat().iter().map(|v| format!("{v:.16e}")));
            writeln!(w, "{}", fields.join(","))?;
        }
        w.flush()?;
        let sidecar = serde_json::to_string_pretty(&self.meta)?;
        std::fs::write(Self::sidecar_path(path), sidecar)?;
        Ok(())
    }

    /// Loads and validates a dataset written by [`Dataset::save`]; every
    /// trailing 3x3 block must be a rotation matrix.
    pub fn load(path: &Path) -> Result<Self> {
        let meta: DatasetMeta =
            serde_json::from_str(&std::fs::read_to_string(Self::sidecar_path(path))?)?;
        let file = std::fs::File::open(path)?;
        let reader = BufReader::new(file);
        let mut xs = Vec::new();
        let mut rots = Vec::new();
        let width = meta.total_dim + 9;
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let vals: Vec<f64> = line
                .split(',')
                .map(|f| {
                    f.trim().parse::<f64>().map_err(|e| {
                        Error::ShapeMismatch(format!("line {}: bad float: {e}", lineno + 1))
                    })
                })
                .collect::<Result<_>>()?;
            if vals.len() != width {
                return Err(Error::ShapeMismatch(format!(
                    "line {}: {} fields, expected {width}",
                    lineno + 1,
                    vals.len()
                )));
            }
            let mut flat = [0.0; 9];
            flat.copy_from_slice(&vals[meta.total_dim..]);
            rots.push(Rotation::from_flat(&flat)?);
            xs.push(Array1::from(vals[..meta.total_dim].to_vec()));
        }
        if xs.len() != meta.n {
            return Err(Error::ShapeMismatch(format!(
                "{} rows but sidecar says {}",
                xs.len(),
                meta.n
            )));
        }
        let ds = Dataset {
            xs,
            rots,
            meta,
        };
        ds.check_dims()?;
        Ok(ds)
    }
}
