//! The deployable model: trained hypernetwork, fixed mask pool, feature
//! standardization, cached generated weights, and a versioned binary file
//! format.
//!
//! Inference standardizes the input, runs every cached target network on its
//! masked view, and averages logits in canonical pool order (masks sorted by
//! index list), so predictions are exactly invariant to pool permutation.
//!
//! # File format (version 1, little-endian)
//!
//! ```text
//! magic            4 bytes  "HTAB"
//! version          u32
//! hyper layers     u32 count, then that many u32 sizes
//! target layers    u32 count, then that many u32 sizes
//! psi              u64 count, then that many f64
//! pool             u32 a, u32 d, u32 l, then a*l u32 indices (each mask sorted)
//! mean             d f64
//! std              d f64
//! ```

use crate::augment::{AugmentationMask, MaskPool};
use crate::mlp::{self, MlpSpec};
use crate::{Error, FlatParams, HyperNetwork, Matrix, Result};
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: [u8; 4] = *b"HTAB";
pub const FORMAT_VERSION: u32 = 1;

/// A trained, immutable HyperTab model.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperTabModel {
    hypernetwork: HyperNetwork,
    pool: MaskPool,
    mean: Vec<f64>,
    std: Vec<f64>,
    /// Generated weights per mask, aligned with the canonical pool order.
    thetas: Vec<FlatParams>,
}

impl HyperTabModel {
    /// Assembles a model from a trained hypernetwork. The pool is sorted
    /// canonically and all target weights are generated once and cached.
    pub fn new(
        hypernetwork: HyperNetwork,
        pool: MaskPool,
        mean: Vec<f64>,
        std: Vec<f64>,
    ) -> Result<Self> {
        let d = hypernetwork.input_size();
        if pool.d() != d {
            return Err(Error::ModelInconsistent(format!(
                "pool dimension {} != hypernetwork input size {d}",
                pool.d()
            )));
        }
        if pool.mask_size() != hypernetwork.target_spec().input_size() {
            return Err(Error::ModelInconsistent(
                "pool mask size != target network input size".into(),
            ));
        }
        if mean.len() != d || std.len() != d {
            return Err(Error::ModelInconsistent(
                "standardization vectors must have one entry per feature".into(),
            ));
        }
        if std.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::ModelInconsistent(
                "standardization std entries must be > 0".into(),
            ));
        }
        let pool = pool.canonical();
        let thetas = pool
            .masks()
            .iter()
            .map(|m| hypernetwork.generate(m).map(|g| g.theta))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            hypernetwork,
            pool,
            mean,
            std,
            thetas,
        })
    }

    pub fn d(&self) -> usize {
        self.hypernetwork.input_size()
    }

    pub fn n_classes(&self) -> usize {
        self.hypernetwork.n_classes()
    }

    pub fn pool(&self) -> &MaskPool {
        &self.pool
    }

    pub fn hypernetwork(&self) -> &HyperNetwork {
        &self.hypernetwork
    }

    /// Per-feature means fitted on the training data.
    pub fn feature_mean(&self) -> &[f64] {
        &self.mean
    }

    /// Per-feature standard deviations fitted on the training data.
    pub fn feature_std(&self) -> &[f64] {
        &self.std
    }

    fn standardize(&self, x: &Matrix) -> Matrix {
        let mut out = x.clone();
        for i in 0..out.rows() {
            let row = out.row_mut(i);
            for j in 0..row.len() {
                row[j] = (row[j] - self.mean[j]) / self.std[j];
            }
        }
        out
    }

    /// Mean logits over all targets for a batch, rows aligned with `x`.
    pub fn predict_logits_batch(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.d() {
            return Err(Error::Data(format!(
                "predict: input has {} features, model expects {}",
                x.cols(),
                self.d()
            )));
        }
        let xs = self.standardize(x);
        let k = self.n_classes();
        let mut sum = Matrix::zeros(x.rows(), k);
        for (mask, theta) in self.pool.masks().iter().zip(&self.thetas) {
            let masked = mask.apply_matrix(&xs)?;
            let (logits, _) = mlp::forward(self.hypernetwork.target_spec(), theta, &masked);
            sum = sum.add(&logits);
        }
        Ok(sum.scale(1.0 / self.pool.len() as f64))
    }

    /// Mean logits for one sample.
    pub fn predict_logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        let batch = Matrix::from_vec(1, x.len(), x.to_vec());
        Ok(self.predict_logits_batch(&batch)?.row(0).to_vec())
    }

    /// Argmax of the mean logits; ties break toward the lowest class index.
    pub fn predict_class(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.predict_logits(x)?))
    }

    pub fn predict_classes_batch(&self, x: &Matrix) -> Result<Vec<usize>> {
        let logits = self.predict_logits_batch(x)?;
        Ok((0..logits.rows()).map(|i| argmax(logits.row(i))).collect())
    }

    /// Per-target logits for a batch, in canonical pool order. Used for
    /// inspecting the contribution of individual masks.
    pub fn per_target_logits(&self, x: &Matrix) -> Result<Vec<Matrix>> {
        let xs = self.standardize(x);
        self.pool
            .masks()
            .iter()
            .zip(&self.thetas)
            .map(|(mask, theta)| {
                let masked = mask.apply_matrix(&xs)?;
                Ok(mlp::forward(self.hypernetwork.target_spec(), theta, &masked).0)
            })
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        w.write_all(&MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        write_sizes(&mut w, self.hypernetwork.hyper_spec().layer_sizes())?;
        write_sizes(&mut w, self.hypernetwork.target_spec().layer_sizes())?;
        let psi = self.hypernetwork.psi().data();
        w.write_all(&(psi.len() as u64).to_le_bytes())?;
        for &v in psi {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&(self.pool.len() as u32).to_le_bytes())?;
        w.write_all(&(self.pool.d() as u32).to_le_bytes())?;
        w.write_all(&(self.pool.mask_size() as u32).to_le_bytes())?;
        for mask in self.pool.masks() {
            for &idx in mask.indices() {
                w.write_all(&(idx as u32).to_le_bytes())?;
            }
        }
        for &v in &self.mean {
            w.write_all(&v.to_le_bytes())?;
        }
        for &v in &self.std {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut magic = [0u8; 4];
        read_exact(&mut r, &mut magic)?;
        if magic != MAGIC {
            return Err(Error::ModelCorrupt("bad magic bytes".into()));
        }
        let version = read_u32(&mut r)?;
        if version != FORMAT_VERSION {
            return Err(Error::ModelVersion {
                path: path.to_path_buf(),
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let hyper_sizes = read_sizes(&mut r)?;
        let target_sizes = read_sizes(&mut r)?;
        let hyper_spec = MlpSpec::new(hyper_sizes).map_err(corrupt)?;
        let target_spec = MlpSpec::new(target_sizes).map_err(corrupt)?;
        let psi_len = read_u64(&mut r)? as usize;
        if psi_len != hyper_spec.param_count() {
            return Err(Error::ModelInconsistent(format!(
                "psi length {psi_len} != hyper spec param count {}",
                hyper_spec.param_count()
            )));
        }
        let mut psi = vec![0.0f64; psi_len];
        for v in &mut psi {
            *v = read_f64(&mut r)?;
        }
        let a = read_u32(&mut r)? as usize;
        let d = read_u32(&mut r)? as usize;
        let l = read_u32(&mut r)? as usize;
        if a == 0 || l == 0 || l > d {
            return Err(Error::ModelCorrupt(format!(
                "invalid pool header a={a}, d={d}, l={l}"
            )));
        }
        let mut masks = Vec::with_capacity(a);
        for _ in 0..a {
            let mut indices = Vec::with_capacity(l);
            for _ in 0..l {
                indices.push(read_u32(&mut r)? as usize);
            }
            masks.push(
                AugmentationMask::from_indices(d, indices)
                    .map_err(|e| Error::ModelCorrupt(e.to_string()))?,
            );
        }
        let pool = MaskPool::new(masks).map_err(|e| Error::ModelCorrupt(e.to_string()))?;
        let mut mean = vec![0.0f64; d];
        for v in &mut mean {
            *v = read_f64(&mut r)?;
        }
        let mut std = vec![0.0f64; d];
        for v in &mut std {
            *v = read_f64(&mut r)?;
        }
        let psi = FlatParams::from_vec(&hyper_spec, psi);
        let hypernetwork = HyperNetwork::from_parts(hyper_spec, psi, target_spec)
            .map_err(|e| Error::ModelInconsistent(e.to_string()))?;
        if pool.d() != hypernetwork.input_size() {
            return Err(Error::ModelInconsistent(format!(
                "pool dimension {} != hypernetwork input size {}",
                pool.d(),
                hypernetwork.input_size()
            )));
        }
        Self::new(hypernetwork, pool, mean, std)
    }
}

fn corrupt(e: Error) -> Error {
    Error::ModelCorrupt(e.to_string())
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn write_sizes(w: &mut impl Write, sizes: &[usize]) -> Result<()> {
    w.write_all(&(sizes.len() as u32).to_le_bytes())?;
    for &s in sizes {
        w.write_all(&(s as u32).to_le_bytes())?;
    }
    Ok(())
}

fn read_sizes(r: &mut impl Read) -> Result<Vec<usize>> {
    let count = read_u32(r)? as usize;
    if count < 2 || count > 1024 {
        return Err(Error::ModelCorrupt(format!("bad layer count {count}")));
    }
    (0..count).map(|_| Ok(read_u32(r)? as usize)).collect()
}

fn read_exact(r: &mut impl Read, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::ModelCorrupt("truncated file".into())
        } else {
            Error::Io(e)
        }
    })
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    read_exact(r, &mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut buf = [0u8; 8];
    read_exact(r, &mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut buf = [0u8; 8];
    read_exact(r, &mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

/// Writes predictions as CSV: row id, predicted class, one column per logit.
pub fn write_predictions_csv(path: &Path, model: &HyperTabModel, x: &Matrix) -> Result<()> {
    let logits = model.predict_logits_batch(x)?;
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(f, "row,predicted_class")?;
    for k in 0..model.n_classes() {
        write!(f, ",logit_{k}")?;
    }
    writeln!(f)?;
    for i in 0..logits.rows() {
        let row = logits.row(i);
        write!(f, "{i},{}", argmax(row))?;
        for v in row {
            write!(f, ",{v}")?;
        }
        writeln!(f)?;
    }
    f.flush()?;
    Ok(())
}
