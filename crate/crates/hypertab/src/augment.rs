//! Feature-subset augmentations: fixed-size index subsets and their binary
//! mask encodings.
//!
//! Indices are 0-based. All masks in one pool share the same subset size `l`
//! so every generated target network has an identical shape.

use crate::{Error, Result};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::HashSet;

/// Cap on rejection-sampling retries per mask when enforcing pool uniqueness.
const UNIQUENESS_RETRIES: usize = 1000;

/// A subset of `l` distinct feature indices out of `d`, with its binary encoding.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AugmentationMask {
    d: usize,
    indices: Vec<usize>,
}

impl AugmentationMask {
    /// Builds a mask from indices, which need not be sorted but must be
    /// distinct, in range, and nonempty.
    pub fn from_indices(d: usize, mut indices: Vec<usize>) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::Config("mask: at least one index required".into()));
        }
        indices.sort_unstable();
        if indices.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("mask: duplicate feature index".into()));
        }
        if *indices.last().unwrap() >= d {
            return Err(Error::Config(format!(
                "mask: index {} out of range for d={d}",
                indices.last().unwrap()
            )));
        }
        Ok(Self { d, indices })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Subset size `l`.
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        false // l >= 1 by construction
    }

    /// Sorted feature indices.
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn contains(&self, feature: usize) -> bool {
        self.indices.binary_search(&feature).is_ok()
    }

    /// Binary encoding: entry `j` is 1 iff `j` is selected.
    pub fn binary(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.d];
        for &j in &self.indices {
            m[j] = 1.0;
        }
        m
    }

    /// Selects the masked coordinates of `x` in ascending index order.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.d {
            return Err(Error::Data(format!(
                "apply_mask: input length {} != mask dimension {}",
                x.len(),
                self.d
            )));
        }
        Ok(self.indices.iter().map(|&j| x[j]).collect())
    }

    /// Column subset of a batch matrix; equals per-row [`Self::apply`].
    pub fn apply_matrix(&self, x: &crate::Matrix) -> Result<crate::Matrix> {
        if x.cols() != self.d {
            return Err(Error::Data(format!(
                "apply_mask: input has {} columns, mask dimension is {}",
                x.cols(),
                self.d
            )));
        }
        Ok(x.select_cols(&self.indices))
    }
}

/// The fixed set of augmentations defining one ensemble.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskPool {
    masks: Vec<AugmentationMask>,
}

impl MaskPool {
    /// Builds a pool, checking all masks share the same `d` and `l`.
    pub fn new(masks: Vec<AugmentationMask>) -> Result<Self> {
        let first = masks
            .first()
            .ok_or_else(|| Error::Config("mask pool: at least one mask required".into()))?;
        let (d, l) = (first.d(), first.len());
        if masks.iter().any(|m| m.d() != d || m.len() != l) {
            return Err(Error::Config(
                "mask pool: all masks must share the same d and l".into(),
            ));
        }
        Ok(Self { masks })
    }

    pub fn masks(&self) -> &[AugmentationMask] {
        &self.masks
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    pub fn d(&self) -> usize {
        self.masks[0].d()
    }

    pub fn mask_size(&self) -> usize {
        self.masks[0].len()
    }

    /// Pool with masks sorted by their index lists. Predictions averaged in
    /// canonical order are exactly invariant to the original pool order.
    pub fn canonical(&self) -> Self {
        let mut masks = self.masks.clone();
        masks.sort_by(|a, b| a.indices().cmp(b.indices()));
        Self { masks }
    }
}

/// True when `C(d, l) >= a`, computed with early exit to avoid overflow.
fn enough_distinct_subsets(d: usize, l: usize, a: usize) -> bool {
    let mut count = 1u128;
    let a = a as u128;
    for i in 0..l.min(d - l) {
        count = count * (d - i) as u128 / (i + 1) as u128;
        if count >= a {
            return true;
        }
    }
    count >= a
}

/// Samples `a` masks of size `l` over `d` features, uniformly without
/// within-mask replacement, deterministically from `seed`.
///
/// Pool-level uniqueness is enforced by rejection when enough distinct
/// subsets exist; otherwise duplicates are permitted with a logged warning.
pub fn sample_pool(d: usize, l: usize, a: usize, seed: u64) -> Result<MaskPool> {
    if l == 0 || l > d {
        return Err(Error::Config(format!(
            "mask_size: must satisfy 1 <= l <= d, got l={l}, d={d}"
        )));
    }
    if a == 0 {
        return Err(Error::Config("masks_no: must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let enforce_unique = enough_distinct_subsets(d, l, a);
    if !enforce_unique {
        log::warn!("mask pool: C({d},{l}) < {a}, duplicate masks permitted");
    }
    let mut seen: HashSet<Vec<usize>> = HashSet::with_capacity(a);
    let mut masks = Vec::with_capacity(a);
    for _ in 0..a {
        let mut retries = 0;
        loop {
            let mut indices = sample(&mut rng, d, l).into_vec();
            indices.sort_unstable();
            if !enforce_unique || seen.insert(indices.clone()) || retries >= UNIQUENESS_RETRIES {
                if retries >= UNIQUENESS_RETRIES {
                    log::warn!("mask pool: uniqueness retry cap hit, keeping duplicate");
                }
                masks.push(AugmentationMask { d, indices });
                break;
            }
            retries += 1;
        }
    }
    MaskPool::new(masks)
}
