//! Cartesian phase-encode sampling masks and retrospective subset masks.
//!
//! A mask selects whole columns (width axis) of k-space; every row shares the
//! same selection. The autocalibration (ACS) block is a contiguous run of
//! columns centered at `width / 2`.

use std::collections::BTreeSet;
use std::ops::Range;
use std::sync::Arc;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sorted set of sampled columns plus the ACS block they contain.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "MaskRecord", into = "MaskRecord")]
pub struct SamplingMask {
    width: usize,
    indices: Vec<usize>,
    acs: Range<usize>,
}

/// Serialized form: column indices as a JSON array, ACS as `[start, end)`.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MaskRecord {
    width: usize,
    indices: Vec<usize>,
    acs: [usize; 2],
}

impl TryFrom<MaskRecord> for SamplingMask {
    type Error = Error;

    fn try_from(r: MaskRecord) -> Result<Self> {
        SamplingMask::new(r.width, r.indices, r.acs[0]..r.acs[1])
    }
}

impl From<SamplingMask> for MaskRecord {
    fn from(m: SamplingMask) -> Self {
        MaskRecord { width: m.width, indices: m.indices, acs: [m.acs.start, m.acs.end] }
    }
}

/// How [`partition_masks`] treats ACS columns.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AcsPolicy {
    /// ACS columns are kept in every subset; the draw covers the rest.
    #[default]
    KeepAcs,
    /// Every column of the parent is eligible, ACS included.
    UniformOverAll,
}

/// A parent mask and its `K` retrospective subsets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskFamily {
    pub parent: SamplingMask,
    pub children: Vec<SamplingMask>,
    pub rho: f64,
    pub seed: u64,
}

/// Centered ACS range of `n_acs` columns.
pub fn acs_range(width: usize, n_acs: usize) -> Range<usize> {
    let start = (width / 2).saturating_sub(n_acs / 2);
    start..start + n_acs
}

impl SamplingMask {
    /// Builds a mask from arbitrary indices; they are sorted and deduplicated.
    pub fn new(width: usize, indices: impl IntoIterator<Item = usize>, acs: Range<usize>) -> Result<Self> {
        let set: BTreeSet<usize> = indices.into_iter().collect();
        if let Some(&bad) = set.iter().find(|&&i| i >= width) {
            return Err(Error::InvalidArgument(format!("column {bad} outside width {width}")));
        }
        if acs.end > width || acs.start > acs.end {
            return Err(Error::InvalidArgument(format!("ACS range {acs:?} invalid for width {width}")));
        }
        if acs.clone().any(|i| !set.contains(&i)) {
            return Err(Error::InvalidArgument(format!("ACS range {acs:?} not fully sampled")));
        }
        Ok(Self { width, indices: set.into_iter().collect(), acs })
    }

    pub fn full(width: usize) -> Self {
        Self { width, indices: (0..width).collect(), acs: 0..0 }
    }

    pub fn empty(width: usize) -> Self {
        Self { width, indices: Vec::new(), acs: 0..0 }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn acs(&self) -> Range<usize> {
        self.acs.clone()
    }

    pub fn acs_len(&self) -> usize {
        self.acs.len()
    }

    /// ACS flag for each entry of [`Self::indices`].
    pub fn acs_flags(&self) -> Vec<bool> {
        self.indices.iter().map(|i| self.acs.contains(i)).collect()
    }

    pub fn contains(&self, col: usize) -> bool {
        self.indices.binary_search(&col).is_ok()
    }

    pub fn is_subset_of(&self, other: &SamplingMask) -> bool {
        self.width == other.width && self.indices.iter().all(|&i| other.contains(i))
    }

    /// Per-column keep flags, length `width`.
    pub fn column_flags(&self) -> Vec<bool> {
        let mut flags = vec![false; self.width];
        for &i in &self.indices {
            flags[i] = true;
        }
        flags
    }

    pub fn column_flags_arc(&self) -> Arc<Vec<bool>> {
        Arc::new(self.column_flags())
    }
}

/// Every `accel`-th column from column 0 plus a centered ACS block.
pub fn uniform_mask(width: usize, accel: usize, n_acs: usize) -> Result<SamplingMask> {
    if accel == 0 || accel > width {
        return Err(Error::InvalidArgument(format!("acceleration {accel} invalid for width {width}")));
    }
    if n_acs > width {
        return Err(Error::InvalidArgument(format!("{n_acs} ACS lines exceed width {width}")));
    }
    let acs = acs_range(width, n_acs);
    let cols = (0..width).step_by(accel).chain(acs.clone());
    SamplingMask::new(width, cols, acs)
}

/// Centered ACS block plus columns drawn uniformly without replacement so the
/// total is `round(width / accel)`.
pub fn random_mask(width: usize, accel: usize, n_acs: usize, seed: u64) -> Result<SamplingMask> {
    if accel == 0 || accel > width {
        return Err(Error::InvalidArgument(format!("acceleration {accel} invalid for width {width}")));
    }
    let total = (width as f64 / accel as f64).round() as usize;
    if total < n_acs {
        return Err(Error::InvalidArgument(format!(
            "round({width}/{accel}) = {total} is smaller than the {n_acs} ACS lines"
        )));
    }
    let acs = acs_range(width, n_acs);
    let pool: Vec<usize> = (0..width).filter(|i| !acs.contains(i)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked = sample(&mut rng, pool.len(), total - n_acs);
    SamplingMask::new(width, acs.clone().chain(picked.into_iter().map(|k| pool[k])), acs)
}

/// Draws `k` subsets of `omega`, each of cardinality `round(rho · |omega|)`.
///
/// Subsets are independent; each uses its own stream derived from `seed`.
pub fn partition_masks(omega: &SamplingMask, k: usize, rho: f64, seed: u64, policy: AcsPolicy) -> Result<MaskFamily> {
    if k == 0 {
        return Err(Error::InvalidArgument("mask count K must be at least 1".into()));
    }
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::InvalidArgument(format!("subset ratio {rho} outside (0, 1]")));
    }
    let target = (rho * omega.len() as f64).round() as usize;
    if policy == AcsPolicy::KeepAcs && rho * (omega.len() as f64) < omega.acs_len() as f64 {
        return Err(Error::InvalidArgument(format!(
            "rho·|Ω| = {:.2} is smaller than the {} ACS lines kept under keep-acs",
            rho * omega.len() as f64,
            omega.acs_len()
        )));
    }

    let mut children = Vec::with_capacity(k);
    for j in 0..k {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(j as u64);
        let child = match policy {
            AcsPolicy::KeepAcs => {
                let acs = omega.acs();
                let pool: Vec<usize> = omega.indices().iter().copied().filter(|i| !acs.contains(i)).collect();
                let extra = target.saturating_sub(acs.len()).min(pool.len());
                let picked = sample(&mut rng, pool.len(), extra);
                SamplingMask::new(omega.width(), acs.clone().chain(picked.into_iter().map(|p| pool[p])), acs)?
            }
            AcsPolicy::UniformOverAll => {
                let picked: BTreeSet<usize> =
                    sample(&mut rng, omega.len(), target).into_iter().map(|p| omega.indices()[p]).collect();
                let acs = omega.acs();
                let acs = if acs.clone().all(|i| picked.contains(&i)) { acs } else { 0..0 };
                SamplingMask::new(omega.width(), picked, acs)?
            }
        };
        children.push(child);
    }
    Ok(MaskFamily { parent: omega.clone(), children, rho, seed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn uniform_mask_small_case() {
        let m = uniform_mask(16, 4, 4).unwrap();
        assert_eq!(m.indices(), &[0, 4, 6, 7, 8, 9, 12]);
        assert_eq!(m.len(), 7);
        assert_eq!(m.acs(), 6..10);
    }

    #[test]
    fn uniform_mask_knee_parameters() {
        let m = uniform_mask(368, 4, 24).unwrap();
        assert_eq!(m.acs(), 172..196);
        let expected: BTreeSet<usize> = (0..368).step_by(4).chain(172..196).collect();
        assert_eq!(m.indices(), expected.into_iter().collect::<Vec<_>>().as_slice());
        assert!(m.acs_flags().iter().filter(|&&f| f).count() == 24);
    }

    #[test]
    fn uniform_mask_without_acceleration_is_full() {
        assert_eq!(uniform_mask(8, 1, 0).unwrap().indices(), &[0, 1, 2, 3, 4, 5, 6, 7]);
    }

    #[test]
    fn uniform_mask_rejects_bad_rate() {
        assert!(uniform_mask(8, 9, 0).is_err());
        assert!(uniform_mask(8, 0, 0).is_err());
    }

    #[test]
    fn random_mask_knee_parameters() {
        let m = random_mask(368, 4, 24, 11).unwrap();
        assert_eq!(m.len(), 92);
        assert!((172..196).all(|c| m.contains(c)));
        assert_eq!(m, random_mask(368, 4, 24, 11).unwrap());
        assert_ne!(m, random_mask(368, 4, 24, 12).unwrap());
    }

    #[test]
    fn random_mask_rejects_too_many_acs() {
        assert!(random_mask(16, 4, 6, 0).is_err());
    }

    #[test]
    fn random_mask_column_frequencies() {
        // 56 non-ACS columns share 8 draws: p = 1/7 per column per seed.
        let (w, r, n_acs, trials) = (64, 4, 8, 1000);
        let mut counts = vec![0usize; w];
        for seed in 0..trials {
            for &c in random_mask(w, r, n_acs, seed).unwrap().indices() {
                counts[c] += 1;
            }
        }
        let acs = acs_range(w, n_acs);
        let p = 8.0 / 56.0;
        let mean = trials as f64 * p;
        let sd = (trials as f64 * p * (1.0 - p)).sqrt();
        for (c, &n) in counts.iter().enumerate() {
            if acs.contains(&c) {
                assert_eq!(n, trials as usize);
            } else {
                assert!((n as f64 - mean).abs() < 5.0 * sd, "column {c}: {n} vs {mean}");
            }
        }
    }

    #[test]
    fn degenerate_partition_returns_parent() {
        let omega = uniform_mask(64, 4, 8).unwrap();
        let fam = partition_masks(&omega, 1, 1.0, 3, AcsPolicy::KeepAcs).unwrap();
        assert_eq!(fam.children, vec![omega.clone()]);
        let fam = partition_masks(&omega, 1, 1.0, 3, AcsPolicy::UniformOverAll).unwrap();
        assert_eq!(fam.children, vec![omega]);
    }

    #[test]
    fn knee_partition_cardinality() {
        let omega = random_mask(368, 4, 24, 5).unwrap();
        assert_eq!(omega.len(), 92);
        let fam = partition_masks(&omega, 3, 0.6, 9, AcsPolicy::KeepAcs).unwrap();
        for child in &fam.children {
            assert!(child.len().abs_diff(55) <= 1);
            assert!(child.is_subset_of(&omega));
            assert_eq!(child.acs(), omega.acs());
        }
    }

    #[test]
    fn partition_is_deterministic() {
        let omega = uniform_mask(128, 4, 12).unwrap();
        let a = partition_masks(&omega, 5, 0.6, 42, AcsPolicy::KeepAcs).unwrap();
        let b = partition_masks(&omega, 5, 0.6, 42, AcsPolicy::KeepAcs).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn keep_acs_rejects_small_ratio() {
        let omega = uniform_mask(64, 4, 16).unwrap();
        let err = partition_masks(&omega, 3, 0.2, 0, AcsPolicy::KeepAcs);
        assert!(err.is_err());
        assert!(partition_masks(&omega, 3, 0.2, 0, AcsPolicy::UniformOverAll).is_ok());
        assert!(partition_masks(&omega, 0, 0.6, 0, AcsPolicy::KeepAcs).is_err());
        assert!(partition_masks(&omega, 2, 0.0, 0, AcsPolicy::KeepAcs).is_err());
        assert!(partition_masks(&omega, 2, 1.5, 0, AcsPolicy::KeepAcs).is_err());
    }

    #[test]
    fn uniform_over_all_may_drop_acs() {
        let omega = uniform_mask(64, 4, 8).unwrap();
        let fam = partition_masks(&omega, 7, 0.5, 1, AcsPolicy::UniformOverAll).unwrap();
        let dropped = fam.children.iter().any(|c| omega.acs().any(|i| !c.contains(i)));
        assert!(dropped);
        for c in &fam.children {
            assert!(c.is_subset_of(&omega));
            assert_eq!(c.len(), 11);
        }
    }

    #[test]
    fn json_form_validates() {
        let m = uniform_mask(16, 4, 4).unwrap();
        let json = serde_json::to_string(&m).unwrap();
        assert_eq!(json, r#"{"width":16,"indices":[0,4,6,7,8,9,12],"acs":[6,10]}"#);
        assert_eq!(serde_json::from_str::<SamplingMask>(&json).unwrap(), m);
        assert!(serde_json::from_str::<SamplingMask>(r#"{"width":4,"indices":[5],"acs":[0,0]}"#).is_err());
    }

    proptest! {
        #[test]
        fn family_invariants(
            width in 24usize..160,
            accel in 1usize..6,
            n_acs in 0usize..12,
            k in 1usize..8,
            rho in 0.3f64..=1.0,
            seed in any::<u64>(),
            keep in any::<bool>(),
        ) {
            let omega = uniform_mask(width, accel, n_acs.min(width)).unwrap();
            let policy = if keep { AcsPolicy::KeepAcs } else { AcsPolicy::UniformOverAll };
            match partition_masks(&omega, k, rho, seed, policy) {
                Ok(fam) => {
                    let target = (rho * omega.len() as f64).round() as usize;
                    prop_assert_eq!(fam.children.len(), k);
                    for c in &fam.children {
                        prop_assert!(c.is_subset_of(&omega));
                        prop_assert!(c.len().abs_diff(target) <= 1);
                        if keep {
                            prop_assert!(omega.acs().all(|i| c.contains(i)));
                        }
                    }
                }
                Err(_) => prop_assert!(keep && rho * (omega.len() as f64) < omega.acs_len() as f64),
            }
        }
    }
}
