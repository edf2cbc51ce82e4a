//! Synthetic dataset directories.
//!
//! ```text
//! <dir>/manifest.json
//! <dir>/train/0000.bin …   per-slice binaries (see pgdl_core::physics::io)
//! <dir>/test/0000.bin …
//! ```

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use pgdl_core::physics::{
    add_noise, apply_e, make_coil_maps, make_phantom, read_slice, write_slice, KSpace, NoiseSpec, SliceData,
};
use pgdl_core::sampling::{random_mask, uniform_mask, SamplingMask};
use pgdl_core::train::{derive_seed, TrainSlice};
use serde::{Deserialize, Serialize};

use crate::config::{Acquisition, DataConfig, ExperimentConfig, Pattern};
use crate::error::{CliError, Result};

pub const DATASET_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    fn dir(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }

    fn stream(self) -> u64 {
        match self {
            Split::Train => 0,
            Split::Test => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SliceEntry {
    pub id: usize,
    pub split: Split,
    /// Path relative to the dataset directory.
    pub file: String,
    /// Acquired mask Ω.
    pub omega: SamplingMask,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub data: DataConfig,
    pub acquisition: Acquisition,
    pub slices: Vec<SliceEntry>,
}

fn parent_mask(cfg: &ExperimentConfig, split: Split, id: usize) -> Result<SamplingMask> {
    let s = &cfg.sampling;
    let w = cfg.data.width;
    let mask = match s.pattern {
        Pattern::Uniform => uniform_mask(w, s.accel, s.n_acs)?,
        Pattern::Random => random_mask(w, s.accel, s.n_acs, derive_seed(s.seed, 10 + split.stream(), id as u64))?,
    };
    Ok(mask)
}

fn make_slice(d: &DataConfig, split: Split, id: usize) -> Result<SliceData> {
    let stream = 3 * split.stream();
    let seed = |k: u64| derive_seed(d.seed, stream + k, id as u64);
    let truth = make_phantom(d.height, d.width, seed(0))?;
    let coils = make_coil_maps(d.coils, d.height, d.width, seed(1))?;
    let clean = apply_e(&truth, &coils, &SamplingMask::full(d.width))?;
    let kspace = add_noise(&clean, &NoiseSpec { sigma: d.noise_sigma, seed: seed(2) })?;
    Ok(SliceData { ground_truth: truth, coils, kspace })
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub(crate) fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

/// Writes a dataset for `cfg`. Identical configs produce identical bytes.
pub fn generate_dataset(cfg: &ExperimentConfig, dir: &Path) -> Result<DatasetManifest> {
    let d = &cfg.data;
    if d.n_train == 0 && d.n_test == 0 {
        return Err(CliError::Config("dataset would be empty: n_train and n_test are both 0".into()));
    }
    if d.n_train == 0 {
        return Err(CliError::Config("empty dataset: n_train is 0, training needs at least one slice".into()));
    }
    let mut slices = Vec::new();
    for (split, n) in [(Split::Train, d.n_train), (Split::Test, d.n_test)] {
        create_dir(&dir.join(split.dir()))?;
        for id in 0..n {
            let file = format!("{}/{id:04}.bin", split.dir());
            write_slice(&dir.join(&file), &make_slice(d, split, id)?)?;
            slices.push(SliceEntry { id, split, file, omega: parent_mask(cfg, split, id)? });
        }
    }
    let manifest =
        DatasetManifest { format_version: DATASET_VERSION, data: d.clone(), acquisition: cfg.sampling.acquisition(), slices };
    write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

/// An opened dataset directory.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub dir: PathBuf,
    pub manifest: DatasetManifest,
}

/// A loaded slice with its acquired data.
#[derive(Clone, Debug)]
pub struct LoadedSlice {
    pub entry: SliceEntry,
    pub data: SliceData,
    /// The fully sampled k-space restricted to Ω.
    pub y: KSpace,
}

impl Dataset {
    pub fn open(dir: &Path) -> Result<Self> {
        let manifest: DatasetManifest = read_json(&dir.join("manifest.json"))?;
        if manifest.format_version != DATASET_VERSION {
            return Err(CliError::Data(format!(
                "{}: dataset format {}, expected {DATASET_VERSION}",
                dir.display(),
                manifest.format_version
            )));
        }
        Ok(Self { dir: dir.to_path_buf(), manifest })
    }

    /// Rejects a config whose data or acquisition settings differ from the
    /// ones this dataset was generated with.
    pub fn check_config(&self, cfg: &ExperimentConfig) -> Result<()> {
        if cfg.data != self.manifest.data {
            return Err(CliError::Config(format!(
                "data settings differ from dataset {}: config {:?}, dataset {:?}",
                self.dir.display(),
                cfg.data,
                self.manifest.data
            )));
        }
        if cfg.sampling.acquisition() != self.manifest.acquisition {
            return Err(CliError::Config(format!(
                "acquisition settings differ from dataset {}: config {:?}, dataset {:?}",
                self.dir.display(),
                cfg.sampling.acquisition(),
                self.manifest.acquisition
            )));
        }
        Ok(())
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        let d = &self.manifest.data;
        (d.height, d.width, d.coils)
    }

    pub fn entries(&self, split: Split) -> impl Iterator<Item = &SliceEntry> {
        self.manifest.slices.iter().filter(move |e| e.split == split)
    }

    pub fn load(&self, entry: &SliceEntry) -> Result<LoadedSlice> {
        let (h, w, c) = self.dims();
        let data = read_slice(&self.dir.join(&entry.file), h, w, c)?;
        let y = data.kspace.restrict(&entry.omega)?;
        Ok(LoadedSlice { entry: entry.clone(), data, y })
    }

    pub fn load_split(&self, split: Split) -> Result<Vec<LoadedSlice>> {
        self.entries(split).map(|e| self.load(e)).collect()
    }

    pub fn train_slices(&self) -> Result<Vec<TrainSlice>> {
        Ok(self
            .load_split(Split::Train)?
            .into_iter()
            .map(|s| TrainSlice { y: s.y, y_ref: s.data.kspace, coils: Arc::new(s.data.coils) })
            .collect())
    }
}
