use std::path::Path;

use rayon::prelude::*;

use super::{augment_pipeline, AugmentConfig};
use crate::datasetio::{self, Manifest, ManifestEntry, ManifestHeader};
use crate::error::{Error, Result};

/// Options for [`augment_dataset`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DatasetAugment {
    pub seed: u64,
    /// Augmented variants written per input entry.
    pub copies: usize,
    /// Optional square random crop applied after the pipeline.
    pub crop: Option<usize>,
    pub workers: usize,
}

/// Writes augmented copies of every entry under `out_dir` with the same
/// manifest schema. Variant `k` of entry `i` is seeded with
/// `config.seed_policy.seed_for(seed, i * copies + k)` and gets id
/// `<id>_a<k>`.
pub fn augment_dataset(
    manifest_path: &Path,
    out_dir: &Path,
    config: &AugmentConfig,
    opts: DatasetAugment,
) -> Result<Manifest> {
    config.validate()?;
    if opts.copies == 0 {
        return Err(Error::param("copies must be >= 1"));
    }
    let (root, _) = datasetio::locate(manifest_path);
    let input = datasetio::read_manifest(manifest_path)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers.max(1))
        .build()
        .map_err(|e| Error::param(e.to_string()))?;
    let nested: Vec<Vec<ManifestEntry>> = pool.install(|| {
        input
            .entries
            .par_iter()
            .enumerate()
            .map(|(i, entry)| {
                let sample = datasetio::load_sample(&root, entry)?;
                (0..opts.copies)
                    .map(|k| {
                        let seed = config.seed_policy.seed_for(opts.seed, i * opts.copies + k);
                        let mut out = augment_pipeline(&sample, config, seed)?;
                        if let Some(size) = opts.crop {
                            out = datasetio::crop_sample(&out, size, seed)?;
                        }
                        let id = format!("{}_a{k}", entry.id);
                        let image_path = format!("images/{id}.png");
                        let mask_path = format!("masks/{id}.png");
                        datasetio::write_rgb_png(&out_dir.join(&image_path), &out.image)?;
                        datasetio::write_mask_png(&out_dir.join(&mask_path), &out.mask)?;
                        let mut meta = entry.meta.clone();
                        meta.insert("augmented_from".into(), entry.id.clone().into());
                        meta.insert("augment_seed".into(), seed.into());
                        meta.insert(
                            "crack_pixel_fraction".into(),
                            out.meta.crack_pixel_fraction.into(),
                        );
                        Ok(ManifestEntry {
                            id,
                            image_path,
                            mask_path,
                            split: entry.split,
                            source: entry.source.clone(),
                            meta,
                        })
                    })
                    .collect()
            })
            .collect::<Result<_>>()
    })?;
    let manifest = Manifest {
        header: ManifestHeader {
            master_seed: Some(opts.seed),
            config_hash: input.header.config_hash.clone(),
            ..ManifestHeader::default()
        },
        entries: nested.into_iter().flatten().collect(),
    };
    datasetio::write_manifest(out_dir, &manifest)?;
    Ok(manifest)
}
