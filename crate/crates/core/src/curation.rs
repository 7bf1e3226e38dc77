//! Datasets for retraining experiments: training manifests, group datasets
//! and the score-threshold collection baseline.

use crate::detector::{DetectorProfile, ManifestKey, TrainingManifest};
use crate::error::{Error, Result};
use crate::group::GroupKey;
use crate::intervention::{apply_edit, EditValue};
use crate::scene::{rotation_bin, rotation_bin_center, SceneGraph};
use crate::seed;
use crate::world::World;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Which part of a manifest new instances are counted in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManifestPart {
    Base,
    Added,
}

/// Count labeled vehicle instances per (asset, rotation bin, weather preset).
pub fn build_manifest(world: &World, scenes: &[SceneGraph], part: ManifestPart) -> Result<TrainingManifest> {
    let mut counts: BTreeMap<ManifestKey, u64> = BTreeMap::new();
    for scene in scenes {
        let weather = world
            .config()
            .preset_index(&scene.weather)
            .ok_or_else(|| Error::Invalid(format!("scene {} weather is not a configured preset", scene.id)))?
            as u16;
        for label in world.labels(scene)?.labels {
            let agent = scene.agent(label.agent_id).expect("labels come from the scene");
            let key = ManifestKey {
                asset: agent.asset,
                rotation_bin: rotation_bin(agent.pose.yaw),
                weather,
            };
            *counts.entry(key).or_insert(0) += 1;
        }
    }
    let mut m = TrainingManifest {
        total_images: scenes.len() as u64,
        ..Default::default()
    };
    match part {
        ManifestPart::Base => m.counts = counts,
        ManifestPart::Added => m.added = counts,
    }
    Ok(m)
}

/// The vehicles a group dataset modifies in `scene`: `n ∈ {3..=6}` drawn
/// uniformly, then `n` vehicles (all of them if fewer). Depends only on the
/// scene id and `selection_seed`, never on the group, so every group dataset
/// built from the same scenes edits the same vehicles.
pub fn select_vehicles(scene: &SceneGraph, selection_seed: u64) -> Vec<u32> {
    let mut rng = seed::rng(seed::split(selection_seed, scene.id));
    let n = rng.random_range(3..=6usize);
    let ids: Vec<u32> = scene.vehicles().map(|v| v.id).collect();
    if ids.len() <= n {
        return ids;
    }
    let mut picked: Vec<u32> = rand::seq::index::sample(&mut rng, ids.len(), n)
        .into_iter()
        .map(|i| ids[i])
        .collect();
    picked.sort_unstable();
    picked
}

/// Rewrite every scene toward `group`: selected vehicles get the asset or the
/// rotation bin's center, or the whole scene gets the weather preset.
pub fn build_group_dataset(world: &World, scenes: &[SceneGraph], group: GroupKey, selection_seed: u64) -> Result<Vec<SceneGraph>> {
    let config = world.config();
    match group {
        GroupKey::Asset(a) if !(a.family.is_vehicle() && config.catalog.contains(a)) => {
            return Err(Error::Invalid(format!("group asset {a:?} is not a catalog vehicle")));
        }
        GroupKey::Rotation(b) if b >= 360 || b % 10 != 0 => {
            return Err(Error::Invalid(format!("rotation group {b} is not a bin start")));
        }
        GroupKey::Weather(w) if usize::from(w) >= config.weather_presets.len() => {
            return Err(Error::Invalid(format!("unknown weather preset index {w}")));
        }
        GroupKey::Location(_) => return Err(Error::Invalid("location groups have no group datasets".into())),
        _ => {}
    }
    scenes
        .iter()
        .map(|scene| {
            if let GroupKey::Weather(w) = group {
                return apply_edit(scene, None, EditValue::Weather(w), config);
            }
            let value = match group {
                GroupKey::Asset(a) => EditValue::Asset(a),
                GroupKey::Rotation(b) => EditValue::Yaw(rotation_bin_center(b)),
                _ => unreachable!(),
            };
            let mut out = scene.clone();
            for id in select_vehicles(scene, selection_seed) {
                out = apply_edit(&out, Some(id), value, config)?;
            }
            Ok(out)
        })
        .collect()
}

/// A dataset recipe: an IID base plus group datasets on top.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub base_scenes: usize,
    pub base_seed: u64,
    pub additions: Vec<Addition>,
    /// Seeds the scenes group datasets are built from; all additions share them.
    pub addition_seed: u64,
    pub selection_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Addition {
    pub group: GroupKey,
    pub scenes: usize,
}

impl DatasetSpec {
    pub fn iid(base_scenes: usize, base_seed: u64) -> Self {
        DatasetSpec {
            base_scenes,
            base_seed,
            additions: Vec::new(),
            addition_seed: seed::split_named(base_seed, "additions"),
            selection_seed: seed::split_named(base_seed, "selection"),
        }
    }

    pub fn with_addition(mut self, group: GroupKey, scenes: usize) -> Self {
        self.additions.push(Addition { group, scenes });
        self
    }

    /// Base scenes, then each addition's scenes.
    pub fn materialize(&self, world: &World) -> Result<(Vec<SceneGraph>, Vec<SceneGraph>)> {
        let base = world.generator().scenes(self.base_scenes, self.base_seed);
        let mut added = Vec::new();
        for a in &self.additions {
            let pool = world.generator().scenes(a.scenes, self.addition_seed);
            added.extend(build_group_dataset(world, &pool, a.group, self.selection_seed)?);
        }
        Ok((base, added))
    }

    pub fn manifest(&self, world: &World) -> Result<TrainingManifest> {
        let (base, added) = self.materialize(world)?;
        let mut m = build_manifest(world, &base, ManifestPart::Base)?;
        m.merge(&build_manifest(world, &added, ManifestPart::Added)?);
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    pub threshold: f64,
    /// Indices into the pool, ascending.
    pub selected: Vec<usize>,
    /// Pool scenes scoring at most the threshold.
    pub available: usize,
    /// Fewer than the requested count were available.
    pub shortage: bool,
}

/// For each threshold, up to `per_bucket` pool indices drawn uniformly
/// without replacement from those with `score ≤ threshold`.
pub fn collect_below(scores: &[f64], thresholds: &[f64], per_bucket: usize, seed: u64) -> Result<Vec<Bucket>> {
    if scores.is_empty() {
        return Err(Error::Invalid("collection pool is empty".into()));
    }
    Ok(thresholds
        .iter()
        .enumerate()
        .map(|(k, &threshold)| {
            let eligible: Vec<usize> = (0..scores.len()).filter(|&i| scores[i] <= threshold).collect();
            let mut selected = if eligible.len() <= per_bucket {
                eligible.clone()
            } else {
                let mut rng = seed::rng(seed::split(seed, k as u64));
                rand::seq::index::sample(&mut rng, eligible.len(), per_bucket)
                    .into_iter()
                    .map(|i| eligible[i])
                    .collect()
            };
            selected.sort_unstable();
            Bucket {
                threshold,
                shortage: eligible.len() < per_bucket,
                available: eligible.len(),
                selected,
            }
        })
        .collect())
}

/// Score the pool with `detector` and collect below each threshold.
pub fn cause_agnostic_collect(
    world: &World,
    detector: &DetectorProfile,
    pool: &[SceneGraph],
    thresholds: &[f64],
    per_bucket: usize,
    seed: u64,
) -> Result<Vec<Bucket>> {
    let scores = pool
        .iter()
        .map(|s| world.score(detector, s))
        .collect::<Result<Vec<f64>>>()?;
    collect_below(&scores, thresholds, per_bucket, seed)
}
