//! Exposure-driven oracle detector.
//!
//! The detector's competence on an object is a known function of how much
//! training data it has seen of similar objects. A [`TrainingManifest`] counts
//! labeled instances per (asset, rotation bin, weather preset); the fitted
//! [`DetectorProfile`] turns those counts into per-object confidence
//!
//! ```text
//! c = detectability · logistic(b0 + capacity·b1·ln(1 + e) + b2·min(1, h/120)
//!                              + b3·(1 − occluded) + b4·light)
//! ```
//!
//! where `e` is the similarity-weighted exposure of the object's asset and
//! `light = (sun_altitude + 90)/180 − 0.5·cloudiness`.
//!
//! Injected weaknesses model blind spots: an object whose asset, rotation bin
//! or weather preset is injected gets no exposure from the manifest's base
//! counts. Instances in the manifest's `added` part (data added on top of the
//! base set) still count for it, as long as they share every injected
//! attribute of the object.

mod ap;

pub use ap::{average_precision, average_precision_over, coco_thresholds, ApResult};

use crate::error::{Error, Result};
use crate::geometry::{Box2D, LabelSet};
use crate::scene::{rotation_bin, AssetCatalog, AssetRef, GeneratorConfig, SceneGraph, WeatherState};
use crate::seed;
use rand::Rng as _;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ManifestKey {
    pub asset: AssetRef,
    pub rotation_bin: u16,
    /// Index into the generator's weather presets.
    pub weather: u16,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct ManifestEntry {
    #[serde(flatten)]
    key: ManifestKey,
    count: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ManifestFile {
    total_images: u64,
    counts: Vec<ManifestEntry>,
    added: Vec<ManifestEntry>,
}

/// Labeled-instance counts per group.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(into = "ManifestFile", from = "ManifestFile")]
pub struct TrainingManifest {
    /// Base training set.
    pub counts: BTreeMap<ManifestKey, u64>,
    /// Data added on top of the base set (group datasets, mined scenes).
    pub added: BTreeMap<ManifestKey, u64>,
    pub total_images: u64,
}

impl From<TrainingManifest> for ManifestFile {
    fn from(m: TrainingManifest) -> Self {
        let entries = |map: BTreeMap<ManifestKey, u64>| {
            map.into_iter()
                .map(|(key, count)| ManifestEntry { key, count })
                .collect()
        };
        ManifestFile {
            total_images: m.total_images,
            counts: entries(m.counts),
            added: entries(m.added),
        }
    }
}

impl From<ManifestFile> for TrainingManifest {
    fn from(f: ManifestFile) -> Self {
        let collect = |v: Vec<ManifestEntry>| {
            let mut map = BTreeMap::new();
            for e in v {
                *map.entry(e.key).or_insert(0) += e.count;
            }
            map
        };
        TrainingManifest {
            counts: collect(f.counts),
            added: collect(f.added),
            total_images: f.total_images,
        }
    }
}

impl TrainingManifest {
    pub fn is_empty(&self) -> bool {
        self.counts.is_empty() && self.added.is_empty()
    }

    pub fn instances(&self) -> u64 {
        self.counts.values().sum::<u64>() + self.added.values().sum::<u64>()
    }

    /// Component-wise sum.
    pub fn merge(&mut self, other: &TrainingManifest) {
        for (k, v) in &other.counts {
            *self.counts.entry(*k).or_insert(0) += v;
        }
        for (k, v) in &other.added {
            *self.added.entry(*k).or_insert(0) += v;
        }
        self.total_images += other.total_images;
    }

    /// The same instances, all moved into the `added` part.
    pub fn as_added(&self) -> TrainingManifest {
        let mut out = TrainingManifest {
            total_images: self.total_images,
            ..Default::default()
        };
        for (k, v) in self.counts.iter().chain(&self.added) {
            *out.added.entry(*k).or_insert(0) += v;
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if !self.is_empty() && self.total_images == 0 {
            return Err(Error::Invalid("manifest has instances but zero images".into()));
        }
        Ok(())
    }
}

/// Asset similarity used to spread exposure across assets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimilarityKernel {
    pub same_asset: f64,
    pub same_family: f64,
    pub other_vehicle: f64,
}

impl Default for SimilarityKernel {
    fn default() -> Self {
        SimilarityKernel {
            same_asset: 1.0,
            same_family: 0.5,
            other_vehicle: 0.05,
        }
    }
}

impl SimilarityKernel {
    pub fn sim(&self, a: AssetRef, b: AssetRef) -> f64 {
        if a == b {
            self.same_asset
        } else if a.family == b.family {
            self.same_family
        } else if a.family.is_vehicle() && b.family.is_vehicle() {
            self.other_vehicle
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConstants {
    pub bias: f64,
    pub exposure_weight: f64,
    pub size_weight: f64,
    pub visibility_weight: f64,
    pub light_weight: f64,
    /// Multiplies `exposure_weight`; stands in for model size.
    pub capacity: f64,
    /// Box height (pixels) at which the size term saturates.
    pub size_saturation: f64,
    pub cloud_penalty: f64,
    /// Objects below this confidence are missed.
    pub min_confidence: f64,
    pub jitter: f64,
    /// Mean false positives per image.
    pub false_positive_rate: f64,
    pub false_positive_confidence: [f64; 2],
    pub similarity: SimilarityKernel,
}

impl Default for DetectorConstants {
    fn default() -> Self {
        DetectorConstants {
            bias: -2.0,
            exposure_weight: 0.35,
            size_weight: 1.2,
            visibility_weight: 1.5,
            light_weight: 0.8,
            capacity: 1.0,
            size_saturation: 120.0,
            cloud_penalty: 0.5,
            min_confidence: 0.3,
            jitter: 0.25,
            false_positive_rate: 0.3,
            false_positive_confidence: [0.05, 0.5],
            similarity: SimilarityKernel::default(),
        }
    }
}

impl DetectorConstants {
    pub fn validate(&self) -> Result<()> {
        let non_negative = [
            ("exposure_weight", self.exposure_weight),
            ("size_weight", self.size_weight),
            ("visibility_weight", self.visibility_weight),
            ("light_weight", self.light_weight),
            ("capacity", self.capacity),
            ("cloud_penalty", self.cloud_penalty),
            ("min_confidence", self.min_confidence),
            ("jitter", self.jitter),
            ("false_positive_rate", self.false_positive_rate),
            ("same_asset", self.similarity.same_asset),
            ("same_family", self.similarity.same_family),
            ("other_vehicle", self.similarity.other_vehicle),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("detector constant {name} must be finite and non-negative")));
            }
        }
        if !self.bias.is_finite() || !(self.size_saturation > 0.0) {
            return Err(Error::Config("detector bias must be finite and size_saturation positive".into()));
        }
        let [lo, hi] = self.false_positive_confidence;
        if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
            return Err(Error::Config("false positive confidence range must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Groups whose base exposure is forced to zero.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Injection {
    pub assets: Vec<AssetRef>,
    pub rotation_bins: Vec<u16>,
    /// Indices into the generator's weather presets.
    pub weather: Vec<u16>,
}

/// Injection by name, as written in config files.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InjectionSpec {
    pub assets: Vec<String>,
    /// Any yaw inside a bin selects that bin.
    pub rotations: Vec<f64>,
    pub weather: Vec<String>,
}

impl InjectionSpec {
    pub fn resolve(&self, config: &GeneratorConfig) -> Result<Injection> {
        let assets = self
            .assets
            .iter()
            .map(|n| {
                config
                    .catalog
                    .lookup(n)
                    .ok_or_else(|| Error::Config(format!("unknown injected asset {n}")))
            })
            .collect::<Result<_>>()?;
        let rotation_bins = self
            .rotations
            .iter()
            .map(|&r| {
                if (0.0..360.0).contains(&r) {
                    Ok(rotation_bin(r))
                } else {
                    Err(Error::Config(format!("injected rotation {r} outside [0, 360)")))
                }
            })
            .collect::<Result<_>>()?;
        let weather = self
            .weather
            .iter()
            .map(|n| {
                config
                    .preset_by_name(n)
                    .map(|i| i as u16)
                    .ok_or_else(|| Error::Config(format!("unknown injected weather preset {n}")))
            })
            .collect::<Result<_>>()?;
        Ok(Injection {
            assets,
            rotation_bins,
            weather,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub bbox: Box2D,
    pub confidence: f64,
}

/// Everything needed to refit a profile; this is what gets persisted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorSpec {
    pub manifest: TrainingManifest,
    pub constants: DetectorConstants,
    pub injection: Injection,
    pub seed: u64,
}

impl DetectorSpec {
    pub fn fit(&self, config: &GeneratorConfig) -> Result<DetectorProfile> {
        DetectorProfile::fit(&self.manifest, self.constants, self.injection.clone(), config, self.seed)
    }
}

/// The fitted oracle. Immutable; detection is a pure function of the profile,
/// the scene, and the scene's seed.
#[derive(Debug, Clone)]
pub struct DetectorProfile {
    constants: DetectorConstants,
    injection: Injection,
    catalog: AssetCatalog,
    presets: Vec<WeatherState>,
    /// Base exposure for every vehicle asset.
    base_exposure: BTreeMap<AssetRef, f64>,
    added: Vec<(ManifestKey, f64)>,
    seed: u64,
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl DetectorProfile {
    pub fn fit(
        manifest: &TrainingManifest,
        constants: DetectorConstants,
        injection: Injection,
        config: &GeneratorConfig,
        seed: u64,
    ) -> Result<Self> {
        manifest.validate()?;
        constants.validate()?;
        let catalog = config.catalog.clone();
        let mut per_asset: BTreeMap<AssetRef, f64> = BTreeMap::new();
        for (k, &v) in &manifest.counts {
            *per_asset.entry(k.asset).or_insert(0.0) += v as f64;
        }
        for (k, &v) in &manifest.added {
            *per_asset.entry(k.asset).or_insert(0.0) += v as f64;
        }
        let base_exposure = catalog
            .vehicle_assets()
            .into_iter()
            .map(|a| {
                let e = per_asset
                    .iter()
                    .map(|(&b, &n)| constants.similarity.sim(a, b) * n)
                    .sum();
                (a, e)
            })
            .collect();
        Ok(DetectorProfile {
            constants,
            injection,
            catalog,
            presets: config.weather_presets.iter().map(|p| p.state).collect(),
            base_exposure,
            added: manifest.added.iter().map(|(k, &v)| (*k, v as f64)).collect(),
            seed,
        })
    }

    pub fn constants(&self) -> &DetectorConstants {
        &self.constants
    }

    pub fn injection(&self) -> &Injection {
        &self.injection
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// A copy with a different capacity multiplier.
    pub fn with_capacity(&self, capacity: f64) -> Self {
        let mut p = self.clone();
        p.constants.capacity = capacity;
        p
    }

    fn preset_of(&self, weather: &WeatherState) -> Option<u16> {
        self.presets.iter().position(|p| p == weather).map(|i| i as u16)
    }

    /// Similarity-weighted exposure of an object.
    pub fn exposure(&self, asset: AssetRef, yaw: f64, weather: &WeatherState) -> f64 {
        let bin = rotation_bin(yaw);
        let preset = self.preset_of(weather);
        let asset_hit = self.injection.assets.contains(&asset);
        let bin_hit = self.injection.rotation_bins.contains(&bin);
        let weather_hit = preset.is_some_and(|w| self.injection.weather.contains(&w));
        if !(asset_hit || bin_hit || weather_hit) {
            return self.base_exposure.get(&asset).copied().unwrap_or(0.0);
        }
        let sim = &self.constants.similarity;
        self.added
            .iter()
            .filter(|(k, _)| (!bin_hit || k.rotation_bin == bin) && (!weather_hit || Some(k.weather) == preset))
            .map(|(k, n)| sim.sim(asset, k.asset) * n)
            .sum()
    }

    fn light(&self, weather: &WeatherState) -> f64 {
        (weather.sun_altitude + 90.0) / 180.0 - self.constants.cloud_penalty * weather.cloudiness
    }

    /// Confidence for one object, before the miss threshold.
    pub fn confidence(
        &self,
        asset: AssetRef,
        yaw: f64,
        weather: &WeatherState,
        box_height: f64,
        occluded_fraction: f64,
    ) -> f64 {
        let k = &self.constants;
        let e = self.exposure(asset, yaw, weather);
        let logit = k.bias
            + k.capacity * k.exposure_weight * (1.0 + e).ln()
            + k.size_weight * (box_height / k.size_saturation).min(1.0)
            + k.visibility_weight * (1.0 - occluded_fraction)
            + k.light_weight * self.light(weather);
        (self.catalog.detectability(asset) * logistic(logit)).clamp(0.0, 1.0)
    }

    /// Seed of the noise streams for `scene`. Counterfactual scenes keep
    /// their source's seed, so both sides of an edit share noise.
    pub fn scene_seed(&self, scene: &SceneGraph) -> u64 {
        seed::split(self.seed, scene.seed)
    }

    pub fn detect(&self, scene: &SceneGraph, labels: &LabelSet) -> Vec<Prediction> {
        self.detect_seeded(scene, labels, self.scene_seed(scene))
    }

    pub fn detect_seeded(&self, scene: &SceneGraph, labels: &LabelSet, seed: u64) -> Vec<Prediction> {
        let k = &self.constants;
        let (w, h) = (scene.camera.image_width, scene.camera.image_height);
        let mut out = Vec::new();
        for label in &labels.labels {
            let Some(agent) = scene.agent(label.agent_id) else {
                continue;
            };
            let c = self.confidence(
                agent.asset,
                agent.pose.yaw,
                &scene.weather,
                label.bbox.height(),
                label.occluded_fraction,
            );
            // noise is drawn whether or not the object is detected, so one
            // object's outcome never shifts another's stream
            let mut rng = seed::rng(seed::split(seed, u64::from(agent.id)));
            let xi: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
            if c < k.min_confidence {
                continue;
            }
            let b = label.bbox;
            let s = k.jitter * (1.0 - c);
            let (bw, bh) = (b.width(), b.height());
            let x0 = b.x_min + s * bw * xi[0];
            let y0 = b.y_min + s * bh * xi[1];
            let x1 = b.x_max + s * bw * xi[2];
            let y1 = b.y_max + s * bh * xi[3];
            let jittered = Box2D {
                x_min: x0.min(x1),
                y_min: y0.min(y1),
                x_max: x0.max(x1).max(x0.min(x1) + 1.0),
                y_max: y0.max(y1).max(y0.min(y1) + 1.0),
            };
            if let Some(bbox) = jittered.clip(w, h) {
                out.push(Prediction { bbox, confidence: c });
            }
        }
        if k.false_positive_rate > 0.0 {
            let mut rng = seed::rng(seed::split_named(seed, "false-positives"));
            let n = Poisson::new(k.false_positive_rate).expect("positive rate").sample(&mut rng) as usize;
            let [lo, hi] = k.false_positive_confidence;
            for _ in 0..n {
                let bw = rng.random_range(20.0..200.0f64).min(w);
                let bh = rng.random_range(20.0..200.0f64).min(h);
                let x = rng.random_range(0.0..=(w - bw));
                let y = rng.random_range(0.0..=(h - bh));
                let confidence = if hi > lo { rng.random_range(lo..hi) } else { lo };
                out.push(Prediction {
                    bbox: Box2D {
                        x_min: x,
                        y_min: y,
                        x_max: x + bw,
                        y_max: y + bh,
                    },
                    confidence,
                });
            }
        }
        out
    }

    fn detections(&self, dataset: &[(SceneGraph, LabelSet)]) -> Result<Vec<(Vec<Prediction>, Vec<Box2D>)>> {
        if dataset.is_empty() {
            return Err(Error::Invalid("evaluation dataset is empty".into()));
        }
        Ok(dataset
            .iter()
            .map(|(s, l)| (self.detect(s, l), l.labels.iter().map(|x| x.bbox).collect()))
            .collect())
    }

    /// AP over a labeled dataset at one IOU threshold.
    pub fn evaluate_ap(&self, dataset: &[(SceneGraph, LabelSet)], iou_threshold: f64) -> Result<ApResult> {
        Ok(average_precision(&self.detections(dataset)?, iou_threshold))
    }

    /// AP averaged over IOU thresholds (see [`coco_thresholds`]).
    pub fn evaluate_ap_over(&self, dataset: &[(SceneGraph, LabelSet)], thresholds: &[f64]) -> Result<ApResult> {
        Ok(average_precision_over(&self.detections(dataset)?, thresholds))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::Family;

    fn key(asset: AssetRef) -> ManifestKey {
        ManifestKey {
            asset,
            rotation_bin: 0,
            weather: 0,
        }
    }

    fn fit(manifest: &TrainingManifest, injection: Injection) -> DetectorProfile {
        DetectorProfile::fit(
            manifest,
            DetectorConstants::default(),
            injection,
            &GeneratorConfig::default(),
            1,
        )
        .unwrap()
    }

    #[test]
    fn kernel_spreads_exposure() {
        let cfg = GeneratorConfig::default();
        let diamondback = cfg.catalog.lookup("DiamondbackBike").unwrap();
        let gazelle = cfg.catalog.lookup("GazelleBike").unwrap();
        let cola = cfg.catalog.lookup("CarlaCola").unwrap();
        let mut m = TrainingManifest {
            total_images: 100,
            ..Default::default()
        };
        m.counts.insert(key(diamondback), 100);
        let p = fit(&m, Injection::default());
        let w = cfg.weather_presets[0].state;
        assert_eq!(p.exposure(gazelle, 0.0, &w), 50.0);
        assert_eq!(p.exposure(diamondback, 0.0, &w), 100.0);
        assert!((p.exposure(cola, 0.0, &w) - 5.0).abs() < 1e-12);
        let empty = fit(&TrainingManifest::default(), Injection::default());
        assert_eq!(empty.exposure(gazelle, 0.0, &w), 0.0);
    }

    #[test]
    fn injection_zeroes_base_but_not_added() {
        let cfg = GeneratorConfig::default();
        let gazelle = cfg.catalog.lookup("GazelleBike").unwrap();
        let sedan = AssetRef::new(Family::Sedan, 0);
        let mut m = TrainingManifest {
            total_images: 10,
            ..Default::default()
        };
        m.counts.insert(key(gazelle), 1000);
        m.counts.insert(key(sedan), 1000);
        let injection = Injection {
            assets: vec![gazelle],
            rotation_bins: vec![170],
            weather: vec![],
        };
        let w = cfg.weather_presets[0].state;
        let p = fit(&m, injection.clone());
        assert_eq!(p.exposure(gazelle, 0.0, &w), 0.0);
        assert_eq!(p.exposure(sedan, 175.0, &w), 0.0);
        assert!(p.exposure(sedan, 5.0, &w) > 1000.0);

        m.added.insert(key(gazelle), 40);
        let p = fit(&m, injection);
        assert_eq!(p.exposure(gazelle, 0.0, &w), 40.0);
        // added data in bin 0 does not reach the injected bin 170
        assert_eq!(p.exposure(gazelle, 175.0, &w), 0.0);
    }

    #[test]
    fn manifest_json_round_trip() {
        let mut m = TrainingManifest {
            total_images: 3,
            ..Default::default()
        };
        m.counts.insert(key(AssetRef::new(Family::Bike, 1)), 7);
        m.added.insert(key(AssetRef::new(Family::Heavy, 0)), 2);
        let text = serde_json::to_string(&m).unwrap();
        assert_eq!(serde_json::from_str::<TrainingManifest>(&text).unwrap(), m);
    }

    #[test]
    fn negative_constants_rejected() {
        let k = DetectorConstants {
            jitter: -0.1,
            ..Default::default()
        };
        assert!(k.validate().unwrap_err().is_config());
    }
}
