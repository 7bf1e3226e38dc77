//! Run configuration: one TOML file holds every seed, size and constant a
//! pipeline run uses.

use crate::detector::{DetectorConstants, InjectionSpec};
use crate::error::{Error, Result};
use crate::geometry::SensorConfig;
use crate::group::GroupKey;
use crate::intervention::{AggregateParams, CampaignParams, CategoryWeights};
use crate::io::sha256_hex;
use crate::scene::GeneratorConfig;
use crate::world::World;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    pub generation: u64,
    pub density: u64,
    pub campaign: u64,
    pub random: u64,
    pub two_step: u64,
    pub detector: u64,
    pub manifest: u64,
    pub selection: u64,
    pub collection: u64,
    pub evaluation: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds {
            generation: 1,
            density: 2,
            campaign: 3,
            random: 4,
            two_step: 5,
            detector: 6,
            manifest: 7,
            selection: 8,
            collection: 9,
            evaluation: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CampaignSection {
    pub trials: usize,
    pub threshold: f64,
    pub min_count: usize,
    pub weights: CategoryWeights,
    pub tier_cuts: Vec<f64>,
    pub include_location: bool,
    pub count_same_group_twice: bool,
    pub max_attempts: u32,
}

impl Default for CampaignSection {
    fn default() -> Self {
        let agg = AggregateParams::default();
        CampaignSection {
            trials: 2000,
            threshold: 0.2,
            min_count: agg.min_count,
            weights: CategoryWeights::default(),
            tier_cuts: agg.tier_cuts,
            include_location: false,
            count_same_group_twice: false,
            max_attempts: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TwoStepSection {
    /// Group labels such as `"Asset GazelleBike"`.
    pub first_edits: Vec<String>,
    pub trials: usize,
    pub first_threshold: f64,
    pub second_threshold: f64,
}

impl Default for TwoStepSection {
    fn default() -> Self {
        TwoStepSection {
            first_edits: vec!["Weather CloudyDark".into(), "Rotation 170".into()],
            trials: 1000,
            first_threshold: 0.2,
            second_threshold: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorSection {
    pub constants: DetectorConstants,
    pub injection: InjectionSpec,
    /// IID scenes behind the base training manifest.
    pub manifest_scenes: usize,
}

impl Default for DetectorSection {
    fn default() -> Self {
        DetectorSection {
            constants: DetectorConstants::default(),
            injection: InjectionSpec::default(),
            manifest_scenes: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurationSection {
    pub thresholds: Vec<f64>,
    pub pool_scenes: usize,
    pub per_bucket: usize,
    pub group_scenes: usize,
    /// Scenes in the evaluation pool group datasets are built from.
    pub eval_scenes: usize,
}

impl Default for CurationSection {
    fn default() -> Self {
        CurationSection {
            thresholds: vec![0.2, 0.4, 0.6, 0.8],
            pool_scenes: 15_000,
            per_bucket: 1000,
            group_scenes: 500,
            eval_scenes: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scenes: usize,
    pub density_scenes: usize,
    pub alpha: f64,
    pub iou_threshold: f64,
    pub seeds: Seeds,
    pub campaign: CampaignSection,
    pub two_step: TwoStepSection,
    pub detector: DetectorSection,
    pub curation: CurationSection,
    pub generator: GeneratorConfig,
    pub sensor: SensorConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            scenes: 2000,
            density_scenes: 10_000,
            alpha: crate::density::DEFAULT_ALPHA,
            iou_threshold: 0.5,
            seeds: Seeds::default(),
            campaign: CampaignSection::default(),
            two_step: TwoStepSection::default(),
            detector: DetectorSection::default(),
            curation: CurationSection::default(),
            generator: GeneratorConfig::default(),
            sensor: SensorConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::load_with(Some(path), &[])
    }

    /// Load `path` (or the defaults) and apply `key.path=value` overrides.
    /// Values are parsed as TOML and fall back to plain strings.
    pub fn load_with(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("cannot read config {}: {e}", p.display())))?,
            None => String::new(),
        };
        let mut doc: toml::Table = toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        Self::from_toml(&toml::to_string(&doc).map_err(|e| Error::Config(e.to_string()))?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.generator.validate()?;
        self.sensor.validate()?;
        self.detector.constants.validate()?;
        self.campaign_params().validate()?;
        self.aggregate_params().validate()?;
        if !(self.alpha > 0.0) {
            return Err(Error::Config("alpha must be positive".into()));
        }
        if !(self.iou_threshold > 0.0 && self.iou_threshold <= 1.0) {
            return Err(Error::Config("iou_threshold must lie in (0, 1]".into()));
        }
        if !(self.two_step.first_threshold > 0.0 && self.two_step.second_threshold > 0.0) {
            return Err(Error::Config("two-step thresholds must be positive".into()));
        }
        self.detector.injection.resolve(&self.generator)?;
        self.first_edits()?;
        Ok(())
    }

    /// Hash of the canonical JSON form; recorded in every artifact header.
    pub fn hash(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("config serializes").as_bytes())
    }

    pub fn world(&self) -> Result<World> {
        World::new(self.generator.clone(), self.sensor)
    }

    pub fn campaign_params(&self) -> CampaignParams {
        CampaignParams {
            trials: self.campaign.trials,
            threshold: self.campaign.threshold,
            weights: self.campaign.weights,
            seed: self.seeds.campaign,
            max_attempts: self.campaign.max_attempts,
        }
    }

    pub fn aggregate_params(&self) -> AggregateParams {
        AggregateParams {
            threshold: self.campaign.threshold,
            min_count: self.campaign.min_count,
            tier_cuts: self.campaign.tier_cuts.clone(),
            include_location: self.campaign.include_location,
            count_same_group_twice: self.campaign.count_same_group_twice,
        }
    }

    pub fn first_edits(&self) -> Result<Vec<GroupKey>> {
        self.two_step
            .first_edits
            .iter()
            .map(|t| GroupKey::parse(t, &self.generator).map_err(|e| Error::Config(e.to_string())))
            .collect()
    }
}

fn apply_override(doc: &mut toml::Table, text: &str) -> Result<()> {
    let (key, raw) = text
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {text:?} is not key=value")))?;
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.trim().split('.').collect();
    let (last, path) = parts.split_last().expect("split yields one part");
    let mut table = doc;
    for p in path {
        table = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override {key}: {p} is not a table")))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_toml() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        let back = RunConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn partial_file_fills_defaults() {
        let cfg = RunConfig::from_toml("scenes = 50\n[campaign]\ntrials = 10\n").unwrap();
        assert_eq!(cfg.scenes, 50);
        assert_eq!(cfg.campaign.trials, 10);
        assert_eq!(cfg.campaign.threshold, 0.2);
    }

    #[test]
    fn overrides_apply_on_top_of_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.toml");
        std::fs::write(&p, "scenes = 50\n[campaign]\ntrials = 10\n").unwrap();
        let sets = ["campaign.trials=99".to_string(), "two_step.first_edits=[\"Weather CloudyDark\"]".to_string()];
        let cfg = RunConfig::load_with(Some(&p), &sets).unwrap();
        assert_eq!((cfg.scenes, cfg.campaign.trials), (50, 99));
        assert_eq!(cfg.two_step.first_edits, vec!["Weather CloudyDark".to_string()]);
        assert!(RunConfig::load_with(None, &["scenes".into()]).unwrap_err().is_config());
    }

    #[test]
    fn bad_values_are_config_errors() {
        assert!(RunConfig::from_toml("[campaign]\nthreshold = 0.0\n").unwrap_err().is_config());
        assert!(RunConfig::from_toml("bogus = 1\n").unwrap_err().is_config());
        assert!(RunConfig::from_toml("[detector.injection]\nassets = [\"Unicycle\"]\n")
            .unwrap_err()
            .is_config());
    }
}
