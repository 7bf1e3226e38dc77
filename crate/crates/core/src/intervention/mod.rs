//! Counterfactual intervention campaigns.
//!
//! A trial picks a scene, an attribute category and (except for weather) a
//! vehicle, masks the tokens that carry that attribute, resamples them with a
//! [`MaskedSequenceModel`], decodes, relabels and scores the edited scene
//! against the original. [`run_random_campaign`] replays the same trials with
//! uniformly random values instead, and [`aggregate_groups`] ranks attribute
//! values by how often they are involved in large score changes.

mod aggregate;
mod two_step;

pub use aggregate::{aggregate_groups, AggregateParams, GroupStats};
pub use two_step::{filter_two_step, run_two_step, PairStats, Question, TwoStepParams, TwoStepRecord, TwoStepSummary};

use crate::codec::{asset_positions, pose_positions, weather_positions, PoseScalar, SlotClass, Token, TokenSequence};
use crate::density::{mask_and_resample, resample_among, MaskedSequenceModel};
use crate::detector::DetectorProfile;
use crate::error::{Error, Result};
use crate::group::GroupKey;
use crate::scene::{AgentKind, AssetRef, GeneratorConfig, SceneGraph};
use crate::seed::{self, Rng};
use crate::world::World;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Asset,
    Rotation,
    Weather,
    Location,
}

impl Category {
    pub const ALL: [Category; 4] = [Category::Asset, Category::Rotation, Category::Weather, Category::Location];

    pub fn needs_agent(self) -> bool {
        self != Category::Weather
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Category::Asset => "asset",
            Category::Rotation => "rotation",
            Category::Weather => "weather",
            Category::Location => "location",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Mlm,
    Random,
    Forced,
}

/// The value of one edited attribute.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditValue {
    Asset(AssetRef),
    /// Degrees.
    Yaw(f64),
    /// Weather preset index.
    Weather(u16),
    /// Meters (x, y).
    Location([f64; 2]),
}

impl EditValue {
    pub fn category(&self) -> Category {
        match self {
            EditValue::Asset(_) => Category::Asset,
            EditValue::Yaw(_) => Category::Rotation,
            EditValue::Weather(_) => Category::Weather,
            EditValue::Location(_) => Category::Location,
        }
    }

    pub fn group(&self) -> GroupKey {
        match *self {
            EditValue::Asset(a) => GroupKey::Asset(a),
            EditValue::Yaw(y) => GroupKey::rotation_of(y),
            EditValue::Weather(w) => GroupKey::Weather(w),
            EditValue::Location([x, y]) => GroupKey::location_of(x, y),
        }
    }
}

/// One attribute change on one scene.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edit {
    pub category: Category,
    /// Absent for weather edits.
    pub agent_id: Option<u32>,
    pub source: EditValue,
    pub target: EditValue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionRecord {
    pub trial: u64,
    pub scene_id: u64,
    #[serde(flatten)]
    pub edit: Edit,
    pub score_before: f64,
    pub score_after: f64,
    pub delta: f64,
    pub strategy: Strategy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedTrial {
    pub trial: u64,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CampaignOutput {
    pub records: Vec<InterventionRecord>,
    pub skipped: Vec<SkippedTrial>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CategoryWeights {
    pub asset: f64,
    pub rotation: f64,
    pub weather: f64,
    pub location: f64,
}

impl Default for CategoryWeights {
    fn default() -> Self {
        CategoryWeights {
            asset: 0.4,
            rotation: 0.3,
            weather: 0.3,
            location: 0.0,
        }
    }
}

impl CategoryWeights {
    pub fn get(&self, c: Category) -> f64 {
        match c {
            Category::Asset => self.asset,
            Category::Rotation => self.rotation,
            Category::Weather => self.weather,
            Category::Location => self.location,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all: Vec<f64> = Category::ALL.iter().map(|&c| self.get(c)).collect();
        if all.iter().any(|w| !(w.is_finite() && *w >= 0.0)) || all.iter().sum::<f64>() <= 0.0 {
            return Err(Error::Config("category weights must be non-negative with a positive sum".into()));
        }
        Ok(())
    }

    /// Draw a category, ignoring `exclude`.
    pub fn sample(&self, rng: &mut Rng, exclude: Option<Category>) -> Result<Category> {
        let options: Vec<(Category, f64)> = Category::ALL
            .iter()
            .filter(|&&c| Some(c) != exclude)
            .map(|&c| (c, self.get(c)))
            .filter(|(_, w)| *w > 0.0)
            .collect();
        let total: f64 = options.iter().map(|(_, w)| w).sum();
        if options.is_empty() || !(total > 0.0) {
            return Err(Error::Config("no category with positive weight is available".into()));
        }
        let mut u = rng.random::<f64>() * total;
        for &(c, w) in &options {
            if u < w {
                return Ok(c);
            }
            u -= w;
        }
        Ok(options[options.len() - 1].0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CampaignParams {
    pub trials: usize,
    /// Sufficiency threshold; validated here, applied at aggregation.
    pub threshold: f64,
    pub weights: CategoryWeights,
    pub seed: u64,
    /// Resampling attempts per trial before it is skipped.
    pub max_attempts: u32,
}

impl Default for CampaignParams {
    fn default() -> Self {
        CampaignParams {
            trials: 2000,
            threshold: 0.2,
            weights: CategoryWeights::default(),
            seed: 0,
            max_attempts: 8,
        }
    }
}

impl CampaignParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0) {
            return Err(Error::Config(format!("threshold must be positive, got {}", self.threshold)));
        }
        if self.max_attempts == 0 {
            return Err(Error::Config("max_attempts must be at least 1".into()));
        }
        self.weights.validate()
    }
}

fn agent_index(scene: &SceneGraph, agent_id: u32) -> Result<usize> {
    scene
        .agents
        .iter()
        .position(|a| a.id == agent_id)
        .ok_or_else(|| Error::Invalid(format!("scene {} has no agent {agent_id}", scene.id)))
}

/// Current value of an attribute.
pub fn read_value(scene: &SceneGraph, category: Category, agent_id: Option<u32>, config: &GeneratorConfig) -> Result<EditValue> {
    if category == Category::Weather {
        let preset = config
            .preset_index(&scene.weather)
            .ok_or_else(|| Error::Invalid(format!("scene {} weather is not a configured preset", scene.id)))?;
        return Ok(EditValue::Weather(preset as u16));
    }
    let id = agent_id.ok_or_else(|| Error::Invalid(format!("{category} edit needs an agent")))?;
    let agent = &scene.agents[agent_index(scene, id)?];
    Ok(match category {
        Category::Asset => EditValue::Asset(agent.asset),
        Category::Rotation => EditValue::Yaw(agent.pose.yaw),
        Category::Location => EditValue::Location([agent.pose.x, agent.pose.y]),
        Category::Weather => unreachable!(),
    })
}

/// A copy of `scene` with one attribute set to `value`. Asset changes also
/// replace the agent's extents with the catalog's.
pub fn apply_edit(scene: &SceneGraph, agent_id: Option<u32>, value: EditValue, config: &GeneratorConfig) -> Result<SceneGraph> {
    let mut out = scene.clone();
    if let EditValue::Weather(w) = value {
        let preset = config
            .weather_presets
            .get(usize::from(w))
            .ok_or_else(|| Error::Invalid(format!("unknown weather preset index {w}")))?;
        out.weather = preset.state;
        return Ok(out);
    }
    let id = agent_id.ok_or_else(|| Error::Invalid(format!("{} edit needs an agent", value.category())))?;
    let i = agent_index(scene, id)?;
    let agent = &mut out.agents[i];
    match value {
        EditValue::Asset(a) => {
            let entry = config
                .catalog
                .get(a)
                .ok_or_else(|| Error::Invalid(format!("asset {a:?} is not in the catalog")))?;
            agent.asset = a;
            agent.extent = entry.extent;
            agent.kind = if a.family.is_vehicle() {
                AgentKind::Vehicle
            } else {
                AgentKind::Pedestrian
            };
        }
        EditValue::Yaw(y) => {
            if !(0.0..360.0).contains(&y) {
                return Err(Error::Range {
                    what: "yaw",
                    value: y,
                    min: 0.0,
                    max: 360.0,
                });
            }
            agent.pose.yaw = y;
        }
        EditValue::Location([x, y]) => {
            agent.pose.x = x;
            agent.pose.y = y;
        }
        EditValue::Weather(_) => unreachable!(),
    }
    Ok(out)
}

/// Token positions masked by an edit of `category` on agent slot `index`.
pub fn edit_positions(category: Category, index: Option<usize>) -> Vec<usize> {
    match category {
        Category::Asset => asset_positions(index.expect("agent edit")).to_vec(),
        Category::Rotation => pose_positions(index, PoseScalar::Yaw).to_vec(),
        Category::Weather => weather_positions().collect(),
        Category::Location => {
            let mut p = pose_positions(index, PoseScalar::X).to_vec();
            p.extend(pose_positions(index, PoseScalar::Y));
            p
        }
    }
}

/// Candidate asset token tuples: every vehicle in the catalog.
fn asset_candidates(world: &World) -> Vec<Vec<Token>> {
    let codec = world.codec();
    world
        .config()
        .catalog
        .vehicle_assets()
        .into_iter()
        .map(|a| {
            vec![
                codec.token(SlotClass::AssetFamily, a.family.index() as u32),
                codec.token(SlotClass::AssetModel, u32::from(a.model)),
            ]
        })
        .collect()
}

/// Candidate weather token tuples: every preset.
fn weather_candidates(world: &World, scene: &SceneGraph) -> Result<Vec<Vec<Token>>> {
    let mut probe = scene.clone();
    probe.agents.clear();
    world
        .config()
        .weather_presets
        .iter()
        .map(|p| {
            probe.weather = p.state;
            Ok(world.codec().encode(&probe)?.tokens[weather_positions()].to_vec())
        })
        .collect()
}

/// Model-sampled edit of one attribute. Asset and weather edits never keep
/// the original value and are restricted to catalog assets and presets.
pub fn mlm_edit<M: MaskedSequenceModel + ?Sized>(
    world: &World,
    model: &M,
    scene: &SceneGraph,
    seq: &TokenSequence,
    category: Category,
    agent_id: Option<u32>,
    rng: &mut Rng,
) -> Result<(Edit, SceneGraph)> {
    let index = agent_id.map(|id| agent_index(scene, id)).transpose()?;
    let positions = edit_positions(category, index);
    let edited = match category {
        Category::Asset => resample_among(model, seq, &positions, &asset_candidates(world), rng, true)?,
        Category::Weather => resample_among(model, seq, &positions, &weather_candidates(world, scene)?, rng, true)?,
        Category::Rotation | Category::Location => mask_and_resample(model, seq, &positions, rng, false)?,
    };
    let after = world.codec().decode(&edited, scene)?;
    let config = world.config();
    let edit = Edit {
        category,
        agent_id,
        source: read_value(scene, category, agent_id, config)?,
        target: read_value(&after, category, agent_id, config)?,
    };
    Ok((edit, after))
}

fn pick_vehicle(scene: &SceneGraph, rng: &mut Rng) -> Option<u32> {
    let ids: Vec<u32> = scene.vehicles().map(|a| a.id).collect();
    (!ids.is_empty()).then(|| ids[rng.random_range(0..ids.len())])
}

/// Per-scene caches of encodings and unedited scores.
struct SceneCache<'a> {
    world: &'a World,
    detector: &'a DetectorProfile,
    scenes: &'a [SceneGraph],
    seqs: Vec<Option<TokenSequence>>,
    scores: Vec<Option<f64>>,
}

impl<'a> SceneCache<'a> {
    fn new(world: &'a World, detector: &'a DetectorProfile, scenes: &'a [SceneGraph]) -> Self {
        SceneCache {
            world,
            detector,
            scenes,
            seqs: vec![None; scenes.len()],
            scores: vec![None; scenes.len()],
        }
    }

    fn seq(&mut self, i: usize) -> Result<&TokenSequence> {
        if self.seqs[i].is_none() {
            self.seqs[i] = Some(self.world.codec().encode(&self.scenes[i])?);
        }
        Ok(self.seqs[i].as_ref().expect("filled"))
    }

    fn score(&mut self, i: usize) -> Result<f64> {
        if let Some(s) = self.scores[i] {
            return Ok(s);
        }
        let s = self.world.score(self.detector, &self.scenes[i])?;
        self.scores[i] = Some(s);
        Ok(s)
    }
}

/// Errors that make one trial unusable without invalidating the campaign.
fn is_trial_local(e: &Error) -> bool {
    matches!(e, Error::Range { .. } | Error::EmptySupport { .. } | Error::Layout(_))
}

fn record(trial: u64, scene: &SceneGraph, edit: Edit, before: f64, after: f64, strategy: Strategy) -> InterventionRecord {
    InterventionRecord {
        trial,
        scene_id: scene.id,
        edit,
        score_before: before,
        score_after: after,
        delta: crate::score::delta(after, before),
        strategy,
    }
}

/// Single-step campaign. Trial `t` draws from `split(params.seed, t)`, so
/// records do not depend on evaluation order.
pub fn run_campaign<M: MaskedSequenceModel + ?Sized>(
    world: &World,
    scenes: &[SceneGraph],
    model: &M,
    detector: &DetectorProfile,
    params: &CampaignParams,
) -> Result<CampaignOutput> {
    params.validate()?;
    if model.schema().hash() != world.codec().schema().hash() {
        return Err(Error::SchemaMismatch {
            expected: world.codec().schema().hash(),
            found: model.schema().hash(),
        });
    }
    let mut out = CampaignOutput::default();
    if params.trials == 0 {
        return Ok(out);
    }
    if scenes.is_empty() {
        return Err(Error::Invalid("campaign needs at least one scene".into()));
    }
    let mut cache = SceneCache::new(world, detector, scenes);
    for trial in 0..params.trials as u64 {
        let mut rng = seed::rng(seed::split(params.seed, trial));
        let i = rng.random_range(0..scenes.len());
        let scene = &scenes[i];
        let category = params.weights.sample(&mut rng, None)?;
        let agent_id = if category.needs_agent() {
            match pick_vehicle(scene, &mut rng) {
                Some(id) => Some(id),
                None => {
                    log::debug!("trial {trial}: scene {} has no vehicle", scene.id);
                    out.skipped.push(SkippedTrial {
                        trial,
                        reason: "no eligible vehicle".into(),
                    });
                    continue;
                }
            }
        } else {
            None
        };
        let seq = cache.seq(i)?.clone();
        let mut outcome = None;
        let mut last_reason = String::new();
        for _ in 0..params.max_attempts {
            match mlm_edit(world, model, scene, &seq, category, agent_id, &mut rng) {
                Ok(done) => {
                    outcome = Some(done);
                    break;
                }
                Err(e) if is_trial_local(&e) => last_reason = e.to_string(),
                Err(e) => return Err(e),
            }
        }
        let Some((edit, after)) = outcome else {
            log::debug!("trial {trial}: {last_reason}");
            out.skipped.push(SkippedTrial {
                trial,
                reason: last_reason,
            });
            continue;
        };
        if after == *scene {
            log::debug!("trial {trial}: edit left the scene unchanged");
            out.skipped.push(SkippedTrial {
                trial,
                reason: "no-op edit".into(),
            });
            continue;
        }
        let before = cache.score(i)?;
        let score_after = world.score(detector, &after)?;
        out.records.push(record(trial, scene, edit, before, score_after, Strategy::Mlm));
    }
    log::info!(
        "campaign: {} records, {} skipped trials",
        out.records.len(),
        out.skipped.len()
    );
    Ok(out)
}

/// A uniformly random value of `category` different from `source` where
/// that is meaningful.
pub fn random_value(config: &GeneratorConfig, source: EditValue, rng: &mut Rng) -> Result<EditValue> {
    Ok(match source {
        EditValue::Asset(a) => {
            let options: Vec<AssetRef> = config.catalog.vehicle_assets().into_iter().filter(|&b| b != a).collect();
            if options.is_empty() {
                return Err(Error::EmptySupport { position: 0 });
            }
            EditValue::Asset(options[rng.random_range(0..options.len())])
        }
        EditValue::Yaw(_) => EditValue::Yaw(f64::from(rng.random_range(0..3600u32)) / 10.0),
        EditValue::Weather(w) => {
            let options: Vec<u16> = (0..config.weather_presets.len() as u16).filter(|&p| p != w).collect();
            if options.is_empty() {
                return Err(Error::EmptySupport { position: 0 });
            }
            EditValue::Weather(options[rng.random_range(0..options.len())])
        }
        EditValue::Location(_) => {
            let mut coord = || config.min_coord + f64::from(rng.random_range(0..6000u32)) / 10.0;
            EditValue::Location([coord(), coord()])
        }
    })
}

/// Replay each record with a uniformly random value of the same category on
/// the same agent of the same scene.
pub fn run_random_campaign(
    world: &World,
    records: &[InterventionRecord],
    scenes: &[SceneGraph],
    detector: &DetectorProfile,
    seed: u64,
) -> Result<CampaignOutput> {
    let by_id: HashMap<u64, usize> = scenes.iter().enumerate().map(|(i, s)| (s.id, i)).collect();
    let mut cache = SceneCache::new(world, detector, scenes);
    let mut out = CampaignOutput::default();
    for r in records {
        let i = *by_id
            .get(&r.scene_id)
            .ok_or_else(|| Error::Invalid(format!("record {} names unknown scene {}", r.trial, r.scene_id)))?;
        let scene = &scenes[i];
        let mut rng = seed::rng(seed::split(seed, r.trial));
        let source = read_value(scene, r.edit.category, r.edit.agent_id, world.config())?;
        let target = random_value(world.config(), source, &mut rng)?;
        let after = apply_edit(scene, r.edit.agent_id, target, world.config())?;
        if after == *scene {
            out.skipped.push(SkippedTrial {
                trial: r.trial,
                reason: "no-op edit".into(),
            });
            continue;
        }
        let edit = Edit {
            category: r.edit.category,
            agent_id: r.edit.agent_id,
            source,
            target,
        };
        let before = cache.score(i)?;
        let score_after = world.score(detector, &after)?;
        out.records.push(record(r.trial, scene, edit, before, score_after, Strategy::Random));
    }
    Ok(out)
}
