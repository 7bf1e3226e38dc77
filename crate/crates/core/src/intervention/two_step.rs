//! Two-step interventions: a forced first edit from a fixed set, then a
//! model-sampled second edit of a different category.
//!
//! With `f0, f1, f2` the scores of the original, once-edited and twice-edited
//! scenes, `delta_kj = f_j − f_k`. So `delta_10 = f0 − f1` is positive when
//! the first edit hurt, and `delta_20 = delta_10 + delta_21`.

use super::{apply_edit, mlm_edit, pick_vehicle, read_value, Category, CategoryWeights, Edit, EditValue, SceneCache};
use crate::density::MaskedSequenceModel;
use crate::detector::DetectorProfile;
use crate::error::{Error, Result};
use crate::group::GroupKey;
use crate::scene::{rotation_bin, rotation_bin_center, SceneGraph};
use crate::seed;
use crate::world::World;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoStepParams {
    /// The set first edits are drawn from, uniformly.
    pub first_edits: Vec<GroupKey>,
    pub trials: usize,
    pub weights: CategoryWeights,
    pub seed: u64,
    pub max_attempts: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoStepRecord {
    pub trial: u64,
    pub scene_id: u64,
    pub first_group: GroupKey,
    pub first: Edit,
    pub second: Edit,
    /// Scores of the original, once-edited and twice-edited scene.
    pub scores: [f64; 3],
    pub delta_10: f64,
    pub delta_21: f64,
    pub delta_20: f64,
}

impl TwoStepRecord {
    fn new(trial: u64, scene_id: u64, first_group: GroupKey, first: Edit, second: Edit, scores: [f64; 3]) -> Self {
        let [f0, f1, f2] = scores;
        TwoStepRecord {
            trial,
            scene_id,
            first_group,
            first,
            second,
            scores,
            delta_10: f0 - f1,
            delta_21: f1 - f2,
            delta_20: f0 - f2,
        }
    }
}

fn category_of(group: &GroupKey) -> Category {
    match group {
        GroupKey::Asset(_) => Category::Asset,
        GroupKey::Rotation(_) => Category::Rotation,
        GroupKey::Weather(_) => Category::Weather,
        GroupKey::Location(_) => Category::Location,
    }
}

/// Set one attribute to `group`'s value. Rotation bins land on the bin
/// center. Returns `None` when the scene offers nothing to change.
fn forced_edit(world: &World, scene: &SceneGraph, group: GroupKey, rng: &mut seed::Rng) -> Result<Option<(Edit, SceneGraph)>> {
    let config = world.config();
    let candidates: Vec<u32> = match group {
        GroupKey::Asset(a) => scene.vehicles().filter(|v| v.asset != a).map(|v| v.id).collect(),
        GroupKey::Rotation(b) => scene.vehicles().filter(|v| rotation_bin(v.pose.yaw) != b).map(|v| v.id).collect(),
        GroupKey::Weather(_) => Vec::new(),
        GroupKey::Location(_) => {
            return Err(Error::Config("location groups cannot be forced first edits".into()));
        }
    };
    let (agent_id, target) = match group {
        GroupKey::Asset(a) => (candidates.get(rng.random_range(0..candidates.len().max(1))).copied(), EditValue::Asset(a)),
        GroupKey::Rotation(b) => (
            candidates.get(rng.random_range(0..candidates.len().max(1))).copied(),
            EditValue::Yaw(rotation_bin_center(b)),
        ),
        GroupKey::Weather(w) => {
            if config.preset_index(&scene.weather) == Some(usize::from(w)) {
                return Ok(None);
            }
            (None, EditValue::Weather(w))
        }
        GroupKey::Location(_) => unreachable!(),
    };
    let category = category_of(&group);
    if category.needs_agent() && agent_id.is_none() {
        return Ok(None);
    }
    let source = read_value(scene, category, agent_id, config)?;
    let after = apply_edit(scene, agent_id, target, config)?;
    Ok(Some((
        Edit {
            category,
            agent_id,
            source,
            target,
        },
        after,
    )))
}

pub fn run_two_step<M: MaskedSequenceModel + ?Sized>(
    world: &World,
    scenes: &[SceneGraph],
    model: &M,
    detector: &DetectorProfile,
    params: &TwoStepParams,
) -> Result<Vec<TwoStepRecord>> {
    if params.first_edits.is_empty() {
        return Err(Error::Config("the first-edit set is empty".into()));
    }
    params.weights.validate()?;
    if params.first_edits.iter().any(|g| matches!(g, GroupKey::Location(_))) {
        return Err(Error::Config("location groups cannot be forced first edits".into()));
    }
    if params.trials > 0 && scenes.is_empty() {
        return Err(Error::Invalid("two-step campaign needs at least one scene".into()));
    }
    let mut cache = SceneCache::new(world, detector, scenes);
    let mut out = Vec::new();
    for trial in 0..params.trials as u64 {
        let mut rng = seed::rng(seed::split(params.seed, trial));
        let i = rng.random_range(0..scenes.len());
        let scene = &scenes[i];
        let group = params.first_edits[rng.random_range(0..params.first_edits.len())];
        let Some((first, scene1)) = forced_edit(world, scene, group, &mut rng)? else {
            log::debug!("two-step trial {trial}: nothing to force in scene {}", scene.id);
            continue;
        };
        let category = params.weights.sample(&mut rng, Some(first.category))?;
        let agent_id = if category.needs_agent() {
            match pick_vehicle(&scene1, &mut rng) {
                Some(id) => Some(id),
                None => continue,
            }
        } else {
            None
        };
        let seq1 = world.codec().encode(&scene1)?;
        let mut second = None;
        for _ in 0..params.max_attempts.max(1) {
            match mlm_edit(world, model, &scene1, &seq1, category, agent_id, &mut rng) {
                Ok(done) => {
                    second = Some(done);
                    break;
                }
                Err(e) if super::is_trial_local(&e) => log::debug!("two-step trial {trial}: {e}"),
                Err(e) => return Err(e),
            }
        }
        let Some((second, scene2)) = second else {
            continue;
        };
        if scene2 == scene1 {
            continue;
        }
        let f0 = cache.score(i)?;
        let f1 = world.score(detector, &scene1)?;
        let f2 = world.score(detector, &scene2)?;
        out.push(TwoStepRecord::new(trial, scene.id, group, first, second, [f0, f1, f2]));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Question {
    /// The first edit hurt by at least `t1` and the second by at least `t2`.
    BothHurt,
    /// The pair together hurt by at least `t2`.
    JointlyHurt,
    /// The first edit hurt by at least `t1` and the second did not help.
    SecondDidNotHelp,
}

impl Question {
    pub fn from_id(id: u8) -> Result<Question> {
        match id {
            1 => Ok(Question::BothHurt),
            2 => Ok(Question::JointlyHurt),
            3 => Ok(Question::SecondDidNotHelp),
            _ => Err(Error::Config(format!("unknown two-step question {id}; expected 1, 2 or 3"))),
        }
    }

    pub fn passes(self, r: &TwoStepRecord, t1: f64, t2: f64) -> bool {
        match self {
            Question::BothHurt => r.delta_10 >= t1 && r.delta_21 >= t2,
            Question::JointlyHurt => r.delta_20 >= t2,
            Question::SecondDidNotHelp => r.delta_21 >= 0.0 && r.delta_10 >= t1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairStats {
    /// In the per-second-edit table this repeats `second`.
    pub first: GroupKey,
    pub second: GroupKey,
    pub total: usize,
    pub passed: usize,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoStepSummary {
    pub question: Question,
    /// Per (first group, second target group).
    pub pairs: Vec<PairStats>,
    /// Per second target group.
    pub seconds: Vec<PairStats>,
    pub passed_trials: Vec<u64>,
}

pub fn filter_two_step(records: &[TwoStepRecord], question: Question, t1: f64, t2: f64) -> TwoStepSummary {
    let mut pairs: BTreeMap<(GroupKey, GroupKey), (usize, usize)> = BTreeMap::new();
    let mut seconds: BTreeMap<GroupKey, (usize, usize)> = BTreeMap::new();
    let mut passed_trials = Vec::new();
    for r in records {
        let pass = question.passes(r, t1, t2);
        let second = r.second.target.group();
        let p = pairs.entry((r.first_group, second)).or_default();
        let s = seconds.entry(second).or_default();
        p.0 += 1;
        s.0 += 1;
        if pass {
            p.1 += 1;
            s.1 += 1;
            passed_trials.push(r.trial);
        }
    }
    let stats = |first, second, (total, passed): (usize, usize)| PairStats {
        first,
        second,
        total,
        passed,
        percent: 100.0 * passed as f64 / total as f64,
    };
    let order = |a: &PairStats, b: &PairStats| {
        b.percent
            .total_cmp(&a.percent)
            .then(b.total.cmp(&a.total))
            .then((a.first, a.second).cmp(&(b.first, b.second)))
    };
    let mut pairs: Vec<PairStats> = pairs.into_iter().map(|((f, s), c)| stats(f, s, c)).collect();
    let mut seconds: Vec<PairStats> = seconds.into_iter().map(|(s, c)| stats(s, s, c)).collect();
    pairs.sort_by(order);
    seconds.sort_by(order);
    TwoStepSummary {
        question,
        pairs,
        seconds,
        passed_trials,
    }
}
