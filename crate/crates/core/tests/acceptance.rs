//! Acceptance suite: one test per criterion, each printing a single
//! `criterion N: PASS|FAIL` line on stderr (bypassing libtest capture so the
//! lines show up in ordinary `cargo test` output).
//!
//! The expensive setup (density model, detector, 2 000-trial campaign) is
//! built once and shared through a `OnceLock`.

use counterscene::codec::{SlotClass, TokenSequence};
use counterscene::curation::{build_group_dataset, build_manifest, cause_agnostic_collect, DatasetSpec, ManifestPart};
use counterscene::density::{mask_and_resample, perplexity, ReferenceDensityModel};
use counterscene::detector::{
    coco_thresholds, DetectorConstants, DetectorProfile, Injection, InjectionSpec, Prediction, TrainingManifest,
};
use counterscene::geometry::{derive_labels_with, Box2D, DepthBuffer, FilterThresholds, FilterVerdict, Label, LabelSet, SensorConfig};
use counterscene::group::GroupKey;
use counterscene::intervention::{
    aggregate_groups, apply_edit, filter_two_step, run_campaign, run_random_campaign, run_two_step, AggregateParams,
    CampaignOutput, CampaignParams, Category, CategoryWeights, EditValue, InterventionRecord, Question, TwoStepParams,
};
use counterscene::scene::{AgentKind, AgentNode, AssetRef, CameraModel, Family, GeneratorConfig, Pose, SceneGraph};
use counterscene::score::score_example;
use counterscene::seed;
use counterscene::world::World;
use rand::Rng as _;
use std::collections::{BTreeMap, HashMap};
use std::io::Write as _;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

fn verdict(criterion: u8, pass: bool, detail: &str) {
    let line = format!("criterion {criterion:>2}: {} | {detail}\n", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(pass, "criterion {criterion} failed: {detail}");
}

const BIKES: [&str; 3] = ["DiamondbackBike", "GazelleBike", "CrossBike"];
const HEAVY: [&str; 5] = ["Cybertruck", "CarlaCola", "VolkswagenT2", "NissanPatrol", "JeepWrangler"];
const THRESHOLD: f64 = 0.2;

/// Shared experiment state for criteria 3, 5, 6.
struct Lab {
    world: World,
    model: ReferenceDensityModel,
    train: Vec<TokenSequence>,
    injection: Injection,
    detector: DetectorProfile,
    scenes: Vec<SceneGraph>,
    campaign: CampaignOutput,
}

fn lab() -> &'static Lab {
    static LAB: OnceLock<Lab> = OnceLock::new();
    LAB.get_or_init(|| {
        let world = World::new(GeneratorConfig::default(), SensorConfig::default()).unwrap();
        let train: Vec<TokenSequence> = world
            .generator()
            .scenes(10_000, 101)
            .iter()
            .map(|s| world.codec().encode(s).unwrap())
            .collect();
        let model = ReferenceDensityModel::train(world.codec().schema().clone(), &train, 0.1).unwrap();
        let injection = InjectionSpec {
            assets: BIKES.iter().map(|s| s.to_string()).collect(),
            rotations: vec![175.0],
            weather: vec!["CloudyDark".into()],
        }
        .resolve(world.config())
        .unwrap();
        let manifest = DatasetSpec::iid(10_000, 202).manifest(&world).unwrap();
        let detector = fit(&world, &manifest, &injection);
        let scenes = world.generator().scenes(2000, 303);
        let params = CampaignParams {
            trials: 2000,
            threshold: THRESHOLD,
            weights: CategoryWeights::default(),
            seed: 404,
            max_attempts: 8,
        };
        let campaign = run_campaign(&world, &scenes, &model, &detector, &params).unwrap();
        Lab {
            world,
            model,
            train,
            injection,
            detector,
            scenes,
            campaign,
        }
    })
}

fn fit(world: &World, manifest: &TrainingManifest, injection: &Injection) -> DetectorProfile {
    DetectorProfile::fit(manifest, DetectorConstants::default(), injection.clone(), world.config(), 7).unwrap()
}

fn asset(world: &World, name: &str) -> GroupKey {
    GroupKey::Asset(world.config().catalog.lookup(name).unwrap())
}

// ---------------------------------------------------------------- criterion 1

#[test]
fn criterion_01_codec_exactness() {
    let start = Instant::now();
    let world = World::new(GeneratorConfig::default(), SensorConfig::default()).unwrap();
    let scenes = world.generator().scenes(10_000, 1);
    let mut worst_pose = 0.0f64;
    let mut discrete_ok = true;
    let mut tokens_ok = true;
    for s in &scenes {
        let seq = world.codec().encode(s).unwrap();
        let back = world.codec().decode(&seq, s).unwrap();
        discrete_ok &= back.weather == s.weather && back.camera == s.camera && back.map == s.map;
        discrete_ok &= back.agents.len() == s.agents.len() && back.ego.asset == s.ego.asset;
        let pairs = std::iter::once((&back.ego, &s.ego)).chain(back.agents.iter().zip(&s.agents));
        for (p, q) in pairs {
            discrete_ok &= p.id == q.id && p.kind == q.kind && p.asset == q.asset && p.extent == q.extent;
            for (x, y) in p.pose.to_array().iter().zip(q.pose.to_array()) {
                let mut d = (x - y).abs();
                if d > 180.0 {
                    // yaw wraps at 360
                    d = 360.0 - d;
                }
                worst_pose = worst_pose.max(d);
            }
        }
        tokens_ok &= world.codec().encode(&back).unwrap() == seq;
    }
    let elapsed = start.elapsed();
    let pass = worst_pose <= 0.1 && discrete_ok && tokens_ok && elapsed < Duration::from_secs(60);
    verdict(
        1,
        pass,
        &format!(
            "10000 scenes, max pose error {worst_pose:.4}, discrete exact {discrete_ok}, token round trip {tokens_ok}, {:.1}s",
            elapsed.as_secs_f64()
        ),
    );
}

// ---------------------------------------------------------------- criterion 2

/// Brute-force scorer written from the rules alone.
fn oracle_score(preds: &[(Box2D, f64)], gts: &[Box2D]) -> f64 {
    if preds.is_empty() {
        return if gts.is_empty() { 1.0 } else { 0.0 };
    }
    let iou = |a: &Box2D, b: &Box2D| {
        let w = (a.x_max.min(b.x_max) - a.x_min.max(b.x_min)).max(0.0);
        let h = (a.y_max.min(b.y_max) - a.y_min.max(b.y_min)).max(0.0);
        let inter = w * h;
        let area = |r: &Box2D| (r.x_max - r.x_min) * (r.y_max - r.y_min);
        inter / (area(a) + area(b) - inter)
    };
    let mut order: Vec<usize> = (0..preds.len()).collect();
    // stable sort: confidence descending, then larger area, then input order
    order.sort_by(|&i, &j| {
        let area = |k: usize| (preds[k].0.x_max - preds[k].0.x_min) * (preds[k].0.y_max - preds[k].0.y_min);
        preds[j].1.partial_cmp(&preds[i].1).unwrap().then(area(j).partial_cmp(&area(i)).unwrap())
    });
    let mut claimed = vec![false; gts.len()];
    let mut sum = 0.0;
    for i in order {
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if claimed[g] {
                continue;
            }
            let v = iou(&preds[i].0, gt);
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((g, v));
            }
        }
        if let Some((g, v)) = best {
            sum += preds[i].1 * v;
            if v > 0.05 {
                claimed[g] = true;
            }
        }
    }
    sum / preds.len() as f64
}

fn labels_of(boxes: &[Box2D]) -> LabelSet {
    LabelSet {
        scene_id: 0,
        labels: boxes
            .iter()
            .enumerate()
            .map(|(i, b)| Label {
                agent_id: i as u32 + 1,
                bbox: *b,
                closest_depth: 10.0,
                visible_pixels: 5000,
                occluded_fraction: 0.0,
            })
            .collect(),
    }
}

type Case = (Vec<(Box2D, f64)>, Vec<Box2D>, f64);

fn bx(x0: f64, y0: f64, x1: f64, y1: f64) -> Box2D {
    Box2D::new(x0, y0, x1, y1).unwrap()
}

#[test]
fn criterion_02_scoring_golden() {
    let gt = bx(0.0, 0.0, 10.0, 10.0);
    let fixed: Vec<Case> = vec![
        (vec![(gt, 1.0)], vec![gt], 1.0),
        (vec![(bx(0.0, 0.0, 10.0, 8.0), 0.9), (bx(20.0, 20.0, 30.0, 30.0), 0.5)], vec![gt], 0.36),
        (vec![(bx(0.0, 0.0, 10.0, 0.4), 0.7)], vec![gt], 0.028),
    ];
    let mut cases = fixed.clone();
    let mut rng = seed::rng(seed::split_named(2, "scoring-golden"));
    for _ in 0..20 {
        let random_box = |rng: &mut seed::Rng| {
            let x = rng.random_range(0.0..80.0);
            let y = rng.random_range(0.0..80.0);
            bx(x, y, x + rng.random_range(2.0..30.0), y + rng.random_range(2.0..30.0))
        };
        let gts: Vec<Box2D> = (0..rng.random_range(0..5)).map(|_| random_box(&mut rng)).collect();
        let mut preds: Vec<(Box2D, f64)> = Vec::new();
        for _ in 0..rng.random_range(0..7) {
            // half the predictions are jittered copies of a ground-truth box
            let b = match gts.len() {
                n if n > 0 && rng.random_bool(0.5) => {
                    let g = gts[rng.random_range(0..n)];
                    let j = rng.random_range(0.0..4.0);
                    bx(g.x_min + j, g.y_min, g.x_max + j, g.y_max - j / 2.0)
                }
                _ => random_box(&mut rng),
            };
            preds.push((b, rng.random_range(0.0..1.0)));
        }
        let expected = oracle_score(&preds, &gts);
        cases.push((preds, gts, expected));
    }
    let mut worst = 0.0f64;
    for (i, (preds, gts, expected)) in cases.iter().enumerate() {
        let p: Vec<Prediction> = preds.iter().map(|&(bbox, confidence)| Prediction { bbox, confidence }).collect();
        let got = score_example(&p, &labels_of(gts)).unwrap().score;
        let oracle = oracle_score(preds, gts);
        let err = (got - oracle).abs().max((got - expected).abs());
        if i < 3 {
            // the hand-computed values pin the oracle too
            assert!((oracle - expected).abs() < 1e-12, "oracle disagrees with hand value in case {i}");
        }
        worst = worst.max(err);
    }
    verdict(2, worst <= 1e-9, &format!("3 fixed + 20 randomized cases, max |error| {worst:.2e}"));
}

// ---------------------------------------------------------------- criterion 3

#[test]
fn criterion_03_delta_algebra() {
    let lab = lab();
    let random = run_random_campaign(&lab.world, &lab.campaign.records, &lab.scenes, &lab.detector, 4040).unwrap();
    let in_range = |r: &InterventionRecord| (-1.0..=1.0).contains(&r.delta);
    let campaign_ok = lab.campaign.records.iter().all(in_range) && random.records.iter().all(in_range);

    let first_edits = vec![
        GroupKey::parse("Weather CloudyDark", lab.world.config()).unwrap(),
        GroupKey::parse("Rotation 170", lab.world.config()).unwrap(),
    ];
    let params = TwoStepParams {
        first_edits,
        trials: 1000,
        weights: CategoryWeights::default(),
        seed: 505,
        max_attempts: 8,
    };
    let two = run_two_step(&lab.world, &lab.scenes, &lab.model, &lab.detector, &params).unwrap();
    let worst_telescope = two
        .iter()
        .map(|r| (r.delta_20 - (r.delta_10 + r.delta_21)).abs())
        .fold(0.0f64, f64::max);
    let two_range = two
        .iter()
        .all(|r| [r.delta_10, r.delta_21, r.delta_20].iter().all(|d| (-1.0..=1.0).contains(d)));
    let q1 = filter_two_step(&two, Question::BothHurt, THRESHOLD, THRESHOLD);
    let retained: Vec<_> = two.iter().filter(|r| q1.passed_trials.contains(&r.trial)).collect();
    let bound_ok = retained.iter().all(|r| r.delta_10 <= 0.8);
    let pass = campaign_ok && two_range && worst_telescope <= 1e-9 && bound_ok;
    verdict(
        3,
        pass,
        &format!(
            "{} MLM + {} random records in [-1,1]: {campaign_ok}; {} two-step records, max telescoping error {worst_telescope:.1e}; {} Q1 records with delta_10 <= 0.8: {bound_ok}",
            lab.campaign.records.len(),
            random.records.len(),
            two.len(),
            retained.len()
        ),
    );
}

// ---------------------------------------------------------------- criterion 4

#[test]
fn criterion_04_density_fidelity() {
    let start = Instant::now();
    let lab = lab();
    let schema = lab.world.codec().schema();
    let heldout: Vec<TokenSequence> = lab
        .world
        .generator()
        .scenes(1000, 606)
        .iter()
        .map(|s| lab.world.codec().encode(s).unwrap())
        .collect();
    let trained = perplexity(&lab.model, &heldout).unwrap();
    let uniform = perplexity(&ReferenceDensityModel::uniform(schema.clone(), 0.1).unwrap(), &heldout).unwrap();

    // training marginals per slot class
    let mut marginal: BTreeMap<SlotClass, BTreeMap<u32, f64>> = BTreeMap::new();
    for seq in &lab.train {
        for (p, &t) in seq.tokens.iter().enumerate() {
            *marginal.entry(schema.class_at(p)).or_default().entry(t).or_default() += 1.0;
        }
    }
    // one single-site resample per class from each of 10 000 training sequences
    let mut sampled: BTreeMap<SlotClass, BTreeMap<u32, f64>> = BTreeMap::new();
    for (k, seq) in lab.train.iter().enumerate() {
        let mut rng = seed::rng(seed::split(4, k as u64));
        let mut by_class: BTreeMap<SlotClass, Vec<usize>> = BTreeMap::new();
        for p in 0..seq.len() {
            by_class.entry(schema.class_at(p)).or_default().push(p);
        }
        for (class, positions) in by_class {
            let p = positions[rng.random_range(0..positions.len())];
            let out = mask_and_resample(&lab.model, seq, &[p], &mut rng, false).unwrap();
            *sampled.entry(class).or_default().entry(out.tokens[p]).or_default() += 1.0;
        }
    }
    let tv = |a: &BTreeMap<u32, f64>, b: &BTreeMap<u32, f64>| {
        let (na, nb): (f64, f64) = (a.values().sum(), b.values().sum());
        let keys: std::collections::BTreeSet<u32> = a.keys().chain(b.keys()).copied().collect();
        0.5 * keys
            .iter()
            .map(|k| (a.get(k).unwrap_or(&0.0) / na - b.get(k).unwrap_or(&0.0) / nb).abs())
            .sum::<f64>()
    };
    let mut worst = (String::new(), 0.0f64);
    for (class, m) in &marginal {
        let d = tv(m, &sampled[class]);
        if d > worst.1 {
            worst = (class.to_string(), d);
        }
    }
    let elapsed = start.elapsed();
    let pass = trained < uniform && worst.1 <= 0.05 && elapsed < Duration::from_secs(120);
    verdict(
        4,
        pass,
        &format!(
            "perplexity {trained:.3} vs uniform {uniform:.3}; worst slot-class TV {:.4} ({}) over {} classes; {:.1}s after setup",
            worst.1,
            worst.0,
            marginal.len(),
            elapsed.as_secs_f64()
        ),
    );
}

// ---------------------------------------------------------------- criterion 5

/// Generator rotation marginal per 10° bin by midpoint integration of the
/// wrapped-normal mixture density.
fn rotation_marginal(config: &GeneratorConfig) -> Vec<f64> {
    let rot = &config.rotation;
    let total: f64 = rot.weights.iter().sum();
    let step = 0.01;
    let mut bins = vec![0.0; 36];
    for i in 0..36_000 {
        let yaw = (i as f64 + 0.5) * step;
        let mut pdf = 0.0;
        for (&mean, &w) in rot.means.iter().zip(&rot.weights) {
            for k in -2..=2 {
                let z = (yaw + 360.0 * f64::from(k) - mean) / rot.sigma;
                pdf += w / total * (-0.5 * z * z).exp() / (rot.sigma * (2.0 * std::f64::consts::PI).sqrt());
            }
        }
        bins[(yaw / 10.0) as usize] += pdf * step;
    }
    bins
}

fn rotation_hist(records: &[InterventionRecord]) -> (Vec<f64>, usize) {
    let mut bins = vec![0.0; 36];
    let mut n = 0;
    for r in records {
        if let EditValue::Yaw(y) = r.edit.target {
            bins[((y / 10.0) as usize).min(35)] += 1.0;
            n += 1;
        }
    }
    bins.iter_mut().for_each(|b| *b /= n.max(1) as f64);
    (bins, n)
}

#[test]
fn criterion_05_mlm_beats_random() {
    let lab = lab();
    let random = run_random_campaign(&lab.world, &lab.campaign.records, &lab.scenes, &lab.detector, 4040).unwrap();
    let by_id: HashMap<u64, &SceneGraph> = lab.scenes.iter().map(|s| (s.id, s)).collect();
    let ll = |r: &InterventionRecord| {
        let after = apply_edit(by_id[&r.scene_id], r.edit.agent_id, r.edit.target, lab.world.config()).unwrap();
        lab.world.generator().log_prob(&after)
    };
    let random_by_trial: HashMap<u64, &InterventionRecord> = random.records.iter().map(|r| (r.trial, r)).collect();
    let pairs: Vec<(&InterventionRecord, &InterventionRecord)> = lab
        .campaign
        .records
        .iter()
        .filter_map(|m| random_by_trial.get(&m.trial).map(|r| (m, *r)))
        .collect();
    let n = pairs.len() as f64;
    let mlm_ll = pairs.iter().map(|(m, _)| ll(m)).sum::<f64>() / n;
    let rnd_ll = pairs.iter().map(|(_, r)| ll(r)).sum::<f64>() / n;

    let marginal = rotation_marginal(lab.world.config());
    let tv = |h: &[f64]| 0.5 * h.iter().zip(&marginal).map(|(a, b)| (a - b).abs()).sum::<f64>();
    let mlm_records: Vec<InterventionRecord> = pairs.iter().map(|(m, _)| (*m).clone()).collect();
    let rnd_records: Vec<InterventionRecord> = pairs.iter().map(|(_, r)| (*r).clone()).collect();
    let (mlm_hist, mlm_rot) = rotation_hist(&mlm_records);
    let (rnd_hist, rnd_rot) = rotation_hist(&rnd_records);
    let (tv_mlm, tv_rnd) = (tv(&mlm_hist), tv(&rnd_hist));
    let categories: BTreeMap<String, usize> = pairs.iter().fold(BTreeMap::new(), |mut m, (r, _)| {
        *m.entry(r.edit.category.to_string()).or_default() += 1;
        m
    });
    assert!(pairs.iter().all(|(m, r)| m.edit.category == r.edit.category && m.edit.category != Category::Location));
    let pass = pairs.len() >= 1000 && mlm_ll > rnd_ll && tv_mlm <= 0.5 * tv_rnd;
    verdict(
        5,
        pass,
        &format!(
            "{} pairs {categories:?}; mean log-likelihood MLM {mlm_ll:.2} vs random {rnd_ll:.2}; rotation TV MLM {tv_mlm:.4} ({mlm_rot}) vs random {tv_rnd:.4} ({rnd_rot})",
            pairs.len()
        ),
    );
}

// ---------------------------------------------------------------- criterion 6

#[test]
fn criterion_06_injected_weakness_recovery() {
    let start = Instant::now();
    let lab = lab();
    let params = AggregateParams {
        threshold: THRESHOLD,
        min_count: 10,
        ..AggregateParams::default()
    };
    let stats = aggregate_groups(&lab.campaign.records, &params).unwrap();
    let injected = |g: &GroupKey| match g {
        GroupKey::Asset(a) => lab.injection.assets.contains(a),
        GroupKey::Rotation(b) => lab.injection.rotation_bins.contains(b),
        GroupKey::Weather(w) => lab.injection.weather.contains(w),
        GroupKey::Location(_) => false,
    };
    let mut others: Vec<f64> = stats.iter().filter(|s| !injected(&s.group)).map(|s| s.percent).collect();
    others.sort_by(f64::total_cmp);
    let median = if others.is_empty() {
        f64::NAN
    } else if others.len() % 2 == 1 {
        others[others.len() / 2]
    } else {
        (others[others.len() / 2 - 1] + others[others.len() / 2]) / 2.0
    };
    let cutoff = ((stats.len() as f64) * 0.2).floor().max(1.0) as usize;
    let mut detail = Vec::new();
    let mut pass = true;
    for name in BIKES {
        let key = asset(&lab.world, name);
        match stats.iter().position(|s| s.group == key) {
            Some(rank) => {
                let s = &stats[rank];
                let ok = rank < cutoff && s.percent >= 2.0 * median;
                pass &= ok;
                detail.push(format!("{name} rank {} ({:.1}% of {})", rank + 1, s.percent, s.total));
            }
            None => {
                pass = false;
                detail.push(format!("{name} below min_count"));
            }
        }
    }
    verdict(
        6,
        pass,
        &format!(
            "{}; {} groups, top-20% cutoff rank {cutoff}, median non-injected {median:.2}%; {:.1}s including setup",
            detail.join(", "),
            stats.len(),
            start.elapsed().as_secs_f64()
        ),
    );
}

// ---------------------------------------------------------- criteria 7, 8, 9

/// Evaluation sets and AP for the retraining experiments.
struct Evaluation {
    groups: Vec<(String, Vec<(SceneGraph, LabelSet)>)>,
    iid: Vec<(SceneGraph, LabelSet)>,
}

fn evaluation() -> &'static Evaluation {
    static EVAL: OnceLock<Evaluation> = OnceLock::new();
    EVAL.get_or_init(|| {
        let world = &lab().world;
        let pool = world.generator().scenes(1000, 909);
        let groups = BIKES
            .iter()
            .chain(HEAVY.iter())
            .map(|name| {
                let key = asset(world, name);
                let data = world
                    .labeled(build_group_dataset(world, &pool, key, 77).unwrap())
                    .unwrap()
                    .into_iter()
                    .map(|(s, l)| {
                        let r = key.restrict(&s, &l, world.config());
                        (s, r)
                    })
                    .collect();
                (name.to_string(), data)
            })
            .collect();
        let iid = world.labeled(world.generator().scenes(2000, 808)).unwrap();
        Evaluation { groups, iid }
    })
}

fn ap(detector: &DetectorProfile, data: &[(SceneGraph, LabelSet)]) -> f64 {
    detector.evaluate_ap_over(data, &coco_thresholds()).unwrap().ap
}

fn group_ap(detector: &DetectorProfile, name: &str) -> f64 {
    let (_, data) = evaluation().groups.iter().find(|(n, _)| n == name).unwrap();
    ap(detector, data)
}

fn base_plus_gazelle() -> &'static (DetectorProfile, DetectorProfile) {
    static PAIR: OnceLock<(DetectorProfile, DetectorProfile)> = OnceLock::new();
    PAIR.get_or_init(|| {
        let lab = lab();
        let plus = DatasetSpec::iid(10_000, 202)
            .with_addition(asset(&lab.world, "GazelleBike"), 500)
            .manifest(&lab.world)
            .unwrap();
        (lab.detector.clone(), fit(&lab.world, &plus, &lab.injection))
    })
}

#[test]
fn criterion_07_retraining_remedies() {
    let (base, plus) = base_plus_gazelle();
    let gain = |name: &str| group_ap(plus, name) - group_ap(base, name);
    let target = gain("GazelleBike");
    let other_bikes: Vec<(&str, f64)> = ["DiamondbackBike", "CrossBike"].iter().map(|&n| (n, gain(n))).collect();
    let heavy: Vec<(&str, f64)> = HEAVY.iter().map(|&n| (n, gain(n))).collect();
    let min_other = other_bikes.iter().map(|(_, g)| *g).fold(f64::INFINITY, f64::min);
    let max_heavy = heavy.iter().map(|(_, g)| g.abs()).fold(0.0f64, f64::max);
    let iid_change = ap(plus, &evaluation().iid) - ap(base, &evaluation().iid);
    let a = target > 0.0;
    let b = other_bikes.iter().all(|&(_, g)| g > 0.0 && g < target);
    let c = max_heavy < min_other;
    let d = iid_change >= -1.0;
    let fmt = |v: &[(&str, f64)]| v.iter().map(|(n, g)| format!("{n} {g:+.2}")).collect::<Vec<_>>().join(", ");
    verdict(
        7,
        a && b && c && d,
        &format!(
            "GazelleBike {target:+.2} (a {a}); {} (b {b}); heavy {} (c {c}); IID {iid_change:+.2} (d {d})",
            fmt(&other_bikes),
            fmt(&heavy)
        ),
    );
}

#[test]
fn criterion_08_saturation() {
    let lab = lab();
    let iid = |n: usize| {
        let m = DatasetSpec::iid(n, 202).manifest(&lab.world).unwrap();
        ap(&fit(&lab.world, &m, &lab.injection), &evaluation().iid)
    };
    let (base, plus) = base_plus_gazelle();
    let (ap1k, ap10k, ap20k) = (iid(1000), ap(base, &evaluation().iid), iid(20_000));
    let early = ap10k - ap1k;
    let late = ap20k - ap10k;

    let weak = "GazelleBike";
    let base_weak = group_ap(base, weak);
    let capacity_change = [0.5, 2.0]
        .iter()
        .map(|&c| (group_ap(&base.with_capacity(c), weak) - base_weak).abs())
        .fold(0.0f64, f64::max);
    let data_change = group_ap(plus, weak) - base_weak;
    let pass = early > late && capacity_change < data_change;
    verdict(
        8,
        pass,
        &format!(
            "IID AP 1k {ap1k:.2}, 10k {ap10k:.2}, 20k {ap20k:.2} (gains {early:+.2} vs {late:+.2}); {weak} AP change from capacity 0.5x..2x {capacity_change:.2} vs +500 group scenes {data_change:+.2}"
        ),
    );
}

#[test]
fn criterion_09_cause_agnostic_ordering() {
    let lab = lab();
    let (base, targeted) = base_plus_gazelle();
    let pool = lab.world.generator().scenes(15_000, 505);
    let buckets = cause_agnostic_collect(&lab.world, &lab.detector, &pool, &[0.8], 500, 1).unwrap();
    let bucket = &buckets[0];
    let chosen: Vec<SceneGraph> = bucket.selected.iter().map(|&i| pool[i].clone()).collect();
    let mut manifest = DatasetSpec::iid(10_000, 202).manifest(&lab.world).unwrap();
    manifest.merge(&build_manifest(&lab.world, &chosen, ManifestPart::Added).unwrap());
    let agnostic = fit(&lab.world, &manifest, &lab.injection);
    let weak = "GazelleBike";
    let (b, g, t) = (group_ap(base, weak), group_ap(&agnostic, weak), group_ap(targeted, weak));
    let pass = chosen.len() == 500 && g > b && t - b > g - b;
    verdict(
        9,
        pass,
        &format!(
            "{weak} AP base {b:.2}, agnostic theta=0.8 with {} scenes ({} available) {g:.2}, targeted 500 scenes {t:.2}",
            chosen.len(),
            bucket.available
        ),
    );
}

// --------------------------------------------------------------- criterion 10

fn judge(height: f64, depth: f64, buf: &DepthBuffer, target: &Box2D, target_depth: f64) -> FilterVerdict {
    let (t, q, _) = buf.occlusion(target, target_depth);
    FilterThresholds::default().judge(height, depth, t, q, buf.scale())
}

fn fixture_camera() -> CameraModel {
    CameraModel {
        image_width: 1600.0,
        image_height: 900.0,
        focal: 800.0,
        principal_x: 800.0,
        principal_y: 450.0,
    }
}

/// A vehicle whose near face is centered on the optical axis at `depth`
/// meters, `half_width` and `half_height` in meters (camera height 1.6 m).
fn axis_vehicle(id: u32, depth: f64, half_width: f64, half_height: f64, lateral: f64) -> AgentNode {
    AgentNode {
        id,
        kind: AgentKind::Vehicle,
        asset: AssetRef::new(Family::Sedan, 0),
        pose: Pose {
            x: depth + 1.0,
            y: lateral,
            z: 1.6 - half_height,
            roll: 0.0,
            yaw: 0.0,
        },
        extent: [1.0, half_width, half_height],
    }
}

fn fixture_scene(agents: Vec<AgentNode>) -> SceneGraph {
    let world = World::new(GeneratorConfig::default(), SensorConfig::default()).unwrap();
    let mut scene = world.generator().scene(0, 1);
    scene.camera = fixture_camera();
    scene.ego.pose = Pose {
        x: 0.0,
        y: 0.0,
        z: 0.0,
        roll: 0.0,
        yaw: 0.0,
    };
    scene.agents = agents;
    scene
}

#[test]
fn criterion_10_ground_truth_filters() {
    let mut checks: Vec<(&str, bool)> = Vec::new();
    let empty = DepthBuffer::new(1600.0, 900.0, 1);
    let big = bx(100.0, 100.0, 200.0, 200.0);

    // height, inclusive at 30 px
    checks.push(("height 30 kept", judge(30.0, 50.0, &empty, &big, 50.0) == FilterVerdict::Keep));
    checks.push(("height 29.99 dropped", judge(29.99, 50.0, &empty, &big, 50.0) == FilterVerdict::TooShort));
    // depth, inclusive at 250 m
    checks.push(("depth 250 kept", judge(40.0, 250.0, &empty, &big, 250.0) == FilterVerdict::Keep));
    checks.push(("depth 250.01 dropped", judge(40.0, 250.01, &empty, &big, 250.01) == FilterVerdict::TooFar));
    checks.push(("depth 260 dropped", judge(40.0, 260.0, &empty, &big, 260.0) == FilterVerdict::TooFar));

    // occluded fraction: 100x100 target at 20 m, occluder columns at 10 m
    let occluded_by = |cols: f64, occluder_depth: f64| {
        let mut buf = DepthBuffer::new(1600.0, 900.0, 1);
        buf.fill_box(&bx(100.0, 100.0, 100.0 + cols, 200.0), occluder_depth);
        buf
    };
    let at = |cols: f64, d: f64| judge(100.0, 20.0, &occluded_by(cols, d), &big, 20.0);
    checks.push(("occluded 0.80 dropped", at(80.0, 10.0) == FilterVerdict::Occluded));
    checks.push(("occluded 0.79 kept", at(79.0, 10.0) == FilterVerdict::Keep));
    checks.push(("occluded 0.85 dropped", at(85.0, 10.0) == FilterVerdict::Occluded));
    checks.push(("equal depth does not occlude", at(100.0, 20.0) == FilterVerdict::Keep));
    checks.push(("occluded fraction counts strictly closer pixels", occluded_by(80.0, 10.0).occlusion(&big, 20.0).0 == 0.8));

    // visible count: 50x40 target, 700 or 701 pixels covered
    let small = bx(100.0, 100.0, 150.0, 140.0);
    let visible_with = |extra: bool| {
        let mut buf = DepthBuffer::new(1600.0, 900.0, 1);
        buf.fill_box(&bx(100.0, 100.0, 150.0, 114.0), 5.0);
        if extra {
            buf.fill_box(&bx(100.0, 114.0, 101.0, 115.0), 5.0);
        }
        buf
    };
    let q_keep = visible_with(false);
    let q_drop = visible_with(true);
    checks.push(("visible 1300 kept", q_keep.occlusion(&small, 20.0).1 == 1300 && judge(40.0, 20.0, &q_keep, &small, 20.0) == FilterVerdict::Keep));
    checks.push(("visible 1299 dropped", q_drop.occlusion(&small, 20.0).1 == 1299 && judge(40.0, 20.0, &q_drop, &small, 20.0) == FilterVerdict::TooFewVisible));
    // reduced-resolution buffer scales the pixel threshold by scale²
    checks.push(("scale 2 visible threshold 325", FilterThresholds::default().min_visible_at(2) == 325));

    // whole-pipeline fixtures through derive_labels
    let sensor = SensorConfig::default();
    let included = derive_labels_with(&fixture_scene(vec![axis_vehicle(1, 50.0, 1.5625, 1.25, 0.0)]), &sensor).unwrap();
    let l = included.labels.first();
    checks.push((
        "40 px tall, 50 m, 2000 px vehicle included",
        l.is_some_and(|l| (l.bbox.height() - 40.0).abs() < 1e-9 && l.visible_pixels == 2000 && (l.closest_depth - 50.0).abs() < 1e-9),
    ));
    let far = derive_labels_with(&fixture_scene(vec![axis_vehicle(1, 260.0, 8.0, 6.0, 0.0)]), &sensor).unwrap();
    checks.push(("vehicle at 260 m excluded", far.is_empty()));
    let hidden = derive_labels_with(
        &fixture_scene(vec![axis_vehicle(1, 50.0, 1.5625, 1.25, 0.0), axis_vehicle(2, 20.0, 3.0, 3.0, 0.0)]),
        &sensor,
    )
    .unwrap();
    checks.push(("vehicle hidden behind nearer truck excluded", hidden.get(1).is_none() && hidden.get(2).is_some()));

    let failed: Vec<&str> = checks.iter().filter(|(_, ok)| !ok).map(|(n, _)| *n).collect();
    verdict(
        10,
        failed.is_empty(),
        &format!("{} fixture checks, failed: {:?}", checks.len(), failed),
    );
}
