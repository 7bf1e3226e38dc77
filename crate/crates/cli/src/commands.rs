//! Subcommand implementations. Each reads and writes only the artifacts named
//! by its flags (or their defaults in the work directory).

use crate::{Ctx, Failure};
use clap::{Args, ValueEnum};
use counterscene::codec::TokenSequence;
use counterscene::curation::{build_manifest, cause_agnostic_collect, Bucket, DatasetSpec, ManifestPart};
use counterscene::density::ReferenceDensityModel;
use counterscene::detector::{coco_thresholds, DetectorProfile, DetectorSpec};
use counterscene::geometry::LabelSet;
use counterscene::group::GroupKey;
use counterscene::intervention::{
    aggregate_groups, filter_two_step, run_campaign, run_random_campaign, run_two_step, EditValue, InterventionRecord,
    Question, SkippedTrial, TwoStepParams, TwoStepRecord,
};
use counterscene::io::{self, ArtifactHeader};
use counterscene::report::{self, CurvePoint, GroupRow, HistogramRow};
use counterscene::scene::SceneGraph;
use counterscene::seed;
use counterscene::world::World;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

type Outcome = Result<(), Failure>;

fn header(ctx: &Ctx, kind: &str) -> ArtifactHeader {
    let s = &ctx.config.seeds;
    [
        ("generation", s.generation),
        ("density", s.density),
        ("campaign", s.campaign),
        ("random", s.random),
        ("two_step", s.two_step),
        ("detector", s.detector),
        ("manifest", s.manifest),
        ("selection", s.selection),
        ("collection", s.collection),
        ("evaluation", s.evaluation),
    ]
    .into_iter()
    .fold(ArtifactHeader::new(kind, &ctx.config.hash()), |h, (n, v)| h.seed(n, v))
}

fn world(ctx: &Ctx) -> Result<World, Failure> {
    Ok(ctx.config.world()?)
}

fn read_scenes(path: &Path) -> Result<Vec<SceneGraph>, Failure> {
    Ok(io::read_jsonl::<SceneGraph>(path, "scenes")?.1)
}

fn load_model(world: &World, path: &Path) -> Result<ReferenceDensityModel, Failure> {
    if !path.exists() {
        return Err(Failure::Data(format!("missing model artifact {}", path.display())));
    }
    Ok(ReferenceDensityModel::load(path, &world.codec().schema().hash())?)
}

#[derive(Serialize, Deserialize)]
struct DetectorArtifact {
    header: ArtifactHeader,
    spec: DetectorSpec,
}

fn load_detector(world: &World, path: &Path) -> Result<DetectorProfile, Failure> {
    let art: DetectorArtifact = io::read_json(path)?;
    art.header.expect_kind("detector")?;
    Ok(art.spec.fit(world.config())?)
}

fn done(what: &str, path: &Path) {
    println!("{what}: {}", path.display());
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Number of scenes [default: config `scenes`].
    #[arg(long)]
    count: Option<usize>,
    /// Base seed [default: config `seeds.generation`].
    #[arg(long)]
    seed: Option<u64>,
    /// Output scene file [default: scenes.jsonl].
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn generate(ctx: &Ctx, a: GenerateArgs) -> Outcome {
    let w = world(ctx)?;
    let seed = a.seed.unwrap_or(ctx.config.seeds.generation);
    let scenes = w.generator().scenes(a.count.unwrap_or(ctx.config.scenes), seed);
    let out = ctx.path(&a.out, "scenes.jsonl");
    io::write_jsonl(&out, &header(ctx, "scenes").seed("base", seed), &scenes)?;
    done("scenes", &out);
    Ok(())
}

#[derive(Debug, Args)]
pub struct LabelArgs {
    /// Input scene file [default: scenes.jsonl].
    #[arg(long)]
    scenes: Option<PathBuf>,
    /// Output label file [default: labels.jsonl].
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn label(ctx: &Ctx, a: LabelArgs) -> Outcome {
    let w = world(ctx)?;
    let scenes = read_scenes(&ctx.path(&a.scenes, "scenes.jsonl"))?;
    let labels = scenes.iter().map(|s| w.labels(s)).collect::<counterscene::Result<Vec<LabelSet>>>()?;
    let out = ctx.path(&a.out, "labels.jsonl");
    io::write_jsonl(&out, &header(ctx, "labels"), &labels)?;
    done("labels", &out);
    Ok(())
}

#[derive(Debug, Args)]
pub struct EncodeArgs {
    /// Input scene file [default: scenes.jsonl].
    #[arg(long)]
    scenes: Option<PathBuf>,
    /// Output token file [default: tokens.txt]; the schema goes to `<out>.schema.json`.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn encode(ctx: &Ctx, a: EncodeArgs) -> Outcome {
    let w = world(ctx)?;
    let scenes = read_scenes(&ctx.path(&a.scenes, "scenes.jsonl"))?;
    let seqs = scenes
        .iter()
        .map(|s| w.codec().encode(s))
        .collect::<counterscene::Result<Vec<TokenSequence>>>()?;
    let out = ctx.path(&a.out, "tokens.txt");
    io::write_tokens(&out, &header(ctx, "tokens"), w.codec().schema(), &seqs)?;
    done("tokens", &out);
    Ok(())
}

#[derive(Debug, Args)]
pub struct TrainDensityArgs {
    /// Training token file. Without it, `density_scenes` fresh scenes are
    /// generated from `seeds.density`.
    #[arg(long)]
    tokens: Option<PathBuf>,
    /// Output model [default: model.json].
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn train_density(ctx: &Ctx, a: TrainDensityArgs) -> Outcome {
    let w = world(ctx)?;
    let corpus = match &a.tokens {
        Some(p) => {
            let (side, seqs) = io::read_tokens(&ctx.resolve(p))?;
            side.header.expect_schema(&w.codec().schema().hash())?;
            seqs
        }
        None => w
            .generator()
            .scenes(ctx.config.density_scenes, ctx.config.seeds.density)
            .iter()
            .map(|s| w.codec().encode(s))
            .collect::<counterscene::Result<_>>()?,
    };
    let model = ReferenceDensityModel::train(w.codec().schema().clone(), &corpus, ctx.config.alpha)?;
    let out = ctx.path(&a.out, "model.json");
    model.save(&out)?;
    io::write_json(&io::sidecar(&out, ".meta.json"), &header(ctx, "model").schema(model.schema_hash()))?;
    done("model", &out);
    Ok(())
}

#[derive(Debug, Args)]
pub struct InterveneArgs {
    /// Input scene file [default: scenes.jsonl].
    #[arg(long)]
    scenes: Option<PathBuf>,
    /// Density model [default: model.json].
    #[arg(long)]
    model: Option<PathBuf>,
    /// Detector artifact [default: detector.json].
    #[arg(long)]
    detector: Option<PathBuf>,
    /// Output records [default: interventions.jsonl]; skipped trials go to
    /// `<out>.skipped.jsonl`.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn intervene(ctx: &Ctx, a: InterveneArgs) -> Outcome {
    let w = world(ctx)?;
    let scenes = read_scenes(&ctx.path(&a.scenes, "scenes.jsonl"))?;
    let model = load_model(&w, &ctx.path(&a.model, "model.json"))?;
    let detector = load_detector(&w, &ctx.path(&a.detector, "detector.json"))?;
    let out = run_campaign(&w, &scenes, &model, &detector, &ctx.config.campaign_params())?;
    let path = ctx.path(&a.out, "interventions.jsonl");
    let h = header(ctx, "interventions").schema(model.schema_hash());
    io::write_jsonl(&path, &h, &out.records)?;
    io::write_jsonl::<SkippedTrial>(&io::sidecar(&path, ".skipped.jsonl"), &header(ctx, "skipped"), &out.skipped)?;
    done("interventions", &path);
    Ok(())
}

#[derive(Debug, Args)]
pub struct RandomBaselineArgs {
    /// Input scene file [default: scenes.jsonl].
    #[arg(long)]
    scenes: Option<PathBuf>,
    /// The MLM campaign to replay [default: interventions.jsonl].
    #[arg(long)]
    records: Option<PathBuf>,
    /// Detector artifact [default: detector.json].
    #[arg(long)]
    detector: Option<PathBuf>,
    /// Output records [default: random.jsonl].
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn random_baseline(ctx: &Ctx, a: RandomBaselineArgs) -> Outcome {
    let w = world(ctx)?;
    let scenes = read_scenes(&ctx.path(&a.scenes, "scenes.jsonl"))?;
    let (_, records) = io::read_jsonl::<InterventionRecord>(&ctx.path(&a.records, "interventions.jsonl"), "interventions")?;
    let detector = load_detector(&w, &ctx.path(&a.detector, "detector.json"))?;
    let out = run_random_campaign(&w, &records, &scenes, &detector, ctx.config.seeds.random)?;
    let path = ctx.path(&a.out, "random.jsonl");
    io::write_jsonl(&path, &header(ctx, "interventions"), &out.records)?;
    done("random baseline", &path);
    Ok(())
}

#[derive(Debug, Args)]
pub struct TwoStepArgs {
    /// Input scene file [default: scenes.jsonl].
    #[arg(long)]
    scenes: Option<PathBuf>,
    /// Density model [default: model.json].
    #[arg(long)]
    model: Option<PathBuf>,
    /// Detector artifact [default: detector.json].
    #[arg(long)]
    detector: Option<PathBuf>,
    /// Output records [default: two_step.jsonl].
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn two_step(ctx: &Ctx, a: TwoStepArgs) -> Outcome {
    let w = world(ctx)?;
    let scenes = read_scenes(&ctx.path(&a.scenes, "scenes.jsonl"))?;
    let model = load_model(&w, &ctx.path(&a.model, "model.json"))?;
    let detector = load_detector(&w, &ctx.path(&a.detector, "detector.json"))?;
    let params = TwoStepParams {
        first_edits: ctx.config.first_edits()?,
        trials: ctx.config.two_step.trials,
        weights: ctx.config.campaign.weights,
        seed: ctx.config.seeds.two_step,
        max_attempts: ctx.config.campaign.max_attempts,
    };
    let records = run_two_step(&w, &scenes, &model, &detector, &params)?;
    let path = ctx.path(&a.out, "two_step.jsonl");
    io::write_jsonl(&path, &header(ctx, "two_step").schema(model.schema_hash()), &records)?;
    done("two-step records", &path);
    Ok(())
}

#[derive(Debug, Args)]
pub struct AggregateArgs {
    /// Campaign records [default: interventions.jsonl].
    #[arg(long)]
    records: Option<PathBuf>,
    /// Output ranking [default: groups.csv].
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn aggregate(ctx: &Ctx, a: AggregateArgs) -> Outcome {
    let (_, records) = io::read_jsonl::<InterventionRecord>(&ctx.path(&a.records, "interventions.jsonl"), "interventions")?;
    let stats = aggregate_groups(&records, &ctx.config.aggregate_params())?;
    let rows = GroupRow::from_stats(&stats, &ctx.config.generator);
    let path = ctx.path(&a.out, "groups.csv");
    io::write_csv(&path, &header(ctx, "groups"), &rows)?;
    done("groups", &path);
    Ok(())
}

#[derive(Debug, Args)]
pub struct CurateArgs {
    /// Group label, e.g. "Asset GazelleBike" or "Rotation 170".
    #[arg(long)]
    group: String,
    /// Scenes in the group dataset [default: config `curation.group_scenes`].
    #[arg(long)]
    count: Option<usize>,
    /// Output scene file [default: group.jsonl].
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_group(ctx: &Ctx, text: &str) -> Result<GroupKey, Failure> {
    GroupKey::parse(text, &ctx.config.generator).map_err(|e| Failure::Config(e.to_string()))
}

pub fn curate(ctx: &Ctx, a: CurateArgs) -> Outcome {
    let w = world(ctx)?;
    let group = parse_group(ctx, &a.group)?;
    let mut spec = DatasetSpec::iid(0, ctx.config.seeds.manifest)
        .with_addition(group, a.count.unwrap_or(ctx.config.curation.group_scenes));
    spec.selection_seed = ctx.config.seeds.selection;
    let (_, added) = spec.materialize(&w)?;
    let path = ctx.path(&a.out, "group.jsonl");
    io::write_jsonl(&path, &header(ctx, "scenes").seed("base", spec.addition_seed), &added)?;
    done("group dataset", &path);
    Ok(())
}

#[derive(Debug, Args)]
pub struct FitDetectorArgs {
    /// IID scenes in the base manifest [default: config `detector.manifest_scenes`].
    #[arg(long)]
    base_scenes: Option<usize>,
    /// Scene files counted as added training data. Repeatable.
    #[arg(long)]
    add: Vec<PathBuf>,
    /// Capacity multiplier on the exposure coefficient.
    #[arg(long)]
    capacity: Option<f64>,
    /// Output detector [default: detector.json].
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn fit_detector(ctx: &Ctx, a: FitDetectorArgs) -> Outcome {
    let w = world(ctx)?;
    let base = DatasetSpec::iid(
        a.base_scenes.unwrap_or(ctx.config.detector.manifest_scenes),
        ctx.config.seeds.manifest,
    );
    let mut manifest = base.manifest(&w)?;
    for p in &a.add {
        manifest.merge(&build_manifest(&w, &read_scenes(&ctx.resolve(p))?, ManifestPart::Added)?);
    }
    let mut constants = ctx.config.detector.constants;
    if let Some(c) = a.capacity {
        constants.capacity = c;
    }
    let spec = DetectorSpec {
        manifest,
        constants,
        injection: ctx.config.detector.injection.resolve(w.config())?,
        seed: ctx.config.seeds.detector,
    };
    spec.fit(w.config())?;
    let path = ctx.path(&a.out, "detector.json");
    io::write_json(
        &path,
        &DetectorArtifact {
            header: header(ctx, "detector"),
            spec,
        },
    )?;
    done("detector", &path);
    Ok(())
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Detector artifacts to evaluate. Repeatable.
    #[arg(long, required = true)]
    detector: Vec<PathBuf>,
    /// X coordinate of each detector on the curve (added scenes, capacity,
    /// ...). Defaults to 0, 1, 2, ...
    #[arg(long)]
    x: Vec<f64>,
    /// Evaluation groups; "IID" evaluates the unmodified pool. Repeatable.
    #[arg(long, default_value = "IID")]
    group: Vec<String>,
    /// Single IOU threshold; without it AP is averaged over 0.50:0.05:0.95.
    #[arg(long)]
    iou: Option<f64>,
    /// Output curve points [default: eval.csv].
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn eval(ctx: &Ctx, a: EvalArgs) -> Outcome {
    let w = world(ctx)?;
    if !a.x.is_empty() && a.x.len() != a.detector.len() {
        return Err(Failure::Config("give one --x per --detector".into()));
    }
    let pool = w.generator().scenes(ctx.config.curation.eval_scenes, ctx.config.seeds.evaluation);
    let selection = seed::split_named(ctx.config.seeds.evaluation, "selection");
    let mut datasets = Vec::new();
    for g in &a.group {
        if g.eq_ignore_ascii_case("iid") {
            datasets.push(("IID".to_string(), w.labeled(pool.clone())?));
            continue;
        }
        let key = parse_group(ctx, g)?;
        let scenes = counterscene::curation::build_group_dataset(&w, &pool, key, selection)?;
        let data = w
            .labeled(scenes)?
            .into_iter()
            .map(|(s, l)| {
                let r = key.restrict(&s, &l, w.config());
                (s, r)
            })
            .collect();
        datasets.push((key.label(w.config()), data));
    }
    let thresholds = match a.iou {
        Some(t) => vec![t],
        None => coco_thresholds(),
    };
    let mut points = Vec::new();
    for (i, path) in a.detector.iter().enumerate() {
        let det = load_detector(&w, &ctx.resolve(path))?;
        let x = a.x.get(i).copied().unwrap_or(i as f64);
        for (series, data) in &datasets {
            let ap = det.evaluate_ap_over(data, &thresholds)?.ap;
            points.push(CurvePoint {
                series: series.clone(),
                x,
                ap,
            });
        }
    }
    let path = ctx.path(&a.out, "eval.csv");
    io::write_csv(&path, &header(ctx, "eval"), &points)?;
    done("evaluation", &path);
    Ok(())
}

#[derive(Debug, Args)]
pub struct CollectAgnosticArgs {
    /// Detector artifact [default: detector.json].
    #[arg(long)]
    detector: Option<PathBuf>,
    /// Directory for `buckets.json` and one `agnostic_<threshold>.jsonl` scene
    /// file per bucket [default: work directory].
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Serialize, Deserialize)]
struct BucketsArtifact {
    header: ArtifactHeader,
    buckets: Vec<Bucket>,
}

pub fn collect_agnostic(ctx: &Ctx, a: CollectAgnosticArgs) -> Outcome {
    let w = world(ctx)?;
    let detector = load_detector(&w, &ctx.path(&a.detector, "detector.json"))?;
    let c = &ctx.config.curation;
    let pool = w.generator().scenes(c.pool_scenes, ctx.config.seeds.collection);
    let buckets = cause_agnostic_collect(
        &w,
        &detector,
        &pool,
        &c.thresholds,
        c.per_bucket,
        seed::split_named(ctx.config.seeds.collection, "buckets"),
    )?;
    let dir = ctx.path(&a.out_dir, ".");
    std::fs::create_dir_all(&dir).map_err(|e| Failure::Data(e.to_string()))?;
    for b in &buckets {
        if b.shortage {
            log::warn!("bucket {}: only {} scenes available", b.threshold, b.available);
        }
        let chosen: Vec<SceneGraph> = b.selected.iter().map(|&i| pool[i].clone()).collect();
        io::write_jsonl(&dir.join(format!("agnostic_{}.jsonl", b.threshold)), &header(ctx, "scenes"), &chosen)?;
    }
    let path = dir.join("buckets.json");
    io::write_json(
        &path,
        &BucketsArtifact {
            header: header(ctx, "buckets"),
            buckets,
        },
    )?;
    done("buckets", &path);
    Ok(())
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TableKind {
    Interventions,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DensityKind {
    Rotation,
    Weather,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Print a tiered table from a group ranking CSV.
    #[arg(long)]
    table: Option<TableKind>,
    /// Histogram of original, MLM and random values of one attribute.
    #[arg(long)]
    density: Option<DensityKind>,
    /// AP curves from an evaluation CSV.
    #[arg(long)]
    curves: Option<PathBuf>,
    /// Summarize two-step records for question 1, 2 or 3.
    #[arg(long)]
    question: Option<u8>,
    /// Group ranking for --table [default: groups.csv].
    #[arg(long)]
    groups: Option<PathBuf>,
    /// Scenes for --density [default: scenes.jsonl].
    #[arg(long)]
    scenes: Option<PathBuf>,
    /// MLM records for --density [default: interventions.jsonl].
    #[arg(long)]
    mlm: Option<PathBuf>,
    /// Random records for --density [default: random.jsonl].
    #[arg(long)]
    random: Option<PathBuf>,
    /// Two-step records for --question [default: two_step.jsonl].
    #[arg(long)]
    two_step: Option<PathBuf>,
    /// Output path; extensions are added per artifact [default: report].
    #[arg(long)]
    out: Option<PathBuf>,
}

fn with_ext(base: &Path, ext: &str) -> PathBuf {
    let mut s = base.as_os_str().to_os_string();
    s.push(ext);
    PathBuf::from(s)
}

fn write_text(path: &Path, text: &str) -> Outcome {
    std::fs::write(path, text).map_err(|e| Failure::Data(format!("cannot write {}: {e}", path.display())))
}

pub fn report(ctx: &Ctx, a: ReportArgs) -> Outcome {
    if a.table.is_none() && a.density.is_none() && a.curves.is_none() && a.question.is_none() {
        return Err(Failure::Config("report needs --table, --density, --curves or --question".into()));
    }
    let base = ctx.path(&a.out, "report");
    if let Some(TableKind::Interventions) = a.table {
        let rows: Vec<GroupRow> = io::read_csv(&ctx.path(&a.groups, "groups.csv"))?;
        let table = report::intervention_table(&rows, ctx.config.campaign.threshold, &ctx.config.campaign.tier_cuts);
        print!("{table}");
        write_text(&with_ext(&base, ".interventions.txt"), &table)?;
    }
    if let Some(kind) = a.density {
        let w = world(ctx)?;
        let scenes = read_scenes(&ctx.path(&a.scenes, "scenes.jsonl"))?;
        let (_, mlm) = io::read_jsonl::<InterventionRecord>(&ctx.path(&a.mlm, "interventions.jsonl"), "interventions")?;
        let (_, random) = io::read_jsonl::<InterventionRecord>(&ctx.path(&a.random, "random.jsonl"), "interventions")?;
        let (original, lo, hi, bins, name): (Vec<f64>, f64, f64, usize, &str) = match kind {
            DensityKind::Rotation => (
                scenes.iter().flat_map(|s| s.vehicles().map(|v| v.pose.yaw)).collect(),
                0.0,
                360.0,
                36,
                "rotation",
            ),
            DensityKind::Weather => {
                let n = w.config().weather_presets.len();
                let idx = scenes
                    .iter()
                    .map(|s| {
                        w.config()
                            .preset_index(&s.weather)
                            .map(|i| i as f64)
                            .ok_or_else(|| Failure::Data(format!("scene {} has an unknown weather", s.id)))
                    })
                    .collect::<Result<_, _>>()?;
                (idx, 0.0, n as f64, n, "weather")
            }
        };
        let targets = |records: &[InterventionRecord]| -> Vec<f64> {
            records
                .iter()
                .filter_map(|r| match (kind, r.edit.target) {
                    (DensityKind::Rotation, EditValue::Yaw(y)) => Some(y),
                    (DensityKind::Weather, EditValue::Weather(p)) => Some(f64::from(p)),
                    _ => None,
                })
                .collect()
        };
        let rows: Vec<HistogramRow> = report::histogram_rows(&original, &targets(&mlm), &targets(&random), lo, hi, bins);
        let csv_path = with_ext(&base, &format!(".{name}.csv"));
        io::write_csv(&csv_path, &header(ctx, "histogram"), &rows)?;
        write_text(
            &with_ext(&base, &format!(".{name}.svg")),
            &report::histogram_svg(&rows, &format!("{name}: Original, MLM, Random"))?,
        )?;
        done("histogram", &csv_path);
    }
    if let Some(path) = &a.curves {
        let points: Vec<CurvePoint> = io::read_csv(&ctx.resolve(path))?;
        let svg_path = with_ext(&base, ".curves.svg");
        write_text(&svg_path, &report::curves_svg(&points, "AP")?)?;
        done("curves", &svg_path);
    }
    if let Some(q) = a.question {
        let question = Question::from_id(q).map_err(|e| Failure::Config(e.to_string()))?;
        let (_, records) = io::read_jsonl::<TwoStepRecord>(&ctx.path(&a.two_step, "two_step.jsonl"), "two_step")?;
        let summary = filter_two_step(
            &records,
            question,
            ctx.config.two_step.first_threshold,
            ctx.config.two_step.second_threshold,
        );
        let cfg = &ctx.config.generator;
        let mut text = String::from("First | Second | Percent | Total\n");
        for p in &summary.pairs {
            text.push_str(&format!(
                "{} | {} | {:.2} | {}\n",
                p.first.label(cfg),
                p.second.label(cfg),
                p.percent,
                p.total
            ));
        }
        print!("{text}");
        write_text(&with_ext(&base, &format!(".q{q}.txt")), &text)?;
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Scene file to round-trip through the codec [default: scenes.jsonl].
    #[arg(long)]
    scenes: Option<PathBuf>,
    /// Campaign records [default: interventions.jsonl].
    #[arg(long)]
    records: Option<PathBuf>,
    /// Two-step records [default: two_step.jsonl].
    #[arg(long)]
    two_step: Option<PathBuf>,
}

/// Checks every artifact that exists; missing files are reported and skipped.
pub fn verify(ctx: &Ctx, a: VerifyArgs) -> Outcome {
    let w = world(ctx)?;
    let mut failures = Vec::new();
    let mut check = |name: &str, ok: bool| {
        println!("{} {name}", if ok { "PASS" } else { "FAIL" });
        if !ok {
            failures.push(name.to_string());
        }
    };
    let scenes_path = ctx.path(&a.scenes, "scenes.jsonl");
    if scenes_path.exists() {
        let scenes = read_scenes(&scenes_path)?;
        let mut exact = true;
        for s in &scenes {
            let seq = w.codec().encode(s)?;
            let back = w.codec().decode(&seq, s)?;
            exact &= w.codec().encode(&back)? == seq;
            exact &= back.weather == s.weather && back.camera == s.camera;
            for (p, q) in back.agents.iter().zip(&s.agents) {
                exact &= p.asset == q.asset;
                let (pa, qa) = (p.pose.to_array(), q.pose.to_array());
                exact &= pa.iter().zip(&qa).all(|(x, y)| (x - y).abs() <= 0.1);
            }
        }
        check("codec round trip", exact);
    } else {
        println!("SKIP codec round trip ({} missing)", scenes_path.display());
    }
    let records_path = ctx.path(&a.records, "interventions.jsonl");
    if records_path.exists() {
        let (_, records) = io::read_jsonl::<InterventionRecord>(&records_path, "interventions")?;
        check(
            "delta range and sign",
            records
                .iter()
                .all(|r| (-1.0..=1.0).contains(&r.delta) && (r.delta - (r.score_after - r.score_before)).abs() <= 1e-12),
        );
    } else {
        println!("SKIP delta range ({} missing)", records_path.display());
    }
    let two_path = ctx.path(&a.two_step, "two_step.jsonl");
    if two_path.exists() {
        let (_, records) = io::read_jsonl::<TwoStepRecord>(&two_path, "two_step")?;
        check(
            "two-step telescoping",
            records.iter().all(|r| (r.delta_20 - (r.delta_10 + r.delta_21)).abs() <= 1e-9),
        );
        let q1 = filter_two_step(
            &records,
            Question::BothHurt,
            ctx.config.two_step.first_threshold,
            ctx.config.two_step.second_threshold,
        );
        let bound = 1.0 - ctx.config.two_step.second_threshold;
        check(
            "question 1 bound on delta_10",
            records
                .iter()
                .filter(|r| q1.passed_trials.contains(&r.trial))
                .all(|r| r.delta_10 <= bound),
        );
    } else {
        println!("SKIP two-step checks ({} missing)", two_path.display());
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(Failure::Verify(format!("failed checks: {}", failures.join(", "))))
    }
}
