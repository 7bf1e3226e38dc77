use std::path::Path;
use std::process::{Command, Output};

const SMALL: &[&str] = &[
    "--set",
    "scenes=40",
    "--set",
    "density_scenes=200",
    "--set",
    "detector.manifest_scenes=200",
    "--set",
    "campaign.trials=60",
    "--set",
    "campaign.min_count=2",
    "--set",
    "two_step.trials=30",
    "--set",
    "curation.eval_scenes=30",
];

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_counterscene"))
        .arg("--dir")
        .arg(dir)
        .args(SMALL)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn generate_label_encode_twice_is_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [a.path(), b.path()] {
        ok(d, &["generate", "--seed", "1"]);
        ok(d, &["label"]);
        ok(d, &["encode"]);
    }
    for f in ["scenes.jsonl", "labels.jsonl", "tokens.txt", "tokens.txt.schema.json"] {
        assert_eq!(read(a.path(), f), read(b.path(), f), "{f} differs");
    }
}

#[test]
fn interventions_table_has_tiered_layout() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(
        d.path().join("groups.csv"),
        "group,tier,percent,events,total\n\
         Asset GazelleBike,0,25.0,5,20\n\
         Rotation 170,1,6.0,3,50\n\
         Asset AudiA2,2,0.0,0,40\n",
    )
    .unwrap();
    let text = ok(d.path(), &["report", "--table", "interventions"]);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "Intervention      | Percent > 0.2 | Total");
    assert_eq!(lines[2], "[percent >= 10]");
    assert_eq!(lines[3], "Asset GazelleBike |         25.00 | 20");
    assert_eq!(lines[4], "[5 <= percent < 10]");
    assert_eq!(lines[6], "[percent < 5]");
    assert_eq!(read(d.path(), "report.interventions.txt"), text.as_bytes());
}

#[test]
fn full_pipeline_reports_and_verifies() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    for cmd in [
        "generate",
        "train-density",
        "fit-detector",
        "intervene",
        "random-baseline",
        "two-step",
        "aggregate",
    ] {
        ok(p, &[cmd]);
    }
    ok(p, &["report", "--density", "rotation"]);
    let csv = String::from_utf8(read(p, "report.rotation.csv")).unwrap();
    assert!(csv.starts_with("bin_start,original,mlm,random\n"));
    assert_eq!(csv.lines().count(), 37);
    assert!(String::from_utf8(read(p, "report.rotation.svg")).unwrap().contains("Random"));

    ok(p, &["curate", "--group", "Asset GazelleBike", "--count", "20"]);
    ok(p, &["fit-detector", "--add", "group.jsonl", "--out", "plus.json"]);
    ok(
        p,
        &[
            "eval", "--detector", "detector.json", "--detector", "plus.json", "--x", "0", "--x", "20", "--group", "IID",
            "--group", "Asset GazelleBike",
        ],
    );
    ok(p, &["report", "--curves", "eval.csv", "--out", "first"]);
    ok(p, &["report", "--curves", "eval.csv", "--out", "second"]);
    assert_eq!(read(p, "first.curves.svg"), read(p, "second.curves.svg"));

    let verify = ok(p, &["verify"]);
    assert_eq!(verify.matches("PASS").count(), 4, "{verify}");
}

#[test]
fn exit_codes_follow_error_classes() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();

    let bad = run(p, &["--set", "campaign.threshold=0", "generate"]);
    assert_eq!(bad.status.code(), Some(2));
    let record: serde_json::Value = serde_json::from_slice(&bad.stderr).unwrap();
    assert_eq!(record["error"]["kind"], "config");

    assert_eq!(run(p, &["label"]).status.code(), Some(3));

    std::fs::write(p.join("empty.csv"), "series,x,ap\n").unwrap();
    assert_eq!(run(p, &["report", "--curves", "empty.csv"]).status.code(), Some(3));

    ok(p, &["generate"]);
    ok(p, &["train-density"]);
    ok(p, &["fit-detector"]);
    ok(p, &["intervene"]);
    let path = p.join("interventions.jsonl");
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    let mut rec: serde_json::Value = serde_json::from_str(&lines[1]).unwrap();
    rec["delta"] = serde_json::json!(1.5);
    lines[1] = rec.to_string();
    std::fs::write(&path, lines.join("\n") + "\n").unwrap();
    let out = run(p, &["verify"]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL delta range and sign"));
}

#[test]
fn token_schema_mismatch_fails_fast() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    ok(p, &["generate"]);
    ok(p, &["encode"]);
    let side = p.join("tokens.txt.schema.json");
    let mut v: serde_json::Value = serde_json::from_slice(&std::fs::read(&side).unwrap()).unwrap();
    v["header"]["schema_hash"] = serde_json::json!("0000");
    std::fs::write(&side, v.to_string()).unwrap();
    let out = run(p, &["train-density", "--tokens", "tokens.txt"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("schema mismatch"));
}
