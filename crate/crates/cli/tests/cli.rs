use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ocdtw(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ocdtw")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = ocdtw(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn small_synth(dir: &Path) {
    ok(&[
        "synth",
        "--out",
        p(dir),
        "--classes",
        "2",
        "--samples-per-class",
        "4",
        "--instances",
        "4",
        "--streams",
        "1",
    ]);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(ocdtw(&["--help"]).status.code(), Some(0));
    assert_eq!(ocdtw(&["bogus"]).status.code(), Some(1));
    assert_eq!(ocdtw(&["train"]).status.code(), Some(1));
    assert_eq!(
        ocdtw(&["eval", "--train", "a", "--test", "b", "--methods", "dtw-x"])
            .status
            .code(),
        Some(1)
    );

    let missing = dir.path().join("missing");
    let out = ocdtw(&["train", "--data", p(&missing)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing"));

    small_synth(dir.path());
    let train = dir.path().join("train");
    let out = ocdtw(&[
        "train",
        "--data",
        p(&train),
        "--components",
        "0",
        "--out",
        p(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let out = ocdtw(&["train", "--data", p(&train), "--class", "nope", "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(1));

    // a model without a threshold cannot spot unless one is given
    let models = dir.path().join("m");
    ok(&["train", "--data", p(&train), "--class", "class0", "--out", p(&models)]);
    let model = models.join("class0.model.json");
    let out = ocdtw(&["spot", "--model", p(&model), "--input", p(&dir.path().join("test"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("calibrate"));
    ok(&[
        "spot",
        "--model",
        p(&model),
        "--input",
        p(&dir.path().join("test")),
        "--threshold",
        "5",
        "--out",
        p(dir.path()),
    ]);
    let out = ocdtw(&[
        "spot",
        "--model",
        p(&model),
        "--input",
        p(&dir.path().join("test")),
        "--threshold",
        "-1",
    ]);
    assert_eq!(out.status.code(), Some(1));

    fs::write(&model, "{ not json").unwrap();
    let out = ocdtw(&[
        "calibrate",
        "--data",
        p(&train),
        "--model",
        p(&model),
        "--out",
        p(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn synth_flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("c.json");
    fs::write(
        &config,
        r#"{"classes": 2, "dim": 3, "samples_per_class": 3, "streams": 1, "instances": 2}"#,
    )
    .unwrap();
    ok(&[
        "synth",
        "--config",
        p(&config),
        "--dim",
        "4",
        "--seed",
        "11",
        "--out",
        p(dir.path()),
    ]);
    let written: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("synth-config.json")).unwrap()).unwrap();
    assert_eq!(written["config"]["classes"], 2);
    assert_eq!(written["config"]["dim"], 4);
    assert_eq!(written["config"]["seed"], 11);
    assert_eq!(written["provenance"]["command"], "synth");
    let labels = fs::read_to_string(dir.path().join("test/labels.csv")).unwrap();
    assert!(labels.starts_with("# {"));
    assert_eq!(labels.lines().filter(|l| l.starts_with("stream-")).count(), 2);
}

#[test]
fn train_calibrate_spot() {
    let dir = tempfile::tempdir().unwrap();
    small_synth(dir.path());
    let (train, test) = (dir.path().join("train"), dir.path().join("test"));
    let models = dir.path().join("models");
    let stdout = ok(&[
        "train",
        "--data",
        p(&train),
        "--variant",
        "ape",
        "--phi",
        "0.5",
        "--out",
        p(&models),
    ]);
    assert_eq!(stdout.lines().count(), 2);
    let m0 = models.join("class0.model.json");
    let m1 = models.join("class1.model.json");
    ok(&[
        "calibrate",
        "--data",
        p(&train),
        "--model",
        p(&m0),
        p(&m1),
        "--out",
        p(&models),
    ]);
    let cal: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(models.join("class1.calibration.json")).unwrap()).unwrap();
    assert_eq!(cal["report"]["held_out_costs"].as_array().unwrap().len(), 4);
    assert_eq!(cal["provenance"]["command"], "calibrate");

    let spots = dir.path().join("spots");
    let stdout = ok(&[
        "spot",
        "--model",
        p(&m0),
        p(&m1),
        "--input",
        p(&test.join("stream-00.seq.csv")),
        "--out",
        p(&spots),
    ]);
    let csv = fs::read_to_string(spots.join("stream-00.detections.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("# provenance: {"));
    assert_eq!(lines.next(), Some("class,begin,end,cost"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), stdout.lines().count());
    for (row, json) in rows.iter().zip(stdout.lines()) {
        let v: serde_json::Value = serde_json::from_str(json).unwrap();
        let f: Vec<&str> = row.split(',').collect();
        assert_eq!(v["class"], f[0]);
        assert_eq!(v["begin"].as_u64().unwrap().to_string(), f[1]);
        assert_eq!(v["end"].as_u64().unwrap().to_string(), f[2]);
        assert_eq!(v["cost"].as_f64().unwrap(), f[3].parse::<f64>().unwrap());
    }
}

#[test]
fn eval_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    small_synth(dir.path());
    let out = dir.path().join("eval");
    let stdout = ok(&[
        "eval",
        "--train",
        p(&dir.path().join("train")),
        "--test",
        p(&dir.path().join("test")),
        "--methods",
        "dtw-mean,dtw-ape",
        "--dont-care",
        "0,3",
        "--out",
        p(&out),
    ]);
    assert!(stdout.contains("mean_ranks:"));
    let report = fs::read_to_string(out.join("eval-report.csv")).unwrap();
    // 2 classes x 2 dont_care values x 2 methods
    assert_eq!(report.lines().filter(|l| !l.starts_with('#')).count(), 1 + 8);
    let ranks = fs::read_to_string(out.join("ranks.csv")).unwrap();
    let table = ocdtw_core::RankTable::from_csv("ranks.csv", &ranks).unwrap();
    assert_eq!(table.methods(), ["dtw-mean", "dtw-ape"]);
    assert_eq!(table.experiment_count(), 4);
    assert!(ocdtw_core::eval::friedman(&table).unwrap().chi_square >= 0.0);
    let summary = fs::read_to_string(out.join("summary.yaml")).unwrap();
    assert!(summary.starts_with("# provenance: "));
    assert!(summary.contains("critical_difference:"));
}

#[test]
fn features_from_frame_files() {
    let dir = tempfile::tempdir().unwrap();
    let frames = dir.path().join("frames");
    fs::create_dir(&frames).unwrap();
    for t in 0..3 {
        // subject 1 is a column of height t + 1; subject 2 sits in the far corner
        let mut grid = [0u32; 16];
        for y in 0..=t {
            grid[y * 4] = 1;
        }
        grid[15] = 2;
        let body: Vec<String> = grid
            .chunks(4)
            .map(|r| r.iter().map(u32::to_string).collect::<Vec<_>>().join(" "))
            .collect();
        fs::write(
            frames.join(format!("f{t}.mask.pgm")),
            format!("P2\n4 4\n2\n{}\n", body.join("\n")),
        )
        .unwrap();
        fs::write(frames.join(format!("f{t}.flow.csv")), "1,0\n".repeat(16)).unwrap();
        fs::write(frames.join(format!("f{t}.head.csv")), "0,0,2,2\n3,3\n3,5\n").unwrap();
    }
    let out = dir.path().join("out");
    let args = [
        "features",
        "--frames",
        p(&frames),
        "--features",
        "ftorso,finv,fmov,fhead",
        "--subject",
        "1",
        "--neighbours",
        "2",
        "--grid",
        "1x1",
        "--id",
        "kid",
        "--out",
        p(&out),
    ];
    ok(&args);
    let seq = ocdtw_core::seqmodel::load_sequence(&out.join("kid.seq.csv")).unwrap();
    assert_eq!((seq.len(), seq.dim()), (3, 4));
    assert_eq!(seq.frame(0)[0], 0.0);
    assert_eq!(seq.frame(2)[0], 2.0);
    assert_eq!(seq.frame(0)[2], 1.0);
    assert_eq!(seq.frame(0)[3], 3.0 / 11.0);
    let sidecar = fs::read_to_string(out.join("kid.seq.json")).unwrap();
    assert!(sidecar.contains("\"features\""));

    let mut bad = args.to_vec();
    bad[9] = "3by3";
    assert_eq!(ocdtw(&bad).status.code(), Some(1));
}

fn detections(csv: &Path) -> Vec<(String, usize, usize)> {
    fs::read_to_string(csv)
        .unwrap()
        .lines()
        .skip(2)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].to_string(), f[1].parse().unwrap(), f[2].parse().unwrap())
        })
        .collect()
}

#[test]
fn gmm_models_find_every_embedded_instance() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["synth", "--out", p(dir.path())]);
    let (train, test) = (dir.path().join("train"), dir.path().join("test"));
    let models = dir.path().join("models");
    ok(&["train", "--data", p(&train), "--variant", "gmm", "--out", p(&models)]);
    let files: Vec<String> = (0..3)
        .map(|c| p(&models.join(format!("class{c}.model.json"))).to_string())
        .collect();
    let mut args = vec!["calibrate", "--data", p(&train), "--out", p(&models), "--model"];
    args.extend(files.iter().map(String::as_str));
    ok(&args);
    let spots = dir.path().join("spots");
    let mut args = vec!["spot", "--input", p(&test), "--out", p(&spots), "--model"];
    args.extend(files.iter().map(String::as_str));
    ok(&args);

    let dataset = ocdtw_core::seqmodel::load_dataset(&test).unwrap();
    for seq in dataset.sequences() {
        let found = detections(&spots.join(format!("{}.detections.csv", seq.id())));
        for iv in dataset.labels_for(seq.id()) {
            assert!(
                found
                    .iter()
                    .any(|(c, b, e)| *c == iv.class_name && *b <= iv.end && *e >= iv.begin),
                "{} {iv:?} has no detection",
                seq.id()
            );
        }
    }
}

#[test]
fn wider_hulls_spot_at_least_as_often_at_a_shared_threshold() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["synth", "--out", p(dir.path())]);
    let (train, test) = (dir.path().join("train"), dir.path().join("test"));
    for phi in ["0", "0.2"] {
        let out = dir.path().join(phi);
        ok(&[
            "train",
            "--data",
            p(&train),
            "--variant",
            "ape",
            "--phi",
            phi,
            "--out",
            p(&out),
        ]);
    }
    let narrow = dir.path().join("0");
    for c in 0..3 {
        let model = narrow.join(format!("class{c}.model.json"));
        ok(&[
            "calibrate",
            "--data",
            p(&train),
            "--model",
            p(&model),
            "--out",
            p(&narrow),
        ]);
        let cal: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(narrow.join(format!("class{c}.calibration.json"))).unwrap())
                .unwrap();
        let beta = cal["report"]["threshold"].as_f64().unwrap().to_string();
        let mut counts = Vec::new();
        for phi in ["0", "0.2"] {
            let model = dir.path().join(phi).join(format!("class{c}.model.json"));
            let out = dir.path().join(format!("spots-{phi}-{c}"));
            let stdout = ok(&[
                "spot",
                "--model",
                p(&model),
                "--input",
                p(&test),
                "--threshold",
                &beta,
                "--out",
                p(&out),
            ]);
            counts.push(stdout.lines().count());
        }
        assert!(counts[1] >= counts[0], "class{c}: {counts:?}");
    }
}
