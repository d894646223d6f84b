use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::info;
use serde_json::{json, Value};

use ocdtw_core::eval::summary_block;
use ocdtw_core::features::{build_feature_sequence, load_frame_dir, FeatureRecipe, HeadEncoding};
use ocdtw_core::pipeline::{calibrate_model, evaluate, train_classes, EvalConfig, TrainConfig};
use ocdtw_core::seqmodel::{load_dataset, load_model, load_sequence, save_dataset, save_model, save_sequence};
use ocdtw_core::spotting::spot;
use ocdtw_core::synth::{generate, SynthConfig};
use ocdtw_core::{DetectionResult, Sequence};

use crate::provenance::{comment, record};
use crate::{CalibrateArgs, Cli, Command, EvalArgs, FeaturesArgs, SpotArgs, SynthArgs, TrainArgs, DEFAULT_SEED};

pub fn run(cli: &Cli) -> Result<()> {
    let seed = cli.seed.unwrap_or(DEFAULT_SEED);
    match &cli.command {
        Command::Synth(args) => synth(args, cli.seed, &cli.out),
        Command::Train(args) => train(args, seed, &cli.out),
        Command::Calibrate(args) => calibrate(args, seed, &cli.out),
        Command::Spot(args) => spot_cmd(args, seed, &cli.out),
        Command::Eval(args) => eval(args, seed, &cli.out),
        Command::Features(args) => features(args, seed, &cli.out),
    }
}

/// Prints a line to stdout; a closed pipe (`ocdtw ... | head`) is not an error.
fn emit(line: impl std::fmt::Display) -> Result<()> {
    use std::io::Write;
    match writeln!(std::io::stdout().lock(), "{line}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

macro_rules! say {
    ($($arg:tt)*) => {
        emit(format_args!($($arg)*))?
    };
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    info!("wrote {}", path.display());
    Ok(())
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    write(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

fn synth(args: &SynthArgs, seed: Option<u64>, out: &Path) -> Result<()> {
    let mut config: SynthConfig = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => SynthConfig::default(),
    };
    macro_rules! set {
        ($($field:ident),*) => {
            $(if let Some(v) = args.$field { config.$field = v; })*
        };
    }
    set!(
        classes,
        samples_per_class,
        streams,
        instances,
        dim,
        template_length,
        noise,
        warp,
        amplitude,
        background,
        glitch_rate,
        glitch_scale,
        gap_min,
        gap_max
    );
    if let Some(s) = seed {
        config.seed = s;
    }
    let data = generate(&config)?;
    let prov = record("synth", config.seed, &config);
    create_dir(out)?;
    save_dataset(&data.train, &out.join("train"), Some(&prov))?;
    save_dataset(&data.test, &out.join("test"), Some(&prov))?;
    write_json(
        &out.join("synth-config.json"),
        &json!({ "provenance": prov, "config": config }),
    )?;
    say!(
        "{} training samples, {} test streams, {} labelled instances",
        data.train.sequences().len(),
        data.test.sequences().len(),
        data.test.labels().values().map(Vec::len).sum::<usize>()
    );
    Ok(())
}

fn train(args: &TrainArgs, seed: u64, out: &Path) -> Result<()> {
    let data = load_dataset(&args.data)?;
    for class in &args.classes {
        if !data.class_names().contains(class) {
            bail!("class {class:?} not in {}", args.data.display());
        }
    }
    let config = TrainConfig {
        variant: args.variant,
        gmm: args.gmm.config(),
        ape: args.ape.config(),
        seed,
    };
    create_dir(out)?;
    for (class, model) in train_classes(&data, &config)? {
        if !args.classes.is_empty() && !args.classes.contains(&class) {
            continue;
        }
        let path = out.join(format!("{class}.model.json"));
        save_model(&model, &path)?;
        say!("{class}: {} frames -> {}", model.model_length(), path.display());
    }
    Ok(())
}

fn calibrate(args: &CalibrateArgs, seed: u64, out: &Path) -> Result<()> {
    let data = load_dataset(&args.data)?;
    let by_class = data.samples_by_class()?;
    create_dir(out)?;
    for path in &args.models {
        let model = load_model(path)?;
        let class = model.class_name().to_string();
        let Some(samples) = by_class.get(&class) else {
            bail!(
                "{}: class {class:?} has no samples in {}",
                path.display(),
                args.data.display()
            );
        };
        let (model, report) = calibrate_model(model, samples)?;
        save_model(&model, &out.join(format!("{class}.model.json")))?;
        let prov = record("calibrate", seed, &json!({ "class": class }));
        write_json(
            &out.join(format!("{class}.calibration.json")),
            &json!({ "provenance": prov, "class": class, "report": report }),
        )?;
        say!("{class}: threshold {} ({} samples)", report.threshold, samples.len());
    }
    Ok(())
}

/// Sequences of a `.seq.csv` file or of every such file in a directory, in name order.
fn load_inputs(input: &Path) -> Result<Vec<Sequence>> {
    if !input.is_dir() {
        return Ok(vec![load_sequence(input)?]);
    }
    let mut paths: Vec<PathBuf> = fs::read_dir(input)
        .with_context(|| format!("reading {}", input.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()
        .with_context(|| format!("reading {}", input.display()))?;
    paths.retain(|p| p.to_str().is_some_and(|s| s.ends_with(".seq.csv")));
    paths.sort();
    if paths.is_empty() {
        bail!("no .seq.csv files in {}", input.display());
    }
    paths.iter().map(|p| Ok(load_sequence(p)?)).collect()
}

fn detection_rows(dets: &[DetectionResult]) -> String {
    let mut out = String::new();
    for d in dets {
        let _ = writeln!(out, "{},{},{},{}", d.class_name, d.begin, d.end, d.terminal_cost);
    }
    out
}

fn spot_cmd(args: &SpotArgs, seed: u64, out: &Path) -> Result<()> {
    let mut models = Vec::with_capacity(args.models.len());
    for path in &args.models {
        let model = load_model(path)?;
        let model = match args.threshold {
            Some(beta) => model.with_threshold(beta)?,
            None if model.threshold().is_none() => {
                bail!(
                    "{} has no threshold; run calibrate first or pass --threshold",
                    path.display()
                )
            }
            None => model,
        };
        models.push(model);
    }
    let classes: Vec<&str> = models.iter().map(|m| m.class_name()).collect();
    let spot_config = args.spot.config();
    let prov = record(
        "spot",
        seed,
        &json!({ "classes": classes, "threshold": args.threshold, "spot": spot_config }),
    );
    create_dir(out)?;
    for seq in load_inputs(&args.input)? {
        let mut dets = Vec::new();
        for model in &models {
            dets.extend(spot(model, &seq, &spot_config)?);
        }
        dets.sort_by(|a, b| (a.begin, a.end, &a.class_name).cmp(&(b.begin, b.end, &b.class_name)));
        for d in &dets {
            say!(
                "{}",
                json!({
                    "sequence": seq.id(),
                    "class": d.class_name,
                    "begin": d.begin,
                    "end": d.end,
                    "cost": d.terminal_cost,
                })
            );
        }
        let text = format!("{}class,begin,end,cost\n{}", comment(&prov), detection_rows(&dets));
        write(&out.join(format!("{}.detections.csv", seq.id())), &text)?;
    }
    Ok(())
}

fn eval(args: &EvalArgs, seed: u64, out: &Path) -> Result<()> {
    let train = load_dataset(&args.train)?;
    let test = load_dataset(&args.test)?;
    let config = EvalConfig {
        methods: args.methods.clone(),
        dont_care: args.dont_care.clone(),
        gmm: args.gmm.config(),
        ape: args.ape.config(),
        spot: args.spot.config(),
        seed,
    };
    let evaluation = evaluate(&train, &test, &config)?;
    let prov = comment(&record("eval", seed, &config));
    let table = evaluation.report.rank_table()?;
    let summary = summary_block(&table)?;
    create_dir(out)?;
    write(
        &out.join("eval-report.csv"),
        &format!("{prov}{}", evaluation.report.to_csv()),
    )?;
    write(&out.join("ranks.csv"), &format!("{prov}{}", table.to_csv()))?;
    write(&out.join("summary.yaml"), &format!("{prov}{summary}"))?;
    let mut dets = format!("{prov}method,sequence,class,begin,end,cost\n");
    for (method, per_seq) in &evaluation.detections {
        for (seq, list) in per_seq {
            for line in detection_rows(list).lines() {
                let _ = writeln!(dets, "{},{seq},{line}", method.name());
            }
        }
    }
    write(&out.join("detections.csv"), &dets)?;

    let mut totals: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    for row in &evaluation.report.rows {
        let t = totals.entry(row.method.as_str()).or_default();
        t.0 += row.accuracy;
        t.1 += 1;
    }
    say!("mean_accuracy:");
    for method in &config.methods {
        if let Some((sum, n)) = totals.get(method.name()) {
            say!("  {}: {:.4}", method.name(), sum / *n as f64);
        }
    }
    say!("{}", summary.trim_end());
    Ok(())
}

fn parse_grid(grid: &str) -> Result<(usize, usize)> {
    let parsed = grid
        .split_once(['x', 'X'])
        .and_then(|(r, c)| Some((r.trim().parse().ok()?, c.trim().parse().ok()?)));
    match parsed {
        Some((r, c)) if r > 0 && c > 0 => Ok((r, c)),
        _ => bail!("--grid expects ROWSxCOLS with positive sizes, got {grid:?}"),
    }
}

fn features(args: &FeaturesArgs, seed: u64, out: &Path) -> Result<()> {
    let (grid_rows, grid_cols) = parse_grid(&args.grid)?;
    let recipe = FeatureRecipe {
        features: args.features.clone(),
        subject: args.subject,
        neighbours: args.neighbours.clone(),
        grid_rows,
        grid_cols,
        head_encoding: if args.one_hot {
            HeadEncoding::OneHot
        } else {
            HeadEncoding::Normalized
        },
    };
    let frames = load_frame_dir(&args.frames)?;
    let seq = build_feature_sequence(&args.id, &frames, &recipe)?.with_frame_rate(args.frame_rate)?;
    create_dir(out)?;
    let prov = record("features", seed, &recipe);
    let path = save_sequence(&seq, out, Some(&prov))?;
    say!("{} frames x {} values -> {}", seq.len(), seq.dim(), path.display());
    Ok(())
}
