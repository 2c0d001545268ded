use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use serde::Serialize;
use serde_json::Value;
use splitseg::eval::{
    compare_reports, evaluate_per_class, model_misrouting, predict_all, render_bar_chart, render_csv, render_table,
    BarPair, EvalSide, MatchKind, Predictor,
};
use splitseg::pipeline::{CheckpointKind, CheckpointRecord};
use splitseg::split::{default_stage_ious, surgery_from_checkpoint};
use splitseg::synth::{dataset_digest, generate_split, load_dataset, save_dataset, split_validation_per_class, Split};
use splitseg::train::{train_all_heads, train_baseline, train_cascade_stages, TrainConfig, TrainMode};
use splitseg::{
    CascadeModel, ClassLabel, Dataset, DatasetSpec, Detection, Error,
    InferenceOptions, InitMode, MaskLogits, PipelineConfig, PipelineModel, Result, SplitModel,
};

use crate::config::{resolve, Overrides};
use crate::manifest::{io_err, Artifact, RunManifest, MANIFEST_VERSION};
use clap::Parser as _;

use crate::{
    Cli, Command, CompareArgs, EvaluateArgs, GenerateArgs, InitArg, KindArg, ModeArg, RerunArgs, SurgeryArgs,
    TrainBaselineArgs, TrainFlags, TrainHeadsArgs, OUT_ENV,
};

pub fn run(command: Command, argv: &[String]) -> Result<()> {
    match command {
        Command::Generate(a) => generate(a, argv),
        Command::TrainBaseline(a) => train_baseline_cmd(a, argv),
        Command::Surgery(a) => surgery_cmd(a, argv),
        Command::TrainHeads(a) => train_heads_cmd(a, argv),
        Command::Evaluate(a) => evaluate(a, argv),
        Command::Compare(a) => compare(a, argv),
        Command::Rerun(a) => rerun(a),
    }
}

fn out_root() -> PathBuf {
    std::env::var_os(OUT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("splitseg-out"))
}

fn out_path(given: Option<PathBuf>, default_name: &str) -> Result<PathBuf> {
    let p = given.unwrap_or_else(|| out_root().join(default_name));
    if let Some(parent) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    Ok(p)
}

/// Collects what goes into a command's manifest.
struct Recorder {
    command: &'static str,
    argv: Vec<String>,
    start: Instant,
    config: Value,
    seed: Option<u64>,
    inputs: BTreeMap<String, Artifact>,
    outputs: BTreeMap<String, Artifact>,
}

impl Recorder {
    fn new(command: &'static str, argv: &[String]) -> Self {
        Recorder {
            command,
            argv: argv.to_vec(),
            start: Instant::now(),
            config: Value::Null,
            seed: None,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }

    fn input(&mut self, role: &str, path: &Path) -> Result<()> {
        self.inputs.insert(role.to_string(), Artifact::of(path)?);
        Ok(())
    }

    fn output(&mut self, role: &str, path: &Path) -> Result<()> {
        self.outputs.insert(role.to_string(), Artifact::of(path)?);
        Ok(())
    }

    /// Writes the manifest next to `primary` and returns its path.
    fn finish(self, primary: &Path) -> Result<PathBuf> {
        let manifest = RunManifest {
            version: MANIFEST_VERSION,
            command: self.command.to_string(),
            argv: self.argv,
            working_dir: std::env::current_dir().map_err(|e| io_err(Path::new("."), e))?,
            config: self.config,
            seed: self.seed,
            inputs: self.inputs,
            outputs: self.outputs,
            wall_clock_secs: self.start.elapsed().as_secs_f64(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
        };
        let path = RunManifest::path_for(primary);
        manifest.save(&path)?;
        Ok(path)
    }
}

fn write_json<V: Serialize>(value: &V, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(|e| io_err(path, e))
}

fn read_json<V: serde::de::DeserializeOwned>(path: &Path) -> Result<V> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        record: path.display().to_string(),
        message: e.to_string(),
    })
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(suffix);
    path.with_file_name(name)
}

fn split_dir(data: &Path, split: Split) -> PathBuf {
    data.join(split.name())
}

fn load_split(data: &Path, split: Split) -> Result<Dataset> {
    let dir = split_dir(data, split);
    if !dir.is_dir() {
        return Err(Error::Empty(format!("{} has no `{}` split", data.display(), split.name())));
    }
    load_dataset(&dir)
}

fn generate(a: GenerateArgs, argv: &[String]) -> Result<()> {
    let mut rec = Recorder::new("generate", argv);
    let mut flags = Overrides::default();
    flags
        .set("num_classes", a.classes)
        .set("train_samples", a.train)
        .set("val_samples", a.val)
        .set("height", a.height)
        .set("width", a.width)
        .set("max_instances", a.max_instances)
        .set("rare_class", a.rare_class)
        .set("seed", Some(a.seed));
    if let Some(c) = &a.config {
        rec.input("config", c)?;
    }
    let (mut spec, _): (DatasetSpec, _) = resolve(DatasetSpec::default(), a.config.as_deref(), &flags)?;
    // The default rare class is the last one; follow a smaller catalog.
    if a.rare_class.is_none() && spec.rare_class.is_some_and(|r| r as usize > spec.num_classes) {
        spec.rare_class = Some(spec.num_classes as u32);
    }
    let config = serde_json::to_value(&spec)?;
    spec.validate()?;
    rec.config = config;
    rec.seed = Some(spec.seed);
    let out = out_path(a.out, "data")?;
    let catalog = spec.catalog();
    for split in [Split::Train, Split::Val] {
        let samples = generate_split(&spec, split)?;
        let digest = dataset_digest(&catalog, &samples)?;
        println!("{}: {} images, digest {digest}", split.name(), samples.len());
        if split == Split::Val {
            for class in catalog.foreground() {
                let sub = split_validation_per_class(&samples, class);
                println!("  {:<10} {:>4} images", catalog.name(class), sub.samples.len());
            }
        }
        save_dataset(
            &Dataset {
                catalog: catalog.clone(),
                samples,
            },
            &split_dir(&out, split),
        )?;
    }
    write_json(&spec, &out.join("spec.json"))?;
    rec.output("dataset", &out)?;
    let m = rec.finish(&out)?;
    println!("wrote {} ({})", out.display(), m.display());
    Ok(())
}

fn train_config(base: TrainConfig, flags: &TrainFlags, rec: &mut Recorder) -> Result<TrainConfig> {
    let mut o = Overrides::default();
    o.set("epochs", flags.epochs)
        .set("learning_rate", flags.lr)
        .set("batch_size", flags.batch_size)
        .set("warmup_steps", flags.warmup_steps)
        .set("seed", flags.seed);
    if let Some(c) = &flags.config {
        rec.input("config", c)?;
    }
    let (tc, config): (TrainConfig, _) = resolve(base, flags.config.as_deref(), &o)?;
    tc.validate()?;
    rec.config = config;
    rec.seed = Some(tc.seed);
    Ok(tc)
}

fn write_jsonl<I: IntoIterator<Item = Value>>(lines: I, path: &Path) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| io_err(path, e))?;
    for line in lines {
        writeln!(f, "{line}").map_err(|e| io_err(path, e))?;
    }
    Ok(())
}

fn tagged<V: Serialize>(tag: &str, value: &V) -> Value {
    let mut v = serde_json::to_value(value).unwrap_or(Value::Null);
    if let Value::Object(m) = &mut v {
        m.insert("record".into(), Value::String(tag.into()));
    }
    v
}

fn train_baseline_cmd(a: TrainBaselineArgs, argv: &[String]) -> Result<()> {
    let mut rec = Recorder::new("train-baseline", argv);
    let tc = train_config(TrainConfig::default(), &a.train, &mut rec)?;
    let train = load_split(&a.data, Split::Train)?;
    rec.input("train", &split_dir(&a.data, Split::Train))?;
    let val = if a.no_val {
        None
    } else {
        rec.input("val", &split_dir(&a.data, Split::Val))?;
        let v = load_split(&a.data, Split::Val)?;
        let d = dataset_digest(&v.catalog, &v.samples)?;
        Some((v, d))
    };
    let first = train
        .samples
        .first()
        .ok_or_else(|| Error::Empty("training split has no samples".into()))?;
    let cfg = PipelineConfig {
        image_height: first.height(),
        image_width: first.width(),
        num_classes: train.catalog.len(),
        init_seed: tc.seed,
        ..PipelineConfig::default()
    };
    let model = PipelineModel::<f32>::initialized(cfg, train.catalog.clone())?;
    let run = train_baseline(model, &train.samples, val.as_ref().map(|(v, d)| (v, d.as_str())), &tc)?;
    let out = out_path(a.out, "baseline.ckpt")?;
    run.record.save(&out)?;
    let log = with_suffix(&out, ".log.jsonl");
    write_jsonl(
        run.log
            .steps
            .iter()
            .map(|s| tagged("step", s))
            .chain(run.log.epochs.iter().map(|e| tagged("epoch", e))),
        &log,
    )?;
    for e in &run.log.epochs {
        println!(
            "epoch {:>2}  loss {:.4}  val mask AP {}",
            e.epoch,
            e.mean_losses.total(),
            e.val_metric.map_or("-".to_string(), |m| format!("{m:.4}"))
        );
    }
    match run.plateau_epoch {
        Some(e) => println!("plateau reached after epoch {e}"),
        None => println!("stopped at the epoch cap"),
    }
    rec.output("checkpoint", &out)?;
    rec.output("log", &log)?;
    let m = rec.finish(&out)?;
    println!("wrote {} digest {} ({})", out.display(), run.record.digest(), m.display());
    Ok(())
}

fn surgery_cmd(a: SurgeryArgs, argv: &[String]) -> Result<()> {
    let mut rec = Recorder::new("surgery", argv);
    let record = CheckpointRecord::load(&a.checkpoint)?;
    rec.input("checkpoint", &a.checkpoint)?;
    let init = match a.init {
        InitArg::Slice => InitMode::Slice,
        InitArg::Fresh => InitMode::Fresh,
    };
    rec.config = serde_json::json!({ "init": init, "cascade_stages": a.cascade_stages });
    let split = surgery_from_checkpoint::<f32>(&record, init)?;
    let out_record = match a.cascade_stages {
        None => split.to_checkpoint()?,
        Some(k) => CascadeModel::from_split(split, &default_stage_ious(k))?.to_checkpoint()?,
    };
    let out = out_path(a.out, "split.ckpt")?;
    out_record.save(&out)?;
    rec.output("checkpoint", &out)?;
    let m = rec.finish(&out)?;
    println!(
        "{} heads ({} init) from {}; wrote {} ({})",
        record.header.catalog.len(),
        init.name(),
        record.digest(),
        out.display(),
        m.display()
    );
    Ok(())
}

fn parse_classes(spec: &str, catalog: &splitseg::ClassCatalog) -> Result<Vec<ClassLabel>> {
    if spec.trim() == "all" {
        return Ok(catalog.foreground().collect());
    }
    let mut out = Vec::new();
    for tok in spec.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        let class = match tok.parse::<u32>() {
            Ok(id) => ClassLabel::foreground(id, catalog.len())
                .map_err(|_| Error::InvalidArgument(format!("class id {id} outside 1..={}", catalog.len())))?,
            Err(_) => catalog
                .foreground()
                .find(|c| catalog.name(*c) == tok)
                .ok_or_else(|| Error::InvalidArgument(format!("unknown class `{tok}`")))?,
        };
        if !out.contains(&class) {
            out.push(class);
        }
    }
    if out.is_empty() {
        return Err(Error::InvalidArgument("empty class list".into()));
    }
    Ok(out)
}

fn train_heads_cmd(a: TrainHeadsArgs, argv: &[String]) -> Result<()> {
    let mut rec = Recorder::new("train-heads", argv);
    let tc = train_config(TrainConfig::heads(), &a.train, &mut rec)?;
    let record = CheckpointRecord::load(&a.checkpoint)?;
    rec.input("checkpoint", &a.checkpoint)?;
    let (split, cascade_ious) = match record.header.kind {
        CheckpointKind::Split => (SplitModel::<f32>::from_checkpoint(&record)?, None),
        CheckpointKind::Cascade => {
            let c = CascadeModel::<f32>::from_checkpoint(&record)?;
            let ious = c.stage_ious();
            (c.first, Some(ious))
        }
        CheckpointKind::Baseline => {
            return Err(Error::IncompatibleModel(
                "train-heads needs a split checkpoint; run `surgery` first".into(),
            ))
        }
    };
    let data = load_split(&a.data, Split::Train)?;
    rec.input("train", &split_dir(&a.data, Split::Train))?;
    if data.catalog != split.base.catalog {
        return Err(Error::IncompatibleModel("dataset classes differ from the checkpoint's".into()));
    }
    let classes = parse_classes(&a.classes, &data.catalog)?;
    let mode = match a.mode {
        ModeArg::Sequential => TrainMode::Sequential,
        ModeArg::Parallel => TrainMode::Parallel,
    };
    let jobs = a.jobs.unwrap_or(classes.len());
    if let Value::Object(m) = &mut rec.config {
        m.insert("classes".into(), serde_json::to_value(&classes)?);
        m.insert("mode".into(), serde_json::to_value(mode)?);
    }
    let trained = train_all_heads(&split, &classes, &data.samples, &tc, mode, jobs)?;
    let mut lines: Vec<Value> = classes
        .iter()
        .filter_map(|c| trained.provenance.heads.get(&c.0).map(|m| (c, m)))
        .map(|(c, meta)| {
            println!(
                "{:<10} loss {:.4} -> {:.4} ({} steps)",
                data.catalog.name(*c),
                meta.initial_loss,
                meta.final_loss,
                meta.steps
            );
            let mut v = tagged("head", meta);
            v["class"] = Value::from(c.0);
            v
        })
        .collect();
    let out_record = match cascade_ious {
        None => trained.to_checkpoint()?,
        Some(ious) => {
            let mut c = CascadeModel::from_split(trained, &ious)?;
            let steps = train_cascade_stages(&mut c, &data.samples, &tc)?;
            lines.extend(steps.iter().map(|s| tagged("cascade_step", s)));
            c.to_checkpoint()?
        }
    };
    let out = out_path(a.out, "heads.ckpt")?;
    out_record.save(&out)?;
    let log = with_suffix(&out, ".log.jsonl");
    write_jsonl(lines, &log)?;
    rec.output("checkpoint", &out)?;
    rec.output("log", &log)?;
    let m = rec.finish(&out)?;
    println!("wrote {} digest {} ({})", out.display(), out_record.digest(), m.display());
    Ok(())
}

/// Ground truth turned into perfect detections.
fn oracle_predictions(dataset: &Dataset) -> Result<Vec<Vec<Detection<f32>>>> {
    dataset
        .samples
        .iter()
        .map(|s| {
            s.annotations
                .iter()
                .map(|a| {
                    Ok(Detection {
                        bbox: a.bbox.cast(),
                        class: a.class,
                        score: 1.0,
                        mask: a.mask.clone(),
                        logits: MaskLogits::new(1, vec![1.0])?,
                    })
                })
                .collect()
        })
        .collect()
}

fn predictions<P: Predictor<f32>>(model: &P, dataset: &Dataset, opts: &InferenceOptions) -> Result<Vec<Vec<Detection<f32>>>> {
    predict_all(model, &dataset.samples, opts)
}

fn evaluate(a: EvaluateArgs, argv: &[String]) -> Result<()> {
    let mut rec = Recorder::new("evaluate", argv);
    let val = load_split(&a.data, Split::Val)?;
    rec.input("val", &split_dir(&a.data, Split::Val))?;
    let data_digest = dataset_digest(&val.catalog, &val.samples)?;
    let mut opts = InferenceOptions::default();
    if let Some(t) = a.score_thresh {
        opts.score_thresh = t;
    }
    let kind = match a.kind {
        KindArg::Mask => MatchKind::Mask,
        KindArg::Box => MatchKind::Box,
    };
    rec.config = serde_json::json!({
        "oracle": a.oracle,
        "kind": format!("{:?}", kind).to_lowercase(),
        "score_thresh": opts.score_thresh,
        "max_dets": opts.max_dets,
        "proposal_count": opts.proposal_count,
    });
    let out = out_path(a.out, "report.json")?;
    let mut misrouting = None;
    let (tag, ckpt_digest, preds) = match (&a.checkpoint, a.oracle) {
        (_, true) => ("oracle".to_string(), "oracle".to_string(), oracle_predictions(&val)?),
        (Some(path), false) => {
            let record = CheckpointRecord::load(path)?;
            rec.input("checkpoint", path)?;
            if record.header.catalog != val.catalog {
                return Err(Error::IncompatibleModel("dataset classes differ from the checkpoint's".into()));
            }
            let preds = match record.header.kind {
                CheckpointKind::Baseline => predictions(&PipelineModel::<f32>::from_checkpoint(&record)?, &val, &opts)?,
                CheckpointKind::Split => {
                    let m = SplitModel::<f32>::from_checkpoint(&record)?;
                    misrouting = Some(model_misrouting(&m, &val.samples, &opts)?);
                    predictions(&m, &val, &opts)?
                }
                CheckpointKind::Cascade => predictions(&CascadeModel::<f32>::from_checkpoint(&record)?, &val, &opts)?,
            };
            let kind_name = serde_json::to_value(record.header.kind)?;
            let tag = a.tag.clone().unwrap_or_else(|| kind_name.as_str().unwrap_or("model").to_string());
            (tag, record.digest().to_string(), preds)
        }
        (None, false) => return Err(Error::InvalidArgument("--checkpoint or --oracle is required".into())),
    };
    let side = EvalSide {
        model_tag: a.tag.unwrap_or(tag),
        checkpoint_digest: ckpt_digest,
        dataset_digest: data_digest,
        classes: evaluate_per_class(&val.catalog, &val.samples, &preds, kind)?,
    };
    write_json(&side, &out)?;
    println!("{:<10} {:>6} {:>6} {:>7}", "class", "images", "inst", "AP");
    for c in &side.classes {
        println!(
            "{:<10} {:>6} {:>6} {:>7}",
            c.name,
            c.images,
            c.instances,
            c.breakdown.ap.map_or("-".to_string(), |v| format!("{v:.4}"))
        );
    }
    println!("mean AP {}", side.mean_ap().map_or("-".to_string(), |v| format!("{v:.4}")));
    rec.output("report", &out)?;
    if let Some(st) = misrouting {
        println!(
            "misrouting: {} of {} matched ROIs routed to the wrong head",
            st.misrouted, st.matched
        );
        let p = with_suffix(&out, ".misrouting.json");
        write_json(&st, &p)?;
        rec.output("misrouting", &p)?;
    }
    let m = rec.finish(&out)?;
    println!("wrote {} ({})", out.display(), m.display());
    Ok(())
}

fn compare(a: CompareArgs, argv: &[String]) -> Result<()> {
    let mut rec = Recorder::new("compare", argv);
    let before: EvalSide = read_json(&a.before)?;
    let after: EvalSide = read_json(&a.after)?;
    rec.input("before", &a.before)?;
    rec.input("after", &a.after)?;
    let report = compare_reports(&before, &after)?;
    print!("{}", render_table(&report));
    let out = out_path(a.out, "comparison.json")?;
    write_json(&report, &out)?;
    rec.output("comparison", &out)?;
    if let Some(p) = a.csv {
        let p = out_path(Some(p), "")?;
        fs::write(&p, render_csv(&report)).map_err(|e| io_err(&p, e))?;
        rec.output("csv", &p)?;
    }
    if let Some(p) = a.plot {
        let p = out_path(Some(p), "")?;
        let pairs: Vec<BarPair> = report
            .classes
            .iter()
            .map(|c| BarPair {
                label: c.name.clone(),
                before: c.before.ap.unwrap_or(0.0),
                after: c.after.ap.unwrap_or(0.0),
            })
            .collect();
        let title = format!("Mask AP per class: {} vs {}", before.model_tag, after.model_tag);
        fs::write(&p, render_bar_chart(&title, &pairs)).map_err(|e| io_err(&p, e))?;
        rec.output("plot", &p)?;
    }
    let m = rec.finish(&out)?;
    info!("manifest {}", m.display());
    Ok(())
}

fn rerun(a: RerunArgs) -> Result<()> {
    let manifest = RunManifest::load(&a.manifest)?;
    let argv: Vec<String> = std::iter::once("splitseg".to_string()).chain(manifest.argv.iter().cloned()).collect();
    let mut command = Cli::try_parse_from(&argv)
        .map_err(|e| Error::InvalidArgument(format!("manifest arguments do not parse: {e}")))?
        .command;
    if matches!(command, Command::Rerun(_)) {
        return Err(Error::InvalidArgument("manifest does not describe a replayable command".into()));
    }
    for (role, art) in &manifest.inputs {
        let path = manifest.working_dir.join(&art.path);
        let now = Artifact::of(&path)?;
        if now.digest != art.digest {
            return Err(Error::Parse {
                record: path.display().to_string(),
                message: format!("input `{role}` changed since the recorded run"),
            });
        }
    }
    let scratch = match a.scratch {
        Some(s) => s,
        None => {
            let stamp = std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_nanos())
                .unwrap_or(0);
            out_root().join("rerun").join(format!("{}-{stamp}", manifest.command))
        }
    };
    fs::create_dir_all(&scratch).map_err(|e| io_err(&scratch, e))?;
    command.rebase(&manifest.working_dir);
    let primary = command
        .redirect_outputs(&scratch)
        .ok_or_else(|| Error::InvalidArgument("replayed command has no output".into()))?;
    info!("replaying `{}` into {}", manifest.command, scratch.display());
    run(command, &manifest.argv)?;
    let replay = RunManifest::load(&RunManifest::path_for(&primary))?;
    let mut mismatches = Vec::new();
    for (role, art) in &manifest.outputs {
        match replay.outputs.get(role) {
            Some(new) if new.digest == art.digest => println!("{role:<12} {}  ok", art.digest),
            Some(new) => {
                println!("{role:<12} {} != {}", art.digest, new.digest);
                mismatches.push(role.clone());
            }
            None => {
                println!("{role:<12} missing from the replay");
                mismatches.push(role.clone());
            }
        }
    }
    if !mismatches.is_empty() {
        return Err(Error::Parse {
            record: a.manifest.display().to_string(),
            message: format!("replay produced different outputs: {}", mismatches.join(", ")),
        });
    }
    println!("reproduced {} outputs of `{}`", manifest.outputs.len(), manifest.command);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn outputs_are_redirected() {
        let argv = ["splitseg", "compare", "--before", "a.json", "--after", "/b.json", "--out", "x/c.json", "--plot=p/chart.svg"];
        let mut cmd = Cli::try_parse_from(argv).unwrap().command;
        cmd.rebase(Path::new("/w"));
        let primary = cmd.redirect_outputs(Path::new("/s"));
        assert_eq!(primary, Some(PathBuf::from("/s/c.json")));
        let Command::Compare(a) = cmd else { panic!() };
        assert_eq!(a.before, PathBuf::from("/w/a.json"));
        assert_eq!(a.after, PathBuf::from("/b.json"));
        assert_eq!(a.plot, Some(PathBuf::from("/s/chart.svg")));
        assert_eq!(a.csv, None);
    }

    #[test]
    fn default_output_is_pinned() {
        let mut cmd = Cli::try_parse_from(["splitseg", "generate", "--seed", "1"]).unwrap().command;
        assert_eq!(cmd.redirect_outputs(Path::new("/s")), Some(PathBuf::from("/s/data")));
    }

    #[test]
    fn class_lists_parse_ids_and_names() {
        let cat = splitseg::ClassCatalog::new(vec!["disk".into(), "square".into()]);
        assert_eq!(parse_classes("all", &cat).unwrap().len(), 2);
        assert_eq!(parse_classes("square, 1", &cat).unwrap(), vec![ClassLabel(2), ClassLabel(1)]);
        assert!(parse_classes("3", &cat).is_err());
        assert!(parse_classes("hexagon", &cat).is_err());
    }
}
