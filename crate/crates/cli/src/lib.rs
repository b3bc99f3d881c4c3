//! Commands behind the `sp` binary.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use social_processes::checkpoint::Checkpoint;
use social_processes::datasets::glancing::{
    eval_context_phases, generate_glancing_dataset, phase_count,
};
use social_processes::datasets::ingest::{ingest_dataset, resample};
use social_processes::datasets::mock::{write_mock_dataset, MockConfig};
use social_processes::datasets::{
    window_indices, ContextRegime, Dataset, DatasetKind, Split, Standardization, StoreHeader,
    WindowingConfig,
};
use social_processes::evaluation::{
    add_glancing_metrics, evaluate_tasks, fixed_context_tasks, plan_tasks, EvalConfig, EvalOutput,
};
use social_processes::models::{EncoderKind, FeatureLayout, ProcessModel};
use social_processes::run::RunConfig;
use social_processes::training::{train, TrainEvent};
use social_processes::{Error, Result};

pub const MANIFEST: &str = "manifest.json";

/// Environment variable naming the default directory for training runs.
pub const RUN_ROOT_ENV: &str = "SP_RUN_ROOT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    #[serde(default)]
    pub config: Option<PathBuf>,
    #[serde(default)]
    pub seed: Option<u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub settings: BTreeMap<String, String>,
    pub started_unix: u64,
    pub finished_unix: u64,
}

fn now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

impl RunManifest {
    fn new(command: &str) -> Self {
        Self {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config: None,
            seed: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
            settings: BTreeMap::new(),
            started_unix: now(),
            finished_unix: 0,
        }
    }

    fn set(&mut self, k: &str, v: impl ToString) {
        self.settings.insert(k.into(), v.to_string());
    }

    fn finish(mut self, dir: &Path) -> Result<PathBuf> {
        self.finished_unix = now();
        let path = dir.join(MANIFEST);
        write_json(&path, &self)?;
        Ok(path)
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(v).map_err(|e| Error::ser(path, e))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn write_jsonl<'a, T: Serialize + 'a>(
    path: &Path,
    rows: impl IntoIterator<Item = &'a T>,
) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in rows {
        serde_json::to_writer(&mut w, r).map_err(|e| Error::ser(path, e))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    BufReader::new(file)
        .lines()
        .enumerate()
        .map(|(k, l)| {
            let l = l.map_err(|e| Error::io(path, e))?;
            serde_json::from_str(&l).map_err(|e| Error::ser(path, format!("line {}: {e}", k + 1)))
        })
        .collect()
}

struct JsonlLog {
    path: PathBuf,
    w: BufWriter<fs::File>,
}

impl JsonlLog {
    fn create(path: PathBuf) -> Result<Self> {
        let f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        Ok(Self {
            path,
            w: BufWriter::new(f),
        })
    }

    fn push<T: Serialize>(&mut self, v: &T) -> Result<()> {
        serde_json::to_writer(&mut self.w, v).map_err(|e| Error::ser(&self.path, e))?;
        self.w
            .write_all(b"\n")
            .map_err(|e| Error::io(&self.path, e))
    }

    fn close(mut self) -> Result<()> {
        self.w.flush().map_err(|e| Error::io(&self.path, e))
    }
}

/// Writes the synthetic glancing dataset with its fixed evaluation context.
pub fn generate_synthetic(
    out: &Path,
    phase_step: f64,
    context_seed: u64,
    context_phases: Option<usize>,
) -> Result<PathBuf> {
    let mut man = RunManifest::new("generate-synthetic");
    create_dir(out)?;
    let seqs = generate_glancing_dataset(phase_step)?;
    let n_phases = phase_count(phase_step)?;
    // one eighth of the phases by default: 785 of 6284
    let count = context_phases.unwrap_or(n_phases / 8);
    let phases = eval_context_phases(n_phases, count, context_seed)?;
    let mut ds = Dataset::glancing(seqs);
    ds.header.phase_step = Some(phase_step);
    ds.header.eval_context_seed = Some(context_seed);
    ds.header.eval_context_phases = Some(phases);
    let path = out.join("glancing.jsonl");
    ds.write(&path)?;
    man.seed = Some(context_seed);
    man.set("phase_step", phase_step);
    man.set("sequences", ds.sequences.len());
    man.set("context_phases", count);
    man.outputs.push(path.clone());
    man.finish(out)?;
    Ok(path)
}

/// Writes scripted conversation groups in the raw interchange format.
pub fn mock_haggling(out: &Path, cfg: &MockConfig) -> Result<Vec<String>> {
    let mut man = RunManifest::new("mock-haggling");
    create_dir(out)?;
    let ids = write_mock_dataset(out, cfg)?;
    man.seed = Some(cfg.seed);
    man.set("groups", ids.len());
    man.set("participants", cfg.participants);
    man.set("seconds", cfg.seconds);
    man.set("sample_rate", cfg.sample_rate);
    man.outputs.extend(ids.iter().map(|g| out.join(g)));
    man.finish(out)?;
    Ok(ids)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub group_id: String,
    pub split: Split,
    pub participants: usize,
    pub frames: usize,
    pub windows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestionSummary {
    pub groups: Vec<GroupReport>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsFile {
    /// Which split the statistics were fitted on.
    pub source: String,
    pub groups: Vec<String>,
    pub standardization: Standardization,
}

/// Ingests raw groups, standardizes with training statistics and writes
/// windowed train/test stores.
pub fn preprocess(raw: &Path, out: &Path, windowing: &WindowingConfig) -> Result<IngestionSummary> {
    let mut man = RunManifest::new("preprocess");
    let steps = windowing.steps()?;
    let report = ingest_dataset(raw)?;
    let mut warnings = report.warnings;
    let mut timelines = Vec::new();
    for tl in &report.timelines {
        timelines.push(resample(tl, windowing.sample_rate)?);
    }
    let train_groups: Vec<String> = timelines
        .iter()
        .filter(|t| t.split == Split::Train)
        .map(|t| t.group_id.clone())
        .collect();
    let rows = timelines
        .iter()
        .filter(|t| t.split == Split::Train)
        .flat_map(|t| t.values.chunks(t.dim));
    let stats = Standardization::fit_behavior(rows)?;
    for tl in &mut timelines {
        stats.apply(&mut tl.values)?;
    }
    create_dir(out)?;
    let mut groups = Vec::new();
    for split in [Split::Train, Split::Test] {
        let mut header = StoreHeader::new(
            DatasetKind::Windows,
            FeatureLayout::Behavior,
            tl_dim(&timelines),
        );
        header.windowing = Some(windowing.clone());
        header.standardization = Some(stats.clone());
        header.stats_source = Some("train".into());
        let mut ds = Dataset {
            header,
            timelines: Vec::new(),
            windows: Vec::new(),
            sequences: Vec::new(),
        };
        for tl in timelines.iter().filter(|t| t.split == split) {
            let ti = ds.timelines.len();
            let idx = window_indices(tl.n_frames, steps);
            if idx.is_empty() {
                warnings.push(format!("group {}: too short for one window", tl.group_id));
            }
            groups.push(GroupReport {
                group_id: tl.group_id.clone(),
                split,
                participants: tl.participants.len(),
                frames: tl.n_frames,
                windows: idx.len(),
            });
            ds.windows.extend(idx.into_iter().map(|w| (ti, w)));
            ds.timelines.push(tl.clone());
        }
        let name = match split {
            Split::Train => "train.jsonl",
            Split::Test => "test.jsonl",
        };
        let path = out.join(name);
        ds.write(&path)?;
        man.outputs.push(path);
    }
    let stats_path = out.join("stats.json");
    write_json(
        &stats_path,
        &StatsFile {
            source: "train".into(),
            groups: train_groups,
            standardization: stats,
        },
    )?;
    let summary = IngestionSummary { groups, warnings };
    let report_path = out.join("ingest_report.json");
    write_json(&report_path, &summary)?;
    for w in &summary.warnings {
        log::warn!("{w}");
    }
    man.inputs.push(raw.to_path_buf());
    man.outputs.extend([stats_path, report_path]);
    man.set("obs_steps", steps.obs);
    man.set("fut_steps", steps.fut);
    man.set("stride", steps.stride);
    man.set("max_offset_steps", steps.max_offset);
    man.finish(out)?;
    Ok(summary)
}

fn tl_dim(timelines: &[social_processes::datasets::GroupTimeline]) -> usize {
    timelines
        .first()
        .map_or(social_processes::data::BEHAVIOR_DIM, |t| t.dim)
}

/// Output of a training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub run_dir: PathBuf,
    pub checkpoint: PathBuf,
    pub param_count: usize,
    pub final_selection_nll: f64,
}

/// Trains the configured model and writes a run directory.
pub fn train_run(
    config_path: &Path,
    out: Option<&Path>,
    seed: Option<u64>,
) -> Result<TrainOutcome> {
    let mut man = RunManifest::new("train");
    let mut cfg = RunConfig::load(config_path)?;
    if let Some(s) = seed {
        cfg.train.seed = s;
    }
    let seed = cfg.train.seed;
    let data = Dataset::read(&cfg.data)?;
    let samples = data.samples(None);
    let first = samples
        .first()
        .ok_or_else(|| Error::Config(format!("{} holds no samples", cfg.data.display())))?;
    let model_cfg = cfg.model_config(Some((data.header.layout, first)))?;
    let val = match &cfg.val_data {
        Some(p) => Dataset::read(p)?.samples(None),
        None => Vec::new(),
    };
    let run_dir = match out {
        Some(d) => d.to_path_buf(),
        None => PathBuf::from(std::env::var(RUN_ROOT_ENV).unwrap_or_else(|_| "runs".into())).join(
            format!(
                "{}-{}-seed{seed}",
                cfg.variant,
                cfg.paths.to_string().replace('+', "_")
            ),
        ),
    };
    create_dir(&run_dir)?;
    let snapshot = run_dir.join("config.toml");
    fs::write(&snapshot, cfg.to_toml(&model_cfg)?).map_err(|e| Error::io(&snapshot, e))?;

    let mut model = ProcessModel::new(model_cfg, seed)?;
    let param_count = model.param_count();
    log::info!(
        "{} ({}) with {} parameters",
        cfg.variant,
        cfg.paths,
        param_count
    );
    let mut steps = JsonlLog::create(run_dir.join("steps.jsonl"))?;
    let mut epochs = JsonlLog::create(run_dir.join("metrics.jsonl"))?;
    let mut log_err = None;
    let result = train(&mut model, &samples, &val, &cfg.train, &mut |e| {
        let r = match e {
            TrainEvent::Step(s) => steps.push(s),
            TrainEvent::Epoch(r) => epochs.push(r),
        };
        if let Err(e) = r {
            log_err.get_or_insert(e);
        }
    });
    steps.close()?;
    epochs.close()?;
    if let Some(e) = log_err {
        return Err(e);
    }
    let report = match result {
        Ok(r) => r,
        Err(e @ Error::Divergence { .. }) => {
            let path = run_dir.join("divergence.txt");
            fs::write(&path, format!("{e}\n")).map_err(|io| Error::io(&path, io))?;
            return Err(e);
        }
        Err(e) => return Err(e),
    };
    let stats = data
        .header
        .standardization
        .clone()
        .unwrap_or_else(|| Standardization::identity(model.config.data_dim));
    let mut outputs = Vec::new();
    for (k, b) in report.best.iter().enumerate() {
        let mut ck = Checkpoint::new(&model, stats.clone());
        ck.params = b.params.clone();
        ck.epoch = Some(b.epoch);
        ck.val_nll = Some(b.val_nll);
        let p = run_dir.join(format!("best-{}.json", k + 1));
        ck.save(&p)?;
        outputs.push(p);
    }
    let final_path = run_dir.join("model.json");
    Checkpoint::new(&model, stats).save(&final_path)?;
    outputs.push(final_path.clone());
    let final_selection_nll = report.epochs.last().map_or(f64::NAN, |e| e.val_nll);

    man.config = Some(config_path.to_path_buf());
    man.seed = Some(seed);
    man.inputs.push(cfg.data.clone());
    man.inputs.extend(cfg.val_data.clone());
    man.outputs = outputs;
    man.outputs.extend([
        snapshot,
        run_dir.join("steps.jsonl"),
        run_dir.join("metrics.jsonl"),
    ]);
    man.set("variant", cfg.variant);
    man.set("paths", cfg.paths);
    man.set("flags", cfg.flag_names.join(","));
    man.set("param_count", param_count);
    man.set("epochs", report.epochs.len());
    man.set("stopped_early", report.stopped_early);
    man.finish(&run_dir)?;
    Ok(TrainOutcome {
        run_dir,
        checkpoint: final_path,
        param_count,
        final_selection_nll,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ContextLog {
    task: usize,
    context: Vec<usize>,
    target: Vec<usize>,
}

fn write_eval(dir: &Path, out: &EvalOutput) -> Result<()> {
    create_dir(dir)?;
    write_jsonl(&dir.join("records.jsonl"), &out.records)?;
    write_jsonl(&dir.join("curves.jsonl"), &out.curves)?;
    let logs: Vec<ContextLog> = out
        .tasks
        .iter()
        .enumerate()
        .map(|(task, t)| ContextLog {
            task,
            context: t.context.clone(),
            target: t.target.clone(),
        })
        .collect();
    write_jsonl(&dir.join("contexts.jsonl"), &logs)?;
    let mut tsv = String::from("metric\tmean\tstd\tcount\tsummary\n");
    for r in &out.summary {
        tsv += &format!(
            "{}\t{}\t{}\t{}\t{}\n",
            r.metric,
            r.mean,
            r.std,
            r.count,
            r.formatted()
        );
    }
    let path = dir.join("summary.tsv");
    fs::write(&path, tsv).map_err(|e| Error::io(&path, e))
}

/// Settings of an evaluation pass.
#[derive(Debug, Clone)]
pub struct EvaluateArgs {
    pub checkpoints: Vec<PathBuf>,
    pub data: PathBuf,
    pub out: PathBuf,
    pub eval: EvalConfig,
}

/// Evaluates one or more checkpoints on identical context splits. Returns
/// one output per checkpoint, in argument order.
pub fn evaluate_run(args: &EvaluateArgs) -> Result<Vec<EvalOutput>> {
    let mut man = RunManifest::new("evaluate");
    if args.checkpoints.is_empty() {
        return Err(Error::Config("no checkpoint given".into()));
    }
    let data = Dataset::read(&args.data)?;
    let checkpoints = args
        .checkpoints
        .iter()
        .map(|p| Checkpoint::load(p))
        .collect::<Result<Vec<_>>>()?;
    for ck in &checkpoints {
        ck.check_layout(data.header.layout_version)?;
    }
    let samples = data.samples(None);
    if samples.is_empty() {
        return Err(Error::Config(format!(
            "{} holds no samples",
            args.data.display()
        )));
    }
    let first = &checkpoints[0].model;
    let tasks = match (&data.header.kind, &data.header.eval_context_phases) {
        (DatasetKind::Glancing, Some(phases)) => {
            let ctx: Vec<usize> = phases.iter().flat_map(|p| [2 * p, 2 * p + 1]).collect();
            fixed_context_tasks(samples.len(), &ctx, args.eval.batch_size)
        }
        _ => {
            let mlp = checkpoints
                .iter()
                .find(|c| c.model.encoder_kind == EncoderKind::Mlp);
            let lengths = mlp.map(|c| (c.model.obs_len, c.model.fut_len));
            let kind = if lengths.is_some() {
                EncoderKind::Mlp
            } else {
                first.encoder_kind
            };
            plan_tasks(&samples, kind, lengths, &args.eval)?
        }
    };
    create_dir(&args.out)?;
    let mut outputs = Vec::new();
    let mut table = String::from("model\tmetric\tmean\tstd\tsummary\n");
    for (k, (path, ck)) in args.checkpoints.iter().zip(&checkpoints).enumerate() {
        let model = ck.to_model()?;
        let mut out = evaluate_tasks(
            &model,
            &samples,
            tasks.clone(),
            &ck.standardization,
            args.eval.z_samples,
            args.eval.seed,
        )?;
        if data.header.kind == DatasetKind::Glancing {
            add_glancing_metrics(&mut out, &data.sequences)?;
        }
        let name = if args.checkpoints.len() == 1 {
            String::new()
        } else {
            format!(
                "{k}-{}",
                path.file_stem().and_then(|s| s.to_str()).unwrap_or("model")
            )
        };
        let dir = if name.is_empty() {
            args.out.clone()
        } else {
            args.out.join(&name)
        };
        write_eval(&dir, &out)?;
        for r in &out.summary {
            table += &format!(
                "{}\t{}\t{}\t{}\t{}\n",
                if name.is_empty() { "model" } else { &name },
                r.metric,
                r.mean,
                r.std,
                r.formatted()
            );
        }
        man.inputs.push(path.clone());
        outputs.push(out);
    }
    if args.checkpoints.len() > 1 {
        let path = args.out.join("comparison.tsv");
        fs::write(&path, table).map_err(|e| Error::io(&path, e))?;
    }
    man.seed = Some(args.eval.seed);
    man.inputs.push(args.data.clone());
    man.outputs.push(args.out.clone());
    man.set(
        "regime",
        match args.eval.regime {
            ContextRegime::Random => "random",
            ContextRegime::FixedInitial => "fixed_initial",
        },
    );
    man.set("batch_size", args.eval.batch_size);
    man.set("z_samples", args.eval.z_samples);
    man.set("tasks", tasks.len());
    man.finish(&args.out)?;
    Ok(outputs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    Timestep,
    Phase,
    All,
}

impl std::str::FromStr for PlotKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "timestep" => Ok(PlotKind::Timestep),
            "phase" => Ok(PlotKind::Phase),
            "all" => Ok(PlotKind::All),
            _ => Err(Error::Config(format!("unknown plot kind `{s}`"))),
        }
    }
}

/// Exports plot-ready CSV files from an evaluation directory.
pub fn plot(metrics: &Path, out: &Path, kind: PlotKind) -> Result<Vec<PathBuf>> {
    let mut man = RunManifest::new("plot");
    create_dir(out)?;
    let mut written = Vec::new();
    if matches!(kind, PlotKind::Timestep | PlotKind::All) {
        let curves: Vec<social_processes::evaluation::CurvePoint> =
            read_jsonl(&metrics.join("curves.jsonl"))?;
        let mut by_metric: BTreeMap<(String, usize), Vec<(usize, f64)>> = BTreeMap::new();
        for c in curves {
            by_metric
                .entry((c.metric, c.fut_len))
                .or_default()
                .push((c.step, c.value));
        }
        let lengths: std::collections::BTreeSet<usize> = by_metric.keys().map(|k| k.1).collect();
        for ((metric, len), mut pts) in by_metric {
            pts.sort_by_key(|p| p.0);
            let suffix = if lengths.len() > 1 {
                format!("_len{len}")
            } else {
                String::new()
            };
            let path = out.join(format!("timestep_{metric}{suffix}.csv"));
            let mut text = format!("step,{metric}\n");
            for (s, v) in pts {
                text += &format!("{s},{v}\n");
            }
            fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
            written.push(path);
        }
    }
    let records: Vec<social_processes::evaluation::SequenceRecord> = match kind {
        PlotKind::Timestep => Vec::new(),
        _ => read_jsonl(&metrics.join("records.jsonl"))?,
    };
    // `all` skips the phase export for data without glance phases
    let has_phases = records.iter().any(|r| r.phase.is_some());
    if kind == PlotKind::Phase || (kind == PlotKind::All && has_phases) {
        let mut rows = Vec::with_capacity(records.len());
        for r in &records {
            let (Some(phase), Some(err)) = (r.phase, r.metrics.get("ori_mae_expected")) else {
                return Err(Error::Config(format!(
                    "record of sample {} lacks the `phase`/`ori_mae_expected` columns",
                    r.sample
                )));
            };
            rows.push((phase, r.sample, *err));
        }
        rows.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let path = out.join("phase_error.csv");
        let mut text = String::from("phase,sample,ori_mae_expected\n");
        for (p, s, e) in rows {
            text += &format!("{p},{s},{e}\n");
        }
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    man.inputs.push(metrics.to_path_buf());
    man.outputs = written.clone();
    man.finish(out)?;
    Ok(written)
}

/// Process exit code of an error: 1 for invalid input, 2 for runtime
/// failures.
pub fn exit_code(e: &anyhow::Error) -> i32 {
    match e.downcast_ref::<Error>() {
        Some(err) if err.is_validation() => 1,
        Some(Error::Serialization { .. }) => 1,
        Some(_) => 2,
        None => 2,
    }
}
