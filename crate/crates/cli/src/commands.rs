//! Execution of resolved run configurations.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use ccim_core::confounder::{
    build_dictionary_with, extract_context_features, mask_sample, ConfounderDictionary, ContextEncoder,
    ContextImage, ExternalFileEncoder, RandomProjectionEncoder,
};
use ccim_core::features::{read_feature_set, write_feature_set};
use ccim_core::manifest::{load_manifest, manifest_line};
use ccim_core::metrics::{audit_top_k, MetricReport, HISTOGRAM_BINS};
use ccim_core::rng::{stage_seed, Stage};
use ccim_core::scm::{exact_intervention, exact_likelihood, mean_confounding_gap, simulate, total_variation};
use ccim_core::trainer::{build_model, evaluate, train, BaselineModel, TrainConfig, TrainData, TrainOutcome};
use ccim_core::{Error, LabelSet, Sample, SampleInput, Split};
use serde::Serialize;

use crate::config::{
    AblateConfig, AuditConfig, BuildDictConfig, EncoderKind, EvalConfig, GridKind, RunConfig,
    SimulateConfig, TrainRunConfig,
};
use crate::error::{CliError, CliResult, Tag};
use crate::output::OutDir;

pub const CONFIG_FILE: &str = "config.json";

/// Runs `config`, writing every output plus the config echo into `out`.
pub fn execute(config: &RunConfig, out: &OutDir) -> CliResult<()> {
    match config {
        RunConfig::Simulate(c) => run_simulate(c, out)?,
        RunConfig::Audit(c) => run_audit(c, out)?,
        RunConfig::BuildDict(c) => run_build_dict(c, out)?,
        RunConfig::Train(c) => run_train(c, out)?,
        RunConfig::Eval(c) => run_eval(c, out)?,
        RunConfig::Ablate(c) => run_ablate(c, out)?,
    }
    out.write(CONFIG_FILE, config.to_json())?;
    Ok(())
}

fn split_name(split: Split) -> &'static str {
    match split {
        Split::Train => "train",
        Split::Val => "val",
        Split::Test => "test",
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

#[derive(Serialize)]
struct SimulationAudit {
    seed: u64,
    scm_seed: u64,
    /// Confounder value of every sample (never visible to models).
    z: BTreeMap<String, usize>,
    /// `P(Y | X = x)`, one row per `x`; `null` where `P(x) = 0`.
    p_y_given_x: Vec<Option<Vec<f64>>>,
    /// `P(Y | do(X = x))`, one row per `x`.
    p_y_given_do_x: Vec<Vec<f64>>,
    /// Total variation between the two rows, per `x`.
    total_variation: Vec<Option<f64>>,
    mean_confounding_gap: f64,
}

fn run_simulate(c: &SimulateConfig, out: &OutDir) -> CliResult<()> {
    let sim = simulate(&c.scm, c.seed, c.sizes).tag("scm")?;
    let mut samples = sim.train.to_samples("train", Split::Train);
    samples.extend(sim.val.to_samples("val", Split::Val));
    samples.extend(sim.test.to_samples("test", Split::Test));
    let mut manifest = String::new();
    for s in &samples {
        manifest.push_str(&manifest_line(s));
        manifest.push('\n');
    }
    out.write("manifest.jsonl", manifest)?;

    let mut z = BTreeMap::new();
    for (prefix, ds) in [("train", &sim.train), ("val", &sim.val), ("test", &sim.test)] {
        for (i, r) in ds.records.iter().enumerate() {
            z.insert(format!("{prefix}{i:06}"), r.z);
        }
    }
    let mut p_y_given_x = Vec::new();
    let mut p_y_given_do_x = Vec::new();
    let mut tv = Vec::new();
    for x in 0..sim.scm.n_x() {
        let doit = exact_intervention(&sim.scm, x).tag("scm")?;
        match exact_likelihood(&sim.scm, x) {
            Ok(lik) => {
                tv.push(Some(total_variation(&lik, &doit)));
                p_y_given_x.push(Some(lik));
            }
            Err(Error::Conditioning { .. }) => {
                tv.push(None);
                p_y_given_x.push(None);
            }
            Err(e) => return Err(CliError::new("scm", e)),
        }
        p_y_given_do_x.push(doit);
    }
    let audit = SimulationAudit {
        seed: c.seed,
        scm_seed: stage_seed(c.seed, Stage::ScmBuild),
        z,
        p_y_given_x,
        p_y_given_do_x,
        total_variation: tv,
        mean_confounding_gap: mean_confounding_gap(&sim.scm).tag("scm")?,
    };
    out.write_json("audit.json", &audit)?;
    Ok(())
}

fn load(manifest: &std::path::Path) -> CliResult<Vec<Sample>> {
    load_manifest(manifest).tag("core")
}

fn target_flag(s: &Sample, target: usize) -> CliResult<bool> {
    match &s.labels {
        LabelSet::SingleLabel(k) => Ok(*k == target),
        LabelSet::MultiLabel(bits) => bits.get(target).copied().ok_or_else(|| {
            CliError::argument(
                "metrics",
                format!("target {target} out of range for sample `{}` with {} labels", s.sample_id, bits.len()),
            )
        }),
        LabelSet::Continuous(_) => Err(CliError::config(
            "metrics",
            "the audit needs categorical labels; continuous VAD labels have no positive subset",
        )),
    }
}

fn run_audit(c: &AuditConfig, out: &OutDir) -> CliResult<()> {
    let samples: Vec<Sample> = load(&c.manifest)?
        .into_iter()
        .filter(|s| c.split.is_none_or(|sp| s.split == sp))
        .collect();
    let mut contexts = Vec::with_capacity(samples.len());
    let mut flags = Vec::with_capacity(samples.len());
    for s in &samples {
        let ctx = s.context_id.clone().ok_or_else(|| {
            CliError::new(
                "metrics",
                Error::Validation {
                    sample: s.sample_id.clone(),
                    message: "no context_id to audit".into(),
                },
            )
        })?;
        contexts.push(ctx);
        flags.push(target_flag(s, c.target)?);
    }
    let report = audit_top_k(&contexts, &flags, c.top_k).tag("metrics")?;
    out.write_json("audit.json", &report)?;
    let rows: Vec<Vec<String>> = report
        .per_context
        .iter()
        .map(|(ctx, st)| vec![ctx.clone(), st.samples.to_string(), st.positives.to_string(), st.entropy.to_string()])
        .collect();
    out.write_csv("contexts.csv", &["context", "samples", "positives", "entropy"], &rows)?;
    let width = 1.0 / HISTOGRAM_BINS as f64;
    let hist: Vec<Vec<String>> = report
        .histogram
        .iter()
        .enumerate()
        .map(|(b, n)| vec![(b as f64 * width).to_string(), ((b + 1) as f64 * width).to_string(), n.to_string()])
        .collect();
    out.write_csv("entropy_histogram.csv", &["bin_start", "bin_end", "contexts"], &hist)?;
    Ok(())
}

/// The context image each sample contributes to a dictionary.
fn context_image(s: &Sample, mask: bool) -> CliResult<ContextImage> {
    match &s.input {
        SampleInput::Synthetic(rec) => ContextImage::from_record(&rec.context, s.sample_id.clone()).tag("confounder"),
        SampleInput::None => Err(CliError::new(
            "confounder",
            Error::Validation {
                sample: s.sample_id.clone(),
                message: "sample has no input to encode".into(),
            },
        )),
        _ => {
            let grid = s.grid().tag("core")?.expect("grid input");
            match (&s.subject_box, mask) {
                (Some(bbox), true) => mask_sample(&grid, bbox, &s.sample_id).tag("confounder"),
                _ => Ok(ContextImage::unmasked(grid, s.sample_id.clone())),
            }
        }
    }
}

#[derive(Serialize)]
struct DictionarySummary<'a> {
    n: usize,
    dim: usize,
    encoder: &'a str,
    seed: u64,
    total: u64,
    member_counts: &'a [u64],
    priors: &'a [f64],
}

fn run_build_dict(c: &BuildDictConfig, out: &OutDir) -> CliResult<()> {
    let samples: Vec<Sample> = load(&c.manifest)?.into_iter().filter(|s| s.split == c.split).collect();
    if samples.is_empty() {
        return Err(CliError::argument(
            "confounder",
            format!("manifest has no {} samples", split_name(c.split)),
        ));
    }
    let images = samples.iter().map(|s| context_image(s, c.mask)).collect::<CliResult<Vec<_>>>()?;
    let encoder: Box<dyn ContextEncoder> = match c.encoder {
        EncoderKind::RandomProj => Box::new(
            RandomProjectionEncoder::new(images[0].grid.data.len(), c.dim, stage_seed(c.seed, Stage::Encoder))
                .tag("confounder")?,
        ),
        EncoderKind::ExternalFile => {
            let path = c
                .features
                .as_ref()
                .ok_or_else(|| CliError::argument("confounder", "--features is required with the external-file encoder"))?;
            Box::new(ExternalFileEncoder::new(read_feature_set(path).tag("core")?).tag("confounder")?)
        }
    };
    let features = extract_context_features(&images, encoder.as_ref()).tag("confounder")?;
    let dict = build_dictionary_with(
        &features,
        c.n,
        stage_seed(c.seed, Stage::Cluster),
        encoder.name(),
        c.clusterer,
    )
    .tag("confounder")?;
    dict.write(out.path("dict.bin")).tag("confounder")?;
    write_feature_set(&features, out.path("features.fea")).tag("core")?;
    out.write_json(
        "dict.json",
        &DictionarySummary {
            n: dict.len(),
            dim: dict.dim(),
            encoder: &dict.encoder_name,
            seed: dict.seed,
            total: dict.total,
            member_counts: &dict.member_counts,
            priors: &dict.priors,
        },
    )?;
    Ok(())
}

/// Output width for single-label corpora: one past the largest class
/// anywhere in the manifest, so every split agrees.
fn manifest_classes(samples: &[Sample]) -> Option<usize> {
    samples
        .iter()
        .filter_map(|s| match s.labels {
            LabelSet::SingleLabel(k) => Some(k + 1),
            _ => None,
        })
        .max()
}

fn split_data(samples: &[Sample], split: Split, mask: bool, n_classes: Option<usize>) -> CliResult<Option<TrainData>> {
    let part: Vec<Sample> = samples.iter().filter(|s| s.split == split).cloned().collect();
    if part.is_empty() {
        return Ok(None);
    }
    TrainData::from_samples(&part, mask, n_classes, split_name(split))
        .tag("trainer")
        .map(Some)
}

fn require(data: Option<TrainData>, split: Split) -> CliResult<TrainData> {
    data.ok_or_else(|| CliError::config("trainer", format!("manifest has no {} samples", split_name(split))))
}

fn write_training(out: &OutDir, outcome: &TrainOutcome) -> CliResult<()> {
    outcome.model.write(out.path("model.bin")).tag("trainer")?;
    out.write("loss_trace.csv", outcome.trace_csv())?;
    Ok(())
}

fn run_train(c: &TrainRunConfig, out: &OutDir) -> CliResult<()> {
    let samples = load(&c.manifest)?;
    let n_classes = manifest_classes(&samples);
    let train_data = require(split_data(&samples, Split::Train, c.mask, n_classes)?, Split::Train)?;
    let val = split_data(&samples, Split::Val, c.mask, n_classes)?;
    let dict = match &c.dict {
        Some(p) => Some(ConfounderDictionary::read(p).tag("confounder")?),
        None => None,
    };
    let model = build_model(&train_data, &c.train, dict).tag("trainer")?;
    let outcome = train(model, &train_data, val.as_ref(), &c.train).tag("trainer")?;
    write_training(out, &outcome)
}

fn write_report(out: &OutDir, report: &MetricReport) -> CliResult<()> {
    out.write_json("report.json", report)?;
    out.write("per_class_ap.csv", report.per_class_ap_csv())?;
    Ok(())
}

fn run_eval(c: &EvalConfig, out: &OutDir) -> CliResult<()> {
    let model = BaselineModel::read(&c.model).tag("trainer")?;
    let samples = load(&c.manifest)?;
    let data = require(split_data(&samples, c.split, c.mask, Some(model.n_outputs()))?, c.split)?;
    let report = evaluate(&model, &data).tag("metrics")?;
    write_report(out, &report)
}

/// One ablation cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub name: String,
    pub train: TrainConfig,
    pub mask: bool,
}

fn variant_label(v: ccim_core::ccim::AttentionVariant) -> &'static str {
    match v {
        ccim_core::ccim::AttentionVariant::DotProduct => "dot",
        ccim_core::ccim::AttentionVariant::Additive => "additive",
    }
}

fn cell_name(t: &TrainConfig, mask: bool, with_n: bool) -> String {
    let mut name = if t.ccim {
        let mut n = format!("ccim-{}", variant_label(t.variant));
        if !t.use_lambda {
            n.push_str("-nolambda");
        }
        if !t.use_prior {
            n.push_str("-noprior");
        }
        if t.random_dictionary {
            n.push_str("-randomdict");
        }
        if with_n {
            n.push_str(&format!("-n{}", t.n_clusters));
        }
        n
    } else {
        "vanilla".to_string()
    };
    if !mask {
        name.push_str("-nomask");
    }
    name
}

/// Enumerates the cells of an ablation grid, sharing the template's seed.
pub fn grid_cells(c: &AblateConfig) -> CliResult<Vec<Cell>> {
    use ccim_core::ccim::AttentionVariant::{Additive, DotProduct};
    let t = &c.template;
    let vanilla = TrainConfig { ccim: false, ..t.clone() };
    let ccim = TrainConfig { ccim: true, ..t.clone() };
    let flag_grid = [(true, true), (false, true), (true, false), (false, false)];
    let mut cells: Vec<(TrainConfig, bool)> = Vec::new();
    match c.grid {
        GridKind::Single => cells.push((t.clone(), c.mask)),
        GridKind::Variants => {
            cells.push((vanilla, c.mask));
            for variant in [DotProduct, Additive] {
                for (use_lambda, use_prior) in flag_grid {
                    cells.push((TrainConfig { variant, use_lambda, use_prior, ..ccim.clone() }, c.mask));
                }
            }
        }
        GridKind::Full => {
            for mask in [true, false] {
                cells.push((vanilla.clone(), mask));
                for variant in [DotProduct, Additive] {
                    for (use_lambda, use_prior) in flag_grid {
                        for random_dictionary in [false, true] {
                            cells.push((
                                TrainConfig { variant, use_lambda, use_prior, random_dictionary, ..ccim.clone() },
                                mask,
                            ));
                        }
                    }
                }
            }
        }
        GridKind::NSweep => {
            if c.n_sweep.is_empty() {
                return Err(CliError::argument("cli", "the n-sweep grid needs at least one N"));
            }
            cells.push((vanilla, c.mask));
            for &n in &c.n_sweep {
                cells.push((TrainConfig { n_clusters: n, ..ccim.clone() }, c.mask));
            }
        }
    }
    let with_n = c.grid == GridKind::NSweep;
    Ok(cells
        .into_iter()
        .map(|(train, mask)| Cell {
            name: cell_name(&train, mask, with_n),
            train,
            mask,
        })
        .collect())
}

/// Worker count for independent cells: `CCIM_THREADS` if set, else the
/// machine's available parallelism.
pub fn cell_threads() -> CliResult<usize> {
    match std::env::var("CCIM_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(CliError::argument("cli", format!("CCIM_THREADS must be a positive integer, got `{v}`"))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

struct CellResult {
    report: MetricReport,
    outcome: TrainOutcome,
}

fn run_cell(cell: &Cell, samples: &[Sample], n_classes: Option<usize>) -> CliResult<CellResult> {
    let train_data = require(split_data(samples, Split::Train, cell.mask, n_classes)?, Split::Train)?;
    let val = split_data(samples, Split::Val, cell.mask, n_classes)?;
    let test = require(split_data(samples, Split::Test, cell.mask, n_classes)?, Split::Test)?;
    let model = build_model(&train_data, &cell.train, None).tag("trainer")?;
    let outcome = train(model, &train_data, val.as_ref(), &cell.train).tag("trainer")?;
    let report = evaluate(&outcome.model, &test).tag("metrics")?;
    Ok(CellResult { report, outcome })
}

fn run_cells(cells: &[Cell], samples: &[Sample], n_classes: Option<usize>, threads: usize) -> Vec<CliResult<CellResult>> {
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<CliResult<CellResult>>>> = Mutex::new((0..cells.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..threads.min(cells.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= cells.len() {
                    break;
                }
                let r = run_cell(&cells[i], samples, n_classes);
                results.lock().expect("no worker panicked")[i] = Some(r);
            });
        }
    });
    results
        .into_inner()
        .expect("no worker panicked")
        .into_iter()
        .map(|r| r.expect("every cell ran"))
        .collect()
}

#[derive(Serialize)]
struct SweepPeak {
    n_clusters: usize,
    accuracy: f64,
}

fn run_ablate(c: &AblateConfig, out: &OutDir) -> CliResult<()> {
    let samples = load(&c.manifest)?;
    let n_classes = manifest_classes(&samples);
    let cells = grid_cells(c)?;
    let results = run_cells(&cells, &samples, n_classes, cell_threads()?);
    let cells_dir = out.subdir("cells")?;
    let mut rows = Vec::new();
    let mut sweep = Vec::new();
    for (cell, result) in cells.iter().zip(results) {
        let r = result?;
        let dir = cells_dir.subdir(&cell.name)?;
        write_report(&dir, &r.report)?;
        dir.write("loss_trace.csv", r.outcome.trace_csv())?;
        let t = &cell.train;
        rows.push(vec![
            cell.name.clone(),
            t.ccim.to_string(),
            if t.ccim { variant_label(t.variant) } else { "" }.to_string(),
            t.use_lambda.to_string(),
            t.use_prior.to_string(),
            t.random_dictionary.to_string(),
            cell.mask.to_string(),
            t.n_clusters.to_string(),
            fmt_opt(r.report.accuracy),
            fmt_opt(r.report.map),
            fmt_opt(r.report.c_f1),
            fmt_opt(r.report.o_f1),
            fmt_opt(r.report.mean_jc),
            r.outcome.final_loss().to_string(),
        ]);
        if c.grid == GridKind::NSweep && t.ccim {
            sweep.push((t.n_clusters, r.report.accuracy, r.report.map));
        }
    }
    out.write_csv(
        "comparison.csv",
        &[
            "cell", "ccim", "variant", "use_lambda", "use_prior", "random_dictionary", "mask", "n_clusters",
            "accuracy", "map", "c_f1", "o_f1", "mean_jc", "final_loss",
        ],
        &rows,
    )?;
    if c.grid == GridKind::NSweep {
        let sweep_rows: Vec<Vec<String>> = sweep
            .iter()
            .map(|(n, acc, map)| vec![n.to_string(), fmt_opt(*acc), fmt_opt(*map)])
            .collect();
        out.write_csv("n_sweep.csv", &["n_clusters", "accuracy", "map"], &sweep_rows)?;
        // first maximum wins ties
        let peak = sweep
            .iter()
            .filter_map(|(n, acc, _)| acc.map(|a| (*n, a)))
            .fold(None::<(usize, f64)>, |best, (n, a)| match best {
                Some((_, b)) if b >= a => best,
                _ => Some((n, a)),
            });
        if let Some((n_clusters, accuracy)) = peak {
            out.write_json("n_sweep_peak.json", &SweepPeak { n_clusters, accuracy })?;
        }
    }
    Ok(())
}
