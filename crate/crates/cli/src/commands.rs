//! One function per pipeline command.
//!
//! Random streams are split off the run seed: 0 data, 1 teacher training,
//! 2 posterior sampling, 3 student initialization, 6 amortization gap.
//! Distillation seeds itself with `seed + 4`.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use opu_core::data::{gen_synthetic, load_csv, CsvSchema, Dataset, Split};
use opu_core::eval::{
    amortization_gap, format_table, misc_task, ood_task, read_metrics, timing_harness, write_metrics, EvalError,
    GapReport, MetricsRecord, Scorer, TimingReport,
};
use opu_core::losses::{distill, median_heuristic, write_loss_trace, KernelSpec};
use opu_core::numerics::RngState;
use opu_core::student::{
    categorical_entropy, load_student, save_student, student_predict, uncertainty_scores, Measure, StudentManifest,
    StudentModel,
};
use opu_core::teachers::{
    blr_pg_gibbs, mc_predict, mcdp_sample, mcdp_train, pushforward, pushforward_all, read_particle_store,
    sgld_train, write_particle_store, ParticleStore, PosteriorSampleSet,
};
use opu_core::nnet::{load_checkpoint, save_checkpoint};

use crate::config::{DataConfig, LoadedConfig, TeacherConfig};
use crate::plot::{simplex_csv, simplex_svg};
use crate::posterior::{load_posterior, save_posterior};
use crate::run::{read_json, require, write_json, Run};

const SPLITS: [Split; 4] = [Split::Train, Split::Distill, Split::Test, Split::Ood];

fn root(cfg: &LoadedConfig) -> RngState {
    RngState::new(cfg.config.seed)
}

fn labeled(split: Split) -> bool {
    matches!(split, Split::Train | Split::Test)
}

fn split_file(split: Split) -> String {
    format!("{}.csv", split.name())
}

/// Distillation inputs and OOD inputs are stored without labels.
fn strip(d: Dataset, split: Split) -> Result<Dataset> {
    let labels = if labeled(split) { Some(d.labels()?.to_vec()) } else { None };
    Ok(Dataset::new(&d.name, split, d.features, labels)?)
}

pub fn prepare_data(cfg: &LoadedConfig, run: &Run) -> Result<()> {
    let sets: Vec<Dataset> = match &cfg.config.data {
        DataConfig::Blobs(spec) => {
            let d = gen_synthetic(spec, &mut root(cfg).split(0))?;
            vec![d.train, d.distill, d.test, d.ood]
        }
        DataConfig::Csv(c) => {
            let paths = [&c.train, &c.distill, &c.test, &c.ood];
            let mut out = Vec::new();
            for (split, p) in SPLITS.into_iter().zip(paths) {
                let path = cfg.resolve(p);
                require(&path)?;
                if labeled(split) && c.schema.label_column.is_none() {
                    bail!("the {} split needs schema.label_column", split.name());
                }
                // OOD rows load as test rows, then lose their labels
                let as_split = if split == Split::Ood { Split::Test } else { split };
                let d = load_csv(&path, &c.schema, "csv", as_split).with_context(|| format!("loading {}", path.display()))?;
                out.push(d);
            }
            out
        }
    };
    let dir = run.stage("data")?;
    let mut files = Vec::new();
    for (d, split) in sets.into_iter().zip(SPLITS) {
        let d = strip(d, split)?;
        if d.is_empty() {
            bail!("the {} split is empty", split.name());
        }
        let name = split_file(split);
        d.write_csv(fs::File::create(dir.join(&name))?)?;
        files.push(name);
    }
    let names: Vec<&str> = files.iter().map(String::as_str).collect();
    run.finish_stage("data", "prepare-data", &names)
}

fn load_split(run: &Run, split: Split) -> Result<Dataset> {
    let path = run.input(&format!("data/{}", split_file(split)))?;
    let schema = CsvSchema { label_column: labeled(split).then(|| "label".to_string()), ..CsvSchema::default() };
    load_csv(&path, &schema, "run", split).with_context(|| format!("loading {}", path.display()))
}

fn arch(train: &Dataset, hidden: &[usize]) -> Result<Vec<usize>> {
    let k = train.n_classes().context("training data has no labels")?.max(2);
    let mut a = vec![train.dim()];
    a.extend_from_slice(hidden);
    a.push(k);
    Ok(a)
}

pub fn train_teacher(cfg: &LoadedConfig, run: &Run) -> Result<()> {
    run.check_stage("data")?;
    let train = load_split(run, Split::Train)?;
    let dir = run.stage("teacher")?;
    match &cfg.config.teacher {
        TeacherConfig::Mcdp(t) => {
            let net = mcdp_train(&train, &arch(&train, &t.hidden)?, t.dropout, &t.train, &mut root(cfg).split(1))?;
            save_checkpoint(&dir.join("shared.bin"), &net, Some(&run.hash))?;
            run.finish_stage("teacher", "train-teacher", &["shared.bin", "shared.bin.json"])
        }
        // sampler teachers are trained by drawing their chain
        TeacherConfig::Sgld(_) | TeacherConfig::Blr(_) => run.finish_stage("teacher", "train-teacher", &[]),
    }
}

pub fn sample_posterior(cfg: &LoadedConfig, run: &Run) -> Result<()> {
    run.check_stage("teacher")?;
    let mut rng = root(cfg).split(2);
    let set = match &cfg.config.teacher {
        TeacherConfig::Mcdp(t) => {
            let path = run.input("teacher/shared.bin")?;
            let (shared, _) = load_checkpoint(&path).with_context(|| format!("reading {}", path.display()))?;
            mcdp_sample(&shared, t.dropout, t.samples, &mut rng)?
        }
        TeacherConfig::Sgld(t) => {
            run.check_stage("data")?;
            let train = load_split(run, Split::Train)?;
            sgld_train(&train, &arch(&train, &t.hidden)?, &t.chain, &mut rng)?
        }
        TeacherConfig::Blr(b) => {
            run.check_stage("data")?;
            blr_pg_gibbs(&load_split(run, Split::Train)?, b, &mut rng)?
        }
    };
    let dir = run.stage("posterior")?;
    let files = save_posterior(&dir, &set, &run.hash)?;
    run.finish_stage("posterior", "sample-posterior", &files)
}

fn posterior(run: &Run) -> Result<PosteriorSampleSet> {
    run.check_stage("posterior")?;
    load_posterior(&run.dir.join("posterior"))
}

pub fn pushforward_cmd(cfg: &LoadedConfig, run: &Run) -> Result<()> {
    let samples = posterior(run)?;
    run.check_stage("data")?;
    let distill_set = load_split(run, Split::Distill)?;
    let clouds = pushforward_all(&samples, &distill_set.features)?;
    let store = ParticleStore::new(samples.kind(), cfg.config.seed, clouds)?;
    let dir = run.stage("particles")?;
    write_particle_store(&dir.join("distill.bin"), &store, Some(&run.hash))?;
    run.finish_stage("particles", "pushforward", &["distill.bin", "distill.bin.json"])
}

fn particles(run: &Run) -> Result<ParticleStore> {
    run.check_stage("particles")?;
    let path = run.input("particles/distill.bin")?;
    Ok(read_particle_store(&path).with_context(|| format!("reading {}", path.display()))?.0)
}

pub fn distill_cmd(cfg: &LoadedConfig, run: &Run) -> Result<()> {
    let store = particles(run)?;
    run.check_stage("data")?;
    let inputs = load_split(run, Split::Distill)?;
    let s = &cfg.config.student;
    let mut m = StudentModel::init(inputs.dim(), &s.pm_hidden, &s.cm_hidden, store.k(), &mut root(cfg).split(3))?;
    if s.init_from_teacher {
        m.pm = posterior(run)?.mean_network()?.context("the teacher has no network to start from")?;
    }
    if let Some(g0) = s.initial_log_precision {
        m.reset_concentration(g0);
    }
    let mut dc = cfg.config.distill.clone();
    dc.seed = cfg.config.seed.wrapping_add(4);
    let out = distill(m, &inputs.features, &store.clouds, &dc)?;
    let dir = run.stage("student")?;
    let manifest = StudentManifest {
        k: out.model.k(),
        alpha_floor: out.model.alpha_floor,
        loss_kind: dc.loss,
        config_hash: Some(run.hash.clone()),
    };
    save_student(&dir, &out.model, &manifest)?;
    write_loss_trace(&dir.join("loss_trace.jsonl"), &out.trace)?;
    let mut files = vec!["pm.bin", "pm.bin.json", "cm.bin", "cm.bin.json", "student.json", "loss_trace.jsonl"];
    if let Some(k) = &out.kernel {
        write_json(&dir.join("kernel.json"), &Hashed { config_hash: &run.hash, value: k })?;
        files.push("kernel.json");
    }
    run.finish_stage("student", "distill", &files)
}

#[derive(Serialize)]
struct Hashed<'a, T> {
    config_hash: &'a str,
    #[serde(flatten)]
    value: T,
}

#[derive(serde::Deserialize)]
struct KernelFile {
    #[serde(flatten)]
    kernel: KernelSpec,
}

fn measure(tag: &str) -> Measure {
    match tag {
        "E" => Measure::E,
        "P" => Measure::P,
        "D" => Measure::D,
        _ => Measure::C,
    }
}

/// Runs a task, skipping it with a note when the labels leave one class empty.
fn keep(out: &mut Vec<MetricsRecord>, r: Result<MetricsRecord, EvalError>) -> Result<()> {
    match r {
        Ok(rec) => out.push(rec),
        Err(EvalError::Task { task, source }) if matches!(*source, EvalError::SingleClass { .. }) => {
            eprintln!("note: skipping {task}: {source}");
        }
        Err(e) => return Err(e.into()),
    }
    Ok(())
}

pub fn eval(cfg: &LoadedConfig, run: &Run) -> Result<()> {
    run.check_stage("student")?;
    let (m, manifest) = load_student(&run.dir.join("student"))
        .with_context(|| format!("reading {}", run.dir.join("student").display()))?;
    let samples = posterior(run)?;
    run.check_stage("data")?;
    let test = load_split(run, Split::Test)?;
    let ood = load_split(run, Split::Ood)?;
    let student_name = format!("opu-{}", manifest.loss_kind.name());
    let teacher_name = samples.kind().name();
    let mut records = Vec::new();

    let student_pred = |x: &[f64]| Ok(student_predict(&m, x)?);
    for tag in &cfg.config.eval.measures {
        let ms = measure(tag);
        let scorer = Scorer::new(&student_name, tag, |x: &[f64]| Ok(uncertainty_scores(&m, x)?.score(ms)));
        keep(&mut records, misc_task(student_pred, &scorer, &test))?;
        keep(&mut records, ood_task(&scorer, &test.features, &ood.features))?;
    }
    let teacher_pred = |x: &[f64]| Ok(mc_predict(&pushforward(&samples, 0, x)?));
    let teacher_scorers = [
        Scorer::new(teacher_name, "E", |x: &[f64]| Ok(categorical_entropy(teacher_pred(x)?.probs()))),
        Scorer::new(teacher_name, "P", |x: &[f64]| {
            Ok(-teacher_pred(x)?.probs().iter().cloned().fold(f64::NEG_INFINITY, f64::max))
        }),
    ];
    for scorer in &teacher_scorers {
        keep(&mut records, misc_task(teacher_pred, scorer, &test))?;
        keep(&mut records, ood_task(scorer, &test.features, &ood.features))?;
    }
    for r in &mut records {
        r.seed = Some(cfg.config.seed);
        r.config_hash = Some(run.hash.clone());
    }
    let dir = run.stage("metrics")?;
    write_metrics(&dir.join("metrics.jsonl"), &records)?;
    let mut files = vec!["metrics.jsonl"];

    let e = &cfg.config.eval;
    if !e.timing_samples.is_empty() {
        let reports = e
            .timing_samples
            .iter()
            .map(|&s| timing_harness(&samples, &m, &test.features, s))
            .collect::<Result<Vec<TimingReport>, _>>()?;
        write_json(&dir.join("timing.json"), &Hashed { config_hash: &run.hash, value: TimingFile { reports } })?;
        files.push("timing.json");
    }
    if e.gap_inputs > 0 {
        let store = particles(run)?;
        let inputs = load_split(run, Split::Distill)?;
        let kernel = match run.dir.join("student/kernel.json") {
            p if p.exists() => read_json::<KernelFile>(&p)?.kernel,
            _ => {
                let pooled: Vec<&[f64]> = store.clouds[0].points.iter().map(|p| p.probs()).collect();
                KernelSpec::rbf_plus_poly(median_heuristic(&pooled))?
            }
        };
        let rng = root(cfg).split(6);
        let mut lines = String::new();
        for (i, cloud) in store.clouds.iter().enumerate().take(e.gap_inputs) {
            let r = amortization_gap(&m, &inputs.features[i], cloud, &kernel, &e.gap, &mut rng.split(i as u64))?;
            lines += &serde_json::to_string(&Hashed { config_hash: &run.hash, value: &r })?;
            lines.push('\n');
        }
        fs::write(dir.join("gap.jsonl"), lines)?;
        files.push("gap.jsonl");
    }
    println!("eval: {} metrics records", records.len());
    run.finish_stage("metrics", "eval", &files)
}

#[derive(Serialize, serde::Deserialize)]
struct TimingFile {
    reports: Vec<TimingReport>,
}

pub fn plot_simplex(cfg: &LoadedConfig, run: &Run) -> Result<()> {
    let store = particles(run)?;
    let mut outputs = Vec::new();
    for &id in &cfg.config.plot.inputs {
        let cloud = store
            .clouds
            .get(id)
            .with_context(|| format!("plot input {id} is out of range ({} distillation inputs)", store.clouds.len()))?;
        outputs.push((id, simplex_svg(cloud, &run.hash)?, simplex_csv(cloud)?));
    }
    let dir = run.stage("plots")?;
    let mut files = Vec::new();
    for (id, svg, csv) in outputs {
        for (ext, body) in [("svg", svg), ("csv", csv)] {
            let name = format!("simplex_{id:04}.{ext}");
            fs::write(dir.join(&name), body)?;
            files.push(name);
        }
    }
    let names: Vec<&str> = files.iter().map(String::as_str).collect();
    run.finish_stage("plots", "plot-simplex", &names)
}

fn gather(run: &Run, path: &Path, all: &mut Vec<MetricsRecord>, sources: &mut Vec<String>) -> Result<()> {
    require(path)?;
    let recs = read_metrics(path).with_context(|| format!("reading {}", path.display()))?;
    let shown = path.strip_prefix(&run.dir).unwrap_or(path);
    sources.push(format!("{} ({} records)", shown.display(), recs.len()));
    all.extend(recs);
    Ok(())
}

pub fn report(cfg: &LoadedConfig, run: &Run) -> Result<()> {
    run.check_stage("metrics")?;
    let mut records = Vec::new();
    let mut sources = Vec::new();
    gather(run, &run.dir.join("metrics/metrics.jsonl"), &mut records, &mut sources)?;
    for p in &cfg.config.report.include {
        gather(run, &cfg.resolve(p), &mut records, &mut sources)?;
    }
    let foreign: Vec<String> = records
        .iter()
        .filter(|r| r.config_hash.as_deref() != Some(run.hash.as_str()))
        .map(|r| format!("{} {} {}: {}", r.model, r.task, r.measure, r.config_hash.as_deref().unwrap_or("no hash")))
        .collect();
    if !foreign.is_empty() && !run.force {
        bail!(
            "refusing to aggregate {} record(s) whose config hash differs from {} (pass --force to override):\n  {}",
            foreign.len(),
            run.hash,
            foreign.join("\n  ")
        );
    }
    let mut out = format!("config_hash: {}\n", run.hash);
    for s in &sources {
        out += &format!("source: {s}\n");
    }
    if !foreign.is_empty() {
        out += &format!("forced: {} record(s) from other configs\n", foreign.len());
    }
    out.push('\n');
    out += &format_table(&records);
    let timing = run.dir.join("metrics/timing.json");
    if timing.exists() {
        let t: TimingFile = read_json(&timing)?;
        out += "\ntiming (median of repeated runs, one thread)\n";
        for r in t.reports {
            out += &format!(
                "  S={:>4}: MC {:.4}s, student {:.6}s, speedup {:.1}x over {} inputs\n",
                r.s, r.mc_seconds, r.one_pass_seconds, r.speedup, r.n_inputs
            );
        }
    }
    let gap = run.dir.join("metrics/gap.jsonl");
    if gap.exists() {
        let reports = fs::read_to_string(&gap)?
            .lines()
            .map(serde_json::from_str::<GapReport>)
            .collect::<Result<Vec<_>, _>>()
            .with_context(|| format!("reading {}", gap.display()))?;
        let n = reports.len().max(1) as f64;
        let mean = reports.iter().map(|r| r.delta).sum::<f64>() / n;
        let above = reports.iter().filter(|r| r.delta > 2.0 * r.noise_bound).count();
        out += &format!("\namortization gap over {} inputs: mean {mean:.4}, {above} above twice the noise bound\n", reports.len());
    }
    fs::write(run.dir.join("report.txt"), &out)?;
    print!("{out}");
    Ok(())
}
