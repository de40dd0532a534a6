use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use sha2::{Digest, Sha256};

use super::config::{ModelType, RunConfig};
use super::report::{save_report, Block, EvalReport, InputDigest, MiPair, Timings, REPORT_FORMAT_VERSION};
use crate::dataio::{export_corpus, ingest_path, ingest_reader, load_corpus, simulate_ground_truth, write_corpus, Corpus};
use crate::generators::{ExternalCorpus, Generator, MarkovModel, TrainedModel, VineGenerator};
use crate::geogrid::GridSpec;
use crate::metrics::{mi_decay, mmd_test, topn_report, MiDecayCurve, MmdResult, TopNReport};
use crate::privacy::{hide_corpus, membership_attack, sequence_attack, MembershipResult, PrivacyResult};
use crate::rng::derive_seed;
use crate::{Error, Result};

/// Environment variable naming the directory that holds run directories.
pub const OUTPUT_ENV: &str = "TRAJSYNTH_OUTPUT_DIR";
pub const DEFAULT_OUTPUT_ROOT: &str = "runs";
pub const TIMINGS_FILE: &str = "timings.json";

/// Flag, then environment, then `./runs`.
pub fn output_root(flag: Option<&Path>) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    match std::env::var_os(OUTPUT_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => PathBuf::from(DEFAULT_OUTPUT_ROOT),
    }
}

/// Files written by one command.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub dir: PathBuf,
    pub files: Vec<PathBuf>,
}

impl RunOutput {
    pub fn file(&self, name: &str) -> Option<&Path> {
        self.files.iter().find(|p| p.file_name().is_some_and(|n| n == name)).map(PathBuf::as_path)
    }
}

struct Run {
    dir: PathBuf,
    files: Vec<PathBuf>,
    inputs: Vec<InputDigest>,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn digest_file(role: &str, path: &Path) -> Result<InputDigest> {
    let bytes = fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::NotFound(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    Ok(InputDigest {
        role: role.to_string(),
        file_name: path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
        sha256: hex(&Sha256::digest(&bytes)),
    })
}

impl Run {
    /// The run directory is named after the command and a digest of config and inputs,
    /// so identical invocations land in the same place.
    fn open(root: &Path, command: &str, cfg: &RunConfig, inputs: &[(&str, &Path)]) -> Result<Run> {
        let inputs = inputs
            .iter()
            .map(|(role, p)| digest_file(role, p))
            .collect::<Result<Vec<_>>>()?;
        let mut h = Sha256::new();
        h.update(command.as_bytes());
        h.update(cfg.to_toml().as_bytes());
        for d in &inputs {
            h.update(d.role.as_bytes());
            h.update(d.sha256.as_bytes());
        }
        let dir = root.join(format!("{command}-{}", &hex(&h.finalize())[..12]));
        fs::create_dir_all(&dir)?;
        let mut run = Run {
            dir,
            files: Vec::new(),
            inputs,
        };
        run.write("config.toml", cfg.to_toml().as_bytes())?;
        Ok(run)
    }

    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.files.push(p.clone());
        p
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let p = self.path(name);
        fs::write(&p, bytes)?;
        Ok(p)
    }

    fn json<T: serde::Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    fn csv(&mut self, name: &str, header: &[&str], rows: Vec<Vec<String>>) -> Result<PathBuf> {
        let p = self.path(name);
        let mut w = csv::Writer::from_path(&p).map_err(csv_err)?;
        w.write_record(header).map_err(csv_err)?;
        for r in rows {
            w.write_record(&r).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(p)
    }

    fn timings(&mut self, t: &Timings) -> Result<()> {
        let p = self.path(TIMINGS_FILE);
        t.save(&p)
    }

    fn done(self) -> RunOutput {
        RunOutput {
            dir: self.dir,
            files: self.files,
        }
    }
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Format(format!("{other:?}")),
    }
}

fn load_checked(cfg: &RunConfig, path: &Path) -> Result<Corpus> {
    let c = load_corpus(path, None)?;
    cfg.check_grid(c.spec())?;
    Ok(c)
}

/// Metric failures caused by the data (too short, too few traces) become skipped blocks.
fn block<T>(r: Result<T>) -> Result<Block<T>> {
    match r {
        Ok(v) => Ok(v.into()),
        Err(e) if matches!(e.kind(), "insufficient_data" | "domain") => Ok(Block::skipped(e.to_string())),
        Err(e) => Err(e),
    }
}

pub fn cmd_ingest(root: &Path, cfg: &RunConfig, input: &Path) -> Result<RunOutput> {
    cfg.validate()?;
    let spec = cfg.grid()?;
    let (corpus, stats) = ingest_path(input, &spec, cfg.sampling_period)?;
    if corpus.is_empty() {
        return Err(Error::InsufficientData(format!("no usable traces in {}", input.display())));
    }
    info!("ingested {} traces from {} rows", corpus.len(), stats.rows);
    let mut run = Run::open(root, "ingest", cfg, &[("input", input)])?;
    let p = run.path("corpus.csv");
    export_corpus(&corpus, &p)?;
    run.json(
        "ingest_stats.json",
        &serde_json::json!({
            "rows": stats.rows,
            "out_of_bounds": stats.out_of_bounds,
            "duplicate_timestamps": stats.duplicate_timestamps,
            "dropped_users": stats.dropped_users,
            "traces": corpus.len(),
            "points": corpus.total_points(),
        }),
    )?;
    Ok(run.done())
}

/// Writes labelled targets in the ingestion schema plus a `member` column.
pub fn write_targets(members: &Corpus, non_members: &Corpus, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_corpus(members, &mut buf)?;
    let text = String::from_utf8(buf).expect("corpus text is UTF-8");
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    for line in text.lines() {
        if line.starts_with('#') {
            writeln!(out, "{line}")?;
        } else if line == "user_id,timestamp,lat,lon" {
            writeln!(out, "{line},member")?;
        } else {
            writeln!(out, "{line},1")?;
        }
    }
    let spec = non_members.spec();
    for t in non_members.traces() {
        for p in t.points() {
            let ll = spec.decode(p.cell)?;
            writeln!(out, "{},{},{},{},0", t.user_id(), p.timestamp, ll.lat, ll.lon)?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Reads a targets file onto `spec` and `period`; returns traces and membership labels.
pub fn load_targets(path: &Path, spec: &GridSpec, period: i64) -> Result<(Corpus, Vec<bool>)> {
    let text = crate::dataio::persist::read_text(path)?;
    let (corpus, _) = ingest_reader(text.as_bytes(), spec, period)?;
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(csv_err)?.clone();
    let uid = headers.iter().position(|h| h == "user_id");
    let col = headers.iter().position(|h| h == "member");
    let (Some(uid), Some(col)) = (uid, col) else {
        return Err(Error::Parse {
            line: 1,
            msg: "targets need user_id and member columns".into(),
        });
    };
    let mut labels: HashMap<String, bool> = HashMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let m = match rec.get(col).unwrap_or("") {
            "1" | "true" => true,
            "0" | "false" => false,
            other => {
                return Err(Error::Parse {
                    line,
                    msg: format!("member must be 0/1 or true/false, found {other:?}"),
                })
            }
        };
        let user = rec.get(uid).unwrap_or("").to_string();
        if let Some(prev) = labels.insert(user.clone(), m) {
            if prev != m {
                return Err(Error::Parse {
                    line,
                    msg: format!("user {user} has conflicting member labels"),
                });
            }
        }
    }
    let flags = corpus.traces().iter().map(|t| labels[t.user_id()]).collect();
    Ok((corpus, flags))
}

pub fn cmd_simulate(root: &Path, cfg: &RunConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let seed = cfg.require_seed()?;
    let spec = cfg.grid()?;
    let all = simulate_ground_truth(&spec, &cfg.simulation(seed))?;
    let members = all.subset(&(0..cfg.n_users).collect::<Vec<_>>());
    let mut run = Run::open(root, "simulate", cfg, &[])?;
    let p = run.path("corpus.csv");
    export_corpus(&members, &p)?;
    if cfg.n_nonmembers > 0 {
        let non = all.subset(&(cfg.n_users..all.len()).collect::<Vec<_>>());
        let p = run.path("targets.csv");
        write_targets(&members, &non, &p)?;
    }
    Ok(run.done())
}

pub fn cmd_fit(root: &Path, cfg: &RunConfig, corpus_path: &Path) -> Result<RunOutput> {
    cfg.validate()?;
    let corpus = load_checked(cfg, corpus_path)?;
    let started = Instant::now();
    let model = match cfg.model_type {
        ModelType::Vine => TrainedModel::Vine(VineGenerator::fit(&corpus, &cfg.vine_options(), cfg.require_seed()?)?),
        ModelType::Markov => TrainedModel::Markov(MarkovModel::fit(&corpus, cfg.markov_options())?),
        ModelType::External => {
            return Err(Error::Config(
                "external corpora are not fitted; run generate with model_type = \"external\"".into(),
            ))
        }
    };
    let fit_seconds = started.elapsed().as_secs_f64();
    info!("fitted {} model in {fit_seconds:.3} s", model.model_type());
    let mut run = Run::open(root, "fit", cfg, &[("corpus", corpus_path)])?;
    let p = run.path("model.json");
    model.save(&p)?;
    run.timings(&Timings {
        fit_seconds: Some(fit_seconds),
        ..Default::default()
    })?;
    Ok(run.done())
}

pub fn cmd_generate(root: &Path, cfg: &RunConfig, model_path: Option<&Path>) -> Result<RunOutput> {
    cfg.validate()?;
    let seed = cfg.require_seed()?;
    let explicit = cfg.explicit_grid()?;
    let (generator, input): (Box<dyn Generator>, PathBuf) = match cfg.model_type {
        ModelType::External => {
            let path = cfg
                .external_path
                .clone()
                .ok_or_else(|| Error::Config("model_type = \"external\" needs external_path".into()))?;
            let corpus = load_corpus(&path, explicit.as_ref())?;
            (Box::new(ExternalCorpus::from_corpus(corpus)), path)
        }
        _ => {
            let path = model_path.ok_or_else(|| Error::Config("generate needs --model".into()))?;
            (Box::new(TrainedModel::load(path, explicit.as_ref())?), path.to_path_buf())
        }
    };
    let started = Instant::now();
    let syn = generator.generate(cfg.n_traces, cfg.trace_len, cfg.start_time, seed)?;
    let generation_seconds = started.elapsed().as_secs_f64();
    info!("generated {} traces in {generation_seconds:.3} s", syn.len());
    let mut run = Run::open(root, "generate", cfg, &[("model", &input)])?;
    let p = run.path("synthetic.csv");
    export_corpus(&syn, &p)?;
    run.timings(&Timings {
        generation_seconds: Some(generation_seconds),
        ..Default::default()
    })?;
    Ok(run.done())
}

/// Both attacks against `targets`, with the prior and the nearest traces taken from `syn`.
pub fn run_attacks(
    cfg: &RunConfig,
    seed: u64,
    syn: &Corpus,
    targets: &Corpus,
    member: &[bool],
) -> Result<(PrivacyResult, MembershipResult)> {
    let prior = MarkovModel::fit(syn, cfg.markov_options())?;
    let hidden = hide_corpus(targets, cfg.p_hide, derive_seed(seed, 1))?;
    let seq = sequence_attack(targets, &hidden, &prior, derive_seed(seed, 2))?;
    let (mut members, mut non) = (Vec::new(), Vec::new());
    for (t, &m) in targets.traces().iter().zip(member) {
        if m {
            members.push(t.clone());
        } else {
            non.push(t.clone());
        }
    }
    let mem = membership_attack(syn, &members, &non, derive_seed(seed, 3))?;
    Ok((PrivacyResult::new(cfg.p_hide, &seq, &mem), mem))
}

fn membership_rows(mem: &MembershipResult) -> Vec<Vec<String>> {
    mem.scores
        .iter()
        .map(|s| {
            vec![
                s.user_id.clone(),
                u8::from(s.member).to_string(),
                s.score.to_string(),
                u8::from(s.calibration).to_string(),
                u8::from(s.predicted_member).to_string(),
            ]
        })
        .collect()
}

const MEMBERSHIP_HEADER: [&str; 5] = ["user_id", "member", "score", "calibration", "predicted_member"];

pub fn cmd_attack(root: &Path, cfg: &RunConfig, syn_path: &Path, targets_path: &Path) -> Result<RunOutput> {
    cfg.validate()?;
    let seed = cfg.require_seed()?;
    let syn = load_checked(cfg, syn_path)?;
    let (targets, member) = load_targets(targets_path, syn.spec(), syn.sampling_period())?;
    let started = Instant::now();
    let (privacy, mem) = run_attacks(cfg, seed, &syn, &targets, &member)?;
    let attack_seconds = started.elapsed().as_secs_f64();
    let mut run = Run::open(root, "attack", cfg, &[("synthetic", syn_path), ("targets", targets_path)])?;
    run.json("privacy.json", &privacy)?;
    run.csv("membership_scores.csv", &MEMBERSHIP_HEADER, membership_rows(&mem))?;
    run.timings(&Timings {
        attack_seconds: Some(attack_seconds),
        ..Default::default()
    })?;
    Ok(run.done())
}

fn topn_rows(spec: &GridSpec, r: &TopNReport) -> Result<[Vec<Vec<String>>; 3]> {
    let (mut cells, mut hours, mut dwell) = (Vec::new(), Vec::new(), Vec::new());
    for c in &r.cells {
        let ll = spec.decode(c.cell)?;
        let id = c.cell.0.to_string();
        cells.push(vec![
            c.rank.to_string(),
            id.clone(),
            ll.lat.to_string(),
            ll.lon.to_string(),
            c.real_p.to_string(),
            c.syn_p.to_string(),
        ]);
        for (h, (a, b)) in c.real_visit_hours.iter().zip(&c.syn_visit_hours).enumerate() {
            hours.push(vec![c.rank.to_string(), id.clone(), h.to_string(), a.to_string(), b.to_string()]);
        }
        for (k, (a, b)) in c.real_dwell.iter().zip(&c.syn_dwell).enumerate() {
            dwell.push(vec![
                c.rank.to_string(),
                id.clone(),
                k.to_string(),
                r.dwell_edges[k].to_string(),
                a.to_string(),
                b.to_string(),
            ]);
        }
    }
    Ok([cells, hours, dwell])
}

fn mmd_rows(m: &MmdResult) -> Vec<Vec<String>> {
    let mut rows = vec![
        vec!["mmd2_unbiased".into(), String::new(), m.mmd2_unbiased.to_string()],
        vec!["mmd2_biased".into(), String::new(), m.mmd2_biased.to_string()],
        vec!["p_value".into(), String::new(), m.p_value.to_string()],
        vec!["sigma".into(), String::new(), m.sigma.to_string()],
    ];
    for (i, s) in m.permutation_stats.iter().enumerate() {
        rows.push(vec!["permutation".into(), i.to_string(), s.to_string()]);
    }
    rows
}

fn mi_rows(pair: &MiPair) -> (Vec<Vec<String>>, Vec<Vec<String>>) {
    let lags = if pair.real.lags.len() >= pair.synthetic.lags.len() {
        &pair.real.lags
    } else {
        &pair.synthetic.lags
    };
    let cell = |c: &MiDecayCurve, k: usize| c.mi_bits.get(k).map(f64::to_string).unwrap_or_default();
    let curve = lags
        .iter()
        .enumerate()
        .map(|(k, lag)| vec![lag.to_string(), cell(&pair.real, k), cell(&pair.synthetic, k)])
        .collect();
    let mut fits = Vec::new();
    for (name, c) in [("real", &pair.real), ("synthetic", &pair.synthetic)] {
        for (model, f) in [("power_law", c.power_law), ("exponential", c.exponential)] {
            if let Some(f) = f {
                fits.push(vec![
                    name.to_string(),
                    model.to_string(),
                    f.parameter.to_string(),
                    f.intercept.to_string(),
                    f.r_squared.to_string(),
                ]);
            }
        }
    }
    (curve, fits)
}

pub fn cmd_evaluate(
    root: &Path,
    cfg: &RunConfig,
    real_path: &Path,
    syn_path: &Path,
    targets_path: Option<&Path>,
    timing_paths: &[PathBuf],
) -> Result<RunOutput> {
    cfg.validate()?;
    let seed = cfg.require_seed()?;
    let real = load_checked(cfg, real_path)?;
    let syn = load_corpus(syn_path, Some(real.spec()))?;
    let started = Instant::now();

    let topn = block(topn_report(&real, &syn, cfg.top_n))?;
    let mmd = block(mmd_test(&real, &syn, cfg.n_permutations, derive_seed(seed, 10)))?;
    let mi = block(mi_decay(&real, cfg.tau_max).and_then(|r| {
        Ok(MiPair {
            real: r,
            synthetic: mi_decay(&syn, cfg.tau_max)?,
        })
    }))?;
    let mut membership = None;
    let privacy = match targets_path {
        Some(p) => {
            let (targets, member) = load_targets(p, syn.spec(), syn.sampling_period())?;
            match block(run_attacks(cfg, derive_seed(seed, 11), &syn, &targets, &member))? {
                Block::Computed { value: (pr, mem) } => {
                    membership = Some(mem);
                    pr.into()
                }
                Block::Skipped { reason } => Block::skipped(reason),
            }
        }
        None => Block::skipped("no targets file given"),
    };
    let timings = if timing_paths.is_empty() {
        Block::skipped("no timings files given")
    } else {
        let mut t = Timings::default();
        for p in timing_paths {
            t.merge(&Timings::load(p)?);
        }
        t.into()
    };
    let evaluation_seconds = started.elapsed().as_secs_f64();

    let mut inputs: Vec<(&str, &Path)> = vec![("real", real_path), ("synthetic", syn_path)];
    if let Some(p) = targets_path {
        inputs.push(("targets", p));
    }
    for p in timing_paths {
        inputs.push(("timings", p));
    }
    let mut run = Run::open(root, "evaluate", cfg, &inputs)?;
    let report = EvalReport {
        format_version: REPORT_FORMAT_VERSION,
        config: cfg.clone(),
        inputs: run.inputs.clone(),
        topn,
        mmd,
        mi,
        privacy,
        timings,
    };
    let p = run.path("report.json");
    save_report(&report, &p)?;
    if let Some(t) = report.topn.value() {
        let [cells, hours, dwell] = topn_rows(real.spec(), t)?;
        run.csv("topn.csv", &["rank", "cell", "lat", "lon", "real_p", "synthetic_p"], cells)?;
        run.csv("topn_visit_hours.csv", &["rank", "cell", "hour", "real", "synthetic"], hours)?;
        run.csv("topn_dwell.csv", &["rank", "cell", "bin", "upper_seconds", "real", "synthetic"], dwell)?;
    }
    if let Some(m) = report.mmd.value() {
        run.csv("mmd.csv", &["statistic", "permutation", "value"], mmd_rows(m))?;
    }
    if let Some(m) = report.mi.value() {
        let (curve, fits) = mi_rows(m);
        run.csv("mi.csv", &["lag", "real_bits", "synthetic_bits"], curve)?;
        run.csv("mi_fits.csv", &["corpus", "model", "parameter", "intercept", "r_squared"], fits)?;
    }
    if let Some(mem) = &membership {
        run.csv("membership_scores.csv", &MEMBERSHIP_HEADER, membership_rows(mem))?;
    }
    run.timings(&Timings {
        evaluation_seconds: Some(evaluation_seconds),
        ..Default::default()
    })?;
    Ok(run.done())
}
