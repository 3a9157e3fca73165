use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use gridbench_client::audit::sha256_hex;
use gridbench_client::{build_model, complete_all, AuditLog, ModelConfig, Provider, Request};
use gridbench_core::bot::{format_stack, solve as run_expert, Halt, Init, SolveOptions};
use gridbench_core::dataset::{
    detect_task, generate_dataset, read_rows, GenOptions, Manifest, PrefixPolicy, Row, Task,
};
use gridbench_core::format::{format_instance, FormatStyle};
use gridbench_core::harness::answer::{oracle_answer, END, START};
use gridbench_core::harness::eval::{provider_error, score, EpisodeRecord, EvalConfig, Outcome};
use gridbench_core::harness::parse::parse_decompose;
use gridbench_core::harness::prompt::{PromptStrategy, Prompter};
use gridbench_core::harness::report::{build_report, summary_table, write_report, EvalReport};
use gridbench_core::levels::{generate_ref, LevelId, LevelRef, PlanEnvSpec, PlanSize};

use crate::args::{EvalArgs, GenerateArgs, SolveArgs, StyleArg, SummaryArgs, TaskArg};
use crate::error::{io_error, CliError};

/// `println!` that reports a closed stdout instead of panicking.
macro_rules! say {
    ($($t:tt)*) => {
        writeln!(std::io::stdout(), $($t)*).map_err(CliError::from)?
    };
}

fn task_of(t: TaskArg) -> Task {
    match t {
        TaskArg::Predict => Task::Predict,
        TaskArg::Plan => Task::Plan,
        TaskArg::Decompose => Task::Decompose,
    }
}

fn style_of(s: StyleArg) -> FormatStyle {
    match s {
        StyleArg::Narrative => FormatStyle::Narrative,
        StyleArg::Structured => FormatStyle::Structured,
        StyleArg::Json => FormatStyle::Json,
    }
}

fn prefix_policy(text: &str, full_prob: f64) -> Result<PrefixPolicy, CliError> {
    match text {
        "mixed" if (0.0..=1.0).contains(&full_prob) => Ok(PrefixPolicy::Mixed { full_prob }),
        "mixed" => Err(CliError::Usage(format!("--full-prob {full_prob} is outside [0, 1]"))),
        "full" => Ok(PrefixPolicy::Full),
        n => n
            .parse()
            .map(PrefixPolicy::Length)
            .map_err(|_| CliError::Usage(format!("invalid prefix policy `{n}` (expected mixed, full or a number)"))),
    }
}

fn parse_levels(text: &str) -> Result<Vec<LevelRef>, CliError> {
    if text.trim().eq_ignore_ascii_case("all") {
        return Ok(LevelId::ALL.into_iter().map(LevelRef::Bench).collect());
    }
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| LevelRef::parse(s).map_err(CliError::from))
        .collect()
}

pub fn generate(a: GenerateArgs) -> Result<(), CliError> {
    let task = task_of(a.task);
    let levels = if task == Task::Plan {
        let size: PlanSize = a.size.parse()?;
        vec![LevelRef::Plan(PlanEnvSpec::new(size, a.dists)?)]
    } else {
        parse_levels(&a.levels)?
    };
    if levels.is_empty() {
        return Err(CliError::Usage("no levels selected".into()));
    }
    let opts = GenOptions {
        prefix: prefix_policy(&a.prefix, a.full_prob)?,
        style: style_of(a.style),
    };
    let manifest = generate_dataset(task, &levels, a.seeds, &opts, &a.out)?;
    print_manifest(&manifest, &a.out)
}

fn print_manifest(m: &Manifest, dir: &Path) -> Result<(), CliError> {
    say!(
        "{} dataset, seeds {}..{}, written to {}",
        m.task,
        m.seeds.start,
        m.seeds.end.saturating_sub(1),
        dir.display()
    );
    for (name, n) in &m.counts {
        say!("  {name}: {n} rows");
    }
    if !m.help_count_histogram.is_empty() {
        say!("help_count histogram:");
        let total: usize = m.help_count_histogram.values().sum();
        for (k, n) in &m.help_count_histogram {
            say!("  {k:>3}: {n:>6} ({:.1}%)", 100.0 * *n as f64 / total as f64);
        }
    }
    Ok(())
}

fn read_stack_arg(text: &str) -> Result<Vec<gridbench_core::bot::Subgoal>, CliError> {
    let text = match text.strip_prefix('@') {
        Some(path) => {
            let path = Path::new(path);
            std::fs::read_to_string(path).map_err(|e| io_error(path, e))?
        }
        None => text.to_string(),
    };
    let body = if text.contains(START) {
        text
    } else {
        format!("{START}\n{}\n{END}", text.replace(';', "\n"))
    };
    parse_decompose(&body).map_err(|e| CliError::Usage(format!("invalid --init-stack: {e}")))
}

pub fn solve(a: SolveArgs) -> Result<(), CliError> {
    let level = LevelRef::parse(&a.level)?;
    let inst = generate_ref(level, a.seed)?;
    let init = match &a.init_stack {
        Some(s) => Init::Stack(read_stack_arg(s)?),
        None => Init::Default,
    };
    let opts = if a.no_additions {
        SolveOptions::no_additions()
    } else {
        SolveOptions::default()
    };
    let trace = run_expert(&inst.state, &inst.mission, init, &opts);
    if a.json {
        let text = serde_json::to_string_pretty(&trace).expect("traces serialize");
        say!("{text}");
    } else {
        say!("{}, seed {}", inst.level_name(), inst.seed);
        say!("Mission: {}", inst.mission);
        if a.describe {
            say!();
            say!("{}", format_instance(&inst, FormatStyle::Structured));
        }
        say!();
        let (first, rest) = trace.stacks.split_first().expect("trace records the initial stack");
        say!("Initial stack: {}", format_stack(&first.stack));
        let (middle, last) = match rest.split_last() {
            Some((last, middle)) if trace.halt == Halt::Success => (middle, Some(last)),
            _ => (rest, None),
        };
        for s in middle {
            say!("Stack at step {}: {}", s.step, format_stack(&s.stack));
        }
        if let Some(s) = last {
            say!("Final stack after the success of the mission: {}", format_stack(&s.stack));
        }
        say!();
        let actions: Vec<String> = trace.actions.iter().map(|a| a.to_string()).collect();
        say!("Actions ({}): {}", actions.len(), actions.join(", "));
        say!("Subgoals added: {}", trace.added_subgoals);
        say!("Result: {} after {} of {} steps", trace.halt, trace.steps, trace.step_budget);
    }
    if trace.success {
        Ok(())
    } else {
        Err(CliError::Failed(format!("the expert did not complete the mission: {}", trace.halt)))
    }
}

pub fn levels() -> Result<(), CliError> {
    say!("{:<18} {:<10} Skills", "Level", "Difficulty");
    for l in LevelId::ALL {
        let skills: Vec<&str> = l.skills().into_iter().map(|s| s.description()).collect();
        say!("{:<18} {:<10} {}", l.short_name(), l.difficulty().name(), skills.join("; "));
    }
    say!();
    say!("Plan environments (--task plan --size S --dists N):");
    for s in PlanSize::ALL {
        say!(
            "  {:<7} {}x{} grid, up to {} distractors",
            s.name().to_ascii_lowercase(),
            s.room_size(),
            s.room_size(),
            s.max_distractors()
        );
    }
    Ok(())
}

/// Dataset files under `path` in name order, with the task they share.
fn dataset_files(path: &Path) -> Result<(Task, Vec<PathBuf>), CliError> {
    let files = if path.is_dir() {
        let mut v: Vec<PathBuf> = std::fs::read_dir(path)
            .map_err(|e| io_error(path, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        v.sort();
        v
    } else {
        vec![path.to_path_buf()]
    };
    if files.is_empty() {
        return Err(CliError::Io(format!("{}: no .jsonl dataset files", path.display())));
    }
    let task = detect_task(&files[0])?;
    for f in &files[1..] {
        let t = detect_task(f)?;
        if t != task {
            return Err(CliError::Usage(format!(
                "{} holds {t} rows but {} holds {task} rows",
                f.display(),
                files[0].display()
            )));
        }
    }
    Ok((task, files))
}

/// Generation options from a `manifest.json` beside the dataset, if any.
fn dataset_options(path: &Path) -> Result<GenOptions, CliError> {
    let dir = if path.is_dir() { path } else { path.parent().unwrap_or(Path::new(".")) };
    let manifest = dir.join("manifest.json");
    if !manifest.exists() {
        return Ok(GenOptions::default());
    }
    let text = std::fs::read_to_string(&manifest).map_err(|e| io_error(&manifest, e))?;
    let m: Manifest = serde_json::from_str(&text).map_err(|e| CliError::Io(format!("{}: {e}", manifest.display())))?;
    Ok(m.options)
}

/// One completed row, as stored in `progress.jsonl` for resuming.
#[derive(Debug, Serialize, Deserialize)]
struct ProgressEntry {
    dataset_sha256: String,
    model: String,
    strategy: String,
    record: EpisodeRecord,
}

fn load_progress(path: &Path, key: (&str, &str, &str)) -> Result<HashMap<String, EpisodeRecord>, CliError> {
    let mut done = HashMap::new();
    if !path.exists() {
        return Ok(done);
    }
    let file = File::open(path).map_err(|e| io_error(path, e))?;
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| io_error(path, e))?;
        // A torn final line from an interrupted run is skipped.
        let Ok(e) = serde_json::from_str::<ProgressEntry>(&line) else { continue };
        if (e.dataset_sha256.as_str(), e.model.as_str(), e.strategy.as_str()) == key {
            // Provider failures are retried on resume.
            if !matches!(e.record.outcome, Outcome::ProviderError(_)) {
                done.insert(e.record.id.clone(), e.record);
            }
        }
    }
    Ok(done)
}

fn model_config(spec: &str) -> Result<ModelConfig, CliError> {
    match spec {
        "oracle" => Ok(ModelConfig::local(Provider::Oracle)),
        "silent" => Ok(ModelConfig::local(Provider::Silent)),
        path => Ok(ModelConfig::from_file(Path::new(path))?),
    }
}

pub fn eval(a: EvalArgs) -> Result<(), CliError> {
    let strategy: PromptStrategy = a.strategy.parse()?;
    let mut cfg = model_config(&a.model)?;
    if let Some(n) = a.concurrency {
        cfg.concurrency = n;
    }
    let model = build_model(&cfg)?;

    let (task, files) = dataset_files(&a.dataset)?;
    let mut rows = Vec::new();
    let mut bytes = Vec::new();
    for f in &files {
        bytes.extend(std::fs::read(f).map_err(|e| io_error(f, e))?);
        rows.extend(read_rows(task, f)?);
    }
    if let Some(n) = a.limit {
        rows.truncate(n);
    }
    let mut ids = HashSet::new();
    if let Some(dup) = rows.iter().map(Row::id).find(|id| !ids.insert(id.clone())) {
        return Err(CliError::Usage(format!("duplicate row id `{dup}` in the dataset")));
    }
    let dataset_sha256 = sha256_hex(&String::from_utf8_lossy(&bytes));
    let gen = dataset_options(&a.dataset)?;
    let prompter = Prompter::new(strategy, gen);

    std::fs::create_dir_all(&a.out).map_err(|e| io_error(&a.out, e))?;
    let progress_path = a.out.join("progress.jsonl");
    let key = (dataset_sha256.as_str(), model.name(), strategy.name());
    let mut done = if a.resume {
        load_progress(&progress_path, key)?
    } else {
        HashMap::new()
    };
    let progress = OpenOptions::new()
        .create(true)
        .write(true)
        .append(a.resume)
        .truncate(!a.resume)
        .open(&progress_path)
        .map_err(|e| io_error(&progress_path, e))?;
    let progress = Mutex::new(BufWriter::new(progress));

    let pending: Vec<&Row> = rows.iter().filter(|r| !done.contains_key(&r.id())).collect();
    eprintln!(
        "{} {task} rows, {} already done, {} to run with {} ({strategy})",
        rows.len(),
        rows.len() - pending.len(),
        pending.len(),
        model.name()
    );

    let mut requests = Vec::with_capacity(pending.len());
    for row in &pending {
        let reference = match cfg.provider {
            Provider::Oracle => Some(oracle_answer(row)?),
            _ => None,
        };
        requests.push(Request {
            id: row.id(),
            prompt: prompter.prompt(row)?,
            reference,
        });
    }
    if a.save_prompts {
        let path = a.out.join("prompts.jsonl");
        let mut out = BufWriter::new(File::create(&path).map_err(|e| io_error(&path, e))?);
        for r in &requests {
            let line = serde_json::json!({"id": r.id, "prompt": r.prompt});
            writeln!(out, "{line}").map_err(|e| io_error(&path, e))?;
        }
        out.flush().map_err(|e| io_error(&path, e))?;
    }

    let by_id: HashMap<String, &Row> = pending.iter().map(|r| (r.id(), *r)).collect();
    let audit = AuditLog::open(&a.out.join("audit.jsonl"))?;
    let scored: Mutex<BTreeMap<String, Result<EpisodeRecord, CliError>>> = Mutex::new(BTreeMap::new());
    let write_failed = Mutex::new(None);
    complete_all(model.as_ref(), &requests, cfg.concurrency, Some(&audit), |req, result| {
        let row = by_id[req.id.as_str()];
        let record = match result {
            Ok(c) => score(row, &c.text).map_err(CliError::from),
            Err(e) => {
                log::warn!("{}: {e}", req.id);
                Ok(provider_error(row, &e.to_string()))
            }
        };
        if let Ok(r) = &record {
            let entry = ProgressEntry {
                dataset_sha256: dataset_sha256.clone(),
                model: model.name().to_string(),
                strategy: strategy.name().to_string(),
                record: r.clone(),
            };
            let line = serde_json::to_string(&entry).expect("progress entries serialize");
            let mut out = progress.lock().unwrap_or_else(|p| p.into_inner());
            if let Err(e) = writeln!(out, "{line}").and_then(|_| out.flush()) {
                *write_failed.lock().unwrap_or_else(|p| p.into_inner()) = Some(io_error(&progress_path, e));
            }
        }
        scored.lock().unwrap_or_else(|p| p.into_inner()).insert(req.id.clone(), record);
    });
    if let Some(e) = write_failed.into_inner().unwrap_or_else(|p| p.into_inner()) {
        return Err(e);
    }
    for (id, r) in scored.into_inner().unwrap_or_else(|p| p.into_inner()) {
        done.insert(id, r?);
    }

    let records: Vec<EpisodeRecord> = rows.iter().filter_map(|r| done.remove(&r.id())).collect();
    let provider_failures = records
        .iter()
        .filter(|r| matches!(r.outcome, Outcome::ProviderError(_)))
        .count();
    let eval_cfg = EvalConfig {
        parse_failure_distance: a.parse_failure_distance,
    };
    let report = build_report(records, model.name(), strategy.name(), eval_cfg);
    write_report(&report, &a.out)?;
    say!("{}", summary_table(std::slice::from_ref(&report)).text.trim_end());
    say!("Report written to {}", a.out.display());
    if provider_failures > 0 {
        return Err(CliError::Provider(format!(
            "{provider_failures} requests failed at the provider; rerun with --resume to retry them"
        )));
    }
    Ok(())
}

fn read_report(path: &Path) -> Result<EvalReport, CliError> {
    let path = if path.is_dir() { path.join("report.json") } else { path.to_path_buf() };
    let text = std::fs::read_to_string(&path).map_err(|e| io_error(&path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn summary(a: SummaryArgs) -> Result<(), CliError> {
    let reports = a.reports.iter().map(|p| read_report(p)).collect::<Result<Vec<_>, _>>()?;
    let table = summary_table(&reports);
    say!("{}", table.text.trim_end());
    if let Some(path) = &a.csv {
        std::fs::write(path, table.csv).map_err(|e| io_error(path, e))?;
    }
    Ok(())
}
