use std::collections::{BTreeMap, HashSet};
use std::fs::OpenOptions;
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{mpsc, Arc};

use crate::baselines::{classify_direct, ClassificationPromptTemplate};
use crate::dataset::{self, ColumnMap};
use crate::detection::{test_equivalence, EquivalencePromptTemplate};
use crate::domain::{resolve_range, Question, StrategySpec};
use crate::evaluation::efficiency_bounds;
use crate::oracle::{build_oracle, CachedOracle, Oracle, ResponseCache};
use crate::search::{run_search, Prediction, SearchError, SearchFailure, SearchOptions};
use crate::seeding::seed_for_question;

use super::config::{HeaderLine, RunConfig};
use super::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ClassifySummary {
    pub total: usize,
    pub resumed: usize,
    pub written: usize,
    pub failed: usize,
}

struct Job<'a> {
    cfg: &'a RunConfig,
    oracle: &'a dyn Oracle,
    equivalence: EquivalencePromptTemplate,
    classification: Option<ClassificationPromptTemplate>,
    opts: SearchOptions,
}

impl Job<'_> {
    fn run(&self, q: &Question) -> Prediction {
        let failure = |strategy: &StrategySpec, error: String| {
            Prediction::Failure(SearchFailure {
                question_id: q.id.clone(),
                strategy: strategy.clone(),
                error,
                trace: Vec::new(),
            })
        };
        let spec = &self.cfg.strategy;
        if let Some(tmpl) = &self.classification {
            return match classify_direct(self.oracle, tmpl, q, spec, self.cfg.baseline_unparseable_label) {
                Ok(o) => Prediction::Outcome(o),
                Err(e) => failure(spec, e.to_string()),
            };
        }
        let spec = match spec {
            StrategySpec::Random { seed, .. } => {
                spec.with_seed(seed_for_question(seed.unwrap_or(self.cfg.seed), &q.id))
            }
            other => other.clone(),
        };
        let range = match resolve_range(q.source, self.cfg.range) {
            Ok(r) => r,
            Err(e) => return failure(&spec, e.to_string()),
        };
        let mode = self.cfg.equivalence_mode;
        let result = run_search(q, &range, &spec, &self.opts, |y| {
            test_equivalence(self.oracle, &self.equivalence, q, &range, y, mode)
        });
        match result {
            Ok(o) => Prediction::Outcome(o),
            Err(SearchError::Aborted(f)) => Prediction::Failure(*f),
            Err(e) => failure(&spec, e.to_string()),
        }
    }
}

/// Rows already present in an outcome file.
struct Existing {
    done: HashSet<String>,
    failed: usize,
}

/// Reads an existing outcome file for resuming. A torn last line (no
/// trailing newline) is cut off; any other unreadable row is an error.
fn read_existing(path: &Path, cfg: &RunConfig) -> Result<Option<Existing>, CliError> {
    let bytes = match std::fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(CliError::Io(format!("{}: {e}", path.display()))),
    };
    let complete = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
    if complete < bytes.len() {
        log::warn!("{}: dropping torn final line", path.display());
        let f = OpenOptions::new()
            .write(true)
            .open(path)
            .map_err(|e| CliError::Io(e.to_string()))?;
        f.set_len(complete as u64).map_err(|e| CliError::Io(e.to_string()))?;
    }
    if complete == 0 {
        return Ok(None);
    }
    let text = std::str::from_utf8(&bytes[..complete]).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let mut lines = text.lines();
    let header: HeaderLine = lines
        .next()
        .and_then(|l| serde_json::from_str(l).ok())
        .ok_or_else(|| CliError::Config(format!("{}: missing header line", path.display())))?;
    if header.header.config.reproducible() != cfg.reproducible() {
        return Err(CliError::Config(format!(
            "{} was written with a different configuration; choose another output path",
            path.display()
        )));
    }
    let mut existing = Existing {
        done: HashSet::new(),
        failed: 0,
    };
    for (i, line) in lines.enumerate() {
        let row: Prediction =
            serde_json::from_str(line).map_err(|e| CliError::Io(format!("{}: row {}: {e}", path.display(), i + 2)))?;
        existing.failed += usize::from(matches!(row, Prediction::Failure(_)));
        existing.done.insert(row.question_id().to_string());
    }
    Ok(Some(existing))
}

fn io_err(e: io::Error) -> CliError {
    CliError::Io(e.to_string())
}

/// Classifies every question of the configured dataset, appending one row
/// per question to the output (standard output if none is set).
pub fn cmd_classify(cfg: &RunConfig) -> Result<ClassifySummary, CliError> {
    cfg.validate()?;
    let dataset_path = cfg.dataset.as_ref().expect("validated");
    let columns = ColumnMap::from_overrides(&cfg.column_map).map_err(|e| CliError::Config(e.to_string()))?;
    let ds = dataset::load(dataset_path, cfg.format, &columns).map_err(|e| CliError::Config(e.to_string()))?;

    let classification = if cfg.strategy.is_search() {
        let ranges: HashSet<_> = ds
            .items
            .iter()
            .map(|q| resolve_range(q.source, cfg.range))
            .collect::<Result<_, _>>()
            .map_err(|e| CliError::Config(e.to_string()))?;
        for r in &ranges {
            efficiency_bounds(r, &cfg.strategy).map_err(|e| CliError::Config(format!("{r}: {e}")))?;
        }
        None
    } else {
        Some(ClassificationPromptTemplate::for_strategy(&cfg.strategy).map_err(CliError::Config)?)
    };
    let equivalence = match &cfg.equivalence_template {
        Some(p) => EquivalencePromptTemplate::from_json_file(p).map_err(|e| CliError::Config(e.to_string()))?,
        None => EquivalencePromptTemplate::default(),
    };

    let inner = build_oracle(&cfg.oracle, &ds.items).map_err(|e| CliError::Config(e.to_string()))?;
    let oracle: Box<dyn Oracle> = match &cfg.cache {
        Some(p) => {
            let cache = ResponseCache::open(p).map_err(|e| CliError::Config(e.to_string()))?;
            Box::new(CachedOracle::new(inner, Arc::new(cache)))
        }
        None => inner,
    };

    let mut summary = ClassifySummary {
        total: ds.len(),
        ..Default::default()
    };
    let (existing, mut out): (Option<Existing>, Box<dyn Write>) = match &cfg.output {
        Some(path) => {
            let existing = read_existing(path, cfg)?;
            let file = OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(io_err)?;
            (existing, Box::new(BufWriter::new(file)))
        }
        None => (None, Box::new(io::stdout().lock())),
    };
    match &existing {
        Some(e) => {
            summary.resumed = e.done.len();
            summary.failed = e.failed;
            log::info!("resuming: {} of {} questions already done", e.done.len(), ds.len());
        }
        None => {
            serde_json::to_writer(&mut out, &HeaderLine::new(cfg)).map_err(|e| CliError::Io(e.to_string()))?;
            out.write_all(b"\n").map_err(io_err)?;
            out.flush().map_err(io_err)?;
        }
    }
    let pending: Vec<&Question> = ds
        .items
        .iter()
        .filter(|q| existing.as_ref().is_none_or(|e| !e.done.contains(&q.id)))
        .collect();

    let job = Job {
        cfg,
        oracle: oracle.as_ref(),
        equivalence,
        classification,
        opts: SearchOptions {
            unparseable: cfg.unparseable_policy,
            fan_out: cfg.probe_fan_out,
        },
    };
    let workers = cfg.concurrency.min(pending.len()).max(1);
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<(usize, Prediction)>();
    let mut write_result = Ok(());
    std::thread::scope(|s| {
        for _ in 0..workers {
            let tx = tx.clone();
            let (next, pending, job) = (&next, &pending, &job);
            s.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(q) = pending.get(i) else { break };
                if tx.send((i, job.run(q))).is_err() {
                    break;
                }
            });
        }
        drop(tx);

        // Rows are written in dataset order whatever order workers finish in.
        let mut buffer = BTreeMap::new();
        let mut cursor = 0;
        for (i, row) in rx {
            buffer.insert(i, row);
            while let Some(row) = buffer.remove(&cursor) {
                cursor += 1;
                if write_result.is_err() {
                    continue;
                }
                let failed = matches!(row, Prediction::Failure(_));
                write_result = serde_json::to_string(&row)
                    .map_err(|e| CliError::Io(e.to_string()))
                    .and_then(|line| writeln!(out, "{line}").and_then(|_| out.flush()).map_err(io_err));
                summary.written += 1;
                summary.failed += usize::from(failed);
                match &row {
                    Prediction::Outcome(o) => log::info!(
                        "[{}/{}] {} {} ({} comparisons)",
                        summary.resumed + cursor,
                        summary.total,
                        o.question_id,
                        o.predicted,
                        o.comparisons
                    ),
                    Prediction::Failure(f) => log::warn!(
                        "[{}/{}] {} failed: {}",
                        summary.resumed + cursor,
                        summary.total,
                        f.question_id,
                        f.error
                    ),
                }
            }
        }
    });
    write_result?;
    Ok(summary)
}
