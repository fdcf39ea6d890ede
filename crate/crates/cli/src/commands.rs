//! Command implementations behind the `kgperturb` binary. Every command
//! reads its inputs through the resolved config, writes fixed-name
//! artifacts under the output directory, and drops a
//! `resolved_<command>.toml` snapshot beside them, so a finished run
//! directory documents exactly how it was produced.

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use kgperturb_core::downstream::{
    generate_synthetic_world, load_qa_tasks, save_qa_tasks, train_qa, train_recommender,
    Evaluator, Interactions, NoisyMode, QaDataset, QaModel, RecModel,
};
use kgperturb_core::fmt9;
use kgperturb_core::kg::{KnowledgeGraph, Triple};
use kgperturb_core::metrics::{self, MetricReport};
use kgperturb_core::perturb::{perturb_scale, Edit, PerturbMethod, PerturbationRecord};
use kgperturb_core::rl::{greedy_rollout, train_policy, DqnPolicy, RlVariant};
use kgperturb_core::scorer::{train_scorer, Scorer};

use crate::chart::{self, Series};
use crate::config::{RunConfig, TaskKind};

/// Smoothing constant shared by every structural-agreement call.
const B: f64 = 1.0;

const CURVE_HEADER: &str = "method,seed,scale,ats,sc2d,sd2,downstream";
const REWARD_HEADER: &str = "step,raw_reward,scaled_reward,task_statistic";
const REPORT_HEADER: &str = "method,downstream,ats,sc2d,sd2";

/// Generates the synthetic world and writes the graph, the interaction
/// table, and the three QA split files to the configured input paths.
pub fn cmd_gen_world(cfg: &RunConfig) -> Result<()> {
    let spec = cfg.world.to_spec();
    let (kg, interactions, qa) =
        generate_synthetic_world(&spec).context("generating synthetic world")?;
    ensure_parent(cfg.inputs.kg())?;
    kg.save(cfg.inputs.kg())?;
    ensure_parent(cfg.inputs.interactions())?;
    interactions.save(cfg.inputs.interactions())?;
    ensure_parent(cfg.inputs.qa_train())?;
    save_qa_tasks(cfg.inputs.qa_train(), &qa.train)?;
    ensure_parent(cfg.inputs.qa_dev())?;
    save_qa_tasks(cfg.inputs.qa_dev(), &qa.dev)?;
    ensure_parent(cfg.inputs.qa_test())?;
    save_qa_tasks(cfg.inputs.qa_test(), &qa.test)?;
    cfg.write_resolved("gen_world")?;
    log::info!(
        "world: {} entities, {} triples, {} interactions, {} QA tasks -> {}",
        kg.n_entities(),
        kg.n_triples(),
        interactions.rows.len(),
        qa.len(),
        cfg.inputs.kg().display()
    );
    Ok(())
}

/// Trains the triple scorer on the input graph and writes its checkpoint.
pub fn cmd_train_scorer(cfg: &RunConfig) -> Result<()> {
    let kg = load_graph(cfg.inputs.kg())?;
    let scorer = train_scorer(&kg, &cfg.scorer.to_core()?)?;
    ensure_parent(cfg.inputs.scorer())?;
    scorer.save(cfg.inputs.scorer())?;
    cfg.write_resolved("train_scorer")?;
    log::info!("scorer checkpoint -> {}", cfg.inputs.scorer().display());
    Ok(())
}

/// Trains both downstream models against the input graph and writes
/// their checkpoints. The recommender consumes the interaction table and
/// the QA model consumes the three task split files.
pub fn cmd_train_downstream(cfg: &RunConfig) -> Result<()> {
    let kg = load_graph(cfg.inputs.kg())?;

    let interactions = Interactions::load(cfg.inputs.interactions())?;
    let rec = train_recommender(&kg, &interactions, &cfg.recommender.to_core()?)?;
    ensure_parent(cfg.inputs.recommender())?;
    rec.save(cfg.inputs.recommender())?;

    let tasks = load_qa_dataset(cfg)?;
    let qa_model = train_qa(&kg, &tasks, &cfg.qa.to_core()?)?;
    ensure_parent(cfg.inputs.qa_model())?;
    qa_model.save(cfg.inputs.qa_model())?;

    cfg.write_resolved("train_downstream")?;
    log::info!(
        "downstream checkpoints -> {}, {}",
        cfg.inputs.recommender().display(),
        cfg.inputs.qa_model().display()
    );
    Ok(())
}

/// Applies one heuristic method at one scale, writing the perturbed
/// graph, the edit log, and the metric row into the output directory.
pub fn cmd_perturb(cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(&cfg.out_dir)
        .with_context(|| format!("creating {}", cfg.out_dir.display()))?;
    let kg = load_graph(cfg.inputs.kg())?;
    let method: PerturbMethod = cfg.perturb.method.parse().map_err(|e: String| anyhow!(e))?;
    let seed = cfg.perturb.seed.unwrap_or(cfg.seed);

    let scorer = if method == PerturbMethod::RelationReplace || cfg.inputs.scorer().is_file() {
        Some(load_scorer(cfg.inputs.scorer(), &kg)?)
    } else {
        None
    };
    let (perturbed, record) = perturb_scale(&kg, method, cfg.perturb.scale, scorer.as_ref(), seed)?;

    perturbed.save(&cfg.out_dir.join("perturbed.tsv"))?;
    write_file(&cfg.out_dir.join("edits.tsv"), &record.to_edit_log(&kg))?;
    let metrics_text = metrics_csv(scorer.as_ref(), &kg, &perturbed)?;
    write_file(&cfg.out_dir.join("metrics.csv"), &metrics_text)?;
    cfg.write_resolved("perturb")?;
    if record.skipped > 0 {
        log::warn!("{method}: {} steps skipped after retries", record.skipped);
    }
    log::info!(
        "{method} at scale {}: {} edits -> {}",
        fmt9(record.scale),
        record.edits.len(),
        cfg.out_dir.display()
    );
    Ok(())
}

/// Sweeps the configured methods over scales and seeds, appending one
/// CSV row per point and charting the per-method mean downstream score.
/// Rows already present in `curve.csv` are kept and skipped, so an
/// interrupted sweep resumes where it stopped.
pub fn cmd_curve(cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(&cfg.out_dir)
        .with_context(|| format!("creating {}", cfg.out_dir.display()))?;
    let kg = load_graph(cfg.inputs.kg())?;
    let scorer = load_scorer(cfg.inputs.scorer(), &kg)?;
    let evaluator = build_evaluator(cfg)?;

    let mut methods = Vec::new();
    for name in &cfg.curve.methods {
        let method: PerturbMethod = name.parse().map_err(|e: String| anyhow!(e))?;
        if !PerturbMethod::ALL_HEURISTIC.contains(&method) {
            bail!("curve sweeps heuristic methods only; produce {name} runs through rl_train");
        }
        methods.push(method);
    }
    let mut scales = cfg.curve.scales.clone();
    scales.sort_by(f64::total_cmp);

    let csv_path = cfg.out_dir.join("curve.csv");
    let mut done: BTreeSet<(String, String, String)> = BTreeSet::new();
    let mut had_rows = false;
    if csv_path.is_file() {
        let existing = fs::read_to_string(&csv_path)
            .with_context(|| format!("reading {}", csv_path.display()))?;
        had_rows = !existing.is_empty();
        for line in existing.lines().skip(1) {
            let mut cells = line.split(',');
            if let (Some(m), Some(s), Some(sc)) = (cells.next(), cells.next(), cells.next()) {
                done.insert((m.to_string(), s.to_string(), sc.to_string()));
            }
        }
    }
    let mut file = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&csv_path)
        .with_context(|| format!("opening {}", csv_path.display()))?;
    if !had_rows {
        writeln!(file, "{CURVE_HEADER}")?;
    }

    for &method in &methods {
        for &seed in &cfg.curve.seeds {
            for &scale in &scales {
                let key = (method.to_string(), seed.to_string(), fmt9(scale));
                if done.contains(&key) {
                    continue;
                }
                let (perturbed, record) =
                    perturb_scale(&kg, method, scale, Some(&scorer), seed)?;
                if record.skipped > 0 {
                    log::warn!(
                        "{method} seed {seed} scale {}: {} steps skipped",
                        fmt9(scale),
                        record.skipped
                    );
                }
                let ats_cell = if perturbed.n_triples() == 0 {
                    String::new()
                } else {
                    fmt9(metrics::ats(&scorer, &perturbed)?)
                };
                let sc2d = metrics::sc2d(&kg, &perturbed, B)?;
                let sd2 = metrics::sd2(&kg, &perturbed, B)?;
                let downstream = evaluator.test_score(&perturbed)?;
                writeln!(
                    file,
                    "{method},{seed},{},{ats_cell},{},{},{}",
                    fmt9(scale),
                    fmt9(sc2d),
                    fmt9(sd2),
                    fmt9(downstream)
                )?;
                file.flush()?;
            }
        }
    }
    drop(file);

    let csv = fs::read_to_string(&csv_path)
        .with_context(|| format!("reading {}", csv_path.display()))?;
    let series = curve_series(&csv)?;
    let y_label = format!("{} test score", evaluator.task_name());
    write_file(&cfg.out_dir.join("curve.svg"), &chart::curve_svg(&series, "scale", &y_label))?;
    cfg.write_resolved("curve")?;
    log::info!("curve -> {}", csv_path.display());
    Ok(())
}

/// Trains a perturbation policy and writes its checkpoint, the graph its
/// final greedy episode produced, the edit log, the reward curve, and
/// the metric row. With `rl.eval_checkpoint` set it skips training and
/// replays the deterministic evaluation episode of the saved policy.
pub fn cmd_rl_train(cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(&cfg.out_dir)
        .with_context(|| format!("creating {}", cfg.out_dir.display()))?;
    let kg = load_graph(cfg.inputs.kg())?;
    let scorer = load_scorer(cfg.inputs.scorer(), &kg)?;
    let evaluator = build_evaluator(cfg)?;
    let variant: RlVariant = cfg.rl.variant.parse().map_err(|e: String| anyhow!(e))?;
    let rl_cfg = cfg.rl.to_core()?;

    let (perturbed, record, rewards) = match cfg.rl.eval_checkpoint.as_deref() {
        Some(ckpt) => {
            let policy = DqnPolicy::load(ckpt)?;
            if policy.variant != variant {
                bail!(
                    "checkpoint {} holds a {} policy but the config asks for {}",
                    ckpt.display(),
                    policy.variant.label(),
                    variant.label()
                );
            }
            let out = greedy_rollout(&policy, &kg, &scorer, &evaluator, &rl_cfg)?;
            let record = PerturbationRecord {
                method: variant.method(),
                seed: rl_cfg.seed,
                scale: rl_cfg.steps_per_episode as f64 / kg.n_triples() as f64,
                edits: out.edits,
                skipped: 0,
            };
            (out.kg, record, out.rewards)
        }
        None => {
            let out = train_policy(&kg, &scorer, &evaluator, variant, &rl_cfg)?;
            out.policy.save(&cfg.out_dir.join("policy.ckpt"))?;
            (out.kg, out.record, out.rewards)
        }
    };

    perturbed.save(&cfg.out_dir.join("perturbed.tsv"))?;
    write_file(&cfg.out_dir.join("edits.tsv"), &record.to_edit_log(&kg))?;
    let mut reward_csv = format!("{REWARD_HEADER}\n");
    for ev in &rewards {
        let _ = writeln!(
            reward_csv,
            "{},{},{},{}",
            ev.step,
            fmt9(ev.raw),
            fmt9(ev.scaled),
            fmt9(ev.statistic)
        );
    }
    write_file(&cfg.out_dir.join("reward_curve.csv"), &reward_csv)?;
    let metrics_text = metrics_csv(Some(&scorer), &kg, &perturbed)?;
    write_file(&cfg.out_dir.join("metrics.csv"), &metrics_text)?;
    cfg.write_resolved("rl_train")?;
    log::info!(
        "{}: {} edits, {} reward events -> {}",
        variant.label(),
        record.edits.len(),
        rewards.len(),
        cfg.out_dir.display()
    );
    Ok(())
}

/// Scans the output directory for finished runs, replays each edit log
/// against the input graph to rescore the downstream task, and writes a
/// per-method summary table as CSV and aligned text. Baseline rows
/// cover the intact graph and a graph-blinded evaluation.
pub fn cmd_report(cfg: &RunConfig) -> Result<()> {
    let kg = load_graph(cfg.inputs.kg())?;
    let scorer = load_scorer(cfg.inputs.scorer(), &kg)?;
    let evaluator = build_evaluator(cfg)?;

    let mut run_dirs = Vec::new();
    find_runs(&cfg.out_dir, &mut run_dirs)?;
    if run_dirs.is_empty() {
        bail!("no finished runs under {}", cfg.out_dir.display());
    }

    let mut by_method: BTreeMap<String, Vec<RunRow>> = BTreeMap::new();
    let mut order: Vec<String> = Vec::new();
    for dir in &run_dirs {
        let row = load_run(&kg, &evaluator, dir)?;
        if !order.contains(&row.0) {
            order.push(row.0.clone());
        }
        by_method.entry(row.0).or_default().push(row.1);
    }

    let mut rows = Vec::new();
    rows.push(ReportRow {
        name: "w/o KG".to_string(),
        downstream: evaluator.noisy_score(&kg, NoisyMode::ZeroGraphEmb, cfg.seed)?,
        ats: None,
        sc2d: None,
        sd2: None,
    });
    rows.push(ReportRow {
        name: "w/ KG".to_string(),
        downstream: evaluator.test_score(&kg)?,
        ats: Some(metrics::ats(&scorer, &kg)?),
        sc2d: Some(metrics::sc2d(&kg, &kg, B)?),
        sd2: Some(metrics::sd2(&kg, &kg, B)?),
    });
    for name in method_order(&order) {
        let runs = &by_method[&name];
        let ats_values: Vec<f64> = runs.iter().filter_map(|r| r.ats).collect();
        rows.push(ReportRow {
            name,
            downstream: mean(runs.iter().map(|r| r.downstream)),
            ats: if ats_values.is_empty() {
                None
            } else {
                Some(mean(ats_values.iter().copied()))
            },
            sc2d: Some(mean(runs.iter().map(|r| r.sc2d))),
            sd2: Some(mean(runs.iter().map(|r| r.sd2))),
        });
    }

    let mut csv = format!("{REPORT_HEADER}\n");
    let mut txt = format!(
        "{:<8} {:>12} {:>12} {:>12} {:>12}\n",
        "method", "downstream", "ats", "sc2d", "sd2"
    );
    for row in &rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            row.name,
            fmt9(row.downstream),
            cell(row.ats, ""),
            cell(row.sc2d, ""),
            cell(row.sd2, "")
        );
        let _ = writeln!(
            txt,
            "{:<8} {:>12} {:>12} {:>12} {:>12}",
            row.name,
            fmt9(row.downstream),
            cell(row.ats, "-"),
            cell(row.sc2d, "-"),
            cell(row.sd2, "-")
        );
    }
    write_file(&cfg.out_dir.join("report.csv"), &csv)?;
    write_file(&cfg.out_dir.join("report.txt"), &txt)?;
    cfg.write_resolved("report")?;
    log::info!("report over {} runs -> {}", run_dirs.len(), cfg.out_dir.join("report.csv").display());
    Ok(())
}

struct RunRow {
    downstream: f64,
    ats: Option<f64>,
    sc2d: f64,
    sd2: f64,
}

struct ReportRow {
    name: String,
    downstream: f64,
    ats: Option<f64>,
    sc2d: Option<f64>,
    sd2: Option<f64>,
}

/// Fixed presentation order for method rows; anything unrecognized goes
/// last in first-seen order.
fn method_order(seen: &[String]) -> Vec<String> {
    let preferred = ["RS", "RR", "ER", "ED", "RL-RR", "RL-ER"];
    let mut ordered: Vec<String> = preferred
        .iter()
        .filter(|p| seen.iter().any(|s| s == *p))
        .map(|p| p.to_string())
        .collect();
    for s in seen {
        if !ordered.contains(s) {
            ordered.push(s.clone());
        }
    }
    ordered
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for v in values {
        sum += v;
        n += 1;
    }
    sum / n as f64
}

fn cell(value: Option<f64>, empty: &str) -> String {
    value.map(fmt9).unwrap_or_else(|| empty.to_string())
}

/// Reads one run directory: the method label and edit list come from
/// `edits.tsv`, the agreement numbers from `metrics.csv`, and the
/// downstream score from replaying the edits against the input graph.
/// Replaying keeps the full entity table, which the saved TSV drops for
/// entities the perturbation isolated.
fn load_run(kg: &KnowledgeGraph, evaluator: &Evaluator, dir: &Path) -> Result<(String, RunRow)> {
    let edits_path = dir.join("edits.tsv");
    let text = fs::read_to_string(&edits_path)
        .with_context(|| format!("reading {}", edits_path.display()))?;
    let (method, edits) = parse_edit_log(kg, &text, &edits_path)?;
    let mut perturbed = kg.clone();
    for edit in &edits {
        perturbed = perturbed
            .apply_edits(&edit.removed, &edit.added)
            .with_context(|| format!("replaying {}", edits_path.display()))?;
    }
    let downstream = evaluator.test_score(&perturbed)?;
    let metrics_path = dir.join("metrics.csv");
    let metrics_text = fs::read_to_string(&metrics_path)
        .with_context(|| format!("reading {}", metrics_path.display()))?;
    let (ats, sc2d, sd2) = parse_metrics_csv(&metrics_text, &metrics_path)?;
    Ok((method, RunRow { downstream, ats, sc2d, sd2 }))
}

/// Parses a `kgperturb-edits v1` log back into per-line edits, resolving
/// labels against the graph the log was produced from.
fn parse_edit_log(
    kg: &KnowledgeGraph,
    text: &str,
    path: &Path,
) -> Result<(String, Vec<Edit>)> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| anyhow!("{}: empty edit log", path.display()))?;
    let mut tokens = header.split_whitespace();
    if tokens.next() != Some("kgperturb-edits") || tokens.next() != Some("v1") {
        bail!("{}: not a kgperturb-edits v1 log", path.display());
    }
    let method = tokens
        .find_map(|t| t.strip_prefix("method="))
        .ok_or_else(|| anyhow!("{}: header lacks method=", path.display()))?
        .to_string();
    let mut edits = Vec::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split('\t').collect();
        if cells.len() != 4 {
            bail!("{}: malformed edit line {line:?}", path.display());
        }
        let head = kg
            .entity_id(cells[1])
            .ok_or_else(|| anyhow!("{}: unknown entity {:?}", path.display(), cells[1]))?;
        let relation = kg
            .relation_id(cells[2])
            .ok_or_else(|| anyhow!("{}: unknown relation {:?}", path.display(), cells[2]))?;
        let tail = kg
            .entity_id(cells[3])
            .ok_or_else(|| anyhow!("{}: unknown entity {:?}", path.display(), cells[3]))?;
        let triple = Triple { head, relation, tail };
        match cells[0] {
            "-" => edits.push(Edit { removed: vec![triple], added: Vec::new() }),
            "+" => edits.push(Edit { removed: Vec::new(), added: vec![triple] }),
            sign => bail!("{}: unknown edit sign {sign:?}", path.display()),
        }
    }
    Ok((method, edits))
}

fn parse_metrics_csv(text: &str, path: &Path) -> Result<(Option<f64>, f64, f64)> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == MetricReport::CSV_HEADER => {}
        other => bail!("{}: unexpected metrics header {other:?}", path.display()),
    }
    let row = lines
        .next()
        .ok_or_else(|| anyhow!("{}: missing metrics row", path.display()))?;
    let cells: Vec<&str> = row.split(',').collect();
    if cells.len() != 4 {
        bail!("{}: malformed metrics row {row:?}", path.display());
    }
    let parse = |c: &str| -> Result<f64> {
        c.parse::<f64>()
            .map_err(|_| anyhow!("{}: bad metrics value {c:?}", path.display()))
    };
    let ats = if cells[0].is_empty() { None } else { Some(parse(cells[0])?) };
    Ok((ats, parse(cells[1])?, parse(cells[2])?))
}

/// Collects directories that hold a complete perturbation run, depth
/// first in sorted order so the report is stable across filesystems.
fn find_runs(root: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    if root.join("edits.tsv").is_file()
        && root.join("perturbed.tsv").is_file()
        && root.join("metrics.csv").is_file()
    {
        out.push(root.to_path_buf());
    }
    let mut children = Vec::new();
    let entries =
        fs::read_dir(root).with_context(|| format!("scanning {}", root.display()))?;
    for entry in entries {
        let path = entry?.path();
        if path.is_dir() {
            children.push(path);
        }
    }
    children.sort();
    for child in children {
        find_runs(&child, out)?;
    }
    Ok(())
}

/// Aggregates a curve CSV into one series per method, averaging the
/// downstream column over seeds at each scale. Methods appear in
/// first-seen row order.
fn curve_series(csv: &str) -> Result<Vec<Series>> {
    let mut order: Vec<String> = Vec::new();
    let mut grouped: BTreeMap<String, BTreeMap<String, (f64, Vec<f64>)>> = BTreeMap::new();
    for line in csv.lines().skip(1) {
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 7 {
            bail!("malformed curve row {line:?}");
        }
        let method = cells[0].to_string();
        let scale: f64 =
            cells[2].parse().map_err(|_| anyhow!("bad scale in curve row {line:?}"))?;
        let downstream: f64 =
            cells[6].parse().map_err(|_| anyhow!("bad downstream in curve row {line:?}"))?;
        if !order.contains(&method) {
            order.push(method.clone());
        }
        grouped
            .entry(method)
            .or_default()
            .entry(cells[2].to_string())
            .or_insert((scale, Vec::new()))
            .1
            .push(downstream);
    }
    let mut series = Vec::new();
    for label in order {
        let mut points: Vec<(f64, f64)> = grouped[&label]
            .values()
            .map(|(scale, values)| (*scale, mean(values.iter().copied())))
            .collect();
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        series.push(Series { label, points });
    }
    Ok(series)
}

/// One MetricReport row. When the scorer is absent, or the perturbed
/// graph has no triples left to score, the ats cell stays empty and only
/// the structural columns are filled.
fn metrics_csv(
    scorer: Option<&Scorer>,
    original: &KnowledgeGraph,
    perturbed: &KnowledgeGraph,
) -> Result<String> {
    match scorer {
        Some(s) if perturbed.n_triples() > 0 => {
            Ok(MetricReport::compute(s, original, perturbed, B)?.to_csv())
        }
        _ => {
            let sc2d = metrics::sc2d(original, perturbed, B)?;
            let sd2 = metrics::sd2(original, perturbed, B)?;
            Ok(format!(
                "{}\n,{},{},{}\n",
                MetricReport::CSV_HEADER,
                fmt9(sc2d),
                fmt9(sd2),
                fmt9(B)
            ))
        }
    }
}

fn load_graph(path: &Path) -> Result<KnowledgeGraph> {
    let loaded = KnowledgeGraph::load(path)
        .with_context(|| format!("loading graph {}", path.display()))?;
    if loaded.duplicates_dropped > 0 {
        log::warn!("{}: dropped {} duplicate triples", path.display(), loaded.duplicates_dropped);
    }
    Ok(loaded.graph)
}

fn load_scorer(path: &Path, kg: &KnowledgeGraph) -> Result<Scorer> {
    Scorer::load(path, kg.n_entities(), kg.n_relations())
        .with_context(|| format!("loading scorer {}", path.display()))
}

fn load_qa_dataset(cfg: &RunConfig) -> Result<QaDataset> {
    Ok(QaDataset {
        train: load_qa_tasks(cfg.inputs.qa_train())?,
        dev: load_qa_tasks(cfg.inputs.qa_dev())?,
        test: load_qa_tasks(cfg.inputs.qa_test())?,
    })
}

fn build_evaluator(cfg: &RunConfig) -> Result<Evaluator> {
    match cfg.task {
        TaskKind::Recommender => {
            let model = RecModel::load(cfg.inputs.recommender())?;
            let data = Interactions::load(cfg.inputs.interactions())?;
            Ok(Evaluator::Recommender { model, data })
        }
        TaskKind::Qa => {
            let model = QaModel::load(cfg.inputs.qa_model())?;
            let tasks = load_qa_dataset(cfg)?;
            Ok(Evaluator::Qa { model, tasks })
        }
    }
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
    }
    Ok(())
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}
