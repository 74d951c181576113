use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{anyhow, Context};
use genplan_core::derived::{AugmentationSpec, Augmenter};
use genplan_core::gnn::{gradcheck_suite, GnnHyper};
use genplan_core::pddl::domain_to_pddl;
use genplan_core::policy::{execute_all, GnnValue, PolicyTrace};
use genplan_core::report::{build_report, EvalReport};
use genplan_core::state_space::{expand, optimal_plan_length, sample_dataset, Dataset, OptimalLength, Partition, TransitionSystem};
use genplan_core::training::{prepare, train, Checkpoint, EpochRecord};
use genplan_core::{domains, generators, Task};
use rayon::prelude::*;
use serde_json::json;

use crate::config::{Loaded, RunConfig};
use crate::{Cli, Command, Failure, Format};

type Outcome = Result<(), Failure>;

pub fn run(cli: &Cli) -> Outcome {
    match &cli.command {
        Command::Generate { domain, sizes } => return generate(domain, sizes, cli.seed.unwrap_or(0)),
        Command::Gradcheck { k, layers, states, seeds } => {
            let loaded = cli.config.as_ref().map(|_| load(cli)).transpose()?;
            return gradcheck(cli, loaded.as_ref(), *k, *layers, *states, *seeds);
        }
        _ => {}
    }
    let loaded = load(cli)?;
    match &cli.command {
        Command::Parse { files } => parse(cli, &loaded, files),
        Command::Expand { partition } => expand_cmd(cli, &loaded, partition),
        Command::Augment { pddl } => augment(cli, &loaded, *pddl),
        Command::Train => train_cmd(cli, &loaded),
        Command::Exec { with_states, checkpoint } => {
            let mut loaded = loaded;
            loaded.config.exec.with_states |= *with_states;
            if let Some(c) = checkpoint {
                loaded.config.exec.checkpoint = Some(std::path::absolute(c).unwrap_or_else(|_| c.clone()));
            }
            exec_cmd(cli, &loaded).map(|_| ())
        }
        Command::Eval { checkpoint } => {
            let mut loaded = loaded;
            if let Some(c) = checkpoint {
                loaded.config.exec.checkpoint = Some(std::path::absolute(c).unwrap_or_else(|_| c.clone()));
            }
            eval_cmd(cli, &loaded)
        }
        Command::Gradcheck { .. } | Command::Generate { .. } => unreachable!("handled above"),
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Parse { .. } => "parse",
        Command::Expand { .. } => "expand",
        Command::Augment { .. } => "augment",
        Command::Train => "train",
        Command::Exec { .. } => "exec",
        Command::Eval { .. } => "eval",
        Command::Gradcheck { .. } => "gradcheck",
        Command::Generate { .. } => "generate",
    }
}

/// Reads the configuration, applies flags, sets up the worker pool and
/// writes the snapshot of the effective configuration.
fn load(cli: &Cli) -> Result<Loaded, Failure> {
    let name = command_name(&cli.command);
    let path = cli.config.as_ref().ok_or_else(|| Failure::Usage(format!("{name} needs --config")))?;
    let mut cfg = RunConfig::from_file(path)?;
    cfg.apply(&cli.overrides());
    let loaded = cfg.load()?;
    // A second call fails once a pool exists, which only happens in tests.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(loaded.config.jobs).build_global();
    let out = &loaded.config.out;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let snapshot = out.join(format!("{name}.config.toml"));
    std::fs::write(&snapshot, loaded.config.snapshot()).with_context(|| format!("writing {}", snapshot.display()))?;
    Ok(loaded)
}

fn emit(cli: &Cli, text: impl FnOnce() -> String, value: impl FnOnce() -> serde_json::Value) {
    match cli.format {
        Format::Text => print!("{}", text()),
        Format::Json => println!("{}", serde_json::to_string_pretty(&value()).expect("JSON values serialize")),
    }
}

fn tasks(loaded: &Loaded, partition: Partition) -> Result<Vec<Task>, Failure> {
    Ok(loaded.instances(partition)?.into_iter().map(|i| Task::new(loaded.domain.clone(), i)).collect())
}

fn generate(domain: &str, sizes: &[usize], seed: u64) -> Outcome {
    let text = generators::generate(domain, sizes, seed).ok_or_else(|| {
        Failure::Config(format!("no generator for {domain}; bundled domains are {}", domains::NAMES.join(", ")))
    })?;
    print!("{text}");
    Ok(())
}

fn parse(cli: &Cli, loaded: &Loaded, files: &[std::path::PathBuf]) -> Outcome {
    let d = &loaded.domain;
    let mut rows = Vec::new();
    for (partition, instances) in loaded.partitions()? {
        for i in instances {
            rows.push((partition.to_string(), i.name.clone(), i.objects.len(), i.init.len(), i.goal.len()));
        }
    }
    for f in files {
        let text = std::fs::read_to_string(f).map_err(|e| Failure::Config(format!("{}: {e}", f.display())))?;
        let label = f.display().to_string();
        let inst = genplan_core::pddl::parse_instance(&text, d).map_err(|e| Failure::Config(e.render(&label)))?;
        if let Some(p) = genplan_core::pddl::validate(d, &inst).first() {
            return Err(Failure::Config(format!("{label}: {p}")));
        }
        rows.push(("file".into(), inst.name.clone(), inst.objects.len(), inst.init.len(), inst.goal.len()));
    }
    emit(
        cli,
        || {
            let mut s = format!(
                "domain {}: {} predicates, {} action schemas\n",
                d.name,
                d.predicates.len(),
                d.schemas.len()
            );
            for (p, name, objects, init, goal) in &rows {
                s += &format!("{p:<10} {name}: {objects} objects, {init} initial atoms, {goal} goal atoms\n");
            }
            s
        },
        || {
            json!({
                "domain": d.name,
                "predicates": d.predicates.len(),
                "schemas": d.schemas.len(),
                "instances": rows.iter().map(|(p, name, objects, init, goal)| json!({
                    "partition": p, "name": name, "objects": objects, "init": init, "goal": goal,
                })).collect::<Vec<_>>(),
            })
        },
    );
    Ok(())
}

fn expand_all(loaded: &Loaded, tasks: &[Task]) -> Result<Vec<TransitionSystem>, Failure> {
    let cap = loaded.config.budgets.expand_cap;
    tasks
        .par_iter()
        .map(|t| expand(t, cap).map_err(|e| Failure::Runtime(anyhow!(e))))
        .collect()
}

fn dataset(loaded: &Loaded, partition: Partition, systems: &[TransitionSystem]) -> Dataset {
    let refs: Vec<&TransitionSystem> = systems.iter().collect();
    let b = &loaded.config.budgets;
    sample_dataset(&loaded.domain, &refs, b.sample_cap, b.sample_seed, partition)
}

fn write_dataset(loaded: &Loaded, ds: &Dataset) -> Result<(), Failure> {
    let path = loaded.config.out.join(format!("{}.dataset", ds.partition));
    std::fs::write(&path, ds.to_text()).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn expand_cmd(cli: &Cli, loaded: &Loaded, partitions: &[Partition]) -> Outcome {
    let partitions = if partitions.is_empty() { vec![Partition::Train, Partition::Validation] } else { partitions.to_vec() };
    loaded.partitions()?;
    let mut rows = Vec::new();
    let mut hashes = Vec::new();
    for p in partitions {
        let tasks = tasks(loaded, p)?;
        let systems = expand_all(loaded, &tasks)?;
        for ts in &systems {
            let goals = ts.goal_flags.iter().filter(|&&g| g).count();
            rows.push((p, ts.instance_name.clone(), ts.len(), goals, ts.vstar[ts.init]));
        }
        let ds = dataset(loaded, p, &systems);
        write_dataset(loaded, &ds)?;
        hashes.push((p, ds.num_records(), ds.hash()));
    }
    emit(
        cli,
        || {
            let mut s = String::new();
            for (p, name, states, goals, v) in &rows {
                let v = v.map_or_else(|| "unsolvable".to_string(), |v| v.to_string());
                s += &format!("{p:<10} {name}: {states} states, {goals} goal states, V*(init) {v}\n");
            }
            for (p, records, hash) in &hashes {
                s += &format!("{p} dataset: {records} records, sha256 {hash}\n");
            }
            s
        },
        || {
            json!({
                "instances": rows.iter().map(|(p, name, states, goals, v)| json!({
                    "partition": p.to_string(), "name": name, "states": states, "goal_states": goals, "vstar_init": v,
                })).collect::<Vec<_>>(),
                "datasets": hashes.iter().map(|(p, records, hash)| json!({
                    "partition": p.to_string(), "records": records, "sha256": hash,
                })).collect::<Vec<_>>(),
            })
        },
    );
    Ok(())
}

fn augmenter(loaded: &Loaded) -> Result<Augmenter, Failure> {
    Augmenter::new(&loaded.domain, &loaded.augmentation).map_err(|e| Failure::Config(e.to_string()))
}

fn augment(cli: &Cli, loaded: &Loaded, pddl: bool) -> Outcome {
    let aug = augmenter(loaded)?;
    if pddl {
        print!("{}", domain_to_pddl(aug.domain()));
        return Ok(());
    }
    let added: Vec<(String, usize)> = aug.domain().predicates[loaded.domain.predicates.len()..]
        .iter()
        .map(|p| (p.name.clone(), p.arity))
        .collect();
    let mut rows = Vec::new();
    for (p, instances) in loaded.partitions()? {
        for i in instances {
            let t = Task::new(loaded.domain.clone(), i);
            let init = t.initial_state();
            let augmented = aug.augment(&init, &t.instance.goal);
            rows.push((p, t.instance.name.clone(), init.len(), augmented.len()));
        }
    }
    emit(
        cli,
        || {
            let mut s = format!("augmentation {}: {} added predicates\n", loaded.config.augmentation, added.len());
            for (name, arity) in &added {
                s += &format!("  {name}/{arity}\n");
            }
            for (p, name, before, after) in &rows {
                s += &format!("{p:<10} {name}: {before} initial atoms, {after} after augmentation\n");
            }
            s
        },
        || {
            json!({
                "augmentation": loaded.config.augmentation,
                "added": added.iter().map(|(n, a)| json!({"name": n, "arity": a})).collect::<Vec<_>>(),
                "instances": rows.iter().map(|(p, name, before, after)| json!({
                    "partition": p.to_string(), "name": name, "init_atoms": before, "augmented_atoms": after,
                })).collect::<Vec<_>>(),
            })
        },
    );
    Ok(())
}

fn train_cmd(cli: &Cli, loaded: &Loaded) -> Outcome {
    loaded.partitions()?;
    let mut prepared = Vec::new();
    for p in [Partition::Train, Partition::Validation] {
        let tasks = tasks(loaded, p)?;
        if tasks.is_empty() {
            return Err(Failure::Config(format!("the {p} partition is empty")));
        }
        let ds = dataset(loaded, p, &expand_all(loaded, &tasks)?);
        write_dataset(loaded, &ds)?;
        prepared.push(prepare(ds, &loaded.domain, &loaded.augmentation).map_err(|e| Failure::Config(e.to_string()))?);
    }
    let text = cli.format == Format::Text;
    let mut observer = |r: &EpochRecord| {
        if text {
            println!(
                "seed {} epoch {} train {:.6} valid {:.6} ({:.1}s)",
                r.seed, r.epoch, r.train_loss, r.valid_loss, r.elapsed_secs
            );
        }
    };
    let outcome = train(&prepared[0], &prepared[1], &loaded.config.training, &mut observer).map_err(|e| match e {
        genplan_core::training::TrainError::Config(m) => Failure::Config(m),
        other => Failure::Runtime(anyhow!(other)),
    })?;
    let out = &loaded.config.out;
    outcome.write_run_dir(out).with_context(|| format!("writing run directory {}", out.display()))?;
    emit(
        cli,
        || outcome.summary(),
        || {
            json!({
                "seed": outcome.best.seed,
                "epoch": outcome.best.epoch,
                "valid_loss": outcome.best.valid_loss,
                "train_loss": outcome.best.train_loss,
                "checkpoint": out.join("checkpoint.json"),
                "warnings": outcome.warnings,
            })
        },
    );
    Ok(())
}

fn value_function(loaded: &Loaded) -> Result<GnnValue, Failure> {
    let path = loaded.checkpoint_path();
    let ckpt = Checkpoint::load(&path).map_err(|e| Failure::Runtime(anyhow!("{}: {e}", path.display())))?;
    let (aug, params) = ckpt.restore(&loaded.domain).map_err(|e| Failure::Runtime(anyhow!("{}: {e}", path.display())))?;
    GnnValue::new(aug, params, ckpt.config.eval_seed).map_err(|e| Failure::Runtime(anyhow!(e)))
}

fn write_traces(dir: &Path, tasks: &[Task], traces: &[PolicyTrace], with_states: bool) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for (t, trace) in tasks.iter().zip(traces) {
        let path = dir.join(format!("{}.trace", trace.instance));
        std::fs::write(&path, trace.to_text(t, with_states)).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

/// Runs every selected mode on the test partition and writes trace files.
fn run_policy(loaded: &Loaded) -> Result<(Vec<Task>, Vec<PolicyTrace>), Failure> {
    loaded.partitions()?;
    let value = value_function(loaded)?;
    let tasks = tasks(loaded, Partition::Test)?;
    if tasks.is_empty() {
        return Err(Failure::Config("the test partition is empty".into()));
    }
    let exec = &loaded.config.exec;
    let mut all = Vec::new();
    for mode in exec.mode.modes() {
        let traces = execute_all(&value, &tasks, mode, exec.step_limit).map_err(|e| Failure::Runtime(anyhow!(e)))?;
        write_traces(&loaded.config.out.join("traces").join(mode.to_string()), &tasks, &traces, exec.with_states)?;
        all.extend(traces);
    }
    Ok((tasks, all))
}

fn exec_cmd(cli: &Cli, loaded: &Loaded) -> Result<Vec<PolicyTrace>, Failure> {
    let (_, traces) = run_policy(loaded)?;
    emit(
        cli,
        || {
            traces
                .iter()
                .map(|t| format!("{:<12} {}: {} after {} steps\n", t.mode, t.instance, t.outcome, t.plan_length))
                .collect()
        },
        || serde_json::to_value(traces.iter().map(PolicyTrace::summary).collect::<Vec<_>>()).expect("summaries serialize"),
    );
    Ok(traces)
}

fn eval_cmd(cli: &Cli, loaded: &Loaded) -> Outcome {
    let (tasks, traces) = run_policy(loaded)?;
    let b = &loaded.config.budgets;
    let limit = Duration::from_secs_f64(b.oracle_secs);
    let oracle: HashMap<String, OptimalLength> = tasks
        .par_iter()
        .map(|t| (t.instance.name.clone(), optimal_plan_length(t, b.oracle_nodes, limit)))
        .collect();
    let summaries: Vec<_> = traces.iter().map(PolicyTrace::summary).collect();
    let report: EvalReport = build_report(&summaries, &oracle).map_err(|e| Failure::Runtime(anyhow!(e)))?;
    let out = &loaded.config.out;
    std::fs::write(out.join("report.txt"), report.to_text()).context("writing report.txt")?;
    std::fs::write(out.join("report.csv"), report.to_csv()).context("writing report.csv")?;
    emit(cli, || report.to_text(), || serde_json::to_value(&report).expect("report serializes"));
    Ok(())
}

fn gradcheck(cli: &Cli, loaded: Option<&Loaded>, k: usize, layers: usize, states: usize, seeds: u64) -> Outcome {
    let (base, spec) = match loaded {
        Some(l) => (l.domain.clone(), l.augmentation.clone()),
        None => (Arc::new(domains::load("blocks").expect("bundled")), AugmentationSpec::goal_only()),
    };
    let domain = Augmenter::new(&base, &spec).map_err(|e| Failure::Config(e.to_string()))?.domain().clone();
    let seed = cli.seed.unwrap_or(0);
    let hyper = GnnHyper { k, layers, alpha: 8.0, seed };
    hyper.validate().map_err(|e| Failure::Config(e.to_string()))?;
    let report = gradcheck_suite(&domain, hyper, states, seeds, seed).map_err(|e| Failure::Runtime(anyhow!(e)))?;
    const THRESHOLD: f64 = 1e-4;
    let pass = report.max_rel_error < THRESHOLD;
    emit(
        cli,
        || {
            format!(
                "max relative error {:.3e} over {} coordinates ({} skipped at kinks): {} (threshold {THRESHOLD:e})\n",
                report.max_rel_error,
                report.checked,
                report.skipped,
                if pass { "PASS" } else { "FAIL" }
            )
        },
        || {
            json!({
                "max_rel_error": report.max_rel_error,
                "checked": report.checked,
                "skipped": report.skipped,
                "threshold": THRESHOLD,
                "pass": pass,
            })
        },
    );
    if pass {
        Ok(())
    } else {
        Err(Failure::Runtime(anyhow!("gradient check failed")))
    }
}
