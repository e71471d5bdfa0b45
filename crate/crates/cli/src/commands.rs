use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use mtmc_core::cluster::infer_detailed;
use mtmc_core::{generate_scenario, id_metrics, train, GlobalTrajectories, LossOptions, MetricsReport, TrajectorySet};
use serde::Serialize;
use serde_json::{json, Value};

use crate::cli::{AblateParam, Cli, Command};
use crate::config::{Resolved, Source};
use crate::experiment::run_experiment;
use crate::{checkpoint, io, json, report};

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(c) => synth(&c.resolve()?),
        Command::Train(c) => train_cmd(c.resolve()?),
        Command::Infer(c) => infer(&c.resolve()?),
        Command::Eval(c) => eval(&c.resolve()?),
        Command::Ablate { common, param, values } => ablate(common.resolve()?, param, &values),
    }
}

fn require<'a>(path: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    path.as_deref().ok_or_else(|| anyhow!("missing --{flag}"))
}

/// Adds the resolved config to a JSON object.
fn with_config(mut value: Value, cfg: &Resolved) -> Value {
    if let Some(map) = value.as_object_mut() {
        map.insert("config".into(), cfg.to_value());
    }
    value
}

fn synth(cfg: &Resolved) -> Result<()> {
    let out = require(&cfg.run.paths.out, "out")?;
    let set = generate_scenario(&cfg.run.synth)?;
    io::save_trajectories(out, &set, Some(&cfg.to_value()))?;
    println!(
        "wrote {} trajectories ({} identities, {} cameras, dim {}) to {}",
        set.len(),
        set.identities().len(),
        set.camera_count(),
        set.dim(),
        out.display()
    );
    Ok(())
}

/// Sizes the model to the data unless the dimension was given explicitly.
fn load_training_data(cfg: &mut Resolved) -> Result<TrajectorySet> {
    let data = require(&cfg.run.paths.data, "data")?.to_path_buf();
    let set = io::load_trajectories(&data)?;
    cfg.set_if_default("train.model.dim", json!(set.dim()), Source::Data)?;
    Ok(set)
}

fn train_cmd(mut cfg: Resolved) -> Result<()> {
    let out = require(&cfg.run.paths.out, "out")?.to_path_buf();
    let set = load_training_data(&mut cfg)?;
    let log_path = cfg.run.paths.log.clone().unwrap_or_else(|| out.with_extension("log.jsonl"));
    let outcome = train(&set, &cfg.run.train)?;
    let artifact = cfg.to_value();
    checkpoint::save(&out, &outcome.params, Some(&artifact))?;
    json::write_lines(&log_path, &json!({ "config": artifact }), &outcome.log)?;
    let epochs = cfg.run.train.epochs;
    let loss = |e| outcome.epoch_mean(e, |b| b.loss_total).unwrap_or(f64::NAN);
    println!(
        "trained {} parameters for {epochs} epochs: loss {:.4} -> {:.4}; checkpoint {}, log {}",
        outcome.params.param_count(),
        loss(1),
        loss(epochs),
        out.display(),
        log_path.display()
    );
    Ok(())
}

fn infer(cfg: &Resolved) -> Result<()> {
    let data = require(&cfg.run.paths.data, "data")?;
    let model = require(&cfg.run.paths.model, "model")?;
    let out = require(&cfg.run.paths.out, "out")?;
    let set = io::load_trajectories(data)?;
    let ckpt = checkpoint::load(model)?;
    let inference = infer_detailed(&ckpt.params, &set, cfg.run.train.temporal_threshold)
        .with_context(|| format!("inference on {}", data.display()))?;
    let value = with_config(serde_json::to_value(&inference.output)?, cfg);
    json::write_pretty(out, &value)?;
    println!(
        "{} clusters ({} multi-camera) from {} trajectories, {} of {} edges kept; wrote {}",
        inference.output.clusters.len(),
        inference.output.multi_camera().count(),
        set.len(),
        inference.kept_edges,
        inference.graph.edge_count(),
        out.display()
    );
    Ok(())
}

fn eval(cfg: &Resolved) -> Result<()> {
    let data = require(&cfg.run.paths.data, "data")?;
    let pred = require(&cfg.run.paths.pred, "pred")?;
    let truth = io::load_trajectories(data)?;
    let predicted: GlobalTrajectories =
        serde_json::from_value(json::read(pred)?).with_context(|| format!("{}: not a clusters file", pred.display()))?;
    let metrics = id_metrics(&predicted, &truth)?;
    if metrics.degenerate {
        eprintln!("warning: no multi-camera trajectories on one side; all scores are 0");
    }
    print!("{}", report::metrics_table(&metrics));
    if let Some(out) = &cfg.run.paths.out {
        json::write_pretty(out, &with_config(serde_json::to_value(metrics)?, cfg))?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct AblationRow {
    value: String,
    #[serde(flatten)]
    metrics: MetricsReport,
    kept_edges: usize,
    final_loss: f64,
    final_fpr_hard: f64,
}

fn ablation_setting(param: AblateParam, raw: &str) -> Result<Vec<(&'static str, Value)>> {
    let raw = raw.trim();
    Ok(match param {
        AblateParam::BatchSize => {
            let bs: usize = raw.parse().with_context(|| format!("batch_size value {raw:?}"))?;
            vec![("train.batch_size_ids", json!(bs))]
        }
        AblateParam::TemporalThreshold => {
            let t: Option<u64> = match raw {
                "none" => None,
                _ => Some(raw.parse().with_context(|| format!("temporal_threshold value {raw:?}"))?),
            };
            vec![("train.temporal_threshold", json!(t))]
        }
        AblateParam::Loss => {
            let (weighting, fpr) = match raw {
                "full" => (true, true),
                "no-fpr" => (true, false),
                "no-weighting" => (false, true),
                "none" => (false, false),
                _ => bail!("loss value {raw:?}: expected full, no-fpr, no-weighting or none"),
            };
            let loss = LossOptions { weighting, fpr };
            vec![("train.loss", serde_json::to_value(loss)?)]
        }
    })
}

fn ablate(mut cfg: Resolved, param: AblateParam, values: &[String]) -> Result<()> {
    let train_set = load_training_data(&mut cfg)?;
    let eval_set = match &cfg.run.paths.eval_data {
        Some(p) => io::load_trajectories(p)?,
        None => {
            eprintln!("warning: no --eval-data; scoring on the training data");
            train_set.clone()
        }
    };
    let settings = values
        .iter()
        .map(|v| ablation_setting(param, v))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for (raw, setting) in values.iter().zip(settings) {
        let mut run_cfg = cfg.clone();
        for (key, value) in setting {
            run_cfg.set(key, value, Source::Flag)?;
        }
        let summary = run_experiment(&train_set, &eval_set, &run_cfg.run.train)
            .with_context(|| format!("ablation value {raw}"))?;
        if summary.metrics.degenerate {
            eprintln!("warning: {raw}: no multi-camera trajectories predicted; metrics degenerate");
        }
        rows.push(AblationRow {
            value: raw.trim().to_string(),
            metrics: summary.metrics,
            kept_edges: summary.inference.kept_edges,
            final_loss: summary.final_epoch_mean(|b| b.loss_total),
            final_fpr_hard: summary.final_epoch_mean(|b| b.fpr_hard),
        });
    }
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let score = |x: f64| if r.metrics.degenerate { "-".to_string() } else { format!("{x:.2}") };
            vec![
                r.value.clone(),
                score(r.metrics.idp),
                score(r.metrics.idr),
                score(r.metrics.idf1),
                r.kept_edges.to_string(),
                format!("{:.4}", r.final_loss),
                format!("{:.4}", r.final_fpr_hard),
            ]
        })
        .collect();
    let name = match param {
        AblateParam::BatchSize => "batch_size",
        AblateParam::TemporalThreshold => "temporal_threshold",
        AblateParam::Loss => "loss",
    };
    print!(
        "{}",
        report::table(&[name, "IDP", "IDR", "IDF1", "kept edges", "final loss", "final hard FPR"], &cells)
    );
    if let Some(out) = &cfg.run.paths.out {
        let value = json!({ "param": name, "rows": rows });
        json::write_pretty(out, &with_config(value, &cfg))?;
    }
    Ok(())
}
