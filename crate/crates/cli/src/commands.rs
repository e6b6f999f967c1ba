use std::collections::BTreeSet;
use std::fmt::Write;
use std::path::PathBuf;

use abigx::error::Error;
use abigx::explainers::{attribution_csv, svg_bar_chart, Attribution, Method};
use abigx::indices::DetectionIndex;
use abigx::metrics::{
    consistency_add, consistency_del, correctness_auc, correctness_sum, MetricsAccumulator, SampleScores,
};
use abigx::models::persist::{load_model, save_model};
use abigx::models::{fit_pca, train_ae, train_classifier, AeConfig, Dataset, MlpConfig, Model, TrainingLog};
use abigx::synthetic::{gen_toy, ProcessModel, ProcessSpec, ToySpec};
use abigx::verify::{run_verify, VerifyConfig};
use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde_json::json;

use crate::args::{
    Command, DataKind, EvaluateArgs, ExplainArgs, Format, GenDataArgs, ModelKind, TrainArgs, VerifyArgs,
};
use crate::attribute::Explainer;
use crate::files::{
    load_dataset, normal_rows, save_dataset, sidecar, with_suffix, write_json, write_manifest, write_text,
};

pub enum Outcome {
    Success,
    VerificationFailed,
}

pub fn run(command: &Command) -> Result<Outcome> {
    match command {
        Command::GenData(a) => gen_data(command, a),
        Command::Train(a) => train(command, a),
        Command::Explain(a) => explain(command, a),
        Command::Evaluate(a) => evaluate(command, a),
        Command::Verify(a) => verify(command, a),
    }
}

fn gen_data(command: &Command, a: &GenDataArgs) -> Result<Outcome> {
    let data = match a.kind {
        DataKind::Toy => gen_toy(&ToySpec {
            m: a.m,
            n: a.n,
            f: a.f,
            sigma: a.sigma,
            samples_per_class: a.per_class,
            seed: a.seed,
        })?,
        DataKind::Process => {
            let spec = ProcessSpec {
                n_vars: a.vars,
                n_latent: a.latent,
                noise: a.noise,
                n_train: a.train,
                seed: a.seed,
            };
            ProcessModel::new(spec)?.labelled_set(a.per_var, a.magnitude)?
        }
    };
    let outputs = save_dataset(&data, &a.out)?;
    let summary = json!({ "rows": data.n_samples(), "variables": data.n_vars(), "classes": data.classes() });
    write_manifest(&a.out, command, &outputs, summary)?;
    println!(
        "wrote {} rows x {} variables to {}",
        data.n_samples(),
        data.n_vars(),
        a.out.display()
    );
    Ok(Outcome::Success)
}

fn default_ae_layers(n: usize) -> Vec<usize> {
    let wide = (2 * n / 3).max(2);
    let narrow = (n / 3).max(1);
    vec![n, wide, narrow, wide, n]
}

fn train(command: &Command, a: &TrainArgs) -> Result<Outcome> {
    let data = load_dataset(&a.data)?;
    let normal = if data.labels.is_some() {
        data.subset(&data.normal_rows())
    } else {
        data.clone()
    };
    let (model, mut log) = match a.kind {
        ModelKind::Pca => {
            let pca = fit_pca(&data, a.components)?;
            let log = json!({
                "explained_variance_ratio": pca.explained_variance_ratio(),
                "eigenvalues": pca.eigenvalues,
                "warnings": pca.warnings,
            });
            (Model::Pca(pca), log)
        }
        ModelKind::Ae => {
            let cfg = AeConfig {
                layer_dims: a.layers.clone().unwrap_or_else(|| default_ae_layers(data.n_vars())),
                epochs: a.epochs.unwrap_or(2000),
                learning_rate: a.lr.unwrap_or(0.02),
                seed: a.seed,
            };
            let ae = train_ae(&normal, &cfg)?;
            let log = training_json(&ae.training);
            (Model::Ae(ae), log)
        }
        ModelKind::Mlp => {
            let cfg = MlpConfig {
                hidden: a.hidden.clone(),
                epochs: a.epochs.unwrap_or(400),
                learning_rate: a.lr.unwrap_or(0.5),
                seed: a.seed,
            };
            let mlp = train_classifier(&data, &cfg)?;
            let log = training_json(&mlp.training);
            (Model::Mlp(mlp), log)
        }
    };
    if let Some(det) = model.as_detector() {
        let limit = DetectionIndex::calibrated(det, &normal.samples, a.quantile)?.limit()?;
        log["control_limit"] = json!(limit);
        log["calibration_quantile"] = json!(a.quantile);
    }
    for w in log["warnings"].as_array().into_iter().flatten() {
        eprintln!("warning: {}", w.as_str().unwrap_or_default());
    }
    log["kind"] = json!(model.kind());
    crate::files::ensure_parent(&a.out)?;
    save_model(&model, &a.out).with_context(|| format!("cannot write {}", a.out.display()))?;
    let log_path = sidecar(&a.out, ".training.json");
    write_json(&log_path, &log)?;
    write_manifest(&a.out, command, &[a.out.clone(), log_path], log.clone())?;
    let mut line = format!("trained {} model, saved to {}", model.kind(), a.out.display());
    if let Some(acc) = log.get("accuracy").and_then(|v| v.as_f64()) {
        let _ = write!(line, " (training accuracy {acc:.4})");
    }
    if let Some(l) = log.get("control_limit").and_then(|v| v.as_f64()) {
        let _ = write!(line, " (control limit {l:.6})");
    }
    println!("{line}");
    Ok(Outcome::Success)
}

fn training_json(t: &TrainingLog) -> serde_json::Value {
    let mut v = serde_json::to_value(t).unwrap_or_default();
    v["final_loss"] = json!(t.loss_curve.last());
    if v.get("warnings").is_none() {
        v["warnings"] = json!([]);
    }
    v
}

fn select_row(data: &Dataset, sample: Option<usize>, label: Option<usize>) -> Result<usize> {
    match (sample, label) {
        (Some(r), _) if r < data.n_samples() => Ok(r),
        (Some(r), _) => bail!(Error::Parameter(format!(
            "sample {r} out of range ({} rows)",
            data.n_samples()
        ))),
        (None, Some(l)) => data
            .rows_with_label(l)
            .first()
            .copied()
            .ok_or_else(|| Error::Parameter(format!("no sample with label {l}")).into()),
        (None, None) => bail!(Error::Parameter("select a sample with --sample or --label".into())),
    }
}

fn load_model_for(path: &std::path::Path, data: &Dataset) -> Result<Model> {
    let model = load_model(path).with_context(|| format!("cannot load model {}", path.display()))?;
    if model.standardizer().dim() != data.n_vars() {
        bail!(Error::Dimension(format!(
            "data has {} variables, model expects {}",
            data.n_vars(),
            model.standardizer().dim()
        )));
    }
    Ok(model)
}

/// Explained class: explicit, else the label, else the prediction.
fn explained_class(ex: &Explainer<'_>, explicit: Option<usize>, label: Option<usize>, z: &[f64]) -> usize {
    match ex.classifier() {
        None => 0,
        Some(c) => explicit
            .or(label.filter(|&l| l < c.n_classes()))
            .unwrap_or_else(|| c.predict(z)),
    }
}

fn explain(command: &Command, a: &ExplainArgs) -> Result<Outcome> {
    let data = load_dataset(&a.data)?;
    let model = load_model_for(&a.model, &data)?;
    let normal = normal_rows(&data, a.afr.calibration.as_deref())?;
    let ex = Explainer::new(&model, &a.afr, &normal)?;
    let row = select_row(&data, a.sample, a.label)?;
    let x = data.sample(row);
    model.standardizer().check(x)?;
    let z = model.standardizer().transform(x);
    let class = explained_class(&ex, a.class, data.label(row), &z);
    let (attr, rec) = ex.explain(a.method, &z, class)?;

    let names = data.names();
    let roots: BTreeSet<usize> = data
        .label(row)
        .and_then(|l| data.roots_of(l))
        .cloned()
        .unwrap_or_default();
    let stem = format!("attribution-{}-{row}", a.method);
    let base = a.out_dir.join(&stem);
    let main = match a.format {
        Format::Csv => {
            let p = with_suffix(&base, ".csv");
            write_text(&p, &attribution_csv(&attr, &names))?;
            p
        }
        Format::Json => {
            let p = with_suffix(&base, ".json");
            write_json(
                &p,
                &json!({ "sample": row, "variables": names, "attribution": attr, "reconstruction": rec }),
            )?;
            p
        }
        Format::Text => {
            let p = with_suffix(&base, ".txt");
            write_text(&p, &attribution_text(&attr, &names, &roots))?;
            p
        }
    };
    let svg = with_suffix(&base, ".svg");
    write_text(&svg, &svg_bar_chart(&attr, &names, &roots, a.top_k))?;
    let summary = json!({
        "sample": row,
        "explained": attr.target_functional,
        "total": attr.total(),
        "completeness_residual": attr.completeness_residual,
        "reconstruction_converged": attr.reconstruction_converged,
        "afr_target": ex.target,
    });
    write_manifest(&main, command, &[main.clone(), svg.clone()], summary)?;
    print!("{}", attribution_text(&attr, &names, &roots));
    if attr.reconstruction_converged == Some(false) {
        eprintln!("warning: reconstruction did not reach the target; attribution uses the best point found");
    }
    Ok(Outcome::Success)
}

fn attribution_text(attr: &Attribution, names: &[String], roots: &BTreeSet<usize>) -> String {
    let mut s = format!("{} of {}\n", attr.method, attr.target_functional);
    for i in attr.ranking() {
        let mark = if roots.contains(&i) { " *" } else { "" };
        let _ = writeln!(
            s,
            "  {:<16} {:>14.6e}{mark}",
            names.get(i).map_or("?", |n| n.as_str()),
            attr.contributions[i]
        );
    }
    if let Some(r) = attr.completeness_residual {
        let _ = writeln!(s, "completeness residual {r:.3e}");
    }
    s
}

/// Method name as given, or `oracle` for the ground-truth indicator.
#[derive(Clone, Copy)]
enum Scored {
    Method(Method),
    Oracle,
}

fn parse_methods(list: Option<&Vec<String>>, model: &Model) -> Result<Vec<(String, Scored)>> {
    let default: Vec<String> = match model {
        Model::Pca(_) => ["cp", "rbc", "saliency", "ig", "abigx", "abigx-onevar"]
            .map(String::from)
            .to_vec(),
        Model::Ae(_) => ["cp", "saliency", "ig", "abigx"].map(String::from).to_vec(),
        Model::Mlp(_) => ["saliency", "ig", "abigx"].map(String::from).to_vec(),
    };
    let names = list.cloned().unwrap_or(default);
    names
        .iter()
        .map(|n| {
            let n = n.trim();
            if n == "oracle" {
                return Ok((n.to_string(), Scored::Oracle));
            }
            let m: Method = n.parse().map_err(Error::Parameter)?;
            Ok((m.to_string(), Scored::Method(m)))
        })
        .collect()
}

fn evaluate(command: &Command, a: &EvaluateArgs) -> Result<Outcome> {
    let data = load_dataset(&a.data)?;
    let model = load_model_for(&a.model, &data)?;
    let normal = normal_rows(&data, a.afr.calibration.as_deref())?;
    let ex = Explainer::new(&model, &a.afr, &normal)?;
    let methods = parse_methods(a.methods.as_ref(), &model)?;
    let Some(labels) = data.labels.clone() else {
        bail!(Error::Parameter("evaluation needs a labelled dataset".into()));
    };
    let mut rows: Vec<usize> = (0..data.n_samples()).filter(|&r| labels[r] > 0).collect();
    if let Some(max) = a.max_samples {
        if max == 0 {
            bail!(Error::Parameter("--max-samples must be positive".into()));
        }
        if rows.len() > max {
            let stride = rows.len() as f64 / max as f64;
            rows = (0..max).map(|k| rows[(k as f64 * stride) as usize]).collect();
        }
    }
    if rows.is_empty() {
        bail!(Error::Parameter("no fault samples (label > 0) to evaluate".into()));
    }
    for (_, m) in &methods {
        if let Scored::Method(m) = m {
            // surface incompatibilities before the batch starts
            let z = model.standardizer().transform(data.sample(rows[0]));
            let class = explained_class(&ex, None, Some(labels[rows[0]]), &z);
            ex.explain(*m, &z, class)?;
        }
    }
    let has_roots = data.ground_truth_roots.is_some();
    let per_sample: Vec<Vec<(String, SampleScores)>> = rows
        .par_iter()
        .map(|&r| -> Result<Vec<(String, SampleScores)>> {
            let x = data.sample(r);
            model.standardizer().check(x)?;
            let z = model.standardizer().transform(x);
            let label = labels[r];
            let class = explained_class(&ex, None, Some(label), &z);
            let roots = data.roots_of(label);
            let (f, norm) = ex.consistency_functional(class);
            let mut out = Vec::with_capacity(methods.len());
            for (name, m) in &methods {
                let attr = match m {
                    Scored::Method(m) => ex.explain(*m, &z, class)?.0,
                    Scored::Oracle => match roots {
                        Some(rs) => Attribution::new(
                            Method::External,
                            (0..z.len()).map(|i| f64::from(u8::from(rs.contains(&i)))).collect(),
                            "oracle",
                        ),
                        None => continue,
                    },
                };
                let (auc, sum) = match roots {
                    Some(rs) => (correctness_auc(&attr, rs).ok(), correctness_sum(&attr, rs).ok()),
                    None => (None, None),
                };
                out.push((
                    name.clone(),
                    SampleScores {
                        correctness_auc: auc,
                        correctness_sum: sum,
                        consistency_add: Some(consistency_add(f.as_ref(), &z, &ex.normal_mean, &attr, norm)?),
                        consistency_del: Some(consistency_del(f.as_ref(), &z, &ex.normal_mean, &attr, norm)?),
                    },
                ));
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut acc = MetricsAccumulator::default();
    for sample in per_sample {
        for (name, s) in sample {
            acc.add(&name, s);
        }
    }
    let config = serde_json::to_value(command)?;
    let report = acc.finish(config);
    let mut table = report.to_table();
    if !has_roots {
        table.push_str("correctness columns are n/a: the dataset has no root-cause sidecar\n");
    }
    let json_path = with_suffix(&a.out, ".json");
    let txt_path = with_suffix(&a.out, ".txt");
    write_json(&json_path, &report)?;
    write_text(&txt_path, &table)?;
    let mut outputs = vec![json_path.clone(), txt_path];
    let csv = report_csv(&report);
    if a.format == Format::Csv {
        let p = with_suffix(&a.out, ".csv");
        write_text(&p, &csv)?;
        outputs.push(p);
    }
    write_manifest(&json_path, command, &outputs, json!({ "samples": report.sample_count }))?;
    match a.format {
        Format::Text => print!("{table}"),
        Format::Json => println!("{}", serde_json::to_string_pretty(&report)?),
        Format::Csv => print!("{csv}"),
    }
    Ok(Outcome::Success)
}

fn report_csv(report: &abigx::metrics::MetricsReport) -> String {
    let cell = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |x| x.to_string());
    let mut s = String::from("method,correctness_auc,correctness_sum,consistency_add,consistency_del,samples\n");
    for (m, sc) in &report.methods {
        let _ = writeln!(
            s,
            "{m},{},{},{},{},{}",
            cell(sc.correctness_auc),
            cell(sc.correctness_sum),
            cell(sc.consistency_add),
            cell(sc.consistency_del),
            sc.samples
        );
    }
    s
}

fn verify(command: &Command, a: &VerifyArgs) -> Result<Outcome> {
    let report = run_verify(&VerifyConfig {
        seed: a.seed,
        only: a.only.clone(),
    })?;
    let text = report.to_text();
    if let Some(prefix) = &a.out {
        let json_path = with_suffix(prefix, ".json");
        let txt_path = with_suffix(prefix, ".txt");
        write_json(&json_path, &report)?;
        write_text(&txt_path, &text)?;
        let outputs: Vec<PathBuf> = vec![json_path.clone(), txt_path];
        write_manifest(&json_path, command, &outputs, json!({ "passed": report.passed() }))?;
    }
    match a.format {
        Format::Json => println!("{}", serde_json::to_string_pretty(&report)?),
        Format::Text | Format::Csv => print!("{text}"),
    }
    Ok(if report.passed() {
        Outcome::Success
    } else {
        Outcome::VerificationFailed
    })
}
