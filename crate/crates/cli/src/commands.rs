use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;
use tradeflow::dataset::{
    build_panel, encode_three_way, load_flows_csv, load_gravity_csv, load_provisions_csv,
    synth_fm_data, synth_panel, synth_presence_data, Panel,
};
use tradeflow::gravity::{
    fit_loglinear_gravity, lasso_ppml_fit, ppml_fit, LassoFit, LogLinearGravity, PPMLConfig,
    PPMLModel,
};
use tradeflow::nnclassifier::Metrics;
use tradeflow::pipeline::{self, Report, Stage1Result, Stage2Result};
use tradeflow::Error;

use crate::config::{CliConfig, InputError};

fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

/// `data.json` -> `data.truth.json`.
pub fn sidecar_path(out: &Path) -> PathBuf {
    out.with_extension("truth.json")
}

fn read_panel(path: &Path) -> anyhow::Result<Panel> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Panel::from_json(&text).with_context(|| format!("cannot load panel {}", path.display()))
}

fn require_stage1(dir: &Path) -> anyhow::Result<Stage1Result> {
    Stage1Result::load(dir).map_err(|e| match e {
        Error::MissingArtifact(p) => InputError(format!(
            "missing stage-1 artifact {}; run `tradeflow stage1` with this config first",
            p.display()
        ))
        .into(),
        e => anyhow::Error::from(e).context("cannot load stage-1 artifacts"),
    })
}

fn require_stage2(dir: &Path) -> anyhow::Result<Stage2Result> {
    Stage2Result::load(dir).map_err(|e| match e {
        Error::MissingArtifact(p) => InputError(format!(
            "missing stage-2 artifact {}; run `tradeflow stage2` with this config first",
            p.display()
        ))
        .into(),
        e => anyhow::Error::from(e).context("cannot load stage-2 artifacts"),
    })
}

pub fn ingest(flows: &Path, provisions: &Path, out: &Path) -> anyhow::Result<()> {
    let flows = load_flows_csv(flows)?;
    let table = load_provisions_csv(provisions)?;
    let panel = build_panel(&flows, &table)?;
    write_text(out, &panel.to_json()?)?;
    let nonzero = panel.n_nonzero();
    println!("panel      {}", out.display());
    println!("provisions {}", panel.provision_ids.len());
    println!("rows       {}", panel.rows.len());
    println!("zero-flow  {}", panel.rows.len() - nonzero);
    println!("nonzero    {nonzero}");
    if nonzero == 0 {
        eprintln!(
            "warning: no provision row matched a positive flow; every flow in the panel is zero"
        );
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SynthKind {
    Fm,
    Presence,
    Panel,
}

pub fn synth(kind: SynthKind, cfg: &CliConfig, out: &Path) -> anyhow::Result<()> {
    let sidecar = sidecar_path(out);
    let absent = |table: &str| InputError(format!("config table [synth.{table}] is required"));
    match kind {
        SynthKind::Fm => {
            let p = cfg.synth.fm.as_ref().ok_or_else(|| absent("fm"))?;
            let (matrix, model) = synth_fm_data(p.n, p.d, p.k, p.noise_sigma, p.seed)?;
            write_text(out, &matrix.to_json()?)?;
            write_text(&sidecar, &model.to_json()?)?;
            println!("rows {} features {}", matrix.n_rows, matrix.n_cols);
        }
        SynthKind::Presence => {
            let p = cfg.synth.presence.as_ref().ok_or_else(|| absent("presence"))?;
            let (matrix, truth) = synth_presence_data(p.n, p.d, p.n_active, p.seed)?;
            write_text(out, &matrix.to_json()?)?;
            write_json(&sidecar, &truth)?;
            let active: Vec<&str> = truth.active.iter().map(|&i| matrix.columns[i].as_str()).collect();
            println!("rows {} features {}", matrix.n_rows, matrix.n_cols);
            println!("active {}", active.join(" "));
        }
        SynthKind::Panel => {
            let spec = cfg.synth.panel.as_ref().ok_or_else(|| absent("panel"))?;
            let (panel, truth) = synth_panel(spec)?;
            write_text(out, &panel.to_json()?)?;
            write_json(&sidecar, &truth)?;
            let (a, b) = truth.planted_pair;
            println!("rows {} nonzero {}", panel.rows.len(), panel.n_nonzero());
            println!(
                "planted pair {} x {}",
                panel.provision_ids[a], panel.provision_ids[b]
            );
        }
    }
    println!("wrote {} and {}", out.display(), sidecar.display());
    Ok(())
}

fn metrics_line(label: &str, m: &Metrics) -> String {
    format!(
        "{label:<6} accuracy {:.4}  precision {:.4}  recall {:.4}  f1 {:.4}",
        m.accuracy, m.precision, m.recall, m.f1
    )
}

fn print_stage1(r: &Stage1Result) {
    println!("{}", metrics_line("train", &r.train_metrics));
    println!("{}", metrics_line("test", &r.test_metrics));
    println!();
    println!("{:>4}  {:<16} {:>12}", "rank", "provision", "mean |shap|");
    for (i, e) in r.top_k.iter().enumerate() {
        println!("{:>4}  {:<16} {:>12.4e}", i + 1, e.feature, e.importance);
    }
}

pub fn stage1(cfg: &CliConfig) -> anyhow::Result<()> {
    let pc = cfg.pipeline()?;
    let panel = read_panel(cfg.panel_path()?)?;
    let r = pipeline::run_stage1(&panel, &pc)?;
    print_stage1(&r);
    Ok(())
}

fn print_pairs(labels: &[String], pairs: impl IntoIterator<Item = (usize, usize, f64)>) {
    println!("{:<16} {:<16} {:>10}", "provision", "provision", "<v_i,v_j>");
    for (i, j, v) in pairs {
        println!("{:<16} {:<16} {:>10.4}", labels[i], labels[j], v);
    }
}

pub fn stage2(cfg: &CliConfig) -> anyhow::Result<()> {
    let pc = cfg.pipeline()?;
    let s1 = require_stage1(cfg.output_dir()?)?;
    let panel = read_panel(cfg.panel_path()?)?;
    let r = pipeline::run_stage2(&panel, &s1, &pc)?;
    println!("rows {}  train rmse {:.4}  held-out rmse {:.4}", r.n_rows, r.train_rmse, r.test_rmse);
    println!();
    print_pairs(&r.heatmap.labels, r.heatmap.ranked_pairs().into_iter().take(10));
    Ok(())
}

pub fn report(cfg: &CliConfig) -> anyhow::Result<()> {
    let dir = cfg.output_dir()?;
    let s1 = require_stage1(dir)?;
    let s2 = require_stage2(dir)?;
    let Report { stage1, stage2 } = pipeline::run_report(&s1, &s2, dir)?;
    println!("{}", metrics_line("train", &stage1.train));
    println!("{}", metrics_line("test", &stage1.test));
    println!("k {}  top provision {}", stage1.k, stage1.top_provisions[0].provision_id);
    println!(
        "stage 2 rows {}  held-out rmse {:.4}",
        stage2.n_rows, stage2.held_out_rmse
    );
    println!();
    println!("{:<16} {:<16} {:>10}", "provision", "provision", "<v_i,v_j>");
    for p in &stage2.strongest_interactions {
        println!("{:<16} {:<16} {:>10.4}", p.first, p.second, p.value);
    }
    println!("wrote {}", dir.join("report.json").display());
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum BaselineKind {
    Ols,
    Ppml,
    Lasso,
}

#[derive(Serialize)]
struct OlsOutput {
    n_observations: usize,
    coefficients: LogLinearGravity,
}

#[derive(Serialize)]
struct PpmlOutput<'a> {
    n_rows: usize,
    config: &'a PPMLConfig,
    model: &'a PPMLModel,
}

#[derive(Serialize)]
struct LassoOutput<'a> {
    n_rows: usize,
    lambda: f64,
    active_set: &'a [String],
    model: &'a PPMLModel,
}

fn print_betas(model: &PPMLModel) {
    println!("{:<16} {:>12}", "provision", "coefficient");
    for (id, b) in &model.beta {
        println!("{id:<16} {b:>12.6}");
    }
}

pub fn baseline(kind: BaselineKind, cfg: &CliConfig) -> anyhow::Result<()> {
    let dir = cfg.output_dir()?.join("baseline");
    let out = match kind {
        BaselineKind::Ols => {
            let path = cfg
                .baseline
                .gravity_csv
                .as_deref()
                .ok_or_else(|| InputError("config key `baseline.gravity_csv` is required".into()))?;
            let obs = load_gravity_csv(path)?;
            let fit = fit_loglinear_gravity(&obs)?;
            let out = dir.join("ols.json");
            write_json(&out, &OlsOutput { n_observations: obs.len(), coefficients: fit })?;
            println!("ln alpha        {:>10.6}", fit.ln_alpha);
            println!("gdp origin      {:>10.6}", fit.beta_gdp_origin);
            println!("gdp destination {:>10.6}", fit.beta_gdp_destination);
            println!("distance        {:>10.6}", fit.beta_distance);
            out
        }
        BaselineKind::Ppml => {
            let config = cfg.baseline.ppml.unwrap_or_default();
            let panel = read_panel(cfg.panel_path()?)?;
            let matrix = encode_three_way(&panel, &panel.provision_ids, false)?;
            let model = ppml_fit(&matrix, &config)?;
            let out = dir.join("ppml.json");
            write_json(&out, &PpmlOutput { n_rows: matrix.n_rows, config: &config, model: &model })?;
            print_betas(&model);
            out
        }
        BaselineKind::Lasso => {
            let config = cfg
                .baseline
                .lasso
                .as_ref()
                .ok_or_else(|| InputError("config table [baseline.lasso] is required".into()))?;
            let panel = read_panel(cfg.panel_path()?)?;
            let matrix = encode_three_way(&panel, &panel.provision_ids, false)?;
            let LassoFit { model, active_set } = lasso_ppml_fit(&matrix, config)?;
            let out = dir.join("lasso.json");
            write_json(
                &out,
                &LassoOutput {
                    n_rows: matrix.n_rows,
                    lambda: config.lambda,
                    active_set: &active_set,
                    model: &model,
                },
            )?;
            print_betas(&model);
            println!("active {} of {}", active_set.len(), model.beta.len());
            out
        }
    };
    println!("wrote {}", out.display());
    Ok(())
}

pub fn explain(cfg: &CliConfig) -> anyhow::Result<()> {
    let row = cfg
        .explain
        .as_ref()
        .ok_or_else(|| InputError("config table [explain] is required".into()))?
        .row;
    let dir = cfg.output_dir()?;
    let s1 = require_stage1(dir)?;
    let panel = read_panel(cfg.panel_path()?)?;
    let e = pipeline::explain_row(&panel, &s1, row)?;
    let out = dir.join("explain").join(format!("row_{row}.json"));
    write_json(&out, &e)?;

    println!(
        "row {}  {} -> {} {}  trade {}  p {:.4}  base {:.4}",
        e.row,
        e.exporter,
        e.importer,
        e.year,
        if e.flow_present { "yes" } else { "no" },
        e.probability,
        e.base_value
    );
    let mut order: Vec<usize> = (0..e.contributions.len()).collect();
    order.sort_by(|&a, &b| {
        e.contributions[b]
            .shap_value
            .abs()
            .total_cmp(&e.contributions[a].shap_value.abs())
    });
    println!("{:<16} {:>7} {:>11} {:>10}", "provision", "present", "shap", "std err");
    for i in order {
        let c = &e.contributions[i];
        println!(
            "{:<16} {:>7} {:>11.4e} {:>10.2e}",
            c.provision_id, u8::from(c.present), c.shap_value, c.std_error
        );
    }
    println!("wrote {}", out.display());
    Ok(())
}
