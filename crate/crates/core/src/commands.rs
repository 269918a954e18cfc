//! Subcommand implementations behind the CLI: reproducible fit, predict,
//! validate, report, and simulate workflows over the config file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::chain_io;
use crate::config::{file_fingerprint, ExternalKind, RunConfig};
use crate::data::{self, Dataset};
use crate::error::{Error, Result};
use crate::model::Hyperparams;
use crate::predict::{
    age_curves, elite_onset, intercept_summary, load_holdout, model_contribution, predict_all,
    score, strawman_predictions, HoldoutRow, MethodPredictions,
};
use crate::sampler::{gelman_rubin, list_parameters, run_gibbs, Fit};
use crate::synth;

fn stamp(cmd: &str, cfg_fp: &str, data_fp: &str) -> String {
    format!("# longball {cmd} config={cfg_fp} data={data_fp}")
}

/// Remove files written so far when a command fails partway.
struct PartialOutputs {
    written: Vec<PathBuf>,
    keep: bool,
}

impl PartialOutputs {
    fn new() -> Self {
        PartialOutputs {
            written: Vec::new(),
            keep: false,
        }
    }
    fn track(&mut self, p: PathBuf) -> PathBuf {
        self.written.push(p.clone());
        p
    }
    fn commit(&mut self) {
        self.keep = true;
    }
}

impl Drop for PartialOutputs {
    fn drop(&mut self) {
        if !self.keep {
            for p in &self.written {
                let _ = std::fs::remove_file(p);
            }
        }
    }
}

fn write_text(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Basis and hyperparameters resolved against the training data: range
/// and reference age default to the observed values.
pub fn build_hyper(cfg: &RunConfig, d: &Dataset) -> Result<Hyperparams> {
    let (obs_lo, obs_hi) = d.age_range();
    let lo = cfg.model.age_lo.unwrap_or(f64::from(obs_lo));
    let hi = cfg.model.age_hi.unwrap_or(f64::from(obs_hi));
    let basis = crate::basis::make_basis(lo, hi, &cfg.model.interior_knots)?;
    let reference = cfg.model.reference_age.unwrap_or_else(|| d.median_age());
    Hyperparams::new(cfg.model.tau2, cfg.model.omega, basis, reference)
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    command: &'a str,
    config_fingerprint: String,
    data_fingerprint: String,
    wall_clock_secs: f64,
    n_players: usize,
    n_seasons: usize,
    n_parks: usize,
    draws_per_chain: usize,
    config: &'a RunConfig,
}

pub struct FitSummary {
    pub chain_paths: Vec<PathBuf>,
    pub n_parks: usize,
    pub max_rhat: Option<(String, f64)>,
}

/// Fit the configured variant and persist chains, diagnostics, and the
/// manifest into the output directory.
pub fn cmd_fit(cfg: &RunConfig) -> Result<FitSummary> {
    let train = cfg
        .data
        .train
        .as_ref()
        .ok_or_else(|| Error::Usage("fit requires data.train (or --train)".into()))?;
    let variant = cfg.variant()?;
    let sampler_cfg = cfg.sampler_config();
    sampler_cfg.validate()?;

    let started = Instant::now();
    let d = data::load_seasons(train, &cfg.ingest_config()?)?;
    if d.n_seasons() == 0 {
        return Err(Error::Data(format!(
            "{}: no usable seasons after filtering",
            train.display()
        )));
    }
    let hyper = build_hyper(cfg, &d)?;
    let mut fit = run_gibbs(&d, &hyper, variant, &sampler_cfg)?;
    let data_fp = file_fingerprint(train)?;
    fit.context.data_fingerprint = data_fp.clone();
    let cfg_fp = cfg.fingerprint();

    let out_dir = &cfg.output.dir;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut outputs = PartialOutputs::new();

    let mut chain_paths = Vec::new();
    for chain in &fit.chains {
        let path = outputs.track(out_dir.join(chain_io::chain_file_name(chain.chain_index)));
        chain_io::write_chain(&fit.context, chain, &path)?;
        chain_paths.push(path);
    }

    // Convergence table over all scalar parameters.
    let mut rhat_rows = Vec::new();
    let mut max_rhat: Option<(String, f64)> = None;
    if fit.chains.len() >= 2 && fit.chains.iter().all(|c| c.draws.len() >= 10) {
        for (name, p) in list_parameters(&fit.context) {
            let r = gelman_rubin(&fit.chains, |s| p.extract(s))?;
            if max_rhat.as_ref().map(|(_, m)| r > *m).unwrap_or(true) {
                max_rhat = Some((name.clone(), r));
            }
            rhat_rows.push((name, r));
        }
    }
    let rhat_path = outputs.track(out_dir.join("gelman_rubin.csv"));
    {
        let mut s = String::new();
        s.push_str(&stamp("fit", &cfg_fp, &data_fp));
        s.push_str("\nparameter,rhat\n");
        for (name, r) in &rhat_rows {
            s.push_str(&format!("{name},{r}\n"));
        }
        write_text(&rhat_path, &s)?;
    }

    // Acceptance diagnostics.
    let accept_path = outputs.track(out_dir.join("acceptance.csv"));
    {
        let mut s = String::new();
        s.push_str(&stamp("fit", &cfg_fp, &data_fp));
        s.push_str("\nchain,block,proposed,accepted,rate,final_scale\n");
        for chain in &fit.chains {
            for a in &chain.accept {
                s.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    chain.chain_index,
                    a.name,
                    a.proposed,
                    a.accepted,
                    a.rate(),
                    a.scale
                ));
            }
        }
        write_text(&accept_path, &s)?;
    }

    let wall = started.elapsed().as_secs_f64();
    let report_path = outputs.track(out_dir.join("fit_report.txt"));
    {
        let rates: Vec<f64> = fit
            .chains
            .iter()
            .flat_map(|c| c.accept.iter().map(|a| a.rate()))
            .collect();
        let boundary: u64 = fit.chains.iter().map(|c| c.boundary_hits).sum();
        let fallbacks: u64 = fit.chains.iter().map(|c| c.fallback_warnings).sum();
        let mut s = String::new();
        s.push_str(&stamp("fit", &cfg_fp, &data_fp));
        s.push('\n');
        s.push_str(&format!("variant: {}\n", variant.name()));
        s.push_str(&format!(
            "players: {}  seasons: {}  parks (beta coefficients): {}\n",
            d.n_players(),
            d.n_seasons(),
            d.n_parks()
        ));
        s.push_str(&format!(
            "basis: {} functions on [{}, {}], reference age {}\n",
            hyper.basis().n_basis(),
            hyper.basis().age_lo(),
            hyper.basis().age_hi(),
            hyper.reference_age
        ));
        s.push_str(&format!(
            "chains: {}  iterations: {}  burn-in: {}  thin: {}  stored/chain: {}\n",
            sampler_cfg.n_chains,
            sampler_cfg.n_iter,
            sampler_cfg.burn_in,
            sampler_cfg.thin,
            sampler_cfg.n_stored()
        ));
        s.push_str(&format!("seed: {}\n", sampler_cfg.seed));
        s.push_str(&format!("wall clock: {wall:.1}s\n"));
        if !rates.is_empty() {
            let min = rates.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = rates.iter().cloned().fold(0.0f64, f64::max);
            s.push_str(&format!(
                "acceptance rates: min {min:.3} median {:.3} max {max:.3}\n",
                crate::num::median(&rates)
            ));
        }
        if boundary > 0 {
            s.push_str(&format!(
                "warning: {boundary} hyperparameter proposals rejected at the propriety bounds\n"
            ));
        }
        if fallbacks > 0 {
            s.push_str(&format!(
                "note: {fallbacks} updates fell back to random-walk proposals\n"
            ));
        }
        match &max_rhat {
            Some((name, r)) => {
                s.push_str(&format!("max gelman-rubin: {r:.4} ({name})\n"));
            }
            None => s.push_str("gelman-rubin: skipped (needs >= 2 chains, >= 10 draws)\n"),
        }
        write_text(&report_path, &s)?;
    }

    let manifest_path = outputs.track(out_dir.join("manifest.json"));
    let manifest = Manifest {
        command: "fit",
        config_fingerprint: cfg_fp,
        data_fingerprint: data_fp,
        wall_clock_secs: wall,
        n_players: d.n_players(),
        n_seasons: d.n_seasons(),
        n_parks: d.n_parks(),
        draws_per_chain: sampler_cfg.n_stored(),
        config: cfg,
    };
    write_text(
        &manifest_path,
        &serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )?;

    outputs.commit();
    Ok(FitSummary {
        chain_paths,
        n_parks: d.n_parks(),
        max_rhat,
    })
}

/// Chain files under a directory, ordered by chain index.
pub fn locate_chain_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().to_string();
        if name.starts_with("chain_") && name.ends_with(".txt") {
            out.push(entry.path());
        }
    }
    out.sort();
    if out.is_empty() {
        return Err(Error::Usage(format!(
            "no chain files (chain_*.txt) found in {}",
            dir.display()
        )));
    }
    Ok(out)
}

fn load_fit_for(cfg: &RunConfig) -> Result<Fit> {
    let files = locate_chain_files(&cfg.chains_dir())?;
    let fit = chain_io::read_fit(&files)?;
    if let Some(train) = &cfg.data.train {
        if train.exists() {
            let fp = file_fingerprint(train)?;
            if !fit.context.data_fingerprint.is_empty() && fp != fit.context.data_fingerprint {
                return Err(Error::Data(format!(
                    "{}: fingerprint {} does not match the chains' training data {}",
                    train.display(),
                    &fp[..12.min(fp.len())],
                    &fit.context.data_fingerprint[..12.min(fit.context.data_fingerprint.len())]
                )));
            }
        }
    }
    Ok(fit)
}

fn require_holdout(cfg: &RunConfig) -> Result<Vec<HoldoutRow>> {
    let path = cfg
        .data
        .holdout
        .as_ref()
        .ok_or_else(|| Error::Usage("this command requires data.holdout (or --holdout)".into()))?;
    load_holdout(path, cfg.delimiter()?, &cfg.predict.external)
}

/// Predict the hold-out season from persisted chains and write the
/// per-player table.
pub fn cmd_predict(cfg: &RunConfig) -> Result<PathBuf> {
    let fit = load_fit_for(cfg)?;
    if fit.n_draws() == 0 {
        return Err(Error::Usage("chains contain no stored draws".into()));
    }
    let rows = require_holdout(cfg)?;
    let (preds, skipped) = predict_all(&fit, &rows, cfg.sampler.seed);

    let out_dir = &cfg.output.dir;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let cfg_fp = cfg.fingerprint();
    let data_fp = fit.context.data_fingerprint.clone();
    let path = out_dir.join("predictions.csv");
    let mut s = String::new();
    s.push_str(&stamp("predict", &cfg_fp, &data_fp));
    s.push_str("\nplayer_id,year,age,ab,rate_mean,mean_total,lo80,hi80,elite_prob,n_draws,rookie,unknown_park\n");
    for p in &preds {
        let sm = &p.summary;
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            sm.player_id,
            sm.year,
            sm.age,
            sm.m_true,
            sm.rate_mean,
            sm.mean_total,
            sm.interval.0,
            sm.interval.1,
            sm.elite_prob,
            sm.n_draws,
            sm.rookie,
            sm.unknown_park
        ));
    }
    write_text(&path, &s)?;

    if !skipped.is_empty() {
        let mut s = String::new();
        s.push_str(&stamp("predict", &cfg_fp, &data_fp));
        s.push_str("\nplayer_id,reason\n");
        for (id, why) in &skipped {
            s.push_str(&format!("{id},\"{why}\"\n"));
        }
        write_text(&out_dir.join("skipped_players.csv"), &s)?;
        log::warn!("{} hold-out rows skipped; see skipped_players.csv", skipped.len());
    }
    Ok(path)
}

/// One row of a persisted prediction table.
#[derive(Debug, Clone)]
pub struct PredRow {
    pub player_id: String,
    pub age: i32,
    pub mean_total: f64,
    pub interval: (u32, u32),
    pub rate_mean: f64,
}

pub fn load_prediction_table(path: &Path) -> Result<Vec<PredRow>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?
        .clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::MissingColumn {
                column: name.into(),
                path: path.to_path_buf(),
            })
    };
    let (c_id, c_age, c_mean, c_lo, c_hi, c_rate) = (
        col("player_id")?,
        col("age")?,
        col("mean_total")?,
        col("lo80")?,
        col("hi80")?,
        col("rate_mean")?,
    );
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let get = |i: usize| record.get(i).unwrap_or("").trim().to_string();
        let parse = |raw: String, name: &str| -> Result<f64> {
            raw.parse::<f64>()
                .map_err(|_| Error::Data(format!("{}: line {line}: bad {name}", path.display())))
        };
        rows.push(PredRow {
            player_id: get(c_id),
            age: parse(get(c_age), "age")? as i32,
            mean_total: parse(get(c_mean), "mean_total")?,
            interval: (
                parse(get(c_lo), "lo80")? as u32,
                parse(get(c_hi), "hi80")? as u32,
            ),
            rate_mean: parse(get(c_rate), "rate_mean")?,
        });
    }
    Ok(rows)
}

fn restrict<K: Clone + Ord, V: Clone>(map: &BTreeMap<K, V>, keys: &[K]) -> BTreeMap<K, V> {
    keys.iter()
        .filter_map(|k| map.get(k).map(|v| (k.clone(), v.clone())))
        .collect()
}

pub struct ValidationOutputs {
    pub internal_path: PathBuf,
    pub external_path: Option<PathBuf>,
}

/// Emit the model-comparison reports: an internal table over the
/// configured prediction tables plus the strawman, and (when external
/// prediction columns exist) an external table with all / young / old
/// cohorts. Every table is computed over the players covered by all of
/// its methods.
pub fn cmd_validate(cfg: &RunConfig) -> Result<ValidationOutputs> {
    let holdout = require_holdout(cfg)?;
    let mut truth: BTreeMap<String, f64> = BTreeMap::new();
    let mut age_of: BTreeMap<String, i32> = BTreeMap::new();
    let mut ab_of: BTreeMap<String, u32> = BTreeMap::new();
    for r in &holdout {
        if truth.insert(r.player_id.clone(), f64::from(r.hr)).is_some() {
            return Err(Error::Data(format!(
                "hold-out file lists player {} twice",
                r.player_id
            )));
        }
        age_of.insert(r.player_id.clone(), r.age);
        ab_of.insert(r.player_id.clone(), r.ab);
    }

    let tables = if cfg.validate.predictions.is_empty() {
        vec![crate::config::PredictionTable {
            name: "model".into(),
            path: cfg.output.dir.join("predictions.csv"),
        }]
    } else {
        cfg.validate.predictions.clone()
    };
    let mut methods: Vec<MethodPredictions> = Vec::new();
    for t in &tables {
        let rows = load_prediction_table(&t.path)?;
        methods.push(MethodPredictions {
            name: t.name.clone(),
            totals: rows
                .iter()
                .map(|r| (r.player_id.clone(), r.mean_total))
                .collect(),
            intervals: Some(rows.iter().map(|r| (r.player_id.clone(), r.interval)).collect()),
        });
    }

    let train = match &cfg.data.train {
        Some(p) if p.exists() => Some(data::load_seasons(p, &cfg.ingest_config()?)?),
        _ => None,
    };
    if cfg.predict.strawman {
        let d = train.as_ref().ok_or_else(|| {
            Error::Usage("strawman row requires data.train (or --train)".into())
        })?;
        let ids: Vec<String> = truth.keys().cloned().collect();
        methods.push(MethodPredictions {
            name: "strawman".into(),
            totals: strawman_predictions(d, &ids),
            intervals: None,
        });
    }

    let cfg_fp = cfg.fingerprint();
    let data_fp = file_fingerprint(cfg.data.holdout.as_ref().unwrap())?;
    let out_dir = &cfg.output.dir;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let cohort_rows = |methods: &[MethodPredictions],
                       players: &[String]|
     -> Result<Vec<crate::predict::MetricsRow>> {
        let young: Vec<String> = players
            .iter()
            .filter(|p| age_of[*p] <= cfg.predict.young_cutoff)
            .cloned()
            .collect();
        let old: Vec<String> = players
            .iter()
            .filter(|p| age_of[*p] > cfg.predict.young_cutoff)
            .cloned()
            .collect();
        let mut rows = Vec::new();
        for (name, subset) in [("all", players), ("young", &young[..]), ("old", &old[..])] {
            if subset.is_empty() {
                continue;
            }
            let sub_truth = restrict(&truth, subset);
            let sub_methods: Vec<MethodPredictions> = methods
                .iter()
                .map(|m| MethodPredictions {
                    name: m.name.clone(),
                    totals: restrict(&m.totals, subset),
                    intervals: m.intervals.as_ref().map(|iv| restrict(iv, subset)),
                })
                .collect();
            rows.extend(score(&sub_methods, &sub_truth, name)?);
        }
        Ok(rows)
    };

    let write_table = |path: &Path, rows: &[crate::predict::MetricsRow]| -> Result<()> {
        let mut s = String::new();
        s.push_str(&stamp("validate", &cfg_fp, &data_fp));
        s.push_str("\nmethod,cohort,n,rmse,mae,coverage,avg_width,pct_best\n");
        for r in rows {
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.method,
                r.cohort,
                r.n,
                r.rmse,
                r.mae,
                r.coverage.map(|v| v.to_string()).unwrap_or_default(),
                r.avg_width.map(|v| v.to_string()).unwrap_or_default(),
                r.pct_best
            ));
        }
        write_text(path, &s)?;
        Ok(())
    };

    // Internal comparison: players covered by every method row.
    let internal_players: Vec<String> = truth
        .keys()
        .filter(|p| methods.iter().all(|m| m.totals.contains_key(*p)))
        .cloned()
        .collect();
    if internal_players.is_empty() {
        return Err(Error::Argument(
            "no players covered by every compared method".into(),
        ));
    }
    let internal_rows = cohort_rows(&methods, &internal_players)?;
    let internal_path = out_dir.join("validation_internal.csv");
    write_table(&internal_path, &internal_rows)?;

    // External comparison on the top-hitter cohort.
    let mut external_path = None;
    let mut external_rows = Vec::new();
    if !cfg.predict.external.is_empty() {
        let d = train.as_ref().ok_or_else(|| {
            Error::Usage("external comparison requires data.train for the cohort filter".into())
        })?;
        let cohort = data::elite_hitter_filter(
            d,
            cfg.predict.elite_min_ab,
            cfg.predict.elite_rate_denominator,
        );
        let mut ext_methods: Vec<MethodPredictions> = vec![methods[0].clone()];
        for name in &cfg.predict.external {
            let mut totals = BTreeMap::new();
            for r in &holdout {
                if let Some(v) = r.externals.get(name) {
                    let total = match cfg.predict.external_kind {
                        ExternalKind::Total => *v,
                        ExternalKind::Rate => v * f64::from(r.ab),
                    };
                    totals.insert(r.player_id.clone(), total);
                }
            }
            ext_methods.push(MethodPredictions {
                name: name.clone(),
                totals,
                intervals: None,
            });
        }
        let ext_players: Vec<String> = truth
            .keys()
            .filter(|p| cohort.player_index(p).is_some())
            .filter(|p| ext_methods.iter().all(|m| m.totals.contains_key(*p)))
            .cloned()
            .collect();
        if !ext_players.is_empty() {
            external_rows = cohort_rows(&ext_methods, &ext_players)?;
            let path = out_dir.join("validation_external.csv");
            write_table(&path, &external_rows)?;
            external_path = Some(path);
        } else {
            log::warn!("external comparison skipped: no players pass the cohort filter with all methods present");
        }
    }

    // Plain-text summary.
    let fmt_row = |r: &crate::predict::MetricsRow| {
        format!(
            "  {:<24} {:<6} n={:<5} rmse={:<8.3} mae={:<8.3} coverage={} width={} best={:.1}%\n",
            r.method,
            r.cohort,
            r.n,
            r.rmse,
            r.mae,
            r.coverage.map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into()),
            r.avg_width.map(|v| format!("{v:.2}")).unwrap_or_else(|| "-".into()),
            r.pct_best
        )
    };
    let mut txt = String::new();
    txt.push_str(&stamp("validate", &cfg_fp, &data_fp));
    txt.push_str("\n\ninternal comparison (all compared methods)\n");
    for r in &internal_rows {
        txt.push_str(&fmt_row(r));
    }
    if !external_rows.is_empty() {
        txt.push_str("\nexternal comparison (top-hitter cohort)\n");
        for r in &external_rows {
            txt.push_str(&fmt_row(r));
        }
    }
    write_text(&out_dir.join("validation.txt"), &txt)?;

    Ok(ValidationOutputs {
        internal_path,
        external_path,
    })
}

pub struct ReportOutputs {
    pub onset_path: PathBuf,
    pub intercept_path: PathBuf,
    pub curve_paths: Vec<PathBuf>,
    pub contribution_path: Option<PathBuf>,
}

/// Analysis exports from persisted chains: elite-onset histogram,
/// age-curve grids, intercept summaries, and (when a hold-out is
/// configured) the model-contribution table.
pub fn cmd_report(cfg: &RunConfig) -> Result<ReportOutputs> {
    let fit = load_fit_for(cfg)?;
    let out_dir = &cfg.output.dir;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let cfg_fp = cfg.fingerprint();
    let data_fp = fit.context.data_fingerprint.clone();

    // Elite onset.
    let hist = elite_onset(&fit);
    if hist.n_elite_players == 0 {
        log::warn!("no player reaches elite status in at least two years; onset histogram is empty");
    }
    let onset_path = out_dir.join("onset_histogram.csv");
    {
        let mut s = String::new();
        s.push_str(&stamp("report", &cfg_fp, &data_fp));
        s.push_str("\nyears_to_elite,players\n");
        for (years, count) in &hist.counts {
            s.push_str(&format!("{years},{count}\n"));
        }
        write_text(&onset_path, &s)?;
    }

    // Intercept summaries at the configured young reference age.
    let intercepts = intercept_summary(&fit, cfg.model.intercept_reference_age);
    let intercept_path = out_dir.join("intercepts.csv");
    {
        let mut s = String::new();
        s.push_str(&stamp("report", &cfg_fp, &data_fp));
        s.push_str("\nposition,status,rate_mean,rate_lo95,rate_hi95\n");
        for r in &intercepts {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                r.position,
                if r.elite { "elite" } else { "non-elite" },
                r.rate_mean,
                r.rate_lo95,
                r.rate_hi95
            ));
        }
        write_text(&intercept_path, &s)?;
    }

    // Age-curve grids per position and status.
    let positions: Vec<String> = if cfg.report.curve_positions.is_empty() {
        fit.context.group_labels.clone()
    } else {
        cfg.report.curve_positions.clone()
    };
    let mut curve_paths = Vec::new();
    for label in &positions {
        let Some(pos) = fit
            .context
            .group_labels
            .iter()
            .position(|g| g.eq_ignore_ascii_case(label))
        else {
            return Err(Error::Usage(format!("unknown curve position `{label}`")));
        };
        // In the pooled variant there is one group; honor a single export.
        let statuses: &[bool] = if fit.context.variant.has_elite() {
            &[false, true]
        } else {
            &[false]
        };
        for &elite in statuses {
            let curves = age_curves(&fit, pos, elite, None, cfg.report.n_curves, cfg.report.grid_step);
            let suffix = if elite { "elite" } else { "nonelite" };
            let path = out_dir.join(format!("age_curves_{}_{suffix}.csv", label.to_lowercase()));
            let mut s = String::new();
            s.push_str(&stamp("report", &cfg_fp, &data_fp));
            s.push_str("\nage");
            for c in 0..curves.curves.len() {
                s.push_str(&format!(",curve_{c}"));
            }
            s.push('\n');
            for (i, age) in curves.ages.iter().enumerate() {
                s.push_str(&format!("{age}"));
                for c in &curves.curves {
                    s.push_str(&format!(",{}", c[i]));
                }
                s.push('\n');
            }
            write_text(&path, &s)?;
            curve_paths.push(path);
        }
    }

    // Model contribution needs hold-out covariates; emit when available.
    let mut contribution_path = None;
    if cfg.data.holdout.is_some() {
        let rows = require_holdout(cfg)?;
        let (preds, _) = predict_all(&fit, &rows, cfg.sampler.seed);
        let summaries: Vec<_> = preds.iter().map(|p| p.summary.clone()).collect();
        if let Some(train) = &cfg.data.train {
            let d = data::load_seasons(train, &cfg.ingest_config()?)?;
            let (contrib, skipped) = model_contribution(&summaries, &d);
            let path = out_dir.join("contributions.csv");
            let mut s = String::new();
            s.push_str(&stamp("report", &cfg_fp, &data_fp));
            s.push_str("\nplayer_id,contribution,age,past_rate_sd\n");
            for c in &contrib {
                s.push_str(&format!(
                    "{},{},{},{}\n",
                    c.player_id, c.contribution, c.age, c.past_rate_sd
                ));
            }
            write_text(&path, &s)?;
            if !skipped.is_empty() {
                log::warn!(
                    "{} players skipped in the contribution table (no training history)",
                    skipped.len()
                );
            }
            contribution_path = Some(path);
        }
    }

    Ok(ReportOutputs {
        onset_path,
        intercept_path,
        curve_paths,
        contribution_path,
    })
}

pub struct SimulateOutputs {
    pub train_path: PathBuf,
    pub holdout_path: PathBuf,
    pub truth_path: PathBuf,
}

/// Generate a synthetic training set and a one-step-ahead hold-out in the
/// ingest format, plus the generating parameters.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<SimulateOutputs> {
    use rand::SeedableRng as _;
    let out_dir = &cfg.output.dir;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let tp = synth::TrueParams::desk_default(
        cfg.simulate.players,
        cfg.simulate.seasons,
        cfg.simulate.parks,
        cfg.sampler.seed,
    );
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.sampler.seed);
    rng.set_stream(0x73696d);
    let sim = synth::simulate(&tp, &mut rng);
    let next = synth::simulate_next_season(&tp, &sim, &mut rng);

    let train_path = out_dir.join("sim_train.csv");
    data::write_seasons(&sim.dataset, &train_path, cfg.delimiter()?)?;

    let holdout_path = out_dir.join("sim_holdout.csv");
    {
        let sep = cfg.delimiter()? as char;
        let mut s = String::new();
        s.push_str(&format!(
            "player_id{sep}year{sep}hr{sep}ab{sep}age{sep}park{sep}position\n"
        ));
        for n in &next {
            s.push_str(&format!(
                "{}{sep}{}{sep}{}{sep}{}{sep}{}{sep}{}{sep}{}\n",
                n.player_id, n.year, n.hr, n.ab, n.age, n.park, n.position
            ));
        }
        write_text(&holdout_path, &s)?;
    }

    let truth_path = out_dir.join("sim_truth.json");
    #[derive(Serialize)]
    struct Truth<'a> {
        alpha0: &'a [f64],
        alpha1: &'a [f64],
        beta: &'a [f64],
        gamma: &'a [Vec<f64>],
        nu: &'a [[f64; 4]],
        reference_age: f64,
    }
    write_text(
        &truth_path,
        &serde_json::to_string_pretty(&Truth {
            alpha0: &tp.alpha0,
            alpha1: &tp.alpha1,
            beta: &tp.beta,
            gamma: &tp.gamma,
            nu: &tp.nu,
            reference_age: tp.reference_age,
        })
        .expect("truth serializes"),
    )?;

    Ok(SimulateOutputs {
        train_path,
        holdout_path,
        truth_path,
    })
}
