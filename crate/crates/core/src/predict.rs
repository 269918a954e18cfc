//! Posterior predictive forecasts for a hold-out season, the validation
//! metrics, and the secondary analyses (elite onset, age curves, intercept
//! summaries, model contribution).

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};

use crate::basis::eval_basis;
use crate::data::{position_index, Dataset};
use crate::error::{Error, Result};
use crate::num::{logistic, mean, median, quantile};
use crate::sampler::transitions::draw_dirichlet2;
use crate::sampler::Fit;

/// One hold-out row: target covariates, the true outcome, and any
/// external method predictions carried alongside.
#[derive(Debug, Clone)]
pub struct HoldoutRow {
    pub player_id: String,
    pub year: i32,
    pub hr: u32,
    pub ab: u32,
    pub age: i32,
    pub park: String,
    pub position: String,
    pub externals: BTreeMap<String, f64>,
}

/// Load a hold-out file: the training schema plus optional external
/// prediction columns (matched case-insensitively by name).
pub fn load_holdout(
    path: impl AsRef<Path>,
    delimiter: u8,
    external_columns: &[String],
) -> Result<Vec<HoldoutRow>> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?
        .clone();
    let find = |names: &[&str]| -> Option<usize> {
        headers
            .iter()
            .position(|h| names.iter().any(|n| h.trim().eq_ignore_ascii_case(n)))
    };
    let required = [
        ("player_id", find(&["player_id", "playerid", "player"])),
        ("year", find(&["year", "yearid", "season"])),
        ("hr", find(&["hr", "homeruns"])),
        ("ab", find(&["ab", "atbats"])),
        ("age", find(&["age"])),
        ("park", find(&["park", "ballpark"])),
        ("position", find(&["position", "pos"])),
    ];
    let mut idx = [0usize; 7];
    for (slot, (name, found)) in required.iter().enumerate() {
        idx[slot] = found.ok_or_else(|| Error::MissingColumn {
            column: name.to_string(),
            path: path.to_path_buf(),
        })?;
    }
    let ext_idx: Vec<(String, Option<usize>)> = external_columns
        .iter()
        .map(|c| (c.clone(), find(&[c.as_str()])))
        .collect();
    for (name, found) in &ext_idx {
        if found.is_none() {
            return Err(Error::MissingColumn {
                column: name.clone(),
                path: path.to_path_buf(),
            });
        }
    }

    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let get = |i: usize| record.get(i).unwrap_or("").trim();
        let parse_u32 = |i: usize, name: &str| -> Result<u32> {
            get(i)
                .parse::<u32>()
                .map_err(|_| Error::Data(format!("line {line}: cannot parse {name} from `{}`", get(i))))
        };
        let parse_i32 = |i: usize, name: &str| -> Result<i32> {
            get(i)
                .parse::<i32>()
                .map_err(|_| Error::Data(format!("line {line}: cannot parse {name} from `{}`", get(i))))
        };
        let hr = parse_u32(idx[2], "hr")?;
        let ab = parse_u32(idx[3], "ab")?;
        if hr > ab {
            return Err(Error::Data(format!("line {line}: hr {hr} > ab {ab}")));
        }
        let mut externals = BTreeMap::new();
        for (name, found) in &ext_idx {
            let raw = get(found.unwrap());
            if !raw.is_empty() {
                let v: f64 = raw.parse().map_err(|_| {
                    Error::Data(format!("line {line}: cannot parse {name} from `{raw}`"))
                })?;
                externals.insert(name.clone(), v);
            }
        }
        rows.push(HoldoutRow {
            player_id: get(idx[0]).to_string(),
            year: parse_i32(idx[1], "year")?,
            hr,
            ab,
            age: parse_i32(idx[4], "age")?,
            park: get(idx[5]).to_string(),
            position: get(idx[6]).to_string(),
            externals,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone)]
pub struct PredictiveSummary {
    pub player_id: String,
    pub year: i32,
    pub age: i32,
    pub m_true: u32,
    pub rate_mean: f64,
    pub mean_total: f64,
    pub interval: (u32, u32),
    pub elite_prob: f64,
    pub n_draws: usize,
    pub rookie: bool,
    pub unknown_park: bool,
}

#[derive(Debug, Clone)]
pub struct PredictiveDraws {
    pub rate_draws: Vec<f64>,
    pub total_draws: Vec<u32>,
    pub summary: PredictiveSummary,
}

/// Per-draw predictive rates for one player's target season: propagate
/// the elite status one step from the player's final sampled state
/// through the (position or player) transition row, then evaluate the
/// rate at the target covariates. Rookies start from the fixed non-elite
/// state; an unrecognized park contributes the prior-mean (zero) effect.
pub fn predictive_rate<R: Rng>(
    fit: &Fit,
    target_position: usize,
    target_age: i32,
    target_park: Option<usize>,
    player_index: Option<usize>,
    rng: &mut R,
) -> (Vec<f64>, f64) {
    let ctx = &fit.context;
    let variant = ctx.variant;
    let basis = ctx.hyper.basis();
    let group = variant.group_of_index(target_position);
    let w = eval_basis(basis, f64::from(target_age));
    let trans_group = player_index
        .map(|i| ctx.players[i].group)
        .unwrap_or(group);
    let last_range = player_index.map(|i| ctx.player_range(i));

    let mut rates = Vec::with_capacity(fit.n_draws());
    let mut acc_p1 = 0.0;
    for draw in fit.all_draws() {
        let elite_target = if variant.has_elite() {
            let e_last = match &last_range {
                Some(r) => draw.elite[r.end - 1],
                None => false,
            };
            let p1 = if variant.player_transitions() {
                match player_index {
                    Some(i) => {
                        let row = &draw.player_nu.as_ref().expect("pshmm draws carry player rows")[i];
                        row[usize::from(e_last) * 2 + 1]
                    }
                    None => {
                        // Rookie under player-specific transitions: draw a
                        // fresh row from the position's hyperparameters.
                        let om = &draw.omega.as_ref().expect("pshmm draws carry omega")[trans_group];
                        1.0 - draw_dirichlet2(om[0], om[1], rng)
                    }
                }
            } else {
                let row = &draw.nu[trans_group];
                row[usize::from(e_last) * 2 + 1]
            };
            acc_p1 += p1;
            rng.gen::<f64>() < p1
        } else {
            false
        };
        let alpha = if elite_target {
            draw.alpha1[group]
        } else {
            draw.alpha0[group]
        };
        let beta = target_park.map(|b| draw.beta[b]).unwrap_or(0.0);
        let traj: f64 = w.iter().zip(&draw.gamma[group]).map(|(x, g)| x * g).sum();
        rates.push(logistic(alpha + beta + traj));
    }
    let elite_prob = if rates.is_empty() { 0.0 } else { acc_p1 / rates.len() as f64 };
    (rates, elite_prob)
}

/// Shortest contiguous integer interval holding at least 80% of the
/// draws: slide a window of ceil(0.8 n) order statistics and keep the
/// narrowest.
pub fn shortest_interval(draws: &[u32], mass: f64) -> (u32, u32) {
    assert!(!draws.is_empty());
    let mut v = draws.to_vec();
    v.sort_unstable();
    let n = v.len();
    let k = ((mass * n as f64).ceil() as usize).clamp(1, n);
    let mut best = (v[0], v[n - 1]);
    let mut best_width = u32::MAX;
    for i in 0..=n - k {
        let lo = v[i];
        let hi = v[i + k - 1];
        if hi - lo < best_width {
            best_width = hi - lo;
            best = (lo, hi);
        }
    }
    best
}

/// One binomial total per rate draw at the true at-bat count, plus the
/// summary (mean and shortest 80% interval).
pub fn predictive_total<R: Rng>(
    rate_draws: &[f64],
    m_true: u32,
    rng: &mut R,
) -> (Vec<u32>, f64, (u32, u32)) {
    let totals: Vec<u32> = rate_draws
        .iter()
        .map(|&theta| {
            if m_true == 0 {
                0
            } else {
                Binomial::new(u64::from(m_true), theta).unwrap().sample(rng) as u32
            }
        })
        .collect();
    let mean_total = totals.iter().map(|&t| f64::from(t)).sum::<f64>() / totals.len().max(1) as f64;
    let interval = shortest_interval(&totals, 0.80);
    (totals, mean_total, interval)
}

/// Full predictive pipeline for one hold-out row.
pub fn predict_player<R: Rng>(fit: &Fit, row: &HoldoutRow, rng: &mut R) -> Result<PredictiveDraws> {
    let position = position_index(&row.position).ok_or_else(|| {
        Error::Data(format!(
            "player {}: unrecognized position `{}`",
            row.player_id, row.position
        ))
    })?;
    let ctx = &fit.context;
    let park = ctx.parks.binary_search_by(|p| p.as_str().cmp(&row.park)).ok();
    let player_index = ctx
        .players
        .binary_search_by(|p| p.id.as_str().cmp(&row.player_id))
        .ok();
    let (rate_draws, elite_prob) =
        predictive_rate(fit, position, row.age, park, player_index, rng);
    if rate_draws.is_empty() {
        return Err(Error::Argument("fit contains no stored draws".into()));
    }
    let (total_draws, mean_total, interval) = predictive_total(&rate_draws, row.ab, rng);
    let summary = PredictiveSummary {
        player_id: row.player_id.clone(),
        year: row.year,
        age: row.age,
        m_true: row.ab,
        rate_mean: mean(&rate_draws),
        mean_total,
        interval,
        elite_prob,
        n_draws: rate_draws.len(),
        rookie: player_index.is_none(),
        unknown_park: park.is_none(),
    };
    Ok(PredictiveDraws {
        rate_draws,
        total_draws,
        summary,
    })
}

/// Predict every hold-out row; rows whose position cannot be resolved are
/// reported in the skipped list instead of failing the run.
pub fn predict_all(
    fit: &Fit,
    rows: &[HoldoutRow],
    seed: u64,
) -> (Vec<PredictiveDraws>, Vec<(String, String)>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0x70726564); // distinct stream from the fit chains
    let mut out = Vec::new();
    let mut skipped = Vec::new();
    for row in rows {
        match predict_player(fit, row, &mut rng) {
            Ok(p) => out.push(p),
            Err(e) => skipped.push((row.player_id.clone(), e.to_string())),
        }
    }
    (out, skipped)
}

/// Point predictions (and optional intervals) of one method over a player
/// set.
#[derive(Debug, Clone)]
pub struct MethodPredictions {
    pub name: String,
    pub totals: BTreeMap<String, f64>,
    pub intervals: Option<BTreeMap<String, (u32, u32)>>,
}

#[derive(Debug, Clone)]
pub struct MetricsRow {
    pub method: String,
    pub cohort: String,
    pub n: usize,
    pub rmse: f64,
    pub mae: f64,
    pub coverage: Option<f64>,
    pub avg_width: Option<f64>,
    pub pct_best: f64,
}

/// Validation metrics over one cohort: RMSE of predictive means, median
/// absolute error, 80%-interval coverage and width where intervals exist,
/// and %BEST (strictly smallest absolute error, ties split equally).
pub fn score(
    methods: &[MethodPredictions],
    truths: &BTreeMap<String, f64>,
    cohort: &str,
) -> Result<Vec<MetricsRow>> {
    if methods.is_empty() {
        return Err(Error::Argument("score needs at least one method".into()));
    }
    let truth_keys: BTreeSet<&String> = truths.keys().collect();
    for m in methods {
        let keys: BTreeSet<&String> = m.totals.keys().collect();
        if keys != truth_keys {
            let missing: Vec<&&String> = truth_keys.difference(&keys).take(5).collect();
            let extra: Vec<&&String> = keys.difference(&truth_keys).take(5).collect();
            return Err(Error::Argument(format!(
                "method `{}` misaligned with truths (missing {missing:?}, extra {extra:?})",
                m.name
            )));
        }
    }

    let mut best_share: BTreeMap<&str, f64> = methods.iter().map(|m| (m.name.as_str(), 0.0)).collect();
    if !truths.is_empty() {
        for (player, _) in truths.iter() {
            let errs: Vec<(usize, f64)> = methods
                .iter()
                .enumerate()
                .map(|(i, m)| (i, (m.totals[player] - truths[player]).abs()))
                .collect();
            let min = errs.iter().map(|(_, e)| *e).fold(f64::INFINITY, f64::min);
            let tied: Vec<usize> = errs
                .iter()
                .filter(|(_, e)| (e - min).abs() <= 1e-9)
                .map(|(i, _)| *i)
                .collect();
            for i in &tied {
                *best_share.get_mut(methods[*i].name.as_str()).unwrap() +=
                    1.0 / tied.len() as f64;
            }
        }
    }

    let n = truths.len();
    let mut out = Vec::new();
    for m in methods {
        let errs: Vec<f64> = truths
            .iter()
            .map(|(player, t)| m.totals[player] - t)
            .collect();
        let rmse = (errs.iter().map(|e| e * e).sum::<f64>() / n.max(1) as f64).sqrt();
        let abs_errs: Vec<f64> = errs.iter().map(|e| e.abs()).collect();
        let mae = median(&abs_errs);
        let (coverage, avg_width) = match &m.intervals {
            Some(iv) => {
                let mut covered = 0usize;
                let mut width = 0.0;
                for (player, t) in truths.iter() {
                    let (lo, hi) = iv.get(player).ok_or_else(|| {
                        Error::Argument(format!("method `{}` missing interval for {player}", m.name))
                    })?;
                    if f64::from(*lo) <= *t && *t <= f64::from(*hi) {
                        covered += 1;
                    }
                    width += f64::from(hi - lo);
                }
                (
                    Some(covered as f64 / n.max(1) as f64),
                    Some(width / n.max(1) as f64),
                )
            }
            None => (None, None),
        };
        out.push(MetricsRow {
            method: m.name.clone(),
            cohort: cohort.to_string(),
            n,
            rmse,
            mae,
            coverage,
            avg_width,
            pct_best: 100.0 * best_share[m.name.as_str()] / n.max(1) as f64,
        });
    }
    Ok(out)
}

/// The strawman point predictor: next season's total equals the last
/// observed season's total. Players absent from the training data have no
/// strawman prediction.
pub fn strawman_predictions(d: &Dataset, players: &[String]) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    for id in players {
        if let Some(i) = d.player_index(id) {
            let seasons = d.player_seasons(i);
            out.insert(id.clone(), f64::from(seasons[seasons.len() - 1].hr));
        }
    }
    out
}

/// Elite-onset distribution: for each player whose posterior elite
/// probability reaches 0.5 in at least two career years, the first career
/// year index (1-based) at which it does.
#[derive(Debug, Clone, Default)]
pub struct OnsetHistogram {
    pub counts: BTreeMap<usize, usize>,
    pub n_elite_players: usize,
}

impl OnsetHistogram {
    pub fn fraction_needing_more_than(&self, years: usize) -> f64 {
        if self.n_elite_players == 0 {
            return 0.0;
        }
        let over: usize = self
            .counts
            .iter()
            .filter(|(y, _)| **y > years)
            .map(|(_, c)| c)
            .sum();
        over as f64 / self.n_elite_players as f64
    }
}

pub fn elite_onset(fit: &Fit) -> OnsetHistogram {
    let ctx = &fit.context;
    let n_draws = fit.n_draws().max(1);
    let mut hist = OnsetHistogram::default();
    for (i, _) in ctx.players.iter().enumerate() {
        let range = ctx.player_range(i);
        let mut probs = vec![0.0f64; range.len()];
        for draw in fit.all_draws() {
            for (j, t) in range.clone().enumerate() {
                if draw.elite[t] {
                    probs[j] += 1.0;
                }
            }
        }
        for p in probs.iter_mut() {
            *p /= n_draws as f64;
        }
        let qualifying = probs.iter().filter(|p| **p >= 0.5).count();
        if qualifying >= 2 {
            let first = probs.iter().position(|p| *p >= 0.5).unwrap() + 1;
            *hist.counts.entry(first).or_insert(0) += 1;
            hist.n_elite_players += 1;
        }
    }
    hist
}

#[derive(Debug, Clone)]
pub struct AgeCurves {
    pub ages: Vec<f64>,
    /// One rate curve per sampled draw, each aligned with `ages`.
    pub curves: Vec<Vec<f64>>,
}

/// Rate-scale age trajectories for one position and elite status, drawn
/// from an evenly strided sample of the stored draws with the park
/// effect fixed at its reference (zero unless a park index is given).
pub fn age_curves(
    fit: &Fit,
    position: usize,
    elite: bool,
    park_ref: Option<usize>,
    n_curves: usize,
    grid_step: f64,
) -> AgeCurves {
    let ctx = &fit.context;
    let group = ctx.variant.group_of_index(position);
    let basis = ctx.hyper.basis();
    let mut ages = Vec::new();
    let mut a = basis.age_lo();
    while a <= basis.age_hi() + 1e-9 {
        ages.push(a);
        a += grid_step;
    }
    let all: Vec<&crate::model::ModelState> = fit.all_draws().collect();
    let n_curves = n_curves.min(all.len());
    let mut curves = Vec::with_capacity(n_curves);
    for c in 0..n_curves {
        let draw = all[c * all.len() / n_curves.max(1)];
        let alpha = if elite { draw.alpha1[group] } else { draw.alpha0[group] };
        let beta = park_ref.map(|b| draw.beta[b]).unwrap_or(0.0);
        let curve: Vec<f64> = ages
            .iter()
            .map(|&age| {
                let w = eval_basis(basis, age);
                let traj: f64 = w.iter().zip(&draw.gamma[group]).map(|(x, g)| x * g).sum();
                logistic(alpha + beta + traj)
            })
            .collect();
        curves.push(curve);
    }
    AgeCurves { ages, curves }
}

#[derive(Debug, Clone)]
pub struct InterceptRow {
    pub position: String,
    pub elite: bool,
    pub rate_mean: f64,
    pub rate_lo95: f64,
    pub rate_hi95: f64,
}

/// Posterior summaries of the implied rate at a young reference age
/// (park effect zero), per position and elite status.
pub fn intercept_summary(fit: &Fit, reference_age: f64) -> Vec<InterceptRow> {
    let ctx = &fit.context;
    let basis = ctx.hyper.basis();
    let w = eval_basis(basis, reference_age);
    let mut out = Vec::new();
    for (k, label) in ctx.group_labels.iter().enumerate() {
        for elite in [false, true] {
            if elite && !ctx.variant.has_elite() {
                continue;
            }
            let rates: Vec<f64> = fit
                .all_draws()
                .map(|d| {
                    let alpha = if elite { d.alpha1[k] } else { d.alpha0[k] };
                    let traj: f64 = w.iter().zip(&d.gamma[k]).map(|(x, g)| x * g).sum();
                    logistic(alpha + traj)
                })
                .collect();
            out.push(InterceptRow {
                position: label.clone(),
                elite,
                rate_mean: mean(&rates),
                rate_lo95: quantile(&rates, 0.025),
                rate_hi95: quantile(&rates, 0.975),
            });
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct Contribution {
    pub player_id: String,
    /// Model rate prediction minus the naive last-year rate.
    pub contribution: f64,
    pub age: i32,
    pub past_rate_sd: f64,
}

/// Per-player model contribution relative to the naive last-season rate,
/// with the covariates used downstream (target age, past-rate standard
/// deviation). Players without a training history are skipped.
pub fn model_contribution(
    preds: &[PredictiveSummary],
    d: &Dataset,
) -> (Vec<Contribution>, Vec<String>) {
    let mut out = Vec::new();
    let mut skipped = Vec::new();
    for p in preds {
        match d.player_index(&p.player_id) {
            Some(i) => {
                let seasons = d.player_seasons(i);
                let last = &seasons[seasons.len() - 1];
                let naive = f64::from(last.hr) / f64::from(last.ab);
                let rates: Vec<f64> = seasons
                    .iter()
                    .map(|s| f64::from(s.hr) / f64::from(s.ab))
                    .collect();
                let sd = crate::num::variance(&rates).sqrt();
                out.push(Contribution {
                    player_id: p.player_id.clone(),
                    contribution: p.rate_mean - naive,
                    age: p.age,
                    past_rate_sd: sd,
                });
            }
            None => skipped.push(p.player_id.clone()),
        }
    }
    (out, skipped)
}
