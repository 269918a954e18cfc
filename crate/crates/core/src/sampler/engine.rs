//! The within-chain Gibbs scan: coefficient MH sweeps, conjugate
//! transition draws, and per-player FFBS, over cached per-season state.

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};

use crate::basis::eval_basis;
use crate::data::Dataset;
use crate::error::Result;
use crate::model::{Hyperparams, ModelState, TransitionRows, Variant};
use crate::num::{logistic, logit, mean, softplus};
use crate::pshmm::{self, HyperRow};
use crate::sampler::ffbs::{forward_filter, sample_backward, FfbsWorkspace};
use crate::sampler::mh::{conditional_mle, mh_step_1d, BlockPoint, MleCenter};
use crate::sampler::transitions::{
    accumulate_counts, draw_transition_rows, draw_transition_rows_with,
};
use crate::sampler::{AcceptStat, SamplerConfig};

/// Immutable per-season arrays shared by every chain.
pub(crate) struct FitData {
    pub y: Vec<f64>,
    pub m: Vec<f64>,
    pub m_int: Vec<u64>,
    pub group: Vec<usize>,
    pub park: Vec<usize>,
    /// Basis weights, row-major `n_seasons x n_basis`.
    pub bw: Vec<f64>,
    /// Group owning the transition step that enters each season: the
    /// previous season's group, or the season's own for a career opener.
    pub tgroup: Vec<usize>,
    pub players: Vec<Range<usize>>,
    /// Group of each player's last observed season (PSHMM hyper grouping).
    pub player_group: Vec<usize>,
    pub group_seasons: Vec<Vec<usize>>,
    pub park_seasons: Vec<Vec<usize>>,
    /// Basis weights at the reference age (trajectory centering).
    pub ref_weights: Vec<f64>,
    pub n_groups: usize,
    pub n_parks: usize,
    pub n_basis: usize,
}

impl FitData {
    pub fn prepare(d: &Dataset, h: &Hyperparams, variant: Variant) -> FitData {
        let n = d.n_seasons();
        let n_groups = variant.n_groups();
        let n_basis = h.basis().n_basis();
        let mut fd = FitData {
            y: Vec::with_capacity(n),
            m: Vec::with_capacity(n),
            m_int: Vec::with_capacity(n),
            group: Vec::with_capacity(n),
            park: Vec::with_capacity(n),
            bw: Vec::with_capacity(n * n_basis),
            tgroup: vec![0; n],
            players: d.players.iter().map(|g| g.range()).collect(),
            player_group: Vec::with_capacity(d.n_players()),
            group_seasons: vec![Vec::new(); n_groups],
            park_seasons: vec![Vec::new(); d.n_parks()],
            ref_weights: eval_basis(h.basis(), h.reference_age),
            n_groups,
            n_parks: d.n_parks(),
            n_basis,
        };
        for (idx, s) in d.seasons.iter().enumerate() {
            let g = variant.group_of(s);
            fd.y.push(f64::from(s.hr));
            fd.m.push(f64::from(s.ab));
            fd.m_int.push(u64::from(s.ab));
            fd.group.push(g);
            fd.park.push(s.park);
            fd.bw.extend(eval_basis(h.basis(), f64::from(s.age)));
            fd.group_seasons[g].push(idx);
            fd.park_seasons[s.park].push(idx);
        }
        for pg in &fd.players {
            for t in pg.clone() {
                fd.tgroup[t] = if t == pg.start {
                    fd.group[t]
                } else {
                    fd.group[t - 1]
                };
            }
            fd.player_group.push(fd.group[pg.end - 1]);
        }
        fd
    }

    fn weight_at(&self, season: usize, l: usize) -> f64 {
        self.bw[season * self.n_basis + l]
    }
}

#[derive(Debug, Clone, Copy)]
enum Block {
    Alpha0(usize),
    Alpha1(usize),
    Beta(usize),
    Gamma(usize, usize),
}

#[derive(Debug, Clone, Default)]
struct BlockStat {
    proposed: u64,
    accepted: u64,
    window_proposed: u64,
    window_accepted: u64,
}

pub(crate) struct GibbsEngine<'a> {
    pub data: &'a FitData,
    pub variant: Variant,
    pub tau2: f64,
    pub omega_prior: f64,
    pub cfg: SamplerConfig,
    pub rng: ChaCha8Rng,

    /// Observed outcomes; a live state variable only inside the
    /// joint-distribution (data-resimulating) check.
    pub y: Vec<f64>,

    // Current parameter state.
    pub alpha0: Vec<f64>,
    pub alpha1: Vec<f64>,
    pub beta: Vec<f64>,
    /// Flat `n_groups x n_basis`.
    pub gamma: Vec<f64>,
    pub nu: Vec<TransitionRows>,
    pub player_nu: Vec<TransitionRows>,
    pub omega_hyper: Vec<[f64; 4]>,
    pub elite: Vec<bool>,
    /// Cached park + trajectory part of each season's linear predictor.
    pub x: Vec<f64>,

    blocks: Vec<Block>,
    scales: Vec<f64>,
    stats: Vec<BlockStat>,
    hyper_scales: Vec<f64>,
    hyper_stats: Vec<BlockStat>,
    pub boundary_hits: u64,
    pub fallback_warnings: u64,

    // Scratch buffers.
    pts: Vec<BlockPoint>,
    lik: Vec<[f64; 2]>,
    rows: Vec<TransitionRows>,
    path: Vec<bool>,
    ws: FfbsWorkspace,
    counts: Vec<[f64; 4]>,
}

impl<'a> GibbsEngine<'a> {
    pub fn new(
        data: &'a FitData,
        variant: Variant,
        h: &Hyperparams,
        cfg: &SamplerConfig,
        chain_index: usize,
    ) -> GibbsEngine<'a> {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(chain_index as u64 + 1);

        let g = data.n_groups;
        let mut blocks = Vec::new();
        for k in 0..g {
            blocks.push(Block::Alpha0(k));
            if variant.has_elite() {
                blocks.push(Block::Alpha1(k));
            }
        }
        for b in 0..data.n_parks {
            blocks.push(Block::Beta(b));
        }
        for k in 0..g {
            for l in 0..data.n_basis {
                blocks.push(Block::Gamma(k, l));
            }
        }
        let n_blocks = blocks.len();
        let n_hyper = if variant.player_transitions() { 2 * g } else { 0 };

        let mut engine = GibbsEngine {
            data,
            variant,
            tau2: h.tau2,
            omega_prior: h.omega,
            cfg: cfg.clone(),
            rng,
            y: data.y.clone(),
            alpha0: vec![0.0; g],
            alpha1: vec![0.0; g],
            beta: vec![0.0; data.n_parks],
            gamma: vec![0.0; g * data.n_basis],
            nu: vec![[0.9, 0.1, 0.2, 0.8]; if variant.has_elite() { g } else { 0 }],
            player_nu: vec![
                [0.9, 0.1, 0.2, 0.8];
                if variant.player_transitions() { data.players.len() } else { 0 }
            ],
            omega_hyper: vec![[1.0; 4]; if variant.player_transitions() { g } else { 0 }],
            elite: vec![false; data.y.len()],
            x: vec![0.0; data.y.len()],
            blocks,
            scales: vec![cfg.initial_scale; n_blocks],
            stats: vec![BlockStat::default(); n_blocks],
            hyper_scales: vec![cfg.initial_scale; n_hyper],
            hyper_stats: vec![BlockStat::default(); n_hyper],
            boundary_hits: 0,
            fallback_warnings: 0,
            pts: Vec::new(),
            lik: Vec::new(),
            rows: Vec::new(),
            path: Vec::new(),
            ws: FfbsWorkspace::default(),
            counts: vec![[0.0; 4]; g.max(1)],
        };
        engine.initialize();
        engine
    }

    /// Empirical-rate starting point, jittered per chain for overdispersed
    /// starts.
    fn initialize(&mut self) {
        let d = self.data;
        for k in 0..d.n_groups {
            let (mut hr, mut ab) = (0.0, 0.0);
            for &s in &d.group_seasons[k] {
                hr += self.y[s];
                ab += d.m[s];
            }
            let rate = if ab > 0.0 { (hr / ab).clamp(1e-4, 0.5) } else { 0.03 };
            let z: f64 = StandardNormal.sample(&mut self.rng);
            self.alpha0[k] = logit(rate) + 0.25 * z;
            let z1: f64 = StandardNormal.sample(&mut self.rng);
            self.alpha1[k] = self.alpha0[k] + 1.0 + 0.25 * z1.abs();
        }
        for b in 0..d.n_parks {
            let z: f64 = StandardNormal.sample(&mut self.rng);
            self.beta[b] = 0.1 * z;
        }
        for gidx in 0..self.gamma.len() {
            let z: f64 = StandardNormal.sample(&mut self.rng);
            self.gamma[gidx] = 0.1 * z;
        }
        let jitter: Vec<(f64, f64)> = (0..self.nu.len() + self.player_nu.len())
            .map(|_| (self.rng.gen_range(-0.05..0.05), self.rng.gen_range(-0.05..0.05)))
            .collect();
        for (nu, (u, v)) in self
            .nu
            .iter_mut()
            .chain(self.player_nu.iter_mut())
            .zip(jitter)
        {
            nu[0] = (0.9 + u).clamp(0.05, 0.95);
            nu[1] = 1.0 - nu[0];
            nu[3] = (0.8 + v).clamp(0.05, 0.95);
            nu[2] = 1.0 - nu[3];
        }
        self.refresh_cache();
    }

    /// Recompute the cached park + trajectory predictor parts.
    pub fn refresh_cache(&mut self) {
        let d = self.data;
        for s in 0..self.y.len() {
            let mut traj = 0.0;
            for l in 0..d.n_basis {
                traj += self.gamma[d.group[s] * d.n_basis + l] * d.weight_at(s, l);
            }
            self.x[s] = self.beta[d.park[s]] + traj;
        }
    }

    fn alpha_for(&self, s: usize) -> f64 {
        if self.elite[s] {
            self.alpha1[self.data.group[s]]
        } else {
            self.alpha0[self.data.group[s]]
        }
    }

    pub fn eta(&self, s: usize) -> f64 {
        self.alpha_for(s) + self.x[s]
    }

    fn gather_points(&mut self, block: Block) -> (f64, (f64, f64)) {
        let d = self.data;
        self.pts.clear();
        match block {
            Block::Alpha0(k) => {
                for &s in &d.group_seasons[k] {
                    if !self.elite[s] {
                        self.pts.push(BlockPoint {
                            w: 1.0,
                            y: self.y[s],
                            m: d.m[s],
                            rest: self.x[s],
                        });
                    }
                }
                let upper = if self.variant.has_elite() {
                    self.alpha1[k]
                } else {
                    f64::INFINITY
                };
                (self.alpha0[k], (f64::NEG_INFINITY, upper))
            }
            Block::Alpha1(k) => {
                for &s in &d.group_seasons[k] {
                    if self.elite[s] {
                        self.pts.push(BlockPoint {
                            w: 1.0,
                            y: self.y[s],
                            m: d.m[s],
                            rest: self.x[s],
                        });
                    }
                }
                (self.alpha1[k], (self.alpha0[k], f64::INFINITY))
            }
            Block::Beta(b) => {
                for &s in &d.park_seasons[b] {
                    self.pts.push(BlockPoint {
                        w: 1.0,
                        y: self.y[s],
                        m: d.m[s],
                        rest: self.alpha_for(s) + self.x[s] - self.beta[b],
                    });
                }
                (self.beta[b], (f64::NEG_INFINITY, f64::INFINITY))
            }
            Block::Gamma(k, l) => {
                let cur = self.gamma[k * d.n_basis + l];
                for &s in &d.group_seasons[k] {
                    let w = d.weight_at(s, l);
                    if w == 0.0 {
                        continue;
                    }
                    self.pts.push(BlockPoint {
                        w,
                        y: self.y[s],
                        m: d.m[s],
                        rest: self.alpha_for(s) + self.x[s] - cur * w,
                    });
                }
                (cur, (f64::NEG_INFINITY, f64::INFINITY))
            }
        }
    }

    fn update_block(&mut self, bi: usize) {
        let block = self.blocks[bi];
        let (current, bounds) = self.gather_points(block);
        let center = conditional_mle(&self.pts, current);
        if center == MleCenter::NoData && !self.pts.is_empty() {
            self.fallback_warnings += 1;
        }
        let out = mh_step_1d(
            &self.pts,
            current,
            self.tau2,
            center,
            self.scales[bi],
            bounds,
            &mut self.rng,
        );
        let stat = &mut self.stats[bi];
        stat.proposed += 1;
        stat.window_proposed += 1;
        if out.accepted {
            stat.accepted += 1;
            stat.window_accepted += 1;
            let delta = out.value - current;
            match block {
                Block::Alpha0(k) => self.alpha0[k] = out.value,
                Block::Alpha1(k) => self.alpha1[k] = out.value,
                Block::Beta(b) => {
                    self.beta[b] = out.value;
                    for &s in &self.data.park_seasons[b] {
                        self.x[s] += delta;
                    }
                }
                Block::Gamma(k, l) => {
                    self.gamma[k * self.data.n_basis + l] = out.value;
                    for &s in &self.data.group_seasons[k] {
                        let w = self.data.weight_at(s, l);
                        if w != 0.0 {
                            self.x[s] += delta * w;
                        }
                    }
                }
            }
        }
    }

    fn sample_shared_transitions(&mut self) {
        for c in self.counts.iter_mut() {
            *c = [0.0; 4];
        }
        for pg in &self.data.players {
            accumulate_counts(
                &self.elite[pg.clone()],
                &self.data.tgroup[pg.clone()],
                &mut self.counts,
            );
        }
        for k in 0..self.data.n_groups {
            self.nu[k] = draw_transition_rows(&self.counts[k], self.omega_prior, &mut self.rng);
        }
    }

    fn sample_player_transitions(&mut self) {
        for i in 0..self.data.players.len() {
            let pg = self.data.players[i].clone();
            let mut counts = [[0.0f64; 4]];
            let mut prev = 0usize;
            for t in pg {
                let e = usize::from(self.elite[t]);
                counts[0][prev * 2 + e] += 1.0;
                prev = e;
            }
            let k = self.data.player_group[i];
            self.player_nu[i] =
                draw_transition_rows_with(&counts[0], &self.omega_hyper[k], &mut self.rng);
        }
    }

    fn update_hyper(&mut self) {
        for k in 0..self.data.n_groups {
            for row in [HyperRow::NonElite, HyperRow::Elite] {
                let values: Vec<(f64, f64)> = self
                    .data
                    .player_group
                    .iter()
                    .enumerate()
                    .filter(|(_, g)| **g == k)
                    .map(|(i, _)| row.extract(&self.player_nu[i]))
                    .collect();
                if values.is_empty() {
                    continue;
                }
                let hi = 2 * k + row.index();
                let current = row.extract_omega(&self.omega_hyper[k]);
                let out = pshmm::sample_hyper_pair(
                    &values,
                    current,
                    self.hyper_scales[hi],
                    &mut self.rng,
                );
                let stat = &mut self.hyper_stats[hi];
                stat.proposed += 1;
                stat.window_proposed += 1;
                if out.accepted {
                    stat.accepted += 1;
                    stat.window_accepted += 1;
                    row.store_omega(&mut self.omega_hyper[k], out.value);
                }
                if out.boundary {
                    self.boundary_hits += 1;
                }
                if out.fallback {
                    self.fallback_warnings += 1;
                }
            }
        }
    }

    fn ffbs_pass(&mut self) -> Result<()> {
        for i in 0..self.data.players.len() {
            let pg = self.data.players[i].clone();
            let n = pg.len();
            self.lik.clear();
            self.rows.clear();
            for t in pg.clone() {
                let e0 = self.alpha0[self.data.group[t]] + self.x[t];
                let e1 = self.alpha1[self.data.group[t]] + self.x[t];
                self.lik.push([
                    self.y[t] * e0 - self.data.m[t] * softplus(e0),
                    self.y[t] * e1 - self.data.m[t] * softplus(e1),
                ]);
                let row = if self.variant.player_transitions() {
                    self.player_nu[i]
                } else {
                    self.nu[self.data.tgroup[t]]
                };
                self.rows.push(row);
            }
            forward_filter(&self.lik, &self.rows, &mut self.ws)?;
            self.path.resize(n, false);
            sample_backward(&self.ws.fwd, &self.rows, &mut self.rng, &mut self.path);
            self.elite[pg].copy_from_slice(&self.path);
        }
        Ok(())
    }

    /// One full Gibbs scan (regression coefficients, transitions, elite
    /// indicators).
    pub fn sweep(&mut self) -> Result<()> {
        for bi in 0..self.blocks.len() {
            self.update_block(bi);
        }
        if self.variant.has_elite() {
            if self.variant.player_transitions() {
                self.sample_player_transitions();
                self.update_hyper();
            } else {
                self.sample_shared_transitions();
            }
            self.ffbs_pass()?;
        }
        Ok(())
    }

    /// Burn-in-only windowed scale adaptation.
    pub fn adapt(&mut self) {
        let target = self.cfg.target_accept;
        let factor = self.cfg.adapt_factor;
        for (scale, stat) in self.scales.iter_mut().zip(self.stats.iter_mut()) {
            *scale = crate::sampler::mh::adapt_scale(
                *scale,
                stat.window_accepted,
                stat.window_proposed,
                target,
                factor,
            );
            stat.window_proposed = 0;
            stat.window_accepted = 0;
        }
        for (scale, stat) in self.hyper_scales.iter_mut().zip(self.hyper_stats.iter_mut()) {
            *scale = crate::sampler::mh::adapt_scale(
                *scale,
                stat.window_accepted,
                stat.window_proposed,
                target,
                factor,
            );
            stat.window_proposed = 0;
            stat.window_accepted = 0;
        }
    }

    /// Redraw every season's outcome from the current parameters (the
    /// data-resimulation half of the joint-distribution check).
    pub fn resimulate_observations(&mut self) {
        for s in 0..self.y.len() {
            let theta = logistic(self.eta(s));
            let draw = Binomial::new(self.data.m_int[s], theta)
                .expect("valid binomial")
                .sample(&mut self.rng);
            self.y[s] = draw as f64;
        }
    }

    /// Snapshot the current state in canonical form: each group's
    /// trajectory is zeroed at the reference age and the park effects are
    /// centered, with the freed level folded into the intercepts. Both
    /// maps leave every linear predictor unchanged.
    pub fn snapshot(&self) -> ModelState {
        let d = self.data;
        let mut alpha0 = self.alpha0.clone();
        let mut alpha1 = self.alpha1.clone();
        let mut gamma: Vec<Vec<f64>> = (0..d.n_groups)
            .map(|k| self.gamma[k * d.n_basis..(k + 1) * d.n_basis].to_vec())
            .collect();
        for k in 0..d.n_groups {
            let level: f64 = gamma[k]
                .iter()
                .zip(&d.ref_weights)
                .map(|(g, w)| g * w)
                .sum();
            for g in gamma[k].iter_mut() {
                *g -= level;
            }
            alpha0[k] += level;
            alpha1[k] += level;
        }
        let mut beta = self.beta.clone();
        if !beta.is_empty() {
            let level = mean(&beta);
            for b in beta.iter_mut() {
                *b -= level;
            }
            for k in 0..d.n_groups {
                alpha0[k] += level;
                alpha1[k] += level;
            }
        }
        if !self.variant.has_elite() {
            // The elite intercept carries no state in this variant.
            alpha1 = alpha0.clone();
        }
        ModelState {
            alpha0,
            alpha1,
            beta,
            gamma,
            // Player-specific variants carry per-player rows instead.
            nu: if self.variant.player_transitions() {
                Vec::new()
            } else {
                self.nu.clone()
            },
            elite: self.elite.clone(),
            player_nu: if self.variant.player_transitions() {
                Some(self.player_nu.clone())
            } else {
                None
            },
            omega: if self.variant.player_transitions() {
                Some(self.omega_hyper.clone())
            } else {
                None
            },
        }
    }

    pub fn block_names(&self, group_labels: &[String], park_labels: &[String]) -> Vec<String> {
        self.blocks
            .iter()
            .map(|b| match b {
                Block::Alpha0(k) => format!("alpha0[{}]", group_labels[*k]),
                Block::Alpha1(k) => format!("alpha1[{}]", group_labels[*k]),
                Block::Beta(p) => format!("beta[{}]", park_labels[*p]),
                Block::Gamma(k, l) => format!("gamma[{}][{l}]", group_labels[*k]),
            })
            .collect()
    }

    pub fn accept_stats(&self, names: &[String]) -> Vec<AcceptStat> {
        let mut out: Vec<AcceptStat> = self
            .stats
            .iter()
            .zip(self.scales.iter())
            .enumerate()
            .map(|(i, (s, scale))| AcceptStat {
                name: names[i].clone(),
                proposed: s.proposed,
                accepted: s.accepted,
                scale: *scale,
            })
            .collect();
        for (i, (s, scale)) in self
            .hyper_stats
            .iter()
            .zip(self.hyper_scales.iter())
            .enumerate()
        {
            out.push(AcceptStat {
                name: format!(
                    "omega[{}][{}]",
                    i / 2,
                    if i % 2 == 0 { "non-elite" } else { "elite" }
                ),
                proposed: s.proposed,
                accepted: s.accepted,
                scale: *scale,
            });
        }
        out
    }
}
