//! Posterior sampling: Metropolis-within-Gibbs over the regression
//! coefficients, conjugate Dirichlet draws for the transition rows, and
//! forward-filtering backward-sampling for the elite indicators.
//!
//! Chains run in parallel with independent RNG streams derived from the
//! master seed; within a chain the scan is sequential, so results are
//! bit-identical across thread counts.

pub mod ffbs;
pub mod mh;
pub mod transitions;

pub(crate) mod engine;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, POSITIONS};
use crate::error::{Error, Result};
use crate::model::{Hyperparams, ModelState, Variant};

pub use mh::{adapt_scale, mh_update_coefficient, mle_center, CoeffBlock};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub n_chains: usize,
    pub n_iter: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub adapt_window: usize,
    /// Acceptance-rate band outside which proposal scales adapt.
    pub target_accept: (f64, f64),
    pub adapt_factor: f64,
    pub initial_scale: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            n_chains: 3,
            n_iter: 9000,
            burn_in: 1000,
            thin: 8,
            seed: 2006,
            adapt_window: 50,
            target_accept: (0.2, 0.5),
            adapt_factor: 1.25,
            initial_scale: 0.2,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_chains == 0 {
            return Err(Error::Argument("n_chains must be at least 1".into()));
        }
        if self.burn_in > self.n_iter {
            return Err(Error::Argument(format!(
                "burn_in {} exceeds n_iter {}",
                self.burn_in, self.n_iter
            )));
        }
        if self.thin == 0 {
            return Err(Error::Argument("thin must be at least 1".into()));
        }
        if self.adapt_window == 0 {
            return Err(Error::Argument("adapt_window must be at least 1".into()));
        }
        let (lo, hi) = self.target_accept;
        if !(0.0 < lo && lo < hi && hi < 1.0) {
            return Err(Error::Argument(format!(
                "target acceptance range ({lo}, {hi}) must satisfy 0 < lo < hi < 1"
            )));
        }
        if !(self.initial_scale > 0.0) || !(self.adapt_factor > 1.0) {
            return Err(Error::Argument(
                "initial_scale must be positive and adapt_factor > 1".into(),
            ));
        }
        Ok(())
    }

    /// Stored draws per chain.
    pub fn n_stored(&self) -> usize {
        (self.n_iter - self.burn_in) / self.thin
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AcceptStat {
    pub name: String,
    pub proposed: u64,
    pub accepted: u64,
    pub scale: f64,
}

impl AcceptStat {
    pub fn rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

/// Thinned post-burn-in draws of one chain plus its sampler diagnostics.
#[derive(Debug, Clone)]
pub struct ChainStore {
    pub chain_index: usize,
    pub seed: u64,
    pub draws: Vec<ModelState>,
    pub accept: Vec<AcceptStat>,
    pub boundary_hits: u64,
    pub fallback_warnings: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlayerMeta {
    pub id: String,
    pub n_seasons: usize,
    /// Group of the player's last observed season.
    pub group: usize,
}

/// Everything needed to interpret stored draws without the training data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitContext {
    pub variant: Variant,
    pub hyper: Hyperparams,
    pub sampler: SamplerConfig,
    pub parks: Vec<String>,
    pub group_labels: Vec<String>,
    pub players: Vec<PlayerMeta>,
    pub n_seasons: usize,
    pub data_fingerprint: String,
}

impl FitContext {
    /// Season index range of one player in the elite-indicator layout.
    pub fn player_range(&self, i: usize) -> std::ops::Range<usize> {
        let start: usize = self.players[..i].iter().map(|p| p.n_seasons).sum();
        start..start + self.players[i].n_seasons
    }
}

#[derive(Debug, Clone)]
pub struct Fit {
    pub context: FitContext,
    pub chains: Vec<ChainStore>,
}

impl Fit {
    pub fn all_draws(&self) -> impl Iterator<Item = &ModelState> {
        self.chains.iter().flat_map(|c| c.draws.iter())
    }

    pub fn n_draws(&self) -> usize {
        self.chains.iter().map(|c| c.draws.len()).sum()
    }
}

pub fn group_labels(variant: Variant) -> Vec<String> {
    match variant {
        Variant::NoPositionNoElite => vec!["ALL".to_string()],
        _ => POSITIONS.iter().map(|p| p.to_string()).collect(),
    }
}

/// Run the Gibbs sampler: per chain, initialize from jittered empirical
/// rates, scan coefficients / transitions / elite indicators, adapt
/// proposal scales during burn-in only, and keep every `thin`-th
/// post-burn-in draw. Deterministic given (seed, config, data).
pub fn run_gibbs(
    d: &Dataset,
    h: &Hyperparams,
    variant: Variant,
    cfg: &SamplerConfig,
) -> Result<Fit> {
    cfg.validate()?;
    if d.n_seasons() == 0 {
        return Err(Error::Argument("dataset has no seasons".into()));
    }
    let data = engine::FitData::prepare(d, h, variant);
    let labels = group_labels(variant);
    let park_labels = d.parks.clone();

    let results: Vec<Result<ChainStore>> = (0..cfg.n_chains)
        .into_par_iter()
        .map(|ci| {
            let mut eng = engine::GibbsEngine::new(&data, variant, h, cfg, ci);
            let names = eng.block_names(&labels, &park_labels);
            let mut draws = Vec::with_capacity(cfg.n_stored());
            for iter in 1..=cfg.n_iter {
                eng.sweep()
                    .map_err(|e| Error::Sampler(format!("chain {ci}, iteration {iter}: {e}")))?;
                if iter <= cfg.burn_in && iter % cfg.adapt_window == 0 {
                    eng.adapt();
                }
                if iter > cfg.burn_in && (iter - cfg.burn_in) % cfg.thin == 0 {
                    let snap = eng.snapshot();
                    snap.check_invariants(variant.has_elite()).map_err(|e| {
                        Error::Sampler(format!("chain {ci}, iteration {iter}: {e}"))
                    })?;
                    draws.push(snap);
                }
            }
            Ok(ChainStore {
                chain_index: ci,
                seed: cfg.seed,
                draws,
                accept: eng.accept_stats(&names),
                boundary_hits: eng.boundary_hits,
                fallback_warnings: eng.fallback_warnings,
            })
        })
        .collect();

    let mut chains = Vec::with_capacity(cfg.n_chains);
    for r in results {
        chains.push(r?);
    }
    Ok(Fit {
        context: FitContext {
            variant,
            hyper: h.clone(),
            sampler: cfg.clone(),
            parks: d.parks.clone(),
            group_labels: labels,
            players: d
                .players
                .iter()
                .map(|g| PlayerMeta {
                    id: g.id.clone(),
                    n_seasons: g.len,
                    group: variant.group_of(&d.seasons[g.start + g.len - 1]),
                })
                .collect(),
            n_seasons: d.n_seasons(),
            data_fingerprint: String::new(),
        },
        chains,
    })
}

/// A scalar coordinate of the stored state, for diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamRef {
    Alpha0(usize),
    Alpha1(usize),
    Beta(usize),
    Gamma(usize, usize),
    Nu00(usize),
    Nu11(usize),
}

impl ParamRef {
    pub fn extract(&self, s: &ModelState) -> f64 {
        match *self {
            ParamRef::Alpha0(k) => s.alpha0[k],
            ParamRef::Alpha1(k) => s.alpha1[k],
            ParamRef::Beta(b) => s.beta[b],
            ParamRef::Gamma(k, l) => s.gamma[k][l],
            ParamRef::Nu00(k) => s.nu[k][0],
            ParamRef::Nu11(k) => s.nu[k][3],
        }
    }
}

/// All scalar parameters tracked in the convergence table.
pub fn list_parameters(ctx: &FitContext) -> Vec<(String, ParamRef)> {
    let mut out = Vec::new();
    let g = ctx.group_labels.len();
    for k in 0..g {
        out.push((format!("alpha0[{}]", ctx.group_labels[k]), ParamRef::Alpha0(k)));
        if ctx.variant.has_elite() {
            out.push((format!("alpha1[{}]", ctx.group_labels[k]), ParamRef::Alpha1(k)));
        }
    }
    for (b, p) in ctx.parks.iter().enumerate() {
        out.push((format!("beta[{p}]"), ParamRef::Beta(b)));
    }
    for k in 0..g {
        for l in 0..ctx.hyper.basis().n_basis() {
            out.push((format!("gamma[{}][{l}]", ctx.group_labels[k]), ParamRef::Gamma(k, l)));
        }
    }
    if ctx.variant.has_elite() && !ctx.variant.player_transitions() {
        for k in 0..g {
            out.push((format!("nu00[{}]", ctx.group_labels[k]), ParamRef::Nu00(k)));
            out.push((format!("nu11[{}]", ctx.group_labels[k]), ParamRef::Nu11(k)));
        }
    }
    out
}

/// Potential scale reduction factor for one scalar parameter across
/// chains. Chains are trimmed from the back to the shortest length.
pub fn gelman_rubin<F>(chains: &[ChainStore], select: F) -> Result<f64>
where
    F: Fn(&ModelState) -> f64,
{
    if chains.len() < 2 {
        return Err(Error::Argument(
            "gelman_rubin needs at least 2 chains".into(),
        ));
    }
    let n = chains.iter().map(|c| c.draws.len()).min().unwrap();
    if n < 10 {
        return Err(Error::Argument(format!(
            "gelman_rubin needs at least 10 draws per chain, got {n}"
        )));
    }
    let m = chains.len() as f64;
    let nf = n as f64;
    let mut means = Vec::with_capacity(chains.len());
    let mut vars = Vec::with_capacity(chains.len());
    for c in chains {
        let xs: Vec<f64> = c.draws[..n].iter().map(&select).collect();
        let mu = xs.iter().sum::<f64>() / nf;
        let var = xs.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / (nf - 1.0);
        means.push(mu);
        vars.push(var);
    }
    let w: f64 = vars.iter().sum::<f64>() / m;
    let grand = means.iter().sum::<f64>() / m;
    let b: f64 = nf / (m - 1.0) * means.iter().map(|x| (x - grand) * (x - grand)).sum::<f64>();
    if w == 0.0 {
        return Ok(if b == 0.0 { 1.0 } else { f64::INFINITY });
    }
    let var_plus = (nf - 1.0) / nf * w + b / nf;
    Ok((var_plus / w).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::make_basis;
    use crate::data::{PlayerGroup, PlayerSeason};

    fn small_dataset() -> Dataset {
        let mut seasons = Vec::new();
        let mut players = Vec::new();
        for i in 0..6 {
            let start = seasons.len();
            for t in 0..4 {
                seasons.push(PlayerSeason {
                    player_id: format!("p{i}"),
                    year: 2000 + t,
                    hr: 3 + (i as u32 % 3) * 4 + t as u32,
                    ab: 320 + 10 * t as u32,
                    age: 24 + t,
                    park: i % 2,
                    position: i % 9,
                });
            }
            players.push(PlayerGroup {
                id: format!("p{i}"),
                start,
                len: 4,
            });
        }
        Dataset {
            seasons,
            players,
            parks: vec!["A".into(), "B".into()],
            year_range: (2000, 2003),
        }
    }

    fn small_config() -> SamplerConfig {
        SamplerConfig {
            n_chains: 2,
            n_iter: 120,
            burn_in: 40,
            thin: 4,
            seed: 7,
            ..SamplerConfig::default()
        }
    }

    fn hyper(d: &Dataset) -> Hyperparams {
        let (lo, hi) = d.age_range();
        Hyperparams::default_over(
            make_basis(f64::from(lo), f64::from(hi), &[]).unwrap(),
            d.median_age(),
        )
    }

    #[test]
    fn draw_count_contract() {
        let d = small_dataset();
        let h = hyper(&d);
        let cfg = small_config();
        let fit = run_gibbs(&d, &h, Variant::Full, &cfg).unwrap();
        assert_eq!(fit.chains.len(), 2);
        for c in &fit.chains {
            assert_eq!(c.draws.len(), (120 - 40) / 4);
        }
    }

    #[test]
    fn burn_in_equals_iterations_gives_empty_draws() {
        let d = small_dataset();
        let h = hyper(&d);
        let cfg = SamplerConfig {
            n_iter: 50,
            burn_in: 50,
            n_chains: 1,
            seed: 3,
            ..SamplerConfig::default()
        };
        let fit = run_gibbs(&d, &h, Variant::Full, &cfg).unwrap();
        assert!(fit.chains[0].draws.is_empty());
        assert!(!fit.chains[0].accept.is_empty());
    }

    #[test]
    fn identical_seeds_reproduce_draws() {
        let d = small_dataset();
        let h = hyper(&d);
        let cfg = small_config();
        let a = run_gibbs(&d, &h, Variant::Full, &cfg).unwrap();
        let b = run_gibbs(&d, &h, Variant::Full, &cfg).unwrap();
        for (ca, cb) in a.chains.iter().zip(&b.chains) {
            assert_eq!(ca.draws, cb.draws);
        }
    }

    #[test]
    fn stored_draws_satisfy_invariants_and_centering() {
        let d = small_dataset();
        let h = hyper(&d);
        let fit = run_gibbs(&d, &h, Variant::Full, &small_config()).unwrap();
        let ref_w = crate::basis::eval_basis(h.basis(), h.reference_age);
        for s in fit.all_draws() {
            s.check_invariants(true).unwrap();
            for k in 0..9 {
                let level: f64 = s.gamma[k].iter().zip(&ref_w).map(|(g, w)| g * w).sum();
                assert!(level.abs() < 1e-10);
            }
            let bbar: f64 = s.beta.iter().sum::<f64>() / s.beta.len() as f64;
            assert!(bbar.abs() < 1e-10);
        }
    }

    #[test]
    fn no_elite_variant_skips_mixture_state() {
        let d = small_dataset();
        let h = hyper(&d);
        let fit = run_gibbs(&d, &h, Variant::NoPositionNoElite, &small_config()).unwrap();
        for s in fit.all_draws() {
            assert_eq!(s.alpha0.len(), 1);
            assert!(s.nu.is_empty());
            assert!(s.elite.iter().all(|e| !e));
        }
    }

    #[test]
    fn pshmm_variant_carries_player_rows() {
        let d = small_dataset();
        let h = hyper(&d);
        let fit = run_gibbs(&d, &h, Variant::Pshmm, &small_config()).unwrap();
        for s in fit.all_draws() {
            let pn = s.player_nu.as_ref().unwrap();
            assert_eq!(pn.len(), d.n_players());
            let om = s.omega.as_ref().unwrap();
            assert_eq!(om.len(), 9);
        }
    }

    #[test]
    fn gelman_rubin_reference_cases() {
        use rand::Rng as _;
        use rand::SeedableRng as _;
        let mk = |vals: Vec<f64>| ChainStore {
            chain_index: 0,
            seed: 0,
            draws: vals
                .into_iter()
                .map(|v| ModelState {
                    alpha0: vec![v],
                    alpha1: vec![v + 1.0],
                    beta: vec![],
                    gamma: vec![vec![0.0; 4]],
                    nu: vec![],
                    elite: vec![],
                    player_nu: None,
                    omega: None,
                })
                .collect(),
            accept: vec![],
            boundary_hits: 0,
            fallback_warnings: 0,
        };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(10);
        let sample: Vec<f64> = (0..500).map(|_| rng.gen::<f64>()).collect();

        // Identical chains: B = 0.
        let chains = vec![mk(sample.clone()), mk(sample.clone())];
        let r = gelman_rubin(&chains, |s| s.alpha0[0]).unwrap();
        assert!((r - 1.0).abs() < 0.01, "r = {r}");

        // Independent draws from the same distribution.
        let s2: Vec<f64> = (0..500).map(|_| rng.gen::<f64>()).collect();
        let chains = vec![mk(sample.clone()), mk(s2)];
        let r = gelman_rubin(&chains, |s| s.alpha0[0]).unwrap();
        assert!(r < 1.1, "r = {r}");

        // Shifted chains: large between-chain variance.
        let shifted: Vec<f64> = sample.iter().map(|v| v + 50.0).collect();
        let chains = vec![mk(sample), mk(shifted)];
        let r = gelman_rubin(&chains, |s| s.alpha0[0]).unwrap();
        assert!(r > 10.0, "r = {r}");

        assert!(gelman_rubin(&chains[..1], |s| s.alpha0[0]).is_err());
    }
}
