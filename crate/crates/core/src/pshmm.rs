//! Player-specific transition parameters with position-level Dirichlet
//! hyperpriors.
//!
//! Each player carries their own transition row pair, conjugately updated
//! from their own career counts plus the position's hyperparameters. The
//! hyperparameters are sampled by Metropolis-Hastings with independent
//! Normal proposals centered at method-of-moments estimates matched to the
//! sample mean and variance of the player rows.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::function::gamma::ln_gamma;

use crate::data::Dataset;
use crate::error::Result;
use crate::model::{TransitionRows, Variant};
use crate::num::{mean, variance};
use crate::sampler::transitions::draw_transition_rows_with;
use crate::sampler::{run_gibbs, Fit, SamplerConfig};
use crate::model::Hyperparams;

/// One transition row pair per player, `[nu00, nu01, nu10, nu11]`.
pub type PlayerTransitions = Vec<TransitionRows>;

/// Per-position Dirichlet hyperparameters `[omega00, omega01, omega10, omega11]`.
pub type PositionHyper = Vec<[f64; 4]>;

/// Propriety guards on the flat hyperprior; contacts are surfaced as
/// warnings in the fit report.
pub const OMEGA_MIN: f64 = 1e-3;
pub const OMEGA_MAX: f64 = 1e4;

/// Which transition row a hyper update targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HyperRow {
    /// The (nu00, nu01) row with hyperparameters (omega00, omega01).
    NonElite,
    /// The (nu11, nu10) row with hyperparameters (omega11, omega10).
    Elite,
}

impl HyperRow {
    pub fn index(self) -> usize {
        match self {
            HyperRow::NonElite => 0,
            HyperRow::Elite => 1,
        }
    }

    /// Pull the (a, b) simplex pair this row targets out of a player row.
    pub fn extract(self, nu: &TransitionRows) -> (f64, f64) {
        match self {
            HyperRow::NonElite => (nu[0], nu[1]),
            HyperRow::Elite => (nu[3], nu[2]),
        }
    }

    pub fn extract_omega(self, om: &[f64; 4]) -> (f64, f64) {
        match self {
            HyperRow::NonElite => (om[0], om[1]),
            HyperRow::Elite => (om[3], om[2]),
        }
    }

    pub fn store_omega(self, om: &mut [f64; 4], value: (f64, f64)) {
        match self {
            HyperRow::NonElite => {
                om[0] = value.0;
                om[1] = value.1;
            }
            HyperRow::Elite => {
                om[3] = value.0;
                om[2] = value.1;
            }
        }
    }
}

/// Method-of-moments estimates for Dirichlet(a, b) from the sample mean
/// and (population) variance of the first coordinate:
/// a + b = mean(1 - mean)/var - 1, a/(a + b) = mean. Returns None when
/// the variance is zero or the implied concentration is not positive.
pub fn moment_estimates(first_coords: &[f64]) -> Option<(f64, f64)> {
    if first_coords.len() < 2 {
        return None;
    }
    let mu = mean(first_coords);
    let s2 = variance(first_coords);
    if !(s2 > 0.0) {
        return None;
    }
    let total = mu * (1.0 - mu) / s2 - 1.0;
    if !(total > 0.0) || !total.is_finite() {
        return None;
    }
    Some((mu * total, (1.0 - mu) * total))
}

/// Log conditional density of one hyperparameter pair given the player
/// rows at its position:
/// n_k [lnG(wa+wb) - lnG(wa) - lnG(wb)] + (wa-1) sum ln a_i + (wb-1) sum ln b_i.
pub fn hyper_log_density(wa: f64, wb: f64, n_k: f64, sum_ln_a: f64, sum_ln_b: f64) -> f64 {
    if !(wa > 0.0 && wb > 0.0) {
        return f64::NEG_INFINITY;
    }
    n_k * (ln_gamma(wa + wb) - ln_gamma(wa) - ln_gamma(wb))
        + (wa - 1.0) * sum_ln_a
        + (wb - 1.0) * sum_ln_b
}

#[derive(Debug, Clone, Copy)]
pub struct HyperOutcome {
    pub value: (f64, f64),
    pub accepted: bool,
    /// Method-of-moments proposal unavailable; a random walk was used.
    pub fallback: bool,
    /// Proposal was rejected by the propriety bounds.
    pub boundary: bool,
}

/// One MH update of a hyperparameter pair against the player rows
/// `values` (each an (a, b) simplex pair). Proposals at or below zero or
/// outside the propriety bounds are rejected outright.
pub fn sample_hyper_pair<R: Rng>(
    values: &[(f64, f64)],
    current: (f64, f64),
    scale: f64,
    rng: &mut R,
) -> HyperOutcome {
    let n_k = values.len() as f64;
    let sum_ln_a: f64 = values.iter().map(|v| v.0.ln()).sum();
    let sum_ln_b: f64 = values.iter().map(|v| v.1.ln()).sum();
    let first: Vec<f64> = values.iter().map(|v| v.0).collect();

    let mom = moment_estimates(&first);
    let fallback = mom.is_none();
    let center = mom.unwrap_or(current);
    if fallback {
        // Per-event logging is too chatty inside the scan; the fit report
        // surfaces the aggregate count.
        log::debug!(
            "hyper update: method-of-moments proposal undefined (n={}); random-walk fallback",
            values.len()
        );
    }

    let za: f64 = StandardNormal.sample(rng);
    let zb: f64 = StandardNormal.sample(rng);
    let prop = (center.0 + scale * za, center.1 + scale * zb);

    if prop.0 <= 0.0 || prop.1 <= 0.0 {
        return HyperOutcome {
            value: current,
            accepted: false,
            fallback,
            boundary: false,
        };
    }
    if prop.0 < OMEGA_MIN || prop.0 > OMEGA_MAX || prop.1 < OMEGA_MIN || prop.1 > OMEGA_MAX {
        return HyperOutcome {
            value: current,
            accepted: false,
            fallback,
            boundary: true,
        };
    }

    let mut log_accept = hyper_log_density(prop.0, prop.1, n_k, sum_ln_a, sum_ln_b)
        - hyper_log_density(current.0, current.1, n_k, sum_ln_a, sum_ln_b);
    if !fallback {
        // Independence proposal: include the proposal-density terms.
        let dq = |v: (f64, f64)| {
            let da = v.0 - center.0;
            let db = v.1 - center.1;
            (da * da + db * db) / (2.0 * scale * scale)
        };
        log_accept += dq(prop) - dq(current);
    }
    if log_accept >= 0.0 || rng.gen::<f64>().ln() < log_accept {
        HyperOutcome {
            value: prop,
            accepted: true,
            fallback,
            boundary: false,
        }
    } else {
        HyperOutcome {
            value: current,
            accepted: false,
            fallback,
            boundary: false,
        }
    }
}

/// Conjugate draw of every player's transition rows given the elite
/// indicators (aligned with `d.seasons`) and the position hyperparameters.
/// Career counts include the fixed non-elite start.
pub fn sample_player_transitions<R: Rng>(
    elite: &[bool],
    d: &Dataset,
    hyper: &PositionHyper,
    rng: &mut R,
) -> PlayerTransitions {
    assert_eq!(elite.len(), d.n_seasons());
    let mut out = Vec::with_capacity(d.n_players());
    for g in &d.players {
        let mut counts = [0.0f64; 4];
        let mut prev = 0usize;
        for t in g.range() {
            let e = usize::from(elite[t]);
            counts[prev * 2 + e] += 1.0;
            prev = e;
        }
        let k = d.seasons[g.start + g.len - 1].position;
        out.push(draw_transition_rows_with(&counts, &hyper[k], rng));
    }
    out
}

/// Fit the player-specific-transitions variant: the shared transition
/// step is replaced by per-player conjugate draws plus the hyperparameter
/// MH step.
pub fn run_gibbs_pshmm(d: &Dataset, h: &Hyperparams, cfg: &SamplerConfig) -> Result<Fit> {
    run_gibbs(d, h, Variant::Pshmm, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn moment_estimate_arithmetic() {
        // mean 0.5, variance 0.05: 0.5 * (0.25/0.05 - 1) = 2 on both sides.
        // A two-point sample {0.5 - d, 0.5 + d} has mean 0.5, variance d^2.
        let d = 0.05f64.sqrt();
        let (a, b) = moment_estimates(&[0.5 - d, 0.5 + d]).unwrap();
        assert!((a - 2.0).abs() < 1e-10, "a = {a}");
        assert!((b - 2.0).abs() < 1e-10, "b = {b}");
    }

    #[test]
    fn moment_estimate_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let vals: Vec<f64> = (0..20).map(|_| rng.gen_range(0.05..0.95)).collect();
            if let Some((a, b)) = moment_estimates(&vals) {
                let mu = mean(&vals);
                let s2 = variance(&vals);
                assert!((a + b - (mu * (1.0 - mu) / s2 - 1.0)).abs() < 1e-9);
                assert!((a / (a + b) - mu).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn moment_estimate_degenerate_cases() {
        assert!(moment_estimates(&[0.5]).is_none());
        assert!(moment_estimates(&[0.5, 0.5, 0.5]).is_none());
        // Variance at its Bernoulli maximum: implied concentration is 0.
        assert!(moment_estimates(&[0.0, 1.0]).is_none());
    }

    #[test]
    fn hyper_density_finite_on_interior() {
        for &(wa, wb) in &[(0.01, 0.01), (1.0, 1.0), (50.0, 3.0), (1e3, 1e3)] {
            let v = hyper_log_density(wa, wb, 30.0, -25.0, -60.0);
            assert!(v.is_finite(), "({wa}, {wb}) -> {v}");
        }
        assert!(hyper_log_density(-1.0, 1.0, 3.0, -1.0, -1.0).is_infinite());
    }

    #[test]
    fn out_of_bounds_proposals_rejected() {
        // Degenerate rows force the random-walk fallback; a huge scale
        // sends essentially every proposal out of bounds, so the chain
        // stays put.
        let values = vec![(0.7, 0.3); 5];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut current = (1.0, 1.0);
        let mut boundary_seen = false;
        for _ in 0..100 {
            let out = sample_hyper_pair(&values, current, 1e6, &mut rng);
            assert!(out.fallback);
            boundary_seen |= out.boundary;
            current = out.value;
            assert!(current.0 >= OMEGA_MIN && current.0 <= OMEGA_MAX);
            assert!(current.1 >= OMEGA_MIN && current.1 <= OMEGA_MAX);
        }
        assert!(boundary_seen);
    }

    #[test]
    fn hyper_posterior_recovers_truth() {
        // 200 player rows drawn from Dirichlet(3, 2); the hyper chain
        // should concentrate near (3, 2).
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let values: Vec<(f64, f64)> = (0..200)
            .map(|_| {
                let p = crate::sampler::transitions::draw_dirichlet2(3.0, 2.0, &mut rng);
                (p, 1.0 - p)
            })
            .collect();
        let mut current = (1.0, 1.0);
        let mut kept = Vec::new();
        for it in 0..4000 {
            let out = sample_hyper_pair(&values, current, 0.4, &mut rng);
            current = out.value;
            if it >= 500 {
                kept.push(current);
            }
        }
        let mean_a = mean(&kept.iter().map(|v| v.0).collect::<Vec<_>>());
        let mean_b = mean(&kept.iter().map(|v| v.1).collect::<Vec<_>>());
        assert!((mean_a - 3.0).abs() / 3.0 < 0.2, "mean_a = {mean_a}");
        assert!((mean_b - 2.0).abs() / 2.0 < 0.2, "mean_b = {mean_b}");
    }

    #[test]
    fn shrinkage_limit_concentrates_player_rows() {
        use crate::data::{PlayerGroup, PlayerSeason};
        let mut seasons = Vec::new();
        let mut players = Vec::new();
        for i in 0..40 {
            players.push(PlayerGroup {
                id: format!("p{i:02}"),
                start: i,
                len: 1,
            });
            seasons.push(PlayerSeason {
                player_id: format!("p{i:02}"),
                year: 2000,
                hr: 5,
                ab: 100,
                age: 27,
                park: 0,
                position: 0,
            });
        }
        let d = Dataset {
            seasons,
            players,
            parks: vec!["X".into()],
            year_range: (2000, 2000),
        };
        let elite = vec![false; 40];
        // Very concentrated hyper at mean 0.9 for the non-elite row.
        let hyper: PositionHyper = vec![[9.0e3, 1.0e3, 2.0e3, 8.0e3]; 9];
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let rows = sample_player_transitions(&elite, &d, &hyper, &mut rng);
        let nu00: Vec<f64> = rows.iter().map(|r| r[0]).collect();
        let sd = variance(&nu00).sqrt();
        assert!((mean(&nu00) - 0.9).abs() < 0.01);
        assert!(sd < 0.02, "sd = {sd}");
    }

    #[test]
    fn rookie_counts_single_initial_step() {
        use crate::data::{PlayerGroup, PlayerSeason};
        let d = Dataset {
            seasons: vec![PlayerSeason {
                player_id: "rook".into(),
                year: 2005,
                hr: 1,
                ab: 50,
                age: 22,
                park: 0,
                position: 2,
            }],
            players: vec![PlayerGroup {
                id: "rook".into(),
                start: 0,
                len: 1,
            }],
            parks: vec!["X".into()],
            year_range: (2005, 2005),
        };
        // Flat hyper, elite first season: the single count is the
        // initial 0 -> 1 step, so nu01 | data ~ Dirichlet-updated while
        // the elite row stays at its prior.
        let hyper: PositionHyper = vec![[1.0; 4]; 9];
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut acc01 = 0.0;
        let mut acc11 = 0.0;
        let n = 50_000;
        for _ in 0..n {
            let rows = sample_player_transitions(&[true], &d, &hyper, &mut rng);
            acc01 += rows[0][1];
            acc11 += rows[0][3];
        }
        // (nu00, nu01) ~ Dirichlet(1, 2): mean nu01 = 2/3. Elite row stays
        // Dirichlet(1, 1): mean 1/2.
        assert!((acc01 / n as f64 - 2.0 / 3.0).abs() < 0.01);
        assert!((acc11 / n as f64 - 0.5).abs() < 0.01);
    }

    #[test]
    fn posterior_mean_with_sticky_career() {
        // N00 = 9, N01 = 0, flat hyper: E[nu00] = 10/11.
        use crate::data::{PlayerGroup, PlayerSeason};
        let n_seasons = 9;
        let seasons: Vec<PlayerSeason> = (0..n_seasons)
            .map(|t| PlayerSeason {
                player_id: "vet".into(),
                year: 1995 + t as i32,
                hr: 2,
                ab: 100,
                age: 24 + t as i32,
                park: 0,
                position: 0,
            })
            .collect();
        let d = Dataset {
            seasons,
            players: vec![PlayerGroup {
                id: "vet".into(),
                start: 0,
                len: n_seasons,
            }],
            parks: vec!["X".into()],
            year_range: (1995, 2003),
        };
        let elite = vec![false; n_seasons];
        let hyper: PositionHyper = vec![[1.0; 4]; 9];
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let n = 100_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let rows = sample_player_transitions(&elite, &d, &hyper, &mut rng);
            acc += rows[0][0];
        }
        let meanv = acc / n as f64;
        let expect = 10.0 / 11.0;
        // Var of Dirichlet(10, 1) first coordinate over 1e5 draws.
        let se = (10.0 / (121.0 * 12.0) / n as f64).sqrt();
        assert!((meanv - expect).abs() < 4.0 * se, "mean {meanv}");
    }
}
