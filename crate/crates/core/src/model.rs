//! The joint probability model: binomial likelihood with a logit link,
//! elite/non-elite intercept mixture, two-state Markov transitions on the
//! elite indicators, and the prior layer.
//!
//! A season's home-run total is Binomial(ab, theta) with
//!
//! ```text
//! logit(theta) = alpha[position][elite] + beta[park] + f_position(age)
//! ```
//!
//! where f is a cubic B-spline trajectory per position group. Elite
//! indicators evolve as a Markov chain over a player's observed seasons,
//! starting from the fixed non-elite state before the first season.

use serde::{Deserialize, Serialize};

use crate::basis::{self, SplineBasis};
use crate::data::{Dataset, PlayerSeason};
use crate::error::{Error, Result};
use crate::num::{binomial_logpmf_logit, ln_dirichlet2_pdf, ln_normal_pdf, logistic};

/// Which model is being fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Nine position groups, elite mixture, shared per-position transitions.
    Full,
    /// Single intercept, no mixture/HMM; park effects and one global age
    /// curve are kept.
    NoPositionNoElite,
    /// Full model with player-specific transitions under position-level
    /// Dirichlet hyperpriors.
    Pshmm,
}

impl Variant {
    pub fn parse(s: &str) -> Result<Variant> {
        match s {
            "full" => Ok(Variant::Full),
            "no_position_no_elite" => Ok(Variant::NoPositionNoElite),
            "pshmm" => Ok(Variant::Pshmm),
            other => Err(Error::Usage(format!(
                "unknown variant `{other}` (expected full, no_position_no_elite, or pshmm)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoPositionNoElite => "no_position_no_elite",
            Variant::Pshmm => "pshmm",
        }
    }

    /// Number of intercept/trajectory groups (positions, or one pooled group).
    pub fn n_groups(&self) -> usize {
        match self {
            Variant::NoPositionNoElite => 1,
            _ => 9,
        }
    }

    pub fn has_elite(&self) -> bool {
        !matches!(self, Variant::NoPositionNoElite)
    }

    pub fn player_transitions(&self) -> bool {
        matches!(self, Variant::Pshmm)
    }

    pub fn group_of(&self, season: &PlayerSeason) -> usize {
        self.group_of_index(season.position)
    }

    pub fn group_of_index(&self, position: usize) -> usize {
        match self {
            Variant::NoPositionNoElite => 0,
            _ => position,
        }
    }
}

/// Transition row pair for a two-state chain, stored as
/// `[nu00, nu01, nu10, nu11]` with `nu00 + nu01 = 1` and `nu10 + nu11 = 1`.
pub type TransitionRows = [f64; 4];

pub fn transition_prob(nu: &TransitionRows, from: u8, to: u8) -> f64 {
    nu[usize::from(from) * 2 + usize::from(to)]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Hyperparams {
    /// Prior variance for intercepts, park effects, and spline coefficients.
    pub tau2: f64,
    /// Dirichlet concentration for the transition priors.
    pub omega: f64,
    pub basis: SplineBasis,
    /// Age at which fitted trajectories are pinned to zero so the
    /// intercepts carry the level.
    pub reference_age: f64,
}

impl Hyperparams {
    pub fn new(tau2: f64, omega: f64, basis: SplineBasis, reference_age: f64) -> Result<Self> {
        if tau2 <= 0.0 {
            return Err(Error::Argument(format!("tau2 must be positive, got {tau2}")));
        }
        if omega <= 0.0 {
            return Err(Error::Argument(format!("omega must be positive, got {omega}")));
        }
        Ok(Hyperparams {
            tau2,
            omega,
            basis,
            reference_age,
        })
    }

    /// Paper defaults over a given basis: tau2 = 10000, omega = 1.
    pub fn default_over(basis: SplineBasis, reference_age: f64) -> Self {
        Hyperparams {
            tau2: 10_000.0,
            omega: 1.0,
            basis,
            reference_age,
        }
    }
}

/// One full joint draw of the unknowns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    /// Non-elite intercept per group.
    pub alpha0: Vec<f64>,
    /// Elite intercept per group (unused when the variant has no mixture).
    pub alpha1: Vec<f64>,
    /// Park effect per park index.
    pub beta: Vec<f64>,
    /// Spline coefficients, `gamma[group][basis index]`.
    pub gamma: Vec<Vec<f64>>,
    /// Shared transition rows per group.
    pub nu: Vec<TransitionRows>,
    /// Elite indicator per season, aligned with `Dataset::seasons`.
    pub elite: Vec<bool>,
    /// Player-specific transition rows (PSHMM only).
    pub player_nu: Option<Vec<TransitionRows>>,
    /// Position-level Dirichlet hyperparameters (PSHMM only), stored as
    /// `[omega00, omega01, omega10, omega11]`.
    pub omega: Option<Vec<[f64; 4]>>,
}

impl ModelState {
    pub fn n_groups(&self) -> usize {
        self.alpha0.len()
    }

    /// Check the ordering, simplex, and finiteness invariants.
    pub fn check_invariants(&self, has_elite: bool) -> Result<()> {
        for k in 0..self.alpha0.len() {
            if !self.alpha0[k].is_finite() || !self.alpha1[k].is_finite() {
                return Err(Error::Sampler(format!("non-finite alpha at group {k}")));
            }
            if has_elite && !(self.alpha0[k] < self.alpha1[k]) {
                return Err(Error::Sampler(format!(
                    "alpha ordering violated at group {k}: {} >= {}",
                    self.alpha0[k], self.alpha1[k]
                )));
            }
        }
        if self.beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::Sampler("non-finite beta".into()));
        }
        if self.gamma.iter().flatten().any(|g| !g.is_finite()) {
            return Err(Error::Sampler("non-finite gamma".into()));
        }
        let check_rows = |nu: &TransitionRows| -> bool {
            nu.iter().all(|p| (0.0..=1.0).contains(p))
                && (nu[0] + nu[1] - 1.0).abs() < 1e-9
                && (nu[2] + nu[3] - 1.0).abs() < 1e-9
        };
        if has_elite {
            if !self.nu.iter().all(check_rows) {
                return Err(Error::Sampler("transition rows off the simplex".into()));
            }
            if let Some(pn) = &self.player_nu {
                if !pn.iter().all(check_rows) {
                    return Err(Error::Sampler("player transition rows off the simplex".into()));
                }
            }
            if let Some(om) = &self.omega {
                if om.iter().flatten().any(|w| !(*w > 0.0) || !w.is_finite()) {
                    return Err(Error::Sampler("non-positive omega hyperparameter".into()));
                }
            }
        }
        Ok(())
    }
}

/// Log-odds for one season under a given elite status.
pub fn linear_predictor(
    state: &ModelState,
    variant: Variant,
    basis: &SplineBasis,
    season: &PlayerSeason,
    elite: bool,
) -> f64 {
    let k = variant.group_of(season);
    let alpha = if elite { state.alpha1[k] } else { state.alpha0[k] };
    let f = basis::trajectory(&state.gamma[k], basis, f64::from(season.age))
        .expect("gamma length matches basis");
    alpha + state.beta[season.park] + f
}

/// Home-run rate for one season under a given elite status; strictly
/// inside (0, 1).
pub fn rate(
    state: &ModelState,
    variant: Variant,
    basis: &SplineBasis,
    season: &PlayerSeason,
    elite: bool,
) -> f64 {
    logistic(linear_predictor(state, variant, basis, season, elite))
}

/// Binomial log-likelihood of one season at its current elite indicator.
pub fn loglik_season(
    state: &ModelState,
    variant: Variant,
    basis: &SplineBasis,
    season: &PlayerSeason,
    elite: bool,
) -> f64 {
    let eta = linear_predictor(state, variant, basis, season, elite);
    binomial_logpmf_logit(season.hr, season.ab, eta)
}

/// log nu_{from,to} for one transition row pair.
pub fn log_transition(nu: &TransitionRows, from: u8, to: u8) -> f64 {
    transition_prob(nu, from, to).ln()
}

/// Log prior density of a state: Normal(0, tau2) terms for beta and gamma,
/// the truncated bivariate Normal for each intercept pair (the constant
/// log 2 from the truncation is dropped), and Dirichlet(omega, omega)
/// terms for each shared transition row.
pub fn log_prior(state: &ModelState, variant: Variant, h: &Hyperparams) -> f64 {
    let mut lp = 0.0;
    for k in 0..state.n_groups() {
        if variant.has_elite() {
            if !(state.alpha0[k] < state.alpha1[k]) {
                return f64::NEG_INFINITY;
            }
            lp += ln_normal_pdf(state.alpha0[k], 0.0, h.tau2);
            lp += ln_normal_pdf(state.alpha1[k], 0.0, h.tau2);
        } else {
            lp += ln_normal_pdf(state.alpha0[k], 0.0, h.tau2);
        }
    }
    for &b in &state.beta {
        lp += ln_normal_pdf(b, 0.0, h.tau2);
    }
    for g in state.gamma.iter().flatten() {
        lp += ln_normal_pdf(*g, 0.0, h.tau2);
    }
    if variant.has_elite() && !variant.player_transitions() {
        for nu in &state.nu {
            lp += ln_dirichlet2_pdf(nu[0], h.omega, h.omega);
            lp += ln_dirichlet2_pdf(nu[3], h.omega, h.omega);
        }
    }
    // PSHMM player rows are conditioned on the position hyperparameters,
    // which need the player -> position map; those terms live in
    // log_posterior. The hyperprior on omega is flat.
    lp
}

/// Full log posterior over a dataset, up to an additive constant:
/// season likelihoods + transition terms over each player's career
/// (including the fixed non-elite start) + the prior.
pub fn log_posterior(state: &ModelState, d: &Dataset, variant: Variant, h: &Hyperparams) -> f64 {
    let mut lp = 0.0;
    for (s, &e) in d.seasons.iter().zip(state.elite.iter()) {
        lp += loglik_season(state, variant, h.basis(), s, e);
        if !lp.is_finite() {
            return f64::NEG_INFINITY;
        }
    }
    if variant.has_elite() {
        for (i, g) in d.players.iter().enumerate() {
            let mut prev = 0u8;
            for t in g.range() {
                let season = &d.seasons[t];
                let e = u8::from(state.elite[t]);
                let nu = match &state.player_nu {
                    Some(pn) => &pn[i],
                    None => &state.nu[variant.group_of(season)],
                };
                lp += log_transition(nu, prev, e);
                prev = e;
            }
        }
        if variant.player_transitions() {
            if let (Some(pn), Some(om)) = (&state.player_nu, &state.omega) {
                for (i, g) in d.players.iter().enumerate() {
                    let last = &d.seasons[g.start + g.len - 1];
                    let k = variant.group_of(last);
                    lp += ln_dirichlet2_pdf(pn[i][0], om[k][0], om[k][1]);
                    lp += ln_dirichlet2_pdf(pn[i][3], om[k][3], om[k][2]);
                }
            }
        }
    }
    lp + log_prior(state, variant, h)
}

impl Hyperparams {
    pub fn basis(&self) -> &SplineBasis {
        &self.basis
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::make_basis;
    use crate::num::logit;

    fn season(hr: u32, ab: u32, age: i32, park: usize, position: usize) -> PlayerSeason {
        PlayerSeason {
            player_id: "p".into(),
            year: 2000,
            hr,
            ab,
            age,
            park,
            position,
        }
    }

    fn flat_state(n_parks: usize) -> ModelState {
        ModelState {
            alpha0: vec![0.0; 9],
            alpha1: vec![1.0; 9],
            beta: vec![0.0; n_parks],
            gamma: vec![vec![0.0; 4]; 9],
            nu: vec![[0.9, 0.1, 0.2, 0.8]; 9],
            elite: vec![],
            player_nu: None,
            omega: None,
        }
    }

    fn hyper() -> Hyperparams {
        Hyperparams::default_over(make_basis(20.0, 49.0, &[]).unwrap(), 30.0)
    }

    #[test]
    fn rate_reference_values() {
        let h = hyper();
        let mut st = flat_state(1);
        let s = season(5, 100, 30, 0, 2);
        assert_eq!(rate(&st, Variant::Full, h.basis(), &s, false), 0.5);

        st.alpha0[2] = -3.0;
        let r = rate(&st, Variant::Full, h.basis(), &s, false);
        assert!((r - 1.0 / (1.0 + 3.0f64.exp())).abs() < 1e-12);
        assert!((r - 0.04742587317756678).abs() < 1e-10);

        // Degenerate mixture: equal intercepts give equal rates.
        st.alpha1[2] = -3.0;
        let r1 = rate(&st, Variant::Full, h.basis(), &s, true);
        assert_eq!(r, r1);
    }

    #[test]
    fn rate_monotone_in_alpha_and_beta() {
        let h = hyper();
        let s = season(5, 100, 28, 0, 4);
        let mut st = flat_state(1);
        let mut last = 0.0;
        for i in 0..10 {
            st.alpha0[4] = -4.0 + 0.5 * i as f64;
            let r = rate(&st, Variant::Full, h.basis(), &s, false);
            assert!(r > last);
            last = r;
        }
        st.alpha0[4] = -2.0;
        st.alpha1[4] = -1.0;
        let r0 = rate(&st, Variant::Full, h.basis(), &s, false);
        let r1 = rate(&st, Variant::Full, h.basis(), &s, true);
        assert!(r1 > r0);
    }

    #[test]
    fn loglik_reference_values() {
        let h = hyper();
        let mut st = flat_state(1);
        // theta = 0.5, one success in two trials: 2 * 0.25 = 0.5.
        let s = season(1, 2, 30, 0, 0);
        let ll = loglik_season(&st, Variant::Full, h.basis(), &s, false);
        assert!((ll - 0.5f64.ln()).abs() < 1e-12);

        // Empty season contributes zero.
        let s0 = season(0, 0, 30, 0, 0);
        assert_eq!(loglik_season(&st, Variant::Full, h.basis(), &s0, false), 0.0);

        // Bonds 2001 at the empirical rate, against a directly summed pmf.
        let theta = 73.0 / 664.0;
        st.alpha0[4] = logit(theta);
        let s = season(73, 664, 36, 0, 4);
        let got = loglik_season(&st, Variant::Full, h.basis(), &s, false);
        let mut direct = 0.0;
        for i in 0..73u32 {
            direct += f64::from(664 - i).ln() - f64::from(i + 1).ln();
        }
        direct += 73.0 * theta.ln() + 591.0 * (1.0 - theta).ln();
        assert!((got - direct).abs() < 1e-10);
    }

    #[test]
    fn log_transition_cases() {
        let nu = [1.0, 0.0, 0.2, 0.8];
        assert!(log_transition(&nu, 0, 1).is_infinite());
        let nu = [0.9, 0.1, 0.2, 0.8];
        assert!((log_transition(&nu, 0, 0) - 0.9f64.ln()).abs() < 1e-15);
        let uniform = [0.5, 0.5, 0.5, 0.5];
        for from in 0..2u8 {
            for to in 0..2u8 {
                assert_eq!(log_transition(&uniform, from, to), 0.5f64.ln());
            }
        }
    }

    #[test]
    fn log_prior_matches_component_oracle() {
        let h = hyper();
        let mut st = flat_state(3);
        for k in 0..9 {
            st.alpha0[k] = -0.01;
            st.alpha1[k] = 0.01;
        }
        st.beta = vec![0.3, -0.2, 0.05];
        st.gamma[2][1] = 0.7;
        let got = log_prior(&st, Variant::Full, &h);

        // Independent recomputation from scalar densities.
        let tau2 = h.tau2;
        let normal = |x: f64| {
            -0.5 * ((x * x) / tau2 + tau2.ln() + (2.0 * std::f64::consts::PI).ln())
        };
        let mut want = 0.0;
        for k in 0..9 {
            want += normal(st.alpha0[k]) + normal(st.alpha1[k]);
        }
        for &b in &st.beta {
            want += normal(b);
        }
        for g in st.gamma.iter().flatten() {
            want += normal(*g);
        }
        // omega = 1: Dirichlet terms vanish.
        assert!((got - want).abs() < 1e-10);
        assert!(got.is_finite());

        st.alpha0[4] = 2.0;
        st.alpha1[4] = 1.0;
        assert!(log_prior(&st, Variant::Full, &h).is_infinite());
    }

    #[test]
    fn log_posterior_decomposes_and_doubles() {
        let h = hyper();
        let mut st = flat_state(1);
        st.elite = vec![false];
        let d = Dataset {
            seasons: vec![season(3, 50, 28, 0, 1)],
            players: vec![crate::data::PlayerGroup {
                id: "p".into(),
                start: 0,
                len: 1,
            }],
            parks: vec!["X".into()],
            year_range: (2000, 2000),
        };
        let lp = log_posterior(&st, &d, Variant::Full, &h);
        let want = loglik_season(&st, Variant::Full, h.basis(), &d.seasons[0], false)
            + log_transition(&st.nu[1], 0, 0)
            + log_prior(&st, Variant::Full, &h);
        assert!((lp - want).abs() < 1e-12);

        // Doubling the dataset doubles the data terms exactly.
        let mut d2 = d.clone();
        d2.seasons.push(season(3, 50, 28, 0, 1));
        d2.seasons[1].player_id = "q".into();
        d2.players.push(crate::data::PlayerGroup {
            id: "q".into(),
            start: 1,
            len: 1,
        });
        let mut st2 = st.clone();
        st2.elite = vec![false, false];
        let lp2 = log_posterior(&st2, &d2, Variant::Full, &h);
        let prior = log_prior(&st, Variant::Full, &h);
        assert!(((lp2 - prior) - 2.0 * (lp - prior)).abs() < 1e-10);
    }

    #[test]
    fn log_posterior_matches_brute_force_product() {
        // Three players, mixed careers, nontrivial parameters; oracle is a
        // direct product-form evaluation written without the library's
        // linear-predictor plumbing.
        let h = hyper();
        let basis = h.basis().clone();
        let mut st = flat_state(2);
        for k in 0..9 {
            st.alpha0[k] = -3.0 + 0.1 * k as f64;
            st.alpha1[k] = st.alpha0[k] + 0.8;
            st.nu[k] = [0.85, 0.15, 0.3, 0.7];
        }
        st.beta = vec![0.1, -0.2];
        for k in 0..9 {
            st.gamma[k] = vec![0.05, -0.1, 0.2, -0.3];
        }

        let seasons = vec![
            season(10, 400, 24, 0, 0),
            season(20, 450, 25, 1, 0),
            season(5, 300, 30, 1, 3),
            season(30, 500, 31, 0, 3),
            season(25, 480, 32, 0, 3),
            season(2, 200, 27, 1, 8),
        ];
        let d = Dataset {
            seasons,
            players: vec![
                crate::data::PlayerGroup { id: "a".into(), start: 0, len: 2 },
                crate::data::PlayerGroup { id: "b".into(), start: 2, len: 3 },
                crate::data::PlayerGroup { id: "c".into(), start: 5, len: 1 },
            ],
            parks: vec!["P0".into(), "P1".into()],
            year_range: (2000, 2002),
        };
        st.elite = vec![false, true, false, true, true, false];

        let got = log_posterior(&st, &d, Variant::Full, &h);

        // Oracle.
        let mut want = 0.0;
        for (idx, s) in d.seasons.iter().enumerate() {
            let e = st.elite[idx];
            let a = if e { st.alpha1[s.position] } else { st.alpha0[s.position] };
            let w = crate::basis::eval_basis(&basis, f64::from(s.age));
            let f: f64 = w.iter().zip(&st.gamma[s.position]).map(|(x, g)| x * g).sum();
            let eta: f64 = a + st.beta[s.park] + f;
            let theta = 1.0 / (1.0 + (-eta).exp());
            want += crate::num::ln_choose(s.ab, s.hr)
                + f64::from(s.hr) * theta.ln()
                + f64::from(s.ab - s.hr) * (1.0 - theta).ln();
        }
        for g in &d.players {
            let mut prev = 0usize;
            for t in g.range() {
                let e = usize::from(st.elite[t]);
                let nu = st.nu[d.seasons[t].position];
                want += nu[prev * 2 + e].ln();
                prev = e;
            }
        }
        want += log_prior(&st, Variant::Full, &h);
        assert!((got - want).abs() < 1e-10, "got {got}, want {want}");
    }

    #[test]
    fn posterior_differences_drop_constants() {
        // MH consumes differences; adding the binomial coefficient and the
        // truncation constant to both sides cancels. Differences computed
        // from log_posterior must equal differences of a fully normalized
        // density, which differ only by state-independent constants.
        let h = hyper();
        let d = Dataset {
            seasons: vec![season(7, 120, 26, 0, 5), season(9, 140, 27, 0, 5)],
            players: vec![crate::data::PlayerGroup { id: "p".into(), start: 0, len: 2 }],
            parks: vec!["X".into()],
            year_range: (2000, 2001),
        };
        let mut a = flat_state(1);
        a.elite = vec![false, false];
        let mut b = a.clone();
        b.alpha0[5] = -2.5;
        let diff = log_posterior(&b, &d, Variant::Full, &h) - log_posterior(&a, &d, Variant::Full, &h);
        // Normalized version: add ln 2 per intercept pair (truncation
        // constant) to both; the difference is unchanged.
        let norm = 9.0 * 2.0f64.ln();
        let diff_norm = (log_posterior(&b, &d, Variant::Full, &h) + norm)
            - (log_posterior(&a, &d, Variant::Full, &h) + norm);
        assert_eq!(diff, diff_norm);
    }
}
