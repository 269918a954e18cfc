//! Generative simulation from the model plus the brute-force oracles that
//! anchor the sampler's correctness tests: exhaustive path enumeration for
//! the elite chain, one-dimensional quadrature for conditional posteriors,
//! and the data-resimulating joint-distribution (prior-recovery) harness.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use statrs::distribution::{Beta, ContinuousCDF, Normal};

use crate::basis::{eval_basis, make_basis, SplineBasis};
use crate::data::{Dataset, PlayerGroup, PlayerSeason, POSITIONS};
use crate::error::{Error, Result};
use crate::model::{Hyperparams, TransitionRows, Variant};
use crate::num::logistic;
use crate::sampler::engine::{FitData, GibbsEngine};
use crate::sampler::SamplerConfig;

/// Covariate schedule for one simulated player.
#[derive(Debug, Clone)]
pub struct PlayerSchedule {
    pub id: String,
    pub position: usize,
    pub park: usize,
    pub start_age: i32,
    pub n_seasons: usize,
}

/// A complete generative parameter set plus the covariate schedules.
#[derive(Debug, Clone)]
pub struct TrueParams {
    pub alpha0: Vec<f64>,
    pub alpha1: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma: Vec<Vec<f64>>,
    pub nu: Vec<TransitionRows>,
    pub basis: SplineBasis,
    pub reference_age: f64,
    pub parks: Vec<String>,
    pub schedule: Vec<PlayerSchedule>,
    pub ab_range: (u32, u32),
    pub start_year: i32,
}

impl TrueParams {
    /// Desk-scale default: `n_players` careers of `n_seasons` seasons each,
    /// spread over all nine positions and `n_parks` parks, with at-bats
    /// uniform in [200, 600] and start ages cycling over [22, 28]. The
    /// truth is generated in canonical form (trajectories zero at the
    /// reference age, park effects centered) so fitted posterior means are
    /// directly comparable.
    pub fn desk_default(n_players: usize, n_seasons: usize, n_parks: usize, seed: u64) -> TrueParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let parks: Vec<String> = (0..n_parks).map(|i| format!("PK{i:02}")).collect();
        let mut schedule = Vec::with_capacity(n_players);
        for i in 0..n_players {
            // Positions round-robin for balance; parks and start ages are
            // drawn at random so the position-by-park incidence graph is
            // connected and the level split stays identified.
            schedule.push(PlayerSchedule {
                id: format!("p{i:04}"),
                position: i % 9,
                park: rng.gen_range(0..n_parks),
                start_age: rng.gen_range(22..=28),
                n_seasons,
            });
        }
        let ages: Vec<i32> = schedule
            .iter()
            .flat_map(|p| (0..p.n_seasons).map(|t| p.start_age + t as i32))
            .collect();
        let age_lo = *ages.iter().min().unwrap();
        let age_hi = *ages.iter().max().unwrap();
        let mut sorted = ages.clone();
        sorted.sort_unstable();
        let reference_age = f64::from(sorted[(sorted.len() - 1) / 2]);
        let basis = make_basis(f64::from(age_lo), f64::from(age_hi), &[]).unwrap();

        let alpha0: Vec<f64> = (0..9).map(|k| -3.8 + 0.1 * k as f64).collect();
        let alpha1: Vec<f64> = alpha0.iter().map(|a| a + 1.0).collect();
        let mut beta: Vec<f64> = (0..n_parks).map(|_| 0.15 * standard_normal(&mut rng)).collect();
        let bbar = beta.iter().sum::<f64>() / beta.len() as f64;
        for b in beta.iter_mut() {
            *b -= bbar;
        }
        let ref_w = eval_basis(&basis, reference_age);
        let gamma: Vec<Vec<f64>> = (0..9)
            .map(|k| {
                let mut g = vec![
                    -0.45 + 0.05 * (k % 3) as f64,
                    0.20,
                    0.05,
                    -0.60 + 0.04 * (k % 4) as f64,
                ];
                let level: f64 = g.iter().zip(&ref_w).map(|(gi, w)| gi * w).sum();
                for gi in g.iter_mut() {
                    *gi -= level;
                }
                g
            })
            .collect();
        // Transition rows with enough elite mass that each position sees a
        // few hundred transitions out of both states over the default
        // schedule; realized frequencies then pin the rows tightly.
        let nu: Vec<TransitionRows> = (0..9)
            .map(|k| {
                let nu00 = 0.82 - 0.01 * (k % 3) as f64;
                let nu11 = 0.85 + 0.01 * (k % 4) as f64;
                [nu00, 1.0 - nu00, 1.0 - nu11, nu11]
            })
            .collect();

        TrueParams {
            alpha0,
            alpha1,
            beta,
            gamma,
            nu,
            basis,
            reference_age,
            parks,
            schedule,
            ab_range: (200, 600),
            start_year: 1990,
        }
    }

    pub fn hyperparams(&self) -> Hyperparams {
        Hyperparams::default_over(self.basis.clone(), self.reference_age)
    }

    fn eta(&self, position: usize, elite: bool, park: usize, age: f64) -> f64 {
        let alpha = if elite { self.alpha1[position] } else { self.alpha0[position] };
        let w = eval_basis(&self.basis, age);
        let traj: f64 = w.iter().zip(&self.gamma[position]).map(|(x, g)| x * g).sum();
        alpha + self.beta[park] + traj
    }
}

fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    rand_distr::StandardNormal.sample(rng)
}

/// A simulated training set with its latent truth.
#[derive(Debug, Clone)]
pub struct SimOutput {
    pub dataset: Dataset,
    /// True elite indicator per season, aligned with `dataset.seasons`.
    pub elite: Vec<bool>,
    /// True rate per season.
    pub theta: Vec<f64>,
}

/// Run the generative model: for each player the elite chain starts
/// non-elite and steps through the position's transition rows; each
/// season's total is Binomial(ab, theta).
pub fn simulate<R: Rng>(tp: &TrueParams, rng: &mut R) -> SimOutput {
    let mut seasons = Vec::new();
    let mut players = Vec::new();
    let mut elite = Vec::new();
    let mut theta = Vec::new();
    for p in &tp.schedule {
        let start = seasons.len();
        let mut e_prev = false;
        for t in 0..p.n_seasons {
            let row = &tp.nu[p.position];
            let p_elite = row[usize::from(e_prev) * 2 + 1];
            let e = rng.gen::<f64>() < p_elite;
            let age = p.start_age + t as i32;
            let ab = rng.gen_range(tp.ab_range.0..=tp.ab_range.1);
            let th = logistic(tp.eta(p.position, e, p.park, f64::from(age)));
            let hr = Binomial::new(u64::from(ab), th).unwrap().sample(rng) as u32;
            seasons.push(PlayerSeason {
                player_id: p.id.clone(),
                year: tp.start_year + t as i32,
                hr,
                ab,
                age,
                park: p.park,
                position: p.position,
            });
            elite.push(e);
            theta.push(th);
            e_prev = e;
        }
        players.push(PlayerGroup {
            id: p.id.clone(),
            start,
            len: p.n_seasons,
        });
    }
    let year_range = (
        tp.start_year,
        tp.start_year + tp.schedule.iter().map(|p| p.n_seasons).max().unwrap_or(1) as i32 - 1,
    );
    SimOutput {
        dataset: Dataset {
            seasons,
            players,
            parks: tp.parks.clone(),
            year_range,
        },
        elite,
        theta,
    }
}

/// One simulated hold-out season per player, advanced one step from the
/// end of the training simulation.
#[derive(Debug, Clone)]
pub struct NextSeason {
    pub player_id: String,
    pub year: i32,
    pub age: i32,
    pub park: String,
    pub position: String,
    pub ab: u32,
    pub hr: u32,
    pub theta: f64,
    pub elite: bool,
}

pub fn simulate_next_season<R: Rng>(tp: &TrueParams, sim: &SimOutput, rng: &mut R) -> Vec<NextSeason> {
    let mut out = Vec::with_capacity(tp.schedule.len());
    for (i, p) in tp.schedule.iter().enumerate() {
        let g = &sim.dataset.players[i];
        let last_elite = sim.elite[g.start + g.len - 1];
        let row = &tp.nu[p.position];
        let e = rng.gen::<f64>() < row[usize::from(last_elite) * 2 + 1];
        let age = p.start_age + p.n_seasons as i32;
        let ab = rng.gen_range(tp.ab_range.0..=tp.ab_range.1);
        let th = logistic(tp.eta(p.position, e, p.park, f64::from(age)));
        let hr = Binomial::new(u64::from(ab), th).unwrap().sample(rng) as u32;
        out.push(NextSeason {
            player_id: p.id.clone(),
            year: tp.start_year + p.n_seasons as i32,
            age,
            park: tp.parks[p.park].clone(),
            position: POSITIONS[p.position].to_string(),
            ab,
            hr,
            theta: th,
            elite: e,
        });
    }
    out
}

/// Exact elite-path posterior of one player by direct enumeration.
#[derive(Debug, Clone)]
pub struct ElitePosterior {
    /// p(E_t | observations up to t), per season.
    pub filtered: Vec<[f64; 2]>,
    /// p(E_t | all observations), per season.
    pub smoothed: Vec<[f64; 2]>,
    /// Every path with its exact posterior probability.
    pub paths: Vec<(Vec<bool>, f64)>,
}

/// Enumerate all 2^n elite paths of a career. Inputs mirror the FFBS
/// contract: `loglik[t]` is the observation log-likelihood pair of season
/// t, `rows[t]` the transition row pair entering season t (from the fixed
/// non-elite start for t = 0). Independent of the FFBS implementation:
/// plain product-form evaluation and normalization.
pub fn enumerate_elite_posterior(
    loglik: &[[f64; 2]],
    rows: &[TransitionRows],
) -> Result<ElitePosterior> {
    let n = loglik.len();
    if n == 0 {
        return Err(Error::Argument("empty career".into()));
    }
    if n > 20 {
        return Err(Error::Argument(format!(
            "enumeration over 2^{n} paths refused (limit n = 20)"
        )));
    }
    assert_eq!(rows.len(), n);

    let log_path_weight = |bits: u32, len: usize| -> f64 {
        let mut prev = 0usize;
        let mut acc = 0.0;
        for t in 0..len {
            let e = ((bits >> t) & 1) as usize;
            acc += rows[t][prev * 2 + e].ln() + loglik[t][e];
            prev = e;
        }
        acc
    };
    let normalize = |logw: &mut [f64]| {
        let mx = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for w in logw.iter_mut() {
            *w = (*w - mx).exp();
            z += *w;
        }
        for w in logw.iter_mut() {
            *w /= z;
        }
    };

    // Filtered marginals from prefix enumerations.
    let mut filtered = Vec::with_capacity(n);
    for t in 1..=n {
        let mut logw: Vec<f64> = (0..1u32 << t).map(|bits| log_path_weight(bits, t)).collect();
        normalize(&mut logw);
        let p1: f64 = (0..1u32 << t)
            .filter(|bits| (bits >> (t - 1)) & 1 == 1)
            .map(|bits| logw[bits as usize])
            .sum();
        filtered.push([1.0 - p1, p1]);
    }

    // Full-path posterior and smoothed marginals.
    let mut logw: Vec<f64> = (0..1u32 << n).map(|bits| log_path_weight(bits, n)).collect();
    normalize(&mut logw);
    let mut smoothed = vec![[0.0f64; 2]; n];
    let mut paths = Vec::with_capacity(1 << n);
    for bits in 0..1u32 << n {
        let p = logw[bits as usize];
        let path: Vec<bool> = (0..n).map(|t| (bits >> t) & 1 == 1).collect();
        for (t, &e) in path.iter().enumerate() {
            smoothed[t][usize::from(e)] += p;
        }
        paths.push((path, p));
    }
    Ok(ElitePosterior {
        filtered,
        smoothed,
        paths,
    })
}

/// Mean and variance of a one-dimensional density given by its log, via
/// composite Simpson integration on successively refined grids.
pub fn quadrature_posterior_1d(
    logdens: impl Fn(f64) -> f64,
    lo: f64,
    hi: f64,
) -> Result<(f64, f64)> {
    if !(lo < hi) {
        return Err(Error::Argument(format!("bad quadrature bounds [{lo}, {hi}]")));
    }
    let mut prev: Option<(f64, f64)> = None;
    let mut n = 512usize;
    loop {
        let h = (hi - lo) / n as f64;
        let mut fvals = Vec::with_capacity(n + 1);
        let mut fmax = f64::NEG_INFINITY;
        for i in 0..=n {
            let v = logdens(lo + h * i as f64);
            fmax = fmax.max(v);
            fvals.push(v);
        }
        if !fmax.is_finite() {
            return Err(Error::Argument("density not finite on bounds".into()));
        }
        let (mut z0, mut z1, mut z2) = (0.0, 0.0, 0.0);
        for (i, f) in fvals.iter().enumerate() {
            let w = if i == 0 || i == n {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            let x = lo + h * i as f64;
            let g = w * (f - fmax).exp();
            z0 += g;
            z1 += g * x;
            z2 += g * x * x;
        }
        let mean = z1 / z0;
        let var = z2 / z0 - mean * mean;
        if let Some((pm, pv)) = prev {
            if (mean - pm).abs() < 1e-11 && (var - pv).abs() < 1e-11 {
                // Mass-at-boundary check: endpoint density must be
                // negligible relative to the peak.
                let rel_lo = (fvals[0] - fmax).exp();
                let rel_hi = (fvals[n] - fmax).exp();
                if rel_lo > 1e-10 || rel_hi > 1e-10 {
                    return Err(Error::Argument(format!(
                        "density mass at quadrature boundary ({rel_lo:.2e}, {rel_hi:.2e}); widen bounds"
                    )));
                }
                return Ok((mean, var));
            }
        }
        prev = Some((mean, var));
        n *= 2;
        if n > 1 << 21 {
            return Err(Error::Argument("quadrature failed to converge".into()));
        }
    }
}

/// Probability-integral-transformed posterior samples of every tracked
/// parameter from the data-resimulating chain. Under a correct sampler
/// each coordinate is uniform on (0, 1).
#[derive(Debug, Clone)]
pub struct GewekeSamples {
    pub names: Vec<String>,
    pub pit: Vec<Vec<f64>>,
}

/// Build a small covariate schedule for the joint-distribution check:
/// players spread over all positions and two parks, fixed at-bats.
pub fn geweke_schedule(n_players: usize, n_seasons: usize, ab: u32) -> Dataset {
    let mut seasons = Vec::new();
    let mut players = Vec::new();
    for i in 0..n_players {
        let start = seasons.len();
        for t in 0..n_seasons {
            seasons.push(PlayerSeason {
                player_id: format!("g{i:03}"),
                year: 2000 + t as i32,
                hr: 0,
                ab,
                age: 23 + (i % 5) as i32 + t as i32,
                park: i % 2,
                position: i % 9,
            });
        }
        players.push(PlayerGroup {
            id: format!("g{i:03}"),
            start,
            len: n_seasons,
        });
    }
    Dataset {
        seasons,
        players,
        parks: vec!["GA".into(), "GB".into()],
        year_range: (2000, 2000 + n_seasons as i32 - 1),
    }
}

/// Successive-conditional simulator: alternate one Gibbs sweep given the
/// data with a re-draw of the data given the parameters. The stationary
/// law of the parameters is exactly the prior, so the PIT of each
/// coordinate against its prior CDF must be uniform.
pub fn run_geweke(
    d: &Dataset,
    h: &Hyperparams,
    sweeps: usize,
    burn: usize,
    thin: usize,
    seed: u64,
) -> Result<GewekeSamples> {
    let variant = Variant::Full;
    let data = FitData::prepare(d, h, variant);
    let cfg = SamplerConfig {
        n_chains: 1,
        n_iter: sweeps,
        burn_in: burn,
        thin,
        seed,
        ..SamplerConfig::default()
    };
    let mut eng = GibbsEngine::new(&data, variant, h, &cfg, 0);
    let tau = h.tau2.sqrt();
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let beta_prior = Beta::new(h.omega, h.omega).expect("valid Beta prior");

    let mut names = Vec::new();
    for k in 0..9 {
        names.push(format!("alpha0[{k}]"));
        names.push(format!("alpha1[{k}]"));
    }
    for b in 0..d.n_parks() {
        names.push(format!("beta[{b}]"));
    }
    for k in 0..9 {
        for l in 0..h.basis().n_basis() {
            names.push(format!("gamma[{k}][{l}]"));
        }
    }
    for k in 0..9 {
        names.push(format!("nu00[{k}]"));
        names.push(format!("nu11[{k}]"));
    }
    let mut pit: Vec<Vec<f64>> = vec![Vec::new(); names.len()];

    for iter in 1..=sweeps {
        eng.sweep()
            .map_err(|e| Error::Sampler(format!("geweke sweep {iter}: {e}")))?;
        eng.resimulate_observations();
        if iter <= burn && iter % cfg.adapt_window == 0 {
            eng.adapt();
        }
        if iter > burn && (iter - burn) % thin == 0 {
            let mut col = 0;
            for k in 0..9 {
                // Ordered pair of iid normals: F_min = 2F - F^2, F_max = F^2.
                let f0 = std_normal.cdf(eng.alpha0[k] / tau);
                let f1 = std_normal.cdf(eng.alpha1[k] / tau);
                pit[col].push(2.0 * f0 - f0 * f0);
                pit[col + 1].push(f1 * f1);
                col += 2;
            }
            for b in 0..eng.beta.len() {
                pit[col].push(std_normal.cdf(eng.beta[b] / tau));
                col += 1;
            }
            for g in 0..eng.gamma.len() {
                pit[col].push(std_normal.cdf(eng.gamma[g] / tau));
                col += 1;
            }
            for k in 0..9 {
                pit[col].push(beta_prior.cdf(eng.nu[k][0]));
                pit[col + 1].push(beta_prior.cdf(eng.nu[k][3]));
                col += 2;
            }
            debug_assert_eq!(col, names.len());
        }
    }
    Ok(GewekeSamples { names, pit })
}

/// Two-sided Kolmogorov-Smirnov statistic against U(0, 1).
pub fn ks_statistic_uniform(sample: &[f64]) -> f64 {
    let mut v = sample.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len() as f64;
    let mut d: f64 = 0.0;
    for (i, x) in v.iter().enumerate() {
        let lo = i as f64 / n;
        let hi = (i + 1) as f64 / n;
        d = d.max((x - lo).abs()).max((hi - x).abs());
    }
    d
}

/// Asymptotic Kolmogorov p-value with the Stephens small-sample
/// correction.
pub fn ks_pvalue(d: f64, n: usize) -> f64 {
    let n = n as f64;
    let lambda = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
    let mut p = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        p += if k % 2 == 1 { 2.0 * term } else { -2.0 * term };
        if term < 1e-16 {
            break;
        }
    }
    p.clamp(0.0, 1.0)
}
