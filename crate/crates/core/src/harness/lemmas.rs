//! Randomized checks of the stability lemmas, each reported with its
//! violation count and worst margin (negative margin means violated).

use std::fmt;

use rand::Rng;
use rayon::prelude::*;

use crate::error::Result;
use crate::matrix::{ordering_contraction, spectral_norm, spectral_radius, woodbury_residual, Mat, SymMat};
use crate::model::{closed_loop, random_stabilizable, LqProblem, Policy};
use crate::oracle::{solve_default, OracleSolution};
use crate::rng::indexed_rng;

pub const WOODBURY_TOL: f64 = 1e-9;
pub const CONTRACTION_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct LemmaCheck {
    pub name: String,
    pub trials: usize,
    pub violations: usize,
    /// Smallest margin over all trials, `None` when there were none.
    pub worst_margin: Option<f64>,
}

impl LemmaCheck {
    /// Aggregates per-trial `(margin, violated)` pairs in order.
    pub fn from_trials(name: &str, trials: impl IntoIterator<Item = (f64, bool)>) -> Self {
        let mut check = LemmaCheck {
            name: name.into(),
            trials: 0,
            violations: 0,
            worst_margin: None,
        };
        for (margin, violated) in trials {
            check.trials += 1;
            check.violations += usize::from(violated);
            check.worst_margin = Some(check.worst_margin.map_or(margin, |w| w.min(margin)));
        }
        check
    }

    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LemmaReport {
    pub checks: Vec<LemmaCheck>,
}

impl LemmaReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(LemmaCheck::passed)
    }

    pub fn get(&self, name: &str) -> Option<&LemmaCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

impl fmt::Display for LemmaReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            let worst = c.worst_margin.map(|m| format!("{m:.3e}")).unwrap_or_else(|| "-".into());
            writeln!(
                f,
                "{:<20} {:<4} trials {:>6}  violations {:>5}  worst margin {worst}",
                c.name,
                if c.passed() { "ok" } else { "FAIL" },
                c.trials,
                c.violations,
            )?;
        }
        Ok(())
    }
}

/// `1e-9 − ‖(R+GᵀΠG)⁻¹GᵀΠ − R⁻¹Gᵀ(GR⁻¹Gᵀ+Π⁻¹)⁻¹‖`.
pub fn check_woodbury(r: &SymMat, g: &Mat, pi: &SymMat) -> Result<(f64, bool)> {
    let margin = WOODBURY_TOL - woodbury_residual(r, g, pi)?;
    Ok((margin, margin < 0.0))
}

/// `1 + 1e-10 − ρ(A⁻¹B)`. Meant for pairs with `A ⪰ B`; any other pair is
/// expected to show up as a violation.
pub fn check_ordering_pair(a: &SymMat, b: &SymMat) -> Result<(f64, bool)> {
    let margin = 1.0 + CONTRACTION_TOL - ordering_contraction(a, b)?;
    Ok((margin, margin < 0.0))
}

/// `q − ‖F + G L_Π‖` for the greedy gain of `Π`; strict inequality required.
pub fn check_gain_stability(prob: &LqProblem, pi: &SymMat) -> Result<(f64, bool)> {
    let cl = closed_loop(prob, &Policy::greedy(prob, pi)?)?;
    let margin = prob.growth_bound() - spectral_norm(&cl)?;
    Ok((margin, margin <= 0.0))
}

/// `q − ‖F + G L*‖` (or `q − ρ(F + G L*)` with `radius`); strict.
pub fn check_optimal_gain(prob: &LqProblem, oracle: &OracleSolution, radius: bool) -> Result<(f64, bool)> {
    let cl = closed_loop(prob, &oracle.gain_star)?;
    let size = if radius { spectral_radius(&cl)? } else { spectral_norm(&cl)? };
    let margin = prob.growth_bound() - size;
    Ok((margin, margin <= 0.0))
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, r: usize, c: usize) -> Mat {
    Mat::from_fn(r, c, |_, _| rng.random_range(-1.0..=1.0))
}

fn random_pd<R: Rng + ?Sized>(rng: &mut R, n: usize) -> SymMat {
    SymMat::gram(&uniform(rng, n, n)).add(&SymMat::scaled_identity(n, 0.1))
}

const WOODBURY: u64 = 1;
const ORDERING: u64 = 2;
const GAIN: u64 = 3;
const OPTIMAL: u64 = 4;

fn trial_rng(seed: u64, lemma: u64, trial: usize) -> rand_chacha::ChaCha8Rng {
    indexed_rng(seed, (lemma << 40) | trial as u64)
}

fn par_trials<F>(trials: usize, f: F) -> Result<Vec<(f64, bool)>>
where
    F: Fn(usize) -> Result<(f64, bool)> + Sync + Send,
{
    (0..trials).into_par_iter().map(f).collect()
}

/// Random stabilizable problem with `n, m ∈ {1, 2, 3}` and its oracle.
fn random_solved<R: Rng + ?Sized>(rng: &mut R) -> Result<(LqProblem, OracleSolution)> {
    let n = rng.random_range(1..=3);
    let m = rng.random_range(1..=3);
    let prob = random_stabilizable(rng, n, m).problem;
    let sol = solve_default(&prob)?;
    Ok((prob, sol))
}

/// Runs `trials` randomized instances of each lemma:
///
/// * `woodbury`: the two gain forms agree to `1e-9` (dims up to 5).
/// * `ordering`: `ρ(A⁻¹B) ≤ 1 + 1e-10` for `A = B + PSD`.
/// * `gain_stability`: `‖F + G L_Π‖ < q` for `Π = Π* + AAᵀ`.
/// * `optimal_gain_norm`: `‖F + G L*‖ < q`.
/// * `optimal_gain_radius`: `ρ(F + G L*) < q`.
pub fn run_lemmas(seed: u64, trials: usize) -> Result<LemmaReport> {
    let woodbury = par_trials(trials, |i| {
        let mut rng = trial_rng(seed, WOODBURY, i);
        let n = rng.random_range(1..=5);
        let m = rng.random_range(1..=5);
        let r = random_pd(&mut rng, m);
        let pi = random_pd(&mut rng, n);
        let g = uniform(&mut rng, n, m);
        check_woodbury(&r, &g, &pi)
    })?;
    let ordering = par_trials(trials, |i| {
        let mut rng = trial_rng(seed, ORDERING, i);
        let n = rng.random_range(1..=5);
        let b = random_pd(&mut rng, n);
        let a = b.add(&SymMat::gram(&uniform(&mut rng, n, n)));
        check_ordering_pair(&a, &b)
    })?;
    let gain = par_trials(trials, |i| {
        let mut rng = trial_rng(seed, GAIN, i);
        let (prob, sol) = random_solved(&mut rng)?;
        let n = prob.state_dim();
        let pi = sol.pi_star.add(&SymMat::gram(&uniform(&mut rng, n, n)));
        check_gain_stability(&prob, &pi)
    })?;
    let optimal: Vec<_> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = trial_rng(seed, OPTIMAL, i);
            let (prob, sol) = random_solved(&mut rng)?;
            Ok((check_optimal_gain(&prob, &sol, false)?, check_optimal_gain(&prob, &sol, true)?))
        })
        .collect::<Result<_>>()?;
    Ok(LemmaReport {
        checks: vec![
            LemmaCheck::from_trials("woodbury", woodbury),
            LemmaCheck::from_trials("ordering", ordering),
            LemmaCheck::from_trials("gain_stability", gain),
            LemmaCheck::from_trials("optimal_gain_norm", optimal.iter().map(|o| o.0)),
            LemmaCheck::from_trials("optimal_gain_radius", optimal.iter().map(|o| o.1)),
        ],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_trials_is_an_empty_passing_report() {
        let r = run_lemmas(0, 0).unwrap();
        assert!(r.passed());
        assert!(r.checks.iter().all(|c| c.trials == 0 && c.worst_margin.is_none()));
    }

    #[test]
    fn adversarial_pair_is_reported() {
        let a = SymMat::identity(2);
        let b = SymMat::scaled_identity(2, 2.0);
        let check = LemmaCheck::from_trials("ordering", [check_ordering_pair(&a, &b).unwrap()]);
        assert_eq!(check.violations, 1);
        assert!((check.worst_margin.unwrap() + 1.0).abs() < 1e-9);
        assert!(!LemmaReport { checks: vec![check] }.passed());
    }

    #[test]
    fn report_is_deterministic() {
        assert_eq!(run_lemmas(7, 20).unwrap(), run_lemmas(7, 20).unwrap());
    }
}
