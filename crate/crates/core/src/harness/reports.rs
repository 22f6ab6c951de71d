use std::fmt;

use crate::error::Result;
use crate::matrix::{psd_order_geq, Mat, SymMat, DEFAULT_PSD_TOL};
use crate::model::{stability_margin, LqProblem, StabilityMargin};
use crate::oracle::{solve_pi_star, OracleSolution};

fn write_matrix(f: &mut fmt::Formatter<'_>, name: &str, m: &Mat) -> fmt::Result {
    writeln!(f, "{name} =")?;
    for i in 0..m.nrows() {
        let row: Vec<String> = m.row(i).iter().map(|v| format!("{v:>22.15e}")).collect();
        writeln!(f, "  [{}]", row.join(", "))?;
    }
    Ok(())
}

/// Oracle solution together with the stability check `‖F + G L*‖ ≤ q`.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub solution: OracleSolution,
    pub margin: StabilityMargin,
}

pub fn solve_report(prob: &LqProblem, tol: f64, max_iter: usize) -> Result<SolveReport> {
    let solution = solve_pi_star(prob, tol, max_iter)?;
    let margin = stability_margin(prob, &solution.gain_star)?;
    Ok(SolveReport { solution, margin })
}

impl fmt::Display for SolveReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_matrix(f, "Pi*", self.solution.pi_star.as_mat())?;
        write_matrix(f, "L*", &self.solution.gain_star.gain)?;
        writeln!(f, "||F + G L*||  {:.15e}", self.margin.norm)?;
        writeln!(f, "q             {:.15e}", self.margin.q)?;
        writeln!(f, "stable        {}", self.margin.satisfies)?;
        writeln!(f, "residual      {:e}", self.solution.residual)?;
        writeln!(f, "iterations    {}", self.solution.iterations)
    }
}

/// The two hypotheses of the convergence result for a given `κ`:
/// `κ I ⪰ Π*` and `‖F + G L*‖ ≤ q`.
#[derive(Debug, Clone)]
pub struct CheckReport {
    pub kappa: f64,
    pub lambda_max: f64,
    pub pi0_dominates: bool,
    pub margin: StabilityMargin,
    /// Smallest integer `κ` with `κ I ⪰ Π*`.
    pub suggested_kappa: f64,
}

impl CheckReport {
    pub fn all_hold(&self) -> bool {
        self.pi0_dominates && self.margin.satisfies
    }
}

pub fn check_report(prob: &LqProblem, oracle: &OracleSolution, kappa: f64) -> Result<CheckReport> {
    let n = prob.state_dim();
    let lambda_max = oracle.pi_star.max_eigenvalue();
    Ok(CheckReport {
        kappa,
        lambda_max,
        pi0_dominates: psd_order_geq(&SymMat::scaled_identity(n, kappa), &oracle.pi_star, DEFAULT_PSD_TOL)?,
        margin: stability_margin(prob, &oracle.gain_star)?,
        suggested_kappa: lambda_max.ceil(),
    })
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = |b: bool| if b { "holds" } else { "FAILS" };
        writeln!(f, "kappa                 {}", self.kappa)?;
        writeln!(f, "lambda_max(Pi*)       {:.15e}", self.lambda_max)?;
        writeln!(f, "kappa I >= Pi*        {}", verdict(self.pi0_dominates))?;
        writeln!(
            f,
            "||F + G L*|| <= q     {} ({:.6e} vs {:.6e})",
            verdict(self.margin.satisfies),
            self.margin.norm,
            self.margin.q
        )?;
        writeln!(f, "suggested kappa       {}", self.suggested_kappa)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{solve_default, DEFAULT_MAX_ITER, DEFAULT_TOL};

    #[test]
    fn zero_dynamics_print_the_closed_form() {
        let prob = LqProblem::scalar(0.0, 1.0, 1.0, 1.0, 2.0, 0.5).unwrap();
        let r = solve_report(&prob, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert_eq!(r.solution.pi_star.get(0, 0), 1.5);
        assert!(r.margin.satisfies);
        assert!(r.to_string().contains("1.500000000000000e0"));
    }

    #[test]
    fn check_kappa_cases() {
        let prob = LqProblem::scalar(0.9, 1.0, 1.0, 1.0, 1.0, 0.1).unwrap();
        let sol = solve_default(&prob).unwrap();
        let lmax = sol.pi_star.max_eigenvalue();
        assert!(check_report(&prob, &sol, 10.0 * lmax).unwrap().all_hold());
        let low = check_report(&prob, &sol, 0.1 * sol.pi_star.min_eigenvalue()).unwrap();
        assert!(!low.pi0_dominates && low.margin.satisfies);
        assert_eq!(low.suggested_kappa, 2.0);
    }

    #[test]
    fn nilpotent_uncontrolled_dynamics_fail_the_norm_test() {
        // ρ(F) = 0 keeps Π* finite while ‖F‖ = 2 > q
        let prob = LqProblem::new(
            Mat::from_row_slice(2, 2, &[0.0, 2.0, 0.0, 0.0]),
            Mat::zeros(2, 1),
            SymMat::identity(2),
            SymMat::identity(1),
            SymMat::identity(2),
            0.1,
        )
        .unwrap();
        let sol = solve_default(&prob).unwrap();
        let r = check_report(&prob, &sol, 100.0).unwrap();
        assert!(r.pi0_dominates && !r.margin.satisfies);
    }
}
