//! Standard-form SDP interface over a single PSD block, plus the 2-parameter
//! PSD-combination search.

mod certificate;
pub(crate) mod ipm;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::symmat::SymMat;

pub use certificate::{
    best_ab_combination, combination_margin, diagonal_combination_exists, golden_max,
    psd_combination_exists, solve_ab_certificate, AbCertificate,
};
pub use ipm::IterRecord;
pub(crate) use ipm::{solve_conic, ConicProblem, ConicRow, ConicStatus};

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Sense {
    Ge,
    Le,
    Eq,
}

#[derive(Clone, Debug)]
pub struct Constraint {
    pub mat: SymMat,
    pub sense: Sense,
    pub rhs: f64,
}

impl Constraint {
    pub fn new(mat: SymMat, sense: Sense, rhs: f64) -> Self {
        Constraint { mat, sense, rhs }
    }
}

/// `min ⟨objective, X⟩` subject to equality rows, inequality rows and `X ⪰ 0`.
#[derive(Clone, Debug)]
pub struct SdpProblem {
    pub n: usize,
    pub objective: SymMat,
    pub eq_constraints: Vec<(SymMat, f64)>,
    pub ineq_constraints: Vec<Constraint>,
}

impl SdpProblem {
    pub fn new(objective: SymMat) -> Self {
        SdpProblem {
            n: objective.n(),
            objective,
            eq_constraints: Vec::new(),
            ineq_constraints: Vec::new(),
        }
    }

    pub fn eq(mut self, mat: SymMat, rhs: f64) -> Self {
        self.eq_constraints.push((mat, rhs));
        self
    }

    pub fn ineq(mut self, mat: SymMat, sense: Sense, rhs: f64) -> Self {
        self.ineq_constraints.push(Constraint::new(mat, sense, rhs));
        self
    }

    /// Adds `tr X = 1`.
    pub fn trace_one(self) -> Self {
        let n = self.n;
        self.eq(SymMat::identity(n), 1.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SdpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIter,
    Numerical,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct Residuals {
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
}

impl Residuals {
    pub fn max(&self) -> f64 {
        self.primal.max(self.dual).max(self.gap)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SdpSolution {
    pub status: SdpStatus,
    /// Primal point; for `Unbounded` an improving ray.
    pub x: SymMat,
    /// Multipliers; for `Infeasible` a Farkas certificate.
    pub dual_eq: Vec<f64>,
    pub dual_ineq: Vec<f64>,
    /// Dual slack matrix `C − Σ y_i A_i`.
    pub z: SymMat,
    pub value: f64,
    pub dual_value: f64,
    pub residuals: Residuals,
    pub iterations: usize,
    pub history: Vec<IterRecord>,
}

impl SdpSolution {
    /// Optimal, or stopped early with all residuals below `loose`.
    pub fn usable(&self, loose: f64) -> bool {
        match self.status {
            SdpStatus::Optimal => true,
            SdpStatus::MaxIter | SdpStatus::Numerical => self.residuals.max() <= loose,
            _ => false,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

impl SolverOptions {
    pub fn with_tol(tol: f64) -> Self {
        SolverOptions {
            tol,
            ..Default::default()
        }
    }
}

fn check_dims(p: &SdpProblem) -> Result<()> {
    let bad = |k: usize| Error::DimensionMismatch {
        expected: p.n,
        found: k,
    };
    if p.objective.n() != p.n {
        return Err(bad(p.objective.n()));
    }
    for (a, _) in &p.eq_constraints {
        if a.n() != p.n {
            return Err(bad(a.n()));
        }
    }
    for c in &p.ineq_constraints {
        if c.mat.n() != p.n {
            return Err(bad(c.mat.n()));
        }
    }
    Ok(())
}

pub fn solve(p: &SdpProblem, opts: &SolverOptions) -> Result<SdpSolution> {
    check_dims(p)?;
    if p.n == 0 {
        return Err(Error::InvalidArgument("SDP of dimension 0".into()));
    }
    let mut rows = Vec::new();
    for (a, b) in &p.eq_constraints {
        rows.push(ConicRow {
            mat: a.clone(),
            lin: Vec::new(),
            rhs: *b,
        });
    }
    let mut slack = 0;
    for c in &p.ineq_constraints {
        let lin = match c.sense {
            Sense::Ge => {
                slack += 1;
                vec![(slack - 1, -1.0)]
            }
            Sense::Le => {
                slack += 1;
                vec![(slack - 1, 1.0)]
            }
            Sense::Eq => Vec::new(),
        };
        rows.push(ConicRow {
            mat: c.mat.clone(),
            lin,
            rhs: c.rhs,
        });
    }
    let conic = ConicProblem {
        n: p.n,
        m: slack,
        c_mat: p.objective.clone(),
        c_lin: vec![0.0; slack],
        rows,
    };
    let sol = solve_conic(&conic, opts.tol, opts.max_iter)?;
    let neq = p.eq_constraints.len();
    let status = match sol.status {
        ConicStatus::Optimal => SdpStatus::Optimal,
        ConicStatus::PrimalInfeasible => SdpStatus::Infeasible,
        ConicStatus::DualInfeasible => SdpStatus::Unbounded,
        ConicStatus::MaxIter => SdpStatus::MaxIter,
        ConicStatus::Numerical => SdpStatus::Numerical,
    };
    let status = verify_certificate(p, status, &sol);
    let value = match status {
        SdpStatus::Infeasible => f64::INFINITY,
        SdpStatus::Unbounded => f64::NEG_INFINITY,
        _ => sol.primal_obj,
    };
    Ok(SdpSolution {
        status,
        x: sol.x,
        dual_eq: sol.y[..neq].to_vec(),
        dual_ineq: sol.y[neq..].to_vec(),
        z: sol.z,
        value,
        dual_value: sol.dual_obj,
        residuals: Residuals {
            primal: sol.primal_residual,
            dual: sol.dual_residual,
            gap: sol.gap,
        },
        iterations: sol.iterations,
        history: sol.history,
    })
}

/// Infeasibility verdicts are only reported when the certificate checks out
/// to `1e-6`; otherwise the status degrades to `Numerical`.
fn verify_certificate(p: &SdpProblem, status: SdpStatus, sol: &ipm::ConicSolution) -> SdpStatus {
    const CERT_TOL: f64 = 1e-6;
    match status {
        SdpStatus::Infeasible => {
            // Σ y_i A_i ⪯ 0 with sign-feasible slack multipliers and bᵀy > 0.
            let neq = p.eq_constraints.len();
            let mut agg = SymMat::zeros(p.n);
            let mut by = 0.0;
            let mut scale = 0.0_f64;
            for ((a, b), y) in p.eq_constraints.iter().zip(&sol.y) {
                agg = agg.axpy(*y, a);
                by += b * y;
                scale = scale.max(y.abs() * a.frob_norm());
            }
            for (c, y) in p.ineq_constraints.iter().zip(&sol.y[neq..]) {
                agg = agg.axpy(*y, &c.mat);
                by += c.rhs * y;
                scale = scale.max(y.abs() * c.mat.frob_norm());
                let wrong_sign = match c.sense {
                    Sense::Ge => *y < -CERT_TOL * by.abs().max(1.0),
                    Sense::Le => *y > CERT_TOL * by.abs().max(1.0),
                    Sense::Eq => false,
                };
                if wrong_sign {
                    return SdpStatus::Numerical;
                }
            }
            let lmax = crate::symmat::lambda_max(&agg).unwrap_or(f64::INFINITY);
            if by > 0.0 && lmax <= CERT_TOL * by.max(scale) {
                SdpStatus::Infeasible
            } else {
                SdpStatus::Numerical
            }
        }
        SdpStatus::Unbounded => {
            let x = &sol.x;
            let cx = p.objective.dot(x);
            let xn = x.frob_norm().max(1e-300);
            let lmin = crate::symmat::lambda_min(x).unwrap_or(f64::NEG_INFINITY);
            let mut ok = cx < 0.0 && lmin >= -CERT_TOL * xn;
            for (a, _) in &p.eq_constraints {
                ok &= a.dot(x).abs() <= CERT_TOL * (-cx).max(xn);
            }
            for c in &p.ineq_constraints {
                let v = c.mat.dot(x);
                let ok_c = match c.sense {
                    Sense::Ge => v >= -CERT_TOL * (-cx).max(xn),
                    Sense::Le => v <= CERT_TOL * (-cx).max(xn),
                    Sense::Eq => v.abs() <= CERT_TOL * (-cx).max(xn),
                };
                ok &= ok_c;
            }
            if ok {
                SdpStatus::Unbounded
            } else {
                SdpStatus::Numerical
            }
        }
        s => s,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symmat::{eig_sym, lambda_min};
    use proptest::prelude::*;

    fn m(rows: &[&[f64]]) -> SymMat {
        SymMat::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn trace_one_gives_lambda_min() {
        let p = SdpProblem::new(SymMat::diag(&[2.0, 5.0])).trace_one();
        let s = solve(&p, &SolverOptions::default()).unwrap();
        assert_eq!(s.status, SdpStatus::Optimal);
        assert!((s.value - 2.0).abs() < 1e-7, "{}", s.value);
        assert!(s.value >= s.dual_value - 1e-7);
    }

    #[test]
    fn reduced_two_by_two_example() {
        let b = m(&[&[-1.0, -2.0], &[-2.0, -1.0]]);
        let c = m(&[&[1.0, 2.0], &[2.0, 1.0]]);
        let p = SdpProblem::new(SymMat::diag(&[1.0, -1.0]))
            .eq(SymMat::identity(2), 1.0)
            .ineq(b, Sense::Ge, 0.0)
            .ineq(c, Sense::Ge, 0.0);
        let s = solve(&p, &SolverOptions::default()).unwrap();
        assert_eq!(s.status, SdpStatus::Optimal);
        let eta = -(3.0_f64).sqrt() / 2.0;
        assert!((s.value - eta).abs() < 1e-6, "{}", s.value);
    }

    #[test]
    fn negative_identity_normalization_is_infeasible() {
        let p = SdpProblem::new(SymMat::diag(&[1.0, 1.0])).eq(SymMat::diag(&[-1.0, -1.0]), 1.0);
        let s = solve(&p, &SolverOptions::default()).unwrap();
        assert_eq!(s.status, SdpStatus::Infeasible);
    }

    #[test]
    fn unbounded_is_detected() {
        // min ⟨diag(-1,1,1), X⟩ with X_33 = 1 is unbounded below.
        let mut e = SymMat::zeros(3);
        e.set(2, 2, 1.0);
        let p = SdpProblem::new(SymMat::diag(&[-1.0, 1.0, 1.0])).eq(e, 1.0);
        let s = solve(&p, &SolverOptions::default()).unwrap();
        assert_eq!(s.status, SdpStatus::Unbounded);
        assert_eq!(s.value, f64::NEG_INFINITY);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let p = SdpProblem::new(SymMat::identity(2)).eq(SymMat::identity(3), 1.0);
        assert!(solve(&p, &SolverOptions::default()).is_err());
    }

    #[test]
    fn non_finite_data_is_an_error() {
        let p = SdpProblem::new(SymMat::diag(&[f64::NAN, 1.0])).trace_one();
        assert!(matches!(
            solve(&p, &SolverOptions::default()),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn gap_shrinks_at_the_end() {
        let q = m(&[&[1.0, 0.3, -0.2], &[0.3, -0.5, 0.1], &[-0.2, 0.1, 0.7]]);
        let p = SdpProblem::new(q).trace_one();
        let s = solve(&p, &SolverOptions::default()).unwrap();
        let h = &s.history;
        assert!(h.len() >= 6);
        let tail = &h[h.len() - 6..];
        for w in tail.windows(2) {
            assert!(w[1].mu <= w[0].mu, "{:?}", tail);
        }
    }

    fn sym(n: usize) -> impl Strategy<Value = SymMat> {
        prop::collection::vec(-1.0f64..1.0, crate::symmat::packed_len(n))
            .prop_map(move |d| SymMat::from_packed(n, d).unwrap())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn weak_duality_and_lambda_min(q in (1usize..=6).prop_flat_map(sym)) {
            let p = SdpProblem::new(q.clone()).trace_one();
            let s = solve(&p, &SolverOptions::default()).unwrap();
            prop_assert_eq!(s.status, SdpStatus::Optimal);
            prop_assert!(s.value >= s.dual_value - 1e-7);
            let l = lambda_min(&q).unwrap();
            prop_assert!((s.value - l).abs() <= 1e-7 * (1.0 + l.abs()));
            prop_assert!(eig_sym(&s.x).unwrap().values.iter().all(|v| *v > -1e-9));
        }

        #[test]
        fn objective_scaling_scales_value(q in sym(3), c in 0.1f64..10.0) {
            let s1 = solve(&SdpProblem::new(q.clone()).trace_one(), &SolverOptions::default()).unwrap();
            let s2 = solve(&SdpProblem::new(q.scale(c)).trace_one(), &SolverOptions::default()).unwrap();
            prop_assert!((s2.value - c * s1.value).abs() <= 1e-6 * (1.0 + c * s1.value.abs()));
        }
    }
}
