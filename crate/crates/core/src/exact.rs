//! End-to-end pipeline: congruence metadata, facial reduction, pruning,
//! certification, SDP solve, rank-one extraction and lifting.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::certify::{certify_set, CertReport, CertifyOptions, Verdict};
use crate::dense::Mat;
use crate::error::{Error, Result};
use crate::model::GeoCop;
use crate::reduce::{facial_reduce, remove_redundant, PruneResult, ReductionResult};
use crate::sdp::{self, Sense, SdpProblem, SdpSolution, SdpStatus, SolverOptions};
use crate::symmat::{eig_sym, gram, SymMat};

pub const CONFIDENT_RATIO: f64 = 1e6;
const PERTURBATION: f64 = 1e-7;

#[derive(Clone, Copy, Debug)]
pub struct PipelineConfig {
    pub tol: f64,
    pub seed: u64,
    pub solver: SolverOptions,
    pub certify: CertifyOptions,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            tol: crate::certify::DEFAULT_TOL,
            seed: 0,
            solver: SolverOptions::with_tol(1e-11),
            certify: CertifyOptions::default(),
        }
    }
}

impl PipelineConfig {
    pub fn with_tol(tol: f64) -> Self {
        let mut c = PipelineConfig::default();
        c.tol = tol;
        c.certify.tol = tol;
        c
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RankOneResult {
    pub x: Vec<f64>,
    /// `λ₁/λ₂` of the SDP optimum; `∞` when it is rank one to tolerance.
    pub eigenratio: f64,
    /// Largest violation of `⟨H, xxᵀ⟩ = 1` and `⟨B, xxᵀ⟩ ≥ 0`.
    pub feas_residual: f64,
    pub obj_gap: f64,
    pub confident: bool,
    /// Whether the perturbed re-solve was used.
    pub perturbed: bool,
    pub diagnostic: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Exactness {
    CertifiedExact,
    SolvedRankOneUncertified,
    RelaxationOnly,
}

#[derive(Clone, Debug, Serialize)]
pub struct PipelineVerdict {
    pub cert: Option<CertReport>,
    pub reduction: ReductionResult,
    pub pruning: PruneResult,
    pub sdp: Option<SdpSolution>,
    /// SDP optimum (`+∞` if infeasible, `−∞` if unbounded).
    pub sdp_value: f64,
    pub rank_one: Option<RankOneResult>,
    pub exactness: Exactness,
    /// Rank-one solution in the coordinates of the input problem.
    pub lifted_x: Option<Vec<f64>>,
    /// `y = L⁺x` when a congruence `x = Ly` is attached.
    pub congruence_preimage: Option<Vec<f64>>,
}

fn stage<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Stage {
        stage: name,
        message: e.to_string(),
    })
}

/// `min ⟨Q,X⟩ s.t. ⟨H,X⟩ = 1, ⟨B,X⟩ ≥ 0 (B ∈ 𝔅), X ⪰ 0`.
pub fn solve_relaxation(p: &GeoCop, opts: &SolverOptions) -> Result<SdpSolution> {
    let mut prob = SdpProblem::new(p.q.clone()).eq(p.h.clone(), 1.0);
    for b in &p.bset.members {
        if !b.is_zero() {
            prob = prob.ineq(b.clone(), Sense::Ge, 0.0);
        }
    }
    sdp::solve(&prob, opts)
}

fn feasibility_residual(x: &[f64], p: &GeoCop) -> f64 {
    let mut r = (p.h.quad_form(x) - 1.0).abs();
    for b in &p.bset.members {
        r = r.max(-b.quad_form(x));
    }
    r
}

fn canonical_sign(x: &mut [f64]) {
    if let Some(v) = x.iter().find(|v| v.abs() > 1e-12) {
        if *v < 0.0 {
            x.iter_mut().for_each(|t| *t = -*t);
        }
    }
}

fn rank_one_from(x_sdp: &SymMat, p: &GeoCop, eta: f64) -> Result<RankOneResult> {
    let e = eig_sym(x_sdp)?;
    let l1 = e.values[0];
    let l2 = e.values.get(1).copied().unwrap_or(0.0);
    let eigenratio = if l2 <= 1e-12 * l1.abs().max(1e-300) {
        f64::INFINITY
    } else {
        l1 / l2
    };
    let v = e.vector(0);
    let hv = p.h.quad_form(&v);
    if !(hv > 0.0) {
        return Ok(RankOneResult {
            x: v,
            eigenratio,
            feas_residual: f64::INFINITY,
            obj_gap: f64::INFINITY,
            confident: false,
            perturbed: false,
            diagnostic: Some("top eigenvector has vᵀHv ≤ 0; cannot scale".into()),
        });
    }
    let mut x: Vec<f64> = v.iter().map(|t| t / hv.sqrt()).collect();
    canonical_sign(&mut x);
    let feas_residual = feasibility_residual(&x, p);
    let obj_gap = (p.q.quad_form(&x) - eta).abs();
    let confident = eigenratio >= CONFIDENT_RATIO
        && feas_residual <= 1e-6
        && obj_gap <= 1e-6 * (1.0 + eta.abs());
    Ok(RankOneResult {
        x,
        eigenratio,
        feas_residual,
        obj_gap,
        confident,
        perturbed: false,
        diagnostic: None,
    })
}

/// Top-eigenvector extraction, with one re-solve under the objective
/// `Q + ε·ggᵀ` (seeded random unit `g`, `ε = 1e−7‖Q‖`) when the optimum is
/// not numerically rank one.
pub fn extract_rank_one(x_sdp: &SymMat, p: &GeoCop, cfg: &PipelineConfig) -> Result<RankOneResult> {
    if x_sdp.n() != p.n {
        return Err(Error::DimensionMismatch {
            expected: p.n,
            found: x_sdp.n(),
        });
    }
    let eta = p.q.dot(x_sdp);
    let first = rank_one_from(x_sdp, p, eta)?;
    if first.eigenratio >= CONFIDENT_RATIO {
        return Ok(first);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut g: Vec<f64> = (0..p.n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let gn = crate::dense::norm2(&g).max(1e-300);
    g.iter_mut().for_each(|v| *v /= gn);
    let eps = PERTURBATION * p.q.frob_norm().max(1.0);
    let mut pert = p.clone();
    pert.q = p.q.axpy(eps, &gram(&g));
    let opts = SolverOptions {
        tol: (cfg.solver.tol * 1e-3).max(1e-12),
        max_iter: cfg.solver.max_iter.max(300),
    };
    let sol = solve_relaxation(&pert, &opts)?;
    if !sol.usable(1e-6) {
        let mut r = first;
        r.diagnostic = Some(format!("perturbed re-solve failed ({:?})", sol.status));
        return Ok(r);
    }
    let mut second = rank_one_from(&sol.x, p, eta)?;
    second.perturbed = true;
    if second.confident || !first.confident {
        Ok(second)
    } else {
        Ok(first)
    }
}

/// Rows of `M` spanning the orthogonal complement of `range L` (`L` is
/// `n × n'`), and the rank of `L`.
fn complement_rows(l: &Mat) -> Result<(Vec<Vec<f64>>, usize)> {
    let llt = SymMat::from_dense(&l.matmul(&l.transpose()));
    let e = eig_sym(&llt)?;
    let lmax = e.values[0].max(0.0);
    let mut rows = Vec::new();
    let mut rank = 0;
    for k in 0..llt.n() {
        if e.values[k] > 1e-10 * lmax && lmax > 0.0 {
            rank += 1;
        } else {
            rows.push(e.vector(k));
        }
    }
    Ok((rows, rank))
}

/// Least-squares `y` with `L y = x`.
fn pseudo_solve(l: &Mat, x: &[f64]) -> Result<Vec<f64>> {
    let ltl = SymMat::from_dense(&l.t_matmul(l));
    let e = eig_sym(&ltl)?;
    let ltx = l.transpose().matvec(x);
    let lmax = e.values[0].max(0.0);
    let mut y = vec![0.0; ltl.n()];
    for k in 0..ltl.n() {
        if e.values[k] > 1e-12 * lmax && lmax > 0.0 {
            let v = e.vector(k);
            let c = crate::dense::dot(&v, &ltx) / e.values[k];
            for i in 0..y.len() {
                y[i] += c * v[i];
            }
        }
    }
    Ok(y)
}

fn check_input(p: &GeoCop) -> Result<()> {
    if !p.q.is_finite() || !p.h.is_finite() || p.bset.members.iter().any(|b| !b.is_finite()) {
        return Err(Error::NonFinite("problem data"));
    }
    if p.h.n() != p.n || p.q.n() != p.n || p.bset.n != p.n {
        return Err(Error::DimensionMismatch {
            expected: p.n,
            found: p.h.n(),
        });
    }
    Ok(())
}

pub fn run_pipeline(p: &GeoCop, cfg: &PipelineConfig) -> Result<PipelineVerdict> {
    stage("input", check_input(p))?;
    let mut work = p.clone();
    let mut l_mat = None;
    if let Some(rows) = &p.congruence {
        let l = Mat::from_rows(rows);
        if l.rows() != p.n {
            return Err(Error::Stage {
                stage: "congruence",
                message: format!("L must have {} rows, found {}", p.n, l.rows()),
            });
        }
        let (m_rows, rank) = stage("congruence", complement_rows(&l))?;
        if rank < p.n {
            let mut pen = SymMat::zeros(p.n);
            for m in &m_rows {
                pen = pen.sub(&gram(m));
            }
            work.bset.members.push(pen);
        }
        l_mat = Some(l);
    }
    let reduction = stage("reduce", facial_reduce(&work, cfg.tol))?;
    let reduced = &reduction.reduced;
    if reduction.reduced_n == 0 {
        return Ok(PipelineVerdict {
            cert: None,
            pruning: PruneResult {
                set: reduced.bset.clone(),
                kept: vec![],
                pruned: (0..work.bset.len()).collect(),
            },
            reduction,
            sdp: None,
            sdp_value: f64::INFINITY,
            rank_one: None,
            exactness: Exactness::RelaxationOnly,
            lifted_x: None,
            congruence_preimage: None,
        });
    }
    let pruning = stage("prune", remove_redundant(&reduced.bset, cfg.tol))?;
    let mut problem = reduced.clone();
    problem.bset = pruning.set.clone();
    let cert = stage("certify", certify_set(&problem.bset, &cfg.certify))?;
    let sol = stage("solve", solve_relaxation(&problem, &cfg.solver))?;
    let sdp_value = sol.value;
    let rank_one = if sol.usable(1e-6) {
        Some(stage("extract", extract_rank_one(&sol.x, &problem, cfg))?)
    } else {
        None
    };
    let lifted_x = rank_one.as_ref().map(|r| {
        let mut x = reduction.lift(&r.x);
        canonical_sign(&mut x);
        x
    });
    let congruence_preimage = match (&l_mat, &lifted_x) {
        (Some(l), Some(x)) => Some(stage("congruence", pseudo_solve(l, x))?),
        _ => None,
    };
    // A solve that stalled with residuals within tolerance is as good as optimal.
    let solved = matches!(sol.status, SdpStatus::Optimal | SdpStatus::MaxIter | SdpStatus::Numerical)
        && sol.usable(cfg.tol);
    let exactness = if cert.overall == Verdict::Certified && solved {
        Exactness::CertifiedExact
    } else if rank_one.as_ref().map_or(false, |r| r.confident) {
        Exactness::SolvedRankOneUncertified
    } else {
        Exactness::RelaxationOnly
    };
    Ok(PipelineVerdict {
        cert: Some(cert),
        reduction,
        pruning,
        sdp: Some(sol),
        sdp_value,
        rank_one,
        exactness,
        lifted_x,
        congruence_preimage,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ConstraintSet;

    fn m(rows: &[&[f64]]) -> SymMat {
        SymMat::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn unconstrained(n: usize) -> GeoCop {
        GeoCop::new(
            SymMat::zeros(n),
            SymMat::identity(n),
            ConstraintSet::new(n, vec![]).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn rank_one_input_is_recovered() {
        let x = gram(&[0.6, 0.8]);
        let r = extract_rank_one(&x, &unconstrained(2), &PipelineConfig::default()).unwrap();
        assert_eq!(r.eigenratio, f64::INFINITY);
        assert!((r.x[0] - 0.6).abs() < 1e-12 && (r.x[1] - 0.8).abs() < 1e-12);
        assert!(r.confident && !r.perturbed);
    }

    #[test]
    fn tied_spectrum_is_not_confident_before_retry() {
        let x = SymMat::identity(2).scale(0.5);
        let first = rank_one_from(&x, &unconstrained(2), 0.0).unwrap();
        assert!(!first.confident);
        assert!((first.eigenratio - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rank_deficient_congruence_adds_kernel_penalty() {
        // Restrict x ∈ R³ to span(e₁, e₂).
        let q = SymMat::diag(&[1.0, 2.0, -5.0]);
        let p = GeoCop::new(q, SymMat::identity(3), ConstraintSet::new(3, vec![]).unwrap())
            .unwrap()
            .with_congruence(vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 0.0]]);
        let v = run_pipeline(&p, &PipelineConfig::default()).unwrap();
        assert_eq!(v.reduction.reduced_n, 2);
        assert!((v.sdp_value - 1.0).abs() < 1e-7, "{}", v.sdp_value);
        let y = v.congruence_preimage.unwrap();
        assert!((y[0].abs() - 1.0).abs() < 1e-6 && y[1].abs() < 1e-6);
    }

    #[test]
    fn overlapping_disks_are_not_certified() {
        let b1 = crate::model::ball_matrix(&[0.0, 0.0], 0.5);
        let b2 = crate::model::ball_matrix(&[0.5, 0.0], 0.5);
        let s = ConstraintSet::new(3, vec![b1, b2]).unwrap();
        let p = GeoCop::new(SymMat::diag(&[1.0, -1.0, 0.0]), SymMat::identity(3), s).unwrap();
        let v = run_pipeline(&p, &PipelineConfig::default()).unwrap();
        let cert = v.cert.unwrap();
        assert_ne!(cert.overall, Verdict::Certified);
        let ineq = cert.inequality.unwrap();
        let w = ineq.pairs[0].witness.clone().unwrap();
        assert_eq!(w, vec![0.25, 0.0]);
        assert_ne!(v.exactness, Exactness::CertifiedExact);
    }

    #[test]
    fn example_four_by_four_reduces_and_solves() {
        let a = m(&[
            &[2.0, 1.0, 0.0, 0.0],
            &[1.0, 1.0, 0.0, 0.0],
            &[0.0, 0.0, -1.0, 0.0],
            &[0.0, 0.0, 0.0, -1.0],
        ]);
        let b = m(&[
            &[-1.0, -2.0, 0.0, -1.0],
            &[-2.0, -1.0, 0.0, 0.0],
            &[0.0, 0.0, 1.0, -1.0],
            &[-1.0, 0.0, -1.0, -1.0],
        ]);
        let c = m(&[
            &[1.0, 2.0, 0.0, 1.0],
            &[2.0, 1.0, 0.0, 0.0],
            &[0.0, 0.0, -3.0, 2.0],
            &[1.0, 0.0, 2.0, -1.0],
        ]);
        let s = ConstraintSet::new(4, vec![a, b, c]).unwrap();
        let p = GeoCop::new(SymMat::diag(&[1.0, -1.0, 0.0, 0.0]), SymMat::identity(4), s).unwrap();
        let v = run_pipeline(&p, &PipelineConfig::default()).unwrap();
        assert_eq!(v.reduction.reduced_n, 2);
        assert_eq!(v.pruning.kept, vec![1, 2]);
        assert_eq!(v.exactness, Exactness::CertifiedExact);
        let eta = -(3.0f64).sqrt() / 2.0;
        assert!((v.sdp_value - eta).abs() < 1e-6, "{}", v.sdp_value);
        let r = v.rank_one.unwrap();
        assert!(r.confident, "{r:?}");
        assert!((r.x[0] * r.x[1] + 0.25).abs() < 1e-6);
        let x = v.lifted_x.unwrap();
        assert_eq!(x.len(), 4);
        assert!(x[2].abs() < 1e-9 && x[3].abs() < 1e-9, "{x:?} {:?} {:?}", v.reduction.basis, v.reduction.reduced.bset);
    }
}
