//! Facial reduction to a face of `S₊ⁿ` on which the feasible cone has a
//! positive definite point, and pruning of redundant constraints.

use serde::Serialize;

use crate::certify::{includes, Tri};
use crate::dense::Mat;
use crate::error::{Error, Result};
use crate::model::{ConstraintSet, GeoCop};
use crate::sdp::{solve_conic, ConicProblem, ConicRow, ConicStatus};
use crate::symmat::{eig_sym, lambda_min, SymMat};

/// Eigenvalues of the max-rank point above `RANK_TOL·λ_max` span the face.
pub const RANK_TOL: f64 = 1e-7;
const SNAP_TOL: f64 = 1e-10;
const MAX_RANK_SOLVER_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FeasibleCone {
    /// `J₊(𝔅) ∩ {tr X = 1}` is non-empty.
    Nontrivial,
    /// `J₊(𝔅) = {O}`.
    Trivial,
}

#[derive(Clone, Debug)]
pub struct MaxRankPoint {
    pub cone: FeasibleCone,
    /// `max { t : X ⪰ tI, X ∈ J₊(𝔅), tr X = 1 }`
    pub t: f64,
    /// Relative-interior point of `J₊(𝔅) ∩ {tr X = 1}`.
    pub x: SymMat,
    /// Dual matrix `−y₀I − Σ y_i B_i ⪰ 0` orthogonal to the feasible cone.
    pub exposing_dual: SymMat,
    /// Nonnegative weights `w` (one per member) with `−Σ w_k B_k` close to
    /// an exposing matrix of the face.
    pub member_weights: Vec<f64>,
}

/// Solves the trace-normalized Slater problem by maximizing `t` over
/// `X = Y + tI`, `Y ⪰ 0`, `t ≥ 0`.
pub fn find_max_rank_point(s: &ConstraintSet, tol: f64) -> Result<MaxRankPoint> {
    let n = s.n;
    if n == 0 {
        return Err(Error::InvalidArgument("empty dimension".into()));
    }
    let mut rows = vec![ConicRow {
        mat: SymMat::identity(n),
        lin: vec![(0, n as f64)],
        rhs: 1.0,
    }];
    let mut row_of = Vec::with_capacity(s.members.len());
    for b in &s.members {
        let nb = b.frob_norm();
        if nb == 0.0 {
            row_of.push(None);
            continue;
        }
        row_of.push(Some((rows.len(), nb)));
        let bh = b.scale(1.0 / nb);
        let slack = rows.len();
        rows.push(ConicRow {
            lin: vec![(0, bh.trace()), (slack, -1.0)],
            mat: bh,
            rhs: 0.0,
        });
    }
    let m = rows.len();
    let mut c_lin = vec![0.0; m];
    c_lin[0] = -1.0;
    let problem = ConicProblem {
        n,
        m,
        c_mat: SymMat::zeros(n),
        c_lin,
        rows,
    };
    let sol = solve_conic(&problem, MAX_RANK_SOLVER_TOL.min(tol), 300)?;
    match sol.status {
        ConicStatus::PrimalInfeasible => Ok(MaxRankPoint {
            cone: FeasibleCone::Trivial,
            t: f64::NEG_INFINITY,
            x: SymMat::zeros(n),
            exposing_dual: SymMat::identity(n).scale(1.0 / n as f64),
            member_weights: vec![0.0; s.members.len()],
        }),
        ConicStatus::DualInfeasible => Err(Error::Solver(
            "max-rank problem reported unbounded".into(),
        )),
        status => {
            let usable = status == ConicStatus::Optimal
                || sol.primal_residual.max(sol.dual_residual).max(sol.gap) <= 1e-6;
            if !usable {
                return Err(Error::Solver(format!(
                    "max-rank problem did not converge ({status:?})"
                )));
            }
            let t = sol.s[0];
            let x = sol.x.add(&SymMat::identity(n).scale(t));
            let tr = sol.z.trace();
            let exposing_dual = if tr > 0.0 { sol.z.scale(1.0 / tr) } else { sol.z };
            let member_weights = row_of
                .iter()
                .map(|r| r.map_or(0.0, |(i, nb)| sol.y[i].max(0.0) / nb))
                .collect();
            Ok(MaxRankPoint {
                cone: FeasibleCone::Nontrivial,
                t,
                x,
                exposing_dual,
                member_weights,
            })
        }
    }
}

/// Deterministic orthonormal basis for the range of `v` (orthonormal
/// columns): pivoted Gram–Schmidt on the columns of the projector `V Vᵀ`,
/// ties broken by lowest coordinate, tiny entries snapped to zero.
pub fn canonical_basis(v: &Mat) -> Mat {
    let n = v.rows();
    let r = v.cols();
    if r == 0 {
        return Mat::zeros(n, 0);
    }
    let proj = v.matmul(&v.transpose());
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(r);
    let mut used = vec![false; n];
    for _ in 0..r {
        let mut best: Option<(usize, Vec<f64>, f64)> = None;
        for j in 0..n {
            if used[j] {
                continue;
            }
            let mut c = proj.column(j);
            for b in &basis {
                let d: f64 = c.iter().zip(b).map(|(x, y)| x * y).sum();
                for (ci, bi) in c.iter_mut().zip(b) {
                    *ci -= d * bi;
                }
            }
            let nrm = c.iter().map(|x| x * x).sum::<f64>().sqrt();
            let better = match &best {
                None => true,
                Some((_, _, bn)) => nrm > bn * (1.0 + 1e-9),
            };
            if better {
                best = Some((j, c, nrm));
            }
        }
        let (j, c, nrm) = best.expect("rank exceeds dimension");
        used[j] = true;
        basis.push(c.iter().map(|x| x / nrm).collect());
    }
    for b in basis.iter_mut() {
        for x in b.iter_mut() {
            if x.abs() < SNAP_TOL {
                *x = 0.0;
            }
        }
    }
    // Re-orthonormalize after snapping.
    let mut ortho: Vec<Vec<f64>> = Vec::with_capacity(r);
    for b in basis {
        let mut c = b;
        for o in &ortho {
            let d: f64 = c.iter().zip(o).map(|(x, y)| x * y).sum();
            if d != 0.0 {
                for (ci, oi) in c.iter_mut().zip(o) {
                    *ci -= d * oi;
                }
            }
        }
        let nrm = c.iter().map(|x| x * x).sum::<f64>().sqrt();
        if nrm != 1.0 {
            c.iter_mut().for_each(|x| *x /= nrm);
        }
        ortho.push(c);
    }
    Mat::from_columns(&ortho, n)
}

#[derive(Clone, Debug, Serialize)]
pub struct ReductionResult {
    pub original_n: usize,
    pub reduced_n: usize,
    /// `F = V₀V₀ᵀ`, the projector onto the discarded directions.
    pub exposing: SymMat,
    /// `n × reduced_n` orthonormal basis `P̃` of the face.
    pub basis: Mat,
    pub reduced: GeoCop,
    /// `t*` of the final Slater problem (`−∞` when the cone is `{O}`).
    pub slater_margin: f64,
    pub rounds: usize,
}

impl ReductionResult {
    /// `x = P̃ y`
    pub fn lift(&self, y: &[f64]) -> Vec<f64> {
        self.basis.matvec(y)
    }

    /// `X = P̃ Y P̃ᵀ`
    pub fn lift_matrix(&self, y: &SymMat) -> SymMat {
        let p = &self.basis;
        SymMat::from_dense(&p.matmul(&y.to_dense()).matmul(&p.transpose()))
    }
}

fn project(p: &GeoCop, basis: &Mat) -> Result<GeoCop> {
    let r = basis.cols();
    let members = p.bset.members.iter().map(|b| b.congruence(basis)).collect();
    let mut set = ConstraintSet::new(r, members)?;
    set.provenance = p.bset.provenance.clone();
    Ok(GeoCop {
        n: r,
        q: p.q.congruence(basis),
        h: p.h.congruence(basis),
        bset: set,
        congruence: None,
    })
}

/// Snaps the dual weights to small rationals; if `F = −Σ w_k B_k` is then
/// exactly PSD with nullity equal to the numerical face dimension and its
/// null space matches `numeric`, returns a basis of that null space.
fn exact_face(s: &ConstraintSet, weights: &[f64], numeric: &Mat) -> Option<Mat> {
    let r = numeric.cols();
    let n = s.n;
    let wmax = weights.iter().cloned().fold(0.0, f64::max);
    if wmax <= 0.0 {
        return None;
    }
    for q in 1..=12 {
        let qf = q as f64;
        let w: Vec<f64> = weights.iter().map(|x| (x / wmax * qf).round() / qf).collect();
        let mut f = SymMat::zeros(n);
        for (b, wk) in s.members.iter().zip(&w) {
            if *wk != 0.0 {
                f = f.axpy(-wk, b);
            }
        }
        let fn_ = f.frob_norm();
        if fn_ == 0.0 {
            continue;
        }
        let Ok(e) = eig_sym(&f) else { continue };
        if *e.values.last().unwrap() < -1e-12 * fn_ {
            continue;
        }
        let null: Vec<Vec<f64>> = (0..n)
            .filter(|&k| e.values[k].abs() <= 1e-12 * fn_)
            .map(|k| e.vector(k))
            .collect();
        if null.len() != r {
            continue;
        }
        let cand = canonical_basis(&Mat::from_columns(&null, n));
        // Same subspace as the numerical face, up to solver accuracy.
        let overlap = cand.t_matmul(numeric);
        let mut ok = true;
        for j in 0..r {
            let col = overlap.column(j);
            let nrm2: f64 = col.iter().map(|x| x * x).sum();
            ok &= (nrm2 - 1.0).abs() <= 1e-4;
        }
        if ok {
            return Some(cand);
        }
    }
    None
}

/// Repeats: find a max-rank point; stop if it is positive definite,
/// otherwise restrict to the span of its eigenvectors above `RANK_TOL`.
pub fn facial_reduce(p: &GeoCop, tol: f64) -> Result<ReductionResult> {
    let n0 = p.n;
    let mut basis = Mat::identity(n0);
    let mut cur = p.clone();
    let mut rounds = 0;
    let slater;
    loop {
        if cur.n == 0 {
            slater = f64::NEG_INFINITY;
            break;
        }
        let mrp = find_max_rank_point(&cur.bset, tol)?;
        rounds += 1;
        if mrp.cone == FeasibleCone::Trivial {
            basis = Mat::zeros(n0, 0);
            cur = project(&cur, &Mat::zeros(cur.n, 0))?;
            slater = f64::NEG_INFINITY;
            break;
        }
        if mrp.t > tol {
            slater = mrp.t;
            break;
        }
        let e = eig_sym(&mrp.x)?;
        let lmax = e.values[0].max(0.0);
        let keep: Vec<Vec<f64>> = (0..cur.n)
            .filter(|&k| e.values[k] > RANK_TOL * lmax)
            .map(|k| e.vector(k))
            .collect();
        if keep.len() == cur.n || keep.is_empty() {
            slater = mrp.t;
            break;
        }
        let numeric = canonical_basis(&Mat::from_columns(&keep, cur.n));
        let step = exact_face(&cur.bset, &mrp.member_weights, &numeric).unwrap_or(numeric);
        cur = project(&cur, &step)?;
        basis = basis.matmul(&step);
        if rounds > n0 {
            slater = mrp.t;
            break;
        }
    }
    let r = basis.cols();
    let mut f = SymMat::identity(n0);
    if r > 0 {
        f = f.sub(&SymMat::from_dense(&basis.matmul(&basis.transpose())));
    }
    Ok(ReductionResult {
        original_n: n0,
        reduced_n: r,
        exposing: f,
        basis,
        reduced: cur,
        slater_margin: slater,
        rounds,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct PruneResult {
    pub set: ConstraintSet,
    /// Indices (into the input) that were kept.
    pub kept: Vec<usize>,
    /// Indices dropped as redundant or PSD.
    pub pruned: Vec<usize>,
}

fn lex_less(a: &SymMat, b: &SymMat) -> bool {
    for (x, y) in a.packed().iter().zip(b.packed()) {
        if x != y {
            return x < y;
        }
    }
    false
}

/// Drops PSD members and every `A` with `J₊(B) ⊆ J₊(A)` for another member
/// `B`; among mutually including members the lexicographically smallest
/// packed representation survives.
pub fn remove_redundant(s: &ConstraintSet, tol: f64) -> Result<PruneResult> {
    if s.is_zero_set() {
        return Ok(PruneResult {
            set: s.clone(),
            kept: vec![0],
            pruned: vec![],
        });
    }
    let mut cand = Vec::new();
    let mut pruned = Vec::new();
    for (i, b) in s.members.iter().enumerate() {
        let nb = b.frob_norm();
        if nb == 0.0 || lambda_min(&b.scale(1.0 / nb))? >= -tol {
            pruned.push(i);
        } else {
            cand.push(i);
        }
    }
    let k = cand.len();
    let pairs: Vec<(usize, usize)> = (0..k)
        .flat_map(|a| (0..k).filter(move |&b| b != a).map(move |b| (a, b)))
        .collect();
    use rayon::prelude::*;
    let results: Vec<Result<bool>> = pairs
        .par_iter()
        .map(|&(a, b)| {
            let t = includes(&s.members[cand[a]], &s.members[cand[b]], tol)?;
            Ok(t.0 == Tri::Yes)
        })
        .collect();
    let mut incl = vec![vec![false; k]; k];
    for ((a, b), r) in pairs.iter().zip(results) {
        incl[*a][*b] = r?;
    }
    let mut kept = Vec::new();
    for a in 0..k {
        let dominated = (0..k).any(|b| {
            b != a
                && incl[a][b]
                && (!incl[b][a] || lex_less(&s.members[cand[b]], &s.members[cand[a]]))
        });
        if dominated {
            pruned.push(cand[a]);
        } else {
            kept.push(cand[a]);
        }
    }
    pruned.sort_unstable();
    if kept.is_empty() {
        let mut z = ConstraintSet::zero(s.n);
        z.provenance = s.provenance.clone();
        return Ok(PruneResult {
            set: z,
            kept,
            pruned,
        });
    }
    let mut set = ConstraintSet::new(s.n, kept.iter().map(|&i| s.members[i].clone()).collect())?;
    set.provenance = s.provenance.clone();
    Ok(PruneResult { set, kept, pruned })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> SymMat {
        SymMat::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn zero_set_max_rank_point() {
        let s = ConstraintSet::zero(3);
        let r = find_max_rank_point(&s, 1e-8).unwrap();
        assert!((r.t - 1.0 / 3.0).abs() < 1e-7, "{}", r.t);
        assert!(r.x.sub(&SymMat::identity(3).scale(1.0 / 3.0)).max_abs() < 1e-7);
    }

    #[test]
    fn negative_identity_is_trivial() {
        let s = ConstraintSet::new(2, vec![SymMat::identity(2).neg()]).unwrap();
        let r = find_max_rank_point(&s, 1e-8).unwrap();
        assert_eq!(r.cone, FeasibleCone::Trivial);
        let p = GeoCop::new(SymMat::identity(2), SymMat::identity(2), s).unwrap();
        let red = facial_reduce(&p, 1e-8).unwrap();
        assert_eq!(red.reduced_n, 0);
    }

    #[test]
    fn canonical_basis_prefers_coordinates() {
        // A rotated basis of span(e1, e2) in R⁴.
        let c = 0.6;
        let s = 0.8;
        let v = Mat::from_columns(&[vec![c, s, 0.0, 0.0], vec![-s, c, 0.0, 0.0]], 4);
        let b = canonical_basis(&v);
        assert_eq!(b.column(0), vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(b.column(1), vec![0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn prune_keeps_one_of_scaled_copies() {
        let b = m(&[&[-1.0, -2.0], &[-2.0, -1.0]]);
        let s = ConstraintSet::new(2, vec![b.clone(), b.scale(2.0)]).unwrap();
        let r = remove_redundant(&s, 1e-8).unwrap();
        assert_eq!(r.set.members.len(), 1);
        assert_eq!(r.kept, vec![1]); // 2B is lexicographically smaller
    }

    #[test]
    fn prune_zero_set() {
        let r = remove_redundant(&ConstraintSet::zero(2), 1e-8).unwrap();
        assert!(r.set.is_zero_set());
        let psd = ConstraintSet::new(2, vec![SymMat::identity(2)]).unwrap();
        assert!(remove_redundant(&psd, 1e-8).unwrap().set.is_zero_set());
    }
}
