//! Sufficient conditions for the feasible cone `J₊(𝔅)` to be generated by
//! its rank-one matrices, with explicit certificates and witnesses.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{eval_quadratic, ConstraintSet};
use crate::reduce::{find_max_rank_point, FeasibleCone};
use crate::sdp::{
    self, best_ab_combination, combination_margin, AbCertificate, Sense, SdpProblem,
    SdpSolution, SdpStatus, SolverOptions,
};
use crate::symmat::{eig_sym, lambda_min, SymMat};

pub const DEFAULT_TOL: f64 = 1e-8;
/// Refutations need a violation of at least `REFUTE_FACTOR · tol`.
pub const REFUTE_FACTOR: f64 = 10.0;
const LOOSE: f64 = 1e-6;
const SAMPLER_RADIUS: f64 = 8.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Tri {
    Yes,
    No,
    Unknown,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PairStatus {
    Certified,
    Refuted,
    Inconclusive,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Certified,
    NotCertified,
    Inconclusive,
}

impl Verdict {
    /// Process exit code used by the command-line tool.
    pub fn exit_code(self) -> i32 {
        match self {
            Verdict::Certified => 0,
            Verdict::NotCertified => 2,
            Verdict::Inconclusive => 3,
        }
    }
}

fn solver_opts(tol: f64) -> SolverOptions {
    SolverOptions::with_tol((0.1 * tol).clamp(1e-11, 1e-8))
}

fn unit(m: &SymMat) -> SymMat {
    let n = m.frob_norm();
    if n > 0.0 {
        m.scale(1.0 / n)
    } else {
        m.clone()
    }
}

/// `min ⟨obj, X⟩` over `tr X = 1`, `X ⪰ 0` and homogeneous rows.
fn trace_sdp(obj: &SymMat, rows: &[(&SymMat, Sense)], tol: f64) -> Result<SdpSolution> {
    let mut p = SdpProblem::new(obj.clone()).trace_one();
    for (m, s) in rows {
        p = p.ineq((*m).clone(), *s, 0.0);
    }
    sdp::solve(&p, &solver_opts(tol))
}

/// Whether `J₊(b) ⊆ J₊(a)`, i.e. `a ⪰* b`, with the value of
/// `min {⟨â,X⟩ : ⟨b̂,X⟩ ≥ 0, tr X = 1}`.
pub fn includes(a: &SymMat, b: &SymMat, tol: f64) -> Result<(Tri, f64)> {
    let (ah, bh) = (unit(a), unit(b));
    let sol = trace_sdp(&ah, &[(&bh, Sense::Ge)], tol)?;
    Ok(match sol.status {
        SdpStatus::Infeasible => (Tri::Yes, f64::INFINITY),
        _ if sol.usable(LOOSE) => {
            let v = sol.value;
            let t = if v >= -tol {
                Tri::Yes
            } else if v <= -REFUTE_FACTOR * tol {
                Tri::No
            } else {
                Tri::Unknown
            };
            (t, v)
        }
        _ => (Tri::Unknown, sol.value),
    })
}

/// A matrix `X ⪰ 0` with `⟨zero_of, X⟩ = 0` and `⟨negative_on, X⟩ < 0`.
#[derive(Clone, Debug, Serialize)]
pub struct MatrixWitness {
    pub x: SymMat,
    /// `true` when the witness refutes `J₀(A) ⊆ J₊(B)` rather than
    /// `J₀(B) ⊆ J₊(A)`.
    pub swapped: bool,
    pub zero_value: f64,
    pub negative_value: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct PairVerdict {
    pub status: PairStatus,
    pub certificate: Option<AbCertificate>,
    /// Best normalized margin of `λ_min(αA + βB)` over `α, β > 0`.
    pub margin: f64,
    /// `min {⟨Â,X⟩ : ⟨B̂,X⟩ ≤ 0, tr X = 1}` and the same with `A`, `B`
    /// swapped; computed only when no certificate exists.
    pub zeta: Option<(f64, f64)>,
    pub witness: Option<MatrixWitness>,
}

/// Replaces a numerical witness by the coarsest rounding (entries on a grid
/// of `1/q`, `q ≤ 12`, after max-abs scaling) that is still a valid witness.
fn tidy_witness(x: &SymMat, zero_of: &SymMat, negative_on: &SymMat, tol: f64) -> SymMat {
    let scale = x.max_abs();
    if scale == 0.0 {
        return x.clone();
    }
    let xs = x.scale(1.0 / scale);
    for q in 1..=12 {
        let qf = q as f64;
        let d: Vec<f64> = xs.packed().iter().map(|v| (v * qf).round() / qf + 0.0).collect();
        let cand = SymMat::from_packed(x.n(), d).expect("same length");
        if cand.is_zero() {
            continue;
        }
        let psd = lambda_min(&cand).map(|l| l >= -1e-12).unwrap_or(false);
        let z = zero_of.dot(&cand);
        let v = negative_on.dot(&cand);
        if psd
            && z.abs() <= tol * zero_of.frob_norm()
            && v < -REFUTE_FACTOR * tol * negative_on.frob_norm()
        {
            return cand;
        }
    }
    xs
}

/// Searches for a refutation of `J₀(b) ⊆ J₊(a)`.
fn refute_zero_inclusion(a: &SymMat, b: &SymMat, tol: f64) -> Result<Option<(SymMat, f64)>> {
    let (ah, bh) = (unit(a), unit(b));
    let sol = trace_sdp(&ah, &[(&bh, Sense::Eq)], tol)?;
    if sol.usable(LOOSE) && sol.value < -REFUTE_FACTOR * tol {
        return Ok(Some((tidy_witness(&sol.x, b, a, tol), sol.value)));
    }
    Ok(None)
}

fn zeta(a: &SymMat, b: &SymMat, tol: f64) -> Result<f64> {
    let sol = trace_sdp(&unit(a), &[(&unit(b), Sense::Le)], tol)?;
    Ok(if sol.usable(LOOSE) { sol.value } else { f64::NAN })
}

/// Pairwise test of `J₀(B) ⊆ J₊(A)` and `J₀(A) ⊆ J₊(B)`.
///
/// Certified by `α, β > 0` with `αA + βB ⪰ 0`, or else by both conic
/// inclusions `J₋(B) ⊆ J₊(A)` and `J₋(A) ⊆ J₊(B)` holding numerically.
/// Refuted by a matrix in `J₀` of one member that is negative on the other.
pub fn check_pair_b(a: &SymMat, b: &SymMat, tol: f64) -> Result<PairVerdict> {
    if a.n() != b.n() {
        return Err(Error::DimensionMismatch {
            expected: a.n(),
            found: b.n(),
        });
    }
    let best = best_ab_combination(a, b)?;
    if best.margin >= -tol {
        return Ok(PairVerdict {
            status: PairStatus::Certified,
            certificate: Some(best),
            margin: best.margin,
            zeta: None,
            witness: None,
        });
    }
    let z = (zeta(a, b, tol)?, zeta(b, a, tol)?);
    let mut verdict = PairVerdict {
        status: PairStatus::Inconclusive,
        certificate: None,
        margin: best.margin,
        zeta: Some(z),
        witness: None,
    };
    if z.0 >= -tol && z.1 >= -tol {
        verdict.status = PairStatus::Certified;
        return Ok(verdict);
    }
    for swapped in [false, true] {
        let (x, y) = if swapped { (b, a) } else { (a, b) };
        if let Some((w, _)) = refute_zero_inclusion(x, y, tol)? {
            verdict.status = PairStatus::Refuted;
            verdict.witness = Some(MatrixWitness {
                zero_value: y.dot(&w),
                negative_value: x.dot(&w),
                x: w,
                swapped,
            });
            break;
        }
    }
    Ok(verdict)
}

#[derive(Clone, Debug, Serialize)]
pub struct PairEntry {
    pub i: usize,
    pub j: usize,
    pub verdict: PairVerdict,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConditionBReport {
    pub status: PairStatus,
    pub pairs: Vec<PairEntry>,
}

fn aggregate(statuses: impl Iterator<Item = PairStatus>) -> PairStatus {
    let mut out = PairStatus::Certified;
    for s in statuses {
        match s {
            PairStatus::Refuted => return PairStatus::Refuted,
            PairStatus::Inconclusive => out = PairStatus::Inconclusive,
            PairStatus::Certified => {}
        }
    }
    out
}

fn unordered_pairs(k: usize) -> Vec<(usize, usize)> {
    (0..k)
        .flat_map(|i| ((i + 1)..k).map(move |j| (i, j)))
        .collect()
}

/// Runs [`check_pair_b`] on every unordered pair (in parallel, aggregated in
/// index order). A singleton set holds vacuously.
pub fn check_condition_b(s: &ConstraintSet, tol: f64) -> Result<ConditionBReport> {
    let pairs = unordered_pairs(s.members.len());
    let verdicts: Vec<Result<PairVerdict>> = pairs
        .par_iter()
        .map(|&(i, j)| check_pair_b(&s.members[i], &s.members[j], tol))
        .collect();
    let mut out = Vec::with_capacity(pairs.len());
    for ((i, j), v) in pairs.into_iter().zip(verdicts) {
        out.push(PairEntry { i, j, verdict: v? });
    }
    Ok(ConditionBReport {
        status: aggregate(out.iter().map(|p| p.verdict.status)),
        pairs: out,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct CPrimeEntry {
    pub index: usize,
    pub holds: Tri,
    /// `min {⟨B,X⟩ : X ⪰ 0, X_nn = 1}` (`−∞` if unbounded).
    pub sdp_value: f64,
    /// A point `u` with `q(u,1,B) < 0`.
    pub witness: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize)]
pub struct BPrimeEntry {
    pub i: usize,
    pub j: usize,
    pub status: PairStatus,
    pub certificate: Option<AbCertificate>,
    /// A point `u` with `q(u,1,B_i) < 0` and `q(u,1,B_j) < 0`.
    pub witness: Option<Vec<f64>>,
    pub witness_values: Option<(f64, f64)>,
}

#[derive(Clone, Debug, Serialize)]
pub struct InequalityReport {
    pub b_prime: PairStatus,
    pub c_prime: Tri,
    pub pairs: Vec<BPrimeEntry>,
    pub members: Vec<CPrimeEntry>,
}

fn q_at(b: &SymMat, u: &[f64]) -> f64 {
    eval_quadratic(u, 1.0, b).unwrap_or(f64::NAN)
}

/// A point with `q(u,1,B) < 0` from the block structure `B = [[C, c], [cᵀ, γ]]`.
pub fn negative_point(b: &SymMat) -> Result<Option<Vec<f64>>> {
    let n = b.n();
    let d = n - 1;
    if d == 0 {
        return Ok((b.get(0, 0) < 0.0).then(Vec::new));
    }
    let mut cmat = SymMat::zeros(d);
    for i in 0..d {
        for j in i..d {
            cmat.set(i, j, b.get(i, j));
        }
    }
    let c: Vec<f64> = (0..d).map(|i| b.get(i, d)).collect();
    let e = eig_sym(&cmat)?;
    let scale = cmat.frob_norm().max(1.0);
    let ok = |u: &Vec<f64>| q_at(b, u) < 0.0;
    // Negative curvature: go far along the eigenvector.
    let lmin = *e.values.last().unwrap();
    if lmin < -1e-12 * scale {
        let mut v = e.vector(d - 1);
        if v.iter().zip(&c).map(|(x, y)| x * y).sum::<f64>() > 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        let mut t = 1.0;
        for _ in 0..200 {
            let u: Vec<f64> = v.iter().map(|x| x * t).collect();
            if ok(&u) {
                return Ok(Some(u));
            }
            t *= 2.0;
        }
    }
    // Stationary point on the range of C, then the null-space direction.
    let mut ustar = vec![0.0; d];
    let mut c_null = c.clone();
    for k in 0..d {
        let v = e.vector(k);
        let cv: f64 = v.iter().zip(&c).map(|(x, y)| x * y).sum();
        if e.values[k].abs() > 1e-12 * scale {
            for i in 0..d {
                ustar[i] -= cv / e.values[k] * v[i];
            }
            for i in 0..d {
                c_null[i] -= cv * v[i];
            }
        }
    }
    if ok(&ustar) {
        return Ok(Some(ustar));
    }
    let cn: f64 = c_null.iter().map(|x| x * x).sum::<f64>().sqrt();
    if cn > 1e-12 * scale {
        let mut t = 1.0;
        for _ in 0..200 {
            let u: Vec<f64> = ustar.iter().zip(&c_null).map(|(s, x)| s - t * x / cn).collect();
            if ok(&u) {
                return Ok(Some(u));
            }
            t *= 2.0;
        }
    }
    Ok(None)
}

fn check_c_prime_member(b: &SymMat, tol: f64) -> Result<CPrimeEntry> {
    let n = b.n();
    let bh = unit(b);
    let mut e = SymMat::zeros(n);
    e.set(n - 1, n - 1, 1.0);
    let sol = sdp::solve(&SdpProblem::new(bh).eq(e, 1.0), &solver_opts(tol))?;
    let witness = negative_point(b)?;
    let (holds, value) = match sol.status {
        SdpStatus::Unbounded => (Tri::Yes, f64::NEG_INFINITY),
        _ if sol.usable(LOOSE) => {
            let v = sol.value;
            if v < -REFUTE_FACTOR * tol {
                (Tri::Yes, v)
            } else if v >= -tol {
                (Tri::No, v)
            } else {
                (Tri::Unknown, v)
            }
        }
        _ => (Tri::Unknown, sol.value),
    };
    let holds = match (holds, &witness) {
        (Tri::Yes, None) => Tri::Unknown,
        (Tri::No, Some(_)) => Tri::Unknown,
        (Tri::Unknown, Some(_)) => Tri::Yes,
        (h, _) => h,
    };
    Ok(CPrimeEntry {
        index: 0,
        holds,
        sdp_value: value,
        witness: if holds == Tri::Yes { witness } else { None },
    })
}

/// Minimizes `φ(u) = max(q(u,1,A), q(u,1,B))` by grid sampling plus compass
/// refinement. A negative minimum is a joint point of `f₋₋(1,A) ∩ f₋₋(1,B)`.
pub fn sample_joint_negative(a: &SymMat, b: &SymMat) -> Option<(Vec<f64>, f64)> {
    let d = a.n() - 1;
    // A common scale keeps the minimax point of the raw functions.
    let k = a.frob_norm().max(b.frob_norm());
    if k == 0.0 {
        return Some((vec![0.0; d], 0.0));
    }
    let (ah, bh) = (a.scale(1.0 / k), b.scale(1.0 / k));
    let phi = |u: &[f64]| q_at(&ah, u).max(q_at(&bh, u));
    if d == 0 {
        let v = phi(&[]);
        return Some((Vec::new(), v));
    }
    let r = SAMPLER_RADIUS;
    let mut starts: Vec<(f64, Vec<f64>)> = Vec::new();
    let mut push = |v: f64, u: Vec<f64>| {
        starts.push((v, u));
        if starts.len() > 64 {
            starts.sort_by(|x, y| x.0.total_cmp(&y.0));
            starts.truncate(8);
        }
    };
    let spacing;
    if d <= 3 {
        let per = if d <= 2 { 201 } else { 41 };
        spacing = 2.0 * r / (per - 1) as f64;
        let total = (per as usize).pow(d as u32);
        let mut u = vec![0.0; d];
        for idx in 0..total {
            let mut k = idx;
            for ui in u.iter_mut() {
                *ui = -r + spacing * (k % per) as f64;
                k /= per;
            }
            push(phi(&u), u.clone());
        }
    } else {
        spacing = 2.0 * r / 40.0;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..50_000 {
            let u: Vec<f64> = (0..d).map(|_| rng.gen_range(-r..r)).collect();
            push(phi(&u), u);
        }
    }
    starts.sort_by(|x, y| x.0.total_cmp(&y.0));
    starts.truncate(8);
    let dirs: Vec<Vec<f64>> = if d <= 3 {
        let total = 3usize.pow(d as u32);
        (0..total)
            .filter_map(|idx| {
                let mut k = idx;
                let v: Vec<f64> = (0..d)
                    .map(|_| {
                        let c = (k % 3) as f64 - 1.0;
                        k /= 3;
                        c
                    })
                    .collect();
                v.iter().any(|x| *x != 0.0).then_some(v)
            })
            .collect()
    } else {
        (0..2 * d)
            .map(|k| {
                let mut v = vec![0.0; d];
                v[k / 2] = if k % 2 == 0 { 1.0 } else { -1.0 };
                v
            })
            .collect()
    };
    let mut best: Option<(Vec<f64>, f64)> = None;
    for (v0, u0) in starts {
        let (mut u, mut v) = (u0, v0);
        let mut h = spacing;
        // φ may decrease without bound along a ray, so the walk stays in the
        // sampling box and has a step budget.
        let mut budget = 20_000;
        while h > 1e-13 && budget > 0 {
            budget -= 1;
            let mut moved = false;
            for dvec in &dirs {
                let cand: Vec<f64> = u.iter().zip(dvec).map(|(x, y)| x + h * y).collect();
                if cand.iter().any(|x| x.abs() > r) {
                    continue;
                }
                let vc = phi(&cand);
                if vc < v {
                    u = cand;
                    v = vc;
                    moved = true;
                    break;
                }
            }
            if !moved {
                h *= 0.5;
            }
        }
        if best.as_ref().map_or(true, |b| v < b.1) {
            best = Some((u, v));
        }
    }
    let (u, v) = best?;
    // Prefer a short dyadic witness that keeps at least half the depth.
    for k in 0..=12 {
        let s = (1u64 << k) as f64;
        let ur: Vec<f64> = u.iter().map(|x| (x * s).round() / s).collect();
        let vr = phi(&ur);
        if v < 0.0 && vr <= 0.5 * v {
            return Some((ur, vr));
        }
    }
    Some((u, v))
}

/// Inequality-form conditions with `z` the last coordinate: (C′) every
/// `f₋₋(1,B)` is non-empty, (B′) `f₋(1,B) ∩ f₋₋(1,A) = ∅` for all pairs.
pub fn check_bprime_cprime(s: &ConstraintSet, tol: f64) -> Result<InequalityReport> {
    check_bprime_cprime_with(s, tol, None)
}

/// As [`check_bprime_cprime`], reusing pair verdicts already computed for
/// condition (B).
pub fn check_bprime_cprime_with(
    s: &ConstraintSet,
    tol: f64,
    known: Option<&ConditionBReport>,
) -> Result<InequalityReport> {
    if s.n < 2 {
        return Err(Error::InvalidArgument(
            "inequality form needs n ≥ 2".into(),
        ));
    }
    let members: Vec<Result<CPrimeEntry>> = s
        .members
        .par_iter()
        .map(|b| check_c_prime_member(b, tol))
        .collect();
    let mut cm = Vec::with_capacity(members.len());
    for (k, e) in members.into_iter().enumerate() {
        let mut e = e?;
        e.index = k;
        cm.push(e);
    }
    let c_prime = if cm.iter().all(|e| e.holds == Tri::Yes) {
        Tri::Yes
    } else if cm.iter().any(|e| e.holds == Tri::No) {
        Tri::No
    } else {
        Tri::Unknown
    };

    let pairs = unordered_pairs(s.members.len());
    let entries: Vec<Result<BPrimeEntry>> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let (a, b) = (&s.members[i], &s.members[j]);
            let pv = match known {
                Some(r) => r
                    .pairs
                    .iter()
                    .find(|p| p.i == i && p.j == j)
                    .map(|p| p.verdict.clone()),
                None => None,
            };
            let pv = match pv {
                Some(v) => v,
                None => check_pair_b(a, b, tol)?,
            };
            if pv.status == PairStatus::Certified {
                return Ok(BPrimeEntry {
                    i,
                    j,
                    status: PairStatus::Certified,
                    certificate: pv.certificate,
                    witness: None,
                    witness_values: None,
                });
            }
            // f₋(1,A) ∩ f₋₋(1,B) ⊆ f₋(1,A) ∩ f₋(1,B), so a joint strictly
            // negative point refutes both orders at once.
            if let Some((u, v)) = sample_joint_negative(a, b) {
                if v < 0.0 {
                    let (qa, qb) = (q_at(a, &u), q_at(b, &u));
                    if qa < 0.0 && qb < 0.0 {
                        return Ok(BPrimeEntry {
                            i,
                            j,
                            status: PairStatus::Refuted,
                            certificate: None,
                            witness: Some(u),
                            witness_values: Some((qa, qb)),
                        });
                    }
                }
            }
            Ok(BPrimeEntry {
                i,
                j,
                status: PairStatus::Inconclusive,
                certificate: None,
                witness: None,
                witness_values: None,
            })
        })
        .collect();
    let entries: Vec<BPrimeEntry> = entries.into_iter().collect::<Result<_>>()?;
    Ok(InequalityReport {
        b_prime: aggregate(entries.iter().map(|e| e.status)),
        c_prime,
        pairs: entries,
        members: cm,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct StructuralReport {
    /// Finite data (every finite family is bounded).
    pub a1_bounded: bool,
    /// Closedness is not checked.
    pub a2_closed: Option<bool>,
    pub a3_slater: Tri,
    pub slater_t: f64,
    pub a4_no_psd_member: Tri,
    pub psd_members: Vec<usize>,
    pub a5_no_inclusion: Tri,
    /// `(i, j)` with `J₊(B_j) ⊆ J₊(B_i)`.
    pub inclusions: Vec<(usize, usize)>,
}

pub fn check_structural(s: &ConstraintSet, tol: f64) -> Result<StructuralReport> {
    let a1 = s.members.iter().all(|m| m.is_finite());
    if !a1 {
        return Err(Error::NonFinite("constraint member"));
    }
    let (a3, t) = match find_max_rank_point(s, tol) {
        Ok(p) if p.cone == FeasibleCone::Trivial => (Tri::No, p.t),
        Ok(p) if p.t > tol => (Tri::Yes, p.t),
        Ok(p) => (Tri::No, p.t),
        Err(Error::Solver(_)) => (Tri::Unknown, f64::NAN),
        Err(e) => return Err(e),
    };
    let mut psd = Vec::new();
    for (k, m) in s.members.iter().enumerate() {
        if lambda_min(&unit(m))? >= -tol {
            psd.push(k);
        }
    }
    let a4 = if psd.is_empty() || s.is_zero_set() {
        Tri::Yes
    } else {
        Tri::No
    };
    let k = s.members.len();
    let ordered: Vec<(usize, usize)> = (0..k)
        .flat_map(|i| (0..k).filter(move |&j| j != i).map(move |j| (i, j)))
        .collect();
    let res: Vec<Result<(Tri, f64)>> = ordered
        .par_iter()
        .map(|&(i, j)| includes(&s.members[i], &s.members[j], tol))
        .collect();
    let mut inclusions = Vec::new();
    let mut unknown = false;
    for (p, r) in ordered.into_iter().zip(res) {
        match r?.0 {
            Tri::Yes => inclusions.push(p),
            Tri::Unknown => unknown = true,
            Tri::No => {}
        }
    }
    let a5 = if !inclusions.is_empty() {
        Tri::No
    } else if unknown {
        Tri::Unknown
    } else {
        Tri::Yes
    };
    Ok(StructuralReport {
        a1_bounded: a1,
        a2_closed: None,
        a3_slater: a3,
        slater_t: t,
        a4_no_psd_member: a4,
        psd_members: psd,
        a5_no_inclusion: a5,
        inclusions,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "case", rename_all = "snake_case")]
pub enum ClassCase {
    /// `J₊(𝔅) = J₀(B̄)` for the member at `exposing_index`.
    A { exposing_index: usize },
    /// No member vanishes on all of `J₊(𝔅)`.
    B,
}

#[derive(Clone, Debug, Serialize)]
pub struct Classification {
    pub case: ClassCase,
    /// `max {⟨B̂_k, X⟩ : X ∈ J₊(𝔅), tr X = 1}` per member.
    pub values: Vec<f64>,
}

pub fn classify(s: &ConstraintSet, tol: f64) -> Result<Classification> {
    if s.is_zero_set() {
        return Ok(Classification {
            case: ClassCase::A { exposing_index: 0 },
            values: vec![0.0],
        });
    }
    let units: Vec<SymMat> = s.members.iter().map(unit).collect();
    let values: Vec<Result<f64>> = units
        .par_iter()
        .map(|b| {
            let rows: Vec<(&SymMat, Sense)> = units.iter().map(|m| (m, Sense::Ge)).collect();
            let sol = trace_sdp(&b.neg(), &rows, tol)?;
            if sol.status == SdpStatus::Infeasible {
                return Err(Error::InvalidArgument(
                    "feasible cone is {O}; nothing to classify".into(),
                ));
            }
            if !sol.usable(LOOSE) {
                return Err(Error::Solver(format!(
                    "classification SDP failed ({:?})",
                    sol.status
                )));
            }
            Ok(-sol.value)
        })
        .collect();
    let values: Vec<f64> = values.into_iter().collect::<Result<_>>()?;
    let case = match values.iter().position(|v| *v <= tol) {
        Some(k) => ClassCase::A { exposing_index: k },
        None => ClassCase::B,
    };
    Ok(Classification { case, values })
}

#[derive(Clone, Debug, Serialize)]
pub struct CertReport {
    pub structural: StructuralReport,
    pub condition_b: ConditionBReport,
    pub inequality: Option<InequalityReport>,
    pub classification: Option<Classification>,
    pub overall: Verdict,
}

#[derive(Clone, Copy, Debug)]
pub struct CertifyOptions {
    pub tol: f64,
    pub inequality_form: bool,
    pub classify: bool,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        CertifyOptions {
            tol: DEFAULT_TOL,
            inequality_form: true,
            classify: true,
        }
    }
}

/// Either sufficient route certifies; a refuted condition (B) together with
/// a failed inequality route gives `NotCertified`.
pub fn overall_verdict(b: PairStatus, ineq: Option<&InequalityReport>) -> Verdict {
    let ineq_ok = ineq.map_or(false, |r| {
        r.b_prime == PairStatus::Certified && r.c_prime == Tri::Yes
    });
    let ineq_failed = ineq.map_or(true, |r| {
        r.b_prime == PairStatus::Refuted || r.c_prime == Tri::No
    });
    if b == PairStatus::Certified || ineq_ok {
        Verdict::Certified
    } else if b == PairStatus::Refuted && ineq_failed {
        Verdict::NotCertified
    } else {
        Verdict::Inconclusive
    }
}

pub fn certify_set(s: &ConstraintSet, opts: &CertifyOptions) -> Result<CertReport> {
    let tol = opts.tol;
    let structural = check_structural(s, tol)?;
    let condition_b = check_condition_b(s, tol)?;
    let inequality = if opts.inequality_form && s.n >= 2 {
        Some(check_bprime_cprime_with(s, tol, Some(&condition_b))?)
    } else {
        None
    };
    let classification = if opts.classify
        && condition_b.status == PairStatus::Certified
        && structural.a3_slater != Tri::No
    {
        Some(classify(s, tol)?)
    } else {
        None
    };
    let overall = overall_verdict(condition_b.status, inequality.as_ref());
    Ok(CertReport {
        structural,
        condition_b,
        inequality,
        classification,
        overall,
    })
}

/// Normalized margin of `αA + βB`.
pub fn margin_of(a: &SymMat, b: &SymMat, alpha: f64, beta: f64) -> f64 {
    combination_margin(a, b, alpha, beta)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> SymMat {
        SymMat::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn a_prime() -> SymMat {
        m(&[
            &[2.0, 1.0, 0.0, 0.0],
            &[1.0, 1.0, 0.0, 0.0],
            &[0.0, 0.0, -1.0, 0.0],
            &[0.0, 0.0, 0.0, -1.0],
        ])
    }

    fn b_prime() -> SymMat {
        m(&[
            &[-1.0, -2.0, 0.0, -1.0],
            &[-2.0, -1.0, 0.0, 0.0],
            &[0.0, 0.0, 1.0, -1.0],
            &[-1.0, 0.0, -1.0, -1.0],
        ])
    }

    #[test]
    fn refuted_pair_has_coordinate_witness() {
        let v = check_pair_b(&a_prime(), &b_prime(), 1e-8).unwrap();
        assert_eq!(v.status, PairStatus::Refuted);
        let w = v.witness.unwrap();
        assert!(!w.swapped);
        assert_eq!(w.x, SymMat::diag(&[0.0, 0.0, 1.0, 1.0]));
        assert_eq!(w.zero_value, 0.0);
        assert_eq!(w.negative_value, -2.0);
    }

    #[test]
    fn pair_status_is_symmetric() {
        let v1 = check_pair_b(&a_prime(), &b_prime(), 1e-8).unwrap();
        let v2 = check_pair_b(&b_prime(), &a_prime(), 1e-8).unwrap();
        assert_eq!(v1.status, v2.status);
    }

    #[test]
    fn singleton_is_vacuous() {
        let s = ConstraintSet::new(2, vec![SymMat::diag(&[1.0, -1.0])]).unwrap();
        let r = check_condition_b(&s, 1e-8).unwrap();
        assert_eq!(r.status, PairStatus::Certified);
        assert!(r.pairs.is_empty());
    }

    #[test]
    fn negative_identity_fails_slater() {
        let s = ConstraintSet::new(2, vec![SymMat::identity(2).neg(), SymMat::diag(&[1.0, -1.0])])
            .unwrap();
        let r = check_structural(&s, 1e-8).unwrap();
        assert_eq!(r.a3_slater, Tri::No);
    }

    #[test]
    fn limit_of_hyperbola_fails_c_prime() {
        let bbar = crate::model::hyperbola_limit_matrix(5.0, 0.5);
        let s = ConstraintSet::new(3, vec![bbar]).unwrap();
        let r = check_bprime_cprime(&s, 1e-8).unwrap();
        assert_eq!(r.c_prime, Tri::No);
    }

    #[test]
    fn negative_point_cases() {
        // Indefinite block.
        let b = SymMat::diag(&[-1.0, 1.0, 1.0]);
        let u = negative_point(&b).unwrap().unwrap();
        assert!(q_at(&b, &u) < 0.0);
        // Linear direction only: q = u₁z + z² style.
        let mut b5 = SymMat::zeros(3);
        b5.set(0, 2, 0.5);
        b5.set(2, 2, 1.0);
        let u = negative_point(&b5).unwrap().unwrap();
        assert!(q_at(&b5, &u) < 0.0);
        // PSD: no point.
        assert!(negative_point(&SymMat::identity(3)).unwrap().is_none());
    }

    #[test]
    fn overlapping_disks_give_midpoint_witness() {
        let a = crate::model::ball_matrix(&[0.0, 0.0], 0.5);
        let b = crate::model::ball_matrix(&[0.5, 0.0], 0.5);
        let (u, v) = sample_joint_negative(&a, &b).unwrap();
        assert!(v < 0.0);
        assert_eq!(u, vec![0.25, 0.0]);
        assert_eq!(q_at(&a, &u), -0.1875);
        assert_eq!(q_at(&b, &u), -0.1875);
    }
}
