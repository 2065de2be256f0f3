//! Brute-force reference solutions of `inf {xᵀQx : xᵀHx = 1, xᵀBx ≥ 0}` at
//! small dimension. Every reported value is attained by a feasible point,
//! so it is an upper bound on the true infimum.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::dense::{lu_solve, Mat};
use crate::error::{Error, Result};
use crate::model::{eval_quadratic, ConstraintSet, GeoCop};
use crate::symmat::SymMat;

pub const DEFAULT_SAMPLES: usize = 200_000;
pub const MAX_DIM: usize = 6;
const CHUNK: usize = 4096;
/// Sampled points count as feasible when `xᵀBx ≥ −FEAS_TOL·‖B‖`.
const FEAS_TOL: f64 = 1e-10;
const MAX_SWEEPS: usize = 2000;

#[derive(Clone, Debug, Serialize)]
pub struct OracleResult {
    /// `+∞` when no feasible point was found.
    pub value: f64,
    pub argmin: Vec<f64>,
    pub samples_used: usize,
    pub refined: bool,
    pub feasible: bool,
}

impl OracleResult {
    fn empty(samples: usize) -> Self {
        OracleResult {
            value: f64::INFINITY,
            argmin: Vec::new(),
            samples_used: samples,
            refined: false,
            feasible: false,
        }
    }
}

struct Problem<'a> {
    q: &'a SymMat,
    h: &'a SymMat,
    members: Vec<&'a SymMat>,
    norms: Vec<f64>,
    /// Optional box on the leading coordinates (used with `z = 1`).
    bounds: Option<(Vec<f64>, Vec<f64>)>,
}

impl<'a> Problem<'a> {
    fn new(q: &'a SymMat, h: &'a SymMat, s: &'a ConstraintSet) -> Self {
        Problem {
            q,
            h,
            norms: s.members.iter().map(|b| b.frob_norm()).collect(),
            members: s.members.iter().collect(),
            bounds: None,
        }
    }

    fn feasible(&self, x: &[f64]) -> bool {
        let ok = self
            .members
            .iter()
            .zip(&self.norms)
            .all(|(b, nb)| b.quad_form(x) >= -FEAS_TOL * nb);
        ok && self.bounds.as_ref().map_or(true, |(lo, hi)| {
            lo.iter()
                .zip(hi)
                .zip(x)
                .all(|((l, h), v)| *v >= *l && *v <= *h)
        })
    }

    /// Rescales onto `xᵀHx = 1`; `None` if that is impossible.
    fn normalize(&self, x: &[f64]) -> Option<Vec<f64>> {
        let hx = self.h.quad_form(x);
        if !(hx > 0.0 && hx.is_finite()) {
            return None;
        }
        let s = 1.0 / hx.sqrt();
        let mut y: Vec<f64> = x.iter().map(|v| v * s).collect();
        // Sign is free; make the last coordinate (z in inequality form) positive.
        if let Some(&l) = y.iter().rev().find(|v| **v != 0.0) {
            if l < 0.0 && self.bounds.is_some() {
                y.iter_mut().for_each(|v| *v = -*v);
            }
        }
        Some(y)
    }

    /// Minimum-norm Gauss–Newton steps onto the zero sets of the violated
    /// constraints. Lets sampling reach feasible sets of measure zero.
    fn repair(&self, x0: &[f64]) -> Option<Vec<f64>> {
        let n = x0.len();
        let mut x = x0.to_vec();
        for _ in 0..12 {
            let viol: Vec<usize> = (0..self.members.len())
                .filter(|&k| self.members[k].quad_form(&x) < -FEAS_TOL * self.norms[k])
                .collect();
            if viol.is_empty() {
                return self.normalize(&x);
            }
            if viol.len() >= n {
                return None;
            }
            let jac: Vec<Vec<f64>> = viol
                .iter()
                .map(|&k| self.members[k].matvec(&x).iter().map(|v| 2.0 * v).collect())
                .collect();
            let g: Vec<f64> = viol.iter().map(|&k| self.members[k].quad_form(&x)).collect();
            let m = viol.len();
            let mut jjt = Mat::zeros(m, m);
            for a in 0..m {
                for b in 0..m {
                    jjt[(a, b)] = crate::dense::dot(&jac[a], &jac[b]);
                }
            }
            let lam = lu_solve(&jjt, &g)?;
            for i in 0..n {
                x[i] -= (0..m).map(|a| lam[a] * jac[a][i]).sum::<f64>();
            }
            x = self.normalize(&x)?;
        }
        None
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.q.quad_form(x)
    }

    /// Newton on the stationarity system with the constraints in `active`
    /// held at equality.
    fn kkt_newton(&self, x0: &[f64], active: &[usize]) -> Option<Vec<f64>> {
        let n = x0.len();
        let k = active.len();
        let dim = n + 1 + k;
        let mut x = x0.to_vec();
        let mut mu = self.value(&x);
        let mut lam = vec![0.0; k];
        for _ in 0..40 {
            let qx = self.q.matvec(&x);
            let hx = self.h.matvec(&x);
            let bx: Vec<Vec<f64>> = active.iter().map(|&i| self.members[i].matvec(&x)).collect();
            let mut f = vec![0.0; dim];
            for i in 0..n {
                f[i] = qx[i] - mu * hx[i] - (0..k).map(|j| lam[j] * bx[j][i]).sum::<f64>();
            }
            f[n] = crate::dense::dot(&x, &hx) - 1.0;
            for j in 0..k {
                f[n + 1 + j] = crate::dense::dot(&x, &bx[j]);
            }
            let res = crate::dense::norm2(&f);
            if res < 1e-14 {
                break;
            }
            let mut jac = Mat::zeros(dim, dim);
            for r in 0..n {
                for c in 0..n {
                    let mut v = self.q.get(r, c) - mu * self.h.get(r, c);
                    for j in 0..k {
                        v -= lam[j] * self.members[active[j]].get(r, c);
                    }
                    jac[(r, c)] = v;
                }
                jac[(r, n)] = -hx[r];
                for j in 0..k {
                    jac[(r, n + 1 + j)] = -bx[j][r];
                }
            }
            for c in 0..n {
                jac[(n, c)] = 2.0 * hx[c];
                for j in 0..k {
                    jac[(n + 1 + j, c)] = 2.0 * bx[j][c];
                }
            }
            let neg: Vec<f64> = f.iter().map(|v| -v).collect();
            let d = lu_solve(&jac, &neg)?;
            if d.iter().any(|v| !v.is_finite()) {
                return None;
            }
            for i in 0..n {
                x[i] += d[i];
            }
            mu += d[n];
            for j in 0..k {
                lam[j] += d[n + 1 + j];
            }
        }
        self.normalize(&x)
    }

    /// Tries the empty active set and the (pairs of) most nearly active
    /// constraints; keeps the best feasible improvement.
    fn polish(&self, x0: &[f64]) -> (Vec<f64>, f64, bool) {
        let mut best = (x0.to_vec(), self.value(x0), false);
        let mut order: Vec<(f64, usize)> = self
            .members
            .iter()
            .zip(&self.norms)
            .enumerate()
            .map(|(i, (b, nb))| (b.quad_form(x0).abs() / nb.max(1e-300), i))
            .collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0));
        let top: Vec<usize> = order.iter().take(3).map(|p| p.1).collect();
        let mut sets: Vec<Vec<usize>> = vec![vec![]];
        for (a, &i) in top.iter().enumerate() {
            sets.push(vec![i]);
            for &j in &top[a + 1..] {
                sets.push(vec![i, j]);
            }
        }
        for s in sets {
            if let Some(x) = self.kkt_newton(x0, &s) {
                let v = self.value(&x);
                if self.feasible(&x) && v < best.1 {
                    best = (x, v, true);
                }
            }
        }
        let (x, v) = self.compass(&best.0, best.1);
        if v < best.1 {
            best = (x, v, true);
        }
        best
    }

    /// Coordinate pattern search that only accepts feasible points.
    fn compass(&self, x0: &[f64], v0: f64) -> (Vec<f64>, f64) {
        let n = x0.len();
        let (mut x, mut v) = (x0.to_vec(), v0);
        let mut h = 1e-2 * crate::dense::norm2(x0).max(1e-3);
        let free: Vec<usize> = if self.bounds.is_some() {
            (0..n - 1).collect()
        } else {
            (0..n).collect()
        };
        // Sliding along a curved boundary can accept tiny steps for a long
        // time; cap the sweeps.
        let mut sweeps = 0;
        while h > 1e-13 && sweeps < MAX_SWEEPS {
            sweeps += 1;
            let mut moved = false;
            for &i in &free {
                for sgn in [1.0, -1.0] {
                    let mut c = x.clone();
                    c[i] += sgn * h;
                    let Some(c) = self.normalize(&c) else { continue };
                    let vc = self.value(&c);
                    if vc < v && self.feasible(&c) {
                        x = c;
                        v = vc;
                        moved = true;
                    }
                }
            }
            if !moved {
                h *= 0.5;
            }
        }
        (x, v)
    }
}

fn chunk_rng(seed: u64, chunk: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk as u64);
    rng
}

/// Solves `L y = s` then returns `x = L⁻ᵀ s`-style back substitution for
/// lower-triangular `L` (`H = LLᵀ`).
fn back_substitute(l: &Mat, s: &[f64]) -> Vec<f64> {
    let n = s.len();
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut v = s[i];
        for j in i + 1..n {
            v -= l[(j, i)] * x[j];
        }
        x[i] = v / l[(i, i)];
    }
    x
}

/// Samples `x = L⁻ᵀ s` with `s` uniform on the unit sphere (`H = LLᵀ`), keeps
/// the running-best feasible points of each chunk, and polishes each of them.
/// The reported value is the minimum over a set of candidates that only
/// grows with `samples`, so it is non-increasing in `samples`.
pub fn solve_sphere(p: &GeoCop, samples: usize, seed: u64) -> Result<OracleResult> {
    let n = p.n;
    if n == 0 || n > MAX_DIM {
        return Err(Error::InvalidArgument(format!(
            "oracle supports 1 ≤ n ≤ {MAX_DIM}, got {n}"
        )));
    }
    if !p.q.is_finite() || !p.h.is_finite() {
        return Err(Error::NonFinite("oracle data"));
    }
    let l = p
        .h
        .to_dense()
        .cholesky()
        .ok_or_else(|| Error::InvalidArgument("H must be positive definite".into()))?;
    let prob = Problem::new(&p.q, &p.h, &p.bset);
    let chunks = samples.div_ceil(CHUNK);
    let records: Vec<Vec<Vec<f64>>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = chunk_rng(seed, c);
            let count = CHUNK.min(samples - c * CHUNK);
            let mut best = f64::INFINITY;
            let mut rec = Vec::new();
            for _ in 0..count {
                let mut s: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
                let norm = crate::dense::norm2(&s);
                if norm == 0.0 {
                    continue;
                }
                s.iter_mut().for_each(|v| *v /= norm);
                let mut x = back_substitute(&l, &s);
                if !prob.feasible(&x) {
                    match prob.repair(&x) {
                        Some(y) if prob.feasible(&y) => x = y,
                        _ => continue,
                    }
                }
                {
                    let v = prob.value(&x);
                    if v < best {
                        best = v;
                        rec.push(x);
                    }
                }
            }
            rec
        })
        .collect();
    let candidates: Vec<Vec<f64>> = records.into_iter().flatten().collect();
    if candidates.is_empty() {
        return Ok(OracleResult::empty(samples));
    }
    let polished: Vec<(Vec<f64>, f64, bool)> =
        candidates.par_iter().map(|x| prob.polish(x)).collect();
    let mut best = &polished[0];
    for c in &polished[1..] {
        if c.1 < best.1 {
            best = c;
        }
    }
    Ok(OracleResult {
        value: best.1,
        argmin: best.0.clone(),
        samples_used: samples,
        refined: best.2,
        feasible: true,
    })
}

/// Axis-aligned box `[lo₁, hi₁] × [lo₂, hi₂]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, serde::Deserialize)]
pub struct Box2 {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
}

impl Box2 {
    pub fn square(half: f64) -> Self {
        Box2 {
            lo: [-half, -half],
            hi: [half, half],
        }
    }

    pub fn area(&self) -> f64 {
        (self.hi[0] - self.lo[0]) * (self.hi[1] - self.lo[1])
    }

    /// Center of pixel `(col, row)`; row 0 is the top edge.
    pub fn pixel_center(&self, col: usize, row: usize, res: usize) -> [f64; 2] {
        let dx = (self.hi[0] - self.lo[0]) / res as f64;
        let dy = (self.hi[1] - self.lo[1]) / res as f64;
        [
            self.lo[0] + (col as f64 + 0.5) * dx,
            self.hi[1] - (row as f64 + 0.5) * dy,
        ]
    }
}

/// Whether `q(u,1,B) ≥ 0` for every member.
pub fn region_contains(s: &ConstraintSet, u: &[f64]) -> bool {
    s.members
        .iter()
        .all(|b| eval_quadratic(u, 1.0, b).map_or(false, |v| v >= 0.0))
}

#[derive(Clone, Debug, Serialize)]
pub struct RegionResult {
    pub result: OracleResult,
    /// Fraction of pixel centers inside the feasible region.
    pub feasible_fraction: f64,
}

/// Minimizes `q(u,1,Q)` over `f₊(1,𝔅)` restricted to a box, by rasterizing
/// at `resolution²` pixel centers and polishing the best feasible pixel.
pub fn solve_region_2d(
    s: &ConstraintSet,
    q_obj: &SymMat,
    bx: Box2,
    resolution: usize,
) -> Result<RegionResult> {
    if s.n != 3 || q_obj.n() != 3 {
        return Err(Error::InvalidArgument(
            "region oracle needs n − 1 = 2".into(),
        ));
    }
    if resolution == 0 || !(bx.hi[0] > bx.lo[0] && bx.hi[1] > bx.lo[1]) {
        return Err(Error::InvalidArgument("empty raster".into()));
    }
    let rows: Vec<(usize, f64, Option<[f64; 2]>)> = (0..resolution)
        .into_par_iter()
        .map(|r| {
            let mut count = 0;
            let mut best: (f64, Option<[f64; 2]>) = (f64::INFINITY, None);
            for c in 0..resolution {
                let u = bx.pixel_center(c, r, resolution);
                if region_contains(s, &u) {
                    count += 1;
                    let v = eval_quadratic(&u, 1.0, q_obj).expect("n = 3");
                    if v < best.0 {
                        best = (v, Some(u));
                    }
                }
            }
            (count, best.0, best.1)
        })
        .collect();
    let total: usize = rows.iter().map(|r| r.0).sum();
    let fraction = total as f64 / (resolution * resolution) as f64;
    let mut best: Option<(f64, [f64; 2])> = None;
    for (_, v, u) in &rows {
        if let Some(u) = u {
            if best.map_or(true, |b| *v < b.0) {
                best = Some((*v, *u));
            }
        }
    }
    let Some((_, u)) = best else {
        return Ok(RegionResult {
            result: OracleResult::empty(resolution * resolution),
            feasible_fraction: fraction,
        });
    };
    let h = GeoCop::last_coordinate_normalization(3);
    let mut prob = Problem::new(q_obj, &h, s);
    prob.bounds = Some((bx.lo.to_vec(), bx.hi.to_vec()));
    let x0 = vec![u[0], u[1], 1.0];
    let (x, v, refined) = prob.polish(&x0);
    Ok(RegionResult {
        result: OracleResult {
            value: v,
            argmin: vec![x[0] / x[2], x[1] / x[2]],
            samples_used: resolution * resolution,
            refined,
            feasible: true,
        },
        feasible_fraction: fraction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ball_matrix;

    fn m(rows: &[&[f64]]) -> SymMat {
        SymMat::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn rayleigh_quotient_without_constraints() {
        let p = GeoCop::new(
            SymMat::diag(&[2.0, 5.0]),
            SymMat::identity(2),
            ConstraintSet::new(2, vec![]).unwrap(),
        )
        .unwrap();
        let r = solve_sphere(&p, 20_000, 0).unwrap();
        assert!((r.value - 2.0).abs() < 1e-12, "{}", r.value);
        assert!((r.argmin[0].abs() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn reduced_two_by_two_example() {
        let b = m(&[&[-1.0, -2.0], &[-2.0, -1.0]]);
        let c = b.neg();
        let p = GeoCop::new(
            SymMat::diag(&[1.0, -1.0]),
            SymMat::identity(2),
            ConstraintSet::new(2, vec![b.clone(), c.clone()]).unwrap(),
        )
        .unwrap();
        let r = solve_sphere(&p, 50_000, 0).unwrap();
        let eta = -(3.0f64).sqrt() / 2.0;
        assert!((r.value - eta).abs() < 1e-9, "{}", r.value);
        let x = &r.argmin;
        assert!(b.quad_form(x) >= -1e-8 && c.quad_form(x) >= -1e-8);
        assert!((p.q.quad_form(x) - r.value).abs() <= 1e-10);
    }

    #[test]
    fn infeasible_set_is_flagged() {
        let p = GeoCop::new(
            SymMat::identity(2),
            SymMat::identity(2),
            ConstraintSet::new(2, vec![SymMat::identity(2).neg()]).unwrap(),
        )
        .unwrap();
        let r = solve_sphere(&p, 10_000, 0).unwrap();
        assert!(!r.feasible);
    }

    #[test]
    fn indefinite_h_is_rejected() {
        let p = GeoCop::new(
            SymMat::identity(2),
            SymMat::diag(&[1.0, -1.0]),
            ConstraintSet::new(2, vec![]).unwrap(),
        )
        .unwrap();
        assert!(solve_sphere(&p, 100, 0).is_err());
    }

    #[test]
    fn deterministic_and_monotone_in_samples() {
        let q = m(&[&[0.3, -0.7, 0.2], &[-0.7, -0.1, 0.5], &[0.2, 0.5, 0.4]]);
        let s = ConstraintSet::new(3, vec![ball_matrix(&[0.2, -0.1], 0.6)]).unwrap();
        let p = GeoCop::new(q, SymMat::identity(3), s).unwrap();
        let a = solve_sphere(&p, 9000, 7).unwrap();
        let b = solve_sphere(&p, 9000, 7).unwrap();
        assert_eq!(a.value, b.value);
        assert_eq!(a.argmin, b.argmin);
        let mut last = f64::INFINITY;
        for k in [500, 3000, 9000, 20_000] {
            let r = solve_sphere(&p, k, 7).unwrap();
            assert!(r.value <= last);
            last = r.value;
        }
    }

    #[test]
    fn disk_complement_distance() {
        let s = ConstraintSet::new(3, vec![SymMat::diag(&[1.0, 1.0, -1.0])]).unwrap();
        let q = SymMat::diag(&[1.0, 1.0, 0.0]);
        let r = solve_region_2d(&s, &q, Box2::square(2.0), 400).unwrap();
        assert!((r.result.value - 1.0).abs() < 1e-9, "{}", r.result.value);
    }

    #[test]
    fn empty_raster_is_flagged() {
        let s = ConstraintSet::new(3, vec![SymMat::diag(&[-1.0, -1.0, -1.0])]).unwrap();
        let r = solve_region_2d(&s, &SymMat::identity(3), Box2::square(1.0), 50).unwrap();
        assert!(!r.result.feasible);
        assert_eq!(r.feasible_fraction, 0.0);
    }
}
