//! Primal-dual interior-point method on the homogeneous self-dual embedding
//! of a conic program over `S₊ⁿ × R₊ᵐ`:
//!
//! ```text
//! min ⟨C, X⟩ + cᵀs   s.t.  ⟨A_i, X⟩ + a_iᵀs = b_i,   X ⪰ 0, s ≥ 0.
//! ```
//!
//! Nesterov–Todd scaling, Mehrotra predictor-corrector. The embedding
//! detects primal and dual infeasibility without a phase-one problem.

use crate::dense::{cholesky_solve, dot, norm2, regularized_cholesky, Mat};
use crate::error::{Error, Result};
use crate::symmat::{eig_sym, SymMat};

#[derive(Clone, Debug)]
pub(crate) struct ConicRow {
    pub mat: SymMat,
    pub lin: Vec<(usize, f64)>,
    pub rhs: f64,
}

#[derive(Clone, Debug)]
pub(crate) struct ConicProblem {
    pub n: usize,
    pub m: usize,
    pub c_mat: SymMat,
    pub c_lin: Vec<f64>,
    pub rows: Vec<ConicRow>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum ConicStatus {
    Optimal,
    PrimalInfeasible,
    DualInfeasible,
    MaxIter,
    Numerical,
}

#[derive(Clone, Copy, Debug, serde::Serialize)]
pub struct IterRecord {
    pub mu: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
}

#[derive(Clone, Debug)]
pub(crate) struct ConicSolution {
    pub status: ConicStatus,
    pub x: SymMat,
    pub s: Vec<f64>,
    pub y: Vec<f64>,
    pub z: SymMat,
    pub primal_obj: f64,
    pub dual_obj: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
    pub iterations: usize,
    pub history: Vec<IterRecord>,
}

#[derive(Clone, Debug)]
struct Cv {
    mat: SymMat,
    lin: Vec<f64>,
}

impl Cv {
    fn zeros(n: usize, m: usize) -> Self {
        Cv {
            mat: SymMat::zeros(n),
            lin: vec![0.0; m],
        }
    }

    fn identity(n: usize, m: usize) -> Self {
        Cv {
            mat: SymMat::identity(n),
            lin: vec![1.0; m],
        }
    }

    fn axpy(&self, a: f64, o: &Cv) -> Cv {
        Cv {
            mat: self.mat.axpy(a, &o.mat),
            lin: self.lin.iter().zip(&o.lin).map(|(x, y)| x + a * y).collect(),
        }
    }

    fn scale(&self, a: f64) -> Cv {
        Cv {
            mat: self.mat.scale(a),
            lin: self.lin.iter().map(|x| a * x).collect(),
        }
    }

    fn dot(&self, o: &Cv) -> f64 {
        self.mat.dot(&o.mat) + dot(&self.lin, &o.lin)
    }

    fn norm(&self) -> f64 {
        self.dot(self).max(0.0).sqrt()
    }
}

struct Scaled {
    rows: Vec<ConicRow>,
    b: Vec<f64>,
    c: Cv,
    row_scale: Vec<f64>,
    obj_scale: f64,
}

struct Nt {
    r: Mat,
    rinv: Mat,
    lam: Vec<f64>,
    g: Mat,
    g_lin: Vec<f64>,
    lam_lin: Vec<f64>,
}

fn a_op(rows: &[ConicRow], x: &Cv) -> Vec<f64> {
    rows.iter()
        .map(|r| r.mat.dot(&x.mat) + r.lin.iter().map(|(k, v)| v * x.lin[*k]).sum::<f64>())
        .collect()
}

fn at_op(rows: &[ConicRow], y: &[f64], n: usize, m: usize) -> Cv {
    let mut out = Cv::zeros(n, m);
    for (r, yi) in rows.iter().zip(y) {
        if *yi == 0.0 {
            continue;
        }
        out.mat = out.mat.axpy(*yi, &r.mat);
        for (k, v) in &r.lin {
            out.lin[*k] += yi * v;
        }
    }
    out
}

fn sym_of(m: &Mat) -> SymMat {
    SymMat::from_dense(m)
}

impl Nt {
    fn new(x: &Cv, z: &Cv) -> Result<Nt> {
        let ex = eig_sym(&x.mat)?;
        let xh = ex.apply(|l| l.max(1e-300).sqrt()).to_dense();
        let xhi = ex.apply(|l| 1.0 / l.max(1e-300).sqrt()).to_dense();
        let mz = sym_of(&xh.matmul(&z.mat.to_dense()).matmul(&xh));
        let ez = eig_sym(&mz)?;
        let n = x.mat.n();
        let d: Vec<f64> = ez.values.iter().map(|v| v.max(1e-300)).collect();
        let mut r = xh.matmul(&ez.vectors);
        let mut rinv = ez.vectors.transpose().matmul(&xhi);
        for k in 0..n {
            let q = d[k].powf(0.25);
            for i in 0..n {
                r[(i, k)] /= q;
                rinv[(k, i)] *= q;
            }
        }
        let lam = d.iter().map(|v| v.sqrt()).collect();
        let g = r.matmul(&r.transpose()).symmetrized();
        let g_lin = x.lin.iter().zip(&z.lin).map(|(s, w)| s / w).collect();
        let lam_lin = x.lin.iter().zip(&z.lin).map(|(s, w)| (s * w).sqrt()).collect();
        Ok(Nt {
            r,
            rinv,
            lam,
            g,
            g_lin,
            lam_lin,
        })
    }

    fn apply(&self, v: &Cv) -> Cv {
        Cv {
            mat: sym_of(&self.g.matmul(&v.mat.to_dense()).matmul(&self.g)),
            lin: v.lin.iter().zip(&self.g_lin).map(|(a, g)| a * g).collect(),
        }
    }

    fn scaled_primal(&self, dx: &SymMat) -> Mat {
        self.rinv
            .matmul(&dx.to_dense())
            .matmul(&self.rinv.transpose())
            .symmetrized()
    }

    fn scaled_dual(&self, dz: &SymMat) -> Mat {
        self.r.transpose().matmul(&dz.to_dense()).matmul(&self.r).symmetrized()
    }

    /// Largest step keeping `Λ + α·D ⪰ 0`.
    fn max_step_scaled(&self, d: &Mat) -> Result<f64> {
        let n = self.lam.len();
        if n == 0 {
            return Ok(f64::INFINITY);
        }
        let mut m = d.clone();
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] /= (self.lam[i] * self.lam[j]).sqrt();
            }
        }
        let e = eig_sym(&sym_of(&m))?;
        let lmin = *e.values.last().unwrap();
        Ok(if lmin < 0.0 { -1.0 / lmin } else { f64::INFINITY })
    }

    /// Solves `Λ∘T = rhs` for symmetric `T` and maps back: `R T Rᵀ`.
    fn unscale_complementarity(&self, rhs: &Mat) -> SymMat {
        let n = self.lam.len();
        let mut t = Mat::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                t[(i, j)] = 2.0 * rhs[(i, j)] / (self.lam[i] + self.lam[j]);
            }
        }
        sym_of(&self.r.matmul(&t).matmul(&self.r.transpose()))
    }
}

fn scale_problem(p: &ConicProblem) -> Scaled {
    let mut row_scale = Vec::with_capacity(p.rows.len());
    let mut rows = Vec::with_capacity(p.rows.len());
    for r in &p.rows {
        let nrm = (r.mat.dot(&r.mat) + r.lin.iter().map(|(_, v)| v * v).sum::<f64>()).sqrt();
        let s = if nrm > 0.0 { 1.0 / nrm } else { 1.0 };
        row_scale.push(s);
        rows.push(ConicRow {
            mat: r.mat.scale(s),
            lin: r.lin.iter().map(|(k, v)| (*k, v * s)).collect(),
            rhs: r.rhs * s,
        });
    }
    let cn = (p.c_mat.dot(&p.c_mat) + dot(&p.c_lin, &p.c_lin)).sqrt();
    let obj_scale = if cn > 0.0 { cn } else { 1.0 };
    let c = Cv {
        mat: p.c_mat.scale(1.0 / obj_scale),
        lin: p.c_lin.iter().map(|v| v / obj_scale).collect(),
    };
    let b = rows.iter().map(|r| r.rhs).collect();
    Scaled {
        rows,
        b,
        c,
        row_scale,
        obj_scale,
    }
}

pub(crate) fn solve_conic(p: &ConicProblem, tol: f64, max_iter: usize) -> Result<ConicSolution> {
    if !p.c_mat.is_finite()
        || p.c_lin.iter().any(|v| !v.is_finite())
        || p.rows
            .iter()
            .any(|r| !r.mat.is_finite() || !r.rhs.is_finite() || r.lin.iter().any(|(_, v)| !v.is_finite()))
    {
        return Err(Error::NonFinite("SDP data"));
    }
    if p.n + p.m == 0 {
        return Err(Error::InvalidArgument("empty cone".into()));
    }
    let (n, m) = (p.n, p.m);
    let sc = scale_problem(p);
    let rows = &sc.rows;
    let b = &sc.b;
    let c = &sc.c;
    let nb = norm2(b);
    let nc = c.norm();
    let nu = (n + m) as f64;

    let mut x = Cv::identity(n, m);
    let mut z = Cv::identity(n, m);
    let mut y = vec![0.0; rows.len()];
    let mut tau = 1.0;
    let mut kappa = 1.0;
    let mut history = Vec::new();
    let mut status = ConicStatus::MaxIter;
    let mut best: Option<(f64, Cv, Vec<f64>, Cv, f64)> = None;
    let mut iterations = 0;
    let mut stall = 0;

    for it in 0..=max_iter {
        iterations = it;
        let ax = a_op(rows, &x);
        let aty = at_op(rows, &y, n, m);
        let cx = c.dot(&x);
        let by = dot(b, &y);
        let rp: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi * tau - ai).collect();
        let rd = c.scale(tau).axpy(-1.0, &aty).axpy(-1.0, &z);
        let rg = cx - by + kappa;
        let mu = (x.dot(&z) + tau * kappa) / (nu + 1.0);

        let pres = norm2(&rp) / tau / (1.0 + nb);
        let dres = rd.norm() / tau / (1.0 + nc);
        let pobj = cx / tau;
        let dobj = by / tau;
        let gap = (pobj - dobj).abs() / (1.0 + pobj.abs().min(dobj.abs()));
        history.push(IterRecord {
            mu,
            primal_residual: pres,
            dual_residual: dres,
            gap,
        });
        let merit = pres.max(dres).max(gap);
        if best.as_ref().map_or(true, |b| merit < b.0) {
            best = Some((merit, x.clone(), y.clone(), z.clone(), tau));
        }
        if pres <= tol && dres <= tol && gap <= tol {
            status = ConicStatus::Optimal;
            break;
        }
        if by > 0.0 {
            let res = aty.axpy(1.0, &z).norm() / by;
            if res <= tol {
                status = ConicStatus::PrimalInfeasible;
                break;
            }
        }
        if cx < 0.0 {
            let res = norm2(&ax) / (-cx);
            if res <= tol {
                status = ConicStatus::DualInfeasible;
                break;
            }
        }
        if it == max_iter {
            break;
        }
        if !mu.is_finite() || mu <= 0.0 {
            status = ConicStatus::Numerical;
            break;
        }

        // Near the optimum the scaling can lose definiteness; keep the best iterate.
        let Ok(nt) = Nt::new(&x, &z) else {
            status = ConicStatus::Numerical;
            break;
        };
        // Schur complement.
        let gmats: Vec<Cv> = rows
            .iter()
            .map(|r| {
                nt.apply(&Cv {
                    mat: r.mat.clone(),
                    lin: {
                        let mut v = vec![0.0; m];
                        for (k, a) in &r.lin {
                            v[*k] += a;
                        }
                        v
                    },
                })
            })
            .collect();
        let pdim = rows.len();
        let mut schur = Mat::zeros(pdim, pdim);
        for i in 0..pdim {
            for j in i..pdim {
                let v = rows[i].mat.dot(&gmats[j].mat)
                    + rows[i].lin.iter().map(|(k, a)| a * gmats[j].lin[*k]).sum::<f64>();
                schur[(i, j)] = v;
                schur[(j, i)] = v;
            }
        }
        let chol = if pdim > 0 {
            match regularized_cholesky(&schur) {
                Some((l, _)) => Some(l),
                None => {
                    status = ConicStatus::Numerical;
                    break;
                }
            }
        } else {
            None
        };
        let msolve = |rhs: &[f64]| -> Vec<f64> {
            match &chol {
                Some(l) => cholesky_solve(l, rhs),
                None => Vec::new(),
            }
        };
        let gc = nt.apply(c);
        let agc = a_op(rows, &gc);
        let qv = msolve(&agc.iter().zip(b).map(|(a, bi)| a + bi).collect::<Vec<_>>());
        let atq = at_op(rows, &qv, n, m);
        let dx1 = nt.apply(&atq).axpy(-1.0, &gc);
        let denom = -c.dot(&dx1) + dot(b, &qv) + kappa / tau;

        let solve = |r1: &[f64], r2: &Cv, r3: f64, r4: &Cv, r5: f64| {
            let gr2 = nt.apply(r2);
            let ar4 = a_op(rows, r4);
            let agr2 = a_op(rows, &gr2);
            let t1: Vec<f64> = (0..pdim).map(|i| r1[i] - ar4[i] + agr2[i]).collect();
            let pv = msolve(&t1);
            let atp = at_op(rows, &pv, n, m);
            let dx0 = r4.axpy(-1.0, &gr2).axpy(1.0, &nt.apply(&atp));
            let dtau = (r3 + c.dot(&dx0) - dot(b, &pv) + r5 / tau) / denom;
            let dy: Vec<f64> = pv.iter().zip(&qv).map(|(p, q)| p + q * dtau).collect();
            let dx = dx0.axpy(dtau, &dx1);
            let dz = r2.axpy(-1.0, &at_op(rows, &dy, n, m)).axpy(dtau, c);
            let dkappa = (r5 - kappa * dtau) / tau;
            (dx, dy, dz, dtau, dkappa)
        };

        let step_len = |dx: &Cv, dz: &Cv, dtau: f64, dkappa: f64| -> Result<f64> {
            let mut a = f64::INFINITY;
            if n > 0 {
                a = a.min(nt.max_step_scaled(&nt.scaled_primal(&dx.mat))?);
                a = a.min(nt.max_step_scaled(&nt.scaled_dual(&dz.mat))?);
            }
            for k in 0..m {
                if dx.lin[k] < 0.0 {
                    a = a.min(-x.lin[k] / dx.lin[k]);
                }
                if dz.lin[k] < 0.0 {
                    a = a.min(-z.lin[k] / dz.lin[k]);
                }
            }
            if dtau < 0.0 {
                a = a.min(-tau / dtau);
            }
            if dkappa < 0.0 {
                a = a.min(-kappa / dkappa);
            }
            Ok(a)
        };

        // Predictor.
        let neg_x = x.scale(-1.0);
        let (dxa, _, dza, dtaua, dkappaa) = solve(&rp, &rd, rg, &neg_x, -tau * kappa);
        let Ok(alpha_a) = step_len(&dxa, &dza, dtaua, dkappaa) else {
            status = ConicStatus::Numerical;
            break;
        };
        let alpha_a = alpha_a.min(1.0);
        let sigma = (1.0 - alpha_a).powi(3).clamp(0.0, 1.0);

        // Corrector.
        let gamma = sigma;
        let r1: Vec<f64> = rp.iter().map(|v| (1.0 - gamma) * v).collect();
        let r2 = rd.scale(1.0 - gamma);
        let r3 = (1.0 - gamma) * rg;
        let mut r4 = Cv::zeros(n, m);
        if n > 0 {
            let ta = nt.scaled_primal(&dxa.mat);
            let tz = nt.scaled_dual(&dza.mat);
            let prod = ta.matmul(&tz);
            let mut rhs = Mat::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    rhs[(i, j)] = -0.5 * (prod[(i, j)] + prod[(j, i)]);
                }
                rhs[(i, i)] += gamma * mu - nt.lam[i] * nt.lam[i];
            }
            r4.mat = nt.unscale_complementarity(&rhs);
        }
        for k in 0..m {
            let lam2 = nt.lam_lin[k] * nt.lam_lin[k];
            r4.lin[k] = (gamma * mu - lam2 - dxa.lin[k] * dza.lin[k]) / z.lin[k];
        }
        let r5 = gamma * mu - tau * kappa - dtaua * dkappaa;
        let (dx, dy, dz, dtau, dkappa) = solve(&r1, &r2, r3, &r4, r5);
        let Ok(amax) = step_len(&dx, &dz, dtau, dkappa) else {
            status = ConicStatus::Numerical;
            break;
        };
        let alpha = (0.98 * amax).min(1.0);
        if !alpha.is_finite() || alpha < 1e-12 {
            stall += 1;
            if stall > 3 {
                status = ConicStatus::Numerical;
                break;
            }
        } else {
            stall = 0;
        }
        x = x.axpy(alpha, &dx);
        z = z.axpy(alpha, &dz);
        for (yi, d) in y.iter_mut().zip(&dy) {
            *yi += alpha * d;
        }
        tau += alpha * dtau;
        kappa += alpha * dkappa;
        // Normalize the embedding so iterates stay O(1).
        let scale = (tau + kappa).max(1e-300);
        if !(1e-6..=1e6).contains(&scale) {
            x = x.scale(1.0 / scale);
            z = z.scale(1.0 / scale);
            y.iter_mut().for_each(|v| *v /= scale);
            tau /= scale;
            kappa /= scale;
        }
    }

    if matches!(status, ConicStatus::MaxIter | ConicStatus::Numerical) {
        if let Some((_, bx, by_, bz, btau)) = best {
            x = bx;
            y = by_;
            z = bz;
            tau = btau;
        }
    }

    let rec = history.last().copied();
    let (div, cert) = match status {
        ConicStatus::PrimalInfeasible => (dot(b, &y), true),
        ConicStatus::DualInfeasible => (-c.dot(&x), true),
        _ => (tau, false),
    };
    let div = if div.abs() > 0.0 { div } else { 1.0 };
    let xs = x.scale(1.0 / div);
    let zs = z.scale(sc.obj_scale / div);
    let ys: Vec<f64> = y
        .iter()
        .zip(&sc.row_scale)
        .map(|(v, r)| v * r * sc.obj_scale / div)
        .collect();
    let _ = cert;
    let primal_obj = c.dot(&xs) * sc.obj_scale;
    let dual_obj = p.rows.iter().zip(&ys).map(|(r, v)| r.rhs * v).sum();
    let (pres, dres, gap) = if let Some(r) = rec {
        let mut best_rec = r;
        if matches!(status, ConicStatus::MaxIter | ConicStatus::Numerical) {
            let mut m_best = f64::INFINITY;
            for h in &history {
                let mm = h.primal_residual.max(h.dual_residual).max(h.gap);
                if mm < m_best {
                    m_best = mm;
                    best_rec = *h;
                }
            }
        }
        (best_rec.primal_residual, best_rec.dual_residual, best_rec.gap)
    } else {
        (f64::NAN, f64::NAN, f64::NAN)
    };
    Ok(ConicSolution {
        status,
        x: xs.mat,
        s: xs.lin,
        y: ys,
        z: zs.mat,
        primal_obj,
        dual_obj,
        primal_residual: pres,
        dual_residual: dres,
        gap,
        iterations,
        history,
    })
}
