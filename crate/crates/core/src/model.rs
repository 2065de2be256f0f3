//! Constraint families, realized constraint sets, and the homogeneous
//! conic problem `min ⟨Q,X⟩ s.t. X ∈ J₊(𝔅), ⟨H,X⟩ = 1`.

use serde::{Deserialize, Serialize};

use crate::dense::Mat;
use crate::error::{Error, Result};
use crate::symmat::SymMat;

/// Centers of a ball family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Centers {
    List(Vec<Vec<f64>>),
    /// `step·Zᵈ ∩ [−bound, bound]ᵈ`, enumerated lexicographically.
    Lattice { dim: usize, step: f64, bound: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParabolaSpec {
    /// `λ_2, …, λ_n`
    pub lambdas: Vec<f64>,
    /// `+1` or `−1`; multiplies the whole matrix.
    pub orientation: f64,
    /// Optional nonsingular `L`; the member becomes `Lᵀ B L`.
    pub transform: Option<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConstraintFamily {
    Explicit {
        members: Vec<SymMat>,
    },
    /// `B(t) = [[I, −t], [−tᵀ, tᵀt − r²]]`: `q(u,1) ≥ 0` outside the ball.
    BallGrid {
        centers: Centers,
        radius: f64,
    },
    /// Hyperbola pieces between consecutive breakpoints `a_{k−1} < a_k`.
    Hyperbola {
        breakpoints: Vec<f64>,
        r2: f64,
        /// Accumulation point of the breakpoints, if they truncate an
        /// infinite sequence.
        limit: Option<f64>,
    },
    Parabola {
        members: Vec<ParabolaSpec>,
    },
    GeneralizedHyperbola {
        lambda: Vec<f64>,
        ell: usize,
        sigmas: Vec<f64>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSet {
    pub n: usize,
    pub members: Vec<SymMat>,
    pub provenance: Option<String>,
}

impl ConstraintSet {
    pub fn new(n: usize, members: Vec<SymMat>) -> Result<Self> {
        for m in &members {
            if m.n() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: m.n(),
                });
            }
        }
        Ok(ConstraintSet {
            n,
            members,
            provenance: None,
        })
    }

    pub fn with_provenance(mut self, p: impl Into<String>) -> Self {
        self.provenance = Some(p.into());
        self
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// The trivial set `{O}`.
    pub fn zero(n: usize) -> Self {
        ConstraintSet {
            n,
            members: vec![SymMat::zeros(n)],
            provenance: None,
        }
    }

    pub fn is_zero_set(&self) -> bool {
        self.members.len() == 1 && self.members[0].is_zero()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeoCop {
    pub n: usize,
    pub q: SymMat,
    pub h: SymMat,
    pub bset: ConstraintSet,
    /// `x = L y` restriction metadata (`n × n'`, rows of `L`).
    pub congruence: Option<Vec<Vec<f64>>>,
}

impl GeoCop {
    pub fn new(q: SymMat, h: SymMat, bset: ConstraintSet) -> Result<Self> {
        let n = q.n();
        for k in [h.n(), bset.n] {
            if k != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: k,
                });
            }
        }
        Ok(GeoCop {
            n,
            q,
            h,
            bset,
            congruence: None,
        })
    }

    pub fn with_congruence(mut self, l: Vec<Vec<f64>>) -> Self {
        self.congruence = Some(l);
        self
    }

    /// `e_n e_nᵀ`: the inequality-form normalization `z = 1`.
    pub fn last_coordinate_normalization(n: usize) -> SymMat {
        let mut h = SymMat::zeros(n);
        h.set(n - 1, n - 1, 1.0);
        h
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscretizationConfig {
    /// Strictly decreasing covering radii `ε_1 > ε_2 > …`.
    pub epsilons: Vec<f64>,
    /// Overrides the truncation bound of lattice families.
    pub box_bound: Option<f64>,
}

impl DiscretizationConfig {
    pub fn new(epsilons: Vec<f64>) -> Result<Self> {
        if epsilons.is_empty() || epsilons.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
            return Err(Error::InvalidArgument(
                "epsilon schedule must be positive and non-empty".into(),
            ));
        }
        if epsilons.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidArgument(
                "epsilon schedule must be strictly decreasing".into(),
            ));
        }
        Ok(DiscretizationConfig {
            epsilons,
            box_bound: None,
        })
    }
}

/// `q(u, z, B) = (u; z)ᵀ B (u; z)`
pub fn eval_quadratic(u: &[f64], z: f64, b: &SymMat) -> Result<f64> {
    if u.len() + 1 != b.n() {
        return Err(Error::DimensionMismatch {
            expected: b.n(),
            found: u.len() + 1,
        });
    }
    let mut x = u.to_vec();
    x.push(z);
    Ok(b.quad_form(&x))
}

pub fn ball_matrix(center: &[f64], radius: f64) -> SymMat {
    let d = center.len();
    let mut b = SymMat::zeros(d + 1);
    for i in 0..d {
        b.set(i, i, 1.0);
        b.set(i, d, -center[i]);
    }
    let tt: f64 = center.iter().map(|t| t * t).sum();
    b.set(d, d, tt - radius * radius);
    b
}

/// Hyperbola piece `(u₂ − a u₁)(u₂ − a' u₁) + r² z²`.
pub fn hyperbola_matrix(a: f64, a_next: f64, r2: f64) -> SymMat {
    let mut b = SymMat::zeros(3);
    b.set(0, 0, a * a_next);
    b.set(0, 1, -(a + a_next) / 2.0);
    b.set(1, 1, 1.0);
    b.set(2, 2, r2);
    b
}

/// Limit of the hyperbola pieces as both breakpoints tend to `ā`.
pub fn hyperbola_limit_matrix(a_bar: f64, r2: f64) -> SymMat {
    hyperbola_matrix(a_bar, a_bar, r2)
}

pub fn parabola_matrix(spec: &ParabolaSpec) -> Result<SymMat> {
    let n = spec.lambdas.len() + 1;
    if n < 2 {
        return Err(Error::InvalidFamily("parabola needs n ≥ 2".into()));
    }
    let mut b = SymMat::zeros(n);
    for (k, l) in spec.lambdas.iter().enumerate() {
        b.set(k + 1, k + 1, *l);
    }
    b.set(0, n - 1, -0.5);
    let b = b.scale(spec.orientation);
    match &spec.transform {
        None => Ok(b),
        Some(rows) => {
            if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                return Err(Error::InvalidFamily("parabola transform must be n × n".into()));
            }
            Ok(b.congruence(&Mat::from_rows(rows)))
        }
    }
}

/// `−Σ_{i≤ℓ} λ_i u_i² + Σ_{j>ℓ} Σ_{i≤ℓ} λ_j (u_j − σ u_i)² + λ_n z²`
pub fn generalized_hyperbola_matrix(lambda: &[f64], ell: usize, sigma: f64) -> Result<SymMat> {
    let n = lambda.len();
    if n < 3 || ell < 1 || ell > n - 2 {
        return Err(Error::InvalidFamily(format!(
            "need 1 ≤ ℓ ≤ n−2, got ℓ = {ell}, n = {n}"
        )));
    }
    if lambda.iter().any(|l| !(*l > 0.0)) {
        return Err(Error::InvalidFamily("λ must be positive".into()));
    }
    let mut b = SymMat::zeros(n);
    for i in 0..ell {
        let tail: f64 = lambda[ell..n - 1].iter().sum();
        b.set(i, i, -lambda[i] + tail * sigma * sigma);
        for j in ell..n - 1 {
            b.set(i, j, -lambda[j] * sigma);
        }
    }
    for j in ell..n - 1 {
        b.set(j, j, ell as f64 * lambda[j]);
    }
    b.set(n - 1, n - 1, lambda[n - 1]);
    Ok(b)
}

fn lattice_points(dim: usize, step: f64, bound: f64) -> Vec<Vec<f64>> {
    let kmax = (bound / step + 1e-9).floor() as i64;
    let mut pts = vec![Vec::new()];
    for _ in 0..dim {
        let mut next = Vec::new();
        for p in &pts {
            for k in -kmax..=kmax {
                let mut q = p.clone();
                q.push(k as f64 * step);
                next.push(q);
            }
        }
        pts = next;
    }
    pts
}

fn realize(f: &ConstraintFamily, n: usize, box_override: Option<f64>) -> Result<Vec<SymMat>> {
    match f {
        ConstraintFamily::Explicit { members } => {
            for m in members {
                if m.n() != n {
                    return Err(Error::DimensionMismatch {
                        expected: n,
                        found: m.n(),
                    });
                }
            }
            Ok(members.clone())
        }
        ConstraintFamily::BallGrid { centers, radius } => {
            if !(*radius > 0.0) {
                return Err(Error::InvalidFamily("ball radius must be positive".into()));
            }
            let pts = match centers {
                Centers::List(p) => p.clone(),
                Centers::Lattice { dim, step, bound } => {
                    if !(*step > 0.0) {
                        return Err(Error::InvalidFamily("lattice step must be positive".into()));
                    }
                    if *dim + 1 != n {
                        return Err(Error::DimensionMismatch {
                            expected: n,
                            found: dim + 1,
                        });
                    }
                    lattice_points(*dim, *step, box_override.unwrap_or(*bound))
                }
            };
            pts.iter()
                .map(|t| {
                    if t.len() + 1 != n {
                        Err(Error::DimensionMismatch {
                            expected: n,
                            found: t.len() + 1,
                        })
                    } else {
                        Ok(ball_matrix(t, *radius))
                    }
                })
                .collect()
        }
        ConstraintFamily::Hyperbola { breakpoints, r2, .. } => {
            if n != 3 {
                return Err(Error::InvalidFamily("hyperbola family lives in n = 3".into()));
            }
            if !(*r2 > 0.0) {
                return Err(Error::InvalidFamily("r² must be positive".into()));
            }
            if breakpoints.len() < 2 || breakpoints.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::InvalidFamily(
                    "breakpoints must be strictly increasing with at least two entries".into(),
                ));
            }
            Ok(breakpoints
                .windows(2)
                .map(|w| hyperbola_matrix(w[0], w[1], *r2))
                .collect())
        }
        ConstraintFamily::Parabola { members } => members
            .iter()
            .map(|s| {
                let m = parabola_matrix(s)?;
                if m.n() != n {
                    return Err(Error::DimensionMismatch {
                        expected: n,
                        found: m.n(),
                    });
                }
                Ok(m)
            })
            .collect(),
        ConstraintFamily::GeneralizedHyperbola { lambda, ell, sigmas } => {
            if lambda.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: lambda.len(),
                });
            }
            sigmas
                .iter()
                .map(|s| generalized_hyperbola_matrix(lambda, *ell, *s))
                .collect()
        }
    }
}

fn family_name(f: &ConstraintFamily) -> &'static str {
    match f {
        ConstraintFamily::Explicit { .. } => "explicit",
        ConstraintFamily::BallGrid { .. } => "ball_grid",
        ConstraintFamily::Hyperbola { .. } => "hyperbola",
        ConstraintFamily::Parabola { .. } => "parabola",
        ConstraintFamily::GeneralizedHyperbola { .. } => "generalized_hyperbola",
    }
}

/// Realizes every member of a (finite or box-truncated) family.
pub fn build_family(f: &ConstraintFamily, n: usize) -> Result<ConstraintSet> {
    let members = realize(f, n, None)?;
    for m in &members {
        if !m.is_finite() {
            return Err(Error::NonFinite("family member"));
        }
    }
    Ok(ConstraintSet::new(n, members)?.with_provenance(family_name(f)))
}

/// Frobenius-normalizes members, drops zero members (unless the set is
/// `{O}`) and removes duplicates up to `1e-12`.
pub fn normalize(s: &ConstraintSet) -> ConstraintSet {
    let mut out: Vec<SymMat> = Vec::new();
    let mut keys: Vec<Vec<i64>> = Vec::new();
    for m in &s.members {
        let nrm = m.frob_norm();
        if nrm == 0.0 {
            continue;
        }
        let u = m.scale(1.0 / nrm);
        let key: Vec<i64> = u.packed().iter().map(|v| (v / 1e-12).round() as i64).collect();
        if keys.contains(&key) {
            continue;
        }
        keys.push(key);
        out.push(u);
    }
    if out.is_empty() {
        let mut z = ConstraintSet::zero(s.n);
        z.provenance = s.provenance.clone();
        return z;
    }
    ConstraintSet {
        n: s.n,
        members: out,
        provenance: s.provenance.clone(),
    }
}

/// Nested ε-cover of the truncated family: level `k` adds, in member order,
/// every member farther than `ε_k` from all members already chosen.
pub fn discretize(
    f: &ConstraintFamily,
    n: usize,
    cfg: &DiscretizationConfig,
    k: usize,
) -> Result<ConstraintSet> {
    if k >= cfg.epsilons.len() {
        return Err(Error::InvalidArgument(format!(
            "level {k} outside schedule of length {}",
            cfg.epsilons.len()
        )));
    }
    let all = realize(f, n, cfg.box_bound)?;
    let mut chosen: Vec<usize> = Vec::new();
    for eps in &cfg.epsilons[..=k] {
        for (i, m) in all.iter().enumerate() {
            if chosen.contains(&i) {
                continue;
            }
            let covered = chosen
                .iter()
                .any(|&j| all[j].sub(m).frob_norm() <= *eps);
            if !covered {
                chosen.push(i);
            }
        }
    }
    chosen.sort_unstable();
    let members = chosen.into_iter().map(|i| all[i].clone()).collect();
    Ok(ConstraintSet::new(n, members)?.with_provenance(family_name(f)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ball_at_origin() {
        let b = ball_matrix(&[0.0, 0.0], 0.5);
        assert_eq!(b, SymMat::diag(&[1.0, 1.0, -0.25]));
        assert_eq!(eval_quadratic(&[0.0, 0.0], 1.0, &b).unwrap(), -0.25);
        let f = ConstraintFamily::BallGrid {
            centers: Centers::List(vec![vec![0.0, 0.0]]),
            radius: 0.5,
        };
        assert_eq!(build_family(&f, 3).unwrap().members[0], b);
    }

    #[test]
    fn hyperbola_first_piece() {
        let f = ConstraintFamily::Hyperbola {
            breakpoints: vec![0.0, 1.0],
            r2: 0.5,
            limit: None,
        };
        let s = build_family(&f, 3).unwrap();
        let b1 = &s.members[0];
        let c1 = SymMat::from_rows(&[vec![0.0, -0.5], vec![-0.5, 1.0]]).unwrap();
        assert_eq!(*b1, c1.block_diag(&SymMat::diag(&[0.5])));
        assert_eq!(eval_quadratic(&[0.0, 0.0], 1.0, b1).unwrap(), 0.5);
        // (u₂ − a₀u₁)(u₂ − a₁u₁) + r²z² at a generic point.
        let (u1, u2, z) = (0.7, -1.3, 0.4);
        let expect = u2 * (u2 - u1) + 0.5 * z * z;
        assert!((eval_quadratic(&[u1, u2], z, b1).unwrap() - expect).abs() < 1e-15);
    }

    #[test]
    fn parabola_polynomial() {
        let spec = ParabolaSpec {
            lambdas: vec![16.0, 3.0],
            orientation: 1.0,
            transform: None,
        };
        let b = parabola_matrix(&spec).unwrap();
        for (u1, u2) in [(0.0, 0.0), (1.5, -0.25), (-2.0, 0.7)] {
            let q = eval_quadratic(&[u1, u2], 1.0, &b).unwrap();
            assert!((q - (-u1 + 16.0 * u2 * u2 + 3.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn generalized_hyperbola_polynomial() {
        let lam = [1.0, 2.0, 3.0, 0.5];
        let b = generalized_hyperbola_matrix(&lam, 1, 0.7).unwrap();
        let (u, z): ([f64; 3], f64) = ([0.3, -1.1, 0.4], 0.9);
        let expect = -1.0 * u[0] * u[0]
            + 2.0 * (u[1] - 0.7 * u[0]).powi(2)
            + 3.0 * (u[2] - 0.7 * u[0]).powi(2)
            + 0.5 * z * z;
        assert!((eval_quadratic(&u, z, &b).unwrap() - expect).abs() < 1e-12);
        let b2 = generalized_hyperbola_matrix(&lam, 2, -0.4).unwrap();
        let expect2 = -u[0] * u[0] - 2.0 * u[1] * u[1]
            + 3.0 * ((u[2] + 0.4 * u[0]).powi(2) + (u[2] + 0.4 * u[1]).powi(2))
            + 0.5 * z * z;
        assert!((eval_quadratic(&u, z, &b2).unwrap() - expect2).abs() < 1e-12);
        assert!(generalized_hyperbola_matrix(&lam, 3, 0.0).is_err());
    }

    #[test]
    fn invalid_families() {
        let bad = ConstraintFamily::Hyperbola {
            breakpoints: vec![0.0, 2.0, 1.0],
            r2: 0.5,
            limit: None,
        };
        assert!(build_family(&bad, 3).is_err());
        let bad_r = ConstraintFamily::BallGrid {
            centers: Centers::List(vec![vec![0.0]]),
            radius: 0.0,
        };
        assert!(build_family(&bad_r, 2).is_err());
    }

    #[test]
    fn normalize_examples() {
        let s = ConstraintSet::new(2, vec![SymMat::identity(2).scale(2.0)]).unwrap();
        let out = normalize(&s);
        assert_eq!(out.members.len(), 1);
        let expect = SymMat::identity(2).scale(1.0 / 2f64.sqrt());
        assert!(out.members[0].sub(&expect).max_abs() < 1e-15);

        let z = ConstraintSet::zero(3);
        assert!(normalize(&z).is_zero_set());

        let dup = ConstraintSet::new(
            2,
            vec![
                SymMat::diag(&[1.0, -1.0]),
                SymMat::zeros(2),
                SymMat::diag(&[3.0, -3.0]),
            ],
        )
        .unwrap();
        assert_eq!(normalize(&dup).members.len(), 1);
    }

    #[test]
    fn ball_lattice_box() {
        let f = ConstraintFamily::BallGrid {
            centers: Centers::Lattice {
                dim: 2,
                step: 1.0,
                bound: 2.0,
            },
            radius: 0.5,
        };
        for eps in [1.0, 0.5, 0.1] {
            let cfg = DiscretizationConfig::new(vec![eps]).unwrap();
            assert_eq!(discretize(&f, 3, &cfg, 0).unwrap().len(), 25);
        }
    }

    #[test]
    fn hyperbola_breakpoints_count() {
        let f = ConstraintFamily::Hyperbola {
            breakpoints: vec![0.0, 1.0, 2.0, 4.0],
            r2: 0.5,
            limit: None,
        };
        let cfg = DiscretizationConfig::new(vec![0.1]).unwrap();
        assert_eq!(discretize(&f, 3, &cfg, 0).unwrap().len(), 3);
    }

    #[test]
    fn schedule_must_decrease() {
        assert!(DiscretizationConfig::new(vec![0.5, 0.5]).is_err());
        assert!(DiscretizationConfig::new(vec![]).is_err());
    }

    fn fine_hyperbola() -> ConstraintFamily {
        // Breakpoints accumulating at 5.
        let mut a = vec![0.0, 1.0, 2.0, 4.0];
        for k in 1..30 {
            a.push(5.0 - 0.5_f64.powi(k));
        }
        ConstraintFamily::Hyperbola {
            breakpoints: a,
            r2: 0.5,
            limit: Some(5.0),
        }
    }

    proptest! {
        #[test]
        fn discretization_is_nested_cover(e0 in 0.5f64..3.0, r1 in 0.1f64..0.9, r2 in 0.1f64..0.9) {
            let f = fine_hyperbola();
            let cfg = DiscretizationConfig::new(vec![e0, e0 * r1, e0 * r1 * r2]).unwrap();
            let all = build_family(&f, 3).unwrap().members;
            let mut prev: Option<ConstraintSet> = None;
            for k in 0..3 {
                let s = discretize(&f, 3, &cfg, k).unwrap();
                for m in &all {
                    let d = s.members.iter().map(|c| c.sub(m).frob_norm()).fold(f64::INFINITY, f64::min);
                    prop_assert!(d <= cfg.epsilons[k]);
                }
                if let Some(p) = &prev {
                    for m in &p.members {
                        prop_assert!(s.members.contains(m));
                    }
                }
                prev = Some(s);
            }
        }
    }
}
