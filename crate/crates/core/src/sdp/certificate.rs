//! Search for `α, β > 0` with `αA + βB ⪰ 0`.
//!
//! `s ↦ λ_min((1−s)Â + sB̂)` is concave on `[0, 1]` for the Frobenius
//! normalized pair, so a golden-section search finds its global maximum.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::symmat::{lambda_min, SymMat};

const GOLDEN_ITERS: usize = 96;
const S_CLAMP: f64 = 1e-9;
const SNAP_MAX_DEN: u64 = 64;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AbCertificate {
    pub alpha: f64,
    pub beta: f64,
    /// `λ_min(αA + βB) / (α‖A‖ + β‖B‖)`
    pub margin: f64,
}

/// Golden-section maximization of a unimodal function on `[lo, hi]`.
pub fn golden_max(f: impl Fn(f64) -> f64, lo: f64, hi: f64, iters: usize) -> (f64, f64) {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..iters {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
        if b - a <= f64::EPSILON * (a.abs() + b.abs()).max(1e-300) {
            break;
        }
    }
    let mut best = if fc >= fd { (c, fc) } else { (d, fd) };
    for x in [lo, hi] {
        let fx = f(x);
        if fx > best.1 {
            best = (x, fx);
        }
    }
    best
}

fn lmin(m: &SymMat) -> f64 {
    lambda_min(m).unwrap_or(f64::NEG_INFINITY)
}

/// Margin of the combination `αA + βB`.
pub fn combination_margin(a: &SymMat, b: &SymMat, alpha: f64, beta: f64) -> f64 {
    let denom = alpha * a.frob_norm() + beta * b.frob_norm();
    let l = lmin(&a.scale(alpha).axpy(beta, b));
    if denom > 0.0 {
        l / denom
    } else {
        l
    }
}

/// Best rational `p/q` with `q ≤ max_den` from the continued fraction of `x > 0`.
fn best_rational(x: f64, max_den: u64) -> Option<(u64, u64)> {
    if !(x.is_finite() && x > 0.0) {
        return None;
    }
    let (mut h0, mut h1) = (0u64, 1u64);
    let (mut k0, mut k1) = (1u64, 0u64);
    let mut r = x;
    for _ in 0..40 {
        let a = r.floor();
        if a > 1e12 {
            break;
        }
        let a = a as u64;
        let h2 = a.checked_mul(h1)?.checked_add(h0)?;
        let k2 = a.checked_mul(k1)?.checked_add(k0)?;
        if k2 > max_den {
            break;
        }
        (h0, h1, k0, k1) = (h1, h2, k1, k2);
        let frac = r - a as f64;
        if frac < 1e-12 {
            break;
        }
        r = 1.0 / frac;
    }
    if k1 == 0 || h1 == 0 {
        None
    } else {
        Some((h1, k1))
    }
}

/// Finds `(α, β) = (1, τ)` with `τ > 0` maximizing the normalized margin.
/// `None` when the best margin is below `−tol`.
pub fn solve_ab_certificate(a: &SymMat, b: &SymMat, tol: f64) -> Result<Option<AbCertificate>> {
    let best = best_ab_combination(a, b)?;
    Ok((best.margin >= -tol).then_some(best))
}

/// The positive combination with the largest normalized margin, whether or
/// not that margin is nonnegative.
pub fn best_ab_combination(a: &SymMat, b: &SymMat) -> Result<AbCertificate> {
    if a.n() != b.n() {
        return Err(Error::DimensionMismatch {
            expected: a.n(),
            found: b.n(),
        });
    }
    if !a.is_finite() || !b.is_finite() {
        return Err(Error::NonFinite("certificate data"));
    }
    let (na, nb) = (a.frob_norm(), b.frob_norm());
    if na == 0.0 || nb == 0.0 {
        let other = if na == 0.0 { b } else { a };
        let m = if other.frob_norm() > 0.0 {
            lmin(other) / other.frob_norm()
        } else {
            0.0
        };
        return Ok(AbCertificate {
            alpha: 1.0,
            beta: 1.0,
            margin: m,
        });
    }
    let ah = a.scale(1.0 / na);
    let bh = b.scale(1.0 / nb);
    let h = |s: f64| lmin(&ah.scale(1.0 - s).axpy(s, &bh));
    let (s, _) = golden_max(h, S_CLAMP, 1.0 - S_CLAMP, GOLDEN_ITERS);
    let tau = s / (1.0 - s) * na / nb;
    let raw = combination_margin(a, b, 1.0, tau);
    let mut best = AbCertificate {
        alpha: 1.0,
        beta: tau,
        margin: raw,
    };
    if let Some((p, q)) = best_rational(tau, SNAP_MAX_DEN) {
        let t = p as f64 / q as f64;
        if (t - tau).abs() <= 1e-6 * tau.max(1.0) {
            let snapped = combination_margin(a, b, 1.0, t);
            if snapped >= raw - 1e-14 {
                best = AbCertificate {
                    alpha: 1.0,
                    beta: t,
                    margin: snapped,
                };
            }
        }
    }
    Ok(best)
}

/// Whether some `(α, β) ≠ 0` of either sign gives `αA + βB ⪰ 0`; returns the
/// best such pair. Each sign quadrant is a concave 1-D search.
pub fn psd_combination_exists(a: &SymMat, b: &SymMat, tol: f64) -> Result<Option<AbCertificate>> {
    if a.n() != b.n() {
        return Err(Error::DimensionMismatch {
            expected: a.n(),
            found: b.n(),
        });
    }
    let (na, nb) = (a.frob_norm().max(1e-300), b.frob_norm().max(1e-300));
    let ah = a.scale(1.0 / na);
    let bh = b.scale(1.0 / nb);
    let mut best: Option<(f64, f64, f64)> = None;
    for (sa, sb) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
        let h = |s: f64| lmin(&ah.scale(sa * (1.0 - s)).axpy(sb * s, &bh));
        let (s, v) = golden_max(h, 0.0, 1.0, GOLDEN_ITERS);
        if best.map_or(true, |b| v > b.2) {
            best = Some((sa * (1.0 - s) / na, sb * s / nb, v));
        }
    }
    let (alpha, beta, v) = best.unwrap();
    Ok((v >= -tol).then_some(AbCertificate {
        alpha,
        beta,
        margin: v,
    }))
}

/// Necessary diagonal test: some `(α, β) ≠ 0` with `αA_ii + βB_ii ≥ 0` for all `i`.
pub fn diagonal_combination_exists(a: &SymMat, b: &SymMat) -> Option<(f64, f64)> {
    let pairs: Vec<(f64, f64)> = (0..a.n()).map(|i| (a.get(i, i), b.get(i, i))).collect();
    let nonzero: Vec<&(f64, f64)> = pairs.iter().filter(|p| p.0 != 0.0 || p.1 != 0.0).collect();
    if nonzero.is_empty() {
        return Some((1.0, 0.0));
    }
    let feasible = |al: f64, be: f64| pairs.iter().all(|(x, y)| al * x + be * y >= 0.0);
    for (x, y) in nonzero {
        for (al, be) in [(*y, -*x), (-*y, *x)] {
            if feasible(al, be) {
                return Some((al, be));
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(rows: &[&[f64]]) -> SymMat {
        SymMat::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn opposite_pair_gets_unit_certificate() {
        let b = m(&[&[-1.0, -2.0], &[-2.0, -1.0]]);
        let c = b.neg();
        let cert = solve_ab_certificate(&b, &c, 1e-8).unwrap().unwrap();
        assert_eq!((cert.alpha, cert.beta), (1.0, 1.0));
        assert_eq!(cert.margin, 0.0);
    }

    #[test]
    fn disk_and_exterior_ratio() {
        let b1 = SymMat::diag(&[1.0, 1.0, -0.5]);
        let b6 = SymMat::diag(&[-1.0, -1.0, 1.0]);
        let cert = solve_ab_certificate(&b1, &b6, 1e-8).unwrap().unwrap();
        assert_eq!((cert.alpha, cert.beta), (1.0, 0.75));
        assert!(cert.margin > 0.0);
    }

    #[test]
    fn refuted_pair_has_no_certificate() {
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
        assert!(solve_ab_certificate(&a, &b, 1e-8).unwrap().is_none());
        assert!(psd_combination_exists(&a, &b, 1e-8).unwrap().is_none());
        assert!(diagonal_combination_exists(&a, &b).is_none());
    }

    #[test]
    fn rational_snapping() {
        assert_eq!(best_rational(0.75 + 1e-13, 64), Some((3, 4)));
        assert_eq!(best_rational(1.0, 64), Some((1, 1)));
        assert_eq!(best_rational(2.5, 64), Some((5, 2)));
    }

    fn sym3() -> impl Strategy<Value = SymMat> {
        prop::collection::vec(-1.0f64..1.0, 6).prop_map(|d| SymMat::from_packed(3, d).unwrap())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn lambda_min_is_concave_along_lines(a in sym3(), b in sym3(), s in 0.0f64..1.0, t in 0.0f64..1.0) {
            let f = |x: f64| lmin(&a.scale(1.0 - x).axpy(x, &b));
            let mid = 0.5 * (s + t);
            prop_assert!(f(mid) >= 0.5 * (f(s) + f(t)) - 1e-12);
        }

        #[test]
        fn certificate_is_sound(a in sym3(), b in sym3()) {
            if let Some(c) = solve_ab_certificate(&a, &b, 1e-8).unwrap() {
                prop_assert!(c.alpha > 0.0 && c.beta > 0.0);
                let comb = a.scale(c.alpha).axpy(c.beta, &b);
                prop_assert!(lmin(&comb) >= -1e-8 * (c.alpha * a.frob_norm() + c.beta * b.frob_norm()));
            }
        }

        #[test]
        fn certificate_is_scale_invariant(a in sym3(), b in sym3(), ka in 0.1f64..10.0, kb in 0.1f64..10.0) {
            let c1 = solve_ab_certificate(&a, &b, 1e-8).unwrap();
            let c2 = solve_ab_certificate(&a.scale(ka), &b.scale(kb), 1e-8).unwrap();
            if let (Some(x), Some(y)) = (c1, c2) {
                prop_assert!((x.margin - y.margin).abs() <= 1e-9);
            }
            let m1 = c1.map(|c| c.margin);
            let m2 = c2.map(|c| c.margin);
            // Statuses may only disagree within the tolerance band.
            if m1.is_some() != m2.is_some() {
                let v = m1.or(m2).unwrap();
                prop_assert!(v.abs() <= 1e-7);
            }
        }
    }
}
