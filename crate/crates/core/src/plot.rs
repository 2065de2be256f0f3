//! Raster and vector plots of the feasible slice `f₊(1,𝔅) ⊂ R²`.
//!
//! A pixel is gray exactly when every member satisfies `q(u,1,B) ≥ 0` at
//! its center, so the raster is a faithful sign map with no interpolation.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::model::{eval_quadratic, ConstraintSet};
use crate::oracle::{region_contains, Box2};

pub const GRAY: [u8; 3] = [192, 192, 192];
pub const WHITE: [u8; 3] = [255, 255, 255];

#[derive(Clone, Debug)]
pub struct Raster {
    pub bx: Box2,
    pub resolution: usize,
    /// Row-major, row 0 at the top.
    pub inside: Vec<bool>,
}

impl Raster {
    pub fn gray_fraction(&self) -> f64 {
        let k = self.inside.iter().filter(|v| **v).count();
        k as f64 / self.inside.len() as f64
    }

    pub fn is_gray(&self, col: usize, row: usize) -> bool {
        self.inside[row * self.resolution + col]
    }
}

fn check_plot_args(s: &ConstraintSet, bx: &Box2, resolution: usize) -> Result<()> {
    if s.n != 3 {
        return Err(Error::InvalidArgument(format!(
            "plots need n − 1 = 2, got n = {}",
            s.n
        )));
    }
    if resolution == 0 {
        return Err(Error::InvalidArgument("resolution must be positive".into()));
    }
    let ok = bx.lo.iter().chain(&bx.hi).all(|v| v.is_finite())
        && bx.hi[0] > bx.lo[0]
        && bx.hi[1] > bx.lo[1];
    if !ok {
        return Err(Error::InvalidArgument("plot box is empty".into()));
    }
    Ok(())
}

pub fn rasterize(s: &ConstraintSet, bx: Box2, resolution: usize) -> Result<Raster> {
    check_plot_args(s, &bx, resolution)?;
    let inside: Vec<bool> = (0..resolution * resolution)
        .into_par_iter()
        .map(|k| region_contains(s, &bx.pixel_center(k % resolution, k / resolution, resolution)))
        .collect();
    Ok(Raster {
        bx,
        resolution,
        inside,
    })
}

/// Binary PPM (`P6`, maxval 255).
pub fn to_ppm(r: &Raster) -> Vec<u8> {
    let n = r.resolution;
    let mut out = format!("P6\n{n} {n}\n255\n").into_bytes();
    out.reserve(3 * n * n);
    for g in &r.inside {
        out.extend_from_slice(if *g { &GRAY } else { &WHITE });
    }
    out
}

/// Decodes a `P6` image as written by [`to_ppm`].
pub fn decode_ppm(bytes: &[u8]) -> Result<(usize, usize, Vec<[u8; 3]>)> {
    let bad = |m: &str| Error::InvalidArgument(format!("bad PPM: {m}"));
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("header"))?);
    }
    pos += 1;
    if fields[0] != "P6" || fields[3] != "255" {
        return Err(bad("expected P6 with maxval 255"));
    }
    let w: usize = fields[1].parse().map_err(|_| bad("width"))?;
    let h: usize = fields[2].parse().map_err(|_| bad("height"))?;
    let data = bytes.get(pos..).ok_or_else(|| bad("missing pixels"))?;
    if data.len() != 3 * w * h {
        return Err(bad("pixel count"));
    }
    let px = data.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
    Ok((w, h, px))
}

/// Zero-level segments of `q(u,1,B)` by marching squares on the pixel
/// corner grid, in pixel coordinates.
fn contour_segments(s: &ConstraintSet, member: usize, r: &Raster) -> Vec<[f64; 4]> {
    let n = r.resolution;
    let b = &s.members[member];
    let dx = (r.bx.hi[0] - r.bx.lo[0]) / n as f64;
    let dy = (r.bx.hi[1] - r.bx.lo[1]) / n as f64;
    let at = |c: usize, row: usize| {
        let u = [r.bx.lo[0] + c as f64 * dx, r.bx.hi[1] - row as f64 * dy];
        eval_quadratic(&u, 1.0, b).unwrap_or(f64::NAN)
    };
    let grid: Vec<Vec<f64>> = (0..=n).map(|row| (0..=n).map(|c| at(c, row)).collect()).collect();
    let mut segs = Vec::new();
    for row in 0..n {
        for c in 0..n {
            // Corners in cyclic order: top-left, top-right, bottom-right, bottom-left.
            let p = [
                (c as f64, row as f64, grid[row][c]),
                (c as f64 + 1.0, row as f64, grid[row][c + 1]),
                (c as f64 + 1.0, row as f64 + 1.0, grid[row + 1][c + 1]),
                (c as f64, row as f64 + 1.0, grid[row + 1][c]),
            ];
            let mut hits = Vec::with_capacity(4);
            for k in 0..4 {
                let (a, bb) = (p[k], p[(k + 1) % 4]);
                if (a.2 >= 0.0) != (bb.2 >= 0.0) {
                    let t = a.2 / (a.2 - bb.2);
                    hits.push((a.0 + t * (bb.0 - a.0), a.1 + t * (bb.1 - a.1)));
                }
            }
            match hits.len() {
                2 => segs.push([hits[0].0, hits[0].1, hits[1].0, hits[1].1]),
                4 => {
                    // Saddle: resolve with the sign at the cell center.
                    let center = (p[0].2 + p[1].2 + p[2].2 + p[3].2) / 4.0;
                    let (a, b2) = if (center >= 0.0) == (p[0].2 >= 0.0) {
                        ((0, 1), (2, 3))
                    } else {
                        ((0, 3), (1, 2))
                    };
                    for (i, j) in [a, b2] {
                        segs.push([hits[i].0, hits[i].1, hits[j].0, hits[j].1]);
                    }
                }
                _ => {}
            }
        }
    }
    segs
}

/// SVG 1.1 overlay: gray runs per row plus stroked zero-level curves.
pub fn to_svg(s: &ConstraintSet, r: &Raster) -> String {
    let n = r.resolution;
    let mut out = String::new();
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{n}" height="{n}" viewBox="0 0 {n} {n}">"#
    );
    let _ = writeln!(out, r#"<rect x="0" y="0" width="{n}" height="{n}" fill="rgb(255,255,255)"/>"#);
    let _ = writeln!(out, r#"<g fill="rgb(192,192,192)" shape-rendering="crispEdges">"#);
    for row in 0..n {
        let mut c = 0;
        while c < n {
            if r.is_gray(c, row) {
                let start = c;
                while c < n && r.is_gray(c, row) {
                    c += 1;
                }
                let _ = writeln!(
                    out,
                    r#"<rect x="{start}" y="{row}" width="{}" height="1"/>"#,
                    c - start
                );
            } else {
                c += 1;
            }
        }
    }
    let _ = writeln!(out, "</g>");
    let _ = writeln!(out, r#"<g fill="none" stroke="rgb(0,0,0)" stroke-width="1">"#);
    for k in 0..s.members.len() {
        let segs = contour_segments(s, k, r);
        if segs.is_empty() {
            continue;
        }
        let mut d = String::new();
        for sg in segs {
            let _ = write!(d, "M{:.3} {:.3}L{:.3} {:.3}", sg[0], sg[1], sg[2], sg[3]);
        }
        let _ = writeln!(out, r#"<path data-member="{k}" d="{d}"/>"#);
    }
    let _ = writeln!(out, "</g>");
    out.push_str("</svg>\n");
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct PlotOutput {
    pub ppm: PathBuf,
    pub svg: PathBuf,
    pub resolution: usize,
    pub gray_fraction: f64,
}

/// Writes `<stem>.ppm` and `<stem>.svg`.
pub fn emit_plot(s: &ConstraintSet, bx: Box2, resolution: usize, stem: &Path) -> Result<PlotOutput> {
    let r = rasterize(s, bx, resolution)?;
    let ppm = stem.with_extension("ppm");
    let svg = stem.with_extension("svg");
    write_atomic(&ppm, &to_ppm(&r))?;
    write_atomic(&svg, to_svg(s, &r).as_bytes())?;
    Ok(PlotOutput {
        ppm,
        svg,
        resolution,
        gray_fraction: r.gray_fraction(),
    })
}

/// Number of pixels whose color disagrees with the sign of the quadratics
/// evaluated directly at the pixel center.
pub fn sign_mismatches(s: &ConstraintSet, bx: Box2, resolution: usize, ppm: &[u8]) -> Result<usize> {
    let (w, h, px) = decode_ppm(ppm)?;
    if w != resolution || h != resolution {
        return Err(Error::InvalidArgument("image size does not match resolution".into()));
    }
    let mut bad = 0;
    for row in 0..h {
        for c in 0..w {
            let u = bx.pixel_center(c, row, resolution);
            let mut inside = true;
            for b in &s.members {
                if eval_quadratic(&u, 1.0, b)? < 0.0 {
                    inside = false;
                }
            }
            let want = if inside { GRAY } else { WHITE };
            if px[row * w + c] != want {
                bad += 1;
            }
        }
    }
    Ok(bad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symmat::SymMat;

    #[test]
    fn empty_set_is_all_gray() {
        let s = ConstraintSet::new(3, vec![]).unwrap();
        let r = rasterize(&s, Box2::square(1.0), 16).unwrap();
        assert_eq!(r.gray_fraction(), 1.0);
    }

    #[test]
    fn wrong_dimension_is_rejected() {
        let s = ConstraintSet::new(2, vec![]).unwrap();
        assert!(rasterize(&s, Box2::square(1.0), 16).is_err());
    }

    #[test]
    fn unit_disk_matches_direct_evaluation() {
        let s = ConstraintSet::new(3, vec![SymMat::diag(&[-1.0, -1.0, 1.0])]).unwrap();
        let bx = Box2::square(1.5);
        let r = rasterize(&s, bx, 120).unwrap();
        let ppm = to_ppm(&r);
        assert_eq!(sign_mismatches(&s, bx, 120, &ppm).unwrap(), 0);
        let area = r.gray_fraction() * bx.area();
        assert!((area - std::f64::consts::PI).abs() < 0.05, "{area}");
        // The center pixel block is gray, the corners white.
        assert!(r.is_gray(60, 60) && !r.is_gray(0, 0));
    }

    #[test]
    fn output_is_deterministic() {
        let s = ConstraintSet::new(3, vec![SymMat::diag(&[1.0, 1.0, -0.25])]).unwrap();
        let a = rasterize(&s, Box2::square(1.0), 40).unwrap();
        let b = rasterize(&s, Box2::square(1.0), 40).unwrap();
        assert_eq!(to_ppm(&a), to_ppm(&b));
        assert_eq!(to_svg(&s, &a), to_svg(&s, &b));
        assert!(to_svg(&s, &a).contains("data-member=\"0\""));
    }

    #[test]
    fn ppm_round_trips() {
        let s = ConstraintSet::new(3, vec![SymMat::diag(&[1.0, -1.0, 0.0])]).unwrap();
        let r = rasterize(&s, Box2::square(1.0), 9).unwrap();
        let (w, h, px) = decode_ppm(&to_ppm(&r)).unwrap();
        assert_eq!((w, h, px.len()), (9, 9, 81));
    }
}
