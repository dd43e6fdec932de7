//! Convex hulls by incremental beneath-beyond insertion, and vertex
//! enumeration of H-polytopes.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::geometry::HPolytope;
use crate::numerics::linalg::Lu;
use crate::numerics::{dot, Matrix};

/// Largest supported dimension.
pub const MAX_HULL_DIM: usize = 6;
/// Cap on the number of facet subsets examined by the subset scan.
const MAX_SUBSETS: u64 = 20_000_000;

/// An oriented hyperplane `n·y = b` with `‖n‖ = 1`, interior on the `<` side.
#[derive(Clone, Debug, PartialEq)]
pub struct Halfspace {
    pub normal: Vec<f64>,
    pub offset: f64,
}

struct Facet {
    verts: Vec<usize>,
    normal: Vec<f64>,
    offset: f64,
}

fn det_small(m: &[f64], n: usize) -> f64 {
    if n == 0 {
        return 1.0;
    }
    Lu::new(m, n, 0.0).det()
}

/// Unit normal of the hyperplane through `pts` (d points in R^d), by
/// cofactor expansion of the difference matrix.
fn hyperplane(pts: &[&[f64]]) -> Option<Vec<f64>> {
    let d = pts[0].len();
    let rows: Vec<Vec<f64>> = pts[1..].iter().map(|p| p.iter().zip(pts[0]).map(|(a, b)| a - b).collect()).collect();
    let mut n = vec![0.0; d];
    let mut minor = Vec::with_capacity((d - 1) * (d - 1));
    for (j, nj) in n.iter_mut().enumerate() {
        minor.clear();
        for r in &rows {
            minor.extend(r.iter().enumerate().filter(|&(c, _)| c != j).map(|(_, v)| *v));
        }
        let c = det_small(&minor, d - 1);
        *nj = if j % 2 == 0 { c } else { -c };
    }
    let len = n.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(len > 0.0) || !len.is_finite() {
        return None;
    }
    n.iter_mut().for_each(|v| *v /= len);
    Some(n)
}

fn make_facet(points: &Matrix<f64>, mut verts: Vec<usize>, inside: &[f64]) -> Option<Facet> {
    verts.sort_unstable();
    let pts: Vec<&[f64]> = verts.iter().map(|&i| points.row(i)).collect();
    let mut normal = hyperplane(&pts)?;
    let mut offset = dot(&normal, pts[0]);
    if dot(&normal, inside) > offset {
        normal.iter_mut().for_each(|v| *v = -*v);
        offset = -offset;
    }
    Some(Facet { verts, normal, offset })
}

/// Distance of `p` from the affine span of `basis` (orthonormal directions
/// anchored at `origin`).
fn residual(p: &[f64], origin: &[f64], basis: &[Vec<f64>]) -> Vec<f64> {
    let mut r: Vec<f64> = p.iter().zip(origin).map(|(a, b)| a - b).collect();
    for q in basis {
        let c = dot(&r, q);
        r.iter_mut().zip(q).for_each(|(v, qv)| *v -= c * qv);
    }
    r
}

/// Supporting halfspaces of `conv(points)`, one per simplicial facet
/// (coplanar facets are merged). Points are the rows of `points`.
pub fn hull_halfspaces(points: &Matrix<f64>) -> Result<Vec<Halfspace>> {
    let (n, d) = points.shape();
    if d == 0 || d > MAX_HULL_DIM {
        return Err(Error::InvalidDims(format!("hull dimension {d} outside 1..={MAX_HULL_DIM}")));
    }
    if points.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("hull input".into()));
    }
    let scale = points.max_abs().max(f64::MIN_POSITIVE);
    let eps = 1e-10 * scale;
    if n < d + 1 {
        return Err(Error::DegenerateHull(format!("{n} points cannot span R^{d}")));
    }

    // initial simplex: greedily the farthest point from the current span
    let first = (0..n)
        .max_by(|&a, &b| points[(a, 0)].total_cmp(&points[(b, 0)]).then(b.cmp(&a)))
        .expect("n > 0");
    let mut simplex = vec![first];
    let mut basis: Vec<Vec<f64>> = Vec::new();
    while simplex.len() < d + 1 {
        let origin = points.row(first);
        let (best, dist, dir) = (0..n)
            .map(|i| {
                let r = residual(points.row(i), origin, &basis);
                let len = r.iter().map(|v| v * v).sum::<f64>().sqrt();
                (i, len, r)
            })
            .fold((0, -1.0, Vec::new()), |acc, c| if c.1 > acc.1 { c } else { acc });
        if dist <= eps {
            return Err(Error::DegenerateHull(format!("points span only {} dimensions", simplex.len() - 1)));
        }
        basis.push(dir.iter().map(|v| v / dist).collect());
        simplex.push(best);
    }
    let mut inside = vec![0.0; d];
    for &i in &simplex {
        inside.iter_mut().zip(points.row(i)).for_each(|(c, v)| *c += v / (d + 1) as f64);
    }

    let degenerate = || Error::DegenerateHull("numerically degenerate facet".into());
    let mut facets: Vec<Facet> = Vec::new();
    for skip in 0..=d {
        let verts: Vec<usize> = simplex.iter().enumerate().filter(|&(k, _)| k != skip).map(|(_, &v)| v).collect();
        facets.push(make_facet(points, verts, &inside).ok_or_else(degenerate)?);
    }

    let mut ridges: HashMap<Vec<usize>, usize> = HashMap::new();
    let mut ridge = Vec::with_capacity(d);
    for p in 0..n {
        let x = points.row(p);
        let visible: Vec<usize> =
            (0..facets.len()).filter(|&f| dot(&facets[f].normal, x) - facets[f].offset > eps).collect();
        if visible.is_empty() {
            continue;
        }
        // horizon ridges appear in exactly one visible facet
        ridges.clear();
        for &f in &visible {
            let v = &facets[f].verts;
            for skip in 0..d {
                ridge.clear();
                ridge.extend(v.iter().enumerate().filter(|&(k, _)| k != skip).map(|(_, &i)| i));
                *ridges.entry(ridge.clone()).or_insert(0) += 1;
            }
        }
        let mut horizon: Vec<&Vec<usize>> = ridges.iter().filter(|(_, &c)| c == 1).map(|(r, _)| r).collect();
        horizon.sort();
        let mut fresh = Vec::with_capacity(horizon.len());
        for r in horizon {
            let mut verts = r.clone();
            verts.push(p);
            fresh.push(make_facet(points, verts, &inside).ok_or_else(degenerate)?);
        }
        let mut keep = vec![true; facets.len()];
        for &f in &visible {
            keep[f] = false;
        }
        let mut k = 0;
        facets.retain(|_| {
            k += 1;
            keep[k - 1]
        });
        facets.extend(fresh);
    }

    let mut out: Vec<Halfspace> = Vec::with_capacity(facets.len());
    for f in facets {
        let dup = out.iter().any(|h| {
            (h.offset - f.offset).abs() <= 1e-9 * scale
                && h.normal.iter().zip(&f.normal).all(|(a, b)| (a - b).abs() <= 1e-9)
        });
        if !dup {
            out.push(Halfspace { normal: f.normal, offset: f.offset });
        }
    }
    Ok(out)
}

/// Facets of `conv(points)` in the `aᵢᵀy ≤ 1` normalization. The origin
/// must be strictly inside the hull.
pub fn hull_facets(points: &Matrix<f64>) -> Result<HPolytope> {
    let hs = hull_halfspaces(points)?;
    let scale = points.max_abs();
    let d = points.cols();
    let mut normals = Vec::with_capacity(hs.len() * d);
    for h in &hs {
        if h.offset <= 1e-10 * scale {
            return Err(Error::DegenerateHull(format!(
                "origin is not strictly inside the hull (facet offset {:e})",
                h.offset
            )));
        }
        normals.extend(h.normal.iter().map(|v| v / h.offset));
    }
    HPolytope::new(Matrix::new(hs.len(), d, normals)?)
}

fn binomial(n: usize, k: usize) -> u64 {
    let mut r: u64 = 1;
    for i in 0..k as u64 {
        r = r.saturating_mul(n as u64 - i) / (i + 1);
    }
    r
}

/// Vertices of `{y : aᵢᵀy ≤ 1}` by scanning all d-subsets of facets:
/// each nonsingular subset gives a candidate, kept if feasible, and
/// candidates are merged at 1e-8.
pub fn vertex_enumerate(p: &HPolytope) -> Result<Vec<Vec<f64>>> {
    let a = p.normals();
    let (f, d) = a.shape();
    if d == 0 || d > MAX_HULL_DIM {
        return Err(Error::InvalidDims(format!("dimension {d} outside 1..={MAX_HULL_DIM}")));
    }
    if binomial(f, d) > MAX_SUBSETS {
        return Err(Error::InvalidDims(format!(
            "{f} facets in dimension {d} exceed the subset-scan limit of {MAX_SUBSETS} subsets"
        )));
    }
    // bounded iff the origin is inside conv{aᵢ}
    hull_facets(a).map_err(|e| match e {
        Error::DegenerateHull(m) => Error::DegenerateHull(format!("polytope is unbounded: {m}")),
        e => e,
    })?;
    let mut out: Vec<Vec<f64>> = Vec::new();
    let mut idx: Vec<usize> = (0..d).collect();
    let mut sys = vec![0.0; d * d];
    let ones = vec![1.0; d];
    loop {
        for (r, &i) in idx.iter().enumerate() {
            sys[r * d..(r + 1) * d].copy_from_slice(a.row(i));
        }
        // Facets meeting along an edge give rank-deficient systems whose
        // rounding error survives a tight pivot test.
        let lu = Lu::new(&sys, d, 1e-9);
        if let Some(y) = lu.solve(&ones) {
            let ymax = y.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            let feasible = a.row_iter().all(|row| dot(row, &y) <= 1.0 + 1e-9 * ymax);
            if feasible && !out.iter().any(|v| v.iter().zip(&y).all(|(p, q)| (p - q).abs() <= 1e-8 * ymax)) {
                out.push(y);
            }
        }
        // next combination in lexicographic order
        let mut k = d;
        loop {
            if k == 0 {
                return Ok(out);
            }
            k -= 1;
            if idx[k] < f - d + k {
                break;
            }
        }
        idx[k] += 1;
        for j in k + 1..d {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Vertices of a bounded `{y : aᵢᵀy ≤ 1}` via polarity: they are the
/// facet normals of `conv{aᵢ}`. Works for many facets.
pub fn vertices_by_duality(p: &HPolytope) -> Result<Vec<Vec<f64>>> {
    let dual = hull_facets(p.normals()).map_err(|e| match e {
        Error::DegenerateHull(m) => Error::DegenerateHull(format!("polytope is unbounded: {m}")),
        e => e,
    })?;
    Ok(dual.normals().row_iter().map(<[f64]>::to_vec).collect())
}
