//! Canonical test surfaces with closed-form oracles.
//!
//! - `flat_torus`: square grid torus, identically flat.
//! - `polygon_surface`: the closed genus-g surface obtained from the regular
//!   hyperbolic 4g-gon with vertex angle `2*pi/(4g)` and opposite sides glued
//!   with a reversal. Sampled as a geodesic triangulation of the smooth
//!   surface, so the discrete metric converges to curvature -1 under
//!   refinement while Gauss-Bonnet stays exact.
//! - `disk`: geodesic polar mesh of a constant-curvature `-k^2` disk.
//!
//! The polygon builder also returns the "diameter" loop through the center
//! between two identified edge midpoints; it is an exact discrete geodesic
//! whose length is `2*acosh(cot(pi/(4g)))` at every refinement level.

use crate::mesh::{DiscreteMetric, Mesh, MeshError};
use std::collections::HashMap;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("unknown fixture name {0:?}")]
    UnknownName(String),
    #[error("fixture level must be at least 1 for polygon surfaces")]
    LevelTooSmall,
    #[error("disk fixture requires k >= 0 and radius > 0")]
    BadDiskParams,
    #[error("mesh construction failed: {0}")]
    Mesh(#[from] MeshError),
    #[error("glued edges disagree in length by {0:.3e}")]
    GluingMismatch(f64),
}

/// Fixture request, as exposed on the command line.
#[derive(Debug, Clone, PartialEq)]
pub enum Fixture {
    FlatTorus { level: u32 },
    OctagonG2 { level: u32 },
    PolygonG3 { level: u32 },
    Disk { k: f64, radius: f64, level: u32 },
}

impl Fixture {
    pub fn parse(name: &str, level: u32, k: f64, radius: f64) -> Result<Fixture, FixtureError> {
        match name {
            "flat_torus" => Ok(Fixture::FlatTorus { level }),
            "octagon_g2" => Ok(Fixture::OctagonG2 { level }),
            "polygon_g3" => Ok(Fixture::PolygonG3 { level }),
            "disk_k" => Ok(Fixture::Disk { k, radius, level }),
            other => Err(FixtureError::UnknownName(other.to_string())),
        }
    }

    pub fn build(&self) -> Result<(Mesh, DiscreteMetric), FixtureError> {
        match *self {
            Fixture::FlatTorus { level } => flat_torus(level),
            Fixture::OctagonG2 { level } => polygon_surface(2, level).map(|p| (p.mesh, p.metric)),
            Fixture::PolygonG3 { level } => polygon_surface(3, level).map(|p| (p.mesh, p.metric)),
            Fixture::Disk { k, radius, level } => disk(k, radius, level),
        }
    }
}

/// Flat square torus, `4*2^level` cells per side; every angle defect is zero.
pub fn flat_torus(level: u32) -> Result<(Mesh, DiscreteMetric), FixtureError> {
    let n = 4usize << level;
    let idx = |i: usize, j: usize| (i % n) * n + (j % n);
    let mut faces = Vec::with_capacity(2 * n * n);
    for i in 0..n {
        for j in 0..n {
            faces.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
            faces.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
        }
    }
    let mesh = Mesh::new(n * n, faces, 1)?;
    let mut lengths = vec![0.0; mesh.n_edges()];
    for (ei, e) in mesh.edges().iter().enumerate() {
        let (ai, aj) = (e.a / n, e.a % n);
        let (bi, bj) = (e.b / n, e.b % n);
        let di = ((ai + n - bi) % n).min((bi + n - ai) % n);
        let dj = ((aj + n - bj) % n).min((bj + n - aj) % n);
        lengths[ei] = ((di * di + dj * dj) as f64).sqrt();
    }
    let metric = DiscreteMetric::new(&mesh, lengths)?;
    Ok((mesh, metric))
}

/// Closed genus-g polygon surface plus the distinguished diameter geodesic.
pub struct PolygonFixture {
    pub mesh: Mesh,
    pub metric: DiscreteMetric,
    /// Closed vertex loop through the center between identified midpoints.
    pub diameter_loop: Vec<usize>,
    pub genus: u32,
    pub level: u32,
}

/// Exact length of the diameter loop (twice the apothem of the 4g-gon).
pub fn polygon_diameter_length(genus: u32) -> f64 {
    let n = 4.0 * genus as f64;
    2.0 * cot(PI / n).acosh()
}

/// Smooth area of the genus-g hyperbolic surface.
pub fn hyperbolic_area(genus: u32) -> f64 {
    4.0 * PI * (genus as f64 - 1.0)
}

fn cot(x: f64) -> f64 {
    x.cos() / x.sin()
}

fn mink(u: [f64; 3], v: [f64; 3]) -> f64 {
    u[0] * v[0] + u[1] * v[1] - u[2] * v[2]
}

fn hyp_dist(u: [f64; 3], v: [f64; 3]) -> f64 {
    (-mink(u, v)).max(1.0).acosh()
}

fn hyp_midpoint(u: [f64; 3], v: [f64; 3]) -> [f64; 3] {
    let s = [u[0] + v[0], u[1] + v[1], u[2] + v[2]];
    let norm = (-mink(s, s)).sqrt();
    [s[0] / norm, s[1] / norm, s[2] / norm]
}

fn polar_point(dist: f64, angle: f64) -> [f64; 3] {
    [dist.sinh() * angle.cos(), dist.sinh() * angle.sin(), dist.cosh()]
}

struct UnionFind(Vec<usize>);
impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind((0..n).collect())
    }
    fn find(&mut self, x: usize) -> usize {
        if self.0[x] != x {
            let r = self.find(self.0[x]);
            self.0[x] = r;
        }
        self.0[x]
    }
    fn unite(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = (ra.min(rb), ra.max(rb));
            self.0[hi] = lo;
        }
    }
}

/// Builds the genus-g regular 4g-gon surface at subdivision `level >= 1`.
pub fn polygon_surface(genus: u32, level: u32) -> Result<PolygonFixture, FixtureError> {
    if level < 1 {
        return Err(FixtureError::LevelTooSmall);
    }
    let n = 4 * genus as usize;
    let alpha = PI / n as f64;
    // right half-triangles (center O, corner A, edge midpoint M) with angles
    // (alpha at O, pi/2 at M, alpha at A); both legs have cosh = cot(alpha)
    let apothem = cot(alpha).acosh();
    let circum = (cot(alpha) * cot(alpha)).acosh();

    // pre-identification vertex positions inside the polygon
    let mut pos: Vec<[f64; 3]> = Vec::new();
    pos.push([0.0, 0.0, 1.0]); // O
    for k in 0..n {
        pos.push(polar_point(circum, 2.0 * PI * k as f64 / n as f64));
    }
    for k in 0..n {
        pos.push(polar_point(apothem, 2.0 * PI * k as f64 / n as f64 + alpha));
    }
    let o = 0usize;
    let a = |k: usize| 1 + (k % n);
    let m = |k: usize| 1 + n + (k % n);

    let mut faces: Vec<[usize; 3]> = Vec::new();
    for k in 0..n {
        faces.push([o, a(k), m(k)]);
        faces.push([o, m(k), a(k + 1)]);
    }
    // boundary polyline of polygon side k, from A_k to A_{k+1}
    let mut bnd: Vec<Vec<usize>> = (0..n).map(|k| vec![a(k), m(k), a(k + 1)]).collect();
    // spokes from the center to each edge midpoint
    let mut spoke: Vec<Vec<usize>> = (0..n).map(|k| vec![o, m(k)]).collect();

    for _ in 0..level {
        let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |u: usize, v: usize, pos: &mut Vec<[f64; 3]>| -> usize {
            let key = (u.min(v), u.max(v));
            *mid.entry(key).or_insert_with(|| {
                pos.push(hyp_midpoint(pos[u], pos[v]));
                pos.len() - 1
            })
        };
        let mut next_faces = Vec::with_capacity(4 * faces.len());
        for &[p, q, r] in &faces {
            let pq = midpoint(p, q, &mut pos);
            let qr = midpoint(q, r, &mut pos);
            let rp = midpoint(r, p, &mut pos);
            next_faces.push([p, pq, rp]);
            next_faces.push([pq, q, qr]);
            next_faces.push([rp, qr, r]);
            next_faces.push([pq, qr, rp]);
        }
        faces = next_faces;
        let refine = |line: &Vec<usize>, mid: &HashMap<(usize, usize), usize>| -> Vec<usize> {
            let mut out = Vec::with_capacity(2 * line.len() - 1);
            for w in 0..line.len() - 1 {
                let (u, v) = (line[w], line[w + 1]);
                out.push(u);
                out.push(mid[&(u.min(v), u.max(v))]);
            }
            out.push(*line.last().unwrap());
            out
        };
        bnd = bnd.iter().map(|l| refine(l, &mid)).collect();
        spoke = spoke.iter().map(|l| refine(l, &mid)).collect();
    }

    // opposite-side gluing with reversal: side k at parameter t matches side
    // k + n/2 at parameter 1 - t
    let mut uf = UnionFind::new(pos.len());
    for k in 0..n / 2 {
        let partner = k + n / 2;
        let len = bnd[k].len();
        assert_eq!(len, bnd[partner].len());
        for i in 0..len {
            uf.unite(bnd[k][i], bnd[partner][len - 1 - i]);
        }
    }

    // compact canonical ids
    let mut canon = vec![usize::MAX; pos.len()];
    let mut count = 0usize;
    for v in 0..pos.len() {
        let r = uf.find(v);
        if canon[r] == usize::MAX {
            canon[r] = count;
            count += 1;
        }
        canon[v] = canon[r];
    }

    // rotate each face so the smallest canonical id comes first; Mesh::new
    // applies the same rotation, keeping our side indices aligned with its
    let mut mapped: Vec<[usize; 3]> = Vec::with_capacity(faces.len());
    for f in faces.iter_mut() {
        let c = [canon[f[0]], canon[f[1]], canon[f[2]]];
        let k = (0..3).min_by_key(|&k| c[k]).unwrap();
        *f = [f[k], f[(k + 1) % 3], f[(k + 2) % 3]];
        mapped.push([c[k], c[(k + 1) % 3], c[(k + 2) % 3]]);
    }
    let mesh = Mesh::new(count, mapped, genus)?;

    // side lengths from the pre-identification charts; glued sides must agree
    let mut lengths = vec![f64::NAN; mesh.n_edges()];
    let mut worst = 0.0f64;
    for (fi, f) in faces.iter().enumerate() {
        for s in 0..3 {
            let (u, v) = (f[s], f[(s + 1) % 3]);
            let l = hyp_dist(pos[u], pos[v]);
            let ei = mesh.face_edges()[fi][s];
            if lengths[ei].is_nan() {
                lengths[ei] = l;
            } else {
                worst = worst.max((lengths[ei] - l).abs());
            }
        }
    }
    if worst > 1e-9 {
        return Err(FixtureError::GluingMismatch(worst));
    }
    let metric = DiscreteMetric::new(&mesh, lengths)?;

    // diameter loop: midpoint M_0 -> O along spoke 0, then O -> M_{n/2}
    let mut diameter: Vec<usize> = spoke[0].iter().rev().map(|&v| canon[v]).collect();
    let forward = &spoke[n / 2];
    // skip O (already present), drop the final midpoint (identified with M_0)
    for &v in forward.iter().skip(1).take(forward.len() - 2) {
        diameter.push(canon[v]);
    }
    debug_assert_eq!(canon[spoke[n / 2][spoke[n / 2].len() - 1]], diameter[0]);

    Ok(PolygonFixture { mesh, metric, diameter_loop: diameter, genus, level })
}

/// Geodesic distance between polar points in curvature `-k^2` (flat if k=0).
fn model_dist(k: f64, r1: f64, r2: f64, dphi: f64) -> f64 {
    if k == 0.0 {
        let d2 = r1 * r1 + r2 * r2 - 2.0 * r1 * r2 * dphi.cos();
        d2.max(0.0).sqrt()
    } else {
        let c = ((k * r1).cosh() * (k * r2).cosh() - (k * r1).sinh() * (k * r2).sinh() * dphi.cos()).max(1.0);
        c.acosh() / k
    }
}

/// Polar geodesic mesh of the radius-`radius` disk with curvature `-k^2`.
pub fn disk(k: f64, radius: f64, level: u32) -> Result<(Mesh, DiscreteMetric), FixtureError> {
    if !(k >= 0.0) || !(radius > 0.0) {
        return Err(FixtureError::BadDiskParams);
    }
    let rings = 16usize << level;
    let ntheta = 96usize << level;
    let dr = radius / rings as f64;
    let idx = |j: usize, t: usize| 1 + (j - 1) * ntheta + (t % ntheta);
    let nv = 1 + rings * ntheta;
    let mut faces = Vec::new();
    for t in 0..ntheta {
        faces.push([0, idx(1, t), idx(1, t + 1)]);
    }
    for j in 1..rings {
        for t in 0..ntheta {
            faces.push([idx(j, t), idx(j + 1, t), idx(j + 1, t + 1)]);
            faces.push([idx(j, t), idx(j + 1, t + 1), idx(j, t + 1)]);
        }
    }
    let mesh = Mesh::new(nv, faces, 0)?;
    let ring_of = |v: usize| -> (f64, f64) {
        if v == 0 {
            (0.0, 0.0)
        } else {
            let j = (v - 1) / ntheta + 1;
            let t = (v - 1) % ntheta;
            (j as f64 * dr, 2.0 * PI * t as f64 / ntheta as f64)
        }
    };
    let mut lengths = vec![0.0; mesh.n_edges()];
    for (ei, e) in mesh.edges().iter().enumerate() {
        let (r1, p1) = ring_of(e.a);
        let (r2, p2) = ring_of(e.b);
        let mut dphi = (p1 - p2).abs();
        if dphi > PI {
            dphi = 2.0 * PI - dphi;
        }
        lengths[ei] = model_dist(k, r1, r2, dphi);
    }
    let metric = DiscreteMetric::new(&mesh, lengths)?;
    Ok((mesh, metric))
}

/// Boundary length of the curvature `-k^2` disk of radius r.
pub fn disk_boundary_length(k: f64, r: f64) -> f64 {
    if k == 0.0 {
        2.0 * PI * r
    } else {
        2.0 * PI * (k * r).sinh() / k
    }
}

/// Area of the curvature `-k^2` disk of radius r.
pub fn disk_area(k: f64, r: f64) -> f64 {
    if k == 0.0 {
        PI * r * r
    } else {
        2.0 * PI * ((k * r).cosh() - 1.0) / (k * k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::angle_defect_curvature;
    use approx::assert_relative_eq;

    #[test]
    fn flat_torus_is_flat() {
        let (mesh, metric) = flat_torus(0).unwrap();
        assert_eq!(mesh.euler_characteristic(), 0);
        let defect = angle_defect_curvature(&mesh, &metric).unwrap();
        assert!(defect.max_abs() < 1e-12);
    }

    #[test]
    fn octagon_gauss_bonnet_exact() {
        let fx = polygon_surface(2, 2).unwrap();
        assert_eq!(fx.mesh.euler_characteristic(), -2);
        let defect = angle_defect_curvature(&fx.mesh, &fx.metric).unwrap();
        let total: f64 = defect.0.iter().sum();
        assert_relative_eq!(total, -4.0 * PI, epsilon = 1e-9);
    }

    #[test]
    fn octagon_area_converges_to_4pi() {
        let area3 = polygon_surface(2, 3).unwrap();
        let area4 = polygon_surface(2, 4).unwrap();
        let a3 = area3.metric.total_area(&area3.mesh);
        let a4 = area4.metric.total_area(&area4.mesh);
        let err3 = (a3 - 4.0 * PI).abs() / (4.0 * PI);
        let err4 = (a4 - 4.0 * PI).abs() / (4.0 * PI);
        assert!(err4 < 0.5 * err3, "err3={err3:?} err4={err4:?}");
        assert!(err4 < 0.005);
    }

    #[test]
    fn genus3_polygon_checks_out() {
        let fx = polygon_surface(3, 2).unwrap();
        assert_eq!(fx.mesh.euler_characteristic(), -4);
        let defect = angle_defect_curvature(&fx.mesh, &fx.metric).unwrap();
        let total: f64 = defect.0.iter().sum();
        assert_relative_eq!(total, -8.0 * PI, epsilon = 1e-9);
    }

    #[test]
    fn diameter_loop_has_exact_length() {
        for level in 1..=3 {
            let fx = polygon_surface(2, level).unwrap();
            let mut len = 0.0;
            let loop_ = &fx.diameter_loop;
            for i in 0..loop_.len() {
                let (u, v) = (loop_[i], loop_[(i + 1) % loop_.len()]);
                let e = fx.mesh.edge_between(u, v).expect("loop must follow edges");
                len += fx.metric.length(e);
            }
            assert_relative_eq!(len, polygon_diameter_length(2), epsilon = 1e-9);
        }
    }

    #[test]
    fn disk_boundary_length_matches() {
        let (mesh, metric) = disk(1.0, 2.0, 0).unwrap();
        assert_eq!(mesh.boundary_loops(), 1);
        let mut blen = 0.0;
        for (ei, e) in mesh.edges().iter().enumerate() {
            if e.is_boundary() {
                blen += metric.length(ei);
            }
        }
        let exact = disk_boundary_length(1.0, 2.0);
        assert!((blen - exact).abs() / exact < 0.005);
    }
}
