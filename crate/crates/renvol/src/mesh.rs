//! Triangle-mesh kernel: discrete metrics, curvature, cotan Laplacian and
//! integration. Everything else in the crate sits on top of this substrate.
//!
//! A [`Mesh`] is purely combinatorial (oriented triangles over dense vertex
//! indices); all geometry lives in a [`DiscreteMetric`] assigning a positive
//! length to every edge. Faces are interpreted as Euclidean triangles with
//! those side lengths, so curvature concentrates at vertices as angle
//! defects and discrete Gauss-Bonnet is exact.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("face {face} violates the strict triangle inequality (lengths {lengths:?})")]
    TriangleInequality { face: usize, lengths: [f64; 3] },
    #[error("edge ({a},{b}) is incident to more than two faces")]
    NonManifoldEdge { a: usize, b: usize },
    #[error("edge ({a},{b}) is traversed twice in the same direction; orientation is inconsistent")]
    InconsistentOrientation { a: usize, b: usize },
    #[error("vertex {vertex} has a non-disk neighborhood")]
    NonDiskVertex { vertex: usize },
    #[error("Euler characteristic {chi} does not match genus {genus} with {boundary_loops} boundary loops")]
    EulerMismatch { chi: i64, genus: u32, boundary_loops: usize },
    #[error("face {face} references vertex {vertex} out of range {nv}")]
    VertexOutOfRange { face: usize, vertex: usize, nv: usize },
    #[error("face {face} repeats a vertex")]
    DegenerateFace { face: usize },
    #[error("edge ({a},{b}) has non-positive length {length}")]
    NonPositiveLength { a: usize, b: usize, length: f64 },
    #[error("metric has {got} edge lengths, mesh has {expected} edges")]
    MetricSize { got: usize, expected: usize },
    #[error("field has {got} values, expected {expected}")]
    FieldSize { got: usize, expected: usize },
    #[error("mesh is disconnected")]
    Disconnected,
}

/// Undirected edge with oriented face adjacency. `faces[0]` sees the edge as
/// `a -> b`, `faces[1]` (absent on the boundary) as `b -> a`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub left: (usize, u8),
    pub right: Option<(usize, u8)>,
}

impl Edge {
    pub fn is_boundary(&self) -> bool {
        self.right.is_none()
    }
    pub fn other(&self, v: usize) -> usize {
        if v == self.a {
            self.b
        } else {
            self.a
        }
    }
}

/// Closed (or bordered, for disk fixtures) oriented triangulated surface.
#[derive(Debug, Clone)]
pub struct Mesh {
    n_vertices: usize,
    genus: u32,
    faces: Vec<[usize; 3]>,
    edges: Vec<Edge>,
    /// edge index of each face side; side `s` runs from corner `s` to `s+1`.
    face_edges: Vec<[usize; 3]>,
    /// for each face side, the (face, side) seeing the same edge from the other side
    opposite: Vec<[Option<(usize, u8)>; 3]>,
    boundary_vertex: Vec<bool>,
    boundary_loops: usize,
}

impl Mesh {
    /// Builds the mesh and checks that it is an oriented manifold
    /// triangulation whose Euler characteristic matches the declared genus
    /// (allowing boundary loops, which only the disk fixtures use).
    pub fn new(n_vertices: usize, mut faces: Vec<[usize; 3]>, genus: u32) -> Result<Mesh, MeshError> {
        for (fi, f) in faces.iter_mut().enumerate() {
            for &v in f.iter() {
                if v >= n_vertices {
                    return Err(MeshError::VertexOutOfRange { face: fi, vertex: v, nv: n_vertices });
                }
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(MeshError::DegenerateFace { face: fi });
            }
            // canonical rotation: smallest vertex first, orientation preserved
            let k = (0..3).min_by_key(|&k| f[k]).unwrap();
            *f = [f[k], f[(k + 1) % 3], f[(k + 2) % 3]];
        }

        // Pair directed sides into undirected edges.
        let mut edge_of: std::collections::HashMap<(usize, usize), usize> = std::collections::HashMap::new();
        let mut edges: Vec<Edge> = Vec::new();
        let mut face_edges = vec![[usize::MAX; 3]; faces.len()];
        let mut opposite = vec![[None; 3]; faces.len()];
        for (fi, f) in faces.iter().enumerate() {
            for s in 0..3 {
                let (u, v) = (f[s], f[(s + 1) % 3]);
                let key = (u.min(v), u.max(v));
                match edge_of.get(&key) {
                    None => {
                        let e = Edge {
                            a: u,
                            b: v,
                            left: (fi, s as u8),
                            right: None,
                        };
                        edge_of.insert(key, edges.len());
                        face_edges[fi][s] = edges.len();
                        edges.push(e);
                    }
                    Some(&ei) => {
                        let e = &mut edges[ei];
                        if e.right.is_some() {
                            return Err(MeshError::NonManifoldEdge { a: key.0, b: key.1 });
                        }
                        if e.a == u {
                            // same direction as the existing left side
                            return Err(MeshError::InconsistentOrientation { a: key.0, b: key.1 });
                        }
                        e.right = Some((fi, s as u8));
                        face_edges[fi][s] = ei;
                        let (lf, ls) = e.left;
                        opposite[lf][ls as usize] = Some((fi, s as u8));
                        opposite[fi][s] = Some((lf, ls));
                    }
                }
            }
        }

        let mut boundary_vertex = vec![false; n_vertices];
        let mut n_boundary_edges = 0usize;
        for e in &edges {
            if e.is_boundary() {
                boundary_vertex[e.a] = true;
                boundary_vertex[e.b] = true;
                n_boundary_edges += 1;
            }
        }

        // Count boundary loops by walking boundary edges.
        let boundary_loops = {
            let mut succ: std::collections::HashMap<usize, usize> = std::collections::HashMap::new();
            for e in &edges {
                if e.is_boundary() {
                    // boundary is traversed opposite to the left face's direction
                    succ.insert(e.b, e.a);
                }
            }
            let mut seen: std::collections::HashSet<usize> = std::collections::HashSet::new();
            let mut loops = 0;
            let mut starts: Vec<usize> = succ.keys().copied().collect();
            starts.sort_unstable();
            for start in starts {
                if seen.contains(&start) {
                    continue;
                }
                loops += 1;
                let mut v = start;
                for _ in 0..=n_boundary_edges {
                    seen.insert(v);
                    v = *succ.get(&v).ok_or(MeshError::NonDiskVertex { vertex: v })?;
                    if v == start {
                        break;
                    }
                }
                if v != start {
                    return Err(MeshError::NonDiskVertex { vertex: start });
                }
            }
            loops
        };

        let chi = n_vertices as i64 - edges.len() as i64 + faces.len() as i64;
        let expected = 2 - 2 * genus as i64 - boundary_loops as i64;
        if chi != expected {
            return Err(MeshError::EulerMismatch { chi, genus, boundary_loops });
        }

        let mesh = Mesh {
            n_vertices,
            genus,
            faces,
            edges,
            face_edges,
            opposite,
            boundary_vertex,
            boundary_loops,
        };
        mesh.check_vertex_links()?;
        mesh.check_connected()?;
        Ok(mesh)
    }

    fn check_vertex_links(&self) -> Result<(), MeshError> {
        // Every vertex's incident faces must form a single fan.
        let mut incident = vec![0usize; self.n_vertices];
        for f in &self.faces {
            for &v in f {
                incident[v] += 1;
            }
        }
        for v in 0..self.n_vertices {
            if incident[v] == 0 {
                continue;
            }
            let fan = self.vertex_fan(v);
            if fan.len() != incident[v] {
                return Err(MeshError::NonDiskVertex { vertex: v });
            }
        }
        Ok(())
    }

    fn check_connected(&self) -> Result<(), MeshError> {
        if self.n_vertices == 0 {
            return Ok(());
        }
        let mut seen = vec![false; self.n_vertices];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for (f, c) in self.vertex_fan(v) {
                for &w in &self.faces[f] {
                    if !seen[w] {
                        seen[w] = true;
                        stack.push(w);
                    }
                }
                let _ = c;
            }
        }
        if seen.iter().any(|&s| !s) {
            return Err(MeshError::Disconnected);
        }
        Ok(())
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }
    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }
    pub fn n_faces(&self) -> usize {
        self.faces.len()
    }
    pub fn genus(&self) -> u32 {
        self.genus
    }
    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }
    pub fn face_edges(&self) -> &[[usize; 3]] {
        &self.face_edges
    }
    pub fn is_closed(&self) -> bool {
        self.boundary_loops == 0
    }
    pub fn boundary_loops(&self) -> usize {
        self.boundary_loops
    }
    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.boundary_vertex[v]
    }
    pub fn euler_characteristic(&self) -> i64 {
        self.n_vertices as i64 - self.edges.len() as i64 + self.faces.len() as i64
    }

    /// Incident (face, corner) pairs around `v`, in consistent rotational
    /// order. For a boundary vertex the fan starts at the boundary.
    pub fn vertex_fan(&self, v: usize) -> Vec<(usize, usize)> {
        // locate one incident corner
        let mut start = None;
        'outer: for (fi, f) in self.faces.iter().enumerate() {
            for c in 0..3 {
                if f[c] == v {
                    start = Some((fi, c));
                    break 'outer;
                }
            }
        }
        let Some(mut h) = start else { return Vec::new() };
        // rotate across incoming sides until hitting the boundary (or wrapping)
        let begin = h;
        loop {
            // side (c+2)%3 of the face ends at v; crossing it lands on the
            // neighboring face's corner at v
            let prev_side = (h.1 + 2) % 3;
            match self.opposite[h.0][prev_side] {
                Some((g, t)) => {
                    let nh = (g, t as usize);
                    debug_assert_eq!(self.faces[nh.0][nh.1], v);
                    if nh == begin {
                        break;
                    }
                    h = nh;
                }
                None => break,
            }
        }
        // walk back across outgoing sides collecting the fan
        let mut fan = vec![h];
        let begin = h;
        loop {
            match self.opposite[h.0][h.1] {
                Some((g, t)) => {
                    let nh = (g, (t as usize + 1) % 3);
                    debug_assert_eq!(self.faces[nh.0][nh.1], v);
                    if nh == begin {
                        break;
                    }
                    fan.push(nh);
                    h = nh;
                }
                None => break,
            }
        }
        fan
    }

    /// Edge index between two vertices, if present.
    pub fn edge_between(&self, u: usize, v: usize) -> Option<usize> {
        self.edges
            .iter()
            .position(|e| (e.a == u && e.b == v) || (e.a == v && e.b == u))
    }
}

/// Per-edge positive lengths; the discrete carrier of a Riemannian metric.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMetric {
    lengths: Vec<f64>,
}

impl DiscreteMetric {
    /// Validates positivity and the strict triangle inequality in every face.
    pub fn new(mesh: &Mesh, lengths: Vec<f64>) -> Result<DiscreteMetric, MeshError> {
        if lengths.len() != mesh.n_edges() {
            return Err(MeshError::MetricSize { got: lengths.len(), expected: mesh.n_edges() });
        }
        for (ei, &l) in lengths.iter().enumerate() {
            if !(l > 0.0) || !l.is_finite() {
                let e = &mesh.edges()[ei];
                return Err(MeshError::NonPositiveLength { a: e.a, b: e.b, length: l });
            }
        }
        let m = DiscreteMetric { lengths };
        m.check_triangle_inequalities(mesh)?;
        Ok(m)
    }

    pub fn check_triangle_inequalities(&self, mesh: &Mesh) -> Result<(), MeshError> {
        for fi in 0..mesh.n_faces() {
            let [a, b, c] = self.face_lengths(mesh, fi);
            if a >= b + c || b >= a + c || c >= a + b {
                return Err(MeshError::TriangleInequality { face: fi, lengths: [a, b, c] });
            }
        }
        Ok(())
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }
    pub fn length(&self, edge: usize) -> f64 {
        self.lengths[edge]
    }

    /// Side lengths of face `fi`: side `s` joins corners `s` and `s+1`.
    pub fn face_lengths(&self, mesh: &Mesh, fi: usize) -> [f64; 3] {
        let fe = mesh.face_edges()[fi];
        [self.lengths[fe[0]], self.lengths[fe[1]], self.lengths[fe[2]]]
    }

    /// Face area from the side lengths (numerically stable Heron).
    pub fn face_area(&self, mesh: &Mesh, fi: usize) -> f64 {
        let [a, b, c] = self.face_lengths(mesh, fi);
        heron(a, b, c)
    }

    pub fn total_area(&self, mesh: &Mesh) -> f64 {
        (0..mesh.n_faces()).map(|f| self.face_area(mesh, f)).sum()
    }

    /// Interior angles at the three corners of face `fi`.
    pub fn corner_angles(&self, mesh: &Mesh, fi: usize) -> [f64; 3] {
        let [a, b, c] = self.face_lengths(mesh, fi);
        // angle at corner 0 is between sides 0 (len a) and 2 (len c), opposite b
        [
            angle_from_lengths(a, c, b),
            angle_from_lengths(b, a, c),
            angle_from_lengths(c, b, a),
        ]
    }

    /// Barycentric dual area (one third of incident face areas) per vertex.
    pub fn dual_areas(&self, mesh: &Mesh) -> Vec<f64> {
        let mut areas = vec![0.0; mesh.n_vertices()];
        for fi in 0..mesh.n_faces() {
            let a = self.face_area(mesh, fi) / 3.0;
            for &v in &mesh.faces()[fi] {
                areas[v] += a;
            }
        }
        areas
    }

    /// Planar layout of face `fi`: corner 0 at the origin, corner 1 on the
    /// positive x-axis, corner 2 in the upper half plane. This chart is the
    /// face-local orthonormal frame all tensor fields refer to.
    pub fn face_chart(&self, mesh: &Mesh, fi: usize) -> FaceChart {
        let [a, b, c] = self.face_lengths(mesh, fi);
        let x = (a * a + c * c - b * b) / (2.0 * a);
        let y2 = c * c - x * x;
        let y = if y2 > 0.0 { y2.sqrt() } else { 0.0 };
        FaceChart { p: [[0.0, 0.0], [a, 0.0], [x, y]] }
    }
}

/// Euclidean layout of one face in its local frame.
#[derive(Debug, Clone, Copy)]
pub struct FaceChart {
    pub p: [[f64; 2]; 3],
}

impl FaceChart {
    /// Directed side `s` (corner `s` to corner `s+1`) as a chart vector.
    pub fn side(&self, s: usize) -> [f64; 2] {
        let u = self.p[s];
        let v = self.p[(s + 1) % 3];
        [v[0] - u[0], v[1] - u[1]]
    }
    pub fn centroid(&self) -> [f64; 2] {
        [
            (self.p[0][0] + self.p[1][0] + self.p[2][0]) / 3.0,
            (self.p[0][1] + self.p[1][1] + self.p[2][1]) / 3.0,
        ]
    }
}

fn heron(a: f64, b: f64, c: f64) -> f64 {
    let mut s = [a, b, c];
    s.sort_by(|x, y| y.partial_cmp(x).unwrap());
    let [a, b, c] = s;
    let t = (a + (b + c)) * (c - (a - b)) * (c + (a - b)) * (a + (b - c));
    0.25 * t.max(0.0).sqrt()
}

/// Angle opposite `opp` between sides `u` and `v`.
fn angle_from_lengths(u: f64, v: f64, opp: f64) -> f64 {
    let cos = ((u * u + v * v - opp * opp) / (2.0 * u * v)).clamp(-1.0, 1.0);
    cos.acos()
}

/// Per-vertex real values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarField(pub Vec<f64>);

impl ScalarField {
    pub fn zeros(n: usize) -> ScalarField {
        ScalarField(vec![0.0; n])
    }
    pub fn constant(n: usize, c: f64) -> ScalarField {
        ScalarField(vec![c; n])
    }
    pub fn len(&self) -> usize {
        self.0.len()
    }
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
    pub fn check_size(&self, mesh: &Mesh) -> Result<(), MeshError> {
        if self.0.len() != mesh.n_vertices() {
            return Err(MeshError::FieldSize { got: self.0.len(), expected: mesh.n_vertices() });
        }
        Ok(())
    }
    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Integrated curvature per vertex: `2*pi - sum of incident corner angles`
/// at interior vertices and `pi - sum` on the boundary. Summed over the
/// mesh this is exactly `2*pi*chi`.
pub fn angle_defect_curvature(mesh: &Mesh, metric: &DiscreteMetric) -> Result<ScalarField, MeshError> {
    metric.check_triangle_inequalities(mesh)?;
    let mut angle_sum = vec![0.0; mesh.n_vertices()];
    for fi in 0..mesh.n_faces() {
        let ang = metric.corner_angles(mesh, fi);
        for c in 0..3 {
            angle_sum[mesh.faces()[fi][c]] += ang[c];
        }
    }
    let defects = angle_sum
        .iter()
        .enumerate()
        .map(|(v, &s)| {
            let full = if mesh.is_boundary_vertex(v) { std::f64::consts::PI } else { 2.0 * std::f64::consts::PI };
            full - s
        })
        .collect();
    Ok(ScalarField(defects))
}

/// Pointwise curvature approximation: angle defect divided by the
/// barycentric dual area.
pub fn pointwise_curvature(mesh: &Mesh, metric: &DiscreteMetric) -> Result<ScalarField, MeshError> {
    let defects = angle_defect_curvature(mesh, metric)?;
    let areas = metric.dual_areas(mesh);
    Ok(ScalarField(
        defects.0.iter().zip(&areas).map(|(d, a)| d / a).collect(),
    ))
}

/// Sparse symmetric cotan operator. Sign convention: `(L u)_i <= 0` at
/// interior maxima of `u` (one nonpositive eigenvalue spectrum, constants in
/// the kernel), i.e. the divergence-form operator.
#[derive(Debug, Clone)]
pub struct CotanLaplacian {
    n: usize,
    /// (i, j, w) undirected off-diagonal weights, one entry per edge
    weights: Vec<(usize, usize, f64)>,
    diag: Vec<f64>,
}

impl CotanLaplacian {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = self.diag.iter().zip(u).map(|(d, x)| d * x).collect();
        for &(i, j, w) in &self.weights {
            out[i] += w * u[j];
            out[j] += w * u[i];
        }
        out
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.n, self.n);
        for k in 0..self.n {
            m[(k, k)] = self.diag[k];
        }
        for &(i, j, w) in &self.weights {
            m[(i, j)] += w;
            m[(j, i)] += w;
        }
        m
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }
    pub fn weights(&self) -> &[(usize, usize, f64)] {
        &self.weights
    }
}

/// Assembles the cotan Laplacian of `metric`.
pub fn cotan_laplacian(mesh: &Mesh, metric: &DiscreteMetric) -> Result<CotanLaplacian, MeshError> {
    metric.check_triangle_inequalities(mesh)?;
    let mut w_edge = vec![0.0; mesh.n_edges()];
    for fi in 0..mesh.n_faces() {
        let ang = metric.corner_angles(mesh, fi);
        for s in 0..3 {
            // side s is opposite corner s+2
            let opp = ang[(s + 2) % 3];
            w_edge[mesh.face_edges()[fi][s]] += 0.5 * opp.cos() / opp.sin();
        }
    }
    let mut weights = Vec::with_capacity(mesh.n_edges());
    let mut diag = vec![0.0; mesh.n_vertices()];
    for (ei, e) in mesh.edges().iter().enumerate() {
        let w = w_edge[ei];
        weights.push((e.a, e.b, w));
        diag[e.a] -= w;
        diag[e.b] -= w;
    }
    Ok(CotanLaplacian { n: mesh.n_vertices(), weights, diag })
}

/// Mass-matrix weighted integral of a vertex field (lumped barycentric mass).
pub fn integrate(mesh: &Mesh, metric: &DiscreteMetric, field: &ScalarField) -> Result<f64, MeshError> {
    field.check_size(mesh)?;
    let areas = metric.dual_areas(mesh);
    Ok(field.0.iter().zip(&areas).map(|(f, a)| f * a).sum())
}

/// Integral of a per-face-constant integrand; exact quadrature.
pub fn integrate_faces(mesh: &Mesh, metric: &DiscreteMetric, per_face: &[f64]) -> f64 {
    per_face
        .iter()
        .enumerate()
        .map(|(fi, v)| v * metric.face_area(mesh, fi))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn tetrahedron() -> (Mesh, DiscreteMetric) {
        let faces = vec![[0, 1, 2], [0, 2, 3], [0, 3, 1], [1, 3, 2]];
        let mesh = Mesh::new(4, faces, 0).unwrap();
        let metric = DiscreteMetric::new(&mesh, vec![1.0; mesh.n_edges()]).unwrap();
        (mesh, metric)
    }

    #[test]
    fn tetrahedron_defect_total() {
        let (mesh, metric) = tetrahedron();
        assert!(mesh.is_closed());
        assert_eq!(mesh.euler_characteristic(), 2);
        let defect = angle_defect_curvature(&mesh, &metric).unwrap();
        let total: f64 = defect.0.iter().sum();
        assert_relative_eq!(total, 4.0 * PI, epsilon = 1e-12);
        // equilateral: each vertex sees three pi/3 angles
        for d in &defect.0 {
            assert_relative_eq!(*d, 2.0 * PI - PI, epsilon = 1e-12);
        }
    }

    #[test]
    fn degenerate_metric_rejected() {
        let (mesh, _) = tetrahedron();
        let mut lens = vec![1.0; mesh.n_edges()];
        lens[0] = 2.5;
        let err = DiscreteMetric::new(&mesh, lens).unwrap_err();
        match err {
            MeshError::TriangleInequality { face, .. } => {
                let fe = mesh.face_edges()[face];
                assert!(fe.contains(&0));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn laplacian_kills_constants_and_is_symmetric() {
        let (mesh, metric) = tetrahedron();
        let lap = cotan_laplacian(&mesh, &metric).unwrap();
        let ones = vec![1.0; mesh.n_vertices()];
        for v in lap.apply(&ones) {
            assert!(v.abs() < 1e-14);
        }
        let d = lap.to_dense();
        assert_relative_eq!((d.clone() - d.transpose()).norm(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn integrate_constant_is_area() {
        let (mesh, metric) = tetrahedron();
        let c = 2.5;
        let f = ScalarField::constant(mesh.n_vertices(), c);
        let total = integrate(&mesh, &metric, &f).unwrap();
        assert_relative_eq!(total, c * metric.total_area(&mesh), epsilon = 1e-12);
        let zero = ScalarField::zeros(mesh.n_vertices());
        assert_eq!(integrate(&mesh, &metric, &zero).unwrap(), 0.0);
    }
}
