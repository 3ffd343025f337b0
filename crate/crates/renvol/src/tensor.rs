//! Symmetric 2-tensor fields on faces, discrete parallel transport, the
//! Codazzi operator and numerical bases of traceless Codazzi tensors, plus
//! quadratic-differential norms.
//!
//! Per-face tensors are stored in the face-local orthonormal chart (see
//! [`DiscreteMetric::face_chart`]). Transport across an edge rotates by the
//! angle aligning the shared edge's two chart representations, which is the
//! discrete Levi-Civita connection for piecewise-constant fields.
//!
//! Two residual notions coexist:
//! - [`codazzi_residual`]: per-edge Frobenius norm of the transported jump;
//!   zero exactly for `lambda * id`, O(mesh size) for smooth fields.
//! - [`codazzi_circulation`]: per-face boundary circulation of the
//!   tensor-valued 1-form `X -> B(X)`. Summing the jump against the face's
//!   edge vectors cancels the symmetric part of the derivative, so sampled
//!   smooth Codazzi tensors score near zero while non-Codazzi fields keep
//!   an O(1) density. The kernel of the assembled [circulation; trace]
//!   operator is the numerical home of `Re(q)` for holomorphic quadratic
//!   differentials q.

use crate::linalg::{smallest_eigenpairs, LinalgError};
use crate::mesh::{DiscreteMetric, Mesh, MeshError};
use nalgebra::{DMatrix, Matrix2};
use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("field has {got} entries, mesh has {expected} faces")]
    FieldSize { got: usize, expected: usize },
    #[error("tensor operations require a closed mesh")]
    OpenMesh,
    #[error("shape field is not self-adjoint for the given metric (face {face}, residual {residual:.3e})")]
    NotSelfAdjoint { face: usize, residual: f64 },
    #[error("no clear spectral gap among the smallest singular values (best ratio {best_ratio:.2} at dimension {best_dim}); singular values {singular_values:?}")]
    DegenerateKernel { best_ratio: f64, best_dim: usize, singular_values: Vec<f64> },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

/// Per-face symmetric 2-tensor `[[a,b],[b,c]]` in the face-local frame.
#[derive(Debug, Clone, PartialEq)]
pub struct SymTensorField {
    pub data: Vec<[f64; 3]>,
}

impl SymTensorField {
    pub fn zeros(n_faces: usize) -> Self {
        SymTensorField { data: vec![[0.0; 3]; n_faces] }
    }
    pub fn identity_scaled(n_faces: usize, lambda: f64) -> Self {
        SymTensorField { data: vec![[lambda, 0.0, lambda]; n_faces] }
    }
    pub fn check_size(&self, mesh: &Mesh) -> Result<(), TensorError> {
        if self.data.len() != mesh.n_faces() {
            return Err(TensorError::FieldSize { got: self.data.len(), expected: mesh.n_faces() });
        }
        Ok(())
    }
    pub fn matrix(&self, f: usize) -> Matrix2<f64> {
        let [a, b, c] = self.data[f];
        Matrix2::new(a, b, b, c)
    }
    pub fn set_matrix(&mut self, f: usize, m: &Matrix2<f64>) {
        self.data[f] = [m[(0, 0)], 0.5 * (m[(0, 1)] + m[(1, 0)]), m[(1, 1)]];
    }
}

/// Per-face 2x2 operator, self-adjoint with respect to a reference metric
/// tensor (checked, tolerance 1e-12 relative).
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeField {
    pub data: Vec<Matrix2<f64>>,
}

impl ShapeField {
    pub fn identity(n_faces: usize) -> Self {
        ShapeField { data: vec![Matrix2::identity(); n_faces] }
    }
    pub fn from_matrices(data: Vec<Matrix2<f64>>) -> Self {
        ShapeField { data }
    }
    pub fn check_size(&self, mesh: &Mesh) -> Result<(), TensorError> {
        if self.data.len() != mesh.n_faces() {
            return Err(TensorError::FieldSize { got: self.data.len(), expected: mesh.n_faces() });
        }
        Ok(())
    }
    /// Residual of `I B = (I B)^T` per face, relative to the field scale.
    pub fn check_self_adjoint(&self, reference: &SymTensorField) -> Result<(), TensorError> {
        let scale = self
            .data
            .iter()
            .map(|m| m.norm())
            .fold(0.0f64, f64::max)
            .max(1.0);
        for (f, b) in self.data.iter().enumerate() {
            let i = reference.matrix(f);
            let ib = i * b;
            let res = (ib - ib.transpose()).norm() / scale;
            if res > 1e-12 {
                return Err(TensorError::NotSelfAdjoint { face: f, residual: res });
            }
        }
        Ok(())
    }
}

/// Per-face complex value of a quadratic differential in the conformal
/// frame of the (hyperbolic) face chart.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadDiffField {
    pub data: Vec<Complex64>,
}

impl QuadDiffField {
    pub fn check_size(&self, mesh: &Mesh) -> Result<(), TensorError> {
        if self.data.len() != mesh.n_faces() {
            return Err(TensorError::FieldSize { got: self.data.len(), expected: mesh.n_faces() });
        }
        Ok(())
    }
}

/// `Re(q dz^2)` as a traceless symmetric matrix: `q = a - i b` corresponds
/// to `[[a, b], [b, -a]]` in the orthonormal face frame.
pub fn complex_to_traceless(q: Complex64) -> [f64; 3] {
    [q.re, -q.im, -q.re]
}

/// Inverse of [`complex_to_traceless`] (uses the traceless part).
pub fn traceless_to_complex(t: [f64; 3]) -> Complex64 {
    let a = 0.5 * (t[0] - t[2]);
    Complex64::new(a, -t[1])
}

/// Transport data across each interior edge: faces `(f, g)` and the rotation
/// taking f-chart components to g-chart components.
pub struct Transport {
    pub per_edge: Vec<(usize, usize, Matrix2<f64>)>,
}

pub fn edge_transport(mesh: &Mesh, metric: &DiscreteMetric) -> Result<Transport, TensorError> {
    if !mesh.is_closed() {
        return Err(TensorError::OpenMesh);
    }
    let charts: Vec<_> = (0..mesh.n_faces()).map(|f| metric.face_chart(mesh, f)).collect();
    let mut per_edge = Vec::with_capacity(mesh.n_edges());
    for e in mesh.edges() {
        let (f, sf) = e.left;
        let (g, sg) = e.right.expect("closed mesh");
        let df = charts[f].side(sf as usize);
        let dgr = charts[g].side(sg as usize); // b -> a in g's chart
        let dg = [-dgr[0], -dgr[1]]; // a -> b in g's chart
        let theta = dg[1].atan2(dg[0]) - df[1].atan2(df[0]);
        let (s, c) = theta.sin_cos();
        per_edge.push((f, g, Matrix2::new(c, -s, s, c)));
    }
    Ok(Transport { per_edge })
}

/// Quadrature stencil of one face for the Codazzi density: the neighbor
/// faces over a two-ring, the rotations and unfolded positions pulling
/// their tensors into this chart, a main weight list applied to the
/// transported jumps `B_g - B_f`, and stabilizer weight lists with no
/// response to any field of degree <= 2.
struct CodazziStencil {
    /// (neighbor face, rotation neighbor-chart -> this chart) per entry
    neighbors: Vec<(usize, Matrix2<f64>)>,
    main: Vec<[f64; 2]>,
    stabs: Vec<Vec<[f64; 2]>>,
}

/// Per-face stencils over the two-ring of faces. Pairing jumps keeps
/// constants invisible for free; the main weights solve
///   sum_k sym(delta_k v_k^T) = 0            (3 equations)
///   sum_k det[delta_k, v_k]  = 2 A_f        (1 equation)
///   sum_k (dd_k)_m v_k       = 0, m=xx,xy,yy (6 equations)
/// where `delta_k` joins the face centroid to the unfolded neighbor
/// centroid and `(dd)_m` are the quadratic monomials of delta. The sym
/// rows make the stencil vanish on fields whose chart derivative is
/// Codazzi-symmetric, the det row fixes a uniform unit response to the
/// antisymmetric (Codazzi-defect) part, and the quadratic rows remove the
/// second-order consistency error. The homogeneous solutions of the same
/// system see no quadratic field at all; emitted as stabilizer rows they
/// expel mesh-scale oscillation from the numerical kernel while costing
/// smooth fields only a third-order error.
fn codazzi_stencils(mesh: &Mesh, metric: &DiscreteMetric) -> Result<Vec<CodazziStencil>, TensorError> {
    if !mesh.is_closed() {
        return Err(TensorError::OpenMesh);
    }
    let nf = mesh.n_faces();
    let charts: Vec<_> = (0..nf).map(|f| metric.face_chart(mesh, f)).collect();
    let transport = edge_transport(mesh, metric)?;

    // one-ring data per face and side: neighbor, rotation into this face,
    // affine offset of the unfolding (y = rot x + shift)
    #[derive(Clone, Copy)]
    struct Unfold {
        face: usize,
        rot: Matrix2<f64>,
        shift: [f64; 2],
    }
    let mut ring1: Vec<[Unfold; 3]> =
        vec![[Unfold { face: 0, rot: Matrix2::identity(), shift: [0.0; 2] }; 3]; nf];
    for (ei, e) in mesh.edges().iter().enumerate() {
        let (f, g, ref r_fg) = transport.per_edge[ei];
        let (_, sf) = e.left;
        let (_, sg) = e.right.expect("closed mesh");
        // map g-chart points into f's chart: y = R^T (x - qa_g) + pa_f
        let pa_f = charts[f].p[sf as usize];
        let qa_g = charts[g].p[(sg as usize + 1) % 3]; // vertex a in g's chart
        let rt = r_fg.transpose();
        let shift_gf = [
            pa_f[0] - (rt[(0, 0)] * qa_g[0] + rt[(0, 1)] * qa_g[1]),
            pa_f[1] - (rt[(1, 0)] * qa_g[0] + rt[(1, 1)] * qa_g[1]),
        ];
        ring1[f][sf as usize] = Unfold { face: g, rot: rt, shift: shift_gf };
        // map f-chart points into g's chart: y = R (x - qb_f) + pb_g
        let pb_g = charts[g].p[sg as usize];
        let qb_f = charts[f].p[(sf as usize + 1) % 3];
        let shift_fg = [
            pb_g[0] - (r_fg[(0, 0)] * qb_f[0] + r_fg[(0, 1)] * qb_f[1]),
            pb_g[1] - (r_fg[(1, 0)] * qb_f[0] + r_fg[(1, 1)] * qb_f[1]),
        ];
        ring1[g][sg as usize] = Unfold { face: f, rot: *r_fg, shift: shift_fg };
    }

    let apply = |u: &Unfold, p: [f64; 2]| -> [f64; 2] {
        [
            u.rot[(0, 0)] * p[0] + u.rot[(0, 1)] * p[1] + u.shift[0],
            u.rot[(1, 0)] * p[0] + u.rot[(1, 1)] * p[1] + u.shift[1],
        ]
    };
    let compose = |outer: &Unfold, inner: &Unfold| -> Unfold {
        // inner maps h -> g, outer maps g -> f
        Unfold {
            face: inner.face,
            rot: outer.rot * inner.rot,
            shift: apply(outer, inner.shift),
        }
    };

    let mut stencils = Vec::with_capacity(nf);
    for f in 0..nf {
        let area = metric.face_area(mesh, f);
        let cf = charts[f].centroid();
        // breadth-first unfolding over three rings of faces, first path wins
        let mut entries: Vec<(Unfold, [f64; 2])> = Vec::new();
        let mut seen = vec![f];
        let mut frontier: Vec<Unfold> =
            vec![Unfold { face: f, rot: Matrix2::identity(), shift: [0.0; 2] }];
        for _ring in 0..3 {
            let mut next = Vec::new();
            for u in &frontier {
                for s in 0..3 {
                    let step = ring1[u.face][s];
                    if seen.contains(&step.face) {
                        continue;
                    }
                    seen.push(step.face);
                    let comp = compose(u, &step);
                    let ch = apply(&comp, charts[comp.face].centroid());
                    entries.push((comp, [ch[0] - cf[0], ch[1] - cf[1]]));
                    next.push(comp);
                }
            }
            frontier = next;
        }
        let deltas: Vec<[f64; 2]> = entries.iter().map(|(_, d)| *d).collect();
        let (main, stabs) = solve_weights(&deltas, area);
        stencils.push(CodazziStencil {
            neighbors: entries.iter().map(|(u, _)| (u.face, u.rot)).collect(),
            main,
            stabs,
        });
    }
    Ok(stencils)
}

/// Down-weight of the stabilizer rows relative to the main stencil.
const STABILIZER_WEIGHT: f64 = 0.1;

/// Least-norm solution of the 10 x 2K exactness system plus the homogeneous
/// family (weights with zero response to every field of degree <= 2).
fn solve_weights(deltas: &[[f64; 2]], area: f64) -> (Vec<[f64; 2]>, Vec<Vec<[f64; 2]>>) {
    let k = deltas.len();
    let mut a = DMatrix::<f64>::zeros(20, 2 * k);
    let mut b = nalgebra::DVector::<f64>::zeros(20);
    for (s, &[dx, dy]) in deltas.iter().enumerate() {
        // rows 0-2: sym(delta v^T) components xx, xy, yy
        a[(0, 2 * s)] += 2.0 * dx;
        a[(1, 2 * s)] += dy;
        a[(1, 2 * s + 1)] += dx;
        a[(2, 2 * s + 1)] += 2.0 * dy;
        // row 3: sum det[delta, v] = dx vy - dy vx
        a[(3, 2 * s)] += -dy;
        a[(3, 2 * s + 1)] += dx;
        // rows 4-9: quadratic monomials of delta times v, vector valued
        let dd = [dx * dx, dx * dy, dy * dy];
        for (m, q) in dd.iter().enumerate() {
            a[(4 + 2 * m, 2 * s)] += q;
            a[(5 + 2 * m, 2 * s + 1)] += q;
        }
        // rows 10-17: cubic monomials of delta times v, vector valued
        let ddd = [dx * dx * dx, dx * dx * dy, dx * dy * dy, dy * dy * dy];
        for (m, q) in ddd.iter().enumerate() {
            a[(10 + 2 * m, 2 * s)] += q;
            a[(11 + 2 * m, 2 * s + 1)] += q;
        }
        // rows 18-19: sum v = 0, removing sensitivity to uniform per-entry
        // transport noise (curvature-induced chart discrepancy)
        a[(18, 2 * s)] += 1.0;
        a[(19, 2 * s + 1)] += 1.0;
    }
    b[3] = 2.0 * area;
    let svd = a.clone().svd(true, true);
    let main = svd
        .solve(&b, 1e-12)
        .unwrap_or_else(|_| nalgebra::DVector::zeros(2 * k));
    let scale = main.norm();

    // null space of A from the spectral decomposition of A^T A
    let ata = a.transpose() * a;
    let eig = ata.symmetric_eigen();
    let lmax = eig.eigenvalues.amax().max(f64::MIN_POSITIVE);
    let mut order: Vec<usize> = (0..2 * k).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].partial_cmp(&eig.eigenvalues[j]).unwrap());
    let mut stabs = Vec::new();
    for &idx in &order {
        if eig.eigenvalues[idx] <= 1e-16 * lmax {
            let col = eig.eigenvectors.column(idx);
            let n: Vec<[f64; 2]> = (0..k).map(|s| [col[2 * s], col[2 * s + 1]]).collect();
            stabs.push(scale_list(n, scale * STABILIZER_WEIGHT));
        }
    }
    (
        (0..k).map(|s| [main[2 * s], main[2 * s + 1]]).collect(),
        stabs,
    )
}

fn scale_list(n: Vec<[f64; 2]>, target: f64) -> Vec<[f64; 2]> {
    let norm: f64 = n.iter().flat_map(|v| v.iter()).map(|x| x * x).sum::<f64>().sqrt();
    let s = if norm > 0.0 { target / norm } else { 0.0 };
    n.into_iter().map(|v| [v[0] * s, v[1] * s]).collect()
}

/// Per-edge Frobenius norm of the transported jump `R B_f R^T - B_g`.
/// Exactly zero for constant multiples of the identity.
pub fn codazzi_residual(
    mesh: &Mesh,
    metric: &DiscreteMetric,
    field: &ShapeField,
) -> Result<Vec<f64>, TensorError> {
    field.check_size(mesh)?;
    let transport = edge_transport(mesh, metric)?;
    Ok(transport
        .per_edge
        .iter()
        .map(|&(f, g, r)| (r * field.data[f] * r.transpose() - field.data[g]).norm())
        .collect())
}

/// Per-face Codazzi density: the stencil pairing of transported neighbor
/// tensors with the adapted weight vectors, normalized by face area. Smooth
/// Codazzi fields (and `lambda * id`) score near zero; the antisymmetric
/// derivative part responds with unit gain.
pub fn codazzi_circulation(
    mesh: &Mesh,
    metric: &DiscreteMetric,
    field: &ShapeField,
) -> Result<Vec<[f64; 2]>, TensorError> {
    field.check_size(mesh)?;
    let stencils = codazzi_stencils(mesh, metric)?;
    let mut out = vec![[0.0f64; 2]; mesh.n_faces()];
    for f in 0..mesh.n_faces() {
        let mut acc = [0.0f64; 2];
        for (k, (g, rot)) in stencils[f].neighbors.iter().enumerate() {
            let v = stencils[f].main[k];
            let jump = rot * field.data[*g] * rot.transpose() - field.data[f];
            acc[0] += jump[(0, 0)] * v[0] + jump[(0, 1)] * v[1];
            acc[1] += jump[(1, 0)] * v[0] + jump[(1, 1)] * v[1];
        }
        let a = metric.face_area(mesh, f);
        out[f] = [acc[0] / a, acc[1] / a];
    }
    Ok(out)
}

/// Root-mean-square circulation density, area weighted; the scalar Codazzi
/// residual used when validating foliation data.
pub fn circulation_rms(mesh: &Mesh, metric: &DiscreteMetric, field: &ShapeField) -> Result<f64, TensorError> {
    let circ = codazzi_circulation(mesh, metric, field)?;
    let total: f64 = (0..mesh.n_faces())
        .map(|f| {
            let a = metric.face_area(mesh, f);
            (circ[f][0] * circ[f][0] + circ[f][1] * circ[f][1]) * a
        })
        .sum();
    Ok((total / metric.total_area(mesh)).sqrt())
}

/// Dense assembled [circulation; trace] operator in L^2-weighted
/// coordinates `(a sqrt(A), b sqrt(2 A), c sqrt(A))` per face.
fn assemble_operator(
    mesh: &Mesh,
    metric: &DiscreteMetric,
    with_trace: bool,
) -> Result<DMatrix<f64>, TensorError> {
    if !mesh.is_closed() {
        return Err(TensorError::OpenMesh);
    }
    let nf = mesh.n_faces();
    let transport = edge_transport(mesh, metric)?;
    let charts: Vec<_> = (0..nf).map(|f| metric.face_chart(mesh, f)).collect();
    let areas: Vec<f64> = (0..nf).map(|f| metric.face_area(mesh, f)).collect();

    let stencils = codazzi_stencils(mesh, metric)?;
    // main rows (2 per face) + stabilizer rows (2 per stabilizer triple)
    let n_stab: usize = stencils.iter().map(|s| 2 * s.stabs.len()).sum();
    let nrows = 2 * nf + n_stab + if with_trace { nf } else { 0 };
    let mut d = DMatrix::zeros(nrows, 3 * nf);
    let sym_basis = |k: usize| -> Matrix2<f64> {
        match k {
            0 => Matrix2::new(1.0, 0.0, 0.0, 0.0),
            1 => Matrix2::new(0.0, 1.0, 1.0, 0.0),
            _ => Matrix2::new(0.0, 0.0, 0.0, 1.0),
        }
    };
    let col_weight = |k: usize, g: usize| -> f64 {
        let w = if k == 1 { (2.0 * areas[g]).sqrt() } else { areas[g].sqrt() };
        1.0 / w
    };
    let mut stab_row = 2 * nf;
    for f in 0..nf {
        // row scale: density (circulation / area) in L^2 form
        let row_w = areas[f].sqrt() / areas[f];
        let mut rows: Vec<(usize, &Vec<[f64; 2]>)> = vec![(2 * f, &stencils[f].main)];
        for stab in &stencils[f].stabs {
            rows.push((stab_row, stab));
            stab_row += 2;
        }
        for (row, weights) in rows {
            for (kn, (g, rot)) in stencils[f].neighbors.iter().enumerate() {
                let v = weights[kn];
                for k in 0..3 {
                    let basis = sym_basis(k);
                    let bg_in_f = rot * basis * rot.transpose();
                    let tv = [
                        bg_in_f[(0, 0)] * v[0] + bg_in_f[(0, 1)] * v[1],
                        bg_in_f[(1, 0)] * v[0] + bg_in_f[(1, 1)] * v[1],
                    ];
                    d[(row, 3 * g + k)] += tv[0] * row_w * col_weight(k, *g);
                    d[(row + 1, 3 * g + k)] += tv[1] * row_w * col_weight(k, *g);
                    // the face's own value enters each jump with a minus sign
                    let sv = [
                        basis[(0, 0)] * v[0] + basis[(0, 1)] * v[1],
                        basis[(1, 0)] * v[0] + basis[(1, 1)] * v[1],
                    ];
                    d[(row, 3 * f + k)] -= sv[0] * row_w * col_weight(k, f);
                    d[(row + 1, 3 * f + k)] -= sv[1] * row_w * col_weight(k, f);
                }
            }
        }
    }
    if with_trace {
        let base = 2 * nf + n_stab;
        for f in 0..nf {
            let w = areas[f].sqrt();
            d[(base + f, 3 * f)] = w * col_weight(0, f);
            d[(base + f, 3 * f + 2)] = w * col_weight(2, f);
        }
    }
    let _ = charts;
    let _ = transport;
    Ok(d)
}

#[derive(Debug, Clone)]
pub struct CodazziBasis {
    pub fields: Vec<ShapeField>,
    /// ten smallest singular values of the assembled operator, ascending
    pub singular_values: Vec<f64>,
    /// ratio of the singular values across the detected gap
    pub gap_ratio: f64,
}

/// Numerical kernel of the [circulation; trace] operator: the span of the
/// traceless Codazzi tensors. Kernel size is read off the largest spectral
/// gap among the 10 smallest singular values; a ratio under 10 is an error.
pub fn codazzi_basis(
    mesh: &Mesh,
    metric: &DiscreteMetric,
    seed: u64,
) -> Result<CodazziBasis, TensorError> {
    codazzi_basis_impl(mesh, metric, seed, true)
}

/// Same extraction without the trace rows; the kernel should gain exactly
/// the constant `lambda * id` direction.
pub fn codazzi_kernel_without_trace(
    mesh: &Mesh,
    metric: &DiscreteMetric,
    seed: u64,
) -> Result<CodazziBasis, TensorError> {
    codazzi_basis_impl(mesh, metric, seed, false)
}

fn codazzi_basis_impl(
    mesh: &Mesh,
    metric: &DiscreteMetric,
    seed: u64,
    with_trace: bool,
) -> Result<CodazziBasis, TensorError> {
    let nf = mesh.n_faces();
    let d = assemble_operator(mesh, metric, with_trace)?;
    let n = d.transpose() * &d;
    let probe = 10usize.min(3 * nf);
    let (vals, vecs) = smallest_eigenpairs(&n, probe, seed)?;
    let sing: Vec<f64> = vals.iter().map(|v| v.max(0.0).sqrt()).collect();

    // largest ratio between consecutive singular values decides the kernel
    let floor = sing.last().copied().unwrap_or(1.0).max(1e-300) * 1e-12;
    let mut best_dim = 0;
    let mut best_ratio = 0.0;
    for k in 0..probe - 1 {
        let ratio = sing[k + 1].max(floor) / sing[k].max(floor);
        if ratio > best_ratio {
            best_ratio = ratio;
            best_dim = k + 1;
        }
    }
    if best_ratio < 10.0 {
        return Err(TensorError::DegenerateKernel { best_ratio, best_dim, singular_values: sing });
    }

    let areas: Vec<f64> = (0..nf).map(|f| metric.face_area(mesh, f)).collect();
    let mut fields = Vec::with_capacity(best_dim);
    for j in 0..best_dim {
        let col = vecs.column(j);
        let mut data = Vec::with_capacity(nf);
        for f in 0..nf {
            let a = col[3 * f] / areas[f].sqrt();
            let b = col[3 * f + 1] / (2.0 * areas[f]).sqrt();
            let c = col[3 * f + 2] / areas[f].sqrt();
            // exact traceless projection
            let t = 0.5 * (a + c);
            data.push(Matrix2::new(a - t, b, b, c - t));
        }
        // L^2 normalization
        let norm: f64 = (0..nf)
            .map(|f| data[f].norm_squared() * areas[f])
            .sum::<f64>()
            .sqrt();
        for m in &mut data {
            *m /= norm.max(1e-300);
        }
        fields.push(ShapeField { data });
    }
    Ok(CodazziBasis { fields, singular_values: sing, gap_ratio: best_ratio })
}

/// Pointwise sup norm and L^2 norm of a quadratic differential. The
/// pointwise norm is the modulus of the face value in the orthonormal
/// chart of the hyperbolic metric; the same convention feeds both norms.
pub fn qd_norms(mesh: &Mesh, metric: &DiscreteMetric, q: &QuadDiffField) -> Result<(f64, f64), TensorError> {
    q.check_size(mesh)?;
    let mut linf = 0.0f64;
    let mut l2sq = 0.0f64;
    for (f, v) in q.data.iter().enumerate() {
        let norm = v.norm();
        linf = linf.max(norm);
        l2sq += norm * norm * metric.face_area(mesh, f);
    }
    Ok((linf, l2sq.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conformal::{conformal_scale, uniformize, UniformizeOptions};
    use crate::fixtures::polygon_surface;
    use crate::linalg::seeded_rng;
    use rand::Rng;

    pub(crate) fn hyperbolic_fixture(genus: u32, level: u32) -> (Mesh, DiscreteMetric) {
        let fx = polygon_surface(genus, level).unwrap();
        let (factor, _) = uniformize(&fx.mesh, &fx.metric, UniformizeOptions::default()).unwrap();
        let hyp = conformal_scale(&fx.mesh, &fx.metric, &factor.0).unwrap();
        (fx.mesh, hyp)
    }

    #[test]
    fn identity_field_is_parallel() {
        let (mesh, hyp) = hyperbolic_fixture(2, 1);
        let field = ShapeField::identity(mesh.n_faces());
        let res = codazzi_residual(&mesh, &hyp, &field).unwrap();
        for r in res {
            assert!(r < 1e-13);
        }
        let circ = codazzi_circulation(&mesh, &hyp, &field).unwrap();
        for c in circ {
            assert!(c[0].abs() < 1e-12 && c[1].abs() < 1e-12);
        }
    }

    #[test]
    fn random_field_has_nonzero_residual() {
        let (mesh, hyp) = hyperbolic_fixture(2, 1);
        let mut rng = seeded_rng(13, 3);
        let data: Vec<Matrix2<f64>> = (0..mesh.n_faces())
            .map(|_| {
                let d1: f64 = rng.gen_range(-1.0..1.0);
                let d2: f64 = rng.gen_range(-1.0..1.0);
                Matrix2::new(d1, 0.0, 0.0, d2)
            })
            .collect();
        let field = ShapeField::from_matrices(data);
        let res = codazzi_residual(&mesh, &hyp, &field).unwrap();
        assert!(res.iter().fold(0.0f64, |m, &v| m.max(v)) > 0.1);
    }

    #[test]
    fn kernel_dimension_genus2() {
        let (mesh, hyp) = hyperbolic_fixture(2, 2);
        let basis = codazzi_basis(&mesh, &hyp, 42).unwrap();
        assert_eq!(basis.fields.len(), 6, "singular values {:?}", basis.singular_values);
        assert!(basis.gap_ratio >= 10.0);
        // kernel membership: circulation residual at the singular-value scale
        for field in &basis.fields {
            let rms = circulation_rms(&mesh, &hyp, field).unwrap();
            assert!(
                rms <= basis.singular_values[5] * 4.0 + 1e-12,
                "rms {rms} vs sigma {}",
                basis.singular_values[5]
            );
        }
    }

    #[test]
    fn kernel_dimension_genus3() {
        let (mesh, hyp) = hyperbolic_fixture(3, 1);
        let basis = codazzi_basis(&mesh, &hyp, 42).unwrap();
        assert_eq!(basis.fields.len(), 12, "singular values {:?}", basis.singular_values);
    }

    #[test]
    fn dropping_trace_adds_identity_direction() {
        let (mesh, hyp) = hyperbolic_fixture(2, 2);
        let with = codazzi_basis(&mesh, &hyp, 42).unwrap();
        let without = codazzi_kernel_without_trace(&mesh, &hyp, 42).unwrap();
        assert_eq!(without.fields.len(), with.fields.len() + 1);
    }

    #[test]
    fn qd_norm_inequality() {
        let (mesh, hyp) = hyperbolic_fixture(2, 1);
        let mut rng = seeded_rng(99, 5);
        let q = QuadDiffField {
            data: (0..mesh.n_faces())
                .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect(),
        };
        let (linf, l2) = qd_norms(&mesh, &hyp, &q).unwrap();
        let area = hyp.total_area(&mesh);
        assert!(l2 <= linf * area.sqrt() + 1e-12);
        let zero = QuadDiffField { data: vec![Complex64::new(0.0, 0.0); mesh.n_faces()] };
        assert_eq!(qd_norms(&mesh, &hyp, &zero).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn complex_traceless_roundtrip() {
        let q = Complex64::new(0.3, -0.7);
        let t = complex_to_traceless(q);
        assert_eq!(traceless_to_complex(t), q);
    }
}

/// Exposes the low end of the operator spectrum for calibration tests.
pub fn debug_smallest_singular_values(
    mesh: &Mesh,
    metric: &DiscreteMetric,
    k: usize,
    seed: u64,
) -> Result<Vec<f64>, TensorError> {
    let d = assemble_operator(mesh, metric, true)?;
    let n = d.transpose() * &d;
    let (vals, _) = smallest_eigenpairs(&n, k, seed)?;
    Ok(vals.iter().map(|v| v.max(0.0).sqrt()).collect())
}

/// Calibration helper: smallest singular values plus per-mode diagnostics
/// (full-jump rms, trace rms) of the corresponding eigenfields.
pub fn debug_low_modes(
    mesh: &Mesh,
    metric: &DiscreteMetric,
    k: usize,
    seed: u64,
) -> Result<Vec<(f64, f64, f64)>, TensorError> {
    let d = assemble_operator(mesh, metric, true)?;
    let n = d.transpose() * &d;
    let (vals, vecs) = smallest_eigenpairs(&n, k, seed)?;
    let nf = mesh.n_faces();
    let areas: Vec<f64> = (0..nf).map(|f| metric.face_area(mesh, f)).collect();
    let total: f64 = areas.iter().sum();
    let mut out = Vec::new();
    for j in 0..k {
        let col = vecs.column(j);
        let mut data = Vec::with_capacity(nf);
        let mut trace_sq = 0.0;
        for f in 0..nf {
            let a = col[3 * f] / areas[f].sqrt();
            let b = col[3 * f + 1] / (2.0 * areas[f]).sqrt();
            let c = col[3 * f + 2] / areas[f].sqrt();
            trace_sq += (a + c) * (a + c) * areas[f];
            data.push(Matrix2::new(a, b, b, c));
        }
        let field = ShapeField { data };
        let jumps = codazzi_residual(mesh, metric, &field)?;
        let jump_rms = (jumps.iter().map(|r| r * r).sum::<f64>() / jumps.len() as f64).sqrt();
        out.push((vals[j].max(0.0).sqrt(), jump_rms, (trace_sq / total).sqrt()));
    }
    Ok(out)
}
