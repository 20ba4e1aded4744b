//! Closed-form Galerkin system assembly and solve.
//!
//! The variational energy (normal alignment + Hessian regularization +
//! point screening) is quadratic in the basis coefficients, so the optimum
//! solves `A alpha = b`. Supports of all bases lie inside the rasterized
//! domain, so pair integrals run over whole support intersections and are
//! exact for the polynomial families at the default quadrature order.

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::basis::{
    axis_pair_integrals, axis_single_integrals, BasisEval, BasisFrame, BasisParams, BasisSpec,
    EvalOrder, LocalBasis,
};
use crate::cloud::PointCloud;
use crate::quadrature::MappedRule;
use crate::scaffold::{neighbor_pairs, DomainCells, SparseVoxelHierarchy, VoxelKey};
use crate::{Error, Mat3, Result, Vec3};

/// Energy weights: `lambda_h` on the Hessian/biharmonic block, `lambda_p`
/// on the point screening block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverWeights {
    pub lambda_h: f64,
    pub lambda_p: f64,
}

impl Default for SolverWeights {
    fn default() -> Self {
        SolverWeights {
            lambda_h: 3.0,
            lambda_p: 64.0,
        }
    }
}

impl SolverWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda_h", self.lambda_h), ("lambda_p", self.lambda_p)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidConfig(format!("{name} = {v} must be >= 0")));
            }
        }
        Ok(())
    }
}

/// Assembled sparse symmetric system `A alpha = b` over the basis dofs.
#[derive(Debug, Clone)]
pub struct GalerkinSystem {
    /// Dof order: scale ascending, then voxel key order.
    pub keys: Vec<VoxelKey>,
    pub dof_index: BTreeMap<VoxelKey, usize>,
    /// Upper-triangular entries (row <= col), sorted by (row, col).
    pub entries: Vec<(u32, u32, f64)>,
    pub rhs: Vec<f64>,
}

impl GalerkinSystem {
    pub fn dim(&self) -> usize {
        self.keys.len()
    }

    /// Symmetric matrix-vector product from the stored upper triangle.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; x.len()];
        for &(r, c, v) in &self.entries {
            let (r, c) = (r as usize, c as usize);
            y[r] += v * x[c];
            if r != c {
                y[c] += v * x[r];
            }
        }
        y
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.dim()];
        for &(r, c, v) in &self.entries {
            if r == c {
                d[r as usize] = v;
            }
        }
        d
    }

    pub fn entry(&self, r: usize, c: usize) -> f64 {
        let (r, c) = if r <= c { (r, c) } else { (c, r) };
        match self
            .entries
            .binary_search_by_key(&(r as u32, c as u32), |&(a, b, _)| (a, b))
        {
            Ok(i) => self.entries[i].2,
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        for &(r, c, v) in &self.entries {
            m[(r as usize, c as usize)] = v;
            m[(c as usize, r as usize)] = v;
        }
        m
    }

    /// Coordinate-format text dump: symmetric entries as "row col value"
    /// lines, then the rhs as "rhs row value" lines.
    pub fn dump_coordinate(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        writeln!(out, "# galerkin system, {} dofs", self.dim()).unwrap();
        for &(r, c, v) in &self.entries {
            writeln!(out, "{r} {c} {v:.17e}").unwrap();
            if r != c {
                writeln!(out, "{c} {r} {v:.17e}").unwrap();
            }
        }
        for (i, v) in self.rhs.iter().enumerate() {
            writeln!(out, "rhs {i} {v:.17e}").unwrap();
        }
        out
    }
}

/// Placed basis table over all basis-carrying voxels, in dof order.
pub(crate) fn dof_bases(
    h: &SparseVoxelHierarchy,
    spec: &BasisSpec,
) -> Result<(
    Vec<VoxelKey>,
    BTreeMap<VoxelKey, usize>,
    Vec<(LocalBasis, BasisFrame)>,
)> {
    let mut keys = Vec::new();
    let mut index = BTreeMap::new();
    let mut bases = Vec::new();
    let default = BasisParams::default_for(spec);
    for rec in h.basis_voxels() {
        let params = rec.basis_params.as_ref().unwrap_or(&default);
        let basis = LocalBasis::new(spec, params)?;
        let frame = BasisFrame {
            center: rec.centroid,
            h: h.edge_length(rec.key.scale),
        };
        index.insert(rec.key, keys.len());
        keys.push(rec.key);
        bases.push((basis, frame));
    }
    Ok((keys, index, bases))
}

fn support_intersection(fk: &BasisFrame, fl: &BasisFrame) -> Option<(Vec3, Vec3)> {
    let (klo, khi) = fk.support_bounds();
    let (llo, lhi) = fl.support_bounds();
    let lo = klo.sup(&llo);
    let hi = khi.inf(&lhi);
    if (0..3).all(|a| hi[a] > lo[a]) {
        Some((lo, hi))
    } else {
        None
    }
}

/// `int_cell grad(B) dV` for one placed basis over a world box.
fn grad_vec_over_cell(
    basis: &LocalBasis,
    frame: &BasisFrame,
    lo: Vec3,
    hi: Vec3,
    q: usize,
) -> Vec3 {
    let mut j = [crate::basis::AxisSingleIntegrals::default(); 3];
    for a in 0..3 {
        j[a] = axis_single_integrals(&basis.axes[a], frame.center[a], frame.h, lo[a], hi[a], q);
    }
    Vec3::new(
        j[0].j1 * j[1].j0 * j[2].j0,
        j[0].j0 * j[1].j1 * j[2].j0,
        j[0].j0 * j[1].j0 * j[2].j1,
    )
}

/// Assemble the Galerkin system of the quadratic energy.
///
/// `A[k,l] = int grad(Bk).grad(Bl) + lambda_h int lap(Bk) lap(Bl)
///          + lambda_p sum_p Bk(p) Bl(p)`;
/// `b[k]   = sum_cells grad_vec(Bk, cell) . N_cell
///          + lambda_p sum_p Bk(p) xi(p)`.
///
/// Volume integrals use base-voxel units (lengths in multiples of b), which
/// keeps the gradient, biharmonic and point blocks on comparable scales for
/// any b and matches the calibration of the default lambda weights.
///
/// With `lambda_h = 0` the biharmonic block is skipped entirely and the
/// system is a screened-Poisson Galerkin system.
pub fn assemble_system(
    h: &SparseVoxelHierarchy,
    domain: &DomainCells,
    spec: &BasisSpec,
    weights: &SolverWeights,
    cloud: &PointCloud,
) -> Result<GalerkinSystem> {
    weights.validate()?;
    if domain.is_empty() {
        return Err(Error::EmptyDomain);
    }
    for n in &domain.normals {
        let len = n.norm();
        if len > 0.0 && (len - 1.0).abs() > 1e-6 {
            return Err(Error::UnnormalizedNormals);
        }
    }
    let (keys, dof_index, bases) = dof_bases(h, spec)?;
    let q = spec.default_quad_order();
    let mut matrix: BTreeMap<(u32, u32), f64> = BTreeMap::new();
    let mut rhs = vec![0.0; keys.len()];

    // All volume integrals are taken in base-voxel units (positions in
    // multiples of b): the basis local frame divides by 2^(s-1) there, so
    // derivative chain factors are 1/2^(s-1) per order and the lambda
    // weights are balanced independently of the absolute value of b.
    // Basis values themselves are unit-invariant.
    let ub = h.base_size();
    let scaled: Vec<BasisFrame> = bases
        .iter()
        .map(|(_, f)| BasisFrame {
            center: f.center / ub,
            h: f.h / ub,
        })
        .collect();

    // Volume blocks over whole support intersections (supports lie inside
    // the domain by construction, so no clipping against cells is needed).
    for (k1, k2) in neighbor_pairs(h) {
        let i = dof_index[&k1];
        let j = dof_index[&k2];
        let (bi, _) = &bases[i];
        let (bj, _) = &bases[j];
        let (fi, fj) = (&scaled[i], &scaled[j]);
        let Some((lo, hi)) = support_intersection(fi, fj) else {
            continue;
        };
        let mut grad_grad = 0.0;
        let mut lap_lap = 0.0;
        let mut pair = [crate::basis::AxisPairIntegrals::default(); 3];
        for a in 0..3 {
            pair[a] = axis_pair_integrals(
                &bi.axes[a],
                fi.center[a],
                fi.h,
                &bj.axes[a],
                fj.center[a],
                fj.h,
                lo[a],
                hi[a],
                q,
            );
        }
        for a in 0..3 {
            let mut t = pair[a].i11;
            for o in 0..3 {
                if o != a {
                    t *= pair[o].i00;
                }
            }
            grad_grad += t;
        }
        if weights.lambda_h > 0.0 {
            for a in 0..3 {
                for c in 0..3 {
                    let mut t = 1.0;
                    for o in 0..3 {
                        t *= if o == a && o == c {
                            pair[o].i22
                        } else if o == a {
                            pair[o].i20
                        } else if o == c {
                            pair[o].i02
                        } else {
                            pair[o].i00
                        };
                    }
                    lap_lap += t;
                }
            }
        }
        let (r, c) = if i <= j { (i, j) } else { (j, i) };
        *matrix.entry((r as u32, c as u32)).or_insert(0.0) +=
            grad_grad + weights.lambda_h * lap_lap;
    }

    // Normal-alignment rhs: piecewise-constant cell normals against the
    // mean gradient of each covering basis.
    for (idx, ijk) in domain.cells().iter().enumerate() {
        let n = domain.normals[idx];
        if n == Vec3::zeros() {
            continue;
        }
        let (lo, hi) = domain.cell_bounds(*ijk);
        let (lo, hi) = (lo / ub, hi / ub);
        let center = domain.cell_center(*ijk);
        for_each_covering_dof(h, &dof_index, center, |dof| {
            let (basis, _) = &bases[dof];
            let gv = grad_vec_over_cell(basis, &scaled[dof], lo, hi, q);
            rhs[dof] += gv.dot(&n);
        });
    }

    // Point screening block: exact basis evaluation at each input point.
    if weights.lambda_p > 0.0 {
        let mut covering: Vec<(usize, f64)> = Vec::new();
        for p in cloud.points() {
            covering.clear();
            for_each_covering_dof(h, &dof_index, p.position, |dof| {
                let (basis, frame) = &bases[dof];
                let local = (p.position - frame.center) / frame.h;
                let v = basis.value(local);
                if v != 0.0 {
                    covering.push((dof, v));
                }
            });
            for (a, &(i, vi)) in covering.iter().enumerate() {
                for &(j, vj) in &covering[a..] {
                    let (r, c) = if i <= j { (i, j) } else { (j, i) };
                    *matrix.entry((r as u32, c as u32)).or_insert(0.0) +=
                        weights.lambda_p * vi * vj;
                }
                rhs[i] += weights.lambda_p * vi * p.screening;
            }
        }
    }

    let entries = matrix.into_iter().map(|((r, c), v)| (r, c, v)).collect();
    Ok(GalerkinSystem {
        keys,
        dof_index,
        entries,
        rhs,
    })
}

/// Visit every basis dof whose support can contain `p`: at each
/// basis-carrying scale, the 27-neighborhood of the voxel containing `p`.
fn for_each_covering_dof(
    h: &SparseVoxelHierarchy,
    dof_index: &BTreeMap<VoxelKey, usize>,
    p: Vec3,
    mut visit: impl FnMut(usize),
) {
    for scale in 1..=h.adaptive_depth() {
        let u = h.voxel_of(p, scale);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    let key = VoxelKey {
                        scale,
                        ijk: [u[0] + dx, u[1] + dy, u[2] + dz],
                    };
                    if let Some(&dof) = dof_index.get(&key) {
                        visit(dof);
                    }
                }
            }
        }
    }
}

/// Jacobi-preconditioned conjugate gradients.
///
/// Returns the solution and the iteration count; `|b| = 0` short-circuits
/// to the zero vector. On failure the error carries the best iterate seen.
pub fn solve_with_stats(
    sys: &GalerkinSystem,
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, usize)> {
    assert!(tol > 0.0);
    let n = sys.dim();
    let b = &sys.rhs;
    let b_norm = norm(b);
    if b_norm == 0.0 {
        return Ok((vec![0.0; n], 0));
    }
    let diag: Vec<f64> = sys
        .diagonal()
        .into_iter()
        .map(|d| if d.abs() > 0.0 { d } else { 1.0 })
        .collect();

    let mut x = vec![0.0; n];
    let mut r = b.clone();
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(ri, di)| ri / di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut best = (x.clone(), b_norm);
    for iter in 0..max_iter {
        let res = norm(&r);
        if res < best.1 {
            best = (x.clone(), res);
        }
        if res / b_norm <= tol {
            return Ok((x, iter));
        }
        let ap = sys.matvec(&p);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            break; // numerically indefinite direction; stop with best iterate
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let res = norm(&r);
    if res < best.1 {
        best = (x, res);
    }
    Err(Error::NotConverged {
        iterations: max_iter,
        residual: best.1 / b_norm,
        best: best.0,
    })
}

/// Solve `A alpha = b` to relative residual `tol`.
pub fn solve_coefficients(sys: &GalerkinSystem, tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    solve_with_stats(sys, tol, max_iter).map(|(x, _)| x)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solved implicit field: hierarchy, basis placement and coefficients.
#[derive(Debug, Clone)]
pub struct ImplicitField {
    hierarchy: SparseVoxelHierarchy,
    spec: BasisSpec,
    dof_index: BTreeMap<VoxelKey, usize>,
    bases: Vec<(LocalBasis, BasisFrame)>,
    pub alpha: Vec<f64>,
}

impl ImplicitField {
    pub fn new(
        hierarchy: SparseVoxelHierarchy,
        spec: BasisSpec,
        alpha: Vec<f64>,
    ) -> Result<ImplicitField> {
        let (keys, dof_index, bases) = dof_bases(&hierarchy, &spec)?;
        if alpha.len() != keys.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} coefficients for {} dofs",
                alpha.len(),
                keys.len()
            )));
        }
        if alpha.iter().any(|a| !a.is_finite()) {
            return Err(Error::ShapeMismatch("non-finite coefficient".into()));
        }
        Ok(ImplicitField {
            hierarchy,
            spec,
            dof_index,
            bases,
            alpha,
        })
    }

    pub fn hierarchy(&self) -> &SparseVoxelHierarchy {
        &self.hierarchy
    }

    pub fn spec(&self) -> &BasisSpec {
        &self.spec
    }

    /// Negate the field (used to fix the global inside/outside sign).
    pub fn flip_sign(&mut self) {
        for a in &mut self.alpha {
            *a = -*a;
        }
    }

    fn for_each_covering(&self, p: Vec3, mut visit: impl FnMut(usize)) {
        for scale in 1..=self.hierarchy.adaptive_depth() {
            let u = self.hierarchy.voxel_of(p, scale);
            for dx in -1..=1 {
                for dy in -1..=1 {
                    for dz in -1..=1 {
                        let key = VoxelKey {
                            scale,
                            ijk: [u[0] + dx, u[1] + dy, u[2] + dz],
                        };
                        if let Some(&dof) = self.dof_index.get(&key) {
                            visit(dof);
                        }
                    }
                }
            }
        }
    }

    pub fn value(&self, p: Vec3) -> f64 {
        let mut sum = 0.0;
        self.for_each_covering(p, |dof| {
            let (basis, frame) = &self.bases[dof];
            let local = (p - frame.center) / frame.h;
            sum += self.alpha[dof] * basis.value(local);
        });
        sum
    }

    pub fn gradient(&self, p: Vec3) -> Vec3 {
        let mut sum = Vec3::zeros();
        self.for_each_covering(p, |dof| {
            let (basis, frame) = &self.bases[dof];
            let local = (p - frame.center) / frame.h;
            sum += self.alpha[dof] * basis.gradient(local) / frame.h;
        });
        sum
    }

    pub fn hessian(&self, p: Vec3) -> Mat3 {
        let mut sum = Mat3::zeros();
        self.for_each_covering(p, |dof| {
            let (basis, frame) = &self.bases[dof];
            let local = (p - frame.center) / frame.h;
            sum += self.alpha[dof] * basis.hessian(local) / (frame.h * frame.h);
        });
        sum
    }
}

/// Evaluate the field, its gradient or its Hessian at a world point.
pub fn eval_field(field: &ImplicitField, p: Vec3, order: EvalOrder) -> BasisEval {
    match order {
        EvalOrder::Value => BasisEval::Value(field.value(p)),
        EvalOrder::Gradient => BasisEval::Gradient(field.gradient(p)),
        EvalOrder::Hessian => BasisEval::Hessian(field.hessian(p)),
    }
}

/// Energy terms of the variational problem at the current coefficients:
/// `(E_N, E_H, E_P, E_total)` with `E_total = E_N + lambda_h E_H
/// + lambda_p E_P`. `E_H` integrates the full Frobenius norm of the
/// Hessian; for the C1 families this agrees with the assembled
/// Laplacian-Laplacian block because all boundary terms vanish on the
/// support boundaries.
pub fn energy(
    field: &ImplicitField,
    domain: &DomainCells,
    cloud: &PointCloud,
    weights: &SolverWeights,
) -> (f64, f64, f64, f64) {
    let q = field.spec.default_quad_order();
    // same base-voxel units as assemble_system: derivatives with respect
    // to x/b and volume elements in b^3
    let ub = field.hierarchy.base_size();
    let vol = ub * ub * ub;
    let mut e_n = 0.0;
    let mut e_h = 0.0;
    for (idx, ijk) in domain.cells().iter().enumerate() {
        let n_cell = domain.normals[idx];
        let (lo, hi) = domain.cell_bounds(*ijk);
        let rx = MappedRule::new(lo.x, hi.x, q);
        let ry = MappedRule::new(lo.y, hi.y, q);
        let rz = MappedRule::new(lo.z, hi.z, q);
        for (&x, &wx) in rx.points.iter().zip(&rx.weights) {
            for (&y, &wy) in ry.points.iter().zip(&ry.weights) {
                for (&z, &wz) in rz.points.iter().zip(&rz.weights) {
                    let w = wx * wy * wz / vol;
                    let p = Vec3::new(x, y, z);
                    let g = field.gradient(p) * ub;
                    e_n += w * (g - n_cell).norm_squared();
                    let hess = field.hessian(p) * (ub * ub);
                    e_h += w * hess.norm_squared();
                }
            }
        }
    }
    let mut e_p = 0.0;
    for p in cloud.points() {
        let d = field.value(p.position) - p.screening;
        e_p += d * d;
    }
    let total = e_n + weights.lambda_h * e_h + weights.lambda_p * e_p;
    (e_n, e_h, e_p, total)
}
