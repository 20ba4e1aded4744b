//! Parameterized tensor-product basis family.
//!
//! Each axis factor is a blend of elementary functions (powers, optionally
//! sine waves) constrained to vanish at the support boundary `x = +-1.5`
//! (and to have vanishing derivative there in the C1 family). The admissible
//! blends form a linear null space of the boundary constraints; per-voxel
//! parameters are coordinates in that null space.

use nalgebra::{DMatrix, DVector};

use crate::quadrature::MappedRule;
use crate::{Error, Mat3, Result, Vec3};

/// Half-width of the basis support in the local frame.
pub const SUPPORT: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Continuity {
    C1Polynomial,
    C0WithSines,
}

/// Elementary 1-D function: `x^u` or `sin(omega * pi * x / 1.5)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElemFn {
    Power(u32),
    Sine(u32),
}

impl ElemFn {
    fn angular(omega: u32) -> f64 {
        omega as f64 * std::f64::consts::PI / SUPPORT
    }

    pub fn value(&self, x: f64) -> f64 {
        match *self {
            ElemFn::Power(u) => x.powi(u as i32),
            ElemFn::Sine(w) => (Self::angular(w) * x).sin(),
        }
    }

    pub fn d1(&self, x: f64) -> f64 {
        match *self {
            ElemFn::Power(0) => 0.0,
            ElemFn::Power(u) => u as f64 * x.powi(u as i32 - 1),
            ElemFn::Sine(w) => {
                let c = Self::angular(w);
                c * (c * x).cos()
            }
        }
    }

    pub fn d2(&self, x: f64) -> f64 {
        match *self {
            ElemFn::Power(0) | ElemFn::Power(1) => 0.0,
            ElemFn::Power(u) => (u * (u - 1)) as f64 * x.powi(u as i32 - 2),
            ElemFn::Sine(w) => {
                let c = Self::angular(w);
                -c * c * (c * x).sin()
            }
        }
    }
}

/// Elementary function family plus the orthonormal null space of the
/// boundary constraints. Free coefficients parameterize admissible blends.
#[derive(Debug, Clone)]
pub struct BasisSpec {
    degree: u32,
    sine_freqs: Vec<u32>,
    continuity: Continuity,
    elems: Vec<ElemFn>,
    /// n_elems x free_dim, orthonormal columns.
    null_space: DMatrix<f64>,
}

impl BasisSpec {
    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn sine_freqs(&self) -> &[u32] {
        &self.sine_freqs
    }

    pub fn continuity(&self) -> Continuity {
        self.continuity
    }

    pub fn elems(&self) -> &[ElemFn] {
        &self.elems
    }

    pub fn free_dim(&self) -> usize {
        self.null_space.ncols()
    }

    pub fn null_space(&self) -> &DMatrix<f64> {
        &self.null_space
    }

    /// Default tensor-product Gauss order: exact for the pure polynomial
    /// family (integrands up to degree 2d in products of second derivatives
    /// times values).
    pub fn default_quad_order(&self) -> usize {
        (self.degree as usize + 1).max(4)
    }

    /// Blend a free-coefficient vector into elementary-function coefficients.
    pub fn blend(&self, free: &[f64]) -> DVector<f64> {
        assert_eq!(free.len(), self.free_dim(), "free coefficient length");
        &self.null_space * DVector::from_column_slice(free)
    }

    /// Plain-text serialization: degree, frequencies, continuity, null-space rows.
    pub fn to_text(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        writeln!(out, "degree {}", self.degree).unwrap();
        let freqs: Vec<String> = self.sine_freqs.iter().map(|f| f.to_string()).collect();
        writeln!(out, "sines {}", freqs.join(" ")).unwrap();
        writeln!(
            out,
            "continuity {}",
            match self.continuity {
                Continuity::C1Polynomial => "c1",
                Continuity::C0WithSines => "c0",
            }
        )
        .unwrap();
        for r in 0..self.null_space.nrows() {
            let row: Vec<String> = (0..self.null_space.ncols())
                .map(|c| format!("{:.17e}", self.null_space[(r, c)]))
                .collect();
            writeln!(out, "row {}", row.join(" ")).unwrap();
        }
        out
    }
}

/// Build the basis family: powers `1, x, ..., x^degree` plus the requested
/// sine frequencies, constrained to vanish at the support boundary (value
/// only for C0, value and slope for C1).
pub fn make_basis_spec(
    degree: u32,
    sine_freqs: &[u32],
    continuity: Continuity,
) -> Result<BasisSpec> {
    for &f in sine_freqs {
        if f == 0 {
            return Err(Error::InvalidFrequency(f));
        }
    }
    let mut elems: Vec<ElemFn> = (0..=degree).map(ElemFn::Power).collect();
    elems.extend(sine_freqs.iter().map(|&f| ElemFn::Sine(f)));
    let n = elems.len();

    let mut rows: Vec<Vec<f64>> = Vec::new();
    for x in [-SUPPORT, SUPPORT] {
        rows.push(elems.iter().map(|e| e.value(x)).collect());
    }
    if continuity == Continuity::C1Polynomial {
        for x in [-SUPPORT, SUPPORT] {
            rows.push(elems.iter().map(|e| e.d1(x)).collect());
        }
    }
    let ncon = rows.len();
    let c = DMatrix::from_fn(ncon, n, |r, col| rows[r][col]);

    // Null space of C from the spectral decomposition of C^T C.
    let gram = c.transpose() * &c;
    let eig = gram.symmetric_eigen();
    let max_eig = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    let tol = 1e-12 * max_eig.max(1.0);
    let mut cols: Vec<(f64, DVector<f64>)> = Vec::new();
    for (i, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda < tol {
            cols.push((lambda, eig.eigenvectors.column(i).into_owned()));
        }
    }
    if cols.is_empty() {
        return Err(Error::InsufficientDegree);
    }
    // Deterministic order and sign
    cols.sort_by(|a, b| a.0.total_cmp(&b.0));
    for (_, v) in cols.iter_mut() {
        let lead = v
            .iter()
            .cloned()
            .max_by(|a, b| a.abs().total_cmp(&b.abs()))
            .unwrap();
        if lead < 0.0 {
            *v = -v.clone();
        }
    }
    let null_space = DMatrix::from_columns(&cols.iter().map(|(_, v)| v.clone()).collect::<Vec<_>>());

    // Constraint residuals must vanish to 1e-12
    let residual = (&c * &null_space).abs().max();
    if residual > 1e-12 {
        return Err(Error::InvalidConfig(format!(
            "basis constraint residual {residual:.3e} exceeds 1e-12"
        )));
    }
    Ok(BasisSpec {
        degree,
        sine_freqs: sine_freqs.to_vec(),
        continuity,
        elems,
        null_space,
    })
}

/// Per-voxel free coefficients, one vector per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisParams {
    pub axes: [Vec<f64>; 3],
}

impl BasisParams {
    /// Unit free coefficient on every axis (the fixed-basis default).
    pub fn default_for(spec: &BasisSpec) -> Self {
        let mut v = vec![0.0; spec.free_dim()];
        v[0] = 1.0;
        BasisParams {
            axes: [v.clone(), v.clone(), v],
        }
    }

    pub fn validate(&self, spec: &BasisSpec) -> Result<()> {
        for axis in &self.axes {
            if axis.len() != spec.free_dim() {
                return Err(Error::ShapeMismatch(format!(
                    "{} free coefficients, expected {}",
                    axis.len(),
                    spec.free_dim()
                )));
            }
            if axis.iter().any(|x| !x.is_finite()) {
                return Err(Error::ShapeMismatch("non-finite basis parameter".into()));
            }
            if axis.iter().all(|x| *x == 0.0) {
                return Err(Error::ShapeMismatch("zero basis parameter vector".into()));
            }
        }
        Ok(())
    }
}

/// One axis factor: polynomial coefficients (by power) plus sine terms.
#[derive(Debug, Clone)]
pub struct Axis1D {
    poly: Vec<f64>,
    sines: Vec<(f64, f64)>, // (angular frequency, amplitude)
}

impl Axis1D {
    fn from_blend(spec: &BasisSpec, coeffs: &DVector<f64>) -> Axis1D {
        let mut poly = vec![0.0; spec.degree as usize + 1];
        let mut sines = Vec::new();
        for (e, &c) in spec.elems.iter().zip(coeffs.iter()) {
            match *e {
                ElemFn::Power(u) => poly[u as usize] += c,
                ElemFn::Sine(w) => sines.push((ElemFn::angular(w), c)),
            }
        }
        Axis1D { poly, sines }
    }

    pub fn value(&self, x: f64) -> f64 {
        let mut v = 0.0;
        for &c in self.poly.iter().rev() {
            v = v * x + c;
        }
        for &(w, a) in &self.sines {
            v += a * (w * x).sin();
        }
        v
    }

    pub fn d1(&self, x: f64) -> f64 {
        let mut v = 0.0;
        for (u, &c) in self.poly.iter().enumerate().skip(1).rev() {
            v = v * x + u as f64 * c;
        }
        for &(w, a) in &self.sines {
            v += a * w * (w * x).cos();
        }
        v
    }

    pub fn d2(&self, x: f64) -> f64 {
        let mut v = 0.0;
        for (u, &c) in self.poly.iter().enumerate().skip(2).rev() {
            v = v * x + (u * (u - 1)) as f64 * c;
        }
        for &(w, a) in &self.sines {
            v -= a * w * w * (w * x).sin();
        }
        v
    }
}

/// Tensor-product basis for one voxel, in its local frame.
#[derive(Debug, Clone)]
pub struct LocalBasis {
    pub axes: [Axis1D; 3],
}

impl LocalBasis {
    pub fn new(spec: &BasisSpec, params: &BasisParams) -> Result<LocalBasis> {
        params.validate(spec)?;
        let mk = |axis: &Vec<f64>| Axis1D::from_blend(spec, &spec.blend(axis));
        Ok(LocalBasis {
            axes: [
                mk(&params.axes[0]),
                mk(&params.axes[1]),
                mk(&params.axes[2]),
            ],
        })
    }

    fn inside(p: Vec3) -> bool {
        p.x.abs() <= SUPPORT && p.y.abs() <= SUPPORT && p.z.abs() <= SUPPORT
    }

    pub fn value(&self, p: Vec3) -> f64 {
        if !Self::inside(p) {
            return 0.0;
        }
        self.axes[0].value(p.x) * self.axes[1].value(p.y) * self.axes[2].value(p.z)
    }

    pub fn gradient(&self, p: Vec3) -> Vec3 {
        if !Self::inside(p) {
            return Vec3::zeros();
        }
        let v = [
            self.axes[0].value(p.x),
            self.axes[1].value(p.y),
            self.axes[2].value(p.z),
        ];
        let d = [
            self.axes[0].d1(p.x),
            self.axes[1].d1(p.y),
            self.axes[2].d1(p.z),
        ];
        Vec3::new(d[0] * v[1] * v[2], v[0] * d[1] * v[2], v[0] * v[1] * d[2])
    }

    pub fn hessian(&self, p: Vec3) -> Mat3 {
        if !Self::inside(p) {
            return Mat3::zeros();
        }
        let v = [
            self.axes[0].value(p.x),
            self.axes[1].value(p.y),
            self.axes[2].value(p.z),
        ];
        let d1 = [
            self.axes[0].d1(p.x),
            self.axes[1].d1(p.y),
            self.axes[2].d1(p.z),
        ];
        let d2 = [
            self.axes[0].d2(p.x),
            self.axes[1].d2(p.y),
            self.axes[2].d2(p.z),
        ];
        let mut h = Mat3::zeros();
        for a in 0..3 {
            for c in 0..3 {
                let term = if a == c {
                    let mut t = d2[a];
                    for o in 0..3 {
                        if o != a {
                            t *= v[o];
                        }
                    }
                    t
                } else {
                    let third = 3 - a - c;
                    d1[a] * d1[c] * v[third]
                };
                h[(a, c)] = term;
            }
        }
        h
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalOrder {
    Value,
    Gradient,
    Hessian,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BasisEval {
    Value(f64),
    Gradient(Vec3),
    Hessian(Mat3),
}

/// Evaluate the tensor-product basis at a local-frame point.
pub fn eval_basis(
    spec: &BasisSpec,
    params: &BasisParams,
    p_local: Vec3,
    order: EvalOrder,
) -> Result<BasisEval> {
    let basis = LocalBasis::new(spec, params)?;
    Ok(match order {
        EvalOrder::Value => BasisEval::Value(basis.value(p_local)),
        EvalOrder::Gradient => BasisEval::Gradient(basis.gradient(p_local)),
        EvalOrder::Hessian => BasisEval::Hessian(basis.hessian(p_local)),
    })
}

/// World-frame placement of a local basis: `local = (p - center) / h`.
#[derive(Debug, Clone, Copy)]
pub struct BasisFrame {
    pub center: Vec3,
    pub h: f64,
}

impl BasisFrame {
    pub fn support_bounds(&self) -> (Vec3, Vec3) {
        (
            self.center.add_scalar(-SUPPORT * self.h),
            self.center.add_scalar(SUPPORT * self.h),
        )
    }
}

/// Per-axis pair integrals over a world interval, with chain-rule factors.
#[derive(Debug, Clone, Copy, Default)]
pub struct AxisPairIntegrals {
    pub i00: f64, // int bk * bl
    pub i11: f64, // int bk' * bl'
    pub i22: f64, // int bk'' * bl''
    pub i20: f64, // int bk'' * bl
    pub i02: f64, // int bk * bl''
}

/// Integrate products of two placed axis factors over `[lo, hi]` (world),
/// clipped to both supports.
pub fn axis_pair_integrals(
    ak: &Axis1D,
    ck: f64,
    hk: f64,
    al: &Axis1D,
    cl: f64,
    hl: f64,
    lo: f64,
    hi: f64,
    q: usize,
) -> AxisPairIntegrals {
    let lo = lo.max(ck - SUPPORT * hk).max(cl - SUPPORT * hl);
    let hi = hi.min(ck + SUPPORT * hk).min(cl + SUPPORT * hl);
    if hi <= lo {
        return AxisPairIntegrals::default();
    }
    let rule = MappedRule::new(lo, hi, q);
    let mut out = AxisPairIntegrals::default();
    for (&x, &w) in rule.points.iter().zip(&rule.weights) {
        let tk = (x - ck) / hk;
        let tl = (x - cl) / hl;
        let k0 = ak.value(tk);
        let k1 = ak.d1(tk) / hk;
        let k2 = ak.d2(tk) / (hk * hk);
        let l0 = al.value(tl);
        let l1 = al.d1(tl) / hl;
        let l2 = al.d2(tl) / (hl * hl);
        out.i00 += w * k0 * l0;
        out.i11 += w * k1 * l1;
        out.i22 += w * k2 * l2;
        out.i20 += w * k2 * l0;
        out.i02 += w * k0 * l2;
    }
    out
}

/// Per-axis single-basis integrals over a world interval.
#[derive(Debug, Clone, Copy, Default)]
pub struct AxisSingleIntegrals {
    pub j0: f64, // int bk
    pub j1: f64, // int bk'
}

pub fn axis_single_integrals(
    ak: &Axis1D,
    ck: f64,
    hk: f64,
    lo: f64,
    hi: f64,
    q: usize,
) -> AxisSingleIntegrals {
    let lo = lo.max(ck - SUPPORT * hk);
    let hi = hi.min(ck + SUPPORT * hk);
    if hi <= lo {
        return AxisSingleIntegrals::default();
    }
    let rule = MappedRule::new(lo, hi, q);
    let mut out = AxisSingleIntegrals::default();
    for (&x, &w) in rule.points.iter().zip(&rule.weights) {
        let tk = (x - ck) / hk;
        out.j0 += w * ak.value(tk);
        out.j1 += w * ak.d1(tk) / hk;
    }
    out
}

/// Inner products of two placed bases over one integration cell.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CellIntegrals {
    /// int grad(Bk)^T grad(Bl) dV
    pub grad_grad: f64,
    /// int lap(Bk) * lap(Bl) dV
    pub lap_lap: f64,
    /// int grad(Bk) dV
    pub grad_vec: Vec3,
}

/// Tensor-product Gauss quadrature of the pair inner products over an
/// axis-aligned world cell. Exact (to roundoff) for pure polynomial
/// families when `q >= degree + 1`.
#[allow(clippy::too_many_arguments)]
pub fn cell_inner_products(
    basis_k: &LocalBasis,
    frame_k: BasisFrame,
    basis_l: &LocalBasis,
    frame_l: BasisFrame,
    cell_lo: Vec3,
    cell_hi: Vec3,
    q: usize,
) -> Result<CellIntegrals> {
    for a in 0..3 {
        if !(cell_hi[a] > cell_lo[a]) {
            return Err(Error::DegenerateCell);
        }
    }
    let mut pair = [AxisPairIntegrals::default(); 3];
    let mut single = [AxisSingleIntegrals::default(); 3];
    for a in 0..3 {
        pair[a] = axis_pair_integrals(
            &basis_k.axes[a],
            frame_k.center[a],
            frame_k.h,
            &basis_l.axes[a],
            frame_l.center[a],
            frame_l.h,
            cell_lo[a],
            cell_hi[a],
            q,
        );
        single[a] = axis_single_integrals(
            &basis_k.axes[a],
            frame_k.center[a],
            frame_k.h,
            cell_lo[a],
            cell_hi[a],
            q,
        );
    }

    let mut grad_grad = 0.0;
    for a in 0..3 {
        let mut t = pair[a].i11;
        for o in 0..3 {
            if o != a {
                t *= pair[o].i00;
            }
        }
        grad_grad += t;
    }

    // lap(Bk) * lap(Bl) = sum_{a,c} (d2_a Bk)(d2_c Bl)
    let mut lap_lap = 0.0;
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

    let grad_vec = Vec3::new(
        single[0].j1 * single[1].j0 * single[2].j0,
        single[0].j0 * single[1].j1 * single[2].j0,
        single[0].j0 * single[1].j0 * single[2].j1,
    );

    Ok(CellIntegrals {
        grad_grad,
        lap_lap,
        grad_vec,
    })
}
