//! Cartesian-form 3D affine operators: translation, scaling, rotation,
//! reflection and shear, plus composition and analytic derivatives.
//!
//! Every operator is stored as a pair `(A, b)` acting as `x -> A·x + b`.
//! Chains are written in matrix-product order, so `[T, S, R]` means
//! `T·S·R·x`: the last element touches the input first.

#![allow(clippy::needless_range_loop)]

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = [f64; 3];
pub type Mat3 = [[f64; 3]; 3];

/// Norm below which a reflection normal cannot be normalized.
pub const DEFAULT_NORMAL_EPS: f64 = 1e-8;

pub const IDENTITY3: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
const ZERO3: Mat3 = [[0.0; 3]; 3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum OperatorKind {
    Translation,
    Scaling,
    Rotation,
    Reflection,
    Shear,
    Identity,
}

impl OperatorKind {
    /// The five non-identity operator families.
    pub const ALL: [OperatorKind; 5] = [
        OperatorKind::Translation,
        OperatorKind::Scaling,
        OperatorKind::Rotation,
        OperatorKind::Reflection,
        OperatorKind::Shear,
    ];

    pub const fn parameter_count(self) -> usize {
        match self {
            OperatorKind::Translation | OperatorKind::Scaling | OperatorKind::Rotation | OperatorKind::Reflection => 3,
            OperatorKind::Shear => 6,
            OperatorKind::Identity => 0,
        }
    }

    pub const fn symbol(self) -> char {
        match self {
            OperatorKind::Translation => 'T',
            OperatorKind::Scaling => 'S',
            OperatorKind::Rotation => 'R',
            OperatorKind::Reflection => 'F',
            OperatorKind::Shear => 'H',
            OperatorKind::Identity => 'I',
        }
    }

    pub fn from_symbol(c: char) -> Option<Self> {
        Some(match c {
            'T' => OperatorKind::Translation,
            'S' => OperatorKind::Scaling,
            'R' => OperatorKind::Rotation,
            'F' => OperatorKind::Reflection,
            'H' => OperatorKind::Shear,
            'I' => OperatorKind::Identity,
            _ => return None,
        })
    }
}

impl fmt::Display for OperatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.symbol())
    }
}

/// Parameters of one operator instance.
///
/// Value semantics per kind:
/// - Translation: `(v_x, v_y, v_z)`
/// - Scaling: `(s_x, s_y, s_z)`, unconstrained reals
/// - Rotation: yaw, pitch, roll angles `(α, β, γ)` in radians
/// - Reflection: raw plane normal, normalized when the matrix is built
/// - Shear: `(Sh^y_x, Sh^z_x, Sh^x_y, Sh^z_y, Sh^x_z, Sh^y_z)`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpParams {
    pub kind: OperatorKind,
    pub values: Vec<f64>,
}

impl OpParams {
    pub fn new(kind: OperatorKind, values: Vec<f64>) -> Result<Self> {
        check_len(kind, &values)?;
        Ok(Self { kind, values })
    }

    pub fn identity() -> Self {
        Self {
            kind: OperatorKind::Identity,
            values: Vec::new(),
        }
    }

    pub fn translation(v: Vec3) -> Self {
        Self {
            kind: OperatorKind::Translation,
            values: v.to_vec(),
        }
    }

    pub fn scaling(s: Vec3) -> Self {
        Self {
            kind: OperatorKind::Scaling,
            values: s.to_vec(),
        }
    }

    pub fn rotation(alpha: f64, beta: f64, gamma: f64) -> Self {
        Self {
            kind: OperatorKind::Rotation,
            values: vec![alpha, beta, gamma],
        }
    }

    pub fn reflection(normal: Vec3) -> Self {
        Self {
            kind: OperatorKind::Reflection,
            values: normal.to_vec(),
        }
    }

    pub fn shear(values: [f64; 6]) -> Self {
        Self {
            kind: OperatorKind::Shear,
            values: values.to_vec(),
        }
    }
}

fn check_len(kind: OperatorKind, values: &[f64]) -> Result<()> {
    if values.len() != kind.parameter_count() {
        return Err(Error::ParameterCount {
            kind,
            expected: kind.parameter_count(),
            got: values.len(),
        });
    }
    Ok(())
}

/// An affine map `x -> linear·x + translation` on R³.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineOp {
    pub linear: Mat3,
    pub translation: Vec3,
}

impl Default for AffineOp {
    fn default() -> Self {
        Self::identity()
    }
}

impl AffineOp {
    pub const fn identity() -> Self {
        Self {
            linear: IDENTITY3,
            translation: [0.0; 3],
        }
    }

    pub const fn linear(linear: Mat3) -> Self {
        Self {
            linear,
            translation: [0.0; 3],
        }
    }

    #[inline]
    pub fn apply(&self, x: &Vec3) -> Vec3 {
        add(&mat_vec(&self.linear, x), &self.translation)
    }

    /// `self ∘ inner`: apply `inner` first, then `self`.
    #[inline]
    pub fn after(&self, inner: &AffineOp) -> AffineOp {
        AffineOp {
            linear: mat_mul(&self.linear, &inner.linear),
            translation: add(&mat_vec(&self.linear, &inner.translation), &self.translation),
        }
    }

    /// Upper 3×4 block of the homogeneous 4×4 form, row-major.
    pub fn to_homogeneous(&self) -> [[f64; 4]; 4] {
        let mut h = [[0.0; 4]; 4];
        for i in 0..3 {
            h[i][..3].copy_from_slice(&self.linear[i]);
            h[i][3] = self.translation[i];
        }
        h[3][3] = 1.0;
        h
    }

    pub fn max_abs_diff(&self, other: &AffineOp) -> f64 {
        let mut m: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                m = m.max((self.linear[i][j] - other.linear[i][j]).abs());
            }
            m = m.max((self.translation[i] - other.translation[i]).abs());
        }
        m
    }
}

#[inline]
pub fn add(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn dot(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn mat_vec(m: &Mat3, x: &Vec3) -> Vec3 {
    [
        m[0][0] * x[0] + m[0][1] * x[1] + m[0][2] * x[2],
        m[1][0] * x[0] + m[1][1] * x[1] + m[1][2] * x[2],
        m[2][0] * x[0] + m[2][1] * x[1] + m[2][2] * x[2],
    ]
}

/// `mᵀ·x`
#[inline]
pub fn mat_t_vec(m: &Mat3, x: &Vec3) -> Vec3 {
    [
        m[0][0] * x[0] + m[1][0] * x[1] + m[2][0] * x[2],
        m[0][1] * x[0] + m[1][1] * x[1] + m[2][1] * x[2],
        m[0][2] * x[0] + m[1][2] * x[1] + m[2][2] * x[2],
    ]
}

#[inline]
pub fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut c = ZERO3;
    for i in 0..3 {
        for j in 0..3 {
            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    c
}

pub fn transpose(m: &Mat3) -> Mat3 {
    let mut t = ZERO3;
    for i in 0..3 {
        for j in 0..3 {
            t[i][j] = m[j][i];
        }
    }
    t
}

pub fn det(m: &Mat3) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Max-norm distance between two matrices.
pub fn mat_max_abs_diff(a: &Mat3, b: &Mat3) -> f64 {
    let mut m: f64 = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            m = m.max((a[i][j] - b[i][j]).abs());
        }
    }
    m
}

/// Composite rotation `R_z(α)·R_y(β)·R_x(γ)` from its closed-form entries.
fn rotation_matrix(alpha: f64, beta: f64, gamma: f64) -> Mat3 {
    let (sa, ca) = alpha.sin_cos();
    let (sb, cb) = beta.sin_cos();
    let (sg, cg) = gamma.sin_cos();
    [
        [ca * cb, ca * sb * sg - sa * cg, ca * sb * cg + sa * sg],
        [sa * cb, sa * sb * sg + ca * cg, sa * sb * cg - ca * sg],
        [-sb, cb * sg, cb * cg],
    ]
}

/// Partial derivatives of the rotation matrix with respect to (α, β, γ).
fn rotation_derivatives(alpha: f64, beta: f64, gamma: f64) -> [Mat3; 3] {
    let (sa, ca) = alpha.sin_cos();
    let (sb, cb) = beta.sin_cos();
    let (sg, cg) = gamma.sin_cos();
    let d_alpha = [
        [-sa * cb, -sa * sb * sg - ca * cg, -sa * sb * cg + ca * sg],
        [ca * cb, ca * sb * sg - sa * cg, ca * sb * cg + sa * sg],
        [0.0, 0.0, 0.0],
    ];
    let d_beta = [
        [-ca * sb, ca * cb * sg, ca * cb * cg],
        [-sa * sb, sa * cb * sg, sa * cb * cg],
        [-cb, -sb * sg, -sb * cg],
    ];
    let d_gamma = [
        [0.0, ca * sb * cg + sa * sg, -ca * sb * sg + sa * cg],
        [0.0, sa * sb * cg - ca * sg, -sa * sb * sg - ca * cg],
        [0.0, cb * cg, -cb * sg],
    ];
    [d_alpha, d_beta, d_gamma]
}

fn unit_normal(raw: &[f64], eps: f64) -> Result<(Vec3, f64)> {
    let norm = (raw[0] * raw[0] + raw[1] * raw[1] + raw[2] * raw[2]).sqrt();
    if !(norm > eps) {
        return Err(Error::DegenerateReflection { norm });
    }
    Ok(([raw[0] / norm, raw[1] / norm, raw[2] / norm], norm))
}

fn householder(m: &Vec3) -> Mat3 {
    let mut f = IDENTITY3;
    for i in 0..3 {
        for j in 0..3 {
            f[i][j] -= 2.0 * m[i] * m[j];
        }
    }
    f
}

/// The three elementary shear factors `H_yz`, `H_xz`, `H_xy`.
fn shear_factors(v: &[f64]) -> [Mat3; 3] {
    let (sh_yx, sh_zx, sh_xy, sh_zy, sh_xz, sh_yz) = (v[0], v[1], v[2], v[3], v[4], v[5]);
    let h_yz = [[1.0, 0.0, 0.0], [sh_xy, 1.0, 0.0], [sh_xz, 0.0, 1.0]];
    let h_xz = [[1.0, sh_yx, 0.0], [0.0, 1.0, 0.0], [0.0, sh_yz, 1.0]];
    let h_xy = [[1.0, 0.0, sh_zx], [0.0, 1.0, sh_zy], [0.0, 0.0, 1.0]];
    [h_yz, h_xz, h_xy]
}

/// Factor index and matrix position of each shear parameter.
const SHEAR_SLOTS: [(usize, usize, usize); 6] = [
    (1, 0, 1), // Sh^y_x in H_xz
    (2, 0, 2), // Sh^z_x in H_xy
    (0, 1, 0), // Sh^x_y in H_yz
    (2, 1, 2), // Sh^z_y in H_xy
    (0, 2, 0), // Sh^x_z in H_yz
    (1, 2, 1), // Sh^y_z in H_xz
];

/// Builds an operator from a kind and a raw parameter slice.
pub fn build_kind(kind: OperatorKind, values: &[f64], eps: f64) -> Result<AffineOp> {
    check_len(kind, values)?;
    Ok(match kind {
        OperatorKind::Identity => AffineOp::identity(),
        OperatorKind::Translation => AffineOp {
            linear: IDENTITY3,
            translation: [values[0], values[1], values[2]],
        },
        OperatorKind::Scaling => {
            AffineOp::linear([[values[0], 0.0, 0.0], [0.0, values[1], 0.0], [0.0, 0.0, values[2]]])
        }
        OperatorKind::Rotation => AffineOp::linear(rotation_matrix(values[0], values[1], values[2])),
        OperatorKind::Reflection => {
            let (m, _) = unit_normal(values, eps)?;
            AffineOp::linear(householder(&m))
        }
        OperatorKind::Shear => {
            let [a, b, c] = shear_factors(values);
            AffineOp::linear(mat_mul(&mat_mul(&a, &b), &c))
        }
    })
}

pub fn build_operator(params: &OpParams) -> Result<AffineOp> {
    build_kind(params.kind, &params.values, DEFAULT_NORMAL_EPS)
}

/// Derivative of the operator output with respect to each of its parameters,
/// expressed as affine maps of the input: `∂(A·u + b)/∂θ_j = D_j·u + c_j`.
pub fn kind_derivatives(kind: OperatorKind, values: &[f64], eps: f64) -> Result<Vec<AffineOp>> {
    check_len(kind, values)?;
    let zero = |m: Mat3| AffineOp {
        linear: m,
        translation: [0.0; 3],
    };
    Ok(match kind {
        OperatorKind::Identity => Vec::new(),
        OperatorKind::Translation => (0..3)
            .map(|j| {
                let mut c = [0.0; 3];
                c[j] = 1.0;
                AffineOp {
                    linear: ZERO3,
                    translation: c,
                }
            })
            .collect(),
        OperatorKind::Scaling => (0..3)
            .map(|j| {
                let mut d = ZERO3;
                d[j][j] = 1.0;
                zero(d)
            })
            .collect(),
        OperatorKind::Rotation => rotation_derivatives(values[0], values[1], values[2])
            .into_iter()
            .map(zero)
            .collect(),
        OperatorKind::Reflection => {
            let (m, norm) = unit_normal(values, eps)?;
            // dm/dn_j = (e_j - m m_j) / |n|
            (0..3)
                .map(|j| {
                    let mut dm = [0.0; 3];
                    for (i, v) in dm.iter_mut().enumerate() {
                        let e = if i == j { 1.0 } else { 0.0 };
                        *v = (e - m[i] * m[j]) / norm;
                    }
                    let mut d = ZERO3;
                    for a in 0..3 {
                        for b in 0..3 {
                            d[a][b] = -2.0 * (dm[a] * m[b] + m[a] * dm[b]);
                        }
                    }
                    zero(d)
                })
                .collect()
        }
        OperatorKind::Shear => {
            let factors = shear_factors(values);
            SHEAR_SLOTS
                .iter()
                .map(|&(f, r, c)| {
                    let mut parts = factors;
                    let mut unit = ZERO3;
                    unit[r][c] = 1.0;
                    parts[f] = unit;
                    zero(mat_mul(&mat_mul(&parts[0], &parts[1]), &parts[2]))
                })
                .collect()
        }
    })
}

/// Composes a chain in matrix-product order (last element applied first).
pub fn compose(chain: &[AffineOp]) -> Result<AffineOp> {
    let (last, rest) = chain.split_last().ok_or(Error::EmptyChain)?;
    Ok(rest.iter().rev().fold(*last, |acc, op| op.after(&acc)))
}

pub fn apply(op: &AffineOp, x: &Vec3) -> Vec3 {
    op.apply(x)
}

/// Output and analytic Jacobians of a chain evaluated at one input.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainJacobian {
    pub output: Vec3,
    /// `d output / d θ` for every parameter, grouped per operator in chain order.
    pub param_jacobians: Vec<Vec<Vec3>>,
    pub input_jacobian: Mat3,
}

pub fn apply_with_jacobians(chain: &[OpParams], x: &Vec3) -> Result<ChainJacobian> {
    if chain.is_empty() {
        return Err(Error::EmptyChain);
    }
    let kinds: Vec<OperatorKind> = chain.iter().map(|p| p.kind).collect();
    let flat: Vec<f64> = chain.iter().flat_map(|p| p.values.iter().copied()).collect();
    let compiled = CompiledChain::new(&kinds, &flat, DEFAULT_NORMAL_EPS, true)?;
    let mut param_jacobians = Vec::with_capacity(chain.len());
    let mut j = 0;
    for p in chain {
        let n = p.kind.parameter_count();
        param_jacobians.push((j..j + n).map(|k| compiled.param_jacobian(k).apply(x)).collect());
        j += n;
    }
    Ok(ChainJacobian {
        output: compiled.apply(x),
        param_jacobians,
        input_jacobian: compiled.composite().linear,
    })
}

/// A chain of operators reduced to its composite map, optionally with the
/// per-parameter Jacobians folded into affine maps of the chain input.
///
/// For parameter `θ_j` of operator `k`, `∂y/∂θ_j = P_k·(D_j·S_k(x) + c_j)`,
/// where `P_k` is the product of the linear parts to the left of `k` and
/// `S_k` is the composite of the operators to its right. That expression is
/// itself affine in `x`, so it is stored as one `AffineOp`.
#[derive(Debug, Clone)]
pub struct CompiledChain {
    composite: AffineOp,
    param_jacobians: Vec<AffineOp>,
}

impl CompiledChain {
    pub fn identity() -> Self {
        Self {
            composite: AffineOp::identity(),
            param_jacobians: Vec::new(),
        }
    }

    pub fn new(kinds: &[OperatorKind], params: &[f64], eps: f64, with_jacobians: bool) -> Result<Self> {
        let expected: usize = kinds.iter().map(|k| k.parameter_count()).sum();
        if params.len() != expected {
            return Err(Error::ChainParameterCount {
                expected,
                got: params.len(),
            });
        }
        let mut ops = Vec::with_capacity(kinds.len());
        let mut offset = 0;
        for &k in kinds {
            let n = k.parameter_count();
            ops.push(build_kind(k, &params[offset..offset + n], eps)?);
            offset += n;
        }
        let composite = if ops.is_empty() {
            AffineOp::identity()
        } else {
            compose(&ops)?
        };
        if !with_jacobians {
            return Ok(Self {
                composite,
                param_jacobians: Vec::new(),
            });
        }

        // suffix[k] = ops[k+1] ∘ ... ∘ ops[last]
        let m = ops.len();
        let mut suffix = vec![AffineOp::identity(); m];
        for k in (0..m.saturating_sub(1)).rev() {
            suffix[k] = ops[k + 1].after(&suffix[k + 1]);
        }
        let mut param_jacobians = Vec::with_capacity(expected);
        let mut prefix = IDENTITY3;
        let mut offset = 0;
        for (k, &kind) in kinds.iter().enumerate() {
            let n = kind.parameter_count();
            for d in kind_derivatives(kind, &params[offset..offset + n], eps)? {
                let inner = d.after(&suffix[k]);
                param_jacobians.push(AffineOp {
                    linear: mat_mul(&prefix, &inner.linear),
                    translation: mat_vec(&prefix, &inner.translation),
                });
            }
            prefix = mat_mul(&prefix, &ops[k].linear);
            offset += n;
        }
        Ok(Self {
            composite,
            param_jacobians,
        })
    }

    #[inline]
    pub fn composite(&self) -> &AffineOp {
        &self.composite
    }

    #[inline]
    pub fn apply(&self, x: &Vec3) -> Vec3 {
        self.composite.apply(x)
    }

    pub fn param_len(&self) -> usize {
        self.param_jacobians.len()
    }

    pub fn param_jacobian(&self, j: usize) -> &AffineOp {
        &self.param_jacobians[j]
    }

    /// Adds `gᵀ·∂y/∂θ` to `param_grad` given the moment sums
    /// `outer = Σ g·xᵀ` and `sum_g = Σ g` collected over many inputs.
    pub fn accumulate_param_grad(&self, outer: &Mat3, sum_g: &Vec3, param_grad: &mut [f64]) {
        for (slot, jac) in param_grad.iter_mut().zip(&self.param_jacobians) {
            let mut acc = dot(&jac.translation, sum_g);
            for a in 0..3 {
                acc += dot(&jac.linear[a], &outer[a]);
            }
            *slot += acc;
        }
    }
}
