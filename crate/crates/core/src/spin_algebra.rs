//! Spin representations, bond half-qubit algebras, and the projective
//! spin-direction filters used to collapse center spins onto qubit states.
//!
//! Conventions used throughout the crate:
//! - Every spin-S space uses the descending magnetic basis
//!   `|m = S>, |m = S-1>, ..., |m = -S>`.
//! - A bond particle is modelled as two commuting spin-1/2 halves, one facing
//!   each adjacent center; its Hilbert space is the tensor product of the two
//!   C^2 factors (half A first, half B second).
//! - Qubit encodings: a center encodes `|0> = (-1)^(2S) |m = +S>`,
//!   `|1> = |m = -S>`; a bond half encodes `|0> = |m = -1/2>`,
//!   `|1> = |m = +1/2>`, so its qubit Paulis are `(2Ix, -2Iy, -2Iz)`.

use crate::linalg::{c, cr, identity, kron, zeros, CMat};
use num_complex::Complex64;

/// Spin-S representation; `twice_s` is 2S so half-integer spins stay exact.
#[derive(Clone)]
pub struct SpinRep {
    twice_s: u32,
    sx: CMat,
    sy: CMat,
    sz: CMat,
}

impl SpinRep {
    pub fn new(twice_s: u32) -> Self {
        assert!(twice_s >= 1, "spin must be positive");
        let dim = (twice_s + 1) as usize;
        let s = twice_s as f64 / 2.0;
        let mut sp = zeros(dim, dim);
        let mut sz = zeros(dim, dim);
        for i in 0..dim {
            let m = s - i as f64; // descending basis
            sz[(i, i)] = cr(m);
            if i > 0 {
                // raising: |m> -> |m+1>, row index i-1
                let coeff = (s * (s + 1.0) - m * (m + 1.0)).sqrt();
                sp[(i - 1, i)] = cr(coeff);
            }
        }
        let sm = sp.adjoint();
        let sx = (&sp + &sm) * cr(0.5);
        let sy = (&sp - &sm) * c(0.0, -0.5);
        SpinRep { twice_s, sx, sy, sz }
    }

    pub fn dim(&self) -> usize {
        (self.twice_s + 1) as usize
    }

    pub fn s(&self) -> f64 {
        self.twice_s as f64 / 2.0
    }

    pub fn sx(&self) -> &CMat {
        &self.sx
    }

    pub fn sy(&self) -> &CMat {
        &self.sy
    }

    pub fn sz(&self) -> &CMat {
        &self.sz
    }

    pub fn axis(&self, k: usize) -> &CMat {
        match k {
            0 => &self.sx,
            1 => &self.sy,
            2 => &self.sz,
            _ => panic!("axis index out of range"),
        }
    }

    /// Projection of the spin vector onto a unit direction.
    pub fn along(&self, dir: [f64; 3]) -> CMat {
        &self.sx * cr(dir[0]) + &self.sy * cr(dir[1]) + &self.sz * cr(dir[2])
    }

    /// Sx^2 + Sy^2 + Sz^2; equals S(S+1) times the identity.
    pub fn casimir(&self) -> CMat {
        &self.sx * &self.sx + &self.sy * &self.sy + &self.sz * &self.sz
    }

    /// Magnetic quantum number of basis index `i`.
    pub fn m_value(&self, i: usize) -> f64 {
        self.s() - i as f64
    }
}

/// One element of a center-spin POVM.
///
/// `op` is `sqrt(weight)` times the projector onto the extremal
/// `|m_along_direction| = S` doublet; the set satisfies
/// `sum op^dag op = identity`.
#[derive(Clone)]
pub struct PovmElement {
    pub label: &'static str,
    pub direction: [f64; 3],
    pub weight: f64,
    pub op: CMat,
}

/// Filters for spin-3/2 centers: the three coordinate axes with equal weight.
///
/// Each operator is `(S_axis^2 - 1/4) / sqrt(6)`, which is `sqrt(2/3)` times
/// the projector onto the `m = +-3/2` doublet along that axis.
pub fn povm_spin_three_half() -> Vec<PovmElement> {
    let rep = SpinRep::new(3);
    let eye = identity(rep.dim());
    AXES.iter()
        .zip(AXIS_LABELS)
        .map(|(&direction, label)| {
            let s_axis = rep.along(direction);
            let op = (&s_axis * &s_axis - &eye * cr(0.25)) / cr(6.0_f64.sqrt());
            PovmElement { label, direction, weight: 2.0 / 3.0, op }
        })
        .collect()
}

/// Filters for spin-2 centers: three coordinate axes (weight 1/3) plus four
/// body diagonals (weight 3/8), seven directions total.
///
/// The extremal projector along a direction is the degree-4 polynomial
/// `(A^4 - A^2) / 12` in `A = direction . S`, which is 1 on `m = +-2` and 0
/// on `m = 0, +-1`.
pub fn povm_spin_two() -> Vec<PovmElement> {
    let rep = SpinRep::new(4);
    let mut out = Vec::with_capacity(7);
    for (&direction, label) in AXES.iter().zip(AXIS_LABELS) {
        out.push(make_spin_two_element(&rep, direction, 1.0 / 3.0, label));
    }
    for (&direction, label) in BODY_DIAGONALS.iter().zip(DIAGONAL_LABELS) {
        out.push(make_spin_two_element(&rep, direction, 3.0 / 8.0, label));
    }
    out
}

fn make_spin_two_element(
    rep: &SpinRep,
    direction: [f64; 3],
    weight: f64,
    label: &'static str,
) -> PovmElement {
    let a = rep.along(direction);
    let a2 = &a * &a;
    let proj = (&a2 * &a2 - &a2) / cr(12.0);
    PovmElement { label, direction, weight, op: proj * cr(weight.sqrt()) }
}

pub const AXES: [[f64; 3]; 3] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
const AXIS_LABELS: [&str; 3] = ["x", "y", "z"];
const DIAGONAL_LABELS: [&str; 4] = ["d+++", "d-++", "d+-+", "d--+"];

/// Canonical body-diagonal representatives. The extremal projector is even
/// in the direction, so each antipodal pair is represented by its z >= 0
/// member; this keeps every direction inside the rotation formula's domain.
pub const BODY_DIAGONALS: [[f64; 3]; 4] = {
    const R: f64 = 0.577_350_269_189_625_8; // 1/sqrt(3)
    [[R, R, R], [-R, R, R], [R, -R, R], [-R, -R, R]]
};

/// Rotation vector `n` such that `exp(-i S.n)` maps the filter direction onto
/// the z axis: axis `direction x z`, angle `asin |direction x z|`.
///
/// Defined for directions in the closed upper hemisphere (all filter
/// directions are). Returns the zero vector for the z axis itself.
pub fn rotation_axis_angle(direction: [f64; 3]) -> [f64; 3] {
    assert!(
        direction[2] >= -1e-9,
        "rotation vector defined for upper-hemisphere directions"
    );
    // direction x z = (d_y, -d_x, 0)
    let cross = [direction[1], -direction[0], 0.0];
    let norm = (cross[0] * cross[0] + cross[1] * cross[1]).sqrt();
    if norm < 1e-12 {
        return [0.0, 0.0, 0.0];
    }
    let angle = norm.clamp(-1.0, 1.0).asin();
    [cross[0] * angle / norm, cross[1] * angle / norm, 0.0]
}

/// Unitary `exp(-i S.n)` with `n = rotation_axis_angle(direction)`; satisfies
/// `R (direction . S) R^dag = Sz`.
pub fn correction_rotation(rep: &SpinRep, direction: [f64; 3]) -> CMat {
    let n = rotation_axis_angle(direction);
    let gen = rep.along(n);
    crate::linalg::expm_hermitian(&gen, c(0.0, -1.0))
}

/// Isometry from the qubit space into a spin-S center:
/// `|0> -> (-1)^(2S) |m = +S>`, `|1> -> |m = -S>`.
pub fn center_qubit_isometry(rep: &SpinRep) -> CMat {
    let dim = rep.dim();
    let mut v = zeros(dim, 2);
    let sign = if rep.twice_s % 2 == 0 { 1.0 } else { -1.0 };
    v[(0, 0)] = cr(sign);
    v[(dim - 1, 1)] = cr(1.0);
    v
}

/// Qubit Pauli matrices of a bond half, written in the physical descending
/// basis `(|+1/2>, |-1/2>)`. Because the qubit encoding flips the basis
/// order, these are `(2Ix, -2Iy, -2Iz)`.
pub fn half_qubit_pauli(k: usize) -> CMat {
    let half = SpinRep::new(1);
    let sign = if k == 0 { 2.0 } else { -2.0 };
    half.axis(k) * cr(sign)
}

/// Spin components of bond half A (first factor) on the 4-dim bond space.
pub fn bond_half_a(k: usize) -> CMat {
    let half = SpinRep::new(1);
    kron(half.axis(k), &identity(2))
}

/// Spin components of bond half B (second factor) on the 4-dim bond space.
pub fn bond_half_b(k: usize) -> CMat {
    let half = SpinRep::new(1);
    kron(&identity(2), half.axis(k))
}

/// The two commuting spin-1/2 algebras carried by one bond particle,
/// bundled as 4x4 matrices on the bond space (product basis, A first).
pub struct BondHalves {
    pub a: [CMat; 3],
    pub b: [CMat; 3],
}

pub fn build_bond_halves() -> BondHalves {
    BondHalves {
        a: [bond_half_a(0), bond_half_a(1), bond_half_a(2)],
        b: [bond_half_b(0), bond_half_b(1), bond_half_b(2)],
    }
}

/// sqrt(weight) for a filter element, exposed for outcome probabilities.
pub fn povm_amplitude(e: &PovmElement) -> f64 {
    e.weight.sqrt()
}

/// exp(-i S.n) as a 3D rotation should send `direction` to +z; used as a
/// cross-check on the vector geometry independent of any spin matrices.
pub fn rotate_vector_to_z(direction: [f64; 3]) -> [f64; 3] {
    let n = rotation_axis_angle(direction);
    let theta = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
    if theta < 1e-15 {
        return direction;
    }
    let axis = [n[0] / theta, n[1] / theta, n[2] / theta];
    // Rodrigues formula
    let (sin_t, cos_t) = theta.sin_cos();
    let dot = axis[0] * direction[0] + axis[1] * direction[1] + axis[2] * direction[2];
    let cross = [
        axis[1] * direction[2] - axis[2] * direction[1],
        axis[2] * direction[0] - axis[0] * direction[2],
        axis[0] * direction[1] - axis[1] * direction[0],
    ];
    [
        direction[0] * cos_t + cross[0] * sin_t + axis[0] * dot * (1.0 - cos_t),
        direction[1] * cos_t + cross[1] * sin_t + axis[1] * dot * (1.0 - cos_t),
        direction[2] * cos_t + cross[2] * sin_t + axis[2] * dot * (1.0 - cos_t),
    ]
}

pub fn complex_zero() -> Complex64 {
    Complex64::new(0.0, 0.0)
}
