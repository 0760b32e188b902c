//! Reduction of filtered block states to cluster states via bond measurements.
//!
//! Every center carries a full complement of bond halves: interior bonds
//! contribute the two halves shared with a neighbor, and boundary centers of
//! open patches keep dangling halves so the block Hamiltonian (and its unique
//! ground state) is always the full-coordination one. The pipeline filters
//! each center with a POVM element, rotates the outcome frame back to the z
//! axis, restricts center and halves to their qubit subspaces, measures the
//! dangling halves in the X basis, measures the two-observable joint basis on
//! every interior bond, and accumulates a Pauli frame from the outcomes. At
//! zero temperature the post-frame register is exactly the graph state of the
//! interior-bond adjacency, on every outcome branch.
//!
//! Symbolic Pauli bookkeeping (products, commutation, GF(2) independence)
//! lives here too, as does the single-Pauli error propagation map used both
//! for injected-error checks and for thermal error accounting.

use crate::linalg::{c, CMat};
use crate::model_blocks::{
    build_block, BlockHamiltonian, BlockSpec, HalfSide, LatticeAdjacency,
};
use crate::spin_algebra::{
    center_qubit_isometry, correction_rotation, rotation_axis_angle, PovmElement, SpinRep,
};
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use thiserror::Error;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

// ---------------------------------------------------------------------------
// Pauli strings
// ---------------------------------------------------------------------------

pub const PAULI_I: u8 = 0;
pub const PAULI_X: u8 = 1;
pub const PAULI_Y: u8 = 2;
pub const PAULI_Z: u8 = 3;

/// letter product table: LETTER[a][b] is the letter of a*b
const LETTER: [[u8; 4]; 4] = [
    [0, 1, 2, 3],
    [1, 0, 3, 2],
    [2, 3, 0, 1],
    [3, 2, 1, 0],
];

/// phase exponent table: a*b = i^PHASE[a][b] * LETTER[a][b]
/// (cyclic convention sigma_a sigma_b = i eps_abc sigma_c, so X*Z = -iY)
const PHASE: [[u8; 4]; 4] = [
    [0, 0, 0, 0],
    [0, 0, 1, 3],
    [0, 3, 0, 1],
    [0, 1, 3, 0],
];

/// A Pauli word i^phase * P_0 x P_1 x ... with letters 0..3 per qubit.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct PauliString {
    /// exponent k of the global prefactor i^k, 0..3
    pub phase: u8,
    letters: Vec<u8>,
}

impl PauliString {
    pub fn identity(n: usize) -> Self {
        PauliString { phase: 0, letters: vec![PAULI_I; n] }
    }

    pub fn single(n: usize, qubit: usize, letter: u8) -> Self {
        assert!(letter < 4 && qubit < n);
        let mut p = Self::identity(n);
        p.letters[qubit] = letter;
        p
    }

    pub fn from_letters(phase: u8, letters: Vec<u8>) -> Self {
        assert!(letters.iter().all(|&l| l < 4));
        PauliString { phase: phase % 4, letters }
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    pub fn letter(&self, qubit: usize) -> u8 {
        self.letters[qubit]
    }

    /// number of non-identity letters
    pub fn weight(&self) -> usize {
        self.letters.iter().filter(|&&l| l != PAULI_I).count()
    }

    pub fn mul(&self, other: &PauliString) -> PauliString {
        assert_eq!(self.len(), other.len());
        let mut phase = (self.phase + other.phase) % 4;
        let letters = self
            .letters
            .iter()
            .zip(&other.letters)
            .map(|(&a, &b)| {
                phase = (phase + PHASE[a as usize][b as usize]) % 4;
                LETTER[a as usize][b as usize]
            })
            .collect();
        PauliString { phase, letters }
    }

    pub fn commutes_with(&self, other: &PauliString) -> bool {
        let mut anti = 0usize;
        for (&a, &b) in self.letters.iter().zip(&other.letters) {
            if a != PAULI_I && b != PAULI_I && a != b {
                anti += 1;
            }
        }
        anti % 2 == 0
    }

    /// (x bits | z bits) image in the symplectic vector space over GF(2)
    pub fn symplectic(&self) -> Vec<bool> {
        let n = self.len();
        let mut v = vec![false; 2 * n];
        for (q, &l) in self.letters.iter().enumerate() {
            if l == PAULI_X || l == PAULI_Y {
                v[q] = true;
            }
            if l == PAULI_Z || l == PAULI_Y {
                v[n + q] = true;
            }
        }
        v
    }

    /// dense matrix on 2^n amplitudes, qubit 0 slowest
    pub fn as_matrix(&self) -> CMat {
        let mut m = CMat::identity(1, 1);
        for &l in &self.letters {
            m = m.kronecker(&pauli2(l));
        }
        let ph = [c(1.0, 0.0), c(0.0, 1.0), c(-1.0, 0.0), c(0.0, -1.0)][self.phase as usize];
        m * ph
    }
}

/// 2x2 Pauli matrix for a letter code
pub fn pauli2(letter: u8) -> CMat {
    match letter {
        PAULI_I => CMat::identity(2, 2),
        PAULI_X => CMat::from_row_slice(2, 2, &[ZERO, c(1.0, 0.0), c(1.0, 0.0), ZERO]),
        PAULI_Y => CMat::from_row_slice(2, 2, &[ZERO, c(0.0, -1.0), c(0.0, 1.0), ZERO]),
        PAULI_Z => CMat::from_row_slice(2, 2, &[c(1.0, 0.0), ZERO, ZERO, c(-1.0, 0.0)]),
        _ => panic!("invalid pauli letter {letter}"),
    }
}

fn gf2_eliminate(rows: &mut Vec<Vec<bool>>) -> usize {
    let width = rows.first().map_or(0, |r| r.len());
    let mut rank = 0;
    for col in 0..width {
        if let Some(pivot) = (rank..rows.len()).find(|&r| rows[r][col]) {
            rows.swap(rank, pivot);
            for r in 0..rows.len() {
                if r != rank && rows[r][col] {
                    let (a, b) = if r < rank {
                        let (lo, hi) = rows.split_at_mut(rank);
                        (&mut lo[r], &hi[0])
                    } else {
                        let (lo, hi) = rows.split_at_mut(r);
                        (&mut hi[0], &lo[rank])
                    };
                    for k in 0..width {
                        a[k] ^= b[k];
                    }
                }
            }
            rank += 1;
        }
    }
    rank
}

/// A list of commuting, independent Pauli generators.
#[derive(Clone, Debug)]
pub struct StabilizerSet {
    pub generators: Vec<PauliString>,
}

impl StabilizerSet {
    pub fn new(generators: Vec<PauliString>) -> Self {
        StabilizerSet { generators }
    }

    /// check mutual commutation and GF(2) independence of the generators
    pub fn verify(&self) -> Result<(), String> {
        for i in 0..self.generators.len() {
            for j in (i + 1)..self.generators.len() {
                if !self.generators[i].commutes_with(&self.generators[j]) {
                    return Err(format!("generators {i} and {j} anticommute"));
                }
            }
        }
        let mut rows: Vec<Vec<bool>> =
            self.generators.iter().map(|g| g.symplectic()).collect();
        let rank = gf2_eliminate(&mut rows);
        if rank != self.generators.len() {
            return Err(format!(
                "generators dependent: rank {rank} of {}",
                self.generators.len()
            ));
        }
        Ok(())
    }

    /// membership of the generated group, ignoring phases
    pub fn contains_mod_phase(&self, p: &PauliString) -> bool {
        let mut rows: Vec<Vec<bool>> =
            self.generators.iter().map(|g| g.symplectic()).collect();
        let rank = gf2_eliminate(&mut rows);
        rows.truncate(rank);
        let mut target = p.symplectic();
        let width = target.len();
        for row in &rows {
            let col = (0..width).find(|&k| row[k]).unwrap();
            if target[col] {
                for k in 0..width {
                    target[k] ^= row[k];
                }
            }
        }
        target.iter().all(|&b| !b)
    }
}

/// Deferred X/Z corrections per qubit, applied to states only at readout.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PauliFrame {
    pub x: Vec<bool>,
    pub z: Vec<bool>,
}

impl PauliFrame {
    pub fn new(n: usize) -> Self {
        PauliFrame { x: vec![false; n], z: vec![false; n] }
    }

    pub fn is_identity(&self) -> bool {
        !self.x.iter().chain(&self.z).any(|&b| b)
    }

    pub fn compose(&mut self, other: &PauliFrame) {
        for (a, b) in self.x.iter_mut().zip(&other.x) {
            *a ^= b;
        }
        for (a, b) in self.z.iter_mut().zip(&other.z) {
            *a ^= b;
        }
    }

    /// apply Z bits then X bits to a 2^n amplitude vector (qubit 0 slowest);
    /// the overall phase is not meaningful
    pub fn apply_to(&self, state: &mut [Complex64]) {
        let n = self.x.len();
        assert_eq!(state.len(), 1usize << n);
        for q in 0..n {
            let mask = 1usize << (n - 1 - q);
            if self.z[q] {
                for (idx, amp) in state.iter_mut().enumerate() {
                    if idx & mask != 0 {
                        *amp = -*amp;
                    }
                }
            }
            if self.x[q] {
                for idx in 0..state.len() {
                    if idx & mask == 0 {
                        state.swap(idx, idx | mask);
                    }
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Reference states
// ---------------------------------------------------------------------------

/// (|0...0> + |1...1>)/sqrt(2) on n qubits
pub fn ghz_vector(n: usize) -> Vec<Complex64> {
    let dim = 1usize << n;
    let mut v = vec![ZERO; dim];
    let a = c(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    v[0] = a;
    v[dim - 1] = a;
    v
}

/// graph state of the interior-bond adjacency: |+>^n with one CZ per bond
pub fn cluster_state_vector(adj: &LatticeAdjacency) -> Vec<Complex64> {
    let n = adj.n_centers;
    let dim = 1usize << n;
    let norm = 1.0 / (dim as f64).sqrt();
    let mut v = vec![c(norm, 0.0); dim];
    for bond in &adj.bonds {
        let mu = 1usize << (n - 1 - bond.a_center);
        let mv = 1usize << (n - 1 - bond.b_center);
        for (idx, amp) in v.iter_mut().enumerate() {
            if idx & mu != 0 && idx & mv != 0 {
                *amp = -*amp;
            }
        }
    }
    v
}

pub fn vec_fidelity(a: &[Complex64], b: &[Complex64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let mut ip = ZERO;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (x, y) in a.iter().zip(b) {
        ip += x.conj() * y;
        na += x.norm_sqr();
        nb += y.norm_sqr();
    }
    ip.norm_sqr() / (na * nb)
}

/// graph-state stabilizer generators K_r = X_r prod_{bonds at r} Z_other
pub fn cluster_stabilizers(adj: &LatticeAdjacency) -> StabilizerSet {
    let n = adj.n_centers;
    let gens = (0..n)
        .map(|r| {
            let mut g = PauliString::single(n, r, PAULI_X);
            for (bond_id, _) in adj.bonds_of(r) {
                let other = adj.bonds[bond_id].other(r);
                g = g.mul(&PauliString::single(n, other, PAULI_Z));
            }
            g
        })
        .collect();
    StabilizerSet::new(gens)
}

// ---------------------------------------------------------------------------
// Factored statevector register
// ---------------------------------------------------------------------------

#[derive(Error, Debug, Clone, PartialEq)]
pub enum FusionError {
    #[error("outcome has vanishing probability ({weight:.3e})")]
    ImpossibleOutcome { weight: f64 },
    #[error("merged factor would hold {size} amplitudes (cap {cap})")]
    FactorTooLarge { size: usize, cap: usize },
    #[error("bond {0} already measured")]
    RepeatedBondMeasurement(usize),
    #[error("dangling half {slot} of center {center} already measured")]
    RepeatedDanglingMeasurement { center: usize, slot: usize },
    #[error("center {0} already filtered")]
    RepeatedPovm(usize),
    #[error("operation requires center {0} to be filtered and restricted first")]
    CenterNotRestricted(usize),
    #[error("site {0} no longer present in the register")]
    MissingSite(usize),
    #[error("pipeline stage out of order: {0}")]
    StageOrder(String),
    #[error("instance too large: {0}")]
    InstanceTooLarge(String),
}

fn row_major_strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; dims.len()];
    for k in (0..dims.len().saturating_sub(1)).rev() {
        s[k] = s[k + 1] * dims[k + 1];
    }
    s
}

#[derive(Clone, Debug)]
struct Factor {
    sites: Vec<usize>,
    dims: Vec<usize>,
    amps: Vec<Complex64>,
}

impl Factor {
    fn pos_of(&self, site: usize) -> usize {
        self.sites.iter().position(|&s| s == site).expect("site not in factor")
    }

    fn norm2(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }
}

/// A state on labeled sites kept as a product of entangled factors that are
/// merged only when an operation spans them. Measured sites can be removed,
/// shrinking the register.
#[derive(Clone, Debug)]
pub struct Register {
    factors: Vec<Option<Factor>>,
    site_factor: Vec<Option<usize>>,
    /// cap on amplitudes per merged factor
    pub max_factor_amps: usize,
}

impl Register {
    /// build from disjoint factors covering a subset of `n_sites` site labels;
    /// each part is (sites, dims, amplitudes) with row-major layout, first
    /// listed site slowest
    pub fn from_factors(
        n_sites: usize,
        parts: Vec<(Vec<usize>, Vec<usize>, Vec<Complex64>)>,
    ) -> Self {
        let mut reg = Register {
            factors: Vec::new(),
            site_factor: vec![None; n_sites],
            max_factor_amps: 1 << 13,
        };
        for (sites, dims, mut amps) in parts {
            assert_eq!(sites.len(), dims.len());
            assert_eq!(dims.iter().product::<usize>(), amps.len());
            let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
            assert!(norm > 1e-12, "factor with zero norm");
            for a in &mut amps {
                *a /= norm;
            }
            let fi = reg.factors.len();
            for &s in &sites {
                assert!(reg.site_factor[s].is_none(), "site {s} listed twice");
                reg.site_factor[s] = Some(fi);
            }
            reg.factors.push(Some(Factor { sites, dims, amps }));
        }
        reg
    }

    pub fn site_present(&self, site: usize) -> bool {
        self.site_factor.get(site).map_or(false, |f| f.is_some())
    }

    pub fn site_dim(&self, site: usize) -> usize {
        let fi = self.site_factor[site].expect("site removed");
        let f = self.factors[fi].as_ref().unwrap();
        f.dims[f.pos_of(site)]
    }

    pub fn remaining_sites(&self) -> Vec<usize> {
        (0..self.site_factor.len()).filter(|&s| self.site_factor[s].is_some()).collect()
    }

    fn factor_of(&self, site: usize) -> Result<usize, FusionError> {
        self.site_factor
            .get(site)
            .copied()
            .flatten()
            .ok_or(FusionError::MissingSite(site))
    }

    fn merge(&mut self, fi: usize, fj: usize) -> Result<(), FusionError> {
        let a = self.factors[fi].take().unwrap();
        let b = self.factors[fj].take().unwrap();
        let size = a.amps.len() * b.amps.len();
        if size > self.max_factor_amps {
            return Err(FusionError::FactorTooLarge { size, cap: self.max_factor_amps });
        }
        let mut amps = vec![ZERO; size];
        for (i, &x) in a.amps.iter().enumerate() {
            let row = i * b.amps.len();
            for (j, &y) in b.amps.iter().enumerate() {
                amps[row + j] = x * y;
            }
        }
        let mut sites = a.sites;
        sites.extend_from_slice(&b.sites);
        let mut dims = a.dims;
        dims.extend_from_slice(&b.dims);
        for &s in &sites {
            self.site_factor[s] = Some(fi);
        }
        self.factors[fi] = Some(Factor { sites, dims, amps });
        Ok(())
    }

    fn ensure_single(&mut self, sites: &[usize]) -> Result<usize, FusionError> {
        let mut ids: Vec<usize> = Vec::new();
        for &s in sites {
            let fi = self.factor_of(s)?;
            if !ids.contains(&fi) {
                ids.push(fi);
            }
        }
        let first = ids[0];
        for &other in &ids[1..] {
            self.merge(first, other)?;
        }
        Ok(first)
    }

    /// offsets into the amplitude array for each joint index of `positions`
    fn selection_offsets(f: &Factor, positions: &[usize]) -> (Vec<usize>, usize) {
        let strides = row_major_strides(&f.dims);
        let sel_dims: Vec<usize> = positions.iter().map(|&p| f.dims[p]).collect();
        let d_sel: usize = sel_dims.iter().product();
        let sel_strides = row_major_strides(&sel_dims);
        let mut offsets = vec![0usize; d_sel];
        for (sel, off) in offsets.iter_mut().enumerate() {
            let mut acc = 0usize;
            for (i, &p) in positions.iter().enumerate() {
                let digit = (sel / sel_strides[i]) % sel_dims[i];
                acc += digit * strides[p];
            }
            *off = acc;
        }
        (offsets, d_sel)
    }

    /// apply a square operator on the joint space of `sites` (row-major,
    /// first site slowest); factors are merged as needed
    pub fn apply(&mut self, op: &CMat, sites: &[usize]) -> Result<(), FusionError> {
        let fi = self.ensure_single(sites)?;
        let f = self.factors[fi].take().unwrap();
        let positions: Vec<usize> = sites.iter().map(|&s| f.pos_of(s)).collect();
        let (offsets, d_sel) = Self::selection_offsets(&f, &positions);
        assert_eq!(op.nrows(), d_sel, "operator dimension mismatch");
        assert_eq!(op.ncols(), d_sel, "operator must be square here");
        let strides = row_major_strides(&f.dims);
        let mut out = vec![ZERO; f.amps.len()];
        for (idx, &amp) in f.amps.iter().enumerate() {
            if amp == ZERO {
                continue;
            }
            let mut sel_in = 0usize;
            let sel_dims_stride = row_major_strides(
                &positions.iter().map(|&p| f.dims[p]).collect::<Vec<_>>(),
            );
            for (i, &p) in positions.iter().enumerate() {
                let digit = (idx / strides[p]) % f.dims[p];
                sel_in += digit * sel_dims_stride[i];
            }
            let base = idx - offsets[sel_in];
            for o in 0..d_sel {
                let coeff = op[(o, sel_in)];
                if coeff != ZERO {
                    out[base + offsets[o]] += coeff * amp;
                }
            }
        }
        self.factors[fi] = Some(Factor { sites: f.sites, dims: f.dims, amps: out });
        Ok(())
    }

    /// apply a (d_new x d_old) isometry-like map on a single site, changing
    /// its local dimension; returns the squared norm kept, renormalizing
    pub fn apply_rect(&mut self, op: &CMat, site: usize) -> Result<f64, FusionError> {
        let fi = self.factor_of(site)?;
        let f = self.factors[fi].take().unwrap();
        let p = f.pos_of(site);
        let d_old = f.dims[p];
        let d_new = op.nrows();
        assert_eq!(op.ncols(), d_old, "operator dimension mismatch");
        let strides = row_major_strides(&f.dims);
        let mut dims_new = f.dims.clone();
        dims_new[p] = d_new;
        let strides_new = row_major_strides(&dims_new);
        let mut out = vec![ZERO; f.amps.len() / d_old * d_new];
        for (idx, &amp) in f.amps.iter().enumerate() {
            if amp == ZERO {
                continue;
            }
            let mut base = 0usize;
            for k in 0..f.dims.len() {
                if k != p {
                    base += ((idx / strides[k]) % f.dims[k]) * strides_new[k];
                }
            }
            let dp = (idx / strides[p]) % d_old;
            for o in 0..d_new {
                let coeff = op[(o, dp)];
                if coeff != ZERO {
                    out[base + o * strides_new[p]] += coeff * amp;
                }
            }
        }
        let weight: f64 = out.iter().map(|a| a.norm_sqr()).sum();
        if weight < 1e-12 {
            return Err(FusionError::ImpossibleOutcome { weight });
        }
        let norm = weight.sqrt();
        for a in &mut out {
            *a /= norm;
        }
        self.factors[fi] = Some(Factor { sites: f.sites, dims: dims_new, amps: out });
        Ok(weight)
    }

    /// contract <vec| over `sites` inside factor `fi`; returns the remaining
    /// amplitudes (compact row-major over the surviving positions in order)
    fn contract(f: &Factor, positions: &[usize], vec: &[Complex64]) -> Vec<Complex64> {
        let strides = row_major_strides(&f.dims);
        let sel_dims: Vec<usize> = positions.iter().map(|&p| f.dims[p]).collect();
        let sel_strides = row_major_strides(&sel_dims);
        assert_eq!(vec.len(), sel_dims.iter().product::<usize>());
        let rem: Vec<usize> =
            (0..f.dims.len()).filter(|k| !positions.contains(k)).collect();
        let rem_dims: Vec<usize> = rem.iter().map(|&k| f.dims[k]).collect();
        let rem_strides = row_major_strides(&rem_dims);
        let rem_len: usize = rem_dims.iter().product();
        let mut rest = vec![ZERO; rem_len.max(1)];
        for (idx, &amp) in f.amps.iter().enumerate() {
            if amp == ZERO {
                continue;
            }
            let mut sel = 0usize;
            for (i, &p) in positions.iter().enumerate() {
                sel += ((idx / strides[p]) % f.dims[p]) * sel_strides[i];
            }
            let mut key = 0usize;
            for (j, &k) in rem.iter().enumerate() {
                key += ((idx / strides[k]) % f.dims[k]) * rem_strides[j];
            }
            rest[key] += vec[sel].conj() * amp;
        }
        rest
    }

    /// Born weights of projecting `sites` onto each candidate vector
    pub fn measure_candidates(
        &mut self,
        sites: &[usize],
        candidates: &[Vec<Complex64>],
    ) -> Result<Vec<f64>, FusionError> {
        let fi = self.ensure_single(sites)?;
        let f = self.factors[fi].as_ref().unwrap();
        let positions: Vec<usize> = sites.iter().map(|&s| f.pos_of(s)).collect();
        Ok(candidates
            .iter()
            .map(|v| Self::contract(f, &positions, v).iter().map(|a| a.norm_sqr()).sum())
            .collect())
    }

    /// project `sites` onto |vec> and drop them from the register;
    /// returns the Born weight
    pub fn project_and_remove(
        &mut self,
        sites: &[usize],
        vec: &[Complex64],
    ) -> Result<f64, FusionError> {
        let fi = self.ensure_single(sites)?;
        let f = self.factors[fi].take().unwrap();
        let positions: Vec<usize> = sites.iter().map(|&s| f.pos_of(s)).collect();
        let mut rest = Self::contract(&f, &positions, vec);
        let weight: f64 = rest.iter().map(|a| a.norm_sqr()).sum();
        if weight < 1e-12 {
            self.factors[fi] = Some(f);
            return Err(FusionError::ImpossibleOutcome { weight });
        }
        let norm = weight.sqrt();
        for a in &mut rest {
            *a /= norm;
        }
        let rem: Vec<usize> =
            (0..f.dims.len()).filter(|k| !positions.contains(k)).collect();
        for &s in sites {
            self.site_factor[s] = None;
        }
        if rem.is_empty() {
            self.factors[fi] = None;
        } else {
            let sites_new: Vec<usize> = rem.iter().map(|&k| f.sites[k]).collect();
            let dims_new: Vec<usize> = rem.iter().map(|&k| f.dims[k]).collect();
            for &s in &sites_new {
                self.site_factor[s] = Some(fi);
            }
            self.factors[fi] = Some(Factor { sites: sites_new, dims: dims_new, amps: rest });
        }
        Ok(weight)
    }

    /// project `sites` onto |vec> but keep them in the register (the state
    /// becomes |vec> x rest); returns the Born weight
    pub fn project_onto(
        &mut self,
        sites: &[usize],
        vec: &[Complex64],
    ) -> Result<f64, FusionError> {
        let fi = self.ensure_single(sites)?;
        let f = self.factors[fi].take().unwrap();
        let positions: Vec<usize> = sites.iter().map(|&s| f.pos_of(s)).collect();
        let rest = Self::contract(&f, &positions, vec);
        let weight: f64 = rest.iter().map(|a| a.norm_sqr()).sum();
        if weight < 1e-12 {
            self.factors[fi] = Some(f);
            return Err(FusionError::ImpossibleOutcome { weight });
        }
        let norm = weight.sqrt();
        let strides = row_major_strides(&f.dims);
        let sel_dims: Vec<usize> = positions.iter().map(|&p| f.dims[p]).collect();
        let sel_strides = row_major_strides(&sel_dims);
        let rem: Vec<usize> =
            (0..f.dims.len()).filter(|k| !positions.contains(k)).collect();
        let rem_dims: Vec<usize> = rem.iter().map(|&k| f.dims[k]).collect();
        let rem_strides = row_major_strides(&rem_dims);
        let mut out = vec![ZERO; f.amps.len()];
        for (idx, slot) in out.iter_mut().enumerate() {
            let mut sel = 0usize;
            for (i, &p) in positions.iter().enumerate() {
                sel += ((idx / strides[p]) % f.dims[p]) * sel_strides[i];
            }
            let mut key = 0usize;
            for (j, &k) in rem.iter().enumerate() {
                key += ((idx / strides[k]) % f.dims[k]) * rem_strides[j];
            }
            *slot = vec[sel] * rest[key] / norm;
        }
        self.factors[fi] = Some(Factor { sites: f.sites, dims: f.dims, amps: out });
        Ok(weight)
    }

    pub fn factor_norm2(&self, site: usize) -> Result<f64, FusionError> {
        let fi = self.factor_of(site)?;
        Ok(self.factors[fi].as_ref().unwrap().norm2())
    }

    pub fn normalize_factor(&mut self, site: usize) -> Result<f64, FusionError> {
        let fi = self.factor_of(site)?;
        let f = self.factors[fi].as_mut().unwrap();
        let weight = f.norm2();
        if weight < 1e-12 {
            return Err(FusionError::ImpossibleOutcome { weight });
        }
        let norm = weight.sqrt();
        for a in &mut f.amps {
            *a /= norm;
        }
        Ok(weight)
    }

    /// squared-norm weight of applying `op` to `site`, without committing
    pub fn operator_weight(&self, op: &CMat, site: usize) -> Result<f64, FusionError> {
        let mut probe = self.clone();
        probe.apply(op, &[site])?;
        probe.factor_norm2(site)
    }

    /// merge everything left and return amplitudes ordered by `order`
    /// (row-major, first listed site slowest); `order` must list exactly the
    /// remaining sites
    pub fn full_state(&mut self, order: &[usize]) -> Result<Vec<Complex64>, FusionError> {
        let remaining = self.remaining_sites();
        assert_eq!(
            {
                let mut o = order.to_vec();
                o.sort_unstable();
                o
            },
            remaining,
            "order must cover the remaining sites exactly"
        );
        let fi = self.ensure_single(order)?;
        let f = self.factors[fi].as_ref().unwrap();
        let strides = row_major_strides(&f.dims);
        let target_dims: Vec<usize> = order
            .iter()
            .map(|&s| f.dims[f.pos_of(s)])
            .collect();
        let target_strides = row_major_strides(&target_dims);
        let mut out = vec![ZERO; f.amps.len()];
        let positions: Vec<usize> = order.iter().map(|&s| f.pos_of(s)).collect();
        for (idx, &amp) in f.amps.iter().enumerate() {
            let mut t = 0usize;
            for (i, &p) in positions.iter().enumerate() {
                t += ((idx / strides[p]) % f.dims[p]) * target_strides[i];
            }
            out[t] = amp;
        }
        Ok(out)
    }
}

// ---------------------------------------------------------------------------
// Site layout
// ---------------------------------------------------------------------------

/// Site labels for an instance: centers first, then the two halves of each
/// interior bond, then the dangling halves that top up boundary centers to
/// full coordination.
#[derive(Clone, Debug)]
pub struct SiteMap {
    pub n_centers: usize,
    pub n_bonds: usize,
    /// dangling half count per center
    pub dangling_count: Vec<usize>,
    dangling_base: Vec<usize>,
    pub total: usize,
}

impl SiteMap {
    pub fn build(adj: &LatticeAdjacency) -> Self {
        let n = adj.n_centers;
        let m = adj.model.num_bonds();
        let dangling_count: Vec<usize> =
            (0..n).map(|r| m - adj.degree(r)).collect();
        let mut dangling_base = Vec::with_capacity(n);
        let mut next = n + 2 * adj.bonds.len();
        for &cnt in &dangling_count {
            dangling_base.push(next);
            next += cnt;
        }
        SiteMap {
            n_centers: n,
            n_bonds: adj.bonds.len(),
            dangling_count,
            dangling_base,
            total: next,
        }
    }

    pub fn center(&self, r: usize) -> usize {
        r
    }

    pub fn bond_half(&self, bond: usize, side: HalfSide) -> usize {
        match side {
            HalfSide::A => self.n_centers + 2 * bond,
            HalfSide::B => self.n_centers + 2 * bond + 1,
        }
    }

    pub fn dangling(&self, center: usize, slot: usize) -> usize {
        assert!(slot < self.dangling_count[center]);
        self.dangling_base[center] + slot
    }

    /// all half sites belonging to center r: facing halves of its interior
    /// bonds (in bonds_of order), then its dangling halves
    pub fn halves_of(&self, adj: &LatticeAdjacency, r: usize) -> Vec<usize> {
        let mut sites: Vec<usize> = adj
            .bonds_of(r)
            .into_iter()
            .map(|(bond, side)| self.bond_half(bond, side))
            .collect();
        for slot in 0..self.dangling_count[r] {
            sites.push(self.dangling(r, slot));
        }
        sites
    }
}

// ---------------------------------------------------------------------------
// Bond measurement basis
// ---------------------------------------------------------------------------

/// Record of the two commuting bond observables, in the physical sign
/// convention (4 A^x B^z and 4 A^z B^x).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BondMeasurementRecord {
    pub bond: usize,
    pub s1: i8,
    pub s2: i8,
}

/// joint eigenbasis of (X x Z, Z x X) in the qubit convention, labeled by
/// qubit-convention eigenvalues (t1, t2); the physical observables are the
/// negatives of these words
pub fn bond_joint_basis() -> Vec<((i8, i8), Vec<Complex64>)> {
    let mut out = Vec::with_capacity(4);
    for &t1 in &[1i8, -1i8] {
        for &t2 in &[1i8, -1i8] {
            let f1 = f64::from(t1);
            let f2 = f64::from(t2);
            let v = vec![
                c(0.5, 0.0),
                c(0.5 * f2, 0.0),
                c(0.5 * f1, 0.0),
                c(-0.5 * f1 * f2, 0.0),
            ];
            out.push(((t1, t2), v));
        }
    }
    out
}

/// X-basis eigenvectors for dangling-half readout, labeled by outcome
pub fn x_basis() -> Vec<(i8, Vec<Complex64>)> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    vec![
        (1, vec![c(s, 0.0), c(s, 0.0)]),
        (-1, vec![c(s, 0.0), c(-s, 0.0)]),
    ]
}

// ---------------------------------------------------------------------------
// Error propagation rules
// ---------------------------------------------------------------------------

/// Where a single-qubit Pauli is injected in the pipeline.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InjectionSite {
    Center(usize),
    /// interior bond half, identified by bond id and side
    BondHalf(usize, HalfSide),
    /// dangling half `slot` of a boundary center
    Dangling(usize, usize),
}

/// Residual Pauli on the output cluster qubits after the pipeline consumes a
/// single-qubit error injected before the bond and dangling measurements:
/// center letters stay on their center; a Z on a half flips the frame bit of
/// its own center; an X on an interior half flips the far center instead; an
/// X on a dangling half is absorbed by the X-basis readout.
pub fn propagated_cluster_error(
    adj: &LatticeAdjacency,
    site: InjectionSite,
    letter: u8,
) -> (Vec<bool>, Vec<bool>) {
    let n = adj.n_centers;
    let mut x = vec![false; n];
    let mut z = vec![false; n];
    let (has_x, has_z) = match letter {
        PAULI_I => (false, false),
        PAULI_X => (true, false),
        PAULI_Y => (true, true),
        PAULI_Z => (false, true),
        _ => panic!("invalid letter"),
    };
    match site {
        InjectionSite::Center(r) => {
            x[r] ^= has_x;
            z[r] ^= has_z;
        }
        InjectionSite::BondHalf(bond, side) => {
            let rec = &adj.bonds[bond];
            let own = match side {
                HalfSide::A => rec.a_center,
                HalfSide::B => rec.b_center,
            };
            let far = rec.other(own);
            if has_z {
                z[own] ^= true;
            }
            if has_x {
                z[far] ^= true;
            }
        }
        InjectionSite::Dangling(r, _) => {
            if has_z {
                z[r] ^= true;
            }
        }
    }
    (x, z)
}

/// apply an X/Z mask pair to a state (phase not meaningful)
pub fn apply_pauli_masks(state: &mut [Complex64], x: &[bool], z: &[bool]) {
    let frame = PauliFrame { x: x.to_vec(), z: z.to_vec() };
    frame.apply_to(state);
}

// ---------------------------------------------------------------------------
// Fusion pipeline driver
// ---------------------------------------------------------------------------

/// One instance of the reduction pipeline: a register initialized to block
/// eigenstates, plus outcome bookkeeping.
#[derive(Clone)]
pub struct FusionSim {
    pub adj: LatticeAdjacency,
    pub map: SiteMap,
    pub reg: Register,
    pub delta: f64,
    povm_elements: Vec<PovmElement>,
    center_rep: SpinRep,
    half_rep: SpinRep,
    pub povm_outcome: Vec<Option<usize>>,
    pub records: Vec<Option<BondMeasurementRecord>>,
    pub dangling_outcome: Vec<Vec<Option<i8>>>,
    /// product of Born weights of all committed steps
    pub probability: f64,
    restricted: Vec<bool>,
}

impl FusionSim {
    /// `block_states`: one full-block eigenvector per center, amplitudes over
    /// (center, half_1 .. half_m) with the center slowest
    pub fn new(
        adj: &LatticeAdjacency,
        delta: f64,
        block_states: &[Vec<Complex64>],
    ) -> Result<Self, FusionError> {
        let n = adj.n_centers;
        assert_eq!(block_states.len(), n);
        if n > 8 {
            return Err(FusionError::InstanceTooLarge(format!(
                "{n} centers (cap 8 for full branch tracking)"
            )));
        }
        let map = SiteMap::build(adj);
        let model = adj.model;
        let cdim = model.center_dim();
        let m = model.num_bonds();
        let mut parts = Vec::with_capacity(n);
        for r in 0..n {
            let mut sites = vec![map.center(r)];
            sites.extend(map.halves_of(adj, r));
            assert_eq!(sites.len(), 1 + m, "center {r} must have full coordination");
            let mut dims = vec![cdim];
            dims.extend(std::iter::repeat(2).take(m));
            parts.push((sites, dims, block_states[r].clone()));
        }
        let reg = Register::from_factors(map.total, parts);
        let dangling_outcome = (0..n)
            .map(|r| vec![None; map.dangling_count[r]])
            .collect();
        Ok(FusionSim {
            adj: adj.clone(),
            map,
            reg,
            delta,
            povm_elements: model.povm(),
            center_rep: model.center_rep(),
            half_rep: SpinRep::new(1),
            povm_outcome: vec![None; n],
            records: vec![None; adj.bonds.len()],
            dangling_outcome,
            probability: 1.0,
            restricted: vec![false; n],
        })
    }

    pub fn n_outcomes(&self) -> usize {
        self.povm_elements.len()
    }

    /// filter center r with POVM element `forced` (or Born-sample one), apply
    /// the correction rotations to the center and all its halves, and restrict
    /// center and halves to their qubit subspaces
    pub fn apply_povm(
        &mut self,
        r: usize,
        forced: Option<usize>,
        rng: &mut ChaCha12Rng,
    ) -> Result<usize, FusionError> {
        if self.povm_outcome[r].is_some() {
            return Err(FusionError::RepeatedPovm(r));
        }
        let site = self.map.center(r);
        let weights: Vec<f64> = self
            .povm_elements
            .iter()
            .map(|e| self.reg.operator_weight(&e.op, site))
            .collect::<Result<_, _>>()?;
        let total: f64 = weights.iter().sum();
        assert!(
            (total - 1.0).abs() < 1e-9,
            "POVM weights must sum to 1, got {total}"
        );
        let k = match forced {
            Some(k) => {
                assert!(k < weights.len(), "outcome index out of range");
                if weights[k] < 1e-12 {
                    return Err(FusionError::ImpossibleOutcome { weight: weights[k] });
                }
                k
            }
            None => sample_index(rng, &weights),
        };
        self.reg.apply(&self.povm_elements[k].op, &[site])?;
        let w = self.reg.normalize_factor(site)?;
        self.probability *= w;

        let direction = self.povm_elements[k].direction;
        let axis = rotation_axis_angle(direction);
        let halves = self.map.halves_of(&self.adj, r);
        if axis.iter().map(|v| v * v).sum::<f64>().sqrt() > 1e-12 {
            self.reg.apply(&correction_rotation(&self.center_rep, direction), &[site])?;
            let half_rot = correction_rotation(&self.half_rep, direction);
            for &h in &halves {
                self.reg.apply(&half_rot, &[h])?;
            }
        }

        let isometry = center_qubit_isometry(&self.center_rep);
        let kept = self.reg.apply_rect(&isometry.adjoint(), site)?;
        assert!(
            (kept - 1.0).abs() < 1e-9,
            "filtered center must lie in the qubit subspace (kept {kept})"
        );
        // relabel each half into the qubit basis (|0> = m=-1/2)
        let swap = pauli2(PAULI_X);
        for &h in &halves {
            self.reg.apply(&swap, &[h])?;
        }
        self.restricted[r] = true;
        self.povm_outcome[r] = Some(k);
        Ok(k)
    }

    /// inject a single-qubit Pauli in the qubit convention (valid once the
    /// involved centers are restricted)
    pub fn inject(&mut self, site: InjectionSite, letter: u8) -> Result<(), FusionError> {
        let id = match site {
            InjectionSite::Center(r) => {
                if !self.restricted[r] {
                    return Err(FusionError::CenterNotRestricted(r));
                }
                self.map.center(r)
            }
            InjectionSite::BondHalf(bond, side) => {
                let r = match side {
                    HalfSide::A => self.adj.bonds[bond].a_center,
                    HalfSide::B => self.adj.bonds[bond].b_center,
                };
                if !self.restricted[r] {
                    return Err(FusionError::CenterNotRestricted(r));
                }
                self.map.bond_half(bond, side)
            }
            InjectionSite::Dangling(r, slot) => {
                if !self.restricted[r] {
                    return Err(FusionError::CenterNotRestricted(r));
                }
                self.map.dangling(r, slot)
            }
        };
        self.reg.apply(&pauli2(letter), &[id])
    }

    /// measure a dangling half in the X basis
    pub fn measure_dangling(
        &mut self,
        r: usize,
        slot: usize,
        forced: Option<i8>,
        rng: &mut ChaCha12Rng,
    ) -> Result<i8, FusionError> {
        if !self.restricted[r] {
            return Err(FusionError::CenterNotRestricted(r));
        }
        if self.dangling_outcome[r][slot].is_some() {
            return Err(FusionError::RepeatedDanglingMeasurement { center: r, slot });
        }
        let site = self.map.dangling(r, slot);
        let basis = x_basis();
        let cands: Vec<Vec<Complex64>> = basis.iter().map(|(_, v)| v.clone()).collect();
        let weights = self.reg.measure_candidates(&[site], &cands)?;
        let pick = match forced {
            Some(t) => {
                let i = basis.iter().position(|&(tt, _)| tt == t).expect("outcome label");
                if weights[i] < 1e-12 {
                    return Err(FusionError::ImpossibleOutcome { weight: weights[i] });
                }
                i
            }
            None => sample_index(rng, &weights),
        };
        let w = self.reg.project_and_remove(&[site], &cands[pick])?;
        self.probability *= w;
        self.dangling_outcome[r][slot] = Some(basis[pick].0);
        Ok(basis[pick].0)
    }

    /// measure the joint eigenbasis of the two bond observables; records and
    /// returns the physical outcome pair (s1, s2)
    pub fn measure_bond(
        &mut self,
        bond: usize,
        forced: Option<(i8, i8)>,
        rng: &mut ChaCha12Rng,
    ) -> Result<(i8, i8), FusionError> {
        if self.records[bond].is_some() {
            return Err(FusionError::RepeatedBondMeasurement(bond));
        }
        let rec = &self.adj.bonds[bond];
        for r in [rec.a_center, rec.b_center] {
            if !self.restricted[r] {
                return Err(FusionError::CenterNotRestricted(r));
            }
        }
        let sites = [
            self.map.bond_half(bond, HalfSide::A),
            self.map.bond_half(bond, HalfSide::B),
        ];
        let basis = bond_joint_basis();
        let cands: Vec<Vec<Complex64>> = basis.iter().map(|(_, v)| v.clone()).collect();
        let weights = self.reg.measure_candidates(&sites, &cands)?;
        let pick = match forced {
            Some((s1, s2)) => {
                let want = (-s1, -s2);
                let i = basis
                    .iter()
                    .position(|&(t, _)| t == want)
                    .expect("outcome label");
                if weights[i] < 1e-12 {
                    return Err(FusionError::ImpossibleOutcome { weight: weights[i] });
                }
                i
            }
            None => sample_index(rng, &weights),
        };
        let w = self.reg.project_and_remove(&sites, &cands[pick])?;
        self.probability *= w;
        let (t1, t2) = basis[pick].0;
        let record = BondMeasurementRecord { bond, s1: -t1, s2: -t2 };
        self.records[bond] = Some(record);
        Ok((record.s1, record.s2))
    }

    /// Pauli frame implied by the recorded outcomes
    pub fn frame_update(&self) -> Result<PauliFrame, FusionError> {
        let records: Vec<BondMeasurementRecord> = self
            .records
            .iter()
            .map(|r| r.ok_or_else(|| FusionError::StageOrder("unmeasured bond".into())))
            .collect::<Result<_, _>>()?;
        let dangling: Vec<Vec<i8>> = self
            .dangling_outcome
            .iter()
            .map(|row| {
                row.iter()
                    .map(|t| {
                        t.ok_or_else(|| {
                            FusionError::StageOrder("unmeasured dangling half".into())
                        })
                    })
                    .collect::<Result<_, _>>()
            })
            .collect::<Result<_, _>>()?;
        Ok(frame_from_outcomes(&self.adj, &records, &dangling))
    }

    /// amplitudes on the center qubits in center order (halves must all be
    /// measured away)
    pub fn final_cluster_state(&mut self) -> Result<Vec<Complex64>, FusionError> {
        let order: Vec<usize> = (0..self.map.n_centers).map(|r| self.map.center(r)).collect();
        self.reg.full_state(&order)
    }

    /// register amplitudes over an explicit site order (testing hook)
    pub fn state_on(&mut self, order: &[usize]) -> Result<Vec<Complex64>, FusionError> {
        self.reg.full_state(order)
    }
}

/// k_r is the product of the qubit-convention bond outcomes facing r and of
/// r's dangling X outcomes; a Z correction is owed wherever k_r = -1
pub fn frame_from_outcomes(
    adj: &LatticeAdjacency,
    records: &[BondMeasurementRecord],
    dangling: &[Vec<i8>],
) -> PauliFrame {
    let n = adj.n_centers;
    let mut frame = PauliFrame::new(n);
    for r in 0..n {
        let mut k = 1i32;
        for (bond, side) in adj.bonds_of(r) {
            let rec = &records[bond];
            assert_eq!(rec.bond, bond);
            let s_facing = match side {
                HalfSide::A => rec.s1,
                HalfSide::B => rec.s2,
            };
            // physical outcomes are the negatives of the qubit-word values
            k *= i32::from(-s_facing);
        }
        for &t in &dangling[r] {
            k *= i32::from(t);
        }
        if k < 0 {
            frame.z[r] = true;
        }
    }
    frame
}

fn sample_index(rng: &mut ChaCha12Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut draw = rng.gen::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if draw < w {
            return i;
        }
        draw -= w;
    }
    weights.len() - 1
}

// ---------------------------------------------------------------------------
// One-shot reduction
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct ReductionOptions {
    pub delta: f64,
    pub temperature: f64,
    pub seed: u64,
    /// POVM element index per center; None samples from the Born weights
    pub povm_choices: Option<Vec<usize>>,
    /// physical (s1, s2) per interior bond; None samples
    pub bond_choices: Option<Vec<(i8, i8)>>,
    /// X outcome per dangling half, indexed [center][slot]; None samples
    pub dangling_choices: Option<Vec<Vec<i8>>>,
    /// block eigenstate index per center; None samples thermally
    pub block_levels: Option<Vec<usize>>,
    pub injection: Option<(InjectionSite, u8)>,
}

impl Default for ReductionOptions {
    fn default() -> Self {
        ReductionOptions {
            delta: 1.0,
            temperature: 0.0,
            seed: 0,
            povm_choices: None,
            bond_choices: None,
            dangling_choices: None,
            block_levels: None,
            injection: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ReductionResult {
    /// post-frame overlap with the graph state of the interior bonds
    pub fidelity: f64,
    /// product of Born weights along this branch
    pub probability: f64,
    pub state: Vec<Complex64>,
    pub frame: PauliFrame,
    pub records: Vec<BondMeasurementRecord>,
    pub povm: Vec<usize>,
    pub dangling: Vec<Vec<i8>>,
    pub levels: Vec<usize>,
}

/// thermal weights over block eigenstates at temperature t (t = 0 puts all
/// weight on the ground state)
pub fn thermal_level_weights(block: &BlockHamiltonian, t: f64) -> Vec<f64> {
    assert!(t >= 0.0, "temperature must be nonnegative");
    let e0 = block.eigenvalues[0];
    if t == 0.0 {
        let mut w = vec![0.0; block.eigenvalues.len()];
        w[0] = 1.0;
        return w;
    }
    let mut w: Vec<f64> = block
        .eigenvalues
        .iter()
        .map(|&e| (-(e - e0) / t).exp())
        .collect();
    let z: f64 = w.iter().sum();
    for v in &mut w {
        *v /= z;
    }
    w
}

fn sample_levels(
    block: &BlockHamiltonian,
    t: f64,
    n: usize,
    rng: &mut ChaCha12Rng,
) -> Vec<usize> {
    if t == 0.0 {
        return vec![0; n];
    }
    let weights = thermal_level_weights(block, t);
    (0..n)
        .map(|_| {
            let mut draw = rng.gen::<f64>();
            for (i, &w) in weights.iter().enumerate() {
                if draw < w {
                    return i;
                }
                draw -= w;
            }
            weights.len() - 1
        })
        .collect()
}

fn eigencolumn(block: &BlockHamiltonian, level: usize) -> Vec<Complex64> {
    block.eigenvectors.column(level).iter().copied().collect()
}

/// run the whole pipeline once and compare against the target graph state
pub fn reduce_to_cluster(
    adj: &LatticeAdjacency,
    opts: &ReductionOptions,
) -> Result<ReductionResult, FusionError> {
    let spec = BlockSpec::new(adj.model, opts.delta);
    let block = build_block(spec);
    run_reduction(adj, &block, opts)
}

/// same as `reduce_to_cluster` but reusing a prediagonalized block
pub fn run_reduction(
    adj: &LatticeAdjacency,
    block: &BlockHamiltonian,
    opts: &ReductionOptions,
) -> Result<ReductionResult, FusionError> {
    let mut rng = ChaCha12Rng::seed_from_u64(opts.seed);
    let n = adj.n_centers;
    let levels = match &opts.block_levels {
        Some(v) => {
            assert_eq!(v.len(), n);
            v.clone()
        }
        None => sample_levels(block, opts.temperature, n, &mut rng),
    };
    let states: Vec<Vec<Complex64>> =
        levels.iter().map(|&l| eigencolumn(block, l)).collect();
    let mut sim = FusionSim::new(adj, opts.delta, &states)?;
    for r in 0..n {
        let forced = opts.povm_choices.as_ref().map(|v| v[r]);
        sim.apply_povm(r, forced, &mut rng)?;
    }
    if let Some((site, letter)) = opts.injection {
        sim.inject(site, letter)?;
    }
    for r in 0..n {
        for slot in 0..sim.map.dangling_count[r] {
            let forced = opts.dangling_choices.as_ref().map(|v| v[r][slot]);
            sim.measure_dangling(r, slot, forced, &mut rng)?;
        }
    }
    for b in 0..adj.bonds.len() {
        let forced = opts.bond_choices.as_ref().map(|v| v[b]);
        sim.measure_bond(b, forced, &mut rng)?;
    }
    let frame = sim.frame_update()?;
    let mut state = sim.final_cluster_state()?;
    frame.apply_to(&mut state);
    let fidelity = vec_fidelity(&state, &cluster_state_vector(adj));
    Ok(ReductionResult {
        fidelity,
        probability: sim.probability,
        state,
        frame,
        records: sim.records.iter().map(|r| r.unwrap()).collect(),
        povm: sim.povm_outcome.iter().map(|k| k.unwrap()).collect(),
        dangling: sim
            .dangling_outcome
            .iter()
            .map(|row| row.iter().map(|t| t.unwrap()).collect())
            .collect(),
        levels,
    })
}

// ---------------------------------------------------------------------------
// Exhaustive branch enumeration at T = 0
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug)]
pub struct ExhaustiveStats {
    pub branches: usize,
    pub min_fidelity: f64,
    pub max_fidelity: f64,
    /// sum of conditional branch probabilities given the POVM outcomes
    pub prob_sum: f64,
}

/// Run every dangling and bond outcome branch for a fixed POVM outcome tuple
/// at T = 0. Fidelities are measured against `target` if given (amplitudes on
/// the center qubits, pre-frame-corrected), else against the graph state.
pub fn exhaustive_t0(
    adj: &LatticeAdjacency,
    delta: f64,
    povm: &[usize],
    injection: Option<(InjectionSite, u8)>,
    target: Option<&[Complex64]>,
) -> Result<ExhaustiveStats, FusionError> {
    let spec = BlockSpec::new(adj.model, delta);
    let block = build_block(spec);
    let n = adj.n_centers;
    let ground = eigencolumn(&block, 0);
    let states: Vec<Vec<Complex64>> = vec![ground; n];
    let mut rng = ChaCha12Rng::seed_from_u64(0);
    let mut base = FusionSim::new(adj, delta, &states)?;
    for r in 0..n {
        base.apply_povm(r, Some(povm[r]), &mut rng)?;
    }
    if let Some((site, letter)) = injection {
        base.inject(site, letter)?;
    }
    base.probability = 1.0;

    let n_bonds = adj.bonds.len();
    let dangling_slots: Vec<(usize, usize)> = (0..n)
        .flat_map(|r| (0..base.map.dangling_count[r]).map(move |slot| (r, slot)))
        .collect();
    let n_dang = dangling_slots.len();
    let dang_tuples = 1usize << n_dang;
    let outcome_pairs = [(1i8, 1i8), (1, -1), (-1, 1), (-1, -1)];

    let cluster = cluster_state_vector(adj);
    let reference: &[Complex64] = target.unwrap_or(&cluster);

    // Outer loop over dangling outcome tuples, then a depth-first walk over
    // bond outcomes that clones each measured prefix once: every leaf is one
    // outcome branch, but the shared early measurements are not repeated
    // 4^(remaining bonds) times over.
    let stats = (0..dang_tuples)
        .into_par_iter()
        .map(|dang_code| {
            let mut local = ExhaustiveStats {
                branches: 0,
                min_fidelity: f64::INFINITY,
                max_fidelity: f64::NEG_INFINITY,
                prob_sum: 0.0,
            };
            let mut rng = ChaCha12Rng::seed_from_u64(1);
            let mut sim = base.clone();
            for (i, &(r, slot)) in dangling_slots.iter().enumerate() {
                let t = if dang_code >> i & 1 == 0 { 1 } else { -1 };
                sim.measure_dangling(r, slot, Some(t), &mut rng)?;
            }
            let mut stack: Vec<(FusionSim, usize)> = vec![(sim, 0)];
            while let Some((node, depth)) = stack.pop() {
                if depth == n_bonds {
                    let frame = node.frame_update()?;
                    let mut node = node;
                    let mut state = node.final_cluster_state()?;
                    frame.apply_to(&mut state);
                    let fid = vec_fidelity(&state, reference);
                    local.branches += 1;
                    local.prob_sum += node.probability;
                    local.min_fidelity = local.min_fidelity.min(fid);
                    local.max_fidelity = local.max_fidelity.max(fid);
                    continue;
                }
                for &pair in &outcome_pairs[..3] {
                    let mut child = node.clone();
                    child.measure_bond(depth, Some(pair), &mut rng)?;
                    stack.push((child, depth + 1));
                }
                let mut last = node;
                last.measure_bond(depth, Some(outcome_pairs[3]), &mut rng)?;
                stack.push((last, depth + 1));
            }
            Ok(local)
        })
        .try_reduce(
            || ExhaustiveStats {
                branches: 0,
                min_fidelity: f64::INFINITY,
                max_fidelity: f64::NEG_INFINITY,
                prob_sum: 0.0,
            },
            |a, b| {
                Ok(ExhaustiveStats {
                    branches: a.branches + b.branches,
                    min_fidelity: a.min_fidelity.min(b.min_fidelity),
                    max_fidelity: a.max_fidelity.max(b.max_fidelity),
                    prob_sum: a.prob_sum + b.prob_sum,
                })
            },
        )?;
    Ok(stats)
}

// ---------------------------------------------------------------------------
// Thermal Monte Carlo
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug)]
pub struct McStats {
    pub shots: usize,
    pub mean_fidelity: f64,
    pub std_error: f64,
}

/// sampled cluster fidelity of the pipeline on thermal blocks
pub fn thermal_fusion_mc(
    adj: &LatticeAdjacency,
    delta: f64,
    temperature: f64,
    shots: usize,
    seed: u64,
) -> Result<McStats, FusionError> {
    let spec = BlockSpec::new(adj.model, delta);
    let block = build_block(spec);
    let results: Vec<f64> = (0..shots)
        .into_par_iter()
        .map(|shot| {
            let opts = ReductionOptions {
                delta,
                temperature,
                seed: seed.wrapping_add(0x9e37_79b9_7f4a_7c15u64.wrapping_mul(shot as u64 + 1)),
                ..Default::default()
            };
            run_reduction(adj, &block, &opts).map(|r| r.fidelity)
        })
        .collect::<Result<_, _>>()?;
    let n = results.len() as f64;
    let mean = results.iter().sum::<f64>() / n;
    let var = results.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    Ok(McStats {
        shots,
        mean_fidelity: mean,
        std_error: (var / n).sqrt(),
    })
}

// ---------------------------------------------------------------------------
// Symbolic consistency of stabilizer bookkeeping
// ---------------------------------------------------------------------------

/// For every center r, multiply the block word X_r prod X_halves(r) with the
/// bond words Z_r' Z_half(facing r') of all incident bonds, and compare
/// against K_r times the measured bond words and dangling X words. Both sides
/// must agree exactly, including the i^k prefactor.
pub fn stabilizer_product_check(adj: &LatticeAdjacency) -> Result<(), String> {
    let map = SiteMap::build(adj);
    let nq = map.total;
    for r in 0..adj.n_centers {
        let mut lhs = PauliString::single(nq, map.center(r), PAULI_X);
        for &h in &map.halves_of(adj, r) {
            lhs = lhs.mul(&PauliString::single(nq, h, PAULI_X));
        }
        for (bond, side) in adj.bonds_of(r) {
            let far = adj.bonds[bond].other(r);
            let far_half = map.bond_half(bond, side.opposite());
            lhs = lhs.mul(&PauliString::single(nq, far, PAULI_Z));
            lhs = lhs.mul(&PauliString::single(nq, far_half, PAULI_Z));
        }

        let mut rhs = PauliString::single(nq, map.center(r), PAULI_X);
        for (bond, _) in adj.bonds_of(r) {
            let far = adj.bonds[bond].other(r);
            rhs = rhs.mul(&PauliString::single(nq, far, PAULI_Z));
        }
        for (bond, side) in adj.bonds_of(r) {
            let facing = map.bond_half(bond, side);
            let far_half = map.bond_half(bond, side.opposite());
            rhs = rhs.mul(&PauliString::single(nq, facing, PAULI_X));
            rhs = rhs.mul(&PauliString::single(nq, far_half, PAULI_Z));
        }
        for slot in 0..map.dangling_count[r] {
            rhs = rhs.mul(&PauliString::single(nq, map.dangling(r, slot), PAULI_X));
        }

        if lhs != rhs {
            return Err(format!(
                "stabilizer product mismatch at center {r}: lhs {:?} i^{} vs rhs {:?} i^{}",
                (0..nq).map(|q| lhs.letter(q)).collect::<Vec<_>>(),
                lhs.phase,
                (0..nq).map(|q| rhs.letter(q)).collect::<Vec<_>>(),
                rhs.phase,
            ));
        }
    }
    Ok(())
}

/// GHZ stabilizer generators of every block, over the full site register
pub fn block_stabilizers(adj: &LatticeAdjacency) -> StabilizerSet {
    let map = SiteMap::build(adj);
    let nq = map.total;
    let mut gens = Vec::new();
    for r in 0..adj.n_centers {
        let halves = map.halves_of(adj, r);
        let mut logical_x = PauliString::single(nq, map.center(r), PAULI_X);
        for &h in &halves {
            logical_x = logical_x.mul(&PauliString::single(nq, h, PAULI_X));
        }
        gens.push(logical_x);
        for &h in &halves {
            let zz = PauliString::single(nq, map.center(r), PAULI_Z)
                .mul(&PauliString::single(nq, h, PAULI_Z));
            gens.push(zz);
        }
    }
    StabilizerSet::new(gens)
}
