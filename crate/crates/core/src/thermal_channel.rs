//! Thermal preparation and the effective Pauli channel it induces.
//!
//! At temperature T every block starts in its Gibbs state instead of the
//! ground state. The extremal filter still succeeds with a T-independent
//! outcome distribution, but the surviving qubit-space state is a mixture of
//! the target entangled state and a handful of error sectors. Averaging the
//! downstream fusion branches over outcomes dephases that mixture in the
//! sector basis of the block's stabilizer group, so the entire preparation
//! collapses to a probabilistic Pauli channel acting on a perfect resource:
//! a flip rate on the block's own cluster site plus export rates toward each
//! neighbor. This module computes that channel exactly from the spectrum,
//! locates the temperature where it reaches a target strength, and sweeps it
//! over a temperature grid.
//!
//! Conventions: the restriction operator below mirrors the pure-state
//! pipeline (filter, correction rotation, qubit isometry on the center, basis
//! swap on each half), so a block's qubit state at T = 0 is exactly the
//! (m+1)-qubit GHZ vector with the center as qubit 0.

use crate::fusion_pipeline::{
    ghz_vector, pauli2, propagated_cluster_error, InjectionSite, PauliString, StabilizerSet,
    PAULI_I, PAULI_X, PAULI_Y, PAULI_Z,
};
use crate::linalg::{c, cr, dagger, kron_all, CMat};
use crate::model_blocks::{build_block, BlockHamiltonian, BlockSpec, LatticeAdjacency, Model};
use crate::spin_algebra::{
    center_qubit_isometry, correction_rotation, rotation_axis_angle, PovmElement,
};
use rayon::prelude::*;
use std::collections::HashMap;

/// Gibbs state of one block at a fixed temperature.
///
/// `partition` is the partition sum with energies measured from the ground
/// level, so it stays finite at any temperature and tends to the ground
/// degeneracy (1 here) as T -> 0.
#[derive(Clone)]
pub struct GibbsBlock {
    pub spec: BlockSpec,
    pub temperature: f64,
    pub beta: f64,
    pub rho: CMat,
    pub partition: f64,
}

pub fn gibbs_block(block: &BlockHamiltonian, temperature: f64) -> GibbsBlock {
    assert!(
        temperature >= 0.0 && temperature.is_finite(),
        "temperature must be a finite non-negative number, got {temperature}"
    );
    let spec = block.spec;
    if temperature == 0.0 {
        return GibbsBlock {
            spec,
            temperature,
            beta: f64::INFINITY,
            rho: block.ground_projector.clone(),
            partition: 1.0,
        };
    }
    let e0 = block.eigenvalues[0];
    let weights: Vec<f64> = block
        .eigenvalues
        .iter()
        .map(|&e| (-(e - e0) / temperature).exp())
        .collect();
    let partition: f64 = weights.iter().sum();
    let dim = block.eigenvalues.len();
    let mut rho = CMat::zeros(dim, dim);
    for (k, &w) in weights.iter().enumerate() {
        let v = block.eigenvectors.column(k);
        let p = w / partition;
        for i in 0..dim {
            for j in 0..dim {
                rho[(i, j)] += v[i] * v[j].conj() * cr(p);
            }
        }
    }
    GibbsBlock { spec, temperature, beta: 1.0 / temperature, rho, partition }
}

/// The operator taking a block's physical space to its (m+1)-qubit space for
/// one filter outcome: filter, correction rotation, center isometry, and the
/// half-spin basis swap, exactly as the pure-state pipeline applies them.
pub fn filter_restriction(model: Model, outcome: &PovmElement) -> CMat {
    let center_rep = model.center_rep();
    let half_rep = crate::spin_algebra::SpinRep::new(1);
    let axis = rotation_axis_angle(outcome.direction);
    let rotating = axis.iter().map(|v| v * v).sum::<f64>().sqrt() > 1e-12;

    let mut center_op = outcome.op.clone();
    if rotating {
        center_op = correction_rotation(&center_rep, outcome.direction) * center_op;
    }
    center_op = dagger(&center_qubit_isometry(&center_rep)) * center_op;

    let mut half_op = pauli2(PAULI_X);
    if rotating {
        half_op *= correction_rotation(&half_rep, outcome.direction);
    }

    let m = model.num_bonds();
    let mut parts: Vec<&CMat> = Vec::with_capacity(m + 1);
    parts.push(&center_op);
    for _ in 0..m {
        parts.push(&half_op);
    }
    kron_all(&parts)
}

/// Filter a Gibbs block with one outcome and restrict to the qubit space.
/// Returns the normalized (m+1)-qubit density matrix and the outcome weight.
pub fn filtered_qubit_state(gibbs: &GibbsBlock, outcome: &PovmElement) -> (CMat, f64) {
    let r = filter_restriction(gibbs.spec.model, outcome);
    let mut rho_q = &r * &gibbs.rho * dagger(&r);
    let weight: f64 = (0..rho_q.nrows()).map(|i| rho_q[(i, i)].re).sum();
    assert!(weight > 1e-300, "filter outcome has vanishing weight");
    rho_q /= cr(weight);
    (rho_q, weight)
}

pub fn ghz_fidelity(rho_q: &CMat) -> f64 {
    let n = rho_q.nrows().trailing_zeros() as usize;
    let ghz = ghz_vector(n);
    let mut f = c(0.0, 0.0);
    for (i, a) in ghz.iter().enumerate() {
        for (j, b) in ghz.iter().enumerate() {
            f += a.conj() * rho_q[(i, j)] * b;
        }
    }
    f.re
}

/// Index of the z-axis filter element (shared by both models).
pub fn z_outcome_index(model: Model) -> usize {
    model
        .povm()
        .iter()
        .position(|e| e.label == "z")
        .expect("every filter family includes the z axis")
}

/// Thermal infidelity of one filtered block: 1 minus the overlap with the
/// target entangled state. Outcome-independent by rotation invariance of the
/// Gibbs state; computed with the z filter.
pub fn excitation_error(block: &BlockHamiltonian, temperature: f64) -> f64 {
    let gibbs = gibbs_block(block, temperature);
    let outcome = &block.spec.model.povm()[z_outcome_index(block.spec.model)];
    let (rho_q, _) = filtered_qubit_state(&gibbs, outcome);
    1.0 - ghz_fidelity(&rho_q)
}

/// Stabilizer group of the (m+1)-qubit GHZ state: generated by all-X and the
/// center-half ZZ pairs. 2^(m+1) elements.
pub fn ghz_group(n_qubits: usize) -> Vec<PauliString> {
    let mut gens = vec![PauliString::from_letters(0, vec![PAULI_X; n_qubits])];
    for a in 1..n_qubits {
        let mut letters = vec![PAULI_I; n_qubits];
        letters[0] = PAULI_Z;
        letters[a] = PAULI_Z;
        gens.push(PauliString::from_letters(0, letters));
    }
    let mut group = Vec::with_capacity(1 << n_qubits);
    for code in 0..1u32 << n_qubits {
        let mut g = PauliString::identity(n_qubits);
        for (bit, gen) in gens.iter().enumerate() {
            if code >> bit & 1 == 1 {
                g = g.mul(gen);
            }
        }
        group.push(g);
    }
    group
}

/// Group-average a qubit state over the GHZ stabilizer group. The result is
/// block diagonal in the syndrome sectors.
pub fn twirl_over_sectors(rho_q: &CMat) -> CMat {
    let n = rho_q.nrows().trailing_zeros() as usize;
    let group = ghz_group(n);
    let mut out = CMat::zeros(rho_q.nrows(), rho_q.ncols());
    for g in &group {
        let gm = g.as_matrix();
        out += &gm * rho_q * dagger(&gm);
    }
    out / cr(group.len() as f64)
}

/// One syndrome sector of a filtered block: which stabilizers flip sign, the
/// sector probability, and the minimum-weight Pauli representative (ties
/// prefer support on the center, then lexicographic letters).
#[derive(Clone, Debug)]
pub struct Syndrome {
    /// the all-X stabilizer anticommutes with the error
    pub phase_flip: bool,
    /// center-half ZZ pair a anticommutes with the error
    pub pair_flips: Vec<bool>,
    pub probability: f64,
    pub representative: PauliString,
}

fn representative_key(p: &PauliString) -> (usize, u8, Vec<u8>) {
    let center_identity = u8::from(p.letter(0) == PAULI_I);
    let letters: Vec<u8> = (0..p.len()).map(|q| p.letter(q)).collect();
    (p.weight(), center_identity, letters)
}

fn minimum_weight_representative(base: &PauliString, group: &[PauliString]) -> PauliString {
    group
        .iter()
        .map(|g| {
            let mut cand = base.mul(g);
            cand.phase = 0;
            cand
        })
        .min_by_key(representative_key)
        .expect("group is never empty")
}

/// Diagonal of the twirled state in the sector basis, with representatives.
/// Sector probabilities are read from the untwirled state; the twirl cannot
/// change them.
pub fn syndrome_distribution(rho_q: &CMat) -> Vec<Syndrome> {
    let dim = rho_q.nrows();
    let n = dim.trailing_zeros() as usize;
    let m = n - 1;
    let group = ghz_group(n);
    let ghz = ghz_vector(n);
    let mut out = Vec::with_capacity(dim);
    for b0 in [false, true] {
        for mask in 0..1u32 << m {
            let mut letters = vec![PAULI_I; n];
            if b0 {
                letters[0] = PAULI_Z;
            }
            for a in 0..m {
                if mask >> a & 1 == 1 {
                    letters[1 + a] = PAULI_X;
                }
            }
            let base = PauliString::from_letters(0, letters);
            let bm = base.as_matrix();
            let mut psi = vec![c(0.0, 0.0); dim];
            for (i, p) in psi.iter_mut().enumerate() {
                for (j, g) in ghz.iter().enumerate() {
                    *p += bm[(i, j)] * g;
                }
            }
            let mut prob = 0.0;
            for (i, a) in psi.iter().enumerate() {
                for (j, b) in psi.iter().enumerate() {
                    prob += (a.conj() * rho_q[(i, j)] * b).re;
                }
            }
            out.push(Syndrome {
                phase_flip: b0,
                pair_flips: (0..m).map(|a| mask >> a & 1 == 1).collect(),
                probability: prob.max(0.0),
                representative: minimum_weight_representative(&base, &group),
            });
        }
    }
    out
}

/// Rebuild the dephased block state from its syndrome distribution. Equals
/// the twirled state exactly when the distribution is consistent.
pub fn reconstruct_from_sectors(syndromes: &[Syndrome], n_qubits: usize) -> CMat {
    let dim = 1 << n_qubits;
    let ghz = ghz_vector(n_qubits);
    let mut out = CMat::zeros(dim, dim);
    for s in syndromes {
        let em = s.representative.as_matrix();
        let mut psi = vec![c(0.0, 0.0); dim];
        for (i, p) in psi.iter_mut().enumerate() {
            for (j, g) in ghz.iter().enumerate() {
                *p += em[(i, j)] * g;
            }
        }
        for i in 0..dim {
            for j in 0..dim {
                out[(i, j)] += psi[i] * psi[j].conj() * cr(s.probability);
            }
        }
    }
    out
}

/// Effective single-block error rates at one temperature.
///
/// `p1` is the marginal probability of a net phase flip on the block's own
/// cluster site, `p2` of exporting a phase flip to exactly one neighbor, `p3`
/// of exporting to two or more (higher-weight patterns folded in), and
/// `p_eff = p1 + p2 + 2 p3` is the per-site strength the error-correction
/// threshold is quoted against.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChannelRates {
    pub t_over_delta: f64,
    pub epsilon: f64,
    pub p1: f64,
    pub p2: f64,
    pub p3: f64,
    pub p_eff: f64,
}

/// Pre-marginalization bookkeeping behind one `ChannelRates`.
#[derive(Clone, Debug)]
pub struct ChannelDiagnostics {
    /// marginal export probability toward each neighbor
    pub export_marginals: Vec<f64>,
    /// joint distribution over (own flip, neighbor export mask)
    pub joint: Vec<((bool, u32), f64)>,
    pub syndromes: Vec<Syndrome>,
}

/// Map one sector representative to its channel action: a possible phase flip
/// on the block's own site and a set of neighbor exports.
///
/// Phase parts anywhere in the block flip the own site (facing-half bit flips
/// compose by parity); a bit-flip part on a half exports a phase flip to that
/// neighbor. A bit-flip part on the center is removed by multiplying with the
/// all-X stabilizer, which is absorbed as the consumed site's own stabilizer;
/// this is what folds such sectors into high-weight neighbor patterns.
fn channel_action(rep: &PauliString) -> (bool, u32) {
    let n = rep.len();
    let mut canon = rep.clone();
    if matches!(canon.letter(0), PAULI_X | PAULI_Y) {
        canon = canon.mul(&PauliString::from_letters(0, vec![PAULI_X; n]));
    }
    let mut own = false;
    let mut exports = 0u32;
    for q in 0..n {
        let l = canon.letter(q);
        if matches!(l, PAULI_Y | PAULI_Z) {
            own = !own;
        }
        if q > 0 && matches!(l, PAULI_X | PAULI_Y) {
            exports |= 1 << (q - 1);
        }
    }
    (own, exports)
}

/// Exact error rates of the thermal channel at one temperature, with the
/// joint flip/export distribution retained for diagnostics.
///
/// Asserts the sector probabilities sum to one, that the trivial sector
/// carries exactly 1 - epsilon, and that the per-neighbor export marginals
/// agree pairwise (the lattice directions are equivalent).
pub fn propagate_errors(
    block: &BlockHamiltonian,
    temperature: f64,
) -> (ChannelRates, ChannelDiagnostics) {
    let model = block.spec.model;
    let gibbs = gibbs_block(block, temperature);
    let outcome = &model.povm()[z_outcome_index(model)];
    let (rho_q, _) = filtered_qubit_state(&gibbs, outcome);
    let epsilon = 1.0 - ghz_fidelity(&rho_q);
    let syndromes = syndrome_distribution(&rho_q);
    let m = model.num_bonds();

    let total: f64 = syndromes.iter().map(|s| s.probability).sum();
    assert!(
        (total - 1.0).abs() < 1e-10,
        "sector probabilities must sum to 1, got {total}"
    );
    let trivial = syndromes
        .iter()
        .find(|s| !s.phase_flip && s.pair_flips.iter().all(|&b| !b))
        .expect("trivial sector is always enumerated")
        .probability;
    assert!(
        (trivial + epsilon - 1.0).abs() < 1e-10,
        "trivial sector weight must equal the block fidelity"
    );

    let mut joint: HashMap<(bool, u32), f64> = HashMap::new();
    for s in &syndromes {
        if s.probability == 0.0 {
            continue;
        }
        let key = channel_action(&s.representative);
        *joint.entry(key).or_insert(0.0) += s.probability;
    }
    let mut joint: Vec<((bool, u32), f64)> = joint.into_iter().collect();
    joint.sort_by_key(|&((own, mask), _)| (own, mask));

    let mut p1 = 0.0;
    let mut p2 = 0.0;
    let mut p3 = 0.0;
    let mut export_marginals = vec![0.0; m];
    for &((own, mask), p) in &joint {
        if own {
            p1 += p;
        }
        match mask.count_ones() {
            0 => {}
            1 => p2 += p,
            _ => p3 += p,
        }
        for (a, marg) in export_marginals.iter_mut().enumerate() {
            if mask >> a & 1 == 1 {
                *marg += p;
            }
        }
    }
    for a in 1..m {
        assert!(
            (export_marginals[a] - export_marginals[0]).abs() < 1e-10,
            "export marginals must agree across neighbors: {export_marginals:?}"
        );
    }
    // below the eigensolver noise floor the computed rates are
    // indistinguishable from zero; report them as such so that grid
    // endpoints at T = 0 come out exact
    let snap = |v: f64| if v.abs() < 1e-14 { 0.0 } else { v };
    let (epsilon, p1, p2, p3) = (snap(epsilon), snap(p1), snap(p2), snap(p3));
    let rates = ChannelRates {
        t_over_delta: temperature / block.spec.delta,
        epsilon,
        p1,
        p2,
        p3,
        p_eff: p1 + p2 + 2.0 * p3,
    };
    (rates, ChannelDiagnostics { export_marginals, joint, syndromes })
}

/// Convenience wrapper building the block in place.
pub fn channel_rates(model: Model, delta: f64, temperature: f64) -> ChannelRates {
    let block = build_block(BlockSpec::new(model, delta));
    propagate_errors(&block, temperature).0
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ThermalError {
    #[error("target error rate must lie strictly between 0 and 1, got {0}")]
    InvalidTarget(f64),
    #[error("target rate {target} is not reached below T = {t_max} (rate there {max_rate})")]
    UnreachableTarget { target: f64, t_max: f64, max_rate: f64 },
}

/// Temperature at which the effective error rate reaches `p_target`, by
/// bracketing and bisection to a relative width of 1e-4. The rate is checked
/// to be nondecreasing across the bracket before bisecting.
///
/// The search is confined to T <= 0.5 delta: the channel's independent-block
/// accounting (single exports dominant, higher patterns folded) is a low-
/// temperature description, so targets the rate only reaches beyond that
/// range are reported as unreachable rather than extrapolated.
pub fn threshold_temperature(
    model: Model,
    delta: f64,
    p_target: f64,
) -> Result<f64, ThermalError> {
    if !(p_target > 0.0 && p_target < 1.0) || !p_target.is_finite() {
        return Err(ThermalError::InvalidTarget(p_target));
    }
    let block = build_block(BlockSpec::new(model, delta));
    let rate = |t: f64| propagate_errors(&block, t).0.p_eff;

    let mut lo = 0.01 * delta;
    while rate(lo) >= p_target {
        lo *= 0.5;
        if lo < 1e-9 * delta {
            // the rate vanishes faster than any power at T -> 0, so a target
            // this small is indistinguishable from zero
            return Err(ThermalError::InvalidTarget(p_target));
        }
    }
    let t_max = 0.5 * delta;
    let mut hi = lo;
    loop {
        hi = (hi * 1.5).min(t_max);
        if rate(hi) >= p_target {
            break;
        }
        if hi >= t_max {
            return Err(ThermalError::UnreachableTarget {
                target: p_target,
                t_max,
                max_rate: rate(t_max),
            });
        }
    }

    let mut prev = rate(lo);
    for k in 1..=8 {
        let t = lo + (hi - lo) * k as f64 / 8.0;
        let r = rate(t);
        assert!(
            r >= prev - 1e-12,
            "effective rate must be nondecreasing across the bracket"
        );
        prev = r;
    }

    while (hi - lo) > 1e-4 * 0.5 * (hi + lo) {
        let mid = 0.5 * (lo + hi);
        if rate(mid) < p_target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Channel rates over a temperature grid, evaluated concurrently and returned
/// in grid order. For a nondecreasing grid the infidelity and effective rate
/// are checked to be nondecreasing as well.
pub fn temperature_sweep(model: Model, delta: f64, temperatures: &[f64]) -> Vec<ChannelRates> {
    let block = build_block(BlockSpec::new(model, delta));
    let rates: Vec<ChannelRates> = temperatures
        .par_iter()
        .map(|&t| propagate_errors(&block, t).0)
        .collect();
    let grid_sorted = temperatures.windows(2).all(|w| w[0] <= w[1]);
    if grid_sorted {
        for w in rates.windows(2) {
            assert!(
                w[1].epsilon >= w[0].epsilon - 1e-12 && w[1].p_eff >= w[0].p_eff - 1e-12,
                "infidelity and effective rate must be nondecreasing in temperature"
            );
        }
    }
    rates
}

/// Expected cluster fidelity of the full pipeline on thermal blocks, from the
/// product of per-block syndrome distributions: a syndrome combination keeps
/// the cluster state exactly when its propagated Pauli lies in the cluster
/// stabilizer group. Returns the retained fidelity and the probability mass
/// discarded by the product cutoff (the truth lies within that margin).
pub fn expected_cluster_fidelity(
    adj: &LatticeAdjacency,
    delta: f64,
    temperature: f64,
) -> (f64, f64) {
    let block = build_block(BlockSpec::new(adj.model, delta));
    let gibbs = gibbs_block(&block, temperature);
    let outcome = &adj.model.povm()[z_outcome_index(adj.model)];
    let (rho_q, _) = filtered_qubit_state(&gibbs, outcome);
    let mut syndromes = syndrome_distribution(&rho_q);
    syndromes.sort_by(|a, b| b.probability.total_cmp(&a.probability));

    let n = adj.n_centers;
    // per-center table of (x mask, z mask, probability) on the cluster sites
    let mut tables: Vec<Vec<(u32, u32, f64)>> = Vec::with_capacity(n);
    for r in 0..n {
        let deg = adj.degree(r);
        let interior = adj.bonds_of(r);
        let mut rows = Vec::with_capacity(syndromes.len());
        for s in &syndromes {
            if s.probability < 1e-15 {
                continue;
            }
            let mut x = 0u32;
            let mut z = 0u32;
            for q in 0..s.representative.len() {
                let letter = s.representative.letter(q);
                if letter == PAULI_I {
                    continue;
                }
                let site = if q == 0 {
                    InjectionSite::Center(r)
                } else if q - 1 < deg {
                    let (bond, side) = interior[q - 1];
                    InjectionSite::BondHalf(bond, side)
                } else {
                    InjectionSite::Dangling(r, q - 1 - deg)
                };
                let (xm, zm) = propagated_cluster_error(adj, site, letter);
                for (site_bit, (&xb, &zb)) in xm.iter().zip(zm.iter()).enumerate() {
                    if xb {
                        x ^= 1 << site_bit;
                    }
                    if zb {
                        z ^= 1 << site_bit;
                    }
                }
            }
            rows.push((x, z, s.probability));
        }
        tables.push(rows);
    }

    let stabilizers = crate::fusion_pipeline::cluster_stabilizers(adj);
    let mut member_cache: HashMap<u64, bool> = HashMap::new();
    let mut is_trivial = |x: u32, z: u32, stab: &StabilizerSet| -> bool {
        *member_cache.entry((x as u64) << 32 | z as u64).or_insert_with(|| {
            let letters: Vec<u8> = (0..n)
                .map(|r| match (x >> r & 1 == 1, z >> r & 1 == 1) {
                    (false, false) => PAULI_I,
                    (true, false) => PAULI_X,
                    (false, true) => PAULI_Z,
                    (true, true) => PAULI_Y,
                })
                .collect();
            stab.contains_mod_phase(&PauliString::from_letters(0, letters))
        })
    };

    let cutoff = 1e-12;
    let mut fidelity = 0.0;
    let mut lost = 0.0;
    // depth-first product over centers, pruning branches below the cutoff
    let mut stack: Vec<(usize, u32, u32, f64)> = vec![(0, 0, 0, 1.0)];
    while let Some((idx, x, z, p)) = stack.pop() {
        if p < cutoff {
            lost += p;
            continue;
        }
        if idx == n {
            if is_trivial(x, z, &stabilizers) {
                fidelity += p;
            }
            continue;
        }
        for &(xr, zr, pr) in &tables[idx] {
            stack.push((idx + 1, x ^ xr, z ^ zr, p * pr));
        }
    }
    (fidelity, lost)
}
