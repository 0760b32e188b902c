//! Revival structure of the always-on block evolution, and the operation
//! schedule that fuses a patch without ever switching the couplings off.
//!
//! Each block Hamiltonian has an equally spaced spectrum, so its propagator
//! returns to a global phase at fixed revival times: every 4 pi / delta for
//! the spin-3/2 blocks (eigenvalues are odd multiples of delta/4) and every
//! 2 pi / delta for the spin-2 blocks (integer multiples of delta). All
//! filter, correction, and measurement operations are scheduled exactly at
//! those instants; untouched blocks stay in their thermal state because the
//! Gibbs weight commutes with the propagator. At most one operation may touch
//! a given particle per revival instant, so a greedy scheduler assigns each
//! operation the earliest slot where all its particles are free; the module
//! then replays a schedule against full statevector dynamics and confirms
//! that exact timing reproduces the instantaneous pipeline while deliberate
//! mistiming degrades it.

use crate::fusion_pipeline::{
    bond_joint_basis, cluster_state_vector, frame_from_outcomes, pauli2, x_basis,
    BondMeasurementRecord, FusionError, Register, SiteMap, PAULI_X,
};
use crate::linalg::{evolution_operator, kron, CMat};
use crate::model_blocks::{build_block, BlockSpec, LatticeAdjacency, Model};
use crate::spin_algebra::{center_qubit_isometry, correction_rotation, rotation_axis_angle};
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::{rand_core::SeedableRng, ChaCha12Rng};
use std::collections::{HashMap, HashSet};

/// Propagator periodicity report for one block.
#[derive(Clone, Copy, Debug)]
pub struct EvolutionCheck {
    pub model: Model,
    /// revival period in units of 1/delta
    pub period: f64,
    /// max |U(period) - e^{i phi} 1| with phi gauged from the first diagonal
    pub residual: f64,
    /// same residual at half the period (not a revival for either block)
    pub control_residual: f64,
}

fn phase_gauged_residual(u: &CMat) -> f64 {
    let phi = u[(0, 0)].arg();
    let gauge = Complex64::from_polar(1.0, phi);
    let mut worst = 0.0f64;
    for i in 0..u.nrows() {
        for j in 0..u.ncols() {
            let target = if i == j { gauge } else { Complex64::new(0.0, 0.0) };
            worst = worst.max((u[(i, j)] - target).norm());
        }
    }
    worst
}

pub fn revival_check(spec: BlockSpec) -> EvolutionCheck {
    let block = build_block(spec);
    let period = spec.model.revival_period(spec.delta);
    let residual = phase_gauged_residual(&evolution_operator(&block.matrix, period));
    let control_residual =
        phase_gauged_residual(&evolution_operator(&block.matrix, 0.5 * period));
    EvolutionCheck { model: spec.model, period, residual, control_residual }
}

/// Anything an operation can occupy for one revival slot: a center particle,
/// a bond particle (both halves move together), or a dangling half.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum Particle {
    Center(usize),
    Bond(usize),
    Dangling(usize, usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OpKind {
    /// filter the center and rotate it and all its halves
    Filter { center: usize },
    /// joint two-observable measurement of an interior bond particle
    MeasureBond { bond: usize },
    /// X measurement of a boundary half
    MeasureDangling { center: usize, slot: usize },
}

#[derive(Clone, Copy, Debug)]
pub struct ScheduledOp {
    pub kind: OpKind,
    /// revival index n; the operation runs at t = n * period
    pub revival: usize,
    /// the consumption step that emitted this operation
    pub consumed_for: usize,
}

#[derive(Clone, Debug)]
pub struct Schedule {
    pub model: Model,
    pub ops: Vec<ScheduledOp>,
    /// largest revival index used
    pub horizon: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScheduleError {
    #[error("consumption order must cover every center exactly once")]
    IncompleteOrder,
    #[error("greedy schedule needs revival {horizon}, beyond the n < 6 budget")]
    HorizonExceeded { horizon: usize },
}

/// Greedy earliest-slot scheduler under the one-operation-per-particle-
/// per-revival constraint.
///
/// Walks the consumption order; for each center it filters the center and
/// its not-yet-filtered neighbors, measures every interior bond whose two
/// ends are filtered, and measures the center's dangling halves. A filter
/// occupies the center and all adjacent bond and dangling particles (the
/// correction rotation acts on every half); measurements occupy their own
/// particle and must come strictly after the filters they depend on.
pub fn build_schedule(
    adj: &LatticeAdjacency,
    order: &[usize],
) -> Result<Schedule, ScheduleError> {
    let n = adj.n_centers;
    {
        let mut seen = vec![false; n];
        for &r in order {
            if r >= n || seen[r] {
                return Err(ScheduleError::IncompleteOrder);
            }
            seen[r] = true;
        }
        if !seen.iter().all(|&s| s) {
            return Err(ScheduleError::IncompleteOrder);
        }
    }

    let mut busy: HashMap<Particle, HashSet<usize>> = HashMap::new();
    let mut filtered_at: HashMap<usize, usize> = HashMap::new();
    let mut bond_done: HashSet<usize> = HashSet::new();
    let mut ops = Vec::new();

    let mut earliest_free = |particles: &[Particle], min: usize| -> usize {
        let mut t = min;
        'search: loop {
            for p in particles {
                if busy.get(p).is_some_and(|s| s.contains(&t)) {
                    t += 1;
                    continue 'search;
                }
            }
            for p in particles {
                busy.entry(*p).or_default().insert(t);
            }
            return t;
        }
    };

    let filter = |r: usize,
                      consumed_for: usize,
                      earliest_free: &mut dyn FnMut(&[Particle], usize) -> usize,
                      filtered_at: &mut HashMap<usize, usize>,
                      ops: &mut Vec<ScheduledOp>| {
        if filtered_at.contains_key(&r) {
            return;
        }
        let deg = adj.degree(r);
        let mut particles = vec![Particle::Center(r)];
        for (bond, _) in adj.bonds_of(r) {
            particles.push(Particle::Bond(bond));
        }
        for slot in 0..adj.model.num_bonds() - deg {
            particles.push(Particle::Dangling(r, slot));
        }
        let t = earliest_free(&particles, 0);
        filtered_at.insert(r, t);
        ops.push(ScheduledOp { kind: OpKind::Filter { center: r }, revival: t, consumed_for });
    };

    for &r in order {
        let mut ef = |p: &[Particle], m: usize| earliest_free(p, m);
        filter(r, r, &mut ef, &mut filtered_at, &mut ops);
        for r2 in adj.neighbors(r) {
            filter(r2, r, &mut ef, &mut filtered_at, &mut ops);
        }
        for (bond, _) in adj.bonds_of(r) {
            if bond_done.contains(&bond) {
                continue;
            }
            let rec = adj.bonds[bond];
            let (fa, fb) = (filtered_at[&rec.a_center], filtered_at[&rec.b_center]);
            let t = ef(&[Particle::Bond(bond)], fa.max(fb) + 1);
            bond_done.insert(bond);
            ops.push(ScheduledOp { kind: OpKind::MeasureBond { bond }, revival: t, consumed_for: r });
        }
        let deg = adj.degree(r);
        for slot in 0..adj.model.num_bonds() - deg {
            let t = ef(&[Particle::Dangling(r, slot)], filtered_at[&r] + 1);
            ops.push(ScheduledOp {
                kind: OpKind::MeasureDangling { center: r, slot },
                revival: t,
                consumed_for: r,
            });
        }
    }

    let horizon = ops.iter().map(|o| o.revival).max().unwrap_or(0);
    if horizon >= 6 {
        return Err(ScheduleError::HorizonExceeded { horizon });
    }
    Ok(Schedule { model: adj.model, ops, horizon })
}

/// When the scheduled operations actually happen relative to the revival
/// clock the consumer reads the qubits on.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TimingMode {
    /// exactly at t = n * period
    Revivals,
    /// all at t = 0, no evolution anywhere (the instantaneous pipeline)
    Instantaneous,
    /// at t = (n + f) * period: every operation late by the same fraction
    OffsetFraction(f64),
}

#[derive(Clone, Debug)]
pub struct DynamicsOptions {
    pub delta: f64,
    pub timing: TimingMode,
    pub seed: u64,
    /// filter outcome per center; None samples
    pub povm_choices: Option<Vec<usize>>,
    /// physical (s1, s2) per interior bond; None samples
    pub bond_choices: Option<Vec<(i8, i8)>>,
    /// X outcome per dangling half, indexed [center][slot]; None samples
    pub dangling_choices: Option<Vec<Vec<i8>>>,
}

impl DynamicsOptions {
    pub fn new(delta: f64) -> Self {
        DynamicsOptions {
            delta,
            timing: TimingMode::Revivals,
            seed: 0,
            povm_choices: None,
            bond_choices: None,
            dangling_choices: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct DynamicsReport {
    /// overlap with the frame-corrected cluster state at the final revival
    pub fidelity: f64,
    /// product of Born weights along the sampled branch
    pub probability: f64,
    pub horizon: usize,
    /// time the final state is read out, in the same units as 1/delta
    pub read_time: f64,
}

fn sample_outcome(rng: &mut ChaCha12Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut x = rng.gen::<f64>() * total;
    for (k, w) in weights.iter().enumerate() {
        x -= w;
        if x <= 0.0 {
            return k;
        }
    }
    weights.len() - 1
}

/// physical-basis projection vector for bond outcome (s1, s2): the joint
/// eigenvector of 4 A^x B^z and 4 A^z B^x, obtained from the qubit-basis
/// eigenvector for (-s1, -s2) by undoing the half-spin relabeling swap
fn physical_bond_vector(s1: i8, s2: i8) -> Vec<Complex64> {
    let swap2 = kron(&pauli2(PAULI_X), &pauli2(PAULI_X));
    let (_, v) = bond_joint_basis()
        .into_iter()
        .find(|&((t1, t2), _)| t1 == -s1 && t2 == -s2)
        .expect("all four sign pairs are enumerated");
    let mut out = vec![Complex64::new(0.0, 0.0); 4];
    for (i, slot) in out.iter_mut().enumerate() {
        for (j, a) in v.iter().enumerate() {
            *slot += swap2[(i, j)] * a;
        }
    }
    out
}

/// Replay a schedule against exact statevector dynamics.
///
/// Every block keeps evolving under its own Hamiltonian for the whole run;
/// operations are applied at the instants the timing mode dictates, and the
/// final state is read at the first revival after the last operation. The
/// report compares the read-out against the frame-corrected cluster state
/// (centers restricted to their qubit doublets, measured halves in their
/// recorded outcome states).
pub fn evolve_and_verify(
    adj: &LatticeAdjacency,
    schedule: &Schedule,
    opts: &DynamicsOptions,
) -> Result<DynamicsReport, FusionError> {
    assert_eq!(adj.model, schedule.model, "schedule built for a different model");
    let spec = BlockSpec::new(adj.model, opts.delta);
    let block = build_block(spec);
    let map = SiteMap::build(adj);
    let n = adj.n_centers;
    let mut rng = ChaCha12Rng::seed_from_u64(opts.seed);

    let block_sites: Vec<Vec<usize>> = (0..n)
        .map(|r| {
            let mut sites = vec![map.center(r)];
            sites.extend(map.halves_of(adj, r));
            sites
        })
        .collect();
    let parts: Vec<(Vec<usize>, Vec<usize>, Vec<Complex64>)> = (0..n)
        .map(|r| {
            let mut dims = vec![spec.model.center_dim()];
            dims.extend(vec![2usize; spec.model.num_bonds()]);
            (block_sites[r].clone(), dims, block.ground_state.iter().copied().collect())
        })
        .collect();
    let mut reg = Register::from_factors(map.total, parts);

    let period = spec.model.revival_period(opts.delta);
    let offset = match opts.timing {
        TimingMode::Revivals | TimingMode::Instantaneous => 0.0,
        TimingMode::OffsetFraction(f) => f,
    };
    let op_time = |revival: usize| (revival as f64 + offset) * period;
    let read_time = (schedule.horizon + 1) as f64 * period;

    let mut ordered: Vec<&ScheduledOp> = schedule.ops.iter().collect();
    ordered.sort_by_key(|o| o.revival);

    let povm = spec.model.povm();
    let mut propagators: Vec<(f64, CMat)> = Vec::new();
    let mut now = 0.0;
    let mut probability = 1.0;
    let mut records: Vec<Option<BondMeasurementRecord>> = vec![None; adj.bonds.len()];
    let mut dangling_outcomes: Vec<Vec<i8>> = (0..n)
        .map(|r| vec![0; spec.model.num_bonds() - adj.degree(r)])
        .collect();

    let mut advance = |reg: &mut Register, from: &mut f64, to: f64| -> Result<(), FusionError> {
        if opts.timing == TimingMode::Instantaneous {
            return Ok(());
        }
        let dt = to - *from;
        if dt.abs() < 1e-15 {
            return Ok(());
        }
        assert!(dt > 0.0, "operations must be replayed in time order");
        let u = match propagators.iter().find(|(d, _)| (d - dt).abs() < 1e-12) {
            Some((_, u)) => u.clone(),
            None => {
                let u = evolution_operator(&block.matrix, dt);
                propagators.push((dt, u.clone()));
                u
            }
        };
        for sites in &block_sites {
            reg.apply(&u, sites)?;
        }
        *from = to;
        Ok(())
    };

    for op in ordered {
        advance(&mut reg, &mut now, op_time(op.revival))?;
        match op.kind {
            OpKind::Filter { center } => {
                let site = map.center(center);
                let weights: Vec<f64> = povm
                    .iter()
                    .map(|e| reg.operator_weight(&e.op, site))
                    .collect::<Result<_, _>>()?;
                let k = match &opts.povm_choices {
                    Some(choice) => choice[center],
                    None => sample_outcome(&mut rng, &weights),
                };
                if weights[k] < 1e-12 {
                    return Err(FusionError::ImpossibleOutcome { weight: weights[k] });
                }
                reg.apply(&povm[k].op, &[site])?;
                probability *= reg.normalize_factor(site)?;
                let direction = povm[k].direction;
                let axis = rotation_axis_angle(direction);
                if axis.iter().map(|v| v * v).sum::<f64>().sqrt() > 1e-12 {
                    reg.apply(&correction_rotation(&spec.model.center_rep(), direction), &[site])?;
                    let half_rot = correction_rotation(
                        &crate::spin_algebra::SpinRep::new(1),
                        direction,
                    );
                    for &h in &block_sites[center][1..] {
                        reg.apply(&half_rot, &[h])?;
                    }
                }
            }
            OpKind::MeasureBond { bond } => {
                let rec = adj.bonds[bond];
                let sites = [
                    map.bond_half(bond, rec.side_of(rec.a_center)),
                    map.bond_half(bond, rec.side_of(rec.b_center)),
                ];
                let outcomes: [(i8, i8); 4] = [(1, 1), (1, -1), (-1, 1), (-1, -1)];
                let vectors: Vec<Vec<Complex64>> =
                    outcomes.iter().map(|&(s1, s2)| physical_bond_vector(s1, s2)).collect();
                let weights = reg.measure_candidates(&sites, &vectors)?;
                let k = match &opts.bond_choices {
                    Some(choice) => outcomes
                        .iter()
                        .position(|&o| o == choice[bond])
                        .expect("forced bond outcome must be one of the four sign pairs"),
                    None => sample_outcome(&mut rng, &weights),
                };
                let (s1, s2) = outcomes[k];
                probability *= reg.project_onto(&sites, &vectors[k])?;
                records[bond] = Some(BondMeasurementRecord { bond, s1, s2 });
            }
            OpKind::MeasureDangling { center, slot } => {
                let site = map.dangling(center, slot);
                let candidates = x_basis();
                let vectors: Vec<Vec<Complex64>> =
                    candidates.iter().map(|(_, v)| v.clone()).collect();
                let weights = reg.measure_candidates(&[site], &vectors)?;
                let k = match &opts.dangling_choices {
                    Some(choice) => candidates
                        .iter()
                        .position(|&(t, _)| t == choice[center][slot])
                        .expect("forced X outcome must be +1 or -1"),
                    None => sample_outcome(&mut rng, &weights),
                };
                probability *= reg.project_onto(&[site], &vectors[k])?;
                dangling_outcomes[center][slot] = candidates[k].0;
            }
        }
    }
    advance(&mut reg, &mut now, read_time)?;

    // read-out reference: frame-corrected cluster state on the center
    // doublets, with every measured half sitting in its recorded state
    let records: Vec<BondMeasurementRecord> = records
        .into_iter()
        .collect::<Option<Vec<_>>>()
        .expect("schedule must measure every interior bond");
    let frame = frame_from_outcomes(adj, &records, &dangling_outcomes);
    let mut cluster = cluster_state_vector(adj);
    frame.apply_to(&mut cluster);

    let isometry = center_qubit_isometry(&spec.model.center_rep());
    let cdim = spec.model.center_dim();
    let mut lifted = vec![Complex64::new(0.0, 0.0); cdim.pow(n as u32)];
    for (q, amp) in cluster.iter().enumerate() {
        if amp.norm_sqr() == 0.0 {
            continue;
        }
        // center r holds bit (n-1-r) of q; site order is c0 slowest
        let mut contributions = vec![(0usize, *amp)];
        for r in 0..n {
            let bit = (q >> (n - 1 - r)) & 1;
            let mut next = Vec::with_capacity(contributions.len() * cdim);
            for (idx, a) in contributions {
                for m in 0..cdim {
                    let w = isometry[(m, bit)];
                    if w.norm_sqr() > 0.0 {
                        next.push((idx * cdim + m, a * w));
                    }
                }
            }
            contributions = next;
        }
        for (idx, a) in contributions {
            lifted[idx] += a;
        }
    }

    let mut ideal_parts: Vec<(Vec<usize>, Vec<usize>, Vec<Complex64>)> =
        vec![((0..n).map(|r| map.center(r)).collect(), vec![cdim; n], lifted)];
    for (bond, rec) in records.iter().enumerate() {
        let sites = vec![
            map.bond_half(bond, adj.bonds[bond].side_of(adj.bonds[bond].a_center)),
            map.bond_half(bond, adj.bonds[bond].side_of(adj.bonds[bond].b_center)),
        ];
        ideal_parts.push((sites, vec![2, 2], physical_bond_vector(rec.s1, rec.s2)));
    }
    for (r, outcomes) in dangling_outcomes.iter().enumerate() {
        for (slot, &t) in outcomes.iter().enumerate() {
            let v = x_basis()
                .into_iter()
                .find(|&(label, _)| label == t)
                .expect("X outcomes are +1 or -1")
                .1;
            ideal_parts.push((vec![map.dangling(r, slot)], vec![2], v));
        }
    }
    let mut ideal = Register::from_factors(map.total, ideal_parts);

    let order: Vec<usize> = (0..map.total).collect();
    let actual = reg.full_state(&order)?;
    let target = ideal.full_state(&order)?;
    let overlap: Complex64 = actual
        .iter()
        .zip(target.iter())
        .map(|(a, b)| b.conj() * a)
        .sum();

    Ok(DynamicsReport {
        fidelity: overlap.norm_sqr(),
        probability,
        horizon: schedule.horizon,
        read_time,
    })
}
