//! Acceptance suite: one test per release criterion, each printing a single
//! `[acceptance] <name>: PASS/FAIL` line with the measured numbers (run with
//! `--nocapture` to see the lines for passing tests too).
//!
//! The final test freezes the computed error-rate curve as a regression
//! fixture: the anchor values were produced by this code once validated, and
//! drifting away from them later means the channel changed, not the physics.

use thermal_mbqc::dynamics_scheduler::{
    build_schedule, evolve_and_verify, revival_check, DynamicsOptions, OpKind, TimingMode,
};
use thermal_mbqc::fusion_pipeline::{
    apply_pauli_masks, cluster_state_vector, exhaustive_t0, propagated_cluster_error,
    stabilizer_product_check, InjectionSite, PAULI_X, PAULI_Y, PAULI_Z,
};
use thermal_mbqc::linalg::{dagger, identity, max_abs};
use thermal_mbqc::model_blocks::{
    build_block, exact_spectrum_oracle, BlockSpec, HalfSide, LatticeAdjacency, Model,
};
use thermal_mbqc::thermal_channel::{
    channel_rates, filtered_qubit_state, ghz_fidelity, gibbs_block, reconstruct_from_sectors,
    syndrome_distribution, temperature_sweep, threshold_temperature, twirl_over_sectors,
};

const MODELS: [Model; 2] = [Model::TwoD, Model::ThreeD];

fn report(name: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    println!("[acceptance] {name}: {verdict} ({detail})");
}

/// Exact level tables against the diagonalized blocks: every eigenvalue sits
/// on a listed level within 1e-10, multiplicities match exactly, and the gap
/// equals the coupling for both models.
#[test]
fn criterion_01_block_spectra() {
    let expected_2d: Vec<(f64, u64)> = vec![
        (-3.75, 1),
        (-2.75, 3),
        (-1.25, 6),
        (-0.75, 5),
        (0.75, 10),
        (2.25, 7),
    ];
    let mut detail = String::new();
    let mut pass = true;

    for (model, delta) in [(Model::TwoD, 1.0), (Model::TwoD, 1.7), (Model::ThreeD, 1.0)] {
        let spec = BlockSpec::new(model, delta);
        let oracle = exact_spectrum_oracle(spec);
        let block = build_block(spec);

        // group numerical eigenvalues into the oracle levels
        let mut counts = vec![0u64; oracle.len()];
        for &e in &block.eigenvalues {
            let idx = oracle
                .iter()
                .position(|&(level, _)| (e - level).abs() < 1e-10)
                .unwrap_or_else(|| panic!("eigenvalue {e} not on any exact level"));
            counts[idx] += 1;
        }
        let mults: Vec<u64> = oracle.iter().map(|&(_, g)| g).collect();
        pass &= counts == mults;

        let dim: u64 = mults.iter().sum();
        pass &= dim == spec.dim() as u64;
        let gap = oracle[1].0 - oracle[0].0;
        pass &= (gap - delta).abs() < 1e-10;

        match model {
            Model::TwoD => {
                let scaled: Vec<(f64, u64)> =
                    expected_2d.iter().map(|&(e, g)| (e * delta, g)).collect();
                for (a, b) in oracle.iter().zip(&scaled) {
                    pass &= (a.0 - b.0).abs() < 1e-10 && a.1 == b.1;
                }
                pass &= oracle.len() == scaled.len();
            }
            Model::ThreeD => {
                pass &= (oracle[0].0 + 6.0 * delta).abs() < 1e-10 && oracle[0].1 == 1;
                pass &= (oracle[1].0 + 5.0 * delta).abs() < 1e-10 && oracle[1].1 == 3;
                pass &= dim == 80;
            }
        }
        detail.push_str(&format!(
            "{} delta={delta}: {} levels, dim {dim}, gap {gap:.3}; ",
            model.name(),
            oracle.len()
        ));
    }
    report("block spectra", pass, detail.trim_end_matches("; "));
    assert!(pass);
}

/// The filter elements resolve the identity on the center space within 1e-12,
/// including the seven-direction set with its two distinct weights.
#[test]
fn criterion_02_filter_completeness() {
    let mut pass = true;
    let mut detail = String::new();
    for model in MODELS {
        let povm = model.povm();
        let dim = model.center_dim();
        let mut sum = thermal_mbqc::linalg::zeros(dim, dim);
        for el in &povm {
            sum += dagger(&el.op) * &el.op;
        }
        let resid = max_abs(&(&sum - identity(dim)));
        pass &= resid < 1e-12;
        detail.push_str(&format!(
            "{}: {} outcomes, |sum F'F - 1| = {resid:.2e}; ",
            model.name(),
            povm.len()
        ));
        if model == Model::ThreeD {
            let weights: Vec<f64> = povm.iter().map(|el| el.weight).collect();
            pass &= weights.len() == 7;
            pass &= weights[..3].iter().all(|w| (w - 1.0 / 3.0).abs() < 1e-12);
            pass &= weights[3..].iter().all(|w| (w - 3.0 / 8.0).abs() < 1e-12);
        }
    }
    report("filter completeness", pass, detail.trim_end_matches("; "));
    assert!(pass);
}

/// At zero temperature every filter outcome leaves the block in the rotated
/// multi-qubit GHZ state: fidelity 1 within 1e-10 for all outcomes, both
/// models.
#[test]
fn criterion_03_ghz_at_zero_temperature() {
    let mut pass = true;
    let mut detail = String::new();
    for model in MODELS {
        let block = build_block(BlockSpec::new(model, 1.0));
        let gibbs = gibbs_block(&block, 0.0);
        let mut worst = 1.0f64;
        for outcome in &model.povm() {
            let (rho_q, weight) = filtered_qubit_state(&gibbs, outcome);
            assert!(weight > 0.0, "every outcome occurs at T = 0");
            worst = worst.min(ghz_fidelity(&rho_q));
        }
        pass &= worst >= 1.0 - 1e-10;
        detail.push_str(&format!("{}: min fidelity {worst:.12}; ", model.name()));
    }
    report("ghz production at T=0", pass, detail.trim_end_matches("; "));
    assert!(pass);
}

/// Anchor numbers of the effective channel: the quoted operating point
/// p_eff(0.2) ~ 0.03 within 10%, the threshold temperature for a 3% budget at
/// 0.2 within 10%, and the rate decomposition windows at that threshold.
#[test]
fn criterion_04_threshold_reproduction() {
    let r = channel_rates(Model::ThreeD, 1.0, 0.2);
    let c_rate = (r.p_eff - 0.03).abs() <= 0.1 * 0.03;

    let t_t = threshold_temperature(Model::ThreeD, 1.0, 0.03)
        .expect("a 3% target is reachable");
    let c_thresh = (t_t - 0.2).abs() <= 0.1 * 0.2;

    let rt = channel_rates(Model::ThreeD, 1.0, t_t);
    let c_p1 = (3e-3..=3e-2).contains(&rt.p1);
    let c_p2 = (3e-3..=3e-2).contains(&rt.p2);
    let c_p3 = (1e-7..=1e-5).contains(&rt.p3);

    let mark = |ok: bool| if ok { "ok" } else { "out" };
    let detail = format!(
        "p_eff(0.2) = {:.6} vs 0.03+-10% [{}]; T_t(0.03) = {t_t:.6} vs 0.2+-10% [{}]; \
         at T_t: p1 = {:.4e} [{}], p2 = {:.4e} [{}], p3 = {:.4e} [{}]",
        r.p_eff,
        mark(c_rate),
        mark(c_thresh),
        rt.p1,
        mark(c_p1),
        rt.p2,
        mark(c_p2),
        rt.p3,
        mark(c_p3),
    );
    let pass = c_rate && c_thresh && c_p1 && c_p2 && c_p3;
    report("threshold reproduction", pass, &detail);
    assert!(pass, "{detail}");
}

/// The two lattices share one error curve: block infidelities agree within
/// 10% relative at every grid point between 0.05 and 0.5.
#[test]
fn criterion_05_error_rates_agree_across_models() {
    let grid: Vec<f64> = (0..=45).map(|k| 0.05 + 0.01 * k as f64).collect();
    let two = temperature_sweep(Model::TwoD, 1.0, &grid);
    let three = temperature_sweep(Model::ThreeD, 1.0, &grid);
    let mut worst = 0.0f64;
    let mut worst_t = grid[0];
    for ((a, b), &t) in two.iter().zip(&three).zip(&grid) {
        let rel = (a.epsilon - b.epsilon).abs() / b.epsilon;
        if rel > worst {
            worst = rel;
            worst_t = t;
        }
    }
    let pass = worst <= 0.10;
    report(
        "cross-model rate agreement",
        pass,
        &format!("max |eps_2d - eps_3d|/eps_3d = {worst:.4} at T = {worst_t:.2} (budget 0.10)"),
    );
    assert!(pass);
}

/// The twirled filtered state is exactly rebuilt from the extracted syndrome
/// distribution: channel extraction loses nothing but coherences between
/// syndrome sectors. Checked for every filter outcome at three temperatures.
#[test]
fn criterion_06_twirled_channel_reconstruction() {
    let block = build_block(BlockSpec::new(Model::TwoD, 1.0));
    let n_qubits = 1 + Model::TwoD.num_bonds();
    let mut pass = true;
    let mut detail = String::new();
    for t in [0.1, 0.2, 0.4] {
        let gibbs = gibbs_block(&block, t);
        let mut worst = 0.0f64;
        for outcome in &Model::TwoD.povm() {
            let (rho_q, _) = filtered_qubit_state(&gibbs, outcome);
            let twirled = twirl_over_sectors(&rho_q);
            let syndromes = syndrome_distribution(&rho_q);
            let rebuilt = reconstruct_from_sectors(&syndromes, n_qubits);
            worst = worst.max(max_abs(&(&twirled - &rebuilt)));
        }
        pass &= worst < 1e-10;
        detail.push_str(&format!("T={t}: max |twirl - rebuilt| = {worst:.2e}; "));
    }
    report("channel reconstruction", pass, detail.trim_end_matches("; "));
    assert!(pass);
}

/// Zero-temperature reduction lands exactly on the cluster state on every
/// outcome branch: the two-center chain exhaustively over all filter outcome
/// tuples, the hexagon exhaustively over all bond and dangling branches at
/// the uniform z filter tuple. The defining operator identity behind the
/// fusion step is checked symbolically per center on a family of lattices.
#[test]
fn criterion_07_cluster_reduction_exhaustive() {
    let mut pass = true;
    let mut detail = String::new();

    // symbolic identity: consuming a block stabilizer turns the product of
    // GHZ stabilizers into the cluster generators
    for adj in [
        LatticeAdjacency::two_center_chain(Model::TwoD),
        LatticeAdjacency::two_center_chain(Model::ThreeD),
        LatticeAdjacency::single_hexagon(),
        LatticeAdjacency::star(Model::TwoD),
        LatticeAdjacency::star(Model::ThreeD),
        LatticeAdjacency::honeycomb_periodic(2, 2),
        LatticeAdjacency::diamond_periodic(2),
    ] {
        if let Err(e) = stabilizer_product_check(&adj) {
            pass = false;
            detail.push_str(&format!("identity failed: {e}; "));
        }
    }
    detail.push_str("operator identity on 7 lattices; ");

    // two-center chains: every filter tuple, every branch
    for model in MODELS {
        let adj = LatticeAdjacency::two_center_chain(model);
        let n_out = model.povm().len();
        let mut worst = 1.0f64;
        let mut branches = 0usize;
        for a in 0..n_out {
            for b in 0..n_out {
                let stats = exhaustive_t0(&adj, 1.0, &[a, b], None, None).unwrap();
                worst = worst.min(stats.min_fidelity);
                branches += stats.branches;
                assert!(
                    (stats.prob_sum - 1.0).abs() < 1e-9,
                    "branch probabilities must sum to 1 given the filter tuple"
                );
            }
        }
        pass &= worst >= 1.0 - 1e-10;
        detail.push_str(&format!(
            "2-center {}: {branches} branches, min fid {worst:.12}; ",
            model.name()
        ));
    }

    // hexagon ring: all 4^6 * 2^6 measurement branches at the z filter tuple
    let hex = LatticeAdjacency::single_hexagon();
    let z = thermal_mbqc::thermal_channel::z_outcome_index(Model::TwoD);
    let stats = exhaustive_t0(&hex, 1.0, &[z; 6], None, None).unwrap();
    pass &= stats.min_fidelity >= 1.0 - 1e-10;
    pass &= (stats.prob_sum - 1.0).abs() < 1e-9;
    detail.push_str(&format!(
        "hexagon: {} branches, min fid {:.12}",
        stats.branches, stats.min_fidelity
    ));

    report("cluster reduction", pass, &detail);
    assert!(pass);
}

/// Every single-Pauli injection propagates to exactly the predicted residual
/// on the output cluster, on every outcome branch: X/Y/Z on each center, each
/// interior half, and each dangling half of the two-center chains.
#[test]
fn criterion_08_single_error_injections() {
    let mut pass = true;
    let mut detail = String::new();
    for model in MODELS {
        let adj = LatticeAdjacency::two_center_chain(model);
        let cluster = cluster_state_vector(&adj);
        let dangling_per = model.num_bonds() - 1;
        let mut sites = vec![
            InjectionSite::Center(0),
            InjectionSite::Center(1),
            InjectionSite::BondHalf(0, HalfSide::A),
            InjectionSite::BondHalf(0, HalfSide::B),
        ];
        for r in 0..2 {
            for slot in 0..dangling_per {
                sites.push(InjectionSite::Dangling(r, slot));
            }
        }
        // all filter tuples for the small set, the z tuple for the larger one
        let n_out = model.povm().len();
        let tuples: Vec<[usize; 2]> = match model {
            Model::TwoD => (0..n_out)
                .flat_map(|a| (0..n_out).map(move |b| [a, b]))
                .collect(),
            Model::ThreeD => {
                let z = thermal_mbqc::thermal_channel::z_outcome_index(model);
                vec![[z, z]]
            }
        };
        let mut worst = 1.0f64;
        let mut cases = 0usize;
        for &site in &sites {
            for letter in [PAULI_X, PAULI_Y, PAULI_Z] {
                let (x, z) = propagated_cluster_error(&adj, site, letter);
                let mut expected = cluster.clone();
                apply_pauli_masks(&mut expected, &x, &z);
                for tuple in &tuples {
                    let stats =
                        exhaustive_t0(&adj, 1.0, tuple, Some((site, letter)), Some(&expected))
                            .unwrap();
                    worst = worst.min(stats.min_fidelity);
                    cases += 1;
                }
            }
        }
        pass &= worst >= 1.0 - 1e-10;
        detail.push_str(&format!(
            "{}: {} injection runs, min fid {worst:.12}; ",
            model.name(),
            cases
        ));
    }
    report("error propagation", pass, detail.trim_end_matches("; "));
    assert!(pass);
}

/// The always-on evolution revives at the claimed periods, and the timed
/// pipeline reaches the cluster state when operations sit on revivals but
/// degrades measurably when they are misplaced by half a period.
#[test]
fn criterion_09_revivals_and_timed_readout() {
    let mut pass = true;
    let mut detail = String::new();
    for model in MODELS {
        let check = revival_check(BlockSpec::new(model, 1.0));
        pass &= check.residual < 1e-10;
        if model == Model::TwoD {
            pass &= check.control_residual > 0.1;
        }
        detail.push_str(&format!(
            "{}: revival residual {:.2e} (half-period {:.2});  ",
            model.name(),
            check.residual,
            check.control_residual
        ));

        let adj = LatticeAdjacency::two_center_chain(model);
        let schedule = build_schedule(&adj, &[0, 1]).unwrap();
        let mut opts = DynamicsOptions::new(1.0);
        opts.seed = 7;
        let timed = evolve_and_verify(&adj, &schedule, &opts).unwrap();
        pass &= timed.fidelity >= 1.0 - 1e-8;

        opts.timing = TimingMode::OffsetFraction(0.5);
        let shifted = evolve_and_verify(&adj, &schedule, &opts).unwrap();
        pass &= shifted.fidelity < 0.99;
        detail.push_str(&format!(
            "on-time fid {:.10}, half-period fid {:.4}; ",
            timed.fidelity, shifted.fidelity
        ));
    }
    report("revivals and timing", pass, detail.trim_end_matches("; "));
    assert!(pass);
}

/// The greedy schedule clears the hexagon within the revival budget: every
/// particle is filtered or measured exactly once, with horizon at most 5.
#[test]
fn criterion_10_hexagon_schedule_horizon() {
    let adj = LatticeAdjacency::single_hexagon();
    let schedule = build_schedule(&adj, &[0, 1, 2, 3, 4, 5]).unwrap();

    let mut filters = vec![0usize; adj.n_centers];
    let mut bonds = vec![0usize; adj.bonds.len()];
    let mut danglings = 0usize;
    for op in &schedule.ops {
        match op.kind {
            OpKind::Filter { center } => filters[center] += 1,
            OpKind::MeasureBond { bond } => bonds[bond] += 1,
            OpKind::MeasureDangling { .. } => danglings += 1,
        }
    }
    let covered = filters.iter().all(|&c| c == 1)
        && bonds.iter().all(|&c| c == 1)
        && danglings == adj.n_centers;
    let pass = schedule.horizon <= 5 && covered;
    report(
        "schedule horizon",
        pass,
        &format!(
            "horizon = {} (budget 5), {} ops covering 6 filters / 6 bonds / 6 danglings",
            schedule.horizon,
            schedule.ops.len()
        ),
    );
    assert!(pass);
}

/// Self-regression fixture: the channel curve computed by this code at first
/// validation, pinned so silent numerical drift shows up as a failure here
/// rather than as an unexplained shift in results.
#[test]
fn regression_frozen_channel_curve() {
    struct Anchor {
        model: Model,
        t: f64,
        epsilon: f64,
        p_eff: f64,
    }
    let anchors = [
        Anchor {
            model: Model::TwoD,
            t: 0.2,
            epsilon: 1.9835990750962429e-2,
            p_eff: 2.3810725110343902e-2,
        },
        Anchor {
            model: Model::ThreeD,
            t: 0.2,
            epsilon: 1.9817023795113520e-2,
            p_eff: 2.3121546116253180e-2,
        },
        Anchor {
            model: Model::TwoD,
            t: 0.4,
            epsilon: 2.0637342409124604e-1,
            p_eff: 2.5192356203550570e-1,
        },
        Anchor {
            model: Model::ThreeD,
            t: 0.4,
            epsilon: 2.0195950535183171e-1,
            p_eff: 2.3814722081919032e-1,
        },
    ];
    let mut worst = 0.0f64;
    for a in &anchors {
        let r = channel_rates(a.model, 1.0, a.t);
        worst = worst.max((r.epsilon / a.epsilon - 1.0).abs());
        worst = worst.max((r.p_eff / a.p_eff - 1.0).abs());
    }

    // finer decomposition at the quoted operating point
    let r = channel_rates(Model::ThreeD, 1.0, 0.2);
    for (got, frozen) in [
        (r.p1, 1.6512929954501637e-2),
        (r.p2, 6.6077592006998746e-3),
        (r.p3, 4.2848052583543932e-7),
    ] {
        worst = worst.max((got / frozen - 1.0).abs());
    }

    let t3 = threshold_temperature(Model::ThreeD, 1.0, 0.03).unwrap();
    let t2 = threshold_temperature(Model::TwoD, 1.0, 0.03).unwrap();
    let thresh_drift = (t3 / 0.211245 - 1.0).abs().max((t2 / 0.209892 - 1.0).abs());

    let pass = worst < 1e-9 && thresh_drift < 1e-4;
    report(
        "frozen curve regression",
        pass,
        &format!("max rate drift {worst:.2e} (budget 1e-9), threshold drift {thresh_drift:.2e} (budget 1e-4)"),
    );
    assert!(pass);
}
