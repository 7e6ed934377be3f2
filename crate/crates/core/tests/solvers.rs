mod common;

use common::{random_cube, rng};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use snapsci::io::{gen_synthetic, SyntheticKind};
use snapsci::model::{encode, CfaOperator, MaskStack};
use snapsci::priors::{IdentityDenoiser, MalvarDemosaicer, TvDenoiser};
use snapsci::solvers::{
    gap_solve, two_stage_admm, AdmmOptions, GapOptions, Priors, Schedule, Step, StepRecord, Var,
};
use snapsci::Cube;

fn reads(rec: &StepRecord) -> Vec<(Var, usize)> {
    rec.reads.clone()
}

#[test]
fn closed_mode_update_order_and_versions() {
    let mut r = rng(1);
    let truth = random_cube(4, 4, 3, 2, &mut r).map(|v| v + 0.5);
    let masks = MaskStack::random_binary(4, 4, 2, 0.5, &mut r);
    let cfa = CfaOperator::new(4, 4).unwrap();
    let y = encode(&truth, &masks, Some(&cfa), 0.0, &mut r).unwrap().y;
    let priors = Priors {
        denoiser: &IdentityDenoiser,
        demosaicer: None,
    };
    let opts = AdmmOptions {
        schedule: Schedule::constant(10.0, 3),
        record_steps: true,
        ..Default::default()
    };
    let res = two_stage_admm(&y, &masks, Some(&cfa), &priors, &opts).unwrap();
    let log = res.state.log.unwrap();
    assert_eq!(log.len(), 15);
    for k in 1..=3 {
        let it = &log[(k - 1) * 5..k * 5];
        let steps: Vec<Step> = it.iter().map(|s| s.step).collect();
        assert_eq!(steps, [Step::Q, Step::X, Step::V, Step::W, Step::U]);
        assert_eq!(reads(&it[0]), [(Var::X, k - 1), (Var::U, k - 1)]);
        assert_eq!(reads(&it[1]), [(Var::Q, k), (Var::U, k - 1), (Var::V, k - 1), (Var::W, k - 1)]);
        assert_eq!(reads(&it[2]), [(Var::X, k), (Var::W, k - 1)]);
        assert_eq!(reads(&it[3]), [(Var::X, k), (Var::V, k)]);
        assert_eq!(reads(&it[4]), [(Var::Q, k), (Var::X, k)]);
        for (rec, var) in it.iter().zip([Var::Q, Var::X, Var::V, Var::W, Var::U]) {
            assert_eq!(rec.writes, (var, k));
        }
    }
}

#[test]
fn network_mode_reads_denoised_scene() {
    let mut r = rng(2);
    let truth = random_cube(6, 6, 3, 2, &mut r).map(|v| v + 0.5);
    let masks = MaskStack::random_binary(6, 6, 2, 0.5, &mut r);
    let cfa = CfaOperator::new(6, 6).unwrap();
    let y = encode(&truth, &masks, Some(&cfa), 0.0, &mut r).unwrap().y;
    let priors = Priors {
        denoiser: &IdentityDenoiser,
        demosaicer: Some(&MalvarDemosaicer),
    };
    let opts = AdmmOptions {
        schedule: Schedule::constant(10.0, 2),
        record_steps: true,
        ..Default::default()
    };
    let res = two_stage_admm(&y, &masks, Some(&cfa), &priors, &opts).unwrap();
    let log = res.state.log.unwrap();
    let steps: Vec<Step> = log.iter().map(|s| s.step).collect();
    assert_eq!(steps, [Step::Q, Step::X, Step::V, Step::U, Step::Q, Step::X, Step::V, Step::U]);
    assert_eq!(reads(&log[4]), [(Var::V, 1), (Var::U, 1)]);
    assert_eq!(reads(&log[5]), [(Var::Q, 2), (Var::U, 1)]);
    assert_eq!(reads(&log[7]), [(Var::Q, 2), (Var::V, 2)]);
    assert!(res.state.w.as_slice().iter().all(|&v| v == 0.0));
}

fn moving_square(seed: u64) -> (Cube, MaskStack<f64>, snapsci::Plane64) {
    let truth: Cube = gen_synthetic(SyntheticKind::MovingSquare, 32, 32, 4, seed).unwrap();
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let masks = MaskStack::random_binary(32, 32, 4, 0.5, &mut r);
    let y = encode(&truth, &masks, None, 0.0, &mut r).unwrap().y;
    (truth, masks, y)
}

#[test]
fn exact_recovery_single_frame() {
    let mut r = rng(3);
    let truth = random_cube(6, 6, 1, 1, &mut r).map(|v| v + 0.5);
    let masks = MaskStack::random_uniform(6, 6, 1, 0.1, 1.0, &mut r);
    let y = masks.apply_h(&truth).unwrap();
    let sched = Schedule::constant(5.0, 50);
    let gap = gap_solve(&y, &masks, &IdentityDenoiser, &GapOptions { schedule: sched.clone(), ..Default::default() })
        .unwrap();
    assert!(gap.raw.max_abs_diff(&truth) <= 1e-6);
    let priors = Priors {
        denoiser: &IdentityDenoiser,
        demosaicer: None,
    };
    let admm = two_stage_admm(&y, &masks, None, &priors, &AdmmOptions { schedule: sched, ..Default::default() }).unwrap();
    assert!(admm.state.v.max_abs_diff(&truth) <= 1e-6);
}

#[test]
fn gap_identity_fidelity_never_increases() {
    for accelerate in [false, true] {
        let (_, masks, y) = moving_square(4);
        let opts = GapOptions {
            schedule: Schedule::constant(10.0, 10),
            accelerate,
            ..Default::default()
        };
        let res = gap_solve(&y, &masks, &IdentityDenoiser, &opts).unwrap();
        let mut prev = res.trace.initial_fidelity;
        for row in &res.trace.rows {
            assert!(row.fidelity <= prev + 1e-12, "{} > {prev}", row.fidelity);
            prev = row.fidelity;
        }
    }
}

/// Every default start already fits `y` (both demosaicers keep the measured
/// samples), so the check starts from zero.
#[test]
fn pnp_runs_end_more_consistent_than_they_start() {
    let (truth, masks, y) = moving_square(5);
    let tv = TvDenoiser::default();
    let zero = truth.zeros_like();
    let gap = gap_solve(&y, &masks, &tv, &GapOptions { init: Some(zero.clone()), ..Default::default() }).unwrap();
    assert!(gap.trace.final_fidelity() <= gap.trace.initial_fidelity);
    let priors = Priors {
        denoiser: &tv,
        demosaicer: None,
    };
    let opts = AdmmOptions {
        truth: Some(&truth),
        init: Some(zero),
        ..Default::default()
    };
    let admm = two_stage_admm(&y, &masks, None, &priors, &opts).unwrap();
    assert!(admm.trace.final_fidelity() <= admm.trace.initial_fidelity);
    assert!(admm.trace.rows.last().unwrap().psnr.unwrap() > 20.0);

    let rgb: Cube = gen_synthetic(SyntheticKind::ColorOrbits, 32, 32, 4, 5).unwrap();
    let mut r = ChaCha8Rng::seed_from_u64(5);
    let cfa = CfaOperator::new(32, 32).unwrap();
    let y = encode(&rgb, &masks, Some(&cfa), 0.0, &mut r).unwrap().y;
    for demosaicer in [None, Some(&MalvarDemosaicer as &dyn snapsci::priors::Demosaicer<f64>)] {
        let priors = Priors { denoiser: &tv, demosaicer };
        let opts = AdmmOptions {
            init: Some(rgb.zeros_like()),
            ..Default::default()
        };
        let res = two_stage_admm(&y, &masks, Some(&cfa), &priors, &opts).unwrap();
        assert!(res.trace.final_fidelity() <= res.trace.initial_fidelity);
    }
}

#[test]
fn early_stop_truncates_schedule() {
    let (_, masks, y) = moving_square(6);
    let priors = Priors {
        denoiser: &IdentityDenoiser,
        demosaicer: None,
    };
    let opts = AdmmOptions {
        early_stop: Some(1e-3),
        ..Default::default()
    };
    let res = two_stage_admm(&y, &masks, None, &priors, &opts).unwrap();
    assert!(res.trace.stopped_early);
    assert!(res.trace.iterations() < opts.schedule.total_iters());
}

#[test]
fn solvers_are_deterministic() {
    let (_, masks, y) = moving_square(7);
    let tv = TvDenoiser::default();
    let a = gap_solve(&y, &masks, &tv, &GapOptions::default()).unwrap();
    let b = gap_solve(&y, &masks, &tv, &GapOptions::default()).unwrap();
    assert_eq!(a.cube, b.cube);
}
