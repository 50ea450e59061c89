mod common;

use proptest::prelude::*;

use common::neuron_oracle;
use xbarsim::device::Region;
use xbarsim::neuron::{
    dac_current, kcl_residuals, small_signal, solve_dc, sweep, transfer_curve, tuned_gm, DacCodes,
    RgcParams,
};
use xbarsim::{Exec, SolveError};

fn params(beta2: f64, lambda: f64, ib2: f64) -> RgcParams {
    let mut p = RgcParams::reference();
    p.m2.beta *= beta2;
    p.ib2 *= ib2;
    for m in [&mut p.m1, &mut p.m2, &mut p.m3] {
        m.lambda = lambda;
    }
    p
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn matches_oracle(
        beta2 in 0.7f64..1.4,
        lambda in 0.0f64..0.1,
        ib2 in 0.8f64..1.2,
        code in 0u32..64,
        code_out in 0u32..64,
        i_in in -2e-6f64..2e-6,
    ) {
        let p = params(beta2, lambda, ib2);
        let codes = DacCodes::new(code, code_out);
        let op = solve_dc(&p, i_in, codes).unwrap();
        let want = neuron_oracle(&p, i_in, dac_current(&p.dac, code).unwrap(), dac_current(&p.dac_out, code_out).unwrap());
        for (g, w) in [op.v_in, op.v_gate1, op.v_mid, op.v_out].iter().zip(want) {
            prop_assert!((g - w).abs() <= 1e-9, "{g} vs {w}");
        }
        prop_assert!(kcl_residuals(&p, &op).iter().all(|r| r.abs() <= 1e-12));
    }

    #[test]
    fn input_node_rises_with_dac_code(code in 0u32..63, lambda in 0.0f64..0.1) {
        let p = params(1.0, lambda, 1.0);
        let a = solve_dc(&p, 0.0, code).unwrap().v_in;
        let b = solve_dc(&p, 0.0, code + 1).unwrap().v_in;
        prop_assert!(b > a);
    }
}

#[test]
fn reference_operating_point() {
    let op = solve_dc(&RgcParams::reference(), 0.0, 0).unwrap();
    assert!((op.v_out - 0.9).abs() < 1e-12);
    assert!((op.v_in - 0.6).abs() < 0.01, "v_in {}", op.v_in);
    for m in [&op.m1, &op.m2, &op.m3] {
        assert_eq!(m.region, Region::Saturation);
    }
    assert!(op.warnings.is_empty());
}

#[test]
fn transfer_slope_is_load_resistance() {
    let p = RgcParams::reference();
    let tc = transfer_curve(
        &p,
        DacCodes::default(),
        &sweep(0.0, 2e-6, 21),
        Exec::Sequential,
    );
    assert_eq!(tc.n_infeasible, 0);
    assert!((tc.slope - p.r_load).abs() / p.r_load < 1e-9);
    assert!(tc.max_fit_deviation < 1e-9);
}

#[test]
fn transfer_curve_same_for_both_strategies() {
    let p = RgcParams::reference();
    let s = sweep(0.0, 4e-6, 41);
    assert_eq!(
        transfer_curve(&p, DacCodes::new(10, 5), &s, Exec::Sequential),
        transfer_curve(&p, DacCodes::new(10, 5), &s, Exec::Parallel)
    );
}

#[test]
fn overdriven_input_is_infeasible() {
    // More input current than the bias leaves M1 with nothing to carry.
    let err = solve_dc(&RgcParams::reference(), 6e-6, 0).unwrap_err();
    assert!(matches!(err, SolveError::Infeasible { .. }), "{err:?}");
}

#[test]
fn out_of_range_code_rejected() {
    assert!(solve_dc(&RgcParams::reference(), 0.0, 64).is_err());
}

#[test]
fn feedback_lowers_input_impedance() {
    let p = RgcParams::reference();
    let ss = small_signal(&p, &solve_dc(&p, 0.0, 0).unwrap()).unwrap();
    let plain = 1.0 / solve_dc(&p, 0.0, 0).unwrap().m1.gm;
    assert!(ss.a > 20.0);
    assert!((ss.zin * ss.a - plain).abs() / plain < 1e-12);
}

#[test]
fn tuned_gm_rises_with_controls() {
    let p = RgcParams::reference();
    let mut q = p;
    q.vc += 0.05;
    assert!(tuned_gm(&q) > tuned_gm(&p));
    let mut q = p;
    q.ic *= 2.0;
    assert!(tuned_gm(&q) > tuned_gm(&p));
}
