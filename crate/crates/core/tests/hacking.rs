use std::path::Path;

use volterra_core::conv::{Geometry, VolterraOperator};
use volterra_core::hacking::{
    fit_order_one, fit_order_one_with, fit_report, model_mse, sample_inputs, FitMethod, NetworkOracle,
    OperatorOracle,
};
use volterra_core::netconv::{network_to_volterra, NetworkSpec};
use volterra_core::tensor::Tensor;

fn load(name: &str) -> NetworkSpec {
    NetworkSpec::from_json_file(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../networks").join(name)).unwrap()
}

fn check_against_conversion(name: &str, k: usize, w_tol: f64) {
    let net = load(name);
    let v = network_to_volterra(&net, 5).unwrap();
    let geo = Geometry::new(k, 1, 0).unwrap();
    assert_eq!(v.geometry().unwrap(), geo);
    let oracle = NetworkOracle { net: &net, input_len: 64 };
    let fit = fit_order_one(&oracle, geo, None, 11).unwrap();
    let rep = fit_report(&fit, v.kernel(1).unwrap().data(), v.bias().unwrap()).unwrap();
    assert!(rep.w_l2_error <= w_tol, "{name}: {rep:?}");
    assert!(rep.b_abs_error <= 1e-3, "{name}: {rep:?}");
    assert!(!fit.rank_deficient);

    // The least-squares fit can only beat the truncated first-order model.
    let truth = model_mse(&oracle, geo, fit.samples_used, 11, v.kernel(1).unwrap().data(), v.bias().unwrap()).unwrap();
    assert!(fit.residual_mse <= truth + 1e-12, "{} vs {truth}", fit.residual_mse);
}

#[test]
fn two_layer_fit_recovers_first_order_kernel() {
    check_against_conversion("two_layer_sigmoid.json", 17, 2e-3);
}

#[test]
fn three_layer_fit_recovers_first_order_kernel() {
    check_against_conversion("three_layer_sigmoid.json", 25, 5e-3);
}

#[test]
fn fits_are_bitwise_reproducible() {
    let net = load("two_layer_sigmoid.json");
    let oracle = NetworkOracle { net: &net, input_len: 64 };
    let geo = Geometry::new(17, 1, 0).unwrap();
    let a = fit_order_one(&oracle, geo, Some(50), 3).unwrap();
    let b = fit_order_one(&oracle, geo, Some(50), 3).unwrap();
    assert_eq!(a.w.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.w.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    assert_eq!(a.b.to_bits(), b.b.to_bits());
    assert_eq!(a.residual_mse.to_bits(), b.residual_mse.to_bits());
    let c = fit_order_one(&oracle, geo, Some(50), 4).unwrap();
    assert_ne!(a.w, c.w);
}

#[test]
fn samples_depend_only_on_seed_and_index() {
    let short = sample_inputs(3, 16, 21).unwrap();
    let long = sample_inputs(9, 16, 21).unwrap();
    assert_eq!(short[..], long[..3]);
}

#[test]
fn strided_operator_fit_matches_its_linear_part() {
    let w = Tensor::vector(vec![0.3, -0.7, 0.2, 0.9, -0.4]);
    let op = VolterraOperator::linear(w.clone(), -0.25, 2, 1).unwrap();
    let oracle = OperatorOracle { op: &op, input_len: 30 };
    let geo = Geometry::new(5, 2, 1).unwrap();
    for method in [FitMethod::Closed, FitMethod::Iterative { max_iters: 500 }] {
        let fit = fit_order_one_with(&oracle, geo, None, 8, method).unwrap();
        let rep = fit_report(&fit, w.data(), -0.25).unwrap();
        assert!(rep.w_l2_error < 1e-6 && rep.b_abs_error < 1e-6, "{method:?}: {rep:?}");
    }
}

#[test]
fn invalid_requests_are_rejected() {
    let w = Tensor::vector(vec![1.0, 2.0]);
    let op = VolterraOperator::linear(w.clone(), 0.0, 1, 0).unwrap();
    let oracle = OperatorOracle { op: &op, input_len: 4 };
    assert!(fit_order_one(&oracle, Geometry { kernel: 9, stride: 1, pad: 0 }, None, 1).is_err());
    assert!(fit_order_one(&oracle, Geometry { kernel: 2, stride: 0, pad: 0 }, None, 1).is_err());
    assert!(fit_order_one(&oracle, Geometry { kernel: 2, stride: 1, pad: 0 }, Some(0), 1).is_err());
    let fit = fit_order_one(&oracle, Geometry { kernel: 2, stride: 1, pad: 0 }, None, 1).unwrap();
    assert!(fit_report(&fit, &[1.0], 0.0).is_err());
}
