mod common;

use std::sync::Arc;

use common::*;
use pgdl_core::baseline::cg_sense;
use pgdl_core::physics::{apply_e, make_coil_maps, make_phantom, ComplexImage};
use pgdl_core::sampling::{uniform_mask, SamplingMask};

#[test]
fn full_mask_noiseless_recovery() {
    let coils = Arc::new(make_coil_maps(4, 32, 32, 1).unwrap());
    let mask = SamplingMask::full(32);
    let truth = make_phantom(32, 32, 3).unwrap();
    let y = apply_e(&truth, &coils, &mask).unwrap();
    let out = cg_sense(&y, &mask, &coils, 0.0, 10).unwrap();
    assert!(rel_err(&out.image, &truth) <= 1e-6);
}

#[test]
fn matches_dense_tikhonov_solve() {
    let coils = Arc::new(make_coil_maps(2, 16, 16, 5).unwrap());
    let mask = uniform_mask(16, 2, 4).unwrap();
    let y = random_kspace(2, 16, 16, &mask, 6);
    let out = cg_sense(&y, &mask, &coils, 1e-3, 200).unwrap();
    let zero = ComplexImage::zeros(16, 16);
    let oracle = dense_solve(&zero, &y, &mask, &coils, 1e-3);
    assert!(rel_err(&out.image, &oracle) <= 1e-8, "{}", rel_err(&out.image, &oracle));
}

#[test]
fn error_energy_norm_never_rises() {
    let coils = Arc::new(make_coil_maps(3, 16, 16, 2).unwrap());
    let mask = uniform_mask(16, 3, 2).unwrap();
    let y = random_kspace(3, 16, 16, &mask, 4);
    let zero = ComplexImage::zeros(16, 16);
    let (a, b) = dense_system(&zero, &y, &mask, &coils, 1e-2);
    let xstar = a.clone().lu().solve(&b).unwrap();
    let mut last = f64::INFINITY;
    for k in 1..=25 {
        let out = cg_sense(&y, &mask, &coils, 1e-2, k).unwrap();
        let e = energy_error(&a, &xstar, &out.image);
        assert!(e <= last * (1.0 + 1e-9) + 1e-13, "k {k}: {e} > {last}");
        last = e;
    }
}

#[test]
fn residual_history_starts_at_rhs_norm() {
    let coils = Arc::new(make_coil_maps(2, 16, 16, 2).unwrap());
    let mask = uniform_mask(16, 2, 4).unwrap();
    let y = random_kspace(2, 16, 16, &mask, 8);
    let out = cg_sense(&y, &mask, &coils, 0.0, 5).unwrap();
    let rhs = pgdl_core::physics::apply_eh(&y, &coils, &mask).unwrap();
    assert!((out.residuals[0] - rhs.norm()).abs() <= 1e-12 * rhs.norm());
    assert_eq!(out.residuals.len(), 6);
    assert!(out.residuals.last().unwrap() < &out.residuals[0]);
}

#[test]
fn rejects_bad_arguments() {
    let coils = Arc::new(make_coil_maps(2, 16, 16, 2).unwrap());
    let mask = uniform_mask(16, 2, 4).unwrap();
    let y = random_kspace(2, 16, 16, &mask, 8);
    assert!(cg_sense(&y, &mask, &coils, -1.0, 5).is_err());
    assert!(cg_sense(&y, &mask, &coils, 0.0, 0).is_err());
    let other = Arc::new(make_coil_maps(2, 16, 8, 2).unwrap());
    assert!(cg_sense(&y, &mask, &other, 0.0, 5).is_err());
}
