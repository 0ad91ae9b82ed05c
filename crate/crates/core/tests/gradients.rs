//! Analytic gradients against central finite differences.

mod common;

use common::gradcheck::{
    check_autoencoder, check_dense_head, check_recurrent, GRAD_REL_TOL,
};
use epf_core::neural::CellKind;

#[test]
fn autoencoder_layer_gradients() {
    for seed in 0..20 {
        let err = check_autoencoder(seed);
        assert!(err < GRAD_REL_TOL, "seed {seed}: relative error {err:e}");
    }
}

#[test]
fn gru_gradients() {
    for seed in 0..20 {
        let err = check_recurrent(CellKind::Gru, seed);
        assert!(err < GRAD_REL_TOL, "seed {seed}: relative error {err:e}");
    }
}

#[test]
fn lstm_gradients() {
    for seed in 0..20 {
        let err = check_recurrent(CellKind::Lstm, seed);
        assert!(err < GRAD_REL_TOL, "seed {seed}: relative error {err:e}");
    }
}

#[test]
fn output_head_gradients() {
    for seed in 0..20 {
        let err = check_dense_head(seed);
        assert!(err < GRAD_REL_TOL, "seed {seed}: relative error {err:e}");
    }
}
