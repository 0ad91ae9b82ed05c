//! Central finite-difference oracle, independent of the analytic backward
//! passes it checks: it only ever calls forward evaluations.

use epf_core::neural::{
    Activation, AutoencoderPair, CellKind, CodeSequences, DenseLayer, ForecastNet, Parameterized,
    RecurrentCell,
};
use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;
pub const GRAD_REL_TOL: f64 = 1e-4;
/// Gradient components smaller than this are compared absolutely.
pub const ABS_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(ABS_FLOOR)
}

/// Numerical gradient of `loss` with respect to every parameter of `p`.
pub fn numeric_gradient<P: Parameterized<f64> + Clone>(p: &P, loss: impl Fn(&P) -> f64) -> Vec<f64> {
    let base = p.flatten();
    let mut probe = p.clone();
    (0..base.len())
        .map(|i| {
            let mut plus = base.clone();
            plus[i] += FD_STEP;
            probe.assign(&plus);
            let lp = loss(&probe);
            let mut minus = base.clone();
            minus[i] -= FD_STEP;
            probe.assign(&minus);
            let lm = loss(&probe);
            (lp - lm) / (2.0 * FD_STEP)
        })
        .collect()
}

/// Numerical gradient of `f` with respect to the entries of `x`.
pub fn numeric_input_gradient(x: &Array1<f64>, f: impl Fn(&Array1<f64>) -> f64) -> Array1<f64> {
    Array1::from_shape_fn(x.len(), |i| {
        let mut plus = x.clone();
        plus[i] += FD_STEP;
        let mut minus = x.clone();
        minus[i] -= FD_STEP;
        (f(&plus) - f(&minus)) / (2.0 * FD_STEP)
    })
}

pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| relative_error(a, n))
        .fold(0.0, f64::max)
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Array1<f64> {
    Array1::from_shape_fn(n, |_| rng.random_range(-scale..scale))
}

fn randomize<P: Parameterized<f64>>(p: &mut P, rng: &mut ChaCha8Rng, scale: f64) {
    p.visit_mut(&mut |v| *v = rng.random_range(-scale..scale));
}

/// Autoencoder layer (sigmoid encoder and decoder) on a random batch.
pub fn check_autoencoder(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let in_dim = rng.random_range(2..7);
    let out_dim = rng.random_range(1..5);
    let mut pair = AutoencoderPair::<f64>::init(in_dim, out_dim, seed);
    randomize(&mut pair, &mut rng, 1.0);
    let data: Vec<Array1<f64>> = (0..5).map(|_| random_vec(&mut rng, in_dim, 1.0).mapv(|v| v.abs())).collect();
    let refs: Vec<&Array1<f64>> = data.iter().collect();
    let (_, grad) = pair.loss_and_grad(&refs);
    let numeric = numeric_gradient(&pair, |p| p.loss(&data));
    max_relative_error(&grad.flatten(), &numeric)
}

/// Recurrent cell over a 3-step sequence of 2-dim inputs; the loss is a
/// fixed random projection of the final hidden state. Checks parameter,
/// initial-state and input gradients.
pub fn check_recurrent(kind: CellKind, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (input_dim, hidden_dim, steps) = (2, 2 + (seed as usize % 3), 3);
    let mut cell = RecurrentCell::<f64>::zeros(kind, input_dim, hidden_dim);
    randomize(&mut cell, &mut rng, 1.0);
    let seq: Vec<Array1<f64>> = (0..steps).map(|_| random_vec(&mut rng, input_dim, 1.0)).collect();
    let h0 = random_vec(&mut rng, hidden_dim, 0.5);
    let proj = random_vec(&mut rng, hidden_dim, 1.0);

    let loss = |c: &RecurrentCell<f64>, seq: &[Array1<f64>], h0: &Array1<f64>| {
        let (h, _) = c.forward(seq, h0).unwrap();
        h.dot(&proj)
    };

    let trace = cell.forward_trace(&seq, &h0).unwrap();
    let mut grad = cell.zeros_like();
    let (dh0, dxs) = cell.backward(&trace, proj.view(), &mut grad);

    let mut err = max_relative_error(
        &grad.flatten(),
        &numeric_gradient(&cell, |c| loss(c, &seq, &h0)),
    );
    let num_dh0 = numeric_input_gradient(&h0, |h| loss(&cell, &seq, h));
    err = err.max(max_relative_error(dh0.as_slice().unwrap(), num_dh0.as_slice().unwrap()));
    for t in 0..steps {
        let num_dx = numeric_input_gradient(&seq[t], |x| {
            let mut s = seq.clone();
            s[t] = x.clone();
            loss(&cell, &s, &h0)
        });
        err = err.max(max_relative_error(dxs[t].as_slice().unwrap(), num_dx.as_slice().unwrap()));
    }
    err
}

/// Identity output head alone, then the full predictor (cell plus head)
/// under the squared-error training loss.
pub fn check_dense_head(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hidden = rng.random_range(1..6);
    let mut head = DenseLayer::<f64>::zeros(hidden, 1, Activation::Identity);
    randomize(&mut head, &mut rng, 1.0);
    let h = random_vec(&mut rng, hidden, 1.0);
    let target = rng.random_range(-1.0..1.0);
    let head_loss = |l: &DenseLayer<f64>, x: &Array1<f64>| {
        let e = l.forward(x.view())[0] - target;
        e * e
    };
    let y = head.forward(h.view());
    let dy = Array1::from_elem(1, 2.0 * (y[0] - target));
    let mut grad = head.zeros_like();
    let dh = head.backward(h.view(), y.view(), dy.view(), &mut grad);
    let mut err = max_relative_error(&grad.flatten(), &numeric_gradient(&head, |l| head_loss(l, &h)));
    let num_dh = numeric_input_gradient(&h, |x| head_loss(&head, x));
    err = err.max(max_relative_error(dh.as_slice().unwrap(), num_dh.as_slice().unwrap()));

    let kind = if seed.is_multiple_of(2) { CellKind::Gru } else { CellKind::Lstm };
    let mut net = ForecastNet::<f64>::init(kind, 3, hidden, seed);
    randomize(&mut net, &mut rng, 0.8);
    let codes: Vec<Array1<f64>> = (0..6).map(|_| random_vec(&mut rng, 3, 1.0)).collect();
    let targets: Vec<f64> = (0..6).map(|_| rng.random_range(0.0..1.0)).collect();
    let data = CodeSequences::new(codes, targets, 3).unwrap();
    let idx: Vec<usize> = (0..data.len()).collect();
    let (_, g) = net.loss_and_grad(&data, &idx).unwrap();
    let numeric = numeric_gradient(&net, |n| n.mse(&data, 0..data.len()).unwrap());
    err.max(max_relative_error(&g.flatten(), &numeric))
}
