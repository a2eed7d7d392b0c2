use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use condgen::blref::BlInputs;

use super::random::{matrix, spd, vector};

/// Random BL problem with 2-6 assets and 1-3 views; each view is exact,
/// noisy, or correlated with another. Exact view values are generated from
/// a feasible mean so they never conflict.
pub fn random_bl(rng: &mut ChaCha8Rng) -> BlInputs {
    let n = rng.random_range(2..=6);
    let k = rng.random_range(1..=3);
    let sigma = spd(rng, n, 0.02);
    let w = DVector::from_fn(n, |_, _| rng.random_range(0.05..1.0));
    let w = &w / w.sum();
    let p = matrix(rng, k, n, 1.0);
    let anchor = vector(rng, n, 0.1);
    let v = &p * anchor;
    let omega = match rng.random_range(0..3) {
        0 => DMatrix::zeros(k, k),
        1 => spd(rng, k, 1e-3),
        _ => {
            let mut o = spd(rng, k, 1e-3);
            let exact = rng.random_range(0..k);
            o.row_mut(exact).fill(0.0);
            o.column_mut(exact).fill(0.0);
            o
        }
    };
    BlInputs {
        r_f: rng.random_range(0.0..0.05),
        sigma,
        w,
        lambda: rng.random_range(0.5..4.0),
        tau: rng.random_range(0.01..0.5),
        p,
        v,
        omega,
    }
}
