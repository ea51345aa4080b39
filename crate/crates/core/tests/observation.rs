mod common;

use common::{reference, rel_diff};
use leoris::filter::ObservationModel;
use leoris::geometry::AsinPolicy;
use leoris::linalg::wrap_angle;
use leoris::scenario::synth::{draw_observation, SnapshotModel};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

#[test]
fn drawn_observations_have_the_requested_covariance() {
    let (_, world, n) = reference();
    let model = SnapshotModel::new(&world.snapshots[n - 1], AsinPolicy::Strict);
    let truth = &world.labels.truth.states[n];
    let mean = model.predict(truth.into()).unwrap();
    let sigma = model.covariance(truth.into()).unwrap();
    let m = mean.len();
    // wide azimuths wrap, which truncates their spread; compare the rest
    let az = model.azimuth_indices();
    let kept: Vec<usize> = (0..m).filter(|i| !az.contains(i) || 5.0 * sigma[(*i, *i)].sqrt() < PI).collect();
    assert!(kept.len() > m / 2);
    // entries span many decades, so compare in units of the target deviations
    let scale: Vec<f64> = kept.iter().map(|&i| 1.0 / sigma[(i, i)].sqrt()).collect();
    let k = kept.len();
    let draws = 10_000;
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut acc = DMatrix::zeros(k, k);
    for _ in 0..draws {
        let mut r = draw_observation(&model, truth.into(), &sigma, &mut rng).unwrap() - &mean;
        for &i in az {
            r[i] = wrap_angle(r[i]);
            assert!(r[i] > -PI && r[i] <= PI);
        }
        let r = DVector::from_fn(k, |j, _| r[kept[j]] * scale[j]);
        acc += &r * r.transpose();
    }
    let sample = acc / draws as f64;
    let target = DMatrix::from_fn(k, k, |a, b| sigma[(kept[a], kept[b])] * scale[a] * scale[b]);
    let err = rel_diff(&target, &sample);
    assert!(err < 0.1, "{err:e}");
}
