use std::f64::consts::PI;

use confdim_core::cloud::{ball_mass, scaling_entropy, GridIndex, PointCloud};
use confdim_core::dimension::{project, ProjectionSpec};
use confdim_core::dynamics::rotation_cocycle;
use confdim_core::geometry::{haar_rotation, Rotation};
use confdim_core::gibbs::{refined_weights, sample_cloud, Potential, SampleDepth};
use confdim_core::rng::{stream, Purpose};
use confdim_core::symbolic::metric_d_rho;
use confdim_core::{Complex64, ConformalSystem, Word};
use proptest::prelude::*;
use rand::Rng;

fn angle_gap(a: &Rotation, b: &Rotation) -> f64 {
    let d = (a.angle().unwrap() - b.angle().unwrap()).rem_euclid(2.0 * PI);
    d.min(2.0 * PI - d)
}

fn word_strategy(m: u8, max_len: usize) -> impl Strategy<Value = Vec<u8>> {
    prop::collection::vec(0..m, 1..=max_len)
}

fn planar_system() -> impl Strategy<Value = ConformalSystem> {
    prop::collection::vec((0.1f64..0.45, -PI..PI, -1.0f64..1.0, -1.0f64..1.0), 2..=4).prop_map(|maps| {
        let triples: Vec<_> = maps.into_iter().map(|(r, a, x, y)| (r, a, [x, y])).collect();
        ConformalSystem::similarity2d(&triples).unwrap()
    })
}

fn random_cloud(dim: usize) -> impl Strategy<Value = PointCloud> {
    prop::collection::vec((prop::collection::vec(-1.0f64..1.0, dim), 0.01f64..1.0), 1..200).prop_map(move |pts| {
        let total: f64 = pts.iter().map(|p| p.1).sum();
        let coords = pts.iter().flat_map(|p| p.0.clone()).collect();
        let weights = pts.iter().map(|p| p.1 / total).collect();
        PointCloud::new(dim, coords, weights, vec![0.0; pts.len()]).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn d_rho_is_an_ultrametric(
        i in prop::collection::vec(0..3u8, 12),
        j in prop::collection::vec(0..3u8, 12),
        k in prop::collection::vec(0..3u8, 12),
        rho in 0.05f64..0.95,
    ) {
        let d = |a: &[u8], b: &[u8]| metric_d_rho(a, b, rho).unwrap().value;
        prop_assert!(d(&i, &k) <= d(&i, &j).max(d(&j, &k)));
        prop_assert_eq!(d(&i, &j), d(&j, &i));
    }

    #[test]
    fn refined_alphabet_is_a_partition_with_its_bounds(
        ratios in prop::collection::vec(0.15f64..0.6, 2..=3),
        p in prop::collection::vec(0.1f64..1.0, 3),
        q in 1usize..5,
    ) {
        let maps: Vec<_> = ratios.iter().enumerate().map(|(k, &r)| (r, 0.0, [3.0 * k as f64, 0.0])).collect();
        let sys = ConformalSystem::similarity2d(&maps).unwrap();
        let refined = sys.refined_alphabet(q).unwrap();
        prop_assert!(refined.bounds.all_hold(), "{:?}", refined.bounds);
        let total: f64 = p[..ratios.len()].iter().sum();
        let phi = Potential::bernoulli(p[..ratios.len()].iter().map(|x| x / total).collect()).unwrap();
        let w = refined_weights(&phi, 0.0, &refined).unwrap();
        prop_assert!((w.total() - 1.0).abs() < 1e-12);
        // covering and prefix-free: every long word has exactly one prefix in Lambda_q
        let long: Vec<u8> = (0..refined.max_len + 2).map(|k| ((k * 7 + q) % ratios.len()) as u8).collect();
        let hits = refined.words().iter().filter(|w| w.is_prefix_of(&long)).count();
        prop_assert_eq!(hits, 1);
    }

    #[test]
    fn chain_rule_for_similarities(sys in planar_system(), u in word_strategy(4, 6), v in word_strategy(4, 6)) {
        let m = sys.maps() as u8;
        let (u, v): (Vec<_>, Vec<_>) = (u.iter().map(|s| s % m).collect(), v.iter().map(|s| s % m).collect());
        check_chain_rule(&sys, u, v)?;
    }

    #[test]
    fn chain_rule_for_julia(u in word_strategy(2, 8), v in word_strategy(2, 8)) {
        let sys = ConformalSystem::julia(Complex64::new(-3.0, 1.0)).unwrap();
        check_chain_rule(&sys, u, v)?;
    }

    #[test]
    fn cocycle_composes(u in word_strategy(2, 6), v in word_strategy(2, 6)) {
        let sys = ConformalSystem::julia(Complex64::new(-3.0, 1.0)).unwrap();
        let x = sys.base_point();
        let (u, v) = (Word::new(u), Word::new(v));
        let whole = rotation_cocycle(&sys, &u.concat(&v), &x).unwrap();
        let fvx = sys.compose_map(&v, &x).unwrap();
        let parts = rotation_cocycle(&sys, &u, &fvx).unwrap().compose(&rotation_cocycle(&sys, &v, &x).unwrap());
        prop_assert!(angle_gap(&whole, &parts) < 1e-9);
    }

    #[test]
    fn entropy_lies_between_zero_and_log_n(cloud in random_cloud(2), r in 0.001f64..4.0) {
        let h = scaling_entropy(&cloud, r).unwrap().h;
        prop_assert!(h >= -1e-12 && h <= (cloud.len() as f64).ln() + 1e-9, "H = {h}");
        if r >= cloud.diameter() {
            prop_assert!(h.abs() < 1e-12);
        }
    }

    #[test]
    fn entropy_bounds_on_the_line(cloud in random_cloud(1), r in 0.001f64..3.0) {
        let h = scaling_entropy(&cloud, r).unwrap().h;
        prop_assert!(h >= -1e-12 && h <= (cloud.len() as f64).ln() + 1e-9, "H = {h}");
    }

    #[test]
    fn grid_index_matches_linear_scan(cloud in random_cloud(2), h in 0.01f64..1.0, r in 0.01f64..1.5) {
        let index = GridIndex::new(&cloud, h).unwrap();
        for k in (0..cloud.len()).step_by(7) {
            let x = cloud.point(k);
            let brute = ball_mass(&cloud, x, r).unwrap().mass;
            prop_assert!((index.mass(x, r) - brute).abs() < 1e-12);
        }
    }

    #[test]
    fn haar_frames_are_orthonormal_and_projections_contract(seed in any::<u64>(), d in 2usize..5, cloud_seed in any::<u64>()) {
        let rot = haar_rotation(d, &mut stream(seed, Purpose::Rotations, 0));
        let k = 1 + (seed as usize % d);
        let spec = ProjectionSpec::from_rotation(k, &rot).unwrap();
        let mut rng = stream(cloud_seed, Purpose::Probe, 0);
        let pts: Vec<f64> = (0..20 * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let cloud = PointCloud::uniform(d, pts).unwrap();
        let p = project(&cloud, &spec, None).unwrap();
        for a in 0..cloud.len() {
            for b in 0..a {
                let before = confdim_core::geometry::dist(cloud.point(a), cloud.point(b));
                let after = confdim_core::geometry::dist(p.point(a), p.point(b));
                prop_assert!(after <= before + 1e-12);
            }
        }
        prop_assert_eq!(p.weights(), cloud.weights());
    }
}

fn check_chain_rule(sys: &ConformalSystem, u: Vec<u8>, v: Vec<u8>) -> Result<(), TestCaseError> {
    let x = sys.base_point();
    let (u, v) = (Word::new(u), Word::new(v));
    let (r_uv, o_uv) = sys.derivative_decomposition(&u.concat(&v), &x).unwrap();
    let fvx = sys.compose_map(&v, &x).unwrap();
    let (r_u, o_u) = sys.derivative_decomposition(&u, &fvx).unwrap();
    let (r_v, o_v) = sys.derivative_decomposition(&v, &x).unwrap();
    prop_assert!(((r_u * r_v) / r_uv - 1.0).abs() < 1e-10);
    prop_assert!(angle_gap(&o_uv, &o_u.compose(&o_v)) < 1e-10);
    Ok(())
}

#[test]
fn sampling_is_deterministic_per_seed() {
    let sys = ConformalSystem::similarity2d(&[(1.0 / 3.0, 1.0, [0.0, 0.0]), (1.0 / 3.0, 1.0, [1.0, 0.0])]).unwrap();
    let phi = Potential::bernoulli(vec![0.5, 0.5]).unwrap();
    let a = sample_cloud(&sys, &phi, SampleDepth::Level(16), 5000, 3).unwrap();
    let b = sample_cloud(&sys, &phi, SampleDepth::Level(16), 5000, 3).unwrap();
    let c = sample_cloud(&sys, &phi, SampleDepth::Level(16), 5000, 4).unwrap();
    assert_eq!(a.points(), b.points());
    assert_eq!(a.words(), b.words());
    assert_ne!(a.points(), c.points());
}
