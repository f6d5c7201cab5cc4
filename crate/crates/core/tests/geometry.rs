use proptest::prelude::*;
use smd_core::problems::{make_quadratic_l1, random_simplex_quadratic, Curvature};
use smd_core::{fosp, prox, DistanceGenerator, FeasibleSet, Vector};

fn vec_of(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0..3.0f64, len)
}

fn simplex_point(raw: Vec<f64>) -> Vector {
    let w: Vec<f64> = raw.iter().map(|v| v.exp()).collect();
    let s: f64 = w.iter().sum();
    Vector::from_iterator(w.len(), w.iter().map(|v| v / s))
}

proptest! {
    #[test]
    fn bregman_is_nonnegative_and_vanishes_on_the_diagonal(
        x in vec_of(4),
        y in vec_of(4),
        p in 0.0..3.0f64,
    ) {
        let (x, y) = (Vector::from_vec(x), Vector::from_vec(y));
        for dgf in [DistanceGenerator::Euclidean, DistanceGenerator::polynorm(p).unwrap()] {
            prop_assert!(dgf.bregman(&y, &x).unwrap() >= -1e-12);
            prop_assert!(dgf.bregman(&x, &x).unwrap().abs() <= 1e-12);
        }
        let (a, b) = (simplex_point(x.as_slice().to_vec()), simplex_point(y.as_slice().to_vec()));
        let ent = DistanceGenerator::SimplexEntropy { dim: 4 };
        prop_assert!(ent.bregman(&b, &a).unwrap() >= -1e-12);
    }

    #[test]
    fn measures_vanish_only_at_stationary_points(x in vec_of(3)) {
        let inst = make_quadratic_l1(
            Curvature::Diagonal(vec![1.0, 2.0, 0.5]),
            None,
            0.0,
            FeasibleSet::AllSpace,
        )
        .unwrap();
        let x = Vector::from_vec(x);
        let r = fosp::report(&x, 4.0 * inst.ell, &inst).unwrap();
        prop_assert!(r.bfbe >= 0.0 && r.bgm >= 0.0 && r.bpm >= 0.0);
        let zero = Vector::zeros(3);
        prop_assert!(fosp::bfbe(&zero, 4.0 * inst.ell, &inst).unwrap() <= 1e-14);
        if x.norm() > 1e-3 {
            prop_assert!(r.bfbe > 0.0);
        }
    }

    #[test]
    fn mirror_steps_stay_feasible(x in vec_of(3), g in vec_of(3), eta in 0.01..10.0f64) {
        let set = FeasibleSet::new_box(Vector::from_element(3, -1.0), Vector::from_element(3, 1.0)).unwrap();
        let inst = make_quadratic_l1(Curvature::Diagonal(vec![1.0; 3]), None, 0.1, set)
            .unwrap()
            .with_geometry(DistanceGenerator::polynorm(2.0).unwrap(), 1.0)
            .unwrap();
        let x = Vector::from_iterator(3, x.iter().map(|v| v.clamp(-1.0, 1.0)));
        let y = prox::mirror_step(&x, &Vector::from_vec(g), eta, &inst).unwrap().point;
        prop_assert!(y.iter().all(|v| (-1.0..=1.0).contains(v)));
    }
}

#[test]
fn zero_gradient_step_is_a_fixed_point_without_a_regularizer() {
    let inst = random_simplex_quadratic(2, 0).unwrap();
    let x = Vector::from_vec(vec![0.3, 0.7]);
    let y = prox::mirror_step(&x, &Vector::zeros(2), 0.5, &inst)
        .unwrap()
        .point;
    assert!((y - x).norm() < 1e-14);
}
