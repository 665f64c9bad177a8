//! Randomized invariants over the linear-algebra kernel and the physics
//! layer.

use lzsim::dynamics::Trajectory;
use lzsim::model::{h_total, ModelParams};
use lzsim::output::fmt_f64;
use lzsim::qcore::{eigh, expm_unitary, kron, partial_trace_spectator_state, purity, ComplexMatrix, QuantumState};
use lzsim::sweep::optimize_tf;
use num_complex::Complex64;
use proptest::prelude::*;

fn c64() -> impl Strategy<Value = Complex64> {
    (-1.0f64..1.0, -1.0f64..1.0).prop_map(|(re, im)| Complex64::new(re, im))
}

fn square(n: usize) -> impl Strategy<Value = ComplexMatrix> {
    prop::collection::vec(c64(), n * n)
        .prop_map(move |v| ComplexMatrix::from_vec(n, n, v).unwrap())
}

fn hermitian(n: usize) -> impl Strategy<Value = ComplexMatrix> {
    square(n).prop_map(|a| {
        let ad = a.dagger();
        a.add(&ad).scale(Complex64::new(0.5, 0.0))
    })
}

fn norm_max(a: &ComplexMatrix) -> f64 {
    let mut m = 0.0f64;
    for i in 0..a.rows() {
        for j in 0..a.cols() {
            m = m.max(a[(i, j)].norm());
        }
    }
    m
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn eigh_reconstructs_and_orders(h in hermitian(4)) {
        let eig = eigh(&h).unwrap();
        prop_assert!(eig.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
        // V diag(L) V^dagger == H
        let n = 4;
        let mut rebuilt = ComplexMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let mut acc = Complex64::new(0.0, 0.0);
                for k in 0..n {
                    acc += eig.eigenvectors[(i, k)]
                        * Complex64::new(eig.eigenvalues[k], 0.0)
                        * eig.eigenvectors[(j, k)].conj();
                }
                rebuilt[(i, j)] = acc;
            }
        }
        let dev = norm_max(&rebuilt.sub(&h));
        prop_assert!(dev < 1e-11 * (1.0 + norm_max(&h)), "reconstruction dev {dev}");
    }

    #[test]
    fn expm_is_unitary_and_additive(h in hermitian(3), t1 in -2.0f64..2.0, t2 in -2.0f64..2.0) {
        let u1 = expm_unitary(&h, t1).unwrap();
        let udu = u1.dagger().matmul(&u1);
        let dev = norm_max(&udu.sub(&ComplexMatrix::identity(3)));
        prop_assert!(dev < 1e-12, "unitarity defect {dev}");
        let u2 = expm_unitary(&h, t2).unwrap();
        let u12 = expm_unitary(&h, t1 + t2).unwrap();
        let dev2 = norm_max(&u1.matmul(&u2).sub(&u12));
        prop_assert!(dev2 < 1e-11, "additivity defect {dev2}");
    }

    #[test]
    fn kron_dimensions_and_mixed_product(a in square(2), b in square(2), c in square(2), d in square(2)) {
        // (A kron B)(C kron D) == (AC) kron (BD)
        let lhs = kron(&a, &b).unwrap().matmul(&kron(&c, &d).unwrap());
        let rhs = kron(&a.matmul(&c), &b.matmul(&d)).unwrap();
        let dev = norm_max(&lhs.sub(&rhs));
        prop_assert!(dev < 1e-12, "mixed product defect {dev}");
    }

    #[test]
    fn partial_trace_is_unit_trace_and_bounded(v in prop::collection::vec(c64(), 8)) {
        let n: f64 = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        prop_assume!(n > 1e-3);
        let state = QuantumState::normalized(v.iter().map(|z| z / n).collect()).unwrap();
        let rho = partial_trace_spectator_state(&state, 4).unwrap();
        let tr = rho.matrix().trace();
        prop_assert!((tr.re - 1.0).abs() < 1e-12 && tr.im.abs() < 1e-12);
        let g = purity(&rho);
        prop_assert!(g > 0.5 - 1e-12 && g < 1.0 + 1e-12, "purity {g}");
    }

    #[test]
    fn spectrum_is_symmetric_in_time(x0 in 0.0f64..3.0, wc in 0.0f64..3.0, t in 0.0f64..8.0) {
        let p = ModelParams::new(1.0, 2.0, x0, wc);
        let plus = eigh(&h_total(t, &p)).unwrap().eigenvalues;
        let minus = eigh(&h_total(-t, &p)).unwrap().eigenvalues;
        for (a, b) in plus.iter().zip(&minus) {
            prop_assert!((a - b).abs() < 1e-10, "asymmetry {} vs {}", a, b);
        }
    }

    #[test]
    fn fmt_f64_round_trips(bits in any::<u64>()) {
        let v = f64::from_bits(bits);
        prop_assume!(v.is_finite());
        let s = fmt_f64(v);
        prop_assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits());
    }

    #[test]
    fn optimize_tf_stays_in_window(vals in prop::collection::vec(0.0f64..1.0, 50..200), half in 0.5f64..5.0) {
        let n = vals.len();
        let times: Vec<f64> = (0..n).map(|k| k as f64 * 0.1).collect();
        let target = times[n / 2];
        let traj = Trajectory {
            times: times.clone(),
            p_of_t: vals,
            purity_of_t: vec![1.0; n],
            renyi_of_t: vec![0.0; n],
            norm_defect: vec![0.0; n],
            snapshots: None,
        };
        let opt = optimize_tf(&traj, target, half);
        prop_assert!(opt.p_min >= 0.0 && opt.p_min <= 1.0 + 1e-12);
        if !opt.monotone_window {
            prop_assert!((opt.t_f - target).abs() <= half + 0.1, "t_f {} target {}", opt.t_f, target);
        } else {
            prop_assert_eq!(opt.t_f, target);
        }
    }
}
