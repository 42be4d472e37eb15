use alloc::vec;
use alloc::vec::Vec;

use proptest::prelude::*;

use super::graph::{self as bg, InverseForm};
use super::*;
use crate::autodiff::{Graph, Mode};
use crate::testutil::{rand_cmat, rng};

/// Scalar re-evaluation of the SINR from individual complex products.
fn scalar_sinr(h: &CMat, w: &CMat, n0: f64, k: usize) -> f64 {
    let mut terms = Vec::new();
    for j in 0..w.cols() {
        let mut re = 0.0;
        let mut im = 0.0;
        for i in 0..h.rows() {
            let a = h[(i, k)];
            let b = w[(i, j)];
            re += a.re * b.re + a.im * b.im;
            im += a.re * b.im - a.im * b.re;
        }
        terms.push(re * re + im * im);
    }
    let others: f64 = terms.iter().enumerate().filter(|(j, _)| *j != k).map(|(_, t)| t).sum();
    terms[k] / (others + n0)
}

fn col(v: &[(f64, f64)]) -> CMat {
    CMat::from_vec(v.len(), 1, v.iter().map(|(a, b)| C64::new(*a, *b)).collect()).unwrap()
}

#[test]
fn sinr_single_user() {
    let h = col(&[(1.0, 0.0), (0.0, 0.0)]);
    let w = col(&[(2.0, 0.0), (0.0, 0.0)]);
    assert_eq!(sinr(&h, &w, 1.0, 0), 4.0);
    assert!((sum_rate(&h, &w, 1.0) - 5f64.log2()).abs() < 1e-12);
    assert!((sum_rate(&h, &w, 1.0) - 2.3219).abs() < 1e-4);
}

#[test]
fn orthogonal_users_do_not_interfere() {
    let h = CMat::identity(2);
    let w = CMat::identity(2).scale_re(3.0);
    assert_eq!(sinr(&h, &w, 1.0, 0), 9.0);
    assert_eq!(sinr(&h, &w, 1.0, 1), 9.0);
}

#[test]
fn zero_beams_give_zero_rate() {
    let h = rand_cmat(&mut rng(1), 3, 3);
    assert_eq!(sum_rate(&h, &CMat::zeros(3, 3), 1.0), 0.0);
}

#[test]
fn sinr_matches_scalar_evaluation() {
    let mut r = rng(2);
    for _ in 0..20 {
        let h = rand_cmat(&mut r, 3, 3);
        let w = rand_cmat(&mut r, 3, 3);
        let mut total = 0.0;
        for k in 0..3 {
            let a = sinr(&h, &w, 0.7, k);
            let b = scalar_sinr(&h, &w, 0.7, k);
            assert!((a - b).abs() <= 1e-12 * b.max(1.0));
            total += (1.0 + b).log2();
        }
        assert!((sum_rate(&h, &w, 0.7) - total).abs() < 1e-12);
    }
}

#[test]
fn reconstruct_single_user_is_matched() {
    let h = rand_cmat(&mut rng(3), 4, 1);
    for q in [0.0, 3.0] {
        let pair = PowerPair {
            p: vec![3.0],
            q: vec![q],
            budget: 3.0,
        };
        for weighting in [DirectionWeighting::PerInterferer, DirectionWeighting::PerUser] {
            let w = reconstruct_with(&h, &pair, 0.5, weighting).unwrap();
            let mf = matched_filter(&h, 3.0);
            assert!(w.sub(&mf).max_abs() < 1e-10);
        }
    }
}

#[test]
fn reconstruct_zero_q_is_matched_filter() {
    let h = rand_cmat(&mut rng(4), 4, 3);
    let pair = PowerPair {
        p: vec![1.0, 2.0, 3.0],
        q: vec![0.0; 3],
        budget: 6.0,
    };
    let w = reconstruct(&h, &pair, 1.0).unwrap();
    for k in 0..3 {
        let hk = h.col(k);
        let s = (pair.p[k] / norm_sqr(&hk)).sqrt();
        for i in 0..4 {
            assert!((w[(i, k)] - hk[i] * s).norm() < 1e-10);
        }
    }
}

#[test]
fn power_pair_validation() {
    assert!(PowerPair::new(vec![1.0, 1.0], vec![2.0, 0.0], 2.0).is_ok());
    assert!(PowerPair::new(vec![1.0, 1.5], vec![2.0, 0.0], 2.0).is_err());
    assert!(PowerPair::new(vec![-1.0, 3.0], vec![2.0, 0.0], 2.0).is_err());
    assert!(PowerPair::new(vec![1.0], vec![2.0, 0.0], 2.0).is_err());
}

#[test]
fn zf_orthonormal_columns() {
    let q = random_unitary_cols(4, 2, 5);
    let w = zf(&q, 8.0).unwrap();
    assert!(w.sub(&q.scale_re(2.0)).max_abs() < 1e-10);
}

fn random_unitary_cols(n: usize, k: usize, seed: u64) -> CMat {
    let (q, _) = rand_cmat(&mut rng(seed), n, n).qr().unwrap();
    q.col_range(0, k)
}

#[test]
fn zf_single_user_is_matched_filter() {
    let h = rand_cmat(&mut rng(6), 5, 1);
    let w = zf(&h, 2.0).unwrap();
    assert!(w.sub(&matched_filter(&h, 2.0)).max_abs() < 1e-12);
}

#[test]
fn zf_rejects_rank_deficient() {
    let c = rand_cmat(&mut rng(7), 4, 1).col(0);
    let h = CMat::from_columns(&[c.clone(), c]);
    assert!(matches!(zf(&h, 1.0), Err(Error::SingularMatrix { .. })));
    assert!(matches!(reduce_dimension(&h), Err(Error::RankDeficient { .. })));
}

#[test]
fn reduce_orthonormal_gives_unitary() {
    let q = random_unitary_cols(6, 3, 8);
    let red = reduce_dimension(&q).unwrap();
    for l in &red.eigenvalues {
        assert!((l - 1.0).abs() < 1e-10);
    }
    let gg = red.g.adjoint().matmul(&red.g).unwrap();
    assert!(gg.sub(&CMat::identity(3)).max_abs() < 1e-10);
}

#[test]
fn reduced_rate_equals_full_rate() {
    let mut r = rng(9);
    for _ in 0..100 {
        let h = rand_cmat(&mut r, 16, 4);
        let v = rand_cmat(&mut r, 4, 4);
        let red = reduce_dimension(&h).unwrap();
        let gg = red.g.gram();
        assert!(gg.sub(&h.gram()).max_abs() < 1e-9);
        let w = red.lift(&v).unwrap();
        let full = sum_rate(&h, &w, 1.0);
        let reduced = sum_rate_reduced(&red.g, &v, 1.0);
        assert!((full - reduced).abs() < 1e-9);
        assert!((w.frob_norm() - v.frob_norm()).abs() < 1e-9);
    }
}

#[test]
fn reduced_reconstruction_matches_full() {
    let mut r = rng(10);
    let h = rand_cmat(&mut r, 8, 3);
    let pair = PowerPair::new(vec![1.0, 2.0, 3.0], vec![3.0, 2.0, 1.0], 6.0).unwrap();
    let red = reduce_dimension(&h).unwrap();
    for weighting in [DirectionWeighting::PerInterferer, DirectionWeighting::PerUser] {
        let a = reconstruct_with(&h, &pair, 0.3, weighting).unwrap();
        let b = red.reconstruct(&pair, 0.3, weighting).unwrap();
        assert!(a.sub(&b).max_abs() < 1e-9);
    }
}

#[test]
fn slnr_single_user_equals_sinr() {
    let h = rand_cmat(&mut rng(11), 3, 1);
    let w = rand_cmat(&mut rng(12), 3, 1);
    assert!((slnr(&h, &w.col(0), 0, 0.4) - sinr(&h, &w, 0.4, 0)).abs() < 1e-14);
}

#[test]
fn slnr_orthogonal_leakage() {
    let h = CMat::identity(3);
    let w = vec![C64::new(2.0, 0.0), ZERO_C, ZERO_C];
    assert!((slnr(&h, &w, 0, 0.5) - 8.0).abs() < 1e-14);
}

const ZERO_C: C64 = C64::new(0.0, 0.0);

#[test]
fn slnr_matches_scalar_evaluation() {
    let mut r = rng(13);
    let layout = CellLayout { n_cells: 2, k: 2 };
    for _ in 0..10 {
        let h = rand_cmat(&mut r, 3, layout.k_total());
        let w = rand_cmat(&mut r, 3, 1);
        for u in 0..layout.k_total() {
            let mut sig = 0.0;
            let mut leak = 0.0;
            for v in 0..layout.k_total() {
                let mut z = ZERO_C;
                for i in 0..3 {
                    z += h[(i, v)].conj() * w[(i, 0)];
                }
                if v == u {
                    sig = z.norm_sqr();
                } else {
                    leak += z.norm_sqr();
                }
            }
            let want = sig / (leak + 0.2);
            assert!((slnr(&h, &w.col(0), u, 0.2) - want).abs() <= 1e-12 * want.max(1.0));
        }
    }
}

#[test]
fn slnr_beamformer_limits() {
    let h = rand_cmat(&mut rng(14), 4, 3);
    let d = slnr_direction(&h, 0.0, 1, 1.0).unwrap();
    let hk = h.col(1);
    let n = norm(&hk);
    for (a, b) in d.iter().zip(&hk) {
        assert!((*a - *b / n).norm() < 1e-12);
    }
    let single = rand_cmat(&mut rng(15), 4, 1);
    let w = slnr_beamformer(&single, 2.0, 0, 1.0).unwrap();
    let mf = matched_filter(&single, 2.0).col(0);
    for (a, b) in w.iter().zip(&mf) {
        assert!((*a - *b).norm() < 1e-12);
    }
}

#[test]
fn multicell_sinr_single_cell_is_plain_sinr() {
    let mut r = rng(16);
    let h = rand_cmat(&mut r, 3, 2);
    let w = rand_cmat(&mut r, 3, 2);
    let layout = CellLayout { n_cells: 1, k: 2 };
    for u in 0..2 {
        let a = multicell_sinr(core::slice::from_ref(&h), core::slice::from_ref(&w), layout, u, 0.3);
        assert!((a - sinr(&h, &w, 0.3, u)).abs() < 1e-14);
    }
}

#[test]
fn multicell_zero_cross_channels_split_per_cell() {
    let mut r = rng(17);
    let layout = CellLayout { n_cells: 2, k: 2 };
    let mut downlink = Vec::new();
    let mut beams = Vec::new();
    let mut locals = Vec::new();
    for j in 0..2 {
        let local = rand_cmat(&mut r, 3, 2);
        let mut h = CMat::zeros(3, 4);
        for (m, u) in layout.users_of(j).enumerate() {
            h.set_col(u, &local.col(m));
        }
        downlink.push(h);
        beams.push(rand_cmat(&mut r, 3, 2));
        locals.push(local);
    }
    let total = multicell_sum_rate(&downlink, &beams, layout, 0.5);
    let per_cell: f64 = (0..2).map(|j| sum_rate(&locals[j], &beams[j], 0.5)).sum();
    assert!((total - per_cell).abs() < 1e-12);
}

#[test]
fn multicell_sinr_matches_expansion() {
    let mut r = rng(18);
    let layout = CellLayout { n_cells: 2, k: 2 };
    let downlink: Vec<CMat> = (0..2).map(|_| rand_cmat(&mut r, 2, 4)).collect();
    let beams: Vec<CMat> = (0..2).map(|_| rand_cmat(&mut r, 2, 2)).collect();
    for u in 0..4 {
        let (own, local) = (u / 2, u % 2);
        let mut sig = 0.0;
        let mut intf = 0.0;
        for j in 0..2 {
            for m in 0..2 {
                let z = downlink[j][(0, u)].conj() * beams[j][(0, m)] + downlink[j][(1, u)].conj() * beams[j][(1, m)];
                if j == own && m == local {
                    sig = z.norm_sqr();
                } else {
                    intf += z.norm_sqr();
                }
            }
        }
        let want = sig / (intf + 0.1);
        let got = multicell_sinr(&downlink, &beams, layout, u, 0.1);
        assert!((got - want).abs() <= 1e-12 * want.max(1.0));
    }
}

#[test]
fn slnr_beams_ignore_other_cells_inputs() {
    let mut r = rng(19);
    let layout = CellLayout { n_cells: 2, k: 2 };
    let h0 = rand_cmat(&mut r, 4, 4);
    let a = slnr_cell_beams(&h0, layout, 0, &[1.0, 2.0], 0.5).unwrap();
    let _other_cell = rand_cmat(&mut r, 4, 4);
    let b = slnr_cell_beams(&h0, layout, 0, &[1.0, 2.0], 0.5).unwrap();
    assert_eq!(a, b);
}

fn random_pair(r: &mut rand_chacha::ChaCha8Rng, k: usize, budget: f64) -> PowerPair {
    use rand::Rng;
    let mut draw = || {
        let v: Vec<f64> = (0..k).map(|_| r.random::<f64>() + 0.05).collect();
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x * budget / s).collect::<Vec<_>>()
    };
    let p = draw();
    let q = draw();
    PowerPair { p, q, budget }
}

#[test]
fn graph_twins_match() {
    let mut r = rng(20);
    let (b, n, k) = (5, 4, 3);
    let hs: Vec<CMat> = (0..b).map(|_| rand_cmat(&mut r, n, k)).collect();
    let pairs: Vec<PowerPair> = (0..b).map(|_| random_pair(&mut r, k, 10.0)).collect();
    let n0 = 0.8;
    for weighting in [DirectionWeighting::PerInterferer, DirectionWeighting::PerUser] {
        for form in [InverseForm::Full, InverseForm::Reduced] {
            let mut g = Graph::new(Mode::Eval, 0);
            let h = bg::input_batch(&mut g, &hs).unwrap();
            let p = bg::input_powers(&mut g, &pairs.iter().map(|x| x.p.clone()).collect::<Vec<_>>()).unwrap();
            let q = bg::input_powers(&mut g, &pairs.iter().map(|x| x.q.clone()).collect::<Vec<_>>()).unwrap();
            let w = bg::reconstruct(&mut g, h, p, q, n0, weighting, form).unwrap();
            let rate = bg::sum_rate(&mut g, h, w, n0).unwrap();
            for s in 0..b {
                let want = reconstruct_with(&hs[s], &pairs[s], n0, weighting).unwrap();
                let got = g.value(w).matrix(s);
                assert!(got.sub(&want).max_abs() < 1e-10, "{weighting:?} {form:?}");
                let rw = sum_rate(&hs[s], &want, n0);
                assert!((g.value(rate).data()[s].re - rw).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn graph_zf_matches() {
    let mut r = rng(21);
    let hs: Vec<CMat> = (0..4).map(|_| rand_cmat(&mut r, 4, 2)).collect();
    let mut g = Graph::new(Mode::Eval, 0);
    let h = bg::input_batch(&mut g, &hs).unwrap();
    let w = bg::zf(&mut g, h, 5.0).unwrap();
    for (s, hm) in hs.iter().enumerate() {
        let want = zf(hm, 5.0).unwrap();
        assert!(g.value(w).matrix(s).sub(&want).max_abs() < 1e-10);
    }
}

#[test]
fn graph_slnr_matches() {
    let mut r = rng(22);
    let layout = CellLayout { n_cells: 3, k: 2 };
    let hs: Vec<CMat> = (0..3).map(|_| rand_cmat(&mut r, 4, layout.k_total())).collect();
    let ps: Vec<Vec<f64>> = (0..3).map(|_| random_pair(&mut r, 2, 3.0).p).collect();
    for form in [InverseForm::Full, InverseForm::Reduced] {
        let mut g = Graph::new(Mode::Eval, 0);
        let h = bg::input_batch(&mut g, &hs).unwrap();
        let p = bg::input_powers(&mut g, &ps).unwrap();
        let w = bg::slnr_beams(&mut g, h, p, 0.2, form).unwrap();
        let rate = bg::slnr_sum_rate(&mut g, h, w, 0.2).unwrap();
        for s in 0..3 {
            let want = slnr_cell_beams(&hs[s], layout, 0, &ps[s], 0.2).unwrap();
            assert!(g.value(w).matrix(s).sub(&want).max_abs() < 1e-10);
            let rw = cell_slnr_rate(&hs[s], &want, layout, 0, 0.2);
            assert!((g.value(rate).data()[s].re - rw).abs() < 1e-10);
        }
    }
}

#[test]
fn graph_single_user_rate_gradient() {
    let h = rand_cmat(&mut rng(23), 3, 1);
    let n0 = 0.5;
    let p1 = 2.0;
    let mut g = Graph::new(Mode::Train, 0);
    let hn = bg::input_batch(&mut g, core::slice::from_ref(&h)).unwrap();
    let p = g.variable(crate::autodiff::CTensor::from_real(&[1, 1], vec![p1]).unwrap());
    let q = bg::input_powers(&mut g, &[vec![p1]]).unwrap();
    let w = bg::reconstruct(&mut g, hn, p, q, n0, DirectionWeighting::default(), InverseForm::Full).unwrap();
    let rate = bg::sum_rate(&mut g, hn, w, n0).unwrap();
    let loss = g.sum_all(rate).unwrap();
    let grads = g.backward(loss).unwrap();
    let h2 = h.frob_norm_sqr();
    let want = h2 / n0 / ((1.0 + p1 * h2 / n0) * core::f64::consts::LN_2);
    let got = grads.get(p).unwrap().data()[0].re;
    assert!((got - want).abs() < 1e-10);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn reconstruct_meets_budget(seed in 0u64..10_000, k in 1usize..5, extra in 0usize..3) {
        let mut r = rng(seed);
        let h = rand_cmat(&mut r, k + extra, k);
        let pair = random_pair(&mut r, k, 7.0);
        let w = reconstruct(&h, &pair, 0.9).unwrap();
        prop_assert!((total_power(&w) - 7.0).abs() < 1e-8);
        for (a, b) in column_powers(&w).iter().zip(&pair.p) {
            prop_assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn reconstruct_direction_scale_invariant(seed in 0u64..10_000, t in 0.1f64..10.0) {
        let mut r = rng(seed);
        let h = rand_cmat(&mut r, 4, 3);
        let pair = random_pair(&mut r, 3, 5.0);
        let scaled = PowerPair { p: pair.p.clone(), q: pair.q.iter().map(|x| x * t).collect(), budget: pair.budget * t };
        for weighting in [DirectionWeighting::PerInterferer, DirectionWeighting::PerUser] {
            let a = reconstruct_with(&h, &pair, 0.6, weighting).unwrap();
            let b = reconstruct_with(&h, &scaled, 0.6 * t, weighting).unwrap();
            prop_assert!(a.sub(&b).max_abs() < 1e-9);
        }
    }

    #[test]
    fn zf_nulls_cross_terms(seed in 0u64..10_000, k in 1usize..5, extra in 0usize..3) {
        let mut r = rng(seed);
        let h = rand_cmat(&mut r, k + extra, k);
        let w = zf(&h, 3.0).unwrap();
        prop_assert!((total_power(&w) - 3.0).abs() < 1e-9);
        let m = h.adjoint().matmul(&w).unwrap();
        for i in 0..k {
            for j in 0..k {
                if i != j {
                    let bound = 1e-9 * norm(&h.col(i)) * norm(&w.col(j));
                    prop_assert!(m[(i, j)].norm() < bound);
                }
            }
        }
    }

    #[test]
    fn lift_preserves_norm(seed in 0u64..10_000) {
        let mut r = rng(seed);
        let h = rand_cmat(&mut r, 6, 3);
        let red = reduce_dimension(&h).unwrap();
        let v = rand_cmat(&mut r, 3, 1);
        let w = red.lift(&v).unwrap();
        prop_assert!((w.frob_norm() - v.frob_norm()).abs() < 1e-9);
    }
}
