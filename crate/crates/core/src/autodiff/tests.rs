use alloc::vec;
use alloc::vec::Vec;

use super::*;
use crate::linalg::CMat;
use crate::testutil::{rand_cmat, rng};
use rand::Rng;

type Build = dyn Fn(&mut Graph, &[NodeId]) -> Result<NodeId>;

fn eval(inputs: &[CTensor], build: &Build) -> f64 {
    let mut g = Graph::new(Mode::Train, 11);
    let ids: Vec<NodeId> = inputs.iter().map(|t| g.variable(t.clone())).collect();
    let out = build(&mut g, &ids).unwrap();
    g.value(out).item()
}

/// Central finite differences over every real coordinate of every input,
/// compared against the backward pass.
fn check_grad(inputs: &[CTensor], build: &Build) -> f64 {
    let mut g = Graph::new(Mode::Train, 11);
    let ids: Vec<NodeId> = inputs.iter().map(|t| g.variable(t.clone())).collect();
    let out = build(&mut g, &ids).unwrap();
    let grads = g.backward(out).unwrap();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for (n, t) in inputs.iter().enumerate() {
        let analytic = grads.get(ids[n]).unwrap();
        for i in 0..t.len() {
            let parts: &[bool] = if t.is_real() { &[false] } else { &[false, true] };
            for &imag in parts {
                let bump = |d: f64| {
                    let mut ins = inputs.to_vec();
                    let z = &mut ins[n].data_mut()[i];
                    if imag {
                        z.im += d;
                    } else {
                        z.re += d;
                    }
                    eval(&ins, build)
                };
                let fd = (bump(h) - bump(-h)) / (2.0 * h);
                let an = if imag {
                    analytic.data()[i].im
                } else {
                    analytic.data()[i].re
                };
                let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1.0);
                worst = worst.max(rel);
            }
        }
    }
    worst
}

fn rand_c(seed: u64, shape: &[usize]) -> CTensor {
    let mut r = rng(seed);
    let n: usize = shape.iter().product();
    let m = rand_cmat(&mut r, 1, n);
    CTensor::from_complex(shape, m.into_vec()).unwrap()
}

fn rand_r(seed: u64, shape: &[usize]) -> CTensor {
    let mut r = rng(seed);
    let n: usize = shape.iter().product();
    CTensor::from_real(shape, (0..n).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap()
}

fn real_loss(g: &mut Graph, x: NodeId) -> Result<NodeId> {
    // Σ|x|² weighted by a fixed pattern so that every entry matters differently
    let a = g.abs2(x)?;
    let n = g.value(a).len();
    let w = CTensor::from_real(g.value(a).shape(), (0..n).map(|i| 0.3 + 0.1 * i as f64).collect())?;
    let w = g.input(w);
    let p = g.mul(a, w)?;
    g.sum_all(p)
}

const TOL: f64 = 1e-4;

#[test]
fn quadratic_gradient() {
    let x = CTensor::from_complex(&[2], vec![C64::new(1.0, 0.0), ZERO]).unwrap();
    let mut g = Graph::new(Mode::Eval, 0);
    let v = g.variable(x);
    let a = g.abs2(v).unwrap();
    let l = g.sum_all(a).unwrap();
    let gr = g.backward(l).unwrap();
    let d = gr.get(v).unwrap().data();
    assert_eq!(d[0], C64::new(2.0, 0.0));
    assert_eq!(d[1], ZERO);
}

#[test]
fn inverse_trace_gradient() {
    let a = CTensor::from_complex(&[1, 1], vec![C64::new(2.0, 0.0)]).unwrap();
    let mut g = Graph::new(Mode::Eval, 0);
    let v = g.variable(a);
    let inv = g.inverse(v).unwrap();
    let d = g.diag(inv).unwrap();
    let s = g.sum_all(d).unwrap();
    let l = g.real_part(s).unwrap();
    let gr = g.backward(l).unwrap();
    assert!((gr.get(v).unwrap().data()[0].re + 0.25).abs() < 1e-15);
}

#[test]
fn non_scalar_loss_is_rejected() {
    let mut g = Graph::new(Mode::Eval, 0);
    let v = g.variable(rand_r(1, &[3]));
    assert!(matches!(g.backward(v), Err(Error::NotScalar)));
    let c = g.variable(CTensor::from_complex(&[], vec![C64::new(1.0, 1.0)]).unwrap());
    assert!(matches!(g.backward(c), Err(Error::NotScalar)));
}

#[test]
fn unconnected_variable_has_zero_gradient() {
    let mut g = Graph::new(Mode::Eval, 0);
    let a = g.variable(rand_r(1, &[3]));
    let b = g.variable(rand_r(2, &[3]));
    let l = g.sum_all(a).unwrap();
    let gr = g.backward(l).unwrap();
    assert!(gr.get(b).unwrap().data().iter().all(|z| *z == ZERO));
}

#[test]
fn matmul_inverse_norm_chain() {
    let a = rand_c(1, &[3, 3]);
    let b = rand_c(2, &[3, 2]);
    let err = check_grad(&[a, b], &|g, x| {
        let ah = g.adjoint(x[0])?;
        let m = g.matmul(ah, x[0])?;
        let m = g.add_scalar(m, 0.0)?;
        let eye = g.input(CTensor::from_cmat(&CMat::identity(3)));
        let m = g.add(m, eye)?;
        let inv = g.inverse(m)?;
        let y = g.matmul(inv, x[1])?;
        let y = g.matmul(x[0], y)?;
        g.norm(y)
    });
    assert!(err < TOL, "{err}");
}

#[test]
fn batched_matmul_with_broadcast() {
    let a = rand_c(3, &[2, 3, 2]);
    let b = rand_c(4, &[2, 2]);
    let err = check_grad(&[a, b], &|g, x| {
        let y = g.matmul(x[0], x[1])?;
        real_loss(g, y)
    });
    assert!(err < TOL, "{err}");
    let a = rand_c(5, &[2, 2]);
    let b = rand_c(6, &[3, 2, 2]);
    let err = check_grad(&[a, b], &|g, x| {
        let y = g.matmul(x[0], x[1])?;
        real_loss(g, y)
    });
    assert!(err < TOL, "{err}");
}

#[test]
fn batched_inverse_gradient() {
    let mut a = rand_c(7, &[2, 3, 3]);
    for b in 0..2 {
        for i in 0..3 {
            a.data_mut()[b * 9 + i * 4] += C64::new(2.0, 0.0);
        }
    }
    let err = check_grad(&[a], &|g, x| {
        let inv = g.inverse(x[0])?;
        real_loss(g, inv)
    });
    assert!(err < TOL, "{err}");
}

#[test]
fn elementwise_ops() {
    let a = rand_c(8, &[4]);
    let mut b = rand_c(9, &[4]);
    for z in b.data_mut() {
        *z += C64::new(2.0, 0.0);
    }
    let err = check_grad(&[a.clone(), b.clone()], &|g, x| {
        let m = g.mul(x[0], x[1])?;
        let d = g.div(m, x[1])?;
        let d = g.div(x[0], d)?;
        let s = g.sub(d, x[0])?;
        let s = g.scale(s, 1.7)?;
        let c = g.conj(s)?;
        let t = g.transpose(c)?;
        real_loss(g, t)
    });
    assert!(err < TOL, "{err}");
}

#[test]
fn broadcast_ops() {
    let a = rand_c(10, &[2, 3, 2]);
    let b = rand_c(11, &[3, 2]);
    let s = rand_c(12, &[2, 3]);
    let err = check_grad(&[a, b, s], &|g, x| {
        let y = g.add_bcast(x[0], x[1])?;
        let y = g.mul_bcast(y, x[2])?;
        real_loss(g, y)
    });
    assert!(err < TOL, "{err}");
}

#[test]
fn real_nonlinearities() {
    let mut a = rand_r(13, &[3, 4]);
    for z in a.data_mut() {
        // keep away from the relu kink
        if z.re.abs() < 0.05 {
            z.re += 0.2;
        }
    }
    let err = check_grad(&[a.clone()], &|g, x| {
        let t = g.tanh(x[0])?;
        let r = g.relu(x[0])?;
        let s = g.softmax(x[0])?;
        let c = g.concat(&[t, r, s])?;
        let sl = g.slice_last(c, 2, 7)?;
        real_loss(g, sl)
    });
    assert!(err < TOL, "{err}");
    let pos = CTensor::from_real(&[3], vec![0.5, 1.2, 3.0]).unwrap();
    let err = check_grad(&[pos], &|g, x| {
        let l = g.log(x[0])?;
        let q = g.sqrt(x[0])?;
        let y = g.mul(l, q)?;
        g.sum_all(y)
    });
    assert!(err < TOL, "{err}");
}

#[test]
fn complex_views_and_reductions() {
    let re = rand_r(14, &[2, 3]);
    let im = rand_r(15, &[2, 3]);
    let err = check_grad(&[re, im], &|g, x| {
        let z = g.complex(x[0], x[1])?;
        let zz = g.mul(z, z)?;
        let r = g.real_part(zz)?;
        let i = g.imag_part(zz)?;
        let c = g.concat(&[r, i])?;
        let s = g.sum_last(c)?;
        let e = g.expand(s, 1, 3)?;
        let e = g.reshape(e, &[6])?;
        real_loss(g, e)
    });
    assert!(err < TOL, "{err}");
}

#[test]
fn batch_norm_train_and_eval() {
    let x = rand_r(16, &[5, 3]);
    let gamma = rand_r(17, &[3]);
    let beta = rand_r(18, &[3]);
    let err = check_grad(&[x.clone(), gamma.clone(), beta.clone()], &|g, v| {
        let y = g.batch_norm(v[0], v[1], v[2], &[0.0; 3], &[1.0; 3])?;
        let y = g.tanh(y)?;
        real_loss(g, y)
    });
    assert!(err < TOL, "{err}");

    let mut g = Graph::new(Mode::Eval, 0);
    let xv = g.variable(x);
    let gv = g.variable(gamma);
    let bv = g.variable(beta);
    let y = g.batch_norm(xv, gv, bv, &[0.1, 0.2, 0.3], &[1.0, 2.0, 0.5]).unwrap();
    let l = real_loss(&mut g, y).unwrap();
    assert!(g.batch_norm_stats(y).is_none());
    g.backward(l).unwrap();
}

#[test]
fn batch_norm_output_is_standardized() {
    let x = rand_r(19, &[50, 2]);
    let mut g = Graph::new(Mode::Train, 0);
    let xv = g.input(x);
    let one = g.input(CTensor::from_real(&[2], vec![1.0, 1.0]).unwrap());
    let zero = g.input(CTensor::zeros(&[2]));
    let y = g.batch_norm(xv, one, zero, &[], &[]).unwrap();
    let ys = g.value(y).re();
    for j in 0..2 {
        let col: Vec<f64> = ys.iter().skip(j).step_by(2).copied().collect();
        let m: f64 = col.iter().sum::<f64>() / 50.0;
        let v: f64 = col.iter().map(|c| (c - m) * (c - m)).sum::<f64>() / 50.0;
        assert!(m.abs() < 1e-12);
        assert!((v - 1.0).abs() < 1e-3);
    }
}

#[test]
fn dropout_gradient_uses_mask() {
    let x = rand_r(20, &[4, 6]);
    let err = check_grad(core::slice::from_ref(&x), &|g, v| {
        let y = g.dropout(v[0], 0.3)?;
        real_loss(g, y)
    });
    assert!(err < TOL, "{err}");
    let mut g = Graph::new(Mode::Eval, 0);
    let v = g.input(x);
    assert_eq!(g.dropout(v, 0.3).unwrap(), v);
}

#[test]
fn dropout_is_seeded() {
    let x = rand_r(21, &[64]);
    let run = |seed| {
        let mut g = Graph::new(Mode::Train, seed);
        let v = g.input(x.clone());
        let y = g.dropout(v, 0.5).unwrap();
        g.value(y).clone()
    };
    assert_eq!(run(1), run(1));
    assert_ne!(run(1), run(2));
}

#[test]
fn conv1d_gradient() {
    let x = rand_r(22, &[2, 5, 3]);
    let k = rand_r(23, &[3, 3, 4]);
    let b = rand_r(24, &[4]);
    let err = check_grad(&[x, k, b], &|g, v| {
        let y = g.conv1d(v[0], v[1], v[2])?;
        real_loss(g, y)
    });
    assert!(err < TOL, "{err}");
}

#[test]
fn conv1d_matches_direct_sum() {
    // width-3 kernel with only the centre tap set is a per-position linear map
    let x = rand_r(25, &[1, 4, 2]);
    let mut kd = vec![0.0; 3 * 2];
    kd[2] = 1.0; // tap 1, channel 0
    kd[3] = 2.0; // tap 1, channel 1
    let k = CTensor::from_real(&[3, 2, 1], kd).unwrap();
    let mut g = Graph::new(Mode::Eval, 0);
    let xv = g.input(x.clone());
    let kv = g.input(k);
    let bv = g.input(CTensor::from_real(&[1], vec![0.5]).unwrap());
    let y = g.conv1d(xv, kv, bv).unwrap();
    let xs = x.re();
    for l in 0..4 {
        let want = xs[2 * l] + 2.0 * xs[2 * l + 1] + 0.5;
        assert!((g.value(y).re()[l] - want).abs() < 1e-15);
    }
}

#[test]
fn softmax_rows_sum_to_one() {
    let x = rand_r(26, &[7, 5]);
    let mut g = Graph::new(Mode::Eval, 0);
    let v = g.input(x.clone());
    let v = g.scale(v, 30.0).unwrap();
    let s = g.softmax(v).unwrap();
    for row in g.value(s).re().chunks(5) {
        assert!(row.iter().all(|&p| p > 0.0));
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn backward_is_bitwise_repeatable() {
    let a = rand_c(27, &[3, 3]);
    let mut g = Graph::new(Mode::Eval, 0);
    let v = g.variable(a);
    let ah = g.adjoint(v).unwrap();
    let m = g.matmul(ah, v).unwrap();
    let m = g.add_scalar(m, 1.0).unwrap();
    let inv = g.inverse(m).unwrap();
    let l = g.norm(inv).unwrap();
    let g1 = g.backward(l).unwrap();
    let g2 = g.backward(l).unwrap();
    assert_eq!(g1.get(v), g2.get(v));
}

#[test]
fn shape_errors() {
    let mut g = Graph::new(Mode::Eval, 0);
    let a = g.input(rand_c(1, &[2, 3]));
    let b = g.input(rand_c(2, &[2, 3]));
    assert!(matches!(g.matmul(a, b), Err(Error::ShapeMismatch(_))));
    assert!(matches!(g.inverse(a), Err(Error::ShapeMismatch(_))));
    let c = g.input(rand_c(3, &[3]));
    assert!(matches!(g.add(a, c), Err(Error::ShapeMismatch(_))));
}

#[test]
fn singular_inverse_is_reported() {
    let mut g = Graph::new(Mode::Eval, 0);
    let a = g.input(CTensor::zeros(&[2, 2]));
    assert!(matches!(g.inverse(a), Err(Error::SingularMatrix { .. })));
}

#[test]
fn inverse_records_condition() {
    let mut g = Graph::new(Mode::Eval, 0);
    let a = g.input(CTensor::from_cmat(&CMat::diag_real(&[1.0, 1e-3])));
    let inv = g.inverse(a).unwrap();
    assert!((g.condition_estimate(inv).unwrap() - 1e3).abs() < 1e-9);
}
