//! Central finite-difference oracle for every differentiable tape op.
//!
//! The oracle is independent of the reverse pass: it re-runs the recorded
//! forward computation with perturbed parameters and compares slopes.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use spatialgen_core::numerics::{NodeId, Tape, Tensor};

const FD_STEP: f64 = 1e-5;
const TOL: f64 = 1e-4;

/// Builds the loss from leased parameter nodes; must be deterministic.
type Build = dyn Fn(&mut Tape<f64>, &[NodeId]) -> NodeId;

fn grad_check(name: &str, params: &[Tensor<f64>], build: &Build) {
    let forward = |ps: &[Tensor<f64>]| -> f64 {
        let mut tape = Tape::new();
        let ids: Vec<NodeId> =
            ps.iter().enumerate().map(|(i, t)| tape.param(i, t.clone())).collect();
        let loss = build(&mut tape, &ids);
        tape.value(loss).item()
    };

    // Analytic gradients.
    let mut tape = Tape::new();
    let ids: Vec<NodeId> =
        params.iter().enumerate().map(|(i, t)| tape.param(i, t.clone())).collect();
    let loss = build(&mut tape, &ids);
    tape.value(loss).check_finite(name).unwrap();
    let grads = tape.backward(loss).unwrap();
    let mut analytic: Vec<Tensor<f64>> = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
    for (slot, g) in grads.iter() {
        analytic[slot].add_assign_tensor(g);
    }

    for (pi, p) in params.iter().enumerate() {
        for ei in 0..p.numel() {
            let mut plus = params.to_vec();
            plus[pi].data_mut()[ei] += FD_STEP;
            let mut minus = params.to_vec();
            minus[pi].data_mut()[ei] -= FD_STEP;
            let fd = (forward(&plus) - forward(&minus)) / (2.0 * FD_STEP);
            let a = analytic[pi].data()[ei];
            let rel = (a - fd).abs() / f64::max(1e-3, f64::max(a.abs(), fd.abs()));
            assert!(
                rel < TOL,
                "{name}: param {pi} elem {ei}: analytic {a} vs finite-diff {fd} (rel {rel:.2e})"
            );
        }
    }
}

fn randn(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::randn(shape, 1.0, rng)
}

#[test]
fn matmul_2d() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let params = vec![randn(&[4, 3], &mut rng), randn(&[3, 5], &mut rng)];
    grad_check("matmul2d", &params, &|t, p| {
        let c = t.matmul(p[0], p[1]).unwrap();
        t.sum(c)
    });
}

#[test]
fn matmul_3d_batched() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let params = vec![randn(&[2, 3, 4], &mut rng), randn(&[2, 4, 3], &mut rng)];
    grad_check("matmul3d", &params, &|t, p| {
        let c = t.matmul(p[0], p[1]).unwrap();
        let s = t.softmax_last(c);
        t.sum(s)
    });
}

#[test]
fn add_with_bias_broadcast() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let params = vec![randn(&[4, 6], &mut rng), randn(&[6], &mut rng)];
    grad_check("add_bias", &params, &|t, p| {
        let c = t.add(p[0], p[1]).unwrap();
        let g = t.gelu(c);
        t.sum(g)
    });
}

#[test]
fn mul_elementwise_and_broadcast() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let params = vec![randn(&[3, 5], &mut rng), randn(&[3, 5], &mut rng), randn(&[5], &mut rng)];
    grad_check("mul", &params, &|t, p| {
        let c = t.mul(p[0], p[1]).unwrap();
        let d = t.mul(c, p[2]).unwrap();
        t.sum(d)
    });
}

#[test]
fn scale_softmax_layernorm_chain() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let params = vec![randn(&[4, 8], &mut rng)];
    grad_check("scale_softmax_ln", &params, &|t, p| {
        let a = t.scale(p[0], 0.37);
        let b = t.layer_norm(a);
        let c = t.softmax_last(b);
        t.sum(c)
    });
}

#[test]
fn layer_norm_near_constant_row() {
    // Exercises the eps-dominated branch of the backward formula.
    let mut base = Tensor::full(&[2, 6], 1.0);
    base.data_mut()[3] = 1.001;
    grad_check("ln_constant", &[base], &|t, p| {
        let a = t.layer_norm(p[0]);
        let b = t.gelu(a);
        t.sum(b)
    });
}

#[test]
fn rows_lookup_scatter() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let params = vec![randn(&[5, 4], &mut rng)];
    grad_check("rows", &params, &|t, p| {
        let r = t.rows(p[0], &[0, 2, 2, 4]).unwrap();
        let s = t.softmax_last(r);
        t.sum(s)
    });
}

#[test]
fn concat_slice_permute_reshape() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let params = vec![randn(&[3, 4], &mut rng), randn(&[2, 4], &mut rng)];
    grad_check("concat_slice", &params, &|t, p| {
        let c = t.concat0(&[p[0], p[1]]).unwrap();
        let s = t.slice_rows(c, 1, 3).unwrap();
        let r = t.reshape(s, &[3, 2, 2]).unwrap();
        let q = t.permute3(r, [1, 0, 2]).unwrap();
        let g = t.gelu(q);
        t.sum(g)
    });
}

#[test]
fn rope_rotation() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let params = vec![randn(&[2, 3, 6], &mut rng)];
    let angles: Vec<f64> = (0..9).map(|i| i as f64 * 0.61).collect();
    let cos = Tensor::from_vec(&[3, 3], angles.iter().map(|a| a.cos()).collect()).unwrap();
    let sin = Tensor::from_vec(&[3, 3], angles.iter().map(|a| a.sin()).collect()).unwrap();
    grad_check("rope", &params, &move |t, p| {
        let r = t.rope(p[0], &cos, &sin).unwrap();
        let s = t.softmax_last(r);
        t.sum(s)
    });
}

#[test]
fn mse_and_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let params = vec![randn(&[4, 4], &mut rng)];
    let target = randn(&[4, 4], &mut rng);
    grad_check("mse", &params, &move |t, p| {
        let m = t.mse(p[0], &target).unwrap();
        t.scale(m, 2.5)
    });
    let params2 = vec![randn(&[6], &mut rng)];
    grad_check("mean", &params2, &|t, p| {
        let g = t.gelu(p[0]);
        t.mean(g)
    });
}

/// Spec example: random 3-layer MLP, analytic vs central finite differences.
#[test]
fn three_layer_mlp() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let params = vec![
        randn(&[6, 8], &mut rng),  // w1
        randn(&[8], &mut rng),     // b1
        randn(&[8, 8], &mut rng),  // w2
        randn(&[8], &mut rng),     // b2
        randn(&[8, 4], &mut rng),  // w3
        randn(&[4], &mut rng),     // b3
    ];
    let x = randn(&[5, 6], &mut rng);
    let target = randn(&[5, 4], &mut rng);
    grad_check("mlp3", &params, &move |t, p| {
        let xin = t.leaf(x.clone());
        let h1 = t.matmul(xin, p[0]).unwrap();
        let h1 = t.add(h1, p[1]).unwrap();
        let h1 = t.gelu(h1);
        let h2 = t.matmul(h1, p[2]).unwrap();
        let h2 = t.add(h2, p[3]).unwrap();
        let h2 = t.gelu(h2);
        let h3 = t.matmul(h2, p[4]).unwrap();
        let h3 = t.add(h3, p[5]).unwrap();
        t.mse(h3, &target).unwrap()
    });
}
