mod common;

use rand::Rng;

use social_processes::models::{
    EncoderKind, FeatureLayout, ForwardOptions, Gaussian, ModelConfig, Paths, ProcessModel,
};
use social_processes::nn::{ParamId, ParamStore, Tape, Tensor, Var};
use social_processes::training::loss::{
    gaussian_nll, homoscedastic, kl_divergence, location_loss, quaternion_loss, speaking_bce,
    total_loss,
};

use common::{behavior_step, random_block, rng};

fn random(r: &mut impl Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Tensor {
    Tensor::from_shape_fn((rows, cols), |_| r.random_range(lo..hi))
}

/// Compares tape gradients of `f` with central differences for every entry
/// of every parameter.
fn check(store: &mut ParamStore, f: impl Fn(&mut Tape) -> Var) {
    let ids: Vec<ParamId> = store.ids().collect();
    let grads = {
        let mut t = Tape::new(store);
        let out = f(&mut t);
        t.backward(out)
    };
    let h = 1e-6;
    for id in ids {
        let analytic = grads
            .get(id)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(store.get(id).dim()));
        for k in 0..store.get(id).len() {
            let eval = |store: &mut ParamStore, delta: f64| {
                let orig = store.get(id).as_slice().unwrap()[k];
                store.get_mut(id).as_slice_mut().unwrap()[k] = orig + delta;
                let v = {
                    let mut t = Tape::new(store);
                    let out = f(&mut t);
                    t.scalar(out)
                };
                store.get_mut(id).as_slice_mut().unwrap()[k] = orig;
                v
            };
            let numeric = (eval(store, h) - eval(store, -h)) / (2.0 * h);
            let a = analytic.as_slice().unwrap()[k];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-2);
            assert!(
                rel < 1e-3,
                "{}[{k}]: analytic {a}, numeric {numeric}",
                store.name(id)
            );
        }
    }
}

#[test]
fn gaussian_nll_gradient() {
    let mut r = rng(1);
    let mut store = ParamStore::new();
    let mean = store.insert("mean", random(&mut r, 3, 4, -1.0, 1.0));
    let std = store.insert("std", random(&mut r, 3, 4, 0.3, 2.0));
    let y = random(&mut r, 3, 4, -1.5, 1.5);
    check(&mut store, |t| {
        let (m, s) = (t.param(mean), t.param(std));
        let y = t.input(y.clone());
        gaussian_nll(t, m, s, y).unwrap()
    });
}

#[test]
fn kl_gradient() {
    let mut r = rng(2);
    let mut store = ParamStore::new();
    let ids: Vec<ParamId> = ["qm", "qs", "pm", "ps"]
        .iter()
        .enumerate()
        .map(|(k, n)| {
            let v = if k % 2 == 0 {
                random(&mut r, 1, 4, -1.0, 1.0)
            } else {
                random(&mut r, 1, 4, 0.4, 1.8)
            };
            store.insert(n, v)
        })
        .collect();
    check(&mut store, |t| {
        let q = Gaussian {
            mean: t.param(ids[0]),
            std: t.param(ids[1]),
        };
        let p = Gaussian {
            mean: t.param(ids[2]),
            std: t.param(ids[3]),
        };
        kl_divergence(t, q, p).unwrap()
    });
}

#[test]
fn location_loss_gradient() {
    let mut r = rng(3);
    let mut store = ParamStore::new();
    let pred = store.insert("pred", random(&mut r, 2, 3 * 4, -1.0, 1.0));
    let truth = random(&mut r, 2, 3 * 4, -1.0, 1.0);
    check(&mut store, |t| {
        let p = t.param(pred);
        location_loss(t, p, &truth, FeatureLayout::Generic, 4).unwrap()
    });

    let mut store = ParamStore::new();
    let truth = behavior_rows(&mut r, 2, 2);
    let pred = store.insert("pred", behavior_rows(&mut r, 2, 2));
    check(&mut store, |t| {
        let p = t.param(pred);
        location_loss(t, p, &truth, FeatureLayout::Behavior, 15).unwrap()
    });
}

fn behavior_rows(r: &mut rand_chacha::ChaCha8Rng, rows: usize, steps: usize) -> Tensor {
    let v: Vec<f64> = (0..rows * steps).flat_map(|_| behavior_step(r)).collect();
    Tensor::from_shape_vec((rows, steps * 15), v).unwrap()
}

#[test]
fn quaternion_loss_gradient() {
    let mut r = rng(4);
    let truth = behavior_rows(&mut r, 2, 2);
    let mut p = behavior_rows(&mut r, 2, 2);
    // unnormalized predictions exercise the normalization path
    p.mapv_inplace(|v| v * 1.7);
    let mut store = ParamStore::new();
    let pred = store.insert("pred", p);
    check(&mut store, |t| {
        let p = t.param(pred);
        quaternion_loss(t, p, &truth).unwrap()
    });
}

#[test]
fn speaking_bce_gradient() {
    let mut r = rng(5);
    let truth = behavior_rows(&mut r, 3, 2);
    let mut p = behavior_rows(&mut r, 3, 2);
    for row in 0..3 {
        for s in 0..2 {
            p[[row, s * 15 + 14]] = r.random_range(0.05..0.95);
        }
    }
    let mut store = ParamStore::new();
    let pred = store.insert("pred", p);
    check(&mut store, |t| {
        let p = t.param(pred);
        speaking_bce(t, p, &truth).unwrap()
    });
}

#[test]
fn homoscedastic_weighting_gradient() {
    let mut store = ParamStore::new();
    let loss = store.insert("loss", Tensor::from_elem((1, 1), 7.3));
    let s = store.insert("s", Tensor::from_elem((1, 1), 0.4));
    check(&mut store, |t| {
        let (l, s) = (t.param(loss), t.param(s));
        homoscedastic(t, l, s, 12)
    });
}

/// `∂/∂ŝ (L e^{-ŝ} + n ŝ) = n − L e^{-ŝ}`, zero at `ŝ = ln(L / n)`.
#[test]
fn log_scale_derivative_identities() {
    for (l, n, s0) in [(7.3, 12usize, 0.4), (250.0, 40, -1.2), (0.02, 3, 2.5)] {
        let mut store = ParamStore::new();
        let s = store.insert("s", Tensor::from_elem((1, 1), s0));
        let lv = store.insert("l", Tensor::from_elem((1, 1), l));
        let grad_at = |store: &mut ParamStore, v: f64| {
            store.get_mut(s)[[0, 0]] = v;
            let mut t = Tape::new(store);
            let (sv, lvv) = (t.param(s), t.param(lv));
            let out = homoscedastic(&mut t, lvv, sv, n);
            let g = t.backward(out);
            (g.get(s).unwrap()[[0, 0]], g.get(lv).unwrap()[[0, 0]])
        };
        let (gs, gl) = grad_at(&mut store, s0);
        assert!((gs - (n as f64 - l * (-s0).exp())).abs() < 1e-4);
        assert!((gl - (-s0).exp()).abs() < 1e-4);
        let optimum = (l / n as f64).ln();
        let (g_opt, _) = grad_at(&mut store, optimum);
        assert!(g_opt.abs() < 1e-4, "gradient {g_opt} at optimum");
    }
}

/// The full objective of a small social process on 4-dim data.
#[test]
fn total_loss_gradient_through_model() {
    for kind in [EncoderKind::Gru, EncoderKind::Mlp] {
        let mut cfg = ModelConfig::tiny_social(kind, FeatureLayout::Generic, 4);
        cfg.paths = Paths::LatentDet;
        let mut model = ProcessModel::new(cfg, 9).unwrap();
        let mut r = rng(6);
        let x = random_block(&mut r, 4, 3, 3, 2, 4);
        let ctx = x.select(&[0, 2]);
        let noise: Vec<f64> = (0..4).map(|_| r.random_range(-1.0..1.0)).collect();
        let opts = ForwardOptions::training(noise, false);
        let f = |m: &ProcessModel, t: &mut Tape| {
            let out = m.forward(t, &ctx, &x, &opts).unwrap();
            total_loss(t, m, &out, &x).unwrap().total
        };
        // a few entries of every parameter, to keep the check quick
        let grads = {
            let mut t = Tape::new(&model.params);
            let out = f(&model, &mut t);
            t.backward(out)
        };
        let ids: Vec<ParamId> = model.params.ids().collect();
        let h = 1e-6;
        for id in ids {
            let len = model.params.get(id).len();
            for k in [0, len / 2, len - 1] {
                let mut eval = |delta: f64| {
                    let orig = model.params.get(id).as_slice().unwrap()[k];
                    model.params.get_mut(id).as_slice_mut().unwrap()[k] = orig + delta;
                    let mut t = Tape::new(&model.params);
                    let out = f(&model, &mut t);
                    let v = t.scalar(out);
                    model.params.get_mut(id).as_slice_mut().unwrap()[k] = orig;
                    v
                };
                let numeric = (eval(h) - eval(-h)) / (2.0 * h);
                let a = grads
                    .get(id)
                    .map(|g| g.as_slice().unwrap()[k])
                    .unwrap_or(0.0);
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-2);
                assert!(
                    rel < 1e-3,
                    "{kind:?} {}[{k}]: {a} vs {numeric}",
                    model.params.name(id)
                );
            }
        }
    }
}
