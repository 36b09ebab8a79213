use adapipe_neural::{
    grad_check, GruCell, Graph, Init, Linear, ParamStore, Tensor, TransformerLayer,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-4;

fn input(rows: usize, cols: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = ParamStore::new();
    let id = s.add_init("x", rows, cols, Init::Uniform(1.0), &mut rng);
    s.value(id).clone()
}

#[test]
fn two_layer_attention_stack() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut store = ParamStore::new();
    let layers: Vec<_> = (0..2)
        .map(|i| TransformerLayer::new(&mut store, &format!("layer{}", i), 16, 4, 32, &mut rng))
        .collect();
    let x = input(5, 16, 3);
    let target = input(5, 16, 4);
    let report = grad_check(
        |s| {
            let mut g = Graph::new();
            let mut h = g.constant(x.clone());
            for l in &layers {
                h = l.forward(&mut g, s, h);
            }
            let t = g.constant(target.clone());
            let d = g.sub(h, t);
            let sq = g.mul(d, d);
            let loss = g.sum_all(sq);
            (g.scalar(loss), g.backward(loss))
        },
        &store,
        1e-5,
        6,
        11,
    )
    .unwrap();
    assert!(report.max_relative_error < TOL, "{:?}", report);
    assert!(report.coordinates_checked > 100);
}

#[test]
fn every_elementary_op() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut store = ParamStore::new();
    let a = store.add_init("a", 3, 4, Init::Uniform(1.0), &mut rng);
    let b = store.add_init("b", 4, 3, Init::Uniform(1.0), &mut rng);
    let row = store.add_init("row", 1, 4, Init::Uniform(1.0), &mut rng);
    let col = store.add_init("col", 3, 1, Init::Uniform(1.0), &mut rng);
    let gamma = store.add_init("gamma", 1, 4, Init::Uniform(1.0), &mut rng);
    let beta = store.add_init("beta", 1, 4, Init::Uniform(1.0), &mut rng);
    let report = grad_check(
        |s| {
            let mut g = Graph::new();
            let (a, b, row, col) = (g.param(s, a), g.param(s, b), g.param(s, row), g.param(s, col));
            let (gamma, beta) = (g.param(s, gamma), g.param(s, beta));
            let ab = g.matmul(a, b); // 3x3
            let abt = g.matmul_nt(a, a); // 3x3
            let sm = g.softmax_rows(ab);
            let m = g.mul(sm, abt);
            let t = g.transpose(m);
            let s1 = g.sub(t, ab);
            let th = g.tanh(s1);
            let sg = g.sigmoid(abt);
            let cat = g.concat_cols(&[th, sg]); // 3x6
            let sl = g.slice_cols(cat, 1, 4); // 3x4
            let r = g.add_row(sl, row);
            let c = g.add_col(r, col);
            let ln = g.layer_norm(c, gamma, beta, 1e-5);
            let rl = g.relu(ln);
            let stacked = g.concat_rows(&[rl, a]); // 6x4
            let gathered = g.gather_rows(stacked, &[0, 5, 5, 2]);
            let top = g.slice_rows(gathered, 1, 3);
            let sc = g.scale_shift(top, 0.7, 0.1);
            let ce = g.cross_entropy(sc, &[0, 3, 1], Some(&[true, true, false, true, true, true, true, true, true, true, true, false]));
            let sum = g.sum_all(sc);
            let loss = g.add(ce, sum);
            (g.scalar(loss), g.backward(loss))
        },
        &store,
        1e-6,
        20,
        1,
    )
    .unwrap();
    assert!(report.max_relative_error < TOL, "{:?}", report);
}

#[test]
fn gru_unrolled_three_steps() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut store = ParamStore::new();
    let cell = GruCell::new(&mut store, "gru", 3, 5, &mut rng);
    let out = Linear::new(&mut store, "out", 5, 4, &mut rng);
    let xs = input(3, 3, 21);
    let report = grad_check(
        |s| {
            let mut g = Graph::new();
            let x = g.constant(xs.clone());
            let mut h = g.constant(Tensor::zeros(1, 5));
            let mut losses = Vec::new();
            for t in 0..3 {
                let xt = g.slice_rows(x, t, 1);
                h = cell.step(&mut g, s, xt, h);
                let logits = out.forward(&mut g, s, h);
                losses.push(g.cross_entropy(logits, &[t], None));
            }
            let loss = g.add_scalars(&losses);
            (g.scalar(loss), g.backward(loss))
        },
        &store,
        1e-6,
        10,
        2,
    )
    .unwrap();
    assert!(report.max_relative_error < TOL, "{:?}", report);
}
