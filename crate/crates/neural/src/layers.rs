//! Parameterized building blocks. Each layer only stores [`ParamId`]s; the
//! values live in a [`ParamStore`] that is passed to `forward`.

use rand::Rng;

use crate::graph::{Graph, Var};
use crate::params::{Init, ParamId, ParamStore};
use crate::tensor::Tensor;

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub d_in: usize,
    pub d_out: usize,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        d_in: usize,
        d_out: usize,
        rng: &mut impl Rng,
    ) -> Self {
        Self::with_init(store, name, d_in, d_out, Init::Xavier, rng)
    }

    pub fn with_init(
        store: &mut ParamStore,
        name: &str,
        d_in: usize,
        d_out: usize,
        init: Init,
        rng: &mut impl Rng,
    ) -> Self {
        let weight = store.add_init(format!("{}/w", name), d_in, d_out, init, rng);
        let bias = store.add_init(format!("{}/b", name), 1, d_out, Init::Zeros, rng);
        Linear {
            weight,
            bias,
            d_in,
            d_out,
        }
    }

    pub fn forward<'a>(&self, g: &mut Graph<'a>, store: &'a ParamStore, x: Var) -> Var {
        let w = g.param(store, self.weight);
        let b = g.param(store, self.bias);
        let xw = g.matmul(x, w);
        g.add_row(xw, b)
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Self {
        let gamma = store.add(format!("{}/gamma", name), Tensor::filled(1, dim, 1.0));
        let beta = store.add(format!("{}/beta", name), Tensor::zeros(1, dim));
        LayerNorm { gamma, beta }
    }

    pub fn forward<'a>(&self, g: &mut Graph<'a>, store: &'a ParamStore, x: Var) -> Var {
        let gamma = g.param(store, self.gamma);
        let beta = g.param(store, self.beta);
        g.layer_norm(x, gamma, beta, LAYER_NORM_EPS)
    }
}

#[derive(Debug, Clone)]
pub struct Embedding {
    pub table: ParamId,
    pub rows: usize,
    pub dim: usize,
}

impl Embedding {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        rows: usize,
        dim: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let table = store.add_init(name, rows, dim, Init::Normal(0.1), rng);
        Embedding { table, rows, dim }
    }

    pub fn forward<'a>(&self, g: &mut Graph<'a>, store: &'a ParamStore, ids: &[usize]) -> Var {
        let t = g.param(store, self.table);
        g.gather_rows(t, ids)
    }
}

/// `Linear -> ReLU -> Linear`
#[derive(Debug, Clone)]
pub struct FeedForward {
    pub inner: Linear,
    pub outer: Linear,
}

impl FeedForward {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        d_in: usize,
        d_hidden: usize,
        d_out: usize,
        rng: &mut impl Rng,
    ) -> Self {
        FeedForward {
            inner: Linear::new(store, &format!("{}/inner", name), d_in, d_hidden, rng),
            outer: Linear::new(store, &format!("{}/outer", name), d_hidden, d_out, rng),
        }
    }

    pub fn forward<'a>(&self, g: &mut Graph<'a>, store: &'a ParamStore, x: Var) -> Var {
        let h = self.inner.forward(g, store, x);
        let h = g.relu(h);
        self.outer.forward(g, store, h)
    }
}

/// Multi-head scaled dot-product self-attention (no masking).
#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    pub heads: usize,
    pub dim: usize,
}

impl MultiHeadAttention {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        dim: usize,
        heads: usize,
        rng: &mut impl Rng,
    ) -> Self {
        assert!(
            heads > 0 && dim % heads == 0,
            "model dim {} not divisible by {} heads",
            dim,
            heads
        );
        MultiHeadAttention {
            query: Linear::new(store, &format!("{}/q", name), dim, dim, rng),
            key: Linear::new(store, &format!("{}/k", name), dim, dim, rng),
            value: Linear::new(store, &format!("{}/v", name), dim, dim, rng),
            output: Linear::new(store, &format!("{}/o", name), dim, dim, rng),
            heads,
            dim,
        }
    }

    pub fn forward<'a>(&self, g: &mut Graph<'a>, store: &'a ParamStore, x: Var) -> Var {
        let q = self.query.forward(g, store, x);
        let k = self.key.forward(g, store, x);
        let v = self.value.forward(g, store, x);
        let head_dim = self.dim / self.heads;
        let scale = 1.0 / (head_dim as f64).sqrt();
        let mut outs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let qh = g.slice_cols(q, h * head_dim, head_dim);
            let kh = g.slice_cols(k, h * head_dim, head_dim);
            let vh = g.slice_cols(v, h * head_dim, head_dim);
            let scores = g.matmul_nt(qh, kh);
            let scores = g.scale(scores, scale);
            let weights = g.softmax_rows(scores);
            outs.push(g.matmul(weights, vh));
        }
        let joined = if outs.len() == 1 {
            outs[0]
        } else {
            g.concat_cols(&outs)
        };
        self.output.forward(g, store, joined)
    }
}

/// Post-norm transformer layer:
/// `x1 = LN(x + Attn(x))`, `r = LN(x1 + FFN(x1))`.
///
/// The layer output `r` is the adapter hook point; [`forward_with_hook`]
/// lets the caller transform it before it leaves the layer.
///
/// [`forward_with_hook`]: TransformerLayer::forward_with_hook
#[derive(Debug, Clone)]
pub struct TransformerLayer {
    pub attention: MultiHeadAttention,
    pub attention_norm: LayerNorm,
    pub ffn: FeedForward,
    pub ffn_norm: LayerNorm,
}

impl TransformerLayer {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        dim: usize,
        heads: usize,
        ffn_dim: usize,
        rng: &mut impl Rng,
    ) -> Self {
        TransformerLayer {
            attention: MultiHeadAttention::new(store, &format!("{}/attn", name), dim, heads, rng),
            attention_norm: LayerNorm::new(store, &format!("{}/attn_norm", name), dim),
            ffn: FeedForward::new(store, &format!("{}/ffn", name), dim, ffn_dim, dim, rng),
            ffn_norm: LayerNorm::new(store, &format!("{}/ffn_norm", name), dim),
        }
    }

    pub fn forward<'a>(&self, g: &mut Graph<'a>, store: &'a ParamStore, x: Var) -> Var {
        self.forward_with_hook(g, store, x, |_, r| r)
    }

    pub fn forward_with_hook<'a, F>(
        &self,
        g: &mut Graph<'a>,
        store: &'a ParamStore,
        x: Var,
        hook: F,
    ) -> Var
    where
        F: FnOnce(&mut Graph<'a>, Var) -> Var,
    {
        let a = self.attention.forward(g, store, x);
        let a = g.add(x, a);
        let x1 = self.attention_norm.forward(g, store, a);
        let f = self.ffn.forward(g, store, x1);
        let f = g.add(x1, f);
        let r = self.ffn_norm.forward(g, store, f);
        hook(g, r)
    }
}

/// Gated recurrent unit:
///
/// ```text
/// z = σ(x Wz + h Uz + bz)
/// r = σ(x Wr + h Ur + br)
/// n = tanh(x Wn + bn + r ⊙ (h Un + bhn))
/// h' = (1 - z) ⊙ n + z ⊙ h
/// ```
#[derive(Debug, Clone)]
pub struct GruCell {
    /// `d_in x 3h`, gate blocks ordered z, r, n.
    pub input: Linear,
    /// `h x 3h`, same block order.
    pub hidden: Linear,
    pub d_in: usize,
    pub d_hidden: usize,
}

impl GruCell {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        d_in: usize,
        d_hidden: usize,
        rng: &mut impl Rng,
    ) -> Self {
        GruCell {
            input: Linear::new(store, &format!("{}/input", name), d_in, 3 * d_hidden, rng),
            hidden: Linear::new(store, &format!("{}/hidden", name), d_hidden, 3 * d_hidden, rng),
            d_in,
            d_hidden,
        }
    }

    /// One step for a single `1 x d_in` input and `1 x h` state.
    pub fn step<'a>(&self, g: &mut Graph<'a>, store: &'a ParamStore, x: Var, h: Var) -> Var {
        let hd = self.d_hidden;
        let xi = self.input.forward(g, store, x);
        let hh = self.hidden.forward(g, store, h);
        let xz = g.slice_cols(xi, 0, hd);
        let xr = g.slice_cols(xi, hd, hd);
        let xn = g.slice_cols(xi, 2 * hd, hd);
        let hz = g.slice_cols(hh, 0, hd);
        let hr = g.slice_cols(hh, hd, hd);
        let hn = g.slice_cols(hh, 2 * hd, hd);
        let z = g.add(xz, hz);
        let z = g.sigmoid(z);
        let r = g.add(xr, hr);
        let r = g.sigmoid(r);
        let rn = g.mul(r, hn);
        let n = g.add(xn, rn);
        let n = g.tanh(n);
        let keep = g.scale_shift(z, -1.0, 1.0);
        let a = g.mul(keep, n);
        let b = g.mul(z, h);
        g.add(a, b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn singleton_attention_weight_is_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::new();
        let layer = TransformerLayer::new(&mut store, "l", 8, 2, 16, &mut rng);
        let x = Tensor::from_vec(1, 8, (0..8).map(|i| i as f64 * 0.1).collect());
        let mut g = Graph::new();
        let xv = g.constant(x);
        let y = layer.forward(&mut g, &store, xv);
        assert!(g.value(y).is_finite());
        // every softmax node over a single key must be exactly 1
        let mut g2 = Graph::new();
        let xv = g2.constant(Tensor::filled(1, 4, 0.3));
        let s = g2.softmax_rows(xv);
        let s1 = g2.slice_cols(s, 0, 1);
        let t = g2.constant(Tensor::filled(1, 1, 7.0));
        let single = g2.softmax_rows(t);
        assert_eq!(g2.value(single).data(), &[1.0]);
        assert!((g2.value(s1).data()[0] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn duplicate_rows_give_duplicate_outputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut store = ParamStore::new();
        let layer = TransformerLayer::new(&mut store, "l", 8, 2, 16, &mut rng);
        let row: Vec<f64> = (0..8).map(|i| (i as f64).sin()).collect();
        let other: Vec<f64> = (0..8).map(|i| (i as f64).cos()).collect();
        let x = Tensor::from_rows(&[row.clone(), other, row]);
        let mut g = Graph::new();
        let xv = g.constant(x);
        let y = layer.forward(&mut g, &store, xv);
        let t = g.value(y);
        assert_eq!(t.row(0), t.row(2));
    }
}
