use ndarray::{s, Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{focal_logit_grad, focal_loss, positional_encoding, sigmoid, Scorer, StreamConfig};
use crate::{Error, Result};

/// Layer-norm variance floor.
pub const LN_EPS: f64 = 1e-9;

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_K: f64 = 0.044_715;

pub(super) fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_K * x * x * x)).tanh())
}

pub(super) fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_K * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_K * x * x)
}

/// Glorot-uniform `rows x cols` matrix.
pub(super) fn glorot(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-limit..limit))
}

pub(super) fn row_bias(n: usize) -> Array2<f64> {
    Array2::zeros((1, n))
}

pub(super) fn bias_grad(d: &Array2<f64>) -> Array2<f64> {
    d.sum_axis(Axis(0)).insert_axis(Axis(0))
}

/// Row-wise softmax.
pub fn softmax_rows(scores: &Array2<f64>) -> Array2<f64> {
    let mut out = scores.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

/// Row-wise normalization to zero mean and unit variance; returns the
/// normalized rows and each row's inverse standard deviation.
pub fn layer_norm_rows(x: &Array2<f64>) -> (Array2<f64>, Array1<f64>) {
    let n = x.ncols() as f64;
    let mut xhat = x.clone();
    let mut inv_std = Array1::zeros(x.nrows());
    for (mut row, inv) in xhat.rows_mut().into_iter().zip(inv_std.iter_mut()) {
        let mean = row.sum() / n;
        row.mapv_inplace(|v| v - mean);
        let var = row.iter().map(|v| v * v).sum::<f64>() / n;
        *inv = 1.0 / (var + LN_EPS).sqrt();
        let k = *inv;
        row.mapv_inplace(|v| v * k);
    }
    (xhat, inv_std)
}

fn layer_norm_backward(dy: &Array2<f64>, xhat: &Array2<f64>, inv_std: &Array1<f64>, gain: &Array2<f64>) -> Array2<f64> {
    let n = dy.ncols() as f64;
    let dxhat = dy * gain;
    let mut dx = Array2::zeros(dy.raw_dim());
    for i in 0..dy.nrows() {
        let g = dxhat.row(i);
        let xh = xhat.row(i);
        let sum_g = g.sum();
        let sum_gx = g.dot(&xh);
        let k = inv_std[i] / n;
        for j in 0..dy.ncols() {
            dx[[i, j]] = k * (n * g[j] - sum_g - xh[j] * sum_gx);
        }
    }
    dx
}

/// Weights of one post-norm encoder block.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderBlock {
    pub wq: Array2<f64>,
    pub bq: Array2<f64>,
    pub wk: Array2<f64>,
    pub bk: Array2<f64>,
    pub wv: Array2<f64>,
    pub bv: Array2<f64>,
    pub wo: Array2<f64>,
    pub bo: Array2<f64>,
    pub ln1_gain: Array2<f64>,
    pub ln1_bias: Array2<f64>,
    pub w1: Array2<f64>,
    pub b1: Array2<f64>,
    pub w2: Array2<f64>,
    pub b2: Array2<f64>,
    pub ln2_gain: Array2<f64>,
    pub ln2_bias: Array2<f64>,
}

impl EncoderBlock {
    fn init(rng: &mut ChaCha8Rng, d: usize, hidden: usize) -> Self {
        EncoderBlock {
            wq: glorot(rng, d, d),
            bq: row_bias(d),
            wk: glorot(rng, d, d),
            bk: row_bias(d),
            wv: glorot(rng, d, d),
            bv: row_bias(d),
            wo: glorot(rng, d, d),
            bo: row_bias(d),
            ln1_gain: Array2::ones((1, d)),
            ln1_bias: row_bias(d),
            w1: glorot(rng, d, hidden),
            b1: row_bias(hidden),
            w2: glorot(rng, hidden, d),
            b2: row_bias(d),
            ln2_gain: Array2::ones((1, d)),
            ln2_bias: row_bias(d),
        }
    }

    fn tensors(&self) -> [&Array2<f64>; 16] {
        [
            &self.wq,
            &self.bq,
            &self.wk,
            &self.bk,
            &self.wv,
            &self.bv,
            &self.wo,
            &self.bo,
            &self.ln1_gain,
            &self.ln1_bias,
            &self.w1,
            &self.b1,
            &self.w2,
            &self.b2,
            &self.ln2_gain,
            &self.ln2_bias,
        ]
    }

    fn tensors_mut(&mut self) -> [&mut Array2<f64>; 16] {
        [
            &mut self.wq,
            &mut self.bq,
            &mut self.wk,
            &mut self.bk,
            &mut self.wv,
            &mut self.bv,
            &mut self.wo,
            &mut self.bo,
            &mut self.ln1_gain,
            &mut self.ln1_bias,
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
            &mut self.ln2_gain,
            &mut self.ln2_bias,
        ]
    }
}

struct BlockCache {
    input: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    attn: Vec<Array2<f64>>,
    heads_out: Array2<f64>,
    ln1_xhat: Array2<f64>,
    ln1_inv: Array1<f64>,
    h1: Array2<f64>,
    z1: Array2<f64>,
    act: Array2<f64>,
    ln2_xhat: Array2<f64>,
    ln2_inv: Array1<f64>,
}

struct ForwardCache {
    input: Array2<f64>,
    blocks: Vec<BlockCache>,
    output: Array2<f64>,
}

/// Linear projection, positional encodings, post-norm encoder blocks and a
/// sigmoid head producing one score per sequence element.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformerModel {
    pub config: StreamConfig,
    pub w_in: Array2<f64>,
    pub b_in: Array2<f64>,
    pub blocks: Vec<EncoderBlock>,
    pub w_out: Array2<f64>,
    pub b_out: Array2<f64>,
}

impl TransformerModel {
    pub fn new(input_dim: usize, config: &StreamConfig) -> Result<Self> {
        config.validate()?;
        if input_dim == 0 {
            return Err(Error::invalid("input dimension must be positive"));
        }
        let d = config.d_k;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let w_in = glorot(&mut rng, input_dim, d);
        let blocks = (0..config.n_blocks)
            .map(|_| EncoderBlock::init(&mut rng, d, config.hidden()))
            .collect();
        let w_out = glorot(&mut rng, d, 1);
        Ok(TransformerModel {
            config: config.clone(),
            w_in,
            b_in: row_bias(d),
            blocks,
            w_out,
            b_out: row_bias(1),
        })
    }

    /// Tensor names in checkpoint order.
    pub fn tensor_names(&self) -> Vec<String> {
        const BLOCK: [&str; 16] = [
            "wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo", "ln1_gain", "ln1_bias", "w1", "b1", "w2", "b2", "ln2_gain",
            "ln2_bias",
        ];
        let mut names = vec!["w_in".to_string(), "b_in".to_string()];
        for b in 0..self.blocks.len() {
            names.extend(BLOCK.iter().map(|n| format!("block{b}.{n}")));
        }
        names.push("w_out".into());
        names.push("b_out".into());
        names
    }

    fn check_input(&self, x: &Array2<f64>) -> Result<()> {
        if x.ncols() != self.w_in.nrows() {
            return Err(Error::invalid(format!(
                "feature dimension {} does not match model input {}",
                x.ncols(),
                self.w_in.nrows()
            )));
        }
        if x.nrows() == 0 {
            return Err(Error::invalid("empty sequence"));
        }
        Ok(())
    }

    fn block_forward(&self, b: &EncoderBlock, h: Array2<f64>) -> (Array2<f64>, BlockCache) {
        let n_heads = self.config.n_heads;
        let dh = self.config.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();
        let q = h.dot(&b.wq) + &b.bq;
        let k = h.dot(&b.wk) + &b.bk;
        let v = h.dot(&b.wv) + &b.bv;
        let mut heads_out = Array2::zeros(h.raw_dim());
        let mut attn = Vec::with_capacity(n_heads);
        for i in 0..n_heads {
            let cols = s![.., i * dh..(i + 1) * dh];
            let logits = q.slice(cols).dot(&k.slice(cols).t()) * scale;
            let a = softmax_rows(&logits);
            heads_out.slice_mut(cols).assign(&a.dot(&v.slice(cols)));
            attn.push(a);
        }
        let r1 = &h + &(heads_out.dot(&b.wo) + &b.bo);
        let (ln1_xhat, ln1_inv) = layer_norm_rows(&r1);
        let h1 = &ln1_xhat * &b.ln1_gain + &b.ln1_bias;
        let z1 = h1.dot(&b.w1) + &b.b1;
        let act = z1.mapv(gelu);
        let r2 = &h1 + &(act.dot(&b.w2) + &b.b2);
        let (ln2_xhat, ln2_inv) = layer_norm_rows(&r2);
        let out = &ln2_xhat * &b.ln2_gain + &b.ln2_bias;
        let cache = BlockCache {
            input: h,
            q,
            k,
            v,
            attn,
            heads_out,
            ln1_xhat,
            ln1_inv,
            h1,
            z1,
            act,
            ln2_xhat,
            ln2_inv,
        };
        (out, cache)
    }

    fn forward_cached(&self, x: &Array2<f64>) -> Result<(Vec<f64>, ForwardCache)> {
        self.check_input(x)?;
        let mut h = x.dot(&self.w_in) + &self.b_in;
        if self.config.positional_encoding {
            h += &positional_encoding(x.nrows(), self.config.d_k);
        }
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let (out, cache) = self.block_forward(b, h);
            blocks.push(cache);
            h = out;
        }
        let logits = (h.dot(&self.w_out) + &self.b_out).column(0).to_vec();
        Ok((
            logits,
            ForwardCache {
                input: x.clone(),
                blocks,
                output: h,
            },
        ))
    }

    fn block_backward(
        &self,
        b: &EncoderBlock,
        c: &BlockCache,
        d_out: &Array2<f64>,
        g: &mut EncoderBlock,
    ) -> Array2<f64> {
        let n_heads = self.config.n_heads;
        let dh = self.config.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();

        // Second sublayer: out = LN2(h1 + MLP(h1)).
        g.ln2_gain = bias_grad(&(d_out * &c.ln2_xhat));
        g.ln2_bias = bias_grad(d_out);
        let d_r2 = layer_norm_backward(d_out, &c.ln2_xhat, &c.ln2_inv, &b.ln2_gain);
        g.w2 = c.act.t().dot(&d_r2);
        g.b2 = bias_grad(&d_r2);
        let d_act = d_r2.dot(&b.w2.t());
        let d_z1 = &d_act * &c.z1.mapv(gelu_grad);
        g.w1 = c.h1.t().dot(&d_z1);
        g.b1 = bias_grad(&d_z1);
        let d_h1 = &d_r2 + &d_z1.dot(&b.w1.t());

        // First sublayer: h1 = LN1(h + MHSA(h)).
        g.ln1_gain = bias_grad(&(&d_h1 * &c.ln1_xhat));
        g.ln1_bias = bias_grad(&d_h1);
        let d_r1 = layer_norm_backward(&d_h1, &c.ln1_xhat, &c.ln1_inv, &b.ln1_gain);
        g.wo = c.heads_out.t().dot(&d_r1);
        g.bo = bias_grad(&d_r1);
        let d_heads = d_r1.dot(&b.wo.t());
        let mut d_q = Array2::zeros(c.q.raw_dim());
        let mut d_k = Array2::zeros(c.k.raw_dim());
        let mut d_v = Array2::zeros(c.v.raw_dim());
        for (i, a) in c.attn.iter().enumerate().take(n_heads) {
            let cols = s![.., i * dh..(i + 1) * dh];
            let d_o = d_heads.slice(cols);
            let d_a = d_o.dot(&c.v.slice(cols).t());
            d_v.slice_mut(cols).assign(&a.t().dot(&d_o));
            let row_dot = (&d_a * a).sum_axis(Axis(1)).insert_axis(Axis(1));
            let d_s = a * &(&d_a - &row_dot) * scale;
            d_q.slice_mut(cols).assign(&d_s.dot(&c.k.slice(cols)));
            d_k.slice_mut(cols).assign(&d_s.t().dot(&c.q.slice(cols)));
        }
        g.wq = c.input.t().dot(&d_q);
        g.bq = bias_grad(&d_q);
        g.wk = c.input.t().dot(&d_k);
        g.bk = bias_grad(&d_k);
        g.wv = c.input.t().dot(&d_v);
        g.bv = bias_grad(&d_v);
        d_r1 + d_q.dot(&b.wq.t()) + d_k.dot(&b.wk.t()) + d_v.dot(&b.wv.t())
    }

    /// Attention probabilities of every head in every block, for inspection.
    pub fn attention_maps(&self, x: &Array2<f64>) -> Result<Vec<Vec<Array2<f64>>>> {
        let (_, cache) = self.forward_cached(x)?;
        Ok(cache.blocks.into_iter().map(|b| b.attn).collect())
    }

    /// Normalized (pre gain/bias) rows of both layer norms of every block.
    pub fn layer_norm_inputs(&self, x: &Array2<f64>) -> Result<Vec<Array2<f64>>> {
        let (_, cache) = self.forward_cached(x)?;
        Ok(cache
            .blocks
            .into_iter()
            .flat_map(|b| [b.ln1_xhat, b.ln2_xhat])
            .collect())
    }
}

impl Scorer for TransformerModel {
    fn input_dim(&self) -> usize {
        self.w_in.nrows()
    }

    fn logits(&self, x: &Array2<f64>) -> Result<Vec<f64>> {
        Ok(self.forward_cached(x)?.0)
    }

    fn loss_and_grad(&self, x: &Array2<f64>, labels: &[u8], alpha: f64, gamma: f64) -> Result<(f64, Self)> {
        if labels.len() != x.nrows() {
            return Err(Error::invalid(format!(
                "{} labels for {} units",
                labels.len(),
                x.nrows()
            )));
        }
        let (logits, cache) = self.forward_cached(x)?;
        let scores: Vec<f64> = logits.iter().map(|&z| sigmoid(z)).collect();
        let loss = focal_loss(&scores, labels, alpha, gamma)?;
        let n = logits.len() as f64;
        let d_logits = Array2::from_shape_fn((logits.len(), 1), |(i, _)| {
            focal_logit_grad(logits[i], labels[i], alpha, gamma) / n
        });

        let mut grad = self.zeros_like();
        grad.w_out = cache.output.t().dot(&d_logits);
        grad.b_out = bias_grad(&d_logits);
        let mut d_h = d_logits.dot(&self.w_out.t());
        for (i, (b, c)) in self.blocks.iter().zip(&cache.blocks).enumerate().rev() {
            d_h = self.block_backward(b, c, &d_h, &mut grad.blocks[i]);
        }
        // Positional encodings are constant and contribute no gradient.
        grad.w_in = cache.input.t().dot(&d_h);
        grad.b_in = bias_grad(&d_h);
        Ok((loss, grad))
    }

    fn tensors(&self) -> Vec<&Array2<f64>> {
        let mut out = vec![&self.w_in, &self.b_in];
        for b in &self.blocks {
            out.extend(b.tensors());
        }
        out.push(&self.w_out);
        out.push(&self.b_out);
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut Array2<f64>> {
        let mut out = vec![&mut self.w_in, &mut self.b_in];
        for b in &mut self.blocks {
            out.extend(b.tensors_mut());
        }
        out.push(&mut self.w_out);
        out.push(&mut self.b_out);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Scale;

    fn tiny() -> (TransformerModel, Array2<f64>, Vec<u8>) {
        let cfg = StreamConfig {
            d_k: 16,
            n_heads: 4,
            n_blocks: 1,
            seed: 3,
            ..StreamConfig::default()
        };
        let model = TransformerModel::new(8, &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = Array2::from_shape_fn((12, 8), |_| rng.random_range(-1.5..1.5));
        let labels = (0..12).map(|i| u8::from(i % 3 == 0)).collect();
        (model, x, labels)
    }

    #[test]
    fn zero_head_gives_half() {
        let (mut m, x, _) = tiny();
        m.w_out.fill(0.0);
        m.b_out.fill(0.0);
        assert!(m.scores(&x, Scale::Clip).unwrap().scores().iter().all(|&s| s == 0.5));
    }

    #[test]
    fn single_element_sequence() {
        let (m, x, _) = tiny();
        let one = x.slice(s![0..1, ..]).to_owned();
        let scores = m.scores(&one, Scale::Clip).unwrap();
        assert_eq!(scores.len(), 1);
        let maps = m.attention_maps(&one).unwrap();
        assert!(maps[0].iter().all(|a| a[[0, 0]] == 1.0));
    }

    #[test]
    fn output_length_matches_input() {
        let (m, x, _) = tiny();
        for n in 1..=12 {
            assert_eq!(m.logits(&x.slice(s![0..n, ..]).to_owned()).unwrap().len(), n);
        }
    }

    #[test]
    fn wrong_dimension_rejected() {
        let (m, _, _) = tiny();
        assert!(m.logits(&Array2::zeros((3, 7))).is_err());
    }

    #[test]
    fn permutation_equivariant_without_positions() {
        let (mut m, x, _) = tiny();
        m.config.positional_encoding = false;
        let perm = [5, 2, 11, 0, 7, 1, 9, 3, 10, 4, 8, 6];
        let xp = Array2::from_shape_fn(x.raw_dim(), |(i, j)| x[[perm[i], j]]);
        let a = m.logits(&x).unwrap();
        let b = m.logits(&xp).unwrap();
        for (i, &p) in perm.iter().enumerate() {
            assert!((b[i] - a[p]).abs() < 1e-12);
        }
    }

    #[test]
    fn attention_rows_are_distributions() {
        let (m, x, _) = tiny();
        for block in m.attention_maps(&x).unwrap() {
            for a in block {
                assert!(a.iter().all(|&p| p >= 0.0));
                for row in a.rows() {
                    assert!((row.sum() - 1.0).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn layer_norm_rows_are_standardized() {
        let (m, x, _) = tiny();
        for xhat in m.layer_norm_inputs(&x).unwrap() {
            for row in xhat.rows() {
                let n = row.len() as f64;
                let mean = row.sum() / n;
                let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                assert!(mean.abs() < 1e-6);
                assert!((var - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn gradient_scales_with_alpha() {
        let (m, x, y) = tiny();
        // Scaling by two is exact in binary floating point, so equality is bitwise.
        let (l1, g1) = m.loss_and_grad(&x, &y, 0.3, 1.0).unwrap();
        let (l2, g2) = m.loss_and_grad(&x, &y, 0.6, 1.0).unwrap();
        assert_eq!(l2, 2.0 * l1);
        for (a, b) in g1.tensors().iter().zip(g2.tensors()) {
            for (u, v) in a.iter().zip(b.iter()) {
                assert_eq!(*v, 2.0 * u);
            }
        }
    }

    #[test]
    fn gelu_derivative() {
        for &x in &[-3.0, -0.7, 0.0, 0.2, 2.5] {
            let fd = (gelu(x + 1e-6) - gelu(x - 1e-6)) / 2e-6;
            assert!((fd - gelu_grad(x)).abs() < 1e-8);
        }
    }

    #[test]
    fn two_blocks_supported() {
        let cfg = StreamConfig {
            d_k: 8,
            n_heads: 2,
            n_blocks: 2,
            ..StreamConfig::default()
        };
        let m = TransformerModel::new(3, &cfg).unwrap();
        assert_eq!(m.tensors().len(), 2 + 2 * 16 + 2);
        assert_eq!(m.tensor_names().len(), m.tensors().len());
        assert_eq!(m.logits(&Array2::ones((5, 3))).unwrap().len(), 5);
    }

    fn worst_relative_error(m: &TransformerModel, x: &Array2<f64>, y: &[u8]) -> Vec<(String, f64)> {
        let (_, grad) = m.loss_and_grad(x, y, 0.95, 1.0).unwrap();
        let loss = |p: &TransformerModel| p.loss_and_grad(x, y, 0.95, 1.0).unwrap().0;
        let h = 1e-5;
        let names = m.tensor_names();
        let mut out = Vec::new();
        for (t, g) in grad.tensors().iter().enumerate() {
            let mut worst: f64 = 0.0;
            for k in 0..g.len() {
                let mut plus = m.clone();
                plus.tensors_mut()[t].as_slice_mut().unwrap()[k] += h;
                let mut minus = m.clone();
                minus.tensors_mut()[t].as_slice_mut().unwrap()[k] -= h;
                let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
                let an = g.as_slice().unwrap()[k];
                worst = worst.max((fd - an).abs() / fd.abs().max(an.abs()).max(1e-6));
            }
            out.push((names[t].clone(), worst));
        }
        out
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (m, x, y) = tiny();
        for (name, err) in worst_relative_error(&m, &x, &y) {
            assert!(err < 1e-4, "{name}: {err}");
        }
    }

    #[test]
    fn two_block_gradient_matches_finite_differences() {
        let cfg = StreamConfig {
            d_k: 8,
            n_heads: 2,
            n_blocks: 2,
            mlp_hidden: Some(12),
            seed: 5,
            ..StreamConfig::default()
        };
        let m = TransformerModel::new(4, &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = Array2::from_shape_fn((7, 4), |_| rng.random_range(-1.0..1.0));
        let y: Vec<u8> = (0..7).map(|i| u8::from(i % 2 == 0)).collect();
        for (name, err) in worst_relative_error(&m, &x, &y) {
            assert!(err < 1e-4, "{name}: {err}");
        }
    }

    #[test]
    fn key_bias_gradient_vanishes() {
        // A key bias adds the same amount to every logit of a query row.
        let (m, x, y) = tiny();
        let (_, g) = m.loss_and_grad(&x, &y, 0.95, 1.0).unwrap();
        assert!(g.blocks[0].bk.iter().all(|v| v.abs() < 1e-15));
        assert!(g.blocks[0].bq.iter().any(|v| v.abs() > 1e-6));
    }

    #[test]
    fn confident_correct_model_has_vanishing_gradient() {
        let (mut m, x, _) = tiny();
        m.w_out.fill(0.0);
        m.b_out.fill(40.0);
        let (loss, grad) = m.loss_and_grad(&x, &[1; 12], 0.95, 1.0).unwrap();
        assert!(loss < 1e-15);
        for t in grad.tensors() {
            assert!(t.iter().all(|g| g.abs() < 1e-15));
        }
    }
}
