//! Frozen pre-norm causal transformer with adapter-decorated FFN sublayers,
//! and its hand-written reverse pass (input gradients only; base weights are
//! never differentiated).

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use super::config::ToyModelConfig;
use crate::adapter::{AdaptedFfn, AdapterConfig, FrozenFfn, LoraLayer, MoralLayer};
use crate::error::{Error, Result};
use crate::numerics::{dot, softmax, Matrix};
use crate::rng;

const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    gain: Vec<f64>,
    bias: Vec<f64>,
}

struct LnCache {
    normalized: Matrix,
    inv_std: Vec<f64>,
}

impl LayerNorm {
    fn identity(d: usize) -> Self {
        LayerNorm {
            gain: vec![1.0; d],
            bias: vec![0.0; d],
        }
    }

    fn forward(&self, x: &Matrix) -> (Matrix, LnCache) {
        let (t, d) = x.shape();
        let mut normalized = Matrix::zeros(t, d);
        let mut out = Matrix::zeros(t, d);
        let mut inv_std = Vec::with_capacity(t);
        for r in 0..t {
            let row = x.row(r);
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let inv = 1.0 / (var + LN_EPS).sqrt();
            inv_std.push(inv);
            for (c, v) in row.iter().enumerate() {
                let n = (v - mean) * inv;
                normalized.set(r, c, n);
                out.set(r, c, n * self.gain[c] + self.bias[c]);
            }
        }
        (out, LnCache { normalized, inv_std })
    }

    fn backward(&self, cache: &LnCache, grad: &Matrix) -> Matrix {
        let (t, d) = grad.shape();
        let mut out = Matrix::zeros(t, d);
        for r in 0..t {
            let g = grad.row(r);
            if g.iter().all(|v| *v == 0.0) {
                continue;
            }
            let xhat = cache.normalized.row(r);
            let gh: Vec<f64> = g.iter().zip(&self.gain).map(|(a, b)| a * b).collect();
            let mean_g = gh.iter().sum::<f64>() / d as f64;
            let mean_gx = dot(&gh, xhat) / d as f64;
            let inv = cache.inv_std[r];
            for (c, o) in out.row_mut(r).iter_mut().enumerate() {
                *o = inv * (gh[c] - mean_g - xhat[c] * mean_gx);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockWeights {
    ln1: LayerNorm,
    wq: Matrix,
    wk: Matrix,
    wv: Matrix,
    wo: Matrix,
    ln2: LayerNorm,
}

/// Every non-FFN weight of the model. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseWeights {
    tok_emb: Matrix,
    pos_emb: Matrix,
    blocks: Vec<BlockWeights>,
    lnf: LayerNorm,
    lm_head: Matrix,
}

struct BlockCache<C> {
    ln1: LnCache,
    q: Matrix,
    k: Matrix,
    v: Matrix,
    /// Per-head causal attention probabilities, `T × T` (upper triangle zero).
    probs: Vec<Matrix>,
    ln2: LnCache,
    ffn: Vec<C>,
}

struct ForwardCache<C> {
    blocks: Vec<BlockCache<C>>,
    lnf: LnCache,
}

/// Frozen toy LM; `F` decorates each FFN sublayer.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel<F = MoralLayer> {
    cfg: ToyModelConfig,
    base: BaseWeights,
    ffns: Vec<F>,
}

fn row_linear(w: &Matrix, x: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(x.rows(), w.rows());
    for r in 0..x.rows() {
        let y = w.matvec_unchecked(x.row(r));
        out.row_mut(r).copy_from_slice(&y);
    }
    out
}

fn row_linear_t_add(w: &Matrix, g: &Matrix, out: &mut Matrix) {
    for r in 0..g.rows() {
        let gr = g.row(r);
        if gr.iter().all(|v| *v == 0.0) {
            continue;
        }
        let y = w.matvec_t_unchecked(gr);
        for (o, v) in out.row_mut(r).iter_mut().zip(y) {
            *o += v;
        }
    }
}

fn add_in_place(a: &mut Matrix, b: &Matrix) {
    for (x, y) in a.as_mut_slice().iter_mut().zip(b.as_slice()) {
        *x += y;
    }
}

impl BaseWeights {
    fn random(cfg: &ToyModelConfig) -> Self {
        let d = cfg.d_model;
        let attn_bound = 1.0 / (d as f64).sqrt();
        let tensor = |path: &[u64], rows: usize, cols: usize, bound: f64| {
            let mut full = vec![rng::BASE];
            full.extend_from_slice(path);
            Matrix::random_uniform(rows, cols, bound, &mut rng::stream(cfg.seed, &full))
        };
        let tok_emb = tensor(&[0], cfg.vocab_size, d, 1.0);
        let pos_emb = tensor(&[1], cfg.max_seq_len, d, 0.2);
        let lm_head = tensor(&[2], cfg.vocab_size, d, 1.0);
        let blocks = (0..cfg.n_layers as u64)
            .map(|l| BlockWeights {
                ln1: LayerNorm::identity(d),
                wq: tensor(&[10, l, 0], d, d, attn_bound),
                wk: tensor(&[10, l, 1], d, d, attn_bound),
                wv: tensor(&[10, l, 2], d, d, attn_bound),
                wo: tensor(&[10, l, 3], d, d, attn_bound),
                ln2: LayerNorm::identity(d),
            })
            .collect();
        BaseWeights {
            tok_emb,
            pos_emb,
            blocks,
            lnf: LayerNorm::identity(d),
            lm_head,
        }
    }
}

fn random_ffn(cfg: &ToyModelConfig, layer: usize) -> Result<FrozenFfn> {
    let mut rng = rng::stream(cfg.seed, &[rng::BASE, 20, layer as u64]);
    FrozenFfn::random(cfg.d_model, cfg.d_ff, &mut rng)
}

/// Builds the seeded frozen model with a fresh MoRAL layer on every FFN.
pub fn build_frozen_model(cfg: ToyModelConfig, adapter: &AdapterConfig) -> Result<ToyModel<MoralLayer>> {
    ToyModel::build_with(cfg, |layer, ffn| MoralLayer::initialized(ffn, adapter, cfg.seed, layer))
}

impl ToyModel<MoralLayer> {
    pub fn build(cfg: ToyModelConfig, adapter: &AdapterConfig) -> Result<Self> {
        build_frozen_model(cfg, adapter)
    }
}

impl ToyModel<LoraLayer> {
    /// Same frozen base with a single plain LoRA per FFN.
    pub fn build_lora(cfg: ToyModelConfig, rank: usize, alpha: f64) -> Result<Self> {
        ToyModel::build_with(cfg, |layer, ffn| {
            LoraLayer::initialized(ffn, rank, alpha, cfg.seed, layer)
        })
    }
}

impl<F: AdaptedFfn> ToyModel<F> {
    pub fn build_with(cfg: ToyModelConfig, mut decorate: impl FnMut(usize, FrozenFfn) -> Result<F>) -> Result<Self> {
        cfg.validate()?;
        let base = BaseWeights::random(&cfg);
        let ffns = (0..cfg.n_layers)
            .map(|l| decorate(l, random_ffn(&cfg, l)?))
            .collect::<Result<Vec<_>>>()?;
        Ok(ToyModel { cfg, base, ffns })
    }

    pub(crate) fn from_parts(cfg: ToyModelConfig, base: BaseWeights, ffns: Vec<F>) -> Result<Self> {
        cfg.validate()?;
        if ffns.len() != cfg.n_layers || base.blocks.len() != cfg.n_layers {
            return Err(Error::Config("layer count does not match config".into()));
        }
        Ok(ToyModel { cfg, base, ffns })
    }

    pub fn config(&self) -> &ToyModelConfig {
        &self.cfg
    }

    pub fn ffns(&self) -> &[F] {
        &self.ffns
    }

    pub fn ffns_mut(&mut self) -> &mut [F] {
        &mut self.ffns
    }

    /// The same frozen model with every adapter stripped.
    pub fn undecorated(&self) -> ToyModel<FrozenFfn> {
        ToyModel {
            cfg: self.cfg,
            base: self.base.clone(),
            ffns: self.ffns.iter().map(|f| f.base().clone()).collect(),
        }
    }

    pub fn trainable_count(&self) -> usize {
        self.ffns.iter().map(AdaptedFfn::trainable_count).sum()
    }

    pub fn zero_grads(&self) -> Vec<Vec<Matrix>> {
        self.ffns.iter().map(AdaptedFfn::zero_grads).collect()
    }

    /// All frozen tensors, named, in serialization order.
    pub fn base_tensors(&self) -> Vec<(String, &Matrix)> {
        let b = &self.base;
        let mut out: Vec<(String, &Matrix)> = vec![("tok_emb".into(), &b.tok_emb), ("pos_emb".into(), &b.pos_emb)];
        for (l, (blk, ffn)) in b.blocks.iter().zip(&self.ffns).enumerate() {
            out.push((format!("block{l}.wq"), &blk.wq));
            out.push((format!("block{l}.wk"), &blk.wk));
            out.push((format!("block{l}.wv"), &blk.wv));
            out.push((format!("block{l}.wo"), &blk.wo));
            out.push((format!("block{l}.ffn.w1"), ffn.base().w1()));
            out.push((format!("block{l}.ffn.w2"), ffn.base().w2()));
        }
        out.push(("lm_head".into(), &b.lm_head));
        out
    }

    /// Layer-norm parameters, named, in serialization order.
    pub(crate) fn norm_vectors(&self) -> Vec<(String, &[f64])> {
        let b = &self.base;
        let mut out: Vec<(String, &[f64])> = Vec::new();
        for (l, blk) in b.blocks.iter().enumerate() {
            out.push((format!("block{l}.ln1.gain"), &blk.ln1.gain));
            out.push((format!("block{l}.ln1.bias"), &blk.ln1.bias));
            out.push((format!("block{l}.ln2.gain"), &blk.ln2.gain));
            out.push((format!("block{l}.ln2.bias"), &blk.ln2.bias));
        }
        out.push(("lnf.gain".into(), &b.lnf.gain));
        out.push(("lnf.bias".into(), &b.lnf.bias));
        out
    }

    /// SHA-256 over every frozen value, FFN weights included.
    pub fn base_fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for (name, m) in self.base_tensors() {
            hasher.update(name.as_bytes());
            for v in m.as_slice() {
                hasher.update(v.to_le_bytes());
            }
        }
        for (name, v) in self.norm_vectors() {
            hasher.update(name.as_bytes());
            for x in v {
                hasher.update(x.to_le_bytes());
            }
        }
        hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    fn check_tokens(&self, tokens: &[usize]) -> Result<()> {
        if tokens.is_empty() {
            return Err(Error::Input("empty token sequence".into()));
        }
        if tokens.len() > self.cfg.max_seq_len {
            return Err(Error::Input(format!(
                "sequence length {} exceeds max_seq_len {}",
                tokens.len(),
                self.cfg.max_seq_len
            )));
        }
        if let Some(t) = tokens.iter().find(|&&t| t >= self.cfg.vocab_size) {
            return Err(Error::Input(format!(
                "token {t} outside vocabulary of {}",
                self.cfg.vocab_size
            )));
        }
        Ok(())
    }

    fn run(&self, tokens: &[usize]) -> Result<(Matrix, ForwardCache<F::Cache>)> {
        self.check_tokens(tokens)?;
        let cfg = &self.cfg;
        let (t_len, d, dh) = (tokens.len(), cfg.d_model, cfg.head_dim());
        let scale = 1.0 / (dh as f64).sqrt();

        let mut x = Matrix::zeros(t_len, d);
        for (t, &tok) in tokens.iter().enumerate() {
            for (c, o) in x.row_mut(t).iter_mut().enumerate() {
                *o = self.base.tok_emb.get(tok, c) + self.base.pos_emb.get(t, c);
            }
        }

        let mut blocks = Vec::with_capacity(cfg.n_layers);
        for (blk, ffn) in self.base.blocks.iter().zip(&self.ffns) {
            let (a, ln1) = blk.ln1.forward(&x);
            let q = row_linear(&blk.wq, &a);
            let k = row_linear(&blk.wk, &a);
            let v = row_linear(&blk.wv, &a);
            let mut attended = Matrix::zeros(t_len, d);
            let mut probs = Vec::with_capacity(cfg.n_heads);
            for h in 0..cfg.n_heads {
                let cols = h * dh..(h + 1) * dh;
                let mut p = Matrix::zeros(t_len, t_len);
                for t in 0..t_len {
                    let qt = &q.row(t)[cols.clone()];
                    let scores: Vec<f64> = (0..=t).map(|s| dot(qt, &k.row(s)[cols.clone()]) * scale).collect();
                    let weights = softmax(&scores)?;
                    let out = &mut attended.row_mut(t)[cols.clone()];
                    for (s, w) in weights.iter().enumerate() {
                        for (o, vv) in out.iter_mut().zip(&v.row(s)[cols.clone()]) {
                            *o += w * vv;
                        }
                    }
                    p.row_mut(t)[..=t].copy_from_slice(&weights);
                }
                probs.push(p);
            }
            add_in_place(&mut x, &row_linear(&blk.wo, &attended));

            let (b, ln2) = blk.ln2.forward(&x);
            let mut ffn_caches = Vec::with_capacity(t_len);
            for t in 0..t_len {
                let (y, cache) = ffn.forward_cached(b.row(t))?;
                for (o, yy) in x.row_mut(t).iter_mut().zip(y) {
                    *o += yy;
                }
                ffn_caches.push(cache);
            }
            blocks.push(BlockCache {
                ln1,
                q,
                k,
                v,
                probs,
                ln2,
                ffn: ffn_caches,
            });
        }
        let (normed, lnf) = self.base.lnf.forward(&x);
        Ok((normed, ForwardCache { blocks, lnf }))
    }

    /// Next-token logits at every position (`T × vocab`).
    pub fn forward_lm(&self, tokens: &[usize]) -> Result<Matrix> {
        let (normed, _) = self.run(tokens)?;
        Ok(row_linear(&self.base.lm_head, &normed))
    }

    /// Logits for the token following the last position.
    pub fn next_token_logits(&self, tokens: &[usize]) -> Result<Vec<f64>> {
        let (normed, _) = self.run(tokens)?;
        Ok(self.base.lm_head.matvec_unchecked(normed.row(normed.rows() - 1)))
    }

    /// Summed cross-entropy of `tokens[start..]` given their prefixes, and the
    /// number of predicted tokens.
    pub fn answer_loss(&self, tokens: &[usize], start: usize) -> Result<(f64, usize)> {
        let (input, targets) = split_targets(tokens, start)?;
        let (normed, _) = self.run(input)?;
        let mut total = 0.0;
        for &(pos, target) in &targets {
            let logits = self.base.lm_head.matvec_unchecked(normed.row(pos));
            total += cross_entropy(&logits, target)?.0;
        }
        Ok((total, targets.len()))
    }

    /// As [`answer_loss`](Self::answer_loss), also accumulating the gradient
    /// of the summed loss into `grads` (one buffer list per layer).
    pub fn answer_loss_and_grads(
        &self,
        tokens: &[usize],
        start: usize,
        grads: &mut [Vec<Matrix>],
    ) -> Result<(f64, usize)> {
        let (input, targets) = split_targets(tokens, start)?;
        let (normed, cache) = self.run(input)?;
        let (t_len, d) = normed.shape();
        let mut total = 0.0;
        let mut grad_normed = Matrix::zeros(t_len, d);
        for &(pos, target) in &targets {
            let logits = self.base.lm_head.matvec_unchecked(normed.row(pos));
            let (loss, grad_logits) = cross_entropy(&logits, target)?;
            total += loss;
            let g = self.base.lm_head.matvec_t_unchecked(&grad_logits);
            for (o, v) in grad_normed.row_mut(pos).iter_mut().zip(g) {
                *o += v;
            }
        }
        self.backward(&cache, grad_normed, grads)?;
        Ok((total, targets.len()))
    }

    fn backward(&self, cache: &ForwardCache<F::Cache>, grad_normed: Matrix, grads: &mut [Vec<Matrix>]) -> Result<()> {
        let cfg = &self.cfg;
        let dh = cfg.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();
        let mut g = self.base.lnf.backward(&cache.lnf, &grad_normed);
        let t_len = g.rows();

        for (l, (blk, bc)) in self.base.blocks.iter().zip(&cache.blocks).enumerate().rev() {
            let ffn = &self.ffns[l];
            // FFN residual branch
            let mut grad_b = Matrix::zeros(t_len, cfg.d_model);
            for t in 0..t_len {
                let gt = g.row(t);
                if gt.iter().all(|v| *v == 0.0) {
                    continue;
                }
                let gb = ffn.backward(&bc.ffn[t], gt, &mut grads[l])?;
                grad_b.row_mut(t).copy_from_slice(&gb);
            }
            add_in_place(&mut g, &blk.ln2.backward(&bc.ln2, &grad_b));

            // attention residual branch
            let mut grad_attended = Matrix::zeros(t_len, cfg.d_model);
            row_linear_t_add(&blk.wo, &g, &mut grad_attended);
            let mut gq = Matrix::zeros(t_len, cfg.d_model);
            let mut gk = Matrix::zeros(t_len, cfg.d_model);
            let mut gv = Matrix::zeros(t_len, cfg.d_model);
            for (h, p) in bc.probs.iter().enumerate() {
                let cols = h * dh..(h + 1) * dh;
                for t in 0..t_len {
                    let go = &grad_attended.row(t)[cols.clone()];
                    if go.iter().all(|v| *v == 0.0) {
                        continue;
                    }
                    let pt = &p.row(t)[..=t];
                    let gp: Vec<f64> = (0..=t).map(|s| dot(go, &bc.v.row(s)[cols.clone()])).collect();
                    let mean = dot(pt, &gp);
                    for s in 0..=t {
                        for (o, x) in gv.row_mut(s)[cols.clone()].iter_mut().zip(go) {
                            *o += pt[s] * x;
                        }
                        let gs = pt[s] * (gp[s] - mean) * scale;
                        if gs == 0.0 {
                            continue;
                        }
                        for (o, kk) in gq.row_mut(t)[cols.clone()].iter_mut().zip(&bc.k.row(s)[cols.clone()]) {
                            *o += gs * kk;
                        }
                        for (o, qq) in gk.row_mut(s)[cols.clone()].iter_mut().zip(&bc.q.row(t)[cols.clone()]) {
                            *o += gs * qq;
                        }
                    }
                }
            }
            let mut grad_a = Matrix::zeros(t_len, cfg.d_model);
            row_linear_t_add(&blk.wq, &gq, &mut grad_a);
            row_linear_t_add(&blk.wk, &gk, &mut grad_a);
            row_linear_t_add(&blk.wv, &gv, &mut grad_a);
            add_in_place(&mut g, &blk.ln1.backward(&bc.ln1, &grad_a));
        }
        Ok(())
    }

    /// Mean answer-token loss and its gradient over a batch of
    /// `(tokens, answer_start)` examples. Per-example work runs in parallel;
    /// the reduction is sequential so results do not depend on scheduling.
    pub fn batch_loss_and_grads(&self, batch: &[(Vec<usize>, usize)]) -> Result<(f64, Vec<Vec<Matrix>>)> {
        let parts: Vec<Result<ExampleGrads>> = batch
            .par_iter()
            .map(|(tokens, start)| {
                let mut grads = self.zero_grads();
                let (loss, count) = self.answer_loss_and_grads(tokens, *start, &mut grads)?;
                Ok((loss, count, grads))
            })
            .collect();
        let mut total_loss = 0.0;
        let mut total_count = 0usize;
        let mut grads = self.zero_grads();
        for part in parts {
            let (loss, count, g) = part?;
            total_loss += loss;
            total_count += count;
            for (acc_layer, layer) in grads.iter_mut().zip(&g) {
                for (acc, m) in acc_layer.iter_mut().zip(layer) {
                    add_in_place(acc, m);
                }
            }
        }
        if total_count == 0 {
            return Err(Error::Input("batch has no answer tokens".into()));
        }
        let inv = 1.0 / total_count as f64;
        grads.iter_mut().flatten().for_each(|m| m.scale_in_place(inv));
        Ok((total_loss * inv, grads))
    }
}

/// Summed loss, scored token count and per-layer gradients of one example.
type ExampleGrads = (f64, usize, Vec<Vec<Matrix>>);

/// `(position, target)` pairs scored by the loss.
type Targets = Vec<(usize, usize)>;

/// Splits a full example into model input and `(position, target)` pairs.
fn split_targets(tokens: &[usize], start: usize) -> Result<(&[usize], Targets)> {
    if start == 0 || start >= tokens.len() {
        return Err(Error::Input(format!(
            "answer start {start} must lie inside the sequence of length {}",
            tokens.len()
        )));
    }
    let input = &tokens[..tokens.len() - 1];
    let targets = (start..tokens.len()).map(|i| (i - 1, tokens[i])).collect();
    Ok((input, targets))
}

fn cross_entropy(logits: &[f64], target: usize) -> Result<(f64, Vec<f64>)> {
    let mut probs = softmax(logits)?;
    let loss = -probs[target].max(f64::MIN_POSITIVE).ln();
    probs[target] -= 1.0;
    Ok((loss, probs))
}

impl BaseWeights {
    /// Reassembles frozen weights from named tensors (see `base_tensors`).
    pub(crate) fn from_named(
        cfg: &ToyModelConfig,
        tensors: &mut std::collections::BTreeMap<String, Matrix>,
        vectors: &mut std::collections::BTreeMap<String, Vec<f64>>,
    ) -> Result<(Self, Vec<FrozenFfn>)> {
        let mut take = |name: &str, rows: usize, cols: usize| -> Result<Matrix> {
            let m = tensors
                .remove(name)
                .ok_or_else(|| Error::Config(format!("base weights missing tensor {name}")))?;
            if m.shape() != (rows, cols) {
                return Err(Error::shape(
                    "base tensor",
                    format!("{name} {rows}×{cols}"),
                    format!("{:?}", m.shape()),
                ));
            }
            Ok(m)
        };
        let d = cfg.d_model;
        let tok_emb = take("tok_emb", cfg.vocab_size, d)?;
        let pos_emb = take("pos_emb", cfg.max_seq_len, d)?;
        let mut blocks = Vec::new();
        let mut ffns = Vec::new();
        for l in 0..cfg.n_layers {
            let wq = take(&format!("block{l}.wq"), d, d)?;
            let wk = take(&format!("block{l}.wk"), d, d)?;
            let wv = take(&format!("block{l}.wv"), d, d)?;
            let wo = take(&format!("block{l}.wo"), d, d)?;
            let w1 = take(&format!("block{l}.ffn.w1"), cfg.d_ff, d)?;
            let w2 = take(&format!("block{l}.ffn.w2"), d, cfg.d_ff)?;
            ffns.push(FrozenFfn::new(w1, w2)?);
            blocks.push((wq, wk, wv, wo));
        }
        let lm_head = take("lm_head", cfg.vocab_size, d)?;
        let mut norm = |name: String| -> Result<Vec<f64>> {
            let v = vectors
                .remove(&name)
                .ok_or_else(|| Error::Config(format!("base weights missing vector {name}")))?;
            if v.len() != d {
                return Err(Error::shape("layer norm", d, v.len()));
            }
            Ok(v)
        };
        let mut built = Vec::new();
        for (l, (wq, wk, wv, wo)) in blocks.into_iter().enumerate() {
            built.push(BlockWeights {
                ln1: LayerNorm {
                    gain: norm(format!("block{l}.ln1.gain"))?,
                    bias: norm(format!("block{l}.ln1.bias"))?,
                },
                wq,
                wk,
                wv,
                wo,
                ln2: LayerNorm {
                    gain: norm(format!("block{l}.ln2.gain"))?,
                    bias: norm(format!("block{l}.ln2.bias"))?,
                },
            });
        }
        let lnf = LayerNorm {
            gain: norm("lnf.gain".into())?,
            bias: norm("lnf.bias".into())?,
        };
        Ok((
            BaseWeights {
                tok_emb,
                pos_emb,
                blocks: built,
                lnf,
                lm_head,
            },
            ffns,
        ))
    }
}
