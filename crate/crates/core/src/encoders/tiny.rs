//! A small pre-LayerNorm transformer encoder trained from scratch.

use ndarray::Array2;
use rand::Rng;

use super::{EncodedInput, EncoderConfig, TextEncoder, Vocabulary};
use crate::autodiff::{Graph, ParamGroup, ParamId, ParamStore, Var};
use crate::error::{Error, Result};

const PREFIX: &str = "encoder";

#[derive(Debug, Clone, PartialEq)]
struct LayerParams {
    ln1_gain: ParamId,
    ln1_bias: ParamId,
    qkv_w: ParamId,
    qkv_b: ParamId,
    out_w: ParamId,
    out_b: ParamId,
    ln2_gain: ParamId,
    ln2_bias: ParamId,
    ff1_w: ParamId,
    ff1_b: ParamId,
    ff2_w: ParamId,
    ff2_b: ParamId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TinyEncoder {
    config: EncoderConfig,
    vocab: Vocabulary,
    tok_emb: ParamId,
    pos_emb: ParamId,
    layers: Vec<LayerParams>,
    final_gain: ParamId,
    final_bias: ParamId,
}

fn names(layer: usize) -> [String; 12] {
    let p = |n: &str| format!("{PREFIX}.layer{layer}.{n}");
    [
        p("ln1_gain"),
        p("ln1_bias"),
        p("qkv_w"),
        p("qkv_b"),
        p("out_w"),
        p("out_b"),
        p("ln2_gain"),
        p("ln2_bias"),
        p("ff1_w"),
        p("ff1_b"),
        p("ff2_w"),
        p("ff2_b"),
    ]
}

impl TinyEncoder {
    /// Registers freshly initialised parameters in `store`.
    pub fn init(config: EncoderConfig, vocab: Vocabulary, store: &mut ParamStore, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let d = config.hidden;
        let std = 0.02_f64.max(1.0 / (d as f64).sqrt() * 0.5);
        let g = ParamGroup::Encoder;
        let tok_emb = store.add_normal(format!("{PREFIX}.tok_emb"), g, (vocab.len(), d), std, rng);
        let pos_emb = store.add_normal(format!("{PREFIX}.pos_emb"), g, (config.max_len, d), std, rng);
        let ones = || Array2::ones((1, d));
        let zeros = |n: usize| Array2::zeros((1, n));
        let mut layers = Vec::with_capacity(config.layers);
        for l in 0..config.layers {
            let [ln1g, ln1b, qkvw, qkvb, outw, outb, ln2g, ln2b, f1w, f1b, f2w, f2b] = names(l);
            layers.push(LayerParams {
                ln1_gain: store.add(ln1g, g, ones()),
                ln1_bias: store.add(ln1b, g, zeros(d)),
                qkv_w: store.add_normal(qkvw, g, (d, 3 * d), std, rng),
                qkv_b: store.add(qkvb, g, zeros(3 * d)),
                out_w: store.add_normal(outw, g, (d, d), std, rng),
                out_b: store.add(outb, g, zeros(d)),
                ln2_gain: store.add(ln2g, g, ones()),
                ln2_bias: store.add(ln2b, g, zeros(d)),
                ff1_w: store.add_normal(f1w, g, (d, config.ffn), std, rng),
                ff1_b: store.add(f1b, g, zeros(config.ffn)),
                ff2_w: store.add_normal(f2w, g, (config.ffn, d), std, rng),
                ff2_b: store.add(f2b, g, zeros(d)),
            });
        }
        let final_gain = store.add(format!("{PREFIX}.final_gain"), g, ones());
        let final_bias = store.add(format!("{PREFIX}.final_bias"), g, zeros(d));
        Ok(TinyEncoder {
            config,
            vocab,
            tok_emb,
            pos_emb,
            layers,
            final_gain,
            final_bias,
        })
    }

    /// Re-binds to parameters already present in `store` (e.g. from a checkpoint).
    pub fn bind(config: EncoderConfig, vocab: Vocabulary, store: &ParamStore) -> Result<Self> {
        config.validate()?;
        let d = config.hidden;
        let expect = |name: &str, shape: (usize, usize)| -> Result<ParamId> {
            let id = store.require(name)?;
            let got = store.value(id).dim();
            if got != shape {
                return Err(Error::Checkpoint(format!("{name} has shape {got:?}, expected {shape:?}")));
            }
            Ok(id)
        };
        let tok_emb = expect(&format!("{PREFIX}.tok_emb"), (vocab.len(), d))?;
        let pos_emb = expect(&format!("{PREFIX}.pos_emb"), (config.max_len, d))?;
        let mut layers = Vec::with_capacity(config.layers);
        for l in 0..config.layers {
            let [ln1g, ln1b, qkvw, qkvb, outw, outb, ln2g, ln2b, f1w, f1b, f2w, f2b] = names(l);
            layers.push(LayerParams {
                ln1_gain: expect(&ln1g, (1, d))?,
                ln1_bias: expect(&ln1b, (1, d))?,
                qkv_w: expect(&qkvw, (d, 3 * d))?,
                qkv_b: expect(&qkvb, (1, 3 * d))?,
                out_w: expect(&outw, (d, d))?,
                out_b: expect(&outb, (1, d))?,
                ln2_gain: expect(&ln2g, (1, d))?,
                ln2_bias: expect(&ln2b, (1, d))?,
                ff1_w: expect(&f1w, (d, config.ffn))?,
                ff1_b: expect(&f1b, (1, config.ffn))?,
                ff2_w: expect(&f2w, (config.ffn, d))?,
                ff2_b: expect(&f2b, (1, d))?,
            });
        }
        Ok(TinyEncoder {
            final_gain: expect(&format!("{PREFIX}.final_gain"), (1, d))?,
            final_bias: expect(&format!("{PREFIX}.final_bias"), (1, d))?,
            config,
            vocab,
            tok_emb,
            pos_emb,
            layers,
        })
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    fn attention(&self, g: &mut Graph, h: Var, layer: &LayerParams) -> Var {
        let d = self.config.hidden;
        let heads = self.config.heads;
        let dh = d / heads;
        let qkv = g.linear(h, layer.qkv_w, layer.qkv_b);
        let mut outs = Vec::with_capacity(heads);
        for head in 0..heads {
            let q = g.slice_cols(qkv, head * dh, (head + 1) * dh);
            let k = g.slice_cols(qkv, d + head * dh, d + (head + 1) * dh);
            let v = g.slice_cols(qkv, 2 * d + head * dh, 2 * d + (head + 1) * dh);
            let scores = g.matmul_t(q, k);
            let scores = g.scale(scores, 1.0 / (dh as f64).sqrt());
            let weights = g.softmax_rows(scores);
            outs.push(g.matmul(weights, v));
        }
        let joined = if outs.len() == 1 { outs[0] } else { g.concat_cols(&outs) };
        g.linear(joined, layer.out_w, layer.out_b)
    }
}

impl TextEncoder for TinyEncoder {
    fn config(&self) -> &EncoderConfig {
        &self.config
    }

    fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    fn forward(&self, g: &mut Graph, input: &EncodedInput) -> Var {
        let n = input.token_ids.len();
        assert!(n > 0 && n <= self.config.max_len, "input of {n} tokens");
        let positions: Vec<usize> = (0..n).collect();
        let tok = g.gather(self.tok_emb, &input.token_ids);
        let pos = g.gather(self.pos_emb, &positions);
        let mut x = g.add(tok, pos);
        for layer in &self.layers {
            let h = g.layer_norm(x, layer.ln1_gain, layer.ln1_bias);
            let att = self.attention(g, h, layer);
            x = g.add(x, att);
            let h = g.layer_norm(x, layer.ln2_gain, layer.ln2_bias);
            let f = g.linear(h, layer.ff1_w, layer.ff1_b);
            let f = g.gelu(f);
            let f = g.linear(f, layer.ff2_w, layer.ff2_b);
            x = g.add(x, f);
        }
        g.layer_norm(x, self.final_gain, self.final_bias)
    }
}
