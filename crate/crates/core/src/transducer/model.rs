use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use morphome_nn::{Graph, ParamId, ParamStore, Scalar, Tensor, Var};

use super::config::{Activation, ModelConfig, PositionEncoding};
use super::vocab::{Vocabulary, BOS, EOS, PAD};
use crate::error::Result;

/// Shape-determining part of the configuration, stored with checkpoints.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub vocab_size: usize,
    pub layers: usize,
    pub heads: usize,
    pub dim: usize,
    pub ff_dim: usize,
    pub activation: Activation,
    pub positions: PositionEncoding,
    pub tie_output: bool,
    pub max_positions: usize,
}

impl Architecture {
    pub fn from_config(config: &ModelConfig, vocab_size: usize) -> Self {
        Self {
            vocab_size,
            layers: config.layers,
            heads: config.heads,
            dim: config.embedding_dim,
            ff_dim: config.feed_forward_dim,
            activation: config.activation,
            positions: config.positions,
            tie_output: config.tie_output,
            max_positions: config.max_positions,
        }
    }
}

struct Norm {
    gain: ParamId,
    bias: ParamId,
}

struct Attention {
    wq: ParamId,
    bq: ParamId,
    wk: ParamId,
    bk: ParamId,
    wv: ParamId,
    bv: ParamId,
    wo: ParamId,
    bo: ParamId,
}

struct FeedForward {
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
}

struct EncoderLayer {
    norm1: Norm,
    attn: Attention,
    norm2: Norm,
    ffn: FeedForward,
}

struct DecoderLayer {
    norm1: Norm,
    self_attn: Attention,
    norm2: Norm,
    cross_attn: Attention,
    norm3: Norm,
    ffn: FeedForward,
}

struct Layout {
    src_embed: ParamId,
    tgt_embed: ParamId,
    src_pos: Option<ParamId>,
    tgt_pos: Option<ParamId>,
    encoder: Vec<EncoderLayer>,
    encoder_norm: Norm,
    decoder: Vec<DecoderLayer>,
    decoder_norm: Norm,
    out_proj: Option<ParamId>,
    out_bias: ParamId,
}

struct Builder<'a, T: Scalar> {
    store: &'a mut ParamStore<T>,
    rng: &'a mut ChaCha8Rng,
}

impl<T: Scalar> Builder<'_, T> {
    fn xavier(&mut self, name: String, fan_in: usize, fan_out: usize) -> ParamId {
        let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let t = Tensor::uniform(&[fan_in, fan_out], -a, a, self.rng);
        self.store.add(name, t)
    }

    fn normal(&mut self, name: String, shape: &[usize], std: f64) -> ParamId {
        let t = Tensor::normal(shape, std, self.rng);
        self.store.add(name, t)
    }

    fn zeros(&mut self, name: String, n: usize) -> ParamId {
        self.store.add(name, Tensor::zeros(&[n]))
    }

    fn norm(&mut self, name: &str, d: usize) -> Norm {
        Norm {
            gain: self.store.add(format!("{name}.gain"), Tensor::full(&[d], T::one())),
            bias: self.zeros(format!("{name}.bias"), d),
        }
    }

    fn attention(&mut self, name: &str, d: usize) -> Attention {
        Attention {
            wq: self.xavier(format!("{name}.wq"), d, d),
            bq: self.zeros(format!("{name}.bq"), d),
            wk: self.xavier(format!("{name}.wk"), d, d),
            bk: self.zeros(format!("{name}.bk"), d),
            wv: self.xavier(format!("{name}.wv"), d, d),
            bv: self.zeros(format!("{name}.bv"), d),
            wo: self.xavier(format!("{name}.wo"), d, d),
            bo: self.zeros(format!("{name}.bo"), d),
        }
    }

    fn ffn(&mut self, name: &str, d: usize, ff: usize) -> FeedForward {
        FeedForward {
            w1: self.xavier(format!("{name}.w1"), d, ff),
            b1: self.zeros(format!("{name}.b1"), ff),
            w2: self.xavier(format!("{name}.w2"), ff, d),
            b2: self.zeros(format!("{name}.b2"), d),
        }
    }
}

/// Registers every parameter in a fixed order. Creation order defines the
/// parameter names, so a layout can be rebuilt over loaded weights.
fn build_layout<T: Scalar>(
    arch: &Architecture,
    init_std: f64,
    store: &mut ParamStore<T>,
    rng: &mut ChaCha8Rng,
) -> Layout {
    let (v, d, ff) = (arch.vocab_size, arch.dim, arch.ff_dim);
    let mut b = Builder { store, rng };
    let src_embed = b.normal("src_embed".into(), &[v, d], init_std);
    let tgt_embed = b.normal("tgt_embed".into(), &[v, d], init_std);
    let (src_pos, tgt_pos) = match arch.positions {
        PositionEncoding::Learned => (
            Some(b.normal("src_pos".into(), &[arch.max_positions, d], init_std)),
            Some(b.normal("tgt_pos".into(), &[arch.max_positions, d], init_std)),
        ),
        PositionEncoding::Sinusoidal => (None, None),
    };
    let encoder = (0..arch.layers)
        .map(|i| EncoderLayer {
            norm1: b.norm(&format!("enc.{i}.norm1"), d),
            attn: b.attention(&format!("enc.{i}.attn"), d),
            norm2: b.norm(&format!("enc.{i}.norm2"), d),
            ffn: b.ffn(&format!("enc.{i}.ffn"), d, ff),
        })
        .collect();
    let encoder_norm = b.norm("enc.norm", d);
    let decoder = (0..arch.layers)
        .map(|i| DecoderLayer {
            norm1: b.norm(&format!("dec.{i}.norm1"), d),
            self_attn: b.attention(&format!("dec.{i}.self_attn"), d),
            norm2: b.norm(&format!("dec.{i}.norm2"), d),
            cross_attn: b.attention(&format!("dec.{i}.cross_attn"), d),
            norm3: b.norm(&format!("dec.{i}.norm3"), d),
            ffn: b.ffn(&format!("dec.{i}.ffn"), d, ff),
        })
        .collect();
    let decoder_norm = b.norm("dec.norm", d);
    let out_proj = (!arch.tie_output).then(|| b.normal("out_proj".into(), &[d, v], init_std));
    let out_bias = b.zeros("out_bias".into(), v);
    Layout {
        src_embed,
        tgt_embed,
        src_pos,
        tgt_pos,
        encoder,
        encoder_norm,
        decoder,
        decoder_norm,
        out_proj,
        out_bias,
    }
}

/// Sinusoidal position table, `[max_positions, dim]` row-major.
fn sinusoidal_table(max_positions: usize, dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; max_positions * dim];
    let half = dim / 2;
    for pos in 0..max_positions {
        for i in 0..half {
            let rate = (-(10_000f64.ln()) * (2 * i) as f64 / dim as f64).exp();
            let angle = pos as f64 * rate;
            out[pos * dim + 2 * i] = angle.sin();
            out[pos * dim + 2 * i + 1] = angle.cos();
        }
    }
    out
}

/// Padded id matrices for a batch of (source, target) pairs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Batch {
    pub size: usize,
    pub src_len: usize,
    /// `[size, src_len]`, PAD-filled.
    pub src: Vec<usize>,
    pub tgt_len: usize,
    /// BOS + target, `[size, tgt_len]`.
    pub tgt_in: Vec<usize>,
    /// Target + EOS, `[size, tgt_len]`.
    pub tgt_out: Vec<usize>,
}

impl Batch {
    pub fn new(pairs: &[(&[usize], &[usize])]) -> Self {
        let src_len = pairs.iter().map(|(s, _)| s.len()).max().unwrap_or(0).max(1);
        let tgt_len = pairs.iter().map(|(_, t)| t.len() + 1).max().unwrap_or(1);
        Self::padded(pairs, src_len, tgt_len)
    }

    /// Pads to explicit lengths (at least the natural ones).
    pub fn padded(pairs: &[(&[usize], &[usize])], src_len: usize, tgt_len: usize) -> Self {
        let size = pairs.len();
        let mut src = vec![PAD; size * src_len];
        let mut tgt_in = vec![PAD; size * tgt_len];
        let mut tgt_out = vec![PAD; size * tgt_len];
        for (b, (s, t)) in pairs.iter().enumerate() {
            assert!(
                s.len() <= src_len && t.len() < tgt_len,
                "padding shorter than the sequence"
            );
            src[b * src_len..b * src_len + s.len()].copy_from_slice(s);
            tgt_in[b * tgt_len] = BOS;
            tgt_in[b * tgt_len + 1..b * tgt_len + 1 + t.len()].copy_from_slice(t);
            tgt_out[b * tgt_len..b * tgt_len + t.len()].copy_from_slice(t);
            tgt_out[b * tgt_len + t.len()] = EOS;
        }
        Self {
            size,
            src_len,
            src,
            tgt_len,
            tgt_in,
            tgt_out,
        }
    }

    /// Non-pad target tokens (including EOS).
    pub fn target_tokens(&self) -> usize {
        self.tgt_out.iter().filter(|&&t| t != PAD).count()
    }
}

/// Encoder output for a batch.
pub struct Encoded {
    pub memory: Var,
    pub batch: usize,
    pub src_len: usize,
    /// `[batch, src_len]`, true at real tokens.
    pub src_keep: Vec<bool>,
    /// Self-attention weights per encoder layer, `[batch * heads, src_len, src_len]`.
    pub self_weights: Vec<Var>,
}

/// Cross-attention keys and values per decoder layer, computed once per source.
pub struct CrossCache {
    kv: Vec<(Var, Var)>,
    batch: usize,
    src_len: usize,
    src_keep: Vec<bool>,
}

/// Character-level encoder-decoder transformer.
pub struct Transducer<T: Scalar> {
    pub arch: Architecture,
    pub vocab: Vocabulary,
    pub params: ParamStore<T>,
    layout: Layout,
    positions: Vec<T>,
}

impl<T: Scalar> Transducer<T> {
    /// Freshly initialized model.
    pub fn new(config: &ModelConfig, vocab: Vocabulary, seed: u64) -> Self {
        let arch = Architecture::from_config(config, vocab.len());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let layout = build_layout(&arch, config.init_std, &mut params, &mut rng);
        Self::assemble(arch, vocab, params, layout)
    }

    fn assemble(arch: Architecture, vocab: Vocabulary, params: ParamStore<T>, layout: Layout) -> Self {
        let positions = sinusoidal_table(arch.max_positions, arch.dim)
            .into_iter()
            .map(T::lit)
            .collect();
        Self {
            arch,
            vocab,
            params,
            layout,
            positions,
        }
    }

    /// Rebuilds a model around existing parameter values (same names and shapes).
    pub fn from_params(arch: Architecture, vocab: Vocabulary, loaded: &[(String, Tensor<T>)]) -> Result<Self> {
        let mut params = ParamStore::new();
        let layout = build_layout(&arch, 0.02, &mut params, &mut ChaCha8Rng::seed_from_u64(0));
        let mut found = 0;
        for (name, tensor) in loaded {
            let Some(id) = params.find(name) else { continue };
            if params.value(id).shape() != tensor.shape() {
                return Err(crate::Error::Config(format!(
                    "parameter {name}: stored shape {:?}, architecture expects {:?}",
                    tensor.shape(),
                    params.value(id).shape()
                )));
            }
            *params.value_mut(id) = tensor.clone();
            found += 1;
        }
        if found != params.len() {
            return Err(crate::Error::Config(format!(
                "checkpoint provides {found} of {} parameters",
                params.len()
            )));
        }
        Ok(Self::assemble(arch, vocab, params, layout))
    }

    /// Copy of this model with parameters converted to another precision.
    pub fn cast<U: Scalar>(&self) -> Transducer<U> {
        let loaded: Vec<(String, Tensor<U>)> = self.params.iter().map(|p| (p.name.clone(), p.value.cast())).collect();
        Transducer::from_params(self.arch.clone(), self.vocab.clone(), &loaded).expect("same architecture")
    }

    fn embed(
        &self,
        g: &mut Graph<'_, T>,
        table: ParamId,
        pos: Option<ParamId>,
        ids: &[usize],
        batch: usize,
        len: usize,
        dropout: f64,
    ) -> Result<Var> {
        let d = self.arch.dim;
        let t = g.param(table);
        let x = g.embedding(t, ids)?;
        let x = g.scale(x, T::lit((d as f64).sqrt()))?;
        let x = match pos {
            Some(p) => {
                let table = g.param(p);
                let positions: Vec<usize> = (0..batch * len).map(|i| i % len).collect();
                let pe = g.embedding(table, &positions)?;
                g.add(x, pe)?
            }
            None => {
                if len > self.arch.max_positions {
                    return Err(crate::Error::Config(format!(
                        "sequence of {len} tokens exceeds max_positions {}",
                        self.arch.max_positions
                    )));
                }
                let mut data = Vec::with_capacity(batch * len * d);
                for _ in 0..batch {
                    data.extend_from_slice(&self.positions[..len * d]);
                }
                let pe = g.constant(Tensor::new(&[batch * len, d], data)?);
                g.add(x, pe)?
            }
        };
        let x = g.reshape(x, &[batch, len, d])?;
        Ok(g.dropout(x, dropout)?)
    }

    fn norm(&self, g: &mut Graph<'_, T>, n: &Norm, x: Var) -> Result<Var> {
        let (gain, bias) = (g.param(n.gain), g.param(n.bias));
        Ok(g.layer_norm(x, gain, bias, 1e-5)?)
    }

    fn linear(&self, g: &mut Graph<'_, T>, x: Var, w: ParamId, b: ParamId) -> Result<Var> {
        let (wv, bv) = (g.param(w), g.param(b));
        let y = g.matmul(x, wv, false, false)?;
        Ok(g.add_bias(y, bv)?)
    }

    fn project_kv(&self, g: &mut Graph<'_, T>, a: &Attention, x: Var) -> Result<(Var, Var)> {
        let k = self.linear(g, x, a.wk, a.bk)?;
        let v = self.linear(g, x, a.wv, a.bv)?;
        let h = self.arch.heads;
        Ok((g.split_heads(k, h)?, g.split_heads(v, h)?))
    }

    /// Multi-head attention of `x` over precomputed key/value heads. `keep`
    /// is `[batch, tq, tk]` and is shared by all heads.
    fn attend(
        &self,
        g: &mut Graph<'_, T>,
        a: &Attention,
        x: Var,
        kv: (Var, Var),
        keep: &[bool],
        dropout: f64,
    ) -> Result<(Var, Var)> {
        let h = self.arch.heads;
        let q = self.linear(g, x, a.wq, a.bq)?;
        let q = g.split_heads(q, h)?;
        let s = g.shape(x).to_vec();
        let (batch, tq) = (s[0], s[1]);
        let tk = g.shape(kv.0)[1];
        let mut mask = Vec::with_capacity(batch * h * tq * tk);
        for b in 0..batch {
            for _ in 0..h {
                mask.extend_from_slice(&keep[b * tq * tk..(b + 1) * tq * tk]);
            }
        }
        let (o, weights) = g.attention(q, kv.0, kv.1, &mask)?;
        let o = g.merge_heads(o, h)?;
        let o = self.linear(g, o, a.wo, a.bo)?;
        Ok((g.dropout(o, dropout)?, weights))
    }

    fn feed_forward(&self, g: &mut Graph<'_, T>, f: &FeedForward, x: Var, dropout: f64) -> Result<Var> {
        let hdn = self.linear(g, x, f.w1, f.b1)?;
        let hdn = match self.arch.activation {
            Activation::Relu => g.relu(hdn)?,
            Activation::Gelu => g.gelu(hdn)?,
        };
        let o = self.linear(g, hdn, f.w2, f.b2)?;
        Ok(g.dropout(o, dropout)?)
    }

    /// Runs the encoder over `[batch, src_len]` ids.
    pub fn encode(
        &self,
        g: &mut Graph<'_, T>,
        src: &[usize],
        batch: usize,
        src_len: usize,
        dropout: f64,
    ) -> Result<Encoded> {
        let l = &self.layout;
        let mut x = self.embed(g, l.src_embed, l.src_pos, src, batch, src_len, dropout)?;
        let src_keep: Vec<bool> = src.iter().map(|&t| t != PAD).collect();
        let mut keep = Vec::with_capacity(batch * src_len * src_len);
        for b in 0..batch {
            for _ in 0..src_len {
                keep.extend_from_slice(&src_keep[b * src_len..(b + 1) * src_len]);
            }
        }
        let mut self_weights = Vec::new();
        for layer in &l.encoder {
            let n = self.norm(g, &layer.norm1, x)?;
            let kv = self.project_kv(g, &layer.attn, n)?;
            let (a, w) = self.attend(g, &layer.attn, n, kv, &keep, dropout)?;
            self_weights.push(w);
            x = g.add(x, a)?;
            let n = self.norm(g, &layer.norm2, x)?;
            let f = self.feed_forward(g, &layer.ffn, n, dropout)?;
            x = g.add(x, f)?;
        }
        let memory = self.norm(g, &l.encoder_norm, x)?;
        Ok(Encoded {
            memory,
            batch,
            src_len,
            src_keep,
            self_weights,
        })
    }

    pub fn cross_cache(&self, g: &mut Graph<'_, T>, enc: &Encoded) -> Result<CrossCache> {
        let kv = self
            .layout
            .decoder
            .iter()
            .map(|layer| self.project_kv(g, &layer.cross_attn, enc.memory))
            .collect::<Result<_>>()?;
        Ok(CrossCache {
            kv,
            batch: enc.batch,
            src_len: enc.src_len,
            src_keep: enc.src_keep.clone(),
        })
    }

    /// Copies the cache rows of the sources in `rows` from graph `from` into
    /// graph `to` as constants (inference only).
    pub fn select_cache(
        &self,
        from: &Graph<'_, T>,
        to: &mut Graph<'_, T>,
        cache: &CrossCache,
        rows: &[usize],
    ) -> Result<CrossCache> {
        let h = self.arch.heads;
        let pick = |to: &mut Graph<'_, T>, v: Var| -> Result<Var> {
            let t = from.value(v);
            let s = t.shape();
            let per = s[1] * s[2] * h;
            let mut data = Vec::with_capacity(per * rows.len());
            for &r in rows {
                data.extend_from_slice(&t.data()[r * per..(r + 1) * per]);
            }
            Ok(to.constant(Tensor::new(&[rows.len() * h, s[1], s[2]], data)?))
        };
        let mut kv = Vec::with_capacity(cache.kv.len());
        for &(k, v) in &cache.kv {
            kv.push((pick(to, k)?, pick(to, v)?));
        }
        let mut src_keep = Vec::with_capacity(rows.len() * cache.src_len);
        for &r in rows {
            src_keep.extend_from_slice(&cache.src_keep[r * cache.src_len..(r + 1) * cache.src_len]);
        }
        Ok(CrossCache {
            kv,
            batch: rows.len(),
            src_len: cache.src_len,
            src_keep,
        })
    }

    /// Decoder logits `[batch * tgt_len, vocab]` for `[batch, tgt_len]` input ids.
    pub fn decode(
        &self,
        g: &mut Graph<'_, T>,
        cache: &CrossCache,
        tgt_in: &[usize],
        tgt_len: usize,
        dropout: f64,
    ) -> Result<Var> {
        let l = &self.layout;
        let batch = cache.batch;
        let mut x = self.embed(g, l.tgt_embed, l.tgt_pos, tgt_in, batch, tgt_len, dropout)?;
        let mut self_keep = Vec::with_capacity(batch * tgt_len * tgt_len);
        for b in 0..batch {
            for q in 0..tgt_len {
                for k in 0..tgt_len {
                    self_keep.push(k <= q && (k == 0 || tgt_in[b * tgt_len + k] != PAD));
                }
            }
        }
        let mut cross_keep = Vec::with_capacity(batch * tgt_len * cache.src_len);
        for b in 0..batch {
            for _ in 0..tgt_len {
                cross_keep.extend_from_slice(&cache.src_keep[b * cache.src_len..(b + 1) * cache.src_len]);
            }
        }
        for (layer, &cross_kv) in l.decoder.iter().zip(&cache.kv) {
            let n = self.norm(g, &layer.norm1, x)?;
            let kv = self.project_kv(g, &layer.self_attn, n)?;
            let (a, _) = self.attend(g, &layer.self_attn, n, kv, &self_keep, dropout)?;
            x = g.add(x, a)?;
            let n = self.norm(g, &layer.norm2, x)?;
            let (c, _) = self.attend(g, &layer.cross_attn, n, cross_kv, &cross_keep, dropout)?;
            x = g.add(x, c)?;
            let n = self.norm(g, &layer.norm3, x)?;
            let f = self.feed_forward(g, &layer.ffn, n, dropout)?;
            x = g.add(x, f)?;
        }
        let x = self.norm(g, &l.decoder_norm, x)?;
        let x = g.reshape(x, &[batch * tgt_len, self.arch.dim])?;
        let logits = match l.out_proj {
            Some(w) => {
                let w = g.param(w);
                g.matmul(x, w, false, false)?
            }
            None => {
                let e = g.param(l.tgt_embed);
                g.matmul(x, e, false, true)?
            }
        };
        let bias = g.param(l.out_bias);
        Ok(g.add_bias(logits, bias)?)
    }

    /// Token-averaged label-smoothed loss of a batch.
    pub fn loss(&self, g: &mut Graph<'_, T>, batch: &Batch, smoothing: f64, dropout: f64) -> Result<Var> {
        let enc = self.encode(g, &batch.src, batch.size, batch.src_len, dropout)?;
        let cache = self.cross_cache(g, &enc)?;
        let logits = self.decode(g, &cache, &batch.tgt_in, batch.tgt_len, dropout)?;
        Ok(g.label_smoothed_nll(logits, &batch.tgt_out, smoothing, Some(PAD))?)
    }

    /// Per-example loss sums (eval mode) and their token counts.
    pub fn example_losses(&self, batch: &Batch, smoothing: f64) -> Result<Vec<(f64, usize)>> {
        let mut g = Graph::new(&self.params).no_grad();
        let enc = self.encode(&mut g, &batch.src, batch.size, batch.src_len, 0.0)?;
        let cache = self.cross_cache(&mut g, &enc)?;
        let logits = self.decode(&mut g, &cache, &batch.tgt_in, batch.tgt_len, 0.0)?;
        let lp = g.log_softmax(logits)?;
        let lp = g.value(lp);
        let v = self.arch.vocab_size;
        let mut out = Vec::with_capacity(batch.size);
        for b in 0..batch.size {
            let mut total = 0.0;
            let mut count = 0;
            for t in 0..batch.tgt_len {
                let target = batch.tgt_out[b * batch.tgt_len + t];
                if target == PAD {
                    continue;
                }
                let row = lp.row(b * batch.tgt_len + t);
                let nll = -row[target].to_f64().unwrap_or(f64::NAN);
                let mean_nll = -row.iter().map(|x| x.to_f64().unwrap_or(f64::NAN)).sum::<f64>() / v as f64;
                total += (1.0 - smoothing) * nll + smoothing * mean_nll;
                count += 1;
            }
            out.push((total, count));
        }
        Ok(out)
    }

    pub fn num_parameters(&self) -> usize {
        self.params.num_scalars()
    }
}
