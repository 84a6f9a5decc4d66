//! A small bidirectional recurrent tagger with exact analytic gradients.
//!
//! Each token is embedded through a hashed vocabulary, concatenated with a
//! predicate-indicator embedding, and fed to a forward and a backward tanh
//! recurrence. The two hidden states are projected to one logit per tag and
//! normalized with a log-softmax.

use std::fmt::Write as _;
use std::fs;
use std::ops::Range;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::Instance;
use crate::error::{Error, Result};
use crate::span_algebra::TagSet;

/// Shape of a tagger.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ModelDims {
    pub buckets: usize,
    pub embed: usize,
    pub hidden: usize,
    pub num_tags: usize,
}

impl ModelDims {
    pub fn new(buckets: usize, embed: usize, hidden: usize, num_tags: usize) -> Result<Self> {
        let dims = ModelDims {
            buckets,
            embed,
            hidden,
            num_tags,
        };
        if buckets == 0 || embed == 0 || hidden == 0 || num_tags == 0 {
            return Err(Error::Argument(format!("all model dimensions must be >= 1, got {dims:?}")));
        }
        Ok(dims)
    }

    fn input(&self) -> usize {
        2 * self.embed
    }

    pub fn layout(&self) -> Layout {
        let mut offset = 0;
        let mut block = |len: usize| {
            let r = offset..offset + len;
            offset += len;
            r
        };
        let (e, h, t, x) = (self.embed, self.hidden, self.num_tags, self.input());
        let word_emb = block(self.buckets * e);
        let pred_emb = block(2 * e);
        let fw_in = block(h * x);
        let fw_rec = block(h * h);
        let fw_bias = block(h);
        let bw_in = block(h * x);
        let bw_rec = block(h * h);
        let bw_bias = block(h);
        let out_w = block(t * 2 * h);
        let out_b = block(t);
        Layout {
            word_emb,
            pred_emb,
            fw_in,
            fw_rec,
            fw_bias,
            bw_in,
            bw_rec,
            bw_bias,
            out_w,
            out_b,
            total: offset,
        }
    }

    pub fn num_params(&self) -> usize {
        self.layout().total
    }
}

/// Offsets of each parameter block in the flat vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layout {
    pub word_emb: Range<usize>,
    pub pred_emb: Range<usize>,
    pub fw_in: Range<usize>,
    pub fw_rec: Range<usize>,
    pub fw_bias: Range<usize>,
    pub bw_in: Range<usize>,
    pub bw_rec: Range<usize>,
    pub bw_bias: Range<usize>,
    pub out_w: Range<usize>,
    pub out_b: Range<usize>,
    pub total: usize,
}

impl Layout {
    /// `(name, range, rows, cols, is_bias)` for every block, in storage order.
    pub fn blocks(&self, dims: &ModelDims) -> Vec<(&'static str, Range<usize>, usize, usize, bool)> {
        let (e, h, t, x) = (dims.embed, dims.hidden, dims.num_tags, dims.input());
        vec![
            ("word_emb", self.word_emb.clone(), dims.buckets, e, false),
            ("pred_emb", self.pred_emb.clone(), 2, e, false),
            ("fw_in", self.fw_in.clone(), h, x, false),
            ("fw_rec", self.fw_rec.clone(), h, h, false),
            ("fw_bias", self.fw_bias.clone(), h, 1, true),
            ("bw_in", self.bw_in.clone(), h, x, false),
            ("bw_rec", self.bw_rec.clone(), h, h, false),
            ("bw_bias", self.bw_bias.clone(), h, 1, true),
            ("out_w", self.out_w.clone(), t, 2 * h, false),
            ("out_b", self.out_b.clone(), t, 1, true),
        ]
    }
}

/// Flat parameter vector plus the dimensions and seed that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub dims: ModelDims,
    pub seed: u64,
    pub values: Vec<f64>,
}

/// Gradient with the same layout as [`ModelParams::values`].
#[derive(Clone, Debug, PartialEq)]
pub struct ParamGradients {
    pub values: Vec<f64>,
}

impl ParamGradients {
    pub fn zeros(dims: &ModelDims) -> Self {
        ParamGradients {
            values: vec![0.0; dims.num_params()],
        }
    }

    pub fn add_scaled(&mut self, other: &ParamGradients, scale: f64) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += scale * b;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for v in &mut self.values {
            *v *= factor;
        }
    }
}

/// Uniform Glorot initialization per block; biases start at zero.
pub fn init_params(dims: ModelDims, seed: u64) -> ModelParams {
    let layout = dims.layout();
    let mut values = vec![0.0; layout.total];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (_, range, rows, cols, is_bias) in layout.blocks(&dims) {
        if is_bias {
            continue;
        }
        let r = glorot_bound(rows, cols);
        for v in &mut values[range] {
            *v = rng.gen_range(-r..=r);
        }
    }
    ModelParams { dims, seed, values }
}

pub fn glorot_bound(fan_out: usize, fan_in: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// 64-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn bucket_of(word: &str, buckets: usize) -> usize {
    (fnv1a(word.as_bytes()) % buckets as u64) as usize
}

/// Per-token log-probabilities over the tag set, with the logits they came from.
#[derive(Clone, Debug, PartialEq)]
pub struct EmissionMatrix {
    n: usize,
    num_tags: usize,
    logits: Vec<f64>,
    logprobs: Vec<f64>,
}

impl EmissionMatrix {
    /// Normalizes each row of `logits` (row-major, `n × num_tags`).
    pub fn from_logits(n: usize, num_tags: usize, logits: Vec<f64>) -> Result<Self> {
        if num_tags == 0 || logits.len() != n * num_tags {
            return Err(Error::Argument(format!(
                "logit buffer of length {} does not have shape {n} x {num_tags}",
                logits.len()
            )));
        }
        let mut logprobs = logits.clone();
        for row in logprobs.chunks_mut(num_tags) {
            let lse = log_sum_exp(row);
            for v in row {
                *v -= lse;
            }
        }
        Ok(EmissionMatrix {
            n,
            num_tags,
            logits,
            logprobs,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let num_tags = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != num_tags) {
            return Err(Error::Argument("ragged emission rows".into()));
        }
        Self::from_logits(rows.len(), num_tags, rows.concat())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn num_tags(&self) -> usize {
        self.num_tags
    }

    pub fn logprob(&self, i: usize, t: usize) -> f64 {
        self.logprobs[i * self.num_tags + t]
    }

    pub fn prob(&self, i: usize, t: usize) -> f64 {
        self.logprob(i, t).exp()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.logprobs[i * self.num_tags..(i + 1) * self.num_tags]
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn logprobs(&self) -> &[f64] {
        &self.logprobs
    }

    /// Σ_i log p(tags_i).
    pub fn sequence_logprob(&self, tags: &[usize]) -> f64 {
        tags.iter().enumerate().map(|(i, &t)| self.logprob(i, t)).sum()
    }
}

pub fn log_sum_exp(row: &[f64]) -> f64 {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Dense `n × num_tags` matrix, row-major; used for loss sensitivities.
#[derive(Clone, Debug, PartialEq)]
pub struct Sensitivity {
    pub n: usize,
    pub num_tags: usize,
    pub values: Vec<f64>,
}

impl Sensitivity {
    pub fn zeros(n: usize, num_tags: usize) -> Self {
        Sensitivity {
            n,
            num_tags,
            values: vec![0.0; n * num_tags],
        }
    }

    pub fn get(&self, i: usize, t: usize) -> f64 {
        self.values[i * self.num_tags + t]
    }

    pub fn add(&mut self, i: usize, t: usize, v: f64) {
        self.values[i * self.num_tags + t] += v;
    }

    pub fn add_scaled(&mut self, other: &Sensitivity, scale: f64) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += scale * b;
        }
    }

    pub fn scaled(&self, factor: f64) -> Sensitivity {
        Sensitivity {
            values: self.values.iter().map(|v| v * factor).collect(),
            ..*self
        }
    }

    /// Chains through the log-softmax: dL/dz = g − p·Σ g.
    pub fn to_logit_gradient(&self, emissions: &EmissionMatrix) -> Vec<f64> {
        let t = self.num_tags;
        let mut out = vec![0.0; self.values.len()];
        for i in 0..self.n {
            let g = &self.values[i * t..(i + 1) * t];
            let total: f64 = g.iter().sum();
            for k in 0..t {
                out[i * t + k] = g[k] - emissions.prob(i, k) * total;
            }
        }
        out
    }
}

/// Intermediate values kept by the forward pass for backpropagation.
#[derive(Clone, Debug)]
pub struct Tape {
    buckets: Vec<usize>,
    indicators: Vec<usize>,
    inputs: Vec<Vec<f64>>,
    fw: Vec<Vec<f64>>,
    bw: Vec<Vec<f64>>,
}

fn matvec_add(m: &[f64], rows: usize, cols: usize, x: &[f64], out: &mut [f64]) {
    for r in 0..rows {
        let row = &m[r * cols..(r + 1) * cols];
        out[r] += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

fn matvec_t_add(m: &[f64], rows: usize, cols: usize, y: &[f64], out: &mut [f64]) {
    for r in 0..rows {
        let row = &m[r * cols..(r + 1) * cols];
        for c in 0..cols {
            out[c] += row[c] * y[r];
        }
    }
}

fn outer_add(grad: &mut [f64], cols: usize, y: &[f64], x: &[f64], scale: f64) {
    for (r, &yr) in y.iter().enumerate() {
        if yr == 0.0 {
            continue;
        }
        let row = &mut grad[r * cols..(r + 1) * cols];
        for (g, &xc) in row.iter_mut().zip(x) {
            *g += scale * yr * xc;
        }
    }
}

impl ModelParams {
    pub fn layout(&self) -> Layout {
        self.dims.layout()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Squared Euclidean distance to another parameter vector.
    pub fn distance_sq(&self, other: &ModelParams) -> Result<f64> {
        check_same_layout(self, other)?;
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| (a - b) * (a - b)).sum())
    }

    /// Runs the encoder over `tokens` with the predicate at `predicate`.
    pub fn forward_tokens<S: AsRef<str>>(&self, tokens: &[S], predicate: usize) -> Result<(EmissionMatrix, Tape)> {
        let n = tokens.len();
        if n == 0 {
            return Err(Error::Argument("cannot tag an empty sentence".into()));
        }
        if predicate >= n {
            return Err(Error::Argument(format!("predicate index {predicate} out of range for {n} tokens")));
        }
        let d = &self.dims;
        let l = self.layout();
        let w = &self.values;
        let (e, h, x_dim, t) = (d.embed, d.hidden, d.input(), d.num_tags);

        let buckets: Vec<usize> = tokens.iter().map(|tok| bucket_of(tok.as_ref(), d.buckets)).collect();
        let indicators: Vec<usize> = (0..n).map(|i| usize::from(i == predicate)).collect();
        let inputs: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let mut x = Vec::with_capacity(x_dim);
                let we = l.word_emb.start + buckets[i] * e;
                x.extend_from_slice(&w[we..we + e]);
                let pe = l.pred_emb.start + indicators[i] * e;
                x.extend_from_slice(&w[pe..pe + e]);
                x
            })
            .collect();

        let step = |input: &Range<usize>, rec: &Range<usize>, bias: &Range<usize>, x: &[f64], prev: Option<&Vec<f64>>| {
            let mut a = w[bias.clone()].to_vec();
            matvec_add(&w[input.clone()], h, x_dim, x, &mut a);
            if let Some(p) = prev {
                matvec_add(&w[rec.clone()], h, h, p, &mut a);
            }
            a.iter().map(|v| v.tanh()).collect::<Vec<f64>>()
        };

        let mut fw: Vec<Vec<f64>> = Vec::with_capacity(n);
        for i in 0..n {
            let next = step(&l.fw_in, &l.fw_rec, &l.fw_bias, &inputs[i], fw.last());
            fw.push(next);
        }
        let mut bw: Vec<Vec<f64>> = vec![Vec::new(); n];
        for i in (0..n).rev() {
            let prev = if i + 1 < n { Some(&bw[i + 1]) } else { None };
            bw[i] = step(&l.bw_in, &l.bw_rec, &l.bw_bias, &inputs[i], prev);
        }

        let mut logits = Vec::with_capacity(n * t);
        for i in 0..n {
            let mut z = w[l.out_b.clone()].to_vec();
            let hcat: Vec<f64> = fw[i].iter().chain(&bw[i]).copied().collect();
            matvec_add(&w[l.out_w.clone()], t, 2 * h, &hcat, &mut z);
            logits.extend(z);
        }
        let emissions = EmissionMatrix::from_logits(n, t, logits)?;
        Ok((
            emissions,
            Tape {
                buckets,
                indicators,
                inputs,
                fw,
                bw,
            },
        ))
    }

    /// Adds `scale · dLoss/dParams` into `grads`, given the loss sensitivity
    /// with respect to the log-probabilities.
    pub fn backward_into(
        &self,
        tape: &Tape,
        emissions: &EmissionMatrix,
        sensitivity: &Sensitivity,
        scale: f64,
        grads: &mut ParamGradients,
    ) -> Result<()> {
        let n = emissions.n();
        let d = &self.dims;
        if sensitivity.n != n || sensitivity.num_tags != d.num_tags || emissions.num_tags() != d.num_tags {
            return Err(Error::Argument(format!(
                "sensitivity shape {} x {} does not match emissions {} x {}",
                sensitivity.n,
                sensitivity.num_tags,
                n,
                d.num_tags
            )));
        }
        if grads.values.len() != self.values.len() {
            return Err(Error::Argument("gradient buffer has the wrong length".into()));
        }
        let l = self.layout();
        let w = &self.values;
        let g = &mut grads.values;
        let (e, h, x_dim, t) = (d.embed, d.hidden, d.input(), d.num_tags);

        let dz = sensitivity.to_logit_gradient(emissions);
        let mut dfw = vec![vec![0.0; h]; n];
        let mut dbw = vec![vec![0.0; h]; n];
        for i in 0..n {
            let dzi = &dz[i * t..(i + 1) * t];
            let hcat: Vec<f64> = tape.fw[i].iter().chain(&tape.bw[i]).copied().collect();
            outer_add(&mut g[l.out_w.clone()], 2 * h, dzi, &hcat, scale);
            for (gb, v) in g[l.out_b.clone()].iter_mut().zip(dzi) {
                *gb += scale * v;
            }
            let mut dh = vec![0.0; 2 * h];
            matvec_t_add(&w[l.out_w.clone()], t, 2 * h, dzi, &mut dh);
            dfw[i].copy_from_slice(&dh[..h]);
            dbw[i].copy_from_slice(&dh[h..]);
        }

        let mut dx = vec![vec![0.0; x_dim]; n];
        // Forward recurrence, reversed in time.
        let mut carry = vec![0.0; h];
        for i in (0..n).rev() {
            let da: Vec<f64> = (0..h)
                .map(|k| (dfw[i][k] + carry[k]) * (1.0 - tape.fw[i][k] * tape.fw[i][k]))
                .collect();
            outer_add(&mut g[l.fw_in.clone()], x_dim, &da, &tape.inputs[i], scale);
            if i > 0 {
                outer_add(&mut g[l.fw_rec.clone()], h, &da, &tape.fw[i - 1], scale);
            }
            for (gb, v) in g[l.fw_bias.clone()].iter_mut().zip(&da) {
                *gb += scale * v;
            }
            matvec_t_add(&w[l.fw_in.clone()], h, x_dim, &da, &mut dx[i]);
            carry = vec![0.0; h];
            matvec_t_add(&w[l.fw_rec.clone()], h, h, &da, &mut carry);
        }
        // Backward recurrence, forward in time.
        let mut carry = vec![0.0; h];
        for i in 0..n {
            let da: Vec<f64> = (0..h)
                .map(|k| (dbw[i][k] + carry[k]) * (1.0 - tape.bw[i][k] * tape.bw[i][k]))
                .collect();
            outer_add(&mut g[l.bw_in.clone()], x_dim, &da, &tape.inputs[i], scale);
            if i + 1 < n {
                outer_add(&mut g[l.bw_rec.clone()], h, &da, &tape.bw[i + 1], scale);
            }
            for (gb, v) in g[l.bw_bias.clone()].iter_mut().zip(&da) {
                *gb += scale * v;
            }
            matvec_t_add(&w[l.bw_in.clone()], h, x_dim, &da, &mut dx[i]);
            carry = vec![0.0; h];
            matvec_t_add(&w[l.bw_rec.clone()], h, h, &da, &mut carry);
        }

        for i in 0..n {
            let we = l.word_emb.start + tape.buckets[i] * e;
            for k in 0..e {
                g[we + k] += scale * dx[i][k];
            }
            let pe = l.pred_emb.start + tape.indicators[i] * e;
            for k in 0..e {
                g[pe + k] += scale * dx[i][e + k];
            }
        }
        Ok(())
    }
}

pub(crate) fn check_same_layout(a: &ModelParams, b: &ModelParams) -> Result<()> {
    if a.dims != b.dims || a.values.len() != b.values.len() {
        return Err(Error::Argument(format!(
            "parameter layouts differ: {:?} vs {:?}",
            a.dims, b.dims
        )));
    }
    Ok(())
}

/// Log-probabilities of every tag at every position of `instance`.
pub fn forward(params: &ModelParams, instance: &Instance) -> Result<EmissionMatrix> {
    Ok(params.forward_tokens(&instance.tokens, instance.predicate_index)?.0)
}

/// Gradient of the loss whose log-probability sensitivities are `sensitivity`.
pub fn backward(params: &ModelParams, instance: &Instance, sensitivity: &Sensitivity) -> Result<ParamGradients> {
    let (emissions, tape) = params.forward_tokens(&instance.tokens, instance.predicate_index)?;
    let mut grads = ParamGradients::zeros(&params.dims);
    params.backward_into(&tape, &emissions, sensitivity, 1.0, &mut grads)?;
    Ok(grads)
}

/// Parameters bundled with the tag inventory they were trained for.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub tagset: TagSet,
}

const CHECKPOINT_MAGIC: &str = "synsrl-checkpoint 1";

impl Checkpoint {
    pub fn new(params: ModelParams, tagset: TagSet) -> Result<Self> {
        if params.dims.num_tags != tagset.len() {
            return Err(Error::Argument(format!(
                "model has {} tags but the tag set has {}",
                params.dims.num_tags,
                tagset.len()
            )));
        }
        Ok(Checkpoint { params, tagset })
    }

    /// Text layout; floats use the shortest representation that round-trips.
    pub fn to_text(&self) -> String {
        let d = &self.params.dims;
        let mut out = String::new();
        let _ = writeln!(out, "{CHECKPOINT_MAGIC}");
        let _ = writeln!(out, "buckets={}", d.buckets);
        let _ = writeln!(out, "embed={}", d.embed);
        let _ = writeln!(out, "hidden={}", d.hidden);
        let _ = writeln!(out, "num_tags={}", d.num_tags);
        let _ = writeln!(out, "seed={}", self.params.seed);
        let _ = writeln!(out, "roles={}", self.tagset.roles().join(" "));
        let predicate = self.tagset.predicate_role().map(|r| self.tagset.roles()[r].as_str()).unwrap_or("-");
        let _ = writeln!(out, "predicate_role={predicate}");
        let _ = writeln!(out, "values={}", self.params.values.len());
        for v in &self.params.values {
            let _ = writeln!(out, "{v:e}");
        }
        out
    }

    pub fn parse_str(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(CHECKPOINT_MAGIC) {
            return Err(Error::Format(format!("checkpoint must start with `{CHECKPOINT_MAGIC}`")));
        }
        let mut header = |key: &str| -> Result<String> {
            let line = lines
                .next()
                .ok_or_else(|| Error::Format(format!("checkpoint ends before `{key}`")))?;
            line.strip_prefix(key)
                .and_then(|rest| rest.strip_prefix('='))
                .map(str::to_string)
                .ok_or_else(|| Error::Format(format!("expected `{key}=...`, found `{line}`")))
        };
        let num = |s: String, key: &str| -> Result<usize> {
            s.parse().map_err(|_| Error::Format(format!("bad `{key}` value `{s}`")))
        };
        let buckets = num(header("buckets")?, "buckets")?;
        let embed = num(header("embed")?, "embed")?;
        let hidden = num(header("hidden")?, "hidden")?;
        let num_tags = num(header("num_tags")?, "num_tags")?;
        let seed_text = header("seed")?;
        let seed: u64 = seed_text
            .parse()
            .map_err(|_| Error::Format(format!("bad `seed` value `{seed_text}`")))?;
        let roles = header("roles")?;
        let predicate = header("predicate_role")?;
        let count = num(header("values")?, "values")?;
        let dims = ModelDims::new(buckets, embed, hidden, num_tags)?;
        if count != dims.num_params() {
            return Err(Error::Format(format!(
                "checkpoint declares {count} values but the dimensions need {}",
                dims.num_params()
            )));
        }
        let values = lines
            .by_ref()
            .take(count)
            .map(|l| l.trim().parse::<f64>().map_err(|_| Error::Format(format!("bad parameter value `{l}`"))))
            .collect::<Result<Vec<f64>>>()?;
        if values.len() != count {
            return Err(Error::Format(format!("checkpoint has {} of {count} values", values.len())));
        }
        if lines.any(|l| !l.trim().is_empty()) {
            return Err(Error::Format("trailing content after parameter values".into()));
        }
        let tagset = TagSet::new(roles.split_whitespace())?
            .with_predicate_role(if predicate == "-" { None } else { Some(predicate.as_str()) })?;
        Checkpoint::new(ModelParams { dims, seed, values }, tagset)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_str(&text)
    }
}
