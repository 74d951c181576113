//! Relational message-passing network mapping a state to a scalar value.
//!
//! Every object carries a `k`-dimensional embedding. In each of `L` rounds,
//! each true atom `p(o_1, ..., o_m)` feeds the concatenated embeddings of its
//! arguments through the predicate's MLP, whose `m` output blocks are sent
//! back to the arguments. Objects combine incoming messages with a
//! componentwise smooth maximum and update through a shared MLP. The value
//! is read out as `MLP_2(Σ_o MLP_1(f_L(o)))`.
//!
//! All parameters live in one flat `f64` buffer described by a [`Layout`];
//! gradients share that layout.

mod gradcheck;
mod model;
mod network;

use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grounding::State;
use crate::pddl::Domain;

pub use gradcheck::{gradcheck, gradcheck_suite, random_state, GradcheckReport, GRADCHECK_FLOOR, GRADCHECK_STEP};
pub use model::{SavedModel, MODEL_FORMAT};
pub use network::{backward, backward_into, forward, ForwardTape};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GnnError {
    #[error("embedding dimension k = {0} must be even and positive")]
    OddDimension(usize),
    #[error("layer count must be at least 1")]
    NoLayers,
    #[error("smooth-max sharpness must be positive, got {0}")]
    BadAlpha(f64),
    #[error("smooth max of an empty list")]
    EmptySmax,
    #[error("atom over unknown predicate #{0}")]
    UnknownPredicate(u32),
    #[error("atom over predicate {name} has {given} arguments, expected {arity}")]
    Arity { name: String, arity: usize, given: usize },
    #[error("atom mentions object #{object} but the state has {objects} objects")]
    ObjectOutOfRange { object: u32, objects: usize },
    #[error("embedding frame has {got} values, expected {expected}")]
    FrameShape { got: usize, expected: usize },
    #[error("tape is stale: parameters changed since the forward pass")]
    StaleTape,
    #[error("model was built for predicates {expected}, domain has {found}")]
    SignatureMismatch { expected: String, found: String },
    #[error("model file: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GnnHyper {
    /// Embedding dimension.
    pub k: usize,
    /// Message-passing rounds.
    pub layers: usize,
    /// Smooth-max sharpness.
    pub alpha: f64,
    /// Parameter initialization seed.
    pub seed: u64,
}

impl Default for GnnHyper {
    fn default() -> Self {
        Self { k: 64, layers: 30, alpha: 8.0, seed: 0 }
    }
}

impl GnnHyper {
    pub fn validate(&self) -> Result<(), GnnError> {
        if self.k == 0 || self.k % 2 == 1 {
            return Err(GnnError::OddDimension(self.k));
        }
        if self.layers == 0 {
            return Err(GnnError::NoLayers);
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(GnnError::BadAlpha(self.alpha));
        }
        Ok(())
    }
}

/// A two-layer perceptron `dense(ReLU) → dense(linear)` stored at `offset`
/// as `W1 (hidden × input)`, `b1`, `W2 (output × hidden)`, `b2`, row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Mlp {
    pub offset: usize,
    pub input: usize,
    pub hidden: usize,
    pub output: usize,
}

impl Mlp {
    fn new(offset: usize, input: usize, output: usize) -> Self {
        Self { offset, input, hidden: input, output }
    }

    pub fn num_params(&self) -> usize {
        self.input * self.hidden + self.hidden + self.hidden * self.output + self.output
    }

    pub fn end(&self) -> usize {
        self.offset + self.num_params()
    }

    fn w1(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.input * self.hidden
    }

    fn b1(&self) -> std::ops::Range<usize> {
        let s = self.w1().end;
        s..s + self.hidden
    }

    fn w2(&self) -> std::ops::Range<usize> {
        let s = self.b1().end;
        s..s + self.hidden * self.output
    }

    pub fn b2(&self) -> std::ops::Range<usize> {
        let s = self.w2().end;
        s..s + self.output
    }

    /// `y = W2 relu(W1 x + b1) + b2`, leaving the hidden activations in `h`.
    fn forward(&self, p: &[f64], x: &[f64], h: &mut [f64], y: &mut [f64]) {
        dense(&p[self.w1()], &p[self.b1()], x, h);
        h.iter_mut().for_each(|v| *v = v.max(0.0));
        dense(&p[self.w2()], &p[self.b2()], h, y);
    }

    /// Accumulates parameter gradients into `g` and the input gradient into
    /// `dx`. `dh` is scratch of length `hidden`.
    #[allow(clippy::too_many_arguments)]
    fn backward(&self, p: &[f64], x: &[f64], h: &[f64], dy: &[f64], g: &mut [f64], dh: &mut [f64], dx: &mut [f64]) {
        dh.fill(0.0);
        let w2 = &p[self.w2()];
        for (r, &d) in dy.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            axpy(d, &w2[r * self.hidden..(r + 1) * self.hidden], dh);
            axpy(d, h, &mut g[self.w2()][r * self.hidden..(r + 1) * self.hidden]);
        }
        axpy(1.0, dy, &mut g[self.b2()]);
        for (d, &hv) in dh.iter_mut().zip(h) {
            if hv <= 0.0 {
                *d = 0.0;
            }
        }
        let w1 = &p[self.w1()];
        for (r, &d) in dh.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            axpy(d, &w1[r * self.input..(r + 1) * self.input], dx);
            axpy(d, x, &mut g[self.w1()][r * self.input..(r + 1) * self.input]);
        }
        axpy(1.0, dh, &mut g[self.b1()]);
    }
}

fn dense(w: &[f64], b: &[f64], x: &[f64], y: &mut [f64]) {
    let n = x.len();
    for (r, out) in y.iter_mut().enumerate() {
        let row = &w[r * n..(r + 1) * n];
        *out = b[r] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Positions of every MLP in the flat parameter buffer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    /// Arity and message MLP per predicate. Nullary predicates send no
    /// messages and own no parameters.
    pub predicates: Vec<(usize, Option<Mlp>)>,
    pub update: Mlp,
    pub readout1: Mlp,
    pub readout2: Mlp,
}

impl Layout {
    pub fn new(arities: &[usize], k: usize) -> Self {
        let mut offset = 0;
        let mut next = |input: usize, output: usize| {
            let m = Mlp::new(offset, input, output);
            offset = m.end();
            m
        };
        let predicates = arities.iter().map(|&m| (m, (m > 0).then(|| next(m * k, m * k)))).collect();
        let update = next(2 * k, k);
        let readout1 = next(k, k);
        let readout2 = next(k, 1);
        Self { predicates, update, readout1, readout2 }
    }

    pub fn num_params(&self) -> usize {
        self.readout2.end()
    }

    fn mlps(&self) -> impl Iterator<Item = &Mlp> {
        self.predicates.iter().filter_map(|(_, m)| m.as_ref()).chain([&self.update, &self.readout1, &self.readout2])
    }
}

static NEXT_GENERATION: AtomicU64 = AtomicU64::new(1);

fn fresh_generation() -> u64 {
    NEXT_GENERATION.fetch_add(1, Ordering::Relaxed)
}

/// Network weights for one augmented domain. Every mutation through
/// [`GnnParams::values_mut`] invalidates outstanding tapes.
#[derive(Debug)]
pub struct GnnParams {
    hyper: GnnHyper,
    signature: Vec<(String, usize)>,
    layout: Layout,
    values: Vec<f64>,
    generation: u64,
}

impl Clone for GnnParams {
    fn clone(&self) -> Self {
        Self {
            hyper: self.hyper,
            signature: self.signature.clone(),
            layout: self.layout.clone(),
            values: self.values.clone(),
            generation: fresh_generation(),
        }
    }
}

impl PartialEq for GnnParams {
    fn eq(&self, other: &Self) -> bool {
        self.hyper == other.hyper && self.signature == other.signature && self.values == other.values
    }
}

/// Name of the weight initialization scheme, stored in checkpoints.
pub const INIT_SCHEME: &str = "fan-in-uniform";

/// Fan-in scaled uniform weights `U(-1/√fan_in, 1/√fan_in)` and zero biases,
/// drawn in layout order from a generator seeded with `hyper.seed`.
pub fn init_params(domain: &Domain, hyper: GnnHyper) -> Result<GnnParams, GnnError> {
    hyper.validate()?;
    let signature = domain.signature();
    let arities: Vec<usize> = signature.iter().map(|(_, a)| *a).collect();
    let layout = Layout::new(&arities, hyper.k);
    let mut values = vec![0.0; layout.num_params()];
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    for mlp in layout.mlps() {
        for (range, fan_in) in [(mlp.w1(), mlp.input), (mlp.w2(), mlp.hidden)] {
            let bound = 1.0 / (fan_in as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
            values[range].iter_mut().for_each(|v| *v = dist.sample(&mut rng));
        }
    }
    Ok(GnnParams { hyper, signature, layout, values, generation: fresh_generation() })
}

impl GnnParams {
    /// Rebuilds parameters from stored values.
    pub fn from_values(signature: Vec<(String, usize)>, hyper: GnnHyper, values: Vec<f64>) -> Result<Self, GnnError> {
        hyper.validate()?;
        let arities: Vec<usize> = signature.iter().map(|(_, a)| *a).collect();
        let layout = Layout::new(&arities, hyper.k);
        if values.len() != layout.num_params() {
            return Err(GnnError::Format(format!(
                "{} parameter values, layout needs {}",
                values.len(),
                layout.num_params()
            )));
        }
        Ok(Self { hyper, signature, layout, values, generation: fresh_generation() })
    }

    pub fn hyper(&self) -> &GnnHyper {
        &self.hyper
    }

    pub fn signature(&self) -> &[(String, usize)] {
        &self.signature
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        self.generation = fresh_generation();
        &mut self.values
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Fails unless `domain` has exactly the predicates the model was built for.
    pub fn check_domain(&self, domain: &Domain) -> Result<(), GnnError> {
        let found = domain.signature();
        if found != self.signature {
            let fmt = |s: &[(String, usize)]| s.iter().map(|(n, a)| format!("{n}/{a}")).collect::<Vec<_>>().join(" ");
            return Err(GnnError::SignatureMismatch { expected: fmt(&self.signature), found: fmt(&found) });
        }
        Ok(())
    }
}

/// Gradient with the same layout as [`GnnParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub values: Vec<f64>,
}

impl GradientSet {
    pub fn zeros(params: &GnnParams) -> Self {
        Self { values: vec![0.0; params.len()] }
    }

    pub fn add_scaled(&mut self, other: &GradientSet, scale: f64) {
        axpy(scale, &other.values, &mut self.values);
    }

    pub fn scale(&mut self, s: f64) {
        self.values.iter_mut().for_each(|v| *v *= s);
    }

    pub fn has_nan(&self) -> bool {
        self.values.iter().any(|v| v.is_nan())
    }
}

/// Numerically stable smooth maximum `x* + ln Σ exp(α(x_j − x*)) / α`.
pub fn smax(values: &[f64], alpha: f64) -> Result<f64, GnnError> {
    if values.is_empty() {
        return Err(GnnError::EmptySmax);
    }
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = values.iter().map(|x| (alpha * (x - max)).exp()).sum();
    Ok(max + sum.ln() / alpha)
}

/// Initial object embeddings, `n × k` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingFrame {
    pub k: usize,
    pub data: Vec<f64>,
}

impl EmbeddingFrame {
    pub fn num_objects(&self) -> usize {
        self.data.len() / self.k
    }

    pub fn row(&self, o: usize) -> &[f64] {
        &self.data[o * self.k..(o + 1) * self.k]
    }

    /// Rows reordered so that row `perm[o]` of the result is row `o` here.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut data = vec![0.0; self.data.len()];
        for (o, &p) in perm.iter().enumerate() {
            data[p * self.k..(p + 1) * self.k].copy_from_slice(self.row(o));
        }
        Self { k: self.k, data }
    }
}

/// `f_0(o) = [0^{k/2} ‖ g]` with `g` standard normal, drawn object by object.
pub fn initial_embeddings(num_objects: usize, k: usize, rng: &mut impl Rng) -> EmbeddingFrame {
    let half = k / 2;
    let mut data = vec![0.0; num_objects * k];
    for row in data.chunks_mut(k) {
        for v in &mut row[half..] {
            *v = StandardNormal.sample(rng);
        }
    }
    EmbeddingFrame { k, data }
}

/// How the random half of the initial embeddings is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmbeddingMode {
    /// Fresh draw from the caller's generator on every pass.
    Stochastic,
    /// Determined by the evaluation seed and the state itself.
    FixedSeed(u64),
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes seed components into one generator seed.
pub fn mix_seed(parts: &[u64]) -> u64 {
    parts.iter().fold(0x2545_f491_4f6c_dd1d, |acc, &p| splitmix(acc ^ p))
}

/// The frame used for `state` under `mode`.
pub fn frame_for(state: &State, num_objects: usize, k: usize, mode: EmbeddingMode, rng: &mut impl Rng) -> EmbeddingFrame {
    match mode {
        EmbeddingMode::Stochastic => initial_embeddings(num_objects, k, rng),
        EmbeddingMode::FixedSeed(seed) => {
            let mut r = ChaCha8Rng::seed_from_u64(mix_seed(&[seed, state.digest(), num_objects as u64]));
            initial_embeddings(num_objects, k, &mut r)
        }
    }
}

/// `V(state)` without keeping the tape.
pub fn value_of(
    params: &GnnParams,
    state: &State,
    num_objects: usize,
    mode: EmbeddingMode,
    rng: &mut impl Rng,
) -> Result<f64, GnnError> {
    let frame = frame_for(state, num_objects, params.hyper.k, mode, rng);
    Ok(forward(params, state, &frame)?.value())
}

#[cfg(test)]
mod tests;
