use super::{axpy, EmbeddingFrame, GnnError, GnnParams, GradientSet, Mlp};
use crate::grounding::State;

#[derive(Debug, Clone)]
struct AtomRef {
    mlp: Mlp,
    /// Arguments start here in `ForwardTape::args`.
    args: usize,
    arity: usize,
    /// Offset of this atom's block in the per-layer message buffers.
    msg: usize,
}

/// Everything a forward pass computed, kept for reverse-mode differentiation.
#[derive(Debug, Clone)]
pub struct ForwardTape {
    generation: u64,
    k: usize,
    n: usize,
    layers: usize,
    alpha: f64,
    atoms: Vec<AtomRef>,
    args: Vec<usize>,
    /// CSR incidence: message slots received by object `o` are
    /// `inc_slots[inc_start[o]..inc_start[o + 1]]`.
    inc_start: Vec<usize>,
    inc_slots: Vec<usize>,
    msg_len: usize,
    /// `(L + 1) × n × k` embeddings.
    frames: Vec<f64>,
    /// Per layer, `msg_len` values each.
    msg_hidden: Vec<f64>,
    messages: Vec<f64>,
    /// Smooth-max softmax weight of every message component.
    weights: Vec<f64>,
    /// Per layer, `n × k` aggregates.
    agg: Vec<f64>,
    /// Per layer, `n × 2k` update inputs and hidden activations.
    upd_input: Vec<f64>,
    upd_hidden: Vec<f64>,
    /// `n × k` readout hidden activations.
    r1_hidden: Vec<f64>,
    readout_sum: Vec<f64>,
    r2_hidden: Vec<f64>,
    value: f64,
}

impl ForwardTape {
    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn num_objects(&self) -> usize {
        self.n
    }

    /// Final object embeddings `f_L`.
    pub fn final_embeddings(&self) -> &[f64] {
        let s = self.layers * self.n * self.k;
        &self.frames[s..s + self.n * self.k]
    }

    /// Largest amount by which any aggregation left the interval
    /// `[max, max + ln(deg)/α]`; zero when every bound holds.
    pub fn max_smax_bound_violation(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for layer in 0..self.layers {
            let msgs = &self.messages[layer * self.msg_len..(layer + 1) * self.msg_len];
            for o in 0..self.n {
                let slots = &self.inc_slots[self.inc_start[o]..self.inc_start[o + 1]];
                if slots.is_empty() {
                    continue;
                }
                for c in 0..self.k {
                    let max = slots.iter().map(|&s| msgs[s + c]).fold(f64::NEG_INFINITY, f64::max);
                    let agg = self.agg[(layer * self.n + o) * self.k + c];
                    let upper = max + (slots.len() as f64).ln() / self.alpha;
                    worst = worst.max(max - agg).max(agg - upper);
                }
            }
        }
        worst
    }

    /// Hash of which ReLU units were active. Two passes with equal patterns
    /// evaluated the same piecewise-smooth branch of the network.
    pub fn activation_pattern(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for buf in [&self.msg_hidden, &self.upd_hidden, &self.r1_hidden, &self.r2_hidden] {
            for &v in buf.iter() {
                h ^= u64::from(v > 0.0);
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        h
    }
}

/// Runs the network on `state` with initial embeddings `frame`.
pub fn forward(params: &GnnParams, state: &State, frame: &EmbeddingFrame) -> Result<ForwardTape, GnnError> {
    let hyper = params.hyper();
    let (k, layers) = (hyper.k, hyper.layers);
    let n = frame.data.len() / k.max(1);
    if frame.k != k || frame.data.len() != n * k {
        return Err(GnnError::FrameShape { got: frame.data.len(), expected: n * k });
    }
    let layout = params.layout();
    let p = params.values();

    let mut atoms = Vec::new();
    let mut args = Vec::new();
    let mut msg_len = 0;
    let mut degree = vec![0usize; n];
    for a in state.atoms() {
        let (arity, mlp) = *layout.predicates.get(a.pred.index()).ok_or(GnnError::UnknownPredicate(a.pred.0))?;
        if a.args.len() != arity {
            let name = params.signature()[a.pred.index()].0.clone();
            return Err(GnnError::Arity { name, arity, given: a.args.len() });
        }
        for o in &a.args {
            if o.index() >= n {
                return Err(GnnError::ObjectOutOfRange { object: o.0, objects: n });
            }
        }
        let Some(mlp) = mlp else { continue };
        atoms.push(AtomRef { mlp, args: args.len(), arity, msg: msg_len });
        for o in &a.args {
            args.push(o.index());
            degree[o.index()] += 1;
        }
        msg_len += arity * k;
    }
    let mut inc_start = vec![0; n + 1];
    for o in 0..n {
        inc_start[o + 1] = inc_start[o] + degree[o];
    }
    let mut fill = inc_start[..n].to_vec();
    let mut inc_slots = vec![0; inc_start[n]];
    for a in &atoms {
        for j in 0..a.arity {
            let o = args[a.args + j];
            inc_slots[fill[o]] = a.msg + j * k;
            fill[o] += 1;
        }
    }

    let nk = n * k;
    let mut frames = vec![0.0; (layers + 1) * nk];
    frames[..nk].copy_from_slice(&frame.data);
    let mut msg_hidden = vec![0.0; layers * msg_len];
    let mut messages = vec![0.0; layers * msg_len];
    let mut weights = vec![0.0; layers * msg_len];
    let mut agg = vec![0.0; layers * nk];
    let mut upd_input = vec![0.0; layers * 2 * nk];
    let mut upd_hidden = vec![0.0; layers * 2 * nk];
    let mut x = Vec::new();
    let alpha = hyper.alpha;
    let upd = layout.update;

    for i in 0..layers {
        let (done, rest) = frames.split_at_mut((i + 1) * nk);
        let f = &done[i * nk..];
        let next = &mut rest[..nk];
        let hid = &mut msg_hidden[i * msg_len..(i + 1) * msg_len];
        let msgs = &mut messages[i * msg_len..(i + 1) * msg_len];
        for a in &atoms {
            x.clear();
            for &o in &args[a.args..a.args + a.arity] {
                x.extend_from_slice(&f[o * k..(o + 1) * k]);
            }
            let len = a.arity * k;
            a.mlp.forward(p, &x, &mut hid[a.msg..a.msg + len], &mut msgs[a.msg..a.msg + len]);
        }
        let w = &mut weights[i * msg_len..(i + 1) * msg_len];
        let ag = &mut agg[i * nk..(i + 1) * nk];
        for o in 0..n {
            let slots = &inc_slots[inc_start[o]..inc_start[o + 1]];
            if slots.is_empty() {
                continue;
            }
            for c in 0..k {
                let max = slots.iter().map(|&s| msgs[s + c]).fold(f64::NEG_INFINITY, f64::max);
                let mut sum = 0.0;
                for &s in slots {
                    let e = (alpha * (msgs[s + c] - max)).exp();
                    w[s + c] = e;
                    sum += e;
                }
                for &s in slots {
                    w[s + c] /= sum;
                }
                ag[o * k + c] = max + sum.ln() / alpha;
            }
        }
        let ui = &mut upd_input[i * 2 * nk..(i + 1) * 2 * nk];
        let uh = &mut upd_hidden[i * 2 * nk..(i + 1) * 2 * nk];
        for o in 0..n {
            let input = &mut ui[o * 2 * k..(o + 1) * 2 * k];
            input[..k].copy_from_slice(&f[o * k..(o + 1) * k]);
            input[k..].copy_from_slice(&ag[o * k..(o + 1) * k]);
            upd.forward(p, input, &mut uh[o * 2 * k..(o + 1) * 2 * k], &mut next[o * k..(o + 1) * k]);
        }
    }

    let last = &frames[layers * nk..];
    let mut r1_hidden = vec![0.0; nk];
    let mut readout_sum = vec![0.0; k];
    let mut out = vec![0.0; k];
    for o in 0..n {
        layout.readout1.forward(p, &last[o * k..(o + 1) * k], &mut r1_hidden[o * k..(o + 1) * k], &mut out);
        axpy(1.0, &out, &mut readout_sum);
    }
    let mut r2_hidden = vec![0.0; k];
    let mut v = [0.0];
    layout.readout2.forward(p, &readout_sum, &mut r2_hidden, &mut v);

    Ok(ForwardTape {
        generation: params.generation(),
        k,
        n,
        layers,
        alpha,
        atoms,
        args,
        inc_start,
        inc_slots,
        msg_len,
        frames,
        msg_hidden,
        messages,
        weights,
        agg,
        upd_input,
        upd_hidden,
        r1_hidden,
        readout_sum,
        r2_hidden,
        value: v[0],
    })
}

/// Gradient of `V` with respect to every parameter.
pub fn backward(tape: &ForwardTape, params: &GnnParams) -> Result<GradientSet, GnnError> {
    let mut g = GradientSet::zeros(params);
    backward_into(tape, params, 1.0, &mut g)?;
    Ok(g)
}

/// Adds `dv · ∂V/∂θ` into `grad`.
pub fn backward_into(tape: &ForwardTape, params: &GnnParams, dv: f64, grad: &mut GradientSet) -> Result<(), GnnError> {
    if tape.generation != params.generation() {
        return Err(GnnError::StaleTape);
    }
    if dv == 0.0 {
        return Ok(());
    }
    let layout = params.layout();
    let p = params.values();
    let g = &mut grad.values[..];
    let (k, n, msg_len) = (tape.k, tape.n, tape.msg_len);
    let nk = n * k;
    let mut dh = vec![0.0; 2 * k.max(1) * tape.atoms.iter().map(|a| a.arity).max().unwrap_or(1).max(1)];

    let mut dsum = vec![0.0; k];
    layout.readout2.backward(p, &tape.readout_sum, &tape.r2_hidden, &[dv], g, &mut dh[..k], &mut dsum);
    let mut df = vec![0.0; nk];
    let last = &tape.frames[tape.layers * nk..];
    for o in 0..n {
        let r = o * k..(o + 1) * k;
        layout.readout1.backward(p, &last[r.clone()], &tape.r1_hidden[r.clone()], &dsum, g, &mut dh[..k], &mut df[r]);
    }

    let upd = layout.update;
    let mut dx = vec![0.0; 2 * k];
    let mut dagg = vec![0.0; nk];
    let mut dmsg = vec![0.0; msg_len];
    let mut x = Vec::new();
    let mut dxa = Vec::new();
    for i in (0..tape.layers).rev() {
        let mut df_prev = vec![0.0; nk];
        let ui = &tape.upd_input[i * 2 * nk..(i + 1) * 2 * nk];
        let uh = &tape.upd_hidden[i * 2 * nk..(i + 1) * 2 * nk];
        for o in 0..n {
            dx.fill(0.0);
            let r = o * 2 * k..(o + 1) * 2 * k;
            upd.backward(p, &ui[r.clone()], &uh[r], &df[o * k..(o + 1) * k], g, &mut dh[..2 * k], &mut dx);
            axpy(1.0, &dx[..k], &mut df_prev[o * k..(o + 1) * k]);
            dagg[o * k..(o + 1) * k].copy_from_slice(&dx[k..]);
        }
        let w = &tape.weights[i * msg_len..(i + 1) * msg_len];
        for o in 0..n {
            for &s in &tape.inc_slots[tape.inc_start[o]..tape.inc_start[o + 1]] {
                for c in 0..k {
                    dmsg[s + c] = w[s + c] * dagg[o * k + c];
                }
            }
        }
        let f = &tape.frames[i * nk..(i + 1) * nk];
        let hid = &tape.msg_hidden[i * msg_len..(i + 1) * msg_len];
        for a in &tape.atoms {
            let len = a.arity * k;
            x.clear();
            for &o in &tape.args[a.args..a.args + a.arity] {
                x.extend_from_slice(&f[o * k..(o + 1) * k]);
            }
            dxa.clear();
            dxa.resize(len, 0.0);
            a.mlp.backward(p, &x, &hid[a.msg..a.msg + len], &dmsg[a.msg..a.msg + len], g, &mut dh[..len], &mut dxa);
            for (j, &o) in tape.args[a.args..a.args + a.arity].iter().enumerate() {
                axpy(1.0, &dxa[j * k..(j + 1) * k], &mut df_prev[o * k..(o + 1) * k]);
            }
        }
        df = df_prev;
    }
    Ok(())
}
