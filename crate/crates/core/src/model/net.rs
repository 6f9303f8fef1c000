//! One conversion network: causal input convolutions, a GRU whose input
//! includes the network's own previous output frame, and causal output
//! convolutions. Parameters live in one flat `f64` buffer addressed through
//! a [`Layout`]; forward passes record a [`Trace`] that the backward pass
//! consumes.

use crate::error::{Error, Result};
use crate::features::{FRAME_DIM, MCEP_DIM};

/// Network input width (one full frame).
pub const IN_DIM: usize = FRAME_DIM;
/// Network output width (mel-cepstrum only).
pub const OUT_DIM: usize = MCEP_DIM;

/// Architecture hyperparameters shared by both conversion directions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Arch {
    pub in_conv_layers: usize,
    pub in_channels: usize,
    pub kernel: usize,
    pub gru_hidden: usize,
    pub out_conv_layers: usize,
    /// Add the input mcep to the network output.
    pub residual: bool,
}

impl Default for Arch {
    fn default() -> Self {
        Arch {
            in_conv_layers: 2,
            in_channels: 128,
            kernel: 3,
            gru_hidden: 256,
            out_conv_layers: 2,
            residual: true,
        }
    }
}

impl Arch {
    pub fn validate(&self) -> Result<()> {
        if self.kernel == 0 || self.gru_hidden == 0 || self.out_conv_layers == 0 {
            return Err(Error::Config(
                "kernel, gru_hidden and out_conv_layers must be at least 1".into(),
            ));
        }
        if (self.in_conv_layers > 0 || self.out_conv_layers > 1) && self.in_channels == 0 {
            return Err(Error::Config("in_channels must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct ConvSlot {
    w: usize,
    b: usize,
    in_dim: usize,
    out_dim: usize,
}

#[derive(Debug, Clone, Copy)]
struct GruSlot {
    w_ih: usize,
    w_hh: usize,
    b_ih: usize,
    b_hh: usize,
    input: usize,
    hidden: usize,
}

/// Offsets of every tensor inside the flat parameter buffer.
///
/// Declaration order: input convs (weight `[out][k][in]`, then bias), GRU
/// (`w_ih [3H][I]`, `w_hh [3H][H]`, `b_ih [3H]`, `b_hh [3H]`, gates ordered
/// reset, update, candidate), output convs.
#[derive(Debug, Clone)]
pub struct Layout {
    in_convs: Vec<ConvSlot>,
    gru: GruSlot,
    out_convs: Vec<ConvSlot>,
    total: usize,
}

/// Name, fan-in and offset range of one parameter tensor.
#[derive(Debug, Clone)]
pub struct TensorInfo {
    pub name: String,
    pub fan_in: usize,
    pub range: std::ops::Range<usize>,
}

impl Layout {
    pub fn new(arch: &Arch) -> Self {
        let k = arch.kernel;
        let mut off = 0;
        let mut in_convs = Vec::new();
        let mut width = IN_DIM;
        for _ in 0..arch.in_conv_layers {
            in_convs.push(push_conv(&mut off, k, width, arch.in_channels));
            width = arch.in_channels;
        }
        let h = arch.gru_hidden;
        let input = width + OUT_DIM;
        let w_ih = off;
        off += 3 * h * input;
        let w_hh = off;
        off += 3 * h * h;
        let b_ih = off;
        off += 3 * h;
        let b_hh = off;
        off += 3 * h;
        let gru = GruSlot {
            w_ih,
            w_hh,
            b_ih,
            b_hh,
            input,
            hidden: h,
        };
        let mut out_convs = Vec::new();
        let mut width = h;
        for l in 0..arch.out_conv_layers {
            let out_dim = if l + 1 == arch.out_conv_layers {
                OUT_DIM
            } else {
                arch.in_channels
            };
            out_convs.push(push_conv(&mut off, k, width, out_dim));
            width = out_dim;
        }
        Layout {
            in_convs,
            gru,
            out_convs,
            total: off,
        }
    }

    pub fn total(&self) -> usize {
        self.total
    }

    /// Every tensor in declaration order.
    pub fn tensors(&self, kernel: usize) -> Vec<TensorInfo> {
        let mut out = Vec::new();
        let mut conv = |prefix: &str, i: usize, c: &ConvSlot| {
            out.push(TensorInfo {
                name: format!("{prefix}{i}.weight"),
                fan_in: kernel * c.in_dim,
                range: c.w..c.b,
            });
            out.push(TensorInfo {
                name: format!("{prefix}{i}.bias"),
                fan_in: kernel * c.in_dim,
                range: c.b..c.b + c.out_dim,
            });
        };
        for (i, c) in self.in_convs.iter().enumerate() {
            conv("in_conv", i, c);
        }
        let g = &self.gru;
        let h3 = 3 * g.hidden;
        let gru_tensors = [
            ("gru.w_ih", g.input, g.w_ih..g.w_hh),
            ("gru.w_hh", g.hidden, g.w_hh..g.b_ih),
            ("gru.b_ih", g.input, g.b_ih..g.b_ih + h3),
            ("gru.b_hh", g.hidden, g.b_hh..g.b_hh + h3),
        ];
        let mut rest = Vec::new();
        for (name, fan_in, range) in gru_tensors {
            rest.push(TensorInfo {
                name: name.to_string(),
                fan_in,
                range,
            });
        }
        let mut outs = Vec::new();
        for (i, c) in self.out_convs.iter().enumerate() {
            outs.push(TensorInfo {
                name: format!("out_conv{i}.weight"),
                fan_in: kernel * c.in_dim,
                range: c.w..c.b,
            });
            outs.push(TensorInfo {
                name: format!("out_conv{i}.bias"),
                fan_in: kernel * c.in_dim,
                range: c.b..c.b + c.out_dim,
            });
        }
        out.extend(rest);
        out.extend(outs);
        out
    }

    /// Offset range of the final output layer (weights and bias).
    pub fn final_layer(&self) -> std::ops::Range<usize> {
        let last = self.out_convs.last().expect("at least one output layer");
        last.w..last.b + last.out_dim
    }
}

fn push_conv(off: &mut usize, kernel: usize, in_dim: usize, out_dim: usize) -> ConvSlot {
    let w = *off;
    *off += out_dim * kernel * in_dim;
    let b = *off;
    *off += out_dim;
    ConvSlot { w, b, in_dim, out_dim }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

/// `y += a * x`
#[inline]
fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Fills `window` with `[in[t], in[t-1], ..., in[t-K+1]]`, zeros before t=0.
fn gather_window(input: &[f64], dim: usize, t: usize, kernel: usize, window: &mut [f64]) {
    for k in 0..kernel {
        let dst = &mut window[k * dim..(k + 1) * dim];
        if t >= k {
            dst.copy_from_slice(&input[(t - k) * dim..(t - k + 1) * dim]);
        } else {
            dst.fill(0.0);
        }
    }
}

fn conv_step(
    p: &[f64],
    c: &ConvSlot,
    kernel: usize,
    input: &[f64],
    t: usize,
    window: &mut Vec<f64>,
    out: &mut [f64],
) {
    let span = kernel * c.in_dim;
    window.resize(span, 0.0);
    gather_window(input, c.in_dim, t, kernel, window);
    let w = &p[c.w..c.b];
    let b = &p[c.b..c.b + c.out_dim];
    for (o, slot) in out.iter_mut().enumerate() {
        *slot = b[o] + dot(&w[o * span..(o + 1) * span], window);
    }
}

#[allow(clippy::too_many_arguments)]
fn conv_step_backward(
    p: &[f64],
    c: &ConvSlot,
    kernel: usize,
    input: &[f64],
    t: usize,
    d_pre: &[f64],
    grad: &mut [f64],
    d_input: Option<&mut [f64]>,
    window: &mut Vec<f64>,
) {
    let span = kernel * c.in_dim;
    window.resize(span, 0.0);
    gather_window(input, c.in_dim, t, kernel, window);
    let w = &p[c.w..c.b];
    {
        let (gw, gb) = grad[c.w..c.b + c.out_dim].split_at_mut(c.b - c.w);
        for (o, &d) in d_pre.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            gb[o] += d;
            axpy(d, window, &mut gw[o * span..(o + 1) * span]);
        }
    }
    if let Some(d_in) = d_input {
        for (o, &d) in d_pre.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            let row = &w[o * span..(o + 1) * span];
            for k in 0..kernel.min(t + 1) {
                let dst = &mut d_in[(t - k) * c.in_dim..(t - k + 1) * c.in_dim];
                axpy(d, &row[k * c.in_dim..(k + 1) * c.in_dim], dst);
            }
        }
    }
}

/// Everything the backward pass needs from one forward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    n: usize,
    input: Vec<f64>,
    /// Post-tanh outputs of each input conv, `n x channels`.
    in_acts: Vec<Vec<f64>>,
    /// Feedback frame given to the GRU at each step, `n x 45`.
    feedback: Vec<Vec<f64>>,
    /// Whether the feedback was the network's own output (gradients flow).
    free_running: bool,
    /// Hidden states, `(n + 1) x H`, row 0 is the initial zero state.
    hidden: Vec<f64>,
    reset: Vec<f64>,
    update: Vec<f64>,
    candidate: Vec<f64>,
    /// `W_hn h + b_hn` per step.
    hidden_n: Vec<f64>,
    /// Outputs of each output conv (post-tanh except the last), `n x dim`.
    out_acts: Vec<Vec<f64>>,
    output: Vec<f64>,
}

impl Trace {
    pub fn n_frames(&self) -> usize {
        self.n
    }

    /// Converted mcep frames, `n x 45`.
    pub fn output(&self) -> &[f64] {
        &self.output
    }

    /// The previous-output frame the GRU received at step `t`.
    pub fn feedback_frame(&self, t: usize) -> &[f64] {
        &self.feedback[t]
    }

    pub fn into_output(self) -> Vec<f64> {
        self.output
    }
}

/// A stateless view that evaluates one parameter buffer.
#[derive(Debug, Clone)]
pub struct ConversionNet {
    arch: Arch,
    layout: Layout,
}

impl ConversionNet {
    pub fn new(arch: Arch) -> Self {
        ConversionNet {
            layout: Layout::new(&arch),
            arch,
        }
    }

    pub fn arch(&self) -> &Arch {
        &self.arch
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    fn check(&self, params: &[f64], input: &[f64]) -> Result<usize> {
        if params.len() != self.layout.total {
            return Err(Error::Shape(format!(
                "parameter buffer has {} values, architecture needs {}",
                params.len(),
                self.layout.total
            )));
        }
        if input.is_empty() || input.len() % IN_DIM != 0 {
            return Err(Error::Shape(format!(
                "input of {} values is not a non-empty sequence of {IN_DIM}-dim frames",
                input.len()
            )));
        }
        Ok(input.len() / IN_DIM)
    }

    /// Runs the network over `input` (`n x 50`). With `teacher` set
    /// (`n x 45`), step `t` is fed `teacher[t-1]` instead of its own previous
    /// output.
    pub fn forward(&self, params: &[f64], input: &[f64], teacher: Option<&[f64]>) -> Result<Trace> {
        let n = self.check(params, input)?;
        if let Some(tf) = teacher {
            if tf.len() != n * OUT_DIM {
                return Err(Error::Shape(format!(
                    "teacher sequence has {} values, expected {}",
                    tf.len(),
                    n * OUT_DIM
                )));
            }
        }
        let k = self.arch.kernel;
        let mut window = Vec::new();

        let mut in_acts: Vec<Vec<f64>> = Vec::with_capacity(self.layout.in_convs.len());
        for c in &self.layout.in_convs {
            let prev: &[f64] = in_acts.last().map(|v| v.as_slice()).unwrap_or(input);
            let mut out = vec![0.0; n * c.out_dim];
            for t in 0..n {
                let slot = &mut out[t * c.out_dim..(t + 1) * c.out_dim];
                conv_step(params, c, k, prev, t, &mut window, slot);
                slot.iter_mut().for_each(|v| *v = v.tanh());
            }
            in_acts.push(out);
        }
        let conv_width = self.layout.gru.input - OUT_DIM;

        let g = self.layout.gru;
        let h = g.hidden;
        let mut hidden = vec![0.0; (n + 1) * h];
        let mut reset = vec![0.0; n * h];
        let mut update = vec![0.0; n * h];
        let mut candidate = vec![0.0; n * h];
        let mut hidden_n = vec![0.0; n * h];
        let mut feedback = vec![vec![0.0; OUT_DIM]; n];
        let mut out_acts: Vec<Vec<f64>> = self
            .layout
            .out_convs
            .iter()
            .map(|c| vec![0.0; n * c.out_dim])
            .collect();
        let mut output = vec![0.0; n * OUT_DIM];
        let mut u = vec![0.0; g.input];
        let mut gi = vec![0.0; 3 * h];
        let mut gh = vec![0.0; 3 * h];

        for t in 0..n {
            if t > 0 {
                let src = match teacher {
                    Some(tf) => &tf[(t - 1) * OUT_DIM..t * OUT_DIM],
                    None => &output[(t - 1) * OUT_DIM..t * OUT_DIM],
                };
                feedback[t].copy_from_slice(src);
            }
            let conv_src: &[f64] = in_acts.last().map(|v| v.as_slice()).unwrap_or(input);
            u[..conv_width].copy_from_slice(&conv_src[t * conv_width..(t + 1) * conv_width]);
            u[conv_width..].copy_from_slice(&feedback[t]);

            let (h_prev_all, h_next_all) = hidden.split_at_mut((t + 1) * h);
            let h_prev = &h_prev_all[t * h..];
            let h_next = &mut h_next_all[..h];
            for j in 0..3 * h {
                gi[j] = params[g.b_ih + j]
                    + dot(&params[g.w_ih + j * g.input..g.w_ih + (j + 1) * g.input], &u);
                gh[j] = params[g.b_hh + j] + dot(&params[g.w_hh + j * h..g.w_hh + (j + 1) * h], h_prev);
            }
            for j in 0..h {
                let r = sigmoid(gi[j] + gh[j]);
                let z = sigmoid(gi[h + j] + gh[h + j]);
                let hn = gh[2 * h + j];
                let c = (gi[2 * h + j] + r * hn).tanh();
                reset[t * h + j] = r;
                update[t * h + j] = z;
                hidden_n[t * h + j] = hn;
                candidate[t * h + j] = c;
                h_next[j] = (1.0 - z) * c + z * h_prev[j];
            }

            let n_out = self.layout.out_convs.len();
            for (l, c) in self.layout.out_convs.iter().enumerate() {
                let mut slot = vec![0.0; c.out_dim];
                {
                    let src: &[f64] = if l == 0 { &hidden[h..] } else { &out_acts[l - 1] };
                    conv_step(params, c, k, src, t, &mut window, &mut slot);
                }
                if l + 1 < n_out {
                    slot.iter_mut().for_each(|v| *v = v.tanh());
                }
                out_acts[l][t * c.out_dim..(t + 1) * c.out_dim].copy_from_slice(&slot);
            }
            let net_out = &out_acts[n_out - 1][t * OUT_DIM..(t + 1) * OUT_DIM];
            let y = &mut output[t * OUT_DIM..(t + 1) * OUT_DIM];
            y.copy_from_slice(net_out);
            if self.arch.residual {
                for (yi, xi) in y.iter_mut().zip(&input[t * IN_DIM..t * IN_DIM + OUT_DIM]) {
                    *yi += xi;
                }
            }
        }

        Ok(Trace {
            n,
            input: input.to_vec(),
            in_acts,
            feedback,
            free_running: teacher.is_none(),
            hidden,
            reset,
            update,
            candidate,
            hidden_n,
            out_acts,
            output,
        })
    }

    /// Back-propagates `d_output` (`n x 45`) through the trace. Parameter
    /// gradients are accumulated into `grad`; when `d_input` is given the
    /// gradient with respect to the input frames is accumulated there.
    pub fn backward(
        &self,
        params: &[f64],
        trace: &Trace,
        d_output: &[f64],
        grad: &mut [f64],
        mut d_input: Option<&mut [f64]>,
    ) -> Result<()> {
        let n = trace.n;
        if d_output.len() != n * OUT_DIM || grad.len() != self.layout.total {
            return Err(Error::Shape("gradient buffers do not match the trace".into()));
        }
        if let Some(d) = d_input.as_deref() {
            if d.len() != n * IN_DIM {
                return Err(Error::Shape("input gradient buffer has the wrong size".into()));
            }
        }
        let k = self.arch.kernel;
        let g = self.layout.gru;
        let h = g.hidden;
        let conv_width = g.input - OUT_DIM;
        let n_out = self.layout.out_convs.len();
        let mut window = Vec::new();

        let mut d_y = d_output.to_vec();
        let mut d_out_acts: Vec<Vec<f64>> = self
            .layout
            .out_convs
            .iter()
            .map(|c| vec![0.0; n * c.out_dim])
            .collect();
        let mut d_hidden = vec![0.0; n * h];
        let mut d_conv_out = vec![0.0; n * conv_width];
        let mut u = vec![0.0; g.input];
        let mut a_i = vec![0.0; 3 * h];
        let mut a_h = vec![0.0; 3 * h];
        let mut du = vec![0.0; g.input];
        let mut dh_prev = vec![0.0; h];

        let conv_src: &[f64] = trace.in_acts.last().map(|v| v.as_slice()).unwrap_or(&trace.input);

        for t in (0..n).rev() {
            let dyt = d_y[t * OUT_DIM..(t + 1) * OUT_DIM].to_vec();
            if self.arch.residual {
                if let Some(dx) = d_input.as_deref_mut() {
                    axpy(1.0, &dyt, &mut dx[t * IN_DIM..t * IN_DIM + OUT_DIM]);
                }
            }

            // Output convolutions, top to bottom, at time t.
            for l in (0..n_out).rev() {
                let c = &self.layout.out_convs[l];
                let d_pre: Vec<f64> = if l + 1 == n_out {
                    dyt.clone()
                } else {
                    let a = &trace.out_acts[l][t * c.out_dim..(t + 1) * c.out_dim];
                    let d = &d_out_acts[l][t * c.out_dim..(t + 1) * c.out_dim];
                    d.iter().zip(a).map(|(d, a)| d * (1.0 - a * a)).collect()
                };
                if l == 0 {
                    conv_step_backward(
                        params,
                        c,
                        k,
                        &trace.hidden[h..],
                        t,
                        &d_pre,
                        grad,
                        Some(&mut d_hidden),
                        &mut window,
                    );
                } else {
                    let (below, _) = d_out_acts.split_at_mut(l);
                    conv_step_backward(
                        params,
                        c,
                        k,
                        &trace.out_acts[l - 1],
                        t,
                        &d_pre,
                        grad,
                        Some(&mut below[l - 1]),
                        &mut window,
                    );
                }
            }

            // GRU cell at time t.
            let h_prev = &trace.hidden[t * h..(t + 1) * h];
            u[..conv_width].copy_from_slice(&conv_src[t * conv_width..(t + 1) * conv_width]);
            u[conv_width..].copy_from_slice(&trace.feedback[t]);
            let dh = &d_hidden[t * h..(t + 1) * h];
            for j in 0..h {
                let r = trace.reset[t * h + j];
                let z = trace.update[t * h + j];
                let c = trace.candidate[t * h + j];
                let hn = trace.hidden_n[t * h + j];
                let dc = dh[j] * (1.0 - z);
                let dz = dh[j] * (h_prev[j] - c);
                dh_prev[j] = dh[j] * z;
                let dc_pre = dc * (1.0 - c * c);
                let dr = dc_pre * hn;
                let dr_pre = dr * r * (1.0 - r);
                let dz_pre = dz * z * (1.0 - z);
                a_i[j] = dr_pre;
                a_i[h + j] = dz_pre;
                a_i[2 * h + j] = dc_pre;
                a_h[j] = dr_pre;
                a_h[h + j] = dz_pre;
                a_h[2 * h + j] = dc_pre * r;
            }
            du.fill(0.0);
            for j in 0..3 * h {
                let ai = a_i[j];
                if ai != 0.0 {
                    grad[g.b_ih + j] += ai;
                    let row = g.w_ih + j * g.input;
                    axpy(ai, &u, &mut grad[row..row + g.input]);
                    axpy(ai, &params[row..row + g.input], &mut du);
                }
                let ah = a_h[j];
                if ah != 0.0 {
                    grad[g.b_hh + j] += ah;
                    let row = g.w_hh + j * h;
                    axpy(ah, h_prev, &mut grad[row..row + h]);
                    axpy(ah, &params[row..row + h], &mut dh_prev);
                }
            }
            if t > 0 {
                axpy(1.0, &dh_prev, &mut d_hidden[(t - 1) * h..t * h]);
                if trace.free_running {
                    axpy(1.0, &du[conv_width..], &mut d_y[(t - 1) * OUT_DIM..t * OUT_DIM]);
                }
            }
            d_conv_out[t * conv_width..(t + 1) * conv_width].copy_from_slice(&du[..conv_width]);
        }

        // Input convolutions, last layer first.
        let n_in = self.layout.in_convs.len();
        if n_in == 0 {
            if let Some(dx) = d_input.as_deref_mut() {
                axpy(1.0, &d_conv_out, dx);
            }
            return Ok(());
        }
        let mut d_act = d_conv_out;
        for l in (0..n_in).rev() {
            let c = &self.layout.in_convs[l];
            let acts = &trace.in_acts[l];
            let d_pre: Vec<f64> = d_act.iter().zip(acts).map(|(d, a)| d * (1.0 - a * a)).collect();
            let src: &[f64] = if l == 0 { &trace.input } else { &trace.in_acts[l - 1] };
            let mut d_src = vec![0.0; n * c.in_dim];
            let want_input = l > 0 || d_input.is_some();
            for t in 0..n {
                conv_step_backward(
                    params,
                    c,
                    k,
                    src,
                    t,
                    &d_pre[t * c.out_dim..(t + 1) * c.out_dim],
                    grad,
                    want_input.then_some(&mut d_src[..]),
                    &mut window,
                );
            }
            if l == 0 {
                if let Some(dx) = d_input.as_deref_mut() {
                    axpy(1.0, &d_src, dx);
                }
            }
            d_act = d_src;
        }
        Ok(())
    }
}
