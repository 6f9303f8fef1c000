//! The cycle-consistent converter: a source-to-target network `f` (theta)
//! and a target-to-source network `g` (phi) with identical shapes, trained on
//!
//! ```text
//! total = mean|f(X) - Y| + rho * mean|f(g(Y)) - Y|
//! ```
//!
//! over normalized mcep dims. All sequences here are normalized, row-major.
//! `f` consumes source-normalized frames and emits target-normalized mcep;
//! `g` consumes target-normalized frames and emits source-normalized mcep.

pub mod checkpoint;
pub mod net;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::{Domain, NormStats, FRAME_DIM, MCEP_DIM};
pub use net::{Arch, ConversionNet, Layout, Trace, IN_DIM, OUT_DIM};

/// Default cycle weight.
pub const DEFAULT_RHO: f64 = 1e-8;

/// The two L1 terms of the objective and their weighted sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub stot_l1: f64,
    pub cycle_l1: f64,
    pub total: f64,
    pub rho: f64,
}

impl LossBreakdown {
    pub fn new(stot_l1: f64, cycle_l1: f64, rho: f64) -> Self {
        LossBreakdown {
            stot_l1,
            cycle_l1,
            total: stot_l1 + rho * cycle_l1,
            rho,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.stot_l1.is_finite() && self.cycle_l1.is_finite() && self.total.is_finite()
    }
}

/// Gradients of the total loss, laid out like the parameter buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub theta: Vec<f64>,
    pub phi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CycleVcModel {
    arch: Arch,
    /// Parameters of `f`.
    pub theta: Vec<f64>,
    /// Parameters of `g`.
    pub phi: Vec<f64>,
    pub norm_src: NormStats,
    pub norm_tgt: NormStats,
}

fn round_to_f32(v: &mut [f64]) {
    for x in v {
        *x = *x as f32 as f64;
    }
}

impl CycleVcModel {
    /// Uniform initialization in `+-sqrt(1/fan_in)` per tensor, rounded to
    /// `f32` precision so checkpoints reload bit-exactly.
    pub fn init(arch: Arch, norm_src: NormStats, norm_tgt: NormStats, seed: u64) -> Result<Self> {
        arch.validate()?;
        norm_src.validate()?;
        norm_tgt.validate()?;
        let layout = Layout::new(&arch);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let draw = |rng: &mut ChaCha8Rng| {
            let mut p = vec![0.0; layout.total()];
            for t in layout.tensors(arch.kernel) {
                let bound = (1.0 / t.fan_in.max(1) as f64).sqrt();
                for v in &mut p[t.range] {
                    *v = rng.gen_range(-bound..bound);
                }
            }
            round_to_f32(&mut p);
            p
        };
        let theta = draw(&mut rng);
        let phi = draw(&mut rng);
        Ok(CycleVcModel {
            arch,
            theta,
            phi,
            norm_src,
            norm_tgt,
        })
    }

    /// Builds a model from explicit parameter buffers.
    pub fn from_parts(
        arch: Arch,
        theta: Vec<f64>,
        phi: Vec<f64>,
        norm_src: NormStats,
        norm_tgt: NormStats,
    ) -> Result<Self> {
        arch.validate()?;
        norm_src.validate()?;
        norm_tgt.validate()?;
        let total = Layout::new(&arch).total();
        if theta.len() != total || phi.len() != total {
            return Err(Error::Shape(format!(
                "parameter buffers have {} / {} values, architecture needs {total}",
                theta.len(),
                phi.len()
            )));
        }
        Ok(CycleVcModel {
            arch,
            theta,
            phi,
            norm_src,
            norm_tgt,
        })
    }

    /// A model whose `f` and `g` both pass the input mcep through unchanged
    /// (in normalized units). Needs a residual architecture.
    pub fn identity(arch: Arch, norm_src: NormStats, norm_tgt: NormStats, seed: u64) -> Result<Self> {
        if !arch.residual {
            return Err(Error::Config(
                "an identity-on-mcep model needs the residual connection".into(),
            ));
        }
        let mut m = Self::init(arch, norm_src, norm_tgt, seed)?;
        let last = m.layout().final_layer();
        m.theta[last.clone()].fill(0.0);
        m.phi[last].fill(0.0);
        Ok(m)
    }

    pub fn arch(&self) -> &Arch {
        &self.arch
    }

    pub fn layout(&self) -> Layout {
        Layout::new(&self.arch)
    }

    pub fn net(&self) -> ConversionNet {
        ConversionNet::new(self.arch)
    }

    pub fn param_count(&self) -> usize {
        self.theta.len()
    }

    pub fn all_finite(&self) -> bool {
        self.theta.iter().chain(&self.phi).all(|v| v.is_finite())
    }

    /// Source-to-target conversion of source-normalized frames.
    pub fn stot_forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.net().forward(&self.theta, x, None)?.into_output())
    }

    /// Target-to-source conversion of target-normalized frames.
    pub fn ttos_forward(&self, y: &[f64]) -> Result<Vec<f64>> {
        Ok(self.net().forward(&self.phi, y, None)?.into_output())
    }

    /// Forms the input of `f` on the cycle path: `g`'s mcep followed by the
    /// target frames' own lf0/uv/cap, re-expressed in source normalization.
    pub fn splice(&self, g_mcep: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        let n = check_frames(y)?;
        if g_mcep.len() != n * MCEP_DIM {
            return Err(Error::Shape(format!(
                "mcep sequence has {} values, expected {}",
                g_mcep.len(),
                n * MCEP_DIM
            )));
        }
        let (src, tgt) = (&self.norm_src, &self.norm_tgt);
        let mut out = vec![0.0; n * FRAME_DIM];
        for t in 0..n {
            let row = &mut out[t * FRAME_DIM..(t + 1) * FRAME_DIM];
            row[..MCEP_DIM].copy_from_slice(&g_mcep[t * MCEP_DIM..(t + 1) * MCEP_DIM]);
            for d in MCEP_DIM..FRAME_DIM {
                let raw = y[t * FRAME_DIM + d] * tgt.std[d] + tgt.mean[d];
                row[d] = (raw - src.mean[d]) / src.std[d];
            }
        }
        Ok(out)
    }

    /// Self-conversion `f(g(Y))` of target-normalized frames.
    pub fn cycle_path(&self, y: &[f64]) -> Result<Vec<f64>> {
        let g_out = self.ttos_forward(y)?;
        let spliced = self.splice(&g_out, y)?;
        self.stot_forward(&spliced)
    }

    pub fn cycle_loss(&self, x: &[f64], y: &[f64], rho: f64) -> Result<LossBreakdown> {
        let (stot, _) = self.stot_term(x, y, false)?;
        let (cycle, ..) = self.cycle_term(y, false)?;
        Ok(LossBreakdown::new(stot.0, cycle.0, rho))
    }

    pub fn loss_gradients(&self, x: &[f64], y: &[f64], rho: f64) -> Result<(LossBreakdown, Gradients)> {
        self.loss_gradients_with(x, y, rho, false)
    }

    /// Loss and gradients; with `teacher_forcing` the feedback frames of `f`
    /// are the target mcep instead of `f`'s own outputs.
    pub fn loss_gradients_with(
        &self,
        x: &[f64],
        y: &[f64],
        rho: f64,
        teacher_forcing: bool,
    ) -> Result<(LossBreakdown, Gradients)> {
        let net = self.net();
        let total = self.param_count();
        let mut grads = Gradients {
            theta: vec![0.0; total],
            phi: vec![0.0; total],
        };

        let ((stot, d_stot), stot_trace) = self.stot_term(x, y, teacher_forcing)?;
        net.backward(&self.theta, &stot_trace, &d_stot, &mut grads.theta, None)?;

        let ((cycle, d_cycle), f_trace, g_trace) = self.cycle_term(y, teacher_forcing)?;
        if rho != 0.0 {
            let d_cycle: Vec<f64> = d_cycle.iter().map(|d| rho * d).collect();
            let mut d_spliced = vec![0.0; f_trace.n_frames() * FRAME_DIM];
            net.backward(&self.theta, &f_trace, &d_cycle, &mut grads.theta, Some(&mut d_spliced))?;
            let d_g: Vec<f64> = d_spliced
                .chunks_exact(FRAME_DIM)
                .flat_map(|r| r[..MCEP_DIM].iter().copied())
                .collect();
            net.backward(&self.phi, &g_trace, &d_g, &mut grads.phi, None)?;
        }
        Ok((LossBreakdown::new(stot, cycle, rho), grads))
    }

    fn stot_term(&self, x: &[f64], y: &[f64], teacher_forcing: bool) -> Result<((f64, Vec<f64>), Trace)> {
        let n = check_frames(x)?;
        if check_frames(y)? != n {
            return Err(Error::Pairing(format!(
                "source has {n} frames, target has {}",
                y.len() / FRAME_DIM
            )));
        }
        let target = mcep_of(y);
        let teacher = teacher_forcing.then_some(target.as_slice());
        let trace = self.net().forward(&self.theta, x, teacher)?;
        Ok((l1(trace.output(), &target), trace))
    }

    fn cycle_term(&self, y: &[f64], teacher_forcing: bool) -> Result<((f64, Vec<f64>), Trace, Trace)> {
        check_frames(y)?;
        let net = self.net();
        let target = mcep_of(y);
        let g_trace = net.forward(&self.phi, y, None)?;
        let spliced = self.splice(g_trace.output(), y)?;
        let teacher = teacher_forcing.then_some(target.as_slice());
        let f_trace = net.forward(&self.theta, &spliced, teacher)?;
        Ok((l1(f_trace.output(), &target), f_trace, g_trace))
    }
}

fn check_frames(seq: &[f64]) -> Result<usize> {
    if seq.is_empty() || seq.len() % FRAME_DIM != 0 {
        return Err(Error::Shape(format!(
            "sequence of {} values is not a non-empty list of {FRAME_DIM}-dim frames",
            seq.len()
        )));
    }
    Ok(seq.len() / FRAME_DIM)
}

/// The mcep columns of full frames.
pub fn mcep_of(frames: &[f64]) -> Vec<f64> {
    frames
        .chunks_exact(FRAME_DIM)
        .flat_map(|r| r[..MCEP_DIM].iter().copied())
        .collect()
}

/// Mean absolute error and its subgradient (0 where the residual is 0).
fn l1(pred: &[f64], target: &[f64]) -> (f64, Vec<f64>) {
    let scale = 1.0 / pred.len() as f64;
    let mut sum = 0.0;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(p, t)| {
            let r = p - t;
            sum += r.abs();
            if r > 0.0 {
                scale
            } else if r < 0.0 {
                -scale
            } else {
                0.0
            }
        })
        .collect();
    (sum * scale, grad)
}

/// Identity statistics for both domains.
pub fn identity_stats() -> (NormStats, NormStats) {
    (NormStats::identity(Domain::Source), NormStats::identity(Domain::Target))
}
