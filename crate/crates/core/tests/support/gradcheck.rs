//! Central finite differences against the analytic gradients of the total
//! loss, over random architectures, sequence lengths, cycle weights and
//! parameter draws.

use cyclevc::features::{Domain, NormStats, FRAME_DIM};
use cyclevc::model::{Arch, CycleVcModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub const INSTANCES: usize = 120;
const H: f64 = 1e-6;
const REL: f64 = 1e-3;
const ABS: f64 = 1e-6;

fn random_stats(rng: &mut ChaCha8Rng, domain: Domain) -> NormStats {
    NormStats {
        mean: (0..FRAME_DIM).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        std: (0..FRAME_DIM).map(|_| rng.gen_range(0.5..2.0)).collect(),
        domain,
    }
}

fn normal_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

pub struct Instance {
    pub model: CycleVcModel,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub rho: f64,
    pub teacher_forcing: bool,
}

pub fn instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let arch = Arch {
        in_conv_layers: rng.gen_range(1..=2),
        in_channels: rng.gen_range(2..=4),
        kernel: rng.gen_range(1..=3),
        gru_hidden: rng.gen_range(2..=5),
        out_conv_layers: rng.gen_range(1..=2),
        residual: rng.gen_bool(0.5),
    };
    let n = rng.gen_range(1..=4);
    let norm_src = random_stats(&mut rng, Domain::Source);
    let norm_tgt = random_stats(&mut rng, Domain::Target);
    let mut model = CycleVcModel::init(arch, norm_src, norm_tgt, seed).unwrap();
    // Larger weights than the default draw keep the nonlinearities busy.
    for v in model.theta.iter_mut().chain(model.phi.iter_mut()) {
        *v *= 2.0;
    }
    Instance {
        model,
        x: normal_vec(&mut rng, n * FRAME_DIM),
        y: normal_vec(&mut rng, n * FRAME_DIM),
        rho: if rng.gen_bool(0.1) { 0.0 } else { rng.gen_range(0.1..1.0) },
        teacher_forcing: rng.gen_bool(0.2),
    }
}

fn total(inst: &Instance, model: &CycleVcModel) -> f64 {
    model
        .loss_gradients_with(&inst.x, &inst.y, inst.rho, inst.teacher_forcing)
        .unwrap()
        .0
        .total
}

/// Returns (checked coordinates, failures).
pub fn check(inst: &Instance) -> (usize, Vec<String>) {
    let (_, grads) = inst
        .model
        .loss_gradients_with(&inst.x, &inst.y, inst.rho, inst.teacher_forcing)
        .unwrap();
    let mut failures = Vec::new();
    let mut checked = 0;
    let mut probe = inst.model.clone();
    for which in 0..2 {
        let analytic = if which == 0 { &grads.theta } else { &grads.phi };
        for i in 0..analytic.len() {
            let orig = if which == 0 { probe.theta[i] } else { probe.phi[i] };
            let mut at = |v: f64| {
                if which == 0 {
                    probe.theta[i] = v;
                } else {
                    probe.phi[i] = v;
                }
                total(inst, &probe)
            };
            let plus = at(orig + H);
            let minus = at(orig - H);
            at(orig);
            let numeric = (plus - minus) / (2.0 * H);
            let a = analytic[i];
            checked += 1;
            if (a - numeric).abs() > ABS + REL * a.abs().max(numeric.abs()) {
                failures.push(format!(
                    "{}[{i}]: analytic {a:e} numeric {numeric:e}",
                    if which == 0 { "theta" } else { "phi" }
                ));
            }
        }
    }
    (checked, failures)
}


/// Checks `INSTANCES` seeded instances; returns (coordinates, failure lines).
pub fn run_suite() -> (usize, Vec<String>) {
    let mut failed = Vec::new();
    let mut coords = 0;
    for seed in 0..INSTANCES as u64 {
        let (n, f) = check(&instance(seed));
        coords += n;
        if !f.is_empty() {
            failed.push(format!("instance {seed} ({} bad): {}", f.len(), f[..f.len().min(3)].join("; ")));
        }
    }
    (coords, failed)
}
