use super::{InputModel, NetworkSpec, Rng, Synapse};
use crate::fixedpoint::{Fixed, QFormat};
use crate::npu::{NeuronParams, OracleParams, TimeStep};

pub const N_EXCITATORY: usize = 800;
pub const N_INHIBITORY: usize = 200;

/// The 800/200 randomly coupled network. Draw order: one `r` per
/// excitatory neuron, one per inhibitory neuron, then the weight matrix
/// row by row (postsynaptic outer, presynaptic inner), all from `seed`.
/// Thalamic input uses an independent stream derived from `seed`.
pub fn build_8020(seed: u64) -> NetworkSpec {
    let n = N_EXCITATORY + N_INHIBITORY;
    let mut rng = Rng::new(seed);
    let mut real = Vec::with_capacity(n);
    for _ in 0..N_EXCITATORY {
        let r = rng.uniform();
        let r2 = r * r;
        real.push(OracleParams { a: 0.02, b: 0.2, c: -65.0 + 15.0 * r2, d: 8.0 - 6.0 * r2 });
    }
    for _ in 0..N_INHIBITORY {
        let r = rng.uniform();
        real.push(OracleParams { a: 0.02 + 0.08 * r, b: 0.25 - 0.05 * r, c: -65.0, d: 2.0 });
    }
    let params: Vec<NeuronParams> = real
        .iter()
        .map(|p| NeuronParams::from_real(p.a, p.b, p.c, p.d).expect("8020 parameters fit their formats"))
        .collect();

    let mut synapses: Vec<Vec<Synapse>> = vec![Vec::with_capacity(n); n];
    for post in 0..n {
        for (pre, out) in synapses.iter_mut().enumerate() {
            let u = rng.uniform();
            let w_real = if pre < N_EXCITATORY { 0.5 * u } else { -u };
            let w = Fixed::saturating_from_real(w_real, QFormat::Q15_16).raw();
            out.push(Synapse { target: post as u32, w, w_real });
        }
    }

    let gaussian = (0..n).map(|i| if i < N_EXCITATORY { 5.0 } else { 2.0 }).collect();
    let init = real.iter().map(|p| (-65.0, p.b * -65.0)).collect();
    NetworkSpec {
        params,
        real_params: real,
        synapses,
        input: InputModel { gaussian, ..InputModel::silent(n) },
        decay: None,
        substeps: 2,
        h: TimeStep::Half,
        pin: false,
        init,
        input_seed: seed ^ 0xA5A5_5A5A_C3C3_3C3C,
    }
}
