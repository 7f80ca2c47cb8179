//! Whole-network simulation on top of the NPU and DCU models.
//!
//! One tick is 1 ms:
//! 1. synaptic current decays (or is cleared when the network has no decay),
//! 2. external input and weighted spikes from the previous tick are added
//!    with saturating Q15.16 adds in ascending presynaptic order,
//! 3. each neuron is updated `substeps` times; a spike ends its tick.
//!
//! The oracle mode runs the same construction in `f64` with the same
//! input stream.

mod net8020;
mod rng;
pub mod sudoku;

use std::fmt::Write as _;

pub use net8020::{build_8020, N_EXCITATORY, N_INHIBITORY};
pub use rng::Rng;

use crate::dcu::{decay_step, DividerSelect};
use crate::fixedpoint::{Fixed, QFormat};
use crate::npu::{izh_step, izh_step_oracle, NeuronParams, NmConfig, OracleParams, TimeStep, VuWord};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Synapse {
    pub target: u32,
    /// Q15.16 raw weight.
    pub w: i32,
    pub w_real: f64,
}

/// External current per neuron and tick:
/// `bias[i] + uniform[i]·U[0,1) + gaussian[i]·N(0,1)`.
/// A draw is consumed only for non-zero amplitudes.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct InputModel {
    pub bias: Vec<f64>,
    pub uniform: Vec<f64>,
    pub gaussian: Vec<f64>,
}

impl InputModel {
    pub fn silent(n: usize) -> Self {
        InputModel {
            bias: vec![0.0; n],
            uniform: vec![0.0; n],
            gaussian: vec![0.0; n],
        }
    }

    fn sample(&self, i: usize, rng: &mut Rng) -> f64 {
        let mut x = self.bias[i];
        if self.uniform[i] != 0.0 {
            x += self.uniform[i] * rng.uniform();
        }
        if self.gaussian[i] != 0.0 {
            x += self.gaussian[i] * rng.normal();
        }
        x
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub params: Vec<NeuronParams>,
    /// Unquantized parameters for the oracle.
    pub real_params: Vec<OracleParams>,
    /// Outgoing synapses per presynaptic neuron, targets ascending.
    pub synapses: Vec<Vec<Synapse>>,
    pub input: InputModel,
    pub decay: Option<DividerSelect>,
    pub substeps: u32,
    pub h: TimeStep,
    pub pin: bool,
    /// Initial (v, u) per neuron.
    pub init: Vec<(f64, f64)>,
    pub input_seed: u64,
}

impl NetworkSpec {
    /// A network of `n` copies of `params` with no synapses and no input.
    pub fn uniform(n: usize, params: NeuronParams) -> Self {
        let oracle = params.to_oracle();
        NetworkSpec {
            params: vec![params; n],
            real_params: vec![oracle; n],
            synapses: vec![Vec::new(); n],
            input: InputModel::silent(n),
            decay: None,
            substeps: 2,
            h: TimeStep::Half,
            pin: false,
            init: vec![(-65.0, oracle.b * -65.0); n],
            input_seed: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Weight from `pre` to `post`, zero when unconnected.
    pub fn weight(&self, post: usize, pre: usize) -> Fixed {
        let raw = self.synapses[pre]
            .binary_search_by_key(&(post as u32), |s| s.target)
            .map_or(0, |k| self.synapses[pre][k].w);
        Fixed::from_raw(raw as i64, QFormat::Q15_16).unwrap()
    }

    /// Sets a synapse, keeping targets sorted.
    pub fn connect(&mut self, post: usize, pre: usize, w_real: f64) {
        let w = Fixed::saturating_from_real(w_real, QFormat::Q15_16).raw();
        let syn = Synapse { target: post as u32, w, w_real };
        let list = &mut self.synapses[pre];
        match list.binary_search_by_key(&syn.target, |s| s.target) {
            Ok(k) => list[k] = syn,
            Err(k) => list.insert(k, syn),
        }
    }

    fn cfg(&self, i: usize) -> NmConfig {
        NmConfig { params: self.params[i], h: self.h, pin: self.pin }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    #[default]
    Fixed,
    Oracle,
}

impl std::str::FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fixed" => Ok(Mode::Fixed),
            "oracle" => Ok(Mode::Oracle),
            _ => Err(format!("unknown mode `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetState {
    pub vu: Vec<VuWord>,
    pub i_syn: Vec<Fixed>,
    pub t: u32,
    spiked: Vec<u32>,
    rng: Rng,
}

impl NetState {
    pub fn new(spec: &NetworkSpec) -> Self {
        let vu = spec
            .init
            .iter()
            .map(|&(v, u)| {
                VuWord::new(
                    Fixed::saturating_from_real(v, QFormat::Q7_8),
                    Fixed::saturating_from_real(u, QFormat::Q7_8),
                )
            })
            .collect();
        NetState {
            vu,
            i_syn: vec![Fixed::zero(QFormat::Q15_16); spec.len()],
            t: 0,
            spiked: Vec::new(),
            rng: Rng::new(spec.input_seed),
        }
    }

    /// Neurons that spiked in the last tick, ascending.
    pub fn last_spikes(&self) -> &[u32] {
        &self.spiked
    }
}

/// Advance one tick; returns the neurons that spiked, ascending.
pub fn step_network(spec: &NetworkSpec, state: &mut NetState) -> Vec<u32> {
    let n = spec.len();
    let mut acc: Vec<i32> = match spec.decay {
        Some(d) => state.i_syn.iter().map(|&i| decay_step(i, d, spec.h).raw()).collect(),
        None => vec![0; n],
    };
    for (i, a) in acc.iter_mut().enumerate() {
        let x = spec.input.sample(i, &mut state.rng);
        *a = a.saturating_add(Fixed::saturating_from_real(x, QFormat::Q15_16).raw());
    }
    for &j in &state.spiked {
        for s in &spec.synapses[j as usize] {
            let a = &mut acc[s.target as usize];
            *a = a.saturating_add(s.w);
        }
    }
    let mut spikes = Vec::new();
    for i in 0..n {
        let i_syn = Fixed::from_raw(acc[i] as i64, QFormat::Q15_16).unwrap();
        state.i_syn[i] = i_syn;
        let cfg = spec.cfg(i);
        let mut vu = state.vu[i];
        for _ in 0..spec.substeps {
            let r = izh_step(vu, i_syn, &cfg);
            vu = r.vu;
            if r.spike {
                spikes.push(i as u32);
                break;
            }
        }
        state.vu[i] = vu;
    }
    state.t += 1;
    state.spiked.clone_from(&spikes);
    spikes
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleState {
    pub v: Vec<f64>,
    pub u: Vec<f64>,
    pub i_syn: Vec<f64>,
    pub t: u32,
    spiked: Vec<u32>,
    rng: Rng,
}

impl OracleState {
    pub fn new(spec: &NetworkSpec) -> Self {
        OracleState {
            v: spec.init.iter().map(|p| p.0).collect(),
            u: spec.init.iter().map(|p| p.1).collect(),
            i_syn: vec![0.0; spec.len()],
            t: 0,
            spiked: Vec::new(),
            rng: Rng::new(spec.input_seed),
        }
    }
}

/// Double-precision counterpart of [`step_network`].
pub fn step_oracle(spec: &NetworkSpec, state: &mut OracleState) -> Vec<u32> {
    let n = spec.len();
    let h = spec.h.millis();
    for i in 0..n {
        state.i_syn[i] = match spec.decay {
            Some(d) => state.i_syn[i] - state.i_syn[i] / d.divisor() as f64 * h,
            None => 0.0,
        };
        state.i_syn[i] += spec.input.sample(i, &mut state.rng);
    }
    for &j in &state.spiked {
        for s in &spec.synapses[j as usize] {
            state.i_syn[s.target as usize] += s.w_real;
        }
    }
    let mut spikes = Vec::new();
    for i in 0..n {
        let p = &spec.real_params[i];
        let (mut v, mut u) = (state.v[i], state.u[i]);
        for _ in 0..spec.substeps {
            let r = izh_step_oracle(v, u, state.i_syn[i], p, h, spec.pin);
            (v, u) = (r.v, r.u);
            if r.spike {
                spikes.push(i as u32);
                break;
            }
        }
        state.v[i] = v;
        state.u[i] = u;
    }
    state.t += 1;
    state.spiked.clone_from(&spikes);
    spikes
}

/// Either engine behind one interface.
#[derive(Debug, Clone)]
pub enum Simulation<'a> {
    Fixed(&'a NetworkSpec, NetState),
    Oracle(&'a NetworkSpec, OracleState),
}

impl<'a> Simulation<'a> {
    pub fn new(spec: &'a NetworkSpec, mode: Mode) -> Self {
        match mode {
            Mode::Fixed => Simulation::Fixed(spec, NetState::new(spec)),
            Mode::Oracle => Simulation::Oracle(spec, OracleState::new(spec)),
        }
    }

    pub fn tick(&mut self) -> Vec<u32> {
        match self {
            Simulation::Fixed(spec, s) => step_network(spec, s),
            Simulation::Oracle(spec, s) => step_oracle(spec, s),
        }
    }

    pub fn t(&self) -> u32 {
        match self {
            Simulation::Fixed(_, s) => s.t,
            Simulation::Oracle(_, s) => s.t,
        }
    }
}

pub fn run_simulation(spec: &NetworkSpec, ticks: u32, mode: Mode) -> SpikeRaster {
    let mut sim = Simulation::new(spec, mode);
    let mut raster = SpikeRaster::new(spec.len());
    for _ in 0..ticks {
        let t = sim.t();
        for i in sim.tick() {
            raster.events.push((t, i));
        }
    }
    raster.ticks = ticks;
    raster
}

/// Spike events `(tick, neuron)` sorted by tick then neuron.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SpikeRaster {
    pub events: Vec<(u32, u32)>,
    pub n: usize,
    pub ticks: u32,
}

impl SpikeRaster {
    pub fn new(n: usize) -> Self {
        SpikeRaster { events: Vec::new(), n, ticks: 0 }
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn count_in(&self, neurons: std::ops::Range<usize>) -> usize {
        self.events.iter().filter(|e| neurons.contains(&(e.1 as usize))).count()
    }

    /// Mean firing rate in Hz of `neurons`, with 1 ms ticks.
    pub fn mean_rate_hz(&self, neurons: std::ops::Range<usize>) -> f64 {
        if neurons.is_empty() || self.ticks == 0 {
            return 0.0;
        }
        self.count_in(neurons.clone()) as f64 * 1000.0 / (neurons.len() as f64 * self.ticks as f64)
    }

    pub fn spike_trains(&self) -> Vec<Vec<u32>> {
        let mut trains = vec![Vec::new(); self.n];
        for &(t, i) in &self.events {
            trains[i as usize].push(t);
        }
        trains
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,neuron\n");
        for (t, i) in &self.events {
            let _ = writeln!(out, "{t},{i}");
        }
        out
    }
}

/// Default ISI binning used by the command line and the acceptance suite.
pub const ISI_BIN_MS: f64 = 5.0;
pub const ISI_MAX_MS: f64 = 200.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub bin_ms: f64,
    /// Sums to 1, or all zero when there were no intervals.
    pub mass: Vec<f64>,
}

impl Histogram {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_start_ms,mass\n");
        for (k, m) in self.mass.iter().enumerate() {
            let _ = writeln!(out, "{},{m:.6}", k as f64 * self.bin_ms);
        }
        out
    }

    pub fn l1_distance(&self, other: &Histogram) -> f64 {
        let n = self.mass.len().max(other.mass.len());
        (0..n)
            .map(|k| (self.mass.get(k).unwrap_or(&0.0) - other.mass.get(k).unwrap_or(&0.0)).abs())
            .sum()
    }
}

/// Pooled per-neuron inter-spike intervals, binned by `bin_ms` up to
/// `max_ms`. Intervals of `max_ms` or longer are left out.
///
/// # Panics
/// If `bin_ms` or `max_ms` is not positive.
pub fn isi_histogram(r: &SpikeRaster, bin_ms: f64, max_ms: f64) -> Histogram {
    assert!(bin_ms > 0.0 && max_ms > 0.0, "bin_ms and max_ms must be positive");
    let bins = (max_ms / bin_ms).ceil() as usize;
    let mut counts = vec![0u64; bins];
    for train in r.spike_trains() {
        for pair in train.windows(2) {
            let isi = (pair[1] - pair[0]) as f64;
            if isi < max_ms {
                counts[((isi / bin_ms) as usize).min(bins - 1)] += 1;
            }
        }
    }
    let total: u64 = counts.iter().sum();
    let mass = if total == 0 {
        vec![0.0; bins]
    } else {
        counts.iter().map(|&c| c as f64 / total as f64).collect()
    };
    Histogram { bin_ms, mass }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(i_syn: f64) -> NetworkSpec {
        let mut spec = NetworkSpec::uniform(1, NeuronParams::default());
        spec.input.bias[0] = i_syn;
        spec
    }

    #[test]
    fn zero_ticks_empty_raster() {
        let spec = single(10.0);
        assert!(run_simulation(&spec, 0, Mode::Fixed).is_empty());
    }

    #[test]
    fn quiet_network_drifts_without_spiking() {
        let spec = NetworkSpec::uniform(3, NeuronParams::default());
        let mut s = NetState::new(&spec);
        for _ in 0..200 {
            assert!(step_network(&spec, &mut s).is_empty());
        }
        // rest is about -70 for these parameters
        let v = s.vu[0].v().to_real();
        assert!(v < -65.0 && v > -72.0, "{v}");
    }

    #[test]
    fn constant_drive_spikes_periodically_like_oracle() {
        let spec = single(10.0);
        let fixed = run_simulation(&spec, 1000, Mode::Fixed);
        let oracle = run_simulation(&spec, 1000, Mode::Oracle);
        let period = |r: &SpikeRaster| {
            let t = &r.spike_trains()[0];
            assert!(t.len() > 5);
            let tail = &t[t.len() - 4..];
            (tail[3] - tail[0]) as f64 / 3.0
        };
        let (pf, po) = (period(&fixed), period(&oracle));
        assert!((pf - po).abs() <= 2.0, "{pf} vs {po}");
    }

    #[test]
    fn one_spike_adds_weight_exactly() {
        let mut spec = NetworkSpec::uniform(2, NeuronParams::default());
        spec.input.bias[0] = 1000.0;
        spec.connect(1, 0, 6.0);
        spec.decay = Some(DividerSelect::new(2).unwrap());
        let mut s = NetState::new(&spec);
        loop {
            let before = decay_step(s.i_syn[1], spec.decay.unwrap(), spec.h);
            let fired = s.last_spikes().contains(&0);
            step_network(&spec, &mut s);
            if fired {
                assert_eq!(s.i_syn[1].raw() - before.raw(), 6 << 16);
                break;
            }
        }
    }

    #[test]
    fn weight_lookup() {
        let mut spec = NetworkSpec::uniform(3, NeuronParams::default());
        spec.connect(2, 0, -4.0);
        spec.connect(1, 0, 0.5);
        assert_eq!(spec.weight(2, 0).to_real(), -4.0);
        assert_eq!(spec.weight(1, 0).to_real(), 0.5);
        assert_eq!(spec.weight(0, 2).raw(), 0);
        assert_eq!(spec.synapses[0].iter().map(|s| s.target).collect::<Vec<_>>(), [1, 2]);
    }

    #[test]
    fn histogram_examples() {
        let mut r = SpikeRaster::new(1);
        r.ticks = 100;
        r.events = (0..10).map(|k| (k * 10, 0)).collect();
        let h = isi_histogram(&r, 5.0, 50.0);
        assert_eq!(h.mass[2], 1.0);
        assert_eq!(h.mass.iter().sum::<f64>(), 1.0);
        let empty = isi_histogram(&SpikeRaster::new(4), 5.0, 50.0);
        assert!(empty.mass.iter().all(|&m| m == 0.0));
        assert_eq!(h.l1_distance(&empty), 1.0);
        assert!(h.to_csv().starts_with("bin_start_ms,mass\n0,0.000000\n5,0.000000\n10,1.000000\n"));
    }

    #[test]
    fn raster_csv_and_rates() {
        let r = SpikeRaster { events: vec![(0, 1), (3, 0)], n: 2, ticks: 1000 };
        assert_eq!(r.to_csv(), "t,neuron\n0,1\n3,0\n");
        assert_eq!(r.mean_rate_hz(0..2), 1.0);
    }
}
