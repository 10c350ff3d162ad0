//! Population/synapse container: routes spikes each timestep, hosts tonic
//! spike sources, records spike trains.

use rand::distributions::{Distribution, Uniform};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CpgError, Result};
use crate::lif::{NeuronParams, NeuronState, Propagator, SignClass};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    NpgH,
    NpgQ,
    NpgT,
    Pfn,
    In,
    Motor,
    TonicSource,
}

impl Role {
    pub fn as_str(&self) -> &'static str {
        match self {
            Role::NpgH => "NPG_H",
            Role::NpgQ => "NPG_Q",
            Role::NpgT => "NPG_T",
            Role::Pfn => "PFN",
            Role::In => "IN",
            Role::Motor => "MOTOR",
            Role::TonicSource => "TONIC_SOURCE",
        }
    }

    pub fn parse(s: &str) -> Option<Role> {
        Some(match s {
            "NPG_H" => Role::NpgH,
            "NPG_Q" => Role::NpgQ,
            "NPG_T" => Role::NpgT,
            "PFN" => Role::Pfn,
            "IN" => Role::In,
            "MOTOR" => Role::Motor,
            "TONIC_SOURCE" => Role::TonicSource,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PopulationHandle {
    pub population_id: usize,
    pub first_neuron: usize,
    pub count: usize,
    pub role: Role,
}

impl PopulationHandle {
    pub fn neuron_ids(&self) -> std::ops::Range<usize> {
        self.first_neuron..self.first_neuron + self.count
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynapseSpec {
    pub pre_id: usize,
    pub post_id: usize,
    /// Alpha-kernel peak amplitude in pA; signed (inhibitory <= 0).
    pub weight: f64,
    pub sign_class: SignClass,
    pub plastic: bool,
    pub delay_ms: f64,
}

impl SynapseSpec {
    pub fn sign_bound_ok(&self) -> bool {
        match self.sign_class {
            SignClass::Excitatory => self.weight >= 0.0,
            SignClass::Inhibitory => self.weight <= 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TonicMode {
    Regular,
    Poisson,
}

/// External spike source description. `frequency_spikes_per_s` is the paper's
/// tonic frequency F.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TonicSource {
    pub frequency_spikes_per_s: f64,
    pub start_ms: f64,
    pub stop_ms: f64,
    pub mode: TonicMode,
    pub seed: u64,
}

impl TonicSource {
    pub fn regular(frequency: f64, start_ms: f64, stop_ms: f64) -> Self {
        TonicSource {
            frequency_spikes_per_s: frequency,
            start_ms,
            stop_ms,
            mode: TonicMode::Regular,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.frequency_spikes_per_s < 0.0 {
            return Err(CpgError::config("tonic frequency must be non-negative"));
        }
        if !(self.start_ms < self.stop_ms) {
            return Err(CpgError::config("tonic source requires start < stop"));
        }
        Ok(())
    }

    /// Emission times. Regular mode: `start + k/F` for k = 1..floor((stop-start)*F/1000),
    /// so a regular source emits exactly that many spikes.
    pub fn spike_times_ms(&self) -> Vec<f64> {
        if self.frequency_spikes_per_s <= 0.0 {
            return Vec::new();
        }
        let period = 1000.0 / self.frequency_spikes_per_s;
        match self.mode {
            TonicMode::Regular => {
                let n = ((self.stop_ms - self.start_ms) * self.frequency_spikes_per_s / 1000.0)
                    .floor() as usize;
                (1..=n).map(|k| self.start_ms + k as f64 * period).collect()
            }
            TonicMode::Poisson => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                let mut t = self.start_ms;
                let mut out = Vec::new();
                loop {
                    let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
                    t += -u.ln() * period;
                    if t >= self.stop_ms {
                        break;
                    }
                    out.push(t);
                }
                out
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum ConnectPattern {
    OneToOne,
    AllToAll,
    RandomPairwise(f64),
}

#[derive(Debug, Clone, Copy)]
pub enum WeightDist {
    Fixed(f64),
    Uniform(f64, f64),
}

impl WeightDist {
    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            WeightDist::Fixed(w) => w,
            WeightDist::Uniform(lo, hi) => {
                if lo == hi {
                    lo
                } else {
                    Uniform::new(lo, hi).sample(rng)
                }
            }
        }
    }
}

/// Per-neuron recorded spike trains plus run metadata.
#[derive(Debug, Clone)]
pub struct SimulationResult {
    pub spike_times_ms: Vec<Vec<f64>>,
    pub total_duration_ms: f64,
    pub dt_ms: f64,
    pub seed: u64,
}

impl SimulationResult {
    pub fn spikes_of(&self, neuron_id: usize) -> &[f64] {
        &self.spike_times_ms[neuron_id]
    }

    pub fn spikes_in_window(&self, neuron_id: usize, start_ms: f64, end_ms: f64) -> &[f64] {
        let train = &self.spike_times_ms[neuron_id];
        let lo = train.partition_point(|&t| t < start_ms);
        let hi = train.partition_point(|&t| t < end_ms);
        &train[lo..hi]
    }

    pub fn total_spike_count(&self) -> usize {
        self.spike_times_ms.iter().map(Vec::len).sum()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RunConfig {
    pub duration_ms: f64,
    pub dt_ms: f64,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            duration_ms: 1000.0,
            dt_ms: 0.1,
            seed: 0,
        }
    }
}

/// Parameter ranges for uniform per-neuron sampling (Table-1-style rows).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ParamRanges {
    pub external_current_pa: (f64, f64),
    pub resting_potential_mv: (f64, f64),
    pub membrane_capacity_pf: (f64, f64),
    pub membrane_time_constant_ms: (f64, f64),
    pub spike_threshold_mv: (f64, f64),
    pub reset_potential_mv: (f64, f64),
}

impl ParamRanges {
    pub fn validate(&self) -> Result<()> {
        for (lo, hi) in [
            self.external_current_pa,
            self.resting_potential_mv,
            self.membrane_capacity_pf,
            self.membrane_time_constant_ms,
            self.spike_threshold_mv,
            self.reset_potential_mv,
        ] {
            if lo > hi {
                return Err(CpgError::config("parameter range min exceeds max"));
            }
        }
        Ok(())
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng, defaults: &NeuronParams) -> NeuronParams {
        let mut pick = |(lo, hi): (f64, f64)| {
            if lo == hi {
                lo
            } else {
                rng.gen_range(lo..hi)
            }
        };
        NeuronParams {
            external_current_pa: pick(self.external_current_pa),
            resting_potential_mv: pick(self.resting_potential_mv),
            membrane_capacity_pf: pick(self.membrane_capacity_pf),
            membrane_time_constant_ms: pick(self.membrane_time_constant_ms),
            spike_threshold_mv: pick(self.spike_threshold_mv),
            reset_potential_mv: pick(self.reset_potential_mv),
            refractory_period_ms: defaults.refractory_period_ms,
            syn_time_constant_excitatory_ms: defaults.syn_time_constant_excitatory_ms,
            syn_time_constant_inhibitory_ms: defaults.syn_time_constant_inhibitory_ms,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Network {
    neurons: Vec<NeuronParams>,
    populations: Vec<PopulationHandle>,
    synapses: Vec<SynapseSpec>,
}

impl Network {
    pub fn new() -> Self {
        Network {
            neurons: Vec::new(),
            populations: Vec::new(),
            synapses: Vec::new(),
        }
    }

    pub fn neuron_count(&self) -> usize {
        self.neurons.len()
    }

    pub fn neuron_params(&self, id: usize) -> &NeuronParams {
        &self.neurons[id]
    }

    pub fn populations(&self) -> &[PopulationHandle] {
        &self.populations
    }

    pub fn synapses(&self) -> &[SynapseSpec] {
        &self.synapses
    }

    pub fn set_weight(&mut self, synapse_idx: usize, weight: f64) {
        self.synapses[synapse_idx].weight = weight;
    }

    pub fn set_delay(&mut self, synapse_idx: usize, delay_ms: f64) {
        self.synapses[synapse_idx].delay_ms = delay_ms;
    }

    pub fn synapse(&self, idx: usize) -> &SynapseSpec {
        &self.synapses[idx]
    }

    pub fn role_of(&self, neuron_id: usize) -> Role {
        self.populations
            .iter()
            .find(|p| p.neuron_ids().contains(&neuron_id))
            .map(|p| p.role)
            .expect("neuron belongs to a population")
    }

    pub fn add_population_fixed(
        &mut self,
        n: usize,
        params: NeuronParams,
        role: Role,
    ) -> Result<PopulationHandle> {
        params.validate()?;
        self.push_population(n, |_| params, role)
    }

    pub fn add_population_sampled(
        &mut self,
        n: usize,
        ranges: &ParamRanges,
        defaults: &NeuronParams,
        role: Role,
        rng: &mut ChaCha8Rng,
    ) -> Result<PopulationHandle> {
        ranges.validate()?;
        let params: Vec<NeuronParams> = (0..n).map(|_| ranges.sample(rng, defaults)).collect();
        for p in &params {
            p.validate()?;
        }
        self.push_population(n, |i| params[i], role)
    }

    pub fn add_population_from(
        &mut self,
        params: Vec<NeuronParams>,
        role: Role,
    ) -> Result<PopulationHandle> {
        for p in &params {
            p.validate()?;
        }
        self.push_population(params.len(), |i| params[i], role)
    }

    /// A spike source population. Emission schedules are supplied per run, so
    /// the same network can be driven at different tonic frequencies.
    pub fn add_tonic_population(&mut self) -> Result<PopulationHandle> {
        // Device neurons never integrate; params are placeholders.
        self.push_population(1, |_| crate::table1::cpg_row(), Role::TonicSource)
    }

    fn push_population(
        &mut self,
        n: usize,
        params_of: impl Fn(usize) -> NeuronParams,
        role: Role,
    ) -> Result<PopulationHandle> {
        if n == 0 {
            return Err(CpgError::config("population size must be at least 1"));
        }
        let first = self.neurons.len();
        for i in 0..n {
            self.neurons.push(params_of(i));
        }
        let handle = PopulationHandle {
            population_id: self.populations.len(),
            first_neuron: first,
            count: n,
            role,
        };
        self.populations.push(handle);
        Ok(handle)
    }

    pub fn add_synapse(
        &mut self,
        pre_id: usize,
        post_id: usize,
        weight: f64,
        sign_class: SignClass,
        plastic: bool,
        delay_ms: f64,
    ) -> Result<usize> {
        let spec = SynapseSpec {
            pre_id,
            post_id,
            weight,
            sign_class,
            plastic,
            delay_ms,
        };
        if pre_id >= self.neurons.len() || post_id >= self.neurons.len() {
            return Err(CpgError::config("synapse endpoint out of range"));
        }
        if !spec.sign_bound_ok() {
            return Err(CpgError::config(format!(
                "weight {} violates {:?} sign class",
                weight, sign_class
            )));
        }
        if delay_ms <= 0.0 {
            return Err(CpgError::config("synaptic delay must be positive"));
        }
        self.synapses.push(spec);
        Ok(self.synapses.len() - 1)
    }

    pub fn connect(
        &mut self,
        pre: &PopulationHandle,
        post: &PopulationHandle,
        pattern: ConnectPattern,
        weights: WeightDist,
        sign_class: SignClass,
        plastic: bool,
        delay_ms: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<usize>> {
        let mut created = Vec::new();
        match pattern {
            ConnectPattern::OneToOne => {
                if pre.count != post.count {
                    return Err(CpgError::config(format!(
                        "one_to_one requires equal sizes ({} vs {})",
                        pre.count, post.count
                    )));
                }
                for i in 0..pre.count {
                    let w = weights.sample(rng);
                    created.push(self.add_synapse(
                        pre.first_neuron + i,
                        post.first_neuron + i,
                        w,
                        sign_class,
                        plastic,
                        delay_ms,
                    )?);
                }
            }
            ConnectPattern::AllToAll => {
                for a in pre.neuron_ids() {
                    for b in post.neuron_ids() {
                        let w = weights.sample(rng);
                        created.push(self.add_synapse(a, b, w, sign_class, plastic, delay_ms)?);
                    }
                }
            }
            ConnectPattern::RandomPairwise(p) => {
                if !(0.0..=1.0).contains(&p) {
                    return Err(CpgError::config("pairwise probability outside [0, 1]"));
                }
                for a in pre.neuron_ids() {
                    for b in post.neuron_ids() {
                        if a == b {
                            continue;
                        }
                        if rng.gen::<f64>() < p {
                            let w = weights.sample(rng);
                            created.push(self.add_synapse(a, b, w, sign_class, plastic, delay_ms)?);
                        }
                    }
                }
            }
        }
        Ok(created)
    }

    /// Advances the whole network. Tonic schedules are keyed by the tonic
    /// population id; tonic populations without a schedule stay silent.
    pub fn run(
        &self,
        cfg: &RunConfig,
        tonic: &[(usize, Vec<TonicSource>)],
    ) -> Result<SimulationResult> {
        if !(cfg.duration_ms > 0.0) {
            return Err(CpgError::config("duration must be positive"));
        }
        let dt = cfg.dt_ms;
        if !(dt > 0.0) {
            return Err(CpgError::config("dt must be positive"));
        }
        let n = self.neurons.len();
        let n_steps = (cfg.duration_ms / dt).round() as usize;

        let is_device: Vec<bool> = (0..n)
            .map(|i| {
                self.populations
                    .iter()
                    .any(|p| p.role == Role::TonicSource && p.neuron_ids().contains(&i))
            })
            .collect();

        let props: Vec<Propagator> = self
            .neurons
            .iter()
            .map(|p| Propagator::new(p, dt))
            .collect::<Result<_>>()?;
        let mut states: Vec<NeuronState> = self
            .neurons
            .iter()
            .map(|p| NeuronState::resting(p))
            .collect();

        // Outgoing adjacency with per-synapse delay in steps.
        let mut outgoing: Vec<Vec<(u32, f64, SignClass, u32)>> = vec![Vec::new(); n];
        let mut max_delay_steps = 1usize;
        for s in &self.synapses {
            if s.delay_ms < dt {
                return Err(CpgError::config(format!(
                    "synaptic delay {} ms below dt {} ms",
                    s.delay_ms, dt
                )));
            }
            let d = (s.delay_ms / dt).round().max(1.0) as usize;
            max_delay_steps = max_delay_steps.max(d);
            outgoing[s.pre_id].push((s.post_id as u32, s.weight, s.sign_class, d as u32));
        }

        // Per-tonic-neuron spike schedules, converted to step indices.
        let mut tonic_steps: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (pop_id, sources) in tonic {
            let pop = self
                .populations
                .get(*pop_id)
                .filter(|p| p.role == Role::TonicSource)
                .ok_or_else(|| CpgError::config(format!("population {pop_id} is not a tonic source")))?;
            for src in sources {
                src.validate()?;
                for t in src.spike_times_ms() {
                    let step = (t / dt).round() as usize;
                    if step <= n_steps {
                        tonic_steps[pop.first_neuron].push(step);
                    }
                }
            }
        }
        for s in &mut tonic_steps {
            s.sort_unstable();
        }
        let mut tonic_cursor = vec![0usize; n];

        let ring_len = max_delay_steps + 1;
        let mut pending: Vec<Vec<(u32, f64, SignClass)>> = vec![Vec::new(); ring_len];
        let mut inbox_ex: Vec<f64> = vec![0.0; n];
        let mut inbox_in: Vec<f64> = vec![0.0; n];
        let mut recorded: Vec<Vec<f64>> = vec![Vec::new(); n];
        let mut fired: Vec<u32> = Vec::new();

        for step_idx in 1..=n_steps {
            let slot = step_idx % ring_len;
            for &(target, w, sign) in pending[slot].iter() {
                match sign {
                    SignClass::Excitatory => inbox_ex[target as usize] += w,
                    SignClass::Inhibitory => inbox_in[target as usize] += w,
                }
            }
            pending[slot].clear();

            fired.clear();
            advance_step(
                &props,
                &mut states,
                &is_device,
                &mut inbox_ex,
                &mut inbox_in,
                &mut fired,
            );

            // Scripted tonic emissions.
            for (id, steps) in tonic_steps.iter().enumerate() {
                let c = &mut tonic_cursor[id];
                while *c < steps.len() && steps[*c] <= step_idx {
                    if steps[*c] == step_idx {
                        fired.push(id as u32);
                    }
                    *c += 1;
                }
            }

            let t = step_idx as f64 * dt;
            for &id in &fired {
                recorded[id as usize].push(t);
                for &(target, w, sign, d) in &outgoing[id as usize] {
                    let dest = (step_idx + d as usize) % ring_len;
                    pending[dest].push((target, w, sign));
                }
            }
        }

        Ok(SimulationResult {
            spike_times_ms: recorded,
            total_duration_ms: cfg.duration_ms,
            dt_ms: dt,
            seed: cfg.seed,
        })
    }
}

impl Default for Network {
    fn default() -> Self {
        Network::new()
    }
}

/// One synchronous update of every neuron: injects accumulated spikes, then
/// advances the exponential propagator. Neurons only touch their own state,
/// so the loop is data-parallel when the `parallel` feature is on.
fn advance_step(
    props: &[Propagator],
    states: &mut [NeuronState],
    is_device: &[bool],
    inbox_ex: &mut [f64],
    inbox_in: &mut [f64],
    fired: &mut Vec<u32>,
) {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        let flags: Vec<bool> = states
            .par_iter_mut()
            .enumerate()
            .map(|(i, state)| {
                advance_one(
                    i, props, state, is_device, inbox_ex[i], inbox_in[i],
                )
            })
            .collect();
        for (i, f) in flags.into_iter().enumerate() {
            if f {
                fired.push(i as u32);
            }
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        for (i, state) in states.iter_mut().enumerate() {
            if advance_one(i, props, state, is_device, inbox_ex[i], inbox_in[i]) {
                fired.push(i as u32);
            }
        }
    }
    inbox_ex.iter_mut().for_each(|v| *v = 0.0);
    inbox_in.iter_mut().for_each(|v| *v = 0.0);
}

#[inline]
fn advance_one(
    i: usize,
    props: &[Propagator],
    state: &mut NeuronState,
    is_device: &[bool],
    dx: f64,
    di: f64,
) -> bool {
    if is_device[i] {
        return false;
    }
    let prop = &props[i];
    if dx != 0.0 {
        prop.inject(state, dx, SignClass::Excitatory);
    }
    if di != 0.0 {
        prop.inject(state, di, SignClass::Inhibitory);
    }
    prop.advance(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table1;

    #[test]
    fn empty_duration_rejected_and_empty_network_silent() {
        let net = Network::new();
        assert!(net
            .run(
                &RunConfig {
                    duration_ms: 0.0,
                    ..Default::default()
                },
                &[]
            )
            .is_err());
        let res = net.run(&RunConfig::default(), &[]).unwrap();
        assert_eq!(res.total_spike_count(), 0);
    }

    #[test]
    fn zero_population_rejected() {
        let mut net = Network::new();
        assert!(net
            .add_population_fixed(0, table1::motor_row(), Role::Motor)
            .is_err());
    }

    #[test]
    fn one_to_one_counts_and_mismatch() {
        let mut net = Network::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = net
            .add_population_fixed(10, table1::cpg_row(), Role::Pfn)
            .unwrap();
        let b = net
            .add_population_fixed(10, table1::cpg_row(), Role::In)
            .unwrap();
        let made = net
            .connect(
                &a,
                &b,
                ConnectPattern::OneToOne,
                WeightDist::Fixed(1.0),
                SignClass::Excitatory,
                false,
                1.0,
                &mut rng,
            )
            .unwrap();
        assert_eq!(made.len(), 10);
        for (i, idx) in made.iter().enumerate() {
            let s = net.synapse(*idx);
            assert_eq!(s.pre_id, a.first_neuron + i);
            assert_eq!(s.post_id, b.first_neuron + i);
        }
        let c = net
            .add_population_fixed(7, table1::cpg_row(), Role::In)
            .unwrap();
        assert!(net
            .connect(
                &a,
                &c,
                ConnectPattern::OneToOne,
                WeightDist::Fixed(1.0),
                SignClass::Excitatory,
                false,
                1.0,
                &mut rng,
            )
            .is_err());
    }

    #[test]
    fn all_to_all_product_count() {
        let mut net = Network::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pfn = net
            .add_population_fixed(300, table1::cpg_row(), Role::Pfn)
            .unwrap();
        let motor = net
            .add_population_fixed(25, table1::motor_row(), Role::Motor)
            .unwrap();
        let made = net
            .connect(
                &pfn,
                &motor,
                ConnectPattern::AllToAll,
                WeightDist::Uniform(1.0, 5.0),
                SignClass::Excitatory,
                true,
                1.0,
                &mut rng,
            )
            .unwrap();
        assert_eq!(made.len(), 7500);
    }

    #[test]
    fn random_pairwise_count_within_four_sigma() {
        // Binomial oracle: n = 200*199 trials at p = 0.10.
        let trials: f64 = 200.0 * 199.0;
        let p: f64 = 0.10;
        let mean = trials * p;
        let sigma = (trials * p * (1.0 - p)).sqrt();
        for seed in [1u64, 2, 3] {
            let mut net = Network::new();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pfn = net
                .add_population_fixed(200, table1::cpg_row(), Role::Pfn)
                .unwrap();
            let made = net
                .connect(
                    &pfn,
                    &pfn,
                    ConnectPattern::RandomPairwise(p),
                    WeightDist::Uniform(-3.0, -1.0),
                    SignClass::Inhibitory,
                    false,
                    1.0,
                    &mut rng,
                )
                .unwrap();
            let count = made.len() as f64;
            assert!(
                (count - mean).abs() < 4.0 * sigma,
                "seed {seed}: count {count} vs mean {mean}"
            );
            assert!(net.synapses().iter().all(|s| s.pre_id != s.post_id));
        }
    }

    #[test]
    fn regular_tonic_source_times() {
        let src = TonicSource::regular(250.0, 0.0, 100.0);
        let times = src.spike_times_ms();
        assert_eq!(times.len(), 25);
        assert_eq!(&times[..3], &[4.0, 8.0, 12.0]);
    }

    #[test]
    fn tonic_spikes_are_recorded_and_routed() {
        let mut net = Network::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let tonic = net.add_tonic_population().unwrap();
        let motor = net
            .add_population_fixed(1, table1::motor_row(), Role::Motor)
            .unwrap();
        net.connect(
            &tonic,
            &motor,
            ConnectPattern::AllToAll,
            WeightDist::Fixed(2000.0),
            SignClass::Excitatory,
            false,
            1.0,
            &mut rng,
        )
        .unwrap();
        let res = net
            .run(
                &RunConfig {
                    duration_ms: 100.0,
                    ..Default::default()
                },
                &[(
                    tonic.population_id,
                    vec![TonicSource::regular(250.0, 0.0, 100.0)],
                )],
            )
            .unwrap();
        assert_eq!(res.spikes_of(tonic.first_neuron).len(), 25);
        let motor_spikes = res.spikes_of(motor.first_neuron);
        assert!(!motor_spikes.is_empty());
        // causality: target cannot fire before emission + delay
        assert!(motor_spikes[0] >= 4.0 + 1.0);
    }

    #[test]
    fn periodic_firing_matches_first_passage_oracle() {
        let mut params = table1::cpg_row();
        params.external_current_pa = 600.0;
        let mut net = Network::new();
        let pop = net
            .add_population_fixed(1, params, Role::Motor)
            .unwrap();
        let res = net
            .run(
                &RunConfig {
                    duration_ms: 500.0,
                    ..Default::default()
                },
                &[],
            )
            .unwrap();
        let spikes = res.spikes_of(pop.first_neuron);
        assert!(spikes.len() > 5);
        let expected_isi = params.refractory_period_ms
            + crate::lif::first_passage_time_ms(&params, 600.0).unwrap();
        for w in spikes.windows(2) {
            let isi = w[1] - w[0];
            assert!(
                (isi - expected_isi).abs() <= res.dt_ms + 1e-9,
                "isi {isi} vs oracle {expected_isi}"
            );
        }
    }

    #[test]
    fn reproducible_runs() {
        let build = || {
            let mut net = Network::new();
            let mut rng = ChaCha8Rng::seed_from_u64(42);
            let tonic = net.add_tonic_population().unwrap();
            let pop = net
                .add_population_sampled(
                    20,
                    &table1::pfn_ranges(),
                    &table1::cpg_row(),
                    Role::Pfn,
                    &mut rng,
                )
                .unwrap();
            net.connect(
                &tonic,
                &pop,
                ConnectPattern::AllToAll,
                WeightDist::Uniform(100.0, 900.0),
                SignClass::Excitatory,
                false,
                1.0,
                &mut rng,
            )
            .unwrap();
            (net, tonic)
        };
        let (n1, t1) = build();
        let (n2, t2) = build();
        let cfg = RunConfig {
            duration_ms: 300.0,
            ..Default::default()
        };
        let tonic = |h: PopulationHandle| {
            vec![(h.population_id, vec![TonicSource::regular(400.0, 0.0, 300.0)])]
        };
        let r1 = n1.run(&cfg, &tonic(t1)).unwrap();
        let r2 = n2.run(&cfg, &tonic(t2)).unwrap();
        assert_eq!(r1.spike_times_ms, r2.spike_times_ms);
        assert!(r1.total_spike_count() > 0);
    }
}
