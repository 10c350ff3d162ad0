//! Assembles the full CPG network from a declarative spec: NPG phase modules
//! (H/Q/T), pattern forming networks with their inhibiting networks, and the
//! motor pool, with fixed weights found by a deterministic calibration pass.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CpgError, Result};
use crate::lif::{NeuronParams, SignClass};
use crate::network::{
    ConnectPattern, Network, PopulationHandle, Role, RunConfig, SimulationResult, TonicSource,
    WeightDist,
};
use crate::table1;

/// Gap separating two H-spike bursts of the same phase.
pub const BURST_GAP_MS: f64 = 20.0;
/// Two phases may overlap at a hand-off for at most this long.
pub const EXCLUSIVITY_TOLERANCE_MS: f64 = 20.0;
/// Calibration accepts measured phase durations within this relative error.
pub const CALIBRATION_TOLERANCE: f64 = 0.10;

pub const PFN_SIZE_MIN: usize = 50;
pub const PFN_SIZE_MAX: usize = 5000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSpec {
    pub duration_ms: f64,
    pub pfn_size: usize,
    /// T-chain length; derived as `max(1, round(duration / 100))` if absent.
    pub t_neuron_count: Option<usize>,
}

impl PhaseSpec {
    pub fn t_count(&self) -> usize {
        self.t_neuron_count
            .unwrap_or_else(|| ((self.duration_ms / 100.0).round() as usize).max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpgSpec {
    pub phases: Vec<PhaseSpec>,
    pub motor_neuron_count: usize,
    pub tonic_frequency_default: f64,
    pub seed: u64,
}

impl CpgSpec {
    pub fn validate(&self) -> Result<()> {
        if self.phases.len() < 2 {
            return Err(CpgError::config(
                "a CPG needs at least 2 phases (cyclic transition logic)",
            ));
        }
        if self.motor_neuron_count < 1 {
            return Err(CpgError::config("motor pool must have at least 1 neuron"));
        }
        if !(self.tonic_frequency_default > 0.0) {
            return Err(CpgError::config("default tonic frequency must be positive"));
        }
        for (m, p) in self.phases.iter().enumerate() {
            if !(p.duration_ms > 0.0) {
                return Err(CpgError::config(format!("phase {m}: duration must be positive")));
            }
            if !(PFN_SIZE_MIN..=PFN_SIZE_MAX).contains(&p.pfn_size) {
                return Err(CpgError::config(format!(
                    "phase {m}: pfn_size {} outside supported range [{PFN_SIZE_MIN}, {PFN_SIZE_MAX}]",
                    p.pfn_size
                )));
            }
            if p.t_count() < 1 {
                return Err(CpgError::config(format!("phase {m}: t_neuron_count must be >= 1")));
            }
        }
        Ok(())
    }

    pub fn nominal_cycle_ms(&self) -> f64 {
        self.phases.iter().map(|p| p.duration_ms).sum()
    }
}

/// All fixed (non-learned) weights and delays. The paper constrains these
/// only behaviorally; concrete values come from calibration and are
/// serialized with the network snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedWeights {
    pub h_auto_w: f64,
    pub h_auto_delay_ms: f64,
    pub h_to_q_w: f64,
    pub q_to_h_w: f64,
    pub q_to_t_w: f64,
    pub q_to_in_w: f64,
    pub chain_w: f64,
    pub t_to_next_h_w: f64,
    pub t_to_own_h_w: f64,
    pub tonic_to_h_w: f64,
    pub tonic_to_t_w: f64,
    pub tonic_to_pfn_w: f64,
    pub tonic_to_motor_w: f64,
    pub drive_to_pfn_w: f64,
    /// Upper bound of the per-synapse random delay on driver->PFN synapses.
    pub drive_delay_spread_ms: f64,
    pub q_to_foreign_pfn_w: f64,
    pub pfn_to_in_w: f64,
    pub in_to_pfn_w: f64,
    pub in_auto_w: f64,
    /// Per phase, per chain link: transition delay carried by the synapse.
    pub chain_delays_ms: Vec<Vec<f64>>,
    /// Shortcut delay as a fraction of the link delay.
    pub shortcut_ratio: f64,
    /// Per phase, per chain link: weight of the tonic-gated shortcut synapse
    /// (0 = no shortcut). A shortcut alone is subthreshold; it only fires the
    /// link's target early when the tonic baseline depolarization is high,
    /// so higher drive frequencies engage more shortcuts and shorten the
    /// cycle.
    pub shortcut_ws: Vec<Vec<f64>>,
}

impl FixedWeights {
    pub fn baseline(spec: &CpgSpec) -> Self {
        FixedWeights {
            h_auto_w: 2200.0,
            h_auto_delay_ms: 5.0,
            h_to_q_w: 1800.0,
            q_to_h_w: -3500.0,
            q_to_t_w: -3500.0,
            q_to_in_w: -5000.0,
            chain_w: 1100.0,
            t_to_next_h_w: 2800.0,
            t_to_own_h_w: -9000.0,
            tonic_to_h_w: 700.0,
            tonic_to_t_w: 95.0,
            tonic_to_pfn_w: 10.0,
            tonic_to_motor_w: 135.0,
            drive_to_pfn_w: 550.0,
            drive_delay_spread_ms: 70.0,
            q_to_foreign_pfn_w: -1500.0,
            pfn_to_in_w: 8000.0,
            in_to_pfn_w: -6000.0,
            in_auto_w: 2600.0,
            chain_delays_ms: spec
                .phases
                .iter()
                .map(|p| {
                    let k = p.t_count();
                    let link = (p.duration_ms / k as f64 - 25.0).max(table1::DEFAULT_DT_MS);
                    vec![link; k]
                })
                .collect(),
            shortcut_ratio: 0.45,
            shortcut_ws: spec
                .phases
                .iter()
                .map(|p| {
                    let k = p.t_count();
                    // Staggered gate levels so the engaged-shortcut count
                    // rises monotonically with drive frequency. The final
                    // link's target receives no tonic and gets no shortcut.
                    let levels = [274.0, 188.0, 150.0];
                    (0..k)
                        .map(|j| if j + 1 < k { levels[j % levels.len()] } else { 0.0 })
                        .collect()
                })
                .collect(),
        }
    }
}

/// Handles into the underlying network for one phase module.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhaseHandles {
    pub h: PopulationHandle,
    pub q: PopulationHandle,
    pub t_chain: PopulationHandle,
    pub pfn: PopulationHandle,
    pub inhibiting: PopulationHandle,
}

#[derive(Debug, Clone)]
pub struct CpgNetwork {
    pub spec: CpgSpec,
    pub network: Network,
    pub phases: Vec<PhaseHandles>,
    pub motor: PopulationHandle,
    pub tonic: PopulationHandle,
    /// Indices of the PFN->motor synapses, the only plastic ones.
    pub plastic_synapses: Vec<usize>,
    /// Per phase, per PFN neuron: outgoing sign toward the motor pool.
    pub pfn_inhibitory: Vec<Vec<bool>>,
    pub weights: FixedWeights,
}

impl CpgNetwork {
    pub fn nominal_cycle_ms(&self) -> f64 {
        self.spec.nominal_cycle_ms()
    }

    /// Cycle-relative intervals in which a motor neuron can be trained to
    /// fire. A motor spike needs PFN deliveries shortly before it; deliveries
    /// are confined per phase to `[SLOT_LO, duration - SLOT_HI_MARGIN]` after
    /// the phase onset (earlier slots are below the PFN response latency), so
    /// short margins around every phase transition carry no presynaptic
    /// support and no weight assignment can place a spike there.
    pub fn supported_teacher_windows(&self) -> Vec<(f64, f64)> {
        let cycle = self.nominal_cycle_ms();
        let mut start = 0.0;
        let mut out = Vec::with_capacity(self.spec.phases.len());
        for p in &self.spec.phases {
            let lo = (start + SLOT_LO + 5.0).min(cycle);
            let hi = (start + p.duration_ms).min(cycle);
            if hi > lo {
                out.push((lo, hi));
            }
            start += p.duration_ms;
        }
        out
    }

    pub fn run_driven(&self, tonic_f: f64, duration_ms: f64, dt_ms: f64) -> Result<SimulationResult> {
        self.run_schedule(&[TonicSource::regular(tonic_f, 0.0, duration_ms)], duration_ms, dt_ms)
    }

    pub fn run_schedule(
        &self,
        sources: &[TonicSource],
        duration_ms: f64,
        dt_ms: f64,
    ) -> Result<SimulationResult> {
        self.network.run(
            &RunConfig {
                duration_ms,
                dt_ms,
                seed: self.spec.seed,
            },
            &[(self.tonic.population_id, sources.to_vec())],
        )
    }

    /// Burst onset times of each phase's H neuron.
    pub fn phase_onsets(&self, result: &SimulationResult) -> Vec<Vec<f64>> {
        self.phases
            .iter()
            .map(|ph| burst_onsets(result.spikes_of(ph.h.first_neuron), BURST_GAP_MS))
            .collect()
    }

    /// Cycle boundaries: burst onsets of phase 1's H neuron.
    pub fn phase1_onsets(&self, result: &SimulationResult) -> Vec<f64> {
        burst_onsets(result.spikes_of(self.phases[0].h.first_neuron), BURST_GAP_MS)
    }

    pub fn pfn_neuron_ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.phases.iter().flat_map(|p| p.pfn.neuron_ids())
    }
}

pub fn burst_onsets(spikes: &[f64], gap_ms: f64) -> Vec<f64> {
    let mut onsets = Vec::new();
    let mut last: Option<f64> = None;
    for &t in spikes {
        if last.map(|l| t - l > gap_ms).unwrap_or(true) {
            onsets.push(t);
        }
        last = Some(t);
    }
    onsets
}

/// Builds and calibrates. Calibration runs on a stripped NPG-only network
/// (PFN/IN/motor layers do not feed back into the NPG), then the full
/// network is assembled once with the accepted weights.
pub fn build(spec: &CpgSpec) -> Result<CpgNetwork> {
    spec.validate()?;
    let weights = calibrate(spec)?;
    build_with_weights(spec, &weights)
}

pub fn build_with_weights(spec: &CpgSpec, weights: &FixedWeights) -> Result<CpgNetwork> {
    spec.validate()?;
    let mut net = build_inner(spec, weights, true)?;
    scatter_calibrate(&mut net)?;
    Ok(net)
}

/// Spreads PFN spikes evenly over each phase by retiming the driver->PFN
/// synapse delays. Firing neurons are measured over a settled cycle, ranked
/// by spike time, and nudged toward evenly spaced slots across the phase;
/// a few fixed-point rounds leave the population maximally scattered, so
/// every instant of the cycle has presynaptic support for learning.
/// Earliest PFN delivery slot after a phase onset (ms); below this the PFN
/// drive chain cannot respond yet.
const SLOT_LO: f64 = 18.0;
/// Distance of the last PFN delivery slot from the phase end (ms).
const SLOT_HI_MARGIN: f64 = 8.0;

fn scatter_calibrate(net: &mut CpgNetwork) -> Result<()> {
    let dt = table1::DEFAULT_DT_MS;
    let f = net.spec.tonic_frequency_default;
    let phases = net.phases.clone();
    let class_of: std::collections::HashMap<usize, SignClass> = net
        .plastic_synapses
        .iter()
        .map(|&idx| {
            let s = net.network.synapse(idx);
            (s.pre_id, s.sign_class)
        })
        .collect();
    for round in 0..24 {
        let mut worst = 0.0f64;
        let r = net.run_driven(f, 2.6 * net.nominal_cycle_ms(), dt)?;
        let onsets = net.phase_onsets(&r);
        // Per PFN neuron, the index of its single driver synapse.
        let mut drive_of: std::collections::HashMap<usize, usize> = std::collections::HashMap::new();
        for (m, ph) in phases.iter().enumerate() {
            let _ = m;
            let pfn_lo = ph.pfn.first_neuron;
            let pfn_hi = pfn_lo + ph.pfn.count;
            let t_lo = ph.t_chain.first_neuron;
            let t_hi = t_lo + ph.t_chain.count;
            for (idx, s) in net.network.synapses().iter().enumerate() {
                if s.post_id >= pfn_lo
                    && s.post_id < pfn_hi
                    && (s.pre_id == ph.h.first_neuron || (s.pre_id >= t_lo && s.pre_id < t_hi))
                {
                    drive_of.insert(s.post_id, idx);
                }
            }
        }
        for (m, ph) in phases.iter().enumerate() {
            let ons = &onsets[m];
            if ons.len() < 2 {
                continue;
            }
            let t0 = ons[ons.len() - 2];
            let dur = net.spec.phases[m].duration_ms;
            let mut firing: Vec<(usize, f64)> = ph
                .pfn
                .neuron_ids()
                .filter_map(|id| {
                    r.spikes_in_window(id, t0, t0 + dur)
                        .first()
                        .map(|&t| (id, t - t0))
                })
                .collect();
            firing.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
            if firing.is_empty() {
                continue;
            }
            // Each PFN carries one sign class toward every motor neuron, so a
            // motor's excitatory drive grid is the class-restricted subset of
            // the PFN grid. Stratify the two classes on independent uniform
            // grids; otherwise random runs of one class leave gaps in the
            // other's grid, and those gaps shape shared ripples in every
            // motor's membrane landscape.
            let (lo, hi) = (SLOT_LO, dur - SLOT_HI_MARGIN);
            for class in [SignClass::Excitatory, SignClass::Inhibitory] {
                let group: Vec<(usize, f64)> = firing
                    .iter()
                    .copied()
                    .filter(|&(id, _)| class_of.get(&id) == Some(&class))
                    .collect();
                let n = group.len();
                for (j, &(id, t)) in group.iter().enumerate() {
                    let slot = lo + (j as f64 + 0.5) * (hi - lo) / n as f64;
                    if let Some(&sidx) = drive_of.get(&id) {
                        let old = net.network.synapse(sidx).delay_ms;
                        let corrected = (old - (t - slot)).max(dt);
                        // Residual the neuron could not absorb (delay floor)
                        // plus whatever this round still needs to move.
                        worst = worst
                            .max((t - slot).abs() - (corrected - (old - (t - slot))).abs());
                        net.network.set_delay(sidx, corrected);
                    }
                }
            }
        }
        if std::env::var("CPG_CAL_DEBUG").is_ok() {
            eprintln!("calibration round {round}: worst residual {worst:.3} ms");
        }
        if round > 0 && worst < 0.05 {
            break;
        }
    }
    Ok(())
}

/// The NPG skeleton alone (placeholder PFN/IN/motor populations); timing
/// dynamics are identical to the full network since the output layers do
/// not feed back.
pub fn build_npg_only(spec: &CpgSpec, weights: &FixedWeights) -> Result<CpgNetwork> {
    spec.validate()?;
    build_inner(spec, weights, false)
}

fn build_inner(spec: &CpgSpec, w: &FixedWeights, full: bool) -> Result<CpgNetwork> {
    let n_phases = spec.phases.len();
    for table in [&w.chain_delays_ms, &w.shortcut_ws] {
        if table.len() != n_phases
            || table
                .iter()
                .zip(&spec.phases)
                .any(|(d, p)| d.len() != p.t_count())
        {
            return Err(CpgError::config("chain weight tables do not match the spec"));
        }
    }
    if !(0.0..1.0).contains(&w.shortcut_ratio) {
        return Err(CpgError::config("shortcut_ratio must lie in [0, 1)"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut net = Network::new();
    let d = table1::DEFAULT_DELAY_MS;
    let cpg = table1::cpg_row();

    let tonic = net.add_tonic_population()?;

    // Populations first, in a fixed order, so neuron ids are stable.
    let mut handles: Vec<PhaseHandles> = Vec::with_capacity(n_phases);
    let mut pfn_inhibitory: Vec<Vec<bool>> = Vec::with_capacity(n_phases);
    for phase in &spec.phases {
        let h = net.add_population_fixed(1, cpg, Role::NpgH)?;
        let q = net.add_population_fixed(1, cpg, Role::NpgQ)?;
        let t_chain = net.add_population_fixed(phase.t_count(), cpg, Role::NpgT)?;
        let (pfn, inhibiting, inh_flags) = if full {
            let params = sample_pfn_params(phase.pfn_size, &mut rng);
            let pfn = net.add_population_from(params, Role::Pfn)?;
            let inhibiting = net.add_population_fixed(phase.pfn_size, cpg, Role::In)?;
            let inh_flags = designate_inhibitory(phase.pfn_size, &mut rng);
            (pfn, inhibiting, inh_flags)
        } else {
            // NPG-only build used by calibration: single placeholder neurons
            // keep the handle structure without the cost.
            let pfn = net.add_population_fixed(1, cpg, Role::Pfn)?;
            let inhibiting = net.add_population_fixed(1, cpg, Role::In)?;
            (pfn, inhibiting, vec![false])
        };
        handles.push(PhaseHandles {
            h,
            q,
            t_chain,
            pfn,
            inhibiting,
        });
        pfn_inhibitory.push(inh_flags);
    }
    let motor = net.add_population_fixed(
        if full { spec.motor_neuron_count } else { 1 },
        table1::motor_row(),
        Role::Motor,
    )?;

    // NPG wiring.
    for m in 0..n_phases {
        let next = (m + 1) % n_phases;
        let h_m = handles[m].h.first_neuron;
        let q_m = handles[m].q.first_neuron;
        let t_first = handles[m].t_chain.first_neuron;
        let k = handles[m].t_chain.count;

        net.add_synapse(h_m, h_m, w.h_auto_w, SignClass::Excitatory, false, w.h_auto_delay_ms)?;
        net.add_synapse(h_m, q_m, w.h_to_q_w, SignClass::Excitatory, false, d)?;
        for j in 0..n_phases {
            if j != m {
                net.add_synapse(
                    q_m,
                    handles[j].h.first_neuron,
                    w.q_to_h_w,
                    SignClass::Inhibitory,
                    false,
                    d,
                )?;
                // Silences the other phase's chain so transition activity
                // cannot linger into the next phase.
                for t in handles[j].t_chain.neuron_ids() {
                    net.add_synapse(q_m, t, w.q_to_t_w, SignClass::Inhibitory, false, d)?;
                }
            }
        }
        // Successor Q resets this phase's inhibiting network.
        net.add_synapse(
            handles[next].q.first_neuron,
            handles[m].inhibiting.first_neuron,
            w.q_to_in_w,
            SignClass::Inhibitory,
            false,
            d,
        )?;
        if full {
            for target in handles[m].inhibiting.neuron_ids() {
                if target != handles[m].inhibiting.first_neuron {
                    net.add_synapse(
                        handles[next].q.first_neuron,
                        target,
                        w.q_to_in_w,
                        SignClass::Inhibitory,
                        false,
                        d,
                    )?;
                }
            }
        }

        // T-chain: H excites the first T, each T the next; the link delay
        // carries the bulk of the phase timing.
        for j in 0..k {
            let pre = if j == 0 { h_m } else { t_first + j - 1 };
            let delay = w.chain_delays_ms[m][j];
            net.add_synapse(pre, t_first + j, w.chain_w, SignClass::Excitatory, false, delay)?;
            let ws = w.shortcut_ws[m][j];
            if ws > 0.0 {
                let short_delay = (w.shortcut_ratio * delay).max(table1::DEFAULT_DT_MS);
                net.add_synapse(pre, t_first + j, ws, SignClass::Excitatory, false, short_delay)?;
            }
        }
        let t_last = t_first + k - 1;
        net.add_synapse(t_last, handles[next].h.first_neuron, w.t_to_next_h_w, SignClass::Excitatory, false, d)?;
        net.add_synapse(t_last, h_m, w.t_to_own_h_w, SignClass::Inhibitory, false, d)?;

        // Intermediate T neurons (all but the last) receive the tonic input.
        for j in 0..k.saturating_sub(1) {
            net.add_synapse(tonic.first_neuron, t_first + j, w.tonic_to_t_w, SignClass::Excitatory, false, d)?;
        }
    }
    // Tonic starts the oscillation through phase 1's H neuron only; driving
    // every H at once would excite all phases symmetrically.
    net.add_synapse(tonic.first_neuron, handles[0].h.first_neuron, w.tonic_to_h_w, SignClass::Excitatory, false, d)?;

    let mut plastic = Vec::new();
    if full {
        for (m, phase) in spec.phases.iter().enumerate() {
            let ph = handles[m].clone();
            let k = ph.t_chain.count;

            // Drivers (H plus intermediate Ts) each excite one block of the PFN.
            let mut drivers = vec![ph.h.first_neuron];
            for j in 0..k.saturating_sub(1) {
                drivers.push(ph.t_chain.first_neuron + j);
            }
            // Per-synapse weights drawn from a wide band (strong draws fire
            // early in the block's window, weak draws late or not at all) and
            // per-synapse delays drawn uniformly, which together scatter PFN
            // spikes over the phase instead of clumping them at block onsets.
            let blocks = split_blocks(phase.pfn_size, drivers.len());
            for (driver, block) in drivers.iter().zip(&blocks) {
                for offset in block.clone() {
                    let dw = rng.gen_range(0.7 * w.drive_to_pfn_w..1.3 * w.drive_to_pfn_w);
                    let dd = rng.gen_range(d..w.drive_delay_spread_ms);
                    net.add_synapse(
                        *driver,
                        ph.pfn.first_neuron + offset,
                        dw,
                        SignClass::Excitatory,
                        false,
                        dd,
                    )?;
                }
            }

            // The other phases' Q neurons suppress this PFN so that drive
            // spikes still in flight on long-delay synapses cannot re-fire
            // PFN neurons outside their own phase.
            for (j, other) in handles.iter().enumerate() {
                if j == m {
                    continue;
                }
                for target in ph.pfn.neuron_ids() {
                    net.add_synapse(
                        other.q.first_neuron,
                        target,
                        w.q_to_foreign_pfn_w,
                        SignClass::Inhibitory,
                        false,
                        d,
                    )?;
                }
            }

            // Random mutual inhibition within the PFN at 10% connectivity.
            net.connect(
                &ph.pfn,
                &ph.pfn,
                ConnectPattern::RandomPairwise(0.10),
                WeightDist::Uniform(-3.0, -1.0),
                SignClass::Inhibitory,
                false,
                d,
                &mut rng,
            )?;

            // PFN <-> IN pairing and IN auto-synapses.
            net.connect(&ph.pfn, &ph.inhibiting, ConnectPattern::OneToOne, WeightDist::Fixed(w.pfn_to_in_w), SignClass::Excitatory, false, d, &mut rng)?;
            net.connect(&ph.inhibiting, &ph.pfn, ConnectPattern::OneToOne, WeightDist::Fixed(w.in_to_pfn_w), SignClass::Inhibitory, false, d, &mut rng)?;
            for neuron in ph.inhibiting.neuron_ids() {
                net.add_synapse(neuron, neuron, w.in_auto_w, SignClass::Excitatory, false, d)?;
            }

            // Control input propagated to this layer.
            for neuron in ph.pfn.neuron_ids() {
                net.add_synapse(tonic.first_neuron, neuron, w.tonic_to_pfn_w, SignClass::Excitatory, false, d)?;
            }

            // Plastic all-to-all PFN -> motor projection; each PFN neuron's
            // outgoing sign is fixed by its inhibitory designation.
            for (i, &inhibitory) in pfn_inhibitory[m].iter().enumerate() {
                let pre = ph.pfn.first_neuron + i;
                for post in motor.neuron_ids() {
                    let (weight, sign) = if inhibitory {
                        (rng.gen_range(-25.0..-1.0), SignClass::Inhibitory)
                    } else {
                        (rng.gen_range(1.0..5.0), SignClass::Excitatory)
                    };
                    plastic.push(net.add_synapse(pre, post, weight, sign, true, d)?);
                }
            }
        }
        for neuron in motor.neuron_ids() {
            net.add_synapse(tonic.first_neuron, neuron, w.tonic_to_motor_w, SignClass::Excitatory, false, d)?;
        }
    }

    Ok(CpgNetwork {
        spec: spec.clone(),
        network: net,
        phases: handles,
        motor,
        tonic,
        plastic_synapses: plastic,
        pfn_inhibitory,
        weights: w.clone(),
    })
}

/// PFN parameters drawn uniformly from the Table-1 PFN row, with the external
/// current re-drawn below the neuron's rheobase so no PFN neuron fires
/// without synaptic input (a spontaneously firing neuron would break the
/// single-spike property while its inhibiting network is held in reset).
fn sample_pfn_params(n: usize, rng: &mut ChaCha8Rng) -> Vec<NeuronParams> {
    let ranges = table1::pfn_ranges();
    let defaults = table1::cpg_row();
    (0..n)
        .map(|_| {
            let mut p = ranges.sample(rng, &defaults);
            let ceiling = (0.85 * p.rheobase_pa() - 40.0).clamp(0.0, 150.0);
            if p.external_current_pa > ceiling {
                p.external_current_pa = if ceiling > 0.0 {
                    rng.gen_range(0.0..ceiling)
                } else {
                    0.0
                };
            }
            p
        })
        .collect()
}

fn designate_inhibitory(n: usize, rng: &mut ChaCha8Rng) -> Vec<bool> {
    let count = (0.20 * n as f64).round() as usize;
    let mut flags = vec![false; n];
    let mut indices: Vec<usize> = (0..n).collect();
    for i in 0..count {
        let j = rng.gen_range(i..n);
        indices.swap(i, j);
        flags[indices[i]] = true;
    }
    flags
}

fn split_blocks(total: usize, parts: usize) -> Vec<std::ops::Range<usize>> {
    let base = total / parts;
    let extra = total % parts;
    let mut out = Vec::with_capacity(parts);
    let mut start = 0;
    for i in 0..parts {
        let len = base + usize::from(i < extra);
        out.push(start..start + len);
        start += len;
    }
    out
}

/// Oscillation validation report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhaseReport {
    pub pass: bool,
    pub driven_phase_durations_ms: Vec<f64>,
    pub free_phase_durations_ms: Vec<f64>,
    pub cycles_completed_after_removal: usize,
    pub exclusive_activity: bool,
    pub tonic_stop_ms: f64,
    pub phase_onsets_ms: Vec<Vec<f64>>,
    pub total_h_spikes: usize,
}

/// Runs the network with the tonic input active for one cycle, then removed,
/// and checks that the NPG keeps cycling on its own.
pub fn validate_oscillation(net: &CpgNetwork, tonic_f: f64, cycles: usize) -> Result<PhaseReport> {
    let cycle = net.nominal_cycle_ms();
    let stop = 1.35 * cycle;
    let duration = stop + (cycles as f64 + 1.6) * cycle;
    let result = net.run_schedule(
        &[TonicSource::regular(tonic_f, 0.0, stop)],
        duration,
        table1::DEFAULT_DT_MS,
    )?;
    Ok(analyze_oscillation(net, &result, stop, cycles))
}

pub fn analyze_oscillation(
    net: &CpgNetwork,
    result: &SimulationResult,
    tonic_stop_ms: f64,
    required_cycles: usize,
) -> PhaseReport {
    let onsets = net.phase_onsets(result);
    let n_phases = onsets.len();
    let total_h_spikes: usize = net
        .phases
        .iter()
        .map(|p| result.spikes_of(p.h.first_neuron).len())
        .sum();

    // Phase durations: own onset to next phase's onset, split into the
    // driven window and the free-running window.
    let mut driven = vec![Vec::new(); n_phases];
    let mut free = vec![Vec::new(); n_phases];
    for m in 0..n_phases {
        let next = (m + 1) % n_phases;
        for &t0 in &onsets[m] {
            let t1 = onsets[next].iter().copied().find(|&t| t > t0);
            if let Some(t1) = t1 {
                let dur = t1 - t0;
                if dur < 3.0 * net.spec.phases[m].duration_ms {
                    if t1 <= tonic_stop_ms {
                        driven[m].push(dur);
                    } else if t0 >= tonic_stop_ms {
                        free[m].push(dur);
                    }
                }
            }
        }
    }
    let mean = |v: &Vec<f64>| {
        if v.is_empty() {
            f64::NAN
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    };

    let after: Vec<f64> = onsets[0]
        .iter()
        .copied()
        .filter(|&t| t >= tonic_stop_ms)
        .collect();
    let cycles_after = after.len().saturating_sub(1);

    let exclusive = exclusive_activity(net, result);
    let all_phases_active = onsets.iter().all(|o| !o.is_empty());
    let pass = exclusive && all_phases_active && cycles_after >= required_cycles;

    PhaseReport {
        pass,
        driven_phase_durations_ms: driven.iter().map(&mean).collect(),
        free_phase_durations_ms: free.iter().map(&mean).collect(),
        cycles_completed_after_removal: cycles_after,
        exclusive_activity: exclusive,
        tonic_stop_ms,
        phase_onsets_ms: onsets,
        total_h_spikes,
    }
}

/// H-activity intervals of different phases may overlap only briefly at
/// hand-offs.
fn exclusive_activity(net: &CpgNetwork, result: &SimulationResult) -> bool {
    let bursts: Vec<Vec<(f64, f64)>> = net
        .phases
        .iter()
        .map(|p| burst_intervals(result.spikes_of(p.h.first_neuron), BURST_GAP_MS))
        .collect();
    for (i, a) in bursts.iter().enumerate() {
        for b in bursts.iter().skip(i + 1) {
            for &(s1, e1) in a {
                for &(s2, e2) in b {
                    let overlap = e1.min(e2) - s1.max(s2);
                    if overlap > EXCLUSIVITY_TOLERANCE_MS {
                        return false;
                    }
                }
            }
        }
    }
    true
}

fn burst_intervals(spikes: &[f64], gap_ms: f64) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = Vec::new();
    for &t in spikes {
        match out.last_mut() {
            Some((_, end)) if t - *end <= gap_ms => *end = t,
            _ => out.push((t, t)),
        }
    }
    out
}

/// PFN neurons are required to spike at most once per CPG cycle. Returns
/// every (pfn_neuron_id, cycle_index) violating that over the run.
pub fn single_spike_check(net: &CpgNetwork, duration_ms: f64) -> Result<Vec<(usize, usize)>> {
    let result = net.run_driven(
        net.spec.tonic_frequency_default,
        duration_ms,
        table1::DEFAULT_DT_MS,
    )?;
    let onsets = net.phase1_onsets(&result);
    let mut violations = Vec::new();
    for (c, w) in onsets.windows(2).enumerate() {
        for id in net.pfn_neuron_ids() {
            if result.spikes_in_window(id, w[0], w[1]).len() > 1 {
                violations.push((id, c));
            }
        }
    }
    Ok(violations)
}

/// Fault injections for exercising the single-spike mechanism.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Zero every IN→PFN inhibitory weight.
    ZeroInToPfnInhibition,
    /// Remove (zero) every IN auto-synapse.
    RemoveInAutoSynapses,
}

impl CpgNetwork {
    /// Returns a copy of the network with the fault applied.
    pub fn with_fault(&self, fault: Fault) -> CpgNetwork {
        let mut net = self.clone();
        let targets: Vec<usize> = net
            .network
            .synapses()
            .iter()
            .enumerate()
            .filter(|(_, s)| {
                let pre_in = net
                    .phases
                    .iter()
                    .any(|p| p.inhibiting.neuron_ids().contains(&s.pre_id));
                match fault {
                    Fault::ZeroInToPfnInhibition => {
                        pre_in
                            && net
                                .phases
                                .iter()
                                .any(|p| p.pfn.neuron_ids().contains(&s.post_id))
                    }
                    Fault::RemoveInAutoSynapses => pre_in && s.pre_id == s.post_id,
                }
            })
            .map(|(i, _)| i)
            .collect();
        for idx in targets {
            net.network.set_weight(idx, 0.0);
        }
        net
    }
}

/// Deterministic calibration: a coarse search over the free NPG weights plus
/// an iterative adjustment of the chain link delays until every phase's
/// measured duration lands within tolerance at the default tonic frequency.
pub fn calibrate(spec: &CpgSpec) -> Result<FixedWeights> {
    let mut candidates = Vec::new();
    let base = FixedWeights::baseline(spec);
    for (h_auto, chain, tonic_h) in [
        (base.h_auto_w, base.chain_w, base.tonic_to_h_w),
        (base.h_auto_w, base.chain_w * 1.4, base.tonic_to_h_w),
        (base.h_auto_w * 1.3, base.chain_w, base.tonic_to_h_w),
        (base.h_auto_w, base.chain_w * 0.8, base.tonic_to_h_w * 1.4),
        (base.h_auto_w * 1.3, base.chain_w * 1.4, base.tonic_to_h_w * 1.4),
    ] {
        let mut w = base.clone();
        w.h_auto_w = h_auto;
        w.chain_w = chain;
        w.tonic_to_h_w = tonic_h;
        candidates.push(w);
    }

    let mut last_failure = String::from("no candidate evaluated");
    for mut w in candidates {
        match calibrate_delays(spec, &mut w) {
            Ok(()) => return Ok(w),
            Err(e) => last_failure = e.to_string(),
        }
    }
    Err(CpgError::Calibration {
        phase: 0,
        reason: last_failure,
    })
}

fn calibrate_delays(spec: &CpgSpec, w: &mut FixedWeights) -> Result<()> {
    const ROUNDS: usize = 10;
    let f = spec.tonic_frequency_default;
    for _ in 0..ROUNDS {
        let net = build_inner(spec, w, false)?;
        let report = validate_oscillation(&net, f, 2)?;
        if !report.exclusive_activity {
            return Err(CpgError::Calibration {
                phase: 0,
                reason: "overlapping phase activity".into(),
            });
        }
        if report.cycles_completed_after_removal < 2 {
            return Err(CpgError::Calibration {
                phase: 0,
                reason: format!(
                    "oscillation does not persist after tonic removal ({} H spikes seen)",
                    report.total_h_spikes
                ),
            });
        }
        let mut all_ok = true;
        for (m, phase) in spec.phases.iter().enumerate() {
            let measured = report.driven_phase_durations_ms[m];
            if !measured.is_finite() {
                return Err(CpgError::Calibration {
                    phase: m,
                    reason: "phase never completed while driven".into(),
                });
            }
            let target = phase.duration_ms;
            let err = measured - target;
            if err.abs() > CALIBRATION_TOLERANCE * target {
                all_ok = false;
            }
            let k = w.chain_delays_ms[m].len() as f64;
            for link in w.chain_delays_ms[m].iter_mut() {
                *link = (*link - err / k).max(table1::DEFAULT_DT_MS);
            }
        }
        if all_ok {
            return Ok(());
        }
    }
    Err(CpgError::Calibration {
        phase: 0,
        reason: "phase durations did not converge within tolerance".into(),
    })
}
