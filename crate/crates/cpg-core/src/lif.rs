//! Leaky integrate-and-fire neurons with alpha-function synaptic currents.
//!
//! The membrane and both synaptic channels form a linear ODE system, so each
//! fixed timestep is advanced with the exact exponential propagator; only
//! threshold crossing is localized to step boundaries.

use serde::{Deserialize, Serialize};

use crate::error::{CpgError, Result};

/// Membrane and synapse constants of one LIF neuron.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeuronParams {
    pub resting_potential_mv: f64,
    pub membrane_capacity_pf: f64,
    pub membrane_time_constant_ms: f64,
    pub spike_threshold_mv: f64,
    pub reset_potential_mv: f64,
    pub external_current_pa: f64,
    pub refractory_period_ms: f64,
    pub syn_time_constant_excitatory_ms: f64,
    pub syn_time_constant_inhibitory_ms: f64,
}

impl NeuronParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            self.resting_potential_mv,
            self.membrane_capacity_pf,
            self.membrane_time_constant_ms,
            self.spike_threshold_mv,
            self.reset_potential_mv,
            self.external_current_pa,
            self.refractory_period_ms,
            self.syn_time_constant_excitatory_ms,
            self.syn_time_constant_inhibitory_ms,
        ];
        if fields.iter().any(|v| !v.is_finite()) {
            return Err(CpgError::numeric("non-finite neuron parameter"));
        }
        if self.spike_threshold_mv <= self.reset_potential_mv {
            return Err(CpgError::config(
                "spike threshold must exceed reset potential",
            ));
        }
        if self.membrane_capacity_pf <= 0.0 || self.membrane_time_constant_ms <= 0.0 {
            return Err(CpgError::config(
                "membrane capacity and time constant must be positive",
            ));
        }
        if self.refractory_period_ms < 0.0 {
            return Err(CpgError::config("refractory period must be non-negative"));
        }
        if self.syn_time_constant_excitatory_ms <= 0.0 || self.syn_time_constant_inhibitory_ms <= 0.0
        {
            return Err(CpgError::config("synaptic time constants must be positive"));
        }
        Ok(())
    }

    /// Smallest constant current that eventually drives the neuron to threshold.
    pub fn rheobase_pa(&self) -> f64 {
        (self.spike_threshold_mv - self.resting_potential_mv) * self.membrane_capacity_pf
            / self.membrane_time_constant_ms
    }
}

/// One alpha-current channel: `y2` is the current (pA), `y1` its auxiliary
/// state. A spike of peak amplitude `w` enters as `y1 += w*e/tau`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SynChannelState {
    pub y1: f64,
    pub y2: f64,
}

impl SynChannelState {
    pub fn current_pa(&self) -> f64 {
        self.y2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeuronState {
    pub membrane_potential_mv: f64,
    pub excitatory_syn_state: SynChannelState,
    pub inhibitory_syn_state: SynChannelState,
    pub refractory_remaining_ms: f64,
}

impl NeuronState {
    pub fn resting(params: &NeuronParams) -> Self {
        NeuronState {
            membrane_potential_mv: params.resting_potential_mv,
            excitatory_syn_state: SynChannelState::default(),
            inhibitory_syn_state: SynChannelState::default(),
            refractory_remaining_ms: 0.0,
        }
    }

    fn is_finite(&self) -> bool {
        self.membrane_potential_mv.is_finite()
            && self.excitatory_syn_state.y1.is_finite()
            && self.excitatory_syn_state.y2.is_finite()
            && self.inhibitory_syn_state.y1.is_finite()
            && self.inhibitory_syn_state.y2.is_finite()
            && self.refractory_remaining_ms.is_finite()
            && self.refractory_remaining_ms >= 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SignClass {
    Excitatory,
    Inhibitory,
}

/// Exact one-channel propagator entries over a step of length `h`:
/// `p11 = p22` decays the channel, `p21` couples y1 into y2, and `p31/p32`
/// are the membrane responses to y1/y2 (already divided by C).
#[derive(Debug, Clone, Copy)]
struct ChannelPropagator {
    decay: f64,
    p21: f64,
    p31_over_c: f64,
    p32_over_c: f64,
}

impl ChannelPropagator {
    fn new(tau_syn: f64, tau_m: f64, capacity: f64, h: f64) -> Self {
        let es = (-h / tau_syn).exp();
        let em = (-h / tau_m).exp();
        let gamma = 1.0 / tau_m - 1.0 / tau_syn;
        let (p32, p31) = if gamma.abs() < 1e-9 {
            (h * es, 0.5 * h * h * es)
        } else {
            let p32 = (es - em) / gamma;
            (p32, h * es / gamma - p32 / gamma)
        };
        ChannelPropagator {
            decay: es,
            p21: h * es,
            p31_over_c: p31 / capacity,
            p32_over_c: p32 / capacity,
        }
    }

    fn advance(&self, s: SynChannelState) -> (SynChannelState, f64) {
        let dv = s.y1 * self.p31_over_c + s.y2 * self.p32_over_c;
        (
            SynChannelState {
                y1: self.decay * s.y1,
                y2: self.decay * s.y2 + self.p21 * s.y1,
            },
            dv,
        )
    }
}

/// Precomputed propagator for one (params, dt) pair. Reused across steps by
/// the network loop; building one per call is fine for single-neuron use.
#[derive(Debug, Clone, Copy)]
pub struct Propagator {
    exp_m: f64,
    drive_mv: f64,
    exc: ChannelPropagator,
    inh: ChannelPropagator,
    pump_exc: f64,
    pump_inh: f64,
    resting_mv: f64,
    threshold_mv: f64,
    reset_mv: f64,
    refractory_ms: f64,
    dt_ms: f64,
}

impl Propagator {
    pub fn new(params: &NeuronParams, dt_ms: f64) -> Result<Self> {
        params.validate()?;
        if !(dt_ms > 0.0) || !dt_ms.is_finite() {
            return Err(CpgError::numeric("dt must be positive and finite"));
        }
        let tau_m = params.membrane_time_constant_ms;
        let exp_m = (-dt_ms / tau_m).exp();
        let drive_mv = params.external_current_pa * tau_m / params.membrane_capacity_pf
            * (1.0 - exp_m);
        Ok(Propagator {
            exp_m,
            drive_mv,
            exc: ChannelPropagator::new(
                params.syn_time_constant_excitatory_ms,
                tau_m,
                params.membrane_capacity_pf,
                dt_ms,
            ),
            inh: ChannelPropagator::new(
                params.syn_time_constant_inhibitory_ms,
                tau_m,
                params.membrane_capacity_pf,
                dt_ms,
            ),
            pump_exc: std::f64::consts::E / params.syn_time_constant_excitatory_ms,
            pump_inh: std::f64::consts::E / params.syn_time_constant_inhibitory_ms,
            resting_mv: params.resting_potential_mv,
            threshold_mv: params.spike_threshold_mv,
            reset_mv: params.reset_potential_mv,
            refractory_ms: params.refractory_period_ms,
            dt_ms,
        })
    }

    /// Injects a spike arriving at the start of the upcoming step. The weight
    /// is the alpha-kernel peak amplitude in pA (negative for inhibition).
    pub fn inject(&self, state: &mut NeuronState, weight_pa: f64, sign: SignClass) {
        match sign {
            SignClass::Excitatory => state.excitatory_syn_state.y1 += weight_pa * self.pump_exc,
            SignClass::Inhibitory => state.inhibitory_syn_state.y1 += weight_pa * self.pump_inh,
        }
    }

    /// Advances one step; returns whether the neuron fired at the step's end.
    pub fn advance(&self, state: &mut NeuronState) -> bool {
        let (exc, dv_exc) = self.exc.advance(state.excitatory_syn_state);
        let (inh, dv_inh) = self.inh.advance(state.inhibitory_syn_state);
        state.excitatory_syn_state = exc;
        state.inhibitory_syn_state = inh;

        if state.refractory_remaining_ms > 0.0 {
            state.refractory_remaining_ms = (state.refractory_remaining_ms - self.dt_ms).max(0.0);
            state.membrane_potential_mv = self.reset_mv;
            return false;
        }

        let v = self.resting_mv
            + (state.membrane_potential_mv - self.resting_mv) * self.exp_m
            + self.drive_mv
            + dv_exc
            + dv_inh;
        if v >= self.threshold_mv {
            state.membrane_potential_mv = self.reset_mv;
            state.refractory_remaining_ms = self.refractory_ms;
            true
        } else {
            state.membrane_potential_mv = v;
            false
        }
    }
}

/// Single-step state transition: delivers `incoming_weighted_spikes` at the
/// step start, then advances the closed-form propagator by `dt_ms`.
pub fn step(
    state: &NeuronState,
    params: &NeuronParams,
    incoming_weighted_spikes: &[(f64, SignClass)],
    dt_ms: f64,
) -> Result<(NeuronState, bool)> {
    if !state.is_finite() {
        return Err(CpgError::numeric("non-finite neuron state"));
    }
    if incoming_weighted_spikes.iter().any(|(w, _)| !w.is_finite()) {
        return Err(CpgError::numeric("non-finite spike weight"));
    }
    let prop = Propagator::new(params, dt_ms)?;
    let mut next = *state;
    for &(w, sign) in incoming_weighted_spikes {
        prop.inject(&mut next, w, sign);
    }
    let spiked = prop.advance(&mut next);
    Ok((next, spiked))
}

/// Sub-threshold membrane trajectory under constant current from rest:
/// `E_L + (I_e * tau_m / C) * (1 - exp(-t/tau_m))`.
pub fn closed_form_lif(params: &NeuronParams, i_e_pa: f64, t_ms: f64) -> f64 {
    params.resting_potential_mv
        + i_e_pa * params.membrane_time_constant_ms / params.membrane_capacity_pf
            * (1.0 - (-t_ms / params.membrane_time_constant_ms).exp())
}

/// Time for the membrane to first reach threshold from reset under constant
/// current, ignoring refractoriness. `None` if the current is sub-rheobase.
pub fn first_passage_time_ms(params: &NeuronParams, i_e_pa: f64) -> Option<f64> {
    let tau_m = params.membrane_time_constant_ms;
    let dv_inf = i_e_pa * tau_m / params.membrane_capacity_pf;
    let v_inf = params.resting_potential_mv + dv_inf;
    let gap = params.spike_threshold_mv - params.reset_potential_mv;
    let head = v_inf - params.reset_potential_mv;
    if head <= gap {
        return None;
    }
    Some(tau_m * (head / (head - gap)).ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn cpg_row() -> NeuronParams {
        NeuronParams {
            resting_potential_mv: -70.0,
            membrane_capacity_pf: 250.0,
            membrane_time_constant_ms: 10.0,
            spike_threshold_mv: -55.0,
            reset_potential_mv: -70.0,
            external_current_pa: 0.0,
            refractory_period_ms: 2.0,
            syn_time_constant_excitatory_ms: 2.0,
            syn_time_constant_inhibitory_ms: 2.0,
        }
    }

    #[test]
    fn equilibrium_without_input() {
        let params = cpg_row();
        let mut state = NeuronState::resting(&params);
        for _ in 0..5000 {
            let (next, spiked) = step(&state, &params, &[], 0.1).unwrap();
            assert!(!spiked);
            state = next;
        }
        assert_abs_diff_eq!(state.membrane_potential_mv, -70.0, epsilon = 1e-12);
    }

    #[test]
    fn constant_current_matches_closed_form() {
        let mut params = cpg_row();
        params.external_current_pa = 200.0; // sub-rheobase (375 pA)
        let prop = Propagator::new(&params, 0.1).unwrap();
        let mut state = NeuronState::resting(&params);
        for step_idx in 1..=200 {
            assert!(!prop.advance(&mut state));
            let t = step_idx as f64 * 0.1;
            if [10, 50, 200].contains(&step_idx) {
                assert_abs_diff_eq!(
                    state.membrane_potential_mv,
                    closed_form_lif(&params, 200.0, t),
                    epsilon = 1e-9
                );
            }
        }
    }

    #[test]
    fn closed_form_examples() {
        let params = cpg_row();
        assert_eq!(closed_form_lif(&params, 500.0, 0.0), -70.0);
        assert_eq!(closed_form_lif(&params, 0.0, 137.0), -70.0);
        // C=250, tau_m=10, I_e=500 -> asymptote -70 + 500*10/250 = -50 mV
        assert_abs_diff_eq!(closed_form_lif(&params, 500.0, 1e6), -50.0, epsilon = 1e-9);
    }

    #[test]
    fn alpha_kernel_peaks_at_tau_with_amplitude_w() {
        let params = cpg_row();
        let prop = Propagator::new(&params, 0.1).unwrap();
        let w = 120.0;
        let mut state = NeuronState::resting(&params);
        prop.inject(&mut state, w, SignClass::Excitatory);
        let mut peak_t = 0.0;
        let mut peak_i = f64::MIN;
        let mut at_2ms = f64::NAN;
        for step_idx in 1..=100 {
            prop.advance(&mut state);
            let t = step_idx as f64 * 0.1;
            let i = state.excitatory_syn_state.current_pa();
            if i > peak_i {
                peak_i = i;
                peak_t = t;
            }
            if step_idx == 20 {
                at_2ms = i;
            }
        }
        assert_abs_diff_eq!(peak_t, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(at_2ms, w, epsilon = 1e-9);
        // dense-dt numerical oracle for the same trace
        let dense = Propagator::new(&params, 0.001).unwrap();
        let mut s2 = NeuronState::resting(&params);
        dense.inject(&mut s2, w, SignClass::Excitatory);
        for _ in 0..2000 {
            dense.advance(&mut s2);
        }
        assert_abs_diff_eq!(s2.excitatory_syn_state.current_pa(), w, epsilon = 1e-9);
    }

    #[test]
    fn synaptic_linearity_before_threshold() {
        let mut params = cpg_row();
        params.spike_threshold_mv = 1e9; // effectively no threshold
        let prop = Propagator::new(&params, 0.1).unwrap();
        let run = |spikes: &[(usize, f64)]| {
            let mut state = NeuronState::resting(&params);
            let mut trace = Vec::new();
            for i in 0..400 {
                for &(at, w) in spikes {
                    if at == i {
                        prop.inject(&mut state, w, SignClass::Excitatory);
                    }
                }
                prop.advance(&mut state);
                trace.push((
                    state.membrane_potential_mv,
                    state.excitatory_syn_state.current_pa(),
                ));
            }
            trace
        };
        let a = run(&[(0, 80.0)]);
        let b = run(&[(30, 50.0)]);
        let both = run(&[(0, 80.0), (30, 50.0)]);
        for i in 0..400 {
            let v_sum = a[i].0 + b[i].0 - params.resting_potential_mv;
            assert_abs_diff_eq!(both[i].0, v_sum, epsilon = 1e-9);
            assert_abs_diff_eq!(both[i].1, a[i].1 + b[i].1, epsilon = 1e-9);
        }
    }

    #[test]
    fn refractory_clamps_to_reset() {
        let mut params = cpg_row();
        params.external_current_pa = 600.0; // supra-rheobase
        let prop = Propagator::new(&params, 0.1).unwrap();
        let mut state = NeuronState::resting(&params);
        let mut spike_steps = Vec::new();
        for i in 0..2000 {
            if prop.advance(&mut state) {
                spike_steps.push(i);
            } else if state.refractory_remaining_ms > 0.0 {
                assert_eq!(state.membrane_potential_mv, params.reset_potential_mv);
            }
        }
        assert!(spike_steps.len() >= 2);
        for w in spike_steps.windows(2) {
            let isi_ms = (w[1] - w[0]) as f64 * 0.1;
            assert!(isi_ms >= params.refractory_period_ms);
        }
    }

    #[test]
    fn dt_refinement_localizes_spike_times() {
        let mut params = cpg_row();
        params.external_current_pa = 600.0;
        let first_spike = |dt: f64| {
            let prop = Propagator::new(&params, dt).unwrap();
            let mut state = NeuronState::resting(&params);
            let mut i = 0u64;
            loop {
                i += 1;
                if prop.advance(&mut state) {
                    return i as f64 * dt;
                }
            }
        };
        let coarse = first_spike(0.1);
        let fine = first_spike(0.05);
        assert!((coarse - fine).abs() < 0.1, "{coarse} vs {fine}");
        let exact = first_passage_time_ms(&params, 600.0).unwrap();
        assert!((coarse - exact).abs() <= 0.1 + 1e-12);
    }

    #[test]
    fn rejects_bad_inputs() {
        let params = cpg_row();
        let mut state = NeuronState::resting(&params);
        state.membrane_potential_mv = f64::NAN;
        assert!(step(&state, &params, &[], 0.1).is_err());
        let mut bad = cpg_row();
        bad.spike_threshold_mv = bad.reset_potential_mv;
        assert!(Propagator::new(&bad, 0.1).is_err());
        assert!(Propagator::new(&params, 0.0).is_err());
    }
}
