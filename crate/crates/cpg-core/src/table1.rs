//! Fixed neuron parameter rows and sampling ranges used across the network.
//!
//! CPG (NPG) and motor neurons share one fixed row; PFN neurons draw each
//! parameter uniformly from a per-field range. Values not covered by the
//! rows use the declared defaults: tau_syn = 2 ms for both synapse classes,
//! refractory period = 2 ms, initial V = resting potential.

use crate::lif::NeuronParams;
use crate::network::ParamRanges;

pub const DEFAULT_DT_MS: f64 = 0.1;
pub const DEFAULT_DELAY_MS: f64 = 1.0;
pub const DEFAULT_TAU_SYN_MS: f64 = 2.0;
pub const DEFAULT_REFRACTORY_MS: f64 = 2.0;

pub fn cpg_row() -> NeuronParams {
    NeuronParams {
        external_current_pa: 0.0,
        resting_potential_mv: -70.0,
        membrane_capacity_pf: 250.0,
        membrane_time_constant_ms: 10.0,
        spike_threshold_mv: -55.0,
        reset_potential_mv: -70.0,
        refractory_period_ms: DEFAULT_REFRACTORY_MS,
        syn_time_constant_excitatory_ms: DEFAULT_TAU_SYN_MS,
        syn_time_constant_inhibitory_ms: DEFAULT_TAU_SYN_MS,
    }
}

pub fn motor_row() -> NeuronParams {
    cpg_row()
}

pub fn pfn_ranges() -> ParamRanges {
    ParamRanges {
        external_current_pa: (0.0, 150.0),
        resting_potential_mv: (-90.0, -70.0),
        membrane_capacity_pf: (100.0, 300.0),
        membrane_time_constant_ms: (9.0, 30.0),
        spike_threshold_mv: (-50.0, -30.0),
        reset_potential_mv: (-90.0, -60.0),
    }
}
