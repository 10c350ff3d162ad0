use cpg_core::builder::{self, CpgSpec, PhaseSpec};
use cpg_core::table1;

fn main() {
    let s = CpgSpec {
        phases: vec![
            PhaseSpec { duration_ms: 500.0, pfn_size: 300, t_neuron_count: None },
            PhaseSpec { duration_ms: 500.0, pfn_size: 300, t_neuron_count: None },
        ],
        motor_neuron_count: 25,
        tonic_frequency_default: 250.0,
        seed: 3,
    };
    let w = builder::calibrate(&s).unwrap();
    let net = builder::build_with_weights(&s, &w).unwrap();
    let r = net.run_driven(250.0, 6.0 * net.nominal_cycle_ms(), table1::DEFAULT_DT_MS).unwrap();
    let onsets = net.phase1_onsets(&r);
    println!("onsets {onsets:?}");
    for (c, win) in onsets.windows(2).enumerate() {
        for id in net.pfn_neuron_ids() {
            let sp = r.spikes_in_window(id, win[0], win[1]);
            if sp.len() > 1 {
                let rel: Vec<f64> = sp.iter().map(|t| ((t - win[0])*10.0).round()/10.0).collect();
                println!("cycle {c} neuron {id}: {rel:?}");
            }
        }
    }
}
