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
    let r = net.run_driven(250.0, 3.0 * net.nominal_cycle_ms(), table1::DEFAULT_DT_MS).unwrap();
    let onsets = net.phase1_onsets(&r);
    let (c0, c1) = (onsets[1], onsets[2]);
    let mut shown = 0;
    for (m, ph) in net.phases.iter().enumerate() {
        for (i, id) in ph.pfn.neuron_ids().enumerate() {
            let sp = r.spikes_in_window(id, c0, c1);
            if sp.len() > 1 && shown < 8 {
                shown += 1;
                let p = net.network.neuron_params(id);
                let in_id = ph.inhibiting.first_neuron + i;
                let in_sp = r.spikes_in_window(in_id, c0, c1);
                let rel: Vec<f64> = sp.iter().map(|t| ((t - c0)*10.0).round()/10.0).collect();
                let in_rel: Vec<f64> = in_sp.iter().take(6).map(|t| ((t - c0)*10.0).round()/10.0).collect();
                println!("phase {m} pfn {i}: spikes {rel:?}");
                println!("  params: Ie {:.0} EL {:.0} C {:.0} tau {:.1} th {:.0} reset {:.0} rheo {:.0}",
                    p.external_current_pa, p.resting_potential_mv, p.membrane_capacity_pf,
                    p.membrane_time_constant_ms, p.spike_threshold_mv, p.reset_potential_mv, p.rheobase_pa());
                println!("  IN spikes ({}): {in_rel:?}{}", in_sp.len(), if in_sp.len()>6 {" ..."} else {""});
            }
        }
    }
}
