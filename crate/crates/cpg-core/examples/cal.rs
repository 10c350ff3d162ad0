use cpg_core::builder::{self, CpgSpec, PhaseSpec};
use std::time::Instant;

fn main() {
    let s = CpgSpec {
        phases: vec![
            PhaseSpec { duration_ms: 500.0, pfn_size: 50, t_neuron_count: None },
            PhaseSpec { duration_ms: 500.0, pfn_size: 50, t_neuron_count: None },
        ],
        motor_neuron_count: 5,
        tonic_frequency_default: 250.0,
        seed: 3,
    };
    let t0 = Instant::now();
    match builder::calibrate(&s) {
        Ok(w) => {
            println!("calibrated in {:?}", t0.elapsed());
            println!("chain_delays: {:?}", w.chain_delays_ms);
            let net = builder::build_npg_only(&s, &w).unwrap();
            for f in [250.0, 500.0] {
                let r = builder::validate_oscillation(&net, f, 5).unwrap();
                println!("F={f}: driven {:?} free {:?} after {} excl {}",
                    r.driven_phase_durations_ms, r.free_phase_durations_ms,
                    r.cycles_completed_after_removal, r.exclusive_activity);
            }
        }
        Err(e) => println!("FAILED: {e}"),
    }
}
