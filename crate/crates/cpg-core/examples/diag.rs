//! Development diagnostics for NPG calibration. Not part of the public API.

use cpg_core::builder::{self, CpgSpec, FixedWeights, PhaseSpec};
use cpg_core::network::TonicSource;
use cpg_core::table1;

fn spec() -> CpgSpec {
    CpgSpec {
        phases: vec![
            PhaseSpec {
                duration_ms: 500.0,
                pfn_size: 50,
                t_neuron_count: None,
            },
            PhaseSpec {
                duration_ms: 500.0,
                pfn_size: 50,
                t_neuron_count: None,
            },
        ],
        motor_neuron_count: 5,
        tonic_frequency_default: 250.0,
        seed: 3,
    }
}

fn main() {
    let s = spec();
    let w = FixedWeights::baseline(&s);
    let net = builder::build_npg_only(&s, &w).unwrap();
    println!("neurons: {}", net.network.neuron_count());

    for f in [250.0, 500.0] {
        let stop = 1350.0;
        let result = net
            .run_schedule(
                &[TonicSource::regular(f, 0.0, stop)],
                4000.0,
                table1::DEFAULT_DT_MS,
            )
            .unwrap();
        println!("== F = {f} ==");
        for (m, ph) in net.phases.iter().enumerate() {
            let h = result.spikes_of(ph.h.first_neuron);
            let onsets = builder::burst_onsets(h, builder::BURST_GAP_MS);
            println!(
                "phase {m}: H spikes {:4}  onsets {:?}",
                h.len(),
                onsets.iter().map(|t| (t * 10.0).round() / 10.0).collect::<Vec<_>>()
            );
            if m == 0 && !h.is_empty() {
                let isis: Vec<f64> = h.windows(2).map(|p| ((p[1] - p[0]) * 10.0).round() / 10.0).collect();
                let short: Vec<f64> = isis.iter().copied().take(12).collect();
                println!("  first H ISIs: {short:?}");
            }
            let tfirst = ph.t_chain.first_neuron;
            for j in 0..ph.t_chain.count {
                let t = result.spikes_of(tfirst + j);
                let first = t.first().copied().unwrap_or(f64::NAN);
                println!(
                    "  T{j}: {:4} spikes, first {:.1}, last {:.1}",
                    t.len(),
                    first,
                    t.last().copied().unwrap_or(f64::NAN)
                );
            }
        }
        let report = builder::analyze_oscillation(&net, &result, stop, 2);
        println!(
            "driven {:?} free {:?} cycles_after {} exclusive {}",
            report.driven_phase_durations_ms,
            report.free_phase_durations_ms,
            report.cycles_completed_after_removal,
            report.exclusive_activity
        );
    }
}
