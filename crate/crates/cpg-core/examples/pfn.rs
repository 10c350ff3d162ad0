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
    println!("neurons {}, synapses {}", net.network.neuron_count(), net.network.synapses().len());

    let dur = 3.5 * net.nominal_cycle_ms();
    let t0 = std::time::Instant::now();
    let r = net.run_driven(250.0, dur, table1::DEFAULT_DT_MS).unwrap();
    println!("run {:?}", t0.elapsed());
    let onsets = net.phase1_onsets(&r);
    println!("cycle onsets: {onsets:?}");

    // PFN stats per phase over the middle cycle
    if onsets.len() >= 3 {
        let (c0, c1) = (onsets[1], onsets[2]);
        for (m, ph) in net.phases.iter().enumerate() {
            let mut fired = 0usize;
            let mut multi = 0usize;
            let mut total = 0usize;
            for id in ph.pfn.neuron_ids() {
                let n = r.spikes_in_window(id, c0, c1).len();
                total += 1;
                if n >= 1 { fired += 1; }
                if n > 1 { multi += 1; }
            }
            println!("phase {m}: PFN fired {fired}/{total}, multi {multi}");
            // spike time spread within cycle
            let mut times: Vec<f64> = ph.pfn.neuron_ids()
                .flat_map(|id| r.spikes_in_window(id, c0, c1).iter().map(|&t| t - c0).collect::<Vec<_>>())
                .collect();
            times.sort_by(|a,b| a.partial_cmp(b).unwrap());
            if !times.is_empty() {
                let n = times.len();
                println!("  spike times: min {:.0} p25 {:.0} p50 {:.0} p75 {:.0} max {:.0}",
                    times[0], times[n/4], times[n/2], times[3*n/4], times[n-1]);
                // density per 10ms bin across the phase window
                let ph_start = m as f64 * 500.0;
                let nbins = 50usize;
                let mut bins = vec![0usize; nbins];
                for &t in &times {
                    let b = ((t - ph_start) / 10.0).floor();
                    if b >= 0.0 && (b as usize) < nbins { bins[b as usize] += 1; }
                }
                let empty = bins.iter().filter(|&&c| c == 0).count();
                let low = bins.iter().filter(|&&c| c <= 1).count();
                println!("  10ms bins: {:?}", bins);
                println!("  empty bins {empty}/{nbins}, bins<=1 {low}/{nbins}");
            }
        }
        let mut motor_spikes = 0;
        for id in net.motor.neuron_ids() { motor_spikes += r.spikes_in_window(id, c0, c1).len(); }
        println!("motor spikes in cycle (untrained): {motor_spikes}");
    }
    let viol = builder::single_spike_check(&net, 6.0 * net.nominal_cycle_ms()).unwrap();
    println!("single-spike violations over run: {}", viol.len());
}
