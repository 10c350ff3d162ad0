use cpg_core::builder::{self, CpgSpec, PhaseSpec};
use cpg_core::lif::SignClass;
use cpg_core::resume;

// Landscape probe: uniform plastic weights, no training; where are the
// subthreshold peaks of the motor membrane?
fn main() {
    let wexc: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(58.0);
    let winh: f64 = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(-13.0);
    let s = CpgSpec {
        phases: vec![
            PhaseSpec { duration_ms: 500.0, pfn_size: 300, t_neuron_count: None },
            PhaseSpec { duration_ms: 500.0, pfn_size: 300, t_neuron_count: None },
        ],
        motor_neuron_count: 5,
        tonic_frequency_default: 250.0,
        seed: 3,
    };
    let w = builder::calibrate(&s).unwrap();
    let mut net = builder::build_with_weights(&s, &w).unwrap();
    for &idx in &net.plastic_synapses.clone() {
        let sc = net.network.synapse(idx).sign_class;
        let v = match sc { SignClass::Excitatory => wexc, SignClass::Inhibitory => winh };
        net.network.set_weight(idx, v);
    }
    let ctx = resume::prepare_replay(&net, 250.0).unwrap();
    for m in 0..2 {
        let trace = resume::replay_motor_voltage(&ctx, &net, m).unwrap();
        let vmax = trace.iter().map(|&(_, v)| v).fold(f64::MIN, f64::max);
        // local maxima separated by >= 10ms
        let mut peaks: Vec<(f64, f64)> = Vec::new();
        for w in trace.windows(3) {
            let (t, v) = w[1];
            if v > w[0].1 && v >= w[2].1 {
                match peaks.last() {
                    Some(&(lt, lv)) if t - lt < 10.0 => {
                        if v > lv { *peaks.last_mut().unwrap() = (t, v); }
                    }
                    _ => peaks.push((t, v)),
                }
            }
        }
        peaks.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
        let top: Vec<(f64, f64)> = peaks.iter().take(14)
            .map(|&(t, v)| ((t * 10.0).round() / 10.0, (v * 100.0).round() / 100.0))
            .collect();
        println!("m{m}: vmax {vmax:.2}, top peaks {top:?}");
        let band: Vec<f64> = trace
            .iter()
            .filter(|&&(t, _)| (400.0..460.0).contains(&t))
            .map(|&(_, v)| v)
            .collect();
        let bmax = band.iter().cloned().fold(f64::MIN, f64::max);
        let bmin = band.iter().cloned().fold(f64::MAX, f64::min);
        println!("  m{m} V in [400,460]: max {bmax:.3} min {bmin:.3} ripple {:.3}", bmax - bmin);
    }
}
