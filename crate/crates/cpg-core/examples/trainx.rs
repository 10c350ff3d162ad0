use cpg_core::builder::{self, CpgSpec, PhaseSpec};
use cpg_core::resume::{self, ResumeHyperparams};

fn main() {
    let pool: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(5);
    let seed: u64 = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(1);
    let s = CpgSpec {
        phases: vec![
            PhaseSpec { duration_ms: 500.0, pfn_size: 300, t_neuron_count: None },
            PhaseSpec { duration_ms: 500.0, pfn_size: 300, t_neuron_count: None },
        ],
        motor_neuron_count: pool,
        tonic_frequency_default: 250.0,
        seed: 3,
    };
    let w = builder::calibrate(&s).unwrap();
    let mut net = builder::build_with_weights(&s, &w).unwrap();
    let teacher = resume::random_teacher_in(
        net.nominal_cycle_ms(),
        &net.supported_teacher_windows(),
        pool,
        (1, 4),
        40.0,
        seed,
    )
    .unwrap();
    println!("teacher spikes: {:?}", teacher.spike_times_ms);
    let hp = ResumeHyperparams::default();
    let t0 = std::time::Instant::now();
    let report = resume::train(&mut net, &teacher, &hp, &[250.0]).unwrap();
    println!("trained in {:?}, epochs {}, converged {}", t0.elapsed(), report.epochs_used, report.converged);
    let all: Vec<f64> = report.error_series_ms.iter().map(|&e| (e*100.0).round()/100.0).collect();
    println!("errors[0..60]: {:?}", &all[..all.len().min(60)]);
    if all.len() > 60 {
        println!("errors[last 30]: {:?}", &all[all.len()-30..]);
    }
    let (err, motor) = resume::evaluate(&net, &teacher, 250.0).unwrap();
    println!("full-network eval error: {err:.3}");
    println!("motor trains: {:?}", motor.iter().map(|t| t.iter().map(|x| (x*10.0).round()/10.0).collect::<Vec<_>>()).collect::<Vec<_>>());

    // weight stats
    let mut exc = Vec::new();
    let mut inh = Vec::new();
    for &idx in &net.plastic_synapses {
        let syn = net.network.synapse(idx);
        match syn.sign_class {
            cpg_core::lif::SignClass::Excitatory => exc.push(syn.weight),
            cpg_core::lif::SignClass::Inhibitory => inh.push(syn.weight),
        }
    }
    let stats = |v: &mut Vec<f64>| {
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = v.len();
        let at_hi = v.iter().filter(|&&w| (w.abs() - 100.0).abs() < 1e-9).count();
        let at_zero = v.iter().filter(|&&w| w.abs() < 1e-9).count();
        let mean = v.iter().sum::<f64>() / n as f64;
        (n, mean, v[n / 2], at_zero, at_hi)
    };
    println!("exc (n, mean, median, at0, at100): {:?}", stats(&mut exc));
    println!("inh (n, mean, median, at0, at-100): {:?}", stats(&mut inh));

    // per teacher spike: nearest actual distance; per actual: nearest teacher
    for (m, ts) in teacher.spike_times_ms.iter().enumerate() {
        for &t in ts {
            let near = motor[m].iter().map(|&x| (x - t).abs()).fold(f64::INFINITY, f64::min);
            println!("teacher m{m} t={t:.1}: nearest actual {:.2}", near);
        }
        for &x in &motor[m] {
            let near = ts.iter().map(|&t| (x - t).abs()).fold(f64::INFINITY, f64::min);
            if near > 10.0 { println!("  spurious m{m} at {x:.1} (nearest teacher {near:.1})"); }
        }
    }

    // membrane trace of motor 0 around its teacher times and spurious spikes
    {
        let ctx = resume::prepare_replay(&net, 250.0).unwrap();
        let trace = resume::replay_motor_voltage(&ctx, &net, 0).unwrap();
        let around = |c: f64| {
            let vs: Vec<(f64, f64)> = trace.iter().cloned()
                .filter(|&(t, _)| (t - c).abs() <= 12.0)
                .filter(|&(t, _)| ((t - c) * 2.0).fract().abs() < 1e-6 || true)
                .step_by(20) // every 2ms
                .map(|(t, v)| ((t*10.0).round()/10.0, (v*100.0).round()/100.0)).collect();
            println!("  V near {c:.1}: {vs:?}");
        };
        println!("motor0 V threshold -55, rest -70:");
        for &t in &teacher.spike_times_ms[0] { around(t); }
        for &t in &motor[0] { around(t); }
        let vmax = trace.iter().map(|&(_,v)| v).fold(f64::MIN, f64::max);
        let n_above_54 = trace.iter().filter(|&&(_,v)| v > -56.0).count();
        println!("  global V max {vmax:.2}, samples above -56mV: {n_above_54}");
    }

    // motor 0: pres within 8ms before each teacher spike, with weights
    {
        let ctx = resume::prepare_replay(&net, 250.0).unwrap();
        let motor_first = net.motor.first_neuron;
        for &tt in &teacher.spike_times_ms[0] {
            let mut found = Vec::new();
            for (k, &idx) in net.plastic_synapses.iter().enumerate() {
                let syn = net.network.synapse(idx);
                if syn.post_id != motor_first { continue; }
                for &p in &ctx.pre_trains[k] {
                    let dgap = tt - p;
                    if dgap > 0.0 && dgap <= 8.0 {
                        found.push(((p*10.0).round()/10.0, (syn.weight*10.0).round()/10.0, syn.sign_class));
                    }
                }
            }
            found.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            println!("m0 teacher {tt:.1}: pres(time, w, sign) {found:?}");
        }
    }

    // top density 3ms windows over the pre grid (unique PFN spike times)
    {
        let ctx = resume::prepare_replay(&net, 250.0).unwrap();
        let mut times: Vec<f64> = Vec::new();
        for (k, &idx) in net.plastic_synapses.iter().enumerate() {
            if net.network.synapse(idx).post_id == net.motor.first_neuron {
                times.extend(ctx.pre_trains[k].iter().cloned());
            }
        }
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut peaks: Vec<(f64, usize)> = Vec::new();
        for (i, &t) in times.iter().enumerate() {
            let c = times[i..].iter().take_while(|&&x| x < t + 3.0).count();
            peaks.push((t, c));
        }
        peaks.sort_by(|a, b| b.1.cmp(&a.1));
        println!("n pres {}, top density 3ms windows: {:?}", times.len(), &peaks[..8.min(peaks.len())]);
        // largest gaps
        let mut gaps: Vec<(f64, f64)> = times.windows(2).map(|w| (w[0], w[1]-w[0])).collect();
        gaps.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
        println!("largest gaps (start, len): {:?}", gaps[..6].iter().map(|&(a,b)| ((a*10.0).round()/10.0, (b*10.0).round()/10.0)).collect::<Vec<_>>());
    }

    // pre-spike density near teacher times (cycle-relative), via replay context
    let ctx = resume::prepare_replay(&net, 250.0).unwrap();
    let mut all_pre: Vec<f64> = ctx.pre_trains.iter().flatten().cloned().collect();
    all_pre.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n_syn_per_motor = net.plastic_synapses.len() / pool;
    for (m, ts) in teacher.spike_times_ms.iter().enumerate() {
        for &t in ts {
            // count unique pre neurons firing in [t-3, t] among synapses onto motor m
            let mut c3 = 0usize;
            let mut c10 = 0usize;
            let _ = n_syn_per_motor;
            for tr in ctx.pre_trains.iter() {
                for &p in tr {
                    let d = t - p;
                    if d > 0.0 && d <= 3.0 { c3 += 1; }
                    if d > 0.0 && d <= 10.0 { c10 += 1; }
                }
            }
            println!("teacher m{m} t={t:.1}: pres within 3ms={}, 10ms={}", c3 / pool, c10 / pool);
        }
    }
}
