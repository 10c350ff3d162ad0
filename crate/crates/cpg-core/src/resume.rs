//! ReSuMe supervised learning on the plastic PFN-to-motor synapses, plus the
//! spike-shift error metric.

use serde::{Deserialize, Serialize};

use crate::builder::CpgNetwork;
use crate::error::{CpgError, Result};
use crate::lif::SignClass;
use crate::table1;

/// Declared metric constants: a desired/actual spike pair counts as matched
/// within this window, anything unmatched costs the penalty.
pub const MISS_PENALTY_MS: f64 = 10.0;
pub const MISS_WINDOW_MS: f64 = 10.0;

/// Desired spike times per motor neuron for one CPG cycle, indexed by the
/// motor neuron's position within the pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeacherPattern {
    pub cycle_length_ms: f64,
    pub spike_times_ms: Vec<Vec<f64>>,
}

impl TeacherPattern {
    pub fn validate(&self) -> Result<()> {
        if !(self.cycle_length_ms > 0.0) {
            return Err(CpgError::config("teacher cycle length must be positive"));
        }
        for (i, train) in self.spike_times_ms.iter().enumerate() {
            for w in train.windows(2) {
                if w[1] - w[0] < table1::DEFAULT_REFRACTORY_MS {
                    return Err(CpgError::config(format!(
                        "teacher spikes for motor neuron {i} closer than the refractory period"
                    )));
                }
            }
            if train
                .iter()
                .any(|&t| !(0.0..self.cycle_length_ms).contains(&t))
            {
                return Err(CpgError::config(format!(
                    "teacher spike for motor neuron {i} outside [0, cycle)"
                )));
            }
        }
        Ok(())
    }

    pub fn total_spikes(&self) -> usize {
        self.spike_times_ms.iter().map(Vec::len).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ResumeHyperparams {
    /// Non-Hebbian magnitude (applied with the synapse's class sign).
    pub a: f64,
    pub a_d: f64,
    pub a_l: f64,
    pub tau_d_ms: f64,
    pub tau_l_ms: f64,
    /// Hard pair-inclusion cutoff for both learning windows.
    pub window_cutoff_ms: f64,
    pub epochs: usize,
    pub target_error_ms: f64,
    pub weight_bounds_excitatory: (f64, f64),
    pub weight_bounds_inhibitory: (f64, f64),
    /// Integration step for applying the per-cycle rate of change: the
    /// accumulated delta is scaled by `step_scale / (1 + epoch / step_anneal)`
    /// before it is added to the weight. A decaying step damps the limit
    /// cycles a full-magnitude batch update falls into near equilibrium.
    pub step_scale: f64,
    pub step_anneal: f64,
    /// How far ahead of each desired spike the learning rule aims (ms). The
    /// alpha-current/membrane cascade peaks ~7 ms after a presynaptic
    /// delivery, so potentiating only pres inside the 3 ms window leaves the
    /// motor neuron crossing threshold a few ms late. Training against a
    /// slightly advanced copy of the teacher cancels that systematic lag and
    /// lets the window reach the pres that actually shape the membrane at the
    /// desired instant. Evaluation always scores against the true teacher.
    pub teacher_lead_ms: f64,
    /// Epochs a single motor neuron may go without improving its own error
    /// before its incoming plastic weights are re-drawn from the initial
    /// distribution (a per-motor restart). Batch ReSuMe has absorbing
    /// wrong-site fixed points: a spurious spike whose causal presynaptic
    /// spikes lie outside the learning window can neither be depressed away
    /// nor displaced. Motors are mutually independent downstream of the PFN
    /// layer, so a stalled motor can be re-seeded without disturbing the
    /// converged ones. `0` disables restarts.
    pub restart_stall_epochs: usize,
    /// Cap on per-motor restarts.
    pub max_restarts_per_motor: usize,
}

impl Default for ResumeHyperparams {
    fn default() -> Self {
        ResumeHyperparams {
            a: 3.0,
            a_d: 6.0,
            a_l: 6.0,
            tau_d_ms: 2.0,
            tau_l_ms: 2.0,
            window_cutoff_ms: 3.0,
            epochs: 40000,
            target_error_ms: 2.9,
            weight_bounds_excitatory: (0.0, 100.0),
            weight_bounds_inhibitory: (-100.0, 0.0),
            step_scale: 0.05,
            step_anneal: 6000.0,
            teacher_lead_ms: 3.0,
            restart_stall_epochs: 2500,
            max_restarts_per_motor: 6,
        }
    }
}

impl ResumeHyperparams {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau_d_ms > 0.0) || !(self.tau_l_ms > 0.0) {
            return Err(CpgError::config("learning window time constants must be positive"));
        }
        if self.window_cutoff_ms <= 0.0 {
            return Err(CpgError::config("window cutoff must be positive"));
        }
        let (lo_e, hi_e) = self.weight_bounds_excitatory;
        let (lo_i, hi_i) = self.weight_bounds_inhibitory;
        if lo_e > hi_e || lo_i > hi_i || lo_e < 0.0 || hi_i > 0.0 {
            return Err(CpgError::config("weight bounds inconsistent with sign classes"));
        }
        Ok(())
    }

    pub fn clamp(&self, sign: SignClass, w: f64) -> f64 {
        let (lo, hi) = match sign {
            SignClass::Excitatory => self.weight_bounds_excitatory,
            SignClass::Inhibitory => self.weight_bounds_inhibitory,
        };
        w.clamp(lo, hi)
    }
}

/// Total ReSuMe weight change for one pass over the three spike trains.
///
/// Each teacher spike contributes `+(a + sum of A_d exp(-s/tau_d))` over pre
/// spikes with `0 < s <= cutoff`; each postsynaptic spike contributes the
/// mirrored negative term. The whole delta is sign-flipped for inhibitory
/// synapses. Pre spikes are scanned with a sliding window, so the cost is
/// linear in the train lengths.
pub fn resume_delta(
    pre_spikes: &[f64],
    teacher_spikes: &[f64],
    post_spikes: &[f64],
    hp: &ResumeHyperparams,
    sign: SignClass,
) -> f64 {
    let excite = window_sum(pre_spikes, teacher_spikes, hp.a, hp.a_d, hp.tau_d_ms, hp.window_cutoff_ms);
    let depress = window_sum(pre_spikes, post_spikes, hp.a, hp.a_l, hp.tau_l_ms, hp.window_cutoff_ms);
    let delta = excite - depress;
    match sign {
        SignClass::Excitatory => delta,
        SignClass::Inhibitory => -delta,
    }
}

fn window_sum(pre: &[f64], events: &[f64], a: f64, amp: f64, tau: f64, cutoff: f64) -> f64 {
    let mut total = 0.0;
    let mut lo = 0usize;
    for &t in events {
        while lo < pre.len() && t - pre[lo] > cutoff {
            lo += 1;
        }
        let mut acc = a;
        for &tp in &pre[lo..] {
            let s = t - tp;
            if s <= 0.0 {
                break;
            }
            acc += amp * (-s / tau).exp();
        }
        total += acc;
    }
    total
}

/// Mean spike-shift error between actual and desired motor spikes, both in
/// cycle-relative time. Spikes of each neuron are aligned one-to-one by an
/// order-preserving minimal-cost matching; a matched pair costs its distance
/// (capped at the miss penalty), an unmatched teacher spike costs the full
/// penalty, and a spurious actual spike (no teacher spike within the miss
/// window) also costs the full penalty. The error is the mean over all
/// teacher spikes plus spurious actual spikes.
pub fn spike_shift_error(actual: &[Vec<f64>], teacher: &TeacherPattern) -> f64 {
    let mut total = 0.0;
    let mut items = 0usize;
    for (neuron, desired) in teacher.spike_times_ms.iter().enumerate() {
        let got = actual.get(neuron).map(Vec::as_slice).unwrap_or(&[]);
        total += align_cost(desired, got);
        items += desired.len();
        items += got
            .iter()
            .filter(|&&t| {
                nearest_distance(desired, t)
                    .map(|d| d > MISS_WINDOW_MS)
                    .unwrap_or(true)
            })
            .count();
    }
    if items == 0 {
        0.0
    } else {
        total / items as f64
    }
}

/// Dynamic-program alignment of two sorted trains. Skipping a teacher spike
/// costs the miss penalty; skipping an actual spike costs the penalty only
/// when it is spurious.
fn align_cost(teacher: &[f64], actual: &[f64]) -> f64 {
    let (m, n) = (teacher.len(), actual.len());
    let spurious: Vec<f64> = actual
        .iter()
        .map(|&t| {
            let far = nearest_distance(teacher, t)
                .map(|d| d > MISS_WINDOW_MS)
                .unwrap_or(true);
            if far {
                MISS_PENALTY_MS
            } else {
                0.0
            }
        })
        .collect();
    let mut dp = vec![vec![0.0f64; n + 1]; m + 1];
    for j in 1..=n {
        dp[0][j] = dp[0][j - 1] + spurious[j - 1];
    }
    for i in 1..=m {
        dp[i][0] = dp[i - 1][0] + MISS_PENALTY_MS;
        for j in 1..=n {
            let pair = (teacher[i - 1] - actual[j - 1]).abs().min(MISS_PENALTY_MS);
            dp[i][j] = (dp[i - 1][j - 1] + pair)
                .min(dp[i - 1][j] + MISS_PENALTY_MS)
                .min(dp[i][j - 1] + spurious[j - 1]);
        }
    }
    dp[m][n]
}

fn nearest_distance(sorted: &[f64], t: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let i = sorted.partition_point(|&x| x < t);
    let mut best = f64::INFINITY;
    if i < sorted.len() {
        best = best.min((sorted[i] - t).abs());
    }
    if i > 0 {
        best = best.min((t - sorted[i - 1]).abs());
    }
    Some(best)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainingReport {
    pub error_series_ms: Vec<f64>,
    pub converged: bool,
    pub epochs_used: usize,
    /// Final weight of every plastic synapse, parallel to the network's
    /// plastic synapse index list.
    pub final_weights: Vec<f64>,
}

impl TrainingReport {
    pub fn final_error_ms(&self) -> f64 {
        *self.error_series_ms.last().unwrap_or(&f64::NAN)
    }
}

/// Cached observation of everything upstream of the motor pool at one tonic
/// frequency. Motor weights do not feed back into the NPG or PFN layers, so
/// the presynaptic trains are identical across epochs and the motor pool can
/// be re-simulated alone against these recorded events.
pub struct ReplayContext {
    dt_ms: f64,
    n_steps: usize,
    /// Measured cycle window [t0, t1) within the recorded run.
    window: (f64, f64),
    /// Per plastic synapse: cycle-relative pre spikes (for the updates).
    pub pre_trains: Vec<Vec<f64>>,
    /// Per motor index: (delivery step, plastic synapse position) events.
    plastic_events: Vec<Vec<(usize, usize)>>,
    /// Per motor index: (delivery step, weight, sign) from fixed synapses.
    fixed_events: Vec<Vec<(usize, f64, SignClass)>>,
}

pub fn prepare_replay(net: &CpgNetwork, tonic_f: f64) -> Result<ReplayContext> {
    let cycle = net.nominal_cycle_ms();
    let duration = 3.4 * cycle;
    let dt = table1::DEFAULT_DT_MS;
    let result = net.run_driven(tonic_f, duration, dt)?;
    let onsets = net.phase1_onsets(&result);
    if onsets.len() < 3 {
        return Err(CpgError::InsufficientData(
            "fewer than two complete CPG cycles observed during training".into(),
        ));
    }
    // The second full cycle: clear of the start-from-rest transient, so the
    // recorded window reflects steady-state cycling.
    let (t0, t1) = (onsets[1], onsets[2]);
    let n_steps = (duration / dt).round() as usize;
    let motor_first = net.motor.first_neuron;
    let n_motor = net.motor.count;

    let plastic_set: std::collections::HashSet<usize> =
        net.plastic_synapses.iter().copied().collect();
    let mut pre_trains = Vec::with_capacity(net.plastic_synapses.len());
    let mut plastic_events: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n_motor];
    let mut fixed_events: Vec<Vec<(usize, f64, SignClass)>> = vec![Vec::new(); n_motor];

    for (k, &idx) in net.plastic_synapses.iter().enumerate() {
        let syn = net.network.synapse(idx);
        let spikes = result.spikes_of(syn.pre_id);
        pre_trains.push(
            result
                .spikes_in_window(syn.pre_id, t0, t1)
                .iter()
                .map(|&t| t - t0)
                .collect(),
        );
        let d = (syn.delay_ms / dt).round().max(1.0) as usize;
        let motor_idx = syn.post_id - motor_first;
        for &t in spikes {
            let step = (t / dt).round() as usize + d;
            if step <= n_steps {
                plastic_events[motor_idx].push((step, k));
            }
        }
    }
    for (idx, syn) in net.network.synapses().iter().enumerate() {
        let in_motor = syn.post_id >= motor_first && syn.post_id < motor_first + n_motor;
        if !in_motor || plastic_set.contains(&idx) {
            continue;
        }
        let d = (syn.delay_ms / dt).round().max(1.0) as usize;
        for &t in result.spikes_of(syn.pre_id) {
            let step = (t / dt).round() as usize + d;
            if step <= n_steps {
                fixed_events[syn.post_id - motor_first].push((step, syn.weight, syn.sign_class));
            }
        }
    }
    for ev in &mut plastic_events {
        ev.sort_unstable_by_key(|&(s, _)| s);
    }
    for ev in &mut fixed_events {
        ev.sort_unstable_by_key(|&(s, _, _)| s);
    }
    Ok(ReplayContext {
        dt_ms: dt,
        n_steps,
        window: (t0, t1),
        pre_trains,
        plastic_events,
        fixed_events,
    })
}

/// Simulates only the motor pool against the recorded events with the
/// network's current plastic weights; step scheduling matches `Network::run`
/// exactly, so the result equals a full-network re-run. Returns
/// cycle-relative motor trains.
fn replay_motor(ctx: &ReplayContext, net: &CpgNetwork) -> Result<Vec<Vec<f64>>> {
    use crate::lif::{NeuronState, Propagator};
    let (t0, t1) = ctx.window;
    let motor_first = net.motor.first_neuron;
    let weights: Vec<f64> = net
        .plastic_synapses
        .iter()
        .map(|&i| net.network.synapse(i).weight)
        .collect();
    let signs: Vec<SignClass> = net
        .plastic_synapses
        .iter()
        .map(|&i| net.network.synapse(i).sign_class)
        .collect();

    let one = |m: usize| -> Result<Vec<f64>> {
        let params = net.network.neuron_params(motor_first + m);
        let prop = Propagator::new(params, ctx.dt_ms)?;
        let mut state = NeuronState::resting(params);
        let mut train = Vec::new();
        let plastic = &ctx.plastic_events[m];
        let fixed = &ctx.fixed_events[m];
        let (mut pi, mut fi) = (0usize, 0usize);
        // Nothing past the scoring window can influence it.
        let end_step = ((t1 / ctx.dt_ms).ceil() as usize).min(ctx.n_steps);
        for step in 1..=end_step {
            while pi < plastic.len() && plastic[pi].0 == step {
                let (_, k) = plastic[pi];
                if weights[k] != 0.0 {
                    prop.inject(&mut state, weights[k], signs[k]);
                }
                pi += 1;
            }
            while fi < fixed.len() && fixed[fi].0 == step {
                let (_, w, sign) = fixed[fi];
                prop.inject(&mut state, w, sign);
                fi += 1;
            }
            if prop.advance(&mut state) {
                let t = step as f64 * ctx.dt_ms;
                if t >= t0 && t < t1 {
                    train.push(t - t0);
                }
            }
        }
        Ok(train)
    };

    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..net.motor.count).into_par_iter().map(one).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..net.motor.count).map(one).collect()
    }
}

/// Diagnostic twin of `replay_motor` for a single motor neuron: returns the
/// cycle-relative membrane trace as (time_ms, V_mv) samples.
pub fn replay_motor_voltage(
    ctx: &ReplayContext,
    net: &CpgNetwork,
    m: usize,
) -> Result<Vec<(f64, f64)>> {
    use crate::lif::{NeuronState, Propagator};
    let (t0, t1) = ctx.window;
    let motor_first = net.motor.first_neuron;
    let weights: Vec<f64> = net
        .plastic_synapses
        .iter()
        .map(|&i| net.network.synapse(i).weight)
        .collect();
    let signs: Vec<SignClass> = net
        .plastic_synapses
        .iter()
        .map(|&i| net.network.synapse(i).sign_class)
        .collect();
    let params = net.network.neuron_params(motor_first + m);
    let prop = Propagator::new(params, ctx.dt_ms)?;
    let mut state = NeuronState::resting(params);
    let mut trace = Vec::new();
    let plastic = &ctx.plastic_events[m];
    let fixed = &ctx.fixed_events[m];
    let (mut pi, mut fi) = (0usize, 0usize);
    for step in 1..=ctx.n_steps {
        while pi < plastic.len() && plastic[pi].0 == step {
            let (_, k) = plastic[pi];
            if weights[k] != 0.0 {
                prop.inject(&mut state, weights[k], signs[k]);
            }
            pi += 1;
        }
        while fi < fixed.len() && fixed[fi].0 == step {
            let (_, w, sign) = fixed[fi];
            prop.inject(&mut state, w, sign);
            fi += 1;
        }
        prop.advance(&mut state);
        let t = step as f64 * ctx.dt_ms;
        if t >= t0 && t < t1 {
            trace.push((t - t0, state.membrane_potential_mv));
        }
    }
    Ok(trace)
}

/// Seeded random teacher: per motor neuron, a uniform spike count in
/// `count_range` and uniform spike times over the cycle subject to a minimum
/// separation.
pub fn random_teacher(
    cycle_length_ms: f64,
    motor_neuron_count: usize,
    count_range: (usize, usize),
    min_separation_ms: f64,
    seed: u64,
) -> Result<TeacherPattern> {
    random_teacher_in(
        cycle_length_ms,
        &[(0.0, cycle_length_ms)],
        motor_neuron_count,
        count_range,
        min_separation_ms,
        seed,
    )
}

/// Like [`random_teacher`], but spike times are sampled only inside the given
/// windows (cycle-relative). A motor neuron can only be trained to fire at
/// instants that have presynaptic drive a few milliseconds beforehand; the
/// windows of [`crate::builder::CpgNetwork::supported_teacher_windows`]
/// describe that reachable support, which excludes short margins around phase
/// transitions where no PFN delivery can land.
pub fn random_teacher_in(
    cycle_length_ms: f64,
    windows: &[(f64, f64)],
    motor_neuron_count: usize,
    count_range: (usize, usize),
    min_separation_ms: f64,
    seed: u64,
) -> Result<TeacherPattern> {
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    if !(cycle_length_ms > 0.0) {
        return Err(CpgError::config("cycle length must be positive"));
    }
    let (lo, hi) = count_range;
    if lo > hi || hi == 0 {
        return Err(CpgError::config("spike count range must be non-empty"));
    }
    if min_separation_ms * hi as f64 > cycle_length_ms {
        return Err(CpgError::config(
            "cycle too short for the requested spike count and separation",
        ));
    }
    if windows.is_empty()
        || windows
            .iter()
            .any(|&(a, b)| !(0.0..=cycle_length_ms).contains(&a) || b <= a || b > cycle_length_ms)
    {
        return Err(CpgError::config(
            "teacher windows must be non-empty intervals inside [0, cycle]",
        ));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut spike_times_ms = Vec::with_capacity(motor_neuron_count);
    for _ in 0..motor_neuron_count {
        let count = rng.gen_range(lo..=hi);
        let mut times: Vec<f64> = Vec::with_capacity(count);
        let mut guard = 0;
        while times.len() < count {
            let t = rng.gen_range(0.0..cycle_length_ms);
            if windows.iter().all(|&(a, b)| t < a || t >= b) {
                guard += 1;
                if guard > 10_000 {
                    return Err(CpgError::config(
                        "could not place teacher spikes with the requested separation",
                    ));
                }
                continue;
            }
            if times.iter().all(|&u: &f64| (u - t).abs() >= min_separation_ms) {
                times.push(t);
            }
            guard += 1;
            if guard > 10_000 {
                return Err(CpgError::config(
                    "could not place teacher spikes with the requested separation",
                ));
            }
        }
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        spike_times_ms.push(times);
    }
    let pattern = TeacherPattern {
        cycle_length_ms,
        spike_times_ms,
    };
    pattern.validate()?;
    Ok(pattern)
}

/// Runs the full network once and scores the motor output against the
/// teacher; used to verify trained behavior end-to-end.
pub fn evaluate(net: &CpgNetwork, teacher: &TeacherPattern, tonic_f: f64) -> Result<(f64, Vec<Vec<f64>>)> {
    let ctx = prepare_replay(net, tonic_f)?;
    let (t0, t1) = ctx.window;
    let result = net.run_driven(tonic_f, 3.4 * net.nominal_cycle_ms(), table1::DEFAULT_DT_MS)?;
    let motor_trains: Vec<Vec<f64>> = net
        .motor
        .neuron_ids()
        .map(|id| {
            result
                .spikes_in_window(id, t0, t1)
                .iter()
                .map(|&t| t - t0)
                .collect()
        })
        .collect();
    Ok((spike_shift_error(&motor_trains, teacher), motor_trains))
}

/// Batch-per-epoch ReSuMe training. Runs one CPG cycle per epoch, aligns the
/// teacher to the measured cycle onset, accumulates deltas over the cycle and
/// applies them at cycle end. `tonic_frequencies` is cycled across epochs;
/// a single entry trains at a fixed frequency.
pub fn train(
    net: &mut CpgNetwork,
    teacher: &TeacherPattern,
    hp: &ResumeHyperparams,
    tonic_frequencies: &[f64],
) -> Result<TrainingReport> {
    hp.validate()?;
    teacher.validate()?;
    if tonic_frequencies.is_empty() {
        return Err(CpgError::config("at least one tonic frequency required"));
    }
    if teacher.spike_times_ms.len() != net.motor.count {
        return Err(CpgError::config(format!(
            "teacher defines {} motor neurons, pool has {}",
            teacher.spike_times_ms.len(),
            net.motor.count
        )));
    }
    let nominal = net.nominal_cycle_ms();
    if (teacher.cycle_length_ms - nominal).abs() > 0.10 * nominal {
        return Err(CpgError::config(format!(
            "teacher cycle {} ms deviates more than 10% from the CPG cycle {} ms",
            teacher.cycle_length_ms, nominal
        )));
    }

    // Everything upstream of the motor pool is weight-independent, so each
    // frequency's presynaptic activity is recorded once up front.
    let contexts: Vec<ReplayContext> = tonic_frequencies
        .iter()
        .map(|&f| prepare_replay(net, f))
        .collect::<Result<_>>()?;

    // Advanced copy of the teacher used only for the weight updates; see
    // `ResumeHyperparams::teacher_lead_ms`.
    let lead = TeacherPattern {
        cycle_length_ms: teacher.cycle_length_ms,
        spike_times_ms: teacher
            .spike_times_ms
            .iter()
            .map(|train| {
                let mut t: Vec<f64> = train
                    .iter()
                    .map(|&t| (t - hp.teacher_lead_ms).rem_euclid(teacher.cycle_length_ms))
                    .collect();
                t.sort_by(|a, b| a.partial_cmp(b).unwrap());
                t
            })
            .collect(),
    };

    let pool = net.motor.count;
    let mut error_series = Vec::new();
    let mut converged = false;
    // Per-motor restart bookkeeping: anneal age, best error seen since the
    // last restart, and restart count. See `restart_stall_epochs`.
    let mut birth = vec![0usize; pool];
    let mut best_err = vec![f64::INFINITY; pool];
    let mut best_at = vec![0usize; pool];
    let mut restarts = vec![0usize; pool];
    for epoch in 0..=hp.epochs {
        let ctx = &contexts[epoch % contexts.len()];
        let motor_trains = replay_motor(ctx, net)?;
        let error = spike_shift_error(&motor_trains, teacher);
        error_series.push(error);
        if error <= hp.target_error_ms {
            converged = true;
            break;
        }
        if epoch == hp.epochs {
            break;
        }
        if hp.restart_stall_epochs > 0 {
            for m in 0..pool {
                let e = per_neuron_error(&teacher.spike_times_ms[m], &motor_trains[m]);
                if e < best_err[m] - 0.01 {
                    best_err[m] = e;
                    best_at[m] = epoch;
                }
                let anchor = best_at[m].max(birth[m]);
                if e > hp.target_error_ms
                    && restarts[m] < hp.max_restarts_per_motor
                    && epoch - anchor >= hp.restart_stall_epochs
                {
                    reinit_motor_weights(net, m, restarts[m] as u64 + 1);
                    birth[m] = epoch;
                    best_err[m] = f64::INFINITY;
                    best_at[m] = epoch;
                    restarts[m] += 1;
                }
            }
        }
        let steps: Vec<f64> = (0..pool)
            .map(|m| hp.step_scale / (1.0 + (epoch - birth[m]) as f64 / hp.step_anneal))
            .collect();
        apply_updates(net, &lead, hp, &steps, &ctx.pre_trains, &motor_trains);
    }

    let final_weights = net
        .plastic_synapses
        .iter()
        .map(|&i| net.network.synapse(i).weight)
        .collect();
    Ok(TrainingReport {
        epochs_used: error_series.len(),
        error_series_ms: error_series,
        converged,
        final_weights,
    })
}

/// Per-neuron spike-shift error: same item accounting as
/// `spike_shift_error` restricted to a single motor neuron.
fn per_neuron_error(desired: &[f64], got: &[f64]) -> f64 {
    let cost = align_cost(desired, got);
    let items = desired.len()
        + got
            .iter()
            .filter(|&&t| {
                nearest_distance(desired, t)
                    .map(|d| d > MISS_WINDOW_MS)
                    .unwrap_or(true)
            })
            .count();
    if items == 0 {
        0.0
    } else {
        cost / items as f64
    }
}

/// Re-draws motor `m`'s incoming plastic weights from the build-time initial
/// distribution (excitatory U[1,5), inhibitory U[-25,-1)), deterministically
/// keyed on the network seed, the motor index, and the attempt number.
fn reinit_motor_weights(net: &mut CpgNetwork, m: usize, attempt: u64) {
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    let key = net
        .spec
        .seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add((m as u64) << 20)
        .wrapping_add(attempt);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(key);
    let target = net.motor.first_neuron + m;
    for &idx in &net.plastic_synapses.clone() {
        let syn = *net.network.synapse(idx);
        if syn.post_id != target {
            continue;
        }
        let w = match syn.sign_class {
            crate::lif::SignClass::Excitatory => rng.gen_range(1.0..5.0),
            crate::lif::SignClass::Inhibitory => rng.gen_range(-25.0..-1.0),
        };
        net.network.set_weight(idx, w);
    }
}

fn apply_updates(
    net: &mut CpgNetwork,
    teacher: &TeacherPattern,
    hp: &ResumeHyperparams,
    steps: &[f64],
    pre_trains: &[Vec<f64>],
    motor_trains: &[Vec<f64>],
) {
    let deltas = compute_deltas(net, teacher, hp, pre_trains, motor_trains);
    let motor_first = net.motor.first_neuron;
    for (&idx, delta) in net.plastic_synapses.iter().zip(&deltas) {
        let syn = *net.network.synapse(idx);
        let step = steps[syn.post_id - motor_first];
        // The inhibitory delta is expressed in the efficacy-magnitude domain
        // (flipped amplitudes), so it is subtracted from the signed weight:
        // a positive-magnitude change drives the weight toward -100, a
        // negative one toward 0.
        let signed_delta = step
            * match syn.sign_class {
                crate::lif::SignClass::Excitatory => *delta,
                crate::lif::SignClass::Inhibitory => -*delta,
            };
        let w = hp.clamp(syn.sign_class, syn.weight + signed_delta);
        net.network.set_weight(idx, w);
    }
}

fn compute_deltas(
    net: &CpgNetwork,
    teacher: &TeacherPattern,
    hp: &ResumeHyperparams,
    pre_trains: &[Vec<f64>],
    motor_trains: &[Vec<f64>],
) -> Vec<f64> {
    let motor_first = net.motor.first_neuron;
    let delta_of = |k: usize| -> f64 {
        let idx = net.plastic_synapses[k];
        let syn = net.network.synapse(idx);
        let motor_idx = syn.post_id - motor_first;
        resume_delta(
            &pre_trains[k],
            &teacher.spike_times_ms[motor_idx],
            &motor_trains[motor_idx],
            hp,
            syn.sign_class,
        )
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..net.plastic_synapses.len())
            .into_par_iter()
            .map(delta_of)
            .collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..net.plastic_synapses.len()).map(delta_of).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Independent oracle: plain double loop over all spike pairs.
    fn brute_force_delta(
        pre: &[f64],
        teacher: &[f64],
        post: &[f64],
        hp: &ResumeHyperparams,
        sign: SignClass,
    ) -> f64 {
        let pair = |events: &[f64], amp: f64, tau: f64| -> f64 {
            let mut total = 0.0;
            for &t in events {
                total += hp.a;
                for &tp in pre {
                    let s = t - tp;
                    if s > 0.0 && s <= hp.window_cutoff_ms {
                        total += amp * (-s / tau).exp();
                    }
                }
            }
            total
        };
        let d = pair(teacher, hp.a_d, hp.tau_d_ms) - pair(post, hp.a_l, hp.tau_l_ms);
        match sign {
            SignClass::Excitatory => d,
            SignClass::Inhibitory => -d,
        }
    }

    #[test]
    fn identical_teacher_and_post_gives_zero() {
        let hp = ResumeHyperparams::default();
        let pre = [2.0, 5.0, 9.5];
        let train = [3.0, 6.0, 10.0];
        let d = resume_delta(&pre, &train, &train, &hp, SignClass::Excitatory);
        assert_eq!(d, 0.0);
    }

    #[test]
    fn frozen_paper_hyperparameter_example() {
        let hp = ResumeHyperparams::default();
        // pre at 10 ms, teacher at 11 ms: 3 + 6*exp(-0.5)
        let expect = 3.0 + 6.0 * (-0.5f64).exp();
        let d = resume_delta(&[10.0], &[11.0], &[], &hp, SignClass::Excitatory);
        assert_abs_diff_eq!(d, expect, epsilon = 1e-12);
        assert_abs_diff_eq!(d, 6.639_183_958_275_801, epsilon = 1e-9);
        // anti-symmetric case: same spikes on the post side
        let d2 = resume_delta(&[10.0], &[], &[11.0], &hp, SignClass::Excitatory);
        assert_abs_diff_eq!(d2, -expect, epsilon = 1e-12);
    }

    #[test]
    fn cutoff_excludes_distant_pre_spikes() {
        let hp = ResumeHyperparams::default();
        // pre 5 ms before the teacher spike, cutoff 3 ms -> only the
        // non-Hebbian term remains
        let d = resume_delta(&[5.0], &[10.0], &[], &hp, SignClass::Excitatory);
        assert_abs_diff_eq!(d, hp.a, epsilon = 1e-12);
    }

    #[test]
    fn inhibitory_class_flips_sign() {
        let hp = ResumeHyperparams::default();
        let d_exc = resume_delta(&[10.0], &[11.0], &[14.0], &hp, SignClass::Excitatory);
        let d_inh = resume_delta(&[10.0], &[11.0], &[14.0], &hp, SignClass::Inhibitory);
        assert_abs_diff_eq!(d_inh, -d_exc, epsilon = 1e-15);
    }

    #[test]
    fn matches_brute_force_on_random_trains() {
        let hp = ResumeHyperparams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut random_train = |max_len: usize| -> Vec<f64> {
            let len = rng.gen_range(0..=max_len);
            let mut v: Vec<f64> = (0..len).map(|_| rng.gen_range(0.0..1000.0)).collect();
            v.sort_by(|a, b| a.partial_cmp(b).unwrap());
            v
        };
        for i in 0..1000 {
            let pre = random_train(50);
            let teacher = random_train(50);
            let post = random_train(50);
            let sign = if i % 2 == 0 {
                SignClass::Excitatory
            } else {
                SignClass::Inhibitory
            };
            let fast = resume_delta(&pre, &teacher, &post, &hp, sign);
            let slow = brute_force_delta(&pre, &teacher, &post, &hp, sign);
            assert_abs_diff_eq!(fast, slow, epsilon = 1e-12);
        }
    }

    #[test]
    fn shift_error_examples() {
        let teacher = TeacherPattern {
            cycle_length_ms: 100.0,
            spike_times_ms: vec![vec![10.0, 20.0]],
        };
        assert_eq!(
            spike_shift_error(&[vec![10.0, 20.0]], &teacher),
            0.0
        );
        assert_abs_diff_eq!(
            spike_shift_error(&[vec![11.0, 21.0]], &teacher),
            1.0,
            epsilon = 1e-12
        );
        // teacher {10, 20}, actual {12}: (|12-10| + miss_penalty)/2
        assert_abs_diff_eq!(
            spike_shift_error(&[vec![12.0]], &teacher),
            6.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn teacher_validation() {
        let too_close = TeacherPattern {
            cycle_length_ms: 100.0,
            spike_times_ms: vec![vec![10.0, 10.5]],
        };
        assert!(too_close.validate().is_err());
        let outside = TeacherPattern {
            cycle_length_ms: 100.0,
            spike_times_ms: vec![vec![120.0]],
        };
        assert!(outside.validate().is_err());
    }
}
