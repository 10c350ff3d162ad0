//! Population rate decoding of motor spikes into joint angles, teacher
//! encoding of target angles, and gait/rhythm metrics.

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CpgError, Result};
use crate::network::SimulationResult;
use crate::resume::TeacherPattern;

pub const DEFAULT_DECODE_WINDOW_MS: f64 = 50.0;

/// Assignment of motor neurons to joints. Neuron ids are global network ids;
/// the sets must be disjoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointMap {
    pub decode_window_ms: f64,
    pub joints: Vec<JointNeurons>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointNeurons {
    pub joint_id: usize,
    pub neuron_ids: Vec<usize>,
}

impl JointMap {
    pub fn validate(&self) -> Result<()> {
        if !(self.decode_window_ms > 0.0) {
            return Err(CpgError::config("decode window must be positive"));
        }
        let mut seen = std::collections::HashSet::new();
        for j in &self.joints {
            if j.neuron_ids.is_empty() {
                return Err(CpgError::config(format!(
                    "joint {} has no neurons",
                    j.joint_id
                )));
            }
            for &id in &j.neuron_ids {
                if !seen.insert(id) {
                    return Err(CpgError::config(format!(
                        "neuron {id} assigned to more than one joint"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn total_neurons(&self) -> usize {
        self.joints.iter().map(|j| j.neuron_ids.len()).sum()
    }

    /// Evenly partitioned map: `joint_count` joints of `per_joint` neurons
    /// starting at `first_neuron` (the motor pool base id).
    pub fn contiguous(
        joint_count: usize,
        per_joint: usize,
        first_neuron: usize,
        decode_window_ms: f64,
    ) -> Self {
        JointMap {
            decode_window_ms,
            joints: (0..joint_count)
                .map(|j| JointNeurons {
                    joint_id: j,
                    neuron_ids: (0..per_joint)
                        .map(|k| first_neuron + j * per_joint + k)
                        .collect(),
                })
                .collect(),
        }
    }
}

/// Per-joint angle time series; one sample per decode window.
#[derive(Debug, Clone, PartialEq)]
pub struct JointTrajectory {
    pub window_ms: f64,
    /// `angles[w][j]` = angle of joint j in window w, radians in [0, pi].
    pub window_starts_ms: Vec<f64>,
    pub angles_rad: Vec<Vec<f64>>,
}

/// Rate decoding: for each window, the angle of joint i is
/// `(n_i / N_i) * pi` where `n_i` counts the joint's neurons that spiked at
/// least once in the window (so the angle never exceeds pi).
pub fn decode_angles(spikes: &SimulationResult, map: &JointMap) -> Result<JointTrajectory> {
    map.validate()?;
    for j in &map.joints {
        for &id in &j.neuron_ids {
            if id >= spikes.spike_times_ms.len() {
                return Err(CpgError::config(format!(
                    "joint map references unknown neuron {id}"
                )));
            }
        }
    }
    let w = map.decode_window_ms;
    let n_windows = (spikes.total_duration_ms / w).floor() as usize;
    let mut window_starts = Vec::with_capacity(n_windows);
    let mut angles = Vec::with_capacity(n_windows);
    for wi in 0..n_windows {
        let start = wi as f64 * w;
        let end = start + w;
        let row: Vec<f64> = map
            .joints
            .iter()
            .map(|j| {
                let n_active = j
                    .neuron_ids
                    .iter()
                    .filter(|&&id| !spikes.spikes_in_window(id, start, end).is_empty())
                    .count();
                n_active as f64 / j.neuron_ids.len() as f64 * std::f64::consts::PI
            })
            .collect();
        window_starts.push(start);
        angles.push(row);
    }
    Ok(JointTrajectory {
        window_ms: w,
        window_starts_ms: window_starts,
        angles_rad: angles,
    })
}

/// Inverse of the decoder: per window and joint, picks
/// `n_i = round(theta * N_i / pi)` distinct neurons uniformly at random and
/// gives each one teacher spike at the window midpoint.
///
/// `angles[w][j]` indexes windows then joints; neuron ids in the produced
/// pattern are relative to the motor pool (global id minus `pool_first`).
pub fn encode_target(
    angles: &[Vec<f64>],
    map: &JointMap,
    pool_first: usize,
    pool_size: usize,
    seed: u64,
) -> Result<TeacherPattern> {
    map.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cycle = angles.len() as f64 * map.decode_window_ms;
    let mut trains: Vec<Vec<f64>> = vec![Vec::new(); pool_size];
    for (wi, row) in angles.iter().enumerate() {
        if row.len() != map.joints.len() {
            return Err(CpgError::config("angle row arity mismatch with joint map"));
        }
        let midpoint = (wi as f64 + 0.5) * map.decode_window_ms;
        for (joint, &theta) in map.joints.iter().zip(row.iter()) {
            if !(0.0..=std::f64::consts::PI).contains(&theta) {
                return Err(CpgError::config(format!(
                    "angle {theta} outside [0, pi] for joint {}",
                    joint.joint_id
                )));
            }
            let n = (theta * joint.neuron_ids.len() as f64 / std::f64::consts::PI).round() as usize;
            let mut chosen = joint.neuron_ids.clone();
            chosen.shuffle(&mut rng);
            chosen.truncate(n);
            for id in chosen {
                let local = id
                    .checked_sub(pool_first)
                    .filter(|&l| l < pool_size)
                    .ok_or_else(|| {
                        CpgError::config(format!("joint neuron {id} outside the motor pool"))
                    })?;
                trains[local].push(midpoint);
            }
        }
    }
    for t in &mut trains {
        t.sort_by(|a, b| a.partial_cmp(b).unwrap());
    }
    Ok(TeacherPattern {
        cycle_length_ms: cycle,
        spike_times_ms: trains,
    })
}

/// Rhythm metrics over a recording with at least two completed cycles.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CycleMetrics {
    pub cycle_period_ms: f64,
    pub cycle_onsets_ms: Vec<f64>,
    /// Mean measured duration of each phase across complete cycles.
    pub phase_durations_ms: Vec<f64>,
    /// Spearman rank correlation of motor first-spike orderings between
    /// consecutive cycles (mean over cycle pairs); NaN when undefined.
    pub pattern_similarity: f64,
}

pub fn cycle_metrics(
    spikes: &SimulationResult,
    cycle_onsets: &[f64],
    phase_onsets: &[Vec<f64>],
    motor_ids: std::ops::Range<usize>,
) -> Result<CycleMetrics> {
    if cycle_onsets.len() < 3 {
        return Err(CpgError::InsufficientData(
            "need at least 2 completed cycles".into(),
        ));
    }
    let periods: Vec<f64> = cycle_onsets.windows(2).map(|w| w[1] - w[0]).collect();
    let cycle_period = periods.iter().sum::<f64>() / periods.len() as f64;

    // Phase m duration within a cycle: next phase onset minus this phase onset.
    let n_phases = phase_onsets.len();
    let mut durations = vec![Vec::new(); n_phases];
    for c in 0..cycle_onsets.len() - 1 {
        let (t0, t1) = (cycle_onsets[c], cycle_onsets[c + 1]);
        let mut onset_in_cycle: Vec<Option<f64>> = vec![None; n_phases];
        for (m, ons) in phase_onsets.iter().enumerate() {
            onset_in_cycle[m] = ons.iter().copied().find(|&t| t >= t0 - 1e-9 && t < t1);
        }
        for m in 0..n_phases {
            if let Some(start) = onset_in_cycle[m] {
                let end = if m + 1 < n_phases {
                    onset_in_cycle[m + 1]
                } else {
                    Some(t1)
                };
                if let Some(end) = end {
                    if end > start {
                        durations[m].push(end - start);
                    }
                }
            }
        }
    }
    let phase_durations: Vec<f64> = durations
        .iter()
        .map(|d| {
            if d.is_empty() {
                f64::NAN
            } else {
                d.iter().sum::<f64>() / d.len() as f64
            }
        })
        .collect();

    // Similarity of within-cycle motor spike order between consecutive cycles.
    let mut sims = Vec::new();
    for c in 0..cycle_onsets.len() - 2 {
        let a = first_spike_order(spikes, motor_ids.clone(), cycle_onsets[c], cycle_onsets[c + 1]);
        let b = first_spike_order(
            spikes,
            motor_ids.clone(),
            cycle_onsets[c + 1],
            cycle_onsets[c + 2],
        );
        if let Some(s) = spike_order_correlation(&a, &b) {
            sims.push(s);
        }
    }
    let similarity = if sims.is_empty() {
        f64::NAN
    } else {
        sims.iter().sum::<f64>() / sims.len() as f64
    };

    Ok(CycleMetrics {
        cycle_period_ms: cycle_period,
        cycle_onsets_ms: cycle_onsets.to_vec(),
        phase_durations_ms: phase_durations,
        pattern_similarity: similarity,
    })
}

/// Per-neuron first spike time (cycle-relative) within [start, end).
pub fn first_spike_order(
    spikes: &SimulationResult,
    ids: std::ops::Range<usize>,
    start_ms: f64,
    end_ms: f64,
) -> Vec<(usize, f64)> {
    ids.filter_map(|id| {
        spikes
            .spikes_in_window(id, start_ms, end_ms)
            .first()
            .map(|&t| (id, t - start_ms))
    })
    .collect()
}

/// Spearman rank correlation between two first-spike orderings, computed over
/// the neurons present in both. `None` when fewer than 3 are shared.
pub fn spike_order_correlation(a: &[(usize, f64)], b: &[(usize, f64)]) -> Option<f64> {
    let bm: std::collections::HashMap<usize, f64> = b.iter().copied().collect();
    let common: Vec<(f64, f64)> = a
        .iter()
        .filter_map(|&(id, ta)| bm.get(&id).map(|&tb| (ta, tb)))
        .collect();
    if common.len() < 3 {
        return None;
    }
    let xs: Vec<f64> = common.iter().map(|c| c.0).collect();
    let ys: Vec<f64> = common.iter().map(|c| c.1).collect();
    let rx = ranks(&xs);
    let ry = ranks(&ys);
    pearson(&rx, &ry)
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap());
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let mean_rank = (i + j) as f64 / 2.0;
        for k in i..=j {
            out[idx[k]] = mean_rank;
        }
        i = j + 1;
    }
    out
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (a, b) in x.iter().zip(y) {
        cov += (a - mx) * (b - my);
        vx += (a - mx).powi(2);
        vy += (b - my).powi(2);
    }
    if vx == 0.0 || vy == 0.0 {
        return None;
    }
    Some(cov / (vx * vy).sqrt())
}

/// Dynamic-time-warping distance between two angle trajectories after
/// resampling both onto `samples` normalized-time points; returned as mean
/// cost per alignment step.
pub fn dtw_distance_normalized(a: &JointTrajectory, b: &JointTrajectory, samples: usize) -> f64 {
    let ra = resample(a, samples);
    let rb = resample(b, samples);
    let n = ra.len();
    let m = rb.len();
    if n == 0 || m == 0 {
        return f64::NAN;
    }
    let cost = |x: &Vec<f64>, y: &Vec<f64>| -> f64 {
        x.iter()
            .zip(y)
            .map(|(p, q)| (p - q).abs())
            .sum::<f64>()
            / x.len().max(1) as f64
    };
    let mut dp = vec![vec![f64::INFINITY; m + 1]; n + 1];
    dp[0][0] = 0.0;
    for i in 1..=n {
        for j in 1..=m {
            let c = cost(&ra[i - 1], &rb[j - 1]);
            dp[i][j] = c + dp[i - 1][j - 1].min(dp[i - 1][j]).min(dp[i][j - 1]);
        }
    }
    dp[n][m] / (n + m) as f64 * 2.0
}

fn resample(t: &JointTrajectory, samples: usize) -> Vec<Vec<f64>> {
    let n = t.angles_rad.len();
    if n == 0 {
        return Vec::new();
    }
    (0..samples)
        .map(|s| {
            let pos = s as f64 / samples as f64 * n as f64;
            let i = (pos.floor() as usize).min(n - 1);
            t.angles_rad[i].clone()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn sim_from(trains: Vec<Vec<f64>>, duration: f64) -> SimulationResult {
        SimulationResult {
            spike_times_ms: trains,
            total_duration_ms: duration,
            dt_ms: 0.1,
            seed: 0,
        }
    }

    fn one_joint_map(n: usize) -> JointMap {
        JointMap::contiguous(1, n, 0, 50.0)
    }

    #[test]
    fn full_silent_and_partial_windows() {
        let map = one_joint_map(25);
        // all 25 neurons spike in the first window
        let all: Vec<Vec<f64>> = (0..25).map(|_| vec![10.0]).collect();
        let traj = decode_angles(&sim_from(all, 50.0), &map).unwrap();
        assert_abs_diff_eq!(traj.angles_rad[0][0], PI, epsilon = 1e-12);

        let silent: Vec<Vec<f64>> = vec![Vec::new(); 25];
        let traj = decode_angles(&sim_from(silent, 50.0), &map).unwrap();
        assert_eq!(traj.angles_rad[0][0], 0.0);

        let mut twelve: Vec<Vec<f64>> = vec![Vec::new(); 25];
        for t in twelve.iter_mut().take(12) {
            *t = vec![5.0, 7.0]; // repeats of one neuron count once
        }
        let traj = decode_angles(&sim_from(twelve, 50.0), &map).unwrap();
        assert_abs_diff_eq!(traj.angles_rad[0][0], 12.0 * PI / 25.0, epsilon = 1e-12);
    }

    #[test]
    fn encode_edge_cases() {
        let map = one_joint_map(25);
        let full = encode_target(&[vec![PI]], &map, 0, 25, 1).unwrap();
        assert_eq!(full.total_spikes(), 25);
        let none = encode_target(&[vec![0.0]], &map, 0, 25, 1).unwrap();
        assert_eq!(none.total_spikes(), 0);
        assert!(encode_target(&[vec![3.5]], &map, 0, 25, 1).is_err());
    }

    #[test]
    fn encode_decode_round_trip_within_quantization() {
        let map = JointMap::contiguous(4, 25, 0, 50.0);
        let n_windows = 8;
        let angles: Vec<Vec<f64>> = (0..n_windows)
            .map(|w| {
                (0..4)
                    .map(|j| ((w * 7 + j * 3) % 26) as f64 / 25.0 * PI)
                    .collect()
            })
            .collect();
        let teacher = encode_target(&angles, &map, 0, 100, 9).unwrap();
        // perfect replay of the teacher spikes
        let sim = sim_from(teacher.spike_times_ms.clone(), teacher.cycle_length_ms);
        let traj = decode_angles(&sim, &map).unwrap();
        for (w, row) in angles.iter().enumerate() {
            for (j, &theta) in row.iter().enumerate() {
                let got = traj.angles_rad[w][j];
                assert!(
                    (got - theta).abs() <= PI / (2.0 * 25.0) + 1e-12,
                    "window {w} joint {j}: {got} vs {theta}"
                );
                assert!((0.0..=PI + 1e-12).contains(&got));
            }
        }
    }

    #[test]
    fn monotone_in_active_neurons() {
        let map = one_joint_map(10);
        let mut trains: Vec<Vec<f64>> = vec![Vec::new(); 10];
        let mut last = -1.0;
        for k in 0..10 {
            trains[k] = vec![1.0];
            let traj = decode_angles(&sim_from(trains.clone(), 50.0), &map).unwrap();
            assert!(traj.angles_rad[0][0] > last);
            last = traj.angles_rad[0][0];
        }
    }

    #[test]
    fn synthetic_periodic_cycle_metrics() {
        let onsets: Vec<f64> = (0..6).map(|c| c as f64 * 1000.0).collect();
        let phase_onsets = vec![onsets.clone(), onsets.iter().map(|t| t + 500.0).collect()];
        // 5 motor neurons firing in a fixed order each cycle
        let trains: Vec<Vec<f64>> = (0..5)
            .map(|i| (0..5).map(|c| c as f64 * 1000.0 + 100.0 + i as f64 * 50.0).collect())
            .collect();
        let sim = sim_from(trains, 6000.0);
        let m = cycle_metrics(&sim, &onsets, &phase_onsets, 0..5).unwrap();
        assert_abs_diff_eq!(m.cycle_period_ms, 1000.0, epsilon = 1e-9);
        assert_abs_diff_eq!(m.phase_durations_ms[0], 500.0, epsilon = 1e-9);
        assert_abs_diff_eq!(m.pattern_similarity, 1.0, epsilon = 1e-12);
        assert!(cycle_metrics(&sim, &onsets[..2], &phase_onsets, 0..5).is_err());
    }

    #[test]
    fn rank_correlation_detects_reversal() {
        let a: Vec<(usize, f64)> = (0..10).map(|i| (i, i as f64)).collect();
        let b: Vec<(usize, f64)> = (0..10).map(|i| (i, -(i as f64))).collect();
        assert_abs_diff_eq!(spike_order_correlation(&a, &a).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(spike_order_correlation(&a, &b).unwrap(), -1.0, epsilon = 1e-12);
    }
}
