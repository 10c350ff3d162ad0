//! On-disk formats: TOML for configuration-like inputs, CSV for simulation
//! outputs, and a line-based snapshot for whole networks.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::builder::{CpgSpec, FixedWeights};
use crate::decode::{JointMap, JointTrajectory};
use crate::error::{CpgError, Result};
use crate::lif::{NeuronParams, SignClass};
use crate::network::{Network, PopulationHandle, Role, SimulationResult, SynapseSpec};
use crate::resume::{TeacherPattern, TrainingReport};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let digest = h.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        let _ = write!(out, "{b:02x}");
    }
    out
}

// ---- TOML configs ----------------------------------------------------------

pub fn spec_from_toml(text: &str) -> Result<CpgSpec> {
    let spec: CpgSpec = toml::from_str(text)
        .map_err(|e| CpgError::config(format!("bad CPG spec: {e}")))?;
    spec.validate()?;
    Ok(spec)
}

pub fn spec_to_toml(spec: &CpgSpec) -> Result<String> {
    toml::to_string_pretty(spec).map_err(|e| CpgError::config(e.to_string()))
}

#[derive(Serialize, Deserialize)]
struct TeacherToml {
    cycle_length_ms: f64,
    /// One entry per motor neuron: its teacher spike times within the cycle.
    neurons: Vec<Vec<f64>>,
}

pub fn teacher_from_toml(text: &str) -> Result<TeacherPattern> {
    let t: TeacherToml = toml::from_str(text)
        .map_err(|e| CpgError::config(format!("bad teacher pattern: {e}")))?;
    let pattern = TeacherPattern {
        cycle_length_ms: t.cycle_length_ms,
        spike_times_ms: t.neurons,
    };
    pattern.validate()?;
    Ok(pattern)
}

pub fn teacher_to_toml(p: &TeacherPattern) -> Result<String> {
    toml::to_string_pretty(&TeacherToml {
        cycle_length_ms: p.cycle_length_ms,
        neurons: p.spike_times_ms.clone(),
    })
    .map_err(|e| CpgError::config(e.to_string()))
}

pub fn joint_map_from_toml(text: &str) -> Result<JointMap> {
    let map: JointMap = toml::from_str(text)
        .map_err(|e| CpgError::config(format!("bad joint map: {e}")))?;
    map.validate()?;
    Ok(map)
}

pub fn joint_map_to_toml(map: &JointMap) -> Result<String> {
    toml::to_string_pretty(map).map_err(|e| CpgError::config(e.to_string()))
}

// ---- Spike CSV -------------------------------------------------------------

/// `neuron_id,time_ms` rows sorted by time then id, preceded by a comment
/// header recording provenance.
pub fn spikes_to_csv(result: &SimulationResult, input_digest: &str) -> String {
    let mut rows: Vec<(usize, f64)> = Vec::new();
    for (id, times) in result.spike_times_ms.iter().enumerate() {
        for &t in times {
            rows.push((id, t));
        }
    }
    rows.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
    let mut out = format!(
        "# cpg-cli {TOOL_VERSION} seed={} dt_ms={} duration_ms={} input_sha256={}\nneuron_id,time_ms\n",
        result.seed, result.dt_ms, result.total_duration_ms, input_digest
    );
    for (id, t) in rows {
        let _ = writeln!(out, "{id},{t:.4}");
    }
    out
}

pub fn spikes_from_csv(text: &str) -> Result<SimulationResult> {
    let mut seed = 0u64;
    let mut dt_ms = crate::table1::DEFAULT_DT_MS;
    let mut duration = 0.0f64;
    let mut rows: Vec<(usize, f64)> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('#') {
            for token in line.trim_start_matches('#').split_whitespace() {
                if let Some((k, v)) = token.split_once('=') {
                    match k {
                        "seed" => seed = v.parse().unwrap_or(0),
                        "dt_ms" => dt_ms = v.parse().unwrap_or(dt_ms),
                        "duration_ms" => duration = v.parse().unwrap_or(0.0),
                        _ => {}
                    }
                }
            }
            continue;
        }
        if line == "neuron_id,time_ms" {
            continue;
        }
        let mut parts = line.split(',');
        let parse_err = |reason: &str| CpgError::Parse {
            file: "<spikes.csv>".into(),
            line: lineno + 1,
            reason: reason.into(),
        };
        let id: usize = parts
            .next()
            .ok_or_else(|| parse_err("missing neuron_id"))?
            .trim()
            .parse()
            .map_err(|_| parse_err("neuron_id is not an integer"))?;
        let t: f64 = parts
            .next()
            .ok_or_else(|| parse_err("missing time_ms"))?
            .trim()
            .parse()
            .map_err(|_| parse_err("time_ms is not a number"))?;
        rows.push((id, t));
    }
    let n = rows.iter().map(|&(id, _)| id + 1).max().unwrap_or(0);
    let mut spike_times_ms = vec![Vec::new(); n];
    for (id, t) in rows {
        duration = duration.max(t);
        spike_times_ms[id].push(t);
    }
    for times in &mut spike_times_ms {
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    }
    Ok(SimulationResult {
        spike_times_ms,
        total_duration_ms: duration,
        dt_ms,
        seed,
    })
}

// ---- Trajectory CSV --------------------------------------------------------

pub fn trajectory_to_csv(tr: &JointTrajectory) -> String {
    let mut out = String::from("window_start_ms,joint_id,angle_rad\n");
    for (w, &start) in tr.window_starts_ms.iter().enumerate() {
        for (j, &angle) in tr.angles_rad[w].iter().enumerate() {
            let _ = writeln!(out, "{start:.4},{j},{angle:.6}");
        }
    }
    out
}

pub fn trajectory_from_csv(text: &str) -> Result<JointTrajectory> {
    let mut rows: Vec<(f64, usize, f64)> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line == "window_start_ms,joint_id,angle_rad"
        {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        let parse_err = |reason: String| CpgError::Parse {
            file: "<trajectory.csv>".into(),
            line: lineno + 1,
            reason,
        };
        if parts.len() != 3 {
            return Err(parse_err("expected 3 comma-separated fields".into()));
        }
        let start: f64 = parts[0].trim().parse().map_err(|e| parse_err(format!("{e}")))?;
        let joint: usize = parts[1].trim().parse().map_err(|e| parse_err(format!("{e}")))?;
        let angle: f64 = parts[2].trim().parse().map_err(|e| parse_err(format!("{e}")))?;
        rows.push((start, joint, angle));
    }
    if rows.is_empty() {
        return Err(CpgError::InsufficientData("empty trajectory file".into()));
    }
    let mut starts: Vec<f64> = rows.iter().map(|r| r.0).collect();
    starts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    starts.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    let n_joints = rows.iter().map(|r| r.1 + 1).max().unwrap();
    let window_ms = if starts.len() > 1 {
        starts[1] - starts[0]
    } else {
        crate::decode::DEFAULT_DECODE_WINDOW_MS
    };
    let mut angles = vec![vec![f64::NAN; n_joints]; starts.len()];
    for (start, joint, angle) in rows {
        let w = starts
            .iter()
            .position(|&s| (s - start).abs() < 1e-9)
            .expect("start present");
        angles[w][joint] = angle;
    }
    Ok(JointTrajectory {
        window_ms,
        window_starts_ms: starts,
        angles_rad: angles,
    })
}

// ---- Network snapshot ------------------------------------------------------

/// Line-based snapshot holding everything needed to reconstruct a trained
/// network exactly: spec, calibrated weights, per-neuron parameters,
/// populations, and every synapse.
pub fn snapshot_to_string(
    spec: &CpgSpec,
    weights: &FixedWeights,
    net: &Network,
    plastic: &[usize],
    pfn_inhibitory: &[Vec<bool>],
) -> Result<String> {
    let mut out = String::new();
    let _ = writeln!(out, "cpg-snapshot v1");
    let spec_json =
        toml_line(spec).map_err(|e| CpgError::config(format!("spec encode: {e}")))?;
    let weights_json =
        toml_line(weights).map_err(|e| CpgError::config(format!("weights encode: {e}")))?;
    let _ = writeln!(out, "spec {spec_json}");
    let _ = writeln!(out, "weights {weights_json}");
    for flags in pfn_inhibitory {
        let bits: String = flags.iter().map(|&b| if b { '1' } else { '0' }).collect();
        let _ = writeln!(out, "pfn_inhibitory {bits}");
    }
    for p in net.populations() {
        let _ = writeln!(
            out,
            "population {} {} {} {}",
            p.population_id,
            p.first_neuron,
            p.count,
            p.role.as_str()
        );
    }
    for id in 0..net.neuron_count() {
        let p = net.neuron_params(id);
        let _ = writeln!(
            out,
            "neuron {id} {} {} {} {} {} {} {} {} {}",
            p.external_current_pa,
            p.resting_potential_mv,
            p.membrane_capacity_pf,
            p.membrane_time_constant_ms,
            p.spike_threshold_mv,
            p.reset_potential_mv,
            p.refractory_period_ms,
            p.syn_time_constant_excitatory_ms,
            p.syn_time_constant_inhibitory_ms,
        );
    }
    for (idx, s) in net.synapses().iter().enumerate() {
        let plastic_flag = if plastic.contains(&idx) { 1 } else { 0 };
        let sign = match s.sign_class {
            SignClass::Excitatory => "exc",
            SignClass::Inhibitory => "inh",
        };
        let _ = writeln!(
            out,
            "synapse {} {} {} {sign} {plastic_flag} {}",
            s.pre_id, s.post_id, s.weight, s.delay_ms
        );
    }
    Ok(out)
}

// The spec and weight records are stored as TOML flattened onto one line
// (newlines swapped for the unit-separator control char) so the snapshot
// stays line-oriented.
fn toml_line<T: Serialize>(value: &T) -> std::result::Result<String, toml::ser::Error> {
    let s = toml::to_string(value)?;
    Ok(s.replace('\n', "\u{1f}"))
}

fn toml_unline<T: serde::de::DeserializeOwned>(s: &str) -> Result<T> {
    let restored: String = s.replace('\u{1f}', "\n");
    toml::from_str(&restored).map_err(|e| CpgError::config(format!("snapshot field: {e}")))
}

pub struct Snapshot {
    pub spec: CpgSpec,
    pub weights: FixedWeights,
    pub network: Network,
    pub plastic_synapses: Vec<usize>,
    pub pfn_inhibitory: Vec<Vec<bool>>,
}

pub fn snapshot_from_string(text: &str) -> Result<Snapshot> {
    let mut lines = text.lines().enumerate();
    let header = lines.next().map(|(_, l)| l).unwrap_or_default();
    if header.trim() != "cpg-snapshot v1" {
        return Err(CpgError::Parse {
            file: "<snapshot>".into(),
            line: 1,
            reason: "missing `cpg-snapshot v1` header".into(),
        });
    }
    let mut spec: Option<CpgSpec> = None;
    let mut weights: Option<FixedWeights> = None;
    let mut pfn_inhibitory: Vec<Vec<bool>> = Vec::new();
    let mut populations: Vec<PopulationHandle> = Vec::new();
    let mut neurons: Vec<(usize, NeuronParams)> = Vec::new();
    let mut synapses: Vec<(SynapseSpec, bool)> = Vec::new();

    for (lineno, raw) in lines {
        let line = raw.trim_end();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |reason: String| CpgError::Parse {
            file: "<snapshot>".into(),
            line: lineno + 1,
            reason,
        };
        let (kind, rest) = line.split_once(' ').unwrap_or((line, ""));
        match kind {
            "spec" => spec = Some(toml_unline(rest)?),
            "weights" => weights = Some(toml_unline(rest)?),
            "pfn_inhibitory" => {
                pfn_inhibitory.push(rest.chars().map(|c| c == '1').collect());
            }
            "population" => {
                let f: Vec<&str> = rest.split_whitespace().collect();
                if f.len() != 4 {
                    return Err(err("population line needs 4 fields".into()));
                }
                populations.push(PopulationHandle {
                    population_id: f[0].parse().map_err(|e| err(format!("{e}")))?,
                    first_neuron: f[1].parse().map_err(|e| err(format!("{e}")))?,
                    count: f[2].parse().map_err(|e| err(format!("{e}")))?,
                    role: Role::parse(f[3]).ok_or_else(|| err(format!("unknown role {}", f[3])))?,
                });
            }
            "neuron" => {
                let f: Vec<f64> = rest
                    .split_whitespace()
                    .map(|x| x.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| err(format!("{e}")))?;
                if f.len() != 10 {
                    return Err(err("neuron line needs 10 fields".into()));
                }
                neurons.push((
                    f[0] as usize,
                    NeuronParams {
                        external_current_pa: f[1],
                        resting_potential_mv: f[2],
                        membrane_capacity_pf: f[3],
                        membrane_time_constant_ms: f[4],
                        spike_threshold_mv: f[5],
                        reset_potential_mv: f[6],
                        refractory_period_ms: f[7],
                        syn_time_constant_excitatory_ms: f[8],
                        syn_time_constant_inhibitory_ms: f[9],
                    },
                ));
            }
            "synapse" => {
                let f: Vec<&str> = rest.split_whitespace().collect();
                if f.len() != 6 {
                    return Err(err("synapse line needs 6 fields".into()));
                }
                let sign = match f[3] {
                    "exc" => SignClass::Excitatory,
                    "inh" => SignClass::Inhibitory,
                    other => return Err(err(format!("unknown sign class {other}"))),
                };
                synapses.push((
                    SynapseSpec {
                        pre_id: f[0].parse().map_err(|e| err(format!("{e}")))?,
                        post_id: f[1].parse().map_err(|e| err(format!("{e}")))?,
                        weight: f[2].parse().map_err(|e| err(format!("{e}")))?,
                        sign_class: sign,
                        plastic: f[4] == "1",
                        delay_ms: f[5].parse().map_err(|e| err(format!("{e}")))?,
                    },
                    f[4] == "1",
                ));
            }
            other => return Err(err(format!("unknown record kind {other}"))),
        }
    }

    let spec = spec.ok_or_else(|| CpgError::config("snapshot missing spec record"))?;
    let weights = weights.ok_or_else(|| CpgError::config("snapshot missing weights record"))?;

    neurons.sort_by_key(|(id, _)| *id);
    let mut network = Network::new();
    for p in &populations {
        let params: Vec<NeuronParams> = neurons[p.first_neuron..p.first_neuron + p.count]
            .iter()
            .map(|(_, np)| *np)
            .collect();
        network.add_population_from(params, p.role)?;
    }
    let mut plastic = Vec::new();
    for (s, is_plastic) in synapses {
        let idx = network.add_synapse(s.pre_id, s.post_id, s.weight, s.sign_class, s.plastic, s.delay_ms)?;
        if is_plastic {
            plastic.push(idx);
        }
    }
    Ok(Snapshot {
        spec,
        weights,
        network,
        plastic_synapses: plastic,
        pfn_inhibitory,
    })
}

/// Rebuilds a `CpgNetwork` from a snapshot by reconstructing the handle
/// structure from the population table.
pub fn snapshot_to_cpg(snapshot: Snapshot) -> Result<crate::builder::CpgNetwork> {
    use crate::builder::PhaseHandles;
    let pops = snapshot.network.populations().to_vec();
    let tonic = pops
        .iter()
        .find(|p| p.role == Role::TonicSource)
        .copied()
        .ok_or_else(|| CpgError::config("snapshot has no tonic source"))?;
    let motor = pops
        .iter()
        .find(|p| p.role == Role::Motor)
        .copied()
        .ok_or_else(|| CpgError::config("snapshot has no motor pool"))?;
    let mut phases = Vec::new();
    let mut i = 0;
    while i + 4 < pops.len() {
        if pops[i].role == Role::NpgH {
            phases.push(PhaseHandles {
                h: pops[i],
                q: pops[i + 1],
                t_chain: pops[i + 2],
                pfn: pops[i + 3],
                inhibiting: pops[i + 4],
            });
            i += 5;
        } else {
            i += 1;
        }
    }
    if phases.len() != snapshot.spec.phases.len() {
        return Err(CpgError::config("snapshot population table does not match spec"));
    }
    Ok(crate::builder::CpgNetwork {
        spec: snapshot.spec,
        network: snapshot.network,
        phases,
        motor,
        tonic,
        plastic_synapses: snapshot.plastic_synapses,
        pfn_inhibitory: snapshot.pfn_inhibitory,
        weights: snapshot.weights,
    })
}

// ---- Training report -------------------------------------------------------

pub fn report_to_toml(report: &TrainingReport) -> Result<String> {
    toml::to_string_pretty(report).map_err(|e| CpgError::config(e.to_string()))
}

pub fn report_from_toml(text: &str) -> Result<TrainingReport> {
    toml::from_str(text).map_err(|e| CpgError::config(format!("bad training report: {e}")))
}

// ---- Helpers ---------------------------------------------------------------

pub fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(CpgError::from)
}

pub fn write_string(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, contents).map_err(CpgError::from)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builder::{CpgSpec, PhaseSpec};

    fn tiny_spec() -> CpgSpec {
        CpgSpec {
            phases: vec![
                PhaseSpec {
                    duration_ms: 300.0,
                    pfn_size: 50,
                    t_neuron_count: None,
                },
                PhaseSpec {
                    duration_ms: 300.0,
                    pfn_size: 50,
                    t_neuron_count: None,
                },
            ],
            motor_neuron_count: 5,
            tonic_frequency_default: 250.0,
            seed: 7,
        }
    }

    #[test]
    fn spec_toml_round_trip() {
        let spec = tiny_spec();
        let text = spec_to_toml(&spec).unwrap();
        let back = spec_from_toml(&text).unwrap();
        assert_eq!(spec, back);
    }

    #[test]
    fn spec_toml_rejects_invalid() {
        let err = spec_from_toml("motor_neuron_count = 5\ntonic_frequency_default = 250.0\nseed = 1\nphases = []\n");
        assert!(err.is_err());
    }

    #[test]
    fn teacher_toml_round_trip() {
        let t = TeacherPattern {
            cycle_length_ms: 100.0,
            spike_times_ms: vec![vec![10.0, 40.0], vec![], vec![55.5]],
        };
        let text = teacher_to_toml(&t).unwrap();
        let back = teacher_from_toml(&text).unwrap();
        assert_eq!(t.cycle_length_ms, back.cycle_length_ms);
        assert_eq!(t.spike_times_ms, back.spike_times_ms);
    }

    #[test]
    fn spikes_csv_round_trip_sorted() {
        let result = SimulationResult {
            spike_times_ms: vec![vec![5.0, 1.0], vec![2.5], vec![]],
            total_duration_ms: 10.0,
            dt_ms: 0.1,
            seed: 42,
        };
        let csv = spikes_to_csv(&result, "deadbeef");
        let lines: Vec<&str> = csv.lines().collect();
        assert!(lines[0].starts_with('#'));
        assert_eq!(lines[1], "neuron_id,time_ms");
        assert_eq!(lines[2], "0,1.0000");
        assert_eq!(lines[3], "1,2.5000");
        assert_eq!(lines[4], "0,5.0000");
        let back = spikes_from_csv(&csv).unwrap();
        assert_eq!(back.seed, 42);
        assert_eq!(back.spike_times_ms[0], vec![1.0, 5.0]);
        assert_eq!(back.spike_times_ms[1], vec![2.5]);
    }

    #[test]
    fn spikes_csv_rejects_garbage() {
        let err = spikes_from_csv("neuron_id,time_ms\nfoo,bar\n");
        match err {
            Err(CpgError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn trajectory_csv_round_trip() {
        // angles_rad is [window][joint]; use 2 windows of 3 joints so a
        // transposed codec cannot round-trip by accident.
        let tr = JointTrajectory {
            window_ms: 50.0,
            window_starts_ms: vec![0.0, 50.0],
            angles_rad: vec![vec![0.1, 1.5, 0.7], vec![0.2, 1.4, 0.9]],
        };
        let csv = trajectory_to_csv(&tr);
        let back = trajectory_from_csv(&csv).unwrap();
        assert_eq!(back.window_starts_ms, tr.window_starts_ms);
        for w in 0..2 {
            for j in 0..3 {
                assert!((back.angles_rad[w][j] - tr.angles_rad[w][j]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn sha256_known_value() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
