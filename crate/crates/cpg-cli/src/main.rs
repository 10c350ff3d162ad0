//! Command-line pipeline for the spiking CPG: build and calibrate a network,
//! train its motor projection on teacher spike patterns, run it, modulate its
//! speed, and decode joint trajectories. All artifacts are plain text
//! (CSV / TOML / line-oriented snapshot); equal inputs and seeds produce
//! byte-identical files.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cpg_core::builder::CpgNetwork;
use cpg_core::formats::{self, TOOL_VERSION};
use cpg_core::{decode, resume, CpgError, JointMap, Result, TeacherPattern, TonicSource};

#[derive(Parser)]
#[command(name = "cpg", version, about = "Spiking central pattern generator pipeline")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct Common {
    /// Seed recorded in output headers and used where a command draws
    /// random quantities itself.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Simulation step (ms).
    #[arg(long, default_value_t = cpg_core::table1::DEFAULT_DT_MS)]
    dt_ms: f64,
    /// Output directory. Precedence: this flag, then a config file value,
    /// then the CPG_OUT_DIR environment variable, then the current directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build and calibrate a network from a CPG spec file; writes the
    /// snapshot and a calibration report.
    Build {
        /// CPG spec (TOML).
        #[arg(long)]
        spec: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Train the motor projection per an experiment config; one run per seed.
    Train {
        /// Experiment config (TOML).
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run a snapshot under constant tonic drive; writes a spike raster.
    Run {
        #[arg(long)]
        snapshot: PathBuf,
        /// Tonic input frequency (spikes/s).
        #[arg(long)]
        frequency: f64,
        /// Run duration in CPG cycles.
        #[arg(long, default_value_t = 4.4)]
        cycles: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Run a trained snapshot at several tonic frequencies plus a mid-cycle
    /// frequency switch; writes rasters and a modulation report.
    Modulate {
        #[arg(long)]
        snapshot: PathBuf,
        /// Comma-separated tonic frequencies (spikes/s).
        #[arg(long, value_delimiter = ',', required = true)]
        frequencies: Vec<f64>,
        /// Fraction of a cycle at which the mid-run switch from the first to
        /// the second frequency happens.
        #[arg(long, default_value_t = 0.5)]
        switch_at: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Decode motor spikes into joint angles via population rate coding.
    Decode {
        #[arg(long)]
        snapshot: PathBuf,
        /// Joint map file (TOML).
        #[arg(long)]
        joint_map: PathBuf,
        #[arg(long)]
        frequency: f64,
        /// Run duration in CPG cycles.
        #[arg(long, default_value_t = 4.4)]
        cycles: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Validate oscillation and the single-spike property of a snapshot.
    Check {
        #[arg(long)]
        snapshot: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

/// Experiment configuration for `cpg train`.
#[derive(serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct ExperimentConfig {
    /// Built network snapshot to start from.
    snapshot: PathBuf,
    /// Teacher pattern file; mutually exclusive with `random_teacher`.
    teacher: Option<PathBuf>,
    /// Random-teacher parameters; mutually exclusive with `teacher`.
    random_teacher: Option<RandomTeacherConfig>,
    /// Tonic frequencies cycled across training epochs.
    #[serde(default = "default_frequencies")]
    frequencies: Vec<f64>,
    /// One training run per seed.
    #[serde(default = "default_seeds")]
    seeds: Vec<u64>,
    /// Output directory; wins over the CPG_OUT_DIR environment variable.
    out_dir: Option<PathBuf>,
    #[serde(default)]
    hyperparams: resume::ResumeHyperparams,
}

#[derive(serde::Deserialize, Clone, Copy)]
#[serde(deny_unknown_fields)]
struct RandomTeacherConfig {
    #[serde(default = "default_count_range")]
    count_range: (usize, usize),
    #[serde(default = "default_min_separation")]
    min_separation_ms: f64,
}

fn default_frequencies() -> Vec<f64> {
    vec![250.0]
}
fn default_seeds() -> Vec<u64> {
    vec![1]
}
fn default_count_range() -> (usize, usize) {
    (1, 4)
}
fn default_min_separation() -> f64 {
    5.0
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.cmd) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cmd: Cmd) -> Result<ExitCode> {
    match cmd {
        Cmd::Build { spec, common } => cmd_build(&spec, &common),
        Cmd::Train { config, common } => cmd_train(&config, &common),
        Cmd::Run { snapshot, frequency, cycles, common } => {
            cmd_run(&snapshot, frequency, cycles, &common)
        }
        Cmd::Modulate { snapshot, frequencies, switch_at, common } => {
            cmd_modulate(&snapshot, &frequencies, switch_at, &common)
        }
        Cmd::Decode { snapshot, joint_map, frequency, cycles, common } => {
            cmd_decode(&snapshot, &joint_map, frequency, cycles, &common)
        }
        Cmd::Check { snapshot, common } => cmd_check(&snapshot, &common),
    }
}

/// Flag > config > CPG_OUT_DIR > current directory.
fn resolve_out_dir(common: &Common, config_value: Option<&Path>) -> PathBuf {
    common
        .out_dir
        .clone()
        .or_else(|| config_value.map(Path::to_path_buf))
        .or_else(|| std::env::var_os("CPG_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

fn header(seed: u64, input_digest: &str) -> String {
    format!("# cpg-cli {TOOL_VERSION} seed={seed} input_sha256={input_digest}\n")
}

fn read_input(path: &Path) -> Result<(String, String)> {
    let text = formats::read_to_string(path)?;
    let digest = formats::sha256_hex(text.as_bytes());
    Ok((text, digest))
}

fn load_net(path: &Path) -> Result<(CpgNetwork, String)> {
    let (text, digest) = read_input(path)?;
    let snapshot = formats::snapshot_from_string(&text)?;
    Ok((formats::snapshot_to_cpg(snapshot)?, digest))
}

fn write_out(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    formats::write_string(&path, contents)?;
    Ok(path)
}

fn cmd_build(spec_path: &Path, common: &Common) -> Result<ExitCode> {
    let (text, digest) = read_input(spec_path)?;
    let spec = formats::spec_from_toml(&text).map_err(|e| match e {
        CpgError::Parse { line, reason, .. } => CpgError::Parse {
            file: spec_path.display().to_string(),
            line,
            reason,
        },
        other => other,
    })?;
    let net = cpg_core::build(&spec)?;
    let report = cpg_core::validate_oscillation(&net, spec.tonic_frequency_default, 3)?;

    let out = resolve_out_dir(common, None);
    let mut snap = formats::snapshot_to_string(
        &net.spec,
        &net.weights,
        &net.network,
        &net.plastic_synapses,
        &net.pfn_inhibitory,
    )?;
    snap.insert_str(snap.find('\n').map(|i| i + 1).unwrap_or(0), &header(spec.seed, &digest));
    let snap_path = write_out(&out, "network.snapshot", &snap)?;

    let report_toml = toml::to_string_pretty(&report)
        .map_err(|e| CpgError::config(format!("report encode: {e}")))?;
    let report_path = write_out(
        &out,
        "calibration_report.toml",
        &format!("{}{report_toml}", header(spec.seed, &digest)),
    )?;
    println!("wrote {} and {}", snap_path.display(), report_path.display());
    Ok(ExitCode::SUCCESS)
}

struct TrainOutcome {
    seed: u64,
    error_ms: f64,
    converged: bool,
    epochs: usize,
    files: Vec<(String, String)>,
}

fn train_one(
    base: &CpgNetwork,
    cfg: &ExperimentConfig,
    teacher_file: Option<&TeacherPattern>,
    seed: u64,
    digest: &str,
) -> Result<TrainOutcome> {
    let mut net = base.clone();
    let teacher = match (teacher_file, cfg.random_teacher) {
        (Some(t), None) => t.clone(),
        (None, Some(r)) => resume::random_teacher_in(
            net.nominal_cycle_ms(),
            &net.supported_teacher_windows(),
            net.motor.count,
            r.count_range,
            r.min_separation_ms,
            seed,
        )?,
        _ => unreachable!("validated in cmd_train"),
    };
    let report = resume::train(&mut net, &teacher, &cfg.hyperparams, &cfg.frequencies)?;
    let (final_error, motor_trains) = resume::evaluate(&net, &teacher, cfg.frequencies[0])?;

    let mut errors_csv = format!("{}epoch,spike_shift_error_ms\n", header(seed, digest));
    for (i, e) in report.error_series_ms.iter().enumerate() {
        errors_csv.push_str(&format!("{i},{e:.6}\n"));
    }

    // Desired-vs-actual raster over one settled cycle (cycle-relative times).
    let mut raster_csv = format!("{}kind,motor_neuron,time_ms\n", header(seed, digest));
    for (m, train) in teacher.spike_times_ms.iter().enumerate() {
        for &t in train {
            raster_csv.push_str(&format!("desired,{m},{t:.4}\n"));
        }
    }
    for (m, train) in motor_trains.iter().enumerate() {
        for &t in train {
            raster_csv.push_str(&format!("actual,{m},{t:.4}\n"));
        }
    }

    let mut snap = formats::snapshot_to_string(
        &net.spec,
        &net.weights,
        &net.network,
        &net.plastic_synapses,
        &net.pfn_inhibitory,
    )?;
    snap.insert_str(snap.find('\n').map(|i| i + 1).unwrap_or(0), &header(seed, digest));

    let report_toml = formats::report_to_toml(&report)?;
    let teacher_toml = formats::teacher_to_toml(&teacher)?;
    Ok(TrainOutcome {
        seed,
        error_ms: final_error,
        converged: report.converged,
        epochs: report.epochs_used,
        files: vec![
            ("errors.csv".into(), errors_csv),
            ("raster.csv".into(), raster_csv),
            ("trained.snapshot".into(), snap),
            ("report.toml".into(), format!("{}{report_toml}", header(seed, digest))),
            ("teacher.toml".into(), format!("{}{teacher_toml}", header(seed, digest))),
        ],
    })
}

fn cmd_train(config_path: &Path, common: &Common) -> Result<ExitCode> {
    let (text, digest) = read_input(config_path)?;
    let cfg: ExperimentConfig = toml::from_str(&text)
        .map_err(|e| CpgError::config(format!("{}: {e}", config_path.display())))?;
    if cfg.teacher.is_some() == cfg.random_teacher.is_some() {
        return Err(CpgError::config(
            "experiment config needs exactly one of `teacher` and `[random_teacher]`",
        ));
    }
    if cfg.frequencies.is_empty() || cfg.seeds.is_empty() {
        return Err(CpgError::config("frequencies and seeds must be non-empty"));
    }
    let (base, _) = load_net(&cfg.snapshot)?;
    let teacher_file = cfg
        .teacher
        .as_deref()
        .map(|p| -> Result<TeacherPattern> {
            formats::teacher_from_toml(&formats::read_to_string(p)?)
        })
        .transpose()?;

    // Independent runs; a small worker pool, one network clone per worker.
    let jobs: Vec<u64> = cfg.seeds.clone();
    let workers = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .min(jobs.len());
    let next = std::sync::atomic::AtomicUsize::new(0);
    let mut outcomes: Vec<Option<Result<TrainOutcome>>> = (0..jobs.len()).map(|_| None).collect();
    let slots: Vec<std::sync::Mutex<&mut Option<Result<TrainOutcome>>>> =
        outcomes.iter_mut().map(std::sync::Mutex::new).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                let Some(&seed) = jobs.get(i) else { break };
                let r = train_one(&base, &cfg, teacher_file.as_ref(), seed, &digest);
                **slots[i].lock().unwrap() = Some(r);
            });
        }
    });

    let out = resolve_out_dir(common, cfg.out_dir.as_deref());
    let mut summary = format!(
        "{}seed,final_error_ms,converged,epochs\n",
        header(common.seed, &digest)
    );
    let mut worst: Option<CpgError> = None;
    for slot in outcomes {
        match slot.expect("all jobs ran") {
            Ok(o) => {
                let dir = out.join(format!("train_{:04}", o.seed));
                for (name, contents) in &o.files {
                    write_out(&dir, name, contents)?;
                }
                summary.push_str(&format!(
                    "{},{:.6},{},{}\n",
                    o.seed, o.error_ms, o.converged, o.epochs
                ));
            }
            Err(e) => worst = Some(e),
        }
    }
    if let Some(e) = worst {
        return Err(e);
    }
    let path = write_out(&out, "summary.csv", &summary)?;
    println!("wrote {}", path.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_run(snapshot: &Path, frequency: f64, cycles: f64, common: &Common) -> Result<ExitCode> {
    if frequency <= 0.0 {
        return Err(CpgError::config("frequency must be positive"));
    }
    let (net, digest) = load_net(snapshot)?;
    let duration = cycles * net.nominal_cycle_ms();
    let result = net.run_driven(frequency, duration, common.dt_ms)?;
    let out = resolve_out_dir(common, None);
    let path = write_out(&out, "raster.csv", &formats::spikes_to_csv(&result, &digest))?;
    println!("wrote {}", path.display());
    Ok(ExitCode::SUCCESS)
}

/// Mean settled cycle period: average onset-to-onset interval, skipping the
/// startup transient.
fn settled_period(net: &CpgNetwork, frequency: f64, dt_ms: f64) -> Result<(f64, Vec<f64>)> {
    let result = net.run_driven(frequency, 5.4 * net.nominal_cycle_ms(), dt_ms)?;
    let onsets = net.phase1_onsets(&result);
    if onsets.len() < 3 {
        return Err(CpgError::InsufficientData(format!(
            "fewer than two complete cycles at F={frequency}"
        )));
    }
    let diffs: Vec<f64> = onsets.windows(2).skip(1).map(|w| w[1] - w[0]).collect();
    Ok((diffs.iter().sum::<f64>() / diffs.len() as f64, onsets))
}

fn cmd_modulate(
    snapshot: &Path,
    frequencies: &[f64],
    switch_at: f64,
    common: &Common,
) -> Result<ExitCode> {
    if frequencies.is_empty() {
        return Err(CpgError::config("at least one frequency required"));
    }
    if !(0.0..1.0).contains(&switch_at) {
        return Err(CpgError::config("switch fraction must be in [0, 1)"));
    }
    let (net, digest) = load_net(snapshot)?;
    let out = resolve_out_dir(common, None);
    let motor_ids = net.motor.first_neuron..net.motor.first_neuron + net.motor.count;

    let mut report = format!("{}", header(common.seed, &digest));
    let mut orders: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut periods: Vec<f64> = Vec::new();
    for &f in frequencies {
        if f <= 0.0 {
            return Err(CpgError::config("frequencies must be positive"));
        }
        let (period, onsets) = settled_period(&net, f, common.dt_ms)?;
        let result = net.run_driven(f, 5.4 * net.nominal_cycle_ms(), common.dt_ms)?;
        write_out(
            &out,
            &format!("raster_f{f:.0}.csv"),
            &formats::spikes_to_csv(&result, &digest),
        )?;
        let k = onsets.len() - 2;
        orders.push(decode::first_spike_order(
            &result,
            motor_ids.clone(),
            onsets[k],
            onsets[k + 1],
        ));
        periods.push(period);
        report.push_str(&format!("[[frequency]]\nspikes_per_s = {f}\nperiod_ms = {period:.4}\n\n"));
    }
    if frequencies.len() >= 2 {
        report.push_str(&format!(
            "[comparison]\nperiod_ratio = {:.6}\n",
            periods[1] / periods[0]
        ));
        match decode::spike_order_correlation(&orders[0], &orders[1]) {
            Some(r) => report.push_str(&format!("spike_order_rank_correlation = {r:.6}\n")),
            None => report.push_str("spike_order_rank_correlation = \"undefined\"\n"),
        }

        // Mid-cycle switch from frequencies[0] to frequencies[1], timed at
        // `switch_at` of a settled cycle, against an unswitched control.
        let (_, onsets) = settled_period(&net, frequencies[0], common.dt_ms)?;
        let k = onsets.len() - 2;
        let control = onsets[k + 1] - onsets[k];
        let t_switch = onsets[k] + switch_at * control;
        let duration = onsets[k] + 3.0 * control;
        let switched = net.run_schedule(
            &[
                TonicSource::regular(frequencies[0], 0.0, t_switch),
                TonicSource::regular(frequencies[1], t_switch, duration),
            ],
            duration,
            common.dt_ms,
        )?;
        let sw_onsets = net.phase1_onsets(&switched);
        let end = sw_onsets
            .iter()
            .copied()
            .find(|&t| t > onsets[k] + 1e-9)
            .ok_or_else(|| {
                CpgError::InsufficientData("no cycle completion after the switch".into())
            })?;
        report.push_str(&format!(
            "\n[mid_cycle_switch]\nswitch_at_fraction = {switch_at}\nremaining_cycle_ms = {:.4}\ncontrol_cycle_ms = {control:.4}\n",
            end - onsets[k]
        ));
    }
    let path = write_out(&out, "modulation.toml", &report)?;
    println!("wrote {}", path.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_decode(
    snapshot: &Path,
    joint_map: &Path,
    frequency: f64,
    cycles: f64,
    common: &Common,
) -> Result<ExitCode> {
    let (net, digest) = load_net(snapshot)?;
    let (map_text, _) = read_input(joint_map)?;
    let map: JointMap = formats::joint_map_from_toml(&map_text)?;
    let motor_ids: std::collections::BTreeSet<usize> =
        (net.motor.first_neuron..net.motor.first_neuron + net.motor.count).collect();
    let mapped: std::collections::BTreeSet<usize> =
        map.joints.iter().flat_map(|j| j.neuron_ids.iter().copied()).collect();
    if !mapped.is_subset(&motor_ids) {
        return Err(CpgError::config(format!(
            "joint map references neurons outside the motor pool {}..{}",
            net.motor.first_neuron,
            net.motor.first_neuron + net.motor.count
        )));
    }
    let result = net.run_driven(frequency, cycles * net.nominal_cycle_ms(), common.dt_ms)?;
    let trajectory = decode::decode_angles(&result, &map)?;
    let out = resolve_out_dir(common, None);
    let csv = format!(
        "{}{}",
        header(common.seed, &digest),
        formats::trajectory_to_csv(&trajectory)
    );
    let path = write_out(&out, "trajectory.csv", &csv)?;
    println!("wrote {}", path.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_check(snapshot: &Path, common: &Common) -> Result<ExitCode> {
    let (net, _) = load_net(snapshot)?;
    let _ = common;
    let report = cpg_core::validate_oscillation(&net, net.spec.tonic_frequency_default, 3)?;
    let osc_ok = report.pass;
    println!("oscillation: {}", if osc_ok { "PASS" } else { "FAIL" });
    let violations = cpg_core::single_spike_check(&net, 5.4 * net.nominal_cycle_ms())?;
    let ss_ok = violations.is_empty();
    println!(
        "single-spike: {} ({} violations)",
        if ss_ok { "PASS" } else { "FAIL" },
        violations.len()
    );
    if osc_ok && ss_ok {
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::from(2))
    }
}
