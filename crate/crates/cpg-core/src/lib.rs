//! Spiking central pattern generator: LIF simulation core, network
//! construction and calibration, ReSuMe training of the motor projection,
//! and population-rate decoding of joint trajectories.

pub mod builder;
pub mod decode;
pub mod error;
pub mod formats;
pub mod lif;
pub mod network;
pub mod resume;
pub mod table1;

pub use builder::{
    build, build_with_weights, calibrate, single_spike_check, validate_oscillation, CpgNetwork,
    CpgSpec, FixedWeights, PhaseReport, PhaseSpec,
};
pub use decode::{decode_angles, encode_target, JointMap, JointTrajectory};
pub use error::{CpgError, Result};
pub use lif::{NeuronParams, NeuronState, Propagator, SignClass};
pub use network::{
    ConnectPattern, Network, PopulationHandle, Role, RunConfig, SimulationResult, TonicSource,
    WeightDist,
};
pub use resume::{
    resume_delta, spike_shift_error, train, ResumeHyperparams, TeacherPattern, TrainingReport,
};
