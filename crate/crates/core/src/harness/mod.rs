//! Benchmark harness: instance generation, suites across solvers,
//! parameter sweeps and report emission.

mod instance;
mod report;
mod suite;
mod sweep;

pub use instance::{
    generate_instance, generate_with_metadata, instance_from_json, instance_to_json, packable, GeneratedInstance,
    GenerationMetadata, InstanceSpec, LoadedInstance, INSTANCE_SCHEMA, MAX_ATTEMPTS, MAX_MASS, NAMED_SIZES,
    POSITION_RANGE,
};
pub use report::{emit_report, format_float, parse_report_json, ReportFormat, CSV_HEADER, REPORT_SCHEMA};
pub use suite::{
    run_on_instances, run_suite, Method, SolveReport, Status, SuiteConfig, DEFAULT_ALPHA, DEFAULT_EPSILON,
    DEFAULT_NODE_CAP, DEFAULT_TRIALS,
};
pub use sweep::{alpha_sweep, epsilon_sweep, sweep, SweepKind, SweepTable};
