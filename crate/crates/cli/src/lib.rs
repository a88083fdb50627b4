// SPDX-License-Identifier: Apache-2.0

//! Commands behind the `acp` binary.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use acp_core::estimators::{
    agreement_time, block_time_grid, block_time_lhs, feasible, message_volume, throughput, throughput_table, EstimatorInput,
    VolumeVariant, MBPS, MIB,
};
use acp_core::netsim::trace::{read_trace, Divergence, FileSink};
use acp_core::netsim::{replay, run, RunResult};
use acp_core::report::Report;
use acp_core::scenario::Scenario;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SAFETY: i32 = 3;
pub const EXIT_DIVERGED: i32 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        CliError { code: EXIT_CONFIG, message: message.into() }
    }

    pub fn io(context: &str, e: impl fmt::Display) -> Self {
        CliError { code: EXIT_FAILURE, message: format!("{context}: {e}") }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

/// Fully resolved default scenario, as written by `acp init`.
pub fn scaffold() -> String {
    let mut s = Scenario::default();
    s.resolve();
    s.to_json_pretty()
}

pub fn load_scenario(path: &Path) -> Result<Scenario, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
    Scenario::from_json(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

/// Applies command-line overrides and re-validates.
pub fn with_overrides(mut s: Scenario, seed: Option<u64>, rounds: Option<u64>) -> Result<Scenario, CliError> {
    if let Some(seed) = seed {
        s.seed = seed;
    }
    if let Some(r) = rounds {
        s.rounds = r;
        s.time_limit_ms = None;
        s.resolve();
    }
    s.validate().map_err(|e| CliError::config(e.to_string()))?;
    Ok(s)
}

pub struct SimOutput {
    pub dir: PathBuf,
    pub trace: PathBuf,
    pub report: Report,
    pub result: RunResult,
}

impl SimOutput {
    pub fn exit_code(&self) -> i32 {
        report_exit_code(&self.report)
    }
}

pub fn report_exit_code(report: &Report) -> i32 {
    if report.safety_ok() {
        EXIT_OK
    } else {
        EXIT_SAFETY
    }
}

/// Runs one scenario, writing the trace and every report file under `dir`.
/// Explicit trace or report paths in the scenario win when `use_scenario_paths` is set.
pub fn simulate(scenario: &Scenario, dir: &Path, use_scenario_paths: bool) -> Result<SimOutput, CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(&format!("creating {}", dir.display()), e))?;
    let pick = |explicit: &Option<String>, default: &str| match explicit {
        Some(p) if use_scenario_paths => PathBuf::from(p),
        _ => dir.join(default),
    };
    let trace_path = pick(&scenario.trace_path, "trace.jsonl");
    let report_path = pick(&scenario.report_path, "report.txt");
    let mut sink = FileSink::create(&trace_path).map_err(|e| CliError::io(&format!("creating {}", trace_path.display()), e))?;
    log::info!("simulating seed {} with {} nodes for {} rounds", scenario.seed, scenario.n_all, scenario.rounds);
    let result = run(scenario, &mut sink);
    sink.finish().map_err(|e| CliError::io("writing trace", e))?;
    let lines = read_trace(&trace_path).map_err(|e| CliError::io("reading trace back", e))?;
    let report = Report::from_trace(&lines).map_err(|e| CliError { code: EXIT_FAILURE, message: e })?;
    let files = [
        (report_path, report.to_text()),
        (dir.join("rounds.csv"), report.rounds_csv()),
        (dir.join("summary.csv"), report.summary_csv()),
        (dir.join("ledger.csv"), report.ledger_csv()),
    ];
    for (path, body) in files {
        fs::write(&path, body).map_err(|e| CliError::io(&format!("writing {}", path.display()), e))?;
    }
    log::info!("seed {} finished: {}", scenario.seed, report.stop);
    Ok(SimOutput { dir: dir.to_path_buf(), trace: trace_path, report, result })
}

#[derive(Debug, PartialEq, Eq)]
pub enum ReplayVerdict {
    Ok { lines: usize },
    Diverged(Divergence),
}

impl fmt::Display for ReplayVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReplayVerdict::Ok { lines } => write!(f, "OK ({lines} events)"),
            ReplayVerdict::Diverged(d) => {
                writeln!(f, "DIVERGED at line {}", d.line)?;
                writeln!(f, "  expected: {}", d.expected.as_deref().unwrap_or("<end of trace>"))?;
                write!(f, "  actual:   {}", d.actual.as_deref().unwrap_or("<end of run>"))
            }
        }
    }
}

impl ReplayVerdict {
    pub fn exit_code(&self) -> i32 {
        match self {
            ReplayVerdict::Ok { .. } => EXIT_OK,
            ReplayVerdict::Diverged(_) => EXIT_DIVERGED,
        }
    }
}

pub fn replay_lines(lines: &[String]) -> Result<ReplayVerdict, CliError> {
    match replay(lines).map_err(CliError::config)? {
        None => Ok(ReplayVerdict::Ok { lines: lines.len() }),
        Some(d) => Ok(ReplayVerdict::Diverged(d)),
    }
}

pub fn replay_file(path: &Path) -> Result<ReplayVerdict, CliError> {
    let lines = read_trace(path).map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
    replay_lines(&lines)
}

pub fn load_estimator_input(path: Option<&Path>) -> Result<EstimatorInput, CliError> {
    let Some(path) = path else { return Ok(EstimatorInput::default()) };
    let text = fs::read_to_string(path).map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| CliError::config(format!("field `{}`: {}", e.path(), e.inner())))
}

/// Agreement time, message volume, throughput and the block-time check.
pub fn estimate_summary(input: &EstimatorInput) -> String {
    let at = agreement_time(input);
    let lhs = block_time_lhs(input);
    let mut s = String::new();
    s.push_str(&format!("agreement time: {at} ms\n"));
    s.push_str(&format!("message volume: {} messages per round\n", message_volume(input, VolumeVariant::Printed)));
    s.push_str(&format!(
        "message volume (empty term scaled by n_fc^2): {} messages per round\n",
        message_volume(input, VolumeVariant::Symmetric)
    ));
    s.push_str(&format!(
        "throughput: {:.1} tps ({} byte blocks, {} byte transactions)\n",
        throughput(input.block_size, input.avg_tx_size, at / 1000.0),
        input.block_size,
        input.avg_tx_size
    ));
    s.push_str(&format!(
        "block time: {lhs:.3} ms against {} ms ({})\n",
        input.t_block_ms,
        if feasible(input) { "feasible" } else { "infeasible" }
    ));
    s
}

pub fn table_text() -> String {
    let mut s = String::from("chain     block  agreement  tps        reference  rel_err\n");
    for c in throughput_table() {
        s.push_str(&format!(
            "{:<8}  {} MiB  {:>7.1} s  {:>9.1}  {:>9.1}  {:.4}%\n",
            c.chain,
            c.block_mib,
            c.agreement_s,
            c.tps,
            c.reference,
            (c.tps - c.reference).abs() / c.reference * 100.0
        ));
    }
    s
}

/// Parses `KEY=VALUE` settings for the block-time check: `N`, `h`, `BS`
/// (bytes, or with a `MiB` suffix), `bw` (Mbps), `rtt` and `t` (ms).
pub fn parse_blocktime(base: &EstimatorInput, args: &[String]) -> Result<EstimatorInput, CliError> {
    let mut input = base.clone();
    for arg in args {
        for token in arg.split([',', ' ']).filter(|t| !t.is_empty()) {
            let (key, value) = token
                .split_once('=')
                .ok_or_else(|| CliError::config(format!("--blocktime expects KEY=VALUE, got `{token}`")))?;
            let bad = |what: &str| CliError::config(format!("--blocktime {key}: {what} `{value}`"));
            match key.to_ascii_lowercase().as_str() {
                "n" => input.n_all = value.parse().map_err(|_| bad("not a node count"))?,
                "h" => {
                    input.hops = value.parse().map_err(|_| bad("not a hop count"))?;
                    if input.hops == 0 {
                        return Err(bad("hops must be positive"));
                    }
                }
                "bs" => {
                    input.block_size = match value.strip_suffix("MiB") {
                        Some(m) => m.parse::<u64>().map_err(|_| bad("not a size"))? * MIB,
                        None => value.parse().map_err(|_| bad("not a size"))?,
                    }
                }
                "bw" => {
                    let mbps: f64 = value.parse().map_err(|_| bad("not a bandwidth"))?;
                    if mbps <= 0.0 {
                        return Err(bad("bandwidth must be positive"));
                    }
                    input.bandwidth = mbps * MBPS;
                }
                "rtt" => input.rtt_ms = value.parse().map_err(|_| bad("not a duration"))?,
                "t" => input.t_block_ms = value.parse().map_err(|_| bad("not a duration"))?,
                _ => return Err(CliError::config(format!("--blocktime: unknown key `{key}`"))),
            }
        }
    }
    Ok(input)
}

pub fn blocktime_text(input: &EstimatorInput) -> String {
    format!(
        "block time lhs: {:.3} ms (N={}, h={}, BS={} bytes, bw={} Mbps, rtt={} ms); t_block {} ms: {}\n",
        block_time_lhs(input),
        input.n_all,
        input.hops,
        input.block_size,
        input.bandwidth / MBPS,
        input.rtt_ms,
        input.t_block_ms,
        if feasible(input) { "feasible" } else { "infeasible" }
    )
}

pub fn blocktime_grid_csv(base: &EstimatorInput) -> String {
    block_time_grid(
        base,
        &[1_000, 10_000, 100_000, 1_000_000],
        &[1, 2, 3, 4],
        &[MIB, 2 * MIB, 4 * MIB, 8 * MIB],
        &[10.0 * MBPS, 100.0 * MBPS, 1000.0 * MBPS],
    )
}
