//! Scenario files: a plain-text key-value format describing the transfer
//! and one `[path]` section per simulated path.
//!
//! ```text
//! # single path, 20 Mbps, 100 ms RTT
//! [transfer]
//! bytes = 11492499
//! repetitions = 5
//! base_seed = 1
//! loss_sweep = 0, 0.01, 0.02
//!
//! [path]
//! delay_ms = 50
//! bandwidth_mbps = 20
//! queue = 100
//! ```

use ctcp::config::{ProtocolParams, SchedulerKind};
use thiserror::Error;

/// One simulated path: forward direction carries data and suffers the
/// configured random loss; the reverse direction carries ACKs and is
/// lossless unless `ack_loss` is set.
#[derive(Clone, Debug, PartialEq)]
pub struct PathConfig {
    /// One-way propagation delay, seconds (each direction).
    pub one_way_delay: f64,
    /// Link rate, bits per second.
    pub bandwidth: f64,
    /// Per-packet i.i.d. drop probability, data direction.
    pub loss_rate: f64,
    /// Per-packet drop probability on the ACK path.
    pub ack_loss_rate: f64,
    /// Serialization queue capacity in packets; overflow drops are counted
    /// separately from random losses.
    pub queue_capacity: usize,
    /// Seed for this path's loss and jitter draws.
    pub seed: u64,
    /// Mean of an exponential extra delay, seconds; enables reordering.
    pub jitter: Option<f64>,
}

impl Default for PathConfig {
    fn default() -> Self {
        Self {
            one_way_delay: 0.05,
            bandwidth: 20e6,
            loss_rate: 0.0,
            ack_loss_rate: 0.0,
            queue_capacity: 100,
            seed: 0,
            jitter: None,
        }
    }
}

impl PathConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.one_way_delay < 0.0 {
            return Err("delay must be nonnegative".into());
        }
        if !(self.bandwidth > 0.0) {
            return Err("bandwidth must be positive".into());
        }
        for (name, v) in [("loss", self.loss_rate), ("ack_loss", self.ack_loss_rate)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("{name} must lie in [0, 1]"));
            }
        }
        if self.queue_capacity < 1 {
            return Err("queue must hold at least 1 packet".into());
        }
        Ok(())
    }
}

/// The `[transfer]` section: what to move and how often.
#[derive(Clone, Debug)]
pub struct TransferSpec {
    pub bytes: u64,
    pub repetitions: u32,
    pub base_seed: u64,
    /// Loss rates applied to every path, one experiment point each.
    /// Empty means a single point at the paths' own configured loss.
    pub loss_sweep: Vec<f64>,
    pub params: ProtocolParams,
    pub stall_timeout_s: f64,
}

impl Default for TransferSpec {
    fn default() -> Self {
        Self {
            bytes: 1 << 20,
            repetitions: 1,
            base_seed: 1,
            loss_sweep: Vec::new(),
            params: ProtocolParams::default(),
            stall_timeout_s: 30.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Scenario {
    pub transfer: TransferSpec,
    pub paths: Vec<PathConfig>,
}

#[derive(Debug, Error, PartialEq)]
pub enum ScenarioError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("scenario has no [path] section")]
    NoPaths,
    #[error("path {index}: {message}")]
    BadPath { index: usize, message: String },
    #[error("transfer: {0}")]
    BadTransfer(String),
}

fn parse_err(line: usize, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Parse {
        line,
        message: message.into(),
    }
}

pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    #[derive(PartialEq)]
    enum Section {
        None,
        Transfer,
        Path(usize),
    }

    let mut transfer = TransferSpec::default();
    let mut paths: Vec<PathConfig> = Vec::new();
    let mut section = Section::None;

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            section = match name.trim() {
                "transfer" => Section::Transfer,
                "path" => {
                    let mut cfg = PathConfig::default();
                    cfg.seed = paths.len() as u64;
                    paths.push(cfg);
                    Section::Path(paths.len() - 1)
                }
                other => return Err(parse_err(lineno, format!("unknown section [{other}]"))),
            };
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(parse_err(lineno, format!("expected key = value, got {line:?}")));
        };
        let key = key.trim();
        let value = value.trim();

        fn num<T: std::str::FromStr>(lineno: usize, key: &str, value: &str) -> Result<T, ScenarioError> {
            value
                .parse()
                .map_err(|_| parse_err(lineno, format!("invalid value {value:?} for {key}")))
        }

        match &section {
            Section::None => {
                return Err(parse_err(lineno, "key before any [transfer] or [path] section"))
            }
            Section::Transfer => match key {
                "bytes" => transfer.bytes = num(lineno, key, value)?,
                "repetitions" => transfer.repetitions = num(lineno, key, value)?,
                "base_seed" => transfer.base_seed = num(lineno, key, value)?,
                "loss_sweep" => {
                    transfer.loss_sweep = value
                        .split(',')
                        .map(|tok| num::<f64>(lineno, key, tok.trim()))
                        .collect::<Result<_, _>>()?;
                }
                "blksize" => transfer.params.blksize = num(lineno, key, value)?,
                "payload_size" => transfer.params.payload_size = num(lineno, key, value)?,
                "numblks" => transfer.params.numblks = num(lineno, key, value)?,
                "ss_threshold" => transfer.params.initial_ss_threshold = num(lineno, key, value)?,
                "token_cap" => transfer.params.token_cap = Some(num(lineno, key, value)?),
                "stall_timeout_s" => transfer.stall_timeout_s = num(lineno, key, value)?,
                "scheduler" => {
                    transfer.params.scheduler = match value {
                        "auto" => SchedulerKind::Auto,
                        "single" => SchedulerKind::Single,
                        "multi" => SchedulerKind::Multi,
                        other => {
                            return Err(parse_err(
                                lineno,
                                format!("scheduler must be auto|single|multi, got {other:?}"),
                            ))
                        }
                    }
                }
                other => return Err(parse_err(lineno, format!("unknown transfer key {other:?}"))),
            },
            Section::Path(i) => {
                let cfg = &mut paths[*i];
                match key {
                    "delay_ms" => cfg.one_way_delay = num::<f64>(lineno, key, value)? / 1_000.0,
                    "bandwidth_mbps" => cfg.bandwidth = num::<f64>(lineno, key, value)? * 1e6,
                    "loss" => cfg.loss_rate = num(lineno, key, value)?,
                    "ack_loss" => cfg.ack_loss_rate = num(lineno, key, value)?,
                    "queue" => cfg.queue_capacity = num(lineno, key, value)?,
                    "seed" => cfg.seed = num(lineno, key, value)?,
                    "jitter_ms" => {
                        let ms: f64 = num(lineno, key, value)?;
                        cfg.jitter = (ms > 0.0).then_some(ms / 1_000.0);
                    }
                    other => return Err(parse_err(lineno, format!("unknown path key {other:?}"))),
                }
            }
        }
    }

    if paths.is_empty() {
        return Err(ScenarioError::NoPaths);
    }
    for (index, cfg) in paths.iter().enumerate() {
        cfg.validate()
            .map_err(|message| ScenarioError::BadPath { index, message })?;
    }
    if transfer.repetitions < 1 {
        return Err(ScenarioError::BadTransfer("repetitions must be at least 1".into()));
    }
    if transfer.bytes == 0 {
        return Err(ScenarioError::BadTransfer("bytes must be positive".into()));
    }
    for p in &transfer.loss_sweep {
        if !(0.0..=1.0).contains(p) {
            return Err(ScenarioError::BadTransfer(format!(
                "loss_sweep value {p} outside [0, 1]"
            )));
        }
    }
    transfer
        .params
        .validate()
        .map_err(ScenarioError::BadTransfer)?;

    Ok(Scenario { transfer, paths })
}
