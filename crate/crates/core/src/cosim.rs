//! Lockstep software-in-the-loop link: plant server and controller client
//! exchanging time-stamped frames over a stream socket.
//!
//! Wire format: one frame per line, a flat JSON object in UTF-8 terminated
//! by a single LF. Floats are rendered with round-trip precision, so a
//! decoded value is bit-identical to the encoded one. After the handshake
//! (client `hello`, server `config`) the session is strictly lockstep:
//! exactly one sensor frame is outstanding at any time, and every actuation
//! frame echoes the sequence number of the sensor frame it answers. The
//! protocol adds no dynamics: a split session reproduces the in-process
//! closed loop exactly.

use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::plant::{apply_limits, ActuationInput};
use crate::scenario::Scenario;
use crate::sim::{PlantSim, SimError, Trace};
use crate::track::RefPath;
use crate::tracking::{control_from_measurement, LoopPair, Measurement, TrackingMetrics};

pub const PROTOCOL_VERSION: u32 = 1;
pub const DEFAULT_ENDPOINT: &str = "127.0.0.1:7707";
pub const DEFAULT_IO_TIMEOUT: Duration = Duration::from_secs(5);

#[derive(Debug, Error)]
pub enum CosimError {
    #[error("i/o: {0}")]
    Io(String),
    #[error("timed out after {after:?} waiting for {waiting_for}")]
    Timeout {
        waiting_for: String,
        after: Duration,
    },
    #[error("peer closed the connection while {context}")]
    PeerClosed { context: String },
    #[error("malformed frame: {0}")]
    Malformed(String),
    #[error("unknown frame type {0:?}")]
    UnknownType(String),
    #[error("{frame_type} frame is missing field {field:?}")]
    MissingField { frame_type: String, field: String },
    #[error("{frame_type} frame has unexpected field {field:?}")]
    UnexpectedField { frame_type: String, field: String },
    #[error("field {field:?} has the wrong type")]
    BadFieldType { field: String },
    #[error("sequence mismatch: expected {expected}, got {got}")]
    SeqMismatch { expected: u64, got: u64 },
    #[error("expected {expected} frame, got {got}")]
    UnexpectedFrame { expected: &'static str, got: String },
    #[error("protocol version mismatch: ours {ours}, theirs {theirs}")]
    VersionMismatch { ours: u32, theirs: u32 },
    #[error("scenario digest mismatch: ours {ours}, theirs {theirs}")]
    DigestMismatch { ours: String, theirs: String },
    #[error(transparent)]
    Sim(#[from] SimError),
}

impl CosimError {
    /// CLI exit code class: 1 validation, 2 runtime abort, 3 protocol
    /// violation.
    pub fn exit_code(&self) -> i32 {
        use CosimError::*;
        match self {
            DigestMismatch { .. } => 1,
            Io(_) | Timeout { .. } | PeerClosed { .. } | Sim(_) => 2,
            Malformed(_)
            | UnknownType(_)
            | MissingField { .. }
            | UnexpectedField { .. }
            | BadFieldType { .. }
            | SeqMismatch { .. }
            | UnexpectedFrame { .. }
            | VersionMismatch { .. } => 3,
        }
    }
}

/// One wire frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Frame {
    Hello {
        version: u32,
    },
    Config {
        digest: String,
        period_us: u64,
    },
    Sensor {
        seq: u64,
        t_us: u64,
        vx: f64,
        vy: f64,
        psi: f64,
        psi_dot: f64,
        x: f64,
        y: f64,
        d: f64,
        s_star: f64,
    },
    Actuation {
        seq: u64,
        t_us: u64,
        t_w: f64,
        delta: f64,
    },
    Bye {
        reason: String,
    },
}

impl Frame {
    pub fn kind(&self) -> FrameKind {
        match self {
            Frame::Hello { .. } => FrameKind::Hello,
            Frame::Config { .. } => FrameKind::Config,
            Frame::Sensor { .. } => FrameKind::Sensor,
            Frame::Actuation { .. } => FrameKind::Actuation,
            Frame::Bye { .. } => FrameKind::Bye,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameKind {
    Hello,
    Config,
    Sensor,
    Actuation,
    Bye,
}

impl fmt::Display for FrameKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            FrameKind::Hello => "hello",
            FrameKind::Config => "config",
            FrameKind::Sensor => "sensor",
            FrameKind::Actuation => "actuation",
            FrameKind::Bye => "bye",
        };
        f.write_str(name)
    }
}

/// Encodes a frame as one LF-terminated JSON line.
pub fn encode_frame(frame: &Frame) -> String {
    let mut line = serde_json::to_string(frame).expect("frames always serialize");
    debug_assert!(!line.contains('\n'));
    line.push('\n');
    line
}

const SENSOR_FIELDS: &[&str] = &[
    "seq", "t_us", "vx", "vy", "psi", "psi_dot", "x", "y", "d", "s_star",
];

/// Decodes one frame line, rejecting unknown types and missing or extra
/// fields with errors that name the offender.
pub fn decode_frame(line: &str) -> Result<Frame, CosimError> {
    let value: serde_json::Value = serde_json::from_str(line.trim_end_matches(['\n', '\r']))
        .map_err(|e| CosimError::Malformed(e.to_string()))?;
    let obj = value
        .as_object()
        .ok_or_else(|| CosimError::Malformed("frame is not a JSON object".into()))?;
    let ftype = obj
        .get("type")
        .ok_or_else(|| CosimError::MissingField {
            frame_type: "frame".into(),
            field: "type".into(),
        })?
        .as_str()
        .ok_or_else(|| CosimError::BadFieldType {
            field: "type".into(),
        })?
        .to_string();
    let expected_fields: &[&str] = match ftype.as_str() {
        "hello" => &["version"],
        "config" => &["digest", "period_us"],
        "sensor" => SENSOR_FIELDS,
        "actuation" => &["seq", "t_us", "t_w", "delta"],
        "bye" => &["reason"],
        other => return Err(CosimError::UnknownType(other.to_string())),
    };
    for key in obj.keys() {
        if key != "type" && !expected_fields.contains(&key.as_str()) {
            return Err(CosimError::UnexpectedField {
                frame_type: ftype.clone(),
                field: key.clone(),
            });
        }
    }
    for field in expected_fields {
        if !obj.contains_key(*field) {
            return Err(CosimError::MissingField {
                frame_type: ftype.clone(),
                field: (*field).to_string(),
            });
        }
    }
    let f64_of = |field: &str| -> Result<f64, CosimError> {
        obj[field].as_f64().ok_or(CosimError::BadFieldType {
            field: field.to_string(),
        })
    };
    let u64_of = |field: &str| -> Result<u64, CosimError> {
        obj[field].as_u64().ok_or(CosimError::BadFieldType {
            field: field.to_string(),
        })
    };
    let frame = match ftype.as_str() {
        "hello" => Frame::Hello {
            version: u64_of("version")? as u32,
        },
        "config" => Frame::Config {
            digest: obj["digest"]
                .as_str()
                .ok_or(CosimError::BadFieldType {
                    field: "digest".into(),
                })?
                .to_string(),
            period_us: u64_of("period_us")?,
        },
        "sensor" => Frame::Sensor {
            seq: u64_of("seq")?,
            t_us: u64_of("t_us")?,
            vx: f64_of("vx")?,
            vy: f64_of("vy")?,
            psi: f64_of("psi")?,
            psi_dot: f64_of("psi_dot")?,
            x: f64_of("x")?,
            y: f64_of("y")?,
            d: f64_of("d")?,
            s_star: f64_of("s_star")?,
        },
        "actuation" => Frame::Actuation {
            seq: u64_of("seq")?,
            t_us: u64_of("t_us")?,
            t_w: f64_of("t_w")?,
            delta: f64_of("delta")?,
        },
        "bye" => Frame::Bye {
            reason: obj["reason"]
                .as_str()
                .ok_or(CosimError::BadFieldType {
                    field: "reason".into(),
                })?
                .to_string(),
        },
        _ => unreachable!(),
    };
    Ok(frame)
}

/// Direction of a logged frame, from the logging side's point of view.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dir {
    Sent,
    Received,
}

/// Per-session bookkeeping: counts, the worst sensor-to-actuation round
/// trip, and the full I/O sequence for alternation checks.
#[derive(Debug, Clone, Default)]
pub struct SessionStats {
    pub frames_sent: u64,
    pub frames_received: u64,
    pub max_round_trip: Duration,
    pub log: Vec<(Dir, FrameKind)>,
}

impl SessionStats {
    fn sent(&mut self, kind: FrameKind) {
        self.frames_sent += 1;
        self.log.push((Dir::Sent, kind));
    }

    fn received(&mut self, kind: FrameKind) {
        self.frames_received += 1;
        self.log.push((Dir::Received, kind));
    }

    /// True when the post-handshake exchange is `(sensor actuation)*` with a
    /// final `bye` on either side, i.e. strict lockstep alternation.
    pub fn is_strictly_alternating(&self) -> bool {
        let mut i = 0;
        let log = &self.log;
        // handshake: hello then config, direction depending on the side
        if log.len() < 2 || log[0].1 != FrameKind::Hello || log[1].1 != FrameKind::Config {
            return false;
        }
        i += 2;
        while i < log.len() {
            match log[i].1 {
                FrameKind::Bye => return i == log.len() - 1,
                FrameKind::Sensor => {
                    if i + 1 >= log.len() {
                        return false;
                    }
                    match log[i + 1].1 {
                        FrameKind::Actuation => i += 2,
                        FrameKind::Bye => return i + 1 == log.len() - 1,
                        _ => return false,
                    }
                }
                _ => return false,
            }
        }
        true
    }
}

/// Buffered LF-framed transport over a TCP stream. A line is emitted only
/// once its LF arrives; partial lines stay buffered across calls, including
/// across read deadlines.
pub struct FrameStream {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
    partial: Vec<u8>,
    timeout: Duration,
}

impl FrameStream {
    pub fn from_stream(stream: TcpStream, timeout: Duration) -> Result<Self, CosimError> {
        stream.set_nodelay(true).map_err(io_err)?;
        stream.set_read_timeout(Some(timeout)).map_err(io_err)?;
        stream.set_write_timeout(Some(timeout)).map_err(io_err)?;
        let writer = stream.try_clone().map_err(io_err)?;
        Ok(Self {
            reader: BufReader::new(stream),
            writer,
            partial: Vec::new(),
            timeout,
        })
    }

    pub fn connect(endpoint: &str, timeout: Duration) -> Result<Self, CosimError> {
        let stream = TcpStream::connect(endpoint)
            .map_err(|e| CosimError::Io(format!("connect {endpoint}: {e}")))?;
        Self::from_stream(stream, timeout)
    }

    pub fn send(&mut self, frame: &Frame) -> Result<(), CosimError> {
        let line = encode_frame(frame);
        self.writer.write_all(line.as_bytes()).map_err(io_err)?;
        self.writer.flush().map_err(io_err)?;
        Ok(())
    }

    pub fn recv(&mut self, waiting_for: &str) -> Result<Frame, CosimError> {
        loop {
            let chunk = match self.reader.fill_buf() {
                Ok(chunk) => chunk,
                Err(e)
                    if e.kind() == std::io::ErrorKind::WouldBlock
                        || e.kind() == std::io::ErrorKind::TimedOut =>
                {
                    return Err(CosimError::Timeout {
                        waiting_for: waiting_for.to_string(),
                        after: self.timeout,
                    })
                }
                Err(e) => return Err(io_err(e)),
            };
            if chunk.is_empty() {
                return Err(CosimError::PeerClosed {
                    context: format!(
                        "waiting for {waiting_for}{}",
                        if self.partial.is_empty() {
                            ""
                        } else {
                            " (mid-frame)"
                        }
                    ),
                });
            }
            if let Some(pos) = chunk.iter().position(|&b| b == b'\n') {
                self.partial.extend_from_slice(&chunk[..=pos]);
                self.reader.consume(pos + 1);
                let line = std::mem::take(&mut self.partial);
                let line = String::from_utf8(line)
                    .map_err(|e| CosimError::Malformed(format!("invalid UTF-8: {e}")))?;
                return decode_frame(&line);
            }
            let len = chunk.len();
            self.partial.extend_from_slice(chunk);
            self.reader.consume(len);
        }
    }
}

fn io_err(e: std::io::Error) -> CosimError {
    CosimError::Io(e.to_string())
}

/// Server-side options.
#[derive(Debug, Clone, Copy)]
pub struct ServeOptions {
    /// How long to wait for a client to connect.
    pub accept_timeout: Duration,
    /// Per-frame I/O deadline.
    pub io_timeout: Duration,
}

impl Default for ServeOptions {
    fn default() -> Self {
        Self {
            accept_timeout: DEFAULT_IO_TIMEOUT,
            io_timeout: DEFAULT_IO_TIMEOUT,
        }
    }
}

/// Outcome of a completed (possibly client-terminated) plant session.
#[derive(Debug)]
pub struct ServeOutcome {
    pub trace: Trace,
    pub metrics: TrackingMetrics,
    pub stats: SessionStats,
    /// Why the session ended: "horizon" or the client's bye reason.
    pub ended_by: String,
}

/// Runs the plant side of a split session on an already-bound listener.
///
/// Accepts one client, performs the handshake, then per control period sends
/// one sensor frame, blocks for the matching actuation frame, applies the
/// actuator limits and advances the plant. On the client's `bye` or at the
/// horizon the accumulated trace and metrics are returned, exactly as
/// [`crate::sim::run_closed_loop`] would produce them.
pub fn plant_serve(
    scenario: &Scenario,
    path: &RefPath,
    listener: TcpListener,
    options: ServeOptions,
) -> Result<ServeOutcome, CosimError> {
    let stream = accept_with_timeout(&listener, options.accept_timeout)?;
    let mut link = FrameStream::from_stream(stream, options.io_timeout)?;
    let mut stats = SessionStats::default();
    let mut sim = PlantSim::new(scenario, path)?;

    // handshake
    let hello = link.recv("hello")?;
    stats.received(hello.kind());
    match hello {
        Frame::Hello { version } if version == PROTOCOL_VERSION => {}
        Frame::Hello { version } => {
            let err = CosimError::VersionMismatch {
                ours: PROTOCOL_VERSION,
                theirs: version,
            };
            let _ = link.send(&Frame::Bye {
                reason: err.to_string(),
            });
            return Err(err);
        }
        other => {
            return Err(CosimError::UnexpectedFrame {
                expected: "hello",
                got: other.kind().to_string(),
            })
        }
    }
    let config = Frame::Config {
        digest: scenario.digest(),
        period_us: scenario.period_us(),
    };
    link.send(&config)?;
    stats.sent(FrameKind::Config);

    let mut ended_by = String::from("horizon");
    while !sim.is_done() {
        let ctx = sim.measure_and_decide()?;
        let t = ctx.truth.state;
        link.send(&Frame::Sensor {
            seq: ctx.seq,
            t_us: ctx.t_us,
            vx: ctx.meas.vx,
            vy: t.vy,
            psi: t.psi,
            psi_dot: t.psi_dot,
            x: t.x,
            y: t.y,
            d: ctx.meas.d,
            s_star: ctx.meas.s_star,
        })?;
        stats.sent(FrameKind::Sensor);
        let sent_at = Instant::now();
        let reply = link.recv("actuation")?;
        stats.received(reply.kind());
        stats.max_round_trip = stats.max_round_trip.max(sent_at.elapsed());
        match reply {
            Frame::Actuation {
                seq, t_w, delta, ..
            } => {
                if seq != ctx.seq {
                    let err = CosimError::SeqMismatch {
                        expected: ctx.seq,
                        got: seq,
                    };
                    let _ = link.send(&Frame::Bye {
                        reason: err.to_string(),
                    });
                    return Err(err);
                }
                sim.actuate_and_advance(&ctx, ActuationInput { t_w, delta })?;
            }
            Frame::Bye { reason } => {
                ended_by = reason;
                let (trace, metrics) = sim.finish();
                return Ok(ServeOutcome {
                    trace,
                    metrics,
                    stats,
                    ended_by,
                });
            }
            other => {
                return Err(CosimError::UnexpectedFrame {
                    expected: "actuation",
                    got: other.kind().to_string(),
                })
            }
        }
    }
    link.send(&Frame::Bye {
        reason: "horizon".into(),
    })?;
    stats.sent(FrameKind::Bye);
    let (trace, metrics) = sim.finish();
    Ok(ServeOutcome {
        trace,
        metrics,
        stats,
        ended_by,
    })
}

fn accept_with_timeout(listener: &TcpListener, timeout: Duration) -> Result<TcpStream, CosimError> {
    listener.set_nonblocking(true).map_err(io_err)?;
    let deadline = Instant::now() + timeout;
    loop {
        match listener.accept() {
            Ok((stream, _addr)) => {
                stream.set_nonblocking(false).map_err(io_err)?;
                return Ok(stream);
            }
            Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                if Instant::now() >= deadline {
                    return Err(CosimError::Timeout {
                        waiting_for: "client connection".into(),
                        after: timeout,
                    });
                }
                std::thread::sleep(Duration::from_millis(2));
            }
            Err(e) => return Err(io_err(e)),
        }
    }
}

/// Outcome of the controller side of a split session.
#[derive(Debug)]
pub struct DriveOutcome {
    pub steps: u64,
    pub stats: SessionStats,
    /// The server's bye reason.
    pub ended_by: String,
}

/// Runs the controller side of a split session against a plant server.
///
/// The control pipeline is identical to the in-process one; the projection
/// arrives ready-made in the sensor frames (the observer lives plant-side),
/// and the reference speed is looked up in the locally resolved path, whose
/// identity the config digest guarantees.
pub fn controller_drive(
    scenario: &Scenario,
    path: &RefPath,
    endpoint: &str,
    io_timeout: Duration,
) -> Result<DriveOutcome, CosimError> {
    let mut link = FrameStream::connect(endpoint, io_timeout)?;
    let mut stats = SessionStats::default();

    link.send(&Frame::Hello {
        version: PROTOCOL_VERSION,
    })?;
    stats.sent(FrameKind::Hello);
    let config = link.recv("config")?;
    stats.received(config.kind());
    match config {
        Frame::Config { digest, period_us } => {
            let ours = scenario.digest();
            if digest != ours {
                let err = CosimError::DigestMismatch {
                    ours,
                    theirs: digest,
                };
                let _ = link.send(&Frame::Bye {
                    reason: err.to_string(),
                });
                return Err(err);
            }
            if period_us != scenario.period_us() {
                return Err(CosimError::UnexpectedFrame {
                    expected: "config with matching period",
                    got: format!("period_us = {period_us}"),
                });
            }
        }
        other => {
            return Err(CosimError::UnexpectedFrame {
                expected: "config",
                got: other.kind().to_string(),
            })
        }
    }

    let mut loops =
        LoopPair::from_scenario(scenario).map_err(|e| SimError::BadScenario(e.to_string()))?;
    let mut prev_applied = ActuationInput::default();
    let mut next_seq = 0u64;
    let dt = scenario.control_period_s;
    loop {
        let frame = link.recv("sensor")?;
        stats.received(frame.kind());
        match frame {
            Frame::Sensor {
                seq,
                t_us,
                vx,
                d,
                s_star,
                ..
            } => {
                if seq != next_seq {
                    let err = CosimError::SeqMismatch {
                        expected: next_seq,
                        got: seq,
                    };
                    let _ = link.send(&Frame::Bye {
                        reason: err.to_string(),
                    });
                    return Err(err);
                }
                let meas = Measurement {
                    t: t_us as f64 * 1e-6,
                    vx,
                    d,
                    s_star,
                };
                let decision = control_from_measurement(&mut loops, &meas, path, &prev_applied, dt)
                    .map_err(|source| SimError::Controller { t: meas.t, source })?;
                link.send(&Frame::Actuation {
                    seq,
                    t_us,
                    t_w: decision.raw.t_w,
                    delta: decision.raw.delta,
                })?;
                stats.sent(FrameKind::Actuation);
                // mirror the plant's limiter so the estimator windows see the
                // inputs the plant actually applied
                prev_applied = apply_limits(&decision.raw, &prev_applied, &scenario.vehicle, dt);
                next_seq += 1;
            }
            Frame::Bye { reason } => {
                return Ok(DriveOutcome {
                    steps: next_seq,
                    stats,
                    ended_by: reason,
                });
            }
            other => {
                return Err(CosimError::UnexpectedFrame {
                    expected: "sensor",
                    got: other.kind().to_string(),
                })
            }
        }
    }
}
