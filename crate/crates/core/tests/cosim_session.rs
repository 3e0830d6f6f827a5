//! Split-session integration tests: liveness, protocol violations and the
//! equivalence of wire sessions with in-process runs.

use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::time::Duration;

use mfc_core::cosim::{
    controller_drive, decode_frame, encode_frame, plant_serve, CosimError, Frame, ServeOptions,
};
use mfc_core::scenario::{Scenario, TrackSource};
use mfc_core::sim::{run_closed_loop, RunOptions};
use mfc_core::track::{self, Segment, TrackSpec};

fn short_scenario(horizon: f64) -> (Scenario, mfc_core::track::RefPath) {
    let mut s = Scenario::desk_default();
    s.horizon_s = horizon;
    let spec = TrackSpec {
        segments: vec![Segment::Straight { length: 2000.0 }],
        speed_breakpoints: vec![(0.0, 20.0)],
    };
    s.track = TrackSource::Inline(spec.clone());
    let (path, _) = spec.generate(track::DEFAULT_DS).unwrap();
    (s, path)
}

fn spawn_server(
    scenario: Scenario,
    path: mfc_core::track::RefPath,
    options: ServeOptions,
) -> (
    String,
    std::thread::JoinHandle<Result<mfc_core::cosim::ServeOutcome, CosimError>>,
) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let endpoint = listener.local_addr().unwrap().to_string();
    let handle = std::thread::spawn(move || plant_serve(&scenario, &path, listener, options));
    (endpoint, handle)
}

#[test]
fn no_client_times_out_cleanly() {
    let (s, path) = short_scenario(1.0);
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let err = plant_serve(
        &s,
        &path,
        listener,
        ServeOptions {
            accept_timeout: Duration::from_millis(150),
            io_timeout: Duration::from_secs(1),
        },
    )
    .unwrap_err();
    assert!(matches!(err, CosimError::Timeout { .. }));
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn echo_zero_client_matches_null_controller_run() {
    let (s, path) = short_scenario(10.0);
    let (reference, ref_metrics) = run_closed_loop(
        &s,
        &path,
        RunOptions {
            zero_torque: true,
            zero_steer: true,
        },
    )
    .unwrap();

    let (endpoint, server) = spawn_server(s.clone(), path.clone(), ServeOptions::default());
    // hand-rolled client that always answers with zero actuation
    let client = std::thread::spawn(move || {
        let stream = TcpStream::connect(&endpoint).unwrap();
        stream.set_nodelay(true).unwrap();
        let mut reader = BufReader::new(stream.try_clone().unwrap());
        let mut writer = stream;
        writer
            .write_all(encode_frame(&Frame::Hello { version: 1 }).as_bytes())
            .unwrap();
        let mut line = String::new();
        loop {
            line.clear();
            if reader.read_line(&mut line).unwrap() == 0 {
                break;
            }
            match decode_frame(&line).unwrap() {
                Frame::Config { .. } => {}
                Frame::Sensor { seq, t_us, .. } => {
                    let reply = Frame::Actuation {
                        seq,
                        t_us,
                        t_w: 0.0,
                        delta: 0.0,
                    };
                    writer.write_all(encode_frame(&reply).as_bytes()).unwrap();
                }
                Frame::Bye { .. } => break,
                other => panic!("unexpected frame {other:?}"),
            }
        }
    });
    let outcome = server.join().unwrap().unwrap();
    client.join().unwrap();
    assert_eq!(outcome.trace.max_column_diff(&reference), 0.0);
    assert_eq!(outcome.metrics, ref_metrics);
    assert!(outcome.stats.is_strictly_alternating());
}

#[test]
fn full_session_is_deterministic_across_runs() {
    let (s, path) = short_scenario(5.0);
    let mut csvs = Vec::new();
    for _ in 0..2 {
        let (endpoint, server) = spawn_server(s.clone(), path.clone(), ServeOptions::default());
        let sc = s.clone();
        let pc = path.clone();
        let client = std::thread::spawn(move || {
            controller_drive(&sc, &pc, &endpoint, Duration::from_secs(5)).unwrap()
        });
        let outcome = server.join().unwrap().unwrap();
        client.join().unwrap();
        csvs.push(outcome.trace.to_csv());
    }
    assert_eq!(csvs[0], csvs[1]);
}

#[test]
fn wrong_seq_aborts_with_protocol_violation() {
    let (s, path) = short_scenario(5.0);
    let (endpoint, server) = spawn_server(s, path, ServeOptions::default());
    let client = std::thread::spawn(move || {
        let stream = TcpStream::connect(&endpoint).unwrap();
        let mut reader = BufReader::new(stream.try_clone().unwrap());
        let mut writer = stream;
        writer
            .write_all(encode_frame(&Frame::Hello { version: 1 }).as_bytes())
            .unwrap();
        let mut line = String::new();
        reader.read_line(&mut line).unwrap(); // config
        line.clear();
        reader.read_line(&mut line).unwrap(); // sensor 0
                                              // reply with the wrong sequence number
        writer
            .write_all(
                encode_frame(&Frame::Actuation {
                    seq: 17,
                    t_us: 0,
                    t_w: 0.0,
                    delta: 0.0,
                })
                .as_bytes(),
            )
            .unwrap();
        // the server answers bye with the diagnostic
        line.clear();
        reader.read_line(&mut line).unwrap();
        decode_frame(&line).unwrap()
    });
    let err = server.join().unwrap().unwrap_err();
    assert!(matches!(
        err,
        CosimError::SeqMismatch {
            expected: 0,
            got: 17
        }
    ));
    assert_eq!(err.exit_code(), 3);
    let bye = client.join().unwrap();
    assert!(matches!(bye, Frame::Bye { .. }));
}

#[test]
fn controller_rejects_non_monotone_sensor_seq() {
    // A fake plant that skips to seq 5 right away.
    let (s, path) = short_scenario(5.0);
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let endpoint = listener.local_addr().unwrap().to_string();
    let digest = s.digest();
    let period_us = s.period_us();
    let fake_plant = std::thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        let mut reader = BufReader::new(stream.try_clone().unwrap());
        let mut writer = stream;
        let mut line = String::new();
        reader.read_line(&mut line).unwrap(); // hello
        writer
            .write_all(encode_frame(&Frame::Config { digest, period_us }).as_bytes())
            .unwrap();
        writer
            .write_all(
                encode_frame(&Frame::Sensor {
                    seq: 5,
                    t_us: 0,
                    vx: 20.0,
                    vy: 0.0,
                    psi: 0.0,
                    psi_dot: 0.0,
                    x: 0.0,
                    y: 0.0,
                    d: 0.0,
                    s_star: 0.0,
                })
                .as_bytes(),
            )
            .unwrap();
        line.clear();
        reader.read_line(&mut line).unwrap(); // bye from the controller
    });
    let err = controller_drive(&s, &path, &endpoint, Duration::from_secs(5)).unwrap_err();
    fake_plant.join().unwrap();
    assert!(matches!(
        err,
        CosimError::SeqMismatch {
            expected: 0,
            got: 5
        }
    ));
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn digest_mismatch_refuses_to_run() {
    let (s, path) = short_scenario(5.0);
    let (endpoint, server) = spawn_server(s.clone(), path.clone(), ServeOptions::default());
    let mut other = s;
    other.lateral.kp = 3.33; // different physics, different digest
    other.lateral.tau = 0.1;
    let err = controller_drive(&other, &path, &endpoint, Duration::from_secs(5)).unwrap_err();
    assert!(matches!(err, CosimError::DigestMismatch { .. }));
    assert_eq!(err.exit_code(), 1);
    // the server sees the client's bye and ends the (empty) session cleanly
    let outcome = server.join().unwrap().unwrap();
    assert_eq!(outcome.trace.rows.len(), 0);
    assert!(outcome.ended_by.contains("digest"));
}

#[test]
fn version_mismatch_is_rejected() {
    let (s, path) = short_scenario(5.0);
    let (endpoint, server) = spawn_server(s, path, ServeOptions::default());
    let stream = TcpStream::connect(&endpoint).unwrap();
    let mut writer = stream.try_clone().unwrap();
    let mut reader = BufReader::new(stream);
    writer
        .write_all(encode_frame(&Frame::Hello { version: 999 }).as_bytes())
        .unwrap();
    let mut line = String::new();
    reader.read_line(&mut line).unwrap();
    assert!(matches!(decode_frame(&line).unwrap(), Frame::Bye { .. }));
    let err = server.join().unwrap().unwrap_err();
    assert!(matches!(
        err,
        CosimError::VersionMismatch { theirs: 999, .. }
    ));
}

#[test]
fn zero_horizon_server_says_bye_after_handshake() {
    let (mut s, path) = short_scenario(1.0);
    s.horizon_s = 0.0;
    let (endpoint, server) = spawn_server(s.clone(), path.clone(), ServeOptions::default());
    let outcome_client = controller_drive(&s, &path, &endpoint, Duration::from_secs(5)).unwrap();
    assert_eq!(outcome_client.steps, 0);
    assert_eq!(outcome_client.ended_by, "horizon");
    let outcome = server.join().unwrap().unwrap();
    assert!(outcome.trace.rows.is_empty());
}

#[test]
fn actuation_timeout_aborts_session() {
    let (s, path) = short_scenario(5.0);
    let (endpoint, server) = spawn_server(
        s,
        path,
        ServeOptions {
            accept_timeout: Duration::from_secs(2),
            io_timeout: Duration::from_millis(200),
        },
    );
    // connect, handshake, then go silent
    let stream = TcpStream::connect(&endpoint).unwrap();
    let mut writer = stream.try_clone().unwrap();
    let mut reader = BufReader::new(stream);
    writer
        .write_all(encode_frame(&Frame::Hello { version: 1 }).as_bytes())
        .unwrap();
    let mut line = String::new();
    reader.read_line(&mut line).unwrap(); // config
    let err = server.join().unwrap().unwrap_err();
    assert!(matches!(err, CosimError::Timeout { .. }));
    assert_eq!(err.exit_code(), 2);
}
