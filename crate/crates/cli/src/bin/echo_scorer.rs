//! Reference scorer for the `isaac-score/1` protocol: scores each request by
//! the length of its target sequence.
//!
//! `--fail nan|error|exit` misbehaves on the first request whose id contains
//! `--fail-on` (default: any id), for exercising the client's error paths.

use std::io::{self, BufRead, BufWriter, Write};

use serde_json::{json, Value};

const HANDSHAKE: &str = r#"{"protocol":"isaac-score/1"}"#;

#[derive(Clone, Copy, PartialEq)]
enum Fail {
    None,
    Nan,
    Error,
    Exit,
}

fn main() -> io::Result<()> {
    let mut fail = Fail::None;
    let mut fail_on = String::new();
    let mut args = std::env::args().skip(1);
    while let Some(a) = args.next() {
        match a.as_str() {
            "--fail" => {
                fail = match args.next().as_deref() {
                    Some("nan") => Fail::Nan,
                    Some("error") => Fail::Error,
                    Some("exit") => Fail::Exit,
                    other => {
                        eprintln!("unknown --fail mode {other:?}");
                        std::process::exit(2);
                    }
                }
            }
            "--fail-on" => fail_on = args.next().unwrap_or_default(),
            other => {
                eprintln!("unknown argument `{other}`");
                std::process::exit(2);
            }
        }
    }

    let stdin = io::stdin();
    let mut out = BufWriter::new(io::stdout().lock());
    let mut lines = stdin.lock().lines();
    match lines.next() {
        Some(Ok(l)) if l.trim() == HANDSHAKE => {}
        _ => {
            eprintln!("expected handshake");
            std::process::exit(1);
        }
    }
    writeln!(out, "{HANDSHAKE}")?;
    out.flush()?;

    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            out.flush()?;
            continue;
        }
        let req: Value = match serde_json::from_str(&line) {
            Ok(v) => v,
            Err(e) => {
                writeln!(out, "{}", json!({"id": null, "error": format!("malformed request: {e}")}))?;
                continue;
            }
        };
        let id = req["id"].as_str().unwrap_or_default().to_string();
        let target = req["target"].as_str().unwrap_or_default();
        if fail != Fail::None && id.contains(&fail_on) {
            match fail {
                Fail::Nan => writeln!(out, r#"{{"id":{},"score":NaN}}"#, json!(id))?,
                Fail::Error => writeln!(out, "{}", json!({"id": id, "error": "requested failure"}))?,
                Fail::Exit => std::process::exit(3),
                Fail::None => unreachable!(),
            }
            continue;
        }
        let score = target.chars().count() as f64;
        writeln!(out, "{}", json!({"id": id, "score": score}))?;
    }
    out.flush()
}
