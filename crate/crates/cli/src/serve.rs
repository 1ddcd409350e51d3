//! Line-oriented prediction: plain batch lines and newline-delimited JSON
//! requests over stdin/stdout or one TCP connection.

use std::io::{self, BufRead, Write};
use std::net::TcpListener;

use satd_core::models::TrainedModel;
use serde_json::{json, Value};

/// One output line per input line, order preserved: `label<TAB>score<TAB>comment`.
pub fn batch<R: BufRead, W: Write>(model: &TrainedModel, input: R, mut out: W) -> io::Result<usize> {
    let mut n = 0;
    for line in input.lines() {
        let line = line?;
        let (label, score) = model.predict_text(&line);
        writeln!(out, "{}\t{:.6}\t{}", label.name(), score, line)?;
        n += 1;
    }
    out.flush()?;
    Ok(n)
}

/// Response document for one request line.
pub fn respond(model: &TrainedModel, line: &str) -> Value {
    if line.trim().is_empty() {
        return json!({ "error": "empty request" });
    }
    let req: Value = match serde_json::from_str(line) {
        Ok(v) => v,
        Err(e) => return json!({ "error": format!("malformed request: {e}") }),
    };
    match req.get("text").and_then(Value::as_str) {
        Some(text) => {
            let (label, score) = model.predict_text(text);
            json!({ "label": label.name(), "score": score })
        }
        None => json!({ "error": "request must be an object with a string `text` field" }),
    }
}

pub fn serve<R: BufRead, W: Write>(model: &TrainedModel, input: R, mut out: W) -> io::Result<usize> {
    let mut n = 0;
    for line in input.lines() {
        let line = line?;
        writeln!(out, "{}", respond(model, &line))?;
        out.flush()?;
        n += 1;
    }
    Ok(n)
}

/// Accepts a single connection and serves it until the peer closes.
pub fn listen(model: &TrainedModel, addr: &str) -> io::Result<usize> {
    let listener = TcpListener::bind(addr)?;
    eprintln!("listening on {}", listener.local_addr()?);
    let (stream, peer) = listener.accept()?;
    log::info!("connection from {peer}");
    let reader = io::BufReader::new(stream.try_clone()?);
    serve(model, reader, stream)
}
