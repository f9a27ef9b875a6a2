//! Stdio and TCP front ends. Both speak the same newline-delimited protocol.

use std::io::{self, BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::str::FromStr;
use std::sync::Arc;
use std::thread;

use crate::server::Server;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Transport {
    Stdio,
    Tcp(String),
}

impl FromStr for Transport {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "stdio" {
            return Ok(Transport::Stdio);
        }
        match s.strip_prefix("tcp:") {
            Some(addr) if addr.rsplit_once(':').is_some_and(|(h, p)| !h.is_empty() && p.parse::<u16>().is_ok()) => {
                Ok(Transport::Tcp(addr.to_string()))
            }
            _ => Err(format!("transport must be `stdio` or `tcp:HOST:PORT`, got `{s}`")),
        }
    }
}

/// Answers each non-blank line in order until the input ends.
pub fn serve_lines<R: BufRead, W: Write>(server: &Server, input: R, mut output: W) -> io::Result<()> {
    for line in input.lines() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let response = server.handle_line(line);
        output.write_all(response.as_bytes())?;
        output.write_all(b"\n")?;
        output.flush()?;
    }
    Ok(())
}

pub fn serve_stdio(server: &Server) -> io::Result<()> {
    let stdin = io::stdin();
    let stdout = io::stdout();
    serve_lines(server, stdin.lock(), stdout.lock())
}

fn handle_connection(server: Arc<Server>, stream: TcpStream) -> io::Result<()> {
    // one small line per reply; waiting to coalesce only adds latency
    stream.set_nodelay(true)?;
    let reader = BufReader::new(stream.try_clone()?);
    serve_lines(&server, reader, stream)
}

/// Accepts connections forever; each connection gets its own thread.
pub fn serve_tcp(server: Arc<Server>, listener: TcpListener) -> io::Result<()> {
    for stream in listener.incoming() {
        let stream = stream?;
        let server = Arc::clone(&server);
        thread::spawn(move || {
            if let Err(e) = handle_connection(server, stream) {
                eprintln!("connection closed: {e}");
            }
        });
    }
    Ok(())
}
