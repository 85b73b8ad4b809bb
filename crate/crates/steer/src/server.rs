//! TCP transport: each connection gets a reader thread that decodes
//! requests and a writer thread that serializes replies and stream updates
//! in the order they were produced.

use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::mpsc;
use std::sync::Arc;

use crate::manager::SessionManager;
use crate::protocol::{decode_request, encode_message, Message};

/// Accepts connections until the listener fails.
pub fn serve(listener: TcpListener, manager: Arc<SessionManager>) -> std::io::Result<()> {
    for stream in listener.incoming() {
        let stream = stream?;
        let manager = Arc::clone(&manager);
        std::thread::spawn(move || {
            if let Err(e) = connection(stream, &manager) {
                eprintln!("connection closed: {e}");
            }
        });
    }
    Ok(())
}

fn connection(stream: TcpStream, manager: &SessionManager) -> std::io::Result<()> {
    let (outbox, inbox) = mpsc::channel::<Message>();
    let mut writer = stream.try_clone()?;
    std::thread::spawn(move || {
        for message in inbox {
            let mut line = encode_message(&message);
            line.push('\n');
            if writer.write_all(line.as_bytes()).is_err() {
                break;
            }
        }
    });
    for line in BufReader::new(stream).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match decode_request(&line) {
            Ok(request) => manager.handle(request, &outbox),
            Err(error) => {
                let _ = outbox.send(error);
            }
        }
    }
    // Sessions keep their own clones of the outbox for subscriptions; the
    // writer thread ends on its own once those are gone too.
    drop(outbox);
    Ok(())
}
