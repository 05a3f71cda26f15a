use super::protocol::{BridgeMessage, Kind, Op, Status};
use super::{BridgeApi, BridgeError, DiscoverOutcome, Outcome};
use std::io::{BufRead, BufReader, Write};
use std::os::unix::net::UnixStream;
use std::path::Path;

/// Blocking client for the bridge service; one request at a time.
pub struct Client {
    writer: UnixStream,
    reader: BufReader<UnixStream>,
    next_id: u64,
}

impl Client {
    pub fn connect(path: &Path) -> Result<Client, BridgeError> {
        let writer = UnixStream::connect(path)?;
        let reader = BufReader::new(writer.try_clone()?);
        Ok(Client {
            writer,
            reader,
            next_id: 1,
        })
    }

    fn read_message(&mut self) -> Result<BridgeMessage, BridgeError> {
        let mut line = String::new();
        if self.reader.read_line(&mut line)? == 0 {
            return Err(BridgeError::Protocol("service closed the connection".into()));
        }
        BridgeMessage::decode(line.trim_end()).map_err(|e| BridgeError::Protocol(e.to_string()))
    }

    /// Sends one raw line and waits for its Response, discarding progress.
    pub fn send_raw(&mut self, line: &str) -> Result<BridgeMessage, BridgeError> {
        self.writer.write_all(line.as_bytes())?;
        self.writer.write_all(b"\n")?;
        loop {
            let msg = self.read_message()?;
            if msg.kind == Kind::Response {
                return Ok(msg);
            }
        }
    }

    /// Sends a request and returns its Response; Progress lines go to
    /// `progress` as they arrive.
    pub fn request(
        &mut self,
        op: Op,
        args: &[String],
        progress: &mut dyn FnMut(&str),
    ) -> Result<BridgeMessage, BridgeError> {
        let id = self.next_id;
        self.next_id += 1;
        let mut line = BridgeMessage::request(id, op, args.to_vec()).encode();
        line.push('\n');
        self.writer.write_all(line.as_bytes())?;
        loop {
            let msg = self.read_message()?;
            if msg.request_id != id {
                return Err(BridgeError::Protocol(format!(
                    "expected request id {id}, got {}",
                    msg.request_id
                )));
            }
            match msg.kind {
                Kind::Progress => progress(msg.text.as_deref().unwrap_or_default()),
                Kind::Response => return Ok(msg),
                Kind::Request => return Err(BridgeError::Protocol("unexpected request from service".into())),
            }
        }
    }

    fn changed(&mut self, op: Op, names: &[String], progress: &mut dyn FnMut(&str)) -> Result<Outcome, BridgeError> {
        let msg = self.request(op, names, progress)?;
        match msg.status {
            Some(Status::Ok) => Ok(Outcome {
                packages: msg.args.unwrap_or_default(),
                not_found: msg.not_found.unwrap_or_default(),
            }),
            _ => Err(BridgeError::Remote(msg.error.unwrap_or_else(|| "unknown error".into()))),
        }
    }
}

impl BridgeApi for Client {
    fn discover(&mut self) -> Result<DiscoverOutcome, BridgeError> {
        let msg = self.request(Op::Discover, &[], &mut |_| {})?;
        if msg.status != Some(Status::Ok) {
            return Err(BridgeError::Remote(msg.error.unwrap_or_else(|| "unknown error".into())));
        }
        match msg.args.as_deref() {
            Some([prefix, transform]) => Ok(DiscoverOutcome {
                prefix: prefix.clone(),
                transform: transform.clone(),
            }),
            _ => Err(BridgeError::Protocol("discover response needs [prefix, transform]".into())),
        }
    }

    fn install(&mut self, names: &[String], progress: &mut dyn FnMut(&str)) -> Result<Outcome, BridgeError> {
        self.changed(Op::Install, names, progress)
    }

    fn remove(&mut self, names: &[String], progress: &mut dyn FnMut(&str)) -> Result<Outcome, BridgeError> {
        self.changed(Op::Remove, names, progress)
    }
}
