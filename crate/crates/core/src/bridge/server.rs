use super::protocol::{BridgeMessage, Op};
use super::{Bridge, BridgeError, Executed};
use log::{info, warn};
use std::io::{self, BufRead, BufReader, ErrorKind, Write};
use std::os::unix::net::{UnixListener, UnixStream};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

const ACCEPT_POLL: Duration = Duration::from_millis(20);

/// Who asked for what.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditRecord {
    pub request_id: u64,
    pub pid: Option<i32>,
    pub op: Op,
    pub args: Vec<String>,
}

enum Event {
    Progress(String),
    Done(BridgeMessage),
}

struct Job {
    request_id: u64,
    op: Op,
    args: Vec<String>,
    events: Sender<Event>,
}

/// The privileged service. Accepts any number of clients; requests go
/// through one FIFO queue so the backend never sees two transactions at once.
pub struct Server {
    listener: UnixListener,
    path: PathBuf,
    bridge: Arc<Bridge>,
    audit: Arc<Mutex<Vec<AuditRecord>>>,
}

pub struct ServerHandle {
    shutdown: Arc<AtomicBool>,
    thread: Option<JoinHandle<Result<(), BridgeError>>>,
    path: PathBuf,
    audit: Arc<Mutex<Vec<AuditRecord>>>,
}

impl ServerHandle {
    pub fn socket_path(&self) -> &Path {
        &self.path
    }

    pub fn audit_log(&self) -> Vec<AuditRecord> {
        self.audit.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn shutdown(mut self) -> Result<(), BridgeError> {
        self.stop()
    }

    fn stop(&mut self) -> Result<(), BridgeError> {
        self.shutdown.store(true, Ordering::SeqCst);
        match self.thread.take() {
            Some(t) => t.join().unwrap_or_else(|_| Err(BridgeError::Protocol("server thread panicked".into()))),
            None => Ok(()),
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        let _ = self.stop();
    }
}

fn peer_pid(stream: &UnixStream) -> Option<i32> {
    use nix::sys::socket::{getsockopt, sockopt::PeerCredentials};
    getsockopt(stream, PeerCredentials).ok().map(|c| c.pid())
}

impl Server {
    /// Binds the socket. A stale socket file nobody listens on is replaced;
    /// one with a live listener is an error.
    pub fn bind(path: &Path, bridge: Bridge) -> Result<Server, BridgeError> {
        let bind_err = |source: io::Error| BridgeError::SocketBind {
            path: path.display().to_string(),
            source,
        };
        if path.exists() {
            if UnixStream::connect(path).is_ok() {
                return Err(bind_err(io::Error::new(ErrorKind::AddrInUse, "a service is already listening")));
            }
            std::fs::remove_file(path).map_err(bind_err)?;
        }
        let listener = UnixListener::bind(path).map_err(bind_err)?;
        listener.set_nonblocking(true).map_err(bind_err)?;
        Ok(Server {
            listener,
            path: path.to_path_buf(),
            bridge: Arc::new(bridge),
            audit: Arc::new(Mutex::new(Vec::new())),
        })
    }

    pub fn audit_log(&self) -> Arc<Mutex<Vec<AuditRecord>>> {
        self.audit.clone()
    }

    /// Runs the service on a background thread.
    pub fn spawn(self) -> ServerHandle {
        let shutdown = Arc::new(AtomicBool::new(false));
        let path = self.path.clone();
        let audit = self.audit.clone();
        let flag = shutdown.clone();
        let thread = thread::spawn(move || self.run(&flag));
        ServerHandle {
            shutdown,
            thread: Some(thread),
            path,
            audit,
        }
    }

    /// Serves until `shutdown` is set, then removes the socket file.
    pub fn run(self, shutdown: &AtomicBool) -> Result<(), BridgeError> {
        let (jobs_tx, jobs_rx) = mpsc::channel::<Job>();
        let bridge = self.bridge.clone();
        let worker = thread::spawn(move || worker_loop(&bridge, jobs_rx));
        let mut open: Vec<UnixStream> = Vec::new();

        while !shutdown.load(Ordering::SeqCst) {
            match self.listener.accept() {
                Ok((stream, _)) => {
                    if let Err(e) = stream.set_nonblocking(false) {
                        warn!("dropping connection: {e}");
                        continue;
                    }
                    if let Ok(clone) = stream.try_clone() {
                        open.push(clone);
                    }
                    let jobs = jobs_tx.clone();
                    let audit = self.audit.clone();
                    thread::spawn(move || {
                        if let Err(e) = serve_connection(stream, &jobs, &audit) {
                            warn!("connection closed: {e}");
                        }
                    });
                }
                Err(e) if e.kind() == ErrorKind::WouldBlock => thread::sleep(ACCEPT_POLL),
                Err(e) if e.kind() == ErrorKind::Interrupted => {}
                Err(e) => warn!("accept failed: {e}"),
            }
        }

        info!("shutting down");
        for stream in &open {
            let _ = stream.shutdown(std::net::Shutdown::Both);
        }
        drop(jobs_tx);
        let _ = worker.join();
        let _ = std::fs::remove_file(&self.path);
        Ok(())
    }
}

fn worker_loop(bridge: &Bridge, jobs: Receiver<Job>) {
    for job in jobs {
        let events = job.events.clone();
        let result = catch_unwind(AssertUnwindSafe(|| {
            bridge.execute(job.op, &job.args, &mut |line| {
                let _ = events.send(Event::Progress(line.to_string()));
            })
        }));
        let response = match result {
            Ok(Ok(Executed::Discovered(d))) => {
                BridgeMessage::ok(job.request_id, job.op, vec![d.prefix, d.transform], Vec::new())
            }
            Ok(Ok(Executed::Changed(out))) => BridgeMessage::ok(job.request_id, job.op, out.packages, out.not_found),
            Ok(Err(e)) => BridgeMessage::failure(job.request_id, Some(job.op), &e.to_string()),
            Err(_) => {
                warn!("backend crashed during request {}", job.request_id);
                BridgeMessage::failure(job.request_id, Some(job.op), "backend crashed")
            }
        };
        let _ = job.events.send(Event::Done(response));
    }
}

fn send(writer: &mut UnixStream, msg: &BridgeMessage) -> io::Result<()> {
    let mut line = msg.encode();
    line.push('\n');
    writer.write_all(line.as_bytes())?;
    writer.flush()
}

fn serve_connection(
    stream: UnixStream,
    jobs: &Sender<Job>,
    audit: &Mutex<Vec<AuditRecord>>,
) -> io::Result<()> {
    let pid = peer_pid(&stream);
    let mut writer = stream.try_clone()?;
    for line in BufReader::new(stream).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (request_id, op, args) = match BridgeMessage::decode_request(&line) {
            Ok(req) => req,
            Err(bad) => {
                send(&mut writer, &BridgeMessage::failure(bad.request_id, None, "malformed"))?;
                continue;
            }
        };
        info!("request {request_id} from pid {pid:?}: {op} {}", args.join(" "));
        audit.lock().unwrap_or_else(|e| e.into_inner()).push(AuditRecord {
            request_id,
            pid,
            op,
            args: args.clone(),
        });

        let (tx, rx) = mpsc::channel();
        let job = Job {
            request_id,
            op,
            args,
            events: tx,
        };
        if jobs.send(job).is_err() {
            send(&mut writer, &BridgeMessage::failure(request_id, Some(op), "service shutting down"))?;
            return Ok(());
        }
        for event in rx {
            match event {
                Event::Progress(text) => send(&mut writer, &BridgeMessage::progress(request_id, &text))?,
                Event::Done(response) => {
                    send(&mut writer, &response)?;
                    break;
                }
            }
        }
    }
    Ok(())
}
