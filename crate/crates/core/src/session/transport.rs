//! Frame carriers between the three roles.

use std::collections::{HashMap, VecDeque};
use std::io::{self, Read, Write};
use std::net::{Ipv4Addr, SocketAddr, TcpListener, TcpStream};
use std::sync::mpsc::{self, Receiver};
use std::thread::JoinHandle;
use std::time::Duration;

use crate::error::{Error, Result};
use crate::session::wire::{read_frame, Link};

/// Moves whole frames along directed links. Frames on one link arrive in
/// the order they were sent.
pub trait Transport {
    fn send(&mut self, link: Link, frame: &[u8]) -> Result<()>;
    /// Blocks until the next frame on `link` is available.
    fn recv(&mut self, link: Link) -> Result<Vec<u8>>;
}

#[derive(Debug, Default)]
pub struct InProcTransport {
    queues: HashMap<Link, VecDeque<Vec<u8>>>,
}

impl InProcTransport {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Transport for InProcTransport {
    fn send(&mut self, link: Link, frame: &[u8]) -> Result<()> {
        self.queues.entry(link).or_default().push_back(frame.to_vec());
        Ok(())
    }

    fn recv(&mut self, link: Link) -> Result<Vec<u8>> {
        self.queues
            .get_mut(&link)
            .and_then(VecDeque::pop_front)
            .ok_or_else(|| Error::Io(io::Error::new(io::ErrorKind::WouldBlock, "no frame pending")))
    }
}

/// One loopback TCP connection per directed link. The referee's listener
/// accepts all six; each connection opens with a one-byte link id. Incoming
/// bytes are drained by a reader thread per connection so that a large
/// burst of sends never blocks on a full socket buffer.
pub struct TcpTransport {
    port: u16,
    writers: HashMap<Link, TcpStream>,
    inboxes: HashMap<Link, Receiver<io::Result<Vec<u8>>>>,
    readers: Vec<JoinHandle<()>>,
    timeout: Duration,
}

impl TcpTransport {
    /// Listens on `127.0.0.1:port` (0 picks a free port) and connects every
    /// link through it.
    pub fn connect(port: u16) -> Result<Self> {
        let listener = TcpListener::bind(SocketAddr::from((Ipv4Addr::LOCALHOST, port)))?;
        let addr = listener.local_addr()?;
        let mut writers = HashMap::new();
        let mut inboxes = HashMap::new();
        let mut readers = Vec::new();
        for link in Link::ALL {
            let mut client = TcpStream::connect(addr)?;
            client.set_nodelay(true)?;
            client.write_all(&[link.id()])?;
            let (mut server, _) = listener.accept()?;
            let mut id = [0u8; 1];
            server.read_exact(&mut id)?;
            let accepted = Link::from_id(id[0]).ok_or_else(|| Error::decode("link id", id[0].to_string()))?;
            let (tx, rx) = mpsc::channel();
            readers.push(std::thread::spawn(move || loop {
                match read_frame(&mut server) {
                    Ok(Some(frame)) => {
                        if tx.send(Ok(frame)).is_err() {
                            break;
                        }
                    }
                    Ok(None) => break,
                    Err(e) => {
                        let _ = tx.send(Err(e));
                        break;
                    }
                }
            }));
            writers.insert(link, client);
            inboxes.insert(accepted, rx);
        }
        Ok(TcpTransport {
            port: addr.port(),
            writers,
            inboxes,
            readers,
            timeout: Duration::from_secs(60),
        })
    }

    pub fn port(&self) -> u16 {
        self.port
    }
}

impl Transport for TcpTransport {
    fn send(&mut self, link: Link, frame: &[u8]) -> Result<()> {
        let stream = self.writers.get_mut(&link).expect("every link is connected");
        stream.write_all(frame)?;
        Ok(())
    }

    fn recv(&mut self, link: Link) -> Result<Vec<u8>> {
        let inbox = self.inboxes.get(&link).expect("every link is connected");
        match inbox.recv_timeout(self.timeout) {
            Ok(Ok(frame)) => Ok(frame),
            Ok(Err(e)) => Err(Error::Io(e)),
            Err(_) => Err(Error::Io(io::Error::new(io::ErrorKind::TimedOut, "no frame arrived"))),
        }
    }
}

impl Drop for TcpTransport {
    fn drop(&mut self) {
        for stream in self.writers.values() {
            let _ = stream.shutdown(std::net::Shutdown::Both);
        }
        self.writers.clear();
        self.inboxes.clear();
        for handle in self.readers.drain(..) {
            let _ = handle.join();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::session::wire::{encode_frame, Restart, Role, WireMessage};

    fn exercise(t: &mut dyn Transport) {
        let a = encode_frame(&WireMessage::Restart(Restart { round: 0, attempt: 1 }));
        let b = encode_frame(&WireMessage::Restart(Restart { round: 0, attempt: 2 }));
        let big = vec![7u8; 3 << 20];
        let ab = Link::new(Role::Alice, Role::Bob);
        let rb = Link::new(Role::Referee, Role::Bob);
        t.send(ab, &a).unwrap();
        t.send(rb, &b).unwrap();
        let mut big_frame = vec![0, 0x30, 0, 0, 1, 9];
        big_frame.extend_from_slice(&big);
        t.send(ab, &big_frame).unwrap();
        t.send(ab, &b).unwrap();
        assert_eq!(t.recv(rb).unwrap(), b);
        assert_eq!(t.recv(ab).unwrap(), a);
        assert_eq!(t.recv(ab).unwrap(), big_frame);
        assert_eq!(t.recv(ab).unwrap(), b);
    }

    #[test]
    fn inproc_keeps_link_order() {
        let mut t = InProcTransport::new();
        exercise(&mut t);
        assert!(t.recv(Link::new(Role::Bob, Role::Alice)).is_err());
    }

    #[test]
    fn tcp_keeps_link_order() {
        let mut t = TcpTransport::connect(0).unwrap();
        assert_ne!(t.port(), 0);
        exercise(&mut t);
    }
}
