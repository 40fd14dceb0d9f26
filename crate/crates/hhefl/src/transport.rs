//! Point-to-point links carrying envelopes: in-process channels and TCP.

use std::io::{self, BufReader, BufWriter};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::Arc;
use std::time::Duration;

use crate::error::{Error, Result};
use crate::wire::Envelope;

/// One end of an ordered, reliable link.
pub trait Link: Send {
    /// Sends a frame and returns its size in bytes.
    fn send(&mut self, env: Envelope) -> Result<usize>;

    /// Waits for the next frame; `None` waits forever.
    fn recv(&mut self, timeout: Option<Duration>) -> Result<Envelope>;
}

impl<L: Link + ?Sized> Link for Box<L> {
    fn send(&mut self, env: Envelope) -> Result<usize> {
        (**self).send(env)
    }

    fn recv(&mut self, timeout: Option<Duration>) -> Result<Envelope> {
        (**self).recv(timeout)
    }
}

/// In-process link over channels.
pub struct MemLink {
    tx: Sender<Envelope>,
    rx: Receiver<Envelope>,
}

pub fn mem_pair() -> (MemLink, MemLink) {
    let (a_tx, b_rx) = mpsc::channel();
    let (b_tx, a_rx) = mpsc::channel();
    (
        MemLink { tx: a_tx, rx: a_rx },
        MemLink { tx: b_tx, rx: b_rx },
    )
}

impl Link for MemLink {
    fn send(&mut self, env: Envelope) -> Result<usize> {
        let n = env.frame_len();
        self.tx.send(env).map_err(|_| Error::Disconnected)?;
        Ok(n)
    }

    fn recv(&mut self, timeout: Option<Duration>) -> Result<Envelope> {
        match timeout {
            None => self.rx.recv().map_err(|_| Error::Disconnected),
            Some(t) => self.rx.recv_timeout(t).map_err(|e| match e {
                RecvTimeoutError::Timeout => Error::Timeout,
                RecvTimeoutError::Disconnected => Error::Disconnected,
            }),
        }
    }
}

/// Length-prefixed envelopes over a TCP stream.
pub struct TcpLink {
    reader: BufReader<TcpStream>,
    writer: BufWriter<TcpStream>,
}

impl TcpLink {
    pub fn new(stream: TcpStream) -> Result<Self> {
        stream.set_nodelay(true)?;
        Ok(TcpLink {
            reader: BufReader::with_capacity(1 << 16, stream.try_clone()?),
            writer: BufWriter::with_capacity(1 << 16, stream),
        })
    }

    /// Connects, retrying while the listener is not up yet.
    pub fn connect<A: ToSocketAddrs + Clone>(addr: A, attempts: usize) -> Result<Self> {
        let mut last = None;
        for _ in 0..attempts.max(1) {
            match TcpStream::connect(addr.clone()) {
                Ok(s) => return Self::new(s),
                Err(e) => {
                    last = Some(e);
                    std::thread::sleep(Duration::from_millis(100));
                }
            }
        }
        Err(last.map_or(Error::Disconnected, Error::Io))
    }

    pub fn accept(listener: &TcpListener) -> Result<Self> {
        Self::new(listener.accept()?.0)
    }
}

fn map_io(e: Error) -> Error {
    match e {
        Error::Io(io) => match io.kind() {
            io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut => Error::Timeout,
            io::ErrorKind::UnexpectedEof
            | io::ErrorKind::ConnectionReset
            | io::ErrorKind::ConnectionAborted
            | io::ErrorKind::BrokenPipe => Error::Disconnected,
            _ => Error::Io(io),
        },
        other => other,
    }
}

impl Link for TcpLink {
    fn send(&mut self, env: Envelope) -> Result<usize> {
        env.write_to(&mut self.writer).map_err(map_io)?;
        Ok(env.frame_len())
    }

    fn recv(&mut self, timeout: Option<Duration>) -> Result<Envelope> {
        self.reader.get_ref().set_read_timeout(timeout)?;
        Envelope::read_from(&mut self.reader).map_err(map_io)
    }
}

/// Observer of frames passing through a link.
pub type Tap = Arc<dyn Fn(&Envelope) + Send + Sync>;

/// A link that shows every received frame to a tap.
pub struct Tapped<L> {
    inner: L,
    tap: Tap,
}

impl<L: Link> Tapped<L> {
    pub fn new(inner: L, tap: Tap) -> Self {
        Tapped { inner, tap }
    }
}

impl<L: Link> Link for Tapped<L> {
    fn send(&mut self, env: Envelope) -> Result<usize> {
        self.inner.send(env)
    }

    fn recv(&mut self, timeout: Option<Duration>) -> Result<Envelope> {
        let env = self.inner.recv(timeout)?;
        (self.tap)(&env);
        Ok(env)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wire::MsgType;
    use std::thread;

    fn frames() -> Vec<Envelope> {
        MsgType::ALL
            .iter()
            .enumerate()
            .map(|(i, &k)| Envelope::new(k, i as u32 * 7, vec![i as u8; i * 100]))
            .collect()
    }

    #[test]
    fn mem_link_in_order() {
        let (mut a, mut b) = mem_pair();
        for f in frames() {
            assert_eq!(a.send(f.clone()).unwrap(), f.frame_len());
        }
        for f in frames() {
            assert_eq!(b.recv(None).unwrap(), f);
        }
        assert!(matches!(b.recv(Some(Duration::from_millis(5))), Err(Error::Timeout)));
        drop(a);
        assert!(matches!(b.recv(None), Err(Error::Disconnected)));
    }

    #[test]
    fn tcp_link_in_order() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let h = thread::spawn(move || {
            let mut c = TcpLink::connect(addr, 10).unwrap();
            for f in frames() {
                c.send(f).unwrap();
            }
            let echo = c.recv(None).unwrap();
            assert_eq!(echo.kind, MsgType::Abort);
        });
        let mut s = TcpLink::accept(&listener).unwrap();
        for f in frames() {
            assert_eq!(s.recv(None).unwrap(), f);
        }
        assert!(matches!(s.recv(Some(Duration::from_millis(20))), Err(Error::Timeout)));
        s.send(Envelope::new(MsgType::Abort, 0, vec![])).unwrap();
        h.join().unwrap();
        assert!(matches!(s.recv(None), Err(Error::Disconnected)));
    }
}
