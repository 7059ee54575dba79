//! One frame per UDP datagram, no retransmission. Loss shows up as a
//! receive timeout.

use std::io::ErrorKind;
use std::net::{SocketAddr, ToSocketAddrs, UdpSocket};
use std::time::Duration;

use crate::wire::{EntityId, MAX_FRAME};

use super::TransportError;

#[derive(Debug)]
pub struct UdpEndpoint {
    pub entity_id: EntityId,
    socket: UdpSocket,
}

impl UdpEndpoint {
    pub fn local_addr(&self) -> Result<SocketAddr, TransportError> {
        Ok(self.socket.local_addr()?)
    }

    pub fn send(&self, to: SocketAddr, frame: &[u8]) -> Result<(), TransportError> {
        if frame.len() > MAX_FRAME {
            return Err(TransportError::Oversize(frame.len()));
        }
        self.socket.send_to(frame, to)?;
        Ok(())
    }

    /// Blocks for at most `timeout`; `Ok(None)` when nothing arrived.
    pub fn recv(&self, timeout: Duration) -> Result<Option<Vec<u8>>, TransportError> {
        // A zero read timeout means "block forever" to the OS.
        self.socket.set_read_timeout(Some(timeout.max(Duration::from_millis(1))))?;
        // One spare byte so an oversize datagram is noticed instead of
        // silently truncated to a valid-looking frame.
        let mut buf = [0u8; MAX_FRAME + 1];
        match self.socket.recv_from(&mut buf) {
            Ok((n, _)) if n > MAX_FRAME => Err(TransportError::Oversize(n)),
            Ok((n, _)) => Ok(Some(buf[..n].to_vec())),
            Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => Ok(None),
            Err(e) => Err(e.into()),
        }
    }
}

pub fn udp_bind(entity_id: EntityId, addr: impl ToSocketAddrs) -> Result<UdpEndpoint, TransportError> {
    Ok(UdpEndpoint { entity_id, socket: UdpSocket::bind(addr)? })
}

pub fn udp_send(ep: &UdpEndpoint, to: SocketAddr, frame: &[u8]) -> Result<(), TransportError> {
    ep.send(to, frame)
}

pub fn udp_recv(ep: &UdpEndpoint, timeout: Duration) -> Result<Option<Vec<u8>>, TransportError> {
    ep.recv(timeout)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::node::build_frame;
    use std::time::Instant;

    fn id(n: u32) -> EntityId {
        EntityId::new(n).unwrap()
    }

    #[test]
    fn loopback_max_frame_roundtrip() {
        let a = udp_bind(id(1), "127.0.0.1:0").unwrap();
        let b = udp_bind(id(2), "127.0.0.1:0").unwrap();
        let frame = build_frame(0x0a, 3, id(1), id(2), (0..280).map(|i| i as u8).collect());
        assert_eq!(frame.len(), 290);
        udp_send(&a, b.local_addr().unwrap(), &frame).unwrap();
        assert_eq!(udp_recv(&b, Duration::from_secs(2)).unwrap().unwrap(), frame);
    }

    #[test]
    fn recv_times_out_when_peer_silent() {
        let a = udp_bind(id(1), "127.0.0.1:0").unwrap();
        let start = Instant::now();
        assert_eq!(udp_recv(&a, Duration::from_millis(50)).unwrap(), None);
        assert!(start.elapsed() >= Duration::from_millis(40));
    }

    #[test]
    fn oversize_send_rejected() {
        let a = udp_bind(id(1), "127.0.0.1:0").unwrap();
        let to = a.local_addr().unwrap();
        assert!(matches!(udp_send(&a, to, &[0u8; 291]), Err(TransportError::Oversize(291))));
    }
}
