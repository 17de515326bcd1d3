//! Application-facing socket API (`sock_udp`, `sock_ip`) and a thin
//! POSIX-style adapter.
//!
//! Socket state is a plain value owned by the caller. Delivery goes to a
//! passive mailbox registered in netreg; `recv` drives the node's scheduler
//! until something arrives or the virtual timeout passes. `send` only
//! queues: the caller runs the node to push packets through the stack.

use std::net::Ipv6Addr;

use thiserror::Error;

use crate::cost::Layer;
use crate::ipv6::{self, Ipv6Error, Ipv6Header};
use crate::netapi::{NetApiError, NetMsg, PktKind};
use crate::netreg::{DemuxCtx, NetregEntry};
use crate::pktbuf::{PktBufError, SnipId};
use crate::sched::Node;
use crate::types::{EndpointId, NetType, VirtualTime};
use crate::udp::{self, UdpHeader};

/// Datagrams a socket buffers before further ones are dropped.
pub const SOCK_INBOX: usize = 2;
pub const EPHEMERAL_PORTS: std::ops::RangeInclusive<u16> = 49152..=65535;
pub const MAX_IP_PAYLOAD: usize = u16::MAX as usize;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SockError {
    #[error("local address already bound")]
    AddressInUse,
    #[error("no free ephemeral port")]
    NoPorts,
    #[error("no destination given and no remote configured")]
    NoDestination,
    #[error("payload of {0} bytes is too large")]
    MessageTooLarge(usize),
    #[error(transparent)]
    Route(#[from] Ipv6Error),
    #[error("node has no {0} layer")]
    NoStack(&'static str),
    #[error("packet buffer exhausted")]
    OutOfMemory,
    #[error("stack busy: {0}")]
    Busy(NetApiError),
    #[error("timed out")]
    Timeout,
    #[error("datagram of {needed} bytes does not fit the buffer; dropped")]
    BufferTooSmall { needed: usize },
}

impl From<PktBufError> for SockError {
    fn from(_: PktBufError) -> Self {
        SockError::OutOfMemory
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UdpEp {
    pub addr: Ipv6Addr,
    pub port: u16,
}

impl UdpEp {
    pub fn new(addr: Ipv6Addr, port: u16) -> UdpEp {
        UdpEp { addr, port }
    }

    /// Any local address.
    pub fn any(port: u16) -> UdpEp {
        UdpEp::new(Ipv6Addr::UNSPECIFIED, port)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IpEp {
    pub addr: Ipv6Addr,
    pub protocol: u8,
}

impl IpEp {
    pub fn new(addr: Ipv6Addr, protocol: u8) -> IpEp {
        IpEp { addr, protocol }
    }
}

/// A netreg-registered passive mailbox.
#[derive(Debug)]
struct Inbox {
    id: EndpointId,
    entry: NetregEntry,
}

impl Inbox {
    fn open(node: &mut Node, name: &str, ty: NetType, ctx: DemuxCtx) -> Result<Inbox, SockError> {
        if !node.netreg().lookup_exact(ty, ctx).is_empty() {
            return Err(SockError::AddressInUse);
        }
        let id = node.spawn_mailbox(name, SOCK_INBOX);
        let entry = NetregEntry::new(ty, ctx, id);
        node.netreg()
            .register(entry)
            .map_err(|_| SockError::AddressInUse)?;
        Ok(Inbox { id, entry })
    }

    /// Waits for the next packet; the caller owns the returned reference.
    fn wait(&self, node: &mut Node, timeout: VirtualTime) -> Result<SnipId, SockError> {
        let deadline = node.now().saturating_add(timeout);
        loop {
            let id = self.id;
            if !node.run_until(deadline, |n| n.mailbox_len(id) > 0) {
                return Err(SockError::Timeout);
            }
            match node.pop_message(id) {
                Some(NetMsg::Rcv(p)) => return Ok(p),
                Some(other) => node.discard_message(other),
                None => return Err(SockError::Timeout),
            }
        }
    }

    fn close(self, node: &mut Node) {
        let _ = node.netreg().unregister(self.entry);
        node.kill(self.id);
    }
}

fn with_sock_layer<R>(node: &Node, f: impl FnOnce() -> R) -> R {
    let prev = node.meter().enter(Layer::Sock);
    let r = f();
    node.meter().enter(prev);
    r
}

/// Copies the payload snip of a received chain into `buf`.
fn copy_payload(node: &Node, pkt: SnipId, buf: &mut [u8]) -> Result<usize, SockError> {
    let pb = node.pktbuf();
    let len = pb.len(pkt).unwrap_or(0);
    if len > buf.len() {
        let _ = pb.release(pkt);
        return Err(SockError::BufferTooSmall { needed: len });
    }
    let data = pb.read(pkt)?;
    buf[..len].copy_from_slice(&data);
    Ok(len)
}

fn ip_header(node: &Node, pkt: SnipId) -> Option<Ipv6Header> {
    let pb = node.pktbuf();
    let h = pb.search_type(pkt, NetType::Ipv6)?;
    pb.with_data(h, Ipv6Header::parse).ok()?.ok()
}

fn check_route(node: &Node, dst: &Ipv6Addr) -> Result<(), SockError> {
    let ip = node.ipv6().ok_or(SockError::NoStack("IPv6"))?;
    ip.check_route(dst).map_err(SockError::from)
}

fn post(node: &mut Node, to: EndpointId, pkt: SnipId) -> Result<(), SockError> {
    let prev = node.meter().enter(Layer::Sock);
    let r = node.netapi_send(to, PktKind::Snd, pkt);
    node.meter().enter(prev);
    r.map_err(|e| {
        let _ = node.pktbuf().release(pkt);
        SockError::Busy(e)
    })
}

/// UDP socket.
#[derive(Debug)]
pub struct SockUdp {
    local: UdpEp,
    remote: Option<UdpEp>,
    inbox: Inbox,
}

impl SockUdp {
    /// Binds `local`; port 0 picks a free ephemeral port.
    pub fn create(node: &mut Node, local: UdpEp, remote: Option<UdpEp>) -> Result<SockUdp, SockError> {
        let mut local = local;
        if local.port == 0 {
            local.port = EPHEMERAL_PORTS
                .clone()
                .find(|p| node.netreg().lookup_exact(NetType::Udp, *p as DemuxCtx).is_empty())
                .ok_or(SockError::NoPorts)?;
        }
        let inbox = Inbox::open(node, "sock_udp", NetType::Udp, local.port as DemuxCtx)?;
        Ok(SockUdp {
            local,
            remote,
            inbox,
        })
    }

    pub fn local(&self) -> UdpEp {
        self.local
    }

    pub fn remote(&self) -> Option<UdpEp> {
        self.remote
    }

    /// Datagrams dropped because the inbox was full.
    pub fn dropped(&self, node: &Node) -> u64 {
        node.mailbox_stats(self.inbox.id).dropped
    }

    /// Queues one datagram. Returns the payload length.
    pub fn send(&self, node: &mut Node, payload: &[u8], dst: Option<UdpEp>) -> Result<usize, SockError> {
        let dst = dst.or(self.remote).ok_or(SockError::NoDestination)?;
        if payload.len() > udp::MAX_PAYLOAD {
            return Err(SockError::MessageTooLarge(payload.len()));
        }
        let udp_ep = node.udp_endpoint().ok_or(SockError::NoStack("UDP"))?;
        check_route(node, &dst.addr)?;
        let pkt = with_sock_layer(node, || -> Result<SnipId, SockError> {
            let pb = node.pktbuf();
            let data = pb.add(None, payload, NetType::Undef)?;
            let u = udp::header_snip(pb, Some(data), self.local.port, dst.port).inspect_err(|_| {
                let _ = pb.release(data);
            })?;
            Ok(ipv6::header_snip(pb, Some(u), self.local.addr, dst.addr, ipv6::NEXT_HEADER_UDP)
                .inspect_err(|_| {
                    let _ = pb.release(u);
                })?)
        })?;
        post(node, udp_ep, pkt)?;
        Ok(payload.len())
    }

    /// Receives one datagram into `buf`.
    pub fn recv(
        &self,
        node: &mut Node,
        buf: &mut [u8],
        timeout: VirtualTime,
    ) -> Result<(usize, UdpEp), SockError> {
        let pkt = self.inbox.wait(node, timeout)?;
        with_sock_layer(node, || {
            let pb = node.pktbuf();
            let port = pb
                .search_type(pkt, NetType::Udp)
                .and_then(|h| pb.with_data(h, UdpHeader::parse).ok()?.ok())
                .map_or(0, |h| h.src_port);
            let addr = ip_header(node, pkt).map_or(Ipv6Addr::UNSPECIFIED, |h| h.src);
            let n = copy_payload(node, pkt, buf)?;
            let _ = pb.release(pkt);
            Ok((n, UdpEp::new(addr, port)))
        })
    }

    pub fn close(self, node: &mut Node) {
        self.inbox.close(node);
    }
}

/// Raw IPv6 socket keyed by next-header value.
#[derive(Debug)]
pub struct SockIp {
    local: IpEp,
    remote: Option<IpEp>,
    inbox: Inbox,
}

impl SockIp {
    pub fn create(node: &mut Node, local: IpEp, remote: Option<IpEp>) -> Result<SockIp, SockError> {
        let inbox = Inbox::open(node, "sock_ip", NetType::Ipv6, local.protocol as DemuxCtx)?;
        Ok(SockIp {
            local,
            remote,
            inbox,
        })
    }

    pub fn local(&self) -> IpEp {
        self.local
    }

    pub fn dropped(&self, node: &Node) -> u64 {
        node.mailbox_stats(self.inbox.id).dropped
    }

    /// Queues one packet carrying `payload` with the local protocol number.
    pub fn send(&self, node: &mut Node, payload: &[u8], dst: Option<Ipv6Addr>) -> Result<usize, SockError> {
        let dst = dst
            .or(self.remote.map(|r| r.addr))
            .ok_or(SockError::NoDestination)?;
        if payload.len() > MAX_IP_PAYLOAD {
            return Err(SockError::MessageTooLarge(payload.len()));
        }
        let ip_ep = node.ipv6_endpoint().ok_or(SockError::NoStack("IPv6"))?;
        check_route(node, &dst)?;
        let pkt = with_sock_layer(node, || -> Result<SnipId, SockError> {
            let pb = node.pktbuf();
            let data = pb.add(None, payload, NetType::Undef)?;
            Ok(
                ipv6::header_snip(pb, Some(data), self.local.addr, dst, self.local.protocol)
                    .inspect_err(|_| {
                        let _ = pb.release(data);
                    })?,
            )
        })?;
        post(node, ip_ep, pkt)?;
        Ok(payload.len())
    }

    pub fn recv(
        &self,
        node: &mut Node,
        buf: &mut [u8],
        timeout: VirtualTime,
    ) -> Result<(usize, IpEp), SockError> {
        let pkt = self.inbox.wait(node, timeout)?;
        with_sock_layer(node, || {
            let hdr = ip_header(node, pkt);
            let n = copy_payload(node, pkt, buf)?;
            let _ = node.pktbuf().release(pkt);
            let from = hdr.map_or(IpEp::new(Ipv6Addr::UNSPECIFIED, self.local.protocol), |h| {
                IpEp::new(h.src, h.next_header)
            });
            Ok((n, from))
        })
    }

    pub fn close(self, node: &mut Node) {
        self.inbox.close(node);
    }
}

/// Minimal BSD-socket shaped adapter over [`SockUdp`].
#[derive(Debug, Default)]
pub struct PosixUdpSocket {
    sock: Option<SockUdp>,
    peer: Option<UdpEp>,
    timeout: Option<VirtualTime>,
}

impl PosixUdpSocket {
    pub fn socket() -> PosixUdpSocket {
        PosixUdpSocket::default()
    }

    pub fn bind(&mut self, node: &mut Node, addr: Ipv6Addr, port: u16) -> Result<(), SockError> {
        if self.sock.is_some() {
            return Err(SockError::AddressInUse);
        }
        self.sock = Some(SockUdp::create(node, UdpEp::new(addr, port), None)?);
        Ok(())
    }

    pub fn connect(&mut self, addr: Ipv6Addr, port: u16) {
        self.peer = Some(UdpEp::new(addr, port));
    }

    /// `None` blocks until a datagram arrives.
    pub fn set_recv_timeout(&mut self, timeout: Option<VirtualTime>) {
        self.timeout = timeout;
    }

    pub fn local_port(&self) -> Option<u16> {
        self.sock.as_ref().map(|s| s.local().port)
    }

    fn bound(&mut self, node: &mut Node) -> Result<&SockUdp, SockError> {
        if self.sock.is_none() {
            self.sock = Some(SockUdp::create(node, UdpEp::any(0), None)?);
        }
        Ok(self.sock.as_ref().expect("bound"))
    }

    pub fn sendto(&mut self, node: &mut Node, buf: &[u8], addr: Ipv6Addr, port: u16) -> Result<usize, SockError> {
        self.bound(node)?.send(node, buf, Some(UdpEp::new(addr, port)))
    }

    pub fn send(&mut self, node: &mut Node, buf: &[u8]) -> Result<usize, SockError> {
        let peer = self.peer.ok_or(SockError::NoDestination)?;
        self.sendto(node, buf, peer.addr, peer.port)
    }

    pub fn recvfrom(&mut self, node: &mut Node, buf: &mut [u8]) -> Result<(usize, Ipv6Addr, u16), SockError> {
        let timeout = self.timeout.unwrap_or(VirtualTime::MAX);
        let (n, from) = self.bound(node)?.recv(node, buf, timeout)?;
        Ok((n, from.addr, from.port))
    }

    pub fn close(self, node: &mut Node) {
        if let Some(s) = self.sock {
            s.close(node);
        }
    }
}
