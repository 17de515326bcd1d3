//! Minimal IPv6: header codec, checksums, forwarding table, static neighbor
//! cache and the IPv6 endpoint.

use std::any::Any;
use std::collections::HashMap;
use std::net::Ipv6Addr;

use thiserror::Error;

use crate::cost::Layer;
use crate::netapi::{check_set_len, errno, NetMsg, NetOpt, OptionRequest, PktKind};
use crate::netif::NetifHeader;
use crate::netreg::{DemuxCtx, DEMUX_CTX_ALL};
use crate::pktbuf::{PktBuf, PktBufError, SnipId};
use crate::sched::{Ctx, Endpoint, Envelope};
use crate::types::{EndpointId, L2Addr, NetType};

pub const HEADER_LEN: usize = 40;
pub const NEXT_HEADER_UDP: u8 = 17;
pub const DEFAULT_HOP_LIMIT: u8 = 64;
/// Minimum link MTU every IPv6 link must support.
pub const MIN_MTU: usize = 1280;
/// Interface id of the software loopback.
pub const LOOPBACK_IFACE: EndpointId = EndpointId(u16::MAX);

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Ipv6Error {
    #[error("header shorter than 40 bytes")]
    Truncated,
    #[error("version {0} is not 6")]
    BadVersion(u8),
    #[error("payload length {declared} does not match {actual} received bytes")]
    LengthMismatch { declared: usize, actual: usize },
    #[error("no route to {0}")]
    NoRoute(Ipv6Addr),
    #[error("no neighbor entry for {0}")]
    NeighborUnresolved(Ipv6Addr),
    #[error("prefix length {0} exceeds 128")]
    BadPrefixLen(u8),
    #[error(transparent)]
    Buffer(#[from] PktBufError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ipv6Header {
    pub traffic_class: u8,
    pub flow_label: u32,
    pub payload_len: u16,
    pub next_header: u8,
    pub hop_limit: u8,
    pub src: Ipv6Addr,
    pub dst: Ipv6Addr,
}

impl Ipv6Header {
    pub fn new(src: Ipv6Addr, dst: Ipv6Addr, next_header: u8, payload_len: u16) -> Ipv6Header {
        Ipv6Header {
            traffic_class: 0,
            flow_label: 0,
            payload_len,
            next_header,
            hop_limit: DEFAULT_HOP_LIMIT,
            src,
            dst,
        }
    }

    pub fn to_bytes(&self) -> [u8; HEADER_LEN] {
        let mut b = [0u8; HEADER_LEN];
        let word = (6u32 << 28) | ((self.traffic_class as u32) << 20) | (self.flow_label & 0xf_ffff);
        b[0..4].copy_from_slice(&word.to_be_bytes());
        b[4..6].copy_from_slice(&self.payload_len.to_be_bytes());
        b[6] = self.next_header;
        b[7] = self.hop_limit;
        b[8..24].copy_from_slice(&self.src.octets());
        b[24..40].copy_from_slice(&self.dst.octets());
        b
    }

    pub fn parse(b: &[u8]) -> Result<Ipv6Header, Ipv6Error> {
        if b.len() < HEADER_LEN {
            return Err(Ipv6Error::Truncated);
        }
        let word = u32::from_be_bytes([b[0], b[1], b[2], b[3]]);
        let version = (word >> 28) as u8;
        if version != 6 {
            return Err(Ipv6Error::BadVersion(version));
        }
        let addr = |o: usize| {
            let mut a = [0u8; 16];
            a.copy_from_slice(&b[o..o + 16]);
            Ipv6Addr::from(a)
        };
        Ok(Ipv6Header {
            traffic_class: (word >> 20) as u8,
            flow_label: word & 0xf_ffff,
            payload_len: u16::from_be_bytes([b[4], b[5]]),
            next_header: b[6],
            hop_limit: b[7],
            src: addr(8),
            dst: addr(24),
        })
    }
}

/// Incremental 16-bit one's-complement sum over data split at arbitrary
/// byte boundaries.
#[derive(Debug, Clone, Copy, Default)]
pub struct Checksum {
    sum: u64,
    odd: Option<u8>,
}

impl Checksum {
    pub fn new() -> Checksum {
        Checksum::default()
    }

    pub fn add(&mut self, mut data: &[u8]) {
        if let Some(hi) = self.odd.take() {
            match data.split_first() {
                Some((lo, rest)) => {
                    self.sum += u16::from_be_bytes([hi, *lo]) as u64;
                    data = rest;
                }
                None => {
                    self.odd = Some(hi);
                    return;
                }
            }
        }
        let mut chunks = data.chunks_exact(2);
        for c in &mut chunks {
            self.sum += u16::from_be_bytes([c[0], c[1]]) as u64;
        }
        if let [b] = chunks.remainder() {
            self.odd = Some(*b);
        }
    }

    pub fn add_pseudo_header(&mut self, src: &Ipv6Addr, dst: &Ipv6Addr, len: u32, next_header: u8) {
        self.add(&src.octets());
        self.add(&dst.octets());
        self.add(&len.to_be_bytes());
        self.add(&[0, 0, 0, next_header]);
    }

    /// Folded sum, not inverted.
    pub fn sum(&self) -> u16 {
        let mut s = self.sum;
        if let Some(hi) = self.odd {
            s += (hi as u64) << 8;
        }
        while s > 0xffff {
            s = (s & 0xffff) + (s >> 16);
        }
        s as u16
    }
}

/// One's-complement sum of the pseudo-header and `payload`.
pub fn pseudo_checksum(
    src: &Ipv6Addr,
    dst: &Ipv6Addr,
    len: u32,
    next_header: u8,
    payload: &[u8],
) -> u16 {
    let mut c = Checksum::new();
    c.add_pseudo_header(src, dst, len, next_header);
    c.add(payload);
    c.sum()
}

/// Value for the checksum field given the sum computed with the field
/// zeroed. A zero result is sent as 0xFFFF.
pub fn checksum_field(sum: u16) -> u16 {
    match !sum {
        0 => 0xffff,
        v => v,
    }
}

/// Whether a segment that includes its checksum field sums correctly.
pub fn checksum_valid(sum: u16) -> bool {
    sum == 0xffff
}

fn mask(addr: &Ipv6Addr, len: u8) -> u128 {
    let a = u128::from(*addr);
    if len == 0 {
        0
    } else {
        a & (u128::MAX << (128 - len as u32))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FibEntry {
    pub prefix: Ipv6Addr,
    pub prefix_len: u8,
    /// Unspecified means the destination is on-link.
    pub next_hop: Ipv6Addr,
    pub iface: EndpointId,
}

/// Longest-prefix-match table; one hash map per prefix length.
#[derive(Debug, Clone)]
pub struct Fib {
    tables: Vec<HashMap<u128, FibEntry>>,
    count: usize,
}

impl Default for Fib {
    fn default() -> Self {
        Fib {
            tables: vec![HashMap::new(); 129],
            count: 0,
        }
    }
}

impl Fib {
    pub fn new() -> Fib {
        Fib::default()
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    /// Inserts or replaces the route for the prefix. Host bits are cleared.
    pub fn insert(
        &mut self,
        prefix: Ipv6Addr,
        prefix_len: u8,
        next_hop: Ipv6Addr,
        iface: EndpointId,
    ) -> Result<Option<FibEntry>, Ipv6Error> {
        if prefix_len > 128 {
            return Err(Ipv6Error::BadPrefixLen(prefix_len));
        }
        let key = mask(&prefix, prefix_len);
        let entry = FibEntry {
            prefix: Ipv6Addr::from(key),
            prefix_len,
            next_hop,
            iface,
        };
        let old = self.tables[prefix_len as usize].insert(key, entry);
        if old.is_none() {
            self.count += 1;
        }
        Ok(old)
    }

    pub fn remove(&mut self, prefix: Ipv6Addr, prefix_len: u8) -> Option<FibEntry> {
        let t = self.tables.get_mut(prefix_len as usize)?;
        let old = t.remove(&mask(&prefix, prefix_len));
        if old.is_some() {
            self.count -= 1;
        }
        old
    }

    pub fn lookup(&self, dst: &Ipv6Addr) -> Option<&FibEntry> {
        (0..=128u8)
            .rev()
            .filter(|l| !self.tables[*l as usize].is_empty())
            .find_map(|l| self.tables[l as usize].get(&mask(dst, l)))
    }

    pub fn entries(&self) -> Vec<FibEntry> {
        let mut v: Vec<_> = self.tables.iter().flat_map(|t| t.values().copied()).collect();
        v.sort_by_key(|e| (std::cmp::Reverse(e.prefix_len), u128::from(e.prefix)));
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NeighborState {
    Reachable,
    Stale,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NeighborEntry {
    pub ip: Ipv6Addr,
    pub l2addr: L2Addr,
    pub iface: EndpointId,
    pub state: NeighborState,
}

/// Statically provisioned neighbor cache.
#[derive(Debug, Clone, Default)]
pub struct NeighborCache {
    entries: HashMap<Ipv6Addr, NeighborEntry>,
}

impl NeighborCache {
    pub fn insert(&mut self, ip: Ipv6Addr, l2addr: L2Addr, iface: EndpointId) {
        self.entries.insert(
            ip,
            NeighborEntry {
                ip,
                l2addr,
                iface,
                state: NeighborState::Reachable,
            },
        );
    }

    pub fn get(&self, ip: &Ipv6Addr) -> Option<&NeighborEntry> {
        self.entries.get(ip)
    }

    pub fn mark_stale(&mut self, ip: &Ipv6Addr) {
        if let Some(e) = self.entries.get_mut(ip) {
            e.state = NeighborState::Stale;
        }
    }

    pub fn remove(&mut self, ip: &Ipv6Addr) -> Option<NeighborEntry> {
        self.entries.remove(ip)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Builds the 40-byte header snip an upper layer prepends before handing a
/// packet to the IPv6 endpoint. Zero `payload_len` and `hop_limit`, and an
/// unspecified source, are filled in on send.
pub fn header_snip(
    pb: &PktBuf,
    next: Option<SnipId>,
    src: Ipv6Addr,
    dst: Ipv6Addr,
    next_header: u8,
) -> Result<SnipId, PktBufError> {
    let mut h = Ipv6Header::new(src, dst, next_header, 0);
    h.hop_limit = 0;
    pb.add(next, &h.to_bytes(), NetType::Ipv6)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Ipv6Stats {
    pub tx_packets: u64,
    pub tx_no_route: u64,
    pub tx_unresolved: u64,
    pub tx_errors: u64,
    pub rx_packets: u64,
    pub rx_malformed: u64,
    pub rx_not_for_us: u64,
    pub rx_no_receiver: u64,
    pub forwarded: u64,
    pub hop_limit_exceeded: u64,
    pub loopback: u64,
}

pub struct Ipv6Endpoint {
    addrs: HashMap<EndpointId, Ipv6Addr>,
    hop_limit: u8,
    forwarding: bool,
    fib: Fib,
    neighbors: NeighborCache,
    stats: Ipv6Stats,
}

impl Default for Ipv6Endpoint {
    fn default() -> Self {
        Ipv6Endpoint::new()
    }
}

enum Egress {
    Loopback,
    Link {
        iface: EndpointId,
        dst: Option<L2Addr>,
    },
}

impl Ipv6Endpoint {
    pub fn new() -> Ipv6Endpoint {
        Ipv6Endpoint {
            addrs: HashMap::new(),
            hop_limit: DEFAULT_HOP_LIMIT,
            forwarding: false,
            fib: Fib::new(),
            neighbors: NeighborCache::default(),
            stats: Ipv6Stats::default(),
        }
    }

    pub fn stats(&self) -> Ipv6Stats {
        self.stats
    }

    pub fn fib(&self) -> &Fib {
        &self.fib
    }

    pub fn neighbors(&self) -> &NeighborCache {
        &self.neighbors
    }

    pub fn address(&self, iface: EndpointId) -> Option<Ipv6Addr> {
        self.addrs.get(&iface).copied()
    }

    pub fn is_local(&self, a: &Ipv6Addr) -> bool {
        a.is_loopback()
            || self.addrs.values().any(|x| x == a)
            || self.fib.lookup(a).is_some_and(|r| r.iface == LOOPBACK_IFACE)
    }

    /// Whether a packet to `dst` could leave now.
    pub fn check_route(&self, dst: &Ipv6Addr) -> Result<(), Ipv6Error> {
        self.egress(dst).map(|_| ())
    }

    fn egress(&self, dst: &Ipv6Addr) -> Result<Egress, Ipv6Error> {
        let local = self.is_local(dst);
        let route = match self.fib.lookup(dst) {
            // host routes override local delivery
            Some(r) if !local || r.prefix_len == 128 => r,
            _ if local => return Ok(Egress::Loopback),
            _ => return Err(Ipv6Error::NoRoute(*dst)),
        };
        if route.iface == LOOPBACK_IFACE {
            return Ok(Egress::Loopback);
        }
        if dst.is_multicast() {
            return Ok(Egress::Link {
                iface: route.iface,
                dst: None,
            });
        }
        let hop = if route.next_hop.is_unspecified() {
            *dst
        } else {
            route.next_hop
        };
        let n = self
            .neighbors
            .get(&hop)
            .ok_or(Ipv6Error::NeighborUnresolved(hop))?;
        Ok(Egress::Link {
            iface: route.iface,
            dst: Some(n.l2addr),
        })
    }

    fn on_snd(&mut self, cx: &mut Ctx<'_>, pkt: SnipId) {
        let pb = cx.pktbuf();
        let parsed = pb
            .with_data(pkt, Ipv6Header::parse)
            .map_err(Ipv6Error::from)
            .and_then(|r| r);
        let Ok(mut hdr) = parsed else {
            self.stats.tx_errors += 1;
            let _ = pb.release(pkt);
            return;
        };
        let egress = match self.egress(&hdr.dst) {
            Ok(e) => e,
            Err(e) => {
                match e {
                    Ipv6Error::NeighborUnresolved(_) => self.stats.tx_unresolved += 1,
                    _ => self.stats.tx_no_route += 1,
                }
                let _ = pb.release(pkt);
                return;
            }
        };
        let payload = match pb.next(pkt) {
            Ok(Some(n)) => pb.total_len(n).unwrap_or(0),
            _ => 0,
        };
        if payload > u16::MAX as usize {
            self.stats.tx_errors += 1;
            let _ = pb.release(pkt);
            return;
        }
        if hdr.src.is_unspecified() {
            hdr.src = match &egress {
                Egress::Loopback => hdr.dst,
                Egress::Link { iface, .. } => match self.addrs.get(iface) {
                    Some(a) => *a,
                    None => Ipv6Addr::UNSPECIFIED,
                },
            };
        }
        hdr.payload_len = payload as u16;
        if hdr.hop_limit == 0 {
            hdr.hop_limit = self.hop_limit;
        }
        if self.finish_header(cx, pkt, &hdr).is_err() {
            self.stats.tx_errors += 1;
            let _ = cx.pktbuf().release(pkt);
            return;
        }
        self.stats.tx_packets += 1;
        self.emit(cx, pkt, egress);
    }

    /// Writes the header and the upper-layer checksum.
    fn finish_header(&mut self, cx: &mut Ctx<'_>, pkt: SnipId, hdr: &Ipv6Header) -> Result<(), PktBufError> {
        let pb = cx.pktbuf();
        pb.write_at(pkt, 0, &hdr.to_bytes())?;
        let Some(upper) = pb.next(pkt)? else {
            return Ok(());
        };
        if hdr.next_header != NEXT_HEADER_UDP || pb.nettype(upper)? != NetType::Udp {
            return Ok(());
        }
        let mut c = Checksum::new();
        c.add_pseudo_header(&hdr.src, &hdr.dst, hdr.payload_len as u32, hdr.next_header);
        pb.write_at(upper, 6, &[0, 0])?;
        let mut touched = 0;
        for s in pb.chain(upper)? {
            pb.with_data(s, |d| {
                touched += d.len();
                c.add(d)
            })?;
        }
        cx.meter().bytes(touched);
        pb.write_at(upper, 6, &checksum_field(c.sum()).to_be_bytes())
    }

    fn emit(&mut self, cx: &mut Ctx<'_>, pkt: SnipId, egress: Egress) {
        let pb = cx.pktbuf();
        match egress {
            Egress::Loopback => {
                self.stats.loopback += 1;
                let flat = pb
                    .flatten(pkt)
                    .and_then(|d| pb.add(None, &d, NetType::Ipv6));
                let _ = pb.release(pkt);
                match flat {
                    Ok(p) => {
                        let me = cx.me();
                        cx.send_or_release(me, PktKind::Rcv, p);
                    }
                    Err(_) => self.stats.tx_errors += 1,
                }
            }
            Egress::Link { iface, dst } => {
                let nh = match dst {
                    Some(d) => NetifHeader::to(iface, d),
                    None => NetifHeader::broadcast(iface),
                };
                let Ok(head) = pb.add(Some(pkt), &nh.to_bytes(), NetType::Netif) else {
                    self.stats.tx_errors += 1;
                    let _ = pb.release(pkt);
                    return;
                };
                let sixlo = cx.iface(iface).is_some_and(|i| i.sixlowpan);
                if sixlo {
                    cx.dispatch(NetType::Sixlowpan, DEMUX_CTX_ALL, PktKind::Snd, head);
                } else {
                    cx.send_or_release(iface, PktKind::Snd, head);
                }
            }
        }
    }

    fn on_rcv(&mut self, cx: &mut Ctx<'_>, pkt: SnipId) {
        let pb = cx.pktbuf();
        let Ok(pkt) = pb.start_write(pkt) else {
            let _ = pb.release(pkt);
            return;
        };
        let checked = pb.with_data(pkt, |d| {
            let h = Ipv6Header::parse(d)?;
            let actual = d.len() - HEADER_LEN;
            if h.payload_len as usize != actual {
                return Err(Ipv6Error::LengthMismatch {
                    declared: h.payload_len as usize,
                    actual,
                });
            }
            Ok(h)
        });
        let hdr = match checked {
            Ok(Ok(h)) => h,
            _ => {
                self.stats.rx_malformed += 1;
                let _ = pb.release(pkt);
                return;
            }
        };
        cx.meter().bytes(HEADER_LEN);
        self.stats.rx_packets += 1;

        if self.is_local(&hdr.dst) || hdr.dst.is_multicast() {
            self.deliver(cx, pkt, &hdr);
        } else if self.forwarding {
            self.forward(cx, pkt, hdr);
        } else {
            self.stats.rx_not_for_us += 1;
            let _ = cx.pktbuf().release(pkt);
        }
    }

    fn deliver(&mut self, cx: &mut Ctx<'_>, pkt: SnipId, hdr: &Ipv6Header) {
        let pb = cx.pktbuf();
        if pb.mark(pkt, HEADER_LEN, NetType::Ipv6).is_err() {
            self.stats.rx_malformed += 1;
            let _ = pb.release(pkt);
            return;
        }
        let ty = NetType::from_next_header(hdr.next_header).unwrap_or(NetType::Undef);
        let _ = pb.set_nettype(pkt, ty);
        let me = cx.me();
        let raw_ctx = hdr.next_header as DemuxCtx;
        let has_raw = cx
            .netreg()
            .lookup(NetType::Ipv6, raw_ctx)
            .iter()
            .any(|e| *e != me);
        let has_proto = ty != NetType::Undef && !cx.netreg().lookup(ty, DEMUX_CTX_ALL).is_empty();
        match (has_proto, has_raw) {
            (true, true) => {
                // one reference for the protocol handler, one for raw listeners
                if pb.hold(pkt, 1).is_err() {
                    let _ = pb.release(pkt);
                    return;
                }
                cx.dispatch(ty, DEMUX_CTX_ALL, PktKind::Rcv, pkt);
                cx.dispatch(NetType::Ipv6, raw_ctx, PktKind::Rcv, pkt);
            }
            (true, false) => {
                cx.dispatch(ty, DEMUX_CTX_ALL, PktKind::Rcv, pkt);
            }
            (false, true) => {
                cx.dispatch(NetType::Ipv6, raw_ctx, PktKind::Rcv, pkt);
            }
            (false, false) => {
                self.stats.rx_no_receiver += 1;
                let _ = pb.release(pkt);
            }
        }
    }

    fn forward(&mut self, cx: &mut Ctx<'_>, pkt: SnipId, mut hdr: Ipv6Header) {
        let pb = cx.pktbuf();
        if hdr.hop_limit <= 1 {
            self.stats.hop_limit_exceeded += 1;
            let _ = pb.release(pkt);
            return;
        }
        let egress = match self.egress(&hdr.dst) {
            Ok(Egress::Link { iface, dst }) => Egress::Link { iface, dst },
            Ok(Egress::Loopback) | Err(_) => {
                self.stats.tx_no_route += 1;
                let _ = pb.release(pkt);
                return;
            }
        };
        hdr.hop_limit -= 1;
        if let Ok(Some(meta)) = pb.detach_next(pkt) {
            let _ = pb.release(meta);
        }
        if pb.write_at(pkt, 7, &[hdr.hop_limit]).is_err() {
            let _ = pb.release(pkt);
            return;
        }
        self.stats.forwarded += 1;
        self.emit(cx, pkt, egress);
    }

    fn on_get(&mut self, cx: &mut Ctx<'_>, req: OptionRequest, reply_to: EndpointId) {
        let value = match req.opt {
            NetOpt::Ipv6Addr => match self.addrs.get(&EndpointId(req.context)) {
                Some(a) => a.octets().to_vec(),
                None => return cx.reply(reply_to, errno::ENOENT, Vec::new()),
            },
            NetOpt::HopLimit => vec![self.hop_limit],
            NetOpt::Forwarding => vec![self.forwarding as u8],
            NetOpt::MaxPduSize => (MIN_MTU as u16).to_be_bytes().to_vec(),
            _ => return cx.reply(reply_to, errno::ENOTSUP, Vec::new()),
        };
        if value.len() > req.data.len() {
            return cx.reply(reply_to, errno::EOVERFLOW, Vec::new());
        }
        cx.reply(reply_to, value.len() as i32, value);
    }

    fn on_set(&mut self, cx: &mut Ctx<'_>, req: OptionRequest, reply_to: EndpointId) {
        if let Err(e) = check_set_len(&req) {
            return cx.reply(reply_to, e, Vec::new());
        }
        let d = &req.data;
        let addr_at = |o: usize| {
            let mut a = [0u8; 16];
            a.copy_from_slice(&d[o..o + 16]);
            Ipv6Addr::from(a)
        };
        let iface = EndpointId(req.context);
        let known_iface = iface == LOOPBACK_IFACE || cx.iface(iface).is_some();
        let status = match req.opt {
            NetOpt::Ipv6Addr if cx.iface(iface).is_some() => {
                self.addrs.insert(iface, addr_at(0));
                16
            }
            NetOpt::HopLimit if d[0] > 0 => {
                self.hop_limit = d[0];
                1
            }
            NetOpt::Forwarding if d[0] <= 1 => {
                self.forwarding = d[0] == 1;
                1
            }
            NetOpt::FibAdd if known_iface => match self.fib.insert(addr_at(0), d[16], addr_at(17), iface) {
                Ok(_) => d.len() as i32,
                Err(_) => errno::EINVAL,
            },
            NetOpt::FibRemove => match self.fib.remove(addr_at(0), d[16]) {
                Some(_) => d.len() as i32,
                None => errno::ENOENT,
            },
            NetOpt::NeighborAdd if cx.iface(iface).is_some() => {
                let l2 = L2Addr::new(&d[16..]).expect("length checked");
                let expect = cx.iface(iface).map(|i| i.l2addr.len()).unwrap_or(0);
                if l2.len() != expect {
                    errno::EINVAL
                } else {
                    self.neighbors.insert(addr_at(0), l2, iface);
                    d.len() as i32
                }
            }
            NetOpt::Ipv6Addr
            | NetOpt::HopLimit
            | NetOpt::Forwarding
            | NetOpt::FibAdd
            | NetOpt::NeighborAdd => errno::EINVAL,
            _ => errno::ENOTSUP,
        };
        cx.reply(reply_to, status, Vec::new());
    }
}

impl Endpoint for Ipv6Endpoint {
    fn layer(&self) -> Layer {
        Layer::Ipv6
    }

    fn handle(&mut self, cx: &mut Ctx<'_>, env: Envelope) {
        match env {
            Envelope::Net(NetMsg::Snd(p)) => self.on_snd(cx, p),
            Envelope::Net(NetMsg::Rcv(p)) => self.on_rcv(cx, p),
            Envelope::Net(NetMsg::Get { req, reply_to }) => self.on_get(cx, req, reply_to),
            Envelope::Net(NetMsg::Set { req, reply_to }) => self.on_set(cx, req, reply_to),
            _ => {}
        }
    }

    fn as_any(&self) -> &dyn Any {
        self
    }

    fn as_any_mut(&mut self) -> &mut dyn Any {
        self
    }
}
