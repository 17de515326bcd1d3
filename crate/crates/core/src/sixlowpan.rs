//! 6LoWPAN adaptation: uncompressed IPv6 dispatch, fragmentation and
//! reassembly.
//!
//! Wire formats: an unfragmented frame is `0x41` followed by the IPv6
//! datagram. FRAG1 is `11000` + 11-bit datagram size + 16-bit tag, followed
//! by the `0x41` dispatch and the first datagram bytes. FRAGN is `11100` +
//! size + tag + 8-bit offset in units of 8 bytes.

use std::any::Any;
use std::collections::VecDeque;

use thiserror::Error;

use crate::cost::Layer;
use crate::netapi::{errno, NetMsg, PktKind};
use crate::netif::NetifHeader;
use crate::netreg::DEMUX_CTX_ALL;
use crate::pktbuf::{PktBuf, PktBufError, SnipId};
use crate::sched::{Ctx, Endpoint, Envelope};
use crate::types::{EndpointId, L2Addr, NetType, VirtualTime, NS_PER_SEC};

pub const DISPATCH_IPV6: u8 = 0x41;
pub const FRAG1_HDR_LEN: usize = 4;
pub const FRAGN_HDR_LEN: usize = 5;
const FRAG1_PATTERN: u8 = 0b11000;
const FRAGN_PATTERN: u8 = 0b11100;
/// Largest value of the 11-bit datagram size field.
pub const MAX_DATAGRAM: usize = 2047;
pub const REASSEMBLY_TIMEOUT: VirtualTime = 5 * NS_PER_SEC;
pub const MAX_REASSEMBLY_BUFFERS: usize = 4;
/// How many expired reassembly keys are remembered.
const EXPIRED_MEMORY: usize = 16;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SixloError {
    #[error("datagram of {0} bytes exceeds the 6LoWPAN size field")]
    DatagramTooLarge(usize),
    #[error("link MTU {0} cannot carry a fragment")]
    MtuTooSmall(usize),
    #[error("unknown or unsupported dispatch {0:#04x}")]
    InvalidDispatch(u8),
    #[error("malformed fragment")]
    Malformed,
    #[error("overlapping fragment disagrees with buffered data")]
    OverlapMismatch,
    #[error("fragment belongs to an expired reassembly")]
    StaleTag,
    #[error(transparent)]
    Buffer(#[from] PktBufError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FragKind {
    First,
    Subsequent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FragHeader {
    pub kind: FragKind,
    pub datagram_size: u16,
    pub tag: u16,
    /// Offset in bytes (multiple of 8); always 0 for FRAG1.
    pub offset: usize,
}

impl FragHeader {
    pub fn len(&self) -> usize {
        match self.kind {
            FragKind::First => FRAG1_HDR_LEN,
            FragKind::Subsequent => FRAGN_HDR_LEN,
        }
    }

    pub fn encode(&self, out: &mut Vec<u8>) {
        let pattern = match self.kind {
            FragKind::First => FRAG1_PATTERN,
            FragKind::Subsequent => FRAGN_PATTERN,
        };
        let size = self.datagram_size & 0x07ff;
        out.push((pattern << 3) | (size >> 8) as u8);
        out.push(size as u8);
        out.extend_from_slice(&self.tag.to_be_bytes());
        if self.kind == FragKind::Subsequent {
            out.push((self.offset / 8) as u8);
        }
    }

    pub fn decode(b: &[u8]) -> Option<FragHeader> {
        let first = *b.first()?;
        let kind = match first >> 3 {
            FRAG1_PATTERN => FragKind::First,
            FRAGN_PATTERN => FragKind::Subsequent,
            _ => return None,
        };
        let hl = if kind == FragKind::First {
            FRAG1_HDR_LEN
        } else {
            FRAGN_HDR_LEN
        };
        if b.len() < hl {
            return None;
        }
        Some(FragHeader {
            kind,
            datagram_size: (((first & 0x07) as u16) << 8) | b[1] as u16,
            tag: u16::from_be_bytes([b[2], b[3]]),
            offset: if kind == FragKind::Subsequent {
                b[4] as usize * 8
            } else {
                0
            },
        })
    }
}

fn floor8(n: usize) -> usize {
    n & !7
}

/// Datagram bytes carried by each frame when sending `len` bytes over a
/// link that takes `mtu` payload bytes per frame.
pub fn fragment_sizes(len: usize, mtu: usize) -> Result<Vec<usize>, SixloError> {
    if len < mtu {
        return Ok(vec![len]);
    }
    if len > MAX_DATAGRAM {
        return Err(SixloError::DatagramTooLarge(len));
    }
    if mtu <= FRAGN_HDR_LEN + 8 {
        return Err(SixloError::MtuTooSmall(mtu));
    }
    let room = mtu - FRAGN_HDR_LEN;
    let step = floor8(room);
    let mut sizes = vec![step];
    let mut rem = len - step;
    while rem > room {
        sizes.push(step);
        rem -= step;
    }
    sizes.push(rem);
    Ok(sizes)
}

/// Frame payloads for `datagram`.
pub fn fragment(datagram: &[u8], mtu: usize, tag: u16) -> Result<Vec<Vec<u8>>, SixloError> {
    let sizes = fragment_sizes(datagram.len(), mtu)?;
    if sizes.len() == 1 {
        let mut f = Vec::with_capacity(datagram.len() + 1);
        f.push(DISPATCH_IPV6);
        f.extend_from_slice(datagram);
        return Ok(vec![f]);
    }
    let mut out = Vec::with_capacity(sizes.len());
    let mut offset = 0;
    for n in sizes {
        let mut f = Vec::with_capacity(mtu);
        frag_header(datagram.len(), tag, offset).encode(&mut f);
        if offset == 0 {
            f.push(DISPATCH_IPV6);
        }
        f.extend_from_slice(&datagram[offset..offset + n]);
        out.push(f);
        offset += n;
    }
    Ok(out)
}

fn frag_header(size: usize, tag: u16, offset: usize) -> FragHeader {
    FragHeader {
        kind: if offset == 0 {
            FragKind::First
        } else {
            FragKind::Subsequent
        },
        datagram_size: size as u16,
        tag,
        offset,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ReassemblyKey {
    pub src: L2Addr,
    pub dst: L2Addr,
    pub tag: u16,
    pub size: u16,
}

#[derive(Debug)]
struct Entry {
    key: ReassemblyKey,
    buf: SnipId,
    /// Sorted, disjoint, non-adjacent received byte ranges.
    intervals: Vec<(usize, usize)>,
    deadline: VirtualTime,
}

impl Entry {
    fn complete(&self) -> bool {
        self.intervals == [(0, self.key.size as usize)]
    }
}

/// Reassembly state; datagram buffers live in the packet buffer.
#[derive(Debug, Default)]
pub struct Reassembler {
    entries: Vec<Entry>,
    expired: VecDeque<(ReassemblyKey, VirtualTime)>,
    timeout: VirtualTime,
    max_entries: usize,
}

impl Reassembler {
    pub fn new() -> Reassembler {
        Reassembler::with_limits(REASSEMBLY_TIMEOUT, MAX_REASSEMBLY_BUFFERS)
    }

    pub fn with_limits(timeout: VirtualTime, max_entries: usize) -> Reassembler {
        Reassembler {
            entries: Vec::new(),
            expired: VecDeque::new(),
            timeout,
            max_entries,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn next_deadline(&self) -> Option<VirtualTime> {
        self.entries.iter().map(|e| e.deadline).min()
    }

    /// Frees buffers whose deadline passed; returns how many.
    pub fn expire(&mut self, pb: &PktBuf, now: VirtualTime) -> usize {
        let mut n = 0;
        let mut i = 0;
        while i < self.entries.len() {
            if self.entries[i].deadline <= now {
                let e = self.entries.remove(i);
                let _ = pb.release(e.buf);
                self.remember_expired(e.key, now);
                n += 1;
            } else {
                i += 1;
            }
        }
        let timeout = self.timeout;
        self.expired.retain(|(_, at)| now < at.saturating_add(timeout));
        n
    }

    fn remember_expired(&mut self, key: ReassemblyKey, now: VirtualTime) {
        if self.expired.len() >= EXPIRED_MEMORY {
            self.expired.pop_front();
        }
        self.expired.push_back((key, now));
    }

    /// Releases every buffer.
    pub fn clear(&mut self, pb: &PktBuf) {
        for e in self.entries.drain(..) {
            let _ = pb.release(e.buf);
        }
    }

    /// Feeds one frame payload. Returns the datagram (type IPv6, one
    /// reference owned by the caller) once it is complete.
    pub fn push(
        &mut self,
        pb: &PktBuf,
        frame: &[u8],
        src: L2Addr,
        dst: L2Addr,
        now: VirtualTime,
    ) -> Result<Option<SnipId>, SixloError> {
        let first = *frame.first().ok_or(SixloError::Malformed)?;
        if first == DISPATCH_IPV6 {
            if frame.len() < 2 {
                return Err(SixloError::Malformed);
            }
            return Ok(Some(pb.add(None, &frame[1..], NetType::Ipv6)?));
        }
        let hdr = FragHeader::decode(frame).ok_or(SixloError::InvalidDispatch(first))?;
        let mut data = &frame[hdr.len()..];
        if hdr.kind == FragKind::First {
            match data.first() {
                Some(&DISPATCH_IPV6) => data = &data[1..],
                Some(&d) => return Err(SixloError::InvalidDispatch(d)),
                None => return Err(SixloError::Malformed),
            }
        }
        let size = hdr.datagram_size as usize;
        let (off, end) = (hdr.offset, hdr.offset + data.len());
        if data.is_empty() || size == 0 || end > size || (end < size && !data.len().is_multiple_of(8)) {
            return Err(SixloError::Malformed);
        }

        self.expire(pb, now);
        let key = ReassemblyKey {
            src,
            dst,
            tag: hdr.tag,
            size: hdr.datagram_size,
        };
        let idx = match self.entries.iter().position(|e| e.key == key) {
            Some(i) => i,
            None => {
                if self.expired.iter().any(|(k, _)| *k == key) {
                    return Err(SixloError::StaleTag);
                }
                if self.entries.len() >= self.max_entries {
                    // evict the oldest buffer
                    let oldest = self
                        .entries
                        .iter()
                        .enumerate()
                        .min_by_key(|(_, e)| e.deadline)
                        .map(|(i, _)| i)
                        .expect("non-empty");
                    let e = self.entries.remove(oldest);
                    let _ = pb.release(e.buf);
                }
                let buf = pb.add_zeroed(None, size, NetType::Ipv6)?;
                self.entries.push(Entry {
                    key,
                    buf,
                    intervals: Vec::new(),
                    deadline: now + self.timeout,
                });
                self.entries.len() - 1
            }
        };

        let entry = &self.entries[idx];
        let overlaps: Vec<(usize, usize)> = entry
            .intervals
            .iter()
            .filter(|(a, b)| *a < end && off < *b)
            .map(|(a, b)| ((*a).max(off), (*b).min(end)))
            .collect();
        let consistent = pb.with_data(entry.buf, |buf| {
            overlaps
                .iter()
                .all(|(a, b)| buf[*a..*b] == data[a - off..b - off])
        })?;
        if !consistent {
            let e = self.entries.remove(idx);
            let _ = pb.release(e.buf);
            return Err(SixloError::OverlapMismatch);
        }
        pb.write_at(entry.buf, off, data)?;

        let entry = &mut self.entries[idx];
        entry.intervals.push((off, end));
        entry.intervals.sort_unstable();
        let mut merged: Vec<(usize, usize)> = Vec::with_capacity(entry.intervals.len());
        for &(a, b) in &entry.intervals {
            match merged.last_mut() {
                Some(last) if a <= last.1 => last.1 = last.1.max(b),
                _ => merged.push((a, b)),
            }
        }
        entry.intervals = merged;
        if entry.complete() {
            let e = self.entries.remove(idx);
            return Ok(Some(e.buf));
        }
        Ok(None)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SixloStats {
    pub tx_datagrams: u64,
    pub tx_fragments: u64,
    pub tx_dropped: u64,
    pub rx_frames: u64,
    pub rx_datagrams: u64,
    pub rx_reassembled: u64,
    pub rx_invalid: u64,
    pub rx_overlap: u64,
    pub rx_stale: u64,
    pub rx_expired: u64,
}

struct FragJob {
    netif_hdr: Vec<u8>,
    iface: EndpointId,
    datagram: SnipId,
    size: usize,
    tag: u16,
    offset: usize,
    mtu: usize,
}

const EVENT_CONTINUE: u32 = 1;
const TIMER_EXPIRE: u64 = 1;

/// The 6LoWPAN endpoint. Large datagrams are sent one fragment per
/// scheduling turn so the interface mailbox is never flooded.
pub struct SixloEndpoint {
    reass: Reassembler,
    next_tag: u16,
    jobs: VecDeque<FragJob>,
    timer_at: Option<VirtualTime>,
    stats: SixloStats,
}

impl Default for SixloEndpoint {
    fn default() -> Self {
        SixloEndpoint::new()
    }
}

impl SixloEndpoint {
    pub fn new() -> SixloEndpoint {
        SixloEndpoint {
            reass: Reassembler::new(),
            next_tag: 0,
            jobs: VecDeque::new(),
            timer_at: None,
            stats: SixloStats::default(),
        }
    }

    pub fn stats(&self) -> SixloStats {
        self.stats
    }

    pub fn reassembly_buffers(&self) -> usize {
        self.reass.len()
    }

    fn take_tag(&mut self) -> u16 {
        let t = self.next_tag;
        self.next_tag = self.next_tag.wrapping_add(1);
        t
    }

    fn on_snd(&mut self, cx: &mut Ctx<'_>, pkt: SnipId) {
        let pb = cx.pktbuf();
        let hdr_bytes = pb.with_data(pkt, |d| d.to_vec()).unwrap_or_default();
        let hdr = match (pb.nettype(pkt), NetifHeader::parse(&hdr_bytes)) {
            (Ok(NetType::Netif), Some(h)) => h,
            _ => {
                self.stats.tx_dropped += 1;
                let _ = pb.release(pkt);
                return;
            }
        };
        let iface = hdr.iface_id();
        let (Some(info), Ok(Some(datagram))) = (cx.iface(iface), pb.detach_next(pkt)) else {
            self.stats.tx_dropped += 1;
            let _ = pb.release(pkt);
            return;
        };
        let size = pb.total_len(datagram).unwrap_or(0);
        self.stats.tx_datagrams += 1;
        if size < info.max_pdu {
            match pb.add(Some(datagram), &[DISPATCH_IPV6], NetType::Sixlowpan) {
                Ok(d) => {
                    pb.set_next(pkt, d).expect("detached header");
                    self.stats.tx_fragments += 1;
                    cx.send_or_release(iface, PktKind::Snd, pkt);
                }
                Err(_) => {
                    self.stats.tx_dropped += 1;
                    let _ = pb.release(datagram);
                    let _ = pb.release(pkt);
                }
            }
            return;
        }
        let _ = pb.release(pkt);
        if fragment_sizes(size, info.max_pdu).is_err() {
            self.stats.tx_dropped += 1;
            let _ = pb.release(datagram);
            return;
        }
        let tag = self.take_tag();
        self.jobs.push_back(FragJob {
            netif_hdr: hdr_bytes,
            iface,
            datagram,
            size,
            tag,
            offset: 0,
            mtu: info.max_pdu,
        });
        if self.jobs.len() == 1 {
            self.send_fragment(cx);
        }
    }

    fn send_fragment(&mut self, cx: &mut Ctx<'_>) {
        let Some(job) = self.jobs.front_mut() else {
            return;
        };
        let pb = cx.pktbuf();
        let room = job.mtu - FRAGN_HDR_LEN;
        let rem = job.size - job.offset;
        let n = if job.offset > 0 && rem <= room {
            rem
        } else {
            floor8(room).min(rem)
        };
        let mut frame = Vec::with_capacity(job.mtu);
        frag_header(job.size, job.tag, job.offset).encode(&mut frame);
        if job.offset == 0 {
            frame.push(DISPATCH_IPV6);
        }
        let copied = pb.copy_range(job.datagram, job.offset, n, &mut frame);
        let pkt = copied.ok().and_then(|_| {
            let f = pb.add(None, &frame, NetType::Sixlowpan).ok()?;
            match pb.add(Some(f), &job.netif_hdr, NetType::Netif) {
                Ok(h) => Some(h),
                Err(_) => {
                    let _ = pb.release(f);
                    None
                }
            }
        });
        job.offset += n;
        let iface = job.iface;
        let done = job.offset >= job.size;
        match pkt {
            Some(p) => {
                self.stats.tx_fragments += 1;
                if !cx.send_or_release(iface, PktKind::Snd, p) {
                    self.stats.tx_dropped += 1;
                }
            }
            None => self.stats.tx_dropped += 1,
        }
        if done {
            let job = self.jobs.pop_front().expect("front job");
            let _ = cx.pktbuf().release(job.datagram);
        }
        if !self.jobs.is_empty() {
            cx.signal(EVENT_CONTINUE);
        }
    }

    fn on_rcv(&mut self, cx: &mut Ctx<'_>, pkt: SnipId) {
        self.stats.rx_frames += 1;
        let pb = cx.pktbuf();
        let (first, len) = pb
            .with_data(pkt, |d| (d.first().copied(), d.len()))
            .unwrap_or((None, 0));
        if first == Some(DISPATCH_IPV6) {
            if len < 2 || pb.mark(pkt, 1, NetType::Sixlowpan).is_err() {
                self.stats.rx_invalid += 1;
                let _ = pb.release(pkt);
                return;
            }
            let _ = pb.set_nettype(pkt, NetType::Ipv6);
            self.stats.rx_datagrams += 1;
            cx.dispatch(NetType::Ipv6, DEMUX_CTX_ALL, PktKind::Rcv, pkt);
            return;
        }

        let netif = pb
            .search_type(pkt, NetType::Netif)
            .and_then(|h| pb.with_data(h, NetifHeader::parse).ok().flatten());
        let frame = pb.read(pkt);
        let _ = pb.release(pkt);
        let (Some(netif), Ok(frame)) = (netif, frame) else {
            self.stats.rx_invalid += 1;
            return;
        };
        let now = cx.now();
        match self.reass.push(pb, &frame, netif.src, netif.dst, now) {
            Ok(Some(d)) => {
                self.stats.rx_reassembled += 1;
                self.deliver(cx, d, netif);
            }
            Ok(None) => {}
            Err(SixloError::OverlapMismatch) => self.stats.rx_overlap += 1,
            Err(SixloError::StaleTag) => self.stats.rx_stale += 1,
            Err(_) => self.stats.rx_invalid += 1,
        }
        self.arm_timer(cx);
    }

    fn deliver(&mut self, cx: &mut Ctx<'_>, datagram: SnipId, netif: NetifHeader) {
        let pb = cx.pktbuf();
        match pb.add(None, &netif.to_bytes(), NetType::Netif) {
            Ok(h) => {
                pb.set_next(datagram, h).expect("fresh datagram");
                self.stats.rx_datagrams += 1;
                cx.dispatch(NetType::Ipv6, DEMUX_CTX_ALL, PktKind::Rcv, datagram);
            }
            Err(_) => {
                let _ = pb.release(datagram);
            }
        }
    }

    fn arm_timer(&mut self, cx: &mut Ctx<'_>) {
        let Some(d) = self.reass.next_deadline() else {
            return;
        };
        if self.timer_at.is_some_and(|t| t <= d) {
            return;
        }
        self.timer_at = Some(d);
        cx.set_timer(d.saturating_sub(cx.now()), TIMER_EXPIRE);
    }

    fn on_timer(&mut self, cx: &mut Ctx<'_>) {
        self.timer_at = None;
        let n = self.reass.expire(cx.pktbuf(), cx.now());
        self.stats.rx_expired += n as u64;
        self.arm_timer(cx);
    }
}

impl Endpoint for SixloEndpoint {
    fn layer(&self) -> Layer {
        Layer::Sixlowpan
    }

    fn handle(&mut self, cx: &mut Ctx<'_>, env: Envelope) {
        match env {
            Envelope::Net(NetMsg::Snd(p)) => self.on_snd(cx, p),
            Envelope::Net(NetMsg::Rcv(p)) => self.on_rcv(cx, p),
            Envelope::Net(NetMsg::Get { reply_to, .. })
            | Envelope::Net(NetMsg::Set { reply_to, .. }) => {
                cx.reply(reply_to, errno::ENOTSUP, Vec::new())
            }
            Envelope::Net(NetMsg::Ack { .. }) => {}
            Envelope::Event(EVENT_CONTINUE) => self.send_fragment(cx),
            Envelope::Event(_) => {}
            Envelope::Timer(TIMER_EXPIRE) => self.on_timer(cx),
            Envelope::Timer(_) => {}
        }
    }

    fn as_any(&self) -> &dyn Any {
        self
    }

    fn as_any_mut(&mut self) -> &mut dyn Any {
        self
    }
}
