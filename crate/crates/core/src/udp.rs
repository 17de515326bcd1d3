//! UDP: header codec, checksum and port demultiplexing.

use std::any::Any;
use std::net::Ipv6Addr;

use thiserror::Error;

use crate::cost::Layer;
use crate::ipv6::{self, Checksum, Ipv6Header, NEXT_HEADER_UDP};
use crate::netapi::{errno, NetMsg, PktKind};
use crate::netreg::{DemuxCtx, DEMUX_CTX_ALL};
use crate::pktbuf::{PktBuf, PktBufError, SnipId};
use crate::sched::{Ctx, Endpoint, Envelope};
use crate::types::NetType;

pub const HEADER_LEN: usize = 8;
/// Largest payload that fits the 16-bit length fields.
pub const MAX_PAYLOAD: usize = 65507;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum UdpError {
    #[error("header shorter than 8 bytes")]
    Truncated,
    #[error("length field {declared} does not match {actual} bytes")]
    BadLength { declared: usize, actual: usize },
    #[error("checksum verification failed")]
    BadChecksum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UdpHeader {
    pub src_port: u16,
    pub dst_port: u16,
    pub length: u16,
    pub checksum: u16,
}

impl UdpHeader {
    pub fn to_bytes(&self) -> [u8; HEADER_LEN] {
        let mut b = [0u8; HEADER_LEN];
        b[0..2].copy_from_slice(&self.src_port.to_be_bytes());
        b[2..4].copy_from_slice(&self.dst_port.to_be_bytes());
        b[4..6].copy_from_slice(&self.length.to_be_bytes());
        b[6..8].copy_from_slice(&self.checksum.to_be_bytes());
        b
    }

    pub fn parse(b: &[u8]) -> Result<UdpHeader, UdpError> {
        if b.len() < HEADER_LEN {
            return Err(UdpError::Truncated);
        }
        let w = |i: usize| u16::from_be_bytes([b[i], b[i + 1]]);
        Ok(UdpHeader {
            src_port: w(0),
            dst_port: w(2),
            length: w(4),
            checksum: w(6),
        })
    }
}

/// Checksum field value for a datagram; `segment` is header plus payload
/// with the checksum bytes ignored.
pub fn udp_checksum(src: &Ipv6Addr, dst: &Ipv6Addr, segment: &[u8]) -> u16 {
    let mut c = Checksum::new();
    c.add_pseudo_header(src, dst, segment.len() as u32, NEXT_HEADER_UDP);
    c.add(&segment[..6.min(segment.len())]);
    if segment.len() > HEADER_LEN {
        c.add(&segment[HEADER_LEN..]);
    }
    ipv6::checksum_field(c.sum())
}

/// Verifies a received datagram including its checksum field. A zero
/// checksum is rejected.
pub fn udp_verify(src: &Ipv6Addr, dst: &Ipv6Addr, segment: &[u8]) -> Result<(), UdpError> {
    let h = UdpHeader::parse(segment)?;
    if h.length as usize != segment.len() {
        return Err(UdpError::BadLength {
            declared: h.length as usize,
            actual: segment.len(),
        });
    }
    if h.checksum == 0 {
        return Err(UdpError::BadChecksum);
    }
    let sum = ipv6::pseudo_checksum(src, dst, segment.len() as u32, NEXT_HEADER_UDP, segment);
    if ipv6::checksum_valid(sum) {
        Ok(())
    } else {
        Err(UdpError::BadChecksum)
    }
}

/// Serializes a complete datagram with its checksum.
pub fn build_datagram(
    src: &Ipv6Addr,
    dst: &Ipv6Addr,
    src_port: u16,
    dst_port: u16,
    payload: &[u8],
) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
    let h = UdpHeader {
        src_port,
        dst_port,
        length: (HEADER_LEN + payload.len()) as u16,
        checksum: 0,
    };
    out.extend_from_slice(&h.to_bytes());
    out.extend_from_slice(payload);
    let c = udp_checksum(src, dst, &out);
    out[6..8].copy_from_slice(&c.to_be_bytes());
    out
}

/// Header snip in front of `payload`; length and checksum are completed on
/// the way down.
pub fn header_snip(
    pb: &PktBuf,
    payload: Option<SnipId>,
    src_port: u16,
    dst_port: u16,
) -> Result<SnipId, PktBufError> {
    let h = UdpHeader {
        src_port,
        dst_port,
        length: 0,
        checksum: 0,
    };
    pb.add(payload, &h.to_bytes(), NetType::Udp)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct UdpStats {
    pub tx_datagrams: u64,
    pub tx_errors: u64,
    pub rx_datagrams: u64,
    pub rx_bad_length: u64,
    pub rx_bad_checksum: u64,
    pub rx_no_port: u64,
}

#[derive(Debug, Default)]
pub struct UdpEndpoint {
    stats: UdpStats,
}

impl UdpEndpoint {
    pub fn new() -> UdpEndpoint {
        UdpEndpoint::default()
    }

    pub fn stats(&self) -> UdpStats {
        self.stats
    }

    /// Expects `[IPv6 header] -> [UDP header] -> payload`.
    fn on_snd(&mut self, cx: &mut Ctx<'_>, pkt: SnipId) {
        let pb = cx.pktbuf();
        let Some(udp) = pb.search_type(pkt, NetType::Udp) else {
            self.stats.tx_errors += 1;
            let _ = pb.release(pkt);
            return;
        };
        let len = pb.total_len(udp).unwrap_or(0);
        if len > u16::MAX as usize || pb.write_at(udp, 4, &(len as u16).to_be_bytes()).is_err() {
            self.stats.tx_errors += 1;
            let _ = pb.release(pkt);
            return;
        }
        self.stats.tx_datagrams += 1;
        if cx.dispatch(NetType::Ipv6, DEMUX_CTX_ALL, PktKind::Snd, pkt) == 0 {
            self.stats.tx_errors += 1;
        }
    }

    /// Expects `[UDP header + payload] -> [IPv6 header] -> ...`.
    fn on_rcv(&mut self, cx: &mut Ctx<'_>, pkt: SnipId) {
        let pb = cx.pktbuf();
        let Ok(pkt) = pb.start_write(pkt) else {
            let _ = pb.release(pkt);
            return;
        };
        let ip = pb
            .search_type(pkt, NetType::Ipv6)
            .and_then(|h| pb.with_data(h, Ipv6Header::parse).ok())
            .and_then(Result::ok);
        let Some(ip) = ip else {
            self.stats.rx_bad_length += 1;
            let _ = pb.release(pkt);
            return;
        };
        let verdict = pb
            .with_data(pkt, |seg| (udp_verify(&ip.src, &ip.dst, seg), seg.len()))
            .map_err(|_| UdpError::Truncated);
        let hdr = match verdict {
            Ok((Ok(()), n)) => {
                cx.meter().bytes(n);
                pb.with_data(pkt, UdpHeader::parse).ok().and_then(Result::ok)
            }
            Ok((Err(UdpError::BadChecksum), n)) => {
                cx.meter().bytes(n);
                self.stats.rx_bad_checksum += 1;
                None
            }
            _ => {
                self.stats.rx_bad_length += 1;
                None
            }
        };
        let Some(hdr) = hdr else {
            let _ = pb.release(pkt);
            return;
        };
        if pb.mark(pkt, HEADER_LEN, NetType::Udp).is_err() {
            self.stats.rx_bad_length += 1;
            let _ = pb.release(pkt);
            return;
        }
        let _ = pb.set_nettype(pkt, NetType::Undef);
        self.stats.rx_datagrams += 1;
        let port = hdr.dst_port as DemuxCtx;
        if cx.netreg().lookup_exact(NetType::Udp, port).is_empty() {
            self.stats.rx_no_port += 1;
            let _ = cx.pktbuf().release(pkt);
            return;
        }
        cx.dispatch(NetType::Udp, port, PktKind::Rcv, pkt);
    }
}

impl Endpoint for UdpEndpoint {
    fn layer(&self) -> Layer {
        Layer::Udp
    }

    fn handle(&mut self, cx: &mut Ctx<'_>, env: Envelope) {
        match env {
            Envelope::Net(NetMsg::Snd(p)) => self.on_snd(cx, p),
            Envelope::Net(NetMsg::Rcv(p)) => self.on_rcv(cx, p),
            Envelope::Net(NetMsg::Get { reply_to, .. })
            | Envelope::Net(NetMsg::Set { reply_to, .. }) => {
                cx.reply(reply_to, errno::ENOTSUP, Vec::new())
            }
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
