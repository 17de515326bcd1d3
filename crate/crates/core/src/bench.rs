//! Measurement harness: per-layer processing cost, goodput over the three
//! device setups, and the analytic airtime bound of the simulated radio.
//!
//! Costs come from the deterministic [`CostMeter`](crate::cost::CostMeter);
//! goodput over the loopback and reflector setups converts cost into time
//! with the nominal [`COST_CLOCK_OPS_PER_SEC`], over the radio it uses the
//! virtual clock.

use std::fmt;
use std::net::Ipv6Addr;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::cost::{CostSnapshot, Layer};
use crate::ipv6::{self, Ipv6Header, LOOPBACK_IFACE};
use crate::netapi::{NetApiError, NetMsg, PktKind};
use crate::netdev::ieee802154;
use crate::netdev::medium::{MediumDevice, MediumParams, MediumProbe};
use crate::netdev::reflector::Reflector;
use crate::netdev::NetDevError;
use crate::netif::NetifHeader;
use crate::netreg::{NetregEntry, DEMUX_CTX_ALL};
use crate::sched::{Node, NodeConfig, StackLayers};
use crate::sixlowpan;
use crate::sock::{IpEp, SockError, SockIp, SockUdp, UdpEp};
use crate::types::{EndpointId, L2Addr, NetType, NS_PER_SEC};
use crate::udp;

/// Nominal processing speed used to turn operation counts into time.
pub const COST_CLOCK_OPS_PER_SEC: f64 = 100e6;
pub const OWN_ADDR: Ipv6Addr = Ipv6Addr::new(0xfe80, 0, 0, 0, 0, 0, 0, 1);
pub const PEER_ADDR: Ipv6Addr = Ipv6Addr::new(0xfe80, 0, 0, 0, 0, 0, 0, 2);
pub const OWN_L2: u16 = 0x0001;
pub const PEER_L2: u16 = 0x0002;
pub const BENCH_PORT: u16 = 7;
/// Next-header value used by raw IPv6 traffic (reserved for experiments).
pub const RAW_PROTOCOL: u8 = 253;
/// Largest UDP payload whose datagram still fits the IPv6 minimum MTU.
pub const MAX_BENCH_PAYLOAD: usize = ipv6::MIN_MTU - ipv6::HEADER_LEN - udp::HEADER_LEN;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("{entry} entry is not available with the {device} device")]
    Unsupported { entry: EntryLayer, device: DeviceKind },
    #[error("payload {0} exceeds {MAX_BENCH_PAYLOAD} bytes")]
    PayloadTooLarge(usize),
    #[error("repetitions must be at least 1")]
    NoRepetitions,
    #[error("device: {0}")]
    Device(#[from] NetDevError),
    #[error("configuration: {0}")]
    Config(#[from] NetApiError),
    #[error("socket: {0}")]
    Sock(#[from] SockError),
    #[error("packet lost on the {0} path")]
    Lost(&'static str),
    #[error("packet buffer exhausted")]
    OutOfMemory,
    #[error("csv: {0}")]
    Csv(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{0}")]
pub struct ParseError(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EntryLayer {
    SockUdp,
    SockIp,
    Udp,
    Ipv6,
    Sixlo,
}

impl EntryLayer {
    pub const ALL: [EntryLayer; 5] = [
        EntryLayer::SockUdp,
        EntryLayer::SockIp,
        EntryLayer::Udp,
        EntryLayer::Ipv6,
        EntryLayer::Sixlo,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EntryLayer::SockUdp => "sock_udp",
            EntryLayer::SockIp => "sock_ip",
            EntryLayer::Udp => "udp",
            EntryLayer::Ipv6 => "ipv6",
            EntryLayer::Sixlo => "sixlo",
        }
    }
}

impl fmt::Display for EntryLayer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EntryLayer {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EntryLayer::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| ParseError(format!("unknown entry layer {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DeviceKind {
    IpLoopback,
    Reflector,
    Medium,
}

impl DeviceKind {
    pub const ALL: [DeviceKind; 3] = [DeviceKind::IpLoopback, DeviceKind::Reflector, DeviceKind::Medium];

    pub fn name(self) -> &'static str {
        match self {
            DeviceKind::IpLoopback => "ip_loopback",
            DeviceKind::Reflector => "reflector",
            DeviceKind::Medium => "medium",
        }
    }

    /// Whether packets come back to the sender.
    pub fn round_trip(self) -> bool {
        self != DeviceKind::Medium
    }
}

impl fmt::Display for DeviceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DeviceKind {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DeviceKind::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| ParseError(format!("unknown device {s:?}")))
    }
}

/// `prefix=<addr>/<len>,via=<addr>`; `via` may be omitted for on-link.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RouteSpec {
    pub prefix: Ipv6Addr,
    pub prefix_len: u8,
    pub via: Ipv6Addr,
}

fn key_values(s: &str) -> Result<Vec<(&str, &str)>, ParseError> {
    s.split(',')
        .map(|kv| {
            kv.split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| ParseError(format!("expected key=value in {kv:?}")))
        })
        .collect()
}

fn parse_addr(v: &str) -> Result<Ipv6Addr, ParseError> {
    v.parse()
        .map_err(|_| ParseError(format!("bad IPv6 address {v:?}")))
}

impl FromStr for RouteSpec {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut prefix = None;
        let mut via = Ipv6Addr::UNSPECIFIED;
        for (k, v) in key_values(s)? {
            match k {
                "prefix" => {
                    let (a, l) = v
                        .split_once('/')
                        .ok_or_else(|| ParseError(format!("prefix needs /len: {v:?}")))?;
                    let len: u8 = l
                        .parse()
                        .ok()
                        .filter(|l| *l <= 128)
                        .ok_or_else(|| ParseError(format!("bad prefix length {l:?}")))?;
                    prefix = Some((parse_addr(a)?, len));
                }
                "via" => via = parse_addr(v)?,
                _ => return Err(ParseError(format!("unknown route key {k:?}"))),
            }
        }
        let (prefix, prefix_len) = prefix.ok_or_else(|| ParseError("route needs prefix=".into()))?;
        Ok(RouteSpec {
            prefix,
            prefix_len,
            via,
        })
    }
}

/// `ip=<addr>,l2=<hex bytes separated by ':'>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NeighSpec {
    pub ip: Ipv6Addr,
    pub l2: L2Addr,
}

impl FromStr for NeighSpec {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut ip = None;
        let mut l2 = None;
        for (k, v) in key_values(s)? {
            match k {
                "ip" => ip = Some(parse_addr(v)?),
                "l2" => {
                    l2 = Some(
                        v.parse::<L2Addr>()
                            .map_err(|_| ParseError(format!("bad link-layer address {v:?}")))?,
                    )
                }
                _ => return Err(ParseError(format!("unknown neighbor key {k:?}"))),
            }
        }
        Ok(NeighSpec {
            ip: ip.ok_or_else(|| ParseError("neighbor needs ip=".into()))?,
            l2: l2.ok_or_else(|| ParseError("neighbor needs l2=".into()))?,
        })
    }
}

/// Header sizes behind the analytic frame model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeaderModel {
    pub ipv6: usize,
    pub udp: usize,
    pub dispatch: usize,
    pub frag1: usize,
    pub fragn: usize,
    pub mhr: usize,
    pub fcs: usize,
    pub max_frame: usize,
}

impl Default for HeaderModel {
    fn default() -> Self {
        HeaderModel {
            ipv6: ipv6::HEADER_LEN,
            udp: udp::HEADER_LEN,
            dispatch: 1,
            frag1: sixlowpan::FRAG1_HDR_LEN,
            fragn: sixlowpan::FRAGN_HDR_LEN,
            mhr: ieee802154::MHR_LEN,
            fcs: ieee802154::FCS_LEN,
            max_frame: ieee802154::MAX_PSDU,
        }
    }
}

impl HeaderModel {
    /// Default IP-layer headers over the frame layout of `m`.
    pub fn for_medium(m: &MediumParams) -> HeaderModel {
        HeaderModel {
            mhr: m.mhr_bytes,
            fcs: m.fcs_bytes,
            max_frame: m.max_frame,
            ..HeaderModel::default()
        }
    }

    /// Payload bytes one frame can carry.
    pub fn l2_mtu(&self) -> usize {
        self.max_frame - self.mhr - self.fcs
    }

    pub fn datagram_len(&self, udp_payload: usize) -> usize {
        udp_payload + self.udp + self.ipv6
    }

    /// 6LoWPAN payload of every frame for an IPv6 datagram of `len` bytes.
    pub fn frame_payloads(&self, len: usize) -> Vec<usize> {
        let mtu = self.l2_mtu();
        if len + self.dispatch <= mtu {
            return vec![len + self.dispatch];
        }
        let first = (mtu - self.frag1 - self.dispatch) / 8 * 8;
        let later = (mtu - self.fragn) / 8 * 8;
        let last_max = mtu - self.fragn;
        let mut out = vec![self.frag1 + self.dispatch + first];
        let mut rem = len - first;
        while rem > last_max {
            out.push(self.fragn + later);
            rem -= later;
        }
        out.push(self.fragn + rem);
        out
    }

    pub fn fragment_count(&self, datagram_len: usize) -> usize {
        self.frame_payloads(datagram_len).len()
    }

    /// PSDU length of every frame carrying `udp_payload`.
    pub fn psdu_lens(&self, udp_payload: usize) -> Vec<usize> {
        self.frame_payloads(self.datagram_len(udp_payload))
            .into_iter()
            .map(|p| p + self.mhr + self.fcs)
            .collect()
    }
}

/// Upper bound on UDP goodput over the radio in bit/s: the payload divided
/// by the airtime and interframe spacing of its frames, with contention and
/// acknowledgments left out.
pub fn medium_theory_goodput(params: &MediumParams, udp_payload: usize, headers: &HeaderModel) -> f64 {
    if udp_payload == 0 {
        return 0.0;
    }
    let bits_per_byte = 8.0 / params.bits_per_symbol as f64;
    let symbols: f64 = headers
        .psdu_lens(udp_payload)
        .into_iter()
        .map(|psdu| {
            let ifs = if psdu <= params.sifs_max_frame {
                params.sifs_symbols
            } else {
                params.lifs_symbols
            };
            (params.phy_overhead + psdu) as f64 * bits_per_byte + ifs as f64
        })
        .sum();
    8.0 * udp_payload as f64 * params.symbol_rate as f64 / symbols
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub entry: EntryLayer,
    pub device: DeviceKind,
    pub payloads: Vec<usize>,
    pub repetitions: usize,
    pub seed: u64,
    pub medium: MediumParams,
    pub routes: Vec<RouteSpec>,
    pub neighbors: Vec<NeighSpec>,
    pub headers: HeaderModel,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            entry: EntryLayer::SockUdp,
            device: DeviceKind::Reflector,
            payloads: vec![0, 50, 100, 500, 1000],
            repetitions: 5,
            seed: 1,
            medium: MediumParams::default(),
            routes: Vec::new(),
            neighbors: Vec::new(),
            headers: HeaderModel::default(),
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<(), BenchError> {
        if self.repetitions == 0 {
            return Err(BenchError::NoRepetitions);
        }
        if let Some(p) = self.payloads.iter().find(|p| **p > MAX_BENCH_PAYLOAD) {
            return Err(BenchError::PayloadTooLarge(*p));
        }
        if self.entry == EntryLayer::Sixlo && self.device == DeviceKind::IpLoopback {
            return Err(BenchError::Unsupported {
                entry: self.entry,
                device: self.device,
            });
        }
        Ok(())
    }
}

/// Parses `a:b:step` (inclusive) or a comma separated list.
pub fn parse_payloads(s: &str) -> Result<Vec<usize>, ParseError> {
    let num = |v: &str| {
        v.trim()
            .parse::<usize>()
            .map_err(|_| ParseError(format!("bad payload size {v:?}")))
    };
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        [a, b, step] => {
            let (a, b, step) = (num(a)?, num(b)?, num(step)?);
            if step == 0 || a > b {
                return Err(ParseError(format!("bad payload range {s:?}")));
            }
            Ok((a..=b).step_by(step).collect())
        }
        [a, b] => {
            let (a, b) = (num(a)?, num(b)?);
            if a > b {
                return Err(ParseError(format!("bad payload range {s:?}")));
            }
            Ok((a..=b).collect())
        }
        [list] => list.split(',').map(num).collect(),
        _ => Err(ParseError(format!("bad payload spec {s:?}"))),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub payload: usize,
    pub entry: String,
    pub device: String,
    pub metric: String,
    pub value: f64,
    pub seed: u64,
}

pub const CSV_HEADER: [&str; 6] = ["payload", "entry_layer", "device", "metric", "value", "seed"];

fn format_value(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v:.6}")
    }
}

pub fn to_csv(rows: &[Row]) -> Result<String, BenchError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| BenchError::Csv(e.to_string());
    w.write_record(CSV_HEADER).map_err(err)?;
    for r in rows {
        w.write_record([
            r.payload.to_string(),
            r.entry.clone(),
            r.device.clone(),
            r.metric.clone(),
            format_value(r.value),
            r.seed.to_string(),
        ])
        .map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| BenchError::Csv(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| BenchError::Csv(e.to_string()))
}

pub fn write_csv(rows: &[Row], path: &Path) -> Result<(), BenchError> {
    std::fs::write(path, to_csv(rows)?)?;
    Ok(())
}

/// Per-packet numbers for one payload size.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub payload: usize,
    /// Median stack operations per packet and direction.
    pub cum_cost_ops: f64,
    /// Median operations per packet attributed to each layer.
    pub layer_cost_ops: [f64; 6],
    pub goodput_bps: f64,
    /// Frames the interface sent per packet.
    pub frames: usize,
}

enum Receiver {
    SockUdp(SockUdp),
    SockIp(SockIp),
    Mailbox(EndpointId),
}

/// One node wired for an entry layer and a device.
struct Harness {
    node: Node,
    iface: Option<EndpointId>,
    probe: Option<MediumProbe>,
    entry: EntryLayer,
    device: DeviceKind,
    dst: Ipv6Addr,
    rx: Receiver,
}

impl Harness {
    fn new(cfg: &BenchConfig) -> Result<Harness, BenchError> {
        cfg.validate()?;
        let layers = match cfg.entry {
            EntryLayer::Sixlo => StackLayers {
                sixlowpan: true,
                ipv6: false,
                udp: false,
            },
            _ => StackLayers::default(),
        };
        let mut node = Node::new(NodeConfig {
            layers,
            ..NodeConfig::default()
        });
        let (iface, probe) = match cfg.device {
            DeviceKind::IpLoopback => (None, None),
            DeviceKind::Reflector => {
                let i = node.add_interface(Box::new(Reflector::new(OWN_L2)), true)?;
                (Some(i), None)
            }
            DeviceKind::Medium => {
                let params = MediumParams {
                    seed: cfg.seed,
                    ..cfg.medium.clone()
                };
                let dev = MediumDevice::new(OWN_L2, params);
                let probe = dev.probe();
                let i = node.add_interface(Box::new(dev), true)?;
                (Some(i), Some(probe))
            }
        };
        let dst = if cfg.device == DeviceKind::Medium {
            PEER_ADDR
        } else {
            OWN_ADDR
        };
        if node.ipv6_endpoint().is_some() {
            match iface {
                None => node.add_loopback_route(OWN_ADDR)?,
                Some(i) => {
                    node.set_ipv6_addr(i, OWN_ADDR)?;
                    node.add_route(dst, 128, Ipv6Addr::UNSPECIFIED, i)?;
                    node.add_neighbor(dst, L2Addr::short(PEER_L2), i)?;
                }
            }
            let out = iface.unwrap_or(LOOPBACK_IFACE);
            for r in &cfg.routes {
                node.add_route(r.prefix, r.prefix_len, r.via, out)?;
            }
            if let Some(i) = iface {
                for n in &cfg.neighbors {
                    node.add_neighbor(n.ip, n.l2, i)?;
                }
            }
        }
        let rx = match cfg.entry {
            EntryLayer::SockUdp => Receiver::SockUdp(SockUdp::create(&mut node, UdpEp::any(BENCH_PORT), None)?),
            EntryLayer::SockIp => Receiver::SockIp(SockIp::create(
                &mut node,
                IpEp::new(Ipv6Addr::UNSPECIFIED, RAW_PROTOCOL),
                None,
            )?),
            EntryLayer::Udp => Receiver::Mailbox(mailbox(&mut node, NetType::Udp, BENCH_PORT as u32)),
            EntryLayer::Ipv6 => Receiver::Mailbox(mailbox(&mut node, NetType::Ipv6, RAW_PROTOCOL as u32)),
            EntryLayer::Sixlo => Receiver::Mailbox(mailbox(&mut node, NetType::Ipv6, DEMUX_CTX_ALL)),
        };
        Ok(Harness {
            node,
            iface,
            probe,
            entry: cfg.entry,
            device: cfg.device,
            dst,
            rx,
        })
    }

    fn send(&mut self, payload: &[u8]) -> Result<(), BenchError> {
        let node = &mut self.node;
        match &self.rx {
            Receiver::SockUdp(s) => {
                s.send(node, payload, Some(UdpEp::new(self.dst, BENCH_PORT)))?;
            }
            Receiver::SockIp(s) => {
                s.send(node, payload, Some(self.dst))?;
            }
            Receiver::Mailbox(_) => {
                let pb = node.pktbuf().clone();
                let oom = |_| BenchError::OutOfMemory;
                let (to, pkt) = match self.entry {
                    EntryLayer::Udp => {
                        let d = pb.add(None, payload, NetType::Undef).map_err(oom)?;
                        let u = udp::header_snip(&pb, Some(d), BENCH_PORT, BENCH_PORT).map_err(oom)?;
                        let h = ipv6::header_snip(&pb, Some(u), Ipv6Addr::UNSPECIFIED, self.dst, ipv6::NEXT_HEADER_UDP)
                            .map_err(oom)?;
                        (node.udp_endpoint(), h)
                    }
                    EntryLayer::Ipv6 => {
                        let mut body = vec![0u8; udp::HEADER_LEN];
                        body.extend_from_slice(payload);
                        let d = pb.add(None, &body, NetType::Undef).map_err(oom)?;
                        let h = ipv6::header_snip(&pb, Some(d), Ipv6Addr::UNSPECIFIED, self.dst, RAW_PROTOCOL)
                            .map_err(oom)?;
                        (node.ipv6_endpoint(), h)
                    }
                    _ => {
                        let plen = udp::HEADER_LEN + payload.len();
                        let mut h = Ipv6Header::new(OWN_ADDR, self.dst, RAW_PROTOCOL, plen as u16);
                        h.hop_limit = ipv6::DEFAULT_HOP_LIMIT;
                        let mut dgram = h.to_bytes().to_vec();
                        dgram.resize(ipv6::HEADER_LEN + udp::HEADER_LEN, 0);
                        dgram.extend_from_slice(payload);
                        let d = pb.add(None, &dgram, NetType::Ipv6).map_err(oom)?;
                        let iface = self.iface.expect("sixlo entry needs a device");
                        let nh = NetifHeader::to(iface, L2Addr::short(PEER_L2));
                        let n = pb.add(Some(d), &nh.to_bytes(), NetType::Netif).map_err(oom)?;
                        (node.sixlowpan_endpoint(), n)
                    }
                };
                let to = to.expect("layer present");
                if let Err(e) = node.netapi_send(to, PktKind::Snd, pkt) {
                    let _ = pb.release(pkt);
                    return Err(e.into());
                }
            }
        }
        Ok(())
    }

    fn recv(&mut self, buf: &mut [u8]) -> Result<(), BenchError> {
        let node = &mut self.node;
        let timeout = NS_PER_SEC;
        match &self.rx {
            Receiver::SockUdp(s) => {
                s.recv(node, buf, timeout)?;
            }
            Receiver::SockIp(s) => {
                s.recv(node, buf, timeout)?;
            }
            Receiver::Mailbox(id) => {
                let id = *id;
                let deadline = node.now() + timeout;
                if !node.run_until(deadline, |n| n.mailbox_len(id) > 0) {
                    return Err(BenchError::Lost(self.entry.name()));
                }
                match node.pop_message(id) {
                    Some(NetMsg::Rcv(p)) => {
                        let pb = node.pktbuf();
                        let _ = pb.read(p);
                        let _ = pb.release(p);
                    }
                    Some(m) => {
                        node.discard_message(m);
                        return Err(BenchError::Lost(self.entry.name()));
                    }
                    None => return Err(BenchError::Lost(self.entry.name())),
                }
            }
        }
        Ok(())
    }

    fn frames_sent(&self) -> u64 {
        self.iface
            .and_then(|i| self.node.netif(i))
            .map_or(0, |n| n.stats().tx_frames)
    }
}

fn mailbox(node: &mut Node, ty: NetType, ctx: u32) -> EndpointId {
    let id = node.spawn_mailbox("bench", node.config().mailbox_capacity);
    node.netreg()
        .register(NetregEntry::new(ty, ctx, id))
        .expect("fresh mailbox");
    id
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn payload_bytes(n: usize, seed: u64) -> Vec<u8> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ n as u64);
    (0..n).map(|_| rng.gen()).collect()
}

/// Runs `cfg.repetitions` packets of `payload` bytes.
pub fn measure(cfg: &BenchConfig, payload: usize) -> Result<Measurement, BenchError> {
    let mut h = Harness::new(cfg)?;
    let data = payload_bytes(payload, cfg.seed);
    let mut buf = vec![0u8; payload + 64];
    let round_trip = h.device.round_trip();
    let directions = if round_trip { 2.0 } else { 1.0 };
    let mut totals = Vec::with_capacity(cfg.repetitions);
    let mut layers: Vec<Vec<f64>> = (0..6).map(|_| Vec::with_capacity(cfg.repetitions)).collect();
    let frames_before = h.frames_sent();
    if let Some(p) = &h.probe {
        p.reset();
    }
    for _ in 0..cfg.repetitions {
        let before: CostSnapshot = h.node.meter().snapshot();
        h.send(&data)?;
        if round_trip {
            h.recv(&mut buf)?;
        } else {
            h.node.run_until_idle();
        }
        let d = h.node.meter().snapshot().since(&before);
        totals.push(d.stack_ops() as f64 / directions);
        for l in Layer::ALL {
            layers[l as usize].push(d.layer(l).ops() as f64 / directions);
        }
    }
    let frames = ((h.frames_sent() - frames_before) / cfg.repetitions as u64) as usize;
    let cum = median(&mut totals);
    let mut layer_cost_ops = [0.0; 6];
    for (i, v) in layers.iter_mut().enumerate() {
        layer_cost_ops[i] = median(v);
    }
    let goodput_bps = match &h.probe {
        Some(p) => {
            let s = p.stats();
            let start = s.first_tx_start.ok_or(BenchError::Lost("medium"))?;
            let elapsed = (s.ready_at - start) as f64 / NS_PER_SEC as f64;
            if elapsed > 0.0 {
                8.0 * (payload * cfg.repetitions) as f64 / elapsed
            } else {
                0.0
            }
        }
        None => {
            // one packet's trip down and up takes 2 * cum operations
            let seconds = 2.0 * cum / COST_CLOCK_OPS_PER_SEC;
            8.0 * payload as f64 / seconds
        }
    };
    Ok(Measurement {
        payload,
        cum_cost_ops: cum,
        layer_cost_ops,
        goodput_bps,
        frames,
    })
}

fn row(cfg: &BenchConfig, payload: usize, metric: &str, value: f64) -> Row {
    Row {
        payload,
        entry: cfg.entry.name().to_string(),
        device: cfg.device.name().to_string(),
        metric: metric.to_string(),
        value,
        seed: cfg.seed,
    }
}

/// Per-layer processing cost and packet rate for every payload.
pub fn bench_layer(cfg: &BenchConfig) -> Result<Vec<Row>, BenchError> {
    cfg.validate()?;
    let mut rows = Vec::new();
    for &p in &cfg.payloads {
        let m = measure(cfg, p)?;
        rows.push(row(cfg, p, "cum_cost_ops", m.cum_cost_ops));
        for l in Layer::ALL {
            if l != Layer::App {
                let metric = format!("layer_cost_ops.{}", l.name());
                rows.push(row(cfg, p, &metric, m.layer_cost_ops[l as usize]));
            }
        }
        let rate = if m.cum_cost_ops > 0.0 {
            COST_CLOCK_OPS_PER_SEC / m.cum_cost_ops
        } else {
            0.0
        };
        rows.push(row(cfg, p, "rate_pps", rate));
        rows.push(row(cfg, p, "frames", m.frames as f64));
    }
    Ok(rows)
}

/// Application goodput for every payload; radio runs also report the
/// analytic bound.
pub fn bench_goodput(cfg: &BenchConfig) -> Result<Vec<Row>, BenchError> {
    cfg.validate()?;
    let mut rows = Vec::new();
    for &p in &cfg.payloads {
        let m = measure(cfg, p)?;
        rows.push(row(cfg, p, "goodput_bps", m.goodput_bps));
        if cfg.device == DeviceKind::Medium {
            rows.push(row(cfg, p, "theory_bps", medium_theory_goodput(&cfg.medium, p, &cfg.headers)));
        }
    }
    Ok(rows)
}

/// The analytic bound only.
pub fn bench_theory(cfg: &BenchConfig) -> Vec<Row> {
    cfg.payloads
        .iter()
        .map(|&p| Row {
            device: DeviceKind::Medium.name().to_string(),
            ..row(cfg, p, "theory_bps", medium_theory_goodput(&cfg.medium, p, &cfg.headers))
        })
        .collect()
}
