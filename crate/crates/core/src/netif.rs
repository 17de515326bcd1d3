//! Interface endpoint: owns one device, turns outgoing packets into frames
//! and received frames into packets.
//!
//! Packets exchanged with the layer above start (TX) or end (RX) with a
//! `NETIF` snip carrying the link-layer addressing; see [`NetifHeader`].

use std::any::Any;
use std::collections::VecDeque;

use crate::cost::Layer;
use crate::netapi::{check_set_len, errno, NetMsg, NetOpt, OptionRequest, PktKind};
use crate::netdev::ieee802154::{self, Mhr};
use crate::netdev::{DeviceEvent, EventMask, NetDev, NetDevError, RxInfo, TxStatus};
use crate::netreg::DEMUX_CTX_ALL;
use crate::pktbuf::SnipId;
use crate::sched::{Ctx, Endpoint, Envelope, IfaceInfo, EVENT_ISR};
use crate::types::{EndpointId, L2Addr, NetType, VirtualTime};

/// Frames waiting for the device beyond the one in flight.
pub const TX_QUEUE_LEN: usize = 16;

const FLAG_BROADCAST: u8 = 1;
const FIXED_LEN: usize = 8;

/// Link-layer metadata travelling with a packet.
///
/// Wire layout: src length (1), dst length (1), interface (2), flags (1),
/// LQI (1), RSSI (2), src address, dst address.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct NetifHeader {
    pub iface: u16,
    pub src: L2Addr,
    pub dst: L2Addr,
    pub broadcast: bool,
    pub lqi: u8,
    pub rssi: i16,
}

impl NetifHeader {
    /// Header for sending through `iface` to `dst`.
    pub fn to(iface: EndpointId, dst: L2Addr) -> NetifHeader {
        NetifHeader {
            iface: iface.0,
            dst,
            ..NetifHeader::default()
        }
    }

    pub fn broadcast(iface: EndpointId) -> NetifHeader {
        NetifHeader {
            iface: iface.0,
            broadcast: true,
            ..NetifHeader::default()
        }
    }

    pub fn iface_id(&self) -> EndpointId {
        EndpointId(self.iface)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(FIXED_LEN + self.src.len() + self.dst.len());
        out.push(self.src.len() as u8);
        out.push(self.dst.len() as u8);
        out.extend_from_slice(&self.iface.to_be_bytes());
        out.push(if self.broadcast { FLAG_BROADCAST } else { 0 });
        out.push(self.lqi);
        out.extend_from_slice(&self.rssi.to_be_bytes());
        out.extend_from_slice(self.src.as_bytes());
        out.extend_from_slice(self.dst.as_bytes());
        out
    }

    pub fn parse(b: &[u8]) -> Option<NetifHeader> {
        if b.len() < FIXED_LEN {
            return None;
        }
        let (sl, dl) = (b[0] as usize, b[1] as usize);
        if b.len() != FIXED_LEN + sl + dl {
            return None;
        }
        Some(NetifHeader {
            iface: u16::from_be_bytes([b[2], b[3]]),
            broadcast: b[4] & FLAG_BROADCAST != 0,
            lqi: b[5],
            rssi: i16::from_be_bytes([b[6], b[7]]),
            src: L2Addr::new(&b[FIXED_LEN..FIXED_LEN + sl])?,
            dst: L2Addr::new(&b[FIXED_LEN + sl..])?,
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NetifStats {
    pub tx_frames: u64,
    pub tx_errors: u64,
    pub tx_queue_drops: u64,
    pub tx_no_ack: u64,
    pub rx_frames: u64,
    pub rx_dropped: u64,
    pub rx_foreign: u64,
}

pub struct Netif {
    dev: Box<dyn NetDev>,
    addr: u16,
    seq: u8,
    upper: NetType,
    tx_queue: VecDeque<Vec<u8>>,
    tx_busy: bool,
    stats: NetifStats,
}

fn short_of(a: &L2Addr) -> Option<u16> {
    match a.as_bytes() {
        [h, l] => Some(u16::from_be_bytes([*h, *l])),
        _ => None,
    }
}

fn dev_errno(e: NetDevError) -> i32 {
    match e {
        NetDevError::Unsupported => errno::ENOTSUP,
        NetDevError::Overflow => errno::EOVERFLOW,
        _ => errno::EINVAL,
    }
}

impl Netif {
    /// `upper` is the type received frames are handed to: 6LoWPAN or IPv6.
    pub fn new(dev: Box<dyn NetDev>, upper: NetType) -> Netif {
        Netif {
            dev,
            addr: 0,
            seq: 0,
            upper,
            tx_queue: VecDeque::new(),
            tx_busy: false,
            stats: NetifStats::default(),
        }
    }

    pub fn stats(&self) -> NetifStats {
        self.stats
    }

    pub fn device(&self) -> &dyn NetDev {
        self.dev.as_ref()
    }

    pub fn device_mut(&mut self) -> &mut dyn NetDev {
        self.dev.as_mut()
    }

    /// Wires the device to the scheduler, initializes it and publishes the
    /// interface.
    pub fn attach(&mut self, cx: &mut Ctx<'_>) -> Result<IfaceInfo, NetDevError> {
        let me = cx.me();
        let line = cx.irq_line();
        self.dev.set_event_callback(Box::new(move || line.raise(me)));
        self.dev.set_clock(cx.clock());
        let mut v = [0u8; 2];
        self.dev.get(NetOpt::EventMask, &mut v)?;
        let mask = EventMask(u16::from_be_bytes(v))
            .union(EventMask::RX_COMPLETE)
            .union(EventMask::TX_COMPLETE);
        self.dev.set(NetOpt::EventMask, &mask.0.to_be_bytes())?;
        self.dev.init()?;
        self.dev.get(NetOpt::Address, &mut v)?;
        self.addr = u16::from_be_bytes(v);
        self.dev.get(NetOpt::MaxPduSize, &mut v)?;
        let info = IfaceInfo {
            id: me,
            l2addr: L2Addr::short(self.addr),
            max_pdu: u16::from_be_bytes(v) as usize,
            sixlowpan: self.upper == NetType::Sixlowpan,
            device_type: self.dev.device_type(),
        };
        cx.register_iface(info);
        Ok(info)
    }

    fn on_snd(&mut self, cx: &mut Ctx<'_>, pkt: SnipId) {
        let frame = self.build_frame(cx, pkt);
        let _ = cx.pktbuf().release(pkt);
        let Some(frame) = frame else {
            self.stats.tx_errors += 1;
            return;
        };
        if self.tx_busy {
            if self.tx_queue.len() >= TX_QUEUE_LEN {
                self.stats.tx_queue_drops += 1;
                return;
            }
            self.tx_queue.push_back(frame);
        } else {
            self.transmit(frame);
        }
    }

    fn build_frame(&mut self, cx: &mut Ctx<'_>, pkt: SnipId) -> Option<Vec<u8>> {
        let pb = cx.pktbuf();
        if pb.nettype(pkt).ok()? != NetType::Netif {
            return None;
        }
        let hdr = pb.with_data(pkt, NetifHeader::parse).ok()??;
        let dst = if hdr.broadcast {
            ieee802154::BROADCAST
        } else {
            short_of(&hdr.dst)?
        };
        let payload = match pb.next(pkt).ok()? {
            Some(n) => pb.flatten(n).ok()?,
            None => Vec::new(),
        };
        if payload.len() > ieee802154::MAX_PAYLOAD {
            return None;
        }
        let mhr = Mhr {
            seq: self.seq,
            pan: ieee802154::DEFAULT_PAN,
            dst,
            src: self.addr,
            ack_req: false,
        };
        self.seq = self.seq.wrapping_add(1);
        let frame = ieee802154::build_frame(&mhr, &payload);
        // header and FCS writes plus the CRC pass over the frame
        cx.meter()
            .bytes(ieee802154::MHR_LEN + ieee802154::FCS_LEN + frame.len());
        Some(frame)
    }

    fn transmit(&mut self, frame: Vec<u8>) {
        match self.dev.send(&frame) {
            Ok(_) => {
                self.tx_busy = true;
                self.stats.tx_frames += 1;
            }
            Err(NetDevError::DeviceBusy) => {
                self.tx_busy = true;
                self.tx_queue.push_front(frame);
            }
            Err(_) => self.stats.tx_errors += 1,
        }
    }

    fn on_isr(&mut self, cx: &mut Ctx<'_>) {
        let mut events = Vec::new();
        self.dev.isr(&mut |e| events.push(e));
        for e in events {
            match e {
                DeviceEvent::RxComplete => self.on_rx(cx),
                DeviceEvent::TxComplete(status) => {
                    if status == TxStatus::NoAck {
                        self.stats.tx_no_ack += 1;
                    }
                    self.tx_busy = false;
                    if let Some(f) = self.tx_queue.pop_front() {
                        self.transmit(f);
                    }
                }
                _ => {}
            }
        }
    }

    fn on_rx(&mut self, cx: &mut Ctx<'_>) {
        let Ok(len) = self.dev.recv(None, false, None) else {
            return;
        };
        let pb = cx.pktbuf();
        let pkt = match pb.add_zeroed(None, len, NetType::Undef) {
            Ok(p) => p,
            Err(_) => {
                let _ = self.dev.recv(None, true, None);
                self.stats.rx_dropped += 1;
                return;
            }
        };
        let mut info = RxInfo::default();
        let dev = &mut self.dev;
        let got = pb.with_data_mut(pkt, |buf| dev.recv(Some(buf), false, Some(&mut info)));
        if !matches!(got, Ok(Ok(n)) if n == len) {
            let _ = pb.release(pkt);
            self.stats.rx_dropped += 1;
            return;
        }
        cx.meter().bytes(2 * len);
        match self.rx_packet(cx, pkt, len, info) {
            Some(p) => {
                self.stats.rx_frames += 1;
                cx.dispatch(self.upper, DEMUX_CTX_ALL, PktKind::Rcv, p);
            }
            None => {
                let _ = cx.pktbuf().release(pkt);
            }
        }
    }

    /// Validates the frame in `pkt` and replaces its MAC header by a
    /// `NETIF` snip.
    fn rx_packet(&mut self, cx: &mut Ctx<'_>, pkt: SnipId, len: usize, info: RxInfo) -> Option<SnipId> {
        let pb = cx.pktbuf();
        let mhr = match pb.with_data(pkt, |f| ieee802154::split(f).map(|(m, _)| m)) {
            Ok(Ok(m)) => m,
            _ => {
                self.stats.rx_dropped += 1;
                return None;
            }
        };
        let broadcast = mhr.dst == ieee802154::BROADCAST;
        if (!broadcast && mhr.dst != self.addr) || mhr.pan != ieee802154::DEFAULT_PAN {
            self.stats.rx_foreign += 1;
            return None;
        }
        if len <= ieee802154::MHR_LEN + ieee802154::FCS_LEN {
            self.stats.rx_dropped += 1;
            return None;
        }
        pb.truncate(pkt, len - ieee802154::FCS_LEN).ok()?;
        pb.mark(pkt, ieee802154::MHR_LEN, NetType::Undef).ok()?;
        if let Some(mhr_snip) = pb.detach_next(pkt).ok()? {
            let _ = pb.release(mhr_snip);
        }
        let hdr = NetifHeader {
            iface: cx.me().0,
            src: L2Addr::short(mhr.src),
            dst: L2Addr::short(mhr.dst),
            broadcast,
            lqi: info.lqi,
            rssi: info.rssi,
        };
        let h = pb.add(None, &hdr.to_bytes(), NetType::Netif).ok()?;
        pb.set_next(pkt, h).ok()?;
        pb.set_nettype(pkt, self.upper).ok()?;
        Some(pkt)
    }

    fn on_get(&mut self, cx: &mut Ctx<'_>, mut req: OptionRequest, reply_to: EndpointId) {
        match self.dev.get(req.opt, &mut req.data) {
            Ok(n) => {
                req.data.truncate(n);
                cx.reply(reply_to, n as i32, req.data);
            }
            Err(e) => cx.reply(reply_to, dev_errno(e), Vec::new()),
        }
    }

    fn on_set(&mut self, cx: &mut Ctx<'_>, req: OptionRequest, reply_to: EndpointId) {
        if let Err(e) = check_set_len(&req) {
            cx.reply(reply_to, e, Vec::new());
            return;
        }
        let mut value = req.data.clone();
        if req.opt == NetOpt::EventMask {
            let m = EventMask(u16::from_be_bytes([value[0], value[1]]))
                .union(EventMask::RX_COMPLETE)
                .union(EventMask::TX_COMPLETE);
            value = m.0.to_be_bytes().to_vec();
        }
        match self.dev.set(req.opt, &value) {
            Ok(n) => {
                if req.opt == NetOpt::Address {
                    self.addr = u16::from_be_bytes([value[0], value[1]]);
                    if let Some(mut info) = cx.iface(cx.me()) {
                        info.l2addr = L2Addr::short(self.addr);
                        cx.register_iface(info);
                    }
                }
                cx.reply(reply_to, n as i32, Vec::new());
            }
            Err(e) => cx.reply(reply_to, dev_errno(e), Vec::new()),
        }
    }
}

impl Endpoint for Netif {
    fn layer(&self) -> Layer {
        Layer::L2
    }

    fn handle(&mut self, cx: &mut Ctx<'_>, env: Envelope) {
        match env {
            Envelope::Net(NetMsg::Snd(p)) => self.on_snd(cx, p),
            Envelope::Net(NetMsg::Rcv(p)) => {
                let _ = cx.pktbuf().release(p);
            }
            Envelope::Net(NetMsg::Get { req, reply_to }) => self.on_get(cx, req, reply_to),
            Envelope::Net(NetMsg::Set { req, reply_to }) => self.on_set(cx, req, reply_to),
            Envelope::Event(EVENT_ISR) => self.on_isr(cx),
            _ => {}
        }
    }

    fn hw_deadline(&self) -> Option<VirtualTime> {
        self.dev.next_deadline()
    }

    fn hw_advance(&mut self, now: VirtualTime) {
        self.dev.advance(now);
    }

    fn as_any(&self) -> &dyn Any {
        self
    }

    fn as_any_mut(&mut self) -> &mut dyn Any {
        self
    }
}
