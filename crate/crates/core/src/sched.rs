//! Deterministic single-threaded scheduler.
//!
//! Each stack module runs as an [`Endpoint`] with its own bounded mailbox.
//! The node delivers messages in global FIFO order, one envelope at a time,
//! and owns a virtual clock that only moves when nothing is runnable: it then
//! jumps to the earliest timer or simulated-hardware deadline. Device
//! interrupts are raised on an [`IrqLine`] and turned into ISR events for the
//! owning interface endpoint before the next message is delivered.

use std::any::Any;
use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use crate::cost::{CostMeter, Layer};
use crate::netapi::{AckStatus, NetApiError, NetMsg, PktKind, DEFAULT_OPTION_TIMEOUT};
use crate::netdev::DeviceType;
use crate::netreg::{DemuxCtx, Netreg};
use crate::pktbuf::{PktBuf, SnipId, DEFAULT_CAPACITY};
use crate::types::{EndpointId, L2Addr, NetType, VirtualTime};

/// Default mailbox depth of stack endpoints.
pub const DEFAULT_MAILBOX: usize = 8;

/// Event code posted to an interface endpoint when its device interrupted.
pub const EVENT_ISR: u32 = 0;

/// What an endpoint finds in its mailbox.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Envelope {
    Net(NetMsg),
    /// A timer set with [`Ctx::set_timer`] fired.
    Timer(u64),
    /// Internal notification (device interrupt, work continuation). Does not
    /// count against the mailbox bound.
    Event(u32),
}

pub trait Endpoint: Send + 'static {
    fn layer(&self) -> Layer;

    fn handle(&mut self, cx: &mut Ctx<'_>, env: Envelope);

    /// Next instant at which simulated hardware owned by this endpoint
    /// needs to run.
    fn hw_deadline(&self) -> Option<VirtualTime> {
        None
    }

    fn hw_advance(&mut self, _now: VirtualTime) {}

    fn as_any(&self) -> &dyn Any;

    fn as_any_mut(&mut self) -> &mut dyn Any;
}

#[derive(Debug, Clone, Default)]
pub struct VirtualClock(Arc<AtomicU64>);

impl VirtualClock {
    pub fn now(&self) -> VirtualTime {
        self.0.load(Ordering::Relaxed)
    }

    fn set(&self, t: VirtualTime) {
        self.0.store(t, Ordering::Relaxed);
    }
}

/// Interrupt request line shared between devices and the scheduler.
#[derive(Debug, Clone, Default)]
pub struct IrqLine(Arc<Mutex<Vec<EndpointId>>>);

impl IrqLine {
    pub fn raise(&self, ep: EndpointId) {
        self.0.lock().expect("irq line").push(ep);
    }

    fn take(&self) -> Vec<EndpointId> {
        std::mem::take(&mut *self.0.lock().expect("irq line"))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MailboxStats {
    pub delivered: u64,
    pub dropped: u64,
    pub high_watermark: usize,
}

struct Slot {
    name: String,
    mailbox: VecDeque<Envelope>,
    net_pending: usize,
    capacity: usize,
    handler: Option<Box<dyn Endpoint>>,
    passive: bool,
    alive: bool,
    isr_pending: bool,
    stats: MailboxStats,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct TimerEntry {
    at: VirtualTime,
    seq: u64,
    ep: EndpointId,
    token: u64,
}

/// Which protocol layers a node runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StackLayers {
    pub sixlowpan: bool,
    pub ipv6: bool,
    pub udp: bool,
}

impl Default for StackLayers {
    fn default() -> Self {
        StackLayers {
            sixlowpan: true,
            ipv6: true,
            udp: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NodeConfig {
    pub arena_capacity: usize,
    pub mailbox_capacity: usize,
    pub option_timeout: VirtualTime,
    pub layers: StackLayers,
}

impl Default for NodeConfig {
    fn default() -> Self {
        NodeConfig {
            arena_capacity: DEFAULT_CAPACITY,
            mailbox_capacity: DEFAULT_MAILBOX,
            option_timeout: DEFAULT_OPTION_TIMEOUT,
            layers: StackLayers::default(),
        }
    }
}

/// Static facts about an attached network interface.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IfaceInfo {
    pub id: EndpointId,
    pub l2addr: L2Addr,
    pub max_pdu: usize,
    pub sixlowpan: bool,
    pub device_type: DeviceType,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub(crate) struct StackIds {
    pub sixlowpan: Option<EndpointId>,
    pub ipv6: Option<EndpointId>,
    pub udp: Option<EndpointId>,
}

/// One simulated host: packet buffer, registry, endpoints and clock.
pub struct Node {
    pktbuf: Arc<PktBuf>,
    netreg: Arc<Netreg>,
    meter: Arc<CostMeter>,
    clock: VirtualClock,
    irq: IrqLine,
    slots: Vec<Slot>,
    ready: VecDeque<EndpointId>,
    timers: BinaryHeap<Reverse<TimerEntry>>,
    timer_seq: u64,
    config: NodeConfig,
    app: EndpointId,
    ifaces: Vec<IfaceInfo>,
    pub(crate) stack: StackIds,
    delivered: u64,
}

impl Node {
    /// A node with no protocol layers, only the application mailbox.
    pub fn bare(config: NodeConfig) -> Node {
        let meter = Arc::new(CostMeter::new());
        let pktbuf = Arc::new(PktBuf::with_meter(config.arena_capacity, meter.clone()));
        let mut node = Node {
            pktbuf,
            netreg: Arc::new(Netreg::new()),
            meter,
            clock: VirtualClock::default(),
            irq: IrqLine::default(),
            slots: Vec::new(),
            ready: VecDeque::new(),
            timers: BinaryHeap::new(),
            timer_seq: 0,
            app: EndpointId(0),
            ifaces: Vec::new(),
            stack: StackIds::default(),
            delivered: 0,
            config,
        };
        let cap = node.config.mailbox_capacity;
        node.app = node.spawn_mailbox("app", cap);
        node
    }

    pub fn pktbuf(&self) -> &Arc<PktBuf> {
        &self.pktbuf
    }

    pub fn netreg(&self) -> &Arc<Netreg> {
        &self.netreg
    }

    pub fn meter(&self) -> &Arc<CostMeter> {
        &self.meter
    }

    pub fn clock(&self) -> &VirtualClock {
        &self.clock
    }

    pub fn irq_line(&self) -> &IrqLine {
        &self.irq
    }

    pub fn now(&self) -> VirtualTime {
        self.clock.now()
    }

    pub fn config(&self) -> &NodeConfig {
        &self.config
    }

    pub fn app_endpoint(&self) -> EndpointId {
        self.app
    }

    pub fn option_timeout(&self) -> VirtualTime {
        self.config.option_timeout
    }

    /// Total envelopes delivered to active endpoints so far.
    pub fn delivered(&self) -> u64 {
        self.delivered
    }

    fn add_slot(&mut self, name: &str, capacity: usize, handler: Option<Box<dyn Endpoint>>) -> EndpointId {
        let id = EndpointId(self.slots.len() as u16);
        self.slots.push(Slot {
            name: name.to_string(),
            mailbox: VecDeque::new(),
            net_pending: 0,
            capacity,
            passive: handler.is_none(),
            handler,
            alive: true,
            isr_pending: false,
            stats: MailboxStats::default(),
        });
        id
    }

    pub fn spawn(&mut self, name: &str, endpoint: Box<dyn Endpoint>) -> EndpointId {
        let cap = self.config.mailbox_capacity;
        self.add_slot(name, cap, Some(endpoint))
    }

    /// Spawns an endpoint; `init` runs with a context bound to the new id
    /// before the endpoint receives its first message.
    pub fn spawn_with<E: Endpoint>(
        &mut self,
        name: &str,
        endpoint: E,
        init: impl FnOnce(&mut E, &mut Ctx<'_>),
    ) -> EndpointId {
        let id = self.spawn(name, Box::new(endpoint));
        let mut h = self.slots[id.0 as usize].handler.take().expect("fresh endpoint");
        let prev = self.meter.enter(h.layer());
        {
            let e = h.as_any_mut().downcast_mut::<E>().expect("endpoint type");
            let mut cx = Ctx { node: self, me: id };
            init(e, &mut cx);
        }
        self.meter.enter(prev);
        self.slots[id.0 as usize].handler = Some(h);
        id
    }

    /// A passive mailbox: messages accumulate until the owner pops them.
    pub fn spawn_mailbox(&mut self, name: &str, capacity: usize) -> EndpointId {
        self.add_slot(name, capacity, None)
    }

    /// Terminates an endpoint, releasing whatever its mailbox still holds.
    pub fn kill(&mut self, ep: EndpointId) {
        let Some(slot) = self.slots.get_mut(ep.0 as usize) else {
            return;
        };
        slot.alive = false;
        slot.handler = None;
        slot.net_pending = 0;
        let pending: Vec<_> = slot.mailbox.drain(..).collect();
        for env in pending {
            if let Envelope::Net(m) = env {
                self.discard_message(m);
            }
        }
        self.netreg.unregister_endpoint(ep);
    }

    pub fn is_alive(&self, ep: EndpointId) -> bool {
        self.slots.get(ep.0 as usize).is_some_and(|s| s.alive)
    }

    pub fn endpoint_name(&self, ep: EndpointId) -> Option<&str> {
        self.slots.get(ep.0 as usize).map(|s| s.name.as_str())
    }

    pub fn endpoint<T: Endpoint>(&self, ep: EndpointId) -> Option<&T> {
        self.slots
            .get(ep.0 as usize)?
            .handler
            .as_ref()?
            .as_any()
            .downcast_ref::<T>()
    }

    pub fn endpoint_mut<T: Endpoint>(&mut self, ep: EndpointId) -> Option<&mut T> {
        self.slots
            .get_mut(ep.0 as usize)?
            .handler
            .as_mut()?
            .as_any_mut()
            .downcast_mut::<T>()
    }

    pub fn mailbox_stats(&self, ep: EndpointId) -> MailboxStats {
        self.slots
            .get(ep.0 as usize)
            .map(|s| s.stats)
            .unwrap_or_default()
    }

    pub fn mailbox_len(&self, ep: EndpointId) -> usize {
        self.slots.get(ep.0 as usize).map_or(0, |s| s.mailbox.len())
    }

    /// Pops the next network message of a passive mailbox.
    pub fn pop_message(&mut self, ep: EndpointId) -> Option<NetMsg> {
        let slot = self.slots.get_mut(ep.0 as usize)?;
        while let Some(env) = slot.mailbox.pop_front() {
            if let Envelope::Net(m) = env {
                slot.net_pending -= 1;
                slot.stats.delivered += 1;
                return Some(m);
            }
        }
        None
    }

    /// Empties a passive mailbox, releasing packets it held.
    pub fn drain_mailbox(&mut self, ep: EndpointId) {
        while let Some(m) = self.pop_message(ep) {
            self.discard_message(m);
        }
    }

    /// Drops a message the caller will not process.
    pub fn discard_message(&self, msg: NetMsg) {
        if let Some(p) = msg.packet() {
            let _ = self.pktbuf.release(p);
        }
    }

    pub(crate) fn post(&mut self, to: EndpointId, msg: NetMsg) -> Result<(), NetApiError> {
        self.post_envelope(to, Envelope::Net(msg))
    }

    fn post_envelope(&mut self, to: EndpointId, env: Envelope) -> Result<(), NetApiError> {
        let Some(slot) = self.slots.get_mut(to.0 as usize) else {
            return Err(NetApiError::DeadEndpoint(to));
        };
        if !slot.alive {
            return Err(NetApiError::DeadEndpoint(to));
        }
        if matches!(env, Envelope::Net(_)) {
            if slot.net_pending >= slot.capacity {
                slot.stats.dropped += 1;
                return Err(NetApiError::QueueFull(to));
            }
            slot.net_pending += 1;
        }
        slot.mailbox.push_back(env);
        slot.stats.high_watermark = slot.stats.high_watermark.max(slot.mailbox.len());
        if !slot.passive {
            self.ready.push_back(to);
        }
        self.meter.message();
        Ok(())
    }

    pub(crate) fn dispatch_from(
        &mut self,
        exclude: Option<EndpointId>,
        nettype: NetType,
        ctx: DemuxCtx,
        kind: PktKind,
        pkt: SnipId,
    ) -> usize {
        let receivers: Vec<_> = self
            .netreg
            .lookup(nettype, ctx)
            .into_iter()
            .filter(|e| Some(*e) != exclude)
            .collect();
        if receivers.is_empty() {
            let _ = self.pktbuf.release(pkt);
            return 0;
        }
        if receivers.len() > 1 && self.pktbuf.hold(pkt, receivers.len() as u32 - 1).is_err() {
            return 0;
        }
        for r in &receivers {
            if self.post(*r, kind.msg(pkt)).is_err() {
                let _ = self.pktbuf.release(pkt);
            }
        }
        receivers.len()
    }

    pub fn register_iface(&mut self, info: IfaceInfo) {
        self.ifaces.retain(|i| i.id != info.id);
        self.ifaces.push(info);
    }

    pub fn iface(&self, id: EndpointId) -> Option<IfaceInfo> {
        self.ifaces.iter().find(|i| i.id == id).copied()
    }

    pub fn ifaces(&self) -> &[IfaceInfo] {
        &self.ifaces
    }

    fn drain_irqs(&mut self) {
        for ep in self.irq.take() {
            let Some(slot) = self.slots.get_mut(ep.0 as usize) else {
                continue;
            };
            if slot.isr_pending || !slot.alive {
                continue;
            }
            slot.isr_pending = true;
            let _ = self.post_envelope(ep, Envelope::Event(EVENT_ISR));
        }
    }

    /// Delivers one envelope. Returns false when nothing was runnable.
    pub fn step(&mut self) -> bool {
        self.drain_irqs();
        let Some(ep) = self.ready.pop_front() else {
            return false;
        };
        let idx = ep.0 as usize;
        let slot = &mut self.slots[idx];
        if !slot.alive {
            return true;
        }
        let Some(env) = slot.mailbox.pop_front() else {
            return true;
        };
        match env {
            Envelope::Net(_) => slot.net_pending -= 1,
            Envelope::Event(EVENT_ISR) => slot.isr_pending = false,
            _ => {}
        }
        slot.stats.delivered += 1;
        let Some(mut h) = slot.handler.take() else {
            return true;
        };
        self.delivered += 1;
        let prev = self.meter.enter(h.layer());
        {
            let mut cx = Ctx { node: self, me: ep };
            h.handle(&mut cx, env);
        }
        self.meter.enter(prev);
        let slot = &mut self.slots[idx];
        if slot.alive {
            slot.handler = Some(h);
        }
        true
    }

    fn next_wake(&self) -> Option<VirtualTime> {
        let timer = self.timers.peek().map(|Reverse(t)| t.at);
        let hw = self
            .slots
            .iter()
            .filter_map(|s| s.handler.as_ref()?.hw_deadline())
            .min();
        match (timer, hw) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }

    /// Moves the clock to the next wake-up at or before `limit` and runs
    /// what became due. Returns false if there was none.
    fn advance(&mut self, limit: Option<VirtualTime>) -> bool {
        let Some(t) = self.next_wake() else {
            return false;
        };
        if limit.is_some_and(|l| t > l) {
            return false;
        }
        let now = t.max(self.now());
        self.clock.set(now);
        while let Some(Reverse(top)) = self.timers.peek().copied() {
            if top.at > now {
                break;
            }
            self.timers.pop();
            let _ = self.post_envelope(top.ep, Envelope::Timer(top.token));
        }
        for i in 0..self.slots.len() {
            let due = self.slots[i]
                .handler
                .as_ref()
                .and_then(|h| h.hw_deadline())
                .is_some_and(|d| d <= now);
            if due {
                let mut h = self.slots[i].handler.take().expect("handler");
                let prev = self.meter.enter(h.layer());
                h.hw_advance(now);
                self.meter.enter(prev);
                self.slots[i].handler = Some(h);
            }
        }
        self.drain_irqs();
        true
    }

    /// Runs until no message, timer or hardware activity is left.
    pub fn run_until_idle(&mut self) {
        loop {
            while self.step() {}
            if !self.advance(None) {
                break;
            }
        }
    }

    /// Runs until `pred` holds or virtual time would pass `deadline`; in the
    /// latter case the clock is left at `deadline`.
    pub fn run_until(&mut self, deadline: VirtualTime, mut pred: impl FnMut(&Node) -> bool) -> bool {
        loop {
            if pred(self) {
                return true;
            }
            if self.step() {
                continue;
            }
            if !self.advance(Some(deadline)) {
                if self.now() < deadline {
                    self.clock.set(deadline);
                }
                return pred(self);
            }
        }
    }

    /// Runs everything due within the next `duration` nanoseconds.
    pub fn run_for(&mut self, duration: VirtualTime) {
        let deadline = self.now() + duration;
        self.run_until(deadline, |_| false);
    }
}

/// Handle given to an endpoint while it processes one envelope.
pub struct Ctx<'a> {
    node: &'a mut Node,
    me: EndpointId,
}

impl Ctx<'_> {
    pub fn me(&self) -> EndpointId {
        self.me
    }

    pub fn now(&self) -> VirtualTime {
        self.node.now()
    }

    pub fn pktbuf(&self) -> &PktBuf {
        &self.node.pktbuf
    }

    pub fn netreg(&self) -> &Netreg {
        &self.node.netreg
    }

    pub fn meter(&self) -> &CostMeter {
        &self.node.meter
    }

    pub fn irq_line(&self) -> IrqLine {
        self.node.irq.clone()
    }

    pub fn clock(&self) -> VirtualClock {
        self.node.clock.clone()
    }

    pub fn send(&mut self, to: EndpointId, msg: NetMsg) -> Result<(), NetApiError> {
        self.node.post(to, msg)
    }

    /// Sends a packet message; if it cannot be queued the packet is
    /// released. Returns whether it was queued.
    pub fn send_or_release(&mut self, to: EndpointId, kind: PktKind, pkt: SnipId) -> bool {
        if self.node.post(to, kind.msg(pkt)).is_ok() {
            true
        } else {
            let _ = self.node.pktbuf.release(pkt);
            false
        }
    }

    /// Delivers to every other endpoint registered for `(nettype, ctx)`.
    pub fn dispatch(&mut self, nettype: NetType, ctx: DemuxCtx, kind: PktKind, pkt: SnipId) -> usize {
        let me = self.me;
        self.node.dispatch_from(Some(me), nettype, ctx, kind, pkt)
    }

    pub fn reply(&mut self, to: EndpointId, status: AckStatus, data: Vec<u8>) {
        let _ = self.node.post(to, NetMsg::Ack { status, data });
    }

    /// Arms a one-shot timer; `token` comes back in [`Envelope::Timer`].
    pub fn set_timer(&mut self, delay: VirtualTime, token: u64) {
        let at = self.node.now() + delay;
        self.node.timer_seq += 1;
        let seq = self.node.timer_seq;
        self.node.timers.push(Reverse(TimerEntry {
            at,
            seq,
            ep: self.me,
            token,
        }));
    }

    /// Queues an [`Envelope::Event`] for this endpoint behind the messages
    /// already waiting.
    pub fn signal(&mut self, code: u32) {
        let me = self.me;
        let _ = self.node.post_envelope(me, Envelope::Event(code));
    }

    pub fn iface(&self, id: EndpointId) -> Option<IfaceInfo> {
        self.node.iface(id)
    }

    pub fn ifaces(&self) -> &[IfaceInfo] {
        self.node.ifaces()
    }

    pub fn register_iface(&mut self, info: IfaceInfo) {
        self.node.register_iface(info);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netreg::{NetregEntry, DEMUX_CTX_ALL};

    /// Records what it receives and releases packets.
    struct Sink {
        seen: Vec<Envelope>,
    }

    impl Endpoint for Sink {
        fn layer(&self) -> Layer {
            Layer::Udp
        }

        fn handle(&mut self, cx: &mut Ctx<'_>, env: Envelope) {
            if let Envelope::Net(m) = &env {
                if let Some(p) = m.packet() {
                    cx.pktbuf().release(p).unwrap();
                }
            }
            self.seen.push(env);
        }

        fn as_any(&self) -> &dyn Any {
            self
        }

        fn as_any_mut(&mut self) -> &mut dyn Any {
            self
        }
    }

    fn sink() -> Box<Sink> {
        Box::new(Sink { seen: Vec::new() })
    }

    #[test]
    fn fifo_delivery() {
        let mut n = Node::bare(NodeConfig::default());
        let s = n.spawn("sink", sink());
        for i in 0..3 {
            let p = n.pktbuf().add(None, &[i], NetType::Undef).unwrap();
            n.netapi_send(s, PktKind::Snd, p).unwrap();
        }
        n.run_until_idle();
        let e: &Sink = n.endpoint(s).unwrap();
        assert_eq!(e.seen.len(), 3);
        assert_eq!(n.pktbuf().stats().live_snips, 0);
    }

    #[test]
    fn full_mailbox_rejects_and_caller_keeps_packet() {
        let mut n = Node::bare(NodeConfig::default());
        let s = n.spawn("sink", sink());
        for _ in 0..DEFAULT_MAILBOX {
            let p = n.pktbuf().add(None, &[0], NetType::Undef).unwrap();
            n.netapi_send(s, PktKind::Snd, p).unwrap();
        }
        let p = n.pktbuf().add(None, &[0], NetType::Undef).unwrap();
        assert_eq!(n.netapi_send(s, PktKind::Snd, p), Err(NetApiError::QueueFull(s)));
        assert!(n.pktbuf().is_live(p));
        assert_eq!(n.mailbox_stats(s).dropped, 1);
        n.pktbuf().release(p).unwrap();
        n.run_until_idle();
        assert_eq!(n.pktbuf().stats().live_snips, 0);
    }

    #[test]
    fn dispatch_holds_once_per_extra_receiver() {
        let mut n = Node::bare(NodeConfig::default());
        let a = n.spawn("a", sink());
        let b = n.spawn("b", sink());
        n.netreg()
            .register(NetregEntry::new(NetType::Udp, 9, a))
            .unwrap();
        n.netreg()
            .register(NetregEntry::new(NetType::Udp, DEMUX_CTX_ALL, b))
            .unwrap();
        let p = n.pktbuf().add(None, &[1, 2], NetType::Undef).unwrap();
        assert_eq!(n.netapi_dispatch(NetType::Udp, 9, PktKind::Rcv, p), 2);
        assert_eq!(n.pktbuf().users(p).unwrap(), 2);
        n.run_until_idle();
        assert!(!n.pktbuf().is_live(p));

        let p = n.pktbuf().add(None, &[1], NetType::Undef).unwrap();
        assert_eq!(n.netapi_dispatch(NetType::Ipv6, 0, PktKind::Rcv, p), 0);
        assert!(!n.pktbuf().is_live(p));
    }

    #[test]
    fn send_to_dead_endpoint_fails() {
        let mut n = Node::bare(NodeConfig::default());
        let s = n.spawn("sink", sink());
        n.kill(s);
        let p = n.pktbuf().add(None, &[1], NetType::Undef).unwrap();
        assert_eq!(n.netapi_send(s, PktKind::Snd, p), Err(NetApiError::DeadEndpoint(s)));
        n.pktbuf().release(p).unwrap();
        assert_eq!(
            n.netapi_send(EndpointId(999), PktKind::Snd, p),
            Err(NetApiError::DeadEndpoint(EndpointId(999)))
        );
    }

    #[test]
    fn get_to_unresponsive_endpoint_times_out() {
        let mut n = Node::bare(NodeConfig::default());
        let mb = n.spawn_mailbox("silent", 4);
        let t0 = n.now();
        let r = n.netapi_get(mb, crate::netapi::NetOpt::Channel, 0, 2);
        assert_eq!(r, Err(NetApiError::Timeout));
        assert_eq!(n.now() - t0, DEFAULT_OPTION_TIMEOUT);
    }

    struct Ticker {
        fired: Vec<(u64, VirtualTime)>,
    }

    impl Endpoint for Ticker {
        fn layer(&self) -> Layer {
            Layer::Ipv6
        }

        fn handle(&mut self, cx: &mut Ctx<'_>, env: Envelope) {
            if let Envelope::Timer(t) = env {
                self.fired.push((t, cx.now()));
            }
        }

        fn as_any(&self) -> &dyn Any {
            self
        }

        fn as_any_mut(&mut self) -> &mut dyn Any {
            self
        }
    }

    #[test]
    fn timers_fire_in_time_order() {
        let mut n = Node::bare(NodeConfig::default());
        let t = n.spawn_with("ticker", Ticker { fired: Vec::new() }, |_, cx| {
            cx.set_timer(300, 3);
            cx.set_timer(100, 1);
            cx.set_timer(200, 2);
        });
        n.run_until_idle();
        let e: &Ticker = n.endpoint(t).unwrap();
        assert_eq!(e.fired, vec![(1, 100), (2, 200), (3, 300)]);
    }
}
