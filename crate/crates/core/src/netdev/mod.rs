//! Network device abstraction.
//!
//! A device exchanges complete link-layer frames and exposes six operations:
//! `init`, `send`, `recv`, `get`, `set` and `isr`. The event callback fires in
//! interrupt-like context and only signals the owning endpoint; the concrete
//! events are fetched later through `isr`, from endpoint context.
//!
//! Simulated devices additionally expose their next hardware deadline so the
//! scheduler can move the virtual clock to it.

use std::collections::VecDeque;

use thiserror::Error;

use crate::netapi::NetOpt;
use crate::sched::VirtualClock;
use crate::types::VirtualTime;

pub mod ieee802154;
pub mod medium;
pub mod pipe;
pub mod reflector;

pub use medium::{MediumDevice, MediumParams, MediumProbe, MediumStats};
pub use pipe::PipeDevice;
pub use reflector::Reflector;

/// Interrupt-context notification: record, signal, return.
pub type EventCallback = Box<dyn FnMut() + Send>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventCategory {
    Rx,
    Tx,
    Link,
    System,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TxStatus {
    Ok,
    NoAck,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeviceEvent {
    RxComplete,
    TxStarted,
    TxComplete(TxStatus),
    LinkUp,
    LinkDown,
}

impl DeviceEvent {
    pub fn category(self) -> EventCategory {
        match self {
            DeviceEvent::RxComplete => EventCategory::Rx,
            DeviceEvent::TxStarted | DeviceEvent::TxComplete(_) => EventCategory::Tx,
            DeviceEvent::LinkUp | DeviceEvent::LinkDown => EventCategory::Link,
        }
    }

    pub fn mask_bit(self) -> EventMask {
        match self {
            DeviceEvent::RxComplete => EventMask::RX_COMPLETE,
            DeviceEvent::TxStarted => EventMask::TX_STARTED,
            DeviceEvent::TxComplete(_) => EventMask::TX_COMPLETE,
            DeviceEvent::LinkUp => EventMask::LINK_UP,
            DeviceEvent::LinkDown => EventMask::LINK_DOWN,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EventMask(pub u16);

impl EventMask {
    pub const RX_COMPLETE: EventMask = EventMask(1 << 0);
    pub const TX_STARTED: EventMask = EventMask(1 << 1);
    pub const TX_COMPLETE: EventMask = EventMask(1 << 2);
    pub const LINK_UP: EventMask = EventMask(1 << 3);
    pub const LINK_DOWN: EventMask = EventMask(1 << 4);
    pub const ALL: EventMask = EventMask(0x1f);

    pub fn contains(self, other: EventMask) -> bool {
        self.0 & other.0 == other.0
    }

    pub fn union(self, other: EventMask) -> EventMask {
        EventMask(self.0 | other.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeviceType {
    Reflector = 1,
    Pipe = 2,
    Medium = 3,
}

impl DeviceType {
    pub fn from_u8(v: u8) -> Option<DeviceType> {
        match v {
            1 => Some(DeviceType::Reflector),
            2 => Some(DeviceType::Pipe),
            3 => Some(DeviceType::Medium),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeviceState {
    Off = 0,
    Sleep = 1,
    Idle = 2,
}

impl DeviceState {
    pub fn from_u8(v: u8) -> Option<DeviceState> {
        match v {
            0 => Some(DeviceState::Off),
            1 => Some(DeviceState::Sleep),
            2 => Some(DeviceState::Idle),
            _ => None,
        }
    }
}

/// Auxiliary reception metadata.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RxInfo {
    pub rssi: i16,
    pub lqi: u8,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NetDevError {
    #[error("device not initialized")]
    NotInitialized,
    #[error("device initialization failed")]
    InitFailure,
    #[error("frame of {len} bytes exceeds the {max} byte limit")]
    FrameTooLarge { len: usize, max: usize },
    #[error("device busy")]
    DeviceBusy,
    #[error("no pending frame")]
    NoPendingFrame,
    #[error("buffer too small, frame of {needed} bytes dropped")]
    BufferTooSmall { needed: usize },
    #[error("option not supported")]
    Unsupported,
    #[error("invalid option value")]
    InvalidValue,
    #[error("value buffer too small")]
    Overflow,
    #[error("malformed frame")]
    Malformed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DeviceStats {
    pub tx_frames: u32,
    pub rx_frames: u32,
    pub tx_bytes: u32,
    pub rx_bytes: u32,
    /// Frames lost because the receive queue was full.
    pub rx_overflow: u32,
}

pub trait NetDev: Send {
    fn init(&mut self) -> Result<(), NetDevError>;

    /// Hands a complete frame to the device; returns before the frame is on
    /// air.
    fn send(&mut self, frame: &[u8]) -> Result<usize, NetDevError>;

    /// Without buffer and `drop == false`: size of the pending frame. With a
    /// buffer: copies the frame, removes it and returns its length. With
    /// `drop == true`: discards the pending frame.
    fn recv(
        &mut self,
        buf: Option<&mut [u8]>,
        drop: bool,
        info: Option<&mut RxInfo>,
    ) -> Result<usize, NetDevError>;

    fn get(&self, opt: NetOpt, value: &mut [u8]) -> Result<usize, NetDevError>;

    fn set(&mut self, opt: NetOpt, value: &[u8]) -> Result<usize, NetDevError>;

    /// Delivers pending events to `handler` in arrival order.
    fn isr(&mut self, handler: &mut dyn FnMut(DeviceEvent));

    fn set_event_callback(&mut self, cb: EventCallback);

    fn device_type(&self) -> DeviceType;

    /// Gives a timed device access to the node's clock.
    fn set_clock(&mut self, _clock: VirtualClock) {}

    fn next_deadline(&self) -> Option<VirtualTime> {
        None
    }

    fn advance(&mut self, _now: VirtualTime) {}
}

struct RxFrame {
    data: Vec<u8>,
    info: RxInfo,
    announced: bool,
}

/// State shared by the simulated devices: initialization guard, event
/// queue and mask, receive queue, statistics and common options.
pub(crate) struct DevCore {
    initialized: bool,
    supported: EventMask,
    enabled: EventMask,
    pending: VecDeque<DeviceEvent>,
    callback: Option<EventCallback>,
    rx: VecDeque<RxFrame>,
    rx_capacity: usize,
    pub stats: DeviceStats,
    pub addr: u16,
    pub channel: u16,
    pub state: DeviceState,
    pub max_frame: usize,
    pub device_type: DeviceType,
}

pub(crate) const DEFAULT_RX_QUEUE: usize = 16;

impl DevCore {
    pub fn new(device_type: DeviceType, addr: u16, supported: EventMask) -> DevCore {
        DevCore {
            initialized: false,
            supported,
            enabled: EventMask::RX_COMPLETE.union(EventMask::TX_COMPLETE),
            pending: VecDeque::new(),
            callback: None,
            rx: VecDeque::new(),
            rx_capacity: DEFAULT_RX_QUEUE,
            stats: DeviceStats::default(),
            addr,
            channel: 26,
            state: DeviceState::Idle,
            max_frame: ieee802154::MAX_PSDU,
            device_type,
        }
    }

    pub fn init(&mut self) -> Result<(), NetDevError> {
        if self.initialized {
            return Err(NetDevError::InitFailure);
        }
        self.initialized = true;
        self.raise(DeviceEvent::LinkUp);
        Ok(())
    }

    pub fn check_send(&self, frame: &[u8]) -> Result<(), NetDevError> {
        if !self.initialized {
            return Err(NetDevError::NotInitialized);
        }
        if frame.len() > self.max_frame {
            return Err(NetDevError::FrameTooLarge {
                len: frame.len(),
                max: self.max_frame,
            });
        }
        if self.state != DeviceState::Idle {
            return Err(NetDevError::DeviceBusy);
        }
        Ok(())
    }

    fn wants(&self, ev: DeviceEvent) -> bool {
        let bit = ev.mask_bit();
        self.initialized && self.supported.contains(bit) && self.enabled.contains(bit)
    }

    pub fn raise(&mut self, ev: DeviceEvent) {
        if !self.wants(ev) {
            return;
        }
        self.pending.push_back(ev);
        if let Some(cb) = self.callback.as_mut() {
            cb();
        }
    }

    pub fn note_tx(&mut self, len: usize) {
        self.stats.tx_frames += 1;
        self.stats.tx_bytes += len as u32;
    }

    /// Queues a received frame; frames become readable once their
    /// `RxComplete` event went through `isr`.
    pub fn push_rx(&mut self, data: Vec<u8>, info: RxInfo) {
        if !self.initialized || self.state == DeviceState::Off {
            return;
        }
        if self.rx.len() >= self.rx_capacity {
            self.stats.rx_overflow += 1;
            return;
        }
        let announced = !self.wants(DeviceEvent::RxComplete);
        self.rx.push_back(RxFrame {
            data,
            info,
            announced,
        });
        self.raise(DeviceEvent::RxComplete);
    }

    pub fn isr(&mut self, handler: &mut dyn FnMut(DeviceEvent)) {
        while let Some(ev) = self.pending.pop_front() {
            if ev == DeviceEvent::RxComplete {
                if let Some(f) = self.rx.iter_mut().find(|f| !f.announced) {
                    f.announced = true;
                }
            }
            handler(ev);
        }
    }

    pub fn set_callback(&mut self, cb: EventCallback) {
        self.callback = Some(cb);
    }

    pub fn recv(
        &mut self,
        buf: Option<&mut [u8]>,
        drop: bool,
        info: Option<&mut RxInfo>,
    ) -> Result<usize, NetDevError> {
        let ready = self.rx.front().is_some_and(|f| f.announced);
        if !ready {
            return Err(NetDevError::NoPendingFrame);
        }
        let len = self.rx.front().expect("checked").data.len();
        match buf {
            None if !drop => Ok(len),
            None => {
                self.rx.pop_front();
                Ok(len)
            }
            Some(buf) => {
                let f = self.rx.pop_front().expect("checked");
                if buf.len() < len {
                    return Err(NetDevError::BufferTooSmall { needed: len });
                }
                buf[..len].copy_from_slice(&f.data);
                if let Some(i) = info {
                    *i = f.info;
                }
                self.stats.rx_frames += 1;
                self.stats.rx_bytes += len as u32;
                Ok(len)
            }
        }
    }

    pub fn get(&self, opt: NetOpt, value: &mut [u8]) -> Result<usize, NetDevError> {
        let mut stats = [0u8; 16];
        let bytes: &[u8] = match opt {
            NetOpt::Address => &self.addr.to_be_bytes(),
            NetOpt::AddrLen => &2u16.to_be_bytes(),
            NetOpt::Channel => &self.channel.to_be_bytes(),
            NetOpt::State => &[self.state as u8],
            NetOpt::MaxPduSize => {
                &((self.max_frame - ieee802154::MHR_LEN - ieee802154::FCS_LEN) as u16).to_be_bytes()
            }
            NetOpt::DeviceType => &[self.device_type as u8],
            NetOpt::Stats => {
                let s = self.stats;
                for (i, v) in [s.tx_frames, s.rx_frames, s.tx_bytes, s.rx_bytes]
                    .iter()
                    .enumerate()
                {
                    stats[i * 4..i * 4 + 4].copy_from_slice(&v.to_be_bytes());
                }
                &stats
            }
            NetOpt::EventMask => &self.enabled.0.to_be_bytes(),
            _ => return Err(NetDevError::Unsupported),
        };
        if value.len() < bytes.len() {
            return Err(NetDevError::Overflow);
        }
        value[..bytes.len()].copy_from_slice(bytes);
        Ok(bytes.len())
    }

    pub fn set(&mut self, opt: NetOpt, value: &[u8]) -> Result<usize, NetDevError> {
        let u16_value = || -> Result<u16, NetDevError> {
            <[u8; 2]>::try_from(value)
                .map(u16::from_be_bytes)
                .map_err(|_| NetDevError::InvalidValue)
        };
        match opt {
            NetOpt::Address => {
                let a = u16_value()?;
                if a == ieee802154::BROADCAST {
                    return Err(NetDevError::InvalidValue);
                }
                self.addr = a;
            }
            NetOpt::Channel => {
                let c = u16_value()?;
                if !(11..=26).contains(&c) {
                    return Err(NetDevError::InvalidValue);
                }
                self.channel = c;
            }
            NetOpt::State => {
                let [v] = value else {
                    return Err(NetDevError::InvalidValue);
                };
                let s = DeviceState::from_u8(*v).ok_or(NetDevError::InvalidValue)?;
                let was = self.state;
                self.state = s;
                if was != DeviceState::Off && s == DeviceState::Off {
                    self.raise(DeviceEvent::LinkDown);
                } else if was == DeviceState::Off && s != DeviceState::Off {
                    self.raise(DeviceEvent::LinkUp);
                }
            }
            NetOpt::EventMask => {
                let m = EventMask(u16_value()?);
                if !self.supported.contains(m) {
                    return Err(NetDevError::InvalidValue);
                }
                self.enabled = m;
            }
            _ => return Err(NetDevError::Unsupported),
        }
        Ok(value.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    fn counting_core() -> (DevCore, Arc<AtomicUsize>) {
        let mut c = DevCore::new(DeviceType::Pipe, 1, EventMask::ALL);
        let n = Arc::new(AtomicUsize::new(0));
        let n2 = n.clone();
        c.set_callback(Box::new(move || {
            n2.fetch_add(1, Ordering::SeqCst);
        }));
        (c, n)
    }

    #[test]
    fn no_events_before_init() {
        let (mut c, n) = counting_core();
        c.raise(DeviceEvent::TxComplete(TxStatus::Ok));
        c.push_rx(vec![1, 2, 3], RxInfo::default());
        assert_eq!(n.load(Ordering::SeqCst), 0);
        let mut got = Vec::new();
        c.isr(&mut |e| got.push(e));
        assert!(got.is_empty());
        c.init().unwrap();
        assert_eq!(c.init(), Err(NetDevError::InitFailure));
    }

    #[test]
    fn recv_modes() {
        let (mut c, _) = counting_core();
        c.init().unwrap();
        c.push_rx(vec![9; 20], RxInfo { rssi: -50, lqi: 200 });
        assert_eq!(c.recv(None, false, None), Err(NetDevError::NoPendingFrame));
        c.isr(&mut |_| {});
        assert_eq!(c.recv(None, false, None), Ok(20));
        let mut buf = [0u8; 32];
        let mut info = RxInfo::default();
        assert_eq!(c.recv(Some(&mut buf), false, Some(&mut info)), Ok(20));
        assert_eq!(info.lqi, 200);
        assert_eq!(c.recv(None, false, None), Err(NetDevError::NoPendingFrame));

        c.push_rx(vec![1; 10], RxInfo::default());
        c.isr(&mut |_| {});
        assert_eq!(c.recv(None, true, None), Ok(10));
        assert_eq!(c.recv(None, false, None), Err(NetDevError::NoPendingFrame));

        c.push_rx(vec![1; 10], RxInfo::default());
        c.isr(&mut |_| {});
        let mut small = [0u8; 4];
        assert_eq!(
            c.recv(Some(&mut small), false, None),
            Err(NetDevError::BufferTooSmall { needed: 10 })
        );
        assert_eq!(c.recv(None, false, None), Err(NetDevError::NoPendingFrame));
    }

    #[test]
    fn isr_drains_in_order() {
        let (mut c, n) = counting_core();
        c.set(NetOpt::EventMask, &EventMask::ALL.0.to_be_bytes()).unwrap();
        c.init().unwrap();
        c.raise(DeviceEvent::TxStarted);
        c.raise(DeviceEvent::TxComplete(TxStatus::Ok));
        c.push_rx(vec![0; 3], RxInfo::default());
        assert_eq!(n.load(Ordering::SeqCst), 4);
        let mut got = Vec::new();
        c.isr(&mut |e| got.push(e));
        assert_eq!(
            got,
            vec![
                DeviceEvent::LinkUp,
                DeviceEvent::TxStarted,
                DeviceEvent::TxComplete(TxStatus::Ok),
                DeviceEvent::RxComplete
            ]
        );
        got.clear();
        c.isr(&mut |e| got.push(e));
        assert!(got.is_empty());
    }

    #[test]
    fn option_round_trip() {
        let (mut c, _) = counting_core();
        c.set(NetOpt::Address, &[0x12, 0x34]).unwrap();
        let mut v = [0u8; 8];
        assert_eq!(c.get(NetOpt::Address, &mut v), Ok(2));
        assert_eq!(&v[..2], &[0x12, 0x34]);
        c.set(NetOpt::Channel, &15u16.to_be_bytes()).unwrap();
        assert_eq!(c.get(NetOpt::Channel, &mut v), Ok(2));
        assert_eq!(&v[..2], &15u16.to_be_bytes());
        assert_eq!(c.set(NetOpt::Channel, &[0, 5]), Err(NetDevError::InvalidValue));
        assert_eq!(c.get(NetOpt::MaxPduSize, &mut v), Ok(2));
        assert_eq!(u16::from_be_bytes([v[0], v[1]]), 116);
        assert_eq!(c.get(NetOpt::Stats, &mut [0u8; 4]), Err(NetDevError::Overflow));
        assert_eq!(c.get(NetOpt::HopLimit, &mut v), Err(NetDevError::Unsupported));
    }
}
