//! Layer-2 reflector: every frame sent is received back immediately with
//! source and destination swapped.
//!
//! Broadcast frames come back unchanged, since a broadcast destination
//! cannot become a source address.

use super::ieee802154::{self, Mhr};
use super::{
    DevCore, DeviceEvent, DeviceType, EventCallback, EventMask, NetDev, NetDevError, RxInfo,
    TxStatus,
};
use crate::netapi::NetOpt;

/// Metadata attached to reflected frames.
pub const REFLECTOR_RX_INFO: RxInfo = RxInfo { rssi: 0, lqi: 255 };

pub struct Reflector {
    core: DevCore,
}

impl Reflector {
    pub fn new(addr: u16) -> Reflector {
        Reflector {
            core: DevCore::new(
                DeviceType::Reflector,
                addr,
                EventMask::RX_COMPLETE
                    .union(EventMask::TX_STARTED)
                    .union(EventMask::TX_COMPLETE)
                    .union(EventMask::LINK_UP),
            ),
        }
    }
}

impl NetDev for Reflector {
    fn init(&mut self) -> Result<(), NetDevError> {
        self.core.init()
    }

    fn send(&mut self, frame: &[u8]) -> Result<usize, NetDevError> {
        self.core.check_send(frame)?;
        let mhr = Mhr::parse(frame).map_err(|_| NetDevError::Malformed)?;
        let echo = if mhr.dst == ieee802154::BROADCAST {
            frame.to_vec()
        } else {
            ieee802154::swap_addresses(frame).map_err(|_| NetDevError::Malformed)?
        };
        self.core.note_tx(frame.len());
        self.core.raise(DeviceEvent::TxStarted);
        self.core.raise(DeviceEvent::TxComplete(TxStatus::Ok));
        self.core.push_rx(echo, REFLECTOR_RX_INFO);
        Ok(frame.len())
    }

    fn recv(
        &mut self,
        buf: Option<&mut [u8]>,
        drop: bool,
        info: Option<&mut RxInfo>,
    ) -> Result<usize, NetDevError> {
        self.core.recv(buf, drop, info)
    }

    fn get(&self, opt: NetOpt, value: &mut [u8]) -> Result<usize, NetDevError> {
        self.core.get(opt, value)
    }

    fn set(&mut self, opt: NetOpt, value: &[u8]) -> Result<usize, NetDevError> {
        self.core.set(opt, value)
    }

    fn isr(&mut self, handler: &mut dyn FnMut(DeviceEvent)) {
        self.core.isr(handler)
    }

    fn set_event_callback(&mut self, cb: EventCallback) {
        self.core.set_callback(cb)
    }

    fn device_type(&self) -> DeviceType {
        DeviceType::Reflector
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(dst: u16, payload_len: usize) -> Vec<u8> {
        let mhr = Mhr {
            seq: 1,
            pan: ieee802154::DEFAULT_PAN,
            dst,
            src: 0x0001,
            ack_req: false,
        };
        let payload: Vec<u8> = (0..payload_len as u8).collect();
        ieee802154::build_frame(&mhr, &payload)
    }

    #[test]
    fn echo_swaps_addresses() {
        let mut r = Reflector::new(1);
        r.init().unwrap();
        let f = frame(0x0002, 50 - 11);
        assert_eq!(f.len(), 50);
        r.send(&f).unwrap();
        let mut events = Vec::new();
        r.isr(&mut |e| events.push(e));
        assert_eq!(
            events,
            vec![DeviceEvent::TxComplete(TxStatus::Ok), DeviceEvent::RxComplete]
        );
        let mut buf = [0u8; 127];
        let n = r.recv(Some(&mut buf), false, None).unwrap();
        assert_eq!(n, 50);
        let (h, p) = ieee802154::split(&buf[..n]).unwrap();
        assert_eq!((h.src, h.dst), (0x0002, 0x0001));
        assert_eq!(p, &f[ieee802154::MHR_LEN..48]);
    }

    #[test]
    fn broadcast_is_echoed_unchanged() {
        let mut r = Reflector::new(1);
        r.init().unwrap();
        let f = frame(ieee802154::BROADCAST, 10);
        r.send(&f).unwrap();
        r.isr(&mut |_| {});
        let mut buf = [0u8; 127];
        let n = r.recv(Some(&mut buf), false, None).unwrap();
        assert_eq!(&buf[..n], &f[..]);
    }

    #[test]
    fn send_requires_init_and_bounds() {
        let mut r = Reflector::new(1);
        assert_eq!(r.send(&frame(2, 1)), Err(NetDevError::NotInitialized));
        r.init().unwrap();
        let big = vec![0u8; 128];
        assert_eq!(
            r.send(&big),
            Err(NetDevError::FrameTooLarge { len: 128, max: 127 })
        );
    }

    #[test]
    fn tx_started_precedes_tx_complete() {
        let mut r = Reflector::new(1);
        let mask = EventMask::ALL.0 & !EventMask::LINK_DOWN.0;
        r.set(NetOpt::EventMask, &mask.to_be_bytes()).unwrap();
        r.init().unwrap();
        r.send(&frame(2, 5)).unwrap();
        let mut events = Vec::new();
        r.isr(&mut |e| events.push(e));
        assert_eq!(
            events,
            vec![
                DeviceEvent::LinkUp,
                DeviceEvent::TxStarted,
                DeviceEvent::TxComplete(TxStatus::Ok),
                DeviceEvent::RxComplete
            ]
        );
    }
}
