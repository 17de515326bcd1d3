//! Ideal point-to-point link: a frame sent on one end is received at the
//! other end instantly and without loss.

use std::sync::{Arc, Mutex};

use super::{
    DevCore, DeviceEvent, DeviceType, EventCallback, EventMask, NetDev, NetDevError, RxInfo,
    TxStatus,
};
use crate::netapi::NetOpt;

pub const PIPE_RX_INFO: RxInfo = RxInfo { rssi: -30, lqi: 255 };

pub struct PipeDevice {
    me: Arc<Mutex<DevCore>>,
    peer: Arc<Mutex<DevCore>>,
}

fn core(addr: u16) -> Arc<Mutex<DevCore>> {
    Arc::new(Mutex::new(DevCore::new(
        DeviceType::Pipe,
        addr,
        EventMask::RX_COMPLETE
            .union(EventMask::TX_STARTED)
            .union(EventMask::TX_COMPLETE)
            .union(EventMask::LINK_UP)
            .union(EventMask::LINK_DOWN),
    )))
}

impl PipeDevice {
    /// Two connected ends with the given short addresses.
    pub fn pair(addr_a: u16, addr_b: u16) -> (PipeDevice, PipeDevice) {
        let a = core(addr_a);
        let b = core(addr_b);
        (
            PipeDevice {
                me: a.clone(),
                peer: b.clone(),
            },
            PipeDevice { me: b, peer: a },
        )
    }
}

impl NetDev for PipeDevice {
    fn init(&mut self) -> Result<(), NetDevError> {
        self.me.lock().expect("pipe").init()
    }

    fn send(&mut self, frame: &[u8]) -> Result<usize, NetDevError> {
        {
            let mut me = self.me.lock().expect("pipe");
            me.check_send(frame)?;
            me.note_tx(frame.len());
            me.raise(DeviceEvent::TxStarted);
            me.raise(DeviceEvent::TxComplete(TxStatus::Ok));
        }
        self.peer
            .lock()
            .expect("pipe")
            .push_rx(frame.to_vec(), PIPE_RX_INFO);
        Ok(frame.len())
    }

    fn recv(
        &mut self,
        buf: Option<&mut [u8]>,
        drop: bool,
        info: Option<&mut RxInfo>,
    ) -> Result<usize, NetDevError> {
        self.me.lock().expect("pipe").recv(buf, drop, info)
    }

    fn get(&self, opt: NetOpt, value: &mut [u8]) -> Result<usize, NetDevError> {
        self.me.lock().expect("pipe").get(opt, value)
    }

    fn set(&mut self, opt: NetOpt, value: &[u8]) -> Result<usize, NetDevError> {
        self.me.lock().expect("pipe").set(opt, value)
    }

    fn isr(&mut self, handler: &mut dyn FnMut(DeviceEvent)) {
        self.me.lock().expect("pipe").isr(handler)
    }

    fn set_event_callback(&mut self, cb: EventCallback) {
        self.me.lock().expect("pipe").set_callback(cb)
    }

    fn device_type(&self) -> DeviceType {
        DeviceType::Pipe
    }
}
