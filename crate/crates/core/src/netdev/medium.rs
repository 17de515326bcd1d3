//! Simulated IEEE 802.15.4 radio on a discrete-event timeline.
//!
//! The device transmits one frame at a time. A transmission starts once the
//! interframe spacing of the previous frame has elapsed (plus a random
//! backoff and a CCA when CSMA is on), occupies the channel for the PHY
//! airtime of the frame, and may wait for an acknowledgment. The peer is an
//! always-listening sink; frames for this device can be injected to exercise
//! the receive path.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::{Arc, Mutex};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::ieee802154::{self, Mhr};
use super::{
    DevCore, DeviceEvent, DeviceType, EventCallback, EventMask, NetDev, NetDevError, RxInfo,
    TxStatus,
};
use crate::netapi::NetOpt;
use crate::sched::VirtualClock;
use crate::types::{VirtualTime, NS_PER_SEC};

#[derive(Debug, Clone, PartialEq)]
pub struct MediumParams {
    pub symbol_rate: u32,
    pub bits_per_symbol: u32,
    /// Preamble, SFD and PHR bytes in front of every PSDU.
    pub phy_overhead: usize,
    pub mhr_bytes: usize,
    pub fcs_bytes: usize,
    pub sifs_symbols: u32,
    pub lifs_symbols: u32,
    /// Largest MPDU followed by SIFS instead of LIFS.
    pub sifs_max_frame: usize,
    pub ack_enabled: bool,
    pub csma_enabled: bool,
    pub loss_rate: f64,
    pub ack_turnaround_symbols: u32,
    pub ack_bytes: usize,
    pub ack_wait_symbols: u32,
    pub max_retries: u32,
    pub unit_backoff_symbols: u32,
    pub min_be: u32,
    pub max_be: u32,
    pub cca_symbols: u32,
    pub max_frame: usize,
    pub seed: u64,
}

impl Default for MediumParams {
    fn default() -> Self {
        MediumParams {
            symbol_rate: 62_500,
            bits_per_symbol: 4,
            phy_overhead: 6,
            mhr_bytes: ieee802154::MHR_LEN,
            fcs_bytes: ieee802154::FCS_LEN,
            sifs_symbols: 12,
            lifs_symbols: 40,
            sifs_max_frame: 18,
            ack_enabled: false,
            csma_enabled: false,
            loss_rate: 0.0,
            ack_turnaround_symbols: 12,
            ack_bytes: ieee802154::ACK_LEN,
            ack_wait_symbols: 54,
            max_retries: 3,
            unit_backoff_symbols: 20,
            min_be: 3,
            max_be: 5,
            cca_symbols: 8,
            max_frame: ieee802154::MAX_PSDU,
            seed: 1,
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: expected key=value")]
    Syntax { line: usize },
    #[error("line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: bad value for {key}: {value:?}")]
    Value {
        line: usize,
        key: String,
        value: String,
    },
    #[error("invalid medium parameters: {0}")]
    Invalid(String),
}

fn parse_bool(v: &str) -> Option<bool> {
    match v.to_ascii_lowercase().as_str() {
        "1" | "true" | "on" | "yes" => Some(true),
        "0" | "false" | "off" | "no" => Some(false),
        _ => None,
    }
}

impl MediumParams {
    /// Parses `key = value` lines on top of the defaults. `#` starts a
    /// comment.
    pub fn from_config_str(text: &str) -> Result<MediumParams, ConfigError> {
        let mut p = MediumParams::default();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or(ConfigError::Syntax { line: line_no })?;
            let key = key.trim();
            let value = value.trim();
            let bad = || ConfigError::Value {
                line: line_no,
                key: key.to_string(),
                value: value.to_string(),
            };
            macro_rules! num {
                ($field:expr) => {
                    $field = value.parse().map_err(|_| bad())?
                };
            }
            match key {
                "symbol_rate" => num!(p.symbol_rate),
                "bits_per_symbol" => num!(p.bits_per_symbol),
                "phy_overhead" => num!(p.phy_overhead),
                "mhr_bytes" => num!(p.mhr_bytes),
                "fcs_bytes" => num!(p.fcs_bytes),
                "sifs_symbols" => num!(p.sifs_symbols),
                "lifs_symbols" => num!(p.lifs_symbols),
                "sifs_max_frame" => num!(p.sifs_max_frame),
                "ack_enabled" => p.ack_enabled = parse_bool(value).ok_or_else(bad)?,
                "csma_enabled" => p.csma_enabled = parse_bool(value).ok_or_else(bad)?,
                "loss_rate" => num!(p.loss_rate),
                "ack_turnaround_symbols" => num!(p.ack_turnaround_symbols),
                "ack_bytes" => num!(p.ack_bytes),
                "ack_wait_symbols" => num!(p.ack_wait_symbols),
                "max_retries" => num!(p.max_retries),
                "unit_backoff_symbols" => num!(p.unit_backoff_symbols),
                "min_be" => num!(p.min_be),
                "max_be" => num!(p.max_be),
                "cca_symbols" => num!(p.cca_symbols),
                "max_frame" => num!(p.max_frame),
                "seed" => num!(p.seed),
                _ => {
                    return Err(ConfigError::UnknownKey {
                        line: line_no,
                        key: key.to_string(),
                    })
                }
            }
        }
        p.validate()?;
        Ok(p)
    }

    pub fn from_file(path: &Path) -> Result<MediumParams, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        MediumParams::from_config_str(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if self.symbol_rate == 0 || self.bits_per_symbol == 0 || 8 % self.bits_per_symbol != 0 {
            return bad("symbol_rate must be positive and bits_per_symbol must divide 8");
        }
        if self.sifs_symbols == 0 || self.lifs_symbols <= self.sifs_symbols {
            return bad("need 0 < sifs_symbols < lifs_symbols");
        }
        if self.phy_overhead == 0 || self.mhr_bytes == 0 || self.fcs_bytes == 0 {
            return bad("header sizes must be positive");
        }
        if !(0.0..=1.0).contains(&self.loss_rate) {
            return bad("loss_rate must lie in [0, 1]");
        }
        if self.min_be > self.max_be || self.max_be > 15 {
            return bad("need min_be <= max_be <= 15");
        }
        if self.max_frame <= self.mhr_bytes + self.fcs_bytes {
            return bad("max_frame leaves no room for payload");
        }
        Ok(())
    }

    pub fn symbols_per_byte(&self) -> u64 {
        (8 / self.bits_per_symbol) as u64
    }

    pub fn symbols_to_ns(&self, symbols: u64) -> VirtualTime {
        symbols * NS_PER_SEC / self.symbol_rate as u64
    }

    /// Symbols a PSDU of `psdu_len` bytes occupies the channel, PHY header
    /// included.
    pub fn frame_symbols(&self, psdu_len: usize) -> u64 {
        (self.phy_overhead + psdu_len) as u64 * self.symbols_per_byte()
    }

    pub fn ifs_symbols(&self, psdu_len: usize) -> u64 {
        if psdu_len <= self.sifs_max_frame {
            self.sifs_symbols as u64
        } else {
            self.lifs_symbols as u64
        }
    }

    /// Largest payload an upper layer can put into one frame.
    pub fn max_payload(&self) -> usize {
        self.max_frame - self.mhr_bytes - self.fcs_bytes
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MediumStats {
    pub tx_attempts: u64,
    pub frames_delivered: u64,
    pub bytes_delivered: u64,
    pub frames_lost: u64,
    pub acks_received: u64,
    pub no_ack: u64,
    pub busy_rejections: u64,
    /// Instant at which the channel is free for the next transmission.
    pub ready_at: VirtualTime,
    pub first_tx_start: Option<VirtualTime>,
    pub captured: Vec<Vec<u8>>,
}

/// Read access to a medium's counters from outside the node.
#[derive(Debug, Clone, Default)]
pub struct MediumProbe {
    stats: Arc<Mutex<MediumStats>>,
    capture: Arc<Mutex<bool>>,
}

impl MediumProbe {
    pub fn stats(&self) -> MediumStats {
        self.stats.lock().expect("probe").clone()
    }

    /// Keep a copy of every frame the peer receives.
    pub fn set_capture(&self, on: bool) {
        *self.capture.lock().expect("probe") = on;
    }

    pub fn take_captured(&self) -> Vec<Vec<u8>> {
        std::mem::take(&mut self.stats.lock().expect("probe").captured)
    }

    pub fn reset(&self) {
        let mut s = self.stats.lock().expect("probe");
        *s = MediumStats {
            ready_at: s.ready_at,
            ..MediumStats::default()
        };
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Step {
    TxStart,
    TxEnd,
    AckReceived,
    AckTimeout,
    RxEnd(Vec<u8>),
}

struct TxJob {
    frame: Vec<u8>,
    attempts: u32,
    expect_ack: bool,
}

pub struct MediumDevice {
    core: DevCore,
    params: MediumParams,
    clock: VirtualClock,
    rng: ChaCha8Rng,
    meta_rng: ChaCha8Rng,
    tx: Option<TxJob>,
    ifs_ready: VirtualTime,
    timeline: BTreeMap<(VirtualTime, u64), Step>,
    seq: u64,
    probe: MediumProbe,
}

impl MediumDevice {
    pub fn new(addr: u16, params: MediumParams) -> MediumDevice {
        let mut core = DevCore::new(DeviceType::Medium, addr, EventMask::ALL);
        core.max_frame = params.max_frame;
        MediumDevice {
            core,
            rng: ChaCha8Rng::seed_from_u64(params.seed),
            meta_rng: ChaCha8Rng::seed_from_u64(params.seed ^ 0x005e_ed0f_11f0),
            params,
            clock: VirtualClock::default(),
            tx: None,
            ifs_ready: 0,
            timeline: BTreeMap::new(),
            seq: 0,
            probe: MediumProbe::default(),
        }
    }

    pub fn params(&self) -> &MediumParams {
        &self.params
    }

    pub fn probe(&self) -> MediumProbe {
        self.probe.clone()
    }

    fn now(&self) -> VirtualTime {
        self.clock.now()
    }

    fn schedule(&mut self, at: VirtualTime, step: Step) {
        self.seq += 1;
        self.timeline.insert((at, self.seq), step);
    }

    fn sym(&self, symbols: u64) -> VirtualTime {
        self.params.symbols_to_ns(symbols)
    }

    fn schedule_attempt(&mut self, earliest: VirtualTime) {
        let mut t = earliest.max(self.ifs_ready);
        if self.params.csma_enabled {
            let slots = self.rng.gen_range(0..(1u64 << self.params.min_be));
            let backoff = slots * self.params.unit_backoff_symbols as u64 + self.params.cca_symbols as u64;
            t += self.sym(backoff);
        }
        self.schedule(t, Step::TxStart);
    }

    fn complete(&mut self, t: VirtualTime, status: TxStatus) {
        let job = self.tx.take().expect("transmission in progress");
        self.ifs_ready = t + self.sym(self.params.ifs_symbols(job.frame.len()));
        {
            let mut s = self.probe.stats.lock().expect("probe");
            s.ready_at = self.ifs_ready;
            if status == TxStatus::NoAck {
                s.no_ack += 1;
            }
        }
        self.core.raise(DeviceEvent::TxComplete(status));
    }

    /// Deterministic link metadata derived from the loss model.
    fn rx_info(&mut self) -> RxInfo {
        let jitter: i16 = self.meta_rng.gen_range(-2..=2);
        let loss = self.params.loss_rate;
        let rssi = -60 - (30.0 * loss).round() as i16 + jitter;
        let lqi = (255.0 * (1.0 - loss)).round() as i16 - 3 * jitter.abs();
        RxInfo {
            rssi,
            lqi: lqi.clamp(0, 255) as u8,
        }
    }

    fn run_step(&mut self, t: VirtualTime, step: Step) {
        match step {
            Step::TxStart => {
                let len = self.tx.as_ref().expect("job").frame.len();
                {
                    let mut s = self.probe.stats.lock().expect("probe");
                    s.tx_attempts += 1;
                    s.first_tx_start.get_or_insert(t);
                }
                self.core.raise(DeviceEvent::TxStarted);
                let end = t + self.sym(self.params.frame_symbols(len));
                self.schedule(end, Step::TxEnd);
            }
            Step::TxEnd => {
                let lost = self.params.loss_rate > 0.0 && self.rng.gen::<f64>() < self.params.loss_rate;
                let (len, expect_ack) = {
                    let job = self.tx.as_ref().expect("job");
                    (job.frame.len(), job.expect_ack)
                };
                self.core.note_tx(len);
                {
                    let capture = *self.probe.capture.lock().expect("probe");
                    let mut s = self.probe.stats.lock().expect("probe");
                    if lost {
                        s.frames_lost += 1;
                    } else {
                        s.frames_delivered += 1;
                        s.bytes_delivered += len as u64;
                        if capture {
                            s.captured.push(self.tx.as_ref().expect("job").frame.clone());
                        }
                    }
                }
                if !expect_ack {
                    self.complete(t, TxStatus::Ok);
                } else if lost {
                    let wait = self.sym(self.params.ack_wait_symbols as u64);
                    self.schedule(t + wait, Step::AckTimeout);
                } else {
                    let ack = self.params.ack_turnaround_symbols as u64
                        + self.params.frame_symbols(self.params.ack_bytes);
                    let at = t + self.sym(ack);
                    self.schedule(at, Step::AckReceived);
                }
            }
            Step::AckReceived => {
                self.probe.stats.lock().expect("probe").acks_received += 1;
                self.complete(t, TxStatus::Ok);
            }
            Step::AckTimeout => {
                let job = self.tx.as_mut().expect("job");
                job.attempts += 1;
                if job.attempts > self.params.max_retries {
                    self.complete(t, TxStatus::NoAck);
                } else {
                    self.schedule_attempt(t);
                }
            }
            Step::RxEnd(frame) => {
                let info = self.rx_info();
                self.core.push_rx(frame, info);
            }
        }
    }

    /// Puts a frame addressed to this device on the air now; it is
    /// received once its airtime has passed.
    pub fn inject_rx(&mut self, frame: Vec<u8>) {
        let at = self.now() + self.sym(self.params.frame_symbols(frame.len()));
        self.schedule(at, Step::RxEnd(frame));
    }
}

impl NetDev for MediumDevice {
    fn init(&mut self) -> Result<(), NetDevError> {
        self.core.init()
    }

    fn send(&mut self, frame: &[u8]) -> Result<usize, NetDevError> {
        self.core.check_send(frame)?;
        if self.tx.is_some() {
            self.probe.stats.lock().expect("probe").busy_rejections += 1;
            return Err(NetDevError::DeviceBusy);
        }
        let broadcast = Mhr::parse(frame).is_ok_and(|m| m.dst == ieee802154::BROADCAST);
        self.tx = Some(TxJob {
            frame: frame.to_vec(),
            attempts: 0,
            expect_ack: self.params.ack_enabled && !broadcast,
        });
        let now = self.now();
        self.schedule_attempt(now);
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
        DeviceType::Medium
    }

    fn set_clock(&mut self, clock: VirtualClock) {
        self.clock = clock;
    }

    fn next_deadline(&self) -> Option<VirtualTime> {
        self.timeline.keys().next().map(|(t, _)| *t)
    }

    fn advance(&mut self, now: VirtualTime) {
        while let Some(entry) = self.timeline.first_entry() {
            let (t, _) = *entry.key();
            if t > now {
                break;
            }
            let step = entry.remove();
            self.run_step(t, step);
        }
    }
}
