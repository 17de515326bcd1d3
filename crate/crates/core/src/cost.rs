//! Deterministic work accounting.
//!
//! Every byte a layer reads or writes and every message it posts is charged
//! to the layer that is currently executing. The benchmark harness derives
//! per-layer and cumulative costs from these counters instead of wall-clock
//! time, which makes results reproducible bit for bit.

use std::sync::atomic::{AtomicU64, AtomicU8, Ordering};

/// Weight of one posted message relative to one touched byte.
pub const MESSAGE_WEIGHT: u64 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Layer {
    /// Code outside the stack: tests and the benchmark driver.
    App = 0,
    Sock = 1,
    Udp = 2,
    Ipv6 = 3,
    Sixlowpan = 4,
    /// Interface glue and the device driver.
    L2 = 5,
}

impl Layer {
    pub const ALL: [Layer; 6] = [
        Layer::App,
        Layer::Sock,
        Layer::Udp,
        Layer::Ipv6,
        Layer::Sixlowpan,
        Layer::L2,
    ];

    fn from_u8(v: u8) -> Layer {
        Layer::ALL[v as usize]
    }

    pub fn name(self) -> &'static str {
        match self {
            Layer::App => "app",
            Layer::Sock => "sock",
            Layer::Udp => "udp",
            Layer::Ipv6 => "ipv6",
            Layer::Sixlowpan => "sixlo",
            Layer::L2 => "l2",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LayerCost {
    pub bytes: u64,
    pub messages: u64,
}

impl LayerCost {
    pub fn ops(&self) -> u64 {
        self.bytes + MESSAGE_WEIGHT * self.messages
    }
}

/// Snapshot of all counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CostSnapshot {
    pub per_layer: [LayerCost; 6],
}

impl CostSnapshot {
    pub fn layer(&self, layer: Layer) -> LayerCost {
        self.per_layer[layer as usize]
    }

    /// Total stack work, excluding whatever the application itself did.
    pub fn stack_ops(&self) -> u64 {
        Layer::ALL
            .iter()
            .filter(|l| **l != Layer::App)
            .map(|l| self.layer(*l).ops())
            .sum()
    }

    pub fn since(&self, earlier: &CostSnapshot) -> CostSnapshot {
        let mut out = CostSnapshot::default();
        for i in 0..6 {
            out.per_layer[i] = LayerCost {
                bytes: self.per_layer[i].bytes - earlier.per_layer[i].bytes,
                messages: self.per_layer[i].messages - earlier.per_layer[i].messages,
            };
        }
        out
    }
}

#[derive(Debug, Default)]
pub struct CostMeter {
    current: AtomicU8,
    bytes: [AtomicU64; 6],
    messages: [AtomicU64; 6],
}

impl CostMeter {
    pub fn new() -> CostMeter {
        CostMeter::default()
    }

    pub fn current(&self) -> Layer {
        Layer::from_u8(self.current.load(Ordering::Relaxed))
    }

    /// Switches attribution and returns the previous layer.
    pub fn enter(&self, layer: Layer) -> Layer {
        Layer::from_u8(self.current.swap(layer as u8, Ordering::Relaxed))
    }

    pub fn bytes(&self, n: usize) {
        let i = self.current.load(Ordering::Relaxed) as usize;
        self.bytes[i].fetch_add(n as u64, Ordering::Relaxed);
    }

    pub fn message(&self) {
        let i = self.current.load(Ordering::Relaxed) as usize;
        self.messages[i].fetch_add(1, Ordering::Relaxed);
    }

    pub fn snapshot(&self) -> CostSnapshot {
        let mut out = CostSnapshot::default();
        for i in 0..6 {
            out.per_layer[i] = LayerCost {
                bytes: self.bytes[i].load(Ordering::Relaxed),
                messages: self.messages[i].load(Ordering::Relaxed),
            };
        }
        out
    }
}
