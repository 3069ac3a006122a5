//! Integer-nanosecond instants split into two clock domains.
//!
//! The sender and receiver stamp events with different wall clocks that may
//! disagree by an unknown constant offset. Keeping [`ServerTime`] and
//! [`ClientTime`] as distinct types makes it impossible to subtract across
//! domains by accident: only same-domain differences (where the offset
//! cancels) yield a [`TimeDelta`]. All values are signed nanoseconds so that
//! serialized logs round-trip exactly.

use core::fmt;
use core::ops::{Add, AddAssign, Neg, Sub};

/// Nanoseconds on the sender's clock.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct ServerTime(pub i64);

/// Nanoseconds on the receiver's clock.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct ClientTime(pub i64);

/// A signed span of nanoseconds. Differences within one clock domain land
/// here, as do configured durations.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct TimeDelta(pub i64);

pub const NANOS_PER_SEC: i64 = 1_000_000_000;

impl TimeDelta {
    pub const ZERO: TimeDelta = TimeDelta(0);

    pub const fn from_nanos(ns: i64) -> Self {
        TimeDelta(ns)
    }

    pub const fn from_micros(us: i64) -> Self {
        TimeDelta(us * 1_000)
    }

    pub const fn from_millis(ms: i64) -> Self {
        TimeDelta(ms * 1_000_000)
    }

    pub const fn from_secs(s: i64) -> Self {
        TimeDelta(s * NANOS_PER_SEC)
    }

    /// Rounds to the nearest nanosecond.
    pub fn from_secs_f64(s: f64) -> Self {
        TimeDelta(libm::round(s * 1e9) as i64)
    }

    pub const fn as_nanos(self) -> i64 {
        self.0
    }

    /// Nanosecond count divided by 1e9. Consumers that must reproduce metric
    /// values bit-for-bit perform the same `ns as f64 / 1e9` conversion.
    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e9
    }

    pub const fn is_negative(self) -> bool {
        self.0 < 0
    }
}

impl ServerTime {
    pub const fn from_nanos(ns: i64) -> Self {
        ServerTime(ns)
    }

    pub const fn as_nanos(self) -> i64 {
        self.0
    }

    /// Maps this instant onto the receiver's clock given the (simulation
    /// ground-truth) clock offset. This is the only sanctioned domain
    /// crossing; measurement code never sees the offset.
    pub const fn to_client(self, offset: TimeDelta) -> ClientTime {
        ClientTime(self.0 + offset.0)
    }
}

impl ClientTime {
    pub const fn from_nanos(ns: i64) -> Self {
        ClientTime(ns)
    }

    pub const fn as_nanos(self) -> i64 {
        self.0
    }

    /// Inverse of [`ServerTime::to_client`], for simulation bookkeeping that
    /// owns the ground-truth offset (e.g. when the client emits a packet).
    /// Measurement code never sees the offset.
    pub const fn to_server(self, offset: TimeDelta) -> ServerTime {
        ServerTime(self.0 - offset.0)
    }
}

impl Sub for ServerTime {
    type Output = TimeDelta;
    fn sub(self, rhs: Self) -> TimeDelta {
        TimeDelta(self.0 - rhs.0)
    }
}

impl Sub for ClientTime {
    type Output = TimeDelta;
    fn sub(self, rhs: Self) -> TimeDelta {
        TimeDelta(self.0 - rhs.0)
    }
}

impl Add<TimeDelta> for ServerTime {
    type Output = ServerTime;
    fn add(self, rhs: TimeDelta) -> ServerTime {
        ServerTime(self.0 + rhs.0)
    }
}

impl Add<TimeDelta> for ClientTime {
    type Output = ClientTime;
    fn add(self, rhs: TimeDelta) -> ClientTime {
        ClientTime(self.0 + rhs.0)
    }
}

impl Sub<TimeDelta> for ServerTime {
    type Output = ServerTime;
    fn sub(self, rhs: TimeDelta) -> ServerTime {
        ServerTime(self.0 - rhs.0)
    }
}

impl Sub<TimeDelta> for ClientTime {
    type Output = ClientTime;
    fn sub(self, rhs: TimeDelta) -> ClientTime {
        ClientTime(self.0 - rhs.0)
    }
}

impl Add for TimeDelta {
    type Output = TimeDelta;
    fn add(self, rhs: Self) -> TimeDelta {
        TimeDelta(self.0 + rhs.0)
    }
}

impl AddAssign for TimeDelta {
    fn add_assign(&mut self, rhs: Self) {
        self.0 += rhs.0;
    }
}

impl Sub for TimeDelta {
    type Output = TimeDelta;
    fn sub(self, rhs: Self) -> TimeDelta {
        TimeDelta(self.0 - rhs.0)
    }
}

impl Neg for TimeDelta {
    type Output = TimeDelta;
    fn neg(self) -> TimeDelta {
        TimeDelta(-self.0)
    }
}

impl fmt::Display for TimeDelta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}ns", self.0)
    }
}
