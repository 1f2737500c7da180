//! Physical-layer timing and two-disc radio geometry.
//!
//! Control frames and the PLCP preamble/header go out at the basic rate;
//! the MAC header plus payload of a DATA frame goes out at the data rate.

use serde::{Deserialize, Serialize};

use crate::engine::SimTime;

/// 802.11 DSSS timing constants and rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhyParams {
    /// bits/s, PLCP and control frames
    pub basic_rate: u64,
    /// bits/s, MAC header + payload of DATA frames
    pub data_rate: u64,
    pub slot_us: u64,
    pub sifs_us: u64,
    pub difs_us: u64,
    pub plcp_overhead_us: u64,
    pub cw_min: u32,
    pub cw_max: u32,
    pub mac_data_header: u32,
    pub rts_size: u32,
    pub cts_size: u32,
    pub ack_size: u32,
    pub short_retry_limit: u32,
    pub long_retry_limit: u32,
}

impl Default for PhyParams {
    fn default() -> Self {
        PhyParams {
            basic_rate: 1_000_000,
            data_rate: 2_000_000,
            slot_us: 20,
            sifs_us: 10,
            difs_us: 50,
            plcp_overhead_us: 192,
            cw_min: 31,
            cw_max: 1023,
            mac_data_header: 28,
            rts_size: 20,
            cts_size: 14,
            ack_size: 14,
            short_retry_limit: 7,
            long_retry_limit: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PhyParamsError {
    #[error("{0} must be positive")]
    NonPositive(&'static str),
    #[error("cw_min ({cw_min}) exceeds cw_max ({cw_max})")]
    ContentionWindow { cw_min: u32, cw_max: u32 },
}

/// Kinds of frame that occupy the air.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrameKind {
    Rts,
    Cts,
    Data,
    Ack,
    /// Broadcast frame: no RTS/CTS/ACK, sent entirely at the basic rate.
    Bcast,
}

fn bits_time_us(bits: u64, rate: u64) -> u64 {
    // ceil(bits * 1e6 / rate)
    (bits * 1_000_000).div_ceil(rate)
}

impl PhyParams {
    pub fn validate(&self) -> Result<(), PhyParamsError> {
        let positive = [
            ("basic_rate", self.basic_rate),
            ("data_rate", self.data_rate),
            ("slot_us", self.slot_us),
            ("sifs_us", self.sifs_us),
            ("difs_us", self.difs_us),
            ("plcp_overhead_us", self.plcp_overhead_us),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(PhyParamsError::NonPositive(name));
            }
        }
        if self.cw_min == 0 {
            return Err(PhyParamsError::NonPositive("cw_min"));
        }
        if self.cw_min > self.cw_max {
            return Err(PhyParamsError::ContentionWindow {
                cw_min: self.cw_min,
                cw_max: self.cw_max,
            });
        }
        if self.short_retry_limit == 0 {
            return Err(PhyParamsError::NonPositive("short_retry_limit"));
        }
        if self.long_retry_limit == 0 {
            return Err(PhyParamsError::NonPositive("long_retry_limit"));
        }
        Ok(())
    }

    /// Mean initial backoff, `cw_min / 2` slots, in microseconds.
    pub fn mean_backoff_us(&self) -> f64 {
        f64::from(self.cw_min) / 2.0 * self.slot_us as f64
    }

    /// On-air duration of a frame in whole microseconds (rounded up).
    ///
    /// `payload_bytes` is ignored for RTS/CTS/ACK. For `Bcast` it is the
    /// MAC payload carried behind a data header.
    pub fn airtime(&self, kind: FrameKind, payload_bytes: u32) -> SimTime {
        let us = match kind {
            FrameKind::Rts => bits_time_us(u64::from(self.rts_size) * 8, self.basic_rate),
            FrameKind::Cts => bits_time_us(u64::from(self.cts_size) * 8, self.basic_rate),
            FrameKind::Ack => bits_time_us(u64::from(self.ack_size) * 8, self.basic_rate),
            FrameKind::Data => bits_time_us(
                u64::from(self.mac_data_header + payload_bytes) * 8,
                self.data_rate,
            ),
            FrameKind::Bcast => bits_time_us(
                u64::from(self.mac_data_header + payload_bytes) * 8,
                self.basic_rate,
            ),
        };
        SimTime(self.plcp_overhead_us + us)
    }

    /// The busy time of one complete RTS/CTS/DATA/ACK exchange, from the
    /// first bit of the RTS to the last bit of the ACK.
    pub fn exchange_us(&self, payload_bytes: u32) -> u64 {
        self.airtime(FrameKind::Rts, 0).0
            + self.airtime(FrameKind::Cts, 0).0
            + self.airtime(FrameKind::Data, payload_bytes).0
            + self.airtime(FrameKind::Ack, 0).0
            + 3 * self.sifs_us
    }

    /// Time to push one packet through a single hop: DIFS, mean backoff and
    /// the full four-way exchange, in seconds.
    pub fn t_forwarding(&self, payload_bytes: u32) -> f64 {
        (self.difs_us as f64 + self.mean_backoff_us() + self.exchange_us(payload_bytes) as f64) / 1e6
    }

    /// Forwarding time over `hops` hops that all share one interference
    /// zone: every hop pays DIFS plus the exchange, a single mean backoff is
    /// charged for the whole path.
    pub fn t_forwarding_multihop(&self, hops: u32, payload_bytes: u32) -> f64 {
        assert!(hops >= 1, "hop count must be at least 1");
        let per_hop = (self.difs_us + self.exchange_us(payload_bytes)) as f64;
        (f64::from(hops) * per_hop + self.mean_backoff_us()) / 1e6
    }

    /// Payload bits per second a lone saturated sender can push through an
    /// otherwise idle channel.
    pub fn saturation_throughput(&self, payload_bytes: u32) -> f64 {
        assert!(payload_bytes > 0, "payload must be non-empty");
        f64::from(payload_bytes) * 8.0 / self.t_forwarding(payload_bytes)
    }

    /// NAV carried by an RTS: covers CTS, DATA, ACK and three SIFS gaps.
    pub fn rts_nav(&self, payload_bytes: u32) -> SimTime {
        SimTime(
            3 * self.sifs_us
                + self.airtime(FrameKind::Cts, 0).0
                + self.airtime(FrameKind::Data, payload_bytes).0
                + self.airtime(FrameKind::Ack, 0).0,
        )
    }

    /// NAV carried by a CTS answering an RTS whose NAV was `rts_nav`.
    pub fn cts_nav(&self, rts_nav: SimTime) -> SimTime {
        rts_nav.saturating_sub(SimTime(self.sifs_us) + self.airtime(FrameKind::Cts, 0))
    }

    /// NAV carried by a DATA frame: SIFS + ACK.
    pub fn data_nav(&self) -> SimTime {
        SimTime(self.sifs_us) + self.airtime(FrameKind::Ack, 0)
    }

    /// How long a sender waits for CTS/ACK after its frame ends.
    pub fn response_timeout(&self, response: FrameKind) -> SimTime {
        SimTime(self.sifs_us + self.slot_us) + self.airtime(response, 0)
    }

    pub fn next_cw(&self, cw: u32) -> u32 {
        (2 * (cw + 1) - 1).min(self.cw_max)
    }
}

/// Binary two-disc propagation: decodable inside `tx_range`, sensed and
/// interfering up to `interference_range`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RangeModel {
    pub tx_range: f64,
    pub interference_range: f64,
}

impl Default for RangeModel {
    fn default() -> Self {
        RangeModel {
            tx_range: 250.0,
            interference_range: 550.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Reach {
    InTx,
    InInterference,
    Out,
}

impl RangeModel {
    pub fn is_valid(&self) -> bool {
        self.tx_range > 0.0 && self.interference_range >= self.tx_range
    }

    /// Boundaries are inclusive.
    pub fn classify(&self, distance: f64) -> Reach {
        if distance <= self.tx_range {
            Reach::InTx
        } else if distance <= self.interference_range {
            Reach::InInterference
        } else {
            Reach::Out
        }
    }

    pub fn reach(&self, a: Position, b: Position) -> Reach {
        self.classify(a.distance(b))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub const fn new(x: f64, y: f64) -> Self {
        Position { x, y }
    }

    pub fn distance(self, other: Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(actual: f64, expected: f64, rel: f64) -> bool {
        ((actual - expected) / expected).abs() <= rel
    }

    #[test]
    fn airtimes_by_hand() {
        let phy = PhyParams::default();
        // 192 + 160 bits / 1 Mb/s
        assert_eq!(phy.airtime(FrameKind::Rts, 0), SimTime(352));
        assert_eq!(phy.airtime(FrameKind::Cts, 0), SimTime(304));
        assert_eq!(phy.airtime(FrameKind::Ack, 0), SimTime(304));
        // 192 + 528*8 / 2 Mb/s
        assert_eq!(phy.airtime(FrameKind::Data, 500), SimTime(2304));
        // header only
        assert_eq!(phy.airtime(FrameKind::Data, 0), SimTime(192 + 112));
        assert_eq!(phy.airtime(FrameKind::Bcast, 20), SimTime(192 + 384));
    }

    #[test]
    fn airtime_rounds_up() {
        let phy = PhyParams {
            data_rate: 11_000_000,
            ..PhyParams::default()
        };
        // (28+1)*8 = 232 bits / 11 Mb/s = 21.09 us -> 22
        assert_eq!(phy.airtime(FrameKind::Data, 1), SimTime(192 + 22));
    }

    #[test]
    fn forwarding_time_matches_published_value() {
        let phy = PhyParams::default();
        // 50 + 310 + 352 + 304 + 2304 + 304 + 30 = 3654 us
        assert!((phy.t_forwarding(500) - 0.003654).abs() < 1e-12);
        assert!(close(phy.t_forwarding(500), 0.00371, 0.05));
        assert!(phy.t_forwarding(1000) > phy.t_forwarding(500));
    }

    #[test]
    fn busy_period_at_one_megabit() {
        let phy = PhyParams {
            data_rate: 1_000_000,
            ..PhyParams::default()
        };
        // exchange: 352 + 304 + (192 + 4224) + 304 + 30 = 5406 us
        assert_eq!(phy.exchange_us(500), 5406);
        assert!(close(phy.exchange_us(500) as f64 / 1e6, 0.005536, 0.05));
        // with DIFS and mean backoff on top it stays inside 5 %
        assert!(close(phy.t_forwarding(500), 0.005536, 0.05));
    }

    #[test]
    fn multihop_expansion() {
        let phy = PhyParams::default();
        assert_eq!(phy.t_forwarding_multihop(1, 500), phy.t_forwarding(500));
        let per_hop = (50 + 3294) as f64;
        let two = (2.0 * per_hop + 310.0) / 1e6;
        assert!((phy.t_forwarding_multihop(2, 500) - two).abs() < 1e-12);
        let t: Vec<f64> = (1..=3).map(|k| phy.t_forwarding_multihop(k, 500)).collect();
        assert!(t[0] < t[1] && t[1] < t[2]);
    }

    #[test]
    fn saturation_throughput_values() {
        let phy = PhyParams::default();
        let s500 = phy.saturation_throughput(500);
        assert!(close(s500, 1_078_000.0, 0.05), "{s500}");
        assert!((1_024_000.0..=1_132_000.0).contains(&s500));
        let s1000 = phy.saturation_throughput(1000);
        assert!(close(s1000, 1_400_000.0, 0.10), "{s1000}");
        assert!(phy.saturation_throughput(250) < s500 && s500 < s1000);
        assert!((phy.t_forwarding(500) * s500 - 4000.0).abs() < 1e-9);
    }

    #[test]
    fn nav_values() {
        let phy = PhyParams::default();
        let rts = phy.rts_nav(500);
        assert_eq!(rts, SimTime(30 + 304 + 2304 + 304));
        assert_eq!(phy.cts_nav(rts), SimTime(20 + 2304 + 304));
        assert_eq!(phy.data_nav(), SimTime(314));
    }

    #[test]
    fn contention_window_doubling() {
        let phy = PhyParams::default();
        let mut cw = phy.cw_min;
        let mut seen = vec![cw];
        for _ in 0..7 {
            cw = phy.next_cw(cw);
            seen.push(cw);
        }
        assert_eq!(seen, [31, 63, 127, 255, 511, 1023, 1023, 1023]);
    }

    #[test]
    fn validation() {
        assert!(PhyParams::default().validate().is_ok());
        let bad = PhyParams {
            cw_min: 64,
            cw_max: 32,
            ..PhyParams::default()
        };
        assert!(bad.validate().is_err());
        let zero = PhyParams {
            data_rate: 0,
            ..PhyParams::default()
        };
        assert_eq!(zero.validate(), Err(PhyParamsError::NonPositive("data_rate")));
    }

    #[test]
    fn reach_examples() {
        let r = RangeModel::default();
        let o = Position::new(0.0, 0.0);
        assert_eq!(r.reach(o, Position::new(200.0, 0.0)), Reach::InTx);
        assert_eq!(r.reach(o, Position::new(450.0, 0.0)), Reach::InInterference);
        assert_eq!(r.reach(o, Position::new(600.0, 0.0)), Reach::Out);
        assert_eq!(r.reach(o, Position::new(250.0, 0.0)), Reach::InTx);
        assert_eq!(r.reach(o, Position::new(550.0, 0.0)), Reach::InInterference);
    }

    proptest! {
        #[test]
        fn airtime_linear_in_payload(size in 0u32..2300) {
            let phy = PhyParams::default();
            let exact = 192.0 + f64::from(28 + size) * 8.0 / 2.0;
            let got = phy.airtime(FrameKind::Data, size).0 as f64;
            prop_assert!(got >= exact && got < exact + 1.0);
        }

        #[test]
        fn reach_is_symmetric(ax in 0.0..1500.0f64, ay in 0.0..500.0f64,
                              bx in 0.0..1500.0f64, by in 0.0..500.0f64) {
            let r = RangeModel::default();
            let a = Position::new(ax, ay);
            let b = Position::new(bx, by);
            prop_assert_eq!(r.reach(a, b), r.reach(b, a));
        }
    }
}
