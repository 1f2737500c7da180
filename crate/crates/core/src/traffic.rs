//! Constant-bit-rate sources with piecewise rate schedules.

use serde::{Deserialize, Serialize};

use crate::engine::SimTime;
use crate::qos::FlowId;

/// One constant-rate stretch of a flow: `rate` packets/s on `[start, stop)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateSegment {
    /// seconds
    pub start: f64,
    /// seconds
    pub stop: f64,
    /// packets per second
    pub rate: f64,
}

impl RateSegment {
    pub fn start_time(&self) -> SimTime {
        SimTime::from_secs_f64(self.start)
    }

    pub fn stop_time(&self) -> SimTime {
        SimTime::from_secs_f64(self.stop)
    }

    /// Emission instant of the `index`-th packet, computed from the segment
    /// start so that fractional gaps never accumulate drift.
    pub fn emission_time(&self, index: u64) -> SimTime {
        let offset = (index as f64 * 1e6 / self.rate).floor() as u64;
        self.start_time() + SimTime(offset)
    }

    /// Emission instants inside the segment.
    pub fn emissions(&self) -> impl Iterator<Item = SimTime> + '_ {
        let stop = self.stop_time();
        (0u64..)
            .map(move |i| self.emission_time(i))
            .take_while(move |&t| t < stop)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSpec {
    pub id: FlowId,
    pub source: u32,
    pub destination: u32,
    /// payload bytes per packet
    pub packet_size: u32,
    pub schedule: Vec<RateSegment>,
    /// bits/s; derived from the peak segment rate when absent. Zero marks
    /// best-effort traffic that bypasses admission control.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub requested_bw: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FlowError {
    #[error("schedule is empty")]
    EmptySchedule,
    #[error("segment {0} has non-positive rate")]
    BadRate(usize),
    #[error("segment {0} stops before it starts")]
    Inverted(usize),
    #[error("segment {0} overlaps or precedes segment {1}")]
    Overlap(usize, usize),
    #[error("packet size must be positive")]
    EmptyPacket,
}

impl FlowSpec {
    /// A single-segment flow.
    pub fn cbr(
        id: FlowId,
        source: u32,
        destination: u32,
        packet_size: u32,
        rate: f64,
        start: f64,
        stop: f64,
    ) -> Self {
        FlowSpec {
            id,
            source,
            destination,
            packet_size,
            schedule: vec![RateSegment { start, stop, rate }],
            requested_bw: None,
        }
    }

    pub fn validate(&self) -> Result<(), FlowError> {
        if self.packet_size == 0 {
            return Err(FlowError::EmptyPacket);
        }
        if self.schedule.is_empty() {
            return Err(FlowError::EmptySchedule);
        }
        for (i, seg) in self.schedule.iter().enumerate() {
            if !(seg.rate > 0.0 && seg.rate.is_finite()) {
                return Err(FlowError::BadRate(i));
            }
            if !(seg.start >= 0.0 && seg.stop >= seg.start) {
                return Err(FlowError::Inverted(i));
            }
            if i > 0 && seg.start < self.schedule[i - 1].stop {
                return Err(FlowError::Overlap(i - 1, i));
            }
        }
        Ok(())
    }

    /// Bandwidth the flow asks for: explicit override, else packet size
    /// times the peak rate.
    pub fn requested_bw(&self) -> f64 {
        self.requested_bw.unwrap_or_else(|| {
            let peak = self.schedule.iter().map(|s| s.rate).fold(0.0, f64::max);
            f64::from(self.packet_size) * 8.0 * peak
        })
    }

    /// Offered load of a segment in bits/s.
    pub fn offered_bps(&self, segment: usize) -> f64 {
        f64::from(self.packet_size) * 8.0 * self.schedule[segment].rate
    }

    pub fn end_time(&self) -> SimTime {
        self.schedule.last().map_or(SimTime::ZERO, RateSegment::stop_time)
    }

    pub fn start_time(&self) -> SimTime {
        self.schedule
            .first()
            .map_or(SimTime::ZERO, RateSegment::start_time)
    }
}
