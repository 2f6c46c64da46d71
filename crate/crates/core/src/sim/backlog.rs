//! Transmit-everything baseline: every captured image waits for a short
//! periodic contact and is sent whole, oldest first.

use std::collections::VecDeque;

use crate::link::transfer_time;
use crate::rng;
use crate::sim::metrics::index_slope;
use crate::sim::workload::ByteSize;
use rand::Rng;

#[derive(Clone, Debug, PartialEq)]
pub struct BacklogParams {
    pub capture_interval: f64,
    pub rate_bps: f64,
    pub period: f64,
    pub contact: f64,
    /// Captures happen at `t < horizon`; contacts continue until the queue
    /// empties.
    pub horizon: f64,
    pub image_bytes: ByteSize,
    pub seed: u64,
}

impl Default for BacklogParams {
    fn default() -> Self {
        Self {
            capture_interval: 2.0,
            rate_bps: 30e6,
            period: 60.0,
            contact: 3.0,
            horizon: 7200.0,
            image_bytes: ByteSize::Const(600_000),
            seed: 7,
        }
    }
}

impl BacklogParams {
    /// Bytes the link can move per period divided by the bytes captured per
    /// period. Below 1 the queue grows without bound.
    pub fn drain_ratio(&self) -> f64 {
        let capacity = self.rate_bps / 8.0 * self.contact;
        let arrivals = self.image_bytes.mean() * self.period / self.capture_interval;
        capacity / arrivals
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.capture_interval > 0.0 && self.rate_bps > 0.0 && self.horizon >= 0.0) {
            return Err("capture interval, rate and horizon must be positive".into());
        }
        if !(self.contact > 0.0 && self.contact < self.period) {
            return Err("contact must be positive and shorter than the period".into());
        }
        let longest = match self.image_bytes {
            ByteSize::Const(v) => v,
            ByteSize::Uniform(_, hi) => hi,
        };
        if transfer_time(longest, self.rate_bps) >= self.contact {
            return Err("an image does not fit in one contact".into());
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BacklogPoint {
    pub index: usize,
    pub capture_time: f64,
    pub delivered: f64,
    pub latency: f64,
}

/// Per-image latency ordered by capture time.
pub fn backlog_experiment(p: &BacklogParams) -> Result<Vec<BacklogPoint>, String> {
    p.validate()?;
    let n = (p.horizon / p.capture_interval).ceil() as usize;
    let mut pending: VecDeque<(usize, f64, u64)> = VecDeque::new();
    let mut out = Vec::with_capacity(n);
    let mut next_capture = 0usize;
    let mut k = 0u64;
    while next_capture < n || !pending.is_empty() {
        let open = k as f64 * p.period;
        let close = open + p.contact;
        while next_capture < n {
            let t = next_capture as f64 * p.capture_interval;
            if t > open {
                break;
            }
            pending.push_back((next_capture, t, image_size(p, next_capture)));
            next_capture += 1;
        }
        let mut now = open;
        loop {
            // Images captured during the contact join the queue as they arrive.
            while next_capture < n {
                let t = next_capture as f64 * p.capture_interval;
                if t > now {
                    break;
                }
                pending.push_back((next_capture, t, image_size(p, next_capture)));
                next_capture += 1;
            }
            let Some(&(index, capture_time, bytes)) = pending.front() else {
                break;
            };
            let done = now + transfer_time(bytes, p.rate_bps);
            if done >= close {
                break;
            }
            pending.pop_front();
            out.push(BacklogPoint {
                index,
                capture_time,
                delivered: done,
                latency: done - capture_time,
            });
            now = done;
        }
        k += 1;
    }
    out.sort_by_key(|pt| pt.index);
    Ok(out)
}

fn image_size(p: &BacklogParams, index: usize) -> u64 {
    match p.image_bytes {
        ByteSize::Const(v) => v,
        ByteSize::Uniform(lo, hi) => rng::stream(p.seed, "backlog-size", &[index as u64]).random_range(lo..=hi),
    }
}

/// Least-squares slope of latency against capture index.
pub fn latency_slope(points: &[BacklogPoint]) -> f64 {
    let y: Vec<f64> = points.iter().map(|p| p.latency).collect();
    index_slope(&y)
}

pub fn backlog_csv(points: &[BacklogPoint]) -> String {
    let mut out = String::from("index,capture_time,delivered,latency\n");
    for p in points {
        out.push_str(&format!(
            "{},{:.6},{:.6},{:.6}\n",
            p.index, p.capture_time, p.delivered, p.latency
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_capture_is_delivered_once() {
        let p = BacklogParams {
            horizon: 600.0,
            ..BacklogParams::default()
        };
        let pts = backlog_experiment(&p).unwrap();
        assert_eq!(pts.len(), 300);
        assert!(pts.iter().enumerate().all(|(i, pt)| pt.index == i && pt.latency > 0.0));
    }

    #[test]
    fn doubling_rate_halves_transfer() {
        assert_eq!(transfer_time(600_000, 60e6) * 2.0, transfer_time(600_000, 30e6));
    }

    #[test]
    fn oversized_images_are_rejected() {
        let p = BacklogParams {
            image_bytes: ByteSize::Const(20_000_000),
            ..BacklogParams::default()
        };
        assert!(backlog_experiment(&p).is_err());
    }

    #[test]
    fn drain_ratio_marks_stability() {
        let small = BacklogParams {
            image_bytes: ByteSize::Const(100_000),
            ..BacklogParams::default()
        };
        assert!(small.drain_ratio() > 1.0);
        assert!(BacklogParams::default().drain_ratio() < 1.0);
    }
}
