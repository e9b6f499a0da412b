//! Burst and flow discretization of a packet trace.
//!
//! A burst ends when the next packet arrives `burst_threshold` seconds or more
//! after the previous one. Inside a burst, packets are grouped into flows by
//! their remote endpoint, so a request and its response land in one flow.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::trace_model::{LabeledTrace, PacketRecord};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionizerConfig {
    /// Seconds.
    pub burst_threshold: f64,
    pub max_flow_length: usize,
    pub min_flow_length: usize,
}

impl Default for SessionizerConfig {
    fn default() -> Self {
        SessionizerConfig {
            burst_threshold: 1.0,
            max_flow_length: 8192,
            min_flow_length: 1,
        }
    }
}

impl SessionizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.burst_threshold.is_finite() && self.burst_threshold > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "burst threshold must be positive, got {}",
                self.burst_threshold
            )));
        }
        if self.min_flow_length < 1 || self.max_flow_length < self.min_flow_length {
            return Err(Error::InvalidConfig(format!(
                "flow length bounds must satisfy 1 <= min ({}) <= max ({})",
                self.min_flow_length, self.max_flow_length
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Burst {
    pub packets: Vec<PacketRecord>,
    pub start_time: f64,
    pub end_time: f64,
}

impl Burst {
    fn from_packets(packets: Vec<PacketRecord>) -> Self {
        let start_time = packets.first().map_or(0.0, |p| p.timestamp);
        let end_time = packets.last().map_or(0.0, |p| p.timestamp);
        Burst {
            packets,
            start_time,
            end_time,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Flow {
    pub app_label: String,
    /// Trace the flow was cut from; empty when unknown.
    pub trace_id: String,
    pub dst_addr: String,
    pub dst_port: u16,
    pub packets: Vec<PacketRecord>,
    pub burst_index: usize,
}

impl Flow {
    pub fn len(&self) -> usize {
        self.packets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.packets.is_empty()
    }
}

/// Incremental burst builder for packets arriving in timestamp order.
#[derive(Debug)]
pub struct Burstifier {
    threshold: f64,
    current: Vec<PacketRecord>,
}

impl Burstifier {
    pub fn new(threshold: f64) -> Self {
        Burstifier {
            threshold,
            current: Vec::new(),
        }
    }

    /// Adds a packet, returning the previous burst if this packet closed it.
    pub fn push(&mut self, packet: PacketRecord) -> Option<Burst> {
        let closed = match self.current.last() {
            Some(last) if packet.timestamp - last.timestamp >= self.threshold => {
                Some(Burst::from_packets(std::mem::take(&mut self.current)))
            }
            _ => None,
        };
        self.current.push(packet);
        closed
    }

    pub fn finish(self) -> Option<Burst> {
        (!self.current.is_empty()).then(|| Burst::from_packets(self.current))
    }
}

pub fn burstify(trace: &LabeledTrace, config: &SessionizerConfig) -> Vec<Burst> {
    let mut builder = Burstifier::new(config.burst_threshold);
    let mut bursts: Vec<Burst> = trace
        .packets
        .iter()
        .cloned()
        .filter_map(|p| builder.push(p))
        .collect();
    bursts.extend(builder.finish());
    bursts
}

/// Flows come out ordered by the timestamp of their first packet.
pub fn split_flows(burst: &Burst, burst_index: usize, app_label: &str) -> Vec<Flow> {
    let mut flows: Vec<Flow> = Vec::new();
    let mut by_endpoint: HashMap<(&str, u16), usize> = HashMap::new();
    for packet in &burst.packets {
        let key = packet.remote_endpoint();
        let idx = *by_endpoint.entry(key).or_insert_with(|| {
            flows.push(Flow {
                app_label: app_label.to_owned(),
                trace_id: String::new(),
                dst_addr: key.0.to_owned(),
                dst_port: key.1,
                packets: Vec::new(),
                burst_index,
            });
            flows.len() - 1
        });
        flows[idx].packets.push(packet.clone());
    }
    flows
}

/// Over-long and under-short flows are dropped whole, never truncated.
pub fn enforce_flow_bounds(flows: Vec<Flow>, config: &SessionizerConfig) -> Vec<Flow> {
    flows
        .into_iter()
        .filter(|f| (config.min_flow_length..=config.max_flow_length).contains(&f.len()))
        .collect()
}

/// Burstify, split and bound one trace.
pub fn sessionize(trace: &LabeledTrace, config: &SessionizerConfig) -> Vec<Flow> {
    let flows = burstify(trace, config)
        .iter()
        .enumerate()
        .flat_map(|(i, burst)| split_flows(burst, i, &trace.app_label))
        .map(|mut f| {
            f.trace_id = trace.trace_id.clone();
            f
        })
        .collect();
    enforce_flow_bounds(flows, config)
}
