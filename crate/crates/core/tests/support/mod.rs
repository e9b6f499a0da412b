//! Reference implementations and property checks shared by the integration
//! and acceptance tests.
#![allow(dead_code)]

use std::collections::{BTreeSet, HashSet};

use flowprint::sessionizer::{burstify, sessionize, SessionizerConfig};
use flowprint::trace_model::{Direction, LabeledTrace, PacketRecord};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * 1f64.max(a.abs()).max(b.abs())
}

fn median_of_sorted(v: &[f64]) -> f64 {
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn linear_percentile(v: &[f64], q: f64) -> f64 {
    let pos = q * (v.len() - 1) as f64;
    let lo = pos as usize;
    let frac = pos - lo as f64;
    if lo + 1 >= v.len() {
        return v[lo];
    }
    v[lo] * (1.0 - frac) + v[lo + 1] * frac
}

/// Textbook statistics straight from the k-statistic definitions.
pub fn naive_statistics(x: &[f64], mad_mean: bool) -> [f64; 18] {
    let mut out = [0.0; 18];
    let n = x.len();
    if n == 0 {
        return out;
    }
    let nf = n as f64;
    let mut v = x.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mean = x.iter().sum::<f64>() / nf;
    let m = |p: i32| x.iter().map(|xi| (xi - mean).powi(p)).sum::<f64>() / nf;
    let (m2, m3, m4) = (m(2), m(3), m(4));
    let median = median_of_sorted(&v);

    out[0] = v[0];
    out[1] = v[n - 1];
    out[2] = mean;
    out[3] = if mad_mean {
        x.iter().map(|xi| (xi - mean).abs()).sum::<f64>() / nf
    } else {
        let mut d: Vec<f64> = x.iter().map(|xi| (xi - median).abs()).collect();
        d.sort_by(|a, b| a.partial_cmp(b).unwrap());
        median_of_sorted(&d)
    };
    if n >= 2 {
        let k2 = nf * m2 / (nf - 1.0);
        out[5] = k2;
        out[4] = k2.sqrt();
        if m2 > 0.0 {
            if n >= 3 {
                let k3 = nf * nf * m3 / ((nf - 1.0) * (nf - 2.0));
                out[6] = k3 / k2.powf(1.5);
            }
            if n >= 4 {
                let k4 = nf * nf * ((nf + 1.0) * m4 - 3.0 * (nf - 1.0) * m2 * m2)
                    / ((nf - 1.0) * (nf - 2.0) * (nf - 3.0));
                out[7] = k4 / (k2 * k2);
            }
        }
    }
    for k in 0..9 {
        out[8 + k] = linear_percentile(&v, (k + 1) as f64 / 10.0);
    }
    out[17] = nf;
    out
}

pub fn random_series(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = rng.random_range(0..80);
    match rng.random_range(0..4) {
        0 => vec![rng.random_range(1..=1460) as f64; n],
        1 => (0..n)
            .map(|_| rng.random_range(1..=4) as f64 * 100.0)
            .collect(),
        _ => (0..n).map(|_| rng.random_range(1..=1460) as f64).collect(),
    }
}

pub fn packet(ts: f64, dir: Direction, remote: u8, port: u16, len: u32) -> PacketRecord {
    let remote = format!("192.0.2.{remote}");
    let (src_addr, dst_addr, src_port, dst_port) = match dir {
        Direction::Outgoing => ("10.0.0.2".to_owned(), remote, 50000, port),
        Direction::Incoming => (remote, "10.0.0.2".to_owned(), port, 50000),
    };
    PacketRecord {
        timestamp: ts,
        src_addr,
        dst_addr,
        src_port,
        dst_port,
        length: len,
        direction: dir,
        is_tcp: true,
        is_retransmission: false,
        flags: BTreeSet::new(),
    }
}

/// A trace whose gaps straddle `1.0` so bursts of many sizes appear.
pub fn random_trace(seed: u64) -> LabeledTrace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(0..120);
    let mut t = 0.0;
    let packets = (0..n)
        .map(|_| {
            t += match rng.random_range(0..10) {
                0 => rng.random_range(1.0..5.0),
                1 => 1.0,
                2 => 0.0,
                _ => rng.random_range(0.0..0.9),
            };
            let dir = if rng.random_bool(0.5) {
                Direction::Outgoing
            } else {
                Direction::Incoming
            };
            packet(
                t,
                dir,
                rng.random_range(1..4),
                [443, 80][rng.random_range(0..2)],
                rng.random_range(1..1461),
            )
        })
        .collect();
    LabeledTrace::new("app", format!("t{seed}"), packets)
}

fn key(p: &PacketRecord) -> (u64, String, String, u16, u16, u32) {
    (
        p.timestamp.to_bits(),
        p.src_addr.clone(),
        p.dst_addr.clone(),
        p.src_port,
        p.dst_port,
        p.length,
    )
}

/// Burst gaps, flow partition and flow-bound checks for one threshold.
pub fn check_partition(trace: &LabeledTrace, threshold: f64) -> Result<(), String> {
    let cfg = SessionizerConfig {
        burst_threshold: threshold,
        ..Default::default()
    };
    let bursts = burstify(trace, &cfg);
    for b in &bursts {
        if b.packets
            .windows(2)
            .any(|w| w[1].timestamp - w[0].timestamp >= threshold)
        {
            return Err("gap inside a burst reaches the threshold".into());
        }
    }
    for w in bursts.windows(2) {
        let gap = w[1].packets[0].timestamp - w[0].packets.last().unwrap().timestamp;
        if gap < threshold {
            return Err(format!("bursts separated by {gap} < {threshold}"));
        }
    }
    let flat: Vec<_> = bursts
        .iter()
        .flat_map(|b| b.packets.iter().map(key))
        .collect();
    if flat != trace.packets.iter().map(key).collect::<Vec<_>>() {
        return Err("bursts do not concatenate to the trace".into());
    }

    let flows = sessionize(trace, &cfg);
    let mut seen: HashSet<(usize, String, u16)> = HashSet::new();
    let mut covered = Vec::new();
    for f in &flows {
        if f.packets.is_empty() {
            return Err("empty flow".into());
        }
        if !seen.insert((f.burst_index, f.dst_addr.clone(), f.dst_port)) {
            return Err("two flows share an endpoint inside one burst".into());
        }
        for p in &f.packets {
            let (addr, port) = p.remote_endpoint();
            if addr != f.dst_addr || port != f.dst_port {
                return Err("packet filed under the wrong endpoint".into());
            }
        }
        let burst = &bursts[f.burst_index];
        let in_burst: Vec<_> = burst
            .packets
            .iter()
            .filter(|p| p.remote_endpoint() == (f.dst_addr.as_str(), f.dst_port))
            .map(key)
            .collect();
        if in_burst != f.packets.iter().map(key).collect::<Vec<_>>() {
            return Err("flow is not the ordered endpoint slice of its burst".into());
        }
        covered.extend(f.packets.iter().map(key));
    }
    let mut covered_sorted = covered.clone();
    covered_sorted.sort();
    let mut all: Vec<_> = trace.packets.iter().map(key).collect();
    all.sort();
    if covered_sorted != all {
        return Err("flows do not partition the trace".into());
    }

    let bounded = sessionize(
        trace,
        &SessionizerConfig {
            burst_threshold: threshold,
            min_flow_length: 3,
            max_flow_length: 10,
        },
    );
    let expected: Vec<_> = flows
        .iter()
        .filter(|f| (3..=10).contains(&f.len()))
        .collect();
    if bounded.len() != expected.len() || bounded.iter().zip(&expected).any(|(a, b)| a != *b) {
        return Err("flow bounds must drop whole flows".into());
    }
    Ok(())
}

/// A larger threshold never splits: each of its bursts is a run of
/// consecutive smaller-threshold bursts.
pub fn check_monotone(trace: &LabeledTrace, small: f64, large: f64) -> Result<(), String> {
    let cfg = |t| SessionizerConfig {
        burst_threshold: t,
        ..Default::default()
    };
    let fine = burstify(trace, &cfg(small));
    let coarse = burstify(trace, &cfg(large));
    if coarse.len() > fine.len() {
        return Err(format!(
            "{} bursts at {large} but {} at {small}",
            coarse.len(),
            fine.len()
        ));
    }
    let mut i = 0;
    for c in &coarse {
        let mut n = 0;
        while n < c.packets.len() {
            let f = fine.get(i).ok_or("ran out of fine bursts")?;
            n += f.packets.len();
            i += 1;
        }
        if n != c.packets.len() {
            return Err("coarse burst boundary falls inside a fine burst".into());
        }
    }
    Ok(())
}
