#![allow(dead_code)]

use std::collections::BTreeSet;

use d2le::broadcast::OverlayChoice;
use d2le::election::ElectionOutcome;
use d2le::graph::{Graph, NodeId};

/// Overlay of every node as neighbor ids instead of ports.
pub fn overlay_ids(g: &Graph, out: &ElectionOutcome, choice: OverlayChoice) -> Vec<BTreeSet<NodeId>> {
    choice
        .ports(out)
        .iter()
        .enumerate()
        .map(|(v, ports)| {
            ports
                .iter()
                .map(|&p| g.id(out.ports.neighbor(v, p).expect("port in range")))
                .collect()
        })
        .collect()
}

pub const SEEDS: u64 = 10;
