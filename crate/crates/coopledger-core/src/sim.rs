//! Deterministic discrete-event simulation of ledger replication.
//!
//! One sequencer orders a transaction workload and broadcasts sealed blocks
//! to N replicas over a lossy, delaying, partitionable message layer.
//! Replicas apply blocks strictly in sequence (buffering gaps), ack their
//! applied height, and the sequencer retransmits unacked blocks on a fixed
//! interval. Everything — loss, delay, ordering — derives from the seed, so
//! a (seed, config) pair reproduces a byte-identical report.

use alloc::collections::BTreeMap;
use alloc::string::ToString;
use alloc::vec::Vec;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::crypto::Digest32;
use crate::error::CoopError;
use crate::ledger::{verify_blocks, Block, ChainCheck, Ledger};
use crate::tx::{SignedTransaction, TxPayload};

pub const DEFAULT_RETRANSMIT_INTERVAL: u64 = 5;
pub const DEFAULT_SIM_BLOCK_SIZE: usize = 16;

/// Exact loss probability as a rational in [0, 1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LossProbability {
    pub num: u64,
    pub den: u64,
}

impl LossProbability {
    pub const ZERO: LossProbability = LossProbability { num: 0, den: 1 };
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionWindow {
    pub start: u64,
    pub end: u64,
    pub replicas: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmitEvent {
    pub tick: u64,
}

/// Message-layer fault injections.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FaultKind {
    /// Every message is sent twice (independent loss and delay draws).
    Duplicate,
    /// Even-seq block messages are delayed past their successors.
    Reorder,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_replicas: u32,
    pub seed: u64,
    /// Inclusive (min, max) delivery delay in ticks.
    pub delay_ticks: (u64, u64),
    pub loss_probability: LossProbability,
    #[serde(default)]
    pub partition_windows: Vec<PartitionWindow>,
    pub workload: Vec<SubmitEvent>,
    pub max_ticks: u64,
    #[serde(default = "default_sim_block_size")]
    pub block_size: usize,
    #[serde(default = "default_retransmit_interval")]
    pub retransmit_interval: u64,
    /// Loss-free quiescence drain after `max_ticks`; defaults to
    /// 10 x max delay. Zero disables the drain.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drain_ticks: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fault: Option<FaultKind>,
}

fn default_sim_block_size() -> usize {
    DEFAULT_SIM_BLOCK_SIZE
}

fn default_retransmit_interval() -> u64 {
    DEFAULT_RETRANSMIT_INTERVAL
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), CoopError> {
        if self.n_replicas == 0 {
            return Err(CoopError::InvalidConfig("n_replicas must be positive".to_string()));
        }
        if self.delay_ticks.0 > self.delay_ticks.1 {
            return Err(CoopError::InvalidConfig("delay min exceeds max".to_string()));
        }
        if self.loss_probability.den == 0 || self.loss_probability.num >= self.loss_probability.den
        {
            return Err(CoopError::InvalidConfig("loss must be a rational in [0,1)".to_string()));
        }
        if self.max_ticks == 0 {
            return Err(CoopError::InvalidConfig("max_ticks must be positive".to_string()));
        }
        for w in &self.partition_windows {
            if w.start > w.end || w.end > self.max_ticks {
                return Err(CoopError::InvalidConfig(
                    "partition windows must lie within [0, max_ticks]".to_string(),
                ));
            }
            if w.replicas.iter().any(|r| *r >= self.n_replicas) {
                return Err(CoopError::InvalidConfig("partition names unknown replica".to_string()));
            }
        }
        if self.workload.iter().any(|e| e.tick > self.max_ticks) {
            return Err(CoopError::InvalidConfig("workload extends past max_ticks".to_string()));
        }
        if self.retransmit_interval == 0 {
            return Err(CoopError::InvalidConfig("retransmit interval must be positive".to_string()));
        }
        Ok(())
    }

    fn drain(&self) -> u64 {
        self.drain_ticks.unwrap_or(10 * self.delay_ticks.1.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplicaDivergence {
    pub replica: u32,
    pub first_divergent_seq: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimReport {
    pub delivered_count: u64,
    pub retransmission_count: u64,
    pub converged: bool,
    /// Final head hash per node: index 0 is the sequencer, then replicas.
    pub head_hashes: Vec<Digest32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub divergence_detail: Option<Vec<ReplicaDivergence>>,
}

/// Report plus the final chains, for verification-style tests.
#[derive(Debug, Clone)]
pub struct SimOutcome {
    pub report: SimReport,
    pub sequencer_chain: Vec<Block>,
    pub replica_chains: Vec<Vec<Block>>,
}

#[derive(Debug)]
enum Event {
    Submit,
    FlushSeal,
    DeliverBlock { replica: usize, block: Block },
    DeliverAck { replica: usize, applied: u64 },
    RetransmitCheck,
}

#[derive(Debug, Default)]
struct Replica {
    chain: Vec<Block>,
    buffer: BTreeMap<u64, Block>,
}

impl Replica {
    fn head_hash(&self) -> Digest32 {
        self.chain.last().map(|b| b.block_hash).unwrap_or(Digest32::ZERO)
    }

    /// Applies a received block if it is next in sequence, then drains the
    /// buffer. Stale duplicates are ignored. Returns true if anything applied.
    fn receive(&mut self, block: Block) -> bool {
        let next = self.chain.len() as u64;
        if block.seq < next {
            return false;
        }
        self.buffer.insert(block.seq, block);
        let mut applied = false;
        while let Some(block) = self.buffer.remove(&(self.chain.len() as u64)) {
            let prev = self.head_hash();
            // Linkage is structural: a block that does not extend the head
            // stays buffered forever rather than forking the replica.
            if block.prev_hash != prev {
                self.buffer.insert(block.seq, block);
                break;
            }
            self.chain.push(block);
            applied = true;
        }
        applied
    }
}

/// Run with an observer called after every block application:
/// (tick, replica index, replica chain, sequencer chain).
pub fn run_simulation_observed<F>(config: &SimConfig, mut observe: F) -> Result<SimOutcome, CoopError>
where
    F: FnMut(u64, usize, &[Block], &[Block]),
{
    config.validate()?;
    let end = config.max_ticks + config.drain();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut queue: BTreeMap<(u64, u64), Event> = BTreeMap::new();
    let mut queue_seq: u64 = 0;
    let enqueue = |queue: &mut BTreeMap<(u64, u64), Event>, queue_seq: &mut u64, tick: u64, ev: Event| {
        queue.insert((tick, *queue_seq), ev);
        *queue_seq += 1;
    };

    for e in &config.workload {
        enqueue(&mut queue, &mut queue_seq, e.tick, Event::Submit);
    }
    enqueue(&mut queue, &mut queue_seq, config.max_ticks, Event::FlushSeal);
    let mut t = config.retransmit_interval;
    while t <= end {
        enqueue(&mut queue, &mut queue_seq, t, Event::RetransmitCheck);
        t += config.retransmit_interval;
    }

    let mut ledger = Ledger::new("sim", config.block_size);
    let mut replicas: Vec<Replica> = (0..config.n_replicas).map(|_| Replica::default()).collect();
    let mut acked: Vec<u64> = alloc::vec![0; config.n_replicas as usize];
    let mut delivered_count: u64 = 0;
    let mut retransmission_count: u64 = 0;

    let partitioned = |replica: usize, tick: u64| -> bool {
        config.partition_windows.iter().any(|w| {
            w.start <= tick && tick <= w.end && w.replicas.contains(&(replica as u32))
        })
    };

    // One send attempt: partition check at the send tick, seeded loss (off
    // during the drain), seeded delay, fault adjustments.
    fn send(
        config: &SimConfig,
        rng: &mut ChaCha8Rng,
        queue: &mut BTreeMap<(u64, u64), Event>,
        queue_seq: &mut u64,
        partitioned: &dyn Fn(usize, u64) -> bool,
        tick: u64,
        replica: usize,
        make: &dyn Fn() -> Event,
    ) {
        let copies = if config.fault == Some(FaultKind::Duplicate) { 2 } else { 1 };
        for _ in 0..copies {
            if partitioned(replica, tick) {
                continue;
            }
            let in_drain = tick > config.max_ticks;
            if !in_drain && config.loss_probability.num > 0 {
                let draw = rng.next_u64() % config.loss_probability.den;
                if draw < config.loss_probability.num {
                    continue;
                }
            }
            let (min, max) = config.delay_ticks;
            let mut delay = if max > min { min + rng.next_u64() % (max - min + 1) } else { min };
            let ev = make();
            if config.fault == Some(FaultKind::Reorder) {
                if let Event::DeliverBlock { block, .. } = &ev {
                    if block.seq % 2 == 0 {
                        delay += max + 1;
                    }
                }
            }
            queue.insert((tick + delay, *queue_seq), ev);
            *queue_seq += 1;
        }
    }

    let broadcast = |block: &Block,
                         tick: u64,
                         rng: &mut ChaCha8Rng,
                         queue: &mut BTreeMap<(u64, u64), Event>,
                         queue_seq: &mut u64| {
        for r in 0..config.n_replicas as usize {
            let b = block.clone();
            send(config, rng, queue, queue_seq, &partitioned, tick, r, &|| Event::DeliverBlock {
                replica: r,
                block: b.clone(),
            });
        }
    };

    let mut tx_counter: u64 = 0;
    while let Some((&(tick, seq), _)) = queue.first_key_value() {
        if tick > end {
            break;
        }
        let event = queue.remove(&(tick, seq)).expect("key just observed");
        match event {
            Event::Submit => {
                let tx = SignedTransaction::build_unsigned(
                    "sim:driver",
                    tick,
                    TxPayload::PaymentRecord {
                        amount_minor: tx_counter,
                        currency: "SIM".to_string(),
                        reference: "off:sim-workload".to_string(),
                    },
                );
                tx_counter += 1;
                let before = ledger.blocks().len();
                ledger.append(tx).expect("sim workload is duplicate-free and tick-ordered");
                if ledger.blocks().len() > before {
                    let block = ledger.blocks().last().expect("just sealed").clone();
                    broadcast(&block, tick, &mut rng, &mut queue, &mut queue_seq);
                }
            }
            Event::FlushSeal => {
                if !ledger.open_txs().is_empty() {
                    let block = ledger.seal().expect("open txs present").clone();
                    broadcast(&block, tick, &mut rng, &mut queue, &mut queue_seq);
                }
            }
            Event::DeliverBlock { replica, block } => {
                delivered_count += 1;
                if replicas[replica].receive(block) {
                    observe(tick, replica, &replicas[replica].chain, ledger.blocks());
                    let applied = replicas[replica].chain.len() as u64;
                    send(
                        config,
                        &mut rng,
                        &mut queue,
                        &mut queue_seq,
                        &partitioned,
                        tick,
                        replica,
                        &|| Event::DeliverAck { replica, applied },
                    );
                }
            }
            Event::DeliverAck { replica, applied } => {
                delivered_count += 1;
                acked[replica] = acked[replica].max(applied);
            }
            Event::RetransmitCheck => {
                for r in 0..config.n_replicas as usize {
                    let from = acked[r] as usize;
                    for block in ledger.blocks().iter().skip(from) {
                        retransmission_count += 1;
                        let b = block.clone();
                        send(
                            config,
                            &mut rng,
                            &mut queue,
                            &mut queue_seq,
                            &partitioned,
                            tick,
                            r,
                            &|| Event::DeliverBlock { replica: r, block: b.clone() },
                        );
                    }
                }
            }
        }
    }

    let seq_head = ledger.head_hash();
    let mut head_hashes = Vec::with_capacity(1 + replicas.len());
    head_hashes.push(seq_head);
    let mut divergences = Vec::new();
    for (i, r) in replicas.iter().enumerate() {
        head_hashes.push(r.head_hash());
        let first_divergent = first_divergence(ledger.blocks(), &r.chain);
        if let Some(seq) = first_divergent {
            divergences.push(ReplicaDivergence { replica: i as u32, first_divergent_seq: seq });
        }
    }
    let converged = divergences.is_empty();
    let report = SimReport {
        delivered_count,
        retransmission_count,
        converged,
        head_hashes,
        divergence_detail: if converged { None } else { Some(divergences) },
    };
    Ok(SimOutcome {
        report,
        sequencer_chain: ledger.blocks().to_vec(),
        replica_chains: replicas.into_iter().map(|r| r.chain).collect(),
    })
}

fn first_divergence(sequencer: &[Block], replica: &[Block]) -> Option<u64> {
    for (i, b) in replica.iter().enumerate() {
        match sequencer.get(i) {
            Some(s) if s.block_hash == b.block_hash => {}
            _ => return Some(i as u64),
        }
    }
    if replica.len() < sequencer.len() {
        return Some(replica.len() as u64);
    }
    None
}

/// Runs the simulation and returns the report alone.
pub fn run_simulation(config: &SimConfig) -> Result<SimReport, CoopError> {
    run_simulation_observed(config, |_, _, _, _| {}).map(|o| o.report)
}

/// Runs with a message-layer fault injected.
pub fn inject_fault(config: &SimConfig, kind: FaultKind) -> Result<SimReport, CoopError> {
    let mut c = config.clone();
    c.fault = Some(kind);
    run_simulation(&c)
}

/// Structural verification of every node's final chain.
pub fn verify_everywhere(outcome: &SimOutcome) -> bool {
    verify_blocks(&outcome.sequencer_chain) == ChainCheck::Ok
        && outcome.replica_chains.iter().all(|c| verify_blocks(c) == ChainCheck::Ok)
}
