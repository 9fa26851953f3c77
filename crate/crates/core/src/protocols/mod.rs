//! End-to-end drivers.
//!
//! - [`protocol1`]: trusted post-processing units, one pipeline per module
//!   pair, then extraction over the concatenated keys.
//! - [`protocol2`]: one module pair, post-processing spread over `s` and `r`
//!   units that may be corrupted.
//! - [`protocol3`]: both at once.
//! - [`naive_demo`] and [`alt_protocol`]: the XOR-of-keys counterexample and
//!   the redistribution alternative.
//!
//! Setting [`Scenario::general`] swaps threshold sharing for general
//! adversary structures.

mod distributed;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::adversary::{biggest_set_size, prune_aborted, MixedAdversary, PartySet, Structure};
use crate::distproc::{centralized_pipeline, AbortReason, PipelineOutcome, PipelineParams};
use crate::error::{Error, Result};
use crate::gf2::{toeplitz_seed_len, BitString, Gf2Matrix, ToeplitzHash};
use crate::qkdsim::{generate_session, ModuleBehavior, ProtocolInfo, SessionOutput};
use crate::simnet::{
    ChannelKind, Corruption, CorruptionKind, CorruptionState, Message, Network, PartyId, Payload, StrategyKind,
    Transcript,
};
use crate::vss::SharingScheme;

pub use distributed::{alt_protocol, protocol2, protocol2_session, protocol3};

pub const TAG_QKD_RAW: &str = "qkd/raw";
pub const TAG_QKD_INFO: &str = "qkd/info";
pub const TAG_PARITY_A: &str = "ec/parity-a";
pub const TAG_PARITY_B: &str = "ec/parity-b";
pub const TAG_MISMATCH: &str = "ec/mismatch";
pub const TAG_FRAME: &str = "xt/frame";
pub const TAG_XT_SEED: &str = "xt/seed";
pub const TAG_OUT_KEY: &str = "out/key";
pub const TAG_OUT_SHARE: &str = "out/key-share";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolKind {
    Protocol1,
    Protocol2,
    Protocol3,
    Naive,
    Alt,
}

impl std::str::FromStr for ProtocolKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| Error::InvalidParameter(format!("unknown protocol {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorruptionSpec {
    Passive,
    Active(StrategyKind),
}

/// General structures; any field left out falls back to the threshold.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct GeneralAdversary {
    /// Over module pairs, indexed from 1.
    pub pairs: Option<Structure>,
    pub lab_a: Option<MixedAdversary>,
    pub lab_b: Option<MixedAdversary>,
    /// Drop aborted pairs from Σ before computing the penalty.
    pub prune_aborted: bool,
}

#[derive(Clone, Debug)]
pub struct Scenario {
    /// Module pairs (`n`).
    pub pairs: usize,
    /// Post-processing units per lab (`s`, `r`).
    pub units_a: usize,
    pub units_b: usize,
    /// Corrupted module pairs tolerated.
    pub t: usize,
    pub t_a: usize,
    pub t_b: usize,
    pub pulses: usize,
    pub qber: f64,
    pub p_detect: f64,
    pub params: PipelineParams,
    pub seed: u64,
    pub corruption: Vec<(PartyId, CorruptionSpec)>,
    /// Per pair; missing entries are honest.
    pub modules: Vec<ModuleBehavior>,
    /// Planted memory for memory-attack modules.
    pub memory: Option<BitString>,
    pub general: Option<GeneralAdversary>,
    /// Reject corruption the structures do not allow.
    pub enforce_corruption: bool,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            pairs: 1,
            units_a: 4,
            units_b: 4,
            t: 0,
            t_a: 1,
            t_b: 1,
            pulses: 2000,
            qber: 0.02,
            p_detect: 1.0,
            params: PipelineParams::default(),
            seed: 0,
            corruption: Vec::new(),
            modules: Vec::new(),
            memory: None,
            general: None,
            enforce_corruption: true,
        }
    }
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Scenario {
    pub fn module(&self, pair: usize) -> ModuleBehavior {
        self.modules.get(pair).cloned().unwrap_or_default()
    }

    /// Raw keys of pair `pair` (0-based).
    pub fn session(&self, pair: usize) -> Result<SessionOutput> {
        let qber = self.module(pair).run_qber(self.qber, pair, self.memory.as_ref());
        generate_session(self.pulses, qber, self.p_detect, self.session_seed(pair))
    }

    pub fn session_seed(&self, pair: usize) -> u64 {
        mix(self.seed ^ mix(pair as u64 + 1))
    }

    /// Public Cascade permutation seed for pair `pair`.
    pub fn ec_seed(&self, pair: usize) -> u64 {
        mix(self.seed.rotate_left(17) ^ mix(0xEC00 + pair as u64))
    }

    fn corruption_state(&self) -> CorruptionState {
        let mut c = CorruptionState::honest();
        for (i, m) in (0..self.pairs).map(|i| (i, self.module(i))) {
            if m != ModuleBehavior::Honest {
                c.set(PartyId::qkd_a(i as u32 + 1), Corruption::Passive);
            }
        }
        for (p, spec) in &self.corruption {
            match spec {
                CorruptionSpec::Passive => c.set(*p, Corruption::Passive),
                CorruptionSpec::Active(s) => c.set(*p, Corruption::Active(s.build())),
            }
        }
        for i in 0..self.pairs {
            if let Some(s) = self.module(i).strategy(PartyId::cp_a(1)) {
                c.set(PartyId::qkd_a(i as u32 + 1), Corruption::Active(s.build()));
            }
        }
        c
    }

    /// Corruption kinds as configured, including module behaviors.
    pub fn corruption_kinds(&self) -> BTreeMap<PartyId, CorruptionKind> {
        self.corruption_state().map().clone()
    }

    pub fn lab_scheme(&self, alice: bool) -> Result<SharingScheme> {
        let (units, t, general) = if alice {
            (self.units_a, self.t_a, self.general.as_ref().and_then(|g| g.lab_a.as_ref()))
        } else {
            (self.units_b, self.t_b, self.general.as_ref().and_then(|g| g.lab_b.as_ref()))
        };
        let ids: Vec<PartyId> =
            (1..=units as u32).map(|i| if alice { PartyId::cp_a(i) } else { PartyId::cp_b(i) }).collect();
        let scheme = match general {
            Some(adv) => SharingScheme::general(ids, adv),
            None => SharingScheme::threshold(ids, t),
        };
        scheme.map_err(|e| Error::Infeasible(format!("infeasible adversary for lab {}: {e}", if alice { "A" } else { "B" })))
    }

    fn pair_structure(&self) -> Option<&Structure> {
        self.general.as_ref().and_then(|g| g.pairs.as_ref())
    }

    /// Penalty in pairs, after learning which pairs aborted (0-based).
    pub fn pair_penalty(&self, aborted: &[usize]) -> usize {
        match (self.pair_structure(), &self.general) {
            (Some(sigma), Some(g)) => {
                if g.prune_aborted {
                    let set = PartySet::from_members(self.pairs, &aborted.iter().map(|a| a + 1).collect::<Vec<_>>())
                        .expect("pair indices in range");
                    biggest_set_size(&prune_aborted(sigma, &set))
                } else {
                    biggest_set_size(sigma)
                }
            }
            _ => self.t,
        }
    }

    fn corrupted_pairs(&self, kinds: &BTreeMap<PartyId, CorruptionKind>) -> Vec<usize> {
        (1..=self.pairs)
            .filter(|&i| {
                [PartyId::qkd_a(i as u32), PartyId::qkd_b(i as u32)]
                    .iter()
                    .any(|p| kinds.get(p).is_some_and(|k| *k != CorruptionKind::Honest))
            })
            .collect()
    }

    /// Checks that parties exist and corruption stays within the structures.
    pub fn validate(&self, kind: ProtocolKind) -> Result<()> {
        if self.pairs == 0 {
            return Err(Error::InvalidParameter("need at least one module pair".into()));
        }
        match kind {
            ProtocolKind::Protocol1 => {
                if self.t > self.pairs {
                    return Err(Error::InvalidParameter(format!("t = {} exceeds n = {}", self.t, self.pairs)));
                }
            }
            ProtocolKind::Protocol2 => {
                if self.pairs != 1 {
                    return Err(Error::InvalidParameter("protocol 2 runs a single module pair".into()));
                }
            }
            ProtocolKind::Protocol3 => {
                if self.t >= self.pairs {
                    return Err(Error::InvalidParameter(format!("need t < n, got t = {} n = {}", self.t, self.pairs)));
                }
            }
            ProtocolKind::Naive => {
                if self.units_a != self.pairs || self.units_b != self.pairs {
                    return Err(Error::InvalidParameter("naive construction needs n = s = r".into()));
                }
            }
            ProtocolKind::Alt => {
                if self.units_a != self.units_b || self.pairs != self.units_a {
                    return Err(Error::InvalidParameter("alternative protocol needs n = s = r".into()));
                }
            }
        }
        let distributed = matches!(kind, ProtocolKind::Protocol2 | ProtocolKind::Protocol3 | ProtocolKind::Alt);
        let (sa, sb) = if distributed { (Some(self.lab_scheme(true)?), Some(self.lab_scheme(false)?)) } else { (None, None) };
        if let Some(Structure { .. }) = self.pair_structure() {
            if self.pair_structure().unwrap().universe() != self.pairs {
                return Err(Error::UniverseMismatch(self.pairs, self.pair_structure().unwrap().universe()));
            }
        }
        let roster: BTreeSet<PartyId> = self.roster(kind).into_iter().collect();
        for (p, _) in &self.corruption {
            if !roster.contains(p) {
                return Err(Error::UnknownParty(*p));
            }
        }
        if !self.enforce_corruption {
            return Ok(());
        }
        let kinds = self.corruption_kinds();
        let check_lab = |alice: bool, scheme: &Option<SharingScheme>| -> Result<()> {
            let Some(scheme) = scheme else { return Ok(()) };
            let mut seen = PartySet::empty(scheme.n());
            let mut active = PartySet::empty(scheme.n());
            for (p, k) in &kinds {
                if p.is_cp() && (p.lab() == crate::simnet::Lab::Alice) == alice {
                    let i = scheme.index_of(*p).ok_or(Error::UnknownParty(*p))?;
                    seen.insert(i);
                    if *k == CorruptionKind::Active {
                        active.insert(i);
                    }
                }
            }
            let general = self.general.as_ref().and_then(|g| if alice { g.lab_a.as_ref() } else { g.lab_b.as_ref() });
            let ok = match general {
                Some(adv) => adv.permits(&seen, &active),
                None => seen.len() <= if alice { self.t_a } else { self.t_b },
            };
            if ok {
                Ok(())
            } else {
                Err(Error::IllegalCorruption(format!("corrupted units {seen:?} exceed the lab {} structure", if alice { "A" } else { "B" })))
            }
        };
        check_lab(true, &sa)?;
        check_lab(false, &sb)?;
        if matches!(kind, ProtocolKind::Protocol1 | ProtocolKind::Protocol3) {
            let bad = self.corrupted_pairs(&kinds);
            let ok = match self.pair_structure() {
                Some(sigma) => sigma.contains(&PartySet::from_members(self.pairs, &bad)?),
                None => bad.len() <= self.t,
            };
            if !ok {
                return Err(Error::IllegalCorruption(format!("corrupted pairs {bad:?} exceed the tolerated set")));
            }
        }
        if kind == ProtocolKind::Protocol2 && !self.corrupted_pairs(&kinds).is_empty() {
            return Err(Error::IllegalCorruption("protocol 2 assumes an honest module pair".into()));
        }
        Ok(())
    }

    /// Every party taking part in `kind`.
    pub fn roster(&self, kind: ProtocolKind) -> Vec<PartyId> {
        let mut r: Vec<PartyId> = (1..=self.pairs as u32).flat_map(|i| [PartyId::qkd_a(i), PartyId::qkd_b(i)]).collect();
        let (sa, sb) = match kind {
            ProtocolKind::Protocol1 => (1, 1),
            _ => (self.units_a, self.units_b),
        };
        r.extend((1..=sa as u32).map(PartyId::cp_a));
        r.extend((1..=sb as u32).map(PartyId::cp_b));
        r.push(PartyId::km_a());
        r.push(PartyId::km_b());
        r
    }

    pub fn network(&self, kind: ProtocolKind) -> Network {
        Network::new(self.seed, self.roster(kind), self.corruption_state())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairReport {
    /// 1-based module pair.
    pub pair: usize,
    pub abort: Option<AbortReason>,
    pub n_key: usize,
    pub est_rate: Option<f64>,
    pub leak: usize,
    pub batch_sizes: Vec<usize>,
    pub out_len: usize,
    #[serde(skip)]
    pub hv_seed: Option<BitString>,
    #[serde(skip)]
    pub hp_seed: Option<BitString>,
}

impl PairReport {
    fn from_pipeline(pair: usize, p: &PipelineOutcome) -> Self {
        Self {
            pair,
            abort: p.abort,
            n_key: p.n_key,
            est_rate: p.est_rate,
            leak: p.leak,
            batch_sizes: p.batch_sizes.clone(),
            out_len: if p.aborted() { 0 } else { p.out_len },
            hv_seed: p.hv_seed.clone(),
            hp_seed: p.hp_seed.clone(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ProtocolOutcome {
    pub protocol: ProtocolKind,
    pub abort: Option<AbortReason>,
    /// What the key management of each lab reconstructed.
    pub key_a: Option<BitString>,
    pub key_b: Option<BitString>,
    pub pairs: Vec<PairReport>,
    /// Surviving pairs and their common key length.
    pub m: usize,
    pub n_len: usize,
    /// Pair penalty applied.
    pub t_used: usize,
    pub final_len: usize,
    pub leak_ec: usize,
    /// Every honest unit reached the same decisions.
    pub honest_consistent: bool,
    /// Alternative protocol only: `s·N / final_len`.
    pub repeat_ratio: Option<f64>,
    pub transcript: Transcript,
    pub rounds: u64,
}

impl ProtocolOutcome {
    pub fn success(&self) -> bool {
        self.abort.is_none()
    }

    pub fn keys_agree(&self) -> bool {
        matches!((&self.key_a, &self.key_b), (Some(a), Some(b)) if a == b)
    }
}

pub fn run(sc: &Scenario, kind: ProtocolKind) -> Result<ProtocolOutcome> {
    match kind {
        ProtocolKind::Protocol1 => protocol1(sc),
        ProtocolKind::Protocol2 => protocol2(sc),
        ProtocolKind::Protocol3 => protocol3(sc),
        ProtocolKind::Naive => naive_demo(sc),
        ProtocolKind::Alt => alt_protocol(sc),
    }
}

/// Concatenates equal-length keys and hashes them to `(M - t)·N` bits.
pub fn protocol1_extract(keys: &[BitString], t: usize, seed: &BitString) -> Result<BitString> {
    let n_len = keys.first().map_or(0, BitString::len);
    if keys.iter().any(|k| k.len() != n_len) {
        return Err(Error::InvalidParameter("per-pair keys differ in length".into()));
    }
    let m = keys.len();
    let out = m.saturating_sub(t) * n_len;
    ToeplitzHash::sample(out, m * n_len, seed)?.apply(&BitString::concat(keys))
}

/// Length of the extractor seed for `m` keys of `n_len` bits and penalty `t`.
pub fn extractor_seed_len(m: usize, n_len: usize, t: usize) -> usize {
    toeplitz_seed_len(m.saturating_sub(t) * n_len, m * n_len)
}

pub(crate) fn deliver(net: &mut Network, ids: &[PartyId]) -> BTreeMap<PartyId, Vec<Message>> {
    net.advance();
    ids.iter().map(|&p| (p, net.take_inbox(p))).collect()
}

pub(crate) fn bits_from<'a>(inbox: &'a [Message], session: u32, tag: &str, sender: PartyId) -> Option<&'a BitString> {
    inbox
        .iter()
        .filter(|m| m.session == session && m.tag == tag && m.sender == sender)
        .find_map(|m| match &m.payload {
            Payload::Bits(b) => Some(b),
            Payload::Seed { seed, .. } => Some(seed),
            _ => None,
        })
}

/// One trusted pipeline run between `cp_a` and `cp_b`, with the modules
/// delivering raw data first and every public value replayed on the network.
fn trusted_pair(
    net: &mut Network,
    sc: &Scenario,
    pair: usize,
    cp_a: PartyId,
    cp_b: PartyId,
    params: &PipelineParams,
) -> Result<PipelineOutcome> {
    let session = sc.session(pair)?;
    let (qa, qb) = (PartyId::qkd_a(pair as u32 + 1), PartyId::qkd_b(pair as u32 + 1));
    let s = net.new_session();
    net.send(qa, cp_a, ChannelKind::Secure, s, TAG_QKD_RAW, Payload::Bits(session.raw_a.clone()))?;
    net.send(qa, cp_a, ChannelKind::Secure, s, TAG_QKD_INFO, Payload::Bits(session.info_a.to_bits()))?;
    net.send(qb, cp_b, ChannelKind::Secure, s, TAG_QKD_RAW, Payload::Bits(session.raw_b.clone()))?;
    net.send(qb, cp_b, ChannelKind::Secure, s, TAG_QKD_INFO, Payload::Bits(session.info_b.to_bits()))?;
    let inbox = deliver(net, &[cp_a, cp_b]);
    let take = |cp: PartyId, q: PartyId, tag: &str| bits_from(&inbox[&cp], s, tag, q).cloned();
    let info = |b: Option<BitString>| b.map(|b| ProtocolInfo::from_bits(&b)).transpose();
    let received = match (
        take(cp_a, qa, TAG_QKD_RAW),
        info(take(cp_a, qa, TAG_QKD_INFO))?,
        take(cp_b, qb, TAG_QKD_RAW),
        info(take(cp_b, qb, TAG_QKD_INFO))?,
    ) {
        (Some(raw_a), Some(info_a), Some(raw_b), Some(info_b))
            if raw_a.len() == info_a.len() && raw_b.len() == info_b.len() && info_a.len() == info_b.len() =>
        {
            SessionOutput { raw_a, raw_b, info_a, info_b }
        }
        _ => SessionOutput {
            raw_a: BitString::zeros(0),
            raw_b: BitString::zeros(0),
            info_a: ProtocolInfo { basis: BitString::zeros(0), detected: BitString::zeros(0) },
            info_b: ProtocolInfo { basis: BitString::zeros(0), detected: BitString::zeros(0) },
        },
    };
    let out = centralized_pipeline(&received, params, sc.ec_seed(pair), |len| BitString::random(net.rng(cp_a), len))?;
    let s = net.new_session();
    for d in &out.disclosures {
        let (from, to) = if d.from_alice { (cp_a, cp_b) } else { (cp_b, cp_a) };
        let payload = if d.tag.ends_with("/seed") {
            Payload::Seed { out_len: 0, in_len: 0, seed: d.bits.clone() }
        } else {
            Payload::Bits(d.bits.clone())
        };
        net.send(from, to, ChannelKind::Authenticated, s, d.tag, payload)?;
        net.advance();
    }
    net.take_inbox(cp_a);
    net.take_inbox(cp_b);
    Ok(out)
}

fn survivors_of(reports: &[PairReport]) -> (Vec<usize>, usize) {
    let alive: Vec<usize> = reports.iter().filter(|r| r.abort.is_none()).map(|r| r.pair - 1).collect();
    let n_len = alive.iter().map(|&i| reports[i].out_len).min().unwrap_or(0);
    (alive, n_len)
}

/// Keys reaching a key manager as whole strings, XORed together.
fn km_bits(inbox: &[Message], session: u32) -> Option<BitString> {
    let mut acc: Option<BitString> = None;
    for m in inbox.iter().filter(|m| m.session == session && m.tag == TAG_OUT_KEY) {
        if let Payload::Bits(b) = &m.payload {
            acc = Some(match acc {
                None => b.clone(),
                Some(a) if a.len() == b.len() => a.xor(b).expect("same length"),
                Some(_) => return None,
            });
        }
    }
    acc
}

fn total_leak(reports: &[PairReport]) -> usize {
    reports.iter().map(|r| r.leak).sum()
}

pub fn protocol1(sc: &Scenario) -> Result<ProtocolOutcome> {
    sc.validate(ProtocolKind::Protocol1)?;
    let mut net = sc.network(ProtocolKind::Protocol1);
    let (cp_a, cp_b) = (PartyId::cp_a(1), PartyId::cp_b(1));
    let params = sc.params.split_budget(sc.pairs);
    let mut reports = Vec::new();
    let mut keys = Vec::new();
    for i in 0..sc.pairs {
        let out = trusted_pair(&mut net, sc, i, cp_a, cp_b, &params)?;
        reports.push(PairReport::from_pipeline(i + 1, &out));
        keys.push((out.key_a, out.key_b));
    }
    let (alive, n_len) = survivors_of(&reports);
    let aborted: Vec<usize> = (0..sc.pairs).filter(|i| !alive.contains(i)).collect();
    let t_used = sc.pair_penalty(&aborted);
    let m = alive.len();
    let final_len = m.saturating_sub(t_used) * n_len;
    let mut outcome = ProtocolOutcome {
        protocol: ProtocolKind::Protocol1,
        abort: None,
        key_a: None,
        key_b: None,
        leak_ec: total_leak(&reports),
        pairs: reports,
        m,
        n_len,
        t_used,
        final_len,
        honest_consistent: true,
        repeat_ratio: None,
        transcript: Transcript::default(),
        rounds: 0,
    };
    if final_len == 0 {
        outcome.abort = Some(AbortReason::ZeroLength);
        outcome.final_len = 0;
    } else {
        let seed = BitString::random(net.rng(cp_a), extractor_seed_len(m, n_len, t_used));
        let s = net.new_session();
        let frame: Vec<u32> = alive.iter().map(|&i| i as u32 + 1).collect();
        net.send(cp_a, cp_b, ChannelKind::Authenticated, s, TAG_FRAME, Payload::Indices(frame))?;
        let (out_len, in_len) = (final_len as u32, (m * n_len) as u32);
        net.send(cp_a, cp_b, ChannelKind::Authenticated, s, TAG_XT_SEED, Payload::Seed { out_len, in_len, seed: seed.clone() })?;
        let inbox = deliver(&mut net, &[cp_b]);
        let seed_b = bits_from(&inbox[&cp_b], s, TAG_XT_SEED, cp_a).cloned().unwrap_or_else(|| seed.clone());
        let pick = |side: usize| -> Vec<BitString> {
            alive.iter().map(|&i| if side == 0 { &keys[i].0 } else { &keys[i].1 }).map(|k| k.truncated(n_len)).collect()
        };
        let ka = protocol1_extract(&pick(0), t_used, &seed)?;
        let kb = protocol1_extract(&pick(1), t_used, &seed_b)?;
        let s = net.new_session();
        net.send(cp_a, PartyId::km_a(), ChannelKind::Secure, s, TAG_OUT_KEY, Payload::Bits(ka))?;
        net.send(cp_b, PartyId::km_b(), ChannelKind::Secure, s, TAG_OUT_KEY, Payload::Bits(kb))?;
        let inbox = deliver(&mut net, &[PartyId::km_a(), PartyId::km_b()]);
        outcome.key_a = km_bits(&inbox[&PartyId::km_a()], s);
        outcome.key_b = km_bits(&inbox[&PartyId::km_b()], s);
    }
    outcome.rounds = net.round();
    outcome.transcript = net.into_transcript();
    Ok(outcome)
}

/// Each group `i` (module pair `i`, units `CP_Ai`, `CP_Bi`) distils a key on
/// its own; the key managers XOR the group keys.
pub fn naive_demo(sc: &Scenario) -> Result<ProtocolOutcome> {
    sc.validate(ProtocolKind::Naive)?;
    let mut net = sc.network(ProtocolKind::Naive);
    let params = sc.params.split_budget(sc.pairs);
    let mut reports = Vec::new();
    let mut keys = Vec::new();
    for i in 0..sc.pairs {
        let (cp_a, cp_b) = (PartyId::cp_a(i as u32 + 1), PartyId::cp_b(i as u32 + 1));
        let out = trusted_pair(&mut net, sc, i, cp_a, cp_b, &params)?;
        reports.push(PairReport::from_pipeline(i + 1, &out));
        keys.push((out.key_a, out.key_b));
    }
    let (alive, n_len) = survivors_of(&reports);
    let s = net.new_session();
    for &i in &alive {
        let (cp_a, cp_b) = (PartyId::cp_a(i as u32 + 1), PartyId::cp_b(i as u32 + 1));
        net.send(cp_a, PartyId::km_a(), ChannelKind::Secure, s, TAG_OUT_KEY, Payload::Bits(keys[i].0.truncated(n_len)))?;
        net.send(cp_b, PartyId::km_b(), ChannelKind::Secure, s, TAG_OUT_KEY, Payload::Bits(keys[i].1.truncated(n_len)))?;
    }
    let inbox = deliver(&mut net, &[PartyId::km_a(), PartyId::km_b()]);
    let key_a = km_bits(&inbox[&PartyId::km_a()], s);
    let key_b = km_bits(&inbox[&PartyId::km_b()], s);
    let abort = if alive.is_empty() || n_len == 0 { Some(AbortReason::ZeroLength) } else { None };
    Ok(ProtocolOutcome {
        protocol: ProtocolKind::Naive,
        abort,
        key_a,
        key_b,
        leak_ec: total_leak(&reports),
        pairs: reports,
        m: alive.len(),
        n_len,
        t_used: 0,
        final_len: if abort.is_some() { 0 } else { n_len },
        honest_consistent: true,
        repeat_ratio: None,
        rounds: net.round(),
        transcript: net.into_transcript(),
    })
}

/// Outcome of checking that the extractor output is uniform given the
/// corrupted slots, over every seed of the extractor.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UniformityCensus {
    pub seeds: usize,
    /// Seeds whose honest-slot block has rank below the output length.
    pub rank_deficient: usize,
    /// Full-rank seeds where some adversarial state gave a non-uniform output.
    pub failures: usize,
}

/// Enumerates every extractor seed for `m` slots of `n_len` bits, every
/// value of the corrupted slots and every value of the honest ones.
pub fn extractor_uniformity(m: usize, n_len: usize, t: usize, corrupted: &[usize]) -> Result<UniformityCensus> {
    let in_len = m * n_len;
    let out_len = m.saturating_sub(t) * n_len;
    let seed_len = toeplitz_seed_len(out_len, in_len);
    if seed_len > 16 || in_len > 16 {
        return Err(Error::InvalidParameter("enumeration too large".into()));
    }
    let honest_cols: Vec<usize> =
        (0..m).filter(|s| !corrupted.contains(s)).flat_map(|s| (s * n_len)..((s + 1) * n_len)).collect();
    let bad_cols: Vec<usize> = (0..in_len).filter(|c| !honest_cols.contains(c)).collect();
    let mut census = UniformityCensus { seeds: 0, rank_deficient: 0, failures: 0 };
    for sv in 0..(1u64 << seed_len) {
        census.seeds += 1;
        let h = ToeplitzHash::sample(out_len, in_len, &BitString::from_u64(sv, seed_len))?;
        let mat: Gf2Matrix = h.to_matrix();
        if mat.select_columns(&honest_cols).rank() < out_len {
            census.rank_deficient += 1;
            continue;
        }
        let mut uniform = true;
        for adv in 0..(1u64 << bad_cols.len()) {
            let mut counts = BTreeMap::new();
            for hon in 0..(1u64 << honest_cols.len()) {
                let mut x = BitString::zeros(in_len);
                for (k, &c) in bad_cols.iter().enumerate() {
                    x.set(c, adv >> k & 1 == 1);
                }
                for (k, &c) in honest_cols.iter().enumerate() {
                    x.set(c, hon >> k & 1 == 1);
                }
                *counts.entry(h.apply(&x)?).or_insert(0usize) += 1;
            }
            let expected = (1usize << honest_cols.len()) >> out_len;
            if counts.len() != 1 << out_len || counts.values().any(|&c| c != expected) {
                uniform = false;
            }
        }
        census.failures += !uniform as usize;
    }
    Ok(census)
}

/// Baseline arm of the memory attack: a planted memory leaks through which
/// later sessions of a single module pair abort.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryDemo {
    pub planted: BitString,
    pub aborted: Vec<bool>,
    pub recovered: BitString,
    pub bits_recovered: usize,
}

/// Runs session 0 honestly, plants the first `bits` bits of its key, then
/// runs `bits` attacked sessions through the trusted pipeline.
pub fn memory_attack_demo(sc: &Scenario, bits: usize, permutation: &[usize]) -> Result<MemoryDemo> {
    let first = Scenario { pairs: 1, modules: vec![ModuleBehavior::Honest], ..sc.clone() };
    let params = sc.params.clone();
    let mut rng_seed = first.seed;
    let mut next_seed = |len: usize| {
        rng_seed = mix(rng_seed);
        let mut r = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(rng_seed);
        BitString::random(&mut r, len)
    };
    let base = centralized_pipeline(&first.session(0)?, &params, first.ec_seed(0), &mut next_seed)?;
    if base.aborted() || base.key_a.len() < bits {
        return Err(Error::InvalidParameter("first session produced too short a key to plant".into()));
    }
    let planted = base.key_a.truncated(bits);
    let behavior = ModuleBehavior::MemoryAttack { permutation: permutation.to_vec() };
    let mut aborted = Vec::new();
    for run in 0..bits.max(permutation.len()) {
        let qber = behavior.run_qber(sc.qber, run, Some(&planted));
        let session = generate_session(sc.pulses, qber, sc.p_detect, first.session_seed(run + 1))?;
        let out = centralized_pipeline(&session, &params, first.ec_seed(run + 1), &mut next_seed)?;
        aborted.push(out.aborted());
    }
    let recovered = crate::qkdsim::eve_decode_abort_pattern(&aborted, permutation);
    let bits_recovered = recovered.iter().zip(planted.iter()).filter(|(a, b)| a == b).count();
    Ok(MemoryDemo { planted, aborted, recovered, bits_recovered })
}

#[cfg(test)]
mod tests;
