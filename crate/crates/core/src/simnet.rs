//! Synchronous round-based message passing with a corruption controller.
//!
//! Messages sent in round `k` are delivered at the start of round `k + 1`.
//! Every send is appended to the [`Transcript`] at send time. Active parties
//! never put a message on the wire directly: whatever their protocol code
//! proposes is handed to their [`Strategy`], and only the strategy's output is
//! sent, marked [`Origin::Adversary`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::gf2::BitString;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    AliceCp,
    BobCp,
    AliceQkd,
    BobQkd,
    /// Stand-alone VSS dealer, located in Alice's lab.
    Dealer,
    /// Key-management endpoint that receives final key shares.
    AliceKm,
    BobKm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Lab {
    Alice,
    Bob,
}

impl Side {
    pub fn lab(self) -> Lab {
        match self {
            Side::AliceCp | Side::AliceQkd | Side::Dealer | Side::AliceKm => Lab::Alice,
            Side::BobCp | Side::BobQkd | Side::BobKm => Lab::Bob,
        }
    }

    fn label(self) -> &'static str {
        match self {
            Side::AliceCp => "CP_A",
            Side::BobCp => "CP_B",
            Side::AliceQkd => "QKD_A",
            Side::BobQkd => "QKD_B",
            Side::Dealer => "D",
            Side::AliceKm => "KM_A",
            Side::BobKm => "KM_B",
        }
    }

    fn code(self) -> u64 {
        self as u64
    }
}

/// A party, indices start at 1. Displays as `CP_A2`, `QKD_B1`, `KM_A1`, `D1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PartyId {
    pub side: Side,
    pub index: u32,
}

impl PartyId {
    pub const fn new(side: Side, index: u32) -> Self {
        Self { side, index }
    }

    pub const fn cp_a(i: u32) -> Self {
        Self::new(Side::AliceCp, i)
    }

    pub const fn cp_b(i: u32) -> Self {
        Self::new(Side::BobCp, i)
    }

    pub const fn qkd_a(i: u32) -> Self {
        Self::new(Side::AliceQkd, i)
    }

    pub const fn qkd_b(i: u32) -> Self {
        Self::new(Side::BobQkd, i)
    }

    pub const fn dealer() -> Self {
        Self::new(Side::Dealer, 1)
    }

    pub const fn km_a() -> Self {
        Self::new(Side::AliceKm, 1)
    }

    pub const fn km_b() -> Self {
        Self::new(Side::BobKm, 1)
    }

    pub fn lab(&self) -> Lab {
        self.side.lab()
    }

    pub fn is_cp(&self) -> bool {
        matches!(self.side, Side::AliceCp | Side::BobCp)
    }

    pub fn is_qkd(&self) -> bool {
        matches!(self.side, Side::AliceQkd | Side::BobQkd)
    }

    pub fn is_km(&self) -> bool {
        matches!(self.side, Side::AliceKm | Side::BobKm)
    }

    fn stream(&self) -> u64 {
        (self.side.code() << 32) | u64::from(self.index)
    }
}

impl fmt::Display for PartyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.side.label(), self.index)
    }
}

impl FromStr for PartyId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        const SIDES: [Side; 7] = [
            Side::AliceQkd,
            Side::BobQkd,
            Side::AliceCp,
            Side::BobCp,
            Side::AliceKm,
            Side::BobKm,
            Side::Dealer,
        ];
        for side in SIDES {
            if let Some(rest) = s.strip_prefix(side.label()) {
                if let Ok(index) = rest.parse::<u32>() {
                    if index >= 1 {
                        return Ok(Self { side, index });
                    }
                }
            }
        }
        Err(Error::Malformed(format!("unknown party name {s:?}")))
    }
}

impl Serialize for PartyId {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PartyId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelKind {
    /// Secrecy and authenticity; intra-lab only.
    Secure,
    /// Authenticity only; Eve reads it.
    Authenticated,
    /// Ideal broadcast to every registered party.
    Broadcast,
}

/// Which point-to-point edges exist.
///
/// Secure edges stay inside a lab: QKD module to CP unit, CP unit to CP unit,
/// dealer to and from CP units, CP unit to key management. Authenticated edges
/// join any two CP units (or a CP unit and the dealer), across labs included.
pub fn edge_allowed(sender: PartyId, receiver: PartyId, channel: ChannelKind) -> bool {
    use Side::*;
    if sender == receiver {
        return false;
    }
    match channel {
        ChannelKind::Broadcast => false,
        ChannelKind::Secure => {
            if sender.lab() != receiver.lab() {
                return false;
            }
            matches!(
                (sender.side, receiver.side),
                (AliceQkd, AliceCp)
                    | (BobQkd, BobCp)
                    | (AliceCp, AliceCp)
                    | (BobCp, BobCp)
                    | (Dealer, AliceCp)
                    | (AliceCp, Dealer)
                    | (AliceCp, AliceKm)
                    | (BobCp, BobKm)
            )
        }
        ChannelKind::Authenticated => {
            let cp_like = |p: PartyId| p.is_cp() || p.side == Dealer;
            cp_like(sender) && cp_like(receiver)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Payload {
    Bits(BitString),
    /// Values keyed by share (or slot) index.
    Shares(Vec<(u32, BitString)>),
    Flag(bool),
    Indices(Vec<u32>),
    /// A Toeplitz hash description.
    Seed { out_len: u32, in_len: u32, seed: BitString },
}

impl Payload {
    /// Total number of data bits carried.
    pub fn bit_len(&self) -> usize {
        match self {
            Payload::Bits(b) => b.len(),
            Payload::Shares(v) => v.iter().map(|(_, b)| b.len()).sum(),
            Payload::Seed { seed, .. } => seed.len(),
            Payload::Flag(_) | Payload::Indices(_) => 0,
        }
    }

    pub fn carries_bits(&self) -> bool {
        matches!(self, Payload::Bits(_) | Payload::Shares(_) | Payload::Seed { .. })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Honest,
    Adversary,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub round: u64,
    pub session: u32,
    pub tag: String,
    pub sender: PartyId,
    /// `None` for broadcasts.
    pub receiver: Option<PartyId>,
    pub channel: ChannelKind,
    pub origin: Origin,
    pub payload: Payload,
}

impl Message {
    pub fn involves(&self, p: PartyId) -> bool {
        self.sender == p || self.receiver == Some(p) || self.receiver.is_none()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorruptionKind {
    Honest,
    Passive,
    Active,
}

/// Append-only message log.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Transcript {
    messages: Vec<Message>,
}

impl Transcript {
    pub fn messages(&self) -> &[Message] {
        &self.messages
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }

    fn push(&mut self, m: Message) {
        self.messages.push(m);
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for m in &self.messages {
            serde_json::to_writer(&mut w, m)?;
            w.write_all(b"\n").map_err(|e| Error::Malformed(e.to_string()))?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = Vec::new();
        self.write_jsonl(&mut out).expect("writing to memory");
        String::from_utf8(out).expect("json is utf-8")
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self> {
        let mut messages = Vec::new();
        for (k, line) in r.lines().enumerate() {
            let line = line.map_err(|e| Error::Malformed(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let m: Message = serde_json::from_str(&line)
                .map_err(|e| Error::Malformed(format!("line {}: {e}", k + 1)))?;
            if let Some(prev) = messages.last() {
                let prev: &Message = prev;
                if m.round < prev.round {
                    return Err(Error::Malformed(format!("line {}: round goes backwards", k + 1)));
                }
            }
            messages.push(m);
        }
        Ok(Self { messages })
    }

    pub fn count_by_channel(&self) -> BTreeMap<ChannelKind, usize> {
        let mut out = BTreeMap::new();
        for m in &self.messages {
            *out.entry(m.channel).or_insert(0) += 1;
        }
        out
    }
}

/// Everything Eve observes: public traffic plus all traffic of corrupted parties.
pub fn eve_view<'a>(transcript: &'a Transcript, corruption: &BTreeMap<PartyId, CorruptionKind>) -> Vec<&'a Message> {
    let corrupted = |p: &PartyId| corruption.get(p).is_some_and(|k| *k != CorruptionKind::Honest);
    transcript
        .messages
        .iter()
        .filter(|m| {
            m.channel != ChannelKind::Secure
                || corrupted(&m.sender)
                || m.receiver.as_ref().is_some_and(corrupted)
        })
        .collect()
}

/// A message a party wants to send, before the network stamps it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Outgoing {
    pub receiver: Option<PartyId>,
    pub channel: ChannelKind,
    pub tag: String,
    pub session: u32,
    pub payload: Payload,
}

/// Read access handed to strategies.
pub struct AdversaryView<'a> {
    pub round: u64,
    pub sender: PartyId,
    pub transcript: &'a Transcript,
    pub corruption: &'a BTreeMap<PartyId, CorruptionKind>,
}

impl AdversaryView<'_> {
    pub fn eve_view(&self) -> Vec<&Message> {
        eve_view(self.transcript, self.corruption)
    }
}

/// Behavior of an actively corrupted party.
pub trait Strategy: Send {
    /// Maps what the protocol code would send to what actually goes out.
    fn intercept(&mut self, view: &AdversaryView<'_>, proposed: Outgoing) -> Vec<Outgoing>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BitBehavior {
    Correct,
    Flip,
    Zero,
    One,
}

impl BitBehavior {
    pub const ALL: [BitBehavior; 4] = [BitBehavior::Correct, BitBehavior::Flip, BitBehavior::Zero, BitBehavior::One];

    pub fn apply(self, b: &BitString) -> BitString {
        match self {
            BitBehavior::Correct => b.clone(),
            BitBehavior::Flip => b.xor(&BitString::ones(b.len())).expect("same length"),
            BitBehavior::Zero => BitString::zeros(b.len()),
            BitBehavior::One => BitString::ones(b.len()),
        }
    }

    pub fn apply_payload(self, p: &Payload) -> Payload {
        match p {
            Payload::Bits(b) => Payload::Bits(self.apply(b)),
            Payload::Shares(v) => Payload::Shares(v.iter().map(|(j, b)| (*j, self.apply(b))).collect()),
            Payload::Seed { out_len, in_len, seed } => Payload::Seed {
                out_len: *out_len,
                in_len: *in_len,
                seed: self.apply(seed),
            },
            other => other.clone(),
        }
    }
}

/// Built-in strategies, selectable from configuration.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    Correct,
    /// Complements every data bit sent; control flags are untouched.
    FlipAll,
    /// Sends nothing.
    Silent,
    ConstZero,
    ConstOne,
    /// As dealer, flips the deals addressed to these parties.
    InconsistentDealer { victims: Vec<PartyId> },
    /// As dealer, never answers complaints.
    RefuseBroadcast,
    /// The k-th data-carrying message gets the k-th behavior; later ones are correct.
    Script(Vec<BitBehavior>),
}

impl StrategyKind {
    pub fn build(&self) -> Box<dyn Strategy> {
        Box::new(BuiltinStrategy { kind: self.clone(), sent: 0 })
    }
}

struct BuiltinStrategy {
    kind: StrategyKind,
    sent: usize,
}

pub const TAG_DEAL: &str = "vss/deal";
pub const TAG_ANSWER: &str = "vss/answer";

impl Strategy for BuiltinStrategy {
    fn intercept(&mut self, _view: &AdversaryView<'_>, mut out: Outgoing) -> Vec<Outgoing> {
        let behavior = match &self.kind {
            StrategyKind::Correct => BitBehavior::Correct,
            StrategyKind::FlipAll => BitBehavior::Flip,
            StrategyKind::ConstZero => BitBehavior::Zero,
            StrategyKind::ConstOne => BitBehavior::One,
            StrategyKind::Silent => return Vec::new(),
            StrategyKind::InconsistentDealer { victims } => {
                if out.tag == TAG_DEAL && out.receiver.is_some_and(|r| victims.contains(&r)) {
                    BitBehavior::Flip
                } else {
                    BitBehavior::Correct
                }
            }
            StrategyKind::RefuseBroadcast => {
                if out.tag == TAG_ANSWER {
                    return Vec::new();
                }
                BitBehavior::Correct
            }
            StrategyKind::Script(script) => {
                if !out.payload.carries_bits() {
                    BitBehavior::Correct
                } else {
                    let b = script.get(self.sent).copied().unwrap_or(BitBehavior::Correct);
                    self.sent += 1;
                    b
                }
            }
        };
        out.payload = behavior.apply_payload(&out.payload);
        vec![out]
    }
}

pub enum Corruption {
    Passive,
    Active(Box<dyn Strategy>),
}

impl fmt::Debug for Corruption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Corruption::Passive => f.write_str("Passive"),
            Corruption::Active(_) => f.write_str("Active(..)"),
        }
    }
}

/// Who is corrupted and how. Parties not listed are honest.
#[derive(Default, Debug)]
pub struct CorruptionState {
    kinds: BTreeMap<PartyId, CorruptionKind>,
    strategies: BTreeMap<PartyId, Box<dyn Strategy>>,
}

impl fmt::Debug for dyn Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Strategy")
    }
}

impl CorruptionState {
    pub fn honest() -> Self {
        Self::default()
    }

    pub fn with(mut self, party: PartyId, c: Corruption) -> Self {
        self.set(party, c);
        self
    }

    pub fn set(&mut self, party: PartyId, c: Corruption) {
        match c {
            Corruption::Passive => {
                self.kinds.insert(party, CorruptionKind::Passive);
                self.strategies.remove(&party);
            }
            Corruption::Active(s) => {
                self.kinds.insert(party, CorruptionKind::Active);
                self.strategies.insert(party, s);
            }
        }
    }

    pub fn kind(&self, party: PartyId) -> CorruptionKind {
        self.kinds.get(&party).copied().unwrap_or(CorruptionKind::Honest)
    }

    pub fn is_honest(&self, party: PartyId) -> bool {
        self.kind(party) == CorruptionKind::Honest
    }

    pub fn map(&self) -> &BTreeMap<PartyId, CorruptionKind> {
        &self.kinds
    }

    pub fn corrupted(&self) -> impl Iterator<Item = PartyId> + '_ {
        self.kinds
            .iter()
            .filter(|(_, k)| **k != CorruptionKind::Honest)
            .map(|(p, _)| *p)
    }
}

/// Per-party protocol logic, stepped once per round by [`Network::run_rounds`].
pub trait Party {
    fn id(&self) -> PartyId;
    fn step(&mut self, ctx: &mut RoundCtx<'_>) -> Result<Step>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Step {
    Continue,
    Halted,
}

/// What a party sees during its step.
pub struct RoundCtx<'a> {
    net: &'a mut Network,
    id: PartyId,
    /// Index of the round within the current `run_rounds` call.
    pub local_round: u64,
    pub inbox: Vec<Message>,
}

impl RoundCtx<'_> {
    pub fn id(&self) -> PartyId {
        self.id
    }

    pub fn send(&mut self, to: PartyId, channel: ChannelKind, session: u32, tag: &str, payload: Payload) -> Result<()> {
        self.net.send(self.id, to, channel, session, tag, payload)
    }

    pub fn broadcast(&mut self, session: u32, tag: &str, payload: Payload) -> Result<()> {
        self.net.broadcast(self.id, session, tag, payload)
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        self.net.rng(self.id)
    }
}

pub struct Network {
    roster: BTreeSet<PartyId>,
    corruption: CorruptionState,
    transcript: Transcript,
    round: u64,
    next_session: u32,
    pending: Vec<Message>,
    inboxes: BTreeMap<PartyId, Vec<Message>>,
    rngs: BTreeMap<PartyId, ChaCha8Rng>,
}

impl Network {
    pub fn new<I: IntoIterator<Item = PartyId>>(seed: u64, roster: I, corruption: CorruptionState) -> Self {
        let roster: BTreeSet<PartyId> = roster.into_iter().collect();
        let rngs = roster
            .iter()
            .map(|p| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(p.stream());
                (*p, rng)
            })
            .collect();
        Self {
            roster,
            corruption,
            transcript: Transcript::default(),
            round: 0,
            next_session: 0,
            pending: Vec::new(),
            inboxes: BTreeMap::new(),
            rngs,
        }
    }

    pub fn roster(&self) -> &BTreeSet<PartyId> {
        &self.roster
    }

    pub fn corruption(&self) -> &CorruptionState {
        &self.corruption
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    pub fn into_transcript(self) -> Transcript {
        self.transcript
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn new_session(&mut self) -> u32 {
        self.next_session += 1;
        self.next_session
    }

    pub fn rng(&mut self, party: PartyId) -> &mut ChaCha8Rng {
        self.rngs.get_mut(&party).expect("party registered")
    }

    fn check_known(&self, p: PartyId) -> Result<()> {
        if self.roster.contains(&p) {
            Ok(())
        } else {
            Err(Error::UnknownParty(p))
        }
    }

    fn validate(&self, sender: PartyId, out: &Outgoing) -> Result<()> {
        match out.receiver {
            None => {
                if out.channel != ChannelKind::Broadcast {
                    return Err(Error::InvalidParameter("receiver missing on point-to-point message".into()));
                }
            }
            Some(r) => {
                self.check_known(r)?;
                if !edge_allowed(sender, r, out.channel) {
                    return Err(Error::Topology { sender, receiver: r, channel: out.channel });
                }
            }
        }
        Ok(())
    }

    fn submit(&mut self, sender: PartyId, proposed: Outgoing) -> Result<()> {
        self.check_known(sender)?;
        self.validate(sender, &proposed)?;
        let (outs, origin) = match self.corruption.strategies.get_mut(&sender) {
            Some(strategy) => {
                let view = AdversaryView {
                    round: self.round,
                    sender,
                    transcript: &self.transcript,
                    corruption: &self.corruption.kinds,
                };
                (strategy.intercept(&view, proposed), Origin::Adversary)
            }
            None => (vec![proposed], Origin::Honest),
        };
        for out in outs {
            self.validate(sender, &out)?;
            let m = Message {
                round: self.round,
                session: out.session,
                tag: out.tag,
                sender,
                receiver: out.receiver,
                channel: out.channel,
                origin,
                payload: out.payload,
            };
            self.transcript.push(m.clone());
            self.pending.push(m);
        }
        Ok(())
    }

    pub fn send(
        &mut self,
        sender: PartyId,
        receiver: PartyId,
        channel: ChannelKind,
        session: u32,
        tag: &str,
        payload: Payload,
    ) -> Result<()> {
        if channel == ChannelKind::Broadcast {
            return self.broadcast(sender, session, tag, payload);
        }
        self.submit(
            sender,
            Outgoing { receiver: Some(receiver), channel, tag: tag.to_string(), session, payload },
        )
    }

    pub fn broadcast(&mut self, sender: PartyId, session: u32, tag: &str, payload: Payload) -> Result<()> {
        self.submit(
            sender,
            Outgoing { receiver: None, channel: ChannelKind::Broadcast, tag: tag.to_string(), session, payload },
        )
    }

    /// Closes the current round and delivers everything sent during it.
    pub fn advance(&mut self) {
        self.round += 1;
        for m in std::mem::take(&mut self.pending) {
            match m.receiver {
                Some(r) => self.inboxes.entry(r).or_default().push(m),
                None => {
                    for p in &self.roster {
                        self.inboxes.entry(*p).or_default().push(m.clone());
                    }
                }
            }
        }
    }

    pub fn take_inbox(&mut self, party: PartyId) -> Vec<Message> {
        self.inboxes.remove(&party).unwrap_or_default()
    }

    /// Steps every party once per round until all halt.
    pub fn run_rounds(&mut self, parties: &mut [&mut dyn Party], max_rounds: u64) -> Result<u64> {
        let mut halted = vec![false; parties.len()];
        let mut local = 0u64;
        while halted.iter().any(|h| !h) {
            if local >= max_rounds {
                return Err(Error::MaxRoundsExceeded(max_rounds));
            }
            for (k, party) in parties.iter_mut().enumerate() {
                if halted[k] {
                    continue;
                }
                let id = party.id();
                self.check_known(id)?;
                let inbox = self.take_inbox(id);
                let mut ctx = RoundCtx { net: self, id, local_round: local, inbox };
                if party.step(&mut ctx)? == Step::Halted {
                    halted[k] = true;
                }
            }
            self.advance();
            local += 1;
        }
        Ok(local)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bits(s: &str) -> Payload {
        Payload::Bits(s.parse().unwrap())
    }

    #[test]
    fn party_names_round_trip() {
        for p in [PartyId::cp_a(2), PartyId::cp_b(11), PartyId::qkd_a(1), PartyId::qkd_b(3), PartyId::dealer(), PartyId::km_a()] {
            assert_eq!(p.to_string().parse::<PartyId>().unwrap(), p);
        }
        assert_eq!(PartyId::qkd_a(1).to_string(), "QKD_A1");
        assert!("CP_C1".parse::<PartyId>().is_err());
        assert!("CP_A0".parse::<PartyId>().is_err());
    }

    #[test]
    fn secure_intra_lab_is_hidden_from_eve() {
        let mut net = Network::new(1, [PartyId::cp_a(1), PartyId::cp_a(2)], CorruptionState::honest());
        net.send(PartyId::cp_a(1), PartyId::cp_a(2), ChannelKind::Secure, 0, "x", bits("101")).unwrap();
        net.advance();
        let inbox = net.take_inbox(PartyId::cp_a(2));
        assert_eq!(inbox.len(), 1);
        assert_eq!(inbox[0].payload, bits("101"));
        assert!(eve_view(net.transcript(), net.corruption().map()).is_empty());
    }

    #[test]
    fn authenticated_cross_lab_is_visible() {
        let mut net = Network::new(1, [PartyId::cp_a(1), PartyId::cp_b(1)], CorruptionState::honest());
        net.send(PartyId::cp_a(1), PartyId::cp_b(1), ChannelKind::Authenticated, 0, "x", bits("11")).unwrap();
        net.advance();
        assert_eq!(net.take_inbox(PartyId::cp_b(1))[0].payload, bits("11"));
        assert_eq!(eve_view(net.transcript(), net.corruption().map()).len(), 1);
    }

    #[test]
    fn illegal_edges_rejected() {
        let roster = [PartyId::qkd_a(1), PartyId::qkd_b(1), PartyId::cp_a(1), PartyId::cp_b(1)];
        let mut net = Network::new(1, roster, CorruptionState::honest());
        for ch in [ChannelKind::Secure, ChannelKind::Authenticated] {
            assert!(matches!(
                net.send(PartyId::qkd_a(1), PartyId::cp_b(1), ch, 0, "x", bits("1")),
                Err(Error::Topology { .. })
            ));
            assert!(net.send(PartyId::qkd_a(1), PartyId::qkd_b(1), ch, 0, "x", bits("1")).is_err());
        }
        assert!(net.send(PartyId::cp_a(1), PartyId::cp_b(1), ChannelKind::Secure, 0, "x", bits("1")).is_err());
        assert!(net.send(PartyId::cp_a(1), PartyId::cp_a(9), ChannelKind::Secure, 0, "x", bits("1")).is_err());
        assert!(net.transcript().is_empty());
    }

    #[test]
    fn broadcast_reaches_everyone_identically() {
        let roster = [PartyId::cp_a(1), PartyId::cp_a(2), PartyId::cp_a(3)];
        let c = CorruptionState::honest().with(PartyId::cp_a(1), Corruption::Active(StrategyKind::FlipAll.build()));
        let mut net = Network::new(1, roster, c);
        net.broadcast(PartyId::cp_a(1), 0, "b", bits("10")).unwrap();
        net.advance();
        let got: Vec<_> = roster.iter().map(|p| net.take_inbox(*p)[0].payload.clone()).collect();
        assert!(got.iter().all(|g| *g == got[0]));
        assert_eq!(got[0], bits("01"));
    }

    #[test]
    fn passive_party_view() {
        let roster = [PartyId::cp_a(1), PartyId::cp_a(2), PartyId::cp_a(3)];
        let c = CorruptionState::honest().with(PartyId::cp_a(3), Corruption::Passive);
        let mut net = Network::new(1, roster, c);
        net.send(PartyId::cp_a(1), PartyId::cp_a(2), ChannelKind::Secure, 0, "a", bits("1")).unwrap();
        net.send(PartyId::cp_a(1), PartyId::cp_a(3), ChannelKind::Secure, 0, "b", bits("1")).unwrap();
        net.send(PartyId::cp_a(3), PartyId::cp_a(2), ChannelKind::Secure, 0, "c", bits("1")).unwrap();
        net.broadcast(PartyId::cp_a(2), 0, "d", Payload::Flag(true)).unwrap();
        let view: Vec<_> = eve_view(net.transcript(), net.corruption().map()).iter().map(|m| m.tag.clone()).collect();
        assert_eq!(view, vec!["b", "c", "d"]);
    }

    struct Pinger {
        id: PartyId,
        peer: PartyId,
        rounds: u64,
        got: usize,
    }

    impl Party for Pinger {
        fn id(&self) -> PartyId {
            self.id
        }
        fn step(&mut self, ctx: &mut RoundCtx<'_>) -> Result<Step> {
            self.got += ctx.inbox.len();
            if ctx.local_round >= self.rounds {
                return Ok(Step::Halted);
            }
            let b = BitString::random(ctx.rng(), 8);
            ctx.send(self.peer, ChannelKind::Secure, 0, "ping", Payload::Bits(b))?;
            Ok(Step::Continue)
        }
    }

    fn ping_run(seed: u64) -> Transcript {
        let (a, b) = (PartyId::cp_a(1), PartyId::cp_a(2));
        let mut net = Network::new(seed, [a, b], CorruptionState::honest());
        let mut pa = Pinger { id: a, peer: b, rounds: 3, got: 0 };
        let mut pb = Pinger { id: b, peer: a, rounds: 3, got: 0 };
        net.run_rounds(&mut [&mut pa, &mut pb], 10).unwrap();
        assert_eq!((pa.got, pb.got), (3, 3));
        net.into_transcript()
    }

    #[test]
    fn run_rounds_deterministic_and_bounded() {
        let mut net = Network::new(0, [], CorruptionState::honest());
        assert_eq!(net.run_rounds(&mut [], 5).unwrap(), 0);
        assert!(net.transcript().is_empty());

        assert_eq!(ping_run(7).to_jsonl(), ping_run(7).to_jsonl());
        assert_ne!(ping_run(7).to_jsonl(), ping_run(8).to_jsonl());

        let (a, b) = (PartyId::cp_a(1), PartyId::cp_a(2));
        let mut net = Network::new(0, [a, b], CorruptionState::honest());
        let mut pa = Pinger { id: a, peer: b, rounds: 100, got: 0 };
        assert!(matches!(net.run_rounds(&mut [&mut pa], 5), Err(Error::MaxRoundsExceeded(5))));
    }

    #[test]
    fn jsonl_round_trip() {
        let t = ping_run(3);
        let back = Transcript::read_jsonl(t.to_jsonl().as_bytes()).unwrap();
        assert_eq!(back, t);
        assert!(Transcript::read_jsonl("{not json}\n".as_bytes()).is_err());
    }

    #[test]
    fn active_messages_marked_and_scripted() {
        let (a, b) = (PartyId::cp_a(1), PartyId::cp_a(2));
        let script = StrategyKind::Script(vec![BitBehavior::Zero, BitBehavior::Correct, BitBehavior::One]);
        let mut net = Network::new(0, [a, b], CorruptionState::honest().with(a, Corruption::Active(script.build())));
        for _ in 0..4 {
            net.send(a, b, ChannelKind::Secure, 0, "x", bits("10")).unwrap();
        }
        net.send(a, b, ChannelKind::Secure, 0, "f", Payload::Flag(false)).unwrap();
        let payloads: Vec<_> = net.transcript().messages().iter().map(|m| m.payload.clone()).collect();
        assert_eq!(payloads, vec![bits("00"), bits("10"), bits("11"), bits("10"), Payload::Flag(false)]);
        assert!(net.transcript().messages().iter().all(|m| m.origin == Origin::Adversary));
    }
}
