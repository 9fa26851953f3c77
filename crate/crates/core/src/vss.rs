//! XOR secret sharing, replicated verifiable secret sharing, and the
//! common random string protocol built on top of it.
//!
//! A [`SharingScheme`] fixes who holds which share and how holders' reports
//! are combined. The threshold scheme deals `C(n, n-t)` shares, share `j`
//! going to everyone outside the `j`-th `t`-subset; the general scheme deals
//! one share per maximal set of Σ, to that set's complement.
//!
//! Share phase, five rounds:
//! 0. the dealer sends each share to its holders;
//! 1. holders echo every share to its other holders;
//! 2. a holder that saw a differing copy broadcasts a complaint;
//! 3. the dealer broadcasts every complained share;
//! 4. holders adopt broadcast values, or abort if one is missing.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;

use crate::adversary::{
    combinations, min_generating_set, threshold_structure, vss_feasible, MixedAdversary, PartySet, Structure,
};
use crate::error::{Error, Result};
use crate::gf2::{xor_all, BitString};
use crate::simnet::{ChannelKind, Message, Network, Party, PartyId, Payload, RoundCtx, Step, TAG_ANSWER, TAG_DEAL};

pub const TAG_ECHO: &str = "vss/echo";
pub const TAG_COMPLAINT: &str = "vss/complaint";
pub const TAG_OPEN: &str = "vss/open";
pub const TAG_CONFIRM: &str = "rbs/confirm";

pub fn ss_split<R: Rng + ?Sized>(m: &BitString, q: usize, rng: &mut R) -> Result<Vec<BitString>> {
    if q == 0 {
        return Err(Error::InvalidParameter("need at least one share".into()));
    }
    let mut shares: Vec<BitString> = (0..q - 1).map(|_| BitString::random(rng, m.len())).collect();
    let mut last = m.clone();
    for s in &shares {
        last.xor_assign(s)?;
    }
    shares.push(last);
    Ok(shares)
}

pub fn ss_combine(shares: &[BitString]) -> Result<BitString> {
    xor_all(shares)
}

/// How a receiver settles on one value from holders' reports.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum VoteRule {
    /// A value reported by more than half of the holders.
    Majority,
    /// The unique value whose dissenting holders form a set of this structure.
    Structure(Structure),
}

impl VoteRule {
    /// `reports` are `(party index, value)` with at most one entry per party.
    pub fn decide(&self, holders: PartySet, reports: &[(usize, &BitString)]) -> Option<BitString> {
        let valid: Vec<&(usize, &BitString)> = reports.iter().filter(|(p, _)| holders.contains(*p)).collect();
        let mut candidates: Vec<&BitString> = valid.iter().map(|(_, v)| *v).collect();
        candidates.sort();
        candidates.dedup();
        match self {
            VoteRule::Majority => candidates.into_iter().find_map(|v| {
                let support = valid.iter().filter(|(_, x)| *x == v).count();
                (2 * support > holders.len()).then(|| v.clone())
            }),
            VoteRule::Structure(omega) => {
                let mut found = None;
                for v in candidates {
                    let mut agree = PartySet::empty(holders.universe());
                    for (p, x) in &valid {
                        if *x == v {
                            agree.insert(*p);
                        }
                    }
                    if omega.contains(&holders.difference(&agree)) {
                        if found.is_some() {
                            return None;
                        }
                        found = Some(v.clone());
                    }
                }
                found
            }
        }
    }
}

/// Share `j` is held by `holders[j]` (1-based party indices into the scheme).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShareLayout {
    n: usize,
    holders: Vec<PartySet>,
}

impl ShareLayout {
    pub fn threshold(n: usize, t: usize) -> Result<Self> {
        if t > n {
            return Err(Error::InvalidParameter(format!("threshold {t} exceeds {n} parties")));
        }
        Ok(Self { n, holders: combinations(n, n - t) })
    }

    pub fn general(sigma: &Structure) -> Self {
        Self {
            n: sigma.universe(),
            holders: sigma.maximal_sets().iter().map(PartySet::complement).collect(),
        }
    }

    pub fn q(&self) -> usize {
        self.holders.len()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn holders(&self, j: usize) -> PartySet {
        self.holders[j]
    }

    /// Share indices held by party `p` (1-based).
    pub fn held_by(&self, p: usize) -> Vec<usize> {
        (0..self.q()).filter(|&j| self.holders[j].contains(p)).collect()
    }
}

/// Everything the parties of one lab agree on before running VSS.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SharingScheme {
    parties: Vec<PartyId>,
    layout: ShareLayout,
    rule: VoteRule,
    announcers: PartySet,
    contributors: PartySet,
}

impl SharingScheme {
    /// Tolerates `t` active parties; needs `3t < n`.
    pub fn threshold(parties: Vec<PartyId>, t: usize) -> Result<Self> {
        let n = parties.len();
        if n == 0 || 3 * t >= n {
            return Err(Error::Infeasible(format!("threshold {t} with {n} parties violates 3t < n")));
        }
        Ok(Self {
            layout: ShareLayout::threshold(n, t)?,
            rule: VoteRule::Majority,
            announcers: PartySet::from_members(n, &(1..=2 * t + 1).collect::<Vec<_>>())?,
            contributors: PartySet::from_members(n, &(1..=t + 1).collect::<Vec<_>>())?,
            parties,
        })
    }

    pub fn general(parties: Vec<PartyId>, adv: &MixedAdversary) -> Result<Self> {
        let n = parties.len();
        if adv.universe() != n {
            return Err(Error::UniverseMismatch(n, adv.universe()));
        }
        if !vss_feasible(adv) {
            return Err(Error::Infeasible("the party set is covered by Σ ⊔ Ω ⊔ Ω".into()));
        }
        let layout = ShareLayout::general(&adv.sigma);
        let announcers = layout
            .holders
            .iter()
            .copied()
            .min_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.members().cmp(&b.members())))
            .expect("at least one maximal set");
        Ok(Self {
            layout,
            rule: VoteRule::Structure(adv.omega.clone()),
            announcers,
            contributors: min_generating_set(&adv.sigma)?,
            parties,
        })
    }

    pub fn threshold_as_general(parties: Vec<PartyId>, t: usize) -> Result<Self> {
        let n = parties.len();
        let s = threshold_structure(n, t)?;
        Self::general(parties, &MixedAdversary { sigma: s.clone(), omega: s })
    }

    pub fn parties(&self) -> &[PartyId] {
        &self.parties
    }

    pub fn n(&self) -> usize {
        self.parties.len()
    }

    pub fn q(&self) -> usize {
        self.layout.q()
    }

    pub fn layout(&self) -> &ShareLayout {
        &self.layout
    }

    pub fn rule(&self) -> &VoteRule {
        &self.rule
    }

    /// 1-based position of `p` in the scheme.
    pub fn index_of(&self, p: PartyId) -> Option<usize> {
        self.parties.iter().position(|x| *x == p).map(|i| i + 1)
    }

    fn id_of(&self, index: usize) -> PartyId {
        self.parties[index - 1]
    }

    fn ids(&self, set: PartySet) -> Vec<PartyId> {
        set.members().into_iter().map(|i| self.id_of(i)).collect()
    }

    pub fn holder_ids(&self, j: usize) -> Vec<PartyId> {
        self.ids(self.layout.holders(j))
    }

    pub fn shares_of(&self, p: PartyId) -> Vec<usize> {
        self.index_of(p).map(|i| self.layout.held_by(i)).unwrap_or_default()
    }

    /// Parties whose copies of public data are voted on.
    pub fn announcer_ids(&self) -> Vec<PartyId> {
        self.ids(self.announcers)
    }

    pub fn contributor_ids(&self) -> Vec<PartyId> {
        self.ids(self.contributors)
    }

    /// Settles share `j` from `(sender, value)` reports.
    pub fn vote_share(&self, j: usize, reports: &[(PartyId, &BitString)]) -> Option<BitString> {
        self.vote_in(self.layout.holders(j), reports)
    }

    /// Settles a value every announcer should hold identically.
    pub fn vote_announced(&self, reports: &[(PartyId, &BitString)]) -> Option<BitString> {
        self.vote_in(self.announcers, reports)
    }

    fn vote_in(&self, holders: PartySet, reports: &[(PartyId, &BitString)]) -> Option<BitString> {
        let mut seen = BTreeSet::new();
        let indexed: Vec<(usize, &BitString)> = reports
            .iter()
            .filter_map(|(p, v)| self.index_of(*p).map(|i| (i, *v)))
            .filter(|(i, _)| seen.insert(*i))
            .collect();
        self.rule.decide(holders, &indexed)
    }
}

/// A party's shares, keyed by share index.
pub type Holding = BTreeMap<usize, BitString>;

/// Dealer-side table: every share value with its holder set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShareTable {
    pub values: Vec<BitString>,
    pub holders: Vec<PartySet>,
}

impl ShareTable {
    pub fn deal<R: Rng + ?Sized>(m: &BitString, layout: &ShareLayout, rng: &mut R) -> Result<Self> {
        let values = ss_split(m, layout.q(), rng)?;
        Ok(Self { values, holders: layout.holders.clone() })
    }

    pub fn secret(&self) -> BitString {
        ss_combine(&self.values).expect("shares have equal length")
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DealerInput {
    /// Split with the dealer's own randomness.
    Secret(BitString),
    /// Use exactly these share values.
    Shares(Vec<BitString>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Deal {
    pub dealer: PartyId,
    pub len: usize,
    pub input: DealerInput,
}

impl Deal {
    pub fn secret(dealer: PartyId, m: BitString) -> Self {
        Self { dealer, len: m.len(), input: DealerInput::Secret(m) }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Complaint {
    pub session: u32,
    pub share: usize,
    pub party: PartyId,
    pub round: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShareAbort {
    /// A complained share was never broadcast by the dealer.
    Unanswered { share: usize },
}

struct Instance {
    session: u32,
    dealer: PartyId,
    len: usize,
    input: Option<DealerInput>,
    table: Vec<BitString>,
    held: Holding,
    complained: BTreeSet<usize>,
    result: Option<std::result::Result<Holding, ShareAbort>>,
}

/// One party's share-phase state machine, for any number of parallel deals.
struct ShareNode<'a> {
    id: PartyId,
    scheme: &'a SharingScheme,
    mine: Vec<usize>,
    instances: Vec<Instance>,
    complaints: Vec<Complaint>,
}

fn first_entry(m: &Message) -> Option<(usize, &BitString)> {
    match &m.payload {
        Payload::Shares(v) if v.len() == 1 => Some((v[0].0 as usize, &v[0].1)),
        _ => None,
    }
}

impl<'a> ShareNode<'a> {
    fn deal_round(&mut self, ctx: &mut RoundCtx<'_>) -> Result<()> {
        let scheme = self.scheme;
        for inst in &mut self.instances {
            let Some(input) = inst.input.take() else { continue };
            let values = match input {
                DealerInput::Secret(m) => ss_split(&m, scheme.q(), ctx.rng())?,
                DealerInput::Shares(v) => {
                    if v.len() != scheme.q() || v.iter().any(|s| s.len() != inst.len) {
                        return Err(Error::InvalidParameter("dealer shares do not fit the layout".into()));
                    }
                    v
                }
            };
            for (j, v) in values.iter().enumerate() {
                for h in scheme.holder_ids(j) {
                    if h == self.id {
                        inst.held.insert(j, v.clone());
                    } else {
                        let payload = Payload::Shares(vec![(j as u32, v.clone())]);
                        ctx.send(h, ChannelKind::Secure, inst.session, TAG_DEAL, payload)?;
                    }
                }
            }
            inst.table = values;
        }
        Ok(())
    }

    fn echo_round(&mut self, ctx: &mut RoundCtx<'_>, inbox: &[Message]) -> Result<()> {
        for inst in &mut self.instances {
            for m in inbox.iter().filter(|m| m.session == inst.session && m.tag == TAG_DEAL) {
                if m.sender != inst.dealer {
                    continue;
                }
                if let Some((j, v)) = first_entry(m) {
                    if self.mine.contains(&j) && v.len() == inst.len && !inst.held.contains_key(&j) {
                        inst.held.insert(j, v.clone());
                    }
                }
            }
            for &j in &self.mine {
                let v = inst.held.entry(j).or_insert_with(|| BitString::zeros(inst.len)).clone();
                for h in self.scheme.holder_ids(j) {
                    if h != self.id {
                        ctx.send(h, ChannelKind::Secure, inst.session, TAG_ECHO, Payload::Shares(vec![(j as u32, v.clone())]))?;
                    }
                }
            }
        }
        Ok(())
    }

    fn check_round(&mut self, ctx: &mut RoundCtx<'_>, inbox: &[Message], round: u64) -> Result<()> {
        for inst in &mut self.instances {
            let mut bad = Vec::new();
            for &j in &self.mine {
                let own = &inst.held[&j];
                for h in self.scheme.holder_ids(j) {
                    if h == self.id {
                        continue;
                    }
                    let echoed = inbox
                        .iter()
                        .filter(|m| m.session == inst.session && m.tag == TAG_ECHO && m.sender == h)
                        .filter_map(first_entry)
                        .find(|(k, _)| *k == j)
                        .map(|(_, v)| v.clone())
                        .unwrap_or_else(|| BitString::zeros(inst.len));
                    if echoed != *own {
                        bad.push(j as u32);
                        break;
                    }
                }
            }
            if !bad.is_empty() {
                for &j in &bad {
                    self.complaints.push(Complaint { session: inst.session, share: j as usize, party: self.id, round });
                }
                ctx.broadcast(inst.session, TAG_COMPLAINT, Payload::Indices(bad))?;
            }
        }
        Ok(())
    }

    fn answer_round(&mut self, ctx: &mut RoundCtx<'_>, inbox: &[Message]) -> Result<()> {
        let q = self.scheme.q();
        for inst in &mut self.instances {
            for m in inbox.iter().filter(|m| m.session == inst.session && m.tag == TAG_COMPLAINT) {
                if let Payload::Indices(js) = &m.payload {
                    inst.complained.extend(js.iter().map(|&j| j as usize).filter(|&j| j < q));
                }
            }
            if inst.dealer == self.id && !inst.complained.is_empty() {
                let answer = inst.complained.iter().map(|&j| (j as u32, inst.table[j].clone())).collect();
                ctx.broadcast(inst.session, TAG_ANSWER, Payload::Shares(answer))?;
            }
        }
        Ok(())
    }

    fn settle_round(&mut self, inbox: &[Message]) {
        for inst in &mut self.instances {
            let mut answered: BTreeMap<usize, BitString> = BTreeMap::new();
            for m in inbox.iter().filter(|m| m.session == inst.session && m.tag == TAG_ANSWER) {
                if m.sender != inst.dealer {
                    continue;
                }
                if let Payload::Shares(v) = &m.payload {
                    for (j, b) in v {
                        if b.len() == inst.len {
                            answered.entry(*j as usize).or_insert_with(|| b.clone());
                        }
                    }
                }
            }
            let mut result = Ok(());
            for &j in &inst.complained {
                match answered.get(&j) {
                    Some(v) => {
                        if self.mine.contains(&j) {
                            inst.held.insert(j, v.clone());
                        }
                    }
                    None => {
                        result = Err(ShareAbort::Unanswered { share: j });
                        break;
                    }
                }
            }
            inst.result = Some(result.map(|_| {
                self.mine.iter().map(|&j| (j, inst.held[&j].clone())).collect()
            }));
        }
    }
}

impl Party for ShareNode<'_> {
    fn id(&self) -> PartyId {
        self.id
    }

    fn step(&mut self, ctx: &mut RoundCtx<'_>) -> Result<Step> {
        let inbox = std::mem::take(&mut ctx.inbox);
        match ctx.local_round {
            0 => self.deal_round(ctx)?,
            1 => self.echo_round(ctx, &inbox)?,
            2 => {
                let round = ctx.local_round;
                self.check_round(ctx, &inbox, round)?
            }
            3 => self.answer_round(ctx, &inbox)?,
            _ => {
                self.settle_round(&inbox);
                return Ok(Step::Halted);
            }
        }
        Ok(Step::Continue)
    }
}

/// Result of running one or more deals in parallel.
#[derive(Clone, Debug)]
pub struct ShareRun {
    /// One session id per deal, in input order.
    pub sessions: Vec<u32>,
    /// Per scheme party, per deal.
    pub outcomes: BTreeMap<PartyId, Vec<std::result::Result<Holding, ShareAbort>>>,
    pub complaints: Vec<Complaint>,
    /// Dealer-side share values actually used, per deal.
    pub tables: Vec<Vec<BitString>>,
}

impl ShareRun {
    /// Outcome of deal `k` at party `p`.
    pub fn holding(&self, p: PartyId, k: usize) -> std::result::Result<&Holding, ShareAbort> {
        self.outcomes[&p][k].as_ref().map_err(|e| *e)
    }

    pub fn aborted_at(&self, p: PartyId) -> bool {
        self.outcomes[&p].iter().any(|r| r.is_err())
    }
}

pub const SHARE_ROUNDS: u64 = 5;

/// Runs the share phase for every deal at once. Dealers outside the scheme
/// (for example a QKD module) take part only as senders.
pub fn vss_share(net: &mut Network, scheme: &SharingScheme, deals: &[Deal]) -> Result<ShareRun> {
    let sessions: Vec<u32> = deals.iter().map(|_| net.new_session()).collect();
    let mut ids: Vec<PartyId> = scheme.parties().to_vec();
    for d in deals {
        if !ids.contains(&d.dealer) {
            ids.push(d.dealer);
        }
    }
    let mut nodes: Vec<ShareNode<'_>> = ids
        .iter()
        .map(|&id| ShareNode {
            id,
            scheme,
            mine: scheme.shares_of(id),
            instances: deals
                .iter()
                .zip(&sessions)
                .map(|(d, &session)| Instance {
                    session,
                    dealer: d.dealer,
                    len: d.len,
                    input: (d.dealer == id).then(|| d.input.clone()),
                    table: Vec::new(),
                    held: Holding::new(),
                    complained: BTreeSet::new(),
                    result: None,
                })
                .collect(),
            complaints: Vec::new(),
        })
        .collect();
    {
        let mut parties: Vec<&mut dyn Party> = nodes.iter_mut().map(|n| n as &mut dyn Party).collect();
        net.run_rounds(&mut parties, SHARE_ROUNDS)?;
    }
    let mut tables = vec![Vec::new(); deals.len()];
    let mut outcomes = BTreeMap::new();
    let mut complaints = Vec::new();
    for node in nodes {
        complaints.extend(node.complaints);
        let in_scheme = scheme.index_of(node.id).is_some();
        let mut per = Vec::new();
        for (k, inst) in node.instances.into_iter().enumerate() {
            if inst.dealer == node.id {
                tables[k] = inst.table;
            }
            per.push(inst.result.expect("share phase settled"));
        }
        if in_scheme {
            outcomes.insert(node.id, per);
        }
    }
    complaints.sort_by_key(|c| (c.session, c.share, c.party));
    Ok(ShareRun { sessions, outcomes, complaints, tables })
}

/// One value to open: its scheme, the senders' holdings and who learns it.
pub struct OpenItem<'a> {
    pub scheme: &'a SharingScheme,
    pub tag: &'a str,
    pub channel: ChannelKind,
    /// Shares each sender reveals. Senders must be scheme parties.
    pub holdings: BTreeMap<PartyId, Holding>,
    pub receivers: Vec<PartyId>,
}

struct OpenNode<'a, 'b> {
    id: PartyId,
    items: &'b [OpenItem<'a>],
    sessions: &'b [u32],
    results: Vec<Option<Result<Vec<BitString>>>>,
}

impl Party for OpenNode<'_, '_> {
    fn id(&self) -> PartyId {
        self.id
    }

    fn step(&mut self, ctx: &mut RoundCtx<'_>) -> Result<Step> {
        if ctx.local_round == 0 {
            for (item, &session) in self.items.iter().zip(self.sessions) {
                let Some(h) = item.holdings.get(&self.id) else { continue };
                let payload = Payload::Shares(h.iter().map(|(j, v)| (*j as u32, v.clone())).collect());
                for &r in &item.receivers {
                    if r != self.id {
                        ctx.send(r, item.channel, session, item.tag, payload.clone())?;
                    }
                }
            }
            return Ok(Step::Continue);
        }
        let inbox = std::mem::take(&mut ctx.inbox);
        for (k, (item, &session)) in self.items.iter().zip(self.sessions).enumerate() {
            if !item.receivers.contains(&self.id) {
                continue;
            }
            let mut bundles: Vec<(PartyId, &[(u32, BitString)])> = inbox
                .iter()
                .filter(|m| m.session == session && m.tag == item.tag)
                .filter_map(|m| match &m.payload {
                    Payload::Shares(v) => Some((m.sender, v.as_slice())),
                    _ => None,
                })
                .collect();
            let own: Vec<(u32, BitString)>;
            if let Some(h) = item.holdings.get(&self.id) {
                own = h.iter().map(|(j, v)| (*j as u32, v.clone())).collect();
                bundles.push((self.id, own.as_slice()));
            }
            let scheme = item.scheme;
            let out = (0..scheme.q())
                .map(|j| {
                    let holders = scheme.holder_ids(j);
                    let reports: Vec<(PartyId, &BitString)> = bundles
                        .iter()
                        .filter(|(p, _)| holders.contains(p))
                        .filter_map(|(p, v)| v.iter().find(|(k, _)| *k as usize == j).map(|(_, b)| (*p, b)))
                        .collect();
                    scheme.vote_share(j, &reports).ok_or(Error::Reconstruction { share: j })
                })
                .collect::<Result<Vec<_>>>();
            self.results[k] = Some(out);
        }
        Ok(Step::Halted)
    }
}

/// Per receiver, per item: the voted share values.
pub type OpenResults = BTreeMap<PartyId, Vec<Option<Result<Vec<BitString>>>>>;

/// Senders reveal their holdings; every receiver votes share by share.
pub fn open_shares(net: &mut Network, items: &[OpenItem<'_>]) -> Result<OpenResults> {
    let sessions: Vec<u32> = items.iter().map(|_| net.new_session()).collect();
    let mut ids: BTreeSet<PartyId> = BTreeSet::new();
    for item in items {
        ids.extend(item.holdings.keys().copied());
        ids.extend(item.receivers.iter().copied());
    }
    let mut nodes: Vec<OpenNode<'_, '_>> = ids
        .iter()
        .map(|&id| OpenNode { id, items, sessions: &sessions, results: (0..items.len()).map(|_| None).collect() })
        .collect();
    {
        let mut parties: Vec<&mut dyn Party> = nodes.iter_mut().map(|n| n as &mut dyn Party).collect();
        net.run_rounds(&mut parties, 2)?;
    }
    Ok(nodes.into_iter().map(|n| (n.id, n.results)).collect())
}

/// Opens one secret to `receivers` and XORs the voted shares.
pub fn vss_reconstruct(
    net: &mut Network,
    scheme: &SharingScheme,
    holdings: &BTreeMap<PartyId, Holding>,
    receivers: &[PartyId],
    channel: ChannelKind,
) -> Result<BTreeMap<PartyId, Result<BitString>>> {
    let item = OpenItem { scheme, tag: TAG_OPEN, channel, holdings: holdings.clone(), receivers: receivers.to_vec() };
    let mut res = open_shares(net, std::slice::from_ref(&item))?;
    Ok(receivers
        .iter()
        .map(|r| {
            let out = res
                .get_mut(r)
                .and_then(|v| v[0].take())
                .expect("receiver took part")
                .and_then(|shares| ss_combine(&shares));
            (*r, out)
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RbsAbort {
    /// Some contributor's share phase failed.
    Share,
    /// A party withheld or denied its confirmation.
    Confirmation,
    Reconstruction,
}

#[derive(Clone, Debug)]
pub struct RbsRun {
    pub outputs: BTreeMap<PartyId, std::result::Result<BitString, RbsAbort>>,
    /// What each contributor's protocol code drew (or was given).
    pub contributions: Vec<(PartyId, BitString)>,
}

impl RbsRun {
    /// The common output when every listed party agrees on one.
    pub fn agreed(&self, parties: &[PartyId]) -> Option<std::result::Result<BitString, RbsAbort>> {
        let mut it = parties.iter().map(|p| self.outputs.get(p));
        let first = it.next()??.clone();
        for o in it {
            if o? != &first {
                return None;
            }
        }
        Some(first)
    }
}

/// Common random `len`-bit string; contributors draw from their own randomness.
pub fn rbs(net: &mut Network, scheme: &SharingScheme, len: usize) -> Result<RbsRun> {
    let contributions = scheme
        .contributor_ids()
        .into_iter()
        .map(|c| (c, BitString::random(net.rng(c), len)))
        .collect();
    rbs_with(net, scheme, contributions)
}

/// As [`rbs`] with the contributed strings fixed by the caller.
pub fn rbs_with(net: &mut Network, scheme: &SharingScheme, contributions: Vec<(PartyId, BitString)>) -> Result<RbsRun> {
    let deals: Vec<Deal> = contributions.iter().map(|(c, r)| Deal::secret(*c, r.clone())).collect();
    let run = vss_share(net, scheme, &deals)?;

    let session = net.new_session();
    for &p in scheme.parties() {
        net.broadcast(p, session, TAG_CONFIRM, Payload::Flag(!run.aborted_at(p)))?;
    }
    net.advance();
    let mut confirmed = BTreeMap::new();
    for &p in scheme.parties() {
        let inbox = net.take_inbox(p);
        let mut ok_from = BTreeSet::new();
        let mut denied = false;
        for m in inbox.iter().filter(|m| m.session == session && m.tag == TAG_CONFIRM) {
            match m.payload {
                Payload::Flag(true) => {
                    ok_from.insert(m.sender);
                }
                _ => denied = true,
            }
        }
        let all = scheme.parties().iter().all(|x| ok_from.contains(x));
        confirmed.insert(p, all && !denied && !run.aborted_at(p));
    }

    let mut outputs: BTreeMap<PartyId, std::result::Result<BitString, RbsAbort>> = BTreeMap::new();
    for &p in scheme.parties() {
        if run.aborted_at(p) {
            outputs.insert(p, Err(RbsAbort::Share));
        } else if !confirmed[&p] {
            outputs.insert(p, Err(RbsAbort::Confirmation));
        }
    }
    let live: Vec<PartyId> = scheme.parties().iter().copied().filter(|p| !outputs.contains_key(p)).collect();
    if live.is_empty() {
        return Ok(RbsRun { outputs, contributions });
    }
    let items: Vec<OpenItem<'_>> = (0..deals.len())
        .map(|k| OpenItem {
            scheme,
            tag: TAG_OPEN,
            channel: ChannelKind::Authenticated,
            holdings: live.iter().map(|&p| (p, run.holding(p, k).expect("live").clone())).collect(),
            receivers: live.clone(),
        })
        .collect();
    let opened = open_shares(net, &items)?;
    for p in live {
        let mut acc: std::result::Result<BitString, RbsAbort> = Ok(BitString::zeros(deals.first().map_or(0, |d| d.len)));
        for slot in opened[&p].iter() {
            let value = match slot.as_ref().expect("receiver") {
                Ok(shares) => ss_combine(shares).map_err(|_| RbsAbort::Reconstruction),
                Err(_) => Err(RbsAbort::Reconstruction),
            };
            acc = match (acc, value) {
                (Ok(a), Ok(v)) => a.xor(&v).map_err(|_| RbsAbort::Reconstruction),
                (Err(e), _) | (_, Err(e)) => Err(e),
            };
        }
        outputs.insert(p, acc);
    }
    Ok(RbsRun { outputs, contributions })
}
