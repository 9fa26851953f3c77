//! Checks run over a finished transcript.
//!
//! Everything here reads the message log plus the scenario that produced it
//! (for the corruption assignment and the lab sharing schemes). No driver
//! state is consulted, so a transcript written to disk audits the same way.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::gf2::{BitString, ToeplitzHash};
use crate::protocols::{
    Scenario, TAG_FRAME, TAG_OUT_KEY, TAG_OUT_SHARE, TAG_PARITY_A, TAG_PARITY_B, TAG_QKD_RAW, TAG_XT_SEED,
};
use crate::simnet::{edge_allowed, eve_view, ChannelKind, CorruptionKind, Message, PartyId, Payload, Transcript};
use crate::simnet::{TAG_ANSWER, TAG_DEAL};
use crate::vss::{SharingScheme, TAG_ECHO};

/// Tags whose payload must never leave a secure channel.
const SECRET_TAGS: [&str; 6] = [TAG_DEAL, TAG_ECHO, TAG_QKD_RAW, TAG_OUT_KEY, TAG_OUT_SHARE, TAG_PARITY_B];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    /// The transcript has nothing this check applies to.
    NotApplicable,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Check {
    pub status: Status,
    pub detail: String,
}

impl Check {
    fn pass(detail: impl Into<String>) -> Self {
        Self { status: Status::Pass, detail: detail.into() }
    }

    fn fail(detail: impl Into<String>) -> Self {
        Self { status: Status::Fail, detail: detail.into() }
    }

    fn skip(detail: impl Into<String>) -> Self {
        Self { status: Status::NotApplicable, detail: detail.into() }
    }

    pub fn failed(&self) -> bool {
        self.status == Status::Fail
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditReport {
    pub correctness: Check,
    pub structural_secrecy: Check,
    pub channel_secrecy: Check,
    pub leak_recount: Check,
    pub extractor_rank: Check,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.checks().iter().all(|(_, c)| !c.failed())
    }

    pub fn checks(&self) -> [(&'static str, &Check); 5] {
        [
            ("correctness", &self.correctness),
            ("structural_secrecy", &self.structural_secrecy),
            ("channel_secrecy", &self.channel_secrecy),
            ("leak_recount", &self.leak_recount),
            ("extractor_rank", &self.extractor_rank),
        ]
    }
}

/// Runs every check. `claimed_leak` is the reconciliation leak the run
/// reported; without it the recount is only reported.
pub fn audit(transcript: &Transcript, sc: &Scenario, claimed_leak: Option<usize>) -> Result<AuditReport> {
    let kinds = sc.corruption_kinds();
    let honest = |p: PartyId| kinds.get(&p).is_none_or(|k| *k == CorruptionKind::Honest);
    let msgs = transcript.messages();
    Ok(AuditReport {
        correctness: correctness(msgs, sc),
        structural_secrecy: structural_secrecy(msgs, &honest),
        channel_secrecy: channel_secrecy(transcript, &kinds),
        leak_recount: leak_recount(msgs, &honest, claimed_leak),
        extractor_rank: extractor_rank(msgs, &honest)?,
    })
}

/// Key a key manager ended up with: whole keys are XORed, share bundles are
/// voted with the lab scheme and combined.
pub fn km_key(msgs: &[Message], km: PartyId, scheme: Option<&SharingScheme>) -> Option<BitString> {
    let inbound: Vec<&Message> = msgs
        .iter()
        .filter(|m| m.receiver == Some(km) && (m.tag == TAG_OUT_KEY || m.tag == TAG_OUT_SHARE))
        .collect();
    let session = inbound.last()?.session;
    let inbound: Vec<&Message> = inbound.into_iter().filter(|m| m.session == session).collect();
    if inbound.iter().all(|m| m.tag == TAG_OUT_KEY) {
        let mut acc: Option<BitString> = None;
        for m in inbound {
            let Payload::Bits(b) = &m.payload else { return None };
            acc = Some(match acc {
                None => b.clone(),
                Some(a) => a.xor(b).ok()?,
            });
        }
        return acc;
    }
    let scheme = scheme?;
    let q = scheme.q();
    let bundles: Vec<(PartyId, &Vec<(u32, BitString)>)> = inbound
        .iter()
        .filter(|m| m.tag == TAG_OUT_SHARE && scheme.index_of(m.sender).is_some())
        .filter_map(|m| match &m.payload {
            Payload::Shares(v) => Some((m.sender, v)),
            _ => None,
        })
        .collect();
    let top = bundles.iter().flat_map(|(_, v)| v.iter().map(|(k, _)| *k as usize)).max()?;
    let slots = top / q + 1;
    let mut key: Option<BitString> = None;
    for idx in 0..slots * q {
        let holders = scheme.holder_ids(idx % q);
        let reports: Vec<(PartyId, &BitString)> = bundles
            .iter()
            .filter(|(p, _)| holders.contains(p))
            .filter_map(|(p, e)| e.iter().find(|(k, _)| *k as usize == idx).map(|(_, b)| (*p, b)))
            .collect();
        let v = scheme.vote_share(idx % q, &reports)?;
        key = Some(match key {
            None => v,
            Some(k) => k.xor(&v).ok()?,
        });
    }
    key
}

fn correctness(msgs: &[Message], sc: &Scenario) -> Check {
    let (sa, sb) = (sc.lab_scheme(true).ok(), sc.lab_scheme(false).ok());
    let ka = km_key(msgs, PartyId::km_a(), sa.as_ref());
    let kb = km_key(msgs, PartyId::km_b(), sb.as_ref());
    let delivered = |km: PartyId| msgs.iter().any(|m| m.receiver == Some(km) && m.tag.starts_with("out/"));
    match (ka, kb) {
        (Some(a), Some(b)) if a == b => Check::pass(format!("both key managers hold the same {} bits", a.len())),
        (Some(a), Some(b)) => {
            let d = a.hamming(&b).map_or_else(|_| format!("lengths {} and {}", a.len(), b.len()), |d| format!("{d} bits differ"));
            Check::fail(format!("key managers disagree: {d}"))
        }
        (None, None) if !delivered(PartyId::km_a()) && !delivered(PartyId::km_b()) => Check::skip("no key was delivered"),
        _ => Check::fail("only one key manager could reconstruct a key"),
    }
}

/// Share `j` of a session -> parties that received or echoed it.
fn share_holders(msgs: &[&Message]) -> BTreeMap<u32, BTreeSet<PartyId>> {
    let mut out: BTreeMap<u32, BTreeSet<PartyId>> = BTreeMap::new();
    for m in msgs {
        let Payload::Shares(v) = &m.payload else { continue };
        for (j, _) in v {
            let e = out.entry(*j).or_default();
            if m.tag == TAG_DEAL {
                e.extend(m.receiver);
            } else if m.tag == TAG_ECHO {
                e.insert(m.sender);
            }
        }
    }
    out
}

fn structural_secrecy(msgs: &[Message], honest: &dyn Fn(PartyId) -> bool) -> Check {
    let mut sessions: BTreeMap<u32, Vec<&Message>> = BTreeMap::new();
    for m in msgs.iter().filter(|m| m.tag == TAG_DEAL || m.tag == TAG_ECHO || m.tag == TAG_ANSWER) {
        sessions.entry(m.session).or_default().push(m);
    }
    let mut checked = 0usize;
    let mut exposed = Vec::new();
    for (s, ms) in &sessions {
        let Some(dealer) = ms.iter().find(|m| m.tag == TAG_DEAL).map(|m| m.sender) else { continue };
        if !honest(dealer) {
            continue;
        }
        checked += 1;
        let opened: BTreeSet<u32> = ms
            .iter()
            .filter(|m| m.tag == TAG_ANSWER)
            .filter_map(|m| match &m.payload {
                Payload::Shares(v) => Some(v.iter().map(|(j, _)| *j).collect::<Vec<_>>()),
                _ => None,
            })
            .flatten()
            .collect();
        let safe = share_holders(ms)
            .iter()
            .any(|(j, holders)| !opened.contains(j) && holders.iter().all(|p| honest(*p)));
        if !safe {
            exposed.push(*s);
        }
    }
    match (checked, exposed.is_empty()) {
        (0, _) => Check::skip("no sharing with an honest dealer"),
        (n, true) => Check::pass(format!("{n} honest-dealer sharings each keep a share away from the adversary")),
        (n, false) => Check::fail(format!("{} of {n} honest-dealer sharings fully exposed, sessions {exposed:?}", exposed.len())),
    }
}

fn channel_secrecy(transcript: &Transcript, kinds: &BTreeMap<PartyId, CorruptionKind>) -> Check {
    let honest = |p: &PartyId| kinds.get(p).is_none_or(|k| *k == CorruptionKind::Honest);
    let mut problems = Vec::new();
    for m in transcript.messages() {
        if m.channel == ChannelKind::Secure && !m.receiver.is_some_and(|r| edge_allowed(m.sender, r, ChannelKind::Secure)) {
            problems.push(format!("round {}: secure {} from {} on a disallowed edge", m.round, m.tag, m.sender));
        }
        if m.channel != ChannelKind::Secure && SECRET_TAGS.contains(&m.tag.as_str()) && honest(&m.sender) {
            problems.push(format!("round {}: {} from {} sent in the clear", m.round, m.tag, m.sender));
        }
    }
    let leaked = eve_view(transcript, kinds)
        .into_iter()
        .filter(|m| m.channel == ChannelKind::Secure && honest(&m.sender) && m.receiver.as_ref().is_some_and(honest))
        .count();
    if leaked > 0 {
        problems.push(format!("{leaked} honest secure messages visible to the adversary"));
    }
    let secure = transcript.messages().iter().filter(|m| m.channel == ChannelKind::Secure).count();
    match problems.first() {
        None => Check::pass(format!("{secure} secure messages, none exposed")),
        Some(p) => Check::fail(format!("{} problems, first: {p}", problems.len())),
    }
}

/// Parities disclosed per batch: one batch is one `(session, round)` of
/// `ec/parity-a` traffic, sized by the first honest sender.
pub fn recount_leak(msgs: &[Message], honest: &dyn Fn(PartyId) -> bool) -> usize {
    let mut batches: BTreeMap<(u32, u64), usize> = BTreeMap::new();
    for m in msgs.iter().filter(|m| m.tag == TAG_PARITY_A) {
        let rows = match &m.payload {
            Payload::Bits(b) => b.len(),
            Payload::Shares(v) => v.first().map_or(0, |(_, b)| b.len()),
            _ => 0,
        };
        let key = (m.session, m.round);
        if honest(m.sender) {
            batches.entry(key).or_insert(rows);
        }
    }
    batches.values().sum()
}

fn leak_recount(msgs: &[Message], honest: &dyn Fn(PartyId) -> bool, claimed: Option<usize>) -> Check {
    let n = recount_leak(msgs, honest);
    match claimed {
        None => Check::skip(format!("recounted {n} bits, nothing to compare against")),
        Some(c) if c == n => Check::pass(format!("{n} parity bits, as reported")),
        Some(c) => Check::fail(format!("recounted {n} parity bits, run reported {c}")),
    }
}

fn extractor_rank(msgs: &[Message], honest: &dyn Fn(PartyId) -> bool) -> Result<Check> {
    let frame = msgs.iter().filter(|m| m.tag == TAG_FRAME && honest(m.sender)).find_map(|m| match &m.payload {
        Payload::Indices(v) => Some(v.clone()),
        _ => None,
    });
    let seed = msgs.iter().filter(|m| m.tag == TAG_XT_SEED && honest(m.sender)).find_map(|m| match &m.payload {
        Payload::Seed { out_len, in_len, seed } => Some((*out_len as usize, *in_len as usize, seed.clone())),
        _ => None,
    });
    let (Some(frame), Some((out_len, in_len, seed))) = (frame, seed) else {
        return Ok(Check::skip("no extractor in this run"));
    };
    if frame.is_empty() || in_len % frame.len() != 0 {
        return Ok(Check::fail(format!("frame of {} pairs does not divide input length {in_len}", frame.len())));
    }
    let n_len = in_len / frame.len();
    let cols: Vec<usize> = frame
        .iter()
        .enumerate()
        .filter(|(_, &pair)| honest(PartyId::qkd_a(pair)) && honest(PartyId::qkd_b(pair)))
        .flat_map(|(slot, _)| slot * n_len..(slot + 1) * n_len)
        .collect();
    let h = ToeplitzHash::sample(out_len, in_len, &seed)?;
    let rank = h.to_matrix().select_columns(&cols).rank();
    Ok(if rank == out_len {
        Check::pass(format!("honest block has full rank {rank}"))
    } else {
        Check::fail(format!("honest block rank {rank} below output length {out_len}"))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distproc::PipelineParams;
    use crate::protocols::{self, CorruptionSpec};
    use crate::simnet::StrategyKind;

    fn small(pairs: usize, seed: u64) -> Scenario {
        Scenario {
            pairs,
            pulses: 1200,
            params: PipelineParams { eps_cor: 1e-6, eps_pa: 1e-6, ..Default::default() },
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn honest_protocol2_passes_everything() {
        let sc = small(1, 3);
        let o = protocols::protocol2(&sc).unwrap();
        let r = audit(&o.transcript, &sc, Some(o.leak_ec)).unwrap();
        assert!(r.passed(), "{r:?}");
        assert_eq!(r.correctness.status, Status::Pass);
        assert_eq!(r.structural_secrecy.status, Status::Pass);
        assert_eq!(r.leak_recount.status, Status::Pass);
        assert_eq!(r.extractor_rank.status, Status::NotApplicable);
        let wrong = audit(&o.transcript, &sc, Some(o.leak_ec + 1)).unwrap();
        assert!(wrong.leak_recount.failed());
    }

    #[test]
    fn protocol_runs_pass_and_recount_matches() {
        let sc = Scenario { t: 1, ..small(3, 4) };
        for kind in [protocols::ProtocolKind::Protocol1, protocols::ProtocolKind::Protocol3] {
            let o = protocols::run(&sc, kind).unwrap();
            let r = audit(&o.transcript, &sc, Some(o.leak_ec)).unwrap();
            assert!(r.passed(), "{kind:?} {r:?}");
            assert_eq!(r.extractor_rank.status, Status::Pass, "{kind:?}");
        }
    }

    #[test]
    fn over_corruption_breaks_structural_secrecy() {
        let sc = Scenario {
            corruption: vec![(PartyId::cp_a(1), CorruptionSpec::Passive), (PartyId::cp_a(2), CorruptionSpec::Passive)],
            enforce_corruption: false,
            ..small(1, 5)
        };
        let o = protocols::protocol2(&sc).unwrap();
        let r = audit(&o.transcript, &sc, Some(o.leak_ec)).unwrap();
        assert!(r.structural_secrecy.failed(), "{r:?}");
        assert!(!r.channel_secrecy.failed());
    }

    #[test]
    fn naive_demo_fails_correctness() {
        let sc = Scenario {
            corruption: vec![(PartyId::cp_b(1), CorruptionSpec::Active(StrategyKind::FlipAll))],
            ..small(3, 6)
        };
        let sc = Scenario { units_a: 3, units_b: 3, ..sc };
        let o = protocols::naive_demo(&sc).unwrap();
        let r = audit(&o.transcript, &sc, Some(o.leak_ec)).unwrap();
        assert!(r.correctness.failed(), "{r:?}");
    }

    #[test]
    fn clear_text_secret_is_flagged() {
        let sc = small(1, 7);
        let o = protocols::protocol2(&sc).unwrap();
        let mut msgs = o.transcript.messages().to_vec();
        let m = msgs.iter_mut().find(|m| m.tag == TAG_DEAL).unwrap();
        m.channel = ChannelKind::Authenticated;
        let jsonl: String = msgs.iter().map(|m| serde_json::to_string(m).unwrap() + "\n").collect();
        let t = Transcript::read_jsonl(jsonl.as_bytes()).unwrap();
        assert!(audit(&t, &sc, None).unwrap().channel_secrecy.failed());
    }
}
