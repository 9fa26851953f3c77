//! Post-processing spread over `s` Alice-side and `r` Bob-side units.
//!
//! The driver steps every unit through each phase; a unit only ever uses its
//! own shares and what arrives in its inbox. Public values are voted on by
//! the receiving lab, share values share by share.

use std::collections::{BTreeMap, BTreeSet};

use super::*;
use crate::distproc::{
    batch_parities, parameter_estimate, privacy_amplify, sift_with, CascadePlanner, Estimate, KeyLengthPolicy, SiftPlan,
};
use crate::simnet::Lab;
use crate::vss::{open_shares, rbs, ss_combine, vss_share, Deal, Holding, OpenItem, TAG_CONFIRM};

const TAG_INFO: &str = "pp/info";
const TAG_EST: &str = "pe/est";
const TAG_EV_SEED: &str = "ev/seed";
const TAG_EV_HASH: &str = "ev/hash";
const TAG_PA_SEED: &str = "pa/seed";

struct Labs {
    a: SharingScheme,
    b: SharingScheme,
}

impl Labs {
    fn of(sc: &Scenario) -> Result<Self> {
        Ok(Self { a: sc.lab_scheme(true)?, b: sc.lab_scheme(false)? })
    }

    fn scheme(&self, alice: bool) -> &SharingScheme {
        if alice {
            &self.a
        } else {
            &self.b
        }
    }

    fn all(&self) -> Vec<PartyId> {
        self.a.parties().iter().chain(self.b.parties()).copied().collect()
    }
}

fn is_alice(p: PartyId) -> bool {
    p.lab() == Lab::Alice
}

/// One unit's state while processing one module pair.
struct Unit {
    id: PartyId,
    alice: bool,
    abort: Option<AbortReason>,
    raw: Holding,
    info_own: Option<ProtocolInfo>,
    info_other: Option<ProtocolInfo>,
    key: Holding,
    est: Holding,
    n_key: usize,
    est_rate: Option<f64>,
    planner: Option<CascadePlanner>,
    out: Holding,
    out_len: usize,
    hv_seed: Option<BitString>,
    hp_seed: Option<BitString>,
}

impl Unit {
    fn new(id: PartyId) -> Self {
        Self {
            id,
            alice: is_alice(id),
            abort: None,
            raw: Holding::new(),
            info_own: None,
            info_other: None,
            key: Holding::new(),
            est: Holding::new(),
            n_key: 0,
            est_rate: None,
            planner: None,
            out: Holding::new(),
            out_len: 0,
            hv_seed: None,
            hp_seed: None,
        }
    }

    fn live(&self) -> bool {
        self.abort.is_none()
    }

    fn fail(&mut self, r: AbortReason) {
        if self.abort.is_none() {
            self.abort = Some(r);
        }
    }
}

struct PairRun {
    units: Vec<Unit>,
    report: PairReport,
    consistent: bool,
}

impl PairRun {
    fn unit(&self, p: PartyId) -> &Unit {
        self.units.iter().find(|u| u.id == p).expect("unit of this lab")
    }
}

/// Index of the unit whose view decides the pair: the first honest one.
fn reference(units: &[Unit], corrupt: &BTreeSet<PartyId>) -> usize {
    units.iter().position(|u| !corrupt.contains(&u.id)).unwrap_or(0)
}

fn finish(pair: usize, units: Vec<Unit>, corrupt: &BTreeSet<PartyId>) -> PairRun {
    let r = &units[reference(&units, corrupt)];
    let honest: Vec<&Unit> = units.iter().filter(|u| !corrupt.contains(&u.id)).collect();
    let consistent = honest.iter().all(|u| u.abort == r.abort && u.out_len == r.out_len);
    let report = PairReport {
        pair: pair + 1,
        abort: r.abort,
        n_key: r.n_key,
        est_rate: r.est_rate,
        leak: r.planner.as_ref().map_or(0, |p| p.leak()),
        batch_sizes: r.planner.as_ref().map_or_else(Vec::new, |p| p.batch_sizes().to_vec()),
        out_len: if r.abort.is_some() { 0 } else { r.out_len },
        hv_seed: r.hv_seed.clone(),
        hp_seed: r.hp_seed.clone(),
    };
    PairRun { units, report, consistent }
}

type Entries = Vec<(u32, BitString)>;

fn entries(h: &Holding) -> Entries {
    h.iter().map(|(j, v)| (*j as u32, v.clone())).collect()
}

/// Votes every indexed value `slot·q + j` (for `slot < slots`) from the
/// `Shares` bundles sent by members of `scheme`, plus the receiver's own.
fn voted_indexed(
    scheme: &SharingScheme,
    inbox: &[Message],
    session: u32,
    tag: &str,
    own: Option<(PartyId, &Entries)>,
    slots: usize,
) -> Option<Vec<BitString>> {
    let mut bundles: Vec<(PartyId, &Entries)> = inbox
        .iter()
        .filter(|m| m.session == session && m.tag == tag && scheme.index_of(m.sender).is_some())
        .filter_map(|m| match &m.payload {
            Payload::Shares(v) => Some((m.sender, v)),
            _ => None,
        })
        .collect();
    if let Some((p, e)) = own {
        if scheme.index_of(p).is_some() {
            bundles.retain(|(s, _)| *s != p);
            bundles.push((p, e));
        }
    }
    let q = scheme.q();
    (0..slots * q)
        .map(|idx| {
            let holders = scheme.holder_ids(idx % q);
            let reports: Vec<(PartyId, &BitString)> = bundles
                .iter()
                .filter(|(p, _)| holders.contains(p))
                .filter_map(|(p, e)| e.iter().find(|(k, _)| *k as usize == idx).map(|(_, b)| (*p, b)))
                .collect();
            scheme.vote_share(idx % q, &reports)
        })
        .collect()
}

fn voted_secret(
    scheme: &SharingScheme,
    inbox: &[Message],
    session: u32,
    tag: &str,
    own: Option<(PartyId, &Entries)>,
    slots: usize,
) -> Option<BitString> {
    ss_combine(&voted_indexed(scheme, inbox, session, tag, own, slots)?).ok()
}

/// A value every announcer of `scheme` should have sent identically.
fn voted_public(scheme: &SharingScheme, inbox: &[Message], session: u32, tag: &str) -> Option<BitString> {
    let reports: Vec<(PartyId, &BitString)> = scheme
        .announcer_ids()
        .into_iter()
        .filter_map(|a| bits_from(inbox, session, tag, a).map(|b| (a, b)))
        .collect();
    scheme.vote_announced(&reports)
}

/// Alice-side RBS, then announcement of the result to Bob's lab.
/// Returns each unit's view of the seed, `None` where it failed.
fn shared_seed(
    net: &mut Network,
    labs: &Labs,
    len: usize,
    dims: (usize, usize),
    tag: &str,
) -> Result<BTreeMap<PartyId, std::result::Result<BitString, AbortReason>>> {
    let run = rbs(net, &labs.a, len)?;
    let mut views = BTreeMap::new();
    for &p in labs.a.parties() {
        let v = match &run.outputs[&p] {
            Ok(s) => Ok(s.clone()),
            Err(_) => Err(AbortReason::Sharing),
        };
        views.insert(p, v);
    }
    let s = net.new_session();
    for a in labs.a.announcer_ids() {
        if let Ok(seed) = &views[&a] {
            let payload = Payload::Seed { out_len: dims.0 as u32, in_len: dims.1 as u32, seed: seed.clone() };
            for &b in labs.b.parties() {
                net.send(a, b, ChannelKind::Authenticated, s, tag, payload.clone())?;
            }
        }
    }
    let inbox = deliver(net, labs.b.parties());
    for &b in labs.b.parties() {
        let v = voted_public(&labs.a, &inbox[&b], s, tag).filter(|x| x.len() == len).ok_or(AbortReason::Vote);
        views.insert(b, v);
    }
    Ok(views)
}

macro_rules! checkpoint {
    ($pair:expr, $units:expr, $corrupt:expr) => {
        if $units[reference(&$units, $corrupt)].abort.is_some() {
            return Ok(finish($pair, $units, $corrupt));
        }
    };
}

/// Runs every post-processing phase for module pair `pair` over both labs.
fn run_pair(
    net: &mut Network,
    labs: &Labs,
    sc: &Scenario,
    pair: usize,
    params: &PipelineParams,
) -> Result<PairRun> {
    let session = sc.session(pair)?;
    let corrupt: BTreeSet<PartyId> = net.corruption().corrupted().collect();
    let corrupt = &corrupt;
    let (qa, qb) = (PartyId::qkd_a(pair as u32 + 1), PartyId::qkd_b(pair as u32 + 1));
    let ids = labs.all();
    let mut units: Vec<Unit> = ids.iter().map(|&id| Unit::new(id)).collect();

    // modules share their raw keys and hand over protocol information
    let ra = vss_share(net, &labs.a, &[Deal::secret(qa, session.raw_a.clone())])?;
    let rb = vss_share(net, &labs.b, &[Deal::secret(qb, session.raw_b.clone())])?;
    let s = net.new_session();
    for &p in labs.a.parties() {
        net.send(qa, p, ChannelKind::Secure, s, TAG_QKD_INFO, Payload::Bits(session.info_a.to_bits()))?;
    }
    for &p in labs.b.parties() {
        net.send(qb, p, ChannelKind::Secure, s, TAG_QKD_INFO, Payload::Bits(session.info_b.to_bits()))?;
    }
    let inbox = deliver(net, &ids);
    for u in &mut units {
        let (run, module) = if u.alice { (&ra, qa) } else { (&rb, qb) };
        match run.holding(u.id, 0) {
            Ok(h) => u.raw = h.clone(),
            Err(_) => u.fail(AbortReason::Sharing),
        }
        u.info_own = bits_from(&inbox[&u.id], s, TAG_QKD_INFO, module).and_then(|b| ProtocolInfo::from_bits(b).ok());
        if u.info_own.is_none() {
            u.fail(AbortReason::Vote);
        }
    }
    checkpoint!(pair, units, corrupt);

    // announcers forward their lab's information to the other lab
    let s = net.new_session();
    for u in units.iter().filter(|u| u.live()) {
        let scheme = labs.scheme(u.alice);
        if !scheme.announcer_ids().contains(&u.id) {
            continue;
        }
        let bits = u.info_own.as_ref().expect("live").to_bits();
        for &p in labs.scheme(!u.alice).parties() {
            net.send(u.id, p, ChannelKind::Authenticated, s, TAG_INFO, Payload::Bits(bits.clone()))?;
        }
    }
    let inbox = deliver(net, &ids);
    for u in units.iter_mut().filter(|u| u.live()) {
        u.info_other = voted_public(labs.scheme(!u.alice), &inbox[&u.id], s, TAG_INFO)
            .and_then(|b| ProtocolInfo::from_bits(&b).ok());
        let infos = match (&u.info_own, &u.info_other) {
            (Some(own), Some(other)) => Some(if u.alice { (own, other) } else { (other, own) }),
            _ => None,
        };
        let plan = infos.and_then(|(a, b)| SiftPlan::new(a, b).ok().filter(|_| a.len() == session_len(&u.raw)));
        match plan {
            Some(plan) => {
                u.n_key = plan.key_pos.len();
                for (j, share) in &u.raw {
                    let sifted = sift_with(share, &plan);
                    u.key.insert(*j, sifted.key);
                    u.est.insert(*j, sifted.est);
                }
            }
            None => u.fail(AbortReason::Vote),
        }
    }
    checkpoint!(pair, units, corrupt);

    // parameter estimation: open both estimation strings to every unit
    let live: Vec<PartyId> = units.iter().filter(|u| u.live()).map(|u| u.id).collect();
    let items: Vec<OpenItem<'_>> = [true, false]
        .iter()
        .map(|&alice| OpenItem {
            scheme: labs.scheme(alice),
            tag: TAG_EST,
            channel: ChannelKind::Authenticated,
            holdings: units.iter().filter(|u| u.live() && u.alice == alice).map(|u| (u.id, u.est.clone())).collect(),
            receivers: live.clone(),
        })
        .collect();
    let opened = open_shares(net, &items)?;
    for u in units.iter_mut().filter(|u| u.live()) {
        let est: Vec<Option<BitString>> = opened[&u.id]
            .iter()
            .map(|r| r.as_ref().and_then(|x| x.as_ref().ok()).and_then(|shares| ss_combine(shares).ok()))
            .collect();
        match (&est[0], &est[1]) {
            (Some(a), Some(b)) if a.len() == b.len() => match parameter_estimate(a, b, params.abort_threshold)? {
                Estimate::Pass(rate) => u.est_rate = Some(rate),
                Estimate::Abort(None) => u.fail(AbortReason::EmptyEstimate),
                Estimate::Abort(Some(rate)) => {
                    u.est_rate = Some(rate);
                    u.fail(AbortReason::EstimateTooNoisy);
                }
            },
            _ => u.fail(AbortReason::Vote),
        }
    }
    checkpoint!(pair, units, corrupt);

    // Cascade, two rounds per batch
    let ec_seed = sc.ec_seed(pair);
    for u in units.iter_mut().filter(|u| u.live()) {
        u.planner = Some(CascadePlanner::new(u.n_key, &params.cascade, ec_seed));
    }
    loop {
        let r = reference(&units, corrupt);
        if !units[r].live() || units[r].planner.as_ref().is_none_or(|p| p.is_done()) {
            break;
        }
        let s = net.new_session();
        let mut own: BTreeMap<PartyId, Entries> = BTreeMap::new();
        for u in units.iter().filter(|u| u.live()) {
            let Some(queries) = u.planner.as_ref().and_then(|p| p.next_batch()) else { continue };
            let bundle: Entries = u.key.iter().map(|(j, k)| (*j as u32, batch_parities(k, queries))).collect();
            for &b in labs.b.parties() {
                if u.alice {
                    net.send(u.id, b, ChannelKind::Authenticated, s, TAG_PARITY_A, Payload::Shares(bundle.clone()))?;
                } else if b != u.id {
                    net.send(u.id, b, ChannelKind::Secure, s, TAG_PARITY_B, Payload::Shares(bundle.clone()))?;
                }
            }
            own.insert(u.id, bundle);
        }
        let inbox = deliver(net, &ids);
        let mut mismatches = BTreeMap::new();
        for u in units.iter_mut().filter(|u| u.live() && !u.alice) {
            let sa = voted_secret(&labs.a, &inbox[&u.id], s, TAG_PARITY_A, None, 1);
            let sb = voted_secret(&labs.b, &inbox[&u.id], s, TAG_PARITY_B, own.get(&u.id).map(|e| (u.id, e)), 1);
            let mismatch = match (sa, sb) {
                (Some(a), Some(b)) => a.xor(&b).ok(),
                _ => None,
            };
            let planner = u.planner.as_mut().expect("live");
            match mismatch.map(|m| (planner.feed(&m), m)) {
                Some((Ok(flips), m)) => {
                    if let Some(k0) = u.key.get_mut(&0) {
                        for f in flips {
                            k0.flip(f);
                        }
                    }
                    mismatches.insert(u.id, m);
                }
                _ => u.fail(AbortReason::Vote),
            }
        }
        let s = net.new_session();
        for a in labs.b.announcer_ids() {
            if let Some(m) = mismatches.get(&a) {
                for &p in labs.a.parties() {
                    net.send(a, p, ChannelKind::Authenticated, s, TAG_MISMATCH, Payload::Bits(m.clone()))?;
                }
            }
        }
        let inbox = deliver(net, &ids);
        for u in units.iter_mut().filter(|u| u.live() && u.alice) {
            let fed = voted_public(&labs.b, &inbox[&u.id], s, TAG_MISMATCH)
                .map(|m| u.planner.as_mut().expect("live").feed(&m).is_ok());
            if fed != Some(true) {
                u.fail(AbortReason::Vote);
            }
        }
    }
    for u in units.iter_mut().filter(|u| u.live()) {
        if !u.planner.as_ref().is_some_and(|p| p.is_done()) {
            u.fail(AbortReason::Vote);
        }
    }
    checkpoint!(pair, units, corrupt);

    // error verification
    let r = reference(&units, corrupt);
    let n_key = units[r].n_key;
    let hash_len = params.hash_len();
    let seeds = shared_seed(net, labs, toeplitz_seed_len(hash_len, n_key), (hash_len, n_key), TAG_EV_SEED)?;
    let s = net.new_session();
    let mut own: BTreeMap<PartyId, Entries> = BTreeMap::new();
    for u in units.iter_mut().filter(|u| u.live()) {
        let hv = match &seeds[&u.id] {
            Ok(seed) => ToeplitzHash::sample(hash_len, u.n_key, seed).ok(),
            Err(e) => {
                u.fail(*e);
                continue;
            }
        };
        let Some(hv) = hv else {
            u.fail(AbortReason::Vote);
            continue;
        };
        u.hv_seed = Some(hv.seed().clone());
        let bundle: Entries = u.key.iter().map(|(j, k)| (*j as u32, hv.apply(k).expect("sifted length"))).collect();
        for &p in &ids {
            if p != u.id {
                net.send(u.id, p, ChannelKind::Authenticated, s, TAG_EV_HASH, Payload::Shares(bundle.clone()))?;
            }
        }
        own.insert(u.id, bundle);
    }
    let inbox = deliver(net, &ids);
    for u in units.iter_mut().filter(|u| u.live()) {
        let mine = own.get(&u.id).map(|e| (u.id, e));
        let ha = voted_secret(&labs.a, &inbox[&u.id], s, TAG_EV_HASH, mine, 1);
        let hb = voted_secret(&labs.b, &inbox[&u.id], s, TAG_EV_HASH, mine, 1);
        match (ha, hb) {
            (Some(a), Some(b)) if a == b => {}
            (Some(_), Some(_)) => u.fail(AbortReason::VerificationFailed),
            _ => u.fail(AbortReason::Vote),
        }
    }
    checkpoint!(pair, units, corrupt);

    // privacy amplification
    for u in units.iter_mut().filter(|u| u.live()) {
        let leak = u.planner.as_ref().map_or(0, |p| p.leak());
        u.out_len = params.policy().out_len(u.n_key, u.est_rate.unwrap_or(0.0), leak);
        if u.out_len == 0 {
            u.fail(AbortReason::ZeroLength);
        }
    }
    checkpoint!(pair, units, corrupt);
    let out_len = units[reference(&units, corrupt)].out_len;
    let seeds = shared_seed(net, labs, toeplitz_seed_len(out_len, n_key), (out_len, n_key), TAG_PA_SEED)?;
    for u in units.iter_mut().filter(|u| u.live()) {
        match &seeds[&u.id] {
            Ok(seed) if u.out_len == out_len => {
                let out: Result<Holding> =
                    u.key.iter().map(|(j, k)| privacy_amplify(k, out_len, seed).map(|v| (*j, v))).collect();
                match out {
                    Ok(o) => {
                        u.out = o;
                        u.hp_seed = Some(seed.clone());
                    }
                    Err(_) => u.fail(AbortReason::Vote),
                }
            }
            Ok(_) => u.fail(AbortReason::Vote),
            Err(e) => u.fail(*e),
        }
    }
    Ok(finish(pair, units, corrupt))
}

fn session_len(raw: &Holding) -> usize {
    raw.values().next().map_or(0, BitString::len)
}

/// Each live unit hands its indexed output shares to its lab's key manager.
fn deliver_to_km(
    net: &mut Network,
    labs: &Labs,
    out: &BTreeMap<PartyId, Entries>,
    slots: usize,
) -> Result<(Option<BitString>, Option<BitString>)> {
    let s = net.new_session();
    for (&p, e) in out {
        let km = if is_alice(p) { PartyId::km_a() } else { PartyId::km_b() };
        net.send(p, km, ChannelKind::Secure, s, TAG_OUT_SHARE, Payload::Shares(e.clone()))?;
    }
    let inbox = deliver(net, &[PartyId::km_a(), PartyId::km_b()]);
    let ka = voted_secret(&labs.a, &inbox[&PartyId::km_a()], s, TAG_OUT_SHARE, None, slots);
    let kb = voted_secret(&labs.b, &inbox[&PartyId::km_b()], s, TAG_OUT_SHARE, None, slots);
    Ok((ka, kb))
}

fn outcome(kind: ProtocolKind, net: Network) -> ProtocolOutcome {
    ProtocolOutcome {
        protocol: kind,
        abort: None,
        key_a: None,
        key_b: None,
        pairs: Vec::new(),
        m: 0,
        n_len: 0,
        t_used: 0,
        final_len: 0,
        leak_ec: 0,
        honest_consistent: true,
        repeat_ratio: None,
        rounds: net.round(),
        transcript: net.into_transcript(),
    }
}

pub fn protocol2(sc: &Scenario) -> Result<ProtocolOutcome> {
    sc.validate(ProtocolKind::Protocol2)?;
    protocol2_unchecked(sc, 0)
}

/// Protocol 2 on the raw keys of module pair `pair` (0-based) of `sc`.
pub fn protocol2_session(sc: &Scenario, pair: usize) -> Result<ProtocolOutcome> {
    if pair >= sc.pairs {
        return Err(Error::InvalidParameter(format!("pair {pair} out of range")));
    }
    Labs::of(sc)?;
    protocol2_unchecked(sc, pair)
}

fn protocol2_unchecked(sc: &Scenario, pair: usize) -> Result<ProtocolOutcome> {
    let labs = Labs::of(sc)?;
    let mut net = sc.network(ProtocolKind::Protocol2);
    let run = run_pair(&mut net, &labs, sc, pair, &sc.params)?;
    let (mut key_a, mut key_b) = (None, None);
    if run.report.abort.is_none() {
        let out: BTreeMap<PartyId, Entries> =
            run.units.iter().filter(|u| u.live()).map(|u| (u.id, entries(&u.out))).collect();
        (key_a, key_b) = deliver_to_km(&mut net, &labs, &out, 1)?;
    }
    let mut o = outcome(ProtocolKind::Protocol2, net);
    o.abort = run.report.abort;
    o.key_a = key_a;
    o.key_b = key_b;
    o.m = run.report.abort.is_none() as usize;
    o.n_len = run.report.out_len;
    o.final_len = run.report.out_len;
    o.leak_ec = run.report.leak;
    o.honest_consistent = run.consistent;
    o.pairs = vec![run.report];
    Ok(o)
}

pub fn protocol3(sc: &Scenario) -> Result<ProtocolOutcome> {
    sc.validate(ProtocolKind::Protocol3)?;
    let labs = Labs::of(sc)?;
    let mut net = sc.network(ProtocolKind::Protocol3);
    let params = sc.params.split_budget(sc.pairs);
    let corrupt: BTreeSet<PartyId> = net.corruption().corrupted().collect();
    let runs: Vec<PairRun> = (0..sc.pairs).map(|i| run_pair(&mut net, &labs, sc, i, &params)).collect::<Result<_>>()?;
    let reports: Vec<PairReport> = runs.iter().map(|r| r.report.clone()).collect();
    let (alive, n_len) = survivors_of(&reports);
    let aborted: Vec<usize> = (0..sc.pairs).filter(|i| !alive.contains(i)).collect();
    let t_used = sc.pair_penalty(&aborted);
    let m = alive.len();
    let final_len = m.saturating_sub(t_used) * n_len;
    let mut consistent = runs.iter().all(|r| r.consistent);
    let (mut key_a, mut key_b, mut abort) = (None, None, None);

    if final_len == 0 {
        abort = Some(AbortReason::ZeroLength);
    } else {
        let ids = labs.all();
        // a unit takes part if it is live in every surviving pair
        let live: Vec<PartyId> =
            ids.iter().copied().filter(|&p| alive.iter().all(|&i| runs[i].unit(p).live())).collect();
        let s = net.new_session();
        if let Some(&first) = labs.a.announcer_ids().iter().find(|a| live.contains(a)) {
            let frame = alive.iter().map(|&i| i as u32 + 1).collect();
            net.broadcast(first, s, TAG_FRAME, Payload::Indices(frame))?;
        }
        deliver(&mut net, &ids);
        let (out_len, in_len) = (final_len, m * n_len);
        let seeds = shared_seed(&mut net, &labs, toeplitz_seed_len(out_len, in_len), (out_len, in_len), TAG_XT_SEED)?;
        let mut out: BTreeMap<PartyId, Entries> = BTreeMap::new();
        for &p in &live {
            let Ok(seed) = &seeds[&p] else { continue };
            let h = ToeplitzHash::sample(out_len, in_len, seed)?;
            let q = labs.scheme(is_alice(p)).q();
            let mut e = Entries::new();
            for (slot, &i) in alive.iter().enumerate() {
                for (j, share) in &runs[i].unit(p).out {
                    let padded = share.truncated(n_len).zero_padded(slot * n_len, in_len);
                    e.push(((slot * q + j) as u32, h.apply(&padded)?));
                }
            }
            out.insert(p, e);
        }
        consistent &= ids.iter().filter(|p| !corrupt.contains(p)).all(|p| out.contains_key(p));
        (key_a, key_b) = deliver_to_km(&mut net, &labs, &out, m)?;
        if key_a.is_none() || key_b.is_none() {
            abort = Some(AbortReason::Vote);
        }
    }
    let mut o = outcome(ProtocolKind::Protocol3, net);
    o.abort = abort;
    o.key_a = key_a;
    o.key_b = key_b;
    o.leak_ec = total_leak(&reports);
    o.pairs = reports;
    o.m = m;
    o.n_len = n_len;
    o.t_used = t_used;
    o.final_len = if abort.is_some() { 0 } else { final_len };
    o.honest_consistent = consistent;
    Ok(o)
}

/// Each session `i` is distilled by the pair `CP_Ai`, `CP_Bi`; the keys are
/// then re-shared over all units, verified jointly and compressed.
pub fn alt_protocol(sc: &Scenario) -> Result<ProtocolOutcome> {
    sc.validate(ProtocolKind::Alt)?;
    let labs = Labs::of(sc)?;
    let mut net = sc.network(ProtocolKind::Alt);
    let corrupt: BTreeSet<PartyId> = net.corruption().corrupted().collect();
    let ids = labs.all();
    let mut reports = Vec::new();
    let mut keys = Vec::new();
    for i in 0..sc.pairs {
        let (cp_a, cp_b) = (PartyId::cp_a(i as u32 + 1), PartyId::cp_b(i as u32 + 1));
        let out = trusted_pair(&mut net, sc, i, cp_a, cp_b, &sc.params)?;
        reports.push(PairReport::from_pipeline(i + 1, &out));
        keys.push((out.key_a, out.key_b));
    }
    let (alive, n_len) = survivors_of(&reports);
    let m = alive.len();
    let hash_len = sc.params.hash_len();
    let penalty = 2 * sc.t_a;
    let final_len = (m.saturating_sub(penalty) * n_len).saturating_sub(hash_len);
    let mut abort: Option<AbortReason>;
    let mut status: BTreeMap<PartyId, Option<AbortReason>> = ids.iter().map(|&p| (p, None)).collect();
    let (mut key_a, mut key_b) = (None, None);

    if final_len == 0 {
        abort = Some(AbortReason::ZeroLength);
    } else {
        let in_len = m * n_len;
        let deal = |alice: bool| -> Vec<Deal> {
            alive
                .iter()
                .map(|&i| {
                    let (dealer, k) = if alice {
                        (PartyId::cp_a(i as u32 + 1), &keys[i].0)
                    } else {
                        (PartyId::cp_b(i as u32 + 1), &keys[i].1)
                    };
                    Deal::secret(dealer, k.truncated(n_len))
                })
                .collect()
        };
        let ra = vss_share(&mut net, &labs.a, &deal(true))?;
        let rb = vss_share(&mut net, &labs.b, &deal(false))?;
        let s = net.new_session();
        for &p in &ids {
            let run = if is_alice(p) { &ra } else { &rb };
            net.broadcast(p, s, TAG_CONFIRM, Payload::Flag(!run.aborted_at(p)))?;
        }
        let inbox = deliver(&mut net, &ids);
        let mut frames: BTreeMap<PartyId, Vec<(usize, BitString)>> = BTreeMap::new();
        for &p in &ids {
            let alice = is_alice(p);
            let scheme = labs.scheme(alice);
            let confirmed = scheme.parties().iter().all(|x| {
                inbox[&p].iter().any(|m| m.session == s && m.sender == *x && m.payload == Payload::Flag(true))
            });
            let run = if alice { &ra } else { &rb };
            if !confirmed || run.aborted_at(p) {
                status.insert(p, Some(AbortReason::Sharing));
                continue;
            }
            let q = scheme.q();
            let mut f = Vec::new();
            for slot in 0..m {
                for (j, share) in run.holding(p, slot).expect("confirmed") {
                    f.push((slot * q + j, share.zero_padded(slot * n_len, in_len)));
                }
            }
            frames.insert(p, f);
        }
        let hashed = |h: &ToeplitzHash, f: &[(usize, BitString)]| -> Result<Entries> {
            f.iter().map(|(idx, v)| Ok((*idx as u32, h.apply(v)?))).collect()
        };
        let seeds = shared_seed(&mut net, &labs, toeplitz_seed_len(hash_len, in_len), (hash_len, in_len), "ev/seed")?;
        let s = net.new_session();
        let mut own: BTreeMap<PartyId, Entries> = BTreeMap::new();
        for (&p, f) in &frames {
            let Ok(seed) = &seeds[&p] else {
                status.insert(p, Some(AbortReason::Sharing));
                continue;
            };
            let bundle = hashed(&ToeplitzHash::sample(hash_len, in_len, seed)?, f)?;
            for &x in &ids {
                if x != p {
                    net.send(p, x, ChannelKind::Authenticated, s, "ev/hash", Payload::Shares(bundle.clone()))?;
                }
            }
            own.insert(p, bundle);
        }
        let inbox = deliver(&mut net, &ids);
        for (&p, bundle) in &own {
            let ha = voted_secret(&labs.a, &inbox[&p], s, "ev/hash", Some((p, bundle)), m);
            let hb = voted_secret(&labs.b, &inbox[&p], s, "ev/hash", Some((p, bundle)), m);
            match (ha, hb) {
                (Some(a), Some(b)) if a == b => {}
                (Some(_), Some(_)) => {
                    status.insert(p, Some(AbortReason::VerificationFailed));
                }
                _ => {
                    status.insert(p, Some(AbortReason::Vote));
                }
            }
        }
        let seeds = shared_seed(&mut net, &labs, toeplitz_seed_len(final_len, in_len), (final_len, in_len), "pa/seed")?;
        let mut out: BTreeMap<PartyId, Entries> = BTreeMap::new();
        for (&p, f) in &frames {
            if status[&p].is_some() {
                continue;
            }
            match &seeds[&p] {
                Ok(seed) => {
                    out.insert(p, hashed(&ToeplitzHash::sample(final_len, in_len, seed)?, f)?);
                }
                Err(e) => {
                    status.insert(p, Some(*e));
                }
            }
        }
        let reference = ids.iter().find(|p| !corrupt.contains(p)).copied().unwrap_or(ids[0]);
        abort = status[&reference];
        if abort.is_none() {
            (key_a, key_b) = deliver_to_km(&mut net, &labs, &out, m)?;
            if key_a.is_none() || key_b.is_none() {
                abort = Some(AbortReason::Vote);
            }
        }
    }
    let reference = ids.iter().find(|p| !corrupt.contains(p)).copied().unwrap_or(ids[0]);
    let consistent = ids.iter().filter(|p| !corrupt.contains(p)).all(|p| status[p] == status[&reference]);
    let mut o = outcome(ProtocolKind::Alt, net);
    o.abort = abort;
    o.key_a = key_a;
    o.key_b = key_b;
    o.leak_ec = total_leak(&reports);
    o.pairs = reports;
    o.m = m;
    o.n_len = n_len;
    o.t_used = penalty;
    o.final_len = if abort.is_some() { 0 } else { final_len };
    o.honest_consistent = consistent;
    o.repeat_ratio = (abort.is_none()).then(|| (sc.units_a * n_len) as f64 / final_len as f64);
    Ok(o)
}
