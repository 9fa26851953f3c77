//! Post-processing kernels. Every kernel is linear over GF(2), so it can be
//! applied to each share separately; the centralized versions here double as
//! the reference the distributed drivers are checked against.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gf2::{toeplitz_seed_len, verification_hash_len, BitString, ToeplitzHash};
use crate::qkdsim::{ProtocolInfo, SessionOutput};

/// Which sifted positions feed the key and which feed estimation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SiftPlan {
    pub key_pos: Vec<usize>,
    pub est_pos: Vec<usize>,
}

impl SiftPlan {
    /// Detected pulses with equal bases; Z/Z goes to the key, X/X to estimation.
    pub fn new(info_a: &ProtocolInfo, info_b: &ProtocolInfo) -> Result<Self> {
        if info_a.len() != info_b.len() || info_a.detected.len() != info_a.len() || info_b.detected.len() != info_b.len() {
            return Err(Error::LengthMismatch { left: info_a.len(), right: info_b.len() });
        }
        let mut plan = SiftPlan { key_pos: Vec::new(), est_pos: Vec::new() };
        for i in 0..info_a.len() {
            if !(info_a.detected.get(i) && info_b.detected.get(i)) {
                continue;
            }
            match (info_a.basis.get(i), info_b.basis.get(i)) {
                (false, false) => plan.key_pos.push(i),
                (true, true) => plan.est_pos.push(i),
                _ => {}
            }
        }
        Ok(plan)
    }

    pub fn pulses(&self) -> usize {
        self.key_pos.len() + self.est_pos.len()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SiftedShares {
    pub key: BitString,
    pub est: BitString,
}

pub fn sift_with(share: &BitString, plan: &SiftPlan) -> SiftedShares {
    SiftedShares { key: share.select(&plan.key_pos), est: share.select(&plan.est_pos) }
}

pub fn sift(share: &BitString, info_a: &ProtocolInfo, info_b: &ProtocolInfo) -> Result<SiftedShares> {
    if share.len() != info_a.len() {
        return Err(Error::LengthMismatch { left: share.len(), right: info_a.len() });
    }
    Ok(sift_with(share, &SiftPlan::new(info_a, info_b)?))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Estimate {
    Pass(f64),
    Abort(Option<f64>),
}

/// Disagreement rate between the opened estimation strings.
pub fn parameter_estimate(est_a: &BitString, est_b: &BitString, tolerance: f64) -> Result<Estimate> {
    if est_a.is_empty() && est_b.is_empty() {
        return Ok(Estimate::Abort(None));
    }
    let rate = est_a.hamming(est_b)? as f64 / est_a.len() as f64;
    Ok(if rate > tolerance { Estimate::Abort(Some(rate)) } else { Estimate::Pass(rate) })
}

pub fn parity_at(bits: &BitString, positions: &[usize]) -> bool {
    positions.iter().fold(false, |acc, &p| acc ^ bits.get(p))
}

/// Parity of each query, packed into one string.
pub fn batch_parities(bits: &BitString, queries: &[Vec<usize>]) -> BitString {
    BitString::from_bits(queries.iter().map(|q| parity_at(bits, q)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CascadeParams {
    pub design_qber: f64,
    pub passes: usize,
}

impl Default for CascadeParams {
    fn default() -> Self {
        Self { design_qber: 0.05, passes: 4 }
    }
}

impl CascadeParams {
    pub fn first_block(&self) -> usize {
        ((0.73 / self.design_qber).ceil() as usize).max(1)
    }
}

struct Pass {
    /// Pass-order slot → key position.
    perm: Vec<usize>,
    /// Key position → pass-order slot.
    inv: Vec<usize>,
    block: usize,
    odd: Vec<bool>,
    /// Interval under bisection, known to have odd mismatch parity.
    interval: Vec<Option<(usize, usize)>>,
}

impl Pass {
    fn block_range(&self, b: usize) -> (usize, usize) {
        let lo = b * self.block;
        (lo, (lo + self.block).min(self.perm.len()))
    }

    fn positions(&self, lo: usize, hi: usize) -> Vec<usize> {
        self.perm[lo..hi].to_vec()
    }
}

enum Pending {
    TopLevel(usize),
    /// Pass index and `(block, lo, hi)` of each bisected interval.
    Halves(usize, Vec<(usize, usize, usize)>),
}

/// Drives Cascade as a sequence of parity-query batches. It only ever sees the
/// parity mismatches, so Alice's and Bob's sides can run identical copies.
pub struct CascadePlanner {
    n: usize,
    passes_total: usize,
    passes: Vec<Pass>,
    seed: u64,
    params: CascadeParams,
    current: usize,
    pending: Option<(Pending, Vec<Vec<usize>>)>,
    leak: usize,
    batch_sizes: Vec<usize>,
    flips: Vec<usize>,
    max_batches: usize,
}

impl CascadePlanner {
    pub fn new(n: usize, params: &CascadeParams, seed: u64) -> Self {
        let mut planner = Self {
            n,
            passes_total: if n == 0 { 0 } else { params.passes },
            passes: Vec::new(),
            seed,
            params: params.clone(),
            current: 0,
            pending: None,
            leak: 0,
            batch_sizes: Vec::new(),
            flips: Vec::new(),
            max_batches: 64 * (n + 1) * params.passes.max(1),
        };
        planner.plan();
        planner
    }

    fn open_pass(&mut self) {
        let p = self.passes.len();
        let mut perm: Vec<usize> = (0..self.n).collect();
        if p > 0 {
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
            rng.set_stream(p as u64);
            perm.shuffle(&mut rng);
        }
        let mut inv = vec![0; self.n];
        for (slot, &k) in perm.iter().enumerate() {
            inv[k] = slot;
        }
        let block = (self.params.first_block() << p.min(40)).min(self.n).max(1);
        let blocks = self.n.div_ceil(block);
        self.passes.push(Pass { perm, inv, block, odd: vec![false; blocks], interval: vec![None; blocks] });
    }

    /// Prepares the next batch, applying any flips that need no query.
    fn plan(&mut self) {
        loop {
            if self.batch_sizes.len() >= self.max_batches {
                self.pending = None;
                return;
            }
            let lowest = self.passes.iter().position(|p| p.odd.iter().any(|&o| o));
            let Some(p) = lowest else {
                if self.passes.len() < self.passes_total {
                    self.open_pass();
                    self.current = self.passes.len() - 1;
                    let pass = &self.passes[self.current];
                    let queries = (0..pass.odd.len())
                        .map(|b| {
                            let (lo, hi) = pass.block_range(b);
                            pass.positions(lo, hi)
                        })
                        .collect();
                    self.pending = Some((Pending::TopLevel(self.current), queries));
                } else {
                    self.pending = None;
                }
                return;
            };
            let mut halves = Vec::new();
            let mut singles = Vec::new();
            {
                let pass = &mut self.passes[p];
                for b in 0..pass.odd.len() {
                    if !pass.odd[b] {
                        continue;
                    }
                    let (lo, hi) = match pass.interval[b] {
                        Some(iv) => iv,
                        None => pass.block_range(b),
                    };
                    pass.interval[b] = Some((lo, hi));
                    if hi - lo == 1 {
                        singles.push(pass.perm[lo]);
                    } else {
                        halves.push((b, lo, hi));
                    }
                }
            }
            if !singles.is_empty() {
                for k in singles {
                    self.flip(k);
                }
                continue;
            }
            let pass = &self.passes[p];
            let queries = halves.iter().map(|&(_, lo, hi)| pass.positions(lo, lo + (hi - lo) / 2)).collect();
            self.pending = Some((Pending::Halves(p, halves), queries));
            return;
        }
    }

    fn flip(&mut self, k: usize) {
        self.flips.push(k);
        let upto = self.current + 1;
        for pass in self.passes.iter_mut().take(upto) {
            let b = pass.inv[k] / pass.block;
            pass.odd[b] = !pass.odd[b];
            pass.interval[b] = None;
        }
    }

    /// Queries of the batch awaiting answers; `None` once finished.
    pub fn next_batch(&self) -> Option<&[Vec<usize>]> {
        self.pending.as_ref().map(|(_, q)| q.as_slice())
    }

    pub fn is_done(&self) -> bool {
        self.pending.is_none()
    }

    /// Takes one mismatch bit per query and returns the key positions Bob flips.
    pub fn feed(&mut self, mismatch: &BitString) -> Result<Vec<usize>> {
        let (kind, queries) = self
            .pending
            .take()
            .ok_or_else(|| Error::InvalidParameter("cascade already finished".into()))?;
        if mismatch.len() != queries.len() {
            self.pending = Some((kind, queries));
            return Err(Error::DimensionMismatch { expected: self.pending.as_ref().map_or(0, |p| p.1.len()), actual: mismatch.len() });
        }
        self.leak += queries.len();
        self.batch_sizes.push(queries.len());
        let before = self.flips.len();
        match kind {
            Pending::TopLevel(p) => {
                let pass = &mut self.passes[p];
                for b in 0..pass.odd.len() {
                    pass.odd[b] = mismatch.get(b);
                    pass.interval[b] = None;
                }
            }
            Pending::Halves(p, items) => {
                let pass = &mut self.passes[p];
                for (k, &(b, lo, hi)) in items.iter().enumerate() {
                    let mid = lo + (hi - lo) / 2;
                    pass.interval[b] = Some(if mismatch.get(k) { (lo, mid) } else { (mid, hi) });
                }
            }
        }
        self.plan();
        Ok(self.flips[before..].to_vec())
    }

    /// Parity bits disclosed so far.
    pub fn leak(&self) -> usize {
        self.leak
    }

    pub fn batch_sizes(&self) -> &[usize] {
        &self.batch_sizes
    }

    pub fn flips(&self) -> &[usize] {
        &self.flips
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        self.passes.iter().map(|p| p.block).collect()
    }
}

/// Result of running Cascade with both strings in one place.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CascadeRun {
    pub corrected: BitString,
    pub leak: usize,
    pub batch_sizes: Vec<usize>,
    /// Per batch: Alice's parities and the mismatch bits.
    pub disclosures: Vec<(BitString, BitString)>,
}

pub fn cascade_centralized(key_a: &BitString, key_b: &BitString, params: &CascadeParams, seed: u64) -> Result<CascadeRun> {
    if key_a.len() != key_b.len() {
        return Err(Error::LengthMismatch { left: key_a.len(), right: key_b.len() });
    }
    let mut planner = CascadePlanner::new(key_a.len(), params, seed);
    let mut corrected = key_b.clone();
    let mut disclosures = Vec::new();
    while let Some(queries) = planner.next_batch() {
        let pa = batch_parities(key_a, queries);
        let mismatch = pa.xor(&batch_parities(&corrected, queries))?;
        for k in planner.feed(&mismatch)? {
            corrected.flip(k);
        }
        disclosures.push((pa, mismatch));
    }
    Ok(CascadeRun { corrected, leak: planner.leak(), batch_sizes: planner.batch_sizes().to_vec(), disclosures })
}

pub fn verification_hash(hash_len: usize, n_key: usize, seed: &BitString) -> Result<ToeplitzHash> {
    ToeplitzHash::sample(hash_len, n_key, seed)
}

/// Hashes both keys with the same function; accepts on equal tags.
pub fn error_verify(key_a: &BitString, key_b: &BitString, hash: &ToeplitzHash) -> Result<bool> {
    Ok(hash.apply(key_a)? == hash.apply(key_b)?)
}

pub fn privacy_amplify(share: &BitString, out_len: usize, seed: &BitString) -> Result<BitString> {
    if out_len > share.len() {
        return Err(Error::InvalidParameter(format!("output length {out_len} exceeds input {}", share.len())));
    }
    ToeplitzHash::sample(out_len, share.len(), seed)?.apply(share)
}

pub fn binary_entropy(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        return 0.0;
    }
    -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
}

/// Decides the final key length from the post-processing statistics.
pub trait KeyLengthPolicy {
    fn out_len(&self, n_key: usize, est_rate: f64, leak: usize) -> usize;
}

/// Entropy minus disclosed bits minus the two security terms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EntropyPolicy {
    pub eps_cor: f64,
    pub eps_pa: f64,
}

impl EntropyPolicy {
    pub fn pa_term(&self) -> usize {
        (2.0 * (1.0 / (2.0 * self.eps_pa)).log2()).ceil() as usize
    }
}

impl KeyLengthPolicy for EntropyPolicy {
    fn out_len(&self, n_key: usize, est_rate: f64, leak: usize) -> usize {
        let e = est_rate.min(0.5);
        let raw = (n_key as f64 * (1.0 - binary_entropy(e))).floor() as i64;
        let l = raw - leak as i64 - verification_hash_len(self.eps_cor) as i64 - self.pa_term() as i64;
        l.max(0) as usize
    }
}

pub fn key_length_formula(n_key: usize, est_rate: f64, leak: usize, eps_cor: f64, eps_pa: f64) -> usize {
    EntropyPolicy { eps_cor, eps_pa }.out_len(n_key, est_rate, leak)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineParams {
    pub abort_threshold: f64,
    pub cascade: CascadeParams,
    pub eps_cor: f64,
    pub eps_pa: f64,
}

impl Default for PipelineParams {
    fn default() -> Self {
        Self { abort_threshold: 0.11, cascade: CascadeParams::default(), eps_cor: 1e-10, eps_pa: 1e-10 }
    }
}

impl PipelineParams {
    pub fn hash_len(&self) -> usize {
        verification_hash_len(self.eps_cor)
    }

    pub fn policy(&self) -> EntropyPolicy {
        EntropyPolicy { eps_cor: self.eps_cor, eps_pa: self.eps_pa }
    }

    /// Copy with both security parameters divided by `k`.
    pub fn split_budget(&self, k: usize) -> Self {
        let k = k.max(1) as f64;
        Self { eps_cor: self.eps_cor / k, eps_pa: self.eps_pa / k, ..self.clone() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbortReason {
    EmptyEstimate,
    EstimateTooNoisy,
    VerificationFailed,
    ZeroLength,
    /// A VSS share phase or an RBS confirmation failed.
    Sharing,
    /// A vote on public data or shares found no winner.
    Vote,
}

/// A value made public during post-processing, in disclosure order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Disclosure {
    pub tag: &'static str,
    /// Sent by the Alice side (otherwise Bob's).
    pub from_alice: bool,
    pub bits: BitString,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineOutcome {
    pub key_a: BitString,
    pub key_b: BitString,
    pub n_key: usize,
    pub est_rate: Option<f64>,
    pub leak: usize,
    pub batch_sizes: Vec<usize>,
    pub out_len: usize,
    pub abort: Option<AbortReason>,
    pub hv_seed: Option<BitString>,
    pub hp_seed: Option<BitString>,
    pub disclosures: Vec<Disclosure>,
}

impl PipelineOutcome {
    pub fn aborted(&self) -> bool {
        self.abort.is_some()
    }
}

/// Whole post-processing with both raw keys in one place. `seeds(len)`
/// supplies the verification and amplification seeds, in that order.
pub fn centralized_pipeline<F: FnMut(usize) -> BitString>(
    session: &SessionOutput,
    params: &PipelineParams,
    ec_seed: u64,
    mut seeds: F,
) -> Result<PipelineOutcome> {
    let plan = SiftPlan::new(&session.info_a, &session.info_b)?;
    let a = sift_with(&session.raw_a, &plan);
    let b = sift_with(&session.raw_b, &plan);
    let n_key = a.key.len();
    let mut out = PipelineOutcome {
        key_a: BitString::zeros(0),
        key_b: BitString::zeros(0),
        n_key,
        est_rate: None,
        leak: 0,
        batch_sizes: Vec::new(),
        out_len: 0,
        abort: None,
        hv_seed: None,
        hp_seed: None,
        disclosures: vec![
            Disclosure { tag: "pp/info", from_alice: true, bits: session.info_a.to_bits() },
            Disclosure { tag: "pp/info", from_alice: false, bits: session.info_b.to_bits() },
            Disclosure { tag: "pe/est", from_alice: true, bits: a.est.clone() },
            Disclosure { tag: "pe/est", from_alice: false, bits: b.est.clone() },
        ],
    };
    let rate = match parameter_estimate(&a.est, &b.est, params.abort_threshold)? {
        Estimate::Pass(r) => r,
        Estimate::Abort(r) => {
            out.est_rate = r;
            out.abort = Some(if r.is_none() { AbortReason::EmptyEstimate } else { AbortReason::EstimateTooNoisy });
            return Ok(out);
        }
    };
    out.est_rate = Some(rate);

    let ec = cascade_centralized(&a.key, &b.key, &params.cascade, ec_seed)?;
    out.leak = ec.leak;
    out.batch_sizes = ec.batch_sizes;
    for (pa, mm) in ec.disclosures {
        out.disclosures.push(Disclosure { tag: "ec/parity-a", from_alice: true, bits: pa });
        out.disclosures.push(Disclosure { tag: "ec/mismatch", from_alice: false, bits: mm });
    }

    let hash_len = params.hash_len();
    let hv_seed = seeds(toeplitz_seed_len(hash_len, n_key));
    let hv = verification_hash(hash_len, n_key, &hv_seed)?;
    out.disclosures.push(Disclosure { tag: "ev/seed", from_alice: true, bits: hv_seed.clone() });
    let (ha, hb) = (hv.apply(&a.key)?, hv.apply(&ec.corrected)?);
    out.disclosures.push(Disclosure { tag: "ev/hash", from_alice: true, bits: ha.clone() });
    out.disclosures.push(Disclosure { tag: "ev/hash", from_alice: false, bits: hb.clone() });
    out.hv_seed = Some(hv_seed);
    if ha != hb {
        out.abort = Some(AbortReason::VerificationFailed);
        return Ok(out);
    }

    let l = params.policy().out_len(n_key, rate, out.leak);
    out.out_len = l;
    if l == 0 {
        out.abort = Some(AbortReason::ZeroLength);
        return Ok(out);
    }
    let hp_seed = seeds(toeplitz_seed_len(l, n_key));
    out.disclosures.push(Disclosure { tag: "pa/seed", from_alice: true, bits: hp_seed.clone() });
    out.key_a = privacy_amplify(&a.key, l, &hp_seed)?;
    out.key_b = privacy_amplify(&ec.corrected, l, &hp_seed)?;
    out.hp_seed = Some(hp_seed);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qkdsim::generate_session;
    use crate::vss::ss_split;
    use proptest::prelude::*;
    use rand::Rng;

    fn bs(s: &str) -> BitString {
        s.parse().unwrap()
    }

    fn info(basis: &str, detected: &str) -> ProtocolInfo {
        ProtocolInfo { basis: bs(basis), detected: bs(detected) }
    }

    #[test]
    fn sift_examples() {
        let a = info("0000", "1111");
        let s = sift(&bs("1011"), &a, &info("0000", "1111")).unwrap();
        assert_eq!((s.key, s.est.len()), (bs("1011"), 0));
        let s = sift(&bs("1011"), &a, &info("0000", "0000")).unwrap();
        assert!(s.key.is_empty() && s.est.is_empty());
        let s = sift(&bs("110100"), &info("011011", "111111"), &info("010111", "111110")).unwrap();
        // positions: 0 Z/Z, 1 X/X, 2 X/Z, 3 Z/X, 4 X/X, 5 undetected
        assert_eq!(s.key, bs("1"));
        assert_eq!(s.est, bs("10"));
        assert!(sift(&bs("10"), &a, &a).is_err());
        assert!(SiftPlan::new(&a, &info("00", "11")).is_err());
    }

    #[test]
    fn sift_commutes_with_xor() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let session = generate_session(200, 0.1, 0.7, rng.gen()).unwrap();
            let m = BitString::random(&mut rng, 200);
            let shares = ss_split(&m, 4, &mut rng).unwrap();
            let sifted: Vec<_> = shares.iter().map(|s| sift(s, &session.info_a, &session.info_b).unwrap()).collect();
            let whole = sift(&m, &session.info_a, &session.info_b).unwrap();
            assert_eq!(crate::gf2::xor_all(sifted.iter().map(|s| &s.key)).unwrap(), whole.key);
            assert_eq!(crate::gf2::xor_all(sifted.iter().map(|s| &s.est)).unwrap(), whole.est);
        }
    }

    #[test]
    fn estimate_examples() {
        assert_eq!(parameter_estimate(&bs("0110"), &bs("0110"), 0.11).unwrap(), Estimate::Pass(0.0));
        assert_eq!(parameter_estimate(&bs("0110"), &bs("1001"), 0.11).unwrap(), Estimate::Abort(Some(1.0)));
        assert_eq!(parameter_estimate(&bs(""), &bs(""), 0.11).unwrap(), Estimate::Abort(None));
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = BitString::random(&mut rng, 5000);
        let b = BitString::from_bits(a.iter().map(|x| x ^ rng.gen_bool(0.05)));
        match parameter_estimate(&a, &b, 0.11).unwrap() {
            Estimate::Pass(r) => assert!((r - 0.05).abs() <= 3.0 * (0.05f64 * 0.95 / 5000.0).sqrt()),
            other => panic!("{other:?}"),
        }
    }

    fn top_level_count(n: usize, params: &CascadeParams) -> usize {
        (0..params.passes).map(|p| n.div_ceil((params.first_block() << p).min(n))).sum()
    }

    #[test]
    fn cascade_zero_errors_queries_top_level_only() {
        let params = CascadeParams::default();
        assert_eq!(params.first_block(), 15);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in [1usize, 7, 15, 16, 100, 1000] {
            let k = BitString::random(&mut rng, n);
            let run = cascade_centralized(&k, &k, &params, 5).unwrap();
            assert_eq!(run.corrected, k);
            assert_eq!(run.leak, top_level_count(n, &params));
            assert_eq!(run.batch_sizes.len(), 4);
        }
        let run = cascade_centralized(&bs(""), &bs(""), &params, 5).unwrap();
        assert_eq!((run.leak, run.batch_sizes.len()), (0, 0));
    }

    #[test]
    fn cascade_single_error_is_found_by_bisection() {
        let params = CascadeParams::default();
        let a = bs("10110010");
        let mut b = a.clone();
        b.flip(5);
        let run = cascade_centralized(&a, &b, &params, 0).unwrap();
        assert_eq!(run.corrected, a);
        // one block of 8: 1 top-level query + 3 halvings, then 3 passes of 1
        assert_eq!(run.batch_sizes, vec![1, 1, 1, 1, 1, 1, 1]);
        assert_eq!(run.leak, 1 + 3 + 3);
        let queries: Vec<usize> = run.disclosures.iter().take(4).map(|(_, m)| m.get(0) as usize).collect();
        assert_eq!(queries, vec![1, 0, 1, 0]);
    }

    #[test]
    fn cascade_corrects_typical_noise() {
        let params = CascadeParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut residual = 0;
        for trial in 0..40 {
            let a = BitString::random(&mut rng, 2000);
            let b = BitString::from_bits(a.iter().map(|x| x ^ rng.gen_bool(0.03)));
            let run = cascade_centralized(&a, &b, &params, trial).unwrap();
            residual += (run.corrected != a) as usize;
            assert!(run.leak > top_level_count(2000, &params));
        }
        assert!(residual <= 2, "{residual} of 40 runs left errors");
    }

    #[test]
    fn planner_rejects_wrong_answer_size() {
        let mut p = CascadePlanner::new(20, &CascadeParams::default(), 0);
        let n = p.next_batch().unwrap().len();
        assert!(p.feed(&BitString::zeros(n + 1)).is_err());
        assert!(p.feed(&BitString::zeros(n)).is_ok());
    }

    #[test]
    fn verification_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        assert_eq!(verification_hash_len(1e-10), 36);
        let a = BitString::random(&mut rng, 64);
        let mut b = a.clone();
        b.flip(17);
        let trials = 200_000usize;
        let mut missed = 0usize;
        for _ in 0..trials {
            let seed = BitString::random(&mut rng, toeplitz_seed_len(16, 64));
            let h = verification_hash(16, 64, &seed).unwrap();
            assert!(error_verify(&a, &a, &h).unwrap());
            missed += error_verify(&a, &b, &h).unwrap() as usize;
        }
        let p = 2f64.powi(-16);
        let bound = p * trials as f64 + 3.0 * (p * trials as f64).sqrt() + 1.0;
        assert!((missed as f64) <= bound, "{missed} accepted");
    }

    #[test]
    fn amplification_examples() {
        let x = bs("1100101");
        assert_eq!(ToeplitzHash::identity(7).apply(&x).unwrap(), x);
        assert_eq!(privacy_amplify(&x, 7, ToeplitzHash::identity(7).seed()).unwrap(), x);
        assert!(privacy_amplify(&x, 0, &BitString::zeros(6)).unwrap().is_empty());
        assert!(privacy_amplify(&x, 8, &BitString::zeros(14)).is_err());
    }

    #[test]
    fn key_length_examples() {
        assert_eq!(key_length_formula(10_000, 0.5, 0, 1e-10, 1e-10), 0);
        assert!((binary_entropy(0.05) - 0.286397).abs() < 1e-6);
        // floor(10^4 * (1 - 0.286397)) - 1200 - 36 - 65
        assert_eq!(key_length_formula(10_000, 0.05, 1200, 1e-10, 1e-10), 5835);
        assert_eq!(EntropyPolicy { eps_cor: 1e-10, eps_pa: 1e-10 }.pa_term(), 65);
        let p = EntropyPolicy { eps_cor: 1e-6, eps_pa: 1e-6 };
        assert_eq!((verification_hash_len(1e-6), p.pa_term()), (22, 38));
        assert_eq!(key_length_formula(1000, 0.0, 0, 1e-6, 1e-6), 1000 - 22 - 38);
        assert_eq!(key_length_formula(10, 0.0, 0, 1e-6, 1e-6), 0);
    }

    #[test]
    fn pipeline_honest_and_noisy() {
        let params = PipelineParams { eps_cor: 1e-6, eps_pa: 1e-6, ..Default::default() };
        let session = generate_session(8000, 0.03, 1.0, 21).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let out = centralized_pipeline(&session, &params, 9, |len| BitString::random(&mut rng, len)).unwrap();
        assert_eq!(out.abort, None);
        assert_eq!(out.key_a, out.key_b);
        assert_eq!(out.key_a.len(), out.out_len);
        assert!(out.out_len > 0);

        let session = generate_session(8000, 0.5, 1.0, 21).unwrap();
        let out = centralized_pipeline(&session, &params, 9, BitString::zeros).unwrap();
        assert_eq!(out.abort, Some(AbortReason::EstimateTooNoisy));
    }

    proptest! {
        #[test]
        fn hashes_distribute_over_shares(seed in any::<u64>(), n in 1usize..80, out in 0usize..40) {
            let out = out.min(n);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = BitString::random(&mut rng, n);
            let shares = ss_split(&m, 4, &mut rng).unwrap();
            let hseed = BitString::random(&mut rng, toeplitz_seed_len(out, n));
            let mapped: Vec<_> = shares.iter().map(|s| privacy_amplify(s, out, &hseed).unwrap()).collect();
            prop_assert_eq!(crate::gf2::xor_all(&mapped).unwrap(), privacy_amplify(&m, out, &hseed).unwrap());
            let queries = vec![(0..n).step_by(2).collect::<Vec<_>>(), vec![n - 1]];
            let p: Vec<_> = shares.iter().map(|s| batch_parities(s, &queries)).collect();
            prop_assert_eq!(crate::gf2::xor_all(&p).unwrap(), batch_parities(&m, &queries));
        }

        #[test]
        fn cascade_never_adds_errors(seed in any::<u64>(), n in 1usize..300, errs in 0usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = BitString::random(&mut rng, n);
            let mut b = a.clone();
            for _ in 0..errs {
                b.flip(rng.gen_range(0..n));
            }
            let run = cascade_centralized(&a, &b, &CascadeParams::default(), seed).unwrap();
            prop_assert!(run.corrected.hamming(&a).unwrap() <= a.hamming(&b).unwrap());
            prop_assert_eq!(run.leak, run.batch_sizes.iter().sum::<usize>());
        }
    }
}
