//! Classical stand-in for a pair of QKD modules.
//!
//! Each pulse carries a uniform bit and independent uniform bases; Bob detects
//! it with probability `p_detect`. On matching bases Bob's bit goes through a
//! binary symmetric channel, otherwise it is uniform noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gf2::BitString;
use crate::simnet::{PartyId, StrategyKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Basis {
    Z,
    X,
}

impl Basis {
    fn from_bit(b: bool) -> Self {
        if b {
            Basis::X
        } else {
            Basis::Z
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PulseRecord {
    pub basis_a: Basis,
    pub basis_b: Basis,
    pub detected: bool,
    /// Decoy setting; always 0 here.
    pub intensity_index: u8,
}

/// What one side announces per pulse: basis bits (1 = X) and detection bits.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolInfo {
    pub basis: BitString,
    pub detected: BitString,
}

impl ProtocolInfo {
    pub fn len(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }

    /// `basis ‖ detected`, as sent over the network.
    pub fn to_bits(&self) -> BitString {
        let mut out = self.basis.clone();
        out.append(&self.detected);
        out
    }

    pub fn from_bits(bits: &BitString) -> Result<Self> {
        if !bits.len().is_multiple_of(2) {
            return Err(Error::Malformed(format!("protocol info of odd length {}", bits.len())));
        }
        let half = bits.len() / 2;
        Ok(Self { basis: bits.slice(0, half), detected: bits.slice(half, half) })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SessionOutput {
    pub raw_a: BitString,
    pub raw_b: BitString,
    pub info_a: ProtocolInfo,
    pub info_b: ProtocolInfo,
}

impl SessionOutput {
    pub fn len(&self) -> usize {
        self.raw_a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw_a.is_empty()
    }

    pub fn pulse(&self, i: usize) -> PulseRecord {
        PulseRecord {
            basis_a: Basis::from_bit(self.info_a.basis.get(i)),
            basis_b: Basis::from_bit(self.info_b.basis.get(i)),
            detected: self.info_b.detected.get(i),
            intensity_index: 0,
        }
    }
}

pub fn generate_session(len: usize, qber: f64, p_detect: f64, seed: u64) -> Result<SessionOutput> {
    if !(0.0..=0.5).contains(&qber) {
        return Err(Error::InvalidParameter(format!("qber {qber} outside [0, 0.5]")));
    }
    if !(p_detect > 0.0 && p_detect <= 1.0) {
        return Err(Error::InvalidParameter(format!("detection probability {p_detect} outside (0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut raw_a = BitString::zeros(len);
    let mut raw_b = BitString::zeros(len);
    let mut basis_a = BitString::zeros(len);
    let mut basis_b = BitString::zeros(len);
    let mut detected = BitString::zeros(len);
    for i in 0..len {
        let a: bool = rng.gen();
        let ba: bool = rng.gen();
        let bb: bool = rng.gen();
        let d = rng.gen_bool(p_detect);
        raw_a.set(i, a);
        basis_a.set(i, ba);
        basis_b.set(i, bb);
        detected.set(i, d);
        if d {
            let b = if ba == bb { a ^ rng.gen_bool(qber) } else { rng.gen() };
            raw_b.set(i, b);
        }
    }
    Ok(SessionOutput {
        raw_a,
        raw_b,
        info_a: ProtocolInfo { basis: basis_a, detected: BitString::ones(len) },
        info_b: ProtocolInfo { basis: basis_b, detected },
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AttackDecision {
    ForceAbort,
    Proceed,
}

/// Position `j` of the memory drives run `perm[j]` (identity when `perm` is
/// empty): a stored 0 aborts that run.
pub fn memory_attack_decide(memory: &BitString, run: usize, perm: &[usize]) -> AttackDecision {
    let j = if perm.is_empty() { Some(run) } else { perm.iter().position(|&r| r == run) };
    match j {
        Some(j) if j < memory.len() && !memory.get(j) => AttackDecision::ForceAbort,
        _ => AttackDecision::Proceed,
    }
}

/// Reads the memory back from which runs aborted.
pub fn eve_decode_abort_pattern(aborted: &[bool], perm: &[usize]) -> BitString {
    if perm.is_empty() {
        BitString::from_bits(aborted.iter().map(|a| !a))
    } else {
        BitString::from_bits(perm.iter().map(|&r| !aborted.get(r).copied().unwrap_or(false)))
    }
}

/// How a module pair behaves, as configured.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModuleBehavior {
    #[default]
    Honest,
    /// Aborts the runs selected by a memory planted from an earlier session.
    MemoryAttack {
        #[serde(default)]
        permutation: Vec<usize>,
    },
    /// Always emits a maximally noisy raw key.
    AbortForcing,
    /// As VSS dealer, sends a flipped share to the first holder.
    InconsistentDealer,
}

/// QBER at which a forced abort is emitted.
pub const FORCED_ABORT_QBER: f64 = 0.5;

impl ModuleBehavior {
    /// The network strategy this behavior implies for the module, if any.
    pub fn strategy(&self, victim: PartyId) -> Option<StrategyKind> {
        match self {
            ModuleBehavior::InconsistentDealer => Some(StrategyKind::InconsistentDealer { victims: vec![victim] }),
            _ => None,
        }
    }

    /// Channel QBER to use for `run`, given the module's memory.
    pub fn run_qber(&self, qber: f64, run: usize, memory: Option<&BitString>) -> f64 {
        match self {
            ModuleBehavior::AbortForcing => FORCED_ABORT_QBER,
            ModuleBehavior::MemoryAttack { permutation } => match memory {
                Some(m) if memory_attack_decide(m, run, permutation) == AttackDecision::ForceAbort => FORCED_ABORT_QBER,
                _ => qber,
            },
            _ => qber,
        }
    }
}
