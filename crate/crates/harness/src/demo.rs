//! The memory-attack demonstration: a baseline arm where one module pair
//! leaks an earlier key through its abort pattern, and the countermeasure
//! arm where extraction over several pairs leaves that pair nothing to leak.

use serde::Serialize;

use qkdvss::protocols::{self, extractor_uniformity, memory_attack_demo, MemoryDemo, Scenario, UniformityCensus};
use qkdvss::qkdsim::ModuleBehavior;
use qkdvss::Result;

use crate::config::ScenarioConfig;

/// Bits planted when the config does not say.
pub const DEFAULT_BITS: usize = 4;

#[derive(Clone, Debug, Serialize)]
pub struct DemoReport {
    pub baseline: MemoryDemo,
    pub baseline_recovered_all: bool,
    /// Exhaustive check at two slots of two bits with one slot corrupted,
    /// once per choice of corrupted slot.
    pub countermeasure: Vec<UniformityCensus>,
    pub countermeasure_uniform: bool,
    /// Protocol 1 with every pair counted as corrupted outputs nothing.
    pub all_corrupted_final_len: usize,
}

pub fn demo_memory_attack(cfg: &ScenarioConfig) -> Result<DemoReport> {
    let sc = cfg.scenario()?;
    let permutation = sc
        .modules
        .iter()
        .find_map(|m| match m {
            ModuleBehavior::MemoryAttack { permutation } => Some(permutation.clone()),
            _ => None,
        })
        .unwrap_or_default();
    let bits = sc.memory.as_ref().map_or(DEFAULT_BITS, |m| m.len()).max(permutation.len());
    let baseline = memory_attack_demo(&sc, bits, &permutation)?;
    let countermeasure = [0usize, 1].iter().map(|&c| extractor_uniformity(2, 2, 1, &[c])).collect::<Result<Vec<_>>>()?;
    let pairs = sc.pairs.max(2);
    let all = Scenario { pairs, t: pairs, modules: Vec::new(), corruption: Vec::new(), ..sc };
    let all_corrupted_final_len = protocols::protocol1(&all)?.final_len;
    Ok(DemoReport {
        baseline_recovered_all: baseline.bits_recovered == bits,
        baseline,
        countermeasure_uniform: countermeasure.iter().all(|c| c.failures == 0 && c.rank_deficient < c.seeds),
        countermeasure,
        all_corrupted_final_len,
    })
}
