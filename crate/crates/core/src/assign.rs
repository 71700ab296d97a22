//! Treatment assignment under covariate-adaptive randomization schemes.
//!
//! Batch schemes (simple, stratified block) are pure functions of
//! `(inputs, targets, seed)`; the per-unit and per-stratum draws are keyed
//! by counter so evaluation order never matters. Sequential schemes
//! (permuted block, minimization, Hu-Hu) own mutable state and a single
//! random stream, and are confined to one logical thread each.

use std::collections::HashMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Arm, DesignTargets, StratumLabel};
use crate::error::{Error, Result};
use crate::rng::{indexed_uniform, substream};

const TAG_STRATUM_SHUFFLE: u64 = 0x5b2d;

/// Assignment scheme selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scheme {
    SimpleStratified,
    StratifiedBlockBatch,
    PermutedBlockSequential,
    Minimization,
    HuHu,
}

/// Scheme parameters shared by the CLI and the simulation engine.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RandomizerConfig {
    pub scheme: Scheme,
    /// Biased-coin probability for minimization / Hu-Hu, in [1/2, 1].
    pub lambda: f64,
    /// Block size for the sequential permuted-block scheme (positive, even).
    pub block_size: usize,
    /// Per-margin weights for minimization; `None` means equal weights.
    pub margin_weights: Option<Vec<f64>>,
    /// Hu-Hu imbalance weights: overall, per-margin, within-stratum.
    pub hu_overall: f64,
    pub hu_stratum: f64,
}

impl Default for RandomizerConfig {
    fn default() -> Self {
        RandomizerConfig {
            scheme: Scheme::SimpleStratified,
            lambda: 0.75,
            block_size: 4,
            margin_weights: None,
            hu_overall: 1.0,
            hu_stratum: 1.0,
        }
    }
}

impl RandomizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.5..=1.0).contains(&self.lambda) {
            return Err(Error::Config(format!(
                "lambda must lie in [1/2, 1], got {}",
                self.lambda
            )));
        }
        if matches!(self.scheme, Scheme::PermutedBlockSequential)
            && (self.block_size == 0 || self.block_size % 2 != 0)
        {
            return Err(Error::Config(format!(
                "block size must be positive and even, got {}",
                self.block_size
            )));
        }
        if let Some(w) = &self.margin_weights {
            if w.iter().any(|v| *v < 0.0) || w.iter().all(|v| *v == 0.0) {
                return Err(Error::Config(
                    "margin weights must be nonnegative and not all zero".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Anything that can answer "what is the treated target of stratum `s`".
pub trait Pi1Source {
    fn pi1_for(&self, stratum: u32) -> Result<f64>;
}

impl Pi1Source for DesignTargets {
    fn pi1_for(&self, stratum: u32) -> Result<f64> {
        self.pi1(StratumLabel(stratum))
    }
}

impl Pi1Source for [f64] {
    fn pi1_for(&self, stratum: u32) -> Result<f64> {
        self.get(stratum as usize)
            .copied()
            .ok_or(Error::MissingTarget {
                stratum: stratum as usize,
            })
    }
}

impl Pi1Source for Vec<f64> {
    fn pi1_for(&self, stratum: u32) -> Result<f64> {
        self.as_slice().pi1_for(stratum)
    }
}

/// `floor(x)` with products within 1e-9 of an integer snapped to it, so
/// targets entered as short decimals (0.6 * 5 and the like) behave as the
/// exact rational they denote.
#[inline]
pub fn snapped_floor(x: f64) -> usize {
    let r = x.round();
    if (x - r).abs() < 1e-9 {
        r as usize
    } else {
        x.floor() as usize
    }
}

/// Independent per-unit assignments with stratum-specific probabilities.
///
/// Each unit is treated with probability `pi1(s_k)`; the draw is a pure
/// function of `(seed, k)`.
pub fn simple_randomize(strata: &[u32], targets: &impl Pi1Source, seed: u64) -> Result<Vec<Arm>> {
    strata
        .iter()
        .enumerate()
        .map(|(k, &s)| {
            let pi = targets.pi1_for(s)?;
            Ok(if indexed_uniform(seed, k as u64) < pi {
                Arm::Treated
            } else {
                Arm::Control
            })
        })
        .collect()
}

/// Batch stratified block randomization.
///
/// Within every stratum `s`, exactly `floor(pi1(s) * n(s))` units are
/// treated, the subset drawn uniformly at random; the rest are controls.
pub fn stratified_block_randomize(
    strata: &[u32],
    targets: &impl Pi1Source,
    seed: u64,
) -> Result<Vec<Arm>> {
    let mut members: HashMap<u32, Vec<usize>> = HashMap::new();
    for (k, &s) in strata.iter().enumerate() {
        members.entry(s).or_default().push(k);
    }
    let mut arms = vec![Arm::Control; strata.len()];
    for (&s, idx) in members.iter() {
        let pi = targets.pi1_for(s)?;
        let m = snapped_floor(pi * idx.len() as f64);
        let mut order = idx.clone();
        let mut rng = substream(seed, &[TAG_STRATUM_SHUFFLE, s as u64]);
        // Partial Fisher-Yates: the first m entries form a uniform subset.
        for i in 0..m.min(order.len()) {
            let j = rng.random_range(i..order.len());
            order.swap(i, j);
            arms[order[i]] = Arm::Treated;
        }
    }
    Ok(arms)
}

/// Sequential permuted-block randomizer.
///
/// Each stratum consumes independently shuffled blocks containing exactly
/// `block_size * pi1(s)` treated slots, so within-stratum imbalance is zero
/// after every completed block and never exceeds the intra-block bound.
#[derive(Debug)]
pub struct PermutedBlockRandomizer {
    block_size: usize,
    rng: ChaCha8Rng,
    pending: HashMap<u32, Vec<Arm>>,
}

impl PermutedBlockRandomizer {
    pub fn new(block_size: usize, seed: u64) -> Self {
        PermutedBlockRandomizer {
            block_size,
            rng: substream(seed, &[0x9b1f]),
            pending: HashMap::new(),
        }
    }

    /// Assign the next unit arriving in stratum `s`.
    pub fn assign(&mut self, stratum: u32, pi1: f64) -> Result<Arm> {
        let treated = {
            let t = self.block_size as f64 * pi1;
            if (t - t.round()).abs() > 1e-9 {
                return Err(Error::NonIntegralBlock {
                    block: self.block_size,
                    pi: pi1,
                });
            }
            t.round() as usize
        };
        let block = self.pending.entry(stratum).or_default();
        if block.is_empty() {
            block.extend(std::iter::repeat(Arm::Treated).take(treated));
            block.extend(std::iter::repeat(Arm::Control).take(self.block_size - treated));
            for i in (1..block.len()).rev() {
                let j = self.rng.random_range(0..=i);
                block.swap(i, j);
            }
        }
        Ok(block.pop().expect("block refilled above"))
    }
}

/// Batch wrapper over [`PermutedBlockRandomizer`] for a known roster.
pub fn permuted_block_randomize(
    strata: &[u32],
    targets: &impl Pi1Source,
    block_size: usize,
    seed: u64,
) -> Result<Vec<Arm>> {
    let mut r = PermutedBlockRandomizer::new(block_size, seed);
    strata
        .iter()
        .map(|&s| r.assign(s, targets.pi1_for(s)?))
        .collect()
}

/// Sufficient statistics of the assignment history used by minimization
/// and Hu-Hu: counts by arm at every margin level, stratum, and overall.
#[derive(Debug, Clone, Default)]
pub struct AssignmentState {
    margins: Vec<HashMap<u32, [i64; 2]>>,
    strata: HashMap<u64, [i64; 2]>,
    overall: [i64; 2],
    assigned: usize,
}

impl AssignmentState {
    pub fn new(n_margins: usize) -> Self {
        AssignmentState {
            margins: vec![HashMap::new(); n_margins],
            ..Default::default()
        }
    }

    pub fn assigned(&self) -> usize {
        self.assigned
    }

    /// Record a completed assignment.
    pub fn record(&mut self, margins: &[u32], stratum: u64, arm: Arm) {
        debug_assert_eq!(margins.len(), self.margins.len());
        let a = arm.index();
        for (table, &level) in self.margins.iter_mut().zip(margins) {
            table.entry(level).or_default()[a] += 1;
        }
        self.strata.entry(stratum).or_default()[a] += 1;
        self.overall[a] += 1;
        self.assigned += 1;
    }

    fn margin_diff(&self, j: usize, level: u32) -> f64 {
        match self.margins[j].get(&level) {
            Some(c) => (c[1] - c[0]) as f64,
            None => 0.0,
        }
    }

    fn stratum_diff(&self, stratum: u64) -> f64 {
        match self.strata.get(&stratum) {
            Some(c) => (c[1] - c[0]) as f64,
            None => 0.0,
        }
    }

    fn overall_diff(&self) -> f64 {
        (self.overall[1] - self.overall[0]) as f64
    }
}

fn biased_coin(imbalance: f64, lambda: f64) -> f64 {
    if imbalance == 0.0 {
        0.5
    } else if imbalance < 0.0 {
        lambda
    } else {
        1.0 - lambda
    }
}

/// Treated probability under Pocock-Simon minimization, given the history
/// only (the candidate assignment is not counted).
pub fn minimization_probability(
    state: &AssignmentState,
    margins: &[u32],
    weights: Option<&[f64]>,
    lambda: f64,
) -> f64 {
    let imb: f64 = margins
        .iter()
        .enumerate()
        .map(|(j, &level)| {
            let w = weights.map_or(1.0, |w| w[j]);
            w * state.margin_diff(j, level)
        })
        .sum();
    biased_coin(imb, lambda)
}

/// Treated probability under Hu and Hu's generalized minimization, which
/// mixes overall, marginal, and within-stratum imbalance.
pub fn hu_hu_probability(
    state: &AssignmentState,
    margins: &[u32],
    stratum: u64,
    config: &RandomizerConfig,
) -> f64 {
    let margin_term: f64 = margins
        .iter()
        .enumerate()
        .map(|(j, &level)| {
            let w = config.margin_weights.as_ref().map_or(1.0, |w| w[j]);
            w * state.margin_diff(j, level)
        })
        .sum();
    let imb = config.hu_overall * state.overall_diff()
        + margin_term
        + config.hu_stratum * state.stratum_diff(stratum);
    biased_coin(imb, config.lambda)
}

/// Draw one minimization assignment and update the state.
pub fn minimization_assign(
    state: &mut AssignmentState,
    margins: &[u32],
    stratum: u64,
    weights: Option<&[f64]>,
    lambda: f64,
    rng: &mut impl Rng,
) -> Arm {
    let p = minimization_probability(state, margins, weights, lambda);
    let arm = if rng.random::<f64>() < p {
        Arm::Treated
    } else {
        Arm::Control
    };
    state.record(margins, stratum, arm);
    arm
}

/// Draw one Hu-Hu assignment and update the state.
pub fn hu_hu_assign(
    state: &mut AssignmentState,
    margins: &[u32],
    stratum: u64,
    config: &RandomizerConfig,
    rng: &mut impl Rng,
) -> Arm {
    let p = hu_hu_probability(state, margins, stratum, config);
    let arm = if rng.random::<f64>() < p {
        Arm::Treated
    } else {
        Arm::Control
    };
    state.record(margins, stratum, arm);
    arm
}

/// Sequential minimization / Hu-Hu assigner owning state and stream.
#[derive(Debug)]
pub struct SequentialAssigner {
    config: RandomizerConfig,
    state: AssignmentState,
    rng: ChaCha8Rng,
}

impl SequentialAssigner {
    pub fn new(config: RandomizerConfig, n_margins: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        Ok(SequentialAssigner {
            config,
            state: AssignmentState::new(n_margins),
            rng: substream(seed, &[0x3a17]),
        })
    }

    pub fn assign(&mut self, margins: &[u32], stratum: u64) -> Arm {
        match self.config.scheme {
            Scheme::HuHu => hu_hu_assign(&mut self.state, margins, stratum, &self.config, &mut self.rng),
            _ => minimization_assign(
                &mut self.state,
                margins,
                stratum,
                self.config.margin_weights.as_deref(),
                self.config.lambda,
                &mut self.rng,
            ),
        }
    }

    pub fn state(&self) -> &AssignmentState {
        &self.state
    }
}
