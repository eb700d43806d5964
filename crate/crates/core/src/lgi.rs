//! Leader gradient identification.
//!
//! Each round the server scores every client's server-side gradient by its
//! mean angle to the rest of the cohort, adapts how many of the most
//! consistent clients to keep from the dispersion of those scores and the
//! training progress, and averages the kept gradients into a leader.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{Error, Result};
use crate::geometry::{angular_deviation, mean_std, GradientVector};
use crate::scalar::Scalar;

/// Why a round could not be coordinated; the round then runs as plain PSL.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum SkipReason {
    #[error("only {usable} non-degenerate gradients in the cohort")]
    TooFewUsable { usable: usize },
    #[error("cohort gradients differ in length")]
    LengthMismatch,
    #[error("no gradient selected for the leader")]
    EmptySelection,
    #[error("leader gradient is degenerate")]
    DegenerateLeader,
}

/// Bounds of the selection ratio, in percent, and the round horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LgiConfig {
    pub k_min: f64,
    pub k_max: f64,
    pub total_rounds: u32,
}

impl LgiConfig {
    pub fn new(k_min: f64, k_max: f64, total_rounds: u32) -> Result<Self> {
        let c = Self { k_min, k_max, total_rounds };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(self.k_min > 0.0 && self.k_min <= 100.0) {
            errs.push(format!("k_min must lie in (0, 100], got {}", self.k_min));
        }
        if !(self.k_max > 0.0 && self.k_max <= 100.0) {
            errs.push(format!("k_max must lie in (0, 100], got {}", self.k_max));
        }
        if self.k_min > self.k_max {
            errs.push(format!("k_min ({}) exceeds k_max ({})", self.k_min, self.k_max));
        }
        if self.total_rounds == 0 {
            errs.push("total_rounds must be positive".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }
}

impl Default for LgiConfig {
    fn default() -> Self {
        Self { k_min: 20.0, k_max: 80.0, total_rounds: 100 }
    }
}

/// Running extremes of the score dispersion plus the current round.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LgiState<T> {
    nu_min: Option<T>,
    nu_max: Option<T>,
    round: u32,
}

impl<T: Scalar> LgiState<T> {
    pub fn new() -> Self {
        Self { nu_min: None, nu_max: None, round: 0 }
    }

    /// Sets the (1-based) round the next selection belongs to.
    pub fn begin_round(&mut self, round: u32) {
        self.round = round;
    }

    pub fn round(&self) -> u32 {
        self.round
    }

    pub fn nu_min(&self) -> Option<T> {
        self.nu_min
    }

    pub fn nu_max(&self) -> Option<T> {
        self.nu_max
    }

    fn observe(&mut self, nu: T) -> (T, T) {
        let lo = self.nu_min.map_or(nu, |m| m.min(nu));
        let hi = self.nu_max.map_or(nu, |m| m.max(nu));
        self.nu_min = Some(lo);
        self.nu_max = Some(hi);
        (lo, hi)
    }
}

/// Consistency scores, ordered by ascending client id. Degenerate clients
/// carry `None` and take no part in selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSet<T> {
    pub round: u32,
    pub client_ids: Vec<usize>,
    pub scores: Vec<Option<T>>,
}

impl<T: Scalar> ScoreSet<T> {
    pub fn usable(&self) -> impl Iterator<Item = (usize, T)> + '_ {
        self.client_ids.iter().zip(&self.scores).filter_map(|(&id, s)| s.map(|s| (id, s)))
    }

    pub fn usable_count(&self) -> usize {
        self.scores.iter().filter(|s| s.is_some()).count()
    }

    pub fn score_of(&self, client_id: usize) -> Option<T> {
        self.client_ids.iter().position(|&c| c == client_id).and_then(|i| self.scores[i])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LgiOutcome<T> {
    pub scores: ScoreSet<T>,
    /// Population standard deviation of the usable scores.
    pub dispersion: T,
    /// Selection ratio in percent.
    pub k_t: T,
    /// Selected client ids, ascending.
    pub selected: Vec<usize>,
    pub leader: GradientVector<T>,
}

/// How the leader cohort is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LgiMode {
    /// Adaptive top-K by consistency score.
    #[default]
    Adaptive,
    /// Every usable client (selection ratio pinned to 100%).
    Full,
    /// A uniformly random subset of the adaptive size.
    Random,
}

pub(crate) fn by_client_id<T>(cohort: &[GradientVector<T>]) -> Vec<&GradientVector<T>> {
    let mut v: Vec<&GradientVector<T>> = cohort.iter().collect();
    v.sort_by_key(|g| g.client_id);
    v
}

fn check_lengths<T>(cohort: &[GradientVector<T>]) -> Result<(), SkipReason> {
    match cohort.first() {
        Some(first) if cohort.iter().any(|g| g.values.len() != first.values.len()) => Err(SkipReason::LengthMismatch),
        _ => Ok(()),
    }
}

/// Mean angle of each client's gradient to every other usable gradient.
pub fn consistency_scores<T: Scalar>(cohort: &[GradientVector<T>]) -> Result<ScoreSet<T>, SkipReason> {
    check_lengths(cohort)?;
    let ordered = by_client_id(cohort);
    let usable: Vec<bool> = ordered.iter().map(|g| !g.is_degenerate()).collect();
    let n_usable = usable.iter().filter(|&&u| u).count();
    if n_usable < 2 {
        return Err(SkipReason::TooFewUsable { usable: n_usable });
    }
    let denom = T::lit((n_usable - 1) as f64);
    let scores = ordered
        .iter()
        .enumerate()
        .map(|(i, gi)| {
            if !usable[i] {
                return None;
            }
            let mut sum = T::zero();
            for (j, gj) in ordered.iter().enumerate() {
                if j != i && usable[j] {
                    sum += angular_deviation(&gi.values, &gj.values).expect("usable");
                }
            }
            Some(sum / denom)
        })
        .collect();
    Ok(ScoreSet {
        round: ordered[0].round,
        client_ids: ordered.iter().map(|g| g.client_id).collect(),
        scores,
    })
}

/// Dispersion ranges at or below this many radians are rounding noise.
pub const RANGE_EPS: f64 = 1e-12;

/// Adaptive selection ratio `K^t` in percent.
///
/// The dispersion extremes are updated with the current dispersion first.
/// When they coincide to within [`RANGE_EPS`] (always the case in the first
/// round) the relative stability is taken as 1, leaving only the `t/T`
/// schedule.
pub fn selection_ratio<T: Scalar>(state: &mut LgiState<T>, config: &LgiConfig, scores: &ScoreSet<T>) -> T {
    let values: Vec<T> = scores.usable().map(|(_, s)| s).collect();
    let nu = mean_std(&values).map_or(T::zero(), |(_, sd)| sd);
    ratio_for_dispersion(state, config, nu)
}

fn ratio_for_dispersion<T: Scalar>(state: &mut LgiState<T>, config: &LgiConfig, nu: T) -> T {
    let (lo, hi) = state.observe(nu);
    let range = hi - lo;
    let stability = if range > T::lit(RANGE_EPS) { (hi - nu) / range } else { T::one() };
    let progress = (T::lit(state.round as f64) / T::lit(config.total_rounds as f64)).min(T::one()).max(T::zero());
    let (k_min, k_max) = (T::lit(config.k_min), T::lit(config.k_max));
    (k_min + progress * stability * (k_max - k_min)).max(k_min).min(k_max)
}

/// `⌈K%·n⌉`, clamped to `[1, n]`.
pub fn selected_count<T: Scalar>(k_percent: T, cohort_size: usize) -> usize {
    let raw = (k_percent * T::lit(cohort_size as f64) / T::lit(100.0)).ceil();
    raw.to_usize().unwrap_or(cohort_size).clamp(1, cohort_size.max(1))
}

/// The clients holding the `⌈K%·n⌉` smallest scores, `n` being the number of
/// usable clients. Ties go to the lower client id. Returned ascending by id.
pub fn select_top<T: Scalar>(scores: &ScoreSet<T>, k_percent: T) -> Vec<usize> {
    let mut ranked: Vec<(usize, T)> = scores.usable().collect();
    if ranked.is_empty() {
        return Vec::new();
    }
    let count = selected_count(k_percent, ranked.len());
    ranked.sort_by(|a, b| a.1.partial_cmp(&b.1).expect("finite scores").then(a.0.cmp(&b.0)));
    let mut chosen: Vec<usize> = ranked[..count].iter().map(|&(id, _)| id).collect();
    chosen.sort_unstable();
    chosen
}

/// Unweighted mean of the selected gradients, summed in ascending client id order.
pub fn leader_gradient<T: Scalar>(
    cohort: &[GradientVector<T>],
    selected: &[usize],
) -> Result<GradientVector<T>, SkipReason> {
    let ordered = by_client_id(cohort);
    let chosen: Vec<&GradientVector<T>> = ordered.into_iter().filter(|g| selected.contains(&g.client_id)).collect();
    let first = chosen.first().ok_or(SkipReason::EmptySelection)?;
    let mut sum = vec![T::zero(); first.values.len()];
    for g in &chosen {
        for (s, &v) in sum.iter_mut().zip(&g.values) {
            *s += v;
        }
    }
    let n = T::lit(chosen.len() as f64);
    sum.iter_mut().for_each(|s| *s = *s / n);
    Ok(GradientVector::new(usize::MAX, first.round, sum))
}

/// Scoring, ratio adaptation, top-K selection, and leader construction.
pub fn run_lgi<T: Scalar>(
    cohort: &[GradientVector<T>],
    state: &mut LgiState<T>,
    config: &LgiConfig,
) -> Result<LgiOutcome<T>, SkipReason> {
    run_lgi_by(cohort, state, config, |scores, k| (k, select_top(scores, k)))
}

/// [`run_lgi`] with an ablation mode; `rng` is only drawn from in
/// [`LgiMode::Random`].
pub fn run_lgi_with<T: Scalar, R: Rng + ?Sized>(
    cohort: &[GradientVector<T>],
    state: &mut LgiState<T>,
    config: &LgiConfig,
    mode: LgiMode,
    rng: &mut R,
) -> Result<LgiOutcome<T>, SkipReason> {
    run_lgi_by(cohort, state, config, |scores, adaptive| match mode {
        LgiMode::Adaptive => (adaptive, select_top(scores, adaptive)),
        LgiMode::Full => {
            let full = T::lit(100.0);
            (full, select_top(scores, full))
        }
        LgiMode::Random => {
            let ids: Vec<usize> = scores.usable().map(|(id, _)| id).collect();
            let count = selected_count(adaptive, ids.len());
            let mut picked: Vec<usize> = index::sample(rng, ids.len(), count).into_iter().map(|i| ids[i]).collect();
            picked.sort_unstable();
            (adaptive, picked)
        }
    })
}

fn run_lgi_by<T: Scalar>(
    cohort: &[GradientVector<T>],
    state: &mut LgiState<T>,
    config: &LgiConfig,
    choose: impl FnOnce(&ScoreSet<T>, T) -> (T, Vec<usize>),
) -> Result<LgiOutcome<T>, SkipReason> {
    let scores = consistency_scores(cohort)?;
    let values: Vec<T> = scores.usable().map(|(_, s)| s).collect();
    let dispersion = mean_std(&values).map_or(T::zero(), |(_, sd)| sd);
    let adaptive = ratio_for_dispersion(state, config, dispersion);
    let (k_t, selected) = choose(&scores, adaptive);
    let leader = leader_gradient(cohort, &selected)?;
    if leader.is_degenerate() {
        return Err(SkipReason::DegenerateLeader);
    }
    Ok(LgiOutcome { scores, dispersion, k_t, selected, leader })
}
