//! Gradient direction alignment.
//!
//! Measures every client's angle to the leader gradient, keeps the clients
//! under an adaptive threshold, charges each survivor a `λ(1 − cos θ)`
//! penalty, and nudges each survivor's server-side gradient toward the
//! leader in gradient space.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{angular_deviation, cosine, mean_std, norm, GradientVector};
use crate::lgi::{by_client_id, SkipReason};
use crate::scalar::Scalar;

/// How the penalty reaches the server update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrectionMode {
    /// Shift each survivor's gradient by the first-order penalty gradient.
    #[default]
    Gradient,
    /// Log the penalised losses only; gradients pass through unchanged.
    LossOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GdaConfig {
    /// Threshold sensitivity to the spread of the deviations.
    pub eta: f64,
    /// Penalty coefficient.
    pub lambda: f64,
    /// Fixed correction strength; `None` uses `lambda · ‖g_i‖` per client.
    pub lambda_g: Option<f64>,
    pub correction: CorrectionMode,
    /// Replaces the adaptive threshold with a constant angle.
    pub threshold_override: Option<f64>,
}

impl Default for GdaConfig {
    fn default() -> Self {
        Self { eta: 1.0, lambda: 5e-4, lambda_g: None, correction: CorrectionMode::Gradient, threshold_override: None }
    }
}

impl GdaConfig {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            errs.push(format!("eta must be a finite value >= 0, got {}", self.eta));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            errs.push(format!("lambda must be a finite value >= 0, got {}", self.lambda));
        }
        if let Some(lg) = self.lambda_g {
            if !(lg >= 0.0 && lg.is_finite()) {
                errs.push(format!("lambda_g must be a finite value >= 0, got {lg}"));
            }
        }
        if let Some(th) = self.threshold_override {
            if !(0.0..=PI).contains(&th) {
                errs.push(format!("threshold override must lie in [0, pi], got {th}"));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GdaOutcome<T> {
    /// Client ids of the cohort, ascending.
    pub client_ids: Vec<usize>,
    /// Angle to the leader per client; `None` for degenerate gradients.
    pub deviations: Vec<Option<T>>,
    pub threshold: T,
    /// Surviving client ids, ascending.
    pub survivors: Vec<usize>,
    /// Penalised loss per survivor, aligned with `survivors`.
    pub regularized_losses: Vec<T>,
    pub global_loss: T,
    /// Corrected gradient per survivor, aligned with `survivors`.
    pub corrected: Vec<GradientVector<T>>,
    /// No client survived; the caller falls back to the leader.
    pub fallback: bool,
}

impl<T: Scalar> GdaOutcome<T> {
    pub fn deviation_of(&self, client_id: usize) -> Option<T> {
        self.client_ids.iter().position(|&c| c == client_id).and_then(|i| self.deviations[i])
    }
}

/// Angle of each cohort gradient (ascending client id) to the leader.
pub fn deviations_to_leader<T: Scalar>(
    cohort: &[GradientVector<T>],
    leader: &GradientVector<T>,
) -> Result<Vec<Option<T>>, SkipReason> {
    if leader.is_degenerate() {
        return Err(SkipReason::DegenerateLeader);
    }
    by_client_id(cohort)
        .into_iter()
        .map(|g| {
            if g.values.len() != leader.values.len() {
                return Err(SkipReason::LengthMismatch);
            }
            Ok(angular_deviation(&g.values, &leader.values).ok())
        })
        .collect()
}

/// `max(min(μ − η·ν, π/2), 0)` over the deviations, `ν` the population
/// standard deviation. An empty input yields 0.
pub fn adaptive_threshold<T: Scalar>(deviations: &[T], eta: T) -> T {
    let Some((mu, nu)) = mean_std(deviations) else {
        return T::zero();
    };
    (mu - eta * nu).min(T::lit(FRAC_PI_2)).max(T::zero())
}

/// Ids whose deviation is at or below the threshold.
pub fn filter_clients<T: Scalar>(client_ids: &[usize], deviations: &[Option<T>], threshold: T) -> Vec<usize> {
    client_ids
        .iter()
        .zip(deviations)
        .filter_map(|(&id, d)| d.filter(|&d| d <= threshold).map(|_| id))
        .collect()
}

/// `L + λ(1 − cos θ)`.
pub fn regularized_loss<T: Scalar>(loss: T, theta: T, lambda: T) -> T {
    loss + lambda * (T::one() - theta.cos())
}

/// `g + (λ_g/‖g‖)(û_lead − cos θ · û_g)`: the descent direction of
/// `λ_g(1 − cos θ)` with respect to `g`, which rotates `g` toward the leader
/// without changing its component along `g`.
///
/// The strength is capped at `‖g‖²`; larger steps can rotate past the
/// leader and increase the angle again. Exactly parallel inputs and
/// degenerate inputs are returned unchanged.
pub fn alignment_correction<T: Scalar>(g: &[T], leader: &[T], lambda_g: T) -> Vec<T> {
    let cos = match cosine(g, leader) {
        Ok(c) => c,
        Err(_) => {
            log::warn!("alignment correction skipped for a degenerate gradient");
            return g.to_vec();
        }
    };
    if cos >= T::one() || lambda_g <= T::zero() {
        return g.to_vec();
    }
    let (ng, nl) = (norm(g), norm(leader));
    let strength = lambda_g.min(ng * ng);
    let step = strength / ng;
    g.iter().zip(leader).map(|(&gi, &li)| gi + step * (li / nl - cos * (gi / ng))).collect()
}

/// Sum of the survivors' penalised losses.
pub fn global_loss<T: Scalar>(regularized: &[T]) -> T {
    regularized.iter().copied().fold(T::zero(), |a, b| a + b)
}

/// Deviations, threshold, filter, penalties and corrections, global loss.
///
/// `losses[i]` is the plain loss of `cohort[i]`.
pub fn run_gda<T: Scalar>(
    cohort: &[GradientVector<T>],
    losses: &[T],
    leader: &GradientVector<T>,
    config: &GdaConfig,
) -> Result<GdaOutcome<T>, SkipReason> {
    let (client_ids, deviations, threshold) = measure(cohort, leader, config)?;
    let survivors = filter_clients(&client_ids, &deviations, threshold);
    Ok(finish(cohort, losses, leader, config, client_ids, deviations, threshold, survivors))
}

/// Ablation: a uniformly random subset of the usable clients, the same size
/// as the threshold filter would keep, replaces the filtered set.
pub fn run_gda_random<T: Scalar, R: Rng + ?Sized>(
    cohort: &[GradientVector<T>],
    losses: &[T],
    leader: &GradientVector<T>,
    config: &GdaConfig,
    rng: &mut R,
) -> Result<GdaOutcome<T>, SkipReason> {
    let (client_ids, deviations, threshold) = measure(cohort, leader, config)?;
    let size = filter_clients(&client_ids, &deviations, threshold).len();
    let usable: Vec<usize> =
        client_ids.iter().zip(&deviations).filter_map(|(&id, d)| d.map(|_| id)).collect();
    let mut survivors: Vec<usize> = index::sample(rng, usable.len(), size).into_iter().map(|i| usable[i]).collect();
    survivors.sort_unstable();
    Ok(finish(cohort, losses, leader, config, client_ids, deviations, threshold, survivors))
}

type Measured<T> = (Vec<usize>, Vec<Option<T>>, T);

fn measure<T: Scalar>(
    cohort: &[GradientVector<T>],
    leader: &GradientVector<T>,
    config: &GdaConfig,
) -> Result<Measured<T>, SkipReason> {
    let deviations = deviations_to_leader(cohort, leader)?;
    let client_ids: Vec<usize> = by_client_id(cohort).iter().map(|g| g.client_id).collect();
    let usable: Vec<T> = deviations.iter().flatten().copied().collect();
    if usable.is_empty() {
        return Err(SkipReason::TooFewUsable { usable: 0 });
    }
    let threshold = match config.threshold_override {
        Some(th) => T::lit(th),
        None => adaptive_threshold(&usable, T::lit(config.eta)),
    };
    Ok((client_ids, deviations, threshold))
}

#[allow(clippy::too_many_arguments)]
fn finish<T: Scalar>(
    cohort: &[GradientVector<T>],
    losses: &[T],
    leader: &GradientVector<T>,
    config: &GdaConfig,
    client_ids: Vec<usize>,
    deviations: Vec<Option<T>>,
    threshold: T,
    survivors: Vec<usize>,
) -> GdaOutcome<T> {
    let lambda = T::lit(config.lambda);
    let mut regularized_losses = Vec::with_capacity(survivors.len());
    let mut corrected = Vec::with_capacity(survivors.len());
    for &id in &survivors {
        let pos = cohort.iter().position(|g| g.client_id == id).expect("survivor in cohort");
        let g = &cohort[pos];
        let theta = deviations[client_ids.iter().position(|&c| c == id).expect("id")].expect("usable");
        regularized_losses.push(regularized_loss(losses[pos], theta, lambda));
        let values = match config.correction {
            CorrectionMode::Gradient => {
                let lambda_g = config.lambda_g.map_or_else(|| lambda * g.norm(), T::lit);
                alignment_correction(&g.values, &leader.values, lambda_g)
            }
            CorrectionMode::LossOnly => g.values.clone(),
        };
        corrected.push(GradientVector::new(id, g.round, values));
    }
    GdaOutcome {
        global_loss: global_loss(&regularized_losses),
        fallback: survivors.is_empty(),
        client_ids,
        deviations,
        threshold,
        survivors,
        regularized_losses,
        corrected,
    }
}
