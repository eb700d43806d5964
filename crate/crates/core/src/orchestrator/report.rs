use serde::{Deserialize, Serialize};

use crate::lgi::SkipReason;

/// Everything observed in one training round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub round: u32,
    /// Passes over the training set completed, counted in batches seen.
    pub epoch_equiv: f64,
    /// Cohort in ascending id order; `client_losses` aligns with it.
    pub client_ids: Vec<usize>,
    pub client_losses: Vec<f64>,
    /// Mean of the client losses.
    pub train_loss: f64,
    /// Penalised loss per survivor, aligned with `survivors`.
    pub regularized_losses: Vec<f64>,
    pub global_loss: Option<f64>,
    /// Test accuracy on evaluation rounds.
    pub accuracy: Option<f64>,
    /// Mean pairwise angle between the clients' server-side gradients.
    pub pairwise_dev: Option<f64>,
    pub k_t: Option<f64>,
    pub theta_th: Option<f64>,
    pub selected: Option<Vec<usize>>,
    pub survivors: Option<Vec<usize>>,
    /// Coordination was skipped and the round ran as PSL.
    pub skipped: Option<SkipReason>,
    /// No client passed the alignment filter; the leader was used.
    pub fallback: bool,
    pub wall_ms: u64,
}

impl RoundReport {
    pub(crate) fn new(round: u32, epoch_equiv: f64, client_ids: Vec<usize>, client_losses: Vec<f64>) -> Self {
        let train_loss = client_losses.iter().sum::<f64>() / client_losses.len().max(1) as f64;
        Self {
            round,
            epoch_equiv,
            client_ids,
            client_losses,
            train_loss,
            regularized_losses: Vec::new(),
            global_loss: None,
            accuracy: None,
            pairwise_dev: None,
            k_t: None,
            theta_th: None,
            selected: None,
            survivors: None,
            skipped: None,
            fallback: false,
            wall_ms: 0,
        }
    }
}
