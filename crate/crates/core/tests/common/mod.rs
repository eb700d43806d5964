//! Independent reference implementations for the test targets. Nothing here
//! calls into the crate's geometry, selection, or alignment code.
#![allow(dead_code)]
// plain index loops on purpose: nothing shared with the iterator code under test
#![allow(clippy::needless_range_loop)]

use std::f64::consts::FRAC_PI_2;

use gapsl::nn::{backward_client, backward_server, forward_client, forward_server, Dense, SplitModel};
use gapsl::nn::Matrix;

pub const DEGENERATE: f64 = 1e-12;

fn length(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Angle as `atan2(‖a × b‖, a · b)`, the cross norm taken over every
/// coordinate plane. `None` for a zero-length side.
pub fn angle(a: &[f64], b: &[f64]) -> Option<f64> {
    if length(a) <= DEGENERATE || length(b) <= DEGENERATE {
        return None;
    }
    let mut cross = 0.0;
    let mut inner = 0.0;
    for i in 0..a.len() {
        inner += a[i] * b[i];
        for j in i + 1..a.len() {
            let w = a[i] * b[j] - a[j] * b[i];
            cross += w * w;
        }
    }
    Some(cross.sqrt().atan2(inner))
}

pub fn pairwise(vs: &[Vec<f64>]) -> Option<f64> {
    let mut total = 0.0;
    let mut n = 0;
    for i in 0..vs.len() {
        for j in 0..vs.len() {
            if i < j {
                if let Some(a) = angle(&vs[i], &vs[j]) {
                    total += a;
                    n += 1;
                }
            }
        }
    }
    (n > 0).then(|| total / n as f64)
}

/// Two-pass mean and population standard deviation.
pub fn two_pass(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, Default)]
pub struct Extremes {
    pub lo: Option<f64>,
    pub hi: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Selection {
    pub ids: Vec<usize>,
    pub scores: Vec<Option<f64>>,
    pub dispersion: f64,
    pub k: f64,
    pub selected: Vec<usize>,
    pub leader: Vec<f64>,
}

/// Score, adapt, select, average. `None` when fewer than two gradients have length.
pub fn select(
    cohort: &[(usize, Vec<f64>)],
    ext: &mut Extremes,
    round: u32,
    total: u32,
    k_min: f64,
    k_max: f64,
) -> Option<Selection> {
    let mut sorted = cohort.to_vec();
    sorted.sort_by_key(|c| c.0);
    let ok: Vec<bool> = sorted.iter().map(|c| length(&c.1) > DEGENERATE).collect();
    let m = ok.iter().filter(|&&b| b).count();
    if m < 2 {
        return None;
    }
    let mut scores = vec![None; sorted.len()];
    for i in 0..sorted.len() {
        if !ok[i] {
            continue;
        }
        let mut s = 0.0;
        for j in 0..sorted.len() {
            if j != i && ok[j] {
                s += angle(&sorted[i].1, &sorted[j].1).unwrap();
            }
        }
        scores[i] = Some(s / (m - 1) as f64);
    }
    let live: Vec<f64> = scores.iter().flatten().copied().collect();
    let nu = two_pass(&live).1;
    let lo = ext.lo.map_or(nu, |x: f64| x.min(nu));
    let hi = ext.hi.map_or(nu, |x: f64| x.max(nu));
    ext.lo = Some(lo);
    ext.hi = Some(hi);
    // a range below 1e-12 rad is treated as no range at all
    let stab = if hi - lo > 1e-12 { (hi - nu) / (hi - lo) } else { 1.0 };
    let frac = (round as f64 / total as f64).min(1.0);
    let k = (k_min + frac * stab * (k_max - k_min)).clamp(k_min, k_max);
    let count = ((k * m as f64 / 100.0).ceil() as usize).clamp(1, m);
    let mut order: Vec<usize> = (0..sorted.len()).filter(|&i| ok[i]).collect();
    order.sort_by(|&a, &b| scores[a].unwrap().total_cmp(&scores[b].unwrap()).then(sorted[a].0.cmp(&sorted[b].0)));
    let mut picked: Vec<usize> = order[..count].to_vec();
    picked.sort_unstable();
    let dim = sorted[0].1.len();
    let mut leader = vec![0.0; dim];
    for &i in &picked {
        for d in 0..dim {
            leader[d] += sorted[i].1[d];
        }
    }
    for x in &mut leader {
        *x /= count as f64;
    }
    Some(Selection {
        ids: sorted.iter().map(|c| c.0).collect(),
        scores,
        dispersion: nu,
        k,
        selected: picked.iter().map(|&i| sorted[i].0).collect(),
        leader,
    })
}

#[derive(Debug, Clone)]
pub struct Alignment {
    pub deviations: Vec<Option<f64>>,
    pub threshold: f64,
    pub survivors: Vec<usize>,
    pub penalized: Vec<f64>,
    pub corrected: Vec<Vec<f64>>,
    pub total: f64,
}

/// Threshold filter, penalties, and first-order corrections, survivors by ascending id.
pub fn align(
    cohort: &[(usize, Vec<f64>)],
    losses: &[f64],
    leader: &[f64],
    eta: f64,
    lambda: f64,
    lambda_g: Option<f64>,
) -> Alignment {
    let mut order: Vec<usize> = (0..cohort.len()).collect();
    order.sort_by_key(|&i| cohort[i].0);
    let deviations: Vec<Option<f64>> = order.iter().map(|&i| angle(&cohort[i].1, leader)).collect();
    let live: Vec<f64> = deviations.iter().flatten().copied().collect();
    let (mu, nu) = two_pass(&live);
    let threshold = (mu - eta * nu).clamp(0.0, FRAC_PI_2);
    let mut survivors = Vec::new();
    let mut penalized = Vec::new();
    let mut corrected = Vec::new();
    for (k, &i) in order.iter().enumerate() {
        let Some(theta) = deviations[k] else { continue };
        if theta > threshold {
            continue;
        }
        survivors.push(cohort[i].0);
        penalized.push(losses[i] + lambda * (1.0 - theta.cos()));
        let g = &cohort[i].1;
        let ng = length(g);
        let strength = lambda_g.unwrap_or(lambda * ng);
        corrected.push(nudge(g, leader, strength));
    }
    let total = penalized.iter().sum();
    Alignment { deviations, threshold, survivors, penalized, corrected, total }
}

/// Rotates `g` toward `leader` by the gradient of `s(1 − cos θ)`, capped at `‖g‖²`.
pub fn nudge(g: &[f64], leader: &[f64], s: f64) -> Vec<f64> {
    let (ng, nl) = (length(g), length(leader));
    if ng <= DEGENERATE || nl <= DEGENERATE || s <= 0.0 {
        return g.to_vec();
    }
    let c: f64 = g.iter().zip(leader).map(|(a, b)| a * b).sum::<f64>() / (ng * nl);
    if c >= 1.0 {
        return g.to_vec();
    }
    let s = s.min(ng * ng);
    g.iter().zip(leader).map(|(&a, &b)| a + s / ng * (b / nl - c * a / ng)).collect()
}

fn loss_of(model: &SplitModel<f64>, x: &Matrix<f64>, y: &[usize]) -> f64 {
    let (act, _) = forward_client(&model.client, x).unwrap();
    forward_server(&model.server, &act, y).unwrap().mean_loss
}

fn for_each_param(model: &mut SplitModel<f64>, mut f: impl FnMut(&mut SplitModel<f64>, usize, usize, usize)) {
    let shapes: Vec<(usize, usize)> =
        model.layers().map(|l| (l.weights.as_slice().len(), l.bias.len())).collect();
    for (li, (nw, nb)) in shapes.into_iter().enumerate() {
        for p in 0..nw + nb {
            f(model, li, p, nw);
        }
    }
}

fn param_mut(model: &mut SplitModel<f64>, layer: usize, p: usize, nw: usize) -> &mut f64 {
    let nc = model.client.layers.len();
    let l: &mut Dense<f64> =
        if layer < nc { &mut model.client.layers[layer] } else { &mut model.server.layers[layer - nc] };
    if p < nw {
        &mut l.weights.as_mut_slice()[p]
    } else {
        &mut l.bias[p - nw]
    }
}

/// Largest element-wise relative error between backprop and central
/// differences. The denominator is floored at `1e-4` so that entries which
/// are zero up to rounding do not divide by nothing.
pub fn finite_difference_error(model: &SplitModel<f64>, x: &Matrix<f64>, y: &[usize], h: f64) -> f64 {
    let (act, ccache) = forward_client(&model.client, x).unwrap();
    let fwd = forward_server(&model.server, &act, y).unwrap();
    let (sgrads, agrads) = backward_server(&model.server, &fwd.cache).unwrap();
    let cgrads = backward_client(&model.client, &ccache, &agrads).unwrap();
    let analytic: Vec<f64> = cgrads
        .iter()
        .chain(&sgrads)
        .flat_map(|l| l.weights.as_slice().iter().chain(&l.bias).copied().collect::<Vec<_>>())
        .collect();
    let mut numeric = Vec::with_capacity(analytic.len());
    let mut m = model.clone();
    for_each_param(&mut m, |m, li, p, nw| {
        let orig = *param_mut(m, li, p, nw);
        *param_mut(m, li, p, nw) = orig + h;
        let up = loss_of(m, x, y);
        *param_mut(m, li, p, nw) = orig - h;
        let down = loss_of(m, x, y);
        *param_mut(m, li, p, nw) = orig;
        numeric.push((up - down) / (2.0 * h));
    });
    assert_eq!(numeric.len(), analytic.len());
    analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-4))
        .fold(0.0, f64::max)
}
