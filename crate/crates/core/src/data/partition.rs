use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Gamma;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Disjoint per-client index lists covering a training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub client_indices: Vec<Vec<usize>>,
    /// Dirichlet concentration, `None` for an IID split.
    pub alpha: Option<f64>,
}

impl Partition {
    pub fn num_clients(&self) -> usize {
        self.client_indices.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.client_indices.iter().map(Vec::len).collect()
    }
}

fn check_sizes(labels: &[usize], num_clients: usize) -> Result<()> {
    if num_clients < 2 {
        return Err(Error::Config(format!("need at least 2 clients, got {num_clients}")));
    }
    if labels.len() < num_clients {
        return Err(Error::Data(format!("{} samples cannot cover {num_clients} clients", labels.len())));
    }
    Ok(())
}

/// Shuffled round-robin split; client sizes differ by at most one.
pub fn iid_partition(labels: &[usize], num_clients: usize, seed: u64) -> Result<Partition> {
    check_sizes(labels, num_clients)?;
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut client_indices = vec![Vec::new(); num_clients];
    for (k, i) in order.into_iter().enumerate() {
        client_indices[k % num_clients].push(i);
    }
    client_indices.iter_mut().for_each(|c| c.sort_unstable());
    Ok(Partition { client_indices, alpha: None })
}

/// Per-class Dirichlet allocation.
///
/// For every class a `Dir(alpha, …, alpha)` draw over clients sets the share
/// of that class each client receives. Shares become integer counts by
/// largest-remainder rounding (ties to the lower client id), and the shuffled
/// class indices are dealt out in client order. Any client still empty
/// afterwards takes one sample from the currently largest client.
pub fn dirichlet_partition(labels: &[usize], num_clients: usize, alpha: f64, seed: u64) -> Result<Partition> {
    check_sizes(labels, num_clients)?;
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::Config(format!("alpha must be positive and finite, got {alpha}")));
    }
    let gamma = Gamma::new(alpha, 1.0).map_err(|e| Error::Config(format!("alpha {alpha}: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let num_classes = labels.iter().max().map_or(0, |&m| m + 1);
    let mut by_class = vec![Vec::new(); num_classes];
    for (i, &y) in labels.iter().enumerate() {
        by_class[y].push(i);
    }

    let mut client_indices = vec![Vec::new(); num_clients];
    for mut members in by_class {
        members.shuffle(&mut rng);
        let mut shares: Vec<f64> = (0..num_clients).map(|_| rng.sample(gamma)).collect();
        let total: f64 = shares.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            // every draw underflowed: hand the class to one client
            let pick = rng.random_range(0..num_clients);
            shares = (0..num_clients).map(|k| if k == pick { 1.0 } else { 0.0 }).collect();
        } else {
            shares.iter_mut().for_each(|s| *s /= total);
        }
        let counts = largest_remainder(&shares, members.len());
        let mut start = 0;
        for (client, count) in counts.into_iter().enumerate() {
            client_indices[client].extend_from_slice(&members[start..start + count]);
            start += count;
        }
    }

    client_indices.iter_mut().for_each(|c| c.sort_unstable());
    for k in 0..num_clients {
        if client_indices[k].is_empty() {
            let donor = (0..num_clients)
                .max_by(|&a, &b| client_indices[a].len().cmp(&client_indices[b].len()).then(b.cmp(&a)))
                .expect("num_clients >= 2");
            let moved = client_indices[donor].pop().expect("donor has samples");
            client_indices[k].push(moved);
        }
    }
    Ok(Partition { client_indices, alpha: Some(alpha) })
}

/// Integer counts summing to `total`, proportional to `shares`.
fn largest_remainder(shares: &[f64], total: usize) -> Vec<usize> {
    let exact: Vec<f64> = shares.iter().map(|s| s * total as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..shares.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &k in order.iter().cycle().take(total.saturating_sub(assigned)) {
        counts[k] += 1;
    }
    counts
}

/// Mean total-variation distance between each client's label distribution
/// and the global one.
pub fn label_skew(labels: &[usize], partition: &Partition, num_classes: usize) -> f64 {
    let dist = |idx: &mut dyn Iterator<Item = usize>| {
        let mut h = vec![0.0f64; num_classes];
        let mut n = 0.0f64;
        for y in idx {
            h[y] += 1.0;
            n += 1.0;
        }
        h.iter_mut().for_each(|v| *v /= n);
        h
    };
    let global = dist(&mut labels.iter().copied());
    let total: f64 = partition
        .client_indices
        .iter()
        .map(|c| {
            let local = dist(&mut c.iter().map(|&i| labels[i]));
            0.5 * local.iter().zip(&global).map(|(a, b)| (a - b).abs()).sum::<f64>()
        })
        .sum();
    total / partition.num_clients() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn labels(classes: usize, per_class: usize) -> Vec<usize> {
        (0..classes).flat_map(|c| std::iter::repeat_n(c, per_class)).collect()
    }

    fn assert_valid(p: &Partition, n: usize) {
        let mut all: Vec<usize> = p.client_indices.concat();
        all.sort_unstable();
        assert_eq!(all, (0..n).collect::<Vec<_>>(), "disjoint cover");
        assert!(p.client_indices.iter().all(|c| !c.is_empty()));
    }

    #[test]
    fn iid_gives_equal_shares() {
        let y = labels(10, 10);
        let p = iid_partition(&y, 10, 1).unwrap();
        assert_eq!(p.sizes(), vec![10; 10]);
        assert_valid(&p, 100);
        assert_eq!(p, iid_partition(&y, 10, 1).unwrap());
    }

    #[test]
    fn iid_histograms_track_global() {
        let y = labels(4, 250);
        let p = iid_partition(&y, 5, 9).unwrap();
        assert!(label_skew(&y, &p, 4) < 0.1);
    }

    #[test]
    fn huge_alpha_matches_global_proportions() {
        let y = labels(10, 100);
        let p = dirichlet_partition(&y, 10, 1e6, 4).unwrap();
        for c in &p.client_indices {
            let mut h = [0usize; 10];
            for &i in c {
                h[y[i]] += 1;
            }
            for count in h {
                let frac = count as f64 / c.len() as f64;
                assert!((frac - 0.1).abs() <= 0.05, "fraction {frac}");
            }
        }
    }

    #[test]
    fn small_alpha_is_more_skewed_than_large() {
        let y = labels(10, 100);
        let skew = |alpha: f64| -> f64 {
            (0..5).map(|s| label_skew(&y, &dirichlet_partition(&y, 10, alpha, s).unwrap(), 10)).sum::<f64>() / 5.0
        };
        let lo = skew(0.1);
        let hi = skew(0.9);
        assert!(lo > hi, "skew at 0.1 = {lo}, at 0.9 = {hi}");
    }

    #[test]
    fn too_few_samples_is_a_data_error() {
        assert!(matches!(dirichlet_partition(&[0, 1], 3, 0.5, 0), Err(Error::Data(_))));
        assert!(matches!(iid_partition(&[0, 1], 3, 0), Err(Error::Data(_))));
        assert!(matches!(dirichlet_partition(&[0, 1, 1], 2, 0.0, 0), Err(Error::Config(_))));
    }

    #[test]
    fn largest_remainder_sums_to_total() {
        assert_eq!(largest_remainder(&[0.5, 0.25, 0.25], 3), vec![1, 1, 1]);
        assert_eq!(largest_remainder(&[0.5, 0.25, 0.25], 4), vec![2, 1, 1]);
        assert_eq!(largest_remainder(&[1.0 / 3.0; 3], 10), vec![4, 3, 3]);
    }

    proptest! {
        #[test]
        fn dirichlet_partition_is_disjoint_cover(
            classes in 1usize..6,
            per_class in 1usize..20,
            clients in 2usize..8,
            alpha in 0.01f64..10.0,
            seed in any::<u64>(),
        ) {
            let y = labels(classes, per_class);
            prop_assume!(y.len() >= clients);
            let p = dirichlet_partition(&y, clients, alpha, seed).unwrap();
            assert_valid(&p, y.len());
        }
    }
}
