//! Samplers for the ordinary and degree-corrected Poisson block models.
//!
//! Instead of visiting all `n^2/2` pairs, the total multiplicity between each
//! block pair is drawn as one Poisson variable and its edges are placed on
//! endpoints chosen proportionally to their propensities. By Poisson thinning
//! this has the same law as independent per-pair draws, in `O(n + m)` time.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Poisson;

use super::params::{DcParams, SbmParams};
use super::theta::ThetaRule;
use crate::error::{Error, Result};
use crate::graph::{block_statistics, BlockAssignment, Graph};

/// Output of the degree-corrected sampler.
#[derive(Debug, Clone)]
pub struct DcSample {
    pub graph: Graph,
    pub assignment: BlockAssignment,
    /// Parameters used, with `theta` normalized per block.
    pub params: DcParams,
}

pub fn sample_sbm(n: usize, params: &SbmParams, seed: u64) -> Result<(Graph, BlockAssignment)> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels = draw_labels(n, &params.gamma, &mut rng)?;
    let graph = place_edges(n, params, &labels, None, &mut rng)?;
    let assignment = block_statistics(&graph, &labels, params.k())?;
    Ok((graph, assignment))
}

/// Samples with pair means `theta_u * theta_v * omega_{g_u g_v}` where raw
/// propensities come from `rule` and are rescaled to sum to `n_r` in each block.
pub fn sample_dcsbm(n: usize, params: &SbmParams, rule: &dyn ThetaRule, seed: u64) -> Result<DcSample> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels = draw_labels(n, &params.gamma, &mut rng)?;
    let mut theta = rule.draw(n, &mut rng);
    if theta.len() != n || theta.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
        return Err(Error::InvalidParams(format!(
            "theta rule `{}` produced non-positive or non-finite values",
            rule.name()
        )));
    }
    normalize_theta(&mut theta, &labels, params.k());
    let graph = place_edges(n, params, &labels, Some(&theta), &mut rng)?;
    let assignment = block_statistics(&graph, &labels, params.k())?;
    Ok(DcSample {
        graph,
        assignment,
        params: DcParams {
            gamma: params.gamma.clone(),
            omega: params.omega.clone(),
            theta,
        },
    })
}

/// Rescales `theta` so it sums to the block size within each block.
pub fn normalize_theta(theta: &mut [f64], labels: &[usize], k: usize) {
    let mut sums = vec![0.0; k];
    let mut sizes = vec![0usize; k];
    for (t, &g) in theta.iter().zip(labels) {
        sums[g] += *t;
        sizes[g] += 1;
    }
    for (t, &g) in theta.iter_mut().zip(labels) {
        *t *= sizes[g] as f64 / sums[g];
    }
}

fn draw_labels(n: usize, gamma: &[f64], rng: &mut dyn RngCore) -> Result<Vec<usize>> {
    if gamma.len() == 1 {
        return Ok(vec![0; n]);
    }
    let dist = WeightedIndex::new(gamma).map_err(|e| Error::InvalidParams(format!("gamma: {e}")))?;
    Ok((0..n).map(|_| dist.sample(rng)).collect())
}

enum Picker<'a> {
    Uniform(&'a [usize]),
    Weighted(&'a [usize], WeightedIndex<f64>),
}

impl Picker<'_> {
    fn pick(&self, rng: &mut dyn RngCore) -> usize {
        match self {
            Picker::Uniform(nodes) => nodes[rng.random_range(0..nodes.len())],
            Picker::Weighted(nodes, dist) => nodes[dist.sample(rng)],
        }
    }
}

fn place_edges(
    n: usize,
    params: &SbmParams,
    labels: &[usize],
    theta: Option<&[f64]>,
    rng: &mut dyn RngCore,
) -> Result<Graph> {
    let k = params.k();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (u, &g) in labels.iter().enumerate() {
        members[g].push(u);
    }
    let weight = |u: usize| theta.map_or(1.0, |t| t[u]);
    let totals: Vec<f64> = members.iter().map(|b| b.iter().map(|&u| weight(u)).sum()).collect();
    let squares: Vec<f64> = members
        .iter()
        .map(|b| b.iter().map(|&u| weight(u) * weight(u)).sum())
        .collect();

    let mut pickers = Vec::with_capacity(k);
    for block in &members {
        let picker = match theta {
            Some(t) if !block.is_empty() => {
                let w: Vec<f64> = block.iter().map(|&u| t[u]).collect();
                let dist = WeightedIndex::new(&w).map_err(|e| Error::InvalidParams(format!("theta: {e}")))?;
                Picker::Weighted(block, dist)
            }
            _ => Picker::Uniform(block),
        };
        pickers.push(picker);
    }

    let mut edges: Vec<(usize, usize, u32)> = Vec::new();
    for r in 0..k {
        for s in r..k {
            let mean = if r == s {
                0.5 * (totals[r] * totals[r] - squares[r]) * params.omega(r, r)
            } else {
                totals[r] * totals[s] * params.omega(r, s)
            };
            if !(mean > 0.0) {
                continue;
            }
            let count = Poisson::new(mean)
                .map_err(|e| Error::InvalidParams(format!("poisson mean {mean}: {e}")))?
                .sample(rng) as u64;
            for _ in 0..count {
                let u = pickers[r].pick(rng);
                let v = loop {
                    let v = pickers[s].pick(rng);
                    if v != u {
                        break v;
                    }
                };
                edges.push((u, v, 1));
            }
        }
    }
    Ok(Graph::from_edges(n, edges))
}
