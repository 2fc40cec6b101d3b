//! Progressive-filling max-min fair allocation.
//!
//! All unfrozen flows rise together. At each round the level stops at the
//! tightest constraint: a link whose residual capacity divided by its
//! unfrozen flows is smallest, or a flow's own cap. Flows pinned by that
//! constraint freeze; the rest keep rising.

use crate::scalar::Scalar;

/// One flow: the link indices it crosses and an optional rate cap.
#[derive(Debug, Clone, PartialEq)]
pub struct Demand<S> {
    pub links: Vec<usize>,
    pub cap: Option<S>,
}

impl<S> Demand<S> {
    pub fn new(links: Vec<usize>, cap: Option<S>) -> Self {
        Self { links, cap }
    }
}

/// Max-min fair rates. `None` marks a flow with no link and no cap, whose
/// rate is unbounded. A link listed twice by one flow counts once.
pub fn max_min_fair<S: Scalar>(capacities: &[S], demands: &[Demand<S>]) -> Vec<Option<S>> {
    let links: Vec<Vec<usize>> = demands
        .iter()
        .map(|d| {
            let mut l = d.links.clone();
            l.sort_unstable();
            l.dedup();
            assert!(
                l.iter().all(|&i| i < capacities.len()),
                "demand references an unknown link"
            );
            l
        })
        .collect();

    let n = demands.len();
    let mut rate: Vec<Option<S>> = vec![None; n];
    let mut frozen = vec![false; n];
    for (f, d) in demands.iter().enumerate() {
        if links[f].is_empty() && d.cap.is_none() {
            frozen[f] = true;
        }
    }

    while frozen.iter().any(|x| !x) {
        let mut used = vec![S::zero(); capacities.len()];
        let mut active = vec![0usize; capacities.len()];
        for f in 0..n {
            for &l in &links[f] {
                if frozen[f] {
                    used[l] = used[l] + rate[f].unwrap_or_else(S::zero);
                } else {
                    active[l] += 1;
                }
            }
        }
        let share = |l: usize| {
            let residual = capacities[l] - used[l];
            let residual = if residual < S::zero() {
                S::zero()
            } else {
                residual
            };
            residual / S::from_usize(active[l]).expect("count fits the scalar")
        };

        let mut level: Option<S> = None;
        let mut lower = |x: S| {
            level = Some(match level {
                Some(cur) => S::min_of(cur, x),
                None => x,
            });
        };
        for (l, &a) in active.iter().enumerate() {
            if a > 0 {
                lower(share(l));
            }
        }
        for f in 0..n {
            if !frozen[f] {
                if let Some(c) = demands[f].cap {
                    lower(c);
                }
            }
        }
        let level = level.expect("every unfrozen flow has a link or a cap");

        let mut progressed = false;
        for f in 0..n {
            if frozen[f] {
                continue;
            }
            if let Some(c) = demands[f].cap {
                if c <= level || S::close(c, level) {
                    rate[f] = Some(S::min_of(c, level));
                    frozen[f] = true;
                    progressed = true;
                }
            }
        }
        let saturated: Vec<usize> = (0..capacities.len())
            .filter(|&l| active[l] > 0 && S::close(share(l), level))
            .collect();
        for f in 0..n {
            if !frozen[f] && links[f].iter().any(|l| saturated.contains(l)) {
                rate[f] = Some(level);
                frozen[f] = true;
                progressed = true;
            }
        }
        assert!(progressed, "water-filling made no progress");
    }
    rate
}
