//! Redundancy removal over raw detections.
//!
//! Both filters work on any gestalt whose support is a set of building
//! element indices and which can be rescored on a reduced support.
//!
//! * [`exclusion_filter`]: each element supports at most one accepted
//!   gestalt. Accepted members are consumed and every remaining candidate is
//!   rescored without them.
//! * [`masking_filter`]: a candidate is masked when removing the members of
//!   a single accepted gestalt leaves it non-meaningful. Elements are never
//!   consumed, so one dot may belong to a row and a column at once.

use std::cmp::Ordering;

use crate::dots::{DotDetection, DotScorer};
use crate::gabor::{GaborDetection, GaborScorer};
use crate::stats::LogNfa;

/// A raw detection seen as a group of building elements.
pub trait Gestalt {
    fn log_nfa(&self) -> LogNfa;
    /// Supporting element indices, ascending.
    fn members(&self) -> &[usize];
    /// Final tie-break after NFA and member count.
    fn tie_key(&self) -> (usize, usize, f64);
}

/// Recomputes a gestalt's NFA from a subset of its members, keeping the
/// original geometry and number of tests.
pub trait Rescore<G> {
    fn rescore(&self, gestalt: &G, members: &[usize]) -> LogNfa;
}

impl<G, F> Rescore<G> for F
where
    F: Fn(&G, &[usize]) -> LogNfa,
{
    fn rescore(&self, gestalt: &G, members: &[usize]) -> LogNfa {
        self(gestalt, members)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Accepted {
    /// Index into the candidate slice.
    pub index: usize,
    /// NFA at acceptance; differs from the raw value only under exclusion.
    pub log_nfa: LogNfa,
    /// Members at acceptance, ascending. Under exclusion these are the
    /// members not already claimed by earlier gestalts.
    pub members: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Filter {
    #[default]
    None,
    Exclusion,
    Masking,
}

fn rank(nfa_a: LogNfa, a: &impl Gestalt, len_a: usize, nfa_b: LogNfa, b: &impl Gestalt, len_b: usize) -> Ordering {
    let (ka, kb) = (a.tie_key(), b.tie_key());
    nfa_a
        .cmp(&nfa_b)
        .then(len_a.cmp(&len_b))
        .then(ka.0.cmp(&kb.0))
        .then(ka.1.cmp(&kb.1))
        .then(ka.2.total_cmp(&kb.2))
}

fn sorted_order<G: Gestalt>(candidates: &[G]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&x, &y| {
        let (a, b) = (&candidates[x], &candidates[y]);
        rank(a.log_nfa(), a, a.members().len(), b.log_nfa(), b, b.members().len())
    });
    order
}

/// `a \ b` for ascending slices.
fn difference(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(a.len());
    let mut bi = b.iter().peekable();
    for &x in a {
        while bi.peek().is_some_and(|&&y| y < x) {
            bi.next();
        }
        if bi.peek() != Some(&&x) {
            out.push(x);
        }
    }
    out
}

fn residual_meaningful<G, R: Rescore<G>>(
    scorer: &R,
    gestalt: &G,
    members: &[usize],
    removed: &[usize],
    eps_log: f64,
) -> bool {
    let rest = difference(members, removed);
    if rest.len() == members.len() {
        return true;
    }
    !rest.is_empty() && scorer.rescore(gestalt, &rest).value() < eps_log
}

/// Greedy exclusion: accept the best remaining candidate, consume its
/// members, rescore the rest, drop what is no longer meaningful, repeat.
pub fn exclusion_filter<G: Gestalt, R: Rescore<G>>(
    candidates: &[G],
    scorer: &R,
    epsilon: f64,
) -> Vec<Accepted> {
    let eps_log = epsilon.log10();
    struct Live {
        index: usize,
        members: Vec<usize>,
        nfa: LogNfa,
    }
    let mut live: Vec<Live> = sorted_order(candidates)
        .into_iter()
        .filter(|&i| candidates[i].log_nfa().value() < eps_log)
        .map(|i| Live {
            index: i,
            members: candidates[i].members().to_vec(),
            nfa: candidates[i].log_nfa(),
        })
        .collect();

    let mut accepted = Vec::new();
    while !live.is_empty() {
        let best = (0..live.len())
            .min_by(|&x, &y| {
                let (a, b) = (&live[x], &live[y]);
                rank(
                    a.nfa,
                    &candidates[a.index],
                    a.members.len(),
                    b.nfa,
                    &candidates[b.index],
                    b.members.len(),
                )
            })
            .expect("non-empty");
        let winner = live.swap_remove(best);
        accepted.push(Accepted {
            index: winner.index,
            log_nfa: winner.nfa,
            members: winner.members.clone(),
        });
        live.retain_mut(|c| {
            let rest = difference(&c.members, &winner.members);
            if rest.len() == c.members.len() {
                return true;
            }
            if rest.is_empty() {
                return false;
            }
            c.nfa = scorer.rescore(&candidates[c.index], &rest);
            c.members = rest;
            c.nfa.value() < eps_log
        });
    }
    accepted
}

/// Masking principle. Candidates are visited in ascending NFA order; one is
/// accepted unless a single already accepted gestalt masks it, or it would
/// itself mask an already accepted one. The second condition keeps the
/// output pairwise stable.
pub fn masking_filter<G: Gestalt, R: Rescore<G>>(
    candidates: &[G],
    scorer: &R,
    epsilon: f64,
) -> Vec<Accepted> {
    let eps_log = epsilon.log10();
    let mut accepted: Vec<Accepted> = Vec::new();
    for i in sorted_order(candidates) {
        let cand = &candidates[i];
        if cand.log_nfa().value() >= eps_log {
            continue;
        }
        let clash = accepted.iter().any(|a| {
            let other = &candidates[a.index];
            !residual_meaningful(scorer, cand, cand.members(), other.members(), eps_log)
                || !residual_meaningful(scorer, other, other.members(), cand.members(), eps_log)
        });
        if !clash {
            accepted.push(Accepted {
                index: i,
                log_nfa: cand.log_nfa(),
                members: cand.members().to_vec(),
            });
        }
    }
    accepted
}

/// Apply `filter` and return the surviving candidates in acceptance order.
pub fn apply_filter<G: Gestalt + Clone, R: Rescore<G>>(
    candidates: &[G],
    scorer: &R,
    filter: Filter,
    epsilon: f64,
) -> Vec<Accepted> {
    match filter {
        Filter::None => sorted_order(candidates)
            .into_iter()
            .filter(|&i| candidates[i].log_nfa().value() < epsilon.log10())
            .map(|i| Accepted {
                index: i,
                log_nfa: candidates[i].log_nfa(),
                members: candidates[i].members().to_vec(),
            })
            .collect(),
        Filter::Exclusion => exclusion_filter(candidates, scorer, epsilon),
        Filter::Masking => masking_filter(candidates, scorer, epsilon),
    }
}

/// Every accepted gestalt stays meaningful after subtracting the members of
/// any other single accepted gestalt. Returns the first offending pair.
pub fn find_unstable_pair<G: Gestalt, R: Rescore<G>>(
    candidates: &[G],
    accepted: &[Accepted],
    scorer: &R,
    epsilon: f64,
) -> Option<(usize, usize)> {
    let eps_log = epsilon.log10();
    for a in accepted {
        for b in accepted {
            if a.index == b.index {
                continue;
            }
            let (ga, gb) = (&candidates[a.index], &candidates[b.index]);
            if !residual_meaningful(scorer, gb, gb.members(), ga.members(), eps_log) {
                return Some((a.index, b.index));
            }
        }
    }
    None
}

impl Gestalt for DotDetection {
    fn log_nfa(&self) -> LogNfa {
        self.nfa
    }

    fn members(&self) -> &[usize] {
        &self.members
    }

    fn tie_key(&self) -> (usize, usize, f64) {
        (self.candidate.i, self.candidate.j, self.candidate.width)
    }
}

impl Rescore<DotDetection> for DotScorer<'_> {
    fn rescore(&self, gestalt: &DotDetection, members: &[usize]) -> LogNfa {
        DotScorer::rescore(self, &gestalt.candidate, members)
            .unwrap_or(LogNfa::new(f64::INFINITY))
    }
}

impl Gestalt for GaborDetection {
    fn log_nfa(&self) -> LogNfa {
        self.nfa
    }

    fn members(&self) -> &[usize] {
        &self.candidate.inside
    }

    fn tie_key(&self) -> (usize, usize, f64) {
        (self.candidate.i, self.candidate.j, self.candidate.width)
    }
}

impl Rescore<GaborDetection> for GaborScorer<'_> {
    fn rescore(&self, gestalt: &GaborDetection, members: &[usize]) -> LogNfa {
        GaborScorer::rescore(self, &gestalt.candidate, members)
    }
}
