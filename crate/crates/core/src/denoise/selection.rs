//! Consistent view subset selection over a pairwise affinity matrix.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{ConsistencyMatrices, DenoiseConfig, DenoiseError};

/// Set objective maximized by [`select_views`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SelectionObjective {
    /// `Σ_{i≠j∈S} (W_ij − τ)`: every pair must earn its place against the
    /// inclusion threshold `τ`.
    #[default]
    ThresholdedSum,
    /// Mean pairwise affinity `Σ_{i≠j∈S} W_ij / (|S|(|S|−1))`.
    MeanAffinity,
}

/// Binary view indicator `s`; the selection matrix is `M = s sᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewSelection {
    pub s: Vec<bool>,
    pub objective: f64,
}

impl ViewSelection {
    pub fn views(&self) -> Vec<usize> {
        self.s.iter().enumerate().filter(|(_, b)| **b).map(|(i, _)| i).collect()
    }

    pub fn len(&self) -> usize {
        self.s.iter().filter(|b| **b).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() < 2
    }

    /// `M = s sᵀ` as a 0/1 matrix.
    pub fn matrix(&self) -> DMatrix<f64> {
        let v = DMatrix::from_iterator(self.s.len(), 1, self.s.iter().map(|&b| if b { 1.0 } else { 0.0 }));
        &v * v.transpose()
    }
}

/// `W = c_g exp(−G/σ_g) + c_p exp(−P/σ_p)`, or `exp(−G/σ_g)` without a
/// physical term. Entries touching invalid views and the diagonal are zero.
pub fn affinity(mats: &ConsistencyMatrices, cfg: &DenoiseConfig) -> DMatrix<f64> {
    let v = mats.views();
    DMatrix::from_fn(v, v, |i, j| {
        if i == j || !mats.valid[i] || !mats.valid[j] {
            return 0.0;
        }
        let ag = (-mats.geometric[(i, j)] / cfg.affinity_sigma_g).exp();
        match &mats.physical {
            Some(p) => cfg.c_g * ag + cfg.c_p * (-p[(i, j)] / cfg.affinity_sigma_p).exp(),
            None => ag,
        }
    })
}

/// Objective of the indicator `s` under `w`.
pub fn selection_objective(w: &DMatrix<f64>, s: &[bool], objective: SelectionObjective, tau: f64) -> f64 {
    let idx: Vec<usize> = (0..s.len()).filter(|&i| s[i]).collect();
    let k = idx.len();
    if k < 2 {
        return f64::NEG_INFINITY;
    }
    let mut total = 0.0;
    for (a, &i) in idx.iter().enumerate() {
        for &j in &idx[a + 1..] {
            total += match objective {
                SelectionObjective::ThresholdedSum => 2.0 * (w[(i, j)] - tau),
                SelectionObjective::MeanAffinity => 2.0 * w[(i, j)],
            };
        }
    }
    match objective {
        SelectionObjective::ThresholdedSum => total,
        SelectionObjective::MeanAffinity => total / (k * (k - 1)) as f64,
    }
}

const TIE_EPS: f64 = 1e-12;

/// `a` beats `b`: higher objective, then more views, then the
/// lexicographically smaller index list.
fn better(a: (f64, &[bool]), b: (f64, &[bool])) -> bool {
    if a.0 > b.0 + TIE_EPS {
        return true;
    }
    if a.0 < b.0 - TIE_EPS {
        return false;
    }
    let (na, nb) = (a.1.iter().filter(|x| **x).count(), b.1.iter().filter(|x| **x).count());
    if na != nb {
        return na > nb;
    }
    let ia = a.1.iter().enumerate().filter(|(_, x)| **x).map(|(i, _)| i);
    let ib = b.1.iter().enumerate().filter(|(_, x)| **x).map(|(i, _)| i);
    ia.lt(ib)
}

/// Exhaustive search over all subsets of valid views with at least two members.
pub fn select_exhaustive(w: &DMatrix<f64>, valid: &[bool], objective: SelectionObjective, tau: f64) -> ViewSelection {
    let views: Vec<usize> = (0..valid.len()).filter(|&i| valid[i]).collect();
    let n = views.len();
    let mut best = ViewSelection { s: vec![false; valid.len()], objective: f64::NEG_INFINITY };
    // Pair sums built incrementally from the subset without its lowest member.
    let mut sums = vec![0.0f64; 1 << n];
    let mut s = vec![false; valid.len()];
    for mask in 1usize..(1 << n) {
        let low = mask.trailing_zeros() as usize;
        let rest = mask & (mask - 1);
        let mut add = 0.0;
        let mut r = rest;
        while r != 0 {
            let b = r.trailing_zeros() as usize;
            add += 2.0
                * match objective {
                    SelectionObjective::ThresholdedSum => w[(views[low], views[b])] - tau,
                    SelectionObjective::MeanAffinity => w[(views[low], views[b])],
                };
            r &= r - 1;
        }
        sums[mask] = sums[rest] + add;
        let k = mask.count_ones() as usize;
        if k < 2 {
            continue;
        }
        let value = match objective {
            SelectionObjective::ThresholdedSum => sums[mask],
            SelectionObjective::MeanAffinity => sums[mask] / (k * (k - 1)) as f64,
        };
        for (bit, &v) in views.iter().enumerate() {
            s[v] = mask & (1 << bit) != 0;
        }
        if better((value, &s), (best.objective, &best.s)) {
            best.s.copy_from_slice(&s);
            best.objective = value;
        }
    }
    best
}

/// Number of strongest pairs the local search is started from.
const GREEDY_STARTS: usize = 16;

/// Local search: from each of the strongest pairs, apply the best single
/// addition, swap or removal until no move improves the objective; the best
/// local optimum wins.
pub fn select_greedy(w: &DMatrix<f64>, valid: &[bool], objective: SelectionObjective, tau: f64) -> ViewSelection {
    let views: Vec<usize> = (0..valid.len()).filter(|&i| valid[i]).collect();
    let mut pairs: Vec<(usize, usize)> = views.iter().enumerate().flat_map(|(a, &i)| views[a + 1..].iter().map(move |&j| (i, j))).collect();
    pairs.sort_by(|p, q| w[(q.0, q.1)].total_cmp(&w[(p.0, p.1)]).then(p.cmp(q)));
    let mut best = ViewSelection { s: vec![false; valid.len()], objective: f64::NEG_INFINITY };
    for &(i, j) in pairs.iter().take(GREEDY_STARTS) {
        let local = local_search(w, &views, (i, j), objective, tau);
        if better((local.objective, &local.s), (best.objective, &best.s)) {
            best = local;
        }
    }
    best
}

fn local_search(w: &DMatrix<f64>, views: &[usize], start: (usize, usize), objective: SelectionObjective, tau: f64) -> ViewSelection {
    let mut s = vec![false; w.nrows()];
    s[start.0] = true;
    s[start.1] = true;
    let mut value = selection_objective(w, &s, objective, tau);
    loop {
        let mut candidate: Option<(f64, Vec<bool>)> = None;
        let mut consider = |t: Vec<bool>| {
            let f = selection_objective(w, &t, objective, tau);
            if candidate.as_ref().is_none_or(|(cf, cs)| better((f, &t), (*cf, cs))) {
                candidate = Some((f, t));
            }
        };
        let inside: Vec<usize> = views.iter().copied().filter(|&k| s[k]).collect();
        let outside: Vec<usize> = views.iter().copied().filter(|&k| !s[k]).collect();
        for &o in &outside {
            let mut t = s.clone();
            t[o] = true;
            consider(t);
            for &n in &inside {
                let mut t = s.clone();
                t[o] = true;
                t[n] = false;
                consider(t);
            }
        }
        if inside.len() > 2 {
            for &n in &inside {
                let mut t = s.clone();
                t[n] = false;
                consider(t);
            }
        }
        match candidate {
            Some((f, t)) if f > value + TIE_EPS => {
                s = t;
                value = f;
            }
            _ => break,
        }
    }
    ViewSelection { s, objective: value }
}

/// Selects the most consistent view subset for one joint.
pub fn select_views(mats: &ConsistencyMatrices, cfg: &DenoiseConfig) -> Result<ViewSelection, DenoiseError> {
    let w = affinity(mats, cfg);
    select_from_affinity(&w, &mats.valid, cfg)
}

pub fn select_from_affinity(w: &DMatrix<f64>, valid: &[bool], cfg: &DenoiseConfig) -> Result<ViewSelection, DenoiseError> {
    let count = valid.iter().filter(|b| **b).count();
    if count < 2 {
        return Err(DenoiseError::TooFewViews(count));
    }
    let strongest = (0..valid.len())
        .flat_map(|i| (0..valid.len()).map(move |j| (i, j)))
        .filter(|&(i, j)| i != j && valid[i] && valid[j])
        .map(|(i, j)| w[(i, j)])
        .fold(f64::NEG_INFINITY, f64::max);
    if strongest < cfg.affinity_floor {
        return Err(DenoiseError::EmptySelection);
    }
    let tau = cfg.inclusion_threshold;
    Ok(if count <= cfg.exact_limit { select_exhaustive(w, valid, cfg.objective, tau) } else { select_greedy(w, valid, cfg.objective, tau) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_force(w: &DMatrix<f64>, objective: SelectionObjective, tau: f64) -> (f64, Vec<bool>) {
        let v = w.nrows();
        let mut best = (f64::NEG_INFINITY, vec![false; v]);
        for mask in 0u32..(1 << v) {
            let s: Vec<bool> = (0..v).map(|i| mask & (1 << i) != 0).collect();
            let f = selection_objective(w, &s, objective, tau);
            if f > best.0 + 1e-12
                || ((f - best.0).abs() <= 1e-12 && s.iter().filter(|b| **b).count() > best.1.iter().filter(|b| **b).count())
            {
                best = (f, s);
            }
        }
        best
    }

    fn random_affinity(rng: &mut ChaCha8Rng, v: usize) -> DMatrix<f64> {
        let mut w = DMatrix::zeros(v, v);
        for i in 0..v {
            for j in i + 1..v {
                let x = rng.random_range(0.0..1.0);
                w[(i, j)] = x;
                w[(j, i)] = x;
            }
        }
        w
    }

    fn costs(g: DMatrix<f64>, p: Option<DMatrix<f64>>) -> ConsistencyMatrices {
        let v = g.nrows();
        ConsistencyMatrices { physical: p, geometric: g, valid: vec![true; v] }
    }

    #[test]
    fn outlier_view_is_dropped() {
        let mut g = DMatrix::from_element(3, 3, 500.0);
        g.fill_diagonal(0.0);
        g[(0, 1)] = 1.0;
        g[(1, 0)] = 1.0;
        let mut p = DMatrix::from_element(3, 3, 500.0);
        p.fill_diagonal(0.0);
        p[(0, 1)] = 2.0;
        p[(1, 0)] = 2.0;
        let cfg = DenoiseConfig::default();
        let mats = costs(g, Some(p));
        let sel = select_views(&mats, &cfg).unwrap();
        assert_eq!(sel.s, vec![true, true, false]);
        for objective in [SelectionObjective::ThresholdedSum, SelectionObjective::MeanAffinity] {
            let w = affinity(&mats, &cfg);
            assert_eq!(brute_force(&w, objective, cfg.inclusion_threshold).1, vec![true, true, false]);
        }
    }

    #[test]
    fn identical_affinities_select_everything() {
        for objective in [SelectionObjective::ThresholdedSum, SelectionObjective::MeanAffinity] {
            let cfg = DenoiseConfig { objective, ..DenoiseConfig::default() };
            let mut g = DMatrix::from_element(6, 6, 3.0);
            g.fill_diagonal(0.0);
            let sel = select_views(&costs(g, None), &cfg).unwrap();
            assert_eq!(sel.s, vec![true; 6]);
            assert_eq!(sel.matrix(), DMatrix::from_element(6, 6, 1.0));
        }
    }

    #[test]
    fn no_pair_above_floor_is_empty() {
        let mut g = DMatrix::from_element(4, 4, 1e4);
        g.fill_diagonal(0.0);
        assert_eq!(select_views(&costs(g, None), &DenoiseConfig::default()), Err(DenoiseError::EmptySelection));
    }

    #[test]
    fn enumeration_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..60 {
            let v = 2 + trial % 8;
            let w = random_affinity(&mut rng, v);
            for objective in [SelectionObjective::ThresholdedSum, SelectionObjective::MeanAffinity] {
                let sel = select_exhaustive(&w, &vec![true; v], objective, 0.5);
                let (f, s) = brute_force(&w, objective, 0.5);
                assert!((sel.objective - f).abs() < 1e-9);
                assert_eq!(sel.s, s);
                assert!((selection_objective(&w, &sel.s, objective, 0.5) - sel.objective).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn masked_views_are_never_selected() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let w = random_affinity(&mut rng, 7).map(|x| x * 0.2 + 0.8);
        let valid = vec![true, false, true, true, false, true, true];
        let sel = select_exhaustive(&w, &valid, SelectionObjective::ThresholdedSum, 0.5);
        assert!(sel.s.iter().zip(&valid).all(|(s, v)| !*s || *v));
        assert_eq!(sel.len(), 5);
    }

    #[test]
    fn greedy_matches_exhaustive_on_most_twelve_view_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut agree = 0;
        for _ in 0..100 {
            let w = random_affinity(&mut rng, 12);
            let a = select_exhaustive(&w, &[true; 12], SelectionObjective::ThresholdedSum, 0.5);
            let b = select_greedy(&w, &[true; 12], SelectionObjective::ThresholdedSum, 0.5);
            assert!(b.objective <= a.objective + 1e-9);
            if (a.objective - b.objective).abs() < 1e-9 {
                agree += 1;
            }
        }
        assert!(agree >= 95, "greedy agreed on {agree}/100");
    }

    proptest! {
        #[test]
        fn selection_is_permutation_equivariant(seed in 0u64..1000, v in 3usize..9) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let w = random_affinity(&mut rng, v);
            let mut perm: Vec<usize> = (0..v).collect();
            perm.shuffle(&mut rng);
            let wp = DMatrix::from_fn(v, v, |i, j| w[(perm[i], perm[j])]);
            let a = select_exhaustive(&w, &vec![true; v], SelectionObjective::ThresholdedSum, 0.5);
            let b = select_exhaustive(&wp, &vec![true; v], SelectionObjective::ThresholdedSum, 0.5);
            prop_assert!((a.objective - b.objective).abs() < 1e-9);
            let mapped: Vec<bool> = (0..v).map(|i| a.s[perm[i]]).collect();
            prop_assert_eq!(mapped, b.s);
        }

        #[test]
        fn selection_matrix_is_rank_one_indicator(seed in 0u64..1000, v in 2usize..9) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let w = random_affinity(&mut rng, v);
            let sel = select_exhaustive(&w, &vec![true; v], SelectionObjective::ThresholdedSum, 0.3);
            let m = sel.matrix();
            prop_assert_eq!(&m, &m.transpose());
            prop_assert!(m.iter().all(|x| *x == 0.0 || *x == 1.0));
            prop_assert!(m.rank(1e-9) <= 1);
            prop_assert!(sel.len() >= 2);
        }
    }
}
