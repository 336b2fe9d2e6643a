//! User association: the ruin-weighted heuristic, its SINR-only baseline and
//! URLLC best-SINR pinning.
//!
//! The heuristic runs in two steps. First every user shortlists the BS with
//! the largest survival-weighted SINR `eta = alpha (1 - psi) gamma`. Then each
//! BS admits its shortlisted users in descending SINR while its residual
//! budget still covers the candidate power of the next user. Users a BS turns
//! away are re-offered to their next-best BS in later rounds; users no BS will
//! take are reported as unassociated.

use std::fmt::Write as _;

use crate::ruin::survival_factor;
use crate::{Error, Matrix, Result};

/// Serving BS of every user; uniqueness of association holds by construction.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AssociationMatrix {
    n_bs: usize,
    serving: Vec<Option<usize>>,
}

impl AssociationMatrix {
    pub fn new(n_bs: usize, n_users: usize) -> Self {
        Self {
            n_bs,
            serving: vec![None; n_users],
        }
    }

    pub fn from_serving(n_bs: usize, serving: Vec<Option<usize>>) -> Self {
        assert!(
            serving.iter().flatten().all(|&j| j < n_bs),
            "serving BS index out of range"
        );
        Self { n_bs, serving }
    }

    pub fn n_bs(&self) -> usize {
        self.n_bs
    }

    pub fn n_users(&self) -> usize {
        self.serving.len()
    }

    /// Associate user `k` with BS `j`, replacing any previous association.
    pub fn assign(&mut self, j: usize, k: usize) {
        assert!(j < self.n_bs, "BS index {j} out of range");
        self.serving[k] = Some(j);
    }

    pub fn unassign(&mut self, k: usize) {
        self.serving[k] = None;
    }

    /// The binary association variable `x[j][k]`.
    pub fn x(&self, j: usize, k: usize) -> bool {
        self.serving[k] == Some(j)
    }

    pub fn serving(&self, k: usize) -> Option<usize> {
        self.serving[k]
    }

    pub fn serving_all(&self) -> &[Option<usize>] {
        &self.serving
    }

    pub fn users_of(&self, j: usize) -> impl Iterator<Item = usize> + '_ {
        self.serving
            .iter()
            .enumerate()
            .filter(move |(_, s)| **s == Some(j))
            .map(|(k, _)| k)
    }

    pub fn count(&self, j: usize) -> usize {
        self.serving.iter().filter(|s| **s == Some(j)).count()
    }

    pub fn unassociated(&self) -> impl Iterator<Item = usize> + '_ {
        self.serving
            .iter()
            .enumerate()
            .filter(|(_, s)| s.is_none())
            .map(|(k, _)| k)
    }

    /// Dense 0/1 matrix, `|J| x |K|`.
    pub fn to_binary(&self) -> Matrix {
        Matrix::from_fn(self.n_bs, self.n_users(), |j, k| {
            if self.x(j, k) {
                1.0
            } else {
                0.0
            }
        })
    }
}

/// Inputs shared by both eMBB association heuristics.
#[derive(Debug, Clone, Copy)]
pub struct AssociationInput<'a> {
    /// SINR of every link under the candidate powers.
    pub gamma: &'a Matrix,
    /// Probability of ruin per BS; zero for terrestrial BSs.
    pub psi: &'a [f64],
    /// Fixed candidate power of every link, used for admission.
    pub candidate_power: &'a Matrix,
    pub budgets_w: &'a [f64],
    pub alpha: f64,
    /// Users to associate; everyone else is left untouched.
    pub users: &'a [usize],
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssociationOutcome {
    pub assoc: AssociationMatrix,
    pub eta: Matrix,
    /// Users no BS could admit.
    pub unassociated: Vec<usize>,
}

impl AssociationOutcome {
    /// CSV with header `user_id,bs_id,eta,gamma,psi`; unassociated users
    /// have empty BS and metric fields.
    pub fn to_csv(&self, users: &[usize], gamma: &Matrix, psi: &[f64]) -> String {
        let mut out = String::from("user_id,bs_id,eta,gamma,psi\n");
        for &k in users {
            match self.assoc.serving(k) {
                Some(j) => {
                    let _ = writeln!(
                        out,
                        "{k},{j},{:?},{:?},{:?}",
                        self.eta[(j, k)],
                        gamma[(j, k)],
                        psi[j]
                    );
                }
                None => {
                    let _ = writeln!(out, "{k},,,,");
                }
            }
        }
        out
    }
}

/// Ruin-weighted association with next-best re-offering of rejected users.
pub fn associate_ruin(input: &AssociationInput<'_>) -> Result<AssociationOutcome> {
    check_input(input)?;
    if !(input.alpha > 0.0) {
        return Err(Error::Domain(format!(
            "alpha {} must be positive",
            input.alpha
        )));
    }
    let (nj, nk) = (input.gamma.rows(), input.gamma.cols());
    let eta = Matrix::from_fn(nj, nk, |j, k| {
        survival_factor(
            input.psi[j].clamp(0.0, 1.0),
            input.gamma[(j, k)],
            input.alpha,
        )
    });
    let assoc = admit(input, &eta);
    let unassociated = input
        .users
        .iter()
        .copied()
        .filter(|&k| assoc.serving(k).is_none())
        .collect();
    Ok(AssociationOutcome {
        assoc,
        eta,
        unassociated,
    })
}

/// Same mechanics with every probability of ruin forced to zero.
pub fn associate_sinr_baseline(input: &AssociationInput<'_>) -> Result<AssociationOutcome> {
    let zeros = vec![0.0; input.psi.len()];
    associate_ruin(&AssociationInput {
        psi: &zeros,
        ..*input
    })
}

/// Pin each URLLC user to its best-SINR BS, ties to the lowest index.
///
/// Returns `(user, bs)` pairs in the order of `users`.
pub fn associate_urllc(gamma: &Matrix, users: &[usize]) -> Vec<(usize, usize)> {
    users
        .iter()
        .map(|&k| {
            let best = (0..gamma.rows())
                .reduce(|best, j| {
                    if gamma[(j, k)] > gamma[(best, k)] {
                        j
                    } else {
                        best
                    }
                })
                .expect("at least one BS");
            (k, best)
        })
        .collect()
}

fn check_input(input: &AssociationInput<'_>) -> Result<()> {
    let (nj, nk) = (input.gamma.rows(), input.gamma.cols());
    if nj == 0 {
        return Err(Error::Domain("association needs at least one BS".into()));
    }
    if input.psi.len() != nj || input.budgets_w.len() != nj {
        return Err(Error::Domain(format!(
            "expected {nj} ruin probabilities and budgets, got {} and {}",
            input.psi.len(),
            input.budgets_w.len()
        )));
    }
    if input.candidate_power.rows() != nj || input.candidate_power.cols() != nk {
        return Err(Error::Domain(
            "candidate power shape differs from SINR shape".into(),
        ));
    }
    if let Some(&k) = input.users.iter().find(|&&k| k >= nk) {
        return Err(Error::Domain(format!("user index {k} out of range")));
    }
    Ok(())
}

fn admit(input: &AssociationInput<'_>, eta: &Matrix) -> AssociationMatrix {
    let nj = eta.rows();
    let mut assoc = AssociationMatrix::new(nj, eta.cols());
    // Preference list per user: BSs with positive eta, best first.
    let prefs: Vec<Vec<usize>> = input
        .users
        .iter()
        .map(|&k| {
            let mut js: Vec<usize> = (0..nj).filter(|&j| eta[(j, k)] > 0.0).collect();
            js.sort_by(|&a, &b| eta[(b, k)].total_cmp(&eta[(a, k)]).then(a.cmp(&b)));
            js
        })
        .collect();
    let mut next = vec![0usize; input.users.len()];
    let mut residual = input.budgets_w.to_vec();
    let mut pending: Vec<usize> = (0..input.users.len()).collect();
    while !pending.is_empty() {
        let mut proposals: Vec<Vec<usize>> = vec![Vec::new(); nj];
        for &i in &pending {
            if let Some(&j) = prefs[i].get(next[i]) {
                proposals[j].push(i);
            }
        }
        let mut rejected = Vec::new();
        for (j, mut offered) in proposals.into_iter().enumerate() {
            offered.sort_by(|&a, &b| {
                let (ka, kb) = (input.users[a], input.users[b]);
                input.gamma[(j, kb)]
                    .total_cmp(&input.gamma[(j, ka)])
                    .then(ka.cmp(&kb))
            });
            let mut open = true;
            for i in offered {
                let k = input.users[i];
                let p = input.candidate_power[(j, k)];
                if open && residual[j] >= p {
                    residual[j] -= p;
                    assoc.assign(j, k);
                } else {
                    open = false;
                    rejected.push(i);
                }
            }
        }
        for &i in &rejected {
            next[i] += 1;
        }
        rejected.retain(|&i| next[i] < prefs[i].len());
        rejected.sort_unstable();
        pending = rejected;
    }
    assoc
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn run(
        gamma: &Matrix,
        psi: &[f64],
        budgets: &[f64],
        p: f64,
        alpha: f64,
        baseline: bool,
    ) -> AssociationOutcome {
        let power = Matrix::filled(gamma.rows(), gamma.cols(), p);
        let users: Vec<usize> = (0..gamma.cols()).collect();
        let input = AssociationInput {
            gamma,
            psi,
            candidate_power: &power,
            budgets_w: budgets,
            alpha,
            users: &users,
        };
        if baseline {
            associate_sinr_baseline(&input).unwrap()
        } else {
            associate_ruin(&input).unwrap()
        }
    }

    fn gamma_rows(rows: &[&[f64]]) -> Matrix {
        Matrix::from_fn(rows.len(), rows[0].len(), |j, k| rows[j][k])
    }

    #[test]
    fn single_bs_with_room_takes_everyone() {
        let out = run(&gamma_rows(&[&[3.0, 1.0]]), &[0.0], &[1.0], 0.5, 1.0, false);
        assert_eq!(out.assoc.serving_all(), &[Some(0), Some(0)]);
        assert!(out.unassociated.is_empty());
    }

    #[test]
    fn riskier_uav_loses_the_user() {
        let out = run(
            &gamma_rows(&[&[4.0], &[4.0]]),
            &[0.9, 0.1],
            &[1.0, 1.0],
            0.1,
            1.0,
            false,
        );
        assert_eq!(out.assoc.serving(0), Some(1));
        assert!((out.eta[(0, 0)] - 0.4).abs() < 1e-12);
        assert!((out.eta[(1, 0)] - 3.6).abs() < 1e-12);
    }

    #[test]
    fn best_sinr_user_is_admitted_first() {
        let out = run(
            &gamma_rows(&[&[10.0, 3.0]]),
            &[0.0],
            &[1.0],
            1.0,
            1.0,
            false,
        );
        assert_eq!(out.assoc.serving_all(), &[Some(0), None]);
        assert_eq!(out.unassociated, vec![1]);
    }

    #[test]
    fn turned_away_user_is_offloaded_to_next_best() {
        let g = gamma_rows(&[&[10.0, 3.0], &[1.0, 2.0]]);
        let out = run(&g, &[0.0, 0.0], &[1.0, 1.0], 1.0, 1.0, false);
        assert_eq!(out.assoc.serving_all(), &[Some(0), Some(1)]);
    }

    #[test]
    fn baseline_picks_best_sinr_uav() {
        let out = run(
            &gamma_rows(&[&[5.0], &[4.0]]),
            &[0.0, 0.0],
            &[9.0, 9.0],
            0.1,
            1.0,
            true,
        );
        assert_eq!(out.assoc.serving(0), Some(0));
    }

    #[test]
    fn certain_ruin_attracts_nobody() {
        let out = run(
            &gamma_rows(&[&[100.0, 100.0], &[1.0, 1.0]]),
            &[1.0, 0.0],
            &[9.0, 9.0],
            0.1,
            1.0,
            false,
        );
        assert_eq!(out.assoc.count(0), 0);
        assert_eq!(out.assoc.count(1), 2);
    }

    #[test]
    fn urllc_pinning() {
        let g = gamma_rows(&[&[2.0, 5.0], &[7.0, 5.0], &[3.0, 1.0]]);
        assert_eq!(associate_urllc(&g, &[0]), vec![(0, 1)]);
        assert_eq!(associate_urllc(&g, &[]), vec![]);
        assert_eq!(associate_urllc(&g, &[1]), vec![(1, 0)]);
    }

    #[test]
    fn empty_bs_list_is_an_error() {
        let g = Matrix::zeros(0, 2);
        let input = AssociationInput {
            gamma: &g,
            psi: &[],
            candidate_power: &g,
            budgets_w: &[],
            alpha: 1.0,
            users: &[0, 1],
        };
        assert!(matches!(associate_ruin(&input), Err(Error::Domain(_))));
    }

    #[test]
    fn csv_export_lists_every_user() {
        let g = gamma_rows(&[&[10.0, 3.0]]);
        let out = run(&g, &[0.25], &[1.0], 1.0, 1.0, false);
        let csv = out.to_csv(&[0, 1], &g, &[0.25]);
        assert_eq!(
            csv,
            "user_id,bs_id,eta,gamma,psi\n0,0,7.5,10.0,0.25\n1,,,,\n"
        );
    }

    fn instance() -> impl Strategy<Value = (usize, usize, Vec<f64>, Vec<f64>, Vec<f64>)> {
        (1usize..5, 1usize..9).prop_flat_map(|(nj, nk)| {
            (
                Just(nj),
                Just(nk),
                prop::collection::vec(0.01f64..100.0, nj * nk),
                prop::collection::vec(0.0f64..1.0, nj),
                prop::collection::vec(0.0f64..3.0, nj),
            )
        })
    }

    proptest! {
        #[test]
        fn admission_respects_budgets_and_uniqueness((nj, nk, g, psi, budgets) in instance()) {
            let gamma = Matrix::from_fn(nj, nk, |j, k| g[j * nk + k]);
            let out = run(&gamma, &psi, &budgets, 0.5, 1.0, false);
            for (j, &b) in budgets.iter().enumerate() {
                prop_assert!(out.assoc.count(j) as f64 * 0.5 <= b + 1e-12);
            }
            let served = (0..nk).filter(|&k| out.assoc.serving(k).is_some()).count();
            prop_assert_eq!(served + out.unassociated.len(), nk);
            let x = out.assoc.to_binary();
            for k in 0..nk {
                let col: f64 = (0..nj).map(|j| x[(j, k)]).sum();
                prop_assert!(col <= 1.0);
            }
        }

        #[test]
        fn alpha_scaling_is_invisible((nj, nk, g, psi, budgets) in instance(), scale in 0.01f64..100.0) {
            let gamma = Matrix::from_fn(nj, nk, |j, k| g[j * nk + k]);
            let a = run(&gamma, &psi, &budgets, 0.5, 1.0, false);
            let b = run(&gamma, &psi, &budgets, 0.5, scale, false);
            prop_assert_eq!(a.assoc, b.assoc);
        }

        #[test]
        fn baseline_ignores_ruin((nj, nk, g, psi, budgets) in instance(), bump in 0.0f64..1.0) {
            let gamma = Matrix::from_fn(nj, nk, |j, k| g[j * nk + k]);
            let raised: Vec<f64> = psi.iter().map(|p| (p + bump).min(1.0)).collect();
            let a = run(&gamma, &psi, &budgets, 0.5, 1.0, true);
            let b = run(&gamma, &raised, &budgets, 0.5, 1.0, true);
            prop_assert_eq!(a.assoc, b.assoc);
        }

        #[test]
        fn riskier_uav_never_gains_users(
            (nj, nk, g, psi, _b) in instance(),
            target in 0usize..4,
            bump in 0.0f64..1.0,
        ) {
            let gamma = Matrix::from_fn(nj, nk, |j, k| g[j * nk + k]);
            let target = target % nj;
            let budgets = vec![1e9; nj];
            let mut raised = psi.clone();
            raised[target] = (raised[target] + bump).min(1.0);
            let before = run(&gamma, &psi, &budgets, 0.5, 1.0, false);
            let after = run(&gamma, &raised, &budgets, 0.5, 1.0, false);
            prop_assert!(after.assoc.count(target) <= before.assoc.count(target));
        }
    }
}
