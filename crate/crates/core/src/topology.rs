//! User-centric cluster structure.
//!
//! All selections rank by the realized linear pathloss (shadowing included)
//! and break ties towards the lower index. Index lists are kept in ascending
//! order; that order fixes the segment layout of every stacked vector.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClusterPlan {
    /// `M_k`: serving APs of each user, ascending.
    pub serving_sets: Vec<Vec<usize>>,
    /// `C_k`: users whose CSI is shared inside `M_k` (contains `k`), ascending.
    pub csi_sets: Vec<Vec<usize>>,
    /// `D_l`: users served by each AP, ascending. May be empty.
    pub served_sets: Vec<Vec<usize>>,
    pub master_ap: Vec<usize>,
}

impl ClusterPlan {
    pub fn num_users(&self) -> usize {
        self.serving_sets.len()
    }

    pub fn num_aps(&self) -> usize {
        self.served_sets.len()
    }

    /// APs with at least one served user, ascending.
    pub fn active_aps(&self) -> Vec<usize> {
        (0..self.num_aps())
            .filter(|&l| !self.served_sets[l].is_empty())
            .collect()
    }

    /// Users in `C_k` other than `k`.
    pub fn nulled_users(&self, k: usize) -> impl Iterator<Item = usize> + '_ {
        self.csi_sets[k].iter().copied().filter(move |&i| i != k)
    }

    /// Average number of users per active AP.
    pub fn mean_served_per_active_ap(&self) -> f64 {
        let active = self.active_aps();
        if active.is_empty() {
            return 0.0;
        }
        let total: usize = active.iter().map(|&l| self.served_sets[l].len()).sum();
        total as f64 / active.len() as f64
    }

    /// Checks the structural invariants and the null-space feasibility bound.
    pub fn validate(&self, antennas: usize) -> Result<()> {
        let cluster = self.serving_sets.first().map_or(0, |m| m.len());
        for k in 0..self.num_users() {
            let m = &self.serving_sets[k];
            let c = &self.csi_sets[k];
            if m.len() != cluster {
                return Err(Error::Config("serving sets differ in size".into()));
            }
            if !c.contains(&k) {
                return Err(Error::Config(format!("user {k} missing from its CSI set")));
            }
            if !m.contains(&self.master_ap[k]) {
                return Err(Error::Config(format!(
                    "master AP of user {k} not in its cluster"
                )));
            }
            check_feasible(antennas, m.len(), c.len())?;
        }
        for (l, served) in self.served_sets.iter().enumerate() {
            for &k in served {
                if !self.serving_sets[k].contains(&l) {
                    return Err(Error::Config(format!("AP {l} serves user {k} outside M_k")));
                }
            }
        }
        Ok(())
    }
}

/// Null-space feasibility: `N |M| > |C| - 1`.
pub fn check_feasible(antennas: usize, cluster_size: usize, csi_size: usize) -> Result<()> {
    if csi_size == 0 || antennas * cluster_size < csi_size {
        return Err(Error::Config(format!(
            "infeasible sizes: N={antennas}, |M|={cluster_size}, |C|={csi_size} \
             (need N*|M| > |C|-1 and |C| >= 1)"
        )));
    }
    Ok(())
}

/// Indices of the `count` largest values, ties to the lower index, returned ascending.
fn top_indices(values: impl Iterator<Item = (usize, f64)>, count: usize) -> Vec<usize> {
    let mut ranked: Vec<(usize, f64)> = values.collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut picked: Vec<usize> = ranked.into_iter().take(count).map(|(i, _)| i).collect();
    picked.sort_unstable();
    picked
}

/// `M_k`: the `cluster_size` APs with the largest pathloss gain for each user.
pub fn select_serving_clusters(
    beta: &DMatrix<f64>,
    cluster_size: usize,
) -> Result<Vec<Vec<usize>>> {
    let (k, l) = beta.shape();
    if cluster_size == 0 || cluster_size > l {
        return Err(Error::Config(format!(
            "cluster size {cluster_size} must lie in 1..={l}"
        )));
    }
    Ok((0..k)
        .map(|user| top_indices((0..l).map(|ap| (ap, beta[(user, ap)])), cluster_size))
        .collect())
}

/// `C_k`: user `k` plus the `csi_size - 1` other users with the largest mean
/// pathloss gain towards the APs in `M_k`.
pub fn build_csi_sets(
    beta: &DMatrix<f64>,
    serving: &[Vec<usize>],
    csi_size: usize,
    antennas: usize,
) -> Result<Vec<Vec<usize>>> {
    let k_total = beta.nrows();
    if csi_size == 0 || csi_size > k_total {
        return Err(Error::Config(format!(
            "CSI set size {csi_size} must lie in 1..={k_total}"
        )));
    }
    serving
        .iter()
        .enumerate()
        .map(|(k, m)| {
            check_feasible(antennas, m.len(), csi_size)?;
            let mean = |i: usize| m.iter().map(|&l| beta[(i, l)]).sum::<f64>() / m.len() as f64;
            let others = (0..k_total).filter(|&i| i != k).map(|i| (i, mean(i)));
            let mut set = top_indices(others, csi_size - 1);
            set.push(k);
            set.sort_unstable();
            Ok(set)
        })
        .collect()
}

/// `D_l = { k : l in M_k }`.
pub fn invert_to_served_sets(serving: &[Vec<usize>], num_aps: usize) -> Vec<Vec<usize>> {
    let mut served = vec![Vec::new(); num_aps];
    for (k, m) in serving.iter().enumerate() {
        for &l in m {
            served[l].push(k);
        }
    }
    served
}

/// The AP of `serving` with the largest gain in `beta_row`, ties to the lower index.
pub fn pick_master_ap(beta_row: &[f64], serving: &[usize]) -> usize {
    let mut best = serving[0];
    for &l in &serving[1..] {
        if beta_row[l] > beta_row[best] || (beta_row[l] == beta_row[best] && l < best) {
            best = l;
        }
    }
    best
}

pub fn build_plan(
    beta: &DMatrix<f64>,
    antennas: usize,
    cluster_size: usize,
    csi_size: usize,
) -> Result<ClusterPlan> {
    let serving_sets = select_serving_clusters(beta, cluster_size)?;
    let csi_sets = build_csi_sets(beta, &serving_sets, csi_size, antennas)?;
    let served_sets = invert_to_served_sets(&serving_sets, beta.ncols());
    let master_ap = serving_sets
        .iter()
        .enumerate()
        .map(|(k, m)| {
            let row: Vec<f64> = beta.row(k).iter().copied().collect();
            pick_master_ap(&row, m)
        })
        .collect();
    Ok(ClusterPlan {
        serving_sets,
        csi_sets,
        served_sets,
        master_ap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn top_two_of_three() {
        let beta = DMatrix::from_row_slice(1, 3, &[0.1, 0.5, 0.3]);
        assert_eq!(select_serving_clusters(&beta, 2).unwrap(), vec![vec![1, 2]]);
        assert_eq!(
            select_serving_clusters(&beta, 3).unwrap(),
            vec![vec![0, 1, 2]]
        );
    }

    #[test]
    fn equal_gains_break_ties_by_index() {
        let beta = DMatrix::from_element(2, 4, 0.2);
        assert_eq!(
            select_serving_clusters(&beta, 2).unwrap(),
            vec![vec![0, 1], vec![0, 1]]
        );
        assert_eq!(pick_master_ap(&[0.3, 0.3, 0.3], &[1, 2]), 1);
    }

    #[test]
    fn oversized_cluster_rejected() {
        let beta = DMatrix::from_element(2, 3, 1.0);
        assert!(select_serving_clusters(&beta, 4).is_err());
    }

    #[test]
    fn csi_sets_examples() {
        // User 0 is served by AP 0; others have mean gains 0.2 and 0.7 there.
        let beta = DMatrix::from_row_slice(3, 1, &[1.0, 0.2, 0.7]);
        let serving = vec![vec![0]; 3];
        let c = build_csi_sets(&beta, &serving, 2, 4).unwrap();
        assert_eq!(c[0], vec![0, 2]);
        let c1 = build_csi_sets(&beta, &serving, 1, 4).unwrap();
        assert_eq!(c1, vec![vec![0], vec![1], vec![2]]);
        let c3 = build_csi_sets(&beta, &serving, 3, 4).unwrap();
        assert!(c3.iter().all(|s| s == &vec![0, 1, 2]));
    }

    #[test]
    fn csi_set_feasibility_enforced() {
        let beta = DMatrix::from_element(6, 2, 1.0);
        let serving = vec![vec![0]; 6];
        // N=2, |M|=1: |C| - 1 must stay below 2.
        assert!(build_csi_sets(&beta, &serving, 2, 2).is_ok());
        assert!(matches!(
            build_csi_sets(&beta, &serving, 3, 2),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn inversion_example() {
        let served = invert_to_served_sets(&[vec![0, 1], vec![1]], 4);
        assert_eq!(served, vec![vec![0], vec![0, 1], vec![], vec![]]);
        let full = invert_to_served_sets(&[vec![0, 1], vec![0, 1]], 2);
        assert_eq!(full, vec![vec![0, 1], vec![0, 1]]);
    }

    #[test]
    fn master_ap_examples() {
        assert_eq!(pick_master_ap(&[0.0, 0.5, 0.9], &[1, 2]), 2);
        assert_eq!(pick_master_ap(&[0.0, 0.5, 0.9], &[1]), 1);
    }

    proptest! {
        #[test]
        fn plan_invariants(
            gains in proptest::collection::vec(1e-12f64..1.0, 6 * 9),
            m in 1usize..=9,
            c in 1usize..=6,
        ) {
            let beta = DMatrix::from_row_slice(6, 9, &gains);
            let antennas = 2;
            prop_assume!(antennas * m > c - 1);
            let plan = build_plan(&beta, antennas, m, c).unwrap();
            plan.validate(antennas).unwrap();
            let mut total = 0;
            for k in 0..6 {
                prop_assert_eq!(plan.serving_sets[k].len(), m);
                prop_assert_eq!(plan.csi_sets[k].len(), c);
                prop_assert!(plan.csi_sets[k].contains(&k));
                prop_assert!(plan.serving_sets[k].contains(&plan.master_ap[k]));
                for l in 0..9 {
                    prop_assert_eq!(
                        plan.served_sets[l].contains(&k),
                        plan.serving_sets[k].contains(&l)
                    );
                }
            }
            for d in &plan.served_sets {
                total += d.len();
            }
            prop_assert_eq!(total, 6 * m);
        }
    }
}
