//! Partial zero-forcing building blocks and the pseudo-inverse baseline.
//!
//! Stacked vectors of a user are laid out in `N`-long segments, one per AP of
//! `M_k` in ascending AP order.

use nalgebra::{DMatrix, DMatrixView};

use crate::error::{Error, Result};
use crate::linalg::{norm_sqr, stack, CMat, CVec, C64};
use crate::netmodel::ChannelRealization;
use crate::topology::{check_feasible, ClusterPlan};

/// Singular values below this fraction of the largest one count as zero.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Shared-CSI channel of cluster `M_k`.
#[derive(Clone, Debug)]
pub struct AggregatedChannel {
    /// `(N |M_k|) x (|C_k| - 1)`: column `n` stacks `h_{i_n, j}` over `j in M_k`.
    pub interference: CMat,
    /// Own channel `h_k` stacked over `M_k`.
    pub own: CVec,
}

fn stacked_channel(channels: &ChannelRealization, user: usize, serving: &[usize]) -> CVec {
    let blocks: Vec<&CVec> = serving.iter().map(|&l| channels.h(user, l)).collect();
    stack(&blocks)
}

pub fn aggregate_channel(
    channels: &ChannelRealization,
    csi_set: &[usize],
    serving: &[usize],
    k: usize,
) -> Result<AggregatedChannel> {
    let n = channels.antennas;
    check_feasible(n, serving.len(), csi_set.len())?;
    if !csi_set.contains(&k) {
        return Err(Error::Dimension(format!(
            "user {k} missing from its CSI set"
        )));
    }
    let others: Vec<usize> = csi_set.iter().copied().filter(|&i| i != k).collect();
    let rows = n * serving.len();
    let mut interference = CMat::zeros(rows, others.len());
    for (col, &i) in others.iter().enumerate() {
        interference.set_column(col, &stacked_channel(channels, i, serving));
    }
    Ok(AggregatedChannel {
        interference,
        own: stacked_channel(channels, k, serving),
    })
}

/// Orthonormal basis of the null space of `H^H`, split into per-AP row blocks.
#[derive(Clone, Debug)]
pub struct NullSpaceBasis {
    pub basis: CMat,
    pub antennas: usize,
}

impl NullSpaceBasis {
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn num_segments(&self) -> usize {
        self.basis.nrows() / self.antennas
    }

    /// `N_{k,j}` for the `j`-th AP of the cluster.
    pub fn block(&self, j: usize) -> DMatrixView<'_, C64> {
        self.basis.rows(j * self.antennas, self.antennas)
    }
}

/// Null space of `h^H` from the SVD of `h^H`, zero-padded to a square matrix so
/// the full set of right singular vectors is available.
pub fn null_space(h: &CMat, antennas: usize) -> NullSpaceBasis {
    let rows = h.nrows();
    let cols = h.ncols();
    if cols == 0 {
        return NullSpaceBasis {
            basis: CMat::identity(rows, rows),
            antennas,
        };
    }
    let mut padded = CMat::zeros(rows.max(cols), rows);
    padded.rows_mut(0, cols).copy_from(&h.adjoint());
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] <= RANK_TOLERANCE * sigma_max)
        .collect();
    let mut basis = CMat::zeros(rows, keep.len());
    for (col, &i) in keep.iter().enumerate() {
        basis.set_column(col, &v_t.row(i).adjoint());
    }
    NullSpaceBasis { basis, antennas }
}

/// Per-user precoder split into unit-norm per-AP directions and powers.
#[derive(Clone, Debug)]
pub struct UserPrecoder {
    pub aps: Vec<usize>,
    pub directions: Vec<CVec>,
    pub powers: Vec<f64>,
    /// Null-space coefficients, when the precoder came from one.
    pub coeff: Option<CVec>,
}

impl UserPrecoder {
    /// Splits a stacked vector into per-AP segments. A zero segment gets zero
    /// power and the first canonical unit vector as a placeholder direction.
    pub fn from_stacked(stacked: &CVec, aps: &[usize], antennas: usize) -> Self {
        let mut directions = Vec::with_capacity(aps.len());
        let mut powers = Vec::with_capacity(aps.len());
        for j in 0..aps.len() {
            let seg: CVec = stacked.rows(j * antennas, antennas).into_owned();
            let p = norm_sqr(&seg);
            if p > 0.0 {
                directions.push(seg.unscale(p.sqrt()));
            } else {
                let mut e = CVec::zeros(antennas);
                e[0] = C64::new(1.0, 0.0);
                directions.push(e);
            }
            powers.push(p);
        }
        Self {
            aps: aps.to_vec(),
            directions,
            powers,
            coeff: None,
        }
    }

    pub fn zero(aps: &[usize], antennas: usize) -> Self {
        Self::from_stacked(&CVec::zeros(aps.len() * antennas), aps, antennas)
    }

    /// Concatenation of `sqrt(rho_{k,l}) w_{k,l}`.
    pub fn stacked(&self) -> CVec {
        let segs: Vec<CVec> = self
            .directions
            .iter()
            .zip(&self.powers)
            .map(|(w, &p)| w.scale(p.sqrt()))
            .collect();
        stack(&segs.iter().collect::<Vec<_>>())
    }

    /// `sqrt(rho_{k,l}) w_{k,l}` for AP `l`, if `l` serves this user.
    pub fn segment(&self, ap: usize) -> Option<CVec> {
        let j = self.aps.iter().position(|&a| a == ap)?;
        Some(self.directions[j].scale(self.powers[j].sqrt()))
    }

    pub fn total_power(&self) -> f64 {
        self.powers.iter().sum()
    }
}

/// `w_k = N_k c_k`, split per AP.
pub fn assemble_precoder(basis: &NullSpaceBasis, coeff: &CVec, serving: &[usize]) -> UserPrecoder {
    let stacked = &basis.basis * coeff;
    let mut p = UserPrecoder::from_stacked(&stacked, serving, basis.antennas);
    p.coeff = Some(coeff.clone());
    p
}

#[derive(Clone, Debug)]
pub struct PrecodingSolution {
    pub users: Vec<UserPrecoder>,
}

impl PrecodingSolution {
    /// Total power used by each AP.
    pub fn ap_power(&self, num_aps: usize) -> Vec<f64> {
        let mut power = vec![0.0; num_aps];
        for u in &self.users {
            for (&l, &p) in u.aps.iter().zip(&u.powers) {
                power[l] += p;
            }
        }
        power
    }

    /// Largest relative excess of any AP over `rho_max`, or 0 when feasible.
    pub fn max_power_violation(&self, num_aps: usize, rho_max: f64) -> f64 {
        self.ap_power(num_aps)
            .into_iter()
            .map(|p| (p - rho_max) / rho_max)
            .fold(0.0, f64::max)
    }
}

/// Pseudo-inverse direction of user `k`.
#[derive(Clone, Debug)]
pub struct PinvDirection {
    /// Column of `pinv(H^H)` for user `k` before per-AP normalization.
    pub stacked: CVec,
    /// Unit-norm per-AP directions.
    pub directions: Vec<CVec>,
    pub fell_back: bool,
}

/// ZF direction from the pseudo-inverse of the channels of all users in `C_k`
/// (own channel included), normalized per AP segment.
pub fn pinv_precoder(
    channels: &ChannelRealization,
    csi_set: &[usize],
    serving: &[usize],
    k: usize,
) -> Result<PinvDirection> {
    let n = channels.antennas;
    check_feasible(n, serving.len(), csi_set.len())?;
    let pos = csi_set
        .iter()
        .position(|&i| i == k)
        .ok_or_else(|| Error::Dimension(format!("user {k} missing from its CSI set")))?;
    let rows = n * serving.len();
    let mut h = CMat::zeros(rows, csi_set.len());
    for (col, &i) in csi_set.iter().enumerate() {
        h.set_column(col, &stacked_channel(channels, i, serving));
    }
    let svd = h.adjoint().svd(true, true);
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let full_rank = sigma_max > 0.0
        && svd
            .singular_values
            .iter()
            .all(|&s| s > RANK_TOLERANCE * sigma_max);
    let (stacked, fell_back) = if full_rank {
        let pinv = svd
            .pseudo_inverse(RANK_TOLERANCE * sigma_max)
            .map_err(|e| Error::Dimension(e.to_string()))?;
        (pinv.column(pos).into_owned(), false)
    } else {
        log::warn!("user {k}: rank-deficient CSI stack, falling back to matched filter");
        (h.column(pos).into_owned(), true)
    };
    let split = UserPrecoder::from_stacked(&stacked, serving, n);
    Ok(PinvDirection {
        stacked,
        directions: split.directions,
        fell_back,
    })
}

/// `rho_max / |D_l|` for every user served by an AP.
pub fn equal_power_allocation(served: &[usize], rho_max: f64) -> Vec<f64> {
    if served.is_empty() {
        return Vec::new();
    }
    vec![rho_max / served.len() as f64; served.len()]
}

/// Decoupled baseline: pseudo-inverse directions with equal power per AP.
pub fn pinv_epa_solution(
    channels: &ChannelRealization,
    plan: &ClusterPlan,
    rho_max: f64,
) -> Result<PrecodingSolution> {
    let share: Vec<f64> = plan
        .served_sets
        .iter()
        .map(|d| {
            equal_power_allocation(d, rho_max)
                .first()
                .copied()
                .unwrap_or(0.0)
        })
        .collect();
    let users = (0..plan.num_users())
        .map(|k| {
            let serving = &plan.serving_sets[k];
            let dir = pinv_precoder(channels, &plan.csi_sets[k], serving, k)?;
            Ok(UserPrecoder {
                aps: serving.clone(),
                directions: dir.directions,
                powers: serving.iter().map(|&l| share[l]).collect(),
                coeff: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PrecodingSolution { users })
}

/// Null-space basis of every user, in user order.
pub fn user_null_spaces(
    channels: &ChannelRealization,
    plan: &ClusterPlan,
) -> Result<Vec<(AggregatedChannel, NullSpaceBasis)>> {
    (0..plan.num_users())
        .map(|k| {
            let agg = aggregate_channel(channels, &plan.csi_sets[k], &plan.serving_sets[k], k)?;
            let basis = null_space(&agg.interference, channels.antennas);
            Ok((agg, basis))
        })
        .collect()
}

/// `||A - B||_F` helper for orthonormality checks.
pub fn gram_defect(basis: &CMat) -> f64 {
    let g = basis.adjoint() * basis;
    let eye = DMatrix::<C64>::identity(g.nrows(), g.ncols());
    crate::linalg::fro_norm(&(g - eye))
}
