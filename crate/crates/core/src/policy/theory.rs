//! Bounds that the ACI rule is expected to respect, and the per-epoch audit
//! that checks them.

use serde::Serialize;

use super::{candidate_goodput, Decision, PolicyConfig, Snapshot};

/// `zeta = 1 / ((1 + beta tau_max)(1 + gamma))`, the ratio of the smallest
/// to the largest modulator value.
pub fn zeta_bound(beta: f64, gamma: f64, tau_max: f64) -> f64 {
    1.0 / ((1.0 + beta * tau_max) * (1.0 + gamma))
}

/// Backlog of queue `j` above which a locked server on `i` must leave:
/// `Q_i (E[R_i] f_ii) / (E[R_j] f_ij) (1 + tau dt / (L dt))`.
/// Infinite when `j` cannot be served.
#[allow(clippy::too_many_arguments)]
pub fn starvation_threshold(
    q_i: f64,
    er_i: f64,
    er_j: f64,
    f_ii: f64,
    f_ij: f64,
    tau_ij: f64,
    frame_len: u32,
    slot_len: f64,
) -> f64 {
    if er_j <= 0.0 || f_ij <= 0.0 {
        return f64::INFINITY;
    }
    let dwell = frame_len as f64 * slot_len;
    q_i * (er_i * f_ii) / (er_j * f_ij) * (1.0 + tau_ij * slot_len / dwell)
}

/// Outcome of checking one decision against the constant-fraction bound.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditRecord {
    /// Unscaled objective `G(i) = w_i mu_bar_{i|j}` per candidate.
    pub objective: Vec<f64>,
    pub chosen: Option<usize>,
    pub g_chosen: f64,
    pub g_max: f64,
    pub zeta: f64,
    /// `G(chosen) - zeta max G`; negative means a violation.
    pub margin: f64,
}

impl AuditRecord {
    pub fn ok(&self) -> bool {
        // relative slack for the rounding in the score products
        self.margin >= -1e-9 * self.g_max.abs()
    }
}

/// Evaluates `G` for every candidate and checks the chosen one against
/// `zeta max G`. An idle decision is audited as choosing nothing, which is
/// only consistent with `max G = 0`.
pub fn audit_decision(
    snap: &Snapshot,
    cfg: &PolicyConfig,
    weights: &[f64],
    decision: &Decision,
    tau_max: f64,
) -> AuditRecord {
    let objective: Vec<f64> =
        (0..snap.n()).map(|i| candidate_goodput(snap, cfg, i).map_or(0.0, |g| weights[i] * g)).collect();
    let g_max = objective.iter().copied().fold(0.0, f64::max);
    let chosen = match decision.action {
        super::Action::Idle => None,
        _ => Some(decision.target(snap.current)),
    };
    let g_chosen = chosen.map_or(0.0, |i| objective[i]);
    let zeta = zeta_bound(cfg.beta, cfg.gamma, tau_max);
    AuditRecord { objective, chosen, g_chosen, g_max, zeta, margin: g_chosen - zeta * g_max }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{aci_select, PolicyConfig};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn zeta_examples() {
        assert_eq!(zeta_bound(0.0, 0.0, 100.0), 1.0);
        assert_relative_eq!(zeta_bound(1.0, 1.0, 10.0), 1.0 / 22.0, max_relative = 1e-14);
        assert!(zeta_bound(1.0, 1.0, 10.0) > zeta_bound(1.1, 1.0, 10.0));
        assert!(zeta_bound(1.0, 1.0, 10.0) > zeta_bound(1.0, 1.1, 10.0));
        assert!(zeta_bound(1.0, 1.0, 10.0) > zeta_bound(1.0, 1.0, 11.0));
    }

    #[test]
    fn threshold_examples() {
        assert_relative_eq!(starvation_threshold(50.0, 1e9, 1e9, 2.0, 2.0, 0.0, 3, 0.01), 50.0);
        // ratio 2, tau dt / (L dt) = 1
        assert_relative_eq!(starvation_threshold(100.0, 2e9, 1e9, 1.0, 1.0, 3.0, 3, 0.01), 400.0, max_relative = 1e-12);
        assert!(
            starvation_threshold(100.0, 1e9, 1e9, 1.0, 1.0, 5.0, 4, 0.01)
                < starvation_threshold(100.0, 1e9, 1e9, 1.0, 1.0, 5.0, 3, 0.01)
        );
        assert_eq!(starvation_threshold(1.0, 1e9, 0.0, 1.0, 1.0, 1.0, 3, 0.01), f64::INFINITY);
    }

    proptest! {
        #[test]
        fn chosen_candidate_is_within_zeta(
            q in prop::collection::vec(0u64..10_000_000, 2..7),
            taus in prop::collection::vec(1.0f64..240.0, 6),
            chis in prop::collection::vec(0.0f64..=1.0, 6),
            rates in prop::collection::vec(0.0f64..2.5e9, 6),
            cur in 0usize..6,
            beta in 0.0f64..2.0,
            gamma in 0.0f64..2.0,
        ) {
            let n = q.len();
            let cur = cur % n;
            let tau: Vec<Option<f64>> = taus[..n].iter().map(|&t| Some(t)).collect();
            let age = vec![0u64; n];
            let snap = Snapshot {
                current: cur,
                locked: true,
                backlog: &q,
                hol_age: &age,
                rate: &rates[..n],
                tau: &tau,
                affinity: &chis[..n],
                slot_len: 0.01041,
            };
            let cfg = PolicyConfig { beta, gamma, ..PolicyConfig::default() };
            let d = aci_select(&snap, &cfg);
            let w: Vec<f64> = q.iter().map(|&x| x as f64).collect();
            let a = audit_decision(&snap, &cfg, &w, &d, 240.0);
            prop_assert!(a.ok(), "{:?}", a);
        }
    }
}
