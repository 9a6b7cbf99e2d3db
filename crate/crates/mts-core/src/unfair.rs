//! Star runs with per-coordinate learning rates and unfair cost accounting:
//! each point carries a service price beta_i and movement is charged at a
//! global ratio gamma. The rate recipe ties beta, gamma, and the learning
//! rates together through one budget identity, which makes the combined
//! unfair cost comparable against the offline optimum.

use crate::dist::LeafDistribution;
use crate::error::{Error, Result};
use crate::instances::CostPath;
use crate::integrate::{integrate_segment_observed, Dynamics, SegmentLedger, StepPolicy};
use crate::oracle::{segment_opt, MetricSpace, OfflineSolution};
use crate::report::{CheckRecord, CostReport, CostSummary, RunDiagnostics, REPORT_SCHEMA};
use crate::runs::{error_budget, kkt_checks, star_digest};
use crate::solver::{EntropicRegularizer, MultiplierSolution};
use crate::tree::WeightedRootedTree;

/// Per-coordinate rate schedule for an unfair star run.
///
/// The budget identity `beta_i + 2 * gamma * eta_i = zeta` holds for every
/// coordinate. When built by [`UnfairParams::derive`] from guarantee weights
/// `u`, the fields follow the closed-form recipe
/// `beta_i = 8 gamma (ln u_i + offset)`, `eta_i = 4 ln(U / u_i)`,
/// `delta_i = (u_i / U)^2`, `zeta = 8 gamma (ln U + offset)` with
/// `U = sum u_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnfairParams {
    /// Guarantee weights; empty when the params were set by hand.
    pub u: Vec<f64>,
    pub gamma: f64,
    /// Additive constant inside the service prices; meaningful only with `u`.
    pub offset: f64,
    pub beta: Vec<f64>,
    pub eta: Vec<f64>,
    pub delta: Vec<f64>,
    pub zeta: f64,
}

impl UnfairParams {
    /// Closed-form recipe from guarantee weights.
    pub fn derive(u: &[f64], gamma: f64, offset: f64) -> Result<Self> {
        let m = u.len();
        if m < 2 {
            return Err(Error::BadParams {
                context: format!("need at least 2 coordinates, got {}", m),
            });
        }
        if u.iter().any(|&v| !v.is_finite() || v <= 0.0) {
            return Err(Error::BadParams {
                context: "guarantee weights must be positive and finite".into(),
            });
        }
        if !gamma.is_finite() || gamma < 1.0 {
            return Err(Error::BadParams { context: format!("gamma {} must be >= 1", gamma) });
        }
        if !offset.is_finite() || offset < 0.0 {
            return Err(Error::BadParams { context: format!("offset {} must be >= 0", offset) });
        }
        let total: f64 = u.iter().sum();
        let mut beta = Vec::with_capacity(m);
        let mut eta = Vec::with_capacity(m);
        let mut delta = Vec::with_capacity(m);
        for &ui in u {
            let b = 8.0 * gamma * (ui.ln() + offset);
            if b < 0.0 {
                return Err(Error::BadParams {
                    context: format!(
                        "service price would be negative at u = {} with offset {}",
                        ui, offset
                    ),
                });
            }
            beta.push(b);
            eta.push(4.0 * (total / ui).ln());
            delta.push((ui / total) * (ui / total));
        }
        let zeta = 8.0 * gamma * (total.ln() + offset);
        let params = UnfairParams { u: u.to_vec(), gamma, offset, beta, eta, delta, zeta };
        let scale = 1.0 + params.zeta.abs();
        if params.identity_residual() > 1e-12 * scale {
            return Err(Error::Numeric {
                context: format!("budget identity drifted by {:.3e}", params.identity_residual()),
            });
        }
        // The formal smoothness constant collapses to 1 for this recipe:
        // 2 * ln(1/delta_i) / eta_i = 2 * 2 ln(U/u_i) / (4 ln(U/u_i)).
        if (params.lipschitz() - 1.0).abs() > 1e-12 {
            return Err(Error::Numeric {
                context: format!("rate constant should be 1, got {}", params.lipschitz()),
            });
        }
        Ok(params)
    }

    /// Hand-set schedule; the budget identity is still required.
    pub fn explicit(beta: &[f64], gamma: f64, eta: &[f64], delta: &[f64], zeta: f64) -> Result<Self> {
        let m = beta.len();
        if m < 2 || eta.len() != m || delta.len() != m {
            return Err(Error::BadParams { context: "parameter arity mismatch".into() });
        }
        if beta.iter().any(|&b| !b.is_finite() || b < 0.0) {
            return Err(Error::BadParams { context: "service prices must be >= 0".into() });
        }
        if !gamma.is_finite() || gamma < 1.0 {
            return Err(Error::BadParams { context: format!("gamma {} must be >= 1", gamma) });
        }
        if eta.iter().any(|&e| !e.is_finite() || e <= 0.0) {
            return Err(Error::BadParams { context: "learning rates must be positive".into() });
        }
        if delta.iter().any(|&d| !d.is_finite() || d <= 0.0 || d > 1.0) {
            return Err(Error::BadParams { context: "shifts must lie in (0, 1]".into() });
        }
        let params = UnfairParams {
            u: Vec::new(),
            gamma,
            offset: 0.0,
            beta: beta.to_vec(),
            eta: eta.to_vec(),
            delta: delta.to_vec(),
            zeta,
        };
        let scale = 1.0 + zeta.abs();
        if params.identity_residual() > 1e-12 * scale {
            return Err(Error::BadParams {
                context: format!(
                    "budget identity violated by {:.3e}",
                    params.identity_residual()
                ),
            });
        }
        Ok(params)
    }

    pub fn len(&self) -> usize {
        self.beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta.is_empty()
    }

    /// Total guarantee weight U; zero for hand-set params.
    pub fn total(&self) -> f64 {
        self.u.iter().sum()
    }

    /// Worst violation of `beta_i + 2 gamma eta_i = zeta`.
    pub fn identity_residual(&self) -> f64 {
        self.beta
            .iter()
            .zip(&self.eta)
            .map(|(b, e)| (b + 2.0 * self.gamma * e - self.zeta).abs())
            .fold(0.0, f64::max)
    }

    /// Formal smoothness constant `max_i 2 ln(1/delta_i) / eta_i`.
    pub fn lipschitz(&self) -> f64 {
        self.delta
            .iter()
            .zip(&self.eta)
            .map(|(d, e)| 2.0 * (1.0 / d).ln() / e)
            .fold(0.0, f64::max)
    }

    /// Inner product of learning rates with shifts, used in the general
    /// guarantee constant.
    pub fn inner_eta_delta(&self) -> f64 {
        self.eta.iter().zip(&self.delta).map(|(e, d)| e * d).sum()
    }

    /// The free-start guarantee factor `8 gamma (ln U + offset + 1)`; only
    /// meaningful for derived params.
    pub fn free_start_factor(&self) -> Option<f64> {
        if self.u.is_empty() {
            None
        } else {
            Some(8.0 * self.gamma * (self.total().ln() + self.offset + 1.0))
        }
    }
}

/// Normalized shift-rate mass `sum (u_i/U)^2 ln(U/u_i)`; bounded by 2/e for
/// every positive weight vector.
pub fn normalized_shift_rate(u: &[f64]) -> f64 {
    let total: f64 = u.iter().sum();
    u.iter()
        .map(|&ui| {
            let r = ui / total;
            r * r * (1.0 / r).ln()
        })
        .sum()
}

/// Cost totals of an unfair run: the plain pair (S, M) and the priced pair
/// (S_u, M_u) with `S_u = int <beta . c, x> dt` and `M_u = gamma * M`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct UnfairLedger {
    pub service: f64,
    pub movement: f64,
    pub unfair_service: f64,
    pub unfair_movement: f64,
}

/// Full result of an unfair star run.
#[derive(Debug, Clone)]
pub struct UnfairOutcome {
    pub report: CostReport,
    pub ledger: UnfairLedger,
    pub segment: SegmentLedger,
    pub final_state: LeafDistribution,
    /// Offline optimum with the comparator free to pick its start.
    pub offline_free: OfflineSolution,
    /// Offline optimum pinned to the online start.
    pub offline_started: OfflineSolution,
}

/// The general guarantee: `S_u + M_u` against `(zeta + 2 gamma <eta,delta>)
/// (S* + L M*)` plus an additive floor, with the comparator started at the
/// same point.
pub fn check_general_bound(
    ledger: &UnfairLedger,
    params: &UnfairParams,
    offline_started: &OfflineSolution,
    big_delta: f64,
    tol: f64,
) -> CheckRecord {
    let l = params.lipschitz();
    let ed = params.inner_eta_delta();
    let factor = params.zeta + 2.0 * params.gamma * ed;
    let additive = (1.0 + 2.0 * params.zeta * l + 6.0 * params.gamma * l * ed) * big_delta;
    CheckRecord::le(
        "general_guarantee",
        format!(
            "S_u + M_u <= {:.9}*(S_star + {:.9}*M_star) + {:.9}",
            factor, l, additive
        ),
        ledger.unfair_service + ledger.unfair_movement,
        factor * (offline_started.service + l * offline_started.movement) + additive,
        tol,
    )
}

/// Runs the multi-rate star dynamics over a cost path. The dynamics never
/// see beta or gamma; those only price the ledger. The report carries the
/// free-start guarantee (for derived params) and the general one.
pub fn run_unfair(
    path: &CostPath,
    weights: &[f64],
    params: &UnfairParams,
    start: usize,
    p0: Option<&[f64]>,
    policy: &StepPolicy,
) -> Result<UnfairOutcome> {
    run_unfair_observed(path, weights, params, start, p0, policy, |_, _, _| {})
}

pub fn run_unfair_observed(
    path: &CostPath,
    weights: &[f64],
    params: &UnfairParams,
    start: usize,
    p0: Option<&[f64]>,
    policy: &StepPolicy,
    mut observe: impl FnMut(f64, &LeafDistribution, &MultiplierSolution),
) -> Result<UnfairOutcome> {
    let n = weights.len();
    if n < 2 {
        return Err(Error::BadParams { context: format!("star needs n >= 2, got {}", n) });
    }
    if params.len() != n {
        return Err(Error::MassArity { expected: n, got: params.len() });
    }
    path.validate()?;
    if !path.segments.is_empty() && path.n_leaves() != n {
        return Err(Error::MassArity { expected: n, got: path.n_leaves() });
    }
    if start >= n {
        return Err(Error::BadParams { context: format!("start {} out of range", start) });
    }
    let reg = EntropicRegularizer::star_per_coordinate(weights, &params.eta, &params.delta)?;
    let policy = policy.clone().with_env_override();

    let star_tree = WeightedRootedTree::star(weights)?;
    let mut state = match p0 {
        Some(m) => LeafDistribution::from_masses(&star_tree, m.to_vec())?,
        None => LeafDistribution::point(&star_tree, start),
    };
    let metric = MetricSpace::from_tree(&star_tree);
    let dynamics = Dynamics::Star { reg: &reg };

    let mut total = SegmentLedger::new(n);
    let mut unfair_service = 0.0f64;
    let mut t0 = 0.0f64;
    for seg in &path.segments {
        // Left-endpoint accumulation of the priced service on the exact
        // step grid the integrator uses.
        let mut last: Option<(f64, f64)> = None;
        let (next, led, _) = integrate_segment_observed(
            &dynamics,
            &state,
            &seg.rates,
            seg.duration,
            &policy,
            |t, p, sol| {
                let rate: f64 = params
                    .beta
                    .iter()
                    .zip(seg.rates.iter().zip(p.masses()))
                    .map(|(b, (c, x))| b * c * x)
                    .sum();
                if let Some((lt, lr)) = last {
                    unfair_service += (t - lt) * lr;
                }
                last = Some((t, rate));
                observe(t0 + t, p, sol);
            },
        )?;
        if let Some((lt, lr)) = last {
            unfair_service += (seg.duration - lt) * lr;
        }
        total.absorb(&led);
        state = next;
        t0 += seg.duration;
    }

    let ledger = UnfairLedger {
        service: total.service,
        movement: total.movement,
        unfair_service,
        unfair_movement: params.gamma * total.movement,
    };

    let offline_free = segment_opt(path, &metric, None)?;
    let offline_started = segment_opt(path, &metric, Some(start))?;

    let beta_max = params.beta.iter().copied().fold(0.0, f64::max);
    let scale = ledger
        .unfair_service
        .max(ledger.unfair_movement)
        .max(offline_started.opt)
        .max(1.0);
    let tol = error_budget(path, &policy, scale) * (1.0 + beta_max + params.gamma);
    let big_delta = weights.iter().copied().fold(0.0, f64::max);

    let mut checks = Vec::new();
    if let Some(factor) = params.free_start_factor() {
        checks.push(CheckRecord::le(
            "free_start_guarantee",
            format!("S_u + M_u <= {:.9}*(S_star_free + M_star_free + 4*{:.9})", factor, big_delta),
            ledger.unfair_service + ledger.unfair_movement,
            factor * (offline_free.service + offline_free.movement + 4.0 * big_delta),
            tol,
        ));
    }
    checks.push(check_general_bound(&ledger, params, &offline_started, big_delta, tol));
    checks.extend(kkt_checks(&total));

    let report = CostReport {
        schema: REPORT_SCHEMA.into(),
        algo: "unfair".into(),
        params: serde_json::json!({
            "n": n,
            "u": params.u,
            "gamma": params.gamma,
            "offset": params.offset,
            "zeta": params.zeta,
            "beta": params.beta,
            "eta": params.eta,
            "delta": params.delta,
            "start": start,
            "policy": {
                "h_max": policy.h_max,
                "substeps": policy.substeps,
                "safety": policy.safety,
            },
        }),
        instance_digest: star_digest(weights, start, path),
        costs: CostSummary {
            service: ledger.service,
            movement: ledger.movement,
            service_offline: offline_free.service,
            movement_offline: offline_free.movement,
            opt: offline_free.opt,
        },
        checks,
        diagnostics: RunDiagnostics {
            steps: total.steps,
            events: total.events,
            clamp_events: total.clamp_events,
            clamp_duration: total.clamp_duration,
            min_reduced_cost: total.min_reduced_cost,
            max_residuals: total.max_residuals,
            psi_delta: 0.0,
            delta_floored: reg.delta_floored,
            delta_exceeds_half: reg.delta_exceeds_half,
        },
    };

    Ok(UnfairOutcome {
        report,
        ledger,
        segment: total,
        final_state: state,
        offline_free,
        offline_started,
    })
}
