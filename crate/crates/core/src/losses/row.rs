//! Per-row objectives and their derivatives with respect to the scores.
//!
//! Everything is evaluated in the log domain: `log φ` is computed directly
//! and sums of positive terms go through a max-shifted log-sum-exp, so tiny
//! temperatures and the raw power form neither overflow nor hit `log 0`.

use super::config::{Activation, LossConfig, LossKind, SigmaForm};
use crate::error::{Error, Result};

/// Scores of one training row.
#[derive(Debug, Clone, PartialEq)]
pub struct PairScoreContext {
    pub r_ui: f64,
    pub r_uj: Vec<f64>,
    pub r_uik: Vec<f64>,
}

impl PairScoreContext {
    pub fn new(r_ui: f64, r_uj: Vec<f64>, r_uik: Vec<f64>) -> Self {
        Self { r_ui, r_uj, r_uik }
    }

    /// `d_uij = r_uj − r_ui` for every negative.
    pub fn d_neg(&self) -> Vec<f64> {
        self.r_uj.iter().map(|r| r - self.r_ui).collect()
    }

    /// `d_uik = r_uik − r_ui` for every extra positive.
    pub fn d_extra(&self) -> Vec<f64> {
        self.r_uik.iter().map(|r| r - self.r_ui).collect()
    }
}

/// Value of one row and its derivatives with respect to each score.
#[derive(Debug, Clone, PartialEq)]
pub struct RowLoss {
    pub value: f64,
    pub grad_pos: f64,
    pub grad_negs: Vec<f64>,
    pub grad_extra: Vec<f64>,
    /// The corrected log argument hit the floor.
    pub clamped: bool,
}

fn sigma(d: f64, act: Activation, raw: bool) -> (f64, f64) {
    match act {
        Activation::Exp if raw => {
            let e = d.exp();
            (e, e)
        }
        Activation::Exp => (d, 1.0),
        Activation::Relu => {
            if d > 0.0 {
                (d, 1.0)
            } else {
                (0.0, 0.0)
            }
        }
        Activation::Tanh => {
            let t = d.tanh();
            (t, 1.0 - t * t)
        }
        Activation::Atan => (d.atan(), 1.0 / (1.0 + d * d)),
    }
}

/// `(log φ(d), d log φ / dd)`.
pub fn log_phi(d: f64, cfg: &LossConfig) -> (f64, f64) {
    match cfg.sigma_form {
        SigmaForm::ExpOfActivation => {
            let (s, ds) = sigma(d, cfg.activation, false);
            (s / cfg.tau, ds / cfg.tau)
        }
        SigmaForm::RawPower => {
            let (s, ds) = sigma(d, cfg.activation, true);
            if s > cfg.eps_clamp {
                (s.ln() / cfg.tau, ds / (s * cfg.tau))
            } else {
                (cfg.eps_clamp.ln() / cfg.tau, 0.0)
            }
        }
    }
}

/// The per-pair surrogate φ(d).
pub fn phi(d: f64, cfg: &LossConfig) -> f64 {
    log_phi(d, cfg).0.exp()
}

/// Log-sum-exp of `v`; overwrites `v` with the softmax weights.
fn lse_softmax(v: &mut [f64]) -> f64 {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    v.iter_mut().for_each(|x| *x /= sum);
    max + sum.ln()
}

/// Objective of one row for `cfg.kind`. `tau_plus` is only read by the
/// corrected losses.
pub fn row_loss(ctx: &PairScoreContext, cfg: &LossConfig, tau_plus: f64) -> Result<RowLoss> {
    let n = ctx.r_uj.len();
    let m = ctx.r_uik.len();
    if cfg.kind == LossKind::Bpr {
        if n != 1 {
            return Err(Error::WrongNegativeCount {
                kind: "BPR",
                expected: 1,
                actual: n,
            });
        }
    } else if n == 0 {
        return Err(Error::WrongNegativeCount {
            kind: "softmax losses",
            expected: 1,
            actual: 0,
        });
    }
    if cfg.kind.uses_correction() && m == 0 {
        return Err(Error::Config(format!(
            "{} needs at least one extra positive (sampler.M >= 1)",
            cfg.kind
        )));
    }

    let d = ctx.d_neg();
    // derivative with respect to each d_uij, and each d_uik
    let mut gd = vec![0.0; n];
    let mut ge = vec![0.0; m];
    let mut clamped = false;
    let value = match cfg.kind {
        LossKind::Bpr => {
            // −log sigmoid(−d) = softplus(d)
            let x = d[0];
            gd[0] = 1.0 / (1.0 + (-x).exp());
            if x > 0.0 {
                x + (-x).exp().ln_1p()
            } else {
                x.exp().ln_1p()
            }
        }
        LossKind::Sl => {
            gd.iter_mut().zip(&d).for_each(|(g, x)| *g = x / cfg.tau);
            let v = lse_softmax(&mut gd);
            gd.iter_mut().for_each(|g| *g /= cfg.tau);
            v
        }
        LossKind::Bsl => {
            // negative side at τ1 plus a τ2 log-sum-exp over the row's
            // positive set, which is the anchor alone
            let mut neg: Vec<f64> = ctx.r_uj.iter().map(|r| r / cfg.tau).collect();
            let neg_v = lse_softmax(&mut neg);
            let mut pos = [-ctx.r_ui / cfg.tau2];
            let pos_v = lse_softmax(&mut pos);
            let value = neg_v + cfg.tau2 / cfg.tau * pos_v;
            let grad_negs: Vec<f64> = neg.iter().map(|p| p / cfg.tau).collect();
            return Ok(RowLoss {
                value,
                grad_pos: -pos[0] / cfg.tau,
                grad_negs,
                grad_extra: Vec::new(),
                clamped: false,
            });
        }
        LossKind::Psl | LossKind::Weighted => {
            let beta = if cfg.kind == LossKind::Weighted { cfg.beta } else { 0.0 };
            let mut dl = vec![0.0; n];
            for j in 0..n {
                let (l, dlp) = log_phi(d[j], cfg);
                gd[j] = l - beta * d[j];
                dl[j] = dlp - beta;
            }
            let v = lse_softmax(&mut gd);
            gd.iter_mut().zip(&dl).for_each(|(p, s)| *p *= s);
            v
        }
        LossKind::Corrected => {
            let e = ctx.d_extra();
            let q = cfg.q.unwrap_or(n as f64);
            let la: Vec<f64> = d.iter().map(|x| x / cfg.tau).collect();
            let lb: Vec<f64> = e.iter().map(|x| x / cfg.tau).collect();
            let shift = la.iter().chain(&lb).cloned().fold(f64::NEG_INFINITY, f64::max);
            let a: Vec<f64> = la.iter().map(|x| (x - shift).exp()).collect();
            let b: Vec<f64> = lb.iter().map(|x| (x - shift).exp()).collect();
            let inner = a.iter().sum::<f64>() / n as f64 - tau_plus * b.iter().sum::<f64>() / m as f64;
            let scale = (q / (1.0 - tau_plus)).ln();
            if inner <= 0.0 || shift + inner.ln() <= cfg.eps_clamp.ln() {
                clamped = true;
                scale + cfg.eps_clamp.ln()
            } else {
                for j in 0..n {
                    gd[j] = a[j] / (n as f64 * cfg.tau * inner);
                }
                for k in 0..m {
                    ge[k] = -tau_plus * b[k] / (m as f64 * cfg.tau * inner);
                }
                scale + shift + inner.ln()
            }
        }
        LossKind::Cw => {
            let e = ctx.d_extra();
            let q = cfg.q.unwrap_or(n as f64);
            let mut lphi = vec![0.0; n];
            let mut dlphi = vec![0.0; n];
            for j in 0..n {
                (lphi[j], dlphi[j]) = log_phi(d[j], cfg);
            }
            let mut w: Vec<f64> = d.iter().map(|x| -cfg.beta * x).collect();
            let log_z = lse_softmax(&mut w);
            // log of each w_j φ_j, w_j normalized
            let la: Vec<f64> = (0..n).map(|j| -cfg.beta * d[j] - log_z + lphi[j]).collect();
            let (lk, dlk): (Vec<f64>, Vec<f64>) = e.iter().map(|x| log_phi(*x, cfg)).unzip();
            let shift = la.iter().chain(&lk).cloned().fold(f64::NEG_INFINITY, f64::max);
            let wphi: Vec<f64> = la.iter().map(|x| (x - shift).exp()).collect();
            let phik: Vec<f64> = lk.iter().map(|x| (x - shift).exp()).collect();
            let a: f64 = wphi.iter().sum();
            let b = tau_plus * phik.iter().sum::<f64>() / m as f64;
            let inner = a - b;
            let scale = (q / (1.0 - tau_plus)).ln();
            if inner <= 0.0 || shift + inner.ln() <= cfg.eps_clamp.ln() {
                clamped = true;
                scale + cfg.eps_clamp.ln()
            } else {
                // dA/dd_j = w_j φ_j (dlogφ_j − β) + β A w_j
                for j in 0..n {
                    gd[j] = (wphi[j] * (dlphi[j] - cfg.beta) + cfg.beta * a * w[j]) / inner;
                }
                for k in 0..m {
                    ge[k] = -tau_plus * phik[k] * dlk[k] / (m as f64 * inner);
                }
                scale + shift + inner.ln()
            }
        }
    };

    let grad_pos = -gd.iter().sum::<f64>() - ge.iter().sum::<f64>();
    Ok(RowLoss {
        value,
        grad_pos,
        grad_negs: gd,
        grad_extra: ge,
        clamped,
    })
}

/// Row value only; convenience for oracles.
pub fn row_value(ctx: &PairScoreContext, cfg: &LossConfig, tau_plus: f64) -> Result<f64> {
    row_loss(ctx, cfg, tau_plus).map(|r| r.value)
}
