use std::fmt;
use std::str::FromStr;

use crate::backbones::Scoring;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LossKind {
    Bpr,
    Sl,
    Bsl,
    Psl,
    /// PU-corrected softmax, `L_C`.
    Corrected,
    /// Confidence-weighted softmax, `L_W`.
    Weighted,
    /// Corrected and weighted.
    #[default]
    Cw,
}

impl LossKind {
    pub const ALL: [LossKind; 7] = [
        LossKind::Bpr,
        LossKind::Sl,
        LossKind::Bsl,
        LossKind::Psl,
        LossKind::Corrected,
        LossKind::Weighted,
        LossKind::Cw,
    ];

    /// Score function the loss is defined over.
    pub fn scoring(self) -> Scoring {
        match self {
            LossKind::Bpr => Scoring::Dot,
            _ => Scoring::HalfCosine,
        }
    }

    /// Whether the loss consumes extra positives and the prior.
    pub fn uses_correction(self) -> bool {
        matches!(self, LossKind::Corrected | LossKind::Cw)
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "BPR" => Ok(LossKind::Bpr),
            "SL" => Ok(LossKind::Sl),
            "BSL" => Ok(LossKind::Bsl),
            "PSL" => Ok(LossKind::Psl),
            "L_C" | "LC" => Ok(LossKind::Corrected),
            "L_W" | "LW" => Ok(LossKind::Weighted),
            "CW" | "L_CW" => Ok(LossKind::Cw),
            _ => Err(Error::Config(format!("unknown loss kind `{s}`"))),
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::Bpr => "BPR",
            LossKind::Sl => "SL",
            LossKind::Bsl => "BSL",
            LossKind::Psl => "PSL",
            LossKind::Corrected => "L_C",
            LossKind::Weighted => "L_W",
            LossKind::Cw => "CW",
        })
    }
}

/// The σ inside the per-pair surrogate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    /// Identity inside `exp(σ(d)/τ)`; `exp(d)` under the raw power form.
    Exp,
    #[default]
    Relu,
    Tanh,
    Atan,
}

impl Activation {
    pub const ALL: [Activation; 4] = [Activation::Exp, Activation::Relu, Activation::Tanh, Activation::Atan];
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "exp" => Ok(Activation::Exp),
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "atan" => Ok(Activation::Atan),
            other => Err(Error::Config(format!("unknown activation `{other}`"))),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Exp => "exp",
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Atan => "atan",
        })
    }
}

/// How σ is turned into the positive surrogate φ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SigmaForm {
    /// `φ(d) = exp(σ(d)/τ)`.
    #[default]
    ExpOfActivation,
    /// `φ(d) = max(σ(d), eps_clamp)^(1/τ)`.
    RawPower,
}

impl FromStr for SigmaForm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "exp_of_activation" => Ok(SigmaForm::ExpOfActivation),
            "raw_power" => Ok(SigmaForm::RawPower),
            other => Err(Error::Config(format!("unknown sigma form `{other}`"))),
        }
    }
}

impl fmt::Display for SigmaForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SigmaForm::ExpOfActivation => "exp_of_activation",
            SigmaForm::RawPower => "raw_power",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossConfig {
    pub kind: LossKind,
    pub tau: f64,
    /// Positive-side temperature of BSL.
    pub tau2: f64,
    pub beta: f64,
    pub activation: Activation,
    /// Scale inside the corrected log; `None` means the row's N.
    pub q: Option<f64>,
    pub eps_clamp: f64,
    pub sigma_form: SigmaForm,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            kind: LossKind::Cw,
            tau: 0.1,
            tau2: 0.1,
            beta: 0.8,
            activation: Activation::Relu,
            q: None,
            eps_clamp: 1e-8,
            sigma_form: SigmaForm::ExpOfActivation,
        }
    }
}

impl LossConfig {
    pub fn of_kind(kind: LossKind) -> Self {
        Self {
            kind,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) || !(self.tau2 > 0.0) {
            return Err(Error::Config("loss.tau and loss.tau2 must be > 0".into()));
        }
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return Err(Error::Config("loss.beta must be >= 0".into()));
        }
        if !(self.eps_clamp > 0.0 && self.eps_clamp <= 1e-3) {
            return Err(Error::Config("loss.eps_clamp must lie in (0, 1e-3]".into()));
        }
        if let Some(q) = self.q {
            if !(q > 0.0) {
                return Err(Error::Config("loss.q must be > 0".into()));
            }
        }
        Ok(())
    }
}
