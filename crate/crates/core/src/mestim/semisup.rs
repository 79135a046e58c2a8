use alloc::format;
use alloc::vec::Vec;
use core::str::FromStr;

use super::{erm, objective, Method, ThetaEstimate, WorkingModel};
use crate::data::Dataset;
use crate::error::{invalid, Error, Result};
use crate::learners::Predictor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SemiSupStrategy {
    /// ERM on the labeled rows only.
    Vanilla,
    /// ERM on the imputed labeled and unlabeled rows.
    ImputeI,
    /// `ImputeI − Δ`.
    DebiasD,
    /// ERM on the imputed unlabeled rows, minus `Δ`.
    PPIOriginal,
}

impl SemiSupStrategy {
    pub const ALL: [SemiSupStrategy; 4] = [Self::Vanilla, Self::ImputeI, Self::DebiasD, Self::PPIOriginal];

    pub fn method(self) -> Method {
        match self {
            Self::Vanilla => Method::Vanilla,
            Self::ImputeI => Method::ImputeI,
            Self::DebiasD => Method::DebiasD,
            Self::PPIOriginal => Method::PPIOriginal,
        }
    }
}

impl FromStr for SemiSupStrategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase();
        Self::ALL
            .into_iter()
            .find(|m| m.method().label() == key)
            .ok_or_else(|| invalid(format!("unknown semi-supervised strategy `{s}`")))
    }
}

/// Every ERM solve needed by the four strategies, sharing one imputer fit.
#[derive(Debug, Clone, PartialEq)]
pub struct SemiSupComponents {
    pub model: WorkingModel,
    /// ERM on the labeled rows `D_L`.
    pub vanilla: ThetaEstimate,
    /// ERM on `D̂_L`, the labeled covariates with imputed labels.
    pub imputed_labeled: Option<ThetaEstimate>,
    /// ERM on `D̂_U`; absent when the unlabeled set is too small to fit.
    pub imputed_unlabeled: Option<ThetaEstimate>,
    /// ERM on `D̂_L ∪ D̂_U`.
    pub imputed_union: Option<ThetaEstimate>,
    /// `Δ = θ̂(D̂_L) − θ̂(D_L)`.
    pub delta: Option<Vec<f64>>,
    labeled: Dataset,
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Imputations are predictive means of `imputer` fitted on `labeled`. For
/// the logistic model they are class-1 probabilities, clipped into `[0, 1]`
/// and used as soft labels.
pub fn semisup_components(
    model: WorkingModel,
    imputer: Option<&dyn Predictor>,
    labeled: &Dataset,
    unlabeled: Option<&Dataset>,
) -> Result<SemiSupComponents> {
    let vanilla = erm(model, labeled)?;
    let mut out = SemiSupComponents {
        model,
        vanilla,
        imputed_labeled: None,
        imputed_unlabeled: None,
        imputed_union: None,
        delta: None,
        labeled: labeled.clone(),
    };
    let (Some(imputer), Some(unlabeled)) = (imputer, unlabeled) else {
        return Ok(out);
    };
    if unlabeled.p() != labeled.p() {
        return Err(Error::DimensionMismatch { expected: labeled.p(), got: unlabeled.p() });
    }
    let fitted = imputer.fit(labeled)?;
    let clean = |v: Vec<f64>| -> Vec<f64> {
        match model {
            WorkingModel::LogisticReg => v.into_iter().map(|p| p.clamp(0.0, 1.0)).collect(),
            _ => v,
        }
    };
    let hat_l = labeled.with_labels(clean(fitted.predict_mean(&labeled.without_labels())?))?;
    let hat_u = unlabeled.with_labels(clean(fitted.predict_mean(&unlabeled.without_labels())?))?;
    let imputed_labeled = erm(model, &hat_l)?;
    out.delta = Some(sub(&imputed_labeled.theta, &out.vanilla.theta));
    out.imputed_labeled = Some(imputed_labeled);
    out.imputed_union = Some(erm(model, &hat_l.concat(&hat_u)?)?);
    if hat_u.n() > hat_u.p() + 1 {
        out.imputed_unlabeled = Some(erm(model, &hat_u)?);
    }
    Ok(out)
}

impl SemiSupComponents {
    /// The estimate of one strategy. Combined estimates report the labeled-data
    /// objective at their `θ`, the largest gradient norm among the solves they
    /// use, and the total iteration count.
    pub fn estimate(&self, strategy: SemiSupStrategy) -> Result<ThetaEstimate> {
        let missing = || invalid(format!("strategy {} needs an imputer and unlabeled data", strategy.method()));
        let combine = |theta: Vec<f64>, parts: &[&ThetaEstimate]| {
            let design = self.labeled.design_with_intercept();
            let y = self.labeled.labels().expect("labeled set");
            ThetaEstimate {
                objective: objective(self.model, &design, y, &theta),
                theta,
                grad_norm: parts.iter().map(|p| p.grad_norm).fold(0.0, f64::max),
                iterations: parts.iter().map(|p| p.iterations).sum(),
                method: strategy.method(),
            }
        };
        match strategy {
            SemiSupStrategy::Vanilla => Ok(ThetaEstimate { method: Method::Vanilla, ..self.vanilla.clone() }),
            SemiSupStrategy::ImputeI => {
                let u = self.imputed_union.as_ref().ok_or_else(missing)?;
                Ok(ThetaEstimate { method: Method::ImputeI, ..u.clone() })
            }
            SemiSupStrategy::DebiasD => {
                let u = self.imputed_union.as_ref().ok_or_else(missing)?;
                let l = self.imputed_labeled.as_ref().ok_or_else(missing)?;
                let delta = self.delta.as_ref().ok_or_else(missing)?;
                Ok(combine(sub(&u.theta, delta), &[u, l, &self.vanilla]))
            }
            SemiSupStrategy::PPIOriginal => {
                let hu = self.imputed_unlabeled.as_ref().ok_or_else(missing)?;
                let l = self.imputed_labeled.as_ref().ok_or_else(missing)?;
                let delta = self.delta.as_ref().ok_or_else(missing)?;
                Ok(combine(sub(&hu.theta, delta), &[hu, l, &self.vanilla]))
            }
        }
    }
}

pub fn semisup_estimate(
    strategy: SemiSupStrategy,
    model: WorkingModel,
    imputer: Option<&dyn Predictor>,
    labeled: &Dataset,
    unlabeled: Option<&Dataset>,
) -> Result<ThetaEstimate> {
    if strategy != SemiSupStrategy::Vanilla && (imputer.is_none() || unlabeled.is_none()) {
        return Err(invalid(format!("strategy {} needs an imputer and unlabeled data", strategy.method())));
    }
    let imputer = if strategy == SemiSupStrategy::Vanilla { None } else { imputer };
    semisup_components(model, imputer, labeled, unlabeled)?.estimate(strategy)
}
