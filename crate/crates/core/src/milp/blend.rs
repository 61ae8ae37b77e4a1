use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::FeedstockId;

use super::{BuiltModel, RowSense, RowTag, VarKind, VarRole};

/// How the carbohydrate threshold enters the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    /// Hard rows on mean carbohydrate content.
    Deterministic,
    /// Sample rows with penalised shortfall slacks.
    ChanceSaa,
    /// Hard rows for every sample.
    AllSamples,
}

impl Variant {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().replace(['_', '-'], "").as_str() {
            "deterministic" | "mean" => Some(Variant::Deterministic),
            "chancesaa" | "chance" | "saa" => Some(Variant::ChanceSaa),
            "allsamples" | "robust" => Some(Variant::AllSamples),
            _ => None,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Variant::Deterministic => "deterministic",
            Variant::ChanceSaa => "chance-saa",
            Variant::AllSamples => "all-samples",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSpec {
    pub variant: Variant,
    /// Window length in minutes; 0 means one window over the whole horizon.
    pub tau_minutes: f64,
    /// Required carbohydrate fraction of the reactor feed.
    pub f_star: f64,
    /// Feedstock order used by `samples` and `means`.
    pub feedstocks: Vec<FeedstockId>,
    /// `samples[n][b]`: carbohydrate fraction of feedstock `b` in sample `n`.
    pub samples: Vec<Vec<f64>>,
    /// Shortfall penalty (chance variant only).
    pub alpha: f64,
    /// Mean carbohydrate fraction per feedstock (deterministic variant only).
    pub means: Vec<f64>,
}

impl VariantSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.f_star > 0.0 && self.f_star < 1.0) {
            return Err(Error::validation("f_star", format!("must lie in (0,1), got {}", self.f_star)));
        }
        if !(self.tau_minutes >= 0.0 && self.tau_minutes.is_finite()) {
            return Err(Error::validation("tau_minutes", "must be non-negative"));
        }
        let nb = self.feedstocks.len();
        match self.variant {
            Variant::Deterministic => {
                if self.means.len() != nb {
                    return Err(Error::validation("means", format!("need {nb} values, got {}", self.means.len())));
                }
            }
            Variant::ChanceSaa | Variant::AllSamples => {
                if self.samples.is_empty() {
                    return Err(Error::validation("samples", "no samples given"));
                }
                if let Some(n) = self.samples.iter().position(|s| s.len() != nb) {
                    return Err(Error::validation("samples", format!("sample {n} has the wrong length")));
                }
                if self.variant == Variant::ChanceSaa && !(self.alpha >= 0.0 && self.alpha.is_finite()) {
                    return Err(Error::validation("alpha", "must be non-negative"));
                }
            }
        }
        Ok(())
    }
}

/// Number of periods per blending window.
pub fn window_periods(tau_minutes: f64, period_minutes: f64, horizon: u32) -> Result<u32> {
    if tau_minutes == 0.0 {
        return Ok(horizon.max(1));
    }
    let ratio = tau_minutes / period_minutes;
    let rounded = ratio.round();
    if rounded < 1.0 || (ratio - rounded).abs() > 1e-9 * ratio.max(1.0) {
        return Err(Error::validation(
            "tau_minutes",
            format!("{tau_minutes} is not a positive multiple of the {period_minutes}-minute period"),
        ));
    }
    Ok(rounded as u32)
}

pub fn window_count(window: u32, horizon: u32) -> usize {
    horizon.div_ceil(window.max(1)) as usize
}

/// Adds carbohydrate blending rows for `spec` to a core model.
///
/// Windows are right-closed runs of `tau` minutes starting at period 1; the
/// last one is cut at the horizon.
pub fn add_blending(mut model: BuiltModel, spec: &VariantSpec) -> Result<BuiltModel> {
    spec.validate()?;
    let layout = &model.layout;
    let horizon = layout.periods;
    let wp = window_periods(spec.tau_minutes, layout.period_minutes, horizon)?;
    let nwin = window_count(wp, horizon);
    if !horizon.is_multiple_of(wp) {
        model.instance.warnings.push(format!(
            "blending window of {wp} periods does not divide the horizon of {horizon}; last window truncated"
        ));
    }
    let mut class_feed = Vec::with_capacity(layout.classes.len());
    for key in &layout.classes {
        let b = spec
            .feedstocks
            .iter()
            .position(|f| *f == key.feedstock)
            .ok_or_else(|| Error::UnknownClass(format!("no carbohydrate data for feedstock {}", key.feedstock)))?;
        class_feed.push(b);
    }

    // Reactor flow variables grouped by window.
    let mut by_window: Vec<Vec<(usize, usize)>> = vec![Vec::new(); nwin];
    for (j, v) in model.instance.variables.iter().enumerate() {
        if let VarRole::Flow { node, class, t } = v.role {
            if layout.reactor_feeders.iter().any(|r| r.0 == node) {
                by_window[((t - 1) / wp) as usize].push((j, class));
            }
        }
    }

    let inst = &mut model.instance;
    let row = |flows: &[(usize, usize)], coef: &dyn Fn(usize) -> f64| -> Vec<(usize, f64)> {
        flows
            .iter()
            .map(|&(j, c)| (j, coef(class_feed[c])))
            .filter(|t| t.1 != 0.0)
            .collect()
    };
    match spec.variant {
        Variant::Deterministic => {
            for flows in &by_window {
                let terms = row(flows, &|b| spec.means[b] - spec.f_star);
                if !terms.is_empty() {
                    inst.add_row(RowTag::MeanBlend, terms, RowSense::Ge, 0.0);
                }
            }
        }
        Variant::AllSamples => {
            for sample in &spec.samples {
                for flows in &by_window {
                    let terms = row(flows, &|b| sample[b] - spec.f_star);
                    if !terms.is_empty() {
                        inst.add_row(RowTag::SampleBlend, terms, RowSense::Ge, 0.0);
                    }
                }
            }
        }
        Variant::ChanceSaa => {
            for (n, sample) in spec.samples.iter().enumerate() {
                for (k, flows) in by_window.iter().enumerate() {
                    let mut terms = row(flows, &|b| spec.f_star - sample[b]);
                    let bp = inst.add_var(
                        VarRole::Surplus { sample: n, window: k },
                        VarKind::Continuous,
                        0.0,
                        f64::INFINITY,
                        0.0,
                    );
                    let bm = inst.add_var(
                        VarRole::Shortfall { sample: n, window: k },
                        VarKind::Continuous,
                        0.0,
                        f64::INFINITY,
                        spec.alpha,
                    );
                    terms.push((bp, 1.0));
                    terms.push((bm, -1.0));
                    inst.add_row(RowTag::ShortfallBalance, terms, RowSense::Eq, 0.0);
                }
            }
        }
    }
    inst.canonicalize();
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_lengths() {
        assert_eq!(window_periods(0.0, 1.0, 120).unwrap(), 120);
        assert_eq!(window_periods(15.0, 1.0, 120).unwrap(), 15);
        assert_eq!(window_periods(15.0, 0.25, 120).unwrap(), 60);
        assert!(window_periods(10.0, 3.0, 120).is_err());
        assert_eq!(window_count(15, 120), 8);
        assert_eq!(window_count(50, 120), 3);
    }

    #[test]
    fn variant_names() {
        for v in [Variant::Deterministic, Variant::ChanceSaa, Variant::AllSamples] {
            assert_eq!(Variant::parse(v.label()), Some(v));
        }
    }
}
