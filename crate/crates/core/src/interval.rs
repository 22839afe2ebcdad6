use serde::{Deserialize, Serialize};

/// Estimation method that produced an interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Fieller,
    Delta,
    DeltaBc,
    Edgeworth,
    EdgeworthBc,
    Naive,
    ClusterDelta,
    MixedEffect,
    MixedEffectWeighted,
    OuterPre,
    OuterPost,
    Bootstrap,
    CrossoverGls,
    CrossoverRelative,
    CrossoverLmm,
    CompleteLmm,
    IncompleteOls,
    WeightedAverage,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Fieller => "fieller",
            Method::Delta => "delta",
            Method::DeltaBc => "delta-bc",
            Method::Edgeworth => "edgeworth",
            Method::EdgeworthBc => "edgeworth-bc",
            Method::Naive => "naive",
            Method::ClusterDelta => "cluster-delta",
            Method::MixedEffect => "mixed-effect",
            Method::MixedEffectWeighted => "mixed-effect-weighted",
            Method::OuterPre => "outer-pre",
            Method::OuterPost => "outer-post",
            Method::Bootstrap => "bootstrap",
            Method::CrossoverGls => "crossover-gls",
            Method::CrossoverRelative => "crossover-relative",
            Method::CrossoverLmm => "crossover-lmm",
            Method::CompleteLmm => "complete-lmm",
            Method::IncompleteOls => "incomplete-ols",
            Method::WeightedAverage => "weighted-average",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A point estimate with a two-sided `1 - alpha` interval.
///
/// `se` is the standard error the interval was built from; for Fieller it is
/// the linearized (Delta) standard error, reported for comparison only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
    pub alpha: f64,
    pub se: f64,
    pub method: Method,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl ConfidenceInterval {
    pub fn contains(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}
