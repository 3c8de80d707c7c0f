use std::fmt;

use serde::{Deserialize, Serialize};

use super::geo::great_circle_km;
use super::TamperError;
use crate::model::{EntityRecord, EntityType};
use crate::simeng::MeasureKind;

/// Substitution strategy for building a tampered test set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TamperStrategy {
    PersonRandom,
    /// Same gender (PsG).
    PersonSameGender,
    /// Shared country of citizenship (PsC).
    PersonSameCitizenship,
    /// Both of the above (PsCG).
    PersonSameBoth,
    LocationRandom,
    /// Great-circle distance within `[dmin_km, dmax_km]`, optionally also a
    /// shared parent class.
    LocationGcdBand {
        dmin_km: f64,
        dmax_km: f64,
        #[serde(default = "yes")]
        require_shared_parent: bool,
    },
    EventRandom,
    /// Shared parent class (EsP).
    EventSameParent,
    /// Image of a uniformly drawn other document.
    ContextRandomImage,
    /// Image drawn from the `top_fraction` most similar other documents.
    ContextSimilarImage { top_fraction: f64 },
}

fn yes() -> bool {
    true
}

/// One atomic tampering criterion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Constraint {
    SameGender,
    SharedCitizenship,
    SharedParent,
    DistanceBand { dmin_km: f64, dmax_km: f64 },
}

impl Constraint {
    /// Whether `candidate` satisfies this criterion relative to `original`.
    /// Criteria that do not apply to the records' attributes fail.
    pub fn holds(&self, original: &EntityRecord, candidate: &EntityRecord) -> bool {
        match self {
            Constraint::SameGender => match (original.person(), candidate.person()) {
                (Some(a), Some(b)) => a.gender == b.gender,
                _ => false,
            },
            Constraint::SharedCitizenship => match (original.person(), candidate.person()) {
                (Some(a), Some(b)) => !a.citizenship.is_disjoint(&b.citizenship),
                _ => false,
            },
            Constraint::SharedParent => {
                match (original.attrs.parent_classes(), candidate.attrs.parent_classes()) {
                    (Some(a), Some(b)) => !a.is_disjoint(b),
                    _ => false,
                }
            }
            Constraint::DistanceBand { dmin_km, dmax_km } => {
                match (original.location(), candidate.location()) {
                    (Some(a), Some(b)) => {
                        let d = great_circle_km(a.coordinates, b.coordinates);
                        *dmin_km <= d && d <= *dmax_km
                    }
                    _ => false,
                }
            }
        }
    }
}

impl TamperStrategy {
    /// Location bands used for the coarse-to-fine spatial experiments.
    pub const GCD_BANDS_KM: [(f64, f64); 3] = [(25.0, 200.0), (200.0, 750.0), (750.0, 2500.0)];

    pub fn validate(self) -> Result<Self, TamperError> {
        match self {
            TamperStrategy::LocationGcdBand {
                dmin_km, dmax_km, ..
            } if !(dmin_km > 0.0 && dmin_km < dmax_km && dmax_km.is_finite()) => {
                Err(TamperError::InvalidStrategy(format!(
                    "distance band requires 0 < dmin < dmax, got ({dmin_km}, {dmax_km})"
                )))
            }
            TamperStrategy::ContextSimilarImage { top_fraction }
                if !(top_fraction > 0.0 && top_fraction < 1.0) =>
            {
                Err(TamperError::InvalidStrategy(format!(
                    "top_fraction must be in (0, 1), got {top_fraction}"
                )))
            }
            s => Ok(s),
        }
    }

    pub fn target(&self) -> MeasureKind {
        match self {
            TamperStrategy::PersonRandom
            | TamperStrategy::PersonSameGender
            | TamperStrategy::PersonSameCitizenship
            | TamperStrategy::PersonSameBoth => MeasureKind::Person,
            TamperStrategy::LocationRandom | TamperStrategy::LocationGcdBand { .. } => {
                MeasureKind::Location
            }
            TamperStrategy::EventRandom | TamperStrategy::EventSameParent => MeasureKind::Event,
            TamperStrategy::ContextRandomImage | TamperStrategy::ContextSimilarImage { .. } => {
                MeasureKind::Context
            }
        }
    }

    pub fn entity_type(&self) -> Option<EntityType> {
        self.target().entity_type()
    }

    pub fn constraints(&self) -> Vec<Constraint> {
        match *self {
            TamperStrategy::PersonSameGender => vec![Constraint::SameGender],
            TamperStrategy::PersonSameCitizenship => vec![Constraint::SharedCitizenship],
            TamperStrategy::PersonSameBoth => {
                vec![Constraint::SameGender, Constraint::SharedCitizenship]
            }
            TamperStrategy::LocationGcdBand {
                dmin_km,
                dmax_km,
                require_shared_parent,
            } => {
                let mut c = Vec::with_capacity(2);
                if require_shared_parent {
                    c.push(Constraint::SharedParent);
                }
                c.push(Constraint::DistanceBand { dmin_km, dmax_km });
                c
            }
            TamperStrategy::EventSameParent => vec![Constraint::SharedParent],
            _ => Vec::new(),
        }
    }

    /// Parses a command-line strategy name. Band limits and the similar-image
    /// fraction come from separate options.
    pub fn from_name(
        name: &str,
        target: MeasureKind,
        band: Option<(f64, f64)>,
        require_shared_parent: bool,
        top_fraction: Option<f64>,
    ) -> Result<Self, TamperError> {
        let s = match (target, name.to_ascii_lowercase().as_str()) {
            (MeasureKind::Person, "random") => TamperStrategy::PersonRandom,
            (MeasureKind::Person, "psg") => TamperStrategy::PersonSameGender,
            (MeasureKind::Person, "psc") => TamperStrategy::PersonSameCitizenship,
            (MeasureKind::Person, "pscg") => TamperStrategy::PersonSameBoth,
            (MeasureKind::Location, "random") => TamperStrategy::LocationRandom,
            (MeasureKind::Location, "gcd") => {
                let (dmin_km, dmax_km) = band.ok_or_else(|| {
                    TamperError::InvalidStrategy("gcd requires --dmin and --dmax".into())
                })?;
                TamperStrategy::LocationGcdBand {
                    dmin_km,
                    dmax_km,
                    require_shared_parent,
                }
            }
            (MeasureKind::Event, "random") => TamperStrategy::EventRandom,
            (MeasureKind::Event, "esp") => TamperStrategy::EventSameParent,
            (MeasureKind::Context, "random") => TamperStrategy::ContextRandomImage,
            (MeasureKind::Context, "similar") => TamperStrategy::ContextSimilarImage {
                top_fraction: top_fraction.ok_or_else(|| {
                    TamperError::InvalidStrategy("similar requires --top-fraction".into())
                })?,
            },
            (t, n) => {
                return Err(TamperError::InvalidStrategy(format!(
                    "no strategy {n:?} for {t}"
                )))
            }
        };
        s.validate()
    }

    /// Short label in the style of result tables, e.g. `PsCG` or `GCD(25,200)`.
    pub fn label(&self) -> String {
        match self {
            TamperStrategy::PersonRandom
            | TamperStrategy::LocationRandom
            | TamperStrategy::EventRandom
            | TamperStrategy::ContextRandomImage => "Random".into(),
            TamperStrategy::PersonSameGender => "PsG".into(),
            TamperStrategy::PersonSameCitizenship => "PsC".into(),
            TamperStrategy::PersonSameBoth => "PsCG".into(),
            TamperStrategy::LocationGcdBand {
                dmin_km,
                dmax_km,
                require_shared_parent,
            } => {
                let base = format!("GCD({dmin_km},{dmax_km})");
                if *require_shared_parent {
                    base
                } else {
                    format!("{base}-noparent")
                }
            }
            TamperStrategy::EventSameParent => "EsP".into(),
            TamperStrategy::ContextSimilarImage { top_fraction } => {
                format!("Similar-top{}%", top_fraction * 100.0)
            }
        }
    }
}

impl fmt::Display for TamperStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.target(), self.label())
    }
}
