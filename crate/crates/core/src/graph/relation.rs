use std::fmt;

use serde::{Deserialize, Serialize};

use crate::corpus::EntityKind;
use crate::error::{Error, Result};

/// Edge types. Asymmetric relations come with an explicit inverse so that
/// message passing reaches both endpoints; `DescSimilar` is symmetric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    TitleTransition,
    TitleTransitionInv,
    CompanyTransition,
    CompanyTransitionInv,
    DescSimilar,
    WorkedAt,
    WorkedAtInv,
    HasDescription,
    HasDescriptionInv,
}

impl Relation {
    pub const ALL: [Relation; 9] = [
        Relation::TitleTransition,
        Relation::TitleTransitionInv,
        Relation::CompanyTransition,
        Relation::CompanyTransitionInv,
        Relation::DescSimilar,
        Relation::WorkedAt,
        Relation::WorkedAtInv,
        Relation::HasDescription,
        Relation::HasDescriptionInv,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Relation::TitleTransition => "title_transition",
            Relation::TitleTransitionInv => "title_transition_inv",
            Relation::CompanyTransition => "company_transition",
            Relation::CompanyTransitionInv => "company_transition_inv",
            Relation::DescSimilar => "desc_similar",
            Relation::WorkedAt => "worked_at",
            Relation::WorkedAtInv => "worked_at_inv",
            Relation::HasDescription => "has_description",
            Relation::HasDescriptionInv => "has_description_inv",
        }
    }

    pub fn parse(s: &str) -> Result<Relation> {
        Relation::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown relation `{s}`")))
    }

    /// The inverse of a forward asymmetric relation.
    pub fn inverse(self) -> Option<Relation> {
        match self {
            Relation::TitleTransition => Some(Relation::TitleTransitionInv),
            Relation::CompanyTransition => Some(Relation::CompanyTransitionInv),
            Relation::WorkedAt => Some(Relation::WorkedAtInv),
            Relation::HasDescription => Some(Relation::HasDescriptionInv),
            _ => None,
        }
    }

    /// `(source kind, destination kind)`.
    pub fn endpoints(self) -> (EntityKind, EntityKind) {
        use EntityKind::*;
        match self {
            Relation::TitleTransition | Relation::TitleTransitionInv => (Title, Title),
            Relation::CompanyTransition | Relation::CompanyTransitionInv => (Company, Company),
            Relation::DescSimilar => (Description, Description),
            Relation::WorkedAt => (Title, Company),
            Relation::WorkedAtInv => (Company, Title),
            Relation::HasDescription => (Title, Description),
            Relation::HasDescriptionInv => (Description, Title),
        }
    }

    /// Relations whose messages include the job duration.
    pub fn carries_duration(self) -> bool {
        matches!(self, Relation::WorkedAt | Relation::WorkedAtInv)
    }

    pub fn layer(self) -> Layer {
        match self {
            Relation::TitleTransition | Relation::TitleTransitionInv => Layer::Title,
            Relation::CompanyTransition | Relation::CompanyTransitionInv => Layer::Company,
            Relation::DescSimilar => Layer::Description,
            _ => Layer::Cross,
        }
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Graph layers: three intra-layer graphs plus the cross-layer relations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layer {
    Title,
    Company,
    Description,
    Cross,
}

/// Which layers contribute edges to graph construction and message passing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSet {
    pub title: bool,
    pub company: bool,
    pub description: bool,
    pub cross: bool,
}

impl Default for LayerSet {
    fn default() -> Self {
        LayerSet::ALL
    }
}

impl LayerSet {
    pub const ALL: LayerSet = LayerSet {
        title: true,
        company: true,
        description: true,
        cross: true,
    };

    pub fn contains(&self, layer: Layer) -> bool {
        match layer {
            Layer::Title => self.title,
            Layer::Company => self.company,
            Layer::Description => self.description,
            Layer::Cross => self.cross,
        }
    }

    pub fn enables(&self, r: Relation) -> bool {
        self.contains(r.layer())
    }

    /// The seven graph-layer configurations of the layer ablation, in table order.
    pub fn ablation_rows() -> [(&'static str, LayerSet); 7] {
        let l = |title, company, description, cross| LayerSet {
            title,
            company,
            description,
            cross,
        };
        [
            ("JT", l(true, false, false, false)),
            ("C", l(false, true, false, false)),
            ("JD", l(false, false, true, false)),
            ("JT+C", l(true, true, false, false)),
            ("JT+JD", l(true, false, true, false)),
            ("JT+C+JD", l(true, true, true, false)),
            ("All", LayerSet::ALL),
        ]
    }
}
