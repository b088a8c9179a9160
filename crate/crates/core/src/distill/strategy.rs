use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Group;

/// How the student is supervised besides the ground-truth labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// Labels only.
    NoDistill,
    /// Student encoder output matched to the teacher's peak-frame embedding.
    NonseqEmbed,
    /// Each segment embedding matched to the teacher's averaged frame
    /// embeddings for that segment.
    SeqEncoder,
    /// Student aggregator output matched to the teacher's aggregate embedding.
    SeqAggregator,
    /// Teacher class probabilities as a second classification target.
    SoftLabel,
    /// Auxiliary decoder reconstructs the privileged features.
    Multitask,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// One input vector per sample (segments concatenated).
    NonSequential,
    /// Encoder per segment followed by an aggregator.
    Sequential,
}

impl Strategy {
    pub const ALL: [Strategy; 6] = [
        Strategy::NoDistill,
        Strategy::NonseqEmbed,
        Strategy::SeqEncoder,
        Strategy::SeqAggregator,
        Strategy::SoftLabel,
        Strategy::Multitask,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::NoDistill => "no-distill",
            Strategy::NonseqEmbed => "nonseq-embed",
            Strategy::SeqEncoder => "seq-encoder",
            Strategy::SeqAggregator => "seq-aggregator",
            Strategy::SoftLabel => "soft-label",
            Strategy::Multitask => "multitask",
        }
    }

    /// Student architecture the strategy is tied to, if any.
    pub fn required_mode(self) -> Option<Mode> {
        match self {
            Strategy::NonseqEmbed => Some(Mode::NonSequential),
            Strategy::SeqEncoder | Strategy::SeqAggregator => Some(Mode::Sequential),
            Strategy::NoDistill | Strategy::SoftLabel | Strategy::Multitask => None,
        }
    }

    /// Whether targets come from a trained teacher.
    pub fn needs_teacher(self) -> bool {
        !matches!(self, Strategy::NoDistill | Strategy::Multitask)
    }

    /// Groups whose gradient mixes the label loss with the privileged loss.
    /// The head is never among them.
    pub fn routed_groups(self) -> BTreeSet<Group> {
        match self {
            Strategy::NoDistill => BTreeSet::new(),
            Strategy::NonseqEmbed | Strategy::SeqEncoder => [Group::Encoder].into(),
            Strategy::SeqAggregator => [Group::Encoder, Group::Aggregator].into(),
            Strategy::SoftLabel => [Group::Encoder, Group::Aggregator].into(),
            Strategy::Multitask => [Group::Encoder, Group::Aggregator, Group::Decoder].into(),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::config("strategy", format!("unknown strategy {s:?}")))
    }
}

/// Imitation weight and the groups it applies to.
#[derive(Debug, Clone, PartialEq)]
pub struct MixSpec {
    alpha: f64,
    routed: BTreeSet<Group>,
}

impl MixSpec {
    pub fn new(alpha: f64, routed: BTreeSet<Group>) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::contract(format!("alpha {alpha} outside [0, 1]")));
        }
        if routed.contains(&Group::Head) {
            return Err(Error::contract("the head group cannot receive the mixed gradient"));
        }
        Ok(Self { alpha, routed })
    }

    pub fn for_strategy(strategy: Strategy, alpha: f64) -> Result<Self> {
        Self::new(alpha, strategy.routed_groups())
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn routed(&self) -> &BTreeSet<Group> {
        &self.routed
    }

    pub fn routes(&self, group: Group) -> bool {
        self.routed.contains(&group)
    }
}
