//! Rule-based detector selection for the per-resident service.
//!
//! A direct transcription of the published selection algorithm: a critical
//! health condition picks a convolutional detector sized to the available
//! resources, everyone else gets LSTM or InceptionTime depending on
//! resources alone. The source algorithm spells out separate branches for
//! residents over 80 and for everyone else even though both pick
//! identically; the rule table preserves that redundancy instead of
//! simplifying it away, and [`selection_table`] makes it visible.

use serde::{Deserialize, Serialize};

use crate::data::{
    AgeGroup, FdaasQos, HealthCondition, ResidentContext, ResourceAvailability,
};
use crate::models::Architecture;

/// One row of the selection policy: the context fields it requires (`None`
/// matches anything), the architecture it picks, and the wording logged as
/// rationale. Rules are evaluated in order, first match wins, which is what
/// lets the critical rows take precedence over the age rows.
#[derive(Debug, Clone)]
pub struct SelectionRule {
    pub health_condition: Option<HealthCondition>,
    pub age_group: Option<AgeGroup>,
    pub resource_availability: Option<ResourceAvailability>,
    pub architecture: Architecture,
    pub rationale: &'static str,
}

impl SelectionRule {
    pub fn matches(&self, context: &ResidentContext) -> bool {
        self.health_condition
            .map_or(true, |h| h == context.health_condition)
            && self.age_group.map_or(true, |a| a == context.age_group)
            && self
                .resource_availability
                .map_or(true, |r| r == context.resource_availability)
    }
}

/// The selection policy in evaluation order.
pub const RULES: [SelectionRule; 6] = [
    SelectionRule {
        health_condition: Some(HealthCondition::Critical),
        age_group: None,
        resource_availability: Some(ResourceAvailability::Limited),
        architecture: Architecture::Fcn,
        rationale: "critical condition, limited resources",
    },
    SelectionRule {
        health_condition: Some(HealthCondition::Critical),
        age_group: None,
        resource_availability: Some(ResourceAvailability::Ample),
        architecture: Architecture::ResNet,
        rationale: "critical condition, ample resources",
    },
    SelectionRule {
        health_condition: None,
        age_group: Some(AgeGroup::Elderly80Plus),
        resource_availability: Some(ResourceAvailability::Limited),
        architecture: Architecture::Lstm,
        rationale: "stable condition, 80 or older, limited resources",
    },
    SelectionRule {
        health_condition: None,
        age_group: Some(AgeGroup::Elderly80Plus),
        resource_availability: Some(ResourceAvailability::Ample),
        architecture: Architecture::InceptionTime,
        rationale: "stable condition, 80 or older, ample resources",
    },
    SelectionRule {
        health_condition: None,
        age_group: None,
        resource_availability: Some(ResourceAvailability::Limited),
        architecture: Architecture::Lstm,
        rationale: "stable condition, limited resources",
    },
    SelectionRule {
        health_condition: None,
        age_group: None,
        resource_availability: Some(ResourceAvailability::Ample),
        architecture: Architecture::InceptionTime,
        rationale: "stable condition, ample resources",
    },
];

/// The record kept for every selection. QoS targets are echoed verbatim so
/// alert logs can show what the resident was promised; the rules themselves
/// never consult them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptDecision {
    pub context: ResidentContext,
    pub architecture: Architecture,
    pub rationale: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub qos: Option<FdaasQos>,
}

/// Picks the detector architecture for one resident context.
pub fn select_model(context: ResidentContext, qos: Option<FdaasQos>) -> PromptDecision {
    let rule = RULES
        .iter()
        .find(|r| r.matches(&context))
        .expect("selection rules are total over ResidentContext");
    PromptDecision {
        context,
        architecture: rule.architecture,
        rationale: rule.rationale.to_string(),
        qos,
    }
}

/// Every context combination with its selection, in a fixed order: health
/// condition varies slowest, then age group, then resources.
pub fn selection_table() -> Vec<PromptDecision> {
    let mut rows = Vec::with_capacity(8);
    for health in [HealthCondition::Critical, HealthCondition::Stable] {
        for age in [AgeGroup::Elderly80Plus, AgeGroup::Other] {
            for resources in [ResourceAvailability::Limited, ResourceAvailability::Ample] {
                rows.push(select_model(
                    ResidentContext::new(age, health, resources),
                    None,
                ));
            }
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Literal nested-if transcription of the published algorithm, kept
    /// deliberately separate from the rule table it checks.
    fn algorithm_one(context: &ResidentContext) -> Architecture {
        if context.health_condition == HealthCondition::Critical {
            if context.resource_availability == ResourceAvailability::Limited {
                Architecture::Fcn
            } else {
                Architecture::ResNet
            }
        } else if context.age_group == AgeGroup::Elderly80Plus {
            if context.resource_availability == ResourceAvailability::Limited {
                Architecture::Lstm
            } else {
                Architecture::InceptionTime
            }
        } else if context.resource_availability == ResourceAvailability::Limited {
            Architecture::Lstm
        } else {
            Architecture::InceptionTime
        }
    }

    fn all_contexts() -> Vec<ResidentContext> {
        let mut out = Vec::new();
        for age in [AgeGroup::Elderly80Plus, AgeGroup::Other] {
            for health in [HealthCondition::Critical, HealthCondition::Stable] {
                for resources in [ResourceAvailability::Limited, ResourceAvailability::Ample] {
                    out.push(ResidentContext::new(age, health, resources));
                }
            }
        }
        out
    }

    #[test]
    fn matches_the_hand_transcribed_algorithm_everywhere() {
        for context in all_contexts() {
            let decision = select_model(context, None);
            assert_eq!(
                decision.architecture,
                algorithm_one(&context),
                "context {context:?}"
            );
        }
    }

    #[test]
    fn paper_examples_hold() {
        let cases = [
            (
                ResidentContext::new(
                    AgeGroup::Elderly80Plus,
                    HealthCondition::Critical,
                    ResourceAvailability::Limited,
                ),
                Architecture::Fcn,
            ),
            (
                ResidentContext::new(
                    AgeGroup::Elderly80Plus,
                    HealthCondition::Stable,
                    ResourceAvailability::Ample,
                ),
                Architecture::InceptionTime,
            ),
            (
                ResidentContext::new(
                    AgeGroup::Other,
                    HealthCondition::Stable,
                    ResourceAvailability::Limited,
                ),
                Architecture::Lstm,
            ),
        ];
        for (context, expected) in cases {
            assert_eq!(select_model(context, None).architecture, expected);
        }
    }

    #[test]
    fn table_is_total_and_structured() {
        let table = selection_table();
        assert_eq!(table.len(), 8);
        for row in &table {
            if row.context.health_condition == HealthCondition::Critical {
                assert!(
                    matches!(row.architecture, Architecture::Fcn | Architecture::ResNet),
                    "critical context selected {}",
                    row.architecture
                );
            }
        }
    }

    #[test]
    fn age_branch_is_observationally_redundant() {
        for resources in [ResourceAvailability::Limited, ResourceAvailability::Ample] {
            let elderly = select_model(
                ResidentContext::new(AgeGroup::Elderly80Plus, HealthCondition::Stable, resources),
                None,
            );
            let other = select_model(
                ResidentContext::new(AgeGroup::Other, HealthCondition::Stable, resources),
                None,
            );
            assert_eq!(elderly.architecture, other.architecture);
            assert_ne!(elderly.rationale, other.rationale);
        }
    }

    #[test]
    fn exactly_one_first_match_and_qos_echo() {
        for context in all_contexts() {
            let hits = RULES.iter().filter(|r| r.matches(&context)).count();
            assert!(hits >= 1, "no rule for {context:?}");
        }
        let qos = FdaasQos::default();
        let decision = select_model(
            ResidentContext::new(
                AgeGroup::Other,
                HealthCondition::Critical,
                ResourceAvailability::Ample,
            ),
            Some(qos.clone()),
        );
        assert_eq!(decision.qos, Some(qos));
        assert_eq!(decision.architecture, Architecture::ResNet);
        assert!(select_model(decision.context, None).qos.is_none());
    }
}
