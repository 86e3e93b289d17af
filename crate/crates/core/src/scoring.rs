//! Turn next-token probability mass over the score labels 0..4 into a
//! continuous similarity score: normalize the five masses and take the
//! probability-weighted average of the scores.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{
    validate_candidate_surface, EstimationMode, Gateway, GatewayError, ScoreDistribution,
};
use crate::prompt::{render_scoring_prompt, PromptError, PromptTemplate};

/// Token surfaces counted toward each score. Tokenizers differ on
/// whitespace attachment ("4" vs " 4"), so each score may own several
/// surfaces whose masses are summed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSurfaces {
    surfaces: BTreeMap<u8, Vec<String>>,
}

impl Default for ScoreSurfaces {
    fn default() -> Self {
        Self {
            surfaces: (0u8..5).map(|s| (s, vec![s.to_string()])).collect(),
        }
    }
}

impl ScoreSurfaces {
    pub fn new(surfaces: BTreeMap<u8, Vec<String>>) -> Result<Self, ScoringError> {
        let this = Self { surfaces };
        this.validate()?;
        Ok(this)
    }

    pub fn validate(&self) -> Result<(), ScoringError> {
        let mut seen = BTreeMap::new();
        for score in 0u8..5 {
            let list = self
                .surfaces
                .get(&score)
                .filter(|l| !l.is_empty())
                .ok_or_else(|| {
                    ScoringError::Config(format!("score {score} has no candidate surfaces"))
                })?;
            for surface in list {
                validate_candidate_surface(surface)?;
                if let Some(other) = seen.insert(surface.clone(), score) {
                    return Err(ScoringError::Config(format!(
                        "surface {surface:?} is claimed by scores {other} and {score}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Every surface, in score order; the candidate list sent to the
    /// backend.
    pub fn all_surfaces(&self) -> Vec<String> {
        (0u8..5)
            .flat_map(|s| self.surfaces.get(&s).cloned().unwrap_or_default())
            .collect()
    }

    /// Fold per-surface masses into per-score masses.
    pub fn mass_per_score(&self, masses: &BTreeMap<String, f64>) -> [f64; 5] {
        let mut out = [0.0; 5];
        for (score, list) in &self.surfaces {
            for surface in list {
                out[*score as usize] += masses.get(surface).copied().unwrap_or(0.0);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoringConfig {
    pub surfaces: ScoreSurfaces,
    /// Minimum total unnormalized mass for a pair to be scorable; below
    /// this the model's continuation was not a score at all.
    pub mass_floor: f64,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        Self {
            surfaces: ScoreSurfaces::default(),
            mass_floor: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScoringError {
    #[error("unscorable pair: total score mass {total:e} is below the floor {floor:e}")]
    Unscorable { total: f64, floor: f64 },
    #[error("invalid mass for score {score}: {mass}")]
    InvalidMass { score: u8, mass: f64 },
    #[error("scoring configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

impl From<ScoringError> for String {
    fn from(e: ScoringError) -> String {
        e.to_string()
    }
}

/// A pair with its model-derived similarity score and provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPair {
    pub reference: String,
    pub hypothesis: String,
    pub language: String,
    /// Expectation of `distribution` over the scores 0..4.
    pub score: f64,
    pub distribution: ScoreDistribution,
    /// Generation template that produced the pair, or "external" for
    /// pairs that arrived from outside the pipeline.
    pub template_id: String,
    pub estimation_mode: EstimationMode,
    /// Total unnormalized mass the model put on the score labels; kept
    /// for audit.
    pub raw_mass_total: f64,
}

/// Normalize raw masses over the five scores and return the weighted
/// average score together with the normalized distribution.
///
/// The score is `sum(i * raw[i]) / sum(raw)`, a proper expectation on
/// [0, 4] regardless of how much vocabulary mass fell outside the five
/// labels. Scaling all masses by a positive constant leaves the result
/// unchanged.
pub fn expected_score(
    raw: [f64; 5],
    mass_floor: f64,
) -> Result<(f64, ScoreDistribution), ScoringError> {
    for (score, mass) in raw.iter().enumerate() {
        if !mass.is_finite() || *mass < 0.0 {
            return Err(ScoringError::InvalidMass {
                score: score as u8,
                mass: *mass,
            });
        }
    }
    let total: f64 = raw.iter().sum();
    if !(total > 0.0) || total < mass_floor {
        return Err(ScoringError::Unscorable {
            total,
            floor: mass_floor,
        });
    }
    let mut normalized = [0.0; 5];
    let mut score = 0.0;
    for i in 0..5 {
        normalized[i] = raw[i] / total;
        score += i as f64 * normalized[i];
    }
    let distribution = ScoreDistribution::normalized(normalized)?;
    Ok((score, distribution))
}

/// Render the scoring prompt for a pair, query the gateway for next-token
/// mass over the score surfaces, and fold the result into a [`ScoredPair`].
/// The pair's `template_id` starts as "external"; pipeline callers
/// overwrite it with the generation template that produced the pair.
pub fn score_pair(
    reference: &str,
    hypothesis: &str,
    language: &str,
    scoring_template: &PromptTemplate,
    gateway: &Gateway,
    cfg: &ScoringConfig,
) -> Result<ScoredPair, ScoringError> {
    let prompt = render_scoring_prompt(scoring_template, reference, hypothesis)?;
    let (masses, estimation_mode) =
        gateway.next_token_masses(&prompt, &cfg.surfaces.all_surfaces())?;
    let raw = cfg.surfaces.mass_per_score(&masses);
    let raw_mass_total: f64 = raw.iter().sum();
    let (score, distribution) = expected_score(raw, cfg.mass_floor)?;
    Ok(ScoredPair {
        reference: reference.to_string(),
        hypothesis: hypothesis.to_string(),
        language: language.to_string(),
        score,
        distribution,
        template_id: "external".to_string(),
        estimation_mode,
        raw_mass_total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::scripted::{ScriptedBackend, ScriptedFixture};
    use crate::gateway::BackendConfig;
    use crate::prompt::{default_fewshot_examples, default_scoring_template};

    #[test]
    fn point_mass_returns_the_integer_score_exactly() {
        let (score, dist) = expected_score([0.0, 0.0, 0.0, 0.0, 0.5], 1e-6).unwrap();
        assert_eq!(score, 4.0);
        assert_eq!(dist.get(4), 1.0);
        assert!(dist.is_normalized());

        let (score, _) = expected_score([0.7, 0.0, 0.0, 0.0, 0.0], 1e-6).unwrap();
        assert_eq!(score, 0.0);
    }

    #[test]
    fn uniform_masses_return_the_midpoint_exactly() {
        let (score, dist) = expected_score([0.2; 5], 1e-6).unwrap();
        assert_eq!(score, 2.0);
        assert!((dist.total_mass() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn mixed_case_matches_hand_computation() {
        // (0*0.1 + 2*0.2 + 3*0.3 + 4*0.4) / 1.0 = 2.9
        let (score, _) = expected_score([0.1, 0.0, 0.2, 0.3, 0.4], 1e-6).unwrap();
        assert!((score - 2.9).abs() < 1e-12, "got {score}");
    }

    #[test]
    fn scaling_invariance() {
        let raw = [0.03, 0.01, 0.10, 0.25, 0.11];
        let (base, _) = expected_score(raw, 0.0).unwrap();
        for c in [0.1, 2.0, 1e-3, 1e6] {
            let scaled = raw.map(|m| m * c);
            let (score, _) = expected_score(scaled, 0.0).unwrap();
            assert!((score - base).abs() < 1e-12, "c={c}: {score} vs {base}");
        }
    }

    #[test]
    fn zero_and_subfloor_mass_is_unscorable() {
        assert!(matches!(
            expected_score([0.0; 5], 1e-6),
            Err(ScoringError::Unscorable { .. })
        ));
        assert!(matches!(
            expected_score([1e-9, 0.0, 0.0, 0.0, 0.0], 1e-6),
            Err(ScoringError::Unscorable { .. })
        ));
    }

    #[test]
    fn negative_or_nan_mass_rejected() {
        assert!(matches!(
            expected_score([-0.1, 0.2, 0.2, 0.2, 0.2], 0.0),
            Err(ScoringError::InvalidMass { score: 0, .. })
        ));
        assert!(matches!(
            expected_score([f64::NAN, 0.2, 0.2, 0.2, 0.2], 0.0),
            Err(ScoringError::InvalidMass { .. })
        ));
    }

    #[test]
    fn surfaces_fold_masses_per_score() {
        let surfaces = ScoreSurfaces::new(BTreeMap::from([
            (0, vec!["0".to_string()]),
            (1, vec!["1".to_string()]),
            (2, vec!["2".to_string()]),
            (3, vec!["3".to_string()]),
            (4, vec!["4".to_string(), " 4".to_string()]),
        ]))
        .unwrap();
        let masses = BTreeMap::from([
            ("4".to_string(), 0.5),
            (" 4".to_string(), 0.25),
            ("3".to_string(), 0.1),
        ]);
        let folded = surfaces.mass_per_score(&masses);
        assert_eq!(folded, [0.0, 0.0, 0.0, 0.1, 0.75]);
        assert_eq!(surfaces.all_surfaces().len(), 6);
    }

    #[test]
    fn surfaces_reject_duplicates_and_gaps() {
        let mut map: BTreeMap<u8, Vec<String>> =
            (0u8..5).map(|s| (s, vec![s.to_string()])).collect();
        map.get_mut(&3).unwrap().push("4".to_string());
        assert!(ScoreSurfaces::new(map).is_err());

        let mut map: BTreeMap<u8, Vec<String>> =
            (0u8..4).map(|s| (s, vec![s.to_string()])).collect();
        map.insert(4, Vec::new());
        assert!(ScoreSurfaces::new(map).is_err());
    }

    fn scoring_setup(
        fixture_masses: [f64; 5],
    ) -> (PromptTemplate, Gateway, ScoringConfig, String) {
        let template = default_scoring_template()
            .into_template(&default_fewshot_examples())
            .unwrap();
        let prompt = render_scoring_prompt(&template, "Same sentence.", "Same sentence.").unwrap();
        let entries: Vec<(String, f64)> = fixture_masses
            .iter()
            .enumerate()
            .filter(|(_, m)| **m > 0.0)
            .map(|(i, m)| (i.to_string(), m.ln()))
            .collect();
        let backend = ScriptedBackend::new([ScriptedFixture::logprobs(&prompt, entries)]);
        let gateway = Gateway::new(Box::new(backend), &BackendConfig::default()).unwrap();
        (template, gateway, ScoringConfig::default(), prompt)
    }

    #[test]
    fn score_pair_end_to_end_with_scripted_backend() {
        // Mass 0.9 on "4" and 0.05 on "3": (3*0.05 + 4*0.9) / 0.95.
        let (template, gateway, cfg, _) = scoring_setup([0.0, 0.0, 0.0, 0.05, 0.9]);
        let pair = score_pair(
            "Same sentence.",
            "Same sentence.",
            "en",
            &template,
            &gateway,
            &cfg,
        )
        .unwrap();
        assert!((pair.score - 3.9473684210526314).abs() < 1e-9, "got {}", pair.score);
        assert!((pair.raw_mass_total - 0.95).abs() < 1e-9);
        assert_eq!(pair.estimation_mode, EstimationMode::Logprob);
        assert_eq!(pair.template_id, "external");
        assert!(pair.distribution.is_normalized());

        // Determinism: same inputs, same result.
        let again = score_pair(
            "Same sentence.",
            "Same sentence.",
            "en",
            &template,
            &gateway,
            &cfg,
        )
        .unwrap();
        assert_eq!(pair, again);
    }

    #[test]
    fn score_pair_all_mass_on_zero() {
        let (template, gateway, cfg, _) = scoring_setup([0.97, 0.0, 0.0, 0.0, 0.0]);
        let pair = score_pair(
            "Same sentence.",
            "Same sentence.",
            "en",
            &template,
            &gateway,
            &cfg,
        )
        .unwrap();
        assert_eq!(pair.score, 0.0);
    }

    #[test]
    fn score_pair_zero_mass_is_unscorable() {
        let template = default_scoring_template()
            .into_template(&default_fewshot_examples())
            .unwrap();
        let prompt = render_scoring_prompt(&template, "A pair.", "B pair.").unwrap();
        // Fixture exists but has no mass on any score surface.
        let backend = ScriptedBackend::new([ScriptedFixture::logprobs(
            &prompt,
            [("x".to_string(), -0.1)],
        )]);
        let gateway = Gateway::new(Box::new(backend), &BackendConfig::default()).unwrap();
        assert!(matches!(
            score_pair("A pair.", "B pair.", "en", &template, &gateway, &ScoringConfig::default()),
            Err(ScoringError::Unscorable { .. })
        ));
    }
}
