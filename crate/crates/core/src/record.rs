//! Per-generation trajectory log of a run.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Result;
use crate::flow::Checkpoint;

/// One line of the trajectory log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub generation: u64,
    /// Objective evaluations consumed so far, this generation included.
    pub evaluations: u64,
    /// Best objective value seen so far; `null` in the log while none was finite.
    #[serde(serialize_with = "inf_as_null", deserialize_with = "null_as_inf")]
    pub best_f: f64,
    /// Mean of the finite objective values of this generation.
    pub mean_f: Option<f64>,
    /// KL penalty coefficient after this generation's adaptation.
    pub lambda: f64,
    /// Monte-Carlo KL between the flow before and after this generation's update.
    pub kl: f64,
    /// `0.5 log det(2πe Σ)` of the latent Gaussian after this generation's update.
    pub entropy: f64,
}

fn inf_as_null<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_some(v)
    } else {
        s.serialize_none()
    }
}

fn null_as_inf<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Budget,
    MaxGenerations,
    Converged,
    Diverged(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub generations: Vec<GenerationRecord>,
    pub best_x: Vec<f64>,
    pub best_f: f64,
    pub evaluations: u64,
    pub stop: StopReason,
    /// Search distribution at the end of the run.
    pub final_state: Checkpoint,
}

impl RunRecord {
    /// One JSON object per generation, newline-terminated.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for row in &self.generations {
            out.push_str(&serde_json::to_string(row)?);
            out.push('\n');
        }
        Ok(out)
    }

    /// Best-so-far values against evaluation counts.
    pub fn best_trace(&self) -> Vec<(u64, f64)> {
        self.generations.iter().map(|g| (g.evaluations, g.best_f)).collect()
    }
}

/// Parses a log written by [`RunRecord::to_jsonl`]; blank lines are skipped.
pub fn parse_jsonl(text: &str) -> Result<Vec<GenerationRecord>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn infinite_best_is_written_as_null() {
        let row = GenerationRecord {
            generation: 0,
            evaluations: 10,
            best_f: f64::INFINITY,
            mean_f: None,
            lambda: 1.0,
            kl: 0.0,
            entropy: 2.8,
        };
        let line = serde_json::to_string(&row).unwrap();
        assert!(line.contains("\"best_f\":null"));
        assert_eq!(parse_jsonl(&line).unwrap(), vec![row]);
    }
}
