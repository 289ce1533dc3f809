use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::SimError;
use crate::types::Marker;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhaseLabel {
    Baseline,
    Task,
    Rest,
}

impl PhaseLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            PhaseLabel::Baseline => "baseline",
            PhaseLabel::Task => "task",
            PhaseLabel::Rest => "rest",
        }
    }
}

impl FromStr for PhaseLabel {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "baseline" => Ok(PhaseLabel::Baseline),
            "task" => Ok(PhaseLabel::Task),
            "rest" => Ok(PhaseLabel::Rest),
            other => Err(SimError::BadPhaseSpec(other.to_string())),
        }
    }
}

impl fmt::Display for PhaseLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseSpec {
    pub label: PhaseLabel,
    pub duration_s: f64,
}

impl PhaseSpec {
    pub fn new(label: PhaseLabel, duration_s: f64) -> Self {
        PhaseSpec { label, duration_s }
    }
}

/// A phase placed on the session clock.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhaseWindow {
    pub label: PhaseLabel,
    pub start_s: f64,
    pub end_s: f64,
}

impl PhaseWindow {
    pub fn contains(&self, t_s: f64) -> bool {
        t_s >= self.start_s && t_s < self.end_s
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProtocolTimeline {
    phases: Vec<PhaseSpec>,
    windows: Vec<PhaseWindow>,
}

impl ProtocolTimeline {
    pub fn new(phases: Vec<PhaseSpec>) -> Result<Self, SimError> {
        if phases.is_empty() {
            return Err(SimError::EmptyProtocol);
        }
        let mut windows = Vec::with_capacity(phases.len());
        let mut t = 0.0;
        for (index, p) in phases.iter().enumerate() {
            if !(p.duration_s > 0.0 && p.duration_s.is_finite()) {
                return Err(SimError::NonPositiveDuration { index, duration_s: p.duration_s });
            }
            windows.push(PhaseWindow { label: p.label, start_s: t, end_s: t + p.duration_s });
            t += p.duration_s;
        }
        Ok(ProtocolTimeline { phases, windows })
    }

    pub fn phases(&self) -> &[PhaseSpec] {
        &self.phases
    }

    pub fn windows(&self) -> &[PhaseWindow] {
        &self.windows
    }

    pub fn total_duration_s(&self) -> f64 {
        self.windows.last().map_or(0.0, |w| w.end_s)
    }

    /// Times where one phase ends and the next begins.
    pub fn boundaries(&self) -> Vec<f64> {
        self.windows.iter().skip(1).map(|w| w.start_s).collect()
    }

    pub fn windows_of(&self, label: PhaseLabel) -> impl Iterator<Item = &PhaseWindow> {
        self.windows.iter().filter(move |w| w.label == label)
    }

    /// One marker at the start of every phase.
    pub fn markers(&self) -> Vec<Marker> {
        self.windows.iter().map(|w| Marker::new(w.label.as_str(), w.start_s)).collect()
    }

    pub fn phase_at(&self, t_s: f64) -> Option<PhaseLabel> {
        self.windows.iter().find(|w| w.contains(t_s)).map(|w| w.label)
    }
}

impl Default for ProtocolTimeline {
    /// 20 s baseline rest, 2 min task, 1 min recovery.
    fn default() -> Self {
        ProtocolTimeline::new(vec![
            PhaseSpec::new(PhaseLabel::Baseline, 20.0),
            PhaseSpec::new(PhaseLabel::Task, 120.0),
            PhaseSpec::new(PhaseLabel::Rest, 60.0),
        ])
        .unwrap()
    }
}

/// Parses `baseline:20,task:120,rest:60`.
impl FromStr for ProtocolTimeline {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let phases = s
            .split(',')
            .filter(|p| !p.trim().is_empty())
            .map(|part| {
                let (label, dur) = part.split_once(':').ok_or_else(|| SimError::BadPhaseSpec(part.to_string()))?;
                let duration_s = dur.trim().parse::<f64>().map_err(|_| SimError::BadPhaseSpec(part.to_string()))?;
                Ok(PhaseSpec::new(label.parse()?, duration_s))
            })
            .collect::<Result<Vec<_>, SimError>>()?;
        ProtocolTimeline::new(phases)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_protocol() {
        let t = ProtocolTimeline::default();
        assert_eq!(t.total_duration_s(), 200.0);
        assert_eq!(t.boundaries(), vec![20.0, 140.0]);
        assert_eq!(t.phase_at(19.99), Some(PhaseLabel::Baseline));
        assert_eq!(t.phase_at(20.0), Some(PhaseLabel::Task));
        assert_eq!(t.phase_at(200.0), None);
    }

    #[test]
    fn single_phase() {
        let t = ProtocolTimeline::new(vec![PhaseSpec::new(PhaseLabel::Baseline, 1.0)]).unwrap();
        assert_eq!(t.total_duration_s(), 1.0);
        assert_eq!(t.phases().len(), 1);
        assert!(t.boundaries().is_empty());
    }

    #[test]
    fn rejects_degenerate() {
        assert_eq!(ProtocolTimeline::new(vec![]), Err(SimError::EmptyProtocol));
        assert!(matches!(
            ProtocolTimeline::new(vec![PhaseSpec::new(PhaseLabel::Task, 0.0)]),
            Err(SimError::NonPositiveDuration { index: 0, .. })
        ));
    }

    #[test]
    fn parses_cli_form() {
        let t: ProtocolTimeline = "baseline:20,task:120,rest:60".parse().unwrap();
        assert_eq!(t, ProtocolTimeline::default());
        assert!("baseline:20,nap:5".parse::<ProtocolTimeline>().is_err());
        assert!("baseline".parse::<ProtocolTimeline>().is_err());
        assert!("task:-3".parse::<ProtocolTimeline>().is_err());
    }
}
