use serde::{Deserialize, Serialize};

use super::SimError;
use crate::types::{ChannelId, DETECTORS_PER_GROUP, GROUPS};

pub const LONG_CHANNEL_DISTANCE_CM: f64 = 3.5;
pub const SHORT_CHANNEL_DISTANCE_CM: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelRole {
    Short,
    Long,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    Frontal,
    Parietal,
    Temporal,
    Occipital,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detector {
    pub channel: ChannelId,
    pub role: ChannelRole,
    pub distance_cm: f64,
}

/// One triangular sensor set: the emitter module with its short-channel detector,
/// flanked by two long-channel modules.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmitterGroup {
    pub group_id: u8,
    pub region: Region,
    /// Emitter position on the flattened cap, mm.
    pub emitter_mm: [f64; 2],
    pub detectors: [Detector; DETECTORS_PER_GROUP],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensorLayout {
    groups: Vec<EmitterGroup>,
}

impl SensorLayout {
    pub fn new(groups: Vec<EmitterGroup>) -> Result<Self, SimError> {
        let layout = SensorLayout { groups };
        layout.validate()?;
        Ok(layout)
    }

    /// Full head harness: eight sets, two per lobe, 35 mm long-channel spacing.
    /// Mux position 0 of every group is the short channel.
    pub fn harness() -> Self {
        let regions = [Region::Frontal, Region::Parietal, Region::Temporal, Region::Occipital];
        let groups = (0..GROUPS)
            .map(|g| {
                let detector = |mux: usize| {
                    let (role, distance_cm) = if mux == 0 {
                        (ChannelRole::Short, SHORT_CHANNEL_DISTANCE_CM)
                    } else {
                        (ChannelRole::Long, LONG_CHANNEL_DISTANCE_CM)
                    };
                    Detector { channel: ChannelId::from_parts(g, mux).unwrap(), role, distance_cm }
                };
                EmitterGroup {
                    group_id: g as u8,
                    region: regions[g / 2],
                    emitter_mm: [(g % 4) as f64 * 70.0, (g / 4) as f64 * 70.0],
                    detectors: [detector(0), detector(1), detector(2)],
                }
            })
            .collect();
        SensorLayout { groups }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: String| Err(SimError::InvalidLayout(msg));
        if self.groups.len() != GROUPS {
            return bad(format!("expected {GROUPS} groups, got {}", self.groups.len()));
        }
        let mut seen = [false; GROUPS * DETECTORS_PER_GROUP];
        for (i, g) in self.groups.iter().enumerate() {
            if g.group_id as usize != i {
                return bad(format!("group at index {i} has id {}", g.group_id));
            }
            let shorts = g.detectors.iter().filter(|d| d.role == ChannelRole::Short).count();
            if shorts != 1 {
                return bad(format!("group {i} has {shorts} short detectors"));
            }
            for d in &g.detectors {
                if d.channel.group() != i {
                    return bad(format!("{} wired to group {i}", d.channel));
                }
                if !(d.distance_cm > 0.0 && d.distance_cm.is_finite()) {
                    return bad(format!("{} has distance {}", d.channel, d.distance_cm));
                }
                if std::mem::replace(&mut seen[d.channel.index()], true) {
                    return bad(format!("{} appears twice", d.channel));
                }
            }
        }
        Ok(())
    }

    pub fn groups(&self) -> &[EmitterGroup] {
        &self.groups
    }

    pub fn detector(&self, channel: ChannelId) -> &Detector {
        self.groups[channel.group()]
            .detectors
            .iter()
            .find(|d| d.channel == channel)
            .expect("validated layout covers every channel")
    }

    pub fn region(&self, channel: ChannelId) -> Region {
        self.groups[channel.group()].region
    }

    pub fn channels_in(&self, region: Region) -> Vec<ChannelId> {
        ChannelId::all().filter(|&c| self.region(c) == region).collect()
    }

    pub fn short_channels(&self) -> Vec<ChannelId> {
        ChannelId::all().filter(|&c| self.detector(c).role == ChannelRole::Short).collect()
    }
}

impl Default for SensorLayout {
    fn default() -> Self {
        Self::harness()
    }
}
