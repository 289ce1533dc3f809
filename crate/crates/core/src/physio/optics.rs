use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SimError;
use crate::types::{ChannelId, Wavelength, CHANNELS};

const EXTINCTION_CSV: &str = include_str!("../../data/extinction.csv");
const DPF_TOML: &str = include_str!("../../data/dpf.toml");

/// Nominal TIA-output baseline level per wavelength at full emitter duty, V.
pub const NOMINAL_BASELINE_V: [f64; 2] = [0.12, 0.18];
/// Spread of optode coupling across channels, ± dB around the nominal level.
pub const COUPLING_SPREAD_DB: f64 = 1.4;
pub const MAX_CONDITION: f64 = 100.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Chromophore {
    HbO,
    HbR,
}

impl Chromophore {
    pub fn name(self) -> &'static str {
        match self {
            Chromophore::HbO => "HbO",
            Chromophore::HbR => "HbR",
        }
    }
}

#[derive(Debug, Deserialize)]
struct ExtinctionRow {
    chromophore: String,
    wavelength_nm: u32,
    #[serde(rename = "epsilon_cm_per_mM")]
    epsilon_cm_per_mm: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DpfCoefficients {
    pub a: f64,
    pub b: f64,
    pub g: f64,
    pub d: f64,
    pub e: f64,
    pub f: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DpfDomain {
    pub fit_range_nm: [f64; 2],
    pub accepted_range_nm: [f64; 2],
    pub age_range_years: [f64; 2],
}

/// Age- and wavelength-dependent differential pathlength factor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DpfModel {
    pub coefficients: DpfCoefficients,
    pub domain: DpfDomain,
}

impl DpfModel {
    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        toml::from_str(text).map_err(|e| SimError::Data(format!("dpf coefficients: {e}")))
    }

    pub fn evaluate(&self, age_years: f64, wavelength_nm: f64) -> Result<f64, SimError> {
        let [amin, amax] = self.domain.age_range_years;
        if !(age_years >= amin && age_years <= amax) {
            return Err(SimError::DpfAgeOutOfDomain(age_years));
        }
        let [lo, hi] = self.domain.accepted_range_nm;
        if !(wavelength_nm >= lo && wavelength_nm <= hi) {
            return Err(SimError::DpfWavelengthOutOfDomain(wavelength_nm));
        }
        let [fit_lo, fit_hi] = self.domain.fit_range_nm;
        let l = wavelength_nm.clamp(fit_lo, fit_hi);
        let c = &self.coefficients;
        Ok(c.a + c.b * age_years.powf(c.g) + c.d * l.powi(3) + c.e * l.powi(2) + c.f * l)
    }
}

/// Extinction coefficients (cm⁻¹·mM⁻¹, decadic), DPF model and per-channel baseline levels.
#[derive(Clone, Debug, PartialEq)]
pub struct OpticalTable {
    extinction: BTreeMap<(Chromophore, u32), f64>,
    pub dpf: DpfModel,
    /// TIA-output DC level per channel and wavelength at full duty, V.
    pub baseline_intensity_v: Vec<[f64; 2]>,
}

impl OpticalTable {
    /// The committed extinction table and DPF coefficients with default baselines.
    pub fn standard() -> Self {
        let extinction = parse_extinction(EXTINCTION_CSV.as_bytes()).expect("bundled extinction table");
        let dpf = DpfModel::from_toml(DPF_TOML).expect("bundled dpf coefficients");
        let table = OpticalTable { extinction, dpf, baseline_intensity_v: default_baseline_intensity() };
        table.validate().expect("bundled optical data is consistent");
        table
    }

    pub fn from_files(extinction_csv: &Path, dpf_toml: &Path) -> Result<Self, SimError> {
        let file = std::fs::File::open(extinction_csv)
            .map_err(|e| SimError::Data(format!("{}: {e}", extinction_csv.display())))?;
        let extinction = parse_extinction(file)?;
        let text =
            std::fs::read_to_string(dpf_toml).map_err(|e| SimError::Data(format!("{}: {e}", dpf_toml.display())))?;
        let table = OpticalTable {
            extinction,
            dpf: DpfModel::from_toml(&text)?,
            baseline_intensity_v: default_baseline_intensity(),
        };
        table.validate()?;
        Ok(table)
    }

    pub fn with_extinction(mut self, chromophore: Chromophore, wavelength_nm: u32, epsilon: f64) -> Self {
        self.extinction.insert((chromophore, wavelength_nm), epsilon);
        self
    }

    pub fn without_extinction(mut self, chromophore: Chromophore, wavelength_nm: u32) -> Self {
        self.extinction.remove(&(chromophore, wavelength_nm));
        self
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if let Some((&(c, nm), &eps)) = self.extinction.iter().find(|(_, &v)| !(v > 0.0)) {
            return Err(SimError::Data(format!("non-positive ε {eps} for {} at {nm} nm", c.name())));
        }
        let cond = condition_number(&self.extinction_matrix()?);
        if !(cond < MAX_CONDITION) {
            return Err(SimError::IllConditioned(cond));
        }
        if self.baseline_intensity_v.len() != CHANNELS {
            return Err(SimError::Data("baseline intensity needs 24 channels".into()));
        }
        if self.baseline_intensity_v.iter().flatten().any(|&v| !(v > 0.0 && v < 3.3)) {
            return Err(SimError::Data("baseline intensity outside (0, 3.3) V".into()));
        }
        Ok(())
    }

    pub fn epsilon(&self, chromophore: Chromophore, wavelength_nm: u32) -> Result<f64, SimError> {
        self.extinction
            .get(&(chromophore, wavelength_nm))
            .copied()
            .ok_or(SimError::MissingExtinction { chromophore: chromophore.name(), wavelength_nm })
    }

    /// Rows are wavelengths (660, 940), columns chromophores (HbO, HbR).
    pub fn extinction_matrix(&self) -> Result<[[f64; 2]; 2], SimError> {
        let row = |wl: Wavelength| -> Result<[f64; 2], SimError> {
            Ok([self.epsilon(Chromophore::HbO, wl.nm())?, self.epsilon(Chromophore::HbR, wl.nm())?])
        };
        Ok([row(Wavelength::Nm660)?, row(Wavelength::Nm940)?])
    }

    pub fn baseline(&self, channel: ChannelId, wavelength: Wavelength) -> f64 {
        self.baseline_intensity_v[channel.index()][wavelength.index()]
    }
}

impl Default for OpticalTable {
    fn default() -> Self {
        Self::standard()
    }
}

fn parse_extinction(reader: impl std::io::Read) -> Result<BTreeMap<(Chromophore, u32), f64>, SimError> {
    let mut out = BTreeMap::new();
    for row in csv::Reader::from_reader(reader).deserialize::<ExtinctionRow>() {
        let row = row.map_err(|e| SimError::Data(format!("extinction table: {e}")))?;
        let chromophore = match row.chromophore.trim() {
            "HbO" => Chromophore::HbO,
            "HbR" => Chromophore::HbR,
            other => return Err(SimError::Data(format!("unknown chromophore {other}"))),
        };
        out.insert((chromophore, row.wavelength_nm), row.epsilon_cm_per_mm);
    }
    Ok(out)
}

/// Channel coupling factors spread evenly over ±[`COUPLING_SPREAD_DB`]. The
/// permutation `7·c mod 24` scatters strong and weak channels across groups.
pub fn coupling_db(channel: ChannelId) -> f64 {
    let rank = (channel.index() * 7) % CHANNELS;
    -COUPLING_SPREAD_DB + 2.0 * COUPLING_SPREAD_DB * rank as f64 / (CHANNELS - 1) as f64
}

pub fn default_baseline_intensity() -> Vec<[f64; 2]> {
    ChannelId::all()
        .map(|c| {
            let k = 10f64.powf(coupling_db(c) / 20.0);
            [NOMINAL_BASELINE_V[0] * k, NOMINAL_BASELINE_V[1] * k]
        })
        .collect()
}

/// 2-norm condition number of a 2×2 matrix.
pub fn condition_number(m: &[[f64; 2]; 2]) -> f64 {
    let [[a, b], [c, d]] = *m;
    let frob2 = a * a + b * b + c * c + d * d;
    let det = (a * d - b * c).abs();
    if det == 0.0 {
        return f64::INFINITY;
    }
    // σ₁² + σ₂² = ‖M‖_F², σ₁σ₂ = |det|
    let disc = (frob2 * frob2 - 4.0 * det * det).max(0.0).sqrt();
    let s1 = ((frob2 + disc) / 2.0).sqrt();
    let s2 = det / s1;
    s1 / s2
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_table_loads() {
        let t = OpticalTable::standard();
        assert_eq!(t.epsilon(Chromophore::HbR, 660).unwrap(), 3.22656);
        assert_eq!(t.epsilon(Chromophore::HbO, 940).unwrap(), 1.214);
        assert!(matches!(t.epsilon(Chromophore::HbO, 850), Err(SimError::MissingExtinction { .. })));
        let cond = condition_number(&t.extinction_matrix().unwrap());
        assert!((cond - 3.0454036184334496).abs() < 1e-9, "{cond}");
    }

    #[test]
    fn condition_number_of_known_matrices() {
        assert!((condition_number(&[[1.0, 0.0], [0.0, 1.0]]) - 1.0).abs() < 1e-12);
        assert!((condition_number(&[[3.0, 0.0], [0.0, 0.5]]) - 6.0).abs() < 1e-12);
        assert!(condition_number(&[[1.0, 2.0], [2.0, 4.0]]).is_infinite());
    }

    #[test]
    fn dpf_edge_hold() {
        let m = OpticalTable::standard().dpf;
        // Frozen from a direct evaluation of the general equation at the fitted edges.
        assert!((m.evaluate(25.0, 660.0).unwrap() - 6.1793963374638).abs() < 1e-9);
        assert!((m.evaluate(25.0, 940.0).unwrap() - 5.499527431063825).abs() < 1e-9);
        assert_eq!(m.evaluate(25.0, 660.0).unwrap(), m.evaluate(25.0, 690.0).unwrap());
        assert!(matches!(m.evaluate(25.0, 1000.0), Err(SimError::DpfWavelengthOutOfDomain(_))));
        assert!(matches!(m.evaluate(-1.0, 700.0), Err(SimError::DpfAgeOutOfDomain(_))));
    }

    #[test]
    fn baselines_span_coupling_spread() {
        let b = default_baseline_intensity();
        let db: Vec<f64> = ChannelId::all().map(coupling_db).collect();
        assert!((db.iter().sum::<f64>()).abs() < 1e-9);
        let max = db.iter().cloned().fold(f64::MIN, f64::max);
        assert!((max - COUPLING_SPREAD_DB).abs() < 1e-12);
        assert!(b.iter().flatten().all(|&v| v > 0.0 && v < 3.3));
    }

    #[test]
    fn rejects_ill_conditioned_table() {
        let t = OpticalTable::standard().with_extinction(Chromophore::HbO, 940, 0.3196 * 1.0001).with_extinction(
            Chromophore::HbR,
            940,
            3.22656,
        );
        assert!(matches!(t.validate(), Err(SimError::IllConditioned(_))));
    }
}
