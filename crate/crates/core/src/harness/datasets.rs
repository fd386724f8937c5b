//! Synthetic datasets and observation regimes, with CSV persistence.

use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::builtins::{builtin_lotka_volterra, builtin_schlogl, BuiltinModel};
use crate::ledger::BudgetLedger;
use crate::model::{observe_states, simulate_at_times, NoiseSd, ObservationModel, ObservedDataset, SpeciesState};
use crate::rng::substream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DatasetId {
    D1,
    D2,
    D3,
    /// Schlögl, σ² = 1.
    S1,
    /// Schlögl, σ² = 10, same latent path as `S1`.
    S10,
}

impl DatasetId {
    pub const ALL: [DatasetId; 5] = [
        DatasetId::D1,
        DatasetId::D2,
        DatasetId::D3,
        DatasetId::S1,
        DatasetId::S10,
    ];

    pub fn times(self) -> Vec<f64> {
        let (n, step) = match self {
            DatasetId::D1 => (6, 1.0),
            DatasetId::D2 => (16, 2.0),
            DatasetId::D3 => (101, 0.5),
            DatasetId::S1 | DatasetId::S10 => (21, 0.2),
        };
        (0..n).map(|i| i as f64 * step).collect()
    }

    pub fn is_schlogl(self) -> bool {
        matches!(self, DatasetId::S1 | DatasetId::S10)
    }

    pub fn model(self) -> BuiltinModel {
        if self.is_schlogl() {
            builtin_schlogl()
        } else {
            builtin_lotka_volterra()
        }
    }

    fn sigma(self) -> f64 {
        match self {
            DatasetId::S1 => 1.0,
            DatasetId::S10 => 10f64.sqrt(),
            _ => builtin_lotka_volterra().sigma,
        }
    }

    fn label(self) -> &'static str {
        match self {
            DatasetId::D1 => "D1",
            DatasetId::D2 => "D2",
            DatasetId::D3 => "D3",
            DatasetId::S1 => "DS1",
            DatasetId::S10 => "DS10",
        }
    }

    fn stream(self) -> u64 {
        match self {
            DatasetId::D1 => 1,
            DatasetId::D2 => 2,
            DatasetId::D3 => 3,
            DatasetId::S1 | DatasetId::S10 => 4,
        }
    }
}

/// A dataset plus its observation regime: `D2`, `D2_p` (prey only),
/// `D2_u` (σ unknown), `D2_up`; Schlögl sets only as `DS1`, `DS10`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ObservationRegime {
    pub id: DatasetId,
    pub partial: bool,
    pub sigma_unknown: bool,
}

impl ObservationRegime {
    pub fn new(id: DatasetId, partial: bool, sigma_unknown: bool) -> Result<Self> {
        if id.is_schlogl() && (partial || sigma_unknown) {
            return Err(Error::Invalid(
                "Schlögl datasets are fully observed with known σ".into(),
            ));
        }
        Ok(Self {
            id,
            partial,
            sigma_unknown,
        })
    }

    /// Applies the regime's mask and σ flag to a fully observed dataset.
    pub fn apply(&self, full: &ObservedDataset) -> Result<ObservedDataset> {
        let mut d = full.clone();
        if self.partial {
            let mut mask = vec![false; full.num_species()];
            mask[0] = true;
            d = d.with_mask(mask)?;
        }
        if self.sigma_unknown {
            d = d.with_sigma(NoiseSd::Unknown)?;
        }
        Ok(d)
    }
}

impl fmt::Display for ObservationRegime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let suffix = match (self.sigma_unknown, self.partial) {
            (false, false) => "",
            (false, true) => "_p",
            (true, false) => "_u",
            (true, true) => "_up",
        };
        write!(f, "{}{suffix}", self.id.label())
    }
}

impl FromStr for ObservationRegime {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let (base, suffix) = s.split_once('_').unwrap_or((s, ""));
        let id = match base.to_ascii_uppercase().as_str() {
            "D1" => DatasetId::D1,
            "D2" => DatasetId::D2,
            "D3" => DatasetId::D3,
            "DS1" => DatasetId::S1,
            "DS10" => DatasetId::S10,
            other => return Err(Error::Parse(format!("unknown dataset {other:?}"))),
        };
        let flags: String = suffix.chars().filter(|c| *c != ',').collect();
        if flags.chars().any(|c| c != 'u' && c != 'p') || flags.len() > 2 {
            return Err(Error::Parse(format!("unknown regime suffix {suffix:?}")));
        }
        Self::new(id, flags.contains('p'), flags.contains('u'))
    }
}

impl TryFrom<String> for ObservationRegime {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ObservationRegime> for String {
    fn from(r: ObservationRegime) -> Self {
        r.to_string()
    }
}

/// A fully observed dataset with known σ and the latent states behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedData {
    pub id: DatasetId,
    pub latent: Vec<SpeciesState>,
    pub dataset: ObservedDataset,
    pub seed: u64,
}

impl GeneratedData {
    pub fn manifest(&self, regime: &ObservationRegime) -> Result<DatasetManifest> {
        let model = self.id.model();
        let data = regime.apply(&self.dataset)?;
        Ok(DatasetManifest {
            species: model.network.species_names().to_vec(),
            sigma: data.model.sigma,
            observed: data.model.observed,
            regime: Some(regime.to_string()),
            seed: Some(self.seed),
            true_log_theta: Some(model.theta.to_log()),
            true_sigma: Some(self.id.sigma()),
        })
    }
}

/// Simulates one dataset at the model's true parameters. Datasets with
/// different ids use independent substreams of `seed`, except that `S1`
/// and `S10` share one latent path.
pub fn generate_dataset(id: DatasetId, seed: u64) -> Result<GeneratedData> {
    let model = id.model();
    let times = id.times();
    let mut path_rng = substream(seed, id.stream(), 0);
    let latent = simulate_at_times(
        &model.network,
        &model.theta,
        &model.x0,
        &times,
        &mut path_rng,
        &BudgetLedger::unlimited(),
        &model.limits,
    )?;
    let noise_stream = if id == DatasetId::S10 { 2 } else { 1 };
    let sigma = id.sigma();
    let obs = ObservationModel::fully_observed(sigma, model.network.num_species())?;
    let dataset = observe_states(
        &latent,
        &times,
        &obs,
        sigma,
        &mut substream(seed, id.stream(), noise_stream),
    )?;
    Ok(GeneratedData {
        id,
        latent,
        dataset,
        seed,
    })
}

/// Every builtin dataset from one root draw of `rng`.
pub fn generate_all_datasets<R: Rng + ?Sized>(rng: &mut R) -> Result<Vec<GeneratedData>> {
    let seed: u64 = rng.random();
    DatasetId::ALL.iter().map(|&id| generate_dataset(id, seed)).collect()
}

/// Sidecar description of a dataset file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub species: Vec<String>,
    pub sigma: NoiseSd,
    pub observed: Vec<bool>,
    pub regime: Option<String>,
    pub seed: Option<u64>,
    pub true_log_theta: Option<Vec<f64>>,
    pub true_sigma: Option<f64>,
}

pub fn manifest_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

/// Writes `time,<species...>` rows; unobserved entries are empty.
pub fn write_dataset_csv<W: Write>(dataset: &ObservedDataset, species: &[String], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["time".to_string()];
    header.extend(species.iter().cloned());
    w.write_record(&header)?;
    for (t, row) in dataset.times.iter().zip(&dataset.values) {
        let mut rec = vec![t.to_string()];
        rec.extend(row.iter().map(|v| v.map(|x| x.to_string()).unwrap_or_default()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a dataset CSV. Without a manifest, a species counts as observed
/// when any of its cells is filled and σ is treated as unknown.
pub fn read_dataset_csv<R: Read>(
    reader: R,
    manifest: Option<&DatasetManifest>,
) -> Result<(ObservedDataset, Vec<String>)> {
    let mut r = csv::Reader::from_reader(reader);
    let header = r.headers()?.clone();
    if header.is_empty() || &header[0] != "time" {
        return Err(Error::Parse("dataset header must start with time".into()));
    }
    let species: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut times = Vec::new();
    let mut values = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("dataset field {s:?}: {e}")))
        };
        times.push(parse(&rec[0])?);
        values.push(
            rec.iter()
                .skip(1)
                .map(|s| {
                    if s.trim().is_empty() {
                        Ok(None)
                    } else {
                        parse(s).map(Some)
                    }
                })
                .collect::<Result<Vec<_>>>()?,
        );
    }
    let model = match manifest {
        Some(m) => {
            if m.species != species {
                return Err(Error::Shape(format!(
                    "manifest species {:?}, file {:?}",
                    m.species, species
                )));
            }
            ObservationModel::new(m.sigma, m.observed.clone())?
        }
        None => {
            let observed = (0..species.len())
                .map(|j| values.iter().any(|row: &Vec<Option<f64>>| row[j].is_some()))
                .collect();
            ObservationModel::new(NoiseSd::Unknown, observed)?
        }
    };
    Ok((ObservedDataset::new(times, values, model)?, species))
}

/// Writes `path` and its manifest sidecar.
pub fn save_dataset(path: &Path, dataset: &ObservedDataset, manifest: &DatasetManifest) -> Result<()> {
    write_dataset_csv(dataset, &manifest.species, File::create(path)?)?;
    let mut f = File::create(manifest_path(path))?;
    serde_json::to_writer_pretty(&mut f, manifest)?;
    f.write_all(b"\n")?;
    Ok(())
}

/// Reads `path`, using its manifest sidecar when present.
pub fn load_dataset(path: &Path) -> Result<(ObservedDataset, Vec<String>, Option<DatasetManifest>)> {
    let mpath = manifest_path(path);
    let manifest: Option<DatasetManifest> = if mpath.exists() {
        Some(serde_json::from_reader(File::open(&mpath)?)?)
    } else {
        None
    };
    let (data, species) = read_dataset_csv(File::open(path)?, manifest.as_ref())?;
    Ok((data, species, manifest))
}

/// Latent states as `time,<species...>` integer rows.
pub fn write_latent_csv<W: Write>(times: &[f64], states: &[SpeciesState], species: &[String], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["time".to_string()];
    header.extend(species.iter().cloned());
    w.write_record(&header)?;
    for (t, x) in times.iter().zip(states) {
        let mut rec = vec![t.to_string()];
        rec.extend(x.counts().iter().map(|c| c.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
