//! File formats: PDP / frequency-response / feature CSVs, the PDP-directory
//! label manifest, and TOML config loading.
//!
//! Floats are written in the shortest representation that parses back to the
//! identical value, so files are byte-stable across runs.

use std::path::Path;

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::estimators::{TrainConfig, TrainRow};
use crate::features::{ChannelFeatures, FEATURE_NAMES};
use crate::nlos::Hypothesis;
use crate::pdp::{FrequencyResponse, PowerDelayProfile};
use crate::sim::SimConfig;

/// Header of the per-bin PDP format.
pub const PDP_HEADER: [&str; 2] = ["delay_ns", "power_dbm"];
/// Header of the complex frequency-response format.
pub const FREQ_HEADER: [&str; 3] = ["freq_hz", "re", "im"];

fn parse_f64(field: &str, what: &str) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|_| Error::Input(format!("cannot parse {what} from `{field}`")))
}

fn check_header(got: &csv::StringRecord, want: &[&str], path: &Path) -> Result<()> {
    let got_fields: Vec<&str> = got.iter().map(str::trim).collect();
    if got_fields != want {
        return Err(Error::Input(format!(
            "{}: expected header `{}`, got `{}`",
            path.display(),
            want.join(","),
            got_fields.join(",")
        )));
    }
    Ok(())
}

/// Reads a `delay_ns,power_dbm` file. The sample spacing is inferred from
/// the delays (validated uniform); a single-bin file defaults to 1 ns.
pub fn read_pdp_csv(path: &Path) -> Result<PowerDelayProfile> {
    let mut reader = csv::Reader::from_path(path)?;
    check_header(reader.headers()?, &PDP_HEADER, path)?;
    let mut delays_ns = Vec::new();
    let mut power_dbm = Vec::new();
    for record in reader.records() {
        let record = record?;
        if record.len() != 2 {
            return Err(Error::Input(format!(
                "{}: PDP rows need 2 fields, got {}",
                path.display(),
                record.len()
            )));
        }
        delays_ns.push(parse_f64(&record[0], "delay_ns")?);
        power_dbm.push(parse_f64(&record[1], "power_dbm")?);
    }
    if delays_ns.is_empty() {
        return Err(Error::Input(format!("{}: empty PDP file", path.display())));
    }
    let dt_ns = if delays_ns.len() == 1 {
        1.0
    } else {
        let dt = delays_ns[1] - delays_ns[0];
        if dt <= 0.0 {
            return Err(Error::Input(format!(
                "{}: delays must be strictly increasing",
                path.display()
            )));
        }
        for w in delays_ns.windows(2) {
            if ((w[1] - w[0]) - dt).abs() > 1e-6 * dt {
                return Err(Error::Input(format!(
                    "{}: non-uniform delay grid",
                    path.display()
                )));
            }
        }
        dt
    };
    PowerDelayProfile::new(delays_ns[0] * 1e-9, dt_ns * 1e-9, power_dbm)
}

pub fn write_pdp_csv(path: &Path, pdp: &PowerDelayProfile) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(PDP_HEADER)?;
    for (i, &p) in pdp.power_dbm.iter().enumerate() {
        writer.write_record([format!("{}", pdp.delay_s(i) * 1e9), format!("{p}")])?;
    }
    writer.flush()?;
    Ok(())
}

/// Reads a `freq_hz,re,im` file; the center frequency is the grid midpoint.
pub fn read_freq_response_csv(path: &Path) -> Result<FrequencyResponse> {
    let mut reader = csv::Reader::from_path(path)?;
    check_header(reader.headers()?, &FREQ_HEADER, path)?;
    let mut freqs = Vec::new();
    let mut values = Vec::new();
    for record in reader.records() {
        let record = record?;
        if record.len() != 3 {
            return Err(Error::Input(format!(
                "{}: frequency rows need 3 fields, got {}",
                path.display(),
                record.len()
            )));
        }
        freqs.push(parse_f64(&record[0], "freq_hz")?);
        values.push(Complex64::new(
            parse_f64(&record[1], "re")?,
            parse_f64(&record[2], "im")?,
        ));
    }
    if freqs.len() < 2 {
        return Err(Error::Input(format!(
            "{}: frequency response needs at least 2 points",
            path.display()
        )));
    }
    let center = 0.5 * (freqs[0] + freqs[freqs.len() - 1]);
    FrequencyResponse::new(center, freqs, values)
}

pub fn write_freq_response_csv(path: &Path, fr: &FrequencyResponse) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(FREQ_HEADER)?;
    for (f, v) in fr.frequencies_hz().iter().zip(fr.values()) {
        writer.write_record([format!("{f}"), format!("{}", v.re), format!("{}", v.im)])?;
    }
    writer.flush()?;
    Ok(())
}

/// A feature CSV: always the 8 channel parameters, plus ground-truth
/// distance and hypothesis when the dataset is labeled.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDataset {
    pub features: Vec<ChannelFeatures>,
    /// Parallel to `features` when present.
    pub labels: Option<Vec<(f64, Hypothesis)>>,
}

impl FeatureDataset {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    /// Converts to training rows; errors when the dataset is unlabeled.
    pub fn train_rows(&self) -> Result<Vec<TrainRow>> {
        let labels = self.labels.as_ref().ok_or_else(|| {
            Error::Input("dataset has no distance/is_nlos labels".into())
        })?;
        Ok(self
            .features
            .iter()
            .zip(labels)
            .map(|(&features, &(distance_m, hypothesis))| TrainRow {
                features,
                distance_m,
                hypothesis,
            })
            .collect())
    }
}

fn labeled_header() -> Vec<&'static str> {
    let mut h = FEATURE_NAMES.to_vec();
    h.push("distance_m");
    h.push("is_nlos");
    h
}

/// Reads a feature CSV, labeled (10 columns) or unlabeled (8 columns).
pub fn read_feature_csv(path: &Path) -> Result<FeatureDataset> {
    let mut reader = csv::Reader::from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(|s| s.trim().to_string()).collect();
    let labeled = if header == labeled_header() {
        true
    } else if header == FEATURE_NAMES {
        false
    } else {
        return Err(Error::Input(format!(
            "{}: unrecognized feature CSV header `{}`",
            path.display(),
            header.join(",")
        )));
    };

    let mut features = Vec::new();
    let mut labels = Vec::new();
    for record in reader.records() {
        let record = record?;
        let expect = if labeled { 10 } else { 8 };
        if record.len() != expect {
            return Err(Error::Input(format!(
                "{}: row has {} fields, expected {expect}",
                path.display(),
                record.len()
            )));
        }
        let mut raw = [0.0; 8];
        for (k, slot) in raw.iter_mut().enumerate() {
            *slot = parse_f64(&record[k], FEATURE_NAMES[k])?;
        }
        features.push(ChannelFeatures::from_raw_vector(&raw));
        if labeled {
            let distance = parse_f64(&record[8], "distance_m")?;
            let hypothesis = match record[9].trim() {
                "0" => Hypothesis::Los,
                "1" => Hypothesis::Nlos,
                other => {
                    return Err(Error::Input(format!(
                        "{}: is_nlos must be 0 or 1, got `{other}`",
                        path.display()
                    )))
                }
            };
            labels.push((distance, hypothesis));
        }
    }
    Ok(FeatureDataset {
        features,
        labels: labeled.then_some(labels),
    })
}

pub fn write_labeled_feature_csv(path: &Path, rows: &[TrainRow]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(labeled_header())?;
    for row in rows {
        let mut record: Vec<String> = row
            .features
            .to_raw_vector()
            .iter()
            .map(|v| format!("{v}"))
            .collect();
        record.push(format!("{}", row.distance_m));
        record.push(
            match row.hypothesis {
                Hypothesis::Los => "0",
                Hypothesis::Nlos => "1",
            }
            .to_string(),
        );
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn write_unlabeled_feature_csv(path: &Path, features: &[ChannelFeatures]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(FEATURE_NAMES)?;
    for f in features {
        let record: Vec<String> = f.to_raw_vector().iter().map(|v| format!("{v}")).collect();
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

/// Label manifest for a directory of PDP files: `file,distance_m,is_nlos`.
pub const LABELS_MANIFEST: &str = "labels.csv";

pub fn write_labels_manifest(dir: &Path, entries: &[(String, f64, Hypothesis)]) -> Result<()> {
    let mut writer = csv::Writer::from_path(dir.join(LABELS_MANIFEST))?;
    writer.write_record(["file", "distance_m", "is_nlos"])?;
    for (file, d, h) in entries {
        writer.write_record([
            file.clone(),
            format!("{d}"),
            match h {
                Hypothesis::Los => "0".to_string(),
                Hypothesis::Nlos => "1".to_string(),
            },
        ])?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_labels_manifest(dir: &Path) -> Result<Vec<(String, f64, Hypothesis)>> {
    let path = dir.join(LABELS_MANIFEST);
    let mut reader = csv::Reader::from_path(&path)?;
    check_header(reader.headers()?, &["file", "distance_m", "is_nlos"], &path)?;
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record?;
        let hypothesis = match record[2].trim() {
            "0" => Hypothesis::Los,
            "1" => Hypothesis::Nlos,
            other => {
                return Err(Error::Input(format!(
                    "is_nlos must be 0 or 1, got `{other}`"
                )))
            }
        };
        out.push((
            record[0].to_string(),
            parse_f64(&record[1], "distance_m")?,
            hypothesis,
        ));
    }
    Ok(out)
}

/// Loads a simulator configuration from TOML; missing keys take defaults.
pub fn load_sim_config(path: &Path) -> Result<SimConfig> {
    let text = std::fs::read_to_string(path)?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Loads training hyperparameters from TOML; missing keys take defaults.
pub fn load_train_config(path: &Path) -> Result<TrainConfig> {
    let text = std::fs::read_to_string(path)?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}
