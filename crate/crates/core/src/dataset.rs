//! Dataset files.
//!
//! * Scan datasets are newline-delimited JSON, one scan per line:
//!   `{scan_id, angle_min, angle_increment, max_range, ranges, persons}` with
//!   out-of-range beams as `null` and persons as `{id, x, y}`.
//! * Feature datasets are CSV with the 17 feature names, `label` (0/1, empty
//!   when unknown) and `scan_id`.
//!
//! Both readers skip blank lines and lines starting with `#`, which writers
//! use for provenance headers.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::{extract_features, FeatureId, FeatureVector, FEATURE_COUNT};
use crate::scan::{cluster_scan, label_clusters, Label, LaserScan, PersonAnnotation, Point2D};
use crate::seed::derive_seed;
use crate::sim::{generate_scene, random_room, RoomSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PersonRecord {
    pub id: String,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanRecord {
    pub scan_id: String,
    pub angle_min: f64,
    pub angle_increment: f64,
    pub max_range: f64,
    pub ranges: Vec<Option<f64>>,
    #[serde(default)]
    pub persons: Vec<PersonRecord>,
}

impl ScanRecord {
    pub fn new(scan: &LaserScan, persons: &[PersonAnnotation]) -> Self {
        Self {
            scan_id: scan.scan_id.clone(),
            angle_min: scan.angle_min,
            angle_increment: scan.angle_increment,
            max_range: scan.max_range,
            ranges: scan.ranges.clone(),
            persons: persons
                .iter()
                .map(|p| PersonRecord { id: p.person_id.clone(), x: p.position.x, y: p.position.y })
                .collect(),
        }
    }

    pub fn into_parts(self) -> Result<(LaserScan, Vec<PersonAnnotation>)> {
        let scan = LaserScan::new(self.scan_id, self.angle_min, self.angle_increment, self.max_range, self.ranges)?;
        let persons = self
            .persons
            .into_iter()
            .map(|p| {
                let position = Point2D::new(p.x, p.y);
                if !position.is_finite() {
                    return Err(Error::invalid(format!("person {} has a non-finite position", p.id)));
                }
                Ok(PersonAnnotation { person_id: p.id, position })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((scan, persons))
    }
}

fn is_skippable(line: &str) -> bool {
    let t = line.trim();
    t.is_empty() || t.starts_with('#')
}

pub fn read_scans<R: BufRead>(reader: R) -> Result<Vec<(LaserScan, Vec<PersonAnnotation>)>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::malformed(format!("line {}", i + 1), e.to_string()))?;
        if is_skippable(&line) {
            continue;
        }
        let de = &mut serde_json::Deserializer::from_str(&line);
        let rec: ScanRecord = serde_path_to_error::deserialize(de)
            .map_err(|e| Error::malformed(format!("line {}: {}", i + 1, e.path()), e.into_inner().to_string()))?;
        let parts = rec
            .into_parts()
            .map_err(|e| Error::malformed(format!("line {}", i + 1), e.to_string()))?;
        out.push(parts);
    }
    Ok(out)
}

pub fn write_scans<W: Write>(
    mut writer: W,
    scans: &[(LaserScan, Vec<PersonAnnotation>)],
    header: Option<&str>,
) -> std::io::Result<()> {
    if let Some(h) = header {
        for line in h.lines() {
            writeln!(writer, "# {line}")?;
        }
    }
    for (scan, persons) in scans {
        let rec = ScanRecord::new(scan, persons);
        serde_json::to_writer(&mut writer, &rec)?;
        writeln!(writer)?;
    }
    Ok(())
}

pub fn feature_header() -> Vec<&'static str> {
    FeatureId::ALL
        .iter()
        .map(|f| f.name())
        .chain(["label", "scan_id"])
        .collect()
}

pub fn write_features<W: Write>(writer: W, vectors: &[FeatureVector], header: Option<&str>) -> Result<()> {
    let mut writer = writer;
    if let Some(h) = header {
        for line in h.lines() {
            writeln!(writer, "# {line}").map_err(|e| Error::io("<features>", e))?;
        }
    }
    let mut w = csv::Writer::from_writer(writer);
    let csv_err = |e: csv::Error| Error::invalid(format!("writing features: {e}"));
    w.write_record(feature_header()).map_err(csv_err)?;
    for v in vectors {
        let mut row: Vec<String> = v.values.iter().map(|x| x.to_string()).collect();
        row.push(v.label.map(|l| l.bit().to_string()).unwrap_or_default());
        row.push(v.scan_id.clone());
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io("<features>", e))?;
    Ok(())
}

pub fn read_features<R: std::io::Read>(reader: R) -> Result<Vec<FeatureVector>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::malformed("header", e.to_string()))?
        .clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::malformed("header", format!("missing column `{name}`")))
    };
    let feature_cols = FeatureId::ALL.iter().map(|f| column(f.name())).collect::<Result<Vec<_>>>()?;
    let label_col = column("label")?;
    let scan_col = column("scan_id")?;

    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::malformed(format!("row {row}"), e.to_string()))?;
        let mut values = [0.0; FEATURE_COUNT];
        for (j, &col) in feature_cols.iter().enumerate() {
            let raw = rec.get(col).unwrap_or("");
            let x: f64 = raw.trim().parse().map_err(|_| {
                Error::malformed(format!("row {row}.{}", FeatureId::ALL[j].name()), format!("not a number: `{raw}`"))
            })?;
            if !x.is_finite() {
                return Err(Error::malformed(format!("row {row}.{}", FeatureId::ALL[j].name()), "must be finite"));
            }
            values[j] = x;
        }
        let raw_label = rec.get(label_col).unwrap_or("").trim();
        let label = if raw_label.is_empty() {
            None
        } else {
            Some(
                raw_label
                    .parse::<u8>()
                    .ok()
                    .and_then(Label::from_bit)
                    .ok_or_else(|| Error::malformed(format!("row {row}.label"), format!("expected 0 or 1, got `{raw_label}`")))?,
            )
        };
        out.push(FeatureVector {
            values,
            label,
            scan_id: rec.get(scan_col).unwrap_or("").to_owned(),
        });
    }
    Ok(out)
}

/// Clusters a scan, labels the clusters from annotations and extracts one
/// feature vector per cluster.
pub fn scan_features(scan: &LaserScan, persons: &[PersonAnnotation], jump_threshold: f64) -> Result<Vec<FeatureVector>> {
    let clusters = label_clusters(cluster_scan(scan, jump_threshold)?, persons);
    Ok(clusters.iter().map(|c| extract_features(c, scan)).collect())
}

/// Renders `rooms` random rooms for `spec.frames` frames each.
pub fn synthesize_scans(spec: &RoomSpec, rooms: usize, seed: u64) -> Result<Vec<(LaserScan, Vec<PersonAnnotation>)>> {
    let mut out = Vec::with_capacity(rooms * spec.frames);
    for r in 0..rooms {
        let scene = random_room(spec, derive_seed(seed, &[r as u64]));
        for f in 0..spec.frames {
            out.push(generate_scene(&scene, f)?);
        }
    }
    Ok(out)
}

/// Labelled feature vectors for every scan, in scan order.
pub fn featurize(scans: &[(LaserScan, Vec<PersonAnnotation>)], jump_threshold: f64) -> Result<Vec<FeatureVector>> {
    let per_scan: Vec<Vec<FeatureVector>> = scans
        .par_iter()
        .map(|(scan, persons)| scan_features(scan, persons, jump_threshold))
        .collect::<Result<_>>()?;
    Ok(per_scan.into_iter().flatten().collect())
}
