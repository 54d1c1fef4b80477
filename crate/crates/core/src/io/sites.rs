//! Site CSV: `id,lat,lon,status,base_sales,addon_sales,income,population`.
//!
//! Columns may appear in any order. Sales fields may be empty. Every row-level
//! problem is collected and reported together.

use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use crate::geo::{DistanceMetric, GeoError, Network, Site, SiteStatus};

use super::IoError;

pub const COLUMNS: [&str; 8] = [
    "id",
    "lat",
    "lon",
    "status",
    "base_sales",
    "addon_sales",
    "income",
    "population",
];

/// One problem in one row. `line` is 1-based and counts the header.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowError {
    pub line: u64,
    pub field: String,
    pub reason: String,
}

impl fmt::Display for RowError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, field `{}`: {}", self.line, self.field, self.reason)
    }
}

fn parse_number(raw: &str, field: &str, line: u64, errors: &mut Vec<RowError>) -> Option<f64> {
    match raw.parse::<f64>() {
        Ok(v) if v.is_finite() => Some(v),
        _ => {
            errors.push(RowError {
                line,
                field: field.to_string(),
                reason: format!("`{raw}` is not a finite number"),
            });
            None
        }
    }
}

fn check_range(v: Option<f64>, field: &str, lo: f64, hi: f64, line: u64, errors: &mut Vec<RowError>) -> Option<f64> {
    match v {
        Some(x) if !(lo..=hi).contains(&x) => {
            errors.push(RowError {
                line,
                field: field.to_string(),
                reason: format!("{x} is outside [{lo}, {hi}]"),
            });
            None
        }
        other => other,
    }
}

fn check_nonnegative(v: Option<f64>, field: &str, line: u64, errors: &mut Vec<RowError>) -> Option<f64> {
    match v {
        Some(x) if x < 0.0 => {
            errors.push(RowError {
                line,
                field: field.to_string(),
                reason: format!("{x} is negative"),
            });
            None
        }
        other => other,
    }
}

/// Parses and validates site rows, then builds the network.
pub fn read_sites<R: Read>(reader: R, metric: DistanceMetric) -> Result<Network, IoError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(reader);
    let headers = rdr.headers().map_err(|e| IoError::Schema(e.to_string()))?.clone();
    let mut col = HashMap::new();
    for (i, h) in headers.iter().enumerate() {
        let name = h.trim_start_matches('\u{feff}').to_ascii_lowercase();
        if col.insert(name.clone(), i).is_some() {
            return Err(IoError::Schema(format!("column `{name}` appears twice")));
        }
    }
    let missing: Vec<&str> = COLUMNS.iter().copied().filter(|c| !col.contains_key(*c)).collect();
    if !missing.is_empty() {
        return Err(IoError::Schema(format!("missing column(s): {}", missing.join(", "))));
    }

    let mut sites = Vec::new();
    let mut lines = Vec::new();
    let mut errors = Vec::new();
    let mut first_line_of: HashMap<String, u64> = HashMap::new();
    for record in rdr.records() {
        let record = record.map_err(|e| IoError::Schema(e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        let get = |name: &str| record.get(col[name]).unwrap_or("");
        let before = errors.len();

        let id = get("id").to_string();
        if id.is_empty() {
            errors.push(RowError {
                line,
                field: "id".into(),
                reason: "empty id".into(),
            });
        } else if let Some(&first) = first_line_of.get(&id) {
            return Err(IoError::DuplicateId {
                id,
                first_line: first,
                second_line: line,
            });
        } else {
            first_line_of.insert(id.clone(), line);
        }

        let lat = parse_number(get("lat"), "lat", line, &mut errors);
        let lat = check_range(lat, "lat", -90.0, 90.0, line, &mut errors);
        let lon = parse_number(get("lon"), "lon", line, &mut errors);
        let lon = check_range(lon, "lon", -180.0, 180.0, line, &mut errors);
        let status = match get("status").to_ascii_lowercase().as_str() {
            "active" => Some(SiteStatus::Active),
            "candidate" => Some(SiteStatus::Candidate),
            other => {
                errors.push(RowError {
                    line,
                    field: "status".into(),
                    reason: format!("`{other}` is neither active nor candidate"),
                });
                None
            }
        };
        let optional = |name: &str, errors: &mut Vec<RowError>| -> Option<Option<f64>> {
            let raw = get(name);
            if raw.is_empty() {
                Some(None)
            } else {
                let v = parse_number(raw, name, line, errors);
                check_nonnegative(v, name, line, errors).map(Some)
            }
        };
        let base_sales = optional("base_sales", &mut errors);
        let addon_sales = optional("addon_sales", &mut errors);
        let income = parse_number(get("income"), "income", line, &mut errors);
        let income = check_nonnegative(income, "income", line, &mut errors);
        let population = parse_number(get("population"), "population", line, &mut errors);
        let population = check_nonnegative(population, "population", line, &mut errors);

        if status == Some(SiteStatus::Active) {
            for (name, v) in [("base_sales", base_sales), ("addon_sales", addon_sales)] {
                if v == Some(None) {
                    errors.push(RowError {
                        line,
                        field: name.into(),
                        reason: "required for active sites".into(),
                    });
                }
            }
        }
        if errors.len() > before {
            continue;
        }
        sites.push(Site {
            id,
            lat: lat.unwrap(),
            lon: lon.unwrap(),
            status: status.unwrap(),
            base_sales: base_sales.unwrap(),
            addon_sales: addon_sales.unwrap(),
            income: income.unwrap(),
            population: population.unwrap(),
        });
        lines.push(line);
    }
    if !errors.is_empty() {
        return Err(IoError::Rows(errors));
    }
    Network::new(sites, metric).map_err(|e| match e {
        GeoError::DuplicateCoordinates(i, j) => IoError::DuplicateCoordinates {
            first_line: lines[i],
            second_line: lines[j],
        },
        other => IoError::Geo(other),
    })
}

pub fn load_sites(path: &Path, metric: DistanceMetric) -> Result<Network, IoError> {
    let file = std::fs::File::open(path).map_err(|e| IoError::io(path, e))?;
    read_sites(file, metric)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Canonical form: fixed column order, shortest round-trip number formatting,
/// lowercase status, empty fields for missing sales.
pub fn write_sites<W: Write>(network: &Network, writer: W) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(COLUMNS)?;
    for s in network.sites() {
        w.write_record([
            s.id.clone(),
            s.lat.to_string(),
            s.lon.to_string(),
            s.status.to_string(),
            fmt_opt(s.base_sales),
            fmt_opt(s.addon_sales),
            s.income.to_string(),
            s.population.to_string(),
        ])?;
    }
    w.flush().map_err(|e| IoError::Io {
        path: "<output>".into(),
        source: e,
    })?;
    Ok(())
}

pub fn save_sites(network: &Network, path: &Path) -> Result<(), IoError> {
    let file = std::fs::File::create(path).map_err(|e| IoError::io(path, e))?;
    write_sites(network, file)
}
