//! Loading, validation and normalization of the two external inputs:
//! long-form trade flows and country Gini series.
//!
//! Trade rows with value 0 are dropped, duplicates are summed, and the
//! canonical table is sorted by (year, exporter, product). Gini values are
//! supplied on [0, 100] and exposed on [0, 1]; the raw scale is kept so that
//! re-emitting the canonical table is byte-identical with reloading it.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TRADE_HEADER: &str = "year,exporter,product,value";
pub const GINI_HEADER: &str = "country,year,gini";
pub const SECTIONS_HEADER: &str = "product,section_name";

/// One canonical trade observation: exports of `product` by `exporter` in `year`.
#[derive(Debug, Clone, PartialEq)]
pub struct TradeRecord {
    pub year: i32,
    pub exporter: String,
    pub product: String,
    /// Nominal US dollars, strictly positive in the canonical table.
    pub value: f64,
}

/// Sample-restriction knobs applied at load time.
///
/// Defaults are permissive: no thresholds, no allowlist, no year bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterConfig {
    /// Drop an exporter from a year when its total trade that year is below this.
    pub min_country_trade: f64,
    /// Drop a product from a year when its world total that year is below this.
    pub min_product_trade: f64,
    pub country_allowlist: Option<BTreeSet<String>>,
    /// Inclusive year interval; `None` keeps every year.
    pub year_range: Option<(i32, i32)>,
    /// Restrict the sample to countries with any Gini observation.
    pub require_gini: bool,
    /// Restrict inequality and report tables to countries with an ECI score.
    pub require_eci: bool,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            min_country_trade: 0.0,
            min_product_trade: 0.0,
            country_allowlist: None,
            year_range: None,
            require_gini: false,
            require_eci: false,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.min_country_trade >= 0.0) || !(self.min_product_trade >= 0.0) {
            return Err(Error::Config(format!(
                "trade thresholds must be >= 0 (got {}, {})",
                self.min_country_trade, self.min_product_trade
            )));
        }
        if let Some((lo, hi)) = self.year_range {
            if lo > hi {
                return Err(Error::Config(format!("empty year range {lo}:{hi}")));
            }
        }
        Ok(())
    }

    fn keeps_year(&self, year: i32) -> bool {
        match self.year_range {
            Some((lo, hi)) => (lo..=hi).contains(&year),
            None => true,
        }
    }

    fn keeps_country(&self, code: &str) -> bool {
        match &self.country_allowlist {
            Some(allow) => allow.contains(code),
            None => true,
        }
    }
}

/// Canonical aggregated trade table, sorted by (year, exporter, product).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TradeTable {
    records: Vec<TradeRecord>,
}

impl TradeTable {
    pub fn records(&self) -> &[TradeRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Distinct years present, ascending.
    pub fn years(&self) -> Vec<i32> {
        let mut years: Vec<i32> = self.records.iter().map(|r| r.year).collect();
        years.sort_unstable();
        years.dedup();
        years
    }

    pub fn countries(&self) -> BTreeSet<String> {
        self.records.iter().map(|r| r.exporter.clone()).collect()
    }

    /// New table keeping only the listed exporters.
    pub fn restrict_to_countries(&self, keep: &BTreeSet<String>) -> TradeTable {
        TradeTable {
            records: self
                .records
                .iter()
                .filter(|r| keep.contains(&r.exporter))
                .cloned()
                .collect(),
        }
    }

    /// Canonical CSV emission; loading the output reproduces it byte-identically.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "year", "exporter", "product", "value",
        ])
        .map_err(csv_io)?;
        for r in &self.records {
            w.write_record([
                r.year.to_string(),
                r.exporter.clone(),
                r.product.clone(),
                r.value.to_string(),
            ])
            .map_err(csv_io)?;
        }
        w.flush().map_err(io_plain)?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("csv output is utf-8")
    }
}

/// Per-country Gini series on the raw [0, 100] input scale, sorted by year.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GiniTable {
    series: BTreeMap<String, Vec<(i32, f64)>>,
}

impl GiniTable {
    pub fn countries(&self) -> impl Iterator<Item = &str> {
        self.series.keys().map(String::as_str)
    }

    pub fn has_country(&self, code: &str) -> bool {
        self.series.contains_key(code)
    }

    pub fn country_set(&self) -> BTreeSet<String> {
        self.series.keys().cloned().collect()
    }

    /// Observed knots for one country: (year, gini on [0, 100]), ascending year.
    pub fn knots_raw(&self, country: &str) -> Option<&[(i32, f64)]> {
        self.series.get(country).map(Vec::as_slice)
    }

    /// Observed value on [0, 1], if that exact year is a knot.
    pub fn value01(&self, country: &str, year: i32) -> Option<f64> {
        let knots = self.series.get(country)?;
        knots
            .binary_search_by_key(&year, |&(y, _)| y)
            .ok()
            .map(|i| knots[i].1 / 100.0)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["country", "year", "gini"]).map_err(csv_io)?;
        for (country, knots) in &self.series {
            for (year, raw) in knots {
                w.write_record([country.clone(), year.to_string(), raw.to_string()])
                    .map_err(csv_io)?;
            }
        }
        w.flush().map_err(io_plain)?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("csv output is utf-8")
    }
}

/// Row-level load accounting. Row counts refer to canonical (aggregated) rows
/// except `rows_read` and `rows_zero_dropped`, which refer to input rows.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LoadDiagnostics {
    pub rows_read: usize,
    pub rows_zero_dropped: usize,
    pub rows_merged: usize,
    pub rows_year_filtered: usize,
    pub rows_allowlist_filtered: usize,
    pub rows_threshold_filtered: usize,
    pub countries_below_threshold: usize,
    pub products_below_threshold: usize,
}

#[derive(Debug, Clone)]
pub struct TradeLoad {
    pub table: TradeTable,
    pub diagnostics: LoadDiagnostics,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct GiniLoad {
    pub table: GiniTable,
    pub warnings: Vec<String>,
}

pub fn load_trade(path: &Path, config: &FilterConfig) -> Result<TradeLoad> {
    let file = open(path)?;
    load_trade_from_reader(file, &path.display().to_string(), config)
}

pub fn load_trade_from_reader<R: Read>(
    reader: R,
    source: &str,
    config: &FilterConfig,
) -> Result<TradeLoad> {
    config.validate()?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    check_header(&mut rdr, source, TRADE_HEADER)?;

    let mut diagnostics = LoadDiagnostics::default();
    let mut bad = BadRows::new(source);
    // Values per key, summed in value order so the table is independent of
    // input row order.
    let mut cells: BTreeMap<(i32, String, String), Vec<f64>> = BTreeMap::new();

    for record in rdr.records() {
        let record = record.map_err(|e| csv_read(source, e))?;
        let line = record.position().map_or(0, |p| p.line());
        diagnostics.rows_read += 1;
        if record.len() != 4 {
            bad.push(line, "wrong field count");
            continue;
        }
        let year = match record[0].trim().parse::<i32>() {
            Ok(y) => y,
            Err(_) => {
                bad.push(line, &format!("bad year `{}`", &record[0]));
                continue;
            }
        };
        let exporter = match normalize_country(&record[1]) {
            Some(c) => c,
            None => {
                bad.push(line, &format!("bad exporter code `{}`", &record[1]));
                continue;
            }
        };
        let product = match normalize_product(&record[2]) {
            Some(p) => p,
            None => {
                bad.push(line, &format!("bad product code `{}`", &record[2]));
                continue;
            }
        };
        let value = match record[3].trim().parse::<f64>() {
            Ok(v) if v.is_finite() && v >= 0.0 => v,
            Ok(v) => {
                bad.push(line, &format!("negative or non-finite value {v}"));
                continue;
            }
            Err(_) => {
                bad.push(line, &format!("bad value `{}`", &record[3]));
                continue;
            }
        };
        if value == 0.0 {
            diagnostics.rows_zero_dropped += 1;
            continue;
        }
        cells.entry((year, exporter, product)).or_default().push(value);
    }
    bad.into_result()?;

    // Aggregate duplicates; summation order is canonical (sorted values).
    let mut aggregated: Vec<TradeRecord> = Vec::with_capacity(cells.len());
    for ((year, exporter, product), mut values) in cells {
        if values.len() > 1 {
            diagnostics.rows_merged += values.len() - 1;
            values.sort_by(f64::total_cmp);
        }
        aggregated.push(TradeRecord {
            year,
            exporter,
            product,
            value: values.iter().sum(),
        });
    }

    let before = aggregated.len();
    aggregated.retain(|r| config.keeps_year(r.year));
    diagnostics.rows_year_filtered = before - aggregated.len();

    let before = aggregated.len();
    aggregated.retain(|r| config.keeps_country(&r.exporter));
    diagnostics.rows_allowlist_filtered = before - aggregated.len();

    // Both trade thresholds are evaluated against totals of the same
    // pre-threshold table, then applied together.
    if config.min_country_trade > 0.0 || config.min_product_trade > 0.0 {
        let mut country_total: BTreeMap<(i32, &str), f64> = BTreeMap::new();
        let mut product_total: BTreeMap<(i32, &str), f64> = BTreeMap::new();
        for r in &aggregated {
            *country_total.entry((r.year, &r.exporter)).or_default() += r.value;
            *product_total.entry((r.year, &r.product)).or_default() += r.value;
        }
        diagnostics.countries_below_threshold = country_total
            .values()
            .filter(|&&t| t < config.min_country_trade)
            .count();
        diagnostics.products_below_threshold = product_total
            .values()
            .filter(|&&t| t < config.min_product_trade)
            .count();
        let keep: Vec<bool> = aggregated
            .iter()
            .map(|r| {
                country_total[&(r.year, r.exporter.as_str())] >= config.min_country_trade
                    && product_total[&(r.year, r.product.as_str())] >= config.min_product_trade
            })
            .collect();
        let mut idx = 0;
        aggregated.retain(|_| {
            let k = keep[idx];
            idx += 1;
            k
        });
        diagnostics.rows_threshold_filtered = keep.iter().filter(|&&k| !k).count();
    }

    if aggregated.is_empty() {
        return Err(Error::EmptySample);
    }
    // BTreeMap iteration already yields (year, exporter, product) order.
    Ok(TradeLoad {
        table: TradeTable { records: aggregated },
        diagnostics,
        warnings: Vec::new(),
    })
}

pub fn load_gini(path: &Path) -> Result<GiniLoad> {
    let file = open(path)?;
    load_gini_from_reader(file, &path.display().to_string())
}

pub fn load_gini_from_reader<R: Read>(reader: R, source: &str) -> Result<GiniLoad> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    check_header(&mut rdr, source, GINI_HEADER)?;

    let mut bad = BadRows::new(source);
    let mut warnings = Vec::new();
    let mut series: BTreeMap<String, Vec<(i32, f64)>> = BTreeMap::new();
    let mut seen: BTreeSet<(String, i32)> = BTreeSet::new();

    for record in rdr.records() {
        let record = record.map_err(|e| csv_read(source, e))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 3 {
            bad.push(line, "wrong field count");
            continue;
        }
        let country = match normalize_country(&record[0]) {
            Some(c) => c,
            None => {
                bad.push(line, &format!("bad country code `{}`", &record[0]));
                continue;
            }
        };
        let year = match record[1].trim().parse::<i32>() {
            Ok(y) => y,
            Err(_) => {
                bad.push(line, &format!("bad year `{}`", &record[1]));
                continue;
            }
        };
        let value = match record[2].trim().parse::<f64>() {
            Ok(v) if v.is_finite() => v,
            _ => {
                bad.push(line, &format!("bad gini `{}`", &record[2]));
                continue;
            }
        };
        if !(0.0..=100.0).contains(&value) {
            return Err(Error::GiniOutOfRange { country, year, value, line });
        }
        if !seen.insert((country.clone(), year)) {
            return Err(Error::DuplicateGini { country, year, line });
        }
        // Codes are opaque labels; an unusual shape is only worth a warning.
        if !looks_like_iso3(&country) {
            warnings.push(format!(
                "{source}:{line}: country code `{country}` does not look like ISO-3; row kept"
            ));
        }
        series.entry(country).or_default().push((year, value));
    }
    bad.into_result()?;

    for knots in series.values_mut() {
        knots.sort_by_key(|&(y, _)| y);
    }
    Ok(GiniLoad { table: GiniTable { series }, warnings })
}

/// Optional `product,section_name` lookup used by treemap grouping.
pub fn load_sections(path: &Path) -> Result<BTreeMap<String, String>> {
    let file = open(path)?;
    load_sections_from_reader(file, &path.display().to_string())
}

pub fn load_sections_from_reader<R: Read>(
    reader: R,
    source: &str,
) -> Result<BTreeMap<String, String>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    check_header(&mut rdr, source, SECTIONS_HEADER)?;
    let mut bad = BadRows::new(source);
    let mut sections = BTreeMap::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_read(source, e))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 2 {
            bad.push(line, "wrong field count");
            continue;
        }
        let product = match normalize_product(&record[0]) {
            Some(p) => p,
            None => {
                bad.push(line, &format!("bad product code `{}`", &record[0]));
                continue;
            }
        };
        let name = record[1].trim().to_string();
        if name.is_empty() {
            bad.push(line, "empty section name");
            continue;
        }
        if sections.insert(product.clone(), name).is_some() {
            bad.push(line, &format!("duplicate product `{product}`"));
        }
    }
    bad.into_result()?;
    Ok(sections)
}

/// Uppercased, trimmed country code; `None` when empty.
fn normalize_country(raw: &str) -> Option<String> {
    let code = raw.trim().to_ascii_uppercase();
    if code.is_empty() || code.chars().any(char::is_whitespace) {
        None
    } else {
        Some(code)
    }
}

/// Product codes are opaque keys; purely numeric codes shorter than 4 digits
/// are zero-padded to the 4-digit SITC width.
fn normalize_product(raw: &str) -> Option<String> {
    let code = raw.trim().to_string();
    if code.is_empty() || code.chars().any(char::is_whitespace) {
        return None;
    }
    if code.len() < 4 && code.bytes().all(|b| b.is_ascii_digit()) {
        Some(format!("{code:0>4}"))
    } else {
        Some(code)
    }
}

fn looks_like_iso3(code: &str) -> bool {
    code.len() == 3 && code.bytes().all(|b| b.is_ascii_uppercase())
}

struct BadRows {
    source: String,
    lines: Vec<u64>,
    details: Vec<String>,
    count: usize,
}

impl BadRows {
    fn new(source: &str) -> Self {
        BadRows { source: source.to_string(), lines: Vec::new(), details: Vec::new(), count: 0 }
    }

    fn push(&mut self, line: u64, detail: &str) {
        self.count += 1;
        if self.lines.len() < 20 {
            self.lines.push(line);
            self.details.push(format!("line {line}: {detail}"));
        }
    }

    fn into_result(self) -> Result<()> {
        if self.count == 0 {
            Ok(())
        } else {
            Err(Error::MalformedRows {
                path: self.source,
                count: self.count,
                lines: self.lines,
                details: self.details.join("; "),
            })
        }
    }
}

fn check_header<R: Read>(rdr: &mut csv::Reader<R>, source: &str, expected: &str) -> Result<()> {
    let headers = rdr.headers().map_err(|e| csv_read(source, e))?;
    let found = headers.iter().map(str::trim).collect::<Vec<_>>().join(",");
    if found != expected {
        return Err(Error::HeaderMismatch {
            path: source.to_string(),
            expected: expected.to_string(),
            found,
        });
    }
    Ok(())
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

fn csv_io(e: csv::Error) -> Error {
    Error::InvalidInput(format!("csv write failed: {e}"))
}

fn io_plain(e: std::io::Error) -> Error {
    Error::InvalidInput(format!("write failed: {e}"))
}

fn csv_read(source: &str, e: csv::Error) -> Error {
    Error::InvalidInput(format!("{source}: csv parse failed: {e}"))
}
