//! Gini interpolation, the Product Gini Index, the Xgini coefficient and
//! regional aggregates.
//!
//! PGI_p averages the Gini of p's specialized exporters weighted by their
//! export shares; Xgini_c averages the PGIs over c's specialization basket,
//! normalized so it is a true weighted average even when some PGIs are
//! missing. Gini values flow through on [0, 1].

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};
use crate::ingest::GiniTable;
use crate::matrices::SpecializationMatrices;

pub const PGI_HEADER: &str = "year,product,pgi,support";
pub const XGINI_HEADER: &str = "year,country,xgini,n_c,coverage";
pub const REGIONS_HEADER: &str = "year,group,mean_xgini,n_members";
pub const INTERPOLATED_HEADER: &str = "country,year,gini,source";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GiniSource {
    Observed,
    Interpolated,
}

impl GiniSource {
    fn label(self) -> &'static str {
        match self {
            GiniSource::Observed => "observed",
            GiniSource::Interpolated => "interpolated",
        }
    }
}

/// One country's Gini series on every integer year between its first and
/// last observation. Never extrapolates.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpolatedGini {
    pub country: String,
    values: BTreeMap<i32, (f64, GiniSource)>,
}

impl InterpolatedGini {
    pub fn value01(&self, year: i32) -> Option<f64> {
        self.values.get(&year).map(|&(v, _)| v)
    }

    pub fn source(&self, year: i32) -> Option<GiniSource> {
        self.values.get(&year).map(|&(_, s)| s)
    }

    pub fn first_year(&self) -> i32 {
        *self.values.keys().next().expect("non-empty series")
    }

    pub fn last_year(&self) -> i32 {
        *self.values.keys().next_back().expect("non-empty series")
    }

    pub fn iter(&self) -> impl Iterator<Item = (i32, f64, GiniSource)> + '_ {
        self.values.iter().map(|(&y, &(v, s))| (y, v, s))
    }
}

/// Linear spline through the observed knots. Knot years reproduce the stored
/// value exactly; interpolation runs on the raw [0, 100] scale so that
/// integer-valued knots yield exact midpoints.
pub fn interpolate_gini(table: &GiniTable, country: &str) -> Result<InterpolatedGini> {
    let knots = table
        .knots_raw(country)
        .filter(|k| !k.is_empty())
        .ok_or_else(|| Error::NoGiniObservations { country: country.to_string() })?;

    let mut values = BTreeMap::new();
    for window in knots.windows(2) {
        let (y0, g0) = window[0];
        let (y1, g1) = window[1];
        values.insert(y0, (g0 / 100.0, GiniSource::Observed));
        let span = (y1 - y0) as f64;
        for year in (y0 + 1)..y1 {
            let w1 = (year - y0) as f64;
            let w0 = (y1 - year) as f64;
            let raw = (g0 * w0 + g1 * w1) / span;
            values.insert(year, (raw / 100.0, GiniSource::Interpolated));
        }
    }
    let &(last_year, last_raw) = knots.last().expect("non-empty knots");
    values.insert(last_year, (last_raw / 100.0, GiniSource::Observed));

    Ok(InterpolatedGini { country: country.to_string(), values })
}

pub fn interpolate_all(table: &GiniTable) -> BTreeMap<String, InterpolatedGini> {
    table
        .countries()
        .map(|c| (c.to_string(), interpolate_gini(table, c).expect("country has knots")))
        .collect()
}

/// `country,year,gini,source` dump of an interpolated panel.
pub fn write_interpolated_csv(panel: &BTreeMap<String, InterpolatedGini>) -> String {
    let mut out = String::from("country,year,gini,source\n");
    for (country, series) in panel {
        for (year, value, source) in series.iter() {
            let _ = writeln!(out, "{country},{year},{value},{}", source.label());
        }
    }
    out
}

pub fn read_interpolated_csv<R: Read>(
    reader: R,
    source: &str,
) -> Result<BTreeMap<String, InterpolatedGini>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    check_header(&mut rdr, source, INTERPOLATED_HEADER)?;
    let mut panel: BTreeMap<String, InterpolatedGini> = BTreeMap::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::InvalidInput(format!("{source}: {e}")))?;
        if record.len() != 4 {
            return Err(Error::InvalidInput(format!("{source}: wrong field count")));
        }
        let bad = |what: &str| Error::InvalidInput(format!("{source}: bad {what}"));
        let country = record[0].to_string();
        let year: i32 = record[1].parse().map_err(|_| bad("year"))?;
        let value: f64 = record[2].parse().map_err(|_| bad("gini"))?;
        let src = match &record[3] {
            "observed" => GiniSource::Observed,
            "interpolated" => GiniSource::Interpolated,
            _ => return Err(bad("source")),
        };
        panel
            .entry(country.clone())
            .or_insert_with(|| InterpolatedGini { country, values: BTreeMap::new() })
            .values
            .insert(year, (value, src));
    }
    Ok(panel)
}

/// Gini per country for one year, drawn from the interpolated panel.
pub fn gini_for_year(panel: &BTreeMap<String, InterpolatedGini>, year: i32) -> BTreeMap<String, f64> {
    panel
        .iter()
        .filter_map(|(c, series)| series.value01(year).map(|v| (c.clone(), v)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PgiEntry {
    pub pgi: f64,
    /// Number of specialized exporters with Gini data behind this value.
    pub support: u32,
}

/// PGI per product for one year. Products without any Gini-covered
/// specialized exporter are absent, not zero.
#[derive(Debug, Clone, PartialEq)]
pub struct PgiTable {
    pub year: i32,
    values: BTreeMap<String, PgiEntry>,
    pub warnings: Vec<String>,
}

impl PgiTable {
    pub fn get(&self, product: &str) -> Option<&PgiEntry> {
        self.values.get(product)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &PgiEntry)> {
        self.values.iter().map(|(p, e)| (p.as_str(), e))
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("year,product,pgi,support\n");
        for (product, e) in &self.values {
            let _ = writeln!(out, "{},{product},{},{}", self.year, e.pgi, e.support);
        }
        out
    }

    pub fn read_csv<R: Read>(reader: R, source: &str) -> Result<PgiTable> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        check_header(&mut rdr, source, PGI_HEADER)?;
        let mut year = None;
        let mut values = BTreeMap::new();
        for record in rdr.records() {
            let record = record.map_err(|e| Error::InvalidInput(format!("{source}: {e}")))?;
            if record.len() != 4 {
                return Err(Error::InvalidInput(format!("{source}: wrong field count")));
            }
            let bad = |what: &str| Error::InvalidInput(format!("{source}: bad {what}"));
            let y: i32 = record[0].parse().map_err(|_| bad("year"))?;
            year.get_or_insert(y);
            values.insert(
                record[1].to_string(),
                PgiEntry {
                    pgi: record[2].parse().map_err(|_| bad("pgi"))?,
                    support: record[3].parse().map_err(|_| bad("support"))?,
                },
            );
        }
        let year = year.ok_or_else(|| Error::InvalidInput(format!("{source}: empty table")))?;
        Ok(PgiTable { year, values, warnings: Vec::new() })
    }
}

/// PGI_p = sum_c M_cp s_cp gini_c / sum_c M_cp s_cp over Gini-covered
/// specialized exporters.
pub fn compute_pgi(sm: &SpecializationMatrices, gini01: &BTreeMap<String, f64>) -> PgiTable {
    let mut values = BTreeMap::new();
    let mut warnings = Vec::new();
    for (j, product) in sm.products.iter().enumerate() {
        let mut num = 0.0;
        let mut den = 0.0;
        let mut support = 0u32;
        for (i, country) in sm.countries.iter().enumerate() {
            if sm.m[(i, j)] != 1 {
                continue;
            }
            if let Some(&g) = gini01.get(country) {
                let s = sm.shares[(i, j)];
                num += s * g;
                den += s;
                support += 1;
            }
        }
        if support == 0 || den <= 0.0 {
            warnings.push(format!(
                "product {product}: no Gini-covered specialized exporter in {}; omitted",
                sm.year
            ));
            continue;
        }
        values.insert(product.clone(), PgiEntry { pgi: num / den, support });
    }
    PgiTable { year: sm.year, values, warnings }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct XginiEntry {
    pub xgini: f64,
    /// Normalizer over the full specialization basket.
    pub n_c: f64,
    /// Export-share mass of basket products that have a defined PGI; this is
    /// the normalizer actually used for the weighted average.
    pub coverage: f64,
}

/// Xgini per country for one year. Countries with no PGI-covered basket are
/// absent, not zero.
#[derive(Debug, Clone, PartialEq)]
pub struct XginiTable {
    pub year: i32,
    values: BTreeMap<String, XginiEntry>,
    pub warnings: Vec<String>,
}

impl XginiTable {
    pub fn get(&self, country: &str) -> Option<&XginiEntry> {
        self.values.get(country)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &XginiEntry)> {
        self.values.iter().map(|(c, e)| (c.as_str(), e))
    }

    /// Keeps only the listed countries (sample restrictions).
    pub fn retain_countries(&mut self, keep: &std::collections::BTreeSet<String>) {
        self.values.retain(|c, _| keep.contains(c));
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("year,country,xgini,n_c,coverage\n");
        for (country, e) in &self.values {
            let _ = writeln!(out, "{},{country},{},{},{}", self.year, e.xgini, e.n_c, e.coverage);
        }
        out
    }

    pub fn read_csv<R: Read>(reader: R, source: &str) -> Result<XginiTable> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        check_header(&mut rdr, source, XGINI_HEADER)?;
        let mut year = None;
        let mut values = BTreeMap::new();
        for record in rdr.records() {
            let record = record.map_err(|e| Error::InvalidInput(format!("{source}: {e}")))?;
            if record.len() != 5 {
                return Err(Error::InvalidInput(format!("{source}: wrong field count")));
            }
            let bad = |what: &str| Error::InvalidInput(format!("{source}: bad {what}"));
            let y: i32 = record[0].parse().map_err(|_| bad("year"))?;
            year.get_or_insert(y);
            values.insert(
                record[1].to_string(),
                XginiEntry {
                    xgini: record[2].parse().map_err(|_| bad("xgini"))?,
                    n_c: record[3].parse().map_err(|_| bad("n_c"))?,
                    coverage: record[4].parse().map_err(|_| bad("coverage"))?,
                },
            );
        }
        let year = year.ok_or_else(|| Error::InvalidInput(format!("{source}: empty table")))?;
        Ok(XginiTable { year, values, warnings: Vec::new() })
    }
}

/// Xgini_c = (1/N_c) sum_p M_cp s_cp PGI_p, with the normalizer restricted
/// to products whose PGI exists so the result stays a weighted average.
pub fn compute_xgini(sm: &SpecializationMatrices, pgi: &PgiTable) -> XginiTable {
    let mut values = BTreeMap::new();
    let mut warnings = Vec::new();
    for (i, country) in sm.countries.iter().enumerate() {
        let mut n_c = 0.0;
        let mut num = 0.0;
        let mut covered = 0.0;
        let mut basket = 0u32;
        for (j, product) in sm.products.iter().enumerate() {
            if sm.m[(i, j)] != 1 {
                continue;
            }
            basket += 1;
            let s = sm.shares[(i, j)];
            n_c += s;
            if let Some(e) = pgi.get(product) {
                num += s * e.pgi;
                covered += s;
            }
        }
        if basket == 0 {
            warnings.push(format!("country {country}: empty specialization basket in {}; omitted", sm.year));
            continue;
        }
        if covered <= 0.0 {
            warnings.push(format!(
                "country {country}: no PGI-covered basket product in {}; omitted",
                sm.year
            ));
            continue;
        }
        values.insert(
            country.clone(),
            XginiEntry { xgini: num / covered, n_c, coverage: covered },
        );
    }
    XginiTable { year: sm.year, values, warnings }
}

/// Named country groups for regional aggregates. The built-in rosters follow
/// the two comparison groups used throughout the analysis and can be
/// overridden from a rosters file.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionRosters {
    groups: BTreeMap<String, Vec<String>>,
}

impl Default for RegionRosters {
    fn default() -> Self {
        let hpae = ["CHN", "KOR", "SGP", "THA", "MYS", "PHL"];
        let lac = [
            "MEX", "PAN", "URY", "ARG", "COL", "CRI", "BRA", "SLV", "CHL", "TTO", "JAM", "GTM",
            "PRY", "DOM", "PER", "HND", "BOL", "ECU", "NIC", "VEN",
        ];
        let mut groups = BTreeMap::new();
        groups.insert("HPAE".to_string(), hpae.iter().map(|s| s.to_string()).collect());
        groups.insert("LAC".to_string(), lac.iter().map(|s| s.to_string()).collect());
        RegionRosters { groups }
    }
}

impl RegionRosters {
    /// One group per line: `NAME: CODE,CODE,...`; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut groups = BTreeMap::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (name, members) = line.split_once(':').ok_or_else(|| {
                Error::Config(format!("rosters line {}: expected `NAME: CODE,...`", idx + 1))
            })?;
            let name = name.trim().to_string();
            let members: Vec<String> = members
                .split(',')
                .map(|c| c.trim().to_ascii_uppercase())
                .filter(|c| !c.is_empty())
                .collect();
            if name.is_empty() || members.is_empty() {
                return Err(Error::Config(format!("rosters line {}: empty group", idx + 1)));
            }
            if groups.insert(name.clone(), members).is_some() {
                return Err(Error::Config(format!("duplicate roster group `{name}`")));
            }
        }
        if groups.is_empty() {
            return Err(Error::Config("rosters file defines no groups".to_string()));
        }
        Ok(RegionRosters { groups })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
        Self::parse(&text)
    }

    pub fn groups(&self) -> impl Iterator<Item = (&str, &[String])> {
        self.groups.iter().map(|(n, m)| (n.as_str(), m.as_slice()))
    }

    pub fn get(&self, name: &str) -> Option<&[String]> {
        self.groups.get(name).map(Vec::as_slice)
    }

    pub fn all_members(&self) -> Vec<String> {
        let mut members: Vec<String> = self.groups.values().flatten().cloned().collect();
        members.sort();
        members.dedup();
        members
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionalPoint {
    pub year: i32,
    pub group: String,
    pub mean_xgini: f64,
    pub n_members: u32,
}

/// Unweighted per-year group means; members without a value that year are
/// dropped and counted out, empty group-years produce no row.
pub fn regional_series(tables: &[XginiTable], rosters: &RegionRosters) -> Vec<RegionalPoint> {
    let mut points = Vec::new();
    let mut sorted: Vec<&XginiTable> = tables.iter().collect();
    sorted.sort_by_key(|t| t.year);
    for table in sorted {
        for (group, members) in rosters.groups() {
            let values: Vec<f64> =
                members.iter().filter_map(|m| table.get(m)).map(|e| e.xgini).collect();
            if values.is_empty() {
                continue;
            }
            points.push(RegionalPoint {
                year: table.year,
                group: group.to_string(),
                mean_xgini: values.iter().sum::<f64>() / values.len() as f64,
                n_members: values.len() as u32,
            });
        }
    }
    points
}

pub fn write_regions_csv(points: &[RegionalPoint]) -> String {
    let mut out = String::from("year,group,mean_xgini,n_members\n");
    for p in points {
        let _ = writeln!(out, "{},{},{},{}", p.year, p.group, p.mean_xgini, p.n_members);
    }
    out
}

/// Trailing mean over the last `window` calendar years that carry a value;
/// windows of 0 or 1 leave the series untouched. Years absent from the input
/// stay absent.
pub fn smooth_trailing(series: &[(i32, f64)], window: usize) -> Vec<(i32, f64)> {
    if window <= 1 {
        return series.to_vec();
    }
    let by_year: BTreeMap<i32, f64> = series.iter().copied().collect();
    by_year
        .iter()
        .map(|(&year, _)| {
            let lo = year - window as i32 + 1;
            let vals: Vec<f64> =
                by_year.range(lo..=year).map(|(_, &v)| v).collect();
            (year, vals.iter().sum::<f64>() / vals.len() as f64)
        })
        .collect()
}

fn check_header<R: Read>(rdr: &mut csv::Reader<R>, source: &str, expected: &str) -> Result<()> {
    let headers = rdr
        .headers()
        .map_err(|e| Error::InvalidInput(format!("{source}: {e}")))?
        .iter()
        .map(str::trim)
        .collect::<Vec<_>>()
        .join(",");
    if headers != expected {
        return Err(Error::HeaderMismatch {
            path: source.to_string(),
            expected: expected.to_string(),
            found: headers,
        });
    }
    Ok(())
}
