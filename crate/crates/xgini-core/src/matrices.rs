//! Per-year export matrices: shares, Balassa RCA, the binary specialization
//! matrix and its diversity/ubiquity marginals.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::ingest::TradeTable;

pub const MATRIX_HEADER: &str = "year,country,product,share,rca,m";

/// Dense export-value matrix for one year. Countries and products are
/// lexicographically ordered; rows and columns with no positive entry never
/// appear (zero-value rows are already dropped at load).
#[derive(Debug, Clone, PartialEq)]
pub struct YearSlice {
    pub year: i32,
    pub countries: Vec<String>,
    pub products: Vec<String>,
    pub x: Array2<f64>,
}

impl YearSlice {
    pub fn from_table(trade: &TradeTable, year: i32) -> Result<YearSlice> {
        Self::from_table_averaged(trade, year, &[year])
    }

    /// Slice labelled `year` whose values average `x_cp` over `years`
    /// (years absent from the table contribute zero).
    pub fn from_table_averaged(trade: &TradeTable, year: i32, years: &[i32]) -> Result<YearSlice> {
        if years.is_empty() {
            return Err(Error::Config("empty averaging window".to_string()));
        }
        let available = trade.years();
        if !years.iter().any(|y| available.binary_search(y).is_ok()) {
            return Err(Error::YearAbsent { year });
        }

        let mut cells: BTreeMap<(&str, &str), f64> = BTreeMap::new();
        for r in trade.records() {
            if years.contains(&r.year) {
                *cells.entry((&r.exporter, &r.product)).or_default() += r.value;
            }
        }
        let divisor = years.len() as f64;

        let mut countries: Vec<String> = cells.keys().map(|&(c, _)| c.to_string()).collect();
        countries.dedup();
        let mut products: Vec<String> = cells.keys().map(|&(_, p)| p.to_string()).collect();
        products.sort();
        products.dedup();

        let country_idx: BTreeMap<&str, usize> =
            countries.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
        let product_idx: BTreeMap<&str, usize> =
            products.iter().enumerate().map(|(i, p)| (p.as_str(), i)).collect();

        let mut x = Array2::zeros((countries.len(), products.len()));
        for ((c, p), v) in &cells {
            x[(country_idx[c], product_idx[p])] = v / divisor;
        }
        Ok(YearSlice { year, countries, products, x })
    }

    pub fn country_totals(&self) -> Vec<f64> {
        self.x.rows().into_iter().map(|row| row.sum()).collect()
    }

    pub fn world_total(&self) -> f64 {
        self.x.sum()
    }

    pub fn country_index(&self, code: &str) -> Option<usize> {
        self.countries.iter().position(|c| c == code)
    }
}

/// s_cp = x_cp / sum_p x_cp. Every row sums to 1.
pub fn compute_shares(slice: &YearSlice) -> Array2<f64> {
    let totals = slice.country_totals();
    let mut s = slice.x.clone();
    for (i, mut row) in s.rows_mut().into_iter().enumerate() {
        row.mapv_inplace(|v| v / totals[i]);
    }
    s
}

/// Balassa index R_cp = (x_cp / X_c) / (X_p / X) and the binary matrix
/// M_cp = 1 iff R_cp >= threshold.
pub fn compute_rca(slice: &YearSlice, threshold: f64) -> (Array2<f64>, Array2<u8>) {
    let country_totals = slice.country_totals();
    let world = slice.world_total();
    let product_totals: Vec<f64> =
        slice.x.columns().into_iter().map(|col| col.sum()).collect();

    let mut r = Array2::zeros(slice.x.dim());
    let mut m = Array2::zeros(slice.x.dim());
    for ((i, j), &x) in slice.x.indexed_iter() {
        let rca = (x / country_totals[i]) / (product_totals[j] / world);
        r[(i, j)] = rca;
        if rca >= threshold {
            m[(i, j)] = 1u8;
        }
    }
    (r, m)
}

/// Row sums (diversity k_c) and column sums (ubiquity k_p) of a binary matrix.
pub fn diversity_ubiquity(m: &ArrayView2<u8>) -> (Vec<u32>, Vec<u32>) {
    let diversity = m.rows().into_iter().map(|r| r.iter().map(|&b| b as u32).sum()).collect();
    let ubiquity = m.columns().into_iter().map(|c| c.iter().map(|&b| b as u32).sum()).collect();
    (diversity, ubiquity)
}

/// Shares, RCA and specialization matrix for one year, with marginals.
#[derive(Debug, Clone, PartialEq)]
pub struct SpecializationMatrices {
    pub year: i32,
    pub countries: Vec<String>,
    pub products: Vec<String>,
    pub shares: Array2<f64>,
    pub rca: Array2<f64>,
    pub m: Array2<u8>,
    pub diversity: Vec<u32>,
    pub ubiquity: Vec<u32>,
    pub rca_threshold: f64,
}

impl SpecializationMatrices {
    pub fn from_slice(slice: &YearSlice, rca_threshold: f64) -> SpecializationMatrices {
        let shares = compute_shares(slice);
        let (rca, m) = compute_rca(slice, rca_threshold);
        let (diversity, ubiquity) = diversity_ubiquity(&m.view());
        SpecializationMatrices {
            year: slice.year,
            countries: slice.countries.clone(),
            products: slice.products.clone(),
            shares,
            rca,
            m,
            diversity,
            ubiquity,
            rca_threshold,
        }
    }

    pub fn from_table(trade: &TradeTable, year: i32, rca_threshold: f64) -> Result<Self> {
        Ok(Self::from_slice(&YearSlice::from_table(trade, year)?, rca_threshold))
    }

    pub fn country_index(&self, code: &str) -> Option<usize> {
        self.countries.iter().position(|c| c == code)
    }

    /// Countries and products that keep at least one M entry; complexity
    /// scores are only defined over this sub-matrix.
    pub fn drop_empty_margins(&self) -> (SpecializationMatrices, Vec<String>, Vec<String>) {
        let keep_c: Vec<usize> =
            (0..self.countries.len()).filter(|&i| self.diversity[i] > 0).collect();
        let keep_p: Vec<usize> =
            (0..self.products.len()).filter(|&j| self.ubiquity[j] > 0).collect();
        let dropped_c = (0..self.countries.len())
            .filter(|i| !keep_c.contains(i))
            .map(|i| self.countries[i].clone())
            .collect();
        let dropped_p = (0..self.products.len())
            .filter(|j| !keep_p.contains(j))
            .map(|j| self.products[j].clone())
            .collect();
        if keep_c.len() == self.countries.len() && keep_p.len() == self.products.len() {
            return (self.clone(), dropped_c, dropped_p);
        }

        let select = |a: &Array2<f64>| {
            Array2::from_shape_fn((keep_c.len(), keep_p.len()), |(i, j)| {
                a[(keep_c[i], keep_p[j])]
            })
        };
        let m = Array2::from_shape_fn((keep_c.len(), keep_p.len()), |(i, j)| {
            self.m[(keep_c[i], keep_p[j])]
        });
        let (diversity, ubiquity) = diversity_ubiquity(&m.view());
        let sub = SpecializationMatrices {
            year: self.year,
            countries: keep_c.iter().map(|&i| self.countries[i].clone()).collect(),
            products: keep_p.iter().map(|&j| self.products[j].clone()).collect(),
            shares: select(&self.shares),
            rca: select(&self.rca),
            m,
            diversity,
            ubiquity,
            rca_threshold: self.rca_threshold,
        };
        (sub, dropped_c, dropped_p)
    }

    /// Canonical audit dump: one row per (country, product) cell with a
    /// positive share or a set M bit.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["year", "country", "product", "share", "rca", "m"])
            .map_err(|e| Error::InvalidInput(format!("csv write failed: {e}")))?;
        for (i, country) in self.countries.iter().enumerate() {
            for (j, product) in self.products.iter().enumerate() {
                let share = self.shares[(i, j)];
                let m = self.m[(i, j)];
                if share == 0.0 && m == 0 {
                    continue;
                }
                w.write_record([
                    self.year.to_string(),
                    country.clone(),
                    product.clone(),
                    share.to_string(),
                    self.rca[(i, j)].to_string(),
                    m.to_string(),
                ])
                .map_err(|e| Error::InvalidInput(format!("csv write failed: {e}")))?;
            }
        }
        w.flush().map_err(|e| Error::InvalidInput(format!("write failed: {e}")))?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("csv output is utf-8")
    }

    /// Reads a dump produced by [`write_csv`]. The threshold cannot be
    /// recovered from the file and must be passed back in.
    pub fn read_csv<R: Read>(reader: R, source: &str, rca_threshold: f64) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| Error::InvalidInput(format!("{source}: {e}")))?
            .iter()
            .collect::<Vec<_>>()
            .join(",");
        if headers != MATRIX_HEADER {
            return Err(Error::HeaderMismatch {
                path: source.to_string(),
                expected: MATRIX_HEADER.to_string(),
                found: headers,
            });
        }
        let mut year: Option<i32> = None;
        let mut cells: Vec<(String, String, f64, f64, u8)> = Vec::new();
        for record in rdr.records() {
            let record = record.map_err(|e| Error::InvalidInput(format!("{source}: {e}")))?;
            let parse = |msg: &str| Error::InvalidInput(format!("{source}: bad {msg}"));
            if record.len() != 6 {
                return Err(parse("field count"));
            }
            let y: i32 = record[0].parse().map_err(|_| parse("year"))?;
            match year {
                None => year = Some(y),
                Some(prev) if prev != y => {
                    return Err(Error::InvalidInput(format!(
                        "{source}: mixed years {prev} and {y}"
                    )))
                }
                _ => {}
            }
            cells.push((
                record[1].to_string(),
                record[2].to_string(),
                record[3].parse().map_err(|_| parse("share"))?,
                record[4].parse().map_err(|_| parse("rca"))?,
                record[5].parse().map_err(|_| parse("m"))?,
            ));
        }
        let year = year.ok_or_else(|| Error::InvalidInput(format!("{source}: empty dump")))?;

        let mut countries: Vec<String> = cells.iter().map(|c| c.0.clone()).collect();
        countries.sort();
        countries.dedup();
        let mut products: Vec<String> = cells.iter().map(|c| c.1.clone()).collect();
        products.sort();
        products.dedup();
        let ci: BTreeMap<&str, usize> =
            countries.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
        let pi: BTreeMap<&str, usize> =
            products.iter().enumerate().map(|(i, p)| (p.as_str(), i)).collect();

        let mut shares = Array2::zeros((countries.len(), products.len()));
        let mut rca = Array2::zeros((countries.len(), products.len()));
        let mut m = Array2::zeros((countries.len(), products.len()));
        for (c, p, s, r, b) in &cells {
            let at = (ci[c.as_str()], pi[p.as_str()]);
            shares[at] = *s;
            rca[at] = *r;
            m[at] = *b;
        }
        let (diversity, ubiquity) = diversity_ubiquity(&m.view());
        Ok(SpecializationMatrices {
            year,
            countries,
            products,
            shares,
            rca,
            m,
            diversity,
            ubiquity,
            rca_threshold,
        })
    }
}
