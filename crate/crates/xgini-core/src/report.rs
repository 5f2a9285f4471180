//! Presentation artifacts: sectioned ranking tables, treemap aggregations,
//! product-space overlays (GraphML/SVG) and long-form time series.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::complexity::{rank_by_eci, ComplexityScores, RankEntry};
use crate::error::{Error, Result};
use crate::inequality::{PgiTable, RegionRosters};
use crate::ingest::TradeTable;
use crate::matrices::{SpecializationMatrices, YearSlice};
use crate::prodspace::{NodeOverlay, OverlayTable, ProductSpaceGraph};

pub const RANKING_HEADER: &str = "section,rank,country,eci,tied";
pub const TREEMAP_HEADER: &str = "section,product,value,share";
pub const TIMESERIES_HEADER: &str = "year,entity,metric,value";

/// Low/high endpoints of the linear PGI color ramp, documented in the SVG
/// metadata.
pub const PGI_COLOR_LOW: (u8, u8, u8) = (0x2c, 0x7b, 0xb6);
pub const PGI_COLOR_HIGH: (u8, u8, u8) = (0xd7, 0x19, 0x1c);
const PGI_COLOR_UNDEFINED: &str = "#bbbbbb";

#[derive(Debug, Clone, PartialEq)]
pub struct RankingRow {
    pub section: String,
    /// Global rank; `None` for roster members missing from the scores.
    pub rank: Option<u32>,
    pub country: String,
    pub eci: Option<f64>,
    pub tied: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankingReport {
    pub year: i32,
    pub rows: Vec<RankingRow>,
    pub warnings: Vec<String>,
}

impl RankingReport {
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("section,rank,country,eci,tied\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.section,
                r.rank.map_or(String::new(), |v| v.to_string()),
                r.country,
                r.eci.map_or(String::new(), |v| v.to_string()),
                r.tied
            );
        }
        out
    }
}

/// Table-1 style report: global top-5 block, one block per roster group with
/// global ranks, then the bottom-5 block. Roster members without a score get
/// a blank-rank row plus a warning.
pub fn make_ranking_report(scores: &ComplexityScores, rosters: &RegionRosters) -> RankingReport {
    let ranked = rank_by_eci(scores, None);
    let by_code: BTreeMap<&str, &RankEntry> =
        ranked.iter().map(|e| (e.code.as_str(), e)).collect();
    let mut rows = Vec::new();
    let mut warnings = Vec::new();

    let head = ranked.iter().take(5);
    for e in head {
        rows.push(RankingRow {
            section: "top5".to_string(),
            rank: Some(e.rank),
            country: e.code.clone(),
            eci: Some(e.score),
            tied: e.tied,
        });
    }
    for (group, members) in rosters.groups() {
        let mut block: Vec<RankingRow> = Vec::new();
        for code in members {
            match by_code.get(code.as_str()) {
                Some(e) => block.push(RankingRow {
                    section: group.to_string(),
                    rank: Some(e.rank),
                    country: code.clone(),
                    eci: Some(e.score),
                    tied: e.tied,
                }),
                None => {
                    warnings.push(format!("{group}: {code} absent from {} scores", scores.year));
                    block.push(RankingRow {
                        section: group.to_string(),
                        rank: None,
                        country: code.clone(),
                        eci: None,
                        tied: false,
                    });
                }
            }
        }
        block.sort_by(|a, b| match (a.rank, b.rank) {
            (Some(x), Some(y)) => x.cmp(&y),
            (Some(_), None) => std::cmp::Ordering::Less,
            (None, Some(_)) => std::cmp::Ordering::Greater,
            (None, None) => a.country.cmp(&b.country),
        });
        rows.extend(block);
    }
    let tail_start = ranked.len().saturating_sub(5);
    for e in &ranked[tail_start..] {
        rows.push(RankingRow {
            section: "bottom5".to_string(),
            rank: Some(e.rank),
            country: e.code.clone(),
            eci: Some(e.score),
            tied: e.tied,
        });
    }
    RankingReport { year: scores.year, rows, warnings }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreemapLeaf {
    pub product: String,
    pub value: f64,
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreemapGroup {
    pub section: String,
    pub total: f64,
    pub share: f64,
    pub leaves: Vec<TreemapLeaf>,
}

/// Hierarchical section/product aggregation of one scope's exports.
#[derive(Debug, Clone, PartialEq)]
pub struct TreemapSpec {
    pub scope: String,
    pub year: i32,
    pub total: f64,
    pub groups: Vec<TreemapGroup>,
}

impl TreemapSpec {
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("section,product,value,share\n");
        for g in &self.groups {
            for leaf in &g.leaves {
                let _ =
                    writeln!(out, "{},{},{},{}", g.section, leaf.product, leaf.value, leaf.share);
            }
        }
        out
    }
}

/// Aggregates the scope countries' exports by section, then product. Without
/// a sections lookup everything lands in one flat group. Groups and leaves
/// are sorted by descending value, then name.
pub fn make_treemap(
    trade: &TradeTable,
    scope: &BTreeSet<String>,
    year: i32,
    scope_label: &str,
    sections: Option<&BTreeMap<String, String>>,
) -> Result<TreemapSpec> {
    let mut by_product: BTreeMap<&str, f64> = BTreeMap::new();
    for r in trade.records() {
        if r.year == year && scope.contains(&r.exporter) {
            *by_product.entry(&r.product).or_default() += r.value;
        }
    }
    if by_product.is_empty() {
        return Err(Error::EmptyScope { scope: scope_label.to_string(), year });
    }
    // Summing leaf values in one fixed order keeps the conservation law
    // exact: total == sum of every group's leaves.
    let total: f64 = by_product.values().sum();

    let mut grouped: BTreeMap<String, Vec<TreemapLeaf>> = BTreeMap::new();
    for (product, value) in &by_product {
        let section = sections
            .and_then(|s| s.get(*product).cloned())
            .unwrap_or_else(|| if sections.is_some() { "unclassified".to_string() } else { "all".to_string() });
        grouped.entry(section).or_default().push(TreemapLeaf {
            product: product.to_string(),
            value: *value,
            share: *value / total,
        });
    }
    let mut groups: Vec<TreemapGroup> = grouped
        .into_iter()
        .map(|(section, mut leaves)| {
            leaves.sort_by(|a, b| b.value.total_cmp(&a.value).then_with(|| a.product.cmp(&b.product)));
            let group_total: f64 = leaves.iter().map(|l| l.value).sum();
            TreemapGroup { section, total: group_total, share: group_total / total, leaves }
        })
        .collect();
    groups.sort_by(|a, b| b.total.total_cmp(&a.total).then_with(|| a.section.cmp(&b.section)));
    Ok(TreemapSpec { scope: scope_label.to_string(), year, total, groups })
}

/// What an overlay colors and sizes: one country's (or aggregated group's)
/// shares, specialization flags and the PGI palette values.
#[derive(Debug, Clone, PartialEq)]
pub struct OverlayFrame {
    pub year: i32,
    pub entity: String,
    pub products: Vec<String>,
    pub share: Vec<f64>,
    pub rca: Vec<bool>,
    pub pgi: Vec<Option<f64>>,
}

impl OverlayFrame {
    pub fn attr_table(&self) -> OverlayTable {
        self.products
            .iter()
            .enumerate()
            .map(|(i, p)| {
                (
                    p.clone(),
                    NodeOverlay { share: self.share[i], rca: self.rca[i], pgi: self.pgi[i] },
                )
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum OverlayScope {
    Country(String),
    Group { name: String, members: Vec<String> },
}

impl OverlayScope {
    pub fn label(&self) -> &str {
        match self {
            OverlayScope::Country(c) => c,
            OverlayScope::Group { name, .. } => name,
        }
    }
}

/// Builds the overlay values over the graph's product universe. For a group
/// scope the member rows are aggregated and the specialization flag is the
/// Balassa test of the aggregate against the same world totals.
pub fn make_overlay(
    graph: &ProductSpaceGraph,
    slice: &YearSlice,
    sm: &SpecializationMatrices,
    pgi: &PgiTable,
    scope: &OverlayScope,
) -> Result<OverlayFrame> {
    for p in &sm.products {
        if graph.node_index(p).is_none() {
            return Err(Error::InvalidInput(format!(
                "product {p} is missing from the product-space graph; universes differ"
            )));
        }
    }

    // Raw export row of the scope, aligned with slice products.
    let row: Vec<f64> = match scope {
        OverlayScope::Country(code) => {
            let i = slice
                .country_index(code)
                .ok_or_else(|| Error::EmptyScope { scope: code.clone(), year: slice.year })?;
            slice.x.row(i).to_vec()
        }
        OverlayScope::Group { name, members } => {
            let rows: Vec<usize> =
                members.iter().filter_map(|m| slice.country_index(m)).collect();
            if rows.is_empty() {
                return Err(Error::EmptyScope { scope: name.clone(), year: slice.year });
            }
            (0..slice.products.len())
                .map(|j| rows.iter().map(|&i| slice.x[(i, j)]).sum())
                .collect()
        }
    };
    let scope_total: f64 = row.iter().sum();
    if scope_total <= 0.0 {
        return Err(Error::EmptyScope { scope: scope.label().to_string(), year: slice.year });
    }

    let world = slice.world_total();
    let product_totals: Vec<f64> =
        slice.x.columns().into_iter().map(|c| c.sum()).collect();

    let mut products = Vec::with_capacity(graph.nodes.len());
    let mut share = Vec::with_capacity(graph.nodes.len());
    let mut rca = Vec::with_capacity(graph.nodes.len());
    let mut pgis = Vec::with_capacity(graph.nodes.len());
    for node in &graph.nodes {
        let j = slice.products.iter().position(|p| p == &node.product);
        let (s, flag) = match j {
            Some(j) => {
                let s = row[j] / scope_total;
                let balassa = s / (product_totals[j] / world);
                (s, balassa >= sm.rca_threshold)
            }
            None => (0.0, false),
        };
        products.push(node.product.clone());
        share.push(s);
        rca.push(flag);
        pgis.push(pgi.get(&node.product).map(|e| e.pgi));
    }
    Ok(OverlayFrame {
        year: slice.year,
        entity: scope.label().to_string(),
        products,
        share,
        rca,
        pgi: pgis,
    })
}

/// Deterministic SVG 1.1 rendering of an overlay: edges under circles, node
/// area proportional to export share, fill from the linear PGI ramp, stroke
/// ring on specialized products. Requires coordinates for every node.
pub fn render_overlay_svg(
    graph: &ProductSpaceGraph,
    frame: &OverlayFrame,
    coords: &BTreeMap<String, (f64, f64)>,
) -> Result<String> {
    let missing: Vec<&str> = graph
        .nodes
        .iter()
        .filter(|n| !coords.contains_key(&n.product))
        .map(|n| n.product.as_str())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingCoordinates {
            count: missing.len(),
            examples: missing.iter().take(10).cloned().collect::<Vec<_>>().join(", "),
        });
    }

    let defined: Vec<f64> = frame.pgi.iter().flatten().copied().collect();
    let (pgi_min, pgi_max) = defined
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));

    let (mut min_x, mut min_y, mut max_x, mut max_y) =
        (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for n in &graph.nodes {
        let (x, y) = coords[&n.product];
        min_x = min_x.min(x);
        min_y = min_y.min(y);
        max_x = max_x.max(x);
        max_y = max_y.max(y);
    }
    let pad = 30.0;
    let width = (max_x - min_x).max(1.0) + 2.0 * pad;
    let height = (max_y - min_y).max(1.0) + 2.0 * pad;
    let ox = min_x - pad;
    let oy = min_y - pad;

    let mut out = String::new();
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" \
         viewBox=\"{ox} {oy} {width} {height}\">"
    );
    let _ = writeln!(
        out,
        "  <metadata>overlay entity={} year={}; pgi color scale: linear ramp \
         rgb({},{},{}) at {} to rgb({},{},{}) at {}; undefined pgi {}</metadata>",
        frame.entity,
        frame.year,
        PGI_COLOR_LOW.0,
        PGI_COLOR_LOW.1,
        PGI_COLOR_LOW.2,
        if defined.is_empty() { "n/a".to_string() } else { pgi_min.to_string() },
        PGI_COLOR_HIGH.0,
        PGI_COLOR_HIGH.1,
        PGI_COLOR_HIGH.2,
        if defined.is_empty() { "n/a".to_string() } else { pgi_max.to_string() },
        PGI_COLOR_UNDEFINED,
    );
    for e in &graph.edges {
        let (x1, y1) = coords[&graph.nodes[e.a].product];
        let (x2, y2) = coords[&graph.nodes[e.b].product];
        let width = if e.backbone { "1.5" } else { "0.75" };
        let _ = writeln!(
            out,
            "  <line x1=\"{x1}\" y1=\"{y1}\" x2=\"{x2}\" y2=\"{y2}\" \
             stroke=\"#999999\" stroke-width=\"{width}\"/>"
        );
    }
    for (i, n) in graph.nodes.iter().enumerate() {
        let (x, y) = coords[&n.product];
        let idx = frame.products.iter().position(|p| p == &n.product);
        let (share, rca, pgi) = match idx {
            Some(i) => (frame.share[i], frame.rca[i], frame.pgi[i]),
            None => (0.0, false, None),
        };
        // Area proportional to the export share.
        let r = 18.0 * share.max(0.0).sqrt();
        let fill = match pgi {
            Some(v) => ramp_color(v, pgi_min, pgi_max),
            None => PGI_COLOR_UNDEFINED.to_string(),
        };
        let stroke = if rca { " stroke=\"#222222\" stroke-width=\"1.2\"" } else { "" };
        let _ = writeln!(
            out,
            "  <circle id=\"n{i}\" cx=\"{x}\" cy=\"{y}\" r=\"{r}\" fill=\"{fill}\"{stroke}/>"
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}

fn ramp_color(value: f64, lo: f64, hi: f64) -> String {
    let t = if hi > lo { ((value - lo) / (hi - lo)).clamp(0.0, 1.0) } else { 0.5 };
    let mix = |a: u8, b: u8| (a as f64 + t * (b as f64 - a as f64)).round() as u8;
    format!(
        "#{:02x}{:02x}{:02x}",
        mix(PGI_COLOR_LOW.0, PGI_COLOR_HIGH.0),
        mix(PGI_COLOR_LOW.1, PGI_COLOR_HIGH.1),
        mix(PGI_COLOR_LOW.2, PGI_COLOR_HIGH.2)
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeseriesRow {
    pub year: i32,
    pub entity: String,
    pub metric: String,
    pub value: f64,
}

/// Long-form series collector; rows come out sorted by (year, entity,
/// metric) and gaps stay gaps.
#[derive(Debug, Clone, Default)]
pub struct TimeseriesBuilder {
    rows: Vec<TimeseriesRow>,
    pub warnings: Vec<String>,
}

impl TimeseriesBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, year: i32, entity: &str, metric: &str, value: f64) {
        self.rows.push(TimeseriesRow {
            year,
            entity: entity.to_string(),
            metric: metric.to_string(),
            value,
        });
    }

    pub fn warn(&mut self, message: String) {
        self.warnings.push(message);
    }

    pub fn finish(mut self) -> Vec<TimeseriesRow> {
        self.rows.sort_by(|a, b| {
            a.year
                .cmp(&b.year)
                .then_with(|| a.entity.cmp(&b.entity))
                .then_with(|| a.metric.cmp(&b.metric))
        });
        self.rows
    }
}

pub fn write_timeseries_csv(rows: &[TimeseriesRow]) -> String {
    let mut out = String::from("year,entity,metric,value\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", r.year, r.entity, r.metric, r.value);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complexity::SolverDiagnostic;
    use crate::ingest::{load_trade_from_reader, FilterConfig};
    use crate::matrices::diversity_ubiquity;
    use crate::prodspace::{build_product_space, compute_proximity, ProductSpaceOptions};
    use ndarray::array;

    fn scores(entries: &[(&str, f64)]) -> ComplexityScores {
        ComplexityScores {
            year: 2013,
            countries: entries.iter().map(|&(c, _)| c.to_string()).collect(),
            products: vec!["P1".to_string(), "P2".to_string()],
            eci: entries.iter().map(|&(_, v)| v).collect(),
            pci: vec![0.0, 0.0],
            solver: SolverDiagnostic::Reflections { rounds: 1, last_delta: 0.0 },
        }
    }

    fn trade(input: &str) -> TradeTable {
        load_trade_from_reader(input.as_bytes(), "test.csv", &FilterConfig::default())
            .unwrap()
            .table
    }

    #[test]
    fn ranking_report_sections_cover_every_roster_member() {
        let scores = scores(&[("AAA", 1.0), ("BBB", 0.5), ("CCC", -0.5)]);
        let rosters = RegionRosters::parse("ASIA: AAA\nLATAM: BBB,CCC\n").unwrap();
        let report = make_ranking_report(&scores, &rosters);
        for code in ["AAA", "BBB", "CCC"] {
            let in_roster_blocks = report
                .rows
                .iter()
                .filter(|r| r.section != "top5" && r.section != "bottom5")
                .filter(|r| r.country == code)
                .count();
            assert_eq!(in_roster_blocks, 1, "{code}");
        }
        assert!(report.warnings.is_empty());
    }

    #[test]
    fn unknown_roster_member_gets_blank_rank_and_warning() {
        let scores = scores(&[("AAA", 1.0), ("BBB", 0.5)]);
        let rosters = RegionRosters::parse("G: AAA,ZZZ\n").unwrap();
        let report = make_ranking_report(&scores, &rosters);
        let blank = report.rows.iter().find(|r| r.country == "ZZZ").unwrap();
        assert_eq!(blank.rank, None);
        assert_eq!(blank.eci, None);
        assert_eq!(report.warnings.len(), 1);
    }

    #[test]
    fn treemap_shares_split_the_scope_total() {
        let t = trade("year,exporter,product,value\n2000,AAA,0001,30\n2000,AAA,0002,10\n");
        let scope: BTreeSet<String> = ["AAA".to_string()].into_iter().collect();
        let spec = make_treemap(&t, &scope, 2000, "AAA", None).unwrap();
        assert_eq!(spec.total, 40.0);
        assert_eq!(spec.groups.len(), 1);
        let leaves = &spec.groups[0].leaves;
        assert_eq!(leaves[0].share, 0.75);
        assert_eq!(leaves[1].share, 0.25);
    }

    #[test]
    fn treemap_group_totals_equal_leaf_sums() {
        let t = trade(
            "year,exporter,product,value\n\
             2000,AAA,0001,30\n2000,AAA,0002,10\n2000,BBB,0003,25\n",
        );
        let scope: BTreeSet<String> = ["AAA".to_string(), "BBB".to_string()].into_iter().collect();
        let sections: BTreeMap<String, String> = [
            ("0001".to_string(), "Agro".to_string()),
            ("0002".to_string(), "Agro".to_string()),
            ("0003".to_string(), "Machinery".to_string()),
        ]
        .into_iter()
        .collect();
        let spec = make_treemap(&t, &scope, 2000, "both", Some(&sections)).unwrap();
        for g in &spec.groups {
            let leaf_sum: f64 = g.leaves.iter().map(|l| l.value).sum();
            assert_eq!(g.total, leaf_sum);
        }
        let group_sum: f64 = spec.groups.iter().map(|g| g.total).sum();
        assert_eq!(group_sum, spec.total);
        let share_sum: f64 = spec.groups.iter().flat_map(|g| &g.leaves).map(|l| l.share).sum();
        assert!((share_sum - 1.0).abs() < 1e-9);
    }

    #[test]
    fn empty_scope_year_is_an_error() {
        let t = trade("year,exporter,product,value\n2000,AAA,0001,30\n");
        let scope: BTreeSet<String> = ["ZZZ".to_string()].into_iter().collect();
        let err = make_treemap(&t, &scope, 2000, "ZZZ", None).unwrap_err();
        assert!(matches!(err, Error::EmptyScope { .. }));
    }

    fn overlay_fixture() -> (ProductSpaceGraph, YearSlice, SpecializationMatrices, PgiTable) {
        let t = trade(
            "year,exporter,product,value\n\
             2000,AAA,P1,6\n2000,AAA,P2,2\n2000,AAA,P3,2\n\
             2000,BBB,P1,1\n2000,BBB,P2,8\n2000,CCC,P3,5\n",
        );
        let slice = YearSlice::from_table(&t, 2000).unwrap();
        let sm = SpecializationMatrices::from_slice(&slice, 1.0);
        let prox = compute_proximity(&sm.m, &sm.products).unwrap();
        let (_, ubiquity) = diversity_ubiquity(&sm.m.view());
        let graph = build_product_space(
            &prox,
            &ubiquity,
            None,
            &ProductSpaceOptions { edge_threshold: 0.0, with_mst: true },
        )
        .unwrap();
        let gini: BTreeMap<String, f64> = [
            ("AAA".to_string(), 0.40),
            ("BBB".to_string(), 0.50),
            ("CCC".to_string(), 0.60),
        ]
        .into_iter()
        .collect();
        let pgi = crate::inequality::compute_pgi(&sm, &gini);
        (graph, slice, sm, pgi)
    }

    #[test]
    fn single_export_country_sizes_only_that_node() {
        let (graph, slice, sm, pgi) = overlay_fixture();
        let frame = make_overlay(
            &graph,
            &slice,
            &sm,
            &pgi,
            &OverlayScope::Country("CCC".to_string()),
        )
        .unwrap();
        let p3 = frame.products.iter().position(|p| p == "P3").unwrap();
        for (i, &s) in frame.share.iter().enumerate() {
            if i == p3 {
                assert!(s > 0.0);
            } else {
                assert_eq!(s, 0.0);
            }
        }
        assert!(frame.pgi.iter().all(Option::is_some));
    }

    #[test]
    fn uniform_gini_colors_every_node_alike() {
        let t = trade(
            "year,exporter,product,value\n\
             2000,AAA,P1,6\n2000,AAA,P2,2\n2000,BBB,P1,1\n2000,BBB,P2,8\n",
        );
        let slice = YearSlice::from_table(&t, 2000).unwrap();
        let sm = SpecializationMatrices::from_slice(&slice, 1.0);
        let gini: BTreeMap<String, f64> =
            [("AAA".to_string(), 0.43), ("BBB".to_string(), 0.43)].into_iter().collect();
        let pgi = crate::inequality::compute_pgi(&sm, &gini);
        let prox = compute_proximity(&sm.m, &sm.products).unwrap();
        let graph = build_product_space(
            &prox,
            &sm.ubiquity,
            None,
            &ProductSpaceOptions { edge_threshold: 0.0, with_mst: true },
        )
        .unwrap();
        let frame = make_overlay(
            &graph,
            &slice,
            &sm,
            &pgi,
            &OverlayScope::Country("AAA".to_string()),
        )
        .unwrap();
        let coords: BTreeMap<String, (f64, f64)> =
            [("P1".to_string(), (0.0, 0.0)), ("P2".to_string(), (100.0, 50.0))]
                .into_iter()
                .collect();
        let svg = render_overlay_svg(&graph, &frame, &coords).unwrap();
        // Constant PGI pins the ramp midpoint for every node.
        let fills: Vec<&str> = svg
            .lines()
            .filter(|l| l.contains("<circle"))
            .map(|l| l.split("fill=\"").nth(1).unwrap().split('"').next().unwrap())
            .collect();
        assert_eq!(fills.len(), 2);
        assert!(fills.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn svg_counts_circles_and_edges_and_is_deterministic() {
        let (graph, slice, sm, pgi) = overlay_fixture();
        let frame = make_overlay(
            &graph,
            &slice,
            &sm,
            &pgi,
            &OverlayScope::Country("AAA".to_string()),
        )
        .unwrap();
        let coords: BTreeMap<String, (f64, f64)> = [
            ("P1".to_string(), (0.0, 0.0)),
            ("P2".to_string(), (100.0, 0.0)),
            ("P3".to_string(), (50.0, 80.0)),
        ]
        .into_iter()
        .collect();
        let svg = render_overlay_svg(&graph, &frame, &coords).unwrap();
        assert_eq!(svg.matches("<circle").count(), 3);
        assert_eq!(svg.matches("<line").count(), graph.edges.len());
        assert_eq!(svg, render_overlay_svg(&graph, &frame, &coords).unwrap());
    }

    #[test]
    fn missing_coordinates_fail_svg_rendering() {
        let (graph, slice, sm, pgi) = overlay_fixture();
        let frame = make_overlay(
            &graph,
            &slice,
            &sm,
            &pgi,
            &OverlayScope::Country("AAA".to_string()),
        )
        .unwrap();
        let coords: BTreeMap<String, (f64, f64)> =
            [("P1".to_string(), (0.0, 0.0))].into_iter().collect();
        let err = render_overlay_svg(&graph, &frame, &coords).unwrap_err();
        assert!(matches!(err, Error::MissingCoordinates { count: 2, .. }));
    }

    #[test]
    fn group_scope_aggregates_member_rows() {
        let (graph, slice, sm, pgi) = overlay_fixture();
        let frame = make_overlay(
            &graph,
            &slice,
            &sm,
            &pgi,
            &OverlayScope::Group {
                name: "PAIR".to_string(),
                members: vec!["AAA".to_string(), "BBB".to_string()],
            },
        )
        .unwrap();
        // AAA+BBB exports: P1=7, P2=10, P3=2 out of 19.
        let share_of = |p: &str| {
            frame.share[frame.products.iter().position(|x| x == p).unwrap()]
        };
        assert!((share_of("P1") - 7.0 / 19.0).abs() < 1e-12);
        assert!((share_of("P2") - 10.0 / 19.0).abs() < 1e-12);
        assert!((share_of("P3") - 2.0 / 19.0).abs() < 1e-12);
    }

    #[test]
    fn timeseries_preserves_gaps_and_sorts() {
        let mut b = TimeseriesBuilder::new();
        b.push(2001, "BRA", "xgini", 0.5);
        b.push(2000, "BRA", "xgini", 0.4);
        let rows = b.finish();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].year, 2000);
        let csv = write_timeseries_csv(&rows);
        assert!(csv.starts_with("year,entity,metric,value\n2000,BRA,xgini,0.4\n"));
    }
}
