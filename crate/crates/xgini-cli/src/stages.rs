//! Pipeline stages composing the core library, cached by content digest:
//! ingest -> rca -> eci -> proximity -> product-space -> pgi -> xgini ->
//! report (regions, rankings, treemaps, overlays, time series).

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::OnceLock;

use anyhow::{anyhow, Context, Result};

use xgini_core::complexity::{
    compute_eci_eigen, compute_eci_reflections, read_scores_csv, write_scores_csv, EigenOptions,
    ReflectionsOptions,
};
use xgini_core::inequality::{
    compute_pgi, compute_xgini, gini_for_year, interpolate_all, read_interpolated_csv,
    regional_series, smooth_trailing, write_interpolated_csv, write_regions_csv,
    InterpolatedGini, PgiTable, RegionRosters, RegionalPoint, XginiTable,
};
use xgini_core::ingest::{
    load_gini, load_gini_from_reader, load_sections, load_sections_from_reader, load_trade,
    load_trade_from_reader,
};
use xgini_core::matrices::{SpecializationMatrices, YearSlice};
use xgini_core::prodspace::{
    build_product_space, compute_proximity, export_graphml, load_coordinates,
    ProductSpaceGraph, ProductSpaceOptions, ProximityMatrix,
};
use xgini_core::report::{
    make_overlay, make_ranking_report, make_treemap, render_overlay_svg, write_timeseries_csv,
    OverlayScope, TimeseriesBuilder,
};
use xgini_core::{Error, FilterConfig, TradeTable};

use crate::config::RunConfig;
use crate::manifest::{digest_file, run_stage_batch, StageFailure, StageSpec, Workspace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Method {
    Eigen,
    Reflections,
}

impl Method {
    fn label(self) -> &'static str {
        match self {
            Method::Eigen => "eigen",
            Method::Reflections => "reflections",
        }
    }
}

/// Resolved run context shared by every stage.
pub struct Ctx {
    pub config: RunConfig,
    pub method: Method,
    pub tol: Option<f64>,
    pub jobs: usize,
    pub rosters: RegionRosters,
    rosters_digest: String,
    trade: OnceLock<TradeTable>,
    panel: OnceLock<BTreeMap<String, InterpolatedGini>>,
}

impl Ctx {
    pub fn new(config: RunConfig, method: Method, tol: Option<f64>, jobs: usize) -> Result<Ctx> {
        let (rosters, rosters_digest) = match &config.regions_file {
            Some(path) => (RegionRosters::load(path)?, digest_file(path)?),
            None => (RegionRosters::default(), "builtin".to_string()),
        };
        Ok(Ctx {
            config,
            method,
            tol,
            jobs,
            rosters,
            rosters_digest,
            trade: OnceLock::new(),
            panel: OnceLock::new(),
        })
    }

    /// Canonical trade table, loaded once per process.
    fn canonical_trade(&self, ws: &Workspace) -> Result<&TradeTable> {
        if self.trade.get().is_none() {
            let text = ws.read_output("canonical/trade.csv", "ingest")?;
            // The canonical table is already aggregated and filtered.
            let load = load_trade_from_reader(
                text.as_bytes(),
                "canonical/trade.csv",
                &FilterConfig::default(),
            )?;
            let _ = self.trade.set(load.table);
        }
        Ok(self.trade.get().expect("just set"))
    }

    fn gini_panel(&self, ws: &Workspace) -> Result<&BTreeMap<String, InterpolatedGini>> {
        if self.panel.get().is_none() {
            let text = ws.read_output("inequality/gini_interpolated.csv", "ingest")?;
            let panel =
                read_interpolated_csv(text.as_bytes(), "inequality/gini_interpolated.csv")?;
            let _ = self.panel.set(panel);
        }
        Ok(self.panel.get().expect("just set"))
    }

    /// Trailing averaging window ending at `year`.
    fn window(&self, year: i32) -> Vec<i32> {
        let k = self.config.average_years.max(1) as i32;
        ((year - k + 1)..=year).collect()
    }

    fn sections(&self, ws: &Workspace) -> Result<Option<BTreeMap<String, String>>> {
        if self.config.sections_file.is_none() {
            return Ok(None);
        }
        let text = ws.read_output("canonical/sections.csv", "ingest")?;
        Ok(Some(load_sections_from_reader(text.as_bytes(), "canonical/sections.csv")?))
    }

    fn coordinates(&self) -> Result<Option<BTreeMap<String, (f64, f64)>>> {
        match &self.config.coordinates_file {
            Some(path) => Ok(Some(load_coordinates(path)?)),
            None => Ok(None),
        }
    }
}

/// Years present in the canonical trade table, optionally cut to a range.
pub fn select_years(ws: &Workspace, ctx: &Ctx, range: Option<(i32, i32)>) -> Result<Vec<i32>> {
    let years = ctx.canonical_trade(ws)?.years();
    let selected: Vec<i32> = match range {
        Some((lo, hi)) => years.into_iter().filter(|y| (lo..=hi).contains(y)).collect(),
        None => years,
    };
    if selected.is_empty() {
        return Err(anyhow!(Error::Config(
            "no requested year is present in the trade table".to_string()
        )));
    }
    Ok(selected)
}

fn stage_err(stage: &str, source: anyhow::Error) -> anyhow::Error {
    anyhow!(StageFailure { stage: stage.to_string(), source })
}

fn sanitize(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect()
}

// ---------------------------------------------------------------------------
// ingest

pub fn stage_ingest(ws: &mut Workspace, ctx: &Ctx) -> Result<()> {
    let gini_path = ctx.config.gini_file()?.to_path_buf();
    let gini_digest = digest_file(&gini_path)
        .map_err(|e| stage_err("ingest:gini", anyhow!(Error::InvalidInput(format!("{e:#}")))))?;
    run_stage_batch(
        ws,
        vec![StageSpec::new("ingest:gini", vec![format!("gini={gini_digest}")])],
        1,
        |_, sink| {
            let load = load_gini(&gini_path)?;
            for w in &load.warnings {
                eprintln!("[xgini] warning: {w}");
            }
            sink.write("canonical/gini.csv", &load.table.to_csv_string())
        },
    )?;

    let trade_path = ctx.config.trade_file()?.to_path_buf();
    let trade_digest = digest_file(&trade_path)
        .map_err(|e| stage_err("ingest:trade", anyhow!(Error::InvalidInput(format!("{e:#}")))))?;
    let canonical_gini_digest = ws.require_output("canonical/gini.csv", "ingest")?;

    let mut specs = Vec::new();
    let mut trade_key = vec![
        format!("trade={trade_digest}"),
        format!("filters={}", serde_json::to_string(&ctx.config.filters)?),
    ];
    if ctx.config.filters.require_gini {
        trade_key.push(format!("gini={canonical_gini_digest}"));
    }
    specs.push(StageSpec::new("ingest:trade", trade_key));

    let sections_path = ctx.config.sections_file.clone();
    if let Some(path) = &sections_path {
        let digest = digest_file(path)?;
        specs.push(StageSpec::new("ingest:sections", vec![format!("sections={digest}")]));
    }
    specs.push(StageSpec::new("interp", vec![format!("gini={canonical_gini_digest}")]));

    let filters = ctx.config.filters.clone();
    run_stage_batch(ws, specs, ctx.jobs, |spec, sink| match spec.name.as_str() {
        "ingest:trade" => {
            let load = load_trade(&trade_path, &filters)?;
            let mut table = load.table;
            if filters.require_gini {
                let gini = load_gini_from_reader(
                    sink.read("canonical/gini.csv")?.as_bytes(),
                    "canonical/gini.csv",
                )?;
                table = table.restrict_to_countries(&gini.table.country_set());
                if table.is_empty() {
                    return Err(anyhow!(Error::EmptySample));
                }
            }
            let d = &load.diagnostics;
            eprintln!(
                "[xgini] ingest:trade: {} rows read, {} canonical rows ({} zero-dropped, {} merged)",
                d.rows_read,
                table.len(),
                d.rows_zero_dropped,
                d.rows_merged
            );
            sink.write("canonical/trade.csv", &table.to_csv_string())
        }
        "ingest:sections" => {
            let sections = load_sections(sections_path.as_deref().expect("spec only when set"))?;
            let mut buf = Vec::new();
            {
                let mut w = csv::Writer::from_writer(&mut buf);
                w.write_record(["product", "section_name"])?;
                for (product, name) in &sections {
                    w.write_record([product, name])?;
                }
                w.flush()?;
            }
            sink.write("canonical/sections.csv", &String::from_utf8(buf)?)
        }
        "interp" => {
            let gini = load_gini_from_reader(
                sink.read("canonical/gini.csv")?.as_bytes(),
                "canonical/gini.csv",
            )?;
            let panel = interpolate_all(&gini.table);
            sink.write("inequality/gini_interpolated.csv", &write_interpolated_csv(&panel))
        }
        other => Err(anyhow!("unknown ingest stage {other}")),
    })
}

// ---------------------------------------------------------------------------
// per-year numeric stages

fn matrices_rel(year: i32) -> String {
    format!("matrices/matrices_{year}.csv")
}

fn scores_rel(year: i32) -> String {
    format!("scores/scores_{year}.csv")
}

fn proximity_rel(year: i32) -> String {
    format!("prodspace/proximity_{year}.csv")
}

fn pgi_rel(year: i32) -> String {
    format!("inequality/pgi_{year}.csv")
}

fn xgini_rel(year: i32) -> String {
    format!("inequality/xgini_{year}.csv")
}

fn stage_year(spec: &StageSpec) -> i32 {
    spec.name.split(':').nth(1).and_then(|y| y.parse().ok()).expect("year-suffixed stage name")
}

fn load_matrices_at(root: &Path, year: i32, threshold: f64) -> Result<SpecializationMatrices> {
    let rel = matrices_rel(year);
    let text = std::fs::read_to_string(root.join(&rel))
        .with_context(|| format!("cannot read {rel}; run the `rca` stage first"))?;
    Ok(SpecializationMatrices::read_csv(text.as_bytes(), &rel, threshold)?)
}

pub fn stage_rca(ws: &mut Workspace, ctx: &Ctx, years: &[i32]) -> Result<()> {
    let trade_digest = ws.require_output("canonical/trade.csv", "ingest")?;
    let trade = ctx.canonical_trade(ws)?;
    let specs = years
        .iter()
        .map(|&y| {
            StageSpec::new(
                format!("rca:{y}"),
                vec![
                    format!("trade={trade_digest}"),
                    format!("rca_threshold={}", ctx.config.rca_threshold),
                    format!("average_years={}", ctx.config.average_years),
                ],
            )
        })
        .collect();
    run_stage_batch(ws, specs, ctx.jobs, |spec, sink| {
        let year = stage_year(spec);
        let slice = YearSlice::from_table_averaged(trade, year, &ctx.window(year))?;
        let sm = SpecializationMatrices::from_slice(&slice, ctx.config.rca_threshold);
        sink.write(&matrices_rel(year), &sm.to_csv_string())
    })
}

pub fn stage_eci(ws: &mut Workspace, ctx: &Ctx, years: &[i32]) -> Result<()> {
    let mut specs = Vec::new();
    for &y in years {
        let matrices_digest = ws.require_output(&matrices_rel(y), "rca")?;
        specs.push(StageSpec::new(
            format!("eci:{y}"),
            vec![
                format!("matrices={matrices_digest}"),
                format!("method={}", ctx.method.label()),
                format!("tol={:?}", ctx.tol),
            ],
        ));
    }
    run_stage_batch(ws, specs, ctx.jobs, |spec, sink| {
        let year = stage_year(spec);
        let sm = load_matrices_at(sink.root(), year, ctx.config.rca_threshold)?;
        let (sm, dropped_c, dropped_p) = sm.drop_empty_margins();
        if !dropped_c.is_empty() || !dropped_p.is_empty() {
            eprintln!(
                "[xgini] eci:{year}: excluded {} country(ies) and {} product(s) with empty margins",
                dropped_c.len(),
                dropped_p.len()
            );
        }
        let scores = match ctx.method {
            Method::Eigen => {
                let mut opts = EigenOptions::default();
                if let Some(tol) = ctx.tol {
                    opts.tol = tol;
                }
                compute_eci_eigen(year, &sm.m, &sm.countries, &sm.products, &opts)?
            }
            Method::Reflections => {
                let mut opts = ReflectionsOptions::default();
                if let Some(tol) = ctx.tol {
                    opts.tol = tol;
                }
                compute_eci_reflections(year, &sm.m, &sm.countries, &sm.products, &opts)?
            }
        };
        eprintln!("[xgini] eci:{year}: solver {}", scores.solver.summary());
        sink.write(&scores_rel(year), &write_scores_csv(&scores))
    })
}

pub fn stage_proximity(ws: &mut Workspace, ctx: &Ctx, years: &[i32]) -> Result<()> {
    let mut specs = Vec::new();
    for &y in years {
        let matrices_digest = ws.require_output(&matrices_rel(y), "rca")?;
        specs.push(StageSpec::new(
            format!("proximity:{y}"),
            vec![format!("matrices={matrices_digest}")],
        ));
    }
    run_stage_batch(ws, specs, ctx.jobs, |spec, sink| {
        let year = stage_year(spec);
        let sm = load_matrices_at(sink.root(), year, ctx.config.rca_threshold)?;
        let (sm, _, _) = sm.drop_empty_margins();
        let prox = compute_proximity(&sm.m, &sm.products)?;
        sink.write(&proximity_rel(year), &prox.to_csv_string())
    })
}

/// Rebuilds the deterministic product-space graph of one year from workspace
/// files (also reused by the report stage for overlays).
fn build_graph_at(
    root: &Path,
    ctx: &Ctx,
    year: i32,
) -> Result<(ProductSpaceGraph, SpecializationMatrices)> {
    let rel = proximity_rel(year);
    let text = std::fs::read_to_string(root.join(&rel))
        .with_context(|| format!("cannot read {rel}; run the `proximity` stage first"))?;
    let prox = ProximityMatrix::read_csv(text.as_bytes(), &rel)?;
    let sm = load_matrices_at(root, year, ctx.config.rca_threshold)?;
    let (sm, _, _) = sm.drop_empty_margins();
    if sm.products != prox.products {
        return Err(anyhow!(Error::InvalidInput(format!(
            "product universes of {rel} and {} disagree",
            matrices_rel(year)
        ))));
    }
    let scores_path = scores_rel(year);
    let scores_text = std::fs::read_to_string(root.join(&scores_path))
        .with_context(|| format!("cannot read {scores_path}; run the `eci` stage first"))?;
    let scores = read_scores_csv(scores_text.as_bytes(), &scores_path)?;
    let pci_by_product: BTreeMap<&str, f64> =
        scores.products.iter().map(String::as_str).zip(scores.pci.iter().copied()).collect();
    let pci: Option<Vec<f64>> =
        sm.products.iter().map(|p| pci_by_product.get(p.as_str()).copied()).collect();
    let opts = ProductSpaceOptions { edge_threshold: ctx.config.edge_threshold, with_mst: true };
    let graph = build_product_space(&prox, &sm.ubiquity, pci.as_deref(), &opts)?;
    Ok((graph, sm))
}

pub fn stage_product_space(ws: &mut Workspace, ctx: &Ctx, years: &[i32]) -> Result<()> {
    let mut specs = Vec::new();
    for &y in years {
        let proximity_digest = ws.require_output(&proximity_rel(y), "proximity")?;
        let matrices_digest = ws.require_output(&matrices_rel(y), "rca")?;
        let scores_digest = ws.require_output(&scores_rel(y), "eci")?;
        specs.push(StageSpec::new(
            format!("product-space:{y}"),
            vec![
                format!("proximity={proximity_digest}"),
                format!("matrices={matrices_digest}"),
                format!("scores={scores_digest}"),
                format!("edge_threshold={}", ctx.config.edge_threshold),
            ],
        ));
    }
    run_stage_batch(ws, specs, ctx.jobs, |spec, sink| {
        let year = stage_year(spec);
        let (graph, _) = build_graph_at(sink.root(), ctx, year)?;
        sink.write(&format!("prodspace/edges_{year}.csv"), &graph.to_edge_csv())?;
        let (xml, warnings) = export_graphml(&graph, None, None);
        for w in warnings {
            eprintln!("[xgini] product-space:{year}: {w}");
        }
        sink.write(&format!("prodspace/graph_{year}.graphml"), &xml)
    })
}

pub fn stage_pgi(ws: &mut Workspace, ctx: &Ctx, years: &[i32]) -> Result<()> {
    let interp_digest = ws.require_output("inequality/gini_interpolated.csv", "ingest")?;
    let panel = ctx.gini_panel(ws)?;
    let mut specs = Vec::new();
    for &y in years {
        let matrices_digest = ws.require_output(&matrices_rel(y), "rca")?;
        let mut parts =
            vec![format!("matrices={matrices_digest}"), format!("interp={interp_digest}")];
        if ctx.config.filters.require_eci {
            parts.push(format!("scores={}", ws.require_output(&scores_rel(y), "eci")?));
        }
        specs.push(StageSpec::new(format!("pgi:{y}"), parts));
    }
    run_stage_batch(ws, specs, ctx.jobs, |spec, sink| {
        let year = stage_year(spec);
        let sm = load_matrices_at(sink.root(), year, ctx.config.rca_threshold)?;
        let mut gini = gini_for_year(panel, year);
        if ctx.config.filters.require_eci {
            let scores =
                read_scores_csv(sink.read(&scores_rel(year))?.as_bytes(), &scores_rel(year))?;
            let scored: BTreeSet<&String> = scores.countries.iter().collect();
            gini.retain(|c, _| scored.contains(c));
        }
        if gini.is_empty() {
            return Err(anyhow!(Error::InvalidInput(format!(
                "no Gini data overlaps the {year} sample"
            ))));
        }
        let pgi = compute_pgi(&sm, &gini);
        for w in &pgi.warnings {
            eprintln!("[xgini] pgi:{year}: {w}");
        }
        if pgi.is_empty() {
            return Err(anyhow!(Error::InvalidInput(format!(
                "every product lost PGI coverage in {year}"
            ))));
        }
        sink.write(&pgi_rel(year), &pgi.to_csv_string())
    })
}

pub fn stage_xgini(ws: &mut Workspace, ctx: &Ctx, years: &[i32]) -> Result<()> {
    let mut specs = Vec::new();
    for &y in years {
        let pgi_digest = ws.require_output(&pgi_rel(y), "pgi")?;
        let matrices_digest = ws.require_output(&matrices_rel(y), "rca")?;
        let mut parts =
            vec![format!("pgi={pgi_digest}"), format!("matrices={matrices_digest}")];
        if ctx.config.filters.require_eci {
            parts.push(format!("scores={}", ws.require_output(&scores_rel(y), "eci")?));
        }
        specs.push(StageSpec::new(format!("xgini:{y}"), parts));
    }
    run_stage_batch(ws, specs, ctx.jobs, |spec, sink| {
        let year = stage_year(spec);
        let sm = load_matrices_at(sink.root(), year, ctx.config.rca_threshold)?;
        let pgi = PgiTable::read_csv(sink.read(&pgi_rel(year))?.as_bytes(), &pgi_rel(year))?;
        let mut xg = compute_xgini(&sm, &pgi);
        for w in &xg.warnings {
            eprintln!("[xgini] xgini:{year}: {w}");
        }
        if ctx.config.filters.require_eci {
            let scores =
                read_scores_csv(sink.read(&scores_rel(year))?.as_bytes(), &scores_rel(year))?;
            xg.retain_countries(&scores.countries.iter().cloned().collect());
        }
        if xg.is_empty() {
            return Err(anyhow!(Error::InvalidInput(format!(
                "no country kept an Xgini value in {year}"
            ))));
        }
        sink.write(&xgini_rel(year), &xg.to_csv_string())
    })
}

// ---------------------------------------------------------------------------
// reports

fn smooth_regional(points: Vec<RegionalPoint>, window: usize) -> Vec<RegionalPoint> {
    if window <= 1 {
        return points;
    }
    let mut by_group: BTreeMap<String, Vec<(i32, f64)>> = BTreeMap::new();
    let mut members: BTreeMap<(i32, String), u32> = BTreeMap::new();
    for p in &points {
        by_group.entry(p.group.clone()).or_default().push((p.year, p.mean_xgini));
        members.insert((p.year, p.group.clone()), p.n_members);
    }
    let mut out = Vec::new();
    for (group, series) in &by_group {
        for (year, value) in smooth_trailing(series, window) {
            out.push(RegionalPoint {
                year,
                group: group.clone(),
                mean_xgini: value,
                n_members: members[&(year, group.clone())],
            });
        }
    }
    out.sort_by(|a, b| a.year.cmp(&b.year).then_with(|| a.group.cmp(&b.group)));
    out
}

pub fn stage_report(ws: &mut Workspace, ctx: &Ctx, years: &[i32]) -> Result<()> {
    // Regional aggregates: one cross-year stage.
    let mut xgini_parts = Vec::new();
    for &y in years {
        xgini_parts.push(format!("xgini:{y}={}", ws.require_output(&xgini_rel(y), "xgini")?));
    }
    let mut regions_parts = xgini_parts.clone();
    regions_parts.push(format!("rosters={}", ctx.rosters_digest));
    regions_parts.push(format!("smoothing={}", ctx.config.smoothing_window));
    let years_owned: Vec<i32> = years.to_vec();
    let smoothing = ctx.config.smoothing_window;
    run_stage_batch(ws, vec![StageSpec::new("regions", regions_parts)], 1, |_, sink| {
        let mut tables = Vec::new();
        for &y in &years_owned {
            tables.push(XginiTable::read_csv(sink.read(&xgini_rel(y))?.as_bytes(), &xgini_rel(y))?);
        }
        let points = smooth_regional(regional_series(&tables, &ctx.rosters), smoothing);
        sink.write("inequality/regions.csv", &write_regions_csv(&points))
    })?;

    // Per-year presentation artifacts.
    let trade_digest = ws.require_output("canonical/trade.csv", "ingest")?;
    let trade = ctx.canonical_trade(ws)?;
    let sections = ctx.sections(ws)?;
    let sections_digest = match &ctx.config.sections_file {
        Some(_) => ws.require_output("canonical/sections.csv", "ingest")?,
        None => "none".to_string(),
    };
    let coords = ctx.coordinates()?;
    let coords_digest = match &ctx.config.coordinates_file {
        Some(path) => digest_file(path)?,
        None => "none".to_string(),
    };

    let mut specs = Vec::new();
    for &y in years {
        specs.push(StageSpec::new(
            format!("report:{y}"),
            vec![
                format!("scores={}", ws.require_output(&scores_rel(y), "eci")?),
                format!("matrices={}", ws.require_output(&matrices_rel(y), "rca")?),
                format!("pgi={}", ws.require_output(&pgi_rel(y), "pgi")?),
                format!("proximity={}", ws.require_output(&proximity_rel(y), "proximity")?),
                format!("trade={trade_digest}"),
                format!("rosters={}", ctx.rosters_digest),
                format!("sections={sections_digest}"),
                format!("coords={coords_digest}"),
                format!("edge_threshold={}", ctx.config.edge_threshold),
                format!("average_years={}", ctx.config.average_years),
            ],
        ));
    }
    run_stage_batch(ws, specs, ctx.jobs, |spec, sink| {
        let year = stage_year(spec);
        let scores =
            read_scores_csv(sink.read(&scores_rel(year))?.as_bytes(), &scores_rel(year))?;

        let ranking = make_ranking_report(&scores, &ctx.rosters);
        for w in &ranking.warnings {
            eprintln!("[xgini] report:{year}: {w}");
        }
        sink.write(&format!("reports/ranking_{year}.csv"), &ranking.to_csv_string())?;

        for (group, members) in ctx.rosters.groups() {
            let scope: BTreeSet<String> = members.iter().cloned().collect();
            match make_treemap(trade, &scope, year, group, sections.as_ref()) {
                Ok(treemap) => {
                    sink.write(
                        &format!("reports/treemap_{}_{year}.csv", sanitize(group)),
                        &treemap.to_csv_string(),
                    )?;
                }
                Err(Error::EmptyScope { .. }) => {
                    eprintln!("[xgini] report:{year}: group {group} has no exports; treemap skipped");
                }
                Err(e) => return Err(e.into()),
            }
        }

        let (graph, pruned) = build_graph_at(sink.root(), ctx, year)?;
        let slice = YearSlice::from_table_averaged(trade, year, &ctx.window(year))?;
        let pgi = PgiTable::read_csv(sink.read(&pgi_rel(year))?.as_bytes(), &pgi_rel(year))?;
        for member in ctx.rosters.all_members() {
            if slice.country_index(&member).is_none() {
                eprintln!("[xgini] report:{year}: {member} absent; overlay skipped");
                continue;
            }
            let frame =
                make_overlay(&graph, &slice, &pruned, &pgi, &OverlayScope::Country(member.clone()))?;
            let (xml, warnings) = export_graphml(&graph, Some(&frame.attr_table()), coords.as_ref());
            for w in warnings {
                eprintln!("[xgini] report:{year}: {w}");
            }
            sink.write(&format!("reports/overlay_{}_{year}.graphml", sanitize(&member)), &xml)?;
            if let Some(coords) = &coords {
                let svg = render_overlay_svg(&graph, &frame, coords)?;
                sink.write(&format!("reports/overlay_{}_{year}.svg", sanitize(&member)), &svg)?;
            }
        }
        Ok(())
    })?;

    // Long-form time series across every processed year.
    let mut ts_parts = xgini_parts;
    for &y in years {
        ts_parts.push(format!("scores:{y}={}", ws.require_output(&scores_rel(y), "eci")?));
    }
    ts_parts.push(format!(
        "interp={}",
        ws.require_output("inequality/gini_interpolated.csv", "ingest")?
    ));
    ts_parts.push(format!("smoothing={}", ctx.config.smoothing_window));
    let panel = ctx.gini_panel(ws)?;
    let years_owned: Vec<i32> = years.to_vec();
    run_stage_batch(ws, vec![StageSpec::new("timeseries", ts_parts)], 1, |_, sink| {
        let mut builder = TimeseriesBuilder::new();
        let mut xgini_series: BTreeMap<String, Vec<(i32, f64)>> = BTreeMap::new();
        let mut entities: BTreeSet<String> = BTreeSet::new();
        for &y in &years_owned {
            let scores = read_scores_csv(sink.read(&scores_rel(y))?.as_bytes(), &scores_rel(y))?;
            for (country, &eci) in scores.countries.iter().zip(&scores.eci) {
                builder.push(y, country, "eci", eci);
                entities.insert(country.clone());
            }
            let xg = XginiTable::read_csv(sink.read(&xgini_rel(y))?.as_bytes(), &xgini_rel(y))?;
            for (country, e) in xg.iter() {
                xgini_series.entry(country.to_string()).or_default().push((y, e.xgini));
                entities.insert(country.to_string());
            }
        }
        for entity in &entities {
            if let Some(series) = panel.get(entity) {
                for &y in &years_owned {
                    if let Some(v) = series.value01(y) {
                        builder.push(y, entity, "gini", v);
                    }
                }
            }
        }
        for (country, series) in &xgini_series {
            for (y, v) in smooth_trailing(series, smoothing) {
                builder.push(y, country, "xgini", v);
            }
        }
        for w in &builder.warnings {
            eprintln!("[xgini] timeseries: {w}");
        }
        let rows = builder.finish();
        sink.write("reports/timeseries.csv", &write_timeseries_csv(&rows))
    })
}

// ---------------------------------------------------------------------------
// commands

pub fn cmd_pipeline(ws: &mut Workspace, ctx: &Ctx, range: Option<(i32, i32)>) -> Result<()> {
    stage_ingest(ws, ctx)?;
    let years = select_years(ws, ctx, range)?;
    stage_rca(ws, ctx, &years)?;
    stage_eci(ws, ctx, &years)?;
    stage_proximity(ws, ctx, &years)?;
    stage_product_space(ws, ctx, &years)?;
    stage_pgi(ws, ctx, &years)?;
    stage_xgini(ws, ctx, &years)?;
    stage_report(ws, ctx, &years)?;
    eprintln!("[xgini] pipeline complete: years {years:?}");
    Ok(())
}

pub fn cmd_treemap(ws: &mut Workspace, ctx: &Ctx, scope_arg: &str, year: i32) -> Result<()> {
    let trade_digest = ws.require_output("canonical/trade.csv", "ingest")?;
    let trade = ctx.canonical_trade(ws)?;
    let (label, members) = match ctx.rosters.get(scope_arg) {
        Some(members) => (scope_arg.to_string(), members.to_vec()),
        None => {
            let codes: Vec<String> =
                scope_arg.split(',').map(|c| c.trim().to_ascii_uppercase()).collect();
            (codes.join("+"), codes)
        }
    };
    let sections = ctx.sections(ws)?;
    let sections_digest = match &ctx.config.sections_file {
        Some(_) => ws.require_output("canonical/sections.csv", "ingest")?,
        None => "none".to_string(),
    };
    let spec = StageSpec::new(
        format!("treemap:{}:{year}", sanitize(&label)),
        vec![
            format!("trade={trade_digest}"),
            format!("sections={sections_digest}"),
            format!("scope={}", members.join(",")),
        ],
    );
    let scope: BTreeSet<String> = members.into_iter().collect();
    run_stage_batch(ws, vec![spec], 1, |_, sink| {
        let treemap = make_treemap(trade, &scope, year, &label, sections.as_ref())?;
        sink.write(
            &format!("reports/treemap_{}_{year}.csv", sanitize(&label)),
            &treemap.to_csv_string(),
        )
    })
}
