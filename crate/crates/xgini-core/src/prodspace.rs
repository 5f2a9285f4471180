//! Product proximity and the product-space graph: a maximum-spanning-tree
//! backbone unioned with every edge above a cutoff, exported as CSV, GraphML
//! or (with coordinates) SVG.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Read;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

pub const EDGE_LIST_HEADER: &str = "p,q,phi,backbone";
pub const COORDINATES_HEADER: &str = "product,x,y";
pub const PROXIMITY_HEADER: &str = "p,q,phi";

/// Symmetric pairwise relatedness phi in [0, 1] with unit diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct ProximityMatrix {
    pub products: Vec<String>,
    pub phi: Array2<f64>,
}

impl ProximityMatrix {
    /// Validates symmetry, range and the unit diagonal.
    pub fn new(products: Vec<String>, phi: Array2<f64>) -> Result<Self> {
        let n = products.len();
        if phi.dim() != (n, n) {
            return Err(Error::InvalidInput(format!(
                "proximity matrix is {:?} for {n} products",
                phi.dim()
            )));
        }
        for i in 0..n {
            if phi[(i, i)] != 1.0 {
                return Err(Error::InvalidInput(format!(
                    "proximity diagonal must be 1 (product {})",
                    products[i]
                )));
            }
            for j in 0..n {
                let v = phi[(i, j)];
                if !(0.0..=1.0).contains(&v) || v != phi[(j, i)] {
                    return Err(Error::InvalidInput(format!(
                        "invalid proximity at ({}, {}): {v}",
                        products[i], products[j]
                    )));
                }
            }
        }
        Ok(ProximityMatrix { products, phi })
    }

    pub fn len(&self) -> usize {
        self.products.len()
    }

    pub fn is_empty(&self) -> bool {
        self.products.is_empty()
    }

    pub fn get(&self, p: usize, q: usize) -> f64 {
        self.phi[(p, q)]
    }

    /// Full upper triangle as `p,q,phi`, zero entries included, so the
    /// matrix can be reconstructed from the dump.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("p,q,phi\n");
        for i in 0..self.len() {
            for j in (i + 1)..self.len() {
                let _ = writeln!(out, "{},{},{}", self.products[i], self.products[j], self.phi[(i, j)]);
            }
        }
        out
    }

    pub fn read_csv<R: Read>(reader: R, source: &str) -> Result<ProximityMatrix> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| Error::InvalidInput(format!("{source}: {e}")))?
            .iter()
            .collect::<Vec<_>>()
            .join(",");
        if headers != PROXIMITY_HEADER {
            return Err(Error::HeaderMismatch {
                path: source.to_string(),
                expected: PROXIMITY_HEADER.to_string(),
                found: headers,
            });
        }
        let mut cells: Vec<(String, String, f64)> = Vec::new();
        for record in rdr.records() {
            let record = record.map_err(|e| Error::InvalidInput(format!("{source}: {e}")))?;
            if record.len() != 3 {
                return Err(Error::InvalidInput(format!("{source}: wrong field count")));
            }
            let phi: f64 = record[2]
                .parse()
                .map_err(|_| Error::InvalidInput(format!("{source}: bad phi `{}`", &record[2])))?;
            cells.push((record[0].to_string(), record[1].to_string(), phi));
        }
        let mut products: Vec<String> = cells
            .iter()
            .flat_map(|(p, q, _)| [p.clone(), q.clone()])
            .collect();
        products.sort();
        products.dedup();
        let idx: BTreeMap<&str, usize> =
            products.iter().enumerate().map(|(i, p)| (p.as_str(), i)).collect();
        let n = products.len();
        let mut phi = Array2::zeros((n, n));
        for i in 0..n {
            phi[(i, i)] = 1.0;
        }
        for (p, q, v) in &cells {
            let (i, j) = (idx[p.as_str()], idx[q.as_str()]);
            phi[(i, j)] = *v;
            phi[(j, i)] = *v;
        }
        ProximityMatrix::new(products, phi)
    }
}

/// phi_pq = |co-exporters of p and q| / max(k_p, k_q); the diagonal is 1.
///
/// Counts are exact integers in f64, so phi is exactly symmetric.
pub fn compute_proximity(m: &Array2<u8>, products: &[String]) -> Result<ProximityMatrix> {
    let (nc, np) = m.dim();
    if np != products.len() {
        return Err(Error::InvalidInput(format!(
            "matrix has {np} products but {} were labelled",
            products.len()
        )));
    }
    let ubiquity: Vec<u32> = (0..np)
        .map(|p| (0..nc).map(|c| m[(c, p)] as u32).sum())
        .collect();
    if let Some(p) = ubiquity.iter().position(|&k| k == 0) {
        return Err(Error::InvalidInput(format!(
            "product {} has no exporter (zero column); prune before proximity",
            products[p]
        )));
    }
    let mut phi = Array2::zeros((np, np));
    for p in 0..np {
        phi[(p, p)] = 1.0;
        for q in (p + 1)..np {
            let co = (0..nc).filter(|&c| m[(c, p)] == 1 && m[(c, q)] == 1).count() as f64;
            let v = co / ubiquity[p].max(ubiquity[q]) as f64;
            phi[(p, q)] = v;
            phi[(q, p)] = v;
        }
    }
    ProximityMatrix::new(products.to_vec(), phi)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsNode {
    pub product: String,
    pub ubiquity: u32,
    pub pci: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsEdge {
    /// Node indices with code(a) < code(b).
    pub a: usize,
    pub b: usize,
    pub phi: f64,
    /// True when the edge belongs to the maximum spanning tree.
    pub backbone: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProductSpaceGraph {
    pub nodes: Vec<PsNode>,
    pub edges: Vec<PsEdge>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProductSpaceOptions {
    /// Non-backbone edges require phi >= this.
    pub edge_threshold: f64,
    pub with_mst: bool,
}

impl Default for ProductSpaceOptions {
    fn default() -> Self {
        ProductSpaceOptions { edge_threshold: 0.55, with_mst: true }
    }
}

impl ProductSpaceGraph {
    pub fn node_index(&self, product: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.product == product)
    }

    pub fn backbone_edges(&self) -> impl Iterator<Item = &PsEdge> {
        self.edges.iter().filter(|e| e.backbone)
    }

    /// Edge list CSV `p,q,phi,backbone`, sorted by product codes.
    pub fn to_edge_csv(&self) -> String {
        let mut out = String::from("p,q,phi,backbone\n");
        for e in &self.edges {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                self.nodes[e.a].product, self.nodes[e.b].product, e.phi, e.backbone
            );
        }
        out
    }
}

/// Kruskal over descending phi (ties broken by the lexicographic product
/// pair) for the backbone, unioned with every edge at or above the cutoff.
/// Zero-phi pairs never form edges, so fully unrelated products stay isolated.
pub fn build_product_space(
    prox: &ProximityMatrix,
    ubiquity: &[u32],
    pci: Option<&[f64]>,
    opts: &ProductSpaceOptions,
) -> Result<ProductSpaceGraph> {
    let n = prox.len();
    if n < 2 {
        return Err(Error::TooFewProducts { got: n });
    }
    if ubiquity.len() != n || pci.is_some_and(|p| p.len() != n) {
        return Err(Error::InvalidInput(
            "node attributes do not match the proximity products".to_string(),
        ));
    }

    let nodes: Vec<PsNode> = (0..n)
        .map(|i| PsNode {
            product: prox.products[i].clone(),
            ubiquity: ubiquity[i],
            pci: pci.map(|p| p[i]),
        })
        .collect();

    // Candidate edges with code(a) < code(b).
    let mut candidates: Vec<(usize, usize, f64)> = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            let phi = prox.get(i, j);
            if phi > 0.0 {
                let (a, b) = if prox.products[i] <= prox.products[j] { (i, j) } else { (j, i) };
                candidates.push((a, b, phi));
            }
        }
    }
    candidates.sort_by(|x, y| {
        y.2.total_cmp(&x.2)
            .then_with(|| prox.products[x.0].cmp(&prox.products[y.0]))
            .then_with(|| prox.products[x.1].cmp(&prox.products[y.1]))
    });

    let mut in_backbone = vec![false; candidates.len()];
    if opts.with_mst {
        let mut dsu = Dsu::new(n);
        let mut picked = 0;
        for (idx, &(a, b, _)) in candidates.iter().enumerate() {
            if dsu.union(a, b) {
                in_backbone[idx] = true;
                picked += 1;
                if picked == n - 1 {
                    break;
                }
            }
        }
    }

    let mut edges: Vec<PsEdge> = candidates
        .iter()
        .enumerate()
        .filter(|(idx, &(_, _, phi))| in_backbone[*idx] || phi >= opts.edge_threshold)
        .map(|(idx, &(a, b, phi))| PsEdge { a, b, phi, backbone: in_backbone[idx] })
        .collect();
    edges.sort_by(|x, y| {
        prox.products[x.a]
            .cmp(&prox.products[y.a])
            .then_with(|| prox.products[x.b].cmp(&prox.products[y.b]))
    });

    Ok(ProductSpaceGraph { nodes, edges })
}

/// Per-product display attributes attached to GraphML/SVG exports.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeOverlay {
    pub share: f64,
    pub rca: bool,
    pub pgi: Option<f64>,
}

pub type OverlayTable = BTreeMap<String, NodeOverlay>;

/// GraphML 1.0 with stable element ordering. Attribute keys missing for a
/// node are omitted (GraphML's null) and reported as warnings.
pub fn export_graphml(
    graph: &ProductSpaceGraph,
    overlay: Option<&OverlayTable>,
    coords: Option<&BTreeMap<String, (f64, f64)>>,
) -> (String, Vec<String>) {
    let mut warnings = Vec::new();
    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    out.push_str(
        "<graphml xmlns=\"http://graphml.graphdrawing.org/xmlns\" \
         xmlns:xsi=\"http://www.w3.org/2001/XMLSchema-instance\" \
         xsi:schemaLocation=\"http://graphml.graphdrawing.org/xmlns \
         http://graphml.graphdrawing.org/xmlns/1.0/graphml.xsd\">\n",
    );
    for (id, name, target, ty) in [
        ("d0", "ubiquity", "node", "int"),
        ("d1", "pci", "node", "double"),
        ("d2", "share", "node", "double"),
        ("d3", "rca", "node", "boolean"),
        ("d4", "pgi", "node", "double"),
        ("d5", "x", "node", "double"),
        ("d6", "y", "node", "double"),
        ("d7", "phi", "edge", "double"),
        ("d8", "backbone", "edge", "boolean"),
    ] {
        let _ = writeln!(
            out,
            "  <key id=\"{id}\" for=\"{target}\" attr.name=\"{name}\" attr.type=\"{ty}\"/>"
        );
    }
    out.push_str("  <graph id=\"product_space\" edgedefault=\"undirected\">\n");
    for node in &graph.nodes {
        let _ = writeln!(out, "    <node id=\"{}\">", xml_escape(&node.product));
        let _ = writeln!(out, "      <data key=\"d0\">{}</data>", node.ubiquity);
        if let Some(pci) = node.pci {
            let _ = writeln!(out, "      <data key=\"d1\">{pci}</data>");
        }
        if let Some(table) = overlay {
            match table.get(&node.product) {
                Some(attrs) => {
                    let _ = writeln!(out, "      <data key=\"d2\">{}</data>", attrs.share);
                    let _ = writeln!(out, "      <data key=\"d3\">{}</data>", attrs.rca);
                    if let Some(pgi) = attrs.pgi {
                        let _ = writeln!(out, "      <data key=\"d4\">{pgi}</data>");
                    }
                }
                None => warnings.push(format!(
                    "no overlay attributes for product {}; emitted as null",
                    node.product
                )),
            }
        }
        if let Some(coords) = coords {
            if let Some(&(x, y)) = coords.get(&node.product) {
                let _ = writeln!(out, "      <data key=\"d5\">{x}</data>");
                let _ = writeln!(out, "      <data key=\"d6\">{y}</data>");
            }
        }
        out.push_str("    </node>\n");
    }
    for (i, e) in graph.edges.iter().enumerate() {
        let _ = writeln!(
            out,
            "    <edge id=\"e{i}\" source=\"{}\" target=\"{}\">",
            xml_escape(&graph.nodes[e.a].product),
            xml_escape(&graph.nodes[e.b].product)
        );
        let _ = writeln!(out, "      <data key=\"d7\">{}</data>", e.phi);
        let _ = writeln!(out, "      <data key=\"d8\">{}</data>", e.backbone);
        out.push_str("    </edge>\n");
    }
    out.push_str("  </graph>\n</graphml>\n");
    (out, warnings)
}

/// Optional `product,x,y` layout file for SVG rendering.
pub fn load_coordinates(path: &Path) -> Result<BTreeMap<String, (f64, f64)>> {
    let file = std::fs::File::open(path)
        .map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    load_coordinates_from_reader(file, &path.display().to_string())
}

pub fn load_coordinates_from_reader<R: Read>(
    reader: R,
    source: &str,
) -> Result<BTreeMap<String, (f64, f64)>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::InvalidInput(format!("{source}: {e}")))?
        .iter()
        .map(str::trim)
        .collect::<Vec<_>>()
        .join(",");
    if headers != COORDINATES_HEADER {
        return Err(Error::HeaderMismatch {
            path: source.to_string(),
            expected: COORDINATES_HEADER.to_string(),
            found: headers,
        });
    }
    let mut coords = BTreeMap::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::InvalidInput(format!("{source}: {e}")))?;
        if record.len() != 3 {
            return Err(Error::InvalidInput(format!("{source}: wrong field count")));
        }
        let x: f64 = record[1]
            .trim()
            .parse()
            .map_err(|_| Error::InvalidInput(format!("{source}: bad x `{}`", &record[1])))?;
        let y: f64 = record[2]
            .trim()
            .parse()
            .map_err(|_| Error::InvalidInput(format!("{source}: bad y `{}`", &record[2])))?;
        coords.insert(record[0].trim().to_string(), (x, y));
    }
    Ok(coords)
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

struct Dsu {
    parent: Vec<usize>,
}

impl Dsu {
    fn new(n: usize) -> Self {
        Dsu { parent: (0..n).collect() }
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent[ra.max(rb)] = ra.min(rb);
        true
    }
}
