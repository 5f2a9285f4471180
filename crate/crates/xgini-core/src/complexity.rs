//! ECI and PCI from the binary specialization matrix.
//!
//! Two routes are provided and must agree: a deflated power iteration on the
//! country-to-country transition matrix (eigenvector route), and the classic
//! alternating diversity/ubiquity averaging (method of reflections). Both
//! return z-scored values oriented so that ECI correlates non-negatively with
//! diversity.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

/// Tolerance under which adjacent eigenvalues are treated as one multiple
/// eigenvalue (scores would depend on the start vector).
const SPECTRAL_GAP_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct EigenOptions {
    /// Max-norm movement of the iterated unit vector at which it counts as
    /// converged.
    pub tol: f64,
    pub max_iterations: usize,
}

impl Default for EigenOptions {
    fn default() -> Self {
        EigenOptions { tol: 1e-12, max_iterations: 10_000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReflectionsOptions {
    /// Maximum number of even-level rounds (two averaging levels per round).
    pub iterations: usize,
    /// Max-norm movement of the z-scored even-level country vector.
    pub tol: f64,
}

impl Default for ReflectionsOptions {
    fn default() -> Self {
        ReflectionsOptions { iterations: 10_000, tol: 1e-10 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SolverDiagnostic {
    Eigen { iterations: usize, lambda2: f64, lambda3: Option<f64> },
    Reflections { rounds: usize, last_delta: f64 },
    /// Scores loaded from a dump; the solver path is not recorded there.
    Unspecified,
}

impl SolverDiagnostic {
    pub fn summary(&self) -> String {
        match self {
            SolverDiagnostic::Eigen { iterations, lambda2, lambda3 } => format!(
                "eigen: {iterations} iterations, lambda2={lambda2:.6}, lambda3={}",
                lambda3.map_or("n/a".to_string(), |l| format!("{l:.6}"))
            ),
            SolverDiagnostic::Reflections { rounds, last_delta } => {
                format!("reflections: {rounds} rounds, last delta {last_delta:.3e}")
            }
            SolverDiagnostic::Unspecified => "unspecified".to_string(),
        }
    }
}

/// Z-scored complexity scores for one year.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexityScores {
    pub year: i32,
    pub countries: Vec<String>,
    pub products: Vec<String>,
    pub eci: Vec<f64>,
    pub pci: Vec<f64>,
    pub solver: SolverDiagnostic,
}

impl ComplexityScores {
    pub fn eci_of(&self, code: &str) -> Option<f64> {
        self.countries.iter().position(|c| c == code).map(|i| self.eci[i])
    }
}

/// Country-to-country transition matrix W_cc' = sum_p M_cp M_c'p / (k_c k_p).
///
/// W is row-stochastic; its leading eigenvector is constant and the second
/// eigenvector carries the complexity ordering.
pub fn country_transition_matrix(m: &Array2<u8>) -> Array2<f64> {
    let (n, np) = m.dim();
    let (kc, kp) = margins(m);
    let mut w = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let mut sum = 0.0;
            for p in 0..np {
                if m[(i, p)] == 1 && m[(j, p)] == 1 {
                    sum += 1.0 / kp[p] as f64;
                }
            }
            w[(i, j)] = sum / kc[i] as f64;
        }
    }
    w
}

/// Eigenvector route: deflate the constant eigenvector of W and iterate to
/// the second. Internally works on the symmetrized similar matrix
/// D^{1/2} W D^{-1/2}, whose spectrum is real and non-negative.
pub fn compute_eci_eigen(
    year: i32,
    m: &Array2<u8>,
    countries: &[String],
    products: &[String],
    opts: &EigenOptions,
) -> Result<ComplexityScores> {
    let (kc, kp) = validate(m, countries, products)?;
    check_connected(m, countries)?;
    let n = countries.len();
    let np = products.len();

    // wsym[i][j] = sum_p m_ip m_jp / (kp_p sqrt(kc_i kc_j)); symmetric by
    // construction, entry by entry.
    let sqrt_k: Vec<f64> = kc.iter().map(|&k| (k as f64).sqrt()).collect();
    let mut wsym = Array2::zeros((n, n));
    for i in 0..n {
        for j in i..n {
            let mut sum = 0.0;
            for p in 0..np {
                if m[(i, p)] == 1 && m[(j, p)] == 1 {
                    sum += 1.0 / kp[p] as f64;
                }
            }
            let v = sum / (sqrt_k[i] * sqrt_k[j]);
            wsym[(i, j)] = v;
            wsym[(j, i)] = v;
        }
    }

    // Leading eigenvector of wsym (eigenvalue 1), image of the constant
    // vector under D^{1/2}.
    let u1 = unit(Array1::from(sqrt_k.clone()));

    // Start from z-scored diversity mapped into wsym coordinates, with a
    // deterministic generic component so exactly symmetric matrices cannot
    // leave the start orthogonal to the target eigenvector.
    let mean_div = kc.iter().map(|&k| k as f64).sum::<f64>() / n as f64;
    let diversity_start = Array1::from_shape_fn(n, |i| sqrt_k[i] * (kc[i] as f64 - mean_div));
    let generic = orthogonalize(Array1::from(splitmix_vector(n, 0)), &[&u1]);
    let mut start = orthogonalize(diversity_start, &[&u1]);
    if norm(&start) < 1e-12 {
        start = generic;
    } else if norm(&generic) > 1e-12 {
        start = unit(start) + 1e-3 * &unit(generic);
    }
    if norm(&start) < 1e-12 {
        return Err(Error::DegenerateSpectrum {
            detail: "no usable start vector for the deflated iteration".to_string(),
        });
    }

    let run1 = deflated_power(&wsym, &[&u1], unit(start), opts)?;
    if !run1.converged {
        return Err(Error::NonConvergence {
            steps: run1.iterations,
            last_delta: run1.last_delta,
        });
    }
    let mut u2 = run1.vector;
    let mut lambda2 = run1.rayleigh;
    let mut iterations = run1.iterations;

    // Third eigenvalue estimate drives the multiplicity check. Convergence is
    // not required: near a tie the Rayleigh quotient settles inside the
    // cluster anyway.
    let mut lambda3 = None;
    if n >= 3 {
        let start3 = orthogonalize(Array1::from(splitmix_vector(n, 1)), &[&u1, &u2]);
        if norm(&start3) > 1e-12 {
            let run3 = deflated_power(&wsym, &[&u1, &u2], unit(start3), opts)?;
            iterations += run3.iterations;
            let mut l3 = run3.rayleigh;
            // The main run can land below the second eigenvector when the
            // start was (numerically) orthogonal to it; promote and retry.
            if l3 > lambda2 + SPECTRAL_GAP_TOL {
                let demoted = lambda2;
                u2 = run3.vector;
                lambda2 = l3;
                l3 = demoted;
                let restart = orthogonalize(Array1::from(splitmix_vector(n, 2)), &[&u1, &u2]);
                if norm(&restart) > 1e-12 {
                    let rerun = deflated_power(&wsym, &[&u1, &u2], unit(restart), opts)?;
                    iterations += rerun.iterations;
                    l3 = rerun.rayleigh;
                }
            }
            lambda3 = Some(l3);
        }
    }

    if lambda2 > 1.0 - SPECTRAL_GAP_TOL {
        return Err(Error::DegenerateSpectrum {
            detail: format!(
                "second eigenvalue {lambda2} indistinguishable from the leading eigenvalue 1"
            ),
        });
    }
    if let Some(l3) = lambda3 {
        if lambda2 - l3 < SPECTRAL_GAP_TOL {
            return Err(Error::DegenerateSpectrum {
                detail: format!(
                    "second eigenvalue has multiplicity > 1 (lambda2={lambda2}, lambda3={l3})"
                ),
            });
        }
    }

    // Back to W coordinates, then the product scores via one reflection.
    let v2: Vec<f64> = (0..n).map(|i| u2[i] / sqrt_k[i]).collect();
    let mut eci = zscore(&v2)?;
    let mut pci = zscore(&product_average(m, &v2, &kp))?;
    orient(&mut eci, &mut pci, &kc, &kp);

    Ok(ComplexityScores {
        year,
        countries: countries.to_vec(),
        products: products.to_vec(),
        eci,
        pci,
        solver: SolverDiagnostic::Eigen { iterations, lambda2, lambda3 },
    })
}

/// Method of reflections: alternate country/product averaging from diversity
/// and ubiquity, z-scoring every even level. Serves as the independent oracle
/// for the eigenvector route.
pub fn compute_eci_reflections(
    year: i32,
    m: &Array2<u8>,
    countries: &[String],
    products: &[String],
    opts: &ReflectionsOptions,
) -> Result<ComplexityScores> {
    let (kc, kp) = validate(m, countries, products)?;
    check_connected(m, countries)?;

    let degenerate = |level: usize| Error::DegenerateSpectrum {
        detail: format!("reflections collapsed to a constant vector at level {level}"),
    };

    // Z-scoring each even level is a positive affine renormalization, so it
    // never changes later z-scores; it only keeps the numbers well scaled.
    let mut c: Vec<f64> =
        zscore(&kc.iter().map(|&k| k as f64).collect::<Vec<_>>()).map_err(|_| degenerate(0))?;
    let mut p: Vec<f64> =
        zscore(&kp.iter().map(|&k| k as f64).collect::<Vec<_>>()).map_err(|_| degenerate(0))?;

    let mut last_delta = f64::INFINITY;
    let mut done_rounds = 0;
    let mut converged = false;
    for round in 1..=opts.iterations {
        let c1 = country_average(m, &p, &kc);
        let p1 = product_average(m, &c, &kp);
        let c2 = country_average(m, &p1, &kc);
        let p2 = product_average(m, &c1, &kp);
        let level = 2 * round;
        let cz = zscore(&c2).map_err(|_| degenerate(level))?;
        let pz = zscore(&p2).map_err(|_| degenerate(level))?;
        last_delta = max_abs_diff(&cz, &c);
        c = cz;
        p = pz;
        done_rounds = round;
        if last_delta < opts.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NonConvergence { steps: done_rounds, last_delta });
    }

    let mut eci = c;
    let mut pci = zscore(&product_average(m, &eci, &kp))
        .map_err(|_| degenerate(2 * done_rounds + 1))?;
    orient(&mut eci, &mut pci, &kc, &kp);

    Ok(ComplexityScores {
        year,
        countries: countries.to_vec(),
        products: products.to_vec(),
        eci,
        pci,
        solver: SolverDiagnostic::Reflections { rounds: done_rounds, last_delta },
    })
}

/// One ranked row of a score table.
#[derive(Debug, Clone, PartialEq)]
pub struct RankEntry {
    pub rank: u32,
    pub code: String,
    pub name: String,
    pub score: f64,
    pub tied: bool,
}

/// Descending ranks 1..n; exact score ties are ordered lexicographically by
/// code and flagged.
pub fn rank_entities(
    codes: &[String],
    scores: &[f64],
    names: Option<&BTreeMap<String, String>>,
) -> Vec<RankEntry> {
    let mut order: Vec<usize> = (0..codes.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b].total_cmp(&scores[a]).then_with(|| codes[a].cmp(&codes[b]))
    });
    order
        .iter()
        .enumerate()
        .map(|(pos, &i)| {
            let tied = (pos > 0 && scores[order[pos - 1]] == scores[i])
                || (pos + 1 < order.len() && scores[order[pos + 1]] == scores[i]);
            RankEntry {
                rank: pos as u32 + 1,
                code: codes[i].clone(),
                name: names
                    .and_then(|n| n.get(&codes[i]).cloned())
                    .unwrap_or_else(|| codes[i].clone()),
                score: scores[i],
                tied,
            }
        })
        .collect()
}

pub fn rank_by_eci(
    scores: &ComplexityScores,
    names: Option<&BTreeMap<String, String>>,
) -> Vec<RankEntry> {
    rank_entities(&scores.countries, &scores.eci, names)
}

pub const SCORES_HEADER: &str = "year,entity_kind,entity,score,rank";

/// `year,entity_kind,entity,score,rank` dump: countries ranked by ECI, then
/// products ranked by PCI.
pub fn write_scores_csv(scores: &ComplexityScores) -> String {
    use std::fmt::Write as _;
    let mut out = String::from("year,entity_kind,entity,score,rank\n");
    for entry in rank_entities(&scores.countries, &scores.eci, None) {
        let _ = writeln!(
            out,
            "{},country,{},{},{}",
            scores.year, entry.code, entry.score, entry.rank
        );
    }
    for entry in rank_entities(&scores.products, &scores.pci, None) {
        let _ = writeln!(
            out,
            "{},product,{},{},{}",
            scores.year, entry.code, entry.score, entry.rank
        );
    }
    out
}

pub fn read_scores_csv<R: std::io::Read>(reader: R, source: &str) -> Result<ComplexityScores> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::InvalidInput(format!("{source}: {e}")))?
        .iter()
        .collect::<Vec<_>>()
        .join(",");
    if headers != SCORES_HEADER {
        return Err(Error::HeaderMismatch {
            path: source.to_string(),
            expected: SCORES_HEADER.to_string(),
            found: headers,
        });
    }
    let mut year = None;
    let mut countries = Vec::new();
    let mut eci = Vec::new();
    let mut products = Vec::new();
    let mut pci = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::InvalidInput(format!("{source}: {e}")))?;
        if record.len() != 5 {
            return Err(Error::InvalidInput(format!("{source}: wrong field count")));
        }
        let bad = |what: &str| Error::InvalidInput(format!("{source}: bad {what}"));
        let y: i32 = record[0].parse().map_err(|_| bad("year"))?;
        year.get_or_insert(y);
        let score: f64 = record[3].parse().map_err(|_| bad("score"))?;
        match &record[1] {
            "country" => {
                countries.push(record[2].to_string());
                eci.push(score);
            }
            "product" => {
                products.push(record[2].to_string());
                pci.push(score);
            }
            _ => return Err(bad("entity_kind")),
        }
    }
    let year = year.ok_or_else(|| Error::InvalidInput(format!("{source}: empty table")))?;
    Ok(ComplexityScores {
        year,
        countries,
        products,
        eci,
        pci,
        solver: SolverDiagnostic::Unspecified,
    })
}

// ---------------------------------------------------------------------------
// internals

fn margins(m: &Array2<u8>) -> (Vec<u32>, Vec<u32>) {
    crate::matrices::diversity_ubiquity(&m.view())
}

fn validate(m: &Array2<u8>, countries: &[String], products: &[String]) -> Result<(Vec<u32>, Vec<u32>)> {
    let (n, np) = m.dim();
    if n != countries.len() || np != products.len() {
        return Err(Error::InvalidInput(format!(
            "matrix is {n}x{np} but {} countries and {} products were labelled",
            countries.len(),
            products.len()
        )));
    }
    if n < 2 || np < 2 {
        return Err(Error::InvalidInput(
            "complexity scores need at least 2 countries and 2 products".to_string(),
        ));
    }
    if m.iter().any(|&b| b > 1) {
        return Err(Error::InvalidInput("specialization matrix must be binary".to_string()));
    }
    let (kc, kp) = margins(m);
    let dead_c: Vec<&str> = kc
        .iter()
        .zip(countries)
        .filter(|(&k, _)| k == 0)
        .map(|(_, c)| c.as_str())
        .collect();
    let dead_p: Vec<&str> = kp
        .iter()
        .zip(products)
        .filter(|(&k, _)| k == 0)
        .map(|(_, p)| p.as_str())
        .collect();
    if !dead_c.is_empty() || !dead_p.is_empty() {
        return Err(Error::InvalidInput(format!(
            "zero rows/columns in M (countries: [{}], products: [{}]); prune before scoring",
            dead_c.join(", "),
            dead_p.join(", ")
        )));
    }
    Ok((kc, kp))
}

fn check_connected(m: &Array2<u8>, countries: &[String]) -> Result<()> {
    let (n, np) = m.dim();
    let mut dsu = Dsu::new(n + np);
    for i in 0..n {
        for p in 0..np {
            if m[(i, p)] == 1 {
                dsu.union(i, n + p);
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    for (i, country) in countries.iter().enumerate() {
        groups.entry(dsu.find(i)).or_default().push(country.clone());
    }
    if groups.len() > 1 {
        return Err(Error::Disconnected { components: groups.into_values().collect() });
    }
    Ok(())
}

/// (1/k_c) sum_p M_cp x_p for every country.
fn country_average(m: &Array2<u8>, x: &[f64], kc: &[u32]) -> Vec<f64> {
    let (n, np) = m.dim();
    (0..n)
        .map(|i| {
            let mut sum = 0.0;
            for p in 0..np {
                if m[(i, p)] == 1 {
                    sum += x[p];
                }
            }
            sum / kc[i] as f64
        })
        .collect()
}

/// (1/k_p) sum_c M_cp x_c for every product.
fn product_average(m: &Array2<u8>, x: &[f64], kp: &[u32]) -> Vec<f64> {
    let (n, np) = m.dim();
    (0..np)
        .map(|p| {
            let mut sum = 0.0;
            for i in 0..n {
                if m[(i, p)] == 1 {
                    sum += x[i];
                }
            }
            sum / kp[p] as f64
        })
        .collect()
}

struct PowerRun {
    vector: Array1<f64>,
    rayleigh: f64,
    iterations: usize,
    last_delta: f64,
    converged: bool,
}

/// Power iteration on a symmetric PSD matrix, kept orthogonal to `ortho`.
fn deflated_power(
    a: &Array2<f64>,
    ortho: &[&Array1<f64>],
    start: Array1<f64>,
    opts: &EigenOptions,
) -> Result<PowerRun> {
    let mut x = start;
    let mut rayleigh = 0.0;
    let mut last_delta = f64::INFINITY;
    for it in 1..=opts.max_iterations {
        let y = orthogonalize(a.dot(&x), ortho);
        rayleigh = x.dot(&y);
        let ny = norm(&y);
        if ny < 1e-300 {
            // x already spans a null direction of the deflated operator.
            return Ok(PowerRun { vector: x, rayleigh: 0.0, iterations: it, last_delta: 0.0, converged: true });
        }
        let y = y / ny;
        last_delta = max_abs_diff(y.as_slice().unwrap(), x.as_slice().unwrap());
        x = y;
        if last_delta < opts.tol {
            return Ok(PowerRun { vector: x, rayleigh, iterations: it, last_delta, converged: true });
        }
    }
    Ok(PowerRun {
        vector: x,
        rayleigh,
        iterations: opts.max_iterations,
        last_delta,
        converged: false,
    })
}

fn orthogonalize(mut x: Array1<f64>, ortho: &[&Array1<f64>]) -> Array1<f64> {
    for u in ortho {
        let proj = x.dot(*u);
        x = x - proj * *u;
    }
    x
}

fn norm(x: &Array1<f64>) -> f64 {
    x.dot(x).sqrt()
}

fn unit(x: Array1<f64>) -> Array1<f64> {
    let n = norm(&x);
    x / n
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Deterministic generic direction (splitmix64 stream); breaks exact
/// symmetries without introducing run-to-run randomness. Distinct streams
/// give linearly unrelated vectors.
fn splitmix_vector(n: usize, stream: u64) -> Vec<f64> {
    let mut state: u64 = (stream + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    (0..n)
        .map(|_| {
            state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
            let mut z = state;
            z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
            z ^= z >> 31;
            (z >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        })
        .collect()
}

/// Population z-score; errors on (numerically) zero variance.
fn zscore(values: &[f64]) -> Result<Vec<f64>> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let sd = var.sqrt();
    if !(sd > 1e-13 * (1.0 + mean.abs())) {
        return Err(Error::DegenerateSpectrum {
            detail: "z-score undefined: zero variance".to_string(),
        });
    }
    Ok(values.iter().map(|v| (v - mean) / sd).collect())
}

/// Fix the overall sign: ECI correlates non-negatively with diversity; when
/// that correlation is zero, fall back to PCI against negative ubiquity, then
/// to the first nonzero score.
fn orient(eci: &mut [f64], pci: &mut [f64], kc: &[u32], kp: &[u32]) {
    let div: Vec<f64> = kc.iter().map(|&k| k as f64).collect();
    let neg_ub: Vec<f64> = kp.iter().map(|&k| -(k as f64)).collect();
    let sign = corr_sign(eci, &div)
        .or_else(|| corr_sign(pci, &neg_ub))
        .or_else(|| eci.iter().find(|v| v.abs() > 1e-12).map(|v| v.signum()))
        .unwrap_or(1.0);
    if sign < 0.0 {
        for v in eci.iter_mut() {
            *v = -*v;
        }
        for v in pci.iter_mut() {
            *v = -*v;
        }
    }
}

fn corr_sign(a: &[f64], b: &[f64]) -> Option<f64> {
    let c = pearson(a, b)?;
    if c.abs() < 1e-12 {
        None
    } else {
        Some(c.signum())
    }
}

pub(crate) fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return None;
    }
    Some(cov / (va.sqrt() * vb.sqrt()))
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
