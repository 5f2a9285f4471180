//! Independent brute-force checks of the PGI / Xgini weighted averages:
//! a plain double loop over (country, product) cells is compared with the
//! library implementation on random fixtures, together with the fixed-point,
//! bounds and share-scale laws.

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use xgini_core::inequality::{compute_pgi, compute_xgini};
use xgini_core::matrices::diversity_ubiquity;
use xgini_core::SpecializationMatrices;

struct Fixture {
    sm: SpecializationMatrices,
    gini: BTreeMap<String, f64>,
}

fn random_fixture(rng: &mut ChaCha8Rng, nc: usize, np: usize, gini_gap: bool) -> Fixture {
    let mut m = Array2::<u8>::zeros((nc, np));
    for i in 0..nc {
        for j in 0..np {
            if rng.random_bool(0.5) {
                m[(i, j)] = 1;
            }
        }
    }
    let mut shares = Array2::<f64>::zeros((nc, np));
    for i in 0..nc {
        let mut row: Vec<f64> = (0..np).map(|_| rng.random_range(0.01..1.0)).collect();
        let total: f64 = row.iter().sum();
        for v in &mut row {
            *v /= total;
        }
        for j in 0..np {
            shares[(i, j)] = row[j];
        }
    }
    let countries: Vec<String> = (0..nc).map(|i| format!("C{i:02}")).collect();
    let products: Vec<String> = (0..np).map(|j| format!("P{j:02}")).collect();
    let mut gini = BTreeMap::new();
    for c in &countries {
        if !gini_gap || rng.random_bool(0.8) {
            gini.insert(c.clone(), rng.random_range(0.0..1.0));
        }
    }
    let (diversity, ubiquity) = diversity_ubiquity(&m.view());
    Fixture {
        sm: SpecializationMatrices {
            year: 2000,
            countries,
            products,
            rca: shares.clone(),
            shares,
            m,
            diversity,
            ubiquity,
            rca_threshold: 1.0,
        },
        gini,
    }
}

/// The Eq. 1/2 arithmetic, written as the plainest possible double loop.
fn pgi_brute(sm: &SpecializationMatrices, gini: &BTreeMap<String, f64>) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    for (j, product) in sm.products.iter().enumerate() {
        let mut weighted = Vec::new();
        for (i, country) in sm.countries.iter().enumerate() {
            if sm.m[(i, j)] == 1 {
                if let Some(&g) = gini.get(country) {
                    weighted.push((sm.shares[(i, j)], g));
                }
            }
        }
        let den: f64 = weighted.iter().map(|&(s, _)| s).sum();
        if !weighted.is_empty() && den > 0.0 {
            let num: f64 = weighted.iter().map(|&(s, g)| s * g).sum();
            out.insert(product.clone(), num / den);
        }
    }
    out
}

fn xgini_brute(
    sm: &SpecializationMatrices,
    pgi: &BTreeMap<String, f64>,
) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    for (i, country) in sm.countries.iter().enumerate() {
        let mut num = 0.0;
        let mut den = 0.0;
        for (j, product) in sm.products.iter().enumerate() {
            if sm.m[(i, j)] == 1 {
                if let Some(&p) = pgi.get(product) {
                    num += sm.shares[(i, j)] * p;
                    den += sm.shares[(i, j)];
                }
            }
        }
        if den > 0.0 {
            out.insert(country.clone(), num / den);
        }
    }
    out
}

#[test]
fn implementation_matches_brute_force_on_random_fixtures() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for case in 0..500 {
        let fx = random_fixture(&mut rng, 4, 5, true);
        let pgi = compute_pgi(&fx.sm, &fx.gini);
        let brute_pgi = pgi_brute(&fx.sm, &fx.gini);
        assert_eq!(pgi.iter().count(), brute_pgi.len(), "case {case}: pgi key sets differ");
        for (product, entry) in pgi.iter() {
            let want = brute_pgi[product];
            assert!((entry.pgi - want).abs() < 1e-12, "case {case} {product}");
        }

        let xg = compute_xgini(&fx.sm, &pgi);
        let pgi_map: BTreeMap<String, f64> =
            pgi.iter().map(|(p, e)| (p.to_string(), e.pgi)).collect();
        let brute_xg = xgini_brute(&fx.sm, &pgi_map);
        assert_eq!(xg.iter().count(), brute_xg.len(), "case {case}: xgini key sets differ");
        for (country, entry) in xg.iter() {
            let want = brute_xg[country];
            assert!((entry.xgini - want).abs() < 1e-12, "case {case} {country}");
        }
    }
}

#[test]
fn constant_gini_is_a_global_fixed_point() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for &g in &[0.1, 0.43, 0.9] {
        for _ in 0..100 {
            let mut fx = random_fixture(&mut rng, 4, 5, false);
            for v in fx.gini.values_mut() {
                *v = g;
            }
            let pgi = compute_pgi(&fx.sm, &fx.gini);
            for (_, e) in pgi.iter() {
                assert!((e.pgi - g).abs() < 1e-12);
            }
            let xg = compute_xgini(&fx.sm, &pgi);
            for (_, e) in xg.iter() {
                assert!((e.xgini - g).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn pgi_and_xgini_respect_gini_bounds() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..300 {
        let fx = random_fixture(&mut rng, 4, 5, true);
        if fx.gini.is_empty() {
            continue;
        }
        let lo = fx.gini.values().cloned().fold(f64::INFINITY, f64::min);
        let hi = fx.gini.values().cloned().fold(f64::NEG_INFINITY, f64::max);
        let pgi = compute_pgi(&fx.sm, &fx.gini);
        for (_, e) in pgi.iter() {
            assert!(e.pgi >= lo - 1e-12 && e.pgi <= hi + 1e-12);
        }
        let xg = compute_xgini(&fx.sm, &pgi);
        for (country, e) in xg.iter() {
            assert!(e.xgini >= lo - 1e-12 && e.xgini <= hi + 1e-12);
            // And within the basket's own PGI range.
            let i = fx.sm.countries.iter().position(|c| c == country).unwrap();
            let basket: Vec<f64> = fx
                .sm
                .products
                .iter()
                .enumerate()
                .filter(|&(j, _)| fx.sm.m[(i, j)] == 1)
                .filter_map(|(_, p)| pgi.get(p).map(|e| e.pgi))
                .collect();
            let blo = basket.iter().cloned().fold(f64::INFINITY, f64::min);
            let bhi = basket.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert!(e.xgini >= blo - 1e-12 && e.xgini <= bhi + 1e-12);
        }
    }
}

#[test]
fn rescaling_one_country_leaves_results_unchanged_when_m_is_stable() {
    // Scaling one country's raw exports by a power of two leaves its share
    // row bit-identical; whenever the recomputed M is unchanged, every PGI
    // and Xgini must be unchanged too.
    use std::fmt::Write as _;
    use xgini_core::ingest::{load_trade_from_reader, FilterConfig};

    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut exercised = 0;
    for _ in 0..60 {
        let mut csv = String::from("year,exporter,product,value\n");
        for i in 0..4 {
            for j in 0..5 {
                if rng.random_bool(0.7) {
                    let v: f64 = rng.random_range(1.0..100.0);
                    let _ = writeln!(csv, "2000,C{i:02},P{j:02},{v}");
                }
            }
        }
        let load = |text: &str| {
            load_trade_from_reader(text.as_bytes(), "t", &FilterConfig::default()).map(|l| l.table)
        };
        let Ok(base_table) = load(&csv) else { continue };
        let Ok(base) = SpecializationMatrices::from_table(&base_table, 2000, 1.0) else {
            continue;
        };
        if !base.countries.contains(&"C00".to_string()) {
            continue;
        }

        let scaled_csv: String = csv
            .lines()
            .map(|line| {
                if line.starts_with("2000,C00,") {
                    let mut parts: Vec<String> = line.split(',').map(str::to_string).collect();
                    let v: f64 = parts[3].parse().unwrap();
                    parts[3] = (v * 2.0).to_string();
                    parts.join(",")
                } else {
                    line.to_string()
                }
            })
            .collect::<Vec<_>>()
            .join("\n")
            + "\n";
        let scaled = SpecializationMatrices::from_table(&load(&scaled_csv).unwrap(), 2000, 1.0)
            .unwrap();
        if scaled.m != base.m {
            continue; // membership moved; the law does not apply
        }
        exercised += 1;
        assert_eq!(scaled.shares, base.shares);

        let gini: BTreeMap<String, f64> = base
            .countries
            .iter()
            .map(|c| (c.clone(), rng.random_range(0.0..1.0)))
            .collect();
        let (pa, pb) = (compute_pgi(&base, &gini), compute_pgi(&scaled, &gini));
        for ((name_a, ea), (name_b, eb)) in pa.iter().zip(pb.iter()) {
            assert_eq!(name_a, name_b);
            assert_eq!(ea.pgi, eb.pgi);
        }
        let (xa, xb) = (compute_xgini(&base, &pa), compute_xgini(&scaled, &pb));
        for ((name_a, ea), (name_b, eb)) in xa.iter().zip(xb.iter()) {
            assert_eq!(name_a, name_b);
            assert_eq!(ea.xgini, eb.xgini);
        }
    }
    assert!(exercised >= 10, "only {exercised} stable-M fixtures seen");
}
