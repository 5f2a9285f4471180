//! Proximity against a brute-force co-exporter enumeration on small random
//! matrices, plus the spanning-tree and threshold laws of the product-space
//! builder on random proximity matrices.

use std::collections::BTreeSet;

use ndarray::Array2;
use proptest::prelude::*;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use xgini_core::prodspace::{
    build_product_space, compute_proximity, ProductSpaceOptions, ProximityMatrix,
};

/// Brute force: list the exporter sets, intersect them, divide by the larger
/// set size.
fn phi_brute(m: &Array2<u8>, p: usize, q: usize) -> f64 {
    let exporters = |j: usize| -> BTreeSet<usize> {
        (0..m.nrows()).filter(|&c| m[(c, j)] == 1).collect()
    };
    let a = exporters(p);
    let b = exporters(q);
    let co = a.intersection(&b).count() as f64;
    co / a.len().max(b.len()) as f64
}

proptest! {
    #[test]
    fn phi_matches_brute_force_enumeration(
        nc in 2usize..=5,
        np in 2usize..=6,
        bits in proptest::collection::vec(any::<bool>(), 30),
    ) {
        let mut m = Array2::<u8>::zeros((nc, np));
        for i in 0..nc {
            for j in 0..np {
                if bits[i * np + j] {
                    m[(i, j)] = 1;
                }
            }
        }
        // Every product needs an exporter; wire empty columns to country 0.
        for j in 0..np {
            if (0..nc).all(|i| m[(i, j)] == 0) {
                m[(0, j)] = 1;
            }
        }
        let products: Vec<String> = (0..np).map(|j| format!("P{j:02}")).collect();
        let prox = compute_proximity(&m, &products).unwrap();
        for p in 0..np {
            for q in 0..np {
                if p == q {
                    prop_assert_eq!(prox.get(p, q), 1.0);
                } else {
                    prop_assert_eq!(prox.get(p, q), phi_brute(&m, p, q));
                    prop_assert_eq!(prox.get(p, q), prox.get(q, p));
                    prop_assert!((0.0..=1.0).contains(&prox.get(p, q)));
                }
            }
        }
    }
}

fn random_proximity(rng: &mut ChaCha8Rng, n: usize) -> ProximityMatrix {
    let mut phi = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        phi[(i, i)] = 1.0;
        for j in (i + 1)..n {
            let v: f64 = rng.random_range(0.01..1.0);
            phi[(i, j)] = v;
            phi[(j, i)] = v;
        }
    }
    let products: Vec<String> = (0..n).map(|j| format!("P{j:03}")).collect();
    ProximityMatrix::new(products, phi).unwrap()
}

fn is_spanning_tree(n: usize, edges: &[(usize, usize)]) -> bool {
    if edges.len() != n - 1 {
        return false;
    }
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for &(a, b) in edges {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra == rb {
            return false; // cycle
        }
        parent[ra] = rb;
    }
    let root = find(&mut parent, 0);
    (0..n).all(|i| find(&mut parent, i) == root)
}

#[test]
fn backbone_is_a_spanning_tree_on_random_matrices() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..100 {
        let n = rng.random_range(10..=50);
        let prox = random_proximity(&mut rng, n);
        let ubiquity = vec![1u32; n];
        let graph =
            build_product_space(&prox, &ubiquity, None, &ProductSpaceOptions::default()).unwrap();
        let backbone: Vec<(usize, usize)> =
            graph.backbone_edges().map(|e| (e.a, e.b)).collect();
        assert!(is_spanning_tree(n, &backbone), "n={n}");
    }
}

#[test]
fn raising_the_threshold_never_adds_edges() {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    for _ in 0..50 {
        let n = rng.random_range(5..=20);
        let prox = random_proximity(&mut rng, n);
        let ubiquity = vec![1u32; n];
        let low = build_product_space(
            &prox,
            &ubiquity,
            None,
            &ProductSpaceOptions { edge_threshold: 0.3, with_mst: true },
        )
        .unwrap();
        let high = build_product_space(
            &prox,
            &ubiquity,
            None,
            &ProductSpaceOptions { edge_threshold: 0.7, with_mst: true },
        )
        .unwrap();
        let low_pairs: BTreeSet<(usize, usize)> = low.edges.iter().map(|e| (e.a, e.b)).collect();
        for e in &high.edges {
            if !e.backbone {
                assert!(e.phi >= 0.7);
            }
            assert!(low_pairs.contains(&(e.a, e.b)), "edge appeared when raising threshold");
        }
    }
}

#[test]
fn repeated_builds_emit_identical_bytes() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..20 {
        let n = rng.random_range(5..=30);
        let prox = random_proximity(&mut rng, n);
        let ubiquity = vec![1u32; n];
        let a = build_product_space(&prox, &ubiquity, None, &ProductSpaceOptions::default())
            .unwrap();
        let b = build_product_space(&prox, &ubiquity, None, &ProductSpaceOptions::default())
            .unwrap();
        assert_eq!(a.to_edge_csv(), b.to_edge_csv());
    }
}
