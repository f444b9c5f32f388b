//! Distance-matrix invariants, checked over many random shapes, plus exact
//! CSV round-trips and import rejections.

use hl_core::topology::DistanceMatrix;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    /// Structural invariants hold for arbitrary (n, beta, seed) triples:
    /// zero diagonal, exact symmetry, every off-diagonal entry in (0, beta].
    #[test]
    fn generated_matrices_satisfy_invariants(
        n in 1usize..40,
        beta in 1e-6f64..100.0,
        seed in any::<u64>(),
    ) {
        let m = DistanceMatrix::generate(n, beta, seed).unwrap();
        prop_assert_eq!(m.n(), n);
        prop_assert_eq!(m.beta(), beta);
        prop_assert_eq!(m.seed(), Some(seed));
        for i in 0..n {
            prop_assert_eq!(m.get(i, i), 0.0);
            for j in 0..n {
                prop_assert_eq!(m.get(i, j), m.get(j, i));
                if i != j {
                    prop_assert!(m.get(i, j) > 0.0 && m.get(i, j) <= beta);
                }
            }
        }
        m.validate().unwrap();
    }

    /// Export then import reproduces every entry exactly (shortest-roundtrip
    /// float formatting), with beta inferred as the off-diagonal maximum.
    #[test]
    fn csv_round_trip_is_exact(
        n in 2usize..20,
        beta in 1e-3f64..10.0,
        seed in any::<u64>(),
    ) {
        let m = DistanceMatrix::generate(n, beta, seed).unwrap();
        let back = DistanceMatrix::from_csv(&m.to_csv(), "roundtrip").unwrap();
        prop_assert_eq!(back.n(), n);
        prop_assert_eq!(back.seed(), None);
        for i in 0..n {
            for j in 0..n {
                prop_assert_eq!(back.get(i, j), m.get(i, j));
            }
        }
        let max_off = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .filter(|&(i, j)| i != j)
            .map(|(i, j)| m.get(i, j))
            .fold(0.0f64, f64::max);
        prop_assert_eq!(back.beta(), max_off);
    }

    /// path_cost equals a plain loop over consecutive hops.
    #[test]
    fn path_cost_matches_manual_sum(
        seed in any::<u64>(),
        visits in proptest::collection::vec(0usize..7, 1..25),
    ) {
        let m = DistanceMatrix::generate(7, 1.0, seed).unwrap();
        let mut expect = 0.0;
        for w in visits.windows(2) {
            expect += m.get(w[0], w[1]);
        }
        prop_assert_eq!(m.path_cost(&visits).unwrap(), expect);
    }
}

#[test]
fn generation_is_deterministic_and_seed_sensitive() {
    let a = DistanceMatrix::generate(10, 0.1, 5).unwrap();
    let b = DistanceMatrix::generate(10, 0.1, 5).unwrap();
    let c = DistanceMatrix::generate(10, 0.1, 6).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn single_node_paths_cost_nothing() {
    let m = DistanceMatrix::generate(1, 0.1, 0).unwrap();
    assert_eq!(m.path_cost(&[0]).unwrap(), 0.0);
    assert_eq!(m.path_cost(&[0, 0, 0]).unwrap(), 0.0);
    assert_eq!(m.path_cost(&[]).unwrap(), 0.0);
}

#[test]
fn out_of_range_visits_are_rejected() {
    let m = DistanceMatrix::generate(3, 0.1, 0).unwrap();
    let err = m.path_cost(&[0, 3]).unwrap_err().to_string();
    assert!(err.contains('3'), "{err}");
}

#[test]
fn degenerate_parameters_are_rejected() {
    assert!(DistanceMatrix::generate(0, 0.1, 0).is_err());
    assert!(DistanceMatrix::generate(3, 0.0, 0).is_err());
    assert!(DistanceMatrix::generate(3, -1.0, 0).is_err());
    assert!(DistanceMatrix::generate(3, f64::NAN, 0).is_err());
    assert!(DistanceMatrix::generate(3, f64::INFINITY, 0).is_err());
}

#[test]
fn imports_reject_malformed_matrices() {
    // Ragged rows.
    let err = DistanceMatrix::from_csv("0,1\n1,0,2\n", "t").unwrap_err().to_string();
    assert!(err.contains("row 2"), "{err}");
    // Non-numeric field with its line number.
    let err = DistanceMatrix::from_csv("0,x\n1,0\n", "t").unwrap_err().to_string();
    assert!(err.contains("line 1"), "{err}");
    // Asymmetry.
    let err = DistanceMatrix::from_csv("0,0.5\n0.4,0\n", "t").unwrap_err().to_string();
    assert!(err.contains("asymmetry"), "{err}");
    // Nonzero diagonal.
    let err = DistanceMatrix::from_csv("0.1,0.5\n0.5,0\n", "t").unwrap_err().to_string();
    assert!(err.contains("diagonal"), "{err}");
    // Zero off-diagonal (distances must be strictly positive).
    assert!(DistanceMatrix::from_csv("0,0\n0,0\n", "t").is_err());
    // Empty input.
    assert!(DistanceMatrix::from_csv("\n\n", "t").is_err());
}

#[test]
fn import_accepts_blank_lines_and_whitespace() {
    let m = DistanceMatrix::from_csv("0, 0.25\n\n0.25 ,0\n\n", "t").unwrap();
    assert_eq!(m.n(), 2);
    assert_eq!(m.get(0, 1), 0.25);
    assert_eq!(m.beta(), 0.25);
}
