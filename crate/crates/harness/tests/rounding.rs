use hostpar::initial::round_initial;
use hostpar_core::{DensityVector, Norms};
use proptest::prelude::*;

fn density(raw: Vec<f64>) -> DensityVector {
    let s: f64 = raw.iter().sum();
    let mut v: Vec<f64> = raw.iter().map(|x| x / s).collect();
    // put the float residue on the largest entry so the mass is 1 to rounding
    let k = (0..v.len()).max_by(|&a, &b| v[a].total_cmp(&v[b])).unwrap();
    v[k] += 1.0 - v.iter().sum::<f64>();
    DensityVector::from_values(v)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn apportionment_is_exact_and_close(raw in prop::collection::vec(0.01f64..1.0, 1..11), n in 1u64..5000) {
        let x0 = density(raw);
        let s = round_initial(&x0, n).unwrap();
        prop_assert_eq!(s.total_hosts(), n);
        let j = x0.values().len();
        let xn = s.scale(n).unwrap();
        let gap: Vec<f64> = (0..j.max(xn.values().len())).map(|i| xn.get(i) - x0.get(i)).collect();
        prop_assert!(gap.l11_norm() <= (j * j) as f64 / n as f64 + 1e-12);
        for (i, c) in s.iter() {
            prop_assert!((c as f64 - n as f64 * x0.get(i)).abs() < 1.0 + 1e-9);
        }
    }

    #[test]
    fn loads_up_to_ten_at_one_thousand(raw in prop::collection::vec(0.0f64..1.0, 11)) {
        prop_assume!(raw.iter().sum::<f64>() > 0.0);
        let x0 = density(raw);
        let s = round_initial(&x0, 1000).unwrap();
        let xn = s.scale(1000).unwrap();
        let gap: Vec<f64> = (0..11).map(|i| xn.get(i) - x0.get(i)).collect();
        prop_assert!(gap.l11_norm() <= 121.0 / 1000.0);
    }
}
