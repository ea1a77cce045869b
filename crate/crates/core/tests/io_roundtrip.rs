use irt_arena::data::{AbilityEstimate, ItemParameters, ResponseMatrix};
use irt_arena::io::{
    read_abilities, read_items, read_response_matrix, write_abilities, write_items,
    write_response_matrix,
};
use proptest::prelude::*;

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![
        -50.0..50.0f64,
        any::<f64>().prop_filter("finite", |x| x.is_finite()),
        Just(0.0),
        Just(-0.0),
        Just(f64::MIN_POSITIVE),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn items_reload_bit_for_bit(params in prop::collection::vec((finite(), finite(), 0.0..0.999f64, any::<bool>()), 1..30)) {
        let items: Vec<ItemParameters<f64>> = params
            .iter()
            .enumerate()
            .map(|(k, &(a, b, c, conv))| ItemParameters::new(format!("item,{k}"), a, b, c).unwrap().with_converged(conv))
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("items.csv");
        write_items(&path, &items).unwrap();
        let back = read_items(&path).unwrap();
        prop_assert_eq!(back.len(), items.len());
        for (x, y) in items.iter().zip(&back) {
            prop_assert_eq!(&x.item_id, &y.item_id);
            prop_assert_eq!(x.a.to_bits(), y.a.to_bits());
            prop_assert_eq!(x.b.to_bits(), y.b.to_bits());
            prop_assert_eq!(x.c.to_bits(), y.c.to_bits());
            prop_assert_eq!(x.converged, y.converged);
        }
    }

    #[test]
    fn abilities_reload_exactly(thetas in prop::collection::vec((finite(), any::<bool>()), 1..20)) {
        let abilities: Vec<AbilityEstimate<f64>> = thetas
            .iter()
            .enumerate()
            .map(|(k, &(theta, at_bound))| AbilityEstimate { respondent_id: format!("m{k}"), theta, at_bound })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("abilities.csv");
        write_abilities(&path, &abilities).unwrap();
        let back = read_abilities(&path).unwrap();
        prop_assert_eq!(back.len(), abilities.len());
        for (x, y) in abilities.iter().zip(&back) {
            prop_assert_eq!(x.theta.to_bits(), y.theta.to_bits());
            prop_assert_eq!(x.at_bound, y.at_bound);
        }
    }

    #[test]
    fn response_matrix_reloads(cells in prop::collection::vec(prop::collection::vec(0u8..2, 5), 1..12)) {
        let ids: Vec<String> = (0..cells.len()).map(|j| format!("r{j}")).collect();
        let items: Vec<String> = (0..5).map(|k| format!("i{k}")).collect();
        let m = ResponseMatrix::new(ids, items, cells).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("responses.csv");
        write_response_matrix(&path, &m).unwrap();
        prop_assert_eq!(read_response_matrix(&path).unwrap(), m);
    }
}
