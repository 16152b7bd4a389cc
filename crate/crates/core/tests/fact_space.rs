use llfl::fact::{embed_fact, fact_distance, pairwise_distances, EmbeddingTable, Fact, FactVector, MAX_DISTANCE};
use proptest::prelude::*;

const DIM: usize = 4;

fn block() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, DIM).prop_filter("non-zero", |v| v.iter().any(|x| x.abs() > 1e-3))
}

/// A random fact vector with any mask, not only the three fact shapes.
fn fact_vector() -> impl Strategy<Value = FactVector> {
    (prop::option::of(block()), prop::option::of(block()), prop::option::of(block()))
        .prop_filter("at least one slot", |(s, p, o)| s.is_some() || p.is_some() || o.is_some())
        .prop_map(|(s, p, o)| FactVector::from_blocks(DIM, [s.as_deref(), p.as_deref(), o.as_deref()]).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn distance_axioms(a in fact_vector(), b in fact_vector(), extra in block()) {
        let d = fact_distance(&a, &b).unwrap();
        prop_assert_eq!(d, fact_distance(&b, &a).unwrap());
        prop_assert_eq!(fact_distance(&a, &a).unwrap(), 0.0);
        prop_assert!((0.0..=MAX_DISTANCE + 1e-12).contains(&d), "{}", d);

        // Filling a slot of `b` that `a` leaves undefined changes nothing.
        let mask = a.mask();
        if let Some(free) = (0..3).find(|&l| !mask[l]) {
            let mut blocks: [Option<Vec<f64>>; 3] = [0, 1, 2].map(|l| {
                b.mask()[l].then(|| b.as_slice()[l * DIM..(l + 1) * DIM].to_vec())
            });
            blocks[free] = Some(extra);
            let b2 = FactVector::from_blocks(DIM, [blocks[0].as_deref(), blocks[1].as_deref(), blocks[2].as_deref()]).unwrap();
            prop_assert!((fact_distance(&a, &b2).unwrap() - d).abs() < 1e-12);
        }
    }
}

#[test]
fn person_and_person_jumping_are_at_zero() {
    let mut t = EmbeddingTable::new(3).unwrap();
    t.insert("person", vec![0.3, -0.2, 0.9]).unwrap();
    t.insert("jumping", vec![1.0, 0.5, 0.0]).unwrap();
    let a = embed_fact(&t, &Fact::new(0, "person", None, None).unwrap()).unwrap();
    let b = embed_fact(&t, &Fact::new(1, "person", Some("jumping"), None).unwrap()).unwrap();
    assert_eq!(fact_distance(&a, &b).unwrap(), 0.0);
    let m = pairwise_distances(&[a, b]).unwrap();
    assert_eq!(m.values(), &[0.0]);
}
