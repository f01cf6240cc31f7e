use std::collections::BTreeSet;

use kgprep::model::{SourceRelation, SourceSignature};
use kgprep::rml::{lower_to_rules, parse_rml, raise_to_rml, rules_isomorphic, serialize_turtle, ObjectMapDef};
use kgprep::store::{load_csv, write_csv, CsvDialect};
use kgprep::testing::{random_rml_doc, rng};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn serialize_then_parse_is_identity(seed in any::<u64>()) {
        let (doc, _) = random_rml_doc(&mut rng(seed));
        let text = serialize_turtle(&doc);
        prop_assert_eq!(parse_rml(&text).unwrap(), doc);
    }

    #[test]
    fn lower_raise_lower_is_isomorphic(seed in any::<u64>()) {
        let (doc, headers) = random_rml_doc(&mut rng(seed));
        let text = serialize_turtle(&doc);
        let lowered = lower_to_rules(&parse_rml(&text).unwrap(), &headers).unwrap();
        let raised = raise_to_rml(&lowered.rules, &lowered.source_paths).unwrap();
        let again = lower_to_rules(&parse_rml(&serialize_turtle(&raised)).unwrap(), &headers).unwrap();
        prop_assert!(rules_isomorphic(&lowered.rules, &again.rules), "{:#?}\n{:#?}", lowered.rules, again.rules);
    }

    #[test]
    fn lowering_preserves_attribute_usage(seed in any::<u64>()) {
        let (doc, headers) = random_rml_doc(&mut rng(seed));
        let lowered = lower_to_rules(&doc, &headers).unwrap();
        for m in &doc.maps {
            let local = m.id.rsplit('/').next().unwrap();
            let source = lowered.source_name(&m.source_path).unwrap();
            let mut bound = BTreeSet::new();
            for r in lowered.rules.iter().filter(|r| r.id == local || r.id.starts_with(&format!("{local}__ref"))) {
                bound.extend(r.body[0].attributes().map(String::from));
                prop_assert_eq!(&r.body[0].source, source);
            }
            let refs: Vec<_> = m.predicate_object_maps.iter().filter_map(|p| match &p.object {
                ObjectMapDef::RefObjectMap { join_conditions, .. } => Some(join_conditions.len()),
                _ => None,
            }).collect();
            let emits_alone = m.class.is_some() || m.predicate_object_maps.len() > refs.len();
            if emits_alone || !refs.is_empty() {
                prop_assert_eq!(&bound, &m.mentioned_attributes());
            }
            for (k, n) in refs.iter().enumerate() {
                let r = lowered.rules.iter().find(|r| r.id == format!("{local}__ref{}", k + 1)).unwrap();
                prop_assert_eq!(r.body.len(), 2);
                prop_assert_eq!(r.join_variables().len(), *n);
            }
        }
    }

    #[test]
    fn csv_round_trip_is_field_exact(rows in prop::collection::vec(prop::collection::vec("[a-z,\"\n\r ;|]{0,6}", 3), 0..20)) {
        let dir = tempfile::tempdir().unwrap();
        let rel = SourceRelation::new(SourceSignature::new("t", ["a", "b,c", "d\"e"]).unwrap(), rows).unwrap();
        for dialect in [CsvDialect::default(), CsvDialect::with_delimiter(b';')] {
            let path = dir.path().join("t.csv");
            write_csv(&rel, &path, dialect).unwrap();
            let back = load_csv(&path, dialect).unwrap();
            prop_assert_eq!(back.attributes(), rel.attributes());
            prop_assert_eq!(back.rows(), rel.rows());
        }
    }
}

#[test]
fn single_column_null_rows_survive() {
    let dir = tempfile::tempdir().unwrap();
    let rel = SourceRelation::new(
        SourceSignature::new("t", ["a"]).unwrap(),
        vec![vec!["".into()], vec!["x".into()], vec!["".into()]],
    )
    .unwrap();
    let path = dir.path().join("t.csv");
    write_csv(&rel, &path, CsvDialect::default()).unwrap();
    assert_eq!(load_csv(&path, CsvDialect::default()).unwrap().rows(), rel.rows());
}
