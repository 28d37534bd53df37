mod common;

use asmsieve::schema::{canonicalize, diff, validate, FieldChange};
use common::{arb_doc, arb_feature_set, ALGOS, OPS, RETS};
use proptest::prelude::*;
use serde_json::{json, Value};

fn reparse(text: &str) -> Value {
    serde_json::from_str(text).unwrap()
}

proptest! {
    #[test]
    fn canonical_round_trip(fs in arb_feature_set()) {
        let text = canonicalize(&fs);
        let back = validate(&reparse(&text)).unwrap();
        prop_assert_eq!(&back, &fs);
        prop_assert_eq!(canonicalize(&back), text);
    }

    #[test]
    fn key_order_does_not_matter(doc in arb_doc()) {
        let fs = validate(&doc).unwrap();
        let mut entries: Vec<(String, Value)> = doc.as_object().unwrap().clone().into_iter().collect();
        entries.reverse();
        let reordered: serde_json::Map<String, Value> = entries.into_iter().collect();
        prop_assert_eq!(validate(&Value::Object(reordered)).unwrap(), fs);
    }

    #[test]
    fn diff_empty_iff_canonical_equal(a in arb_feature_set(), b in arb_feature_set(), same in any::<bool>()) {
        let b = if same { a.clone() } else { b };
        prop_assert_eq!(diff(&a, &b).is_empty(), canonicalize(&a) == canonicalize(&b));
    }

    #[test]
    fn diff_mirrors_when_swapped(a in arb_feature_set(), b in arb_feature_set()) {
        let ab = diff(&a, &b);
        let ba = diff(&b, &a);
        prop_assert_eq!(ab.fields.len(), ba.fields.len());
        for (x, y) in ab.fields.iter().zip(&ba.fields) {
            prop_assert_eq!(&x.field, &y.field);
            match (&x.change, &y.change) {
                (FieldChange::Equal, FieldChange::Equal) => {}
                (FieldChange::Changed { left: l1, right: r1 }, FieldChange::Changed { left: l2, right: r2 }) => {
                    prop_assert_eq!(l1, r2);
                    prop_assert_eq!(r1, l2);
                }
                (FieldChange::SetChanged { removed: r1, added: a1 }, FieldChange::SetChanged { removed: r2, added: a2 }) => {
                    prop_assert_eq!(r1, a2);
                    prop_assert_eq!(a1, r2);
                }
                other => prop_assert!(false, "asymmetric change {:?}", other),
            }
        }
    }

    #[test]
    fn enum_values_are_canonical(fs in arb_feature_set()) {
        let doc = reparse(&canonicalize(&fs));
        prop_assert!(RETS.contains(&doc["ret_type"].as_str().unwrap()));
        prop_assert!(ALGOS.contains(&doc["inferred_algo"].as_str().unwrap()));
        for op in doc["dominant_operation_categories"].as_array().unwrap() {
            prop_assert!(OPS.contains(&op.as_str().unwrap()));
        }
        for t in doc["in_param_types"].as_array().unwrap() {
            prop_assert!(["Integer", "Pointer"].contains(&t.as_str().unwrap()));
        }
    }

    #[test]
    fn enum_matching_ignores_case(doc in arb_doc(), upper in any::<bool>()) {
        let mut loose = doc.clone();
        let recase = |s: &str| if upper { s.to_uppercase() } else { s.to_lowercase() };
        loose["ret_type"] = json!(recase(doc["ret_type"].as_str().unwrap()));
        loose["inferred_algo"] = json!(recase(doc["inferred_algo"].as_str().unwrap()));
        prop_assert_eq!(validate(&loose).unwrap(), validate(&doc).unwrap());
    }

    #[test]
    fn int_consts_are_normalized(fs in arb_feature_set()) {
        for c in fs.int_consts.as_ref().unwrap() {
            let digits = c.strip_prefix("0x").unwrap();
            prop_assert!(!digits.is_empty() && !digits.starts_with('0'));
            prop_assert!(digits.chars().all(|ch| ch.is_ascii_hexdigit() && !ch.is_ascii_uppercase()));
        }
        prop_assert!(fs.int_consts.as_ref().unwrap().len() <= 15);
    }
}
