use lpgrade_core::feedback::TemplatePack;
use lpgrade_core::metrics::CiMethod;
use lpgrade_core::textclf::{train, HeadConfig, TextClassifierModel, Thresholds, TrainConfig, TrainingExample};
use lpgrade_core::{
    agreement_report, assign, render_feedback, validate_pack, CategoryId, CategoryVector, LabelTable, Modality,
    RubricSpec, ValidatedPack,
};
use proptest::prelude::*;
use std::sync::OnceLock;

fn rubric() -> RubricSpec {
    RubricSpec::electroscope()
}

fn pack() -> &'static ValidatedPack {
    static PACK: OnceLock<ValidatedPack> = OnceLock::new();
    PACK.get_or_init(|| validate_pack(&TemplatePack::electroscope(), &rubric()).unwrap())
}

proptest! {
    #[test]
    fn rubric_json_round_trip_keeps_levels(ones in proptest::collection::btree_set(1u16..=21, 0..21)) {
        let r = rubric();
        let back = RubricSpec::from_json_str(&r.to_canonical_json(), "round-trip").unwrap();
        let ones: Vec<u16> = ones.into_iter().collect();
        let v = CategoryVector::with_ones(&r, &ones);
        prop_assert_eq!(assign(&r, &v), assign(&back, &v));
    }

    #[test]
    fn every_vector_gets_feedback(ones in proptest::collection::btree_set(1u16..=21, 0..21)) {
        let r = rubric();
        let ones: Vec<u16> = ones.into_iter().collect();
        let v = CategoryVector::with_ones(&r, &ones);
        let a = assign(&r, &v);
        let fb = render_feedback(pack(), "r1", &a, &v).unwrap();
        for m in Modality::ALL {
            prop_assert!(!fb.text(m).is_empty());
        }
    }
}

#[test]
fn label_csv_to_levels() {
    let header: Vec<String> = (1..=21).map(|i| format!("c{i}")).collect();
    let mut csv = format!("response_id,{}\n", header.join(","));
    let strong: Vec<&str> = (1..=21).map(|i| if i <= 10 || i == 14 { "1" } else { "0" }).collect();
    let weak: Vec<&str> = (1..=21).map(|i| if i == 11 { "1" } else { "0" }).collect();
    csv.push_str(&format!("a,{}\nb,{}\n", strong.join(","), weak.join(",")));
    let table = LabelTable::read_csv(csv.as_bytes(), "inline").unwrap();
    let r = rubric();
    let levels: Vec<(u8, u8)> = table
        .vectors()
        .iter()
        .map(|(_, v)| {
            let a = assign(&r, v);
            (a.model_level.value, a.explanation_level.value)
        })
        .collect();
    assert_eq!(levels, vec![(2, 1), (0, 0)]);
}

#[test]
fn self_agreement_is_perfect() {
    let cats: Vec<CategoryId> = (14..=16).map(CategoryId).collect();
    let mut t = LabelTable::new(cats);
    for i in 0..20u8 {
        t.push(format!("r{i}"), vec![Some(i % 2), Some(u8::from(i % 3 == 0)), Some(1)])
            .unwrap();
    }
    let report = agreement_report(&t, &t, CiMethod::Wald, 0.95).unwrap();
    assert_eq!(report.rows.len(), 3);
    for row in &report.rows {
        assert_eq!(row.accuracy, 1.0);
        assert_eq!((row.ci_low, row.ci_high), (1.0, 1.0));
    }
}

#[test]
fn trained_model_survives_json() {
    let data: Vec<TrainingExample> = (0..20)
        .map(|i| {
            let mut labels = [0u8; 8];
            labels[i % 8] = 1;
            TrainingExample {
                response_id: format!("t{i}"),
                text: format!("charge moves word{} on the rod", i % 8),
                labels,
            }
        })
        .collect();
    let cfg = TrainConfig {
        max_epochs: 3,
        seed: 11,
        ..TrainConfig::default()
    };
    let model = train(&data, &HeadConfig::default(), &cfg).unwrap();
    let back = TextClassifierModel::from_json(&model.to_json()).unwrap();
    assert_eq!(model.to_json(), back.to_json());
    let texts = ["word3 on the rod", "nothing we have seen"];
    let t = Thresholds::default();
    assert_eq!(model.predict(&texts, &t), back.predict(&texts, &t));
    for text in texts {
        assert_eq!(model.predict_proba(text), back.predict_proba(text));
    }
}
