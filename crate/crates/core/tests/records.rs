use std::io::Write;

use proptest::prelude::*;

use sgen_core::{Dataset, Error, SchemaMode, ScoredRecord};

#[test]
fn file_round_trip_preserves_every_field() {
    let src = concat!(
        r#"{"id":"q1","f_m1":0.125,"f_m2":0.5,"f_e":0.875,"e":1,"em":0,"v":1,"question":"who?"}"#,
        "\n",
        r#"{"id":"q2","f_m1":0.1,"f_e":0.3,"v":0}"#,
        "\n\n",
    );
    let mut f = tempfile::NamedTempFile::new().unwrap();
    f.write_all(src.as_bytes()).unwrap();
    let ds: Dataset<f64> = Dataset::load_jsonl(f.path(), SchemaMode::Calibration).unwrap();
    assert_eq!(ds.len(), 2);
    assert_eq!(ds.records[0].extra["question"], "who?");
    let (z_e, z_u) = ds.partition();
    assert_eq!((z_e.len(), z_u.len()), (1, 1));

    let mut out = tempfile::NamedTempFile::new().unwrap();
    ds.write_jsonl(&mut out).unwrap();
    out.flush().unwrap();
    let back: Dataset<f64> = Dataset::load_jsonl(out.path(), SchemaMode::Calibration).unwrap();
    assert_eq!(back.records, ds.records);
}

#[test]
fn errors_name_the_offending_line() {
    let src = "{\"id\":\"a\",\"f_m1\":0.5,\"f_e\":0.5,\"e\":1,\"v\":1}\n{\"id\":\"b\",\"f_m1\":1.5,\"f_e\":0.5,\"v\":0}\n";
    match Dataset::<f64>::from_reader(src.as_bytes(), SchemaMode::Calibration, "mem") {
        Err(Error::Validation { line, message }) => {
            assert_eq!(line, 2);
            assert!(message.contains("f_m1"), "{message}");
        }
        other => panic!("unexpected {other:?}"),
    }
    let bad_json = "{\"id\":\"a\",\"f_m1\":0.5,\"f_e\":0.5,\"v\":0}\n{oops\n";
    assert!(matches!(
        Dataset::<f64>::from_reader(bad_json.as_bytes(), SchemaMode::Calibration, "mem"),
        Err(Error::Parse { line: 2, .. })
    ));
}

proptest! {
    #[test]
    fn serialized_records_reload_bit_exactly(
        rows in prop::collection::vec(
            (0.0f64..=1.0, prop::option::of(0.0f64..=1.0), 0.0f64..=1.0, any::<bool>(), prop::option::of(any::<bool>()), any::<bool>()),
            0..40,
        )
    ) {
        let records: Vec<ScoredRecord<f64>> = rows
            .iter()
            .enumerate()
            .map(|(i, &(m1, m2, fe, e, em, v))| {
                let mut r = ScoredRecord::new(format!("id{i}"), m1, fe).with_label(e);
                r.f_m2 = m2;
                r.em = em;
                r.v = v;
                r
            })
            .collect();
        let ds = Dataset::new(records, "prop").unwrap();
        let text = ds.to_jsonl_string();
        let back = Dataset::<f64>::from_reader(text.as_bytes(), SchemaMode::Calibration, "prop").unwrap();
        prop_assert_eq!(&back.records, &ds.records);
        let (z_e, z_u) = back.partition();
        prop_assert_eq!(z_e.len() + z_u.len(), back.len());
    }
}
