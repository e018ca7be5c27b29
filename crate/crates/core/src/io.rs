//! Plain-text file formats.
//!
//! * prediction file: CSV, header `id,prob`, one row per sample
//! * label file: CSV, header `id,label`, label 0 or 1
//! * combiner weights: JSON document
//!   `{"model_names", "weights", "b", "t", "train_config", "clipped_any"}`
//! * toy corpus: one document per line, labelled by `id,label` rows whose id
//!   is the 0-based line number
//!
//! Every writer goes through a temporary file in the target directory that is
//! renamed into place, so a failed command never leaves a partial file.
//! Reals are written in shortest round-trip decimal form.

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{parse_report, report_render, EvalReport, ReportSummary, RunRow};
use crate::model::{LabelVector, PredictionMatrix, SampleId, Series, Threshold};
use crate::nn::{CombinerWeights, TrainConfig};

pub const PREDICTION_HEADER: [&str; 2] = ["id", "prob"];
pub const LABEL_HEADER: [&str; 2] = ["id", "label"];

fn parse_err(path: &Path, line: u64, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Writes `bytes` to `path` atomically (temp file + rename).
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(|e| Error::io(&dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.flush().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Rows of a two-column CSV with the given header, as `(line, id, value)`.
fn read_two_columns(path: &Path, header: [&str; 2]) -> Result<Vec<(u64, SampleId, String)>> {
    let text = read_text(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut records = reader.records();
    match records.next() {
        Some(Ok(h)) if h.iter().eq(header.iter().copied()) => {}
        Some(Ok(h)) => {
            return Err(parse_err(
                path,
                1,
                format!(
                    "header must be `{}`, found `{}`",
                    header.join(","),
                    h.iter().collect::<Vec<_>>().join(",")
                ),
            ));
        }
        Some(Err(e)) => return Err(parse_err(path, 1, e.to_string())),
        None => return Err(parse_err(path, 1, "empty file")),
    }
    let mut rows = Vec::new();
    let mut seen = HashSet::new();
    for rec in records {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(path, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 2 {
            return Err(parse_err(
                path,
                line,
                format!("expected 2 fields, found {}", rec.len()),
            ));
        }
        let id = SampleId::new(&rec[0]).map_err(|_| parse_err(path, line, "empty sample id"))?;
        if !seen.insert(id.clone()) {
            return Err(parse_err(path, line, format!("duplicate sample id `{id}`")));
        }
        rows.push((line, id, rec[1].to_string()));
    }
    Ok(rows)
}

pub fn read_prediction_file(path: &Path) -> Result<Series> {
    let rows = read_two_columns(path, PREDICTION_HEADER)?;
    let mut pairs = Vec::with_capacity(rows.len());
    for (line, id, raw) in rows {
        let p: f64 = raw
            .trim()
            .parse()
            .map_err(|_| parse_err(path, line, format!("`{raw}` is not a number")))?;
        if !(0.0..=1.0).contains(&p) {
            return Err(parse_err(
                path,
                line,
                format!("probability {raw} outside [0, 1]"),
            ));
        }
        pairs.push((id, p));
    }
    Series::new(pairs)
}

/// Joins one prediction file per model on sample id. Every file must list
/// exactly the same ids.
pub fn load_matrix(
    paths: &[impl AsRef<Path>],
    names: &[impl AsRef<str>],
) -> Result<PredictionMatrix> {
    if paths.is_empty() {
        return Err(Error::domain("no prediction files given"));
    }
    if paths.len() != names.len() {
        return Err(Error::domain(format!(
            "{} prediction files but {} model names",
            paths.len(),
            names.len()
        )));
    }
    let mut named: Vec<(String, Series)> = Vec::with_capacity(paths.len());
    for (path, name) in paths.iter().zip(names) {
        let series = read_prediction_file(path.as_ref())?;
        if let Some((first_name, first)) = named.first() {
            if first.ids()[..] != series.ids()[..] {
                let missing = first
                    .ids()
                    .iter()
                    .find(|id| series.ids().binary_search(id).is_err())
                    .map(|id| format!("`{id}` from {first_name} is missing"))
                    .or_else(|| {
                        series
                            .ids()
                            .iter()
                            .find(|id| first.ids().binary_search(id).is_err())
                            .map(|id| format!("`{id}` is not in {first_name}"))
                    })
                    .unwrap_or_default();
                return Err(Error::Alignment(format!(
                    "{}: sample ids differ; {missing}",
                    path.as_ref().display()
                )));
            }
        }
        named.push((name.as_ref().to_string(), series));
    }
    PredictionMatrix::from_series(named)
}

pub fn write_prediction_file(path: &Path, series: &Series) -> Result<()> {
    let mut s = String::from("id,prob\n");
    for (id, p) in series.iter() {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::domain(format!(
                "probability {p} outside [0, 1] for `{id}`"
            )));
        }
        s.push_str(&csv_field(id.as_str()));
        s.push(',');
        s.push_str(&p.to_string());
        s.push('\n');
    }
    atomic_write(path, s.as_bytes())
}

fn csv_field(v: &str) -> String {
    if v.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", v.replace('"', "\"\""))
    } else {
        v.to_string()
    }
}

pub fn read_label_file(path: &Path) -> Result<LabelVector> {
    let rows = read_two_columns(path, LABEL_HEADER)?;
    let mut pairs = Vec::with_capacity(rows.len());
    for (line, id, raw) in rows {
        let label = match raw.trim() {
            "0" => 0,
            "1" => 1,
            other => {
                return Err(parse_err(
                    path,
                    line,
                    format!("label `{other}` is not 0 or 1"),
                ))
            }
        };
        pairs.push((id, label));
    }
    if pairs.is_empty() {
        return Err(parse_err(path, 2, "no labels"));
    }
    LabelVector::new(pairs)
}

pub fn write_label_file(path: &Path, labels: &LabelVector) -> Result<()> {
    let mut s = String::from("id,label\n");
    for (id, l) in labels.ids().iter().zip(labels.labels()) {
        s.push_str(&csv_field(id.as_str()));
        s.push(',');
        s.push_str(&l.to_string());
        s.push('\n');
    }
    atomic_write(path, s.as_bytes())
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WeightsDocument {
    model_names: Vec<String>,
    weights: Vec<f64>,
    b: f64,
    t: f64,
    train_config: Option<TrainConfig>,
    clipped_any: bool,
}

/// Contents of a weights file.
#[derive(Clone, Debug, PartialEq)]
pub struct SavedWeights {
    pub weights: CombinerWeights,
    pub train_config: Option<TrainConfig>,
    pub clipped_any: bool,
}

pub fn weights_to_json(saved: &SavedWeights) -> String {
    let doc = WeightsDocument {
        model_names: saved.weights.model_names().to_vec(),
        weights: saved.weights.weights().to_vec(),
        b: saved.weights.shift(),
        t: saved.weights.threshold().value(),
        train_config: saved.train_config.clone(),
        clipped_any: saved.clipped_any,
    };
    let mut s = serde_json::to_string_pretty(&doc).expect("weights serialize");
    s.push('\n');
    s
}

/// Parses a weights document. Missing or unknown fields are schema errors;
/// a negative weight is a constraint violation.
pub fn weights_from_json(text: &str) -> Result<SavedWeights> {
    let doc: WeightsDocument =
        serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
    if let Some(cfg) = &doc.train_config {
        cfg.validate()?;
    }
    let t = Threshold::new(doc.t)?;
    Ok(SavedWeights {
        weights: CombinerWeights::new(doc.model_names, doc.weights, doc.b, t)?,
        train_config: doc.train_config,
        clipped_any: doc.clipped_any,
    })
}

pub fn save_weights(path: &Path, saved: &SavedWeights) -> Result<()> {
    atomic_write(path, weights_to_json(saved).as_bytes())
}

pub fn load_weights(path: &Path) -> Result<SavedWeights> {
    weights_from_json(&read_text(path)?)
}

/// One document per line; blank lines are documents too.
pub fn read_corpus(path: &Path) -> Result<Vec<String>> {
    Ok(read_text(path)?.lines().map(str::to_string).collect())
}

/// Labels for a corpus, looked up by 0-based line number.
pub fn corpus_labels(labels: &LabelVector, n_docs: usize) -> Result<Vec<u8>> {
    if labels.len() != n_docs {
        return Err(Error::Alignment(format!(
            "{n_docs} documents but {} labels",
            labels.len()
        )));
    }
    (0..n_docs)
        .map(|i| {
            let id = SampleId::new(i.to_string())?;
            labels
                .get(&id)
                .ok_or_else(|| Error::Alignment(format!("no label for line {i}")))
        })
        .collect()
}

pub fn save_report(path: &Path, report: &EvalReport, detail: bool) -> Result<()> {
    atomic_write(path, report_render(report, detail).as_bytes())
}

pub fn load_report(path: &Path) -> Result<(ReportSummary, Vec<RunRow>)> {
    parse_report(&read_text(path)?)
}

pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).expect("serializable value");
    s.push('\n');
    atomic_write(path, s.as_bytes())
}

pub fn load_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_text(path)?)
        .map_err(|e| Error::Schema(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn loads_and_joins_by_id() {
        let dir = tempfile::tempdir().unwrap();
        let a = write(dir.path(), "a.csv", "id,prob\nx,0.9\ny,0.1\n");
        let b = write(dir.path(), "b.csv", "id,prob\ny,0.7\nx,2e-1\n");
        let m = load_matrix(&[a, b], &["A", "B"]).unwrap();
        assert_eq!(m.n_models(), 2);
        assert_eq!(m.column("B").unwrap(), &[0.2, 0.7]);
    }

    #[test]
    fn out_of_range_probability_names_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let a = write(dir.path(), "a.csv", "id,prob\nx,0.9\ny,1.5\n");
        match load_matrix(&[a], &["A"]) {
            Err(Error::Parse { line, msg, .. }) => {
                assert_eq!(line, 3);
                assert!(msg.contains("1.5"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn malformed_files() {
        let dir = tempfile::tempdir().unwrap();
        let cases = [
            "id,probability\nx,0.5\n",
            "id,prob\nx,0.5\nx,0.6\n",
            "id,prob\nx,abc\n",
            "id,prob\nx,0.5,7\n",
            "id,prob\nx,NaN\n",
            "id,prob\n,0.5\n",
            "",
        ];
        for (i, body) in cases.iter().enumerate() {
            let p = write(dir.path(), &format!("{i}.csv"), body);
            let err = read_prediction_file(&p).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{body:?}: {err}");
        }
        let missing = dir.path().join("nope.csv");
        assert_eq!(read_prediction_file(&missing).unwrap_err().exit_code(), 4);
    }

    #[test]
    fn disjoint_ids_fail_to_join() {
        let dir = tempfile::tempdir().unwrap();
        let a = write(dir.path(), "a.csv", "id,prob\nx,0.9\n");
        let b = write(dir.path(), "b.csv", "id,prob\ny,0.7\n");
        match load_matrix(&[a, b], &["A", "B"]) {
            Err(Error::Alignment(msg)) => assert!(msg.contains("`x`"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn labels_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "l.csv", "id,label\n2,1\n10,0\n1,1\n");
        let l = read_label_file(&p).unwrap();
        assert_eq!(l.labels(), &[1, 1, 0]);
        let out = dir.path().join("out.csv");
        write_label_file(&out, &l).unwrap();
        assert_eq!(
            fs::read_to_string(&out).unwrap(),
            "id,label\n1,1\n2,1\n10,0\n"
        );
        let bad = write(dir.path(), "bad.csv", "id,label\nx,2\n");
        assert!(read_label_file(&bad).is_err());
    }

    fn saved() -> SavedWeights {
        SavedWeights {
            weights: CombinerWeights::new(
                vec!["M1".into(), "M2".into()],
                vec![0.837207982, 0.1 + 0.2],
                -0.25,
                Threshold::default(),
            )
            .unwrap(),
            train_config: Some(TrainConfig::default()),
            clipped_any: true,
        }
    }

    #[test]
    fn weights_round_trip_and_field_order() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("w.json");
        save_weights(&p, &saved()).unwrap();
        assert_eq!(load_weights(&p).unwrap(), saved());
        let text = fs::read_to_string(&p).unwrap();
        let order: Vec<usize> = [
            "\"model_names\"",
            "\"weights\"",
            "\"b\"",
            "\"t\"",
            "\"train_config\"",
            "\"clipped_any\"",
        ]
        .iter()
        .map(|k| text.find(k).unwrap())
        .collect();
        assert!(order.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn weights_schema_violations() {
        let neg = r#"{"model_names":["a"],"weights":[-0.5],"b":0.1,"t":0.5,"train_config":null,"clipped_any":false}"#;
        assert_eq!(weights_from_json(neg).unwrap_err().exit_code(), 3);
        let no_b = r#"{"model_names":["a"],"weights":[0.5],"t":0.5,"train_config":null,"clipped_any":false}"#;
        assert!(matches!(weights_from_json(no_b), Err(Error::Schema(_))));
        let bad_t = r#"{"model_names":["a"],"weights":[0.5],"b":0.0,"t":1.5,"train_config":null,"clipped_any":false}"#;
        assert!(weights_from_json(bad_t).is_err());
    }

    #[test]
    fn corpus_label_lookup() {
        let l = LabelVector::new(vec![
            (SampleId::new("1").unwrap(), 0),
            (SampleId::new("0").unwrap(), 1),
        ])
        .unwrap();
        assert_eq!(corpus_labels(&l, 2).unwrap(), vec![1, 0]);
        assert!(corpus_labels(&l, 3).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn prediction_file_round_trip(values in proptest::collection::vec(0.0f64..=1.0, 1..50)) {
            let dir = tempfile::tempdir().unwrap();
            let series = Series::from_parts(crate::synth::sequential_ids(values.len()), values).unwrap();
            let p = dir.path().join("p.csv");
            write_prediction_file(&p, &series).unwrap();
            prop_assert_eq!(read_prediction_file(&p).unwrap(), series);
        }

        #[test]
        fn weights_json_round_trip(w in proptest::collection::vec(0.0f64..10.0, 1..6), b in -5.0f64..5.0) {
            let names = (0..w.len()).map(|i| format!("M{i}")).collect();
            let saved = SavedWeights {
                weights: CombinerWeights::new(names, w, b, Threshold::default()).unwrap(),
                train_config: None,
                clipped_any: false,
            };
            prop_assert_eq!(weights_from_json(&weights_to_json(&saved)).unwrap(), saved);
        }
    }
}
