//! The output table: one row per document, one column per attribute, with
//! the origin of every cell.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::evaluation::TupleSet;

/// Where a cell's value came from.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Provenance {
    Direct,
    /// Extracted by the named candidate function.
    Function(String),
    /// Taken from the model's answer on a sample document.
    Oracle,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::Direct => f.write_str("direct"),
            Provenance::Oracle => f.write_str("oracle"),
            Provenance::Function(id) => f.write_str(id),
        }
    }
}

impl Serialize for Provenance {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Provenance {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Ok(match s.as_str() {
            "direct" => Provenance::Direct,
            "oracle" => Provenance::Oracle,
            "" => return Err(D::Error::custom("empty provenance")),
            _ => Provenance::Function(s),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cell {
    /// `None` when the document has no value for the attribute.
    pub value: Option<String>,
    pub provenance: Provenance,
}

/// One predicted cell, before materialization.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellPrediction {
    pub doc_id: String,
    pub attribute: String,
    pub value: Option<String>,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    pub topic: String,
    /// Column order.
    pub attributes: Vec<String>,
    /// Every document id, each mapped to its recorded cells.
    pub rows: BTreeMap<String, BTreeMap<String, Cell>>,
}

pub const DOC_ID_KEY: &str = "doc_id";
pub const PROVENANCE_KEY: &str = "_provenance";

/// Build a table with one row per document id. Cells without a prediction
/// stay absent; predictions for unknown attributes or documents are errors.
pub fn materialize<'a>(
    topic: &str,
    attributes: &[String],
    doc_ids: impl IntoIterator<Item = &'a str>,
    predictions: impl IntoIterator<Item = CellPrediction>,
) -> Result<Table> {
    let mut rows: BTreeMap<String, BTreeMap<String, Cell>> =
        doc_ids.into_iter().map(|id| (id.to_string(), BTreeMap::new())).collect();
    for p in predictions {
        if !attributes.contains(&p.attribute) {
            return Err(Error::UnknownAttribute {
                doc_id: p.doc_id,
                attribute: p.attribute,
            });
        }
        let row = rows
            .get_mut(&p.doc_id)
            .ok_or_else(|| Error::Invalid(format!("prediction for unknown document {:?}", p.doc_id)))?;
        let value = p.value.map(|v| v.trim().to_string()).filter(|v| !v.is_empty());
        row.insert(
            p.attribute,
            Cell {
                value,
                provenance: p.provenance,
            },
        );
    }
    Ok(Table {
        topic: topic.to_string(),
        attributes: attributes.to_vec(),
        rows,
    })
}

impl Table {
    pub fn value(&self, doc_id: &str, attribute: &str) -> Option<&str> {
        self.rows.get(doc_id)?.get(attribute)?.value.as_deref()
    }

    /// Nonempty cells as `(doc, attribute, value)` tuples.
    pub fn tuples(&self) -> TupleSet {
        let mut set = TupleSet::new();
        for (doc, row) in &self.rows {
            for (attr, cell) in row {
                if let Some(v) = &cell.value {
                    set.insert(doc, attr, v);
                }
            }
        }
        set
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec![DOC_ID_KEY];
        header.extend(self.attributes.iter().map(String::as_str));
        w.write_record(&header)?;
        for (doc, row) in &self.rows {
            let mut record = vec![doc.as_str()];
            record.extend(
                self.attributes
                    .iter()
                    .map(|a| row.get(a).and_then(|c| c.value.as_deref()).unwrap_or("")),
            );
            w.write_record(&record)?;
        }
        w.flush().map_err(|e| Error::Invalid(format!("csv flush: {e}")))?;
        Ok(())
    }

    fn row_object(&self, doc: &str, row: &BTreeMap<String, Cell>) -> Value {
        let mut obj = Map::new();
        obj.insert(DOC_ID_KEY.into(), Value::String(doc.to_string()));
        let mut prov = Map::new();
        for a in &self.attributes {
            if let Some(cell) = row.get(a) {
                if let Some(v) = &cell.value {
                    obj.insert(a.clone(), Value::String(v.clone()));
                }
                prov.insert(a.clone(), Value::String(cell.provenance.to_string()));
            }
        }
        obj.insert(PROVENANCE_KEY.into(), Value::Object(prov));
        Value::Object(obj)
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for (doc, row) in &self.rows {
            let line = serde_json::to_string(&self.row_object(doc, row))?;
            writeln!(out, "{line}").map_err(|e| Error::Invalid(format!("jsonl write: {e}")))?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv of utf-8 strings"))
    }

    pub fn to_jsonl_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf)?;
        Ok(String::from_utf8(buf).expect("json is utf-8"))
    }

    pub fn emit_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string()?).map_err(|e| Error::write(path, e))
    }

    pub fn emit_jsonl(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_jsonl_string()?).map_err(|e| Error::write(path, e))
    }
}

/// Parse rows written by [`Table::write_jsonl`]. Rows without a
/// `_provenance` object (hand-written gold files) get `direct` provenance.
pub fn parse_jsonl(topic: &str, attributes: &[String], text: &str) -> Result<Table> {
    let mut rows = BTreeMap::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let bad = |m: &str| Error::Invalid(format!("table line {}: {m}", i + 1));
        let obj: Map<String, Value> = serde_json::from_str(line)?;
        let doc = obj
            .get(DOC_ID_KEY)
            .and_then(Value::as_str)
            .ok_or_else(|| bad("missing doc_id"))?
            .to_string();
        let prov: BTreeMap<String, Provenance> = match obj.get(PROVENANCE_KEY) {
            Some(v) => serde_json::from_value(v.clone())?,
            None => BTreeMap::new(),
        };
        let mut row = BTreeMap::new();
        for (key, value) in &obj {
            if key == DOC_ID_KEY || key == PROVENANCE_KEY {
                continue;
            }
            if !attributes.contains(key) {
                return Err(Error::UnknownAttribute {
                    doc_id: doc,
                    attribute: key.clone(),
                });
            }
            let v = match value {
                Value::String(s) => s.clone(),
                Value::Null => continue,
                other => other.to_string(),
            };
            let provenance = prov.get(key).cloned().unwrap_or(Provenance::Direct);
            row.insert(key.clone(), Cell { value: Some(v), provenance });
        }
        for (key, provenance) in prov {
            if !attributes.contains(&key) {
                return Err(Error::UnknownAttribute { doc_id: doc, attribute: key });
            }
            row.entry(key).or_insert(Cell { value: None, provenance });
        }
        rows.insert(doc, row);
    }
    Ok(Table {
        topic: topic.to_string(),
        attributes: attributes.to_vec(),
        rows,
    })
}

/// Attribute names in first-seen order across the rows of a JSONL table.
pub fn jsonl_attributes(text: &str) -> Result<Vec<String>> {
    let mut names: Vec<String> = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let obj: Map<String, Value> = serde_json::from_str(line)?;
        let prov_keys = obj
            .get(PROVENANCE_KEY)
            .and_then(Value::as_object)
            .map(|m| m.keys().cloned().collect::<Vec<_>>())
            .unwrap_or_default();
        for k in obj.keys().cloned().chain(prov_keys) {
            if k != DOC_ID_KEY && k != PROVENANCE_KEY && !names.contains(&k) {
                names.push(k);
            }
        }
    }
    Ok(names)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pred(doc: &str, attr: &str, value: Option<&str>, prov: Provenance) -> CellPrediction {
        CellPrediction {
            doc_id: doc.into(),
            attribute: attr.into(),
            value: value.map(str::to_string),
            provenance: prov,
        }
    }

    fn sample() -> Table {
        let attrs = vec!["name".to_string(), "places".to_string()];
        materialize(
            "t",
            &attrs,
            ["d1", "d2"],
            vec![
                pred("d1", "name", Some("Ann"), Provenance::Function("name:A:0".into())),
                pred("d1", "places", Some("Paris, Rome"), Provenance::Direct),
                pred("d2", "name", None, Provenance::Function("name:B:1".into())),
            ],
        )
        .unwrap()
    }

    #[test]
    fn missing_cells_stay_empty() {
        let t = sample();
        assert_eq!(t.value("d1", "places"), Some("Paris, Rome"));
        assert_eq!(t.value("d2", "places"), None);
        assert_eq!(t.rows["d2"]["name"].provenance, Provenance::Function("name:B:1".into()));
        assert_eq!(t.tuples().len(), 2);
    }

    #[test]
    fn unknown_attribute_rejected() {
        let err = materialize("t", &["a".to_string()], ["d"], vec![pred("d", "b", Some("x"), Provenance::Direct)]);
        assert!(matches!(err, Err(Error::UnknownAttribute { .. })));
    }

    #[test]
    fn csv_quotes_and_blanks() {
        let csv = sample().to_csv_string().unwrap();
        assert_eq!(csv, "doc_id,name,places\nd1,Ann,\"Paris, Rome\"\nd2,,\n");
    }

    #[test]
    fn jsonl_omits_empty_keys() {
        let jsonl = sample().to_jsonl_string().unwrap();
        let lines: Vec<&str> = jsonl.lines().collect();
        assert_eq!(
            lines[1],
            r#"{"doc_id":"d2","_provenance":{"name":"name:B:1"}}"#
        );
        assert_eq!(jsonl, sample().to_jsonl_string().unwrap());
        let back = parse_jsonl("t", &sample().attributes, &jsonl).unwrap();
        assert_eq!(back, sample());
        assert_eq!(jsonl_attributes(&jsonl).unwrap(), vec!["name", "places"]);
    }

    #[test]
    fn gold_rows_without_provenance() {
        let t = parse_jsonl("t", &["a".to_string()], "{\"doc_id\": \"x\", \"a\": \"1\"}\n").unwrap();
        assert_eq!(t.rows["x"]["a"].provenance, Provenance::Direct);
        assert!(parse_jsonl("t", &["a".to_string()], "{\"doc_id\": \"x\", \"b\": \"1\"}").is_err());
    }

    fn cell() -> impl Strategy<Value = Option<(Option<String>, Provenance)>> {
        proptest::option::of((
            proptest::option::of("[a-z ,\"\n]{1,8}".prop_filter("nonblank", |s| !s.trim().is_empty())),
            prop_oneof![
                Just(Provenance::Direct),
                Just(Provenance::Oracle),
                "[a-z]{1,3}:[AB]:[0-9]".prop_map(Provenance::Function),
            ],
        ))
    }

    proptest! {
        #[test]
        fn jsonl_round_trip(cells in proptest::collection::vec((cell(), cell()), 1..6)) {
            let attrs = vec!["x".to_string(), "y y".to_string()];
            let ids: Vec<String> = (0..cells.len()).map(|i| format!("doc{i}")).collect();
            let mut preds = Vec::new();
            for (i, (cx, cy)) in cells.iter().enumerate() {
                for (attr, c) in [("x", cx), ("y y", cy)] {
                    if let Some((v, p)) = c {
                        preds.push(CellPrediction {
                            doc_id: ids[i].clone(),
                            attribute: attr.into(),
                            value: v.clone(),
                            provenance: p.clone(),
                        });
                    }
                }
            }
            let t = materialize("t", &attrs, ids.iter().map(String::as_str), preds).unwrap();
            let back = parse_jsonl("t", &attrs, &t.to_jsonl_string().unwrap()).unwrap();
            prop_assert_eq!(back, t);
        }
    }
}
