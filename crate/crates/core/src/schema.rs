//! Catalog data model: features with discrete domains, items, datasets,
//! CSV ingestion and one-hot binarization.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Feature {
    pub name: String,
    pub values: Vec<String>,
}

/// Ordered features, each with an ordered value domain.
///
/// Domain order is fixed at construction and defines the column order of
/// [`binarize`].
#[derive(Debug, Clone)]
pub struct Schema {
    features: Vec<Feature>,
    offsets: Vec<usize>,
    feature_index: HashMap<String, usize>,
    value_index: Vec<HashMap<String, usize>>,
}

impl PartialEq for Schema {
    fn eq(&self, other: &Self) -> bool {
        self.features == other.features
    }
}

impl Eq for Schema {}

impl Schema {
    pub fn new(features: Vec<Feature>) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::InvalidSchema(
                "at least one feature is required".into(),
            ));
        }
        let mut feature_index = HashMap::with_capacity(features.len());
        let mut value_index = Vec::with_capacity(features.len());
        let mut offsets = Vec::with_capacity(features.len() + 1);
        let mut width = 0;
        for (column, feature) in features.iter().enumerate() {
            if feature_index.insert(feature.name.clone(), column).is_some() {
                return Err(Error::DuplicateFeature {
                    name: feature.name.clone(),
                    column,
                });
            }
            if feature.values.is_empty() {
                return Err(Error::EmptyColumn {
                    column,
                    feature: feature.name.clone(),
                });
            }
            let mut index = HashMap::with_capacity(feature.values.len());
            for (v, value) in feature.values.iter().enumerate() {
                if index.insert(value.clone(), v).is_some() {
                    return Err(Error::InvalidSchema(format!(
                        "duplicate value {value:?} in feature {:?}",
                        feature.name
                    )));
                }
            }
            value_index.push(index);
            offsets.push(width);
            width += feature.values.len();
        }
        offsets.push(width);
        Ok(Schema {
            features,
            offsets,
            feature_index,
            value_index,
        })
    }

    /// Convenience constructor from `(name, values)` pairs.
    pub fn from_pairs<N, V, I>(pairs: I) -> Result<Self>
    where
        N: Into<String>,
        V: Into<String>,
        I: IntoIterator<Item = (N, Vec<V>)>,
    {
        Self::new(
            pairs
                .into_iter()
                .map(|(name, values)| Feature {
                    name: name.into(),
                    values: values.into_iter().map(Into::into).collect(),
                })
                .collect(),
        )
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    pub fn num_features(&self) -> usize {
        self.features.len()
    }

    pub fn domain_size(&self, feature: usize) -> usize {
        self.features[feature].values.len()
    }

    /// Total number of one-hot columns.
    pub fn width(&self) -> usize {
        self.offsets[self.features.len()]
    }

    /// First one-hot column of `feature`.
    pub fn offset(&self, feature: usize) -> usize {
        self.offsets[feature]
    }

    pub fn feature_name(&self, feature: usize) -> &str {
        &self.features[feature].name
    }

    pub fn value_name(&self, feature: usize, value: usize) -> &str {
        &self.features[feature].values[value]
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_index.get(name).copied()
    }

    pub fn value_index(&self, feature: usize, name: &str) -> Option<usize> {
        self.value_index[feature].get(name).copied()
    }

    pub fn check_values(&self, values: &[usize]) -> Result<()> {
        if values.len() != self.features.len() {
            return Err(Error::SchemaMismatch(format!(
                "item has {} values, schema has {} features",
                values.len(),
                self.features.len()
            )));
        }
        for (f, &v) in values.iter().enumerate() {
            if v >= self.domain_size(f) {
                return Err(Error::SchemaMismatch(format!(
                    "value index {v} out of range for feature {:?}",
                    self.features[f].name
                )));
            }
        }
        Ok(())
    }

    /// Reads a sidecar schema: a JSON object mapping feature name to its
    /// ordered value list. Feature order comes from `column_order`.
    pub fn from_sidecar(text: &str, column_order: &[String]) -> Result<Self> {
        let map: BTreeMap<String, Vec<String>> = serde_json::from_str(text)?;
        let mut features = Vec::with_capacity(column_order.len());
        for name in column_order {
            let values = map
                .get(name)
                .ok_or_else(|| Error::UnknownFeature(name.clone()))?;
            features.push(Feature {
                name: name.clone(),
                values: values.clone(),
            });
        }
        if let Some(extra) = map.keys().find(|k| !column_order.contains(k)) {
            return Err(Error::InvalidSchema(format!(
                "sidecar feature {extra:?} is not a dataset column"
            )));
        }
        Self::new(features)
    }

    pub fn to_sidecar(&self) -> String {
        let map: BTreeMap<&str, &[String]> = self
            .features
            .iter()
            .map(|f| (f.name.as_str(), f.values.as_slice()))
            .collect();
        serde_json::to_string_pretty(&map).expect("schema serializes")
    }
}

/// One catalog entry: a value index per feature, aligned with the schema.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Item {
    pub id: usize,
    pub values: Vec<usize>,
}

impl Item {
    pub fn new(id: usize, values: Vec<usize>) -> Self {
        Item { id, values }
    }
}

/// A schema plus items with dense ids `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub schema: Schema,
    pub items: Vec<Item>,
}

impl Dataset {
    /// Builds a dataset from value rows, assigning ids in row order.
    pub fn new(schema: Schema, rows: Vec<Vec<usize>>) -> Result<Self> {
        let mut items = Vec::with_capacity(rows.len());
        for (id, values) in rows.into_iter().enumerate() {
            schema.check_values(&values)?;
            items.push(Item { id, values });
        }
        Ok(Dataset { schema, items })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn item(&self, id: usize) -> Option<&Item> {
        self.items.get(id)
    }

    /// Items with the given ids, in the given order.
    pub fn select(&self, ids: &[usize]) -> Result<Vec<Item>> {
        ids.iter()
            .map(|&id| {
                self.items.get(id).cloned().ok_or_else(|| {
                    Error::InvalidParameter(format!(
                        "item id {id} not in dataset of {}",
                        self.len()
                    ))
                })
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let csv_err = |e: csv::Error| Error::Csv {
            row: 0,
            message: e.to_string(),
        };
        w.write_record(self.schema.features.iter().map(|f| f.name.as_str()))
            .map_err(csv_err)?;
        for item in &self.items {
            w.write_record(
                item.values
                    .iter()
                    .enumerate()
                    .map(|(f, &v)| self.schema.value_name(f, v)),
            )
            .map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::Csv {
            row: 0,
            message: e.to_string(),
        })
    }
}

/// Header plus trimmed cells of a categorical CSV file.
pub(crate) struct RawTable {
    pub header: Vec<String>,
    /// `(line number, cells)`
    pub rows: Vec<(usize, Vec<String>)>,
}

pub(crate) fn read_table(path: &Path) -> Result<RawTable> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_table(&text)
}

pub(crate) fn parse_table(text: &str) -> Result<RawTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Csv {
            row: 1,
            message: e.to_string(),
        })?
        .iter()
        .map(str::to_owned)
        .collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(Error::Csv {
            row: 1,
            message: "missing header row".into(),
        });
    }
    let mut seen = BTreeSet::new();
    for (column, name) in header.iter().enumerate() {
        if !seen.insert(name.as_str()) {
            return Err(Error::DuplicateFeature {
                name: name.clone(),
                column,
            });
        }
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Csv {
            row: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != header.len() {
            return Err(Error::RaggedRow {
                row: line,
                found: record.len(),
                expected: header.len(),
            });
        }
        let cells: Vec<String> = record.iter().map(str::to_owned).collect();
        if let Some(column) = cells.iter().position(String::is_empty) {
            return Err(Error::EmptyCell {
                row: line,
                column,
                feature: header[column].clone(),
            });
        }
        rows.push((line, cells));
    }
    Ok(RawTable { header, rows })
}

/// Loads a categorical CSV, inferring each domain as the sorted distinct
/// values of its column.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let table = read_table(path.as_ref())?;
    dataset_from_table(table, None)
}

/// Loads a categorical CSV whose domains are pinned by a sidecar schema file.
pub fn load_dataset_with_schema(
    path: impl AsRef<Path>,
    schema_path: impl AsRef<Path>,
) -> Result<Dataset> {
    let table = read_table(path.as_ref())?;
    let schema_path = schema_path.as_ref();
    let text = std::fs::read_to_string(schema_path).map_err(|e| Error::io(schema_path, e))?;
    let schema = Schema::from_sidecar(&text, &table.header)?;
    dataset_from_table(table, Some(schema))
}

/// Parses CSV text into a dataset; see [`load_dataset`].
pub fn parse_dataset(text: &str) -> Result<Dataset> {
    dataset_from_table(parse_table(text)?, None)
}

/// Resolves the rows of a CSV (same columns as `data`, any order) to the
/// first dataset item with equal values.
pub fn match_rows_by_value(text: &str, data: &Dataset) -> Result<Vec<Item>> {
    let table = parse_table(text)?;
    let index: HashMap<&[usize], usize> = data
        .items
        .iter()
        .rev()
        .map(|i| (i.values.as_slice(), i.id))
        .collect();
    encode_rows(&data.schema, &table)?
        .into_iter()
        .map(|(line, values)| {
            let id = *index.get(values.as_slice()).ok_or_else(|| {
                Error::SchemaMismatch(format!("row {line} matches no dataset item"))
            })?;
            Ok(Item::new(id, values))
        })
        .collect()
}

/// Parses one item id per line; blank lines and `#` comments are skipped.
pub fn parse_id_list(text: &str) -> Result<Vec<usize>> {
    let mut ids = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        ids.push(line.parse().map_err(|_| Error::Csv {
            row: n + 1,
            message: format!("expected an item id, found {line:?}"),
        })?);
    }
    Ok(ids)
}

fn dataset_from_table(table: RawTable, schema: Option<Schema>) -> Result<Dataset> {
    let schema = match schema {
        Some(s) => s,
        None => infer_schema(&table)?,
    };
    let rows = encode_rows(&schema, &table)?;
    Dataset::new(schema, rows.into_iter().map(|(_, v)| v).collect())
}

fn infer_schema(table: &RawTable) -> Result<Schema> {
    let mut domains: Vec<BTreeSet<&str>> = vec![BTreeSet::new(); table.header.len()];
    for (_, cells) in &table.rows {
        for (d, cell) in domains.iter_mut().zip(cells) {
            d.insert(cell.as_str());
        }
    }
    let features = table
        .header
        .iter()
        .zip(domains)
        .map(|(name, d)| Feature {
            name: name.clone(),
            values: d.into_iter().map(str::to_owned).collect(),
        })
        .collect();
    Schema::new(features)
}

/// Maps table rows onto `schema` by column name. Returns `(line, values)`.
pub(crate) fn encode_rows(schema: &Schema, table: &RawTable) -> Result<Vec<(usize, Vec<usize>)>> {
    let mut column_of = Vec::with_capacity(schema.num_features());
    for f in 0..schema.num_features() {
        let name = schema.feature_name(f);
        let column = table
            .header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::SchemaMismatch(format!("missing column {name:?}")))?;
        column_of.push(column);
    }
    if let Some(extra) = table
        .header
        .iter()
        .find(|h| schema.feature_index(h).is_none())
    {
        return Err(Error::UnknownFeature(extra.clone()));
    }
    table
        .rows
        .iter()
        .map(|(line, cells)| {
            let values = column_of
                .iter()
                .enumerate()
                .map(|(f, &c)| {
                    schema
                        .value_index(f, &cells[c])
                        .ok_or_else(|| Error::UnknownValue {
                            feature: schema.feature_name(f).to_owned(),
                            value: format!("{} (row {line})", cells[c]),
                        })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((*line, values))
        })
        .collect()
}

/// One-hot encoding of an item: one block per feature, one column per value.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryVector {
    pub bits: Vec<u8>,
}

impl BinaryVector {
    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b == 1).count()
    }
}

pub fn binarize(item: &Item, schema: &Schema) -> BinaryVector {
    debug_assert!(schema.check_values(&item.values).is_ok());
    let mut bits = vec![0u8; schema.width()];
    for (f, &v) in item.values.iter().enumerate() {
        bits[schema.offset(f) + v] = 1;
    }
    BinaryVector { bits }
}
