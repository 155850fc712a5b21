//! Schemas, tables and bag-semantics operations.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::value::{BaseType, Value};

pub type Row = Vec<Value>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    #[serde(flatten)]
    pub ty: BaseType,
}

impl Column {
    pub fn new(name: impl Into<String>, ty: BaseType) -> Self {
        Column { name: name.into(), ty }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Schema {
    pub columns: Vec<Column>,
    pub id: Option<String>,
}

impl Schema {
    pub fn new(columns: Vec<Column>) -> Result<Self, TableError> {
        let mut seen = BTreeSet::new();
        for c in &columns {
            c.ty.validate().map_err(|m| TableError::Schema(format!("column {}: {m}", c.name)))?;
            if !seen.insert(c.name.as_str()) {
                return Err(TableError::Schema(format!("duplicate column name {}", c.name)));
            }
        }
        Ok(Schema { columns, id: None })
    }

    pub fn with_id(mut self, id: Option<String>) -> Self {
        self.id = id;
        self
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn names(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name.as_str()).collect()
    }
}

/// On-disk schema document: `{"columns": [{"name": .., "type": ..}, ..]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SchemaDoc {
    pub columns: Vec<Column>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TableError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("schema mismatch: {0}")]
    Mismatch(String),
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },
}

/// A bag of rows over a fixed schema. Row order carries no meaning.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub schema: Schema,
    pub rows: Vec<Row>,
}

impl Table {
    pub fn new(schema: Schema, rows: Vec<Row>) -> Result<Self, TableError> {
        let t = Table { schema, rows };
        t.check()?;
        Ok(t)
    }

    pub fn empty(schema: Schema) -> Self {
        Table { schema, rows: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn check(&self) -> Result<(), TableError> {
        let n = self.schema.columns.len();
        for (i, r) in self.rows.iter().enumerate() {
            if r.len() != n {
                return Err(TableError::Row { row: i, message: format!("arity {} but schema has {n} columns", r.len()) });
            }
            for (v, c) in r.iter().zip(&self.schema.columns) {
                if !c.ty.admits(v) {
                    return Err(TableError::Row { row: i, message: format!("value {v} is not a {} for column {}", c.ty, c.name) });
                }
            }
        }
        Ok(())
    }

    /// Rows sorted canonically; two tables are multiset-equal iff these agree.
    pub fn sorted_rows(&self) -> Vec<Row> {
        let mut rows = self.rows.clone();
        rows.sort();
        rows
    }

    pub fn multiset_eq(&self, other: &Table) -> bool {
        self.schema.columns == other.schema.columns && self.sorted_rows() == other.sorted_rows()
    }
}

pub fn bag_union(a: &Table, b: &Table) -> Result<Table, TableError> {
    if a.schema.columns != b.schema.columns {
        return Err(TableError::Mismatch(format!(
            "UNION of [{}] and [{}]",
            a.schema.names().join(", "),
            b.schema.names().join(", ")
        )));
    }
    let mut rows = a.rows.clone();
    rows.extend(b.rows.iter().cloned());
    Ok(Table { schema: Schema { columns: a.schema.columns.clone(), id: None }, rows })
}

pub fn bag_dedup(a: &Table) -> Table {
    Table { schema: a.schema.clone(), rows: dedup_rows(&a.rows) }
}

pub fn dedup_rows(rows: &[Row]) -> Vec<Row> {
    let mut seen = HashSet::new();
    rows.iter().filter(|r| seen.insert(*r)).cloned().collect()
}

pub fn bag_duplicate(a: &Table, n: usize) -> Table {
    Table { schema: a.schema.clone(), rows: duplicate_rows(&a.rows, n) }
}

pub fn duplicate_rows(rows: &[Row], n: usize) -> Vec<Row> {
    let mut out = Vec::with_capacity(rows.len() * n);
    for _ in 0..n {
        out.extend(rows.iter().cloned());
    }
    out
}

pub fn bag_join(a: &Table, b: &Table) -> Result<Table, TableError> {
    let left: BTreeSet<&str> = a.schema.names().into_iter().collect();
    if let Some(c) = b.schema.names().into_iter().find(|c| left.contains(c)) {
        return Err(TableError::Mismatch(format!("JOIN operands share column {c}")));
    }
    let mut columns = a.schema.columns.clone();
    columns.extend(b.schema.columns.iter().cloned());
    Ok(Table { schema: Schema { columns, id: None }, rows: join_rows(&a.rows, &b.rows) })
}

pub fn join_rows(a: &[Row], b: &[Row]) -> Vec<Row> {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for x in a {
        for y in b {
            let mut r = x.clone();
            r.extend(y.iter().cloned());
            out.push(r);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntryKind {
    Table,
    Model,
}

/// Global identifiers with their column lists (the Γ context).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Catalog {
    entries: BTreeMap<String, (EntryKind, Vec<Column>)>,
}

impl Catalog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_table(&mut self, name: impl Into<String>, columns: Vec<Column>) {
        self.entries.insert(name.into(), (EntryKind::Table, columns));
    }

    pub fn add_model(&mut self, name: impl Into<String>, columns: Vec<Column>) {
        self.entries.insert(name.into(), (EntryKind::Model, columns));
    }

    pub fn get(&self, name: &str) -> Option<(EntryKind, &[Column])> {
        self.entries.get(name).map(|(k, c)| (*k, c.as_slice()))
    }

    pub fn table(&self, name: &str) -> Option<&[Column]> {
        match self.entries.get(name) {
            Some((EntryKind::Table, c)) => Some(c),
            _ => None,
        }
    }

    pub fn model(&self, name: &str) -> Option<&[Column]> {
        match self.entries.get(name) {
            Some((EntryKind::Model, c)) => Some(c),
            _ => None,
        }
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, EntryKind, &[Column])> {
        self.entries.iter().map(|(n, (k, c))| (n.as_str(), *k, c.as_slice()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn schema(names: &[&str]) -> Schema {
        Schema::new(names.iter().map(|n| Column::new(*n, BaseType::Int)).collect()).unwrap()
    }

    fn table(names: &[&str], rows: Vec<Vec<i64>>) -> Table {
        Table::new(schema(names), rows.into_iter().map(|r| r.into_iter().map(Value::Int).collect()).collect()).unwrap()
    }

    #[test]
    fn union_keeps_duplicates_and_clears_id() {
        let mut a = table(&["x"], vec![vec![1]]);
        a.schema.id = Some("t".into());
        let u = bag_union(&a, &a).unwrap();
        assert_eq!(u.len(), 2);
        assert_eq!(u.schema.id, None);
        let e = table(&["x"], vec![]);
        let b = table(&["x"], vec![vec![1], vec![2]]);
        assert!(bag_union(&e, &b).unwrap().multiset_eq(&b));
    }

    #[test]
    fn union_commutes() {
        let a = table(&["x"], vec![vec![1]]);
        let b = table(&["x"], vec![vec![2]]);
        assert!(bag_union(&a, &b).unwrap().multiset_eq(&bag_union(&b, &a).unwrap()));
    }

    #[test]
    fn union_schema_mismatch() {
        assert!(bag_union(&table(&["x"], vec![]), &table(&["y"], vec![])).is_err());
    }

    #[test]
    fn dedup_and_duplicate() {
        let t = table(&["x"], vec![vec![1], vec![1], vec![2]]);
        assert_eq!(bag_dedup(&t).sorted_rows(), table(&["x"], vec![vec![1], vec![2]]).sorted_rows());
        assert!(bag_dedup(&table(&["x"], vec![])).is_empty());
        assert_eq!(bag_duplicate(&table(&["x"], vec![vec![1]]), 3).len(), 3);
        assert!(bag_duplicate(&t, 0).is_empty());
        let four = table(&["x"], vec![vec![1], vec![2], vec![3], vec![4]]);
        assert_eq!(bag_duplicate(&four, 1000).len(), 4000);
    }

    #[test]
    fn join_is_cartesian() {
        let a = table(&["a"], vec![vec![1]]);
        let b = table(&["b"], vec![vec![7], vec![8]]);
        let j = bag_join(&a, &b).unwrap();
        assert_eq!(j.rows, vec![vec![Value::Int(1), Value::Int(7)], vec![Value::Int(1), Value::Int(8)]]);
        assert!(bag_join(&a, &table(&["b"], vec![])).unwrap().is_empty());
        assert!(bag_join(&a, &a).is_err());
    }

    fn arb_table(name: &'static str) -> impl Strategy<Value = Table> {
        prop::collection::vec(0i64..4, 0..12)
            .prop_map(move |xs| table(&[name], xs.into_iter().map(|x| vec![x]).collect()))
    }

    proptest! {
        #[test]
        fn union_associative(a in arb_table("x"), b in arb_table("x"), c in arb_table("x")) {
            let l = bag_union(&bag_union(&a, &b).unwrap(), &c).unwrap();
            let r = bag_union(&a, &bag_union(&b, &c).unwrap()).unwrap();
            prop_assert!(l.multiset_eq(&r));
        }

        #[test]
        fn dedup_idempotent(a in arb_table("x")) {
            let once = bag_dedup(&a);
            prop_assert!(bag_dedup(&once).multiset_eq(&once));
        }

        #[test]
        fn cardinalities(a in arb_table("x"), b in arb_table("y"), n in 0usize..5) {
            prop_assert_eq!(bag_duplicate(&a, n).len(), n * a.len());
            prop_assert_eq!(bag_join(&a, &b).unwrap().len(), a.len() * b.len());
            prop_assert!(bag_join(&a, &b).unwrap().check().is_ok());
        }
    }
}
