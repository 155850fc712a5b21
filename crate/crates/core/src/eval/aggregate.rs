//! GROUP BY aggregation over evaluated key and argument values.

use std::collections::{BTreeMap, BTreeSet};

use crate::parser::ast::Aggregate;
use crate::table::Row;
use crate::value::Value;

/// One entry per input row: its key tuple and one argument per aggregate
/// (`None` for argument-less aggregates). Output rows are sorted by key.
pub fn group(aggs: &[Aggregate], rows: Vec<(Row, Vec<Option<Value>>)>) -> Vec<Row> {
    let mut groups: BTreeMap<Row, Vec<Vec<Option<Value>>>> = BTreeMap::new();
    for (k, args) in rows {
        groups.entry(k).or_default().push(args);
    }
    groups
        .into_iter()
        .map(|(mut key, members)| {
            for (j, agg) in aggs.iter().enumerate() {
                let col: Vec<&Option<Value>> = members.iter().map(|m| &m[j]).collect();
                key.push(aggregate(*agg, &col));
            }
            key
        })
        .collect()
}

pub fn aggregate(agg: Aggregate, col: &[&Option<Value>]) -> Value {
    if col.iter().all(|v| v.is_none()) {
        // COUNT(*): no argument expression, every row counts.
        return Value::Int(col.len() as i64);
    }
    let vals: Vec<&Value> = col.iter().filter_map(|v| v.as_ref()).filter(|v| !v.is_null()).collect();
    match agg {
        Aggregate::Count => Value::Int(vals.len() as i64),
        Aggregate::CountDistinct => Value::Int(vals.iter().collect::<BTreeSet<_>>().len() as i64),
        _ if vals.is_empty() => Value::Null,
        Aggregate::Sum => {
            if vals.iter().all(|v| matches!(v, Value::Int(_))) {
                let mut s: i64 = 0;
                for v in &vals {
                    if let Value::Int(n) = v {
                        match s.checked_add(*n) {
                            Some(t) => s = t,
                            None => return Value::real(vals.iter().filter_map(|v| v.as_f64()).sum()),
                        }
                    }
                }
                Value::Int(s)
            } else {
                Value::real(vals.iter().filter_map(|v| v.as_f64()).sum())
            }
        }
        Aggregate::Avg => {
            let xs: Vec<f64> = vals.iter().filter_map(|v| v.as_f64()).collect();
            Value::real(xs.iter().sum::<f64>() / xs.len() as f64)
        }
        Aggregate::Max => (*vals.iter().max().unwrap()).clone(),
        Aggregate::Min => (*vals.iter().min().unwrap()).clone(),
        Aggregate::Concat => {
            let mut parts: Vec<String> = vals.iter().map(|v| v.render()).collect();
            parts.sort();
            Value::Str(parts.join(","))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn some(vs: &[Value]) -> Vec<Option<Value>> {
        vs.iter().cloned().map(Some).collect()
    }

    fn agg(a: Aggregate, vs: &[Value]) -> Value {
        let v = some(vs);
        aggregate(a, &v.iter().collect::<Vec<_>>())
    }

    #[test]
    fn basic_aggregates() {
        let ints = [Value::Int(1), Value::Int(2), Value::Int(3)];
        assert_eq!(agg(Aggregate::Avg, &ints), Value::Real(2.0));
        assert_eq!(agg(Aggregate::Sum, &ints), Value::Int(6));
        assert_eq!(agg(Aggregate::Max, &ints), Value::Int(3));
        assert_eq!(agg(Aggregate::Count, &[Value::Int(1), Value::Null]), Value::Int(1));
        assert_eq!(agg(Aggregate::Sum, &[Value::Null]), Value::Null);
        let s = [Value::Str("b".into()), Value::Str("a".into()), Value::Str("b".into())];
        assert_eq!(agg(Aggregate::Concat, &s), Value::Str("a,b,b".into()));
        assert_eq!(agg(Aggregate::CountDistinct, &s), Value::Int(2));
    }

    #[test]
    fn count_star_counts_all_rows() {
        let rows = (0..4).map(|_| (vec![Value::Int(0)], vec![None])).collect();
        assert_eq!(group(&[Aggregate::Count], rows), vec![vec![Value::Int(0), Value::Int(4)]]);
    }

    proptest! {
        #[test]
        fn counts_partition_the_table(keys in proptest::collection::vec(0i64..5, 0..60)) {
            let n = keys.len();
            let rows = keys.into_iter().map(|k| (vec![Value::Int(k)], vec![None])).collect();
            let out = group(&[Aggregate::Count], rows);
            let total: i64 = out.iter().map(|r| match r[1] { Value::Int(c) => c, _ => 0 }).sum();
            prop_assert_eq!(total as usize, n);
            let ks: Vec<&Value> = out.iter().map(|r| &r[0]).collect();
            prop_assert!(ks.windows(2).all(|w| w[0] < w[1]));
        }
    }
}
