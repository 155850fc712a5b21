//! Model documents: JSON with a `kind` of `spe`, `tmvg` or `bn`. The field
//! layout is described in `docs/formats.md`. Errors carry a path into the
//! document.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde_json::Value as Json;

use super::bn::{BnModel, BnNode, BnSpec, Cpd, GaussRow};
use super::spe::{Dist, SpeModel, SpeNode};
use super::tmvg::TmvgModel;
use super::RowModel;
use crate::table::Column;
use crate::value::{BaseType, Value};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{path}: {message}")]
pub struct SpecError {
    pub path: String,
    pub message: String,
}

fn err<T>(path: &str, message: impl Into<String>) -> Result<T, SpecError> {
    Err(SpecError { path: path.to_string(), message: message.into() })
}

pub fn load_model(text: &str) -> Result<Arc<dyn RowModel>, SpecError> {
    let doc: Json = serde_json::from_str(text).map_err(|e| SpecError { path: "$".into(), message: e.to_string() })?;
    model_from_json(&doc)
}

pub fn model_from_json(doc: &Json) -> Result<Arc<dyn RowModel>, SpecError> {
    match field(doc, "$", "kind")?.as_str() {
        Some("spe") => Ok(Arc::new(spe_from_json(doc)?)),
        Some("tmvg") => Ok(Arc::new(tmvg_from_json(doc)?)),
        Some("bn") => Ok(Arc::new(bn_from_json(doc)?)),
        _ => err("$.kind", "expected one of \"spe\", \"tmvg\", \"bn\""),
    }
}

fn field<'a>(v: &'a Json, path: &str, name: &str) -> Result<&'a Json, SpecError> {
    match v.get(name) {
        Some(x) => Ok(x),
        None => err(path, format!("missing field \"{name}\"")),
    }
}

fn num(v: &Json, path: &str) -> Result<f64, SpecError> {
    v.as_f64().map_or_else(|| err(path, "expected a number"), Ok)
}

fn arr<'a>(v: &'a Json, path: &str) -> Result<&'a Vec<Json>, SpecError> {
    v.as_array().map_or_else(|| err(path, "expected an array"), Ok)
}

fn nums(v: &Json, path: &str) -> Result<Vec<f64>, SpecError> {
    arr(v, path)?.iter().enumerate().map(|(i, x)| num(x, &format!("{path}[{i}]"))).collect()
}

fn string(v: &Json, path: &str) -> Result<String, SpecError> {
    v.as_str().map_or_else(|| err(path, "expected a string"), |s| Ok(s.to_string()))
}

fn cell(v: &Json, path: &str) -> Result<Value, SpecError> {
    match v {
        Json::String(s) => Ok(Value::Str(s.clone())),
        Json::Bool(b) => Ok(Value::Bool(*b)),
        Json::Number(n) => match n.as_i64() {
            Some(i) => Ok(Value::Int(i)),
            None => Ok(Value::Real(n.as_f64().unwrap_or(f64::NAN))),
        },
        _ => err(path, "expected a string, number or boolean"),
    }
}

fn cells(v: &Json, path: &str) -> Result<Vec<Value>, SpecError> {
    arr(v, path)?.iter().enumerate().map(|(i, x)| cell(x, &format!("{path}[{i}]"))).collect()
}

/// Numbers as a row-major matrix, given flat or as nested rows.
fn matrix(v: &Json, path: &str, rows: usize, cols: usize) -> Result<DMatrix<f64>, SpecError> {
    let items = arr(v, path)?;
    let flat: Vec<f64> = if items.iter().all(Json::is_array) {
        let mut out = Vec::new();
        for (i, r) in items.iter().enumerate() {
            let r = nums(r, &format!("{path}[{i}]"))?;
            if r.len() != cols {
                return err(&format!("{path}[{i}]"), format!("expected {cols} entries"));
            }
            out.extend(r);
        }
        out
    } else {
        nums(v, path)?
    };
    if flat.len() != rows * cols {
        return err(path, format!("expected {rows}x{cols} = {} numbers, got {}", rows * cols, flat.len()));
    }
    Ok(DMatrix::from_row_slice(rows, cols, &flat))
}

// -- spe --

struct SpeBuilder {
    names: Vec<String>,
    values: BTreeMap<usize, Vec<Value>>,
    continuous: BTreeMap<usize, bool>,
}

impl SpeBuilder {
    fn col(&mut self, name: &str) -> usize {
        match self.names.iter().position(|n| n == name) {
            Some(i) => i,
            None => {
                self.names.push(name.to_string());
                self.names.len() - 1
            }
        }
    }

    fn node(&mut self, v: &Json, path: &str) -> Result<SpeNode, SpecError> {
        let Some(obj) = v.as_object() else { return err(path, "expected a node object") };
        if obj.len() != 1 {
            return err(path, "a node has exactly one of \"sum\", \"product\", \"leaf\"");
        }
        let (tag, body) = obj.iter().next().expect("one entry");
        let path = format!("{path}.{tag}");
        match tag.as_str() {
            "sum" => {
                let mut weights = Vec::new();
                let mut children = Vec::new();
                for (i, b) in arr(body, &path)?.iter().enumerate() {
                    let p = format!("{path}[{i}]");
                    weights.push(num(field(b, &p, "weight")?, &format!("{p}.weight"))?);
                    children.push(self.node(field(b, &p, "node")?, &format!("{p}.node"))?);
                }
                Ok(SpeNode::Sum { weights, children })
            }
            "product" => {
                let children = arr(body, &path)?
                    .iter()
                    .enumerate()
                    .map(|(i, c)| self.node(c, &format!("{path}[{i}]")))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(SpeNode::Product(children))
            }
            "leaf" => {
                let name = string(field(body, &path, "column")?, &format!("{path}.column"))?;
                let col = self.col(&name);
                let dp = format!("{path}.dist");
                let d = field(body, &path, "dist")?;
                let Some((kind, params)) = d.as_object().and_then(|o| o.iter().next()) else {
                    return err(&dp, "expected {\"categorical\"|\"gaussian\"|\"uniform\": {...}}");
                };
                let pp = format!("{dp}.{kind}");
                let dist = match kind.as_str() {
                    "categorical" => {
                        let values = cells(field(params, &pp, "values")?, &format!("{pp}.values"))?;
                        let probs = nums(field(params, &pp, "probs")?, &format!("{pp}.probs"))?;
                        let seen = self.values.entry(col).or_default();
                        for v in &values {
                            if !seen.contains(v) {
                                seen.push(v.clone());
                            }
                        }
                        Dist::Categorical { values, probs }
                    }
                    "gaussian" => Dist::gaussian(
                        num(field(params, &pp, "mean")?, &format!("{pp}.mean"))?,
                        num(field(params, &pp, "std")?, &format!("{pp}.std"))?,
                    ),
                    "uniform" => Dist::Uniform {
                        lo: num(field(params, &pp, "lo")?, &format!("{pp}.lo"))?,
                        hi: num(field(params, &pp, "hi")?, &format!("{pp}.hi"))?,
                    },
                    other => return err(&dp, format!("unknown distribution {other}")),
                };
                let cont = !matches!(dist, Dist::Categorical { .. });
                if *self.continuous.entry(col).or_insert(cont) != cont {
                    return err(&path, format!("column {name} mixes discrete and continuous leaves"));
                }
                Ok(SpeNode::Leaf { col, dist })
            }
            other => err(&path, format!("unknown node type {other}")),
        }
    }
}

fn discrete_type(values: &[Value]) -> BaseType {
    if values.iter().all(|v| matches!(v, Value::Bool(_))) {
        BaseType::Bool
    } else if values.iter().all(|v| matches!(v, Value::Int(n) if *n >= 0)) {
        BaseType::Nat
    } else if values.iter().all(|v| matches!(v, Value::Int(_))) {
        BaseType::Int
    } else {
        BaseType::Categorical { labels: values.iter().map(|v| v.to_string()).collect() }
    }
}

pub fn spe_from_json(doc: &Json) -> Result<SpeModel, SpecError> {
    let mut b = SpeBuilder { names: Vec::new(), values: BTreeMap::new(), continuous: BTreeMap::new() };
    if let Some(cols) = doc.get("columns") {
        for (i, c) in arr(cols, "$.columns")?.iter().enumerate() {
            let name = string(c, &format!("$.columns[{i}]"))?;
            if b.names.contains(&name) {
                return err(&format!("$.columns[{i}]"), format!("duplicate column {name}"));
            }
            b.col(&name);
        }
    }
    let fixed = b.names.len();
    let root = b.node(field(doc, "$", "root")?, "$.root")?;
    if fixed > 0 && b.names.len() != fixed {
        return err("$.columns", format!("leaf column {} is not listed", b.names[fixed]));
    }
    let columns: Vec<Column> = b
        .names
        .iter()
        .enumerate()
        .map(|(i, n)| {
            let ty = match b.values.get(&i) {
                Some(vals) if !b.continuous[&i] => discrete_type(vals),
                _ => BaseType::Real,
            };
            Column::new(n.clone(), ty)
        })
        .collect();
    SpeModel::new(columns, root).map_err(|m| {
        let (path, message) = m.split_once(": ").map_or(("$.root".to_string(), m.clone()), |(p, r)| {
            (p.replacen("root", "$.root", 1), r.to_string())
        });
        SpecError { path, message }
    })
}

// -- tmvg --

pub fn tmvg_from_json(doc: &Json) -> Result<TmvgModel, SpecError> {
    let names: Vec<String> = arr(field(doc, "$", "columns")?, "$.columns")?
        .iter()
        .enumerate()
        .map(|(i, c)| string(c, &format!("$.columns[{i}]")))
        .collect::<Result<_, _>>()?;
    let d = names.len();
    let mean = nums(field(doc, "$", "mean")?, "$.mean")?;
    if mean.len() != d {
        return err("$.mean", format!("expected {d} entries"));
    }
    let cov = matrix(field(doc, "$", "cov")?, "$.cov", d, d)?;
    let (a, lower, upper) = match doc.get("constraints") {
        None | Some(Json::Null) => (DMatrix::zeros(0, d), DVector::zeros(0), DVector::zeros(0)),
        Some(c) => {
            let bound = |name: &str, inf: f64| -> Result<Vec<f64>, SpecError> {
                let p = format!("$.constraints.{name}");
                arr(field(c, "$.constraints", name)?, &p)?
                    .iter()
                    .enumerate()
                    .map(|(i, x)| if x.is_null() { Ok(inf) } else { num(x, &format!("{p}[{i}]")) })
                    .collect()
            };
            let lower = bound("lower", f64::NEG_INFINITY)?;
            let upper = bound("upper", f64::INFINITY)?;
            if lower.len() != upper.len() {
                return err("$.constraints", "lower and upper must have the same length");
            }
            let a = matrix(field(c, "$.constraints", "a")?, "$.constraints.a", lower.len(), d)?;
            (a, DVector::from_vec(lower), DVector::from_vec(upper))
        }
    };
    TmvgModel::new(names, DVector::from_vec(mean), cov, a, lower, upper)
        .map_err(|e| SpecError { path: "$".into(), message: e.to_string() })
}

// -- bn --

pub fn bn_from_json(doc: &Json) -> Result<BnModel, SpecError> {
    let items = arr(field(doc, "$", "nodes")?, "$.nodes")?;
    let mut names: Vec<String> = Vec::new();
    let mut nodes = Vec::new();
    for (i, n) in items.iter().enumerate() {
        let p = format!("$.nodes[{i}]");
        let name = string(field(n, &p, "name")?, &format!("{p}.name"))?;
        let latent = match n.get("latent") {
            None => false,
            Some(Json::Bool(b)) => *b,
            Some(_) => return err(&format!("{p}.latent"), "expected a boolean"),
        };
        let mut parents = Vec::new();
        if let Some(ps) = n.get("parents") {
            for (j, q) in arr(ps, &format!("{p}.parents"))?.iter().enumerate() {
                let qp = format!("{p}.parents[{j}]");
                let q = string(q, &qp)?;
                match names.iter().position(|m| *m == q) {
                    Some(k) => parents.push(k),
                    None => return err(&qp, format!("parent {q} is not an earlier node")),
                }
            }
        }
        let cp = format!("{p}.cpd");
        let cpd_doc = field(n, &p, "cpd")?;
        let cpd = if let Some(c) = cpd_doc.get("categorical") {
            let cp = format!("{cp}.categorical");
            let values = cells(field(c, &cp, "values")?, &format!("{cp}.values"))?;
            let rows = match c.get("rows") {
                Some(rows) => arr(rows, &format!("{cp}.rows"))?
                    .iter()
                    .enumerate()
                    .map(|(r, row)| {
                        let rp = format!("{cp}.rows[{r}]");
                        let given = row.get("given").map_or(Ok(vec![]), |g| cells(g, &format!("{rp}.given")))?;
                        Ok((given, nums(field(row, &rp, "probs")?, &format!("{rp}.probs"))?))
                    })
                    .collect::<Result<Vec<_>, SpecError>>()?,
                None => vec![(vec![], nums(field(c, &cp, "probs")?, &format!("{cp}.probs"))?)],
            };
            Cpd::Categorical { values, rows }
        } else if let Some(g) = cpd_doc.get("gaussian") {
            let gp = format!("{cp}.gaussian");
            let row = |v: &Json, rp: &str| -> Result<(Vec<Value>, GaussRow), SpecError> {
                let given = v.get("given").map_or(Ok(vec![]), |g| cells(g, &format!("{rp}.given")))?;
                let coeffs = v.get("coeffs").map_or(Ok(vec![]), |c| nums(c, &format!("{rp}.coeffs")))?;
                let mean = num(field(v, rp, "mean")?, &format!("{rp}.mean"))?;
                let std = num(field(v, rp, "std")?, &format!("{rp}.std"))?;
                Ok((given, GaussRow { mean, coeffs, std }))
            };
            let rows = match g.get("rows") {
                Some(rows) => arr(rows, &format!("{gp}.rows"))?
                    .iter()
                    .enumerate()
                    .map(|(r, v)| row(v, &format!("{gp}.rows[{r}]")))
                    .collect::<Result<Vec<_>, _>>()?,
                None => vec![row(g, &gp)?],
            };
            Cpd::Gaussian { rows }
        } else {
            return err(&cp, "expected {\"categorical\": ...} or {\"gaussian\": ...}");
        };
        names.push(name.clone());
        nodes.push(BnNode { name, latent, parents, cpd });
    }
    let spec = BnSpec::new(nodes).map_err(|m| {
        let (path, message) = m.split_once(": ").map_or(("$.nodes".to_string(), m.clone()), |(p, r)| {
            (format!("$.{}", p.split(' ').next().unwrap_or(p)), r.to_string())
        });
        SpecError { path, message }
    })?;
    Ok(BnModel::new(spec))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spe_document() {
        let doc = r#"{"kind": "spe", "root": {"product": [
            {"leaf": {"column": "c", "dist": {"categorical": {"values": ["a", "b"], "probs": [0.25, 0.75]}}}},
            {"leaf": {"column": "x", "dist": {"uniform": {"lo": 0, "hi": 2}}}}]}}"#;
        let m = load_model(doc).unwrap();
        assert_eq!(m.columns()[0].ty, BaseType::Categorical { labels: vec!["a".into(), "b".into()] });
        assert_eq!(m.columns()[1].ty, BaseType::Real);
    }

    #[test]
    fn errors_carry_paths() {
        let bad_weights = r#"{"kind": "spe", "root": {"sum": [
            {"weight": 0.5, "node": {"leaf": {"column": "x", "dist": {"gaussian": {"mean": 0, "std": 1}}}}},
            {"weight": 0.4, "node": {"leaf": {"column": "x", "dist": {"gaussian": {"mean": 0, "std": 1}}}}}]}}"#;
        let e = load_model(bad_weights).unwrap_err();
        assert_eq!(e.path, "$.root");
        assert!(e.message.contains("sum to 1"));
        let missing = r#"{"kind": "spe", "root": {"leaf": {"column": "x", "dist": {"gaussian": {"mean": 0}}}}}"#;
        assert_eq!(load_model(missing).unwrap_err().path, "$.root.leaf.dist.gaussian");
        let bad_std = r#"{"kind": "spe", "root": {"sum": [{"weight": 1.0, "node":
            {"leaf": {"column": "x", "dist": {"gaussian": {"mean": 0, "std": -1}}}}}]}}"#;
        assert_eq!(load_model(bad_std).unwrap_err().path, "$.root.sum[0].node");
        let parent = r#"{"kind": "bn", "nodes": [{"name": "a", "parents": ["b"], "cpd": {"gaussian": {"mean": 0, "std": 1}}}]}"#;
        assert_eq!(load_model(parent).unwrap_err().path, "$.nodes[0].parents[0]");
        let tmvg = r#"{"kind": "tmvg", "columns": ["x", "y"], "mean": [0, 0], "cov": [1, 2, 2, 1]}"#;
        assert!(load_model(tmvg).unwrap_err().message.contains("positive definite"));
        assert_eq!(load_model(r#"{"kind": "other"}"#).unwrap_err().path, "$.kind");
    }

    #[test]
    fn bn_document() {
        let doc = r#"{"kind": "bn", "nodes": [
            {"name": "z", "latent": true, "cpd": {"categorical": {"values": [0, 1], "probs": [0.5, 0.5]}}},
            {"name": "x", "parents": ["z"], "cpd": {"gaussian": {"rows": [
                {"given": [0], "mean": 0, "std": 1}, {"given": [1], "mean": 4, "std": 1}]}}}]}"#;
        let m = load_model(doc).unwrap();
        assert_eq!(m.columns().len(), 1);
        assert_eq!(m.columns()[0].name, "x");
    }
}
