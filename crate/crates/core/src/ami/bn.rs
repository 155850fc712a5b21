//! Bayesian networks with categorical and conditional linear Gaussian
//! nodes, answered by likelihood-weighted ancestral sampling. Latent nodes
//! are sampled but are not columns.

use std::collections::HashMap;
use std::sync::Arc;

use rand::Rng;

use super::math::{logmeanexp, normal_logpdf};
use super::spe::Dist;
use super::{null_row, AmiCtx, AmiError, Assign, BackendKind, Event, RowModel};
use crate::table::{Column, Row};
use crate::value::{BaseType, Value};

#[derive(Debug, Clone, PartialEq)]
pub struct GaussRow {
    pub mean: f64,
    /// One coefficient per continuous parent, in parent order.
    pub coeffs: Vec<f64>,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cpd {
    /// Rows keyed by the values of the discrete parents.
    Categorical { values: Vec<Value>, rows: Vec<(Vec<Value>, Vec<f64>)> },
    Gaussian { rows: Vec<(Vec<Value>, GaussRow)> },
}

#[derive(Debug, Clone)]
pub struct BnNode {
    pub name: String,
    pub latent: bool,
    pub parents: Vec<usize>,
    pub cpd: Cpd,
}

#[derive(Debug)]
pub struct BnSpec {
    nodes: Vec<BnNode>,
    columns: Vec<Column>,
    /// Node index of each column.
    col_node: Vec<usize>,
    discrete_parents: Vec<Vec<usize>>,
    continuous_parents: Vec<Vec<usize>>,
    row_index: Vec<HashMap<Vec<Value>, usize>>,
}

impl BnSpec {
    /// Nodes must be topologically ordered with parents given as indices of
    /// earlier nodes.
    pub fn new(nodes: Vec<BnNode>) -> Result<BnSpec, String> {
        let mut discrete_parents = Vec::new();
        let mut continuous_parents = Vec::new();
        let mut row_index = Vec::new();
        for (i, n) in nodes.iter().enumerate() {
            let path = format!("nodes[{i}] ({})", n.name);
            if nodes[..i].iter().any(|m| m.name == n.name) {
                return Err(format!("{path}: duplicate node name"));
            }
            let (mut dp, mut cp) = (Vec::new(), Vec::new());
            for &p in &n.parents {
                if p >= i {
                    return Err(format!("{path}: parents must precede their children"));
                }
                match nodes[p].cpd {
                    Cpd::Categorical { .. } => dp.push(p),
                    Cpd::Gaussian { .. } => cp.push(p),
                }
            }
            let mut index = HashMap::new();
            let keys: Vec<&Vec<Value>> = match &n.cpd {
                Cpd::Categorical { values, rows } => {
                    if !cp.is_empty() {
                        return Err(format!("{path}: a categorical node cannot have gaussian parents"));
                    }
                    for (g, probs) in rows {
                        if probs.len() != values.len() {
                            return Err(format!("{path}: each row needs one probability per value"));
                        }
                        if probs.iter().any(|p| !(*p >= 0.0)) || (probs.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                            return Err(format!("{path}: row {g:?} must be nonnegative and sum to 1"));
                        }
                    }
                    rows.iter().map(|(g, _)| g).collect()
                }
                Cpd::Gaussian { rows } => {
                    for (g, r) in rows {
                        if r.coeffs.len() != cp.len() {
                            return Err(format!("{path}: row {g:?} needs one coefficient per gaussian parent"));
                        }
                        if !(r.std > 0.0) {
                            return Err(format!("{path}: row {g:?} needs a positive std"));
                        }
                    }
                    rows.iter().map(|(g, _)| g).collect()
                }
            };
            for (r, key) in keys.into_iter().enumerate() {
                if key.len() != dp.len() {
                    return Err(format!("{path}: row {r} must list one value per categorical parent"));
                }
                if index.insert(key.clone(), r).is_some() {
                    return Err(format!("{path}: duplicate row for parent values {key:?}"));
                }
            }
            let configs: usize = dp
                .iter()
                .map(|p| match &nodes[*p].cpd {
                    Cpd::Categorical { values, .. } => values.len(),
                    Cpd::Gaussian { .. } => 1,
                })
                .product();
            if index.len() != configs {
                return Err(format!("{path}: expected {configs} rows, one per parent configuration, got {}", index.len()));
            }
            discrete_parents.push(dp);
            continuous_parents.push(cp);
            row_index.push(index);
        }
        let mut columns = Vec::new();
        let mut col_node = Vec::new();
        for (i, n) in nodes.iter().enumerate() {
            if n.latent {
                continue;
            }
            let ty = match &n.cpd {
                Cpd::Gaussian { .. } => BaseType::Real,
                Cpd::Categorical { values, .. } => value_type(values),
            };
            columns.push(Column::new(n.name.clone(), ty));
            col_node.push(i);
        }
        Ok(BnSpec { nodes, columns, col_node, discrete_parents, continuous_parents, row_index })
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    fn conditional(&self, i: usize, vals: &[Value]) -> Option<Dist> {
        let key: Vec<Value> = self.discrete_parents[i].iter().map(|p| vals[*p].clone()).collect();
        let r = *self.row_index[i].get(&key)?;
        Some(match &self.nodes[i].cpd {
            Cpd::Categorical { values, rows } => Dist::Categorical { values: values.clone(), probs: rows[r].1.clone() },
            Cpd::Gaussian { rows } => {
                let g = &rows[r].1;
                let mut mean = g.mean;
                for (c, p) in g.coeffs.iter().zip(&self.continuous_parents[i]) {
                    mean += c * vals[*p].as_f64()?;
                }
                Dist::gaussian(mean, g.std)
            }
        })
    }

    /// One weighted sample: nodes pinned by `c0` add their conditional log
    /// density to the weight instead of being drawn; a sample outside `c1`
    /// gets weight -inf. Returns the visible row.
    pub fn ancestral(&self, c0: &Assign, c1: &Event, rng: &mut dyn rand::RngCore) -> (Row, f64) {
        let mut vals = vec![Value::Null; self.nodes.len()];
        let mut logw = 0.0;
        for i in 0..self.nodes.len() {
            let Some(dist) = self.conditional(i, &vals) else {
                return (null_row(self.columns.len()), f64::NEG_INFINITY);
            };
            let pinned = c0.iter().find(|(c, _)| self.col_node[*c] == i);
            vals[i] = match pinned {
                Some((_, v)) => {
                    logw += match &dist {
                        Dist::Gaussian { mean, std, .. } => v.as_f64().map_or(f64::NEG_INFINITY, |x| normal_logpdf(x, *mean, *std)),
                        d => d.logpdf(v),
                    };
                    v.clone()
                }
                None => dist.sample(rng),
            };
            if logw == f64::NEG_INFINITY {
                return (null_row(self.columns.len()), logw);
            }
        }
        let row: Row = self.col_node.iter().map(|n| vals[*n].clone()).collect();
        if !c1.contains(&row) {
            logw = f64::NEG_INFINITY;
        }
        (row, logw)
    }
}

fn value_type(values: &[Value]) -> BaseType {
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

/// A network together with the conditions applied to it.
#[derive(Debug, Clone)]
pub struct BnModel {
    spec: Arc<BnSpec>,
    c0: Assign,
    c1: Event,
}

impl BnModel {
    pub fn new(spec: BnSpec) -> BnModel {
        BnModel { spec: Arc::new(spec), c0: Vec::new(), c1: Event::full() }
    }

    pub fn spec(&self) -> &BnSpec {
        &self.spec
    }

    /// `n` weighted particles under the model's conditions.
    pub fn particles(&self, n: usize, rng: &mut dyn rand::RngCore) -> Vec<(Row, f64)> {
        (0..n.max(1)).map(|_| self.spec.ancestral(&self.c0, &self.c1, rng)).collect()
    }

    fn log_marginal(&self, c0: &Assign, n: usize, rng: &mut dyn rand::RngCore) -> f64 {
        if c0.is_empty() && self.c1.is_full() {
            return 0.0;
        }
        let ws: Vec<f64> = (0..n.max(1)).map(|_| self.spec.ancestral(c0, &self.c1, rng).1).collect();
        logmeanexp(&ws)
    }
}

impl RowModel for BnModel {
    fn columns(&self) -> &[Column] {
        self.spec.columns()
    }

    fn kind(&self) -> BackendKind {
        BackendKind::Bn
    }

    fn is_exact(&self) -> bool {
        false
    }

    fn condition(&self, c0: &Assign, c1: &Event, _ctx: &mut AmiCtx<'_>) -> Result<Arc<dyn RowModel>, AmiError> {
        let mut merged = self.c0.clone();
        for (c, v) in c0 {
            match merged.iter().find(|(d, _)| d == c) {
                Some((_, w)) if w == v => {}
                Some(_) => return Err(AmiError::NullMeasure),
                None => merged.push((*c, v.clone())),
            }
        }
        let c1 = if c1.is_full() { self.c1.clone() } else { self.c1.intersect(c1) };
        Ok(Arc::new(BnModel { spec: self.spec.clone(), c0: merged, c1 }))
    }

    fn sample(&self, ctx: &mut AmiCtx<'_>) -> Result<Row, AmiError> {
        let ps = self.particles(ctx.particles, ctx.rng);
        let m = ps.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        if m == f64::NEG_INFINITY {
            return Ok(null_row(self.columns().len()));
        }
        let ws: Vec<f64> = ps.iter().map(|p| (p.1 - m).exp()).collect();
        let u = ctx.rng.random::<f64>() * ws.iter().sum::<f64>();
        let mut acc = 0.0;
        for (i, w) in ws.iter().enumerate() {
            acc += w;
            if u < acc {
                return Ok(ps[i].0.clone());
            }
        }
        Ok(ps.iter().rev().find(|p| p.1 > f64::NEG_INFINITY).map(|p| p.0.clone()).unwrap_or_default())
    }

    /// `logmarginal(c0 and x, c1) - logmarginal(c0, c1)` on two particle sets.
    fn logpdf(&self, x: &Assign, ctx: &mut AmiCtx<'_>) -> Result<f64, AmiError> {
        let mut joint = self.c0.clone();
        for (c, v) in x {
            match self.c0.iter().find(|(d, _)| d == c) {
                Some((_, w)) if w == v => {}
                Some(_) => return Ok(f64::NEG_INFINITY),
                None => joint.push((*c, v.clone())),
            }
        }
        let num = self.log_marginal(&joint, ctx.particles, ctx.rng);
        let den = self.log_marginal(&self.c0, ctx.particles, ctx.rng);
        if den == f64::NEG_INFINITY || num == f64::NEG_INFINITY {
            return Ok(f64::NEG_INFINITY);
        }
        Ok(num - den)
    }

    /// Self-normalized importance estimate on one particle set.
    fn prob(&self, e: &Event, ctx: &mut AmiCtx<'_>) -> Result<f64, AmiError> {
        let ps = self.particles(ctx.particles, ctx.rng);
        let ws: Vec<f64> = ps.iter().map(|p| p.1).collect();
        let hit: Vec<f64> = ps.iter().map(|(r, w)| if e.contains(r) { *w } else { f64::NEG_INFINITY }).collect();
        let den = logmeanexp(&ws);
        if den == f64::NEG_INFINITY {
            return Ok(0.0);
        }
        Ok((logmeanexp(&hit) - den).exp().clamp(0.0, 1.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ami::EventExpr;
    use crate::parser::ast::CmpOp;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_bits() -> BnSpec {
        let b = |x| Value::Int(x);
        BnSpec::new(vec![
            BnNode {
                name: "a".into(),
                latent: false,
                parents: vec![],
                cpd: Cpd::Categorical { values: vec![b(0), b(1)], rows: vec![(vec![], vec![0.3, 0.7])] },
            },
            BnNode {
                name: "b".into(),
                latent: false,
                parents: vec![0],
                cpd: Cpd::Categorical {
                    values: vec![b(0), b(1)],
                    rows: vec![(vec![b(0)], vec![0.9, 0.1]), (vec![b(1)], vec![0.4, 0.6])],
                },
            },
        ])
        .unwrap()
    }

    #[test]
    fn weights() {
        let bn = two_bits();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(bn.ancestral(&vec![], &Event::full(), &mut rng).1, 0.0);
        let (row, w) = bn.ancestral(&vec![(0, Value::Int(1)), (1, Value::Int(0))], &Event::full(), &mut rng);
        assert_eq!(row, vec![Value::Int(1), Value::Int(0)]);
        assert!((w - (0.7f64 * 0.4).ln()).abs() < 1e-15);
        let never = Event::from_expr(&EventExpr::Atom(0, CmpOp::Gt, Value::Int(5)));
        assert_eq!(bn.ancestral(&vec![], &never, &mut rng).1, f64::NEG_INFINITY);
    }

    #[test]
    fn impossible_condition_gives_null_row() {
        let m = BnModel::new(two_bits());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut ctx = AmiCtx { rng: &mut rng, particles: 50 };
        let never = Event::from_expr(&EventExpr::Atom(0, CmpOp::Gt, Value::Int(5)));
        let c = m.condition(&vec![], &never, &mut ctx).unwrap();
        assert_eq!(c.sample(&mut ctx).unwrap(), vec![Value::Null, Value::Null]);
        assert_eq!(c.prob(&Event::full(), &mut ctx).unwrap(), 0.0);
    }

    #[test]
    fn rejects_bad_tables() {
        let mut nodes = vec![BnNode {
            name: "a".into(),
            latent: false,
            parents: vec![],
            cpd: Cpd::Categorical { values: vec![Value::Int(0)], rows: vec![(vec![], vec![0.5])] },
        }];
        assert!(BnSpec::new(nodes.clone()).is_err());
        nodes[0].cpd = Cpd::Categorical { values: vec![Value::Int(0)], rows: vec![(vec![], vec![1.0])] };
        nodes[0].parents = vec![0];
        assert!(BnSpec::new(nodes).is_err());
    }
}
