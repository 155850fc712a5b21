//! Sum-product expressions: exact conditioning, marginal densities and
//! event probabilities over trees of sums, products and univariate leaves.

use std::collections::BTreeSet;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use super::math::{logsumexp, normal_logpdf, phi, phi_inv, std_normal_mass};
use super::{null_row, AmiCtx, AmiError, Assign, BackendKind, ColSet, Event, Independence, Rect, RowModel};
use crate::table::{Column, Row};
use crate::value::Value;

#[derive(Debug, Clone, PartialEq)]
pub enum Dist {
    Categorical { values: Vec<Value>, probs: Vec<f64> },
    /// Normal restricted to `[lo, hi]`.
    Gaussian { mean: f64, std: f64, lo: f64, hi: f64 },
    Uniform { lo: f64, hi: f64 },
    Point(Value),
}

impl Dist {
    pub fn gaussian(mean: f64, std: f64) -> Dist {
        Dist::Gaussian { mean, std, lo: f64::NEG_INFINITY, hi: f64::INFINITY }
    }

    fn gaussian_log_mass(mean: f64, std: f64, lo: f64, hi: f64) -> f64 {
        std_normal_mass((lo - mean) / std, (hi - mean) / std).ln()
    }

    pub fn logpdf(&self, v: &Value) -> f64 {
        match self {
            Dist::Categorical { values, probs } => {
                values.iter().zip(probs).filter(|(w, _)| *w == v).map(|(_, p)| *p).sum::<f64>().ln()
            }
            Dist::Gaussian { mean, std, lo, hi } => match v.as_f64() {
                Some(x) if x >= *lo && x <= *hi => {
                    normal_logpdf(x, *mean, *std) - Dist::gaussian_log_mass(*mean, *std, *lo, *hi)
                }
                _ => f64::NEG_INFINITY,
            },
            Dist::Uniform { lo, hi } => match v.as_f64() {
                Some(x) if x >= *lo && x <= *hi => -(hi - lo).ln(),
                _ => f64::NEG_INFINITY,
            },
            Dist::Point(p) => {
                if p == v {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    pub fn prob(&self, s: &ColSet) -> f64 {
        match self {
            Dist::Categorical { values, probs } => {
                values.iter().zip(probs).filter(|(v, _)| s.contains(v)).map(|(_, p)| *p).sum()
            }
            Dist::Point(v) => s.contains(v) as u8 as f64,
            Dist::Gaussian { .. } | Dist::Uniform { .. } => match s {
                ColSet::Finite(_) => 0.0,
                ColSet::Co { iv, .. } => match self {
                    Dist::Gaussian { mean, std, lo, hi } => {
                        let (a, b) = (iv.lo.max(*lo), iv.hi.min(*hi));
                        (Dist::gaussian_log_mass(*mean, *std, a, b) - Dist::gaussian_log_mass(*mean, *std, *lo, *hi)).exp()
                    }
                    Dist::Uniform { lo, hi } => {
                        let (a, b) = (iv.lo.max(*lo), iv.hi.min(*hi));
                        ((b - a) / (hi - lo)).max(0.0)
                    }
                    _ => unreachable!(),
                },
            },
        }
    }

    /// The distribution restricted to `s`, with the log of its mass.
    pub fn restrict(&self, s: &ColSet) -> Option<(Dist, f64)> {
        let p = self.prob(s);
        if p <= 0.0 || s.is_full() {
            return if p > 0.0 { Some((self.clone(), 0.0)) } else { None };
        }
        let d = match (self, s) {
            (Dist::Categorical { values, probs }, _) => {
                let (values, probs): (Vec<Value>, Vec<f64>) =
                    values.iter().zip(probs).filter(|(v, _)| s.contains(v)).map(|(v, q)| (v.clone(), q / p)).unzip();
                Dist::Categorical { values, probs }
            }
            (Dist::Point(v), _) => Dist::Point(v.clone()),
            (Dist::Gaussian { mean, std, lo, hi }, ColSet::Co { iv, .. }) => {
                Dist::Gaussian { mean: *mean, std: *std, lo: iv.lo.max(*lo), hi: iv.hi.min(*hi) }
            }
            (Dist::Uniform { lo, hi }, ColSet::Co { iv, .. }) => Dist::Uniform { lo: iv.lo.max(*lo), hi: iv.hi.min(*hi) },
            _ => return None,
        };
        Some((d, p.ln()))
    }

    pub fn sample(&self, rng: &mut dyn rand::RngCore) -> Value {
        match self {
            Dist::Categorical { values, probs } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (v, p) in values.iter().zip(probs) {
                    acc += p;
                    if u < acc {
                        return v.clone();
                    }
                }
                values.iter().zip(probs).rev().find(|(_, p)| **p > 0.0).map(|(v, _)| v.clone()).unwrap_or(Value::Null)
            }
            Dist::Gaussian { mean, std, lo, hi } => {
                if lo.is_infinite() && hi.is_infinite() {
                    let z: f64 = rng.sample(StandardNormal);
                    return Value::Real(mean + std * z);
                }
                let (a, b) = ((lo - mean) / std, (hi - mean) / std);
                let u: f64 = rng.random();
                // Sample the tail nearer zero through the reflected cdf so
                // the inverse stays accurate.
                let z = if a > 0.0 {
                    let (pa, pb) = (phi(-b), phi(-a));
                    -phi_inv(pa + u * (pb - pa))
                } else {
                    let (pa, pb) = (phi(a), phi(b));
                    phi_inv(pa + u * (pb - pa))
                };
                Value::Real((mean + std * z).clamp(*lo, *hi))
            }
            Dist::Uniform { lo, hi } => Value::Real(lo + rng.random::<f64>() * (hi - lo)),
            Dist::Point(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SpeNode {
    Leaf { col: usize, dist: Dist },
    /// Weights are positive and sum to one; children share one scope.
    Sum { weights: Vec<f64>, children: Vec<SpeNode> },
    /// Children have disjoint scopes.
    Product(Vec<SpeNode>),
}

impl SpeNode {
    pub fn leaf(col: usize, dist: Dist) -> SpeNode {
        SpeNode::Leaf { col, dist }
    }

    pub fn scope(&self) -> BTreeSet<usize> {
        let mut s = BTreeSet::new();
        self.collect_scope(&mut s);
        s
    }

    fn collect_scope(&self, s: &mut BTreeSet<usize>) {
        match self {
            SpeNode::Leaf { col, .. } => {
                s.insert(*col);
            }
            SpeNode::Sum { children, .. } => {
                if let Some(c) = children.first() {
                    c.collect_scope(s)
                }
            }
            SpeNode::Product(children) => children.iter().for_each(|c| c.collect_scope(s)),
        }
    }

    /// Disintegration at the point `x`: the conditioned tree and the log
    /// marginal density of `x`. `None` when that density is zero.
    pub fn cond0(&self, x: &Assign) -> Option<(SpeNode, f64)> {
        match self {
            SpeNode::Leaf { col, dist } => match x.iter().find(|(c, _)| c == col) {
                None => Some((self.clone(), 0.0)),
                Some((_, v)) => {
                    let ll = dist.logpdf(v);
                    if ll == f64::NEG_INFINITY || ll.is_nan() {
                        return None;
                    }
                    let v = match dist {
                        Dist::Categorical { values, .. } => values.iter().find(|w| *w == v).cloned().unwrap_or(v.clone()),
                        _ => v.clone(),
                    };
                    Some((SpeNode::Leaf { col: *col, dist: Dist::Point(v) }, ll))
                }
            },
            SpeNode::Sum { weights, children } => {
                reweigh(weights, children.iter().map(|c| c.cond0(x)))
            }
            SpeNode::Product(children) => {
                let mut out = Vec::with_capacity(children.len());
                let mut ll = 0.0;
                for c in children {
                    let (n, l) = c.cond0(x)?;
                    out.push(n);
                    ll += l;
                }
                Some((SpeNode::Product(out), ll))
            }
        }
    }

    /// Conditioning on one rectangle, with the log of its probability.
    pub fn cond_rect(&self, r: &Rect) -> Option<(SpeNode, f64)> {
        match self {
            SpeNode::Leaf { col, dist } => match r.get(*col) {
                None => Some((self.clone(), 0.0)),
                Some(s) => dist.restrict(s).map(|(d, lp)| (SpeNode::Leaf { col: *col, dist: d }, lp)),
            },
            SpeNode::Sum { weights, children } => reweigh(weights, children.iter().map(|c| c.cond_rect(r))),
            SpeNode::Product(children) => {
                let mut out = Vec::with_capacity(children.len());
                let mut lp = 0.0;
                for c in children {
                    let (n, l) = c.cond_rect(r)?;
                    out.push(n);
                    lp += l;
                }
                Some((SpeNode::Product(out), lp))
            }
        }
    }

    /// Conditioning on an event of positive probability, with the log of
    /// that probability. A union of rectangles becomes a sum over them.
    pub fn cond1(&self, e: &Event) -> Option<(SpeNode, f64)> {
        match e.rects.as_slice() {
            [] => None,
            [r] => self.cond_rect(r),
            rects => {
                let branches: Vec<Option<(SpeNode, f64)>> = rects.iter().map(|r| self.cond_rect(r)).collect();
                let uniform = vec![1.0; branches.len()];
                reweigh(&uniform, branches.into_iter())
            }
        }
    }

    /// The marginal on `cols`; `None` if no column of the scope remains.
    pub fn marginalize(&self, cols: &BTreeSet<usize>) -> Option<SpeNode> {
        match self {
            SpeNode::Leaf { col, .. } => cols.contains(col).then(|| self.clone()),
            SpeNode::Sum { weights, children } => {
                let children: Option<Vec<SpeNode>> = children.iter().map(|c| c.marginalize(cols)).collect();
                Some(SpeNode::Sum { weights: weights.clone(), children: children? })
            }
            SpeNode::Product(children) => {
                let mut kept: Vec<SpeNode> = children.iter().filter_map(|c| c.marginalize(cols)).collect();
                match kept.len() {
                    0 => None,
                    1 => kept.pop(),
                    _ => Some(SpeNode::Product(kept)),
                }
            }
        }
    }

    pub fn logpdf(&self, x: &Assign) -> f64 {
        match self {
            SpeNode::Leaf { col, dist } => match x.iter().find(|(c, _)| c == col) {
                Some((_, v)) => dist.logpdf(v),
                None => 0.0,
            },
            SpeNode::Sum { weights, children } => {
                let terms: Vec<f64> = weights.iter().zip(children).map(|(w, c)| w.ln() + c.logpdf(x)).collect();
                logsumexp(&terms)
            }
            SpeNode::Product(children) => children.iter().map(|c| c.logpdf(x)).sum(),
        }
    }

    pub fn prob_rect(&self, r: &Rect) -> f64 {
        match self {
            SpeNode::Leaf { col, dist } => r.get(*col).map_or(1.0, |s| dist.prob(s)),
            SpeNode::Sum { weights, children } => weights.iter().zip(children).map(|(w, c)| w * c.prob_rect(r)).sum(),
            SpeNode::Product(children) => children.iter().map(|c| c.prob_rect(r)).product(),
        }
    }

    pub fn prob(&self, e: &Event) -> f64 {
        e.rects.iter().map(|r| self.prob_rect(r)).sum::<f64>().clamp(0.0, 1.0)
    }

    pub fn sample_into(&self, rng: &mut dyn rand::RngCore, row: &mut Row) {
        match self {
            SpeNode::Leaf { col, dist } => row[*col] = dist.sample(rng),
            SpeNode::Sum { weights, children } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut pick = children.len() - 1;
                for (i, w) in weights.iter().enumerate() {
                    acc += w;
                    if u < acc {
                        pick = i;
                        break;
                    }
                }
                children[pick].sample_into(rng, row)
            }
            SpeNode::Product(children) => children.iter().for_each(|c| c.sample_into(rng, row)),
        }
    }
}

/// Sum node from conditioned children: weights are multiplied by each
/// child's likelihood and renormalized; zero-likelihood children drop.
fn reweigh(weights: &[f64], conditioned: impl Iterator<Item = Option<(SpeNode, f64)>>) -> Option<(SpeNode, f64)> {
    let mut terms = Vec::new();
    let mut kids = Vec::new();
    for (w, c) in weights.iter().zip(conditioned) {
        if let Some((n, l)) = c {
            let t = w.ln() + l;
            if t > f64::NEG_INFINITY {
                terms.push(t);
                kids.push(n);
            }
        }
    }
    if kids.is_empty() {
        return None;
    }
    let total = logsumexp(&terms);
    let weights: Vec<f64> = terms.iter().map(|t| (t - total).exp()).collect();
    Some((SpeNode::Sum { weights, children: kids }, total))
}

#[derive(Debug, Clone)]
pub struct SpeModel {
    columns: Vec<Column>,
    root: Arc<SpeNode>,
}

impl SpeModel {
    /// Checks the structural invariants; the root's scope must be exactly
    /// the column positions.
    pub fn new(columns: Vec<Column>, root: SpeNode) -> Result<SpeModel, String> {
        check(&root, "root")?;
        let scope = root.scope();
        let all: BTreeSet<usize> = (0..columns.len()).collect();
        if scope != all {
            return Err(format!("root scope {scope:?} does not cover columns 0..{}", columns.len()));
        }
        Ok(SpeModel { columns, root: Arc::new(root) })
    }

    pub fn root(&self) -> &SpeNode {
        &self.root
    }
}

fn check(n: &SpeNode, path: &str) -> Result<(), String> {
    match n {
        SpeNode::Leaf { dist, .. } => match dist {
            Dist::Categorical { values, probs } => {
                if values.len() != probs.len() || values.is_empty() {
                    return Err(format!("{path}: categorical needs one probability per value"));
                }
                if probs.iter().any(|p| !(*p >= 0.0)) || (probs.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                    return Err(format!("{path}: categorical probabilities must be nonnegative and sum to 1"));
                }
                let distinct: BTreeSet<&Value> = values.iter().collect();
                if distinct.len() != values.len() {
                    return Err(format!("{path}: categorical values must be distinct"));
                }
                Ok(())
            }
            Dist::Gaussian { std, mean, .. } if !(*std > 0.0 && std.is_finite() && mean.is_finite()) => {
                Err(format!("{path}: gaussian needs a finite mean and positive std"))
            }
            Dist::Uniform { lo, hi } if !(lo < hi && lo.is_finite() && hi.is_finite()) => {
                Err(format!("{path}: uniform needs finite lo < hi"))
            }
            _ => Ok(()),
        },
        SpeNode::Sum { weights, children } => {
            if children.is_empty() || weights.len() != children.len() {
                return Err(format!("{path}: sum needs one weight per child"));
            }
            if weights.iter().any(|w| !(*w > 0.0)) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(format!("{path}: sum weights must be positive and sum to 1"));
            }
            let scope = children[0].scope();
            for (i, c) in children.iter().enumerate() {
                let p = format!("{path}.sum[{i}].node");
                check(c, &p)?;
                if c.scope() != scope {
                    return Err(format!("{p}: sum children must cover the same columns"));
                }
            }
            Ok(())
        }
        SpeNode::Product(children) => {
            if children.is_empty() {
                return Err(format!("{path}: empty product"));
            }
            let mut seen = BTreeSet::new();
            for (i, c) in children.iter().enumerate() {
                let p = format!("{path}.product[{i}]");
                check(c, &p)?;
                for col in c.scope() {
                    if !seen.insert(col) {
                        return Err(format!("{p}: product children must cover disjoint columns"));
                    }
                }
            }
            Ok(())
        }
    }
}

impl RowModel for SpeModel {
    fn columns(&self) -> &[Column] {
        &self.columns
    }

    fn kind(&self) -> BackendKind {
        BackendKind::Spe
    }

    fn is_exact(&self) -> bool {
        true
    }

    fn condition(&self, c0: &Assign, c1: &Event, _ctx: &mut AmiCtx<'_>) -> Result<Arc<dyn RowModel>, AmiError> {
        if c0.is_empty() && c1.is_full() {
            return Ok(Arc::new(self.clone()));
        }
        let (n, _) = if c0.is_empty() { ((*self.root).clone(), 0.0) } else { self.root.cond0(c0).ok_or(AmiError::NullMeasure)? };
        let (n, _) = if c1.is_full() { (n, 0.0) } else { n.cond1(c1).ok_or(AmiError::NullMeasure)? };
        Ok(Arc::new(SpeModel { columns: self.columns.clone(), root: Arc::new(n) }))
    }

    fn sample(&self, ctx: &mut AmiCtx<'_>) -> Result<Row, AmiError> {
        let mut row = null_row(self.columns.len());
        self.root.sample_into(ctx.rng, &mut row);
        Ok(row)
    }

    fn logpdf(&self, x: &Assign, _ctx: &mut AmiCtx<'_>) -> Result<f64, AmiError> {
        Ok(self.root.logpdf(x))
    }

    fn prob(&self, e: &Event, _ctx: &mut AmiCtx<'_>) -> Result<f64, AmiError> {
        Ok(self.root.prob(e))
    }

    /// Columns are independent when no factor of a root product touches
    /// both sets.
    fn independence(&self, a: &BTreeSet<usize>, b: &BTreeSet<usize>) -> Independence {
        let mut node: &SpeNode = &self.root;
        while let SpeNode::Sum { children, .. } = node {
            if children.len() != 1 {
                return Independence::Unknown;
            }
            node = &children[0];
        }
        let SpeNode::Product(children) = node else { return Independence::Unknown };
        let separated = children.iter().all(|c| {
            let s = c.scope();
            !(s.iter().any(|x| a.contains(x)) && s.iter().any(|x| b.contains(x)))
        });
        if separated && a.is_disjoint(b) {
            Independence::Independent
        } else {
            Independence::Unknown
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ami::{EventExpr, Interval};
    use crate::parser::ast::CmpOp;
    use crate::value::BaseType;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn s(x: &str) -> Value {
        Value::Str(x.into())
    }

    fn mixture() -> SpeModel {
        let cat = |r: f64| Dist::Categorical { values: vec![s("red"), s("blue")], probs: vec![r, 1.0 - r] };
        let root = SpeNode::Sum {
            weights: vec![0.5, 0.5],
            children: vec![
                SpeNode::Product(vec![SpeNode::leaf(0, cat(0.9)), SpeNode::leaf(1, Dist::gaussian(0.0, 1.0))]),
                SpeNode::Product(vec![SpeNode::leaf(0, cat(0.2)), SpeNode::leaf(1, Dist::gaussian(4.0, 1.0))]),
            ],
        };
        let cols = vec![
            Column::new("color", BaseType::Categorical { labels: vec!["red".into(), "blue".into()] }),
            Column::new("x", BaseType::Real),
        ];
        SpeModel::new(cols, root).unwrap()
    }

    fn ev(col: usize, op: CmpOp, v: Value) -> Event {
        Event::from_expr(&EventExpr::Atom(col, op, v))
    }

    #[test]
    fn reference_mixture_values() {
        let m = mixture();
        let r = m.root();
        assert!((r.prob(&ev(0, CmpOp::Eq, s("red"))) - 0.55).abs() < 1e-15);
        let dens = r.logpdf(&vec![(1, Value::Real(0.0))]).exp();
        let oracle = 0.5 * (-0.0f64).exp() / (2.0 * std::f64::consts::PI).sqrt()
            + 0.5 * (-8.0f64).exp() / (2.0 * std::f64::consts::PI).sqrt();
        assert!((dens - oracle).abs() < 1e-15);
        assert!((dens - 0.19954).abs() < 1e-5);
        assert!((r.prob(&ev(1, CmpOp::Gt, Value::Real(4.0))) - 0.25002).abs() < 1e-5);
    }

    #[test]
    fn cond0_reweights_clusters() {
        let (n, _) = mixture().root().cond0(&vec![(0, s("blue"))]).unwrap();
        let SpeNode::Sum { weights, .. } = &n else { panic!() };
        assert!((weights[0] - 1.0 / 9.0).abs() < 1e-15);
        assert!((weights[1] - 8.0 / 9.0).abs() < 1e-15);
        let p = n.prob(&ev(1, CmpOp::Gt, Value::Real(4.0)));
        let oracle = (1.0 / 9.0) * phi(-4.0) + (8.0 / 9.0) * 0.5;
        assert!((p - oracle).abs() < 1e-12);
        assert!((p - 0.4444).abs() < 1e-4);
    }

    #[test]
    fn truncated_gaussian() {
        let leaf = SpeNode::leaf(0, Dist::gaussian(0.0, 1.0));
        let (n, lp) = leaf.cond1(&ev(0, CmpOp::Gt, Value::Real(0.0))).unwrap();
        assert!((lp - 0.5f64.ln()).abs() < 1e-15);
        let p = n.prob(&ev(0, CmpOp::Gt, Value::Real(1.0)));
        assert!((p - phi(-1.0) / 0.5).abs() < 1e-9);
        let full = leaf.cond1(&Event::full()).unwrap().0;
        assert_eq!(full, leaf);
    }

    #[test]
    fn union_conditioning_and_sampling() {
        let m = mixture();
        let e = Event::from_expr(&EventExpr::Or(
            Box::new(EventExpr::Atom(1, CmpOp::Lt, Value::Real(-1.0))),
            Box::new(EventExpr::Atom(0, CmpOp::Eq, s("blue"))),
        ));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut ctx = AmiCtx { rng: &mut rng, particles: 10 };
        let c = m.condition(&vec![], &e, &mut ctx).unwrap();
        assert!((c.prob(&e, &mut ctx).unwrap() - 1.0).abs() < 1e-12);
        for _ in 0..200 {
            let row = c.sample(&mut ctx).unwrap();
            assert!(e.contains(&row));
        }
        let sub = Event { rects: vec![Rect([(1, ColSet::interval(Interval::below(-1.0)))].into_iter().collect())] };
        let direct = m.root().prob(&sub) / m.root().prob(&e);
        assert!((c.prob(&sub, &mut ctx).unwrap() - direct).abs() < 1e-12);
    }

    #[test]
    fn marginalize_and_independence() {
        let m = mixture();
        let only_color: BTreeSet<usize> = [0].into();
        let marg = m.root().marginalize(&only_color).unwrap();
        assert_eq!(marg.scope(), only_color);
        assert!((marg.prob(&ev(0, CmpOp::Eq, s("red"))) - 0.55).abs() < 1e-15);
        assert_eq!(m.independence(&[0].into(), &[1].into()), Independence::Unknown);
        let prod = SpeModel::new(
            m.columns.clone(),
            SpeNode::Product(vec![
                SpeNode::leaf(0, Dist::Categorical { values: vec![s("red"), s("blue")], probs: vec![0.5, 0.5] }),
                SpeNode::leaf(1, Dist::gaussian(0.0, 1.0)),
            ]),
        )
        .unwrap();
        assert_eq!(prod.independence(&[0].into(), &[1].into()), Independence::Independent);
    }

    #[test]
    fn null_measure() {
        let m = mixture();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut ctx = AmiCtx { rng: &mut rng, particles: 10 };
        let bad = vec![(0, s("green"))];
        assert_eq!(m.condition(&bad, &Event::full(), &mut ctx).unwrap_err(), AmiError::NullMeasure);
    }
}
