//! Truncated multivariate Gaussians: a Gaussian over the free columns,
//! values for pinned columns, and linear constraints `l <= A x <= u` on the
//! free coordinates. Event-0s condition the Gaussian in closed form; events
//! add constraint rows. Normalizing constants are Monte Carlo estimates.

use std::collections::BTreeSet;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::math::LN_2PI;
use super::{AmiCtx, AmiError, Assign, BackendKind, ColSet, Event, Independence, RowModel};
use crate::table::{Column, Row};
use crate::value::{BaseType, Value};

#[derive(Debug, Clone)]
pub struct TmvgModel {
    columns: Vec<Column>,
    /// Column positions of the Gaussian's coordinates, in order.
    free: Vec<usize>,
    pinned: Vec<(usize, f64)>,
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    chol: DMatrix<f64>,
    a: DMatrix<f64>,
    lower: DVector<f64>,
    upper: DVector<f64>,
}

fn cholesky(cov: &DMatrix<f64>) -> Result<DMatrix<f64>, AmiError> {
    if cov.nrows() == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    nalgebra::Cholesky::new(cov.clone())
        .map(|c| c.l())
        .ok_or_else(|| AmiError::Numeric("covariance is not symmetric positive definite".into()))
}

impl TmvgModel {
    /// `a` is m×d with bounds `lower`/`upper` (infinite for one-sided rows).
    pub fn new(
        names: Vec<String>,
        mean: DVector<f64>,
        cov: DMatrix<f64>,
        a: DMatrix<f64>,
        lower: DVector<f64>,
        upper: DVector<f64>,
    ) -> Result<TmvgModel, AmiError> {
        let d = names.len();
        let bad = |m: &str| Err(AmiError::Numeric(m.to_string()));
        if mean.len() != d || cov.nrows() != d || cov.ncols() != d {
            return bad("mean and covariance must match the number of columns");
        }
        if (&cov - cov.transpose()).amax() > 1e-12 * cov.amax().max(1.0) {
            return bad("covariance must be symmetric");
        }
        if a.ncols() != d || lower.len() != a.nrows() || upper.len() != a.nrows() {
            return bad("constraint matrix must be m x d with m lower and m upper bounds");
        }
        if lower.iter().zip(upper.iter()).any(|(l, u)| !(l <= u)) {
            return bad("constraint bounds need lower <= upper");
        }
        let chol = cholesky(&cov)?;
        let columns = names.into_iter().map(|n| Column::new(n, BaseType::Real)).collect();
        Ok(TmvgModel { columns, free: (0..d).collect(), pinned: Vec::new(), mean, cov, chol, a, lower, upper })
    }

    pub fn unconstrained(names: Vec<String>, mean: DVector<f64>, cov: DMatrix<f64>) -> Result<TmvgModel, AmiError> {
        let d = names.len();
        TmvgModel::new(names, mean, cov, DMatrix::zeros(0, d), DVector::zeros(0), DVector::zeros(0))
    }

    pub fn free_columns(&self) -> &[usize] {
        &self.free
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn constraint_rows(&self) -> usize {
        self.a.nrows()
    }

    /// Closed-form conditioning of the Gaussian on values of free columns.
    pub fn cond0(&self, x: &Assign) -> Result<TmvgModel, AmiError> {
        let mut pinned = self.pinned.clone();
        let mut cond: Vec<(usize, f64)> = Vec::new();
        for (c, v) in x {
            let v = v.as_f64().ok_or(AmiError::NullMeasure)?;
            if let Some((_, p)) = self.pinned.iter().find(|(q, _)| q == c) {
                if *p != v {
                    return Err(AmiError::NullMeasure);
                }
                continue;
            }
            let k = self.free.iter().position(|f| f == c).ok_or_else(|| AmiError::Unsupported(format!("unknown column {c}")))?;
            cond.push((k, v));
            pinned.push((*c, v));
        }
        if cond.is_empty() {
            return Ok(self.clone());
        }
        let ci: Vec<usize> = cond.iter().map(|(k, _)| *k).collect();
        let ki: Vec<usize> = (0..self.free.len()).filter(|k| !ci.contains(k)).collect();
        let v = DVector::from_iterator(cond.len(), cond.iter().map(|(_, v)| *v));
        let s_cc = self.cov.select_rows(&ci).select_columns(&ci);
        let s_kc = self.cov.select_rows(&ki).select_columns(&ci);
        let s_kk = self.cov.select_rows(&ki).select_columns(&ki);
        let chol_cc = nalgebra::Cholesky::new(s_cc).ok_or_else(|| AmiError::Numeric("singular conditioning block".into()))?;
        let resid = &v - self.mean.select_rows(&ci);
        let gain = chol_cc.solve(&s_kc.transpose()).transpose();
        let mean = self.mean.select_rows(&ki) + &gain * resid;
        let mut cov = s_kk - &gain * s_kc.transpose();
        cov = (&cov + cov.transpose()) * 0.5;
        let shift = self.a.select_columns(&ci) * &v;
        let a_k = self.a.select_columns(&ki);
        let mut rows = Vec::new();
        for r in 0..self.a.nrows() {
            let (l, u) = (self.lower[r] - shift[r], self.upper[r] - shift[r]);
            if a_k.row(r).iter().all(|x| *x == 0.0) {
                if !(l <= 0.0 && 0.0 <= u) {
                    return Err(AmiError::NullMeasure);
                }
            } else {
                rows.push((r, l, u));
            }
        }
        let idx: Vec<usize> = rows.iter().map(|(r, _, _)| *r).collect();
        Ok(TmvgModel {
            columns: self.columns.clone(),
            free: ki.iter().map(|k| self.free[*k]).collect(),
            pinned,
            chol: cholesky(&cov)?,
            mean,
            cov,
            a: a_k.select_rows(&idx),
            lower: DVector::from_iterator(rows.len(), rows.iter().map(|r| r.1)),
            upper: DVector::from_iterator(rows.len(), rows.iter().map(|r| r.2)),
        })
    }

    /// Further truncation by a conjunction of per-column bounds.
    pub fn truncate(&self, e: &Event) -> Result<TmvgModel, AmiError> {
        let rect = match e.rects.as_slice() {
            [] => return Err(AmiError::NullMeasure),
            [r] => r,
            _ => return Err(AmiError::Unsupported("truncated gaussian conditions must be conjunctions of column bounds".into())),
        };
        let mut out = self.clone();
        for (c, set) in &rect.0 {
            let ColSet::Co { iv, .. } = set else { return Err(AmiError::NullMeasure) };
            if let Some((_, p)) = self.pinned.iter().find(|(q, _)| q == c) {
                if !iv.contains(*p) {
                    return Err(AmiError::NullMeasure);
                }
                continue;
            }
            if iv.is_full() {
                continue;
            }
            let k = self.free.iter().position(|f| f == c).ok_or_else(|| AmiError::Unsupported(format!("unknown column {c}")))?;
            let m = out.a.nrows();
            out.a = out.a.insert_row(m, 0.0);
            out.a[(m, k)] = 1.0;
            out.lower = out.lower.push(iv.lo);
            out.upper = out.upper.push(iv.hi);
        }
        Ok(out)
    }

    fn draw_free(&self, rng: &mut dyn rand::RngCore) -> DVector<f64> {
        let z = DVector::from_fn(self.free.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
        &self.mean + &self.chol * z
    }

    fn in_region(&self, x: &DVector<f64>) -> bool {
        if self.a.nrows() == 0 {
            return true;
        }
        let ax = &self.a * x;
        ax.iter().enumerate().all(|(r, v)| self.lower[r] <= *v && *v <= self.upper[r])
    }

    fn full_row(&self, x: &DVector<f64>) -> Row {
        let mut row = vec![Value::Null; self.columns.len()];
        for (k, c) in self.free.iter().enumerate() {
            row[*c] = Value::Real(x[k]);
        }
        for (c, v) in &self.pinned {
            row[*c] = Value::Real(*v);
        }
        row
    }

    /// Fraction of `n` untruncated draws inside the constraint region.
    pub fn region_mass(&self, n: usize, rng: &mut dyn rand::RngCore) -> f64 {
        if self.a.nrows() == 0 {
            return 1.0;
        }
        let n = n.max(1);
        (0..n).filter(|_| self.in_region(&self.draw_free(rng))).count() as f64 / n as f64
    }

    fn gaussian_logpdf(&self, idx: &[usize], x: &DVector<f64>) -> Result<f64, AmiError> {
        let s = self.cov.select_rows(idx).select_columns(idx);
        let chol = nalgebra::Cholesky::new(s).ok_or_else(|| AmiError::Numeric("singular marginal covariance".into()))?;
        let r = x - self.mean.select_rows(idx);
        let quad = r.dot(&chol.solve(&r));
        let logdet = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        Ok(-0.5 * (quad + logdet + idx.len() as f64 * LN_2PI))
    }
}

impl RowModel for TmvgModel {
    fn columns(&self) -> &[Column] {
        &self.columns
    }

    fn kind(&self) -> BackendKind {
        BackendKind::Tmvg
    }

    fn is_exact(&self) -> bool {
        false
    }

    fn condition(&self, c0: &Assign, c1: &Event, _ctx: &mut AmiCtx<'_>) -> Result<Arc<dyn RowModel>, AmiError> {
        let m = self.cond0(c0)?;
        let m = if c1.is_full() { m } else { m.truncate(c1)? };
        Ok(Arc::new(m))
    }

    fn sample(&self, ctx: &mut AmiCtx<'_>) -> Result<Row, AmiError> {
        let budget = 100 * ctx.particles.max(1000);
        for _ in 0..budget {
            let x = self.draw_free(ctx.rng);
            if self.in_region(&x) {
                return Ok(self.full_row(&x));
            }
        }
        Err(AmiError::Unreachable(budget))
    }

    fn logpdf(&self, x: &Assign, ctx: &mut AmiCtx<'_>) -> Result<f64, AmiError> {
        let mut idx = Vec::new();
        let mut vals = Vec::new();
        for (c, v) in x {
            let Some(v) = v.as_f64() else { return Ok(f64::NEG_INFINITY) };
            if let Some((_, p)) = self.pinned.iter().find(|(q, _)| q == c) {
                if *p != v {
                    return Ok(f64::NEG_INFINITY);
                }
                continue;
            }
            match self.free.iter().position(|f| f == c) {
                Some(k) => {
                    idx.push(k);
                    vals.push(v);
                }
                None => return Err(AmiError::Unsupported(format!("unknown column {c}"))),
            }
        }
        if idx.is_empty() {
            return Ok(0.0);
        }
        let lp = self.gaussian_logpdf(&idx, &DVector::from_vec(vals))?;
        if self.a.nrows() == 0 {
            return Ok(lp);
        }
        let z = self.region_mass(ctx.particles, ctx.rng);
        if z == 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        let given = match self.cond0(x) {
            Ok(m) => m.region_mass(ctx.particles, ctx.rng),
            Err(AmiError::NullMeasure) => 0.0,
            Err(e) => return Err(e),
        };
        Ok(lp + given.ln() - z.ln())
    }

    fn prob(&self, e: &Event, ctx: &mut AmiCtx<'_>) -> Result<f64, AmiError> {
        let n = ctx.particles.max(1);
        let (mut inside, mut hits) = (0usize, 0usize);
        for _ in 0..n {
            let x = self.draw_free(ctx.rng);
            if self.in_region(&x) {
                inside += 1;
                if e.contains(&self.full_row(&x)) {
                    hits += 1;
                }
            }
        }
        Ok(if inside == 0 { 0.0 } else { hits as f64 / inside as f64 })
    }

    fn independence(&self, a: &BTreeSet<usize>, b: &BTreeSet<usize>) -> Independence {
        if self.a.nrows() != 0 || !a.is_disjoint(b) {
            return Independence::Unknown;
        }
        let pos = |s: &BTreeSet<usize>| -> Vec<usize> { s.iter().filter_map(|c| self.free.iter().position(|f| f == c)).collect() };
        let (ia, ib) = (pos(a), pos(b));
        if ia.iter().all(|i| ib.iter().all(|j| self.cov[(*i, *j)] == 0.0)) {
            Independence::Independent
        } else {
            Independence::Unknown
        }
    }
}
