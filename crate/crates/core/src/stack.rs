//! Composition of estimating models into one flat equation: multi-sample
//! stacking with `n/n_k` row weights, and stepwise (triangular) stacking.

use std::ops::Range;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_rational::Ratio;

use crate::data::{Dataset, Obs};
use crate::error::{Error, Result};
use crate::model::{EstimatingModel, RowFilter};
use crate::scalar::Scalar;

pub type SharedModel<T> = Arc<dyn EstimatingModel<T>>;

/// One block of a stacked equation.
///
/// The block writes `weight · 1{row passes filter} · φ_b(x; θ_inputs)` into
/// the equation rows `output`. `inputs` lists the parameter slices read by
/// the block model, concatenated in order.
#[derive(Clone)]
pub struct Block<T: Scalar> {
    model: SharedModel<T>,
    output: Range<usize>,
    inputs: Vec<Range<usize>>,
    filter: RowFilter,
    weight: Ratio<u64>,
    weight_t: T,
    contiguous: Option<Range<usize>>,
}

impl<T: Scalar> std::fmt::Debug for Block<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Block")
            .field("output", &self.output)
            .field("inputs", &self.inputs)
            .field("filter", &self.filter)
            .field("weight", &self.weight)
            .finish()
    }
}

impl<T: Scalar> Block<T> {
    pub fn new(
        model: SharedModel<T>,
        output: Range<usize>,
        inputs: Vec<Range<usize>>,
        filter: RowFilter,
        weight: Ratio<u64>,
    ) -> Result<Self> {
        if output.len() != model.dim() {
            return Err(Error::InvalidStack(format!(
                "block output {:?} has width {}, model has dim {}",
                output,
                output.len(),
                model.dim()
            )));
        }
        let width: usize = inputs.iter().map(|r| r.len()).sum();
        if width != model.input_dim() {
            return Err(Error::InvalidStack(format!(
                "block inputs have width {width}, model reads {}",
                model.input_dim()
            )));
        }
        if *weight.denom() == 0 {
            return Err(Error::InvalidStack("zero weight denominator".into()));
        }
        let weight_t = T::from_count(*weight.numer() as usize) / T::from_count(*weight.denom() as usize);
        let contiguous = contiguous_union(&inputs);
        Ok(Self {
            model,
            output,
            inputs,
            filter,
            weight,
            weight_t,
            contiguous,
        })
    }

    pub fn model(&self) -> &SharedModel<T> {
        &self.model
    }

    pub fn output(&self) -> Range<usize> {
        self.output.clone()
    }

    pub fn inputs(&self) -> &[Range<usize>] {
        &self.inputs
    }

    pub fn filter(&self) -> RowFilter {
        self.filter
    }

    pub fn weight(&self) -> Ratio<u64> {
        self.weight
    }

    #[inline]
    fn accepts(&self, obs: &Obs<'_, T>) -> bool {
        self.filter.accepts(obs) && self.model.rows().accepts(obs)
    }

    /// Whether the block reads exactly its own slice.
    pub fn is_decoupled(&self) -> bool {
        self.contiguous.as_ref() == Some(&self.output)
    }

    fn gather<'t>(&self, theta: &'t [T], buf: &'t mut Vec<T>) -> &'t [T] {
        match &self.contiguous {
            Some(r) => &theta[r.clone()],
            None => {
                buf.clear();
                for r in &self.inputs {
                    buf.extend_from_slice(&theta[r.clone()]);
                }
                buf
            }
        }
    }

    /// Adds this block's weighted Jacobian columns into `acc` (full width).
    fn scatter_jacobian(&self, obs: &Obs<'_, T>, input: &[T], scale: T, acc: &mut DMatrix<T>) -> bool {
        let mut tmp = DMatrix::zeros(self.output.len(), input.len());
        if !self.model.add_jacobian(obs, input, scale * self.weight_t, &mut tmp) {
            return false;
        }
        let mut col = 0;
        for r in &self.inputs {
            for c in r.clone() {
                for (i, row) in self.output.clone().enumerate() {
                    acc[(row, c)] += tmp[(i, col)];
                }
                col += 1;
            }
        }
        true
    }
}

fn contiguous_union(inputs: &[Range<usize>]) -> Option<Range<usize>> {
    let first = inputs.first()?;
    let mut end = first.end;
    for r in &inputs[1..] {
        if r.start != end {
            return None;
        }
        end = r.end;
    }
    Some(first.start..end)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StackKind {
    Multisample,
    Stepwise,
    Custom,
}

/// A flat estimating equation assembled from blocks.
#[derive(Debug, Clone)]
pub struct StackedModel<T: Scalar> {
    blocks: Vec<Block<T>>,
    dim: usize,
    kind: StackKind,
}

impl<T: Scalar> StackedModel<T> {
    /// Validates that block outputs are disjoint, cover `0..dim`, and that
    /// every input slice lies inside the parameter vector.
    pub fn from_blocks(blocks: Vec<Block<T>>, kind: StackKind) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::InvalidStack("no blocks".into()));
        }
        let dim: usize = blocks.iter().map(|b| b.output.len()).sum();
        let mut owner = vec![false; dim];
        for b in &blocks {
            for k in b.output.clone() {
                if k >= dim || owner[k] {
                    return Err(Error::InvalidStack(format!("parameter slice {:?} overlaps or overflows", b.output)));
                }
                owner[k] = true;
            }
            if let Some(r) = b.inputs.iter().find(|r| r.end > dim) {
                return Err(Error::InvalidStack(format!("input slice {r:?} exceeds dimension {dim}")));
            }
        }
        Ok(Self { blocks, dim, kind })
    }

    pub fn blocks(&self) -> &[Block<T>] {
        &self.blocks
    }

    pub fn kind(&self) -> StackKind {
        self.kind
    }

    /// True when block `j` reads only parameters owned by blocks `0..=j`.
    pub fn is_triangular(&self) -> bool {
        let mut owner = vec![usize::MAX; self.dim];
        for (j, b) in self.blocks.iter().enumerate() {
            for k in b.output.clone() {
                owner[k] = j;
            }
        }
        self.blocks.iter().enumerate().all(|(j, b)| {
            b.inputs
                .iter()
                .all(|r| r.clone().all(|k| owner[k] <= j))
        })
    }

    /// Block `j` as a model in its own slice, with every other coordinate
    /// held at `base`.
    pub fn stage_view<'a>(&'a self, j: usize, base: &[T]) -> Result<StageView<'a, T>> {
        let block = self
            .blocks
            .get(j)
            .ok_or_else(|| Error::InvalidArgument(format!("no block {j}")))?;
        if base.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: base.len(),
                context: "stage base point",
            });
        }
        // positions of the block's own coordinates inside its concatenated input
        let mut own_cols = Vec::new();
        let mut col = 0;
        for r in &block.inputs {
            for c in r.clone() {
                if block.output.contains(&c) {
                    own_cols.push((col, c - block.output.start));
                }
                col += 1;
            }
        }
        Ok(StageView {
            block,
            base: base.to_vec(),
            own_cols,
        })
    }
}

impl<T: Scalar> EstimatingModel<T> for StackedModel<T> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn phi(&self, obs: &Obs<'_, T>, theta: &[T], out: &mut [T]) {
        out.fill(T::zero());
        let mut inbuf = Vec::new();
        let mut outbuf = Vec::new();
        for b in &self.blocks {
            if !b.accepts(obs) {
                continue;
            }
            let input = b.gather(theta, &mut inbuf);
            outbuf.clear();
            outbuf.resize(b.output.len(), T::zero());
            b.model.phi(obs, input, &mut outbuf);
            for (o, v) in out[b.output.clone()].iter_mut().zip(&outbuf) {
                *o = *v * b.weight_t;
            }
        }
    }

    fn has_jacobian(&self) -> bool {
        self.blocks.iter().all(|b| b.model.has_jacobian())
    }

    fn add_jacobian(&self, obs: &Obs<'_, T>, theta: &[T], scale: T, acc: &mut DMatrix<T>) -> bool {
        let mut inbuf = Vec::new();
        for b in &self.blocks {
            if !b.accepts(obs) {
                continue;
            }
            let input = b.gather(theta, &mut inbuf).to_vec();
            if !b.scatter_jacobian(obs, &input, scale, acc) {
                return false;
            }
        }
        true
    }

    fn validate(&self, data: &Dataset<T>) -> Result<()> {
        for b in &self.blocks {
            b.model.validate(data)?;
        }
        Ok(())
    }

    /// Block-diagonal envelope, available only when every block is decoupled.
    fn has_envelope(&self) -> bool {
        self.blocks.iter().all(|b| b.is_decoupled() && b.model.has_envelope())
    }

    fn add_envelope(&self, obs: &Obs<'_, T>, scale: T, acc: &mut DMatrix<T>) -> bool {
        if !self.has_envelope() {
            return false;
        }
        for b in &self.blocks {
            if !b.accepts(obs) {
                continue;
            }
            let w = b.output.len();
            let mut tmp = DMatrix::zeros(w, w);
            if !b.model.add_envelope(obs, scale * b.weight_t, &mut tmp) {
                return false;
            }
            let s = b.output.start;
            for i in 0..w {
                for j in 0..w {
                    acc[(s + i, s + j)] += tmp[(i, j)];
                }
            }
        }
        true
    }
}

/// One block seen as a model in its own parameter slice.
pub struct StageView<'a, T: Scalar> {
    block: &'a Block<T>,
    base: Vec<T>,
    own_cols: Vec<(usize, usize)>,
}

impl<T: Scalar> StageView<'_, T> {
    fn input(&self, own: &[T]) -> Vec<T> {
        let mut full = self.base.clone();
        full[self.block.output.clone()].copy_from_slice(own);
        let mut buf = Vec::new();
        self.block.gather(&full, &mut buf).to_vec()
    }
}

impl<T: Scalar> EstimatingModel<T> for StageView<'_, T> {
    fn dim(&self) -> usize {
        self.block.output.len()
    }

    fn phi(&self, obs: &Obs<'_, T>, theta: &[T], out: &mut [T]) {
        if !self.block.accepts(obs) {
            out.fill(T::zero());
            return;
        }
        let input = self.input(theta);
        self.block.model.phi(obs, &input, out);
        for v in out.iter_mut() {
            *v *= self.block.weight_t;
        }
    }

    fn has_jacobian(&self) -> bool {
        self.block.model.has_jacobian()
    }

    fn add_jacobian(&self, obs: &Obs<'_, T>, theta: &[T], scale: T, acc: &mut DMatrix<T>) -> bool {
        if !self.block.accepts(obs) {
            return true;
        }
        let input = self.input(theta);
        let mut tmp = DMatrix::zeros(self.dim(), input.len());
        if !self
            .block
            .model
            .add_jacobian(obs, &input, scale * self.block.weight_t, &mut tmp)
        {
            return false;
        }
        for &(col, own) in &self.own_cols {
            for i in 0..self.dim() {
                acc[(i, own)] += tmp[(i, col)];
            }
        }
        true
    }

    fn validate(&self, data: &Dataset<T>) -> Result<()> {
        self.block.model.validate(data)
    }

    fn rows(&self) -> RowFilter {
        self.block.filter
    }
}

fn sample_weight<T: Scalar>(data: &Dataset<T>, k: usize) -> Result<Ratio<u64>> {
    let nk = data.label_count(k);
    if nk == 0 {
        return Err(Error::EmptySample(k));
    }
    Ok(Ratio::new(data.n() as u64, nk as u64))
}

/// Stacks one square submodel per sample label; block `k` is
/// `1{k_i = k} · (n/n_k) · φ_k(X_i; θ_k)`.
pub fn stack_multisample<T: Scalar>(submodels: Vec<SharedModel<T>>, data: &Dataset<T>) -> Result<StackedModel<T>> {
    if data.labels().is_none() {
        return Err(Error::InvalidData("multi-sample stacking needs sample labels".into()));
    }
    if submodels.len() != data.n_labels() {
        return Err(Error::DimensionMismatch {
            expected: data.n_labels(),
            got: submodels.len(),
            context: "one submodel per sample label",
        });
    }
    let mut blocks = Vec::with_capacity(submodels.len());
    let mut start = 0;
    for (j, m) in submodels.into_iter().enumerate() {
        if m.dim() != m.input_dim() {
            return Err(Error::InvalidStack(format!("submodel {} is not square", j + 1)));
        }
        let r = start..start + m.dim();
        start = r.end;
        let w = sample_weight(data, j + 1)?;
        blocks.push(Block::new(m, r.clone(), vec![r], RowFilter::Label(j + 1), w)?);
    }
    StackedModel::from_blocks(blocks, StackKind::Multisample)
}

/// One stage of a stepwise pipeline.
#[derive(Clone)]
pub struct Stage<T: Scalar> {
    pub model: SharedModel<T>,
    /// Earlier stages whose parameters this stage reads, in the order the
    /// stage model expects them (its own parameter comes last).
    pub depends_on: Vec<usize>,
    /// Rows that feed this stage; `Label(k)` rows get weight `n/n_k`.
    pub filter: RowFilter,
}

impl<T: Scalar> Stage<T> {
    pub fn new(model: SharedModel<T>, depends_on: Vec<usize>) -> Self {
        Self {
            model,
            depends_on,
            filter: RowFilter::All,
        }
    }

    pub fn on_label(mut self, k: usize) -> Self {
        self.filter = RowFilter::Label(k);
        self
    }
}

/// Stacks stages so that stage `j` reads `(θ_{d_1}, …, θ_{d_m}, θ_j)`.
pub fn stack_stepwise<T: Scalar>(stages: Vec<Stage<T>>, data: &Dataset<T>) -> Result<StackedModel<T>> {
    let mut outputs: Vec<Range<usize>> = Vec::with_capacity(stages.len());
    let mut start = 0;
    for s in &stages {
        outputs.push(start..start + s.model.dim());
        start += s.model.dim();
    }
    let mut blocks = Vec::with_capacity(stages.len());
    for (j, s) in stages.into_iter().enumerate() {
        if let Some(&d) = s.depends_on.iter().find(|&&d| d >= j) {
            return Err(Error::CyclicDependency { stage: j, on: d });
        }
        let mut inputs: Vec<Range<usize>> = s.depends_on.iter().map(|&d| outputs[d].clone()).collect();
        inputs.push(outputs[j].clone());
        let weight = match s.filter {
            RowFilter::All => Ratio::from_integer(1),
            RowFilter::Label(k) => sample_weight(data, k)?,
        };
        blocks.push(Block::new(s.model, outputs[j].clone(), inputs, s.filter, weight)?);
    }
    StackedModel::from_blocks(blocks, StackKind::Stepwise)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{evaluate_j_hat, evaluate_phi_bar, FnModel};
    use crate::zoo::LocationModel;
    use approx::assert_abs_diff_eq;

    fn two_samples() -> Dataset<f64> {
        Dataset::from_values(&[1.0, 3.0, 10.0, 14.0, 12.0])
            .unwrap()
            .with_labels(vec![1, 1, 2, 2, 2])
            .unwrap()
    }

    #[test]
    fn weights_are_n_over_nk() {
        let labels: Vec<usize> = (0..100).map(|i| if i < 25 { 1 } else { 2 }).collect();
        let d = Dataset::from_values(&vec![0.0; 100]).unwrap().with_labels(labels).unwrap();
        let m: SharedModel<f64> = Arc::new(LocationModel::mean());
        let s = stack_multisample(vec![m.clone(), m], &d).unwrap();
        assert_eq!(s.blocks()[0].weight(), Ratio::from_integer(4));
        assert_eq!(s.blocks()[1].weight(), Ratio::new(4, 3));
    }

    #[test]
    fn multisample_blocks_decouple() {
        let d = two_samples();
        let m: SharedModel<f64> = Arc::new(LocationModel::mean());
        let s = stack_multisample(vec![m.clone(), m], &d).unwrap();
        let phi = evaluate_phi_bar(&s, &d, &[0.0, 0.0]).unwrap();
        assert_abs_diff_eq!(phi[0], 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(phi[1], 12.0, epsilon = 1e-14);
        let j = evaluate_j_hat(&s, &d, &[0.0, 0.0]).unwrap();
        assert_abs_diff_eq!(j[(0, 0)], -1.0, epsilon = 1e-14);
        assert_eq!(j[(0, 1)], 0.0);
        assert!(s.has_envelope());
    }

    #[test]
    fn missing_submodel_is_an_error() {
        let d = two_samples();
        let m: SharedModel<f64> = Arc::new(LocationModel::mean());
        assert!(stack_multisample(vec![m], &d).is_err());
    }

    #[test]
    fn cyclic_dependency_is_rejected() {
        let d = two_samples();
        let m: SharedModel<f64> = Arc::new(LocationModel::mean());
        let err = stack_stepwise(vec![Stage::new(m.clone(), vec![]), Stage::new(m, vec![1])], &d).unwrap_err();
        assert_eq!(err, Error::CyclicDependency { stage: 1, on: 1 });
    }

    #[test]
    fn stepwise_jacobian_is_lower_triangular() {
        let d = two_samples();
        let first: SharedModel<f64> = Arc::new(LocationModel::mean());
        // second stage: x − θ₁ − θ₂
        let second: SharedModel<f64> = Arc::new(FnModel::new(1, |o: &Obs<'_, f64>, th: &[f64], out: &mut [f64]| {
            out[0] = o.x[0] - th[0] - th[1];
        }));
        struct Wide(SharedModel<f64>);
        impl EstimatingModel<f64> for Wide {
            fn dim(&self) -> usize {
                1
            }
            fn input_dim(&self) -> usize {
                2
            }
            fn phi(&self, o: &Obs<'_, f64>, th: &[f64], out: &mut [f64]) {
                self.0.phi(o, th, out)
            }
        }
        let s = stack_stepwise(
            vec![Stage::new(first, vec![]), Stage::new(Arc::new(Wide(second)), vec![0])],
            &d,
        )
        .unwrap();
        assert!(s.is_triangular());
        let j = evaluate_j_hat(&s, &d, &[0.3, 0.1]).unwrap();
        assert_eq!(j[(0, 1)], 0.0);
        assert_abs_diff_eq!(j[(1, 0)], -1.0, epsilon = 1e-8);
    }
}
