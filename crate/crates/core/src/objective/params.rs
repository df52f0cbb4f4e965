use std::collections::HashSet;
use std::sync::Arc;

use crate::autodiff::{Bindings, Gradients, Tensor};
use crate::error::{Error, Result};

/// Named block of a [`ParamVector`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub name: String,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Ordered segment descriptors. Offsets are assigned on construction, so the
/// segments always tile `0..len` without gaps or overlap.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    segments: Vec<Segment>,
    len: usize,
}

impl Layout {
    pub fn new<S: Into<String>>(blocks: impl IntoIterator<Item = (S, usize, usize)>) -> Result<Arc<Layout>> {
        let mut segments = Vec::new();
        let mut seen = HashSet::new();
        let mut offset = 0;
        for (name, rows, cols) in blocks {
            let name = name.into();
            if !seen.insert(name.clone()) {
                return Err(Error::config(format!("duplicate segment `{name}`")));
            }
            segments.push(Segment {
                name,
                offset,
                rows,
                cols,
            });
            offset += rows * cols;
        }
        Ok(Arc::new(Layout { segments, len: offset }))
    }

    /// Single `1x1` segment.
    pub fn scalar(name: &str) -> Arc<Layout> {
        Layout::new([(name, 1, 1)]).expect("single segment")
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn segment(&self, name: &str) -> Option<&Segment> {
        self.segments.iter().find(|s| s.name == name)
    }
}

/// Flat real vector carrying one of `w`, `y` or `alpha`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    layout: Arc<Layout>,
    values: Vec<f64>,
}

impl ParamVector {
    pub fn zeros(layout: Arc<Layout>) -> Self {
        let values = vec![0.0; layout.len()];
        ParamVector { layout, values }
    }

    pub fn from_values(layout: Arc<Layout>, values: Vec<f64>) -> Result<Self> {
        if values.len() != layout.len() {
            return Err(Error::Incompatible(format!(
                "{} values for a layout of length {}",
                values.len(),
                layout.len()
            )));
        }
        Ok(ParamVector { layout, values })
    }

    pub fn scalar(name: &str, v: f64) -> Self {
        ParamVector {
            layout: Layout::scalar(name),
            values: vec![v],
        }
    }

    /// Collects the gradients of leaves named `prefix + segment` into a
    /// vector laid out like `layout`.
    pub fn from_gradients(layout: Arc<Layout>, prefix: &str, grads: &Gradients) -> Result<Self> {
        let mut out = ParamVector::zeros(layout);
        for seg in out.layout.clone().segments() {
            let key = format!("{prefix}{}", seg.name);
            let g = grads
                .get(&key)
                .ok_or_else(|| Error::Incompatible(format!("no gradient for leaf `{key}`")))?;
            out.values[seg.range()].copy_from_slice(g.data());
        }
        Ok(out)
    }

    pub fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// The single value of a length-1 vector.
    pub fn item(&self) -> f64 {
        assert_eq!(
            self.values.len(),
            1,
            "item() on a vector of length {}",
            self.values.len()
        );
        self.values[0]
    }

    pub fn segment(&self, name: &str) -> Option<&[f64]> {
        self.layout.segment(name).map(|s| &self.values[s.range()])
    }

    pub fn segment_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let range = self.layout.segment(name)?.range();
        Some(&mut self.values[range])
    }

    pub fn tensor(&self, name: &str) -> Option<Tensor> {
        let seg = self.layout.segment(name)?;
        Some(Tensor::new(seg.rows, seg.cols, self.values[seg.range()].to_vec()))
    }

    /// Identical segment descriptors.
    pub fn is_compatible(&self, other: &ParamVector) -> bool {
        Arc::ptr_eq(&self.layout, &other.layout) || self.layout == other.layout
    }

    pub fn ensure_compatible(&self, other: &ParamVector, what: &str) -> Result<()> {
        if self.is_compatible(other) {
            Ok(())
        } else {
            Err(Error::Incompatible(what.to_string()))
        }
    }

    /// Adds one leaf binding per segment, named `prefix + segment`.
    pub fn bind_into(&self, prefix: &str, bindings: &mut Bindings) {
        for seg in self.layout.segments() {
            bindings.insert(
                format!("{prefix}{}", seg.name),
                Tensor::new(seg.rows, seg.cols, self.values[seg.range()].to_vec()),
            );
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &ParamVector) -> Result<f64> {
        self.ensure_compatible(other, "dot product")?;
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum())
    }

    /// `self - other`
    pub fn sub(&self, other: &ParamVector) -> Result<ParamVector> {
        self.ensure_compatible(other, "difference")?;
        Ok(self.map2(other, |a, b| a - b))
    }

    pub fn add(&self, other: &ParamVector) -> Result<ParamVector> {
        self.ensure_compatible(other, "sum")?;
        Ok(self.map2(other, |a, b| a + b))
    }

    pub fn scaled(&self, c: f64) -> ParamVector {
        ParamVector {
            layout: self.layout.clone(),
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }

    /// `self + a * x`
    pub fn axpy(&self, a: f64, x: &ParamVector) -> Result<ParamVector> {
        self.ensure_compatible(x, "axpy")?;
        Ok(self.map2(x, |s, x| s + a * x))
    }

    fn map2(&self, other: &ParamVector, f: impl Fn(f64, f64) -> f64) -> ParamVector {
        ParamVector {
            layout: self.layout.clone(),
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segments_tile_the_vector() {
        let layout = Layout::new([("a", 2, 3), ("b", 1, 1), ("c", 4, 1)]).unwrap();
        assert_eq!(layout.len(), 11);
        let mut next = 0;
        for s in layout.segments() {
            assert_eq!(s.offset, next);
            next += s.len();
        }
        assert_eq!(next, layout.len());
    }

    #[test]
    fn duplicate_segment_rejected() {
        assert!(Layout::new([("a", 1, 1), ("a", 2, 1)]).is_err());
    }

    #[test]
    fn compatibility_is_structural() {
        let a = ParamVector::zeros(Layout::new([("x", 2, 2)]).unwrap());
        let b = ParamVector::zeros(Layout::new([("x", 2, 2)]).unwrap());
        let c = ParamVector::zeros(Layout::new([("x", 4, 1)]).unwrap());
        assert!(a.is_compatible(&b));
        assert!(!a.is_compatible(&c));
        assert!(a.sub(&c).is_err());
    }

    #[test]
    fn segment_access() {
        let layout = Layout::new([("a", 1, 2), ("b", 1, 1)]).unwrap();
        let mut v = ParamVector::from_values(layout, vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(v.segment("b").unwrap(), &[3.0]);
        v.segment_mut("a").unwrap()[1] = 5.0;
        assert_eq!(v.tensor("a").unwrap().data(), &[1.0, 5.0]);
        assert!(v.segment("zz").is_none());
    }
}
