use std::ops::Range;

use crate::error::{check_dim, Error, Result};
use crate::scalar::Scalar;

/// Named, contiguous blocks of a flat parameter vector.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParamLayout {
    blocks: Vec<(String, Range<usize>)>,
    len: usize,
}

impl ParamLayout {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a block and returns its index range.
    pub fn push(&mut self, name: impl Into<String>, len: usize) -> Range<usize> {
        let r = self.len..self.len + len;
        self.blocks.push((name.into(), r.clone()));
        self.len += len;
        r
    }

    pub fn with(mut self, name: impl Into<String>, len: usize) -> Self {
        self.push(name, len);
        self
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn range(&self, name: &str) -> Option<Range<usize>> {
        self.blocks.iter().find(|(n, _)| n == name).map(|(_, r)| r.clone())
    }

    pub fn blocks(&self) -> &[(String, Range<usize>)] {
        &self.blocks
    }

    /// The block called `name` inside `params`.
    pub fn slice<'a, X>(&self, params: &'a [X], name: &str) -> Result<&'a [X]> {
        check_dim("parameter vector", self.len, params.len())?;
        let r = self.range(name).ok_or_else(|| Error::Parameter {
            name: "block",
            reason: format!("no parameter block named `{name}`"),
        })?;
        Ok(&params[r])
    }
}

/// A flat parameter vector with its layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector<T> {
    layout: ParamLayout,
    values: Vec<T>,
}

impl<T: Scalar> ParameterVector<T> {
    pub fn new(layout: ParamLayout, values: Vec<T>) -> Result<Self> {
        check_dim("parameter vector", layout.len(), values.len())?;
        Ok(Self { layout, values })
    }

    /// Concatenates named blocks.
    pub fn flatten(blocks: &[(&str, &[T])]) -> Self {
        let mut layout = ParamLayout::new();
        let mut values = Vec::new();
        for (name, b) in blocks {
            layout.push(*name, b.len());
            values.extend_from_slice(b);
        }
        Self { layout, values }
    }

    /// Splits back into named blocks.
    pub fn unflatten(&self) -> Vec<(String, Vec<T>)> {
        self.layout
            .blocks()
            .iter()
            .map(|(n, r)| (n.clone(), self.values[r.clone()].to_vec()))
            .collect()
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn block(&self, name: &str) -> Result<&[T]> {
        self.layout.slice(&self.values, name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flatten_round_trip() {
        let a = [1.0, 2.0];
        let b = [3.0];
        let p = ParameterVector::flatten(&[("a", &a[..]), ("b", &b[..]), ("empty", &[][..])]);
        assert_eq!(p.values(), &[1.0, 2.0, 3.0]);
        assert_eq!(p.block("b").unwrap(), &[3.0]);
        let back = p.unflatten();
        assert_eq!(back[0], ("a".to_string(), vec![1.0, 2.0]));
        assert_eq!(back[2].1.len(), 0);
        assert!(p.block("c").is_err());
    }
}
