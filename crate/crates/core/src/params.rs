use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One layer's contiguous slice of the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSegment {
    pub name: String,
    pub offset: usize,
    pub len: usize,
}

impl LayerSegment {
    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.len
    }
}

/// Flattened model parameters plus the layer map that partitions them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    values: Vec<f64>,
    layers: Vec<LayerSegment>,
}

impl ParamVector {
    /// Segments must be disjoint, contiguous in declaration order and cover
    /// `[0, values.len())`.
    pub fn new(values: Vec<f64>, layers: Vec<LayerSegment>) -> Result<Self> {
        validate_layout(&layers, values.len())?;
        Ok(ParamVector { values, layers })
    }

    /// A vector with the same layer map and new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.values.len() {
            return Err(Error::shape(format!(
                "expected {} parameters, got {}",
                self.values.len(),
                values.len()
            )));
        }
        Ok(ParamVector {
            values,
            layers: self.layers.clone(),
        })
    }

    pub fn zeros_like(&self) -> Self {
        ParamVector {
            values: vec![0.0; self.values.len()],
            layers: self.layers.clone(),
        }
    }

    /// Total parameter count `D`.
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// Layer count `L`.
    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn layers(&self) -> &[LayerSegment] {
        &self.layers
    }

    pub fn layer(&self, l: usize) -> Result<&LayerSegment> {
        self.layers.get(l).ok_or_else(|| {
            Error::config(format!(
                "layer index {l} out of range (L = {})",
                self.layers.len()
            ))
        })
    }

    pub fn layer_values(&self, l: usize) -> Result<&[f64]> {
        let seg = self.layer(l)?;
        Ok(&self.values[seg.range()])
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|x| x.is_finite())
    }
}

pub(crate) fn validate_layout(layers: &[LayerSegment], dim: usize) -> Result<()> {
    let mut next = 0;
    for seg in layers {
        if seg.offset != next {
            return Err(Error::config(format!(
                "layer '{}' starts at {} but previous layer ends at {next}",
                seg.name, seg.offset
            )));
        }
        next += seg.len;
    }
    if next != dim {
        return Err(Error::config(format!(
            "layer map covers {next} parameters but vector has {dim}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seg(name: &str, offset: usize, len: usize) -> LayerSegment {
        LayerSegment {
            name: name.into(),
            offset,
            len,
        }
    }

    #[test]
    fn accepts_exact_cover() {
        let p = ParamVector::new(vec![0.0; 5], vec![seg("a", 0, 2), seg("b", 2, 3)]).unwrap();
        assert_eq!(p.dim(), 5);
        assert_eq!(p.num_layers(), 2);
        assert_eq!(p.layer(1).unwrap().range(), 2..5);
        assert!(p.layer(2).is_err());
    }

    #[test]
    fn rejects_gaps_overlaps_and_short_cover() {
        assert!(ParamVector::new(vec![0.0; 5], vec![seg("a", 0, 2), seg("b", 3, 2)]).is_err());
        assert!(ParamVector::new(vec![0.0; 5], vec![seg("a", 0, 3), seg("b", 2, 3)]).is_err());
        assert!(ParamVector::new(vec![0.0; 5], vec![seg("a", 0, 2)]).is_err());
    }
}
