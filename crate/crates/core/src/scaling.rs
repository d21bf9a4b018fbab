use serde::{Deserialize, Serialize};

/// Lower/upper edge of the scaled range. Kept inside (−1, 1) so a tanh
/// output head can still reach every training target.
pub const SCALED_LOW: f64 = -0.8;
pub const SCALED_HIGH: f64 = 0.8;

/// Min-max scaler onto `[SCALED_LOW, SCALED_HIGH]`, fitted on training data
/// only. A constant input maps to the middle of the range and inverts back
/// to the constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler {
    pub min: f64,
    pub max: f64,
}

impl MinMaxScaler {
    pub fn fit<'a>(values: impl IntoIterator<Item = &'a f64>) -> Option<Self> {
        let mut it = values.into_iter().copied().filter(|v| v.is_finite());
        let first = it.next()?;
        let (min, max) = it.fold((first, first), |(lo, hi), v| (lo.min(v), hi.max(v)));
        Some(Self { min, max })
    }

    pub fn identity_like(value: f64) -> Self {
        Self { min: value, max: value }
    }

    pub fn is_degenerate(&self) -> bool {
        self.max <= self.min
    }

    #[inline]
    pub fn scale(&self, x: f64) -> f64 {
        if self.is_degenerate() {
            return 0.5 * (SCALED_LOW + SCALED_HIGH);
        }
        SCALED_LOW + (x - self.min) * (SCALED_HIGH - SCALED_LOW) / (self.max - self.min)
    }

    #[inline]
    pub fn inverse(&self, y: f64) -> f64 {
        if self.is_degenerate() {
            return self.min;
        }
        self.min + (y - SCALED_LOW) * (self.max - self.min) / (SCALED_HIGH - SCALED_LOW)
    }

    /// d(scaled)/d(original); zero for a degenerate scaler.
    pub fn slope(&self) -> f64 {
        if self.is_degenerate() {
            0.0
        } else {
            (SCALED_HIGH - SCALED_LOW) / (self.max - self.min)
        }
    }
}
