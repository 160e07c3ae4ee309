use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Square, odd-sided blur kernel normalised to unit sum.
#[derive(Debug, Clone, PartialEq)]
pub struct BlurKernel {
    side: usize,
    taps: Vec<f64>,
    raw_sum: f64,
}

impl BlurKernel {
    /// Normalises `taps` (row-major, `side²` values) to unit sum.
    pub fn new(side: usize, taps: Vec<f64>) -> Result<Self> {
        if side == 0 || side % 2 == 0 {
            return Err(Error::InvalidArgument(format!("kernel side must be odd and positive, got {side}")));
        }
        if taps.len() != side * side {
            return Err(Error::shape(format!("{} taps", side * side), format!("{} taps", taps.len())));
        }
        if taps.iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFinite("kernel taps".into()));
        }
        let raw_sum: f64 = taps.iter().sum();
        if raw_sum == 0.0 || !raw_sum.is_finite() {
            return Err(Error::InvalidArgument("kernel taps sum to zero".into()));
        }
        let taps = taps.into_iter().map(|t| t / raw_sum).collect();
        Ok(Self { side, taps, raw_sum })
    }

    pub fn from_fn(side: usize, f: impl Fn(isize, isize) -> f64) -> Result<Self> {
        let c = (side / 2) as isize;
        let mut taps = Vec::with_capacity(side * side);
        for i in 0..side as isize {
            for j in 0..side as isize {
                taps.push(f(i - c, j - c));
            }
        }
        Self::new(side, taps)
    }

    pub fn identity() -> Self {
        Self::new(1, vec![1.0]).expect("valid kernel")
    }

    pub fn uniform(side: usize) -> Result<Self> {
        Self::from_fn(side, |_, _| 1.0)
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    /// Tap at offset `(di, dj)` from the centre.
    pub fn tap(&self, di: isize, dj: isize) -> f64 {
        let c = (self.side / 2) as isize;
        self.taps[((di + c) as usize) * self.side + (dj + c) as usize]
    }

    /// Sum of the taps before normalisation.
    pub fn raw_sum(&self) -> f64 {
        self.raw_sum
    }

    /// Parses the text format: first token the side, then `side²` taps in
    /// row-major order, separated by any whitespace.
    pub fn parse(text: &str) -> Result<Self> {
        let mut tokens = text.split_whitespace();
        let side: usize = tokens
            .next()
            .ok_or_else(|| Error::InvalidArgument("empty kernel file".into()))?
            .parse()
            .map_err(|e| Error::InvalidArgument(format!("kernel side: {e}")))?;
        let taps = tokens
            .map(|t| t.parse::<f64>().map_err(|e| Error::InvalidArgument(format!("kernel tap `{t}`: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        Self::new(side, taps)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{}\n", self.side);
        for row in self.taps.chunks(self.side) {
            let line: Vec<String> = row.iter().map(|t| format!("{t:e}")).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}
