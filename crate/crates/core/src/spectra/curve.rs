use std::fmt::Write as _;

use super::SpectraError;

/// A uniform grid `start + i * step`, `i < count`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    pub start: f64,
    pub step: f64,
    pub count: usize,
}

impl Grid {
    pub fn new(start: f64, step: f64, count: usize) -> Result<Self, SpectraError> {
        if !(step > 0.0 && step.is_finite() && start.is_finite()) || count == 0 {
            return Err(SpectraError::InvalidGrid(format!(
                "start {start}, step {step}, count {count}"
            )));
        }
        Ok(Grid { start, step, count })
    }

    /// Grid covering `[lo, hi]` with the given step.
    pub fn span(lo: f64, hi: f64, step: f64) -> Result<Self, SpectraError> {
        let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
        Grid::new(lo, step, count)
    }

    /// The default spectrum grid `[0, 1.5]` with step `0.005`.
    pub fn default_s() -> Self {
        Grid { start: 0.0, step: 0.005, count: 301 }
    }

    pub fn x(&self, i: usize) -> f64 {
        self.start + i as f64 * self.step
    }

    pub fn xs(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.count).map(|i| self.x(i))
    }

    pub fn end(&self) -> f64 {
        self.x(self.count - 1)
    }

    /// Index of the grid point nearest to `x`, if `x` lies within half a
    /// step of the grid.
    pub fn nearest(&self, x: f64) -> Option<usize> {
        let i = ((x - self.start) / self.step).round();
        (i >= 0.0 && (i as usize) < self.count).then_some(i as usize)
    }
}

/// Values of a function on a uniform grid. Non-finite values are sentinels:
/// transforms ignore them.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumCurve {
    grid: Grid,
    values: Vec<f64>,
}

pub fn is_sentinel(v: f64) -> bool {
    !v.is_finite()
}

impl SpectrumCurve {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self, SpectraError> {
        if values.len() != grid.count {
            return Err(SpectraError::InvalidGrid(format!(
                "{} values for {} grid points",
                values.len(),
                grid.count
            )));
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(SpectraError::InvalidGrid("NaN value".into()));
        }
        Ok(SpectrumCurve { grid, values })
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.xs().map(f).collect();
        SpectrumCurve { grid, values }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn x(&self, i: usize) -> f64 {
        self.grid.x(i)
    }

    pub fn get(&self, i: usize) -> f64 {
        self.values[i]
    }

    /// `max_{j >= i} (g_j - x_j)` over finite values, per index.
    fn suffix_excess(&self) -> Vec<f64> {
        let mut out = vec![f64::NEG_INFINITY; self.len()];
        let mut best = f64::NEG_INFINITY;
        for i in (0..self.len()).rev() {
            let v = self.values[i];
            if !is_sentinel(v) {
                best = best.max(v - self.x(i));
            }
            out[i] = best;
        }
        out
    }

    /// Least nondecreasing 1-Lipschitz majorant on the grid.
    pub fn lipschitz_hull(&self) -> SpectrumCurve {
        let suffix = self.suffix_excess();
        let mut prefix = f64::NEG_INFINITY;
        let values = (0..self.len())
            .map(|i| {
                let v = self.values[i];
                if !is_sentinel(v) {
                    prefix = prefix.max(v);
                }
                prefix.max(self.x(i) + suffix[i])
            })
            .collect::<Vec<f64>>();
        // fold rounding of x_i + (g_j - x_j) back into monotonicity
        let mut run = f64::NEG_INFINITY;
        let values = values
            .into_iter()
            .map(|h| {
                run = run.max(h);
                if run.is_finite() { run } else { f64::INFINITY }
            })
            .collect();
        SpectrumCurve { grid: self.grid, values }
    }

    /// `x + max_{y >= x} (g(y) - y)` on the grid.
    pub fn tilde_transform(&self) -> SpectrumCurve {
        let suffix = self.suffix_excess();
        let values = (0..self.len())
            .map(|i| {
                let h = self.x(i) + suffix[i];
                if h.is_finite() { h } else { f64::INFINITY }
            })
            .collect();
        SpectrumCurve { grid: self.grid, values }
    }

    /// CSV with `#`-prefixed metadata lines followed by `s,value` rows.
    pub fn to_csv(&self, meta: &[(String, String)]) -> String {
        let mut out = String::new();
        for (k, v) in meta {
            let _ = writeln!(out, "# {k}: {v}");
        }
        out.push_str("s,value\n");
        for (i, v) in self.values.iter().enumerate() {
            let _ = writeln!(out, "{},{}", self.x(i), v);
        }
        out
    }

    /// Parse the output of [`SpectrumCurve::to_csv`], or any `s,value` CSV
    /// on a uniform grid.
    pub fn from_csv(text: &str) -> Result<Self, SpectraError> {
        let mut xs = Vec::new();
        let mut values = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with("s,") {
                continue;
            }
            let err = |msg: &str| SpectraError::Parse { line: n + 1, msg: msg.to_string() };
            let mut parts = line.split(',');
            let (Some(a), Some(b), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(err("expected two columns"));
            };
            xs.push(a.trim().parse::<f64>().map_err(|e| err(&e.to_string()))?);
            values.push(b.trim().parse::<f64>().map_err(|e| err(&e.to_string()))?);
        }
        if xs.len() < 2 {
            return Err(SpectraError::Parse { line: 0, msg: "need at least two rows".into() });
        }
        let step = (xs[xs.len() - 1] - xs[0]) / (xs.len() - 1) as f64;
        let grid = Grid::new(xs[0], step, xs.len())?;
        if let Some(i) = (0..xs.len()).find(|&i| (xs[i] - grid.x(i)).abs() > 1e-9 * step.max(1.0)) {
            return Err(SpectraError::NonUniformGrid { index: i, x: xs[i] });
        }
        SpectrumCurve::new(grid, values)
    }
}

/// A step function `base` on `(-inf, x_0)` and `v_i` on `[x_i, x_{i+1})`.
#[derive(Clone, Debug, PartialEq)]
pub struct StepSpectrum {
    base: f64,
    steps: Vec<(f64, f64)>,
}

impl StepSpectrum {
    pub fn new(base: f64, mut steps: Vec<(f64, f64)>) -> Self {
        steps.sort_by(|a, b| a.0.total_cmp(&b.0));
        StepSpectrum { base, steps }
    }

    pub fn steps(&self) -> &[(f64, f64)] {
        &self.steps
    }

    pub fn eval(&self, x: f64) -> f64 {
        let i = self.steps.partition_point(|s| s.0 <= x);
        if i == 0 { self.base } else { self.steps[i - 1].1 }
    }

    /// `lim_{y -> x-} g(y)`.
    pub fn left_limit(&self, x: f64) -> f64 {
        let i = self.steps.partition_point(|s| s.0 < x);
        if i == 0 { self.base } else { self.steps[i - 1].1 }
    }

    /// `max_{y >= x} (g(y) - y) + x`; the supremum over each piece is
    /// attained at its left end.
    pub fn tilde_at(&self, x: f64) -> f64 {
        self.steps
            .iter()
            .filter(|s| s.0 > x)
            .map(|&(xi, v)| v - (xi - x))
            .fold(self.eval(x), f64::max)
    }

    /// Increasing 1-Lipschitz hull evaluated exactly at `x`.
    pub fn hull_at(&self, x: f64) -> f64 {
        let past = self
            .steps
            .iter()
            .filter(|s| s.0 <= x)
            .map(|s| s.1)
            .fold(self.base, f64::max);
        past.max(self.tilde_at(x))
    }

    pub fn to_curve(&self, grid: Grid) -> SpectrumCurve {
        SpectrumCurve::from_fn(grid, |x| self.eval(x))
    }
}
