//! Shape-preserving piecewise cubic Hermite interpolation (Fritsch–Carlson slopes).
//!
//! Used for tabulated pressure laws and radial force-potential profiles. The
//! interpolant is C¹ and monotone on every interval where the data are monotone.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneCubic {
    xs: Vec<f64>,
    ys: Vec<f64>,
    slopes: Vec<f64>,
}

/// Value, first and second derivative at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
}

impl MonotoneCubic {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(Error::Domain("abscissa and ordinate lengths differ".into()));
        }
        if xs.len() < 2 {
            return Err(Error::Domain("at least two samples are required".into()));
        }
        if xs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Domain("abscissae must be strictly increasing".into()));
        }
        if xs.iter().chain(ys.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Domain("samples must be finite".into()));
        }
        let slopes = fritsch_carlson_slopes(&xs, &ys);
        Ok(Self { xs, ys, slopes })
    }

    pub fn x_min(&self) -> f64 {
        self.xs[0]
    }

    pub fn x_max(&self) -> f64 {
        *self.xs.last().unwrap()
    }

    pub fn knots(&self) -> &[f64] {
        &self.xs
    }

    pub fn values(&self) -> &[f64] {
        &self.ys
    }

    /// Index of the interval containing `x` (clamped to the table).
    fn interval(&self, x: f64) -> usize {
        let n = self.xs.len();
        match self.xs.partition_point(|&k| k <= x) {
            0 => 0,
            i if i >= n => n - 2,
            i => i - 1,
        }
    }

    /// Evaluates the interpolant inside `[x_min, x_max]`; outside, the end
    /// polynomial pieces are extended.
    pub fn eval(&self, x: f64) -> Jet {
        let k = self.interval(x);
        let h = self.xs[k + 1] - self.xs[k];
        let t = (x - self.xs[k]) / h;
        let (y0, y1) = (self.ys[k], self.ys[k + 1]);
        let (m0, m1) = (self.slopes[k] * h, self.slopes[k + 1] * h);

        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        let value = h00 * y0 + h10 * m0 + h01 * y1 + h11 * m1;

        let dh00 = 6.0 * t2 - 6.0 * t;
        let dh10 = 3.0 * t2 - 4.0 * t + 1.0;
        let dh01 = -dh00;
        let dh11 = 3.0 * t2 - 2.0 * t;
        let d1 = (dh00 * y0 + dh10 * m0 + dh01 * y1 + dh11 * m1) / h;

        let ddh00 = 12.0 * t - 6.0;
        let ddh10 = 6.0 * t - 4.0;
        let ddh01 = -ddh00;
        let ddh11 = 6.0 * t - 2.0;
        let d2 = (ddh00 * y0 + ddh10 * m0 + ddh01 * y1 + ddh11 * m1) / (h * h);

        Jet { value, d1, d2 }
    }
}

/// Parses a two-column whitespace-separated ASCII table; `#` starts a comment.
pub fn parse_two_columns(text: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut a = Vec::new();
    let mut b = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(Error::Parse {
                line: i + 1,
                msg: format!("expected two columns, found {}", fields.len()),
            });
        }
        let parse = |s: &str| {
            s.parse::<f64>().map_err(|e| Error::Parse {
                line: i + 1,
                msg: format!("`{s}`: {e}"),
            })
        };
        a.push(parse(fields[0])?);
        b.push(parse(fields[1])?);
    }
    Ok((a, b))
}

fn fritsch_carlson_slopes(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|k| (ys[k + 1] - ys[k]) / h[k]).collect();
    if n == 2 {
        return vec![delta[0], delta[0]];
    }

    let mut m = vec![0.0; n];
    for k in 1..n - 1 {
        let (d0, d1) = (delta[k - 1], delta[k]);
        if d0 * d1 <= 0.0 {
            m[k] = 0.0;
        } else {
            let w1 = 2.0 * h[k] + h[k - 1];
            let w2 = h[k] + 2.0 * h[k - 1];
            m[k] = (w1 + w2) / (w1 / d0 + w2 / d1);
        }
    }
    m[0] = end_slope(h[0], h[1], delta[0], delta[1]);
    m[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    m
}

// Non-centered three-point estimate, limited to preserve shape.
fn end_slope(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    let m = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if m.signum() != d0.signum() {
        0.0
    } else if d0.signum() != d1.signum() && m.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproduces_linear_data() {
        let xs = vec![0.0, 0.5, 1.7, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x + 1.0).collect();
        let c = MonotoneCubic::new(xs, ys).unwrap();
        for &x in &[0.0, 0.3, 1.0, 2.2, 3.0] {
            let j = c.eval(x);
            assert!((j.value - (2.0 * x + 1.0)).abs() < 1e-14);
            assert!((j.d1 - 2.0).abs() < 1e-13);
            assert!(j.d2.abs() < 1e-12);
        }
    }

    #[test]
    fn monotone_data_gives_monotone_interpolant() {
        let xs = vec![0.0, 1.0, 1.1, 3.0, 3.2, 6.0];
        let ys = vec![0.0, 0.1, 2.0, 2.05, 5.0, 5.1];
        let c = MonotoneCubic::new(xs, ys).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for i in 0..=6000 {
            let v = c.eval(i as f64 * 1e-3).value;
            assert!(v >= prev - 1e-14);
            prev = v;
        }
    }

    #[test]
    fn derivative_is_continuous_at_knots() {
        let xs = vec![0.5, 1.0, 2.0, 4.0];
        let ys = vec![0.1, 1.0, 4.1, 15.0];
        let c = MonotoneCubic::new(xs, ys).unwrap();
        for &k in &[1.0, 2.0] {
            let left = c.eval(k - 1e-9).d1;
            let right = c.eval(k + 1e-9).d1;
            assert!((left - right).abs() < 1e-6);
        }
    }

    #[test]
    fn parses_commented_table() {
        let (a, b) = parse_two_columns("# rho p\n0.5 0.25\n\n1.0 1.0 # ref\n").unwrap();
        assert_eq!(a, vec![0.5, 1.0]);
        assert_eq!(b, vec![0.25, 1.0]);
        match parse_two_columns("1 2\n3\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_unsorted_abscissae() {
        assert!(MonotoneCubic::new(vec![0.0, 0.0, 1.0], vec![1.0, 2.0, 3.0]).is_err());
    }
}
