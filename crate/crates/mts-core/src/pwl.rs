//! Nondecreasing piecewise-linear functions of one variable.
//!
//! The per-state multiplier solves reduce to root finding on sums and
//! reparametrizations of such functions, so every operation here is exact on
//! the representation: knots, one value anchored at the first knot, and a
//! slope per interval (including the two tails).

/// A continuous nondecreasing piecewise-linear function.
///
/// `slopes[i]` applies on `(knots[i-1], knots[i])`; `slopes[0]` is the left
/// tail, `slopes[knots.len()]` the right tail. `anchor` is the value at
/// `knots[0]`.
#[derive(Debug, Clone)]
pub struct PwlMonotone {
    knots: Vec<f64>,
    slopes: Vec<f64>,
    anchor: f64,
}

impl PwlMonotone {
    fn new(knots: Vec<f64>, slopes: Vec<f64>, anchor: f64) -> Self {
        debug_assert!(!knots.is_empty());
        debug_assert_eq!(slopes.len(), knots.len() + 1);
        debug_assert!(knots.windows(2).all(|w| w[0] < w[1]));
        debug_assert!(knots.iter().chain(slopes.iter()).all(|v| v.is_finite()));
        debug_assert!(slopes.iter().all(|&s| s >= 0.0));
        debug_assert!(anchor.is_finite());
        PwlMonotone { knots, slopes, anchor }
    }

    /// The line through `(x0, v0)` with the given slope.
    pub fn affine(x0: f64, v0: f64, slope: f64) -> Self {
        Self::new(vec![x0], vec![slope, slope], v0)
    }

    /// Zero up to `x0`, then rising with the given slope.
    pub fn hinge(x0: f64, slope: f64) -> Self {
        Self::new(vec![x0], vec![0.0, slope], 0.0)
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn eval(&self, x: f64) -> f64 {
        let m = self.knots.len();
        if x <= self.knots[0] {
            return self.anchor + self.slopes[0] * (x - self.knots[0]);
        }
        let mut v = self.anchor;
        for i in 0..m - 1 {
            if x <= self.knots[i + 1] {
                return v + self.slopes[i + 1] * (x - self.knots[i]);
            }
            v += self.slopes[i + 1] * (self.knots[i + 1] - self.knots[i]);
        }
        v + self.slopes[m] * (x - self.knots[m - 1])
    }

    /// Adds the linear function `x -> s * x` in place. The result stays
    /// nondecreasing for `s >= 0`.
    pub fn add_linear(&mut self, s: f64) {
        debug_assert!(s >= 0.0 && s.is_finite());
        self.anchor += s * self.knots[0];
        for sl in &mut self.slopes {
            *sl += s;
        }
    }

    /// Pointwise sum.
    pub fn sum(parts: &[PwlMonotone]) -> PwlMonotone {
        assert!(!parts.is_empty());
        let mut knots: Vec<f64> = parts.iter().flat_map(|p| p.knots.iter().copied()).collect();
        knots.sort_by(|a, b| a.partial_cmp(b).unwrap());
        knots.dedup();
        let m = knots.len();
        let mut slopes = vec![0.0f64; m + 1];
        let mut anchor = 0.0f64;
        for part in parts {
            anchor += part.eval(knots[0]);
            // Every knot of `part` appears in `knots`, so each merged
            // interval lies inside one interval of `part`; `pi` counts the
            // part knots at or below the interval's left end.
            let mut pi = 0usize;
            slopes[0] += part.slopes[0];
            for j in 1..=m {
                while pi < part.knots.len() && part.knots[pi] <= knots[j - 1] {
                    pi += 1;
                }
                slopes[j] += part.slopes[pi];
            }
        }
        PwlMonotone::new(knots, slopes, anchor)
    }

    /// Leftmost `x` with `f(x) = target`, or `None` when the value is never
    /// attained. When the function sits at `target` on an unbounded left
    /// flat, the first knot is returned.
    pub fn solve_leftmost(&self, target: f64) -> Option<f64> {
        let m = self.knots.len();
        if self.anchor >= target {
            if self.anchor == target {
                return Some(self.knots[0]);
            }
            if self.slopes[0] > 0.0 {
                return Some(self.knots[0] - (self.anchor - target) / self.slopes[0]);
            }
            return None;
        }
        let mut v = self.anchor;
        for i in 0..m - 1 {
            let next = v + self.slopes[i + 1] * (self.knots[i + 1] - self.knots[i]);
            if next >= target {
                return Some(self.knots[i] + (target - v) / self.slopes[i + 1]);
            }
            v = next;
        }
        if self.slopes[m] > 0.0 {
            return Some(self.knots[m - 1] + (target - v) / self.slopes[m]);
        }
        None
    }

    /// Response of a parent coordinate with sensitivity `s` whose children
    /// drift by `self`: for pressure `theta` the inner variable `nu >= 0`
    /// solves `s * (theta - nu) = self(nu)` and the response is
    /// `s * (theta - nu)`. Below the pressure where `nu` reaches 0 the
    /// response stays flat at `self(0)`.
    pub fn parent_transform(&self, s: f64) -> PwlMonotone {
        debug_assert!(s > 0.0 && s.is_finite());
        let g0 = self.eval(0.0);
        let theta0 = g0 / s;
        let m = self.knots.len();
        let i0 = self.knots.partition_point(|&k| k <= 0.0);
        let mut knots = Vec::with_capacity(1 + m - i0);
        let mut slopes = Vec::with_capacity(2 + m - i0);
        knots.push(theta0);
        slopes.push(0.0);
        let mut v = g0;
        let mut prev = 0.0f64;
        for i in i0..m {
            let a = self.slopes[i];
            let mapped_slope = s * a / (s + a);
            v += a * (self.knots[i] - prev);
            prev = self.knots[i];
            let mapped = prev + v / s;
            // The map is strictly increasing; rounding can still collapse
            // adjacent images, which would leave a zero-length interval.
            if mapped > *knots.last().unwrap() {
                slopes.push(mapped_slope);
                knots.push(mapped);
            }
        }
        let a = self.slopes[m];
        slopes.push(s * a / (s + a));
        PwlMonotone::new(knots, slopes, g0)
    }
}
