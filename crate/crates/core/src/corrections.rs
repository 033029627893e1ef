//! Proximity-force conversion and geometric roughness averaging.

use std::f64::consts::PI;

use thiserror::Error;

type BoxError = Box<dyn std::error::Error + Send + Sync>;

#[derive(Debug, Error)]
pub enum CorrectionError {
    #[error("sphere radius must be positive, got {0:e} m")]
    InvalidRadius(f64),
    #[error("roughness profile: {0}")]
    InvalidProfile(String),
    #[error("roughness row {row} (line {line}): {reason}")]
    MalformedRow { row: usize, line: usize, reason: String },
    #[error("surfaces touch: heights #{i} ({h_i:e} m) and #{j} ({g_j:e} m) give local separation {local:e} m at z = {z:e} m")]
    Contact {
        i: usize,
        j: usize,
        h_i: f64,
        g_j: f64,
        local: f64,
        z: f64,
    },
    #[error("pressure evaluation failed at local separation {z:e} m: {source}")]
    Pressure {
        z: f64,
        #[source]
        source: BoxError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphereGeometry {
    pub radius: f64,
    pub radius_error: f64,
}

impl SphereGeometry {
    pub const MEASURED: Self = Self {
        radius: 148.7e-6,
        radius_error: 0.2e-6,
    };

    pub fn new(radius: f64, radius_error: f64) -> Result<Self, CorrectionError> {
        if !(radius > 0.0 && radius.is_finite()) || !(radius_error >= 0.0) {
            return Err(CorrectionError::InvalidRadius(radius));
        }
        Ok(Self { radius, radius_error })
    }
}

/// Equivalent plate-plate pressure from a sphere-plate force gradient.
pub fn pft_pressure(force_gradient: f64, sphere: SphereGeometry) -> Result<f64, CorrectionError> {
    if !(sphere.radius > 0.0 && sphere.radius.is_finite()) {
        return Err(CorrectionError::InvalidRadius(sphere.radius));
    }
    Ok(-force_gradient / (2.0 * PI * sphere.radius))
}

/// Discrete height distribution of one surface, heights in metres from the
/// mean plane.
#[derive(Debug, Clone, PartialEq)]
pub struct RoughnessProfile {
    heights: Vec<(f64, f64)>,
}

impl RoughnessProfile {
    /// Validates weights (non-negative, summing to one) and a zero weighted
    /// mean height.
    pub fn new(heights: Vec<(f64, f64)>) -> Result<Self, CorrectionError> {
        if heights.is_empty() {
            return Err(CorrectionError::InvalidProfile("no heights".into()));
        }
        if heights.iter().any(|&(h, w)| !h.is_finite() || !(w >= 0.0) || !w.is_finite()) {
            return Err(CorrectionError::InvalidProfile("heights must be finite and weights non-negative".into()));
        }
        let total: f64 = heights.iter().map(|p| p.1).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(CorrectionError::InvalidProfile(format!("weights sum to {total}, expected 1")));
        }
        let scale = heights.iter().map(|p| p.0.abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        let mean: f64 = heights.iter().map(|&(h, w)| h * w).sum();
        if mean.abs() > 1e-9 * scale {
            return Err(CorrectionError::InvalidProfile(format!("weighted mean height is {mean:e} m, expected 0")));
        }
        Ok(Self { heights })
    }

    /// Normalizes the weights and shifts heights to the mean plane.
    pub fn from_histogram(mut heights: Vec<(f64, f64)>) -> Result<Self, CorrectionError> {
        let total: f64 = heights.iter().map(|p| p.1).sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(CorrectionError::InvalidProfile("weights must have a positive sum".into()));
        }
        for p in &mut heights {
            p.1 /= total;
        }
        let mean: f64 = heights.iter().map(|&(h, w)| h * w).sum();
        for p in &mut heights {
            p.0 -= mean;
        }
        Self::new(heights)
    }

    pub fn flat() -> Self {
        Self { heights: vec![(0.0, 1.0)] }
    }

    pub fn heights(&self) -> &[(f64, f64)] {
        &self.heights
    }

    pub fn max_abs_height(&self) -> f64 {
        self.heights.iter().filter(|p| p.1 > 0.0).map(|p| p.0.abs()).fold(0.0, f64::max)
    }

    pub fn rms(&self) -> f64 {
        self.heights.iter().map(|&(h, w)| w * h * h).sum::<f64>().sqrt()
    }

    /// Parses rows of `height_nm weight`; weights are normalized and heights
    /// re-centred on the mean plane.
    pub fn parse(raw: &str) -> Result<Self, CorrectionError> {
        let mut rows = Vec::new();
        let mut row = 0;
        for (lineno, line) in raw.lines().enumerate() {
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            row += 1;
            let fields: Vec<&str> = t.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).collect();
            let bad = |reason: &str| CorrectionError::MalformedRow {
                row,
                line: lineno + 1,
                reason: reason.to_string(),
            };
            if fields.len() != 2 {
                return Err(bad("expected 2 columns (height_nm weight)"));
            }
            let h: f64 = fields[0].parse().map_err(|_| bad("height is not a number"))?;
            let w: f64 = fields[1].parse().map_err(|_| bad("weight is not a number"))?;
            if !(w >= 0.0) {
                return Err(bad("weight must be non-negative"));
            }
            rows.push((h * 1e-9, w));
        }
        Self::from_histogram(rows)
    }
}

/// Weighted average of `pressure_fn` over local separations `z + h_i + g_j`.
pub fn roughness_corrected_pressure<F, E>(
    pressure_fn: F,
    profiles: (&RoughnessProfile, &RoughnessProfile),
    z: f64,
) -> Result<f64, CorrectionError>
where
    F: Fn(f64) -> Result<f64, E>,
    E: Into<BoxError>,
{
    let (a, b) = profiles;
    let mut sum = crate::quad::CompensatedSum::default();
    for (i, &(h, w)) in a.heights().iter().enumerate() {
        for (j, &(g, v)) in b.heights().iter().enumerate() {
            let local = z + h + g;
            if !(local > 0.0) {
                return Err(CorrectionError::Contact {
                    i,
                    j,
                    h_i: h,
                    g_j: g,
                    local,
                    z,
                });
            }
            if w * v == 0.0 {
                continue;
            }
            let p = pressure_fn(local).map_err(|e| CorrectionError::Pressure { z: local, source: e.into() })?;
            sum.add(w * v * p);
        }
    }
    Ok(sum.total())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::convert::Infallible;

    fn quartic(z: f64) -> Result<f64, Infallible> {
        Ok(-1e-27 / z.powi(4))
    }

    #[test]
    fn pft_values() {
        let s = SphereGeometry::MEASURED;
        assert_eq!(pft_pressure(0.0, s).unwrap(), 0.0);
        assert_relative_eq!(pft_pressure(1.869e-3, s).unwrap(), -2.0004, max_relative = 1e-4);
        let s2 = SphereGeometry { radius: 2.0 * s.radius, ..s };
        assert_relative_eq!(pft_pressure(1.0, s2).unwrap(), 0.5 * pft_pressure(1.0, s).unwrap(), max_relative = 1e-15);
        assert!(pft_pressure(1.0, SphereGeometry { radius: 0.0, radius_error: 0.0 }).is_err());
    }

    #[test]
    fn flat_profiles_are_identity() {
        let f = RoughnessProfile::flat();
        let z = 200e-9;
        assert_eq!(roughness_corrected_pressure(quartic, (&f, &f), z).unwrap(), quartic(z).unwrap());
    }

    #[test]
    fn symmetric_two_point_closed_form() {
        let h = 5e-9;
        let a = RoughnessProfile::new(vec![(-h, 0.5), (h, 0.5)]).unwrap();
        let f = RoughnessProfile::flat();
        for z in [100e-9, 160e-9, 300e-9] {
            let ratio = roughness_corrected_pressure(quartic, (&a, &f), z).unwrap() / quartic(z).unwrap() - 1.0;
            let x = h / z;
            let exact = 0.5 * ((1.0 + x).powi(-4) + (1.0 - x).powi(-4)) - 1.0;
            assert_relative_eq!(ratio, exact, max_relative = 1e-12);
            assert_relative_eq!(ratio, 10.0 * x * x, max_relative = 0.05);
        }
    }

    #[test]
    fn contact_names_the_pair() {
        let a = RoughnessProfile::new(vec![(-20e-9, 0.5), (20e-9, 0.5)]).unwrap();
        let b = RoughnessProfile::new(vec![(-15e-9, 0.5), (15e-9, 0.5)]).unwrap();
        match roughness_corrected_pressure(quartic, (&a, &b), 30e-9) {
            Err(CorrectionError::Contact { i: 0, j: 0, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn parse_normalizes_and_centres() {
        let p = RoughnessProfile::parse("# surface\n-2 1\n0 2\n4 1\n").unwrap();
        let mean: f64 = p.heights().iter().map(|&(h, w)| h * w).sum();
        assert!(mean.abs() < 1e-20);
        assert_relative_eq!(p.heights().iter().map(|x| x.1).sum::<f64>(), 1.0);
        assert_relative_eq!(p.max_abs_height(), 3.5e-9, max_relative = 1e-12);
        let err = RoughnessProfile::parse("1 0.5\n2\n").unwrap_err();
        assert!(matches!(err, CorrectionError::MalformedRow { row: 2, line: 2, .. }));
    }

    #[test]
    fn rejects_bad_weights() {
        assert!(RoughnessProfile::new(vec![(0.0, 0.7)]).is_err());
        assert!(RoughnessProfile::new(vec![(1e-9, 1.0)]).is_err());
        assert!(RoughnessProfile::new(vec![(0.0, 1.5), (1e-9, -0.5)]).is_err());
    }

    proptest! {
        #[test]
        fn jensen_and_monotone_decay(h1 in 0.5f64..8.0, h2 in 0.5f64..8.0, w in 0.1f64..0.9) {
            // Asymmetric zero-mean two-point profile.
            let (hm, hp) = (-h1 * 1e-9, h1 * 1e-9 * (1.0 - w) / w);
            let a = RoughnessProfile::new(vec![(hm, 1.0 - w), (hp, w)]).unwrap();
            let b = RoughnessProfile::new(vec![(-h2 * 1e-9, 0.5), (h2 * 1e-9, 0.5)]).unwrap();
            let mut last = f64::INFINITY;
            for z in [160e-9, 200e-9, 300e-9, 500e-9, 750e-9] {
                let ratio = roughness_corrected_pressure(quartic, (&a, &b), z).unwrap() / quartic(z).unwrap();
                prop_assert!(ratio > 1.0);
                prop_assert!(ratio - 1.0 < last);
                last = ratio - 1.0;
            }
        }

        #[test]
        fn pft_linear_and_homogeneous(g in -1.0f64..1.0, g2 in -1.0f64..1.0, r in 1e-6f64..1e-3, s in 0.1f64..10.0) {
            let sp = SphereGeometry::new(r, 0.0).unwrap();
            let sum = pft_pressure(g + g2, sp).unwrap();
            prop_assert!((sum - pft_pressure(g, sp).unwrap() - pft_pressure(g2, sp).unwrap()).abs() <= 1e-9 * sum.abs().max(1.0) / r);
            let scaled = pft_pressure(g, SphereGeometry::new(s * r, 0.0).unwrap()).unwrap();
            prop_assert!((scaled * s - pft_pressure(g, sp).unwrap()).abs() <= 1e-12 * (g / r).abs());
        }
    }
}
