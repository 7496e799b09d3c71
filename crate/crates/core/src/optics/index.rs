//! Refractive index of sea water as a function of temperature, salinity,
//! wavelength and depth.
//!
//! The default coefficients are the Quan & Fry (1995) fit to the Austin &
//! Halikas data,
//!
//! ```text
//! n = n0 + (n1 + n2 T + n3 T^2) S + n4 T^2 + (n5 + n6 S + n7 T) / L
//!        + n8 / L^2 + n9 / L^3 + depth_per_m * D
//! ```
//!
//! with `T` in degrees C, `S` in PSU, `L` the vacuum wavelength in nm and `D`
//! the depth in meters. The depth term is a first-order pressure correction
//! (about 1.5e-4 per MPa, i.e. 1.5e-6 per meter of sea water).

use super::OpticsError;

/// Conditions that set the water index at one moment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvironmentSample {
    pub temperature: f64,
    pub salinity: f64,
    pub depth: f64,
    pub wavelength: f64,
}

impl EnvironmentSample {
    pub fn new(temperature: f64, salinity: f64, depth: f64, wavelength: f64) -> Result<Self, OpticsError> {
        let check = |v: f64, lo: f64, hi: f64, name: &str| {
            if (lo..=hi).contains(&v) {
                Ok(())
            } else {
                Err(OpticsError::InvalidEnvironment(format!(
                    "{name} = {v} outside [{lo}, {hi}]"
                )))
            }
        };
        check(temperature, -2.0, 40.0, "temperature")?;
        check(salinity, 0.0, 45.0, "salinity")?;
        check(depth, 0.0, 11000.0, "depth")?;
        check(wavelength, 400.0, 700.0, "wavelength")?;
        Ok(Self {
            temperature,
            salinity,
            depth,
            wavelength,
        })
    }
}

/// Coefficient table of the index polynomial. Missing terms are zero, so a
/// table with only `n0` set is a constant model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndexCoefficients {
    pub n0: f64,
    pub n1: f64,
    pub n2: f64,
    pub n3: f64,
    pub n4: f64,
    pub n5: f64,
    pub n6: f64,
    pub n7: f64,
    pub n8: f64,
    pub n9: f64,
    pub depth_per_m: f64,
}

impl IndexCoefficients {
    pub const NAMES: [&'static str; 11] = [
        "n0", "n1", "n2", "n3", "n4", "n5", "n6", "n7", "n8", "n9", "depth_per_m",
    ];

    pub fn zero() -> Self {
        Self::from_values([0.0; 11])
    }

    pub fn constant(n: f64) -> Self {
        Self { n0: n, ..Self::zero() }
    }

    pub fn values(&self) -> [f64; 11] {
        [
            self.n0,
            self.n1,
            self.n2,
            self.n3,
            self.n4,
            self.n5,
            self.n6,
            self.n7,
            self.n8,
            self.n9,
            self.depth_per_m,
        ]
    }

    pub fn from_values(v: [f64; 11]) -> Self {
        Self {
            n0: v[0],
            n1: v[1],
            n2: v[2],
            n3: v[3],
            n4: v[4],
            n5: v[5],
            n6: v[6],
            n7: v[7],
            n8: v[8],
            n9: v[9],
            depth_per_m: v[10],
        }
    }

    pub fn set(&mut self, name: &str, value: f64) -> bool {
        match Self::NAMES.iter().position(|n| *n == name) {
            Some(i) => {
                let mut v = self.values();
                v[i] = value;
                *self = Self::from_values(v);
                true
            }
            None => false,
        }
    }
}

impl Default for IndexCoefficients {
    fn default() -> Self {
        Self {
            n0: 1.31405,
            n1: 1.779e-4,
            n2: -1.05e-6,
            n3: 1.6e-8,
            n4: -2.02e-6,
            n5: 15.868,
            n6: 0.01155,
            n7: -0.00423,
            n8: -4382.0,
            n9: 1.1455e6,
            depth_per_m: 1.5e-6,
        }
    }
}

pub fn water_refractive_index(env: &EnvironmentSample, c: &IndexCoefficients) -> Result<f64, OpticsError> {
    let t = env.temperature;
    let s = env.salinity;
    let l = env.wavelength;
    let n = c.n0
        + (c.n1 + c.n2 * t + c.n3 * t * t) * s
        + c.n4 * t * t
        + (c.n5 + c.n6 * s + c.n7 * t) / l
        + c.n8 / (l * l)
        + c.n9 / (l * l * l)
        + c.depth_per_m * env.depth;
    if n > 1.30 && n < 1.40 {
        Ok(n)
    } else {
        Err(OpticsError::IndexOutOfPhysicalRange(n))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(t: f64, s: f64, d: f64, l: f64) -> EnvironmentSample {
        EnvironmentSample::new(t, s, d, l).unwrap()
    }

    #[test]
    fn constant_table() {
        let c = IndexCoefficients::constant(1.333);
        for e in [env(0.0, 0.0, 0.0, 400.0), env(35.0, 40.0, 9000.0, 700.0)] {
            assert_eq!(water_refractive_index(&e, &c).unwrap(), 1.333);
        }
    }

    #[test]
    fn fresh_water_sodium_line() {
        // Austin & Halikas pure water at 20 C, 589.3 nm: 1.33300
        let n = water_refractive_index(&env(20.0, 0.0, 0.0, 589.0), &IndexCoefficients::default()).unwrap();
        assert!((n - 1.333).abs() < 0.001, "{n}");
    }

    #[test]
    fn published_reference_values() {
        // values tabulated for the fit at 20 C, 589.3 nm: fresh 1.3330, S=35 1.3394
        let c = IndexCoefficients::default();
        let fresh = water_refractive_index(&env(20.0, 0.0, 0.0, 589.3), &c).unwrap();
        let sea = water_refractive_index(&env(20.0, 35.0, 0.0, 589.3), &c).unwrap();
        assert!((fresh - 1.3330).abs() < 3e-4, "{fresh}");
        assert!((sea - 1.3394).abs() < 3e-4, "{sea}");
    }

    #[test]
    fn saltier_water_refracts_more() {
        let c = IndexCoefficients::default();
        let fresh = water_refractive_index(&env(15.0, 0.0, 10.0, 550.0), &c).unwrap();
        let sea = water_refractive_index(&env(15.0, 35.0, 10.0, 550.0), &c).unwrap();
        assert!(sea > fresh);
    }

    #[test]
    fn monotone_in_salinity_and_temperature() {
        let c = IndexCoefficients::default();
        let h = 1e-3;
        for l in [400.0, 550.0, 700.0] {
            for i in 0..=20 {
                let s = 2.0 * i as f64;
                for t in [10.0, 15.0, 20.0, 25.0, 29.9] {
                    let n = |t: f64, s: f64| water_refractive_index(&env(t, s, 0.0, l), &c).unwrap();
                    assert!(n(t, (s + h).min(40.0)) - n(t, (s - h).max(0.0)) > 0.0);
                    assert!(n(t + h, s) - n(t - h, s) < 0.0);
                }
            }
        }
    }

    #[test]
    fn corrupt_table_fails_gate() {
        let e = env(20.0, 0.0, 0.0, 589.0);
        assert!(matches!(
            water_refractive_index(&e, &IndexCoefficients::constant(1.5)),
            Err(OpticsError::IndexOutOfPhysicalRange(_))
        ));
    }

    #[test]
    fn environment_ranges() {
        assert!(EnvironmentSample::new(-10.0, 0.0, 0.0, 500.0).is_err());
        assert!(EnvironmentSample::new(10.0, 46.0, 0.0, 500.0).is_err());
        assert!(EnvironmentSample::new(10.0, 0.0, 11001.0, 500.0).is_err());
        assert!(EnvironmentSample::new(10.0, 0.0, 0.0, 399.0).is_err());
    }
}
