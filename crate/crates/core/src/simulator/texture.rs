use super::noise::splitmix64;

/// Multi-octave value noise over plane coordinates in meters. Each octave is
/// a lattice of seeded random values, bilinearly interpolated; octave `k`
/// has cell size `cell / 2^k` and amplitude `1 / 2^k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValueNoise {
    pub seed: u64,
    pub octaves: u32,
    /// Coarsest lattice spacing, meters.
    pub cell: f64,
    /// Gain applied around mid-gray before clamping to `[0, 1]`.
    pub contrast: f64,
}

impl Default for ValueNoise {
    fn default() -> Self {
        Self {
            seed: 7,
            octaves: 3,
            cell: 0.025,
            contrast: 2.5,
        }
    }
}

fn lattice(seed: u64, octave: u32, ix: i64, iy: i64) -> f64 {
    let mut s = seed
        ^ (octave as u64).wrapping_mul(0xA24B_AED4_963E_E407)
        ^ (ix as u64).wrapping_mul(0x9FB2_1C65_1E98_DF25)
        ^ (iy as u64).wrapping_mul(0xD6E8_FEB8_6659_FD93);
    let bits = splitmix64(&mut s);
    (bits >> 11) as f64 / (1u64 << 53) as f64
}

impl ValueNoise {
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let mut total = 0.0;
        let mut weight = 0.0;
        let mut cell = self.cell;
        let mut amp = 1.0;
        for k in 0..self.octaves {
            let (gx, gy) = (x / cell, y / cell);
            let (fx, fy) = (gx.floor(), gy.floor());
            let (tx, ty) = (gx - fx, gy - fy);
            let (ix, iy) = (fx as i64, fy as i64);
            let v00 = lattice(self.seed, k, ix, iy);
            let v10 = lattice(self.seed, k, ix + 1, iy);
            let v01 = lattice(self.seed, k, ix, iy + 1);
            let v11 = lattice(self.seed, k, ix + 1, iy + 1);
            let v = (v00 * (1.0 - tx) + v10 * tx) * (1.0 - ty) + (v01 * (1.0 - tx) + v11 * tx) * ty;
            total += amp * v;
            weight += amp;
            cell *= 0.5;
            amp *= 0.5;
        }
        let v = if weight > 0.0 { total / weight } else { 0.5 };
        (0.5 + self.contrast * (v - 0.5)).clamp(0.0, 1.0)
    }
}

/// Alternating squares of two gray levels, origin at a square corner.
pub fn checker(square: f64, x: f64, y: f64) -> f64 {
    let parity = ((x / square).floor() as i64 + (y / square).floor() as i64).rem_euclid(2);
    if parity == 0 {
        0.8
    } else {
        0.2
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_bounded() {
        let t = ValueNoise::default();
        for i in 0..1000 {
            let (x, y) = (i as f64 * 0.0137 - 3.0, i as f64 * -0.0091 + 1.0);
            let v = t.sample(x, y);
            assert!((0.0..=1.0).contains(&v));
            assert_eq!(v.to_bits(), t.sample(x, y).to_bits());
        }
    }

    #[test]
    fn continuous_across_cells() {
        let t = ValueNoise::default();
        let a = t.sample(0.04 - 1e-12, 0.013);
        let b = t.sample(0.04 + 1e-12, 0.013);
        assert!((a - b).abs() < 1e-8);
    }

    #[test]
    fn checker_alternates() {
        assert_ne!(checker(0.1, 0.05, 0.05), checker(0.1, 0.15, 0.05));
        assert_eq!(checker(0.1, 0.05, 0.05), checker(0.1, 0.15, 0.15));
    }
}
