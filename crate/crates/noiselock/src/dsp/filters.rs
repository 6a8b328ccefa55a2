//! Recursive filter sections realized by the bilinear transform.
//!
//! Every section is a direct-form-II-transposed biquad. Coefficients are a
//! pure function of `(corner, Q, fs)` with prewarping `K = tan(π f_c / fs)`,
//! so the same configuration always yields bit-identical filters.

use std::f64::consts::PI;

use num_complex::Complex64;

/// A streaming single-input single-output filter.
pub trait Filter {
    fn process(&mut self, x: f64) -> f64;

    fn reset(&mut self);

    fn process_block(&mut self, input: &[f64]) -> Vec<f64> {
        input.iter().map(|&x| self.process(x)).collect()
    }
}

/// `y = b0 x + b1 x₋₁ + b2 x₋₂ − a1 y₋₁ − a2 y₋₂`
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
    s1: f64,
    s2: f64,
}

impl Biquad {
    pub fn new(b: [f64; 3], a: [f64; 2]) -> Self {
        Self { b, a, s1: 0.0, s2: 0.0 }
    }

    fn warp(corner: f64, fs: f64) -> f64 {
        (PI * corner / fs).tan()
    }

    pub fn lowpass1(corner: f64, fs: f64) -> Self {
        let k = Self::warp(corner, fs);
        let n = 1.0 / (1.0 + k);
        Self::new([k * n, k * n, 0.0], [(k - 1.0) * n, 0.0])
    }

    pub fn highpass1(corner: f64, fs: f64) -> Self {
        let k = Self::warp(corner, fs);
        let n = 1.0 / (1.0 + k);
        Self::new([n, -n, 0.0], [(k - 1.0) * n, 0.0])
    }

    pub fn lowpass2(corner: f64, q: f64, fs: f64) -> Self {
        let k = Self::warp(corner, fs);
        let k2 = k * k;
        let n = 1.0 / (1.0 + k / q + k2);
        let b0 = k2 * n;
        Self::new([b0, 2.0 * b0, b0], [2.0 * (k2 - 1.0) * n, (1.0 - k / q + k2) * n])
    }

    pub fn highpass2(corner: f64, q: f64, fs: f64) -> Self {
        let k = Self::warp(corner, fs);
        let k2 = k * k;
        let n = 1.0 / (1.0 + k / q + k2);
        Self::new([n, -2.0 * n, n], [2.0 * (k2 - 1.0) * n, (1.0 - k / q + k2) * n])
    }

    pub fn response(&self, freq: f64, fs: f64) -> Complex64 {
        let z1 = Complex64::from_polar(1.0, -2.0 * PI * freq / fs);
        let z2 = z1 * z1;
        (self.b[0] + self.b[1] * z1 + self.b[2] * z2) / (1.0 + self.a[0] * z1 + self.a[1] * z2)
    }
}

impl Filter for Biquad {
    #[inline]
    fn process(&mut self, x: f64) -> f64 {
        let y = self.b[0] * x + self.s1;
        self.s1 = self.b[1] * x - self.a[0] * y + self.s2;
        self.s2 = self.b[2] * x - self.a[1] * y;
        y
    }

    fn reset(&mut self) {
        self.s1 = 0.0;
        self.s2 = 0.0;
    }
}

/// Sections applied in series, followed by a scalar gain.
#[derive(Clone, Debug, PartialEq)]
pub struct Cascade {
    sections: Vec<Biquad>,
    gain: f64,
}

impl Cascade {
    pub fn new(sections: Vec<Biquad>) -> Self {
        Self { sections, gain: 1.0 }
    }

    pub fn with_gain(mut self, gain: f64) -> Self {
        self.gain = gain;
        self
    }

    pub fn gain(&self) -> f64 {
        self.gain
    }

    pub fn sections(&self) -> &[Biquad] {
        &self.sections
    }

    /// Butterworth low-pass of any order: one first-order section for odd
    /// orders plus biquads with `Q_k = 1 / (2 sin((2k+1)π / 2n))`.
    pub fn butterworth_lowpass(order: usize, corner: f64, fs: f64) -> Self {
        Self::new(butterworth_sections(order, corner, fs, false))
    }

    pub fn butterworth_highpass(order: usize, corner: f64, fs: f64) -> Self {
        Self::new(butterworth_sections(order, corner, fs, true))
    }

    /// `order` identical first-order RC low-pass stages.
    pub fn rc_lowpass(order: usize, corner: f64, fs: f64) -> Self {
        Self::new(vec![Biquad::lowpass1(corner, fs); order])
    }

    pub fn response(&self, freq: f64, fs: f64) -> Complex64 {
        self.sections
            .iter()
            .fold(Complex64::new(self.gain, 0.0), |acc, s| acc * s.response(freq, fs))
    }
}

fn butterworth_sections(order: usize, corner: f64, fs: f64, high: bool) -> Vec<Biquad> {
    let mut out = Vec::with_capacity(order.div_ceil(2));
    if order % 2 == 1 {
        out.push(if high {
            Biquad::highpass1(corner, fs)
        } else {
            Biquad::lowpass1(corner, fs)
        });
    }
    for k in 0..order / 2 {
        let q = 1.0 / (2.0 * (PI * (2 * k + 1) as f64 / (2 * order) as f64).sin());
        out.push(if high {
            Biquad::highpass2(corner, q, fs)
        } else {
            Biquad::lowpass2(corner, q, fs)
        });
    }
    out
}

impl Filter for Cascade {
    #[inline]
    fn process(&mut self, x: f64) -> f64 {
        let mut y = x;
        for s in &mut self.sections {
            y = s.process(y);
        }
        self.gain * y
    }

    fn reset(&mut self) {
        for s in &mut self.sections {
            s.reset();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn db(x: f64) -> f64 {
        20.0 * x.log10()
    }

    #[test]
    fn butterworth_corner_is_minus_3db() {
        let fs = 1e6;
        for order in 1..=6 {
            let lp = Cascade::butterworth_lowpass(order, 1e4, fs);
            let g = lp.response(1e4, fs).norm();
            assert!((db(g) + 3.0103).abs() < 0.01, "order {order}: {}", db(g));
            assert!((lp.response(0.0, fs).norm() - 1.0).abs() < 1e-12);
            let hp = Cascade::butterworth_highpass(order, 1e4, fs);
            assert!((db(hp.response(1e4, fs).norm()) + 3.0103).abs() < 0.01);
        }
    }

    #[test]
    fn butterworth_is_maximally_flat() {
        // |H|² = 1 / (1 + (ω_a/ω_c)^{2n}) with prewarped analog frequency.
        let fs = 1e6;
        let fc = 5e4;
        let lp = Cascade::butterworth_lowpass(4, fc, fs);
        for &f in &[1e3, 2e4, 8e4, 2e5] {
            let wa = (PI * f / fs).tan() / (PI * fc / fs).tan();
            let expect = 1.0 / (1.0 + wa.powi(8)).sqrt();
            assert!((lp.response(f, fs).norm() - expect).abs() < 1e-9);
        }
    }

    #[test]
    fn time_domain_matches_response() {
        let fs = 1e5;
        let f = 3e3;
        let mut lp = Cascade::butterworth_lowpass(3, 2e3, fs);
        let x: Vec<f64> = (0..20000).map(|k| (2.0 * PI * f * k as f64 / fs).sin()).collect();
        let y = lp.process_block(&x);
        let peak = y[10000..].iter().fold(0.0f64, |a, b| a.max(b.abs()));
        assert!((peak - lp.response(f, fs).norm()).abs() < 1e-3);
    }

    proptest! {
        #[test]
        fn linearity_and_causality(
            order in 1usize..7,
            corner in 1e2f64..4e4,
            a in prop::collection::vec(-1.0f64..1.0, 200),
            b in prop::collection::vec(-1.0f64..1.0, 200),
            ka in -3.0f64..3.0,
            kb in -3.0f64..3.0,
            at in 0usize..150,
        ) {
            let fs = 1e5;
            let make = || Cascade::butterworth_lowpass(order, corner, fs);
            let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| ka * x + kb * y).collect();
            let (ya, yb, ys) = (make().process_block(&a), make().process_block(&b), make().process_block(&sum));
            for i in 0..sum.len() {
                prop_assert!((ys[i] - (ka * ya[i] + kb * yb[i])).abs() < 1e-9);
            }
            let mut impulse = vec![0.0; 200];
            impulse[at] = 1.0;
            let y = make().process_block(&impulse);
            prop_assert!(y[..at].iter().all(|&v| v == 0.0));
            prop_assert!(y[at] != 0.0);
        }

        #[test]
        fn carried_state_equals_concatenation(
            split in 0usize..1000,
            order in 1usize..5,
            x in prop::collection::vec(-1.0f64..1.0, 1000),
        ) {
            let fs = 1e5;
            let whole = Cascade::butterworth_highpass(order, 1e3, fs).process_block(&x);
            let mut f = Cascade::butterworth_highpass(order, 1e3, fs);
            let mut parts = f.process_block(&x[..split]);
            parts.extend(f.process_block(&x[split..]));
            prop_assert_eq!(whole, parts);
        }
    }
}
