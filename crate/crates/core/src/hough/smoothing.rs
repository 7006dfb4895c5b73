use std::collections::VecDeque;

use crate::scalar::Scalar;

/// Right-aligned moving average emitted every `decimation`-th sample.
///
/// Output `k` is the mean of raw samples `[k*d - window + 1, k*d]`, using the
/// partial window while fewer samples exist.
#[derive(Clone, Debug)]
pub struct SlidingAverage<T> {
    window: usize,
    decimation: usize,
    buf: VecDeque<T>,
    seen: u64,
}

impl<T: Scalar> SlidingAverage<T> {
    pub fn new(window: usize, decimation: usize) -> Self {
        assert!(window > 0 && decimation > 0);
        Self {
            window,
            decimation,
            buf: VecDeque::with_capacity(window),
            seen: 0,
        }
    }

    /// 200-sample window, 20:1 decimation (20 kHz in, 1 kHz out).
    pub fn standard() -> Self {
        Self::new(200, 20)
    }

    pub fn push(&mut self, x: T) -> Option<T> {
        if self.buf.len() == self.window {
            self.buf.pop_front();
        }
        self.buf.push_back(x);
        let index = self.seen;
        self.seen += 1;
        (index % self.decimation as u64 == 0).then(|| self.mean())
    }

    pub fn mean(&self) -> T {
        let sum = self.buf.iter().fold(T::zero(), |a, &b| a + b);
        sum / T::lit(self.buf.len().max(1) as f64)
    }

    pub fn samples_seen(&self) -> u64 {
        self.seen
    }
}

/// Batch form of [`SlidingAverage`].
pub fn sliding_average<T: Scalar>(raw: &[T], window: usize, decimation: usize) -> Vec<T> {
    let mut avg = SlidingAverage::new(window, decimation);
    raw.iter().filter_map(|&x| avg.push(x)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_in_constant_out() {
        let out = sliding_average(&vec![7.25f64; 4000], 200, 20);
        assert_eq!(out.len(), 200);
        assert!(out.iter().all(|&v| v == 7.25));
    }

    #[test]
    fn output_rate_is_one_in_twenty() {
        for n in [1usize, 19, 20, 21, 400, 401] {
            assert_eq!(sliding_average(&vec![0.0f32; n], 200, 20).len(), n.div_ceil(20));
        }
    }

    #[test]
    fn step_settles_within_ten_outputs() {
        // Step at raw sample 1000 (an output boundary); output k covers raw [20k-199, 20k].
        let raw: Vec<f64> = (0..3000).map(|i| if i >= 1000 { 1.0 } else { 0.0 }).collect();
        let out = sliding_average(&raw, 200, 20);
        let k0 = 1000 / 20;
        assert_eq!(out[k0 - 1], 0.0);
        assert!((out[k0] - 1.0 / 200.0).abs() < 1e-12);
        for k in k0..k0 + 10 {
            assert!(out[k] < out[k + 1]);
        }
        assert!(out[k0 + 10] >= 0.995);
        // Brute-force window mean at one output.
        let k = k0 + 4;
        let manual: f64 = raw[20 * k - 199..=20 * k].iter().sum::<f64>() / 200.0;
        assert_eq!(out[k], manual);
    }

    #[test]
    fn alternating_cancels() {
        let raw: Vec<f64> = (0..2000).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let out = sliding_average(&raw, 200, 20);
        assert!(out[20..].iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn partial_window_at_startup() {
        let raw = [2.0f64, 4.0, 6.0];
        assert_eq!(sliding_average(&raw, 200, 2), vec![2.0, 4.0]);
    }
}
