use num_complex::Complex64;
use realfft::RealFftPlanner;

/// Full linear convolution of `signal` and `kernel` (length `a + b - 1`).
pub fn fft_convolve(signal: &[f64], kernel: &[f64]) -> Vec<f64> {
    if signal.is_empty() || kernel.is_empty() {
        return Vec::new();
    }
    let out_len = signal.len() + kernel.len() - 1;
    if kernel.len().min(signal.len()) <= 32 {
        return direct(signal, kernel);
    }
    let n = out_len.next_power_of_two();
    let mut planner = RealFftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);

    let spectrum = |x: &[f64]| {
        let mut buf = vec![0.0; n];
        buf[..x.len()].copy_from_slice(x);
        let mut out = fwd.make_output_vec();
        fwd.process(&mut buf, &mut out).expect("sizes from planner");
        out
    };
    let a = spectrum(signal);
    let b = spectrum(kernel);
    let mut prod: Vec<Complex64> = a.iter().zip(&b).map(|(x, y)| x * y).collect();
    let mut out = inv.make_output_vec();
    inv.process(&mut prod, &mut out).expect("sizes from planner");
    let scale = 1.0 / n as f64;
    out.truncate(out_len);
    out.iter_mut().for_each(|v| *v *= scale);
    out
}

fn direct(signal: &[f64], kernel: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; signal.len() + kernel.len() - 1];
    for (i, &x) in signal.iter().enumerate() {
        for (j, &h) in kernel.iter().enumerate() {
            out[i + j] += x * h;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_direct_convolution() {
        let a: Vec<f64> = (0..300).map(|i| ((i * 37 % 11) as f64) - 5.0).collect();
        let b: Vec<f64> = (0..90).map(|i| ((i * 13 % 7) as f64) * 0.1).collect();
        let fast = fft_convolve(&a, &b);
        let slow = direct(&a, &b);
        assert_eq!(fast.len(), slow.len());
        for (x, y) in fast.iter().zip(&slow) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn unit_impulse_is_identity() {
        let a = vec![1.0, -2.0, 3.0];
        assert_eq!(fft_convolve(&a, &[1.0]), a);
        assert!(fft_convolve(&[], &a).is_empty());
    }
}
