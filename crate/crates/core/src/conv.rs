//! Shared convolution/pooling primitives for the feature extractor and the
//! denoiser. All 3×3 convolutions are zero-padded, stride 1; kernel layout
//! is `[kh][kw][cin][cout]` row-major, activations are `(row, col, channel)`
//! row-major like [`crate::tensor::ImageTensor`].

use crate::num::Real;

/// `out[r][c][co] = bias[co] + Σ in[r+dr-1][c+dc-1][ci] · k[dr][dc][ci][co]`
pub(crate) fn conv3x3_forward<T: Real>(
    input: &[T],
    h: usize,
    w: usize,
    cin: usize,
    cout: usize,
    kernels: &[T],
    bias: Option<&[T]>,
    out: &mut [T],
) {
    debug_assert_eq!(input.len(), h * w * cin);
    debug_assert_eq!(kernels.len(), 9 * cin * cout);
    debug_assert_eq!(out.len(), h * w * cout);
    for r in 0..h {
        for c in 0..w {
            let out_base = (r * w + c) * cout;
            match bias {
                Some(b) => out[out_base..out_base + cout].copy_from_slice(b),
                None => out[out_base..out_base + cout].fill(T::zero()),
            }
            for dr in 0..3 {
                let rr = r as isize + dr as isize - 1;
                if rr < 0 || rr >= h as isize {
                    continue;
                }
                for dc in 0..3 {
                    let cc = c as isize + dc as isize - 1;
                    if cc < 0 || cc >= w as isize {
                        continue;
                    }
                    let in_base = (rr as usize * w + cc as usize) * cin;
                    let k_base = (dr * 3 + dc) * cin * cout;
                    for ci in 0..cin {
                        let x = input[in_base + ci];
                        let k_row = &kernels[k_base + ci * cout..k_base + (ci + 1) * cout];
                        let out_px = &mut out[out_base..out_base + cout];
                        for (o, &k) in out_px.iter_mut().zip(k_row) {
                            *o += x * k;
                        }
                    }
                }
            }
        }
    }
}

/// Gradient w.r.t. the convolution input. `grad_in` is accumulated into.
pub(crate) fn conv3x3_backward_input<T: Real>(
    grad_out: &[T],
    h: usize,
    w: usize,
    cin: usize,
    cout: usize,
    kernels: &[T],
    grad_in: &mut [T],
) {
    debug_assert_eq!(grad_out.len(), h * w * cout);
    debug_assert_eq!(grad_in.len(), h * w * cin);
    for r in 0..h {
        for c in 0..w {
            let go = &grad_out[(r * w + c) * cout..(r * w + c + 1) * cout];
            for dr in 0..3 {
                let rr = r as isize + dr as isize - 1;
                if rr < 0 || rr >= h as isize {
                    continue;
                }
                for dc in 0..3 {
                    let cc = c as isize + dc as isize - 1;
                    if cc < 0 || cc >= w as isize {
                        continue;
                    }
                    let in_base = (rr as usize * w + cc as usize) * cin;
                    let k_base = (dr * 3 + dc) * cin * cout;
                    for ci in 0..cin {
                        let k_row = &kernels[k_base + ci * cout..k_base + (ci + 1) * cout];
                        let mut acc = T::zero();
                        for (&g, &k) in go.iter().zip(k_row) {
                            acc += g * k;
                        }
                        grad_in[in_base + ci] += acc;
                    }
                }
            }
        }
    }
}

/// Gradients w.r.t. kernels and bias. Both accumulators are added into.
pub(crate) fn conv3x3_backward_params<T: Real>(
    input: &[T],
    grad_out: &[T],
    h: usize,
    w: usize,
    cin: usize,
    cout: usize,
    grad_kernels: &mut [T],
    grad_bias: Option<&mut [T]>,
) {
    debug_assert_eq!(grad_kernels.len(), 9 * cin * cout);
    if let Some(gb) = grad_bias {
        for r in 0..h {
            for c in 0..w {
                let go = &grad_out[(r * w + c) * cout..(r * w + c + 1) * cout];
                for (b, &g) in gb.iter_mut().zip(go) {
                    *b += g;
                }
            }
        }
    }
    for r in 0..h {
        for c in 0..w {
            let go = &grad_out[(r * w + c) * cout..(r * w + c + 1) * cout];
            for dr in 0..3 {
                let rr = r as isize + dr as isize - 1;
                if rr < 0 || rr >= h as isize {
                    continue;
                }
                for dc in 0..3 {
                    let cc = c as isize + dc as isize - 1;
                    if cc < 0 || cc >= w as isize {
                        continue;
                    }
                    let in_base = (rr as usize * w + cc as usize) * cin;
                    let k_base = (dr * 3 + dc) * cin * cout;
                    for ci in 0..cin {
                        let x = input[in_base + ci];
                        let gk = &mut grad_kernels[k_base + ci * cout..k_base + (ci + 1) * cout];
                        for (k, &g) in gk.iter_mut().zip(go) {
                            *k += x * g;
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn tanh_forward<T: Real>(values: &mut [T]) {
    for v in values {
        *v = v.tanh();
    }
}

/// Given `y = tanh(x)` and `dL/dy`, produce `dL/dx = dL/dy · (1 − y²)`.
pub(crate) fn tanh_backward<T: Real>(tanh_out: &[T], grad: &mut [T]) {
    for (g, &y) in grad.iter_mut().zip(tanh_out) {
        *g *= T::one() - y * y;
    }
}

/// 2×2 average pool, stride 2, remainder rows/columns dropped.
pub(crate) fn avgpool2_forward<T: Real>(input: &[T], h: usize, w: usize, ch: usize) -> (Vec<T>, usize, usize) {
    let (ph, pw) = (h / 2, w / 2);
    let quarter = T::of(0.25);
    let mut out = vec![T::zero(); ph * pw * ch];
    for r in 0..ph {
        for c in 0..pw {
            for k in 0..ch {
                let sum = input[((2 * r) * w + 2 * c) * ch + k]
                    + input[((2 * r) * w + 2 * c + 1) * ch + k]
                    + input[((2 * r + 1) * w + 2 * c) * ch + k]
                    + input[((2 * r + 1) * w + 2 * c + 1) * ch + k];
                out[(r * pw + c) * ch + k] = sum * quarter;
            }
        }
    }
    (out, ph, pw)
}

/// Backward of [`avgpool2_forward`]: spread `g/4` to the four sources;
/// dropped remainder pixels receive zero.
pub(crate) fn avgpool2_backward<T: Real>(
    grad_out: &[T],
    h: usize,
    w: usize,
    ch: usize,
) -> Vec<T> {
    let (ph, pw) = (h / 2, w / 2);
    let quarter = T::of(0.25);
    let mut grad_in = vec![T::zero(); h * w * ch];
    for r in 0..ph {
        for c in 0..pw {
            for k in 0..ch {
                let g = grad_out[(r * pw + c) * ch + k] * quarter;
                grad_in[((2 * r) * w + 2 * c) * ch + k] = g;
                grad_in[((2 * r) * w + 2 * c + 1) * ch + k] = g;
                grad_in[((2 * r + 1) * w + 2 * c) * ch + k] = g;
                grad_in[((2 * r + 1) * w + 2 * c + 1) * ch + k] = g;
            }
        }
    }
    grad_in
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::DetRng;

    #[test]
    fn conv_identity_kernel_passes_input_through() {
        // Single channel, kernel = 1 at the center tap.
        let mut kernels = vec![0.0f64; 9];
        kernels[4] = 1.0;
        let input: Vec<f64> = (0..12).map(|v| v as f64).collect();
        let mut out = vec![0.0f64; 12];
        conv3x3_forward(&input, 3, 4, 1, 1, &kernels, None, &mut out);
        assert_eq!(input, out);
    }

    #[test]
    fn conv_zero_padding_at_borders() {
        // Kernel picks the pixel above; the top row must read padding zeros.
        let mut kernels = vec![0.0f64; 9];
        kernels[1] = 1.0; // dr=0, dc=1 -> source pixel (r-1, c)
        let input = vec![1.0f64; 4];
        let mut out = vec![9.0f64; 4];
        conv3x3_forward(&input, 2, 2, 1, 1, &kernels, None, &mut out);
        assert_eq!(out, vec![0.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn avgpool_drops_remainder() {
        let input: Vec<f64> = (0..15).map(|v| v as f64).collect(); // 3x5x1
        let (out, ph, pw) = avgpool2_forward(&input, 3, 5, 1);
        assert_eq!((ph, pw), (1, 2));
        assert_eq!(out, vec![(0.0 + 1.0 + 5.0 + 6.0) / 4.0, (2.0 + 3.0 + 7.0 + 8.0) / 4.0]);
    }

    #[test]
    fn conv_input_gradient_matches_finite_differences() {
        let mut rng = DetRng::new(5);
        let (h, w, cin, cout) = (4, 3, 2, 3);
        let kernels: Vec<f64> = (0..9 * cin * cout).map(|_| rng.next_normal() * 0.3).collect();
        let input: Vec<f64> = (0..h * w * cin).map(|_| rng.next_normal()).collect();
        let probe: Vec<f64> = (0..h * w * cout).map(|_| rng.next_normal()).collect();

        let loss = |x: &[f64]| -> f64 {
            let mut out = vec![0.0; h * w * cout];
            conv3x3_forward(x, h, w, cin, cout, &kernels, None, &mut out);
            out.iter().zip(&probe).map(|(o, p)| o * p).sum()
        };

        let mut analytic = vec![0.0; h * w * cin];
        conv3x3_backward_input(&probe, h, w, cin, cout, &kernels, &mut analytic);

        let eps = 1e-6;
        for i in 0..input.len() {
            let mut plus = input.clone();
            let mut minus = input.clone();
            plus[i] += eps;
            minus[i] -= eps;
            let fd = (loss(&plus) - loss(&minus)) / (2.0 * eps);
            assert!((fd - analytic[i]).abs() < 1e-7, "coord {i}: fd {fd} vs {}", analytic[i]);
        }
    }

    #[test]
    fn conv_param_gradient_matches_finite_differences() {
        let mut rng = DetRng::new(6);
        let (h, w, cin, cout) = (3, 4, 2, 2);
        let kernels: Vec<f64> = (0..9 * cin * cout).map(|_| rng.next_normal() * 0.3).collect();
        let bias: Vec<f64> = (0..cout).map(|_| rng.next_normal() * 0.1).collect();
        let input: Vec<f64> = (0..h * w * cin).map(|_| rng.next_normal()).collect();
        let probe: Vec<f64> = (0..h * w * cout).map(|_| rng.next_normal()).collect();

        let loss = |k: &[f64], b: &[f64]| -> f64 {
            let mut out = vec![0.0; h * w * cout];
            conv3x3_forward(&input, h, w, cin, cout, k, Some(b), &mut out);
            out.iter().zip(&probe).map(|(o, p)| o * p).sum()
        };

        let mut gk = vec![0.0; kernels.len()];
        let mut gb = vec![0.0; cout];
        conv3x3_backward_params(&input, &probe, h, w, cin, cout, &mut gk, Some(&mut gb));

        let eps = 1e-6;
        for i in 0..kernels.len() {
            let mut plus = kernels.clone();
            let mut minus = kernels.clone();
            plus[i] += eps;
            minus[i] -= eps;
            let fd = (loss(&plus, &bias) - loss(&minus, &bias)) / (2.0 * eps);
            assert!((fd - gk[i]).abs() < 1e-7, "kernel {i}");
        }
        for i in 0..cout {
            let mut plus = bias.clone();
            let mut minus = bias.clone();
            plus[i] += eps;
            minus[i] -= eps;
            let fd = (loss(&kernels, &plus) - loss(&kernels, &minus)) / (2.0 * eps);
            assert!((fd - gb[i]).abs() < 1e-7, "bias {i}");
        }
    }

    #[test]
    fn pool_backward_is_transpose_of_forward() {
        let mut rng = DetRng::new(7);
        let (h, w, ch) = (5, 6, 2);
        let x: Vec<f64> = (0..h * w * ch).map(|_| rng.next_normal()).collect();
        let g: Vec<f64> = (0..(h / 2) * (w / 2) * ch).map(|_| rng.next_normal()).collect();
        let (y, _, _) = avgpool2_forward(&x, h, w, ch);
        let gx = avgpool2_backward(&g, h, w, ch);
        // <pool(x), g> == <x, pool^T(g)>
        let lhs: f64 = y.iter().zip(&g).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&gx).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
