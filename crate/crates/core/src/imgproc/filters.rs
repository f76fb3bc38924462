//! Small separable filters used by the channel and gradient code.

use crate::image::Image;

/// Separable triangle filter of radius `r` (kernel `1, 2, .., r+1, .., 2, 1`)
/// with reflected borders. `r == 0` is the identity.
pub fn tri_blur(src: &[f32], w: usize, h: usize, r: usize) -> Vec<f32> {
    if r == 0 {
        return src.to_vec();
    }
    let kernel: Vec<f32> = (0..=2 * r)
        .map(|i| (r + 1 - (i as isize - r as isize).unsigned_abs()) as f32)
        .collect();
    let norm = ((r + 1) * (r + 1)) as f32;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = 0.0;
            for (k, &kv) in kernel.iter().enumerate() {
                let xx = reflect(x as isize + k as isize - r as isize, w);
                acc += kv * row[xx];
            }
            tmp[y * w + x] = acc / norm;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for (k, &kv) in kernel.iter().enumerate() {
            let yy = reflect(y as isize + k as isize - r as isize, h);
            let (dst, srow) = (&mut out[y * w..(y + 1) * w], &tmp[yy * w..(yy + 1) * w]);
            for (d, s) in dst.iter_mut().zip(srow) {
                *d += kv * s;
            }
        }
        for v in &mut out[y * w..(y + 1) * w] {
            *v /= norm;
        }
    }
    out
}

/// Reflects an out-of-range index back into `[0, n)` (`-1 -> 0`, `n -> n-1`).
#[inline]
pub fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    let period = 2 * n;
    let mut i = i.rem_euclid(period);
    if i >= n {
        i = period - 1 - i;
    }
    i as usize
}

/// Centered differences `[-1, 0, 1]` with replicated borders.
pub fn centered_gradient(src: &[f32], w: usize, h: usize) -> (Vec<f32>, Vec<f32>) {
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    for y in 0..h {
        let ym = y.saturating_sub(1);
        let yp = (y + 1).min(h - 1);
        for x in 0..w {
            let xm = x.saturating_sub(1);
            let xp = (x + 1).min(w - 1);
            gx[y * w + x] = src[y * w + xp] - src[y * w + xm];
            gy[y * w + x] = src[yp * w + x] - src[ym * w + x];
        }
    }
    (gx, gy)
}

/// Pads every plane by `p` pixels on each side with reflection.
pub fn pad_reflect(img: &Image, p: usize) -> Image {
    let (w, h) = (img.width(), img.height());
    let (pw, ph) = (w + 2 * p, h + 2 * p);
    Image::from_fn(pw, ph, img.channels(), |x, y, c| {
        let sx = reflect(x as isize - p as isize, w);
        let sy = reflect(y as isize - p as isize, h);
        img.get(sx, sy, c)
    })
}

/// Average pooling by an integer factor; partial border blocks average over
/// the pixels they contain.
pub fn pool(src: &[f32], w: usize, h: usize, f: usize) -> (Vec<f32>, usize, usize) {
    if f == 1 {
        return (src.to_vec(), w, h);
    }
    let (ow, oh) = (w.div_ceil(f), h.div_ceil(f));
    let mut out = vec![0.0; ow * oh];
    let mut cnt = vec![0u32; ow * oh];
    for y in 0..h {
        for x in 0..w {
            let o = (y / f) * ow + x / f;
            out[o] += src[y * w + x];
            cnt[o] += 1;
        }
    }
    for (v, c) in out.iter_mut().zip(&cnt) {
        *v /= *c as f32;
    }
    (out, ow, oh)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reflect_indices() {
        assert_eq!(reflect(-1, 5), 0);
        assert_eq!(reflect(-2, 5), 1);
        assert_eq!(reflect(5, 5), 4);
        assert_eq!(reflect(6, 5), 3);
        assert_eq!(reflect(3, 5), 3);
        assert_eq!(reflect(-7, 1), 0);
    }

    #[test]
    fn tri_blur_preserves_constants_and_mass() {
        let src = vec![0.4; 30];
        for v in tri_blur(&src, 6, 5, 2) {
            assert!((v - 0.4).abs() < 1e-6);
        }
        let mut impulse = vec![0.0; 81];
        impulse[40] = 1.0;
        let out = tri_blur(&impulse, 9, 9, 1);
        assert!((out.iter().sum::<f32>() - 1.0).abs() < 1e-6);
        assert!((out[40] - 0.25).abs() < 1e-6);
    }

    #[test]
    fn pooling_handles_partial_blocks() {
        let src: Vec<f32> = (0..15).map(|v| v as f32).collect();
        let (out, ow, oh) = pool(&src, 5, 3, 2);
        assert_eq!((ow, oh), (3, 2));
        assert_eq!(out[0], (0.0 + 1.0 + 5.0 + 6.0) / 4.0);
        assert_eq!(out[2], (4.0 + 9.0) / 2.0);
        assert_eq!(out[5], 14.0);
    }
}
