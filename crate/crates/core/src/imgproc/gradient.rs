use crate::error::{invalid, Result};
use crate::image::{EdgeMap, Image};

use super::filters::centered_gradient;

/// Raw gradient magnitude: per pixel, the maximum over channels of
/// `sqrt(gx^2 + gy^2)` with `[-1, 0, 1]` differences, divided by the
/// image-wide maximum. A flat image maps to all zeros.
pub fn gradient_magnitude(img: &Image) -> Result<EdgeMap> {
    let (w, h) = (img.width(), img.height());
    if w == 0 || h == 0 {
        return Err(invalid!("empty image"));
    }
    let mut mag = vec![0.0f32; w * h];
    for c in 0..img.channels() {
        let (gx, gy) = centered_gradient(img.plane(c), w, h);
        for ((m, x), y) in mag.iter_mut().zip(&gx).zip(&gy) {
            *m = m.max(x.hypot(*y));
        }
    }
    let max = mag.iter().copied().fold(0.0f32, f32::max);
    if max > 0.0 {
        for m in &mut mag {
            *m /= max;
        }
    }
    Ok(EdgeMap::from_clamped(w, h, mag))
}
