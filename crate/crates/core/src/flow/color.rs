//! Flow colorization: orientation as hue, magnitude as saturation, value 1.

use super::FlowField;
use crate::error::{invalid, Result};
use crate::image::Image;

/// 99th-percentile (nearest rank) flow magnitude, at least 1 px.
pub fn default_max_mag(f: &FlowField) -> f32 {
    let mut mags: Vec<f32> = (0..f.u().len())
        .filter(|&i| f.is_valid(i))
        .map(|i| f.u()[i].hypot(f.v()[i]))
        .collect();
    if mags.is_empty() {
        return 1.0;
    }
    let rank = ((0.99 * mags.len() as f64).ceil() as usize).clamp(1, mags.len()) - 1;
    let (_, p, _) = mags.select_nth_unstable_by(rank, f32::total_cmp);
    p.max(1.0)
}

/// Hue in degrees `[0, 360)`, saturation and value in `[0, 1]`.
pub fn hsv_to_rgb(h: f32, s: f32, v: f32) -> [f32; 3] {
    let h = h.rem_euclid(360.0) / 60.0;
    let sector = (h.floor() as usize).min(5);
    let f = h - sector as f32;
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match sector {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

/// Inverse of [`hsv_to_rgb`] for value 1 colors; hue is 0 for grays.
pub fn rgb_to_hue_sat(rgb: [f32; 3]) -> (f32, f32) {
    let [r, g, b] = rgb;
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let d = max - min;
    let s = if max > 0.0 { d / max } else { 0.0 };
    if d <= 0.0 {
        return (0.0, s);
    }
    let h = if max == r {
        ((g - b) / d).rem_euclid(6.0)
    } else if max == g {
        (b - r) / d + 2.0
    } else {
        (r - g) / d + 4.0
    };
    ((h * 60.0).rem_euclid(360.0), s)
}

/// Invalid pixels are rendered white (zero saturation).
pub fn flow_to_rgb(f: &FlowField, max_mag: Option<f32>) -> Result<Image> {
    for i in 0..f.u().len() {
        if f.is_valid(i) && !(f.u()[i].is_finite() && f.v()[i].is_finite()) {
            return Err(invalid!("non-finite flow at pixel {i}"));
        }
    }
    let max_mag = match max_mag {
        Some(m) if m > 0.0 && m.is_finite() => m,
        Some(m) => return Err(invalid!("max_mag must be positive and finite, got {m}")),
        None => default_max_mag(f),
    };
    let (w, h) = (f.width(), f.height());
    let n = w * h;
    let mut data = vec![0.0f32; 3 * n];
    for i in 0..n {
        let (u, v) = (f.u()[i], f.v()[i]);
        let rgb = if f.is_valid(i) {
            let hue = (v as f64).atan2(u as f64).to_degrees().rem_euclid(360.0) as f32;
            let sat = (u.hypot(v) / max_mag).min(1.0);
            hsv_to_rgb(hue, sat, 1.0)
        } else {
            [1.0; 3]
        };
        for c in 0..3 {
            data[c * n + i] = rgb[c].clamp(0.0, 1.0);
        }
    }
    Image::new(w, h, 3, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_flow_is_white() {
        let img = flow_to_rgb(&FlowField::constant(3, 2, 0.0, 0.0), None).unwrap();
        assert!(img.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn saturated_red_at_hue_zero() {
        let img = flow_to_rgb(&FlowField::constant(1, 1, 4.0, 0.0), Some(4.0)).unwrap();
        assert_eq!(img.data(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn quarter_turn_shifts_hue() {
        let a = flow_to_rgb(&FlowField::constant(1, 1, 2.0, 1.0), Some(5.0)).unwrap();
        let b = flow_to_rgb(&FlowField::constant(1, 1, -1.0, 2.0), Some(5.0)).unwrap();
        let (ha, sa) = rgb_to_hue_sat([a.data()[0], a.data()[1], a.data()[2]]);
        let (hb, sb) = rgb_to_hue_sat([b.data()[0], b.data()[1], b.data()[2]]);
        assert!(((hb - ha).rem_euclid(360.0) - 90.0).abs() < 1e-3);
        assert!((sa - sb).abs() < 1e-6);
    }

    #[test]
    fn hsv_round_trip() {
        for k in 0..72 {
            let h = k as f32 * 5.0;
            let (h2, s2) = rgb_to_hue_sat(hsv_to_rgb(h, 0.6, 1.0));
            let dh = (h2 - h).rem_euclid(360.0);
            assert!(dh.min(360.0 - dh) < 1e-3, "{h} -> {h2}");
            assert!((s2 - 0.6).abs() < 1e-5);
        }
    }

    #[test]
    fn percentile_rule() {
        let f = FlowField::from_fn(10, 10, |x, y| if x + y == 0 { (100.0, 0.0) } else { (0.5, 0.0) }).unwrap();
        assert_eq!(default_max_mag(&f), 1.0);
        let g = FlowField::from_fn(10, 10, |x, y| ((x + 10 * y) as f32, 0.0)).unwrap();
        assert_eq!(default_max_mag(&g), 98.0);
        assert!(flow_to_rgb(&g, Some(0.0)).is_err());
    }
}
