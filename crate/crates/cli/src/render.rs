/// Viridis sampled at five evenly spaced points.
const VIRIDIS: [[f64; 3]; 5] = [
    [68.0, 1.0, 84.0],
    [59.0, 82.0, 139.0],
    [33.0, 145.0, 140.0],
    [94.0, 201.0, 98.0],
    [253.0, 231.0, 37.0],
];

pub fn viridis(t: f64) -> [u8; 3] {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let x = t * (VIRIDIS.len() - 1) as f64;
    let i = (x.floor() as usize).min(VIRIDIS.len() - 2);
    let f = x - i as f64;
    let mut rgb = [0u8; 3];
    for (k, out) in rgb.iter_mut().enumerate() {
        let v = VIRIDIS[i][k] + f * (VIRIDIS[i + 1][k] - VIRIDIS[i][k]);
        *out = v.round() as u8;
    }
    rgb
}

/// Binary PPM (P6) of `values`, row 0 at the top. NaN cells and cells whose
/// mask value is zero are black; the colour range defaults to the min and
/// max of the remaining cells.
pub fn render_ppm(
    height: usize,
    width: usize,
    values: &[f32],
    mask: Option<&[f32]>,
    vmin: Option<f64>,
    vmax: Option<f64>,
) -> Vec<u8> {
    let shown = |i: usize| values[i].is_finite() && mask.is_none_or(|m| m[i] != 0.0);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in (0..values.len()).filter(|&i| shown(i)) {
        lo = lo.min(values[i] as f64);
        hi = hi.max(values[i] as f64);
    }
    let lo = vmin.unwrap_or(lo);
    let hi = vmax.unwrap_or(hi);

    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    out.reserve(values.len() * 3);
    for i in 0..height * width {
        if !shown(i) {
            out.extend_from_slice(&[0, 0, 0]);
            continue;
        }
        let t = if hi > lo { (values[i] as f64 - lo) / (hi - lo) } else { 0.0 };
        out.extend_from_slice(&viridis(t));
    }
    out
}
