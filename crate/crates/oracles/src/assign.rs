/// Anchor centers at `(i + 0.5)·stride`, row-major, every shape per cell.
pub fn anchors(image_w: u32, image_h: u32, stride: u32, shapes: &[(f64, f64)]) -> Vec<[f64; 4]> {
    let mut out = Vec::new();
    for row in 0..image_h / stride {
        for col in 0..image_w / stride {
            for &(w, h) in shapes {
                let s = stride as f64;
                out.push([(col as f64 + 0.5) * s, (row as f64 + 0.5) * s, w, h]);
            }
        }
    }
    out
}

/// Double loop over every anchor and ground truth. Each anchor goes to the
/// ground truth with the highest value among those reaching `threshold`,
/// ties to the lower index.
pub fn positive_counts(
    anchors: &[[f64; 4]],
    gts: &[[f64; 4]],
    threshold: f64,
    metric: impl Fn(&[f64; 4], &[f64; 4]) -> f64,
) -> Vec<usize> {
    let mut counts = vec![0; gts.len()];
    for a in anchors {
        let values: Vec<f64> = gts.iter().map(|g| metric(a, g)).collect();
        let mut owner = None;
        for (gi, &v) in values.iter().enumerate() {
            if v < threshold {
                continue;
            }
            match owner {
                Some(o) if values[o] >= v => {}
                _ => owner = Some(gi),
            }
        }
        if let Some(o) = owner {
            counts[o] += 1;
        }
    }
    counts
}
