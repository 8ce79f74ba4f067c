use ndarray::Array2;

/// Sinusoidal position table: `sin(pos / 10000^(h / d))` at even `h`,
/// `cos(pos / 10000^((h - 1) / d))` at odd `h`.
pub fn positional_encoding(n_positions: usize, d: usize) -> Array2<f64> {
    Array2::from_shape_fn((n_positions, d), |(pos, h)| {
        let even = h - h % 2;
        let angle = pos as f64 / 10000f64.powf(even as f64 / d as f64);
        if h % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}
