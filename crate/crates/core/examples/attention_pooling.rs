//! Attention pooling of frame features: the weights, the pooled bag feature,
//! and how the weights shift when one frame is made to stand out.

use echomil::model::attention::{attention_aggregate, mean_aggregate};
use ndarray::{array, Array2};

fn main() {
    // Five frames with 4-d features; frame 3 carries an extra signal.
    let mut h = Array2::from_shape_fn((5, 4), |(j, k)| ((j * 4 + k) as f64 * 0.37).sin() * 0.2);
    let v = Array2::from_shape_fn((3, 4), |(m, k)| if m == k { 1.5 } else { 0.1 });
    let w = array![1.0, 0.5, -0.2];

    let (z, alpha, _) = attention_aggregate(h.view(), v.view(), w.view());
    println!("weights      {alpha:.3}");
    println!("pooled       {z:.3}");

    h.row_mut(3)[0] += 2.0;
    let (z, alpha, _) = attention_aggregate(h.view(), v.view(), w.view());
    println!("frame 3 boosted:");
    println!("weights      {alpha:.3}");
    println!("pooled       {z:.3}");

    let (z, alpha) = mean_aggregate(h.view());
    println!("mean pooling {alpha:.3} -> {z:.3}");
}
