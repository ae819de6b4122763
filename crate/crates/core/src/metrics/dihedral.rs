use crate::error::Result;
use crate::tensor::{split_batch, Real, Tensor};

/// The eight symmetries of the square acting on the two spatial axes of
/// `[.., H, W, C]` tensors.
///
/// Each element flips rows and/or columns and then optionally transposes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Dihedral {
    Identity,
    FlipH,
    FlipV,
    Rot180,
    /// Counter-clockwise quarter turn.
    Rot90,
    Rot270,
    /// Transpose about the anti-diagonal.
    Rot90FlipH,
    /// Transpose about the main diagonal.
    Rot90FlipV,
}

impl Dihedral {
    pub const ALL: [Dihedral; 8] = [
        Dihedral::Identity,
        Dihedral::FlipH,
        Dihedral::FlipV,
        Dihedral::Rot180,
        Dihedral::Rot90,
        Dihedral::Rot270,
        Dihedral::Rot90FlipH,
        Dihedral::Rot90FlipV,
    ];

    /// `(transpose, flip rows, flip columns)`
    fn parts(self) -> (bool, bool, bool) {
        match self {
            Dihedral::Identity => (false, false, false),
            Dihedral::FlipH => (false, false, true),
            Dihedral::FlipV => (false, true, false),
            Dihedral::Rot180 => (false, true, true),
            Dihedral::Rot90 => (true, false, true),
            Dihedral::Rot270 => (true, true, false),
            Dihedral::Rot90FlipH => (true, true, true),
            Dihedral::Rot90FlipV => (true, false, false),
        }
    }

    pub fn inverse(self) -> Self {
        match self {
            Dihedral::Rot90 => Dihedral::Rot270,
            Dihedral::Rot270 => Dihedral::Rot90,
            other => other,
        }
    }

    pub fn swaps_axes(self) -> bool {
        self.parts().0
    }

    pub fn index(self) -> usize {
        Dihedral::ALL.iter().position(|&d| d == self).expect("listed")
    }

    /// Apply to `[.., H, W, C]`; quarter turns produce `[.., W, H, C]`.
    pub fn apply<T: Real>(self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (batch, inner) = split_batch(x.shape(), 3)?;
        let (h, w, c) = (inner[0], inner[1], inner[2]);
        let (swap, fy, fx) = self.parts();
        let (ho, wo) = if swap { (w, h) } else { (h, w) };
        let src = x.data();
        let mut out = Vec::with_capacity(x.len());
        for b in 0..batch {
            let base = b * h * w * c;
            for i in 0..ho {
                for j in 0..wo {
                    let (r, q) = if swap { (j, i) } else { (i, j) };
                    let r = if fy { h - 1 - r } else { r };
                    let q = if fx { w - 1 - q } else { q };
                    let s = base + (r * w + q) * c;
                    out.extend_from_slice(&src[s..s + c]);
                }
            }
        }
        let mut shape = x.shape().to_vec();
        let n = shape.len();
        shape[n - 3] = ho;
        shape[n - 2] = wo;
        Tensor::new(&shape, out)
    }

    /// Apply to a `[H, W, T, C]` frame stack (spatial axes first).
    pub fn apply_frames<T: Real>(self, frames: &Tensor<T>) -> Result<Tensor<T>> {
        let s = frames.shape().to_vec();
        let merged = frames.clone().reshape(&[s[0], s[1], s[2] * s[3]])?;
        let y = self.apply(&merged)?;
        let (ho, wo) = (y.shape()[0], y.shape()[1]);
        y.reshape(&[ho, wo, s[2], s[3]])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quarter_turn_matches_hand_example() {
        // [[1, 2, 3], [4, 5, 6]] turned counter-clockwise is [[3, 6], [2, 5], [1, 4]].
        let x = Tensor::<f32>::new(&[2, 3, 1], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let y = Dihedral::Rot90.apply(&x).unwrap();
        assert_eq!(y.shape(), &[3, 2, 1]);
        assert_eq!(y.data(), &[3.0, 6.0, 2.0, 5.0, 1.0, 4.0]);
        let t = Dihedral::Rot90FlipV.apply(&x).unwrap();
        assert_eq!(t.data(), &[1.0, 4.0, 2.0, 5.0, 3.0, 6.0]);
    }

    #[test]
    fn frame_stack_transform_matches_per_frame() {
        let x = Tensor::<f32>::from_fn(&[3, 4, 2, 3], |i| i as f32);
        for d in Dihedral::ALL {
            let y = d.apply_frames(&x).unwrap();
            for t in 0..2 {
                let frame = Tensor::from_fn(&[3, 4, 3], |i| x.data()[(i / 3) * 6 + t * 3 + i % 3]);
                let expect = d.apply(&frame).unwrap();
                let got = Tensor::from_fn(expect.shape(), |i| y.data()[(i / 3) * 6 + t * 3 + i % 3]);
                assert_eq!(got, expect, "{d:?}");
            }
        }
    }
}
