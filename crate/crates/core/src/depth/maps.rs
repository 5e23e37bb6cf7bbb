use crate::error::{Error, Result};
use crate::geometry::CameraIntrinsics;

macro_rules! masked_map {
    ($(#[$meta:meta])* $name:ident, $unit:literal) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name {
            intrinsics: CameraIntrinsics,
            values: Vec<f64>,
            valid: Vec<bool>,
        }

        impl $name {
            #[doc = concat!("Row-major grid of ", $unit, ". Entries flagged valid but not finite and")]
            /// positive are marked invalid.
            pub fn new(intrinsics: CameraIntrinsics, values: Vec<f64>, valid: Vec<bool>) -> Result<Self> {
                let n = intrinsics.pixel_count();
                if values.len() != n || valid.len() != n {
                    return Err(Error::ShapeMismatch(format!(
                        "expected {} x {} = {n} pixels, got {} values and {} mask entries",
                        intrinsics.width,
                        intrinsics.height,
                        values.len(),
                        valid.len()
                    )));
                }
                let mut map = Self { intrinsics, values, valid };
                map.sanitize();
                Ok(map)
            }

            /// Treats non-positive or non-finite entries as invalid.
            pub fn from_values(intrinsics: CameraIntrinsics, values: Vec<f64>) -> Result<Self> {
                let valid = vec![true; values.len()];
                Self::new(intrinsics, values, valid)
            }

            pub fn invalid(intrinsics: CameraIntrinsics) -> Self {
                let n = intrinsics.pixel_count();
                Self { intrinsics, values: vec![0.0; n], valid: vec![false; n] }
            }

            pub fn from_fn(intrinsics: CameraIntrinsics, mut f: impl FnMut(usize, usize) -> Option<f64>) -> Self {
                let mut map = Self::invalid(intrinsics);
                for v in 0..intrinsics.height {
                    for u in 0..intrinsics.width {
                        map.set(u, v, f(u, v));
                    }
                }
                map
            }

            fn sanitize(&mut self) {
                for (x, ok) in self.values.iter_mut().zip(self.valid.iter_mut()) {
                    if !*ok || !x.is_finite() || *x <= 0.0 {
                        *ok = false;
                        *x = 0.0;
                    }
                }
            }

            pub fn intrinsics(&self) -> &CameraIntrinsics {
                &self.intrinsics
            }

            pub fn width(&self) -> usize {
                self.intrinsics.width
            }

            pub fn height(&self) -> usize {
                self.intrinsics.height
            }

            pub fn values(&self) -> &[f64] {
                &self.values
            }

            pub fn mask(&self) -> &[bool] {
                &self.valid
            }

            pub fn get(&self, u: usize, v: usize) -> Option<f64> {
                let i = v * self.intrinsics.width + u;
                self.valid[i].then(|| self.values[i])
            }

            /// Stores a value; `None` or a non-positive value clears the pixel.
            pub fn set(&mut self, u: usize, v: usize, value: Option<f64>) {
                let i = v * self.intrinsics.width + u;
                match value {
                    Some(x) if x.is_finite() && x > 0.0 => {
                        self.values[i] = x;
                        self.valid[i] = true;
                    }
                    _ => {
                        self.values[i] = 0.0;
                        self.valid[i] = false;
                    }
                }
            }

            pub fn valid_count(&self) -> usize {
                self.valid.iter().filter(|v| **v).count()
            }

            /// `(u, v, value)` for every valid pixel in row-major order.
            pub fn iter_valid(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
                let w = self.intrinsics.width;
                self.values
                    .iter()
                    .zip(&self.valid)
                    .enumerate()
                    .filter(|(_, (_, ok))| **ok)
                    .map(move |(i, (x, _))| (i % w, i / w, *x))
            }

            pub fn same_shape(&self, other_intrinsics: &CameraIntrinsics) -> bool {
                self.intrinsics.width == other_intrinsics.width
                    && self.intrinsics.height == other_intrinsics.height
            }
        }
    };
}

masked_map!(
    /// Per-pixel depth in meters with a validity mask.
    DepthMap,
    "meters"
);

masked_map!(
    /// Per-pixel disparity in pixels with a validity mask.
    DisparityMap,
    "pixels"
);

impl DepthMap {
    /// Invalidates pixels deeper than `max_depth`.
    pub fn clipped(&self, max_depth: f64) -> DepthMap {
        let mut out = self.clone();
        for i in 0..out.values.len() {
            if out.valid[i] && out.values[i] > max_depth {
                out.valid[i] = false;
                out.values[i] = 0.0;
            }
        }
        out
    }
}
