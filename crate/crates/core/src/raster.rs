//! Binary masks and wall/lumen mask pairs.

use crate::error::{Error, Result};

/// Row-major boolean raster; pixel `(x, y)` has its centre at `(x, y)` in
/// pixel units.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryRaster {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl BinaryRaster {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::LengthMismatch {
                expected: width * height,
                actual: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    /// Out-of-bounds coordinates read as background.
    #[inline]
    pub fn get_signed(&self, x: isize, y: isize) -> bool {
        x >= 0
            && y >= 0
            && (x as usize) < self.width
            && (y as usize) < self.height
            && self.get(x as usize, y as usize)
    }

    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.data[y * self.width + x] = value;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&v| v)
    }

    pub fn same_shape(&self, other: &BinaryRaster) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Coordinates of set pixels in row-major order.
    pub fn pixels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.data
            .iter()
            .enumerate()
            .filter(|(_, &v)| v)
            .map(move |(i, _)| (i % self.width, i / self.width))
    }

    /// Number of set pixels of `self` that are not set in `other`.
    pub fn count_outside(&self, other: &BinaryRaster) -> usize {
        self.data
            .iter()
            .zip(&other.data)
            .filter(|(&a, &b)| a && !b)
            .count()
    }

    pub fn and(&self, other: &BinaryRaster) -> BinaryRaster {
        BinaryRaster {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a && b)
                .collect(),
        }
    }

    /// Set pixels with at least one of their 8 neighbours unset or outside
    /// the raster.
    pub fn boundary(&self) -> BinaryRaster {
        BinaryRaster::from_fn(self.width, self.height, |x, y| {
            if !self.get(x, y) {
                return false;
            }
            let (x, y) = (x as isize, y as isize);
            (-1..=1)
                .any(|dy| (-1..=1).any(|dx| (dx, dy) != (0, 0) && !self.get_signed(x + dx, y + dy)))
        })
    }

    /// 8-connected components, largest first (ties by first pixel in scan
    /// order).
    pub fn components(&self) -> Vec<BinaryRaster> {
        let mut label = vec![usize::MAX; self.data.len()];
        let mut comps: Vec<(usize, usize, Vec<usize>)> = Vec::new();
        let mut stack = Vec::new();
        for start in 0..self.data.len() {
            if !self.data[start] || label[start] != usize::MAX {
                continue;
            }
            let id = comps.len();
            let mut members = Vec::new();
            label[start] = id;
            stack.push(start);
            while let Some(i) = stack.pop() {
                members.push(i);
                let (x, y) = ((i % self.width) as isize, (i / self.width) as isize);
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        let (nx, ny) = (x + dx, y + dy);
                        if self.get_signed(nx, ny) {
                            let j = ny as usize * self.width + nx as usize;
                            if label[j] == usize::MAX {
                                label[j] = id;
                                stack.push(j);
                            }
                        }
                    }
                }
            }
            comps.push((members.len(), start, members));
        }
        comps.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        comps
            .into_iter()
            .map(|(_, _, members)| {
                let mut r = BinaryRaster::new(self.width, self.height);
                for i in members {
                    r.data[i] = true;
                }
                r
            })
            .collect()
    }

    /// Bilinear interpolation of the 0/1 field at a sub-pixel position.
    #[inline]
    pub fn bilinear(&self, x: f64, y: f64) -> f64 {
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = x - x0;
        let fy = y - y0;
        let (ix, iy) = (x0 as isize, y0 as isize);
        let v = |dx: isize, dy: isize| self.get_signed(ix + dx, iy + dy) as u8 as f64;
        (1.0 - fy) * ((1.0 - fx) * v(0, 0) + fx * v(1, 0))
            + fy * ((1.0 - fx) * v(0, 1) + fx * v(1, 1))
    }

    /// Pixel-unit centroid of the set pixels.
    pub fn centroid(&self) -> Option<[f64; 2]> {
        let mut n = 0usize;
        let (mut sx, mut sy) = (0.0, 0.0);
        for (x, y) in self.pixels() {
            n += 1;
            sx += x as f64;
            sy += y as f64;
        }
        (n > 0).then(|| [sx / n as f64, sy / n as f64])
    }

    /// Inclusive bounding box `(x0, y0, x1, y1)` of the set pixels.
    pub fn bounding_box(&self) -> Option<(usize, usize, usize, usize)> {
        let mut bb: Option<(usize, usize, usize, usize)> = None;
        for (x, y) in self.pixels() {
            bb = Some(match bb {
                None => (x, y, x, y),
                Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
            });
        }
        bb
    }
}

/// Class of a pixel in a wall/lumen label raster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
#[repr(u8)]
pub enum Label {
    Background = 0,
    Wall = 1,
    Lumen = 2,
}

impl Label {
    pub fn from_u8(v: u8) -> Option<Label> {
        match v {
            0 => Some(Label::Background),
            1 => Some(Label::Wall),
            2 => Some(Label::Lumen),
            _ => None,
        }
    }
}

/// Outer-wall (MAB) and lumen (LIB) regions of one frame, `lib ⊆ mab`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskPair {
    pub mab: BinaryRaster,
    pub lib: BinaryRaster,
}

impl MaskPair {
    pub fn new(mab: BinaryRaster, lib: BinaryRaster) -> Result<Self> {
        if !mab.same_shape(&lib) {
            return Err(Error::GeometryMismatch(format!(
                "MAB mask is {}x{}, LIB mask is {}x{}",
                mab.width, mab.height, lib.width, lib.height
            )));
        }
        let outside = lib.count_outside(&mab);
        if outside > 0 {
            return Err(Error::LumenOutsideVessel { outside });
        }
        Ok(Self { mab, lib })
    }

    /// Splits a raster of [`Label`] values; unknown values are rejected.
    pub fn from_labels(width: usize, height: usize, labels: &[u8]) -> Result<Self> {
        if labels.len() != width * height {
            return Err(Error::LengthMismatch {
                expected: width * height,
                actual: labels.len(),
            });
        }
        if let Some(bad) = labels.iter().find(|&&v| Label::from_u8(v).is_none()) {
            return Err(crate::error::invalid(format!("unknown label value {bad}")));
        }
        let mab = BinaryRaster::from_vec(width, height, labels.iter().map(|&v| v >= 1).collect())?;
        let lib = BinaryRaster::from_vec(width, height, labels.iter().map(|&v| v == 2).collect())?;
        Ok(Self { mab, lib })
    }

    pub fn width(&self) -> usize {
        self.mab.width
    }

    pub fn height(&self) -> usize {
        self.mab.height
    }

    /// 0 background, 1 wall (MAB without LIB), 2 lumen.
    pub fn label_raster(&self) -> Vec<u8> {
        self.mab
            .data
            .iter()
            .zip(&self.lib.data)
            .map(|(&m, &l)| {
                if l {
                    Label::Lumen as u8
                } else if m {
                    Label::Wall as u8
                } else {
                    Label::Background as u8
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(w: usize, x0: usize, x1: usize) -> BinaryRaster {
        BinaryRaster::from_fn(w, w, |x, y| (x0..x1).contains(&x) && (x0..x1).contains(&y))
    }

    #[test]
    fn boundary_of_square() {
        let s = square(6, 1, 5);
        let b = s.boundary();
        assert_eq!(b.count(), 12);
        assert!(!b.get(2, 2));
        assert!(b.get(1, 1));
    }

    #[test]
    fn components_sorted_by_size() {
        let mut r = square(10, 0, 3);
        r.set(8, 8, true);
        r.set(9, 9, true);
        let comps = r.components();
        assert_eq!(comps.len(), 2);
        assert_eq!(comps[0].count(), 9);
        assert_eq!(comps[1].count(), 2);
    }

    #[test]
    fn bilinear_field() {
        let r = square(4, 1, 2);
        assert_eq!(r.bilinear(1.0, 1.0), 1.0);
        assert_eq!(r.bilinear(1.5, 1.0), 0.5);
        assert_eq!(r.bilinear(1.5, 1.5), 0.25);
        assert_eq!(r.bilinear(-3.0, 0.0), 0.0);
    }

    #[test]
    fn mask_pair_validation() {
        let mab = square(8, 1, 7);
        let lib = square(8, 2, 6);
        let pair = MaskPair::new(mab.clone(), lib.clone()).unwrap();
        let labels = pair.label_raster();
        assert_eq!(labels.iter().filter(|&&v| v == 2).count(), 16);
        assert_eq!(labels.iter().filter(|&&v| v == 1).count(), 20);
        assert_eq!(MaskPair::from_labels(8, 8, &labels).unwrap(), pair);

        assert!(matches!(
            MaskPair::new(lib, mab),
            Err(Error::LumenOutsideVessel { outside: 20 })
        ));
        assert!(MaskPair::from_labels(2, 1, &[0, 3]).is_err());
    }
}
