//! Slow, direct reference implementations used as test oracles.

use carotid_core::analysis::{ANGLE_WINDOW, SMOOTH_SIGMA};
use carotid_core::raster::BinaryRaster;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Direct (non-separable) Gaussian smoothing, zero outside the raster.
fn smooth(mask: &BinaryRaster, sigma: f64) -> Vec<f64> {
    let (w, h) = (mask.width() as isize, mask.height() as isize);
    let r = (3.0 * sigma).ceil() as isize;
    let g = |d: isize| (-0.5 * (d as f64 / sigma).powi(2)).exp();
    let norm: f64 = (-r..=r).map(g).sum::<f64>().powi(2);
    let mut out = vec![0.0; (w * h) as usize];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for dy in -r..=r {
                for dx in -r..=r {
                    if mask.get_signed(x + dx, y + dy) {
                        acc += g(dx) * g(dy);
                    }
                }
            }
            out[(y * w + x) as usize] = acc / norm;
        }
    }
    out
}

fn sample(field: &[f64], w: usize, h: usize, x: f64, y: f64) -> f64 {
    let at = |ix: f64, iy: f64| {
        if ix < 0.0 || iy < 0.0 || ix >= w as f64 || iy >= h as f64 {
            0.0
        } else {
            field[iy as usize * w + ix as usize]
        }
    };
    let (x0, y0) = (x.floor(), y.floor());
    let (fx, fy) = (x - x0, y - y0);
    at(x0, y0) * (1.0 - fx) * (1.0 - fy)
        + at(x0 + 1.0, y0) * fx * (1.0 - fy)
        + at(x0, y0 + 1.0) * (1.0 - fx) * fy
        + at(x0 + 1.0, y0 + 1.0) * fx * fy
}

/// Inside length of the whole line through `c` at angle `phi`, counted by
/// dense sampling.
fn chord(field: &[f64], w: usize, h: usize, c: [f64; 2], phi: f64) -> f64 {
    let step = 0.01;
    let n = ((w + h) as f64 / step) as i64;
    (-n..=n)
        .filter(|&k| {
            let t = k as f64 * step;
            sample(field, w, h, c[0] + t * phi.cos(), c[1] + t * phi.sin()) >= 0.5
        })
        .count() as f64
        * step
}

/// Diameter stenosis from exhaustive chord sampling at every whole degree.
pub fn stenosis(mab: &BinaryRaster, lib: &BinaryRaster) -> f64 {
    let (w, h) = (mab.width(), mab.height());
    let n = mab.count() as f64;
    let c = mab.pixels().fold([0.0, 0.0], |a, (x, y)| {
        [a[0] + x as f64 / n, a[1] + y as f64 / n]
    });
    let fm = smooth(mab, SMOOTH_SIGMA);
    let fl = smooth(lib, SMOOTH_SIGMA);
    let raw: Vec<f64> = (0..180)
        .map(|k| {
            let phi = (k as f64).to_radians();
            let lm = chord(&fm, w, h, c, phi);
            let ll = if lib.count() == 0 {
                0.0
            } else {
                chord(&fl, w, h, c, phi).min(lm)
            };
            (lm - ll) / lm
        })
        .collect();
    let win = ANGLE_WINDOW as i64;
    (0..180i64)
        .map(|k| {
            (-win..=win)
                .map(|j| raw[(k + j).rem_euclid(180) as usize])
                .sum::<f64>()
                / (2 * win + 1) as f64
        })
        .fold(0.0, f64::max)
}

/// Disk with an off-centre lumen, 16 to 32 pixels square.
pub fn eccentric_annulus(rng: &mut ChaCha8Rng) -> (BinaryRaster, BinaryRaster) {
    let n = rng.random_range(16..=32usize);
    let c = (n - 1) as f64 / 2.0 + rng.random_range(-1.0..1.0);
    let r_out = rng.random_range(0.3..0.45) * n as f64;
    let r_in = rng.random_range(0.3..0.8) * r_out;
    let max_off = (r_out - r_in - 1.0).max(0.0);
    let ang = rng.random_range(0.0..std::f64::consts::TAU);
    let off = rng.random_range(0.0..=1.0) * max_off;
    let (lx, ly) = (c + off * ang.cos(), c + off * ang.sin());
    let mab = BinaryRaster::from_fn(n, n, |x, y| (x as f64 - c).hypot(y as f64 - c) <= r_out);
    let lib = BinaryRaster::from_fn(n, n, |x, y| {
        mab.get(x, y) && (x as f64 - lx).hypot(y as f64 - ly) <= r_in
    });
    (mab, lib)
}

/// A noisy blob, so boundaries look like segmentations.
pub fn random_mask(rng: &mut ChaCha8Rng, w: usize, h: usize) -> BinaryRaster {
    let (cx, cy) = (
        rng.random_range(0.0..w as f64),
        rng.random_range(0.0..h as f64),
    );
    let r = rng.random_range(1.0..8.0);
    let p = rng.random_range(0.0..0.15);
    let mut m = BinaryRaster::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let inside = (x as f64 - cx).hypot(y as f64 - cy) <= r;
            m.set(x, y, inside ^ (rng.random::<f64>() < p));
        }
    }
    m
}

pub fn dice(p: &BinaryRaster, l: &BinaryRaster) -> f64 {
    let (mut both, mut a, mut b) = (0, 0, 0);
    for y in 0..p.height() {
        for x in 0..p.width() {
            a += p.get(x, y) as usize;
            b += l.get(x, y) as usize;
            both += (p.get(x, y) && l.get(x, y)) as usize;
        }
    }
    if a + b == 0 {
        1.0
    } else {
        2.0 * both as f64 / (a + b) as f64
    }
}

/// Set pixels touching an unset or out-of-raster 8-neighbour.
pub fn boundary(m: &BinaryRaster) -> Vec<(i64, i64)> {
    let (w, h) = (m.width() as i64, m.height() as i64);
    let on = |x: i64, y: i64| x >= 0 && y >= 0 && x < w && y < h && m.get(x as usize, y as usize);
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let edge = (-1..=1).any(|dy| (-1..=1).any(|dx| !on(x + dx, y + dy)));
            if on(x, y) && edge {
                out.push((x, y));
            }
        }
    }
    out
}

fn directed(a: &[(i64, i64)], b: &[(i64, i64)]) -> Vec<f64> {
    a.iter()
        .map(|&(ax, ay)| {
            let best = b
                .iter()
                .map(|&(bx, by)| (ax - bx).pow(2) + (ay - by).pow(2))
                .min()
                .unwrap();
            (best as f64).sqrt()
        })
        .collect()
}

fn p95(mut d: Vec<f64>) -> f64 {
    d.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let pos = 0.95 * (d.len() - 1) as f64;
    let (i, j) = (pos.floor() as usize, pos.ceil() as usize);
    d[i] + (pos - i as f64) * (d[j] - d[i])
}

/// `(hausdorff, hd95)` between two non-empty boundary sets.
pub fn hausdorff_pair(a: &[(i64, i64)], b: &[(i64, i64)]) -> (f64, f64) {
    let ab = directed(a, b);
    let ba = directed(b, a);
    let h = ab.iter().chain(&ba).cloned().fold(0.0, f64::max);
    (h, p95(ab).max(p95(ba)))
}

/// Diseased iff some window of `k` consecutive flags is all true.
pub fn has_run(flags: &[bool], k: usize) -> bool {
    flags.len() >= k && (0..=flags.len() - k).any(|s| flags[s..s + k].iter().all(|&f| f))
}
