//! Slice stenosis against an independent chord search.

use carotid_core::analysis::{stenosis_diameter, stenosis_grade, ANGLE_WINDOW, SMOOTH_SIGMA};
use carotid_core::raster::{BinaryRaster, MaskPair};
use carotid_core::recon::Volume;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
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

/// Inside length of the full line through `c` at angle `phi`, by dense
/// sampling.
fn chord(field: &[f64], w: usize, h: usize, c: [f64; 2], phi: f64) -> f64 {
    let step = 0.01;
    let reach = (w + h) as f64;
    let n = (reach / step) as i64;
    (-n..=n)
        .filter(|&k| {
            let t = k as f64 * step;
            sample(field, w, h, c[0] + t * phi.cos(), c[1] + t * phi.sin()) >= 0.5
        })
        .count() as f64
        * step
}

fn brute_force(mab: &BinaryRaster, lib: &BinaryRaster) -> f64 {
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

fn eccentric_annulus(rng: &mut ChaCha8Rng) -> (BinaryRaster, BinaryRaster) {
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

#[test]
fn matches_brute_force_on_random_annuli() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..50 {
        let (mab, lib) = eccentric_annulus(&mut rng);
        let fast = stenosis_diameter(&mab, &lib, 0.1).unwrap().value;
        let slow = brute_force(&mab, &lib);
        assert!((fast - slow).abs() <= 0.02, "case {case}: {fast} vs {slow}");
    }
}

#[test]
fn concentric_five_four() {
    let n = 121;
    let disk =
        |r: f64| BinaryRaster::from_fn(n, n, |x, y| (x as f64 - 60.0).hypot(y as f64 - 60.0) <= r);
    let s = stenosis_diameter(&disk(50.0), &disk(40.0), 0.1).unwrap();
    assert!((s.value - 0.2).abs() <= 0.005, "{}", s.value);
}

#[test]
fn grade_is_max_of_slice_values() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 32;
    let mut voxels = Vec::new();
    let mut expected: f64 = 0.0;
    let mut count = 0;
    while count < 8 {
        let (mab, lib) = eccentric_annulus(&mut rng);
        if mab.width() != n {
            continue;
        }
        expected = expected.max(stenosis_diameter(&mab, &lib, 0.2).unwrap().value);
        voxels.extend(MaskPair::new(mab, lib).unwrap().label_raster());
        count += 1;
    }
    let vol = Volume::from_voxels([0.0; 3], 0.2, [n, n, 8], voxels, true).unwrap();
    assert_eq!(stenosis_grade(&vol).unwrap().grade, expected);
}

fn rot90(m: &BinaryRaster) -> BinaryRaster {
    let n = m.width();
    BinaryRaster::from_fn(n, n, |x, y| m.get(y, n - 1 - x))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn rotation_equivariant(seed in any::<u64>()) {
        let (mab, lib) = eccentric_annulus(&mut ChaCha8Rng::seed_from_u64(seed));
        let a = stenosis_diameter(&mab, &lib, 0.1).unwrap().value;
        let b = stenosis_diameter(&rot90(&mab), &rot90(&lib), 0.1).unwrap().value;
        prop_assert!((a - b).abs() <= 0.02, "{} vs {}", a, b);
    }

    #[test]
    fn pixel_size_does_not_matter(seed in any::<u64>(), px in 0.01f64..2.0) {
        let (mab, lib) = eccentric_annulus(&mut ChaCha8Rng::seed_from_u64(seed));
        let a = stenosis_diameter(&mab, &lib, 0.1).unwrap().value;
        let b = stenosis_diameter(&mab, &lib, px).unwrap().value;
        prop_assert_eq!(a, b);
        prop_assert!((0.0..=1.0).contains(&a));
    }
}
