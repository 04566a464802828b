use std::f64::consts::TAU;

use explab_core::measure::{sample_point, tally};
use explab_core::orbit::{EscapePolicy, DEFAULT_RE_THRESHOLD};
use explab_core::render::parameter_pixel_class;
use explab_core::{
    classify_parameter, density_scan, render_dynamical_plane, render_parameter_plane, write_ppm, Complex, DensityCell,
    Palette, Param, ParamTag, ViewRect,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// sha256 of the 64x64 parameter plane over [-4, 4]^2 at budget 200, delta 1.
const GOLDEN_64: &str = "7d8447a785a13423a97cfad523bc85a9b617b7690eaac4df32ac3a616311588b";

fn pool(threads: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap()
}

fn two_pi_i() -> Param {
    Param::from_parts(0.0, TAU).unwrap()
}

#[test]
fn density_is_thread_independent() {
    let run = || density_scan(two_pi_i(), 1.0, &[0.01, 0.001], &[20, 40, 80], 2000, 42).unwrap();
    let reports: Vec<String> = [1, 3, 4].map(|t| serde_json::to_string(&pool(t).install(run)).unwrap()).into();
    assert!(reports.iter().all(|r| *r == reports[0]));
}

#[test]
fn density_counts_survive_a_serial_audit() {
    let (radii, budgets, samples) = ([0.01, 0.001], [20, 40, 80], 3000);
    let rep = density_scan(two_pi_i(), 1.0, &radii, &budgets, samples, 42).unwrap();
    assert!(rep.is_budget_monotone());
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for (j, &r) in radii.iter().enumerate() {
        let audit: Vec<Param> = (0..samples / 100)
            .map(|_| Param::new(sample_point(two_pi_i(), r, 42, j, rng.gen_range(0..samples))).unwrap())
            .collect();
        let cells = tally(&audit, 1.0, &budgets, DEFAULT_RE_THRESHOLD);
        for (b, cell) in budgets.iter().zip(cells) {
            let mut serial = DensityCell::default();
            for &lam in &audit {
                match classify_parameter(lam, &EscapePolicy::new(DEFAULT_RE_THRESHOLD, *b).unwrap(), 1.0).unwrap().tag {
                    ParamTag::Attracting { .. } => serial.n_attracting += 1,
                    ParamTag::Escaping { .. } => serial.n_escaping += 1,
                    ParamTag::NonRecurrentCandidate { .. } => serial.n_candidate += 1,
                    ParamTag::Undecided => serial.n_undecided += 1,
                }
            }
            assert_eq!(
                (cell.n_attracting, cell.n_escaping, cell.n_candidate, cell.n_undecided),
                (serial.n_attracting, serial.n_escaping, serial.n_candidate, serial.n_undecided),
                "radius {r} budget {b}"
            );
        }
    }
}

/// Near a non-recurrent seed a definite portion of samples is not
/// Delta-non-recurrent.
#[test]
fn candidates_do_not_fill_the_disk() {
    let rep = density_scan(two_pi_i(), 1.0, &[1e-3, 1e-4], &[20, 40, 80], 2000, 5).unwrap();
    for row in rep.candidate_fractions() {
        assert!(*row.last().unwrap() < 1.0, "{row:?}");
    }
}

#[test]
fn same_seed_same_samples() {
    let a = sample_point(two_pi_i(), 0.01, 42, 0, 17);
    assert_eq!(a, sample_point(two_pi_i(), 0.01, 42, 0, 17));
    assert_ne!(a, sample_point(two_pi_i(), 0.01, 43, 0, 17));
}

fn small_plane() -> (ViewRect, EscapePolicy, Palette) {
    (
        ViewRect::new(-4.0, 4.0, -4.0, 4.0, 64, 64).unwrap(),
        EscapePolicy::new(DEFAULT_RE_THRESHOLD, 200).unwrap(),
        Palette::default(),
    )
}

#[test]
fn golden_parameter_plane() {
    let (rect, pol, palette) = small_plane();
    let img = render_parameter_plane(&rect, &pol, 1.0, &palette);
    let digest: String = Sha256::digest(img.to_ppm()).iter().map(|b| format!("{b:02x}")).collect();
    assert_eq!(digest, GOLDEN_64);
}

#[test]
fn render_is_thread_independent() {
    let rect = ViewRect::new(-4.0, 4.0, -4.0, 4.0, 200, 130).unwrap();
    let pol = EscapePolicy::new(DEFAULT_RE_THRESHOLD, 100).unwrap();
    let palette = Palette::default();
    let images: Vec<_> = [1, 4, 7].map(|t| pool(t).install(|| render_parameter_plane(&rect, &pol, 1.0, &palette))).into();
    assert!(images.iter().all(|img| img.pixels == images[0].pixels));
    let lam = Param::from_parts(-1.0, 0.0).unwrap();
    let dyn1 = pool(1).install(|| render_dynamical_plane(lam, &rect, &pol));
    let dyn4 = pool(4).install(|| render_dynamical_plane(lam, &rect, &pol));
    assert_eq!(dyn1.pixels, dyn4.pixels);
}

/// Tiled output equals a pixel-by-pixel evaluation, including ragged edge
/// tiles.
#[test]
fn tiles_have_no_seams() {
    let rect = ViewRect::new(-3.0, 1.0, -2.0, 2.5, 150, 97).unwrap();
    let pol = EscapePolicy::new(DEFAULT_RE_THRESHOLD, 80).unwrap();
    let palette = Palette::default();
    let img = render_parameter_plane(&rect, &pol, 0.5, &palette);
    for y in 0..97 {
        for x in 0..150 {
            let direct = parameter_pixel_class(rect.pixel_center(x, y), &pol, 0.5)
                .map_or(palette.undecided, |c| palette.class_color(&c));
            assert_eq!(img.get(x, y), direct, "pixel ({x}, {y})");
        }
    }
}

#[test]
fn random_pixels_match_direct_classification() {
    let (rect, pol, palette) = small_plane();
    let img = render_parameter_plane(&rect, &pol, 1.0, &palette);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let (x, y) = (rng.gen_range(0..64), rng.gen_range(0..64));
        let lam = Param::new(rect.pixel_center(x, y)).unwrap();
        let cls = classify_parameter(lam, &pol, 1.0).unwrap();
        assert_eq!(img.get(x, y), palette.class_color(&cls));
    }
}

#[test]
fn ppm_is_written_atomically() {
    let (rect, pol, palette) = small_plane();
    let img = render_parameter_plane(&rect, &pol, 1.0, &palette);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("plane.ppm");
    std::fs::write(&path, b"stale").unwrap();
    write_ppm(&img, &path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    assert!(bytes.starts_with(b"P6\n64 64\n255\n"));
    assert_eq!(bytes.len(), 13 + 64 * 64 * 3);
    let entries: Vec<_> = std::fs::read_dir(dir.path()).unwrap().collect();
    assert_eq!(entries.len(), 1, "temporary files left behind");
}

#[test]
fn pixel_centres_cover_the_rect() {
    let rect = ViewRect::new(-4.0, 4.0, -4.0, 4.0, 8, 8).unwrap();
    assert_eq!(rect.pixel_center(0, 0), Complex::new(-3.5, 3.5));
    assert_eq!(rect.pixel_center(7, 7), Complex::new(3.5, -3.5));
}
