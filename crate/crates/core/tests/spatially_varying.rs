use nfconv::convolution::{
    convolve_grid, mc_convolve_into, metrics, GridOptions, Sampling, ScaleMap,
};
use nfconv::fields::{GridAntiderivative, GridField, SignalField};
use nfconv::kernels::{
    fit_kernel, transform_kernel, FitConfig, MixtureKernel, TargetKernel, TransformSpec,
};
use nfconv::rng::seeded;
use nfconv::synthetic::smooth_image;

/// Per-pixel Monte Carlo of the locally scaled kernel, independent of the
/// batched sparse path.
fn scaled_reference(
    f: &SignalField,
    m: &nfconv::kernels::DiracMixture,
    map: &ScaleMap,
    res: usize,
    samples: usize,
) -> GridField {
    let dout = f.dout();
    let mut values = vec![0.0; res * res * dout];
    for j in 0..res {
        for i in 0..res {
            let x = [(i as f64 + 0.5) / res as f64, (j as f64 + 0.5) / res as f64];
            let s = map.scale_at(&x);
            let k = transform_kernel(m, &TransformSpec::uniform(2, s)).unwrap();
            let idx = j * res + i;
            let mut rng = seeded(99, idx as u64);
            mc_convolve_into(
                f,
                &MixtureKernel(&k),
                &x,
                samples,
                Sampling::Stratified,
                &mut rng,
                &mut values[idx * dout..(idx + 1) * dout],
            );
        }
    }
    GridField::new(vec![res, res], dout, values).unwrap()
}

#[test]
fn depth_driven_disk_blur_matches_monte_carlo() {
    let res = 48;
    let image = smooth_image(res, 5);
    let h = GridAntiderivative::new(&image, 1, 2, 0.5).unwrap();
    let f = SignalField::Grid(image);

    // Depth grows left to right: the left edge is nearly sharp and is handled
    // by the Monte Carlo fallback, the right edge is strongly blurred.
    let depth = GridField::from_fn(vec![res, res], 1, |x, o| o[0] = x[0]).unwrap();
    let map = ScaleMap::from_range(depth, 0.01, 0.3).unwrap();
    let disk = fit_kernel(&TargetKernel::disk(0.5, 2).unwrap(), 1, &FitConfig::new(64)).unwrap();
    let m = disk.mixture;

    let opts = GridOptions {
        scale_map: Some(&map),
        fallback_signal: Some(&f),
        ..GridOptions::default()
    };
    let out = convolve_grid(&h, &m, &[res, res], &opts).unwrap();
    assert!(out.stats.fallback_pixels > 0);
    assert!(out.stats.fallback_pixels < res * res / 4);
    assert_eq!(out.stats.evaluations_per_pixel, (m.len(), m.len()));

    let reference = scaled_reference(&f, &m, &map, res, 4096);
    let score = metrics(&out.output, &reference).unwrap();
    assert!(score.psnr >= 30.0, "PSNR {:.2} dB", score.psnr);

    // The blur gradient is visible: local variation shrinks with depth.
    let roughness = |cols: std::ops::Range<usize>| {
        let g = &out.output;
        let mut s = 0.0;
        for j in 0..res {
            for i in cols.clone() {
                s += (g.at(&[i + 1, j])[0] - g.at(&[i, j])[0]).abs();
            }
        }
        s
    };
    assert!(roughness(0..8) > 2.0 * roughness(res - 9..res - 1));

    let again = convolve_grid(&h, &m, &[res, res], &opts).unwrap();
    assert_eq!(again.output, out.output);
}
