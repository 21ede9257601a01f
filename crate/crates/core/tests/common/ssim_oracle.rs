use image::GrayImage;

use chartforge::metrics::SsimParams;

/// Mean over every window position of the SSIM of that window, with the
/// window weights applied directly. Nothing is shared with the library
/// beyond the kernel weights and the constants.
pub fn oracle(a: &GrayImage, b: &GrayImage, p: &SsimParams) -> f64 {
    let n = p.window.size();
    let k = p.window.kernel();
    let (w, h) = a.dimensions();
    let (c1, c2) = (p.c1(), p.c2());
    let mut total = 0.0;
    let mut windows = 0usize;
    for y0 in 0..=(h as usize - n) {
        for x0 in 0..=(w as usize - n) {
            let mut sx = 0.0;
            let mut sy = 0.0;
            let mut sxx = 0.0;
            let mut syy = 0.0;
            let mut sxy = 0.0;
            for dy in 0..n {
                for dx in 0..n {
                    let wt = k[dy] * k[dx];
                    let x = a.get_pixel((x0 + dx) as u32, (y0 + dy) as u32)[0] as f64;
                    let y = b.get_pixel((x0 + dx) as u32, (y0 + dy) as u32)[0] as f64;
                    sx += wt * x;
                    sy += wt * y;
                    sxx += wt * x * x;
                    syy += wt * y * y;
                    sxy += wt * x * y;
                }
            }
            let vx = sxx - sx * sx;
            let vy = syy - sy * sy;
            let cov = sxy - sx * sy;
            total += ((2.0 * sx * sy + c1) * (2.0 * cov + c2)) / ((sx * sx + sy * sy + c1) * (vx + vy + c2));
            windows += 1;
        }
    }
    total / windows as f64
}
