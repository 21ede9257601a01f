//! Windowed structural similarity on 8-bit grayscale rasters.

use image::imageops::FilterType;
use image::{DynamicImage, GrayImage};
use serde::{Deserialize, Serialize};

use super::MetricError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SsimWindow {
    Gaussian { size: usize, sigma: f64 },
    Uniform { size: usize },
}

impl SsimWindow {
    pub const GAUSSIAN: SsimWindow = SsimWindow::Gaussian { size: 11, sigma: 1.5 };
    pub const UNIFORM: SsimWindow = SsimWindow::Uniform { size: 8 };

    pub fn size(&self) -> usize {
        match *self {
            SsimWindow::Gaussian { size, .. } | SsimWindow::Uniform { size } => size,
        }
    }

    /// Normalised 1-D kernel; the 2-D window is its outer product.
    pub fn kernel(&self) -> Vec<f64> {
        match *self {
            SsimWindow::Uniform { size } => vec![1.0 / size as f64; size],
            SsimWindow::Gaussian { size, sigma } => {
                let center = (size as f64 - 1.0) / 2.0;
                let raw: Vec<f64> = (0..size)
                    .map(|i| {
                        let d = i as f64 - center;
                        (-(d * d) / (2.0 * sigma * sigma)).exp()
                    })
                    .collect();
                let total: f64 = raw.iter().sum();
                raw.into_iter().map(|v| v / total).collect()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsimParams {
    pub k1: f64,
    pub k2: f64,
    pub dynamic_range: f64,
    pub window: SsimWindow,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self {
            k1: 0.01,
            k2: 0.03,
            dynamic_range: 255.0,
            window: SsimWindow::GAUSSIAN,
        }
    }
}

impl SsimParams {
    pub fn uniform() -> Self {
        Self {
            window: SsimWindow::UNIFORM,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), MetricError> {
        if !(self.k1 > 0.0 && self.k2 > 0.0) {
            return Err(MetricError::InvalidParams("k1 and k2 must be positive".into()));
        }
        if !(self.dynamic_range > 0.0) {
            return Err(MetricError::InvalidParams("dynamic range must be positive".into()));
        }
        match self.window {
            SsimWindow::Gaussian { size, sigma } if size % 2 == 0 || size == 0 || !(sigma > 0.0) => {
                Err(MetricError::InvalidParams("gaussian window needs odd size and positive sigma".into()))
            }
            SsimWindow::Uniform { size: 0 } => Err(MetricError::InvalidParams("window size is zero".into())),
            _ => Ok(()),
        }
    }

    pub fn c1(&self) -> f64 {
        (self.k1 * self.dynamic_range).powi(2)
    }

    pub fn c2(&self) -> f64 {
        (self.k2 * self.dynamic_range).powi(2)
    }
}

/// Luma of RGBA composited over white, rounded to 8 bits.
pub fn to_gray(img: &DynamicImage) -> GrayImage {
    let rgba = img.to_rgba8();
    GrayImage::from_fn(rgba.width(), rgba.height(), |x, y| {
        let [r, g, b, a] = rgba.get_pixel(x, y).0;
        let alpha = f64::from(a) / 255.0;
        let over = |c: u8| f64::from(c) * alpha + 255.0 * (1.0 - alpha);
        let luma = 0.299 * over(r) + 0.587 * over(g) + 0.114 * over(b);
        image::Luma([luma.round().clamp(0.0, 255.0) as u8])
    })
}

pub fn decode_png(bytes: &[u8]) -> Result<DynamicImage, MetricError> {
    image::load_from_memory(bytes).map_err(|e| MetricError::DecodeFailure(e.to_string()))
}

struct Plane {
    w: usize,
    h: usize,
    data: Vec<f64>,
}

fn plane(img: &GrayImage, f: impl Fn(f64) -> f64) -> Plane {
    Plane {
        w: img.width() as usize,
        h: img.height() as usize,
        data: img.pixels().map(|p| f(f64::from(p.0[0]))).collect(),
    }
}

fn product(a: &GrayImage, b: &GrayImage) -> Plane {
    Plane {
        w: a.width() as usize,
        h: a.height() as usize,
        data: a
            .pixels()
            .zip(b.pixels())
            .map(|(x, y)| f64::from(x.0[0]) * f64::from(y.0[0]))
            .collect(),
    }
}

/// Valid-mode separable filtering: output is (w-k+1) x (h-k+1).
fn filter(p: &Plane, k: &[f64]) -> Plane {
    let n = k.len();
    let ow = p.w + 1 - n;
    let oh = p.h + 1 - n;
    let mut horiz = vec![0.0; ow * p.h];
    for y in 0..p.h {
        let row = &p.data[y * p.w..(y + 1) * p.w];
        for x in 0..ow {
            horiz[y * ow + x] = k.iter().zip(&row[x..x + n]).map(|(w, v)| w * v).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = k
                .iter()
                .enumerate()
                .map(|(i, w)| w * horiz[(y + i) * ow + x])
                .sum();
        }
    }
    Plane { w: ow, h: oh, data: out }
}

struct Maps {
    ssim: Vec<f64>,
    cs: Vec<f64>,
}

fn ssim_maps(a: &GrayImage, b: &GrayImage, p: &SsimParams) -> Result<Maps, MetricError> {
    p.validate()?;
    if a.dimensions() != b.dimensions() {
        return Err(MetricError::ShapeMismatch {
            a: a.dimensions(),
            b: b.dimensions(),
        });
    }
    let size = p.window.size();
    let (w, h) = a.dimensions();
    if (w as usize) < size || (h as usize) < size {
        return Err(MetricError::DegenerateImage {
            width: w,
            height: h,
            window: size,
        });
    }
    let k = p.window.kernel();
    let mu_a = filter(&plane(a, |v| v), &k);
    let mu_b = filter(&plane(b, |v| v), &k);
    let e_aa = filter(&plane(a, |v| v * v), &k);
    let e_bb = filter(&plane(b, |v| v * v), &k);
    let e_ab = filter(&product(a, b), &k);
    let (c1, c2) = (p.c1(), p.c2());
    let n = mu_a.data.len();
    let mut ssim = Vec::with_capacity(n);
    let mut cs = Vec::with_capacity(n);
    for i in 0..n {
        let (ma, mb) = (mu_a.data[i], mu_b.data[i]);
        let var_a = e_aa.data[i] - ma * ma;
        let var_b = e_bb.data[i] - mb * mb;
        let cov = e_ab.data[i] - ma * mb;
        let num = (2.0 * ma * mb + c1) * (2.0 * cov + c2);
        ssim.push(num / ((ma * ma + mb * mb + c1) * (var_a + var_b + c2)));
        cs.push((2.0 * cov + c2) / (var_a + var_b + c2));
    }
    Ok(Maps { ssim, cs })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Mean SSIM of two equally sized grayscale images, in [-1, 1].
pub fn ssim_gray(a: &GrayImage, b: &GrayImage, p: &SsimParams) -> Result<f64, MetricError> {
    Ok(mean(&ssim_maps(a, b, p)?.ssim))
}

/// Mean of the contrast-structure term alone.
pub fn contrast_structure(a: &GrayImage, b: &GrayImage, p: &SsimParams) -> Result<f64, MetricError> {
    Ok(mean(&ssim_maps(a, b, p)?.cs))
}

/// SSIM of a candidate against a reference. The candidate is converted to
/// grayscale and resized (bilinear) to the reference geometry first.
pub fn ssim(reference: &DynamicImage, candidate: &DynamicImage, p: &SsimParams) -> Result<f64, MetricError> {
    let r = to_gray(reference);
    let mut c = to_gray(candidate);
    if c.dimensions() != r.dimensions() {
        c = image::imageops::resize(&c, r.width(), r.height(), FilterType::Triangle);
    }
    ssim_gray(&r, &c, p)
}

pub fn ssim_png(reference: &[u8], candidate: &[u8], p: &SsimParams) -> Result<f64, MetricError> {
    ssim(&decode_png(reference)?, &decode_png(candidate)?, p)
}

/// Clamp to the reported [0, 1] range.
pub fn clamp_unit(v: f64) -> f64 {
    v.clamp(0.0, 1.0)
}

#[cfg(test)]
pub(crate) mod oracle {
    use super::*;

    /// Direct per-window SSIM with two-pass statistics.
    pub fn brute_force(a: &GrayImage, b: &GrayImage, p: &SsimParams) -> f64 {
        let k = p.window.kernel();
        let n = k.len();
        let (w, h) = (a.width() as usize, a.height() as usize);
        let (c1, c2) = (p.c1(), p.c2());
        let px = |img: &GrayImage, x: usize, y: usize| f64::from(img.get_pixel(x as u32, y as u32).0[0]);
        let mut total = 0.0;
        let mut count = 0usize;
        for y0 in 0..=h - n {
            for x0 in 0..=w - n {
                let (mut ma, mut mb) = (0.0, 0.0);
                for j in 0..n {
                    for i in 0..n {
                        let wt = k[i] * k[j];
                        ma += wt * px(a, x0 + i, y0 + j);
                        mb += wt * px(b, x0 + i, y0 + j);
                    }
                }
                let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
                for j in 0..n {
                    for i in 0..n {
                        let wt = k[i] * k[j];
                        let da = px(a, x0 + i, y0 + j) - ma;
                        let db = px(b, x0 + i, y0 + j) - mb;
                        va += wt * da * da;
                        vb += wt * db * db;
                        cov += wt * da * db;
                    }
                }
                total += (2.0 * ma * mb + c1) * (2.0 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                count += 1;
            }
        }
        total / count as f64
    }
}
