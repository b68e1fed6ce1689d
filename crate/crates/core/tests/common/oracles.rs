//! Direct-loop reference implementations, written independently of the
//! library's separable-convolution code paths.

/// Row-major grayscale image.
#[derive(Clone, Debug)]
pub struct Img {
    pub h: usize,
    pub w: usize,
    pub px: Vec<f64>,
}

impl Img {
    pub fn new(h: usize, w: usize, f: impl Fn(usize, usize) -> f64) -> Img {
        let mut px = Vec::with_capacity(h * w);
        for y in 0..h {
            for x in 0..w {
                px.push(f(y, x));
            }
        }
        Img { h, w, px }
    }

    pub fn at(&self, y: usize, x: usize) -> f64 {
        self.px[y * self.w + x]
    }

    /// 2×2 mean downsampling, dropping an odd last row/column.
    pub fn half(&self) -> Img {
        Img::new(self.h / 2, self.w / 2, |y, x| {
            (self.at(2 * y, 2 * x) + self.at(2 * y, 2 * x + 1) + self.at(2 * y + 1, 2 * x) + self.at(2 * y + 1, 2 * x + 1)) / 4.0
        })
    }
}

/// Full 2-D Gaussian window, normalized over all taps.
fn gauss2d(n: usize, sigma: f64) -> Vec<Vec<f64>> {
    let c = (n as f64 - 1.0) / 2.0;
    let mut k = vec![vec![0.0; n]; n];
    let mut total = 0.0;
    for (i, row) in k.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let d2 = (i as f64 - c).powi(2) + (j as f64 - c).powi(2);
            *v = (-d2 / (2.0 * sigma * sigma)).exp();
            total += *v;
        }
    }
    k.iter_mut().flatten().for_each(|v| *v /= total);
    k
}

/// Per-window `(luminance·contrast-structure, contrast-structure)` terms over valid windows.
fn ssim_terms(a: &Img, b: &Img) -> Vec<(f64, f64)> {
    let n = 11.min(a.h).min(a.w);
    let g = gauss2d(n, 1.5);
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let mut out = Vec::new();
    for y0 in 0..=a.h - n {
        for x0 in 0..=a.w - n {
            let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for i in 0..n {
                for j in 0..n {
                    let (u, v, wgt) = (a.at(y0 + i, x0 + j), b.at(y0 + i, x0 + j), g[i][j]);
                    ma += wgt * u;
                    mb += wgt * v;
                    saa += wgt * u * u;
                    sbb += wgt * v * v;
                    sab += wgt * u * v;
                }
            }
            let (va, vb, cov) = (saa - ma * ma, sbb - mb * mb, sab - ma * mb);
            let cs = (2.0 * cov + c2) / (va + vb + c2);
            let lum = (2.0 * ma * mb + c1) / (ma * ma + mb * mb + c1);
            out.push((lum * cs, cs));
        }
    }
    out
}

/// Mean SSIM over valid 11×11 Gaussian (σ = 1.5) windows, `L = 1`.
pub fn ssim(a: &Img, b: &Img) -> f64 {
    let t = ssim_terms(a, b);
    t.iter().map(|v| v.0).sum::<f64>() / t.len() as f64
}

/// Five-scale MS-SSIM with 2×2 average downsampling; scales whose extent
/// drops below the window are dropped and the exponents renormalized.
pub fn ms_ssim(a: &Img, b: &Img) -> f64 {
    let weights = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];
    let mut scales = 1;
    while scales < 5 && a.h.min(a.w) >> scales >= 11 {
        scales += 1;
    }
    let total: f64 = weights[..scales].iter().sum();
    let (mut a, mut b) = (a.clone(), b.clone());
    let mut value = 1.0;
    for (s, w) in weights[..scales].iter().enumerate() {
        let t = ssim_terms(&a, &b);
        let n = t.len() as f64;
        let term = if s + 1 == scales {
            t.iter().map(|v| v.0).sum::<f64>() / n
        } else {
            t.iter().map(|v| v.1).sum::<f64>() / n
        };
        value *= term.max(0.0).powf(w / total);
        a = a.half();
        b = b.half();
    }
    value
}

/// Sobel response at every pixel with mirrored (edge-excluded) borders.
pub fn sobel(img: &Img, horizontal: bool) -> Img {
    let mirror = |i: isize, n: usize| -> usize {
        let n = n as isize;
        let mut i = i;
        if i < 0 {
            i = -i;
        }
        if i >= n {
            i = 2 * (n - 1) - i;
        }
        i as usize
    };
    Img::new(img.h, img.w, |y, x| {
        let p = |dy: isize, dx: isize| img.at(mirror(y as isize + dy, img.h), mirror(x as isize + dx, img.w));
        if horizontal {
            (p(-1, 1) + 2.0 * p(0, 1) + p(1, 1)) - (p(-1, -1) + 2.0 * p(0, -1) + p(1, -1))
        } else {
            (p(1, -1) + 2.0 * p(1, 0) + p(1, 1)) - (p(-1, -1) + 2.0 * p(-1, 0) + p(-1, 1))
        }
    })
}

/// Mutual information in bits via `Σ p(x,y) log2(p(x,y) / (p(x) p(y)))`.
pub fn mutual_information(a: &[u8], b: &[u8]) -> f64 {
    use std::collections::HashMap;
    let n = a.len() as f64;
    let mut joint: HashMap<(u8, u8), f64> = HashMap::new();
    let (mut pa, mut pb) = ([0.0f64; 256], [0.0f64; 256]);
    for (&x, &y) in a.iter().zip(b) {
        *joint.entry((x, y)).or_default() += 1.0 / n;
        pa[x as usize] += 1.0 / n;
        pb[y as usize] += 1.0 / n;
    }
    joint.iter().map(|(&(x, y), &p)| p * (p / (pa[x as usize] * pb[y as usize])).log2()).sum()
}

pub fn entropy(a: &[u8]) -> f64 {
    let mut p = [0.0f64; 256];
    for &x in a {
        p[x as usize] += 1.0 / a.len() as f64;
    }
    p.iter().filter(|&&v| v > 0.0).map(|v| -v * v.log2()).sum()
}
