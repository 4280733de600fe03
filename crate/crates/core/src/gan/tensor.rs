use super::real::Real;

/// Dense NCHW tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<F> {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<F>,
}

impl<F: Real> Tensor<F> {
    pub fn zeros(n: usize, c: usize, h: usize, w: usize) -> Self {
        Tensor { n, c, h, w, data: vec![F::zero(); n * c * h * w] }
    }

    pub fn from_vec(n: usize, c: usize, h: usize, w: usize, data: Vec<F>) -> Self {
        assert_eq!(data.len(), n * c * h * w, "tensor data length");
        Tensor { n, c, h, w, data }
    }

    pub fn shape(&self) -> [usize; 4] {
        [self.n, self.c, self.h, self.w]
    }

    pub fn sample_len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn plane(&self) -> usize {
        self.h * self.w
    }

    pub fn sample(&self, i: usize) -> &[F] {
        let s = self.sample_len();
        &self.data[i * s..(i + 1) * s]
    }

    pub fn sample_mut(&mut self, i: usize) -> &mut [F] {
        let s = self.sample_len();
        &mut self.data[i * s..(i + 1) * s]
    }

    /// Concatenates along the channel axis.
    pub fn concat_channels(&self, other: &Tensor<F>) -> Tensor<F> {
        assert_eq!((self.n, self.h, self.w), (other.n, other.h, other.w), "concat shape");
        let mut out = Tensor::zeros(self.n, self.c + other.c, self.h, self.w);
        for i in 0..self.n {
            let dst = out.sample_mut(i);
            let a = self.sample(i);
            dst[..a.len()].copy_from_slice(a);
            dst[a.len()..].copy_from_slice(other.sample(i));
        }
        out
    }

    /// The first `c` channels of every sample.
    pub fn leading_channels(&self, c: usize) -> Tensor<F> {
        assert!(c <= self.c);
        let len = c * self.plane();
        let mut data = Vec::with_capacity(self.n * len);
        for i in 0..self.n {
            data.extend_from_slice(&self.sample(i)[..len]);
        }
        Tensor::from_vec(self.n, c, self.h, self.w, data)
    }

    pub fn map(&self, f: impl Fn(F) -> F) -> Tensor<F> {
        Tensor { n: self.n, c: self.c, h: self.h, w: self.w, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn add_assign(&mut self, other: &Tensor<F>) {
        assert_eq!(self.shape(), other.shape());
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + b;
        }
    }

    pub fn cast<G: Real>(&self) -> Tensor<G> {
        Tensor { n: self.n, c: self.c, h: self.h, w: self.w, data: self.data.iter().map(|v| G::c(v.as_f64())).collect() }
    }
}

/// Unfolds one `c x h x w` image into a `(c*k*k) x (ho*wo)` patch matrix.
#[allow(clippy::too_many_arguments)]
pub fn im2col<F: Real>(x: &[F], c: usize, h: usize, w: usize, k: usize, stride: usize, pad: usize, ho: usize, wo: usize, cols: &mut [F]) {
    let p = ho * wo;
    debug_assert_eq!(cols.len(), c * k * k * p);
    for ch in 0..c {
        let plane = &x[ch * h * w..(ch + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = &mut cols[((ch * k + ky) * k + kx) * p..][..p];
                for oy in 0..ho {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    let dst = &mut row[oy * wo..(oy + 1) * wo];
                    if iy < 0 || iy >= h as isize {
                        dst.fill(F::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                    // Output columns whose input column lies inside the row.
                    let lo = (pad.saturating_sub(kx)).div_ceil(stride).min(wo);
                    let hi = ((w + pad).saturating_sub(kx)).div_ceil(stride).clamp(lo, wo);
                    dst[..lo].fill(F::zero());
                    dst[hi..].fill(F::zero());
                    if lo == hi {
                        continue;
                    }
                    let start = lo * stride + kx - pad;
                    if stride == 1 {
                        dst[lo..hi].copy_from_slice(&src[start..start + hi - lo]);
                    } else {
                        for (d, s) in dst[lo..hi].iter_mut().zip(src[start..].iter().step_by(stride)) {
                            *d = *s;
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters-and-adds a patch matrix back into an image.
#[allow(clippy::too_many_arguments)]
pub fn col2im<F: Real>(cols: &[F], c: usize, h: usize, w: usize, k: usize, stride: usize, pad: usize, ho: usize, wo: usize, x: &mut [F]) {
    let p = ho * wo;
    for ch in 0..c {
        let plane = &mut x[ch * h * w..(ch + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = &cols[((ch * k + ky) * k + kx) * p..][..p];
                for oy in 0..ho {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                    let src = &row[oy * wo..(oy + 1) * wo];
                    let lo = (pad.saturating_sub(kx)).div_ceil(stride).min(wo);
                    let hi = ((w + pad).saturating_sub(kx)).div_ceil(stride).clamp(lo, wo);
                    if lo == hi {
                        continue;
                    }
                    let start = lo * stride + kx - pad;
                    for (d, &v) in dst[start..].iter_mut().step_by(stride).zip(&src[lo..hi]) {
                        *d = *d + v;
                    }
                }
            }
        }
    }
}
