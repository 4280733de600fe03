use super::FaceImage;

/// Summed-area tables of pixel values and squared pixel values.
///
/// Stored with a zero row and column in front, so `sum` at padded position
/// `(y + 1, x + 1)` covers the inclusive rectangle `(0, 0)..=(y, x)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntegralImage {
    width: usize,
    height: usize,
    sum: Vec<u64>,
    sq_sum: Vec<u64>,
}

impl IntegralImage {
    /// Builds the tables from the first channel of `img` (callers pass grayscale).
    pub fn new(img: &FaceImage) -> Self {
        let (w, h, ch) = img.shape();
        let stride = w + 1;
        let mut sum = vec![0u64; (w + 1) * (h + 1)];
        let mut sq_sum = vec![0u64; (w + 1) * (h + 1)];
        let px = img.pixels();
        for y in 0..h {
            let mut row = 0u64;
            let mut row_sq = 0u64;
            for x in 0..w {
                let v = u64::from(px[(y * w + x) * ch]);
                row += v;
                row_sq += v * v;
                sum[(y + 1) * stride + x + 1] = sum[y * stride + x + 1] + row;
                sq_sum[(y + 1) * stride + x + 1] = sq_sum[y * stride + x + 1] + row_sq;
            }
        }
        IntegralImage { width: w, height: h, sum, sq_sum }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Inclusive cumulative sum over rows `0..=row`, columns `0..=col`.
    pub fn at(&self, row: usize, col: usize) -> u64 {
        self.sum[(row + 1) * (self.width + 1) + col + 1]
    }

    /// Unpadded table, `table[row][col]` as in [`IntegralImage::at`].
    pub fn table(&self) -> Vec<Vec<u64>> {
        (0..self.height).map(|r| (0..self.width).map(|c| self.at(r, c)).collect()).collect()
    }

    /// Pixel sum of the `w x h` rectangle with top-left `(x, y)`, in four lookups.
    #[inline]
    pub fn rect_sum(&self, x: usize, y: usize, w: usize, h: usize) -> u64 {
        let s = self.width + 1;
        let (a, b) = (y * s + x, y * s + x + w);
        let (c, d) = ((y + h) * s + x, (y + h) * s + x + w);
        self.sum[d] + self.sum[a] - self.sum[b] - self.sum[c]
    }

    #[inline]
    pub fn rect_sq_sum(&self, x: usize, y: usize, w: usize, h: usize) -> u64 {
        let s = self.width + 1;
        let (a, b) = (y * s + x, y * s + x + w);
        let (c, d) = ((y + h) * s + x, (y + h) * s + x + w);
        self.sq_sum[d] + self.sq_sum[a] - self.sq_sum[b] - self.sq_sum[c]
    }
}
