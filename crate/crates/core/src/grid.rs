//! Grid data types and the discrete energies defined on them.
//!
//! Images are stored row-major. Neighbourhoods are truncated at the image
//! boundary, so a border pixel has fewer than `|V|` neighbours and the total
//! number of directed neighbour pairs is [`directed_edge_count`] rather than
//! `N |V|`.

use crate::error::{invalid, Error, Result};

/// A real-valued image on a rectangular grid, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(invalid(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(invalid(format!(
                "image data has {} values, expected {}x{} = {}",
                data.len(),
                width,
                height,
                width * height
            )));
        }
        if let Some(n) = data.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!("non-finite intensity at pixel {n}")));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Builds an image from `f(row, col)`.
    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for row in 0..height {
            for col in 0..width {
                data.push(f(row, col));
            }
        }
        Self::new(width, height, data)
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    /// Number of pixels `N`.
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(
            self.width,
            self.height,
            self.data.iter().map(|v| v * factor).collect(),
        )
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Number of distinct intensity values (exact comparison).
    pub fn distinct_count(&self) -> usize {
        let mut sorted = self.data.clone();
        sorted.sort_by(f64::total_cmp);
        sorted.dedup();
        sorted.len()
    }

    pub(crate) fn from_raw(width: usize, height: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), width * height);
        Self {
            width,
            height,
            data,
        }
    }

    pub(crate) fn check_shape(&self, width: usize, height: usize) -> Result<()> {
        if self.shape() != (width, height) {
            return Err(Error::ShapeMismatch {
                expected: (width, height),
                found: self.shape(),
            });
        }
        Ok(())
    }
}

/// Class assignment `z`, one label in `1..=K` per pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelField {
    width: usize,
    height: usize,
    labels: Vec<u32>,
    num_classes: usize,
}

impl LabelField {
    pub fn new(width: usize, height: usize, labels: Vec<u32>, num_classes: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(invalid(format!(
                "label field dimensions must be positive, got {width}x{height}"
            )));
        }
        if num_classes < 2 {
            return Err(invalid(format!(
                "need at least 2 classes, got {num_classes}"
            )));
        }
        if labels.len() != width * height {
            return Err(invalid(format!(
                "label field has {} labels, expected {}",
                labels.len(),
                width * height
            )));
        }
        if let Some(n) = labels
            .iter()
            .position(|&l| l == 0 || l as usize > num_classes)
        {
            return Err(invalid(format!(
                "label {} at pixel {n} outside 1..={num_classes}",
                labels[n]
            )));
        }
        Ok(Self {
            width,
            height,
            labels,
            num_classes,
        })
    }

    /// Every pixel in class 1.
    pub fn uniform(width: usize, height: usize, num_classes: usize) -> Result<Self> {
        Self::new(width, height, vec![1; width * height], num_classes)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn get(&self, row: usize, col: usize) -> u32 {
        self.labels[row * self.width + col]
    }

    /// `|S_k|` for k = 1..=K, indexed from zero.
    pub fn class_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.num_classes];
        for &l in &self.labels {
            sizes[l as usize - 1] += 1;
        }
        sizes
    }

    /// Number of pixels whose label differs between `self` and `other`.
    pub fn count_differences(&self, other: &LabelField) -> usize {
        self.labels
            .iter()
            .zip(&other.labels)
            .filter(|(a, b)| a != b)
            .count()
    }

    pub(crate) fn from_raw(
        width: usize,
        height: usize,
        labels: Vec<u32>,
        num_classes: usize,
    ) -> Self {
        Self {
            width,
            height,
            labels,
            num_classes,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NeighborhoodKind {
    FourConnected2D,
    /// Declared for volumes; not implemented.
    SixConnected3D,
}

/// Neighbour structure `V(n)` given as symmetric `(dy, dx)` displacements.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Neighborhood {
    kind: NeighborhoodKind,
    offsets: Vec<(isize, isize)>,
}

impl Neighborhood {
    pub fn new(kind: NeighborhoodKind) -> Result<Self> {
        match kind {
            NeighborhoodKind::FourConnected2D => Ok(Self::four_connected()),
            NeighborhoodKind::SixConnected3D => Err(Error::Unsupported(
                "six-connected 3D neighbourhoods are not implemented".into(),
            )),
        }
    }

    pub fn four_connected() -> Self {
        Self {
            kind: NeighborhoodKind::FourConnected2D,
            offsets: vec![(-1, 0), (0, -1), (0, 1), (1, 0)],
        }
    }

    pub fn kind(&self) -> NeighborhoodKind {
        self.kind
    }

    pub fn offsets(&self) -> &[(isize, isize)] {
        &self.offsets
    }

    /// `|V|`, the neighbourhood size of an interior pixel.
    pub fn size(&self) -> usize {
        self.offsets.len()
    }

    fn neighbours(
        &self,
        width: usize,
        height: usize,
        row: usize,
        col: usize,
    ) -> impl Iterator<Item = usize> + '_ {
        self.offsets.iter().filter_map(move |&(dy, dx)| {
            let r = row.checked_add_signed(dy)?;
            let c = col.checked_add_signed(dx)?;
            (r < height && c < width).then_some(r * width + c)
        })
    }
}

impl Default for Neighborhood {
    fn default() -> Self {
        Self::four_connected()
    }
}

/// Forward differences `(∇_h x, ∇_v x)`.
///
/// `dh` is row-major with `width - 1` entries per row; `dv` is row-major with
/// `height - 1` rows of `width` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientField {
    pub width: usize,
    pub height: usize,
    pub dh: Vec<f64>,
    pub dv: Vec<f64>,
}

fn count_pairs(z: &LabelField, nb: &Neighborhood, equal: bool) -> u64 {
    let (w, h) = z.shape();
    let labels = z.labels();
    let mut total = 0u64;
    for row in 0..h {
        for col in 0..w {
            let l = labels[row * w + col];
            total += nb
                .neighbours(w, h, row, col)
                .filter(|&m| (labels[m] == l) == equal)
                .count() as u64;
        }
    }
    total
}

/// Potts Hamiltonian: number of directed neighbour pairs with equal labels.
pub fn hamiltonian(z: &LabelField, nb: &Neighborhood) -> u64 {
    count_pairs(z, nb, true)
}

/// Number of directed neighbour pairs with different labels.
pub fn complement_hamiltonian(z: &LabelField, nb: &Neighborhood) -> u64 {
    count_pairs(z, nb, false)
}

/// `Σ_n |V(n)|` on a `width × height` grid with boundary truncation.
pub fn directed_edge_count(width: usize, height: usize, nb: &Neighborhood) -> u64 {
    let mut total = 0u64;
    for row in 0..height {
        for col in 0..width {
            total += nb.neighbours(width, height, row, col).count() as u64;
        }
    }
    total
}

pub fn gradient(x: &Image) -> GradientField {
    let (w, h) = x.shape();
    let d = x.data();
    let mut dh = Vec::with_capacity((w - 1) * h);
    for row in 0..h {
        for col in 0..w - 1 {
            dh.push(d[row * w + col + 1] - d[row * w + col]);
        }
    }
    let mut dv = Vec::with_capacity(w * (h - 1));
    for row in 0..h - 1 {
        for col in 0..w {
            dv.push(d[(row + 1) * w + col] - d[row * w + col]);
        }
    }
    GradientField {
        width: w,
        height: h,
        dh,
        dv,
    }
}

/// `||∇x||_0`: number of nonzero horizontal plus vertical differences.
pub fn l0_gradient_norm(x: &Image) -> usize {
    let g = gradient(x);
    g.dh.iter().chain(&g.dv).filter(|&&v| v != 0.0).count()
}

/// TV contribution of one row: `Σ_j sqrt(dh² + dv²)` with missing
/// differences set to zero.
pub(crate) fn tv_row(data: &[f64], width: usize, height: usize, row: usize) -> f64 {
    let base = row * width;
    let mut acc = 0.0;
    for col in 0..width {
        let v = data[base + col];
        let dh = if col + 1 < width {
            data[base + col + 1] - v
        } else {
            0.0
        };
        let dv = if row + 1 < height {
            data[base + width + col] - v
        } else {
            0.0
        };
        acc += (dh * dh + dv * dv).sqrt();
    }
    acc
}

/// Isotropic total variation `||∇x||_{1-2}`.
///
/// Per-row partial sums are accumulated in row order, so the value is
/// independent of how rows are distributed across workers.
pub fn tv_isotropic(x: &Image) -> f64 {
    let (w, h) = x.shape();
    (0..h).map(|row| tv_row(x.data(), w, h, row)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(w: usize, h: usize, l: &[u32], k: usize) -> LabelField {
        LabelField::new(w, h, l.to_vec(), k).unwrap()
    }

    fn img(w: usize, h: usize, d: &[f64]) -> Image {
        Image::new(w, h, d.to_vec()).unwrap()
    }

    #[test]
    fn hamiltonian_examples() {
        let nb = Neighborhood::four_connected();
        assert_eq!(hamiltonian(&labels(2, 2, &[1, 1, 1, 1], 2), &nb), 8);
        assert_eq!(hamiltonian(&labels(2, 2, &[1, 2, 2, 1], 2), &nb), 0);
        // 1x3 is one row of three pixels: pairs (0,1),(1,0) equal; (1,2),(2,1) not.
        assert_eq!(hamiltonian(&labels(3, 1, &[1, 1, 2], 2), &nb), 2);
    }

    #[test]
    fn complement_examples() {
        let nb = Neighborhood::four_connected();
        assert_eq!(
            complement_hamiltonian(&labels(2, 2, &[1, 1, 1, 1], 2), &nb),
            0
        );
        assert_eq!(
            complement_hamiltonian(&labels(2, 2, &[1, 2, 2, 1], 2), &nb),
            8
        );
        assert_eq!(complement_hamiltonian(&labels(3, 1, &[1, 1, 2], 2), &nb), 2);
    }

    #[test]
    fn edge_counts() {
        let nb = Neighborhood::four_connected();
        assert_eq!(directed_edge_count(2, 2, &nb), 8);
        assert_eq!(directed_edge_count(3, 1, &nb), 4);
        assert_eq!(directed_edge_count(1, 3, &nb), 4);
        assert_eq!(directed_edge_count(3, 3, &nb), 24);
        assert_eq!(directed_edge_count(1, 1, &nb), 0);
        for (w, h) in [(5, 7), (16, 16), (1, 9)] {
            assert_eq!(
                directed_edge_count(w, h, &nb),
                2 * ((w as u64 - 1) * h as u64 + w as u64 * (h as u64 - 1))
            );
        }
    }

    #[test]
    fn gradient_examples() {
        let g = gradient(&Image::filled(3, 2, 0.7).unwrap());
        assert!(g.dh.iter().chain(&g.dv).all(|&v| v == 0.0));
        assert_eq!((g.dh.len(), g.dv.len()), (2 * 2, 3));

        let g = gradient(&img(2, 1, &[0.0, 1.0]));
        assert_eq!(g.dh, vec![1.0]);
        assert!(g.dv.is_empty());

        let g = gradient(&img(2, 2, &[0.0, 0.0, 0.0, 1.0]));
        assert_eq!(g.dh, vec![0.0, 1.0]);
        assert_eq!(g.dv, vec![0.0, 1.0]);
    }

    #[test]
    fn l0_examples() {
        assert_eq!(l0_gradient_norm(&Image::filled(4, 4, 2.0).unwrap()), 0);
        assert_eq!(l0_gradient_norm(&img(2, 2, &[0.0, 0.0, 0.0, 1.0])), 2);
    }

    #[test]
    fn tv_examples() {
        assert_eq!(tv_isotropic(&Image::filled(5, 3, -1.5).unwrap()), 0.0);
        assert_eq!(tv_isotropic(&img(2, 1, &[0.0, 1.0])), 1.0);
        // (0,0): dh=0, dv=0; (0,1): dv=1; (1,0): dh=1; (1,1): none.
        assert_eq!(tv_isotropic(&img(2, 2, &[0.0, 0.0, 0.0, 1.0])), 2.0);
        // A single pixel with both differences nonzero contributes sqrt(2).
        let t = tv_isotropic(&img(2, 2, &[0.0, 1.0, 1.0, 1.0]));
        assert!((t - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn constructors_reject_bad_input() {
        assert!(Image::new(2, 2, vec![0.0; 3]).is_err());
        assert!(Image::new(0, 2, vec![]).is_err());
        assert!(Image::new(1, 1, vec![f64::NAN]).is_err());
        assert!(LabelField::new(2, 1, vec![1, 3], 2).is_err());
        assert!(LabelField::new(2, 1, vec![0, 1], 2).is_err());
        assert!(LabelField::new(2, 1, vec![1, 1], 1).is_err());
    }

    #[test]
    fn neighbourhood_structure() {
        let nb = Neighborhood::new(NeighborhoodKind::FourConnected2D).unwrap();
        assert_eq!(nb.size(), 4);
        for &(a, b) in nb.offsets() {
            assert!(nb.offsets().contains(&(-a, -b)));
        }
        assert!(matches!(
            Neighborhood::new(NeighborhoodKind::SixConnected3D),
            Err(Error::Unsupported(_))
        ));
    }
}
