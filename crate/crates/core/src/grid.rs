//! Uniform cell partitions of the action domain and probability masses on them.
//!
//! A 1D grid splits `[0, 1]` into `N` cells of width `1/N`; a 2D grid is the
//! product of two such partitions. Quantities are evaluated at cell centers.
//! 2D arrays are flattened row-major with the x index fastest:
//! `flat = j * nx + i` for x-cell `i` and z-cell `j`.

use std::sync::Arc;

use crate::error::{EgdError, Result};

const MASS_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Grid1D {
    n_cells: usize,
    dx: f64,
    centers: Vec<f64>,
}

impl Grid1D {
    pub fn new(n_cells: usize) -> Result<Self> {
        if n_cells < 2 {
            return Err(EgdError::InvalidGrid(format!(
                "need at least 2 cells, got {n_cells}"
            )));
        }
        let dx = 1.0 / n_cells as f64;
        let centers = (0..n_cells).map(|i| (i as f64 + 0.5) * dx).collect();
        Ok(Self {
            n_cells,
            dx,
            centers,
        })
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid2D {
    x: Grid1D,
    z: Grid1D,
}

impl Grid2D {
    pub fn new(nx: usize, nz: usize) -> Result<Self> {
        Ok(Self {
            x: Grid1D::new(nx)?,
            z: Grid1D::new(nz)?,
        })
    }

    pub fn nx(&self) -> usize {
        self.x.n_cells
    }

    pub fn nz(&self) -> usize {
        self.z.n_cells
    }

    pub fn dx(&self) -> f64 {
        self.x.dx
    }

    pub fn dz(&self) -> f64 {
        self.z.dx
    }

    pub fn centers_x(&self) -> &[f64] {
        &self.x.centers
    }

    pub fn centers_z(&self) -> &[f64] {
        &self.z.centers
    }

    /// Flat index of x-cell `i`, z-cell `j`.
    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.x.n_cells + i
    }

    /// Inverse of [`Grid2D::index`].
    #[inline]
    pub fn split(&self, flat: usize) -> (usize, usize) {
        (flat % self.x.n_cells, flat / self.x.n_cells)
    }
}

/// Either kind of action grid.
#[derive(Debug, Clone, PartialEq)]
pub enum Grid {
    OneD(Grid1D),
    TwoD(Grid2D),
}

impl Grid {
    pub fn one_d(n: usize) -> Result<Self> {
        Grid1D::new(n).map(Grid::OneD)
    }

    pub fn two_d(nx: usize, nz: usize) -> Result<Self> {
        Grid2D::new(nx, nz).map(Grid::TwoD)
    }

    pub fn n_cells(&self) -> usize {
        match self {
            Grid::OneD(g) => g.n_cells,
            Grid::TwoD(g) => g.nx() * g.nz(),
        }
    }

    /// Lebesgue measure of one cell (`dx` or `dx·dz`).
    pub fn cell_area(&self) -> f64 {
        match self {
            Grid::OneD(g) => g.dx,
            Grid::TwoD(g) => g.dx() * g.dz(),
        }
    }

    /// x-coordinate of the center of flat cell `k`.
    pub fn x_center(&self, k: usize) -> f64 {
        match self {
            Grid::OneD(g) => g.centers[k],
            Grid::TwoD(g) => g.centers_x()[k % g.nx()],
        }
    }

    pub fn is_2d(&self) -> bool {
        matches!(self, Grid::TwoD(_))
    }

    pub fn as_1d(&self) -> Option<&Grid1D> {
        match self {
            Grid::OneD(g) => Some(g),
            Grid::TwoD(_) => None,
        }
    }

    pub fn as_2d(&self) -> Option<&Grid2D> {
        match self {
            Grid::TwoD(g) => Some(g),
            Grid::OneD(_) => None,
        }
    }
}

/// Probability masses per cell. Always nonnegative and summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct Density {
    grid: Arc<Grid>,
    masses: Vec<f64>,
}

impl Density {
    /// Wraps raw masses after checking the probability invariants.
    pub fn from_masses(grid: Arc<Grid>, masses: Vec<f64>) -> Result<Self> {
        if masses.len() != grid.n_cells() {
            return Err(EgdError::InvalidDensity(format!(
                "expected {} masses, got {}",
                grid.n_cells(),
                masses.len()
            )));
        }
        if let Some((i, m)) = masses
            .iter()
            .enumerate()
            .find(|(_, m)| !(**m >= 0.0) || !m.is_finite())
        {
            return Err(EgdError::InvalidDensity(format!("mass {m} at cell {i}")));
        }
        let total: f64 = masses.iter().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(EgdError::InvalidDensity(format!(
                "masses sum to {total}, not 1"
            )));
        }
        Ok(Self { grid, masses })
    }

    pub(crate) fn from_masses_unchecked(grid: Arc<Grid>, masses: Vec<f64>) -> Self {
        Self { grid, masses }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn grid_arc(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn into_masses(self) -> Vec<f64> {
        self.masses
    }

    /// Probability density values `mass / cell_area`.
    pub fn pdf(&self) -> Vec<f64> {
        let area = self.grid.cell_area();
        self.masses.iter().map(|m| m / area).collect()
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }
}

pub fn uniform_density(grid: Arc<Grid>) -> Density {
    let n = grid.n_cells();
    let masses = vec![1.0 / n as f64; n];
    Density::from_masses_unchecked(grid, masses)
}

/// Discretizes a pdf sampled at cell centers, renormalizing to unit mass.
pub fn density_from_pdf(grid: Arc<Grid>, pdf_values: &[f64]) -> Result<Density> {
    if pdf_values.len() != grid.n_cells() {
        return Err(EgdError::InvalidDensity(format!(
            "expected {} pdf values, got {}",
            grid.n_cells(),
            pdf_values.len()
        )));
    }
    if let Some((i, v)) = pdf_values
        .iter()
        .enumerate()
        .find(|(_, v)| !(**v >= 0.0) || !v.is_finite())
    {
        return Err(EgdError::InvalidDensity(format!(
            "pdf value {v} at cell {i} is negative or not finite"
        )));
    }
    let area = grid.cell_area();
    let raw: Vec<f64> = pdf_values.iter().map(|p| p * area).collect();
    let total: f64 = raw.iter().sum();
    if total <= 0.0 {
        return Err(EgdError::InvalidDensity("pdf is identically zero".into()));
    }
    let masses = raw.into_iter().map(|m| m / total).collect();
    Ok(Density::from_masses_unchecked(grid, masses))
}

/// Average action along the x axis.
pub fn mean_action(density: &Density) -> f64 {
    let grid = density.grid();
    match grid {
        Grid::OneD(g) => g
            .centers()
            .iter()
            .zip(density.masses())
            .map(|(x, m)| x * m)
            .sum(),
        Grid::TwoD(g) => density
            .masses()
            .iter()
            .enumerate()
            .map(|(k, m)| g.centers_x()[k % g.nx()] * m)
            .sum(),
    }
}

/// Largest pointwise difference of the two pdfs.
pub fn sup_pdf_diff(a: &Density, b: &Density) -> Result<f64> {
    if a.grid() != b.grid() {
        return Err(EgdError::GridMismatch);
    }
    let area = a.grid().cell_area();
    Ok(a.masses()
        .iter()
        .zip(b.masses())
        .map(|(p, q)| (p - q).abs() / area)
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn g1(n: usize) -> Arc<Grid> {
        Arc::new(Grid::one_d(n).unwrap())
    }

    #[test]
    fn grid_geometry() {
        let g = Grid1D::new(250).unwrap();
        assert!((g.dx() * 250.0 - 1.0).abs() < 1e-15);
        assert!(g.centers().windows(2).all(|w| w[0] < w[1]));
        assert!(g.centers()[0] > 0.0 && g.centers()[249] < 1.0);
        assert!((g.centers()[0] - 0.002).abs() < 1e-15);
        assert!(Grid1D::new(1).is_err());
        assert!(Grid2D::new(2, 1).is_err());
    }

    #[test]
    fn flattening_is_x_fastest() {
        let g = Grid2D::new(3, 2).unwrap();
        assert_eq!(g.index(2, 0), 2);
        assert_eq!(g.index(0, 1), 3);
        assert_eq!(g.split(5), (2, 1));
    }

    #[test]
    fn uniform_examples() {
        let d = uniform_density(g1(4));
        assert_eq!(d.masses(), &[0.25; 4]);
        let d = uniform_density(g1(250));
        assert!(d.masses().iter().all(|m| (m - 0.004).abs() < 1e-18));
        let d = uniform_density(Arc::new(Grid::two_d(2, 2).unwrap()));
        assert_eq!(d.masses(), &[0.25; 4]);
    }

    #[test]
    fn pdf_examples() {
        let d = density_from_pdf(g1(5), &[1.0; 5]).unwrap();
        assert!(d.masses().iter().all(|m| (m - 0.2).abs() < 1e-15));
        let d = density_from_pdf(g1(2), &[0.0, 1.0]).unwrap();
        assert_eq!(d.masses(), &[0.0, 1.0]);
        assert!(matches!(
            density_from_pdf(g1(2), &[0.0, 0.0]),
            Err(EgdError::InvalidDensity(_))
        ));
        assert!(matches!(
            density_from_pdf(g1(2), &[-1.0, 2.0]),
            Err(EgdError::InvalidDensity(_))
        ));
    }

    #[test]
    fn pdf_x_squared_last_cell_matches_cell_integrals() {
        // Oracle: exact cell integrals of x², ∫_{(i-1)/N}^{i/N} x² dx.
        let n = 250;
        let grid = g1(n);
        let centers: Vec<f64> = grid.as_1d().unwrap().centers().to_vec();
        let d = density_from_pdf(grid, &centers.iter().map(|x| x * x).collect::<Vec<_>>()).unwrap();
        assert!((d.total_mass() - 1.0).abs() < 1e-12);
        let exact_last = 1.0 - (249.0f64 / 250.0).powi(3);
        // Midpoint rule vs exact integral differ by O(dx^3) per cell.
        assert!((d.masses()[n - 1] - exact_last).abs() < 1e-6);
        let exact_first = (1.0f64 / 250.0).powi(3);
        assert!((d.masses()[0] - exact_first).abs() < 1e-7);
    }

    #[test]
    fn mean_examples() {
        assert!((mean_action(&uniform_density(g1(10))) - 0.5).abs() < 1e-15);
        let d = Density::from_masses(g1(2), vec![1.0, 0.0]).unwrap();
        assert_eq!(mean_action(&d), 0.25);
        // 2D mean is taken along x.
        let g = Arc::new(Grid::two_d(2, 3).unwrap());
        let mut m = vec![0.0; 6];
        m[g.as_2d().unwrap().index(1, 2)] = 1.0;
        let d = Density::from_masses(g, m).unwrap();
        assert_eq!(mean_action(&d), 0.75);
    }

    #[test]
    fn sup_diff_examples() {
        let a = Density::from_masses(g1(2), vec![1.0, 0.0]).unwrap();
        let b = Density::from_masses(g1(2), vec![0.0, 1.0]).unwrap();
        assert_eq!(sup_pdf_diff(&a, &a).unwrap(), 0.0);
        assert_eq!(sup_pdf_diff(&a, &b).unwrap(), 2.0);
        let c = uniform_density(g1(3));
        assert_eq!(sup_pdf_diff(&a, &c), Err(EgdError::GridMismatch));

        // Brute force over 4 cells: uniform vs x² pdf.
        let g = g1(4);
        let u = uniform_density(g.clone());
        let centers = [0.125, 0.375, 0.625, 0.875];
        let sq: Vec<f64> = centers.iter().map(|x| x * x).collect();
        let total: f64 = sq.iter().sum::<f64>() * 0.25;
        let q = density_from_pdf(g, &sq).unwrap();
        let expected = centers
            .iter()
            .map(|x| (1.0 - x * x / total).abs())
            .fold(0.0, f64::max);
        assert!((sup_pdf_diff(&u, &q).unwrap() - expected).abs() < 1e-14);
    }

    #[test]
    fn invalid_masses_rejected() {
        assert!(Density::from_masses(g1(2), vec![0.5, 0.6]).is_err());
        assert!(Density::from_masses(g1(2), vec![1.5, -0.5]).is_err());
        assert!(Density::from_masses(g1(2), vec![1.0]).is_err());
    }

    fn random_density(n: usize) -> impl Strategy<Value = Density> {
        proptest::collection::vec(0.0f64..1.0, n)
            .prop_filter_map("nonzero", move |v| density_from_pdf(g1(n), &v).ok())
    }

    proptest! {
        #[test]
        fn densities_from_pdf_are_probabilities(v in proptest::collection::vec(0.0f64..10.0, 2..40)) {
            if let Ok(d) = density_from_pdf(g1(v.len()), &v) {
                prop_assert!(d.masses().iter().all(|m| *m >= 0.0));
                prop_assert!((d.total_mass() - 1.0).abs() <= 1e-12);
            }
        }

        #[test]
        fn mirrored_mean_is_complement(d in random_density(12)) {
            let mut mirrored = d.masses().to_vec();
            mirrored.reverse();
            let m = Density::from_masses(d.grid_arc().clone(), mirrored).unwrap();
            prop_assert!((mean_action(&m) - (1.0 - mean_action(&d))).abs() < 1e-14);
        }

        #[test]
        fn sup_diff_is_a_metric(a in random_density(8), b in random_density(8), c in random_density(8)) {
            let ab = sup_pdf_diff(&a, &b).unwrap();
            let ba = sup_pdf_diff(&b, &a).unwrap();
            let bc = sup_pdf_diff(&b, &c).unwrap();
            let ac = sup_pdf_diff(&a, &c).unwrap();
            prop_assert!(ab >= 0.0);
            prop_assert_eq!(ab, ba);
            prop_assert!(ac <= ab + bc + 1e-12);
            prop_assert_eq!(sup_pdf_diff(&a, &a).unwrap(), 0.0);
            prop_assert_eq!(ab == 0.0, a.masses() == b.masses());
        }
    }
}
