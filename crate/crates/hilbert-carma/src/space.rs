//! Truncated separable Hilbert spaces and the linear algebra on them.
//!
//! Every space is represented by its first `N` basis coefficients. The basis
//! is orthogonal but not necessarily orthonormal: the inner product carries a
//! diagonal Gram matrix of strictly positive weights,
//!
//! ```text
//! <u, v> = sum_n w_n u_n v_n .
//! ```
//!
//! This lets the same coefficient vector represent the same function in two
//! differently normed spaces, which keeps the wave-equation block formulas
//! literal: the first wave component uses the sine basis of `L^2(0,1)` with
//! weights `pi^2 n^2`, the second the same basis with unit weights.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Basis family backing a [`SpaceSpec`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisKind {
    /// Unspecified orthogonal basis; only the weights matter.
    Abstract,
    /// `e_n(x) = sqrt(2) sin(pi n x)` on `(0,1)`; the Laplacian acts
    /// diagonally with eigenvalue `-pi^2 n^2`.
    SineOnUnitInterval,
}

/// A truncated separable Hilbert space: basis family, truncation dimension
/// and the diagonal of the Gram matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceSpec {
    label: String,
    dim: usize,
    weights: Vec<f64>,
    basis_kind: BasisKind,
}

impl SpaceSpec {
    pub fn new(
        label: impl Into<String>,
        dim: usize,
        weights: Vec<f64>,
        basis_kind: BasisKind,
    ) -> Result<Self> {
        let label = label.into();
        if dim == 0 {
            return Err(Error::InvalidArgument(format!(
                "space {label}: dim must be >= 1"
            )));
        }
        if weights.len() != dim {
            return Err(Error::DimensionMismatch(format!(
                "space {label}: {} weights for dim {dim}",
                weights.len()
            )));
        }
        if !weights.iter().all(|w| w.is_finite() && *w > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "space {label}: weights must be strictly positive and finite"
            )));
        }
        Ok(Self {
            label,
            dim,
            weights,
            basis_kind,
        })
    }

    /// Abstract space with an orthonormal basis (all weights 1).
    pub fn orthonormal(label: impl Into<String>, dim: usize) -> Self {
        Self::new(label, dim, vec![1.0; dim], BasisKind::Abstract).expect("dim >= 1")
    }

    /// Truncated `L^2(0,1)` with the sine basis, orthonormal.
    pub fn sine(label: impl Into<String>, dim: usize) -> Self {
        Self::new(label, dim, vec![1.0; dim], BasisKind::SineOnUnitInterval).expect("dim >= 1")
    }

    /// First wave component: sine basis with norm `|f|^2 = pi^2 sum n^2 <f,e_n>^2`.
    pub fn wave_h1(dim: usize) -> Self {
        let weights = (1..=dim)
            .map(|n| (std::f64::consts::PI * n as f64).powi(2))
            .collect();
        Self::new("H1", dim, weights, BasisKind::SineOnUnitInterval).expect("dim >= 1")
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn basis_kind(&self) -> BasisKind {
        self.basis_kind
    }

    /// Laplacian eigenvalue `-pi^2 n^2` of the 1-based mode `n`.
    ///
    /// Only meaningful for the sine basis; callers check `basis_kind`.
    pub fn laplacian_eigenvalue(n: usize) -> f64 {
        -(std::f64::consts::PI * n as f64).powi(2)
    }
}

/// Element of a single space, stored as basis coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct HVector {
    space: SpaceSpec,
    coords: DVector<f64>,
}

impl HVector {
    pub fn new(space: SpaceSpec, coords: DVector<f64>) -> Result<Self> {
        if coords.len() != space.dim() {
            return Err(Error::DimensionMismatch(format!(
                "vector of length {} in space {} of dim {}",
                coords.len(),
                space.label(),
                space.dim()
            )));
        }
        Ok(Self { space, coords })
    }

    pub fn from_slice(space: SpaceSpec, coords: &[f64]) -> Result<Self> {
        Self::new(space, DVector::from_row_slice(coords))
    }

    pub fn zero(space: SpaceSpec) -> Self {
        let coords = DVector::zeros(space.dim());
        Self { space, coords }
    }

    /// The 1-based basis vector `e_n`.
    pub fn basis(space: SpaceSpec, n: usize) -> Result<Self> {
        if n == 0 || n > space.dim() {
            return Err(Error::IndexOutOfRange {
                index: n,
                count: space.dim(),
            });
        }
        let mut coords = DVector::zeros(space.dim());
        coords[n - 1] = 1.0;
        Ok(Self { space, coords })
    }

    pub fn space(&self) -> &SpaceSpec {
        &self.space
    }

    pub fn coords(&self) -> &DVector<f64> {
        &self.coords
    }

    pub fn norm(&self) -> f64 {
        inner(self, self).expect("same space").sqrt()
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self {
            space: self.space.clone(),
            coords: &self.coords * factor,
        }
    }

    /// `self + factor * other`; panics on space mismatch (checked constructors
    /// make mismatches programming errors, not data errors).
    pub fn axpy(&self, factor: f64, other: &Self) -> Self {
        assert_eq!(self.space, other.space, "axpy across different spaces");
        Self {
            space: self.space.clone(),
            coords: &self.coords + factor * &other.coords,
        }
    }
}

/// Weighted inner product `sum_n w_n u_n v_n`.
pub fn inner(u: &HVector, v: &HVector) -> Result<f64> {
    if u.space != v.space {
        return Err(Error::SpaceMismatch(format!(
            "inner product between {} and {}",
            u.space.label(),
            v.space.label()
        )));
    }
    Ok(u.space
        .weights()
        .iter()
        .zip(u.coords.iter().zip(v.coords.iter()))
        .map(|(w, (a, b))| w * a * b)
        .sum())
}

/// Ordered list of component spaces; a single space is a product of one.
///
/// The flat coordinate layout concatenates component coefficients in order,
/// and the Gram matrix of the product is the concatenation of the component
/// weight sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceLayout {
    spaces: Vec<SpaceSpec>,
}

impl SpaceLayout {
    pub fn single(space: SpaceSpec) -> Self {
        Self {
            spaces: vec![space],
        }
    }

    pub fn product(spaces: Vec<SpaceSpec>) -> Result<Self> {
        if spaces.is_empty() {
            return Err(Error::InvalidArgument(
                "product layout needs at least one space".into(),
            ));
        }
        Ok(Self { spaces })
    }

    pub fn spaces(&self) -> &[SpaceSpec] {
        &self.spaces
    }

    /// Number of components `p`.
    pub fn component_count(&self) -> usize {
        self.spaces.len()
    }

    pub fn is_single(&self) -> bool {
        self.spaces.len() == 1
    }

    /// The unique component space of a single layout.
    pub fn as_single(&self) -> Option<&SpaceSpec> {
        if self.is_single() {
            Some(&self.spaces[0])
        } else {
            None
        }
    }

    pub fn total_dim(&self) -> usize {
        self.spaces.iter().map(|s| s.dim()).sum()
    }

    /// Offset of the 1-based component `i` in the flat layout.
    pub fn component_offset(&self, i: usize) -> Result<usize> {
        if i == 0 || i > self.spaces.len() {
            return Err(Error::IndexOutOfRange {
                index: i,
                count: self.spaces.len(),
            });
        }
        Ok(self.spaces[..i - 1].iter().map(|s| s.dim()).sum())
    }

    pub fn component(&self, i: usize) -> Result<&SpaceSpec> {
        if i == 0 || i > self.spaces.len() {
            return Err(Error::IndexOutOfRange {
                index: i,
                count: self.spaces.len(),
            });
        }
        Ok(&self.spaces[i - 1])
    }

    /// Concatenated weight sequence (diagonal of the product Gram matrix).
    pub fn gram_diagonal(&self) -> DVector<f64> {
        let mut g = DVector::zeros(self.total_dim());
        let mut k = 0;
        for s in &self.spaces {
            for w in s.weights() {
                g[k] = *w;
                k += 1;
            }
        }
        g
    }
}

/// Element of a product space `H_1 x ... x H_p`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductVector {
    components: Vec<HVector>,
}

impl ProductVector {
    pub fn new(components: Vec<HVector>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidArgument(
                "product vector needs at least one component".into(),
            ));
        }
        Ok(Self { components })
    }

    pub fn zero(layout: &SpaceLayout) -> Self {
        Self {
            components: layout
                .spaces()
                .iter()
                .map(|s| HVector::zero(s.clone()))
                .collect(),
        }
    }

    pub fn components(&self) -> &[HVector] {
        &self.components
    }

    pub fn layout(&self) -> SpaceLayout {
        SpaceLayout {
            spaces: self.components.iter().map(|c| c.space().clone()).collect(),
        }
    }

    pub fn total_dim(&self) -> usize {
        self.components.iter().map(|c| c.space().dim()).sum()
    }

    pub fn to_flat(&self) -> DVector<f64> {
        let mut flat = DVector::zeros(self.total_dim());
        let mut k = 0;
        for c in &self.components {
            flat.rows_mut(k, c.coords().len()).copy_from(c.coords());
            k += c.coords().len();
        }
        flat
    }

    pub fn from_flat(layout: &SpaceLayout, flat: DVector<f64>) -> Result<Self> {
        if flat.len() != layout.total_dim() {
            return Err(Error::DimensionMismatch(format!(
                "flat vector of length {} for layout of total dim {}",
                flat.len(),
                layout.total_dim()
            )));
        }
        let mut components = Vec::with_capacity(layout.component_count());
        let mut k = 0;
        for s in layout.spaces() {
            let coords = flat.rows(k, s.dim()).into_owned();
            components.push(HVector::new(s.clone(), coords)?);
            k += s.dim();
        }
        Ok(Self { components })
    }

    pub fn norm(&self) -> f64 {
        product_inner(self, self).expect("same layout").sqrt()
    }
}

/// Product inner product, computed exactly as the sum of component inner
/// products.
pub fn product_inner(x: &ProductVector, y: &ProductVector) -> Result<f64> {
    if x.components.len() != y.components.len() {
        return Err(Error::SpaceMismatch(
            "product vectors with different component counts".into(),
        ));
    }
    let mut sum = 0.0;
    for (a, b) in x.components.iter().zip(&y.components) {
        sum += inner(a, b)?;
    }
    Ok(sum)
}

/// Projection `P_i x = x_i` (1-based component index).
pub fn project(x: &ProductVector, i: usize) -> Result<HVector> {
    if i == 0 || i > x.components.len() {
        return Err(Error::IndexOutOfRange {
            index: i,
            count: x.components.len(),
        });
    }
    Ok(x.components[i - 1].clone())
}

/// Injection `P_i* x = (0, ..., 0, x, 0, ..., 0)` with `x` in the `i`-th slot.
pub fn inject(x: &HVector, i: usize, layout: &SpaceLayout) -> Result<ProductVector> {
    if i == 0 || i > layout.component_count() {
        return Err(Error::IndexOutOfRange {
            index: i,
            count: layout.component_count(),
        });
    }
    if layout.component(i)? != x.space() {
        return Err(Error::SpaceMismatch(format!(
            "injecting a {} vector into slot {i} of type {}",
            x.space().label(),
            layout.component(i)?.label()
        )));
    }
    let components = layout
        .spaces()
        .iter()
        .enumerate()
        .map(|(k, s)| {
            if k + 1 == i {
                x.clone()
            } else {
                HVector::zero(s.clone())
            }
        })
        .collect();
    Ok(ProductVector { components })
}

/// Bounded linear operator between (possibly product) spaces, stored as its
/// matrix of basis coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearMap {
    domain: SpaceLayout,
    codomain: SpaceLayout,
    matrix: DMatrix<f64>,
}

impl LinearMap {
    pub fn new(domain: SpaceLayout, codomain: SpaceLayout, matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() != codomain.total_dim() || matrix.ncols() != domain.total_dim() {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} matrix for map of {} -> {}",
                matrix.nrows(),
                matrix.ncols(),
                domain.total_dim(),
                codomain.total_dim()
            )));
        }
        Ok(Self {
            domain,
            codomain,
            matrix,
        })
    }

    pub fn identity(layout: SpaceLayout) -> Self {
        let n = layout.total_dim();
        Self {
            domain: layout.clone(),
            codomain: layout,
            matrix: DMatrix::identity(n, n),
        }
    }

    pub fn zero(domain: SpaceLayout, codomain: SpaceLayout) -> Self {
        let matrix = DMatrix::zeros(codomain.total_dim(), domain.total_dim());
        Self {
            domain,
            codomain,
            matrix,
        }
    }

    pub fn domain(&self) -> &SpaceLayout {
        &self.domain
    }

    pub fn codomain(&self) -> &SpaceLayout {
        &self.codomain
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }

    pub fn apply_flat(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.domain.total_dim() {
            return Err(Error::DimensionMismatch(format!(
                "applying {}x{} map to vector of length {}",
                self.matrix.nrows(),
                self.matrix.ncols(),
                x.len()
            )));
        }
        Ok(&self.matrix * x)
    }

    /// Apply to a single-space vector; domain and codomain must be single.
    pub fn apply(&self, x: &HVector) -> Result<HVector> {
        let dom = self.domain.as_single().ok_or_else(|| {
            Error::SpaceMismatch("apply on a map with a product domain".into())
        })?;
        if dom != x.space() {
            return Err(Error::SpaceMismatch(format!(
                "map domain {} applied to {} vector",
                dom.label(),
                x.space().label()
            )));
        }
        let cod = self.codomain.as_single().ok_or_else(|| {
            Error::SpaceMismatch("apply on a map with a product codomain".into())
        })?;
        HVector::new(cod.clone(), &self.matrix * x.coords())
    }

    /// Apply to a product-space vector, returning flat codomain coordinates.
    pub fn apply_product(&self, x: &ProductVector) -> Result<DVector<f64>> {
        self.apply_flat(&x.to_flat())
    }

    /// Composition `self . other` (apply `other` first).
    pub fn compose(&self, other: &LinearMap) -> Result<LinearMap> {
        if self.domain != other.codomain {
            return Err(Error::SpaceMismatch(format!(
                "composing maps with mismatched middle layouts ({} vs {} dims)",
                self.domain.total_dim(),
                other.codomain.total_dim()
            )));
        }
        Ok(LinearMap {
            domain: other.domain.clone(),
            codomain: self.codomain.clone(),
            matrix: &self.matrix * &other.matrix,
        })
    }

    pub fn add(&self, other: &LinearMap) -> Result<LinearMap> {
        if self.domain != other.domain || self.codomain != other.codomain {
            return Err(Error::SpaceMismatch(
                "adding maps with different domains or codomains".into(),
            ));
        }
        Ok(LinearMap {
            domain: self.domain.clone(),
            codomain: self.codomain.clone(),
            matrix: &self.matrix + &other.matrix,
        })
    }

    pub fn scale(&self, factor: f64) -> LinearMap {
        LinearMap {
            domain: self.domain.clone(),
            codomain: self.codomain.clone(),
            matrix: &self.matrix * factor,
        }
    }

    /// The adjoint `T*` with matrix `G_dom^{-1} T^t G_codom`, so that
    /// `<Tu, v> = <u, T* v>` in the weighted inner products.
    pub fn adjoint(&self) -> LinearMap {
        let g_dom = self.domain.gram_diagonal();
        let g_cod = self.codomain.gram_diagonal();
        let mut m = self.matrix.transpose();
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                m[(i, j)] = m[(i, j)] * g_cod[j] / g_dom[i];
            }
        }
        LinearMap {
            domain: self.codomain.clone(),
            codomain: self.domain.clone(),
            matrix: m,
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.matrix.norm()
    }
}

/// The adjoint as a free function, mirroring [`LinearMap::adjoint`].
pub fn adjoint(t: &LinearMap) -> LinearMap {
    t.adjoint()
}

/// The projection `P_i: H -> H_i` as a matrix operator.
pub fn projection_map(layout: &SpaceLayout, i: usize) -> Result<LinearMap> {
    let offset = layout.component_offset(i)?;
    let space = layout.component(i)?.clone();
    let mut m = DMatrix::zeros(space.dim(), layout.total_dim());
    for k in 0..space.dim() {
        m[(k, offset + k)] = 1.0;
    }
    LinearMap::new(layout.clone(), SpaceLayout::single(space), m)
}

/// The injection `P_i*: H_i -> H` as a matrix operator.
pub fn injection_map(layout: &SpaceLayout, i: usize) -> Result<LinearMap> {
    let offset = layout.component_offset(i)?;
    let space = layout.component(i)?.clone();
    let mut m = DMatrix::zeros(layout.total_dim(), space.dim());
    for k in 0..space.dim() {
        m[(offset + k, k)] = 1.0;
    }
    LinearMap::new(SpaceLayout::single(space), layout.clone(), m)
}
