//! Spatial discretization: uniform grids on intervals and truncated radially
//! symmetric exterior domains, with piecewise-linear finite element forms for
//! the operator A = -Δ+1 under homogeneous Neumann conditions.
//!
//! The outer endpoint `b` is an artificial boundary standing in for an
//! unbounded domain; the massive "+1" term localizes solutions, and the
//! induced truncation error is measured empirically by
//! [`crate::analysis::truncation_study`]. The mass matrix is lumped so nodal
//! nonlinearities stay diagonal in the discrete weak form, and the radial
//! weight r^{N-1} is integrated by the midpoint rule per element, which keeps
//! the assembled forms symmetric and positive.

use crate::linalg::SymTridiag;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DomainError {
    #[error("invalid grid configuration: {key}: {message}")]
    InvalidConfig { key: &'static str, message: String },
    #[error("field length {field} does not match grid node count {grid}")]
    DimensionMismatch { field: usize, grid: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridKind {
    Interval,
    RadialExterior,
}

/// Parameters for [`build_grid`].
#[derive(Debug, Clone, Copy)]
pub struct GridConfig {
    pub kind: GridKind,
    pub a: f64,
    pub b: f64,
    pub nodes: usize,
    /// Ambient dimension N; only meaningful in radial mode.
    pub dimension: usize,
}

impl GridConfig {
    pub fn interval(a: f64, b: f64, nodes: usize) -> Self {
        Self {
            kind: GridKind::Interval,
            a,
            b,
            nodes,
            dimension: 1,
        }
    }

    pub fn radial(a: f64, b: f64, nodes: usize, dimension: usize) -> Self {
        Self {
            kind: GridKind::RadialExterior,
            a,
            b,
            nodes,
            dimension,
        }
    }
}

/// Uniform one-dimensional mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub kind: GridKind,
    pub a: f64,
    pub b: f64,
    pub dimension: usize,
    nodes: Vec<f64>,
    spacing: f64,
}

impl Grid {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> f64 {
        self.nodes[i]
    }

    /// Radial quadrature weight at position x: r^{N-1}, or 1 on intervals.
    fn weight(&self, x: f64) -> f64 {
        match self.kind {
            GridKind::Interval => 1.0,
            GridKind::RadialExterior => x.powi(self.dimension as i32 - 1),
        }
    }
}

pub fn build_grid(config: &GridConfig) -> Result<Grid, DomainError> {
    if config.nodes < 2 {
        return Err(DomainError::InvalidConfig {
            key: "grid.nodes",
            message: format!("need at least 2 nodes, got {}", config.nodes),
        });
    }
    if !(config.b > config.a) || !config.a.is_finite() || !config.b.is_finite() {
        return Err(DomainError::InvalidConfig {
            key: "domain.b",
            message: format!(
                "endpoints must satisfy a < b, got a={}, b={}",
                config.a, config.b
            ),
        });
    }
    if config.kind == GridKind::RadialExterior {
        if config.a <= 0.0 {
            return Err(DomainError::InvalidConfig {
                key: "domain.a",
                message: format!("radial mode needs inner radius a > 0, got {}", config.a),
            });
        }
        if config.dimension < 1 {
            return Err(DomainError::InvalidConfig {
                key: "domain.dimension",
                message: "radial mode needs dimension N >= 1".to_string(),
            });
        }
    }
    let n = config.nodes;
    let h = (config.b - config.a) / (n - 1) as f64;
    let nodes: Vec<f64> = (0..n).map(|i| config.a + i as f64 * h).collect();
    Ok(Grid {
        kind: config.kind,
        a: config.a,
        b: config.b,
        dimension: if config.kind == GridKind::Interval {
            1
        } else {
            config.dimension
        },
        nodes,
        spacing: h,
    })
}

/// Nodal values of a discrete field on some grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub values: Vec<f64>,
}

impl Field {
    pub fn zeros(n: usize) -> Self {
        Self {
            values: vec![0.0; n],
        }
    }

    pub fn constant(grid: &Grid, c: f64) -> Self {
        Self {
            values: vec![c; grid.len()],
        }
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(f64) -> f64) -> Self {
        Self {
            values: grid.nodes().iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn from_values(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Assembled bilinear forms for A = -Δ+1: lumped mass M plus the stiffness K
/// held in element form (one conductance per element), so constants are
/// annihilated exactly by the stiffness product.
#[derive(Debug, Clone)]
pub struct EllipticOperator {
    grid: Grid,
    /// Lumped mass per node (diagonal of M), strictly positive.
    mass: Vec<f64>,
    /// Element conductances w_e / h (off-diagonal of K is the negative).
    conductance: Vec<f64>,
}

pub fn assemble_operator(grid: &Grid) -> EllipticOperator {
    let n = grid.len();
    let h = grid.spacing();
    let mut mass = vec![0.0; n];
    let mut conductance = vec![0.0; n - 1];
    for e in 0..n - 1 {
        let mid = 0.5 * (grid.node(e) + grid.node(e + 1));
        let w = grid.weight(mid);
        conductance[e] = w / h;
        let half = 0.5 * w * h;
        mass[e] += half;
        mass[e + 1] += half;
    }
    EllipticOperator {
        grid: grid.clone(),
        mass,
        conductance,
    }
}

impl EllipticOperator {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn conductance(&self) -> &[f64] {
        &self.conductance
    }

    /// Total lumped measure of the truncated domain, trace(M).
    pub fn domain_measure(&self) -> f64 {
        self.mass.iter().sum()
    }

    fn check_len(&self, v: &Field) -> Result<(), DomainError> {
        if v.len() != self.len() {
            return Err(DomainError::DimensionMismatch {
                field: v.len(),
                grid: self.len(),
            });
        }
        Ok(())
    }

    /// K v computed in difference form; constant vectors map to exact zero.
    pub fn apply_stiffness(&self, v: &[f64]) -> Vec<f64> {
        let n = self.len();
        let mut out = vec![0.0; n];
        for i in 0..n {
            let mut s = 0.0;
            if i > 0 {
                s += self.conductance[i - 1] * (v[i] - v[i - 1]);
            }
            if i + 1 < n {
                s += self.conductance[i] * (v[i] - v[i + 1]);
            }
            out[i] = s;
        }
        out
    }

    /// Dual-weighted image (K+M)v, the load vector of A v against the nodal basis.
    pub fn apply_operator_dual(&self, v: &Field) -> Result<Field, DomainError> {
        self.check_len(v)?;
        let mut out = self.apply_stiffness(&v.values);
        for i in 0..out.len() {
            out[i] += self.mass[i] * v.values[i];
        }
        Ok(Field::from_values(out))
    }

    /// Nodal image of A v in H, i.e. M^{-1}(K+M)v. Inverse of
    /// [`crate::dual::DualEngine::compute_f`]: constants are fixed points.
    pub fn apply_operator(&self, v: &Field) -> Result<Field, DomainError> {
        self.check_len(v)?;
        let kv = self.apply_stiffness(&v.values);
        let out = (0..v.len())
            .map(|i| v.values[i] + kv[i] / self.mass[i])
            .collect();
        Ok(Field::from_values(out))
    }

    /// H inner product (v, w)_H = v^T M w.
    pub fn h_inner(&self, v: &Field, w: &Field) -> f64 {
        (0..self.len())
            .map(|i| self.mass[i] * v.values[i] * w.values[i])
            .sum()
    }

    /// V inner product (v, w)_V = v^T (K+M) w, element form for the K part.
    pub fn v_inner(&self, v: &Field, w: &Field) -> f64 {
        let mut s = self.h_inner(v, w);
        for e in 0..self.conductance.len() {
            s += self.conductance[e]
                * (v.values[e + 1] - v.values[e])
                * (w.values[e + 1] - w.values[e]);
        }
        s
    }

    /// Tridiagonal representation of K+M for factorization.
    pub fn a_form_tridiag(&self) -> SymTridiag {
        let n = self.len();
        let mut diag = vec![0.0; n];
        let mut off = vec![0.0; n - 1];
        for i in 0..n {
            let mut d = self.mass[i];
            if i > 0 {
                d += self.conductance[i - 1];
            }
            if i + 1 < n {
                d += self.conductance[i];
            }
            diag[i] = d;
        }
        for e in 0..n - 1 {
            off[e] = -self.conductance[e];
        }
        SymTridiag { diag, off }
    }

    /// Tridiagonal representation of M + c(K+M) for c >= 0.
    pub fn shifted_tridiag(&self, c: f64) -> SymTridiag {
        let base = self.a_form_tridiag();
        let n = self.len();
        let mut diag = vec![0.0; n];
        for i in 0..n {
            diag[i] = self.mass[i] + c * base.diag[i];
        }
        let off = base.off.iter().map(|&o| c * o).collect();
        SymTridiag { diag, off }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_interval(n: usize) -> EllipticOperator {
        assemble_operator(&build_grid(&GridConfig::interval(0.0, 1.0, n)).unwrap())
    }

    #[test]
    fn two_node_mesh() {
        let g = build_grid(&GridConfig::interval(0.0, 1.0, 2)).unwrap();
        assert_eq!(g.nodes(), &[0.0, 1.0]);
        assert_eq!(g.spacing(), 1.0);
    }

    #[test]
    fn five_node_mesh() {
        let g = build_grid(&GridConfig::interval(0.0, 1.0, 5)).unwrap();
        assert_eq!(g.spacing(), 0.25);
        assert_eq!(g.nodes(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn radial_three_node_forms() {
        // hand evaluation: h = 1, midpoint weights r = 1.5 and 2.5
        let g = build_grid(&GridConfig::radial(1.0, 3.0, 3, 2)).unwrap();
        assert_eq!(g.nodes(), &[1.0, 2.0, 3.0]);
        let op = assemble_operator(&g);
        assert_eq!(op.conductance(), &[1.5, 2.5]);
        assert_eq!(op.mass(), &[0.75, 2.0, 1.25]);
    }

    #[test]
    fn grid_rejects_bad_parameters() {
        assert!(matches!(
            build_grid(&GridConfig::interval(0.0, 1.0, 1)),
            Err(DomainError::InvalidConfig {
                key: "grid.nodes",
                ..
            })
        ));
        assert!(matches!(
            build_grid(&GridConfig::interval(1.0, 1.0, 5)),
            Err(DomainError::InvalidConfig {
                key: "domain.b",
                ..
            })
        ));
        assert!(matches!(
            build_grid(&GridConfig::radial(0.0, 1.0, 5, 2)),
            Err(DomainError::InvalidConfig {
                key: "domain.a",
                ..
            })
        ));
        assert!(matches!(
            build_grid(&GridConfig::radial(1.0, 2.0, 5, 0)),
            Err(DomainError::InvalidConfig {
                key: "domain.dimension",
                ..
            })
        ));
    }

    #[test]
    fn unit_element_assembly() {
        // one element on [0,1]: K = [[1,-1],[-1,1]], M = diag(0.5, 0.5)
        let op = unit_interval(2);
        let t = op.a_form_tridiag();
        assert_eq!(t.diag, vec![1.5, 1.5]);
        assert_eq!(t.off, vec![-1.0]);
        assert_eq!(op.mass(), &[0.5, 0.5]);
    }

    #[test]
    fn stiffness_annihilates_constants_exactly() {
        for op in [
            unit_interval(17),
            assemble_operator(&build_grid(&GridConfig::radial(1.0, 8.0, 29, 3)).unwrap()),
        ] {
            let kv = op.apply_stiffness(&vec![0.731; op.len()]);
            assert!(kv.iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn constant_quadratic_form_is_measure() {
        let op = assemble_operator(&build_grid(&GridConfig::radial(1.0, 4.0, 41, 2)).unwrap());
        let c = 1.3;
        let v = Field::constant(op.grid(), c);
        let q = op.v_inner(&v, &v);
        assert!((q - c * c * op.domain_measure()).abs() < 1e-12 * q.abs());
    }

    #[test]
    fn apply_operator_examples() {
        let op = unit_interval(2);
        // constants are fixed points of the H image and scale by mass in dual form
        let c = Field::constant(op.grid(), 2.0);
        let hc = op.apply_operator(&c).unwrap();
        assert_eq!(hc.values, vec![2.0, 2.0]);
        let dc = op.apply_operator_dual(&c).unwrap();
        assert_eq!(dc.values, vec![1.0, 1.0]);

        // hand 2x2 arithmetic for v = (1, 0)
        let v = Field::from_values(vec![1.0, 0.0]);
        let dual = op.apply_operator_dual(&v).unwrap();
        assert!((dual.values[0] - 1.5).abs() < 1e-15);
        assert!((dual.values[1] + 1.0).abs() < 1e-15);
        let image = op.apply_operator(&v).unwrap();
        assert!((image.values[0] - 3.0).abs() < 1e-14);
        assert!((image.values[1] + 2.0).abs() < 1e-14);

        let zero = Field::zeros(2);
        assert_eq!(op.apply_operator(&zero).unwrap().values, vec![0.0, 0.0]);

        assert!(matches!(
            op.apply_operator(&Field::zeros(3)),
            Err(DomainError::DimensionMismatch { field: 3, grid: 2 })
        ));
    }

    #[test]
    fn stiffness_is_symmetric_and_positive_semidefinite() {
        let op = assemble_operator(&build_grid(&GridConfig::radial(1.0, 5.0, 23, 2)).unwrap());
        let n = op.len();
        // materialize dense K by applying to basis vectors
        let mut k = vec![vec![0.0; n]; n];
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            let col = op.apply_stiffness(&e);
            for i in 0..n {
                k[i][j] = col[i];
            }
        }
        let mut max_asym = 0.0f64;
        let mut max_abs = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                max_asym = max_asym.max((k[i][j] - k[j][i]).abs());
                max_abs = max_abs.max(k[i][j].abs());
            }
        }
        assert_eq!(max_asym, 0.0);
        // Cholesky of K + delta*I certifies positive semidefiniteness
        let delta = 1e-12 * max_abs;
        let mut diag = vec![0.0; n];
        for i in 0..n {
            diag[i] = k[i][i] + delta;
        }
        let off: Vec<f64> = (0..n - 1).map(|i| k[i][i + 1]).collect();
        assert!(SymTridiag { diag, off }.ldlt().is_ok());
        // M diagonal, strictly positive
        assert!(op.mass().iter().all(|&m| m > 0.0));
    }

    #[test]
    fn rayleigh_quotient_converges_at_second_order() {
        // u = cos(pi x) is a Neumann eigenfunction of -Δ+1 with value pi^2+1
        let target = std::f64::consts::PI.powi(2) + 1.0;
        let mut errs = Vec::new();
        for n in [51usize, 101, 201] {
            let op = unit_interval(n);
            let u = Field::from_fn(op.grid(), |x| (std::f64::consts::PI * x).cos());
            let q = op.v_inner(&u, &u) / op.h_inner(&u, &u);
            errs.push((q - target).abs());
        }
        let r1 = errs[0] / errs[1];
        let r2 = errs[1] / errs[2];
        assert!((3.3..4.7).contains(&r1), "ratio {r1}");
        assert!((3.3..4.7).contains(&r2), "ratio {r2}");
    }

    #[test]
    fn nodal_residual_converges_at_second_order() {
        // (K+M)u against (pi^2+1) M u for u = cos(pi x), in M^{-1}-weighted form
        let target = std::f64::consts::PI.powi(2) + 1.0;
        let mut errs = Vec::new();
        for n in [101usize, 201, 401] {
            let op = unit_interval(n);
            let u = Field::from_fn(op.grid(), |x| (std::f64::consts::PI * x).cos());
            let au = op.apply_operator(&u).unwrap();
            let err = au
                .values
                .iter()
                .zip(&u.values)
                .map(|(&a, &v)| (a - target * v).abs())
                .fold(0.0f64, f64::max);
            errs.push(err);
        }
        let r1 = errs[0] / errs[1];
        let r2 = errs[1] / errs[2];
        assert!((3.2..4.8).contains(&r1), "ratio {r1}");
        assert!((3.2..4.8).contains(&r2), "ratio {r2}");
    }
}
