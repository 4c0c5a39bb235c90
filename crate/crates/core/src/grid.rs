//! Uniform cell-centred rectangular grid with ghost-cell boundary closures,
//! the discrete differential operators built on it, and the Dirichlet
//! pressure solve.
//!
//! Nodes sit at cell centres `((i + 1/2) hx, (j + 1/2) hy)`. Boundary
//! conditions are imposed through a virtual ghost layer of depth one:
//! even reflection (`f_ghost = f_inside`) for [`BcKind::NeumannZero`] and
//! odd reflection (`f_ghost = -f_inside`) for [`BcKind::DirichletZero`].
//! Vector components are extended to the ghost layer by constant
//! extrapolation, which makes the central divergence the exact negative
//! adjoint of the central gradient up to the boundary sum returned by
//! [`boundary_flux`].

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
}

impl Grid {
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        if nx < 4 || ny < 4 {
            return Err(Error::config(0, format!("grid needs nx, ny >= 4 (got {nx}x{ny})")));
        }
        if !(lx > 0.0 && ly > 0.0 && lx.is_finite() && ly.is_finite()) {
            return Err(Error::config(0, "grid extents lx, ly must be positive"));
        }
        Ok(Self { nx, ny, lx, ly })
    }

    #[inline]
    pub fn hx(&self) -> f64 {
        self.lx / self.nx as f64
    }

    #[inline]
    pub fn hy(&self) -> f64 {
        self.ly / self.ny as f64
    }

    #[inline]
    pub fn cell_area(&self) -> f64 {
        self.hx() * self.hy()
    }

    #[inline]
    pub fn area(&self) -> f64 {
        self.lx * self.ly
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    /// Always false: `Grid::new` rejects empty grids.
    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.nx && j < self.ny);
        j * self.nx + i
    }

    /// Cell-centre x coordinate of column `i`.
    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.hx()
    }

    #[inline]
    pub fn y(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.hy()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BcKind {
    NeumannZero,
    DirichletZero,
}

impl BcKind {
    /// Sign applied to the mirrored interior value to obtain the ghost value.
    #[inline]
    fn ghost_sign(self) -> f64 {
        match self {
            BcKind::NeumannZero => 1.0,
            BcKind::DirichletZero => -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub grid: Grid,
    pub values: Vec<f64>,
    pub bc: BcKind,
}

impl ScalarField {
    pub fn zeros(grid: Grid, bc: BcKind) -> Self {
        Self::constant(grid, bc, 0.0)
    }

    pub fn constant(grid: Grid, bc: BcKind, c: f64) -> Self {
        Self {
            grid,
            values: vec![c; grid.len()],
            bc,
        }
    }

    /// Samples `f(x, y)` at every cell centre.
    pub fn from_fn(grid: Grid, bc: BcKind, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                values.push(f(grid.x(i), grid.y(j)));
            }
        }
        Self { grid, values, bc }
    }

    pub fn from_values(grid: Grid, bc: BcKind, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), grid.len(), "field size does not match grid");
        Self { grid, values, bc }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.idx(i, j)]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
            bc: self.bc,
        }
    }

    pub fn with_bc(mut self, bc: BcKind) -> Self {
        self.bc = bc;
        self
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub grid: Grid,
    pub ux: Vec<f64>,
    pub uy: Vec<f64>,
}

impl VectorField {
    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            ux: vec![0.0; grid.len()],
            uy: vec![0.0; grid.len()],
        }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> (f64, f64)) -> Self {
        let mut v = Self::zeros(grid);
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let (a, b) = f(grid.x(i), grid.y(j));
                let k = grid.idx(i, j);
                v.ux[k] = a;
                v.uy[k] = b;
            }
        }
        v
    }

    pub fn is_finite(&self) -> bool {
        self.ux.iter().chain(&self.uy).all(|v| v.is_finite())
    }

    /// Pointwise product `s * v`.
    pub fn scaled_by(&self, s: &ScalarField) -> Self {
        Self {
            grid: self.grid,
            ux: self.ux.iter().zip(&s.values).map(|(a, b)| a * b).collect(),
            uy: self.uy.iter().zip(&s.values).map(|(a, b)| a * b).collect(),
        }
    }

    /// Node-wise Euclidean magnitude maximum.
    pub fn linfnorm(&self) -> f64 {
        self.ux
            .iter()
            .zip(&self.uy)
            .map(|(a, b)| a.hypot(*b))
            .fold(0.0, f64::max)
    }

    /// L2 norm `(sum |v|^2 hx hy)^(1/2)`.
    pub fn l2norm(&self) -> f64 {
        let s: f64 = self.ux.iter().chain(&self.uy).map(|a| a * a).sum();
        (s * self.grid.cell_area()).sqrt()
    }
}

// ---------------------------------------------------------------------------
// Slice-level stencils. These are shared by the field operators and by the
// Newton/Krylov machinery in the solver.
// ---------------------------------------------------------------------------

/// `out = -laplacian(x)` with ghost closure `bc`.
pub(crate) fn neg_laplacian_into(grid: &Grid, bc: BcKind, x: &[f64], out: &mut [f64]) {
    let (nx, ny) = (grid.nx, grid.ny);
    let ihx2 = 1.0 / (grid.hx() * grid.hx());
    let ihy2 = 1.0 / (grid.hy() * grid.hy());
    let s = bc.ghost_sign();
    for j in 0..ny {
        let row = j * nx;
        for i in 0..nx {
            let k = row + i;
            let c = x[k];
            let w = if i > 0 { x[k - 1] } else { s * c };
            let e = if i + 1 < nx { x[k + 1] } else { s * c };
            let so = if j > 0 { x[k - nx] } else { s * c };
            let no = if j + 1 < ny { x[k + nx] } else { s * c };
            out[k] = (2.0 * c - w - e) * ihx2 + (2.0 * c - so - no) * ihy2;
        }
    }
}

/// Diagonal of `-laplacian` under `bc`.
pub(crate) fn neg_laplacian_diag(grid: &Grid, bc: BcKind) -> Vec<f64> {
    let ihx2 = 1.0 / (grid.hx() * grid.hx());
    let ihy2 = 1.0 / (grid.hy() * grid.hy());
    let s = bc.ghost_sign();
    let mut d = vec![0.0; grid.len()];
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            // each ghost neighbour folds -s onto the centre coefficient
            let bx = (i == 0) as u8 + (i + 1 == grid.nx) as u8;
            let by = (j == 0) as u8 + (j + 1 == grid.ny) as u8;
            let dx = 2.0 - s * f64::from(bx);
            let dy = 2.0 - s * f64::from(by);
            d[grid.idx(i, j)] = dx * ihx2 + dy * ihy2;
        }
    }
    d
}

fn gradient_into(grid: &Grid, bc: BcKind, f: &[f64], gx: &mut [f64], gy: &mut [f64]) {
    let (nx, ny) = (grid.nx, grid.ny);
    let i2hx = 0.5 / grid.hx();
    let i2hy = 0.5 / grid.hy();
    let s = bc.ghost_sign();
    for j in 0..ny {
        let row = j * nx;
        for i in 0..nx {
            let k = row + i;
            let c = f[k];
            let w = if i > 0 { f[k - 1] } else { s * c };
            let e = if i + 1 < nx { f[k + 1] } else { s * c };
            let so = if j > 0 { f[k - nx] } else { s * c };
            let no = if j + 1 < ny { f[k + nx] } else { s * c };
            gx[k] = (e - w) * i2hx;
            gy[k] = (no - so) * i2hy;
        }
    }
}

fn divergence_into(grid: &Grid, vx: &[f64], vy: &[f64], out: &mut [f64]) {
    let (nx, ny) = (grid.nx, grid.ny);
    let i2hx = 0.5 / grid.hx();
    let i2hy = 0.5 / grid.hy();
    for j in 0..ny {
        let row = j * nx;
        for i in 0..nx {
            let k = row + i;
            let w = if i > 0 { vx[k - 1] } else { vx[k] };
            let e = if i + 1 < nx { vx[k + 1] } else { vx[k] };
            let so = if j > 0 { vy[k - nx] } else { vy[k] };
            let no = if j + 1 < ny { vy[k + nx] } else { vy[k] };
            out[k] = (e - w) * i2hx + (no - so) * i2hy;
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

// ---------------------------------------------------------------------------
// Field-level operators.
// ---------------------------------------------------------------------------

/// Five-point Laplacian with the field's own ghost closure.
pub fn laplacian(f: &ScalarField) -> ScalarField {
    let mut out = vec![0.0; f.grid.len()];
    neg_laplacian_into(&f.grid, f.bc, &f.values, &mut out);
    out.iter_mut().for_each(|v| *v = -*v);
    ScalarField::from_values(f.grid, f.bc, out)
}

/// Central-difference gradient with the field's ghost closure.
pub fn gradient(f: &ScalarField) -> VectorField {
    let mut v = VectorField::zeros(f.grid);
    gradient_into(&f.grid, f.bc, &f.values, &mut v.ux, &mut v.uy);
    v
}

/// Central divergence; `bc` tags the result.
pub fn divergence(v: &VectorField, bc: BcKind) -> ScalarField {
    let mut out = vec![0.0; v.grid.len()];
    divergence_into(&v.grid, &v.ux, &v.uy, &mut out);
    ScalarField::from_values(v.grid, bc, out)
}

/// Node-wise `u . grad(f)`.
pub fn advection(u: &VectorField, f: &ScalarField) -> ScalarField {
    let g = gradient(f);
    let values = (0..f.grid.len())
        .map(|k| u.ux[k] * g.ux[k] + u.uy[k] * g.uy[k])
        .collect();
    ScalarField::from_values(f.grid, f.bc, values)
}

pub fn mean(f: &ScalarField) -> f64 {
    f.values.iter().sum::<f64>() * f.grid.cell_area() / f.grid.area()
}

pub fn inner(f: &ScalarField, g: &ScalarField) -> f64 {
    dot(&f.values, &g.values) * f.grid.cell_area()
}

pub fn l2norm(f: &ScalarField) -> f64 {
    inner(f, f).sqrt()
}

pub fn linfnorm(f: &ScalarField) -> f64 {
    f.values.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// `sqrt(<-laplacian(f), f>)`, accumulated face by face so the result is
/// non-negative and matches the quadratic form of the Laplacian exactly in
/// exact arithmetic.
pub fn h1seminorm(f: &ScalarField) -> f64 {
    let g = &f.grid;
    let (nx, ny) = (g.nx, g.ny);
    let ihx2 = 1.0 / (g.hx() * g.hx());
    let ihy2 = 1.0 / (g.hy() * g.hy());
    let v = &f.values;
    let mut sx = 0.0;
    let mut sy = 0.0;
    for j in 0..ny {
        for i in 0..nx - 1 {
            let d = v[g.idx(i + 1, j)] - v[g.idx(i, j)];
            sx += d * d;
        }
    }
    for j in 0..ny - 1 {
        for i in 0..nx {
            let d = v[g.idx(i, j + 1)] - v[g.idx(i, j)];
            sy += d * d;
        }
    }
    if f.bc == BcKind::DirichletZero {
        for j in 0..ny {
            let a = v[g.idx(0, j)];
            let b = v[g.idx(nx - 1, j)];
            sx += 2.0 * (a * a + b * b);
        }
        for i in 0..nx {
            let a = v[g.idx(i, 0)];
            let b = v[g.idx(i, ny - 1)];
            sy += 2.0 * (a * a + b * b);
        }
    }
    ((sx * ihx2 + sy * ihy2) * g.cell_area()).sqrt()
}

/// Discrete boundary integral of `phi u . n`.
///
/// Each boundary face contributes `(phi_ghost u_in + phi_in u_ghost) / 2`
/// times its length, with `phi` extended by its own closure and `u` by
/// constant extrapolation. This is precisely the boundary remainder of the
/// summation-by-parts identity
/// `<divergence(u), phi> + <u, gradient(phi)> = boundary_flux(phi, u)`.
pub fn boundary_flux(phi: &ScalarField, u: &VectorField) -> f64 {
    let g = &phi.grid;
    let (nx, ny) = (g.nx, g.ny);
    let s = phi.bc.ghost_sign();
    let face = |p: f64, v: f64| 0.5 * (s * p * v + p * v);
    let mut east_west = 0.0;
    for j in 0..ny {
        let kw = g.idx(0, j);
        let ke = g.idx(nx - 1, j);
        east_west += face(phi.values[ke], u.ux[ke]) - face(phi.values[kw], u.ux[kw]);
    }
    let mut north_south = 0.0;
    for i in 0..nx {
        let ks = g.idx(i, 0);
        let kn = g.idx(i, ny - 1);
        north_south += face(phi.values[kn], u.uy[kn]) - face(phi.values[ks], u.uy[ks]);
    }
    east_west * g.hy() + north_south * g.hx()
}

// ---------------------------------------------------------------------------
// Elliptic solve.
// ---------------------------------------------------------------------------

/// Result of an iterative linear solve.
#[derive(Debug, Clone)]
pub struct PoissonSolution {
    pub field: ScalarField,
    pub iterations: usize,
    pub residual: f64,
}

/// Jacobi-preconditioned conjugate gradients for an SPD operator.
///
/// Stops once the weighted residual norm `sqrt(w * |b - Ax|^2)` is at most
/// `target`; the recurrence residual is re-checked against the true one
/// before returning.
pub(crate) fn pcg(
    mut apply: impl FnMut(&[f64], &mut [f64]),
    diag: &[f64],
    b: &[f64],
    x: &mut [f64],
    weight: f64,
    target: f64,
    max_iter: usize,
) -> std::result::Result<(usize, f64), (usize, f64)> {
    let n = b.len();
    let mut r = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    let norm = |r: &[f64]| (weight * dot(r, r)).sqrt();
    let mut iters = 0;
    loop {
        apply(x, &mut q);
        for k in 0..n {
            r[k] = b[k] - q[k];
        }
        let mut res = norm(&r);
        if res <= target {
            return Ok((iters, res));
        }
        if iters >= max_iter {
            return Err((iters, res));
        }
        for k in 0..n {
            z[k] = r[k] / diag[k];
        }
        p.copy_from_slice(&z);
        let mut rz = dot(&r, &z);
        while iters < max_iter {
            apply(&p, &mut q);
            let pq = dot(&p, &q);
            if pq <= 0.0 || !pq.is_finite() {
                return Err((iters, res));
            }
            let alpha = rz / pq;
            for k in 0..n {
                x[k] += alpha * p[k];
                r[k] -= alpha * q[k];
            }
            iters += 1;
            res = norm(&r);
            if res <= target {
                break;
            }
            for k in 0..n {
                z[k] = r[k] / diag[k];
            }
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for k in 0..n {
                p[k] = z[k] + beta * p[k];
            }
        }
        // Fall through to the true-residual check at the top of the loop.
    }
}

/// Solves `-laplacian(p) = rhs` with homogeneous Dirichlet data.
pub fn solve_poisson_dirichlet(rhs: &ScalarField, tol: f64, max_iter: usize) -> Result<ScalarField> {
    let guess = ScalarField::zeros(rhs.grid, BcKind::DirichletZero);
    solve_poisson_dirichlet_from(rhs, &guess, tol, max_iter).map(|s| s.field)
}

/// As [`solve_poisson_dirichlet`], starting the iteration from `guess`.
pub fn solve_poisson_dirichlet_from(
    rhs: &ScalarField,
    guess: &ScalarField,
    tol: f64,
    max_iter: usize,
) -> Result<PoissonSolution> {
    let grid = rhs.grid;
    let diag = neg_laplacian_diag(&grid, BcKind::DirichletZero);
    let target = tol * l2norm(rhs).max(1.0);
    let mut x = guess.values.clone();
    let apply = |v: &[f64], out: &mut [f64]| neg_laplacian_into(&grid, BcKind::DirichletZero, v, out);
    match pcg(apply, &diag, &rhs.values, &mut x, grid.cell_area(), target, max_iter) {
        Ok((iterations, residual)) => Ok(PoissonSolution {
            field: ScalarField::from_values(grid, BcKind::DirichletZero, x),
            iterations,
            residual,
        }),
        Err((iterations, residual)) => Err(Error::NonConvergence {
            iterations,
            residual,
        }),
    }
}

/// Text snapshot: a `# CHDF <name> nx= ny= lx= ly= t=` header, then `ny`
/// rows of `nx` values at 17 significant digits, `y` outermost.
pub fn write_snapshot(f: &ScalarField, name: &str, t: f64) -> String {
    let g = f.grid;
    let mut out = format!("# CHDF {name} nx={} ny={} lx={} ly={} t={:.16e}\n", g.nx, g.ny, g.lx, g.ly, t);
    for j in 0..g.ny {
        let row: Vec<String> = (0..g.nx).map(|i| format!("{:.16e}", f.at(i, j))).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

/// Inverse of [`write_snapshot`]; the field gets the no-flux closure.
pub fn read_snapshot(text: &str) -> Result<(String, f64, ScalarField)> {
    let bad = |line: usize, why: &str| Error::config(line, format!("snapshot: {why}"));
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad(1, "empty"))?;
    let mut words = header.split_whitespace();
    if words.next() != Some("#") || words.next() != Some("CHDF") {
        return Err(bad(1, "missing '# CHDF' header"));
    }
    let name = words.next().ok_or_else(|| bad(1, "missing name"))?.to_string();
    let mut kv = std::collections::HashMap::new();
    for w in words {
        let (k, v) = w.split_once('=').ok_or_else(|| bad(1, "malformed header field"))?;
        kv.insert(k, v);
    }
    let num = |k: &str| -> Result<f64> {
        kv.get(k).and_then(|v| v.parse().ok()).ok_or_else(|| bad(1, &format!("missing or invalid {k}")))
    };
    let (nx, ny) = (num("nx")? as usize, num("ny")? as usize);
    let grid = Grid::new(nx, ny, num("lx")?, num("ly")?)?;
    let mut values = Vec::with_capacity(nx * ny);
    for (j, line) in lines.enumerate().take(ny) {
        let row: std::result::Result<Vec<f64>, _> = line.split_whitespace().map(str::parse).collect();
        let row = row.map_err(|_| bad(j + 2, "invalid number"))?;
        if row.len() != nx {
            return Err(bad(j + 2, "wrong row length"));
        }
        values.extend(row);
    }
    if values.len() != nx * ny {
        return Err(bad(ny + 1, "too few rows"));
    }
    Ok((name, num("t")?, ScalarField::from_values(grid, BcKind::NeumannZero, values)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn rect(nx: usize, ny: usize) -> Grid {
        Grid::new(nx, ny, 2.0, 1.5).unwrap()
    }

    #[test]
    fn rejects_tiny_grids() {
        assert!(Grid::new(3, 8, 1.0, 1.0).is_err());
        assert!(Grid::new(8, 8, 0.0, 1.0).is_err());
    }

    #[test]
    fn constants_have_zero_laplacian_and_gradient() {
        let f = ScalarField::constant(rect(8, 6), BcKind::NeumannZero, 2.5);
        assert!(laplacian(&f).values.iter().all(|&v| v == 0.0));
        let g = gradient(&f);
        assert!(g.ux.iter().chain(&g.uy).all(|&v| v == 0.0));
        assert_eq!(mean(&f), 2.5);
        assert!((inner(&f, &f) - l2norm(&f).powi(2)).abs() < 1e-12);
        assert_eq!(h1seminorm(&f), 0.0);
    }

    #[test]
    fn linear_field_has_unit_interior_slope() {
        let g = rect(10, 7);
        let f = ScalarField::from_fn(g, BcKind::NeumannZero, |x, _| x);
        let grad = gradient(&f);
        for j in 0..g.ny {
            for i in 1..g.nx - 1 {
                assert!((grad.ux[g.idx(i, j)] - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn constant_vector_has_zero_divergence() {
        let g = rect(8, 8);
        let v = VectorField::from_fn(g, |_, _| (0.3, -1.2));
        assert!(divergence(&v, BcKind::NeumannZero).values.iter().all(|&x| x.abs() < 1e-14));
    }

    #[test]
    fn neumann_cosine_is_an_eigenfunction_to_second_order() {
        let mut errs = Vec::new();
        for n in [16, 32, 64, 128] {
            let g = Grid::new(n, 4, 3.0, 1.0).unwrap();
            let k = PI / g.lx;
            let f = ScalarField::from_fn(g, BcKind::NeumannZero, |x, _| (k * x).cos());
            let lap = laplacian(&f);
            let err = lap
                .values
                .iter()
                .zip(&f.values)
                .map(|(l, v)| (l + k * k * v).abs())
                .fold(0.0, f64::max);
            errs.push(err);
        }
        for w in errs.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!((order - 2.0).abs() < 0.05, "{errs:?}");
        }
    }

    #[test]
    fn h1_seminorm_of_cosine() {
        let g = Grid::new(256, 8, 2.0, 1.0).unwrap();
        let k = PI / g.lx;
        let f = ScalarField::from_fn(g, BcKind::NeumannZero, |x, _| (k * x).cos());
        let exact = k * (g.lx * g.ly / 2.0).sqrt();
        assert!((h1seminorm(&f) - exact).abs() < 1e-4 * exact);
    }

    #[test]
    fn h1_seminorm_matches_laplacian_quadratic_form() {
        let g = rect(9, 7);
        for bc in [BcKind::NeumannZero, BcKind::DirichletZero] {
            let f = ScalarField::from_fn(g, bc, |x, y| (3.0 * x).sin() + y * y);
            let form = -inner(&laplacian(&f), &f);
            assert!((h1seminorm(&f).powi(2) - form).abs() < 1e-10 * form.abs());
        }
    }

    #[test]
    fn poisson_zero_rhs_gives_zero() {
        let rhs = ScalarField::zeros(rect(8, 8), BcKind::DirichletZero);
        let p = solve_poisson_dirichlet(&rhs, 1e-12, 100).unwrap();
        assert!(p.values.iter().all(|&v| v == 0.0));
        assert_eq!(p.bc, BcKind::DirichletZero);
    }

    #[test]
    fn poisson_constant_rhs_is_symmetric() {
        let g = Grid::new(24, 24, 1.0, 1.0).unwrap();
        let rhs = ScalarField::constant(g, BcKind::DirichletZero, 1.0);
        let p = solve_poisson_dirichlet(&rhs, 1e-14, 2000).unwrap();
        let mut asym: f64 = 0.0;
        for j in 0..g.ny {
            for i in 0..g.nx {
                let v = p.at(i, j);
                asym = asym.max((v - p.at(g.nx - 1 - i, j)).abs());
                asym = asym.max((v - p.at(i, g.ny - 1 - j)).abs());
            }
        }
        assert!(asym < 1e-12, "{asym}");
        let res = {
            let mut r = laplacian(&p);
            r.values.iter_mut().for_each(|v| *v = -*v - 1.0);
            l2norm(&r)
        };
        assert!(res <= 1e-14 * l2norm(&rhs).max(1.0) * 1.0001);
    }

    #[test]
    fn poisson_reports_non_convergence() {
        let g = Grid::new(32, 32, 1.0, 1.0).unwrap();
        let rhs = ScalarField::constant(g, BcKind::DirichletZero, 1.0);
        assert!(matches!(
            solve_poisson_dirichlet(&rhs, 1e-14, 3),
            Err(Error::NonConvergence { iterations: 3, .. })
        ));
    }

    #[test]
    fn tangential_velocity_has_no_boundary_flux() {
        let g = rect(8, 8);
        let phi = ScalarField::from_fn(g, BcKind::NeumannZero, |x, y| x * y + 0.3);
        let mut u = VectorField::from_fn(g, |x, y| (x.sin(), y.cos()));
        assert!(boundary_flux(&phi, &VectorField::zeros(g)) == 0.0);
        for j in 0..g.ny {
            u.ux[g.idx(0, j)] = 0.0;
            u.ux[g.idx(g.nx - 1, j)] = 0.0;
        }
        for i in 0..g.nx {
            u.uy[g.idx(i, 0)] = 0.0;
            u.uy[g.idx(i, g.ny - 1)] = 0.0;
        }
        assert_eq!(boundary_flux(&phi, &u), 0.0);
    }
}
