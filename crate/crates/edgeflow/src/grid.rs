//! Space-time discretization of the singular neighborhood `(0,1] x B x F`.
//!
//! * Radial direction: a graded mesh `x_i = ((i+1)/N)^p` clustered at the
//!   edge, with finite-volume cells chosen so the discrete Laplacian is
//!   symmetric with respect to the measure `x^f dx` (see the solver module).
//! * Link and base directions: equispaced samples on a circle with exact
//!   discrete Fourier analysis/synthesis, or a single sample for
//!   link-constant data. Round-sphere links are handled mode-wise only.
//! * Time: a uniform grid on `[0, T]`.
//!
//! Fields live either in point space ([`SpaceTimeField`], indexed
//! `[t][x][link][base]`) or in angular mode space ([`ModeField`], same shape
//! with angular axes holding Fourier coefficients); the two are exact
//! inverses of each other on the stored samples.

use crate::error::{Error, Result};
use crate::geometry::{BaseSpec, EdgeConfig, LinkSpec};
use crate::scalar::Scalar;
use std::sync::Arc;

/// Graded radial mesh on (0, 1] with finite-volume cells for `x^f dx`.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialGrid<T> {
    pub f: usize,
    /// Grading exponent p >= 1; nodes are `((i+1)/N)^p`.
    pub grading: T,
    /// Node positions, strictly increasing, last node = 1.
    pub nodes: Vec<T>,
    /// Cell boundaries, length N+1, `edges[0] = 0`, `edges[N] = 1`.
    pub edges: Vec<T>,
    /// Cell masses `integral of x^f dx` over each cell.
    pub weights: Vec<T>,
}

impl<T: Scalar> RadialGrid<T> {
    pub fn new(f: usize, n: usize, grading: T) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidInput(format!("radial grid needs >= 3 nodes, got {n}")));
        }
        if !(grading >= T::one()) {
            return Err(Error::InvalidInput(format!("grading exponent must be >= 1, got {grading}")));
        }
        let nf = T::of_usize(n);
        let nodes: Vec<T> =
            (0..n).map(|i| (T::of_usize(i + 1) / nf).powf(grading)).collect();
        let mut edges = Vec::with_capacity(n + 1);
        edges.push(T::zero());
        for i in 1..n {
            edges.push(((T::of_usize(i) + T::lit(0.5)) / nf).powf(grading));
        }
        edges.push(T::one());
        let fp1 = T::of_usize(f + 1);
        let weights: Vec<T> = (0..n)
            .map(|i| (edges[i + 1].powi((f + 1) as i32) - edges[i].powi((f + 1) as i32)) / fp1)
            .collect();
        Ok(RadialGrid { f, grading, nodes, edges, weights })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// One angular basis function on a sampled circle direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngularMode<T> {
    /// Frequency level k (0 = constant).
    pub level: usize,
    /// Laplacian eigenvalue `(2 pi k / L)^2`.
    pub lambda: T,
}

/// An angular direction: either trivial (a single sample carrying
/// direction-constant data) or a circle of circumference L sampled at an odd
/// number of equispaced points with exact trigonometric analysis.
///
/// Modes are ordered `const, cos_1, sin_1, cos_2, sin_2, ...` and are
/// orthonormal in `L^2` of the circle, so analysis and synthesis are exact
/// mutual inverses on the sample set.
#[derive(Debug, Clone, PartialEq)]
pub struct AngularGrid<T> {
    /// None marks the trivial direction.
    pub circumference: Option<T>,
    /// Arc-length sample positions.
    pub points: Vec<T>,
    pub modes: Vec<AngularMode<T>>,
    /// Synthesis matrix, row-major `[point][mode]`.
    synth: Vec<T>,
    /// Analysis matrix, row-major `[mode][point]`.
    anal: Vec<T>,
}

impl<T: Scalar> AngularGrid<T> {
    pub fn trivial() -> Self {
        AngularGrid {
            circumference: None,
            points: vec![T::zero()],
            modes: vec![AngularMode { level: 0, lambda: T::zero() }],
            synth: vec![T::one()],
            anal: vec![T::one()],
        }
    }

    pub fn circle(circumference: T, n_points: usize) -> Result<Self> {
        if !(circumference > T::zero()) {
            return Err(Error::InvalidInput(format!(
                "circle circumference must be positive, got {circumference}"
            )));
        }
        if n_points < 3 || n_points % 2 == 0 {
            return Err(Error::InvalidInput(format!(
                "circle sampling needs an odd point count >= 3, got {n_points}"
            )));
        }
        let l = circumference;
        let n = n_points;
        let nf = T::of_usize(n);
        let points: Vec<T> = (0..n).map(|q| l * T::of_usize(q) / nf).collect();
        let levels = (n - 1) / 2;
        let omega0 = T::lit(std::f64::consts::TAU) / l;
        let mut modes = vec![AngularMode { level: 0, lambda: T::zero() }];
        for k in 1..=levels {
            let lam = omega0 * omega0 * T::of_usize(k * k);
            modes.push(AngularMode { level: k, lambda: lam });
            modes.push(AngularMode { level: k, lambda: lam });
        }
        // Orthonormal basis values: 1/sqrt(L), sqrt(2/L) cos(k w0 a),
        // sqrt(2/L) sin(k w0 a); quadrature weight L/n makes the discrete
        // pairing exact for band-limited data.
        let inv_sqrt_l = l.sqrt().recip();
        let amp = (T::lit(2.0) / l).sqrt();
        let mut synth = vec![T::zero(); n * n];
        for (q, &a) in points.iter().enumerate() {
            synth[q * n] = inv_sqrt_l;
            for k in 1..=levels {
                let phase = omega0 * T::of_usize(k) * a;
                synth[q * n + 2 * k - 1] = amp * phase.cos();
                synth[q * n + 2 * k] = amp * phase.sin();
            }
        }
        let dq = l / nf;
        let mut anal = vec![T::zero(); n * n];
        for c in 0..n {
            for q in 0..n {
                anal[c * n + q] = synth[q * n + c] * dq;
            }
        }
        Ok(AngularGrid { circumference: Some(l), points, modes, synth, anal })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Shortest arc distance between two sample indices.
    pub fn arc_distance(&self, i: usize, j: usize) -> T {
        match self.circumference {
            None => T::zero(),
            Some(l) => {
                let diff = (self.points[i] - self.points[j]).abs();
                diff.min(l - diff)
            }
        }
    }

    /// Applies the analysis (points -> coefficients) matrix to one column.
    fn analyze(&self, data: &[T], out: &mut [T]) {
        let n = self.len();
        for (c, o) in out.iter_mut().enumerate() {
            let row = &self.anal[c * n..(c + 1) * n];
            *o = row.iter().zip(data).map(|(&w, &v)| w * v).sum();
        }
    }

    fn synthesize(&self, coeffs: &[T], out: &mut [T]) {
        let n = self.len();
        for (q, o) in out.iter_mut().enumerate() {
            let row = &self.synth[q * n..(q + 1) * n];
            *o = row.iter().zip(coeffs).map(|(&w, &v)| w * v).sum();
        }
    }

    /// In mode space, the arc-length derivative: the coefficient pair of
    /// level k maps `(c_cos, c_sin) -> (k w0 c_sin, -k w0 c_cos)`.
    pub fn mode_derivative(&self, coeffs: &mut [T]) {
        let Some(l) = self.circumference else {
            coeffs[0] = T::zero();
            return;
        };
        let omega0 = T::lit(std::f64::consts::TAU) / l;
        coeffs[0] = T::zero();
        let levels = (self.len() - 1) / 2;
        for k in 1..=levels {
            let om = omega0 * T::of_usize(k);
            let c = coeffs[2 * k - 1];
            let s = coeffs[2 * k];
            coeffs[2 * k - 1] = om * s;
            coeffs[2 * k] = -om * c;
        }
    }
}

/// Sampling resolution for a [`Grid`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridParams<T> {
    pub n_radial: usize,
    /// Radial grading exponent (>= 1; 2 clusters nodes at the edge).
    pub grading: T,
    /// Odd count of link samples; 1 restricts to link-constant data.
    pub n_link_points: usize,
    /// Count of base samples; 1 restricts to base-constant data.
    pub n_base_points: usize,
    /// Number of time nodes on [0, t_final], including both ends.
    pub n_time: usize,
    pub t_final: T,
}

impl<T: Scalar> GridParams<T> {
    /// Modest resolution suitable for tests and quick runs.
    pub fn coarse(t_final: T) -> Self {
        GridParams {
            n_radial: 48,
            grading: T::lit(2.0),
            n_link_points: 1,
            n_base_points: 1,
            n_time: 33,
            t_final,
        }
    }
}

/// A full space-time grid tied to an edge configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    pub cfg: EdgeConfig<T>,
    pub radial: RadialGrid<T>,
    pub link: AngularGrid<T>,
    pub base: AngularGrid<T>,
    /// Uniform time nodes, `times[0] = 0`, last = t_final.
    pub times: Vec<T>,
}

impl<T: Scalar> Grid<T> {
    pub fn new(cfg: EdgeConfig<T>, params: GridParams<T>) -> Result<Arc<Self>> {
        if params.n_time < 3 {
            return Err(Error::InvalidInput(format!(
                "time grid needs >= 3 nodes, got {}",
                params.n_time
            )));
        }
        if !(params.t_final > T::zero()) {
            return Err(Error::InvalidInput(format!(
                "final time must be positive, got {}",
                params.t_final
            )));
        }
        let radial = RadialGrid::new(cfg.f(), params.n_radial, params.grading)?;
        let link = match (&cfg.link, params.n_link_points) {
            (_, 1) => AngularGrid::trivial(),
            (LinkSpec::Circle { circumference }, n) => AngularGrid::circle(*circumference, n)?,
            (_, n) => {
                return Err(Error::UnsupportedGeometry(format!(
                    "link-resolved sampling ({n} points) is only available for circle links; \
                     round-sphere and explicit-spectrum links are handled mode-wise"
                )));
            }
        };
        let base = match (&cfg.base, params.n_base_points) {
            (_, 1) => AngularGrid::trivial(),
            (BaseSpec::FlatTorus { lengths }, n) if lengths.len() == 1 => {
                AngularGrid::circle(lengths[0], n)?
            }
            (BaseSpec::FlatTorus { .. }, n) => {
                return Err(Error::UnsupportedGeometry(format!(
                    "base-resolved sampling ({n} points) is only available for 1-dimensional \
                     torus bases"
                )));
            }
            (BaseSpec::Point, n) => {
                return Err(Error::InvalidInput(format!(
                    "a point base admits exactly one base sample, got {n}"
                )));
            }
        };
        let nt = params.n_time;
        let dt = params.t_final / T::of_usize(nt - 1);
        let times: Vec<T> = (0..nt).map(|j| dt * T::of_usize(j)).collect();
        Ok(Arc::new(Grid { cfg, radial, link, base, times }))
    }

    /// (time, radial, link, base) sample counts.
    pub fn dims(&self) -> (usize, usize, usize, usize) {
        (self.times.len(), self.radial.len(), self.link.len(), self.base.len())
    }

    pub fn dt(&self) -> T {
        self.times[1] - self.times[0]
    }

    pub fn t_final(&self) -> T {
        *self.times.last().expect("time grid is nonempty")
    }

    pub fn space_len(&self) -> usize {
        self.radial.len() * self.link.len() * self.base.len()
    }

    fn flat_index(&self, it: usize, ix: usize, il: usize, ib: usize) -> usize {
        let (_, nx, nl, nb) = self.dims();
        ((it * nx + ix) * nl + il) * nb + ib
    }
}

macro_rules! field_common {
    ($name:ident) => {
        impl<T: Scalar> $name<T> {
            pub fn zeros(grid: &Arc<Grid<T>>) -> Self {
                let (nt, nx, nl, nb) = grid.dims();
                $name { grid: Arc::clone(grid), data: vec![T::zero(); nt * nx * nl * nb] }
            }

            pub fn grid(&self) -> &Arc<Grid<T>> {
                &self.grid
            }

            pub fn idx(&self, it: usize, ix: usize, il: usize, ib: usize) -> usize {
                self.grid.flat_index(it, ix, il, ib)
            }

            pub fn at(&self, it: usize, ix: usize, il: usize, ib: usize) -> T {
                self.data[self.idx(it, ix, il, ib)]
            }

            pub fn at_mut(&mut self, it: usize, ix: usize, il: usize, ib: usize) -> &mut T {
                let i = self.idx(it, ix, il, ib);
                &mut self.data[i]
            }

            /// Contiguous spatial slice at one time node.
            pub fn time_slice(&self, it: usize) -> &[T] {
                let n = self.grid.space_len();
                &self.data[it * n..(it + 1) * n]
            }

            pub fn time_slice_mut(&mut self, it: usize) -> &mut [T] {
                let n = self.grid.space_len();
                &mut self.data[it * n..(it + 1) * n]
            }

            pub fn sup_norm(&self) -> T {
                self.data.iter().fold(T::zero(), |m, &v| m.max(v.abs()))
            }

            pub fn sup_distance(&self, other: &Self) -> T {
                debug_assert_eq!(self.data.len(), other.data.len());
                self.data
                    .iter()
                    .zip(&other.data)
                    .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()))
            }

            /// Pointwise combination `self + c * other`.
            pub fn axpy(&mut self, c: T, other: &Self) {
                debug_assert_eq!(self.data.len(), other.data.len());
                for (a, &b) in self.data.iter_mut().zip(&other.data) {
                    *a += c * b;
                }
            }

            pub fn scale(&mut self, c: T) {
                for a in self.data.iter_mut() {
                    *a *= c;
                }
            }
        }
    };
}

/// Point-space samples `u(t_j, x_i, z_q, y_r)`, layout `[t][x][link][base]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeField<T> {
    grid: Arc<Grid<T>>,
    pub data: Vec<T>,
}

/// Angular-mode coefficients with the same layout; the radial and time axes
/// stay pointwise.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeField<T> {
    grid: Arc<Grid<T>>,
    pub data: Vec<T>,
}

field_common!(SpaceTimeField);
field_common!(ModeField);

impl<T: Scalar> SpaceTimeField<T> {
    /// Samples `f(t, x, link_arc, base_arc)` over the grid.
    pub fn from_fn(grid: &Arc<Grid<T>>, mut f: impl FnMut(T, T, T, T) -> T) -> Self {
        let mut field = Self::zeros(grid);
        let (nt, nx, nl, nb) = grid.dims();
        let mut i = 0;
        for it in 0..nt {
            let t = grid.times[it];
            for ix in 0..nx {
                let x = grid.radial.nodes[ix];
                for il in 0..nl {
                    let a = grid.link.points[il];
                    for ib in 0..nb {
                        field.data[i] = f(t, x, a, grid.base.points[ib]);
                        i += 1;
                    }
                }
            }
        }
        field
    }

    /// Exact angular analysis along both angular axes.
    pub fn to_modes(&self) -> ModeField<T> {
        let mut out = ModeField::zeros(&self.grid);
        let (nt, nx, nl, nb) = self.grid.dims();
        let mut link_buf = vec![T::zero(); nl];
        let mut base_buf = vec![T::zero(); nb];
        let mut scratch = self.data.clone();
        for it in 0..nt {
            for ix in 0..nx {
                let off = self.idx(it, ix, 0, 0);
                // Base axis first (stride 1), then link axis (stride nb).
                for il in 0..nl {
                    let seg = off + il * nb;
                    self.grid.base.analyze(&scratch[seg..seg + nb], &mut base_buf);
                    scratch[seg..seg + nb].copy_from_slice(&base_buf);
                }
                for ib in 0..nb {
                    let col: Vec<T> = (0..nl).map(|il| scratch[off + il * nb + ib]).collect();
                    self.grid.link.analyze(&col, &mut link_buf);
                    for il in 0..nl {
                        out.data[off + il * nb + ib] = link_buf[il];
                    }
                }
            }
        }
        out
    }
}

impl<T: Scalar> ModeField<T> {
    /// Exact angular synthesis back to point samples.
    pub fn to_points(&self) -> SpaceTimeField<T> {
        let mut out = SpaceTimeField::zeros(&self.grid);
        let (nt, nx, nl, nb) = self.grid.dims();
        let mut link_buf = vec![T::zero(); nl];
        let mut base_buf = vec![T::zero(); nb];
        let mut scratch = self.data.clone();
        for it in 0..nt {
            for ix in 0..nx {
                let off = self.idx(it, ix, 0, 0);
                for ib in 0..nb {
                    let col: Vec<T> = (0..nl).map(|il| scratch[off + il * nb + ib]).collect();
                    self.grid.link.synthesize(&col, &mut link_buf);
                    for il in 0..nl {
                        scratch[off + il * nb + ib] = link_buf[il];
                    }
                }
                for il in 0..nl {
                    let seg = off + il * nb;
                    self.grid.base.synthesize(&scratch[seg..seg + nb], &mut base_buf);
                    out.data[seg..seg + nb].copy_from_slice(&base_buf);
                }
            }
        }
        out
    }
}

/// First radial derivative by second-order finite differences on the graded
/// mesh (three-point stencils, one-sided at both ends).
pub fn radial_derivative<T: Scalar>(u: &SpaceTimeField<T>) -> SpaceTimeField<T> {
    let grid = u.grid().clone();
    let (nt, nx, nl, nb) = grid.dims();
    let x = &grid.radial.nodes;
    let mut out = SpaceTimeField::zeros(&grid);
    let na = nl * nb;
    for it in 0..nt {
        for ix in 0..nx {
            // Each second-order stencil over nodes (i0, i1, i2) is
            // expressed as a * (u_{i1} - u_{i0}) + b * (u_{i2} - u_{i1}),
            // which vanishes on constants to the last bit.
            let (a, b, i0, i1, i2) = if ix == 0 {
                let h1 = x[1] - x[0];
                let h2 = x[2] - x[1];
                (
                    (T::lit(2.0) * h1 + h2) / (h1 * (h1 + h2)),
                    -h1 / (h2 * (h1 + h2)),
                    0usize,
                    1usize,
                    2usize,
                )
            } else if ix == nx - 1 {
                let h1 = x[nx - 2] - x[nx - 3];
                let h2 = x[nx - 1] - x[nx - 2];
                (
                    -h2 / (h1 * (h1 + h2)),
                    (h1 + T::lit(2.0) * h2) / (h2 * (h1 + h2)),
                    nx - 3,
                    nx - 2,
                    nx - 1,
                )
            } else {
                let h1 = x[ix] - x[ix - 1];
                let h2 = x[ix + 1] - x[ix];
                (
                    h2 / (h1 * (h1 + h2)),
                    h1 / (h2 * (h1 + h2)),
                    ix - 1,
                    ix,
                    ix + 1,
                )
            };
            let dst = out.idx(it, ix, 0, 0);
            for ia in 0..na {
                let u0 = u.data[u.idx(it, i0, 0, 0) + ia];
                let u1 = u.data[u.idx(it, i1, 0, 0) + ia];
                let u2 = u.data[u.idx(it, i2, 0, 0) + ia];
                out.data[dst + ia] = a * (u1 - u0) + b * (u2 - u1);
            }
        }
    }
    out
}

/// Time derivative by second-order differences on the uniform time grid.
pub fn time_derivative<T: Scalar>(u: &SpaceTimeField<T>) -> SpaceTimeField<T> {
    let grid = u.grid().clone();
    let (nt, ..) = grid.dims();
    let dt = grid.dt();
    let half = (T::lit(2.0) * dt).recip();
    let mut out = SpaceTimeField::zeros(&grid);
    let n = grid.space_len();
    for it in 0..nt {
        for i in 0..n {
            // Difference form everywhere: exact zero on constants.
            let v = if it == 0 {
                let d1 = u.time_slice(1)[i] - u.time_slice(0)[i];
                let d2 = u.time_slice(2)[i] - u.time_slice(1)[i];
                (T::lit(3.0) * d1 - d2) * half
            } else if it == nt - 1 {
                let d1 = u.time_slice(nt - 1)[i] - u.time_slice(nt - 2)[i];
                let d2 = u.time_slice(nt - 2)[i] - u.time_slice(nt - 3)[i];
                (T::lit(3.0) * d1 - d2) * half
            } else {
                (u.time_slice(it + 1)[i] - u.time_slice(it - 1)[i]) * half
            };
            out.time_slice_mut(it)[i] = v;
        }
    }
    out
}

/// Arc-length derivative along the link direction, computed spectrally
/// (exact on the resolved band). The geometric edge derivative is
/// `x^{-1}` times this.
pub fn link_arc_derivative<T: Scalar>(u: &SpaceTimeField<T>) -> SpaceTimeField<T> {
    angular_derivative(u, true)
}

/// Arc-length derivative along the base direction, computed spectrally.
pub fn base_derivative<T: Scalar>(u: &SpaceTimeField<T>) -> SpaceTimeField<T> {
    angular_derivative(u, false)
}

fn angular_derivative<T: Scalar>(u: &SpaceTimeField<T>, along_link: bool) -> SpaceTimeField<T> {
    let grid = u.grid().clone();
    let mut modes = u.to_modes();
    let (nt, nx, nl, nb) = grid.dims();
    let mut buf = vec![T::zero(); if along_link { nl } else { nb }];
    for it in 0..nt {
        for ix in 0..nx {
            let off = modes.idx(it, ix, 0, 0);
            if along_link {
                for ib in 0..nb {
                    for il in 0..nl {
                        buf[il] = modes.data[off + il * nb + ib];
                    }
                    grid.link.mode_derivative(&mut buf);
                    for il in 0..nl {
                        modes.data[off + il * nb + ib] = buf[il];
                    }
                }
            } else {
                for il in 0..nl {
                    let seg = off + il * nb;
                    buf.copy_from_slice(&modes.data[seg..seg + nb]);
                    grid.base.mode_derivative(&mut buf);
                    modes.data[seg..seg + nb].copy_from_slice(&buf);
                }
            }
        }
    }
    modes.to_points()
}
