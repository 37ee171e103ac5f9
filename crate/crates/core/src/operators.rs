//! Discretised scattering operators of the scalar model.
//!
//! `G` maps grid samples to grid samples, `H` maps grid samples to receivers, and
//! `A(f) = I - G diag(f)`. Both `G` and `H` carry the factor `k²δᵈ` (vacuum wavenumber
//! squared times the midpoint quadrature weight).

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::convolution::Convolution;
use crate::error::{check_len, Error, Result};
use crate::geometry::{incident_field, sub, Grid, IncidentField, IncidentMode, Layout, PhysicsConfig};
use crate::krylov::LinearMap;
use crate::special::{scalar_green, self_term};

/// Closed interval every contrast value must lie in.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxConstraint {
    pub lower: f64,
    pub upper: f64,
}

impl BoxConstraint {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if !(lower <= upper) || !lower.is_finite() || !upper.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "box bounds must satisfy lower <= upper, got [{lower}, {upper}]"
            )));
        }
        Ok(Self { lower, upper })
    }

    pub fn clip(&self, v: f64) -> f64 {
        v.clamp(self.lower, self.upper)
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lower && v <= self.upper
    }
}

/// Real permittivity contrast sampled on the grid, kept inside its box.
#[derive(Clone, Debug, PartialEq)]
pub struct ContrastImage {
    values: Vec<f64>,
    bounds: BoxConstraint,
}

impl ContrastImage {
    pub fn new(values: Vec<f64>, bounds: BoxConstraint) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !bounds.contains(**v)) {
            return Err(Error::InvalidArgument(format!(
                "contrast value {v} outside [{}, {}]",
                bounds.lower, bounds.upper
            )));
        }
        Ok(Self { values, bounds })
    }

    pub fn zeros(len: usize, bounds: BoxConstraint) -> Result<Self> {
        Self::new(vec![0.0; len], bounds)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn bounds(&self) -> BoxConstraint {
        self.bounds
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Treatment of the singular diagonal of `G`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SelfTermMode {
    /// Equal-area disk / equal-volume ball average of the Green's function.
    #[default]
    Disk,
    Zero,
}

/// Storage of the receiver operator.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ReceiverStorage {
    #[default]
    Dense,
    /// Green's function rows evaluated on every application.
    MatrixFree,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BundleOptions {
    pub incident: Option<IncidentMode>,
    pub self_term: SelfTermMode,
    pub receivers: ReceiverStorage,
}

/// `G`, `H`, incident fields and active-receiver lists for one scalar (2D or 3D) scene.
#[derive(Clone, Debug)]
pub struct OperatorBundle {
    grid: Grid,
    physics: PhysicsConfig,
    layout: Layout,
    scale: f64,
    green: Convolution,
    h: Option<Vec<Complex64>>,
    incident: Vec<IncidentField>,
    active: Vec<Vec<usize>>,
}

impl OperatorBundle {
    pub fn new(grid: &Grid, physics: &PhysicsConfig, layout: &Layout) -> Result<Self> {
        Self::with_options(grid, physics, layout, BundleOptions::default())
    }

    pub fn with_options(
        grid: &Grid,
        physics: &PhysicsConfig,
        layout: &Layout,
        options: BundleOptions,
    ) -> Result<Self> {
        layout.validate(grid)?;
        let dim = grid.dim();
        let k = physics.k();
        let scale = k * k * grid.cell_measure();
        let pitch = grid.pitch();
        let diag = match options.self_term {
            SelfTermMode::Disk => self_term(grid, physics),
            SelfTermMode::Zero => Complex64::new(0.0, 0.0),
        };
        let green = Convolution::new(grid, |o| {
            if o == [0, 0, 0] {
                scale * diag
            } else {
                let r = [o[0] as f64 * pitch, o[1] as f64 * pitch, o[2] as f64 * pitch];
                scale * scalar_green(&r, physics, dim).expect("nonzero offset")
            }
        });
        let mode = options.incident.unwrap_or(IncidentMode::default_for(dim));
        // the scalar model takes one field component; 3D scalar uses a point source
        let mode = if dim == 3 { IncidentMode::PointSource } else { mode };
        let incident = layout
            .transmitters
            .iter()
            .map(|s| {
                if dim == 3 {
                    scalar_incident_3d(grid, s, physics)
                } else {
                    incident_field(grid, s, physics, mode)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let mut bundle = Self {
            grid: *grid,
            physics: *physics,
            layout: layout.clone(),
            scale,
            green,
            h: None,
            incident,
            active: (0..layout.num_transmitters())
                .map(|p| layout.active_receivers(p))
                .collect(),
        };
        if options.receivers == ReceiverStorage::Dense {
            let n = grid.len();
            let mut h = Vec::with_capacity(layout.num_receivers() * n);
            for m in 0..layout.num_receivers() {
                h.extend(bundle.receiver_row(m)?);
            }
            bundle.h = Some(h);
        }
        Ok(bundle)
    }

    /// Replaces the incident fields, e.g. with fields sampled on another grid.
    pub fn with_incident(mut self, incident: Vec<IncidentField>) -> Result<Self> {
        check_len(self.layout.num_transmitters(), incident.len())?;
        for u in &incident {
            check_len(self.grid.len(), u.values.len())?;
        }
        self.incident = incident;
        Ok(self)
    }

    fn receiver_row(&self, m: usize) -> Result<Vec<Complex64>> {
        let rm = self.layout.receivers[m];
        (0..self.grid.len())
            .map(|n| {
                let g = scalar_green(&sub(&rm, &self.grid.point(n)), &self.physics, self.grid.dim())?;
                Ok(self.scale * g)
            })
            .collect()
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn physics(&self) -> &PhysicsConfig {
        &self.physics
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn num_transmitters(&self) -> usize {
        self.incident.len()
    }

    pub fn incident(&self, p: usize) -> &[Complex64] {
        &self.incident[p].values
    }

    pub fn active_receivers(&self, p: usize) -> &[usize] {
        &self.active[p]
    }

    /// The `k²δᵈ` factor folded into `G` and `H`.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn green(&self) -> &Convolution {
        &self.green
    }

    /// `G x`.
    pub fn apply_g(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
        check_len(self.len(), x.len())?;
        Ok(self.green.apply(x))
    }

    /// `Gᴴ x`.
    pub fn apply_g_adjoint(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
        check_len(self.len(), x.len())?;
        Ok(self.green.apply_adjoint(x))
    }

    /// `H x` restricted to the receivers active for transmitter `p`.
    pub fn apply_h(&self, p: usize, x: &[Complex64]) -> Result<Vec<Complex64>> {
        self.apply_h_rows(&self.active[p], x)
    }

    /// `Hᴴ y` where `y` holds one value per receiver active for transmitter `p`.
    pub fn apply_h_adjoint(&self, p: usize, y: &[Complex64]) -> Result<Vec<Complex64>> {
        self.apply_h_rows_adjoint(&self.active[p], y)
    }

    pub fn apply_h_rows(&self, rows: &[usize], x: &[Complex64]) -> Result<Vec<Complex64>> {
        let n = self.len();
        check_len(n, x.len())?;
        rows.iter()
            .map(|&m| {
                let row = self.row(m)?;
                Ok(row.iter().zip(x).map(|(a, b)| a * b).sum())
            })
            .collect()
    }

    pub fn apply_h_rows_adjoint(&self, rows: &[usize], y: &[Complex64]) -> Result<Vec<Complex64>> {
        let n = self.len();
        check_len(rows.len(), y.len())?;
        let mut out = vec![Complex64::new(0.0, 0.0); n];
        for (&m, &ym) in rows.iter().zip(y) {
            let row = self.row(m)?;
            for (o, a) in out.iter_mut().zip(row.iter()) {
                *o += a.conj() * ym;
            }
        }
        Ok(out)
    }

    fn row(&self, m: usize) -> Result<std::borrow::Cow<'_, [Complex64]>> {
        let n = self.len();
        Ok(match &self.h {
            Some(h) => std::borrow::Cow::Borrowed(&h[m * n..(m + 1) * n]),
            None => std::borrow::Cow::Owned(self.receiver_row(m)?),
        })
    }

    /// `A(f) u = u - G(f ⊙ u)`.
    pub fn apply_a(&self, f: &[f64], u: &[Complex64]) -> Result<Vec<Complex64>> {
        check_len(self.len(), f.len())?;
        check_len(self.len(), u.len())?;
        let fu: Vec<Complex64> = u.iter().zip(f).map(|(a, b)| a * b).collect();
        let g = self.green.apply(&fu);
        Ok(u.iter().zip(g).map(|(a, b)| a - b).collect())
    }

    /// `A(f)ᴴ v = v - f ⊙ (Gᴴ v)`.
    pub fn apply_a_adjoint(&self, f: &[f64], v: &[Complex64]) -> Result<Vec<Complex64>> {
        check_len(self.len(), f.len())?;
        check_len(self.len(), v.len())?;
        let g = self.green.apply_adjoint(v);
        Ok(v.iter()
            .zip(g)
            .zip(f)
            .map(|((a, b), c)| a - b * c)
            .collect())
    }

    /// `A(f)` as a [`LinearMap`] for the Krylov solvers.
    pub fn system<'a>(&'a self, f: &'a [f64]) -> SystemMatrix<'a> {
        SystemMatrix { bundle: self, f }
    }
}

/// Scalar 3D incident field of a point source.
fn scalar_incident_3d(grid: &Grid, source: &crate::geometry::Point, physics: &PhysicsConfig) -> Result<IncidentField> {
    if !grid.is_outside(source) {
        return Err(Error::SourceInsideDomain {
            distance: crate::geometry::norm(source),
        });
    }
    let values = grid
        .points()
        .iter()
        .map(|r| scalar_green(&sub(r, source), physics, 3))
        .collect::<Result<Vec<_>>>()?;
    Ok(IncidentField { values })
}

/// `A(f) = I - G diag(f)` bound to a contrast.
pub struct SystemMatrix<'a> {
    bundle: &'a OperatorBundle,
    f: &'a [f64],
}

impl LinearMap for SystemMatrix<'_> {
    fn dim(&self) -> usize {
        self.bundle.len()
    }
    fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        self.bundle.apply_a(self.f, x).expect("length checked by solver")
    }
    fn apply_adjoint(&self, x: &[Complex64]) -> Vec<Complex64> {
        self.bundle.apply_a_adjoint(self.f, x).expect("length checked by solver")
    }
}
