use serde::Serialize;

use crate::action_optim::canonical_jet_basis;
use crate::error::{CfsError, Result};
use crate::linalg::{to_complex, CMat, CVec};
use crate::linfield_complex::{complex_structure, delta_matrix, lin_solutions, variation_basis, ComplexStructure, LinSolutionSpace};
use crate::operator_core::LagrangianParams;
use crate::surface_layer::{CutSpec, Interacting};
use crate::system_measure::{DiscreteMeasure, InteractionMap};
use crate::wavefunc::{split_basis, QTable, SplitBasis};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SetupOptions {
    /// Relative singular value cut for the null space of the field operator.
    pub delta_tol: f64,
    /// Relative eigenvalue cut for the positive part of `(.,.)`.
    pub positive_tol: f64,
    /// Relative cut for the non-degenerate part of `sigma`.
    pub degenerate_tol: f64,
    /// Relative eigenvalue cut for the extended one-particle space.
    pub extended_tol: f64,
    pub max_boson_modes: usize,
    pub max_fermi_modes: usize,
}

impl Default for SetupOptions {
    fn default() -> Self {
        Self {
            delta_tol: 1e-10,
            positive_tol: 1e-8,
            degenerate_tol: 1e-8,
            extended_tol: 1e-10,
            max_boson_modes: 3,
            max_fermi_modes: 6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SetupReport {
    pub null_dim: usize,
    pub positive_dim: usize,
    pub solution_dim: usize,
    pub holomorphic_modes: usize,
    pub boson_modes: usize,
    pub sea_modes: usize,
    pub particle_modes: usize,
    pub extended_indefinite: bool,
    pub freqs: Vec<f64>,
}

/// Everything the state needs about the vacuum: the interacting data, the
/// holomorphic bosonic modes and the fermionic one-particle modes.
#[derive(Clone, Debug)]
pub struct FieldSetup {
    pub rho: DiscreteMeasure,
    pub map: InteractionMap,
    pub inter: Interacting,
    pub params: LagrangianParams,
    pub cut: CutSpec,
    pub space: LinSolutionSpace,
    pub complex: ComplexStructure,
    /// Holomorphic modes as complex coefficients over the real elementary
    /// variation directions.
    pub boson_dirs: Vec<CVec>,
    pub fermi: SplitBasis,
    /// Local frame coordinates of each fermionic mode at each point.
    pub fermi_coords: Vec<Vec<CVec>>,
    pub report: SetupReport,
}

impl FieldSetup {
    pub fn build(
        rho: &DiscreteMeasure,
        map: &InteractionMap,
        cut: &CutSpec,
        params: &LagrangianParams,
        opts: &SetupOptions,
    ) -> Result<Self> {
        let inter = Interacting::new(rho, map)?;
        let test = canonical_jet_basis(rho, true);
        let var = variation_basis(rho);
        let delta = delta_matrix(rho, params, &test, &var)?;
        let full = lin_solutions(rho, params, &var, &delta, cut, opts.delta_tol)?;
        if full.flags.empty {
            return Err(CfsError::Degenerate("the linearized field equations have no solutions".into()));
        }
        let pos = full.positive_part(opts.positive_tol);
        let space = pos.nondegenerate_part(opts.degenerate_tol);
        let complex = complex_structure(&space)?;
        let m_b = complex.hol_basis.ncols().min(opts.max_boson_modes);
        let coords = to_complex(&space.coords);
        let boson_dirs = (0..m_b).map(|k| &coords * complex.hol_basis.column(k)).collect();
        let qt = QTable::new(rho, params)?;
        let fermi = split_basis(rho, cut, &qt, opts.extended_tol, opts.max_fermi_modes)?;
        let fermi_coords = fermi.modes().iter().map(|w| w.frame_coords(rho)).collect();
        let report = SetupReport {
            null_dim: full.dim(),
            positive_dim: pos.dim(),
            solution_dim: space.dim(),
            holomorphic_modes: complex.hol_basis.ncols(),
            boson_modes: m_b,
            sea_modes: fermi.sea.len(),
            particle_modes: fermi.particle.len(),
            extended_indefinite: fermi.indefinite,
            freqs: complex.freqs.clone(),
        };
        Ok(Self {
            rho: rho.clone(),
            map: map.clone(),
            inter,
            params: *params,
            cut: cut.clone(),
            space,
            complex,
            boson_dirs,
            fermi,
            fermi_coords,
            report,
        })
    }

    pub fn boson_modes(&self) -> usize {
        self.boson_dirs.len()
    }

    pub fn fermi_modes(&self) -> usize {
        self.fermi_coords.len()
    }

    pub fn sea_modes(&self) -> usize {
        self.fermi.sea.len()
    }

    /// Direction `xi_m e_l^T` (column `l` carries the mode) per point, or
    /// `xi_m u^H` for a general `u`.
    pub fn fermi_direction(&self, m: usize, u: &CVec) -> Vec<CMat> {
        let f = self.rho.spec.f;
        self.fermi_coords[m]
            .iter()
            .map(|xi| {
                let mut d = CMat::zeros(xi.len(), f);
                for r in 0..xi.len() {
                    for col in 0..f {
                        d[(r, col)] = xi[r] * u[col].conj();
                    }
                }
                d
            })
            .collect()
    }
}
