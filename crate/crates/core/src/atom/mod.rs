//! Yb⁺ level structure: hyperfine manifolds, decay channels and field-dependent splittings.

pub mod angular;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ion species. Only the odd isotope carries nuclear spin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AtomSpecies {
    Yb171,
    Yb174,
}

impl AtomSpecies {
    /// Nuclear spin, doubled.
    pub fn twice_nuclear_spin(self) -> i64 {
        match self {
            AtomSpecies::Yb171 => 1,
            AtomSpecies::Yb174 => 0,
        }
    }
}

/// Electronic level a manifold belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Term {
    /// ²S₁/₂ ground level.
    S12,
    /// ²P₁/₂, upper level of the 369.5 nm line.
    P12,
    /// Metastable ²D₃/₂.
    D32,
    /// ³D[3/2]₁/₂, upper level of the 935.2 nm repump.
    D3Half,
    /// ²F₇/₂ trap level, populated only by the optional collisional trapping process.
    F72,
}

impl Term {
    /// Electronic angular momentum J, doubled.
    pub fn twice_j(self) -> i64 {
        match self {
            Term::S12 | Term::P12 | Term::D3Half => 1,
            Term::D32 => 3,
            Term::F72 => 7,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Term::S12 => "S1/2",
            Term::P12 => "P1/2",
            Term::D32 => "D3/2",
            Term::D3Half => "3D[3/2]1/2",
            Term::F72 => "F7/2",
        }
    }
}

/// Index of a manifold inside its [`LevelScheme`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ManifoldId(pub usize);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperfineManifold {
    pub term: Term,
    /// Total angular momentum F, doubled.
    pub twice_f: u8,
    /// Frequency offset within the electronic level.
    pub energy_offset_hz: f64,
}

impl HyperfineManifold {
    pub fn f(&self) -> f64 {
        self.twice_f as f64 / 2.0
    }

    pub fn degeneracy(&self) -> usize {
        self.twice_f as usize + 1
    }

    pub fn label(&self) -> String {
        if self.twice_f % 2 == 0 {
            format!("{} F={}", self.term.label(), self.twice_f / 2)
        } else {
            format!("{} F={}/2", self.term.label(), self.twice_f)
        }
    }
}

/// Wavelength class of a spontaneous decay.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EmissionClass {
    /// ²P₁/₂ → ²S₁/₂, the detected fluorescence.
    Nm369,
    /// ³D[3/2]₁/₂ → ²S₁/₂.
    Nm297,
    /// ²D₃/₂ → ²S₁/₂ electric quadrupole decay.
    Nm435,
    /// ²P₁/₂ → ²D₃/₂ leak.
    Nm2438,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayChannel {
    pub upper: ManifoldId,
    pub lower: ManifoldId,
    pub branching_fraction: f64,
    pub emission_class: EmissionClass,
}

/// Rates, branching ratio and splittings. Defaults are the measured values used throughout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicalConstants {
    /// ²P₁/₂ decay rate γ.
    pub gamma_p12_per_s: f64,
    /// Uncertainty of the ²P₁/₂ lifetime, used only in error budgets.
    pub p12_lifetime_uncertainty_s: f64,
    /// ³D[3/2]₁/₂ decay rate.
    pub gamma_d3half_per_s: f64,
    /// ²P₁/₂ → ²D₃/₂ branching ratio R.
    pub branching_ratio: f64,
    pub tau_d32_s: f64,
    pub s12_splitting_hz: f64,
    pub p12_splitting_hz: f64,
    pub d32_splitting_hz: f64,
    pub d3half_splitting_hz: f64,
    /// Second-order Zeeman coefficient of the clock transition.
    pub zeeman_coeff_hz_per_g2: f64,
    /// Rate of collisional trapping into ²F₇/₂; zero disables the F₇/₂ manifold.
    pub f72_trap_rate_per_s: f64,
    /// Time the ²F₇/₂ repump needs to return the ion to the cooling cycle.
    pub f72_repump_delay_s: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self {
            gamma_p12_per_s: 1.0 / 8.07e-9,
            p12_lifetime_uncertainty_s: 0.09e-9,
            gamma_d3half_per_s: 1.0 / 37.7e-9,
            branching_ratio: 0.00501,
            tau_d32_s: 52.7e-3,
            s12_splitting_hz: 12_642_812_118.5,
            p12_splitting_hz: 2.1e9,
            d32_splitting_hz: 0.86e9,
            d3half_splitting_hz: 2.2095e9,
            zeeman_coeff_hz_per_g2: 310.8,
            f72_trap_rate_per_s: 0.0,
            f72_repump_delay_s: 1e-3,
        }
    }
}

impl PhysicalConstants {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("gamma_p12_per_s", self.gamma_p12_per_s),
            ("gamma_d3half_per_s", self.gamma_d3half_per_s),
            ("tau_d32_s", self.tau_d32_s),
            ("s12_splitting_hz", self.s12_splitting_hz),
            ("p12_splitting_hz", self.p12_splitting_hz),
            ("d32_splitting_hz", self.d32_splitting_hz),
            ("d3half_splitting_hz", self.d3half_splitting_hz),
            ("zeeman_coeff_hz_per_g2", self.zeeman_coeff_hz_per_g2),
            ("f72_repump_delay_s", self.f72_repump_delay_s),
        ];
        for (field, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::constraint(field, format!("must be finite and > 0, got {value}")));
            }
        }
        // zero disables the ²D₃/₂ leak
        if !(0.0..1.0).contains(&self.branching_ratio) {
            return Err(Error::constraint("branching_ratio", "must lie in [0, 1)"));
        }
        if !(self.f72_trap_rate_per_s.is_finite() && self.f72_trap_rate_per_s >= 0.0) {
            return Err(Error::constraint("f72_trap_rate_per_s", "must be >= 0"));
        }
        if !(self.p12_lifetime_uncertainty_s >= 0.0) {
            return Err(Error::constraint("p12_lifetime_uncertainty_s", "must be >= 0"));
        }
        Ok(())
    }

    /// Relative uncertainty of γ, σ_γ/γ = σ_τ/τ.
    pub fn gamma_relative_uncertainty(&self) -> f64 {
        self.p12_lifetime_uncertainty_s * self.gamma_p12_per_s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MagneticEnvironment {
    pub b_static_g: f64,
    /// Standard deviation of the quasi-static qubit frequency fluctuation.
    pub freq_noise_rms_hz: f64,
    /// Deterministic qubit frequency offset of the second ion site.
    pub differential_offset_hz: f64,
}

impl Default for MagneticEnvironment {
    fn default() -> Self {
        Self {
            b_static_g: 5.0,
            freq_noise_rms_hz: 0.0,
            differential_offset_hz: 2.43e3,
        }
    }
}

impl MagneticEnvironment {
    pub fn validate(&self) -> Result<()> {
        if !(self.b_static_g.is_finite() && self.b_static_g >= 0.0) {
            return Err(Error::constraint("b_static_g", "must be >= 0"));
        }
        if !(self.freq_noise_rms_hz.is_finite() && self.freq_noise_rms_hz >= 0.0) {
            return Err(Error::constraint("freq_noise_rms_hz", "must be >= 0"));
        }
        if !self.differential_offset_hz.is_finite() {
            return Err(Error::constraint("differential_offset_hz", "must be finite"));
        }
        Ok(())
    }
}

/// Clock-transition frequency including the second-order Zeeman shift.
pub fn qubit_splitting(constants: &PhysicalConstants, env: &MagneticEnvironment) -> f64 {
    constants.s12_splitting_hz + constants.zeeman_coeff_hz_per_g2 * env.b_static_g * env.b_static_g
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelScheme {
    pub species: AtomSpecies,
    pub manifolds: Vec<HyperfineManifold>,
    pub channels: Vec<DecayChannel>,
    pub constants: PhysicalConstants,
}

/// Electronic levels that take part in optical cycling, and which F lies higher.
const CYCLE_TERMS: [Term; 4] = [Term::S12, Term::P12, Term::D32, Term::D3Half];

impl LevelScheme {
    pub fn manifold(&self, id: ManifoldId) -> &HyperfineManifold {
        &self.manifolds[id.0]
    }

    pub fn len(&self) -> usize {
        self.manifolds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.manifolds.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ManifoldId> {
        (0..self.manifolds.len()).map(ManifoldId)
    }

    /// Manifold with the given term and F (doubled). For nuclear-spin-free species
    /// the F label is ignored since each level has a single manifold.
    pub fn find(&self, term: Term, twice_f: u8) -> Option<ManifoldId> {
        let single = self.species == AtomSpecies::Yb174;
        self.manifolds
            .iter()
            .position(|m| m.term == term && (single || m.twice_f == twice_f))
            .map(ManifoldId)
    }

    pub fn manifolds_of(&self, term: Term) -> Vec<ManifoldId> {
        self.ids().filter(|&id| self.manifold(id).term == term).collect()
    }

    /// Qubit |0⟩ (S F=0) and |1⟩ (S F=1) manifolds. For Yb174 both map to the single S manifold.
    pub fn qubit_manifolds(&self) -> (ManifoldId, ManifoldId) {
        let zero = self.find(Term::S12, 0).expect("scheme always has an S manifold");
        let one = self.find(Term::S12, 2).expect("scheme always has an S manifold");
        (zero, one)
    }

    /// Total spontaneous decay rate out of a manifold of this term.
    pub fn decay_rate(&self, term: Term) -> f64 {
        let c = &self.constants;
        match term {
            Term::P12 => c.gamma_p12_per_s,
            Term::D3Half => c.gamma_d3half_per_s,
            Term::D32 => 1.0 / c.tau_d32_s,
            Term::S12 | Term::F72 => 0.0,
        }
    }

    pub fn channels_from(&self, upper: ManifoldId) -> impl Iterator<Item = &DecayChannel> {
        self.channels.iter().filter(move |c| c.upper == upper)
    }

    pub fn has_f72(&self) -> bool {
        self.manifolds.iter().any(|m| m.term == Term::F72)
    }
}

fn hyperfine_layout(species: AtomSpecies, term: Term, c: &PhysicalConstants) -> Vec<(u8, f64)> {
    match species {
        AtomSpecies::Yb174 => vec![(term.twice_j() as u8, 0.0)],
        AtomSpecies::Yb171 => match term {
            Term::S12 => vec![(0, 0.0), (2, c.s12_splitting_hz)],
            Term::P12 => vec![(0, 0.0), (2, c.p12_splitting_hz)],
            // the D3/2 hyperfine structure is inverted: F=2 lies below F=1
            Term::D32 => vec![(4, 0.0), (2, c.d32_splitting_hz)],
            Term::D3Half => vec![(0, 0.0), (2, c.d3half_splitting_hz)],
            // F7/2 is a single bookkeeping manifold; its hyperfine structure plays no role
            Term::F72 => vec![(6, 0.0)],
        },
    }
}

/// Builds the level scheme and its hyperfine-resolved decay channels.
pub fn build_level_scheme(species: AtomSpecies, constants: PhysicalConstants) -> Result<LevelScheme> {
    constants.validate()?;

    let mut terms = CYCLE_TERMS.to_vec();
    if constants.f72_trap_rate_per_s > 0.0 {
        terms.push(Term::F72);
    }
    let manifolds: Vec<HyperfineManifold> = terms
        .iter()
        .flat_map(|&term| {
            hyperfine_layout(species, term, &constants)
                .into_iter()
                .map(move |(twice_f, energy_offset_hz)| HyperfineManifold {
                    term,
                    twice_f,
                    energy_offset_hz,
                })
        })
        .collect();

    let r = constants.branching_ratio;
    // (upper term, lower term, level branching, multipole rank, emission)
    let level_decays = [
        (Term::P12, Term::S12, 1.0 - r, 1, EmissionClass::Nm369),
        (Term::P12, Term::D32, r, 1, EmissionClass::Nm2438),
        (Term::D3Half, Term::S12, 1.0, 1, EmissionClass::Nm297),
        (Term::D32, Term::S12, 1.0, 2, EmissionClass::Nm435),
    ];
    let nuclear = species.twice_nuclear_spin();

    let mut channels = Vec::new();
    for (upper_term, lower_term, level_fraction, rank, emission_class) in level_decays {
        for (ui, upper) in manifolds.iter().enumerate().filter(|(_, m)| m.term == upper_term) {
            for (li, lower) in manifolds.iter().enumerate().filter(|(_, m)| m.term == lower_term) {
                let hf = angular::hyperfine_branching(
                    upper_term.twice_j(),
                    upper.twice_f as i64,
                    lower_term.twice_j(),
                    lower.twice_f as i64,
                    rank,
                    nuclear,
                );
                if hf > 1e-12 {
                    channels.push(DecayChannel {
                        upper: ManifoldId(ui),
                        lower: ManifoldId(li),
                        branching_fraction: level_fraction * hf,
                        emission_class,
                    });
                }
            }
        }
    }

    Ok(LevelScheme {
        species,
        manifolds,
        channels,
        constants,
    })
}

/// Optical line a dipole coupling belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OpticalLine {
    /// ²S₁/₂ ↔ ²P₁/₂.
    Nm369,
    /// ²D₃/₂ ↔ ³D[3/2]₁/₂.
    Nm935,
}

impl OpticalLine {
    pub fn terms(self) -> (Term, Term) {
        match self {
            OpticalLine::Nm369 => (Term::S12, Term::P12),
            OpticalLine::Nm935 => (Term::D32, Term::D3Half),
        }
    }

    /// Reference transition `(lower F, upper F)`, doubled, that defines zero detuning.
    fn reference(self) -> (u8, u8) {
        match self {
            OpticalLine::Nm369 => (2, 0),
            OpticalLine::Nm935 => (2, 0),
        }
    }
}

/// Is `lower ↔ upper` an electric-dipole coupling on one of the driven lines?
pub fn dipole_line(scheme: &LevelScheme, lower: ManifoldId, upper: ManifoldId) -> Option<OpticalLine> {
    let (l, u) = (scheme.manifold(lower), scheme.manifold(upper));
    let line = [OpticalLine::Nm369, OpticalLine::Nm935]
        .into_iter()
        .find(|line| line.terms() == (l.term, u.term))?;
    let (fl, fu) = (l.twice_f as i64, u.twice_f as i64);
    let allowed = (fl - fu).abs() <= 2 && !(fl == 0 && fu == 0);
    allowed.then_some(line)
}

/// Frequency of `lower → upper` relative to the reference transition of its line
/// (S F=1 ↔ P F=0 at 369 nm, D₃/₂ F=1 ↔ ³D[3/2]₁/₂ F=0 at 935 nm).
pub fn transition_offset(scheme: &LevelScheme, lower: ManifoldId, upper: ManifoldId) -> Result<f64> {
    let line = dipole_line(scheme, lower, upper).ok_or_else(|| Error::ForbiddenTransition {
        lower: scheme.manifold(lower).label(),
        upper: scheme.manifold(upper).label(),
    })?;
    let (lower_term, upper_term) = line.terms();
    let (ref_fl, ref_fu) = line.reference();
    let ref_lower = scheme.find(lower_term, ref_fl).expect("reference lower manifold");
    let ref_upper = scheme.find(upper_term, ref_fu).expect("reference upper manifold");
    let energy = |id: ManifoldId| scheme.manifold(id).energy_offset_hz;
    Ok((energy(upper) - energy(ref_upper)) - (energy(lower) - energy(ref_lower)))
}
