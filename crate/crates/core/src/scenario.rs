//! One-call pulse simulations and the flip observables derived from them.

use crate::eigen::{eigendecompose, EigenSystem};
use crate::error::Result;
use crate::lindblad::{build_liouvillian, propagate, Liouvillian, TimeSeries};
use crate::pulse::{build_lindblads, LindbladSet, PulseSchedule};
use crate::spin::{build_combined_hamiltonian, build_donor_hamiltonian, NuclearConfig, OperatorMatrix, SpinSystemSpec};
use crate::state::{initial_state, DensityMatrix, StateLabel};

/// Everything needed to simulate one pulse on one system.
#[derive(Debug, Clone)]
pub struct PreparedSystem {
    spec: SpinSystemSpec,
    schedule: PulseSchedule,
    donor_eigen: EigenSystem,
    hamiltonian: OperatorMatrix,
    jumps: LindbladSet,
}

impl PreparedSystem {
    pub fn new(spec: &SpinSystemSpec, schedule: &PulseSchedule) -> Result<Self> {
        spec.validate()?;
        schedule.validate()?;
        let donor_eigen = eigendecompose(&build_donor_hamiltonian(spec)?)?;
        let jumps = build_lindblads(&donor_eigen, schedule)?;
        Ok(Self {
            spec: spec.clone(),
            schedule: schedule.clone(),
            donor_eigen,
            hamiltonian: build_combined_hamiltonian(spec)?,
            jumps,
        })
    }

    pub fn spec(&self) -> &SpinSystemSpec {
        &self.spec
    }

    pub fn schedule(&self) -> &PulseSchedule {
        &self.schedule
    }

    pub fn donor_eigen(&self) -> &EigenSystem {
        &self.donor_eigen
    }

    /// Hamiltonian on the three-level-electron space.
    pub fn hamiltonian(&self) -> &OperatorMatrix {
        &self.hamiltonian
    }

    pub fn jumps(&self) -> &LindbladSet {
        &self.jumps
    }

    pub fn initial_state(&self, label: &StateLabel) -> Result<DensityMatrix> {
        initial_state(label, &self.donor_eigen)
    }

    pub fn liouvillian(&self) -> Result<Liouvillian> {
        build_liouvillian(&self.hamiltonian, &self.jumps)
    }

    pub fn simulate(&self, label: &StateLabel) -> Result<Simulation> {
        let rho0 = self.initial_state(label)?;
        let series = propagate(&rho0, &self.liouvillian()?, &self.schedule)?;
        Ok(Simulation {
            initial_config: dominant_config(&rho0),
            series,
        })
    }
}

/// Most probable nuclear configuration; ties go to the lower index.
pub fn dominant_config(rho: &DensityMatrix) -> NuclearConfig {
    let pops = rho.nuclear_populations();
    let mut best = 0;
    for (i, p) in pops.iter().enumerate() {
        if *p > pops[best] {
            best = i;
        }
    }
    NuclearConfig::from_index(best, rho.layout().num_donors())
}

/// Master-equation result with its reference nuclear configuration.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub series: TimeSeries,
    /// Dominant configuration of the initial state; flips are counted from it.
    pub initial_config: NuclearConfig,
}

impl Simulation {
    /// Final probability that only nucleus `j` (zero based) has flipped.
    pub fn flip(&self, j: usize) -> f64 {
        self.series.last().nuclear[self.initial_config.flipped(j).index()]
    }

    /// Final probability that exactly nuclei `i` and `j` have flipped.
    pub fn flipflop(&self, i: usize, j: usize) -> Option<f64> {
        let m = self.series.num_donors;
        if i == j || i >= m || j >= m {
            return None;
        }
        let target = self.initial_config.flipped(i).flipped(j);
        Some(self.series.last().nuclear[target.index()])
    }

    /// Time trace of the flip probability of nucleus `j`.
    pub fn flip_trace(&self, j: usize) -> Vec<f64> {
        self.series.nuclear_trace(self.initial_config.flipped(j).index())
    }
}

/// Builds and runs one pulse from the named initial state.
pub fn simulate(spec: &SpinSystemSpec, schedule: &PulseSchedule, label: &StateLabel) -> Result<Simulation> {
    PreparedSystem::new(spec, schedule)?.simulate(label)
}
