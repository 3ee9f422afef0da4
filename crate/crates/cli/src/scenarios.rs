//! Scenarios shipped with the binary.

pub struct Bundled {
    pub name: &'static str,
    pub description: &'static str,
    pub text: &'static str,
}

macro_rules! bundled {
    ($name:literal, $desc:literal) => {
        Bundled { name: $name, description: $desc, text: include_str!(concat!("../scenarios/", $name, ".toml")) }
    };
}

/// The catalog, sorted by name.
pub const CATALOG: &[Bundled] = &[
    bundled!("antisymmetric-three-flat", "Three antisymmetrized fermions on flat leaves: W_cond report and trajectories"),
    bundled!("bell-curved-foliation", "Spin-entangled pair on tanh leaves: mixed W_cond and equivariance"),
    bundled!("dirac-boost-roundtrip", "Two 3+1 Dirac packets: boosted pipeline versus boosted lab trajectories"),
    bundled!("entangled-boosted-trajectories", "Crossing entangled packets on boosted leaves: trajectories and W_cond"),
    bundled!("product-state-flat", "Product state on flat leaves: pure W_cond and effective wave function"),
    bundled!("surface-independence-pair", "Two-particle scalar products across flat, boosted and curved leaves"),
    bundled!("two-branch-effective-wave", "Environment in two disjoint branches: effective wave function and purity scan"),
];

pub fn find(name: &str) -> Option<&'static Bundled> {
    CATALOG.iter().find(|b| b.name == name)
}
