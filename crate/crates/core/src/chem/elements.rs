//! Element data: symbols, standard atomic weights, covalent radii and
//! allowed valences for the organic subset this crate targets.

/// (atomic number, symbol, standard atomic weight in u, covalent radius in Å,
/// allowed valence). Radii follow the Cordero 2008 compilation except
/// hydrogen, which uses the classic 0.37 Å value: with the 1.15 perception
/// slack the 0.31 Å entry would reject the H-H bond of H2 at 0.74 Å.
/// Valences are the fixed organic-chemistry values used by the validity
/// checker.
const ELEMENTS: &[(u8, &str, f64, f64, u8)] = &[
    (1, "H", 1.008, 0.37, 1),
    (5, "B", 10.811, 0.84, 3),
    (6, "C", 12.011, 0.76, 4),
    (7, "N", 14.007, 0.71, 3),
    (8, "O", 15.999, 0.66, 2),
    (9, "F", 18.998, 0.57, 1),
    (14, "Si", 28.086, 1.11, 4),
    (15, "P", 30.974, 1.07, 3),
    (16, "S", 32.065, 1.05, 2),
    (17, "Cl", 35.453, 1.02, 1),
    (35, "Br", 79.904, 1.20, 1),
    (53, "I", 126.904, 1.39, 1),
];

fn entry(z: u8) -> Option<&'static (u8, &'static str, f64, f64, u8)> {
    ELEMENTS.iter().find(|e| e.0 == z)
}

pub fn symbol(z: u8) -> Option<&'static str> {
    entry(z).map(|e| e.1)
}

pub fn atomic_number(symbol: &str) -> Option<u8> {
    ELEMENTS.iter().find(|e| e.1 == symbol).map(|e| e.0)
}

/// Standard atomic weight in unified atomic mass units.
pub fn atomic_mass(z: u8) -> Option<f64> {
    entry(z).map(|e| e.2)
}

/// Covalent radius in Å.
pub fn covalent_radius(z: u8) -> Option<f64> {
    entry(z).map(|e| e.3)
}

/// Allowed valence (sum of bond orders) for the validity check.
pub fn allowed_valence(z: u8) -> Option<u8> {
    entry(z).map(|e| e.4)
}

pub fn is_known(z: u8) -> bool {
    entry(z).is_some()
}
