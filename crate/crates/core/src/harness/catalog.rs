//! Bundled networks, fleets and scenarios.

pub const IEEE33: &str = include_str!("../../data/ieee33.toml");
pub const FLEET: &str = include_str!("../../data/fleet.toml");

pub const SCENARIOS: [(&str, &str); 5] = [
    ("scenario1", include_str!("../../data/scenarios/scenario1.cfg")),
    ("scenario2", include_str!("../../data/scenarios/scenario2.cfg")),
    ("scenario3", include_str!("../../data/scenarios/scenario3.cfg")),
    ("scenario4", include_str!("../../data/scenarios/scenario4.cfg")),
    ("toy", include_str!("../../data/scenarios/toy.cfg")),
];

/// Network or fleet text for a `builtin:<id>` reference.
pub fn builtin_data(id: &str) -> Option<&'static str> {
    match id {
        "ieee33" => Some(IEEE33),
        "fleet" => Some(FLEET),
        _ => None,
    }
}

pub fn builtin_scenario(id: &str) -> Option<&'static str> {
    SCENARIOS.iter().find(|(name, _)| *name == id).map(|(_, text)| *text)
}
