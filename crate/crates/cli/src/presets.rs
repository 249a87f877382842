//! Checked-in run configurations, one per figure analogue.

pub const PRESETS: &[(&str, &str)] = &[
    ("fig1", include_str!("../presets/fig1.json")),
    ("fig2a", include_str!("../presets/fig2a.json")),
    ("fig2b", include_str!("../presets/fig2b.json")),
    ("fig3", include_str!("../presets/fig3.json")),
    ("fig5", include_str!("../presets/fig5.json")),
    ("revival", include_str!("../presets/revival.json")),
    ("oracle", include_str!("../presets/oracle.json")),
];

pub fn lookup(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}

pub fn names() -> Vec<&'static str> {
    PRESETS.iter().map(|(n, _)| *n).collect()
}
