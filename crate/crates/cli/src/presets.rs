//! Reference configurations compiled into the binary.

pub const PRESETS: &[(&str, &str)] = &[
    ("swiss_roll_mae_iso", include_str!("../configs/swiss_roll_mae_iso.toml")),
    ("swiss_roll_mae_con", include_str!("../configs/swiss_roll_mae_con.toml")),
    (
        "swiss_roll_global_only",
        include_str!("../configs/swiss_roll_global_only.toml"),
    ),
    (
        "swiss_roll_local_only",
        include_str!("../configs/swiss_roll_local_only.toml"),
    ),
    (
        "toroidal_helix_mae_iso",
        include_str!("../configs/toroidal_helix_mae_iso.toml"),
    ),
    (
        "toroidal_helix_mae_con",
        include_str!("../configs/toroidal_helix_mae_con.toml"),
    ),
];

pub fn preset(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}

pub fn names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(n, _)| *n)
}
