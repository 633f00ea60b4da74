use super::NetworkDescriptor;

const BUILTINS: &[(&str, &str)] = &[
    ("alexnet", include_str!("../../descriptors/alexnet.json")),
    ("resnet34", include_str!("../../descriptors/resnet34.json")),
    ("small_cnn", include_str!("../../descriptors/small_cnn.json")),
    ("tiny_cnn", include_str!("../../descriptors/tiny_cnn.json")),
];

pub fn builtin_names() -> impl Iterator<Item = &'static str> {
    BUILTINS.iter().map(|(n, _)| *n)
}

/// Shipped descriptor by name; `builtin:` prefixes are accepted.
pub fn builtin(name: &str) -> Option<NetworkDescriptor> {
    let name = name.strip_prefix("builtin:").unwrap_or(name);
    let (_, text) = BUILTINS.iter().find(|(n, _)| *n == name)?;
    Some(NetworkDescriptor::from_json(text).expect("shipped descriptor parses"))
}
