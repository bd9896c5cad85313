#[path = "common/properties.rs"]
mod properties;

macro_rules! property_tests {
    ($($name:ident),* $(,)?) => {
        $(
            #[test]
            fn $name() {
                properties::$name().unwrap();
            }
        )*
    };
}

property_tests!(
    prior_monotonicity,
    pic_duality,
    gradient_checks,
    cindex_transform_invariance,
    weight_normalization,
    merge_idempotence,
    determinism,
    transforms_finite,
    order_invariance,
    split_partition,
);
