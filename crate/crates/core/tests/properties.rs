mod invariants;

macro_rules! property {
    ($($name:ident),* $(,)?) => {
        $(
            #[test]
            fn $name() {
                if let Err(e) = invariants::$name() {
                    panic!("{}: {e}", stringify!($name));
                }
            }
        )*
    };
}

property!(
    eig_reconstructs,
    expm_inverse,
    expm_semigroup,
    projection_orthogonal,
    composition,
    rk4_matches_oracle,
    multicompartment_conservation,
    spiral_commutes,
    observable_round_trip,
    radius_log_ratio,
    companion_operator_agree,
    residual_zero_iff_recurrence,
    scale_equivariance,
    accumulation_identity,
    algorithm1_segment_exactness,
    algorithm2_branch_consistency,
    theorem2_order,
    switch_indicator_ratio,
);
