mod props;

macro_rules! property_tests {
    ($($name:ident),* $(,)?) => {
        $(
            #[test]
            fn $name() {
                if let Err(e) = props::$name() {
                    panic!("{e}");
                }
            }
        )*
    };
}

property_tests!(
    merged_shards_match_one_pass,
    select_ranks_matches_sort,
    ratio_interval_ignores_common_scale,
    identical_arms_give_zero_width,
    fieller_meets_delta_for_large_samples,
    zero_skew_edgeworth_is_normal,
    symmetric_sample_edgeworth_is_delta,
    unit_clusters_reduce_to_iid,
    equal_clusters_match_closed_form,
    outer_interval_brackets_point,
    pre_interval_follows_monotone_maps,
    augmented_ratio_is_observed_mean,
    crossover_ignores_user_order,
    gls_with_identity_is_ols,
    reml_matches_balanced_anova,
    report_json_round_trips,
);

#[test]
fn every_property_is_listed() {
    assert_eq!(props::ALL.len(), 16);
}
