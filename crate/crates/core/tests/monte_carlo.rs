mod common;

use common::oracle_errors;

#[test]
fn closed_forms_match_windowed_dft_oracle() {
    let e = oracle_errors(11);
    println!("{e:?}");
    assert!(e.prior_cov <= 0.05, "prior covariance: {e:?}");
    assert!(e.pseudo_cov <= 0.05, "pseudocovariance: {e:?}");
    assert!(e.cross_cov <= 0.05, "cross-covariance: {e:?}");
    assert!(e.cross_cov_offset <= 0.05, "cross-covariance off centre: {e:?}");
    assert!(e.posterior_mean <= 0.05, "posterior mean: {e:?}");
}
