mod support;

use support::golden;

#[test]
fn pair_counts_by_hand() {
    golden::pair_counts_by_hand();
}

#[test]
fn three_code_adjacency() {
    golden::three_code_adjacency();
}

#[test]
fn isolated_code_gets_self_loop() {
    golden::isolated_code_gets_self_loop();
}

#[test]
fn distance_to_origin_is_ln4() {
    golden::distance_to_origin_is_ln4();
}

#[test]
fn zero_logit_decoder_chain() {
    golden::zero_logit_decoder_chain();
}

#[test]
fn half_chain_ssl_loss_by_hand() {
    golden::half_chain_ssl_loss_by_hand();
}

#[test]
fn targets_of_two_admissions() {
    golden::targets_of_two_admissions();
}
