mod support;

use sherbet::data::Task;
use sherbet::decoder::DecoderKind;

const TOL: f64 = 1e-4;

#[test]
fn reconstruction_loss_gradient() {
    let err = support::reconstruction_grad_error();
    assert!(err < TOL, "relative error {err}");
}

#[test]
fn ssl_loss_gradient_hierarchical() {
    let err = support::ssl_grad_error(DecoderKind::Hierarchical);
    assert!(err < TOL, "relative error {err}");
}

#[test]
fn ssl_loss_gradient_flat() {
    let err = support::ssl_grad_error(DecoderKind::Flat);
    assert!(err < TOL, "relative error {err}");
}

#[test]
fn finetune_loss_gradient_diagnosis() {
    let err = support::finetune_grad_error(Task::Diagnosis);
    assert!(err < TOL, "relative error {err}");
}

#[test]
fn finetune_loss_gradient_heart_failure() {
    let err = support::finetune_grad_error(Task::HeartFailure);
    assert!(err < TOL, "relative error {err}");
}
