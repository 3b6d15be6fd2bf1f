mod support;

use support::{formulas, walk};

#[test]
fn send_is_delivered_at_now_plus_delay() {
    formulas::send_is_delivered_at_now_plus_delay();
}

#[test]
fn recv_takes_the_newest_delivery_not_in_the_future() {
    formulas::recv_takes_the_newest_delivery_not_in_the_future();
}

#[test]
fn port_operation_is_enabled_only_at_a_delivery_time() {
    formulas::port_operation_is_enabled_only_at_a_delivery_time();
}

#[test]
fn self_wake_operation_is_enabled_iff_now_is_a_wake_time() {
    formulas::self_wake_operation_is_enabled_iff_now_is_a_wake_time();
}

#[test]
fn tick_waits_for_pending_deliveries() {
    formulas::tick_waits_for_pending_deliveries();
}

#[test]
fn kernel_walks_respect_the_timing_rules() {
    walk::run(10_000).unwrap();
}
