use std::collections::BTreeMap;

use coda::kernel::{self, Blocked, Choice, KernelConfig, RuntimeState};
use coda::program::Program;
use coda::{ValidModel, Value};

const PIPE: &str = r#"
model pipe
connector c: NAT from A to B
component A {
  var n: NAT = 0
  operation push1 kind E {
    guard n < 5
    action port_send(c, n, delay 1)
    action n := n + 1
  }
  operation push3 kind E {
    guard n < 5
    action port_send(c, n, delay 3)
    action n := n + 1
  }
  operation nap kind E {
    action self_wake(delay 2)
  }
  operation wake kind S
}
component B {
  var last: NAT = 0
  operation get kind P wakes c {
    action last := recv(c)
  }
}
"#;

pub fn pipe() -> ValidModel {
    coda::load_str(PIPE).unwrap()
}

fn op(prog: &Program, label: &str) -> Choice {
    let (c, o) = label.split_once('.').unwrap();
    Choice::op(prog.op_by_name(c, o).unwrap())
}

fn conn(prog: &Program) -> usize {
    prog.conn_by_name("c").unwrap()
}

pub fn send_is_delivered_at_now_plus_delay() {
    let vm = pipe();
    let prog = &*vm.program;
    let cfg = KernelConfig::default();
    let mut s = kernel::init(prog, &cfg).unwrap();
    s = kernel::tick(prog, &s, &cfg).unwrap();
    s = kernel::tick(prog, &s, &cfg).unwrap();
    let (s, rec) = kernel::fire(prog, &s, &op(prog, "A.push3"), &cfg).unwrap();
    assert_eq!(s.channels[conn(prog)].keys().copied().collect::<Vec<_>>(), [5]);
    assert_eq!(rec.sends.len(), 1);
}

pub fn recv_takes_the_newest_delivery_not_in_the_future() {
    let vm = pipe();
    let prog = &*vm.program;
    let mut s = kernel::init(prog, &KernelConfig::default()).unwrap();
    let c = conn(prog);
    s.channels[c] = BTreeMap::from([(1, Value::Int(10)), (3, Value::Int(30)), (6, Value::Int(60))]);
    let at = |s: &RuntimeState, t: u64| {
        let mut s = s.clone();
        s.time = t;
        kernel::recv_value(&s, c)
    };
    assert_eq!(at(&s, 0), None);
    assert_eq!(at(&s, 1), Some(Value::Int(10)));
    assert_eq!(at(&s, 2), Some(Value::Int(10)));
    assert_eq!(at(&s, 5), Some(Value::Int(30)));
    assert_eq!(at(&s, 9), Some(Value::Int(60)));
}

pub fn port_operation_is_enabled_only_at_a_delivery_time() {
    let vm = pipe();
    let prog = &*vm.program;
    let cfg = KernelConfig::default();
    let get = op(prog, "B.get");
    let mut s = kernel::init(prog, &cfg).unwrap();
    s.channels[conn(prog)].insert(2, Value::Int(7));
    for t in 0..4 {
        s.time = t;
        assert_eq!(kernel::check(prog, &s, &get, &cfg).is_ok(), t == 2, "time {t}");
    }
}

pub fn self_wake_operation_is_enabled_iff_now_is_a_wake_time() {
    let vm = pipe();
    let prog = &*vm.program;
    let cfg = KernelConfig::default();
    let wake = op(prog, "A.wake");
    let (mut s, _) = kernel::fire(prog, &kernel::init(prog, &cfg).unwrap(), &op(prog, "A.nap"), &cfg).unwrap();
    for t in 0..4 {
        assert_eq!(kernel::check(prog, &s, &wake, &cfg).is_ok(), t == 2, "time {t}");
        if t == 2 {
            assert!(matches!(kernel::tick_ready(prog, &s), Err(Blocked::UnansweredWake(_))));
            s = kernel::fire(prog, &s, &wake, &cfg).unwrap().0;
        }
        s = kernel::tick(prog, &s, &cfg).unwrap();
    }
}

pub fn tick_waits_for_pending_deliveries() {
    let vm = pipe();
    let prog = &*vm.program;
    let cfg = KernelConfig::default();
    let s = kernel::init(prog, &cfg).unwrap();
    let (s, _) = kernel::fire(prog, &s, &op(prog, "A.push1"), &cfg).unwrap();
    let s = kernel::tick(prog, &s, &cfg).unwrap();
    assert!(matches!(kernel::tick_ready(prog, &s), Err(Blocked::Undelivered(_))));
    assert!(kernel::tick(prog, &s, &cfg).is_err());
    let (s, _) = kernel::fire(prog, &s, &op(prog, "B.get"), &cfg).unwrap();
    assert_eq!(s.vars[prog.var_by_name("B", "last").unwrap()], Value::Int(0));
    assert!(kernel::tick_ready(prog, &s).is_ok());
    // The port group has fired; a second receive in the same cycle is not allowed.
    assert!(kernel::check(prog, &s, &op(prog, "B.get"), &cfg).is_err());
}

/// Every formula check, by name.
pub const ALL: [(&str, fn()); 5] = [
    ("send_is_delivered_at_now_plus_delay", send_is_delivered_at_now_plus_delay),
    (
        "recv_takes_the_newest_delivery_not_in_the_future",
        recv_takes_the_newest_delivery_not_in_the_future,
    ),
    (
        "port_operation_is_enabled_only_at_a_delivery_time",
        port_operation_is_enabled_only_at_a_delivery_time,
    ),
    (
        "self_wake_operation_is_enabled_iff_now_is_a_wake_time",
        self_wake_operation_is_enabled_iff_now_is_a_wake_time,
    ),
    ("tick_waits_for_pending_deliveries", tick_waits_for_pending_deliveries),
];
