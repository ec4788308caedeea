//! The four shipped desk games.
//!
//! * `e1`: two-player zero-sum, `b = a1 + a2`, Isaacs holds.
//! * `e2`: battle of the sexes payoff table, no drift control.
//! * `e3`: two-player zero-sum, `b = a1·a2`, matching pennies in the drift (no Isaacs).
//! * `e4`: single-player control, `b = a`, `g = tanh(x)`.

use crate::game::{GameSpec, GameSpecBuilder};

pub fn e1() -> GameSpec {
    GameSpecBuilder::new(2, 1, 1.0)
        .scalar_actions(&[-1.0, 0.0, 1.0])
        .scalar_actions(&[-1.0, 0.0, 1.0])
        .drift(&["a1 + a2"])
        .running(&["0", "0"])
        .terminal(&["tanh(x1 - 0.5)", "-tanh(x1 - 0.5)"])
        .build()
        .expect("desk game e1")
}

pub fn e2() -> GameSpec {
    GameSpecBuilder::new(2, 1, 1.0)
        .scalar_actions(&[0.0, 1.0])
        .scalar_actions(&[0.0, 1.0])
        .drift(&["0"])
        .table_row(vec![vec![0.0], vec![0.0]], vec![2.0, 1.0])
        .table_row(vec![vec![0.0], vec![1.0]], vec![0.0, 0.0])
        .table_row(vec![vec![1.0], vec![0.0]], vec![0.0, 0.0])
        .table_row(vec![vec![1.0], vec![1.0]], vec![1.0, 2.0])
        .terminal(&["0", "0"])
        .build()
        .expect("desk game e2")
}

pub fn e3() -> GameSpec {
    GameSpecBuilder::new(2, 1, 1.0)
        .scalar_actions(&[-1.0, 1.0])
        .scalar_actions(&[-1.0, 1.0])
        .drift(&["a1 * a2"])
        .running(&["0", "0"])
        .terminal(&["tanh(x1 - 0.5)", "-tanh(x1 - 0.5)"])
        .build()
        .expect("desk game e3")
}

pub fn e4() -> GameSpec {
    GameSpecBuilder::new(1, 1, 1.0)
        .scalar_actions(&[-1.0, 0.0, 1.0])
        .drift(&["a1"])
        .running(&["0"])
        .terminal(&["tanh(x1)"])
        .build()
        .expect("desk game e4")
}
