use std::collections::{HashMap, VecDeque};

use nalgebra::DMatrix;
use serde::Serialize;

use super::{DistanceIndex, GridSet};
use crate::error::{Error, Result};
use crate::system::{Control, ControlSystem, State};

/// `∂φ(t, x, ·)/∂u` over a control window `u_0, …, u_{t−1}`, assembled by
/// the chain rule as the `d × tm` block row
/// `[Dφ_{t−1}∘∂_u f(x_0), …, ∂_u f(x_{t−1})]`.
pub fn control_sensitivity(sys: &dyn ControlSystem, x: &State, window: &[Control]) -> Result<DMatrix<f64>> {
    if window.is_empty() {
        return Err(Error::Precondition("control window must have length at least 1".into()));
    }
    let d = sys.state_dim();
    let m = sys.control_dim();
    let mut states = vec![x.clone()];
    for u in window {
        let next = crate::system::step(sys, states.last().unwrap(), u)?;
        states.push(next);
    }
    let t = window.len();
    let mut out = DMatrix::zeros(d, t * m);
    let mut carry = DMatrix::<f64>::identity(d, d);
    for s in (0..t).rev() {
        let b = sys.jac_control(states[s].as_slice(), window[s].as_slice());
        out.columns_mut(s * m, m).copy_from(&(&carry * b));
        carry *= sys.jac_state(states[s].as_slice(), window[s].as_slice());
    }
    Ok(out)
}

/// Numerical rank (singular values above `1e-8·σ_max`) of the control
/// sensitivity matrix.
pub fn regularity_rank(sys: &dyn ControlSystem, x: &State, window: &[Control]) -> Result<usize> {
    let m = control_sensitivity(sys, x, window)?;
    let sv = m.singular_values();
    let top = sv.iter().cloned().fold(0.0, f64::max);
    if top == 0.0 {
        return Ok(0);
    }
    Ok(sv.iter().filter(|&&s| s > 1e-8 * top).count())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChainStep {
    pub point: State,
    pub control: Control,
    /// `d(f(point, control), next point)`; zero for the final step.
    pub jump: f64,
}

/// Tries to hit `y` exactly from `p` in one step by Gauss–Newton on the
/// control.
fn steer(sys: &dyn ControlSystem, p: &State, y: &State) -> Option<(Control, f64)> {
    let range = sys.control_range();
    let mut u = sys.nominal_control();
    let mut out = vec![0.0; sys.state_dim()];
    for _ in 0..8 {
        sys.map_into(p.as_slice(), u.as_slice(), &mut out);
        let r = State::from_column_slice(&out) - y;
        if r.norm() <= 1e-12 * (1.0 + y.norm()) {
            break;
        }
        let b = sys.jac_control(p.as_slice(), u.as_slice());
        let pinv = b.pseudo_inverse(1e-12).ok()?;
        u -= pinv * r;
    }
    if !range.contains(u.as_slice(), 1e-12) {
        return None;
    }
    let u = range.project(&u);
    sys.map_into(p.as_slice(), u.as_slice(), &mut out);
    Some((u, (State::from_column_slice(&out) - y).norm()))
}

/// Breadth-first search for a controlled `ε`-chain from `x` to `y` over the
/// cell graph of `grid`: intermediate points are occupied cell centres,
/// controls come from the stencil, and each jump is at most `eps`. The last
/// step also tries to steer onto `y` exactly.
pub fn controlled_chain(sys: &dyn ControlSystem, grid: &GridSet, x: &State, y: &State, eps: f64) -> Result<Vec<ChainStep>> {
    if !grid.contains_point(x.as_slice()) || !grid.contains_point(y.as_slice()) {
        return Err(Error::Precondition("chain endpoints must lie in occupied cells".into()));
    }
    let nominal = sys.nominal_control();
    if x == y {
        return Ok(vec![ChainStep { point: x.clone(), control: nominal, jump: 0.0 }]);
    }
    let index = DistanceIndex::with_radius(grid, eps);
    let stencil = sys.control_range().stencil();
    let d = sys.state_dim();

    // node u64::MAX is the start point
    const START: u64 = u64::MAX;
    let point_of = |n: u64| -> State {
        if n == START {
            x.clone()
        } else {
            State::from_vec(grid.center(n))
        }
    };
    let mut parent: HashMap<u64, (u64, Control, f64)> = HashMap::new();
    let mut queue = VecDeque::from([START]);
    let mut finish: Option<(u64, Control, f64)> = None;
    let mut img = vec![0.0; d];
    'search: while let Some(n) = queue.pop_front() {
        let p = point_of(n);
        if let Some((u, jump)) = steer(sys, &p, y) {
            if jump <= eps.max(1e-12) {
                finish = Some((n, u, jump));
                break 'search;
            }
        }
        for u in &stencil {
            sys.map_into(p.as_slice(), u.as_slice(), &mut img);
            let q = State::from_column_slice(&img);
            let to_y = (&q - y).norm();
            if to_y <= eps {
                finish = Some((n, u.clone(), to_y));
                break 'search;
            }
            for c in index.centers_near(&img) {
                if let std::collections::hash_map::Entry::Vacant(e) = parent.entry(c) {
                    let jump = (State::from_vec(grid.center(c)) - &q).norm();
                    e.insert((n, u.clone(), jump));
                    queue.push_back(c);
                }
            }
        }
    }
    let (mut node, u_last, jump_last) = finish.ok_or(Error::NotChainConnected)?;
    let mut rev = vec![ChainStep { point: y.clone(), control: nominal, jump: 0.0 }];
    rev.push(ChainStep { point: point_of(node), control: u_last, jump: jump_last });
    while node != START {
        let (prev, u, jump) = parent[&node].clone();
        rev.push(ChainStep { point: point_of(prev), control: u, jump });
        node = prev;
    }
    rev.reverse();
    Ok(rev)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{Henon, LinearSystem};
    use nalgebra::DVector;

    #[test]
    fn ranks_for_henon_variants() {
        let planar = Henon::planar(0.08);
        let scalar = Henon::scalar(0.08);
        let x = DVector::from_vec(vec![0.7, -1.2]);
        assert_eq!(regularity_rank(&planar, &x, &[DVector::zeros(2)]).unwrap(), 2);
        assert_eq!(regularity_rank(&scalar, &x, &[DVector::zeros(1)]).unwrap(), 1);
        assert_eq!(regularity_rank(&scalar, &x, &[DVector::zeros(1), DVector::zeros(1)]).unwrap(), 2);
    }

    #[test]
    fn toy_steers_in_one_step() {
        let toy = LinearSystem::linear_toy(1.0);
        let g = GridSet::full(vec![-1.0, -1.0], vec![1.0, 1.0], 16).unwrap();
        let x = DVector::from_vec(vec![0.1, 0.0]);
        let y = DVector::zeros(2);
        let chain = controlled_chain(&toy, &g, &x, &y, 0.0).unwrap();
        assert_eq!(chain.len(), 2);
        assert!(chain[0].jump <= 1e-12);
        assert!((chain[0].control[0] + 0.2).abs() < 1e-12);
        let same = controlled_chain(&toy, &g, &x, &x, 0.0).unwrap();
        assert_eq!(same.len(), 1);
        assert_eq!(same[0].jump, 0.0);
    }
}
