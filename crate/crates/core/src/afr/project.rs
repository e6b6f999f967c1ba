use super::Norm;
use crate::numerics::{norm1, norm2};

/// Projects `candidate` onto the `norm`-ball of radius `eta` around `center`.
///
/// For `L0`, `eta` is truncated to a coordinate count and the largest
/// deviations are kept.
pub fn project(candidate: &[f64], center: &[f64], norm: Norm, eta: f64) -> Vec<f64> {
    let mut d: Vec<f64> = candidate.iter().zip(center).map(|(c, z)| c - z).collect();
    match norm {
        Norm::L2 => {
            let len = norm2(&d);
            if len > eta {
                let s = eta / len;
                d.iter_mut().for_each(|v| *v *= s);
            }
        }
        Norm::L1 => {
            if norm1(&d) > eta {
                let theta = l1_threshold(&d, eta);
                d.iter_mut().for_each(|v| *v = v.signum() * (v.abs() - theta).max(0.0));
            }
        }
        Norm::L0 => {
            let k = eta.max(0.0).floor() as usize;
            if k < d.len() {
                let mut order: Vec<usize> = (0..d.len()).collect();
                order.sort_by(|&a, &b| d[b].abs().total_cmp(&d[a].abs()).then(a.cmp(&b)));
                for &i in &order[k..] {
                    d[i] = 0.0;
                }
            }
        }
    }
    center.iter().zip(&d).map(|(z, v)| z + v).collect()
}

/// Soft threshold `θ` such that `Σ max(|dᵢ| − θ, 0) = eta`.
fn l1_threshold(d: &[f64], eta: f64) -> f64 {
    let mut u: Vec<f64> = d.iter().map(|v| v.abs()).collect();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cum += uj;
        let t = (cum - eta) / (j + 1) as f64;
        if uj > t {
            theta = t;
        } else {
            break;
        }
    }
    theta.max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn inside_ball_is_unchanged() {
        let c = [1.0, 2.0];
        let x = [1.1, 2.1];
        for norm in [Norm::L1, Norm::L2] {
            assert_eq!(project(&x, &c, norm, 1.0), x.to_vec());
        }
        assert_eq!(project(&x, &c, Norm::L0, 2.0), x.to_vec());
    }

    #[test]
    fn l1_projection_known_case() {
        // (3, 1) onto the unit l1 ball: θ = 2 → (1, 0)
        let p = project(&[3.0, 1.0], &[0.0, 0.0], Norm::L1, 1.0);
        assert!((p[0] - 1.0).abs() < 1e-12 && p[1].abs() < 1e-12);
    }

    #[test]
    fn l0_keeps_largest() {
        let p = project(&[0.5, -3.0, 1.0], &[0.0; 3], Norm::L0, 1.0);
        assert_eq!(p, vec![0.0, -3.0, 0.0]);
    }

    proptest! {
        #[test]
        fn projections_are_feasible(
            v in prop::collection::vec(-10.0f64..10.0, 1..12),
            eta in 0.01f64..5.0,
        ) {
            let c = vec![0.25; v.len()];
            let p2 = project(&v, &c, Norm::L2, eta);
            let d2: Vec<f64> = p2.iter().zip(&c).map(|(a, b)| a - b).collect();
            prop_assert!(norm2(&d2) <= eta + 1e-9);
            let p1 = project(&v, &c, Norm::L1, eta);
            let d1: Vec<f64> = p1.iter().zip(&c).map(|(a, b)| a - b).collect();
            prop_assert!(norm1(&d1) <= eta + 1e-9);
            let k = eta.floor() as usize;
            let p0 = project(&v, &c, Norm::L0, eta);
            let nz = p0.iter().zip(&c).filter(|(a, b)| a != b).count();
            prop_assert!(nz <= k);
        }

        #[test]
        fn l1_projection_is_nearest_on_boundary(
            v in prop::collection::vec(-5.0f64..5.0, 2..6),
            eta in 0.1f64..2.0,
        ) {
            let c = vec![0.0; v.len()];
            let p = project(&v, &c, Norm::L1, eta);
            let dist = |q: &[f64]| norm2(&q.iter().zip(&v).map(|(a, b)| a - b).collect::<Vec<_>>());
            // any other boundary point along a coordinate flip is no closer
            let best = dist(&p);
            for i in 0..v.len() {
                let mut q = vec![0.0; v.len()];
                q[i] = eta * v[i].signum();
                prop_assert!(best <= dist(&q) + 1e-9);
            }
        }
    }
}
