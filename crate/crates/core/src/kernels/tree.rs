use rayon::prelude::*;

use super::{check_inputs, check_separation, ForceEvaluator, KernelSpec, PairField, Point};
use crate::error::{Error, Result};

const LEAF_SIZE: usize = 8;
const MAX_DEPTH: usize = 48;

/// Barnes–Hut octree with monopole (centre-of-mass) cell approximations.
///
/// A cell of side `ℓ` at distance `d` from the target is replaced by its
/// monopole when `ℓ < θ d`; leaves are summed exactly.
#[derive(Clone, Copy, Debug)]
pub struct BarnesHut {
    theta: f64,
}

impl BarnesHut {
    pub fn new(theta: f64) -> Result<Self> {
        if !(theta > 0.0 && theta <= 1.0) {
            return Err(Error::invalid(format!("opening angle must lie in (0, 1], got {theta}")));
        }
        Ok(Self { theta })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }
}

pub fn pairwise_force_tree(spec: &KernelSpec, positions: &[Point], weights: &[f64], theta: f64) -> Result<Vec<Point>> {
    Ok(BarnesHut::new(theta)?.evaluate(spec, positions, weights, 0.0)?.forces)
}

#[derive(Debug)]
struct Node {
    half: f64,
    mass: f64,
    com: Point,
    /// Range into the permuted index array.
    start: usize,
    end: usize,
    children: Vec<usize>,
}

struct Octree {
    nodes: Vec<Node>,
    order: Vec<usize>,
}

impl Octree {
    fn build(positions: &[Point], weights: &[f64]) -> Self {
        let n = positions.len();
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in positions {
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let center = [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1]), 0.5 * (lo[2] + hi[2])];
        let half = (0..3).map(|a| 0.5 * (hi[a] - lo[a])).fold(0.0, f64::max).max(1e-300) * (1.0 + 1e-12);
        let mut tree = Octree {
            nodes: Vec::new(),
            order: (0..n).collect(),
        };
        tree.insert(positions, weights, center, half, 0, n, 0);
        tree
    }

    fn insert(
        &mut self,
        positions: &[Point],
        weights: &[f64],
        center: Point,
        half: f64,
        start: usize,
        end: usize,
        depth: usize,
    ) -> usize {
        let mut mass = 0.0;
        let mut moment = [0.0; 3];
        for &i in &self.order[start..end] {
            mass += weights[i];
            for a in 0..3 {
                moment[a] += weights[i] * positions[i][a];
            }
        }
        let com = if mass > 0.0 {
            [moment[0] / mass, moment[1] / mass, moment[2] / mass]
        } else {
            center
        };
        let id = self.nodes.len();
        self.nodes.push(Node {
            half,
            mass,
            com,
            start,
            end,
            children: Vec::new(),
        });
        if end - start <= LEAF_SIZE || depth >= MAX_DEPTH {
            return id;
        }

        let octant = |p: &Point| -> usize {
            (p[0] >= center[0]) as usize | ((p[1] >= center[1]) as usize) << 1 | ((p[2] >= center[2]) as usize) << 2
        };
        // Stable bucket sort of this node's slice by octant.
        let slice: Vec<usize> = self.order[start..end].to_vec();
        let mut counts = [0usize; 8];
        for &i in &slice {
            counts[octant(&positions[i])] += 1;
        }
        let mut offsets = [0usize; 8];
        for o in 1..8 {
            offsets[o] = offsets[o - 1] + counts[o - 1];
        }
        let mut cursor = offsets;
        for &i in &slice {
            let o = octant(&positions[i]);
            self.order[start + cursor[o]] = i;
            cursor[o] += 1;
        }

        let child_half = 0.5 * half;
        let mut children = Vec::new();
        for o in 0..8 {
            if counts[o] == 0 {
                continue;
            }
            let child_center = [
                center[0] + if o & 1 != 0 { child_half } else { -child_half },
                center[1] + if o & 2 != 0 { child_half } else { -child_half },
                center[2] + if o & 4 != 0 { child_half } else { -child_half },
            ];
            let s = start + offsets[o];
            children.push(self.insert(positions, weights, child_center, child_half, s, s + counts[o], depth + 1));
        }
        self.nodes[id].children = children;
        id
    }
}

struct Accum {
    force: Point,
    potential: f64,
    min_r2: f64,
}

impl ForceEvaluator for BarnesHut {
    fn name(&self) -> &'static str {
        "tree"
    }

    fn evaluate(
        &self,
        spec: &KernelSpec,
        positions: &[Point],
        weights: &[f64],
        min_separation: f64,
    ) -> Result<PairField> {
        check_inputs(positions, weights)?;
        if positions.is_empty() {
            return Ok(PairField {
                min_separation: f64::INFINITY,
                ..Default::default()
            });
        }
        let tree = Octree::build(positions, weights);
        let eps = spec.epsilon;
        let theta = self.theta;

        let per_target: Vec<Accum> = (0..positions.len())
            .into_par_iter()
            .map(|i| {
                let xi = positions[i];
                let mut acc = Accum {
                    force: [0.0; 3],
                    potential: 0.0,
                    min_r2: f64::INFINITY,
                };
                let mut stack = vec![0usize];
                while let Some(id) = stack.pop() {
                    let node = &tree.nodes[id];
                    if node.children.is_empty() {
                        for &j in &tree.order[node.start..node.end] {
                            if j == i {
                                continue;
                            }
                            let d = [xi[0] - positions[j][0], xi[1] - positions[j][1], xi[2] - positions[j][2]];
                            let r2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
                            acc.min_r2 = acc.min_r2.min(r2);
                            if eps == 0.0 && r2 == 0.0 {
                                continue;
                            }
                            let (k, g) = spec.profile(eps + r2);
                            for a in 0..3 {
                                acc.force[a] += weights[j] * g * d[a];
                            }
                            acc.potential += weights[j] * k;
                        }
                        continue;
                    }
                    let d = [xi[0] - node.com[0], xi[1] - node.com[1], xi[2] - node.com[2]];
                    let r2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
                    let side = 2.0 * node.half;
                    if r2 > 0.0 && side * side < theta * theta * r2 {
                        let (k, g) = spec.profile(eps + r2);
                        for a in 0..3 {
                            acc.force[a] += node.mass * g * d[a];
                        }
                        acc.potential += node.mass * k;
                    } else {
                        // Reverse so children are visited in octant order.
                        stack.extend(node.children.iter().rev());
                    }
                }
                acc
            })
            .collect();

        let min_sep = per_target.iter().map(|a| a.min_r2).fold(f64::INFINITY, f64::min).sqrt();
        check_separation(spec, min_sep, min_separation)?;
        Ok(PairField {
            forces: per_target.iter().map(|a| a.force).collect(),
            potentials: per_target.iter().map(|a| a.potential).collect(),
            min_separation: min_sep,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::DirectSum;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian_cloud(n: usize, seed: u64) -> (Vec<Point>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pos = (0..n)
            .map(|_| {
                [
                    StandardNormal.sample(&mut rng),
                    StandardNormal.sample(&mut rng),
                    StandardNormal.sample(&mut rng),
                ]
            })
            .collect();
        (pos, vec![1.0 / n as f64; n])
    }

    fn rel_rms(a: &[Point], b: &[Point]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for (x, y) in a.iter().zip(b) {
            for k in 0..3 {
                num += (x[k] - y[k]).powi(2);
                den += y[k] * y[k];
            }
        }
        (num / den).sqrt()
    }

    #[test]
    fn theta_rejects_out_of_range() {
        assert!(BarnesHut::new(0.0).is_err());
        assert!(BarnesHut::new(1.5).is_err());
        assert!(BarnesHut::new(1.0).is_ok());
    }

    #[test]
    fn tiny_theta_recovers_direct_sum() {
        let spec = KernelSpec::pure_manev(1.0, 0.01);
        let (pos, w) = gaussian_cloud(500, 1);
        let direct = DirectSum.evaluate(&spec, &pos, &w, 0.0).unwrap();
        let tree = BarnesHut::new(1e-9).unwrap().evaluate(&spec, &pos, &w, 0.0).unwrap();
        assert!(rel_rms(&tree.forces, &direct.forces) < 1e-10);
        assert_eq!(tree.min_separation, direct.min_separation);
    }

    #[test]
    fn two_bodies_are_exact_for_any_theta() {
        let spec = KernelSpec::pure_manev(1.0, 0.0);
        let pos = [[0.0; 3], [1.0, 0.0, 0.0]];
        for theta in [0.1, 0.5, 1.0] {
            let f = pairwise_force_tree(&spec, &pos, &[1.0, 1.0], theta).unwrap();
            assert_eq!(f, vec![[2.0, 0.0, 0.0], [-2.0, 0.0, 0.0]]);
        }
    }

    #[test]
    fn error_shrinks_with_theta() {
        let spec = KernelSpec::pure_manev(1.0, 0.01);
        let (pos, w) = gaussian_cloud(1500, 2);
        let direct = DirectSum.evaluate(&spec, &pos, &w, 0.0).unwrap().forces;
        let errs: Vec<f64> = [1.0, 0.7, 0.4, 0.2]
            .iter()
            .map(|&t| rel_rms(&pairwise_force_tree(&spec, &pos, &w, t).unwrap(), &direct))
            .collect();
        for pair in errs.windows(2) {
            assert!(pair[1] < pair[0], "{errs:?}");
        }
    }

    #[test]
    fn coincident_points_terminate() {
        let spec = KernelSpec::pure_manev(1.0, 0.1);
        let pos = vec![[0.5; 3]; 40];
        let field = BarnesHut::new(0.5).unwrap().evaluate(&spec, &pos, &[1.0; 40], 0.0).unwrap();
        assert!(field.forces.iter().all(|f| *f == [0.0; 3]));
    }
}
