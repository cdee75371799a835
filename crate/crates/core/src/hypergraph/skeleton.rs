//! Skeleton topologies: bone trees, centre joints and rest poses.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Identifier stored in data files.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SkeletonId {
    Custom,
    Ntu25,
    Ucla20,
}

impl SkeletonId {
    pub fn code(self) -> u8 {
        match self {
            SkeletonId::Custom => 0,
            SkeletonId::Ntu25 => 1,
            SkeletonId::Ucla20 => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(SkeletonId::Custom),
            1 => Some(SkeletonId::Ntu25),
            2 => Some(SkeletonId::Ucla20),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SkeletonId::Custom => "custom",
            SkeletonId::Ntu25 => "ntu25",
            SkeletonId::Ucla20 => "ucla20",
        }
    }

    /// The built-in definition, if there is one.
    pub fn definition(self) -> Option<SkeletonDefinition> {
        match self {
            SkeletonId::Custom => None,
            SkeletonId::Ntu25 => Some(SkeletonDefinition::ntu25()),
            SkeletonId::Ucla20 => Some(SkeletonDefinition::ucla20()),
        }
    }
}

impl std::str::FromStr for SkeletonId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ntu25" => Ok(SkeletonId::Ntu25),
            "ucla20" => Ok(SkeletonId::Ucla20),
            "custom" => Ok(SkeletonId::Custom),
            other => Err(Error::input(format!("unknown skeleton '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SkeletonDefinition {
    parent: Vec<usize>,
    center_joint: usize,
    rest_pose: Vec<[f64; 3]>,
    neighbors: Vec<Vec<usize>>,
    root: usize,
}

impl SkeletonDefinition {
    /// `parent[root] == root`; every other joint must reach the root by
    /// following parent links.
    pub fn new(parent: Vec<usize>, center_joint: usize, rest_pose: Vec<[f64; 3]>) -> Result<Self> {
        let v = parent.len();
        if v == 0 {
            return Err(Error::input("skeleton needs at least one joint"));
        }
        if rest_pose.len() != v {
            return Err(Error::input(format!("{} rest positions for {v} joints", rest_pose.len())));
        }
        if center_joint >= v {
            return Err(Error::input(format!("center joint {center_joint} out of range")));
        }
        if let Some(&p) = parent.iter().find(|&&p| p >= v) {
            return Err(Error::input(format!("parent index {p} out of range")));
        }
        let roots: Vec<usize> = (0..v).filter(|&j| parent[j] == j).collect();
        if roots.len() != 1 {
            return Err(Error::input(format!("bone tree needs exactly one root, found {}", roots.len())));
        }
        let root = roots[0];
        for start in 0..v {
            let mut j = start;
            let mut steps = 0;
            while j != root {
                j = parent[j];
                steps += 1;
                if steps > v {
                    return Err(Error::input(format!("joint {start} is on a parent cycle")));
                }
            }
        }
        let mut neighbors = vec![Vec::new(); v];
        for j in 0..v {
            if j != root {
                neighbors[j].push(parent[j]);
                neighbors[parent[j]].push(j);
            }
        }
        neighbors.iter_mut().for_each(|n| n.sort_unstable());
        Ok(SkeletonDefinition {
            parent,
            center_joint,
            rest_pose,
            neighbors,
            root,
        })
    }

    pub fn num_joints(&self) -> usize {
        self.parent.len()
    }

    pub fn parent(&self, joint: usize) -> usize {
        self.parent[joint]
    }

    pub fn parents(&self) -> &[usize] {
        &self.parent
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn center_joint(&self) -> usize {
        self.center_joint
    }

    pub fn rest_pose(&self) -> &[[f64; 3]] {
        &self.rest_pose
    }

    /// Bone neighbours of a joint, ascending.
    pub fn neighbors(&self, joint: usize) -> &[usize] {
        &self.neighbors[joint]
    }

    /// `(child, parent)` for every non-root joint.
    pub fn bones(&self) -> Vec<(usize, usize)> {
        (0..self.num_joints())
            .filter(|&j| j != self.root)
            .map(|j| (j, self.parent[j]))
            .collect()
    }

    /// Hop counts on the bone tree from `source` to every joint.
    pub fn hop_distances(&self, source: usize) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.num_joints()];
        let mut queue = VecDeque::from([source]);
        dist[source] = 0;
        while let Some(j) = queue.pop_front() {
            for &n in &self.neighbors[j] {
                if dist[n] == usize::MAX {
                    dist[n] = dist[j] + 1;
                    queue.push_back(n);
                }
            }
        }
        dist
    }

    /// Symmetric 0/1 bone adjacency without self loops.
    pub fn adjacency(&self) -> Tensor {
        let v = self.num_joints();
        let mut a = Tensor::zeros(&[v, v]);
        for (c, p) in self.bones() {
            a.set2(c, p, 1.0);
            a.set2(p, c, 1.0);
        }
        a
    }

    /// Relabels joints so that old joint `j` becomes `perm[j]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let v = self.num_joints();
        if perm.len() != v {
            return Err(Error::input("permutation length mismatch"));
        }
        let mut parent = vec![0; v];
        let mut rest = vec![[0.0; 3]; v];
        for j in 0..v {
            parent[perm[j]] = perm[self.parent[j]];
            rest[perm[j]] = self.rest_pose[j];
        }
        Self::new(parent, perm[self.center_joint], rest)
    }

    /// NTU RGB+D 25-joint Kinect v2 layout. Centre is the spine middle,
    /// the tree is rooted at the spine shoulder.
    pub fn ntu25() -> Self {
        // 1-based (child, parent) pairs of the Kinect v2 skeleton.
        const PAIRS: [(usize, usize); 24] = [
            (1, 2), (2, 21), (3, 21), (4, 3), (5, 21), (6, 5), (7, 6), (8, 7),
            (9, 21), (10, 9), (11, 10), (12, 11), (13, 1), (14, 13), (15, 14), (16, 15),
            (17, 1), (18, 17), (19, 18), (20, 19), (22, 23), (23, 8), (24, 25), (25, 12),
        ];
        let rest = vec![
            [0.0, 0.0, 0.0],       // spine base
            [0.0, 0.30, 0.0],      // spine mid
            [0.0, 0.58, 0.0],      // neck
            [0.0, 0.72, 0.02],     // head
            [-0.18, 0.50, 0.0],    // left shoulder
            [-0.22, 0.25, 0.02],   // left elbow
            [-0.24, 0.03, 0.04],   // left wrist
            [-0.25, -0.04, 0.05],  // left hand
            [0.18, 0.50, 0.0],     // right shoulder
            [0.22, 0.25, 0.02],    // right elbow
            [0.24, 0.03, 0.04],    // right wrist
            [0.25, -0.04, 0.05],   // right hand
            [-0.09, -0.02, 0.0],   // left hip
            [-0.10, -0.42, 0.03],  // left knee
            [-0.10, -0.80, 0.0],   // left ankle
            [-0.10, -0.85, 0.10],  // left foot
            [0.09, -0.02, 0.0],    // right hip
            [0.10, -0.42, 0.03],   // right knee
            [0.10, -0.80, 0.0],    // right ankle
            [0.10, -0.85, 0.10],   // right foot
            [0.0, 0.50, 0.0],      // spine shoulder
            [-0.26, -0.12, 0.06],  // left hand tip
            [-0.21, -0.07, 0.08],  // left thumb
            [0.26, -0.12, 0.06],   // right hand tip
            [0.21, -0.07, 0.08],   // right thumb
        ];
        Self::from_pairs(25, 20, 1, &PAIRS, rest)
    }

    /// Northwestern-UCLA 20-joint Kinect v1 layout. Centre is the spine,
    /// the tree is rooted at the shoulder centre.
    pub fn ucla20() -> Self {
        const PAIRS: [(usize, usize); 19] = [
            (1, 2), (2, 3), (4, 3), (5, 3), (6, 5), (7, 6), (8, 7), (9, 3), (10, 9),
            (11, 10), (12, 11), (13, 1), (14, 13), (15, 14), (16, 15), (17, 1), (18, 17),
            (19, 18), (20, 19),
        ];
        let rest = vec![
            [0.0, 0.0, 0.0],       // hip centre
            [0.0, 0.25, 0.0],      // spine
            [0.0, 0.50, 0.0],      // shoulder centre
            [0.0, 0.68, 0.02],     // head
            [-0.18, 0.48, 0.0],    // left shoulder
            [-0.22, 0.24, 0.02],   // left elbow
            [-0.24, 0.02, 0.04],   // left wrist
            [-0.25, -0.06, 0.05],  // left hand
            [0.18, 0.48, 0.0],     // right shoulder
            [0.22, 0.24, 0.02],    // right elbow
            [0.24, 0.02, 0.04],    // right wrist
            [0.25, -0.06, 0.05],   // right hand
            [-0.09, -0.03, 0.0],   // left hip
            [-0.10, -0.43, 0.03],  // left knee
            [-0.10, -0.81, 0.0],   // left ankle
            [-0.10, -0.86, 0.10],  // left foot
            [0.09, -0.03, 0.0],    // right hip
            [0.10, -0.43, 0.03],   // right knee
            [0.10, -0.81, 0.0],    // right ankle
            [0.10, -0.86, 0.10],   // right foot
        ];
        Self::from_pairs(20, 2, 1, &PAIRS, rest)
    }

    fn from_pairs(v: usize, root: usize, center: usize, pairs: &[(usize, usize)], rest: Vec<[f64; 3]>) -> Self {
        let mut parent: Vec<usize> = (0..v).collect();
        for &(c, p) in pairs {
            parent[c - 1] = p - 1;
        }
        debug_assert_eq!(parent[root], root);
        Self::new(parent, center, rest).expect("built-in skeleton is a valid tree")
    }
}
