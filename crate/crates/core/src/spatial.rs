//! Nearest-neighbor search and local surface statistics (PCA covariance,
//! normals). Queries are exact: results match a brute-force linear scan,
//! with ties broken by ascending point index.

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geom::{Point3, PointCloud};

/// Balanced 3D spatial index. Immutable after construction; concurrent
/// queries are safe.
#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<Point3>,
    nodes: Vec<Node>,
    root: i32,
}

#[derive(Debug, Clone, Copy)]
struct Node {
    point: u32,
    axis: u8,
    left: i32,
    right: i32,
}

/// Candidate ordering key: distance first, index breaks ties.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    dist2: f64,
    index: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.dist2
            .total_cmp(&other.dist2)
            .then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl KdTree {
    pub fn build(points: &[Point3]) -> Self {
        let mut indices: Vec<u32> = (0..points.len() as u32).collect();
        let mut nodes = Vec::with_capacity(points.len());
        let root = build_recursive(points, &mut indices, &mut nodes);
        Self {
            points: points.to_vec(),
            nodes,
            root,
        }
    }

    pub fn from_cloud(cloud: &PointCloud) -> Self {
        Self::build(cloud.points())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// The `k` nearest neighbors of `query`, sorted by ascending Euclidean
    /// distance (ties by ascending index). Returns all points when fewer
    /// than `k` exist.
    pub fn knn(&self, query: &Point3, k: usize) -> Result<Vec<(usize, f64)>> {
        if self.points.is_empty() {
            return Err(Error::EmptyIndex);
        }
        if k == 0 {
            return Ok(Vec::new());
        }
        let mut heap: std::collections::BinaryHeap<Candidate> =
            std::collections::BinaryHeap::with_capacity(k + 1);
        self.search(self.root, query, k, &mut heap);
        let mut out: Vec<Candidate> = heap.into_vec();
        out.sort_unstable();
        Ok(out
            .into_iter()
            .map(|c| (c.index, c.dist2.sqrt()))
            .collect())
    }

    fn search(
        &self,
        node_id: i32,
        query: &Point3,
        k: usize,
        heap: &mut std::collections::BinaryHeap<Candidate>,
    ) {
        if node_id < 0 {
            return;
        }
        let node = self.nodes[node_id as usize];
        let idx = node.point as usize;
        let d2 = (self.points[idx] - query).norm_squared();
        let cand = Candidate { dist2: d2, index: idx };
        if heap.len() < k {
            heap.push(cand);
        } else if cand < *heap.peek().expect("heap non-empty") {
            heap.pop();
            heap.push(cand);
        }

        let axis = node.axis as usize;
        let diff = query[axis] - self.points[idx][axis];
        let (near, far) = if diff < 0.0 {
            (node.left, node.right)
        } else {
            (node.right, node.left)
        };
        self.search(near, query, k, heap);
        // Visit the far side unless every point there is strictly worse than
        // the current k-th candidate; equal distances may still win on index.
        let prune = heap.len() == k && diff * diff > heap.peek().expect("heap non-empty").dist2;
        if !prune {
            self.search(far, query, k, heap);
        }
    }
}

fn build_recursive(points: &[Point3], indices: &mut [u32], nodes: &mut Vec<Node>) -> i32 {
    if indices.is_empty() {
        return -1;
    }
    // Split along the axis with the largest spread.
    let mut lo = Vector3::repeat(f64::INFINITY);
    let mut hi = Vector3::repeat(f64::NEG_INFINITY);
    for &i in indices.iter() {
        let p = points[i as usize];
        lo = lo.inf(&p);
        hi = hi.sup(&p);
    }
    let spread = hi - lo;
    let axis = if spread.x >= spread.y && spread.x >= spread.z {
        0
    } else if spread.y >= spread.z {
        1
    } else {
        2
    };

    let mid = indices.len() / 2;
    indices.select_nth_unstable_by(mid, |&a, &b| {
        points[a as usize][axis]
            .total_cmp(&points[b as usize][axis])
            .then(a.cmp(&b))
    });
    let point = indices[mid];
    let node_id = nodes.len() as i32;
    nodes.push(Node {
        point,
        axis: axis as u8,
        left: -1,
        right: -1,
    });
    let (left_slice, rest) = indices.split_at_mut(mid);
    let right_slice = &mut rest[1..];
    let left = build_recursive(points, left_slice, nodes);
    let right = build_recursive(points, right_slice, nodes);
    nodes[node_id as usize].left = left;
    nodes[node_id as usize].right = right;
    node_id
}

/// Mean, eigenvalues (descending, clamped at zero) and orthonormal
/// eigenvectors of the sample covariance over a point's L-neighborhood.
#[derive(Debug, Clone)]
pub struct LocalSurfaceStats {
    pub mean: Vector3<f64>,
    pub eigvals: [f64; 3],
    pub eigvecs: Matrix3<f64>,
    pub neighbor_count: usize,
}

impl LocalSurfaceStats {
    /// Eigenvector of the smallest eigenvalue; approximates the surface
    /// normal for locally planar neighborhoods.
    pub fn normal(&self) -> Vector3<f64> {
        self.eigvecs.column(2).into()
    }
}

/// Statistics over the `neighbors` nearest neighbors of point `index`
/// (the point itself counts as its own nearest neighbor). Covariance uses
/// divisor L-1 and the outer-product form.
pub fn local_stats(
    cloud: &PointCloud,
    tree: &KdTree,
    index: usize,
    neighbors: usize,
) -> Result<LocalSurfaceStats> {
    if neighbors < 3 {
        return Err(Error::DegenerateNeighborhood(neighbors));
    }
    if cloud.len() < neighbors {
        return Err(Error::TooFewPoints {
            got: cloud.len(),
            need: neighbors,
        });
    }
    let nn = tree.knn(&cloud.points()[index], neighbors)?;
    stats_from_neighbors(cloud.points(), &nn)
}

fn stats_from_neighbors(points: &[Point3], nn: &[(usize, f64)]) -> Result<LocalSurfaceStats> {
    let l = nn.len();
    let mut mean = Vector3::zeros();
    for &(i, _) in nn {
        mean += points[i];
    }
    mean /= l as f64;

    let mut cov = Matrix3::zeros();
    for &(i, _) in nn {
        let d = points[i] - mean;
        cov += d * d.transpose();
    }
    cov /= (l - 1) as f64;

    let (eigvals, eigvecs) = sorted_symmetric_eigen(&cov);
    Ok(LocalSurfaceStats {
        mean,
        eigvals,
        eigvecs,
        neighbor_count: l,
    })
}

/// Eigendecomposition of a symmetric 3x3 matrix with eigenvalues sorted
/// descending and clamped at zero (tiny negatives are rounding noise that
/// breaks sqrt downstream).
pub fn sorted_symmetric_eigen(m: &Matrix3<f64>) -> ([f64; 3], Matrix3<f64>) {
    let eig = nalgebra::SymmetricEigen::new(*m);
    let mut order = [0usize, 1, 2];
    order.sort_unstable_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut vals = [0.0; 3];
    let mut vecs = Matrix3::zeros();
    for (slot, &src) in order.iter().enumerate() {
        vals[slot] = eig.eigenvalues[src].max(0.0);
        vecs.set_column(slot, &eig.eigenvectors.column(src));
    }
    (vals, vecs)
}

/// Populates per-point normals from the smallest PCA direction of each
/// L-neighborhood. With `orient_toward` set, normals are flipped to point
/// toward that location.
pub fn estimate_normals(
    cloud: &PointCloud,
    neighbors: usize,
    orient_toward: Option<Point3>,
) -> Result<PointCloud> {
    if neighbors < 3 {
        return Err(Error::DegenerateNeighborhood(neighbors));
    }
    if cloud.len() < neighbors {
        return Err(Error::TooFewPoints {
            got: cloud.len(),
            need: neighbors,
        });
    }
    let tree = KdTree::from_cloud(cloud);
    let normals: Vec<Vector3<f64>> = (0..cloud.len())
        .into_par_iter()
        .map(|i| {
            let stats = local_stats(cloud, &tree, i, neighbors).expect("preconditions checked");
            let mut n = stats.normal();
            if let Some(target) = orient_toward {
                if n.dot(&(target - cloud.points()[i])) < 0.0 {
                    n = -n;
                }
            }
            n
        })
        .collect();
    let mut out = cloud.clone();
    out.set_normals(normals)?;
    Ok(out)
}
