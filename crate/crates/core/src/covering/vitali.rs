use serde::{Deserialize, Serialize};

use super::{bad_exponent, check_level, dedup, sup_distance, tile, CoverFamily, Provenance};
use crate::error::Result;
use crate::packets::Cube;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VitaliCover {
    /// Pairwise disjoint selection `Q^(1), ..., Q^(L)`.
    pub kernel: Vec<Cube>,
    /// `A_j`: each `5Q^(l)` tiled by `6^3` `j`-cubes.
    pub family: CoverFamily,
    /// Kernel disjointness and `Q ⊂ 3Q^(l)` for every input, checked exhaustively.
    pub verified: bool,
}

/// Greedy Vitali selection over bad `j`-cubes (in center order), followed by the
/// `5Q` expansion.
pub fn vitali_cover(bad: &[Cube], j: i32, alpha: f64, epsilon: f64, period: f64) -> Result<VitaliCover> {
    check_level(bad, j)?;
    let mut order: Vec<Cube> = bad.to_vec();
    order.sort_by(|a, b| {
        a.center
            .iter()
            .zip(&b.center)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut kernel: Vec<Cube> = Vec::new();
    for q in order {
        let r = q.region();
        if kernel.iter().all(|k| !k.region().intersects(&r, period)) {
            kernel.push(q);
        }
    }
    let cubes = dedup(
        kernel
            .iter()
            .flat_map(|k| tile(&k.dilate(5.0), j, epsilon, 6, period))
            .collect(),
        period,
    );
    let side = crate::packets::cube_side(j, epsilon);
    let disjoint = kernel.iter().enumerate().all(|(i, a)| {
        kernel[i + 1..]
            .iter()
            .all(|b| !a.region().intersects(&b.region(), period))
    });
    let inside = bad
        .iter()
        .all(|q| kernel.iter().any(|k| sup_distance(q.center, k.center, period) < side));
    let budget = (j as f64 * bad_exponent(alpha, epsilon)).exp2();
    Ok(VitaliCover {
        kernel,
        family: CoverFamily::new(j, epsilon, Provenance::A, cubes, budget),
        verified: disjoint && inside,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covering::covered_by;
    use crate::packets::Region;

    #[test]
    fn empty_input() {
        let v = vitali_cover(&[], 3, 1.1, 0.05, 1.0).unwrap();
        assert!(v.family.is_empty() && v.kernel.is_empty() && v.verified);
    }

    #[test]
    fn single_cube_expands_to_five() {
        let q = Cube::new([0.3, 0.6, 0.9], 3, 0.05).unwrap();
        let v = vitali_cover(&[q], 3, 1.1, 0.05, 1.0).unwrap();
        assert_eq!(v.kernel.len(), 1);
        assert!(v.family.len() <= 216);
        let regions: Vec<Region> = v.family.regions();
        assert!(covered_by(&q.dilate(5.0), &regions, 13, 1.0));
    }

    #[test]
    fn mixed_levels_rejected() {
        let a = Cube::new([0.3; 3], 3, 0.05).unwrap();
        let b = Cube::new([0.6; 3], 4, 0.05).unwrap();
        assert!(vitali_cover(&[a, b], 3, 1.1, 0.05, 1.0).is_err());
    }
}
