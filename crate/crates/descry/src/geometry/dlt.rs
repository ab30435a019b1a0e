//! Direct linear transform homography estimation with Hartley
//! normalization.

use nalgebra::DMatrix;

use super::homography::Homography;
use super::pair::CorrespondenceSet;
use super::GeometryError;

/// Estimates the homography sending anchor points to positive points.
///
/// Both point sets are similarity-normalized to centroid zero and RMS
/// distance sqrt(2), the 2n x 9 design matrix is solved by SVD, and the
/// result is denormalized and scaled to a unit bottom-right entry. Rank
/// deficiency beyond the expected one-dimensional null space (four collinear
/// points, repeated points) is reported as `Degenerate`.
pub fn dlt_homography(corrs: &CorrespondenceSet) -> Result<Homography, GeometryError> {
    let n = corrs.len();
    if n < 4 {
        return Err(GeometryError::TooFewCorrespondences(n));
    }

    let (ta, a_pts) = normalize(corrs.iter().map(|c| c.a))?;
    let (tp, p_pts) = normalize(corrs.iter().map(|c| c.p))?;

    // nalgebra's SVD wants at least as many rows as columns; pad with zero
    // rows when n == 4.
    let rows = (2 * n).max(9);
    let mut design = DMatrix::<f64>::zeros(rows, 9);
    for (i, ((x, y), (u, v))) in a_pts.iter().zip(&p_pts).enumerate() {
        design[(2 * i, 0)] = -x;
        design[(2 * i, 1)] = -y;
        design[(2 * i, 2)] = -1.0;
        design[(2 * i, 6)] = u * x;
        design[(2 * i, 7)] = u * y;
        design[(2 * i, 8)] = *u;
        design[(2 * i + 1, 3)] = -x;
        design[(2 * i + 1, 4)] = -y;
        design[(2 * i + 1, 5)] = -1.0;
        design[(2 * i + 1, 6)] = v * x;
        design[(2 * i + 1, 7)] = v * y;
        design[(2 * i + 1, 8)] = *v;
    }

    let svd = design.svd(false, true);
    let sv = &svd.singular_values;
    // Singular values come back sorted descending. A healthy configuration
    // has exactly one (near-)zero value; two means the solution is not
    // unique.
    if sv[7] < 1e-8 * sv[0].max(1e-300) {
        return Err(GeometryError::Degenerate(
            "design matrix has a null space of dimension two or more",
        ));
    }
    let v_t = svd.v_t.expect("v_t requested");
    let hrow = v_t.row(8);
    let hn = Homography::from_matrix([
        [hrow[0], hrow[1], hrow[2]],
        [hrow[3], hrow[4], hrow[5]],
        [hrow[6], hrow[7], hrow[8]],
    ]);

    let tp_inv = tp.inverse()?;
    let h = tp_inv.compose(&hn).compose(&ta);
    h.normalized()
        .map_err(|_| GeometryError::Degenerate("estimated transform is affine-degenerate"))
}

/// Hartley similarity normalization: returns the transform and the
/// transformed points.
fn normalize(
    points: impl Iterator<Item = (f64, f64)>,
) -> Result<(Homography, Vec<(f64, f64)>), GeometryError> {
    let pts: Vec<(f64, f64)> = points.collect();
    let n = pts.len() as f64;
    let cx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let cy = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let rms = (pts
        .iter()
        .map(|p| (p.0 - cx).powi(2) + (p.1 - cy).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    if rms < 1e-12 {
        return Err(GeometryError::Degenerate("all points coincide"));
    }
    let s = std::f64::consts::SQRT_2 / rms;
    let t = Homography::from_matrix([[s, 0.0, -s * cx], [0.0, s, -s * cy], [0.0, 0.0, 1.0]]);
    let mapped = pts
        .iter()
        .map(|p| (s * (p.0 - cx), s * (p.1 - cy)))
        .collect();
    Ok((t, mapped))
}
