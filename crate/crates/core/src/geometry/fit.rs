use super::{Isometry, Point2, EPS_GEOM};
use crate::error::{DrumError, Result};

/// Least-squares rigid fit `dst ≈ iso(src)`.
///
/// Both the best rotation and the best reflection are computed in closed form
/// and the one with the smaller residual wins. Returns the isometry and the
/// root-mean-square residual.
pub fn fit_isometry(src: &[Point2], dst: &[Point2]) -> Result<(Isometry, f64)> {
    if src.len() != dst.len() {
        return Err(DrumError::InvalidArgument(format!(
            "point lists differ in length ({} vs {})",
            src.len(),
            dst.len()
        )));
    }
    if src.len() < 3 {
        return Err(DrumError::InsufficientPoints(format!("{} point pairs", src.len())));
    }
    let n = src.len() as f64;
    let cs = centroid(src);
    let cd = centroid(dst);

    // spread of the source cloud; collinear clouds have a vanishing minor axis
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in src {
        let u = p.sub(cs);
        sxx += u.x * u.x;
        sxy += u.x * u.y;
        syy += u.y * u.y;
    }
    let tr = sxx + syy;
    let disc = ((sxx - syy).powi(2) + 4.0 * sxy * sxy).sqrt();
    let minor = 0.5 * (tr - disc) / n;
    let scale = (tr / n).max(EPS_GEOM);
    if minor.sqrt() <= 1e-9 * scale.sqrt().max(1.0) {
        return Err(DrumError::InsufficientPoints("source points are collinear".into()));
    }

    let (mut a, mut b, mut c, mut d) = (0.0, 0.0, 0.0, 0.0);
    for (p, q) in src.iter().zip(dst) {
        let u = p.sub(cs);
        let v = q.sub(cd);
        a += u.x * v.x + u.y * v.y;
        b += u.x * v.y - u.y * v.x;
        c += v.x * u.x - v.y * u.y;
        d += v.x * u.y + v.y * u.x;
    }
    let theta = b.atan2(a);
    let (s, co) = theta.sin_cos();
    let rot = [[co, -s], [s, co]];
    let phi = d.atan2(c);
    let (s, co) = phi.sin_cos();
    let refl = [[co, s], [s, -co]];

    let mut best: Option<(Isometry, f64)> = None;
    for q in [rot, refl] {
        let qc = Point2::new(q[0][0] * cs.x + q[0][1] * cs.y, q[1][0] * cs.x + q[1][1] * cs.y);
        let iso = Isometry {
            q,
            t: [cd.x - qc.x, cd.y - qc.y],
        };
        let rms = rms_residual(&iso, src, dst);
        if best.as_ref().map_or(true, |(_, r)| rms < *r) {
            best = Some((iso, rms));
        }
    }
    Ok(best.expect("two candidates"))
}

/// Rigid fit on the real line, `dst.x ≈ ±src.x + t`, returned as a planar
/// isometry that fixes the `y` axis.
pub fn fit_isometry_1d(src: &[f64], dst: &[f64]) -> Result<(Isometry, f64)> {
    if src.len() != dst.len() {
        return Err(DrumError::InvalidArgument("point lists differ in length".into()));
    }
    if src.len() < 2 {
        return Err(DrumError::InsufficientPoints(format!("{} point pairs", src.len())));
    }
    let n = src.len() as f64;
    let ms = src.iter().sum::<f64>() / n;
    let md = dst.iter().sum::<f64>() / n;
    if src.iter().all(|s| (s - ms).abs() <= EPS_GEOM) {
        return Err(DrumError::InsufficientPoints("source points coincide".into()));
    }
    let mut best: Option<(Isometry, f64)> = None;
    for sign in [1.0, -1.0] {
        let t = md - sign * ms;
        let ss: f64 = src
            .iter()
            .zip(dst)
            .map(|(s, d)| (sign * s + t - d).powi(2))
            .sum();
        let rms = (ss / n).sqrt();
        let iso = Isometry {
            q: [[sign, 0.0], [0.0, 1.0]],
            t: [t, 0.0],
        };
        if best.as_ref().map_or(true, |(_, r)| rms < *r) {
            best = Some((iso, rms));
        }
    }
    Ok(best.expect("two candidates"))
}

fn centroid(pts: &[Point2]) -> Point2 {
    let n = pts.len() as f64;
    let s = pts.iter().fold(Point2::default(), |acc, p| acc.add(*p));
    s.scale(1.0 / n)
}

fn rms_residual(iso: &Isometry, src: &[Point2], dst: &[Point2]) -> f64 {
    let ss: f64 = src
        .iter()
        .zip(dst)
        .map(|(p, q)| iso.apply(*p).sub(*q).dot(iso.apply(*p).sub(*q)))
        .sum();
    (ss / src.len() as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cloud() -> Vec<Point2> {
        vec![
            Point2::new(0.0, 0.0),
            Point2::new(2.0, 0.5),
            Point2::new(-1.0, 3.0),
            Point2::new(0.7, -1.2),
        ]
    }

    #[test]
    fn identity_fit() {
        let (iso, rms) = fit_isometry(&cloud(), &cloud()).unwrap();
        assert!(rms < 1e-15);
        assert!(iso.distance(&Isometry::identity()) < 1e-14);
    }

    #[test]
    fn quarter_turn_plus_shift() {
        let target = Isometry::rotation(std::f64::consts::FRAC_PI_2, Point2::new(1.0, 0.0));
        let dst: Vec<_> = cloud().iter().map(|p| target.apply(*p)).collect();
        let (iso, rms) = fit_isometry(&cloud(), &dst).unwrap();
        assert!(rms < 1e-12);
        assert!(iso.distance(&target) < 1e-12);
    }

    #[test]
    fn scaling_leaves_a_residual() {
        let dst: Vec<_> = cloud().iter().map(|p| p.scale(1.1)).collect();
        let (_, rms) = fit_isometry(&cloud(), &dst).unwrap();
        assert!(rms > 0.0);
    }

    #[test]
    fn too_few_or_collinear_points() {
        let two = &cloud()[..2];
        assert!(matches!(fit_isometry(two, two), Err(DrumError::InsufficientPoints(_))));
        let line: Vec<_> = (0..5).map(|i| Point2::new(i as f64, 2.0 * i as f64)).collect();
        assert!(matches!(fit_isometry(&line, &line), Err(DrumError::InsufficientPoints(_))));
    }

    #[test]
    fn one_dimensional_reflection() {
        let src = [0.5, 1.0, 2.0, 3.0];
        let dst: Vec<f64> = src.iter().map(|x| 2.0 * std::f64::consts::PI - x).collect();
        let (iso, rms) = fit_isometry_1d(&src, &dst).unwrap();
        assert!(rms < 1e-14);
        assert_eq!(iso.orientation(), -1);
        assert!((iso.t[0] - 2.0 * std::f64::consts::PI).abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn recovers_exact_rigid_images(
            theta in -3.1f64..3.1, tx in -5.0f64..5.0, ty in -5.0f64..5.0,
            flip in any::<bool>(), shift in 0usize..4,
        ) {
            let mut target = Isometry::rotation(theta, Point2::new(tx, ty));
            if flip {
                target = target.compose(&Isometry::reflection(Point2::new(0.0, 0.0), Point2::new(1.0, 0.3)).unwrap());
            }
            let src = cloud();
            let dst: Vec<_> = src.iter().map(|p| target.apply(*p)).collect();
            let (iso, rms) = fit_isometry(&src, &dst).unwrap();
            prop_assert!(rms < 1e-9);
            prop_assert!(iso.distance(&target) < 1e-9);
            // relabelling the pairs does not change the fit
            let mut s2 = src.clone();
            let mut d2 = dst.clone();
            s2.rotate_left(shift);
            d2.rotate_left(shift);
            let (iso2, _) = fit_isometry(&s2, &d2).unwrap();
            prop_assert!(iso2.distance(&iso) < 1e-9);
        }

        #[test]
        fn compositions_stay_orthogonal(angles in proptest::collection::vec(-3.2f64..3.2, 1000)) {
            let mut acc = Isometry::identity();
            for (k, a) in angles.iter().enumerate() {
                let step = if k % 3 == 0 {
                    Isometry::reflection(Point2::new(0.0, 0.0), Point2::new(a.cos(), a.sin())).unwrap()
                } else {
                    Isometry::rotation(*a, Point2::new(0.1, -0.2))
                };
                acc = step.compose(&acc).inverse();
                prop_assert!(acc.orthogonality_error() < 1e-12);
            }
        }
    }
}
