//! Rate–quality analysis: upper convex hulls, best-of-pair ladders, hull
//! labels and convexity filtering of ladder curves.

use thiserror::Error;

use crate::domain::{Resolution, Zone, ZoneError, ZoneTable};
use crate::ingest::{find_point, Metric, RQPoint};

#[derive(Debug, Error, PartialEq)]
pub enum LadderError {
    #[error("no points to build a hull from")]
    EmptyInput,
    #[error("hull is empty")]
    EmptyHull,
    #[error("no {resolution} measurement at {target} Mbps")]
    MissingMeasurement { target: f64, resolution: Resolution },
    #[error("fewer than two points survive convexity filtering")]
    TooFewPoints,
    #[error(transparent)]
    Zone(#[from] ZoneError),
}

/// Upper concave envelope of one scene's points, rate ascending.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvexHull {
    pub points: Vec<RQPoint>,
    pub metric: Metric,
}

impl ConvexHull {
    pub fn coords(&self) -> Vec<(f64, f64)> {
        self.points.iter().map(|p| (p.measured_bitrate, p.quality(self.metric))).collect()
    }
}

/// `> 0` when `c` lies above the line through `a` and `b`.
fn cross(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> f64 {
    (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0)
}

/// Pareto filter followed by a monotone-chain upper hull on
/// (measured bitrate, quality). Collinear interior points are removed.
pub fn upper_convex_hull(points: &[RQPoint], metric: Metric) -> Result<ConvexHull, LadderError> {
    if points.is_empty() {
        return Err(LadderError::EmptyInput);
    }
    let mut sorted: Vec<&RQPoint> = points.iter().collect();
    // rate ascending, quality descending; the rest only makes the order total
    sorted.sort_by(|a, b| {
        a.measured_bitrate
            .total_cmp(&b.measured_bitrate)
            .then(b.quality(metric).total_cmp(&a.quality(metric)))
            .then(b.resolution.cmp(&a.resolution))
            .then(a.target_bitrate.total_cmp(&b.target_bitrate))
    });

    let mut pareto: Vec<&RQPoint> = Vec::new();
    for p in sorted {
        if pareto.last().is_none_or(|last| p.quality(metric) > last.quality(metric)) {
            pareto.push(p);
        }
    }

    let xy = |p: &RQPoint| (p.measured_bitrate, p.quality(metric));
    let mut hull: Vec<&RQPoint> = Vec::with_capacity(pareto.len());
    for p in pareto {
        while hull.len() >= 2 && cross(xy(hull[hull.len() - 2]), xy(hull[hull.len() - 1]), xy(p)) >= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    Ok(ConvexHull { points: hull.into_iter().cloned().collect(), metric })
}

/// One rung of a ladder: the resolution used at a target bitrate.
#[derive(Clone, Debug, PartialEq)]
pub struct LadderEntry {
    pub target: f64,
    pub zone_id: u8,
    pub resolution: Resolution,
    pub measured_bitrate: f64,
    pub quality: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimalLadder {
    pub entries: Vec<LadderEntry>,
}

impl OptimalLadder {
    /// (measured bitrate, quality) pairs sorted by bitrate.
    pub fn curve(&self) -> Vec<(f64, f64)> {
        let mut c: Vec<(f64, f64)> = self.entries.iter().map(|e| (e.measured_bitrate, e.quality)).collect();
        c.sort_by(|a, b| a.0.total_cmp(&b.0));
        c
    }
}

fn measurement(points: &[RQPoint], resolution: Resolution, target: f64) -> Result<&RQPoint, LadderError> {
    find_point(points, resolution, target).ok_or(LadderError::MissingMeasurement { target, resolution })
}

/// Ladder that uses `choose(zone, target)` at every target.
pub fn ladder_from_choices<F>(
    points: &[RQPoint],
    targets: &[f64],
    zones: &ZoneTable,
    metric: Metric,
    mut choose: F,
) -> Result<OptimalLadder, LadderError>
where
    F: FnMut(&Zone, f64) -> Result<Resolution, LadderError>,
{
    let mut entries = Vec::with_capacity(targets.len());
    for &target in targets {
        let zone = zones.zone_for_bitrate(target)?.zone;
        let resolution = choose(zone, target)?;
        let p = measurement(points, resolution, target)?;
        entries.push(LadderEntry {
            target,
            zone_id: zone.id,
            resolution,
            measured_bitrate: p.measured_bitrate,
            quality: p.quality(metric),
        });
    }
    Ok(OptimalLadder { entries })
}

/// Per target, the better of the zone's two candidates (ties go to the
/// higher resolution).
pub fn optimal_ladder(
    points: &[RQPoint],
    targets: &[f64],
    zones: &ZoneTable,
    metric: Metric,
) -> Result<OptimalLadder, LadderError> {
    ladder_from_choices(points, targets, zones, metric, |zone, target| {
        let lo = measurement(points, zone.candidate_low, target)?.quality(metric);
        let hi = measurement(points, zone.candidate_high, target)?.quality(metric);
        Ok(if hi >= lo { zone.candidate_high } else { zone.candidate_low })
    })
}

/// The content-agnostic ladder: every target uses its zone's static resolution.
pub fn static_ladder(
    points: &[RQPoint],
    targets: &[f64],
    zones: &ZoneTable,
    metric: Metric,
) -> Result<OptimalLadder, LadderError> {
    ladder_from_choices(points, targets, zones, metric, |zone, _| Ok(zone.static_resolution))
}

/// Binary label for `zone` at `target`: the hull point closest in measured
/// bitrate (best quality among ties) decides; resolutions outside the
/// candidate pair clamp to the nearer candidate.
pub fn ground_truth_label(hull: &ConvexHull, target: f64, zone: &Zone) -> Result<u8, LadderError> {
    let metric = hull.metric;
    let best = hull
        .points
        .iter()
        .min_by(|a, b| {
            (a.measured_bitrate - target)
                .abs()
                .total_cmp(&(b.measured_bitrate - target).abs())
                .then(b.quality(metric).total_cmp(&a.quality(metric)))
        })
        .ok_or(LadderError::EmptyHull)?;
    Ok(u8::from(best.resolution >= zone.candidate_high))
}

/// Drops points until the curve is strictly increasing with strictly
/// decreasing slopes. A monotonicity violation drops the lower-quality point
/// of the pair; a concavity violation drops the middle point.
pub fn enforce_convexity(curve: &[(f64, f64)]) -> Result<Vec<(f64, f64)>, LadderError> {
    let mut pts = curve.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    'outer: loop {
        for i in 0..pts.len().saturating_sub(1) {
            let (a, b) = (pts[i], pts[i + 1]);
            if b.0 <= a.0 || b.1 <= a.1 {
                // equal quality keeps the cheaper point
                pts.remove(if b.1 <= a.1 { i + 1 } else { i });
                continue 'outer;
            }
        }
        for i in 0..pts.len().saturating_sub(2) {
            if cross(pts[i], pts[i + 1], pts[i + 2]) >= 0.0 {
                pts.remove(i + 1);
                continue 'outer;
            }
        }
        break;
    }
    if pts.len() < 2 {
        return Err(LadderError::TooFewPoints);
    }
    Ok(pts)
}

/// True when rates and qualities strictly increase and slopes strictly
/// decrease.
pub fn is_convex_chain(pts: &[(f64, f64)]) -> bool {
    pts.windows(2).all(|w| w[1].0 > w[0].0 && w[1].1 > w[0].1)
        && pts.windows(3).all(|w| cross(w[0], w[1], w[2]) < 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::Quality;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pt(resolution: Resolution, rate: f64, vmaf: f64) -> RQPoint {
        RQPoint {
            clip_id: "c".into(),
            scene_id: "s".into(),
            resolution,
            target_bitrate: rate,
            measured_bitrate: rate,
            quality: Quality { vmaf, psnr_y: 30.0, ssim_yb: 0.9 },
        }
    }

    /// Piecewise-linear envelope through `chain`, flat after its last point;
    /// `None` left of the first point.
    fn envelope(chain: &[(f64, f64)], r: f64) -> Option<f64> {
        if r < chain[0].0 {
            return None;
        }
        for w in chain.windows(2) {
            if r <= w[1].0 {
                return Some(w[0].1 + (w[1].1 - w[0].1) * (r - w[0].0) / (w[1].0 - w[0].0));
            }
        }
        Some(chain.last().unwrap().1)
    }

    /// Every subset that is an increasing, strictly concave chain lying on or
    /// above all points; all such chains must coincide.
    fn oracle(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
        let n = points.len();
        let mut found: Option<Vec<(f64, f64)>> = None;
        for mask in 1u32..(1 << n) {
            let mut chain: Vec<(f64, f64)> = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| points[i]).collect();
            chain.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
            if !is_convex_chain(&chain) {
                continue;
            }
            let covers = points
                .iter()
                .all(|p| envelope(&chain, p.0).is_some_and(|e| p.1 <= e + 1e-12));
            if !covers {
                continue;
            }
            match &found {
                None => found = Some(chain),
                Some(f) => assert_eq!(f, &chain, "two distinct maximal chains for {points:?}"),
            }
        }
        found.expect("some chain covers every point")
    }

    fn random_set(rng: &mut ChaCha8Rng) -> Vec<RQPoint> {
        let n = rng.random_range(1..=10);
        let grid = rng.random_bool(0.5);
        (0..n)
            .map(|_| {
                let res = Resolution::STREAMED[rng.random_range(0..4)];
                if grid {
                    pt(res, f64::from(rng.random_range(1..=6)), f64::from(rng.random_range(1..=6)) * 10.0)
                } else {
                    pt(res, rng.random_range(0.5..20.0), rng.random_range(10.0..100.0))
                }
            })
            .collect()
    }

    #[test]
    fn hull_matches_brute_force_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..200 {
            let pts = random_set(&mut rng);
            let coords: Vec<(f64, f64)> = pts.iter().map(|p| (p.measured_bitrate, p.quality.vmaf)).collect();
            let hull = upper_convex_hull(&pts, Metric::Vmaf).unwrap();
            assert_eq!(hull.coords(), oracle(&coords), "{coords:?}");
        }
    }

    #[test]
    fn hull_ignores_input_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let mut pts = random_set(&mut rng);
            let reference = upper_convex_hull(&pts, Metric::Vmaf).unwrap();
            for _ in 0..5 {
                pts.shuffle(&mut rng);
                assert_eq!(upper_convex_hull(&pts, Metric::Vmaf).unwrap(), reference);
            }
        }
    }

    #[test]
    fn hull_examples() {
        let r = Resolution::P720;
        let pts = [pt(r, 1.0, 50.0), pt(r, 2.0, 60.0), pt(r, 3.0, 62.0), pt(r, 2.0, 55.0)];
        let hull = upper_convex_hull(&pts, Metric::Vmaf).unwrap();
        assert_eq!(hull.coords(), vec![(1.0, 50.0), (2.0, 60.0), (3.0, 62.0)]);

        let one = upper_convex_hull(&pts[..1], Metric::Vmaf).unwrap();
        assert_eq!(one.coords(), vec![(1.0, 50.0)]);

        let same_rate = [pt(r, 2.0, 60.0), pt(r, 2.0, 55.0)];
        assert_eq!(upper_convex_hull(&same_rate, Metric::Vmaf).unwrap().coords(), vec![(2.0, 60.0)]);
        assert_eq!(upper_convex_hull(&[], Metric::Vmaf), Err(LadderError::EmptyInput));
    }

    fn zone2_scene(q720: f64, q1080: f64) -> Vec<RQPoint> {
        vec![pt(Resolution::P720, 7.5, q720), pt(Resolution::P1080, 7.5, q1080)]
    }

    #[test]
    fn optimal_ladder_picks_better_candidate() {
        let zones = ZoneTable::default();
        let l = optimal_ladder(&zone2_scene(78.0, 75.0), &[7.5], &zones, Metric::Vmaf).unwrap();
        assert_eq!(l.entries[0].resolution, Resolution::P720);
        assert_eq!(l.entries[0].quality, 78.0);
        let tie = optimal_ladder(&zone2_scene(78.0, 78.0), &[7.5], &zones, Metric::Vmaf).unwrap();
        assert_eq!(tie.entries[0].resolution, Resolution::P1080);
        let missing = optimal_ladder(&zone2_scene(78.0, 75.0)[..1], &[7.5], &zones, Metric::Vmaf);
        assert_eq!(
            missing,
            Err(LadderError::MissingMeasurement { target: 7.5, resolution: Resolution::P1080 })
        );
    }

    #[test]
    fn optimal_never_below_static() {
        let zones = ZoneTable::default();
        let targets = [1.5, 3.5, 7.5, 15.0];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let pts: Vec<RQPoint> = Resolution::STREAMED
                .iter()
                .flat_map(|r| targets.iter().map(move |t| (*r, *t)))
                .map(|(r, t)| pt(r, t, rng.random_range(20.0..100.0)))
                .collect();
            let opt = optimal_ladder(&pts, &targets, &zones, Metric::Vmaf).unwrap();
            let stat = static_ladder(&pts, &targets, &zones, Metric::Vmaf).unwrap();
            for (o, s) in opt.entries.iter().zip(&stat.entries) {
                assert!(o.quality >= s.quality);
            }
        }
    }

    #[test]
    fn labels_follow_nearest_hull_point() {
        let zones = ZoneTable::default();
        let z2 = zones.zone(2).unwrap();
        let hull = upper_convex_hull(
            &[pt(Resolution::P720, 5.0, 70.0), pt(Resolution::P1080, 7.0, 80.0), pt(Resolution::P1080, 12.0, 88.0)],
            Metric::Vmaf,
        )
        .unwrap();
        assert_eq!(ground_truth_label(&hull, 7.5, z2), Ok(1));

        // equidistant points: the better one decides
        let tie = ConvexHull {
            points: vec![pt(Resolution::P720, 7.0, 78.0), pt(Resolution::P1080, 8.0, 80.0)],
            metric: Metric::Vmaf,
        };
        assert_eq!(ground_truth_label(&tie, 7.5, z2), Ok(1));
        let tie_low = ConvexHull {
            points: vec![pt(Resolution::P720, 7.0, 80.0), pt(Resolution::P1080, 8.0, 78.0)],
            metric: Metric::Vmaf,
        };
        assert_eq!(ground_truth_label(&tie_low, 7.5, z2), Ok(0));

        let low = upper_convex_hull(&[pt(Resolution::P360, 7.5, 60.0)], Metric::Vmaf).unwrap();
        assert_eq!(ground_truth_label(&low, 7.5, z2), Ok(0));
        let high = upper_convex_hull(&[pt(Resolution::P1080, 1.5, 60.0)], Metric::Vmaf).unwrap();
        assert_eq!(ground_truth_label(&high, 1.5, zones.zone(0).unwrap()), Ok(1));
        let empty = ConvexHull { points: vec![], metric: Metric::Vmaf };
        assert_eq!(ground_truth_label(&empty, 1.0, z2), Err(LadderError::EmptyHull));
    }

    #[test]
    fn convexity_filter_examples() {
        assert_eq!(
            enforce_convexity(&[(1.0, 50.0), (2.0, 49.0), (3.0, 62.0)]).unwrap(),
            vec![(1.0, 50.0), (3.0, 62.0)]
        );
        let convex = vec![(1.0, 50.0), (2.0, 60.0), (3.0, 62.0)];
        assert_eq!(enforce_convexity(&convex).unwrap(), convex);
        assert_eq!(enforce_convexity(&[(1.0, 50.0), (2.0, 60.0)]).unwrap().len(), 2);
        assert_eq!(enforce_convexity(&[(1.0, 50.0), (2.0, 40.0)]), Err(LadderError::TooFewPoints));
        assert_eq!(enforce_convexity(&[(1.0, 50.0)]), Err(LadderError::TooFewPoints));
    }

    #[test]
    fn convexity_filter_output_is_valid_subset() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..500 {
            let n = rng.random_range(2..=8);
            let mut curve: Vec<(f64, f64)> =
                (0..n).map(|_| (rng.random_range(1.0..20.0), rng.random_range(20.0..100.0))).collect();
            curve.sort_by(|a, b| a.0.total_cmp(&b.0));
            if let Ok(out) = enforce_convexity(&curve) {
                assert!(is_convex_chain(&out), "{out:?}");
                assert!(out.iter().all(|p| curve.contains(p)));
            }
        }
    }
}
