//! Symmetric quadrature rules on the reference tetrahedron and triangle.
//!
//! Points are barycentric; weights sum to the reference measure (1/6 for the
//! tetrahedron, 1/2 for the triangle) and are all positive. Every rule's
//! exactness degree is recorded and verified by the monomial tests below.

/// Quadrature rule on the reference tetrahedron, barycentric points.
#[derive(Debug, Clone)]
pub struct TetRule {
    pub points: Vec<[f64; 4]>,
    /// Weights summing to 1/6.
    pub weights: Vec<f64>,
    pub degree: u32,
}

/// Quadrature rule on the reference triangle, barycentric points.
#[derive(Debug, Clone)]
pub struct TriRule {
    pub points: Vec<[f64; 3]>,
    /// Weights summing to 1/2.
    pub weights: Vec<f64>,
    pub degree: u32,
}

/// Near/far rule pairs. `Standard` uses degree-5 near rules and degree-2 far
/// rules. `Paper` matches the historical 25/5 point counts for tetrahedra
/// (degree 6 and 2 respectively) with the same triangle rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadraturePreset {
    Standard,
    Paper,
}

impl QuadraturePreset {
    pub fn tet_near(&self) -> TetRule {
        match self {
            QuadraturePreset::Standard => tet_degree5_15(),
            QuadraturePreset::Paper => tet_degree6_25(),
        }
    }

    pub fn tet_far(&self) -> TetRule {
        match self {
            QuadraturePreset::Standard => tet_degree2_4(),
            QuadraturePreset::Paper => tet_degree2_5(),
        }
    }

    pub fn tri_near(&self) -> TriRule {
        tri_degree5_7()
    }

    pub fn tri_far(&self) -> TriRule {
        tri_degree2_3()
    }
}

fn s31(a: f64) -> [[f64; 4]; 4] {
    let b = 1.0 - 3.0 * a;
    [[b, a, a, a], [a, b, a, a], [a, a, b, a], [a, a, a, b]]
}

fn s22(a: f64) -> [[f64; 4]; 6] {
    let b = 0.5 - a;
    [
        [a, a, b, b],
        [a, b, a, b],
        [a, b, b, a],
        [b, a, a, b],
        [b, a, b, a],
        [b, b, a, a],
    ]
}

fn s211(d: f64, e: f64) -> [[f64; 4]; 12] {
    let f = 1.0 - 2.0 * d - e;
    [
        [d, d, e, f],
        [d, d, f, e],
        [d, e, d, f],
        [d, e, f, d],
        [d, f, d, e],
        [d, f, e, d],
        [e, d, d, f],
        [e, d, f, d],
        [e, f, d, d],
        [f, d, d, e],
        [f, d, e, d],
        [f, e, d, d],
    ]
}

fn push_tet(points: &mut Vec<[f64; 4]>, weights: &mut Vec<f64>, pts: &[[f64; 4]], w: f64) {
    for p in pts {
        points.push(*p);
        weights.push(w / 6.0);
    }
}

/// 4-point degree-2 rule, a = (5 − √5)/20.
pub fn tet_degree2_4() -> TetRule {
    let a = (5.0 - 5.0f64.sqrt()) / 20.0;
    let mut points = Vec::new();
    let mut weights = Vec::new();
    push_tet(&mut points, &mut weights, &s31(a), 0.25);
    TetRule {
        points,
        weights,
        degree: 2,
    }
}

/// 5-point degree-2 rule (centroid + S31(1/8)); all weights positive, unlike
/// the classical 5-point degree-3 rule.
pub fn tet_degree2_5() -> TetRule {
    let mut points = vec![[0.25; 4]];
    let mut weights = vec![0.2 / 6.0];
    push_tet(&mut points, &mut weights, &s31(0.125), 0.2);
    TetRule {
        points,
        weights,
        degree: 2,
    }
}

/// 15-point degree-5 rule (centroid + two S31 orbits + one S22 orbit).
pub fn tet_degree5_15() -> TetRule {
    let mut points = vec![[0.25; 4]];
    let mut weights = vec![0.094_423_853_055_947_36 / 6.0];
    push_tet(
        &mut points,
        &mut weights,
        &s31(0.092_179_971_395_380_87),
        0.072_356_477_338_998_15,
    );
    push_tet(
        &mut points,
        &mut weights,
        &s31(0.317_293_468_471_034_07),
        0.078_776_358_560_939_79,
    );
    push_tet(
        &mut points,
        &mut weights,
        &s22(0.053_763_309_154_038_03),
        0.050_174_133_890_716_81,
    );
    TetRule {
        points,
        weights,
        degree: 5,
    }
}

/// 25-point degree-6 rule (centroid + three S31 orbits + one S211 orbit),
/// solved from the symmetric moment equations; all points interior, all
/// weights positive.
pub fn tet_degree6_25() -> TetRule {
    let mut points = vec![[0.25; 4]];
    let mut weights = vec![0.107_806_149_838_372_35 / 6.0];
    push_tet(
        &mut points,
        &mut weights,
        &s31(0.320_358_315_666_688_3),
        0.061_263_096_268_431_606,
    );
    push_tet(
        &mut points,
        &mut weights,
        &s31(0.039_742_639_583_551_446),
        0.009_799_801_664_527_694,
    );
    push_tet(
        &mut points,
        &mut weights,
        &s31(0.171_934_080_543_609_84),
        0.007_342_707_464_592_731,
    );
    push_tet(
        &mut points,
        &mut weights,
        &s211(0.063_661_001_875_017_08, 0.269_672_331_458_316_7),
        0.048_214_285_714_284_97,
    );
    TetRule {
        points,
        weights,
        degree: 6,
    }
}

/// 3-point degree-2 triangle rule at (2/3, 1/6, 1/6).
pub fn tri_degree2_3() -> TriRule {
    let (a, b) = (2.0 / 3.0, 1.0 / 6.0);
    TriRule {
        points: vec![[a, b, b], [b, a, b], [b, b, a]],
        weights: vec![1.0 / 6.0; 3],
        degree: 2,
    }
}

/// 7-point degree-5 triangle rule (centroid + two 3-point orbits).
pub fn tri_degree5_7() -> TriRule {
    let s15 = 15.0f64.sqrt();
    let a1 = (6.0 - s15) / 21.0;
    let a2 = (6.0 + s15) / 21.0;
    let w1 = (155.0 - s15) / 1200.0;
    let w2 = (155.0 + s15) / 1200.0;
    let mut points = vec![[1.0 / 3.0; 3]];
    let mut weights = vec![9.0 / 40.0 / 2.0];
    for a_w in [(a1, w1), (a2, w2)] {
        let (a, w) = a_w;
        let b = 1.0 - 2.0 * a;
        for s in 0..3 {
            let mut p = [a; 3];
            p[s] = b;
            points.push(p);
            weights.push(w / 2.0);
        }
    }
    TriRule {
        points,
        weights,
        degree: 5,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn factorial(n: u32) -> f64 {
        (1..=n).map(|k| k as f64).product::<f64>().max(1.0)
    }

    /// ∫ λ₀^a λ₁^b λ₂^c λ₃^d over the reference tetrahedron (volume 1/6).
    fn tet_moment(alpha: [u32; 4]) -> f64 {
        let s: u32 = alpha.iter().sum();
        alpha.iter().map(|&a| factorial(a)).product::<f64>() / factorial(s + 3)
    }

    /// ∫ λ₀^a λ₁^b λ₂^c over the reference triangle (area 1/2).
    fn tri_moment(alpha: [u32; 3]) -> f64 {
        let s: u32 = alpha.iter().sum();
        alpha.iter().map(|&a| factorial(a)).product::<f64>() / factorial(s + 2)
    }

    fn check_tet(rule: &TetRule) {
        assert_relative_eq!(rule.weights.iter().sum::<f64>(), 1.0 / 6.0, max_relative = 1e-13);
        assert!(rule.weights.iter().all(|&w| w > 0.0));
        for p in &rule.points {
            assert!(p.iter().all(|&l| l > 0.0 && l < 1.0));
            assert_relative_eq!(p.iter().sum::<f64>(), 1.0, max_relative = 1e-13);
        }
        let deg = rule.degree;
        for a in 0..=deg {
            for b in 0..=deg - a {
                for c in 0..=deg - a - b {
                    for d in 0..=deg - a - b - c {
                        let alpha = [a, b, c, d];
                        let q: f64 = rule
                            .points
                            .iter()
                            .zip(&rule.weights)
                            .map(|(p, w)| {
                                w * p[0].powi(a as i32)
                                    * p[1].powi(b as i32)
                                    * p[2].powi(c as i32)
                                    * p[3].powi(d as i32)
                            })
                            .sum();
                        let exact = tet_moment(alpha);
                        assert!(
                            (q - exact).abs() < 1e-14,
                            "degree {deg} rule fails monomial {alpha:?}: {q} vs {exact}"
                        );
                    }
                }
            }
        }
    }

    fn check_tri(rule: &TriRule) {
        assert_relative_eq!(rule.weights.iter().sum::<f64>(), 0.5, max_relative = 1e-13);
        assert!(rule.weights.iter().all(|&w| w > 0.0));
        let deg = rule.degree;
        for a in 0..=deg {
            for b in 0..=deg - a {
                for c in 0..=deg - a - b {
                    let alpha = [a, b, c];
                    let q: f64 = rule
                        .points
                        .iter()
                        .zip(&rule.weights)
                        .map(|(p, w)| {
                            w * p[0].powi(a as i32) * p[1].powi(b as i32) * p[2].powi(c as i32)
                        })
                        .sum();
                    let exact = tri_moment(alpha);
                    assert!(
                        (q - exact).abs() < 1e-14,
                        "tri degree {deg} rule fails {alpha:?}: {q} vs {exact}"
                    );
                }
            }
        }
    }

    #[test]
    fn tet_rules_are_exact_to_stated_degree() {
        check_tet(&tet_degree2_4());
        check_tet(&tet_degree2_5());
        check_tet(&tet_degree5_15());
        check_tet(&tet_degree6_25());
    }

    #[test]
    fn tri_rules_are_exact_to_stated_degree() {
        check_tri(&tri_degree2_3());
        check_tri(&tri_degree5_7());
    }

    #[test]
    fn preset_point_counts() {
        assert_eq!(QuadraturePreset::Standard.tet_near().points.len(), 15);
        assert_eq!(QuadraturePreset::Standard.tet_far().points.len(), 4);
        assert_eq!(QuadraturePreset::Paper.tet_near().points.len(), 25);
        assert_eq!(QuadraturePreset::Paper.tet_far().points.len(), 5);
        assert_eq!(QuadraturePreset::Standard.tri_near().points.len(), 7);
        assert_eq!(QuadraturePreset::Standard.tri_far().points.len(), 3);
    }
}
