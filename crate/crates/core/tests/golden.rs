use shellcond::revolve::{adc_axial_analytic, revolve_mesh, RevolutionProfile};
use shellcond::adc::adc_matrix;
use shellcond::mesh::{build_geometry, GeometryOptions};

#[derive(serde::Deserialize)]
#[serde(rename_all = "camelCase")]
struct Golden {
    profile: String,
    tolerance: f64,
    adc_axial: f64,
}

fn golden() -> Golden {
    let text = include_str!("golden/revolve_axial.json");
    serde_json::from_str(text).unwrap()
}

#[test]
fn closed_form_axial_adc_is_frozen() {
    let g = golden();
    let p = RevolutionProfile::parse(&g.profile).unwrap();
    let v = adc_axial_analytic(&p, g.tolerance).unwrap();
    assert!((v - g.adc_axial).abs() <= 1e-12, "{v} vs {}", g.adc_axial);
}

#[test]
fn discrete_tube_approaches_frozen_constant() {
    let g = golden();
    let p = RevolutionProfile::parse(&g.profile).unwrap();
    let errs: Vec<f64> = [32, 64]
        .iter()
        .map(|&n| {
            let m = revolve_mesh(&p, n, n).unwrap();
            let c = build_geometry(&m, GeometryOptions::default()).unwrap();
            (adc_matrix(&m, &c, 1.0).unwrap().ka[(0, 0)] - g.adc_axial).abs()
        })
        .collect();
    assert!(errs[1] < errs[0] / 3.0, "{errs:?}");
    assert!(errs[1] < 2e-3, "{errs:?}");
}
