use satqkd::channel::{derive_channel, DerivedChannel, LinkGeometry, ReceiverParams, SourceParams};
use satqkd::oracle::{validation_report, CheckStatus, ValidationConfig};

fn link(mu_t: f64, phi: f64, sigma: f64) -> DerivedChannel {
    derive_channel(
        &SourceParams { wavelength: 1.55e-6, waist: 0.08, mu_t, slot: 1e-10 },
        &ReceiverParams { aperture_radius: 0.15, eta_det: 0.6, fov_angle: 1e-3, fov_jitter_sigma: 1e-4, background_flux: phi },
        &LinkGeometry { distance: 500e3, track_jitter_sigma: sigma },
    )
    .unwrap()
}

#[test]
fn default_link_report() {
    let ch = link(0.05, 1e7, 3e-6);
    let r = validation_report(&ch, &ch, &ValidationConfig::default()).unwrap();
    println!("{r}");
    assert!(r.all_consistent(), "{r}");
    let status = |id: &str| r.get(id).unwrap().status;
    assert_eq!(status("qber_quadrature_vs_monte_carlo"), CheckStatus::Pass);
    assert_eq!(status("key_rate_closed_form_vs_monte_carlo"), CheckStatus::Pass);
    assert_eq!(status("multi_pair_floor"), CheckStatus::ExpectedDivergence);
    assert_eq!(status("background_limit"), CheckStatus::ExpectedDivergence);
    assert_eq!(status("slot_simulation_vs_enumeration"), CheckStatus::Pass);
    assert_eq!(status("aperture_coupling_alice"), CheckStatus::Pass);
    assert_eq!(status("fov_modes_alice"), CheckStatus::Pass);
    assert_eq!(status("pointing_law_alice"), CheckStatus::ExpectedDivergence);
    let json: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
    assert!(json["checks"].as_array().unwrap().len() >= 10);
}

#[test]
fn silent_dark_link_reports_undefined_qber() {
    let ch = link(0.0, 0.0, 3e-6);
    let r = validation_report(&ch, &ch, &ValidationConfig::default()).unwrap();
    let c = r.get("qber_quadrature_vs_monte_carlo").unwrap();
    assert_eq!(c.status, CheckStatus::Undefined);
    assert!(c.note.as_deref().unwrap().contains("undefined"));
}
