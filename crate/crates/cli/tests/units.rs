use dfmheat_cli::units::{parse_quantity, AreaRate, Dimension, Temperature, UnitError};

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * b.abs().max(1.0)
}

#[test]
fn conversions() {
    let cases = [
        ("0.1 dm^2/s", Dimension::AreaRate, 1e-3),
        ("1 dm²/s", Dimension::AreaRate, 1e-2),
        ("12.5 cm", Dimension::Length, 0.125),
        ("2 km", Dimension::Length, 2000.0),
        ("30 d", Dimension::Time, 2_592_000.0),
        ("1 yr", Dimension::Time, dfmheat::SECONDS_PER_YEAR),
        ("2.17 MJ/(m³·K)", Dimension::HeatCapacity, 2.17e6),
        ("4180 kJ/m^3/K", Dimension::HeatCapacity, 4.18e6),
        ("2.1 W/(m K)", Dimension::Conductivity, 2.1),
        ("1 cP", Dimension::Viscosity, 1e-3),
        ("1 mPa s", Dimension::Viscosity, 1e-3),
        ("10 D", Dimension::Permeability, 9.869_233e-12),
        ("1 mD", Dimension::Permeability, 9.869_233e-16),
        ("2 bar", Dimension::Pressure, 2e5),
        ("180 deg", Dimension::Angle, std::f64::consts::PI),
        ("373.15 K", Dimension::Temperature, 100.0),
        ("20 °C", Dimension::Temperature, 20.0),
    ];
    for (text, dim, want) in cases {
        let got = parse_quantity(text, dim).unwrap();
        assert!(close(got, want), "{text}: {got} vs {want}");
    }
}

#[test]
fn rejects_bad_input() {
    assert!(matches!(parse_quantity("10", Dimension::Length), Err(UnitError::Format(_))));
    assert!(matches!(parse_quantity("ten m", Dimension::Length), Err(UnitError::Number(_))));
    assert!(matches!(parse_quantity("inf m", Dimension::Length), Err(UnitError::Number(_))));
    let err = parse_quantity("3 s", Dimension::Length).unwrap_err();
    assert!(matches!(&err, UnitError::Unit { unit, si: "m", .. } if unit == "s"));
    assert!(err.to_string().contains("SI unit is m"));
}

#[test]
fn display_is_si() {
    assert_eq!(AreaRate(1e-3).to_string(), "0.001 m^2/s");
    assert_eq!(Temperature(20.0).to_string(), "20 C");
}
