use gyroqfi::verify::cmd_verify;

#[test]
fn every_check_passes() {
    let report = cmd_verify();
    print!("{report}");
    assert!(report.all_passed(), "{report}");
}
