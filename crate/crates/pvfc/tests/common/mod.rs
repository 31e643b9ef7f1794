#![allow(dead_code)]

use std::path::{Path, PathBuf};

use pvfc::RunConfig;

/// Four-day scene with three sites and a 6x6 satellite grid; three days of
/// training, one of testing.
pub const SMALL: &str = "\
seed=7
output_dir=out
train_span=2016-06-01T00:00:00Z/2016-06-04T00:00:00Z
test_span=2016-06-04T00:00:00Z/2016-06-05T00:00:00Z
scene.start=2016-06-01T00:00:00Z
scene.days=4
scene.n_sites=3
scene.grid_n_lat=6
scene.grid_n_lon=6
scene.nwp_n_lat=5
scene.nwp_n_lon=5
model.AR.variant=AR
model.ARST.variant=ARST
model.ARST.neighbors=2
model.ARX.variant=ARX
model.ARX.pixels=10
model.ARX.nwp=ECMWF
eval.reference=AR
";

pub fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("run.cfg");
    std::fs::write(&path, text).unwrap();
    path
}

pub fn load(dir: &Path, text: &str) -> RunConfig {
    RunConfig::load(&write_config(dir, text)).unwrap()
}
