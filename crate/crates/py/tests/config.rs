use smd_core::{NoiseModel, Schedule};
use smd_py::tagged;

fn table(text: &str) -> toml::Table {
    text.parse().unwrap()
}

#[test]
fn dicts_become_tagged_configs() {
    let s: Schedule = tagged(table("kind = \"constant\"\neta = 0.25")).unwrap();
    assert_eq!(s, Schedule::Constant { eta: 0.25 });
    let n: NoiseModel = tagged(table("kind = \"minibatch\"\nbatch = 8")).unwrap();
    assert_eq!(n, NoiseModel::Minibatch { batch: 8 });
    assert!(tagged::<Schedule>(table("kind = \"constant\"\nstep = 1.0")).is_err());
}
