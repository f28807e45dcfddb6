//! Regenerates the files under `data/` from the built-in defaults.
//! Usage: cargo run -p avp-core --example write_data -- <data dir>

use std::path::PathBuf;

use avp_core::campaign::{self, CampaignConfig};
use avp_core::odd::OddSpec;
use avp_core::scenario::{default_crossing_ranges, ConcreteScenario, FunctionalScenario};
use avp_core::sim::{run_episode, EpisodeConfig};
use avp_core::stl::library_text;

fn write(path: PathBuf, text: String) {
    std::fs::create_dir_all(path.parent().unwrap()).unwrap();
    std::fs::write(&path, text).unwrap();
    println!("wrote {}", path.display());
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).unwrap() + "\n"
}

fn main() {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "data".into()));
    let ecfg = EpisodeConfig::default();

    write(dir.join("odd.json"), json(&OddSpec::default()));
    write(
        dir.join("requirements.stl"),
        library_text(&ecfg.params, &ecfg.odd),
    );
    write(dir.join("rules.json"), json(&ecfg.rules));

    write(dir.join("scenarios/nominal.json"), json(&ConcreteScenario::nominal()));
    write(dir.join("scenarios/crossing.json"), json(&ConcreteScenario::occluded_crossing()));
    write(dir.join("scenarios/animal.json"), json(&ConcreteScenario::animal_crossing()));
    write(dir.join("functional/crossing.json"), json(&FunctionalScenario::occluded_crossing()));
    write(dir.join("functional/animal.json"), json(&FunctionalScenario::animal()));
    write(dir.join("space/crossing.json"), json(&default_crossing_ranges()));

    let base = CampaignConfig {
        odd: Some("../odd.json".into()),
        requirements: Some("../requirements.stl".into()),
        rule_base: Some("../rules.json".into()),
        functional_scenario: Some("../functional/crossing.json".into()),
        ..CampaignConfig::default()
    };
    let configs = [
        ("default", base.clone()),
        (
            "aeb_off",
            CampaignConfig {
                aeb_enabled: false,
                ..base.clone()
            },
        ),
        (
            "perfect",
            CampaignConfig {
                perfect_perception: true,
                seeds: (0..20).collect(),
                ..base.clone()
            },
        ),
        (
            "no_shield",
            CampaignConfig {
                shield_enabled: false,
                functional_scenario: Some("../functional/animal.json".into()),
                ..base.clone()
            },
        ),
    ];
    for (name, c) in configs {
        // only the overridden fields are written; everything else keeps its default
        let mut v = serde_json::to_value(&c).unwrap();
        let d = serde_json::to_value(CampaignConfig::default()).unwrap();
        let obj = v.as_object_mut().unwrap();
        obj.retain(|k, val| d.get(k) != Some(val));
        write(dir.join(format!("configs/{name}.json")), json(&v));
    }

    let cc = CampaignConfig::load(&dir.join("configs/default.json")).unwrap();
    let ecfg = cc.episode_config().unwrap();
    let reqs = cc.requirement_set(&ecfg).unwrap();
    let tr = run_episode(&ConcreteScenario::nominal(), &ecfg).unwrap();
    tr.write_files(&dir.join("traces"), "nominal").unwrap();
    let reports = campaign::evaluate_all(&reqs, &tr.monitor_table()).unwrap();
    for r in &reports {
        println!("{} {:?} {}", r.name, r.verdict, r.robustness);
    }
    assert!(!campaign::any_violated(&reports), "nominal trace must satisfy the requirements");
}
