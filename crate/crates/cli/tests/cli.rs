use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"
schema_version = 1
preset = "MAC-0-99"
seed = 4

[scenario]
world_extent = 300.0
grid_resolution = 61

[env]
n_drones = 2
episode_length = 25

[net]
channels = [2, 2, 2]
hidden_units = 8
num_layers = 1

[ppo]
buffer_size = 50
batch_size = 25
num_epochs = 1

[train]
max_updates = 3
summary_freq = 100

[eval]
runs = 2
steps = 30
flight_path_steps = 5
"#;

fn reforest(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_reforest"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn render_twice_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        let o = reforest(
            &["render", "--seed", "3", "--difficulty", "2", "--out", out],
            dir.path(),
        );
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for f in [
        "height_s3_d2.pgm",
        "reforestation_s3_d2.pgm",
        "trees_s3_d2.csv",
    ] {
        let a = std::fs::read(dir.path().join("a").join(f)).unwrap();
        assert_eq!(
            a,
            std::fs::read(dir.path().join("b").join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("bad.toml"),
        "schema_version = 1\npreset = \"MA-0\"\n[ppo]\ngamma = \"high\"\n",
    )
    .unwrap();
    let o = reforest(
        &["train", "--config", "bad.toml", "--out", "run"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 4"), "{}", stderr(&o));
    let o = reforest(&["train", "--preset", "MA-7", "--out", "run"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn train_then_eval_then_flightpath() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("tiny.toml"), TINY).unwrap();
    let o = reforest(
        &[
            "train",
            "--config",
            "tiny.toml",
            "--preset",
            "MAC-0-99",
            "--out",
            "run",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let metrics = std::fs::read_to_string(dir.path().join("run/metrics.jsonl")).unwrap();
    assert!(metrics
        .lines()
        .all(|l| l.contains("\"preset\":\"MAC-0-99\"") && l.contains("config_hash")));
    let ckpt = "run/checkpoints/ckpt-000003.bin";
    let eval = |out: &str| {
        let o = reforest(
            &["eval", "--ckpt", ckpt, "--seed", "111", "--out", out],
            dir.path(),
        );
        assert!(o.status.success(), "{}", stderr(&o));
        String::from_utf8(o.stdout).unwrap()
    };
    let a = eval("e1");
    assert_eq!(a, eval("e2"));
    assert_eq!(a.lines().count(), 1 + 2 + 2);
    let o = reforest(
        &[
            "flightpath",
            "--traj",
            "e1/flightpath_run0.csv",
            "--config",
            "tiny.toml",
            "--seed",
            "111",
            "--out",
            "fp",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let alt = std::fs::read_to_string(dir.path().join("fp/altitude.csv")).unwrap();
    assert_eq!(alt.lines().count(), 1 + 5 * 2);
    let pgm = std::fs::read(dir.path().join("fp/flightpath.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n61 61\n255\n"));
}

#[test]
fn malformed_trajectory_names_the_row() {
    let dir = tempfile::tempdir().unwrap();
    let header = "step,agent,x,y,z,battery,has_seed,drop_reward,return_reward,battery_penalty,event_penalty,dropped_seed,recharged,out_of_energy,saved_memory";
    std::fs::write(
        dir.path().join("t.csv"),
        format!("{header}\n1,0,1,2,3,1,1,0,0,0,0,0,0,0,0\n2,0,1,2\n"),
    )
    .unwrap();
    let o = reforest(&["flightpath", "--traj", "t.csv"], dir.path());
    assert!(!o.status.success());
    assert!(stderr(&o).contains("row 3"), "{}", stderr(&o));
}
