use crlprune::checkpoint::{load_agent, load_network, network_from_json, save_agent, save_network, FORMAT_VERSION};
use crlprune::crl::{PpoConfig, Trainer};
use crlprune::nn::{Architecture, Mask, Network};
use crlprune::rng::rng_for;
use crlprune::Error;

fn masked_net() -> Network {
    let mut net = Network::new(&Architecture::default(), &mut rng_for(3, 0)).unwrap();
    let masks: Vec<Mask> = net
        .conv_layers()
        .iter()
        .map(|l| Mask::from_bools((0..l.spec.num_filters).map(|f| f % 3 != 1).collect()))
        .collect();
    net.apply_mask(&masks).unwrap();
    net
}

#[test]
fn network_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.json");
    let net = masked_net();
    save_network(&path, &net).unwrap();
    let back = load_network(&path).unwrap();
    assert_eq!(back, net);
    // saving again reproduces the same bytes
    let again = dir.path().join("again.json");
    save_network(&again, &back).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&again).unwrap());
}

#[test]
fn wrong_version_and_corrupt_files_are_rejected() {
    let net = masked_net();
    let mut json: serde_json::Value = serde_json::to_value(crlprune::checkpoint::NetworkCheckpoint::new(&net)).unwrap();
    json["format_version"] = (FORMAT_VERSION + 1).into();
    assert!(matches!(network_from_json(&json.to_string()), Err(Error::FormatVersion(_))));

    json["format_version"] = FORMAT_VERSION.into();
    json["network"]["conv_layers"][0]["weight"]["data"].as_array_mut().unwrap().pop();
    assert!(network_from_json(&json.to_string()).is_err());

    assert!(network_from_json("{\"format_version\": 1").is_err());
    assert!(load_network(std::path::Path::new("/nonexistent/net.json")).is_err());
}

#[test]
fn inconsistent_mask_is_rejected() {
    let net = masked_net();
    let mut json: serde_json::Value = serde_json::to_value(crlprune::checkpoint::NetworkCheckpoint::new(&net)).unwrap();
    json["network"]["masks"][0].as_array_mut().unwrap().push(1.into());
    assert!(network_from_json(&json.to_string()).is_err());
    json["network"]["masks"][0][0] = 2.into();
    assert!(network_from_json(&json.to_string()).is_err());
}

#[test]
fn agent_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("agent.json");
    let mut trainer = Trainer::new(PpoConfig::default(), 6, 1, 30.0, 9).unwrap();
    trainer.lagrange.lambda = 0.37;
    trainer.policy.log_std.fill(-0.9);
    save_agent(&path, &trainer).unwrap();
    let back = load_agent(&path).unwrap();
    assert_eq!(back.policy, trainer.policy);
    assert_eq!(back.value_reward, trainer.value_reward);
    assert_eq!(back.value_cost, trainer.value_cost);
    assert_eq!(back.lagrange, trainer.lagrange);
}
