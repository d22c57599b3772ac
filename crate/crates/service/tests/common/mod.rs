#![allow(dead_code)]

use std::sync::Arc;
use std::time::Duration;

use mutualfriends_core::{AgentRegistry, Resources, Scenario, Schema, Side, SurfaceFormStore};
use mutualfriends_service::wire::{ClientEvent, ServerEvent};
use mutualfriends_service::{ClientHandle, Hub, ServiceConfig, Storage};

pub fn mix(pairs: &[(&str, f64)]) -> Vec<(String, f64)> {
    pairs.iter().map(|(n, w)| (n.to_string(), *w)).collect()
}

pub fn config(dir: &std::path::Path, mix_pairs: &[(&str, f64)]) -> ServiceConfig {
    ServiceConfig {
        storage_dir: dir.to_path_buf(),
        mix: mix(mix_pairs),
        human_wait_ms: None,
        ..ServiceConfig::default()
    }
}

pub fn hub(config: ServiceConfig) -> Arc<Hub> {
    let resources = Resources::new(Schema::bundled(), SurfaceFormStore::new());
    let storage = Arc::new(Storage::open(&config.storage_dir).unwrap());
    Hub::new(config, resources, Arc::new(AgentRegistry::with_builtin()), storage).unwrap()
}

/// Every event a test client has received, serialized as on the wire.
pub struct Client {
    pub handle: ClientHandle,
    pub log: Vec<String>,
}

impl Client {
    pub fn connect(hub: &Arc<Hub>) -> Self {
        Self {
            handle: hub.connect(),
            log: Vec::new(),
        }
    }

    pub fn send(&self, hub: &Arc<Hub>, event: ClientEvent) {
        hub.handle(self.handle.conn, event);
    }

    pub async fn recv(&mut self) -> ServerEvent {
        let e = tokio::time::timeout(Duration::from_secs(3600), self.handle.rx.recv())
            .await
            .expect("event within an hour")
            .expect("channel open");
        self.log.push(mutualfriends_service::wire::encode(&e));
        e
    }

    /// Next event that is not partner activity.
    pub async fn next_own(&mut self) -> ServerEvent {
        loop {
            match self.recv().await {
                ServerEvent::PartnerEvent { .. } => continue,
                e => return e,
            }
        }
    }

    pub fn drain(&mut self) {
        while let Ok(e) = self.handle.rx.try_recv() {
            self.log.push(mutualfriends_service::wire::encode(&e));
        }
    }
}

pub struct Paired {
    pub session_id: String,
    pub scenario: Scenario,
    pub side: Side,
}

pub async fn expect_paired(hub: &Arc<Hub>, c: &mut Client) -> Paired {
    match c.next_own().await {
        ServerEvent::Paired {
            session_id,
            scenario_view,
            kb,
            deadline_ms,
        } => {
            assert!(deadline_ms <= 300_000);
            let scenario = hub.scenario(&scenario_view.scenario_id).expect("scenario registered");
            let own: Vec<_> = (0..scenario.kbs[0].len()).map(|i| scenario.kbs[0].item_map(i)).collect();
            let side = if own == kb { Side::A } else { Side::B };
            assert_eq!(scenario_view.attributes, scenario.attribute_names());
            Paired {
                session_id,
                scenario,
                side,
            }
        }
        other => panic!("expected paired, got {other:?}"),
    }
}

/// Index of the shared item in `side`'s KB.
pub fn shared(scenario: &Scenario, side: Side) -> usize {
    let (a, b) = scenario.shared_indices().unwrap();
    if side == Side::A {
        a
    } else {
        b
    }
}

pub fn other_item(scenario: &Scenario, side: Side) -> usize {
    (shared(scenario, side) + 1) % scenario.n_items()
}

/// Values that appear only in the partner's KB, JSON-quoted.
pub fn partner_only_values(scenario: &Scenario, side: Side) -> Vec<String> {
    let own = scenario.kb(side).entities();
    scenario
        .kb(side.other())
        .entities()
        .into_iter()
        .filter(|e| !own.contains(e))
        .map(|e| format!("\"{e}\""))
        .collect()
}

/// Fails if any non-utterance message mentions a partner-only value.
pub fn assert_hidden(log: &[String], scenario: &Scenario, side: Side) {
    let secret = partner_only_values(scenario, side);
    for line in log {
        if line.contains("\"kind\":\"utterance\"") {
            continue;
        }
        for s in &secret {
            assert!(!line.contains(s.as_str()), "{line} leaks {s}");
        }
    }
}
