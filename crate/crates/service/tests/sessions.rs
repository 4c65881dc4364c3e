use levelblend::corpus::TileGrid;
use levelblend_service::sessions::{Placement, Provenance, SessionError, SessionStore, SessionUpdate};

fn placement(x: i64) -> Placement {
    Placement {
        grid: TileGrid::filled(0),
        x,
        y: 0,
        provenance: Provenance { model_id: "vae".into(), latent: None, objective: None },
    }
}

#[test]
fn rejects_path_like_ids() {
    let dir = tempfile::tempdir().unwrap();
    let store = SessionStore::open(dir.path()).unwrap();
    for id in ["", "../registry", "a/b", "x.json", &"a".repeat(200)] {
        assert!(matches!(store.get(id), Err(SessionError::NotFound(_))), "{id:?}");
    }
    let update = SessionUpdate { version: 1, name: None, placements: vec![] };
    assert!(matches!(store.update("../x", update), Err(SessionError::NotFound(_))));
}

#[test]
fn update_bumps_version_and_rejects_stale() {
    let dir = tempfile::tempdir().unwrap();
    let store = SessionStore::open(dir.path()).unwrap();
    let s = store.create("draft").unwrap();
    assert_eq!(s.version, 1);

    let next = store
        .update(&s.id, SessionUpdate { version: 1, name: Some("level".into()), placements: vec![placement(0), placement(16)] })
        .unwrap();
    assert_eq!((next.version, next.name.as_str(), next.placements.len()), (2, "level", 2));

    let stale = store.update(&s.id, SessionUpdate { version: 1, name: None, placements: vec![] });
    assert!(matches!(stale, Err(SessionError::Conflict { current: 2, given: 1, .. })));
    assert_eq!(store.get(&s.id).unwrap(), next);
}

#[test]
fn list_survives_reopen_in_creation_order() {
    let dir = tempfile::tempdir().unwrap();
    let ids: Vec<String> = {
        let store = SessionStore::open(dir.path()).unwrap();
        (0..3).map(|i| store.create(&format!("s{i}")).unwrap().id).collect()
    };
    let store = SessionStore::open(dir.path()).unwrap();
    let listed = store.list().unwrap();
    assert_eq!(listed.len(), 3);
    let names: Vec<_> = listed.iter().map(|s| s.name.as_str()).collect();
    assert_eq!(names, ["s0", "s1", "s2"]);
    for id in &ids {
        assert_eq!(store.get(id).unwrap().version, 1);
    }
}
