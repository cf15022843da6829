use std::collections::BTreeSet;

use super::TrainError;
use crate::label_model::{ItemRecord, Manifest};

/// Partitions a manifest so that every item of a held-out subject lands in
/// the test side and no subject appears on both sides.
pub fn split_by_subject(manifest: &Manifest, held_out: &BTreeSet<String>) -> Result<(Manifest, Manifest), TrainError> {
    let present: BTreeSet<&str> = manifest.items().iter().map(|i| i.subject_id.as_str()).collect();
    if let Some(missing) = held_out.iter().find(|s| !present.contains(s.as_str())) {
        return Err(TrainError::UnknownSubject(missing.clone()));
    }
    let (test, train): (Vec<ItemRecord>, Vec<ItemRecord>) =
        manifest.items().iter().cloned().partition(|i| held_out.contains(&i.subject_id));
    Ok((
        Manifest::new(train).expect("subset of a valid manifest"),
        Manifest::new(test).expect("subset of a valid manifest"),
    ))
}
