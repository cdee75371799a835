//! Conversion between a model and a parameter archive.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::io::archive::{CheckpointMeta, EntryKind, ParameterArchive};
use crate::layers::Model;
use crate::numcore::params::{named, named_mut};

/// Learned parameters followed by running statistics.
pub fn model_to_archive(model: &Model, meta: CheckpointMeta) -> ParameterArchive {
    let params = named(&model.params)
        .into_iter()
        .map(|(p, t)| (p, EntryKind::Param, t.clone()));
    let buffers = model
        .state
        .named()
        .into_iter()
        .map(|(p, t)| (format!("state.{p}"), EntryKind::Buffer, t.clone()));
    ParameterArchive::new(model.config.clone(), meta, params.chain(buffers).collect())
}

/// Rebuilds the model described by the manifest and loads every tensor.
/// The archive must hold exactly the tensors the model expects.
pub fn model_from_archive(a: &ParameterArchive) -> Result<Model> {
    let mut model = Model::new(a.manifest.model.clone(), 0)?;
    let mut by_path: HashMap<&str, (&EntryKind, &crate::Tensor)> = a
        .manifest
        .entries
        .iter()
        .zip(&a.tensors)
        .map(|(e, t)| (e.path.as_str(), (&e.kind, t)))
        .collect();
    let mut fill = |path: String, kind: EntryKind, dst: &mut crate::Tensor| -> Result<()> {
        let (k, src) = by_path
            .remove(path.as_str())
            .ok_or_else(|| Error::input(format!("archive lacks {path}")))?;
        if *k != kind || src.shape() != dst.shape() {
            return Err(Error::input(format!(
                "archive entry {path} is {:?} {:?}, model needs {kind:?} {:?}",
                k,
                src.shape(),
                dst.shape()
            )));
        }
        *dst = src.clone();
        Ok(())
    };
    for (p, t) in named_mut(&mut model.params) {
        fill(p, EntryKind::Param, t)?;
    }
    for (p, t) in model.state.named_mut() {
        fill(format!("state.{p}"), EntryKind::Buffer, t)?;
    }
    if let Some(extra) = by_path.keys().next() {
        return Err(Error::input(format!("archive entry {extra} is not part of the model")));
    }
    Ok(model)
}
