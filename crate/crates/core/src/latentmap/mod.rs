//! Semantic grouping of latent vectors and 2-D t-SNE maps of the groups.

mod silhouette;
mod tsne;

use std::io::Write;
use std::path::Path;

pub use silhouette::silhouette;
pub use tsne::{embed_affinities, joint_affinities, kl_divergence, tsne, Affinities, TsneConfig};

use crate::autonet::LatentVector;
use crate::error::{Error, Result};
use crate::spectra::Element;

/// The slice of a latent vector attributed to one admittance element.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticGroup {
    pub element: Element,
    pub sample_index: usize,
    pub vector: Vec<f64>,
}

/// Splits `h` into four equal contiguous groups, in element order.
pub fn split_groups(h: &LatentVector, sample_index: usize) -> Result<[SemanticGroup; 4]> {
    let n = h.0.len();
    if n == 0 || !n.is_multiple_of(4) {
        return Err(Error::InvalidParam(format!(
            "latent length {n} is not a positive multiple of 4"
        )));
    }
    let q = n / 4;
    Ok(Element::ALL.map(|element| {
        let g = element.index();
        SemanticGroup {
            element,
            sample_index,
            vector: h.0[g * q..(g + 1) * q].to_vec(),
        }
    }))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmbeddedPoint {
    pub sample_index: usize,
    pub element: Element,
    pub xy: [f64; 2],
}

/// Joint map of all groups plus one map per element.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupEmbedding {
    pub joint: Vec<EmbeddedPoint>,
    pub joint_silhouette: f64,
    pub per_element: Vec<(Element, Vec<EmbeddedPoint>)>,
}

/// Embeds every semantic group of `latents`. Per-element maps are skipped
/// when there are too few samples for the configured perplexity.
pub fn embed_groups(latents: &[LatentVector], cfg: &TsneConfig) -> Result<GroupEmbedding> {
    let mut groups = Vec::with_capacity(latents.len() * 4);
    for (i, h) in latents.iter().enumerate() {
        groups.extend(split_groups(h, i)?);
    }
    let vectors: Vec<&[f64]> = groups.iter().map(|g| g.vector.as_slice()).collect();
    let xy = tsne(&vectors, cfg)?;
    let labels: Vec<usize> = groups.iter().map(|g| g.element.index()).collect();
    let joint_silhouette = silhouette(&xy, &labels)?;
    let joint = groups
        .iter()
        .zip(&xy)
        .map(|(g, p)| EmbeddedPoint {
            sample_index: g.sample_index,
            element: g.element,
            xy: *p,
        })
        .collect();

    let mut per_element = Vec::new();
    if (latents.len() as f64) > 3.0 * cfg.perplexity {
        for element in Element::ALL {
            let vs: Vec<&[f64]> = groups
                .iter()
                .filter(|g| g.element == element)
                .map(|g| g.vector.as_slice())
                .collect();
            let xy = tsne(&vs, cfg)?;
            let pts = xy
                .into_iter()
                .enumerate()
                .map(|(i, p)| EmbeddedPoint {
                    sample_index: i,
                    element,
                    xy: p,
                })
                .collect();
            per_element.push((element, pts));
        }
    } else {
        log::warn!(
            "skipping per-element maps: {} samples too few for perplexity {}",
            latents.len(),
            cfg.perplexity
        );
    }
    Ok(GroupEmbedding {
        joint,
        joint_silhouette,
        per_element,
    })
}

/// Writes `sample_index,element,x,y` rows.
pub fn write_embedding_csv(points: &[EmbeddedPoint], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(Error::file(path))?);
    let mut write = || -> std::io::Result<()> {
        writeln!(out, "sample_index,element,x,y")?;
        for p in points {
            writeln!(
                out,
                "{},{},{:e},{:e}",
                p.sample_index,
                p.element.label(),
                p.xy[0],
                p.xy[1]
            )?;
        }
        out.flush()
    };
    write().map_err(Error::file(path))
}
