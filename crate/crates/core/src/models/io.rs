//! On-disk movie layout: `frame_NNNNN.raw` (row-major little-endian f32),
//! `movie.json` sidecar, and `truth.csv` with `frame,object,x,y,i0`.

use super::{Frame, GroundTruth, ModelError, Movie, MovieMeta, TruthPoint};
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const SIDECAR: &str = "movie.json";
pub const TRUTH_CSV: &str = "truth.csv";

#[derive(Debug, Error)]
pub enum MovieIoError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("sidecar: {0}")]
    Json(#[from] serde_json::Error),
    #[error("ground truth csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Format(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> MovieIoError + '_ {
    move |source| MovieIoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn frame_file(dir: &Path, k: usize) -> PathBuf {
    dir.join(format!("frame_{k:05}.raw"))
}

pub fn write_movie(dir: &Path, movie: &Movie) -> Result<(), MovieIoError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    for (k, frame) in movie.frames.iter().enumerate() {
        let path = frame_file(dir, k);
        let mut bytes = Vec::with_capacity(frame.pixels().len() * 4);
        for &v in frame.pixels() {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
        fs::write(&path, bytes).map_err(io_err(&path))?;
    }
    let path = dir.join(SIDECAR);
    let json = serde_json::to_string_pretty(&movie.meta)?;
    fs::write(&path, json).map_err(io_err(&path))?;
    Ok(())
}

pub fn read_movie(dir: &Path) -> Result<Movie, MovieIoError> {
    let path = dir.join(SIDECAR);
    let meta: MovieMeta = serde_json::from_str(&fs::read_to_string(&path).map_err(io_err(&path))?)?;
    let expected = meta.width * meta.height * 4;
    let mut frames = Vec::with_capacity(meta.n_frames);
    for k in 0..meta.n_frames {
        let path = frame_file(dir, k);
        let bytes = fs::read(&path).map_err(io_err(&path))?;
        if bytes.len() != expected {
            return Err(MovieIoError::Format(format!(
                "{}: {} bytes, expected {expected}",
                path.display(),
                bytes.len()
            )));
        }
        let pixels = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        frames.push(Frame::new(meta.width, meta.height, pixels)?);
    }
    Ok(Movie { meta, frames })
}

#[derive(Debug, Serialize, Deserialize)]
struct TruthRow {
    frame: usize,
    object: usize,
    x: f64,
    y: f64,
    i0: f64,
}

pub fn write_ground_truth(path: &Path, truth: &GroundTruth) -> Result<(), MovieIoError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    for (frame, objects) in truth.frames.iter().enumerate() {
        for (object, o) in objects.iter().enumerate() {
            w.serialize(TruthRow {
                frame,
                object,
                x: o.x,
                y: o.y,
                i0: o.i0,
            })?;
        }
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

/// Reads `truth.csv`; the nominal intensity is taken as the mean first-frame `i0`.
pub fn read_ground_truth(
    path: &Path,
    width: usize,
    height: usize,
) -> Result<GroundTruth, MovieIoError> {
    let mut r = csv::Reader::from_path(path)?;
    let mut frames: Vec<Vec<TruthPoint>> = Vec::new();
    for row in r.deserialize() {
        let row: TruthRow = row?;
        if frames.len() <= row.frame {
            frames.resize_with(row.frame + 1, Vec::new);
        }
        let objs = &mut frames[row.frame];
        if objs.len() != row.object {
            return Err(MovieIoError::Format(format!(
                "frame {} lists object {} out of order",
                row.frame, row.object
            )));
        }
        objs.push(TruthPoint {
            x: row.x,
            y: row.y,
            i0: row.i0,
        });
    }
    let reference_intensity = frames.first().filter(|f| !f.is_empty()).map_or(0.0, |f| {
        f.iter().map(|o| o.i0).sum::<f64>() / f.len() as f64
    });
    Ok(GroundTruth {
        width,
        height,
        reference_intensity,
        frames,
    })
}

/// Writes a movie plus its ground truth into `dir`.
pub fn write_movie_with_truth(
    dir: &Path,
    movie: &Movie,
    truth: &GroundTruth,
) -> Result<(), MovieIoError> {
    write_movie(dir, movie)?;
    write_ground_truth(&dir.join(TRUTH_CSV), truth)
}
