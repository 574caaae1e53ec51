//! Position tracks: CSV ingestion and geodetic-to-local conversion.
//!
//! Accepted input is UTF-8 CSV with a header of either `t,x,y` (metres in a
//! local frame) or `t,lat,lon` (degrees). Timestamps are seconds and must
//! increase strictly.

use std::io::{Read, Write};

use nalgebra::DVector;

use crate::error::{Error, Result};

/// Mean Earth radius used by the equirectangular projection (m).
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

#[derive(Clone, Debug, PartialEq)]
pub struct TrackSample {
    pub t: f64,
    /// `[x, y]` metres, or `[lat, lon]` degrees for geodetic tracks.
    pub position: DVector<f64>,
}

impl TrackSample {
    pub fn local(t: f64, position: Vec<f64>) -> Self {
        TrackSample { t, position: DVector::from_vec(position) }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Frame {
    Local,
    Geodetic,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Track {
    pub frame: Frame,
    pub samples: Vec<TrackSample>,
}

/// Incremental reader; yields samples as rows arrive, which lets the CLI
/// process a live stream.
pub struct TrackReader<R: Read> {
    records: csv::StringRecordsIntoIter<R>,
    frame: Frame,
    last_t: Option<f64>,
}

impl<R: Read> TrackReader<R> {
    pub fn new(input: R) -> Result<Self> {
        let mut reader =
            csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).flexible(true).from_reader(input);
        let header = reader.headers().map_err(|e| Error::Parse { line: 1, message: e.to_string() })?;
        let names: Vec<&str> = header.iter().collect();
        let frame = match names.as_slice() {
            ["t", "x", "y"] => Frame::Local,
            ["t", "lat", "lon"] => Frame::Geodetic,
            _ => {
                return Err(Error::Parse {
                    line: 1,
                    message: format!("expected header `t,x,y` or `t,lat,lon`, found `{}`", names.join(",")),
                })
            }
        };
        Ok(TrackReader { records: reader.into_records(), frame, last_t: None })
    }

    pub fn frame(&self) -> Frame {
        self.frame
    }

    fn convert(&mut self, record: csv::StringRecord) -> Result<TrackSample> {
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.len() != 3 {
            return Err(Error::Parse { line, message: format!("expected 3 fields, found {}", record.len()) });
        }
        let mut vals = [0.0; 3];
        for (slot, field) in vals.iter_mut().zip(record.iter()) {
            *slot = field
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Parse { line, message: format!("`{field}` is not a finite number") })?;
        }
        let t = vals[0];
        if let Some(prev) = self.last_t {
            if t <= prev {
                return Err(Error::Validation(format!("line {line}: timestamp {t} does not increase past {prev}")));
            }
        }
        self.last_t = Some(t);
        Ok(TrackSample::local(t, vec![vals[1], vals[2]]))
    }
}

impl<R: Read> Iterator for TrackReader<R> {
    type Item = Result<TrackSample>;

    fn next(&mut self) -> Option<Self::Item> {
        let record = self.records.next()?;
        Some(match record {
            Ok(r) => self.convert(r),
            Err(e) => {
                let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
                Err(Error::Parse { line, message: e.to_string() })
            }
        })
    }
}

pub fn parse_track<R: Read>(input: R) -> Result<Track> {
    let reader = TrackReader::new(input)?;
    let frame = reader.frame();
    let samples = reader.collect::<Result<Vec<_>>>()?;
    Ok(Track { frame, samples })
}

fn check_latitude(lat: f64) -> Result<()> {
    if lat.abs() >= 85.0 {
        return Err(Error::invalid(format!("latitude {lat}° is too close to a pole")));
    }
    Ok(())
}

/// Equirectangular projection of one `(lat, lon)` pair about `origin`.
pub fn project(lat: f64, lon: f64, origin: (f64, f64)) -> Result<(f64, f64)> {
    check_latitude(lat)?;
    check_latitude(origin.0)?;
    let x = EARTH_RADIUS_M * (lon - origin.1).to_radians() * origin.0.to_radians().cos();
    let y = EARTH_RADIUS_M * (lat - origin.0).to_radians();
    Ok((x, y))
}

/// Inverse of [`project`].
pub fn unproject(x: f64, y: f64, origin: (f64, f64)) -> Result<(f64, f64)> {
    check_latitude(origin.0)?;
    let lat = origin.0 + (y / EARTH_RADIUS_M).to_degrees();
    let lon = origin.1 + (x / (EARTH_RADIUS_M * origin.0.to_radians().cos())).to_degrees();
    Ok((lat, lon))
}

/// Convert geodetic samples (`[lat, lon]`) to metres about `origin`.
pub fn latlon_to_local(samples: &[TrackSample], origin: (f64, f64)) -> Result<Vec<TrackSample>> {
    samples
        .iter()
        .map(|s| {
            let (x, y) = project(s.position[0], s.position[1], origin)?;
            Ok(TrackSample::local(s.t, vec![x, y]))
        })
        .collect()
}

pub fn local_to_latlon(samples: &[TrackSample], origin: (f64, f64)) -> Result<Vec<TrackSample>> {
    samples
        .iter()
        .map(|s| {
            let (lat, lon) = unproject(s.position[0], s.position[1], origin)?;
            Ok(TrackSample::local(s.t, vec![lat, lon]))
        })
        .collect()
}

/// Write a 2-D local track as `t,x,y` CSV.
pub fn write_track<W: Write>(samples: &[TrackSample], mut out: W) -> Result<()> {
    writeln!(out, "t,x,y")?;
    for s in samples {
        if s.position.len() != 2 {
            return Err(Error::invalid("track CSV output needs 2-D positions"));
        }
        writeln!(out, "{:?},{:?},{:?}", s.t, s.position[0], s.position[1])?;
    }
    Ok(())
}
