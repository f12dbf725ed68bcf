use crate::error::{Error, Result};
use crate::fields::GridField;

/// A multichannel 1D signal sampled at increasing times.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvSignal {
    names: Vec<String>,
    times: Vec<f64>,
    /// Interleaved: `values[i * channels + c]`.
    values: Vec<f64>,
}

impl CsvSignal {
    pub fn new(names: Vec<String>, times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let channels = names.len();
        if channels == 0 || times.is_empty() {
            return Err(Error::InvalidInput(
                "signal needs at least one channel and one row".into(),
            ));
        }
        if values.len() != times.len() * channels {
            return Err(Error::ShapeMismatch(format!(
                "{} rows x {channels} channels need {} values, got {}",
                times.len(),
                times.len() * channels,
                values.len()
            )));
        }
        if times.windows(2).any(|t| !(t[1] > t[0])) {
            return Err(Error::InvalidInput(
                "times must be strictly increasing".into(),
            ));
        }
        if times.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "signal contains non-finite values".into(),
            ));
        }
        Ok(Self {
            names,
            times,
            values,
        })
    }

    /// Default channel names `ch1..chD`.
    pub fn default_names(channels: usize) -> Vec<String> {
        (1..=channels).map(|c| format!("ch{c}")).collect()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn channels(&self) -> usize {
        self.names.len()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// The samples as a grid over the unit interval. Times must be uniformly
    /// spaced; the original time range is kept in this struct for export.
    pub fn to_grid_field(&self) -> Result<GridField> {
        if self.times.len() > 2 {
            let step =
                (self.times[self.times.len() - 1] - self.times[0]) / (self.times.len() - 1) as f64;
            let tol = 1e-6 * step;
            if let Some(i) = self
                .times
                .windows(2)
                .position(|t| ((t[1] - t[0]) - step).abs() > tol)
            {
                return Err(Error::Format(format!(
                    "times are not uniformly spaced (row {})",
                    i + 1
                )));
            }
        }
        GridField::new(vec![self.times.len()], self.channels(), self.values.clone())
    }

    /// Rebuilds a signal from a 1D grid, placing samples uniformly on
    /// `[t0, t1]`.
    pub fn from_grid_field(grid: &GridField, names: Vec<String>, t0: f64, t1: f64) -> Result<Self> {
        if grid.resolution().len() != 1 || grid.dout() != names.len() {
            return Err(Error::ShapeMismatch(
                "grid must be 1D with one channel per name".into(),
            ));
        }
        let n = grid.resolution()[0];
        let times = (0..n)
            .map(|i| {
                if n == 1 {
                    t0
                } else {
                    t0 + (t1 - t0) * i as f64 / (n - 1) as f64
                }
            })
            .collect();
        Self::new(names, times, grid.values().to_vec())
    }
}

fn csv_error(e: csv::Error) -> Error {
    let offset = e.position().map(|p| p.byte() as usize).unwrap_or(0);
    match e.kind() {
        csv::ErrorKind::Io(_) => Error::Format(format!("CSV: {e}")),
        _ => Error::parse(offset, format!("CSV: {e}")),
    }
}

/// Parses `time,ch1,..,chD` rows. A first row whose time field is not a
/// number is taken as a header naming the channels.
pub fn read_csv(text: &str) -> Result<CsvSignal> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut names: Option<Vec<String>> = None;
    let mut times = Vec::new();
    let mut values = Vec::new();
    let mut width = 0;
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(csv_error)?;
        let offset = record.position().map(|p| p.byte() as usize).unwrap_or(0);
        if record.len() < 2 {
            return Err(Error::parse(
                offset,
                "rows need a time and at least one channel",
            ));
        }
        if row == 0 && record[0].parse::<f64>().is_err() {
            names = Some(record.iter().skip(1).map(str::to_owned).collect());
            width = record.len();
            continue;
        }
        if width == 0 {
            width = record.len();
        }
        let mut field_offset = offset;
        for (i, field) in record.iter().enumerate() {
            let v: f64 = field
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| {
                    Error::parse(
                        field_offset,
                        format!("field {} is not a finite number: {field:?}", i + 1),
                    )
                })?;
            if i == 0 {
                if times.last().is_some_and(|&t| !(v > t)) {
                    return Err(Error::parse(
                        field_offset,
                        "times must be strictly increasing",
                    ));
                }
                times.push(v);
            } else {
                values.push(v);
            }
            field_offset += field.len() + 1;
        }
    }
    if times.is_empty() {
        return Err(Error::parse(text.len(), "no data rows"));
    }
    let names = names.unwrap_or_else(|| CsvSignal::default_names(width - 1));
    CsvSignal::new(names, times, values)
}

/// Writes a header row followed by one row per sample. Numbers use the
/// shortest representation that parses back to the same value.
pub fn write_csv(signal: &CsvSignal) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    let header = std::iter::once("time").chain(signal.names.iter().map(String::as_str));
    writer.write_record(header).expect("writing to memory");
    for (t, row) in signal
        .times
        .iter()
        .zip(signal.values.chunks_exact(signal.channels()))
    {
        let fields = std::iter::once(t).chain(row).map(|v| v.to_string());
        writer.write_record(fields).expect("writing to memory");
    }
    String::from_utf8(writer.into_inner().expect("writing to memory")).expect("ASCII output")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_row_identity() {
        let text = "0,1\n1,0\n";
        let s = read_csv(text).unwrap();
        assert_eq!(s.times(), &[0.0, 1.0]);
        assert_eq!(s.values(), &[1.0, 0.0]);
        assert_eq!(s.names(), &["ch1"]);
        assert_eq!(write_csv(&s), "time,ch1\n0,1\n1,0\n");
    }

    #[test]
    fn header_names_channels() {
        let s = read_csv("t, x, y\n0, 1, 2\n0.5, 3, 4\n").unwrap();
        assert_eq!(s.names(), &["x", "y"]);
        assert_eq!(s.values(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn ragged_row_is_a_parse_error() {
        match read_csv("0,1,2\n1,3\n") {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 6),
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!(matches!(
            read_csv("t,a\n0,1\n1,2,3\n"),
            Err(Error::Parse { offset: 8, .. })
        ));
    }

    #[test]
    fn bad_numbers_and_order_are_parse_errors() {
        assert!(matches!(
            read_csv("0,1\n1,abc\n"),
            Err(Error::Parse { offset: 6, .. })
        ));
        assert!(matches!(
            read_csv("0,1\n0,2\n"),
            Err(Error::Parse { offset: 4, .. })
        ));
        assert!(matches!(
            read_csv("0,nan\n"),
            Err(Error::Parse { offset: 2, .. })
        ));
        assert!(matches!(read_csv(""), Err(Error::Parse { .. })));
        assert!(matches!(read_csv("time,a\n"), Err(Error::Parse { .. })));
    }

    #[test]
    fn many_channel_round_trip() {
        let channels = 69;
        let rows = 40;
        let times: Vec<f64> = (0..rows).map(|i| i as f64 / 30.0).collect();
        let values: Vec<f64> = (0..rows * channels)
            .map(|k| ((k * 7919) % 1000) as f64 / 997.0 - 0.3)
            .collect();
        let s = CsvSignal::new(CsvSignal::default_names(channels), times, values).unwrap();
        let back = read_csv(&write_csv(&s)).unwrap();
        assert_eq!(back, s);
        let g = back.to_grid_field().unwrap();
        assert_eq!((g.resolution(), g.dout()), (&[rows][..], channels));
    }

    #[test]
    fn non_uniform_times_cannot_become_a_grid() {
        let s = read_csv("0,1\n1,1\n3,1\n").unwrap();
        assert!(s.to_grid_field().is_err());
    }

    #[test]
    fn grid_round_trip_restores_time_range() {
        let s = read_csv("2,1\n2.5,4\n3,9\n").unwrap();
        let g = s.to_grid_field().unwrap();
        let back = CsvSignal::from_grid_field(&g, s.names().to_vec(), 2.0, 3.0).unwrap();
        assert_eq!(back, s);
    }
}
