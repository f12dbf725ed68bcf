//! Loading and saving sampled signals by file extension.

use std::path::Path;

use nfconv::fields::GridField;
use nfconv::io_formats::{
    frames_to_grid_field, read_csv, read_frames, read_image, read_wav, write_csv, write_image,
    write_wav, AudioBuffer, CsvSignal, ImageBuffer,
};

use crate::error::{at, CliError, CliResult};

fn extension(path: &Path) -> String {
    path.extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase()
}

fn read_bytes(path: &Path) -> CliResult<Vec<u8>> {
    std::fs::read(path).map_err(|e| CliError::io(path, e))
}

/// Reads an image (`.png`, `.pfm`), audio clip (`.wav`), time series (`.csv`)
/// or directory of frames as a grid over the unit box.
pub fn load_signal(path: &Path) -> CliResult<GridField> {
    if path.is_dir() {
        let frames = read_frames(path).map_err(at(path))?;
        return frames_to_grid_field(&frames).map_err(at(path));
    }
    match extension(path).as_str() {
        "png" | "pfm" => Ok(read_image(path).map_err(at(path))?.to_grid_field()),
        "wav" => {
            let audio = read_wav(&read_bytes(path)?).map_err(at(path))?;
            audio.to_grid_field().map_err(at(path))
        }
        "csv" => {
            let bytes = read_bytes(path)?;
            let text = String::from_utf8(bytes)
                .map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))?;
            read_csv(&text)
                .map_err(at(path))?
                .to_grid_field()
                .map_err(at(path))
        }
        _ if !path.exists() => Err(CliError::Io(format!("{}: no such file", path.display()))),
        other => Err(CliError::invalid(format!(
            "{}: unsupported signal extension {other:?}",
            path.display()
        ))),
    }
}

fn write_bytes(path: &Path, bytes: &[u8]) -> CliResult<()> {
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

/// Writes a grid in the format implied by `path`: images for 2D grids, WAV or
/// CSV for 1D grids, and a directory of numbered PFM frames for 3D grids.
pub fn save_signal(path: &Path, grid: &GridField, sample_rate: u32) -> CliResult<()> {
    let din = grid.din();
    let ext = extension(path);
    match (din, ext.as_str()) {
        (2, "png" | "pfm") => {
            let image = ImageBuffer::from_grid_field(grid).map_err(at(path))?;
            write_image(path, &image).map_err(at(path))
        }
        (1, "wav") => {
            let audio = AudioBuffer::from_grid_field(grid, sample_rate).map_err(at(path))?;
            write_bytes(path, &write_wav(&audio).map_err(at(path))?)
        }
        (1, "csv") => {
            let n = grid.resolution()[0] as f64;
            let names = CsvSignal::default_names(grid.dout());
            let signal =
                CsvSignal::from_grid_field(grid, names, 0.5 / n, 1.0 - 0.5 / n).map_err(at(path))?;
            write_bytes(path, write_csv(&signal).as_bytes())
        }
        (3, "") => save_frames(path, grid),
        _ => Err(CliError::invalid(format!(
            "{}: cannot store a {din}D signal with extension {ext:?} (use .png/.pfm for 2D, .wav/.csv for 1D, a directory for 3D)",
            path.display()
        ))),
    }
}

fn save_frames(dir: &Path, grid: &GridField) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let res = grid.resolution();
    let (w, h, t) = (res[0], res[1], res[2]);
    let frame_len = w * h * grid.dout();
    for k in 0..t {
        let values = grid.values()[k * frame_len..(k + 1) * frame_len].to_vec();
        let frame = GridField::new(vec![w, h], grid.dout(), values)?;
        let path = dir.join(format!("frame_{k:05}.pfm"));
        let image = ImageBuffer::from_grid_field(&frame).map_err(at(&path))?;
        write_image(&path, &image).map_err(at(&path))?;
    }
    Ok(())
}

/// Parses `W`, `WxH` or `WxHxT`.
pub fn parse_resolution(s: &str) -> Result<Vec<usize>, String> {
    let res: Vec<usize> = s
        .split(['x', 'X'])
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .map_err(|_| format!("bad resolution {s:?}"))
        })
        .collect::<Result<_, _>>()?;
    if res.is_empty() || res.len() > 3 || res.contains(&0) {
        return Err(format!(
            "resolution must be 1 to 3 positive sizes, got {s:?}"
        ));
    }
    Ok(res)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resolutions_parse() {
        assert_eq!(parse_resolution("64x32").unwrap(), vec![64, 32]);
        assert_eq!(parse_resolution("100").unwrap(), vec![100]);
        assert!(parse_resolution("0x4").is_err());
        assert!(parse_resolution("4xx").is_err());
    }

    #[test]
    fn signals_round_trip_through_every_format() {
        let dir = tempfile::tempdir().unwrap();
        let g2 = GridField::from_fn(vec![5, 3], 1, |x, o| o[0] = x[0] + 0.5 * x[1]).unwrap();
        let p = dir.path().join("a.pfm");
        save_signal(&p, &g2, 0).unwrap();
        let back = load_signal(&p).unwrap();
        for (a, b) in g2.values().iter().zip(back.values()) {
            assert!((a - b).abs() < 1e-6);
        }

        let g1 = GridField::from_fn(vec![16], 2, |x, o| {
            o[0] = x[0];
            o[1] = -x[0];
        })
        .unwrap();
        let p = dir.path().join("a.csv");
        save_signal(&p, &g1, 0).unwrap();
        assert_eq!(load_signal(&p).unwrap(), g1);

        let g3 = GridField::from_fn(vec![4, 3, 2], 1, |x, o| o[0] = x[2]).unwrap();
        let p = dir.path().join("frames");
        save_signal(&p, &g3, 0).unwrap();
        let back = load_signal(&p).unwrap();
        assert_eq!(back.resolution(), &[4, 3, 2]);

        assert!(matches!(
            save_signal(&dir.path().join("a.wav"), &g2, 8000),
            Err(CliError::Invalid(_))
        ));
        assert!(matches!(
            load_signal(&dir.path().join("missing.png")),
            Err(CliError::Io(_))
        ));
    }
}
