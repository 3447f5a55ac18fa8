//! Little-endian readers that turn short reads into typed format errors.

use std::io::{ErrorKind, Read, Write};
use std::path::Path;

use crate::error::{Error, FormatError, Result};

pub(crate) struct ByteReader<R> {
    inner: R,
}

impl<R: Read> ByteReader<R> {
    pub fn new(inner: R) -> Self {
        ByteReader { inner }
    }

    pub fn fill(&mut self, buf: &mut [u8], section: &'static str) -> Result<()> {
        match self.inner.read_exact(buf) {
            Ok(()) => Ok(()),
            Err(e) if e.kind() == ErrorKind::UnexpectedEof => {
                Err(FormatError::Truncated { section }.into())
            }
            Err(e) => Err(Error::Io(e)),
        }
    }

    pub fn u8(&mut self, section: &'static str) -> Result<u8> {
        let mut b = [0u8; 1];
        self.fill(&mut b, section)?;
        Ok(b[0])
    }

    pub fn u16(&mut self, section: &'static str) -> Result<u16> {
        let mut b = [0u8; 2];
        self.fill(&mut b, section)?;
        Ok(u16::from_le_bytes(b))
    }

    pub fn u32(&mut self, section: &'static str) -> Result<u32> {
        let mut b = [0u8; 4];
        self.fill(&mut b, section)?;
        Ok(u32::from_le_bytes(b))
    }

    pub fn f64(&mut self, section: &'static str) -> Result<f64> {
        let mut b = [0u8; 8];
        self.fill(&mut b, section)?;
        Ok(f64::from_le_bytes(b))
    }

    pub fn bytes(&mut self, len: usize, section: &'static str) -> Result<Vec<u8>> {
        let mut v = Vec::new();
        let got = (&mut self.inner).take(len as u64).read_to_end(&mut v)?;
        if got != len {
            return Err(FormatError::Truncated { section }.into());
        }
        Ok(v)
    }

    /// Fails unless the stream is exhausted.
    pub fn expect_end(&mut self) -> Result<()> {
        let mut b = [0u8; 1];
        match self.inner.read(&mut b)? {
            0 => Ok(()),
            _ => Err(FormatError::Inconsistent("trailing bytes after payload".into()).into()),
        }
    }
}

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    write_atomic_with(path, |w| Ok(w.write_all(bytes)?))
}

/// Streams through `fill` into a sibling temp file, then renames it over
/// `path`. The temp file is removed if `fill` or the flush fails.
pub(crate) fn write_atomic_with<F>(path: impl AsRef<Path>, fill: F) -> Result<()>
where
    F: FnOnce(&mut std::io::BufWriter<std::fs::File>) -> Result<()>,
{
    let path = path.as_ref();
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    let tmp_name = format!(".{name}.tmp{}", std::process::id());
    let tmp = match dir {
        Some(d) => d.join(tmp_name),
        None => std::path::PathBuf::from(tmp_name),
    };
    let written = (|| {
        let mut w = std::io::BufWriter::new(std::fs::File::create(&tmp)?);
        fill(&mut w)?;
        let f = w.into_inner().map_err(|e| e.into_error())?;
        f.sync_all()?;
        Ok(())
    })();
    if let Err(e) = written {
        let _ = std::fs::remove_file(&tmp);
        return Err(e);
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Parses TOML text, mapping syntax and schema errors to 1-based line/column.
pub(crate) fn parse_toml<T: serde::de::DeserializeOwned>(src: &str) -> Result<T> {
    toml::from_str(src).map_err(|e| {
        let (line, column) = e.span().map(|s| line_col(src, s.start)).unwrap_or((1, 1));
        Error::Spec {
            line,
            column,
            message: e.message().to_string(),
        }
    })
}

pub(crate) fn line_col(src: &str, offset: usize) -> (usize, usize) {
    let before = &src[..offset.min(src.len())];
    let line = before.matches('\n').count() + 1;
    let column = before
        .rfind('\n')
        .map_or(before.len(), |p| before.len() - p - 1)
        + 1;
    (line, column)
}
