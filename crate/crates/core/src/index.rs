//! Packed hash-code table with exact Hamming ranking and radius search.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::model::{words_for_bits, HashCode};

pub const TABLE_MAGIC: &[u8; 4] = b"HTBL";
pub const TABLE_VERSION: u16 = 1;

/// Stored in the label column for items without ground truth.
pub const NO_LABEL: u32 = u32::MAX;

/// Number of differing positions. Pad bits are zero in both codes, so a plain
/// XOR-popcount over the words is exact.
pub fn hamming_distance(a: &HashCode, b: &HashCode) -> Result<u32> {
    if a.bits() != b.bits() {
        return Err(Error::Dimension {
            context: "hamming distance code length",
            expected: a.bits(),
            actual: b.bits(),
        });
    }
    Ok(popcount_xor(a.words(), b.words()))
}

#[inline]
fn popcount_xor(a: &[u64], b: &[u64]) -> u32 {
    a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones()).sum()
}

/// Database of codes with parallel id, ground-truth, and predicted-label columns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeTable {
    bits: usize,
    words_per_code: usize,
    words: Vec<u64>,
    ids: Vec<u32>,
    labels: Vec<u32>,
    predicted: Vec<u32>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Hit {
    /// Row of the item in the table.
    pub index: usize,
    pub id: u32,
    pub distance: u32,
    pub predicted: u32,
}

impl CodeTable {
    pub fn new(bits: usize) -> Self {
        CodeTable {
            bits,
            words_per_code: words_for_bits(bits),
            words: Vec::new(),
            ids: Vec::new(),
            labels: Vec::new(),
            predicted: Vec::new(),
        }
    }

    /// Appends one item. `label` is the ground truth if known.
    pub fn push(
        &mut self,
        code: &HashCode,
        id: u32,
        label: Option<u32>,
        predicted: u32,
    ) -> Result<()> {
        if code.bits() != self.bits {
            return Err(Error::Dimension {
                context: "code table entry",
                expected: self.bits,
                actual: code.bits(),
            });
        }
        self.words.extend_from_slice(code.words());
        self.ids.push(id);
        self.labels.push(label.unwrap_or(NO_LABEL));
        self.predicted.push(predicted);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn bits(&self) -> usize {
        self.bits
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn predicted(&self) -> &[u32] {
        &self.predicted
    }

    pub fn label(&self, index: usize) -> Option<u32> {
        Some(self.labels[index]).filter(|&l| l != NO_LABEL)
    }

    pub fn labels_raw(&self) -> &[u32] {
        &self.labels
    }

    fn code_words(&self, index: usize) -> &[u64] {
        &self.words[index * self.words_per_code..(index + 1) * self.words_per_code]
    }

    pub fn code(&self, index: usize) -> HashCode {
        HashCode::from_words(self.bits, self.code_words(index).to_vec())
            .expect("table invariants hold")
    }

    fn check_query(&self, query: &HashCode) -> Result<()> {
        if query.bits() != self.bits {
            return Err(Error::Dimension {
                context: "query code length",
                expected: self.bits,
                actual: query.bits(),
            });
        }
        Ok(())
    }

    /// Distance from `query` to every row, in table order.
    pub fn distances(&self, query: &HashCode) -> Result<Vec<u32>> {
        self.check_query(query)?;
        let q = query.words();
        Ok(self
            .words
            .chunks_exact(self.words_per_code.max(1))
            .take(self.len())
            .map(|w| popcount_xor(q, w))
            .collect())
    }

    fn hit(&self, index: usize, distance: u32) -> Hit {
        Hit {
            index,
            id: self.ids[index],
            distance,
            predicted: self.predicted[index],
        }
    }

    /// Every item sorted by ascending distance; equal distances keep table order.
    pub fn rank_all(&self, query: &HashCode) -> Result<Vec<Hit>> {
        self.rank_excluding(query, None)
    }

    /// [`rank_all`](Self::rank_all) with one row left out, for queries that are
    /// themselves database items.
    pub fn rank_excluding(&self, query: &HashCode, exclude: Option<usize>) -> Result<Vec<Hit>> {
        let dists = self.distances(query)?;
        // Counting sort over the K + 1 possible distances: stable and O(N + K).
        let mut counts = vec![0usize; self.bits + 2];
        for (i, &d) in dists.iter().enumerate() {
            if Some(i) != exclude {
                counts[d as usize + 1] += 1;
            }
        }
        for b in 1..counts.len() {
            counts[b] += counts[b - 1];
        }
        let total = counts[self.bits + 1];
        let mut out = vec![Hit::default(); total];
        for (i, &d) in dists.iter().enumerate() {
            if Some(i) == exclude {
                continue;
            }
            let slot = &mut counts[d as usize];
            out[*slot] = self.hit(i, d);
            *slot += 1;
        }
        Ok(out)
    }

    /// Items within distance `radius`, in rank order.
    pub fn radius_search(&self, query: &HashCode, radius: u32) -> Result<Vec<Hit>> {
        if radius as usize > self.bits {
            return Err(Error::Data(format!(
                "radius {radius} exceeds code length {}",
                self.bits
            )));
        }
        let mut hits = self.rank_all(query)?;
        let end = hits.partition_point(|h| h.distance <= radius);
        hits.truncate(end);
        Ok(hits)
    }

    /// First `k` items of the full ranking.
    pub fn top_k(&self, query: &HashCode, k: usize) -> Result<Vec<Hit>> {
        if k == 0 || k > self.len() {
            return Err(Error::Data(format!(
                "top-k needs 1 <= k <= {}, got {k}",
                self.len()
            )));
        }
        let mut hits = self.rank_all(query)?;
        hits.truncate(k);
        Ok(hits)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(TABLE_MAGIC)?;
        w.write_u16::<LittleEndian>(TABLE_VERSION)?;
        w.write_u32::<LittleEndian>(self.len() as u32)?;
        w.write_u32::<LittleEndian>(self.bits as u32)?;
        for &word in &self.words {
            w.write_u64::<LittleEndian>(word)?;
        }
        for column in [&self.ids, &self.labels, &self.predicted] {
            for &v in column {
                w.write_u32::<LittleEndian>(v)?;
            }
        }
        w.flush()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(BufWriter::new(file))
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(BufReader::new(file), path)
    }

    /// Parses a table; `path` only labels errors.
    pub fn read_from<R: Read>(r: R, path: &Path) -> Result<Self> {
        let mut r = Tracked::new(r);
        let truncated = |off: u64| Error::format(path, off, "truncated code table");

        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(|_| truncated(r.offset))?;
        if &magic != TABLE_MAGIC {
            return Err(Error::format(path, 0, "bad magic, expected HTBL"));
        }
        let version = r
            .read_u16::<LittleEndian>()
            .map_err(|_| truncated(r.offset))?;
        if version != TABLE_VERSION {
            return Err(Error::format(
                path,
                4,
                format!("unsupported version {version}"),
            ));
        }
        let n = r
            .read_u32::<LittleEndian>()
            .map_err(|_| truncated(r.offset))? as usize;
        let bits = r
            .read_u32::<LittleEndian>()
            .map_err(|_| truncated(r.offset))? as usize;
        if bits == 0 {
            return Err(Error::format(path, 10, "code length must be positive"));
        }

        let mut table = CodeTable::new(bits);
        let wpc = table.words_per_code;
        table.words.reserve(n * wpc);
        for i in 0..n {
            let start = r.offset;
            let mut code = Vec::with_capacity(wpc);
            for _ in 0..wpc {
                code.push(
                    r.read_u64::<LittleEndian>()
                        .map_err(|_| truncated(r.offset))?,
                );
            }
            HashCode::from_words(bits, code.clone()).map_err(|_| {
                Error::format(path, start, format!("code {i} has nonzero pad bits"))
            })?;
            table.words.extend(code);
        }
        for column in [&mut table.ids, &mut table.labels, &mut table.predicted] {
            column.reserve(n);
            for _ in 0..n {
                column.push(
                    r.read_u32::<LittleEndian>()
                        .map_err(|_| truncated(r.offset))?,
                );
            }
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest).map_err(|e| Error::io(path, e))? != 0 {
            return Err(Error::format(
                path,
                r.offset,
                "trailing bytes after code table",
            ));
        }
        Ok(table)
    }
}

/// Reader wrapper that tracks the byte offset for error messages.
pub(crate) struct Tracked<R> {
    inner: R,
    pub offset: u64,
}

impl<R> Tracked<R> {
    pub fn new(inner: R) -> Self {
        Tracked { inner, offset: 0 }
    }
}

impl<R: Read> Read for Tracked<R> {
    fn read(&mut self, buf: &mut [u8]) -> std::io::Result<usize> {
        let n = self.inner.read(buf)?;
        self.offset += n as u64;
        Ok(n)
    }
}
