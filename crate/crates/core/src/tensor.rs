//! NHWC tensors, filter banks, Winograd tiling and the `LTEN` file format.

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use crate::error::{invalid, Error, Result};

/// Dense 4-D `f32` tensor in NHWC order (channels innermost).
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    n: usize,
    h: usize,
    w: usize,
    c: usize,
    data: Vec<f32>,
}

impl Tensor4 {
    pub fn new(n: usize, h: usize, w: usize, c: usize, data: Vec<f32>) -> Result<Self> {
        if n == 0 || h == 0 || w == 0 || c == 0 {
            return invalid(format!("tensor dims must be >= 1, got {n}x{h}x{w}x{c}"));
        }
        let len = checked_len(&[n, h, w, c])
            .ok_or_else(|| Error::InvalidArgument("tensor dims overflow".into()))?;
        if data.len() != len {
            return invalid(format!(
                "tensor {n}x{h}x{w}x{c} needs {len} values, got {}",
                data.len()
            ));
        }
        Ok(Self { n, h, w, c, data })
    }

    pub fn zeros(n: usize, h: usize, w: usize, c: usize) -> Result<Self> {
        let len = checked_len(&[n, h, w, c]).unwrap_or(0);
        Self::new(n, h, w, c, vec![0.0; len])
    }

    pub fn from_fn(
        n: usize,
        h: usize,
        w: usize,
        c: usize,
        mut f: impl FnMut(usize, usize, usize, usize) -> f32,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(n * h * w * c);
        for ni in 0..n {
            for hi in 0..h {
                for wi in 0..w {
                    for ci in 0..c {
                        data.push(f(ni, hi, wi, ci));
                    }
                }
            }
        }
        Self::new(n, h, w, c, data)
    }

    /// `(n, h, w, c)`
    pub fn dims(&self) -> (usize, usize, usize, usize) {
        (self.n, self.h, self.w, self.c)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> usize {
        self.h
    }

    pub fn w(&self) -> usize {
        self.w
    }

    pub fn c(&self) -> usize {
        self.c
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn index(&self, n: usize, h: usize, w: usize, c: usize) -> usize {
        ((n * self.h + h) * self.w + w) * self.c + c
    }

    #[inline]
    pub fn get(&self, n: usize, h: usize, w: usize, c: usize) -> f32 {
        self.data[self.index(n, h, w, c)]
    }

    /// Reads with zero padding: coordinates outside the image return `0.0`.
    #[inline]
    pub fn get_padded(&self, n: usize, h: isize, w: isize, c: usize) -> f32 {
        if h < 0 || w < 0 || h as usize >= self.h || w as usize >= self.w {
            0.0
        } else {
            self.get(n, h as usize, w as usize, c)
        }
    }

    pub fn set(&mut self, n: usize, h: usize, w: usize, c: usize, v: f32) {
        let i = self.index(n, h, w, c);
        self.data[i] = v;
    }
}

/// Filters in K,R,S,C order.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    k: usize,
    r: usize,
    s: usize,
    c: usize,
    data: Vec<f32>,
}

impl FilterBank {
    pub fn new(k: usize, r: usize, s: usize, c: usize, data: Vec<f32>) -> Result<Self> {
        if k == 0 || r == 0 || s == 0 || c == 0 {
            return invalid(format!("filter dims must be >= 1, got {k}x{r}x{s}x{c}"));
        }
        let len = checked_len(&[k, r, s, c])
            .ok_or_else(|| Error::InvalidArgument("filter dims overflow".into()))?;
        if data.len() != len {
            return invalid(format!(
                "filter bank {k}x{r}x{s}x{c} needs {len} values, got {}",
                data.len()
            ));
        }
        Ok(Self { k, r, s, c, data })
    }

    pub fn from_fn(
        k: usize,
        r: usize,
        s: usize,
        c: usize,
        mut f: impl FnMut(usize, usize, usize, usize) -> f32,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(k * r * s * c);
        for ki in 0..k {
            for ri in 0..r {
                for si in 0..s {
                    for ci in 0..c {
                        data.push(f(ki, ri, si, ci));
                    }
                }
            }
        }
        Self::new(k, r, s, c, data)
    }

    /// `(k, r, s, c)`
    pub fn dims(&self) -> (usize, usize, usize, usize) {
        (self.k, self.r, self.s, self.c)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn s(&self) -> usize {
        self.s
    }

    pub fn c(&self) -> usize {
        self.c
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, k: usize, r: usize, s: usize, c: usize) -> f32 {
        self.data[((k * self.r + r) * self.s + s) * self.c + c]
    }

    /// The `r x s` slice of filter `k` at channel `c`, row-major.
    pub fn channel_slice(&self, k: usize, c: usize) -> Vec<f32> {
        let mut out = Vec::with_capacity(self.r * self.s);
        for r in 0..self.r {
            for s in 0..self.s {
                out.push(self.get(k, r, s, c));
            }
        }
        out
    }

    /// Views the bank as a tensor with `N=K, H=R, W=S`; used for file I/O.
    pub fn to_tensor(&self) -> Tensor4 {
        Tensor4 {
            n: self.k,
            h: self.r,
            w: self.s,
            c: self.c,
            data: self.data.clone(),
        }
    }

    pub fn from_tensor(t: Tensor4) -> Self {
        Self {
            k: t.n,
            r: t.h,
            s: t.w,
            c: t.c,
            data: t.data,
        }
    }
}

fn checked_len(dims: &[usize]) -> Option<usize> {
    dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d))
}

/// Output extent of a unit-stride correlation along one axis.
pub fn output_extent(input: usize, filter: usize, pad: usize) -> Option<usize> {
    (input + 2 * pad).checked_sub(filter).map(|v| v + 1)
}

/// Overlapping input tiles, `alpha x alpha` per channel, taken with stride `m`.
///
/// `tiles` is indexed `[image, tile, row, col, channel]`, tiles in row-major
/// grid order.
#[derive(Debug, Clone, PartialEq)]
pub struct TileSet {
    pub n: usize,
    pub c: usize,
    /// Tile grid rows.
    pub ph: usize,
    /// Tile grid columns.
    pub pw: usize,
    pub m: usize,
    pub alpha: usize,
    pub tiles: Vec<f32>,
}

impl TileSet {
    /// Tiles per image.
    pub fn p(&self) -> usize {
        self.ph * self.pw
    }

    pub fn tile_size(&self) -> usize {
        self.alpha
    }

    #[inline]
    pub fn index(&self, image: usize, tile: usize, row: usize, col: usize, ch: usize) -> usize {
        (((image * self.p() + tile) * self.alpha + row) * self.alpha + col) * self.c + ch
    }

    #[inline]
    pub fn get(&self, image: usize, tile: usize, row: usize, col: usize, ch: usize) -> f32 {
        self.tiles[self.index(image, tile, row, col, ch)]
    }

    /// One tile channel as a row-major `alpha x alpha` block.
    pub fn tile_channel_into(&self, image: usize, tile: usize, ch: usize, out: &mut [f32]) {
        let a = self.alpha;
        for row in 0..a {
            for col in 0..a {
                out[row * a + col] = self.get(image, tile, row, col, ch);
            }
        }
    }
}

/// Splits `x` into overlapping `(m + r - 1)`-sided tiles with stride `m`.
///
/// Tile `(ti, tj)` starts at input row `ti * m - pad` and column `tj * m - pad`;
/// pixels outside the image read as zero.
pub fn extract_tiles(x: &Tensor4, m: usize, r: usize, pad: usize) -> Result<TileSet> {
    if m != 2 || r != 3 {
        return invalid(format!("only F(2x2,3x3) tiling is supported, got m={m} r={r}"));
    }
    if pad > 1 {
        return invalid(format!("pad must be 0 or 1, got {pad}"));
    }
    let (n, h, w, c) = x.dims();
    let (out_h, out_w) = match (output_extent(h, r, pad), output_extent(w, r, pad)) {
        (Some(oh), Some(ow)) => (oh, ow),
        _ => {
            return invalid(format!(
                "input {h}x{w} with pad {pad} is smaller than the {r}x{r} filter"
            ))
        }
    };
    let ph = out_h.div_ceil(m);
    let pw = out_w.div_ceil(m);
    let alpha = m + r - 1;
    let mut tiles = Vec::with_capacity(n * ph * pw * alpha * alpha * c);
    for ni in 0..n {
        for ti in 0..ph {
            for tj in 0..pw {
                let row0 = (ti * m) as isize - pad as isize;
                let col0 = (tj * m) as isize - pad as isize;
                for a in 0..alpha as isize {
                    for b in 0..alpha as isize {
                        for ci in 0..c {
                            tiles.push(x.get_padded(ni, row0 + a, col0 + b, ci));
                        }
                    }
                }
            }
        }
    }
    Ok(TileSet {
        n,
        c,
        ph,
        pw,
        m,
        alpha,
        tiles,
    })
}

/// Per-tile `m x m` outputs indexed `[image, tile, row, col, filter]`.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputTiles {
    pub n: usize,
    pub k: usize,
    pub ph: usize,
    pub pw: usize,
    pub m: usize,
    pub data: Vec<f32>,
}

impl OutputTiles {
    pub fn zeros(n: usize, k: usize, ph: usize, pw: usize, m: usize) -> Self {
        Self {
            n,
            k,
            ph,
            pw,
            m,
            data: vec![0.0; n * ph * pw * m * m * k],
        }
    }

    pub fn p(&self) -> usize {
        self.ph * self.pw
    }

    /// Elements per `(image, tile)` pair.
    pub fn tile_stride(&self) -> usize {
        self.m * self.m * self.k
    }

    #[inline]
    pub fn index(&self, image: usize, tile: usize, row: usize, col: usize, k: usize) -> usize {
        (((image * self.p() + tile) * self.m + row) * self.m + col) * self.k + k
    }
}

/// Places tile `(ti, tj)` element `(a, b)` at output `(ti*m + a, tj*m + b)`,
/// dropping the overhang of ragged border tiles.
pub fn merge_tiles(s: &OutputTiles, out_h: usize, out_w: usize) -> Result<Tensor4> {
    if s.m == 0 || out_h == 0 || out_w == 0 {
        return invalid("merge_tiles: zero-sized tile or output");
    }
    if s.ph != out_h.div_ceil(s.m) || s.pw != out_w.div_ceil(s.m) {
        return invalid(format!(
            "tile grid {}x{} (m={}) does not cover output {out_h}x{out_w}",
            s.ph, s.pw, s.m
        ));
    }
    if s.data.len() != s.n * s.p() * s.tile_stride() {
        return invalid("merge_tiles: tile buffer length does not match its grid");
    }
    let mut y = Tensor4::zeros(s.n, out_h, out_w, s.k)?;
    for ni in 0..s.n {
        for ti in 0..s.ph {
            for tj in 0..s.pw {
                let tile = ti * s.pw + tj;
                for a in 0..s.m {
                    let oy = ti * s.m + a;
                    if oy >= out_h {
                        continue;
                    }
                    for b in 0..s.m {
                        let ox = tj * s.m + b;
                        if ox >= out_w {
                            continue;
                        }
                        let src = s.index(ni, tile, a, b, 0);
                        let dst = y.index(ni, oy, ox, 0);
                        y.data[dst..dst + s.k].copy_from_slice(&s.data[src..src + s.k]);
                    }
                }
            }
        }
    }
    Ok(y)
}

pub const MAGIC: &[u8; 4] = b"LTEN";
pub const FORMAT_VERSION: u16 = 1;
pub const DTYPE_F32: u8 = 0;
/// magic + version + dtype + four u64 dims
pub const HEADER_LEN: usize = 4 + 2 + 1 + 4 * 8;

pub fn write_tensor<W: Write>(t: &Tensor4, mut sink: W) -> Result<()> {
    let mut header = Vec::with_capacity(HEADER_LEN);
    header.extend_from_slice(MAGIC);
    header.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    header.push(DTYPE_F32);
    for d in [t.n, t.h, t.w, t.c] {
        header.extend_from_slice(&(d as u64).to_le_bytes());
    }
    sink.write_all(&header)?;
    let mut payload = Vec::with_capacity(t.data.len() * 4);
    for v in &t.data {
        payload.extend_from_slice(&v.to_bits().to_le_bytes());
    }
    sink.write_all(&payload)?;
    sink.flush()?;
    Ok(())
}

pub fn read_tensor<R: Read>(mut source: R) -> Result<Tensor4> {
    let mut header = [0u8; HEADER_LEN];
    source.read_exact(&mut header).map_err(truncated("header"))?;
    if &header[0..4] != MAGIC {
        return Err(Error::Format(format!("bad magic {:?}", &header[0..4])));
    }
    let version = u16::from_le_bytes([header[4], header[5]]);
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    if header[6] != DTYPE_F32 {
        return Err(Error::Format(format!("unsupported dtype code {}", header[6])));
    }
    let mut dims = [0usize; 4];
    for (i, d) in dims.iter_mut().enumerate() {
        let off = 7 + i * 8;
        let raw = u64::from_le_bytes(header[off..off + 8].try_into().unwrap());
        *d = usize::try_from(raw).map_err(|_| Error::Format(format!("dim {raw} overflows")))?;
        if *d == 0 {
            return Err(Error::Format("zero-sized dimension".into()));
        }
    }
    let bytes = checked_len(&dims)
        .and_then(|len| len.checked_mul(4))
        .ok_or_else(|| Error::Format(format!("dims {dims:?} overflow")))?;
    let mut payload = Vec::new();
    source.take(bytes as u64).read_to_end(&mut payload)?;
    if payload.len() != bytes {
        return Err(Error::Format(format!(
            "truncated payload: expected {bytes} bytes, got {}",
            payload.len()
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|b| f32::from_bits(u32::from_le_bytes([b[0], b[1], b[2], b[3]])))
        .collect();
    let [n, h, w, c] = dims;
    Ok(Tensor4 { n, h, w, c, data })
}

fn truncated(what: &'static str) -> impl Fn(io::Error) -> Error {
    move |e| {
        if e.kind() == io::ErrorKind::UnexpectedEof {
            Error::Format(format!("truncated {what}"))
        } else {
            Error::Io(e)
        }
    }
}

pub fn save_tensor(t: &Tensor4, path: &Path) -> Result<()> {
    let file = fs::File::create(path)?;
    write_tensor(t, io::BufWriter::new(file))
}

/// Loads a whole file; trailing bytes after the payload are a format error.
pub fn load_tensor(path: &Path) -> Result<Tensor4> {
    let bytes = fs::read(path)?;
    let mut cursor = io::Cursor::new(&bytes);
    let t = read_tensor(&mut cursor)?;
    if cursor.position() as usize != bytes.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after payload",
            bytes.len() - cursor.position() as usize
        )));
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(h: usize, w: usize) -> Tensor4 {
        Tensor4::from_fn(1, h, w, 1, |_, i, j, _| (w * i + j) as f32).unwrap()
    }

    #[test]
    fn rejects_bad_dims() {
        assert!(Tensor4::new(1, 2, 2, 1, vec![0.0; 3]).is_err());
        assert!(Tensor4::new(0, 2, 2, 1, vec![]).is_err());
        assert!(FilterBank::new(1, 3, 3, 2, vec![0.0; 17]).is_err());
    }

    #[test]
    fn single_tile_is_the_image() {
        let x = ramp(4, 4);
        let t = extract_tiles(&x, 2, 3, 0).unwrap();
        assert_eq!((t.ph, t.pw, t.tile_size()), (1, 1, 4));
        assert_eq!(t.tiles, x.data());
    }

    #[test]
    fn zero_input_padded_gives_four_zero_tiles() {
        let x = Tensor4::zeros(1, 4, 4, 1).unwrap();
        let t = extract_tiles(&x, 2, 3, 1).unwrap();
        assert_eq!((t.ph, t.pw), (2, 2));
        assert_eq!(t.tiles.len(), 4 * 16);
        assert!(t.tiles.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn tile_offsets_follow_stride() {
        let x = ramp(6, 6);
        let t = extract_tiles(&x, 2, 3, 0).unwrap();
        assert_eq!((t.ph, t.pw), (2, 2));
        // scalar oracle: tile (ti,tj) row a col b = x[2ti+a][2tj+b]
        for ti in 0..2 {
            for tj in 0..2 {
                for a in 0..4 {
                    for b in 0..4 {
                        let want = (6 * (2 * ti + a) + 2 * tj + b) as f32;
                        assert_eq!(t.get(0, ti * 2 + tj, a, b, 0), want);
                    }
                }
            }
        }
        let row0: Vec<f32> = (0..4).map(|b| t.get(0, 1, 0, b, 0)).collect();
        assert_eq!(row0, vec![2.0, 3.0, 4.0, 5.0]);
    }

    #[test]
    fn padded_border_reads_zero() {
        let x = Tensor4::from_fn(1, 3, 3, 2, |_, _, _, _| 1.0).unwrap();
        let t = extract_tiles(&x, 2, 3, 1).unwrap();
        // out 3x3 -> 2x2 grid of tiles
        assert_eq!((t.ph, t.pw), (2, 2));
        for ch in 0..2 {
            assert_eq!(t.get(0, 0, 0, 0, ch), 0.0);
            assert_eq!(t.get(0, 0, 1, 1, ch), 1.0);
            // tile (1,1) starts at input row/col 1; rows 3.. are padding
            assert_eq!(t.get(0, 3, 2, 2, ch), 0.0);
            assert_eq!(t.get(0, 3, 1, 1, ch), 1.0);
        }
    }

    #[test]
    fn extract_rejects_unsupported_geometry() {
        let x = Tensor4::zeros(1, 4, 4, 1).unwrap();
        assert!(extract_tiles(&x, 4, 3, 0).is_err());
        assert!(extract_tiles(&x, 2, 5, 0).is_err());
        assert!(extract_tiles(&x, 2, 3, 2).is_err());
        let tiny = Tensor4::zeros(1, 2, 4, 1).unwrap();
        assert!(extract_tiles(&tiny, 2, 3, 0).is_err());
        assert!(extract_tiles(&tiny, 2, 3, 1).is_ok());
    }

    #[test]
    fn tile_grid_covers_output() {
        for h in 3..=32 {
            for pad in 0..=1 {
                let x = Tensor4::zeros(1, h, h, 1).unwrap();
                let t = extract_tiles(&x, 2, 3, pad).unwrap();
                let out = h + 2 * pad - 2;
                assert_eq!(t.ph, out.div_ceil(2));
                assert!(t.ph * t.pw * 2 * 2 >= out * out);
            }
        }
    }

    #[test]
    fn merge_single_tile() {
        let s = OutputTiles {
            n: 1,
            k: 1,
            ph: 1,
            pw: 1,
            m: 2,
            data: vec![1.0, 2.0, 3.0, 4.0],
        };
        let y = merge_tiles(&s, 2, 2).unwrap();
        assert_eq!(y.data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn merge_zero_tiles() {
        let s = OutputTiles::zeros(1, 1, 2, 2, 2);
        let y = merge_tiles(&s, 4, 4).unwrap();
        assert_eq!(y.dims(), (1, 4, 4, 1));
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn merge_discards_ragged_overhang() {
        let mut s = OutputTiles::zeros(1, 1, 2, 2, 2);
        for (i, v) in s.data.iter_mut().enumerate() {
            *v = i as f32;
        }
        let y = merge_tiles(&s, 3, 3).unwrap();
        // scalar oracle: output (i,j) comes from tile (i/2, j/2) element (i%2, j%2)
        for i in 0..3 {
            for j in 0..3 {
                let tile = (i / 2) * 2 + j / 2;
                let want = (tile * 4 + (i % 2) * 2 + j % 2) as f32;
                assert_eq!(y.get(0, i, j, 0), want);
            }
        }
    }

    #[test]
    fn merge_rejects_inconsistent_grid() {
        let s = OutputTiles::zeros(1, 1, 2, 2, 2);
        assert!(merge_tiles(&s, 2, 2).is_err());
        assert!(merge_tiles(&s, 6, 4).is_err());
        let mut bad = OutputTiles::zeros(1, 1, 1, 1, 2);
        bad.data.pop();
        assert!(merge_tiles(&bad, 2, 2).is_err());
    }

    #[test]
    fn smallest_file_size() {
        let t = Tensor4::new(1, 1, 1, 1, vec![0.0]).unwrap();
        let mut buf = Vec::new();
        write_tensor(&t, &mut buf).unwrap();
        assert_eq!(buf.len(), HEADER_LEN + 4);
        assert_eq!(buf.len(), 43);
        assert_eq!(&buf[0..4], b"LTEN");
        assert_eq!(&buf[4..7], &[1, 0, 0]);
    }

    #[test]
    fn read_rejects_bad_magic() {
        let t = Tensor4::new(1, 1, 1, 1, vec![1.5]).unwrap();
        let mut buf = Vec::new();
        write_tensor(&t, &mut buf).unwrap();
        buf[0..4].copy_from_slice(b"XXXX");
        assert!(matches!(read_tensor(&buf[..]), Err(Error::Format(_))));
    }

    #[test]
    fn read_rejects_truncation_and_overflow() {
        let t = Tensor4::new(1, 2, 2, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let mut buf = Vec::new();
        write_tensor(&t, &mut buf).unwrap();
        assert!(matches!(read_tensor(&buf[..buf.len() - 1]), Err(Error::Format(_))));
        assert!(matches!(read_tensor(&buf[..10]), Err(Error::Format(_))));

        let mut huge = buf.clone();
        for i in 0..4 {
            let off = 7 + i * 8;
            huge[off..off + 8].copy_from_slice(&u64::MAX.to_le_bytes());
        }
        assert!(matches!(read_tensor(&huge[..]), Err(Error::Format(_))));

        let mut zero = buf;
        zero[7..15].copy_from_slice(&0u64.to_le_bytes());
        assert!(matches!(read_tensor(&zero[..]), Err(Error::Format(_))));
    }
}
