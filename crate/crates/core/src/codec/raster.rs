//! One token per raster cell, row-major.

use super::vocab::{is_image, IMAGE_BASE};
use super::CodecError;
use crate::toyworld::render::{is_declared_code, Raster, View, RASTER_CELLS};

pub fn tokenize_raster(r: &Raster) -> Vec<u32> {
    r.cells.iter().map(|&c| IMAGE_BASE + c as u32).collect()
}

pub fn detokenize_raster(ids: &[u32], view: View) -> Result<Raster, CodecError> {
    if ids.len() != RASTER_CELLS {
        return Err(CodecError::RasterLength(ids.len()));
    }
    let mut cells = [0u8; RASTER_CELLS];
    for (position, (&t, cell)) in ids.iter().zip(cells.iter_mut()).enumerate() {
        if !is_image(t) {
            return Err(CodecError::NotImage { position });
        }
        let code = (t - IMAGE_BASE) as u8;
        if !is_declared_code(code) {
            return Err(CodecError::UndeclaredPalette { position, code });
        }
        *cell = code;
    }
    Ok(Raster { view, cells })
}
